//! `cooccur` command line: ingest → recognize → build → rank → evaluate.
//!
//! Every subcommand writes its artifacts under `--out`. Settings may also come
//! from a flat `key = value` file given with `--config`; flags win.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::corpus::{
    augmentation_plan, clean, parse_annotations_with_report, stratified_split, write_aug_plan,
    write_corpus_tsv, AnnotationFormat, Corpus, IdentityId, LabelSource, PhotoId,
};
use crate::error::{Error, Result};
use crate::evalstats::{
    community_stats, enumerate_communities, evaluate_targets, threshold_sweep,
    write_communities_csv, write_density_csv, write_eval_detail_csv, write_histogram_csv,
    write_per_target_csv, write_sweep_csv, SummaryStats,
};
use crate::netbuild::{build_network, BuildParams, CommunityGraph};
use crate::ranking::{relationship_strengths, write_idf_tsv, write_scores_tsv, LogBase, Ranking};
use crate::recognition::{recognize, RecognizerConfig, RecognizerMode};
use crate::synthgen::{generate, write_planted_tsv, SynthParams};

#[derive(Debug, Parser)]
#[command(
    name = "cooccur",
    version,
    about = "Target-centered community networks from face co-occurrence"
)]
struct Cli {
    /// Flat key=value settings file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(flatten)]
    common: Common,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Default, Args)]
struct Common {
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    /// generic_tsv or pipa_index
    #[arg(long, global = true)]
    format: Option<String>,
    /// oracle, file or noise
    #[arg(long, global = true)]
    recognizer: Option<String>,
    #[arg(long, global = true)]
    predictions: Option<PathBuf>,
    #[arg(long, global = true)]
    noise_accuracy: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    threshold: Option<u32>,
    #[arg(long, global = true)]
    max_layers: Option<u32>,
    #[arg(long, global = true)]
    log_base: Option<f64>,
    /// Comma-separated subset of json, dot, csv
    #[arg(long, global = true)]
    export: Option<String>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse, optionally clean and split, and write the canonical corpus.
    Ingest {
        #[arg(long)]
        clean: bool,
        /// Stratified train fraction, e.g. 0.8
        #[arg(long)]
        split_frac: Option<f64>,
        #[arg(long, default_value_t = 8)]
        min_per_class: usize,
    },
    /// Grow and export the community of one target.
    Build {
        #[arg(long)]
        target: Option<String>,
        /// `photo_id#face_index`, resolved through the recognizer
        #[arg(long)]
        target_face: Option<String>,
    },
    /// Export photo scores and identity IDF values.
    Rank,
    /// Precision and recall of predicted networks at one threshold.
    Eval {
        /// Comma-separated targets; defaults to every labeled identity.
        #[arg(long)]
        targets: Option<String>,
    },
    /// Precision and recall across minimum-frequency thresholds.
    Sweep {
        /// `0,1,2` or `0..5`
        #[arg(long, default_value = "0..5")]
        thresholds: String,
        #[arg(long)]
        targets: Option<String>,
    },
    /// Community size histogram and density tables.
    Stats,
    /// Generate a synthetic corpus with planted communities.
    Synth {
        #[arg(long, default_value_t = 10)]
        communities: usize,
        #[arg(long, default_value = "4..8")]
        sizes: String,
        #[arg(long, default_value = "5..15")]
        photos_per_community: String,
        #[arg(long, default_value = "2..4")]
        persons_per_photo: String,
        #[arg(long, default_value_t = 0.1)]
        solo_rate: f64,
    },
}

/// Runs the CLI and returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 64 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut common = cli.common;
    if let Some(path) = &cli.config {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        common.fill_from(&parse_config(&text)?)?;
    }
    let out = common.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    match cli.command {
        Command::Ingest {
            clean: do_clean,
            split_frac,
            min_per_class,
        } => cmd_ingest(&common, &out, do_clean, split_frac, min_per_class),
        Command::Build {
            target,
            target_face,
        } => cmd_build(&common, &out, target, target_face),
        Command::Rank => cmd_rank(&common, &out),
        Command::Eval { targets } => cmd_eval(&common, &out, targets),
        Command::Sweep {
            thresholds,
            targets,
        } => cmd_sweep(&common, &out, &thresholds, targets),
        Command::Stats => cmd_stats(&common, &out),
        Command::Synth {
            communities,
            sizes,
            photos_per_community,
            persons_per_photo,
            solo_rate,
        } => {
            let params = SynthParams {
                n_communities: communities,
                sizes: parse_range(&sizes)?,
                photos_per_community: parse_range(&photos_per_community)?,
                persons_per_photo: parse_range(&persons_per_photo)?,
                solo_photo_rate: solo_rate,
                seed: common.seed.unwrap_or(0),
            };
            cmd_synth(&params, &out)
        }
    }
}

/// Parses `key = value` lines; `#` starts a comment line.
fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("config line {}: expected key = value", n + 1)))?;
        map.insert(k.trim().replace('_', "-"), v.trim().to_string());
    }
    Ok(map)
}

impl Common {
    fn fill_from(&mut self, map: &BTreeMap<String, String>) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Usage(format!("config key {key}: bad value {v:?}")))
        }
        for (k, v) in map {
            match k.as_str() {
                "corpus" => fill(&mut self.corpus, PathBuf::from(v)),
                "format" => fill(&mut self.format, v.clone()),
                "recognizer" => fill(&mut self.recognizer, v.clone()),
                "predictions" => fill(&mut self.predictions, PathBuf::from(v)),
                "noise-accuracy" => fill(&mut self.noise_accuracy, num(k, v)?),
                "seed" => fill(&mut self.seed, num(k, v)?),
                "threshold" => fill(&mut self.threshold, num(k, v)?),
                "max-layers" => fill(&mut self.max_layers, num(k, v)?),
                "log-base" => fill(&mut self.log_base, num(k, v)?),
                "export" => fill(&mut self.export, v.clone()),
                "out" => fill(&mut self.out, PathBuf::from(v)),
                other => return Err(Error::Usage(format!("unknown config key {other:?}"))),
            }
        }
        Ok(())
    }

    fn load_corpus(&self) -> Result<Corpus> {
        let path = self
            .corpus
            .as_ref()
            .ok_or_else(|| Error::Usage("--corpus is required".into()))?;
        let format: AnnotationFormat = self.format.as_deref().unwrap_or("generic_tsv").parse()?;
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let (corpus, report) = parse_annotations_with_report(BufReader::new(file), format)?;
        log::info!(
            "read {} face(s) from {} row(s) of {}",
            corpus.len(),
            report.rows,
            path.display()
        );
        Ok(corpus)
    }

    fn recognizer(&self) -> Result<RecognizerConfig> {
        let mode = match self.recognizer.as_deref().unwrap_or("oracle") {
            "oracle" => RecognizerMode::Oracle,
            "file" => {
                RecognizerMode::PredictionsFile(self.predictions.clone().ok_or_else(|| {
                    Error::Usage("--recognizer file requires --predictions".into())
                })?)
            }
            "noise" => RecognizerMode::Noise {
                accuracy: self.noise_accuracy.ok_or_else(|| {
                    Error::Usage("--recognizer noise requires --noise-accuracy".into())
                })?,
            },
            other => {
                return Err(Error::Usage(format!(
                    "unknown recognizer {other:?} (expected oracle, file or noise)"
                )))
            }
        };
        if self.predictions.is_some() && !matches!(mode, RecognizerMode::PredictionsFile(_)) {
            return Err(Error::Usage("--predictions needs --recognizer file".into()));
        }
        if self.noise_accuracy.is_some() && !matches!(mode, RecognizerMode::Noise { .. }) {
            return Err(Error::Usage(
                "--noise-accuracy needs --recognizer noise".into(),
            ));
        }
        let config = RecognizerConfig {
            mode,
            seed: self.seed.unwrap_or(0),
        };
        config.validate()?;
        Ok(config)
    }

    fn log_base(&self) -> Result<LogBase> {
        self.log_base.map_or(Ok(LogBase::default()), LogBase::new)
    }

    fn exports(&self) -> Result<Vec<String>> {
        let raw = self.export.as_deref().unwrap_or("json");
        raw.split(',')
            .map(|s| s.trim().to_string())
            .map(|s| match s.as_str() {
                "json" | "dot" | "csv" => Ok(s),
                other => Err(Error::Usage(format!("unknown export format {other:?}"))),
            })
            .collect()
    }
}

fn fill<T>(slot: &mut Option<T>, value: T) {
    if slot.is_none() {
        *slot = Some(value);
    }
}

/// `a..b`, `a..=b` (both inclusive) or a single value.
fn parse_range(s: &str) -> Result<RangeInclusive<usize>> {
    let bad = || Error::Usage(format!("bad range {s:?}"));
    let num = |v: &str| v.trim().parse::<usize>().map_err(|_| bad());
    match s.split_once("..") {
        Some((a, b)) => Ok(num(a)?..=num(b.trim_start_matches('='))?),
        None => {
            let v = num(s)?;
            Ok(v..=v)
        }
    }
}

fn parse_thresholds(s: &str) -> Result<Vec<u32>> {
    if s.contains("..") {
        let r = parse_range(s)?;
        return Ok((*r.start() as u32..=*r.end() as u32).collect());
    }
    s.split(',')
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| Error::Usage(format!("bad threshold {v:?}")))
        })
        .collect()
}

fn parse_targets(raw: Option<String>, corpus: &Corpus) -> Result<Vec<IdentityId>> {
    match raw {
        Some(list) => list.split(',').map(|t| IdentityId::new(t.trim())).collect(),
        None => Ok(corpus
            .index(LabelSource::True)
            .identities()
            .cloned()
            .collect()),
    }
}

fn write_artifact<F>(dir: &Path, name: &str, body: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(&path, e))
}

fn cmd_ingest(
    common: &Common,
    out: &Path,
    do_clean: bool,
    split_frac: Option<f64>,
    min_per_class: usize,
) -> Result<()> {
    let mut corpus = common.load_corpus()?;
    if do_clean {
        corpus = clean(&corpus);
    }
    write_artifact(out, "corpus.tsv", |w| write_corpus_tsv(&corpus, w))?;
    let identities = corpus.index(LabelSource::True).by_identity.len();
    println!(
        "{} faces, {} photos, {identities} identities",
        corpus.len(),
        corpus.photos().len()
    );
    if let Some(frac) = split_frac {
        let (train, test) = stratified_split(&corpus, frac, common.seed.unwrap_or(0))?;
        let plan = augmentation_plan(&train, min_per_class)?;
        write_artifact(out, "train.tsv", |w| write_corpus_tsv(&train, w))?;
        write_artifact(out, "test.tsv", |w| write_corpus_tsv(&test, w))?;
        write_artifact(out, "augmentation.tsv", |w| write_aug_plan(&plan, w))?;
        println!(
            "train {} ({} augmented), test {}",
            train.len(),
            plan.total_augmented,
            test.len()
        );
    }
    Ok(())
}

fn resolve_target(
    recognized: &Corpus,
    target: Option<String>,
    target_face: Option<String>,
) -> Result<IdentityId> {
    match (target, target_face) {
        (Some(t), None) => IdentityId::new(t),
        (None, Some(face)) => {
            let (photo, idx) = face.rsplit_once('#').ok_or_else(|| {
                Error::Usage(format!("--target-face {face:?} is not photo#index"))
            })?;
            let photo: PhotoId = photo.parse()?;
            let idx: u32 = idx
                .parse()
                .map_err(|_| Error::Usage(format!("bad face index in {face:?}")))?;
            let f = recognized
                .face(&photo, idx)
                .ok_or_else(|| Error::Consistency(format!("no face {face} in corpus")))?;
            f.predicted_identity
                .clone()
                .ok_or_else(|| Error::Consistency(format!("face {face} has no prediction")))
        }
        _ => Err(Error::Usage(
            "give exactly one of --target or --target-face".into(),
        )),
    }
}

fn cmd_build(
    common: &Common,
    out: &Path,
    target: Option<String>,
    target_face: Option<String>,
) -> Result<()> {
    let exports = common.exports()?;
    let corpus = common.load_corpus()?;
    let recognized = recognize(&corpus, &common.recognizer()?)?;
    let target = resolve_target(&recognized, target, target_face)?;
    let params = BuildParams {
        threshold: common.threshold.unwrap_or(0),
        max_layers: common.max_layers,
        label_source: LabelSource::Predicted,
    };
    let graph = build_network(&recognized, &target, &params)?;
    let graph = weight(&recognized, &graph, common.log_base()?)?;
    for format in &exports {
        match format.as_str() {
            "json" => write_artifact(out, "graph.json", |w| {
                graph
                    .write_json(&mut *w)
                    .map_err(|e| std::io::Error::other(e.to_string()))?;
                writeln!(w)
            })?,
            "dot" => write_artifact(out, "graph.dot", |w| graph.write_dot(w))?,
            _ => write_artifact(out, "edges.csv", |w| write_edges_csv(&graph, w))?,
        }
    }
    println!(
        "{}: {} members, {} edges, {} layer(s)",
        target,
        graph.node_count(),
        graph.edge_count(),
        graph.depth()
    );
    Ok(())
}

fn weight(corpus: &Corpus, graph: &CommunityGraph, base: LogBase) -> Result<CommunityGraph> {
    if graph.edge_count() == 0 {
        return Ok(graph.clone());
    }
    let ranking = Ranking::compute(corpus, LabelSource::Predicted, base)?;
    relationship_strengths(graph, &ranking.scores)
}

fn write_edges_csv<W: Write>(graph: &CommunityGraph, mut w: W) -> std::io::Result<()> {
    writeln!(w, "a,b,frequency,strength")?;
    for e in graph.edges() {
        let s = e.strength.map_or_else(String::new, |s| format!("{s:.6}"));
        writeln!(w, "{},{},{},{s}", e.a, e.b, e.frequency)?;
    }
    Ok(())
}

fn cmd_rank(common: &Common, out: &Path) -> Result<()> {
    let corpus = common.load_corpus()?;
    let recognized = recognize(&corpus, &common.recognizer()?)?;
    let ranking = Ranking::compute(&recognized, LabelSource::Predicted, common.log_base()?)?;
    write_artifact(out, "photo_scores.tsv", |w| {
        write_scores_tsv(&ranking.scores, w)
    })?;
    write_artifact(out, "idf.tsv", |w| write_idf_tsv(&ranking.idf, w))?;
    let idf = SummaryStats::of(ranking.idf.idf.values().copied());
    let score = SummaryStats::of(ranking.scores.scores.values().copied());
    write_artifact(out, "ranking_summary.csv", |w| {
        writeln!(w, "table,count,min,max,avg")?;
        for (name, s) in [("idf", idf), ("photo_score", score)] {
            if let Some(s) = s {
                writeln!(
                    w,
                    "{name},{},{:.6},{:.6},{:.6}",
                    s.count, s.min, s.max, s.mean
                )?;
            }
        }
        Ok(())
    })?;
    println!(
        "{} group photos, {} identities ranked",
        ranking.group.len(),
        ranking.idf.idf.len()
    );
    Ok(())
}

fn cmd_eval(common: &Common, out: &Path, targets: Option<String>) -> Result<()> {
    let corpus = common.load_corpus()?;
    let targets = parse_targets(targets, &corpus)?;
    if targets.is_empty() {
        return Err(Error::Usage("no targets to evaluate".into()));
    }
    let recognized = recognize(&corpus, &common.recognizer()?)?;
    let summary = evaluate_targets(
        &recognized,
        &targets,
        common.threshold.unwrap_or(0),
        common.max_layers,
    )?;
    let fmt = |r: Option<f64>| r.map_or_else(|| "nan".into(), |v| format!("{v:.4}"));
    write_artifact(out, "eval.csv", |w| {
        writeln!(w, "threshold,precision,recall")?;
        writeln!(
            w,
            "{},{},{}",
            summary.threshold,
            fmt(summary.precision()),
            fmt(summary.recall())
        )
    })?;
    write_artifact(out, "eval_detail.csv", |w| {
        write_eval_detail_csv(std::slice::from_ref(&summary), w)
    })?;
    write_artifact(out, "eval_targets.csv", |w| {
        write_per_target_csv(&summary, w)
    })?;
    println!(
        "precision {} recall {} over {} target(s)",
        fmt(summary.precision()),
        fmt(summary.recall()),
        targets.len()
    );
    Ok(())
}

fn cmd_sweep(common: &Common, out: &Path, thresholds: &str, targets: Option<String>) -> Result<()> {
    let thresholds = parse_thresholds(thresholds)?;
    let corpus = common.load_corpus()?;
    let targets = parse_targets(targets, &corpus)?;
    let sweep = threshold_sweep(&corpus, &common.recognizer()?, &thresholds, &targets)?;
    write_artifact(out, "sweep.csv", |w| write_sweep_csv(&sweep, w))?;
    write_artifact(out, "sweep_detail.csv", |w| {
        write_eval_detail_csv(&sweep.points, w)
    })?;
    println!("{} threshold(s) evaluated", sweep.points.len());
    Ok(())
}

fn cmd_stats(common: &Common, out: &Path) -> Result<()> {
    let corpus = common.load_corpus()?;
    let recognized = recognize(&corpus, &common.recognizer()?)?;
    let params = BuildParams {
        threshold: common.threshold.unwrap_or(0),
        max_layers: common.max_layers,
        label_source: LabelSource::Predicted,
    };
    let targets: Vec<IdentityId> = recognized
        .index(LabelSource::Predicted)
        .identities()
        .cloned()
        .collect();
    let communities = enumerate_communities(&recognized, &params, &targets)?;
    let stats = community_stats(&communities);
    write_artifact(out, "size_histogram.csv", |w| {
        write_histogram_csv(&stats, w)
    })?;
    write_artifact(out, "density_by_size.csv", |w| write_density_csv(&stats, w))?;
    write_artifact(out, "communities.csv", |w| write_communities_csv(&stats, w))?;
    write_artifact(out, "stats_summary.csv", |w| {
        writeln!(w, "table,count,min,max,avg")?;
        for (name, s) in [
            ("size", stats.size_summary()),
            ("density", stats.density_summary()),
        ] {
            if let Some(s) = s {
                writeln!(
                    w,
                    "{name},{},{:.4},{:.4},{:.4}",
                    s.count, s.min, s.max, s.mean
                )?;
            }
        }
        Ok(())
    })?;
    println!("{} distinct communities", communities.len());
    Ok(())
}

fn cmd_synth(params: &SynthParams, out: &Path) -> Result<()> {
    let synth = generate(params)?;
    write_artifact(out, "corpus.tsv", |w| write_corpus_tsv(&synth.corpus, w))?;
    write_artifact(out, "planted.tsv", |w| write_planted_tsv(&synth.planted, w))?;
    println!(
        "{} faces, {} identities in {} communities",
        synth.corpus.len(),
        synth.planted.len(),
        params.n_communities
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_and_thresholds() {
        assert_eq!(parse_range("4..8").unwrap(), 4..=8);
        assert_eq!(parse_range("4..=8").unwrap(), 4..=8);
        assert_eq!(parse_range("3").unwrap(), 3..=3);
        assert!(parse_range("x..2").is_err());
        assert_eq!(parse_thresholds("0..5").unwrap(), vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(parse_thresholds("0, 2,4").unwrap(), vec![0, 2, 4]);
    }

    #[test]
    fn config_file_fills_only_missing_flags() {
        let map = parse_config("# settings\ncorpus = a.tsv\nthreshold=3\nnoise_accuracy = 0.9\n")
            .unwrap();
        let mut common = Common {
            threshold: Some(1),
            ..Default::default()
        };
        common.fill_from(&map).unwrap();
        assert_eq!(common.corpus, Some(PathBuf::from("a.tsv")));
        assert_eq!(common.threshold, Some(1));
        assert_eq!(common.noise_accuracy, Some(0.9));
        assert!(parse_config("nonsense").is_err());
        assert!(Common::default()
            .fill_from(&BTreeMap::from([("bogus".to_string(), "1".to_string())]))
            .is_err());
    }

    #[test]
    fn recognizer_flag_combinations() {
        let c = Common {
            recognizer: Some("file".into()),
            ..Default::default()
        };
        assert!(matches!(c.recognizer(), Err(Error::Usage(_))));
        let c = Common {
            noise_accuracy: Some(0.5),
            ..Default::default()
        };
        assert!(matches!(c.recognizer(), Err(Error::Usage(_))));
        let c = Common {
            recognizer: Some("noise".into()),
            noise_accuracy: Some(1.5),
            ..Default::default()
        };
        assert!(matches!(c.recognizer(), Err(Error::Params(_))));
    }
}
