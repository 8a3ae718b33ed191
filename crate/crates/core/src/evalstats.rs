//! Evaluation of predicted networks against ground truth, threshold sweeps,
//! community enumeration, and size/density statistics.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use crate::corpus::{Corpus, IdentityId, LabelSource};
use crate::error::{Error, Result};
use crate::netbuild::{build_network, build_network_or_isolated, BuildParams, CommunityGraph};
use crate::recognition::{recognize, RecognizerConfig};

/// Membership confusion counts of one or more predicted networks. The root is
/// an input, never a prediction, so it is excluded from every count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EvalReport {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl EvalReport {
    pub fn precision(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn merge(self, other: EvalReport) -> EvalReport {
        EvalReport {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            fn_: self.fn_ + other.fn_,
        }
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn evaluate_network(predicted: &CommunityGraph, truth: &CommunityGraph) -> Result<EvalReport> {
    if predicted.root() != truth.root() {
        return Err(Error::Comparison(format!(
            "predicted root {} differs from truth root {}",
            predicted.root(),
            truth.root()
        )));
    }
    let root = truth.root();
    let p: BTreeSet<&IdentityId> = predicted.members().filter(|m| *m != root).collect();
    let t: BTreeSet<&IdentityId> = truth.members().filter(|m| *m != root).collect();
    let tp = p.intersection(&t).count();
    Ok(EvalReport {
        tp,
        fp: p.len() - tp,
        fn_: t.len() - tp,
    })
}

/// Aggregate over many targets at one threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub threshold: u32,
    /// Counts summed over targets; the headline precision/recall.
    pub micro: EvalReport,
    pub per_target: Vec<(IdentityId, EvalReport)>,
}

impl EvalSummary {
    pub fn precision(&self) -> Option<f64> {
        self.micro.precision()
    }

    pub fn recall(&self) -> Option<f64> {
        self.micro.recall()
    }

    /// Mean of per-network precision over networks where it is defined.
    pub fn macro_precision(&self) -> Option<f64> {
        mean(self.per_target.iter().filter_map(|(_, r)| r.precision()))
    }

    pub fn macro_recall(&self) -> Option<f64> {
        mean(self.per_target.iter().filter_map(|(_, r)| r.recall()))
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Compares, for every target, the network grown from true labels with the
/// one grown from predicted labels at the same threshold. `recognized` must
/// already carry predictions. A target the recognizer never predicts gets a
/// root-only predicted network.
pub fn evaluate_targets(
    recognized: &Corpus,
    targets: &[IdentityId],
    threshold: u32,
    max_layers: Option<u32>,
) -> Result<EvalSummary> {
    let truth_params = BuildParams {
        threshold,
        max_layers,
        label_source: LabelSource::True,
    };
    let pred_params = BuildParams {
        label_source: LabelSource::Predicted,
        ..truth_params
    };
    let mut micro = EvalReport::default();
    let mut per_target = Vec::with_capacity(targets.len());
    for target in targets {
        let truth = build_network(recognized, target, &truth_params)?;
        let predicted = build_network_or_isolated(recognized, target, &pred_params)?;
        let report = evaluate_network(&predicted, &truth)?;
        micro = micro.merge(report);
        per_target.push((target.clone(), report));
    }
    Ok(EvalSummary {
        threshold,
        micro,
        per_target,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub points: Vec<EvalSummary>,
}

/// Recognizes once, then evaluates every target at each threshold.
pub fn threshold_sweep(
    corpus: &Corpus,
    recognizer: &RecognizerConfig,
    thresholds: &[u32],
    targets: &[IdentityId],
) -> Result<SweepResult> {
    if thresholds.is_empty() || thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Params(
            "thresholds must be non-empty and strictly increasing".into(),
        ));
    }
    if targets.is_empty() {
        return Err(Error::Params("sweep needs at least one target".into()));
    }
    let recognized = recognize(corpus, recognizer)?;
    let points = thresholds
        .iter()
        .map(|&t| evaluate_targets(&recognized, targets, t, None))
        .collect::<Result<_>>()?;
    Ok(SweepResult { points })
}

fn fmt_ratio(r: Option<f64>) -> String {
    r.map_or_else(|| "nan".to_string(), |v| format!("{v:.4}"))
}

/// `threshold,precision,recall` with micro-averaged values.
pub fn write_sweep_csv<W: Write>(sweep: &SweepResult, mut w: W) -> std::io::Result<()> {
    writeln!(w, "threshold,precision,recall")?;
    for p in &sweep.points {
        writeln!(
            w,
            "{},{},{}",
            p.threshold,
            fmt_ratio(p.precision()),
            fmt_ratio(p.recall())
        )?;
    }
    Ok(())
}

/// Counts plus micro and macro averages for each summary.
pub fn write_eval_detail_csv<W: Write>(summaries: &[EvalSummary], mut w: W) -> std::io::Result<()> {
    writeln!(
        w,
        "threshold,tp,fp,fn,precision,recall,macro_precision,macro_recall"
    )?;
    for s in summaries {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            s.threshold,
            s.micro.tp,
            s.micro.fp,
            s.micro.fn_,
            fmt_ratio(s.precision()),
            fmt_ratio(s.recall()),
            fmt_ratio(s.macro_precision()),
            fmt_ratio(s.macro_recall())
        )?;
    }
    Ok(())
}

/// One row per target network.
pub fn write_per_target_csv<W: Write>(summary: &EvalSummary, mut w: W) -> std::io::Result<()> {
    writeln!(w, "target,tp,fp,fn,precision,recall")?;
    for (target, r) in &summary.per_target {
        writeln!(
            w,
            "{target},{},{},{},{},{}",
            r.tp,
            r.fp,
            r.fn_,
            fmt_ratio(r.precision()),
            fmt_ratio(r.recall())
        )?;
    }
    Ok(())
}

/// `(threshold, precision, recall)` as read back from a sweep CSV.
pub type SweepRow = (u32, Option<f64>, Option<f64>);

/// Reads `threshold,precision,recall` rows back; `nan` maps to `None`.
pub fn read_sweep_csv<R: BufRead>(stream: R) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for (n, line) in stream.lines().enumerate() {
        let lineno = n + 1;
        let line = line.map_err(|e| Error::parse(lineno, e.to_string()))?;
        if lineno == 1 || line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 3 {
            return Err(Error::parse(lineno, "expected 3 columns"));
        }
        let t = f[0]
            .parse()
            .map_err(|_| Error::parse(lineno, format!("bad threshold {:?}", f[0])))?;
        let num = |s: &str| -> Result<Option<f64>> {
            if s == "nan" {
                return Ok(None);
            }
            s.parse()
                .map(Some)
                .map_err(|_| Error::parse(lineno, format!("bad ratio {s:?}")))
        };
        rows.push((t, num(f[1])?, num(f[2])?));
    }
    Ok(rows)
}

/// Builds a network per target and keeps one per distinct member set, sorted
/// by size (largest first) then smallest member. Targets unknown under the
/// label source are skipped. For each member set the representative is the
/// network rooted at its smallest target.
pub fn enumerate_communities(
    corpus: &Corpus,
    params: &BuildParams,
    targets: &[IdentityId],
) -> Result<Vec<CommunityGraph>> {
    let ordered: BTreeSet<&IdentityId> = targets.iter().collect();
    let mut seen: BTreeMap<BTreeSet<IdentityId>, CommunityGraph> = BTreeMap::new();
    let mut covered: BTreeSet<IdentityId> = BTreeSet::new();
    for target in ordered {
        // Without a layer cap membership is symmetric, so a covered target's
        // community is already recorded.
        if params.max_layers.is_none() && covered.contains(target) {
            continue;
        }
        let graph = match build_network(corpus, target, params) {
            Ok(g) => g,
            Err(Error::UnknownTarget(_)) => {
                log::warn!("skipping unknown target {target}");
                continue;
            }
            Err(e) => return Err(e),
        };
        let members = graph.member_set();
        covered.extend(members.iter().cloned());
        seen.entry(members).or_insert(graph);
    }
    let mut out: Vec<CommunityGraph> = seen.into_values().collect();
    out.sort_by(|a, b| {
        b.node_count()
            .cmp(&a.node_count())
            .then_with(|| a.members().next().cmp(&b.members().next()))
    });
    Ok(out)
}

/// Actual edges over the maximum possible, `m / (n(n−1)/2)`.
pub fn density(graph: &CommunityGraph) -> Result<f64> {
    let n = graph.node_count();
    if n < 2 {
        return Err(Error::UndefinedDensity(n));
    }
    let max_edges = (n * (n - 1) / 2) as f64;
    Ok(graph.edge_count() as f64 / max_edges)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryStats {
    pub count: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl SummaryStats {
    pub fn of<I: IntoIterator<Item = f64>>(values: I) -> Option<SummaryStats> {
        let mut count = 0usize;
        let (mut min, mut max, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
        for v in values {
            count += 1;
            min = min.min(v);
            max = max.max(v);
            sum += v;
        }
        // Clamp guards the mean against rounding past the extremes.
        (count > 0).then(|| SummaryStats {
            count,
            min,
            max,
            mean: (sum / count as f64).clamp(min, max),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommunityRecord {
    pub root: IdentityId,
    pub members: Vec<IdentityId>,
    pub size: usize,
    pub edges: usize,
    pub density: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CommunityStats {
    pub size_histogram: BTreeMap<usize, usize>,
    pub density_by_size: BTreeMap<usize, f64>,
    pub records: Vec<CommunityRecord>,
}

impl CommunityStats {
    pub fn density_summary(&self) -> Option<SummaryStats> {
        SummaryStats::of(self.records.iter().filter_map(|r| r.density))
    }

    pub fn size_summary(&self) -> Option<SummaryStats> {
        SummaryStats::of(self.records.iter().map(|r| r.size as f64))
    }
}

/// Size histogram and mean density per size. Single-node communities are
/// counted in the histogram but carry no density.
pub fn community_stats(communities: &[CommunityGraph]) -> CommunityStats {
    let mut stats = CommunityStats::default();
    let mut density_sums: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for g in communities {
        let size = g.node_count();
        *stats.size_histogram.entry(size).or_default() += 1;
        let d = density(g).ok();
        if let Some(d) = d {
            let slot = density_sums.entry(size).or_default();
            slot.0 += d;
            slot.1 += 1;
        }
        stats.records.push(CommunityRecord {
            root: g.root().clone(),
            members: g.members().cloned().collect(),
            size,
            edges: g.edge_count(),
            density: d,
        });
    }
    stats.density_by_size = density_sums
        .into_iter()
        .map(|(size, (sum, n))| (size, sum / n as f64))
        .collect();
    stats
}

pub fn write_histogram_csv<W: Write>(stats: &CommunityStats, mut w: W) -> std::io::Result<()> {
    writeln!(w, "size,count")?;
    for (size, count) in &stats.size_histogram {
        writeln!(w, "{size},{count}")?;
    }
    Ok(())
}

pub fn write_density_csv<W: Write>(stats: &CommunityStats, mut w: W) -> std::io::Result<()> {
    writeln!(w, "size,average_density")?;
    for (size, d) in &stats.density_by_size {
        writeln!(w, "{size},{d:.4}")?;
    }
    Ok(())
}

/// One row per community; members are `;`-joined.
pub fn write_communities_csv<W: Write>(stats: &CommunityStats, mut w: W) -> std::io::Result<()> {
    writeln!(w, "root,size,edges,density,members")?;
    for r in &stats.records {
        let members: Vec<&str> = r.members.iter().map(|m| m.as_str()).collect();
        writeln!(
            w,
            "{},{},{},{},{}",
            r.root,
            r.size,
            r.edges,
            fmt_ratio(r.density),
            members.join(";")
        )?;
    }
    Ok(())
}

pub fn read_histogram_csv<R: BufRead>(stream: R) -> Result<BTreeMap<usize, usize>> {
    let mut out = BTreeMap::new();
    for (n, line) in stream.lines().enumerate() {
        let lineno = n + 1;
        let line = line.map_err(|e| Error::parse(lineno, e.to_string()))?;
        if lineno == 1 || line.is_empty() {
            continue;
        }
        let (s, c) = line
            .split_once(',')
            .ok_or_else(|| Error::parse(lineno, "expected size,count"))?;
        let parse = |v: &str| {
            v.parse::<usize>()
                .map_err(|_| Error::parse(lineno, format!("bad integer {v:?}")))
        };
        out.insert(parse(s)?, parse(c)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recognition::RecognizerConfig;
    use std::collections::BTreeMap;

    fn id(s: &str) -> IdentityId {
        IdentityId::new(s).unwrap()
    }

    fn c0() -> Corpus {
        Corpus::from_photo_lists([
            ("p1", vec!["A", "B"]),
            ("p2", vec!["A", "C"]),
            ("p3", vec!["A", "B", "C"]),
            ("p4", vec!["B", "C"]),
            ("p5", vec!["A"]),
            ("p6", vec!["D", "E"]),
        ])
        .unwrap()
    }

    fn star(root: &str, others: &[&str]) -> CommunityGraph {
        let lists: Vec<(String, Vec<&str>)> = others
            .iter()
            .map(|o| (format!("q_{o}"), vec![root, *o]))
            .collect();
        let c = Corpus::from_photo_lists(lists.iter().map(|(p, ids)| (p.as_str(), ids.clone())))
            .unwrap();
        build_network(&c, &id(root), &BuildParams::default()).unwrap()
    }

    #[test]
    fn set_arithmetic() {
        let p = star("R", &["B", "C", "X"]);
        let t = star("R", &["B", "C", "D"]);
        let r = evaluate_network(&p, &t).unwrap();
        assert_eq!((r.tp, r.fp, r.fn_), (2, 1, 1));
        assert!((r.precision().unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.recall().unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let same = evaluate_network(&t, &t).unwrap();
        assert_eq!((same.precision(), same.recall()), (Some(1.0), Some(1.0)));
        let other = star("Q", &["B"]);
        assert!(matches!(
            evaluate_network(&other, &t),
            Err(Error::Comparison(_))
        ));
        let alone = CommunityGraph::isolated(id("R"));
        let r = evaluate_network(&alone, &t).unwrap();
        assert_eq!(r.precision(), None);
        assert_eq!(r.recall(), Some(0.0));
    }

    #[test]
    fn oracle_sweep_is_exact() {
        let targets: Vec<IdentityId> = ["A", "B", "D"].iter().map(|s| id(s)).collect();
        let s = threshold_sweep(&c0(), &RecognizerConfig::oracle(), &[0, 1, 2], &targets).unwrap();
        for p in &s.points {
            assert_eq!(p.micro.fp, 0);
            assert_eq!(p.micro.fn_, 0);
        }
        assert_eq!(s.points[0].precision(), Some(1.0));
        assert!(threshold_sweep(&c0(), &RecognizerConfig::oracle(), &[1, 1], &targets).is_err());
        assert!(threshold_sweep(&c0(), &RecognizerConfig::oracle(), &[0], &[]).is_err());
    }

    #[test]
    fn c0_communities_and_stats() {
        let all: Vec<IdentityId> = ["A", "B", "C", "D", "E"].iter().map(|s| id(s)).collect();
        let comms = enumerate_communities(&c0(), &BuildParams::default(), &all).unwrap();
        let sets: Vec<Vec<&str>> = comms
            .iter()
            .map(|g| g.members().map(|m| m.as_str()).collect())
            .collect();
        assert_eq!(sets, vec![vec!["A", "B", "C"], vec!["D", "E"]]);
        let stats = community_stats(&comms);
        assert_eq!(stats.size_histogram, BTreeMap::from([(2, 1), (3, 1)]));
        assert_eq!(stats.density_by_size, BTreeMap::from([(2, 1.0), (3, 1.0)]));
        assert!(community_stats(&[]).size_histogram.is_empty());

        let one = Corpus::from_photo_lists([("p", vec!["A", "B"])]).unwrap();
        let comms =
            enumerate_communities(&one, &BuildParams::default(), &[id("B"), id("A")]).unwrap();
        assert_eq!(comms.len(), 1);
        assert_eq!(comms[0].root(), &id("A"));
    }

    #[test]
    fn singletons_skip_density() {
        let stats = community_stats(&[CommunityGraph::isolated(id("Z"))]);
        assert_eq!(stats.size_histogram, BTreeMap::from([(1, 1)]));
        assert!(stats.density_by_size.is_empty());
        assert!(matches!(
            density(&CommunityGraph::isolated(id("Z"))),
            Err(Error::UndefinedDensity(1))
        ));
    }

    #[test]
    fn path_density() {
        let c = Corpus::from_photo_lists([("p1", vec!["A", "B"]), ("p2", vec!["B", "C"])]).unwrap();
        let g = build_network(&c, &id("A"), &BuildParams::default()).unwrap();
        assert!((density(&g).unwrap() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn summary_bounds() {
        let s = SummaryStats::of([2.45, 4.35, 3.1]).unwrap();
        assert_eq!((s.min, s.max, s.count), (2.45, 4.35, 3));
        assert!(s.min <= s.mean && s.mean <= s.max);
        assert!(SummaryStats::of(std::iter::empty()).is_none());
    }

    #[test]
    fn csv_round_trips() {
        let targets: Vec<IdentityId> = ["A", "D"].iter().map(|s| id(s)).collect();
        let s = threshold_sweep(&c0(), &RecognizerConfig::oracle(), &[0, 2], &targets).unwrap();
        let mut buf = Vec::new();
        write_sweep_csv(&s, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "threshold,precision,recall\n0,1.0000,1.0000\n2,nan,nan\n"
        );
        let rows = read_sweep_csv(buf.as_slice()).unwrap();
        assert_eq!(rows, vec![(0, Some(1.0), Some(1.0)), (2, None, None)]);

        let all: Vec<IdentityId> = ["A", "D"].iter().map(|s| id(s)).collect();
        let stats =
            community_stats(&enumerate_communities(&c0(), &BuildParams::default(), &all).unwrap());
        let mut buf = Vec::new();
        write_histogram_csv(&stats, &mut buf).unwrap();
        assert_eq!(
            read_histogram_csv(buf.as_slice()).unwrap(),
            stats.size_histogram
        );
    }
}
