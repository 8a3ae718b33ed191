//! Identity prediction sources and the classifier math behind them.
//!
//! Graph construction never looks at pixels; it consumes `predicted_identity`
//! labels attached here by one of three recognizers: the oracle (ground truth),
//! an external predictions file, or a seeded uniform-confusion noise model.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;

use rand::Rng;

use crate::corpus::{Corpus, FaceInstance, IdentityId, PhotoId, Quality};
use crate::error::{Error, Result};
use crate::rng::StreamKey;

/// Tolerance on Σp for vectors built in memory.
pub const PROB_SUM_TOL: f64 = 1e-9;
/// Tolerance on Σp for vectors read from a predictions file.
pub const FILE_PROB_SUM_TOL: f64 = 1e-6;

/// A discrete probability distribution over class indices.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        Self::with_tolerance(values, PROB_SUM_TOL)
    }

    pub fn with_tolerance(values: Vec<f64>, tol: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Domain("probability vector is empty".into()));
        }
        if let Some(bad) = values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Domain(format!("probability {bad} outside [0, 1]")));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > tol {
            return Err(Error::Domain(format!(
                "probabilities sum to {sum}, not 1 (tolerance {tol})"
            )));
        }
        Ok(ProbVector(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Indices holding the maximum probability (more than one on ties).
    pub fn argmax_set(&self) -> Vec<usize> {
        let max = self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (0..self.0.len()).filter(|&i| self.0[i] == max).collect()
    }
}

/// `y_j = exp(x_j) / Σ_i exp(x_i)`, evaluated after subtracting `max x`.
pub fn softmax(logits: &[f64]) -> Result<ProbVector> {
    if logits.is_empty() {
        return Err(Error::Domain("softmax of an empty vector".into()));
    }
    if let Some(bad) = logits.iter().find(|x| !x.is_finite()) {
        return Err(Error::Domain(format!("non-finite logit {bad}")));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    ProbVector::new(exps.into_iter().map(|e| e / total).collect())
}

/// Natural-log cross-entropy `-ln y_actual` of a one-hot target.
pub fn cross_entropy(probs: &ProbVector, actual: usize) -> Result<f64> {
    let Some(&p) = probs.as_slice().get(actual) else {
        return Err(Error::Domain(format!(
            "class index {actual} out of range for {} classes",
            probs.len()
        )));
    };
    if p == 0.0 {
        return Err(Error::InfiniteLoss);
    }
    // -ln(1) is -0.0; normalize the sign.
    Ok((-p.ln()).max(0.0))
}

/// Probability vector with one identity label per entry.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledProbs {
    pub labels: Vec<IdentityId>,
    pub probs: ProbVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub photo: PhotoId,
    pub face_index: u32,
    pub predicted: IdentityId,
    pub probs: Option<LabeledProbs>,
}

impl PredictionRecord {
    fn key(&self) -> String {
        format!("{}#{}", self.photo, self.face_index)
    }
}

/// Parses a predictions TSV: `photo_id\tface_index\tpredicted_identity` followed
/// by optional `label:probability` columns. An optional header row starting
/// with `photo_id` and `#` comment lines are skipped.
pub fn parse_predictions<R: BufRead>(stream: R) -> Result<Vec<PredictionRecord>> {
    let mut out = Vec::new();
    for (n, line) in stream.lines().enumerate() {
        let lineno = n + 1;
        let line = line.map_err(|e| Error::parse(lineno, e.to_string()))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields[0] == "photo_id" {
            continue;
        }
        out.push(prediction_row(&fields).map_err(|e| Error::parse(lineno, e))?);
    }
    Ok(out)
}

fn prediction_row(fields: &[&str]) -> std::result::Result<PredictionRecord, String> {
    if fields.len() < 3 {
        return Err(format!(
            "expected at least 3 columns, found {}",
            fields.len()
        ));
    }
    let photo: PhotoId = fields[0].parse().map_err(|e: Error| e.to_string())?;
    let face_index: u32 = fields[1]
        .parse()
        .map_err(|_| format!("bad face index {:?}", fields[1]))?;
    let predicted = IdentityId::new(fields[2]).map_err(|e| e.to_string())?;
    let probs = if fields.len() > 3 {
        let mut labels = Vec::new();
        let mut values = Vec::new();
        for pair in &fields[3..] {
            let (label, p) = pair
                .rsplit_once(':')
                .ok_or_else(|| format!("probability column {pair:?} is not label:prob"))?;
            labels.push(IdentityId::new(label).map_err(|e| e.to_string())?);
            values.push(
                p.parse::<f64>()
                    .map_err(|_| format!("bad probability {p:?}"))?,
            );
        }
        if labels.iter().collect::<BTreeSet<_>>().len() != labels.len() {
            return Err("repeated label in probability columns".into());
        }
        let probs =
            ProbVector::with_tolerance(values, FILE_PROB_SUM_TOL).map_err(|e| e.to_string())?;
        let winners = probs.argmax_set();
        if !winners.iter().any(|&i| labels[i] == predicted) {
            return Err(format!(
                "predicted label {predicted} is not the most probable class"
            ));
        }
        Some(LabeledProbs { labels, probs })
    } else {
        None
    };
    Ok(PredictionRecord {
        photo,
        face_index,
        predicted,
        probs,
    })
}

pub fn write_predictions<W: Write>(records: &[PredictionRecord], mut w: W) -> std::io::Result<()> {
    writeln!(w, "photo_id\tface_index\tpredicted_identity")?;
    for r in records {
        write!(w, "{}\t{}\t{}", r.photo, r.face_index, r.predicted)?;
        if let Some(lp) = &r.probs {
            for (label, p) in lp.labels.iter().zip(lp.probs.as_slice()) {
                write!(w, "\t{label}:{p}")?;
            }
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Fraction of records whose prediction differs from the face's true label.
pub fn top1_error(predictions: &[PredictionRecord], corpus: &Corpus) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::UndefinedRate("no predictions to score".into()));
    }
    let mut wrong = 0usize;
    for r in predictions {
        let face = corpus
            .face(&r.photo, r.face_index)
            .ok_or_else(|| Error::Consistency(format!("no face {} in corpus", r.key())))?;
        let truth = face
            .true_identity
            .as_ref()
            .ok_or_else(|| Error::Precondition(format!("face {} has no true identity", r.key())))?;
        if *truth != r.predicted {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / predictions.len() as f64)
}

/// Extracts the current predicted labels of a corpus as records.
pub fn predictions_of(corpus: &Corpus) -> Vec<PredictionRecord> {
    corpus
        .instances()
        .iter()
        .filter_map(|f| {
            f.predicted_identity.as_ref().map(|p| PredictionRecord {
                photo: f.photo.clone(),
                face_index: f.face_index,
                predicted: p.clone(),
                probs: None,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum RecognizerMode {
    /// Predicted label = true label.
    Oracle,
    /// Labels read from a predictions TSV.
    PredictionsFile(PathBuf),
    /// Keep the true label with probability `accuracy`, otherwise substitute
    /// a uniformly drawn different identity.
    Noise { accuracy: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecognizerConfig {
    pub mode: RecognizerMode,
    pub seed: u64,
}

impl RecognizerConfig {
    pub fn oracle() -> Self {
        RecognizerConfig {
            mode: RecognizerMode::Oracle,
            seed: 0,
        }
    }

    pub fn noise(accuracy: f64, seed: u64) -> Self {
        RecognizerConfig {
            mode: RecognizerMode::Noise { accuracy },
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.mode {
            RecognizerMode::Noise { accuracy } if !(0.0..=1.0).contains(accuracy) => Err(
                Error::Params(format!("noise accuracy {accuracy} outside [0, 1]")),
            ),
            _ => Ok(()),
        }
    }
}

/// Fills `predicted_identity` on every usable face according to `config`.
///
/// Oracle and noise modes leave unlabeled faces without a prediction. Rejected
/// faces are never recognized, except that a predictions file may still label
/// them explicitly.
pub fn recognize(corpus: &Corpus, config: &RecognizerConfig) -> Result<Corpus> {
    config.validate()?;
    match &config.mode {
        RecognizerMode::Oracle => Ok(relabel(corpus, |f| f.true_identity.clone())),
        RecognizerMode::PredictionsFile(path) => {
            let file = File::open(path).map_err(|e| Error::io(path, e))?;
            let records = parse_predictions(BufReader::new(file))?;
            apply_predictions(corpus, &records)
        }
        RecognizerMode::Noise { accuracy } => {
            let universe: Vec<&IdentityId> = corpus
                .instances()
                .iter()
                .filter_map(|f| f.true_identity.as_ref())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            Ok(relabel(corpus, |f| {
                noisy_label(f, &universe, *accuracy, config.seed)
            }))
        }
    }
}

fn relabel<F>(corpus: &Corpus, mut label: F) -> Corpus
where
    F: FnMut(&FaceInstance) -> Option<IdentityId>,
{
    let faces = corpus
        .instances()
        .iter()
        .map(|f| {
            let mut f = f.clone();
            f.predicted_identity = match f.quality {
                Quality::Usable => label(&f),
                Quality::Rejected => None,
            };
            f
        })
        .collect();
    Corpus::new(faces).expect("relabeling keeps corpus structure")
}

fn noisy_label(
    face: &FaceInstance,
    universe: &[&IdentityId],
    accuracy: f64,
    seed: u64,
) -> Option<IdentityId> {
    let truth = face.true_identity.as_ref()?;
    let mut rng = StreamKey::new(seed, "noise")
        .bytes(face.photo.to_string().as_bytes())
        .int(u64::from(face.face_index))
        .rng();
    let keep: f64 = rng.gen();
    if keep < accuracy || universe.len() < 2 {
        return Some(truth.clone());
    }
    let own = universe
        .binary_search(&truth)
        .expect("true label belongs to the universe");
    let mut pick = rng.gen_range(0..universe.len() - 1);
    if pick >= own {
        pick += 1;
    }
    Some(universe[pick].clone())
}

/// Applies explicit prediction records. Every usable face must be covered and
/// every record must name an existing face exactly once.
pub fn apply_predictions(corpus: &Corpus, records: &[PredictionRecord]) -> Result<Corpus> {
    let mut by_face: BTreeMap<(&PhotoId, u32), &IdentityId> = BTreeMap::new();
    for r in records {
        if corpus.face(&r.photo, r.face_index).is_none() {
            return Err(Error::Consistency(format!(
                "prediction for unknown face {}",
                r.key()
            )));
        }
        if by_face
            .insert((&r.photo, r.face_index), &r.predicted)
            .is_some()
        {
            return Err(Error::Consistency(format!(
                "face {} predicted more than once",
                r.key()
            )));
        }
    }
    let missing: Vec<String> = corpus
        .instances()
        .iter()
        .filter(|f| f.quality == Quality::Usable)
        .filter(|f| !by_face.contains_key(&(&f.photo, f.face_index)))
        .map(FaceInstance::key)
        .collect();
    if !missing.is_empty() {
        return Err(Error::Coverage { missing });
    }
    let faces = corpus
        .instances()
        .iter()
        .map(|f| {
            let mut f = f.clone();
            f.predicted_identity = by_face.get(&(&f.photo, f.face_index)).map(|&id| id.clone());
            f
        })
        .collect();
    Corpus::new(faces)
}
