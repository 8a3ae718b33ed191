//! Photo-annotation corpora: domain types, ingestion, canonical serialization
//! and metadata-level preprocessing (cleaning, stratified split, augmentation
//! planning).

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamKey;

/// Opaque, non-empty identity label.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct IdentityId(String);

impl IdentityId {
    pub fn new(token: impl Into<String>) -> Result<Self> {
        let token = token.into();
        if token.is_empty() {
            return Err(Error::Domain("identity label must be non-empty".into()));
        }
        if token.contains(['\t', '\n', '\r']) {
            return Err(Error::Domain(format!(
                "identity label {token:?} contains a tab or newline"
            )));
        }
        Ok(IdentityId(token))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for IdentityId {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        IdentityId::new(s)
    }
}

impl From<IdentityId> for String {
    fn from(id: IdentityId) -> String {
        id.0
    }
}

impl FromStr for IdentityId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        IdentityId::new(s)
    }
}

impl fmt::Display for IdentityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A photo, optionally scoped by album.
///
/// The textual key is `photo` or `album/photo`; album names therefore may not
/// contain `/`. Photos order by name first, then album.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PhotoId {
    album: Option<String>,
    photo: String,
}

impl PhotoId {
    pub fn new(album: Option<String>, photo: impl Into<String>) -> Result<Self> {
        let photo = photo.into();
        if photo.is_empty() {
            return Err(Error::Domain("photo id must be non-empty".into()));
        }
        let album = album.filter(|a| !a.is_empty());
        match &album {
            Some(a) if a.contains('/') => {
                return Err(Error::Domain(format!("album {a:?} contains '/'")));
            }
            None if photo.contains('/') => {
                return Err(Error::Domain(format!(
                    "photo {photo:?} contains '/' but has no album"
                )));
            }
            _ => {}
        }
        for s in album.iter().chain(std::iter::once(&photo)) {
            if s.contains(['\t', '\n', '\r']) {
                return Err(Error::Domain(format!(
                    "photo key {s:?} contains a tab or newline"
                )));
            }
        }
        Ok(PhotoId { album, photo })
    }

    pub fn album(&self) -> Option<&str> {
        self.album.as_deref()
    }

    pub fn photo(&self) -> &str {
        &self.photo
    }
}

impl Ord for PhotoId {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (&self.photo, &self.album).cmp(&(&other.photo, &other.album))
    }
}

impl PartialOrd for PhotoId {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for PhotoId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.album {
            Some(a) => write!(f, "{a}/{}", self.photo),
            None => f.write_str(&self.photo),
        }
    }
}

impl FromStr for PhotoId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once('/') {
            Some((album, photo)) if !album.is_empty() => {
                PhotoId::new(Some(album.to_string()), photo)
            }
            _ => PhotoId::new(None, s),
        }
    }
}

impl TryFrom<String> for PhotoId {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<PhotoId> for String {
    fn from(p: PhotoId) -> String {
        p.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Quality {
    #[default]
    Usable,
    Rejected,
}

impl FromStr for Quality {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "" | "usable" => Ok(Quality::Usable),
            "rejected" => Ok(Quality::Rejected),
            other => Err(format!("unknown quality {other:?}")),
        }
    }
}

impl fmt::Display for Quality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Quality::Usable => "usable",
            Quality::Rejected => "rejected",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Split {
    Train,
    Test,
    #[default]
    Unassigned,
}

impl FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "" | "unassigned" => Ok(Split::Unassigned),
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Unassigned => "unassigned",
        })
    }
}

/// Head bounding box in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BBox {
    pub x: i64,
    pub y: i64,
    pub w: i64,
    pub h: i64,
}

impl BBox {
    pub fn new(x: i64, y: i64, w: i64, h: i64) -> Result<Self> {
        if w <= 0 || h <= 0 {
            return Err(Error::Domain(format!(
                "bounding box needs positive width and height, got {w}x{h}"
            )));
        }
        Ok(BBox { x, y, w, h })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FaceInstance {
    pub photo: PhotoId,
    pub face_index: u32,
    pub bbox: Option<BBox>,
    pub true_identity: Option<IdentityId>,
    pub predicted_identity: Option<IdentityId>,
    pub quality: Quality,
    pub split: Split,
}

impl FaceInstance {
    /// A usable, unassigned face with a ground-truth label and no box.
    pub fn labeled(photo: PhotoId, face_index: u32, identity: IdentityId) -> Self {
        FaceInstance {
            photo,
            face_index,
            bbox: None,
            true_identity: Some(identity),
            predicted_identity: None,
            quality: Quality::Usable,
            split: Split::Unassigned,
        }
    }

    /// `photo#face_index`, used in diagnostics.
    pub fn key(&self) -> String {
        format!("{}#{}", self.photo, self.face_index)
    }
}

/// Which identity label of a face drives a computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum LabelSource {
    #[default]
    True,
    Predicted,
}

impl LabelSource {
    pub fn label<'a>(&self, face: &'a FaceInstance) -> Option<&'a IdentityId> {
        match self {
            LabelSource::True => face.true_identity.as_ref(),
            LabelSource::Predicted => face.predicted_identity.as_ref(),
        }
    }
}

/// Photo ↔ identity incidence under one label source.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelIndex {
    pub by_photo: BTreeMap<PhotoId, BTreeSet<IdentityId>>,
    pub by_identity: BTreeMap<IdentityId, BTreeSet<PhotoId>>,
}

impl LabelIndex {
    fn build(instances: &[FaceInstance], source: LabelSource) -> Self {
        let mut index = LabelIndex::default();
        for face in instances {
            if let Some(id) = source.label(face) {
                index
                    .by_photo
                    .entry(face.photo.clone())
                    .or_default()
                    .insert(id.clone());
                index
                    .by_identity
                    .entry(id.clone())
                    .or_default()
                    .insert(face.photo.clone());
            }
        }
        index
    }

    pub fn identities(&self) -> impl Iterator<Item = &IdentityId> {
        self.by_identity.keys()
    }

    pub fn photos_of(&self, id: &IdentityId) -> Option<&BTreeSet<PhotoId>> {
        self.by_identity.get(id)
    }

    pub fn members_of(&self, photo: &PhotoId) -> Option<&BTreeSet<IdentityId>> {
        self.by_photo.get(photo)
    }
}

/// An immutable set of face instances with derived incidence indices for both
/// label sources. Instances are kept in canonical `(photo, face_index)` order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    instances: Vec<FaceInstance>,
    truth: LabelIndex,
    predicted: LabelIndex,
}

impl Corpus {
    /// Builds a corpus, enforcing that face indices are unique within a photo
    /// and that a true identity appears at most once per photo.
    pub fn new(mut instances: Vec<FaceInstance>) -> Result<Self> {
        instances.sort_by(|a, b| (&a.photo, a.face_index).cmp(&(&b.photo, b.face_index)));
        for pair in instances.windows(2) {
            if pair[0].photo == pair[1].photo && pair[0].face_index == pair[1].face_index {
                return Err(Error::Structural(format!(
                    "duplicate face index {} in photo {}",
                    pair[1].face_index, pair[1].photo
                )));
            }
        }
        let mut seen = HashSet::new();
        for face in &instances {
            if let Some(id) = &face.true_identity {
                if !seen.insert((&face.photo, id)) {
                    return Err(Error::Structural(format!(
                        "identity {id} appears more than once in photo {}",
                        face.photo
                    )));
                }
            }
        }
        let truth = LabelIndex::build(&instances, LabelSource::True);
        let predicted = LabelIndex::build(&instances, LabelSource::Predicted);
        Ok(Corpus {
            instances,
            truth,
            predicted,
        })
    }

    /// Convenience constructor from `(photo, identities)` lists; faces are
    /// numbered in the order given.
    pub fn from_photo_lists<P, I, S>(photos: P) -> Result<Self>
    where
        P: IntoIterator<Item = (S, I)>,
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut instances = Vec::new();
        for (photo, ids) in photos {
            let photo: PhotoId = photo.as_ref().parse()?;
            for (i, id) in ids.into_iter().enumerate() {
                instances.push(FaceInstance::labeled(
                    photo.clone(),
                    i as u32,
                    IdentityId::new(id.as_ref())?,
                ));
            }
        }
        Corpus::new(instances)
    }

    pub fn instances(&self) -> &[FaceInstance] {
        &self.instances
    }

    pub fn into_instances(self) -> Vec<FaceInstance> {
        self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    #[allow(clippy::should_implement_trait)]
    pub fn index(&self, source: LabelSource) -> &LabelIndex {
        match source {
            LabelSource::True => &self.truth,
            LabelSource::Predicted => &self.predicted,
        }
    }

    /// Distinct photos holding at least one face, in canonical order.
    pub fn photos(&self) -> BTreeSet<&PhotoId> {
        self.instances.iter().map(|f| &f.photo).collect()
    }

    pub fn face(&self, photo: &PhotoId, face_index: u32) -> Option<&FaceInstance> {
        self.instances
            .binary_search_by(|f| (&f.photo, f.face_index).cmp(&(photo, face_index)))
            .ok()
            .map(|i| &self.instances[i])
    }
}

/// Input layouts accepted by [`parse_annotations`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnnotationFormat {
    GenericTsv,
    PipaIndex,
}

impl FromStr for AnnotationFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "generic_tsv" | "tsv" => Ok(AnnotationFormat::GenericTsv),
            "pipa_index" | "pipa" => Ok(AnnotationFormat::PipaIndex),
            other => Err(Error::Usage(format!(
                "unknown format {other:?} (expected generic_tsv or pipa_index)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParseReport {
    pub rows: usize,
    pub duplicates_collapsed: usize,
}

pub fn parse_annotations<R: BufRead>(stream: R, format: AnnotationFormat) -> Result<Corpus> {
    parse_annotations_with_report(stream, format).map(|(c, _)| c)
}

/// Parses an annotation stream. Repeated `(photo, identity)` rows collapse to
/// the first occurrence and are counted in the report.
pub fn parse_annotations_with_report<R: BufRead>(
    stream: R,
    format: AnnotationFormat,
) -> Result<(Corpus, ParseReport)> {
    let mut builder = RowCollector::default();
    match format {
        AnnotationFormat::GenericTsv => parse_generic_tsv(stream, &mut builder)?,
        AnnotationFormat::PipaIndex => parse_pipa_index(stream, &mut builder)?,
    }
    if builder.report.duplicates_collapsed > 0 {
        log::warn!(
            "collapsed {} duplicate (photo, identity) annotation row(s)",
            builder.report.duplicates_collapsed
        );
    }
    let corpus = Corpus::new(builder.instances)?;
    Ok((corpus, builder.report))
}

#[derive(Default)]
struct RowCollector {
    instances: Vec<FaceInstance>,
    next_face: HashMap<PhotoId, u32>,
    seen: HashSet<(PhotoId, IdentityId)>,
    report: ParseReport,
}

impl RowCollector {
    fn push(&mut self, mut face: FaceInstance, explicit_index: Option<u32>) {
        self.report.rows += 1;
        if let Some(id) = &face.true_identity {
            if !self.seen.insert((face.photo.clone(), id.clone())) {
                self.report.duplicates_collapsed += 1;
                return;
            }
        }
        let next = self.next_face.entry(face.photo.clone()).or_insert(0);
        face.face_index = explicit_index.unwrap_or(*next);
        *next = (*next).max(face.face_index.saturating_add(1));
        self.instances.push(face);
    }
}

const TSV_COLUMNS: [&str; 10] = [
    "photo_id",
    "identity",
    "album",
    "x",
    "y",
    "w",
    "h",
    "quality",
    "split",
    "face_index",
];

fn parse_generic_tsv<R: BufRead>(stream: R, out: &mut RowCollector) -> Result<()> {
    let mut columns: Option<Vec<usize>> = None;
    for (n, line) in stream.lines().enumerate() {
        let lineno = n + 1;
        let line = line.map_err(|e| Error::parse(lineno, e.to_string()))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let Some(cols) = &columns else {
            columns = Some(parse_tsv_header(&fields, lineno)?);
            continue;
        };
        if fields.len() > cols.len() {
            return Err(Error::parse(
                lineno,
                format!("{} fields but header has {}", fields.len(), cols.len()),
            ));
        }
        let mut row = [""; TSV_COLUMNS.len()];
        for (value, &col) in fields.iter().zip(cols) {
            row[col] = value.trim();
        }
        let (face, explicit) = tsv_row(&row).map_err(|e| Error::parse(lineno, e))?;
        out.push(face, explicit);
    }
    Ok(())
}

fn parse_tsv_header(fields: &[&str], lineno: usize) -> Result<Vec<usize>> {
    let mut cols = Vec::with_capacity(fields.len());
    for name in fields {
        let name = name.trim();
        let Some(pos) = TSV_COLUMNS.iter().position(|c| *c == name) else {
            return Err(Error::parse(lineno, format!("unknown column {name:?}")));
        };
        if cols.contains(&pos) {
            return Err(Error::parse(lineno, format!("repeated column {name:?}")));
        }
        cols.push(pos);
    }
    if cols.first() != Some(&0) || cols.get(1) != Some(&1) {
        return Err(Error::parse(
            lineno,
            "header must start with photo_id\tidentity",
        ));
    }
    Ok(cols)
}

fn tsv_row(
    row: &[&str; TSV_COLUMNS.len()],
) -> std::result::Result<(FaceInstance, Option<u32>), String> {
    let album = (!row[2].is_empty()).then(|| row[2].to_string());
    let photo = PhotoId::new(album, row[0]).map_err(|e| e.to_string())?;
    let true_identity = if row[1].is_empty() {
        None
    } else {
        Some(IdentityId::new(row[1]).map_err(|e| e.to_string())?)
    };
    let coords = &row[3..7];
    let bbox = if coords.iter().all(|c| c.is_empty()) {
        None
    } else {
        let mut v = [0i64; 4];
        for (slot, raw) in v.iter_mut().zip(coords) {
            *slot = raw
                .parse()
                .map_err(|_| format!("bad bounding-box value {raw:?}"))?;
        }
        Some(BBox::new(v[0], v[1], v[2], v[3]).map_err(|e| e.to_string())?)
    };
    let quality = row[7].parse()?;
    let split = row[8].parse()?;
    let explicit = if row[9].is_empty() {
        None
    } else {
        Some(
            row[9]
                .parse()
                .map_err(|_| format!("bad face index {:?}", row[9]))?,
        )
    };
    let face = FaceInstance {
        photo,
        face_index: 0,
        bbox,
        true_identity,
        predicted_identity: None,
        quality,
        split,
    };
    Ok((face, explicit))
}

fn parse_pipa_index<R: BufRead>(stream: R, out: &mut RowCollector) -> Result<()> {
    for (n, line) in stream.lines().enumerate() {
        let lineno = n + 1;
        let line = line.map_err(|e| Error::parse(lineno, e.to_string()))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 8 {
            return Err(Error::parse(
                lineno,
                format!("expected 8 columns, found {}", fields.len()),
            ));
        }
        let face = pipa_row(&fields).map_err(|e| Error::parse(lineno, e))?;
        out.push(face, None);
    }
    Ok(())
}

fn pipa_row(f: &[&str]) -> std::result::Result<FaceInstance, String> {
    let photo = PhotoId::new(Some(f[0].to_string()), f[1]).map_err(|e| e.to_string())?;
    let mut v = [0i64; 4];
    for (slot, raw) in v.iter_mut().zip(&f[2..6]) {
        *slot = raw
            .parse()
            .map_err(|_| format!("bad bounding-box value {raw:?}"))?;
    }
    let bbox = BBox::new(v[0], v[1], v[2], v[3]).map_err(|e| e.to_string())?;
    let identity = IdentityId::new(f[6]).map_err(|e| e.to_string())?;
    let split = match f[7] {
        "1" | "2" | "train" | "val" => Split::Train,
        "3" | "test" => Split::Test,
        "0" | "leftover" => Split::Unassigned,
        other => return Err(format!("unknown subset id {other:?}")),
    };
    Ok(FaceInstance {
        photo,
        face_index: 0,
        bbox: Some(bbox),
        true_identity: Some(identity),
        predicted_identity: None,
        quality: Quality::Usable,
        split,
    })
}

/// Writes the canonical generic TSV form, sorted by `(photo, face_index)`.
/// Predicted labels are not part of this format.
pub fn write_corpus_tsv<W: Write>(corpus: &Corpus, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{}", TSV_COLUMNS.join("\t"))?;
    for face in corpus.instances() {
        let (x, y, bw, bh) = match face.bbox {
            Some(b) => (
                b.x.to_string(),
                b.y.to_string(),
                b.w.to_string(),
                b.h.to_string(),
            ),
            None => Default::default(),
        };
        writeln!(
            w,
            "{}\t{}\t{}\t{x}\t{y}\t{bw}\t{bh}\t{}\t{}\t{}",
            face.photo.photo(),
            face.true_identity.as_ref().map_or("", |i| i.as_str()),
            face.photo.album().unwrap_or(""),
            face.quality,
            face.split,
            face.face_index,
        )?;
    }
    Ok(())
}

/// Keeps only usable faces; photos and identities left without faces vanish.
pub fn clean(corpus: &Corpus) -> Corpus {
    let kept: Vec<FaceInstance> = corpus
        .instances()
        .iter()
        .filter(|f| f.quality == Quality::Usable)
        .cloned()
        .collect();
    Corpus::new(kept).expect("subset of a valid corpus is valid")
}

/// Number of training instances for a class of `n` instances: `round(frac·n)`,
/// raised to 1 when `n ≥ 2`.
pub fn train_count(n: usize, train_frac: f64) -> usize {
    let k = (train_frac * n as f64).round() as usize;
    if n >= 2 && k == 0 {
        1
    } else {
        k.min(n)
    }
}

/// Per-class stratified train/test partition.
///
/// Every labeled face is assigned; each class is shuffled with its own stream
/// derived from `seed` and the class label. Rejected faces without a label are
/// carried into the training side with their split left unassigned.
pub fn stratified_split(corpus: &Corpus, train_frac: f64, seed: u64) -> Result<(Corpus, Corpus)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::Params(format!(
            "train fraction must lie in (0, 1), got {train_frac}"
        )));
    }
    let mut classes: BTreeMap<&IdentityId, Vec<&FaceInstance>> = BTreeMap::new();
    let mut train = Vec::new();
    for face in corpus.instances() {
        match (&face.true_identity, face.quality) {
            (Some(id), _) => classes.entry(id).or_default().push(face),
            (None, Quality::Usable) => {
                return Err(Error::Precondition(format!(
                    "usable face {} has no true identity",
                    face.key()
                )))
            }
            (None, Quality::Rejected) => {
                let mut f = face.clone();
                f.split = Split::Unassigned;
                train.push(f);
            }
        }
    }
    let mut test = Vec::new();
    for (id, mut members) in classes {
        let mut rng = StreamKey::new(seed, "stratified_split")
            .bytes(id.as_str().as_bytes())
            .rng();
        members.shuffle(&mut rng);
        let k = train_count(members.len(), train_frac);
        for (i, face) in members.into_iter().enumerate() {
            let mut f = face.clone();
            if i < k {
                f.split = Split::Train;
                train.push(f);
            } else {
                f.split = Split::Test;
                test.push(f);
            }
        }
    }
    Ok((Corpus::new(train)?, Corpus::new(test)?))
}

/// Suggested geometric transform for a synthetic training instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Transform {
    Rotate,
    Flip,
    Scale,
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Transform::Rotate => "rotate",
            Transform::Flip => "flip",
            Transform::Scale => "scale",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassPlan {
    pub existing: usize,
    pub needed: usize,
    pub transforms: Vec<Transform>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugPlan {
    pub min_per_class: usize,
    pub per_class: BTreeMap<IdentityId, ClassPlan>,
    pub total_augmented: usize,
}

const TRANSFORM_CYCLE: [Transform; 3] = [Transform::Rotate, Transform::Flip, Transform::Scale];

/// Counts the synthetic instances each class needs to reach `min_per_class`.
/// Only usable, labeled faces of `train` count as existing instances.
pub fn augmentation_plan(train: &Corpus, min_per_class: usize) -> Result<AugPlan> {
    if min_per_class == 0 {
        return Err(Error::Params("min_per_class must be at least 1".into()));
    }
    let mut existing: BTreeMap<IdentityId, usize> = BTreeMap::new();
    for face in train.instances() {
        if face.quality != Quality::Usable {
            continue;
        }
        if let Some(id) = &face.true_identity {
            *existing.entry(id.clone()).or_default() += 1;
        }
    }
    let per_class: BTreeMap<IdentityId, ClassPlan> = existing
        .into_iter()
        .map(|(id, n)| {
            let needed = min_per_class.saturating_sub(n);
            let transforms = TRANSFORM_CYCLE
                .iter()
                .copied()
                .cycle()
                .take(needed)
                .collect();
            (
                id,
                ClassPlan {
                    existing: n,
                    needed,
                    transforms,
                },
            )
        })
        .collect();
    let total_augmented = per_class.values().map(|p| p.needed).sum();
    Ok(AugPlan {
        min_per_class,
        per_class,
        total_augmented,
    })
}

/// `identity\texisting\tneeded\ttransforms` with transforms comma-joined.
pub fn write_aug_plan<W: Write>(plan: &AugPlan, mut w: W) -> std::io::Result<()> {
    writeln!(w, "identity\texisting\tneeded\ttransforms")?;
    for (id, p) in &plan.per_class {
        let tags: Vec<String> = p.transforms.iter().map(|t| t.to_string()).collect();
        writeln!(w, "{id}\t{}\t{}\t{}", p.existing, p.needed, tags.join(","))?;
    }
    writeln!(w, "# total_augmented\t{}", plan.total_augmented)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tsv(s: &str) -> Result<Corpus> {
        parse_annotations(s.as_bytes(), AnnotationFormat::GenericTsv)
    }

    #[test]
    fn two_row_tsv() {
        let c = tsv("photo_id\tidentity\np1\tA\np1\tB\n").unwrap();
        assert_eq!(c.photos().len(), 1);
        assert_eq!(c.len(), 2);
        let idx = c.index(LabelSource::True);
        let p1: PhotoId = "p1".parse().unwrap();
        assert_eq!(idx.by_identity.len(), 2);
        for id in ["A", "B"] {
            let photos = idx.photos_of(&IdentityId::new(id).unwrap()).unwrap();
            assert_eq!(photos.iter().collect::<Vec<_>>(), vec![&p1]);
        }
    }

    #[test]
    fn empty_stream_is_empty_corpus() {
        let c = tsv("").unwrap();
        assert!(c.is_empty());
        let c = parse_annotations(&b""[..], AnnotationFormat::PipaIndex).unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn malformed_row_names_line() {
        let err = tsv("# comment\nphoto_id\tidentity\tx\tw\np1\tA\t1\tz\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let err = tsv("photo_id\tidentity\np1\tA\textra\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn duplicate_identity_rows_collapse() {
        let (c, report) = parse_annotations_with_report(
            "photo_id\tidentity\np1\tA\np1\tA\np1\tB\n".as_bytes(),
            AnnotationFormat::GenericTsv,
        )
        .unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(report.duplicates_collapsed, 1);
    }

    #[test]
    fn duplicate_face_index_is_structural() {
        let err = tsv("photo_id\tidentity\tface_index\np1\tA\t0\np1\tB\t0\n").unwrap_err();
        assert!(matches!(err, Error::Structural(_)), "{err:?}");
    }

    #[test]
    fn bbox_must_be_positive() {
        let err = tsv("photo_id\tidentity\tx\ty\tw\th\np1\tA\t0\t0\t0\t5\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn pipa_subsets_map_to_splits() {
        let src = "11 101 10 20 30 40 7 1\n11 101 50 20 30 40 8 2\n12 102 1 1 5 5 7 3\n12 103 -3 1 5 5 9 0\n";
        let c = parse_annotations(src.as_bytes(), AnnotationFormat::PipaIndex).unwrap();
        let splits: Vec<Split> = c.instances().iter().map(|f| f.split).collect();
        assert_eq!(
            splits,
            vec![Split::Train, Split::Train, Split::Test, Split::Unassigned]
        );
        assert_eq!(c.instances()[0].photo.to_string(), "11/101");
        assert_eq!(c.instances()[1].face_index, 1);
        let err = parse_annotations("1 2 3\n".as_bytes(), AnnotationFormat::PipaIndex).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn canonical_round_trip() {
        let src = "photo_id\tidentity\talbum\tquality\n\
                   p2\tB\talb\t\n\
                   p1\tA\t\trejected\n\
                   p2\tC\talb\tusable\n\
                   p1\t\t\t\n";
        let c = tsv(src).unwrap();
        let mut out = Vec::new();
        write_corpus_tsv(&c, &mut out).unwrap();
        let again = tsv(std::str::from_utf8(&out).unwrap()).unwrap();
        assert_eq!(c, again);
    }

    fn mixed_quality() -> Corpus {
        tsv("photo_id\tidentity\tquality\n\
             p1\tA\tusable\np1\tB\trejected\np2\tA\tusable\np3\tC\trejected\np4\tB\tusable\n")
        .unwrap()
    }

    #[test]
    fn clean_filters_rejected() {
        let c = clean(&mixed_quality());
        assert_eq!(c.len(), 3);
        assert_eq!(c.photos().len(), 3);
        assert!(c
            .index(LabelSource::True)
            .photos_of(&IdentityId::new("C").unwrap())
            .is_none());
        assert_eq!(clean(&c), c);
    }

    #[test]
    fn clean_all_rejected_is_empty() {
        let c = tsv("photo_id\tidentity\tquality\np1\tA\trejected\n").unwrap();
        assert!(clean(&c).is_empty());
    }

    #[test]
    fn train_count_rules() {
        assert_eq!(train_count(10, 0.8), 8);
        assert_eq!(train_count(1, 0.8), 1);
        assert_eq!(train_count(2, 0.1), 1);
        assert_eq!(train_count(0, 0.8), 0);
    }

    fn class_corpus(sizes: &[usize]) -> Corpus {
        let mut v = Vec::new();
        for (c, &n) in sizes.iter().enumerate() {
            for i in 0..n {
                v.push(FaceInstance::labeled(
                    format!("c{c}_{i}").parse().unwrap(),
                    0,
                    IdentityId::new(format!("id{c}")).unwrap(),
                ));
            }
        }
        Corpus::new(v).unwrap()
    }

    #[test]
    fn split_counts_and_determinism() {
        let c = class_corpus(&[10, 1]);
        let (train, test) = stratified_split(&c, 0.8, 42).unwrap();
        let count = |c: &Corpus, id: &str| {
            c.instances()
                .iter()
                .filter(|f| f.true_identity.as_ref().unwrap().as_str() == id)
                .count()
        };
        assert_eq!((count(&train, "id0"), count(&test, "id0")), (8, 2));
        assert_eq!((count(&train, "id1"), count(&test, "id1")), (1, 0));
        assert!(train.instances().iter().all(|f| f.split == Split::Train));
        assert!(test.instances().iter().all(|f| f.split == Split::Test));
        let (train2, test2) = stratified_split(&c, 0.8, 42).unwrap();
        assert_eq!((train, test), (train2, test2));
    }

    #[test]
    fn split_requires_labels() {
        let c = tsv("photo_id\tidentity\np1\t\n").unwrap();
        assert!(matches!(
            stratified_split(&c, 0.8, 0),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            stratified_split(&class_corpus(&[3]), 1.0, 0),
            Err(Error::Params(_))
        ));
    }

    #[test]
    fn augmentation_counts() {
        let plan = augmentation_plan(&class_corpus(&[5, 8, 12]), 8).unwrap();
        let needed: Vec<usize> = plan.per_class.values().map(|p| p.needed).collect();
        assert_eq!(needed, vec![3, 0, 0]);
        assert_eq!(plan.total_augmented, 3);
        let first = plan.per_class.values().next().unwrap();
        assert_eq!(
            first.transforms,
            vec![Transform::Rotate, Transform::Flip, Transform::Scale]
        );
        assert!(augmentation_plan(&Corpus::default(), 0).is_err());
    }

    #[test]
    fn photo_id_key_round_trip() {
        let p: PhotoId = "album/a/b.jpg".parse().unwrap();
        assert_eq!(p.album(), Some("album"));
        assert_eq!(p.photo(), "a/b.jpg");
        assert_eq!(p.to_string().parse::<PhotoId>().unwrap(), p);
        assert!(PhotoId::new(Some("x/y".into()), "p").is_err());
        assert!(IdentityId::new("").is_err());
    }
}
