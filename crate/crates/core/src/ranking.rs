//! TF-IDF photo ranking and relationship strength.
//!
//! Group photos (two or more distinct identities) are the documents and
//! identities the terms. A person appears at most once per photo, so TF is 1
//! and a photo's TF-IDF average reduces to the mean IDF of its members. The
//! strength of an edge is the sum of the scores of the photos backing it.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use crate::corpus::{Corpus, IdentityId, LabelSource, PhotoId};
use crate::error::{Error, Result};
use crate::netbuild::CommunityGraph;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogBase(f64);

impl LogBase {
    pub fn new(base: f64) -> Result<Self> {
        if !base.is_finite() || base <= 0.0 || base == 1.0 {
            return Err(Error::Params(format!(
                "log base must be positive and different from 1, got {base}"
            )));
        }
        Ok(LogBase(base))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn log(self, x: f64) -> f64 {
        if self.0 == 10.0 {
            x.log10()
        } else {
            x.ln() / self.0.ln()
        }
    }
}

impl Default for LogBase {
    fn default() -> Self {
        LogBase(10.0)
    }
}

/// Photos with at least two distinct identities, with their members.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GroupPhotoSet {
    pub photos: BTreeMap<PhotoId, BTreeSet<IdentityId>>,
}

impl GroupPhotoSet {
    pub fn len(&self) -> usize {
        self.photos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.photos.is_empty()
    }

    pub fn contains(&self, photo: &PhotoId) -> bool {
        self.photos.contains_key(photo)
    }
}

pub fn group_photos(corpus: &Corpus, label_source: LabelSource) -> GroupPhotoSet {
    let photos = corpus
        .index(label_source)
        .by_photo
        .iter()
        .filter(|(_, ids)| ids.len() >= 2)
        .map(|(p, ids)| (p.clone(), ids.clone()))
        .collect();
    GroupPhotoSet { photos }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdfTable {
    pub log_base: LogBase,
    pub group_count: usize,
    /// Number of group photos each identity appears in.
    pub occurrences: BTreeMap<IdentityId, usize>,
    pub idf: BTreeMap<IdentityId, f64>,
}

impl IdfTable {
    pub fn get(&self, id: &IdentityId) -> Option<f64> {
        self.idf.get(id).copied()
    }
}

/// `IDF(c) = log(|G| / f_{c,G})` for every identity seen in a group photo.
pub fn idf_table(group: &GroupPhotoSet, log_base: LogBase) -> Result<IdfTable> {
    if group.is_empty() {
        return Err(Error::Precondition(
            "IDF needs at least one group photo".into(),
        ));
    }
    let mut occurrences: BTreeMap<IdentityId, usize> = BTreeMap::new();
    for ids in group.photos.values() {
        for id in ids {
            *occurrences.entry(id.clone()).or_default() += 1;
        }
    }
    let n = group.len() as f64;
    let idf = occurrences
        .iter()
        .map(|(id, &f)| (id.clone(), log_base.log(n / f as f64)))
        .collect();
    Ok(IdfTable {
        log_base,
        group_count: group.len(),
        occurrences,
        idf,
    })
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PhotoScoreTable {
    pub scores: BTreeMap<PhotoId, f64>,
}

impl PhotoScoreTable {
    pub fn get(&self, photo: &PhotoId) -> Option<f64> {
        self.scores.get(photo).copied()
    }
}

/// Mean member IDF of every group photo.
pub fn photo_scores(group: &GroupPhotoSet, idf: &IdfTable) -> Result<PhotoScoreTable> {
    let mut scores = BTreeMap::new();
    for (photo, ids) in &group.photos {
        let mut sum = 0.0;
        for id in ids {
            sum += idf.get(id).ok_or_else(|| {
                Error::Consistency(format!("no IDF entry for identity {id} (photo {photo})"))
            })?;
        }
        scores.insert(photo.clone(), sum / ids.len() as f64);
    }
    Ok(PhotoScoreTable { scores })
}

/// Sets every edge's strength to the sum of its shared photos' scores.
pub fn relationship_strengths(
    graph: &CommunityGraph,
    scores: &PhotoScoreTable,
) -> Result<CommunityGraph> {
    let mut out = graph.clone();
    for edge in out.edges_mut() {
        let mut strength = 0.0;
        for photo in &edge.shared_photos {
            strength += scores.get(photo).ok_or_else(|| {
                Error::Consistency(format!(
                    "shared photo {photo} of edge {}–{} has no score",
                    edge.a, edge.b
                ))
            })?;
        }
        edge.strength = Some(strength);
    }
    Ok(out)
}

/// Group photos, IDF and scores computed once over a whole corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    pub group: GroupPhotoSet,
    pub idf: IdfTable,
    pub scores: PhotoScoreTable,
}

impl Ranking {
    pub fn compute(corpus: &Corpus, label_source: LabelSource, log_base: LogBase) -> Result<Self> {
        let group = group_photos(corpus, label_source);
        let idf = idf_table(&group, log_base)?;
        let scores = photo_scores(&group, &idf)?;
        Ok(Ranking { group, idf, scores })
    }
}

pub fn write_scores_tsv<W: Write>(scores: &PhotoScoreTable, mut w: W) -> std::io::Result<()> {
    writeln!(w, "photo_id\tscore")?;
    for (photo, s) in &scores.scores {
        writeln!(w, "{photo}\t{s:.6}")?;
    }
    Ok(())
}

pub fn write_idf_tsv<W: Write>(idf: &IdfTable, mut w: W) -> std::io::Result<()> {
    writeln!(w, "identity\tidf")?;
    for (id, v) in &idf.idf {
        writeln!(w, "{id}\t{v:.6}")?;
    }
    Ok(())
}

fn read_two_column<R: BufRead, K, F>(stream: R, header: &str, key: F) -> Result<BTreeMap<K, f64>>
where
    K: Ord,
    F: Fn(&str) -> Result<K>,
{
    let mut out = BTreeMap::new();
    for (n, line) in stream.lines().enumerate() {
        let lineno = n + 1;
        let line = line.map_err(|e| Error::parse(lineno, e.to_string()))?;
        if line.is_empty() || line.starts_with('#') || line == header {
            continue;
        }
        let (k, v) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(lineno, "expected two tab-separated columns"))?;
        let k = key(k).map_err(|e| Error::parse(lineno, e.to_string()))?;
        let v: f64 = v
            .parse()
            .map_err(|_| Error::parse(lineno, format!("bad number {v:?}")))?;
        out.insert(k, v);
    }
    Ok(out)
}

pub fn read_scores_tsv<R: BufRead>(stream: R) -> Result<PhotoScoreTable> {
    let scores = read_two_column(stream, "photo_id\tscore", |s| s.parse())?;
    Ok(PhotoScoreTable { scores })
}

/// Reads `identity\tidf` rows into a plain map.
pub fn read_idf_tsv<R: BufRead>(stream: R) -> Result<BTreeMap<IdentityId, f64>> {
    read_two_column(stream, "identity\tidf", |s| s.parse())
}
