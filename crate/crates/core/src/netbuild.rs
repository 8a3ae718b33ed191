//! Face co-occurrence frequencies and recursive, layered growth of a
//! target-centered community network.
//!
//! Starting from the root, every member is treated in turn as a new target:
//! identities it shares more than `threshold` photos with, and which are not
//! yet in the network, join the next layer. Growth stops when a layer adds
//! nobody (or at `max_layers`). Layers are therefore shortest-path distances
//! in the thresholded co-occurrence graph.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, IdentityId, LabelIndex, LabelSource, PhotoId};
use crate::error::{Error, Result};

/// Co-occurrence counts of one target against every other identity.
///
/// Zero entries are kept for all identities known under the label source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CooccurrenceDict {
    pub target: IdentityId,
    pub freq: BTreeMap<IdentityId, u32>,
    pub evidence: BTreeMap<IdentityId, BTreeSet<PhotoId>>,
}

pub fn cooccurrence_frequencies(
    corpus: &Corpus,
    target: &IdentityId,
    label_source: LabelSource,
) -> Result<CooccurrenceDict> {
    let index = corpus.index(label_source);
    let mut evidence = shared_photos(index, target)?;
    for id in index.identities() {
        if id != target {
            evidence.entry(id.clone()).or_default();
        }
    }
    let freq = evidence
        .iter()
        .map(|(id, photos)| (id.clone(), photos.len() as u32))
        .collect();
    Ok(CooccurrenceDict {
        target: target.clone(),
        freq,
        evidence,
    })
}

/// Photos shared with each identity that co-occurs with `target` at least once.
fn shared_photos(
    index: &LabelIndex,
    target: &IdentityId,
) -> Result<BTreeMap<IdentityId, BTreeSet<PhotoId>>> {
    let photos = index
        .photos_of(target)
        .ok_or_else(|| Error::UnknownTarget(target.to_string()))?;
    let mut shared: BTreeMap<IdentityId, BTreeSet<PhotoId>> = BTreeMap::new();
    for photo in photos {
        for other in index.members_of(photo).into_iter().flatten() {
            if other != target {
                shared
                    .entry(other.clone())
                    .or_default()
                    .insert(photo.clone());
            }
        }
    }
    Ok(shared)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BuildParams {
    /// An edge qualifies when its frequency is strictly greater than this.
    pub threshold: u32,
    pub max_layers: Option<u32>,
    pub label_source: LabelSource,
}

impl BuildParams {
    pub fn with_threshold(threshold: u32) -> Self {
        BuildParams {
            threshold,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub a: IdentityId,
    pub b: IdentityId,
    pub frequency: u32,
    pub shared_photos: BTreeSet<PhotoId>,
    pub strength: Option<f64>,
}

/// A rooted, layered community. Members are keyed canonically by identity and
/// edges are stored once per unordered pair with `a < b`, sorted by `(a, b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CommunityGraph {
    root: IdentityId,
    layers: BTreeMap<IdentityId, u32>,
    edges: Vec<Edge>,
}

impl CommunityGraph {
    /// A network holding only its root.
    pub fn isolated(root: IdentityId) -> Self {
        let layers = BTreeMap::from([(root.clone(), 0)]);
        CommunityGraph {
            root,
            layers,
            edges: Vec::new(),
        }
    }

    /// Assembles a graph from explicit parts, checking that edges join members,
    /// frequencies equal their evidence size, and each layer is the shortest
    /// edge distance from the root.
    pub fn from_parts(
        root: IdentityId,
        layers: BTreeMap<IdentityId, u32>,
        mut edges: Vec<Edge>,
    ) -> Result<Self> {
        if layers.get(&root) != Some(&0) {
            return Err(Error::Consistency(format!(
                "root {root} must be on layer 0"
            )));
        }
        for e in &mut edges {
            if e.a == e.b {
                return Err(Error::Consistency(format!("self edge on {}", e.a)));
            }
            if e.a > e.b {
                std::mem::swap(&mut e.a, &mut e.b);
            }
            for end in [&e.a, &e.b] {
                if !layers.contains_key(end) {
                    return Err(Error::Consistency(format!(
                        "edge endpoint {end} is not a member"
                    )));
                }
            }
            if e.frequency as usize != e.shared_photos.len() || e.frequency == 0 {
                return Err(Error::Consistency(format!(
                    "edge {}–{} has frequency {} but {} shared photo(s)",
                    e.a,
                    e.b,
                    e.frequency,
                    e.shared_photos.len()
                )));
            }
        }
        edges.sort_by(|x, y| (&x.a, &x.b).cmp(&(&y.a, &y.b)));
        if edges
            .windows(2)
            .any(|w| (&w[0].a, &w[0].b) == (&w[1].a, &w[1].b))
        {
            return Err(Error::Consistency("repeated edge".into()));
        }
        let graph = CommunityGraph {
            root,
            layers,
            edges,
        };
        let distances = graph.bfs_distances();
        if distances != graph.layers {
            return Err(Error::Consistency(
                "layers do not match shortest distances from the root".into(),
            ));
        }
        Ok(graph)
    }

    pub fn root(&self) -> &IdentityId {
        &self.root
    }

    pub fn layer(&self, id: &IdentityId) -> Option<u32> {
        self.layers.get(id).copied()
    }

    pub fn layers(&self) -> &BTreeMap<IdentityId, u32> {
        &self.layers
    }

    /// Members in ascending identity order, root included.
    pub fn members(&self) -> impl Iterator<Item = &IdentityId> {
        self.layers.keys()
    }

    pub fn member_set(&self) -> BTreeSet<IdentityId> {
        self.layers.keys().cloned().collect()
    }

    pub fn contains(&self, id: &IdentityId) -> bool {
        self.layers.contains_key(id)
    }

    pub fn node_count(&self) -> usize {
        self.layers.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub(crate) fn edges_mut(&mut self) -> &mut [Edge] {
        &mut self.edges
    }

    /// Deepest layer present (0 for a single-node graph).
    pub fn depth(&self) -> u32 {
        self.layers.values().copied().max().unwrap_or(0)
    }

    pub fn edge(&self, x: &IdentityId, y: &IdentityId) -> Option<&Edge> {
        let (a, b) = if x < y { (x, y) } else { (y, x) };
        self.edges
            .binary_search_by(|e| (&e.a, &e.b).cmp(&(a, b)))
            .ok()
            .map(|i| &self.edges[i])
    }

    fn bfs_distances(&self) -> BTreeMap<IdentityId, u32> {
        let mut adj: HashMap<&IdentityId, Vec<&IdentityId>> = HashMap::new();
        for e in &self.edges {
            adj.entry(&e.a).or_default().push(&e.b);
            adj.entry(&e.b).or_default().push(&e.a);
        }
        let mut dist = BTreeMap::from([(self.root.clone(), 0)]);
        let mut queue = VecDeque::from([&self.root]);
        while let Some(u) = queue.pop_front() {
            let d = dist[u];
            for &v in adj.get(u).into_iter().flatten() {
                if !dist.contains_key(v) {
                    dist.insert(v.clone(), d + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn to_json(&self) -> GraphJson {
        GraphJson {
            root: self.root.clone(),
            members: self
                .layers
                .iter()
                .map(|(id, &layer)| MemberJson {
                    id: id.clone(),
                    layer,
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeJson {
                    a: e.a.clone(),
                    b: e.b.clone(),
                    frequency: e.frequency,
                    shared_photos: e.shared_photos.iter().cloned().collect(),
                    strength: e.strength,
                })
                .collect(),
        }
    }

    pub fn from_json(json: GraphJson) -> Result<Self> {
        let mut layers = BTreeMap::new();
        for m in json.members {
            if layers.insert(m.id.clone(), m.layer).is_some() {
                return Err(Error::Consistency(format!("member {} listed twice", m.id)));
            }
        }
        let edges = json
            .edges
            .into_iter()
            .map(|e| Edge {
                a: e.a,
                b: e.b,
                frequency: e.frequency,
                shared_photos: e.shared_photos.into_iter().collect(),
                strength: e.strength,
            })
            .collect();
        CommunityGraph::from_parts(json.root, layers, edges)
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, &self.to_json())
            .map_err(|e| Error::Consistency(format!("graph serialization failed: {e}")))
    }

    pub fn read_json(s: &str) -> Result<Self> {
        let json: GraphJson =
            serde_json::from_str(s).map_err(|e| Error::parse(e.line(), e.to_string()))?;
        CommunityGraph::from_json(json)
    }

    /// Graphviz output: undirected edges labeled with strength (two decimals,
    /// frequency when unweighted) and pen width proportional to strength.
    pub fn write_dot<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let max_strength = self
            .edges
            .iter()
            .filter_map(|e| e.strength)
            .fold(0.0f64, f64::max);
        writeln!(w, "graph community {{")?;
        writeln!(w, "  root={:?};", self.root.as_str())?;
        for (id, layer) in &self.layers {
            writeln!(w, "  {:?} [community_layer={layer}];", id.as_str())?;
        }
        for e in &self.edges {
            let (label, pen) = match e.strength {
                Some(s) if max_strength > 0.0 => {
                    (format!("{s:.2}"), MAX_PENWIDTH * s / max_strength)
                }
                Some(s) => (format!("{s:.2}"), 1.0),
                None => (e.frequency.to_string(), 1.0),
            };
            writeln!(
                w,
                "  {:?} -- {:?} [label=\"{label}\", penwidth={pen:.3}];",
                e.a.as_str(),
                e.b.as_str()
            )?;
        }
        writeln!(w, "}}")
    }
}

const MAX_PENWIDTH: f64 = 6.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphJson {
    pub root: IdentityId,
    pub members: Vec<MemberJson>,
    pub edges: Vec<EdgeJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberJson {
    pub id: IdentityId,
    pub layer: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeJson {
    pub a: IdentityId,
    pub b: IdentityId,
    pub frequency: u32,
    pub shared_photos: Vec<PhotoId>,
    pub strength: Option<f64>,
}

/// Grows the community of `target` layer by layer.
pub fn build_network(
    corpus: &Corpus,
    target: &IdentityId,
    params: &BuildParams,
) -> Result<CommunityGraph> {
    let index = corpus.index(params.label_source);
    let mut neighbors: BTreeMap<IdentityId, BTreeMap<IdentityId, BTreeSet<PhotoId>>> =
        BTreeMap::new();
    let mut qualifying = |id: &IdentityId| -> Result<Vec<(IdentityId, BTreeSet<PhotoId>)>> {
        if !neighbors.contains_key(id) {
            neighbors.insert(id.clone(), shared_photos(index, id)?);
        }
        Ok(neighbors[id]
            .iter()
            .filter(|(_, photos)| photos.len() as u32 > params.threshold)
            .map(|(k, photos)| (k.clone(), photos.clone()))
            .collect())
    };

    let mut layers = BTreeMap::from([(target.clone(), 0u32)]);
    let mut frontier = vec![target.clone()];
    let mut depth = 0u32;
    let mut adjacency: BTreeMap<IdentityId, Vec<(IdentityId, BTreeSet<PhotoId>)>> = BTreeMap::new();
    while !frontier.is_empty() && params.max_layers.is_none_or(|m| depth < m) {
        let mut next = BTreeSet::new();
        for node in &frontier {
            let found = qualifying(node)?;
            for (k, _) in &found {
                if !layers.contains_key(k) {
                    next.insert(k.clone());
                }
            }
            adjacency.insert(node.clone(), found);
        }
        depth += 1;
        for k in &next {
            layers.insert(k.clone(), depth);
        }
        frontier = next.into_iter().collect();
    }
    // Members on a layer cut off by max_layers were never expanded.
    for node in frontier {
        let found = qualifying(&node)?;
        adjacency.insert(node, found);
    }

    let mut edges = Vec::new();
    for (a, found) in &adjacency {
        for (b, photos) in found {
            if a < b && layers.contains_key(b) {
                assert!(
                    layers[a].abs_diff(layers[b]) <= 1,
                    "edge {a}–{b} spans more than one layer"
                );
                edges.push(Edge {
                    a: a.clone(),
                    b: b.clone(),
                    frequency: photos.len() as u32,
                    shared_photos: photos.clone(),
                    strength: None,
                });
            }
        }
    }
    Ok(CommunityGraph {
        root: target.clone(),
        layers,
        edges,
    })
}

/// Like [`build_network`], but a target unknown under the label source yields
/// a root-only graph instead of an error.
pub fn build_network_or_isolated(
    corpus: &Corpus,
    target: &IdentityId,
    params: &BuildParams,
) -> Result<CommunityGraph> {
    match build_network(corpus, target, params) {
        Err(Error::UnknownTarget(_)) => Ok(CommunityGraph::isolated(target.clone())),
        other => other,
    }
}

/// Independent reference for [`build_network`] membership: counts every
/// identity pair of every photo, keeps pairs above the threshold, and returns
/// breadth-first distances from `target`.
pub fn reachable_bruteforce(
    corpus: &Corpus,
    target: &IdentityId,
    params: &BuildParams,
) -> Result<BTreeMap<IdentityId, u32>> {
    let mut members_by_photo: BTreeMap<&PhotoId, Vec<&IdentityId>> = BTreeMap::new();
    for face in corpus.instances() {
        if let Some(id) = params.label_source.label(face) {
            members_by_photo.entry(&face.photo).or_default().push(id);
        }
    }
    let mut known = false;
    let mut pair_counts: HashMap<(&IdentityId, &IdentityId), u32> = HashMap::new();
    for ids in members_by_photo.values_mut() {
        ids.sort();
        ids.dedup();
        known |= ids.contains(&target);
        for i in 0..ids.len() {
            for j in i + 1..ids.len() {
                *pair_counts.entry((ids[i], ids[j])).or_default() += 1;
            }
        }
    }
    if !known {
        return Err(Error::UnknownTarget(target.to_string()));
    }
    let mut adj: HashMap<&IdentityId, Vec<&IdentityId>> = HashMap::new();
    for ((a, b), n) in pair_counts {
        if n > params.threshold {
            adj.entry(a).or_default().push(b);
            adj.entry(b).or_default().push(a);
        }
    }
    let mut dist = BTreeMap::from([(target.clone(), 0u32)]);
    let mut queue = VecDeque::from([(target, 0u32)]);
    while let Some((u, d)) = queue.pop_front() {
        if params.max_layers.is_some_and(|m| d >= m) {
            continue;
        }
        for &v in adj.get(u).into_iter().flatten() {
            if !dist.contains_key(v) {
                dist.insert(v.clone(), d + 1);
                queue.push_back((v, d + 1));
            }
        }
    }
    Ok(dist)
}
