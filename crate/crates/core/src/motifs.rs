//! Unlabeled and treatment-labeled ego-network motif counts and the
//! normalized interference vectors built from them.
//!
//! Motifs are counted on 1-hop ego networks. A labeled motif `k-t` is an
//! instance of kind `k` with exactly `t` treated alters; the ego's own
//! assignment never enters the label.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::AssignmentVector;
use crate::error::{Error, Result};
use crate::graph::Graph;

/// Number of labeled slots across all kinds (2 + 3 + 3 + 4).
pub const N_LABEL_SLOTS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MotifKind {
    /// Ego plus one alter.
    Dyad,
    /// Ego plus two non-adjacent alters.
    OpenTriad,
    /// Ego plus two adjacent alters.
    ClosedTriad,
    /// Ego plus three pairwise non-adjacent alters.
    OpenTetrad,
}

impl MotifKind {
    pub const ALL: [MotifKind; 4] = [
        MotifKind::Dyad,
        MotifKind::OpenTriad,
        MotifKind::ClosedTriad,
        MotifKind::OpenTetrad,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn alters(self) -> usize {
        match self {
            MotifKind::Dyad => 1,
            MotifKind::OpenTriad | MotifKind::ClosedTriad => 2,
            MotifKind::OpenTetrad => 3,
        }
    }

    /// First labeled slot of this kind in canonical order.
    pub fn slot_offset(self) -> usize {
        match self {
            MotifKind::Dyad => 0,
            MotifKind::OpenTriad => 2,
            MotifKind::ClosedTriad => 5,
            MotifKind::OpenTetrad => 8,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            MotifKind::Dyad => "2",
            MotifKind::OpenTriad => "3o",
            MotifKind::ClosedTriad => "3c",
            MotifKind::OpenTetrad => "4o",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        MotifKind::ALL.into_iter().find(|k| k.tag() == tag)
    }
}

/// A labeled motif: `kind` with `treated` treated alters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Feature {
    pub kind: MotifKind,
    pub treated: u8,
}

impl Feature {
    pub fn slot(self) -> usize {
        self.kind.slot_offset() + self.treated as usize
    }

    pub fn is_fully_treated(self) -> bool {
        self.treated as usize == self.kind.alters()
    }

    pub fn is_fully_control(self) -> bool {
        self.treated == 0
    }

    pub fn parse(name: &str) -> Option<Self> {
        let (tag, t) = name.rsplit_once('-')?;
        let kind = MotifKind::from_tag(tag)?;
        let treated: u8 = t.parse().ok()?;
        (treated as usize <= kind.alters()).then_some(Feature { kind, treated })
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.kind.tag(), self.treated)
    }
}

/// Ordered set of motif kinds to count. Dyads are always included.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MotifCatalog {
    kinds: Vec<MotifKind>,
}

impl MotifCatalog {
    pub fn new(kinds: &[MotifKind]) -> Result<Self> {
        if !kinds.contains(&MotifKind::Dyad) {
            return Err(Error::InvalidParameter(
                "motif catalog must include dyads".into(),
            ));
        }
        let mut kinds = kinds.to_vec();
        kinds.sort();
        kinds.dedup();
        Ok(MotifCatalog { kinds })
    }

    pub fn full() -> Self {
        MotifCatalog {
            kinds: MotifKind::ALL.to_vec(),
        }
    }

    pub fn dyad_only() -> Self {
        MotifCatalog {
            kinds: vec![MotifKind::Dyad],
        }
    }

    pub fn dyad_triad() -> Self {
        MotifCatalog {
            kinds: vec![MotifKind::Dyad, MotifKind::OpenTriad, MotifKind::ClosedTriad],
        }
    }

    pub fn kinds(&self) -> &[MotifKind] {
        &self.kinds
    }

    pub fn contains(&self, kind: MotifKind) -> bool {
        self.kinds.contains(&kind)
    }

    /// Labeled features of the catalog in canonical order.
    pub fn features(&self) -> Vec<Feature> {
        self.kinds
            .iter()
            .flat_map(|&kind| {
                (0..=kind.alters() as u8).map(move |treated| Feature { kind, treated })
            })
            .collect()
    }
}

/// Motif counts for one ego. Unlabeled counts are indexed by
/// [`MotifKind::index`], labeled counts by [`Feature::slot`]. Kinds outside the
/// catalog stay zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EgoCounts {
    pub unlabeled: [u64; 4],
    pub labeled: [u64; N_LABEL_SLOTS],
}

impl EgoCounts {
    pub fn unlabeled(&self, kind: MotifKind) -> u64 {
        self.unlabeled[kind.index()]
    }

    pub fn labeled(&self, f: Feature) -> u64 {
        self.labeled[f.slot()]
    }

    pub fn degree(&self) -> u64 {
        self.unlabeled[MotifKind::Dyad.index()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotifCounts {
    pub catalog: MotifCatalog,
    pub egos: Vec<EgoCounts>,
}

/// Structure-only pass over every ego network. Holds the unlabeled counts and
/// the alter edges / alter triangles (as local alter positions) needed to
/// label motifs under any assignment without touching the graph again.
#[derive(Debug, Clone)]
pub struct Census {
    catalog: MotifCatalog,
    unlabeled: Vec<[u64; 4]>,
    edge_offsets: Vec<usize>,
    edges: Vec<(u32, u32)>,
    tri_offsets: Vec<usize>,
    triangles: Vec<[u32; 3]>,
}

struct EgoStructure {
    unlabeled: [u64; 4],
    edges: Vec<(u32, u32)>,
    triangles: Vec<[u32; 3]>,
}

#[inline]
fn choose2(n: u64) -> u64 {
    if n < 2 {
        0
    } else {
        n * (n - 1) / 2
    }
}

#[inline]
fn choose3(n: u64) -> u64 {
    if n < 3 {
        0
    } else {
        n * (n - 1) * (n - 2) / 6
    }
}

fn ego_structure(g: &Graph, ego: usize, want_tetrads: bool) -> EgoStructure {
    let alters = g.neighbors(ego);
    let d = alters.len() as u64;
    let mut edges = Vec::new();
    g.for_each_alter_edge(alters, |a, b| edges.push((a as u32, b as u32)));

    let mut unlabeled = [0u64; 4];
    let closed = edges.len() as u64;
    unlabeled[MotifKind::Dyad.index()] = d;
    unlabeled[MotifKind::ClosedTriad.index()] = closed;
    unlabeled[MotifKind::OpenTriad.index()] = choose2(d) - closed;

    let mut triangles = Vec::new();
    if want_tetrads {
        // Local alter adjacency, sorted because edges come out lexicographic.
        let mut adj: Vec<Vec<u32>> = vec![Vec::new(); alters.len()];
        for &(a, b) in &edges {
            adj[a as usize].push(b);
            adj[b as usize].push(a);
        }
        for list in adj.iter_mut() {
            list.sort_unstable();
        }
        for &(a, b) in &edges {
            let (la, lb) = (&adj[a as usize], &adj[b as usize]);
            let (mut p, mut q) = (0, 0);
            while p < la.len() && q < lb.len() {
                match la[p].cmp(&lb[q]) {
                    std::cmp::Ordering::Less => p += 1,
                    std::cmp::Ordering::Greater => q += 1,
                    std::cmp::Ordering::Equal => {
                        if la[p] > b {
                            triangles.push([a, b, la[p]]);
                        }
                        p += 1;
                        q += 1;
                    }
                }
            }
        }
        // Triples with no alter edge, by inclusion-exclusion over the alter
        // edges they contain: edges, then edge pairs (wedges), then triangles.
        let with_edge = closed * d.saturating_sub(2);
        let wedges: u64 = adj.iter().map(|l| choose2(l.len() as u64)).sum();
        let tri = triangles.len() as u64;
        unlabeled[MotifKind::OpenTetrad.index()] = choose3(d) + wedges - with_edge - tri;
    }
    EgoStructure {
        unlabeled,
        edges,
        triangles,
    }
}

impl Census {
    pub fn new(g: &Graph, catalog: &MotifCatalog) -> Self {
        let want_tetrads = catalog.contains(MotifKind::OpenTetrad);
        let per_ego: Vec<EgoStructure> = (0..g.n_nodes())
            .into_par_iter()
            .map(|i| ego_structure(g, i, want_tetrads))
            .collect();

        let mut unlabeled = Vec::with_capacity(per_ego.len());
        let mut edge_offsets = vec![0];
        let mut tri_offsets = vec![0];
        let mut edges = Vec::new();
        let mut triangles = Vec::new();
        for s in per_ego {
            let mut u = s.unlabeled;
            for kind in MotifKind::ALL {
                if !catalog.contains(kind) {
                    u[kind.index()] = 0;
                }
            }
            unlabeled.push(u);
            edges.extend(s.edges);
            triangles.extend(s.triangles);
            edge_offsets.push(edges.len());
            tri_offsets.push(triangles.len());
        }
        Census {
            catalog: catalog.clone(),
            unlabeled,
            edge_offsets,
            edges,
            tri_offsets,
            triangles,
        }
    }

    pub fn catalog(&self) -> &MotifCatalog {
        &self.catalog
    }

    pub fn n_egos(&self) -> usize {
        self.unlabeled.len()
    }

    pub fn unlabeled(&self, ego: usize) -> &[u64; 4] {
        &self.unlabeled[ego]
    }

    /// Alter edges of `ego` as pairs of positions into `g.neighbors(ego)`.
    pub fn alter_edges(&self, ego: usize) -> &[(u32, u32)] {
        &self.edges[self.edge_offsets[ego]..self.edge_offsets[ego + 1]]
    }

    /// Labels the motifs of one ego under assignment `z` (indexed by graph id).
    /// `scratch` must have room for the ego's degree.
    pub fn label_ego(&self, g: &Graph, ego: usize, z: &[u8], scratch: &mut Vec<[u32; 2]>) -> EgoCounts {
        let alters = g.neighbors(ego);
        let unlabeled = self.unlabeled[ego];
        let mut labeled = [0u64; N_LABEL_SLOTS];
        let d = alters.len() as u64;
        let treated = alters.iter().filter(|&&a| z[a as usize] != 0).count() as u64;
        let control = d - treated;

        labeled[0] = control;
        labeled[1] = treated;

        let edges = self.alter_edges(ego);
        let zl = |a: u32| z[alters[a as usize] as usize] as usize;
        let triads = self.catalog.contains(MotifKind::OpenTriad)
            || self.catalog.contains(MotifKind::ClosedTriad);
        if triads {
            let mut closed = [0u64; 3];
            for &(a, b) in edges {
                closed[zl(a) + zl(b)] += 1;
            }
            let all_pairs = [choose2(control), control * treated, choose2(treated)];
            if self.catalog.contains(MotifKind::OpenTriad) {
                let o = MotifKind::OpenTriad.slot_offset();
                for t in 0..3 {
                    labeled[o + t] = all_pairs[t] - closed[t];
                }
            }
            if self.catalog.contains(MotifKind::ClosedTriad) {
                let o = MotifKind::ClosedTriad.slot_offset();
                labeled[o..o + 3].copy_from_slice(&closed);
            }
        }

        if self.catalog.contains(MotifKind::OpenTetrad) {
            let (c, t) = (control as i64, treated as i64);
            let mut count = [
                choose3(control) as i64,
                (choose2(control) * treated) as i64,
                (control * choose2(treated)) as i64,
                choose3(treated) as i64,
            ];
            scratch.clear();
            scratch.resize(alters.len(), [0, 0]);
            for &(a, b) in edges {
                let te = (zl(a) + zl(b)) as i64;
                // third alter control / treated
                count[te as usize] -= c - (2 - te);
                count[te as usize + 1] -= t - te;
                scratch[a as usize][zl(b)] += 1;
                scratch[b as usize][zl(a)] += 1;
            }
            for (v, &[cv, tv]) in scratch.iter().enumerate() {
                let base = zl(v as u32);
                count[base] += choose2(cv as u64) as i64;
                count[base + 1] += (cv as i64) * (tv as i64);
                count[base + 2] += choose2(tv as u64) as i64;
            }
            for tri in &self.triangles[self.tri_offsets[ego]..self.tri_offsets[ego + 1]] {
                count[zl(tri[0]) + zl(tri[1]) + zl(tri[2])] -= 1;
            }
            let o = MotifKind::OpenTetrad.slot_offset();
            for (k, &v) in count.iter().enumerate() {
                debug_assert!(v >= 0);
                labeled[o + k] = v as u64;
            }
        }
        if !self.catalog.contains(MotifKind::Dyad) {
            labeled[0] = 0;
            labeled[1] = 0;
        }
        EgoCounts { unlabeled, labeled }
    }
}

/// Structure-only counts per ego (z-independent).
pub fn census(g: &Graph, catalog: &MotifCatalog) -> Vec<[u64; 4]> {
    Census::new(g, catalog).unlabeled
}

/// Labeled and unlabeled motif counts for every ego under assignment `z`.
pub fn label_counts(g: &Graph, catalog: &MotifCatalog, z: &AssignmentVector) -> Result<MotifCounts> {
    let census = Census::new(g, catalog);
    label_counts_with(&census, g, z)
}

pub fn label_counts_with(census: &Census, g: &Graph, z: &AssignmentVector) -> Result<MotifCounts> {
    if z.len() != g.n_nodes() {
        return Err(Error::LengthMismatch {
            expected: g.n_nodes(),
            got: z.len(),
        });
    }
    let egos = (0..g.n_nodes())
        .into_par_iter()
        .map_init(Vec::new, |scratch, i| census.label_ego(g, i, z.as_slice(), scratch))
        .collect();
    Ok(MotifCounts {
        catalog: census.catalog.clone(),
        egos,
    })
}

/// How to handle egos for which a motif kind has zero instances (so its
/// fractions are undefined).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MissingPolicy {
    /// Remove every kind that is undefined for at least one ego.
    DropFeature,
    /// Remove every ego with at least one undefined kind.
    DropNodes,
    /// Per kind: drop the kind when more than `threshold` of egos lack it,
    /// otherwise drop those egos.
    Auto { threshold: f64 },
}

impl Default for MissingPolicy {
    fn default() -> Self {
        MissingPolicy::Auto { threshold: 0.05 }
    }
}

/// Outcome of the missing-data policy: retained features and egos.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Retention {
    pub features: Vec<Feature>,
    /// Graph ids of retained egos, ascending.
    pub nodes: Vec<usize>,
    pub dropped_kinds: Vec<MotifKind>,
    pub dropped_nodes: Vec<usize>,
    /// Fraction of egos with at least one alter for which each catalog kind
    /// is undefined.
    pub undefined_fraction: Vec<(MotifKind, f64)>,
}

impl Retention {
    /// Applies `policy` to structure-only counts. Dyads are never dropped as a
    /// feature; egos without any alter are always dropped.
    pub fn decide(unlabeled: &[[u64; 4]], catalog: &MotifCatalog, policy: MissingPolicy) -> Result<Self> {
        let n = unlabeled.len();
        if n == 0 {
            return Err(Error::Policy("zero nodes".into()));
        }
        let mut kept_kinds = Vec::new();
        let mut dropped_kinds = Vec::new();
        let mut undefined_fraction = Vec::new();
        // Egos without alters are dropped regardless of policy, so they do not
        // count towards feature-level decisions.
        let active: Vec<&[u64; 4]> = unlabeled.iter().filter(|u| u[MotifKind::Dyad.index()] > 0).collect();
        for &kind in catalog.kinds() {
            let undefined = active.iter().filter(|u| u[kind.index()] == 0).count();
            let frac = undefined as f64 / active.len().max(1) as f64;
            undefined_fraction.push((kind, frac));
            let drop_kind = kind != MotifKind::Dyad
                && match policy {
                    MissingPolicy::DropFeature => undefined > 0,
                    MissingPolicy::DropNodes => false,
                    MissingPolicy::Auto { threshold } => frac > threshold,
                };
            if drop_kind {
                dropped_kinds.push(kind);
            } else {
                kept_kinds.push(kind);
            }
        }
        let (nodes, dropped_nodes): (Vec<usize>, Vec<usize>) = (0..n)
            .partition(|&i| kept_kinds.iter().all(|k| unlabeled[i][k.index()] > 0));
        if nodes.is_empty() {
            return Err(Error::Policy("zero nodes".into()));
        }
        let features: Vec<Feature> = catalog
            .features()
            .into_iter()
            .filter(|f| kept_kinds.contains(&f.kind))
            .collect();
        if features.is_empty() {
            return Err(Error::Policy("zero features".into()));
        }
        Ok(Retention {
            features,
            nodes,
            dropped_kinds,
            dropped_nodes,
            undefined_fraction,
        })
    }

    /// Column names: `Z` followed by the retained features.
    pub fn column_names(&self) -> Vec<String> {
        std::iter::once("Z".to_string())
            .chain(self.features.iter().map(|f| f.to_string()))
            .collect()
    }

    pub fn n_columns(&self) -> usize {
        self.features.len() + 1
    }
}

/// Interference vector of one ego over the retained features.
#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceVector {
    pub x: Vec<f64>,
    pub defined: Vec<bool>,
}

/// Normalized fractions `labeled / unlabeled` for every feature; undefined
/// entries are 0 with `defined = false`.
pub fn normalize(counts: &EgoCounts, features: &[Feature]) -> InterferenceVector {
    let mut x = Vec::with_capacity(features.len());
    let mut defined = Vec::with_capacity(features.len());
    for &f in features {
        let total = counts.unlabeled(f.kind);
        if total == 0 {
            x.push(0.0);
            defined.push(false);
        } else {
            x.push(counts.labeled(f) as f64 / total as f64);
            defined.push(true);
        }
    }
    InterferenceVector { x, defined }
}

/// Builds interference vectors for the egos kept by `policy`.
pub fn interference_vector(
    counts: &MotifCounts,
    policy: MissingPolicy,
) -> Result<(Vec<InterferenceVector>, Retention)> {
    let unlabeled: Vec<[u64; 4]> = counts.egos.iter().map(|e| e.unlabeled).collect();
    let retention = Retention::decide(&unlabeled, &counts.catalog, policy)?;
    let vectors = retention
        .nodes
        .iter()
        .map(|&i| normalize(&counts.egos[i], &retention.features))
        .collect();
    Ok((vectors, retention))
}

/// Rows `(Z_i, X_i)` for retained egos, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub columns: Vec<String>,
    /// Graph id of each row.
    pub nodes: Vec<usize>,
    pub data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let m = self.n_cols();
        &self.data[r * m..(r + 1) * m]
    }

    pub fn value(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.n_cols() + c]
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

pub fn feature_matrix(
    z: &AssignmentVector,
    vectors: &[InterferenceVector],
    retention: &Retention,
) -> Result<FeatureMatrix> {
    if vectors.len() != retention.nodes.len() {
        return Err(Error::LengthMismatch {
            expected: retention.nodes.len(),
            got: vectors.len(),
        });
    }
    let mut data = Vec::with_capacity(vectors.len() * retention.n_columns());
    for (v, &node) in vectors.iter().zip(&retention.nodes) {
        if node >= z.len() {
            return Err(Error::NodeOutOfRange { id: node, n: z.len() });
        }
        if v.x.len() != retention.features.len() {
            return Err(Error::LengthMismatch {
                expected: retention.features.len(),
                got: v.x.len(),
            });
        }
        data.push(z.0[node] as f64);
        data.extend_from_slice(&v.x);
    }
    Ok(FeatureMatrix {
        columns: retention.column_names(),
        nodes: retention.nodes.clone(),
        data,
    })
}
