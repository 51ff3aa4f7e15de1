//! Monte Carlo exposure machinery: the replicate feature tensor, partitions of
//! the feature cube, smoothed inclusion probabilities and the positivity check.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::{self, AssignmentVector, Design};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::motifs::{normalize, Census, FeatureMatrix, MissingPolicy, MotifCatalog, Retention};

const CACHE_MAGIC: &[u8; 4] = b"CNMX";
const CACHE_VERSION: u32 = 1;
const FIXED16_SCALE: f64 = 65535.0;

/// Storage precision of tensor entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Quantization {
    /// 16-bit fixed point on [0,1]; absolute error below 1e-5.
    Fixed16,
    Full,
}

impl Quantization {
    /// Maps a value onto the representable grid. Observed rows and thresholds
    /// go through the same map as tensor entries so comparisons agree.
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Quantization::Fixed16 => encode16(x) as f64 / FIXED16_SCALE,
            Quantization::Full => x,
        }
    }

    pub fn apply_matrix(self, fm: &FeatureMatrix) -> FeatureMatrix {
        FeatureMatrix {
            columns: fm.columns.clone(),
            nodes: fm.nodes.clone(),
            data: fm.data.iter().map(|&x| self.apply(x)).collect(),
        }
    }

    fn code(self) -> u8 {
        match self {
            Quantization::Fixed16 => 16,
            Quantization::Full => 64,
        }
    }
}

#[inline]
fn encode16(x: f64) -> u16 {
    (x.clamp(0.0, 1.0) * FIXED16_SCALE).round() as u16
}

#[derive(Debug, Clone, PartialEq)]
enum Storage {
    Fixed16(Vec<u16>),
    Full(Vec<f64>),
}

/// `N × R × (m+1)` tensor of replicate feature rows, node-major: the `R` rows
/// of one observation are contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateFeatures {
    columns: Vec<String>,
    nodes: Vec<usize>,
    n_reps: usize,
    storage: Storage,
}

impl ReplicateFeatures {
    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    /// Graph id of each observation.
    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn n_obs(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_reps(&self) -> usize {
        self.n_reps
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn quantization(&self) -> Quantization {
        match self.storage {
            Storage::Fixed16(_) => Quantization::Fixed16,
            Storage::Full(_) => Quantization::Full,
        }
    }

    #[inline]
    fn offset(&self, i: usize, r: usize, c: usize) -> usize {
        (i * self.n_reps + r) * self.columns.len() + c
    }

    #[inline]
    pub fn value(&self, i: usize, r: usize, c: usize) -> f64 {
        let o = self.offset(i, r, c);
        match &self.storage {
            Storage::Fixed16(v) => v[o] as f64 / FIXED16_SCALE,
            Storage::Full(v) => v[o],
        }
    }

    /// Replicate row `r` of observation `i`.
    pub fn row(&self, i: usize, r: usize) -> Vec<f64> {
        (0..self.n_cols()).map(|c| self.value(i, r, c)).collect()
    }

    /// Writes column `c` of observation `i` for the given replicates into `out`.
    pub fn gather(&self, i: usize, c: usize, reps: &[u16], out: &mut Vec<f64>) {
        out.clear();
        let m = self.columns.len();
        let base = i * self.n_reps * m + c;
        match &self.storage {
            Storage::Fixed16(v) => {
                out.extend(reps.iter().map(|&r| v[base + r as usize * m] as f64 / FIXED16_SCALE))
            }
            Storage::Full(v) => out.extend(reps.iter().map(|&r| v[base + r as usize * m])),
        }
    }

    /// Replicate slice `r` as a feature matrix.
    pub fn slice(&self, r: usize) -> FeatureMatrix {
        let mut data = Vec::with_capacity(self.n_obs() * self.n_cols());
        for i in 0..self.n_obs() {
            data.extend(self.row(i, r));
        }
        FeatureMatrix {
            columns: self.columns.clone(),
            nodes: self.nodes.clone(),
            data,
        }
    }

    /// Builds the tensor from explicit assignment vectors (one per replicate).
    pub fn from_assignments(
        g: &Graph,
        census: &Census,
        retention: &Retention,
        assignments: &[AssignmentVector],
        quant: Quantization,
    ) -> Result<Self> {
        let n_reps = assignments.len();
        if n_reps == 0 || n_reps > u16::MAX as usize {
            return Err(Error::InvalidParameter(format!(
                "replicate count must be in 1..=65535, got {n_reps}"
            )));
        }
        for z in assignments {
            if z.len() != g.n_nodes() {
                return Err(Error::LengthMismatch {
                    expected: g.n_nodes(),
                    got: z.len(),
                });
            }
        }
        let m = retention.n_columns();
        let block = n_reps * m;
        let fill = |i: usize, out: &mut [f64], scratch: &mut Vec<[u32; 2]>| {
            let node = retention.nodes[i];
            for (r, z) in assignments.iter().enumerate() {
                let counts = census.label_ego(g, node, z.as_slice(), scratch);
                let v = normalize(&counts, &retention.features);
                let row = &mut out[r * m..(r + 1) * m];
                row[0] = z.0[node] as f64;
                row[1..].copy_from_slice(&v.x);
            }
        };
        let n_obs = retention.nodes.len();
        let storage = match quant {
            Quantization::Full => {
                let mut data = vec![0.0; n_obs * block];
                data.par_chunks_mut(block)
                    .enumerate()
                    .for_each_init(Vec::new, |scratch, (i, out)| fill(i, out, scratch));
                Storage::Full(data)
            }
            Quantization::Fixed16 => {
                let mut data = vec![0u16; n_obs * block];
                data.par_chunks_mut(block).enumerate().for_each_init(
                    || (Vec::new(), vec![0.0; block]),
                    |(scratch, tmp), (i, out)| {
                        fill(i, tmp, scratch);
                        for (o, &x) in out.iter_mut().zip(tmp.iter()) {
                            *o = encode16(x);
                        }
                    },
                );
                Storage::Fixed16(data)
            }
        };
        Ok(ReplicateFeatures {
            columns: retention.column_names(),
            nodes: retention.nodes.clone(),
            n_reps,
            storage,
        })
    }

    pub fn write_cache<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(CACHE_MAGIC)?;
        w.write_u32::<LittleEndian>(CACHE_VERSION)?;
        w.write_u64::<LittleEndian>(self.n_obs() as u64)?;
        w.write_u64::<LittleEndian>(self.n_reps as u64)?;
        w.write_u32::<LittleEndian>(self.n_cols() as u32)?;
        for name in &self.columns {
            w.write_u32::<LittleEndian>(name.len() as u32)?;
            w.write_all(name.as_bytes())?;
        }
        w.write_u8(self.quantization().code())?;
        for &node in &self.nodes {
            w.write_u64::<LittleEndian>(node as u64)?;
        }
        match &self.storage {
            Storage::Fixed16(v) => {
                for &x in v {
                    w.write_u16::<LittleEndian>(x)?;
                }
            }
            Storage::Full(v) => {
                for &x in v {
                    w.write_f64::<LittleEndian>(x)?;
                }
            }
        }
        Ok(())
    }

    pub fn read_cache<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CACHE_MAGIC {
            return Err(Error::Cache("bad magic".into()));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != CACHE_VERSION {
            return Err(Error::Cache(format!("unsupported version {version}")));
        }
        let n_obs = r.read_u64::<LittleEndian>()? as usize;
        let n_reps = r.read_u64::<LittleEndian>()? as usize;
        let n_cols = r.read_u32::<LittleEndian>()? as usize;
        let mut columns = Vec::with_capacity(n_cols);
        for _ in 0..n_cols {
            let len = r.read_u32::<LittleEndian>()? as usize;
            let mut buf = vec![0u8; len];
            r.read_exact(&mut buf)?;
            columns.push(String::from_utf8(buf).map_err(|e| Error::Cache(e.to_string()))?);
        }
        let quant = match r.read_u8()? {
            16 => Quantization::Fixed16,
            64 => Quantization::Full,
            other => return Err(Error::Cache(format!("unknown quantization code {other}"))),
        };
        let mut nodes = Vec::with_capacity(n_obs);
        for _ in 0..n_obs {
            nodes.push(r.read_u64::<LittleEndian>()? as usize);
        }
        let len = n_obs * n_reps * n_cols;
        let storage = match quant {
            Quantization::Fixed16 => {
                let mut v = vec![0u16; len];
                r.read_u16_into::<LittleEndian>(&mut v)?;
                Storage::Fixed16(v)
            }
            Quantization::Full => {
                let mut v = vec![0f64; len];
                r.read_f64_into::<LittleEndian>(&mut v)?;
                Storage::Full(v)
            }
        };
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(Error::Cache("trailing bytes after payload".into()));
        }
        Ok(ReplicateFeatures {
            columns,
            nodes,
            n_reps,
            storage,
        })
    }
}

/// Observed feature rows for a realized assignment, quantized the same way
/// as replicate entries so observed values and tensor values compare exactly.
pub fn observed_features(
    g: &Graph,
    census: &Census,
    retention: &Retention,
    z: &AssignmentVector,
    quant: Quantization,
) -> Result<FeatureMatrix> {
    let one = ReplicateFeatures::from_assignments(g, census, retention, std::slice::from_ref(z), quant)?;
    Ok(one.slice(0))
}

/// Draws `reps` assignments under `design` and builds the replicate tensor.
/// The census and the missing-data decision are made once from structure
/// alone, so every replicate shares the same rows and columns.
pub fn replicate_features(
    g: &Graph,
    design: &Design,
    catalog: &MotifCatalog,
    policy: MissingPolicy,
    reps: usize,
    seed: u64,
    quant: Quantization,
) -> Result<(ReplicateFeatures, Retention)> {
    let census = Census::new(g, catalog);
    let retention = Retention::decide(
        &(0..g.n_nodes()).map(|i| *census.unlabeled(i)).collect::<Vec<_>>(),
        catalog,
        policy,
    )?;
    let zs = assignment::draw_replicates(design, g.n_nodes(), reps, seed)?;
    let tensor = ReplicateFeatures::from_assignments(g, &census, &retention, &zs, quant)?;
    Ok((tensor, retention))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    /// `x <= threshold`
    Le,
    /// `x > threshold`
    Gt,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub axis: usize,
    pub threshold: f64,
    pub side: Side,
}

impl Constraint {
    #[inline]
    pub fn holds(&self, x: f64) -> bool {
        match self.side {
            Side::Le => x <= self.threshold,
            Side::Gt => x > self.threshold,
        }
    }
}

/// Axis-aligned box in the feature cube: a conjunction of threshold
/// constraints. Kept canonical: sorted by axis, at most one `Gt` (lower) and
/// one `Le` (upper) bound per axis.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    constraints: Vec<Constraint>,
}

impl Partition {
    pub fn full() -> Self {
        Partition::default()
    }

    pub fn from_constraints<I: IntoIterator<Item = Constraint>>(cs: I) -> Result<Self> {
        cs.into_iter().try_fold(Partition::full(), |p, c| p.with(c))
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    /// Refines the partition with one more constraint.
    pub fn with(&self, c: Constraint) -> Result<Self> {
        if !c.threshold.is_finite() {
            return Err(Error::InvalidParameter("non-finite threshold".into()));
        }
        let mut out = self.constraints.clone();
        match out.iter_mut().find(|o| o.axis == c.axis && o.side == c.side) {
            Some(existing) => {
                existing.threshold = match c.side {
                    Side::Le => existing.threshold.min(c.threshold),
                    Side::Gt => existing.threshold.max(c.threshold),
                }
            }
            None => out.push(c),
        }
        out.sort_by(|a, b| {
            (a.axis, a.side == Side::Le).cmp(&(b.axis, b.side == Side::Le))
        });
        let p = Partition { constraints: out };
        let (lo, hi) = p.bounds(c.axis);
        if let (Some(lo), Some(hi)) = (lo, hi) {
            if lo >= hi {
                return Err(Error::InvalidParameter(format!(
                    "empty partition on axis {}: ({lo}, {hi}]",
                    c.axis
                )));
            }
        }
        Ok(p)
    }

    /// Exclusive lower and inclusive upper bound on `axis`.
    pub fn bounds(&self, axis: usize) -> (Option<f64>, Option<f64>) {
        let mut lo = None;
        let mut hi = None;
        for c in self.constraints.iter().filter(|c| c.axis == axis) {
            match c.side {
                Side::Gt => lo = Some(c.threshold),
                Side::Le => hi = Some(c.threshold),
            }
        }
        (lo, hi)
    }

    #[inline]
    pub fn contains(&self, row: &[f64]) -> bool {
        self.constraints.iter().all(|c| c.holds(row[c.axis]))
    }

    pub fn max_axis(&self) -> Option<usize> {
        self.constraints.iter().map(|c| c.axis).max()
    }

    fn check_axes(&self, n_cols: usize) -> Result<()> {
        match self.max_axis() {
            Some(a) if a >= n_cols => Err(Error::UnknownAxis(a.to_string())),
            _ => Ok(()),
        }
    }
}

/// Indicator of partition membership for each row.
pub fn membership(rows: &FeatureMatrix, part: &Partition) -> Result<Vec<bool>> {
    part.check_axes(rows.n_cols())?;
    Ok((0..rows.n_rows()).map(|r| part.contains(rows.row(r))).collect())
}

/// Smoothed Monte Carlo inclusion probabilities `(hits + 1) / (R + 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InclusionProbabilities {
    pub hits: Vec<u32>,
    pub n_reps: usize,
}

impl InclusionProbabilities {
    pub fn from_hits(hits: Vec<u32>, n_reps: usize) -> Self {
        InclusionProbabilities { hits, n_reps }
    }

    #[inline]
    pub fn pi(&self, i: usize) -> f64 {
        smoothed(self.hits[i], self.n_reps)
    }

    pub fn to_vec(&self) -> Vec<f64> {
        (0..self.hits.len()).map(|i| self.pi(i)).collect()
    }

    pub fn len(&self) -> usize {
        self.hits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }
}

#[inline]
pub fn smoothed(hits: u32, n_reps: usize) -> f64 {
    (hits as f64 + 1.0) / (n_reps as f64 + 1.0)
}

pub fn inclusion_prob(repl: &ReplicateFeatures, part: &Partition) -> Result<InclusionProbabilities> {
    part.check_axes(repl.n_cols())?;
    let hits = (0..repl.n_obs())
        .into_par_iter()
        .map(|i| {
            (0..repl.n_reps())
                .filter(|&r| {
                    part.constraints()
                        .iter()
                        .all(|c| c.holds(repl.value(i, r, c.axis)))
                })
                .count() as u32
        })
        .collect();
    Ok(InclusionProbabilities::from_hits(hits, repl.n_reps()))
}

/// Default `ε`: flags exactly the observations that no replicate reached.
pub fn default_epsilon(n_reps: usize) -> f64 {
    1.0 / (n_reps as f64 + 1.0) + 1e-12
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositivityResult {
    pub pass: bool,
    pub violations: usize,
    pub fraction: f64,
}

/// Positivity: the number of observations in `universe` with `π̂ ≤ ε` must not
/// exceed `δ·|universe|`. `universe = None` means every observation.
pub fn positivity_check(
    pi: &InclusionProbabilities,
    eps: f64,
    delta: f64,
    universe: Option<&[usize]>,
) -> PositivityResult {
    let (violations, size) = match universe {
        Some(u) => (u.iter().filter(|&&i| pi.pi(i) <= eps).count(), u.len()),
        None => ((0..pi.len()).filter(|&i| pi.pi(i) <= eps).count(), pi.len()),
    };
    PositivityResult {
        pass: violations as f64 <= delta * size as f64,
        violations,
        fraction: if size == 0 { 0.0 } else { violations as f64 / size as f64 },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assignment::{draw, ring_clusters};
    use crate::motifs::{feature_matrix, interference_vector, label_counts, MotifKind};
    use crate::simlab::{watts_strogatz, WsConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ws(n: usize, seed: u64) -> Graph {
        watts_strogatz(&WsConfig { n, k: 10, beta: 0.5, seed }).unwrap()
    }

    fn le(axis: usize, t: f64) -> Constraint {
        Constraint { axis, threshold: t, side: Side::Le }
    }

    fn gt(axis: usize, t: f64) -> Constraint {
        Constraint { axis, threshold: t, side: Side::Gt }
    }

    #[test]
    fn single_observed_replicate_equals_feature_matrix() {
        let g = ws(200, 1);
        let cat = MotifCatalog::full();
        let z = draw(&Design::IndependentBernoulli { p: 0.5 }, 200, 3).unwrap();
        let counts = label_counts(&g, &cat, &z).unwrap();
        let (vecs, ret) = interference_vector(&counts, MissingPolicy::DropNodes).unwrap();
        let fm = feature_matrix(&z, &vecs, &ret).unwrap();
        let census = Census::new(&g, &cat);
        let t = ReplicateFeatures::from_assignments(&g, &census, &ret, &[z], Quantization::Full).unwrap();
        assert_eq!(t.slice(0), fm);
    }

    #[test]
    fn partition_canonicalizes_and_rejects_empty() {
        let p = Partition::from_constraints([le(2, 0.8), gt(2, 0.1), le(2, 0.5), gt(0, 0.0)]).unwrap();
        assert_eq!(p.constraints().len(), 3);
        assert_eq!(p.bounds(2), (Some(0.1), Some(0.5)));
        assert!(p.with(gt(2, 0.5)).is_err());
        assert!(p.with(le(2, 0.1)).is_err());
    }

    #[test]
    fn membership_rules() {
        let fm = FeatureMatrix {
            columns: vec!["Z".into(), "2-0".into(), "2-1".into()],
            nodes: (0..6).collect(),
            data: (0..6)
                .flat_map(|i| [(i % 2) as f64, 1.0 - i as f64 / 5.0, i as f64 / 5.0])
                .collect(),
        };
        assert!(membership(&fm, &Partition::full()).unwrap().iter().all(|&b| b));
        let treated = membership(&fm, &Partition::full().with(gt(0, 0.5)).unwrap()).unwrap();
        assert_eq!(treated, vec![false, true, false, true, false, true]);
        // boundary value goes to the <= side
        let m = membership(&fm, &Partition::full().with(le(2, 0.4)).unwrap()).unwrap();
        assert_eq!(m, vec![true, true, true, false, false, false]);
        assert!(matches!(
            membership(&fm, &Partition::full().with(le(3, 0.4)).unwrap()),
            Err(Error::UnknownAxis(_))
        ));
    }

    #[test]
    fn membership_matches_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let n_cols = 4;
            let data: Vec<f64> = (0..100 * n_cols).map(|_| rng.random::<f64>()).collect();
            let fm = FeatureMatrix {
                columns: (0..n_cols).map(|c| c.to_string()).collect(),
                nodes: (0..100).collect(),
                data,
            };
            let mut cs = Vec::new();
            for _ in 0..rng.random_range(0..4) {
                let axis = rng.random_range(0..n_cols);
                let t = rng.random::<f64>();
                cs.push(if rng.random_bool(0.5) { le(axis, t) } else { gt(axis, t) });
            }
            let Ok(p) = Partition::from_constraints(cs.clone()) else { continue };
            let got = membership(&fm, &p).unwrap();
            for r in 0..100 {
                let want = cs.iter().all(|c| match c.side {
                    Side::Le => fm.value(r, c.axis) <= c.threshold,
                    Side::Gt => fm.value(r, c.axis) > c.threshold,
                });
                assert_eq!(got[r], want);
            }
        }
    }

    #[test]
    fn full_cube_probability_one() {
        let g = ws(150, 2);
        let (t, _) = replicate_features(
            &g,
            &Design::IndependentBernoulli { p: 0.5 },
            &MotifCatalog::full(),
            MissingPolicy::default(),
            20,
            1,
            Quantization::Fixed16,
        )
        .unwrap();
        let pi = inclusion_prob(&t, &Partition::full()).unwrap();
        assert!(pi.to_vec().iter().all(|&p| p == 1.0));
        let check = positivity_check(&pi, 0.999, 0.0, None);
        assert!(check.pass);
    }

    #[test]
    fn pure_z_partition_near_half() {
        let g = ws(300, 3);
        let (t, _) = replicate_features(
            &g,
            &Design::IndependentBernoulli { p: 0.5 },
            &MotifCatalog::dyad_only(),
            MissingPolicy::default(),
            1000,
            8,
            Quantization::Fixed16,
        )
        .unwrap();
        let pi = inclusion_prob(&t, &Partition::full().with(gt(0, 0.5)).unwrap()).unwrap();
        assert!(pi.to_vec().iter().all(|&p| (p - 0.5).abs() < 0.05));
    }

    #[test]
    fn open_pair_both_treated_probability() {
        // ego 0 with two non-adjacent alters: P(3o-2 = 1) = 1/4
        let g = Graph::from_edges(3, [(0, 1), (0, 2)]).unwrap();
        let cat = MotifCatalog::new(&[MotifKind::Dyad, MotifKind::OpenTriad]).unwrap();
        let reps = 400;
        let (t, ret) = replicate_features(
            &g,
            &Design::IndependentBernoulli { p: 0.5 },
            &cat,
            MissingPolicy::DropNodes,
            reps,
            21,
            Quantization::Full,
        )
        .unwrap();
        let axis = ret.column_names().iter().position(|c| c == "3o-2").unwrap();
        let pi = inclusion_prob(&t, &Partition::full().with(gt(axis, 0.5)).unwrap()).unwrap();
        let ego = t.nodes().iter().position(|&n| n == 0).unwrap();
        let tol = 3.0 * (0.25f64 * 0.75 / reps as f64).sqrt();
        assert!((pi.pi(ego) - 0.25).abs() <= tol, "{}", pi.pi(ego));
    }

    #[test]
    fn positivity_fails_on_unreachable_fraction() {
        let mut hits = vec![5u32; 100];
        for h in hits.iter_mut().take(10) {
            *h = 0;
        }
        let pi = InclusionProbabilities::from_hits(hits, 50);
        let res = positivity_check(&pi, default_epsilon(50), 0.05, None);
        assert!(!res.pass);
        assert_eq!(res.violations, 10);
        assert!((res.fraction - 0.10).abs() < 1e-12);
        assert!(positivity_check(&pi, default_epsilon(50), 0.10, None).pass);
    }

    #[test]
    fn clustered_ego_cannot_be_treated_with_control_alters() {
        // 3 isolated 5-cliques, each its own cluster: a treated ego always has
        // all alters treated, so {Z=1, 2-1 <= 0.01} is unreachable.
        let mut edges = Vec::new();
        for c in 0..3 {
            for a in 0..5 {
                for b in a + 1..5 {
                    edges.push((c * 5 + a, c * 5 + b));
                }
            }
        }
        let g = Graph::from_edges(15, edges).unwrap();
        let design = Design::ClusterBernoulli { cluster_of: ring_clusters(15, 5), p: 0.5 };
        let (t, ret) = replicate_features(
            &g,
            &design,
            &MotifCatalog::dyad_only(),
            MissingPolicy::default(),
            60,
            4,
            Quantization::Fixed16,
        )
        .unwrap();
        let axis = ret.column_names().iter().position(|c| c == "2-1").unwrap();
        let part = Partition::from_constraints([gt(0, 0.0), le(axis, 0.01)]).unwrap();
        let pi = inclusion_prob(&t, &part).unwrap();
        assert!(pi.to_vec().iter().all(|&p| p == 1.0 / 61.0));
        let res = positivity_check(&pi, default_epsilon(60), 0.01, None);
        assert!(!res.pass);
        assert_eq!(res.violations, 15);
    }

    #[test]
    fn adding_constraints_never_increases_pi() {
        let g = ws(200, 4);
        let (t, _) = replicate_features(
            &g,
            &Design::IndependentBernoulli { p: 0.5 },
            &MotifCatalog::full(),
            MissingPolicy::default(),
            40,
            2,
            Quantization::Fixed16,
        )
        .unwrap();
        let p1 = Partition::full().with(gt(0, 0.0)).unwrap();
        let p2 = p1.with(le(2, 0.5)).unwrap();
        let p3 = p2.with(gt(5, 0.2)).unwrap();
        let a = inclusion_prob(&t, &p1).unwrap();
        let b = inclusion_prob(&t, &p2).unwrap();
        let c = inclusion_prob(&t, &p3).unwrap();
        for i in 0..t.n_obs() {
            assert!(b.pi(i) <= a.pi(i) && c.pi(i) <= b.pi(i));
            assert!(c.pi(i) >= 1.0 / 41.0);
        }
    }

    #[test]
    fn cache_round_trip_is_byte_exact() {
        let g = ws(120, 6);
        for quant in [Quantization::Fixed16, Quantization::Full] {
            let (t, _) = replicate_features(
                &g,
                &Design::IndependentBernoulli { p: 0.5 },
                &MotifCatalog::full(),
                MissingPolicy::default(),
                7,
                3,
                quant,
            )
            .unwrap();
            let mut buf = Vec::new();
            t.write_cache(&mut buf).unwrap();
            assert_eq!(&buf[..4], b"CNMX");
            let back = ReplicateFeatures::read_cache(buf.as_slice()).unwrap();
            assert_eq!(back, t);
            let mut again = Vec::new();
            back.write_cache(&mut again).unwrap();
            assert_eq!(buf, again);
            assert!(ReplicateFeatures::read_cache(&buf[..buf.len() - 1]).is_err());
        }
    }

    #[test]
    fn quantization_error_is_small() {
        for k in 0..=1000 {
            let x = k as f64 / 1000.0;
            assert!((Quantization::Fixed16.apply(x) - x).abs() < 1e-4);
        }
        assert_eq!(Quantization::Full.apply(0.123), 0.123);
    }
}
