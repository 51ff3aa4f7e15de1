//! Synthetic experiments on Watts-Strogatz graphs under ring-cluster
//! randomization, with known outcome models and recovery diagnostics.

use std::collections::HashSet;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::{self, ring_clusters, AssignmentVector, Design};
use crate::error::{Error, Result};
use crate::estimators::{self, Estimate};
use crate::exposure::{
    inclusion_prob, observed_features, Constraint, Partition, Quantization, ReplicateFeatures, Side,
};
use crate::graph::Graph;
use crate::motifs::{Census, FeatureMatrix, MissingPolicy, MotifCatalog, Retention};
use crate::tree::{self, ExposureTree, HyperParams, Mode, TreeReport};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WsConfig {
    pub n: usize,
    /// Even ring degree.
    pub k: usize,
    pub beta: f64,
    pub seed: u64,
}

impl WsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k >= self.n {
            return Err(Error::InvalidParameter(format!("k = {} must be < n = {}", self.k, self.n)));
        }
        if !self.k.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!("k = {} must be even", self.k)));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::InvalidParameter(format!("beta = {} outside [0,1]", self.beta)));
        }
        Ok(())
    }
}

/// Ring lattice with `k/2` neighbors per side; each lattice edge `(u, u+j)` is
/// rewired with probability `beta` to `(u, w)` for a uniform `w` that is
/// neither `u` nor an existing neighbor. Edge count is preserved.
pub fn watts_strogatz(cfg: &WsConfig) -> Result<Graph> {
    cfg.validate()?;
    let n = cfg.n;
    let mut adj: Vec<HashSet<u32>> = vec![HashSet::with_capacity(cfg.k + 2); n];
    for u in 0..n {
        for j in 1..=cfg.k / 2 {
            let v = (u + j) % n;
            adj[u].insert(v as u32);
            adj[v].insert(u as u32);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for j in 1..=cfg.k / 2 {
        for u in 0..n {
            let v = (u + j) % n;
            if !rng.random_bool(cfg.beta) || adj[u].len() >= n - 1 {
                continue;
            }
            let w = loop {
                let w = rng.random_range(0..n);
                if w != u && !adj[u].contains(&(w as u32)) {
                    break w;
                }
            };
            adj[u].remove(&(v as u32));
            adj[v].remove(&(u as u32));
            adj[u].insert(w as u32);
            adj[w].insert(u as u32);
        }
    }
    let edges = adj
        .iter()
        .enumerate()
        .flat_map(|(u, s)| s.iter().filter(move |&&v| (v as usize) > u).map(move |&v| (u, v as usize)));
    Graph::from_edges(n, edges)
}

/// Mean local clustering coefficient; nodes of degree < 2 count as 0.
pub fn average_clustering(g: &Graph) -> f64 {
    let n = g.n_nodes();
    if n == 0 {
        return 0.0;
    }
    let total: f64 = (0..n)
        .into_par_iter()
        .map(|i| {
            let d = g.degree(i);
            if d < 2 {
                return 0.0;
            }
            let mut closed = 0usize;
            g.for_each_alter_edge(g.neighbors(i), |_, _| closed += 1);
            closed as f64 / (d * (d - 1) / 2) as f64
        })
        .sum();
    total / n as f64
}

/// Number of connected components of the subgraph induced by `subset`, which
/// must consist of neighbors of `ego`.
pub fn structural_diversity(g: &Graph, ego: usize, subset: &[u32]) -> Result<usize> {
    if ego >= g.n_nodes() {
        return Err(Error::NodeOutOfRange { id: ego, n: g.n_nodes() });
    }
    let mut members = subset.to_vec();
    members.sort_unstable();
    members.dedup();
    if let Some(&bad) = members.iter().find(|&&v| !g.has_edge(ego, v as usize)) {
        return Err(Error::NotANeighbor(bad as usize));
    }
    let mut seen = vec![false; members.len()];
    let mut stack = Vec::new();
    let mut components = 0;
    for start in 0..members.len() {
        if seen[start] {
            continue;
        }
        components += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(a) = stack.pop() {
            for (b, flag) in seen.iter_mut().enumerate() {
                if !*flag && g.has_edge(members[a] as usize, members[b] as usize) {
                    *flag = true;
                    stack.push(b);
                }
            }
        }
    }
    Ok(components)
}

/// Outcome model of a synthetic experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dgp {
    /// `0.1·deg + gender + 2·Z·1[x(3c-2) > 0.7] + ε`
    Cutoff,
    /// `0.1·deg + gender + SDT + Z·SDT + ε`, SDT over treated neighbors.
    CausalSd,
    /// `0.1·deg + gender + SD + Z·SD + ε`, SD over all neighbors.
    CorrSd,
    /// `deg + ε`
    Null,
}

impl Dgp {
    pub const ALL: [Dgp; 4] = [Dgp::Cutoff, Dgp::CausalSd, Dgp::CorrSd, Dgp::Null];

    pub fn name(self) -> &'static str {
        match self {
            Dgp::Cutoff => "cutoff",
            Dgp::CausalSd => "causal-sd",
            Dgp::CorrSd => "corr-sd",
            Dgp::Null => "null",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Dgp::ALL.into_iter().find(|d| d.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub dgp: Dgp,
    /// Noise standard deviation.
    pub sigma: f64,
}

impl DgpSpec {
    pub fn new(dgp: Dgp) -> Self {
        DgpSpec { dgp, sigma: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcomes {
    pub y: Vec<f64>,
    pub gender: Vec<u8>,
}

/// Fraction of the ego's closed triads whose two alters are both treated;
/// 0 when the ego has no closed triad.
fn closed_triad_treated_fraction(g: &Graph, ego: usize, z: &[u8]) -> f64 {
    let alters = g.neighbors(ego);
    let (mut total, mut both) = (0usize, 0usize);
    g.for_each_alter_edge(alters, |a, b| {
        total += 1;
        if z[alters[a] as usize] != 0 && z[alters[b] as usize] != 0 {
            both += 1;
        }
    });
    if total == 0 {
        0.0
    } else {
        both as f64 / total as f64
    }
}

/// Outcomes for every node of `g`. Gender and noise depend only on `seed`,
/// so two calls differing only in `z` share them.
pub fn generate_outcomes(g: &Graph, z: &AssignmentVector, spec: &DgpSpec, seed: u64) -> Result<Outcomes> {
    let n = g.n_nodes();
    if z.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: z.len() });
    }
    if !(spec.sigma >= 0.0) || !spec.sigma.is_finite() {
        return Err(Error::InvalidParameter(format!("sigma = {}", spec.sigma)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gender: Vec<u8> = (0..n).map(|_| rng.random_bool(0.5) as u8).collect();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let noise: Vec<f64> = (0..n).map(|_| spec.sigma * normal.sample(&mut rng)).collect();
    let zs = z.as_slice();
    let y = (0..n)
        .into_par_iter()
        .map(|i| {
            let deg = g.degree(i) as f64;
            let zi = zs[i] as f64;
            let base = 0.1 * deg + gender[i] as f64;
            let signal = match spec.dgp {
                Dgp::Cutoff => {
                    let x = closed_triad_treated_fraction(g, i, zs);
                    base + 2.0 * zi * (x > 0.7) as u8 as f64
                }
                Dgp::CausalSd => {
                    let treated: Vec<u32> =
                        g.neighbors(i).iter().copied().filter(|&v| zs[v as usize] != 0).collect();
                    let sdt = structural_diversity(g, i, &treated)? as f64;
                    base + sdt + zi * sdt
                }
                Dgp::CorrSd => {
                    let sd = structural_diversity(g, i, g.neighbors(i))? as f64;
                    base + sd + zi * sd
                }
                Dgp::Null => deg,
            };
            Ok(signal + noise[i])
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(Outcomes { y, gender })
}

/// Full configuration of one synthetic experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    pub k: usize,
    pub beta: f64,
    pub cluster_size: usize,
    pub p: f64,
    #[serde(rename = "R")]
    pub reps: usize,
    pub dgp: Dgp,
    pub sigma: f64,
    pub seed: u64,
    /// Tree hyperparameters; `None` uses the defaults for the retained size.
    pub hyperparams: Option<HyperParams>,
    /// When set, replaces `γ` by this fraction of the training outcomes'
    /// total sum of squares.
    pub gamma_fraction: Option<f64>,
    pub policy: MissingPolicy,
    pub quantization: Quantization,
    pub dyad_baseline: bool,
    pub direct_effects: bool,
}

pub const DESK_SCALE_N: usize = 20_000;
pub const FULL_SCALE_N: usize = 200_000;

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n: DESK_SCALE_N,
            k: 10,
            beta: 0.5,
            cluster_size: 10,
            p: 0.5,
            reps: 100,
            dgp: Dgp::Cutoff,
            sigma: 1.0,
            seed: 0,
            hyperparams: None,
            gamma_fraction: Some(0.04),
            policy: MissingPolicy::DropNodes,
            quantization: Quantization::Fixed16,
            dyad_baseline: true,
            direct_effects: true,
        }
    }
}

/// Independent sub-seeds of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSeeds {
    pub graph: u64,
    pub assignment: u64,
    pub outcomes: u64,
    pub replicates: u64,
    pub honest_split: u64,
    pub tree: u64,
}

impl RunSeeds {
    pub fn derive(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut next = || rng.next_u64();
        RunSeeds {
            graph: next(),
            assignment: next(),
            outcomes: next(),
            replicates: next(),
            honest_split: next(),
            tree: next(),
        }
    }
}

/// A split on an interference axis with the honest estimates of its children.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitCheck {
    pub node: usize,
    pub axis: String,
    pub theta: f64,
    pub left: Option<Estimate>,
    pub right: Option<Estimate>,
    /// |left − right| > 2·sqrt(SE_l² + SE_r²).
    pub significant: bool,
}

/// Shares of the four dyad exposure conditions (ego treated × any neighbor
/// treated) and the all-versus-none contrast they imply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourCondition {
    pub no_exposure: f64,
    pub direct: f64,
    pub indirect: f64,
    pub direct_indirect: f64,
    pub effect: Option<Estimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectSummary {
    pub root_split: Option<(String, f64)>,
    /// Honest τ on the `≤ θ` side.
    pub below: Option<Estimate>,
    /// Honest τ on the `> θ` side.
    pub above: Option<Estimate>,
    pub positivity_violations: usize,
    pub tree: TreeReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub config: ExperimentConfig,
    pub seeds: RunSeeds,
    pub n_edges: usize,
    pub n_obs: usize,
    pub dropped_kinds: Vec<String>,
    pub undefined_fraction: Vec<(String, f64)>,
    pub hyperparams: HyperParams,
    /// Mean of `Y(1) − Y(0)` under all-treated versus all-control, over
    /// retained observations.
    pub true_gate: f64,
    pub root_split: Option<(String, f64)>,
    pub treated_branch_split: Option<(String, f64)>,
    pub interference_splits: Vec<SplitCheck>,
    pub gate_full: Option<Estimate>,
    pub gate_dyad: Option<Estimate>,
    pub dyad_treated_branch_split: Option<(String, f64)>,
    pub sutva_diff: Estimate,
    pub four_condition: FourCondition,
    pub positivity_violations: usize,
    pub tree: TreeReport,
    pub dyad_tree: Option<TreeReport>,
    pub direct: Option<DirectSummary>,
}

impl RecoveryReport {
    pub fn significant_interference_splits(&self) -> usize {
        self.interference_splits.iter().filter(|s| s.significant).count()
    }

    /// Whether this run recovered the structure planted by its outcome model:
    /// the treated branch first splits on 3c-2 within [0.6, 0.8] (cutoff) or
    /// on 4o-3 below 0.2 (causal diversity); the null models have no
    /// significant split on an interference axis.
    pub fn recovered(&self) -> bool {
        let first = self.treated_branch_split.as_ref();
        match self.config.dgp {
            Dgp::Cutoff => first.is_some_and(|(a, t)| a == "3c-2" && (0.6..=0.8).contains(t)),
            Dgp::CausalSd => first.is_some_and(|(a, t)| a == "4o-3" && *t < 0.2),
            Dgp::CorrSd | Dgp::Null => self.significant_interference_splits() == 0,
        }
    }
}

impl Dgp {
    /// Share of seeded runs that must recover the planted structure.
    pub fn required_recovery_rate(self) -> f64 {
        match self {
            Dgp::CausalSd => 0.8,
            _ => 0.9,
        }
    }
}

fn hajek_in(
    features: &FeatureMatrix,
    y: &[f64],
    repl: &ReplicateFeatures,
    part: &Partition,
) -> Result<Option<Estimate>> {
    let pi = inclusion_prob(repl, part)?.to_vec();
    let members: Vec<bool> = (0..features.n_rows()).map(|i| part.contains(features.row(i))).collect();
    match estimators::hajek(y, &members, &pi) {
        Ok(e) => Ok(Some(e)),
        Err(Error::NoMembers) => Ok(None),
        Err(e) => Err(e),
    }
}

fn four_condition(features: &FeatureMatrix, y: &[f64], repl: &ReplicateFeatures) -> Result<FourCondition> {
    let dyad = features
        .column_index("2-1")
        .ok_or_else(|| Error::UnknownAxis("2-1".into()))?;
    let mut counts = [0usize; 4];
    for i in 0..features.n_rows() {
        let z = features.value(i, 0) > 0.0;
        let exposed = features.value(i, dyad) > 0.0;
        counts[(z as usize) * 2 + exposed as usize] += 1;
    }
    let n = features.n_rows().max(1) as f64;
    let c = |axis, side| Constraint { axis, threshold: 0.0, side };
    let all = Partition::from_constraints([c(0, Side::Gt), c(dyad, Side::Gt)])?;
    let none = Partition::from_constraints([c(0, Side::Le), c(dyad, Side::Le)])?;
    let effect = match (hajek_in(features, y, repl, &all)?, hajek_in(features, y, repl, &none)?) {
        (Some(a), Some(b)) => Some(Estimate {
            value: a.value - b.value,
            std_error: (a.std_error.powi(2) + b.std_error.powi(2)).sqrt(),
            n_members: a.n_members + b.n_members,
            effective_weight: a.effective_weight + b.effective_weight,
        }),
        _ => None,
    };
    Ok(FourCondition {
        no_exposure: counts[0] as f64 / n,
        indirect: counts[1] as f64 / n,
        direct: counts[2] as f64 / n,
        direct_indirect: counts[3] as f64 / n,
        effect,
    })
}

/// Treated-minus-control difference in means with the unpooled standard error.
pub fn difference_in_means(z: &[f64], y: &[f64]) -> Result<Estimate> {
    let mut s = [(0usize, 0.0f64, 0.0f64); 2];
    for (&zi, &yi) in z.iter().zip(y) {
        let g = &mut s[(zi > 0.0) as usize];
        g.0 += 1;
        g.1 += yi;
    }
    if s[0].0 < 2 || s[1].0 < 2 {
        return Err(Error::DegenerateDesign("both arms need two observations".into()));
    }
    let means = [s[0].1 / s[0].0 as f64, s[1].1 / s[1].0 as f64];
    for (&zi, &yi) in z.iter().zip(y) {
        let k = (zi > 0.0) as usize;
        s[k].2 += (yi - means[k]).powi(2);
    }
    let var = |k: usize| s[k].2 / (s[k].0 - 1) as f64 / s[k].0 as f64;
    Ok(Estimate {
        value: means[1] - means[0],
        std_error: (var(0) + var(1)).sqrt(),
        n_members: s[0].0 + s[1].0,
        effective_weight: (s[0].0 + s[1].0) as f64,
    })
}

fn split_checks(tree: &ExposureTree) -> Vec<SplitCheck> {
    tree.interference_splits()
        .into_iter()
        .map(|(node, axis, theta)| {
            let (l, r) = tree.node(node).children.expect("split node has children");
            let (left, right) = (tree.node(l).estimate, tree.node(r).estimate);
            let significant = match (left, right) {
                (Some(a), Some(b)) => {
                    (a.value - b.value).abs() > 2.0 * (a.std_error.powi(2) + b.std_error.powi(2)).sqrt()
                }
                _ => false,
            };
            SplitCheck { node, axis, theta, left, right, significant }
        })
        .collect()
}

fn violations(tree: &ExposureTree, repl: &ReplicateFeatures) -> Result<usize> {
    Ok(tree.verify_positivity(repl)?.iter().filter(|(_, r)| !r.pass).count())
}

fn total_sum_of_squares(rows: &[usize], y: &[f64]) -> f64 {
    let mean = rows.iter().map(|&i| y[i]).sum::<f64>() / rows.len().max(1) as f64;
    rows.iter().map(|&i| (y[i] - mean).powi(2)).sum()
}

/// Everything one synthetic run feeds into the tree: the realized
/// experiment, the retained population's features and outcomes, the shared
/// replicate tensor, the honest halves and the resolved hyperparameters.
#[derive(Debug, Clone)]
pub struct RunData {
    pub seeds: RunSeeds,
    pub graph: Graph,
    pub design: Design,
    pub z: AssignmentVector,
    pub outcomes: Outcomes,
    pub census: Census,
    pub retention: Retention,
    pub replicates: Vec<AssignmentVector>,
    pub features: FeatureMatrix,
    pub repl: ReplicateFeatures,
    /// Outcomes of the retained rows.
    pub y: Vec<f64>,
    pub train: Vec<usize>,
    pub est: Vec<usize>,
    pub params: HyperParams,
}

/// Builds the graph, draws the experiment and outcomes, and computes the
/// observed and replicate features of one run.
pub fn simulate_data(cfg: &ExperimentConfig) -> Result<RunData> {
    let seeds = RunSeeds::derive(cfg.seed);
    let graph = watts_strogatz(&WsConfig { n: cfg.n, k: cfg.k, beta: cfg.beta, seed: seeds.graph })?;
    let design = Design::ClusterBernoulli { cluster_of: ring_clusters(cfg.n, cfg.cluster_size), p: cfg.p };
    let z = assignment::draw(&design, cfg.n, seeds.assignment)?;
    let outcomes = generate_outcomes(&graph, &z, &DgpSpec { dgp: cfg.dgp, sigma: cfg.sigma }, seeds.outcomes)?;

    let catalog = MotifCatalog::full();
    let census = Census::new(&graph, &catalog);
    let unlabeled: Vec<[u64; 4]> = (0..graph.n_nodes()).map(|i| *census.unlabeled(i)).collect();
    let retention = Retention::decide(&unlabeled, &catalog, cfg.policy)?;
    let replicates = assignment::draw_replicates(&design, cfg.n, cfg.reps, seeds.replicates)?;
    let repl = ReplicateFeatures::from_assignments(&graph, &census, &retention, &replicates, cfg.quantization)?;
    let features = observed_features(&graph, &census, &retention, &z, cfg.quantization)?;
    let y: Vec<f64> = retention.nodes.iter().map(|&i| outcomes.y[i]).collect();

    let (train, est) = tree::honest_split(y.len(), seeds.honest_split);
    let mut params = cfg.hyperparams.clone().unwrap_or_else(|| HyperParams::defaults_for(y.len()));
    if let Some(f) = cfg.gamma_fraction {
        if !(f >= 0.0) {
            return Err(Error::InvalidParameter(format!("gamma_fraction = {f} must be >= 0")));
        }
        params.gamma = f * total_sum_of_squares(&train, &y);
    }
    params.seed = seeds.tree;
    Ok(RunData {
        seeds,
        graph,
        design,
        z,
        outcomes,
        census,
        retention,
        replicates,
        features,
        repl,
        y,
        train,
        est,
        params,
    })
}

/// Runs the full pipeline: graph, design, observed draw, outcomes, replicate
/// tensor, honest tree, GATE and baselines.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RecoveryReport> {
    let RunData { seeds, graph: g, z, retention, replicates, features, repl, y, train, est, params, .. } =
        simulate_data(cfg)?;
    let spec = DgpSpec { dgp: cfg.dgp, sigma: cfg.sigma };
    let rows = &retention.nodes;

    let ones = AssignmentVector(vec![1; cfg.n]);
    let zeros = AssignmentVector(vec![0; cfg.n]);
    let y1 = generate_outcomes(&g, &ones, &spec, seeds.outcomes)?.y;
    let y0 = generate_outcomes(&g, &zeros, &spec, seeds.outcomes)?.y;
    let true_gate = rows.iter().map(|&i| y1[i] - y0[i]).sum::<f64>() / rows.len() as f64;

    let fitted = tree::fit(&features, &y, &repl, &train, &params, Mode::PotentialOutcome)?;
    let fitted = tree::honest_estimate(fitted, &features, &y, &repl, &est)?;
    let gate_full = estimators::gate(&fitted).ok();
    let mut positivity_violations = violations(&fitted, &repl)?;

    let z_col: Vec<f64> = (0..features.n_rows()).map(|i| features.value(i, 0)).collect();
    let sutva_diff = difference_in_means(&z_col, &y)?;
    let four = four_condition(&features, &y, &repl)?;

    let (gate_dyad, dyad_treated_branch_split, dyad_tree) = if cfg.dyad_baseline {
        let catalog = MotifCatalog::dyad_only();
        let census = Census::new(&g, &catalog);
        let retention = Retention {
            features: catalog.features(),
            nodes: retention.nodes.clone(),
            dropped_kinds: Vec::new(),
            dropped_nodes: retention.dropped_nodes.clone(),
            undefined_fraction: Vec::new(),
        };
        let drepl = ReplicateFeatures::from_assignments(&g, &census, &retention, &replicates, cfg.quantization)?;
        let dfeat = observed_features(&g, &census, &retention, &z, cfg.quantization)?;
        let t = tree::fit(&dfeat, &y, &drepl, &train, &params, Mode::PotentialOutcome)?;
        let t = tree::honest_estimate(t, &dfeat, &y, &drepl, &est)?;
        positivity_violations += violations(&t, &drepl)?;
        (estimators::gate(&t).ok(), t.treated_branch_split(), Some(t.to_report()))
    } else {
        (None, None, None)
    };

    let direct = if cfg.direct_effects {
        let t = estimators::direct_effect_tree(&features, &y, &repl, &train, &est, &params)?;
        let dv = violations(&t, &repl)?;
        positivity_violations += dv;
        let root = t.root();
        let (below, above) = match root.children {
            Some((l, r)) => (t.node(l).estimate, t.node(r).estimate),
            None => (None, None),
        };
        Some(DirectSummary {
            root_split: root.split.map(|s| (t.axis_name(s.axis).to_string(), s.theta)),
            below,
            above,
            positivity_violations: dv,
            tree: t.to_report(),
        })
    } else {
        None
    };

    let root = fitted.root();
    Ok(RecoveryReport {
        config: cfg.clone(),
        seeds,
        n_edges: g.n_edges(),
        n_obs: rows.len(),
        dropped_kinds: retention.dropped_kinds.iter().map(|k| k.tag().to_string()).collect(),
        undefined_fraction: retention
            .undefined_fraction
            .iter()
            .map(|(k, f)| (k.tag().to_string(), *f))
            .collect(),
        hyperparams: params,
        true_gate,
        root_split: root.split.map(|s| (fitted.axis_name(s.axis).to_string(), s.theta)),
        treated_branch_split: fitted.treated_branch_split(),
        interference_splits: split_checks(&fitted),
        gate_full,
        gate_dyad,
        dyad_treated_branch_split,
        sutva_diff,
        four_condition: four,
        positivity_violations,
        tree: fitted.to_report(),
        dyad_tree,
        direct,
    })
}

/// Runs `runs` experiments with seeds `cfg.seed, cfg.seed + 1, …` concurrently.
pub fn run_many(cfg: &ExperimentConfig, runs: usize) -> Result<Vec<RecoveryReport>> {
    (0..runs as u64)
        .into_par_iter()
        .map(|k| {
            let c = ExperimentConfig { seed: cfg.seed.wrapping_add(k), ..cfg.clone() };
            run_experiment(&c)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ws(n: usize, beta: f64, seed: u64) -> Graph {
        watts_strogatz(&WsConfig { n, k: 10, beta, seed }).unwrap()
    }

    #[test]
    fn lattice_without_rewiring() {
        let g = ws(100, 0.0, 1);
        assert!((0..100).all(|i| g.degree(i) == 10));
        assert!(g.has_edge(0, 5) && g.has_edge(0, 95) && !g.has_edge(0, 6));
    }

    #[test]
    fn rewiring_preserves_edge_count() {
        let g = ws(1000, 1.0, 2);
        assert_eq!(g.n_edges(), 5000);
        let degs: Vec<f64> = (0..1000).map(|i| g.degree(i) as f64).collect();
        let mean = degs.iter().sum::<f64>() / 1000.0;
        let var = degs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / 1000.0;
        assert!((mean - 10.0).abs() < 1e-12);
        assert!(var > 0.0);
    }

    #[test]
    fn clustering_decreases_with_rewiring() {
        let c0 = average_clustering(&ws(1000, 0.0, 3));
        let c5 = average_clustering(&ws(1000, 0.5, 3));
        let c1 = average_clustering(&ws(1000, 1.0, 3));
        assert!((c0 - 2.0 / 3.0).abs() < 1e-12);
        assert!(c1 < c5 && c5 < c0, "{c1} {c5} {c0}");
    }

    #[test]
    fn invalid_configs() {
        for (n, k, beta) in [(10, 10, 0.5), (10, 3, 0.5), (10, 4, 1.5), (10, 4, -0.1)] {
            assert!(watts_strogatz(&WsConfig { n, k, beta, seed: 0 }).is_err());
        }
    }

    #[test]
    fn diversity_small_cases() {
        // ego 0 with alters 1, 2, 3; only 1-2 adjacent.
        let g = Graph::from_edges(4, [(0, 1), (0, 2), (0, 3), (1, 2)]).unwrap();
        assert_eq!(structural_diversity(&g, 0, &[]).unwrap(), 0);
        assert_eq!(structural_diversity(&g, 0, &[1, 3]).unwrap(), 2);
        assert_eq!(structural_diversity(&g, 0, &[1, 2]).unwrap(), 1);
        assert_eq!(structural_diversity(&g, 0, &[1, 2, 3]).unwrap(), 2);
        assert!(matches!(structural_diversity(&g, 1, &[3]), Err(Error::NotANeighbor(3))));
    }

    #[test]
    fn null_outcome_without_noise_is_degree() {
        let g = ws(200, 0.5, 4);
        let z = AssignmentVector(vec![1; 200]);
        let o = generate_outcomes(&g, &z, &DgpSpec { dgp: Dgp::Null, sigma: 0.0 }, 9).unwrap();
        assert!((0..200).all(|i| o.y[i] == g.degree(i) as f64));
    }

    #[test]
    fn cutoff_plug_in() {
        // Ego 0 with 10 alters forming a path; all treated, so x(3c-2) = 1.
        let mut edges: Vec<(usize, usize)> = (1..=10).map(|a| (0, a)).collect();
        edges.extend((1..10).map(|a| (a, a + 1)));
        let g = Graph::from_edges(11, edges).unwrap();
        let z = AssignmentVector(vec![1; 11]);
        let spec = DgpSpec { dgp: Dgp::Cutoff, sigma: 0.0 };
        for seed in 0..20 {
            let o = generate_outcomes(&g, &z, &spec, seed).unwrap();
            if o.gender[0] == 0 {
                assert!((o.y[0] - 3.0).abs() < 1e-12);
                return;
            }
        }
        panic!("no seed with gender 0");
    }

    #[test]
    fn causal_sd_equals_corr_sd_when_all_treated() {
        let g = ws(500, 0.5, 5);
        let z = AssignmentVector(vec![1; 500]);
        let a = generate_outcomes(&g, &z, &DgpSpec::new(Dgp::CausalSd), 8).unwrap();
        let b = generate_outcomes(&g, &z, &DgpSpec::new(Dgp::CorrSd), 8).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn treated_diversity_bounded_by_total() {
        let g = ws(300, 0.5, 6);
        let z = assignment::draw(&Design::IndependentBernoulli { p: 0.5 }, 300, 1).unwrap();
        for i in 0..300 {
            let treated: Vec<u32> = g.neighbors(i).iter().copied().filter(|&v| z.treated(v as usize)).collect();
            let sdt = structural_diversity(&g, i, &treated).unwrap();
            let sd = structural_diversity(&g, i, g.neighbors(i)).unwrap();
            assert!(sdt <= treated.len());
            if treated.len() == g.degree(i) {
                assert_eq!(sdt, sd);
            }
            if treated.is_empty() {
                assert_eq!(sdt, 0);
            }
        }
    }

    #[test]
    fn difference_in_means_hand_computed() {
        let e = difference_in_means(&[0.0, 0.0, 1.0, 1.0], &[1.0, 3.0, 4.0, 6.0]).unwrap();
        assert!((e.value - 3.0).abs() < 1e-12);
        assert!((e.std_error - 2.0f64.sqrt()).abs() < 1e-12);
    }
}
