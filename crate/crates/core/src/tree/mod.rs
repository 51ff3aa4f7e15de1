//! Honest, positivity-constrained recursive partitioning of the feature cube
//! `[0,1]^{m+1}` into exposure conditions.
//!
//! [`fit`] grows the structure on the training half only; [`honest_estimate`]
//! then fills every node with estimates from the disjoint estimation half.

mod report;
mod split;
mod tune;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{self, Estimate, Regressors};
use crate::exposure::{
    self, default_epsilon, inclusion_prob, positivity_check, smoothed, Constraint, Partition,
    PositivityResult, Quantization, ReplicateFeatures, Side,
};
use crate::motifs::FeatureMatrix;

pub use report::{NodeReport, SplitReport, TreeReport, REPORT_VERSION};
pub use split::SplitCandidate;
pub use tune::{cross_validate, CvScore};

use split::{observed_group, Alive, NodeView, Sums};

/// What each node estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Average potential outcome of the node's exposure condition (Hajek).
    PotentialOutcome,
    /// Direct effect of `Z` with the interference condition held fixed; splits
    /// only on interference axes.
    DirectEffect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Minimum WSSE reduction a split must achieve.
    pub gamma: f64,
    /// Minimum training members per child.
    pub kappa: usize,
    /// Maximum fraction of observations allowed at `π̂ <= ε`.
    pub delta: f64,
    /// `None` uses `1/(R+1) + 1e-12`.
    pub epsilon: Option<f64>,
    /// Candidate thresholds per axis sampled from member values; 0 = all.
    pub eta: usize,
    /// Optional band on `Σ 1/π̂` around the training population size.
    pub phi: Option<f64>,
    pub max_depth: usize,
    pub seed: u64,
}

impl HyperParams {
    /// Defaults for a population of `n_obs` observations: `κ = max(100, 0.5% N)`.
    pub fn defaults_for(n_obs: usize) -> Self {
        HyperParams {
            gamma: 0.0,
            kappa: 100.max((n_obs as f64 * 0.005).ceil() as usize),
            delta: 0.01,
            epsilon: None,
            eta: 256,
            phi: None,
            max_depth: 12,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(msg.to_string()));
        if !(self.gamma >= 0.0) {
            return bad("gamma must be >= 0");
        }
        if self.kappa == 0 {
            return bad("kappa must be >= 1");
        }
        if !(0.0..1.0).contains(&self.delta) {
            return bad("delta must lie in [0,1)");
        }
        if let Some(e) = self.epsilon {
            if !(0.0..1.0).contains(&e) {
                return bad("epsilon must lie in [0,1)");
            }
        }
        if let Some(p) = self.phi {
            if !(p >= 0.0) {
                return bad("phi must be >= 0");
            }
        }
        Ok(())
    }

    pub fn epsilon_for(&self, n_reps: usize) -> f64 {
        self.epsilon.unwrap_or_else(|| default_epsilon(n_reps))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub axis: usize,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    pub partition: Partition,
    pub split: Option<Split>,
    /// `(left, right)` = `(axis <= θ, axis > θ)`.
    pub children: Option<(usize, usize)>,
    pub n_train: usize,
    /// Training-half estimate (Hajek mean, or direct effect).
    pub train_value: f64,
    pub wsse_train: f64,
    pub n_est: usize,
    /// Honest estimate; `None` before estimation or when the estimation half
    /// has no usable members in this node.
    pub estimate: Option<Estimate>,
    /// 1-based exposure-condition id for leaves.
    pub condition: Option<usize>,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExposureTree {
    columns: Vec<String>,
    mode: Mode,
    params: HyperParams,
    n_reps: usize,
    quantization: Quantization,
    nodes: Vec<TreeNode>,
}

impl ExposureTree {
    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn params(&self) -> &HyperParams {
        &self.params
    }

    pub fn n_reps(&self) -> usize {
        self.n_reps
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    pub fn leaves(&self) -> impl Iterator<Item = &TreeNode> {
        self.nodes.iter().filter(|n| n.is_leaf())
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves().count()
    }

    pub fn axis_name(&self, axis: usize) -> &str {
        &self.columns[axis]
    }

    /// Routes a feature row to its leaf; boundary values go to the `<=` child.
    pub fn assign_condition(&self, row: &[f64]) -> Result<usize> {
        if row.len() != self.columns.len() {
            return Err(Error::LengthMismatch {
                expected: self.columns.len(),
                got: row.len(),
            });
        }
        let mut id = 0;
        for _ in 0..=self.nodes.len() {
            let node = self
                .nodes
                .get(id)
                .ok_or_else(|| Error::MalformedTree(format!("dangling node id {id}")))?;
            match (node.split, node.children) {
                (None, None) => return Ok(id),
                (Some(s), Some((l, r))) => {
                    let x = self.quantization.apply(row[s.axis]);
                    id = if x <= s.theta { l } else { r };
                }
                _ => return Err(Error::MalformedTree(format!("node {id} half-split"))),
            }
        }
        Err(Error::MalformedTree("routing cycle".into()))
    }

    /// Re-checks positivity of every leaf over all observations of `repl`.
    pub fn verify_positivity(&self, repl: &ReplicateFeatures) -> Result<Vec<(usize, PositivityResult)>> {
        let eps = self.params.epsilon_for(repl.n_reps());
        self.leaves()
            .map(|leaf| {
                let pi = inclusion_prob(repl, &leaf.partition)?;
                Ok((leaf.id, positivity_check(&pi, eps, self.params.delta, None)))
            })
            .collect()
    }

    /// First split on an interference axis along the path of the all-treated
    /// corner row (`Z = 1`, fully treated motifs at 1), skipping splits on `Z`.
    /// For a tree that first separates treated from control this is the first
    /// split of the treated branch.
    pub fn treated_branch_split(&self) -> Option<(String, f64)> {
        let corner = crate::estimators::corner_row(&self.columns, true);
        let mut id = 0;
        loop {
            let node = self.nodes.get(id)?;
            let (s, (l, r)) = (node.split?, node.children?);
            if s.axis != 0 {
                return Some((self.columns[s.axis].clone(), s.theta));
            }
            id = if self.quantization.apply(corner[s.axis]) <= s.theta { l } else { r };
        }
    }

    /// Splits on any axis other than `Z`, as `(node id, axis name, θ)`.
    pub fn interference_splits(&self) -> Vec<(usize, String, f64)> {
        self.nodes
            .iter()
            .filter_map(|n| n.split.map(|s| (n.id, s)))
            .filter(|(_, s)| s.axis != 0)
            .map(|(id, s)| (id, self.columns[s.axis].clone(), s.theta))
            .collect()
    }
}

fn slice_partitions(part: &Partition, mode: Mode) -> Result<Vec<Partition>> {
    Ok(match mode {
        Mode::PotentialOutcome => vec![part.clone()],
        Mode::DirectEffect => vec![
            part.with(Constraint { axis: 0, threshold: 0.0, side: Side::Le })?,
            part.with(Constraint { axis: 0, threshold: 0.0, side: Side::Gt })?,
        ],
    })
}

fn check_alignment(features: &FeatureMatrix, y: &[f64], repl: &ReplicateFeatures) -> Result<()> {
    if features.nodes != repl.nodes() {
        return Err(Error::LengthMismatch {
            expected: repl.n_obs(),
            got: features.n_rows(),
        });
    }
    if features.columns != repl.columns() {
        return Err(Error::InvalidParameter("feature columns differ from replicate tensor".into()));
    }
    if y.len() != features.n_rows() {
        return Err(Error::LengthMismatch {
            expected: features.n_rows(),
            got: y.len(),
        });
    }
    if let Some(bad) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(format!("non-finite outcome at row {bad}")));
    }
    Ok(())
}

/// Training-side estimate and WSSE for a set of members with given alive counts.
fn node_fit(
    features: &FeatureMatrix,
    y: &[f64],
    members: &[usize],
    counts: &[[u32; 2]],
    n_reps: usize,
    mode: Mode,
    universe: usize,
) -> Result<(f64, f64)> {
    let ys: Vec<f64> = members.iter().map(|&i| y[i]).collect();
    let w: Vec<f64> = members
        .iter()
        .map(|&i| 1.0 / smoothed(counts[i][observed_group(features, mode, i)], n_reps))
        .collect();
    let all = vec![true; ys.len()];
    match mode {
        Mode::PotentialOutcome => {
            let fit = estimators::weighted_ls(&ys, &all, &w, Regressors::Constant)?;
            Ok((fit.coefficients[0], fit.wsse))
        }
        Mode::DirectEffect => {
            let z: Vec<f64> = members.iter().map(|&i| features.value(i, 0)).collect();
            let fit = estimators::weighted_ls(&ys, &all, &w, Regressors::ConstantAndZ(&z))?;
            let center = ys.iter().sum::<f64>() / ys.len() as f64;
            let mut sums = [Sums::default(); 2];
            for ((&yi, &wi), &zi) in ys.iter().zip(&w).zip(&z) {
                sums[(zi > 0.5) as usize].add(wi, yi - center);
            }
            Ok((fit.coefficients[1], split::node_wsse(&sums, mode, universe)))
        }
    }
}

struct Grown {
    partition: Partition,
    depth: usize,
    n_train: usize,
    train_value: f64,
    wsse_train: f64,
    split: Option<(Split, Box<Grown>, Box<Grown>)>,
}

struct FitCtx<'a> {
    features: &'a FeatureMatrix,
    y: &'a [f64],
    repl: &'a ReplicateFeatures,
    params: &'a HyperParams,
    mode: Mode,
    axes: Vec<usize>,
    n_train: usize,
}

fn grow(ctx: &FitCtx<'_>, partition: Partition, alive: Alive, members: Vec<usize>, depth: usize, path: u64) -> Result<Grown> {
    let counts = alive.group_counts(ctx.repl, ctx.mode);
    let (train_value, wsse_train) = node_fit(ctx.features, ctx.y, &members, &counts, ctx.repl.n_reps(), ctx.mode, ctx.n_train)?;
    let mut node = Grown {
        partition,
        depth,
        n_train: members.len(),
        train_value,
        wsse_train,
        split: None,
    };
    if depth >= ctx.params.max_depth || members.len() < 2 * ctx.params.kappa {
        return Ok(node);
    }
    let view = NodeView {
        features: ctx.features,
        y: ctx.y,
        repl: ctx.repl,
        alive: &alive,
        members: &members,
        parent_wsse: wsse_train,
        center: train_value_center(ctx, &members),
        n_train_universe: ctx.n_train,
        mode: ctx.mode,
        params: ctx.params,
        path,
    };
    let Some(best) = split::search(&view, &ctx.axes) else {
        return Ok(node);
    };
    drop(counts);
    let s = Split { axis: best.axis, theta: best.theta };
    let le = Constraint { axis: s.axis, threshold: s.theta, side: Side::Le };
    let gt = Constraint { axis: s.axis, threshold: s.theta, side: Side::Gt };
    let (lm, rm): (Vec<usize>, Vec<usize>) =
        members.iter().partition(|&&i| ctx.features.value(i, s.axis) <= s.theta);
    let lp = node.partition.with(le)?;
    let rp = node.partition.with(gt)?;
    let la = alive.filter(ctx.repl, s.axis, s.theta, Side::Le);
    let ra = alive.filter(ctx.repl, s.axis, s.theta, Side::Gt);
    drop(alive);
    let (l, r) = rayon::join(
        || grow(ctx, lp, la, lm, depth + 1, path * 2),
        || grow(ctx, rp, ra, rm, depth + 1, path * 2 + 1),
    );
    node.split = Some((s, Box::new(l?), Box::new(r?)));
    Ok(node)
}

fn train_value_center(ctx: &FitCtx<'_>, members: &[usize]) -> f64 {
    members.iter().map(|&i| ctx.y[i]).sum::<f64>() / members.len().max(1) as f64
}

fn flatten(g: Grown, parent: Option<usize>, nodes: &mut Vec<TreeNode>) -> usize {
    let id = nodes.len();
    nodes.push(TreeNode {
        id,
        parent,
        depth: g.depth,
        partition: g.partition,
        split: None,
        children: None,
        n_train: g.n_train,
        train_value: g.train_value,
        wsse_train: g.wsse_train,
        n_est: 0,
        estimate: None,
        condition: None,
    });
    if let Some((s, l, r)) = g.split {
        let li = flatten(*l, Some(id), nodes);
        let ri = flatten(*r, Some(id), nodes);
        nodes[id].split = Some(s);
        nodes[id].children = Some((li, ri));
    }
    id
}

fn number_conditions(nodes: &mut [TreeNode]) {
    let mut k = 0;
    for n in nodes.iter_mut() {
        if n.children.is_none() {
            k += 1;
            n.condition = Some(k);
        }
    }
}

/// Grows the partition tree from training observations `train` (row indices
/// into `features`). Positivity is judged over every observation in `repl`.
pub fn fit(
    features: &FeatureMatrix,
    y: &[f64],
    repl: &ReplicateFeatures,
    train: &[usize],
    params: &HyperParams,
    mode: Mode,
) -> Result<ExposureTree> {
    params.validate()?;
    check_alignment(features, y, repl)?;
    if train.is_empty() {
        return Err(Error::NoMembers);
    }
    let mut members = train.to_vec();
    members.sort_unstable();
    members.dedup();
    if let Some(&bad) = members.last().filter(|&&i| i >= features.n_rows()) {
        return Err(Error::NodeOutOfRange { id: bad, n: features.n_rows() });
    }
    let axes: Vec<usize> = match mode {
        Mode::PotentialOutcome => (0..features.n_cols()).collect(),
        Mode::DirectEffect => (1..features.n_cols()).collect(),
    };
    let ctx = FitCtx {
        features,
        y,
        repl,
        params,
        mode,
        axes,
        n_train: members.len(),
    };
    let alive = Alive::full(repl.n_obs(), repl.n_reps());
    let grown = grow(&ctx, Partition::full(), alive, members, 0, 1)?;
    let mut nodes = Vec::new();
    flatten(grown, None, &mut nodes);
    number_conditions(&mut nodes);
    Ok(ExposureTree {
        columns: features.columns.clone(),
        mode,
        params: params.clone(),
        n_reps: repl.n_reps(),
        quantization: repl.quantization(),
        nodes,
    })
}

/// Best split of one node given by its partition and training members,
/// recomputing the alive replicate sets from scratch.
pub fn split_search(
    features: &FeatureMatrix,
    y: &[f64],
    repl: &ReplicateFeatures,
    members: &[usize],
    partition: &Partition,
    params: &HyperParams,
    mode: Mode,
) -> Result<Option<SplitCandidate>> {
    params.validate()?;
    check_alignment(features, y, repl)?;
    let mut members = members.to_vec();
    members.sort_unstable();
    members.dedup();
    if members.is_empty() {
        return Ok(None);
    }
    let mut alive = Alive::full(repl.n_obs(), repl.n_reps());
    for c in partition.constraints() {
        alive = alive.filter(repl, c.axis, c.threshold, c.side);
    }
    let counts = alive.group_counts(repl, mode);
    let n_train = members.len();
    let (_, wsse) = node_fit(features, y, &members, &counts, repl.n_reps(), mode, n_train)?;
    let view = NodeView {
        features,
        y,
        repl,
        alive: &alive,
        members: &members,
        parent_wsse: wsse,
        center: members.iter().map(|&i| y[i]).sum::<f64>() / n_train as f64,
        n_train_universe: n_train,
        mode,
        params,
        path: 1,
    };
    let axes: Vec<usize> = match mode {
        Mode::PotentialOutcome => (0..features.n_cols()).collect(),
        Mode::DirectEffect => (1..features.n_cols()).collect(),
    };
    Ok(split::search(&view, &axes))
}

/// Fills every node with an estimate computed from estimation observations
/// `est` only. Nodes with no usable estimation members keep `estimate = None`.
pub fn honest_estimate(
    mut tree: ExposureTree,
    features: &FeatureMatrix,
    y: &[f64],
    repl: &ReplicateFeatures,
    est: &[usize],
) -> Result<ExposureTree> {
    check_alignment(features, y, repl)?;
    if features.columns != tree.columns {
        return Err(Error::InvalidParameter("tree columns differ from features".into()));
    }
    let mode = tree.mode;
    for node in tree.nodes.iter_mut() {
        let slices = slice_partitions(&node.partition, mode)?;
        let pis: Vec<Vec<f64>> = slices
            .iter()
            .map(|p| inclusion_prob(repl, p).map(|pi| pi.to_vec()))
            .collect::<Result<_>>()?;
        let members: Vec<usize> = est
            .iter()
            .copied()
            .filter(|&i| node.partition.contains(features.row(i)))
            .collect();
        node.n_est = members.len();
        let ys: Vec<f64> = members.iter().map(|&i| y[i]).collect();
        let all = vec![true; ys.len()];
        node.estimate = match mode {
            Mode::PotentialOutcome => {
                let pi: Vec<f64> = members.iter().map(|&i| pis[0][i]).collect();
                match estimators::hajek(&ys, &all, &pi) {
                    Ok(e) => Some(e),
                    Err(Error::NoMembers) => None,
                    Err(e) => return Err(e),
                }
            }
            Mode::DirectEffect => {
                let z: Vec<f64> = members.iter().map(|&i| features.value(i, 0)).collect();
                let w: Vec<f64> = members
                    .iter()
                    .zip(&z)
                    .map(|(&i, &zi)| 1.0 / pis[(zi > 0.5) as usize][i])
                    .collect();
                match estimators::weighted_ls(&ys, &all, &w, Regressors::ConstantAndZ(&z)) {
                    Ok(fit) => Some(Estimate {
                        value: fit.coefficients[1],
                        std_error: fit.std_errors[1],
                        n_members: fit.n,
                        effective_weight: w.iter().sum(),
                    }),
                    Err(Error::NoMembers) | Err(Error::DegenerateDesign(_)) => None,
                    Err(e) => return Err(e),
                }
            }
        };
    }
    Ok(tree)
}

/// Seeded 50/50 split of `0..n_obs` into `(train, est)`, both sorted.
pub fn honest_split(n_obs: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut idx: Vec<usize> = (0..n_obs).collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let (a, b) = idx.split_at(n_obs / 2);
    let mut train = a.to_vec();
    let mut est = b.to_vec();
    train.sort_unstable();
    est.sort_unstable();
    (train, est)
}

/// Leaves whose honest estimate is missing.
pub fn degenerate_leaves(tree: &ExposureTree) -> Vec<usize> {
    tree.leaves().filter(|n| n.estimate.is_none()).map(|n| n.id).collect()
}

/// Exposure-condition inclusion probabilities for a leaf.
pub fn leaf_inclusion(tree: &ExposureTree, leaf: usize, repl: &ReplicateFeatures) -> Result<exposure::InclusionProbabilities> {
    inclusion_prob(repl, &tree.node(leaf).partition)
}

#[cfg(test)]
mod tests;
