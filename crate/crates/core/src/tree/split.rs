//! Split search over all axes of one tree node.
//!
//! For every observation in the universe the node keeps the list of replicate
//! indices whose rows still lie in the node's partition ("alive" replicates).
//! A candidate split `axis <= θ` sends each alive replicate left or right, so
//! child inclusion probabilities follow from per-observation histograms of
//! alive values over the sorted candidate thresholds.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::exposure::{smoothed, ReplicateFeatures, Side};
use crate::motifs::FeatureMatrix;

use super::{HyperParams, Mode};

/// Per-observation alive replicate lists, flattened.
#[derive(Debug, Clone)]
pub(crate) struct Alive {
    offsets: Vec<usize>,
    reps: Vec<u16>,
}

impl Alive {
    pub(crate) fn full(n_obs: usize, n_reps: usize) -> Self {
        let offsets = (0..=n_obs).map(|i| i * n_reps).collect();
        let reps = (0..n_obs).flat_map(|_| 0..n_reps as u16).collect();
        Alive { offsets, reps }
    }

    #[inline]
    pub(crate) fn get(&self, i: usize) -> &[u16] {
        &self.reps[self.offsets[i]..self.offsets[i + 1]]
    }

    pub(crate) fn n_obs(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Keeps replicates whose value on `axis` satisfies the constraint.
    pub(crate) fn filter(&self, repl: &ReplicateFeatures, axis: usize, theta: f64, side: Side) -> Alive {
        let lists: Vec<Vec<u16>> = (0..self.n_obs())
            .into_par_iter()
            .map(|i| {
                self.get(i)
                    .iter()
                    .copied()
                    .filter(|&r| {
                        let v = repl.value(i, r as usize, axis);
                        match side {
                            Side::Le => v <= theta,
                            Side::Gt => v > theta,
                        }
                    })
                    .collect()
            })
            .collect();
        let mut offsets = Vec::with_capacity(lists.len() + 1);
        offsets.push(0);
        let mut reps = Vec::with_capacity(lists.iter().map(Vec::len).sum());
        for l in lists {
            reps.extend(l);
            offsets.push(reps.len());
        }
        Alive { offsets, reps }
    }

    /// Alive counts per observation and assignment group. In potential-outcome
    /// mode every replicate is in group 0; in direct-effect mode the group is
    /// the replicate's own `Z`.
    pub(crate) fn group_counts(&self, repl: &ReplicateFeatures, mode: Mode) -> Vec<[u32; 2]> {
        (0..self.n_obs())
            .into_par_iter()
            .map(|i| {
                let mut c = [0u32; 2];
                for &r in self.get(i) {
                    c[group_of(repl, mode, i, r)] += 1;
                }
                c
            })
            .collect()
    }
}

#[inline]
pub(crate) fn group_of(repl: &ReplicateFeatures, mode: Mode, i: usize, r: u16) -> usize {
    match mode {
        Mode::PotentialOutcome => 0,
        Mode::DirectEffect => (repl.value(i, r as usize, 0) > 0.5) as usize,
    }
}

/// Group of an observed row.
#[inline]
pub(crate) fn observed_group(features: &FeatureMatrix, mode: Mode, i: usize) -> usize {
    match mode {
        Mode::PotentialOutcome => 0,
        Mode::DirectEffect => (features.value(i, 0) > 0.5) as usize,
    }
}

/// Best admissible split of a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub axis: usize,
    pub theta: f64,
    /// Member-count-weighted average of the children's WSSE.
    pub objective: f64,
    pub wsse_left: f64,
    pub wsse_right: f64,
    pub n_left: usize,
    pub n_right: usize,
}

/// Inputs shared by every axis of one node's search.
pub(crate) struct NodeView<'a> {
    pub features: &'a FeatureMatrix,
    pub y: &'a [f64],
    pub repl: &'a ReplicateFeatures,
    pub alive: &'a Alive,
    /// Training members (observation indices), ascending.
    pub members: &'a [usize],
    pub parent_wsse: f64,
    /// Shift applied to outcomes before accumulating squares.
    pub center: f64,
    pub n_train_universe: usize,
    pub mode: Mode,
    pub params: &'a HyperParams,
    /// Path id of the node (root 1, children 2p and 2p+1).
    pub path: u64,
}

/// Largest replicate hit count whose smoothed probability is still `<= eps`,
/// or -1 when no count is.
pub(crate) fn max_violating_count(eps: f64, n_reps: usize) -> i64 {
    let mut c = -1i64;
    while c < n_reps as i64 && smoothed((c + 1) as u32, n_reps) <= eps {
        c += 1;
    }
    c
}

pub(crate) fn candidate_thresholds(view: &NodeView<'_>, axis: usize) -> Vec<f64> {
    if axis == 0 && view.mode == Mode::PotentialOutcome {
        return vec![0.0];
    }
    let eta = view.params.eta;
    let pick: Vec<usize> = if eta > 0 && view.members.len() > eta {
        let mut rng = ChaCha8Rng::seed_from_u64(view.params.seed);
        rng.set_stream(view.path.wrapping_mul(1024).wrapping_add(axis as u64));
        let mut idx = sample(&mut rng, view.members.len(), eta).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|k| view.members[k]).collect()
    } else {
        view.members.to_vec()
    };
    let mut th: Vec<f64> = pick.iter().map(|&i| view.features.value(i, axis)).collect();
    th.sort_by(f64::total_cmp);
    th.dedup();
    th
}

#[derive(Default, Clone, Copy)]
pub(crate) struct Sums {
    w: f64,
    wy: f64,
    wyy: f64,
    n: u32,
}

impl Sums {
    #[inline]
    pub(crate) fn add(&mut self, w: f64, y: f64) {
        self.w += w;
        self.wy += w * y;
        self.wyy += w * y * y;
        self.n += 1;
    }

    pub(crate) fn wsse(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.wyy - self.wy * self.wy / self.w).max(0.0)
        }
    }
}

/// Node WSSE from per-group sums. In direct-effect mode each group's WSSE is
/// rescaled so its weight mass counts as `universe`: a child region that
/// treated (or control) rows rarely reach carries far less than `|U|` of
/// inverse-probability mass, which would otherwise pull the size-weighted
/// objective toward balanced splits.
pub(crate) fn node_wsse(sums: &[Sums], mode: Mode, universe: usize) -> f64 {
    match mode {
        Mode::PotentialOutcome => sums.iter().map(Sums::wsse).sum(),
        Mode::DirectEffect => sums
            .iter()
            .filter(|s| s.n > 0)
            .map(|s| s.wsse() * universe as f64 / s.w)
            .sum(),
    }
}

/// Best admissible split on one axis, ties broken toward the smaller θ.
pub(crate) fn search_axis(view: &NodeView<'_>, axis: usize, is_member: &[bool]) -> Option<SplitCandidate> {
    let thetas = candidate_thresholds(view, axis);
    let t = thetas.len();
    if t == 0 {
        return None;
    }
    let repl = view.repl;
    let n_reps = repl.n_reps();
    let groups = match view.mode {
        Mode::PotentialOutcome => 1,
        Mode::DirectEffect => 2,
    };
    let eps = view.params.epsilon.unwrap_or_else(|| crate::exposure::default_epsilon(n_reps));
    let cmax = max_violating_count(eps, n_reps);
    let inv_pi: Vec<f64> = (0..=n_reps).map(|c| 1.0 / smoothed(c as u32, n_reps)).collect();

    // Positivity is judged on the node's region of the partitioning space,
    // pooling both assignment groups; weights use the per-group counts.
    // Violation counts are difference arrays over the threshold index.
    let mut viol_left = vec![0i64; t + 1];
    let mut viol_right = vec![0i64; t + 1];
    let mut left = vec![vec![Sums::default(); t]; groups];
    let mut right = vec![vec![Sums::default(); t]; groups];

    let mut hist = vec![vec![0u32; t + 1]; groups];
    let mut cum = vec![vec![0u32; t]; groups];
    let mut pooled = vec![0u32; t];
    let mut values = Vec::new();
    let mut member_pos = 0usize;

    for i in 0..view.alive.n_obs() {
        let reps = view.alive.get(i);
        for h in hist.iter_mut() {
            h.iter_mut().for_each(|x| *x = 0);
        }
        repl.gather(i, axis, reps, &mut values);
        let mut alive_g = [0u32; 2];
        for (&v, &r) in values.iter().zip(reps) {
            let g = group_of(repl, view.mode, i, r);
            let pos = thetas.partition_point(|&th| th < v);
            hist[g][pos] += 1;
            alive_g[g] += 1;
        }
        for g in 0..groups {
            let mut acc = 0u32;
            for j in 0..t {
                acc += hist[g][j];
                cum[g][j] = acc;
            }
        }
        for j in 0..t {
            pooled[j] = (0..groups).map(|g| cum[g][j]).sum();
        }
        let alive = reps.len() as i64;
        // left child violates while pooled[j] <= cmax (a prefix of j)
        let jl = pooled.partition_point(|&c| (c as i64) <= cmax);
        viol_left[0] += 1;
        viol_left[jl] -= 1;
        // right child violates once alive - pooled[j] <= cmax (a suffix of j)
        let jr = pooled.partition_point(|&c| (c as i64) < alive - cmax);
        viol_right[jr] += 1;

        if is_member[i] {
            debug_assert_eq!(view.members[member_pos], i);
            member_pos += 1;
            let g = observed_group(view.features, view.mode, i);
            let x = view.features.value(i, axis);
            let p = thetas.partition_point(|&th| th < x);
            let yi = view.y[i] - view.center;
            let cg = &cum[g];
            for j in 0..p.min(t) {
                right[g][j].add(inv_pi[(alive_g[g] - cg[j]) as usize], yi);
            }
            for j in p..t {
                left[g][j].add(inv_pi[cg[j] as usize], yi);
            }
        }
    }

    let n_obs = view.alive.n_obs() as f64;
    let max_viol = view.params.delta * n_obs;
    let n_total = view.members.len() as f64;
    let kappa = view.params.kappa as u32;
    let (mut vl, mut vr) = (0i64, 0i64);
    let mut best: Option<SplitCandidate> = None;
    for j in 0..t {
        vl += viol_left[j];
        vr += viol_right[j];
        let n_l: u32 = (0..groups).map(|g| left[g][j].n).sum();
        let n_r: u32 = (0..groups).map(|g| right[g][j].n).sum();
        if n_l < kappa || n_r < kappa || n_l == 0 || n_r == 0 {
            continue;
        }
        if view.mode == Mode::DirectEffect
            && (0..groups).any(|g| left[g][j].n == 0 || right[g][j].n == 0)
        {
            continue;
        }
        if vl as f64 > max_viol || vr as f64 > max_viol {
            continue;
        }
        if let Some(phi) = view.params.phi {
            let u = view.n_train_universe as f64;
            let ok = |s: &Sums| s.w >= (1.0 - phi) * u && s.w <= (1.0 + phi) * u;
            if !(0..groups).all(|g| ok(&left[g][j]) && ok(&right[g][j])) {
                continue;
            }
        }
        let ls: Vec<Sums> = (0..groups).map(|g| left[g][j]).collect();
        let rs: Vec<Sums> = (0..groups).map(|g| right[g][j]).collect();
        let wl = node_wsse(&ls, view.mode, view.n_train_universe);
        let wr = node_wsse(&rs, view.mode, view.n_train_universe);
        let objective = n_l as f64 / n_total * wl + n_r as f64 / n_total * wr;
        if !(objective < view.parent_wsse - view.params.gamma) {
            continue;
        }
        if best.is_none_or(|b| objective < b.objective) {
            best = Some(SplitCandidate {
                axis,
                theta: thetas[j],
                objective,
                wsse_left: wl,
                wsse_right: wr,
                n_left: n_l as usize,
                n_right: n_r as usize,
            });
        }
    }
    best
}

/// Best split over the given axes: lexicographic minimum of
/// `(objective, axis, θ)`.
pub(crate) fn search(view: &NodeView<'_>, axes: &[usize]) -> Option<SplitCandidate> {
    let mut is_member = vec![false; view.alive.n_obs()];
    for &i in view.members {
        is_member[i] = true;
    }
    let found: Vec<Option<SplitCandidate>> = axes
        .par_iter()
        .map(|&axis| search_axis(view, axis, &is_member))
        .collect();
    found.into_iter().flatten().fold(None, |acc: Option<SplitCandidate>, c| match acc {
        Some(b) if (b.objective, b.axis) <= (c.objective, c.axis) => Some(b),
        _ => Some(c),
    })
}
