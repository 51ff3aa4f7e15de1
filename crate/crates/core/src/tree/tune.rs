//! k-fold cross-validation over `(γ, κ)` grids, scored by held-out WSSE.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{fit, honest_estimate, HyperParams, Mode};
use crate::error::{Error, Result};
use crate::exposure::{inclusion_prob, ReplicateFeatures};
use crate::motifs::FeatureMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvScore {
    pub gamma: f64,
    pub kappa: usize,
    /// Held-out WSSE summed over folds.
    pub wsse: f64,
    pub mean_leaves: f64,
}

/// Scores every `(γ, κ)` pair by `folds`-fold cross-validation on the rows in
/// `rows`. Each fold's held-out rows are scored against the leaf means of a
/// tree fit on the remaining rows, with weights `1/π̂` of the held-out row's
/// leaf. Results come back in grid order; the best is the minimum `wsse`.
#[allow(clippy::too_many_arguments)]
pub fn cross_validate(
    features: &FeatureMatrix,
    y: &[f64],
    repl: &ReplicateFeatures,
    rows: &[usize],
    base: &HyperParams,
    gammas: &[f64],
    kappas: &[usize],
    folds: usize,
) -> Result<Vec<CvScore>> {
    if folds < 2 {
        return Err(Error::InvalidParameter("need at least 2 folds".into()));
    }
    if rows.len() < folds {
        return Err(Error::NoMembers);
    }
    let mut order = rows.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(base.seed ^ 0x5eed_cafe));
    let fold_of: Vec<(usize, usize)> = order.iter().enumerate().map(|(k, &i)| (i, k % folds)).collect();

    let mut scores = Vec::new();
    for &gamma in gammas {
        for &kappa in kappas {
            let params = HyperParams { gamma, kappa, ..base.clone() };
            let mut wsse = 0.0;
            let mut leaves = 0usize;
            for f in 0..folds {
                let mut train: Vec<usize> = fold_of.iter().filter(|p| p.1 != f).map(|p| p.0).collect();
                let mut held: Vec<usize> = fold_of.iter().filter(|p| p.1 == f).map(|p| p.0).collect();
                train.sort_unstable();
                held.sort_unstable();
                let tree = fit(features, y, repl, &train, &params, Mode::PotentialOutcome)?;
                let tree = honest_estimate(tree, features, y, repl, &train)?;
                leaves += tree.n_leaves();
                for leaf in tree.leaves() {
                    let Some(est) = leaf.estimate else { continue };
                    let pi = inclusion_prob(repl, &leaf.partition)?;
                    for &i in &held {
                        if leaf.partition.contains(features.row(i)) {
                            let r = y[i] - est.value;
                            wsse += r * r / pi.pi(i);
                        }
                    }
                }
            }
            scores.push(CvScore {
                gamma,
                kappa,
                wsse,
                mean_leaves: leaves as f64 / folds as f64,
            });
        }
    }
    Ok(scores)
}
