//! Inverse-probability-weighted estimators: Hajek and Horvitz-Thompson means,
//! the weighted least-squares view of both, WSSE, and tree-level effects
//! (global average treatment effect, heterogeneous direct effects).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exposure::ReplicateFeatures;
use crate::motifs::{Feature, FeatureMatrix};
use crate::tree::{self, ExposureTree, HyperParams, Mode};

/// A point estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub n_members: usize,
    /// Sum of `1/π̂` over members.
    pub effective_weight: f64,
}

fn check_lengths(y: &[f64], members: &[bool], other: &[f64]) -> Result<()> {
    if members.len() != y.len() {
        return Err(Error::LengthMismatch { expected: y.len(), got: members.len() });
    }
    if other.len() != y.len() {
        return Err(Error::LengthMismatch { expected: y.len(), got: other.len() });
    }
    Ok(())
}

fn member_weights<'a>(
    y: &'a [f64],
    members: &'a [bool],
    pi: &'a [f64],
) -> impl Iterator<Item = (f64, f64)> + 'a {
    y.iter()
        .zip(members)
        .zip(pi)
        .filter(|((_, &m), _)| m)
        .map(|((&y, _), &p)| (y, 1.0 / p))
}

/// Self-normalized IPW mean `Σ yᵢ/π̂ᵢ / Σ 1/π̂ᵢ` over members, with the
/// linearized standard error from [`hajek_variance`].
pub fn hajek(y: &[f64], members: &[bool], pi: &[f64]) -> Result<Estimate> {
    check_lengths(y, members, pi)?;
    let (mut sw, mut swy, mut n) = (0.0, 0.0, 0usize);
    for (yi, w) in member_weights(y, members, pi) {
        sw += w;
        swy += w * yi;
        n += 1;
    }
    if n == 0 {
        return Err(Error::NoMembers);
    }
    let value = swy / sw;
    let var = hajek_variance(y, members, pi, value)?;
    Ok(Estimate { value, std_error: var.sqrt(), n_members: n, effective_weight: sw })
}

/// Linearized ratio-estimator variance `Σ wᵢ²(yᵢ − v)² / (Σ wᵢ)²`, `wᵢ = 1/π̂ᵢ`.
pub fn hajek_variance(y: &[f64], members: &[bool], pi: &[f64], value: f64) -> Result<f64> {
    check_lengths(y, members, pi)?;
    let (mut sw, mut num, mut n) = (0.0, 0.0, 0usize);
    for (yi, w) in member_weights(y, members, pi) {
        let e = yi - value;
        sw += w;
        num += w * w * e * e;
        n += 1;
    }
    if n == 0 {
        return Err(Error::NoMembers);
    }
    Ok(num / (sw * sw))
}

/// Horvitz-Thompson mean `(1/|U|) Σ yᵢ/π̂ᵢ`. Diagnostics only; the standard
/// error uses the Poisson-sampling approximation `Σ (1−π̂ᵢ) yᵢ²/π̂ᵢ² / |U|²`.
pub fn horvitz_thompson(y: &[f64], members: &[bool], pi: &[f64], universe_size: usize) -> Result<Estimate> {
    check_lengths(y, members, pi)?;
    if universe_size == 0 {
        return Err(Error::InvalidParameter("empty universe".into()));
    }
    let u = universe_size as f64;
    let (mut total, mut var, mut sw, mut n) = (0.0, 0.0, 0.0, 0usize);
    for ((&yi, &m), &p) in y.iter().zip(members).zip(pi) {
        if m {
            total += yi / p;
            var += (1.0 - p) * yi * yi / (p * p);
            sw += 1.0 / p;
            n += 1;
        }
    }
    Ok(Estimate {
        value: total / u,
        std_error: var.max(0.0).sqrt() / u,
        n_members: n,
        effective_weight: sw,
    })
}

/// `Σ (1/π̂ᵢ)(yᵢ − v)²` over members.
pub fn wsse(y: &[f64], members: &[bool], pi: &[f64], value: f64) -> Result<f64> {
    check_lengths(y, members, pi)?;
    let mut n = 0usize;
    let s = member_weights(y, members, pi)
        .inspect(|_| n += 1)
        .map(|(yi, w)| w * (yi - value) * (yi - value))
        .sum();
    if n == 0 {
        return Err(Error::NoMembers);
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy)]
pub enum Regressors<'a> {
    Constant,
    /// Intercept plus one regressor (the treatment indicator).
    ConstantAndZ(&'a [f64]),
}

/// Weighted least-squares fit with HC0 (sandwich) standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct WlsFit {
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// Weighted sum of squared residuals.
    pub wsse: f64,
    pub n: usize,
}

pub fn weighted_ls(y: &[f64], members: &[bool], weights: &[f64], regressors: Regressors<'_>) -> Result<WlsFit> {
    check_lengths(y, members, weights)?;
    let z = match regressors {
        Regressors::Constant => None,
        Regressors::ConstantAndZ(z) => {
            if z.len() != y.len() {
                return Err(Error::LengthMismatch { expected: y.len(), got: z.len() });
            }
            Some(z)
        }
    };
    let idx: Vec<usize> = (0..y.len()).filter(|&i| members[i]).collect();
    if idx.is_empty() {
        return Err(Error::NoMembers);
    }
    if idx.iter().any(|&i| !(weights[i] > 0.0) || !weights[i].is_finite()) {
        return Err(Error::InvalidParameter("weights must be positive and finite".into()));
    }
    match z {
        None => {
            let sw: f64 = idx.iter().map(|&i| weights[i]).sum();
            let beta = idx.iter().map(|&i| weights[i] * y[i]).sum::<f64>() / sw;
            let (mut meat, mut sse) = (0.0, 0.0);
            for &i in &idx {
                let e = y[i] - beta;
                meat += weights[i] * weights[i] * e * e;
                sse += weights[i] * e * e;
            }
            Ok(WlsFit {
                coefficients: vec![beta],
                std_errors: vec![(meat / (sw * sw)).sqrt()],
                wsse: sse,
                n: idx.len(),
            })
        }
        Some(z) => {
            // A = X'WX, b = X'Wy with X = [1, z]
            let (mut a00, mut a01, mut a11, mut b0, mut b1) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for &i in &idx {
                let w = weights[i];
                a00 += w;
                a01 += w * z[i];
                a11 += w * z[i] * z[i];
                b0 += w * y[i];
                b1 += w * z[i] * y[i];
            }
            let det = a00 * a11 - a01 * a01;
            if !(det > 1e-12 * a00 * a11.max(f64::MIN_POSITIVE)) {
                return Err(Error::DegenerateDesign(
                    "regressor has no variation among members".into(),
                ));
            }
            let inv = [a11 / det, -a01 / det, a00 / det];
            let beta0 = inv[0] * b0 + inv[1] * b1;
            let beta1 = inv[1] * b0 + inv[2] * b1;
            // meat = Σ w²e² x x'
            let (mut m00, mut m01, mut m11, mut sse) = (0.0, 0.0, 0.0, 0.0);
            for &i in &idx {
                let w = weights[i];
                let e = y[i] - beta0 - beta1 * z[i];
                let s = w * w * e * e;
                m00 += s;
                m01 += s * z[i];
                m11 += s * z[i] * z[i];
                sse += w * e * e;
            }
            // V = inv · meat · inv (symmetric 2×2)
            let (i00, i01, i11) = (inv[0], inv[1], inv[2]);
            let t00 = i00 * m00 + i01 * m01;
            let t01 = i00 * m01 + i01 * m11;
            let t10 = i01 * m00 + i11 * m01;
            let t11 = i01 * m01 + i11 * m11;
            let v00 = t00 * i00 + t01 * i01;
            let v11 = t10 * i01 + t11 * i11;
            Ok(WlsFit {
                coefficients: vec![beta0, beta1],
                std_errors: vec![v00.max(0.0).sqrt(), v11.max(0.0).sqrt()],
                wsse: sse,
                n: idx.len(),
            })
        }
    }
}

/// Corner of the feature cube where the ego and all alters share one
/// assignment: `Z = treated`, every fully-treated (or fully-control) feature
/// at 1 and the rest at 0.
pub fn corner_row(columns: &[String], treated: bool) -> Vec<f64> {
    columns
        .iter()
        .map(|name| {
            if name == "Z" {
                return treated as u8 as f64;
            }
            match Feature::parse(name) {
                Some(f) if treated => f.is_fully_treated() as u8 as f64,
                Some(f) => f.is_fully_control() as u8 as f64,
                None => 0.0,
            }
        })
        .collect()
}

/// Global average treatment effect read off an honestly-estimated tree: the
/// all-treated corner leaf minus the all-control corner leaf. Leaf estimates
/// are treated as independent.
pub fn gate(tree: &ExposureTree) -> Result<Estimate> {
    let columns = tree.columns();
    let treated = tree.assign_condition(&corner_row(columns, true))?;
    let control = tree.assign_condition(&corner_row(columns, false))?;
    let pick = |leaf: usize| {
        tree.node(leaf).estimate.ok_or_else(|| {
            Error::MalformedTree(format!("corner leaf {leaf} has no honest estimate"))
        })
    };
    let (e1, e0) = (pick(treated)?, pick(control)?);
    Ok(Estimate {
        value: e1.value - e0.value,
        std_error: (e1.std_error.powi(2) + e0.std_error.powi(2)).sqrt(),
        n_members: e1.n_members + e0.n_members,
        effective_weight: e1.effective_weight + e0.effective_weight,
    })
}

/// Heterogeneous direct effects: a tree over the interference axes only whose
/// nodes report the treatment coefficient of a weighted regression on
/// `(1, Z)`, each observation weighted by `1/π̂(𝒳 ∩ {Z = zᵢ})`.
///
/// `features` holds observed rows for all observations (column 0 is `Z`);
/// `train` and `est` index disjoint halves of them.
pub fn direct_effect_tree(
    features: &FeatureMatrix,
    y: &[f64],
    repl: &ReplicateFeatures,
    train: &[usize],
    est: &[usize],
    params: &HyperParams,
) -> Result<ExposureTree> {
    let fitted = tree::fit(features, y, repl, train, params, Mode::DirectEffect)?;
    tree::honest_estimate(fitted, features, y, repl, est)
}
