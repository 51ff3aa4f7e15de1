//! Randomization designs and seeded treatment draws.
//!
//! Every draw is a pure function of `(design, n, seed, stream)`. Replicate `r`
//! of a Monte Carlo batch uses ChaCha stream `r`, so any replicate can be
//! regenerated on its own and batches are identical under any thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Treatment assignment design.
#[derive(Debug, Clone, PartialEq)]
pub enum Design {
    IndependentBernoulli { p: f64 },
    /// One Bernoulli(p) coin per cluster, broadcast to the cluster's members.
    ClusterBernoulli { cluster_of: Vec<u32>, p: f64 },
}

/// A realized treatment vector `z ∈ {0,1}^N`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssignmentVector(pub Vec<u8>);

impl AssignmentVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn treated(&self, i: usize) -> bool {
        self.0[i] != 0
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }
}

impl Design {
    pub fn p(&self) -> f64 {
        match self {
            Design::IndependentBernoulli { p } | Design::ClusterBernoulli { p, .. } => *p,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let p = self.p();
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "assignment probability must lie in (0,1), got {p}"
            )));
        }
        if let Design::ClusterBernoulli { cluster_of, .. } = self {
            if cluster_of.len() < n {
                return Err(Error::MissingCluster(cluster_of.len()));
            }
        }
        Ok(())
    }
}

/// Draws one assignment from stream 0 of `seed`.
pub fn draw(design: &Design, n: usize, seed: u64) -> Result<AssignmentVector> {
    design.validate(n)?;
    Ok(draw_stream(design, n, seed, 0))
}

/// Draws `reps` independent assignments; replicate `r` uses stream `r`.
pub fn draw_replicates(
    design: &Design,
    n: usize,
    reps: usize,
    seed: u64,
) -> Result<Vec<AssignmentVector>> {
    if reps == 0 {
        return Err(Error::InvalidParameter("replicate count must be >= 1".into()));
    }
    design.validate(n)?;
    Ok((0..reps)
        .into_par_iter()
        .map(|r| draw_stream(design, n, seed, r as u64))
        .collect())
}

/// A single replicate; `design` must already be validated for `n`.
pub(crate) fn draw_stream(design: &Design, n: usize, seed: u64, stream: u64) -> AssignmentVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    match design {
        Design::IndependentBernoulli { p } => {
            AssignmentVector((0..n).map(|_| rng.random_bool(*p) as u8).collect())
        }
        Design::ClusterBernoulli { cluster_of, p } => {
            let n_clusters = cluster_of[..n].iter().map(|&c| c as usize + 1).max().unwrap_or(0);
            let coins: Vec<u8> = (0..n_clusters).map(|_| rng.random_bool(*p) as u8).collect();
            AssignmentVector(cluster_of[..n].iter().map(|&c| coins[c as usize]).collect())
        }
    }
}

/// Consecutive blocks of `size` nodes along the id ring: node `i` goes to
/// cluster `i / size`.
pub fn ring_clusters(n: usize, size: usize) -> Vec<u32> {
    let size = size.max(1);
    (0..n).map(|i| (i / size) as u32).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bernoulli_half_concentrates() {
        let z = draw(&Design::IndependentBernoulli { p: 0.5 }, 100_000, 11).unwrap();
        let mean = z.0.iter().map(|&v| v as f64).sum::<f64>() / z.len() as f64;
        assert!((0.49..=0.51).contains(&mean), "mean {mean}");
    }

    #[test]
    fn single_cluster_is_all_or_nothing() {
        let d = Design::ClusterBernoulli {
            cluster_of: vec![0; 50],
            p: 0.5,
        };
        for seed in 0..20 {
            let z = draw(&d, 50, seed).unwrap();
            assert!(z.0.iter().all(|&v| v == z.0[0]));
        }
    }

    #[test]
    fn draws_are_deterministic() {
        let d = Design::IndependentBernoulli { p: 0.3 };
        assert_eq!(draw(&d, 500, 42).unwrap(), draw(&d, 500, 42).unwrap());
        assert_ne!(draw(&d, 500, 42).unwrap(), draw(&d, 500, 43).unwrap());
    }

    #[test]
    fn missing_cluster_and_bad_p() {
        let d = Design::ClusterBernoulli {
            cluster_of: vec![0; 5],
            p: 0.5,
        };
        assert!(matches!(draw(&d, 6, 0), Err(Error::MissingCluster(5))));
        assert!(draw(&Design::IndependentBernoulli { p: 1.0 }, 3, 0).is_err());
        assert!(draw(&Design::IndependentBernoulli { p: 0.0 }, 3, 0).is_err());
    }

    #[test]
    fn single_replicate_is_stream_zero() {
        let d = Design::IndependentBernoulli { p: 0.5 };
        let reps = draw_replicates(&d, 300, 1, 9).unwrap();
        assert_eq!(reps.len(), 1);
        assert_eq!(reps[0], draw(&d, 300, 9).unwrap());
        assert!(draw_replicates(&d, 300, 0, 9).is_err());
    }

    #[test]
    fn replicate_means_concentrate() {
        let d = Design::IndependentBernoulli { p: 0.5 };
        let n = 400;
        let reps = draw_replicates(&d, n, 1000, 5).unwrap();
        let tol = 3.0 * (0.25f64 / 1000.0).sqrt();
        let within = (0..n)
            .filter(|&i| {
                let m = reps.iter().map(|z| z.0[i] as f64).sum::<f64>() / 1000.0;
                (m - 0.5).abs() <= tol
            })
            .count();
        assert!(within as f64 >= 0.99 * n as f64, "{within}/{n}");
        assert!(reps.windows(2).any(|w| w[0] != w[1]));
    }

    #[test]
    fn replicate_is_reproducible_in_isolation() {
        let d = Design::IndependentBernoulli { p: 0.5 };
        let reps = draw_replicates(&d, 200, 8, 77).unwrap();
        assert_eq!(reps[5], draw_stream(&d, 200, 77, 5));
    }

    #[test]
    fn ring_cluster_layout() {
        let c = ring_clusters(25, 10);
        assert!(c[..10].iter().all(|&x| x == 0));
        assert!(c[10..20].iter().all(|&x| x == 1));
        assert!(c[20..].iter().all(|&x| x == 2));
        assert_eq!(ring_clusters(25, 1), (0..25).collect::<Vec<u32>>());
        let big = ring_clusters(200_000, 10);
        assert_eq!(*big.iter().max().unwrap() + 1, 20_000);
    }

    #[test]
    fn clusters_are_coherent_across_replicates() {
        let clusters = ring_clusters(120, 10);
        let d = Design::ClusterBernoulli {
            cluster_of: clusters.clone(),
            p: 0.5,
        };
        for z in draw_replicates(&d, 120, 30, 1).unwrap() {
            for i in 0..120 {
                assert_eq!(z.0[i], z.0[(clusters[i] * 10) as usize]);
            }
        }
    }
}
