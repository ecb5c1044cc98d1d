//! Stochastic gradient oracles.
//!
//! Every draw is addressed by `(node, draw)` and seeded from those two numbers
//! alone, so any consumer can replay the exact sample a node used.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

use super::objective::{LocalObjective, ObjectiveKind};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleMode {
    Full,
    /// Additive isotropic noise with total variance `sigma²`.
    Gaussian {
        sigma: f64,
    },
    /// `batch` shard indices drawn uniformly with replacement.
    Minibatch {
        batch: usize,
    },
}

impl fmt::Display for OracleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleMode::Full => f.write_str("full"),
            OracleMode::Gaussian { sigma } => write!(f, "gaussian:{sigma}"),
            OracleMode::Minibatch { batch } => write!(f, "minibatch:{batch}"),
        }
    }
}

impl FromStr for OracleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (head, arg) = s.split_once(':').unwrap_or((s, ""));
        match head {
            "full" => Ok(OracleMode::Full),
            "gaussian" => {
                let sigma: f64 = arg
                    .parse()
                    .map_err(|_| Error::Config(format!("bad gaussian sigma in `{s}`")))?;
                if !(sigma >= 0.0) {
                    return Err(Error::Config(format!(
                        "sigma must be nonnegative, got {sigma}"
                    )));
                }
                Ok(OracleMode::Gaussian { sigma })
            }
            "minibatch" => {
                let batch: usize = arg
                    .parse()
                    .map_err(|_| Error::Config(format!("bad minibatch size in `{s}`")))?;
                if batch == 0 {
                    return Err(Error::Config("minibatch size must be positive".into()));
                }
                Ok(OracleMode::Minibatch { batch })
            }
            _ => Err(Error::Config(format!("unknown oracle mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradOracle {
    pub mode: OracleMode,
    pub seed: u64,
}

/// SplitMix64 finalizer, used to derive independent per-node seeds.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl GradOracle {
    pub fn full() -> Self {
        Self {
            mode: OracleMode::Full,
            seed: 0,
        }
    }

    pub fn new(mode: OracleMode, seed: u64) -> Self {
        Self { mode, seed }
    }

    pub fn is_deterministic(&self) -> bool {
        match self.mode {
            OracleMode::Full => true,
            OracleMode::Gaussian { sigma } => sigma == 0.0,
            OracleMode::Minibatch { .. } => false,
        }
    }

    /// Total sampling variance when it is known in closed form.
    pub fn sigma_sq(&self) -> Option<f64> {
        match self.mode {
            OracleMode::Full => Some(0.0),
            OracleMode::Gaussian { sigma } => Some(sigma * sigma),
            OracleMode::Minibatch { .. } => None,
        }
    }

    pub fn check_compatible(&self, obj: &LocalObjective) -> Result<()> {
        if matches!(self.mode, OracleMode::Minibatch { .. }) && obj.kind == ObjectiveKind::Quadratic
        {
            return Err(Error::Config(
                "minibatch sampling needs a data-driven objective".into(),
            ));
        }
        Ok(())
    }

    fn rng(&self, node: usize, draw: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(mix64(self.seed ^ mix64(node as u64)));
        rng.set_stream(draw);
        rng
    }

    /// The `draw`-th stochastic gradient of node `node` at `x`.
    pub fn sample(
        &self,
        obj: &LocalObjective,
        x: &[f64],
        node: usize,
        draw: u64,
    ) -> Result<Vec<f64>> {
        match self.mode {
            OracleMode::Full => obj.grad(x),
            OracleMode::Gaussian { sigma } => {
                let mut g = obj.grad(x)?;
                if sigma > 0.0 {
                    let sd = sigma / (g.len() as f64).sqrt();
                    let mut rng = self.rng(node, draw);
                    for gi in g.iter_mut() {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        *gi += sd * e;
                    }
                }
                Ok(g)
            }
            OracleMode::Minibatch { batch } => {
                obj.grad(x)?; // validates x
                self.check_compatible(obj)?;
                let m = obj.num_samples();
                let scale = obj.data_scale() * m as f64 / batch as f64;
                let mut rng = self.rng(node, draw);
                let mut g = vec![0.0; x.len()];
                for _ in 0..batch {
                    let s = rng.random_range(0..m);
                    obj.add_sample_grad(x, s, scale, &mut g);
                }
                obj.add_reg_grad(x, &mut g);
                Ok(g)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::data::{synthesize, SyntheticSpec};
    use crate::problems::objective::Normalization;
    use crate::vecops::dist2_sq;

    #[test]
    fn gaussian_total_variance() {
        let obj = LocalObjective::quadratic(vec![1.0, -2.0, 0.5, 3.0]);
        let oracle = GradOracle::new(OracleMode::Gaussian { sigma: 0.5 }, 11);
        let x = [0.3, 0.1, -0.7, 2.0];
        let exact = obj.grad(&x).unwrap();
        let draws = 100_000;
        let mean_sq: f64 = (0..draws)
            .map(|d| dist2_sq(&oracle.sample(&obj, &x, 2, d).unwrap(), &exact))
            .sum::<f64>()
            / draws as f64;
        assert!((mean_sq / 0.25 - 1.0).abs() <= 0.05, "E|e|^2 = {mean_sq}");
    }

    fn unbiased_within_3se(oracle: GradOracle, obj: &LocalObjective, x: &[f64]) {
        let exact = obj.grad(x).unwrap();
        let p = x.len();
        let draws = 100_000u64;
        let mut sum = vec![0.0; p];
        let mut sumsq = vec![0.0; p];
        for d in 0..draws {
            let g = oracle.sample(obj, x, 0, d).unwrap();
            for c in 0..p {
                sum[c] += g[c];
                sumsq[c] += g[c] * g[c];
            }
        }
        let nd = draws as f64;
        for c in 0..p {
            let mean = sum[c] / nd;
            let var = (sumsq[c] / nd - mean * mean).max(0.0);
            let se = (var / nd).sqrt();
            assert!(
                (mean - exact[c]).abs() <= 3.0 * se + 1e-15,
                "coord {c}: mean {mean} exact {} se {se}",
                exact[c]
            );
        }
    }

    #[test]
    fn gaussian_is_unbiased() {
        let obj = LocalObjective::quadratic(vec![1.0, 2.0, 3.0]);
        unbiased_within_3se(
            GradOracle::new(OracleMode::Gaussian { sigma: 0.5 }, 5),
            &obj,
            &[0.0, 0.0, 0.0],
        );
    }

    #[test]
    fn minibatch_is_unbiased() {
        let shard = synthesize(&SyntheticSpec {
            samples: 30,
            dim: 3,
            separation: 2.0,
            seed: 1,
        })
        .unwrap();
        for norm in [Normalization::Mean, Normalization::Sum] {
            let obj =
                LocalObjective::logistic(ObjectiveKind::RidgeLogistic, shard.clone(), 0.01, norm)
                    .unwrap();
            unbiased_within_3se(
                GradOracle::new(OracleMode::Minibatch { batch: 4 }, 9),
                &obj,
                &[0.5, -1.0, 0.2],
            );
        }
    }

    #[test]
    fn draws_are_replayable() {
        let obj = LocalObjective::quadratic(vec![1.0, 2.0]);
        let o = GradOracle::new(OracleMode::Gaussian { sigma: 1.0 }, 3);
        let a = o.sample(&obj, &[0.0, 0.0], 1, 17).unwrap();
        let b = o.sample(&obj, &[0.0, 0.0], 1, 17).unwrap();
        let c = o.sample(&obj, &[0.0, 0.0], 1, 18).unwrap();
        let d = o.sample(&obj, &[0.0, 0.0], 2, 17).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn noise_does_not_depend_on_point() {
        let obj = LocalObjective::quadratic(vec![0.0, 0.0]);
        let o = GradOracle::new(OracleMode::Gaussian { sigma: 1.0 }, 3);
        let a = o.sample(&obj, &[0.0, 0.0], 0, 4).unwrap();
        let b = o.sample(&obj, &[1.0, 1.0], 0, 4).unwrap();
        assert!((b[0] - a[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn non_finite_input() {
        let obj = LocalObjective::quadratic(vec![0.0]);
        let o = GradOracle::new(OracleMode::Gaussian { sigma: 1.0 }, 3);
        assert!(matches!(
            o.sample(&obj, &[f64::NAN], 0, 0),
            Err(Error::NumericDomain(_))
        ));
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("full".parse::<OracleMode>().unwrap(), OracleMode::Full);
        assert_eq!(
            "gaussian:0.5".parse::<OracleMode>().unwrap(),
            OracleMode::Gaussian { sigma: 0.5 }
        );
        assert_eq!(
            "minibatch:32".parse::<OracleMode>().unwrap(),
            OracleMode::Minibatch { batch: 32 }
        );
        assert!("minibatch:0".parse::<OracleMode>().is_err());
    }
}
