//! Random training points.
//!
//! Every draw comes from a ChaCha stream keyed by `(seed, stream)`: stream 0
//! holds the initial and boundary sets, stream `k + 1` the collocation set of
//! iteration `k`. Any iteration's points can be regenerated without replaying
//! earlier ones, which keeps resumed runs identical to uninterrupted ones.

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::physics::{Domain, Side};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub n_collocation: usize,
    pub n_ic: usize,
    pub n_bc_per_side: usize,
    pub seed: u64,
    pub resample_collocation: bool,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            n_collocation: 10_000,
            n_ic: 1_000,
            n_bc_per_side: 1_000,
            seed: 0,
            resample_collocation: true,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.n_collocation == 0 || self.n_ic == 0 || self.n_bc_per_side == 0 {
            return Err(format!(
                "point counts must be at least 1 (collocation {}, ic {}, bc per side {})",
                self.n_collocation, self.n_ic, self.n_bc_per_side
            ));
        }
        Ok(())
    }
}

/// One iteration's training points.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    /// Interior `(t, x)` points for the PDE residual.
    pub collocation: Vec<(f64, f64)>,
    /// Positions on the initial time slice.
    pub ic: Vec<f64>,
    /// Boundary times, left side first.
    pub bc: Vec<(Side, f64)>,
}

fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn open_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let u: f64 = rng.sample(Open01);
    lo + (hi - lo) * u
}

/// Initial and boundary points; identical for every iteration.
pub fn sample_fixed(cfg: &SamplingConfig, domain: &Domain) -> (Vec<f64>, Vec<(Side, f64)>) {
    let mut rng = stream(cfg.seed, 0);
    let ic = (0..cfg.n_ic)
        .map(|_| open_uniform(&mut rng, domain.x_min, domain.x_max))
        .collect();
    let bc = [Side::Left, Side::Right]
        .into_iter()
        .flat_map(|side| std::iter::repeat_n(side, cfg.n_bc_per_side))
        .map(|side| (side, open_uniform(&mut rng, domain.t_min, domain.t_max)))
        .collect();
    (ic, bc)
}

/// Collocation points for `iteration`, uniform over the open domain.
pub fn sample_collocation(cfg: &SamplingConfig, domain: &Domain, iteration: u64) -> Vec<(f64, f64)> {
    let key = if cfg.resample_collocation { iteration + 1 } else { 1 };
    let mut rng = stream(cfg.seed, key);
    (0..cfg.n_collocation)
        .map(|_| {
            let t = open_uniform(&mut rng, domain.t_min, domain.t_max);
            let x = open_uniform(&mut rng, domain.x_min, domain.x_max);
            (t, x)
        })
        .collect()
}

pub fn sample_points(cfg: &SamplingConfig, domain: &Domain, iteration: u64) -> PointSet {
    let (ic, bc) = sample_fixed(cfg, domain);
    PointSet {
        collocation: sample_collocation(cfg, domain, iteration),
        ic,
        bc,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_counts() {
        let p = sample_points(&SamplingConfig::default(), &Domain::default(), 0);
        assert_eq!(p.collocation.len(), 10_000);
        assert_eq!(p.ic.len(), 1_000);
        assert_eq!(p.bc.len(), 2_000);
        assert_eq!(p.bc.iter().filter(|(s, _)| *s == Side::Left).count(), 1_000);
    }

    #[test]
    fn points_lie_inside_domain() {
        let d = Domain {
            x_min: -2.0,
            x_max: 3.0,
            t_min: 0.5,
            t_max: 1.5,
        };
        let cfg = SamplingConfig {
            n_collocation: 500,
            n_ic: 100,
            n_bc_per_side: 100,
            ..SamplingConfig::default()
        };
        let p = sample_points(&cfg, &d, 3);
        assert!(p.collocation.iter().all(|&(t, x)| t > d.t_min && t < d.t_max && x > d.x_min && x < d.x_max));
        assert!(p.ic.iter().all(|&x| (d.x_min..=d.x_max).contains(&x)));
        assert!(p.bc.iter().all(|&(_, t)| (d.t_min..=d.t_max).contains(&t)));
    }

    #[test]
    fn deterministic_per_iteration() {
        let cfg = SamplingConfig::default();
        let d = Domain::default();
        assert_eq!(sample_points(&cfg, &d, 5), sample_points(&cfg, &d, 5));
        assert_ne!(sample_collocation(&cfg, &d, 5), sample_collocation(&cfg, &d, 6));
        // fixed sets do not move with the iteration
        assert_eq!(sample_points(&cfg, &d, 0).ic, sample_points(&cfg, &d, 9).ic);
        let other = SamplingConfig { seed: 1, ..cfg };
        assert_ne!(sample_points(&cfg, &d, 0).ic, sample_points(&other, &d, 0).ic);
    }

    #[test]
    fn frozen_collocation_when_resampling_is_off() {
        let cfg = SamplingConfig {
            resample_collocation: false,
            n_collocation: 50,
            ..SamplingConfig::default()
        };
        let d = Domain::default();
        assert_eq!(sample_collocation(&cfg, &d, 0), sample_collocation(&cfg, &d, 17));
    }

    #[test]
    fn rejects_zero_counts() {
        let cfg = SamplingConfig {
            n_ic: 0,
            ..SamplingConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
