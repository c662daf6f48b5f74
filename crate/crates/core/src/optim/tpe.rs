//! Tree-structured Parzen estimator over the unit box with independent
//! per-dimension densities.
//!
//! After a uniform startup phase, each trial splits the history at the
//! `ceil(gamma * n)`-th best loss, fits truncated-Gaussian Parzen densities
//! to the good and bad sets (Scott's-rule bandwidth plus a uniform prior
//! component), draws candidates from the good density, and keeps the one
//! maximizing the density ratio `l(x) / g(x)`.

use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use super::{uniform_point, Objective, OptimError, OptimizerResult, SearchTrace};

/// Size of the good set: `ceil(gamma * n)` for `n` observed trials.
pub fn tpe_split_count(gamma: f64, n: usize) -> usize {
    (gamma * n as f64).ceil() as usize
}

/// Truncated-Gaussian Parzen density on `[0, 1]` with one component per
/// observation plus a uniform prior component, all equally weighted.
struct ParzenDensity {
    points: Vec<f64>,
    bandwidth: f64,
    /// Per-component truncation mass `Phi((1-mu)/bw) - Phi((0-mu)/bw)`.
    truncation: Vec<f64>,
}

impl ParzenDensity {
    fn fit(points: &[f64]) -> Self {
        let k = points.len();
        let bandwidth = if k >= 2 {
            let mean = points.iter().sum::<f64>() / k as f64;
            let var =
                points.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / (k - 1) as f64;
            // Scott's rule with a floor so identical points keep a usable width.
            (var.sqrt().max(1e-3)) * (k as f64).powf(-0.2)
        } else {
            1.0
        };
        let normal = Normal::new(0.0, 1.0).unwrap();
        let truncation = points
            .iter()
            .map(|&mu| normal.cdf((1.0 - mu) / bandwidth) - normal.cdf((0.0 - mu) / bandwidth))
            .collect();
        Self { points: points.to_vec(), bandwidth, truncation }
    }

    /// Density at `x`, averaging the Gaussian components and the uniform
    /// prior.
    fn pdf(&self, x: f64) -> f64 {
        let k = self.points.len();
        let mut acc = 1.0; // uniform prior component: density 1 on [0, 1]
        let inv_bw = 1.0 / self.bandwidth;
        for (&mu, &trunc) in self.points.iter().zip(&self.truncation) {
            let z = (x - mu) * inv_bw;
            let phi = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
            acc += phi * inv_bw / trunc.max(1e-12);
        }
        acc / (k + 1) as f64
    }

    /// Draw one sample: pick a component uniformly, then inverse-CDF sample
    /// the truncated Gaussian (or the uniform prior).
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let k = self.points.len();
        let component = rng.random_range(0..k + 1);
        if component == k {
            return rng.random::<f64>();
        }
        let mu = self.points[component];
        let normal = Normal::new(0.0, 1.0).unwrap();
        let lo = normal.cdf((0.0 - mu) / self.bandwidth);
        let hi = normal.cdf((1.0 - mu) / self.bandwidth);
        let p = lo + rng.random::<f64>() * (hi - lo);
        let x = mu + self.bandwidth * normal.inverse_cdf(p.clamp(1e-15, 1.0 - 1e-15));
        x.clamp(0.0, 1.0)
    }
}

pub fn tpe<O: Objective + ?Sized, R: Rng + ?Sized>(
    obj: &mut O,
    cfg: &super::TpeConfig,
    rng: &mut R,
) -> Result<OptimizerResult, OptimError> {
    if !(0.0 < cfg.gamma && cfg.gamma <= 1.0) {
        return Err(OptimError::InvalidConfig("gamma must lie in (0, 1]".into()));
    }
    if cfg.candidates == 0 {
        return Err(OptimError::InvalidConfig("tpe needs candidates >= 1".into()));
    }
    let dim = obj.dim();
    let mut search = SearchTrace::new();
    let mut history: Vec<(Vec<f64>, f64)> = Vec::with_capacity(cfg.trials);

    for trial in 0..cfg.trials {
        let candidate = if trial < cfg.startup || history.len() < 2 {
            uniform_point(rng, dim)
        } else {
            let order = super::argsort(
                &history.iter().map(|(_, loss)| *loss).collect::<Vec<f64>>(),
            );
            let n_good = tpe_split_count(cfg.gamma, history.len()).min(history.len() - 1).max(1);
            let good: Vec<usize> = order[..n_good].to_vec();
            let bad: Vec<usize> = order[n_good..].to_vec();

            let mut point = Vec::with_capacity(dim);
            for d in 0..dim {
                let good_vals: Vec<f64> = good.iter().map(|&i| history[i].0[d]).collect();
                let bad_vals: Vec<f64> = bad.iter().map(|&i| history[i].0[d]).collect();
                let l = ParzenDensity::fit(&good_vals);
                let g = ParzenDensity::fit(&bad_vals);
                let mut best_x = 0.0;
                let mut best_ratio = f64::NEG_INFINITY;
                for _ in 0..cfg.candidates {
                    let x = l.sample(rng);
                    let ratio = l.pdf(x).ln() - g.pdf(x).ln();
                    if ratio > best_ratio {
                        best_ratio = ratio;
                        best_x = x;
                    }
                }
                point.push(best_x);
            }
            point
        };
        let loss = obj.evaluate(&candidate);
        search.observe(&candidate, loss);
        search.record(trial as u64, obj.evaluations());
        history.push((candidate, loss));
    }
    Ok(search.into_result("tpe", 0))
}

#[cfg(test)]
mod tests {
    use super::super::{FnObjective, TpeConfig};
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sphere(u: &[f64]) -> f64 {
        u.iter().map(|v| (v - 0.8) * (v - 0.8)).sum()
    }

    #[test]
    fn split_count_is_ceil() {
        assert_eq!(tpe_split_count(0.25, 12), 3);
        assert_eq!(tpe_split_count(0.25, 13), 4);
        assert_eq!(tpe_split_count(0.25, 4), 1);
        for n in 4..=100 {
            assert_eq!(tpe_split_count(0.25, n), (0.25 * n as f64).ceil() as usize);
        }
    }

    #[test]
    fn default_trial_count() {
        let cfg = TpeConfig::default();
        assert_eq!(cfg.trials, 1000);
        let mut obj = FnObjective::new(3, sphere);
        let small = TpeConfig { trials: 40, ..Default::default() };
        tpe(&mut obj, &small, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(obj.evaluations(), 40);
    }

    #[test]
    fn candidates_stay_in_unit_box() {
        let dim = 6;
        let mut obj = FnObjective::new(dim, move |u: &[f64]| {
            assert!(u.iter().all(|&v| (0.0..=1.0).contains(&v)), "candidate left the box: {u:?}");
            sphere(u)
        });
        let cfg = TpeConfig { trials: 120, ..Default::default() };
        tpe(&mut obj, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    }

    #[test]
    fn parzen_density_is_proper_mixture() {
        // pdf integrates to ~1 over [0, 1] (simple Riemann check).
        let d = ParzenDensity::fit(&[0.2, 0.5, 0.9]);
        let steps = 20_000;
        let integral: f64 =
            (0..steps).map(|i| d.pdf((i as f64 + 0.5) / steps as f64) / steps as f64).sum();
        assert!((integral - 1.0).abs() < 1e-6, "integral {integral}");
    }

    #[test]
    fn parzen_sampler_matches_density_mean() {
        let d = ParzenDensity::fit(&[0.3, 0.35, 0.4]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 50_000;
        let mean: f64 = (0..n).map(|_| d.sample(&mut rng)).sum::<f64>() / n as f64;
        let steps = 20_000;
        let expected: f64 = (0..steps)
            .map(|i| {
                let x = (i as f64 + 0.5) / steps as f64;
                x * d.pdf(x) / steps as f64
            })
            .sum();
        assert!((mean - expected).abs() < 0.01, "mean {mean} vs expected {expected}");
    }

    #[test]
    fn beats_uniform_startup_phase_on_sphere() {
        let dim = 4;
        let mut obj = FnObjective::new(dim, sphere);
        let cfg = TpeConfig { trials: 300, ..Default::default() };
        let result = tpe(&mut obj, &cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        // Best after guided trials beats the best of the 10-trial startup.
        let startup_best = result.trace[cfg.startup - 1].best_loss;
        assert!(result.best_loss < startup_best, "no improvement over startup");
        assert!(result.best_loss < 0.1, "loss {}", result.best_loss);
    }
}
