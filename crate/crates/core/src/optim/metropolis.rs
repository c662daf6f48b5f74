//! Metropolis MCMC over the unit box: uniform prior, coordinate-resampling
//! proposals, and a Gaussian noise model for the likelihood.
//!
//! The proposal resamples each coordinate independently with probability
//! `p_resample`, which is symmetric, so the acceptance probability reduces
//! to the likelihood ratio. The chain's posterior samples are scored by the
//! spectral reconstruction loss on the side, and the best-scoring visited
//! state is returned.

use rand::Rng;

use super::{
    uniform_point, Evaluation, LikelihoodMode, Objective, OptimError, OptimizerResult, SearchTrace,
};

/// Metropolis acceptance for a symmetric proposal: accept with probability
/// `min(1, exp(delta_loglik))`.
pub fn metropolis_accept<R: Rng + ?Sized>(delta_loglik: f64, rng: &mut R) -> bool {
    delta_loglik >= 0.0 || rng.random::<f64>() < delta_loglik.exp()
}

fn log_likelihood(eval: &Evaluation, cfg: &super::MetropolisConfig) -> f64 {
    let two_sigma_sq = 2.0 * cfg.sigma * cfg.sigma;
    match (cfg.likelihood, eval.waveform_sq_err) {
        (LikelihoodMode::Waveform, Some(sq_err)) => -sq_err / two_sigma_sq,
        // Pseudo-likelihood on the spectral loss; also the fallback when the
        // objective carries no target waveform.
        _ => -eval.loss / two_sigma_sq,
    }
}

pub fn metropolis<O: Objective + ?Sized, R: Rng + ?Sized>(
    obj: &mut O,
    cfg: &super::MetropolisConfig,
    rng: &mut R,
) -> Result<OptimizerResult, OptimError> {
    if !(0.0..=1.0).contains(&cfg.p_resample) {
        return Err(OptimError::InvalidConfig("p_resample must lie in [0, 1]".into()));
    }
    if cfg.sigma <= 0.0 {
        return Err(OptimError::InvalidConfig("sigma must be positive".into()));
    }
    let dim = obj.dim();
    let mut search = SearchTrace::new();

    let mut current = uniform_point(rng, dim);
    let eval = obj.evaluate_full(&current);
    let mut current_loglik = log_likelihood(&eval, cfg);
    search.observe(&current, eval.loss);
    search.record(0, obj.evaluations());

    for step in 0..cfg.samples {
        let mut proposal = current.clone();
        for v in proposal.iter_mut() {
            if rng.random::<f64>() < cfg.p_resample {
                *v = rng.random::<f64>();
            }
        }
        let eval = obj.evaluate_full(&proposal);
        let loglik = log_likelihood(&eval, cfg);
        if metropolis_accept(loglik - current_loglik, rng) {
            current = proposal;
            current_loglik = loglik;
            // Only chain states count as visited posterior samples.
            search.observe(&current, eval.loss);
        }
        search.record(step as u64 + 1, obj.evaluations());
    }
    Ok(search.into_result("metropolis", 0))
}

#[cfg(test)]
mod tests {
    use super::super::{FnObjective, MetropolisConfig};
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sphere(u: &[f64]) -> f64 {
        u.iter().map(|v| (v - 0.5) * (v - 0.5)).sum()
    }

    #[test]
    fn higher_likelihood_always_accepted() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            assert!(metropolis_accept(0.0, &mut rng));
            assert!(metropolis_accept(3.5, &mut rng));
        }
    }

    #[test]
    fn acceptance_probability_matches_formula() {
        // delta = -2 accepts with probability e^-2 ~ 0.1353.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 200_000;
        let accepted = (0..n).filter(|_| metropolis_accept(-2.0, &mut rng)).count();
        let rate = accepted as f64 / n as f64;
        assert!((rate - (-2.0f64).exp()).abs() < 0.005, "rate {rate}");
    }

    #[test]
    fn empirical_acceptance_rate_for_unit_penalty_stream() {
        // delta = -1 over 10,000 proposals: rate within e^-1 +- 0.02.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 10_000;
        let accepted = (0..n).filter(|_| metropolis_accept(-1.0, &mut rng)).count();
        let rate = accepted as f64 / n as f64;
        assert!((rate - (-1.0f64).exp()).abs() < 0.02, "rate {rate}");
    }

    #[test]
    fn expected_resampled_coordinates() {
        // p = 0.1 over 78 coordinates resamples 7.8 on average.
        let cfg = MetropolisConfig::default();
        assert!((cfg.p_resample * 78.0 - 7.8).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let trials = 20_000;
        let mut changed = 0usize;
        for _ in 0..trials {
            for _ in 0..78 {
                if rng.random::<f64>() < cfg.p_resample {
                    changed += 1;
                }
            }
        }
        let mean = changed as f64 / trials as f64;
        assert!((mean - 7.8).abs() < 0.1, "mean resampled {mean}");
    }

    #[test]
    fn chain_improves_over_uniform_start_on_sphere() {
        let mut obj = FnObjective::new(10, sphere);
        let cfg = MetropolisConfig { samples: 2000, ..Default::default() };
        let result = metropolis(&mut obj, &cfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(obj.evaluations(), 2001);
        assert!(result.best_loss < result.trace[0].best_loss);
        assert_eq!(result.trace.last().unwrap().best_loss, result.best_loss);
    }

    #[test]
    fn spectral_loss_mode_used_when_no_waveform() {
        // FnObjective has no waveform; the likelihood falls back to the
        // spectral-loss mode even when waveform is configured.
        let mut obj = FnObjective::new(4, sphere);
        let cfg = MetropolisConfig { samples: 100, ..Default::default() };
        let result = metropolis(&mut obj, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert!(result.best_loss.is_finite());
    }
}
