//! Adam on central finite-difference gradients, projected onto the unit
//! box. Returns the final iterate, not the best-so-far.

use rand::Rng;

use super::{uniform_point, AdamState, Objective, OptimError, OptimizerResult, SearchTrace};

/// Central finite-difference gradient at `x`, one coordinate pair at a time.
/// Probe points are projected onto `[0,1]`, matching how the iterate itself
/// is constrained; at the box boundary the estimate degrades to one-sided.
pub fn fd_gradient<O: Objective + ?Sized>(obj: &mut O, x: &[f64], eps: f64) -> Vec<f64> {
    let mut scratch = SearchTrace::new();
    fd_gradient_traced(obj, x, eps, &mut scratch)
}

pub(crate) fn fd_gradient_traced<O: Objective + ?Sized>(
    obj: &mut O,
    x: &[f64],
    eps: f64,
    search: &mut SearchTrace,
) -> Vec<f64> {
    let mut grad = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let up = (x[i] + eps).min(1.0);
        let down = (x[i] - eps).max(0.0);
        probe[i] = up;
        let f_up = obj.evaluate(&probe);
        search.observe(&probe, f_up);
        probe[i] = down;
        let f_down = obj.evaluate(&probe);
        search.observe(&probe, f_down);
        probe[i] = x[i];
        grad[i] = if up > down { (f_up - f_down) / (up - down) } else { 0.0 };
    }
    grad
}

pub fn adam_fd<O: Objective + ?Sized, R: Rng + ?Sized>(
    obj: &mut O,
    cfg: &super::AdamFdConfig,
    rng: &mut R,
) -> Result<OptimizerResult, OptimError> {
    if cfg.fd_eps <= 0.0 {
        return Err(OptimError::InvalidConfig("adam_fd needs fd_eps > 0".into()));
    }
    let dim = obj.dim();
    let mut x = uniform_point(rng, dim);
    let mut adam = AdamState::new(dim, cfg.lr);
    let mut search = SearchTrace::new();
    for iter in 0..cfg.iters {
        let grad = fd_gradient_traced(obj, &x, cfg.fd_eps, &mut search);
        adam.step(&mut x, &grad);
        for v in x.iter_mut() {
            *v = v.clamp(0.0, 1.0);
        }
        search.record(iter as u64, obj.evaluations());
    }
    // The method reports the final iterate, so it gets one real evaluation.
    let final_loss = obj.evaluate(&x);
    search.observe(&x, final_loss);
    search.record(cfg.iters as u64, obj.evaluations());
    Ok(search.into_result_with("adam_fd", 0, x, final_loss))
}

#[cfg(test)]
mod tests {
    use super::super::{AdamFdConfig, FnObjective};
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn quadratic_03(u: &[f64]) -> f64 {
        u.iter().map(|v| (v - 0.3) * (v - 0.3)).sum()
    }

    #[test]
    fn fd_gradient_matches_analytic_on_quadratic() {
        // d/du sum (u - 0.3)^2 = 2(u - 0.3) = 0.4 per coordinate at u = 0.5.
        let dim = 6;
        let mut obj = FnObjective::new(dim, quadratic_03);
        let x = vec![0.5; dim];
        let grad = fd_gradient(&mut obj, &x, 1e-3);
        for g in &grad {
            assert!((g - 0.4).abs() < 1e-6, "gradient {g}");
            assert!((g - 0.4).abs() / 0.4 < 1e-4);
        }
        assert_eq!(obj.evaluations(), 2 * dim as u64);
    }

    #[test]
    fn first_iteration_moves_opposite_gradient_sign() {
        // f decreases toward 0.3, so every coordinate above 0.3 must move
        // down after one Adam step and every coordinate below must move up.
        let dim = 8;
        let mut obj = FnObjective::new(dim, quadratic_03);
        let cfg = AdamFdConfig { iters: 1, lr: 0.001, fd_eps: 1e-3 };
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let start = uniform_point(&mut ChaCha8Rng::seed_from_u64(21), dim);
        let result = adam_fd(&mut obj, &cfg, &mut rng).unwrap();
        for (s, e) in start.iter().zip(&result.best.values) {
            if (s - 0.3).abs() > 1e-3 {
                assert_eq!((s - 0.3).signum(), (s - e).signum(), "start {s} -> end {e}");
            }
        }
    }

    #[test]
    fn evaluations_per_iteration_is_2n() {
        let dim = 78;
        let mut obj = FnObjective::new(dim, quadratic_03);
        let cfg = AdamFdConfig { iters: 3, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        adam_fd(&mut obj, &cfg, &mut rng).unwrap();
        // 156 evaluations per iteration plus one final-iterate evaluation.
        assert_eq!(obj.evaluations(), 3 * 156 + 1);
    }

    #[test]
    fn converges_on_smooth_quadratic() {
        let dim = 4;
        let mut obj = FnObjective::new(dim, quadratic_03);
        let cfg = AdamFdConfig { iters: 2000, lr: 0.01, fd_eps: 1e-3 };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let result = adam_fd(&mut obj, &cfg, &mut rng).unwrap();
        assert!(result.best_loss < 1e-4, "final loss {}", result.best_loss);
    }

    #[test]
    fn returns_final_iterate_not_best_so_far() {
        // With a huge learning rate the iterate overshoots; the reported
        // solution must still be the final point.
        let dim = 2;
        let mut obj = FnObjective::new(dim, quadratic_03);
        let cfg = AdamFdConfig { iters: 5, lr: 0.4, fd_eps: 1e-3 };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let result = adam_fd(&mut obj, &cfg, &mut rng).unwrap();
        assert_eq!(result.best_loss, quadratic_03(&result.best.values));
    }
}
