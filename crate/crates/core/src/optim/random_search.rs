//! Uniform random search: evaluate `n` i.i.d. uniform points and keep the
//! argmin.

use rand::Rng;

use super::{uniform_point, Objective, OptimError, OptimizerResult, SearchTrace};

pub fn random_search<O: Objective + ?Sized, R: Rng + ?Sized>(
    obj: &mut O,
    cfg: &super::RandomSearchConfig,
    rng: &mut R,
) -> Result<OptimizerResult, OptimError> {
    if cfg.n == 0 {
        return Err(OptimError::InvalidConfig("random_search needs n >= 1".into()));
    }
    let dim = obj.dim();
    let mut search = SearchTrace::new();
    for i in 0..cfg.n {
        let u = uniform_point(rng, dim);
        let loss = obj.evaluate(&u);
        search.observe(&u, loss);
        search.record(i as u64, obj.evaluations());
    }
    Ok(search.into_result("random_search", 0))
}

#[cfg(test)]
mod tests {
    use super::super::{FnObjective, MethodConfig, RandomSearchConfig};
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sphere_half(u: &[f64]) -> f64 {
        u.iter().map(|v| (v - 0.5) * (v - 0.5)).sum()
    }

    #[test]
    fn single_sample_returns_that_sample() {
        let mut obj = FnObjective::new(4, sphere_half);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let result =
            random_search(&mut obj, &RandomSearchConfig { n: 1 }, &mut rng).unwrap();
        let mut check = ChaCha8Rng::seed_from_u64(3);
        let expected = uniform_point(&mut check, 4);
        assert_eq!(result.best.values, expected);
        assert_eq!(result.best_loss, sphere_half(&expected));
        assert_eq!(obj.evaluations(), 1);
    }

    #[test]
    fn default_budget_is_1000_evaluations() {
        let mut obj = FnObjective::new(3, sphere_half);
        let cfg = RandomSearchConfig::default();
        assert_eq!(cfg.n, 1000);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        random_search(&mut obj, &cfg, &mut rng).unwrap();
        assert_eq!(obj.evaluations(), 1000);
    }

    #[test]
    fn best_of_1000_beats_median_single_sample() {
        // Simulate both sides with seeded draws on f(u) = ||u - 0.5|^2.
        let dim = 10;
        let mut obj = FnObjective::new(dim, sphere_half);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let best =
            random_search(&mut obj, &RandomSearchConfig { n: 1000 }, &mut rng).unwrap().best_loss;

        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut singles: Vec<f64> =
            (0..1001).map(|_| sphere_half(&uniform_point(&mut rng, dim))).collect();
        singles.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = singles[singles.len() / 2];
        assert!(best < median, "best-of-1000 {best} vs median single {median}");
    }

    #[test]
    fn trace_is_non_increasing_and_ends_at_best() {
        let mut obj = FnObjective::new(5, sphere_half);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let result =
            random_search(&mut obj, &RandomSearchConfig { n: 200 }, &mut rng).unwrap();
        for pair in result.trace.windows(2) {
            assert!(pair[1].best_loss <= pair[0].best_loss);
        }
        assert_eq!(result.trace.last().unwrap().best_loss, result.best_loss);
    }

    #[test]
    fn deterministic_via_dispatch() {
        let cfg = MethodConfig::RandomSearch(RandomSearchConfig { n: 50 });
        let run = |seed| {
            let mut obj = FnObjective::new(6, sphere_half);
            super::super::run_on_objective(&cfg, &mut obj, seed).unwrap()
        };
        let a = run(9);
        let b = run(9);
        assert_eq!(a, b);
        assert_eq!(a.method, "random_search");
        assert_eq!(a.seed, 9);
        assert_eq!(a.evaluations, 50);
    }
}
