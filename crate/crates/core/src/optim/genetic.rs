//! Steady-state genetic algorithm: the fittest few survive as parents,
//! children from single-point crossover plus gene-resampling mutation
//! replace the worst of the population.

use rand::Rng;

use super::{argsort, uniform_point, Objective, OptimError, OptimizerResult, SearchTrace};

/// Single-point crossover: the first `point` genes come from `a`, the rest
/// from `b`.
pub fn crossover(a: &[f64], b: &[f64], point: usize) -> Vec<f64> {
    let mut child = a[..point].to_vec();
    child.extend_from_slice(&b[point..]);
    child
}

/// Replace a uniformly chosen fraction of genes with fresh uniform values.
/// A positive rate always mutates at least one gene.
pub fn mutate<R: Rng + ?Sized>(child: &mut [f64], rate: f64, rng: &mut R) {
    if rate <= 0.0 {
        return;
    }
    let n_genes = ((child.len() as f64 * rate).round() as usize).clamp(1, child.len());
    for _ in 0..n_genes {
        let idx = rng.random_range(0..child.len());
        child[idx] = rng.random::<f64>();
    }
}

pub fn genetic<O: Objective + ?Sized, R: Rng + ?Sized>(
    obj: &mut O,
    cfg: &super::GeneticConfig,
    rng: &mut R,
) -> Result<OptimizerResult, OptimError> {
    if cfg.num_parents < 2 || cfg.population < cfg.num_parents {
        return Err(OptimError::InvalidConfig(
            "genetic needs population >= num_parents >= 2".into(),
        ));
    }
    let dim = obj.dim();
    let mut search = SearchTrace::new();

    let mut population: Vec<Vec<f64>> =
        (0..cfg.population).map(|_| uniform_point(rng, dim)).collect();
    let mut fitness: Vec<f64> = population
        .iter()
        .map(|ind| {
            let loss = obj.evaluate(ind);
            search.observe(ind, loss);
            loss
        })
        .collect();
    search.record(0, obj.evaluations());

    let n_children = cfg.population - cfg.num_parents;
    for iter in 0..cfg.iters {
        let order = argsort(&fitness);
        let parents: Vec<&Vec<f64>> =
            order[..cfg.num_parents].iter().map(|&i| &population[i]).collect();

        let mut children = Vec::with_capacity(n_children);
        for _ in 0..n_children {
            let pa = rng.random_range(0..cfg.num_parents);
            let pb = {
                let mut pb = rng.random_range(0..cfg.num_parents - 1);
                if pb >= pa {
                    pb += 1;
                }
                pb
            };
            let point = rng.random_range(1..dim);
            let mut child = crossover(parents[pa], parents[pb], point);
            mutate(&mut child, cfg.mutation_rate, rng);
            children.push(child);
        }

        // Children replace the worst individuals.
        let worst: Vec<usize> = order[cfg.num_parents..].to_vec();
        for (slot, child) in worst.into_iter().zip(children) {
            let loss = obj.evaluate(&child);
            search.observe(&child, loss);
            population[slot] = child;
            fitness[slot] = loss;
        }
        search.record(iter as u64 + 1, obj.evaluations());
    }
    Ok(search.into_result("genetic_algorithm", 0))
}

#[cfg(test)]
mod tests {
    use super::super::{FnObjective, GeneticConfig, RandomSearchConfig};
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sphere(u: &[f64]) -> f64 {
        u.iter().map(|v| (v - 0.4) * (v - 0.4)).sum()
    }

    #[test]
    fn crossover_takes_prefix_from_first_parent() {
        let a = vec![1.0; 6];
        let b = vec![2.0; 6];
        assert_eq!(crossover(&a, &b, 2), vec![1.0, 1.0, 2.0, 2.0, 2.0, 2.0]);
        assert_eq!(crossover(&a, &b, 5), vec![1.0, 1.0, 1.0, 1.0, 1.0, 2.0]);
    }

    #[test]
    fn zero_mutation_identical_population_is_fixed_point() {
        // Crossover of identical parents reproduces them, so the population
        // never changes and neither does the best loss.
        let dim = 5;
        let point = vec![0.25; dim];
        let eval_point = point.clone();
        let mut obj = FnObjective::new(dim, move |u: &[f64]| {
            assert_eq!(u, eval_point.as_slice(), "population changed");
            sphere(u)
        });
        // Seed the run so the initial population is identical by construction:
        // uniform_point is bypassed by injecting through a custom objective is
        // not possible, so run the loop manually instead.
        let cfg = GeneticConfig { iters: 50, mutation_rate: 0.0, ..Default::default() };
        let mut population: Vec<Vec<f64>> = vec![point.clone(); cfg.population];
        let mut fitness: Vec<f64> = population.iter().map(|p| obj.evaluate(p)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..cfg.iters {
            let order = argsort(&fitness);
            let parents: Vec<Vec<f64>> =
                order[..cfg.num_parents].iter().map(|&i| population[i].clone()).collect();
            for &slot in &order[cfg.num_parents..] {
                let point = rng.random_range(1..dim);
                let mut child = crossover(&parents[0], &parents[1], point);
                mutate(&mut child, 0.0, &mut rng);
                fitness[slot] = obj.evaluate(&child);
                population[slot] = child;
            }
        }
        assert!(population.iter().all(|p| *p == point));
    }

    #[test]
    fn mutation_changes_expected_gene_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut child = vec![0.5; 78];
        mutate(&mut child, 0.1, &mut rng);
        let changed = child.iter().filter(|&&v| v != 0.5).count();
        // round(0.1 * 78) = 8 draws; a few may collide on the same index
        assert!(changed >= 5 && changed <= 8, "changed {changed} genes");
    }

    #[test]
    fn evaluation_budget_formula() {
        let cfg = GeneticConfig { iters: 7, ..Default::default() };
        let mut obj = FnObjective::new(10, sphere);
        genetic(&mut obj, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(obj.evaluations(), 20 + 7 * 16);
    }

    #[test]
    fn beats_random_search_on_sphere_in_most_seeds() {
        // Paired budget-matched runs on the 10-d sphere; the GA must win on
        // at least 8 of 10 seeds.
        let dim = 10;
        let mut wins = 0;
        for seed in 0..10u64 {
            let mut ga_obj = FnObjective::new(dim, sphere);
            let ga = genetic(
                &mut ga_obj,
                &GeneticConfig::default(),
                &mut ChaCha8Rng::seed_from_u64(seed),
            )
            .unwrap();

            let mut rs_obj = FnObjective::new(dim, sphere);
            let rs = super::super::random_search(
                &mut rs_obj,
                &RandomSearchConfig { n: 1000 },
                &mut ChaCha8Rng::seed_from_u64(seed + 1000),
            )
            .unwrap();
            if ga.best_loss < rs.best_loss {
                wins += 1;
            }
        }
        assert!(wins >= 8, "GA won only {wins}/10 paired runs");
    }

    #[test]
    fn rejects_degenerate_config() {
        let mut obj = FnObjective::new(4, sphere);
        let cfg = GeneticConfig { population: 2, num_parents: 4, ..Default::default() };
        assert!(genetic(&mut obj, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }
}
