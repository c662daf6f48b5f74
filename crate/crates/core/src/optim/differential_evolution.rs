//! Differential evolution, best/1/bin with per-generation dithering of the
//! differential weight.

use rand::Rng;

use super::{uniform_point, Objective, OptimError, OptimizerResult, SearchTrace};

/// best/1 mutant: `best + f * (b - c)`, clamped to the unit box.
pub(crate) fn de_mutant(best: &[f64], b: &[f64], c: &[f64], f: f64) -> Vec<f64> {
    best.iter()
        .zip(b.iter().zip(c))
        .map(|(&x, (&vb, &vc))| (x + f * (vb - vc)).clamp(0.0, 1.0))
        .collect()
}

pub fn differential_evolution<O: Objective + ?Sized, R: Rng + ?Sized>(
    obj: &mut O,
    cfg: &super::DeConfig,
    rng: &mut R,
) -> Result<OptimizerResult, OptimError> {
    if cfg.population < 4 {
        return Err(OptimError::InvalidConfig("differential_evolution needs population >= 4".into()));
    }
    if !(0.0..=1.0).contains(&cfg.cr) {
        return Err(OptimError::InvalidConfig("cr must lie in [0, 1]".into()));
    }
    let dim = obj.dim();
    let np = cfg.population;
    let mut search = SearchTrace::new();

    let mut population: Vec<Vec<f64>> = (0..np).map(|_| uniform_point(rng, dim)).collect();
    let mut fitness: Vec<f64> = population
        .iter()
        .map(|ind| {
            let loss = obj.evaluate(ind);
            search.observe(ind, loss);
            loss
        })
        .collect();
    let mut best_idx = (0..np)
        .min_by(|&a, &b| fitness[a].partial_cmp(&fitness[b]).unwrap())
        .unwrap();
    search.record(0, obj.evaluations());

    for gen in 0..cfg.generations {
        // Dithering: redraw the differential weight each generation.
        let f = cfg.f_range.0 + rng.random::<f64>() * (cfg.f_range.1 - cfg.f_range.0);
        for i in 0..np {
            let b = loop {
                let k = rng.random_range(0..np);
                if k != i {
                    break k;
                }
            };
            let c = loop {
                let k = rng.random_range(0..np);
                if k != i && k != b {
                    break k;
                }
            };
            let mutant = de_mutant(&population[best_idx], &population[b], &population[c], f);

            // Binomial crossover with one forced index.
            let forced = rng.random_range(0..dim);
            let trial: Vec<f64> = (0..dim)
                .map(|j| {
                    if j == forced || rng.random::<f64>() < cfg.cr {
                        mutant[j]
                    } else {
                        population[i][j]
                    }
                })
                .collect();

            let loss = obj.evaluate(&trial);
            search.observe(&trial, loss);
            if loss <= fitness[i] {
                population[i] = trial;
                fitness[i] = loss;
                if loss < fitness[best_idx] {
                    best_idx = i;
                }
            }
        }
        // Greedy selection can orphan best_idx only by improving it; rescan
        // to keep ties deterministic.
        best_idx = (0..np)
            .min_by(|&a, &b| fitness[a].partial_cmp(&fitness[b]).unwrap())
            .unwrap();
        search.record(gen as u64 + 1, obj.evaluations());
    }
    Ok(search.into_result("differential_evolution", 0))
}
