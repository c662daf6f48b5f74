//! Variational optimization with an independent Beta distribution per
//! parameter. Distribution parameters live as unconstrained reals behind a
//! softplus, gradients come from the score-function estimator with a
//! batch-mean baseline, and Adam does the updates.

use rand::Rng;
use rand_distr::{Beta, Distribution};
use statrs::function::gamma::digamma;

use super::{AdamState, Objective, OptimError, OptimizerResult, SearchTrace};

/// Floor added to the softplus so Beta parameters stay strictly positive.
const PARAM_FLOOR: f64 = 1e-4;

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Unconstrained value whose softplus equals `1 - PARAM_FLOOR`, so that
/// alpha = beta = 1 at initialization (the uniform distribution).
fn init_raw() -> f64 {
    ((1.0 - PARAM_FLOOR).exp() - 1.0).ln()
}

pub fn variational_beta<O: Objective + ?Sized, R: Rng + ?Sized>(
    obj: &mut O,
    cfg: &super::VariationalConfig,
    rng: &mut R,
) -> Result<OptimizerResult, OptimError> {
    if cfg.batch < 2 {
        return Err(OptimError::InvalidConfig("variational needs batch >= 2".into()));
    }
    let dim = obj.dim();
    let mut raw_a = vec![init_raw(); dim];
    let mut raw_b = vec![init_raw(); dim];
    let mut adam_a = AdamState::new(dim, cfg.lr);
    let mut adam_b = AdamState::new(dim, cfg.lr);
    let mut search = SearchTrace::new();

    let mut last_best: Option<(Vec<f64>, f64)> = None;
    for iter in 0..cfg.iters {
        let alpha: Vec<f64> = raw_a.iter().map(|&x| PARAM_FLOOR + softplus(x)).collect();
        let beta: Vec<f64> = raw_b.iter().map(|&x| PARAM_FLOOR + softplus(x)).collect();
        let dists: Vec<Beta<f64>> = alpha
            .iter()
            .zip(&beta)
            .map(|(&a, &b)| Beta::new(a, b).expect("positive Beta parameters"))
            .collect();

        let mut samples = Vec::with_capacity(cfg.batch);
        let mut losses = Vec::with_capacity(cfg.batch);
        for _ in 0..cfg.batch {
            let u: Vec<f64> = dists.iter().map(|d| d.sample(rng)).collect();
            let loss = obj.evaluate(&u);
            search.observe(&u, loss);
            samples.push(u);
            losses.push(loss);
        }
        let baseline = losses.iter().sum::<f64>() / cfg.batch as f64;

        let mut grad_a = vec![0.0; dim];
        let mut grad_b = vec![0.0; dim];
        for (u, &loss) in samples.iter().zip(&losses) {
            let advantage = loss - baseline;
            if advantage == 0.0 {
                continue;
            }
            for i in 0..dim {
                let ui = u[i].clamp(1e-12, 1.0 - 1e-12);
                let common = digamma(alpha[i] + beta[i]);
                let score_a = ui.ln() - digamma(alpha[i]) + common;
                let score_b = (1.0 - ui).ln() - digamma(beta[i]) + common;
                grad_a[i] += advantage * score_a * sigmoid(raw_a[i]);
                grad_b[i] += advantage * score_b * sigmoid(raw_b[i]);
            }
        }
        for g in grad_a.iter_mut().chain(grad_b.iter_mut()) {
            *g /= cfg.batch as f64;
        }
        adam_a.step(&mut raw_a, &grad_a);
        adam_b.step(&mut raw_b, &grad_b);

        // Best sample of this batch; the final iteration's winner is the
        // reported solution.
        let mut best_k = 0;
        for k in 1..cfg.batch {
            if losses[k] < losses[best_k] {
                best_k = k;
            }
        }
        last_best = Some((samples[best_k].clone(), losses[best_k]));
        search.record(iter as u64, obj.evaluations());
    }

    let (values, loss) = last_best
        .ok_or_else(|| OptimError::InvalidConfig("variational needs iters >= 1".into()))?;
    Ok(search.into_result_with("variational", 0, values, loss))
}
