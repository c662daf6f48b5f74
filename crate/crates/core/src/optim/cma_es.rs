//! Covariance matrix adaptation evolution strategy, the standard
//! (mu/mu_w, lambda) form: log-rank recombination weights, cumulation paths
//! for rank-1 and step-size updates, and a rank-mu covariance update.
//!
//! Candidates are clamped to the unit box before evaluation and the update
//! uses the clamped points, so the distribution mean always stays inside
//! the box. The reported solution is the mean after the final iteration,
//! evaluated once.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{argsort, Objective, OptimError, OptimizerResult, SearchTrace};

/// Default population size: `4 + floor(3 ln n)`.
pub fn cma_lambda(dim: usize) -> usize {
    4 + (3.0 * (dim as f64).ln()).floor() as usize
}

struct Strategy {
    lambda: usize,
    mu: usize,
    weights: Vec<f64>,
    mu_eff: f64,
    c_sigma: f64,
    d_sigma: f64,
    c_c: f64,
    c_1: f64,
    c_mu: f64,
    chi_n: f64,
}

impl Strategy {
    fn new(n: usize) -> Self {
        let nf = n as f64;
        let lambda = cma_lambda(n);
        let mu = lambda / 2;
        let mut weights: Vec<f64> =
            (0..mu).map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - ((i + 1) as f64).ln()).collect();
        let sum: f64 = weights.iter().sum();
        for w in weights.iter_mut() {
            *w /= sum;
        }
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let c_sigma = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
        let d_sigma =
            1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
        let c_1 = 2.0 / ((nf + 1.3) * (nf + 1.3) + mu_eff);
        let c_mu = (1.0 - c_1)
            .min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0) * (nf + 2.0) + mu_eff));
        let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));
        Self { lambda, mu, weights, mu_eff, c_sigma, d_sigma, c_c, c_1, c_mu, chi_n }
    }
}

/// Eigendecomposition of the covariance, refreshed lazily.
struct EigenBasis {
    vectors: DMatrix<f64>,
    /// Square roots of the eigenvalues.
    scales: DVector<f64>,
}

impl EigenBasis {
    fn decompose(c: &DMatrix<f64>) -> Option<Self> {
        let eigen = nalgebra::SymmetricEigen::new(c.clone());
        if eigen.eigenvalues.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let scales = eigen.eigenvalues.map(|v| v.max(1e-20).sqrt());
        Some(Self { vectors: eigen.eigenvectors, scales })
    }

    fn sample_y<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> DVector<f64> {
        let z = DVector::from_iterator(
            n,
            (0..n).map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)),
        );
        &self.vectors * z.component_mul(&self.scales)
    }

    /// `C^(-1/2) v`
    fn whiten(&self, v: &DVector<f64>) -> DVector<f64> {
        let projected = self.vectors.transpose() * v;
        &self.vectors * projected.component_div(&self.scales)
    }
}

pub fn cma_es<O: Objective + ?Sized, R: Rng + ?Sized>(
    obj: &mut O,
    cfg: &super::CmaEsConfig,
    rng: &mut R,
) -> Result<OptimizerResult, OptimError> {
    if cfg.sigma0 <= 0.0 {
        return Err(OptimError::InvalidConfig("cma_es needs sigma0 > 0".into()));
    }
    let n = obj.dim();
    let st = Strategy::new(n);
    let mut search = SearchTrace::new();

    let mut mean = DVector::from_element(n, 0.5);
    let mut sigma = cfg.sigma0;
    let mut cov = DMatrix::<f64>::identity(n, n);
    let mut p_sigma = DVector::zeros(n);
    let mut p_c = DVector::zeros(n);
    let mut basis = EigenBasis::decompose(&cov)
        .ok_or_else(|| OptimError::NonFinite { method: "cma_es".into(), iteration: 0 })?;
    // Lazy refresh schedule from the covariance learning rates.
    let eigen_period =
        ((1.0 / ((st.c_1 + st.c_mu) * n as f64 * 10.0)).floor() as usize).max(1);
    let mut last_eigen = 0usize;

    for gen in 0..cfg.max_iters {
        if gen - last_eigen >= eigen_period {
            cov = symmetrize(cov);
            basis = EigenBasis::decompose(&cov).ok_or_else(|| OptimError::NonFinite {
                method: "cma_es".into(),
                iteration: gen as u64,
            })?;
            last_eigen = gen;
        }

        let mut candidates: Vec<DVector<f64>> = Vec::with_capacity(st.lambda);
        let mut losses = Vec::with_capacity(st.lambda);
        for _ in 0..st.lambda {
            let y = basis.sample_y(rng, n);
            let x = (&mean + &y * sigma).map(|v| v.clamp(0.0, 1.0));
            let loss = obj.evaluate(x.as_slice());
            search.observe(x.as_slice(), loss);
            losses.push(loss);
            candidates.push(x);
        }
        let order = argsort(&losses);

        // Recombination in y-coordinates of the clamped candidates.
        let selected_y: Vec<DVector<f64>> =
            order[..st.mu].iter().map(|&k| (&candidates[k] - &mean) / sigma).collect();
        let mut y_w = DVector::zeros(n);
        for (w, y) in st.weights.iter().zip(&selected_y) {
            y_w += y * *w;
        }
        mean += &y_w * sigma;

        p_sigma = &p_sigma * (1.0 - st.c_sigma)
            + basis.whiten(&y_w) * (st.c_sigma * (2.0 - st.c_sigma) * st.mu_eff).sqrt();
        let ps_norm = p_sigma.norm();
        let h_denominator = (1.0 - (1.0 - st.c_sigma).powi(2 * (gen as i32 + 1))).sqrt();
        let h_sigma = ps_norm / h_denominator < (1.4 + 2.0 / (n as f64 + 1.0)) * st.chi_n;
        let h = if h_sigma { 1.0 } else { 0.0 };

        p_c = &p_c * (1.0 - st.c_c)
            + &y_w * (h * (st.c_c * (2.0 - st.c_c) * st.mu_eff).sqrt());

        let delta_h = (1.0 - h) * st.c_c * (2.0 - st.c_c);
        let mut rank_mu = DMatrix::<f64>::zeros(n, n);
        for (w, y) in st.weights.iter().zip(&selected_y) {
            rank_mu += y * y.transpose() * *w;
        }
        cov = &cov * (1.0 - st.c_1 - st.c_mu + st.c_1 * delta_h)
            + (&p_c * p_c.transpose()) * st.c_1
            + rank_mu * st.c_mu;

        sigma *= ((st.c_sigma / st.d_sigma) * (ps_norm / st.chi_n - 1.0)).exp();
        sigma = sigma.clamp(1e-12, 1e4);

        if !sigma.is_finite()
            || mean.iter().any(|v| !v.is_finite())
            || cov.iter().any(|v| !v.is_finite())
        {
            return Err(OptimError::NonFinite { method: "cma_es".into(), iteration: gen as u64 });
        }
        search.record(gen as u64, obj.evaluations());
    }

    // Report the distribution mean, evaluated once.
    let final_mean: Vec<f64> = mean.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let final_loss = obj.evaluate(&final_mean);
    search.observe(&final_mean, final_loss);
    search.record(cfg.max_iters as u64, obj.evaluations());
    Ok(search.into_result_with("cma_es", 0, final_mean, final_loss))
}

fn symmetrize(c: DMatrix<f64>) -> DMatrix<f64> {
    let t = c.transpose();
    (c + t) * 0.5
}

#[cfg(test)]
mod tests {
    use super::super::{CmaEsConfig, FnObjective};
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lambda_formula() {
        // 3 ln 78 = 13.07, so lambda = 17 in the synthesizer's dimension.
        assert_eq!(cma_lambda(78), 17);
        assert_eq!(cma_lambda(10), 10);
    }

    #[test]
    fn weights_form_convex_combination() {
        for n in [2, 10, 78] {
            let st = Strategy::new(n);
            let sum: f64 = st.weights.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(st.weights.iter().all(|&w| w > 0.0));
            assert!(st.weights.windows(2).all(|p| p[0] >= p[1]));
            assert!(st.mu_eff > 1.0 && st.mu_eff <= st.mu as f64);
        }
    }

    #[test]
    fn zero_iterations_returns_center_start() {
        let mut obj = FnObjective::new(5, |u: &[f64]| u.iter().sum());
        let cfg = CmaEsConfig { max_iters: 0, ..Default::default() };
        let result = cma_es(&mut obj, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(result.best.values, vec![0.5; 5]);
        assert_eq!(obj.evaluations(), 1);
    }

    #[test]
    fn solves_shifted_sphere_to_1e6() {
        // 10-d shifted sphere: the final mean reaches f < 1e-6 within 200
        // iterations.
        let target = [0.3, 0.7, 0.5, 0.2, 0.8, 0.4, 0.6, 0.35, 0.65, 0.45];
        let mut obj = FnObjective::new(10, move |u: &[f64]| {
            u.iter().zip(&target).map(|(v, t)| (v - t) * (v - t)).sum()
        });
        let cfg = CmaEsConfig { max_iters: 200, sigma0: 0.25 };
        let result = cma_es(&mut obj, &cfg, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        assert!(result.best_loss < 1e-6, "final mean loss {}", result.best_loss);
    }

    #[test]
    fn candidates_respect_unit_box() {
        let mut obj = FnObjective::new(6, |u: &[f64]| {
            assert!(u.iter().all(|&v| (0.0..=1.0).contains(&v)), "candidate left box: {u:?}");
            u.iter().map(|v| (v - 0.9) * (v - 0.9)).sum()
        });
        let cfg = CmaEsConfig { max_iters: 50, sigma0: 0.5 };
        cma_es(&mut obj, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    }

    #[test]
    fn trace_non_increasing_and_deterministic() {
        let run = || {
            let mut obj =
                FnObjective::new(8, |u: &[f64]| u.iter().map(|v| (v - 0.6) * (v - 0.6)).sum());
            let cfg = CmaEsConfig { max_iters: 30, ..Default::default() };
            cma_es(&mut obj, &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a, b);
        for pair in a.trace.windows(2) {
            assert!(pair[1].best_loss <= pair[0].best_loss);
        }
    }

    #[test]
    fn evaluation_budget_formula() {
        let mut obj = FnObjective::new(10, |u: &[f64]| u.iter().sum());
        let cfg = CmaEsConfig { max_iters: 7, ..Default::default() };
        cma_es(&mut obj, &cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(obj.evaluations(), 7 * 10 + 1);
    }
}
