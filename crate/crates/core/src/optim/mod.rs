//! Nine black-box and gradient-style optimizers over `[0,1]^n` behind one
//! interface, with evaluation counting, best-so-far tracing, and seeded
//! determinism.
//!
//! Each method lives in its own submodule and takes `(objective, config,
//! rng)`. [`run_method`] dispatches by name, builds a rendering objective
//! for a target sound, and stamps the result with method name and seed.
//! Ties between equally good candidates always go to the lowest candidate
//! index, so results do not depend on evaluation order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::params::{Patch, PARAM_COUNT};
use crate::spectral::{LossConfig, MelLoss, MelSpectrogram, SpectralError};
use crate::synth::{render, AudioBuffer, RenderConfig, SynthError};

mod adam_fd;
mod cma_es;
mod differential_evolution;
mod genetic;
mod metropolis;
mod pgpe;
mod random_search;
mod tpe;
mod variational;

pub use adam_fd::{adam_fd, fd_gradient};
pub use cma_es::{cma_es, cma_lambda};
pub use differential_evolution::differential_evolution;
pub use genetic::{crossover, genetic, mutate};
pub use metropolis::{metropolis, metropolis_accept};
pub use pgpe::{clipup_step, pgpe_clipup};
pub use random_search::random_search;
pub use tpe::{tpe, tpe_split_count};
pub use variational::variational_beta;

/// The nine method names accepted by [`run_method`], in benchmark order.
pub const METHOD_NAMES: [&str; 9] = [
    "random_search",
    "adam_fd",
    "variational",
    "genetic_algorithm",
    "differential_evolution",
    "pgpe",
    "cma_es",
    "metropolis",
    "tpe",
];

/// One objective evaluation: the reconstruction loss, plus the summed
/// squared waveform residual when the objective has a target waveform
/// (used by likelihood-based methods).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub waveform_sq_err: Option<f64>,
}

/// A minimization target over `[0,1]^dim` with an evaluation counter.
pub trait Objective {
    fn evaluate_full(&mut self, u: &[f64]) -> Evaluation;

    fn evaluate(&mut self, u: &[f64]) -> f64 {
        self.evaluate_full(u).loss
    }

    /// Total evaluations so far; increments by exactly one per evaluation.
    fn evaluations(&self) -> u64;

    fn dim(&self) -> usize;

    fn target_id(&self) -> &str {
        "objective"
    }
}

/// Wrap a plain function as an objective (closed-form test problems).
pub struct FnObjective<F> {
    f: F,
    dim: usize,
    count: u64,
}

impl<F: FnMut(&[f64]) -> f64> FnObjective<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { f, dim, count: 0 }
    }
}

impl<F: FnMut(&[f64]) -> f64> Objective for FnObjective<F> {
    fn evaluate_full(&mut self, u: &[f64]) -> Evaluation {
        self.count += 1;
        Evaluation { loss: (self.f)(u), waveform_sq_err: None }
    }

    fn evaluations(&self) -> u64 {
        self.count
    }

    fn dim(&self) -> usize {
        self.dim
    }
}

/// Renders candidate patches and scores them against a fixed target with
/// the multi-resolution mel loss. The target's mel spectrograms are
/// precomputed once; the render noise seed is fixed so the objective is
/// deterministic.
pub struct RenderObjective {
    render_cfg: RenderConfig,
    engine: MelLoss,
    target_mels: Vec<MelSpectrogram>,
    target: Vec<f64>,
    target_id: String,
    count: u64,
}

impl RenderObjective {
    pub fn new(
        target: &AudioBuffer,
        render_cfg: RenderConfig,
        loss_cfg: LossConfig,
        target_id: impl Into<String>,
    ) -> Result<Self, OptimError> {
        let engine = MelLoss::new(loss_cfg, target.sample_rate)?;
        let target_mels = engine.mel_spectrograms(&target.samples);
        Ok(Self {
            render_cfg,
            engine,
            target_mels,
            target: target.samples.clone(),
            target_id: target_id.into(),
            count: 0,
        })
    }
}

impl Objective for RenderObjective {
    fn evaluate_full(&mut self, u: &[f64]) -> Evaluation {
        self.count += 1;
        let patch = Patch::new(u.to_vec());
        let rendered = render(&patch, &self.render_cfg).expect("candidate patch in [0,1]^78");
        let loss = self
            .engine
            .loss_against(&self.target_mels, &rendered.samples)
            .expect("render length matches target");
        let sq_err = rendered
            .samples
            .iter()
            .zip(&self.target)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum();
        Evaluation { loss, waveform_sq_err: Some(sq_err) }
    }

    fn evaluations(&self) -> u64 {
        self.count
    }

    fn dim(&self) -> usize {
        PARAM_COUNT
    }

    fn target_id(&self) -> &str {
        &self.target_id
    }
}

/// Best-so-far loss after a given iteration and evaluation count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: u64,
    pub evaluations: u64,
    pub best_loss: f64,
}

/// Outcome of one optimizer run.
///
/// `trace` records the best loss seen so far and is always non-increasing.
/// `best`/`best_loss` follow each method's own selection rule: most methods
/// return the best candidate ever evaluated, while `adam_fd`, `pgpe`, and
/// `cma_es` return their final iterate / center / mean, whose loss can sit
/// above the end of the trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerResult {
    pub best: Patch,
    pub best_loss: f64,
    pub evaluations: u64,
    pub trace: Vec<TracePoint>,
    pub method: String,
    pub seed: u64,
}

impl OptimizerResult {
    /// Trace as CSV with header `iteration,evaluations,best_loss`.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iteration,evaluations,best_loss\n");
        for p in &self.trace {
            out.push_str(&format!("{},{},{}\n", p.iteration, p.evaluations, p.best_loss));
        }
        out
    }
}

/// Best-so-far bookkeeping shared by all methods.
pub(crate) struct SearchTrace {
    best: Vec<f64>,
    best_loss: f64,
    trace: Vec<TracePoint>,
}

impl SearchTrace {
    pub(crate) fn new() -> Self {
        Self { best: Vec::new(), best_loss: f64::INFINITY, trace: Vec::new() }
    }

    /// Strict improvement only, so the earliest of tied candidates wins.
    pub(crate) fn observe(&mut self, u: &[f64], loss: f64) {
        if loss < self.best_loss {
            self.best_loss = loss;
            self.best = u.to_vec();
        }
    }

    pub(crate) fn record(&mut self, iteration: u64, evaluations: u64) {
        self.trace.push(TracePoint { iteration, evaluations, best_loss: self.best_loss });
    }

    /// Result whose solution is the best candidate ever evaluated.
    pub(crate) fn into_result(self, method: &str, evaluations: u64) -> OptimizerResult {
        let best_loss = self.best_loss;
        let values = self.best.clone();
        self.into_result_with(method, evaluations, values, best_loss)
    }

    /// Result with an explicit solution (final-iterate methods).
    pub(crate) fn into_result_with(
        self,
        method: &str,
        evaluations: u64,
        values: Vec<f64>,
        loss: f64,
    ) -> OptimizerResult {
        OptimizerResult {
            best: Patch {
                values,
                label: None,
                source: Some(method.to_string()),
            },
            best_loss: loss,
            evaluations,
            trace: self.trace,
            method: method.to_string(),
            seed: 0,
        }
    }
}

pub(crate) fn uniform_point<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.random::<f64>()).collect()
}

/// Stable indices of `losses` sorted ascending; ties keep candidate order.
pub(crate) fn argsort(losses: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..losses.len()).collect();
    idx.sort_by(|&a, &b| losses[a].partial_cmp(&losses[b]).expect("finite losses"));
    idx
}

/// Adam state shared by the finite-difference and variational methods.
pub(crate) struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    lr: f64,
}

impl AdamState {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    pub(crate) fn new(dim: usize, lr: f64) -> Self {
        Self { m: vec![0.0; dim], v: vec![0.0; dim], t: 0, lr }
    }

    /// One descent step along `grad`, applied in place to `x`.
    pub(crate) fn step(&mut self, x: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - Self::BETA1.powi(self.t as i32);
        let bc2 = 1.0 - Self::BETA2.powi(self.t as i32);
        for i in 0..x.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grad[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            x[i] -= self.lr * m_hat / (v_hat.sqrt() + Self::EPS);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimError {
    #[error("unknown method '{0}'; valid methods: {valid}", valid = METHOD_NAMES.join(", "))]
    UnknownMethod(String),
    #[error("config is for method '{config}' but '{requested}' was requested")]
    ConfigMismatch { config: String, requested: String },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("{method} produced a non-finite value at iteration {iteration}")]
    NonFinite { method: String, iteration: u64 },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

// ---- per-method configurations -------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomSearchConfig {
    pub n: usize,
}

impl Default for RandomSearchConfig {
    fn default() -> Self {
        Self { n: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamFdConfig {
    pub iters: usize,
    pub lr: f64,
    pub fd_eps: f64,
}

impl Default for AdamFdConfig {
    fn default() -> Self {
        Self { iters: 200, lr: 0.001, fd_eps: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariationalConfig {
    pub iters: usize,
    pub lr: f64,
    pub batch: usize,
}

impl Default for VariationalConfig {
    fn default() -> Self {
        Self { iters: 500, lr: 0.001, batch: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneticConfig {
    pub iters: usize,
    pub num_parents: usize,
    pub population: usize,
    pub mutation_rate: f64,
}

impl Default for GeneticConfig {
    fn default() -> Self {
        Self { iters: 100, num_parents: 4, population: 20, mutation_rate: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeConfig {
    pub generations: usize,
    pub population: usize,
    pub cr: f64,
    /// Dithering range for the differential weight; `f` is redrawn
    /// uniformly from `[f_range.0, f_range.1)` each generation.
    pub f_range: (f64, f64),
}

impl Default for DeConfig {
    fn default() -> Self {
        Self { generations: 20, population: 10, cr: 0.7, f_range: (0.5, 1.0) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PgpeConfig {
    pub generations: usize,
    pub population: usize,
    pub sigma_init: f64,
    pub sigma_lr: f64,
    pub clipup_max_speed: f64,
    pub clipup_momentum: f64,
}

impl Default for PgpeConfig {
    fn default() -> Self {
        Self {
            generations: 100,
            population: 100,
            sigma_init: 0.1,
            sigma_lr: 0.1,
            clipup_max_speed: 0.15,
            clipup_momentum: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CmaEsConfig {
    pub max_iters: usize,
    pub sigma0: f64,
}

impl Default for CmaEsConfig {
    fn default() -> Self {
        Self { max_iters: 200, sigma0: 0.25 }
    }
}

/// What the Metropolis likelihood is computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LikelihoodMode {
    /// Gaussian noise model on the waveform residual (the default).
    Waveform,
    /// Pseudo-likelihood `exp(-loss / (2 sigma^2))` on the spectral loss;
    /// also the fallback when the objective has no target waveform.
    SpectralLoss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetropolisConfig {
    pub samples: usize,
    pub sigma: f64,
    pub p_resample: f64,
    pub likelihood: LikelihoodMode,
}

impl Default for MetropolisConfig {
    fn default() -> Self {
        Self { samples: 10_000, sigma: 0.1, p_resample: 0.1, likelihood: LikelihoodMode::Waveform }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TpeConfig {
    pub trials: usize,
    pub startup: usize,
    pub gamma: f64,
    pub candidates: usize,
}

impl Default for TpeConfig {
    fn default() -> Self {
        Self { trials: 1000, startup: 10, gamma: 0.25, candidates: 24 }
    }
}

/// Tagged union of all nine method configurations; round-trips through JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method")]
pub enum MethodConfig {
    #[serde(rename = "random_search")]
    RandomSearch(RandomSearchConfig),
    #[serde(rename = "adam_fd")]
    AdamFd(AdamFdConfig),
    #[serde(rename = "variational")]
    Variational(VariationalConfig),
    #[serde(rename = "genetic_algorithm")]
    GeneticAlgorithm(GeneticConfig),
    #[serde(rename = "differential_evolution")]
    DifferentialEvolution(DeConfig),
    #[serde(rename = "pgpe")]
    Pgpe(PgpeConfig),
    #[serde(rename = "cma_es")]
    CmaEs(CmaEsConfig),
    #[serde(rename = "metropolis")]
    Metropolis(MetropolisConfig),
    #[serde(rename = "tpe")]
    Tpe(TpeConfig),
}

impl MethodConfig {
    /// Default configuration for a method name.
    pub fn default_for(name: &str) -> Result<Self, OptimError> {
        Ok(match name {
            "random_search" => Self::RandomSearch(Default::default()),
            "adam_fd" => Self::AdamFd(Default::default()),
            "variational" => Self::Variational(Default::default()),
            "genetic_algorithm" => Self::GeneticAlgorithm(Default::default()),
            "differential_evolution" => Self::DifferentialEvolution(Default::default()),
            "pgpe" => Self::Pgpe(Default::default()),
            "cma_es" => Self::CmaEs(Default::default()),
            "metropolis" => Self::Metropolis(Default::default()),
            "tpe" => Self::Tpe(Default::default()),
            other => return Err(OptimError::UnknownMethod(other.to_string())),
        })
    }

    pub fn method_name(&self) -> &'static str {
        match self {
            Self::RandomSearch(_) => "random_search",
            Self::AdamFd(_) => "adam_fd",
            Self::Variational(_) => "variational",
            Self::GeneticAlgorithm(_) => "genetic_algorithm",
            Self::DifferentialEvolution(_) => "differential_evolution",
            Self::Pgpe(_) => "pgpe",
            Self::CmaEs(_) => "cma_es",
            Self::Metropolis(_) => "metropolis",
            Self::Tpe(_) => "tpe",
        }
    }

    /// Scale the method's primary iteration count by `frac` (at least 1).
    pub fn scaled(&self, frac: f64) -> Self {
        let s = |n: usize| -> usize { ((n as f64 * frac).round() as usize).max(1) };
        match self.clone() {
            Self::RandomSearch(mut c) => {
                c.n = s(c.n);
                Self::RandomSearch(c)
            }
            Self::AdamFd(mut c) => {
                c.iters = s(c.iters);
                Self::AdamFd(c)
            }
            Self::Variational(mut c) => {
                c.iters = s(c.iters);
                Self::Variational(c)
            }
            Self::GeneticAlgorithm(mut c) => {
                c.iters = s(c.iters);
                Self::GeneticAlgorithm(c)
            }
            Self::DifferentialEvolution(mut c) => {
                c.generations = s(c.generations);
                Self::DifferentialEvolution(c)
            }
            Self::Pgpe(mut c) => {
                c.generations = s(c.generations);
                Self::Pgpe(c)
            }
            Self::CmaEs(mut c) => {
                c.max_iters = s(c.max_iters);
                Self::CmaEs(c)
            }
            Self::Metropolis(mut c) => {
                c.samples = s(c.samples);
                Self::Metropolis(c)
            }
            Self::Tpe(mut c) => {
                c.trials = s(c.trials);
                Self::Tpe(c)
            }
        }
    }

    /// Resize the method's counts so one run spends at most `budget`
    /// objective evaluations in dimension `dim`.
    pub fn with_eval_budget(&self, budget: u64, dim: usize) -> Self {
        let b = budget.max(2) as usize;
        match self.clone() {
            Self::RandomSearch(mut c) => {
                c.n = b;
                Self::RandomSearch(c)
            }
            Self::AdamFd(mut c) => {
                c.iters = ((b - 1) / (2 * dim)).max(1);
                Self::AdamFd(c)
            }
            Self::Variational(mut c) => {
                c.batch = c.batch.min(b);
                c.iters = (b / c.batch).max(1);
                Self::Variational(c)
            }
            Self::GeneticAlgorithm(mut c) => {
                let children = c.population - c.num_parents;
                c.iters = (b.saturating_sub(c.population) / children).max(1);
                Self::GeneticAlgorithm(c)
            }
            Self::DifferentialEvolution(mut c) => {
                c.generations = (b.saturating_sub(c.population) / c.population).max(1);
                Self::DifferentialEvolution(c)
            }
            Self::Pgpe(mut c) => {
                c.generations = ((b - 1) / c.population).max(1);
                Self::Pgpe(c)
            }
            Self::CmaEs(mut c) => {
                c.max_iters = ((b - 1) / cma_lambda(dim)).max(1);
                Self::CmaEs(c)
            }
            Self::Metropolis(mut c) => {
                c.samples = b - 1;
                Self::Metropolis(c)
            }
            Self::Tpe(mut c) => {
                c.trials = b;
                Self::Tpe(c)
            }
        }
    }
}

/// Run a named method against an objective. Used directly by tests and by
/// [`run_method`] once the rendering objective is built.
pub fn run_on_objective<O: Objective + ?Sized>(
    cfg: &MethodConfig,
    obj: &mut O,
    seed: u64,
) -> Result<OptimizerResult, OptimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = obj.evaluations();
    let mut result = match cfg {
        MethodConfig::RandomSearch(c) => random_search(obj, c, &mut rng),
        MethodConfig::AdamFd(c) => adam_fd(obj, c, &mut rng),
        MethodConfig::Variational(c) => variational_beta(obj, c, &mut rng),
        MethodConfig::GeneticAlgorithm(c) => genetic(obj, c, &mut rng),
        MethodConfig::DifferentialEvolution(c) => differential_evolution(obj, c, &mut rng),
        MethodConfig::Pgpe(c) => pgpe_clipup(obj, c, &mut rng),
        MethodConfig::CmaEs(c) => cma_es(obj, c, &mut rng),
        MethodConfig::Metropolis(c) => metropolis(obj, c, &mut rng),
        MethodConfig::Tpe(c) => tpe(obj, c, &mut rng),
    }?;
    result.seed = seed;
    result.evaluations = obj.evaluations() - start;
    Ok(result)
}

/// Fixed noise seed used when building rendering objectives, so that a
/// patch always renders identically during one fit.
pub const OBJECTIVE_NOISE_SEED: u64 = 0;

/// Build an objective from `target` and dispatch to the named method.
pub fn run_method(
    name: &str,
    target: &AudioBuffer,
    cfg: Option<&MethodConfig>,
    seed: u64,
) -> Result<OptimizerResult, OptimError> {
    if !METHOD_NAMES.contains(&name) {
        return Err(OptimError::UnknownMethod(name.to_string()));
    }
    let cfg = match cfg {
        Some(c) => {
            if c.method_name() != name {
                return Err(OptimError::ConfigMismatch {
                    config: c.method_name().to_string(),
                    requested: name.to_string(),
                });
            }
            c.clone()
        }
        None => MethodConfig::default_for(name)?,
    };
    let render_cfg = RenderConfig { noise_seed: OBJECTIVE_NOISE_SEED, ..Default::default() };
    let mut obj = RenderObjective::new(target, render_cfg, LossConfig::default(), "target")?;
    run_on_objective(&cfg, &mut obj, seed)
}
