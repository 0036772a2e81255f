//! Seeded synthetic experiments.
//!
//! Every run seed derives its randomness through [`substream`]:
//!
//! - stream 0 draws the problem: the target `b ∼ N(0, I)` of the quadratic
//!   loss, then the parameters `θ ∼ N(0, I)`;
//! - stream `1 + (estimator << 20) + s_index` drives one estimator at one
//!   sample count in [`bench_cosine`];
//! - stream `1 + t` drives step `t` of [`run_toy_training`].
//!
//! Results therefore do not depend on the number of worker threads.

pub mod records;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::control::AimleController;
use crate::error::{check_dim, Error, Result};
use crate::estimators::{
    Aimle, Downstream, GradientEstimate, GumbelSoftmax, Imle, ImleMode, Sfe, Ste,
};
use crate::losses::QuadraticLoss;
use crate::noise::{substream, NoiseSpec};
use crate::optim::{optimizer_step, OptimizerConfig, OptimizerState};
use crate::polytope::{DiscreteState, ParamVector, PolytopeSpec, StateSpace, Temperature};

pub use records::{aggregate, AggregateRow, BenchRecord, BiasRow, TrajectoryPoint};

/// `⟨a, b⟩ / (‖a‖ ‖b‖)`, and `0` when either vector is zero.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dim(a.len(), b.len())?;
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Estimator under test in a benchmark.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum EstimatorConfig {
    /// The enumeration oracle itself.
    Exact,
    Sfe {
        tau: f64,
    },
    Ste {
        noise: NoiseSpec,
    },
    GumbelSoftmax {
        tau: f64,
    },
    /// `lambda = 0` is read as the `λ → 0` limit: an all-zero estimate.
    Imle {
        lambda: f64,
        mode: ImleMode,
        noise: NoiseSpec,
    },
    /// The controller is warmed up for `warmup_steps` backward passes of
    /// `warmup_samples` samples (default: the measured sample count) at the
    /// same `θ` before the measured pass.
    Aimle {
        mode: ImleMode,
        noise: NoiseSpec,
        controller: AimleController,
        warmup_steps: usize,
        warmup_samples: Option<usize>,
    },
}

impl EstimatorConfig {
    pub fn imle(lambda: f64, mode: ImleMode) -> Self {
        EstimatorConfig::Imle {
            lambda,
            mode,
            noise: NoiseSpec::default(),
        }
    }

    pub fn aimle(mode: ImleMode, warmup_steps: usize) -> Self {
        EstimatorConfig::Aimle {
            mode,
            noise: NoiseSpec::default(),
            controller: AimleController::default(),
            warmup_steps,
            warmup_samples: None,
        }
    }

    pub fn id(&self) -> String {
        match self {
            EstimatorConfig::Exact => "exact".into(),
            EstimatorConfig::Sfe { .. } => "sfe".into(),
            EstimatorConfig::Ste { .. } => "ste".into(),
            EstimatorConfig::GumbelSoftmax { .. } => "gumbel-softmax".into(),
            EstimatorConfig::Imle { mode, .. } => format!("imle-{mode}"),
            EstimatorConfig::Aimle { mode, .. } => format!("aimle-{mode}"),
        }
    }

    /// `λ` column value: the step, `adaptive`, or `none`.
    pub fn lambda_label(&self) -> String {
        match self {
            EstimatorConfig::Imle { lambda, .. } => format!("{lambda}"),
            EstimatorConfig::Aimle { .. } => "adaptive".into(),
            _ => "none".into(),
        }
    }

    /// Temperature column value: softmax temperature or noise temperature.
    pub fn tau(&self) -> f64 {
        let noise_tau = |n: &NoiseSpec| match *n {
            NoiseSpec::None => 0.0,
            NoiseSpec::Gumbel { temperature } | NoiseSpec::SumOfGamma { temperature, .. } => {
                temperature
            }
        };
        match self {
            EstimatorConfig::Exact => 1.0,
            EstimatorConfig::Sfe { tau } | EstimatorConfig::GumbelSoftmax { tau } => *tau,
            EstimatorConfig::Ste { noise }
            | EstimatorConfig::Imle { noise, .. }
            | EstimatorConfig::Aimle { noise, .. } => noise_tau(noise),
        }
    }

    /// Replaces the perturbation distribution of noise-driven estimators.
    pub fn with_noise(self, new: NoiseSpec) -> Self {
        match self {
            EstimatorConfig::Ste { .. } => EstimatorConfig::Ste { noise: new },
            EstimatorConfig::Imle { lambda, mode, .. } => EstimatorConfig::Imle {
                lambda,
                mode,
                noise: new,
            },
            EstimatorConfig::Aimle {
                mode,
                controller,
                warmup_steps,
                warmup_samples,
                ..
            } => EstimatorConfig::Aimle {
                mode,
                noise: new,
                controller,
                warmup_steps,
                warmup_samples,
            },
            other => other,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            EstimatorConfig::Exact => Ok(()),
            EstimatorConfig::Sfe { tau } | EstimatorConfig::GumbelSoftmax { tau } => {
                Temperature::new(*tau).map(|_| ())
            }
            EstimatorConfig::Ste { noise } => noise.validate(),
            EstimatorConfig::Imle { lambda, noise, .. } => {
                if !(lambda.is_finite() && *lambda >= 0.0) {
                    return Err(Error::InvalidStep(*lambda));
                }
                noise.validate()
            }
            EstimatorConfig::Aimle {
                noise,
                controller,
                warmup_samples,
                ..
            } => {
                if *warmup_samples == Some(0) {
                    return Err(Error::InvalidParameter(
                        "warm-up sample count must be >= 1".into(),
                    ));
                }
                noise.validate()?;
                controller.validate()
            }
        }
    }
}

impl fmt::Display for EstimatorConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstimatorConfig::Imle { lambda, .. } => write!(f, "{}:{lambda}", self.id()),
            EstimatorConfig::Sfe { tau } | EstimatorConfig::GumbelSoftmax { tau }
                if *tau != 1.0 =>
            {
                write!(f, "{}:{tau}", self.id())
            }
            _ => f.write_str(&self.id()),
        }
    }
}

impl FromStr for EstimatorConfig {
    type Err = Error;

    /// `exact`, `sfe[:τ]`, `ste`, `gumbel-softmax[:τ]`, `imle-forward:λ`,
    /// `imle-central:λ`, `aimle-forward`, `aimle-central`. Noise defaults to
    /// `Gumbel(0, 1)`; AIMLE warm-up defaults to zero steps.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("unrecognised estimator `{s}`"));
        let (name, arg) = match s.trim().split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s.trim(), None),
        };
        let num = |a: Option<&str>, default: Option<f64>| -> Result<f64> {
            match a {
                Some(a) => a.trim().parse::<f64>().map_err(|_| bad()),
                None => default.ok_or_else(bad),
            }
        };
        let cfg = match name {
            "exact" if arg.is_none() => EstimatorConfig::Exact,
            "sfe" => EstimatorConfig::Sfe {
                tau: num(arg, Some(1.0))?,
            },
            "ste" if arg.is_none() => EstimatorConfig::Ste {
                noise: NoiseSpec::default(),
            },
            "gumbel-softmax" => EstimatorConfig::GumbelSoftmax {
                tau: num(arg, Some(1.0))?,
            },
            "imle-forward" => EstimatorConfig::imle(num(arg, None)?, ImleMode::Forward),
            "imle-central" => EstimatorConfig::imle(num(arg, None)?, ImleMode::Central),
            "aimle-forward" if arg.is_none() => EstimatorConfig::aimle(ImleMode::Forward, 0),
            "aimle-central" if arg.is_none() => EstimatorConfig::aimle(ImleMode::Central, 0),
            _ => return Err(bad()),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// A seeded synthetic instance: quadratic loss, parameters, exact gradient.
#[derive(Clone, Debug)]
pub struct BenchProblem {
    pub spec: PolytopeSpec,
    pub space: StateSpace,
    pub theta: ParamVector,
    pub loss: QuadraticLoss,
    pub exact_grad: Vec<f64>,
}

/// `b ∼ N(0, I)` then `θ ∼ N(0, I)` from stream 0 of `seed`.
pub fn generate_problem(spec: &PolytopeSpec, seed: u64) -> (QuadraticLoss, ParamVector) {
    let m = spec.dim();
    let mut rng = substream(seed, 0);
    let loss = QuadraticLoss::random(m, &mut rng);
    let theta = (0..m)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    (
        loss,
        ParamVector::new(theta).expect("normal draws are finite"),
    )
}

impl BenchProblem {
    pub fn generate(spec: &PolytopeSpec, seed: u64) -> Result<Self> {
        let space = StateSpace::new(*spec)?;
        let (loss, theta) = generate_problem(spec, seed);
        let exact_grad = space
            .distribution(&theta, Temperature::ONE)?
            .gradient(|z| loss.state_value(z));
        Ok(BenchProblem {
            spec: *spec,
            space,
            theta,
            loss,
            exact_grad,
        })
    }
}

/// One estimator call; also returns the step used when there is one.
pub fn run_estimator<R: Rng + ?Sized>(
    cfg: &EstimatorConfig,
    problem: &BenchProblem,
    samples: usize,
    rng: &mut R,
) -> Result<(GradientEstimate, Option<f64>)> {
    let spec = &problem.spec;
    let theta: &[f64] = &problem.theta;
    let loss = &problem.loss;
    match *cfg {
        EstimatorConfig::Exact => Ok((
            GradientEstimate::new(problem.exact_grad.clone(), 0, spec.dim() as f64),
            None,
        )),
        EstimatorConfig::Sfe { tau } => {
            let sfe = Sfe {
                tau: Temperature::new(tau)?,
                samples,
            };
            Ok((
                sfe.estimate_in(&problem.space, theta, |z| loss.state_value(z), rng)?,
                None,
            ))
        }
        EstimatorConfig::Ste { noise } => Ok((
            Ste { noise, samples }.estimate(spec, theta, loss, rng)?,
            None,
        )),
        EstimatorConfig::GumbelSoftmax { tau } => {
            let gs = GumbelSoftmax {
                tau: Temperature::new(tau)?,
                samples,
            };
            Ok((gs.estimate(spec, theta, loss, rng)?, None))
        }
        EstimatorConfig::Imle { lambda: 0.0, .. } => {
            Ok((GradientEstimate::zero(spec.dim(), samples), Some(0.0)))
        }
        EstimatorConfig::Imle {
            lambda,
            mode,
            noise,
        } => {
            let imle = Imle {
                noise,
                lambda,
                samples,
                mode,
            };
            Ok((imle.estimate(spec, theta, loss, rng)?, Some(lambda)))
        }
        EstimatorConfig::Aimle {
            mode,
            noise,
            controller,
            warmup_steps,
            warmup_samples,
        } => {
            let warm = Aimle {
                noise,
                samples: warmup_samples.unwrap_or(samples),
                mode,
            };
            let mut ctl = controller;
            for _ in 0..warmup_steps {
                ctl = warm.estimate(spec, theta, loss, &ctl, rng)?.controller;
            }
            let step = Aimle {
                noise,
                samples,
                mode,
            }
            .estimate(spec, theta, loss, &ctl, rng)?;
            Ok((step.estimate, Some(step.lambda)))
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchOptions {
    /// Record wall-clock times; off by default so output is byte-reproducible.
    /// The clock is unavailable on `wasm32-unknown-unknown`.
    pub timing: bool,
}

fn parallel_map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    T: Send + Sync,
    U: Send,
    F: Fn(&T) -> U + Send + Sync,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Cosine similarity to the exact gradient for every (seed, estimator, S).
/// Records are ordered seed-major, then estimator, then sample count.
pub fn bench_cosine(
    spec: &PolytopeSpec,
    estimators: &[EstimatorConfig],
    sample_grid: &[usize],
    seeds: &[u64],
    opts: BenchOptions,
) -> Result<Vec<BenchRecord>> {
    for e in estimators {
        e.validate()?;
    }
    if sample_grid.contains(&0) {
        return Err(Error::InvalidParameter("sample counts must be >= 1".into()));
    }
    let problems = seeds
        .iter()
        .map(|&s| BenchProblem::generate(spec, s).map(|p| (s, p)))
        .collect::<Result<Vec<_>>>()?;
    let mut tasks = Vec::new();
    for (pi, _) in problems.iter().enumerate() {
        for (ei, _) in estimators.iter().enumerate() {
            for (si, _) in sample_grid.iter().enumerate() {
                tasks.push((pi, ei, si));
            }
        }
    }
    let results = parallel_map(tasks, |&(pi, ei, si)| -> Result<BenchRecord> {
        let (seed, problem) = &problems[pi];
        let cfg = &estimators[ei];
        let samples = sample_grid[si];
        let mut rng = substream(*seed, 1 + ((ei as u64) << 20) + si as u64);
        let start = opts.timing.then(Instant::now);
        let (est, _) = run_estimator(cfg, problem, samples, &mut rng)?;
        let elapsed = start.map_or(0.0, |s| s.elapsed().as_secs_f64());
        Ok(BenchRecord {
            estimator: cfg.id(),
            spec: spec.to_string(),
            n: spec.dim(),
            samples,
            lambda: cfg.lambda_label(),
            tau: cfg.tau(),
            seed: *seed,
            cosine: cosine_similarity(&est.grad, &problem.exact_grad)?,
            l0_norm: est.l0_norm,
            zero_fraction: est.zero_fraction(),
            wall_time_s: elapsed,
        })
    });
    results.into_iter().collect()
}

/// `start..=end` in `points` evenly spaced values, endpoints exact.
pub fn inclusive_grid(start: f64, end: f64, points: usize) -> Vec<f64> {
    match points {
        0 => vec![],
        1 => vec![start],
        _ => (0..points)
            .map(|i| {
                if i == points - 1 {
                    end
                } else {
                    start + (end - start) * i as f64 / (points - 1) as f64
                }
            })
            .collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub lambdas: Vec<f64>,
    pub samples: usize,
    pub mode: ImleMode,
    pub noise: NoiseSpec,
    pub controller: AimleController,
    pub warmup_steps: usize,
    /// Also run STE and SFE at the same sample count.
    pub baselines: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            lambdas: inclusive_grid(0.0, 5.0, 11),
            samples: 1000,
            mode: ImleMode::Central,
            noise: NoiseSpec::default(),
            controller: AimleController::default(),
            warmup_steps: 2000,
            baselines: false,
        }
    }
}

impl SweepConfig {
    pub fn estimators(&self) -> Vec<EstimatorConfig> {
        let mut list: Vec<EstimatorConfig> = self
            .lambdas
            .iter()
            .map(|&lambda| EstimatorConfig::Imle {
                lambda,
                mode: self.mode,
                noise: self.noise,
            })
            .collect();
        list.push(EstimatorConfig::Aimle {
            mode: self.mode,
            noise: self.noise,
            controller: self.controller,
            warmup_steps: self.warmup_steps,
            warmup_samples: None,
        });
        if self.baselines {
            list.push(EstimatorConfig::Ste { noise: self.noise });
            list.push(EstimatorConfig::Sfe { tau: 1.0 });
        }
        list
    }
}

/// IMLE over a grid of steps plus one adaptive row, all at one sample count.
pub fn sweep_lambda(
    spec: &PolytopeSpec,
    cfg: &SweepConfig,
    seeds: &[u64],
    opts: BenchOptions,
) -> Result<Vec<BenchRecord>> {
    if cfg.lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return Err(Error::InvalidParameter(
            "λ grid must be finite and non-negative".into(),
        ));
    }
    bench_cosine(spec, &cfg.estimators(), &[cfg.samples], seeds, opts)
}

/// Exact expectation of the single-sample IMLE target difference under `p(z; θ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImleExpectation {
    /// `E_{z̄}[μ(θ) − μ(θ − λ ∇_z ℓ(z̄))]`
    pub unscaled: Vec<f64>,
    /// `unscaled / λ`
    pub scaled: Vec<f64>,
}

/// Computes [`ImleExpectation`] by full enumeration at unit temperature.
pub fn expected_imle_gradient_exact<D: Downstream + ?Sized>(
    spec: &PolytopeSpec,
    theta: &[f64],
    dgrad: &D,
    lambda: f64,
) -> Result<ImleExpectation> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidStep(lambda));
    }
    let space = StateSpace::new(*spec)?;
    let dist = space.distribution(theta, Temperature::ONE)?;
    let mu = dist.marginals();
    let mut target = vec![0.0; mu.len()];
    for (z, &p) in space.states().iter().zip(dist.probs()) {
        let (_, g) = dgrad.value_and_grad(&z.to_f64());
        check_dim(mu.len(), g.len())?;
        let shifted: Vec<f64> = theta.iter().zip(&g).map(|(t, g)| t - lambda * g).collect();
        let mu_shifted = space.distribution(&shifted, Temperature::ONE)?.marginals();
        for (acc, v) in target.iter_mut().zip(mu_shifted) {
            *acc += p * v;
        }
    }
    let unscaled: Vec<f64> = mu.iter().zip(&target).map(|(a, b)| a - b).collect();
    let scaled = unscaled.iter().map(|u| u / lambda).collect();
    Ok(ImleExpectation { unscaled, scaled })
}

/// Rows comparing the exact gradient with the exact IMLE expectation at each step.
pub fn bias_table(spec: &PolytopeSpec, seed: u64, lambdas: &[f64]) -> Result<Vec<BiasRow>> {
    let problem = BenchProblem::generate(spec, seed)?;
    let mut rows = Vec::new();
    for &lambda in lambdas {
        let exp = expected_imle_gradient_exact(spec, &problem.theta, &problem.loss, lambda)?;
        for (i, ((g, u), s)) in problem
            .exact_grad
            .iter()
            .zip(&exp.unscaled)
            .zip(&exp.scaled)
            .enumerate()
        {
            rows.push(BiasRow {
                spec: spec.to_string(),
                seed,
                lambda,
                component: i,
                exact_grad: *g,
                imle_unscaled: *u,
                imle_scaled: *s,
                bias: s - g,
            });
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyConfig {
    pub spec: PolytopeSpec,
    pub estimator: EstimatorConfig,
    pub samples: usize,
    pub optimizer: OptimizerConfig,
    pub steps: usize,
    pub seed: u64,
}

/// Everything needed to continue a toy run exactly where it stopped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyCheckpoint {
    pub seed: u64,
    pub steps_done: usize,
    pub theta: Vec<f64>,
    pub controller: AimleController,
    pub optimizer_state: OptimizerState,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyRun {
    pub trajectory: Vec<TrajectoryPoint>,
    pub checkpoint: ToyCheckpoint,
}

/// Optimises `θ` on `E‖z − b‖²` with the configured estimator, reporting the
/// exact expected loss at every step.
///
/// For non-adaptive estimators the `g_bar` column is the same moving average
/// of the per-sample L0 norm, and `alpha` stays 0.
pub fn run_toy_training(cfg: &ToyConfig, resume: Option<&ToyCheckpoint>) -> Result<ToyRun> {
    cfg.estimator.validate()?;
    cfg.optimizer.validate()?;
    if cfg.samples == 0 {
        return Err(Error::InvalidParameter("sample count must be >= 1".into()));
    }
    let space = StateSpace::new(cfg.spec)?;
    let (loss, theta0) = generate_problem(&cfg.spec, cfg.seed);
    let (mut theta, mut ctl, mut opt, start) = match resume {
        Some(ck) => {
            if ck.seed != cfg.seed {
                return Err(Error::InvalidParameter(
                    "checkpoint seed does not match the run seed".into(),
                ));
            }
            check_dim(cfg.spec.dim(), ck.theta.len())?;
            (
                ck.theta.clone(),
                ck.controller,
                ck.optimizer_state.clone(),
                ck.steps_done,
            )
        }
        None => {
            let ctl = match cfg.estimator {
                EstimatorConfig::Aimle { controller, .. } => controller,
                _ => AimleController {
                    eta: 0.0,
                    ..AimleController::default()
                },
            };
            (theta0.into_inner(), ctl, OptimizerState::default(), 0)
        }
    };
    let state_loss = |z: &DiscreteState| loss.state_value(z);
    let mut trajectory = Vec::with_capacity(cfg.steps);
    for t in start..start + cfg.steps {
        let dist = space.distribution(&theta, Temperature::ONE)?;
        let current = dist.expected(state_loss);
        let mut rng = substream(cfg.seed, 1 + t as u64);
        let (grad, lambda) = match cfg.estimator {
            EstimatorConfig::Exact => (dist.gradient(state_loss), 0.0),
            EstimatorConfig::Aimle { mode, noise, .. } => {
                let step = Aimle {
                    noise,
                    samples: cfg.samples,
                    mode,
                }
                .estimate(&cfg.spec, &theta, &loss, &ctl, &mut rng)?;
                ctl = step.controller;
                (step.estimate.grad, step.lambda)
            }
            ref other => {
                let problem = BenchProblem {
                    spec: cfg.spec,
                    space: space.clone(),
                    theta: ParamVector::new(theta.clone())?,
                    loss: loss.clone(),
                    exact_grad: vec![],
                };
                let (est, lambda) = run_estimator(other, &problem, cfg.samples, &mut rng)?;
                ctl = ctl.update_ema(&[est.l0_norm])?;
                (est.grad, lambda.unwrap_or(0.0))
            }
        };
        optimizer_step(&cfg.optimizer, &mut theta, &grad, &mut opt)?;
        if let Some(i) = theta.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "parameter {i} diverged at step {t}"
            )));
        }
        trajectory.push(TrajectoryPoint {
            step: t,
            loss: current,
            lambda,
            g_bar: ctl.g_bar,
            alpha: ctl.alpha,
        });
    }
    Ok(ToyRun {
        trajectory,
        checkpoint: ToyCheckpoint {
            seed: cfg.seed,
            steps_done: start + cfg.steps,
            theta,
            controller: ctl,
            optimizer_state: opt,
        },
    })
}
