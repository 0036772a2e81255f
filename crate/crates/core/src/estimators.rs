//! Gradient estimators for `∇θ E_{z∼p(z;θ)}[f(z)]`.
//!
//! | estimator        | needs                  | samples from          |
//! |------------------|------------------------|-----------------------|
//! | [`Sfe`]          | loss values, marginals | exact distribution    |
//! | [`Ste`]          | `∇_z f`                | Perturb-and-MAP       |
//! | [`GumbelSoftmax`]| `∇_s f` on the simplex | relaxed categorical   |
//! | [`Imle`]         | `∇_z f`, MAP oracle    | Perturb-and-MAP       |
//! | [`Aimle`]        | as IMLE + controller   | Perturb-and-MAP       |
//!
//! Every estimator returns the mean over its samples.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::control::AimleController;
use crate::error::{check_dim, Error, Result};
use crate::noise::NoiseSpec;
use crate::polytope::{DiscreteState, PolytopeSpec, StateSpace, Temperature};
use crate::solvers::map_solve;

/// A downstream function `f` with access to its gradient.
pub trait Downstream {
    /// `(f(z), ∇_z f(z))`.
    fn value_and_grad(&self, z: &[f64]) -> (f64, Vec<f64>);
}

/// Adapts a closure returning `(value, gradient)`.
pub struct FnDownstream<F>(pub F);

impl<F> Downstream for FnDownstream<F>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    fn value_and_grad(&self, z: &[f64]) -> (f64, Vec<f64>) {
        (self.0)(z)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientEstimate {
    pub grad: Vec<f64>,
    pub samples_used: usize,
    /// Mean number of non-zero components per sample.
    pub l0_norm: f64,
    /// Every component of `grad` is exactly zero.
    pub is_zero: bool,
}

impl GradientEstimate {
    pub fn new(grad: Vec<f64>, samples_used: usize, l0_norm: f64) -> Self {
        let is_zero = grad.iter().all(|&g| g == 0.0);
        GradientEstimate {
            grad,
            samples_used,
            l0_norm,
            is_zero,
        }
    }

    pub fn zero(m: usize, samples_used: usize) -> Self {
        GradientEstimate::new(vec![0.0; m], samples_used, 0.0)
    }

    /// Fraction of components of `grad` that are exactly zero.
    pub fn zero_fraction(&self) -> f64 {
        if self.grad.is_empty() {
            return 1.0;
        }
        self.grad.iter().filter(|&&g| g == 0.0).count() as f64 / self.grad.len() as f64
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImleMode {
    /// `(1/λ)[MAP(θ+ε) − MAP(θ+ε − λ∇f)]`
    Forward,
    /// `(1/2λ)[MAP(θ+ε + λ∇f) − MAP(θ+ε − λ∇f)]`
    #[default]
    Central,
}

impl fmt::Display for ImleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ImleMode::Forward => "forward",
            ImleMode::Central => "central",
        })
    }
}

impl FromStr for ImleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "forward" => Ok(ImleMode::Forward),
            "central" => Ok(ImleMode::Central),
            _ => Err(Error::InvalidParameter(format!(
                "unknown difference mode `{s}`"
            ))),
        }
    }
}

fn check_samples(samples: usize) -> Result<()> {
    if samples == 0 {
        Err(Error::InvalidParameter("sample count must be >= 1".into()))
    } else {
        Ok(())
    }
}

fn downstream_grad<D: Downstream + ?Sized>(dgrad: &D, z: &[f64]) -> Result<Vec<f64>> {
    let (_, g) = dgrad.value_and_grad(z);
    check_dim(z.len(), g.len())?;
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(
            "downstream gradient is not finite".into(),
        ));
    }
    Ok(g)
}

fn count_nonzero(v: &[f64]) -> usize {
    v.iter().filter(|&&x| x != 0.0).count()
}

/// Score-function (REINFORCE) estimator `(1/τ)(z − μ) ℓ(z)` with exact samples.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sfe {
    pub tau: Temperature,
    pub samples: usize,
}

impl Sfe {
    pub fn estimate<F, R>(
        &self,
        spec: &PolytopeSpec,
        theta: &[f64],
        loss: F,
        rng: &mut R,
    ) -> Result<GradientEstimate>
    where
        F: Fn(&DiscreteState) -> f64,
        R: Rng + ?Sized,
    {
        let space = StateSpace::new(*spec)?;
        self.estimate_in(&space, theta, loss, rng)
    }

    /// As [`estimate`](Self::estimate) on an already enumerated space.
    pub fn estimate_in<F, R>(
        &self,
        space: &StateSpace,
        theta: &[f64],
        loss: F,
        rng: &mut R,
    ) -> Result<GradientEstimate>
    where
        F: Fn(&DiscreteState) -> f64,
        R: Rng + ?Sized,
    {
        check_samples(self.samples)?;
        let dist = space.distribution(theta, self.tau)?;
        let mu = dist.marginals();
        let m = mu.len();
        // Each state's score term is fixed, so accumulate draws per state.
        let mut counts = vec![0u64; space.len()];
        for _ in 0..self.samples {
            counts[dist.sample_index(rng)] += 1;
        }
        let inv_tau = 1.0 / self.tau.value();
        let mut grad = vec![0.0; m];
        let mut l0 = 0.0;
        for (z, &count) in space.states().iter().zip(&counts) {
            if count == 0 {
                continue;
            }
            let l = loss(z);
            let term: Vec<f64> = z
                .bits()
                .iter()
                .zip(&mu)
                .map(|(&b, mu)| inv_tau * (f64::from(b) - mu) * l)
                .collect();
            for (g, t) in grad.iter_mut().zip(&term) {
                *g += count as f64 * t;
            }
            l0 += count as f64 * count_nonzero(&term) as f64;
        }
        let s = self.samples as f64;
        grad.iter_mut().for_each(|g| *g /= s);
        Ok(GradientEstimate::new(grad, self.samples, l0 / s))
    }
}

/// Straight-through estimator: `∇_z f(z)` at Perturb-and-MAP samples, passed
/// through with an identity Jacobian.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ste {
    pub noise: NoiseSpec,
    pub samples: usize,
}

impl Ste {
    pub fn estimate<D, R>(
        &self,
        spec: &PolytopeSpec,
        theta: &[f64],
        dgrad: &D,
        rng: &mut R,
    ) -> Result<GradientEstimate>
    where
        D: Downstream + ?Sized,
        R: Rng + ?Sized,
    {
        check_samples(self.samples)?;
        check_dim(spec.dim(), theta.len())?;
        let sampler = self.noise.sampler()?;
        let m = theta.len();
        let mut grad = vec![0.0; m];
        let mut l0 = 0usize;
        let mut perturbed = vec![0.0; m];
        for _ in 0..self.samples {
            sampler.fill(&mut perturbed, rng);
            perturbed.iter_mut().zip(theta).for_each(|(p, t)| *p += t);
            let z = map_solve(spec, &perturbed)?;
            let g = downstream_grad(dgrad, &z.to_f64())?;
            l0 += count_nonzero(&g);
            grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        }
        let s = self.samples as f64;
        grad.iter_mut().for_each(|g| *g /= s);
        Ok(GradientEstimate::new(grad, self.samples, l0 as f64 / s))
    }
}

/// Softmax of `x / tau`, max-shifted.
pub fn softmax(x: &[f64], tau: f64) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| ((v - max) / tau).exp()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|v| v / total).collect()
}

/// Pathwise Gumbel-Softmax estimator for categorical variables:
/// `Jᵀ ∇_s f(s)` with `s = softmax((θ + γ)/τ)` and `J = (diag(s) − s sᵀ)/τ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GumbelSoftmax {
    pub tau: Temperature,
    pub samples: usize,
}

impl GumbelSoftmax {
    pub fn estimate<D, R>(
        &self,
        spec: &PolytopeSpec,
        theta: &[f64],
        dgrad: &D,
        rng: &mut R,
    ) -> Result<GradientEstimate>
    where
        D: Downstream + ?Sized,
        R: Rng + ?Sized,
    {
        if !matches!(spec, PolytopeSpec::Categorical { .. }) {
            return Err(Error::Unsupported(format!("Gumbel-Softmax on {spec}")));
        }
        check_samples(self.samples)?;
        check_dim(spec.dim(), theta.len())?;
        let sampler = NoiseSpec::gumbel(1.0).sampler()?;
        let tau = self.tau.value();
        let m = theta.len();
        let mut grad = vec![0.0; m];
        let mut l0 = 0usize;
        let mut logits = vec![0.0; m];
        for _ in 0..self.samples {
            sampler.fill(&mut logits, rng);
            logits.iter_mut().zip(theta).for_each(|(l, t)| *l += t);
            let s = softmax(&logits, tau);
            let term = softmax_vjp(&s, &downstream_grad(dgrad, &s)?, tau);
            l0 += count_nonzero(&term);
            grad.iter_mut().zip(&term).for_each(|(a, b)| *a += b);
        }
        let n = self.samples as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        Ok(GradientEstimate::new(grad, self.samples, l0 as f64 / n))
    }
}

/// `Jᵀ g` for the tempered softmax Jacobian `J = (diag(s) − s sᵀ)/τ`.
pub fn softmax_vjp(s: &[f64], g: &[f64], tau: f64) -> Vec<f64> {
    let dot: f64 = s.iter().zip(g).map(|(a, b)| a * b).sum();
    s.iter()
        .zip(g)
        .map(|(si, gi)| si * (gi - dot) / tau)
        .collect()
}

/// Perturb-and-MAP forward pass for one sample.
struct Draw {
    perturbed: Vec<f64>,
    z: DiscreteState,
    dgrad: Vec<f64>,
}

fn forward_draw<D, R>(
    spec: &PolytopeSpec,
    theta: &[f64],
    sampler: &crate::noise::NoiseSampler,
    dgrad: &D,
    rng: &mut R,
) -> Result<Draw>
where
    D: Downstream + ?Sized,
    R: Rng + ?Sized,
{
    let mut perturbed = vec![0.0; theta.len()];
    sampler.fill(&mut perturbed, rng);
    perturbed.iter_mut().zip(theta).for_each(|(p, t)| *p += t);
    let z = map_solve(spec, &perturbed)?;
    let dgrad = downstream_grad(dgrad, &z.to_f64())?;
    Ok(Draw {
        perturbed,
        z,
        dgrad,
    })
}

/// Unscaled MAP difference for one sample, added into `acc`; returns its L0 norm.
fn accumulate_difference(
    spec: &PolytopeSpec,
    draw: &Draw,
    lambda: f64,
    mode: ImleMode,
    acc: &mut [f64],
) -> Result<usize> {
    let shifted = |sign: f64| -> Vec<f64> {
        draw.perturbed
            .iter()
            .zip(&draw.dgrad)
            .map(|(p, g)| p + sign * lambda * g)
            .collect()
    };
    let lower = map_solve(spec, &shifted(-1.0))?;
    let upper = match mode {
        ImleMode::Forward => draw.z.clone(),
        ImleMode::Central => map_solve(spec, &shifted(1.0))?,
    };
    let mut l0 = 0;
    for ((a, &u), &l) in acc.iter_mut().zip(upper.bits()).zip(lower.bits()) {
        let d = i32::from(u) - i32::from(l);
        if d != 0 {
            l0 += 1;
            *a += f64::from(d);
        }
    }
    Ok(l0)
}

fn scale_for(lambda: f64, mode: ImleMode, samples: usize) -> f64 {
    let width = match mode {
        ImleMode::Forward => lambda,
        ImleMode::Central => 2.0 * lambda,
    };
    1.0 / (width * samples as f64)
}

/// IMLE: finite differences of the MAP oracle along the downstream gradient.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Imle {
    pub noise: NoiseSpec,
    pub lambda: f64,
    pub samples: usize,
    pub mode: ImleMode,
}

impl Imle {
    pub fn estimate<D, R>(
        &self,
        spec: &PolytopeSpec,
        theta: &[f64],
        dgrad: &D,
        rng: &mut R,
    ) -> Result<GradientEstimate>
    where
        D: Downstream + ?Sized,
        R: Rng + ?Sized,
    {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::InvalidStep(self.lambda));
        }
        check_samples(self.samples)?;
        check_dim(spec.dim(), theta.len())?;
        let sampler = self.noise.sampler()?;
        let mut acc = vec![0.0; theta.len()];
        let mut l0 = 0usize;
        for _ in 0..self.samples {
            let draw = forward_draw(spec, theta, &sampler, dgrad, rng)?;
            l0 += accumulate_difference(spec, &draw, self.lambda, self.mode, &mut acc)?;
        }
        let scale = scale_for(self.lambda, self.mode, self.samples);
        acc.iter_mut().for_each(|a| *a *= scale);
        Ok(GradientEstimate::new(
            acc,
            self.samples,
            l0 as f64 / self.samples as f64,
        ))
    }
}

/// Adaptive IMLE: IMLE whose step `λ` comes from an [`AimleController`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aimle {
    pub noise: NoiseSpec,
    pub samples: usize,
    pub mode: ImleMode,
}

/// Result of one adaptive backward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct AimleStep {
    pub estimate: GradientEstimate,
    /// Step used for this batch, computed with the controller's `α` before the update.
    pub lambda: f64,
    pub controller: AimleController,
}

impl Aimle {
    pub fn estimate<D, R>(
        &self,
        spec: &PolytopeSpec,
        theta: &[f64],
        dgrad: &D,
        controller: &AimleController,
        rng: &mut R,
    ) -> Result<AimleStep>
    where
        D: Downstream + ?Sized,
        R: Rng + ?Sized,
    {
        controller.validate()?;
        check_samples(self.samples)?;
        check_dim(spec.dim(), theta.len())?;
        let sampler = self.noise.sampler()?;
        let draws = (0..self.samples)
            .map(|_| forward_draw(spec, theta, &sampler, dgrad, rng))
            .collect::<Result<Vec<_>>>()?;
        let theta_norm = theta.iter().map(|t| t * t).sum::<f64>().sqrt();
        let norms: Vec<f64> = draws
            .iter()
            .map(|d| d.dgrad.iter().map(|g| g * g).sum::<f64>().sqrt())
            .collect();
        let lambda = match controller.compute_lambda(theta_norm, &norms) {
            Ok(l) => l,
            Err(Error::AllDegenerate) => 0.0,
            Err(e) => return Err(e),
        };
        let mut acc = vec![0.0; theta.len()];
        let mut batch_l0 = vec![0.0; self.samples];
        if lambda > 0.0 {
            for (draw, l0) in draws.iter().zip(batch_l0.iter_mut()) {
                *l0 = accumulate_difference(spec, draw, lambda, self.mode, &mut acc)? as f64;
            }
            let scale = scale_for(lambda, self.mode, self.samples);
            acc.iter_mut().for_each(|a| *a *= scale);
        }
        let mean_l0 = batch_l0.iter().sum::<f64>() / self.samples as f64;
        Ok(AimleStep {
            estimate: GradientEstimate::new(acc, self.samples, mean_l0),
            lambda,
            controller: controller.observe(&batch_l0)?,
        })
    }
}
