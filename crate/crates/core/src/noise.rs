//! Perturbation distributions and Perturb-and-MAP sampling.

use std::fmt;
use std::str::FromStr;

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::polytope::{DiscreteState, PolytopeSpec};
use crate::solvers::map_solve;

/// Default truncation of the Sum-of-Gamma series.
pub const DEFAULT_SOG_TERMS: usize = 10;

/// Perturbation distribution `ρ(ε)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum NoiseSpec {
    None,
    /// `τ · Gumbel(0, 1)`.
    Gumbel {
        temperature: f64,
    },
    /// `(τ/k) (Σ_{i=1}^{s} Gamma(1/k, k/i) − log s)`, with the Gamma in
    /// shape/scale form. Sums of `k` such draws are approximately Gumbel,
    /// which makes this the natural noise for top-k MAP states.
    SumOfGamma {
        k: usize,
        s: usize,
        temperature: f64,
    },
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec::Gumbel { temperature: 1.0 }
    }
}

impl fmt::Display for NoiseSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            NoiseSpec::None => f.write_str("none"),
            NoiseSpec::Gumbel { temperature } => write!(f, "gumbel:{temperature}"),
            NoiseSpec::SumOfGamma { k, s, temperature } => write!(f, "sog:{k}:{s}:{temperature}"),
        }
    }
}

impl FromStr for NoiseSpec {
    type Err = Error;

    /// `none`, `gumbel[:τ]` or `sog:k[:s[:τ]]`.
    fn from_str(text: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("unrecognised noise `{text}`"));
        let parts: Vec<&str> = text.trim().split(':').collect();
        let float = |i: usize| -> Result<f64> {
            parts
                .get(i)
                .map_or(Ok(1.0), |p| p.parse().map_err(|_| bad()))
        };
        let spec = match parts.as_slice() {
            ["none"] => NoiseSpec::None,
            ["gumbel"] | ["gumbel", _] => NoiseSpec::Gumbel {
                temperature: float(1)?,
            },
            ["sog", k, rest @ ..] if rest.len() <= 2 => NoiseSpec::SumOfGamma {
                k: k.parse().map_err(|_| bad())?,
                s: rest
                    .first()
                    .map_or(Ok(DEFAULT_SOG_TERMS), |s| s.parse().map_err(|_| bad()))?,
                temperature: float(3)?,
            },
            _ => return Err(bad()),
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        let bad_tau = |t: f64| !(t.is_finite() && t >= 0.0);
        match *self {
            NoiseSpec::None => Ok(()),
            NoiseSpec::Gumbel { temperature } if bad_tau(temperature) => {
                Err(Error::InvalidParameter(format!(
                    "noise temperature must be >= 0, got {temperature}"
                )))
            }
            NoiseSpec::SumOfGamma { temperature, .. } if bad_tau(temperature) => {
                Err(Error::InvalidParameter(format!(
                    "noise temperature must be >= 0, got {temperature}"
                )))
            }
            NoiseSpec::SumOfGamma { k, s, .. } if k == 0 || s == 0 => Err(Error::InvalidParameter(
                "sum-of-gamma requires k >= 1 and s >= 1".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Gumbel noise scaled by a temperature.
    pub fn gumbel(temperature: f64) -> Self {
        NoiseSpec::Gumbel { temperature }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            NoiseSpec::None => true,
            NoiseSpec::Gumbel { temperature } | NoiseSpec::SumOfGamma { temperature, .. } => {
                temperature == 0.0
            }
        }
    }

    /// Prepared sampler; hoists the Gamma set-up out of per-sample loops.
    pub fn sampler(&self) -> Result<NoiseSampler> {
        self.validate()?;
        let kind = match *self {
            NoiseSpec::None => SamplerKind::Zero,
            NoiseSpec::Gumbel { temperature: 0.0 } => SamplerKind::Zero,
            NoiseSpec::Gumbel { temperature } => SamplerKind::Gumbel(temperature),
            NoiseSpec::SumOfGamma {
                temperature: 0.0, ..
            } => SamplerKind::Zero,
            NoiseSpec::SumOfGamma { k, s, temperature } => {
                let shape = 1.0 / k as f64;
                let terms = (1..=s)
                    .map(|i| {
                        Gamma::new(shape, k as f64 / i as f64).expect("positive shape and scale")
                    })
                    .collect();
                SamplerKind::SumOfGamma {
                    terms,
                    offset: (s as f64).ln(),
                    scale: temperature / k as f64,
                }
            }
        };
        Ok(NoiseSampler { kind })
    }
}

#[derive(Clone, Debug)]
enum SamplerKind {
    Zero,
    Gumbel(f64),
    SumOfGamma {
        terms: Vec<Gamma<f64>>,
        offset: f64,
        scale: f64,
    },
}

#[derive(Clone, Debug)]
pub struct NoiseSampler {
    kind: SamplerKind,
}

impl NoiseSampler {
    pub fn fill<R: Rng + ?Sized>(&self, out: &mut [f64], rng: &mut R) {
        match &self.kind {
            SamplerKind::Zero => out.fill(0.0),
            SamplerKind::Gumbel(t) => {
                for o in out.iter_mut() {
                    *o = t * gumbel_from_uniform(rng.sample(Open01));
                }
            }
            SamplerKind::SumOfGamma {
                terms,
                offset,
                scale,
            } => {
                for o in out.iter_mut() {
                    let sum: f64 = terms.iter().map(|g| g.sample(rng)).sum();
                    *o = scale * (sum - offset);
                }
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, SamplerKind::Zero)
    }
}

/// Standard Gumbel quantile `−log(−log u)` for `u ∈ (0, 1)`.
pub fn gumbel_from_uniform(u: f64) -> f64 {
    -(-u.ln()).ln()
}

/// An i.i.d. noise vector of length `m`.
pub fn sample_noise<R: Rng + ?Sized>(noise: &NoiseSpec, m: usize, rng: &mut R) -> Result<Vec<f64>> {
    let mut out = vec![0.0; m];
    noise.sampler()?.fill(&mut out, rng);
    Ok(out)
}

/// `z = MAP(θ + ε)`, `ε ∼ ρ`.
pub fn perturb_and_map<R: Rng + ?Sized>(
    spec: &PolytopeSpec,
    theta: &[f64],
    noise: &NoiseSpec,
    rng: &mut R,
) -> Result<DiscreteState> {
    check_dim(spec.dim(), theta.len())?;
    let sampler = noise.sampler()?;
    if sampler.is_zero() {
        return map_solve(spec, theta);
    }
    let mut perturbed = vec![0.0; theta.len()];
    sampler.fill(&mut perturbed, rng);
    for (p, t) in perturbed.iter_mut().zip(theta) {
        *p += t;
    }
    map_solve(spec, &perturbed)
}

/// Independent random stream number `stream` under a root `seed`.
///
/// Splitting rule: the ChaCha8 generator keyed by `seed_from_u64(seed)` with
/// its 64-bit stream id set to `stream`. Streams never overlap, so
/// concurrent workers given distinct stream ids stay independent and the
/// results do not depend on scheduling.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
