//! Toy downstream losses with analytic gradients.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::estimators::Downstream;
use crate::polytope::DiscreteState;

/// `f(z) = ‖z − b‖²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticLoss {
    b: Vec<f64>,
}

impl QuadraticLoss {
    pub fn new(b: Vec<f64>) -> Result<Self> {
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("target must be finite".into()));
        }
        Ok(QuadraticLoss { b })
    }

    /// Target drawn from `N(0, I)`.
    pub fn random<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Self {
        QuadraticLoss {
            b: (0..m).map(|_| rng.sample(StandardNormal)).collect(),
        }
    }

    pub fn target(&self) -> &[f64] {
        &self.b
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        z.iter().zip(&self.b).map(|(z, b)| (z - b) * (z - b)).sum()
    }

    pub fn grad(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.b).map(|(z, b)| 2.0 * (z - b)).collect()
    }

    /// Loss of a discrete state without materialising it as floats.
    pub fn state_value(&self, z: &DiscreteState) -> f64 {
        z.bits()
            .iter()
            .zip(&self.b)
            .map(|(&bit, b)| {
                let d = f64::from(bit) - b;
                d * d
            })
            .sum()
    }

    /// `min_z ‖z − b‖²` over one-hot `z`.
    pub fn best_one_hot(&self) -> f64 {
        let base: f64 = self.b.iter().map(|b| b * b).sum();
        self.b
            .iter()
            .map(|b| base - b * b + (1.0 - b) * (1.0 - b))
            .fold(f64::INFINITY, f64::min)
    }
}

impl Downstream for QuadraticLoss {
    fn value_and_grad(&self, z: &[f64]) -> (f64, Vec<f64>) {
        (self.value(z), self.grad(z))
    }
}

/// `(‖z − b‖², 2(z − b))`.
pub fn quad_loss(b: &[f64], z: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_dim(b.len(), z.len())?;
    let d: Vec<f64> = z.iter().zip(b).map(|(z, b)| z - b).collect();
    Ok((
        d.iter().map(|x| x * x).sum(),
        d.iter().map(|x| 2.0 * x).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        let (v, g) = quad_loss(&[0.0; 3], &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(v, 1.0);
        assert_eq!(g, vec![2.0, 0.0, 0.0]);
        let b = [0.3, -1.2, 4.0];
        let (v, g) = quad_loss(&b, &b).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(g, vec![0.0; 3]);
        assert!(matches!(
            quad_loss(&b, &[0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn best_one_hot_matches_enumeration() {
        let loss = QuadraticLoss::new(vec![0.3, 1.4, -0.2, 0.9]).unwrap();
        let best = (0..4)
            .map(|i| loss.state_value(&DiscreteState::one_hot(4, i)))
            .fold(f64::INFINITY, f64::min);
        assert!((loss.best_one_hot() - best).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn gradient_matches_finite_differences(
            zb in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 1..12)
        ) {
            let (z, b): (Vec<f64>, Vec<f64>) = zb.into_iter().unzip();
            let (_, g) = quad_loss(&b, &z).unwrap();
            let h = 1e-5;
            for i in 0..z.len() {
                let mut zp = z.clone();
                let mut zm = z.clone();
                zp[i] += h;
                zm[i] -= h;
                let fd = (quad_loss(&b, &zp).unwrap().0 - quad_loss(&b, &zm).unwrap().0) / (2.0 * h);
                prop_assert!((fd - g[i]).abs() < 1e-6);
            }
        }
    }
}
