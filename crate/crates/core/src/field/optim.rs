use serde::{Deserialize, Serialize};

use super::network::Real;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RmsPropConfig {
    pub lr: f64,
    pub rho: f64,
    pub eps: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        RmsPropConfig {
            lr: 1e-4,
            rho: 0.99,
            eps: 1e-8,
        }
    }
}

/// RMSProp: `v ← ρ·v + (1 − ρ)·g²`, `p ← p − lr·g / √(v + ε)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsProp<T> {
    pub config: RmsPropConfig,
    mean_square: Vec<T>,
}

impl<T: Real> RmsProp<T> {
    pub fn new(config: RmsPropConfig, param_count: usize) -> Self {
        RmsProp {
            config,
            mean_square: vec![T::zero(); param_count],
        }
    }

    pub fn mean_square(&self) -> &[T] {
        &self.mean_square
    }

    /// Applies one update. Non-finite gradients abort the step before anything changes.
    pub fn step(&mut self, params: &mut [T], grads: &[T]) -> Result<()> {
        if params.len() != self.mean_square.len() || grads.len() != params.len() {
            return Err(Error::Config(format!(
                "optimizer shape mismatch: {} params, {} grads, {} state",
                params.len(),
                grads.len(),
                self.mean_square.len()
            )));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::Numerical(format!("non-finite gradient at parameter {i}")));
        }
        let rho = T::from_f64(self.config.rho);
        let one_minus = T::from_f64(1.0 - self.config.rho);
        let lr = T::from_f64(self.config.lr);
        let eps = T::from_f64(self.config.eps);
        for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.mean_square) {
            *v = rho * *v + one_minus * *g * *g;
            *p = *p - lr * *g / (*v + eps).sqrt();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut opt = RmsProp::<f64>::new(RmsPropConfig::default(), 3);
        let mut p = vec![1.0, -2.0, 3.0];
        opt.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn nan_gradient_aborts() {
        let mut opt = RmsProp::<f32>::new(RmsPropConfig::default(), 2);
        let mut p = vec![1.0, 1.0];
        assert!(opt.step(&mut p, &[0.5, f32::NAN]).is_err());
        assert_eq!(p, vec![1.0, 1.0]);
        assert!(opt.mean_square().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn two_steps_by_hand() {
        let cfg = RmsPropConfig {
            lr: 0.1,
            rho: 0.9,
            eps: 0.0,
        };
        let mut opt = RmsProp::<f64>::new(cfg, 1);
        let mut p = vec![1.0];
        // v = 0.1·4 = 0.4, p = 1 − 0.1·2/√0.4
        opt.step(&mut p, &[2.0]).unwrap();
        let p1 = 1.0 - 0.2 / 0.4f64.sqrt();
        assert!((p[0] - p1).abs() < 1e-15);
        // v = 0.36 + 0.1·1 = 0.46, p −= 0.1·(−1)/√0.46
        opt.step(&mut p, &[-1.0]).unwrap();
        assert!((opt.mean_square()[0] - 0.46).abs() < 1e-15);
        assert!((p[0] - (p1 + 0.1 / 0.46f64.sqrt())).abs() < 1e-15);
    }
}
