use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for an ordered list of parameters.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    pub t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &[&Tensor]) -> Self {
        Self {
            config,
            t: 0,
            m: params.iter().map(|p| p.zeros_like()).collect(),
            v: params.iter().map(|p| p.zeros_like()).collect(),
        }
    }

    /// Applies one bias-corrected update to every parameter. Nothing is
    /// modified when any gradient is non-finite or mis-shaped.
    pub fn step(&mut self, params: Vec<&mut Tensor>, grads: Vec<&Tensor>) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "adam tracks {} tensors, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for ((p, g), m) in params.iter().zip(&grads).zip(&self.m) {
            if p.shape() != g.shape() || p.shape() != m.shape() {
                return Err(Error::Shape(format!(
                    "adam: param {:?} vs grad {:?}",
                    p.shape(),
                    g.shape()
                )));
            }
            g.ensure_finite("gradient")?;
        }
        self.t += 1;
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            update(p.data_mut(), g.data(), m.data_mut(), v.data_mut(), self.t, &self.config);
        }
        Ok(())
    }
}

fn update(param: &mut [f64], grad: &[f64], m: &mut [f64], v: &mut [f64], t: u64, c: &AdamConfig) {
    let bias1 = 1.0 - c.beta1.powi(t as i32);
    let bias2 = 1.0 - c.beta2.powi(t as i32);
    for i in 0..param.len() {
        let g = grad[i];
        m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
        v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
        let m_hat = m[i] / bias1;
        let v_hat = v[i] / bias2;
        param[i] -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
    }
}

/// Single-tensor Adam update at step `t` (1-based).
pub fn adam_step(
    param: &mut Tensor,
    grad: &Tensor,
    m: &mut Tensor,
    v: &mut Tensor,
    t: u64,
    config: &AdamConfig,
) -> Result<()> {
    if t == 0 {
        return Err(Error::InvalidArgument("adam step count starts at 1".into()));
    }
    if param.shape() != grad.shape() || m.shape() != grad.shape() || v.shape() != grad.shape() {
        return Err(Error::Shape("adam_step operands differ in shape".into()));
    }
    grad.ensure_finite("gradient")?;
    update(param.data_mut(), grad.data(), m.data_mut(), v.data_mut(), t, config);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let cfg = AdamConfig {
            eps: 0.0,
            ..AdamConfig::default()
        };
        let grad = Tensor::vector(vec![3.0, -0.001, 250.0]);
        let mut p = Tensor::vector(vec![1.0, 1.0, 1.0]);
        let (mut m, mut v) = (grad.zeros_like(), grad.zeros_like());
        adam_step(&mut p, &grad, &mut m, &mut v, 1, &cfg).unwrap();
        let expected = [1.0 - 1e-3, 1.0 + 1e-3, 1.0 - 1e-3];
        for (a, b) in p.data().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_gradient_keeps_params() {
        let mut state = AdamState::new(AdamConfig::default(), &[&Tensor::zeros(&[2, 2])]);
        let mut p = Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let before = p.clone();
        state.step(vec![&mut p], vec![&Tensor::zeros(&[2, 2])]).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn non_finite_gradient_fails_without_mutation() {
        let mut state = AdamState::new(AdamConfig::default(), &[&Tensor::zeros(&[2])]);
        let mut p = Tensor::vector(vec![1.0, 2.0]);
        let g = Tensor::vector(vec![f64::NAN, 0.0]);
        assert!(matches!(state.step(vec![&mut p], vec![&g]), Err(Error::NonFinite(_))));
        assert_eq!(p.data(), &[1.0, 2.0]);
        assert_eq!(state.t, 0);
    }
}
