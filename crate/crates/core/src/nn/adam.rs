use serde::{Deserialize, Serialize};

use super::{ParamGrads, Parameterized};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.beta1 == 0.0 || self.beta2 == 0.0 {
            return Err(Error::Config(format!("invalid Adam configuration {self:?}")));
        }
        Ok(())
    }
}

/// First/second moment buffers and step counter for one parameter set.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn new<P: Parameterized + ?Sized>(params: &P) -> Self {
        let zeros: Vec<Vec<f64>> = params.param_blocks().iter().map(|(_, b)| vec![0.0; b.len()]).collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    /// One bias-corrected Adam update.
    pub fn update<P: Parameterized + ?Sized>(&mut self, params: &mut P, grads: &ParamGrads, cfg: &AdamConfig) -> Result<()> {
        let mut blocks = params.param_blocks_mut();
        if blocks.len() != grads.0.len() || blocks.len() != self.m.len() {
            return Err(Error::Shape {
                expected: blocks.len(),
                got: grads.0.len(),
            });
        }
        for (b, g) in blocks.iter().zip(&grads.0) {
            if b.len() != g.len() {
                return Err(Error::Shape {
                    expected: b.len(),
                    got: g.len(),
                });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for (k, block) in blocks.iter_mut().enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for (i, p) in block.iter_mut().enumerate() {
                let g = grads.0[k][i];
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                *p -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            }
        }
        Ok(())
    }
}
