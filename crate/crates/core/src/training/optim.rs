use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    SgdMomentum,
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub momentum: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay applied to every parameter.
    pub weight_decay: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adam,
            learning_rate: 1e-2,
            momentum: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate >= 0.0
            && (0.0..1.0).contains(&self.momentum)
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.weight_decay >= 0.0;
        if !ok {
            return Err(Error::Config(format!("invalid optimizer settings: {self:?}")));
        }
        Ok(())
    }
}

/// Per-parameter optimizer state.
#[derive(Clone, Debug)]
pub struct Optimizer {
    cfg: OptimizerConfig,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    steps: u64,
}

impl Optimizer {
    pub fn new(cfg: OptimizerConfig, params: &[&Tensor]) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.shape())).collect::<Vec<_>>();
        Optimizer {
            first: zeros(),
            second: zeros(),
            cfg,
            steps: 0,
        }
    }

    /// Applies one update. With a zero learning rate parameters are left
    /// untouched bitwise.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.first.len() {
            return Err(Error::dim("optimizer_step", format!("{} params, {} grads", params.len(), grads.len())));
        }
        self.steps += 1;
        let lr = self.cfg.learning_rate;
        if lr == 0.0 {
            return Ok(());
        }
        let wd = self.cfg.weight_decay;
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(Error::dim("optimizer_step", format!("param {:?} vs grad {:?}", p.shape(), g.shape())));
            }
            let m = self.first[i].data_mut();
            match self.cfg.kind {
                OptimizerKind::SgdMomentum => {
                    let mu = self.cfg.momentum;
                    for ((w, &gi), mi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()) {
                        *mi = mu * *mi + gi;
                        *w -= lr * (*mi + wd * *w);
                    }
                }
                OptimizerKind::Adam => {
                    let (b1, b2, eps) = (self.cfg.beta1, self.cfg.beta2, self.cfg.eps);
                    let c1 = 1.0 - b1.powf(self.steps as f64);
                    let c2 = 1.0 - b2.powf(self.steps as f64);
                    let v = self.second[i].data_mut();
                    for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                        *mi = b1 * *mi + (1.0 - b1) * gi;
                        *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                        let mhat = *mi / c1;
                        let vhat = *vi / c2;
                        *w -= lr * (mhat / (vhat.sqrt() + eps) + wd * *w);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut w = Tensor::vector(vec![1.0, -2.0]);
        let cfg = OptimizerConfig::default();
        let mut opt = Optimizer::new(cfg.clone(), &[&w]);
        opt.step(&mut [&mut w], &[Tensor::vector(vec![3.0, -0.5])]).unwrap();
        assert!((w.data()[0] - (1.0 - cfg.learning_rate)).abs() < 1e-9);
        assert!((w.data()[1] - (-2.0 + cfg.learning_rate)).abs() < 1e-9);
    }

    #[test]
    fn sgd_minimizes_quadratic() {
        let mut w = Tensor::vector(vec![5.0]);
        let cfg = OptimizerConfig {
            kind: OptimizerKind::SgdMomentum,
            learning_rate: 0.1,
            momentum: 0.5,
            ..OptimizerConfig::default()
        };
        let mut opt = Optimizer::new(cfg, &[&w]);
        for _ in 0..200 {
            let g = w.clone();
            opt.step(&mut [&mut w], &[g]).unwrap();
        }
        assert!(w.data()[0].abs() < 1e-8);
    }
}
