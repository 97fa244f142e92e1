//! First-order optimizers with decoupled weight decay.

use super::config::{OptimizerConfig, OptimizerKind};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const RMS_DECAY: f64 = 0.99;
const EPS: f64 = 1e-8;

/// Optimizer state over a flat parameter vector. Parameters whose `trainable`
/// flag is false are never touched, including by weight decay.
#[derive(Clone, Debug)]
pub struct Optimizer {
    cfg: OptimizerConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    trainable: Vec<bool>,
}

impl Optimizer {
    pub fn new(cfg: OptimizerConfig, len: usize) -> Self {
        Self {
            cfg,
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
            trainable: vec![true; len],
        }
    }

    pub fn with_trainable(mut self, trainable: Vec<bool>) -> Self {
        assert_eq!(trainable.len(), self.m.len());
        self.trainable = trainable;
        self
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Returns the global gradient norm before clipping.
    pub fn update(&mut self, params: &mut [f64], grad: &[f64]) -> f64 {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        let norm = grad
            .iter()
            .zip(&self.trainable)
            .filter(|(_, &t)| t)
            .map(|(g, _)| g * g)
            .sum::<f64>()
            .sqrt();
        let clip = if self.cfg.clip > 0.0 && norm > self.cfg.clip {
            self.cfg.clip / norm
        } else {
            1.0
        };
        self.step += 1;
        let lr = self.cfg.lr;
        let decay = 1.0 - lr * self.cfg.weight_decay;
        let t = self.step as i32;
        let (c1, c2) = (1.0 - BETA1.powi(t), 1.0 - BETA2.powi(t));
        for i in 0..params.len() {
            if !self.trainable[i] {
                continue;
            }
            let g = grad[i] * clip;
            params[i] *= decay;
            match self.cfg.kind {
                OptimizerKind::Adamw => {
                    self.m[i] = BETA1 * self.m[i] + (1.0 - BETA1) * g;
                    self.v[i] = BETA2 * self.v[i] + (1.0 - BETA2) * g * g;
                    params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + EPS);
                }
                OptimizerKind::Rmsprop => {
                    self.v[i] = RMS_DECAY * self.v[i] + (1.0 - RMS_DECAY) * g * g;
                    params[i] -= lr * g / (self.v[i].sqrt() + EPS);
                }
            }
        }
        norm
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(kind: OptimizerKind, wd: f64) -> OptimizerConfig {
        OptimizerConfig {
            kind,
            lr: 0.1,
            weight_decay: wd,
            dropout: 0.0,
            clip: 0.0,
        }
    }

    #[test]
    fn first_adamw_step_has_size_lr() {
        // bias correction makes the first step ±lr regardless of gradient scale
        let mut opt = Optimizer::new(cfg(OptimizerKind::Adamw, 0.0), 2);
        let mut p = vec![1.0, -1.0];
        opt.update(&mut p, &[3.0, -1e-3]);
        assert!((p[0] - 0.9).abs() < 1e-6);
        assert!((p[1] + 0.9).abs() < 1e-4);
    }

    #[test]
    fn weight_decay_is_decoupled() {
        let mut opt = Optimizer::new(cfg(OptimizerKind::Adamw, 0.5), 1);
        let mut p = vec![2.0];
        opt.update(&mut p, &[0.0]);
        assert!((p[0] - 2.0 * (1.0 - 0.05)).abs() < 1e-12);
    }

    #[test]
    fn frozen_entries_do_not_move() {
        for kind in [OptimizerKind::Adamw, OptimizerKind::Rmsprop] {
            let mut opt = Optimizer::new(cfg(kind, 0.2), 3).with_trainable(vec![true, false, true]);
            let mut p = vec![1.0, 1.0, 1.0];
            for _ in 0..5 {
                opt.update(&mut p, &[1.0, 1.0, -1.0]);
            }
            assert_eq!(p[1], 1.0);
            assert!(p[0] < 1.0 && p[2] > 0.9);
        }
    }

    #[test]
    fn minimizes_a_quadratic() {
        for kind in [OptimizerKind::Adamw, OptimizerKind::Rmsprop] {
            let mut c = cfg(kind, 0.0);
            c.lr = 0.05;
            let mut opt = Optimizer::new(c, 2);
            let mut p = vec![3.0, -2.0];
            for _ in 0..2000 {
                let g = vec![2.0 * (p[0] - 1.0), 2.0 * (p[1] + 0.5)];
                opt.update(&mut p, &g);
            }
            assert!((p[0] - 1.0).abs() < 0.05 && (p[1] + 0.5).abs() < 0.05, "{kind:?} {p:?}");
        }
    }

    #[test]
    fn clipping_bounds_the_effective_gradient() {
        let mut c = cfg(OptimizerKind::Rmsprop, 0.0);
        c.clip = 1.0;
        let mut a = Optimizer::new(c.clone(), 1);
        let mut b = Optimizer::new(c, 1);
        let (mut pa, mut pb) = (vec![0.0], vec![0.0]);
        assert_eq!(a.update(&mut pa, &[100.0]), 100.0);
        b.update(&mut pb, &[1.0]);
        assert_eq!(pa, pb);
    }
}
