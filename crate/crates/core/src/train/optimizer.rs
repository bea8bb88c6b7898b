use std::f64::consts::PI;

use crate::data::Schedule;
use crate::error::{Error, Result};
use crate::grad::GradientSet;
use crate::topology::NetworkSpec;

/// SGD with classical momentum: `v ← μv + g`, `θ ← θ − lr·v`.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    velocity: Vec<Vec<f64>>,
    pub step: usize,
    pub base_lr: f64,
    pub momentum: f64,
    pub total_steps: usize,
    pub schedule: Schedule,
}

impl OptimizerState {
    pub fn new(spec: &NetworkSpec, base_lr: f64, momentum: f64, total_steps: usize, schedule: Schedule) -> Self {
        let mut velocity = Vec::new();
        let mut probe = spec.clone();
        probe.for_each_param_mut(|p| velocity.push(vec![0.0; p.len()]));
        OptimizerState {
            velocity,
            step: 0,
            base_lr,
            momentum,
            total_steps: total_steps.max(1),
            schedule,
        }
    }

    /// `base·½(1 + cos(π·k/total))` for cosine annealing, clamped at `total`.
    pub fn lr_at(&self, k: usize) -> f64 {
        match self.schedule {
            Schedule::Constant => self.base_lr,
            Schedule::Cosine => {
                let frac = k.min(self.total_steps) as f64 / self.total_steps as f64;
                self.base_lr * 0.5 * (1.0 + (PI * frac).cos())
            }
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr_at(self.step)
    }

    pub fn velocity(&self) -> &[Vec<f64>] {
        &self.velocity
    }

    pub fn apply(&mut self, spec: &mut NetworkSpec, grad: &GradientSet) -> Result<()> {
        let tensors = grad.tensors();
        if tensors.len() != self.velocity.len() {
            return Err(Error::dims("optimizer tensors", self.velocity.len(), tensors.len()));
        }
        for ((_, g), v) in tensors.iter().zip(&self.velocity) {
            if g.len() != v.len() {
                return Err(Error::dims("optimizer tensor", v.len(), g.len()));
            }
        }
        let lr = self.lr();
        let mu = self.momentum;
        let mut i = 0;
        let velocity = &mut self.velocity;
        spec.for_each_param_mut(|theta| {
            let g = tensors[i].1;
            let v = &mut velocity[i];
            for ((th, vel), gr) in theta.iter_mut().zip(v.iter_mut()).zip(g) {
                *vel = mu * *vel + gr;
                *th -= lr * *vel;
            }
            i += 1;
        });
        self.step += 1;
        Ok(())
    }
}
