use crate::error::{Error, Result};
use crate::math::{matvec, Vector};
use crate::neuron::{lif_step, reconstruct_spikes, saf_step, LifState, SafState};

use super::trace::{LifLayerStep, LifStepRecord, OtttStep, SafLayerStep, SafStepRecord};
use super::NetworkSpec;

/// Streams a network forward in SAF mode. Holds the input accumulation and
/// one [`SafState`] per layer; nothing grows with the number of steps.
///
/// Parameters are read from the spec passed to each [`step`](Self::step),
/// so they may change between steps.
#[derive(Debug, Clone)]
pub struct SafRunner {
    input_acc: Vector,
    input_acc_prev: Vector,
    layers: Vec<SafState>,
}

impl SafRunner {
    pub fn new(spec: &NetworkSpec) -> Self {
        SafRunner {
            input_acc: Vector::zeros(spec.input_size()),
            input_acc_prev: Vector::zeros(spec.input_size()),
            layers: spec.layer_sizes[1..].iter().map(|&n| SafState::new(n)).collect(),
        }
    }

    pub fn t(&self) -> usize {
        self.layers.first().map_or(0, |s| s.t)
    }

    pub fn layers(&self) -> &[SafState] {
        &self.layers
    }

    pub fn input_accumulation(&self) -> &Vector {
        &self.input_acc
    }

    /// `â^l[t] − λ·â^l[t−1]` for layer `l` at its current step.
    fn increment_source(&self, l: usize, lambda: f64) -> Result<Vector> {
        if l == 0 {
            self.input_acc
                .zip_map(&self.input_acc_prev, "input increment", |a, p| a - lambda * p)
        } else {
            let st = &self.layers[l - 1];
            reconstruct_spikes(&st.a_hat, &st.a_hat_prev, lambda)
        }
    }

    pub fn step(&mut self, spec: &NetworkSpec, x: &Vector) -> Result<()> {
        if x.len() != spec.input_size() {
            return Err(Error::dims("SafRunner::step input", spec.input_size(), x.len()));
        }
        let lambda = spec.params.lambda;
        let next = self
            .input_acc
            .zip_map(x, "input accumulation", |a, xi| lambda * a + xi)?;
        self.input_acc_prev = std::mem::replace(&mut self.input_acc, next);

        let conn = spec.connection.endpoints();
        for l in 1..=spec.depth() {
            let mut increment = matvec(&spec.weights[l - 1], &self.increment_source(l - 1, lambda)?)?;
            if let Some((p, target, w)) = conn {
                // For feedback (p ≥ l) layer p has not stepped yet, so its
                // increment is the spike at t−1.
                if target == l {
                    increment.add_assign(&matvec(w, &self.increment_source(p, lambda)?)?)?;
                }
            }
            saf_step(&mut self.layers[l - 1], &increment, spec.bias(l), &spec.params)?;
        }
        Ok(())
    }

    pub fn record(&self) -> SafStepRecord {
        SafStepRecord {
            input_acc: self.input_acc.clone(),
            input_acc_prev: self.input_acc_prev.clone(),
            layers: self
                .layers
                .iter()
                .map(|s| SafLayerStep {
                    a_hat: s.a_hat.clone(),
                    a_hat_prev: s.a_hat_prev.clone(),
                    u_hat: s.u_hat.clone(),
                })
                .collect(),
        }
    }

    /// Vectors held per neuron layer.
    pub fn retained_per_layer(&self) -> Vec<usize> {
        self.layers
            .iter()
            .map(|s| [&s.a_hat, &s.a_hat_prev, &s.u_hat, &s.u0].len())
            .collect()
    }
}

/// Streams a network forward in LIF mode. With accumulation tracking on it
/// also propagates `â^l[t]` for every layer, which is what OTTT needs.
#[derive(Debug, Clone)]
pub struct LifRunner {
    layers: Vec<LifState>,
    input: Vector,
    acc: Option<Accumulation>,
    t: usize,
}

#[derive(Debug, Clone)]
struct Accumulation {
    acc: Vec<Vector>,
    acc_prev: Vec<Vector>,
}

impl LifRunner {
    pub fn new(spec: &NetworkSpec, track_accumulation: bool) -> Self {
        let acc = track_accumulation.then(|| Accumulation {
            acc: spec.layer_sizes.iter().map(|&n| Vector::zeros(n)).collect(),
            acc_prev: spec.layer_sizes.iter().map(|&n| Vector::zeros(n)).collect(),
        });
        LifRunner {
            layers: spec.layer_sizes[1..].iter().map(|&n| LifState::new(n)).collect(),
            input: Vector::zeros(spec.input_size()),
            acc,
            t: 0,
        }
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn layers(&self) -> &[LifState] {
        &self.layers
    }

    fn spikes_of(&self, l: usize) -> &Vector {
        if l == 0 {
            &self.input
        } else {
            &self.layers[l - 1].s_prev
        }
    }

    pub fn step(&mut self, spec: &NetworkSpec, x: &Vector) -> Result<()> {
        if x.len() != spec.input_size() {
            return Err(Error::dims("LifRunner::step input", spec.input_size(), x.len()));
        }
        self.input = x.clone();
        let conn = spec.connection.endpoints();
        for l in 1..=spec.depth() {
            let mut drive = matvec(&spec.weights[l - 1], self.spikes_of(l - 1))?;
            drive.add_assign(spec.bias(l))?;
            if let Some((p, target, w)) = conn {
                // Layer p has not stepped yet for feedback, giving s^p[t−1].
                if target == l {
                    drive.add_assign(&matvec(w, self.spikes_of(p))?)?;
                }
            }
            lif_step(&mut self.layers[l - 1], &drive, &spec.params)?;
        }
        if let Some(mut acc) = self.acc.take() {
            let lambda = spec.params.lambda;
            for l in 0..=spec.depth() {
                let next = acc.acc[l].zip_map(self.spikes_of(l), "accumulation", |a, s| lambda * a + s)?;
                acc.acc_prev[l] = std::mem::replace(&mut acc.acc[l], next);
            }
            self.acc = Some(acc);
        }
        self.t += 1;
        Ok(())
    }

    pub fn record(&self) -> LifStepRecord {
        LifStepRecord {
            input: self.input.clone(),
            layers: self
                .layers
                .iter()
                .map(|s| LifLayerStep {
                    u: s.u.clone(),
                    s: s.s_prev.clone(),
                })
                .collect(),
        }
    }

    /// Snapshot for the OTTT gradient at the current step; `None` unless
    /// accumulation tracking is on.
    pub fn ottt_step(&self) -> Option<OtttStep> {
        let acc = self.acc.as_ref()?;
        Some(OtttStep {
            t: self.t,
            layers: self.record().layers,
            acc: acc.acc.clone(),
            acc_prev: acc.acc_prev.clone(),
        })
    }

    pub fn retained_per_layer(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let own = [&s.u, &s.s_prev].len();
                let tracked = self.acc.as_ref().map_or(0, |a| [&a.acc[i + 1], &a.acc_prev[i + 1]].len());
                own + tracked
            })
            .collect()
    }
}
