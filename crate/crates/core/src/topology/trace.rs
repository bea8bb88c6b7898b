use crate::error::{Error, Result};
use crate::math::Vector;
use crate::neuron::{reconstruct_spikes, NeuronParams};

use super::runner::{LifRunner, SafRunner};
use super::NetworkSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceMode {
    Lif,
    Saf,
}

impl TraceMode {
    pub fn name(self) -> &'static str {
        match self {
            TraceMode::Lif => "LIF",
            TraceMode::Saf => "SAF",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SafLayerStep {
    pub a_hat: Vector,
    pub a_hat_prev: Vector,
    pub u_hat: Vector,
}

/// SAF quantities at one time step: accumulations only.
#[derive(Debug, Clone, PartialEq)]
pub struct SafStepRecord {
    pub input_acc: Vector,
    pub input_acc_prev: Vector,
    pub layers: Vec<SafLayerStep>,
}

impl SafStepRecord {
    /// `â^l[t]` for `l = 0..=N`.
    pub fn acc(&self, l: usize) -> &Vector {
        if l == 0 {
            &self.input_acc
        } else {
            &self.layers[l - 1].a_hat
        }
    }

    /// `â^l[t−1]` for `l = 0..=N`.
    pub fn acc_prev(&self, l: usize) -> &Vector {
        if l == 0 {
            &self.input_acc_prev
        } else {
            &self.layers[l - 1].a_hat_prev
        }
    }

    /// Effective potential `u^l[t] = Û^l[t] − V_th·λ·â^l[t−1]` for `l ∈ 1..=N`.
    pub fn potential(&self, l: usize, params: &NeuronParams) -> Vector {
        let layer = &self.layers[l - 1];
        let scale = params.v_th * params.lambda;
        Vector::from_vec(
            layer
                .u_hat
                .iter()
                .zip(layer.a_hat_prev.iter())
                .map(|(&u, &a)| u - scale * a)
                .collect(),
        )
    }

    pub fn spikes(&self, l: usize, lambda: f64) -> Result<Vector> {
        let layer = &self.layers[l - 1];
        reconstruct_spikes(&layer.a_hat, &layer.a_hat_prev, lambda)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LifLayerStep {
    pub u: Vector,
    pub s: Vector,
}

/// LIF quantities at one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct LifStepRecord {
    pub input: Vector,
    pub layers: Vec<LifLayerStep>,
}

/// LIF state at step `t` plus the OTTT running accumulations
/// `â^l[t]`, `â^l[t−1]` for `l = 0..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct OtttStep {
    pub t: usize,
    pub layers: Vec<LifLayerStep>,
    pub acc: Vec<Vector>,
    pub acc_prev: Vec<Vector>,
}

#[derive(Debug, Clone, PartialEq)]
enum Steps {
    Lif(Vec<LifStepRecord>),
    Saf(Vec<SafStepRecord>),
}

/// Per-step record of a forward pass. Step `t` is stored at index `t − 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    params: NeuronParams,
    steps: Steps,
}

impl ForwardTrace {
    pub fn mode(&self) -> TraceMode {
        match self.steps {
            Steps::Lif(_) => TraceMode::Lif,
            Steps::Saf(_) => TraceMode::Saf,
        }
    }

    pub fn params(&self) -> &NeuronParams {
        &self.params
    }

    /// Number of recorded steps `T`.
    pub fn len(&self) -> usize {
        match &self.steps {
            Steps::Lif(s) => s.len(),
            Steps::Saf(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn depth(&self) -> usize {
        match &self.steps {
            Steps::Lif(s) => s.first().map_or(0, |r| r.layers.len()),
            Steps::Saf(s) => s.first().map_or(0, |r| r.layers.len()),
        }
    }

    fn check_t(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.len() {
            Err(Error::TimeOutOfRange { t, steps: self.len() })
        } else {
            Ok(())
        }
    }

    fn wrong_mode(&self, needed: TraceMode) -> Error {
        Error::WrongTraceMode {
            needed: needed.name(),
            found: self.mode().name(),
        }
    }

    pub fn saf_step(&self, t: usize) -> Result<&SafStepRecord> {
        self.check_t(t)?;
        match &self.steps {
            Steps::Saf(s) => Ok(&s[t - 1]),
            Steps::Lif(_) => Err(self.wrong_mode(TraceMode::Saf)),
        }
    }

    pub fn lif_step(&self, t: usize) -> Result<&LifStepRecord> {
        self.check_t(t)?;
        match &self.steps {
            Steps::Lif(s) => Ok(&s[t - 1]),
            Steps::Saf(_) => Err(self.wrong_mode(TraceMode::Lif)),
        }
    }

    /// OTTT views for every step, with accumulations maintained by the
    /// same recurrence OTTT runs online: `â[t] = λ·â[t−1] + s[t]`.
    pub fn ottt_steps(&self) -> Result<Vec<OtttStep>> {
        let records = match &self.steps {
            Steps::Lif(s) => s,
            Steps::Saf(_) => return Err(self.wrong_mode(TraceMode::Lif)),
        };
        let lambda = self.params.lambda;
        let mut out = Vec::with_capacity(records.len());
        let Some(first) = records.first() else {
            return Ok(out);
        };
        let mut acc: Vec<Vector> = std::iter::once(first.input.len())
            .chain(first.layers.iter().map(|l| l.s.len()))
            .map(Vector::zeros)
            .collect();
        for (i, rec) in records.iter().enumerate() {
            let spikes = std::iter::once(&rec.input).chain(rec.layers.iter().map(|l| &l.s));
            let next: Vec<Vector> = acc
                .iter()
                .zip(spikes)
                .map(|(a, s)| a.zip_map(s, "accumulation", |a, s| lambda * a + s))
                .collect::<Result<_>>()?;
            let prev = std::mem::replace(&mut acc, next);
            out.push(OtttStep {
                t: i + 1,
                layers: rec.layers.clone(),
                acc: acc.clone(),
                acc_prev: prev,
            });
        }
        Ok(out)
    }

    pub fn ottt_step(&self, t: usize) -> Result<OtttStep> {
        self.check_t(t)?;
        Ok(self.ottt_steps()?.swap_remove(t - 1))
    }

    /// Spike train of neuron layer `l` at step `t`, reconstructed from the
    /// accumulations in SAF mode.
    pub fn spikes(&self, t: usize, l: usize) -> Result<Vector> {
        self.check_t(t)?;
        match &self.steps {
            Steps::Lif(s) => Ok(s[t - 1].layers[l - 1].s.clone()),
            Steps::Saf(s) => s[t - 1].spikes(l, self.params.lambda),
        }
    }

    /// Membrane potential (effective potential in SAF mode) of layer `l`.
    pub fn potential(&self, t: usize, l: usize) -> Result<Vector> {
        self.check_t(t)?;
        match &self.steps {
            Steps::Lif(s) => Ok(s[t - 1].layers[l - 1].u.clone()),
            Steps::Saf(s) => Ok(s[t - 1].potential(l, &self.params)),
        }
    }

    /// `â^l[t]` for `l = 0..=N` in either mode.
    pub fn accumulations(&self, t: usize) -> Result<Vec<Vector>> {
        self.check_t(t)?;
        match &self.steps {
            Steps::Lif(_) => Ok(self.ottt_step(t)?.acc),
            Steps::Saf(s) => {
                let rec = &s[t - 1];
                Ok((0..=rec.layers.len()).map(|l| rec.acc(l).clone()).collect())
            }
        }
    }

    /// Per-layer firing rate `Σ_t Σ_i s^l_i[t] / (T·width_l)` for
    /// `l = 1..=N`, spikes reconstructed from accumulations in SAF mode.
    pub fn firing_rates(&self) -> Result<Vec<f64>> {
        let steps = self.len();
        (1..=self.depth())
            .map(|l| {
                let mut total = 0.0;
                let mut width = 0;
                for t in 1..=steps {
                    let s = self.spikes(t, l)?;
                    width = s.len();
                    total += s.sum();
                }
                Ok(if width == 0 || steps == 0 { 0.0 } else { total / (steps * width) as f64 })
            })
            .collect()
    }

    /// Smallest `|u − V_th|` over all neurons at step `t`.
    pub fn min_margin(&self, t: usize) -> Result<f64> {
        let v = self.params.v_th;
        let mut m = f64::INFINITY;
        for l in 1..=self.depth() {
            for &u in self.potential(t, l)?.iter() {
                m = m.min((u - v).abs());
            }
        }
        Ok(m)
    }

    /// Vectors stored per neuron layer across the whole trace.
    pub fn retained_per_layer(&self) -> Vec<usize> {
        let depth = self.depth();
        (0..depth)
            .map(|i| match &self.steps {
                Steps::Lif(s) => s
                    .iter()
                    .map(|r| [&r.layers[i].u, &r.layers[i].s].len())
                    .sum(),
                Steps::Saf(s) => s
                    .iter()
                    .map(|r| [&r.layers[i].a_hat, &r.layers[i].a_hat_prev, &r.layers[i].u_hat].len())
                    .sum(),
            })
            .collect()
    }
}

/// Runs the network in LIF mode, one input vector per step.
pub fn forward_lif(spec: &NetworkSpec, inputs: &[Vector]) -> Result<ForwardTrace> {
    spec.validate()?;
    if inputs.is_empty() {
        return Err(Error::EmptyInput("forward pass needs at least one time step"));
    }
    let mut runner = LifRunner::new(spec, false);
    let mut records = Vec::with_capacity(inputs.len());
    for x in inputs {
        runner.step(spec, x)?;
        records.push(runner.record());
    }
    Ok(ForwardTrace {
        params: spec.params,
        steps: Steps::Lif(records),
    })
}

/// Runs the network in SAF mode, one input vector per step.
pub fn forward_saf(spec: &NetworkSpec, inputs: &[Vector]) -> Result<ForwardTrace> {
    spec.validate()?;
    if inputs.is_empty() {
        return Err(Error::EmptyInput("forward pass needs at least one time step"));
    }
    let mut runner = SafRunner::new(spec);
    let mut records = Vec::with_capacity(inputs.len());
    for x in inputs {
        runner.step(spec, x)?;
        records.push(runner.record());
    }
    Ok(ForwardTrace {
        params: spec.params,
        steps: Steps::Saf(records),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateMode {
    /// SAF runner without a trace.
    SafStreaming,
    /// LIF runner for inference (u, s_prev only).
    LifStreaming,
    /// LIF runner that also propagates accumulations, as OTTT does online.
    OtttStreaming,
    /// Full LIF trace kept for an offline OTTT backward.
    LifTraced,
    /// Full SAF trace kept for an offline SAF backward.
    SafTraced,
}

impl StateMode {
    pub fn name(self) -> &'static str {
        match self {
            StateMode::SafStreaming => "saf-streaming",
            StateMode::LifStreaming => "lif-streaming",
            StateMode::OtttStreaming => "ottt-streaming",
            StateMode::LifTraced => "lif-traced",
            StateMode::SafTraced => "saf-traced",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateBufferReport {
    pub mode: StateMode,
    pub steps: usize,
    pub per_layer: Vec<usize>,
}

impl StateBufferReport {
    pub fn total(&self) -> usize {
        self.per_layer.iter().sum()
    }
}

/// Runs an instrumented zero-input forward pass of `steps` steps and counts
/// the state vectors each neuron layer keeps alive at the end.
pub fn count_state_buffers(spec: &NetworkSpec, mode: StateMode, steps: usize) -> Result<StateBufferReport> {
    let inputs = vec![Vector::zeros(spec.input_size()); steps.max(1)];
    let per_layer = match mode {
        StateMode::SafStreaming => {
            let mut r = SafRunner::new(spec);
            for x in &inputs {
                r.step(spec, x)?;
            }
            r.retained_per_layer()
        }
        StateMode::LifStreaming | StateMode::OtttStreaming => {
            let mut r = LifRunner::new(spec, mode == StateMode::OtttStreaming);
            for x in &inputs {
                r.step(spec, x)?;
            }
            r.retained_per_layer()
        }
        StateMode::LifTraced => forward_lif(spec, &inputs)?.retained_per_layer(),
        StateMode::SafTraced => forward_saf(spec, &inputs)?.retained_per_layer(),
    };
    Ok(StateBufferReport { mode, steps, per_layer })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{Matrix, Rng};
    use crate::topology::{ConnectionKind, ConnectionPlan, InitScheme};

    fn chain() -> NetworkSpec {
        let params = NeuronParams::new(0.5, 1.0).unwrap();
        let mut spec = NetworkSpec::zeroed(&[1, 1, 1], params, 4.0, ConnectionPlan::NONE).unwrap();
        spec.weights[0] = Matrix::from_row_major(1, 1, vec![1.0]).unwrap();
        spec.weights[1] = Matrix::from_row_major(1, 1, vec![1.0]).unwrap();
        spec
    }

    fn constant(x: f64, steps: usize) -> Vec<Vector> {
        vec![Vector::from_vec(vec![x]); steps]
    }

    #[test]
    fn zero_input_is_silent() {
        let mut rng = Rng::new(1);
        let params = NeuronParams::new(0.5, 1.0).unwrap();
        let mut spec =
            NetworkSpec::random(&[3, 4, 2], params, 4.0, ConnectionPlan::NONE, &InitScheme::default(), &mut rng).unwrap();
        for b in &mut spec.biases {
            *b = Vector::zeros(b.len());
        }
        let inputs = vec![Vector::zeros(3); 5];
        let lif = forward_lif(&spec, &inputs).unwrap();
        let saf = forward_saf(&spec, &inputs).unwrap();
        for t in 1..=5 {
            for l in 1..=2 {
                assert_eq!(lif.spikes(t, l).unwrap().sum(), 0.0);
                assert_eq!(saf.accumulations(t).unwrap()[l].sum(), 0.0);
            }
        }
    }

    #[test]
    fn chain_hand_trace() {
        let spec = chain();
        let lif = forward_lif(&spec, &constant(0.6, 4)).unwrap();
        let spikes: Vec<f64> = (1..=4).map(|t| lif.spikes(t, 1).unwrap()[0]).collect();
        assert_eq!(spikes, vec![0.0, 0.0, 1.0, 0.0]);
        let saf = forward_saf(&spec, &constant(0.6, 4)).unwrap();
        let acc: Vec<f64> = (1..=4).map(|t| saf.saf_step(t).unwrap().acc(1)[0]).collect();
        assert_eq!(acc, vec![0.0, 0.0, 1.0, 0.5]);
        for t in 1..=4 {
            assert_eq!(saf.spikes(t, 1).unwrap(), lif.spikes(t, 1).unwrap());
        }
    }

    #[test]
    fn zero_feedback_matches_unconnected() {
        let mut rng = Rng::new(9);
        let params = NeuronParams::new(0.5, 1.0).unwrap();
        let spec = NetworkSpec::random(&[3, 5, 4, 2], params, 4.0, ConnectionPlan::NONE, &InitScheme::default(), &mut rng)
            .unwrap();
        let mut with_fb = spec.clone();
        with_fb.connection = crate::topology::Connection::Feedback {
            p: 3,
            q: 0,
            weight: Matrix::zeros(5, 2),
        };
        let inputs: Vec<Vector> = (0..8).map(|_| rng.uniform_vector(3, 0.0, 2.0)).collect();
        assert_eq!(forward_lif(&spec, &inputs).unwrap(), forward_lif(&with_fb, &inputs).unwrap());
        assert_eq!(forward_saf(&spec, &inputs).unwrap(), forward_saf(&with_fb, &inputs).unwrap());
    }

    #[test]
    fn state_buffer_counts() {
        let spec = chain();
        let saf8 = count_state_buffers(&spec, StateMode::SafStreaming, 8).unwrap();
        let saf64 = count_state_buffers(&spec, StateMode::SafStreaming, 64).unwrap();
        assert_eq!(saf8.per_layer, vec![4, 4]);
        assert_eq!(saf8.per_layer, saf64.per_layer);
        let lif = count_state_buffers(&spec, StateMode::LifStreaming, 8).unwrap();
        assert_eq!(lif.per_layer, vec![2, 2]);
        let traced = count_state_buffers(&spec, StateMode::LifTraced, 8).unwrap();
        assert_eq!(traced.per_layer, vec![16, 16]);
        let saf_traced = count_state_buffers(&spec, StateMode::SafTraced, 8).unwrap();
        assert_eq!(saf_traced.per_layer, vec![24, 24]);

        let params = NeuronParams::default();
        let empty = NetworkSpec::zeroed(&[3], params, 4.0, ConnectionPlan::NONE).unwrap();
        assert!(count_state_buffers(&empty, StateMode::SafStreaming, 8).unwrap().per_layer.is_empty());
    }

    #[test]
    fn trace_errors() {
        let spec = chain();
        let saf = forward_saf(&spec, &constant(0.6, 2)).unwrap();
        assert!(matches!(saf.saf_step(3), Err(Error::TimeOutOfRange { .. })));
        assert!(matches!(saf.lif_step(1), Err(Error::WrongTraceMode { .. })));
        assert!(forward_lif(&spec, &[]).is_err());
        assert!(forward_lif(&spec, &[Vector::zeros(2)]).is_err());
        let bad_conn = ConnectionPlan { kind: ConnectionKind::Feedforward, p: 1, q: 3 };
        assert!(NetworkSpec::zeroed(&[1, 1, 1], NeuronParams::default(), 4.0, bad_conn).is_err());
    }
}
