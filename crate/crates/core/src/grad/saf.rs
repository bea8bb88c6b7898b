//! SAF-E and SAF-F, both driven by the back signal `g_Û`.

use crate::error::{Error, Result};
use crate::math::{geometric_weight_sum, matvec, matvec_transposed, Vector};
use crate::surrogate::{loss_e, loss_f, sg, SurrogateParams};
use crate::topology::{Connection, ForwardTrace, NetworkSpec, SafStepRecord};

use super::{Engine, GradientSet};

/// `g_Û^l[t]` for every neuron layer `l = 1..=N`, stored at `l − 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct BackSignal {
    pub g: Vec<Vector>,
}

impl BackSignal {
    pub fn layer(&self, l: usize) -> &Vector {
        &self.g[l - 1]
    }
}

/// Per-neuron derivative used in place of `∂s/∂u` by SAF-F.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DerivativeMode {
    /// Surrogate derivative at the effective potential.
    #[default]
    Surrogate,
    /// Clamp derivative of the rate-domain pre-activation, shared with the
    /// spike-representation engine (see [`clamp_factors`]).
    ClampShared,
}

/// Top-down propagation of a loss gradient through per-layer factors:
/// `g^N = e ⊙ f^N`, `g^i = (W^iᵀ g^{i+1} + W_fᵀ g^{q+1}·[i = p]) ⊙ f^i`.
pub(crate) fn propagate(spec: &NetworkSpec, top: &Vector, factors: &[Vector]) -> Result<BackSignal> {
    let n = spec.depth();
    if factors.len() != n {
        return Err(Error::dims("derivative factors", n, factors.len()));
    }
    if n == 0 {
        return Ok(BackSignal { g: Vec::new() });
    }
    let mut g = vec![Vector::zeros(0); n];
    g[n - 1] = top.hadamard(&factors[n - 1])?;
    for i in (1..n).rev() {
        let mut back = matvec_transposed(&spec.weights[i], &g[i])?;
        if let Connection::Feedforward { p, q, weight } = &spec.connection {
            if *p == i {
                back.add_assign(&matvec_transposed(weight, &g[*q])?)?;
            }
        }
        g[i - 1] = back.hadamard(&factors[i - 1])?;
    }
    Ok(BackSignal { g })
}

fn surrogate_factors(spec: &NetworkSpec, rec: &SafStepRecord) -> Result<Vec<Vector>> {
    let p = SurrogateParams::new(spec.beta, spec.params.v_th)?;
    (1..=spec.depth())
        .map(|l| {
            if l > rec.layers.len() {
                return Err(Error::dims("trace layers", spec.depth(), rec.layers.len()));
            }
            Ok(sg(&rec.potential(l, &spec.params), &p))
        })
        .collect()
}

fn presynaptic<'a>(rec: &'a SafStepRecord, spec: &NetworkSpec) -> (Vec<&'a Vector>, Option<&'a Vector>) {
    let pre = (0..spec.depth()).map(|l| rec.acc(l)).collect();
    let conn = match &spec.connection {
        Connection::None => None,
        Connection::Feedforward { p, .. } => Some(rec.acc(*p)),
        Connection::Feedback { p, .. } => Some(rec.acc_prev(*p)),
    };
    (pre, conn)
}

/// Back signal at step `t` for a given top-layer loss gradient, with
/// surrogate factors at the effective potential `u^l[t]`.
pub fn back_signal(trace: &ForwardTrace, t: usize, loss_grad_top: &Vector, spec: &NetworkSpec) -> Result<BackSignal> {
    let p = SurrogateParams::new(spec.beta, spec.params.v_th)?;
    let factors = (1..=spec.depth())
        .map(|l| Ok(sg(&trace.potential(t, l)?, &p)))
        .collect::<Result<Vec<_>>>()?;
    propagate(spec, loss_grad_top, &factors)
}

/// SAF-E gradient of `L_E[t]` from one step record. `steps` is the
/// sequence length `T`. Returns the gradients and the loss value.
pub fn grad_saf_e_step(
    spec: &NetworkSpec,
    rec: &SafStepRecord,
    t: usize,
    steps: usize,
    label: usize,
    loss: &crate::surrogate::LossSpec,
) -> Result<(GradientSet, f64)> {
    let n = spec.depth();
    let s_top = rec.spikes(n, spec.params.lambda)?;
    let (value, e) = loss_e(&s_top, label, loss, steps)?;
    let signal = propagate(spec, &e, &surrogate_factors(spec, rec)?)?;
    let (pre, conn) = presynaptic(rec, spec);
    Ok((
        GradientSet::from_signals(spec, Engine::SafE, Some(t), &signal.g, &pre, conn),
        value,
    ))
}

pub fn grad_saf_e(
    trace: &ForwardTrace,
    t: usize,
    label: usize,
    spec: &NetworkSpec,
    loss: &crate::surrogate::LossSpec,
) -> Result<GradientSet> {
    let rec = trace.saf_step(t)?;
    Ok(grad_saf_e_step(spec, rec, t, trace.len(), label, loss)?.0)
}

/// Clamp-derivative factors `d^l = σ′((W^{l−1}a^{l−1} + b^l + conn)/V_th)`
/// on the weighted firing rates `a = â[T]/Λ`, with `σ′(x) = 1` for
/// `0 < x < 1` and 0 otherwise. A feedback connection reads `â^p[T−1]/Λ`.
pub fn clamp_factors(spec: &NetworkSpec, rec: &SafStepRecord, steps: usize) -> Result<Vec<Vector>> {
    let big_lambda = geometric_weight_sum(spec.params.lambda, steps);
    let inv = 1.0 / big_lambda;
    let v_th = spec.params.v_th;
    (1..=spec.depth())
        .map(|l| {
            let mut pre = matvec(&spec.weights[l - 1], &rec.acc(l - 1).scale(inv))?;
            pre.add_assign(spec.bias(l))?;
            match &spec.connection {
                Connection::Feedforward { p, q, weight } if q + 1 == l => {
                    pre.add_assign(&matvec(weight, &rec.acc(*p).scale(inv))?)?;
                }
                Connection::Feedback { p, q, weight } if q + 1 == l => {
                    pre.add_assign(&matvec(weight, &rec.acc_prev(*p).scale(inv))?)?;
                }
                _ => {}
            }
            Ok(pre.map(|x| {
                let z = x / v_th;
                if z > 0.0 && z < 1.0 {
                    1.0
                } else {
                    0.0
                }
            }))
        })
        .collect()
}

/// SAF-F gradient of `L_F` from the final step record.
pub fn grad_saf_f_step(
    spec: &NetworkSpec,
    rec: &SafStepRecord,
    steps: usize,
    label: usize,
    loss: &crate::surrogate::LossSpec,
    mode: DerivativeMode,
) -> Result<(GradientSet, f64)> {
    let n = spec.depth();
    let (value, e) = loss_f(rec.acc(n), label, loss, spec.params.lambda, steps)?;
    let factors = match mode {
        DerivativeMode::Surrogate => surrogate_factors(spec, rec)?,
        DerivativeMode::ClampShared => clamp_factors(spec, rec, steps)?,
    };
    let signal = propagate(spec, &e, &factors)?;
    let (pre, conn) = presynaptic(rec, spec);
    Ok((
        GradientSet::from_signals(spec, Engine::SafF, Some(steps), &signal.g, &pre, conn),
        value,
    ))
}

pub fn grad_saf_f(
    trace: &ForwardTrace,
    label: usize,
    spec: &NetworkSpec,
    loss: &crate::surrogate::LossSpec,
    mode: DerivativeMode,
) -> Result<GradientSet> {
    let steps = trace.len();
    let rec = trace.saf_step(steps)?;
    Ok(grad_saf_f_step(spec, rec, steps, label, loss, mode)?.0)
}
