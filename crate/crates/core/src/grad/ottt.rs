//! OTTT on a LIF trace with running presynaptic accumulations.
//!
//! Written in the spike/potential Jacobian form:
//! `δu^l = δs^l ⊙ sg(u^l)`, `δs^{l−1} += W^{l−1}ᵀ δu^l`.

use crate::error::{Error, Result};
use crate::math::{matvec_transposed, outer, Vector};
use crate::surrogate::{loss_e, sg, LossSpec, SurrogateParams};
use crate::topology::{Connection, ForwardTrace, NetworkSpec, OtttStep};

use super::{Engine, GradientSet};

/// OTTT_O gradient of `L_E[t]` from one step. Returns the gradients and the
/// loss value.
pub fn grad_ottt_o_step(
    spec: &NetworkSpec,
    step: &OtttStep,
    steps: usize,
    label: usize,
    loss: &LossSpec,
) -> Result<(GradientSet, f64)> {
    let n = spec.depth();
    if step.layers.len() != n || step.acc.len() != n + 1 {
        return Err(Error::dims("OTTT step layers", n, step.layers.len()));
    }
    let sgp = SurrogateParams::new(spec.beta, spec.params.v_th)?;
    let mut out = GradientSet::zeros(spec, Engine::OtttO, Some(step.t));
    if n == 0 {
        return Ok((out, 0.0));
    }

    let (value, top) = loss_e(&step.layers[n - 1].s, label, loss, steps)?;
    let mut delta_s: Vec<Option<Vector>> = vec![None; n + 1];
    delta_s[n] = Some(top);
    let mut delta_u: Vec<Vector> = vec![Vector::zeros(0); n + 1];

    for l in (1..=n).rev() {
        let ds = delta_s[l].take().unwrap_or_else(|| Vector::zeros(spec.layer_sizes[l]));
        let du = ds.hadamard(&sg(&step.layers[l - 1].u, &sgp))?;
        if l > 1 {
            let below = matvec_transposed(&spec.weights[l - 1], &du)?;
            accumulate(&mut delta_s[l - 1], below)?;
        }
        if let Connection::Feedforward { p, q, weight } = &spec.connection {
            if q + 1 == l && *p >= 1 {
                accumulate(&mut delta_s[*p], matvec_transposed(weight, &du)?)?;
            }
        }
        delta_u[l] = du;
    }

    for l in 0..n {
        out.dw[l] = outer(&delta_u[l + 1], &step.acc[l]);
        out.db[l] = delta_u[l + 1].clone();
    }
    match &spec.connection {
        Connection::None => {}
        Connection::Feedforward { p, q, .. } => out.dwf = Some(outer(&delta_u[q + 1], &step.acc[*p])),
        Connection::Feedback { p, q, .. } => out.dwb = Some(outer(&delta_u[q + 1], &step.acc_prev[*p])),
    }
    Ok((out, value))
}

fn accumulate(slot: &mut Option<Vector>, v: Vector) -> Result<()> {
    match slot {
        Some(acc) => acc.add_assign(&v),
        None => {
            *slot = Some(v);
            Ok(())
        }
    }
}

pub fn grad_ottt_o(
    trace: &ForwardTrace,
    t: usize,
    label: usize,
    spec: &NetworkSpec,
    loss: &LossSpec,
) -> Result<GradientSet> {
    let step = trace.ottt_step(t)?;
    Ok(grad_ottt_o_step(spec, &step, trace.len(), label, loss)?.0)
}

/// OTTT_A: the per-step OTTT_O gradients summed in ascending `t`.
pub fn grad_ottt_a(trace: &ForwardTrace, label: usize, spec: &NetworkSpec, loss: &LossSpec) -> Result<GradientSet> {
    let steps = trace.ottt_steps()?;
    let mut total = GradientSet::zeros(spec, Engine::OtttA, None);
    for step in &steps {
        total.add_assign(&grad_ottt_o_step(spec, step, steps.len(), label, loss)?.0)?;
    }
    Ok(total)
}
