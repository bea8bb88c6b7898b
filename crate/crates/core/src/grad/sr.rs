//! Spike-representation gradient in the rate domain.
//!
//! Rates are `a^l = â^l[T]/Λ`. With `δ^N = ∂L/∂a^N` and clamp factors `d`
//! (see [`clamp_factors`]), `δ^i = W^iᵀ(δ^{i+1} ⊙ d^{i+1})` and
//! `∂L/∂W^l = (δ^{l+1} ⊙ d^{l+1}) a^lᵀ / V_th`.

use crate::error::Result;
use crate::math::{geometric_weight_sum, matvec_transposed, outer, Vector};
use crate::surrogate::{mixed_loss, LossSpec};
use crate::topology::{Connection, ForwardTrace, NetworkSpec};

use super::saf::clamp_factors;
use super::{Engine, GradientSet};

pub fn grad_spike_representation(
    trace: &ForwardTrace,
    label: usize,
    spec: &NetworkSpec,
    loss: &LossSpec,
) -> Result<GradientSet> {
    let steps = trace.len();
    let rec = trace.saf_step(steps)?;
    let n = spec.depth();
    let inv = 1.0 / geometric_weight_sum(spec.params.lambda, steps);
    let inv_v = 1.0 / spec.params.v_th;
    let rates: Vec<Vector> = (0..=n).map(|l| rec.acc(l).scale(inv)).collect();
    let d = clamp_factors(spec, rec, steps)?;

    let mut out = GradientSet::zeros(spec, Engine::SpikeRepresentation, None);
    if n == 0 {
        return Ok(out);
    }
    let (_, top) = mixed_loss(&rates[n], label, loss)?;
    // delta[l] = ∂L/∂a^l, gated[l] = δ^l ⊙ d^l
    let mut delta: Vec<Option<Vector>> = vec![None; n + 1];
    let mut gated: Vec<Vector> = vec![Vector::zeros(0); n + 1];
    delta[n] = Some(top);
    for l in (1..=n).rev() {
        let dl = delta[l].take().unwrap_or_else(|| Vector::zeros(spec.layer_sizes[l]));
        let gl = dl.hadamard(&d[l - 1])?;
        if l > 1 {
            add_into(&mut delta[l - 1], matvec_transposed(&spec.weights[l - 1], &gl)?)?;
        }
        if let Connection::Feedforward { p, q, weight } = &spec.connection {
            if q + 1 == l && *p >= 1 {
                add_into(&mut delta[*p], matvec_transposed(weight, &gl)?)?;
            }
        }
        gated[l] = gl;
    }

    for l in 0..n {
        out.dw[l] = outer(&gated[l + 1], &rates[l]).scale(inv_v);
        out.db[l] = gated[l + 1].scale(inv_v);
    }
    match &spec.connection {
        Connection::None => {}
        Connection::Feedforward { p, q, .. } => {
            out.dwf = Some(outer(&gated[q + 1], &rates[*p]).scale(inv_v));
        }
        Connection::Feedback { p, q, .. } => {
            let prev = rec.acc_prev(*p).scale(inv);
            out.dwb = Some(outer(&gated[q + 1], &prev).scale(inv_v));
        }
    }
    Ok(out)
}

fn add_into(slot: &mut Option<Vector>, v: Vector) -> Result<()> {
    match slot {
        Some(acc) => acc.add_assign(&v),
        None => {
            *slot = Some(v);
            Ok(())
        }
    }
}
