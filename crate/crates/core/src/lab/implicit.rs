//! Reference spike-representation direction for a network with a feedback
//! connection, by implicit differentiation of the rate fixed point.
//!
//! The neuron-layer rates `z = (a^1, …, a^N)` satisfy `z = F(z)` with
//! `F^l(z) = σ((W^{l−1}a^{l−1} + b^l + [l = q+1]·W_b a^p)/V_th)`. With
//! `J = ∂F/∂z`, the loss gradient is `v = (I − J)^{−ᵀ} ∂L/∂z` and
//! `∂L/∂W^{l−1} = (v^l ⊙ d^l / V_th) a^{l−1}ᵀ`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grad::{Engine, GradientSet};
use crate::math::{geometric_weight_sum, matvec, outer, Vector};
use crate::surrogate::{mixed_loss, LossSpec};
use crate::topology::{Connection, ForwardTrace, NetworkSpec};

/// Condition numbers above this mark the solve as unreliable.
pub const MAX_CONDITION: f64 = 1e10;

#[derive(Debug, Clone)]
pub enum ImplicitOutcome {
    Solved { grads: GradientSet, condition: f64 },
    IllConditioned { condition: f64 },
}

pub fn implicit_sr_direction(
    trace: &ForwardTrace,
    label: usize,
    spec: &NetworkSpec,
    loss: &LossSpec,
) -> Result<ImplicitOutcome> {
    let steps = trace.len();
    let rec = trace.saf_step(steps)?;
    let n = spec.depth();
    let v_th = spec.params.v_th;
    let inv = 1.0 / geometric_weight_sum(spec.params.lambda, steps);
    let rates: Vec<Vector> = (0..=n).map(|l| rec.acc(l).scale(inv)).collect();

    let feedback = match &spec.connection {
        Connection::Feedback { p, q, weight } => Some((*p, *q + 1, weight)),
        _ => None,
    };

    // d^l from the fixed-point pre-activations.
    let mut d: Vec<Vector> = vec![Vector::zeros(0)];
    for l in 1..=n {
        let mut pre = matvec(&spec.weights[l - 1], &rates[l - 1])?;
        pre.add_assign(spec.bias(l))?;
        if let Some((p, target, w)) = feedback {
            if target == l {
                pre.add_assign(&matvec(w, &rates[p])?)?;
            }
        }
        d.push(pre.map(|x| {
            let z = x / v_th;
            if z > 0.0 && z < 1.0 {
                1.0
            } else {
                0.0
            }
        }));
    }

    let offsets: Vec<usize> = std::iter::once(0)
        .chain(spec.layer_sizes[1..].iter().scan(0, |acc, &w| {
            *acc += w;
            Some(*acc)
        }))
        .collect();
    let m = offsets[n];
    let mut jac = DMatrix::<f64>::zeros(m, m);
    let mut put_block = |rows_l: usize, cols_l: usize, w: &crate::math::Matrix| {
        for i in 0..w.rows() {
            let scale = d[rows_l][i] / v_th;
            for j in 0..w.cols() {
                jac[(offsets[rows_l - 1] + i, offsets[cols_l - 1] + j)] += scale * w[(i, j)];
            }
        }
    };
    for l in 2..=n {
        put_block(l, l - 1, &spec.weights[l - 1]);
    }
    if let Some((p, target, w)) = feedback {
        if p >= 1 {
            put_block(target, p, w);
        }
    }

    let (_, top) = mixed_loss(&rates[n], label, loss)?;
    let mut rhs = DVector::<f64>::zeros(m);
    for (i, g) in top.iter().enumerate() {
        rhs[offsets[n - 1] + i] = *g;
    }
    let system = (DMatrix::<f64>::identity(m, m) - jac).transpose();
    let sv = system.clone().singular_values();
    let smax = sv.max();
    let smin = sv.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Ok(ImplicitOutcome::IllConditioned { condition });
    }
    let v = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::InvalidParameter("singular implicit system".into()))?;

    let gated: Vec<Vector> = (0..=n)
        .map(|l| {
            if l == 0 {
                Vector::zeros(0)
            } else {
                Vector::from_vec(
                    (0..spec.layer_sizes[l])
                        .map(|i| v[offsets[l - 1] + i] * d[l][i] / v_th)
                        .collect(),
                )
            }
        })
        .collect();

    let mut grads = GradientSet::zeros(spec, Engine::SpikeRepresentation, None);
    for l in 0..n {
        grads.dw[l] = outer(&gated[l + 1], &rates[l]);
        grads.db[l] = gated[l + 1].clone();
    }
    if let Some((p, target, _)) = feedback {
        grads.dwb = Some(outer(&gated[target], &rates[p]));
    }
    Ok(ImplicitOutcome::Solved { grads, condition })
}
