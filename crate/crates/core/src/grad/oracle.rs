//! Brute-force reference gradient for tiny networks.
//!
//! Runs its own scalar LIF forward pass, forms `â` by direct summation, and
//! obtains every parameter gradient by enumerating all same-time chain-rule
//! paths through the unit graph (layer edges plus the skip edge, if any).
//! Paths through earlier time steps are dropped, which is the
//! `∂â[t−1]/∂θ = 0` assumption the engines make.

use crate::error::{Error, Result};
use crate::math::{Matrix, Vector};
use crate::surrogate::LossSpec;
use crate::topology::{Connection, NetworkSpec};

use super::{Engine, GradientSet};

pub const ORACLE_MAX_DEPTH: usize = 3;
pub const ORACLE_MAX_WIDTH: usize = 4;
pub const ORACLE_MAX_STEPS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleTarget {
    /// `∂L_E[t]/∂θ`, matching SAF-E and OTTT_O.
    PerStep(usize),
    /// `∂L_F/∂θ` with surrogate factors at `T`, matching SAF-F.
    Final,
    /// `Σ_t ∂L_E[t]/∂θ`, matching OTTT_A.
    SummedPerStep,
}

struct Unrolled {
    /// `u[t][l][i]` for neuron layers, `t = 1..=T` at index `t − 1`.
    u: Vec<Vec<Vec<f64>>>,
    /// `s[t][l][i]` with layer 0 the input, `t = 0..=T` (row 0 all zero).
    s: Vec<Vec<Vec<f64>>>,
}

fn forward(spec: &NetworkSpec, inputs: &[Vector]) -> Unrolled {
    let sizes = &spec.layer_sizes;
    let n = sizes.len() - 1;
    let lam = spec.params.lambda;
    let v = spec.params.v_th;
    let zeros: Vec<Vec<f64>> = sizes.iter().map(|&w| vec![0.0; w]).collect();
    let mut s = vec![zeros.clone()];
    let mut u_hist = Vec::new();
    let mut u: Vec<Vec<f64>> = zeros.clone();
    for x in inputs {
        let prev = s.last().expect("seeded").clone();
        let mut cur = zeros.clone();
        cur[0] = x.as_slice().to_vec();
        for l in 1..=n {
            for i in 0..sizes[l] {
                let mut drive = spec.biases[l - 1][i];
                for j in 0..sizes[l - 1] {
                    drive += spec.weights[l - 1][(i, j)] * cur[l - 1][j];
                }
                match &spec.connection {
                    Connection::Feedforward { p, q, weight } if q + 1 == l => {
                        for j in 0..sizes[*p] {
                            drive += weight[(i, j)] * cur[*p][j];
                        }
                    }
                    Connection::Feedback { p, q, weight } if q + 1 == l => {
                        for j in 0..sizes[*p] {
                            drive += weight[(i, j)] * prev[*p][j];
                        }
                    }
                    _ => {}
                }
                let ui = lam * (u[l][i] - v * prev[l][i]) + drive;
                u[l][i] = ui;
                cur[l][i] = if ui >= v { 1.0 } else { 0.0 };
            }
        }
        u_hist.push(u.clone());
        s.push(cur);
    }
    Unrolled { u: u_hist, s }
}

/// `Σ_{τ ≤ t} λ^{t−τ} s^l[τ]` by direct summation.
fn accumulation(run: &Unrolled, lam: f64, t: usize, l: usize, j: usize) -> f64 {
    (1..=t).map(|tau| lam.powi((t - tau) as i32) * run.s[tau][l][j]).sum()
}

fn surrogate(u: f64, spec: &NetworkSpec) -> f64 {
    let sig = 1.0 / (1.0 + (-(u - spec.params.v_th) / spec.beta).exp());
    sig * (1.0 - sig) / spec.beta
}

/// `∂L/∂v` for the CE/MSE mixture.
fn mixture_grad(v: &[f64], label: usize, loss: &LossSpec) -> Vec<f64> {
    let c = v.len() as f64;
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = v.iter().map(|x| (x - m).exp()).sum();
    v.iter()
        .enumerate()
        .map(|(k, &x)| {
            let y = if k == label { 1.0 } else { 0.0 };
            (1.0 - loss.alpha) * ((x - m).exp() / z - y) + loss.alpha * 2.0 * (x - y) / c
        })
        .collect()
}

/// Sum over all paths from unit `(l, i)` to the output of the product of
/// edge weights and surrogate factors, including the factor at `(l, i)`.
fn path_sum(spec: &NetworkSpec, sg_t: &[Vec<f64>], top: &[f64], l: usize, i: usize) -> f64 {
    let n = spec.depth();
    let mut downstream = if l == n { top[i] } else { 0.0 };
    if l < n {
        for k in 0..spec.layer_sizes[l + 1] {
            downstream += spec.weights[l][(k, i)] * path_sum(spec, sg_t, top, l + 1, k);
        }
    }
    if let Connection::Feedforward { p, q, weight } = &spec.connection {
        if *p == l {
            for k in 0..spec.layer_sizes[q + 1] {
                downstream += weight[(k, i)] * path_sum(spec, sg_t, top, q + 1, k);
            }
        }
    }
    sg_t[l][i] * downstream
}

fn gradient_at(
    spec: &NetworkSpec,
    run: &Unrolled,
    t: usize,
    top: &[f64],
    out: &mut GradientSet,
) {
    let lam = spec.params.lambda;
    let n = spec.depth();
    let mut sg_t: Vec<Vec<f64>> = vec![Vec::new()];
    for l in 1..=n {
        sg_t.push(run.u[t - 1][l].iter().map(|&u| surrogate(u, spec)).collect());
    }
    let node: Vec<Vec<f64>> = (0..=n)
        .map(|l| {
            if l == 0 {
                Vec::new()
            } else {
                (0..spec.layer_sizes[l]).map(|i| path_sum(spec, &sg_t, top, l, i)).collect()
            }
        })
        .collect();
    let add = |m: &mut Matrix, target: usize, src: usize, tt: usize| {
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                let idx = i * m.cols() + j;
                m.as_mut_slice()[idx] += node[target][i] * accumulation(run, lam, tt, src, j);
            }
        }
    };
    for l in 0..n {
        add(&mut out.dw[l], l + 1, l, t);
        for i in 0..spec.layer_sizes[l + 1] {
            out.db[l][i] += node[l + 1][i];
        }
    }
    match &spec.connection {
        Connection::None => {}
        Connection::Feedforward { p, q, .. } => add(out.dwf.as_mut().expect("shaped"), q + 1, *p, t),
        Connection::Feedback { p, q, .. } => add(out.dwb.as_mut().expect("shaped"), q + 1, *p, t - 1),
    }
}

pub fn oracle_unrolled_grad(
    spec: &NetworkSpec,
    inputs: &[Vector],
    label: usize,
    loss: &LossSpec,
    target: OracleTarget,
) -> Result<GradientSet> {
    spec.validate()?;
    let big_t = inputs.len();
    if spec.depth() > ORACLE_MAX_DEPTH
        || spec.layer_sizes.iter().any(|&w| w > ORACLE_MAX_WIDTH)
        || big_t > ORACLE_MAX_STEPS
    {
        return Err(Error::InstanceTooLarge(format!(
            "oracle accepts ≤ {ORACLE_MAX_DEPTH} layers, ≤ {ORACLE_MAX_WIDTH} units, T ≤ {ORACLE_MAX_STEPS}; got sizes {:?}, T = {big_t}",
            spec.layer_sizes
        )));
    }
    if big_t == 0 {
        return Err(Error::EmptyInput("oracle needs at least one time step"));
    }
    if let Some(x) = inputs.iter().find(|x| x.len() != spec.input_size()) {
        return Err(Error::dims("oracle input", spec.input_size(), x.len()));
    }
    if label >= loss.num_classes {
        return Err(Error::LabelOutOfRange {
            label,
            num_classes: loss.num_classes,
        });
    }
    if spec.output_size() != loss.num_classes {
        return Err(Error::dims("oracle output", loss.num_classes, spec.output_size()));
    }
    let run = forward(spec, inputs);
    let n = spec.depth();
    let lam = spec.params.lambda;

    let per_step_top = |t: usize| -> Vec<f64> {
        mixture_grad(&run.s[t][n], label, loss)
            .into_iter()
            .map(|g| g / big_t as f64)
            .collect()
    };

    let (t_tag, times): (Option<usize>, Vec<(usize, Vec<f64>)>) = match target {
        OracleTarget::PerStep(t) => {
            if t == 0 || t > big_t {
                return Err(Error::TimeOutOfRange { t, steps: big_t });
            }
            (Some(t), vec![(t, per_step_top(t))])
        }
        OracleTarget::SummedPerStep => (None, (1..=big_t).map(|t| (t, per_step_top(t))).collect()),
        OracleTarget::Final => {
            let norm: f64 = (0..=big_t).map(|k| lam.powi(k as i32)).sum();
            let rate: Vec<f64> = (0..spec.output_size())
                .map(|k| accumulation(&run, lam, big_t, n, k) / norm)
                .collect();
            let top = mixture_grad(&rate, label, loss).into_iter().map(|g| g / norm).collect();
            (Some(big_t), vec![(big_t, top)])
        }
    };

    let mut out = GradientSet::zeros(spec, Engine::Oracle, t_tag);
    for (t, top) in &times {
        gradient_at(spec, &run, *t, top, &mut out);
    }
    Ok(out)
}
