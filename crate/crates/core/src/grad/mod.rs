//! Backward engines.
//!
//! Every engine returns a [`GradientSet`] whose weight gradients use the
//! orientation `dW^l[i, j] = ∂L/∂W^l[i, j]`, `i` postsynaptic. All per-step
//! engines treat `∂â[t−1]/∂θ` as zero.

mod oracle;
mod ottt;
mod saf;
mod sr;

use std::io::Write;

pub use oracle::{oracle_unrolled_grad, OracleTarget, ORACLE_MAX_DEPTH, ORACLE_MAX_STEPS, ORACLE_MAX_WIDTH};
pub use ottt::{grad_ottt_a, grad_ottt_o, grad_ottt_o_step};
pub use saf::{back_signal, clamp_factors, grad_saf_e, grad_saf_e_step, grad_saf_f, grad_saf_f_step, BackSignal, DerivativeMode};
pub use sr::grad_spike_representation;

use crate::error::{Error, Result};
use crate::math::{outer, Matrix, Vector};
use crate::topology::{Connection, NetworkSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Engine {
    SafE,
    SafF,
    OtttO,
    OtttA,
    SpikeRepresentation,
    Oracle,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::SafE => "saf-e",
            Engine::SafF => "saf-f",
            Engine::OtttO => "ottt-o",
            Engine::OtttA => "ottt-a",
            Engine::SpikeRepresentation => "sr",
            Engine::Oracle => "oracle",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            Engine::SafE,
            Engine::SafF,
            Engine::OtttO,
            Engine::OtttA,
            Engine::SpikeRepresentation,
            Engine::Oracle,
        ]
        .into_iter()
        .find(|e| e.name() == s)
    }
}

impl std::fmt::Display for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Gradients of one engine for every parameter of a [`NetworkSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub engine: Engine,
    /// Time step for per-step engines.
    pub t: Option<usize>,
    /// `dW^l` for `l = 0..N`.
    pub dw: Vec<Matrix>,
    /// `db^l` for `l = 1..=N`, stored at `l − 1`.
    pub db: Vec<Vector>,
    pub dwf: Option<Matrix>,
    pub dwb: Option<Matrix>,
}

impl GradientSet {
    pub fn zeros(spec: &NetworkSpec, engine: Engine, t: Option<usize>) -> Self {
        let shape = |m: &Matrix| Matrix::zeros(m.rows(), m.cols());
        let (dwf, dwb) = match &spec.connection {
            Connection::None => (None, None),
            Connection::Feedforward { weight, .. } => (Some(shape(weight)), None),
            Connection::Feedback { weight, .. } => (None, Some(shape(weight))),
        };
        GradientSet {
            engine,
            t,
            dw: spec.weights.iter().map(shape).collect(),
            db: spec.biases.iter().map(|b| Vector::zeros(b.len())).collect(),
            dwf,
            dwb,
        }
    }

    /// Builds the set from per-layer signals `h^l` (`l = 1..=N`, stored at
    /// `l − 1`) and presynaptic vectors: `dW^l = outer(h^{l+1}, pre^l)`,
    /// `db^l = h^l`, and the connection gradient from `conn_pre`.
    pub(crate) fn from_signals(
        spec: &NetworkSpec,
        engine: Engine,
        t: Option<usize>,
        signals: &[Vector],
        pre: &[&Vector],
        conn_pre: Option<&Vector>,
    ) -> Self {
        let dw = (0..spec.depth()).map(|l| outer(&signals[l], pre[l])).collect();
        let db = signals.to_vec();
        let conn = spec
            .connection
            .endpoints()
            .zip(conn_pre)
            .map(|((_, target, _), x)| outer(&signals[target - 1], x));
        let (dwf, dwb) = match spec.connection {
            Connection::None => (None, None),
            Connection::Feedforward { .. } => (conn, None),
            Connection::Feedback { .. } => (None, conn),
        };
        GradientSet {
            engine,
            t,
            dw,
            db,
            dwf,
            dwb,
        }
    }

    /// Every tensor as `(name, values)`, in the parameter order of
    /// [`NetworkSpec::for_each_param_mut`].
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = Vec::with_capacity(self.dw.len() * 2 + 1);
        for (l, m) in self.dw.iter().enumerate() {
            out.push((format!("W{l}"), m.as_slice()));
        }
        for (i, b) in self.db.iter().enumerate() {
            out.push((format!("b{}", i + 1), b.as_slice()));
        }
        if let Some(m) = &self.dwf {
            out.push(("Wf".into(), m.as_slice()));
        }
        if let Some(m) = &self.dwb {
            out.push(("Wb".into(), m.as_slice()));
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        out.extend(self.dw.iter_mut().map(Matrix::as_mut_slice));
        out.extend(self.db.iter_mut().map(Vector::as_mut_slice));
        out.extend(self.dwf.iter_mut().map(Matrix::as_mut_slice));
        out.extend(self.dwb.iter_mut().map(Matrix::as_mut_slice));
        out
    }

    /// Weight tensors only (`W^l`, `W_f`, `W_b`).
    pub fn weight_tensors(&self) -> Vec<(String, &[f64])> {
        self.tensors().into_iter().filter(|(n, _)| n.starts_with('W')).collect()
    }

    pub fn add_assign(&mut self, other: &GradientSet) -> Result<()> {
        let theirs = other.tensors();
        let mine = self.tensors_mut();
        if mine.len() != theirs.len() {
            return Err(Error::dims("GradientSet tensors", mine.len(), theirs.len()));
        }
        for (a, (_, b)) in mine.into_iter().zip(theirs) {
            if a.len() != b.len() {
                return Err(Error::dims("GradientSet::add_assign", a.len(), b.len()));
            }
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            for x in t {
                *x *= factor;
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|(_, v)| v.iter())
            .fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn weight_max_abs(&self) -> f64 {
        self.weight_tensors()
            .iter()
            .flat_map(|(_, v)| v.iter())
            .fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, v)| v.iter().all(|x| x.is_finite()))
    }

    pub fn max_abs_diff(&self, other: &GradientSet) -> Result<f64> {
        Ok(tensor_diffs(&self.tensors(), &other.tensors())?
            .into_iter()
            .fold(0.0, |m, d| m.max(d.abs)))
    }

    /// Largest per-tensor relative difference over all parameters; see
    /// [`TensorDiff::rel`].
    pub fn max_rel_diff(&self, other: &GradientSet) -> Result<f64> {
        Ok(tensor_diffs(&self.tensors(), &other.tensors())?
            .into_iter()
            .fold(0.0, |m, d| m.max(d.rel)))
    }

    /// As [`max_rel_diff`](Self::max_rel_diff) over weight tensors only.
    pub fn weight_max_rel_diff(&self, other: &GradientSet) -> Result<f64> {
        Ok(tensor_diffs(&self.weight_tensors(), &other.weight_tensors())?
            .into_iter()
            .fold(0.0, |m, d| m.max(d.rel)))
    }

    pub fn diffs(&self, other: &GradientSet) -> Result<Vec<TensorDiff>> {
        tensor_diffs(&self.tensors(), &other.tensors())
    }

    /// Inner product over the weight tensors.
    pub fn weight_dot(&self, other: &GradientSet) -> Result<f64> {
        let a = self.weight_tensors();
        let b = other.weight_tensors();
        if a.len() != b.len() {
            return Err(Error::dims("weight_dot tensors", a.len(), b.len()));
        }
        let mut acc = 0.0;
        for ((_, x), (_, y)) in a.iter().zip(&b) {
            if x.len() != y.len() {
                return Err(Error::dims("weight_dot", x.len(), y.len()));
            }
            for (p, q) in x.iter().zip(y.iter()) {
                acc += p * q;
            }
        }
        Ok(acc)
    }

    /// Writes `engine,layer,index,value` rows (no header).
    pub fn write_csv_rows(&self, mut w: impl Write) -> std::io::Result<()> {
        for (name, values) in self.tensors() {
            for (i, v) in values.iter().enumerate() {
                writeln!(w, "{},{},{},{:?}", self.engine, name, i, v)?;
            }
        }
        Ok(())
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "engine,layer,index,value")?;
        self.write_csv_rows(w)
    }
}

/// Difference between two same-named tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorDiff {
    pub name: String,
    pub abs: f64,
    /// `max|a − b| / max(max|a|, max|b|)`, and 0 when both are zero.
    pub rel: f64,
}

fn tensor_diffs(a: &[(String, &[f64])], b: &[(String, &[f64])]) -> Result<Vec<TensorDiff>> {
    if a.len() != b.len() {
        return Err(Error::dims("gradient tensor count", a.len(), b.len()));
    }
    a.iter()
        .zip(b)
        .map(|((name, x), (other, y))| {
            if name != other || x.len() != y.len() {
                return Err(Error::dims("gradient tensor shape", x.len(), y.len()));
            }
            let mut abs = 0.0_f64;
            let mut scale = 0.0_f64;
            for (p, q) in x.iter().zip(y.iter()) {
                abs = abs.max((p - q).abs());
                scale = scale.max(p.abs()).max(q.abs());
            }
            let rel = if scale == 0.0 { 0.0 } else { abs / scale };
            Ok(TensorDiff {
                name: name.clone(),
                abs,
                rel,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests;
