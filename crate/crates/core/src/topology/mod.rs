//! Fully connected layer stacks with an optional skip (feedforward) or
//! delayed (feedback) connection, and the LIF/SAF forward runners.
//!
//! Layer 0 is the input. Layers `1..=N` hold neurons; `W^l` maps layer `l` to
//! layer `l+1` and has shape `(size[l+1], size[l])`. A connection from layer
//! `p` into layer `q+1` adds `W_f·x^p[t]` (feedforward, `q ≥ p`) or
//! `W_b·x^p[t−1]` (feedback, `q < p`) to that layer's input, where `x` is the
//! spike train in LIF mode and the spike accumulation in SAF mode.

mod format;
mod runner;
mod trace;

pub use format::{parse_network, write_network};
pub use runner::{LifRunner, SafRunner};
pub use trace::{
    count_state_buffers, forward_lif, forward_saf, ForwardTrace, LifLayerStep, LifStepRecord, OtttStep,
    SafLayerStep, SafStepRecord, StateBufferReport, StateMode, TraceMode,
};

use crate::error::{Error, Result};
use crate::math::{Matrix, Rng, Vector};
use crate::neuron::NeuronParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConnectionKind {
    None,
    Feedforward,
    Feedback,
}

impl ConnectionKind {
    pub fn name(self) -> &'static str {
        match self {
            ConnectionKind::None => "none",
            ConnectionKind::Feedforward => "feedforward",
            ConnectionKind::Feedback => "feedback",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(ConnectionKind::None),
            "feedforward" => Some(ConnectionKind::Feedforward),
            "feedback" => Some(ConnectionKind::Feedback),
            _ => None,
        }
    }
}

impl std::fmt::Display for ConnectionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Connection {
    None,
    /// Same-time skip from layer `p` into layer `q+1`, `q ≥ p`.
    Feedforward { p: usize, q: usize, weight: Matrix },
    /// One-step-delayed connection from layer `p` into layer `q+1`, `q < p`.
    Feedback { p: usize, q: usize, weight: Matrix },
}

impl Connection {
    pub fn kind(&self) -> ConnectionKind {
        match self {
            Connection::None => ConnectionKind::None,
            Connection::Feedforward { .. } => ConnectionKind::Feedforward,
            Connection::Feedback { .. } => ConnectionKind::Feedback,
        }
    }

    /// `(source p, target layer q+1, weight)` when a connection exists.
    pub fn endpoints(&self) -> Option<(usize, usize, &Matrix)> {
        match self {
            Connection::None => None,
            Connection::Feedforward { p, q, weight } | Connection::Feedback { p, q, weight } => {
                Some((*p, *q + 1, weight))
            }
        }
    }

    pub fn weight_mut(&mut self) -> Option<&mut Matrix> {
        match self {
            Connection::None => None,
            Connection::Feedforward { weight, .. } | Connection::Feedback { weight, .. } => Some(weight),
        }
    }

    pub fn is_delayed(&self) -> bool {
        matches!(self, Connection::Feedback { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub layer_sizes: Vec<usize>,
    pub params: NeuronParams,
    /// Surrogate-gradient temperature.
    pub beta: f64,
    pub connection: Connection,
    /// `W^0..W^{N−1}`.
    pub weights: Vec<Matrix>,
    /// `b^1..b^N`, stored at index `l − 1`.
    pub biases: Vec<Vector>,
}

/// Which connection to create when building a network, without weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConnectionPlan {
    pub kind: ConnectionKind,
    pub p: usize,
    pub q: usize,
}

impl ConnectionPlan {
    pub const NONE: ConnectionPlan = ConnectionPlan {
        kind: ConnectionKind::None,
        p: 0,
        q: 0,
    };
}

/// Weight and bias ranges for random initialization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitScheme {
    /// Weights are uniform in `±weight_gain/√fan_in`.
    pub weight_gain: f64,
    /// Connection weights use `±connection_gain/√fan_in`.
    pub connection_gain: f64,
    pub bias_low: f64,
    pub bias_high: f64,
}

impl Default for InitScheme {
    fn default() -> Self {
        InitScheme {
            weight_gain: 1.0,
            connection_gain: 1.0,
            bias_low: 0.0,
            bias_high: 0.3,
        }
    }
}

impl NetworkSpec {
    /// All-zero weights and biases.
    pub fn zeroed(layer_sizes: &[usize], params: NeuronParams, beta: f64, plan: ConnectionPlan) -> Result<Self> {
        if layer_sizes.is_empty() {
            return Err(Error::InvalidParameter("layer_sizes must include the input layer".into()));
        }
        let weights = layer_sizes
            .windows(2)
            .map(|w| Matrix::zeros(w[1], w[0]))
            .collect();
        let biases = layer_sizes[1..].iter().map(|&n| Vector::zeros(n)).collect();
        let connection = build_connection(layer_sizes, plan, Matrix::zeros)?;
        let spec = NetworkSpec {
            layer_sizes: layer_sizes.to_vec(),
            params,
            beta,
            connection,
            weights,
            biases,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn random(
        layer_sizes: &[usize],
        params: NeuronParams,
        beta: f64,
        plan: ConnectionPlan,
        init: &InitScheme,
        rng: &mut Rng,
    ) -> Result<Self> {
        let mut spec = NetworkSpec::zeroed(layer_sizes, params, beta, plan)?;
        for (l, w) in spec.weights.iter_mut().enumerate() {
            let bound = init.weight_gain / (layer_sizes[l] as f64).sqrt();
            *w = rng.uniform_matrix(w.rows(), w.cols(), -bound, bound);
        }
        for b in spec.biases.iter_mut() {
            *b = rng.uniform_vector(b.len(), init.bias_low, init.bias_high);
        }
        if let Some(w) = spec.connection.weight_mut() {
            let bound = init.connection_gain / (w.cols() as f64).sqrt();
            *w = rng.uniform_matrix(w.rows(), w.cols(), -bound, bound);
        }
        Ok(spec)
    }

    /// Number of neuron layers `N`.
    pub fn depth(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.layer_sizes.last().expect("validated non-empty")
    }

    /// Bias of neuron layer `l ∈ 1..=N`.
    pub fn bias(&self, l: usize) -> &Vector {
        &self.biases[l - 1]
    }

    pub fn parameter_count(&self) -> usize {
        let w: usize = self.weights.iter().map(|m| m.rows() * m.cols()).sum();
        let b: usize = self.biases.iter().map(Vector::len).sum();
        let c = self.connection.endpoints().map_or(0, |(_, _, m)| m.rows() * m.cols());
        w + b + c
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.beta > 0.0) {
            return Err(Error::InvalidParameter(format!("β must be positive, got {}", self.beta)));
        }
        let sizes = &self.layer_sizes;
        if sizes.is_empty() {
            return Err(Error::InvalidParameter("layer_sizes must include the input layer".into()));
        }
        if sizes.contains(&0) {
            return Err(Error::InvalidParameter("layer widths must be positive".into()));
        }
        let n = sizes.len() - 1;
        if self.weights.len() != n {
            return Err(Error::dims("weights", n, self.weights.len()));
        }
        if self.biases.len() != n {
            return Err(Error::dims("biases", n, self.biases.len()));
        }
        for (l, w) in self.weights.iter().enumerate() {
            if w.rows() != sizes[l + 1] {
                return Err(Error::dims("weight rows", sizes[l + 1], w.rows()));
            }
            if w.cols() != sizes[l] {
                return Err(Error::dims("weight cols", sizes[l], w.cols()));
            }
        }
        for (l, b) in self.biases.iter().enumerate() {
            if b.len() != sizes[l + 1] {
                return Err(Error::dims("bias", sizes[l + 1], b.len()));
            }
        }
        match &self.connection {
            Connection::None => {}
            Connection::Feedforward { p, q, weight } => {
                check_plan(sizes, ConnectionKind::Feedforward, *p, *q)?;
                check_connection_shape(sizes, *p, *q, weight)?;
            }
            Connection::Feedback { p, q, weight } => {
                check_plan(sizes, ConnectionKind::Feedback, *p, *q)?;
                check_connection_shape(sizes, *p, *q, weight)?;
            }
        }
        Ok(())
    }

    /// Visits every parameter tensor mutably in a fixed order:
    /// weights, biases, then the connection weight.
    pub fn for_each_param_mut(&mut self, mut f: impl FnMut(&mut [f64])) {
        for w in &mut self.weights {
            f(w.as_mut_slice());
        }
        for b in &mut self.biases {
            f(b.as_mut_slice());
        }
        if let Some(w) = self.connection.weight_mut() {
            f(w.as_mut_slice());
        }
    }

    pub fn max_abs_param_diff(&self, other: &NetworkSpec) -> f64 {
        let mut m = 0.0_f64;
        let pairs = self
            .weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (a.as_slice(), b.as_slice()))
            .chain(self.biases.iter().zip(&other.biases).map(|(a, b)| (a.as_slice(), b.as_slice())));
        for (a, b) in pairs {
            for (x, y) in a.iter().zip(b) {
                m = m.max((x - y).abs());
            }
        }
        if let (Some((_, _, a)), Some((_, _, b))) = (self.connection.endpoints(), other.connection.endpoints()) {
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                m = m.max((x - y).abs());
            }
        }
        m
    }
}

fn check_plan(sizes: &[usize], kind: ConnectionKind, p: usize, q: usize) -> Result<()> {
    let n = sizes.len() - 1;
    match kind {
        ConnectionKind::None => Ok(()),
        ConnectionKind::Feedforward => {
            if p > q || q >= n {
                Err(Error::InvalidConnection(format!(
                    "feedforward needs p ≤ q < N (p={p}, q={q}, N={n})"
                )))
            } else {
                Ok(())
            }
        }
        ConnectionKind::Feedback => {
            if q >= p || p > n {
                Err(Error::InvalidConnection(format!(
                    "feedback needs q < p ≤ N (p={p}, q={q}, N={n})"
                )))
            } else {
                Ok(())
            }
        }
    }
}

fn check_connection_shape(sizes: &[usize], p: usize, q: usize, w: &Matrix) -> Result<()> {
    if w.rows() != sizes[q + 1] {
        return Err(Error::dims("connection rows", sizes[q + 1], w.rows()));
    }
    if w.cols() != sizes[p] {
        return Err(Error::dims("connection cols", sizes[p], w.cols()));
    }
    Ok(())
}

fn build_connection(
    sizes: &[usize],
    plan: ConnectionPlan,
    make: impl Fn(usize, usize) -> Matrix,
) -> Result<Connection> {
    check_plan(sizes, plan.kind, plan.p, plan.q)?;
    let ConnectionPlan { kind, p, q } = plan;
    Ok(match kind {
        ConnectionKind::None => Connection::None,
        ConnectionKind::Feedforward => Connection::Feedforward {
            p,
            q,
            weight: make(sizes[q + 1], sizes[p]),
        },
        ConnectionKind::Feedback => Connection::Feedback {
            p,
            q,
            weight: make(sizes[q + 1], sizes[p]),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> NeuronParams {
        NeuronParams::new(0.5, 1.0).unwrap()
    }

    #[test]
    fn connection_index_rules() {
        let sizes = [3, 4, 4, 2];
        let ok_ff = ConnectionPlan { kind: ConnectionKind::Feedforward, p: 0, q: 2 };
        assert!(NetworkSpec::zeroed(&sizes, params(), 4.0, ok_ff).is_ok());
        let bad_ff = ConnectionPlan { kind: ConnectionKind::Feedforward, p: 2, q: 1 };
        assert!(matches!(
            NetworkSpec::zeroed(&sizes, params(), 4.0, bad_ff),
            Err(Error::InvalidConnection(_))
        ));
        let ok_fb = ConnectionPlan { kind: ConnectionKind::Feedback, p: 3, q: 0 };
        let spec = NetworkSpec::zeroed(&sizes, params(), 4.0, ok_fb).unwrap();
        let (p, target, w) = spec.connection.endpoints().unwrap();
        assert_eq!((p, target, w.shape()), (3, 1, (4, 2)));
        let bad_fb = ConnectionPlan { kind: ConnectionKind::Feedback, p: 4, q: 0 };
        assert!(NetworkSpec::zeroed(&sizes, params(), 4.0, bad_fb).is_err());
    }

    #[test]
    fn random_init_respects_bounds() {
        let mut rng = Rng::new(3);
        let spec = NetworkSpec::random(&[16, 8, 2], params(), 4.0, ConnectionPlan::NONE, &InitScheme::default(), &mut rng)
            .unwrap();
        assert!(spec.weights[0].max_abs() <= 0.25);
        assert!(spec.biases.iter().all(|b| b.iter().all(|&x| (0.0..0.3).contains(&x))));
        assert_eq!(spec.parameter_count(), 16 * 8 + 8 * 2 + 8 + 2);
    }

    #[test]
    fn validate_catches_shape_errors() {
        let mut spec = NetworkSpec::zeroed(&[2, 3], params(), 4.0, ConnectionPlan::NONE).unwrap();
        spec.weights[0] = Matrix::zeros(3, 3);
        assert!(spec.validate().is_err());
    }
}
