//! Textual `key = value` serialization of [`NetworkSpec`].
//!
//! ```text
//! layer_sizes = 2 32 2
//! lambda = 0.5
//! v_th = 1.0
//! beta = 4.0
//! connection = feedback          # none | feedforward | feedback
//! connection.p = 2
//! connection.q = 0
//! connection.weight = ...        # row-major, shape (size[q+1], size[p])
//! weight.0 = ...                 # row-major, shape (size[1], size[0])
//! bias.1 = ...
//! ```
//!
//! Floats are written in shortest round-trip form, so a write/parse cycle is
//! bit-exact.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::kv::{join_floats, KvDoc};
use crate::math::{Matrix, Vector};
use crate::neuron::NeuronParams;

use super::{Connection, ConnectionKind, NetworkSpec};

pub fn write_network(spec: &NetworkSpec) -> String {
    let mut out = String::new();
    let sizes: Vec<String> = spec.layer_sizes.iter().map(ToString::to_string).collect();
    let _ = writeln!(out, "layer_sizes = {}", sizes.join(" "));
    let _ = writeln!(out, "lambda = {:?}", spec.params.lambda);
    let _ = writeln!(out, "v_th = {:?}", spec.params.v_th);
    let _ = writeln!(out, "beta = {:?}", spec.beta);
    let _ = writeln!(out, "connection = {}", spec.connection.kind());
    if let Connection::Feedforward { p, q, weight } | Connection::Feedback { p, q, weight } = &spec.connection {
        let _ = writeln!(out, "connection.p = {p}");
        let _ = writeln!(out, "connection.q = {q}");
        let _ = writeln!(out, "connection.weight = {}", join_floats(weight.as_slice()));
    }
    for (l, w) in spec.weights.iter().enumerate() {
        let _ = writeln!(out, "weight.{l} = {}", join_floats(w.as_slice()));
    }
    for (i, b) in spec.biases.iter().enumerate() {
        let _ = writeln!(out, "bias.{} = {}", i + 1, join_floats(b.as_slice()));
    }
    out
}

/// Consumes the network keys from `doc`, leaving any others in place.
pub fn parse_network(doc: &mut KvDoc) -> Result<NetworkSpec> {
    let layer_sizes: Vec<usize> = doc.require_list("layer_sizes")?;
    if layer_sizes.is_empty() {
        return Err(Error::parse(doc.source(), 0, "layer_sizes is empty"));
    }
    let params = NeuronParams {
        lambda: doc.require_parsed("lambda")?,
        v_th: doc.require_parsed("v_th")?,
    };
    let beta = doc.require_parsed("beta")?;
    let kind_name: String = doc.take_parsed("connection")?.unwrap_or_else(|| "none".into());
    let kind = ConnectionKind::parse(&kind_name)
        .ok_or_else(|| Error::parse(doc.source(), 0, format!("unknown connection kind `{kind_name}`")))?;

    let mut weights = Vec::with_capacity(layer_sizes.len() - 1);
    for l in 0..layer_sizes.len() - 1 {
        let data = doc.require_list(&format!("weight.{l}"))?;
        weights.push(Matrix::from_row_major(layer_sizes[l + 1], layer_sizes[l], data)?);
    }
    let mut biases = Vec::with_capacity(layer_sizes.len() - 1);
    for l in 1..layer_sizes.len() {
        biases.push(Vector::from_vec(doc.require_list(&format!("bias.{l}"))?));
    }

    let connection = match kind {
        ConnectionKind::None => Connection::None,
        ConnectionKind::Feedforward | ConnectionKind::Feedback => {
            let p: usize = doc.require_parsed("connection.p")?;
            let q: usize = doc.require_parsed("connection.q")?;
            if p >= layer_sizes.len() || q + 1 >= layer_sizes.len() {
                return Err(Error::InvalidConnection(format!("connection indices p={p}, q={q} out of range")));
            }
            let data = doc.require_list("connection.weight")?;
            let weight = Matrix::from_row_major(layer_sizes[q + 1], layer_sizes[p], data)?;
            if kind == ConnectionKind::Feedforward {
                Connection::Feedforward { p, q, weight }
            } else {
                Connection::Feedback { p, q, weight }
            }
        }
    };

    let spec = NetworkSpec {
        layer_sizes,
        params,
        beta,
        connection,
        weights,
        biases,
    };
    spec.validate()?;
    Ok(spec)
}

impl NetworkSpec {
    pub fn to_text(&self) -> String {
        write_network(self)
    }

    pub fn from_text(source: &str, text: &str) -> Result<Self> {
        let mut doc = KvDoc::parse(source, text)?;
        let spec = parse_network(&mut doc)?;
        doc.finish()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Rng;
    use crate::topology::{ConnectionPlan, InitScheme};
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn text_round_trip_is_exact(seed in any::<u64>(), kind in 0usize..3) {
            let mut rng = Rng::new(seed);
            let plan = match kind {
                0 => ConnectionPlan::NONE,
                1 => ConnectionPlan { kind: ConnectionKind::Feedforward, p: 0, q: 1 },
                _ => ConnectionPlan { kind: ConnectionKind::Feedback, p: 2, q: 0 },
            };
            let spec = NetworkSpec::random(&[3, 4, 2], NeuronParams::default(), 4.0, plan, &InitScheme::default(), &mut rng).unwrap();
            let back = NetworkSpec::from_text("mem", &spec.to_text()).unwrap();
            prop_assert_eq!(back, spec);
        }
    }

    #[test]
    fn rejects_wrong_lengths_and_unknown_keys() {
        let spec = NetworkSpec::zeroed(&[2, 1], NeuronParams::default(), 4.0, ConnectionPlan::NONE).unwrap();
        let text = spec.to_text().replace("weight.0 = 0.0 0.0", "weight.0 = 0.0");
        assert!(NetworkSpec::from_text("mem", &text).is_err());
        let text = format!("{}extra = 1\n", spec.to_text());
        assert!(NetworkSpec::from_text("mem", &text).is_err());
    }
}
