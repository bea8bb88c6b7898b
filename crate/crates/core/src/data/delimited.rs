use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kv::join_floats;
use crate::math::Vector;

use super::{Dataset, Sample};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DelimitedSchema {
    /// Inferred as `max label + 1` when absent.
    pub num_classes: Option<usize>,
    /// Skip zero-mean unit-variance scaling.
    pub raw: bool,
}

/// One sample per line, comma or whitespace separated, label in the last
/// column. Blank lines and `#` comments are skipped.
pub fn load_delimited(path: impl AsRef<Path>, schema: DelimitedSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_delimited(&path.display().to_string(), &text, schema)
}

pub(crate) fn parse_delimited(source: &str, text: &str, schema: DelimitedSchema) -> Result<Dataset> {
    let mut samples = Vec::new();
    let mut dim: Option<usize> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = crate::kv::split_list(content).collect();
        if tokens.len() < 2 {
            return Err(Error::parse(source, line, "need at least one feature and a label"));
        }
        let (feat_tok, label_tok) = tokens.split_at(tokens.len() - 1);
        match dim {
            None => dim = Some(feat_tok.len()),
            Some(d) if d != feat_tok.len() => {
                return Err(Error::parse(
                    source,
                    line,
                    format!("expected {} features, found {}", d, feat_tok.len()),
                ))
            }
            _ => {}
        }
        let features = feat_tok
            .iter()
            .map(|t| match t.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::parse(source, line, format!("non-numeric feature `{t}`"))),
            })
            .collect::<Result<Vec<f64>>>()?;
        let label = label_tok[0]
            .parse::<usize>()
            .map_err(|_| Error::parse(source, line, format!("label `{}` is not a class index", label_tok[0])))?;
        samples.push(Sample {
            features: Vector::from_vec(features),
            label,
        });
    }
    let feature_dim = dim.ok_or(Error::EmptyInput("delimited file has no samples"))?;
    let num_classes = match schema.num_classes {
        Some(k) => k,
        None => samples.iter().map(|s| s.label).max().unwrap_or(0) + 1,
    };
    let mut ds = Dataset::new(samples, num_classes, feature_dim)?;
    if !schema.raw {
        ds.standardize()?;
    }
    Ok(ds)
}

/// Writes raw (un-normalized) features so that loading with `raw` reproduces them.
pub fn write_delimited(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    let mut out = String::new();
    for s in &dataset.samples {
        let raw = dataset.normalization.invert(&s.features)?;
        out.push_str(&join_floats(raw.as_slice()).replace(' ', ","));
        out.push_str(&format!(",{}\n", s.label));
    }
    fs::write(path, out)?;
    Ok(())
}
