use crate::error::{Error, Result};
use crate::grad::GradientSet;

/// Pearson correlation and mean absolute error between two gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    /// `None` when either side has zero variance.
    pub corr: Option<f64>,
    pub mae: f64,
}

/// Compares the input-layer weight gradients `dW^0`.
pub fn gradient_similarity(a: &GradientSet, b: &GradientSet) -> Result<Similarity> {
    let (x, y) = match (a.dw.first(), b.dw.first()) {
        (Some(x), Some(y)) => (x.as_slice(), y.as_slice()),
        _ => return Err(Error::EmptyInput("gradient set has no weight layers")),
    };
    similarity_of(x, y)
}

pub fn similarity_of(x: &[f64], y: &[f64]) -> Result<Similarity> {
    if x.len() != y.len() {
        return Err(Error::dims("gradient_similarity", x.len(), y.len()));
    }
    if x.is_empty() {
        return Err(Error::EmptyInput("gradient_similarity on empty tensors"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut abs = 0.0;
    for (&p, &q) in x.iter().zip(y) {
        let dp = p - mx;
        let dq = q - my;
        sxy += dp * dq;
        sxx += dp * dp;
        syy += dq * dq;
        abs += (p - q).abs();
    }
    let corr = if sxx > 0.0 && syy > 0.0 {
        Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
    } else {
        None
    };
    Ok(Similarity { corr, mae: abs / n })
}
