//! Sigmoid-derivative surrogate gradient and the training losses.
//!
//! The loss on an output vector `v` with label `y` mixes softmax
//! cross-entropy and mean squared error against the one-hot target:
//! `(1−α)·CE(softmax(v), y) + α·mean((v − onehot(y))²)`.

use crate::error::{Error, Result};
use crate::math::{geometric_weight_sum, Vector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateParams {
    pub beta: f64,
    pub v_th: f64,
}

impl SurrogateParams {
    pub fn new(beta: f64, v_th: f64) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::InvalidParameter(format!("β must be positive, got {beta}")));
        }
        Ok(SurrogateParams { beta, v_th })
    }
}

/// `(1/β)·e^z / (1 + e^z)²` with `z = (V_th − u)/β`.
///
/// The expression is even in `z`, so it is evaluated with `e^{−|z|}` to
/// avoid overflow in the tails.
pub fn sg_scalar(u: f64, p: &SurrogateParams) -> f64 {
    let z = ((p.v_th - u) / p.beta).abs();
    let e = (-z).exp();
    let denom = 1.0 + e;
    e / (denom * denom) / p.beta
}

/// Element-wise surrogate derivative at the (effective) membrane potential.
pub fn sg(u: &Vector, p: &SurrogateParams) -> Vector {
    u.map(|x| sg_scalar(x, p))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// `L_E[t] = L(s^N[t], y)/T`, applied at every step.
    PerStep,
    /// `L_F = L(â^N[T]/Λ, y)`, applied once at the end.
    Final,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSpec {
    pub kind: LossKind,
    pub alpha: f64,
    pub num_classes: usize,
}

impl LossSpec {
    pub fn new(kind: LossKind, alpha: f64, num_classes: usize) -> Result<Self> {
        let spec = LossSpec {
            kind,
            alpha,
            num_classes,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidParameter(format!("α must lie in [0, 1], got {}", self.alpha)));
        }
        if self.num_classes == 0 {
            return Err(Error::InvalidParameter("num_classes must be positive".into()));
        }
        Ok(())
    }

    pub fn with_kind(self, kind: LossKind) -> Self {
        LossSpec { kind, ..self }
    }
}

/// Numerically stable softmax (max subtracted first).
pub fn softmax(v: &Vector) -> Vector {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|&x| (x - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    Vector::from_vec(exps.into_iter().map(|e| e / z).collect())
}

/// Value and gradient of the CE/MSE mixture on `v`.
pub fn mixed_loss(v: &Vector, label: usize, spec: &LossSpec) -> Result<(f64, Vector)> {
    if label >= spec.num_classes {
        return Err(Error::LabelOutOfRange {
            label,
            num_classes: spec.num_classes,
        });
    }
    if v.len() != spec.num_classes {
        return Err(Error::dims("loss input", spec.num_classes, v.len()));
    }
    let c = spec.num_classes as f64;
    let alpha = spec.alpha;
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_z = m + v.iter().map(|&x| (x - m).exp()).sum::<f64>().ln();
    let ce = log_z - v[label];
    let p = softmax(v);

    let mut mse = 0.0;
    let mut grad = Vec::with_capacity(v.len());
    for (k, (&x, &pk)) in v.iter().zip(p.iter()).enumerate() {
        let y = if k == label { 1.0 } else { 0.0 };
        let diff = x - y;
        mse += diff * diff;
        grad.push((1.0 - alpha) * (pk - y) + alpha * 2.0 * diff / c);
    }
    mse /= c;
    Ok(((1.0 - alpha) * ce + alpha * mse, Vector::from_vec(grad)))
}

/// `L_E[t]` on the output spikes at one step; gradient w.r.t. `s^N[t]`.
pub fn loss_e(s_top: &Vector, label: usize, spec: &LossSpec, steps: usize) -> Result<(f64, Vector)> {
    if steps == 0 {
        return Err(Error::InvalidParameter("loss_E needs T ≥ 1".into()));
    }
    let inv_t = 1.0 / steps as f64;
    let (value, grad) = mixed_loss(s_top, label, spec)?;
    Ok((value * inv_t, grad.scale(inv_t)))
}

/// `L_F` on the weighted firing rate `â^N[T]/Λ`; gradient w.r.t. `â^N[T]`,
/// so it carries the `1/Λ` factor.
pub fn loss_f(a_hat_top: &Vector, label: usize, spec: &LossSpec, lambda: f64, steps: usize) -> Result<(f64, Vector)> {
    let big_lambda = geometric_weight_sum(lambda, steps);
    let rate = a_hat_top.scale(1.0 / big_lambda);
    let (value, grad) = mixed_loss(&rate, label, spec)?;
    Ok((value, grad.scale(1.0 / big_lambda)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Rng;

    fn central_diff(f: impl Fn(&Vector) -> f64, x: &Vector, h: f64) -> Vector {
        let mut g = Vector::zeros(x.len());
        for i in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            g[i] = (f(&xp) - f(&xm)) / (2.0 * h);
        }
        g
    }

    #[test]
    fn sg_peak_tails_and_symmetry() {
        let p = SurrogateParams::new(4.0, 1.0).unwrap();
        assert!((sg_scalar(1.0, &p) - 0.0625).abs() < 1e-15);
        assert!(sg_scalar(1e6, &p) < 1e-300);
        assert!(sg_scalar(-1e6, &p) < 1e-300);
        for d in [0.1, 0.7, 3.0, 40.0] {
            assert!((sg_scalar(1.0 + d, &p) - sg_scalar(1.0 - d, &p)).abs() < 1e-16);
        }
    }

    #[test]
    fn sg_integrates_to_one_and_is_bounded() {
        let p = SurrogateParams::new(4.0, 1.0).unwrap();
        let h = 1e-3;
        let mut total = 0.0;
        let mut u = -200.0;
        while u < 200.0 {
            let v = sg_scalar(u, &p);
            assert!(v > 0.0 && v <= 1.0 / 16.0);
            total += v * h;
            u += h;
        }
        assert!((total - 1.0).abs() < 1e-6, "{total}");
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(SurrogateParams::new(0.0, 1.0).is_err());
        assert!(LossSpec::new(LossKind::PerStep, 1.5, 2).is_err());
        let spec = LossSpec::new(LossKind::PerStep, 0.0, 2).unwrap();
        assert!(matches!(
            loss_e(&Vector::zeros(2), 2, &spec, 1),
            Err(Error::LabelOutOfRange { .. })
        ));
    }

    #[test]
    fn mixture_endpoints() {
        let s = Vector::from_vec(vec![1.0, 0.0, 0.0]);
        let ce_only = LossSpec::new(LossKind::PerStep, 0.0, 3).unwrap();
        let (v, _) = loss_e(&s, 1, &ce_only, 2).unwrap();
        let expected = ((1f64.exp() + 2.0).ln() - 0.0) / 2.0;
        assert!((v - expected).abs() < 1e-14);

        let mse_only = LossSpec::new(LossKind::PerStep, 1.0, 3).unwrap();
        let (v, g) = loss_e(&s, 0, &mse_only, 1).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(g, Vector::zeros(3));

        let (v, _) = loss_f(&Vector::zeros(3), 2, &mse_only, 0.5, 4).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn loss_e_and_loss_f_at_one_step() {
        // λ = 1, T = 1: Λ = 2, so L_F(â) = L(â/2) while L_E = L(s).
        let spec = LossSpec::new(LossKind::PerStep, 0.3, 3).unwrap();
        let s = Vector::from_vec(vec![1.0, 0.0, 1.0]);
        let (ve, ge) = loss_e(&s.scale(0.5), 2, &spec, 1).unwrap();
        let (vf, gf) = loss_f(&s, 2, &spec, 1.0, 1).unwrap();
        assert_eq!(ve, vf);
        assert_eq!(ge.scale(0.5), gf);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = Rng::new(11);
        for _ in 0..50 {
            let c = rng.int_range(2, 6);
            let alpha = rng.uniform(0.0, 1.0);
            let spec = LossSpec::new(LossKind::PerStep, alpha, c).unwrap();
            let label = rng.int_range(0, c - 1);
            let x = rng.uniform_vector(c, -2.0, 3.0);
            let steps = rng.int_range(1, 8);
            let (_, g) = loss_e(&x, label, &spec, steps).unwrap();
            let fd = central_diff(|v| loss_e(v, label, &spec, steps).unwrap().0, &x, 1e-5);
            assert!(g.sub(&fd).unwrap().max_abs() <= 1e-6 * g.max_abs().max(1e-3));

            let lambda = rng.uniform(0.1, 1.0);
            let (_, g) = loss_f(&x, label, &spec, lambda, steps).unwrap();
            let fd = central_diff(|v| loss_f(v, label, &spec, lambda, steps).unwrap().0, &x, 1e-5);
            assert!(g.sub(&fd).unwrap().max_abs() <= 1e-6 * g.max_abs().max(1e-3));
        }
    }
}
