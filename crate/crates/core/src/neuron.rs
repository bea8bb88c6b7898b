//! LIF and SAF neuron state machines and the statistics derived from spike
//! accumulations.
//!
//! A LIF layer keeps its membrane potential `u` and last spike output. A SAF
//! layer keeps the spike accumulation `â[t] = Σ_τ λ^{t−τ} s[τ]`, its previous
//! value, the potential accumulation `Û[t]` and the initial potential. The two
//! are interconvertible through
//!
//! ```text
//! u[t] = Û[t] − V_th·λ·â[t−1]
//! s[t] = â[t] − λ·â[t−1] = H(Û[t] − V_th·(λ·â[t−1] + 1))
//! ```

use crate::error::{Error, Result};
use crate::math::{geometric_weight_sum, Vector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeuronParams {
    pub lambda: f64,
    pub v_th: f64,
}

impl NeuronParams {
    pub fn new(lambda: f64, v_th: f64) -> Result<Self> {
        let p = NeuronParams { lambda, v_th };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "leak λ must lie in (0, 1], got {}",
                self.lambda
            )));
        }
        if !(self.v_th > 0.0 && self.v_th.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "threshold V_th must be positive, got {}",
                self.v_th
            )));
        }
        Ok(())
    }
}

impl Default for NeuronParams {
    fn default() -> Self {
        NeuronParams {
            lambda: 0.5,
            v_th: 1.0,
        }
    }
}

/// Heaviside step: fires when the argument is non-negative.
#[inline]
pub fn heaviside(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LifState {
    pub u: Vector,
    pub s_prev: Vector,
}

impl LifState {
    pub fn new(width: usize) -> Self {
        LifState {
            u: Vector::zeros(width),
            s_prev: Vector::zeros(width),
        }
    }

    pub fn with_initial_potential(u0: Vector) -> Self {
        let width = u0.len();
        LifState {
            u: u0,
            s_prev: Vector::zeros(width),
        }
    }

    pub fn width(&self) -> usize {
        self.u.len()
    }

    /// Number of vectors this state keeps alive between steps.
    pub const RETAINED_VECTORS: usize = 2;
}

/// One LIF step with subtractive reset:
/// `u ← λ(u − V_th·s_prev) + drive`, `s = H(u − V_th)`.
///
/// `drive` is the full synaptic input for this step (weighted spikes, bias
/// and any connection term).
pub fn lif_step(state: &mut LifState, drive: &Vector, params: &NeuronParams) -> Result<Vector> {
    if drive.len() != state.width() {
        return Err(Error::dims("lif_step", state.width(), drive.len()));
    }
    let NeuronParams { lambda, v_th } = *params;
    let mut spikes = Vector::zeros(drive.len());
    for i in 0..drive.len() {
        let u = lambda * (state.u[i] - v_th * state.s_prev[i]) + drive[i];
        state.u[i] = u;
        spikes[i] = heaviside(u - v_th);
    }
    state.s_prev = spikes.clone();
    Ok(spikes)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SafState {
    pub a_hat: Vector,
    pub a_hat_prev: Vector,
    pub u_hat: Vector,
    pub u0: Vector,
    pub t: usize,
}

impl SafState {
    pub fn new(width: usize) -> Self {
        Self::with_initial_potential(Vector::zeros(width))
    }

    /// Starts from `Û[0] = u0` (the initial membrane potential) and `â[0] = 0`.
    pub fn with_initial_potential(u0: Vector) -> Self {
        let width = u0.len();
        SafState {
            a_hat: Vector::zeros(width),
            a_hat_prev: Vector::zeros(width),
            u_hat: u0.clone(),
            u0,
            t: 0,
        }
    }

    pub fn width(&self) -> usize {
        self.a_hat.len()
    }

    /// â, â_prev, Û and Û[0]; independent of how many steps have run.
    pub const RETAINED_VECTORS: usize = 4;

    /// Effective membrane potential `Û[t] − V_th·λ·â[t−1]` (the LIF `u[t]`).
    pub fn effective_potential(&self, params: &NeuronParams) -> Vector {
        let scale = params.v_th * params.lambda;
        Vector::from_vec(
            self.u_hat
                .iter()
                .zip(self.a_hat_prev.iter())
                .map(|(&u, &a)| u - scale * a)
                .collect(),
        )
    }
}

/// One SAF step using the recurrence form of the potential accumulation:
///
/// ```text
/// Û ← λ·Û + increment + bias
/// s  = H(Û − V_th·(λ·â + 1))
/// â ← λ·â + s
/// ```
///
/// `increment` is `W(â^l[t] − λ·â^l[t−1])` from the presynaptic layer plus
/// any connection increment, precomputed by the caller.
pub fn saf_step(
    state: &mut SafState,
    increment: &Vector,
    bias: &Vector,
    params: &NeuronParams,
) -> Result<Vector> {
    let width = state.width();
    if increment.len() != width {
        return Err(Error::dims("saf_step", width, increment.len()));
    }
    if bias.len() != width {
        return Err(Error::dims("saf_step", width, bias.len()));
    }
    let NeuronParams { lambda, v_th } = *params;
    let mut spikes = Vector::zeros(width);
    let mut next_a = Vector::zeros(width);
    for i in 0..width {
        let u_hat = lambda * state.u_hat[i] + increment[i] + bias[i];
        state.u_hat[i] = u_hat;
        let decayed = lambda * state.a_hat[i];
        let s = heaviside(u_hat - v_th * (decayed + 1.0));
        spikes[i] = s;
        next_a[i] = decayed + s;
    }
    state.a_hat_prev = std::mem::replace(&mut state.a_hat, next_a);
    state.t += 1;
    Ok(spikes)
}

/// Closed form of the potential accumulation after `t` steps:
/// `Û[t] = W·â[t] + b·Σ_{k=0}^{t−1} λ^k + λ^t·Û[0]`, where `weighted_acc`
/// is `W·â^l[t]` plus any connection term.
///
/// The bias coefficient is the sum that the recurrence actually produces
/// (one undecayed `b` at the current step); for `t = 0` it is empty.
pub fn closed_form_potential(
    weighted_acc: &Vector,
    bias: &Vector,
    u0: &Vector,
    lambda: f64,
    t: usize,
) -> Result<Vector> {
    let bias_weight = if t == 0 {
        0.0
    } else {
        geometric_weight_sum(lambda, t - 1)
    };
    let decay = lambda.powi(t as i32);
    let mut out = weighted_acc.clone();
    out.axpy(bias_weight, bias)?;
    out.axpy(decay, u0)?;
    Ok(out)
}

/// Recovers the LIF state `(u[t], s[t])` from a SAF state.
pub fn saf_to_lif(state: &SafState, params: &NeuronParams) -> Result<(Vector, Vector)> {
    if state.t == 0 {
        return Err(Error::NoStepTaken);
    }
    let u = state.effective_potential(params);
    let s = reconstruct_spikes(&state.a_hat, &state.a_hat_prev, params.lambda)?;
    Ok((u, s))
}

/// `â[t] − λ·â[t−1]`, snapped to {0, 1}. Each SAF step adds exactly one
/// Heaviside term, so the difference is binary up to rounding.
pub fn reconstruct_spikes(a_hat: &Vector, a_hat_prev: &Vector, lambda: f64) -> Result<Vector> {
    a_hat.zip_map(a_hat_prev, "reconstruct_spikes", |a, p| {
        heaviside(a - lambda * p - 0.5)
    })
}

/// Builds the SAF state equivalent to a LIF neuron with spike history
/// `s[1..=t]` and current potential `u[t]`:
/// `â[t] = Σ_τ λ^{t−τ}s[τ]`, `Û[t] = u[t] + V_th·λ·â[t−1]`.
///
/// The initial potential is not recoverable from `(s, u)` and is set to zero.
pub fn lif_to_saf(spike_history: &[Vector], u: &Vector, params: &NeuronParams) -> Result<SafState> {
    let width = u.len();
    let mut a_hat = Vector::zeros(width);
    let mut a_hat_prev = Vector::zeros(width);
    for s in spike_history {
        if s.len() != width {
            return Err(Error::dims("lif_to_saf", width, s.len()));
        }
        let next = Vector::from_vec(
            a_hat
                .iter()
                .zip(s.iter())
                .map(|(&a, &x)| params.lambda * a + x)
                .collect(),
        );
        a_hat_prev = std::mem::replace(&mut a_hat, next);
    }
    let scale = params.v_th * params.lambda;
    let u_hat = Vector::from_vec(
        u.iter()
            .zip(a_hat_prev.iter())
            .map(|(&u, &a)| u + scale * a)
            .collect(),
    );
    Ok(SafState {
        a_hat,
        a_hat_prev,
        u_hat,
        u0: Vector::zeros(width),
        t: spike_history.len(),
    })
}

/// Weighted firing rate `a[t] = â[t] / Σ_{τ=0}^{t} λ^{t−τ}`.
pub fn weighted_firing_rate(a_hat: &Vector, lambda: f64, t: usize) -> Vector {
    a_hat.scale(1.0 / geometric_weight_sum(lambda, t))
}

/// Weighted average input `m[t]` over `inputs = x[0..=t]`.
pub fn weighted_mean_input(inputs: &[Vector], lambda: f64) -> Result<Vector> {
    let first = inputs
        .first()
        .ok_or(Error::EmptyInput("weighted_mean_input needs at least one input"))?;
    let t = inputs.len() - 1;
    let mut acc = Vector::zeros(first.len());
    for (tau, x) in inputs.iter().enumerate() {
        acc.axpy(lambda.powi((t - tau) as i32), x)?;
    }
    Ok(acc.scale(1.0 / geometric_weight_sum(lambda, t)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Rng;
    use proptest::prelude::*;

    fn scalar(x: f64) -> Vector {
        Vector::from_vec(vec![x])
    }

    #[test]
    fn lif_zero_input_stays_silent() {
        let mut st = LifState::new(3);
        let s = lif_step(&mut st, &Vector::zeros(3), &NeuronParams::default()).unwrap();
        assert_eq!(s, Vector::zeros(3));
        assert_eq!(st.u, Vector::zeros(3));
    }

    #[test]
    fn lif_hand_unrolled_trace() {
        let p = NeuronParams::new(0.5, 1.0).unwrap();
        let mut st = LifState::new(1);
        let mut us = vec![];
        let mut ss = vec![];
        for _ in 0..4 {
            let s = lif_step(&mut st, &scalar(0.6), &p).unwrap();
            us.push(st.u[0]);
            ss.push(s[0]);
        }
        let expect_u = [0.6, 0.9, 1.05, 0.625];
        for (u, e) in us.iter().zip(expect_u) {
            assert!((u - e).abs() < 1e-12, "{u} vs {e}");
        }
        assert_eq!(ss, vec![0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn lif_if_neuron_fires_every_step() {
        let p = NeuronParams::new(1.0, 1.0).unwrap();
        let mut st = LifState::new(1);
        for _ in 0..5 {
            let s = lif_step(&mut st, &scalar(1.0), &p).unwrap();
            assert_eq!(s[0], 1.0);
            assert_eq!(st.u[0], 1.0);
        }
    }

    #[test]
    fn lif_dimension_mismatch() {
        let mut st = LifState::new(2);
        assert!(lif_step(&mut st, &Vector::zeros(3), &NeuronParams::default()).is_err());
    }

    #[test]
    fn saf_zero_input_stays_silent() {
        let mut st = SafState::new(2);
        for _ in 0..3 {
            let s = saf_step(&mut st, &Vector::zeros(2), &Vector::zeros(2), &NeuronParams::default()).unwrap();
            assert_eq!(s, Vector::zeros(2));
        }
        assert_eq!(st.a_hat, Vector::zeros(2));
    }

    #[test]
    fn saf_hand_unrolled_trace_matches_lif() {
        // Constant drive 0.6 from a presynaptic unit whose increment W·Δâ is
        // 0.6 per step, zero bias.
        let p = NeuronParams::new(0.5, 1.0).unwrap();
        let mut st = SafState::new(1);
        let mut a = vec![];
        let mut s = vec![];
        for _ in 0..4 {
            s.push(saf_step(&mut st, &scalar(0.6), &scalar(0.0), &p).unwrap()[0]);
            a.push(st.a_hat[0]);
            if st.t == 3 {
                let (u, spike) = saf_to_lif(&st, &p).unwrap();
                assert!((u[0] - 1.05).abs() < 1e-12);
                assert_eq!(spike[0], 1.0);
            }
        }
        assert_eq!(a, vec![0.0, 0.0, 1.0, 0.5]);
        assert_eq!(s, vec![0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn saf_if_accumulation_counts_steps() {
        let p = NeuronParams::new(1.0, 1.0).unwrap();
        let mut st = SafState::new(1);
        for t in 1..=6 {
            saf_step(&mut st, &scalar(1.0), &scalar(0.0), &p).unwrap();
            assert_eq!(st.a_hat[0], t as f64);
        }
    }

    #[test]
    fn saf_to_lif_needs_a_step() {
        let st = SafState::new(1);
        assert!(matches!(saf_to_lif(&st, &NeuronParams::default()), Err(Error::NoStepTaken)));
    }

    #[test]
    fn saf_to_lif_zero_drive_decays_initial_potential() {
        let p = NeuronParams::new(0.5, 1.0).unwrap();
        let mut st = SafState::with_initial_potential(scalar(0.8));
        for _ in 0..3 {
            saf_step(&mut st, &scalar(0.0), &scalar(0.0), &p).unwrap();
        }
        let (u, s) = saf_to_lif(&st, &p).unwrap();
        assert!((u[0] - 0.8 * 0.125).abs() < 1e-15);
        assert_eq!(s[0], 0.0);
    }

    #[test]
    fn saf_to_lif_single_if_spike() {
        let p = NeuronParams::new(1.0, 1.0).unwrap();
        let mut st = SafState::new(1);
        saf_step(&mut st, &scalar(1.5), &scalar(0.0), &p).unwrap();
        let (_, s) = saf_to_lif(&st, &p).unwrap();
        assert_eq!(s[0], 1.0);
    }

    #[test]
    fn lif_to_saf_cases() {
        let p = NeuronParams::new(0.5, 1.0).unwrap();
        let empty = lif_to_saf(&[], &Vector::zeros(2), &p).unwrap();
        assert_eq!(empty.a_hat, Vector::zeros(2));
        let hist = vec![scalar(0.0), scalar(0.0), scalar(1.0)];
        let st = lif_to_saf(&hist, &scalar(0.2), &p).unwrap();
        assert_eq!(st.a_hat[0], 1.0);
        assert_eq!(st.t, 3);
    }

    #[test]
    fn firing_rate_and_mean_input() {
        assert_eq!(weighted_firing_rate(&Vector::zeros(2), 0.5, 3), Vector::zeros(2));
        let r = weighted_firing_rate(&scalar(3.0), 1.0, 5);
        assert!((r[0] - 0.5).abs() < 1e-15);
        let r = weighted_firing_rate(&scalar(1.75), 0.5, 2);
        assert_eq!(r[0], 1.0);

        let c = weighted_mean_input(&[scalar(0.3), scalar(0.3), scalar(0.3)], 0.5).unwrap();
        assert!((c[0] - 0.3).abs() < 1e-15);
        let m = weighted_mean_input(&[scalar(1.0), scalar(2.0), scalar(6.0)], 1.0).unwrap();
        assert!((m[0] - 3.0).abs() < 1e-15);
        let m = weighted_mean_input(&[scalar(0.0), scalar(1.0)], 0.5).unwrap();
        assert!((m[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!(weighted_mean_input(&[], 0.5).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(NeuronParams::new(0.0, 1.0).is_err());
        assert!(NeuronParams::new(1.2, 1.0).is_err());
        assert!(NeuronParams::new(0.5, 0.0).is_err());
        assert!(NeuronParams::new(1.0, 2.0).is_ok());
    }

    proptest! {
        /// Single layer driven by random weighted inputs: LIF spikes equal
        /// SAF spikes off the threshold margin, and the effective potential recovers `u`.
        #[test]
        fn lif_and_saf_agree(seed in any::<u64>(), lambda_half in any::<bool>(), steps in 1usize..32) {
            let lambda = if lambda_half { 0.5 } else { 1.0 };
            let p = NeuronParams::new(lambda, 1.0).unwrap();
            let mut rng = Rng::new(seed);
            let width = 5;
            let bias = rng.uniform_vector(width, 0.0, 0.3);
            let mut lif = LifState::new(width);
            let mut saf = SafState::new(width);
            let mut history = vec![];
            for _ in 0..steps {
                let ws = rng.uniform_vector(width, -0.5, 1.2);
                let drive = ws.add(&bias).unwrap();
                let s_lif = lif_step(&mut lif, &drive, &p).unwrap();
                let s_saf = saf_step(&mut saf, &ws, &bias, &p).unwrap();
                for i in 0..width {
                    if (lif.u[i] - p.v_th).abs() > 1e-9 {
                        prop_assert_eq!(s_lif[i], s_saf[i]);
                    }
                }
                let (u, s) = saf_to_lif(&saf, &p).unwrap();
                for i in 0..width {
                    prop_assert!((u[i] - lif.u[i]).abs() <= 1e-10 * (1.0 + lif.u[i].abs()));
                }
                prop_assert_eq!(&s, &s_saf);
                history.push(s_saf);
                // each step adds exactly one Heaviside term
                for i in 0..width {
                    let inc = saf.a_hat[i] - lambda * saf.a_hat_prev[i];
                    prop_assert!(inc == 0.0 || inc == 1.0);
                }
            }
            let back = lif_to_saf(&history, &lif.u, &p).unwrap();
            prop_assert_eq!(&back.a_hat, &saf.a_hat);
        }

        #[test]
        fn if_accumulation_is_monotone(seed in any::<u64>()) {
            let p = NeuronParams::new(1.0, 1.0).unwrap();
            let mut rng = Rng::new(seed);
            let mut st = SafState::new(3);
            let mut last = Vector::zeros(3);
            for _ in 0..20 {
                let inc = rng.uniform_vector(3, -1.0, 2.0);
                saf_step(&mut st, &inc, &Vector::zeros(3), &p).unwrap();
                for i in 0..3 {
                    prop_assert!(st.a_hat[i] >= last[i]);
                }
                last = st.a_hat.clone();
            }
        }
    }
}
