use std::fmt;

use crate::error::{Error, Result};
use crate::math::{Rng, Vector};
use crate::neuron::NeuronParams;
use crate::topology::{forward_lif, ConnectionKind, ConnectionPlan, InitScheme, NetworkSpec};

use super::Suite;

/// Minimum overall firing rate of a trial network; sparser draws are
/// resampled.
pub const FIRING_FLOOR: f64 = 0.02;
/// Resampling budget before a trial is declared dead.
pub const MAX_RESAMPLES: usize = 200;
pub const DEFAULT_MARGIN_GUARD: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InputMode {
    /// The same real-valued vector, drawn from `U[0, scale]`, at every step.
    Constant,
    /// Independent Bernoulli spikes with the given probability.
    RandomSpikes(f64),
}

impl fmt::Display for InputMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InputMode::Constant => f.write_str("constant"),
            InputMode::RandomSpikes(p) => write!(f, "spikes:{p}"),
        }
    }
}

/// Everything needed to rebuild a randomized trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialConfig {
    pub seed: u64,
    pub layer_sizes: Vec<usize>,
    pub steps: usize,
    pub lambda: f64,
    pub v_th: f64,
    pub beta: f64,
    pub connection: ConnectionPlan,
    pub input: InputMode,
    /// Upper end of the constant-input range, in units of `V_th`.
    pub input_scale: f64,
    pub alpha: f64,
    pub margin_guard: f64,
}

impl fmt::Display for TrialConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sizes: Vec<String> = self.layer_sizes.iter().map(ToString::to_string).collect();
        write!(
            f,
            "seed={} sizes={} T={} lambda={} v_th={} beta={} connection={}",
            self.seed,
            sizes.join("-"),
            self.steps,
            self.lambda,
            self.v_th,
            self.beta,
            self.connection.kind
        )?;
        if self.connection.kind != ConnectionKind::None {
            write!(f, "(p={},q={})", self.connection.p, self.connection.q)?;
        }
        write!(
            f,
            " input={} input_scale={} alpha={} margin_guard={}",
            self.input, self.input_scale, self.alpha, self.margin_guard
        )
    }
}

fn random_plan(rng: &mut Rng, kind: ConnectionKind, depth: usize) -> ConnectionPlan {
    match kind {
        ConnectionKind::None => ConnectionPlan::NONE,
        ConnectionKind::Feedforward => {
            let p = rng.int_range(0, depth - 1);
            let q = rng.int_range(p, depth - 1);
            ConnectionPlan { kind, p, q }
        }
        ConnectionKind::Feedback => {
            let p = rng.int_range(1, depth);
            let q = rng.int_range(0, p - 1);
            ConnectionPlan { kind, p, q }
        }
    }
}

fn random_kind(rng: &mut Rng) -> ConnectionKind {
    [ConnectionKind::None, ConnectionKind::Feedforward, ConnectionKind::Feedback][rng.int_range(0, 2)]
}

fn sizes(rng: &mut Rng, depth: usize, lo: usize, hi: usize, out_lo: usize) -> Vec<usize> {
    let mut s: Vec<usize> = (0..=depth).map(|_| rng.int_range(lo, hi)).collect();
    let last = s.len() - 1;
    s[last] = s[last].max(out_lo);
    s
}

impl TrialConfig {
    /// Draws the configuration of trial `seed` for `suite`.
    pub fn for_suite(suite: Suite, seed: u64) -> TrialConfig {
        let mut rng = Rng::new(seed ^ suite.salt());
        let lambda = if rng.bernoulli(0.5) { 1.0 } else { 0.5 };
        let base = |layer_sizes: Vec<usize>, steps: usize, v_th: f64, connection: ConnectionPlan, input: InputMode| {
            TrialConfig {
                seed,
                layer_sizes,
                steps,
                lambda,
                v_th,
                beta: 4.0,
                connection,
                input,
                input_scale: 1.5,
                alpha: 0.05,
                margin_guard: DEFAULT_MARGIN_GUARD,
            }
        };
        match suite {
            Suite::Forward => {
                let depth = rng.int_range(2, 5);
                let sizes = sizes(&mut rng, depth, 1, 64, 1);
                let kind = random_kind(&mut rng);
                let plan = random_plan(&mut rng, kind, depth);
                let steps = rng.int_range(1, 32);
                let input = if rng.bernoulli(0.3) {
                    InputMode::RandomSpikes(rng.uniform(0.1, 0.6))
                } else {
                    InputMode::Constant
                };
                let v_th = if rng.bernoulli(0.5) { 1.0 } else { 2.0 };
                base(sizes, steps, v_th, plan, input)
            }
            Suite::PerStep(kind) => {
                let depth = rng.int_range(2, 4);
                let sizes = sizes(&mut rng, depth, 2, 24, 2);
                let plan = random_plan(&mut rng, kind, depth);
                let steps = rng.int_range(1, 16);
                let input = if rng.bernoulli(0.3) {
                    InputMode::RandomSpikes(rng.uniform(0.1, 0.6))
                } else {
                    InputMode::Constant
                };
                let v_th = if rng.bernoulli(0.5) { 1.0 } else { 2.0 };
                base(sizes, steps, v_th, plan, input)
            }
            Suite::FinalStep => {
                let depth = rng.int_range(2, 4);
                let sizes = sizes(&mut rng, depth, 2, 24, 2);
                let kind = if seed.is_multiple_of(2) {
                    ConnectionKind::None
                } else {
                    ConnectionKind::Feedforward
                };
                let plan = random_plan(&mut rng, kind, depth);
                let v_th = if (seed / 2).is_multiple_of(2) { 1.0 } else { 2.0 };
                base(sizes, 32, v_th, plan, InputMode::Constant)
            }
            Suite::FeedbackDirection => {
                let depth = rng.int_range(2, 3);
                let sizes = sizes(&mut rng, depth, 2, 16, 2);
                let plan = random_plan(&mut rng, ConnectionKind::Feedback, depth);
                base(sizes, 64, 1.0, plan, InputMode::Constant)
            }
            Suite::Oracle => {
                let depth = rng.int_range(1, 3);
                let sizes = sizes(&mut rng, depth, 1, 4, 2);
                let kind = random_kind(&mut rng);
                let plan = random_plan(&mut rng, kind, depth);
                let steps = rng.int_range(1, 4);
                let input = if rng.bernoulli(0.3) {
                    InputMode::RandomSpikes(0.5)
                } else {
                    InputMode::Constant
                };
                let mut cfg = base(sizes, steps, 1.0, plan, input);
                // Short runs need a stronger drive to fire at all.
                cfg.input_scale = 3.0;
                cfg
            }
        }
    }

    pub fn params(&self) -> Result<NeuronParams> {
        NeuronParams::new(self.lambda, self.v_th)
    }
}

/// A concrete network, input sequence and label built from a [`TrialConfig`].
#[derive(Debug, Clone)]
pub struct Instance {
    pub spec: NetworkSpec,
    pub inputs: Vec<Vector>,
    pub label: usize,
    /// Draws rejected by the firing-rate floor.
    pub resamples: usize,
    pub firing_rate: f64,
}

fn draw_inputs(cfg: &TrialConfig, rng: &mut Rng, width: usize) -> Vec<Vector> {
    match cfg.input {
        InputMode::Constant => {
            let x = rng.uniform_vector(width, 0.0, cfg.input_scale * cfg.v_th);
            vec![x; cfg.steps]
        }
        InputMode::RandomSpikes(p) => (0..cfg.steps)
            .map(|_| Vector::from_vec((0..width).map(|_| if rng.bernoulli(p) { 1.0 } else { 0.0 }).collect()))
            .collect(),
    }
}

/// Mean firing rate over all neuron layers, weighted by width.
fn overall_rate(spec: &NetworkSpec, inputs: &[Vector]) -> Result<f64> {
    let trace = forward_lif(spec, inputs)?;
    let rates = trace.firing_rates()?;
    let widths = &spec.layer_sizes[1..];
    let total: usize = widths.iter().sum();
    Ok(rates.iter().zip(widths).map(|(r, &w)| r * w as f64).sum::<f64>() / total as f64)
}

impl Instance {
    /// Builds the instance, resampling parameters and inputs until the
    /// network fires at [`FIRING_FLOOR`] or more.
    pub fn build(cfg: &TrialConfig) -> Result<Instance> {
        let params = cfg.params()?;
        let mut rng = Rng::new(cfg.seed);
        let init = InitScheme {
            bias_high: 0.3 * cfg.v_th,
            ..InitScheme::default()
        };
        let classes = *cfg.layer_sizes.last().ok_or_else(|| Error::Config("empty layer_sizes".into()))?;
        for resamples in 0..=MAX_RESAMPLES {
            let spec = NetworkSpec::random(&cfg.layer_sizes, params, cfg.beta, cfg.connection, &init, &mut rng)?;
            let inputs = draw_inputs(cfg, &mut rng, cfg.layer_sizes[0]);
            let label = rng.int_range(0, classes - 1);
            let rate = overall_rate(&spec, &inputs)?;
            if rate >= FIRING_FLOOR {
                return Ok(Instance {
                    spec,
                    inputs,
                    label,
                    resamples,
                    firing_rate: rate,
                });
            }
        }
        Err(Error::Config(format!(
            "no draw reached the {FIRING_FLOOR} firing floor after {MAX_RESAMPLES} resamples: {cfg}"
        )))
    }
}
