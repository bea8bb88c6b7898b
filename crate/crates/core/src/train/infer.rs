use crate::data::{Dataset, Encoding};
use crate::error::Result;
use crate::math::{geometric_weight_sum, Rng, Vector};
use crate::neuron::reconstruct_spikes;
use crate::par::Execution;
use crate::topology::{ForwardTrace, LifRunner, NetworkSpec, SafRunner, TraceMode};

/// Seed for an independent stream derived from a base seed and two tags.
pub fn stream_seed(base: u64, a: u64, b: u64) -> u64 {
    let mut z = base ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Presents `x` for `steps` steps: as constant current, or as Bernoulli
/// spikes with probability `clamp(x, 0, 1)` drawn from `seed`.
pub fn encode(x: &Vector, encoding: Encoding, steps: usize, seed: u64) -> Vec<Vector> {
    match encoding {
        Encoding::Constant => vec![x.clone(); steps],
        Encoding::Spike => {
            let mut rng = Rng::new(seed);
            (0..steps)
                .map(|_| {
                    Vector::from_vec(
                        x.iter()
                            .map(|&p| if rng.bernoulli(p.clamp(0.0, 1.0)) { 1.0 } else { 0.0 })
                            .collect(),
                    )
                })
                .collect()
        }
    }
}

/// How inputs are presented during evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub steps: usize,
    pub encoding: Encoding,
    pub seed: u64,
}

/// Tag for evaluation input streams, distinct from training epochs.
pub(crate) const EVAL_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct SampleOutcome {
    pub prediction: usize,
    /// Weighted firing rate `â^N[T]/Λ` of the output layer.
    pub rate: Vector,
    /// Spike counts per neuron layer.
    pub spikes: Vec<f64>,
    /// Smallest `|u − V_th|` seen over all steps and neurons.
    pub min_margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub mode: TraceMode,
    pub outcomes: Vec<SampleOutcome>,
    pub accuracy: f64,
    /// Per neuron layer, `spikes / (T·width·samples)`.
    pub firing_rates: Vec<f64>,
    /// All spikes over all neurons, steps and samples.
    pub total_firing_rate: f64,
}

impl Evaluation {
    pub fn predictions(&self) -> Vec<usize> {
        self.outcomes.iter().map(|o| o.prediction).collect()
    }
}

fn min_abs_gap(u: &Vector, v_th: f64) -> f64 {
    u.iter().fold(f64::INFINITY, |m, &x| m.min((x - v_th).abs()))
}

/// Streams one sample through the network and reads out the class with the
/// largest weighted output firing rate (lowest index on ties).
pub fn run_sample(spec: &NetworkSpec, inputs: &[Vector], mode: TraceMode) -> Result<SampleOutcome> {
    let n = spec.depth();
    let lambda = spec.params.lambda;
    let v_th = spec.params.v_th;
    let mut spikes = vec![0.0; n];
    let mut min_margin = f64::INFINITY;
    let top = match mode {
        TraceMode::Saf => {
            let mut r = SafRunner::new(spec);
            for x in inputs {
                r.step(spec, x)?;
                for (l, st) in r.layers().iter().enumerate() {
                    spikes[l] += reconstruct_spikes(&st.a_hat, &st.a_hat_prev, lambda)?.sum();
                    min_margin = min_margin.min(min_abs_gap(&st.effective_potential(&spec.params), v_th));
                }
            }
            r.layers()[n - 1].a_hat.clone()
        }
        TraceMode::Lif => {
            let mut r = LifRunner::new(spec, false);
            let mut acc = Vector::zeros(spec.output_size());
            for x in inputs {
                r.step(spec, x)?;
                for (l, st) in r.layers().iter().enumerate() {
                    spikes[l] += st.s_prev.sum();
                    min_margin = min_margin.min(min_abs_gap(&st.u, v_th));
                }
                acc = acc.zip_map(&r.layers()[n - 1].s_prev, "output accumulation", |a, s| lambda * a + s)?;
            }
            acc
        }
    };
    let rate = top.scale(1.0 / geometric_weight_sum(lambda, inputs.len()));
    Ok(SampleOutcome {
        prediction: rate.argmax().unwrap_or(0),
        rate,
        spikes,
        min_margin,
    })
}

pub fn evaluate(
    spec: &NetworkSpec,
    data: &Dataset,
    opts: &EvalOptions,
    mode: TraceMode,
    exec: Execution,
) -> Result<Evaluation> {
    let outcomes = exec
        .map(data.len(), |i| {
            let s = &data.samples[i];
            let inputs = encode(&s.features, opts.encoding, opts.steps, stream_seed(opts.seed, EVAL_STREAM, i as u64));
            run_sample(spec, &inputs, mode)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let correct = outcomes
        .iter()
        .zip(&data.samples)
        .filter(|(o, s)| o.prediction == s.label)
        .count();
    let n = spec.depth();
    let mut layer_spikes = vec![0.0; n];
    for o in &outcomes {
        for (acc, s) in layer_spikes.iter_mut().zip(&o.spikes) {
            *acc += s;
        }
    }
    let denom = (opts.steps * data.len()) as f64;
    let firing_rates = if data.is_empty() {
        vec![0.0; n]
    } else {
        layer_spikes
            .iter()
            .zip(&spec.layer_sizes[1..])
            .map(|(s, &w)| s / (denom * w as f64))
            .collect()
    };
    let neurons: usize = spec.layer_sizes[1..].iter().sum();
    let total_firing_rate = if data.is_empty() {
        0.0
    } else {
        layer_spikes.iter().sum::<f64>() / (denom * neurons as f64)
    };
    Ok(Evaluation {
        mode,
        accuracy: if data.is_empty() { 0.0 } else { correct as f64 / data.len() as f64 },
        outcomes,
        firing_rates,
        total_firing_rate,
    })
}

/// SAF-mode and LIF-mode inference on the same data.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceReport {
    pub saf: Evaluation,
    pub lif: Evaluation,
    /// `lif − saf`.
    pub accuracy_delta: f64,
    pub total_rate_delta: f64,
    /// Samples whose predictions differ between the modes.
    pub disagreements: usize,
}

pub fn infer_lif(spec: &NetworkSpec, data: &Dataset, opts: &EvalOptions, exec: Execution) -> Result<InferenceReport> {
    let saf = evaluate(spec, data, opts, TraceMode::Saf, exec)?;
    let lif = evaluate(spec, data, opts, TraceMode::Lif, exec)?;
    let disagreements = saf
        .outcomes
        .iter()
        .zip(&lif.outcomes)
        .filter(|(a, b)| a.prediction != b.prediction)
        .count();
    Ok(InferenceReport {
        accuracy_delta: lif.accuracy - saf.accuracy,
        total_rate_delta: lif.total_firing_rate - saf.total_firing_rate,
        disagreements,
        saf,
        lif,
    })
}

/// Per-layer firing rates of a recorded forward pass.
pub fn firing_rate_report(trace: &ForwardTrace) -> Result<Vec<f64>> {
    trace.firing_rates()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_two_moons;
    use crate::neuron::NeuronParams;
    use crate::topology::{forward_lif, forward_saf, ConnectionPlan, InitScheme};

    fn opts() -> EvalOptions {
        EvalOptions {
            steps: 6,
            encoding: Encoding::Constant,
            seed: 0,
        }
    }

    #[test]
    fn zero_weight_net_predicts_class_zero() {
        let spec = NetworkSpec::zeroed(&[2, 4, 3], NeuronParams::default(), 4.0, ConnectionPlan::NONE).unwrap();
        let data = make_two_moons(20, 0.1, 1).unwrap();
        let mut data3 = data.clone();
        data3.num_classes = 3;
        let ev = evaluate(&spec, &data3, &opts(), TraceMode::Lif, Execution::Sequential).unwrap();
        assert!(ev.predictions().iter().all(|&p| p == 0));
        assert_eq!(ev.total_firing_rate, 0.0);
    }

    #[test]
    fn random_net_modes_agree_on_guarded_samples() {
        let mut rng = Rng::new(4);
        let init = InitScheme {
            weight_gain: 3.0,
            ..InitScheme::default()
        };
        let spec = NetworkSpec::random(&[2, 16, 16, 2], NeuronParams::default(), 4.0, ConnectionPlan::NONE, &init, &mut rng)
            .unwrap();
        let data = make_two_moons(200, 0.1, 2).unwrap();
        let rep = infer_lif(&spec, &data, &opts(), Execution::Parallel).unwrap();
        let mut checked = 0;
        for (a, b) in rep.saf.outcomes.iter().zip(&rep.lif.outcomes) {
            if a.min_margin > 1e-9 && b.min_margin > 1e-9 {
                assert_eq!(a.prediction, b.prediction);
                assert_eq!(a.spikes, b.spikes);
                checked += 1;
            }
        }
        assert!(checked > 150);
        assert!(rep.saf.total_firing_rate > 0.0);
    }

    #[test]
    fn rates_silent_saturated_and_cross_mode() {
        let params = NeuronParams::default();
        let silent = NetworkSpec::zeroed(&[1, 2], params, 4.0, ConnectionPlan::NONE).unwrap();
        let x = vec![Vector::filled(1, 1.0); 5];
        assert_eq!(firing_rate_report(&forward_lif(&silent, &x).unwrap()).unwrap(), vec![0.0]);

        let mut hot = silent.clone();
        hot.biases[0] = Vector::filled(2, 10.0);
        assert_eq!(firing_rate_report(&forward_saf(&hot, &x).unwrap()).unwrap(), vec![1.0]);

        let mut rng = Rng::new(9);
        let spec = NetworkSpec::random(&[3, 8, 4], params, 4.0, ConnectionPlan::NONE, &InitScheme::default(), &mut rng)
            .unwrap();
        let xs: Vec<Vector> = (0..12).map(|_| rng.uniform_vector(3, 0.0, 2.0)).collect();
        let a = firing_rate_report(&forward_saf(&spec, &xs).unwrap()).unwrap();
        let b = firing_rate_report(&forward_lif(&spec, &xs).unwrap()).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|r| (0.0..=1.0).contains(r)));
    }

    #[test]
    fn spike_encoding_is_seeded() {
        let x = Vector::from_vec(vec![0.0, 0.5, 1.0, 2.0]);
        let a = encode(&x, Encoding::Spike, 50, 3);
        assert_eq!(a, encode(&x, Encoding::Spike, 50, 3));
        assert!(a.iter().all(|s| s[0] == 0.0 && s[2] == 1.0 && s[3] == 1.0));
        let mid: f64 = a.iter().map(|s| s[1]).sum();
        assert!(mid > 10.0 && mid < 40.0);
    }
}
