use crate::data::{Dataset, Encoding};
use crate::error::{Error, Result};
use crate::grad::{
    grad_ottt_a, grad_ottt_o, grad_saf_e, grad_saf_f, grad_spike_representation, DerivativeMode, Engine, GradientSet,
};
use crate::lab::{gradient_similarity, Similarity};
use crate::par::Execution;
use crate::surrogate::{LossKind, LossSpec};
use crate::topology::{forward_lif, forward_saf, NetworkSpec};

use super::infer::{encode, stream_seed, EVAL_STREAM};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompareOptions {
    pub steps: usize,
    pub encoding: Encoding,
    pub seed: u64,
    pub alpha: f64,
    /// Step used by the per-step engines; `None` means the last step.
    pub t: Option<usize>,
    /// Number of samples from the front of the dataset.
    pub samples: usize,
    /// Minibatch size for the per-batch similarities.
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub a: Engine,
    pub b: Engine,
    /// Similarity of the sample-averaged gradients.
    pub mean_gradient: Similarity,
    /// Per-sample similarities.
    pub per_sample: Vec<Similarity>,
    /// Similarities of consecutive minibatch-averaged gradients.
    pub per_batch: Vec<Similarity>,
}

fn mean_corr(sims: &[Similarity]) -> Option<f64> {
    let c: Vec<f64> = sims.iter().filter_map(|s| s.corr).collect();
    (!c.is_empty()).then(|| c.iter().sum::<f64>() / c.len() as f64)
}

fn mean_mae(sims: &[Similarity]) -> f64 {
    sims.iter().map(|s| s.mae).sum::<f64>() / sims.len().max(1) as f64
}

impl CompareReport {
    /// Mean of the defined per-sample correlations.
    pub fn mean_corr(&self) -> Option<f64> {
        mean_corr(&self.per_sample)
    }

    pub fn mean_mae(&self) -> f64 {
        mean_mae(&self.per_sample)
    }

    /// Mean of the defined per-batch correlations.
    pub fn batch_corr(&self) -> Option<f64> {
        mean_corr(&self.per_batch)
    }

    pub fn batch_mae(&self) -> f64 {
        mean_mae(&self.per_batch)
    }
}

fn averaged(spec: &NetworkSpec, engine: Engine, grads: &[&GradientSet]) -> Result<GradientSet> {
    let mut mean = GradientSet::zeros(spec, engine, None);
    for g in grads {
        mean.add_assign(g)?;
    }
    mean.scale(1.0 / grads.len().max(1) as f64);
    Ok(mean)
}

/// Gradient of one engine for one encoded sample. SAF engines run on a SAF
/// trace and OTTT engines on a LIF trace of the same inputs.
pub fn engine_gradient(
    spec: &NetworkSpec,
    inputs: &[crate::math::Vector],
    label: usize,
    engine: Engine,
    t: Option<usize>,
    alpha: f64,
) -> Result<GradientSet> {
    let classes = spec.output_size();
    let per_step = LossSpec::new(LossKind::PerStep, alpha, classes)?;
    let last = LossSpec::new(LossKind::Final, alpha, classes)?;
    let t = t.unwrap_or(inputs.len());
    match engine {
        Engine::SafE => grad_saf_e(&forward_saf(spec, inputs)?, t, label, spec, &per_step),
        Engine::SafF => grad_saf_f(&forward_saf(spec, inputs)?, label, spec, &last, DerivativeMode::Surrogate),
        Engine::OtttO => grad_ottt_o(&forward_lif(spec, inputs)?, t, label, spec, &per_step),
        Engine::OtttA => grad_ottt_a(&forward_lif(spec, inputs)?, label, spec, &per_step),
        Engine::SpikeRepresentation => grad_spike_representation(&forward_saf(spec, inputs)?, label, spec, &last),
        Engine::Oracle => Err(Error::InvalidParameter(
            "the oracle is only available through the equivalence suites".into(),
        )),
    }
}

pub fn compare_grads(
    spec: &NetworkSpec,
    data: &Dataset,
    a: Engine,
    b: Engine,
    opts: &CompareOptions,
    exec: Execution,
) -> Result<CompareReport> {
    let n = opts.samples.min(data.len());
    if n == 0 {
        return Err(Error::EmptyInput("compare_grads needs at least one sample"));
    }
    if opts.batch_size == 0 {
        return Err(Error::InvalidParameter("compare_grads needs a positive batch size".into()));
    }
    let pairs = exec
        .map(n, |i| {
            let s = &data.samples[i];
            let inputs = encode(&s.features, opts.encoding, opts.steps, stream_seed(opts.seed, EVAL_STREAM, i as u64));
            let ga = engine_gradient(spec, &inputs, s.label, a, opts.t, opts.alpha)?;
            let gb = engine_gradient(spec, &inputs, s.label, b, opts.t, opts.alpha)?;
            Ok((ga, gb))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let per_sample = pairs
        .iter()
        .map(|(ga, gb)| gradient_similarity(ga, gb))
        .collect::<Result<Vec<_>>>()?;
    let similarity_of = |chunk: &[(GradientSet, GradientSet)]| -> Result<Similarity> {
        let ga: Vec<&GradientSet> = chunk.iter().map(|p| &p.0).collect();
        let gb: Vec<&GradientSet> = chunk.iter().map(|p| &p.1).collect();
        gradient_similarity(&averaged(spec, a, &ga)?, &averaged(spec, b, &gb)?)
    };
    let per_batch = pairs
        .chunks(opts.batch_size)
        .map(similarity_of)
        .collect::<Result<Vec<_>>>()?;
    Ok(CompareReport {
        a,
        b,
        mean_gradient: similarity_of(&pairs)?,
        per_sample,
        per_batch,
    })
}
