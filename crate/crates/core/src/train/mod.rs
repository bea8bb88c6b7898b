//! Minibatch training for the four engines, inference, metrics and the
//! per-iteration benchmark.
//!
//! SAF-E and OTTT_O step the optimizer after every time step of a minibatch,
//! with the next step of the forward pass using the updated parameters.
//! SAF-F and OTTT_A step once per minibatch.

mod bench;
mod compare;
mod infer;
mod metrics;
mod optimizer;

pub use bench::{run_bench, BenchConfig, BenchReport, BenchRow, BENCH_ENGINES};
pub use compare::{compare_grads, engine_gradient, CompareOptions, CompareReport};
pub use infer::{encode, evaluate, firing_rate_report, infer_lif, run_sample, stream_seed, EvalOptions, Evaluation, InferenceReport, SampleOutcome};
pub use metrics::{read_checkpoint, write_checkpoint, EpochMetrics, RunMetrics};
pub use optimizer::OptimizerState;

use std::time::Instant;

use crate::data::{Dataset, ExperimentConfig, TrainEngine};
use crate::error::{Error, Result};
use crate::grad::{grad_ottt_o_step, grad_saf_e_step, grad_saf_f_step, DerivativeMode, Engine, GradientSet};
use crate::math::{Rng, Vector};
use crate::neuron::NeuronParams;
use crate::par::Execution;
use crate::surrogate::{LossKind, LossSpec};
use crate::topology::{count_state_buffers, LifRunner, NetworkSpec, SafRunner, StateMode, TraceMode};

/// Stream tags for [`stream_seed`].
const INIT_STREAM: u64 = 0;
const ORDER_STREAM: u64 = 1;
const INPUT_STREAM: u64 = 2;

enum Runner {
    Saf(SafRunner),
    Ottt(LifRunner),
}

struct Worker {
    runner: Runner,
    inputs: Vec<Vector>,
    label: usize,
}

/// Training state shared by [`train`] and the benchmark.
pub struct Trainer {
    pub spec: NetworkSpec,
    pub optimizer: OptimizerState,
    pub engine: TrainEngine,
    pub accumulate: bool,
    pub freeze_within_sequence: bool,
    pub steps: usize,
    loss: LossSpec,
    exec: Execution,
}

impl Trainer {
    pub fn new(spec: NetworkSpec, cfg: &ExperimentConfig, num_classes: usize, total_steps: usize, exec: Execution) -> Result<Self> {
        let kind = if cfg.engine == TrainEngine::SafF {
            LossKind::Final
        } else {
            LossKind::PerStep
        };
        Ok(Trainer {
            optimizer: OptimizerState::new(&spec, cfg.lr, cfg.momentum, total_steps, cfg.schedule),
            spec,
            engine: cfg.engine,
            accumulate: cfg.accumulate,
            freeze_within_sequence: cfg.freeze_within_sequence,
            steps: cfg.steps,
            loss: LossSpec::new(kind, cfg.alpha, num_classes)?,
            exec,
        })
    }

    /// Optimizer steps taken per minibatch.
    pub fn steps_per_iteration(&self) -> usize {
        if self.engine.is_per_step() && !self.accumulate {
            self.steps
        } else {
            1
        }
    }

    fn check(&self, loss: f64, grad: &GradientSet, epoch: usize, iteration: usize) -> Result<()> {
        if loss.is_finite() && grad.is_finite() {
            Ok(())
        } else {
            Err(Error::Diverged {
                epoch,
                iteration,
                last_good: Box::new(self.spec.clone()),
            })
        }
    }

    /// Applies an update, restoring the previous parameters and reporting
    /// divergence if any become non-finite.
    fn apply(&mut self, grad: &GradientSet, epoch: usize, iteration: usize) -> Result<()> {
        let before = self.spec.clone();
        self.optimizer.apply(&mut self.spec, grad)?;
        let mut finite = true;
        self.spec.for_each_param_mut(|p| finite &= p.iter().all(|x| x.is_finite()));
        if finite {
            Ok(())
        } else {
            self.spec = before;
            Err(Error::Diverged {
                epoch,
                iteration,
                last_good: Box::new(self.spec.clone()),
            })
        }
    }

    /// One minibatch; `inputs[k]` holds the encoded steps of sample `k`.
    /// Returns the summed per-sample loss.
    pub fn iteration(&mut self, batch: Vec<(Vec<Vector>, usize)>, epoch: usize, iteration: usize) -> Result<f64> {
        if batch.is_empty() {
            return Ok(0.0);
        }
        let inv_b = 1.0 / batch.len() as f64;
        if !self.engine.is_per_step() {
            let (spec, loss, steps, engine) = (&self.spec, &self.loss, self.steps, self.engine);
            let results = self
                .exec
                .map(batch.len(), |k| full_sequence_grad(spec, &batch[k].0, batch[k].1, loss, steps, engine));
            let (grad, total) = reduce(spec, engine_tag(engine), results)?;
            let mut grad = grad;
            grad.scale(inv_b);
            self.check(total, &grad, epoch, iteration)?;
            self.apply(&grad, epoch, iteration)?;
            return Ok(total);
        }

        let mut workers: Vec<Worker> = batch
            .into_iter()
            .map(|(inputs, label)| Worker {
                runner: match self.engine {
                    TrainEngine::SafE => Runner::Saf(SafRunner::new(&self.spec)),
                    _ => Runner::Ottt(LifRunner::new(&self.spec, true)),
                },
                inputs,
                label,
            })
            .collect();
        let frozen = (self.freeze_within_sequence || self.accumulate).then(|| self.spec.clone());
        let mut pending: Vec<GradientSet> = Vec::new();
        let mut summed: Option<GradientSet> = None;
        let mut total = 0.0;
        for t in 1..=self.steps {
            let spec = frozen.as_ref().unwrap_or(&self.spec);
            let (loss, steps) = (&self.loss, self.steps);
            let results = self
                .exec
                .map_mut(&mut workers, |w| per_step_grad(spec, w, t, steps, loss));
            let (mut grad, step_loss) = reduce(spec, engine_tag(self.engine), results)?;
            grad.scale(inv_b);
            total += step_loss;
            self.check(step_loss, &grad, epoch, iteration)?;
            if self.accumulate {
                match summed.as_mut() {
                    Some(s) => s.add_assign(&grad)?,
                    None => summed = Some(grad),
                }
            } else if self.freeze_within_sequence {
                pending.push(grad);
            } else {
                self.apply(&grad, epoch, iteration)?;
            }
        }
        if let Some(g) = summed {
            self.apply(&g, epoch, iteration)?;
        }
        for g in pending {
            self.apply(&g, epoch, iteration)?;
        }
        Ok(total)
    }
}

fn engine_tag(e: TrainEngine) -> Engine {
    match e {
        TrainEngine::SafE => Engine::SafE,
        TrainEngine::SafF => Engine::SafF,
        TrainEngine::OtttO => Engine::OtttO,
        TrainEngine::OtttA => Engine::OtttA,
    }
}

fn per_step_grad(spec: &NetworkSpec, w: &mut Worker, t: usize, steps: usize, loss: &LossSpec) -> Result<(GradientSet, f64)> {
    let x = &w.inputs[t - 1];
    match &mut w.runner {
        Runner::Saf(r) => {
            r.step(spec, x)?;
            grad_saf_e_step(spec, &r.record(), t, steps, w.label, loss)
        }
        Runner::Ottt(r) => {
            r.step(spec, x)?;
            let step = r.ottt_step().ok_or(Error::NoStepTaken)?;
            grad_ottt_o_step(spec, &step, steps, w.label, loss)
        }
    }
}

fn full_sequence_grad(
    spec: &NetworkSpec,
    inputs: &[Vector],
    label: usize,
    loss: &LossSpec,
    steps: usize,
    engine: TrainEngine,
) -> Result<(GradientSet, f64)> {
    match engine {
        TrainEngine::SafF => {
            let mut r = SafRunner::new(spec);
            for x in inputs {
                r.step(spec, x)?;
            }
            grad_saf_f_step(spec, &r.record(), steps, label, loss, DerivativeMode::Surrogate)
        }
        _ => {
            let mut r = LifRunner::new(spec, true);
            let mut total = GradientSet::zeros(spec, Engine::OtttA, None);
            let mut value = 0.0;
            for x in inputs {
                r.step(spec, x)?;
                let step = r.ottt_step().ok_or(Error::NoStepTaken)?;
                let (g, v) = grad_ottt_o_step(spec, &step, steps, label, loss)?;
                total.add_assign(&g)?;
                value += v;
            }
            Ok((total, value))
        }
    }
}

/// Sums per-sample results in sample order.
fn reduce(spec: &NetworkSpec, engine: Engine, results: Vec<Result<(GradientSet, f64)>>) -> Result<(GradientSet, f64)> {
    let mut grad = GradientSet::zeros(spec, engine, None);
    let mut total = 0.0;
    for r in results {
        let (g, v) = r?;
        grad.add_assign(&g)?;
        total += v;
    }
    Ok((grad, total))
}

/// Builds the initial network for a config.
pub fn init_network(cfg: &ExperimentConfig, feature_dim: usize, num_classes: usize) -> Result<NetworkSpec> {
    let params = NeuronParams::new(cfg.lambda, cfg.v_th)?;
    let mut rng = Rng::new(stream_seed(cfg.seed, INIT_STREAM, 0));
    NetworkSpec::random(
        &cfg.layer_sizes(feature_dim, num_classes),
        params,
        cfg.beta,
        cfg.connection,
        &cfg.init,
        &mut rng,
    )
}

/// Number of minibatches in a run.
pub fn planned_iterations(cfg: &ExperimentConfig, train_len: usize) -> usize {
    let per_epoch = train_len.div_ceil(cfg.batch_size);
    let planned = per_epoch * cfg.epochs;
    cfg.max_iterations.map_or(planned, |m| m.min(planned))
}

/// Trains on `train`, evaluating on both splits after every epoch.
pub fn train_on(
    cfg: &ExperimentConfig,
    train: &Dataset,
    test: &Dataset,
    exec: Execution,
) -> Result<(NetworkSpec, RunMetrics)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyInput("training set is empty"));
    }
    let spec = init_network(cfg, train.feature_dim, train.num_classes)?;
    let iterations = planned_iterations(cfg, train.len());
    let probe = Trainer::new(spec.clone(), cfg, train.num_classes, 1, exec)?;
    let total_steps = iterations * probe.steps_per_iteration();
    let mut trainer = Trainer::new(spec, cfg, train.num_classes, total_steps, exec)?;

    let state_mode = match cfg.engine {
        TrainEngine::SafE | TrainEngine::SafF => StateMode::SafStreaming,
        TrainEngine::OtttO | TrainEngine::OtttA => StateMode::OtttStreaming,
    };
    let mut metrics = RunMetrics {
        engine: cfg.engine,
        epochs: Vec::new(),
        state_buffers: count_state_buffers(&trainer.spec, state_mode, cfg.steps)?,
        iterations: 0,
        optimizer_steps: 0,
    };
    let eval = EvalOptions {
        steps: cfg.steps,
        encoding: cfg.encoding,
        seed: cfg.seed,
    };

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut done = 0usize;
    for epoch in 0..cfg.epochs {
        if done >= iterations {
            break;
        }
        let mut rng = Rng::new(stream_seed(cfg.seed, ORDER_STREAM, epoch as u64));
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        let mut elapsed = 0.0;
        let mut epoch_iters = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            if done >= iterations {
                break;
            }
            let batch: Vec<(Vec<Vector>, usize)> = chunk
                .iter()
                .map(|&i| {
                    let s = &train.samples[i];
                    let seed = stream_seed(cfg.seed, INPUT_STREAM + epoch as u64, i as u64);
                    (encode(&s.features, cfg.encoding, cfg.steps, seed), s.label)
                })
                .collect();
            let start = Instant::now();
            loss_sum += trainer.iteration(batch, epoch, done)?;
            elapsed += start.elapsed().as_secs_f64();
            seen += chunk.len();
            done += 1;
            epoch_iters += 1;
        }
        let train_eval = evaluate(&trainer.spec, train, &eval, TraceMode::Saf, exec)?;
        let test_eval = if test.is_empty() {
            None
        } else {
            Some(evaluate(&trainer.spec, test, &eval, TraceMode::Saf, exec)?)
        };
        metrics.epochs.push(EpochMetrics {
            epoch,
            iterations: epoch_iters,
            train_loss: loss_sum / seen.max(1) as f64,
            train_accuracy: train_eval.accuracy,
            test_accuracy: test_eval.as_ref().map(|e| e.accuracy),
            firing_rates: train_eval.firing_rates,
            total_firing_rate: train_eval.total_firing_rate,
            seconds_per_iteration: elapsed / epoch_iters.max(1) as f64,
        });
    }
    metrics.iterations = done;
    metrics.optimizer_steps = trainer.optimizer.step;
    Ok((trainer.spec, metrics))
}

/// Loads the configured dataset and trains on it.
pub fn train(cfg: &ExperimentConfig, exec: Execution) -> Result<(NetworkSpec, RunMetrics, Dataset, Dataset)> {
    let (train_set, test_set) = cfg.load_dataset()?;
    let (spec, metrics) = train_on(cfg, &train_set, &test_set, exec)?;
    Ok((spec, metrics, train_set, test_set))
}

#[cfg(test)]
mod tests;
