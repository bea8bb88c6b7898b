use std::time::Instant;

use crate::data::{make_two_moons, Encoding, ExperimentConfig, TrainEngine};
use crate::error::{Error, Result};
use crate::par::Execution;
use crate::topology::{count_state_buffers, StateMode};

use super::{encode, init_network, Trainer};

pub const BENCH_ENGINES: [TrainEngine; 4] = TrainEngine::ALL;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub hidden: Vec<usize>,
    pub batch_size: usize,
    pub steps: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    /// Extra `T` values at which only state buffers are counted.
    pub memory_steps: Vec<usize>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            hidden: vec![32, 32],
            batch_size: 32,
            steps: vec![4, 8, 16, 32],
            reps: 20,
            seed: 0,
            memory_steps: vec![8, 64],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub steps: usize,
    pub engine: TrainEngine,
    /// Median wall time of one minibatch iteration.
    pub median_seconds: f64,
    /// Total state vectors over all layers for the engine's streaming mode.
    pub streaming_buffers: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    /// `(T, mode, total buffers)` for every measured `T`.
    pub buffers: Vec<(usize, StateMode, usize)>,
}

impl BenchReport {
    fn totals(&self, mode: StateMode) -> Vec<(usize, usize)> {
        self.buffers
            .iter()
            .filter(|(_, m, _)| *m == mode)
            .map(|&(t, _, n)| (t, n))
            .collect()
    }

    /// SAF streaming buffers are identical for every `T`; traced LIF
    /// buffers are proportional to `T`.
    pub fn check_memory_shape(&self) -> std::result::Result<(), String> {
        let saf = self.totals(StateMode::SafStreaming);
        if saf.windows(2).any(|w| w[0].1 != w[1].1) {
            return Err(format!("SAF streaming buffers vary with T: {saf:?}"));
        }
        let traced = self.totals(StateMode::LifTraced);
        let per_step = traced.first().map(|&(t, n)| n / t.max(1));
        for &(t, n) in &traced {
            if Some(n) != per_step.map(|p| p * t) || n % t != 0 {
                return Err(format!("traced LIF buffers not linear in T: {traced:?}"));
            }
        }
        if traced.len() >= 2 && traced.windows(2).any(|w| w[0].1 >= w[1].1) {
            return Err(format!("traced LIF buffers do not grow: {traced:?}"));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("T,engine,median_ms,streaming_buffers\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{:.4},{}\n",
                r.steps,
                r.engine,
                r.median_seconds * 1e3,
                r.streaming_buffers
            ));
        }
        out.push_str("T,mode,buffers\n");
        for (t, m, n) in &self.buffers {
            out.push_str(&format!("{},{},{}\n", t, m.name(), n));
        }
        out
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Times one training iteration per engine and counts state buffers for
/// every `T` in `cfg.steps` and `cfg.memory_steps`. Data generation and encoding are excluded.
pub fn run_bench(cfg: &BenchConfig, exec: Execution) -> Result<BenchReport> {
    if cfg.reps == 0 || cfg.batch_size == 0 || cfg.steps.contains(&0) || cfg.memory_steps.contains(&0) {
        return Err(Error::InvalidParameter("bench needs positive reps, batch size and steps".into()));
    }
    let data = make_two_moons(cfg.batch_size.max(2), 0.1, cfg.seed)?;
    let mut rows = Vec::new();
    let mut buffers = Vec::new();
    let hidden = cfg.hidden.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ");
    for &steps in &cfg.steps {
        let overrides: Vec<(String, String)> = [
            ("hidden", hidden.clone()),
            ("steps", steps.to_string()),
            ("seed", cfg.seed.to_string()),
            ("schedule", "constant".into()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        let base = ExperimentConfig::parse("bench", "dataset = two-moons", &overrides)?;
        let spec = init_network(&base, data.feature_dim, data.num_classes)?;
        let batch: Vec<_> = data
            .samples
            .iter()
            .take(cfg.batch_size)
            .map(|s| (encode(&s.features, Encoding::Constant, steps, 0), s.label))
            .collect();

        for engine in BENCH_ENGINES {
            let cfg_e = ExperimentConfig { engine, ..base.clone() };
            let mut times = Vec::with_capacity(cfg.reps);
            for rep in 0..cfg.reps {
                let mut trainer = Trainer::new(spec.clone(), &cfg_e, data.num_classes, 1, exec)?;
                let b = batch.clone();
                let start = Instant::now();
                trainer.iteration(b, 0, rep)?;
                times.push(start.elapsed().as_secs_f64());
            }
            let mode = match engine {
                TrainEngine::SafE | TrainEngine::SafF => StateMode::SafStreaming,
                _ => StateMode::OtttStreaming,
            };
            rows.push(BenchRow {
                steps,
                engine,
                median_seconds: median(times),
                streaming_buffers: count_state_buffers(&spec, mode, steps)?.total(),
            });
        }
    }
    let mut all_steps: Vec<usize> = cfg.steps.iter().chain(&cfg.memory_steps).copied().collect();
    all_steps.sort_unstable();
    all_steps.dedup();
    let probe = ExperimentConfig::parse("bench", "dataset = two-moons", &[("hidden".into(), hidden)])?;
    let spec = init_network(&probe, data.feature_dim, data.num_classes)?;
    for steps in all_steps {
        for mode in [StateMode::SafStreaming, StateMode::OtttStreaming, StateMode::LifTraced] {
            buffers.push((steps, mode, count_state_buffers(&spec, mode, steps)?.total()));
        }
    }
    Ok(BenchReport { rows, buffers })
}
