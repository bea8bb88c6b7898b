use std::io::Write;

use crate::data::{Normalization, TrainEngine};
use crate::error::Result;
use crate::kv::KvDoc;
use crate::topology::{parse_network, write_network, NetworkSpec, StateBufferReport};

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub iterations: usize,
    /// Mean per-sample training loss over the epoch.
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
    /// SAF-mode rates on the training split after the epoch.
    pub firing_rates: Vec<f64>,
    pub total_firing_rate: f64,
    pub seconds_per_iteration: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub engine: TrainEngine,
    pub epochs: Vec<EpochMetrics>,
    /// State vectors kept per layer by the training forward pass.
    pub state_buffers: StateBufferReport,
    pub iterations: usize,
    pub optimizer_steps: usize,
}

impl RunMetrics {
    pub fn last(&self) -> Option<&EpochMetrics> {
        self.epochs.last()
    }

    /// Equality ignoring wall-clock timings.
    pub fn same_outcome(&self, other: &RunMetrics) -> bool {
        let strip = |m: &RunMetrics| {
            let mut m = m.clone();
            m.epochs.iter_mut().for_each(|e| e.seconds_per_iteration = 0.0);
            m
        };
        strip(self) == strip(other)
    }

    /// `epoch,split,accuracy,loss,total_rate,rate_1..rate_N,sec_per_iter`.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        let layers = self.epochs.first().map_or(0, |e| e.firing_rates.len());
        write!(w, "epoch,split,accuracy,loss,total_rate")?;
        for l in 1..=layers {
            write!(w, ",rate_{l}")?;
        }
        writeln!(w, ",sec_per_iter")?;
        for e in &self.epochs {
            write!(w, "{},train,{},{},{}", e.epoch, e.train_accuracy, e.train_loss, e.total_firing_rate)?;
            for r in &e.firing_rates {
                write!(w, ",{r}")?;
            }
            writeln!(w, ",{}", e.seconds_per_iteration)?;
            if let Some(acc) = e.test_accuracy {
                write!(w, "{},test,{},,", e.epoch, acc)?;
                for _ in 0..layers {
                    write!(w, ",")?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }

    pub fn summary(&self) -> String {
        match self.last() {
            None => format!("engine {}: no epochs run", self.engine),
            Some(e) => {
                let rates: Vec<String> = e.firing_rates.iter().map(|r| format!("{r:.4}")).collect();
                format!(
                    "engine {} epochs {} iterations {} optimizer_steps {}\n\
                     train_loss {:.6} train_acc {:.4}{}\n\
                     firing_rates [{}] total {:.4}\n\
                     state_buffers {} per layer {:?} (T = {})",
                    self.engine,
                    self.epochs.len(),
                    self.iterations,
                    self.optimizer_steps,
                    e.train_loss,
                    e.train_accuracy,
                    e.test_accuracy.map_or(String::new(), |a| format!(" test_acc {a:.4}")),
                    rates.join(", "),
                    e.total_firing_rate,
                    self.state_buffers.mode.name(),
                    self.state_buffers.per_layer,
                    self.state_buffers.steps,
                )
            }
        }
    }
}

/// Network text followed by the input normalization.
pub fn write_checkpoint(spec: &NetworkSpec, norm: &Normalization) -> String {
    let mut out = write_network(spec);
    norm.write_kv(&mut out);
    out
}

pub fn read_checkpoint(source: &str, text: &str) -> Result<(NetworkSpec, Normalization)> {
    let mut doc = KvDoc::parse(source, text)?;
    let spec = parse_network(&mut doc)?;
    let norm = Normalization::take_kv(&mut doc)?.unwrap_or_else(|| Normalization::identity(spec.input_size()));
    doc.finish()?;
    Ok((spec, norm))
}
