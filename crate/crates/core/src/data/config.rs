use std::fmt;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::kv::KvDoc;
use crate::topology::{ConnectionKind, ConnectionPlan, InitScheme};

use super::{load_delimited, load_idx, make_two_moons, Dataset, DelimitedSchema};

/// Named presets accepted by the `preset` key.
pub const PRESETS: &[&str] = &["paper-c"];

/// Every key understood by [`ExperimentConfig::parse`].
pub const CONFIG_KEYS: &[&str] = &[
    "preset",
    "hidden",
    "epochs",
    "batch_size",
    "lr",
    "momentum",
    "schedule",
    "alpha",
    "steps",
    "lambda",
    "v_th",
    "beta",
    "engine",
    "dataset",
    "dataset.n",
    "dataset.noise",
    "dataset.seed",
    "dataset.path",
    "dataset.images",
    "dataset.labels",
    "dataset.num_classes",
    "test_fraction",
    "seed",
    "connection",
    "connection.p",
    "connection.q",
    "init.weight_gain",
    "init.connection_gain",
    "init.bias_low",
    "init.bias_high",
    "accumulate",
    "freeze_within_sequence",
    "encoding",
    "max_iterations",
];

/// Keys that take a boolean.
pub const BOOL_KEYS: &[&str] = &["accumulate", "freeze_within_sequence"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainEngine {
    SafE,
    SafF,
    OtttO,
    OtttA,
}

impl TrainEngine {
    pub const ALL: [TrainEngine; 4] = [TrainEngine::SafE, TrainEngine::SafF, TrainEngine::OtttO, TrainEngine::OtttA];

    pub fn name(self) -> &'static str {
        match self {
            TrainEngine::SafE => "saf-e",
            TrainEngine::SafF => "saf-f",
            TrainEngine::OtttO => "ottt-o",
            TrainEngine::OtttA => "ottt-a",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|e| e.name() == s).ok_or_else(|| {
            let valid: Vec<&str> = Self::ALL.iter().map(|e| e.name()).collect();
            Error::Config(format!("unknown engine `{s}`; valid engines: {}", valid.join(", ")))
        })
    }

    /// Engines that step the optimizer after every time step.
    pub fn is_per_step(self) -> bool {
        matches!(self, TrainEngine::SafE | TrainEngine::OtttO)
    }
}

impl fmt::Display for TrainEngine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    Cosine,
    Constant,
}

impl Schedule {
    fn parse(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(Schedule::Cosine),
            "constant" => Ok(Schedule::Constant),
            _ => Err(Error::Config(format!("unknown schedule `{s}`; valid: cosine, constant"))),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Schedule::Cosine => "cosine",
            Schedule::Constant => "constant",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    /// The feature vector is injected as constant current every step.
    Constant,
    /// Bernoulli spikes with probability `clamp(x, 0, 1)`.
    Spike,
}

impl Encoding {
    fn parse(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(Encoding::Constant),
            "spike" => Ok(Encoding::Spike),
            _ => Err(Error::Config(format!("unknown encoding `{s}`; valid: constant, spike"))),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Encoding::Constant => "constant",
            Encoding::Spike => "spike",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    TwoMoons { n: usize, noise: f64, seed: u64 },
    Delimited { path: PathBuf, num_classes: Option<usize> },
    Idx { images: PathBuf, labels: PathBuf, num_classes: Option<usize> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub schedule: Schedule,
    pub alpha: f64,
    pub steps: usize,
    pub lambda: f64,
    pub v_th: f64,
    pub beta: f64,
    pub engine: TrainEngine,
    pub dataset: DatasetSource,
    /// Fraction of samples held out as a test split.
    pub test_fraction: f64,
    pub seed: u64,
    pub connection: ConnectionPlan,
    pub init: InitScheme,
    pub accumulate: bool,
    pub freeze_within_sequence: bool,
    pub encoding: Encoding,
    pub max_iterations: Option<usize>,
}

struct Preset {
    epochs: usize,
    batch_size: usize,
    lr: f64,
    momentum: f64,
    schedule: Schedule,
    alpha: f64,
    steps: usize,
    lambda: f64,
    v_th: f64,
    beta: f64,
}

const PAPER_C: Preset = Preset {
    epochs: 300,
    batch_size: 128,
    lr: 0.1,
    momentum: 0.9,
    schedule: Schedule::Cosine,
    alpha: 0.05,
    steps: 6,
    lambda: 0.5,
    v_th: 1.0,
    beta: 4.0,
};

fn preset(name: &str) -> Result<&'static Preset> {
    match name {
        "paper-c" => Ok(&PAPER_C),
        _ => Err(Error::Config(format!("unknown preset `{name}`; valid: {}", PRESETS.join(", ")))),
    }
}

fn parse_bool(doc: &mut KvDoc, key: &str) -> Result<Option<bool>> {
    match doc.take(key) {
        None => Ok(None),
        Some((v, line)) => match v.as_str() {
            "true" | "yes" | "1" | "on" => Ok(Some(true)),
            "false" | "no" | "0" | "off" => Ok(Some(false)),
            _ => Err(Error::parse(doc.source(), line, format!("`{key}` expects a boolean, got `{v}`"))),
        },
    }
}

impl ExperimentConfig {
    /// Resolves a config document. `overrides` are applied on top of the
    /// file, and unspecified fields come from the selected preset.
    pub fn parse(source: &str, text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut doc = KvDoc::parse(source, text)?;
        for (k, v) in overrides {
            doc.set(k, v);
        }
        let base = preset(&doc.take("preset").map(|(v, _)| v).unwrap_or_else(|| "paper-c".into()))?;

        let seed = doc.take_parsed("seed")?.unwrap_or(0u64);
        let dataset = match doc.take("dataset") {
            None => return Err(Error::Config("missing dataset (set `dataset = two-moons | delimited | idx`)".into())),
            Some((kind, line)) => match kind.as_str() {
                "two-moons" => DatasetSource::TwoMoons {
                    n: doc.take_parsed("dataset.n")?.unwrap_or(1000),
                    noise: doc.take_parsed("dataset.noise")?.unwrap_or(0.1),
                    seed: doc.take_parsed("dataset.seed")?.unwrap_or(seed),
                },
                "delimited" => DatasetSource::Delimited {
                    path: doc
                        .take("dataset.path")
                        .map(|(v, _)| PathBuf::from(v))
                        .ok_or_else(|| Error::Config("delimited dataset needs `dataset.path`".into()))?,
                    num_classes: doc.take_parsed("dataset.num_classes")?,
                },
                "idx" => DatasetSource::Idx {
                    images: doc
                        .take("dataset.images")
                        .map(|(v, _)| PathBuf::from(v))
                        .ok_or_else(|| Error::Config("idx dataset needs `dataset.images`".into()))?,
                    labels: doc
                        .take("dataset.labels")
                        .map(|(v, _)| PathBuf::from(v))
                        .ok_or_else(|| Error::Config("idx dataset needs `dataset.labels`".into()))?,
                    num_classes: doc.take_parsed("dataset.num_classes")?,
                },
                other => {
                    return Err(Error::parse(
                        doc.source(),
                        line,
                        format!("unknown dataset `{other}`; valid: two-moons, delimited, idx"),
                    ))
                }
            },
        };

        let engine = match doc.take("engine") {
            Some((v, _)) => TrainEngine::parse(&v)?,
            None => TrainEngine::SafE,
        };
        let schedule = match doc.take("schedule") {
            Some((v, _)) => Schedule::parse(&v)?,
            None => base.schedule,
        };
        let encoding = match doc.take("encoding") {
            Some((v, _)) => Encoding::parse(&v)?,
            None => Encoding::Constant,
        };
        let kind = match doc.take("connection") {
            Some((v, line)) => ConnectionKind::parse(&v).ok_or_else(|| {
                Error::parse(doc.source(), line, format!("unknown connection `{v}`; valid: none, feedforward, feedback"))
            })?,
            None => ConnectionKind::None,
        };
        let connection = ConnectionPlan {
            kind,
            p: doc.take_parsed("connection.p")?.unwrap_or(0),
            q: doc.take_parsed("connection.q")?.unwrap_or(0),
        };
        let default_init = InitScheme::default();
        let init = InitScheme {
            weight_gain: doc.take_parsed("init.weight_gain")?.unwrap_or(default_init.weight_gain),
            connection_gain: doc.take_parsed("init.connection_gain")?.unwrap_or(default_init.connection_gain),
            bias_low: doc.take_parsed("init.bias_low")?.unwrap_or(default_init.bias_low),
            bias_high: doc.take_parsed("init.bias_high")?.unwrap_or(default_init.bias_high),
        };

        let cfg = ExperimentConfig {
            hidden: doc.take_list("hidden")?.unwrap_or_else(|| vec![32, 32]),
            epochs: doc.take_parsed("epochs")?.unwrap_or(base.epochs),
            batch_size: doc.take_parsed("batch_size")?.unwrap_or(base.batch_size),
            lr: doc.take_parsed("lr")?.unwrap_or(base.lr),
            momentum: doc.take_parsed("momentum")?.unwrap_or(base.momentum),
            schedule,
            alpha: doc.take_parsed("alpha")?.unwrap_or(base.alpha),
            steps: doc.take_parsed("steps")?.unwrap_or(base.steps),
            lambda: doc.take_parsed("lambda")?.unwrap_or(base.lambda),
            v_th: doc.take_parsed("v_th")?.unwrap_or(base.v_th),
            beta: doc.take_parsed("beta")?.unwrap_or(base.beta),
            engine,
            dataset,
            test_fraction: doc.take_parsed("test_fraction")?.unwrap_or(0.0),
            seed,
            connection,
            init,
            accumulate: parse_bool(&mut doc, "accumulate")?.unwrap_or(false),
            freeze_within_sequence: parse_bool(&mut doc, "freeze_within_sequence")?.unwrap_or(false),
            encoding,
            max_iterations: doc.take_parsed("max_iterations")?,
        };
        doc.finish()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>, overrides: &[(String, String)]) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::parse(&path.display().to_string(), &text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.hidden.contains(&0) {
            return bad("hidden layer widths must be positive".into());
        }
        if self.batch_size == 0 || self.steps == 0 {
            return bad("batch_size and steps must be positive".into());
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be finite and non-negative, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha must be in [0, 1], got {}", self.alpha));
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return bad(format!("lambda must be in (0, 1], got {}", self.lambda));
        }
        if !(self.v_th > 0.0 && self.beta > 0.0) {
            return bad("v_th and beta must be positive".into());
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return bad(format!("test_fraction must be in [0, 1), got {}", self.test_fraction));
        }
        if let DatasetSource::TwoMoons { n, noise, .. } = self.dataset {
            if n < 2 || !(noise >= 0.0) {
                return bad("two-moons needs n ≥ 2 and noise ≥ 0".into());
            }
        }
        Ok(())
    }

    /// Loads the dataset and splits off the test fraction. Normalization is
    /// fitted on the training split and replayed on the test split.
    pub fn load_dataset(&self) -> Result<(Dataset, Dataset)> {
        let (mut train, mut test) = self.load_raw_split()?;
        let rows: Vec<_> = train.samples.iter().map(|s| s.features.clone()).collect();
        let norm = super::Normalization::fit(&rows)?;
        train.apply_normalization(norm.clone())?;
        test.apply_normalization(norm)?;
        Ok((train, test))
    }

    /// Train and test splits before any normalization.
    pub fn load_raw_split(&self) -> Result<(Dataset, Dataset)> {
        let raw = match &self.dataset {
            DatasetSource::TwoMoons { n, noise, seed } => make_two_moons(*n, *noise, *seed)?,
            DatasetSource::Delimited { path, num_classes } => load_delimited(
                path,
                DelimitedSchema {
                    num_classes: *num_classes,
                    raw: true,
                },
            )?,
            DatasetSource::Idx {
                images,
                labels,
                num_classes,
            } => load_idx(images, labels, *num_classes)?,
        };
        raw.split(self.test_fraction)
    }

    /// Full layer sizes for a dataset: input, hidden widths, classes.
    pub fn layer_sizes(&self, feature_dim: usize, num_classes: usize) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.hidden.len() + 2);
        sizes.push(feature_dim);
        sizes.extend_from_slice(&self.hidden);
        sizes.push(num_classes);
        sizes
    }

    /// Canonical `key = value` form; parsing it yields an equal config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
        kv("hidden", self.hidden.iter().map(|h| h.to_string()).collect::<Vec<_>>().join(" "));
        kv("epochs", self.epochs.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("lr", format!("{:?}", self.lr));
        kv("momentum", format!("{:?}", self.momentum));
        kv("schedule", self.schedule.name().into());
        kv("alpha", format!("{:?}", self.alpha));
        kv("steps", self.steps.to_string());
        kv("lambda", format!("{:?}", self.lambda));
        kv("v_th", format!("{:?}", self.v_th));
        kv("beta", format!("{:?}", self.beta));
        kv("engine", self.engine.name().into());
        match &self.dataset {
            DatasetSource::TwoMoons { n, noise, seed } => {
                kv("dataset", "two-moons".into());
                kv("dataset.n", n.to_string());
                kv("dataset.noise", format!("{noise:?}"));
                kv("dataset.seed", seed.to_string());
            }
            DatasetSource::Delimited { path, num_classes } => {
                kv("dataset", "delimited".into());
                kv("dataset.path", path.display().to_string());
                if let Some(k) = num_classes {
                    kv("dataset.num_classes", k.to_string());
                }
            }
            DatasetSource::Idx {
                images,
                labels,
                num_classes,
            } => {
                kv("dataset", "idx".into());
                kv("dataset.images", images.display().to_string());
                kv("dataset.labels", labels.display().to_string());
                if let Some(k) = num_classes {
                    kv("dataset.num_classes", k.to_string());
                }
            }
        }
        kv("test_fraction", format!("{:?}", self.test_fraction));
        kv("seed", self.seed.to_string());
        kv("connection", self.connection.kind.name().into());
        kv("connection.p", self.connection.p.to_string());
        kv("connection.q", self.connection.q.to_string());
        kv("init.weight_gain", format!("{:?}", self.init.weight_gain));
        kv("init.connection_gain", format!("{:?}", self.init.connection_gain));
        kv("init.bias_low", format!("{:?}", self.init.bias_low));
        kv("init.bias_high", format!("{:?}", self.init.bias_high));
        kv("accumulate", self.accumulate.to_string());
        kv("freeze_within_sequence", self.freeze_within_sequence.to_string());
        kv("encoding", self.encoding.name().into());
        if let Some(m) = self.max_iterations {
            kv("max_iterations", m.to_string());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::parse("cfg", text, &[])
    }

    #[test]
    fn preset_fills_defaults() {
        let cfg = parse("dataset = two-moons").unwrap();
        assert_eq!(cfg.lambda, 0.5);
        assert_eq!(cfg.v_th, 1.0);
        assert_eq!(cfg.beta, 4.0);
        assert_eq!(cfg.alpha, 0.05);
        assert_eq!(cfg.momentum, 0.9);
        assert_eq!((cfg.batch_size, cfg.epochs, cfg.lr), (128, 300, 0.1));
        assert_eq!(cfg.schedule, Schedule::Cosine);
    }

    #[test]
    fn overrides_beat_file() {
        let ov = vec![("lr".to_string(), "0.01".to_string())];
        let cfg = ExperimentConfig::parse("cfg", "dataset = two-moons\nlr = 0.1\n", &ov).unwrap();
        assert_eq!(cfg.lr, 0.01);
    }

    #[test]
    fn errors() {
        let err = parse("dataset = two-moons\nengine = bogus").unwrap_err().to_string();
        for e in ["saf-e", "saf-f", "ottt-o", "ottt-a"] {
            assert!(err.contains(e), "{err}");
        }
        assert!(parse("lr = 0.1").unwrap_err().to_string().contains("missing dataset"));
        assert!(parse("dataset = two-moons\nwidth = 3").unwrap_err().to_string().contains("unknown key"));
        assert!(parse("dataset = two-moons\nlr = fast").is_err());
        assert!(parse("dataset = two-moons\npreset = other").is_err());
        assert!(parse("dataset = delimited").is_err());
    }

    #[test]
    fn key_table_matches_parser() {
        for key in CONFIG_KEYS {
            let value = match *key {
                "preset" => "paper-c",
                "dataset" => "two-moons",
                "engine" => "saf-f",
                "schedule" => "constant",
                "connection" => "none",
                "encoding" => "constant",
                "dataset.path" | "dataset.images" | "dataset.labels" | "dataset.num_classes" => continue,
                k if BOOL_KEYS.contains(&k) => "true",
                "hidden" => "4 4",
                "lambda" | "momentum" | "alpha" | "test_fraction" => "0.5",
                _ => "2",
            };
            let text = format!("dataset = two-moons\n{key} = {value}\n").replace("dataset = two-moons\ndataset = two-moons", "dataset = two-moons");
            parse(&text).unwrap_or_else(|e| panic!("{key}: {e}"));
        }
    }

    #[test]
    fn text_round_trip() {
        let cfg = parse(
            "dataset = two-moons\nhidden = 8, 4\nengine = ottt-a\nconnection = feedback\nconnection.p = 2\n\
             accumulate = yes\nmax_iterations = 7\nencoding = spike",
        )
        .unwrap();
        assert_eq!(parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn split_replays_train_normalization() {
        let cfg = parse("dataset = two-moons\ndataset.n = 100\ntest_fraction = 0.25").unwrap();
        let (train, test) = cfg.load_dataset().unwrap();
        assert_eq!((train.len(), test.len()), (75, 25));
        assert_eq!(train.normalization, test.normalization);
        let (train2, _) = cfg.load_dataset().unwrap();
        assert_eq!(train, train2);
    }
}
