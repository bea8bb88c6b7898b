use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Arg, ArgAction, ArgMatches, Command};

use saf_core::data::{Dataset, ExperimentConfig, BOOL_KEYS, CONFIG_KEYS};
use saf_core::grad::Engine;
use saf_core::lab::{run_suite, write_reports_csv, Suite};
use saf_core::par::Execution;
use saf_core::topology::NetworkSpec;
use saf_core::train::{
    compare_grads, infer_lif, init_network, read_checkpoint, run_bench, train_on, write_checkpoint, BenchConfig,
    CompareOptions, EvalOptions,
};
use saf_core::Error;

fn flag_name(key: &str) -> String {
    key.replace(['.', '_'], "-")
}

/// `--config` plus one flag per config key.
fn config_args(cmd: Command) -> Command {
    let mut cmd = cmd.arg(
        Arg::new("config")
            .long("config")
            .value_name("PATH")
            .help("key = value config file; flags override it"),
    );
    for &key in CONFIG_KEYS {
        let mut arg = Arg::new(key).long(flag_name(key)).help(format!("config key `{key}`"));
        if BOOL_KEYS.contains(&key) {
            arg = arg.num_args(0..=1).default_missing_value("true").value_name("BOOL");
        } else {
            arg = arg.value_name("VALUE");
        }
        cmd = cmd.arg(arg);
    }
    cmd
}

fn sequential_arg() -> Arg {
    Arg::new("sequential")
        .long("sequential")
        .action(ArgAction::SetTrue)
        .help("disable data parallelism")
}

fn cli() -> Command {
    Command::new("saf")
        .about("Spike accumulation forwarding: training, inference and equivalence checks")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(
            config_args(Command::new("train").about("Train a network"))
                .arg(Arg::new("out").long("out").value_name("DIR").help("write metrics.csv, checkpoint.txt, config.txt"))
                .arg(sequential_arg()),
        )
        .subcommand(
            config_args(Command::new("infer").about("Compare SAF-mode and LIF-mode inference of a checkpoint"))
                .arg(Arg::new("checkpoint").long("checkpoint").value_name("PATH").required(true))
                .arg(sequential_arg()),
        )
        .subcommand(
            Command::new("verify")
                .about("Run the equivalence suites")
                .arg(Arg::new("verify-seed").long("seed").value_name("N").default_value("0"))
                .arg(Arg::new("trials").long("trials").value_name("N").default_value("200"))
                .arg(
                    Arg::new("suite")
                        .long("suite")
                        .value_name("NAME")
                        .action(ArgAction::Append)
                        .help("run only these suites (repeatable)"),
                )
                .arg(Arg::new("csv").long("csv").value_name("PATH"))
                .arg(sequential_arg()),
        )
        .subcommand(
            config_args(Command::new("compare-grads").about("Correlation and MAE between two engines' gradients"))
                .arg(Arg::new("a").long("a").value_name("ENGINE").default_value("saf-f"))
                .arg(Arg::new("b").long("b").value_name("ENGINE").default_value("ottt-a"))
                .arg(Arg::new("checkpoint").long("checkpoint").value_name("PATH"))
                .arg(Arg::new("samples").long("samples").value_name("N").default_value("128"))
                .arg(Arg::new("batch").long("batch").value_name("N").help("minibatch size (default: config batch_size)"))
                .arg(Arg::new("t").long("t").value_name("STEP").help("step for per-step engines (default: last)"))
                .arg(sequential_arg()),
        )
        .subcommand(
            Command::new("bench")
                .about("Per-iteration wall time and state-buffer counts across T")
                .arg(Arg::new("bench-hidden").long("hidden").value_name("WIDTHS").default_value("32 32"))
                .arg(Arg::new("batch").long("batch").value_name("N").default_value("32"))
                .arg(Arg::new("reps").long("reps").value_name("N").default_value("20"))
                .arg(Arg::new("bench-steps").long("steps").value_name("LIST").default_value("4,8,16,32"))
                .arg(Arg::new("memory-steps").long("memory-steps").value_name("LIST").default_value("8,64"))
                .arg(Arg::new("bench-seed").long("seed").value_name("N").default_value("0"))
                .arg(sequential_arg()),
        )
}

fn exec_of(m: &ArgMatches) -> Execution {
    if m.get_flag("sequential") {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

fn parse_value<T: std::str::FromStr>(m: &ArgMatches, id: &str) -> Result<T> {
    let raw = m.get_one::<String>(id).with_context(|| format!("missing --{id}"))?;
    raw.parse().map_err(|_| anyhow::anyhow!("cannot parse `{raw}` for --{id}"))
}

fn parse_list(raw: &str) -> Result<Vec<usize>> {
    raw.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| anyhow::anyhow!("cannot parse `{s}` as a count")))
        .collect()
}

fn load_config(m: &ArgMatches) -> Result<ExperimentConfig, Error> {
    let overrides: Vec<(String, String)> = CONFIG_KEYS
        .iter()
        .filter_map(|&k| m.get_one::<String>(k).map(|v| (k.to_string(), v.clone())))
        .collect();
    match m.get_one::<String>("config") {
        Some(path) => ExperimentConfig::from_path(path, &overrides),
        None => ExperimentConfig::parse("<flags>", "", &overrides),
    }
}

fn read_ckpt(path: &str) -> Result<(NetworkSpec, saf_core::data::Normalization)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
    Ok(read_checkpoint(path, &text)?)
}

/// Raw splits normalized with a checkpoint's recorded map.
fn replay_splits(cfg: &ExperimentConfig, norm: &saf_core::data::Normalization) -> Result<(Dataset, Dataset)> {
    let (mut train, mut test) = cfg.load_raw_split()?;
    train.apply_normalization(norm.clone())?;
    test.apply_normalization(norm.clone())?;
    Ok((train, test))
}

fn write_outputs(dir: &Path, cfg: &ExperimentConfig, ckpt: &str, metrics: Option<&saf_core::train::RunMetrics>) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.txt"), cfg.to_text())?;
    fs::write(dir.join("checkpoint.txt"), ckpt)?;
    if let Some(m) = metrics {
        let mut buf = Vec::new();
        m.write_csv(&mut buf)?;
        fs::write(dir.join("metrics.csv"), buf)?;
    }
    Ok(())
}

fn cmd_train(m: &ArgMatches) -> Result<ExitCode> {
    let cfg = load_config(m)?;
    let (train_set, test_set) = cfg.load_dataset()?;
    let out = m.get_one::<String>("out").map(PathBuf::from);
    match train_on(&cfg, &train_set, &test_set, exec_of(m)) {
        Ok((spec, metrics)) => {
            println!("{}", metrics.summary());
            if let Some(dir) = out {
                write_outputs(&dir, &cfg, &write_checkpoint(&spec, &train_set.normalization), Some(&metrics))?;
                println!("wrote {}", dir.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Err(Error::Diverged {
            epoch,
            iteration,
            last_good,
        }) => {
            eprintln!("training diverged at epoch {epoch}, iteration {iteration}");
            if let Some(dir) = out {
                write_outputs(&dir, &cfg, &write_checkpoint(&last_good, &train_set.normalization), None)?;
                eprintln!("last good parameters written to {}", dir.join("checkpoint.txt").display());
            }
            Ok(ExitCode::FAILURE)
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_infer(m: &ArgMatches) -> Result<ExitCode> {
    let cfg = load_config(m)?;
    let (spec, norm) = read_ckpt(m.get_one::<String>("checkpoint").expect("required"))?;
    let (train_set, test_set) = replay_splits(&cfg, &norm)?;
    let opts = EvalOptions {
        steps: cfg.steps,
        encoding: cfg.encoding,
        seed: cfg.seed,
    };
    for (name, data) in [("train", &train_set), ("test", &test_set)] {
        if data.is_empty() {
            continue;
        }
        let r = infer_lif(&spec, data, &opts, exec_of(m))?;
        println!(
            "{name}: saf_acc {:.6} lif_acc {:.6} delta {:+.3e} | saf_rate {:.6} lif_rate {:.6} delta {:+.3e} | disagreements {}",
            r.saf.accuracy,
            r.lif.accuracy,
            r.accuracy_delta,
            r.saf.total_firing_rate,
            r.lif.total_firing_rate,
            r.total_rate_delta,
            r.disagreements
        );
        let rates: Vec<String> = r.lif.firing_rates.iter().map(|x| format!("{x:.4}")).collect();
        println!("{name}: lif per-layer rates [{}]", rates.join(", "));
    }
    Ok(ExitCode::SUCCESS)
}

fn parse_suite(name: &str) -> Result<Suite> {
    Suite::ALL.into_iter().find(|s| s.name() == name).with_context(|| {
        let names: Vec<String> = Suite::ALL.iter().map(|s| s.name()).collect();
        format!("unknown suite `{name}`; valid: {}", names.join(", "))
    })
}

fn cmd_verify(m: &ArgMatches) -> Result<ExitCode> {
    let seed: u64 = parse_value(m, "verify-seed")?;
    let trials: usize = parse_value(m, "trials")?;
    let suites: Vec<Suite> = match m.get_many::<String>("suite") {
        Some(names) => names.map(|n| parse_suite(n)).collect::<Result<_>>()?,
        None => Suite::ALL.to_vec(),
    };
    let mut reports = Vec::with_capacity(suites.len());
    for suite in suites {
        let r = run_suite(suite, seed, trials, exec_of(m))?;
        println!("{}", r.summary_line());
        for f in r.failures().take(3) {
            println!("  failing trial: {}", f.config);
        }
        reports.push(r);
    }
    if let Some(path) = m.get_one::<String>("csv") {
        let mut buf = Vec::new();
        write_reports_csv(&reports, &mut buf)?;
        fs::write(path, buf).with_context(|| format!("writing {path}"))?;
    }
    let ok = reports.iter().all(|r| r.ok());
    println!("verify: {}", if ok { "all suites passed" } else { "FAILED" });
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn parse_engine(m: &ArgMatches, id: &str) -> Result<Engine> {
    let name = m.get_one::<String>(id).expect("defaulted");
    Engine::parse(name).with_context(|| format!("unknown engine `{name}`; valid: saf-e, saf-f, ottt-o, ottt-a, sr"))
}

fn cmd_compare(m: &ArgMatches) -> Result<ExitCode> {
    let cfg = load_config(m)?;
    let (spec, data) = match m.get_one::<String>("checkpoint") {
        Some(path) => {
            let (spec, norm) = read_ckpt(path)?;
            (spec, replay_splits(&cfg, &norm)?.0)
        }
        None => {
            let (train_set, _) = cfg.load_dataset()?;
            (init_network(&cfg, train_set.feature_dim, train_set.num_classes)?, train_set)
        }
    };
    let (a, b) = (parse_engine(m, "a")?, parse_engine(m, "b")?);
    let t = match m.get_one::<String>("t") {
        Some(v) => Some(v.parse().with_context(|| format!("cannot parse `{v}` for --t"))?),
        None => None,
    };
    let opts = CompareOptions {
        steps: cfg.steps,
        encoding: cfg.encoding,
        seed: cfg.seed,
        alpha: cfg.alpha,
        t,
        samples: parse_value(m, "samples")?,
        batch_size: match m.get_one::<String>("batch") {
            Some(_) => parse_value(m, "batch")?,
            None => cfg.batch_size,
        },
    };
    let r = compare_grads(&spec, &data, a, b, &opts, exec_of(m))?;
    let fmt = |c: Option<f64>| c.map_or_else(|| "undefined".to_string(), |x| format!("{x:.6}"));
    println!("{} vs {} on input-layer weight gradients, {} samples", a, b, r.per_sample.len());
    println!("mean gradient: corr {} mae {:.6e}", fmt(r.mean_gradient.corr), r.mean_gradient.mae);
    println!("per batch of {}: corr {} mae {:.6e}", opts.batch_size, fmt(r.batch_corr()), r.batch_mae());
    println!("per sample:    corr {} mae {:.6e}", fmt(r.mean_corr()), r.mean_mae());
    Ok(ExitCode::SUCCESS)
}

fn cmd_bench(m: &ArgMatches) -> Result<ExitCode> {
    let cfg = BenchConfig {
        hidden: parse_list(m.get_one::<String>("bench-hidden").expect("defaulted"))?,
        batch_size: parse_value(m, "batch")?,
        steps: parse_list(m.get_one::<String>("bench-steps").expect("defaulted"))?,
        reps: parse_value(m, "reps")?,
        seed: parse_value(m, "bench-seed")?,
        memory_steps: parse_list(m.get_one::<String>("memory-steps").expect("defaulted"))?,
    };
    let report = run_bench(&cfg, exec_of(m))?;
    print!("{}", report.to_text());
    match report.check_memory_shape() {
        Ok(()) => {
            println!("memory: SAF streaming flat in T, traced LIF linear in T");
            Ok(ExitCode::SUCCESS)
        }
        Err(msg) => {
            println!("memory: FAILED: {msg}");
            Ok(ExitCode::FAILURE)
        }
    }
}

fn main() -> ExitCode {
    let matches = cli().get_matches();
    let result = match matches.subcommand() {
        Some(("train", m)) => cmd_train(m),
        Some(("infer", m)) => cmd_infer(m),
        Some(("verify", m)) => cmd_verify(m),
        Some(("compare-grads", m)) => cmd_compare(m),
        Some(("bench", m)) => cmd_bench(m),
        _ => unreachable!("subcommand required"),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_definition_is_valid() {
        cli().debug_assert();
    }

    #[test]
    fn flags_map_to_keys() {
        let m = cli()
            .try_get_matches_from(["saf", "train", "--dataset", "two-moons", "--batch-size", "8", "--accumulate"])
            .unwrap();
        let cfg = load_config(m.subcommand_matches("train").unwrap()).unwrap();
        assert_eq!(cfg.batch_size, 8);
        assert!(cfg.accumulate);
    }
}
