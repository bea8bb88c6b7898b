//! Randomized equivalence checks between the forward modes and between the
//! backward engines, with reproducible per-trial reports.

mod implicit;
mod similarity;
mod trial;

use std::io::Write;
use std::time::{Duration, Instant};

pub use implicit::{implicit_sr_direction, ImplicitOutcome, MAX_CONDITION};
pub use similarity::{gradient_similarity, similarity_of, Similarity};
pub use trial::{InputMode, Instance, TrialConfig, DEFAULT_MARGIN_GUARD, FIRING_FLOOR, MAX_RESAMPLES};

use crate::error::{Error, Result};
use crate::grad::{
    grad_ottt_a, grad_ottt_o_step, grad_saf_e_step, grad_saf_f, grad_spike_representation, oracle_unrolled_grad,
    DerivativeMode, GradientSet, OracleTarget, TensorDiff,
};
use crate::par::Execution;
use crate::surrogate::{LossKind, LossSpec};
use crate::topology::{forward_lif, forward_saf, ConnectionKind, ForwardTrace};

/// Relative tolerance for the identity checks.
pub const IDENTITY_TOL: f64 = 1e-10;
/// Absolute tolerance for agreement with the unrolled oracle.
pub const ORACLE_TOL: f64 = 1e-12;
/// Required share of positive inner products in the feedback suite.
pub const FEEDBACK_MIN_POSITIVE: f64 = 0.95;
/// Largest tolerated share of guarded steps in the forward suite.
pub const MAX_TRIP_RATE: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Suite {
    Forward,
    PerStep(ConnectionKind),
    FinalStep,
    FeedbackDirection,
    Oracle,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::Forward,
        Suite::PerStep(ConnectionKind::None),
        Suite::PerStep(ConnectionKind::Feedforward),
        Suite::PerStep(ConnectionKind::Feedback),
        Suite::FinalStep,
        Suite::FeedbackDirection,
        Suite::Oracle,
    ];

    pub fn name(self) -> String {
        match self {
            Suite::Forward => "forward".into(),
            Suite::PerStep(k) => format!("per-step-{k}"),
            Suite::FinalStep => "final-step".into(),
            Suite::FeedbackDirection => "feedback-direction".into(),
            Suite::Oracle => "oracle".into(),
        }
    }

    pub(crate) fn salt(self) -> u64 {
        match self {
            Suite::Forward => 0x5AF0_0001,
            Suite::PerStep(ConnectionKind::None) => 0x5AF0_0010,
            Suite::PerStep(ConnectionKind::Feedforward) => 0x5AF0_0011,
            Suite::PerStep(ConnectionKind::Feedback) => 0x5AF0_0012,
            Suite::FinalStep => 0x5AF0_0020,
            Suite::FeedbackDirection => 0x5AF0_0030,
            Suite::Oracle => 0x5AF0_0040,
        }
    }

    pub fn check(self, cfg: &TrialConfig) -> Result<ComparisonReport> {
        match self {
            Suite::Forward => check_forward_equivalence(cfg),
            Suite::PerStep(_) => check_per_step(cfg),
            Suite::FinalStep => check_final_step(cfg),
            Suite::FeedbackDirection => check_feedback_direction(cfg),
            Suite::Oracle => check_oracle(cfg),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    /// Numerically unreliable; neither pass nor fail.
    Inconclusive,
    /// Vacuous (nothing to compare) or rejected by the margin guard.
    Excluded,
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Inconclusive => "inconclusive",
            Status::Excluded => "excluded",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub suite: Suite,
    pub config: TrialConfig,
    pub status: Status,
    pub max_abs: f64,
    pub max_rel: f64,
    /// Per-tensor differences at the worst compared point.
    pub diffs: Vec<TensorDiff>,
    pub corr: Option<f64>,
    pub mae: Option<f64>,
    pub inner_product: Option<f64>,
    /// Steps skipped by the margin guard.
    pub trips: usize,
    /// Steps compared.
    pub compared: usize,
    pub resamples: usize,
    pub detail: String,
}

impl ComparisonReport {
    fn new(suite: Suite, cfg: &TrialConfig) -> Self {
        ComparisonReport {
            suite,
            config: cfg.clone(),
            status: Status::Excluded,
            max_abs: 0.0,
            max_rel: 0.0,
            diffs: Vec::new(),
            corr: None,
            mae: None,
            inner_product: None,
            trips: 0,
            compared: 0,
            resamples: 0,
            detail: String::new(),
        }
    }

    fn absorb(&mut self, diffs: Vec<TensorDiff>) {
        let abs = diffs.iter().fold(0.0_f64, |m, d| m.max(d.abs));
        let rel = diffs.iter().fold(0.0_f64, |m, d| m.max(d.rel));
        if rel > self.max_rel || (self.diffs.is_empty() && !diffs.is_empty()) {
            self.diffs = diffs;
        }
        self.max_abs = self.max_abs.max(abs);
        self.max_rel = self.max_rel.max(rel);
    }
}

fn build(suite: Suite, cfg: &TrialConfig) -> Result<std::result::Result<Instance, ComparisonReport>> {
    match Instance::build(cfg) {
        Ok(inst) => Ok(Ok(inst)),
        Err(Error::Config(msg)) => {
            let mut r = ComparisonReport::new(suite, cfg);
            r.detail = msg;
            Ok(Err(r))
        }
        Err(e) => Err(e),
    }
}

/// First step whose smallest `|u − V_th|` falls under the guard.
fn first_trip(lif: &ForwardTrace, guard: f64) -> Result<Option<usize>> {
    for t in 1..=lif.len() {
        if lif.min_margin(t)? < guard {
            return Ok(Some(t));
        }
    }
    Ok(None)
}

fn loss_for(cfg: &TrialConfig, kind: LossKind) -> Result<LossSpec> {
    LossSpec::new(kind, cfg.alpha, *cfg.layer_sizes.last().unwrap_or(&1))
}

/// LIF-mode and SAF-mode spike trains must agree exactly on every step
/// before the first guarded step, and the SAF effective potential must
/// track the LIF potential.
pub fn check_forward_equivalence(cfg: &TrialConfig) -> Result<ComparisonReport> {
    let suite = Suite::Forward;
    let inst = match build(suite, cfg)? {
        Ok(i) => i,
        Err(r) => return Ok(r),
    };
    let mut report = ComparisonReport::new(suite, cfg);
    report.resamples = inst.resamples;
    let lif = forward_lif(&inst.spec, &inst.inputs)?;
    let saf = forward_saf(&inst.spec, &inst.inputs)?;
    let stop = first_trip(&lif, cfg.margin_guard)?.unwrap_or(lif.len() + 1);
    report.trips = lif.len() + 1 - stop;
    let mut mismatches = 0usize;
    for t in 1..stop {
        for l in 1..=inst.spec.depth() {
            if lif.spikes(t, l)? != saf.spikes(t, l)? {
                mismatches += 1;
            }
            let ul = lif.potential(t, l)?;
            let us = saf.potential(t, l)?;
            for (a, b) in ul.iter().zip(us.iter()) {
                let abs = (a - b).abs();
                report.max_abs = report.max_abs.max(abs);
                report.max_rel = report.max_rel.max(abs / a.abs().max(b.abs()).max(1.0));
            }
        }
        report.compared += 1;
    }
    report.status = if report.compared == 0 {
        Status::Excluded
    } else if mismatches == 0 && report.max_rel <= IDENTITY_TOL {
        Status::Pass
    } else {
        report.detail = format!("{mismatches} layer-steps with differing spikes");
        Status::Fail
    };
    Ok(report)
}

/// SAF-E against OTTT_O at every step, all parameters.
pub fn check_per_step(cfg: &TrialConfig) -> Result<ComparisonReport> {
    let suite = Suite::PerStep(cfg.connection.kind);
    let inst = match build(suite, cfg)? {
        Ok(i) => i,
        Err(r) => return Ok(r),
    };
    let mut report = ComparisonReport::new(suite, cfg);
    report.resamples = inst.resamples;
    let spec = &inst.spec;
    let loss = loss_for(cfg, LossKind::PerStep)?;
    let lif = forward_lif(spec, &inst.inputs)?;
    let saf = forward_saf(spec, &inst.inputs)?;
    let ottt = lif.ottt_steps()?;
    let steps = lif.len();
    let stop = first_trip(&lif, cfg.margin_guard)?.unwrap_or(steps + 1);
    report.trips = steps + 1 - stop;
    let mut last: Option<(GradientSet, GradientSet)> = None;
    for t in 1..stop {
        let (e, _) = grad_saf_e_step(spec, saf.saf_step(t)?, t, steps, inst.label, &loss)?;
        let (o, _) = grad_ottt_o_step(spec, &ottt[t - 1], steps, inst.label, &loss)?;
        report.absorb(e.diffs(&o)?);
        report.compared += 1;
        last = Some((e, o));
    }
    if let Some((e, o)) = last {
        let s = gradient_similarity(&e, &o)?;
        report.corr = s.corr;
        report.mae = Some(s.mae);
    }
    report.status = if report.compared == 0 {
        Status::Excluded
    } else if report.max_rel <= IDENTITY_TOL {
        Status::Pass
    } else {
        Status::Fail
    };
    Ok(report)
}

/// SAF-F with shared clamp factors against `V_th`·SR, weight gradients.
/// The loose pairing (SAF-F with surrogate factors) is reported as a
/// correlation only.
pub fn check_final_step(cfg: &TrialConfig) -> Result<ComparisonReport> {
    let suite = Suite::FinalStep;
    let inst = match build(suite, cfg)? {
        Ok(i) => i,
        Err(r) => return Ok(r),
    };
    let mut report = ComparisonReport::new(suite, cfg);
    report.resamples = inst.resamples;
    let spec = &inst.spec;
    let loss = loss_for(cfg, LossKind::Final)?;
    let saf = forward_saf(spec, &inst.inputs)?;
    let f = grad_saf_f(&saf, inst.label, spec, &loss, DerivativeMode::ClampShared)?;
    let mut sr = grad_spike_representation(&saf, inst.label, spec, &loss)?;
    sr.scale(spec.params.v_th);
    let diffs: Vec<TensorDiff> = f.diffs(&sr)?.into_iter().filter(|d| d.name.starts_with('W')).collect();
    report.absorb(diffs);
    report.compared = 1;
    let loose = grad_saf_f(&saf, inst.label, spec, &loss, DerivativeMode::Surrogate)?;
    let s = gradient_similarity(&loose, &sr)?;
    report.corr = s.corr;
    report.mae = Some(s.mae);
    report.status = if report.max_rel <= IDENTITY_TOL {
        Status::Pass
    } else {
        Status::Fail
    };
    Ok(report)
}

/// Sign of the weight-gradient inner product between SAF-F (shared clamp
/// factors) and the implicit SR direction, with a feedback connection.
pub fn check_feedback_direction(cfg: &TrialConfig) -> Result<ComparisonReport> {
    let suite = Suite::FeedbackDirection;
    if cfg.connection.kind != ConnectionKind::Feedback {
        return Err(Error::Config(format!("feedback-direction trials need a feedback connection: {cfg}")));
    }
    let inst = match build(suite, cfg)? {
        Ok(i) => i,
        Err(r) => return Ok(r),
    };
    let mut report = ComparisonReport::new(suite, cfg);
    report.resamples = inst.resamples;
    let spec = &inst.spec;
    let loss = loss_for(cfg, LossKind::Final)?;
    let saf = forward_saf(spec, &inst.inputs)?;
    let f = grad_saf_f(&saf, inst.label, spec, &loss, DerivativeMode::ClampShared)?;
    let sr = match implicit_sr_direction(&saf, inst.label, spec, &loss)? {
        ImplicitOutcome::Solved { grads, condition } => {
            report.detail = format!("cond={condition:.3e}");
            grads
        }
        ImplicitOutcome::IllConditioned { condition } => {
            report.status = Status::Inconclusive;
            report.detail = format!("ill-conditioned, cond={condition:.3e}");
            return Ok(report);
        }
    };
    report.absorb(f.diffs(&sr)?.into_iter().filter(|d| d.name.starts_with('W')).collect());
    let fa = f.weight_max_abs();
    let sa = sr.weight_max_abs();
    if fa == 0.0 || sa == 0.0 {
        report.detail = "zero gradient".into();
        report.status = Status::Excluded;
        return Ok(report);
    }
    let ip = f.weight_dot(&sr)?;
    let nf = f.weight_dot(&f)?.sqrt();
    let ns = sr.weight_dot(&sr)?.sqrt();
    report.inner_product = Some(ip);
    report.corr = Some(ip / (nf * ns));
    report.compared = 1;
    report.status = if ip > 0.0 { Status::Pass } else { Status::Fail };
    Ok(report)
}

/// All four training engines against the unrolled oracle.
pub fn check_oracle(cfg: &TrialConfig) -> Result<ComparisonReport> {
    let suite = Suite::Oracle;
    let inst = match build(suite, cfg)? {
        Ok(i) => i,
        Err(r) => return Ok(r),
    };
    let mut report = ComparisonReport::new(suite, cfg);
    report.resamples = inst.resamples;
    let spec = &inst.spec;
    let loss = loss_for(cfg, LossKind::PerStep)?;
    let lif = forward_lif(spec, &inst.inputs)?;
    let steps = lif.len();
    if let Some(t) = first_trip(&lif, cfg.margin_guard)? {
        report.trips = steps + 1 - t;
        report.detail = format!("margin guard tripped at t={t}");
        return Ok(report);
    }
    let saf = forward_saf(spec, &inst.inputs)?;
    let ottt = lif.ottt_steps()?;
    let x = &inst.inputs;
    let y = inst.label;
    for t in 1..=steps {
        let o = oracle_unrolled_grad(spec, x, y, &loss, OracleTarget::PerStep(t))?;
        let (e, _) = grad_saf_e_step(spec, saf.saf_step(t)?, t, steps, y, &loss)?;
        let (oo, _) = grad_ottt_o_step(spec, &ottt[t - 1], steps, y, &loss)?;
        report.absorb(e.diffs(&o)?);
        report.absorb(oo.diffs(&o)?);
    }
    let o = oracle_unrolled_grad(spec, x, y, &loss, OracleTarget::Final)?;
    let f = grad_saf_f(&saf, y, spec, &loss, DerivativeMode::Surrogate)?;
    report.absorb(f.diffs(&o)?);
    let o = oracle_unrolled_grad(spec, x, y, &loss, OracleTarget::SummedPerStep)?;
    let a = grad_ottt_a(&lif, y, spec, &loss)?;
    report.absorb(a.diffs(&o)?);
    report.compared = steps;
    report.status = if report.max_abs <= ORACLE_TOL {
        Status::Pass
    } else {
        Status::Fail
    };
    Ok(report)
}

/// Seed of trial `i` in a suite run from `base`.
pub fn trial_seed(base: u64, i: u64) -> u64 {
    base.wrapping_mul(1_000_003).wrapping_add(i)
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub suite: Suite,
    pub base_seed: u64,
    /// Requested number of decided trials.
    pub requested: usize,
    pub reports: Vec<ComparisonReport>,
    pub elapsed: Duration,
}

impl SuiteReport {
    pub fn count(&self, status: Status) -> usize {
        self.reports.iter().filter(|r| r.status == status).count()
    }

    /// Trials that were compared and produced a verdict.
    pub fn decided(&self) -> usize {
        self.count(Status::Pass) + self.count(Status::Fail)
    }

    /// Guarded steps over all steps.
    pub fn trip_rate(&self) -> f64 {
        let trips: usize = self.reports.iter().map(|r| r.trips).sum();
        let total: usize = self.reports.iter().map(|r| r.trips + r.compared).sum();
        if total == 0 {
            0.0
        } else {
            trips as f64 / total as f64
        }
    }

    pub fn pass_rate(&self) -> f64 {
        let d = self.decided();
        if d == 0 {
            0.0
        } else {
            self.count(Status::Pass) as f64 / d as f64
        }
    }

    pub fn max_rel(&self) -> f64 {
        self.reports.iter().fold(0.0, |m, r| m.max(r.max_rel))
    }

    pub fn max_abs(&self) -> f64 {
        self.reports.iter().fold(0.0, |m, r| m.max(r.max_abs))
    }

    pub fn resamples(&self) -> usize {
        self.reports.iter().map(|r| r.resamples).sum()
    }

    /// Suite-level verdict.
    pub fn ok(&self) -> bool {
        match self.suite {
            Suite::FeedbackDirection => self.decided() >= self.requested && self.pass_rate() >= FEEDBACK_MIN_POSITIVE,
            Suite::Forward => {
                self.count(Status::Fail) == 0 && self.decided() >= self.requested && self.trip_rate() < MAX_TRIP_RATE
            }
            _ => self.count(Status::Fail) == 0 && self.decided() >= self.requested,
        }
    }

    pub fn failures(&self) -> impl Iterator<Item = &ComparisonReport> {
        self.reports.iter().filter(|r| r.status == Status::Fail)
    }

    pub fn summary_line(&self) -> String {
        let mut s = format!(
            "{:<22} {} | trials {} pass {} fail {} excluded {} inconclusive {} | max_rel {:.2e} max_abs {:.2e}",
            self.suite.name(),
            if self.ok() { "OK  " } else { "FAIL" },
            self.reports.len(),
            self.count(Status::Pass),
            self.count(Status::Fail),
            self.count(Status::Excluded),
            self.count(Status::Inconclusive),
            self.max_rel(),
            self.max_abs(),
        );
        match self.suite {
            Suite::Forward => s.push_str(&format!(" | trip rate {:.4}%", 100.0 * self.trip_rate())),
            Suite::FeedbackDirection => s.push_str(&format!(" | positive {:.1}%", 100.0 * self.pass_rate())),
            _ => {}
        }
        s.push_str(&format!(" | {:.2}s", self.elapsed.as_secs_f64()));
        s
    }
}

/// Runs seeded trials of `suite` until `trials` of them are decided (pass
/// or fail), drawing at most five times as many. Excluded and inconclusive
/// trials stay in the report.
pub fn run_suite(suite: Suite, base_seed: u64, trials: usize, exec: Execution) -> Result<SuiteReport> {
    let started = Instant::now();
    let mut reports: Vec<ComparisonReport> = Vec::with_capacity(trials);
    let cap = trials * 5;
    let mut next = 0usize;
    loop {
        let decided = reports
            .iter()
            .filter(|r| matches!(r.status, Status::Pass | Status::Fail))
            .count();
        let want = trials.saturating_sub(decided);
        if want == 0 || next >= cap {
            break;
        }
        let batch = want.min(cap - next);
        let start = next;
        let out = exec.map(batch, |i| {
            let cfg = TrialConfig::for_suite(suite, trial_seed(base_seed, (start + i) as u64));
            suite.check(&cfg)
        });
        for r in out {
            reports.push(r?);
        }
        next += batch;
    }
    Ok(SuiteReport {
        suite,
        base_seed,
        requested: trials,
        reports,
        elapsed: started.elapsed(),
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:?}"))
}

pub fn write_reports_csv(suites: &[SuiteReport], mut w: impl Write) -> std::io::Result<()> {
    writeln!(
        w,
        "suite,seed,status,max_abs,max_rel,corr,mae,inner_product,trips,compared,resamples,detail,config"
    )?;
    for s in suites {
        for r in &s.reports {
            writeln!(
                w,
                "{},{},{},{:?},{:?},{},{},{},{},{},{},\"{}\",\"{}\"",
                r.suite.name(),
                r.config.seed,
                r.status.name(),
                r.max_abs,
                r.max_rel,
                opt(r.corr),
                opt(r.mae),
                opt(r.inner_product),
                r.trips,
                r.compared,
                r.resamples,
                r.detail.replace('"', "'"),
                r.config
            )?;
        }
    }
    Ok(())
}
