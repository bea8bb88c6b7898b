use super::*;
use crate::data::make_two_moons;

fn cfg(extra: &str) -> ExperimentConfig {
    let text = format!("dataset = two-moons\ndataset.n = 64\nhidden = 8\nbatch_size = 16\nepochs = 2\n{extra}");
    ExperimentConfig::parse("test", &text, &[]).unwrap()
}

#[test]
fn zero_lr_keeps_parameters() {
    for engine in ["saf-e", "saf-f", "ottt-o", "ottt-a"] {
        let c = cfg(&format!("lr = 0\nengine = {engine}"));
        let (train_set, test_set) = c.load_dataset().unwrap();
        let init = init_network(&c, 2, 2).unwrap();
        let (spec, m) = train_on(&c, &train_set, &test_set, Execution::Sequential).unwrap();
        assert_eq!(spec, init, "{engine}");
        assert_eq!(m.iterations, 8);
    }
}

#[test]
fn optimizer_step_counts() {
    let (train_set, test_set) = cfg("").load_dataset().unwrap();
    let run = |extra: &str| train_on(&cfg(extra), &train_set, &test_set, Execution::Sequential).unwrap().1;
    assert_eq!(run("engine = saf-e").optimizer_steps, 8 * 6);
    assert_eq!(run("engine = saf-e\naccumulate = true").optimizer_steps, 8);
    assert_eq!(run("engine = ottt-o\nfreeze_within_sequence = true").optimizer_steps, 8 * 6);
    assert_eq!(run("engine = saf-f").optimizer_steps, 8);
    assert_eq!(run("engine = ottt-a\nmax_iterations = 3").optimizer_steps, 3);
}

#[test]
fn saf_e_and_ottt_o_trajectories_match() {
    let (train_set, test_set) = cfg("").load_dataset().unwrap();
    let a = train_on(&cfg("engine = saf-e\nlr = 0.5"), &train_set, &test_set, Execution::Parallel).unwrap();
    let b = train_on(&cfg("engine = ottt-o\nlr = 0.5"), &train_set, &test_set, Execution::Parallel).unwrap();
    assert!(a.0.max_abs_param_diff(&b.0) <= 1e-10);
    assert_ne!(a.0, init_network(&cfg(""), 2, 2).unwrap());
}

#[test]
fn reproducible_across_execution_modes() {
    let c = cfg("engine = saf-f\nencoding = spike");
    let (train_set, test_set) = c.load_dataset().unwrap();
    let (s1, m1) = train_on(&c, &train_set, &test_set, Execution::Sequential).unwrap();
    let (s2, m2) = train_on(&c, &train_set, &test_set, Execution::Parallel).unwrap();
    assert_eq!(s1, s2);
    assert!(m1.same_outcome(&m2));
}

#[test]
fn divergence_reports_last_good_spec() {
    let c = cfg("");
    let (mut train_set, test_set) = c.load_dataset().unwrap();
    train_set.samples[5].features[0] = f64::NAN;
    match train_on(&c, &train_set, &test_set, Execution::Sequential) {
        Err(Error::Diverged { last_good, .. }) => assert!(last_good.weights.iter().all(|w| w.is_finite())),
        other => panic!("expected divergence, got {:?}", other.map(|r| r.1.iterations)),
    }
}

#[test]
fn checkpoint_round_trip_replays_normalization() {
    let c = cfg("");
    let (train_set, _) = c.load_dataset().unwrap();
    let spec = init_network(&c, 2, 2).unwrap();
    let text = write_checkpoint(&spec, &train_set.normalization);
    let (spec2, norm) = read_checkpoint("ckpt", &text).unwrap();
    assert_eq!(spec, spec2);
    assert_eq!(norm, train_set.normalization);
    let (raw, _) = c.load_raw_split().unwrap();
    for (r, s) in raw.samples.iter().zip(&train_set.samples) {
        assert_eq!(norm.apply(&r.features).unwrap(), s.features);
    }
}

#[test]
fn metrics_csv_has_one_row_per_epoch() {
    let c = cfg("test_fraction = 0.25");
    let (train_set, test_set) = c.load_dataset().unwrap();
    let (_, m) = train_on(&c, &train_set, &test_set, Execution::Sequential).unwrap();
    let mut buf = Vec::new();
    m.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 2);
    assert!(text.starts_with("epoch,split,accuracy,loss,total_rate,rate_1,rate_2,sec_per_iter"));
    assert!(m.epochs.iter().all(|e| e.firing_rates.iter().all(|r| (0.0..=1.0).contains(r))));
    assert!(m.summary().contains("saf-streaming"));
}

#[test]
fn empty_training_set_is_rejected() {
    let c = cfg("");
    let mut d = make_two_moons(4, 0.0, 0).unwrap();
    d.samples.clear();
    assert!(train_on(&c, &d, &d, Execution::Sequential).is_err());
}
