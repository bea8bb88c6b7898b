use super::*;
use crate::math::Rng;
use crate::neuron::NeuronParams;
use crate::surrogate::{LossKind, LossSpec};
use crate::topology::{forward_lif, forward_saf, ConnectionKind, ConnectionPlan, InitScheme};

fn loss(c: usize) -> LossSpec {
    LossSpec::new(LossKind::PerStep, 0.05, c).unwrap()
}

fn tiny(seed: u64, plan: ConnectionPlan, sizes: &[usize]) -> (NetworkSpec, Vec<Vector>) {
    let mut rng = Rng::new(seed);
    let init = InitScheme {
        weight_gain: 2.0,
        connection_gain: 2.0,
        bias_low: 0.2,
        bias_high: 0.8,
    };
    let spec = NetworkSpec::random(sizes, NeuronParams::new(0.5, 1.0).unwrap(), 4.0, plan, &init, &mut rng).unwrap();
    let x = rng.uniform_vector(sizes[0], 0.0, 1.5);
    (spec, vec![x; 4])
}

#[test]
fn single_unit_hand_check() {
    // 1-1 net, T = 1, drive 0.6·x: dW = x·(∂L/∂s)·sg(u).
    let mut spec = NetworkSpec::zeroed(&[1, 1], NeuronParams::new(0.5, 1.0).unwrap(), 4.0, ConnectionPlan::NONE).unwrap();
    spec.weights[0] = Matrix::from_rows(&[vec![0.6]]).unwrap();
    let x = vec![Vector::from_vec(vec![2.0])];
    let l = LossSpec::new(LossKind::PerStep, 1.0, 1).unwrap();
    let g = oracle_unrolled_grad(&spec, &x, 0, &l, OracleTarget::PerStep(1)).unwrap();
    // u = 1.2 fires; MSE grad = 2(1 − 1) = 0.
    assert_eq!(g.dw[0][(0, 0)], 0.0);
    spec.weights[0] = Matrix::from_rows(&[vec![0.3]]).unwrap();
    let g = oracle_unrolled_grad(&spec, &x, 0, &l, OracleTarget::PerStep(1)).unwrap();
    let z: f64 = (1.0 - 0.6) / 4.0;
    let sg = z.exp() / (1.0 + z.exp()).powi(2) / 4.0;
    let expected = 2.0 * (0.0 - 1.0) * sg * 2.0;
    assert!((g.dw[0][(0, 0)] - expected).abs() < 1e-15);
    let trace = forward_saf(&spec, &x).unwrap();
    let e = grad_saf_e(&trace, 1, 0, &spec, &l).unwrap();
    assert!((e.dw[0][(0, 0)] - expected).abs() < 1e-15);
}

#[test]
fn zero_loss_gradient_gives_zero_signal() {
    let (spec, x) = tiny(3, ConnectionPlan::NONE, &[2, 3, 2]);
    let trace = forward_saf(&spec, &x).unwrap();
    let sig = back_signal(&trace, 2, &Vector::zeros(2), &spec).unwrap();
    assert!(sig.g.iter().all(|v| v.max_abs() == 0.0));
    assert!(back_signal(&trace, 9, &Vector::zeros(2), &spec).is_err());
}

#[test]
fn zero_input_zero_weights_give_zero_weight_gradients() {
    let spec = NetworkSpec::zeroed(
        &[2, 3, 2],
        NeuronParams::default(),
        4.0,
        ConnectionPlan {
            kind: ConnectionKind::Feedback,
            p: 2,
            q: 0,
        },
    )
    .unwrap();
    let x = vec![Vector::zeros(2); 3];
    let saf = forward_saf(&spec, &x).unwrap();
    let lif = forward_lif(&spec, &x).unwrap();
    let l = loss(2);
    let sets = [
        grad_saf_e(&saf, 2, 1, &spec, &l).unwrap(),
        grad_saf_f(&saf, 1, &spec, &l, DerivativeMode::Surrogate).unwrap(),
        grad_ottt_o(&lif, 2, 1, &spec, &l).unwrap(),
        grad_ottt_a(&lif, 1, &spec, &l).unwrap(),
        grad_spike_representation(&saf, 1, &spec, &l).unwrap(),
        oracle_unrolled_grad(&spec, &x, 1, &l, OracleTarget::Final).unwrap(),
    ];
    for g in &sets {
        assert_eq!(g.weight_max_abs(), 0.0, "{}", g.engine);
    }
}

#[test]
fn engines_match_oracle_on_tiny_nets() {
    let plans = [
        ConnectionPlan::NONE,
        ConnectionPlan {
            kind: ConnectionKind::Feedforward,
            p: 1,
            q: 2,
        },
        ConnectionPlan {
            kind: ConnectionKind::Feedforward,
            p: 0,
            q: 1,
        },
        ConnectionPlan {
            kind: ConnectionKind::Feedback,
            p: 3,
            q: 0,
        },
    ];
    let l = loss(2);
    for (k, plan) in plans.into_iter().enumerate() {
        for seed in 0..10u64 {
            let (spec, x) = tiny(seed * 7 + k as u64, plan, &[3, 4, 3, 2]);
            let saf = forward_saf(&spec, &x).unwrap();
            let lif = forward_lif(&spec, &x).unwrap();
            for t in 1..=x.len() {
                let o = oracle_unrolled_grad(&spec, &x, 1, &l, OracleTarget::PerStep(t)).unwrap();
                let e = grad_saf_e(&saf, t, 1, &spec, &l).unwrap();
                let oo = grad_ottt_o(&lif, t, 1, &spec, &l).unwrap();
                assert!(e.max_abs_diff(&o).unwrap() < 1e-12);
                assert!(oo.max_abs_diff(&o).unwrap() < 1e-12);
            }
            let o = oracle_unrolled_grad(&spec, &x, 1, &l, OracleTarget::Final).unwrap();
            let f = grad_saf_f(&saf, 1, &spec, &l, DerivativeMode::Surrogate).unwrap();
            assert!(f.max_abs_diff(&o).unwrap() < 1e-12);
            let o = oracle_unrolled_grad(&spec, &x, 1, &l, OracleTarget::SummedPerStep).unwrap();
            let a = grad_ottt_a(&lif, 1, &spec, &l).unwrap();
            assert!(a.max_abs_diff(&o).unwrap() < 1e-12);
        }
    }
}

#[test]
fn ottt_a_is_the_ascending_sum() {
    let (spec, x) = tiny(5, ConnectionPlan::NONE, &[3, 4, 2]);
    let lif = forward_lif(&spec, &x).unwrap();
    let l = loss(2);
    let mut sum = GradientSet::zeros(&spec, Engine::OtttA, None);
    for t in 1..=x.len() {
        sum.add_assign(&grad_ottt_o(&lif, t, 0, &spec, &l).unwrap()).unwrap();
    }
    assert_eq!(grad_ottt_a(&lif, 0, &spec, &l).unwrap(), sum);
    let one = forward_lif(&spec, &x[..1]).unwrap();
    let a = grad_ottt_a(&one, 0, &spec, &l).unwrap();
    let o = grad_ottt_o(&one, 1, 0, &spec, &l).unwrap();
    assert_eq!(a.max_abs_diff(&o).unwrap(), 0.0);
}

#[test]
fn saf_f_shared_factors_scale_with_threshold() {
    for v_th in [1.0, 2.0] {
        let mut rng = Rng::new(21);
        let spec = NetworkSpec::random(
            &[3, 5, 4, 2],
            NeuronParams::new(0.5, v_th).unwrap(),
            4.0,
            ConnectionPlan {
                kind: ConnectionKind::Feedforward,
                p: 1,
                q: 2,
            },
            &InitScheme::default(),
            &mut rng,
        )
        .unwrap();
        let x = vec![rng.uniform_vector(3, 0.5, 2.0); 16];
        let saf = forward_saf(&spec, &x).unwrap();
        let l = loss(2);
        let f = grad_saf_f(&saf, 0, &spec, &l, DerivativeMode::ClampShared).unwrap();
        let mut sr = grad_spike_representation(&saf, 0, &spec, &l).unwrap();
        sr.scale(v_th);
        assert!(f.weight_max_rel_diff(&sr).unwrap() <= 1e-12);
    }
}

#[test]
fn oracle_refuses_large_instances() {
    let spec = NetworkSpec::zeroed(&[5, 2], NeuronParams::default(), 4.0, ConnectionPlan::NONE).unwrap();
    let x = vec![Vector::zeros(5)];
    assert!(matches!(
        oracle_unrolled_grad(&spec, &x, 0, &loss(2), OracleTarget::Final),
        Err(Error::InstanceTooLarge(_))
    ));
}

#[test]
fn csv_and_relative_diff() {
    let (spec, x) = tiny(9, ConnectionPlan::NONE, &[2, 2]);
    let saf = forward_saf(&spec, &x).unwrap();
    let g = grad_saf_e(&saf, 1, 0, &spec, &loss(2)).unwrap();
    let mut buf = Vec::new();
    g.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("engine,layer,index,value\nsaf-e,W0,0,"));
    assert_eq!(text.lines().count(), 1 + 4 + 2);
    assert_eq!(g.max_rel_diff(&g).unwrap(), 0.0);
    let mut h = g.clone();
    h.scale(2.0);
    let expected = if g.max_abs() == 0.0 { 0.0 } else { 0.5 };
    assert!((g.max_rel_diff(&h).unwrap() - expected).abs() < 1e-15);
}
