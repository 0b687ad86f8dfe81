use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::Rng;
use rdnet_core::info::{self, Source};
use rdnet_core::{ActivationDataset, DiscreteJoint, Estimator, EstimatorConfig, Var, VertexId};
use rdnet_testkit as kit;

fn x(i: u32) -> Var {
    Var::neuron("x", 0, i)
}

fn y() -> Var {
    Var::label("Y")
}

fn exact(j: &DiscreteJoint) -> Estimator<'_> {
    Estimator::new(Source::Joint(j), &EstimatorConfig::exact()).unwrap()
}

/// Random joint over the binary variables x0..x(n-1).
fn joint(seed: u64, n: u32) -> DiscreteJoint {
    kit::random_joint(&mut kit::rng(seed), n, 0)
}

/// Discrete dataset with `n` rows: three neuron columns over small alphabets
/// and one label.
fn discrete_data(seed: u64, n: usize) -> ActivationDataset {
    let mut rng = kit::rng(seed);
    let mut data = ActivationDataset::new(n);
    let mut prev: Vec<f64> = (0..n).map(|_| rng.random_range(0..3) as f64).collect();
    for k in 0..3 {
        // Each column partly copies the previous one so the estimates are not all zero.
        let col: Vec<f64> = prev
            .iter()
            .map(|p| if rng.random_bool(0.6) { *p } else { rng.random_range(0..4) as f64 })
            .collect();
        data.insert_neuron(VertexId::new("n", 1, k), col.clone()).unwrap();
        prev = col;
    }
    let labels: Vec<i64> = prev.iter().map(|p| if rng.random_bool(0.8) { (*p as i64) % 2 } else { rng.random_range(0..2) }).collect();
    data.insert_label("Y".into(), labels).unwrap();
    data
}

fn n(k: u32) -> Var {
    Var::neuron("n", 1, k)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn chain_rule_splits_mutual_information(seed in any::<u64>(), n in 3u32..=4) {
        let j = joint(seed, n);
        let e = exact(&j);
        let cond: Vec<Var> = (2..n).map(x).collect();
        let (s1, s2) = ([x(0)], [x(1)]);
        let mi = e.mutual_info(&s1, &s2).unwrap();
        let cmi = e.conditional_mi(&s1, &s2, &cond).unwrap();
        let co = e.co_information(&[&s1, &s2, &cond]).unwrap();
        prop_assert!((mi - (cmi + co)).abs() < 1e-9);
    }

    #[test]
    fn nonnegative_quantities_stay_nonnegative(seed in any::<u64>(), n in 2u32..=4) {
        let j = joint(seed, n);
        let e = exact(&j);
        let all: Vec<Var> = (0..n).map(x).collect();
        prop_assert!(e.entropy(&all).unwrap() >= 0.0);
        prop_assert!(e.mutual_info(&all[..1], &all[1..]).unwrap() >= 0.0);
        prop_assert!(e.conditional_mi(&all[..1], &all[1..2], &all[2..]).unwrap() >= 0.0);
        prop_assert!(e.total_correlation(&all).unwrap() >= 0.0);
    }

    #[test]
    fn mutual_information_is_symmetric(seed in any::<u64>()) {
        let j = joint(seed, 4);
        let e = exact(&j);
        let (a, b) = ([x(0), x(2)], [x(1), x(3)]);
        prop_assert!((e.mutual_info(&a, &b).unwrap() - e.mutual_info(&b, &a).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn binned_matches_exact_on_discrete_data(seed in any::<u64>(), bins in 4usize..=30) {
        let data = discrete_data(seed, 400);
        let ex = Estimator::new(Source::Data(&data), &EstimatorConfig::exact()).unwrap();
        let bn = Estimator::new(Source::Data(&data), &EstimatorConfig::binned(bins)).unwrap();
        let (a, b, c) = ([n(0)], [n(1), n(2)], [y()]);
        prop_assert!((ex.mutual_info(&a, &b).unwrap() - bn.mutual_info(&a, &b).unwrap()).abs() < 1e-9);
        prop_assert!((ex.conditional_mi(&a, &c, &b).unwrap() - bn.conditional_mi(&a, &c, &b).unwrap()).abs() < 1e-9);
        prop_assert!((ex.co_information(&[&a, &b, &c]).unwrap() - bn.co_information(&[&a, &b, &c]).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn estimates_are_deterministic(seed in any::<u64>()) {
        let data = discrete_data(seed, 200);
        for cfg in [EstimatorConfig::exact(), EstimatorConfig::binned(3), EstimatorConfig::kl()] {
            let a = Estimator::new(Source::Data(&data), &cfg).unwrap().mutual_info(&[n(0), n(1)], &[y()]).unwrap();
            let b = Estimator::new(Source::Data(&data), &cfg).unwrap().mutual_info(&[n(0), n(1)], &[y()]).unwrap();
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn kl_bound_is_nonnegative(seed in any::<u64>()) {
        let data = discrete_data(seed, 300);
        let bound = info::mutual_info(&[n(0), n(2)], &[y()], &data, &EstimatorConfig::kl()).unwrap();
        prop_assert!(bound >= 0.0);
    }
}

#[test]
fn independent_variables_carry_no_shared_information() {
    let j = DiscreteJoint::from_weights(vec![(x(0), 2), (x(1), 2), (x(2), 2)], |_| 1.0).unwrap();
    let e = exact(&j);
    assert_abs_diff_eq!(e.total_correlation(&[x(0), x(1), x(2)]).unwrap(), 0.0, epsilon = 1e-12);
    assert_abs_diff_eq!(e.conditional_mi(&[x(0)], &[x(1)], &[x(2)]).unwrap(), 0.0, epsilon = 1e-12);
    assert_abs_diff_eq!(e.co_information(&[&[x(0)], &[x(1)], &[x(2)]]).unwrap(), 0.0, epsilon = 1e-12);
    assert_abs_diff_eq!(e.mutual_info(&[x(0)], &[x(1)]).unwrap(), 0.0, epsilon = 1e-12);
}

#[test]
fn empty_condition_reduces_to_mutual_information() {
    let j = joint(9, 3);
    let e = exact(&j);
    assert_eq!(
        e.conditional_mi(&[x(0)], &[x(1), x(2)], &[]).unwrap(),
        e.mutual_info(&[x(0)], &[x(1), x(2)]).unwrap()
    );
}

#[test]
fn two_copies_of_a_bit_correlate_by_one_bit() {
    let j = DiscreteJoint::from_weights(vec![(x(0), 2), (x(1), 2)], |o| if o[0] == o[1] { 1.0 } else { 0.0 }).unwrap();
    assert_abs_diff_eq!(
        info::total_correlation(&[x(0), x(1)], &j, &EstimatorConfig::exact()).unwrap(),
        1.0,
        epsilon = 1e-12
    );
}

#[test]
fn natural_log_base_scales_by_ln2() {
    let j = joint(3, 3);
    let bits = exact(&j).mutual_info(&[x(0)], &[x(1), x(2)]).unwrap();
    let cfg = EstimatorConfig {
        log_base: info::LogBase::Nats,
        ..EstimatorConfig::exact()
    };
    let nats = Estimator::new(Source::Joint(&j), &cfg).unwrap().mutual_info(&[x(0)], &[x(1), x(2)]).unwrap();
    assert_abs_diff_eq!(nats, bits * std::f64::consts::LN_2, epsilon = 1e-12);
}
