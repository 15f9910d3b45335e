use astro_float::{BigFloat, Consts, RoundingMode};
use proptest::prelude::*;

use sublearn::bounds::{
    bound_terms, solve_epsilon, uniform_convergence_bound, BoundInputs, Capacity,
};
use sublearn::model::{HypothesisPair, LossKind, LossSpec, Predictor, Sample, SubjectSet};
use sublearn::risk::{global_risk, FiniteDistribution};
use sublearn::schedule::{min_data_samples, rule_rhs, RangeSpec};
use sublearn::solver::{assignment_step, egrm_fit_alternating, AlternatingConfig, PredictorFamily};
use sublearn::stats::wilson;

const P: usize = 256;
const RM: RoundingMode = RoundingMode::ToEven;

fn big(x: f64) -> BigFloat {
    BigFloat::from_f64(x, P)
}

/// `2 bz^2 / eps^2 · ln m + bz^2 / btau^2 · m` in 256-bit arithmetic.
fn rhs_extended(m: u64, eps: f64, bz: f64, btau: f64, cc: &mut Consts) -> BigFloat {
    let bz2 = big(bz).mul(&big(bz), P, RM);
    let first = big(2.0)
        .mul(&bz2, P, RM)
        .div(&big(eps).mul(&big(eps), P, RM), P, RM)
        .mul(&big(m as f64).ln(P, RM, cc), P, RM);
    let second = bz2
        .div(&big(btau).mul(&big(btau), P, RM), P, RM)
        .mul(&big(m as f64), P, RM);
    first.add(&second, P, RM)
}

fn samples() -> impl Strategy<Value = Vec<Sample>> {
    prop::collection::vec((0u8..4, 0u8..3), 1..8).prop_map(|v| {
        v.into_iter()
            .map(|(x, y)| Sample::scalar(f64::from(x), f64::from(y) / 2.0).unwrap())
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn schedule_matches_extended_precision(m in 1u64..100_000, eps in 0.01f64..2.0, bz in 0.1f64..3.0, btau in 0.1f64..3.0) {
        let ranges = RangeSpec::new(bz, btau).unwrap();
        let rhs = rule_rhs(m, eps, &ranges).unwrap();
        prop_assume!((rhs - rhs.round()).abs() > 1e-9 * rhs.max(1.0));
        let mut cc = Consts::new().unwrap();
        let exact = rhs_extended(m, eps, bz, btau, &mut cc);
        let l = min_data_samples(m, eps, &ranges).unwrap();
        prop_assert!(big(l as f64).cmp(&exact).unwrap() > 0);
        prop_assert!(big((l - 1) as f64).cmp(&exact).unwrap() <= 0);
    }

    #[test]
    fn schedule_monotone_in_m(m in 1u64..10_000, eps in 0.05f64..1.0) {
        let r = RangeSpec::unit();
        prop_assert!(min_data_samples(m + 1, eps, &r).unwrap() > min_data_samples(m, eps, &r).unwrap());
    }

    #[test]
    fn bound_decreases_in_eps(m in 2u64..500, l in 2u64..5_000, h_tau in 1u64..4, h_z in 1u64..4, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        prop_assume!(h_tau <= 2 * m && h_z <= 2 * l);
        let inp = BoundInputs::new(m, l, RangeSpec::unit(), Capacity::Dimensions { h_tau, h_z }).unwrap();
        let floor = (1.0 / m as f64).max(1.0 / l as f64);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assume!(hi - lo > 1e-6);
        let e1 = floor + 1e-9 + lo * (2.0 - floor);
        let e2 = floor + 1e-9 + hi * (2.0 - floor);
        prop_assert!(bound_terms(&inp, e2).unwrap().log_total() < bound_terms(&inp, e1).unwrap().log_total());
    }

    #[test]
    fn solve_epsilon_round_trips(m in 50u64..2_000, l in 500u64..50_000, eta in 0.001f64..0.5) {
        let inp = BoundInputs::new(m, l, RangeSpec::unit(), Capacity::Dimensions { h_tau: 1, h_z: 2 }).unwrap();
        if let Ok(eps) = solve_epsilon(eta, &inp) {
            let back = uniform_convergence_bound(&inp, eps).unwrap();
            prop_assert!((back - eta).abs() < 1e-7);
        }
    }

    #[test]
    fn loss_is_clamped(y in -10.0f64..10.0, g in -10.0f64..10.0, upper in 0.1f64..5.0) {
        for kind in [LossKind::Squared, LossKind::Absolute, LossKind::ZeroOne] {
            let v = LossSpec::new(kind, 0.0, upper).unwrap().eval(y, g);
            prop_assert!((0.0..=upper).contains(&v));
        }
    }

    #[test]
    fn assignment_step_is_normalized(data in samples(), m in 1usize..4, vals in prop::collection::vec(0u8..3, 3)) {
        let subjects = SubjectSet::uniform(m).unwrap();
        let g = Predictor::PerSubject(vals[..m].iter().map(|&v| f64::from(v) / 2.0).collect());
        let loss = LossSpec::unit(LossKind::Squared);
        let dist = FiniteDistribution::uniform(data.clone()).unwrap();
        let table = assignment_step(&g, &dist, &subjects, &loss).unwrap();
        let hyp = HypothesisPair::new(g, sublearn::model::Assignment::Table(table));
        prop_assert!(hyp.check_normalized(&data, &subjects).is_ok());
    }

    #[test]
    fn alternating_trace_is_monotone(data in samples(), m in 1usize..4, seed in 0u64..1_000) {
        let subjects = SubjectSet::uniform(m).unwrap();
        let loss = LossSpec::unit(LossKind::Squared);
        let cfg = AlternatingConfig::new(50, 1e-12, 3, seed).unwrap();
        let dist = FiniteDistribution::uniform(data).unwrap();
        let fit = egrm_fit_alternating(&PredictorFamily::Table, &dist, &subjects, &loss, &cfg).unwrap();
        prop_assert!(fit.is_monotone());
        let r = global_risk(&fit.hypothesis, &dist, &subjects.distribution(), &loss).unwrap();
        prop_assert!((r - fit.risk).abs() < 1e-12);
    }

    #[test]
    fn wilson_contains_estimate(k in 0usize..100, extra in 0usize..100) {
        let n = k + extra + 1;
        let e = wilson(k, n);
        prop_assert!(e.ci_low <= e.value && e.value <= e.ci_high);
        prop_assert!(e.ci_low >= 0.0 && e.ci_high <= 1.0);
    }
}
