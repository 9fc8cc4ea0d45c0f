use proptest::prelude::*;

use qvuln::adversary::{optimal_attack_threshold, ThresholdBand};
use qvuln::bounds::{ceil_count, epsilon_sq_max, fidelity_floor, n_state_real, BoundQuery};
use qvuln::certification::{pure_characteristic, PauliLabel};
use qvuln::classifier::ClassifierPair;
use qvuln::quantum::{apply_channel, fidelity, hs_distance, trace_distance, DensityMatrix};
use qvuln::sampling::{
    sample_haar_state, sample_haar_unitary, sample_perturbation_unitary, sample_random_channel, PerturbationMode,
    PerturbationSpec, RngStream,
};

fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    RngStream::new(seed, 0).rng()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fidelity_is_symmetric_bounded_and_phase_blind(seed in any::<u64>(), d in 2usize..9, alpha in 0.0..6.3f64) {
        let mut r = rng(seed);
        let a = sample_haar_state(d, &mut r).unwrap();
        let b = sample_haar_state(d, &mut r).unwrap();
        let f = fidelity(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert!((f - fidelity(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!((f - fidelity(&a.with_global_phase(alpha), &b).unwrap()).abs() < 1e-12);
        let (da, db) = (a.to_density(), b.to_density());
        prop_assert!((f - fidelity(&da, &db).unwrap()).abs() < 1e-6);
        let t = trace_distance(&da, &db).unwrap();
        prop_assert!(t <= (1.0 - f * f).sqrt() + 1e-9);
    }

    #[test]
    fn haar_unitaries_are_special_and_hs_is_a_metric(seed in any::<u64>(), d in 2usize..9) {
        let mut r = rng(seed);
        let u = sample_haar_unitary(d, true, &mut r).unwrap();
        let v = sample_haar_unitary(d, true, &mut r).unwrap();
        let w = sample_haar_unitary(d, true, &mut r).unwrap();
        prop_assert!((u.determinant() - num_complex::Complex64::new(1.0, 0.0)).norm() < 1e-8);
        let uv = hs_distance(&u, &v).unwrap();
        prop_assert!((uv - hs_distance(&v, &u).unwrap()).abs() < 1e-12);
        prop_assert!(uv <= hs_distance(&u, &w).unwrap() + hs_distance(&w, &v).unwrap() + 1e-12);
        prop_assert!(uv <= 2.0 * (d as f64).sqrt() + 1e-12);
        let lu = w.compose(&u).unwrap();
        let lv = w.compose(&v).unwrap();
        prop_assert!((hs_distance(&lu, &lv).unwrap() - uv).abs() < 1e-9);
    }

    #[test]
    fn perturbations_hit_their_magnitude(seed in any::<u64>(), d in 2usize..9, frac in 0.0..1.0f64, planar in any::<bool>()) {
        let mut r = rng(seed);
        let b = sample_haar_state(d, &mut r).unwrap();
        let (mode, cap) = if planar {
            (PerturbationMode::Planar, 8f64.sqrt())
        } else {
            (PerturbationMode::HaarDirection, 2.0)
        };
        let eps = frac * cap * 0.999;
        let v = sample_perturbation_unitary(d, &PerturbationSpec::new(eps, mode), Some(&b), &mut r).unwrap();
        let id = qvuln::quantum::UnitaryOperator::identity(d);
        prop_assert!((hs_distance(&v, &id).unwrap() - eps).abs() < 1e-9);
    }

    #[test]
    fn channels_map_states_to_states(seed in any::<u64>(), d in 2usize..6, rank in 1usize..5) {
        let mut r = rng(seed);
        let ch = sample_random_channel(d, rank, &mut r).unwrap();
        let rho = sample_haar_state(d, &mut r).unwrap().to_density();
        let out = apply_channel(&ch, &rho).unwrap();
        prop_assert!(DensityMatrix::new(out.matrix().clone()).is_ok());
    }

    #[test]
    fn labels_ignore_global_phase(seed in any::<u64>(), d in 2usize..9, th in 0.01..0.99f64, tc in 0.01..0.99f64, alpha in 0.0..6.3f64) {
        let mut r = rng(seed);
        let b = sample_haar_state(d, &mut r).unwrap();
        let psi = sample_haar_state(d, &mut r).unwrap();
        let pair = ClassifierPair::thresholds(b, th, tc).unwrap();
        prop_assert_eq!(
            pair.hypothesis.label(&psi).unwrap(),
            pair.hypothesis.label(&psi.with_global_phase(alpha)).unwrap()
        );
        prop_assert_eq!(pair.misclassified(&psi).unwrap(), pair.misclassified(&psi.with_global_phase(alpha)).unwrap());
    }

    #[test]
    fn closed_form_cost_is_zero_exactly_inside_the_band(seed in any::<u64>(), d in 2usize..17, th in 0.01..0.99f64, tc in 0.01..0.99f64) {
        let mut r = rng(seed);
        let b = sample_haar_state(d, &mut r).unwrap();
        let psi = sample_haar_state(d, &mut r).unwrap();
        let pair = ClassifierPair::thresholds(b.clone(), th, tc).unwrap();
        let band = ThresholdBand::new(th, tc);
        let p = b.overlap_sq(&psi).unwrap();
        let res = optimal_attack_threshold(&pair, &psi, 1.0).unwrap();
        prop_assert!(res.cost_infidelity >= 0.0);
        prop_assert_eq!(res.cost_infidelity == 0.0, band.contains(p));
        prop_assert_eq!(res.success, !band.is_empty());
        if let Some(w) = res.witness {
            prop_assert!(pair.misclassified(&w).unwrap());
            prop_assert!(1.0 - fidelity(&psi, &w).unwrap() <= res.cost_infidelity + 1e-8);
        }
    }

    #[test]
    fn bound_identities(d in 1usize..512, mu in 0.001..1.0f64, r in 0.0..0.99f64, delta in 0.001..0.999f64) {
        let q = BoundQuery::new(d, mu, r, delta).unwrap();
        let eps = epsilon_sq_max(&q).unwrap();
        let floor = fidelity_floor(&q).unwrap();
        prop_assert!((1.0 - floor.raw - eps / (2.0 * d as f64)).abs() < 1e-12);
        prop_assert!(floor.clamped >= 0.0 && floor.clamped <= 1.0);
        let n = n_state_real(&q).unwrap();
        let c = ceil_count(n) as f64;
        prop_assert!(c + 1e-6 * n >= n && c < n + 1.0);
    }

    #[test]
    fn pauli_words_round_trip(word in "[IXYZ]{1,8}") {
        prop_assert_eq!(PauliLabel::parse(&word).unwrap().word(), word);
    }

    #[test]
    fn characteristic_function_has_unit_norm(seed in any::<u64>(), n in 1usize..6) {
        let psi = sample_haar_state(1 << n, &mut rng(seed)).unwrap();
        let total: f64 = pure_characteristic(&psi).unwrap().iter().map(|x| x * x).sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
    }
}
