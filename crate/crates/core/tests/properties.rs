use std::f64::consts::{FRAC_PI_2, PI};

use hrsim::analytic::{hahn_echo_signal, hahn_ramsey_signal, hr_signal_biased, ramsey_signal, BiasParams};
use hrsim::noise::{chi_filter, FilterKind, NoiseParams};
use hrsim::sensitivity::{min_detectable_field, optimal_theta, ReadoutModel};
use hrsim::spin::{propagate, Propagate, PulseSequence, SequenceKind, SpinState};
use num_complex::Complex64;
use proptest::prelude::*;

fn kind() -> impl Strategy<Value = SequenceKind> {
    prop_oneof![
        Just(SequenceKind::Ramsey),
        Just(SequenceKind::HahnEcho),
        Just(SequenceKind::HahnRamsey)
    ]
}

fn state() -> impl Strategy<Value = SpinState> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
        .prop_filter("nonzero", |(a, b, c, d)| a * a + b * b + c * c + d * d > 1e-3)
        .prop_map(|(a, b, c, d)| {
            let n = (a * a + b * b + c * c + d * d).sqrt();
            SpinState::new(Complex64::new(a / n, b / n), Complex64::new(c / n, d / n)).unwrap()
        })
}

fn noise() -> impl Strategy<Value = NoiseParams> {
    (0.05..20.0f64, 0.0..5.0f64).prop_map(|(l, g)| NoiseParams::ou(l, g).unwrap())
}

proptest! {
    #[test]
    fn density_matrix_and_state_agree(
        k in kind(), s in state(), theta in 0.01..FRAC_PI_2, tau in 0.0..4.0f64,
        detuning in -10.0..10.0f64, eps in -3.0..3.0f64,
    ) {
        let seq = PulseSequence::standard(k, theta, tau).unwrap();
        let phases = seq.coherent_phases(detuning, eps);
        let via_state = propagate(&s, &seq, &phases).unwrap().to_density();
        let via_rho = propagate(&s.to_density(), &seq, &phases).unwrap();
        prop_assert!(via_state.max_abs_diff(&via_rho) < 1e-12);
    }

    #[test]
    fn global_phase_is_unobservable(s in state(), phi in -PI..PI, theta in 0.01..FRAC_PI_2, tau in 0.0..4.0f64) {
        let seq = PulseSequence::standard(SequenceKind::HahnRamsey, theta, tau).unwrap();
        let phases = seq.coherent_phases(1.7, 0.0);
        let a = propagate(&s, &seq, &phases).unwrap().sigma_z();
        let b = propagate(&s.with_global_phase(phi), &seq, &phases).unwrap().sigma_z();
        prop_assert!((a - b).abs() < 1e-13);
    }

    #[test]
    fn sequence_unitaries_are_unitary(k in kind(), theta in 0.01..FRAC_PI_2, tau in 0.0..10.0f64, d in -50.0..50.0f64) {
        let seq = PulseSequence::standard(k, theta, tau).unwrap();
        let u = seq.unitary(&seq.coherent_phases(d, 0.0)).unwrap();
        prop_assert!(u.unitarity_defect() < 1e-12);
    }

    #[test]
    fn noiseless_closed_form_matches_propagation(
        theta in 0.01..FRAC_PI_2, detuning in -30.0..30.0f64, tau in 0.0..6.0f64, eps in -5.0..5.0f64,
    ) {
        let seq = PulseSequence::standard(SequenceKind::HahnRamsey, theta, tau).unwrap();
        let direct = propagate(&SpinState::up(), &seq, &seq.coherent_phases(detuning, eps)).unwrap().sigma_z();
        let closed = hr_signal_biased(theta, detuning, &BiasParams { epsilon: eps }, &NoiseParams::none(), tau);
        prop_assert!((direct - closed).abs() < 1e-10);
    }

    #[test]
    fn signals_are_bounded(p in noise(), theta in 0.01..FRAC_PI_2, d in -20.0..20.0f64, tau in 0.0..20.0f64) {
        for s in [hahn_ramsey_signal(theta, d, &p, tau), ramsey_signal(d, &p, tau), hahn_echo_signal(&p, tau)] {
            prop_assert!(s.is_finite() && s.abs() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn hahn_ramsey_reduces_to_echo(p in noise(), tau in 0.0..20.0f64) {
        let hr = hahn_ramsey_signal(FRAC_PI_2, 0.0, &p, tau);
        prop_assert!((hr - hahn_echo_signal(&p, tau)).abs() < 1e-12);
    }

    #[test]
    fn filter_exponents_are_nonnegative(p in noise(), tau in 0.001..10.0f64) {
        for k in FilterKind::ALL {
            prop_assert!(chi_filter(k, &p, tau).unwrap() >= -1e-15);
        }
    }

    #[test]
    fn min_field_decreases_with_time_and_counts(
        tau in 0.01..100.0f64, alpha in 0.01..0.24f64, beta in 0.001..1.0f64, k in 1.01..4.0f64,
    ) {
        let base = ReadoutModel::from_contrast(alpha, beta).unwrap();
        let b0 = min_detectable_field(&base, tau, 2.8).unwrap();
        prop_assert!(min_detectable_field(&base, k * tau, 2.8).unwrap() < b0);
        prop_assert!(min_detectable_field(&ReadoutModel::from_contrast(alpha * k, beta).unwrap(), tau, 2.8).unwrap() < b0);
        prop_assert!(min_detectable_field(&ReadoutModel::from_contrast(alpha, beta * k).unwrap(), tau, 2.8).unwrap() < b0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Rescaling all rates by k and all times by 1/k leaves the optimum unchanged.
    #[test]
    fn optimal_theta_is_scale_invariant(l in 0.5..5.0f64, g in 0.1..2.0f64, d in 0.5..6.0f64, k in 0.2..5.0f64) {
        let taus = [0.1, 0.3, 0.6, 1.2];
        let a = optimal_theta(&NoiseParams::ou(l, g).unwrap(), d, &taus).unwrap();
        let scaled: Vec<f64> = taus.iter().map(|t| t / k).collect();
        let b = optimal_theta(&NoiseParams::ou(k * l, k * g).unwrap(), k * d, &scaled).unwrap();
        prop_assert!((a - b).abs() < 1e-6, "{} vs {}", a, b);
    }
}
