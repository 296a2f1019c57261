use std::f64::consts::TAU;

use proptest::prelude::*;

use qubit_variance::energy::{
    state_energies, state_sigmas, variance_expectation_closed_form, variance_expectation_matrix_route, variance_matrix,
    EnergySample,
};
use qubit_variance::error::Error;
use qubit_variance::experiments::{analytic_band, reduced_to_us, sliding_mean, us_to_reduced, zeno_jump_schedule};
use qubit_variance::hds::{hamiltonian_value, integrate_hds, SamplingSpec};
use qubit_variance::io::table::{from_csv_str, from_json_str, to_csv_string, to_json_string};
use qubit_variance::io::{ConfigOverrides, DataTable, RunConfig};
use qubit_variance::model::{bloch_coords, hds_from_spinor, spinor_from_hds, wrap_pi, DriveSpec, HdsState};
use qubit_variance::ode::SolverOptions;

fn interior_state() -> impl Strategy<Value = HdsState> {
    (-0.999f64..0.999, 0.0..TAU, 0.0..TAU).prop_map(|(a, d, t)| HdsState::new(a, d, t))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn spinor_is_normalized(s in interior_state()) {
        let p = spinor_from_hds(&s).unwrap();
        prop_assert!((p.norm_sqr() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn canonical_round_trip(s in interior_state()) {
        let back = hds_from_spinor(&spinor_from_hds(&s).unwrap(), None).unwrap().state;
        prop_assert!((back.alpha - s.alpha).abs() < 1e-12);
        prop_assert!(wrap_pi(back.delta - s.delta).abs() < 1e-6);
        prop_assert!(wrap_pi(back.theta_overall - s.theta_overall).abs() < 1e-6);
    }

    #[test]
    fn bloch_polar_cosine_is_alpha(s in interior_state()) {
        let b = bloch_coords(&s).unwrap();
        prop_assert!((b.theta.cos() - s.alpha).abs() < 1e-12);
    }

    #[test]
    fn mixture_reproduces_mean(s in interior_state(), e in -2.0f64..2.0) {
        let sample = EnergySample::from_state(0.0, &s, e, 1.0).unwrap();
        prop_assert!(sample.mixture_residual().abs() < 1e-10 * (1.0 + sample.e_a.abs() + sample.e_b.abs()));
    }

    #[test]
    fn variance_routes_agree(s in interior_state(), e in -2.0f64..2.0, k in 0.1f64..3.0) {
        // h is the canonical mean at unit coupling, V carries the coupling k
        let h = hamiltonian_value(s.alpha, s.delta, e);
        let closed = variance_expectation_closed_form(h, e, s.alpha, k);
        let matrix = variance_expectation_matrix_route(&spinor_from_hds(&s).unwrap(), &variance_matrix(h, e, k)).unwrap();
        prop_assert!((closed - matrix).abs() < 1e-12 * (1.0 + closed.abs()));
        prop_assert!(closed >= -1e-12);
    }

    #[test]
    fn sigmas_nonnegative(s in interior_state(), e in -2.0f64..2.0) {
        let h = hamiltonian_value(s.alpha, s.delta, e);
        let en = state_energies(s.alpha, h, e).unwrap();
        let (a, b) = state_sigmas(s.alpha, en.e_a, en.e_b, h);
        prop_assert!(a >= 0.0 && b >= 0.0);
    }

    #[test]
    fn band_contains_unit_interval_only(a in 1e-3f64..5e-2, tau in 0.0f64..5000.0) {
        let (h, sigma) = analytic_band(a, tau);
        prop_assert!(sigma >= 0.0);
        prop_assert!((h * h + sigma * sigma - 1.0).abs() < 1e-12);
    }

    #[test]
    fn schedule_alternates(a in 2e-3f64..3e-2, up in any::<bool>(), start in 0.0f64..500.0) {
        let level = if up { 1 } else { -1 };
        let horizon = 3.0 * TAU / a;
        let s = zeno_jump_schedule(a, level, start, horizon, None).unwrap();
        prop_assert!(s.segments.len() >= 2);
        for w in s.segments.windows(2) {
            prop_assert_eq!(w[1].freeze_level, -w[0].freeze_level);
            prop_assert_eq!(Some(w[1].tau_start), w[0].tau_jump);
        }
        let jumps = s.jump_times();
        prop_assert!(jumps.windows(2).all(|w| w[1] > w[0]));
        prop_assert!(jumps.iter().all(|&t| t > start && t <= start + horizon));
    }

    #[test]
    fn sliding_mean_of_constant(c in -10.0f64..10.0, n in 5usize..80, width in 0.5f64..20.0) {
        let taus: Vec<f64> = (0..n).map(|i| i as f64 * 0.37).collect();
        let vals = vec![c; n];
        for m in sliding_mean(&taus, &vals, width) {
            prop_assert!((m - c).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_conversion_inverts(dt in 0.0f64..5000.0, t_rabi in 1.0f64..200.0, a in 1e-3f64..1e-1) {
        let back = us_to_reduced(reduced_to_us(dt, t_rabi, a), t_rabi, a);
        prop_assert!((back - dt).abs() < 1e-9 * (1.0 + dt));
    }

    #[test]
    fn table_round_trip(rows in prop::collection::vec(prop::collection::vec(
        prop_oneof![4 => any::<f64>().prop_filter("finite", |v| v.is_finite()), 1 => Just(f64::NAN)], 3), 0..20)) {
        let mut t = DataTable::new("prop", &["x", "y", "z"]).with_meta("amplitude", 8e-3);
        for r in rows {
            t.push(r);
        }
        let csv = from_csv_str(&to_csv_string(&t, None).unwrap()).unwrap();
        prop_assert!(csv.same_bits(&t));
        let json = from_json_str(&to_json_string(&t, None).unwrap()).unwrap();
        prop_assert!(json.same_bits(&t));
    }

    #[test]
    fn config_rejects_bad_alpha(alpha in prop_oneof![1.0001f64..10.0, -10.0f64..-1.0001]) {
        let o = ConfigOverrides { alpha0: Some(alpha), ..Default::default() };
        let is_alpha_error = matches!(RunConfig::resolve(o), Err(Error::Config { field: "alpha0", .. }));
        prop_assert!(is_alpha_error);
    }

    #[test]
    fn config_rejects_reversed_span(t0 in -100.0f64..100.0, len in 0.0f64..100.0) {
        let o = ConfigOverrides { tau_span: Some((t0, t0 - len)), ..Default::default() };
        let is_span_error = matches!(RunConfig::resolve(o), Err(Error::Config { field: "tau_span", .. }));
        prop_assert!(is_span_error);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn constant_drive_conserves_energy(s in (-0.9f64..0.9, 0.0..TAU).prop_map(|(a, d)| HdsState::new(a, d, 0.0)),
                                       e in -1.5f64..1.5) {
        let traj = integrate_hds(&s, &DriveSpec::Constant { value: e }, (0.0, 30.0), &SolverOptions::default(),
                                 &SamplingSpec::Stride(0.25)).unwrap();
        prop_assert!(traj.hamiltonian_drift() < 1e-9, "drift {}", traj.hamiltonian_drift());
        prop_assert!(traj.states.iter().all(|st| st.alpha.abs() <= 1.0));
    }
}
