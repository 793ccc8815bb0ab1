//! Functionals, spectral values, norm channels and decay fitting.

mod common;

use std::f64::consts::PI;
use std::sync::Arc;

use common::{lattice, two_axis_perturbation};
use g2flow::diagnostics::*;
use g2flow::exterior::DIM;
use g2flow::flow::{perturbed_model, FlowKind, FlowState, ModePerturbation};
use g2flow::g2algebra::G2Structure;
use g2flow::lattice::{FormField, Lattice, Scheme};
use g2flow::Error;

fn series(f: impl Fn(f64) -> f64) -> Vec<(f64, f64)> {
    (0..200).map(|i| i as f64 * 0.05).map(|t| (t, f(t))).collect()
}

#[test]
fn exact_exponential_fits_exactly() {
    let s = series(|t| (-3.0 * t).exp());
    let fit = fit_decay_rate(&s, [0.0, 10.0], 1.0).unwrap();
    assert!((fit.fitted_rate - 3.0).abs() < 1e-9);
    assert!((fit.r_squared - 1.0).abs() < 1e-12);
    assert_eq!(fit.samples, 200);
}

#[test]
fn perturbed_exponential_fits_within_one_percent() {
    let s = series(|t| (-3.0 * t).exp() * (1.0 + 0.01 * t.sin()));
    let fit = fit_decay_rate(&s, [0.0, 10.0], 1.0).unwrap();
    assert!((fit.fitted_rate - 3.0).abs() < 0.03, "{}", fit.fitted_rate);
    assert!(fit.r_squared > 0.999 && fit.r_squared <= 1.0);
}

#[test]
fn fit_rejects_short_and_non_positive_series() {
    let s = series(|t| (-t).exp());
    assert!(matches!(fit_decay_rate(&s, [0.0, 0.3], 1.0), Err(Error::InsufficientData { .. })));
    let mut bad = s.clone();
    bad[50].1 = 0.0;
    assert!(matches!(fit_decay_rate(&bad, [0.0, 10.0], 1.0), Err(Error::NonPositiveSeries { .. })));
}

#[test]
fn tail_window_covers_the_last_sixty_percent() {
    let s = series(|t| (-t).exp());
    let w = tail_window(&s);
    let end = s.last().unwrap().0;
    assert!((w[0] - 0.4 * end).abs() < 1e-12 && w[1] == end);
}

#[test]
fn lambda1_on_flat_tori() {
    for (period, expect) in [(2.0 * PI, 1.0), (PI, 4.0)] {
        let lat = Lattice::new(&[0, 2], 16, period, Scheme::Spectral).unwrap();
        assert!((lambda1_exact_forms(&lat) - expect).abs() < 1e-14);
        let rq = lowest_rayleigh_quotient(&lat);
        assert!((rq - expect).abs() < 1e-10, "{rq}");
    }
}

#[test]
fn hitchin_functional_of_the_flat_model() {
    let s = G2Structure::model(&lattice(&[0], 32));
    let v = (2.0 * PI).powi(7);
    assert!((hitchin_functional(&s) - v).abs() < 1e-12 * v);
    assert!((hitchin_functional_wedge(&s) - v).abs() < 1e-12 * v);
}

#[test]
fn hitchin_functional_scales_with_power_seven_thirds() {
    let s = perturbed_model(&lattice(&[0, 1], 16), &two_axis_perturbation(1e-2)).unwrap();
    let h = hitchin_functional(&s);
    assert!((hitchin_functional_wedge(&s) - h).abs() < 1e-10 * h);
    for lam in [0.5f64, 2.0, 3.0] {
        let scaled = G2Structure::new(s.phi() * lam).unwrap();
        let expect = lam.powf(7.0 / 3.0) * h;
        assert!((hitchin_functional(&scaled) - expect).abs() < 1e-10 * expect);
        assert!((hitchin_functional_wedge(&scaled) - expect).abs() < 1e-10 * expect);
    }
}

#[test]
fn snapshot_of_the_reference_state() {
    let lat = lattice(&[0, 1], 8);
    let reference = Arc::new(G2Structure::model(&lat));
    let rec = diagnostic_snapshot(&FlowState::new((*reference).clone(), reference, FlowKind::Deturck));
    assert_eq!(rec.l2_theta, 0.0);
    assert_eq!(rec.ck_theta, [0.0; 4]);
    assert_eq!(rec.torsion_l2, 0.0);
    assert!(rec.scalar_identity_residual <= 1e-12);
    assert_eq!(rec.lambda_max, 0.0);
    assert!(rec.metric_log_band < 1e-15);
    assert!((rec.total_volume - (2.0 * PI).powi(7)).abs() < 1e-12 * rec.total_volume);
}

#[test]
fn snapshot_of_a_perturbed_state() {
    let lat = lattice(&[0, 1], 32);
    let reference = Arc::new(G2Structure::model(&lat));
    let s = perturbed_model(&lat, &two_axis_perturbation(1e-2)).unwrap();
    let rec = diagnostic_snapshot(&FlowState::new(s, reference, FlowKind::Deturck));
    assert!(rec.scalar_max > 0.0);
    assert!(rec.scalar_identity_residual <= 1e-6 * rec.scalar_max, "{rec:?}");
    assert!(rec.rhs_cross_residual <= 1e-5);
    assert!(rec.harmonic_residual <= g2flow::flow::HARMONIC_TOL);
    assert!(rec.torsion_l2 > 0.0 && rec.l2_theta > 0.0 && rec.lambda_max > 0.0);
    assert!(rec.hitchin_h < (2.0 * PI).powi(7));
    let line = serde_json::to_string(&rec).unwrap();
    assert_eq!(serde_json::from_str::<TimeSeriesRecord>(&line).unwrap(), rec);
}

#[test]
fn ck_norms_of_a_single_mode() {
    // θ = sin(2x₁) dx² ∧ dx³ ∧ dx⁴: |∇̄^k θ| peaks at 2^k
    let lat = lattice(&[0], 32);
    let theta = FormField::from_fn(&lat, 3, |x| g2flow::exterior::Form::basis(&[1, 2, 3]) * (2.0 * x[0]).sin());
    let c = ck_norms(&theta);
    for (k, v) in c.iter().enumerate() {
        assert!((v - 2f64.powi(k as i32)).abs() < 1e-12, "{c:?}");
    }
}

#[test]
fn c0_norm_is_linear_in_the_amplitude() {
    let lat = lattice(&[0], 16);
    let reference = Arc::new(G2Structure::model(&lat));
    let mut mode = [0i64; DIM];
    mode[0] = 1;
    let ratios: Vec<f64> = [1e-2, 1e-3, 1e-4]
        .iter()
        .map(|&eps| {
            let terms = [ModePerturbation { mode, component: [2, 3], amplitude: eps, phase: 0.0 }];
            let s = perturbed_model(&lat, &terms).unwrap();
            diagnostic_snapshot(&FlowState::new(s, reference.clone(), FlowKind::Deturck)).ck_theta[0] / eps
        })
        .collect();
    for r in &ratios {
        assert!((r - ratios[0]).abs() < 1e-9 * ratios[0], "{ratios:?}");
    }
}
