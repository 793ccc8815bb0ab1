//! Functionals, norms and decay-rate estimation for flow runs.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exterior::DIM;
use crate::flow::{self, FlowState, ModePerturbation};
use crate::g2algebra::{full_torsion, G2Structure};
use crate::lattice::{FormField, Lattice, Slot};
use crate::riemann::{self, tensor_norm2};

/// One diagnostic sample of a flow run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesRecord {
    pub step: usize,
    pub t: f64,
    /// `‖θ‖²_{L²}` in the reference metric.
    pub l2_theta: f64,
    /// `max |∇̄^k θ|` for `k = 0..=3`.
    pub ck_theta: [f64; 4],
    pub hitchin_h: f64,
    pub total_volume: f64,
    /// `∫ |T|²_g dv_g`.
    pub torsion_l2: f64,
    /// `max |R + |T|²|`.
    pub scalar_identity_residual: f64,
    /// `max |R|`.
    pub scalar_max: f64,
    /// `max Λ`.
    pub lambda_max: f64,
    pub harmonic_residual: f64,
    /// `max |Δ_φφ(hodge) − Δ_φφ(intrinsic)| / max |Δ_φφ(hodge)|`.
    pub rhs_cross_residual: f64,
    /// `max |log μ|` over the eigenvalues `μ` of `g` relative to `ḡ`.
    pub metric_log_band: f64,
}

/// Least-squares fit of `log y = c − rate·t` over a time window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub window: [f64; 2],
    pub samples: usize,
    pub fitted_rate: f64,
    pub r_squared: f64,
    /// First eigenvalue of the reference Hodge Laplacian on exact 3-forms.
    pub lambda1: f64,
}

/// `ℋ(φ) = ∫ *1 = ∫ √det g`.
pub fn hitchin_functional(structure: &G2Structure) -> f64 {
    structure.integrate(&FormField::scalar(structure.lattice(), vec![1.0; structure.sites()]))
}

/// `(1/7) ∫ φ∧ψ`, which agrees with [`hitchin_functional`].
pub fn hitchin_functional_wedge(structure: &G2Structure) -> f64 {
    let top = structure.phi().wedge(structure.psi());
    let ones = vec![1.0; structure.sites()];
    crate::lattice::integrate_density(top.data(), &ones, structure.lattice()) / 7.0
}

/// `(2π/L)²`: the lowest eigenvalue of the flat Hodge Laplacian on exact
/// 3-forms, attained by `dβ` with `β` a unit Fourier mode.
pub fn lambda1_exact_forms(lattice: &Lattice) -> f64 {
    let k = 2.0 * PI / lattice.period();
    k * k
}

/// `⟨Δθ, θ⟩ / ⟨θ, θ⟩` for `θ = dβ` with `β` the lowest mode along the first
/// active axis, using the discrete Hodge Laplacian of the flat model.
pub fn lowest_rayleigh_quotient(lattice: &Arc<Lattice>) -> f64 {
    let axis = lattice.active_axes()[0];
    let other = (0..DIM).find(|&a| a != axis).unwrap();
    let third = (0..DIM).find(|&a| a != axis && a != other).unwrap();
    let mut mode = [0i64; DIM];
    mode[axis] = 1;
    let beta = flow::potential(
        lattice,
        &[ModePerturbation { mode, component: [other + 1, third + 1], amplitude: 1.0, phase: 0.0 }],
    )
    .expect("lowest mode is resolvable");
    let theta = beta.exterior_derivative();
    let model = G2Structure::model(lattice);
    let lap = model.hodge_laplacian(&theta);
    let num = model.integrate(&model.inner(&lap, &theta));
    let den = model.integrate(&model.inner(&theta, &theta));
    num / den
}

/// Least-squares slope of `log y` against `t` over samples with `t` in `window`.
pub fn fit_decay_rate(series: &[(f64, f64)], window: [f64; 2], lambda1: f64) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = series.iter().copied().filter(|(t, _)| *t >= window[0] && *t <= window[1]).collect();
    if pts.len() < 10 {
        return Err(Error::InsufficientData { needed: 10, got: pts.len() });
    }
    if let Some(&(t, value)) = pts.iter().find(|(_, y)| y.is_nan() || *y <= 0.0) {
        return Err(Error::NonPositiveSeries { t, value });
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let (mut stt, mut sty, mut syy) = (0.0, 0.0, 0.0);
    for (t, y) in &pts {
        let (dt, dy) = (t - mt, y.ln() - my);
        stt += dt * dt;
        sty += dt * dy;
        syy += dy * dy;
    }
    let slope = sty / stt;
    let r_squared = if syy > 0.0 { (sty * sty / (stt * syy)).clamp(0.0, 1.0) } else { 1.0 };
    Ok(DecayFit { window, samples: pts.len(), fitted_rate: -slope, r_squared, lambda1 })
}

/// The default fit window: the last 60% of the sampled time span.
pub fn tail_window(series: &[(f64, f64)]) -> [f64; 2] {
    match (series.first(), series.last()) {
        (Some(a), Some(b)) => [b.0 - 0.6 * (b.0 - a.0), b.0],
        _ => [0.0, 0.0],
    }
}

/// `max_x |∇̄^k θ|` for `k = 0..=3`, with flat coordinate derivatives.
pub fn ck_norms(theta: &FormField) -> [f64; 4] {
    let axes = theta.lattice().active_axes().to_vec();
    let mut out = [0.0; 4];
    let mut level = vec![theta.clone()];
    for (k, slot) in out.iter_mut().enumerate() {
        if k > 0 {
            level = level.iter().flat_map(|f| axes.iter().map(move |&a| f.partial(a))).collect();
        }
        let sq: Vec<f64> = (0..theta.sites())
            .into_par_iter()
            .map(|s| level.iter().map(|f| f.at(s).norm2()).sum::<f64>())
            .collect();
        *slot = sq.iter().fold(0.0f64, |m, v| m.max(*v)).sqrt();
    }
    out
}

/// Builds the full record for a state.
pub fn diagnostic_snapshot(state: &FlowState) -> TimeSeriesRecord {
    let s = &state.structure;
    let lattice = s.lattice();
    let theta = state.theta();
    let nabla_phi = riemann::nabla_phi(s);
    let t = full_torsion(s, &nabla_phi);
    let nabla_t = riemann::covariant_derivative(&t, s.christoffels());
    let curv = riemann::structure_curvature(s);
    let terms = flow::TorsionTerms { t: t.clone(), nabla_t: nabla_t.clone() };
    let intrinsic = flow::i_phi_field(s, &flow::intrinsic_h_with(s, &terms));
    let hodge = flow::laplacian_phi_hodge(s);
    let hodge_max = hodge.max_abs();
    let cross = (&hodge - &intrinsic).max_abs();

    struct Site {
        t2: f64,
        scalar_res: f64,
        scalar: f64,
        lambda: f64,
        band: f64,
    }
    let sites: Vec<Site> = (0..s.sites())
        .into_par_iter()
        .map(|x| {
            let g = s.metric().matrix_at(x);
            let gi = s.inverse_metric().matrix_at(x);
            let (t2, _) = flow::torsion_square(&t.matrix_at(x), &gi);
            let r = curv.scalar.data()[x];
            let rm2 = tensor_norm2(curv.rm.at(x), &[Slot::Co; 4], &g, &gi);
            let nt2 = tensor_norm2(nabla_t.at(x), &[Slot::Co; 3], &g, &gi);
            let band = g.symmetric_eigenvalues().iter().fold(0.0f64, |m, e| m.max(e.ln().abs()));
            Site { t2, scalar_res: (r + t2).abs(), scalar: r.abs(), lambda: (rm2 + nt2).sqrt(), band }
        })
        .collect();
    let max = |f: fn(&Site) -> f64| sites.iter().map(f).fold(0.0f64, f64::max);
    let torsion_l2 = s.integrate(&FormField::scalar(lattice, sites.iter().map(|x| x.t2).collect()));
    TimeSeriesRecord {
        step: state.step,
        t: state.t,
        l2_theta: flow::theta_l2_squared(state),
        ck_theta: ck_norms(&theta),
        hitchin_h: hitchin_functional_wedge(s),
        total_volume: hitchin_functional(s),
        torsion_l2,
        scalar_identity_residual: max(|x| x.scalar_res),
        scalar_max: max(|x| x.scalar),
        lambda_max: max(|x| x.lambda),
        harmonic_residual: flow::harmonic_residual(s.phi(), state.reference.phi()),
        rhs_cross_residual: if hodge_max > 0.0 { cross / hodge_max } else { cross },
        metric_log_band: max(|x| x.band),
    }
}
