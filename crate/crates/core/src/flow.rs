//! Right-hand sides of the Laplacian flow and the Laplacian–DeTurck flow, and
//! their time integration.
//!
//! Both right-hand sides are returned as `dσ` for an explicitly computed
//! 2-form `σ`, so every RK4 stage is exact and the update never leaves the
//! cohomology class of the initial structure.

use std::f64::consts::PI;
use std::path::PathBuf;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exterior::{component_of, Form, Matrix7, DIM};
use crate::g2algebra::{full_torsion, i_phi, G2Structure};
use crate::lattice::{FormField, Lattice, Slot, TensorField};
use crate::riemann::{self, transform_slot, Gauge};

/// Closedness tolerance for the intrinsic formula, relative to `‖φ‖_∞`.
pub const INTRINSIC_CLOSED_TOL: f64 = 1e-6;
/// Closedness tolerance for accepted steps, relative to `‖φ‖_∞`.
pub const STEP_CLOSED_TOL: f64 = 1e-9;
/// Largest allowed drift of the mean of `φ − φ̄`.
pub const HARMONIC_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowKind {
    Laplacian,
    Deturck,
}

/// One Fourier term of a 2-form potential,
/// `amplitude · sin(2π k·x / L + phase) e^{ij}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModePerturbation {
    /// Integer wave vector over all seven axes; only active axes may be nonzero.
    pub mode: [i64; DIM],
    /// 1-based axes `[i, j]` of the 2-form component.
    pub component: [usize; 2],
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
}

impl ModePerturbation {
    pub fn validate(&self, lattice: &Lattice) -> Result<()> {
        for (axis, &k) in self.mode.iter().enumerate() {
            if k != 0 && !lattice.is_active(axis) {
                return Err(Error::InvalidLattice(format!("mode {:?} uses inactive axis {}", self.mode, axis + 1)));
            }
            if k != 0 && lattice.scheme() == crate::lattice::Scheme::Spectral && k.unsigned_abs() as usize >= lattice.n() / 2 {
                return Err(Error::InvalidLattice(format!("mode {:?} is not resolvable with n = {}", self.mode, lattice.n())));
            }
        }
        let [i, j] = self.component;
        if !(1..=DIM).contains(&i) || !(1..=DIM).contains(&j) || i == j {
            return Err(Error::InvalidLattice(format!("bad 2-form component {:?}", self.component)));
        }
        if !self.amplitude.is_finite() || !self.phase.is_finite() {
            return Err(Error::InvalidLattice("non-finite amplitude or phase".into()));
        }
        Ok(())
    }
}

/// The potential `β = Σ` of the given terms.
pub fn potential(lattice: &Arc<Lattice>, terms: &[ModePerturbation]) -> Result<FormField> {
    for t in terms {
        t.validate(lattice)?;
    }
    let l = lattice.period();
    Ok(FormField::from_fn(lattice, 2, |x| {
        let mut beta = Form::zero(2);
        for t in terms {
            let arg: f64 = (0..DIM).map(|a| t.mode[a] as f64 * x[a]).sum::<f64>() * 2.0 * PI / l + t.phase;
            let (idx, sign) = component_of(&[t.component[0] - 1, t.component[1] - 1]).expect("distinct axes");
            beta.components_mut()[idx] += sign * t.amplitude * arg.sin();
        }
        beta
    }))
}

/// `φ̄ + dβ` for the constant model structure `φ̄`.
pub fn perturbed_model(lattice: &Arc<Lattice>, terms: &[ModePerturbation]) -> Result<G2Structure> {
    let theta = potential(lattice, terms)?.exterior_derivative();
    let phi = &FormField::constant(lattice, &crate::g2algebra::model_phi()) + &theta;
    G2Structure::new(phi)
}

/// `Δ_φφ = dd*φ + d*dφ` through the Hodge star.
pub fn laplacian_phi_hodge(structure: &G2Structure) -> FormField {
    structure.hodge_laplacian(structure.phi())
}

fn closedness(structure: &G2Structure) -> (f64, f64) {
    let d = structure.phi().exterior_derivative().max_abs();
    (d, structure.phi().max_abs())
}

/// Fails with `NotClosed` when `‖dφ‖_∞ > tol·‖φ‖_∞`.
pub fn require_closed(structure: &G2Structure, tol: f64) -> Result<()> {
    let (d, p) = closedness(structure);
    if d > tol * p {
        return Err(Error::NotClosed { residual: d / p, tolerance: tol });
    }
    Ok(())
}

/// Raises the last two slots of a dense 3-form `φ_{jab}` to `φ_j^{ab}`.
fn phi_mixed(phi: &Form, g_inv: &Matrix7) -> Vec<f64> {
    let dense = phi.expand();
    transform_slot(&transform_slot(&dense, 3, 1, g_inv), 3, 2, g_inv)
}

/// `A_{ij} = ∇_m T_{ni} φ_j^{mn}` from a dense `∇T` indexed `[m][n][i]`.
fn contract_nabla_t(nabla_t: &[f64], phi_mixed: &[f64]) -> Matrix7 {
    Matrix7::from_fn(|i, j| {
        let mut acc = 0.0;
        for m in 0..DIM {
            for n in 0..DIM {
                acc += nabla_t[(m * DIM + n) * DIM + i] * phi_mixed[(j * DIM + m) * DIM + n];
            }
        }
        acc
    })
}

/// Torsion-derived tensors used by the intrinsic formulas.
pub(crate) struct TorsionTerms {
    pub t: TensorField,
    pub nabla_t: TensorField,
}

pub(crate) fn torsion_terms(structure: &G2Structure) -> TorsionTerms {
    let t = full_torsion(structure, &riemann::nabla_phi(structure));
    let nabla_t = riemann::covariant_derivative(&t, structure.christoffels());
    TorsionTerms { t, nabla_t }
}

/// Pointwise `(|T|², T_i^l T_{lj})`.
pub(crate) fn torsion_square(t: &Matrix7, g_inv: &Matrix7) -> (f64, Matrix7) {
    let norm2 = (g_inv * t * g_inv).component_mul(t).sum();
    (norm2, t * g_inv * t)
}

/// `h_{ij} = −∇_mT_{ni}φ_j^{mn} − ⅓|T|²g_{ij} − T_i^lT_{lj}`, symmetrized.
pub fn intrinsic_h(structure: &G2Structure) -> Result<TensorField> {
    require_closed(structure, INTRINSIC_CLOSED_TOL)?;
    Ok(intrinsic_h_with(structure, &torsion_terms(structure)))
}

pub(crate) fn intrinsic_h_with(structure: &G2Structure, terms: &TorsionTerms) -> TensorField {
    TensorField::from_site_fn(structure.lattice(), &[Slot::Co, Slot::Co], |s| {
        let p = structure.point(s);
        let a = contract_nabla_t(terms.nabla_t.at(s), &phi_mixed(p.phi(), p.inverse_metric()));
        let (n2, tt) = torsion_square(&terms.t.matrix_at(s), p.inverse_metric());
        let h = -a - p.metric() * (n2 / 3.0) - tt;
        let h = (h + h.transpose()) * 0.5;
        (0..DIM * DIM).map(|k| h[(k / DIM, k % DIM)]).collect()
    })
}

pub(crate) fn i_phi_field(structure: &G2Structure, h: &TensorField) -> FormField {
    structure.phi().map(3, |s, _| i_phi(&h.matrix_at(s), &structure.point(s)))
}

/// `Δ_φφ = i_φ(h)` with `h` from the torsion; closed structures only.
pub fn laplacian_phi_intrinsic(structure: &G2Structure) -> Result<FormField> {
    Ok(i_phi_field(structure, &intrinsic_h(structure)?))
}

/// `Ric_{ij} = ∇_kT_{li}φ_j^{kl} − T_i^kT_{kj}`, valid for closed structures.
pub fn ricci_from_torsion(structure: &G2Structure) -> TensorField {
    let terms = torsion_terms(structure);
    TensorField::from_site_fn(structure.lattice(), &[Slot::Co, Slot::Co], |s| {
        let p = structure.point(s);
        let a = contract_nabla_t(terms.nabla_t.at(s), &phi_mixed(p.phi(), p.inverse_metric()));
        let (_, tt) = torsion_square(&terms.t.matrix_at(s), p.inverse_metric());
        let r = a - tt;
        (0..DIM * DIM).map(|k| r[(k / DIM, k % DIM)]).collect()
    })
}

/// `−2Ric − ⅔|T|²g − 4T∘T` computed from the curvature of the metric.
pub fn metric_velocity_from_ricci(structure: &G2Structure) -> TensorField {
    let curv = riemann::structure_curvature(structure);
    let t = full_torsion(structure, &riemann::nabla_phi(structure));
    TensorField::from_site_fn(structure.lattice(), &[Slot::Co, Slot::Co], |s| {
        let p = structure.point(s);
        let (n2, tt) = torsion_square(&t.matrix_at(s), p.inverse_metric());
        let v = curv.ric.matrix_at(s) * -2.0 - p.metric() * (2.0 * n2 / 3.0) - tt * 4.0;
        (0..DIM * DIM).map(|k| v[(k / DIM, k % DIM)]).collect()
    })
}

/// Evolving structure of a flow run.
#[derive(Clone, Debug)]
pub struct FlowState {
    pub t: f64,
    /// Number of accepted steps so far.
    pub step: usize,
    pub structure: G2Structure,
    pub reference: Arc<G2Structure>,
    pub kind: FlowKind,
    pub gauge: Gauge,
}

impl FlowState {
    pub fn new(structure: G2Structure, reference: Arc<G2Structure>, kind: FlowKind) -> Self {
        FlowState { t: 0.0, step: 0, structure, reference, kind, gauge: Gauge::default() }
    }

    /// `θ = φ − φ̄`.
    pub fn theta(&self) -> FormField {
        self.structure.phi() - self.reference.phi()
    }
}

/// The 2-form `σ` with `rhs = dσ`: `d*φ`, plus `V⌟φ` for the DeTurck kind.
pub fn rhs_potential(structure: &G2Structure, reference: &G2Structure, kind: FlowKind, gauge: Gauge) -> FormField {
    let sigma = structure.codifferential(structure.phi());
    match kind {
        FlowKind::Laplacian => sigma,
        FlowKind::Deturck => {
            let v = riemann::deturck_vector(structure, reference, gauge);
            &sigma + &structure.phi().interior(&v)
        }
    }
}

/// `∂φ/∂t` for the state's flow kind, as an exact form.
pub fn flow_rhs(state: &FlowState) -> FormField {
    rhs_of(&state.structure, state)
}

fn rhs_of(structure: &G2Structure, state: &FlowState) -> FormField {
    rhs_potential(structure, &state.reference, state.kind, state.gauge).exterior_derivative()
}

/// Time-step policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepControl {
    /// Fixed step; computed from the CFL bound at the start when absent.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "default_cfl")]
    pub cfl_coefficient: f64,
    #[serde(default = "default_max_dt")]
    pub max_dt: f64,
    pub t_end: f64,
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: usize,
    #[serde(default = "default_sample_every")]
    pub sample_every: usize,
    #[serde(default = "default_stop_tolerance")]
    pub stop_tolerance: f64,
    #[serde(default = "default_max_halvings")]
    pub max_halvings: u32,
}

fn default_cfl() -> f64 {
    0.2
}
fn default_max_dt() -> f64 {
    0.1
}
fn default_checkpoint_every() -> usize {
    500
}
fn default_sample_every() -> usize {
    10
}
fn default_stop_tolerance() -> f64 {
    1e-10
}
fn default_max_halvings() -> u32 {
    10
}

impl StepControl {
    pub fn new(t_end: f64) -> Self {
        StepControl {
            dt: None,
            cfl_coefficient: default_cfl(),
            max_dt: default_max_dt(),
            t_end,
            checkpoint_every: default_checkpoint_every(),
            sample_every: default_sample_every(),
            stop_tolerance: default_stop_tolerance(),
            max_halvings: default_max_halvings(),
        }
    }

    /// `cfl·(L/n)² / speed`, capped by `max_dt`.
    pub fn cfl_dt(&self, structure: &G2Structure) -> f64 {
        let h = structure.lattice().spacing();
        (self.cfl_coefficient * h * h / max_site_speed(structure)).min(self.max_dt)
    }

    /// The step to use: the configured one, else the CFL bound.
    pub fn resolve_dt(&self, structure: &G2Structure) -> f64 {
        self.dt.unwrap_or_else(|| self.cfl_dt(structure))
    }
}

/// `a · max_x λ_max(g⁻¹)`, with `a` the number of active axes.
///
/// The reference metric is euclidean, so the largest eigenvalue of `g⁻¹`
/// bounds the principal symbol of the flow operator relative to `ḡ`; the
/// spectral symbol grows linearly with the number of differentiated axes.
pub fn max_site_speed(structure: &G2Structure) -> f64 {
    let worst = (0..structure.sites())
        .into_par_iter()
        .map(|s| structure.inverse_metric().matrix_at(s).symmetric_eigenvalues().max())
        .reduce(|| 0.0, f64::max);
    worst * structure.lattice().active_axes().len() as f64
}

/// Why a trial step was rejected.
fn validate_step(structure: &G2Structure, reference: &G2Structure) -> std::result::Result<(), String> {
    let (d, p) = closedness(structure);
    if d > STEP_CLOSED_TOL * p {
        return Err(format!("closedness lost: |dφ| = {:e}", d / p));
    }
    let h = harmonic_residual(structure.phi(), reference.phi());
    if h > HARMONIC_TOL {
        return Err(format!("cohomology class drifted by {h:e}"));
    }
    Ok(())
}

/// Largest component of `mean(φ) − mean(φ̄)`.
pub fn harmonic_residual(phi: &FormField, reference: &FormField) -> f64 {
    phi.mean_components().iter().zip(reference.mean_components()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// One classical RK4 step of size `dt` from `phi`.
fn rk4_trial(structure: &G2Structure, state: &FlowState, dt: f64) -> std::result::Result<G2Structure, String> {
    let stage = |base: &G2Structure, k: &FormField, c: f64| -> std::result::Result<G2Structure, String> {
        G2Structure::new(base.phi().axpy(c, k)).map_err(|e| e.to_string())
    };
    let k1 = rhs_of(structure, state);
    let s2 = stage(structure, &k1, dt / 2.0)?;
    let k2 = rhs_of(&s2, state);
    let s3 = stage(structure, &k2, dt / 2.0)?;
    let k3 = rhs_of(&s3, state);
    let s4 = stage(structure, &k3, dt)?;
    let k4 = rhs_of(&s4, state);
    let data: Vec<f64> = (0..structure.phi().data().len())
        .into_par_iter()
        .map(|i| {
            structure.phi().data()[i]
                + dt / 6.0 * (k1.data()[i] + 2.0 * k2.data()[i] + 2.0 * k3.data()[i] + k4.data()[i])
        })
        .collect();
    let phi = FormField::from_data(structure.lattice(), 3, data).map_err(|e| e.to_string())?;
    let next = G2Structure::new(phi).map_err(|e| e.to_string())?;
    validate_step(&next, &state.reference)?;
    Ok(next)
}

/// Advances `state` by `dt`. A rejected step is retried as `2^h` substeps
/// of `dt/2^h`, up to `max_halvings` times, so sample times stay on the
/// original grid.
pub fn step_rk4(state: &FlowState, dt: f64, max_halvings: u32) -> Result<FlowState> {
    let mut last_reason = String::new();
    'halving: for h in 0..=max_halvings {
        let parts = 1usize << h;
        let sub = dt / parts as f64;
        let mut current = state.structure.clone();
        for _ in 0..parts {
            match rk4_trial(&current, state, sub) {
                Ok(next) => current = next,
                Err(reason) => {
                    last_reason = reason;
                    continue 'halving;
                }
            }
        }
        return Ok(FlowState { t: state.t + dt, step: state.step + 1, structure: current, ..state.clone() });
    }
    Err(Error::StepFailed { t: state.t, halvings: max_halvings, reason: last_reason, checkpoint: None })
}

/// Receives the output of [`run_flow`].
pub trait FlowSink {
    /// Called on every sampled state, starting with the initial one.
    fn sample(&mut self, state: &FlowState) -> Result<()>;

    /// Called after each accepted step.
    fn accepted(&mut self, _state: &FlowState) -> Result<()> {
        Ok(())
    }

    /// Persists a checkpoint; returns its path if one was written.
    fn checkpoint(&mut self, _state: &FlowState, _dt: f64) -> Result<Option<PathBuf>> {
        Ok(None)
    }
}

/// Why a run stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EndTime,
    Converged,
}

#[derive(Clone, Debug)]
pub struct FlowOutcome {
    pub state: FlowState,
    pub dt: f64,
    pub stop: StopReason,
}

/// `‖θ‖²_{L²}` in the reference metric.
pub fn theta_l2_squared(state: &FlowState) -> f64 {
    let theta = state.theta();
    let values: Vec<f64> = (0..theta.sites()).map(|s| theta.at(s).norm2()).collect();
    state.reference.integrate(&FormField::scalar(theta.lattice(), values))
}

/// Integrates until `t_end` or until `‖θ‖_{L²}` drops below the stop
/// tolerance. `dt` overrides the control's policy (used when resuming).
pub fn run_flow(initial: FlowState, control: &StepControl, dt: Option<f64>, sink: &mut dyn FlowSink) -> Result<FlowOutcome> {
    let dt = dt.unwrap_or_else(|| control.resolve_dt(&initial.structure));
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Mismatch(format!("invalid time step {dt}")));
    }
    let mut state = initial;
    let mut last_checkpoint: Option<PathBuf> = None;
    let sample_every = control.sample_every.max(1);
    if state.step.is_multiple_of(sample_every) {
        sink.sample(&state)?;
    }
    let stop = loop {
        if theta_l2_squared(&state).sqrt() < control.stop_tolerance {
            break StopReason::Converged;
        }
        if state.t + 0.5 * dt > control.t_end {
            break StopReason::EndTime;
        }
        state = match step_rk4(&state, dt, control.max_halvings) {
            Ok(next) => next,
            Err(Error::StepFailed { t, halvings, reason, .. }) => {
                return Err(Error::StepFailed { t, halvings, reason, checkpoint: last_checkpoint });
            }
            Err(e) => return Err(e),
        };
        // keep t on the exact grid so runs with equal dt share sample times
        state.t = state.step as f64 * dt;
        sink.accepted(&state)?;
        if state.step.is_multiple_of(sample_every) {
            sink.sample(&state)?;
        }
        if control.checkpoint_every > 0 && state.step.is_multiple_of(control.checkpoint_every) {
            if let Some(p) = sink.checkpoint(&state, dt)? {
                last_checkpoint = Some(p);
            }
        }
    };
    Ok(FlowOutcome { state, dt, stop })
}
