//! The full torsion tensor and the intrinsic torsion forms.

use nalgebra::SMatrix;
use rayon::prelude::*;

use super::{i_phi_inverse, project_2form, project_3form, G2Point, G2Structure};
use crate::exterior::{ExteriorPower, Form, Matrix7, Vector7, DIM};
use crate::lattice::{FormField, Slot, TensorField};
use crate::riemann;

/// Torsion of a structure: `T` and the forms `τ₀ … τ₃`.
#[derive(Clone, Debug)]
pub struct TorsionData {
    pub t: TensorField,
    pub tau0: FormField,
    pub tau1: FormField,
    pub tau2: FormField,
    pub tau3: FormField,
    pub residuals: TorsionResiduals,
}

/// Max-norm residuals, each relative to the max-norm of the left-hand side
/// (or absolute when that vanishes).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TorsionResiduals {
    /// `∇_iφ_{jkl} − T_i^m ψ_{mjkl}`.
    pub reconstruction: f64,
    /// `dφ − (τ₀ψ + 3τ₁∧φ + *τ₃)`.
    pub dphi: f64,
    /// `dψ − (4τ₁∧ψ + τ₂∧φ)`.
    pub dpsi: f64,
}

fn relative(residual: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        residual / scale
    } else {
        residual
    }
}

/// `T_i^j = (1/24) ∇_iφ_{lmn} ψ^{jlmn}`, lowered to `T_{ij}`.
pub fn full_torsion(structure: &G2Structure, nabla_phi: &TensorField) -> TensorField {
    TensorField::from_site_fn(structure.lattice(), &[Slot::Co, Slot::Co], |s| {
        let p = structure.point(s);
        let psi_up = p.psi().raise(&p.lambda_inv(4)).expand();
        let nphi = nabla_phi.at(s);
        let mut t_mixed = Matrix7::zeros();
        for i in 0..DIM {
            for j in 0..DIM {
                let a = &nphi[i * 343..(i + 1) * 343];
                let b = &psi_up[j * 343..(j + 1) * 343];
                t_mixed[(i, j)] = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / 24.0;
            }
        }
        let t = t_mixed * p.metric();
        t.transpose().as_slice().to_vec()
    })
}

/// `max |∇_iφ_{jkl} − T_i^m ψ_{mjkl}| / max |∇φ|`.
pub fn reconstruction_residual(structure: &G2Structure, nabla_phi: &TensorField, t: &TensorField) -> f64 {
    let worst = (0..structure.sites())
        .into_par_iter()
        .map(|s| {
            let p = structure.point(s);
            let t_mixed = t.matrix_at(s) * p.inverse_metric();
            let psi = p.psi().expand();
            let nphi = nabla_phi.at(s);
            let mut worst: f64 = 0.0;
            for i in 0..DIM {
                for jkl in 0..343 {
                    let rebuilt: f64 = (0..DIM).map(|m| t_mixed[(i, m)] * psi[m * 343 + jkl]).sum();
                    worst = worst.max((nphi[i * 343 + jkl] - rebuilt).abs());
                }
            }
            worst
        })
        .reduce(|| 0.0, f64::max);
    relative(worst, nabla_phi.max_abs())
}

/// Pointwise torsion forms from `dφ` and `dψ` at one site.
fn site_torsion_forms(p: &G2Point, dphi: &Form, dpsi: &Form) -> (f64, Form, Form, Form) {
    let tau0 = p.inner(dphi, p.psi()) / 7.0;
    let gamma = p.star(dphi);
    let parts = project_3form(&gamma, p);
    // τ₁ from the Ω³₇ part: least squares against the columns 3*(e^i∧φ)
    let cols: Vec<Form> = (0..DIM).map(|i| p.star(&Form::basis(&[i]).wedge(p.phi())) * 3.0).collect();
    let mut ata = SMatrix::<f64, 7, 7>::zeros();
    let mut atb = Vector7::zeros();
    for a in 0..DIM {
        for b in 0..DIM {
            ata[(a, b)] = dot_plain(&cols[a], &cols[b]);
        }
        atb[a] = dot_plain(&cols[a], &parts.seven);
    }
    let x = ata.lu().solve(&atb).expect("columns 3*(e^i∧φ) are independent");
    let tau1 = Form::from_components(1, x.as_slice());
    let tau3 = parts.twenty_seven;
    let rest = *dpsi - tau1.wedge(p.psi()) * 4.0;
    // τ₂ ∈ Ω²₁₄ has τ₂∧φ = −*τ₂, so τ₂ = −*(τ₂∧φ)
    let (_, tau2) = project_2form(&-p.star(&rest), p);
    (tau0, tau1, tau2, tau3)
}

fn dot_plain(a: &Form, b: &Form) -> f64 {
    a.components().iter().zip(b.components()).map(|(x, y)| x * y).sum()
}

/// Extracts `τ₀ … τ₃` from `dφ`, `dψ` and computes the full torsion.
pub fn extract_torsion_forms(structure: &G2Structure) -> TorsionData {
    let lattice = structure.lattice().clone();
    let dphi = structure.phi().exterior_derivative();
    let dpsi = structure.psi().exterior_derivative();
    let per_site: Vec<(f64, Form, Form, Form)> = (0..structure.sites())
        .into_par_iter()
        .map(|s| site_torsion_forms(&structure.point(s), &dphi.at(s), &dpsi.at(s)))
        .collect();
    let tau0 = FormField::scalar(&lattice, per_site.iter().map(|x| x.0).collect());
    let tau1 = FormField::from_sites(&lattice, 1, &per_site.iter().map(|x| x.1).collect::<Vec<_>>());
    let tau2 = FormField::from_sites(&lattice, 2, &per_site.iter().map(|x| x.2).collect::<Vec<_>>());
    let tau3 = FormField::from_sites(&lattice, 3, &per_site.iter().map(|x| x.3).collect::<Vec<_>>());

    let (rphi, rpsi) = (0..structure.sites())
        .into_par_iter()
        .map(|s| {
            let p = structure.point(s);
            let (t0, t1, t2, t3) = &per_site[s];
            let lhs_phi = *p.psi() * *t0 + t1.wedge(p.phi()) * 3.0 + p.star(t3);
            let lhs_psi = t1.wedge(p.psi()) * 4.0 + t2.wedge(p.phi());
            ((dphi.at(s) - lhs_phi).max_abs(), (dpsi.at(s) - lhs_psi).max_abs())
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)));

    let nabla_phi = riemann::nabla_phi(structure);
    let t = full_torsion(structure, &nabla_phi);
    let residuals = TorsionResiduals {
        reconstruction: reconstruction_residual(structure, &nabla_phi, &t),
        dphi: relative(rphi, dphi.max_abs()),
        dpsi: relative(rpsi, dpsi.max_abs()),
    };
    TorsionData { t, tau0, tau1, tau2, tau3, residuals }
}

/// `T_{ij} = (τ₀/4)g_{ij} − τ₁^l φ_{lij} − (τ̄₃)_{ij} − ½(τ₂)_{ij}` with
/// `τ₃ = i_φ(τ̄₃)`.
pub fn torsion_assembly(structure: &G2Structure, data: &TorsionData) -> TensorField {
    TensorField::from_site_fn(structure.lattice(), &[Slot::Co, Slot::Co], |s| {
        let p = structure.point(s);
        let tau1 = data.tau1.at(s);
        let raised = tau1.raise(&ExteriorPower::new(p.inverse_metric(), 1));
        let mut x = [0.0; DIM];
        x.copy_from_slice(raised.components());
        let contracted = p.phi().interior(&x).expand();
        let tau2 = data.tau2.at(s).expand();
        let tau3_bar = i_phi_inverse(&data.tau3.at(s), &p);
        let g = p.metric();
        let tau0 = data.tau0.data()[s];
        let mut out = vec![0.0; DIM * DIM];
        for i in 0..DIM {
            for j in 0..DIM {
                out[i * DIM + j] =
                    tau0 / 4.0 * g[(i, j)] - contracted[i * DIM + j] - tau3_bar[(i, j)] - 0.5 * tau2[i * DIM + j];
            }
        }
        out
    })
}
