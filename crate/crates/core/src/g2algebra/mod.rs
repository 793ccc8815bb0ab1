//! Pointwise G2 linear algebra: the model forms, the metric of a positive
//! 3-form, type decompositions and the maps `i_φ`, `j_φ`.
//!
//! Field-level structures and torsion live in [`structure`] and [`torsion`].

use nalgebra::{Cholesky, SMatrix};

use crate::exterior::{hodge_star_with, n_components, ExteriorPower, Form, Matrix7, Vector7, DIM};

mod structure;
mod torsion;

pub use structure::G2Structure;
pub use torsion::{extract_torsion_forms, full_torsion, torsion_assembly, TorsionData, TorsionResiduals};

/// The flat model forms on `R^7`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelForms {
    pub phi0: Form,
    pub psi0: Form,
}

/// Terms of `φ₀` as (sign, 0-based axes).
pub const PHI0_TERMS: [(f64, [usize; 3]); 7] = [
    (1.0, [0, 1, 2]),
    (1.0, [0, 3, 4]),
    (1.0, [0, 5, 6]),
    (1.0, [1, 3, 5]),
    (-1.0, [1, 4, 6]),
    (-1.0, [2, 3, 6]),
    (-1.0, [2, 4, 5]),
];

/// Terms of `ψ₀ = *φ₀` as (sign, 0-based axes).
pub const PSI0_TERMS: [(f64, [usize; 4]); 7] = [
    (1.0, [3, 4, 5, 6]),
    (1.0, [1, 2, 5, 6]),
    (1.0, [1, 2, 3, 4]),
    (1.0, [0, 2, 4, 6]),
    (-1.0, [0, 2, 3, 5]),
    (-1.0, [0, 1, 4, 5]),
    (-1.0, [0, 1, 3, 6]),
];

impl ModelForms {
    pub fn standard() -> Self {
        let mut phi0 = Form::zero(3);
        for (s, axes) in PHI0_TERMS {
            phi0 += Form::basis(&axes) * s;
        }
        let mut psi0 = Form::zero(4);
        for (s, axes) in PSI0_TERMS {
            psi0 += Form::basis(&axes) * s;
        }
        ModelForms { phi0, psi0 }
    }
}

pub fn model_phi() -> Form {
    ModelForms::standard().phi0
}

pub fn model_psi() -> Form {
    ModelForms::standard().psi0
}

/// Why a 3-form failed to define a metric.
#[derive(Clone, Debug, PartialEq)]
pub struct NotPositive(pub String);

/// The symmetric form `b_{ij} e^{1…7} = (1/6)(e_i⌟φ)∧(e_j⌟φ)∧φ`.
fn b_matrix(phi: &Form) -> Matrix7 {
    let contractions: Vec<Form> = (0..DIM).map(|i| phi.interior_axis(i)).collect();
    let mut b = Matrix7::zeros();
    for i in 0..DIM {
        for j in i..DIM {
            let top = contractions[i].wedge(&contractions[j]).wedge(phi);
            let v = top.components()[0] / 6.0;
            b[(i, j)] = v;
            b[(j, i)] = v;
        }
    }
    b
}

/// Metric and volume density `√det g` of a 3-form.
///
/// `g = b / (det b)^{1/9}`, normalized so that `φ₀` gives the identity.
pub fn metric_from_phi(phi: &Form) -> Result<(Matrix7, f64), NotPositive> {
    assert_eq!(phi.degree(), 3);
    let b = b_matrix(phi);
    let det_b = b.determinant();
    if !(det_b > 0.0 && det_b.is_finite()) {
        return Err(NotPositive(format!("det b = {det_b:e}")));
    }
    let vol = det_b.powf(1.0 / 9.0);
    let g = b / vol;
    if Cholesky::new(g).is_none() {
        return Err(NotPositive("induced bilinear form is indefinite".into()));
    }
    Ok((g, vol))
}

pub fn is_positive(phi: &Form) -> bool {
    metric_from_phi(phi).is_ok()
}

/// A positive 3-form at a point with its induced metric data.
#[derive(Clone, Debug)]
pub struct G2Point {
    phi: Form,
    psi: Form,
    g: Matrix7,
    g_inv: Matrix7,
    vol: f64,
}

impl G2Point {
    pub fn new(phi: Form) -> Result<Self, NotPositive> {
        let (g, vol) = metric_from_phi(&phi)?;
        let g_inv = Cholesky::new(g).expect("checked positive").inverse();
        Ok(Self::from_parts(phi, g, g_inv, vol))
    }

    pub(crate) fn from_parts(phi: Form, g: Matrix7, g_inv: Matrix7, vol: f64) -> Self {
        let psi = hodge_star_with(&phi, &ExteriorPower::new(&g_inv, 3), vol);
        G2Point { phi, psi, g, g_inv, vol }
    }

    pub(crate) fn with_psi(phi: Form, psi: Form, g: Matrix7, g_inv: Matrix7, vol: f64) -> Self {
        G2Point { phi, psi, g, g_inv, vol }
    }

    pub fn phi(&self) -> &Form {
        &self.phi
    }

    pub fn psi(&self) -> &Form {
        &self.psi
    }

    pub fn metric(&self) -> &Matrix7 {
        &self.g
    }

    pub fn inverse_metric(&self) -> &Matrix7 {
        &self.g_inv
    }

    pub fn vol(&self) -> f64 {
        self.vol
    }

    pub fn lambda_inv(&self, k: usize) -> ExteriorPower {
        ExteriorPower::new(&self.g_inv, k)
    }

    pub fn star(&self, a: &Form) -> Form {
        hodge_star_with(a, &self.lambda_inv(a.degree()), self.vol)
    }

    pub fn inner(&self, a: &Form, b: &Form) -> f64 {
        a.dot(b, &self.lambda_inv(a.degree()))
    }

    pub fn norm2(&self, a: &Form) -> f64 {
        self.inner(a, a)
    }

    /// `tr_g h = g^{ij} h_{ij}`.
    pub fn trace(&self, h: &Matrix7) -> f64 {
        self.g_inv.component_mul(h).sum()
    }

    /// Value of `*` applied to a top-degree form.
    fn star_top(&self, top: &Form) -> f64 {
        top.components()[0] / self.vol
    }
}

/// Split a 2-form into its `Ω²₇` and `Ω²₁₄` parts.
///
/// The operator `P β = *(β∧φ)` satisfies `(P-2)(P+1) = 0`, so the
/// eigen-projectors are `(P+1)/3` and `(2-P)/3`.
pub fn project_2form(beta: &Form, p: &G2Point) -> (Form, Form) {
    assert_eq!(beta.degree(), 2);
    let pb = p.star(&beta.wedge(&p.phi));
    let seven = (*beta + pb) * (1.0 / 3.0);
    let fourteen = *beta - seven;
    (seven, fourteen)
}

/// Type decomposition of a 3-form.
#[derive(Clone, Debug, PartialEq)]
pub struct ThreeFormParts {
    pub one: Form,
    pub seven: Form,
    pub twenty_seven: Form,
    /// The vector `X` with `seven = X⌟ψ`.
    pub vector: [f64; DIM],
}

/// `γ₁ = (⟨γ,φ⟩/7)φ`, `γ₇ = X⌟ψ` with `X` fixed by `γ∧φ`, `γ₂₇` the remainder.
pub fn project_3form(gamma: &Form, p: &G2Point) -> ThreeFormParts {
    assert_eq!(gamma.degree(), 3);
    let one = p.phi * (p.inner(gamma, &p.phi) / 7.0);
    let target = gamma.wedge(&p.phi);
    let mut m = SMatrix::<f64, 7, 7>::zeros();
    for i in 0..DIM {
        let col = p.psi.interior_axis(i).wedge(&p.phi);
        for (r, v) in col.components().iter().enumerate() {
            m[(r, i)] = *v;
        }
    }
    let rhs = Vector7::from_column_slice(target.components());
    let x = m.lu().solve(&rhs).expect("X ↦ (X⌟ψ)∧φ is invertible for positive φ");
    let vector = [x[0], x[1], x[2], x[3], x[4], x[5], x[6]];
    let seven = p.psi.interior(&vector);
    let twenty_seven = *gamma - one - seven;
    ThreeFormParts { one, seven, twenty_seven, vector }
}

/// `i_φ(h) = ½ h_i^l φ_{ljk} dx^i∧dx^j∧dx^k`.
pub fn i_phi(h: &Matrix7, p: &G2Point) -> Form {
    let phi = p.phi.expand();
    let at = |i: usize, j: usize, k: usize| phi[(i * DIM + j) * DIM + k];
    let hu = h * p.g_inv; // h_i^l
    let mut out = Form::zero(3);
    for (c, v) in out.components_mut().iter_mut().enumerate() {
        let idx = crate::exterior::multi_index(3, c);
        let (i, j, k) = (idx[0], idx[1], idx[2]);
        *v = (0..DIM)
            .map(|l| hu[(i, l)] * at(l, j, k) + hu[(j, l)] * at(i, l, k) + hu[(k, l)] * at(i, j, l))
            .sum();
    }
    out
}

/// `j_φ(γ)(u,v) = *((u⌟φ)∧(v⌟φ)∧γ)`.
pub fn j_phi(gamma: &Form, p: &G2Point) -> Matrix7 {
    assert_eq!(gamma.degree(), 3);
    let contractions: Vec<Form> = (0..DIM).map(|i| p.phi.interior_axis(i)).collect();
    let mut j = Matrix7::zeros();
    for a in 0..DIM {
        for b in a..DIM {
            let v = p.star_top(&contractions[a].wedge(&contractions[b]).wedge(gamma));
            j[(a, b)] = v;
            j[(b, a)] = v;
        }
    }
    j
}

/// The symmetric `h` with `i_φ(h) = γ` for `γ ∈ Ω³₁ ⊕ Ω³₂₇`, from
/// `j_φ(i_φ(h)) = 4h + 2 tr_g(h) g`.
pub fn i_phi_inverse(gamma: &Form, p: &G2Point) -> Matrix7 {
    let j = j_phi(gamma, p);
    let tr = p.trace(&j);
    (j - p.g * (tr / 9.0)) / 4.0
}

/// Matrix of a linear map on k-forms in the component basis (columns are
/// images of basis forms). Used by brute-force checks.
pub fn operator_matrix(k_in: usize, k_out: usize, f: impl Fn(&Form) -> Form) -> Vec<Vec<f64>> {
    let n_in = n_components(k_in);
    let n_out = n_components(k_out);
    let mut m = vec![vec![0.0; n_in]; n_out];
    for c in 0..n_in {
        let mut e = Form::zero(k_in);
        e.components_mut()[c] = 1.0;
        let img = f(&e);
        for (r, v) in img.components().iter().enumerate() {
            m[r][c] = *v;
        }
    }
    m
}
