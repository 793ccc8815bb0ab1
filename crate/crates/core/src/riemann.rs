//! Metric differential geometry on the lattice.
//!
//! Index conventions: `Γ^i_{jk}` is stored as `[i][j][k]`; the covariant
//! derivative prepends its index, `(∇A)_{i j…} = ∇_i A_{j…}`; the curvature
//! is `R(∂_i,∂_j)∂_k = R^l_{ijk} ∂_l` and `R_{ijkl} = g_{lm} R^m_{ijk}`, so
//! round spheres have positive Ricci curvature.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::exterior::{multi_index, n_components, Form, Matrix7, DIM};
use crate::g2algebra::{full_torsion, G2Structure};
use crate::lattice::{FormField, Lattice, Slot, TensorField};

const D2: usize = DIM * DIM;
const D3: usize = DIM * DIM * DIM;

/// Constant `A` of the combined gauge vector.
pub const DETURCK_A: f64 = -0.125;

/// Christoffel symbols of an evolving metric and their difference from the
/// reference connection.
#[derive(Clone, Debug)]
pub struct ConnectionData {
    pub christoffels: TensorField,
    /// `S = Γ(g) − Γ(ḡ)`.
    pub difference: TensorField,
}

impl ConnectionData {
    pub fn new(structure: &G2Structure, reference: &G2Structure) -> Self {
        let christoffels = structure.christoffels().clone();
        let difference = christoffels.axpy(-1.0, reference.christoffels());
        ConnectionData { christoffels, difference }
    }
}

/// `∂_axis g` for every active axis; inactive axes are zero and omitted.
fn active_partials(t: &TensorField) -> Vec<(usize, TensorField)> {
    t.lattice().active_axes().iter().map(|&a| (a, t.partial(a))).collect()
}

/// `Γ^i_{jk} = ½ g^{il}(∂_j g_{lk} + ∂_k g_{lj} − ∂_l g_{jk})`.
pub fn christoffels(g: &TensorField, g_inv: &TensorField) -> TensorField {
    let lattice = g.lattice().clone();
    let dg = active_partials(g);
    TensorField::from_site_fn(&lattice, &[Slot::Contra, Slot::Co, Slot::Co], |s| {
        // first-kind symbols Γ_{l jk}
        let mut d = [[[0.0; DIM]; DIM]; DIM]; // d[a][l][k] = ∂_a g_{lk}
        for (axis, field) in &dg {
            let v = field.at(s);
            for l in 0..DIM {
                for k in 0..DIM {
                    d[*axis][l][k] = v[l * DIM + k];
                }
            }
        }
        let gi = g_inv.at(s);
        let mut first = [0.0; D3];
        for l in 0..DIM {
            for j in 0..DIM {
                for k in 0..DIM {
                    first[(l * DIM + j) * DIM + k] = 0.5 * (d[j][l][k] + d[k][l][j] - d[l][j][k]);
                }
            }
        }
        let mut out = vec![0.0; D3];
        for i in 0..DIM {
            for jk in 0..D2 {
                out[i * D2 + jk] = (0..DIM).map(|l| gi[i * DIM + l] * first[l * D2 + jk]).sum();
            }
        }
        out
    })
}

/// `∇A` with the derivative index first: one `−Γ` term per covariant slot and
/// one `+Γ` term per contravariant slot.
pub fn covariant_derivative(field: &TensorField, gamma: &TensorField) -> TensorField {
    let lattice = field.lattice().clone();
    let r = field.rank();
    let per = field.components_per_site();
    let slots = field.slots().to_vec();
    let partials = active_partials(field);
    let mut out_slots = vec![Slot::Co];
    out_slots.extend_from_slice(&slots);
    let strides: Vec<usize> = (0..r).map(|p| DIM.pow((r - 1 - p) as u32)).collect();
    TensorField::from_site_fn(&lattice, &out_slots, |s| {
        let a = field.at(s);
        let gm = gamma.at(s);
        let mut out = vec![0.0; DIM * per];
        for (axis, pf) in &partials {
            out[axis * per..(axis + 1) * per].copy_from_slice(pf.at(s));
        }
        for i in 0..DIM {
            for flat in 0..per {
                let mut acc = 0.0;
                for p in 0..r {
                    let jp = (flat / strides[p]) % DIM;
                    let base = flat - jp * strides[p];
                    match slots[p] {
                        Slot::Co => {
                            for m in 0..DIM {
                                acc -= gm[(m * DIM + i) * DIM + jp] * a[base + m * strides[p]];
                            }
                        }
                        Slot::Contra => {
                            for m in 0..DIM {
                                acc += gm[(jp * DIM + i) * DIM + m] * a[base + m * strides[p]];
                            }
                        }
                    }
                }
                out[i * per + flat] += acc;
            }
        }
        out
    })
}

/// `∇α` of a k-form field as a dense `(0, k+1)` tensor, `∇_i α_{j…}`.
pub fn covariant_derivative_form(alpha: &FormField, gamma: &TensorField) -> TensorField {
    let lattice = alpha.lattice().clone();
    let k = alpha.degree();
    let nc = n_components(k);
    let partials: Vec<(usize, FormField)> = lattice.active_axes().iter().map(|&a| (a, alpha.partial(a))).collect();
    let indices: Vec<Vec<usize>> = (0..nc).map(|c| multi_index(k, c)).collect();
    let slots = vec![Slot::Co; k + 1];
    TensorField::from_site_fn(&lattice, &slots, |s| {
        let a = alpha.at(s);
        let gm = gamma.at(s);
        let mut out = Vec::with_capacity(DIM.pow(k as u32 + 1));
        for i in 0..DIM {
            let mut f = partials.iter().find(|(ax, _)| *ax == i).map_or(Form::zero(k), |(_, p)| p.at(s));
            for (c, idx) in indices.iter().enumerate() {
                let mut acc = 0.0;
                let mut axes = idx.clone();
                for p in 0..k {
                    let jp = idx[p];
                    for m in 0..DIM {
                        let g = gm[(m * DIM + i) * DIM + jp];
                        if g != 0.0 {
                            axes[p] = m;
                            acc += g * a.get(&axes);
                        }
                    }
                    axes[p] = jp;
                }
                f.components_mut()[c] -= acc;
            }
            out.extend(f.expand());
        }
        out
    })
}

/// Contract slot `pos` of a rank-`r` site tensor with `m`: `B[..a..] = m[a][b] A[..b..]`.
pub fn transform_slot(values: &[f64], r: usize, pos: usize, m: &Matrix7) -> Vec<f64> {
    let stride = DIM.pow((r - 1 - pos) as u32);
    let mut out = vec![0.0; values.len()];
    for (flat, o) in out.iter_mut().enumerate() {
        let a = (flat / stride) % DIM;
        let base = flat - a * stride;
        *o = (0..DIM).map(|b| m[(a, b)] * values[base + b * stride]).sum();
    }
    out
}

/// `|A|²_g` for a site tensor with the given slot types.
pub fn tensor_norm2(values: &[f64], slots: &[Slot], g: &Matrix7, g_inv: &Matrix7) -> f64 {
    let mut dual = values.to_vec();
    for (p, slot) in slots.iter().enumerate() {
        let m = match slot {
            Slot::Co => g_inv,
            Slot::Contra => g,
        };
        dual = transform_slot(&dual, slots.len(), p, m);
    }
    dual.iter().zip(values).map(|(a, b)| a * b).sum()
}

/// Curvature of the induced metric.
#[derive(Clone, Debug)]
pub struct CurvatureData {
    /// `R_{ijkl}`.
    pub rm: TensorField,
    pub ric: TensorField,
    pub scalar: FormField,
}

/// Riemann, Ricci and scalar curvature from `Γ` and its derivatives.
pub fn curvature(gamma: &TensorField, g: &TensorField, g_inv: &TensorField) -> CurvatureData {
    let lattice: Arc<Lattice> = gamma.lattice().clone();
    let dgamma = active_partials(gamma);
    let rm = TensorField::from_site_fn(&lattice, &[Slot::Co; 4], |s| {
        let gm = gamma.at(s);
        let gij = g.at(s);
        // upper[l][i][j][k] = R^l_{ijk}
        let mut upper = vec![0.0; D2 * D2];
        for (axis, dg) in &dgamma {
            let dv = dg.at(s);
            for l in 0..DIM {
                for j in 0..DIM {
                    for k in 0..DIM {
                        let v = dv[(l * DIM + j) * DIM + k];
                        // +∂_i Γ^l_{jk} with i = axis
                        upper[((l * DIM + axis) * DIM + j) * DIM + k] += v;
                        // −∂_j Γ^l_{ik} with j = axis
                        upper[((l * DIM + j) * DIM + axis) * DIM + k] -= v;
                    }
                }
            }
        }
        for l in 0..DIM {
            for i in 0..DIM {
                for j in 0..DIM {
                    for k in 0..DIM {
                        let mut acc = 0.0;
                        for m in 0..DIM {
                            acc += gm[(l * DIM + i) * DIM + m] * gm[(m * DIM + j) * DIM + k]
                                - gm[(l * DIM + j) * DIM + m] * gm[(m * DIM + i) * DIM + k];
                        }
                        upper[((l * DIM + i) * DIM + j) * DIM + k] += acc;
                    }
                }
            }
        }
        let mut lower = vec![0.0; D2 * D2];
        for i in 0..DIM {
            for j in 0..DIM {
                for k in 0..DIM {
                    for l in 0..DIM {
                        lower[((i * DIM + j) * DIM + k) * DIM + l] =
                            (0..DIM).map(|m| gij[l * DIM + m] * upper[((m * DIM + i) * DIM + j) * DIM + k]).sum();
                    }
                }
            }
        }
        lower
    });
    let ric = TensorField::from_site_fn(&lattice, &[Slot::Co, Slot::Co], |s| {
        // Ric_{jk} = g^{il} R_{ijkl}
        let r = rm.at(s);
        let gi = g_inv.at(s);
        let mut out = vec![0.0; D2];
        for j in 0..DIM {
            for k in 0..DIM {
                let mut acc = 0.0;
                for i in 0..DIM {
                    for l in 0..DIM {
                        acc += gi[i * DIM + l] * r[((i * DIM + j) * DIM + k) * DIM + l];
                    }
                }
                out[j * DIM + k] = acc;
            }
        }
        out
    });
    let scalar = FormField::scalar(
        &lattice,
        (0..lattice.sites())
            .map(|s| ric.at(s).iter().zip(g_inv.at(s)).map(|(a, b)| a * b).sum())
            .collect(),
    );
    CurvatureData { rm, ric, scalar }
}

/// Curvature of a structure's own metric.
pub fn structure_curvature(structure: &G2Structure) -> CurvatureData {
    curvature(structure.christoffels(), structure.metric(), structure.inverse_metric())
}

/// `∇φ` of a structure, dense `(0,4)`.
pub fn nabla_phi(structure: &G2Structure) -> TensorField {
    covariant_derivative_form(structure.phi(), structure.christoffels())
}

/// Choice of gauge-fixing vector field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
#[derive(Default)]
pub enum Gauge {
    /// `V = g^{pq} S^i_{pq} e_i`, the harmonic-map vector. Its flow
    /// linearizes to `−Δθ` at a torsion-free structure.
    #[default]
    Harmonic,
    /// `V = −5V₁ − V₂` with `V₁ = (1/7) g^{pq} S^i_{pq} e_i` and
    /// `V₂ = 2A(g^{kj} S^i_{ik} e_j + 5V₁)`.
    Combined { a: f64 },
}


/// The DeTurck vector field of `structure` relative to `reference`.
pub fn deturck_vector(structure: &G2Structure, reference: &G2Structure, gauge: Gauge) -> TensorField {
    let s_field = structure.christoffels().axpy(-1.0, reference.christoffels());
    let g_inv = structure.inverse_metric();
    TensorField::from_site_fn(structure.lattice(), &[Slot::Contra], |s| {
        let sv = s_field.at(s);
        let gi = g_inv.at(s);
        // g^{pq} S^i_{pq}
        let mut v = [0.0; DIM];
        for (i, vi) in v.iter_mut().enumerate() {
            *vi = (0..D2).map(|pq| gi[pq] * sv[i * D2 + pq]).sum::<f64>();
        }
        match gauge {
            Gauge::Harmonic => v.to_vec(),
            Gauge::Combined { a } => {
                let v1 = v.map(|x| x / 7.0);
                let mut tr = [0.0; DIM];
                for (k, t) in tr.iter_mut().enumerate() {
                    *t = (0..DIM).map(|i| sv[(i * DIM + i) * DIM + k]).sum();
                }
                (0..DIM)
                    .map(|j| {
                        let w: f64 = (0..DIM).map(|k| gi[k * DIM + j] * tr[k]).sum();
                        -5.0 * v1[j] - 2.0 * a * (w + 5.0 * v1[j])
                    })
                    .collect()
            }
        }
    })
}

/// `Λ = (|Rm|² + |∇T|²)^{1/2}` in the structure's own metric.
pub fn lambda_monitor(structure: &G2Structure) -> FormField {
    let curv = structure_curvature(structure);
    let t = full_torsion(structure, &nabla_phi(structure));
    let nabla_t = covariant_derivative(&t, structure.christoffels());
    let values: Vec<f64> = (0..structure.sites())
        .into_par_iter()
        .map(|s| {
            let g = structure.metric().matrix_at(s);
            let gi = structure.inverse_metric().matrix_at(s);
            let rm2 = tensor_norm2(curv.rm.at(s), &[Slot::Co; 4], &g, &gi);
            let nt2 = tensor_norm2(nabla_t.at(s), &[Slot::Co; 3], &g, &gi);
            (rm2 + nt2).sqrt()
        })
        .collect();
    FormField::scalar(structure.lattice(), values)
}
