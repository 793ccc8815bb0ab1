//! Pointwise exterior algebra on the 7-dimensional fiber.
//!
//! A k-form is stored by its components on the basis `e^I`, `I` a strictly
//! increasing multi-index, in lexicographic order. Multi-indices are handled
//! as 7-bit masks internally; axes are 0-based.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};
use std::sync::OnceLock;

use nalgebra::{SMatrix, SVector};

/// Fiber dimension.
pub const DIM: usize = 7;
/// Largest component count, `C(7,3) = C(7,4)`.
pub const MAX_COMPONENTS: usize = 35;

pub type Matrix7 = SMatrix<f64, 7, 7>;
pub type Vector7 = SVector<f64, 7>;

/// `C(7, k)`.
pub const fn n_components(k: usize) -> usize {
    match k {
        0 | 7 => 1,
        1 | 6 => 7,
        2 | 5 => 21,
        3 | 4 => 35,
        _ => 0,
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct WedgeTerm {
    pub a: u8,
    pub b: u8,
    pub out: u8,
    pub sign: f64,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct InteriorTerm {
    pub axis: u8,
    pub from: u8,
    pub to: u8,
    pub sign: f64,
}

struct Tables {
    masks: [Vec<u8>; 8],
    index_of: [u8; 128],
    wedge: Vec<Vec<WedgeTerm>>,
    interior: Vec<Vec<InteriorTerm>>,
    laplace: Vec<LaplaceLevel>,
}

/// Index tables for one level of the Laplace expansion in [`ExteriorPower::new`].
#[derive(Default)]
struct LaplaceLevel {
    /// Per row multi-index: first axis and index of the remaining multi-index.
    rows: Vec<(u8, u8)>,
    /// Per column multi-index, `level` entries: the removed axis and the index
    /// of the remaining multi-index.
    cols: Vec<(u8, u8)>,
}

fn tables() -> &'static Tables {
    static TABLES: OnceLock<Tables> = OnceLock::new();
    TABLES.get_or_init(|| {
        let mut masks: [Vec<u8>; 8] = Default::default();
        // lexicographic order of increasing multi-indices: sort by the index
        // sequence, not by the numeric mask value
        for k in 0..=DIM {
            let mut ms: Vec<u8> = (0u8..128).filter(|m| m.count_ones() as usize == k).collect();
            ms.sort_by_key(|&m| mask_axes(m));
            masks[k] = ms;
        }
        let mut index_of = [0u8; 128];
        for ms in &masks {
            for (i, &m) in ms.iter().enumerate() {
                index_of[m as usize] = i as u8;
            }
        }
        let mut wedge = vec![Vec::new(); 64];
        for k in 0..=DIM {
            for l in 0..=(DIM - k) {
                let mut terms = Vec::new();
                for (a, &ma) in masks[k].iter().enumerate() {
                    for (b, &mb) in masks[l].iter().enumerate() {
                        if ma & mb == 0 {
                            terms.push(WedgeTerm {
                                a: a as u8,
                                b: b as u8,
                                out: index_of[(ma | mb) as usize],
                                sign: merge_sign(ma, mb),
                            });
                        }
                    }
                }
                wedge[k * 8 + l] = terms;
            }
        }
        let mut interior = vec![Vec::new(); 8];
        for k in 1..=DIM {
            let mut terms = Vec::new();
            for (from, &m) in masks[k].iter().enumerate() {
                for axis in 0..DIM {
                    if m & (1 << axis) != 0 {
                        // position of `axis` inside the multi-index
                        let pos = (m & ((1u8 << axis) - 1)).count_ones();
                        terms.push(InteriorTerm {
                            axis: axis as u8,
                            from: from as u8,
                            to: index_of[(m & !(1 << axis)) as usize],
                            sign: if pos.is_multiple_of(2) { 1.0 } else { -1.0 },
                        });
                    }
                }
            }
            interior[k] = terms;
        }
        let mut laplace: Vec<LaplaceLevel> = (0..=DIM).map(|_| LaplaceLevel::default()).collect();
        for (level, lv) in laplace.iter_mut().enumerate().skip(1) {
            for &m in &masks[level] {
                let i0 = m.trailing_zeros() as u8;
                lv.rows.push((i0, index_of[(m & !(1 << i0)) as usize]));
                let mut bits = m;
                while bits != 0 {
                    let jq = bits.trailing_zeros() as u8;
                    bits &= bits - 1;
                    lv.cols.push((jq, index_of[(m & !(1 << jq)) as usize]));
                }
            }
        }
        Tables { masks, index_of, wedge, interior, laplace }
    })
}

fn mask_axes(m: u8) -> Vec<usize> {
    (0..DIM).filter(|i| m & (1 << i) != 0).collect()
}

/// Sign of the shuffle that sorts the concatenation `I J` of two disjoint
/// increasing multi-indices.
pub fn merge_sign(a: u8, b: u8) -> f64 {
    let mut inversions = 0;
    for i in 0..DIM {
        if a & (1 << i) != 0 {
            inversions += (b & ((1u8 << i) - 1)).count_ones();
        }
    }
    if inversions % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Bit mask of the `idx`-th multi-index of degree `k`.
pub fn mask(k: usize, idx: usize) -> u8 {
    tables().masks[k][idx]
}

/// Position of a multi-index (given as a mask) in the lexicographic order of its degree.
pub fn index_of(mask: u8) -> usize {
    tables().index_of[mask as usize] as usize
}

/// Axes (0-based, increasing) of the `idx`-th multi-index of degree `k`.
pub fn multi_index(k: usize, idx: usize) -> Vec<usize> {
    mask_axes(mask(k, idx))
}

/// Component index of `e^{axes}` together with the permutation sign, or
/// `None` when an axis repeats.
pub fn component_of(axes: &[usize]) -> Option<(usize, f64)> {
    let mut m = 0u8;
    let mut sign = 1.0;
    for (p, &a) in axes.iter().enumerate() {
        if m & (1 << a) != 0 {
            return None;
        }
        m |= 1 << a;
        for &b in &axes[..p] {
            if b > a {
                sign = -sign;
            }
        }
    }
    Some((index_of(m), sign))
}

pub(crate) fn wedge_terms(k: usize, l: usize) -> &'static [WedgeTerm] {
    &tables().wedge[k * 8 + l]
}

pub(crate) fn interior_terms(k: usize) -> &'static [InteriorTerm] {
    &tables().interior[k]
}

/// A k-form at a single point of the fiber.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Form {
    degree: usize,
    c: [f64; MAX_COMPONENTS],
}

impl Form {
    pub fn zero(degree: usize) -> Self {
        assert!(degree <= DIM, "form degree {degree} exceeds {DIM}");
        Form { degree, c: [0.0; MAX_COMPONENTS] }
    }

    pub fn from_components(degree: usize, comps: &[f64]) -> Self {
        let mut f = Form::zero(degree);
        assert_eq!(comps.len(), n_components(degree), "wrong component count for degree {degree}");
        f.c[..comps.len()].copy_from_slice(comps);
        f
    }

    /// `e^{a_1} ∧ ... ∧ e^{a_k}` for arbitrary (distinct) axes.
    pub fn basis(axes: &[usize]) -> Self {
        let mut f = Form::zero(axes.len());
        if let Some((i, s)) = component_of(axes) {
            f.c[i] = s;
        }
        f
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn components(&self) -> &[f64] {
        &self.c[..n_components(self.degree)]
    }

    pub fn components_mut(&mut self) -> &mut [f64] {
        let n = n_components(self.degree);
        &mut self.c[..n]
    }

    /// Component of `e^{axes}` including the permutation sign.
    pub fn get(&self, axes: &[usize]) -> f64 {
        match component_of(axes) {
            Some((i, s)) => s * self.c[i],
            None => 0.0,
        }
    }

    pub fn wedge(&self, other: &Form) -> Form {
        let (k, l) = (self.degree, other.degree);
        assert!(k + l <= DIM, "wedge degree {k}+{l} exceeds {DIM}");
        let mut out = Form::zero(k + l);
        for t in wedge_terms(k, l) {
            out.c[t.out as usize] += t.sign * self.c[t.a as usize] * other.c[t.b as usize];
        }
        out
    }

    /// `X ⌟ α` for a vector `X` with components `X^i`.
    pub fn interior(&self, x: &[f64; DIM]) -> Form {
        assert!(self.degree >= 1, "interior product of a 0-form");
        let mut out = Form::zero(self.degree - 1);
        for t in interior_terms(self.degree) {
            out.c[t.to as usize] += t.sign * x[t.axis as usize] * self.c[t.from as usize];
        }
        out
    }

    /// `e_axis ⌟ α`.
    pub fn interior_axis(&self, axis: usize) -> Form {
        let mut x = [0.0; DIM];
        x[axis] = 1.0;
        self.interior(&x)
    }

    /// Euclidean norm squared (sum over increasing multi-indices).
    pub fn norm2(&self) -> f64 {
        self.components().iter().map(|v| v * v).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.components().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Components of the metric-raised form `α^I`, given `Λ^k(g^{-1})`.
    pub fn raise(&self, lambda_inv: &ExteriorPower) -> Form {
        debug_assert_eq!(lambda_inv.degree, self.degree);
        Form { degree: self.degree, c: lambda_inv.apply(&self.c) }
    }

    /// Pointwise inner product `⟨α, β⟩_g`.
    pub fn dot(&self, other: &Form, lambda_inv: &ExteriorPower) -> f64 {
        let raised = self.raise(lambda_inv);
        raised.components().iter().zip(other.components()).map(|(a, b)| a * b).sum()
    }

    /// Pullback `A^*α`, i.e. `(A^*α)(v_1,…,v_k) = α(Av_1,…,Av_k)`.
    pub fn pullback(&self, a: &Matrix7) -> Form {
        let lam = ExteriorPower::new(&a.transpose(), self.degree);
        Form { degree: self.degree, c: lam.apply(&self.c) }
    }

    /// Dense antisymmetric tensor `α_{i_1…i_k}` of `7^k` entries, row-major.
    pub fn expand(&self) -> Vec<f64> {
        let k = self.degree;
        let mut out = vec![0.0; DIM.pow(k as u32)];
        let mut axes = vec![0usize; k];
        for (flat, v) in out.iter_mut().enumerate() {
            let mut r = flat;
            for slot in (0..k).rev() {
                axes[slot] = r % DIM;
                r /= DIM;
            }
            *v = self.get(&axes);
        }
        out
    }

    /// Inverse of [`Form::expand`]: reads the increasing-index entries.
    pub fn compress(degree: usize, dense: &[f64]) -> Form {
        let mut f = Form::zero(degree);
        for i in 0..n_components(degree) {
            let flat = multi_index(degree, i).iter().fold(0, |acc, &a| acc * DIM + a);
            f.c[i] = dense[flat];
        }
        f
    }
}

impl Add for Form {
    type Output = Form;
    fn add(mut self, rhs: Form) -> Form {
        self += rhs;
        self
    }
}

impl AddAssign for Form {
    fn add_assign(&mut self, rhs: Form) {
        assert_eq!(self.degree, rhs.degree, "adding forms of different degree");
        for (a, b) in self.c.iter_mut().zip(rhs.c.iter()) {
            *a += b;
        }
    }
}

impl Sub for Form {
    type Output = Form;
    fn sub(mut self, rhs: Form) -> Form {
        self -= rhs;
        self
    }
}

impl SubAssign for Form {
    fn sub_assign(&mut self, rhs: Form) {
        assert_eq!(self.degree, rhs.degree, "subtracting forms of different degree");
        for (a, b) in self.c.iter_mut().zip(rhs.c.iter()) {
            *a -= b;
        }
    }
}

impl Mul<f64> for Form {
    type Output = Form;
    fn mul(mut self, s: f64) -> Form {
        for a in self.c.iter_mut() {
            *a *= s;
        }
        self
    }
}

impl Neg for Form {
    type Output = Form;
    fn neg(self) -> Form {
        self * -1.0
    }
}

/// The induced matrix `Λ^k M` acting on k-form components:
/// `(Λ^k M)_{IJ} = det M[I, J]`.
#[derive(Clone, Debug)]
pub struct ExteriorPower {
    degree: usize,
    n: usize,
    entries: Vec<f64>,
}

impl ExteriorPower {
    /// Built degree by degree with a Laplace expansion along the first row:
    /// `det M[I,J] = Σ_q (−1)^q M[i₀, j_q] det M[I∖i₀, J∖j_q]`.
    pub fn new(m: &Matrix7, degree: usize) -> Self {
        let tab = tables();
        let mut a = [0.0; DIM * DIM];
        for i in 0..DIM {
            for j in 0..DIM {
                a[i * DIM + j] = m[(i, j)];
            }
        }
        let mut prev = vec![1.0];
        for level in 1..=degree {
            let n = n_components(level);
            let np = n_components(level - 1);
            let lv = &tab.laplace[level];
            let mut cur = vec![0.0; n * n];
            for (row, &(i0, rest)) in cur.chunks_exact_mut(n).zip(&lv.rows) {
                let arow = &a[i0 as usize * DIM..(i0 as usize + 1) * DIM];
                let minors = &prev[rest as usize * np..(rest as usize + 1) * np];
                for (out, col) in row.iter_mut().zip(lv.cols.chunks_exact(level)) {
                    let mut acc = 0.0;
                    let mut sign = 1.0;
                    for &(jq, minor) in col {
                        acc += sign * arow[jq as usize] * minors[minor as usize];
                        sign = -sign;
                    }
                    *out = acc;
                }
            }
            prev = cur;
        }
        ExteriorPower { degree, n: n_components(degree), entries: prev }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    fn apply(&self, v: &[f64; MAX_COMPONENTS]) -> [f64; MAX_COMPONENTS] {
        let mut out = [0.0; MAX_COMPONENTS];
        for (i, o) in out.iter_mut().take(self.n).enumerate() {
            let row = &self.entries[i * self.n..(i + 1) * self.n];
            *o = row.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
        }
        out
    }
}

/// Hodge star for the metric with inverse `g_inv` and volume density
/// `vol = √det g`, orientation `e^{1234567}`.
pub fn hodge_star(alpha: &Form, g_inv: &Matrix7, vol: f64) -> Form {
    let lam = ExteriorPower::new(g_inv, alpha.degree());
    hodge_star_with(alpha, &lam, vol)
}

/// Hodge star with a precomputed `Λ^k(g^{-1})`.
pub fn hodge_star_with(alpha: &Form, lambda_inv: &ExteriorPower, vol: f64) -> Form {
    let k = alpha.degree();
    let raised = alpha.raise(lambda_inv);
    let mut out = Form::zero(DIM - k);
    let full: u8 = 0x7f;
    for j in 0..n_components(DIM - k) {
        let mj = mask(DIM - k, j);
        let mi = full & !mj;
        out.c[j] = vol * merge_sign(mi, mj) * raised.c[index_of(mi)];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexicographic_order() {
        assert_eq!(multi_index(2, 0), vec![0, 1]);
        assert_eq!(multi_index(2, 6), vec![1, 2]);
        assert_eq!(multi_index(3, 0), vec![0, 1, 2]);
        assert_eq!(multi_index(3, 34), vec![4, 5, 6]);
        for k in 0..=DIM {
            for i in 0..n_components(k) {
                assert_eq!(index_of(mask(k, i)), i);
            }
            for i in 1..n_components(k) {
                assert!(multi_index(k, i - 1) < multi_index(k, i));
            }
        }
    }

    #[test]
    fn basis_wedge_and_interior() {
        let e1 = Form::basis(&[0]);
        let e23 = Form::basis(&[1, 2]);
        assert_eq!(e1.wedge(&e23).get(&[0, 1, 2]), 1.0);
        assert_eq!(e23.wedge(&e1).get(&[0, 1, 2]), 1.0);
        assert_eq!(Form::basis(&[2, 0]).get(&[0, 2]), -1.0);
        let e123 = Form::basis(&[0, 1, 2]);
        assert_eq!(e123.interior_axis(0), e23);
        assert_eq!(e123.interior_axis(1).get(&[0, 2]), -1.0);
        let x = [0.3, -1.0, 2.0, 0.5, 0.0, 1.5, -0.7];
        let a = Form::basis(&[0, 1, 3]) + Form::basis(&[1, 5, 6]) * 2.0;
        assert!(a.interior(&x).interior(&x).max_abs() < 1e-15);
    }

    #[test]
    fn expand_compress_signs() {
        let a = Form::basis(&[0, 3, 5]) * 2.0 - Form::basis(&[1, 2, 6]);
        let dense = a.expand();
        let at = |i: usize, j: usize, k: usize| dense[(i * DIM + j) * DIM + k];
        assert_eq!(at(0, 3, 5), 2.0);
        assert_eq!(at(3, 0, 5), -2.0);
        assert_eq!(at(5, 3, 0), -2.0);
        assert_eq!(at(6, 1, 2), -1.0);
        assert_eq!(Form::compress(3, &dense), a);
    }

    #[test]
    fn star_of_basis_and_top_forms() {
        let id = Matrix7::identity();
        let one = Form::from_components(0, &[1.0]);
        assert_eq!(hodge_star(&one, &id, 2.5).get(&[0, 1, 2, 3, 4, 5, 6]), 2.5);
        assert_eq!(hodge_star(&Form::basis(&[0, 1, 2]), &id, 1.0), Form::basis(&[3, 4, 5, 6]));
        assert_eq!(hodge_star(&Form::basis(&[0, 3, 4]), &id, 1.0), Form::basis(&[1, 2, 5, 6]));
    }

    #[test]
    fn exterior_power_is_multiplicative() {
        let a = Matrix7::from_fn(|i, j| if i == j { 1.0 } else { 0.1 * ((i * 3 + j * 5) % 7) as f64 - 0.3 });
        let b = Matrix7::from_fn(|i, j| if i == j { 2.0 } else { 0.05 * ((i + 2 * j) % 5) as f64 });
        for k in 0..=DIM {
            let la = ExteriorPower::new(&a, k);
            let lb = ExteriorPower::new(&b, k);
            let lab = ExteriorPower::new(&(a * b), k);
            let n = n_components(k);
            for i in 0..n {
                for j in 0..n {
                    let prod: f64 = (0..n).map(|m| la.entry(i, m) * lb.entry(m, j)).sum();
                    assert!((prod - lab.entry(i, j)).abs() < 1e-12, "k={k}");
                }
            }
        }
    }
}
