use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use rayon::prelude::*;

use super::Lattice;
use crate::error::{Error, Result};
use crate::exterior::{n_components, Form, Matrix7, DIM};

/// A field of k-forms, site-major with the `C(7,k)` components of each site
/// contiguous.
#[derive(Clone, Debug, PartialEq)]
pub struct FormField {
    degree: usize,
    lattice: Arc<Lattice>,
    data: Vec<f64>,
}

impl FormField {
    pub fn zeros(lattice: &Arc<Lattice>, degree: usize) -> Self {
        assert!(degree <= DIM);
        FormField { degree, lattice: lattice.clone(), data: vec![0.0; lattice.sites() * n_components(degree)] }
    }

    pub fn constant(lattice: &Arc<Lattice>, form: &Form) -> Self {
        let data = (0..lattice.sites()).flat_map(|_| form.components().iter().copied()).collect();
        FormField { degree: form.degree(), lattice: lattice.clone(), data }
    }

    pub fn from_data(lattice: &Arc<Lattice>, degree: usize, data: Vec<f64>) -> Result<Self> {
        let expected = lattice.sites() * n_components(degree);
        if data.len() != expected {
            return Err(Error::Mismatch(format!("{degree}-form field needs {expected} values, got {}", data.len())));
        }
        Ok(FormField { degree, lattice: lattice.clone(), data })
    }

    pub fn from_sites(lattice: &Arc<Lattice>, degree: usize, forms: &[Form]) -> Self {
        assert_eq!(forms.len(), lattice.sites());
        let data = forms
            .iter()
            .flat_map(|f| {
                assert_eq!(f.degree(), degree);
                f.components().iter().copied()
            })
            .collect();
        FormField { degree, lattice: lattice.clone(), data }
    }

    /// Samples `f` at every site.
    pub fn from_fn(lattice: &Arc<Lattice>, degree: usize, f: impl Fn(&[f64; DIM]) -> Form + Sync) -> Self {
        let forms: Vec<Form> = (0..lattice.sites()).into_par_iter().map(|s| f(&lattice.coords(s))).collect();
        Self::from_sites(lattice, degree, &forms)
    }

    pub fn scalar(lattice: &Arc<Lattice>, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), lattice.sites());
        FormField { degree: 0, lattice: lattice.clone(), data: values }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn sites(&self) -> usize {
        self.lattice.sites()
    }

    pub fn at(&self, site: usize) -> Form {
        let n = n_components(self.degree);
        Form::from_components(self.degree, &self.data[site * n..(site + 1) * n])
    }

    pub fn forms(&self) -> Vec<Form> {
        (0..self.sites()).map(|s| self.at(s)).collect()
    }

    /// Pointwise map to a field of (possibly) different degree.
    pub fn map(&self, degree: usize, f: impl Fn(usize, Form) -> Form + Sync) -> FormField {
        let forms: Vec<Form> = (0..self.sites()).into_par_iter().map(|s| f(s, self.at(s))).collect();
        FormField::from_sites(&self.lattice, degree, &forms)
    }

    pub fn partial(&self, axis: usize) -> FormField {
        let data = self.lattice.differentiate(&self.data, n_components(self.degree), axis);
        FormField { degree: self.degree, lattice: self.lattice.clone(), data }
    }

    /// `dα = Σ_i dx^i ∧ ∂_i α`.
    pub fn exterior_derivative(&self) -> FormField {
        assert!(self.degree < DIM, "d of a top-degree form");
        let mut out = FormField::zeros(&self.lattice, self.degree + 1);
        for &axis in self.lattice.active_axes() {
            let da = self.partial(axis);
            let e = Form::basis(&[axis]);
            let term = da.map(self.degree + 1, |_, a| e.wedge(&a));
            out = &out + &term;
        }
        out
    }

    pub fn wedge(&self, other: &FormField) -> FormField {
        self.check_same_lattice(&other.lattice);
        let degree = self.degree + other.degree;
        self.map(degree, |s, a| a.wedge(&other.at(s)))
    }

    /// `X ⌟ α` for a vector field `X`.
    pub fn interior(&self, x: &TensorField) -> FormField {
        assert_eq!(x.rank(), 1, "interior product needs a vector field");
        self.check_same_lattice(&x.lattice);
        self.map(self.degree - 1, |s, a| {
            let v = x.at(s);
            a.interior(&[v[0], v[1], v[2], v[3], v[4], v[5], v[6]])
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Lattice mean of each component (the zero Fourier mode).
    pub fn mean_components(&self) -> Vec<f64> {
        let n = n_components(self.degree);
        let mut mean = vec![0.0; n];
        for site in self.data.chunks_exact(n) {
            for (m, v) in mean.iter_mut().zip(site) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= self.sites() as f64);
        mean
    }

    /// `self + s·other`.
    pub fn axpy(&self, s: f64, other: &FormField) -> FormField {
        assert_eq!(self.degree, other.degree);
        self.check_same_lattice(&other.lattice);
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + s * b).collect();
        FormField { degree: self.degree, lattice: self.lattice.clone(), data }
    }

    fn check_same_lattice(&self, other: &Arc<Lattice>) {
        assert!(Arc::ptr_eq(&self.lattice, other) || *self.lattice == **other, "fields live on different lattices");
    }
}

impl Add for &FormField {
    type Output = FormField;
    fn add(self, rhs: &FormField) -> FormField {
        self.axpy(1.0, rhs)
    }
}

impl Sub for &FormField {
    type Output = FormField;
    fn sub(self, rhs: &FormField) -> FormField {
        self.axpy(-1.0, rhs)
    }
}

impl Mul<f64> for &FormField {
    type Output = FormField;
    fn mul(self, s: f64) -> FormField {
        let data = self.data.iter().map(|v| v * s).collect();
        FormField { degree: self.degree, lattice: self.lattice.clone(), data }
    }
}

impl Neg for &FormField {
    type Output = FormField;
    fn neg(self) -> FormField {
        self * -1.0
    }
}

/// Index position of a tensor slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    Co,
    Contra,
}

/// A dense tensor field with `7^rank` components per site, row-major in the
/// slot indices.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorField {
    slots: Vec<Slot>,
    lattice: Arc<Lattice>,
    data: Vec<f64>,
}

impl TensorField {
    pub fn zeros(lattice: &Arc<Lattice>, slots: &[Slot]) -> Self {
        let per = DIM.pow(slots.len() as u32);
        TensorField { slots: slots.to_vec(), lattice: lattice.clone(), data: vec![0.0; per * lattice.sites()] }
    }

    pub fn from_data(lattice: &Arc<Lattice>, slots: &[Slot], data: Vec<f64>) -> Self {
        assert_eq!(data.len(), DIM.pow(slots.len() as u32) * lattice.sites(), "tensor field size mismatch");
        TensorField { slots: slots.to_vec(), lattice: lattice.clone(), data }
    }

    /// Builds a field site by site; `f` returns the `7^rank` components.
    pub fn from_site_fn(lattice: &Arc<Lattice>, slots: &[Slot], f: impl Fn(usize) -> Vec<f64> + Sync) -> Self {
        let per = DIM.pow(slots.len() as u32);
        let parts: Vec<Vec<f64>> = (0..lattice.sites()).into_par_iter().map(&f).collect();
        let mut data = Vec::with_capacity(per * lattice.sites());
        for p in parts {
            assert_eq!(p.len(), per, "site closure returned the wrong component count");
            data.extend(p);
        }
        TensorField { slots: slots.to_vec(), lattice: lattice.clone(), data }
    }

    /// A symmetric (0,2) or (2,0) field from per-site matrices.
    pub fn from_matrices(lattice: &Arc<Lattice>, slot: Slot, mats: &[Matrix7]) -> Self {
        Self::from_site_fn(lattice, &[slot, slot], |s| {
            let m = &mats[s];
            (0..DIM * DIM).map(|i| m[(i / DIM, i % DIM)]).collect()
        })
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn rank(&self) -> usize {
        self.slots.len()
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn components_per_site(&self) -> usize {
        DIM.pow(self.slots.len() as u32)
    }

    pub fn at(&self, site: usize) -> &[f64] {
        let per = self.components_per_site();
        &self.data[site * per..(site + 1) * per]
    }

    /// Site value of a rank-2 field as a matrix.
    pub fn matrix_at(&self, site: usize) -> Matrix7 {
        assert_eq!(self.rank(), 2);
        let v = self.at(site);
        Matrix7::from_fn(|i, j| v[i * DIM + j])
    }

    pub fn partial(&self, axis: usize) -> TensorField {
        let data = self.lattice.differentiate(&self.data, self.components_per_site(), axis);
        TensorField { slots: self.slots.clone(), lattice: self.lattice.clone(), data }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn axpy(&self, s: f64, other: &TensorField) -> TensorField {
        assert_eq!(self.slots, other.slots, "tensor slot mismatch");
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + s * b).collect();
        TensorField { slots: self.slots.clone(), lattice: self.lattice.clone(), data }
    }

    /// Largest violation of symmetry under swapping slots `a` and `b`.
    pub fn symmetry_residual(&self, a: usize, b: usize, antisymmetric: bool) -> f64 {
        let r = self.rank();
        let per = self.components_per_site();
        let sign = if antisymmetric { -1.0 } else { 1.0 };
        let mut worst: f64 = 0.0;
        let mut idx = vec![0; r];
        for site in self.data.chunks_exact(per) {
            for (flat, v) in site.iter().enumerate() {
                let mut q = flat;
                for s in (0..r).rev() {
                    idx[s] = q % DIM;
                    q /= DIM;
                }
                idx.swap(a, b);
                let swapped = idx.iter().fold(0, |acc, &i| acc * DIM + i);
                worst = worst.max((v - sign * site[swapped]).abs());
            }
        }
        worst
    }
}

/// `Σ f·√det g · w` over the lattice, with `w` the site weight (inactive
/// axes contribute a factor `2π` each).
pub fn integrate(f: &FormField, metric: &TensorField) -> f64 {
    assert_eq!(f.degree(), 0, "integrate expects a scalar field");
    let density: Vec<f64> = (0..f.sites()).map(|s| metric.matrix_at(s).determinant().sqrt()).collect();
    integrate_density(f.data(), &density, f.lattice())
}

/// Riemann sum of `values·density`, accumulated in site order.
pub fn integrate_density(values: &[f64], density: &[f64], lattice: &Lattice) -> f64 {
    assert_eq!(values.len(), lattice.sites());
    assert_eq!(density.len(), lattice.sites());
    let sum: f64 = values.iter().zip(density).map(|(v, d)| v * d).sum();
    sum * lattice.site_weight()
}
