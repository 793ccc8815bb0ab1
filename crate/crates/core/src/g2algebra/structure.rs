use std::sync::{Arc, OnceLock};

use nalgebra::Cholesky;
use rayon::prelude::*;

use super::{metric_from_phi, G2Point};
use crate::error::{Error, Result};
use crate::exterior::{hodge_star_with, ExteriorPower, Form, Matrix7, DIM};
use crate::lattice::{FormField, Lattice, Slot, TensorField};
use crate::riemann;

/// A positive 3-form field with its induced geometry.
#[derive(Debug)]
pub struct G2Structure {
    phi: FormField,
    psi: FormField,
    metric: TensorField,
    inverse_metric: TensorField,
    vol_density: FormField,
    christoffels: OnceLock<TensorField>,
}

impl Clone for G2Structure {
    fn clone(&self) -> Self {
        let christoffels = OnceLock::new();
        if let Some(c) = self.christoffels.get() {
            let _ = christoffels.set(c.clone());
        }
        G2Structure {
            phi: self.phi.clone(),
            psi: self.psi.clone(),
            metric: self.metric.clone(),
            inverse_metric: self.inverse_metric.clone(),
            vol_density: self.vol_density.clone(),
            christoffels,
        }
    }
}

struct SiteGeometry {
    g: Matrix7,
    g_inv: Matrix7,
    vol: f64,
    psi: Form,
}

impl G2Structure {
    /// Builds the structure; fails with `NotPositive` naming the first bad site.
    pub fn new(phi: FormField) -> Result<Self> {
        assert_eq!(phi.degree(), 3, "a G2 structure is a 3-form");
        let lattice = phi.lattice().clone();
        let sites: Vec<std::result::Result<SiteGeometry, (usize, String)>> = (0..lattice.sites())
            .into_par_iter()
            .map(|s| {
                let p = phi.at(s);
                let (g, vol) = metric_from_phi(&p).map_err(|e| (s, e.0))?;
                let g_inv = Cholesky::new(g).expect("checked positive").inverse();
                let psi = hodge_star_with(&p, &ExteriorPower::new(&g_inv, 3), vol);
                Ok(SiteGeometry { g, g_inv, vol, psi })
            })
            .collect();
        let mut geo = Vec::with_capacity(sites.len());
        for s in sites {
            match s {
                Ok(g) => geo.push(g),
                Err((site, reason)) => return Err(Error::NotPositive { site, reason }),
            }
        }
        let metric = TensorField::from_matrices(&lattice, Slot::Co, &geo.iter().map(|s| s.g).collect::<Vec<_>>());
        let inverse_metric =
            TensorField::from_matrices(&lattice, Slot::Contra, &geo.iter().map(|s| s.g_inv).collect::<Vec<_>>());
        let vol_density = FormField::scalar(&lattice, geo.iter().map(|s| s.vol).collect());
        let psi = FormField::from_sites(&lattice, 4, &geo.iter().map(|s| s.psi).collect::<Vec<_>>());
        Ok(G2Structure { phi, psi, metric, inverse_metric, vol_density, christoffels: OnceLock::new() })
    }

    /// The constant structure `φ₀` on `lattice`.
    pub fn model(lattice: &Arc<Lattice>) -> Self {
        Self::new(FormField::constant(lattice, &super::model_phi())).expect("the model form is positive")
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        self.phi.lattice()
    }

    pub fn phi(&self) -> &FormField {
        &self.phi
    }

    pub fn psi(&self) -> &FormField {
        &self.psi
    }

    pub fn metric(&self) -> &TensorField {
        &self.metric
    }

    pub fn inverse_metric(&self) -> &TensorField {
        &self.inverse_metric
    }

    /// `√det g` per site.
    pub fn vol_density(&self) -> &FormField {
        &self.vol_density
    }

    pub fn sites(&self) -> usize {
        self.phi.sites()
    }

    pub fn point(&self, site: usize) -> G2Point {
        G2Point::with_psi(
            self.phi.at(site),
            self.psi.at(site),
            self.metric.matrix_at(site),
            self.inverse_metric.matrix_at(site),
            self.vol_density.data()[site],
        )
    }

    /// Christoffel symbols `Γ^i_{jk}` of the induced metric, computed once.
    pub fn christoffels(&self) -> &TensorField {
        self.christoffels.get_or_init(|| riemann::christoffels(&self.metric, &self.inverse_metric))
    }

    /// Pointwise Hodge star.
    pub fn star(&self, a: &FormField) -> FormField {
        let k = a.degree();
        a.map(DIM - k, |s, f| {
            hodge_star_with(&f, &ExteriorPower::new(&self.inverse_metric.matrix_at(s), k), self.vol_density.data()[s])
        })
    }

    /// `d* = (-1)^k * d *` on k-forms of a 7-manifold.
    pub fn codifferential(&self, a: &FormField) -> FormField {
        assert!(a.degree() >= 1);
        let sign = if a.degree().is_multiple_of(2) { 1.0 } else { -1.0 };
        &self.star(&self.star(a).exterior_derivative()) * sign
    }

    /// Hodge Laplacian `dd* + d*d`.
    pub fn hodge_laplacian(&self, a: &FormField) -> FormField {
        let k = a.degree();
        let mut out = FormField::zeros(a.lattice(), k);
        if k >= 1 {
            out = &out + &self.codifferential(a).exterior_derivative();
        }
        if k < DIM {
            out = &out + &self.codifferential(&a.exterior_derivative());
        }
        out
    }

    /// Pointwise `⟨a, b⟩_g` as a scalar field.
    pub fn inner(&self, a: &FormField, b: &FormField) -> FormField {
        assert_eq!(a.degree(), b.degree());
        let k = a.degree();
        let values: Vec<f64> = (0..self.sites())
            .into_par_iter()
            .map(|s| a.at(s).dot(&b.at(s), &ExteriorPower::new(&self.inverse_metric.matrix_at(s), k)))
            .collect();
        FormField::scalar(self.lattice(), values)
    }

    /// `∫ f dv_g`.
    pub fn integrate(&self, f: &FormField) -> f64 {
        crate::lattice::integrate_density(f.data(), self.vol_density.data(), self.lattice())
    }
}
