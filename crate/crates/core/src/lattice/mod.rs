//! Periodic lattices on the 7-torus with dimensionally reduced storage.
//!
//! Only the active axes carry grid points; every field is constant along the
//! remaining axes. The pointwise algebra stays fully 7-dimensional.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exterior::DIM;

pub mod checkpoint;
mod field;

pub use field::{integrate, integrate_density, FormField, Slot, TensorField};

/// Discretization of `∂_i` along active axes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Fourier multiplier `i k`, Nyquist mode dropped.
    Spectral,
    /// Fourth-order centered periodic stencil.
    Fd4,
}

/// Serializable description of a lattice. Axes are 1-based here, as in
/// config files and checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    pub active_axes: Vec<usize>,
    pub n: usize,
    pub period: f64,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
}

fn default_scheme() -> Scheme {
    Scheme::Spectral
}

#[derive(Clone)]
struct FftPair {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

/// A periodic lattice with `n` points along each of 1–3 active axes.
#[derive(Clone)]
pub struct Lattice {
    axes: Vec<usize>,
    n: usize,
    period: f64,
    scheme: Scheme,
    fft: Option<FftPair>,
}

impl fmt::Debug for Lattice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Lattice")
            .field("axes", &self.axes)
            .field("n", &self.n)
            .field("period", &self.period)
            .field("scheme", &self.scheme)
            .finish()
    }
}

impl PartialEq for Lattice {
    fn eq(&self, other: &Self) -> bool {
        self.axes == other.axes && self.n == other.n && self.period == other.period && self.scheme == other.scheme
    }
}

impl Lattice {
    /// `axes` are 0-based indices into the 7 coordinates.
    pub fn new(axes: &[usize], n: usize, period: f64, scheme: Scheme) -> Result<Arc<Lattice>> {
        let invalid = |msg: String| Err(Error::InvalidLattice(msg));
        if axes.is_empty() || axes.len() > 3 {
            return invalid(format!("need 1 to 3 active axes, got {}", axes.len()));
        }
        for (i, &a) in axes.iter().enumerate() {
            if a >= DIM {
                return invalid(format!("axis {} out of range", a + 1));
            }
            if axes[..i].contains(&a) {
                return invalid(format!("axis {} listed twice", a + 1));
            }
        }
        if !(period.is_finite() && period > 0.0) {
            return invalid(format!("period must be positive, got {period}"));
        }
        match scheme {
            Scheme::Spectral if n < 8 || !n.is_multiple_of(2) => {
                return invalid(format!("spectral scheme needs even n >= 8, got {n}"));
            }
            Scheme::Fd4 if n < 5 => return invalid(format!("fd4 scheme needs n >= 5, got {n}")),
            _ => {}
        }
        let mut sorted = axes.to_vec();
        sorted.sort_unstable();
        let fft = (scheme == Scheme::Spectral).then(|| {
            let mut planner = FftPlanner::new();
            FftPair { forward: planner.plan_fft_forward(n), inverse: planner.plan_fft_inverse(n) }
        });
        Ok(Arc::new(Lattice { axes: sorted, n, period, scheme, fft }))
    }

    pub fn from_spec(spec: &LatticeSpec) -> Result<Arc<Lattice>> {
        if spec.active_axes.iter().any(|&a| a == 0 || a > DIM) {
            return Err(Error::InvalidLattice(format!("active axes must lie in 1..=7, got {:?}", spec.active_axes)));
        }
        let axes: Vec<usize> = spec.active_axes.iter().map(|a| a - 1).collect();
        Lattice::new(&axes, spec.n, spec.period, spec.scheme)
    }

    pub fn spec(&self) -> LatticeSpec {
        LatticeSpec {
            active_axes: self.axes.iter().map(|a| a + 1).collect(),
            n: self.n,
            period: self.period,
            scheme: self.scheme,
        }
    }

    /// Active axes, 0-based and increasing.
    pub fn active_axes(&self) -> &[usize] {
        &self.axes
    }

    pub fn is_active(&self, axis: usize) -> bool {
        self.axes.contains(&axis)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn spacing(&self) -> f64 {
        self.period / self.n as f64
    }

    /// Number of stored sites, `n^a`.
    pub fn sites(&self) -> usize {
        self.n.pow(self.axes.len() as u32)
    }

    /// Quadrature weight of one site: `(L/n)^a (2π)^(7-a)`.
    ///
    /// Inactive axes contribute their full period `2π` as a constant factor.
    pub fn site_weight(&self) -> f64 {
        let a = self.axes.len() as i32;
        self.spacing().powi(a) * (2.0 * PI).powi(DIM as i32 - a)
    }

    /// Total coordinate volume of the torus.
    pub fn total_volume(&self) -> f64 {
        self.site_weight() * self.sites() as f64
    }

    /// Grid index along each active axis; the first active axis varies slowest.
    pub fn grid_index(&self, site: usize) -> Vec<usize> {
        let a = self.axes.len();
        let mut idx = vec![0; a];
        let mut r = site;
        for m in (0..a).rev() {
            idx[m] = r % self.n;
            r /= self.n;
        }
        idx
    }

    /// Coordinates of a site; inactive coordinates are reported as zero.
    pub fn coords(&self, site: usize) -> [f64; DIM] {
        let mut x = [0.0; DIM];
        for (m, i) in self.grid_index(site).into_iter().enumerate() {
            x[self.axes[m]] = i as f64 * self.spacing();
        }
        x
    }

    /// Angular wavenumber of Fourier mode `k` (an integer) along an active axis.
    pub fn wavenumber(&self, k: f64) -> f64 {
        2.0 * PI * k / self.period
    }

    /// `∂/∂x^axis` of a site-major field with `ncomp` components per site.
    pub fn differentiate(&self, data: &[f64], ncomp: usize, axis: usize) -> Vec<f64> {
        assert_eq!(data.len(), ncomp * self.sites(), "field size does not match lattice");
        let Some(m) = self.axes.iter().position(|&a| a == axis) else {
            return vec![0.0; data.len()];
        };
        let n = self.n;
        let stride = n.pow((self.axes.len() - 1 - m) as u32);
        // first site of every line along the axis
        let bases: Vec<usize> = (0..self.sites()).filter(|s| (s / stride).is_multiple_of(n)).collect();
        let lines: Vec<(usize, usize)> = bases.iter().flat_map(|&b| (0..ncomp).map(move |c| (b, c))).collect();
        let mut out = vec![0.0; data.len()];
        let gather = |(base, c): (usize, usize), j: usize| data[(base + j * stride) * ncomp + c];
        let results: Vec<Vec<(usize, f64)>> = match self.scheme {
            Scheme::Spectral => {
                // two real lines share one complex transform
                lines
                    .par_chunks(2)
                    .map(|pair| {
                        let mut buf: Vec<Complex64> = (0..n)
                            .map(|j| Complex64::new(gather(pair[0], j), pair.get(1).map_or(0.0, |&l| gather(l, j))))
                            .collect();
                        self.spectral_derivative_in_place(&mut buf);
                        let mut vals = Vec::with_capacity(2 * n);
                        for (j, z) in buf.iter().enumerate() {
                            let (b0, c0) = pair[0];
                            vals.push(((b0 + j * stride) * ncomp + c0, z.re));
                            if let Some(&(b1, c1)) = pair.get(1) {
                                vals.push(((b1 + j * stride) * ncomp + c1, z.im));
                            }
                        }
                        vals
                    })
                    .collect()
            }
            Scheme::Fd4 => {
                let h = self.spacing();
                lines
                    .par_iter()
                    .map(|&line| {
                        let f: Vec<f64> = (0..n).map(|j| gather(line, j)).collect();
                        (0..n)
                            .map(|j| {
                                let at = |o: isize| f[(j as isize + o).rem_euclid(n as isize) as usize];
                                let d = (-at(2) + 8.0 * at(1) - 8.0 * at(-1) + at(-2)) / (12.0 * h);
                                ((line.0 + j * stride) * ncomp + line.1, d)
                            })
                            .collect()
                    })
                    .collect()
            }
        };
        for vals in results {
            for (i, v) in vals {
                out[i] = v;
            }
        }
        out
    }

    fn spectral_derivative_in_place(&self, buf: &mut [Complex64]) {
        let fft = self.fft.as_ref().expect("spectral lattice carries FFT plans");
        let n = self.n;
        fft.forward.process(buf);
        let scale = 1.0 / n as f64;
        for (j, z) in buf.iter_mut().enumerate() {
            let k = if j < n / 2 {
                j as f64
            } else if j == n / 2 {
                0.0
            } else {
                j as f64 - n as f64
            };
            let w = self.wavenumber(k) * scale;
            *z = Complex64::new(-w * z.im, w * z.re);
        }
        fft.inverse.process(buf);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(lat: &Lattice, f: impl Fn(&[f64; DIM]) -> f64) -> Vec<f64> {
        (0..lat.sites()).map(|s| f(&lat.coords(s))).collect()
    }

    fn max_err(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }

    #[test]
    fn rejects_invalid_lattices() {
        assert!(Lattice::new(&[], 16, 1.0, Scheme::Spectral).is_err());
        assert!(Lattice::new(&[0, 1, 2, 3], 16, 1.0, Scheme::Spectral).is_err());
        assert!(Lattice::new(&[0], 6, 1.0, Scheme::Spectral).is_err());
        assert!(Lattice::new(&[0], 15, 1.0, Scheme::Spectral).is_err());
        assert!(Lattice::new(&[0], 16, 0.0, Scheme::Spectral).is_err());
        assert!(Lattice::new(&[0, 0], 16, 1.0, Scheme::Spectral).is_err());
        assert!(Lattice::new(&[7], 16, 1.0, Scheme::Spectral).is_err());
        assert!(Lattice::new(&[0], 15, 1.0, Scheme::Fd4).is_ok());
    }

    #[test]
    fn site_layout_is_lexicographic() {
        let lat = Lattice::new(&[4, 1], 8, 2.0, Scheme::Spectral).unwrap();
        assert_eq!(lat.active_axes(), &[1, 4]);
        assert_eq!(lat.sites(), 64);
        assert_eq!(lat.grid_index(9), vec![1, 1]);
        let x = lat.coords(10);
        assert_eq!(x[1], 0.25);
        assert_eq!(x[4], 0.5);
    }

    #[test]
    fn constant_has_zero_derivative() {
        let lat = Lattice::new(&[0, 2], 16, 3.0, Scheme::Spectral).unwrap();
        let f = vec![2.5; lat.sites() * 3];
        for axis in 0..DIM {
            assert!(lat.differentiate(&f, 3, axis).iter().all(|v| v.abs() < 1e-13));
        }
    }

    #[test]
    fn spectral_derivative_of_resolvable_mode_is_exact() {
        let l = 2.7;
        let lat = Lattice::new(&[0], 32, l, Scheme::Spectral).unwrap();
        let w = 2.0 * PI / l;
        let f = sample(&lat, |x| (w * x[0]).sin());
        let exact = sample(&lat, |x| w * (w * x[0]).cos());
        assert!(max_err(&lat.differentiate(&f, 1, 0), &exact) < 1e-12);
        assert!(lat.differentiate(&f, 1, 3).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn spectral_derivative_multi_axis_multi_component() {
        let lat = Lattice::new(&[1, 3, 6], 8, 2.0 * PI, Scheme::Spectral).unwrap();
        let ncomp = 3;
        let mut f = vec![0.0; lat.sites() * ncomp];
        let mut exact = f.clone();
        for s in 0..lat.sites() {
            let x = lat.coords(s);
            for c in 0..ncomp {
                let kc = (c + 1) as f64;
                f[s * ncomp + c] = (kc * x[3] + x[1]).sin() * (2.0 * x[6]).cos();
                exact[s * ncomp + c] = kc * (kc * x[3] + x[1]).cos() * (2.0 * x[6]).cos();
            }
        }
        assert!(max_err(&lat.differentiate(&f, ncomp, 3), &exact) < 1e-12);
    }

    #[test]
    fn fd4_observed_order() {
        let l = 2.0 * PI;
        let errs: Vec<f64> = [16, 32, 64]
            .iter()
            .map(|&n| {
                let lat = Lattice::new(&[0], n, l, Scheme::Fd4).unwrap();
                let f = sample(&lat, |x| x[0].sin());
                let exact = sample(&lat, |x| x[0].cos());
                max_err(&lat.differentiate(&f, 1, 0), &exact)
            })
            .collect();
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!((3.8..=4.2).contains(&order), "order {order}");
        }
        let h = l / 32.0;
        assert!(errs[1] <= h.powi(4) / 30.0 * 1.01);
    }
}
