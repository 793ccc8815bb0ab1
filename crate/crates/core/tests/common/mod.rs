#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use g2flow::exterior::{n_components, Form, Matrix7, DIM};
use g2flow::flow::ModePerturbation;
use g2flow::lattice::{FormField, Lattice, Scheme};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn lattice(axes: &[usize], n: usize) -> Arc<Lattice> {
    Lattice::new(axes, n, 2.0 * PI, Scheme::Spectral).unwrap()
}

pub fn random_form(rng: &mut ChaCha8Rng, degree: usize) -> Form {
    let comps: Vec<f64> = (0..n_components(degree)).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Form::from_components(degree, &comps)
}

pub fn random_symmetric(rng: &mut ChaCha8Rng) -> Matrix7 {
    let a = Matrix7::from_fn(|_, _| rng.gen_range(-1.0..1.0));
    (a + a.transpose()) * 0.5
}

/// `I + scale·noise`, which has positive determinant for small `scale`.
pub fn near_identity(rng: &mut ChaCha8Rng, scale: f64) -> Matrix7 {
    Matrix7::identity() + Matrix7::from_fn(|_, _| rng.gen_range(-scale..scale))
}

/// A random resolvable trigonometric polynomial of `degree`-forms: every
/// component is a sum of `terms` Fourier modes with `|k|∞ ≤ kmax`.
pub fn random_field(rng: &mut ChaCha8Rng, lat: &Arc<Lattice>, degree: usize, terms: usize, kmax: i64) -> FormField {
    let l = lat.period();
    let mut modes = Vec::new();
    for _ in 0..terms {
        let mut k = [0i64; DIM];
        for &a in lat.active_axes() {
            k[a] = rng.gen_range(-kmax..=kmax);
        }
        let coeffs = random_form(rng, degree);
        let phase: f64 = rng.gen_range(0.0..2.0 * PI);
        modes.push((k, coeffs, phase));
    }
    FormField::from_fn(lat, degree, move |x| {
        let mut out = Form::zero(degree);
        for (k, c, phase) in &modes {
            let arg: f64 = (0..DIM).map(|a| k[a] as f64 * x[a]).sum::<f64>() * 2.0 * PI / l + phase;
            out += *c * arg.cos();
        }
        out
    })
}

/// Random potential terms on the active axes with `|k|∞ ≤ kmax`.
pub fn random_perturbation(rng: &mut ChaCha8Rng, lat: &Lattice, terms: usize, kmax: i64, eps: f64) -> Vec<ModePerturbation> {
    (0..terms)
        .map(|_| {
            let mut mode = [0i64; DIM];
            while mode.iter().all(|&k| k == 0) {
                for &a in lat.active_axes() {
                    mode[a] = rng.gen_range(-kmax..=kmax);
                }
            }
            let i = rng.gen_range(1..=DIM);
            let mut j = rng.gen_range(1..=DIM);
            while j == i {
                j = rng.gen_range(1..=DIM);
            }
            ModePerturbation { mode, component: [i, j], amplitude: eps * rng.gen_range(0.5..1.0), phase: rng.gen_range(0.0..2.0 * PI) }
        })
        .collect()
}

/// A fixed multi-mode potential on the first two active axes.
pub fn two_axis_perturbation(eps: f64) -> Vec<ModePerturbation> {
    let m = |k: [i64; 2]| {
        let mut mode = [0i64; DIM];
        mode[0] = k[0];
        mode[1] = k[1];
        mode
    };
    vec![
        ModePerturbation { mode: m([1, 0]), component: [2, 3], amplitude: eps, phase: 0.0 },
        ModePerturbation { mode: m([0, 1]), component: [4, 6], amplitude: 0.7 * eps, phase: 0.3 },
        ModePerturbation { mode: m([1, -1]), component: [1, 5], amplitude: 0.5 * eps, phase: 1.1 },
        ModePerturbation { mode: m([2, 1]), component: [3, 7], amplitude: 0.4 * eps, phase: 0.2 },
    ]
}

pub fn rel(err: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        err / scale
    } else {
        err
    }
}
