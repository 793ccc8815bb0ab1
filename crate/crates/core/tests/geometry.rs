//! Curvature, covariant derivatives and the gauge vector field on lattice
//! structures.

mod common;

use std::sync::Arc;

use common::{lattice, near_identity, rng, two_axis_perturbation};
use g2flow::exterior::{Form, Matrix7, DIM};
use g2flow::flow::{perturbed_model, ricci_from_torsion};
use g2flow::g2algebra::{full_torsion, model_phi, G2Structure};
use g2flow::lattice::{FormField, Lattice, TensorField};
use g2flow::riemann::{self, covariant_derivative, covariant_derivative_form, deturck_vector, lambda_monitor, Gauge, DETURCK_A};

const D2: usize = DIM * DIM;

fn closed(n: usize, eps: f64) -> G2Structure {
    perturbed_model(&lattice(&[0, 1], n), &two_axis_perturbation(eps)).unwrap()
}

fn rm_index(i: usize, j: usize, k: usize, l: usize) -> usize {
    ((i * DIM + j) * DIM + k) * DIM + l
}

#[test]
fn riemann_tensor_symmetries() {
    let s = closed(32, 1e-2);
    let curv = riemann::structure_curvature(&s);
    let scale = curv.rm.max_abs();
    assert!(scale > 1e-6);
    let mut worst = [0.0f64; 4];
    for x in 0..s.sites() {
        let r = curv.rm.at(x);
        for i in 0..DIM {
            for j in 0..DIM {
                for k in 0..DIM {
                    for l in 0..DIM {
                        let v = r[rm_index(i, j, k, l)];
                        worst[0] = worst[0].max((v + r[rm_index(j, i, k, l)]).abs());
                        worst[1] = worst[1].max((v + r[rm_index(i, j, l, k)]).abs());
                        worst[2] = worst[2].max((v - r[rm_index(k, l, i, j)]).abs());
                        let bianchi = v + r[rm_index(j, k, i, l)] + r[rm_index(k, i, j, l)];
                        worst[3] = worst[3].max(bianchi.abs());
                    }
                }
            }
        }
    }
    for w in worst {
        assert!(w <= 1e-9 * scale, "{worst:?} vs {scale}");
    }
    assert!(curv.ric.symmetry_residual(0, 1, false) <= 1e-9 * curv.ric.max_abs());
}

#[test]
fn contracted_bianchi_identity() {
    let s = closed(32, 1e-2);
    let curv = riemann::structure_curvature(&s);
    let nabla_ric = covariant_derivative(&curv.ric, s.christoffels());
    let dr = curv.scalar.exterior_derivative();
    let mut worst = 0.0f64;
    for x in 0..s.sites() {
        let gi = s.inverse_metric().at(x);
        let nr = nabla_ric.at(x);
        let d = dr.at(x);
        for j in 0..DIM {
            // ∇^i Ric_{ij} = g^{ki} ∇_k Ric_{ij}
            let div: f64 = (0..DIM).flat_map(|k| (0..DIM).map(move |i| (k, i))).map(|(k, i)| gi[k * DIM + i] * nr[(k * DIM + i) * DIM + j]).sum();
            worst = worst.max((div - 0.5 * d.components()[j]).abs());
        }
    }
    let scale = dr.max_abs();
    assert!(worst <= 1e-7 * scale, "{worst:e} vs {scale:e}");
}

#[test]
fn nabla_psi_matches_torsion_formula() {
    let s = closed(32, 1e-2);
    let t = full_torsion(&s, &riemann::nabla_phi(&s));
    let npsi = covariant_derivative_form(s.psi(), s.christoffels());
    let mut worst = 0.0f64;
    for x in 0..s.sites() {
        let phi = s.phi().at(x).expand();
        let tm = t.matrix_at(x);
        let f = |a: usize, b: usize, c: usize| phi[(a * DIM + b) * DIM + c];
        let np = npsi.at(x);
        for m in 0..DIM {
            for i in 0..DIM {
                for j in 0..DIM {
                    for k in 0..DIM {
                        for l in 0..DIM {
                            let rhs = -(tm[(m, i)] * f(j, k, l) - tm[(m, j)] * f(i, k, l) - tm[(m, k)] * f(j, i, l) - tm[(m, l)] * f(j, k, i));
                            worst = worst.max((np[m * DIM * D2 * DIM + rm_index(i, j, k, l)] - rhs).abs());
                        }
                    }
                }
            }
        }
    }
    assert!(worst <= 1e-8 * npsi.max_abs(), "{worst:e}");
}

fn ricci_residual(n: usize) -> f64 {
    let s = closed(n, 1e-2);
    let curv = riemann::structure_curvature(&s);
    ricci_from_torsion(&s).axpy(-1.0, &curv.ric).max_abs() / curv.ric.max_abs()
}

fn scalar_residual(n: usize) -> f64 {
    let s = closed(n, 1e-2);
    let curv = riemann::structure_curvature(&s);
    let t = full_torsion(&s, &riemann::nabla_phi(&s));
    let mut worst = 0.0f64;
    for x in 0..s.sites() {
        let gi = s.inverse_metric().matrix_at(x);
        let tm = t.matrix_at(x);
        let t2 = (gi * tm * gi).component_mul(&tm).sum();
        worst = worst.max((curv.scalar.data()[x] + t2).abs());
    }
    worst / curv.scalar.max_abs()
}

#[test]
fn ricci_formula_for_closed_structures() {
    let (r16, r32) = (ricci_residual(16), ricci_residual(32));
    println!("Ricci formula residual: n=16 {r16:e}, n=32 {r32:e}");
    assert!(r32 <= 1e-7);
    assert!(r32 < r16);
}

#[test]
fn scalar_curvature_is_minus_torsion_norm() {
    let (r16, r32) = (scalar_residual(16), scalar_residual(32));
    println!("R + |T|² residual: n=16 {r16:e}, n=32 {r32:e}");
    assert!(r32 <= 1e-6);
    assert!(r32 < r16);
}

#[test]
fn constant_coefficient_metrics_have_no_christoffels() {
    let lat = lattice(&[0, 1, 2], 8);
    let a = near_identity(&mut rng(4), 0.2);
    let s = G2Structure::new(FormField::constant(&lat, &model_phi().pullback(&a))).unwrap();
    assert!(s.christoffels().max_abs() < 1e-14);
    assert!((s.metric().matrix_at(0) - a.transpose() * a).abs().max() < 1e-12);
}

fn conformal(lat: &Arc<Lattice>, u: impl Fn(&[f64; DIM]) -> f64 + Sync) -> G2Structure {
    G2Structure::new(FormField::from_fn(lat, 3, |x| model_phi() * (3.0 * u(x)).exp())).unwrap()
}

#[test]
fn gauge_vector_vanishes_at_the_reference_and_for_isometric_forms() {
    let lat = lattice(&[0, 1], 16);
    let reference = G2Structure::model(&lat);
    for gauge in [Gauge::Harmonic, Gauge::Combined { a: DETURCK_A }] {
        assert_eq!(deturck_vector(&reference, &reference, gauge).max_abs(), 0.0);
    }
    // rotate φ₀ in the (e₁,e₂) plane by a varying angle: g stays euclidean
    let rotated = FormField::from_fn(&lat, 3, |x| {
        let th = 0.3 * x[0].sin() + 0.2 * x[1].cos();
        let mut r = Matrix7::identity();
        r[(0, 0)] = th.cos();
        r[(0, 1)] = -th.sin();
        r[(1, 0)] = th.sin();
        r[(1, 1)] = th.cos();
        model_phi().pullback(&r)
    });
    let s = G2Structure::new(rotated).unwrap();
    assert!((s.phi() - reference.phi()).max_abs() > 0.1);
    for gauge in [Gauge::Harmonic, Gauge::Combined { a: DETURCK_A }] {
        assert!(deturck_vector(&s, &reference, gauge).max_abs() < 1e-12);
    }
}

#[test]
fn gauge_vector_of_a_conformal_metric() {
    // g = e^{2u}δ: S^i_{jk} = δ^i_j u_k + δ^i_k u_j − δ_{jk} u_i, so
    // g^{pq}S^i_{pq} = −5e^{−2u}u_i and g^{kj}S^i_{ik} = 7e^{−2u}u_j
    let lat = lattice(&[0, 1], 32);
    let u = |x: &[f64; DIM]| 0.05 * (x[0].sin() + 0.7 * (x[1] - 0.4).cos());
    let du = |x: &[f64; DIM]| {
        let mut d = [0.0; DIM];
        d[0] = 0.05 * x[0].cos();
        d[1] = -0.035 * (x[1] - 0.4).sin();
        d
    };
    let s = conformal(&lat, u);
    let reference = G2Structure::model(&lat);
    for (gauge, coeff) in [(Gauge::Harmonic, -5.0), (Gauge::Combined { a: DETURCK_A }, (25.0 - 48.0 * DETURCK_A) / 7.0)] {
        let v = deturck_vector(&s, &reference, gauge);
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for x in 0..lat.sites() {
            let c = lat.coords(x);
            let d = du(&c);
            let w = (-2.0 * u(&c)).exp();
            for i in 0..DIM {
                let expect = coeff * w * d[i];
                worst = worst.max((v.at(x)[i] - expect).abs());
                scale = scale.max(expect.abs());
            }
        }
        assert!(worst < 1e-10 * scale, "{gauge:?}: {worst:e} vs {scale:e}");
    }
}

#[test]
fn lambda_monitor_is_linear_at_leading_order() {
    let flat = G2Structure::model(&lattice(&[0, 1], 16));
    assert_eq!(lambda_monitor(&flat).max_abs(), 0.0);
    let big = lambda_monitor(&closed(16, 2e-4)).max_abs();
    let small = lambda_monitor(&closed(16, 1e-4)).max_abs();
    let ratio = big / small;
    assert!((1.8..=2.2).contains(&ratio), "ratio {ratio}");
}

#[test]
fn covariant_derivative_of_a_constant_scalar_vanishes() {
    let s = closed(16, 1e-2);
    let c = FormField::constant(s.lattice(), &Form::from_components(0, &[2.5]));
    let as_tensor = TensorField::from_data(s.lattice(), &[], c.data().to_vec());
    assert!(covariant_derivative(&as_tensor, s.christoffels()).max_abs() < 1e-15);
}
