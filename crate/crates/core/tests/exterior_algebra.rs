//! Pointwise exterior algebra against brute-force dense oracles.

mod common;

use common::{near_identity, random_form, rng};
use g2flow::exterior::{hodge_star, multi_index, n_components, Form, Matrix7, DIM};
use g2flow::g2algebra::{model_phi, model_psi};
use proptest::prelude::*;

/// All permutations of `0..n` with their signs.
fn permutations(n: usize) -> Vec<(Vec<usize>, f64)> {
    if n == 0 {
        return vec![(vec![], 1.0)];
    }
    let mut out = Vec::new();
    for (p, s) in permutations(n - 1) {
        // insert n-1 at every position; moving it left past m entries costs (-1)^m
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            let moved = p.len() - pos;
            out.push((q, if moved % 2 == 0 { s } else { -s }));
        }
    }
    out
}

/// `(α∧β)_{1…7}` as `(1/(k! l!)) Σ_σ sgn σ α_{σ(1…k)} β_{σ(k+1…7)}`.
fn top_coefficient_brute(a: &Form, b: &Form) -> f64 {
    let (k, l) = (a.degree(), b.degree());
    assert_eq!(k + l, DIM);
    let fact = |n: usize| (1..=n).product::<usize>() as f64;
    let mut acc = 0.0;
    for (p, s) in permutations(DIM) {
        acc += s * a.get(&p[..k]) * b.get(&p[k..]);
    }
    acc / (fact(k) * fact(l))
}

#[test]
fn model_forms_wedge_to_seven_volume_by_brute_force() {
    assert_eq!(permutations(DIM).len(), 5040);
    let brute = top_coefficient_brute(&model_phi(), &model_psi());
    assert!((brute - 7.0).abs() < 1e-12);
    assert_eq!(model_phi().wedge(&model_psi()).components(), &[7.0]);
}

#[test]
fn basis_wedge_and_contraction() {
    let e123 = Form::basis(&[0]).wedge(&Form::basis(&[1, 2]));
    assert_eq!(e123.get(&[0, 1, 2]), 1.0);
    assert_eq!(Form::basis(&[0, 1, 2]).interior_axis(0), Form::basis(&[1, 2]));
    // reversed order picks up the permutation sign
    assert_eq!(Form::basis(&[2, 1]).get(&[1, 2]), -1.0);
}

#[test]
fn star_of_one_is_volume() {
    let mut r = rng(5);
    let a = near_identity(&mut r, 0.2);
    let g = a.transpose() * a;
    let g_inv = g.try_inverse().unwrap();
    let vol = g.determinant().sqrt();
    let one = Form::from_components(0, &[1.0]);
    let top = hodge_star(&one, &g_inv, vol);
    assert!((top.components()[0] - vol).abs() < 1e-13);
}

fn random_metric(seed: u64) -> (Matrix7, Matrix7, f64) {
    let mut r = rng(seed);
    let a = near_identity(&mut r, 0.15);
    let g = a.transpose() * a;
    (g, g.try_inverse().unwrap(), g.determinant().sqrt())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn odd_forms_square_to_zero(seed in any::<u64>(), k in prop::sample::select(vec![1usize, 3])) {
        let a = random_form(&mut rng(seed), k);
        prop_assert!(a.wedge(&a).max_abs() < 1e-14);
    }

    #[test]
    fn wedge_is_graded_commutative(seed in any::<u64>(), k in 0usize..=7, l in 0usize..=7) {
        prop_assume!(k + l <= DIM);
        let mut r = rng(seed);
        let (a, b) = (random_form(&mut r, k), random_form(&mut r, l));
        let sign = if (k * l) % 2 == 0 { 1.0 } else { -1.0 };
        prop_assert!((a.wedge(&b) - b.wedge(&a) * sign).max_abs() < 1e-13);
    }

    #[test]
    fn wedge_to_top_degree_matches_permutation_sum(seed in any::<u64>(), k in 0usize..=7) {
        let mut r = rng(seed);
        let (a, b) = (random_form(&mut r, k), random_form(&mut r, DIM - k));
        let fast = a.wedge(&b).components()[0];
        prop_assert!((fast - top_coefficient_brute(&a, &b)).abs() < 1e-12);
    }

    #[test]
    fn interior_twice_vanishes(seed in any::<u64>(), k in 2usize..=7) {
        let mut r = rng(seed);
        let a = random_form(&mut r, k);
        let x = random_form(&mut r, 1);
        let mut v = [0.0; DIM];
        v.copy_from_slice(x.components());
        prop_assert!(a.interior(&v).interior(&v).max_abs() < 1e-14);
    }

    #[test]
    fn expansion_is_antisymmetric(seed in any::<u64>(), k in 2usize..=4) {
        let a = random_form(&mut rng(seed), k);
        let dense = a.expand();
        prop_assert_eq!(Form::compress(k, &dense), a);
        for c in 0..n_components(k) {
            let idx = multi_index(k, c);
            let mut swapped = idx.clone();
            swapped.swap(0, 1);
            let flat = |ix: &[usize]| ix.iter().fold(0, |acc, &v| acc * DIM + v);
            prop_assert_eq!(dense[flat(&swapped)], -dense[flat(&idx)]);
        }
    }

    #[test]
    fn star_is_an_involution(seed in any::<u64>(), k in 0usize..=7) {
        let (_, g_inv, vol) = random_metric(seed);
        let a = random_form(&mut rng(seed ^ 1), k);
        let twice = hodge_star(&hodge_star(&a, &g_inv, vol), &g_inv, vol);
        prop_assert!((twice - a).max_abs() < 1e-11 * (1.0 + a.max_abs()));
    }

    #[test]
    fn wedge_with_star_is_inner_product(seed in any::<u64>(), k in 0usize..=7) {
        let (_, g_inv, vol) = random_metric(seed);
        let mut r = rng(seed ^ 2);
        let (a, b) = (random_form(&mut r, k), random_form(&mut r, k));
        let lam = g2flow::exterior::ExteriorPower::new(&g_inv, k);
        let lhs = a.wedge(&hodge_star(&b, &g_inv, vol)).components()[0];
        prop_assert!((lhs - a.dot(&b, &lam) * vol).abs() < 1e-11 * (1.0 + lhs.abs()));
    }

    #[test]
    fn pullback_commutes_with_wedge(seed in any::<u64>(), k in 0usize..=4, l in 0usize..=3) {
        let mut r = rng(seed);
        let m = near_identity(&mut r, 0.5);
        let (a, b) = (random_form(&mut r, k), random_form(&mut r, l));
        let lhs = a.wedge(&b).pullback(&m);
        let rhs = a.pullback(&m).wedge(&b.pullback(&m));
        prop_assert!((lhs - rhs).max_abs() < 1e-12);
    }
}
