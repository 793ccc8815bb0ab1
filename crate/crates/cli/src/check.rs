//! Randomized identity suite behind the `check` subcommand.

use std::f64::consts::PI;
use std::time::Instant;

use g2flow::exterior::{hodge_star, n_components, Form, Matrix7, DIM};
use g2flow::flow::{perturbed_model, ModePerturbation};
use g2flow::g2algebra::*;
use g2flow::lattice::{FormField, Lattice, Scheme};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Deliberate corruptions of the model forms, used to show the suite
/// catches them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mutation {
    /// Flip the sign of the first term of `ψ₀`.
    Psi0Sign,
    /// Flip the sign of the first term of `φ₀`.
    Phi0Sign,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub max_error: f64,
    pub tolerance: f64,
    pub cases: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub seed: u64,
    pub samples: usize,
    pub mutation: Option<Mutation>,
    pub passed: bool,
    pub first_failure: Option<String>,
    pub checks: Vec<CheckResult>,
    pub elapsed_seconds: f64,
}

impl CheckReport {
    /// The pass/fail verdict of every check, in order.
    pub fn verdicts(&self) -> Vec<(String, bool)> {
        self.checks.iter().map(|c| (c.name.clone(), c.passed)).collect()
    }
}

/// Accumulates the worst error of one named identity.
struct Tally {
    name: &'static str,
    tolerance: f64,
    worst: f64,
    cases: usize,
}

impl Tally {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Tally { name, tolerance, worst: 0.0, cases: 0 }
    }

    fn add(&mut self, err: f64) {
        self.cases += 1;
        // NaN counts as a failure
        self.worst = if err.is_nan() || self.worst.is_nan() { f64::NAN } else { self.worst.max(err) };
    }

    fn finish(self) -> CheckResult {
        CheckResult {
            name: self.name.into(),
            passed: self.worst <= self.tolerance,
            max_error: self.worst,
            tolerance: self.tolerance,
            cases: self.cases,
        }
    }
}

fn model_forms(mutation: Option<Mutation>) -> ModelForms {
    let mut m = ModelForms::standard();
    match mutation {
        Some(Mutation::Psi0Sign) => {
            let (s, axes) = PSI0_TERMS[0];
            m.psi0 += Form::basis(&axes) * (-2.0 * s);
        }
        Some(Mutation::Phi0Sign) => {
            let (s, axes) = PHI0_TERMS[0];
            m.phi0 += Form::basis(&axes) * (-2.0 * s);
        }
        None => {}
    }
    m
}

fn random_form(rng: &mut ChaCha8Rng, k: usize) -> Form {
    let c: Vec<f64> = (0..n_components(k)).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Form::from_components(k, &c)
}

fn near_identity(rng: &mut ChaCha8Rng, scale: f64) -> Matrix7 {
    Matrix7::identity() + Matrix7::from_fn(|_, _| scale * rng.gen_range(-1.0..1.0))
}

fn random_symmetric(rng: &mut ChaCha8Rng) -> Matrix7 {
    let m = Matrix7::from_fn(|_, _| rng.gen_range(-1.0..1.0));
    (m + m.transpose()) * 0.5
}

fn max_abs(m: &Matrix7) -> f64 {
    m.abs().max()
}

fn trace_of(op: &[Vec<f64>]) -> f64 {
    (0..op.len()).map(|i| op[i][i]).sum()
}

/// Runs every identity at `samples` random positive points plus a set of
/// lattice-level checks, all driven by `seed`.
pub fn run_suite(seed: u64, samples: usize, mutation: Option<Mutation>) -> CheckReport {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let models = model_forms(mutation);
    let mut out = Vec::new();

    let mut star_model = Tally::new("star_phi0_is_psi0", 1e-10);
    star_model.add((hodge_star(&models.phi0, &Matrix7::identity(), 1.0) - models.psi0).max_abs());
    out.push(star_model.finish());

    let mut metric_model = Tally::new("metric_of_phi0_is_identity", 1e-10);
    metric_model.add(match metric_from_phi(&models.phi0) {
        Ok((g, vol)) => max_abs(&(g - Matrix7::identity())).max((vol - 1.0).abs()),
        Err(_) => f64::INFINITY,
    });
    out.push(metric_model.finish());

    let mut i_of_g = Tally::new("i_phi_of_g_is_3_phi", 1e-10);
    let mut j_of_phi = Tally::new("j_phi_of_phi_is_6_g", 1e-10);
    let mut j_of_i = Tally::new("j_phi_of_i_phi_h", 1e-10);
    let mut i_inverse = Tally::new("i_phi_inverse", 1e-10);
    let mut traces2 = Tally::new("projector_traces_7_14", 1e-10);
    let mut traces3 = Tally::new("projector_traces_1_7_27", 1e-10);
    let mut norm_identity = Tally::new("norm_of_i_phi_h", 1e-10);
    let mut equivariance = Tally::new("metric_equivariance", 1e-10);
    let mut normalization = Tally::new("phi_psi_normalization", 1e-10);
    let mut split2 = Tally::new("two_form_decomposition", 1e-10);
    let mut split3 = Tally::new("three_form_decomposition", 1e-10);
    let mut involution = Tally::new("star_involution", 1e-10);
    let mut graded = Tally::new("wedge_graded_commutativity", 1e-12);

    for _ in 0..samples {
        let a = near_identity(&mut rng, 0.15);
        let bump = random_form(&mut rng, 3) * 0.05;
        let pulled = models.phi0.pullback(&a);
        let p = match G2Point::new(pulled + bump) {
            Ok(p) => p,
            Err(_) => {
                i_of_g.add(f64::INFINITY);
                continue;
            }
        };
        let g = *p.metric();
        let h = random_symmetric(&mut rng);

        i_of_g.add((i_phi(&g, &p) - *p.phi() * 3.0).max_abs());
        j_of_phi.add(max_abs(&(j_phi(p.phi(), &p) - g * 6.0)));
        let ih = i_phi(&h, &p);
        j_of_i.add(max_abs(&(j_phi(&ih, &p) - (h * 4.0 + g * (2.0 * p.trace(&h))))));
        i_inverse.add(max_abs(&(i_phi_inverse(&ih, &p) - h)));

        let p7 = operator_matrix(2, 2, |b| project_2form(b, &p).0);
        let p14 = operator_matrix(2, 2, |b| project_2form(b, &p).1);
        traces2.add((trace_of(&p7) - 7.0).abs().max((trace_of(&p14) - 14.0).abs()));
        let t1 = trace_of(&operator_matrix(3, 3, |c| project_3form(c, &p).one));
        let t7 = trace_of(&operator_matrix(3, 3, |c| project_3form(c, &p).seven));
        let t27 = trace_of(&operator_matrix(3, 3, |c| project_3form(c, &p).twenty_seven));
        traces3.add((t1 - 1.0).abs().max((t7 - 7.0).abs()).max((t27 - 27.0).abs()));

        let mixed = p.inverse_metric() * h;
        let rhs = p.trace(&h).powi(2) + 2.0 * (mixed * mixed).trace();
        norm_identity.add((p.norm2(&ih) - rhs).abs());

        match metric_from_phi(&pulled) {
            Ok((ga, vol)) => equivariance.add(max_abs(&(ga - a.transpose() * a)).max((vol - a.determinant()).abs())),
            Err(_) => equivariance.add(f64::INFINITY),
        }

        normalization.add(
            (p.norm2(p.phi()) - 7.0)
                .abs()
                .max((p.norm2(p.psi()) - 7.0).abs())
                .max((p.phi().wedge(p.psi()).components()[0] - 7.0 * p.vol()).abs()),
        );

        let beta = random_form(&mut rng, 2);
        let (b7, b14) = project_2form(&beta, &p);
        split2.add(
            (b7 + b14 - beta)
                .max_abs()
                .max(p.inner(&b7, &b14).abs())
                .max((b7.wedge(p.phi()) - p.star(&b7) * 2.0).max_abs())
                .max((b14.wedge(p.phi()) + p.star(&b14)).max_abs()),
        );

        let gamma = random_form(&mut rng, 3);
        let parts = project_3form(&gamma, &p);
        split3.add(
            (parts.one + parts.seven + parts.twenty_seven - gamma)
                .max_abs()
                .max(p.inner(&parts.one, &parts.seven).abs())
                .max(p.inner(&parts.one, &parts.twenty_seven).abs())
                .max(p.inner(&parts.seven, &parts.twenty_seven).abs())
                .max(parts.twenty_seven.wedge(p.phi()).max_abs())
                .max(parts.twenty_seven.wedge(p.psi()).max_abs()),
        );

        let k = rng.gen_range(0..=DIM);
        let alpha = random_form(&mut rng, k);
        involution.add((p.star(&p.star(&alpha)) - alpha).max_abs());

        let (k, l) = (rng.gen_range(0..=3), rng.gen_range(0..=4));
        let (x, y) = (random_form(&mut rng, k), random_form(&mut rng, l));
        let sign = if (k * l) % 2 == 0 { 1.0 } else { -1.0 };
        graded.add((x.wedge(&y) - y.wedge(&x) * sign).max_abs());
    }
    out.extend(
        [i_of_g, j_of_phi, j_of_i, i_inverse, traces2, traces3, norm_identity, equivariance, normalization, split2, split3, involution, graded]
            .into_iter()
            .map(Tally::finish),
    );
    out.extend(lattice_checks(&mut rng));

    let first_failure = out.iter().find(|c| !c.passed).map(|c| c.name.clone());
    CheckReport {
        seed,
        samples,
        mutation,
        passed: first_failure.is_none(),
        first_failure,
        checks: out,
        elapsed_seconds: start.elapsed().as_secs_f64(),
    }
}

/// A smooth random `k`-form field built from low Fourier modes.
fn random_field(rng: &mut ChaCha8Rng, lattice: &std::sync::Arc<Lattice>, k: usize) -> FormField {
    let terms: Vec<(Form, [i64; DIM], f64)> = (0..3)
        .map(|_| {
            let mut mode = [0i64; DIM];
            for &a in lattice.active_axes() {
                mode[a] = rng.gen_range(-2..=2);
            }
            (random_form(rng, k), mode, rng.gen_range(0.0..2.0 * PI))
        })
        .collect();
    let w = 2.0 * PI / lattice.period();
    FormField::from_fn(lattice, k, |x| {
        let mut f = Form::zero(k);
        for (c, mode, phase) in &terms {
            let arg: f64 = (0..DIM).map(|i| mode[i] as f64 * x[i]).sum::<f64>() * w + phase;
            f += *c * arg.cos();
        }
        f
    })
}

fn lattice_checks(rng: &mut ChaCha8Rng) -> Vec<CheckResult> {
    let lattice = Lattice::new(&[0, 3], 8, 2.0 * PI, Scheme::Spectral).expect("valid lattice");
    let flat = G2Structure::model(&lattice);
    let rel = |err: f64, scale: f64| if scale > 0.0 { err / scale } else { err };

    let mut dd = Tally::new("d_squared_vanishes", 1e-10);
    for k in 0..=5 {
        let a = random_field(rng, &lattice, k);
        dd.add(rel(a.exterior_derivative().exterior_derivative().max_abs(), a.max_abs()));
    }

    let mut weitzenbock = Tally::new("flat_weitzenbock", 1e-9);
    for k in 0..=7 {
        let a = random_field(rng, &lattice, k);
        let mut rough = FormField::zeros(&lattice, k);
        for &ax in lattice.active_axes() {
            rough = &rough - &a.partial(ax).partial(ax);
        }
        weitzenbock.add(rel((&flat.hodge_laplacian(&a) - &rough).max_abs(), rough.max_abs()));
    }

    let mut adjoint = Tally::new("codifferential_adjointness", 1e-9);
    let mut mode = [0i64; DIM];
    mode[0] = 1;
    mode[3] = rng.gen_range(-1..=1);
    let eps = rng.gen_range(0.005..0.02);
    let terms = [ModePerturbation { mode, component: [2, 3], amplitude: eps, phase: rng.gen_range(0.0..2.0 * PI) }];
    match perturbed_model(&lattice, &terms) {
        Ok(s) => {
            let alpha = random_field(rng, &lattice, 2);
            let gamma = random_field(rng, &lattice, 3);
            let da = alpha.exterior_derivative();
            let lhs = s.integrate(&s.inner(&da, &gamma));
            let rhs = s.integrate(&s.inner(&alpha, &s.codifferential(&gamma)));
            // Cauchy–Schwarz bound on both sides
            let scale = (s.integrate(&s.inner(&da, &da)) * s.integrate(&s.inner(&gamma, &gamma))).sqrt();
            adjoint.add(rel((lhs - rhs).abs(), scale));
        }
        Err(_) => adjoint.add(f64::INFINITY),
    }

    let mut torsion_free = Tally::new("model_is_torsion_free", 1e-14);
    let td = extract_torsion_forms(&flat);
    for f in [&td.tau0, &td.tau1, &td.tau2, &td.tau3] {
        torsion_free.add(f.max_abs());
    }
    torsion_free.add(td.t.max_abs());

    vec![dd.finish(), weitzenbock.finish(), adjoint.finish(), torsion_free.finish()]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suite_passes() {
        let r = run_suite(7, 20, None);
        assert!(r.passed, "{r:#?}");
        assert!(r.checks.iter().all(|c| c.cases > 0));
    }

    #[test]
    fn psi0_mutation_is_caught() {
        let r = run_suite(7, 5, Some(Mutation::Psi0Sign));
        assert_eq!(r.first_failure.as_deref(), Some("star_phi0_is_psi0"));
    }

    #[test]
    fn phi0_mutation_breaks_the_model_metric() {
        let r = run_suite(7, 5, Some(Mutation::Phi0Sign));
        assert!(!r.passed);
        let failed: Vec<&str> = r.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        assert!(failed.contains(&"metric_of_phi0_is_identity"), "{failed:?}");
    }
}
