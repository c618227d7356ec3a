use frechet_core::algebra::{
    apply_commutant, apply_commutant_power, apply_left, apply_right, BallSpec, MatrixElement,
    ScalarField,
};
use frechet_core::frechet::{frechet, monomial_differential, relative_difference, Algorithm};
use frechet_core::identities::{commutant_power_binomial, run_identity_suite};
use frechet_core::oracle::{
    block_triangular_differential, polynomial_differential, resolvent_differential,
};
use frechet_core::series::{
    choose_truncation, derivative_series, eval_matrix, eval_scalar, BoundKind, Builtin,
    PowerSeries, TruncationPolicy,
};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn field_of(complex: bool) -> ScalarField {
    if complex {
        ScalarField::Complex
    } else {
        ScalarField::Real
    }
}

fn random(dim: usize, field: ScalarField, rng: &mut ChaCha8Rng) -> MatrixElement {
    MatrixElement::random(dim, field, rng).unwrap()
}

fn with_norm(dim: usize, field: ScalarField, norm: f64, rng: &mut ChaCha8Rng) -> MatrixElement {
    let m = random(dim, field, rng);
    m.scale(norm / m.norm())
}

fn builtin() -> impl Strategy<Value = Builtin> {
    prop::sample::select(Builtin::ALL.to_vec())
}

fn exact_value(b: Builtin, s: f64) -> f64 {
    match b {
        Builtin::Exp => s.exp(),
        Builtin::Sin => s.sin(),
        Builtin::Cos => s.cos(),
        Builtin::Log1p => s.ln_1p(),
        Builtin::Geometric => 1.0 / (1.0 - s),
        Builtin::Atan => s.atan(),
    }
}

proptest! {
    #[test]
    fn operator_norm_bounds(dim in 1usize..7, complex in any::<bool>(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let field = field_of(complex);
        let (t, h) = (random(dim, field, &mut rng), random(dim, field, &mut rng));
        let bound = t.norm() * h.norm() * (1.0 + 1e-14);
        prop_assert!(apply_right(&t, &h).unwrap().norm() <= bound);
        prop_assert!(apply_left(&t, &h).unwrap().norm() <= bound);
        prop_assert!(apply_commutant(&t, &h).unwrap().norm() <= 2.0 * bound);
    }

    #[test]
    fn left_and_right_multiplication_commute(dim in 1usize..7, complex in any::<bool>(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let field = field_of(complex);
        let (t1, t2, h) = (random(dim, field, &mut rng), random(dim, field, &mut rng), random(dim, field, &mut rng));
        let a = apply_right(&t1, &apply_left(&t2, &h).unwrap()).unwrap();
        let b = apply_left(&t2, &apply_right(&t1, &h).unwrap()).unwrap();
        // T1·(h·T2) and (T1·h)·T2 round differently, so compare to rounding level
        prop_assert!(relative_difference(&a, &b) <= 1e-14);
    }

    #[test]
    fn commutant_power_matches_binomial_sum(p in 0usize..9, dim in 1usize..7, complex in any::<bool>(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let field = field_of(complex);
        let (t, h) = (random(dim, field, &mut rng), random(dim, field, &mut rng));
        let (nested, binomial) = commutant_power_binomial(&t, &h, p).unwrap();
        prop_assert_eq!(&nested, &apply_commutant_power(&t, &h, p).unwrap());
        let scale = t.norm().powi(p as i32) * h.norm() * 2f64.powi(p as i32);
        prop_assert!((nested.sub(&binomial).unwrap()).norm() <= 1e-13 * scale.max(nested.norm()));
    }

    #[test]
    fn apply_operations_are_linear(dim in 1usize..6, a in -3.0f64..3.0, b in -3.0f64..3.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let field = ScalarField::Real;
        let (t, h1, h2) = (random(dim, field, &mut rng), random(dim, field, &mut rng), random(dim, field, &mut rng));
        let mix = h1.scale(a).add(&h2.scale(b)).unwrap();
        for op in [apply_left, apply_right, apply_commutant] {
            let lhs = op(&t, &mix).unwrap();
            let rhs = op(&t, &h1).unwrap().scale(a).add(&op(&t, &h2).unwrap().scale(b)).unwrap();
            let size = (a.abs() + b.abs()) * t.norm() * (h1.norm() + h2.norm());
            prop_assert!(lhs.sub(&rhs).unwrap().norm() <= 1e-14 * size.max(1e-300));
        }
    }

    #[test]
    fn norm_is_submultiplicative_and_definite(dim in 1usize..7, complex in any::<bool>(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let field = field_of(complex);
        let (a, b) = (random(dim, field, &mut rng), random(dim, field, &mut rng));
        prop_assert!(a.mul(&b).unwrap().norm() <= a.norm() * b.norm() * (1.0 + 1e-14));
        prop_assert!(a.norm() > 0.0);
        prop_assert_eq!(MatrixElement::zeros(dim, field).unwrap().norm(), 0.0);
    }

    #[test]
    fn mixed_fields_rejected(dim in 1usize..5, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random(dim, ScalarField::Real, &mut rng);
        let b = random(dim, ScalarField::Complex, &mut rng);
        prop_assert!(a.add(&b).is_err());
        prop_assert!(a.mul(&b).is_err());
        prop_assert!(apply_commutant(&a, &b).is_err());
    }

    #[test]
    fn ball_membership_is_strict(radius in 0.01f64..10.0, dim in 1usize..5, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ball = BallSpec::new(radius).unwrap();
        let m = random(dim, ScalarField::Real, &mut rng);
        prop_assert_eq!(ball.contains(&m), m.norm() < radius);
        prop_assert!(!ball.contains(&m.scale(radius / m.norm() * 1.000001)));
    }

    #[test]
    fn tail_bound_dominates_scalar_residual(b in builtin(), fraction in 0.0f64..0.95, tol_exp in 4i32..13) {
        let g = PowerSeries::builtin(b);
        let s = if g.radius().is_finite() { fraction * g.radius() } else { 8.0 * fraction };
        let policy = TruncationPolicy::new(10f64.powi(-tol_exp), 10_000).unwrap();
        let cut = choose_truncation(&g, s, &policy).unwrap();
        prop_assert!(!cut.cap_hit);
        let (mut partial, mut magnitude, mut power) = (0.0, 0.0, 1.0);
        for n in 0..=cut.index {
            let a = g.coefficient(n).re;
            partial += a * power;
            magnitude += (a * power).abs();
            power *= s;
        }
        let residual = (exact_value(b, s) - partial).abs();
        let rounding = 8.0 * f64::EPSILON * (magnitude + exact_value(b, s).abs());
        prop_assert!(residual <= cut.tail + rounding, "N = {}, tail = {:e}, residual = {:e}", cut.index, cut.tail, residual);
        prop_assert!(cut.tail < policy.tolerance);
    }

    #[test]
    fn diagonal_evaluation_is_entrywise(b in builtin(), dim in 1usize..6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = PowerSeries::builtin(b);
        let reach = 0.9 * g.radius().min(2.0);
        let diag: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0) * reach / (dim as f64).sqrt()).collect();
        let mut entries = vec![0.0; dim * dim];
        for (i, d) in diag.iter().enumerate() {
            entries[i * dim + i] = *d;
        }
        let t = MatrixElement::from_real(dim, &entries).unwrap();
        // both sides truncated to below machine precision
        let policy = TruncationPolicy::default().with_tolerance(1e-17);
        let (value, _) = eval_matrix(&g, &t, &policy).unwrap();
        for (i, d) in diag.iter().enumerate() {
            let z = eval_scalar(&g, Complex64::new(*d, 0.0), &policy).unwrap();
            prop_assert!((value.entry(i, i) - z).norm() <= 1e-12 * z.norm());
        }
    }

    #[test]
    fn nilpotent_evaluation_stops_changing(b in builtin(), k in 1usize..6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = PowerSeries::builtin(b);
        let mut entries = vec![0.0; k * k];
        for i in 0..k {
            for j in i + 1..k {
                entries[i * k + j] = rng.random_range(-1.0..1.0);
            }
        }
        let t = MatrixElement::from_real(k, &entries).unwrap();
        let t = t.scale(0.5 * g.radius().min(1.0) / t.norm().max(1.0));
        let at = |cap: usize| eval_matrix(&g, &t, &TruncationPolicy::new(1e-12, cap).unwrap()).unwrap().0;
        let first = at((k - 1).max(1));
        for cap in [k + 3, 10_000] {
            prop_assert_eq!(&at(cap), &first);
        }
    }

    #[test]
    fn derivative_series_composes_exactly(b in builtin(), p in 1usize..5, q in 1usize..5) {
        let g = PowerSeries::builtin(b);
        let step = derivative_series(&derivative_series(&g, p).unwrap(), q).unwrap();
        let direct = derivative_series(&g, p + q).unwrap();
        prop_assert_eq!(step.radius(), g.radius());
        for n in 0..40 {
            prop_assert_eq!(step.coefficient(n), direct.coefficient(n));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn algorithms_are_linear_in_h(b in builtin(), dim in 1usize..5, complex in any::<bool>(), a in -2.0f64..2.0, c in -2.0f64..2.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = PowerSeries::builtin(b);
        let field = field_of(complex);
        let s = rng.random_range(0.01..0.3) * g.radius().min(1.0);
        let t = with_norm(dim, field, s, &mut rng);
        let (h1, h2) = (random(dim, field, &mut rng), random(dim, field, &mut rng));
        let mix = h1.scale(a).add(&h2.scale(c)).unwrap();
        let policy = TruncationPolicy::default();
        for alg in Algorithm::ALL {
            let f = |h: &MatrixElement| frechet(alg, &g, &t, h, &policy).unwrap().value;
            let lhs = f(&mix);
            let rhs = f(&h1).scale(a).add(&f(&h2).scale(c)).unwrap();
            let size = a.abs() * f(&h1).norm() + c.abs() * f(&h2).norm();
            prop_assert!(lhs.sub(&rhs).unwrap().norm() <= 1e-12 * size.max(1e-300), "{alg}");
        }
    }

    #[test]
    fn polynomials_are_exact(degree in 0usize..8, dim in 1usize..5, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coeffs: Vec<f64> = (0..=degree).map(|_| rng.random_range(-2.0..2.0)).collect();
        let g = PowerSeries::real_polynomial(&coeffs).unwrap();
        let t = random(dim, ScalarField::Real, &mut rng).scale(0.3);
        let h = random(dim, ScalarField::Real, &mut rng);
        let wide: Vec<Complex64> = coeffs.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        let expect = polynomial_differential(&wide, &t, &h).unwrap();
        for alg in Algorithm::ALL {
            let r = frechet(alg, &g, &t, &h, &TruncationPolicy::default()).unwrap();
            prop_assert_eq!(r.diagnostics.tail_bound, 0.0);
            prop_assert!(r.diagnostics.within_radius);
            prop_assert!(r.value.sub(&expect).unwrap().norm() <= 1e-13 * expect.norm().max(1.0), "{alg}");
        }
    }

    #[test]
    fn diagnostics_meet_tolerance(b in builtin(), dim in 1usize..5, fraction in 0.01f64..0.33, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = PowerSeries::builtin(b);
        let t = with_norm(dim, ScalarField::Real, fraction * g.radius().min(1.0), &mut rng);
        let h = random(dim, ScalarField::Real, &mut rng);
        let policy = TruncationPolicy::default();
        for alg in Algorithm::ALL {
            let r = frechet(alg, &g, &t, &h, &policy).unwrap();
            prop_assert_eq!(r.value.dim(), dim);
            prop_assert!(r.diagnostics.within_radius && !r.diagnostics.cap_hit);
            prop_assert!(r.diagnostics.tail_bound <= policy.tolerance);
        }
        let (_, d) = eval_matrix(&g, &t, &policy).unwrap();
        prop_assert!(d.converged(policy.tolerance));
    }

    #[test]
    fn block_and_resolvent_oracles_agree(dim in 1usize..6, complex in any::<bool>(), fraction in 0.0f64..0.4, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let field = field_of(complex);
        let t = with_norm(dim, field, fraction.max(1e-3), &mut rng);
        let h = random(dim, field, &mut rng);
        let geo = PowerSeries::builtin(Builtin::Geometric);
        let block = block_triangular_differential(&geo, &t, &h, &TruncationPolicy::default()).unwrap();
        let res = resolvent_differential(&t, &h).unwrap();
        prop_assert!(relative_difference(&block, &res) <= 1e-9);
    }

    #[test]
    fn polynomial_oracle_is_linear(degree in 1usize..7, dim in 1usize..5, a in -2.0f64..2.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c1: Vec<Complex64> = (0..=degree).map(|_| Complex64::new(rng.random_range(-1.0..1.0), 0.0)).collect();
        let c2: Vec<Complex64> = (0..=degree).map(|_| Complex64::new(rng.random_range(-1.0..1.0), 0.0)).collect();
        let t = random(dim, ScalarField::Real, &mut rng).scale(0.5);
        let (h1, h2) = (random(dim, ScalarField::Real, &mut rng), random(dim, ScalarField::Real, &mut rng));
        let mixed: Vec<Complex64> = c1.iter().zip(&c2).map(|(x, y)| x * a + y).collect();
        let lhs = polynomial_differential(&mixed, &t, &h1).unwrap();
        let rhs = polynomial_differential(&c1, &t, &h1).unwrap().scale(a)
            .add(&polynomial_differential(&c2, &t, &h1).unwrap()).unwrap();
        prop_assert!(lhs.sub(&rhs).unwrap().norm() <= 1e-13 * (1.0 + rhs.norm()));
        let hm = h1.scale(a).add(&h2).unwrap();
        let lhs = polynomial_differential(&c1, &t, &hm).unwrap();
        let rhs = polynomial_differential(&c1, &t, &h1).unwrap().scale(a)
            .add(&polynomial_differential(&c1, &t, &h2).unwrap()).unwrap();
        prop_assert!(lhs.sub(&rhs).unwrap().norm() <= 1e-13 * (1.0 + rhs.norm()));
    }

    #[test]
    fn monomial_norm_bound(n in 0usize..13, dim in 1usize..6, complex in any::<bool>(), scale in 0.1f64..2.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let field = field_of(complex);
        let t = random(dim, field, &mut rng).scale(scale);
        let h = random(dim, field, &mut rng);
        let lhs = monomial_differential(n, &t, &h).unwrap().norm();
        let bound = n as f64 * t.norm().powi(n as i32 - 1) * h.norm();
        prop_assert!(lhs <= bound * (1.0 + 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn identity_suite_is_deterministic_and_small(dim in 1usize..9, complex in any::<bool>(), seed in any::<u64>()) {
        let field = field_of(complex);
        let a = run_identity_suite(10, dim, seed, field).unwrap();
        let b = run_identity_suite(10, dim, seed, field).unwrap();
        prop_assert_eq!(&a, &b);
        for r in &a {
            prop_assert!(r.max_scaled_residual <= 1e-10);
        }
    }
}

#[test]
fn bound_kinds_are_reported() {
    // smoke check that every majorant family yields a finite truncation
    let g = PowerSeries::builtin(Builtin::Atan);
    for kind in [
        BoundKind::Value,
        BoundKind::FirstDerivative,
        BoundKind::SecondOrder,
        BoundKind::ThreeS,
    ] {
        let cut =
            choose_truncation(&g, 0.2, &TruncationPolicy::default().with_bound(kind)).unwrap();
        assert!(cut.tail < 1e-12 && !cut.cap_hit, "{}", kind.as_str());
    }
}
