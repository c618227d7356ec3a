//! Fréchet differentials `g^[1](T)(h)` of matrix power series.
//!
//! Four expansions are provided. With `C(T)h = hT − Th`:
//!
//! * [`frechet_direct`]: `Σ_n α_n u_n^[1](T)h` with the monomial differential
//!   `u_n^[1](T)h = Σ_{p=1}^{n} T^{n−p} h T^{p−1}`.
//! * [`frechet_commutant`]: `Σ_n nα_n hT^{n−1} − Σ_p Σ_{n≥p+2} (n−p−1)α_n T^p (C(T)h) T^{n−2−p}`.
//! * [`frechet_power_commutant`]: `Σ_n nα_n hT^{n−1} − Σ_{k≥2} (hT^{k−1} − T^{k−1}h) Σ_{n≥k} α_n T^{n−k}`.
//! * [`frechet_derivative_series`]: `Σ_{p≥1} g^{(p)}(T)/p! · C(T)^{p−1}h`, valid
//!   only for `‖T‖ < R/3`.
//!
//! The first three converge on the whole ball `‖T‖ < R`. Beyond `R/3` the
//! derivative-series form is not guaranteed to converge and is refused.
//!
//! Tail bounds are operator-norm bounds: the error in `g^[1](T)(h)` is at
//! most `tail_bound · ‖h‖`.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use twofloat::TwoFloat;

use crate::algebra::{check_compatible, commutant, Mat, MatrixElement, Scalar, ScalarField};
use crate::error::{Error, Result};
use crate::quadrature::{adaptive_simpson, DEFAULT_ABS_TOL, DEFAULT_MAX_DEPTH};
use crate::series::{
    check_radius, choose_truncation, derivative_series, eval_matrix, truncate_majorant, BoundKind,
    EvalDiagnostics, PowerSeries, Powers, Truncation, TruncationPolicy,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Direct,
    CommutantForm,
    PowerCommutantForm,
    DerivativeSeriesForm,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::Direct,
        Algorithm::CommutantForm,
        Algorithm::PowerCommutantForm,
        Algorithm::DerivativeSeriesForm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Direct => "direct",
            Algorithm::CommutantForm => "commutant",
            Algorithm::PowerCommutantForm => "power-commutant",
            Algorithm::DerivativeSeriesForm => "derivative-series",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown algorithm '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DifferentialResult {
    pub value: MatrixElement,
    pub algorithm: Algorithm,
    pub diagnostics: EvalDiagnostics,
}

/// `u_n^[1](T)(h) = Σ_{p=1}^{n} T^{n−p} h T^{p−1}`, summed term by term.
pub fn monomial_differential(
    n: usize,
    t: &MatrixElement,
    h: &MatrixElement,
) -> Result<MatrixElement> {
    check_compatible(t, h)?;
    let mut powers = Powers::new(t.mat().clone());
    let dim = t.dim();
    let mut acc = Mat::zeros(dim, dim);
    for p in 1..=n {
        let left = powers.get(n - p).clone();
        let right = powers.get(p - 1);
        acc += left * h.mat() * right;
    }
    Ok(MatrixElement::from_mat(t.field(), acc))
}

/// The four equal expressions for `u_n^[1](T)(h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MonomialForms {
    /// `Σ_{p=1}^{n} T^{n−p} h T^{p−1}`
    pub direct: MatrixElement,
    /// `n·hT^{n−1} − Σ_{k=2}^{n} (hT^{k−1} − T^{k−1}h) T^{n−k}`
    pub power_commutant: MatrixElement,
    /// `Σ_{p=1}^{n} C(n,p) T^{n−p} C(T)^{p−1}(h)`
    pub binomial_commutant: MatrixElement,
    /// `n·hT^{n−1} − Σ_{s=0}^{n−2} (n−s−1) T^s (hT − Th) T^{n−2−s}`
    pub commutant: MatrixElement,
}

impl MonomialForms {
    pub fn as_array(&self) -> [&MatrixElement; 4] {
        [
            &self.direct,
            &self.power_commutant,
            &self.binomial_commutant,
            &self.commutant,
        ]
    }
}

type Wide = num_complex::Complex<TwoFloat>;

fn widen(m: &Mat) -> DMatrix<Wide> {
    m.map(|z| Wide::new(TwoFloat::from(z.re), TwoFloat::from(z.im)))
}

/// `Σ_{p=1}^{n} C(n,p) T^{n−p} C(T)^{p−1}(h)`. The summands reach roughly
/// `3^n/(2n)` times the size of the result and cancel, so the sum is carried
/// in double-double arithmetic and rounded once at the end.
fn binomial_commutant_form(n: usize, tm: &Mat, hm: &Mat) -> Mat {
    let binom = binomial_row(n);
    let (t, h) = (widen(tm), widen(hm));
    let dim = tm.nrows();
    let mut powers = vec![DMatrix::<Wide>::identity(dim, dim)];
    for k in 1..n {
        let next = &powers[k - 1] * &t;
        powers.push(next);
    }
    let mut acc = DMatrix::<Wide>::zeros(dim, dim);
    let mut nested = h;
    for p in 1..=n {
        let c = Wide::new(TwoFloat::from(binom[p]), TwoFloat::from(0.0));
        acc += &powers[n - p] * &nested * c;
        nested = &nested * &t - &t * &nested;
    }
    acc.map(|z| Complex64::new(f64::from(z.re), f64::from(z.im)))
}

pub fn monomial_differential_forms(
    n: usize,
    t: &MatrixElement,
    h: &MatrixElement,
) -> Result<MonomialForms> {
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "the four monomial forms need n >= 2, got {n}"
        )));
    }
    let direct = monomial_differential(n, t, h)?;
    let field = t.field();
    let (tm, hm) = (t.mat(), h.mat());
    let mut powers = Powers::new(tm.clone());
    let nf = Complex64::new(n as f64, 0.0);
    let lead = hm * powers.get(n - 1) * nf;

    let mut pc = lead.clone();
    for k in 2..=n {
        let tk1 = powers.get(k - 1).clone();
        let bracket = hm * &tk1 - &tk1 * hm;
        pc -= bracket * powers.get(n - k);
    }

    let bc = binomial_commutant_form(n, tm, hm);

    let ch = commutant(tm, hm);
    let mut cf = lead;
    for s in 0..=n - 2 {
        let w = Complex64::new((n - s - 1) as f64, 0.0);
        let left = powers.get(s).clone();
        cf -= left * &ch * powers.get(n - 2 - s) * w;
    }

    Ok(MonomialForms {
        direct,
        power_commutant: MatrixElement::from_mat(field, pc),
        binomial_commutant: MatrixElement::from_mat(field, bc),
        commutant: MatrixElement::from_mat(field, cf),
    })
}

/// Row `n` of Pascal's triangle as floats.
fn binomial_row(n: usize) -> Vec<f64> {
    let mut row = vec![1.0f64];
    for k in 1..=n {
        let mut next = vec![1.0; k + 1];
        for j in 1..k {
            next[j] = row[j - 1] + row[j];
        }
        row = next;
    }
    row
}

/// Validated operands for a differential: common field, raw matrices, `‖T‖`.
struct Operands {
    field: ScalarField,
    t: Mat,
    h: Mat,
    s: f64,
}

fn operands(
    g: &PowerSeries,
    t: &MatrixElement,
    h: &MatrixElement,
    kind: BoundKind,
) -> Result<Operands> {
    check_compatible(t, h)?;
    let s = t.norm();
    check_radius(g, s, kind)?;
    Ok(Operands {
        field: t.field().join(g.field()),
        t: t.mat().clone(),
        h: h.mat().clone(),
        s,
    })
}

fn limit_ratio(g: &PowerSeries, s: f64) -> f64 {
    if g.radius().is_finite() {
        s / g.radius()
    } else {
        0.0
    }
}

fn diagnostics(
    outer: &Truncation,
    tail: f64,
    s: f64,
    cap_hit: bool,
    inner: Option<usize>,
) -> EvalDiagnostics {
    EvalDiagnostics {
        terms_used: outer.index,
        tail_bound: tail,
        ball_radius_used: s,
        within_radius: true,
        cap_hit: outer.cap_hit || cap_hit,
        inner_terms: inner,
    }
}

/// `Σ_{n=1}^{N} α_n u_n^[1](T)h`, with `N` from the first-derivative majorant.
pub fn frechet_direct(
    g: &PowerSeries,
    t: &MatrixElement,
    h: &MatrixElement,
    policy: &TruncationPolicy,
) -> Result<DifferentialResult> {
    let op = operands(g, t, h, BoundKind::FirstDerivative)?;
    let cut = choose_truncation(g, op.s, &policy.with_bound(BoundKind::FirstDerivative))?;
    let dim = t.dim();
    let mut acc = Mat::zeros(dim, dim);
    // u_n = T·u_{n−1} + h·T^{n−1}
    let mut u = op.h.clone();
    let mut h_pow = op.h.clone();
    for n in 1..=cut.index {
        if n > 1 {
            h_pow = &h_pow * &op.t;
            u = &op.t * &u + &h_pow;
        }
        let a = g.coefficient(n);
        if a != Complex64::default() {
            acc += &u * a;
        }
    }
    Ok(DifferentialResult {
        value: MatrixElement::from_mat(op.field, acc),
        algorithm: Algorithm::Direct,
        diagnostics: diagnostics(&cut, cut.tail, op.s, false, None),
    })
}

/// `Σ_{n=1}^{N} nα_n hT^{n−1}`, the part shared by both commutant forms.
fn leading_sum(
    g: &PowerSeries,
    op: &Operands,
    eps: f64,
    max_terms: usize,
) -> Result<(Mat, Truncation)> {
    let policy = TruncationPolicy {
        tolerance: eps,
        max_terms,
        bound_kind: BoundKind::FirstDerivative,
    };
    let cut = choose_truncation(g, op.s, &policy)?;
    let dim = op.t.nrows();
    let mut acc = Mat::zeros(dim, dim);
    let mut h_pow = op.h.clone();
    for n in 1..=cut.index {
        if n > 1 {
            h_pow = &h_pow * &op.t;
        }
        let a = g.coefficient(n);
        if a != Complex64::default() {
            acc += &h_pow * (a * n as f64);
        }
    }
    Ok((acc, cut))
}

/// The nested-sum form driven by `C(T)`, outer index truncated by the
/// second-order majorant.
pub fn frechet_commutant(
    g: &PowerSeries,
    t: &MatrixElement,
    h: &MatrixElement,
    policy: &TruncationPolicy,
) -> Result<DifferentialResult> {
    let op = operands(g, t, h, BoundKind::SecondOrder)?;
    let eps = policy.tolerance;
    let (mut acc, lead) = leading_sum(g, &op, 0.5 * eps, policy.max_terms)?;
    let outer = choose_truncation(
        g,
        op.s,
        &TruncationPolicy {
            tolerance: 0.25 * eps,
            max_terms: policy.max_terms,
            bound_kind: BoundKind::SecondOrder,
        },
    )?;

    let mut tail = lead.tail + outer.tail;
    let mut cap_hit = lead.cap_hit;
    let mut inner_max = 0;
    if outer.index >= 2 {
        let last_p = outer.index - 2;
        let budget = 0.25 * eps / (last_p + 1) as f64;
        let mut powers = Powers::new(op.t.clone());
        let s = op.s;
        // x = T^p (hT − Th)
        let mut x = commutant(&op.t, &op.h);
        for p in 0..=last_p {
            // I_p = Σ_j (j+1) α_{j+p+2} T^j
            let scale = 2.0 * s.powi(p as i32 + 1);
            let inner = truncate_majorant(
                |j| (j + 1) as f64 * g.coefficient(j + p + 2).norm() * s.powi(j as i32) * scale,
                limit_ratio(g, s),
                g.support().map(|sup| sup.saturating_sub(p + 2)),
                s == 0.0,
                budget,
                policy.max_terms,
            );
            let coeffs: Vec<Scalar> = (0..=inner.index)
                .map(|j| g.coefficient(j + p + 2) * (j + 1) as f64)
                .collect();
            acc -= &x * powers.combine(&coeffs);
            tail += inner.tail;
            cap_hit |= inner.cap_hit;
            inner_max = inner_max.max(inner.index);
            x = powers.base() * &x;
        }
    }
    Ok(DifferentialResult {
        value: MatrixElement::from_mat(op.field, acc),
        algorithm: Algorithm::CommutantForm,
        diagnostics: diagnostics(&outer, tail, op.s, cap_hit, Some(inner_max)),
    })
}

/// The form driven by `C(T^{k−1})`, outer index truncated by the
/// second-order majorant.
pub fn frechet_power_commutant(
    g: &PowerSeries,
    t: &MatrixElement,
    h: &MatrixElement,
    policy: &TruncationPolicy,
) -> Result<DifferentialResult> {
    let op = operands(g, t, h, BoundKind::SecondOrder)?;
    let eps = policy.tolerance;
    let (mut acc, lead) = leading_sum(g, &op, 0.5 * eps, policy.max_terms)?;
    let outer = choose_truncation(
        g,
        op.s,
        &TruncationPolicy {
            tolerance: 0.25 * eps,
            max_terms: policy.max_terms,
            bound_kind: BoundKind::SecondOrder,
        },
    )?;

    let mut tail = lead.tail + outer.tail;
    let mut cap_hit = lead.cap_hit;
    let mut inner_max = 0;
    if outer.index >= 2 {
        let budget = 0.25 * eps / (outer.index - 1) as f64;
        let mut powers = Powers::new(op.t.clone());
        let s = op.s;
        for k in 2..=outer.index {
            let tk1 = powers.get(k - 1).clone();
            let bracket = &op.h * &tk1 - &tk1 * &op.h;
            // J_k = Σ_j α_{j+k} T^j
            let scale = 2.0 * s.powi(k as i32 - 1);
            let inner = truncate_majorant(
                |j| g.coefficient(j + k).norm() * s.powi(j as i32) * scale,
                limit_ratio(g, s),
                g.support().map(|sup| sup.saturating_sub(k)),
                s == 0.0,
                budget,
                policy.max_terms,
            );
            let coeffs: Vec<Scalar> = (0..=inner.index).map(|j| g.coefficient(j + k)).collect();
            acc -= bracket * powers.combine(&coeffs);
            tail += inner.tail;
            cap_hit |= inner.cap_hit;
            inner_max = inner_max.max(inner.index);
        }
    }
    Ok(DifferentialResult {
        value: MatrixElement::from_mat(op.field, acc),
        algorithm: Algorithm::PowerCommutantForm,
        diagnostics: diagnostics(&outer, tail, op.s, cap_hit, Some(inner_max)),
    })
}

/// Majorant term `C(m+p,p)|α_{m+p}| s^m (2s)^{p−1}` of the `p`-th summand,
/// walked sequentially in `m`.
fn derivative_summand_majorant(g: &PowerSeries, p: usize, s: f64) -> impl FnMut(usize) -> f64 + '_ {
    let mut ln_binom = 0.0f64;
    move |m| {
        if m > 0 {
            ln_binom += ((m + p) as f64 / m as f64).ln();
        }
        match g.ln_scaled_derivative_abs(p, m, ln_binom) {
            None => 0.0,
            Some(ln_c) if s > 0.0 => {
                (ln_c + m as f64 * s.ln() + (p - 1) as f64 * (2.0 * s).ln()).exp()
            }
            Some(ln_c) => {
                if m == 0 && p == 1 {
                    ln_c.exp()
                } else {
                    0.0
                }
            }
        }
    }
}

/// `g^{(p)}(T)/p!` truncated so that its contribution to the summand stays
/// within `budget`.
fn scaled_derivative_at(
    g: &PowerSeries,
    powers: &mut Powers,
    p: usize,
    s: f64,
    budget: f64,
    max_terms: usize,
) -> (Mat, Truncation) {
    let inner = truncate_majorant(
        derivative_summand_majorant(g, p, s),
        limit_ratio(g, s),
        g.support().map(|sup| sup.saturating_sub(p)),
        s == 0.0,
        budget,
        max_terms,
    );
    let coeffs = g.scaled_derivative_coefficients(p, inner.index + 1);
    (powers.combine(&coeffs), inner)
}

/// `Σ_{p=1}^{P} g^{(p)}(T)/p! · C(T)^{p−1}(h)`; requires `‖T‖ < R/3`.
pub fn frechet_derivative_series(
    g: &PowerSeries,
    t: &MatrixElement,
    h: &MatrixElement,
    policy: &TruncationPolicy,
) -> Result<DifferentialResult> {
    let op = operands(g, t, h, BoundKind::ThreeS)?;
    let eps = policy.tolerance;
    let outer = choose_truncation(
        g,
        op.s,
        &TruncationPolicy {
            tolerance: 0.5 * eps,
            max_terms: policy.max_terms,
            bound_kind: BoundKind::ThreeS,
        },
    )?;
    let dim = t.dim();
    let mut acc = Mat::zeros(dim, dim);
    let mut tail = outer.tail;
    let mut cap_hit = false;
    let mut inner_max = 0;
    if outer.index >= 1 {
        let budget = 0.5 * eps / outer.index as f64;
        let mut powers = Powers::new(op.t.clone());
        let mut nested = op.h.clone();
        for p in 1..=outer.index {
            let (d, inner) =
                scaled_derivative_at(g, &mut powers, p, op.s, budget, policy.max_terms);
            acc += d * &nested;
            tail += inner.tail;
            cap_hit |= inner.cap_hit;
            inner_max = inner_max.max(inner.index);
            nested = commutant(&op.t, &nested);
        }
    }
    Ok(DifferentialResult {
        value: MatrixElement::from_mat(op.field, acc),
        algorithm: Algorithm::DerivativeSeriesForm,
        diagnostics: diagnostics(&outer, tail, op.s, cap_hit, Some(inner_max)),
    })
}

/// Dispatches to the named algorithm.
pub fn frechet(
    algorithm: Algorithm,
    g: &PowerSeries,
    t: &MatrixElement,
    h: &MatrixElement,
    policy: &TruncationPolicy,
) -> Result<DifferentialResult> {
    match algorithm {
        Algorithm::Direct => frechet_direct(g, t, h, policy),
        Algorithm::CommutantForm => frechet_commutant(g, t, h, policy),
        Algorithm::PowerCommutantForm => frechet_power_commutant(g, t, h, policy),
        Algorithm::DerivativeSeriesForm => frechet_derivative_series(g, t, h, policy),
    }
}

/// Norms of the summands and partial sums of the derivative-series expansion
/// for `p = 1..=terms`, evaluated without the `R/3` guard (only `‖T‖ < R` is
/// required). Used to inspect behaviour outside the guaranteed ball.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthProbe {
    pub term_norms: Vec<f64>,
    pub partial_sum_norms: Vec<f64>,
}

pub fn derivative_series_growth(
    g: &PowerSeries,
    t: &MatrixElement,
    h: &MatrixElement,
    terms: usize,
    policy: &TruncationPolicy,
) -> Result<GrowthProbe> {
    let op = operands(g, t, h, BoundKind::Value)?;
    let dim = t.dim();
    let mut powers = Powers::new(op.t.clone());
    let mut nested = op.h.clone();
    let mut acc = Mat::zeros(dim, dim);
    let mut probe = GrowthProbe {
        term_norms: Vec::new(),
        partial_sum_norms: Vec::new(),
    };
    for p in 1..=terms {
        let (d, _) =
            scaled_derivative_at(g, &mut powers, p, op.s, policy.tolerance, policy.max_terms);
        let term = d * &nested;
        acc += &term;
        probe.term_norms.push(term.norm());
        probe.partial_sum_norms.push(acc.norm());
        nested = commutant(&op.t, &nested);
    }
    Ok(probe)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkipRecord {
    pub algorithm: Algorithm,
    pub reason: String,
    pub growth: Option<GrowthProbe>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairwiseDiff {
    pub first: Algorithm,
    pub second: Algorithm,
    pub relative_difference: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub results: Vec<DifferentialResult>,
    pub skipped: Vec<SkipRecord>,
    pub pairwise: Vec<PairwiseDiff>,
}

impl CompareReport {
    pub fn max_relative_difference(&self) -> f64 {
        self.pairwise
            .iter()
            .map(|d| d.relative_difference)
            .fold(0.0, f64::max)
    }
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn relative_difference(a: &MatrixElement, b: &MatrixElement) -> f64 {
    let scale = a.norm().max(b.norm());
    if scale == 0.0 {
        return 0.0;
    }
    (a.mat() - b.mat()).norm() / scale
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CompareOptions {
    /// Evaluate this many derivative-series partial sums when the R/3 guard
    /// skips that algorithm.
    pub probe_terms: Option<usize>,
}

pub fn frechet_compare(
    g: &PowerSeries,
    t: &MatrixElement,
    h: &MatrixElement,
    policy: &TruncationPolicy,
) -> Result<CompareReport> {
    frechet_compare_with(g, t, h, policy, CompareOptions::default())
}

/// Runs every applicable algorithm concurrently and tabulates pairwise
/// relative differences. The derivative-series form is skipped outside the
/// `R/3` ball.
pub fn frechet_compare_with(
    g: &PowerSeries,
    t: &MatrixElement,
    h: &MatrixElement,
    policy: &TruncationPolicy,
    options: CompareOptions,
) -> Result<CompareReport> {
    check_compatible(t, h)?;
    let s = t.norm();
    check_radius(g, s, BoundKind::Value)?;
    let third_ok = check_radius(g, s, BoundKind::ThreeS).is_ok();
    let algorithms: Vec<Algorithm> = Algorithm::ALL
        .into_iter()
        .filter(|a| *a != Algorithm::DerivativeSeriesForm || third_ok)
        .collect();

    let outcomes: Vec<Result<DifferentialResult>> = std::thread::scope(|scope| {
        let handles: Vec<_> = algorithms
            .iter()
            .map(|&a| scope.spawn(move || frechet(a, g, t, h, policy)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("algorithm thread panicked"))
            .collect()
    });
    let results = outcomes.into_iter().collect::<Result<Vec<_>>>()?;

    let mut skipped = Vec::new();
    if !third_ok {
        let growth = match options.probe_terms {
            Some(n) => Some(derivative_series_growth(g, t, h, n, policy)?),
            None => None,
        };
        skipped.push(SkipRecord {
            algorithm: Algorithm::DerivativeSeriesForm,
            reason: format!(
                "norm(T) = {s:e} is not below R/3 = {:e}; the derivative-series expansion \
                 is only guaranteed to converge on that ball and may diverge outside it",
                g.radius() / 3.0
            ),
            growth,
        });
    }

    let mut pairwise = Vec::new();
    for (i, a) in results.iter().enumerate() {
        for b in &results[i + 1..] {
            pairwise.push(PairwiseDiff {
                first: a.algorithm,
                second: b.algorithm,
                relative_difference: relative_difference(&a.value, &b.value),
            });
        }
    }
    Ok(CompareReport {
        results,
        skipped,
        pairwise,
    })
}

type CurveFn = Arc<dyn Fn(f64) -> MatrixElement + Send + Sync>;

/// A differentiable path `t ↦ T(t)` on an open interval.
#[derive(Clone)]
pub struct MatrixCurve {
    value: CurveFn,
    derivative: Option<CurveFn>,
    domain: (f64, f64),
}

impl fmt::Debug for MatrixCurve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MatrixCurve")
            .field("domain", &self.domain)
            .field("explicit_derivative", &self.derivative.is_some())
            .finish()
    }
}

impl MatrixCurve {
    /// Curve without an explicit derivative; [`MatrixCurve::derivative_at`]
    /// falls back to central differences.
    pub fn new(
        value: impl Fn(f64) -> MatrixElement + Send + Sync + 'static,
        domain: (f64, f64),
    ) -> Result<Self> {
        if !(domain.0 < domain.1) {
            return Err(Error::InvalidInput(format!(
                "empty curve domain ({}, {})",
                domain.0, domain.1
            )));
        }
        Ok(Self {
            value: Arc::new(value),
            derivative: None,
            domain,
        })
    }

    pub fn with_derivative(
        mut self,
        derivative: impl Fn(f64) -> MatrixElement + Send + Sync + 'static,
    ) -> Self {
        self.derivative = Some(Arc::new(derivative));
        self
    }

    /// `T(t) = Σ_k t^k C_k` on the whole real line, with its exact derivative.
    pub fn polynomial(coeffs: Vec<MatrixElement>) -> Result<Self> {
        let first = coeffs
            .first()
            .ok_or_else(|| Error::InvalidInput("curve needs coefficients".into()))?;
        for c in &coeffs[1..] {
            check_compatible(first, c)?;
        }
        let coeffs: Arc<[MatrixElement]> = coeffs.into();
        let vc = Arc::clone(&coeffs);
        let value = move |t: f64| {
            // Horner in t
            let mut acc = vc[vc.len() - 1].clone();
            for c in vc.iter().rev().skip(1) {
                acc = acc.scale(t).add(c).expect("compatible coefficients");
            }
            acc
        };
        let derivative = move |t: f64| {
            let n = coeffs.len();
            let mut acc = coeffs[0].scale(0.0);
            for k in (1..n).rev() {
                acc = acc
                    .scale(t)
                    .add(&coeffs[k].scale(k as f64))
                    .expect("compatible coefficients");
            }
            acc
        };
        Ok(Self::new(value, (f64::NEG_INFINITY, f64::INFINITY))?.with_derivative(derivative))
    }

    /// `t ↦ t·W`.
    pub fn linear(w: MatrixElement) -> Result<Self> {
        let zero = w.scale(0.0);
        Self::polynomial(vec![zero, w])
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn contains(&self, t: f64) -> bool {
        self.domain.0 < t && t < self.domain.1
    }

    fn check(&self, t: f64) -> Result<()> {
        if self.contains(t) {
            Ok(())
        } else {
            Err(Error::OutsideDomain {
                t,
                lo: self.domain.0,
                hi: self.domain.1,
            })
        }
    }

    pub fn value_at(&self, t: f64) -> Result<MatrixElement> {
        self.check(t)?;
        Ok((self.value)(t))
    }

    /// The explicit derivative when given, else a central difference with
    /// step `max(1e−6, 1e−8·(1+|t|))`.
    pub fn derivative_at(&self, t: f64) -> Result<MatrixElement> {
        self.check(t)?;
        if let Some(d) = &self.derivative {
            return Ok(d(t));
        }
        let step = auto_derivative_step(t);
        let forward = (self.value)(t + step);
        let backward = (self.value)(t - step);
        Ok(forward.sub(&backward)?.scale(0.5 / step))
    }
}

pub fn auto_derivative_step(t: f64) -> f64 {
    1e-6f64.max(1e-8 * (1.0 + t.abs()))
}

/// `d/dt g(T(t)) = Σ_{p≥1} g^{(p)}(T(t))/p! · C(T(t))^{p−1}(T'(t))`, evaluated by
/// [`frechet_derivative_series`] at `h = T'(t)`; requires `‖T(t)‖ < R/3`.
pub fn curve_derivative(
    g: &PowerSeries,
    curve: &MatrixCurve,
    t: f64,
    policy: &TruncationPolicy,
) -> Result<DifferentialResult> {
    let value = curve.value_at(t)?;
    let tangent = curve.derivative_at(t)?;
    frechet_derivative_series(g, &value, &tangent, policy)
}

/// Both sides of `W·∫_{u1}^{u2} g'(tW) dt = g(u2·W) − g(u1·W)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegralCheck {
    pub residual: f64,
    pub integral_side: MatrixElement,
    pub difference_side: MatrixElement,
    pub evaluations: usize,
}

/// Evaluates both sides of the integral identity on the segment `t ↦ tW`,
/// the left one by adaptive Simpson quadrature, and returns their distance.
pub fn integral_identity_check(
    g: &PowerSeries,
    w: &MatrixElement,
    u1: f64,
    u2: f64,
    policy: &TruncationPolicy,
) -> Result<IntegralCheck> {
    if w.is_zero() {
        return Err(Error::InvalidInput("W must be nonzero".into()));
    }
    if !u1.is_finite() || !u2.is_finite() {
        return Err(Error::InvalidInput(
            "integration endpoints must be finite".into(),
        ));
    }
    let wn = w.norm();
    for u in [u1, u2] {
        check_radius(g, u.abs() * wn, BoundKind::Value)?;
    }
    let field = w.field().join(g.field());
    let dg = derivative_series(g, 1)?;
    let value_policy = policy.with_bound(BoundKind::Value);
    let at =
        |u: f64| -> Result<Mat> { Ok(eval_matrix(g, &w.scale(u), &value_policy)?.0.into_mat()) };
    let difference = at(u2)? - at(u1)?;

    let (integral, evaluations) = if u1 == u2 {
        (Mat::zeros(w.dim(), w.dim()), 0)
    } else {
        let q = adaptive_simpson(
            |t| Ok(eval_matrix(&dg, &w.scale(t), &value_policy)?.0.into_mat()),
            u1,
            u2,
            DEFAULT_ABS_TOL,
            DEFAULT_MAX_DEPTH,
        )?;
        (w.mat() * q.value, q.evaluations)
    };
    let residual = (&integral - &difference).norm();
    Ok(IntegralCheck {
        residual,
        integral_side: MatrixElement::from_mat(field, integral),
        difference_side: MatrixElement::from_mat(field, difference),
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::Builtin;

    fn m(entries: &[f64]) -> MatrixElement {
        let dim = (entries.len() as f64).sqrt() as usize;
        MatrixElement::from_real(dim, entries).unwrap()
    }

    fn close(a: &MatrixElement, b: &MatrixElement, tol: f64) -> bool {
        let d = (a.mat() - b.mat()).norm();
        d <= tol * (1.0 + a.norm().max(b.norm()))
    }

    fn policy() -> TruncationPolicy {
        TruncationPolicy::default()
    }

    #[test]
    fn monomial_small_cases() {
        let t = m(&[0.3, -0.2, 0.5, 0.1]);
        let h = m(&[1.0, 2.0, -1.0, 0.5]);
        assert!(monomial_differential(0, &t, &h).unwrap().is_zero());
        assert_eq!(monomial_differential(1, &t, &h).unwrap(), h);
        let two = monomial_differential(2, &t, &h).unwrap();
        let expect = h.mul(&t).unwrap().add(&t.mul(&h).unwrap()).unwrap();
        assert!(close(&two, &expect, 1e-15));
    }

    #[test]
    fn monomial_cube_on_nilpotent() {
        // T² = 0 so only T·h·T survives in T²h + ThT + hT²
        let t = m(&[0.0, 1.0, 0.0, 0.0]);
        let h = m(&[0.0, 0.0, 1.0, 0.0]);
        let u3 = monomial_differential(3, &t, &h).unwrap();
        assert_eq!(u3, m(&[0.0, 1.0, 0.0, 0.0]));
    }

    #[test]
    fn monomial_forms_agree_for_n_two() {
        let t = m(&[0.3, -0.2, 0.5, 0.1]);
        let h = m(&[1.0, 2.0, -1.0, 0.5]);
        let f = monomial_differential_forms(2, &t, &h).unwrap();
        let expect = h.mul(&t).unwrap().add(&t.mul(&h).unwrap()).unwrap();
        for v in f.as_array() {
            assert!(close(v, &expect, 1e-15));
        }
        assert!(monomial_differential_forms(1, &t, &h).is_err());
    }

    #[test]
    fn identity_function_gives_h() {
        let g = PowerSeries::real_polynomial(&[0.0, 1.0]).unwrap();
        let t = m(&[3.0, 1.0, -2.0, 5.0]);
        let h = m(&[1.0, 2.0, 3.0, 4.0]);
        for a in [
            Algorithm::Direct,
            Algorithm::CommutantForm,
            Algorithm::PowerCommutantForm,
        ] {
            assert_eq!(frechet(a, &g, &t, &h, &policy()).unwrap().value, h);
        }
    }

    #[test]
    fn direct_exp_on_nilpotent_pair() {
        let g = PowerSeries::builtin(Builtin::Exp);
        let t = m(&[0.0, 1.0, 0.0, 0.0]);
        let h = m(&[0.0, 0.0, 1.0, 0.0]);
        let r = frechet_direct(&g, &t, &h, &policy()).unwrap();
        assert!(close(&r.value, &m(&[0.5, 1.0 / 6.0, 1.0, 0.5]), 1e-15));
    }

    #[test]
    fn geometric_at_half_identity() {
        let g = PowerSeries::builtin(Builtin::Geometric);
        let t = m(&[0.5, 0.0, 0.0, 0.5]);
        let h = m(&[1.0, 0.0, 0.0, 1.0]);
        for a in [
            Algorithm::Direct,
            Algorithm::CommutantForm,
            Algorithm::PowerCommutantForm,
        ] {
            let r = frechet(a, &g, &t, &h, &policy()).unwrap();
            assert!(close(&r.value, &m(&[4.0, 0.0, 0.0, 4.0]), 1e-11), "{a}");
        }
        // ‖0.5·I‖ = 0.707 > 1/3
        assert!(matches!(
            frechet_derivative_series(&g, &t, &h, &policy()),
            Err(Error::OutsideThirdRadius { .. })
        ));
    }

    #[test]
    fn square_is_exact_in_every_form() {
        let g = PowerSeries::real_polynomial(&[0.0, 0.0, 1.0]).unwrap();
        let t = m(&[0.1, 0.05, -0.07, 0.02]);
        let h = m(&[1.0, -2.0, 0.5, 3.0]);
        let expect = monomial_differential(2, &t, &h).unwrap();
        for a in Algorithm::ALL {
            let r = frechet(a, &g, &t, &h, &policy()).unwrap();
            assert!(close(&r.value, &expect, 1e-15), "{a}");
            assert_eq!(r.diagnostics.tail_bound, 0.0, "{a}");
        }
    }

    #[test]
    fn cube_recovered_by_power_commutant() {
        let g = PowerSeries::real_polynomial(&[0.0, 0.0, 0.0, 1.0]).unwrap();
        let t = m(&[0.4, 1.0, -0.3, 0.2]);
        let h = m(&[0.0, 1.0, 1.0, 0.0]);
        let r = frechet_power_commutant(&g, &t, &h, &policy()).unwrap();
        assert_eq!(r.diagnostics.terms_used, 3);
        assert!(close(
            &r.value,
            &monomial_differential(3, &t, &h).unwrap(),
            1e-15
        ));
    }

    #[test]
    fn commuting_pair_collapses() {
        let g = PowerSeries::builtin(Builtin::Exp);
        let t = m(&[0.1, 0.0, 0.0, -0.2]);
        let h = m(&[2.0, 0.0, 0.0, 3.0]);
        // diagonal: g^[1](T)h = diag(e^{0.1}·2, e^{−0.2}·3)
        let expect = m(&[2.0 * 0.1f64.exp(), 0.0, 0.0, 3.0 * (-0.2f64).exp()]);
        for a in Algorithm::ALL {
            let r = frechet(a, &g, &t, &h, &policy()).unwrap();
            assert!(close(&r.value, &expect, 1e-12), "{a}");
        }
    }

    #[test]
    fn zero_argument_gives_alpha_one_h() {
        let g = PowerSeries::builtin(Builtin::Atan);
        let t = MatrixElement::zeros(2, ScalarField::Real).unwrap();
        let h = m(&[1.0, 2.0, 3.0, 4.0]);
        let report = frechet_compare(&g, &t, &h, &policy()).unwrap();
        assert_eq!(report.results.len(), 4);
        for r in &report.results {
            assert!(close(&r.value, &h, 1e-15), "{}", r.algorithm);
        }
    }

    #[test]
    fn compare_skips_outside_third_ball() {
        let g = PowerSeries::builtin(Builtin::Geometric);
        let t = m(&[0.5, 0.0, 0.0, 0.0]);
        let h = m(&[0.0, 1.0, 1.0, 0.0]);
        let report = frechet_compare_with(
            &g,
            &t,
            &h,
            &policy(),
            CompareOptions {
                probe_terms: Some(5),
            },
        )
        .unwrap();
        assert_eq!(report.results.len(), 3);
        assert_eq!(report.skipped.len(), 1);
        assert_eq!(report.skipped[0].algorithm, Algorithm::DerivativeSeriesForm);
        assert!(report.skipped[0].reason.contains("R/3"));
        assert_eq!(
            report.skipped[0].growth.as_ref().unwrap().term_norms.len(),
            5
        );
        assert_eq!(report.pairwise.len(), 3);
        assert!(report.max_relative_difference() < 1e-10);
    }

    #[test]
    fn outside_radius_rejected_everywhere() {
        let g = PowerSeries::builtin(Builtin::Log1p);
        let t = m(&[1.0, 0.0, 0.0, 0.5]);
        let h = m(&[1.0, 0.0, 0.0, 1.0]);
        for a in Algorithm::ALL {
            assert!(frechet(a, &g, &t, &h, &policy()).is_err());
        }
        assert!(matches!(
            frechet_compare(&g, &t, &h, &policy()),
            Err(Error::OutsideRadius { .. })
        ));
    }

    #[test]
    fn constant_curve_has_zero_derivative() {
        let g = PowerSeries::builtin(Builtin::Exp);
        let c = m(&[0.1, 0.2, 0.0, 0.1]);
        let curve = MatrixCurve::polynomial(vec![c]).unwrap();
        let d = curve_derivative(&g, &curve, 0.3, &policy()).unwrap();
        assert!(d.value.is_zero());
    }

    #[test]
    fn linear_curve_is_w_times_derivative() {
        let g = PowerSeries::builtin(Builtin::Sin);
        let w = m(&[0.2, -0.1, 0.3, 0.05]);
        let curve = MatrixCurve::linear(w.clone()).unwrap();
        let t = 0.7;
        let d = curve_derivative(&g, &curve, t, &policy()).unwrap();
        let gp = derivative_series(&g, 1).unwrap();
        let (gpt, _) = eval_matrix(&gp, &w.scale(t), &policy()).unwrap();
        assert!(close(&d.value, &w.mul(&gpt).unwrap(), 1e-12));
    }

    #[test]
    fn curve_domain_enforced() {
        let curve = MatrixCurve::new(|t| m(&[t, 0.0, 0.0, t]), (0.0, 1.0)).unwrap();
        assert!(matches!(
            curve.value_at(1.0),
            Err(Error::OutsideDomain { .. })
        ));
        let d = curve.derivative_at(0.5).unwrap();
        assert!(close(&d, &m(&[1.0, 0.0, 0.0, 1.0]), 1e-9));
        assert!(MatrixCurve::new(|t| m(&[t]), (1.0, 1.0)).is_err());
        assert_eq!(auto_derivative_step(0.0), 1e-6);
        assert_eq!(auto_derivative_step(50.0), 1e-6);
        assert!((auto_derivative_step(1e4) - 1.0001e-4).abs() < 1e-16);
    }

    #[test]
    fn curve_outside_third_ball_rejected() {
        let g = PowerSeries::builtin(Builtin::Geometric);
        let curve = MatrixCurve::linear(m(&[1.0, 0.0, 0.0, 0.0])).unwrap();
        assert!(matches!(
            curve_derivative(&g, &curve, 0.5, &policy()),
            Err(Error::OutsideThirdRadius { .. })
        ));
    }

    #[test]
    fn integral_identity_examples() {
        let p = policy();
        let exp = PowerSeries::builtin(Builtin::Exp);
        let w = m(&[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(
            integral_identity_check(&exp, &w, 0.3, 0.3, &p)
                .unwrap()
                .residual,
            0.0
        );
        assert!(
            integral_identity_check(&exp, &w, 0.0, 1.0, &p)
                .unwrap()
                .residual
                <= 1e-10
        );

        let geo = PowerSeries::builtin(Builtin::Geometric);
        let half = m(&[0.5, 0.0, 0.0, 0.5]);
        assert!(
            integral_identity_check(&geo, &half, 0.0, 1.0, &p)
                .unwrap()
                .residual
                <= 1e-8
        );
        assert!(integral_identity_check(&geo, &half, 0.0, 1.5, &p).is_err());
        let zero = MatrixElement::zeros(2, ScalarField::Real).unwrap();
        assert!(integral_identity_check(&geo, &zero, 0.0, 0.5, &p).is_err());
    }
}
