//! Power series `g(λ) = Σ α_n λ^n`, their termwise derivatives, and their
//! evaluation at scalars and at matrices.
//!
//! Truncation is driven by scalar majorants of the matrix tail. For a series
//! with radius `R` and a matrix with norm `s < R`, submultiplicativity gives
//! `‖Σ_{n>N} α_n T^n‖ ≤ Σ_{n>N} |α_n| s^n`, and the differential algorithms
//! use the analogous weighted majorants listed in [`BoundKind`]. A majorant is
//! summed term by term until its running term falls below `ε·10⁻³` with a
//! decay ratio below one; what remains is dominated geometrically by
//! `t·r/(1−r)`, where `r` is the larger of the observed ratio and the limit
//! ratio `s/R`.

use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use serde_json::Value;

use crate::algebra::{Mat, MatrixElement, Scalar, ScalarField};
use crate::error::{Error, Result};

/// Default coefficient cap.
pub const DEFAULT_MAX_TERMS: usize = 10_000;

/// Default truncation tolerance.
pub const DEFAULT_TOLERANCE: f64 = 1e-12;

/// A running majorant term below `tolerance * STOP_FRACTION` ends the walk.
const STOP_FRACTION: f64 = 1e-3;

/// Root-test estimates spreading by more than this factor across the sampled
/// window are read as superexponential decay, i.e. an infinite radius.
const INFINITE_RADIUS_SPREAD: f64 = 1.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Builtin {
    Exp,
    Sin,
    Cos,
    Log1p,
    Geometric,
    Atan,
}

impl Builtin {
    pub const ALL: [Builtin; 6] = [
        Builtin::Exp,
        Builtin::Sin,
        Builtin::Cos,
        Builtin::Log1p,
        Builtin::Geometric,
        Builtin::Atan,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Exp => "exp",
            Builtin::Sin => "sin",
            Builtin::Cos => "cos",
            Builtin::Log1p => "log1p",
            Builtin::Geometric => "geometric",
            Builtin::Atan => "atan",
        }
    }

    pub fn radius(self) -> f64 {
        match self {
            Builtin::Exp | Builtin::Sin | Builtin::Cos => f64::INFINITY,
            Builtin::Log1p | Builtin::Geometric | Builtin::Atan => 1.0,
        }
    }

    /// Maclaurin coefficient α_n.
    pub fn coefficient(self, n: usize) -> f64 {
        let sign = |k: usize| if k % 2 == 0 { 1.0 } else { -1.0 };
        match self {
            Builtin::Exp => inverse_factorial(n),
            Builtin::Sin => {
                if n % 2 == 1 {
                    sign(n / 2) * inverse_factorial(n)
                } else {
                    0.0
                }
            }
            Builtin::Cos => {
                if n % 2 == 0 {
                    sign(n / 2) * inverse_factorial(n)
                } else {
                    0.0
                }
            }
            Builtin::Log1p => {
                if n == 0 {
                    0.0
                } else {
                    sign(n + 1) / n as f64
                }
            }
            Builtin::Geometric => 1.0,
            Builtin::Atan => {
                if n % 2 == 1 {
                    sign(n / 2) / n as f64
                } else {
                    0.0
                }
            }
        }
    }
}

impl std::str::FromStr for Builtin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Builtin::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::UnknownSeries(s.to_string()))
    }
}

fn inverse_factorial(n: usize) -> f64 {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let mut t = Vec::with_capacity(180);
        let mut fact = 1.0f64;
        t.push(1.0);
        for k in 1..180 {
            fact *= k as f64;
            t.push(1.0 / fact);
        }
        t
    });
    table.get(n).copied().unwrap_or(0.0)
}

#[derive(Debug, Clone, PartialEq)]
enum Source {
    Builtin(Builtin),
    List(Arc<[Scalar]>),
}

/// A power series given by a coefficient rule and a radius of convergence.
///
/// Derivatives are represented by the base series plus a derivative order, so
/// differentiating twice in a row yields the same value as differentiating
/// once with order two.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSeries {
    source: Source,
    order: usize,
    radius: f64,
    radius_approximate: bool,
}

impl PowerSeries {
    pub fn builtin(b: Builtin) -> Self {
        Self {
            source: Source::Builtin(b),
            order: 0,
            radius: b.radius(),
            radius_approximate: false,
        }
    }

    /// A finite coefficient list, i.e. a polynomial. Its radius is infinite.
    pub fn polynomial(coeffs: Vec<Scalar>) -> Result<Self> {
        check_coeffs(&coeffs)?;
        Ok(Self {
            source: Source::List(coeffs.into()),
            order: 0,
            radius: f64::INFINITY,
            radius_approximate: false,
        })
    }

    pub fn real_polynomial(coeffs: &[f64]) -> Result<Self> {
        Self::polynomial(coeffs.iter().map(|&c| Complex64::new(c, 0.0)).collect())
    }

    /// A coefficient list with a user-supplied radius. Coefficients past the
    /// end of the list are zero.
    pub fn with_radius(coeffs: Vec<Scalar>, radius: f64) -> Result<Self> {
        check_coeffs(&coeffs)?;
        if !(radius > 0.0) {
            return Err(Error::InvalidInput(format!(
                "radius must be positive, got {radius}"
            )));
        }
        Ok(Self {
            source: Source::List(coeffs.into()),
            order: 0,
            radius,
            radius_approximate: false,
        })
    }

    /// A coefficient list read as a window onto an infinite series; the radius
    /// is estimated with [`radius_estimate`] and flagged approximate.
    pub fn from_window(coeffs: Vec<Scalar>) -> Result<Self> {
        check_coeffs(&coeffs)?;
        let radius = radius_estimate(&coeffs)?.radius;
        Ok(Self {
            source: Source::List(coeffs.into()),
            order: 0,
            radius,
            radius_approximate: true,
        })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn radius_is_approximate(&self) -> bool {
        self.radius_approximate
    }

    /// Number of derivatives taken from the base series.
    pub fn derivative_order(&self) -> usize {
        self.order
    }

    pub fn builtin_kind(&self) -> Option<Builtin> {
        match self.source {
            Source::Builtin(b) => Some(b),
            Source::List(_) => None,
        }
    }

    pub fn name(&self) -> Option<String> {
        let base = self.builtin_kind()?.name();
        Some(if self.order == 0 {
            base.to_string()
        } else {
            format!("{base}^({})", self.order)
        })
    }

    /// Complex when any coefficient has a nonzero imaginary part.
    pub fn field(&self) -> ScalarField {
        match &self.source {
            Source::List(c) if c.iter().any(|z| z.im != 0.0) => ScalarField::Complex,
            _ => ScalarField::Real,
        }
    }

    /// One past the last index that can hold a nonzero coefficient, when finite.
    pub fn support(&self) -> Option<usize> {
        match &self.source {
            Source::Builtin(_) => None,
            Source::List(c) => Some(c.len().saturating_sub(self.order)),
        }
    }

    fn base_coefficient(&self, n: usize) -> Scalar {
        match &self.source {
            Source::Builtin(b) => Complex64::new(b.coefficient(n), 0.0),
            Source::List(c) => c.get(n).copied().unwrap_or_default(),
        }
    }

    /// Coefficient of λ^n.
    pub fn coefficient(&self, n: usize) -> Scalar {
        let p = self.order;
        if p == 0 {
            return self.base_coefficient(n);
        }
        match self.source {
            Source::Builtin(Builtin::Exp) => Complex64::new(inverse_factorial(n), 0.0),
            // d^p sin = sin, cos, −sin, −cos (period four); likewise for cos.
            Source::Builtin(Builtin::Sin) => periodic_derivative(Builtin::Sin, p, n),
            Source::Builtin(Builtin::Cos) => periodic_derivative(Builtin::Cos, p, n),
            _ => {
                let alpha = self.base_coefficient(n + p);
                if alpha == Complex64::default() {
                    return alpha;
                }
                let falling = (n + 1..=n + p).fold(1.0f64, |acc, k| acc * k as f64);
                alpha * falling
            }
        }
    }

    /// Coefficient of λ^m in `g^{(p)}(λ)/p!`, i.e. `C(m+p, p)·α_{m+p}` of the
    /// underlying series. Computed without forming `p!` so that large `p`
    /// does not overflow.
    pub(crate) fn scaled_derivative_coefficients(&self, p: usize, count: usize) -> Vec<Scalar> {
        let mut out = Vec::with_capacity(count);
        let mut binom = 1.0f64;
        for m in 0..count {
            if m > 0 {
                binom *= (m + p) as f64 / m as f64;
            }
            let alpha = self.coefficient(m + p);
            out.push(if alpha == Complex64::default() {
                alpha
            } else {
                alpha * binom
            });
        }
        out
    }

    /// `ln C(m+p, p) + ln|α_{m+p}|` for the majorant of `g^{(p)}/p!`; `None`
    /// when the coefficient vanishes.
    pub(crate) fn ln_scaled_derivative_abs(
        &self,
        p: usize,
        m: usize,
        ln_binom: f64,
    ) -> Option<f64> {
        let a = self.coefficient(m + p).norm();
        (a > 0.0).then(|| ln_binom + a.ln())
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let obj = v
            .as_object()
            .ok_or_else(|| Error::InvalidInput("series must be a JSON object".into()))?;
        if let Some(name) = obj.get("builtin") {
            let name = name
                .as_str()
                .ok_or_else(|| Error::InvalidInput("builtin must be a string".into()))?;
            return builtin_series(name);
        }
        let coeffs = obj
            .get("coeffs")
            .ok_or_else(|| Error::InvalidInput("series needs 'builtin' or 'coeffs'".into()))?
            .as_array()
            .ok_or_else(|| Error::InvalidInput("coeffs must be an array".into()))?
            .iter()
            .map(crate::json::parse_scalar)
            .collect::<Result<Vec<_>>>()?;
        match obj.get("radius") {
            None | Some(Value::Null) => Self::polynomial(coeffs),
            Some(r) => {
                let r = r
                    .as_f64()
                    .ok_or_else(|| Error::InvalidInput("radius must be a number".into()))?;
                Self::with_radius(coeffs, r)
            }
        }
    }
}

fn periodic_derivative(base: Builtin, p: usize, n: usize) -> Scalar {
    let (other, flips) = match (base, p % 4) {
        (b, 0) => (b, false),
        (Builtin::Sin, 1) => (Builtin::Cos, false),
        (Builtin::Sin, 2) => (Builtin::Sin, true),
        (Builtin::Sin, _) => (Builtin::Cos, true),
        (_, 1) => (Builtin::Sin, true),
        (_, 2) => (Builtin::Cos, true),
        (_, _) => (Builtin::Sin, false),
    };
    let c = other.coefficient(n);
    Complex64::new(if flips { -c } else { c }, 0.0)
}

fn check_coeffs(coeffs: &[Scalar]) -> Result<()> {
    if coeffs.is_empty() {
        return Err(Error::InvalidInput("coefficient list is empty".into()));
    }
    if coeffs
        .iter()
        .any(|z| !z.re.is_finite() || !z.im.is_finite())
    {
        return Err(Error::InvalidInput("coefficients must be finite".into()));
    }
    Ok(())
}

pub fn builtin_series(name: &str) -> Result<PowerSeries> {
    Ok(PowerSeries::builtin(name.parse()?))
}

/// The `p`-th termwise derivative: `β_m = α_{m+p}·(m+p)!/m!`, same radius.
pub fn derivative_series(g: &PowerSeries, p: usize) -> Result<PowerSeries> {
    if p == 0 {
        return Err(Error::InvalidInput(
            "derivative order must be positive".into(),
        ));
    }
    let mut d = g.clone();
    d.order += p;
    Ok(d)
}

/// Which majorant governs the truncation index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundKind {
    /// `Σ_{n>N} |α_n| s^n`
    Value,
    /// `Σ_{n>N} n|α_n| s^{n−1}`
    FirstDerivative,
    /// `Σ_{n>N} n(n−1)|α_n| s^{n−1}`
    SecondOrder,
    /// `s^{−1} Σ_{n>N} |α_n| (3s)^n`
    ThreeS,
}

impl BoundKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundKind::Value => "value",
            BoundKind::FirstDerivative => "first_derivative",
            BoundKind::SecondOrder => "second_order",
            BoundKind::ThreeS => "three_s",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationPolicy {
    pub tolerance: f64,
    pub max_terms: usize,
    pub bound_kind: BoundKind,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_TOLERANCE,
            max_terms: DEFAULT_MAX_TERMS,
            bound_kind: BoundKind::Value,
        }
    }
}

impl TruncationPolicy {
    pub fn new(tolerance: f64, max_terms: usize) -> Result<Self> {
        if !(tolerance > 0.0) || !tolerance.is_finite() {
            return Err(Error::InvalidInput(format!(
                "tolerance must be positive, got {tolerance}"
            )));
        }
        if max_terms == 0 {
            return Err(Error::InvalidInput("max_terms must be positive".into()));
        }
        Ok(Self {
            tolerance,
            max_terms,
            bound_kind: BoundKind::Value,
        })
    }

    pub fn with_bound(self, bound_kind: BoundKind) -> Self {
        Self { bound_kind, ..self }
    }

    pub fn with_tolerance(self, tolerance: f64) -> Self {
        Self { tolerance, ..self }
    }
}

/// Diagnostics attached to every matrix evaluation and differential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalDiagnostics {
    /// Highest series index included (outer index for double sums).
    pub terms_used: usize,
    /// Majorant of the neglected tail, as an operator-norm bound.
    pub tail_bound: f64,
    /// Norm `s` of the argument used in the majorants.
    pub ball_radius_used: f64,
    pub within_radius: bool,
    /// `max_terms` was reached before the tail dropped below tolerance.
    pub cap_hit: bool,
    /// Largest inner truncation index for the double-sum expansions.
    pub inner_terms: Option<usize>,
}

impl EvalDiagnostics {
    pub fn converged(&self, tolerance: f64) -> bool {
        !self.cap_hit && self.tail_bound <= tolerance
    }
}

/// Result of walking a majorant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncation {
    /// Smallest index `N` whose tail estimate is below tolerance.
    pub index: usize,
    pub tail: f64,
    pub cap_hit: bool,
}

/// Walks the nonnegative majorant `term(n)`, `n = 0, 1, …`, and returns the
/// smallest `N` such that the estimated `Σ_{n>N} term(n)` is below `eps`.
///
/// `limit_ratio` is a lower bound imposed on the decay-ratio estimate; passing
/// the asymptotic ratio (`s/R`) keeps the geometric remainder sound for
/// majorants whose ratios increase towards their limit. `support` marks the
/// index past which every term is zero. When `degenerate` is set (argument
/// norm zero) only the first three indices can be nonzero.
pub(crate) fn truncate_majorant(
    mut term: impl FnMut(usize) -> f64,
    limit_ratio: f64,
    support: Option<usize>,
    degenerate: bool,
    eps: f64,
    max_terms: usize,
) -> Truncation {
    let threshold = eps * STOP_FRACTION;
    let mut terms: Vec<f64> = Vec::new();
    let mut last: Option<(usize, f64)> = None;
    let mut prev: Option<(usize, f64)> = None;
    let mut remainder = f64::INFINITY;
    let mut stopped = false;

    let ratio_of = |last: Option<(usize, f64)>, prev: Option<(usize, f64)>| -> Option<f64> {
        let ((j, tj), (i, ti)) = (last?, prev?);
        let r = (tj / ti).powf(1.0 / (j - i) as f64);
        Some(r.max(limit_ratio))
    };

    for n in 0..=max_terms {
        let t = term(n);
        if !t.is_finite() {
            terms.push(f64::INFINITY);
            stopped = false;
            remainder = f64::INFINITY;
            break;
        }
        terms.push(t);
        if t > 0.0 {
            prev = last;
            last = Some((n, t));
        }
        if support.is_some_and(|sup| n + 1 >= sup) || (degenerate && n >= 2) {
            remainder = 0.0;
            stopped = true;
            break;
        }
        if t > 0.0 && t < threshold {
            if let Some(r) = ratio_of(last, prev) {
                // near a peak r is close to 1 and the estimate is loose; keep walking
                if r < 1.0 && t * r / (1.0 - r) < threshold {
                    remainder = t * r / (1.0 - r);
                    stopped = true;
                    break;
                }
            }
        }
    }
    if !stopped && remainder.is_infinite() && terms.last().is_some_and(|t| t.is_finite()) {
        // Cap reached: still report the best available remainder estimate.
        if let (Some(r), Some((_, tj))) = (ratio_of(last, prev), last) {
            if r < 1.0 {
                remainder = tj * r / (1.0 - r);
            }
        }
    }

    // tails[n] = Σ_{k>n} terms[k] + remainder
    let mut tails = vec![0.0; terms.len()];
    let mut acc = remainder;
    for n in (0..terms.len()).rev() {
        tails[n] = acc;
        acc += terms[n];
    }
    match tails.iter().position(|&tail| tail < eps) {
        Some(index) => Truncation {
            index,
            tail: tails[index],
            cap_hit: !stopped,
        },
        None => {
            let index = terms.len().saturating_sub(1);
            Truncation {
                index,
                tail: tails.last().copied().unwrap_or(f64::INFINITY),
                cap_hit: true,
            }
        }
    }
}

/// The analytic majorant term of `kind` for `g` at norm `s`.
pub(crate) fn majorant_term(g: &PowerSeries, kind: BoundKind, s: f64, n: usize) -> f64 {
    let a = g.coefficient(n).norm();
    if a == 0.0 {
        return 0.0;
    }
    let nf = n as f64;
    match kind {
        BoundKind::Value => a * s.powi(n as i32),
        BoundKind::FirstDerivative if n >= 1 => nf * a * s.powi(n as i32 - 1),
        BoundKind::SecondOrder if n >= 2 => nf * (nf - 1.0) * a * s.powi(n as i32 - 1),
        BoundKind::ThreeS if n >= 1 => 3.0 * a * (3.0 * s).powi(n as i32 - 1),
        _ => 0.0,
    }
}

fn admissible_radius(g: &PowerSeries, kind: BoundKind) -> f64 {
    match kind {
        BoundKind::ThreeS => g.radius() / 3.0,
        _ => g.radius(),
    }
}

pub(crate) fn check_radius(g: &PowerSeries, s: f64, kind: BoundKind) -> Result<()> {
    let limit = admissible_radius(g, kind);
    if !(s >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "norm must be nonnegative, got {s}"
        )));
    }
    if s < limit {
        Ok(())
    } else if kind == BoundKind::ThreeS {
        Err(Error::OutsideThirdRadius { norm: s, limit })
    } else {
        Err(Error::OutsideRadius {
            norm: s,
            radius: g.radius(),
        })
    }
}

/// Smallest truncation index whose `policy.bound_kind` tail at norm `s` is
/// below `policy.tolerance`. Hitting `max_terms` is reported in the result.
pub fn choose_truncation(g: &PowerSeries, s: f64, policy: &TruncationPolicy) -> Result<Truncation> {
    let kind = policy.bound_kind;
    check_radius(g, s, kind)?;
    let limit_ratio = if g.radius().is_finite() {
        s / admissible_radius(g, kind)
    } else {
        0.0
    };
    Ok(truncate_majorant(
        |n| majorant_term(g, kind, s, n),
        limit_ratio,
        g.support(),
        s == 0.0,
        policy.tolerance,
        policy.max_terms,
    ))
}

/// Partial sum of `g` at a scalar, truncated by the `Value` majorant.
pub fn eval_scalar(g: &PowerSeries, lambda: Scalar, policy: &TruncationPolicy) -> Result<Scalar> {
    let cut = choose_truncation(g, lambda.norm(), &policy.with_bound(BoundKind::Value))?;
    let mut acc = Complex64::default();
    for n in (0..=cut.index).rev() {
        acc = acc * lambda + g.coefficient(n);
    }
    Ok(acc)
}

/// Cached powers `T^0, T^1, …` of a fixed matrix.
pub(crate) struct Powers {
    base: Mat,
    pows: Vec<Mat>,
}

impl Powers {
    pub(crate) fn new(base: Mat) -> Self {
        let n = base.nrows();
        Self {
            pows: vec![Mat::identity(n, n)],
            base,
        }
    }

    pub(crate) fn base(&self) -> &Mat {
        &self.base
    }

    pub(crate) fn get(&mut self, k: usize) -> &Mat {
        while self.pows.len() <= k {
            let next = self.pows.last().expect("nonempty") * &self.base;
            self.pows.push(next);
        }
        &self.pows[k]
    }

    /// `Σ_{k} coeffs[k]·T^k`.
    pub(crate) fn combine(&mut self, coeffs: &[Scalar]) -> Mat {
        let n = self.base.nrows();
        let mut acc = Mat::zeros(n, n);
        for (k, c) in coeffs.iter().enumerate() {
            if *c != Complex64::default() {
                acc += self.get(k) * *c;
            }
        }
        acc
    }
}

/// `Σ_{n=0}^{N} α_n T^n` with `N` chosen by the `Value` majorant at `s = ‖T‖`.
pub fn eval_matrix(
    g: &PowerSeries,
    t: &MatrixElement,
    policy: &TruncationPolicy,
) -> Result<(MatrixElement, EvalDiagnostics)> {
    let s = t.norm();
    let cut = choose_truncation(g, s, &policy.with_bound(BoundKind::Value))?;
    let field = t.field().join(g.field());
    let coeffs: Vec<Scalar> = (0..=cut.index).map(|n| g.coefficient(n)).collect();
    let value = Powers::new(t.mat().clone()).combine(&coeffs);
    Ok((
        MatrixElement::from_mat(field, value),
        EvalDiagnostics {
            terms_used: cut.index,
            tail_bound: cut.tail,
            ball_radius_used: s,
            within_radius: true,
            cap_hit: cut.cap_hit,
            inner_terms: None,
        },
    ))
}

/// Root-test estimate of the radius from a finite coefficient window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiusEstimate {
    pub radius: f64,
    /// Always true: a finite window cannot determine the radius.
    pub approximate: bool,
}

/// Estimates `1/limsup |α_n|^{1/n}` over the last 20% of the window. Estimates
/// that grow by more than 10% across the window are reported as infinite;
/// an all-zero window is infinite.
pub fn radius_estimate(coeffs: &[Scalar]) -> Result<RadiusEstimate> {
    if coeffs.is_empty() {
        return Err(Error::InvalidInput("coefficient list is empty".into()));
    }
    let len = coeffs.len();
    let window = (len / 5).max(1);
    let start = (len - window).max(1);
    let roots: Vec<f64> = (start..len)
        .filter_map(|n| {
            let a = coeffs[n].norm();
            (a > 0.0).then(|| a.powf(-1.0 / n as f64))
        })
        .collect();
    let radius = match (roots.first(), roots.last()) {
        (None, _) | (_, None) => {
            // nothing nonzero in the window: fall back to the whole list
            if coeffs[1..].iter().all(|z| z.norm() == 0.0) {
                f64::INFINITY
            } else {
                (1..len)
                    .filter_map(|n| {
                        let a = coeffs[n].norm();
                        (a > 0.0).then(|| a.powf(-1.0 / n as f64))
                    })
                    .fold(f64::INFINITY, f64::min)
            }
        }
        (Some(&first), Some(&last))
            if roots.len() >= 2 && last > INFINITE_RADIUS_SPREAD * first =>
        {
            f64::INFINITY
        }
        _ => roots.iter().copied().fold(f64::INFINITY, f64::min),
    };
    Ok(RadiusEstimate {
        radius,
        approximate: true,
    })
}
