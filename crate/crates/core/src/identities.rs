//! Executable forms of the algebraic identities behind the commutator
//! expansions. Each function returns both sides so callers can measure the
//! residual themselves; [`run_identity_suite`] does that over random inputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::algebra::{
    apply_commutant_power, check_compatible, commutant, Mat, MatrixElement, ScalarField,
};
use crate::error::{Error, Result};
use crate::json::{matrix_to_json, Json};

/// Largest `n` for which [`binomial`] is guaranteed not to overflow `u64`.
pub const MAX_EXACT_BINOMIAL_N: usize = 60;

fn bracket(a: &Mat, b: &Mat) -> Mat {
    a * b - b * a
}

fn pair(field: ScalarField, lhs: Mat, rhs: Mat) -> (MatrixElement, MatrixElement) {
    (
        MatrixElement::from_mat(field, lhs),
        MatrixElement::from_mat(field, rhs),
    )
}

/// `[A_1⋯A_{n+1}, B]` against `Σ_{s=0}^{n} (A_1⋯A_s)[A_{s+1}, B](A_{s+2}⋯A_{n+1})`,
/// with empty products read as the identity and `[X, Y] = XY − YX`.
pub fn product_commutator_expansion(
    factors: &[MatrixElement],
    b: &MatrixElement,
) -> Result<(MatrixElement, MatrixElement)> {
    if factors.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least two factors, got {}",
            factors.len()
        )));
    }
    for a in factors {
        check_compatible(a, b)?;
    }
    let dim = b.dim();
    let identity = Mat::identity(dim, dim);
    // prefix[s] = A_1⋯A_s, suffix[s] = A_{s+1}⋯A_{n+1}
    let mut prefix = vec![identity.clone()];
    for a in factors {
        let next = prefix.last().expect("nonempty") * a.mat();
        prefix.push(next);
    }
    let mut suffix = vec![identity; factors.len() + 1];
    for s in (0..factors.len()).rev() {
        suffix[s] = factors[s].mat() * &suffix[s + 1];
    }
    let lhs = bracket(&prefix[factors.len()], b.mat());
    let mut rhs = Mat::zeros(dim, dim);
    for s in 0..factors.len() {
        rhs += &prefix[s] * bracket(factors[s].mat(), b.mat()) * &suffix[s + 1];
    }
    Ok(pair(b.field(), lhs, rhs))
}

/// `C(T^{n+1})(h)` against `Σ_{s=0}^{n} T^s (hT − Th) T^{n−s}`.
pub fn power_commutant_decomposition(
    t: &MatrixElement,
    h: &MatrixElement,
    n: usize,
) -> Result<(MatrixElement, MatrixElement)> {
    check_compatible(t, h)?;
    let powers = powers_of(t.mat(), n + 1);
    let lhs = commutant(&powers[n + 1], h.mat());
    let ch = commutant(t.mat(), h.mat());
    let dim = t.dim();
    let mut rhs = Mat::zeros(dim, dim);
    for s in 0..=n {
        rhs += &powers[s] * &ch * &powers[n - s];
    }
    Ok(pair(t.field(), lhs, rhs))
}

/// Nested `C(T)^n(h)` against `Σ_{k=0}^{n} (−1)^k C(n,k) T^k h T^{n−k}`.
pub fn commutant_power_binomial(
    t: &MatrixElement,
    h: &MatrixElement,
    n: usize,
) -> Result<(MatrixElement, MatrixElement)> {
    let lhs = apply_commutant_power(t, h, n)?;
    let powers = powers_of(t.mat(), n);
    let dim = t.dim();
    let mut rhs = Mat::zeros(dim, dim);
    for k in 0..=n {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let c = sign * binomial_f64(n, k);
        rhs += &powers[k] * h.mat() * &powers[n - k] * num_complex::Complex64::new(c, 0.0);
    }
    Ok((lhs, MatrixElement::from_mat(t.field(), rhs)))
}

/// `Σ_{p=s}^{n} C(p−1, s−1)` against `C(n, s)`, in exact integers.
pub fn binomial_sum_identity(n: usize, s: usize) -> Result<(u64, u64)> {
    if s < 1 || s > n {
        return Err(Error::InvalidInput(format!(
            "need 1 <= s <= n, got n = {n}, s = {s}"
        )));
    }
    if n > MAX_EXACT_BINOMIAL_N {
        return Err(Error::InvalidInput(format!(
            "n = {n} exceeds {MAX_EXACT_BINOMIAL_N}"
        )));
    }
    let mut lhs = 0u64;
    for p in s..=n {
        lhs = lhs
            .checked_add(binomial(p - 1, s - 1)?)
            .ok_or_else(|| Error::InvalidInput("binomial sum overflows u64".into()))?;
    }
    Ok((lhs, binomial(n, s)?))
}

/// `Σ_{p=1}^{n} C(n,p) T^{n−p} C(T)^{p−1}(h)` against `Σ_{s=1}^{n} T^{n−s} h T^{s−1}`.
pub fn operator_sum_identity(
    t: &MatrixElement,
    h: &MatrixElement,
    n: usize,
) -> Result<(MatrixElement, MatrixElement)> {
    if n < 1 {
        return Err(Error::InvalidInput("n must be at least 1".into()));
    }
    check_compatible(t, h)?;
    let powers = powers_of(t.mat(), n);
    let dim = t.dim();
    let mut lhs = Mat::zeros(dim, dim);
    let mut nested = h.mat().clone();
    for p in 1..=n {
        lhs += &powers[n - p] * &nested * num_complex::Complex64::new(binomial_f64(n, p), 0.0);
        nested = commutant(t.mat(), &nested);
    }
    let mut rhs = Mat::zeros(dim, dim);
    for s in 1..=n {
        rhs += &powers[n - s] * h.mat() * &powers[s - 1];
    }
    Ok(pair(t.field(), lhs, rhs))
}

fn powers_of(t: &Mat, n: usize) -> Vec<Mat> {
    let dim = t.nrows();
    let mut out = vec![Mat::identity(dim, dim)];
    for k in 1..=n {
        let next = &out[k - 1] * t;
        out.push(next);
    }
    out
}

/// Exact binomial coefficient from Pascal's recurrence with overflow checks.
pub fn binomial(n: usize, k: usize) -> Result<u64> {
    if k > n {
        return Ok(0);
    }
    if n > MAX_EXACT_BINOMIAL_N {
        return Err(Error::InvalidInput(format!(
            "n = {n} exceeds {MAX_EXACT_BINOMIAL_N}"
        )));
    }
    let mut row = vec![1u64];
    for i in 1..=n {
        let mut next = vec![1u64; i + 1];
        for j in 1..i {
            next[j] = row[j - 1]
                .checked_add(row[j])
                .ok_or_else(|| Error::InvalidInput("binomial overflows u64".into()))?;
        }
        row = next;
    }
    Ok(row[k])
}

fn binomial_f64(n: usize, k: usize) -> f64 {
    // exact up to the u64 range; only small n are used in the identities
    binomial(n, k)
        .map(|b| b as f64)
        .unwrap_or_else(|_| (1..=k).fold(1.0, |acc, i| acc * (n + 1 - i) as f64 / i as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IdentityName {
    ProductCommutatorExpansion,
    PowerCommutantDecomposition,
    CommutantPowerBinomial,
    BinomialSum,
    OperatorSum,
}

impl IdentityName {
    pub const ALL: [IdentityName; 5] = [
        IdentityName::ProductCommutatorExpansion,
        IdentityName::PowerCommutantDecomposition,
        IdentityName::CommutantPowerBinomial,
        IdentityName::BinomialSum,
        IdentityName::OperatorSum,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            IdentityName::ProductCommutatorExpansion => "product_commutator_expansion",
            IdentityName::PowerCommutantDecomposition => "power_commutant_decomposition",
            IdentityName::CommutantPowerBinomial => "commutant_power_binomial",
            IdentityName::BinomialSum => "binomial_sum_identity",
            IdentityName::OperatorSum => "operator_sum_identity",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityReport {
    pub identity: IdentityName,
    /// Maximum over trials of `‖LHS − RHS‖`.
    pub max_abs_residual: f64,
    /// Maximum over trials of `‖LHS − RHS‖ / (1 + ∏ input norms)`.
    pub max_scaled_residual: f64,
    pub trials: usize,
    /// Inputs of the trial with the largest scaled residual.
    pub worst_case: Option<Vec<MatrixElement>>,
}

impl IdentityReport {
    fn new(identity: IdentityName, trials: usize) -> Self {
        Self {
            identity,
            max_abs_residual: 0.0,
            max_scaled_residual: 0.0,
            trials,
            worst_case: None,
        }
    }

    fn record(
        &mut self,
        lhs: &MatrixElement,
        rhs: &MatrixElement,
        norm_product: f64,
        inputs: &[&MatrixElement],
    ) {
        let residual = (lhs.mat() - rhs.mat()).norm();
        let scaled = residual / (1.0 + norm_product);
        self.max_abs_residual = self.max_abs_residual.max(residual);
        if scaled > self.max_scaled_residual || self.worst_case.is_none() {
            self.max_scaled_residual = self.max_scaled_residual.max(scaled);
            self.worst_case = Some(inputs.iter().map(|m| (*m).clone()).collect());
        }
    }

    pub fn to_json(&self) -> Json {
        let worst = match &self.worst_case {
            Some(ms) => Json::Array(ms.iter().map(matrix_to_json).collect()),
            None => Json::Null,
        };
        Json::object([
            ("identity", Json::str(self.identity.as_str())),
            ("max_abs_residual", Json::Float(self.max_abs_residual)),
            ("max_scaled_residual", Json::Float(self.max_scaled_residual)),
            ("trials", Json::Int(self.trials as i64)),
            ("worst_case", worst),
        ])
    }
}

/// Largest exponent drawn for the power identities.
const SUITE_MAX_POWER: usize = 10;
/// Largest `n` drawn for the integer binomial identity.
const SUITE_MAX_BINOMIAL_N: usize = 40;

/// Runs all five identities `trials` times on seeded random inputs with
/// entries uniform in [−1, 1]. The same seed always yields the same reports.
pub fn run_identity_suite(
    trials: usize,
    dim: usize,
    seed: u64,
    field: ScalarField,
) -> Result<Vec<IdentityReport>> {
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reports: Vec<IdentityReport> = IdentityName::ALL
        .iter()
        .map(|&n| IdentityReport::new(n, trials))
        .collect();

    for _ in 0..trials {
        let t = MatrixElement::random(dim, field, &mut rng)?;
        let h = MatrixElement::random(dim, field, &mut rng)?;
        let (tn, hn) = (t.norm(), h.norm());

        let count = rng.random_range(2..=5);
        let factors = (0..count)
            .map(|_| MatrixElement::random(dim, field, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let (l, r) = product_commutator_expansion(&factors, &h)?;
        let norm_product = factors.iter().map(MatrixElement::norm).product::<f64>() * hn;
        let mut inputs: Vec<&MatrixElement> = factors.iter().collect();
        inputs.push(&h);
        reports[0].record(&l, &r, norm_product, &inputs);

        let n = rng.random_range(0..=SUITE_MAX_POWER);
        let (l, r) = power_commutant_decomposition(&t, &h, n)?;
        reports[1].record(&l, &r, tn.powi(n as i32 + 1) * hn, &[&t, &h]);

        let n = rng.random_range(0..=SUITE_MAX_POWER);
        let (l, r) = commutant_power_binomial(&t, &h, n)?;
        reports[2].record(&l, &r, tn.powi(n as i32) * hn, &[&t, &h]);

        let n = rng.random_range(1..=SUITE_MAX_BINOMIAL_N);
        let s = rng.random_range(1..=n);
        let (l, r) = binomial_sum_identity(n, s)?;
        let diff = l.abs_diff(r) as f64;
        let report = &mut reports[3];
        report.max_abs_residual = report.max_abs_residual.max(diff);
        report.max_scaled_residual = report.max_scaled_residual.max(diff);

        let n = rng.random_range(1..=SUITE_MAX_POWER);
        let (l, r) = operator_sum_identity(&t, &h, n)?;
        reports[4].record(&l, &r, tn.powi(n as i32 - 1) * hn, &[&t, &h]);
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(entries: &[f64]) -> MatrixElement {
        let dim = (entries.len() as f64).sqrt() as usize;
        MatrixElement::from_real(dim, entries).unwrap()
    }

    fn rand_mats(count: usize, dim: usize, seed: u64) -> Vec<MatrixElement> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| MatrixElement::random(dim, ScalarField::Real, &mut rng).unwrap())
            .collect()
    }

    fn residual((l, r): (MatrixElement, MatrixElement)) -> f64 {
        (l.mat() - r.mat()).norm()
    }

    #[test]
    fn product_expansion_two_factors_is_exact() {
        let ms = rand_mats(3, 3, 1);
        let (l, r) = product_commutator_expansion(&ms[..2], &ms[2]).unwrap();
        // A1[A2,B] + [A1,B]A2 written out by hand
        let (a1, a2, b) = (ms[0].mat(), ms[1].mat(), ms[2].mat());
        let by_hand = a1 * (a2 * b - b * a2) + (a1 * b - b * a1) * a2;
        assert!((r.mat() - by_hand).norm() < 1e-15);
        assert!((l.mat() - r.mat()).norm() < 1e-14);
        assert!(product_commutator_expansion(&ms[..1], &ms[2]).is_err());
    }

    #[test]
    fn product_expansion_with_identities() {
        let id = MatrixElement::identity(3, ScalarField::Real).unwrap();
        let b = rand_mats(1, 3, 2).remove(0);
        let (l, r) = product_commutator_expansion(&[id.clone(), id.clone(), id], &b).unwrap();
        assert!(l.is_zero() && r.is_zero());
    }

    #[test]
    fn product_expansion_three_random_factors() {
        let ms = rand_mats(4, 3, 3);
        assert!(residual(product_commutator_expansion(&ms[..3], &ms[3]).unwrap()) <= 1e-13);
    }

    #[test]
    fn power_decomposition_examples() {
        let ms = rand_mats(2, 4, 4);
        let (l, r) = power_commutant_decomposition(&ms[0], &ms[1], 0).unwrap();
        assert_eq!(l, r);
        let t = m(&[0.0, 1.0, 0.0, 0.0]);
        let h = m(&[1.0, 2.0, 3.0, 4.0]);
        let (l, r) = power_commutant_decomposition(&t, &h, 1).unwrap();
        // T² = 0: lhs vanishes, rhs = T(hT − Th) + (hT − Th)T = ThT − ThT
        assert!(l.is_zero());
        assert_eq!(l, r);
        assert!(residual(power_commutant_decomposition(&ms[0], &ms[1], 5).unwrap()) <= 1e-12);
    }

    #[test]
    fn commutant_binomial_examples() {
        let ms = rand_mats(2, 3, 5);
        let (l, r) = commutant_power_binomial(&ms[0], &ms[1], 0).unwrap();
        assert_eq!(l, ms[1]);
        assert_eq!(l, r);
        let (l, r) = commutant_power_binomial(&ms[0], &ms[1], 1).unwrap();
        assert!((l.mat() - r.mat()).norm() < 1e-15);
        assert!(residual(commutant_power_binomial(&ms[0], &ms[1], 4).unwrap()) <= 1e-12);
    }

    #[test]
    fn binomial_sum_examples() {
        assert_eq!(binomial_sum_identity(5, 5).unwrap(), (1, 1));
        assert_eq!(binomial_sum_identity(4, 2).unwrap(), (6, 6));
        assert_eq!(binomial_sum_identity(20, 7).unwrap(), (77520, 77520));
        assert!(binomial_sum_identity(3, 0).is_err());
        assert!(binomial_sum_identity(3, 4).is_err());
    }

    #[test]
    fn binomial_sum_exact_up_to_forty() {
        for n in 1..=40 {
            for s in 1..=n {
                let (l, r) = binomial_sum_identity(n, s).unwrap();
                assert_eq!(l, r, "n = {n}, s = {s}");
            }
        }
    }

    #[test]
    fn binomial_overflow_guard() {
        assert_eq!(binomial(60, 30).unwrap(), 118264581564861424);
        assert!(binomial(61, 30).is_err());
        assert_eq!(binomial(3, 5).unwrap(), 0);
    }

    #[test]
    fn operator_sum_examples() {
        let ms = rand_mats(2, 3, 6);
        let (l, r) = operator_sum_identity(&ms[0], &ms[1], 1).unwrap();
        assert_eq!(l, ms[1]);
        assert_eq!(r, ms[1]);
        let (l, r) = operator_sum_identity(&ms[0], &ms[1], 2).unwrap();
        let (t, h) = (ms[0].mat(), ms[1].mat());
        assert!((r.mat() - (h * t + t * h)).norm() < 1e-15);
        assert!((l.mat() - r.mat()).norm() < 1e-14);
        assert!(residual(operator_sum_identity(&ms[0], &ms[1], 6).unwrap()) <= 1e-11);
    }

    #[test]
    fn suite_scalar_case() {
        let reports = run_identity_suite(1, 1, 0, ScalarField::Real).unwrap();
        assert_eq!(reports.len(), 5);
        for r in &reports {
            assert!(r.max_scaled_residual <= 1e-15, "{:?}", r);
        }
    }

    #[test]
    fn suite_is_deterministic() {
        let a = run_identity_suite(5, 3, 9, ScalarField::Complex).unwrap();
        let b = run_identity_suite(5, 3, 9, ScalarField::Complex).unwrap();
        assert_eq!(a, b);
        assert!(run_identity_suite(0, 3, 9, ScalarField::Real).is_err());
    }

    #[test]
    fn suite_examples() {
        for r in run_identity_suite(100, 4, 42, ScalarField::Real).unwrap() {
            assert!(r.max_scaled_residual <= 1e-11, "{:?}", r.identity);
        }
        for r in run_identity_suite(100, 6, 7, ScalarField::Complex).unwrap() {
            assert!(r.max_scaled_residual <= 1e-10, "{:?}", r.identity);
        }
    }
}
