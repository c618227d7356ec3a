//! Reference computations of `g^[1](T)(h)` that do not go through the
//! commutator expansions.
//!
//! The block-triangular identity
//!
//! ```text
//! g([[T, h], [0, T]]) = [[g(T), g^[1](T)(h)], [0, g(T)]]
//! ```
//!
//! is standard matrix-function theory imported from outside this crate's
//! derivations. It serves as an external oracle, so a disagreement with it
//! points at the expansions rather than at the oracle.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::algebra::{check_compatible, MatrixElement, ScalarField};
use crate::error::{Error, Result};
use crate::frechet::monomial_differential;
use crate::series::{
    check_radius, choose_truncation, eval_matrix, BoundKind, PowerSeries, Powers, TruncationPolicy,
};

/// Default finite-difference step.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OracleKind {
    CentralFiniteDifference,
    BlockTriangular,
    /// Only meaningful for the geometric series.
    ResolventClosedForm,
    PolynomialExpansion,
}

impl OracleKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OracleKind::CentralFiniteDifference => "central_finite_difference",
            OracleKind::BlockTriangular => "block_triangular",
            OracleKind::ResolventClosedForm => "resolvent_closed_form",
            OracleKind::PolynomialExpansion => "polynomial_expansion",
        }
    }
}

/// `[g(T + δh) − g(T − δh)] / (2δ)`.
pub fn fd_differential(
    g: &PowerSeries,
    t: &MatrixElement,
    h: &MatrixElement,
    delta: f64,
    policy: &TruncationPolicy,
) -> Result<MatrixElement> {
    check_compatible(t, h)?;
    if !(delta > 0.0) {
        return Err(Error::InvalidInput(format!(
            "step must be positive, got {delta}"
        )));
    }
    check_radius(g, t.norm() + delta * h.norm(), BoundKind::Value)?;
    let step = h.scale(delta);
    let (plus, _) = eval_matrix(g, &t.add(&step)?, policy)?;
    let (minus, _) = eval_matrix(g, &t.sub(&step)?, policy)?;
    Ok(plus.sub(&minus)?.scale(0.5 / delta))
}

/// Upper-right block of `g([[T, γh], [0, T]])`, divided by `γ = 0.1/max(1, ‖h‖)`.
///
/// Powers of the block matrix carry `u_n^[1](T)(γh)` in their upper-right
/// block, so the neglected part of that block is bounded by the
/// first-derivative majorant at `s = ‖T‖` times `γ‖h‖`; the truncation index
/// is chosen from it.
pub fn block_triangular_differential(
    g: &PowerSeries,
    t: &MatrixElement,
    h: &MatrixElement,
    policy: &TruncationPolicy,
) -> Result<MatrixElement> {
    check_compatible(t, h)?;
    let s = t.norm();
    check_radius(g, s, BoundKind::FirstDerivative)?;
    let gamma = 0.1 / h.norm().max(1.0);
    let block = MatrixElement::upper_block_triangular(t, &h.scale(gamma))?;
    let cut = choose_truncation(g, s, &policy.with_bound(BoundKind::FirstDerivative))?;
    let coeffs: Vec<Complex64> = (0..=cut.index).map(|n| g.coefficient(n)).collect();
    let field = t.field().join(g.field());
    let full = MatrixElement::from_mat(field, Powers::new(block.mat().clone()).combine(&coeffs));
    Ok(full.block(0, t.dim(), t.dim())?.scale(1.0 / gamma))
}

/// `(I − T)^{-1} h (I − T)^{-1}` by two LU solves.
pub fn resolvent_differential(t: &MatrixElement, h: &MatrixElement) -> Result<MatrixElement> {
    check_compatible(t, h)?;
    if t.norm() >= 1.0 {
        return Err(Error::OutsideRadius {
            norm: t.norm(),
            radius: 1.0,
        });
    }
    let n = t.dim();
    let a: DMatrix<Complex64> = DMatrix::identity(n, n) - t.mat();
    let lu = a.clone().lu();
    // X = (I − T)^{-1} h
    let x = lu.solve(h.mat()).ok_or(Error::Singular)?;
    // Y (I − T) = X  ⇔  (I − T)ᵀ Yᵀ = Xᵀ
    let yt = a
        .transpose()
        .lu()
        .solve(&x.transpose())
        .ok_or(Error::Singular)?;
    Ok(MatrixElement::from_mat(t.field(), yt.transpose()))
}

/// `Σ_n α_n u_n^[1](T)(h)` for a finite coefficient list, no truncation.
pub fn polynomial_differential(
    coeffs: &[Complex64],
    t: &MatrixElement,
    h: &MatrixElement,
) -> Result<MatrixElement> {
    check_compatible(t, h)?;
    let complex = coeffs.iter().any(|c| c.im != 0.0);
    let field = if complex {
        ScalarField::Complex
    } else {
        t.field()
    };
    let mut acc = MatrixElement::zeros(t.dim(), field)?;
    for (n, &a) in coeffs.iter().enumerate().skip(1) {
        if a != Complex64::default() {
            let term = monomial_differential(n, t, h)?
                .scale_complex(a)
                .to_field(field)?;
            acc = acc.add(&term)?;
        }
    }
    Ok(acc)
}
