//! Dense square matrices over ℝ or ℂ viewed as a unital Banach algebra.
//!
//! The norm is the Frobenius norm, which is submultiplicative. Entries are
//! stored as complex doubles in both fields; a real matrix keeps every
//! imaginary part at zero, and binary operations between fields are refused.
//!
//! # Operator naming
//!
//! The multiplication operators follow the convention
//!
//! ```text
//! ℛ(T): h ↦ T h      (apply_right: T multiplies h from the LEFT)
//! 𝓛(T): h ↦ h T      (apply_left:  T multiplies h from the RIGHT)
//! C(T) = 𝓛(T) − ℛ(T): h ↦ h T − T h
//! ```
//!
//! so the name of each function refers to the operator symbol and **not**
//! to the side on which `T` ends up. `apply_left(T, h)` returns `h·T`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};

/// Scalar type for all entries and series coefficients.
pub type Scalar = Complex64;

pub(crate) type Mat = DMatrix<Complex64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScalarField {
    Real,
    Complex,
}

impl ScalarField {
    pub fn as_str(self) -> &'static str {
        match self {
            ScalarField::Real => "real",
            ScalarField::Complex => "complex",
        }
    }

    /// The smallest field containing both.
    pub fn join(self, other: ScalarField) -> ScalarField {
        if self == ScalarField::Complex || other == ScalarField::Complex {
            ScalarField::Complex
        } else {
            ScalarField::Real
        }
    }
}

impl std::str::FromStr for ScalarField {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real" => Ok(ScalarField::Real),
            "complex" => Ok(ScalarField::Complex),
            other => Err(Error::InvalidInput(format!("unknown field '{other}'"))),
        }
    }
}

/// A square matrix of positive dimension tagged with its scalar field.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixElement {
    field: ScalarField,
    data: Mat,
}

impl MatrixElement {
    pub(crate) fn from_mat(field: ScalarField, data: Mat) -> Self {
        debug_assert!(data.is_square() && data.nrows() > 0);
        Self { field, data }
    }

    /// Builds a real matrix from row-major entries.
    pub fn from_real(dim: usize, entries: &[f64]) -> Result<Self> {
        check_len(dim, entries.len())?;
        let data =
            Mat::from_row_iterator(dim, dim, entries.iter().map(|&x| Complex64::new(x, 0.0)));
        Ok(Self {
            field: ScalarField::Real,
            data,
        })
    }

    /// Builds a complex matrix from row-major entries.
    pub fn from_complex(dim: usize, entries: &[Complex64]) -> Result<Self> {
        check_len(dim, entries.len())?;
        let data = Mat::from_row_iterator(dim, dim, entries.iter().copied());
        Ok(Self {
            field: ScalarField::Complex,
            data,
        })
    }

    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidInput("matrix rows must form a square".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_real(dim, &flat)
    }

    pub fn zeros(dim: usize, field: ScalarField) -> Result<Self> {
        check_len(dim, dim * dim)?;
        Ok(Self {
            field,
            data: Mat::zeros(dim, dim),
        })
    }

    pub fn identity(dim: usize, field: ScalarField) -> Result<Self> {
        check_len(dim, dim * dim)?;
        Ok(Self {
            field,
            data: Mat::identity(dim, dim),
        })
    }

    /// Entries drawn uniformly from [−1, 1]; complex matrices draw both parts.
    pub fn random<R: Rng + ?Sized>(dim: usize, field: ScalarField, rng: &mut R) -> Result<Self> {
        check_len(dim, dim * dim)?;
        let data = Mat::from_fn(dim, dim, |_, _| match field {
            ScalarField::Real => Complex64::new(rng.random_range(-1.0..=1.0), 0.0),
            ScalarField::Complex => {
                Complex64::new(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0))
            }
        });
        Ok(Self { field, data })
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn field(&self) -> ScalarField {
        self.field
    }

    pub fn entry(&self, row: usize, col: usize) -> Scalar {
        self.data[(row, col)]
    }

    /// Row-major copy of the entries.
    pub fn entries(&self) -> Vec<Scalar> {
        let n = self.dim();
        (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|ij| self.data[ij])
            .collect()
    }

    pub(crate) fn mat(&self) -> &Mat {
        &self.data
    }

    pub(crate) fn into_mat(self) -> Mat {
        self.data
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        algebra_norm(self)
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|z| *z == Complex64::new(0.0, 0.0))
    }

    /// Reinterprets the matrix over a larger field. Narrowing to ℝ is refused
    /// when an entry has a nonzero imaginary part.
    pub fn to_field(&self, field: ScalarField) -> Result<Self> {
        if field == ScalarField::Real && self.data.iter().any(|z| z.im != 0.0) {
            return Err(Error::FieldMismatch(self.field.as_str(), field.as_str()));
        }
        Ok(Self {
            field,
            data: self.data.clone(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        check_compatible(self, other)?;
        Ok(Self {
            field: self.field,
            data: &self.data + &other.data,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        check_compatible(self, other)?;
        Ok(Self {
            field: self.field,
            data: &self.data - &other.data,
        })
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        mat_mul(self, other)
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            field: self.field,
            data: &self.data * Complex64::new(factor, 0.0),
        }
    }

    /// Multiplies by a complex scalar, promoting a real matrix when the
    /// scalar has a nonzero imaginary part.
    pub fn scale_complex(&self, factor: Scalar) -> Self {
        let field = if factor.im != 0.0 {
            ScalarField::Complex
        } else {
            self.field
        };
        Self {
            field,
            data: &self.data * factor,
        }
    }

    /// Assembles the block matrix `[[a, b], [0, a]]` of twice the dimension.
    pub fn upper_block_triangular(a: &Self, b: &Self) -> Result<Self> {
        check_compatible(a, b)?;
        let n = a.dim();
        let mut data = Mat::zeros(2 * n, 2 * n);
        data.view_mut((0, 0), (n, n)).copy_from(&a.data);
        data.view_mut((n, n), (n, n)).copy_from(&a.data);
        data.view_mut((0, n), (n, n)).copy_from(&b.data);
        Ok(Self {
            field: a.field,
            data,
        })
    }

    /// Square sub-block of size `size` starting at `(row, col)`.
    pub fn block(&self, row: usize, col: usize, size: usize) -> Result<Self> {
        if size == 0 || row + size > self.dim() || col + size > self.dim() {
            return Err(Error::InvalidInput(format!(
                "block ({row}, {col}) of size {size} out of range for dim {}",
                self.dim()
            )));
        }
        Ok(Self {
            field: self.field,
            data: self.data.view((row, col), (size, size)).into_owned(),
        })
    }
}

fn check_len(dim: usize, len: usize) -> Result<()> {
    if dim == 0 {
        return Err(Error::InvalidInput(
            "matrix dimension must be positive".into(),
        ));
    }
    if len != dim * dim {
        return Err(Error::InvalidInput(format!(
            "expected {} entries for dim {dim}, got {len}",
            dim * dim
        )));
    }
    Ok(())
}

pub(crate) fn check_compatible(a: &MatrixElement, b: &MatrixElement) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(a.dim(), b.dim()));
    }
    if a.field != b.field {
        return Err(Error::FieldMismatch(a.field.as_str(), b.field.as_str()));
    }
    Ok(())
}

/// Entrywise standard matrix product `A·B`.
pub fn mat_mul(a: &MatrixElement, b: &MatrixElement) -> Result<MatrixElement> {
    check_compatible(a, b)?;
    Ok(MatrixElement {
        field: a.field,
        data: &a.data * &b.data,
    })
}

/// Frobenius norm `sqrt(Σ |a_ij|²)`.
pub fn algebra_norm(a: &MatrixElement) -> f64 {
    a.data.norm()
}

/// 𝓛(T)(h) = h·T.
///
/// Note the side: the operator named "left" puts `T` on the right of `h`.
pub fn apply_left(t: &MatrixElement, h: &MatrixElement) -> Result<MatrixElement> {
    mat_mul(h, t)
}

/// ℛ(T)(h) = T·h.
///
/// Note the side: the operator named "right" puts `T` on the left of `h`.
pub fn apply_right(t: &MatrixElement, h: &MatrixElement) -> Result<MatrixElement> {
    mat_mul(t, h)
}

/// C(T)(h) = h·T − T·h.
pub fn apply_commutant(t: &MatrixElement, h: &MatrixElement) -> Result<MatrixElement> {
    check_compatible(t, h)?;
    Ok(MatrixElement {
        field: t.field,
        data: commutant(&t.data, &h.data),
    })
}

/// C(T)^p(h) by `p` nested applications of [`apply_commutant`].
pub fn apply_commutant_power(
    t: &MatrixElement,
    h: &MatrixElement,
    p: usize,
) -> Result<MatrixElement> {
    check_compatible(t, h)?;
    let mut k = h.data.clone();
    for _ in 0..p {
        k = commutant(&t.data, &k);
    }
    Ok(MatrixElement {
        field: t.field,
        data: k,
    })
}

pub(crate) fn commutant(t: &Mat, h: &Mat) -> Mat {
    h * t - t * h
}

/// Open ball `B_s(0)` in the Frobenius norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallSpec {
    pub radius: f64,
}

impl BallSpec {
    pub fn new(radius: f64) -> Result<Self> {
        if !(radius >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "ball radius must be nonnegative, got {radius}"
            )));
        }
        Ok(Self { radius })
    }

    pub fn contains(&self, t: &MatrixElement) -> bool {
        t.norm() < self.radius
    }
}
