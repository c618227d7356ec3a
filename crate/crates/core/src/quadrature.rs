//! Adaptive Simpson quadrature for matrix-valued integrands.

use crate::algebra::Mat;
use crate::error::Result;

pub(crate) const DEFAULT_ABS_TOL: f64 = 1e-10;
pub(crate) const DEFAULT_MAX_DEPTH: usize = 30;

pub(crate) struct Quadrature {
    pub value: Mat,
    pub evaluations: usize,
}

struct Panel {
    a: f64,
    b: f64,
    fa: Mat,
    fm: Mat,
    fb: Mat,
    whole: Mat,
}

/// `∫_a^b f(t) dt`, accepting a panel once the Frobenius norm of the
/// difference between the one- and two-panel Simpson estimates is at most
/// `15·tol` (with `tol` halved at each split) or the depth limit is reached.
/// Works for `b < a` as well.
pub(crate) fn adaptive_simpson<F>(
    mut f: F,
    a: f64,
    b: f64,
    tol: f64,
    max_depth: usize,
) -> Result<Quadrature>
where
    F: FnMut(f64) -> Result<Mat>,
{
    let mut evaluations = 3;
    let fa = f(a)?;
    let fb = f(b)?;
    let m = 0.5 * (a + b);
    let fm = f(m)?;
    let whole = simpson(a, b, &fa, &fm, &fb);
    let panel = Panel {
        a,
        b,
        fa,
        fm,
        fb,
        whole,
    };
    let value = refine(&mut f, panel, tol, max_depth, &mut evaluations)?;
    Ok(Quadrature { value, evaluations })
}

fn simpson(a: f64, b: f64, fa: &Mat, fm: &Mat, fb: &Mat) -> Mat {
    (fa + fm * num_complex::Complex64::new(4.0, 0.0) + fb)
        * num_complex::Complex64::new((b - a) / 6.0, 0.0)
}

fn refine<F>(f: &mut F, p: Panel, tol: f64, depth: usize, evaluations: &mut usize) -> Result<Mat>
where
    F: FnMut(f64) -> Result<Mat>,
{
    let m = 0.5 * (p.a + p.b);
    let lm = 0.5 * (p.a + m);
    let rm = 0.5 * (m + p.b);
    let flm = f(lm)?;
    let frm = f(rm)?;
    *evaluations += 2;
    let left = simpson(p.a, m, &p.fa, &flm, &p.fm);
    let right = simpson(m, p.b, &p.fm, &frm, &p.fb);
    let both = &left + &right;
    let delta = &both - &p.whole;
    if depth == 0 || delta.norm() <= 15.0 * tol {
        return Ok(both + delta / num_complex::Complex64::new(15.0, 0.0));
    }
    let lp = Panel {
        a: p.a,
        b: m,
        fa: p.fa,
        fm: flm,
        fb: p.fm.clone(),
        whole: left,
    };
    let rp = Panel {
        a: m,
        b: p.b,
        fa: p.fm,
        fm: frm,
        fb: p.fb,
        whole: right,
    };
    let l = refine(f, lp, 0.5 * tol, depth - 1, evaluations)?;
    let r = refine(f, rp, 0.5 * tol, depth - 1, evaluations)?;
    Ok(l + r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn scalar(x: f64) -> Mat {
        Mat::from_element(1, 1, Complex64::new(x, 0.0))
    }

    #[test]
    fn cubic_is_exact() {
        let q = adaptive_simpson(|t| Ok(scalar(t * t * t - 2.0 * t)), 0.0, 2.0, 1e-10, 30).unwrap();
        assert!((q.value[(0, 0)].re - 0.0).abs() < 1e-14);
        assert_eq!(q.evaluations, 5);
    }

    #[test]
    fn exponential_and_reversed_interval() {
        let q = adaptive_simpson(|t| Ok(scalar(t.exp())), 0.0, 1.0, 1e-12, 30).unwrap();
        assert!((q.value[(0, 0)].re - (std::f64::consts::E - 1.0)).abs() < 1e-11);
        let r = adaptive_simpson(|t| Ok(scalar(t.exp())), 1.0, 0.0, 1e-12, 30).unwrap();
        assert!((r.value[(0, 0)].re + (std::f64::consts::E - 1.0)).abs() < 1e-11);
    }

    #[test]
    fn matrix_valued() {
        let q = adaptive_simpson(
            |t| {
                Ok(Mat::from_row_slice(
                    2,
                    2,
                    &[1.0, t, t * t, t.sin()].map(|x| Complex64::new(x, 0.0)),
                ))
            },
            0.0,
            1.0,
            1e-12,
            30,
        )
        .unwrap();
        let expect = [1.0, 0.5, 1.0 / 3.0, 1.0 - 1f64.cos()];
        for (i, e) in expect.iter().enumerate() {
            assert!((q.value[(i / 2, i % 2)].re - e).abs() < 1e-11);
        }
    }
}
