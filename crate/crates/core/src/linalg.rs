//! Thin wrappers over the dense kernels used throughout the crate.

use faer::linalg::solvers::DenseSolveCore;
use faer::{Mat, Side};
use num_complex::Complex64;

pub type CMat = Mat<Complex64>;

/// `Y* Y` for a rectangular `Y`.
pub fn gram(y: &CMat) -> CMat {
    y.adjoint() * y
}

/// `Y Y*` for a rectangular `Y`.
pub fn cogram(y: &CMat) -> CMat {
    y * y.adjoint()
}

/// Eigenvalues of a Hermitian matrix in ascending order.
pub fn hermitian_eigenvalues(a: &CMat) -> std::result::Result<Vec<f64>, String> {
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    a.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| format!("{e:?}"))
}

/// `(A − θ)⁻¹` by an LU factorization with partial pivoting.
///
/// Returns `None` when the factorization produces non-finite entries, which
/// is how an exactly singular shift shows up.
pub fn shifted_inverse(a: &CMat, theta: Complex64) -> Option<CMat> {
    let n = a.nrows();
    let shifted = CMat::from_fn(n, n, |i, j| {
        if i == j {
            a[(i, j)] - theta
        } else {
            a[(i, j)]
        }
    });
    let inv = shifted.partial_piv_lu().inverse();
    all_finite(&inv).then_some(inv)
}

/// `max |((A − θ)R − I)_ij|`.
pub fn shifted_residual(a: &CMat, theta: Complex64, r: &CMat) -> f64 {
    let n = a.nrows();
    let prod = a * r;
    let mut worst = 0.0_f64;
    for j in 0..n {
        for i in 0..n {
            let mut v = prod[(i, j)] - theta * r[(i, j)];
            if i == j {
                v -= 1.0;
            }
            worst = worst.max(v.norm());
        }
    }
    worst
}

pub fn all_finite(m: &CMat) -> bool {
    (0..m.ncols()).all(|j| (0..m.nrows()).all(|i| m[(i, j)].re.is_finite() && m[(i, j)].im.is_finite()))
}

pub fn trace(m: &CMat) -> Complex64 {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)]).sum()
}

/// `v* M v` for a column vector given as a slice.
pub fn quadratic_form(m: &CMat, v: &[Complex64]) -> Complex64 {
    bilinear_form(m, v, v)
}

/// `u* M v`.
pub fn bilinear_form(m: &CMat, u: &[Complex64], v: &[Complex64]) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for j in 0..m.ncols() {
        let mut col = Complex64::new(0.0, 0.0);
        for i in 0..m.nrows() {
            col += u[i].conj() * m[(i, j)];
        }
        acc += col * v[j];
    }
    acc
}

/// `M v`.
pub fn mat_vec(m: &CMat, v: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); m.nrows()];
    for j in 0..m.ncols() {
        let vj = v[j];
        for (i, o) in out.iter_mut().enumerate() {
            *o += m[(i, j)] * vj;
        }
    }
    out
}

/// `v* M`, returned as the conjugate-free row coefficients.
pub fn vec_mat(v: &[Complex64], m: &CMat) -> Vec<Complex64> {
    (0..m.ncols())
        .map(|j| (0..m.nrows()).map(|i| v[i].conj() * m[(i, j)]).sum())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> CMat {
        CMat::from_fn(3, 3, |i, j| {
            Complex64::new((i * 3 + j) as f64 * 0.1 + if i == j { 2.0 } else { 0.0 }, (i as f64 - j as f64) * 0.05)
        })
    }

    #[test]
    fn inverse_residual_is_small() {
        let a = gram(&sample());
        let theta = Complex64::new(1.0, 0.5);
        let r = shifted_inverse(&a, theta).unwrap();
        assert!(shifted_residual(&a, theta, &r) < 1e-13);
    }

    #[test]
    fn eigenvalues_of_diagonal() {
        let a = CMat::from_fn(3, 3, |i, j| {
            if i == j {
                Complex64::new([3.0, 1.0, 2.0][i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let ev = hermitian_eigenvalues(&a).unwrap();
        assert_eq!(ev.len(), 3);
        for (got, want) in ev.iter().zip([1.0, 2.0, 3.0]) {
            assert!((got - want).abs() < 1e-14);
        }
    }

    #[test]
    fn forms_agree_with_products() {
        let m = sample();
        let v = [Complex64::new(1.0, 2.0), Complex64::new(-0.5, 0.0), Complex64::new(0.0, 1.0)];
        let mv = mat_vec(&m, &v);
        let direct: Complex64 = v.iter().zip(&mv).map(|(a, b)| a.conj() * b).sum();
        assert!((quadratic_form(&m, &v) - direct).norm() < 1e-14);
        let vm = vec_mat(&v, &m);
        let via_row: Complex64 = vm.iter().zip(&v).map(|(a, b)| a * b).sum();
        assert!((via_row - direct).norm() < 1e-14);
    }
}
