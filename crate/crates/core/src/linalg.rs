//! Small dense complex linear-algebra helpers on top of `nalgebra`.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Eigenvalues below `-PSD_TOLERANCE` reject a covariance as indefinite.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// One draw of `CN(0, variance)`.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = libm::sqrt(variance / 2.0);
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(s * re, s * im)
}

/// Vector of i.i.d. `CN(0, variance)` entries.
pub fn complex_normal_vector<R: Rng + ?Sized>(rng: &mut R, len: usize, variance: f64) -> CVector {
    CVector::from_iterator(len, (0..len).map(|_| complex_normal(rng, variance)))
}

/// Unconjugated bilinear product `aᵀ b`.
pub fn dot_t(a: &CVector, b: &CVector) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(m: &CMatrix) -> f64 {
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// `m^{-1/2}` for Hermitian positive-definite `m`, by eigendecomposition.
pub fn hermitian_inv_sqrt(m: &CMatrix) -> Result<CMatrix> {
    if !m.is_square() {
        return Err(Error::Dimension("inverse square root of a non-square matrix"));
    }
    let eig = m.clone().symmetric_eigen();
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) {
        return Err(Error::NotPsd { min_eigenvalue: min });
    }
    let n = m.nrows();
    let scale = DVector::from_iterator(
        n,
        eig.eigenvalues
            .iter()
            .map(|&l| Complex64::new(1.0 / libm::sqrt(l), 0.0)),
    );
    let v = &eig.eigenvectors;
    let mut scaled = v.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= scale[j];
    }
    let out = scaled * v.adjoint();
    // exact Hermitian symmetry
    Ok((&out + out.adjoint()) * Complex64::new(0.5, 0.0))
}

/// `log2 det(m)` of a Hermitian positive-definite matrix via Cholesky.
///
/// Returns `None` when the factorization fails.
pub fn log2_det_hpd(m: &CMatrix) -> Option<f64> {
    let chol = m.clone().cholesky()?;
    let l = chol.l_dirty();
    let mut acc = 0.0;
    for i in 0..m.nrows() {
        acc += libm::log2(l[(i, i)].re);
    }
    Some(2.0 * acc)
}

/// Checks that `order` is a permutation of `0..n`.
pub fn check_permutation(order: &[usize], n: usize) -> Result<()> {
    if order.len() != n {
        return Err(Error::InvalidOrder { devices: n });
    }
    let mut seen = alloc::vec![false; n];
    for &i in order {
        if i >= n || seen[i] {
            return Err(Error::InvalidOrder { devices: n });
        }
        seen[i] = true;
    }
    Ok(())
}

/// Columns of a matrix as owned vectors.
pub fn columns(m: &CMatrix) -> Vec<CVector> {
    m.column_iter().map(|c| c.into_owned()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_psd(n: usize, rng: &mut ChaCha8Rng) -> CMatrix {
        let a = CMatrix::from_fn(n, n, |_, _| complex_normal(rng, 1.0));
        &a * a.adjoint()
    }

    #[test]
    fn inverse_square_root_multiplies_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..6 {
            let m = random_psd(n, &mut rng) + CMatrix::identity(n, n);
            let w = hermitian_inv_sqrt(&m).unwrap();
            let back = &w * &m * &w;
            assert!((back - CMatrix::identity(n, n)).norm() < 1e-10);
        }
    }

    #[test]
    fn log_det_matches_lu_determinant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_psd(4, &mut rng) + CMatrix::identity(4, 4);
        let det = m.clone().determinant();
        let direct = libm::log2(det.re);
        assert!((log2_det_hpd(&m).unwrap() - direct).abs() < 1e-10);
    }

    #[test]
    fn permutation_check() {
        assert!(check_permutation(&[2, 0, 1], 3).is_ok());
        assert!(check_permutation(&[0, 0, 1], 3).is_err());
        assert!(check_permutation(&[0, 1], 3).is_err());
        assert!(check_permutation(&[0, 1, 3], 3).is_err());
    }

    #[test]
    fn indefinite_matrix_rejected() {
        let mut m = CMatrix::identity(2, 2);
        m[(1, 1)] = Complex64::new(-1.0, 0.0);
        assert!(matches!(hermitian_inv_sqrt(&m), Err(Error::NotPsd { .. })));
    }
}
