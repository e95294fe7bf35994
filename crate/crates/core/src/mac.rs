//! Vector multiple-access channel with unit-power Gaussian inputs:
//! `y = Σ_m sqrt(η_m) u_m s_m + n`, `n ~ CN(0, I)`.
//!
//! Both legacy systems reduce to this form once the excitation is fixed;
//! only the effective columns `u_m` differ.

use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector};
use crate::LOG2_E;

/// Effective receive columns `u_m` (all of the same length).
#[derive(Debug, Clone, PartialEq)]
pub struct MacChannel {
    columns: Vec<CVector>,
    dim: usize,
}

impl MacChannel {
    pub fn new(columns: Vec<CVector>) -> Result<Self> {
        let dim = columns.first().map_or(0, |c| c.len());
        if dim == 0 || columns.iter().any(|c| c.len() != dim) {
            return Err(Error::Dimension("MAC columns must be non-empty and equal length"));
        }
        Ok(Self { columns, dim })
    }

    pub fn n_users(&self) -> usize {
        self.columns.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn columns(&self) -> &[CVector] {
        &self.columns
    }

    fn check(&self, eta: &[f64]) -> Result<()> {
        if eta.len() != self.columns.len() {
            return Err(Error::Dimension("reflection vector length differs from device count"));
        }
        Ok(())
    }

    /// `I + Σ_{m ∈ users} η_m u_m u_mᴴ`.
    pub fn covariance_of<I: IntoIterator<Item = usize>>(&self, eta: &[f64], users: I) -> CMatrix {
        let mut s = CMatrix::identity(self.dim, self.dim);
        for m in users {
            let u = &self.columns[m];
            s.ger(Complex64::new(eta[m], 0.0), u, &u.conjugate(), Complex64::new(1.0, 0.0));
        }
        s
    }

    pub fn covariance(&self, eta: &[f64]) -> CMatrix {
        self.covariance_of(eta, 0..self.columns.len())
    }

    /// `log2 det(I + Σ_m η_m u_m u_mᴴ)`.
    pub fn sum_capacity(&self, eta: &[f64]) -> Result<f64> {
        self.check(eta)?;
        let v = linalg::log2_det_hpd(&self.covariance(eta)).ok_or(Error::OracleNonFinite)?;
        Ok(v.max(0.0))
    }

    /// MMSE-SIC stage rates, reported per device; `order[0]` is decoded first.
    ///
    /// Walks the order backwards, keeping `A^{-1}` of the covariance of the
    /// not-yet-decoded users up to date with Sherman–Morrison rank-one updates,
    /// so each stage costs `O(dim²)`.
    pub fn stage_rates(&self, eta: &[f64], order: &[usize]) -> Result<Vec<f64>> {
        self.check(eta)?;
        linalg::check_permutation(order, self.columns.len())?;
        let mut a_inv = CMatrix::identity(self.dim, self.dim);
        let mut rates = alloc::vec![0.0; self.columns.len()];
        for &m in order.iter().rev() {
            let u = &self.columns[m];
            let z = &a_inv * u;
            let quad = u.dotc(&z).re.max(0.0);
            let gain = eta[m] * quad;
            rates[m] = libm::log2(1.0 + gain);
            if eta[m] > 0.0 {
                let scale = Complex64::new(-eta[m] / (1.0 + gain), 0.0);
                a_inv.ger(scale, &z, &z.conjugate(), Complex64::new(1.0, 0.0));
            }
        }
        Ok(rates)
    }

    /// `∂/∂η_m log2 det S = log2(e) u_mᴴ S^{-1} u_m`.
    pub fn gradient(&self, eta: &[f64]) -> Result<Vec<f64>> {
        self.check(eta)?;
        let chol = self
            .covariance(eta)
            .cholesky()
            .ok_or(Error::OracleNonFinite)?;
        Ok(self
            .columns
            .iter()
            .map(|u| {
                let mut z = u.clone();
                chol.l_dirty().solve_lower_triangular_mut(&mut z);
                LOG2_E * z.norm_squared()
            })
            .collect())
    }

    /// `∂²/∂η_m∂η_n = −log2(e) |u_mᴴ S^{-1} u_n|²`, row-major.
    pub fn hessian(&self, eta: &[f64]) -> Result<Vec<f64>> {
        self.check(eta)?;
        let chol = self
            .covariance(eta)
            .cholesky()
            .ok_or(Error::OracleNonFinite)?;
        let z: Vec<CVector> = self
            .columns
            .iter()
            .map(|u| {
                let mut z = u.clone();
                chol.l_dirty().solve_lower_triangular_mut(&mut z);
                z
            })
            .collect();
        let m = z.len();
        let mut h = alloc::vec![0.0; m * m];
        for a in 0..m {
            for b in 0..=a {
                let v = -LOG2_E * z[a].dotc(&z[b]).norm_sqr();
                h[a * m + b] = v;
                h[b * m + a] = v;
            }
        }
        Ok(h)
    }
}
