//! Matrix-calculus utilities shared by the rest of the crate: vectorization,
//! Kronecker products, numerical kernels, orthogonal projectors, the sin-theta
//! distance between subspaces, and the Fisher information of a parametrized
//! Gaussian.

use nalgebra::{DMatrix, DVector};

use crate::error::{LqgError, Result};

/// Column-stacking vectorization: vec(M) stacks the columns of M top to bottom.
pub fn vec(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec`]: reshape a length `rows * cols` vector back into a matrix.
pub fn vec_inv(v: &DVector<f64>, rows: usize, cols: usize) -> DMatrix<f64> {
    assert_eq!(v.len(), rows * cols, "vec_inv length mismatch");
    DMatrix::from_column_slice(rows, cols, v.as_slice())
}

/// Kronecker product with the standard block layout: block (i,j) is `m[(i,j)] * n`.
pub fn kron(m: &DMatrix<f64>, n: &DMatrix<f64>) -> DMatrix<f64> {
    m.kronecker(n)
}

/// An orthonormal basis for a subspace of R^n, possibly empty.
#[derive(Debug, Clone)]
pub struct SubspaceBasis {
    columns: DMatrix<f64>,
}

impl SubspaceBasis {
    /// Wrap a matrix whose columns are checked to be orthonormal (to 1e-12 entrywise).
    pub fn new(columns: DMatrix<f64>) -> Result<Self> {
        let k = columns.ncols();
        let gram = columns.transpose() * &columns;
        let err = (&gram - DMatrix::<f64>::identity(k, k)).amax();
        if k > 0 && err > 1e-10 {
            return Err(LqgError::InvalidInput(format!(
                "basis columns not orthonormal (gram deviation {err:.2e})"
            )));
        }
        Ok(Self { columns })
    }

    /// The empty subspace of R^n.
    pub fn empty(ambient_dim: usize) -> Self {
        Self {
            columns: DMatrix::zeros(ambient_dim, 0),
        }
    }

    pub fn ambient_dim(&self) -> usize {
        self.columns.nrows()
    }

    pub fn dim(&self) -> usize {
        self.columns.ncols()
    }

    pub fn columns(&self) -> &DMatrix<f64> {
        &self.columns
    }
}

/// Orthonormal basis of the numerical kernel of a symmetric PSD matrix:
/// the span of eigenvectors with eigenvalue at most `tol * max(1, lambda_max)`.
pub fn kernel_basis(m: &DMatrix<f64>, tol: f64) -> Result<SubspaceBasis> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(LqgError::InvalidInput("kernel_basis needs a square matrix".into()));
    }
    let scale = m.amax().max(1.0);
    if (m - m.transpose()).amax() > 1e-10 * scale {
        return Err(LqgError::InvalidInput("kernel_basis needs a symmetric matrix".into()));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let lambda_max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let cutoff = tol * lambda_max.max(1.0);
    let keep: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i].abs() <= cutoff).collect();
    let mut cols = DMatrix::zeros(n, keep.len());
    for (j, &i) in keep.iter().enumerate() {
        cols.set_column(j, &eig.eigenvectors.column(i));
    }
    SubspaceBasis::new(cols)
}

/// Default kernel tolerance: `n * machine epsilon`, the usual numerical-rank convention.
pub fn default_kernel_tol(n: usize) -> f64 {
    n as f64 * f64::EPSILON
}

/// Orthogonal projector V V' onto the subspace.
pub fn orth_projector(v: &SubspaceBasis) -> DMatrix<f64> {
    v.columns() * v.columns().transpose()
}

/// Spectral norm of (I - Pi_V) Pi_W; 0 iff W is contained in V, 1 for orthogonal
/// subspaces, symmetric in its arguments when the dimensions agree.
pub fn subspace_sin_distance(v: &SubspaceBasis, w: &SubspaceBasis) -> Result<f64> {
    if v.ambient_dim() != w.ambient_dim() {
        return Err(LqgError::InvalidInput(format!(
            "ambient dimension mismatch: {} vs {}",
            v.ambient_dim(),
            w.ambient_dim()
        )));
    }
    let n = v.ambient_dim();
    let residual = (DMatrix::identity(n, n) - orth_projector(v)) * orth_projector(w);
    Ok(spectral_norm(&residual).min(1.0))
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().singular_values().max()
}

/// Fisher information of x ~ N(mu(theta), Sigma(theta)):
/// `mu_jac' Sigma^-1 mu_jac + 1/2 sigma_jac' (I ox Sigma^-2) sigma_jac`,
/// where `sigma_jac` is the Jacobian of vec Sigma.
pub fn gaussian_fisher(
    mu_jac: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    sigma_jac: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let d = sigma.nrows();
    let chol = sigma
        .clone()
        .cholesky()
        .ok_or_else(|| LqgError::SingularCovariance("gaussian_fisher Sigma".into()))?;
    let sigma_inv = chol.inverse();
    let mean_term = mu_jac.transpose() * &sigma_inv * mu_jac;
    let sigma_inv2 = &sigma_inv * &sigma_inv;
    let cov_term =
        sigma_jac.transpose() * kron(&DMatrix::identity(d, d), &sigma_inv2) * sigma_jac * 0.5;
    let total = mean_term + cov_term;
    Ok((&total + total.transpose()) * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn vec_column_stacking() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(vec(&m).as_slice(), &[1.0, 3.0, 2.0, 4.0]);
        let z = DMatrix::<f64>::zeros(2, 3);
        assert_eq!(vec(&z), DVector::zeros(6));
    }

    #[test]
    fn vec_of_product_is_kron_times_vec() {
        let m = DMatrix::from_fn(3, 2, |i, j| (i * 2 + j) as f64 * 0.3 - 0.4);
        let n = DMatrix::from_row_slice(2, 2, &[0.2, -1.0, 0.7, 0.4]);
        let p = DMatrix::from_row_slice(2, 2, &[1.5, 0.1, -0.3, 0.9]);
        let lhs = vec(&(&m * &n * &p));
        let rhs = kron(&p.transpose(), &m) * vec(&n);
        assert_relative_eq!(lhs, rhs, epsilon = 1e-12);
    }

    #[test]
    fn kron_identity_and_scalar() {
        let n = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let bd = kron(&DMatrix::identity(2, 2), &n);
        assert_eq!(bd[(0, 0)], 1.0);
        assert_eq!(bd[(2, 2)], 1.0);
        assert_eq!(bd[(0, 2)], 0.0);
        assert_eq!(bd[(3, 3)], 4.0);
        let s = kron(&DMatrix::from_element(1, 1, 2.0), &n);
        assert_relative_eq!(s, n * 2.0, epsilon = 1e-15);
    }

    #[test]
    fn kron_eigenvalues_are_products() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let n = DMatrix::from_row_slice(2, 2, &[1.0, -0.5, -0.5, 2.0]);
        let mut prod: Vec<f64> = m
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .flat_map(|&a| {
                n.clone()
                    .symmetric_eigen()
                    .eigenvalues
                    .iter()
                    .map(move |&b| a * b)
                    .collect::<Vec<_>>()
            })
            .collect();
        let mut got: Vec<f64> = kron(&m, &n).symmetric_eigen().eigenvalues.iter().cloned().collect();
        prod.sort_by(f64::total_cmp);
        got.sort_by(f64::total_cmp);
        for (a, b) in prod.iter().zip(&got) {
            assert_relative_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn kernel_of_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0]));
        let b = kernel_basis(&m, 1e-9).unwrap();
        assert_eq!(b.dim(), 1);
        assert_relative_eq!(b.columns()[(1, 0)].abs(), 1.0, epsilon = 1e-12);
        assert_eq!(kernel_basis(&DMatrix::identity(3, 3), 1e-9).unwrap().dim(), 0);
    }

    #[test]
    fn kernel_of_rank_one_gain_gram() {
        let k = -1.5777;
        let h = DMatrix::from_column_slice(2, 1, &[1.0, k]);
        let m = &h * h.transpose();
        let b = kernel_basis(&m, 1e-9).unwrap();
        assert_eq!(b.dim(), 1);
        let expect = DVector::from_vec(vec![-k, 1.0]).normalize();
        let got = b.columns().column(0);
        assert_relative_eq!(got.dot(&expect).abs(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn kernel_rejects_asymmetric() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!(matches!(kernel_basis(&m, 1e-9), Err(LqgError::InvalidInput(_))));
    }

    #[test]
    fn projector_cases() {
        let full = SubspaceBasis::new(DMatrix::identity(3, 3)).unwrap();
        assert_relative_eq!(orth_projector(&full), DMatrix::identity(3, 3), epsilon = 1e-14);
        let none = SubspaceBasis::empty(3);
        assert_eq!(orth_projector(&none), DMatrix::zeros(3, 3));
        let s = 1.0 / 2.0f64.sqrt();
        let diag = SubspaceBasis::new(DMatrix::from_column_slice(2, 1, &[s, s])).unwrap();
        let pi = orth_projector(&diag);
        assert_relative_eq!(pi, DMatrix::from_element(2, 2, 0.5), epsilon = 1e-12);
    }

    #[test]
    fn sin_distance_cases() {
        let e1 = SubspaceBasis::new(DMatrix::from_column_slice(2, 1, &[1.0, 0.0])).unwrap();
        let e2 = SubspaceBasis::new(DMatrix::from_column_slice(2, 1, &[0.0, 1.0])).unwrap();
        assert_relative_eq!(subspace_sin_distance(&e1, &e1).unwrap(), 0.0, epsilon = 1e-12);
        assert_relative_eq!(subspace_sin_distance(&e1, &e2).unwrap(), 1.0, epsilon = 1e-12);
        let phi: f64 = 0.3;
        let w = SubspaceBasis::new(DMatrix::from_column_slice(2, 1, &[phi.cos(), phi.sin()])).unwrap();
        assert_relative_eq!(subspace_sin_distance(&e1, &w).unwrap(), phi.sin(), epsilon = 1e-12);
        let r3 = SubspaceBasis::empty(3);
        assert!(subspace_sin_distance(&e1, &r3).is_err());
    }

    #[test]
    fn gaussian_fisher_scalar_cases() {
        // location model, unit variance
        let f = gaussian_fisher(
            &DMatrix::from_element(1, 1, 1.0),
            &DMatrix::from_element(1, 1, 1.0),
            &DMatrix::zeros(1, 1),
        )
        .unwrap();
        assert_relative_eq!(f[(0, 0)], 1.0, epsilon = 1e-14);
        // scale model sigma^2 = theta at theta = 2: 1/(2 theta^2) = 0.125
        let f = gaussian_fisher(
            &DMatrix::zeros(1, 1),
            &DMatrix::from_element(1, 1, 2.0),
            &DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap();
        assert_relative_eq!(f[(0, 0)], 0.125, epsilon = 1e-14);
        // degenerate jacobians
        let f = gaussian_fisher(
            &DMatrix::zeros(2, 3),
            &DMatrix::identity(2, 2),
            &DMatrix::zeros(4, 3),
        )
        .unwrap();
        assert_eq!(f, DMatrix::zeros(3, 3));
        assert!(gaussian_fisher(
            &DMatrix::zeros(1, 1),
            &DMatrix::zeros(1, 1),
            &DMatrix::zeros(1, 1)
        )
        .is_err());
    }
}
