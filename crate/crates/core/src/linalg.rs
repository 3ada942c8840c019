//! Dense real symmetric matrices and a cyclic Jacobi eigensolver.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default tolerance for eigendecomposition residuals.
pub const DEFAULT_EIG_TOL: f64 = 1e-10;

/// Maximum number of full Jacobi sweeps before giving up.
pub const JACOBI_MAX_SWEEPS: usize = 100;

/// A dense `dim × dim` real symmetric matrix stored row-major.
///
/// Every constructor writes `(i, j)` and `(j, i)` from the same value, and all
/// arithmetic is entrywise, so the stored matrix is bit-exactly symmetric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    /// Zero matrix. Panics if `dim == 0`.
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "matrix dimension must be positive");
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_diag(&vec![1.0; dim])
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m.data[i * m.dim + i] = v;
        }
        m
    }

    /// Builds a matrix by evaluating `f(i, j)` on the upper triangle `i <= j`
    /// and mirroring.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in i..dim {
                let v = f(i, j);
                m.data[i * dim + j] = v;
                m.data[j * dim + i] = v;
            }
        }
        m
    }

    /// Row-major construction; rejects non-square or non-symmetric input.
    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("matrix dimension must be positive"));
        }
        if data.len() != dim * dim {
            return Err(Error::invalid(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                data.len()
            )));
        }
        let mut data = data;
        for i in 0..dim {
            for j in (i + 1)..dim {
                let (a, b) = (data[i * dim + j], data[j * dim + i]);
                if a != b {
                    return Err(Error::invalid(format!(
                        "matrix is not symmetric at ({i}, {j}): {a} vs {b}"
                    )));
                }
                // normalizes a signed-zero mismatch
                data[j * dim + i] = a;
            }
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::invalid("matrix rows must form a square array"));
        }
        Self::from_row_major(dim, rows.concat())
    }

    /// The rank-one matrix `v vᵀ`.
    pub fn outer(v: &[f64]) -> Self {
        Self::from_fn(v.len(), |i, j| v[i] * v[j])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.dim).map(<[f64]>::to_vec).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// `tr(AᵀB)`, the Frobenius inner product.
    pub fn inner(&self, other: &SymMatrix) -> Result<f64> {
        self.check_dim(other)?;
        Ok(self.inner_unchecked(other))
    }

    #[inline]
    pub(crate) fn inner_unchecked(&self, other: &SymMatrix) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    /// `vᵀ M v`.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        debug_assert_eq!(v.len(), self.dim);
        self.data
            .chunks(self.dim)
            .zip(v)
            .map(|(row, vi)| vi * row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>())
            .sum()
    }

    pub fn fro_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest absolute entry.
    pub fn linf_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |acc: f64, v| acc.max(v.abs()))
    }

    /// Sum of absolute entries.
    pub fn l1_norm(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum()
    }

    /// Largest absolute eigenvalue.
    pub fn spectral_norm(&self) -> Result<f64> {
        let eig = sym_eigen(self, DEFAULT_EIG_TOL)?;
        Ok(eig.values.iter().fold(0.0, |acc: f64, v| acc.max(v.abs())))
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        let eig = sym_eigen(self, DEFAULT_EIG_TOL)?;
        Ok(*eig.values.last().expect("dim >= 1"))
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &SymMatrix) {
        assert_eq!(self.dim, other.dim, "dimension mismatch in axpy");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn scaled(&self, alpha: f64) -> SymMatrix {
        self.map(|v| alpha * v)
    }

    pub(crate) fn map(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        SymMatrix {
            dim: self.dim,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    fn check_dim(&self, other: &SymMatrix) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::invalid(format!(
                "dimension mismatch: {} vs {}",
                self.dim, other.dim
            )));
        }
        Ok(())
    }

    fn zip_with(&self, other: &SymMatrix, f: impl Fn(f64, f64) -> f64) -> SymMatrix {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        SymMatrix {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }
}

impl TryFrom<Vec<Vec<f64>>> for SymMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        SymMatrix::from_rows(&rows)
    }
}

impl From<SymMatrix> for Vec<Vec<f64>> {
    fn from(m: SymMatrix) -> Self {
        m.to_rows()
    }
}

impl Add for &SymMatrix {
    type Output = SymMatrix;
    fn add(self, rhs: &SymMatrix) -> SymMatrix {
        self.zip_with(rhs, |a, b| a + b)
    }
}

impl Sub for &SymMatrix {
    type Output = SymMatrix;
    fn sub(self, rhs: &SymMatrix) -> SymMatrix {
        self.zip_with(rhs, |a, b| a - b)
    }
}

impl Neg for &SymMatrix {
    type Output = SymMatrix;
    fn neg(self) -> SymMatrix {
        self.map(|v| -v)
    }
}

impl Mul<&SymMatrix> for f64 {
    type Output = SymMatrix;
    fn mul(self, rhs: &SymMatrix) -> SymMatrix {
        rhs.scaled(self)
    }
}

/// Eigenpairs of a symmetric matrix, eigenvalues sorted descending.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    dim: usize,
    values: Vec<f64>,
    /// Row-major; column `j` is the eigenvector for `values[j]`.
    vectors: Vec<f64>,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Entry `i` of eigenvector `j`.
    #[inline]
    pub fn component(&self, i: usize, j: usize) -> f64 {
        self.vectors[i * self.dim + j]
    }

    pub fn vector(&self, j: usize) -> Vec<f64> {
        (0..self.dim).map(|i| self.component(i, j)).collect()
    }

    /// `V diag(values) Vᵀ` for replacement eigenvalues.
    pub fn reconstruct_with(&self, values: &[f64]) -> SymMatrix {
        assert_eq!(values.len(), self.dim);
        let d = self.dim;
        SymMatrix::from_fn(d, |i, j| {
            let (ri, rj) = (
                &self.vectors[i * d..(i + 1) * d],
                &self.vectors[j * d..(j + 1) * d],
            );
            ri.iter()
                .zip(rj)
                .zip(values)
                .filter(|(_, &l)| l != 0.0)
                .map(|((a, b), l)| a * l * b)
                .sum()
        })
    }

    pub fn reconstruct(&self) -> SymMatrix {
        self.reconstruct_with(&self.values)
    }

    /// `‖VᵀV − I‖_F`.
    pub fn orthonormality_residual(&self) -> f64 {
        let d = self.dim;
        let mut acc = 0.0;
        for a in 0..d {
            for b in 0..d {
                let dot: f64 = (0..d)
                    .map(|i| self.component(i, a) * self.component(i, b))
                    .sum();
                let target = if a == b { 1.0 } else { 0.0 };
                acc += (dot - target).powi(2);
            }
        }
        acc.sqrt()
    }
}

fn off_diagonal_norm(a: &[f64], n: usize) -> f64 {
    let mut acc = 0.0;
    for p in 0..n {
        for q in (p + 1)..n {
            acc += a[p * n + q] * a[p * n + q];
        }
    }
    (2.0 * acc).sqrt()
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Sweeps stop once the off-diagonal Frobenius norm falls below
/// `max(eig_tol / 1000, ε) · ‖M‖_F`.
pub fn sym_eigen(m: &SymMatrix, eig_tol: f64) -> Result<EigenDecomposition> {
    if !m.is_finite() {
        return Err(Error::invalid("matrix has non-finite entries"));
    }
    if !(eig_tol > 0.0) {
        return Err(Error::invalid("eig_tol must be positive"));
    }
    let n = m.dim;
    let mut a = m.data.clone();
    let mut v = SymMatrix::identity(n).data;

    let scale = m.fro_norm();
    let threshold = (eig_tol * 1e-3).max(f64::EPSILON) * scale;

    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        if off_diagonal_norm(&a, n) <= threshold {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let (akp, akq) = (a[k * n + p], a[k * n + q]);
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p * n + k], a[q * n + k]);
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for k in 0..n {
                    let (vkp, vkq) = (v[k * n + p], v[k * n + q]);
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        let residual = off_diagonal_norm(&a, n);
        if residual > threshold {
            return Err(Error::NumericalFailure {
                message: format!("Jacobi did not converge in {JACOBI_MAX_SWEEPS} sweeps"),
                residual,
            });
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let mut vectors = vec![0.0; n * n];
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            vectors[row * n + col] = v[row * n + src];
        }
    }
    Ok(EigenDecomposition {
        dim: n,
        values,
        vectors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sym(rng: &mut ChaCha8Rng, d: usize) -> SymMatrix {
        SymMatrix::from_fn(d, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn diagonal_input_keeps_standard_basis() {
        let eig = sym_eigen(&SymMatrix::from_diag(&[5.0, 2.0]), DEFAULT_EIG_TOL).unwrap();
        assert_eq!(eig.values(), &[5.0, 2.0]);
        assert_eq!(eig.vector(0), vec![1.0, 0.0]);
        assert_eq!(eig.vector(1), vec![0.0, 1.0]);
    }

    #[test]
    fn off_diagonal_two_by_two() {
        let m = SymMatrix::from_rows(&[vec![0.0, 2.0], vec![2.0, 0.0]]).unwrap();
        let eig = sym_eigen(&m, DEFAULT_EIG_TOL).unwrap();
        assert!((eig.values()[0] - 2.0).abs() < 1e-14);
        assert!((eig.values()[1] + 2.0).abs() < 1e-14);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let v0 = eig.vector(0);
        let v1 = eig.vector(1);
        // up to sign
        assert!((v0[0].abs() - h).abs() < 1e-14 && (v0[0] - v0[1]).abs() < 1e-14);
        assert!((v1[0].abs() - h).abs() < 1e-14 && (v1[0] + v1[1]).abs() < 1e-14);
    }

    #[test]
    fn random_residuals_up_to_dim_50() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for d in [1, 2, 3, 8, 17, 50] {
            let m = random_sym(&mut rng, d);
            let eig = sym_eigen(&m, DEFAULT_EIG_TOL).unwrap();
            let rec = (&eig.reconstruct() - &m).fro_norm();
            assert!(
                rec <= DEFAULT_EIG_TOL * m.fro_norm().max(1.0),
                "d={d} rec={rec}"
            );
            assert!(eig.orthonormality_residual() <= DEFAULT_EIG_TOL, "d={d}");
            assert!(eig.values().windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn rejects_non_finite() {
        let m = SymMatrix::from_diag(&[f64::NAN, 1.0]);
        assert!(matches!(sym_eigen(&m, 1e-10), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn zero_matrix() {
        let eig = sym_eigen(&SymMatrix::zeros(3), 1e-10).unwrap();
        assert_eq!(eig.values(), &[0.0, 0.0, 0.0]);
        assert!(eig.orthonormality_residual() == 0.0);
    }

    #[test]
    fn norms_and_inner() {
        let i2 = SymMatrix::identity(2);
        assert_eq!(i2.inner(&SymMatrix::from_diag(&[3.0, 4.0])).unwrap(), 7.0);
        let m = SymMatrix::from_rows(&[vec![0.0, 2.0], vec![2.0, 0.0]]).unwrap();
        assert!((m.spectral_norm().unwrap() - 2.0).abs() < 1e-14);
        assert_eq!(SymMatrix::from_diag(&[-3.0, 1.0]).linf_norm(), 3.0);
        assert!(matches!(
            i2.inner(&SymMatrix::identity(3)),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn rejects_asymmetric_rows() {
        assert!(SymMatrix::from_rows(&[vec![0.0, 1.0], vec![2.0, 0.0]]).is_err());
        assert!(SymMatrix::from_rows(&[vec![0.0, 1.0]]).is_err());
        assert!(SymMatrix::from_row_major(0, vec![]).is_err());
    }

    #[test]
    fn serde_as_nested_rows() {
        let m = SymMatrix::from_rows(&[vec![1.0, 0.5], vec![0.5, -2.0]]).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, "[[1.0,0.5],[0.5,-2.0]]");
        let back: SymMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        assert!(serde_json::from_str::<SymMatrix>("[[1.0,0.5],[0.4,1.0]]").is_err());
    }

    #[test]
    fn arithmetic_keeps_exact_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_sym(&mut rng, 6);
        let b = random_sym(&mut rng, 6);
        let mut c = &(&a + &b) - &(0.3 * &a);
        c.axpy(-1.7, &b);
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(c.get(i, j).to_bits(), c.get(j, i).to_bits());
            }
        }
    }
}
