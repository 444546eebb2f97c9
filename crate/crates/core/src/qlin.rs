//! Small dense complex and real-symmetric linear algebra.
//!
//! Everything here is sized for two-qubit work: 2×2 and 4×4 complex
//! matrices, and real symmetric matrices up to the 16×16 systems solved
//! inside the robust trainer. Eigendecompositions use cyclic Jacobi
//! rotations; complex Hermitian problems are embedded into a real
//! symmetric problem of twice the size.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::tolerances;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Dense row-major complex matrix.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { ONE } else { ZERO })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.data[i * cols + j] = f(i, j);
            }
        }
        m
    }

    /// Builds a matrix from row-major entries, rejecting wrong sizes and
    /// non-finite values.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::DimMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::OutOfRange("non-finite matrix entry".into()));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from separate real and imaginary row-major parts.
    pub fn from_parts(rows: usize, cols: usize, re: &[f64], im: &[f64]) -> Result<Self> {
        if re.len() != im.len() {
            return Err(Error::LengthMismatch(re.len(), im.len()));
        }
        let data = re
            .iter()
            .zip(im)
            .map(|(&r, &i)| Complex64::new(r, i))
            .collect();
        Self::from_vec(rows, cols, data)
    }

    pub fn from_real(rows: usize, cols: usize, re: &[f64]) -> Result<Self> {
        Self::from_vec(
            rows,
            cols,
            re.iter().map(|&r| Complex64::new(r, 0.0)).collect(),
        )
    }

    /// `|ψ⟩⟨ψ|` for a column vector `ψ`.
    pub fn projector(psi: &[Complex64]) -> Self {
        let n = psi.len();
        Self::from_fn(n, n, |i, j| psi[i] * psi[j].conj())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn re_parts(&self) -> Vec<f64> {
        self.data.iter().map(|z| z.re).collect()
    }

    pub fn im_parts(&self) -> Vec<f64> {
        self.data.iter().map(|z| z.im).collect()
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * c).collect(),
        }
    }

    pub fn scale_real(&self, c: f64) -> Self {
        self.scale(Complex64::new(c, 0.0))
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimMismatch(format!(
                "{}x{} * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == ZERO {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Largest elementwise deviation `|m[i][j] - conj(m[j][i])|`.
    pub fn hermitian_defect(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in i..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermitian_defect() <= tol
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest elementwise distance to `other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self[(i, j)] * x[j]).sum())
            .collect()
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.cols + j]
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs).expect("incompatible matrix product")
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                let z = self[(i, j)];
                write!(f, "{:+.4}{:+.4}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Single-qubit Pauli basis, in the index order used for witness
/// coefficients: 1 = σx, 2 = σy, 3 = σz, 4 = identity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pauli {
    X,
    Y,
    Z,
    I,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::X, Pauli::Y, Pauli::Z, Pauli::I];

    pub fn matrix(self) -> ComplexMatrix {
        let entries = match self {
            Pauli::X => [ZERO, ONE, ONE, ZERO],
            Pauli::Y => [ZERO, -I, I, ZERO],
            Pauli::Z => [ONE, ZERO, ZERO, -ONE],
            Pauli::I => [ONE, ZERO, ZERO, ONE],
        };
        ComplexMatrix::from_vec(2, 2, entries.to_vec()).unwrap()
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Pauli::X => "X",
            Pauli::Y => "Y",
            Pauli::Z => "Z",
            Pauli::I => "I",
        }
    }
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let rows = a.rows * b.rows;
    let cols = a.cols * b.cols;
    ComplexMatrix::from_fn(rows, cols, |i, j| {
        a[(i / b.rows, j / b.cols)] * b[(i % b.rows, j % b.cols)]
    })
}

/// `tr(a·b)` without forming the product.
pub fn trace_prod(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<Complex64> {
    if !a.is_square() || !b.is_square() || a.rows != b.rows {
        return Err(Error::DimMismatch(format!(
            "tr({}x{} * {}x{})",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let n = a.rows;
    let mut acc = ZERO;
    for i in 0..n {
        for j in 0..n {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    Ok(acc)
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn herm_eigvals(m: &ComplexMatrix) -> Result<Vec<f64>> {
    Ok(herm_eig(m)?.0)
}

/// Eigenvalues (ascending) and unit eigenvectors of a Hermitian matrix.
pub fn herm_eig(m: &ComplexMatrix) -> Result<(Vec<f64>, Vec<Vec<Complex64>>)> {
    if !m.is_square() {
        return Err(Error::DimMismatch(format!(
            "{}x{} is not square",
            m.rows, m.cols
        )));
    }
    let defect = m.hermitian_defect();
    if defect > tolerances::HERMITIAN {
        return Err(Error::NotHermitian(defect));
    }
    let n = m.rows;
    // [[A, -B], [B, A]] for M = A + iB.
    let s = RealSymMatrix::from_fn(2 * n, |r, c| {
        let z = m[(r % n, c % n)];
        match (r < n, c < n) {
            (true, true) | (false, false) => 0.5 * (z.re + m[(c % n, r % n)].re),
            (true, false) => -0.5 * (z.im - m[(c % n, r % n)].im),
            (false, true) => 0.5 * (z.im - m[(c % n, r % n)].im),
        }
    });
    let (vals, vecs) = s.eigh();

    let mut out_vals = Vec::with_capacity(n);
    let mut out_vecs: Vec<Vec<Complex64>> = Vec::with_capacity(n);
    for (k, col) in vecs.iter().enumerate() {
        if out_vecs.len() == n {
            break;
        }
        let mut z: Vec<Complex64> = (0..n).map(|i| Complex64::new(col[i], col[i + n])).collect();
        for q in &out_vecs {
            let overlap: Complex64 = q.iter().zip(&z).map(|(a, b)| a.conj() * b).sum();
            for (zi, qi) in z.iter_mut().zip(q) {
                *zi -= overlap * qi;
            }
        }
        let norm = z.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if norm > 0.5 {
            z.iter_mut().for_each(|c| *c /= norm);
            out_vals.push(vals[k]);
            out_vecs.push(z);
        }
    }
    debug_assert_eq!(out_vecs.len(), n);
    Ok((out_vals, out_vecs))
}

/// Real symmetric matrix with full row-major storage.
#[derive(Clone, PartialEq, Debug)]
pub struct RealSymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl RealSymMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1);
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::diag(&vec![1.0; dim])
    }

    pub fn diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &x) in d.iter().enumerate() {
            m.data[i * m.dim + i] = x;
        }
        m
    }

    /// Reads the upper triangle of `f` (i ≤ j) and mirrors it.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in i..dim {
                let x = f(i, j);
                m.data[i * dim + j] = x;
                m.data[j * dim + i] = x;
            }
        }
        m
    }

    /// Builds from row-major entries; the result is the symmetric part.
    pub fn from_rows(dim: usize, data: &[f64]) -> Result<Self> {
        if dim == 0 || data.len() != dim * dim {
            return Err(Error::DimMismatch(format!(
                "{} entries for a {dim}x{dim} matrix",
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::OutOfRange("non-finite matrix entry".into()));
        }
        Ok(Self::from_fn(dim, |i, j| {
            0.5 * (data[i * dim + j] + data[j * dim + i])
        }))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    /// Sets both `(i, j)` and `(j, i)`.
    pub fn set(&mut self, i: usize, j: usize, x: f64) {
        self.data[i * self.dim + j] = x;
        self.data[j * self.dim + i] = x;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim);
        self.data
            .chunks_exact(self.dim)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `xᵀ A x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.matvec(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// Plain product; symmetric only when the factors commute.
    pub fn matmul(&self, other: &Self) -> Vec<f64> {
        assert_eq!(self.dim, other.dim);
        let n = self.dim;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                for j in 0..n {
                    out[i * n + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|x| x * c).collect(),
        }
    }

    /// Eigenvalues ascending with matching unit eigenvectors (`vecs[k]` is
    /// the eigenvector of `vals[k]`), by cyclic Jacobi rotations.
    pub fn eigh(&self) -> (Vec<f64>, Vec<Vec<f64>>) {
        let n = self.dim;
        let mut a = self.data.clone();
        let mut v = vec![0.0; n * n];
        for i in 0..n {
            v[i * n + i] = 1.0;
        }
        let scale = a.iter().map(|x| x * x).sum::<f64>();
        for _sweep in 0..100 {
            let mut off = 0.0;
            for p in 0..n {
                for q in (p + 1)..n {
                    off += a[p * n + q] * a[p * n + q];
                }
            }
            if off <= 1e-32 * scale || off == 0.0 {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[p * n + q];
                    if apq == 0.0 {
                        continue;
                    }
                    let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[k * n + p];
                        let akq = a[k * n + q];
                        a[k * n + p] = c * akp - s * akq;
                        a[k * n + q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[p * n + k];
                        let aqk = a[q * n + k];
                        a[p * n + k] = c * apk - s * aqk;
                        a[q * n + k] = s * apk + c * aqk;
                    }
                    a[p * n + q] = 0.0;
                    a[q * n + p] = 0.0;
                    for k in 0..n {
                        let vkp = v[k * n + p];
                        let vkq = v[k * n + q];
                        v[k * n + p] = c * vkp - s * vkq;
                        v[k * n + q] = s * vkp + c * vkq;
                    }
                }
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| a[i * n + i].total_cmp(&a[j * n + j]));
        let vals = order.iter().map(|&k| a[k * n + k]).collect();
        let vecs = order
            .iter()
            .map(|&k| (0..n).map(|i| v[i * n + k]).collect())
            .collect();
        (vals, vecs)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigh().0[0]
    }

    /// `Σ f(λₖ) uₖuₖᵀ` over the eigenpairs.
    fn spectral_map(vals: &[f64], vecs: &[Vec<f64>], f: impl Fn(f64) -> f64) -> Self {
        let n = vals.len();
        let mapped: Vec<f64> = vals.iter().map(|&l| f(l)).collect();
        Self::from_fn(n, |i, j| {
            (0..n).map(|k| mapped[k] * vecs[k][i] * vecs[k][j]).sum()
        })
    }

    /// Projection onto the PSD cone: negative eigenvalues set to zero.
    /// Returns the input unchanged when it is already PSD.
    pub fn clamp_psd(&self) -> Self {
        let (vals, vecs) = self.eigh();
        if vals[0] >= 0.0 {
            return self.clone();
        }
        Self::spectral_map(&vals, &vecs, |l| l.max(0.0))
    }

    /// Symmetric PSD square root `R` with `R·R = self`.
    pub fn psd_sqrt(&self) -> Result<Self> {
        let (vals, vecs) = self.eigh();
        if vals[0] < -tolerances::PSD_REJECT {
            return Err(Error::NotPsd(vals[0]));
        }
        Ok(Self::spectral_map(&vals, &vecs, |l| l.max(0.0).sqrt()))
    }

    /// Solves `A x = rhs` for symmetric positive definite `A` by Cholesky.
    /// Returns `None` when a pivot is not positive.
    pub fn cholesky_solve(&self, rhs: &[f64]) -> Option<Vec<f64>> {
        let n = self.dim;
        assert_eq!(rhs.len(), n);
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut d = self.get(j, j);
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > 0.0) {
                return None;
            }
            let d = d.sqrt();
            l[j * n + j] = d;
            for i in (j + 1)..n {
                let mut s = self.get(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / d;
            }
        }
        let mut y = rhs.to_vec();
        for i in 0..n {
            for k in 0..i {
                y[i] -= l[i * n + k] * y[k];
            }
            y[i] /= l[i * n + i];
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                y[i] -= l[k * n + i] * y[k];
            }
            y[i] /= l[i * n + i];
        }
        Some(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn psi_minus() -> ComplexMatrix {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        ComplexMatrix::projector(&[ZERO, c(h, 0.0), c(-h, 0.0), ZERO])
    }

    fn close(a: &ComplexMatrix, b: &ComplexMatrix, tol: f64) -> bool {
        a.max_abs_diff(b) <= tol
    }

    #[test]
    fn kron_identities_and_paulis() {
        let id2 = Pauli::I.matrix();
        assert!(close(&kron(&id2, &id2), &ComplexMatrix::identity(4), 0.0));

        let zz = kron(&Pauli::Z.matrix(), &Pauli::Z.matrix());
        let diag = ComplexMatrix::from_real(
            4,
            4,
            &[
                1., 0., 0., 0., 0., -1., 0., 0., 0., 0., -1., 0., 0., 0., 0., 1.,
            ],
        )
        .unwrap();
        assert!(close(&zz, &diag, 0.0));

        let xx = kron(&Pauli::X.matrix(), &Pauli::X.matrix());
        let anti = ComplexMatrix::from_fn(4, 4, |i, j| if i + j == 3 { ONE } else { ZERO });
        assert!(close(&xx, &anti, 0.0));
    }

    #[test]
    fn eigvals_of_simple_matrices() {
        assert_eq!(herm_eigvals(&Pauli::Z.matrix()).unwrap(), vec![-1.0, 1.0]);
        let ev = herm_eigvals(&psi_minus()).unwrap();
        for (got, want) in ev.iter().zip([0.0, 0.0, 0.0, 1.0]) {
            assert!((got - want).abs() < 1e-12, "{ev:?}");
        }
        let ev = herm_eigvals(&Pauli::Y.matrix()).unwrap();
        assert!((ev[0] + 1.0).abs() < 1e-14 && (ev[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn eigvals_reject_non_hermitian() {
        let m = ComplexMatrix::from_vec(2, 2, vec![ONE, ONE, ZERO, ONE]).unwrap();
        assert!(matches!(herm_eigvals(&m), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn eigenpairs_have_small_residuals() {
        let m = ComplexMatrix::from_vec(
            4,
            4,
            vec![
                c(0.459, 0.0),
                c(0.019, -0.002),
                c(-0.002, -0.019),
                c(0.0, -0.002),
                c(0.019, 0.002),
                c(0.055, 0.0),
                c(0.399, -0.012),
                c(0.017, 0.0),
                c(-0.002, 0.019),
                c(0.399, 0.012),
                c(0.055, 0.0),
                c(-0.005, -0.017),
                c(0.0, 0.002),
                c(0.017, 0.0),
                c(-0.005, 0.017),
                c(0.430, 0.0),
            ],
        )
        .unwrap();
        let (vals, vecs) = herm_eig(&m).unwrap();
        let norm = m.frobenius_norm();
        for (l, x) in vals.iter().zip(&vecs) {
            let mx = m.matvec(x);
            let res: f64 = mx
                .iter()
                .zip(x)
                .map(|(a, b)| (a - b * l).norm_sqr())
                .sum::<f64>()
                .sqrt();
            assert!(res <= 1e-9 * norm, "residual {res}");
        }
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(vals.iter().filter(|&&l| l < 0.0).count(), 1);
    }

    #[test]
    fn degenerate_spectrum_yields_orthonormal_vectors() {
        let (vals, vecs) = herm_eig(&ComplexMatrix::identity(4)).unwrap();
        assert!(vals.iter().all(|l| (l - 1.0).abs() < 1e-14));
        for a in 0..4 {
            for b in 0..4 {
                let ip: Complex64 = vecs[a]
                    .iter()
                    .zip(&vecs[b])
                    .map(|(x, y)| x.conj() * y)
                    .sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((ip - c(want, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn trace_prod_examples() {
        let id = ComplexMatrix::identity(4);
        assert_eq!(trace_prod(&id, &id).unwrap(), c(4.0, 0.0));
        let xx = kron(&Pauli::X.matrix(), &Pauli::X.matrix());
        let t = trace_prod(&psi_minus(), &xx).unwrap();
        assert!((t - c(-1.0, 0.0)).norm() < 1e-15);
        let rho = id.scale_real(0.25);
        assert!((trace_prod(&rho, &id).unwrap() - ONE).norm() < 1e-15);
        assert!(matches!(
            trace_prod(&id, &ComplexMatrix::identity(2)),
            Err(Error::DimMismatch(_))
        ));
    }

    #[test]
    fn psd_sqrt_examples() {
        let r = RealSymMatrix::identity(3).psd_sqrt().unwrap();
        assert_eq!(r, RealSymMatrix::identity(3));
        let r = RealSymMatrix::diag(&[4.0, 9.0]).psd_sqrt().unwrap();
        assert!((r.get(0, 0) - 2.0).abs() < 1e-14 && (r.get(1, 1) - 3.0).abs() < 1e-14);
        assert!(r.get(0, 1).abs() < 1e-14);
        assert!(matches!(
            RealSymMatrix::diag(&[1.0, -1e-3]).psd_sqrt(),
            Err(Error::NotPsd(_))
        ));
        // marginally indefinite input is clamped
        let r = RealSymMatrix::diag(&[1.0, -1e-11]).psd_sqrt().unwrap();
        assert_eq!(r.get(1, 1), 0.0);
    }

    #[test]
    fn cholesky_solves_spd_system() {
        let a = RealSymMatrix::from_rows(3, &[4., 1., 0., 1., 3., 1., 0., 1., 2.]).unwrap();
        let x = a.cholesky_solve(&[1.0, 2.0, 3.0]).unwrap();
        let back = a.matvec(&x);
        for (b, want) in back.iter().zip([1.0, 2.0, 3.0]) {
            assert!((b - want).abs() < 1e-12);
        }
        assert!(RealSymMatrix::diag(&[1.0, -1.0])
            .cholesky_solve(&[1.0, 1.0])
            .is_none());
    }

    fn arb_c2() -> impl Strategy<Value = ComplexMatrix> {
        prop::collection::vec(-1.0f64..1.0, 8).prop_map(|v| {
            ComplexMatrix::from_fn(2, 2, |i, j| c(v[2 * (2 * i + j)], v[2 * (2 * i + j) + 1]))
        })
    }

    fn arb_hermitian4() -> impl Strategy<Value = ComplexMatrix> {
        prop::collection::vec(-1.0f64..1.0, 32).prop_map(|v| {
            let g =
                ComplexMatrix::from_fn(4, 4, |i, j| c(v[2 * (4 * i + j)], v[2 * (4 * i + j) + 1]));
            &g + &g.adjoint()
        })
    }

    /// `exp(-iθP/2)` for a two-qubit Pauli string `P` (P² = I).
    fn pauli_rotation(a: Pauli, b: Pauli, theta: f64) -> ComplexMatrix {
        let p = kron(&a.matrix(), &b.matrix());
        let id = ComplexMatrix::identity(4);
        &id.scale_real((theta / 2.0).cos()) + &p.scale(c(0.0, -(theta / 2.0).sin()))
    }

    proptest! {
        #[test]
        fn kron_is_bilinear_and_associative(a in arb_c2(), b in arb_c2(), d in arb_c2(), s in -2.0f64..2.0) {
            let lhs = kron(&(&a + &b.scale_real(s)), &d);
            let rhs = &kron(&a, &d) + &kron(&b, &d).scale_real(s);
            prop_assert!(lhs.max_abs_diff(&rhs) < 1e-12);
            let l = kron(&kron(&a, &b), &d);
            let r = kron(&a, &kron(&b, &d));
            prop_assert!(l.max_abs_diff(&r) < 1e-12);
        }

        #[test]
        fn eigvals_are_unitarily_invariant(h in arb_hermitian4(), t1 in 0.0f64..6.3, t2 in 0.0f64..6.3, i in 0usize..4, j in 0usize..4) {
            let u = &pauli_rotation(Pauli::ALL[i], Pauli::ALL[j], t1)
                * &pauli_rotation(Pauli::ALL[j], Pauli::X, t2);
            let rotated = &(&u * &h) * &u.adjoint();
            // restore exact Hermiticity lost to rounding
            let rotated = (&rotated + &rotated.adjoint()).scale_real(0.5);
            let e1 = herm_eigvals(&h).unwrap();
            let e2 = herm_eigvals(&rotated).unwrap();
            for (x, y) in e1.iter().zip(&e2) {
                prop_assert!((x - y).abs() < 1e-8);
            }
            let sum: f64 = e1.iter().sum();
            prop_assert!((sum - h.trace().re).abs() < 1e-9);
        }

        #[test]
        fn psd_sqrt_reconstructs_and_commutes(v in prop::collection::vec(-1.0f64..1.0, 15 * 15)) {
            // A = G Gᵀ is PSD
            let n = 15;
            let a = RealSymMatrix::from_fn(n, |i, j| (0..n).map(|k| v[i * n + k] * v[j * n + k]).sum());
            let r = a.psd_sqrt().unwrap();
            let rr = r.matmul(&r);
            let frob: f64 = rr.iter().zip(a.as_slice()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            prop_assert!(frob <= 1e-8, "R·R error {frob}");
            let ra = r.matmul(&a);
            let ar = a.matmul(&r);
            let comm: f64 = ra.iter().zip(&ar).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            prop_assert!(comm <= 1e-8);
            prop_assert!(r.min_eigenvalue() >= -1e-10);
        }
    }
}
