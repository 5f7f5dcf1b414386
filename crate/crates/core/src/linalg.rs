//! Small dense matrix kernel: the networks simulated here have at most a few
//! dozen agents, so a row-major `Vec`-backed matrix with direct algorithms
//! (partial-pivot LU, cyclic Jacobi, Padé scaling-and-squaring exponential)
//! covers everything without pulling in a linear-algebra stack.

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use thiserror::Error;

use crate::scalar::{real, real_of_usize, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is singular (pivot {pivot:e} at column {col})")]
    Singular { col: usize, pivot: f64 },
    #[error("eigen iteration did not converge after {0} sweeps")]
    EigenNoConvergence(usize),
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    /// Build from nested rows; panics on ragged input.
    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            data.extend_from_slice(row);
        }
        Matrix { rows: r, cols: c, data }
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

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn scale(&self, s: T) -> Self {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| x * s).collect() }
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(self.cols, x.len(), "matvec dimension mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    pub fn row_sums(&self) -> Vec<T> {
        (0..self.rows).map(|i| self.row(i).iter().copied().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<T> {
        let mut sums = vec![T::zero(); self.cols];
        for i in 0..self.rows {
            for (s, &v) in sums.iter_mut().zip(self.row(i)) {
                *s += v;
            }
        }
        sums
    }

    /// Maximum absolute column sum (operator 1-norm).
    pub fn one_norm(&self) -> T {
        self.transpose()
            .row_sums_abs()
            .into_iter()
            .fold(T::zero(), T::max)
    }

    fn row_sums_abs(&self) -> Vec<T> {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum())
            .collect()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest elementwise |a - b|.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    pub fn is_symmetric(&self, tol: T) -> bool {
        if !self.is_square() {
            return false;
        }
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                if (self[(i, j)] - self[(j, i)]).abs() > tol {
                    return false;
                }
            }
        }
        true
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

impl<T: Real> Add for &Matrix<T> {
    type Output = Matrix<T>;
    fn add(self, rhs: &Matrix<T>) -> Matrix<T> {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a + b).collect(),
        }
    }
}

impl<T: Real> Sub for &Matrix<T> {
    type Output = Matrix<T>;
    fn sub(self, rhs: &Matrix<T>) -> Matrix<T> {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a - b).collect(),
        }
    }
}

impl<T: Real> Mul for &Matrix<T> {
    type Output = Matrix<T>;
    fn mul(self, rhs: &Matrix<T>) -> Matrix<T> {
        assert_eq!(self.cols, rhs.rows, "matmul dimension mismatch");
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..rhs.cols {
                    out[(i, j)] += a * rhs[(k, j)];
                }
            }
        }
        out
    }
}

/// LU factorization with partial pivoting.
pub struct Lu<T> {
    lu: Matrix<T>,
    perm: Vec<usize>,
}

impl<T: Real> Lu<T> {
    pub fn factor(a: &Matrix<T>) -> Result<Self, LinalgError> {
        if !a.is_square() {
            return Err(LinalgError::DimensionMismatch(format!(
                "LU needs a square matrix, got {}x{}",
                a.rows, a.cols
            )));
        }
        let n = a.rows;
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.max_abs().max(T::one());
        let tiny = scale * real::<T>(1e-14) * real_of_usize::<T>(n.max(1));
        for k in 0..n {
            let mut p = k;
            let mut best = lu[(k, k)].abs();
            for i in (k + 1)..n {
                let v = lu[(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= tiny {
                return Err(LinalgError::Singular { col: k, pivot: best.to_f64().unwrap_or(0.0) });
            }
            if p != k {
                perm.swap(p, k);
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = tmp;
                }
            }
            let pivot = lu[(k, k)];
            for i in (k + 1)..n {
                let f = lu[(i, k)] / pivot;
                lu[(i, k)] = f;
                for j in (k + 1)..n {
                    let sub = f * lu[(k, j)];
                    lu[(i, j)] -= sub;
                }
            }
        }
        Ok(Lu { lu, perm })
    }

    pub fn solve_vec(&self, b: &[T]) -> Vec<T> {
        let n = self.lu.rows;
        assert_eq!(b.len(), n);
        let mut y: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 1..n {
            for k in 0..i {
                let sub = self.lu[(i, k)] * y[k];
                y[i] = y[i] - sub;
            }
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                let sub = self.lu[(i, k)] * y[k];
                y[i] = y[i] - sub;
            }
            y[i] = y[i] / self.lu[(i, i)];
        }
        y
    }

    pub fn solve_matrix(&self, b: &Matrix<T>) -> Matrix<T> {
        let n = self.lu.rows;
        assert_eq!(b.rows, n);
        let mut out = Matrix::zeros(n, b.cols);
        let mut col = vec![T::zero(); n];
        for j in 0..b.cols {
            for i in 0..n {
                col[i] = b[(i, j)];
            }
            let x = self.solve_vec(&col);
            for i in 0..n {
                out[(i, j)] = x[i];
            }
        }
        out
    }
}

/// Solve `a x = b`; errors on singular systems.
pub fn solve<T: Real>(a: &Matrix<T>, b: &[T]) -> Result<Vec<T>, LinalgError> {
    Ok(Lu::factor(a)?.solve_vec(b))
}

/// Eigen decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues (unsorted) and the orthogonal matrix of column
/// eigenvectors.
pub fn sym_eigen<T: Real>(a: &Matrix<T>) -> Result<(Vec<T>, Matrix<T>), LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::DimensionMismatch(format!(
            "sym_eigen needs a square matrix, got {}x{}",
            a.rows, a.cols
        )));
    }
    let n = a.rows;
    let mut m = a.clone();
    let mut v = Matrix::identity(n);
    if n <= 1 {
        return Ok(((0..n).map(|i| m[(i, i)]).collect(), v));
    }
    let tol = real::<T>(1e-15) * a.frobenius_norm().max(T::one());
    let max_sweeps = 64;
    for _ in 0..max_sweeps {
        let mut off = T::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[(i, j)] * m[(i, j)];
            }
        }
        if off.sqrt() <= tol {
            return Ok(((0..n).map(|i| m[(i, i)]).collect(), v));
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if m[(p, q)].abs() <= tol * real::<T>(1e-2) {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let apq = m[(p, q)];
                let theta = (aqq - app) / (real::<T>(2.0) * apq);
                let t = {
                    let sign = if theta >= T::zero() { T::one() } else { -T::one() };
                    sign / (theta.abs() + (theta * theta + T::one()).sqrt())
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    Err(LinalgError::EigenNoConvergence(max_sweeps))
}

/// Spectral norm of a symmetric matrix (largest |eigenvalue|).
pub fn sym_spectral_norm<T: Real>(a: &Matrix<T>) -> Result<T, LinalgError> {
    let (vals, _) = sym_eigen(a)?;
    Ok(vals.into_iter().fold(T::zero(), |m, v| m.max(v.abs())))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn sym_min_eigenvalue<T: Real>(a: &Matrix<T>) -> Result<T, LinalgError> {
    let (vals, _) = sym_eigen(a)?;
    Ok(vals.into_iter().fold(T::infinity(), T::min))
}

/// Least-norm solution of a (possibly singular) symmetric system via the
/// eigendecomposition pseudo-inverse. Returns the solution and whether any
/// eigenvalue was truncated (i.e. the system was rank-deficient).
pub fn sym_least_norm_solve<T: Real>(a: &Matrix<T>, b: &[T]) -> Result<(Vec<T>, bool), LinalgError> {
    let (vals, vecs) = sym_eigen(a)?;
    let n = vals.len();
    let max_abs = vals.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let cutoff = max_abs * real::<T>(1e-12);
    let mut truncated = false;
    let mut x = vec![T::zero(); n];
    for (k, &lam) in vals.iter().enumerate() {
        if lam.abs() <= cutoff {
            truncated = true;
            continue;
        }
        let mut proj = T::zero();
        for i in 0..n {
            proj += vecs[(i, k)] * b[i];
        }
        let coef = proj / lam;
        for i in 0..n {
            x[i] += coef * vecs[(i, k)];
        }
    }
    Ok((x, truncated))
}

// Padé coefficients and 1-norm thresholds from the scaling-and-squaring
// method (Higham 2005), orders 3/5/7/9/13.
const THETA_3: f64 = 1.495_585_217_958_292e-2;
const THETA_5: f64 = 2.539_398_330_063_23e-1;
const THETA_7: f64 = 9.504_178_996_162_932e-1;
const THETA_9: f64 = 2.097_847_961_257_068;
const THETA_13: f64 = 5.371_920_351_148_152;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [17_297_280.0, 8_648_640.0, 1_995_840.0, 277_200.0, 25_200.0, 1_512.0, 56.0, 1.0];
const B9: [f64; 10] = [
    17_643_225_600.0,
    8_821_612_800.0,
    2_075_673_600.0,
    302_702_400.0,
    30_270_240.0,
    2_162_160.0,
    110_880.0,
    3_960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

fn pade_uv<T: Real>(a: &Matrix<T>, powers: &[&Matrix<T>], coeffs: &[f64]) -> (Matrix<T>, Matrix<T>) {
    // powers = [A^2, A^4, ...] as needed by the order
    let n = a.rows();
    let ident = Matrix::identity(n);
    let mut u_inner = ident.scale(real(coeffs[1]));
    let mut v = ident.scale(real(coeffs[0]));
    for (idx, p) in powers.iter().enumerate() {
        let k = 2 * (idx + 1);
        u_inner = &u_inner + &p.scale(real(coeffs[k + 1]));
        v = &v + &p.scale(real(coeffs[k]));
    }
    (a * &u_inner, v)
}

/// Matrix exponential `exp(a)` by Padé approximation with scaling and squaring.
pub fn expm<T: Real>(a: &Matrix<T>) -> Result<Matrix<T>, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::DimensionMismatch(format!(
            "expm needs a square matrix, got {}x{}",
            a.rows, a.cols
        )));
    }
    let norm = a.one_norm();
    let a2 = a * a;
    let (u, v, squarings) = if norm <= real(THETA_3) {
        let (u, v) = pade_uv(a, &[&a2], &B3);
        (u, v, 0u32)
    } else if norm <= real(THETA_5) {
        let a4 = &a2 * &a2;
        let (u, v) = pade_uv(a, &[&a2, &a4], &B5);
        (u, v, 0)
    } else if norm <= real(THETA_7) {
        let a4 = &a2 * &a2;
        let a6 = &a4 * &a2;
        let (u, v) = pade_uv(a, &[&a2, &a4, &a6], &B7);
        (u, v, 0)
    } else if norm <= real(THETA_9) {
        let a4 = &a2 * &a2;
        let a6 = &a4 * &a2;
        let a8 = &a6 * &a2;
        let (u, v) = pade_uv(a, &[&a2, &a4, &a6, &a8], &B9);
        (u, v, 0)
    } else {
        let ratio = (norm / real(THETA_13)).to_f64().unwrap_or(f64::INFINITY);
        let squarings = ratio.log2().ceil().max(0.0) as u32;
        let scaled = a.scale(real(0.5f64.powi(squarings as i32)));
        let s2 = &scaled * &scaled;
        let s4 = &s2 * &s2;
        let s6 = &s4 * &s2;
        // order-13 evaluation splits the polynomial around A^6
        let b = &B13;
        let ident = Matrix::identity(a.rows());
        let w1 = &(&s6.scale(real(b[13])) + &s4.scale(real(b[11]))) + &s2.scale(real(b[9]));
        let w2 = &(&(&s6.scale(real(b[7])) + &s4.scale(real(b[5]))) + &s2.scale(real(b[3]))) + &ident.scale(real(b[1]));
        let u = &scaled * &(&(&s6 * &w1) + &w2);
        let z1 = &(&s6.scale(real(b[12])) + &s4.scale(real(b[10]))) + &s2.scale(real(b[8]));
        let z2 = &(&(&s6.scale(real(b[6])) + &s4.scale(real(b[4]))) + &s2.scale(real(b[2]))) + &ident.scale(real(b[0]));
        let v = &(&s6 * &z1) + &z2;
        (u, v, squarings)
    };
    let denom = &v - &u;
    let numer = &v + &u;
    let mut r = Lu::factor(&denom)?.solve_matrix(&numer);
    for _ in 0..squarings {
        r = &r * &r;
    }
    Ok(r)
}

/// Ordinary least squares fit of `y = intercept + slope * x`.
///
/// Returns `(intercept, slope, rms_residual)`.
pub fn linear_fit<T: Real>(xs: &[T], ys: &[T]) -> Option<(T, T, T)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = real_of_usize::<T>(xs.len());
    let mean_x = xs.iter().copied().sum::<T>() / n;
    let mean_y = ys.iter().copied().sum::<T>() / n;
    let mut sxx = T::zero();
    let mut sxy = T::zero();
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    if sxx <= T::zero() {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let mut ss = T::zero();
    for (&x, &y) in xs.iter().zip(ys) {
        let r = y - (intercept + slope * x);
        ss += r * r;
    }
    Some((intercept, slope, (ss / n).sqrt()))
}

/// Least squares fit of `y = c0 + c1 x + c2 x^2`; returns `(c0, c1, c2)`.
pub fn quadratic_fit<T: Real>(xs: &[T], ys: &[T]) -> Option<(T, T, T)> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return None;
    }
    let n = xs.len();
    let mut g = Matrix::<T>::zeros(3, 3);
    let mut rhs = vec![T::zero(); 3];
    for k in 0..n {
        let x = xs[k];
        let basis = [T::one(), x, x * x];
        for i in 0..3 {
            rhs[i] += basis[i] * ys[k];
            for j in 0..3 {
                let add = basis[i] * basis[j];
                g[(i, j)] += add;
            }
        }
    }
    let c = solve(&g, &rhs).ok()?;
    Some((c[0], c[1], c[2]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn matmul_and_identity() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let i = Matrix::<f64>::identity(2);
        assert_eq!(&a * &i, a);
        let b = &a * &a;
        assert_eq!(b[(0, 0)], 7.0);
        assert_eq!(b[(1, 1)], 22.0);
    }

    #[test]
    fn lu_solves_known_system() {
        let a = Matrix::from_rows(&[vec![4.0, 1.0], vec![1.0, 3.0]]);
        let x = solve(&a, &[1.0, 2.0]).unwrap();
        approx(x[0], 1.0 / 11.0, 1e-14);
        approx(x[1], 7.0 / 11.0, 1e-14);
    }

    #[test]
    fn lu_detects_singular() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert!(matches!(solve(&a, &[1.0, 1.0]), Err(LinalgError::Singular { .. })));
    }

    #[test]
    fn jacobi_eigen_known_symmetric() {
        let a = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]);
        let (mut vals, vecs) = sym_eigen(&a).unwrap();
        vals.sort_by(|x, y| x.partial_cmp(y).unwrap());
        approx(vals[0], 1.0, 1e-12);
        approx(vals[1], 3.0, 1e-12);
        // columns are orthonormal
        let vtv = &vecs.transpose() * &vecs;
        assert!(vtv.max_abs_diff(&Matrix::identity(2)) < 1e-12);
    }

    #[test]
    fn spectral_norm_of_diagonal() {
        let a = Matrix::from_rows(&[vec![0.2, 0.0], vec![0.0, 2.0]]);
        approx(sym_spectral_norm(&a).unwrap(), 2.0, 1e-13);
    }

    #[test]
    fn least_norm_handles_rank_deficiency() {
        let a = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]);
        let (x, truncated) = sym_least_norm_solve(&a, &[2.0, 0.0]).unwrap();
        assert!(truncated);
        approx(x[0], 2.0, 1e-12);
        approx(x[1], 0.0, 1e-12);
    }

    #[test]
    fn expm_of_zero_and_diagonal() {
        let z = Matrix::<f64>::zeros(3, 3);
        assert!(expm(&z).unwrap().max_abs_diff(&Matrix::identity(3)) < 1e-15);
        let d = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, -2.0]]);
        let e = expm(&d).unwrap();
        approx(e[(0, 0)], 1.0f64.exp(), 1e-13);
        approx(e[(1, 1)], (-2.0f64).exp(), 1e-14);
        approx(e[(0, 1)], 0.0, 1e-15);
    }

    #[test]
    fn expm_nilpotent() {
        let n = Matrix::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]);
        let e = expm(&n).unwrap();
        let expected = Matrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]);
        assert!(e.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn expm_symmetric_closed_form() {
        // exp(-t L) for L = [[1,-1],[-1,1]] has the closed form
        // [[(1+e^{-2t})/2, (1-e^{-2t})/2], ...]
        for &t in &[0.05f64, 0.3, 1.7, 9.0] {
            let l = Matrix::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]]);
            let e = expm(&l.scale(-t)).unwrap();
            let d = (-2.0 * t).exp();
            approx(e[(0, 0)], (1.0 + d) / 2.0, 1e-12);
            approx(e[(0, 1)], (1.0 - d) / 2.0, 1e-12);
            approx(e[(1, 0)], (1.0 - d) / 2.0, 1e-12);
        }
    }

    #[test]
    fn expm_large_norm_uses_squaring() {
        let a = Matrix::from_rows(&[vec![-30.0, 10.0], vec![4.0, -40.0]]);
        let e = expm(&a).unwrap();
        // exp(A) via exp(A/2)^2 must agree with direct evaluation
        let half = expm(&a.scale(0.5)).unwrap();
        let sq = &half * &half;
        assert!(e.max_abs_diff(&sq) < 1e-12);
    }

    #[test]
    fn linear_fit_exact_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.5 - 0.75 * x).collect();
        let (b, m, r) = linear_fit(&xs, &ys).unwrap();
        approx(b, 2.5, 1e-13);
        approx(m, -0.75, 1e-13);
        assert!(r < 1e-13);
    }

    #[test]
    fn quadratic_fit_exact_parabola() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64 * 0.3).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 1.0 - 2.0 * x + 0.5 * x * x).collect();
        let (c0, c1, c2) = quadratic_fit(&xs, &ys).unwrap();
        approx(c0, 1.0, 1e-10);
        approx(c1, -2.0, 1e-10);
        approx(c2, 0.5, 1e-10);
    }
}
