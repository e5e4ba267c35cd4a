//! Dense complex linear algebra used throughout the crate.
//!
//! Matrices are small (a few dozen rows at most in the detector, a few hundred
//! in the random-matrix checks), so everything here is plain row-major storage
//! with straightforward loops. The routines that matter numerically are the
//! Householder QR with a non-negative real diagonal, the Cholesky based
//! hermitian solve and a cyclic Jacobi eigenvalue solver for hermitian input.

use std::fmt;
use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use thiserror::Error;

/// Complex column vector.
pub type CVector = Vec<Complex64>;

/// Failures of the linear algebra kernels.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    /// A diagonal entry of `R` fell below `1e-12` times the largest one.
    #[error("matrix is numerically rank deficient (column {column})")]
    RankDeficient { column: usize },
    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },
    #[error("dimension mismatch: {0}")]
    Shape(String),
    #[error("eigenvalue iteration did not converge")]
    NoConvergence,
}

/// Dense complex matrix in row-major order.
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                let z = self[(i, j)];
                write!(f, "{:+.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = Complex64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from row-major data. Panics if the length does not match.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<Complex64>) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major data length mismatch");
        Self { rows, cols, data }
    }

    /// Real diagonal matrix.
    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = Complex64::new(d, 0.0);
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> CVector {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn matmul(&self, rhs: &CMatrix) -> Self {
        assert_eq!(self.cols, rhs.rows, "matmul dimension mismatch");
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let rrow = rhs.row(k);
                let orow = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, &b) in orow.iter_mut().zip(rrow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[Complex64]) -> CVector {
        assert_eq!(self.cols, v.len(), "matrix-vector dimension mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `self^H * v`
    pub fn adjoint_mul_vec(&self, v: &[Complex64]) -> CVector {
        assert_eq!(self.rows, v.len(), "adjoint matrix-vector dimension mismatch");
        let mut out = vec![Complex64::new(0.0, 0.0); self.cols];
        for (i, &vi) in v.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a.conj() * vi;
            }
        }
        out
    }

    /// Copy of the block `rows r0..r1`, `cols c0..c1`.
    pub fn block(&self, r0: usize, r1: usize, c0: usize, c1: usize) -> Self {
        Self::from_fn(r1 - r0, c1 - c0, |i, j| self[(r0 + i, c0 + j)])
    }

    /// Matrix with columns reordered so that column `j` of the result is column `perm[j]` of `self`.
    pub fn permute_columns(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.cols);
        Self::from_fn(self.rows, self.cols, |i, j| self[(i, perm[j])])
    }

    /// Matrix made of the listed columns, in order.
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        Self::from_fn(self.rows, cols.len(), |i, j| self[(i, cols[j])])
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn add(&self, rhs: &CMatrix) -> Self {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, rhs: &CMatrix) -> Self {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }

    /// `self + s * I`
    pub fn add_diag(&self, s: f64) -> Self {
        assert_eq!(self.rows, self.cols);
        let mut out = self.clone();
        for i in 0..self.rows {
            out[(i, i)] += s;
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, rhs: &CMatrix) -> f64 {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        self.data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_upper_triangular(&self, tol: f64) -> bool {
        (0..self.rows).all(|i| (0..self.cols.min(i)).all(|j| self[(i, j)].norm() <= tol))
    }
}

/// `x^H y`
pub fn dot(x: &[Complex64], y: &[Complex64]) -> Complex64 {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

pub fn norm_sqr(x: &[Complex64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum()
}

/// Thin QR decomposition `H = Q1 R` of an `L x N` matrix with `L >= N`.
///
/// Householder reflections followed by a unit-phase rescaling of each column of
/// `Q1` (and the matching row of `R`) so that `R` has a real, non-negative diagonal.
pub fn qr_thin(h: &CMatrix) -> Result<(CMatrix, CMatrix), LinalgError> {
    let (l, n) = (h.rows(), h.cols());
    if l < n || n == 0 {
        return Err(LinalgError::Shape(format!("qr_thin needs L >= N >= 1, got {l}x{n}")));
    }
    let mut a = h.clone();
    let mut reflectors: Vec<Option<CVector>> = Vec::with_capacity(n);

    for j in 0..n {
        let xnorm = (j..l).map(|i| a[(i, j)].norm_sqr()).sum::<f64>().sqrt();
        if xnorm == 0.0 {
            reflectors.push(None);
            continue;
        }
        let x0 = a[(j, j)];
        let phase = if x0.norm() > 0.0 { x0 / x0.norm() } else { Complex64::new(1.0, 0.0) };
        let alpha = -phase * xnorm;
        let mut v: CVector = (j..l).map(|i| a[(i, j)]).collect();
        v[0] -= alpha;
        let vnorm = norm_sqr(&v).sqrt();
        if vnorm == 0.0 {
            reflectors.push(None);
            continue;
        }
        for z in v.iter_mut() {
            *z /= vnorm;
        }
        // A[j.., j..] <- (I - 2 v v^H) A[j.., j..]
        for c in j..n {
            let s: Complex64 = v.iter().enumerate().map(|(t, vi)| vi.conj() * a[(j + t, c)]).sum();
            for (t, vi) in v.iter().enumerate() {
                a[(j + t, c)] -= 2.0 * vi * s;
            }
        }
        reflectors.push(Some(v));
    }

    // Q1 = H_0 H_1 ... H_{n-1} applied to the first n columns of I_L.
    let mut q = CMatrix::zeros(l, n);
    for i in 0..n {
        q[(i, i)] = Complex64::new(1.0, 0.0);
    }
    for j in (0..n).rev() {
        if let Some(v) = &reflectors[j] {
            for c in 0..n {
                let s: Complex64 = v.iter().enumerate().map(|(t, vi)| vi.conj() * q[(j + t, c)]).sum();
                for (t, vi) in v.iter().enumerate() {
                    q[(j + t, c)] -= 2.0 * vi * s;
                }
            }
        }
    }

    let mut r = CMatrix::zeros(n, n);
    for i in 0..n {
        for c in i..n {
            r[(i, c)] = a[(i, c)];
        }
    }
    for i in 0..n {
        let d = r[(i, i)];
        let mag = d.norm();
        if mag > 0.0 {
            let u = d / mag;
            for c in i..n {
                r[(i, c)] *= u.conj();
            }
            for row in 0..l {
                q[(row, i)] *= u;
            }
        }
        r[(i, i)] = Complex64::new(mag, 0.0);
    }

    let dmax = (0..n).map(|i| r[(i, i)].re).fold(0.0, f64::max);
    for i in 0..n {
        if r[(i, i)].re <= 1e-12 * dmax || dmax == 0.0 {
            return Err(LinalgError::RankDeficient { column: i });
        }
    }
    Ok((q, r))
}

/// Lower-triangular Cholesky factor `G` with `A = G G^H`. Only the lower triangle of `a` is read.
pub fn cholesky(a: &CMatrix) -> Result<CMatrix, LinalgError> {
    let n = a.rows();
    if a.cols() != n {
        return Err(LinalgError::Shape(format!("cholesky needs a square matrix, got {}x{}", n, a.cols())));
    }
    let scale = (0..n).map(|i| a[(i, i)].re.abs()).fold(0.0, f64::max);
    let mut g = CMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for k in 0..j {
            d -= g[(j, k)].norm_sqr();
        }
        if !(d > 1e-14 * scale) || !d.is_finite() {
            return Err(LinalgError::NotPositiveDefinite { pivot: j });
        }
        let djj = d.sqrt();
        g[(j, j)] = Complex64::new(djj, 0.0);
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= g[(i, k)] * g[(j, k)].conj();
            }
            g[(i, j)] = s / djj;
        }
    }
    Ok(g)
}

fn cholesky_solve_in_place(g: &CMatrix, b: &mut CMatrix) {
    let n = g.rows();
    let m = b.cols();
    for c in 0..m {
        // forward: G z = b
        for i in 0..n {
            let mut s = b[(i, c)];
            for k in 0..i {
                s -= g[(i, k)] * b[(k, c)];
            }
            b[(i, c)] = s / g[(i, i)].re;
        }
        // backward: G^H x = z
        for i in (0..n).rev() {
            let mut s = b[(i, c)];
            for k in i + 1..n {
                s -= g[(k, i)].conj() * b[(k, c)];
            }
            b[(i, c)] = s / g[(i, i)].re;
        }
    }
}

/// Solves `A X = B` for hermitian positive definite `A`.
pub fn hermitian_solve(a: &CMatrix, b: &CMatrix) -> Result<CMatrix, LinalgError> {
    if b.rows() != a.rows() {
        return Err(LinalgError::Shape(format!(
            "hermitian_solve: A is {}x{}, B has {} rows",
            a.rows(),
            a.cols(),
            b.rows()
        )));
    }
    let g = cholesky(a)?;
    let mut x = b.clone();
    cholesky_solve_in_place(&g, &mut x);
    Ok(x)
}

/// Solves `A x = b` for a single right-hand side.
pub fn hermitian_solve_vec(a: &CMatrix, b: &[Complex64]) -> Result<CVector, LinalgError> {
    let bm = CMatrix::from_row_major(b.len(), 1, b.to_vec());
    Ok(hermitian_solve(a, &bm)?.as_slice().to_vec())
}

/// Inverse of a hermitian positive definite matrix.
pub fn hermitian_inverse(a: &CMatrix) -> Result<CMatrix, LinalgError> {
    let inv = hermitian_solve(a, &CMatrix::identity(a.rows()))?;
    // symmetrize away round-off
    Ok(CMatrix::from_fn(inv.rows(), inv.cols(), |i, j| 0.5 * (inv[(i, j)] + inv[(j, i)].conj())))
}

/// `ln det A` for hermitian positive definite `A`.
pub fn hermitian_log_det(a: &CMatrix) -> Result<f64, LinalgError> {
    let g = cholesky(a)?;
    Ok((0..g.rows()).map(|i| 2.0 * g[(i, i)].re.ln()).sum())
}

/// Eigenvalues of a hermitian matrix in ascending order (cyclic Jacobi).
pub fn hermitian_eigenvalues(a: &CMatrix) -> Result<Vec<f64>, LinalgError> {
    let n = a.rows();
    if a.cols() != n {
        return Err(LinalgError::Shape("eigenvalues need a square matrix".into()));
    }
    let mut m = CMatrix::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)].conj()));
    let total = m.frobenius_norm();
    if total == 0.0 {
        return Ok(vec![0.0; n]);
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)].norm_sqr())
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * total {
            let mut ev: Vec<f64> = (0..n).map(|i| m[(i, i)].re).collect();
            ev.sort_by(f64::total_cmp);
            return Ok(ev);
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                let g = apq.norm();
                if g <= 1e-300 {
                    continue;
                }
                // Rotate the phase of index q so that m[p][q] becomes real and positive.
                let ph = apq / g;
                for r in 0..n {
                    m[(r, q)] *= ph.conj();
                }
                for r in 0..n {
                    m[(q, r)] *= ph;
                }
                let app = m[(p, p)].re;
                let aqq = m[(q, q)].re;
                let theta = (aqq - app) / (2.0 * g);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for r in 0..n {
                    let (x, y) = (m[(r, p)], m[(r, q)]);
                    m[(r, p)] = c * x - s * y;
                    m[(r, q)] = s * x + c * y;
                }
                for r in 0..n {
                    let (x, y) = (m[(p, r)], m[(q, r)]);
                    m[(p, r)] = c * x - s * y;
                    m[(q, r)] = s * x + c * y;
                }
                m[(p, q)] = Complex64::new(0.0, 0.0);
                m[(q, p)] = Complex64::new(0.0, 0.0);
                m[(p, p)] = Complex64::new(m[(p, p)].re, 0.0);
                m[(q, q)] = Complex64::new(m[(q, q)].re, 0.0);
            }
        }
    }
    Err(LinalgError::NoConvergence)
}

/// Hermitian positive semi-definite square root via eigen-free Denman–Beavers iteration.
///
/// Used for channel correlation matrices, which are well conditioned in practice.
pub fn hermitian_sqrt(a: &CMatrix) -> Result<CMatrix, LinalgError> {
    let n = a.rows();
    // Scaled Newton (Denman–Beavers) on A + eps I keeps the iteration defined for PSD input.
    let eps = 1e-14 * (0..n).map(|i| a[(i, i)].re.abs()).fold(0.0, f64::max).max(1e-300);
    let a = a.add_diag(eps);
    cholesky(&a)?;
    let mut y = a.clone();
    let mut z = CMatrix::identity(n);
    for _ in 0..100 {
        let yi = general_inverse(&y)?;
        let zi = general_inverse(&z)?;
        let y1 = y.add(&zi).scale(0.5);
        let z1 = z.add(&yi).scale(0.5);
        let delta = y1.max_abs_diff(&y);
        y = y1;
        z = z1;
        if delta <= 1e-14 * y.frobenius_norm() {
            return Ok(CMatrix::from_fn(n, n, |i, j| 0.5 * (y[(i, j)] + y[(j, i)].conj())));
        }
    }
    Err(LinalgError::NoConvergence)
}

/// Gauss–Jordan inverse with partial pivoting for small general matrices.
pub fn general_inverse(a: &CMatrix) -> Result<CMatrix, LinalgError> {
    let n = a.rows();
    if a.cols() != n {
        return Err(LinalgError::Shape("inverse needs a square matrix".into()));
    }
    let mut m = a.clone();
    let mut inv = CMatrix::identity(n);
    let scale = a.frobenius_norm().max(1e-300);
    for c in 0..n {
        let piv = (c..n)
            .max_by(|&i, &j| m[(i, c)].norm().total_cmp(&m[(j, c)].norm()))
            .unwrap_or(c);
        if m[(piv, c)].norm() <= 1e-14 * scale {
            return Err(LinalgError::RankDeficient { column: c });
        }
        if piv != c {
            for j in 0..n {
                let t = m[(c, j)];
                m[(c, j)] = m[(piv, j)];
                m[(piv, j)] = t;
                let t = inv[(c, j)];
                inv[(c, j)] = inv[(piv, j)];
                inv[(piv, j)] = t;
            }
        }
        let d = m[(c, c)];
        for j in 0..n {
            m[(c, j)] /= d;
            inv[(c, j)] /= d;
        }
        for i in 0..n {
            if i != c {
                let f = m[(i, c)];
                if f != Complex64::new(0.0, 0.0) {
                    for j in 0..n {
                        let mc = m[(c, j)];
                        let ic = inv[(c, j)];
                        m[(i, j)] -= f * mc;
                        inv[(i, j)] -= f * ic;
                    }
                }
            }
        }
    }
    Ok(inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> CMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CMatrix::from_fn(rows, cols, |_, _| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            c(re, im) * std::f64::consts::FRAC_1_SQRT_2
        })
    }

    #[test]
    fn qr_identity() {
        let (q, r) = qr_thin(&CMatrix::identity(3)).unwrap();
        assert!(q.max_abs_diff(&CMatrix::identity(3)) < 1e-15);
        assert!(r.max_abs_diff(&CMatrix::identity(3)) < 1e-15);
    }

    #[test]
    fn qr_scalar_sign_convention() {
        let h = CMatrix::from_row_major(1, 1, vec![c(-2.0, 0.0)]);
        let (q, r) = qr_thin(&h).unwrap();
        assert!((q[(0, 0)] - c(-1.0, 0.0)).norm() < 1e-15);
        assert!((r[(0, 0)] - c(2.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn qr_reconstruction_random() {
        for &(l, n) in &[(6usize, 4usize), (4, 4), (8, 6), (12, 12)] {
            for seed in 0..100 {
                let h = random_matrix(l, n, seed);
                let (q, r) = qr_thin(&h).unwrap();
                assert!(q.matmul(&r).sub(&h).frobenius_norm() < 1e-10);
                assert!(q.adjoint().matmul(&q).sub(&CMatrix::identity(n)).frobenius_norm() < 1e-10);
                assert!(r.is_upper_triangular(0.0));
                for i in 0..n {
                    assert_eq!(r[(i, i)].im, 0.0);
                    assert!(r[(i, i)].re >= 0.0);
                }
            }
        }
    }

    #[test]
    fn qr_rank_deficient() {
        let mut h = random_matrix(4, 3, 7);
        for i in 0..4 {
            h[(i, 2)] = h[(i, 0)] * 2.0;
        }
        assert!(matches!(qr_thin(&h), Err(LinalgError::RankDeficient { .. })));
    }

    #[test]
    fn solve_identity_and_scaled() {
        let b = random_matrix(3, 2, 1);
        let x = hermitian_solve(&CMatrix::identity(3), &b).unwrap();
        assert!(x.max_abs_diff(&b) < 1e-15);
        let x = hermitian_solve(&CMatrix::identity(3).scale(2.0), &CMatrix::identity(3)).unwrap();
        assert!(x.max_abs_diff(&CMatrix::identity(3).scale(0.5)) < 1e-15);
    }

    #[test]
    fn solve_residual_random() {
        for seed in 0..20 {
            let m = random_matrix(6, 6, seed);
            let a = m.adjoint().matmul(&m).add_diag(1.0);
            let b = random_matrix(6, 3, seed + 100);
            let x = hermitian_solve(&a, &b).unwrap();
            let resid = a.matmul(&x).sub(&b).frobenius_norm() / b.frobenius_norm();
            assert!(resid < 1e-10, "residual {resid}");
        }
    }

    #[test]
    fn solve_rejects_indefinite() {
        let a = CMatrix::from_diag(&[1.0, -1.0]);
        assert!(matches!(
            hermitian_solve(&a, &CMatrix::identity(2)),
            Err(LinalgError::NotPositiveDefinite { pivot: 1 })
        ));
    }

    #[test]
    fn jacobi_eigenvalues_match_trace_and_det() {
        for seed in 0..30 {
            let m = random_matrix(7, 5, seed);
            let a = m.adjoint().matmul(&m);
            let ev = hermitian_eigenvalues(&a).unwrap();
            let trace: f64 = (0..5).map(|i| a[(i, i)].re).sum();
            assert!((ev.iter().sum::<f64>() - trace).abs() < 1e-10 * trace);
            let logdet = hermitian_log_det(&a).unwrap();
            let logdet_ev: f64 = ev.iter().map(|x| x.ln()).sum();
            assert!((logdet - logdet_ev).abs() < 1e-9);
            assert!(ev.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn jacobi_diagonal_and_2x2() {
        let ev = hermitian_eigenvalues(&CMatrix::from_diag(&[3.0, 1.0, 2.0])).unwrap();
        assert_eq!(ev, vec![1.0, 2.0, 3.0]);
        // [[2, i],[-i, 2]] has eigenvalues 1 and 3
        let a = CMatrix::from_row_major(2, 2, vec![c(2.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(2.0, 0.0)]);
        let ev = hermitian_eigenvalues(&a).unwrap();
        assert!((ev[0] - 1.0).abs() < 1e-14 && (ev[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn sqrt_squares_back() {
        let m = random_matrix(5, 4, 3);
        let a = m.adjoint().matmul(&m).add_diag(0.1);
        let s = hermitian_sqrt(&a).unwrap();
        assert!(s.matmul(&s).sub(&a).frobenius_norm() < 1e-10 * a.frobenius_norm());
        let i = hermitian_sqrt(&CMatrix::identity(3)).unwrap();
        assert!(i.max_abs_diff(&CMatrix::identity(3)) < 1e-12);
    }

    #[test]
    fn inverse_roundtrip() {
        let a = random_matrix(5, 5, 11);
        let inv = general_inverse(&a).unwrap();
        assert!(a.matmul(&inv).sub(&CMatrix::identity(5)).frobenius_norm() < 1e-10);
    }
}
