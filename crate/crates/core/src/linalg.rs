//! Small dense linear algebra: the symmetric eigensolver used for the
//! transition operator, Hermitian solves for flow Gram systems, and a
//! conjugate-gradient routine for the matrix-free inherited projection.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Off-diagonal Frobenius threshold of the Jacobi iteration, relative to ‖A‖_F.
pub const JACOBI_TOL: f64 = 1e-13;
/// Eigenvalues closer than this are treated as one degenerate cluster.
pub const CLUSTER_GAP: f64 = 1e-10;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

pub type RealMatrix = Matrix<f64>;
pub type ComplexMatrix = Matrix<C64>;

impl<T: Copy + Default> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::default(); rows * cols],
        }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn set_column(&mut self, j: usize, col: &[T]) {
        for (i, &v) in col.iter().enumerate() {
            self.set(i, j, v);
        }
    }
}

impl RealMatrix {
    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in 0..i {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|i| {
                self.data[i * self.cols..(i + 1) * self.cols]
                    .iter()
                    .zip(x)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }
}

impl ComplexMatrix {
    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, C64::new(1.0, 0.0));
        }
        m
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j).conj());
            }
        }
        out
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == C64::default() {
                    continue;
                }
                let row = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, x: &[C64]) -> Vec<C64> {
        (0..self.rows)
            .map(|i| {
                self.data[i * self.cols..(i + 1) * self.cols]
                    .iter()
                    .zip(x)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// `‖A†A − I‖_max`.
    pub fn unitarity_defect(&self) -> f64 {
        self.adjoint()
            .matmul(self)
            .max_abs_diff(&Self::identity(self.cols))
    }

    /// Principal submatrix on the first `k` rows and columns.
    pub fn leading_block(&self, k: usize) -> Self {
        let mut out = Self::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                out.set(i, j, self.get(i, j));
            }
        }
        out
    }
}

/// Eigendecomposition of a real symmetric matrix; `vectors` holds the
/// orthonormal eigenvectors as columns, matching `values` in ascending order.
#[derive(Clone, Debug)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: RealMatrix,
    pub sweeps: usize,
}

impl SymEigen {
    pub fn vector(&self, k: usize) -> Vec<f64> {
        self.vectors.column(k)
    }
}

/// Cyclic Jacobi rotations until the off-diagonal Frobenius norm drops below
/// [`JACOBI_TOL`] times the Frobenius norm of the input.
pub fn jacobi_eigen(a: &RealMatrix) -> Result<SymEigen> {
    let n = a.rows();
    if n != a.cols() {
        return Err(Error::dim("symmetric matrix", a.rows(), a.cols()));
    }
    let scale = a.frobenius().max(f64::MIN_POSITIVE);
    if a.max_asymmetry() > 1e-12 * scale {
        return Err(Error::Precondition("jacobi_eigen needs a symmetric matrix".into()));
    }
    let mut m = a.data.clone();
    let mut v = RealMatrix::identity(n).data;
    let off = |m: &[f64]| {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += m[i * n + j] * m[i * n + j];
                }
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    while off(&m) > JACOBI_TOL * scale {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::Numerical(format!(
                "Jacobi iteration did not converge in {JACOBI_MAX_SWEEPS} sweeps"
            )));
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let tau = (aqq - app) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[p * n + k];
                    let aqk = m[q * n + k];
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
                m[p * n + q] = 0.0;
                m[q * n + p] = 0.0;
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
    order.sort_by(|&i, &j| m[i * n + i].total_cmp(&m[j * n + j]));
    let values: Vec<f64> = order.iter().map(|&i| m[i * n + i]).collect();
    let mut vectors = RealMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..n {
            vectors.set(k, dst, v[k * n + src]);
        }
    }

    // re-orthonormalize inside numerically degenerate clusters
    for range in clusters(&values, CLUSTER_GAP) {
        if range.len() < 2 {
            continue;
        }
        let mut cols: Vec<Vec<f64>> = range.clone().map(|j| vectors.column(j)).collect();
        gram_schmidt_real(&mut cols);
        for (j, col) in range.zip(cols) {
            vectors.set_column(j, &col);
        }
    }
    Ok(SymEigen {
        values,
        vectors,
        sweeps,
    })
}

/// Index ranges of consecutive sorted values whose neighbours differ by less than `gap`.
pub fn clusters(sorted: &[f64], gap: f64) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=sorted.len() {
        if i == sorted.len() || sorted[i] - sorted[i - 1] >= gap {
            out.push(start..i);
            start = i;
        }
    }
    out
}

fn gram_schmidt_real(cols: &mut [Vec<f64>]) {
    for _ in 0..2 {
        for i in 0..cols.len() {
            for j in 0..i {
                let d: f64 = cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b).sum();
                let (head, tail) = cols.split_at_mut(i);
                for (x, y) in tail[0].iter_mut().zip(&head[j]) {
                    *x -= d * y;
                }
            }
            let nrm = cols[i].iter().map(|x| x * x).sum::<f64>().sqrt();
            cols[i].iter_mut().for_each(|x| *x /= nrm);
        }
    }
}

pub fn cdot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn cnorm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Eigendecomposition of a Hermitian matrix with orthonormal eigenvectors.
#[derive(Clone, Debug)]
pub struct HermEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<C64>>,
}

/// Hermitian eigensolver through the real symmetric embedding
/// `[[Re A, −Im A], [Im A, Re A]]`, whose spectrum is that of `A` doubled.
pub fn hermitian_eigen(a: &ComplexMatrix) -> Result<HermEigen> {
    let n = a.rows();
    if n != a.cols() {
        return Err(Error::dim("hermitian matrix", a.rows(), a.cols()));
    }
    let mut emb = RealMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let z = a.get(i, j);
            emb.set(i, j, z.re);
            emb.set(i + n, j + n, z.re);
            emb.set(i, j + n, -z.im);
            emb.set(i + n, j, z.im);
        }
    }
    let eig = jacobi_eigen(&emb)?;
    let mut values = Vec::with_capacity(n);
    let mut vectors: Vec<Vec<C64>> = Vec::with_capacity(n);
    for range in clusters(&eig.values, 1e-9) {
        let want = range.len() / 2;
        if range.len() % 2 != 0 {
            return Err(Error::Numerical(
                "hermitian embedding produced an odd eigenvalue cluster".into(),
            ));
        }
        let mut cands: Vec<Vec<C64>> = range
            .clone()
            .map(|k| {
                let col = eig.vector(k);
                (0..n).map(|i| C64::new(col[i], col[i + n])).collect()
            })
            .collect();
        let mean = range.clone().map(|k| eig.values[k]).sum::<f64>() / range.len() as f64;
        // pivoted Gram-Schmidt: keep the candidate with the largest remainder
        let mut picked: Vec<Vec<C64>> = Vec::new();
        for _ in 0..want {
            let (best, nrm) = cands
                .iter()
                .enumerate()
                .map(|(i, c)| (i, cnorm(c)))
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .expect("non-empty cluster");
            let mut v = cands.swap_remove(best);
            v.iter_mut().for_each(|x| *x /= nrm);
            for c in cands.iter_mut() {
                let d = cdot(&v, c);
                for (x, y) in c.iter_mut().zip(&v) {
                    *x -= d * y;
                }
            }
            picked.push(v);
        }
        for v in picked {
            values.push(mean);
            vectors.push(v);
        }
    }
    Ok(HermEigen { values, vectors })
}

/// Cholesky factor `A = L L†` of a Hermitian positive definite matrix.
#[derive(Clone, Debug)]
pub struct Cholesky {
    l: ComplexMatrix,
}

impl Cholesky {
    pub fn new(a: &ComplexMatrix) -> Result<Self> {
        let n = a.rows();
        let mut l = ComplexMatrix::zeros(n, n);
        for j in 0..n {
            let mut d = a.get(j, j).re;
            for k in 0..j {
                d -= l.get(j, k).norm_sqr();
            }
            if d <= 0.0 || !d.is_finite() {
                return Err(Error::Numerical(format!(
                    "matrix is not positive definite (pivot {j} = {d:e})"
                )));
            }
            let d = d.sqrt();
            l.set(j, j, C64::new(d, 0.0));
            for i in j + 1..n {
                let mut s = a.get(i, j);
                for k in 0..j {
                    s -= l.get(i, k) * l.get(j, k).conj();
                }
                l.set(i, j, s / d);
            }
        }
        Ok(Cholesky { l })
    }

    /// Cheap condition estimate `(max L_ii / min L_ii)²`.
    pub fn condition_estimate(&self) -> f64 {
        let n = self.l.rows();
        if n == 0 {
            return 1.0;
        }
        let diag: Vec<f64> = (0..n).map(|i| self.l.get(i, i).re).collect();
        let hi = diag.iter().cloned().fold(0.0, f64::max);
        let lo = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        (hi / lo).powi(2)
    }

    #[allow(clippy::needless_range_loop)]
    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        let n = self.l.rows();
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l.get(i, k) * y[k];
            }
            y[i] = s / self.l.get(i, i);
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= self.l.get(k, i).conj() * y[k];
            }
            y[i] = s / self.l.get(i, i);
        }
        y
    }
}

/// Conjugate gradients for a Hermitian positive definite operator.
pub fn conjugate_gradient<F>(apply: F, b: &[C64], tol: f64, max_iter: usize) -> Result<Vec<C64>>
where
    F: Fn(&[C64]) -> Vec<C64>,
{
    let n = b.len();
    let bnorm = cnorm(b);
    let mut x = vec![C64::default(); n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rr = cdot(&r, &r).re;
    for _ in 0..max_iter {
        if rr.sqrt() <= tol * bnorm {
            return Ok(x);
        }
        let ap = apply(&p);
        let pap = cdot(&p, &ap).re;
        if pap <= 0.0 {
            return Err(Error::Numerical("operator is not positive definite".into()));
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = cdot(&r, &r).re;
        let beta = rr_new / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    if rr.sqrt() <= tol * bnorm {
        Ok(x)
    } else {
        Err(Error::Numerical(format!(
            "conjugate gradients stalled at relative residual {:e}",
            rr.sqrt() / bnorm
        )))
    }
}

/// Eigenvalues of a general complex matrix via complex Schur decomposition.
///
/// Used only as a brute-force cross-check for walk spectra.
pub fn dense_eigenvalues(a: &ComplexMatrix) -> Result<Vec<C64>> {
    let n = a.rows();
    let m = nalgebra::DMatrix::from_row_slice(n, n, a.as_slice());
    let schur = nalgebra::Schur::try_new(m, 1e-15, 10_000)
        .ok_or_else(|| Error::Numerical("Schur decomposition did not converge".into()))?;
    let eig = schur
        .eigenvalues()
        .ok_or_else(|| Error::Numerical("Schur form is not triangular".into()))?;
    Ok(eig.iter().copied().collect())
}

/// Greedy one-to-one matching of two eigenvalue multisets; returns the
/// largest distance between matched pairs, or `None` when sizes differ.
pub fn match_multisets(a: &[C64], b: &[C64]) -> Option<f64> {
    if a.len() != b.len() {
        return None;
    }
    let mut used = vec![false; b.len()];
    let mut worst = 0.0f64;
    for x in a {
        let (j, d) = b
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, y)| (j, (x - y).norm()))
            .min_by(|p, q| p.1.total_cmp(&q.1))?;
        used[j] = true;
        worst = worst.max(d);
    }
    Some(worst)
}
