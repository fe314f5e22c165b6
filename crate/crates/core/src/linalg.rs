//! Dense complex matrices and a Hermitian eigensolver.
//!
//! The matrices that appear here are compressed covariance blocks, gram
//! matrices and transfer matrices of at most a few hundred rows, so dense
//! storage and an O(n³) Hermitian eigensolver are adequate.

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex;
use num_traits::{One, Zero};

use crate::scalar::{cr, Real, C};

#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix<T: Real> {
    rows: usize,
    cols: usize,
    data: Vec<C<T>>,
}

impl<T: Real> CMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![C::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C<T>) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_real_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        Self::from_fn(rows, cols, |i, j| cr(f(i, j)))
    }

    pub fn diagonal(values: &[T]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = cr(*v);
        }
        m
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[C<T>] {
        &self.data
    }

    pub fn column(&self, j: usize) -> Vec<C<T>> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn scale(&self, s: C<T>) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| *z * s).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(C<T>) -> C<T>) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| f(*z)).collect(),
        }
    }

    /// Rows and columns picked out by index lists (a compression `P A Q`).
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        Self::from_fn(rows.len(), cols.len(), |i, j| self[(rows[i], cols[j])])
    }

    /// `(A + A*) / 2`.
    pub fn hermitian_part(&self) -> Self {
        assert!(self.is_square());
        let half = T::lit(0.5);
        Self::from_fn(self.rows, self.cols, |i, j| {
            (self[(i, j)] + self[(j, i)].conj()).scale(half)
        })
    }

    /// `(A - A*) / (2i)`, Hermitian whenever defined.
    pub fn antihermitian_part(&self) -> Self {
        assert!(self.is_square());
        let factor = Complex::new(T::zero(), -T::lit(0.5));
        Self::from_fn(self.rows, self.cols, |i, j| {
            (self[(i, j)] - self[(j, i)].conj()) * factor
        })
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .map(|z| z.norm())
            .fold(T::zero(), |a, b| a.max(b))
    }

    /// `‖A − A*‖_F / ‖A‖_F`, zero for the zero matrix.
    pub fn hermiticity_defect(&self) -> T {
        let norm = self.frobenius_norm();
        if norm == T::zero() {
            return T::zero();
        }
        (self - &self.adjoint()).frobenius_norm() / norm
    }

    pub fn mul_vec(&self, v: &[C<T>]) -> Vec<C<T>> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|i| {
                let row = &self.data[i * self.cols..(i + 1) * self.cols];
                row.iter().zip(v).map(|(a, b)| *a * *b).sum()
            })
            .collect()
    }

    /// `u* A v`.
    pub fn sesquilinear(&self, u: &[C<T>], v: &[C<T>]) -> C<T> {
        let av = self.mul_vec(v);
        u.iter().zip(&av).map(|(a, b)| a.conj() * *b).sum()
    }

    pub fn trace(&self) -> C<T> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }
}

impl<T: Real> Index<(usize, usize)> for CMatrix<T> {
    type Output = C<T>;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C<T> {
        &self.data[i * self.cols + j]
    }
}

impl<T: Real> IndexMut<(usize, usize)> for CMatrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C<T> {
        &mut self.data[i * self.cols + j]
    }
}

impl<T: Real> Mul for &CMatrix<T> {
    type Output = CMatrix<T>;
    fn mul(self, rhs: &CMatrix<T>) -> CMatrix<T> {
        assert_eq!(self.cols, rhs.rows, "matrix product shape mismatch");
        let mut out = CMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a.is_zero() {
                    continue;
                }
                let src = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                let dst = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (d, b) in dst.iter_mut().zip(src) {
                    *d += a * *b;
                }
            }
        }
        out
    }
}

impl<T: Real> Add for &CMatrix<T> {
    type Output = CMatrix<T>;
    fn add(self, rhs: &CMatrix<T>) -> CMatrix<T> {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl<T: Real> Sub for &CMatrix<T> {
    type Output = CMatrix<T>;
    fn sub(self, rhs: &CMatrix<T>) -> CMatrix<T> {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

/// Eigen-decomposition `A = V diag(λ) V*` of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermitianEigen<T: Real> {
    /// Ascending.
    pub values: Vec<T>,
    /// Column `i` is the unit eigenvector for `values[i]`.
    pub vectors: CMatrix<T>,
}

impl<T: Real> HermitianEigen<T> {
    /// Decomposes the Hermitian part of `a`.
    ///
    /// Householder reduction to a complex tridiagonal form, a diagonal phase
    /// to make it real, then implicit QL with Wilkinson-type shifts.
    pub fn new(a: &CMatrix<T>) -> Self {
        assert!(a.is_square(), "eigensolver needs a square matrix");
        let n = a.nrows();
        let mut m = a.hermitian_part();
        if n == 0 {
            return Self {
                values: Vec::new(),
                vectors: CMatrix::zeros(0, 0),
            };
        }
        let mut q = CMatrix::identity(n);
        tridiagonalize(&mut m, &mut q);

        let mut d: Vec<T> = (0..n).map(|i| m[(i, i)].re).collect();
        let mut e = vec![T::zero(); n];
        let mut phase = C::one();
        let mut phases = vec![C::one(); n];
        for k in 0..n.saturating_sub(1) {
            let sub = m[(k + 1, k)];
            let mag = sub.norm();
            if mag > T::zero() {
                phase = phase * (sub / mag);
            }
            phases[k + 1] = phase;
            e[k] = mag;
        }
        for j in 0..n {
            for i in 0..n {
                q[(i, j)] = q[(i, j)] * phases[j];
            }
        }
        implicit_ql(&mut d, &mut e, &mut q);
        Self { values: d, vectors: q }.sorted()
    }

    fn sorted(self) -> Self {
        let n = self.values.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| self.values[i].partial_cmp(&self.values[j]).unwrap());
        let values = order.iter().map(|&i| self.values[i]).collect();
        let vectors = CMatrix::from_fn(n, n, |r, c| self.vectors[(r, order[c])]);
        Self { values, vectors }
    }

    pub fn min(&self) -> T {
        self.values.first().copied().unwrap_or_else(T::zero)
    }

    pub fn max(&self) -> T {
        self.values.last().copied().unwrap_or_else(T::zero)
    }

    /// Largest eigenvalue modulus, i.e. the spectral norm.
    pub fn spectral_radius(&self) -> T {
        self.min().abs().max(self.max().abs())
    }

    /// `V diag(f(λ)) V*`.
    pub fn apply_fn(&self, f: impl Fn(T) -> T) -> CMatrix<T> {
        let n = self.values.len();
        let fl: Vec<T> = self.values.iter().map(|&l| f(l)).collect();
        CMatrix::from_fn(n, n, |i, j| {
            (0..n)
                .map(|k| self.vectors[(i, k)] * self.vectors[(j, k)].conj() * fl[k])
                .sum()
        })
    }
}

fn tridiagonalize<T: Real>(a: &mut CMatrix<T>, q: &mut CMatrix<T>) {
    let n = a.nrows();
    if n < 3 {
        return;
    }
    let tiny = T::min_positive_value();
    for k in 0..n - 2 {
        let len = n - k - 1;
        let mut v: Vec<C<T>> = (0..len).map(|i| a[(k + 1 + i, k)]).collect();
        let alpha = v.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt();
        if alpha <= tiny {
            continue;
        }
        let x0 = v[0];
        let phase = if x0.norm() > T::zero() {
            x0 / x0.norm()
        } else {
            C::one()
        };
        v[0] += phase * alpha;
        let vnorm2: T = v.iter().map(|z| z.norm_sqr()).sum();
        let tau = (T::one() + T::one()) / vnorm2;

        // p = tau B v over the trailing block B.
        let mut p = vec![C::zero(); len];
        for i in 0..len {
            let mut acc = C::zero();
            for j in 0..len {
                acc += a[(k + 1 + i, k + 1 + j)] * v[j];
            }
            p[i] = acc * tau;
        }
        let vp: C<T> = v.iter().zip(&p).map(|(x, y)| x.conj() * *y).sum();
        let kk = vp.re * tau * T::lit(0.5);
        let w: Vec<C<T>> = p.iter().zip(&v).map(|(pi, vi)| *pi - *vi * kk).collect();
        for i in 0..len {
            for j in 0..len {
                let upd = v[i] * w[j].conj() + w[i] * v[j].conj();
                a[(k + 1 + i, k + 1 + j)] -= upd;
            }
        }
        let beta = -(phase * alpha);
        a[(k + 1, k)] = beta;
        a[(k, k + 1)] = beta.conj();
        for i in 1..len {
            a[(k + 1 + i, k)] = C::zero();
            a[(k, k + 1 + i)] = C::zero();
        }
        // Q <- Q H.
        for r in 0..n {
            let mut acc = C::zero();
            for j in 0..len {
                acc += q[(r, k + 1 + j)] * v[j];
            }
            let acc = acc * tau;
            for j in 0..len {
                q[(r, k + 1 + j)] -= acc * v[j].conj();
            }
        }
    }
}

/// Implicit QL on the real symmetric tridiagonal (`d`, `e`), with `e[i]`
/// coupling `i` and `i + 1`. Rotations are accumulated into the columns of `z`.
fn implicit_ql<T: Real>(d: &mut [T], e: &mut [T], z: &mut CMatrix<T>) {
    let n = d.len();
    let eps = T::epsilon();
    let two = T::one() + T::one();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= eps * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 200 {
                break;
            }
            let mut g = (d[l + 1] - d[l]) / (two * e[l]);
            let mut r = g.hypot(T::one());
            let signed_r = if g >= T::zero() { r } else { -r };
            g = d[m] - d[l] + e[l] / (g + signed_r);
            let (mut s, mut c, mut p) = (T::one(), T::one(), T::zero());
            let mut deflated = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == T::zero() {
                    d[i + 1] -= p;
                    e[m] = T::zero();
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + two * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for k in 0..n {
                    let zf = z[(k, i + 1)];
                    let zi = z[(k, i)];
                    z[(k, i + 1)] = zi * s + zf * c;
                    z[(k, i)] = zi * c - zf * s;
                }
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = T::zero();
        }
    }
}

/// Spectral norm `‖A‖₂` of an arbitrary square matrix.
pub fn spectral_norm<T: Real>(a: &CMatrix<T>) -> T {
    let ata = &a.adjoint() * a;
    HermitianEigen::new(&ata).max().max(T::zero()).sqrt()
}

/// Singular values (ascending) of a square matrix.
pub fn singular_values<T: Real>(a: &CMatrix<T>) -> Vec<T> {
    let ata = &a.adjoint() * a;
    HermitianEigen::new(&ata)
        .values
        .into_iter()
        .map(|l| l.max(T::zero()).sqrt())
        .collect()
}
