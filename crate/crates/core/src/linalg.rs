//! Dense symmetric linear algebra.
//!
//! Everything here works in an eigenbasis: a cyclic Jacobi eigensolver backs
//! SPD powers (square roots, inverses) and the Sylvester solver
//! `AX + XA = B` for SPD `A`, which becomes the elementwise division
//! `X̃_ij = B̃_ij / (λ_i + λ_j)` in `A`'s eigenbasis.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::scalar::{lit, rel_tol, to_f64, Scalar};

const MAX_SWEEPS: usize = 100;

fn max_abs<T: Scalar>(a: &ArrayView2<'_, T>) -> T {
    a.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
}

/// Symmetric matrix. Entries are exactly symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix<T> {
    entries: Array2<T>,
}

impl<T: Scalar> SymMatrix<T> {
    /// Validates and exactly symmetrizes `entries`.
    ///
    /// Rejects non-square or non-finite input, and asymmetry above `1e-12`
    /// relative to the largest entry.
    pub fn new(entries: Array2<T>) -> Result<Self> {
        let (r, c) = entries.dim();
        if r == 0 || r != c {
            return Err(Error::invalid(format!(
                "expected a non-empty square matrix, got {r}x{c}"
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("matrix has non-finite entries"));
        }
        let scale = max_abs(&entries.view());
        let asym = entries.indexed_iter().fold(T::zero(), |m, ((i, j), &v)| {
            m.max((v - entries[[j, i]]).abs())
        });
        if asym > rel_tol::<T>(1e-12) * scale {
            return Err(Error::invalid(format!(
                "matrix is not symmetric (max asymmetry {:.3e}, scale {:.3e})",
                to_f64(asym),
                to_f64(scale)
            )));
        }
        Ok(Self::symmetrize_unchecked(entries))
    }

    /// `(M + Mᵀ)/2` without any asymmetry check.
    pub fn symmetrize(entries: Array2<T>) -> Result<Self> {
        let (r, c) = entries.dim();
        if r == 0 || r != c {
            return Err(Error::invalid(format!(
                "expected a non-empty square matrix, got {r}x{c}"
            )));
        }
        Ok(Self::symmetrize_unchecked(entries))
    }

    pub(crate) fn symmetrize_unchecked(mut m: Array2<T>) -> Self {
        let d = m.nrows();
        let half = lit::<T>(0.5);
        for i in 0..d {
            for j in (i + 1)..d {
                let v = (m[[i, j]] + m[[j, i]]) * half;
                m[[i, j]] = v;
                m[[j, i]] = v;
            }
        }
        Self { entries: m }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            entries: Array2::zeros((dim, dim)),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            entries: Array2::eye(dim),
        }
    }

    pub fn from_diag(diag: &[T]) -> Self {
        Self {
            entries: Array2::from_diag(&Array1::from(diag.to_vec())),
        }
    }

    /// `e_i e_jᵀ + e_j e_iᵀ` for `i != j`, `e_i e_iᵀ` for `i == j`.
    pub fn basis(dim: usize, i: usize, j: usize) -> Self {
        let mut m = Array2::zeros((dim, dim));
        m[[i, j]] = T::one();
        m[[j, i]] = T::one();
        Self { entries: m }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn as_array(&self) -> &Array2<T> {
        &self.entries
    }

    pub fn into_array(self) -> Array2<T> {
        self.entries
    }

    pub fn trace(&self) -> T {
        self.entries.diag().sum()
    }

    pub fn max_abs(&self) -> T {
        max_abs(&self.entries.view())
    }

    pub fn scaled(&self, k: T) -> Self {
        Self {
            entries: &self.entries * k,
        }
    }

    /// `xᵀ M x`.
    pub fn quad_form(&self, x: &[T]) -> T {
        let d = self.dim();
        let mut acc = T::zero();
        for i in 0..d {
            let mut row = T::zero();
            for j in 0..d {
                row += self.entries[[i, j]] * x[j];
            }
            acc += x[i] * row;
        }
        acc
    }

    /// `M x`.
    pub fn mul_vec(&self, x: &[T]) -> Array1<T> {
        let d = self.dim();
        Array1::from_shape_fn(d, |i| {
            (0..d).fold(T::zero(), |acc, j| acc + self.entries[[i, j]] * x[j])
        })
    }
}

/// Eigendecomposition of a symmetric matrix: eigenvalues descending,
/// eigenvectors in the columns of `vectors`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymEig<T> {
    pub values: Array1<T>,
    pub vectors: Array2<T>,
}

impl<T: Scalar> SymEig<T> {
    /// `Q diag(f(λ)) Qᵀ`.
    pub fn reconstruct_with(&self, f: impl Fn(T) -> T) -> Array2<T> {
        let d = self.values.len();
        let mut out = Array2::zeros((d, d));
        for k in 0..d {
            let w = f(self.values[k]);
            let q = self.vectors.column(k);
            for i in 0..d {
                let qi = q[i] * w;
                for j in 0..d {
                    out[[i, j]] += qi * q[j];
                }
            }
        }
        out
    }
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Output is deterministic: eigenvalues are sorted descending, each
/// eigenvector's first non-negligible component is made positive, and exact
/// ties are ordered by the position of that component.
pub fn sym_eig<T: Scalar>(s: &SymMatrix<T>) -> Result<SymEig<T>> {
    let d = s.dim();
    if s.entries.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("matrix has non-finite entries"));
    }
    let mut a = s.entries.clone();
    let mut v = Array2::<T>::eye(d);
    let scale = a.iter().fold(T::zero(), |acc, &x| acc + x * x).sqrt();
    let target = T::epsilon() * scale;

    for _ in 0..MAX_SWEEPS {
        let off = off_diagonal_norm(&a);
        if off <= target || off == T::zero() {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = a[[p, q]];
                if apq == T::zero() {
                    continue;
                }
                let app = a[[p, p]];
                let aqq = a[[q, q]];
                let theta = (aqq - app) / (lit::<T>(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let sn = t * c;
                rotate(&mut a, &mut v, p, q, c, sn, t);
            }
        }
    }

    let mut pairs: Vec<(T, Array1<T>)> = (0..d)
        .map(|k| {
            let mut col = v.column(k).to_owned();
            let colmax = col.iter().fold(T::zero(), |m, &x| m.max(x.abs()));
            let lead = col
                .iter()
                .position(|x| x.abs() > colmax * rel_tol::<T>(1e-10))
                .unwrap_or(0);
            if col[lead] < T::zero() {
                col.mapv_inplace(|x| -x);
            }
            (a[[k, k]], col)
        })
        .collect();
    pairs.sort_by(|(la, va), (lb, vb)| {
        lb.partial_cmp(la)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| leading_index(va).cmp(&leading_index(vb)))
    });

    let values = Array1::from_iter(pairs.iter().map(|(l, _)| *l));
    let mut vectors = Array2::zeros((d, d));
    for (k, (_, col)) in pairs.iter().enumerate() {
        vectors.column_mut(k).assign(col);
    }
    Ok(SymEig { values, vectors })
}

fn leading_index<T: Scalar>(col: &Array1<T>) -> usize {
    let colmax = col.iter().fold(T::zero(), |m, &x| m.max(x.abs()));
    col.iter()
        .position(|x| x.abs() > colmax * rel_tol::<T>(1e-10))
        .unwrap_or(0)
}

fn off_diagonal_norm<T: Scalar>(a: &Array2<T>) -> T {
    let d = a.nrows();
    let mut acc = T::zero();
    for i in 0..d {
        for j in 0..d {
            if i != j {
                acc += a[[i, j]] * a[[i, j]];
            }
        }
    }
    acc.sqrt()
}

fn rotate<T: Scalar>(a: &mut Array2<T>, v: &mut Array2<T>, p: usize, q: usize, c: T, s: T, t: T) {
    let d = a.nrows();
    let apq = a[[p, q]];
    a[[p, p]] -= t * apq;
    a[[q, q]] += t * apq;
    a[[p, q]] = T::zero();
    a[[q, p]] = T::zero();
    for r in 0..d {
        if r != p && r != q {
            let arp = a[[r, p]];
            let arq = a[[r, q]];
            let np = c * arp - s * arq;
            let nq = s * arp + c * arq;
            a[[r, p]] = np;
            a[[p, r]] = np;
            a[[r, q]] = nq;
            a[[q, r]] = nq;
        }
    }
    for r in 0..d {
        let vrp = v[[r, p]];
        let vrq = v[[r, q]];
        v[[r, p]] = c * vrp - s * vrq;
        v[[r, q]] = s * vrp + c * vrq;
    }
}

/// Symmetric positive-definite matrix with its eigendecomposition cached.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix<T> {
    entries: SymMatrix<T>,
    eig: SymEig<T>,
}

impl<T: Scalar> SpdMatrix<T> {
    /// Fails with `InvalidInput` unless every eigenvalue is strictly positive.
    pub fn new(s: SymMatrix<T>) -> Result<Self> {
        let eig = sym_eig(&s)?;
        let min = eig.values[eig.values.len() - 1];
        if !(min > T::zero()) {
            return Err(Error::invalid(format!(
                "matrix is not positive definite (min eigenvalue {:.3e})",
                to_f64(min)
            )));
        }
        Ok(Self { entries: s, eig })
    }

    pub fn from_array(m: Array2<T>) -> Result<Self> {
        Self::new(SymMatrix::new(m)?)
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            entries: SymMatrix::identity(dim),
            eig: SymEig {
                values: Array1::ones(dim),
                vectors: Array2::eye(dim),
            },
        }
    }

    pub fn from_diag(diag: &[T]) -> Result<Self> {
        Self::new(SymMatrix::from_diag(diag))
    }

    /// Builds `Q diag(values) Qᵀ` from an orthonormal `Q` and positive values.
    fn from_eigen_parts(values: Array1<T>, vectors: Array2<T>) -> Self {
        let mut pairs: Vec<(T, usize)> = values.iter().copied().zip(0..).collect();
        pairs.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.1.cmp(&b.1))
        });
        let d = values.len();
        let mut sorted_vals = Array1::zeros(d);
        let mut sorted_vecs = Array2::zeros((d, d));
        for (k, (val, src)) in pairs.into_iter().enumerate() {
            sorted_vals[k] = val;
            sorted_vecs.column_mut(k).assign(&vectors.column(src));
        }
        let eig = SymEig {
            values: sorted_vals,
            vectors: sorted_vecs,
        };
        let entries = SymMatrix::symmetrize_unchecked(eig.reconstruct_with(|l| l));
        Self { entries, eig }
    }

    pub fn dim(&self) -> usize {
        self.entries.dim()
    }

    pub fn as_sym(&self) -> &SymMatrix<T> {
        &self.entries
    }

    pub fn as_array(&self) -> &Array2<T> {
        self.entries.as_array()
    }

    pub fn eigen(&self) -> &SymEig<T> {
        &self.eig
    }

    pub fn eigenvalues(&self) -> &Array1<T> {
        &self.eig.values
    }

    pub fn min_eigenvalue(&self) -> T {
        self.eig.values[self.dim() - 1]
    }

    pub fn max_eigenvalue(&self) -> T {
        self.eig.values[0]
    }

    pub fn condition_number(&self) -> T {
        self.max_eigenvalue() / self.min_eigenvalue()
    }

    /// `|M|` as the product of eigenvalues.
    pub fn det(&self) -> T {
        self.eig.values.iter().fold(T::one(), |acc, &l| acc * l)
    }

    pub fn log_det(&self) -> T {
        self.eig.values.iter().map(|l| l.ln()).sum()
    }

    fn check_conditioning(&self) -> Result<()> {
        if self.min_eigenvalue() <= rel_tol::<T>(1e-12) * self.max_eigenvalue() {
            return Err(Error::SingularMatrix {
                condition: to_f64(self.condition_number()),
            });
        }
        Ok(())
    }

    /// `M^p` through the eigendecomposition. Errors on near-singular `M` when `p < 0`.
    pub fn powf(&self, p: T) -> Result<Self> {
        if p < T::zero() {
            self.check_conditioning()?;
        }
        Ok(Self::from_eigen_parts(
            self.eig.values.mapv(|l| l.powf(p)),
            self.eig.vectors.clone(),
        ))
    }

    pub fn inverse(&self) -> Result<Self> {
        self.check_conditioning()?;
        Ok(Self::from_eigen_parts(
            self.eig.values.mapv(|l| l.recip()),
            self.eig.vectors.clone(),
        ))
    }

    /// `M²`, sharing `M`'s eigenvectors.
    pub fn square(&self) -> Self {
        Self::from_eigen_parts(self.eig.values.mapv(|l| l * l), self.eig.vectors.clone())
    }

    /// Matrix logarithm (symmetric, not necessarily PD).
    pub fn log(&self) -> SymMatrix<T> {
        SymMatrix::symmetrize_unchecked(self.eig.reconstruct_with(|l| l.ln()))
    }

    /// Matrix exponential of a symmetric matrix.
    pub fn exp_sym(s: &SymMatrix<T>) -> Result<Self> {
        let eig = sym_eig(s)?;
        let out = Self::from_eigen_parts(eig.values.mapv(|l| l.exp()), eig.vectors);
        if !(out.min_eigenvalue() > T::zero())
            || out.entries.as_array().iter().any(|v| !v.is_finite())
        {
            return Err(Error::invalid("matrix exponential overflowed"));
        }
        Ok(out)
    }

    /// `M x`.
    pub fn mul_vec(&self, x: &[T]) -> Array1<T> {
        self.entries.mul_vec(x)
    }
}

/// Principal square root `R` with `R·R = S`.
pub fn spd_sqrt<T: Scalar>(s: &SpdMatrix<T>) -> Result<SpdMatrix<T>> {
    s.check_conditioning()?;
    s.powf(lit(0.5))
}

/// `S^{-1/2}`, i.e. `R` with `R·R = S⁻¹`.
pub fn spd_inv_sqrt<T: Scalar>(s: &SpdMatrix<T>) -> Result<SpdMatrix<T>> {
    s.powf(lit(-0.5))
}

/// Unique symmetric solution of `AX + XA = B` for SPD `A`.
pub fn sylvester_solve<T: Scalar>(a: &SpdMatrix<T>, b: &SymMatrix<T>) -> Result<SymMatrix<T>> {
    let d = a.dim();
    if b.dim() != d {
        return Err(Error::invalid(format!(
            "dimension mismatch: A is {d}x{d}, B is {0}x{0}",
            b.dim()
        )));
    }
    let lam = &a.eig.values;
    let q = &a.eig.vectors;
    let min_sum = lam[d - 1] + lam[d - 1];
    let max_sum = lam[0] + lam[0];
    if min_sum <= rel_tol::<T>(1e-12) * max_sum {
        return Err(Error::SingularMatrix {
            condition: to_f64(max_sum / min_sum),
        });
    }
    let bt = q.t().dot(b.as_array()).dot(q);
    let xt = Array2::from_shape_fn((d, d), |(i, j)| bt[[i, j]] / (lam[i] + lam[j]));
    Ok(SymMatrix::symmetrize_unchecked(q.dot(&xt).dot(&q.t())))
}

/// Smallest eigenvalue of a (numerically) symmetric matrix; the input is symmetrized first.
pub fn min_eigenvalue<T: Scalar>(m: &Array2<T>) -> Result<T> {
    let s = SymMatrix::symmetrize(m.clone())?;
    let e = sym_eig(&s)?;
    Ok(e.values[e.values.len() - 1])
}

/// Inverse of a symmetric positive-definite matrix given as a plain array.
pub fn spd_inverse<T: Scalar>(m: &Array2<T>) -> Result<Array2<T>> {
    let s = SymMatrix::symmetrize(m.clone())?;
    let eig = sym_eig(&s)?;
    let d = eig.values.len();
    let (max, min) = (eig.values[0], eig.values[d - 1]);
    if !(min > rel_tol::<T>(1e-12) * max) {
        return Err(Error::SingularMatrix {
            condition: to_f64(max / min),
        });
    }
    Ok(eig.reconstruct_with(|l| l.recip()))
}

/// Frobenius-symmetrized sample covariance with weight `1/n`, centered at the sample mean.
pub fn mean_and_covariance<T: Scalar>(data: &ArrayView2<'_, T>) -> (Array1<T>, Array2<T>) {
    let n = data.nrows();
    let d = data.ncols();
    let nt = lit::<T>(n as f64);
    let mean = data.sum_axis(Axis(0)) / nt;
    let mut cov = Array2::<T>::zeros((d, d));
    for row in data.rows() {
        for i in 0..d {
            let di = row[i] - mean[i];
            for j in i..d {
                cov[[i, j]] += di * (row[j] - mean[j]);
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov[[i, j]] / nt;
            cov[[i, j]] = v;
            cov[[j, i]] = v;
        }
    }
    (mean, cov)
}
