//! The elliptically symmetric affine deformation model
//! `p(x; μ, Λ) = |Λ| g(‖Λ(x − μ)‖)`, with `Λ` symmetric positive definite.
//!
//! Parameters are flattened as `(μ_1, …, μ_d, Λ_11, Λ_12, …, Λ_1d, Λ_22, …, Λ_dd)`:
//! the location block followed by the upper triangle of `Λ`, row by row. The
//! `Λ_ij` coordinate moves `Λ` along `E_ij = e_i e_jᵀ + e_j e_iᵀ` (`e_i e_iᵀ`
//! on the diagonal), so off-diagonal derivatives are twice the entrywise ones.

use std::fmt;

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::error::{Error, Result};
use crate::linalg::{sym_eig, SpdMatrix, SymMatrix};
use crate::rng::rng_from_seed;
use crate::scalar::{lit, Scalar};
use crate::shapes::{canonical_norm, ShapeDistribution};

/// One coordinate of the parameter vector (0-based; printed 1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamIndex {
    Mu(usize),
    /// Upper-triangular `(i, j)` with `i <= j`.
    Lambda(usize, usize),
}

impl ParamIndex {
    /// All coordinates for dimension `d`, in flattening order.
    pub fn all(d: usize) -> Vec<ParamIndex> {
        let mut out: Vec<ParamIndex> = (0..d).map(ParamIndex::Mu).collect();
        for i in 0..d {
            for j in i..d {
                out.push(ParamIndex::Lambda(i, j));
            }
        }
        out
    }

    /// Position in the flattened parameter vector.
    pub fn position(&self, d: usize) -> usize {
        match *self {
            ParamIndex::Mu(i) => i,
            // rows 0..i contribute d, d-1, ..., d-i+1 entries
            ParamIndex::Lambda(i, j) => d + i * d - i * (i + 1) / 2 + j,
        }
    }

    pub fn check(&self, d: usize) -> Result<()> {
        let ok = match *self {
            ParamIndex::Mu(i) => i < d,
            ParamIndex::Lambda(i, j) => i <= j && j < d,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "parameter index {self} out of range for d = {d}"
            )))
        }
    }
}

impl fmt::Display for ParamIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamIndex::Mu(i) => write!(f, "mu[{}]", i + 1),
            ParamIndex::Lambda(i, j) => write!(f, "lambda[{},{}]", i + 1, j + 1),
        }
    }
}

/// Number of free parameters, `d + d(d+1)/2`.
pub fn param_dim(d: usize) -> usize {
    d + d * (d + 1) / 2
}

/// `θ = (μ, Λ)` with the derived matrices the scores need.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineParams<T> {
    mu: Array1<T>,
    lambda: SpdMatrix<T>,
    lambda_sq: SpdMatrix<T>,
    lambda_inv: SpdMatrix<T>,
    /// `Σ = Λ⁻²`, the model covariance.
    sigma: SpdMatrix<T>,
}

impl<T: Scalar> AffineParams<T> {
    pub fn new(mu: Array1<T>, lambda: SpdMatrix<T>) -> Result<Self> {
        if mu.len() != lambda.dim() {
            return Err(Error::invalid(format!(
                "mu has length {} but lambda is {}x{}",
                mu.len(),
                lambda.dim(),
                lambda.dim()
            )));
        }
        if mu.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("mu has non-finite entries"));
        }
        let lambda_inv = lambda.inverse()?;
        let lambda_sq = lambda.square();
        let sigma = lambda_inv.square();
        Ok(Self {
            mu,
            lambda,
            lambda_sq,
            lambda_inv,
            sigma,
        })
    }

    /// `θ = (0, I_d)`.
    pub fn standard(d: usize) -> Self {
        let id = SpdMatrix::identity(d);
        Self {
            mu: Array1::zeros(d),
            lambda: id.clone(),
            lambda_sq: id.clone(),
            lambda_inv: id.clone(),
            sigma: id,
        }
    }

    /// Random parameters for experiments: `μ ~ N(0, I)`, `Λ = Q diag(e^{u}) Qᵀ`
    /// with `u ~ U(−0.5, 0.5)` and `Q` a random orthogonal basis.
    pub fn random<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        let mu = Array1::from_shape_fn(d, |_| lit::<T>(rng.sample::<f64, _>(StandardNormal)));
        let g = Array2::from_shape_fn((d, d), |_| rng.sample::<f64, _>(StandardNormal));
        let basis = sym_eig(&SymMatrix::symmetrize(&g + &g.t())?)?.vectors;
        let spread = Uniform::new(-0.5f64, 0.5).expect("valid range");
        let mut m = Array2::<f64>::zeros((d, d));
        for k in 0..d {
            let w = spread.sample(rng).exp();
            let q = basis.column(k);
            for i in 0..d {
                for j in 0..d {
                    m[[i, j]] += w * q[i] * q[j];
                }
            }
        }
        let lambda = SpdMatrix::new(SymMatrix::symmetrize(m.mapv(lit::<T>))?)?;
        Self::new(mu, lambda)
    }

    pub fn random_seeded(d: usize, seed: u64) -> Result<Self> {
        Self::random(d, &mut rng_from_seed(seed))
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn param_dim(&self) -> usize {
        param_dim(self.dim())
    }

    pub fn mu(&self) -> &Array1<T> {
        &self.mu
    }

    pub fn lambda(&self) -> &SpdMatrix<T> {
        &self.lambda
    }

    pub fn lambda_sq(&self) -> &SpdMatrix<T> {
        &self.lambda_sq
    }

    pub fn lambda_inv(&self) -> &SpdMatrix<T> {
        &self.lambda_inv
    }

    /// Model covariance `Λ⁻²`.
    pub fn sigma(&self) -> &SpdMatrix<T> {
        &self.sigma
    }

    /// Flattened parameter vector (see module docs for the order).
    pub fn to_vec(&self) -> Vec<T> {
        let d = self.dim();
        let mut out: Vec<T> = self.mu.to_vec();
        let l = self.lambda.as_array();
        for i in 0..d {
            for j in i..d {
                out.push(l[[i, j]]);
            }
        }
        out
    }

    pub fn from_vec(d: usize, v: &[T]) -> Result<Self> {
        if v.len() != param_dim(d) {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                param_dim(d),
                v.len()
            )));
        }
        let mu = Array1::from(v[..d].to_vec());
        let mut l = Array2::zeros((d, d));
        let mut k = d;
        for i in 0..d {
            for j in i..d {
                l[[i, j]] = v[k];
                l[[j, i]] = v[k];
                k += 1;
            }
        }
        Self::new(mu, SpdMatrix::new(SymMatrix::new(l)?)?)
    }
}

fn check_point<T: Scalar>(theta: &AffineParams<T>, x: &[T]) -> Result<()> {
    if x.len() != theta.dim() {
        return Err(Error::invalid(format!(
            "point has dimension {}, model has {}",
            x.len(),
            theta.dim()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("point has non-finite coordinates"));
    }
    Ok(())
}

fn check_shape<T: Scalar>(theta: &AffineParams<T>, shape: &ShapeDistribution<T>) -> Result<()> {
    if shape.dim() != theta.dim() {
        return Err(Error::invalid(format!(
            "shape has dimension {}, model has {}",
            shape.dim(),
            theta.dim()
        )));
    }
    Ok(())
}

/// Residual `y = x − μ`, standardized point `u = Λ y`, and `r = ‖u‖`.
struct Standardized<T> {
    y: Array1<T>,
    u: Array1<T>,
    r: T,
}

fn standardize<T: Scalar>(theta: &AffineParams<T>, x: &[T]) -> Standardized<T> {
    let y = Array1::from_shape_fn(theta.dim(), |i| x[i] - theta.mu[i]);
    let u = theta.lambda.mul_vec(y.as_slice().expect("contiguous"));
    let r = canonical_norm(u.as_slice().expect("contiguous"));
    Standardized { y, u, r }
}

/// `log p(x; θ) = log|Λ| + log g(‖Λ(x − μ)‖)`.
pub fn log_density<T: Scalar>(
    theta: &AffineParams<T>,
    shape: &ShapeDistribution<T>,
    x: &[T],
) -> Result<T> {
    check_shape(theta, shape)?;
    check_point(theta, x)?;
    let s = standardize(theta, x);
    Ok(theta.lambda.log_det() + shape.log_g(s.r))
}

pub fn density<T: Scalar>(
    theta: &AffineParams<T>,
    shape: &ShapeDistribution<T>,
    x: &[T],
) -> Result<T> {
    Ok(log_density(theta, shape, x)?.exp())
}

/// `n × d` draws of `x = Λ⁻¹ z + μ` with `z` from the standard shape.
pub fn sample_model<T: Scalar>(
    theta: &AffineParams<T>,
    shape: &ShapeDistribution<T>,
    n: usize,
    seed: u64,
) -> Result<Array2<T>> {
    check_shape(theta, shape)?;
    if n == 0 {
        return Err(Error::invalid("sample size must be at least 1"));
    }
    Ok(sample_model_with(theta, shape, &mut rng_from_seed(seed), n))
}

pub fn sample_model_with<T: Scalar, R: Rng + ?Sized>(
    theta: &AffineParams<T>,
    shape: &ShapeDistribution<T>,
    rng: &mut R,
    n: usize,
) -> Array2<T> {
    let d = theta.dim();
    let mut out = shape.sample_with(rng, n);
    let inv = theta.lambda_inv.as_array();
    let mut buf = vec![T::zero(); d];
    for mut row in out.rows_mut() {
        for (i, b) in buf.iter_mut().enumerate() {
            *b = (0..d).fold(T::zero(), |acc, k| acc + inv[[i, k]] * row[k]) + theta.mu[i];
        }
        for (r, b) in row.iter_mut().zip(&buf) {
            *r = *b;
        }
    }
    out
}

/// `∇_x log p(x; θ) = (g′/g)(r) Λ² (x − μ) / r`.
pub fn grad_x_log_density<T: Scalar>(
    theta: &AffineParams<T>,
    shape: &ShapeDistribution<T>,
    x: &[T],
) -> Result<Array1<T>> {
    check_shape(theta, shape)?;
    check_point(theta, x)?;
    let s = standardize(theta, x);
    let psi = shape.radial_score_ratio(s.r)?;
    Ok(theta.lambda.mul_vec(s.u.as_slice().expect("contiguous")) * psi)
}

/// Log-likelihood gradient at one point in matrix form: the location gradient
/// and the symmetric matrix `G` with `d log p = tr(G dΛ)`.
pub(crate) fn loglik_gradient<T: Scalar>(
    theta: &AffineParams<T>,
    shape: &ShapeDistribution<T>,
    x: &[T],
) -> Result<(Array1<T>, Array2<T>)> {
    let s = standardize(theta, x);
    let psi = shape.radial_score_ratio(s.r)?;
    let d = theta.dim();
    let grad_mu = theta.lambda.mul_vec(s.u.as_slice().expect("contiguous")) * (-psi);
    let half_psi = psi * lit::<T>(0.5);
    let inv = theta.lambda_inv.as_array();
    let g = Array2::from_shape_fn((d, d), |(i, j)| {
        inv[[i, j]] + half_psi * (s.u[i] * s.y[j] + s.y[i] * s.u[j])
    });
    Ok((grad_mu, g))
}

/// Flattens a location gradient and a symmetric matrix gradient `G` into
/// coordinate derivatives: `G_ii` on the diagonal, `2 G_ij` off it.
pub(crate) fn flatten_gradient<T: Scalar>(grad_mu: &Array1<T>, g: &Array2<T>) -> Array1<T> {
    let d = grad_mu.len();
    let mut out = Vec::with_capacity(param_dim(d));
    out.extend(grad_mu.iter().copied());
    let two = lit::<T>(2.0);
    for i in 0..d {
        for j in i..d {
            out.push(if i == j { g[[i, i]] } else { two * g[[i, j]] });
        }
    }
    Array1::from(out)
}

/// Fisher score `∂_θ log p(x; θ)` over all coordinates, in flattening order.
pub fn fisher_score<T: Scalar>(
    theta: &AffineParams<T>,
    shape: &ShapeDistribution<T>,
    x: &[T],
) -> Result<Array1<T>> {
    check_shape(theta, shape)?;
    check_point(theta, x)?;
    let (gm, g) = loglik_gradient(theta, shape, x)?;
    Ok(flatten_gradient(&gm, &g))
}

/// `Σ_t log p(x_t; θ)`; `−∞` when any point falls outside a compact support.
pub fn log_likelihood<T: Scalar>(
    theta: &AffineParams<T>,
    shape: &ShapeDistribution<T>,
    data: &ArrayView2<'_, T>,
) -> Result<T> {
    check_shape(theta, shape)?;
    if data.nrows() == 0 {
        return Err(Error::invalid("data set is empty"));
    }
    if data.ncols() != theta.dim() {
        return Err(Error::invalid(format!(
            "data has {} columns, model has d = {}",
            data.ncols(),
            theta.dim()
        )));
    }
    let log_det = theta.lambda.log_det();
    let mut total = T::zero();
    let mut buf = vec![T::zero(); theta.dim()];
    for row in data.rows() {
        for (b, v) in buf.iter_mut().zip(row.iter()) {
            *b = *v;
        }
        let s = standardize(theta, &buf);
        total += log_det + shape.log_g(s.r);
    }
    Ok(total)
}
