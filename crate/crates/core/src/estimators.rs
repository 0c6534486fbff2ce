//! Estimators of `θ = (μ, Λ)`: the Wasserstein (second-moment) estimator, the
//! maximum likelihood estimator, and the 1-D order-statistic transport
//! estimator.

use ndarray::{Array1, Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{mean_and_covariance, spd_inv_sqrt, sym_eig, SpdMatrix, SymMatrix};
use crate::model::{flatten_gradient, log_likelihood, loglik_gradient, sample_model, AffineParams};
use crate::rng::derive_seed;
use crate::scalar::{lit, rel_tol, to_f64, Scalar};
use crate::shapes::ShapeDistribution;
use crate::wscore::all_wscores;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "w")]
    WMoment,
    #[serde(rename = "mle")]
    Mle,
    #[serde(rename = "wp1d")]
    Wp1D,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::WMoment => "w",
            Method::Mle => "mle",
            Method::Wp1D => "wp1d",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorReport<T> {
    pub estimate: AffineParams<T>,
    pub iterations: usize,
    pub converged: bool,
    /// Norm of the estimating equations at the estimate.
    pub final_gradient_norm: T,
    pub method: Method,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 2000,
        }
    }
}

fn check_data<T: Scalar>(data: &ArrayView2<'_, T>) -> Result<()> {
    if data.nrows() == 0 || data.ncols() == 0 {
        return Err(Error::invalid("data set is empty"));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("data contains non-finite values"));
    }
    Ok(())
}

/// Empirical means of every W-score at `theta`, in flattening order.
/// These are the Wasserstein estimating equations.
pub fn w_equation_residuals<T: Scalar>(
    theta: &AffineParams<T>,
    data: &ArrayView2<'_, T>,
) -> Result<Array1<T>> {
    check_data(data)?;
    if data.ncols() != theta.dim() {
        return Err(Error::invalid("data and model dimensions differ"));
    }
    let scores = all_wscores(theta)?;
    let n = lit::<T>(data.nrows() as f64);
    let mut acc = Array1::<T>::zeros(scores.len());
    for row in data.rows() {
        let x = row.to_vec();
        for (a, s) in acc.iter_mut().zip(&scores) {
            *a += s.eval(&x);
        }
    }
    Ok(acc / n)
}

/// Sample mean and `(1/n)`-weighted sample covariance raised to `−1/2`.
pub fn w_estimate<T: Scalar>(data: &ArrayView2<'_, T>) -> Result<EstimatorReport<T>> {
    check_data(data)?;
    let (n, d) = data.dim();
    if n < d {
        return Err(Error::SingularMatrix {
            condition: f64::INFINITY,
        });
    }
    let (mean, cov) = mean_and_covariance(data);
    let cov = SymMatrix::symmetrize(cov)?;
    let eig = sym_eig(&cov)?;
    let (max, min) = (eig.values[0], eig.values[d - 1]);
    if !(min > rel_tol::<T>(1e-12) * max) {
        return Err(Error::SingularMatrix {
            condition: to_f64(max / min),
        });
    }
    let lambda = spd_inv_sqrt(&SpdMatrix::new(cov)?)?;
    let estimate = AffineParams::new(mean, lambda)?;
    let residuals = w_equation_residuals(&estimate, data)?;
    let norm = residuals.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    Ok(EstimatorReport {
        estimate,
        iterations: 0,
        converged: true,
        final_gradient_norm: norm,
        method: Method::WMoment,
    })
}

/// Mean log-likelihood and its gradient (location vector, symmetric matrix `G`).
struct Evaluation<T> {
    value: T,
    grad_mu: Array1<T>,
    grad_lambda: Array2<T>,
}

impl<T: Scalar> Evaluation<T> {
    fn norm(&self) -> T {
        let flat = flatten_gradient(&self.grad_mu, &self.grad_lambda);
        flat.dot(&flat).sqrt()
    }
}

fn evaluate<T: Scalar>(
    theta: &AffineParams<T>,
    shape: &ShapeDistribution<T>,
    data: &ArrayView2<'_, T>,
) -> Result<Evaluation<T>> {
    let d = theta.dim();
    let n = lit::<T>(data.nrows() as f64);
    let value = log_likelihood(theta, shape, data)? / n;
    let mut grad_mu = Array1::zeros(d);
    let mut grad_lambda = Array2::zeros((d, d));
    for row in data.rows() {
        let (gm, g) = loglik_gradient(theta, shape, &row.to_vec())?;
        grad_mu += &gm;
        grad_lambda += &g;
    }
    Ok(Evaluation {
        value,
        grad_mu: grad_mu / n,
        grad_lambda: grad_lambda / n,
    })
}

/// Gradient with respect to `K` where `Λ = exp(K)`, given `G = ∂f/∂Λ`:
/// `Q (Γ ∘ QᵀGQ) Qᵀ` with `Γ_ij = (e^{κ_i} − e^{κ_j}) / (κ_i − κ_j)`.
fn log_coordinate_gradient<T: Scalar>(lambda: &SpdMatrix<T>, g: &Array2<T>) -> Array2<T> {
    let eig = lambda.eigen();
    let q = &eig.vectors;
    let kappa: Vec<T> = eig.values.iter().map(|l| l.ln()).collect();
    let d = kappa.len();
    let inner = q.t().dot(g).dot(q);
    let gamma = Array2::from_shape_fn((d, d), |(i, j)| {
        let (li, lj) = (eig.values[i], eig.values[j]);
        let dk = kappa[i] - kappa[j];
        if dk.abs() <= rel_tol::<T>(1e-10) {
            (li + lj) * lit::<T>(0.5)
        } else {
            (li - lj) / dk
        }
    });
    q.dot(&(&gamma * &inner)).dot(&q.t())
}

/// Maximum likelihood by preconditioned gradient ascent on `(μ, log Λ)` with
/// Armijo backtracking.
///
/// The location step is `Σ ∂f/∂μ / c`, where `c Λ²` is the location Fisher
/// information of the shape, and the deformation step is half the gradient in
/// the matrix-log coordinates `K = log Λ`, which keeps every iterate positive
/// definite. Near a Gaussian optimum both are Newton steps. Convergence is
/// declared when the norm of the mean Fisher score drops to `tol`.
pub fn mle_estimate<T: Scalar>(
    data: &ArrayView2<'_, T>,
    shape: &ShapeDistribution<T>,
    init: &AffineParams<T>,
    opts: MleOptions,
) -> Result<EstimatorReport<T>> {
    check_data(data)?;
    if !shape.is_smooth() {
        return Err(Error::UnsupportedShape(format!(
            "{} has no smooth likelihood",
            shape.name()
        )));
    }
    if init.dim() != data.ncols() || shape.dim() != data.ncols() {
        return Err(Error::invalid(
            "data, shape and initial value dimensions differ",
        ));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    const ARMIJO: f64 = 1e-4;
    const SHRINK: f64 = 0.5;
    let tol = lit::<T>(opts.tol);

    let mut theta = init.clone();
    let mut eval = evaluate(&theta, shape, data)?;
    if !eval.value.is_finite() {
        return Err(Error::LineSearchFailure {
            iteration: 0,
            reason: "initial log-likelihood is not finite".into(),
        });
    }
    let location_step = lit::<T>(shape.location_information().recip());
    let mut step = T::one();
    let mut iterations = 0;
    while eval.norm() > tol && iterations < opts.max_iter {
        iterations += 1;
        let dir_mu = theta
            .sigma()
            .mul_vec(eval.grad_mu.as_slice().expect("contiguous"))
            * location_step;
        let grad_k = log_coordinate_gradient(theta.lambda(), &eval.grad_lambda);
        // the Gaussian log-likelihood has curvature −2 in K at its maximum;
        // a full gradient step would oscillate around it
        let dir_k = &grad_k * lit::<T>(0.5);
        let slope = eval.grad_mu.dot(&dir_mu) + (&grad_k * &dir_k).sum();
        let log_lambda = theta.lambda().log().into_array();
        let noise = lit::<T>(1e-13) * (T::one() + eval.value.abs());

        step = (step * lit::<T>(2.0)).min(T::one());
        let mut accepted = None;
        for _ in 0..60 {
            let candidate = SpdMatrix::exp_sym(&SymMatrix::symmetrize_unchecked(
                &log_lambda + &(&dir_k * step),
            ))
            .and_then(|l| AffineParams::new(theta.mu() + &(&dir_mu * step), l));
            if let Ok(candidate) = candidate {
                let next = evaluate(&candidate, shape, data)?;
                if next.value.is_finite() {
                    let armijo = next.value >= eval.value + lit::<T>(ARMIJO) * step * slope;
                    // below rounding level the objective cannot rank the two
                    // points; fall back to the gradient norm
                    let flat = next.value >= eval.value - noise && next.norm() < eval.norm();
                    if armijo || flat {
                        accepted = Some((candidate, next));
                        break;
                    }
                }
            }
            step = step * lit::<T>(SHRINK);
        }
        match accepted {
            Some((c, e)) => {
                theta = c;
                eval = e;
            }
            None => {
                return Err(Error::LineSearchFailure {
                    iteration: iterations,
                    reason: format!(
                        "no ascent step found (gradient norm {:.3e})",
                        to_f64(eval.norm())
                    ),
                })
            }
        }
    }
    let norm = eval.norm();
    Ok(EstimatorReport {
        estimate: theta,
        iterations,
        converged: norm <= tol,
        final_gradient_norm: norm,
        method: Method::Mle,
    })
}

/// Order-statistic transport estimator for a 1-D location-scale model.
///
/// `μ̂` is the sample mean and `σ̂ = Σ k_i x_(i)` with
/// `k_i = ∫_{z_{i−1}}^{z_i} z f(z) dz` over the equipartition points
/// `z_i = F⁻¹(i/n)` (`z_0 = −∞`, `z_n = +∞`). Returns `Λ̂ = 1/σ̂`.
pub fn wp_estimate_1d<T: Scalar>(
    data: &[T],
    shape: &ShapeDistribution<T>,
) -> Result<EstimatorReport<T>> {
    if shape.dim() != 1 {
        return Err(Error::invalid(
            "order-statistic estimator needs a 1-D shape",
        ));
    }
    let n = data.len();
    if n < 2 {
        return Err(Error::invalid("order-statistic estimator needs n >= 2"));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("data contains non-finite values"));
    }
    let weights = equipartition_weights(shape, n)?;
    wp_estimate_with_weights(data, &weights)
}

/// Order-statistic estimate from precomputed [`equipartition_weights`].
pub(crate) fn wp_estimate_with_weights<T: Scalar>(
    data: &[T],
    weights: &[T],
) -> Result<EstimatorReport<T>> {
    let n = data.len();
    let mut sorted = data.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let sigma = weights
        .iter()
        .zip(&sorted)
        .fold(T::zero(), |acc, (k, x)| acc + *k * *x);
    if !(sigma > T::zero()) {
        return Err(Error::DegenerateEstimate(format!(
            "scale estimate {} is not positive",
            to_f64(sigma)
        )));
    }
    let nt = lit::<T>(n as f64);
    let mean = sorted.iter().fold(T::zero(), |acc, x| acc + *x) / nt;
    let location_residual = data.iter().fold(T::zero(), |acc, x| acc + (*x - mean)) / nt;
    let estimate = AffineParams::new(
        Array1::from(vec![mean]),
        SpdMatrix::from_diag(&[sigma.recip()])?,
    )?;
    Ok(EstimatorReport {
        estimate,
        iterations: 0,
        converged: true,
        final_gradient_norm: location_residual.abs(),
        method: Method::Wp1D,
    })
}

/// Weights `k_1, …, k_n` of the order-statistic estimator.
pub fn equipartition_weights<T: Scalar>(shape: &ShapeDistribution<T>, n: usize) -> Result<Vec<T>> {
    let nf = n as f64;
    // z_i = F⁻¹(i/n) for i = 1..n-1; symmetric shapes give z_{n-i} = −z_i
    let mut z = vec![T::zero(); n + 1];
    z[0] = T::neg_infinity();
    z[n] = T::infinity();
    for i in 1..n {
        if 2 * i > n {
            z[i] = -z[n - i];
        } else if 2 * i == n {
            z[i] = T::zero();
        } else {
            z[i] = shape.quantile_1d(lit(i as f64 / nf))?;
        }
    }
    (1..=n)
        .map(|i| shape.partial_moment_1d(z[i - 1], z[i]))
        .collect()
}

/// Mean estimation error at one sample size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyPoint {
    pub n: usize,
    pub mean_error: f64,
    pub replications: usize,
}

/// Mean `‖θ̂_W − θ‖` over `replications` synthetic data sets per size.
pub fn consistency_sweep<T: Scalar>(
    theta: &AffineParams<T>,
    shape: &ShapeDistribution<T>,
    sizes: &[usize],
    replications: usize,
    seed: u64,
) -> Result<Vec<ConsistencyPoint>> {
    let truth: Vec<f64> = theta.to_vec().into_iter().map(to_f64).collect();
    sizes
        .iter()
        .enumerate()
        .map(|(si, &n)| {
            let errors: Result<Vec<f64>> = (0..replications)
                .into_par_iter()
                .map(|r| {
                    let s = derive_seed(derive_seed(seed, si as u64), r as u64);
                    let data = sample_model(theta, shape, n, s)?;
                    let est = w_estimate(&data.view())?.estimate.to_vec();
                    Ok(est
                        .iter()
                        .zip(&truth)
                        .map(|(a, b)| (to_f64(*a) - b).powi(2))
                        .sum::<f64>()
                        .sqrt())
                })
                .collect();
            let errors = errors?;
            Ok(ConsistencyPoint {
                n,
                mean_error: errors.iter().sum::<f64>() / errors.len() as f64,
                replications,
            })
        })
        .collect()
}

/// Least-squares slope of `log(mean_error)` against `log(n)`.
pub fn loglog_slope(points: &[ConsistencyPoint]) -> f64 {
    let xs: Vec<f64> = points.iter().map(|p| (p.n as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.mean_error.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}
