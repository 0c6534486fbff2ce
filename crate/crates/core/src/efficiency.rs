//! Wasserstein covariance, Fisher information, the two Cramér–Rao bounds, and
//! the additive-noise characterization of the Wasserstein covariance.
//!
//! A statistic here is a map of a single observation `x ∈ ℝ^d` to `ℝ^k`. Its
//! Wasserstein covariance is `Var^W[a, b] = E_θ[∇θ̂_a(x) · ∇θ̂_b(x)]`.

use std::fmt;
use std::sync::Arc;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::{mle_estimate, w_estimate, Method, MleOptions};
use crate::linalg::{min_eigenvalue, spd_inverse, sym_eig, SymMatrix};
use crate::mc::{MatrixMoments, McMatrix};
use crate::model::{fisher_score, sample_model, sample_model_with, AffineParams};
use crate::rng::{derive_seed, rng_from_seed};
use crate::scalar::{lit, to_f64, Scalar};
use crate::shapes::ShapeDistribution;
use crate::wscore::{all_wscores, w_info_matrix, QuadraticScore};

type ValueFn<T> = dyn Fn(&[T]) -> Array1<T> + Send + Sync;
type GradientFn<T> = dyn Fn(&[T]) -> Array2<T> + Send + Sync;

/// A vector-valued statistic of one observation with analytic gradient
/// (`k × d`) and Laplacian (`k`).
#[derive(Clone)]
pub struct StatisticFn<T> {
    name: String,
    input_dim: usize,
    output_dim: usize,
    value: Arc<ValueFn<T>>,
    gradient: Arc<GradientFn<T>>,
    laplacian: Arc<ValueFn<T>>,
}

impl<T> fmt::Debug for StatisticFn<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StatisticFn")
            .field("name", &self.name)
            .field("input_dim", &self.input_dim)
            .field("output_dim", &self.output_dim)
            .finish()
    }
}

impl<T: Scalar> StatisticFn<T> {
    pub fn new(
        name: impl Into<String>,
        input_dim: usize,
        output_dim: usize,
        value: impl Fn(&[T]) -> Array1<T> + Send + Sync + 'static,
        gradient: impl Fn(&[T]) -> Array2<T> + Send + Sync + 'static,
        laplacian: impl Fn(&[T]) -> Array1<T> + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            input_dim,
            output_dim,
            value: Arc::new(value),
            gradient: Arc::new(gradient),
            laplacian: Arc::new(laplacian),
        }
    }

    /// Componentwise `scale · x_i^p`, `p >= 1`.
    pub fn power(dim: usize, p: i32, scale: T) -> Result<Self> {
        if p < 1 || dim == 0 {
            return Err(Error::invalid("power statistic needs p >= 1 and d >= 1"));
        }
        let name = match (p, to_f64(scale)) {
            (1, s) if s == 1.0 => "x".to_string(),
            (1, s) => format!("{s}x"),
            (p, s) if s == 1.0 => format!("x^{p}"),
            (p, s) => format!("{s}x^{p}"),
        };
        let pt = lit::<T>(p as f64);
        let pp = lit::<T>((p * (p - 1)) as f64);
        Ok(Self::new(
            name,
            dim,
            dim,
            move |x| Array1::from_shape_fn(x.len(), |i| scale * x[i].powi(p)),
            move |x| {
                let d = x.len();
                let mut g = Array2::zeros((d, d));
                for i in 0..d {
                    g[[i, i]] = scale * pt * x[i].powi(p - 1);
                }
                g
            },
            move |x| {
                Array1::from_shape_fn(x.len(), |i| {
                    if p >= 2 {
                        scale * pp * x[i].powi(p - 2)
                    } else {
                        T::zero()
                    }
                })
            },
        ))
    }

    /// `x ↦ x`.
    pub fn identity(dim: usize) -> Self {
        Self::power(dim, 1, T::one()).expect("valid power")
    }

    /// The given quadratic functions stacked into one statistic.
    pub fn from_quadratics(
        name: impl Into<String>,
        scores: Vec<QuadraticScore<T>>,
    ) -> Result<Self> {
        let d = scores
            .first()
            .map(|s| s.dim())
            .ok_or_else(|| Error::invalid("no quadratic functions given"))?;
        if scores.iter().any(|s| s.dim() != d) {
            return Err(Error::invalid(
                "quadratic functions have different dimensions",
            ));
        }
        let k = scores.len();
        let scores = Arc::new(scores);
        let (s1, s2, s3) = (scores.clone(), scores.clone(), scores);
        Ok(Self::new(
            name,
            d,
            k,
            move |x| Array1::from_iter(s1.iter().map(|s| s.eval(x))),
            move |x| {
                let mut g = Array2::zeros((s2.len(), x.len()));
                for (mut row, s) in g.rows_mut().into_iter().zip(s2.iter()) {
                    row.assign(&s.gradient(x));
                }
                g
            },
            move |_| Array1::from_iter(s3.iter().map(|s| s.laplacian())),
        ))
    }

    /// The W-scores of `theta` as a statistic.
    pub fn wscores(theta: &AffineParams<T>) -> Result<Self> {
        Self::from_quadratics("w-scores", all_wscores(theta)?)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn value(&self, x: &[T]) -> Array1<T> {
        (self.value)(x)
    }

    pub fn gradient(&self, x: &[T]) -> Array2<T> {
        (self.gradient)(x)
    }

    pub fn laplacian(&self, x: &[T]) -> Array1<T> {
        (self.laplacian)(x)
    }

    /// Largest deviation between the analytic gradient and central differences
    /// with step `h`, relative to `1 + |gradient|`.
    pub fn gradient_fd_error(&self, x: &[T], h: T) -> T {
        let g = self.gradient(x);
        let mut worst = T::zero();
        let mut xp = x.to_vec();
        for j in 0..x.len() {
            xp[j] = x[j] + h;
            let up = self.value(&xp);
            xp[j] = x[j] - h;
            let down = self.value(&xp);
            xp[j] = x[j];
            for a in 0..self.output_dim {
                let fd = (up[a] - down[a]) / (h + h);
                worst = worst.max((fd - g[[a, j]]).abs() / (T::one() + g[[a, j]].abs()));
            }
        }
        worst
    }
}

fn check_stat<T: Scalar>(
    stat: &StatisticFn<T>,
    theta: &AffineParams<T>,
    shape: &ShapeDistribution<T>,
) -> Result<()> {
    if stat.input_dim() != theta.dim() || shape.dim() != theta.dim() {
        return Err(Error::invalid(
            "statistic, shape and model dimensions differ",
        ));
    }
    Ok(())
}

fn check_mc_size(n: usize) -> Result<()> {
    if n < 1000 {
        return Err(Error::invalid(format!(
            "Monte Carlo size must be at least 10^3, got {n}"
        )));
    }
    Ok(())
}

const CHUNK: usize = 8192;

/// Streams `n` model draws in chunks through `visit`.
fn for_each_draw<T: Scalar>(
    theta: &AffineParams<T>,
    shape: &ShapeDistribution<T>,
    n: usize,
    seed: u64,
    mut visit: impl FnMut(&[T]) -> Result<()>,
) -> Result<()> {
    let mut rng = rng_from_seed(seed);
    let mut remaining = n;
    while remaining > 0 {
        let take = remaining.min(CHUNK);
        let xs = sample_model_with(theta, shape, &mut rng, take);
        for row in xs.rows() {
            visit(row.as_slice().expect("contiguous"))?;
        }
        remaining -= take;
    }
    Ok(())
}

fn gram_f64<T: Scalar>(g: &Array2<T>, h: &Array2<T>) -> Array2<f64> {
    let out = g.dot(&h.t());
    out.mapv(to_f64)
}

/// Monte Carlo Wasserstein covariance `E_θ[∇θ̂ ∇θ̂ᵀ]` (`k × k`).
pub fn w_covariance<T: Scalar>(
    stat: &StatisticFn<T>,
    theta: &AffineParams<T>,
    shape: &ShapeDistribution<T>,
    n: usize,
    seed: u64,
) -> Result<McMatrix> {
    check_stat(stat, theta, shape)?;
    check_mc_size(n)?;
    let k = stat.output_dim();
    let mut acc = MatrixMoments::new(k, k);
    for_each_draw(theta, shape, n, seed, |x| {
        let g = stat.gradient(x);
        let gram = gram_f64(&g, &g);
        acc.push(|a, b| gram[[a, b]]);
        Ok(())
    })?;
    Ok(acc.finish())
}

/// Monte Carlo Fisher information `E_θ[s sᵀ]` of the Fisher score `s`.
pub fn fisher_info_mc<T: Scalar>(
    theta: &AffineParams<T>,
    shape: &ShapeDistribution<T>,
    n: usize,
    seed: u64,
) -> Result<McMatrix> {
    if !shape.is_smooth() {
        return Err(Error::UnsupportedShape(format!(
            "{} has no Fisher information",
            shape.name()
        )));
    }
    if shape.dim() != theta.dim() {
        return Err(Error::invalid("shape and model dimensions differ"));
    }
    check_mc_size(n)?;
    let m = theta.param_dim();
    let mut acc = MatrixMoments::new(m, m);
    for_each_draw(theta, shape, n, seed, |x| {
        let s: Vec<f64> = fisher_score(theta, shape, x)?
            .iter()
            .map(|&v| to_f64(v))
            .collect();
        acc.push(|a, b| s[a] * s[b]);
        Ok(())
    })?;
    Ok(acc.finish())
}

/// Wasserstein–Cramér–Rao comparison `Var^W ⪰ J G_W⁻¹ Jᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheck {
    /// Monte Carlo `Var^W` (`k × k`).
    pub lhs: Array2<f64>,
    /// `J G_W⁻¹ Jᵀ` (`k × k`).
    pub rhs: Array2<f64>,
    /// Monte Carlo `J = ∂E_θ[θ̂]/∂θ` (`k × m`) with standard errors.
    pub jacobian: McMatrix,
    pub min_eig_gap: f64,
    /// Delta-method standard error of `min_eig_gap`.
    pub gap_std_error: f64,
    pub n: usize,
}

impl BoundCheck {
    /// `min_eig_gap >= −z · SE`.
    pub fn holds(&self, z: f64) -> bool {
        self.min_eig_gap >= -z * self.gap_std_error
    }
}

/// Checks the Wasserstein–Cramér–Rao inequality for `stat` by Monte Carlo.
///
/// The mean Jacobian comes from the integration-by-parts identity
/// `∂_j E_θ[θ̂_a] = E_θ[∇θ̂_a · ∇S_j]` on the same sample as `Var^W`. The
/// standard error of the gap is propagated through its per-draw influence
/// `‖∇θ̂ᵀv‖² − 2 vᵀJ_x G⁻¹ Jᵀ v` along the minimizing eigenvector `v`, which
/// needs a second pass over the same draws.
pub fn wcr_bound_check<T: Scalar>(
    stat: &StatisticFn<T>,
    theta: &AffineParams<T>,
    shape: &ShapeDistribution<T>,
    n: usize,
    seed: u64,
) -> Result<BoundCheck> {
    check_stat(stat, theta, shape)?;
    check_mc_size(n)?;
    let k = stat.output_dim();
    let scores = all_wscores(theta)?;
    let m = scores.len();
    let g_inv = spd_inverse(&w_info_matrix(theta)?.mapv(to_f64))?;
    let score_gradients = |x: &[T]| {
        let mut sg = Array2::<T>::zeros((m, x.len()));
        for (mut row, s) in sg.rows_mut().into_iter().zip(&scores) {
            row.assign(&s.gradient(x));
        }
        sg
    };

    let mut lhs_acc = MatrixMoments::new(k, k);
    let mut jac_acc = MatrixMoments::new(k, m);
    for_each_draw(theta, shape, n, seed, |x| {
        let g = stat.gradient(x);
        let gram = gram_f64(&g, &g);
        let jac = gram_f64(&g, &score_gradients(x));
        lhs_acc.push(|a, b| gram[[a, b]]);
        jac_acc.push(|a, j| jac[[a, j]]);
        Ok(())
    })?;
    let lhs = lhs_acc.finish().value;
    let jacobian = jac_acc.finish();
    let j = &jacobian.value;
    let rhs = j.dot(&g_inv).dot(&j.t());
    let gap_matrix = SymMatrix::symmetrize(&lhs - &rhs)?;
    let eig = sym_eig(&gap_matrix)?;
    let min_eig_gap = eig.values[k - 1];
    let v = eig.vectors.column(k - 1).to_owned();
    let w = g_inv.dot(&j.t().dot(&v));

    let mut influence = Vec::with_capacity(n);
    for_each_draw(theta, shape, n, seed, |x| {
        let g = stat.gradient(x).mapv(to_f64);
        let gv = g.t().dot(&v);
        let sg = score_gradients(x).mapv(to_f64);
        influence.push(gv.dot(&gv) - 2.0 * sg.dot(&gv).dot(&w));
        Ok(())
    })?;
    let (_, gap_std_error) = crate::mc::mean_se(&influence);
    Ok(BoundCheck {
        lhs,
        rhs,
        jacobian,
        min_eig_gap,
        gap_std_error,
        n,
    })
}

/// Finite-difference estimate of `∂E_θ[θ̂]/∂θ` (`k × m`) with common random
/// numbers across the perturbed parameters. A diagnostic cross-check of the
/// integration-by-parts Jacobian used by [`wcr_bound_check`].
pub fn mean_jacobian_fd<T: Scalar>(
    stat: &StatisticFn<T>,
    theta: &AffineParams<T>,
    shape: &ShapeDistribution<T>,
    n: usize,
    seed: u64,
    h: T,
) -> Result<Array2<f64>> {
    check_stat(stat, theta, shape)?;
    let d = theta.dim();
    let m = theta.param_dim();
    let k = stat.output_dim();
    let z = shape.sample_standard(n, seed)?;
    let mean_at = |th: &AffineParams<T>| -> Array1<f64> {
        let inv = th.lambda_inv().as_array();
        let mut acc = Array1::<f64>::zeros(k);
        let mut x = vec![T::zero(); d];
        for row in z.rows() {
            for (i, xi) in x.iter_mut().enumerate() {
                *xi = (0..d).fold(T::zero(), |s, c| s + inv[[i, c]] * row[c]) + th.mu()[i];
            }
            acc += &stat.value(&x).mapv(to_f64);
        }
        acc / n as f64
    };
    let base = theta.to_vec();
    let mut out = Array2::zeros((k, m));
    for p in 0..m {
        let mut up = base.clone();
        let mut down = base.clone();
        up[p] += h;
        down[p] -= h;
        let diff =
            mean_at(&AffineParams::from_vec(d, &up)?) - mean_at(&AffineParams::from_vec(d, &down)?);
        out.column_mut(p).assign(&(diff / (2.0 * to_f64(h))));
    }
    Ok(out)
}

/// Variance growth of a statistic under small additive noise.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessReport {
    pub statistic: String,
    pub sigma2: Vec<f64>,
    /// `Var[θ̂(X+Z)] − Var[θ̂(X)]` per noise level, with batch standard errors.
    pub var_increase: Vec<McMatrix>,
    /// Weighted least-squares slope of the variance increase against `σ²`
    /// through the origin, weights `1/σ²`.
    pub slope: McMatrix,
    /// `½(Cov[θ̂_a, Δθ̂_b] + Cov[θ̂_b, Δθ̂_a])`.
    pub correction: McMatrix,
    /// `slope − correction`, the noise-based estimate of `Var^W`.
    pub noise_limit: McMatrix,
    /// Monte Carlo `Var^W` on the same draws.
    pub w_covariance: McMatrix,
    /// `slope − correction − Var^W`, expected to vanish.
    pub discrepancy: McMatrix,
    pub batches: usize,
}

impl RobustnessReport {
    pub fn max_discrepancy_z(&self) -> f64 {
        self.discrepancy
            .max_z_score(&Array2::zeros(self.discrepancy.value.dim()))
    }
}

/// Sums accumulated over one batch of draws.
#[derive(Clone)]
struct NoiseSums {
    count: f64,
    sum: Array1<f64>,
    sum_sq: Array2<f64>,
    lap_sum: Array1<f64>,
    cross_lap: Array2<f64>,
    grad_gram: Array2<f64>,
    /// Per noise level: sum and sum of outer products over both antithetic points.
    noisy_sum: Vec<Array1<f64>>,
    noisy_sq: Vec<Array2<f64>>,
}

impl NoiseSums {
    fn new(k: usize, levels: usize) -> Self {
        Self {
            count: 0.0,
            sum: Array1::zeros(k),
            sum_sq: Array2::zeros((k, k)),
            lap_sum: Array1::zeros(k),
            cross_lap: Array2::zeros((k, k)),
            grad_gram: Array2::zeros((k, k)),
            noisy_sum: vec![Array1::zeros(k); levels],
            noisy_sq: vec![Array2::zeros((k, k)); levels],
        }
    }

    fn merge(&mut self, other: &NoiseSums) {
        self.count += other.count;
        self.sum += &other.sum;
        self.sum_sq += &other.sum_sq;
        self.lap_sum += &other.lap_sum;
        self.cross_lap += &other.cross_lap;
        self.grad_gram += &other.grad_gram;
        for l in 0..self.noisy_sum.len() {
            self.noisy_sum[l] += &other.noisy_sum[l];
            self.noisy_sq[l] += &other.noisy_sq[l];
        }
    }

    fn covariance(sum: &Array1<f64>, sum_sq: &Array2<f64>, count: f64) -> Array2<f64> {
        let mean = sum / count;
        let outer = mean
            .view()
            .insert_axis(ndarray::Axis(1))
            .dot(&mean.view().insert_axis(ndarray::Axis(0)));
        sum_sq / count - outer
    }

    /// `(per-level increase, slope, correction, Var^W)`.
    fn evaluate(
        &self,
        sigma2: &[f64],
    ) -> (Vec<Array2<f64>>, Array2<f64>, Array2<f64>, Array2<f64>) {
        let base = Self::covariance(&self.sum, &self.sum_sq, self.count);
        let increases: Vec<Array2<f64>> = (0..sigma2.len())
            .map(|l| {
                Self::covariance(&self.noisy_sum[l], &self.noisy_sq[l], 2.0 * self.count) - &base
            })
            .collect();
        let total: f64 = sigma2.iter().sum();
        let mut slope = Array2::zeros(base.dim());
        for inc in &increases {
            slope += inc;
        }
        slope /= total;
        let mean = &self.sum / self.count;
        let lap_mean = &self.lap_sum / self.count;
        let cov_lap = &self.cross_lap / self.count
            - mean
                .view()
                .insert_axis(ndarray::Axis(1))
                .dot(&lap_mean.view().insert_axis(ndarray::Axis(0)));
        let correction = (&cov_lap + &cov_lap.t()) * 0.5;
        let varw = &self.grad_gram / self.count;
        (increases, slope, correction, varw)
    }
}

fn batch_summary(full: Array2<f64>, batches: &[Array2<f64>], n: usize) -> McMatrix {
    let b = batches.len() as f64;
    let mean = batches
        .iter()
        .fold(Array2::<f64>::zeros(full.dim()), |acc, m| acc + m)
        / b;
    let var = batches
        .iter()
        .fold(Array2::zeros(full.dim()), |acc: Array2<f64>, m| {
            acc + (m - &mean).mapv(|v| v * v)
        })
        / (b - 1.0);
    McMatrix {
        value: full,
        std_error: var.mapv(|v| (v / b).sqrt()),
        n,
    }
}

/// Estimates `lim (Var[θ̂(X+Z)] − Var[θ̂(X)]) / σ²` and compares it with
/// `Var^W + ½(Cov[θ̂_a, Δθ̂_b] + Cov[θ̂_b, Δθ̂_a])`.
///
/// One set of draws `X` and one standard normal set `Z` serve every noise
/// level (`Z` scaled by `σ`), and every `Z` is paired with `−Z`, which
/// removes the odd-order noise terms. Standard errors come from 50 batch
/// means.
pub fn noise_robustness<T: Scalar>(
    stat: &StatisticFn<T>,
    theta: &AffineParams<T>,
    shape: &ShapeDistribution<T>,
    sigma2_grid: &[f64],
    n: usize,
    seed: u64,
) -> Result<RobustnessReport> {
    const BATCHES: usize = 50;
    check_stat(stat, theta, shape)?;
    if n < BATCHES * 100 {
        return Err(Error::invalid(format!(
            "noise robustness needs n >= {}, got {n}",
            BATCHES * 100
        )));
    }
    if sigma2_grid.len() < 3 {
        return Err(Error::invalid(
            "noise robustness needs at least three noise levels",
        ));
    }
    let d = theta.dim();
    let limit = 0.1 * to_f64(theta.sigma().as_sym().trace()) / d as f64;
    if let Some(bad) = sigma2_grid.iter().find(|&&s| !(s > 0.0) || s > limit) {
        return Err(Error::invalid(format!(
            "noise level {bad} outside (0, {limit:.4e}]"
        )));
    }
    let k = stat.output_dim();
    let levels = sigma2_grid.len();
    let sigmas: Vec<T> = sigma2_grid.iter().map(|s| lit::<T>(s.sqrt())).collect();

    let batch_sums: Vec<NoiseSums> = (0..BATCHES)
        .into_par_iter()
        .map(|b| {
            let size = n / BATCHES + usize::from(b < n % BATCHES);
            let mut rng = rng_from_seed(derive_seed(seed, b as u64));
            let xs = sample_model_with(theta, shape, &mut rng, size);
            let mut sums = NoiseSums::new(k, levels);
            let mut z = vec![T::zero(); d];
            let mut shifted = vec![T::zero(); d];
            for row in xs.rows() {
                let x = row.as_slice().expect("contiguous");
                for zi in z.iter_mut() {
                    *zi = lit(rng.sample::<f64, _>(StandardNormal));
                }
                let f = stat.value(x).mapv(to_f64);
                let lap = stat.laplacian(x).mapv(to_f64);
                let g = stat.gradient(x);
                sums.count += 1.0;
                sums.sum += &f;
                for a in 0..k {
                    for c in 0..k {
                        sums.sum_sq[[a, c]] += f[a] * f[c];
                        sums.cross_lap[[a, c]] += f[a] * lap[c];
                    }
                }
                sums.lap_sum += &lap;
                sums.grad_gram += &gram_f64(&g, &g);
                for (l, &s) in sigmas.iter().enumerate() {
                    for sign in [T::one(), -T::one()] {
                        for i in 0..d {
                            shifted[i] = x[i] + sign * s * z[i];
                        }
                        let fz = stat.value(&shifted).mapv(to_f64);
                        sums.noisy_sum[l] += &fz;
                        for a in 0..k {
                            for c in 0..k {
                                sums.noisy_sq[l][[a, c]] += fz[a] * fz[c];
                            }
                        }
                    }
                }
            }
            sums
        })
        .collect();

    let mut total = NoiseSums::new(k, levels);
    for s in &batch_sums {
        total.merge(s);
    }
    let (inc, slope, correction, varw) = total.evaluate(sigma2_grid);
    let per_batch: Vec<_> = batch_sums.iter().map(|s| s.evaluate(sigma2_grid)).collect();

    let var_increase = (0..levels)
        .map(|l| {
            let bs: Vec<Array2<f64>> = per_batch.iter().map(|p| p.0[l].clone()).collect();
            batch_summary(inc[l].clone(), &bs, n)
        })
        .collect();
    let pick =
        |f: &dyn Fn(&(Vec<Array2<f64>>, Array2<f64>, Array2<f64>, Array2<f64>)) -> Array2<f64>| {
            per_batch.iter().map(f).collect::<Vec<_>>()
        };
    let discrepancy_full = &slope - &correction - &varw;
    let slope_b = pick(&|p| p.1.clone());
    let corr_b = pick(&|p| p.2.clone());
    let varw_b = pick(&|p| p.3.clone());
    let disc_b = pick(&|p| &p.1 - &p.2 - &p.3);
    let limit_b = pick(&|p| &p.1 - &p.2);
    let limit_full = &slope - &correction;
    Ok(RobustnessReport {
        statistic: stat.name().to_string(),
        sigma2: sigma2_grid.to_vec(),
        var_increase,
        slope: batch_summary(slope, &slope_b, n),
        correction: batch_summary(correction, &corr_b, n),
        noise_limit: batch_summary(limit_full, &limit_b, n),
        w_covariance: batch_summary(varw, &varw_b, n),
        discrepancy: batch_summary(discrepancy_full, &disc_b, n),
        batches: BATCHES,
    })
}

/// Spread of an estimator across replicated data sets.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingCovariance {
    pub method: Method,
    pub n: usize,
    /// Mean estimate (flattened parameters).
    pub mean: Vec<f64>,
    /// Covariance of the flattened estimates (`m × m`).
    pub covariance: Array2<f64>,
    pub replications_used: usize,
    /// Replications dropped because the estimator failed or did not converge.
    pub failures: usize,
}

/// Covariance of `method`'s estimates over `replications` data sets of size `n`.
/// The MLE starts from the moment estimate.
pub fn estimator_sampling_covariance<T: Scalar>(
    method: Method,
    theta: &AffineParams<T>,
    shape: &ShapeDistribution<T>,
    n: usize,
    replications: usize,
    seed: u64,
) -> Result<SamplingCovariance> {
    if replications < 100 {
        return Err(Error::invalid(format!(
            "need at least 100 replications, got {replications}"
        )));
    }
    if shape.dim() != theta.dim() {
        return Err(Error::invalid("shape and model dimensions differ"));
    }
    match method {
        Method::Mle if !shape.is_smooth() => {
            return Err(Error::UnsupportedShape(format!(
                "{} has no smooth likelihood",
                shape.name()
            )))
        }
        Method::Wp1D if theta.dim() != 1 => {
            return Err(Error::invalid(
                "order-statistic estimator is one-dimensional",
            ))
        }
        _ => {}
    }
    let wp_weights = match method {
        Method::Wp1D => Some(crate::estimators::equipartition_weights(shape, n)?),
        _ => None,
    };
    let estimates: Vec<Option<Vec<f64>>> = (0..replications)
        .into_par_iter()
        .map(|r| -> Result<Option<Vec<f64>>> {
            let data = sample_model(theta, shape, n, derive_seed(seed, r as u64))?;
            let report = match method {
                Method::WMoment => w_estimate(&data.view()),
                Method::Mle => w_estimate(&data.view()).and_then(|init| {
                    mle_estimate(&data.view(), shape, &init.estimate, MleOptions::default())
                }),
                Method::Wp1D => {
                    let weights = wp_weights.as_ref().expect("weights computed");
                    crate::estimators::wp_estimate_with_weights(&data.column(0).to_vec(), weights)
                }
            };
            Ok(match report {
                Ok(r) if r.converged => Some(r.estimate.to_vec().into_iter().map(to_f64).collect()),
                _ => None,
            })
        })
        .collect::<Result<_>>()?;
    let good: Vec<Vec<f64>> = estimates.into_iter().flatten().collect();
    let failures = replications - good.len();
    if good.len() < 2 {
        return Err(Error::DegenerateEstimate(
            "fewer than two replications succeeded".into(),
        ));
    }
    let m = theta.param_dim();
    let count = good.len() as f64;
    let mean: Vec<f64> = (0..m)
        .map(|p| good.iter().map(|e| e[p]).sum::<f64>() / count)
        .collect();
    let covariance = Array2::from_shape_fn((m, m), |(a, b)| {
        good.iter()
            .map(|e| (e[a] - mean[a]) * (e[b] - mean[b]))
            .sum::<f64>()
            / (count - 1.0)
    });
    Ok(SamplingCovariance {
        method,
        n,
        mean,
        covariance,
        replications_used: good.len(),
        failures,
    })
}

/// `g_F⁻¹ / n`, the Fisher–Cramér–Rao bound for `n` observations.
pub fn fisher_bound(info: &McMatrix, n: usize) -> Result<Array2<f64>> {
    Ok(spd_inverse(&info.value)? / n as f64)
}

/// Smallest eigenvalue of `a − b` for symmetric `a`, `b`.
pub fn min_eig_difference(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    min_eigenvalue(&(a - b))
}
