//! Standard spherically symmetric waveforms `f(z) = g(‖z‖)`.
//!
//! Each shape is normalized to unit mass, zero mean and identity covariance:
//!
//! * Gaussian: `g(r) ∝ exp(−r²/2)`.
//! * UniformBall: uniform on the ball of radius `√(d+2)`.
//! * StudentT(ν): `g(r) ∝ (1 + r²/(ν−2))^{−(ν+d)/2}`, i.e. a multivariate t
//!   with scale `(ν−2)/ν`, which has unit covariance for `ν > 2`.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use statrs::function::{beta::beta_reg, erf::erfc, gamma::ln_gamma};

use crate::error::{Error, Result};
use crate::mc::MatrixMoments;
use crate::rng::rng_from_seed;
use crate::scalar::{lit, to_f64, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShapeKind<T> {
    Gaussian,
    UniformBall,
    StudentT { nu: T },
}

impl<T: Scalar> ShapeKind<T> {
    pub fn name(&self) -> String {
        match self {
            ShapeKind::Gaussian => "gaussian".into(),
            ShapeKind::UniformBall => "uniform-ball".into(),
            ShapeKind::StudentT { nu } => format!("student-t({})", to_f64(*nu)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeDistribution<T> {
    dim: usize,
    kind: ShapeKind<T>,
    /// Support radius (UniformBall only).
    radius: f64,
    /// `log g(0)`.
    log_norm: f64,
}

impl<T: Scalar> ShapeDistribution<T> {
    pub fn new(kind: ShapeKind<T>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        let d = dim as f64;
        match kind {
            ShapeKind::Gaussian => Ok(Self {
                dim,
                kind,
                radius: f64::INFINITY,
                log_norm: -0.5 * d * (2.0 * std::f64::consts::PI).ln(),
            }),
            ShapeKind::UniformBall => Self::uniform_ball_with_radius(dim, (d + 2.0).sqrt()),
            ShapeKind::StudentT { nu } => {
                let nu = to_f64(nu);
                if !(nu > 2.0) || !nu.is_finite() {
                    return Err(Error::invalid(format!(
                        "student-t needs finite nu > 2, got {nu}"
                    )));
                }
                let log_norm = ln_gamma((nu + d) / 2.0)
                    - ln_gamma(nu / 2.0)
                    - 0.5 * d * ((nu - 2.0) * std::f64::consts::PI).ln();
                Ok(Self {
                    dim,
                    kind,
                    radius: f64::INFINITY,
                    log_norm,
                })
            }
        }
    }

    pub fn gaussian(dim: usize) -> Result<Self> {
        Self::new(ShapeKind::Gaussian, dim)
    }

    pub fn uniform_ball(dim: usize) -> Result<Self> {
        Self::new(ShapeKind::UniformBall, dim)
    }

    pub fn student_t(dim: usize, nu: T) -> Result<Self> {
        Self::new(ShapeKind::StudentT { nu }, dim)
    }

    /// Uniform ball of arbitrary radius. Only `√(d+2)` is standardized; other
    /// radii exist to exercise [`Self::verify_standardization`].
    pub fn uniform_ball_with_radius(dim: usize, radius: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::invalid(format!(
                "ball radius must be positive, got {radius}"
            )));
        }
        let d = dim as f64;
        let log_volume =
            0.5 * d * std::f64::consts::PI.ln() + d * radius.ln() - ln_gamma(0.5 * d + 1.0);
        Ok(Self {
            dim,
            kind: ShapeKind::UniformBall,
            radius,
            log_norm: -log_volume,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> ShapeKind<T> {
        self.kind
    }

    pub fn name(&self) -> String {
        self.kind.name()
    }

    /// Support radius; infinite for unbounded shapes.
    pub fn support_radius(&self) -> T {
        lit(self.radius)
    }

    /// Whether the likelihood is differentiable everywhere on the support.
    pub fn is_smooth(&self) -> bool {
        !matches!(self.kind, ShapeKind::UniformBall)
    }

    fn nu(&self) -> f64 {
        match self.kind {
            ShapeKind::StudentT { nu } => to_f64(nu),
            _ => f64::NAN,
        }
    }

    /// `c` in the location Fisher information `c Λ²`, i.e. `E[ψ(r)² r²] / d`.
    /// Infinite for the uniform ball, whose likelihood is not differentiable.
    pub(crate) fn location_information(&self) -> f64 {
        match self.kind {
            ShapeKind::Gaussian => 1.0,
            ShapeKind::UniformBall => f64::INFINITY,
            ShapeKind::StudentT { .. } => {
                let (nu, d) = (self.nu(), self.dim as f64);
                (nu + d) / (nu + d + 2.0) * nu / (nu - 2.0)
            }
        }
    }

    /// `log g(r)`; `−∞` outside a compact support.
    pub fn log_g(&self, r: T) -> T {
        let r = to_f64(r);
        let d = self.dim as f64;
        let v = match self.kind {
            ShapeKind::Gaussian => self.log_norm - 0.5 * r * r,
            ShapeKind::UniformBall => {
                if r <= self.radius {
                    self.log_norm
                } else {
                    f64::NEG_INFINITY
                }
            }
            ShapeKind::StudentT { .. } => {
                let nu = self.nu();
                self.log_norm - 0.5 * (nu + d) * (r * r / (nu - 2.0)).ln_1p()
            }
        };
        lit(v)
    }

    /// `g′(r)/g(r)`.
    pub fn radial_log_deriv(&self, r: T) -> Result<T> {
        Ok(self.radial_score_ratio(r)? * r)
    }

    /// `g′(r) / (r g(r))`, which stays finite at `r = 0` for every shape here.
    pub fn radial_score_ratio(&self, r: T) -> Result<T> {
        match self.kind {
            ShapeKind::Gaussian => Ok(-T::one()),
            ShapeKind::UniformBall => {
                if to_f64(r) < self.radius {
                    Ok(T::zero())
                } else {
                    Err(Error::OutsideSupport { radius: to_f64(r) })
                }
            }
            ShapeKind::StudentT { nu } => {
                let d = lit::<T>(self.dim as f64);
                let two = lit::<T>(2.0);
                Ok(-(nu + d) / (nu - two + r * r))
            }
        }
    }

    /// `log f(z)`.
    pub fn log_density(&self, z: &[T]) -> T {
        self.log_g(canonical_norm(z))
    }

    /// Draws one standardized point into `out`.
    pub fn draw_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [T]) {
        match self.kind {
            ShapeKind::Gaussian => {
                for v in out.iter_mut() {
                    *v = lit(rng.sample::<f64, _>(StandardNormal));
                }
            }
            ShapeKind::UniformBall => {
                let mut dir = vec![0.0f64; self.dim];
                let mut norm2 = 0.0;
                while !(norm2 > 0.0) {
                    for v in dir.iter_mut() {
                        *v = rng.sample(StandardNormal);
                    }
                    norm2 = dir.iter().map(|v| v * v).sum::<f64>();
                }
                let u: f64 = rng.random();
                let radius = self.radius * u.powf(1.0 / self.dim as f64);
                let scale = radius / norm2.sqrt();
                for (o, v) in out.iter_mut().zip(dir) {
                    *o = lit(v * scale);
                }
            }
            ShapeKind::StudentT { .. } => {
                let nu = self.nu();
                let chi = ChiSquared::new(nu).expect("nu > 2");
                let mut w: f64 = chi.sample(rng);
                while !(w > 0.0) {
                    w = chi.sample(rng);
                }
                let scale = ((nu - 2.0) / w).sqrt();
                for v in out.iter_mut() {
                    *v = lit(rng.sample::<f64, _>(StandardNormal) * scale);
                }
            }
        }
    }

    /// `n × d` i.i.d. draws using `rng`.
    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Array2<T> {
        let mut out = Array2::zeros((n, self.dim));
        for mut row in out.rows_mut() {
            self.draw_into(rng, row.as_slice_mut().expect("standard layout"));
        }
        out
    }

    /// `n × d` i.i.d. draws, deterministic in `seed`.
    pub fn sample_standard(&self, n: usize, seed: u64) -> Result<Array2<T>> {
        if n == 0 {
            return Err(Error::invalid("sample size must be at least 1"));
        }
        Ok(self.sample_with(&mut rng_from_seed(seed), n))
    }

    /// Monte Carlo check of unit mass, zero mean and identity covariance.
    ///
    /// Fails when any entry of the mean or second-moment matrix sits more than
    /// five standard errors from its target.
    pub fn verify_standardization(&self, n: usize, seed: u64) -> Result<StandardizationReport> {
        if n < 10_000 {
            return Err(Error::invalid(format!(
                "standardization check needs n >= 10^4, got {n}"
            )));
        }
        let d = self.dim;
        let mut rng = rng_from_seed(seed);
        let mut first = MatrixMoments::new(d, 1);
        let mut second = MatrixMoments::new(d, d);
        let mut z = vec![T::zero(); d];
        for _ in 0..n {
            self.draw_into(&mut rng, &mut z);
            let zf: Vec<f64> = z.iter().map(|&v| to_f64(v)).collect();
            first.push(|i, _| zf[i]);
            second.push(|i, j| zf[i] * zf[j]);
        }
        let mean: Vec<f64> = first.mean().column(0).to_vec();
        let mean_se: Vec<f64> = first.std_error().column(0).to_vec();
        let cov = second.mean().clone();
        let cov_se = second.std_error();
        let mut max_mean_dev = 0.0f64;
        let mut max_cov_dev = 0.0f64;
        let mut max_z = 0.0f64;
        for i in 0..d {
            max_mean_dev = max_mean_dev.max(mean[i].abs());
            max_z = max_z.max(mean[i].abs() / mean_se[i]);
            for j in 0..d {
                let target = if i == j { 1.0 } else { 0.0 };
                let dev = (cov[[i, j]] - target).abs();
                max_cov_dev = max_cov_dev.max(dev);
                max_z = max_z.max(dev / cov_se[[i, j]]);
            }
        }
        Ok(StandardizationReport {
            n,
            mean,
            mean_std_error: mean_se,
            second_moment: cov,
            second_moment_std_error: cov_se,
            max_mean_deviation: max_mean_dev,
            max_cov_deviation: max_cov_dev,
            max_z_score: max_z,
            passed: max_z <= 5.0,
        })
    }

    fn require_1d(&self) -> Result<()> {
        if self.dim != 1 {
            return Err(Error::invalid(format!(
                "operation needs a 1-D shape, got d = {}",
                self.dim
            )));
        }
        Ok(())
    }

    /// CDF of a 1-D shape.
    pub fn cdf_1d(&self, z: T) -> Result<T> {
        self.require_1d()?;
        Ok(lit(self.cdf_1d_f64(to_f64(z))))
    }

    fn cdf_1d_f64(&self, z: f64) -> f64 {
        match self.kind {
            ShapeKind::Gaussian => 0.5 * erfc(-z / std::f64::consts::SQRT_2),
            ShapeKind::UniformBall => ((z + self.radius) / (2.0 * self.radius)).clamp(0.0, 1.0),
            ShapeKind::StudentT { .. } => {
                let nu = self.nu();
                let t = z / ((nu - 2.0) / nu).sqrt();
                let tail = 0.5 * beta_reg(nu / 2.0, 0.5, nu / (nu + t * t));
                if t < 0.0 {
                    tail
                } else {
                    1.0 - tail
                }
            }
        }
    }

    /// Inverse CDF of a 1-D shape by bisection. `p = 0` and `p = 1` map to `∓∞`
    /// (or to the support edges of a compact shape).
    pub fn quantile_1d(&self, p: T) -> Result<T> {
        self.require_1d()?;
        let p = to_f64(p);
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid(format!("probability {p} outside [0, 1]")));
        }
        Ok(lit(self.quantile_1d_f64(p)))
    }

    fn quantile_1d_f64(&self, p: f64) -> f64 {
        if self.radius.is_finite() {
            if p <= 0.0 {
                return -self.radius;
            }
            if p >= 1.0 {
                return self.radius;
            }
        } else if p <= 0.0 {
            return f64::NEG_INFINITY;
        } else if p >= 1.0 {
            return f64::INFINITY;
        }
        let (mut lo, mut hi) = (-1.0f64, 1.0f64);
        while self.cdf_1d_f64(lo) > p {
            lo *= 2.0;
        }
        while self.cdf_1d_f64(hi) < p {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.cdf_1d_f64(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Density of a 1-D shape.
    pub fn density_1d(&self, z: T) -> Result<T> {
        self.require_1d()?;
        Ok(self.log_g(z.abs()).exp())
    }

    /// `∫_{−∞}^{z} t f(t) dt` for a 1-D shape, in closed form.
    pub fn lower_partial_moment_1d(&self, z: T) -> Result<T> {
        self.require_1d()?;
        Ok(lit(self.lower_partial_moment_f64(to_f64(z))))
    }

    fn lower_partial_moment_f64(&self, z: f64) -> f64 {
        if z.is_infinite() {
            return 0.0;
        }
        match self.kind {
            ShapeKind::Gaussian => -(self.log_norm - 0.5 * z * z).exp(),
            ShapeKind::UniformBall => {
                let r = self.radius;
                if z.abs() >= r {
                    0.0
                } else {
                    (z * z - r * r) / (4.0 * r)
                }
            }
            ShapeKind::StudentT { .. } => {
                let nu = self.nu();
                let c = self.log_norm.exp();
                -c * (nu - 2.0) / (nu - 1.0) * (1.0 + z * z / (nu - 2.0)).powf(-(nu - 1.0) / 2.0)
            }
        }
    }

    /// `∫_a^b t f(t) dt` for a 1-D shape. Finite intervals use adaptive
    /// Simpson quadrature; an infinite endpoint uses the closed-form tail.
    pub fn partial_moment_1d(&self, a: T, b: T) -> Result<T> {
        self.require_1d()?;
        let (a, b) = (to_f64(a), to_f64(b));
        if a.is_infinite() || b.is_infinite() {
            return Ok(lit(
                self.lower_partial_moment_f64(b) - self.lower_partial_moment_f64(a)
            ));
        }
        let f = |t: f64| {
            let lg = to_f64(self.log_g(lit::<T>(t.abs())));
            t * lg.exp()
        };
        // integrate only where the density is positive
        let (a, b) = if self.radius.is_finite() {
            (a.max(-self.radius), b.min(self.radius))
        } else {
            (a, b)
        };
        if b <= a {
            return Ok(T::zero());
        }
        Ok(lit(adaptive_simpson(&f, a, b, 1e-13)))
    }
}

/// `‖z‖` computed from the sorted squares, so that it is bit-identical under
/// coordinate permutations and sign flips.
pub(crate) fn canonical_norm<T: Scalar>(z: &[T]) -> T {
    let mut sq: Vec<T> = z.iter().map(|v| *v * *v).collect();
    sq.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    sq.into_iter().fold(T::zero(), |acc, v| acc + v).sqrt()
}

fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = simpson(fa, fm, fb, a, b);
    recurse(f, a, b, fa, fm, fb, whole, tol, 40)
}

/// Outcome of [`ShapeDistribution::verify_standardization`].
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizationReport {
    pub n: usize,
    pub mean: Vec<f64>,
    pub mean_std_error: Vec<f64>,
    /// `E[z zᵀ]`, which should be the identity.
    pub second_moment: Array2<f64>,
    pub second_moment_std_error: Array2<f64>,
    pub max_mean_deviation: f64,
    pub max_cov_deviation: f64,
    pub max_z_score: f64,
    pub passed: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_log_g(shape: &ShapeDistribution<f64>, r: f64) -> f64 {
        let h = 1e-5;
        (shape.log_g(r + h) - shape.log_g(r - h)) / (2.0 * h)
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(
            ShapeDistribution::<f64>::student_t(2, 2.0),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            ShapeDistribution::<f64>::student_t(2, 1.5),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            ShapeDistribution::<f64>::gaussian(0),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn gaussian_kernel_ratio() {
        let g = ShapeDistribution::<f64>::gaussian(1).unwrap();
        let ratio = (g.log_g(1.0) - g.log_g(0.0)).exp();
        assert!((ratio - (-0.5f64).exp()).abs() < 1e-15);
        assert_eq!(g.radial_log_deriv(2.0).unwrap(), -2.0);
        assert!((g.log_density(&[0.0]) + 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-15);
    }

    #[test]
    fn uniform_ball_support() {
        let b = ShapeDistribution::<f64>::uniform_ball(2).unwrap();
        assert!((b.support_radius() - 2.0).abs() < 1e-15);
        assert_eq!(b.radial_log_deriv(1.0).unwrap(), 0.0);
        assert!(matches!(
            b.radial_log_deriv(2.0),
            Err(Error::OutsideSupport { .. })
        ));
        assert!(matches!(
            b.radial_log_deriv(3.0),
            Err(Error::OutsideSupport { .. })
        ));
        assert_eq!(b.log_density(&[3.0, 0.0]), f64::NEG_INFINITY);
        // density 1/(π R²) with R = 2
        assert!(
            (b.log_density(&[0.5, 0.5]).exp() - 1.0 / (4.0 * std::f64::consts::PI)).abs() < 1e-15
        );
        let x = b.sample_standard(50_000, 3).unwrap();
        let max_norm = x
            .rows()
            .into_iter()
            .map(|r| r.dot(&r).sqrt())
            .fold(0.0, f64::max);
        assert!(max_norm <= 2.0);
    }

    #[test]
    fn student_t_log_deriv_matches_finite_difference() {
        for d in [1, 2, 3] {
            let t = ShapeDistribution::<f64>::student_t(d, 5.0).unwrap();
            for r in [0.5, 1.0, 2.0] {
                let fd = fd_log_g(&t, r);
                assert!(
                    (t.radial_log_deriv(r).unwrap() - fd).abs() < 1e-6,
                    "d={d} r={r}"
                );
            }
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let t = ShapeDistribution::<f64>::student_t(3, 5.0).unwrap();
        assert_eq!(
            t.sample_standard(100, 11).unwrap(),
            t.sample_standard(100, 11).unwrap()
        );
        assert_ne!(
            t.sample_standard(100, 11).unwrap(),
            t.sample_standard(100, 12).unwrap()
        );
    }

    #[test]
    fn gaussian_clt_bounds() {
        let n = 1_000_000usize;
        let g = ShapeDistribution::<f64>::gaussian(1).unwrap();
        let x = g.sample_standard(n, 2024).unwrap();
        let mean = x.column(0).sum() / n as f64;
        let var = x.column(0).iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let nf = n as f64;
        assert!(mean.abs() <= 4.0 / nf.sqrt());
        assert!((var - 1.0).abs() <= 4.0 * (2.0 / nf).sqrt());
    }

    #[test]
    fn standardization_flags_wrong_radius() {
        let bad = ShapeDistribution::<f64>::uniform_ball_with_radius(3, 3f64.sqrt()).unwrap();
        let rep = bad.verify_standardization(100_000, 5).unwrap();
        assert!(!rep.passed);
        // cov = d/(d+2) I = 0.6 I
        assert!((rep.second_moment[[0, 0]] - 0.6).abs() < 0.01);
        assert!(matches!(
            bad.verify_standardization(100, 5),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn one_dimensional_cdf_and_moments() {
        let g = ShapeDistribution::<f64>::gaussian(1).unwrap();
        assert!((g.cdf_1d(0.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((g.quantile_1d(0.975).unwrap() - 1.959963984540054).abs() < 1e-9);
        let phi0 = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        assert!((g.lower_partial_moment_1d(0.0).unwrap() + phi0).abs() < 1e-15);
        // quadrature against closed form: ∫_a^b zφ = φ(a) − φ(b)
        let q = g.partial_moment_1d(-0.3, 1.7).unwrap();
        let exact = g.density_1d(-0.3).unwrap() - g.density_1d(1.7).unwrap();
        assert!((q - exact).abs() < 1e-12);

        for shape in [
            ShapeDistribution::<f64>::student_t(1, 5.0).unwrap(),
            ShapeDistribution::<f64>::uniform_ball(1).unwrap(),
        ] {
            assert!((shape.cdf_1d(0.0).unwrap() - 0.5).abs() < 1e-12);
            for p in [0.01, 0.2, 0.5, 0.9] {
                let z = shape.quantile_1d(p).unwrap();
                assert!((shape.cdf_1d(z).unwrap() - p).abs() < 1e-12);
            }
            for (a, b) in [(-1.0, 0.5), (0.2, 1.5), (-3.0, -0.1)] {
                let q = shape.partial_moment_1d(a, b).unwrap();
                let exact = shape.lower_partial_moment_1d(b).unwrap()
                    - shape.lower_partial_moment_1d(a).unwrap();
                assert!(
                    (q - exact).abs() < 1e-10,
                    "{} [{a},{b}] {q} {exact}",
                    shape.name()
                );
            }
            // the first moment integrates to zero over the line
            assert!(
                shape
                    .partial_moment_1d(f64::NEG_INFINITY, f64::INFINITY)
                    .unwrap()
                    .abs()
                    < 1e-15
            );
        }
    }

    #[test]
    fn f32_shapes_work() {
        let t = ShapeDistribution::<f32>::student_t(2, 5.0).unwrap();
        let x = t.sample_standard(10, 1).unwrap();
        assert!(x.iter().all(|v| v.is_finite()));
        assert!(t.log_density(&[0.1, 0.2]).is_finite());
    }
}
