//! Wasserstein score functions of the elliptical model.
//!
//! The W-score `S` of a coordinate solves the Poisson equation
//! `∇log p · ∇S + ΔS + ∂_θ log p = 0` with `E_θ[S] = 0`. For the elliptical
//! model every W-score is a quadratic polynomial in `x` whose coefficients do
//! not depend on the waveform `g`:
//!
//! * location: `S_{μ_i}(x) = x_i − μ_i`;
//! * deformation: `S_{Λ_ij}(x) = ½ xᵀAx + bᵀx + c` with `Λ²A + AΛ² = −(ΛE_ij + E_ijΛ)`
//!   and `b = −Aμ`.
//!
//! Nothing in this module takes a shape except the residual check and the
//! Monte Carlo routines.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::linalg::{sylvester_solve, SymMatrix};
use crate::mc::{MatrixMoments, McMatrix};
use crate::model::{fisher_score, grad_x_log_density, sample_model_with, AffineParams, ParamIndex};
use crate::rng::rng_from_seed;
use crate::scalar::{lit, to_f64, Scalar};
use crate::shapes::ShapeDistribution;

/// `S(x) = ½ xᵀAx + bᵀx + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticScore<T> {
    pub a: SymMatrix<T>,
    pub b: Array1<T>,
    pub c: T,
}

impl<T: Scalar> QuadraticScore<T> {
    /// Quadratic with the constant chosen so that `E_θ[S] = 0`.
    pub fn centered(a: SymMatrix<T>, b: Array1<T>, theta: &AffineParams<T>) -> Self {
        let half = lit::<T>(0.5);
        let mu = theta.mu().as_slice().expect("contiguous");
        let a_sigma = a.as_array().dot(theta.sigma().as_array()).diag().sum();
        let mean = half * a_sigma + half * a.quad_form(mu) + b.dot(theta.mu());
        Self { a, b, c: -mean }
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn eval(&self, x: &[T]) -> T {
        lit::<T>(0.5) * self.a.quad_form(x)
            + self
                .b
                .iter()
                .zip(x)
                .fold(T::zero(), |acc, (b, x)| acc + *b * *x)
            + self.c
    }

    /// `∇S(x) = Ax + b`.
    pub fn gradient(&self, x: &[T]) -> Array1<T> {
        self.a.mul_vec(x) + &self.b
    }

    /// `ΔS = tr A`.
    pub fn laplacian(&self) -> T {
        self.a.trace()
    }
}

/// `S_{μ_i}(x) = x_i − μ_i`.
pub fn wscore_mu<T: Scalar>(theta: &AffineParams<T>, i: usize) -> Result<QuadraticScore<T>> {
    let d = theta.dim();
    ParamIndex::Mu(i).check(d)?;
    let mut b = Array1::zeros(d);
    b[i] = T::one();
    Ok(QuadraticScore {
        a: SymMatrix::zeros(d),
        b,
        c: -theta.mu()[i],
    })
}

/// W-score of the symmetric deformation coordinate `Λ_ij`, `i <= j`.
pub fn wscore_lambda<T: Scalar>(
    theta: &AffineParams<T>,
    i: usize,
    j: usize,
) -> Result<QuadraticScore<T>> {
    let d = theta.dim();
    ParamIndex::Lambda(i, j).check(d)?;
    let e = SymMatrix::<T>::basis(d, i, j);
    let le = theta.lambda().as_array().dot(e.as_array());
    // L = ΛE + EΛ = ΛE + (ΛE)ᵀ
    let neg_l = SymMatrix::symmetrize_unchecked(-(&le + &le.t()));
    let a = sylvester_solve(theta.lambda_sq(), &neg_l)?;
    let b = -a.mul_vec(theta.mu().as_slice().expect("contiguous"));
    Ok(QuadraticScore::centered(a, b, theta))
}

pub fn wscore<T: Scalar>(theta: &AffineParams<T>, param: ParamIndex) -> Result<QuadraticScore<T>> {
    match param {
        ParamIndex::Mu(i) => wscore_mu(theta, i),
        ParamIndex::Lambda(i, j) => wscore_lambda(theta, i, j),
    }
}

/// W-scores of every coordinate, in flattening order.
pub fn all_wscores<T: Scalar>(theta: &AffineParams<T>) -> Result<Vec<QuadraticScore<T>>> {
    ParamIndex::all(theta.dim())
        .into_iter()
        .map(|p| wscore(theta, p))
        .collect()
}

/// Left side of the Poisson equation for `score` as the W-score of `param`:
/// `∇log p · ∇S + ΔS + ∂_param log p`. Zero certifies the score.
pub fn poisson_residual<T: Scalar>(
    theta: &AffineParams<T>,
    shape: &ShapeDistribution<T>,
    score: &QuadraticScore<T>,
    param: ParamIndex,
    x: &[T],
) -> Result<T> {
    param.check(theta.dim())?;
    if score.dim() != theta.dim() {
        return Err(Error::invalid("score and model dimensions differ"));
    }
    let grad_log_p = grad_x_log_density(theta, shape, x)?;
    let grad_s = score.gradient(x);
    let fisher = fisher_score(theta, shape, x)?;
    Ok(grad_log_p.dot(&grad_s) + score.laplacian() + fisher[param.position(theta.dim())])
}

/// Closed-form Wasserstein information matrix `G_W[k, l] = E_θ[∇S_k · ∇S_l]`.
///
/// Location block `I`, location/deformation block `0`, deformation block
/// `tr(A_k Σ A_l)` with `Σ = Λ⁻²`.
pub fn w_info_matrix<T: Scalar>(theta: &AffineParams<T>) -> Result<Array2<T>> {
    let d = theta.dim();
    let scores = all_wscores(theta)?;
    let m = scores.len();
    let sigma = theta.sigma().as_array();
    let mut g = Array2::zeros((m, m));
    for k in 0..d {
        g[[k, k]] = T::one();
    }
    let a_sigma: Vec<Array2<T>> = scores[d..]
        .iter()
        .map(|s| s.a.as_array().dot(sigma))
        .collect();
    for k in d..m {
        for l in k..m {
            let v = (a_sigma[k - d].dot(scores[l].a.as_array())).diag().sum();
            g[[k, l]] = v;
            g[[l, k]] = v;
        }
    }
    Ok(g)
}

/// Monte Carlo estimate of `G_W` from `n` model draws.
pub fn w_info_matrix_mc<T: Scalar>(
    theta: &AffineParams<T>,
    shape: &ShapeDistribution<T>,
    n: usize,
    seed: u64,
) -> Result<McMatrix> {
    if n < 1000 {
        return Err(Error::invalid(format!(
            "Monte Carlo information needs n >= 10^3, got {n}"
        )));
    }
    if shape.dim() != theta.dim() {
        return Err(Error::invalid("shape and model dimensions differ"));
    }
    let scores = all_wscores(theta)?;
    let m = scores.len();
    let mut rng = rng_from_seed(seed);
    let mut acc = MatrixMoments::new(m, m);
    const CHUNK: usize = 4096;
    let mut remaining = n;
    while remaining > 0 {
        let take = remaining.min(CHUNK);
        let xs = sample_model_with(theta, shape, &mut rng, take);
        for row in xs.rows() {
            let x = row.as_slice().expect("contiguous");
            let grads: Vec<Vec<f64>> = scores
                .iter()
                .map(|s| s.gradient(x).iter().map(|&v| to_f64(v)).collect())
                .collect();
            acc.push(|k, l| grads[k].iter().zip(&grads[l]).map(|(a, b)| a * b).sum());
        }
        remaining -= take;
    }
    Ok(acc.finish())
}

/// Difference of W-score means under two standardized waveforms at `θ = (0, I)`.
///
/// Every W-score is quadratic and standardized waveforms share moments up to
/// order two, so each entry should vanish: a perturbation of the waveform is
/// orthogonal to the model's tangent directions.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalityCheck {
    pub params: Vec<ParamIndex>,
    pub difference: Vec<f64>,
    pub std_error: Vec<f64>,
}

impl OrthogonalityCheck {
    pub fn max_z_score(&self) -> f64 {
        self.difference
            .iter()
            .zip(&self.std_error)
            .map(|(d, s)| d.abs() / s)
            .fold(0.0, f64::max)
    }
}

pub fn orthogonality_check<T: Scalar>(
    first: &ShapeDistribution<T>,
    second: &ShapeDistribution<T>,
    n: usize,
    seed: u64,
) -> Result<OrthogonalityCheck> {
    let d = first.dim();
    if second.dim() != d {
        return Err(Error::invalid("shapes have different dimensions"));
    }
    if n < 2 {
        return Err(Error::invalid("need at least two draws per shape"));
    }
    let theta = AffineParams::<T>::standard(d);
    let scores = all_wscores(&theta)?;
    let m = scores.len();
    let moments = |shape: &ShapeDistribution<T>, s: u64| {
        let mut acc = MatrixMoments::new(m, 1);
        let xs = shape.sample_with(&mut rng_from_seed(s), n);
        for row in xs.rows() {
            let x = row.as_slice().expect("contiguous");
            let vals: Vec<f64> = scores.iter().map(|sc| to_f64(sc.eval(x))).collect();
            acc.push(|k, _| vals[k]);
        }
        acc.finish()
    };
    let a = moments(first, crate::rng::derive_seed(seed, 0));
    let b = moments(second, crate::rng::derive_seed(seed, 1));
    Ok(OrthogonalityCheck {
        params: ParamIndex::all(d),
        difference: (0..m).map(|k| a.value[[k, 0]] - b.value[[k, 0]]).collect(),
        std_error: (0..m)
            .map(|k| a.std_error[[k, 0]].hypot(b.std_error[[k, 0]]))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SpdMatrix;
    use ndarray::array;

    #[test]
    fn location_score_formula() {
        let th = AffineParams::new(array![1.0, 1.0], SpdMatrix::identity(2)).unwrap();
        let s = wscore_mu(&th, 0).unwrap();
        assert_eq!(s.eval(&[2.0, 3.0]), 1.0);
        assert_eq!(s.gradient(&[5.0, -7.0]), array![1.0, 0.0]);
        assert_eq!(s.laplacian(), 0.0);
        assert!(matches!(wscore_mu(&th, 2), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn scalar_lambda_scores() {
        // λ = 1: A = −1, b = 0, c = 1/2
        let s = wscore_lambda(&AffineParams::<f64>::standard(1), 0, 0).unwrap();
        assert!((s.a.as_array()[[0, 0]] + 1.0).abs() < 1e-15);
        assert_eq!(s.b[0], 0.0);
        assert!((s.c - 0.5).abs() < 1e-15);
        assert!((s.eval(&[2.0]) - (-2.0 + 0.5)).abs() < 1e-15);

        // λ = 2: A = −1/2, Σ = 1/4, c = 1/16
        let th =
            AffineParams::<f64>::new(array![0.0], SpdMatrix::from_diag(&[2.0]).unwrap()).unwrap();
        let s = wscore_lambda(&th, 0, 0).unwrap();
        assert!((s.a.as_array()[[0, 0]] + 0.5).abs() < 1e-15);
        assert!((s.c - 1.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn identity_lambda_diagonal_scores() {
        let th = AffineParams::<f64>::standard(3);
        for i in 0..3 {
            let s = wscore_lambda(&th, i, i).unwrap();
            let mut expected = Array2::<f64>::zeros((3, 3));
            expected[[i, i]] = -1.0;
            assert_eq!(s.a.as_array(), &expected);
        }
        assert!(matches!(
            wscore_lambda(&th, 2, 1),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn gaussian_location_residual_vanishes() {
        let th = AffineParams::<f64>::standard(2);
        let g = ShapeDistribution::gaussian(2).unwrap();
        let s = wscore_mu(&th, 1).unwrap();
        for x in [[0.3, -0.4], [2.0, 1.0], [-1.5, 0.0]] {
            assert_eq!(
                poisson_residual(&th, &g, &s, ParamIndex::Mu(1), &x).unwrap(),
                0.0
            );
        }
    }

    #[test]
    fn entrywise_derivative_score_fails_poisson_check() {
        // The unsymmetrized right-hand side Λe_ie_jᵀ + e_ie_jᵀΛ only sees half
        // of E_ij, so its score is half the symmetric-coordinate score.
        let th = AffineParams::<f64>::random_seeded(2, 3).unwrap();
        let t = ShapeDistribution::student_t(2, 5.0).unwrap();
        let good = wscore_lambda(&th, 0, 1).unwrap();
        let bad = QuadraticScore::centered(good.a.scaled(0.5), &good.b * 0.5, &th);
        let x = [th.mu()[0] + 0.7, th.mu()[1] - 0.2];
        let ok = poisson_residual(&th, &t, &good, ParamIndex::Lambda(0, 1), &x).unwrap();
        let wrong = poisson_residual(&th, &t, &bad, ParamIndex::Lambda(0, 1), &x).unwrap();
        assert!(ok.abs() < 1e-10);
        assert!(wrong.abs() > 1e-2);
    }

    #[test]
    fn scalar_information_matrix() {
        let g = w_info_matrix(&AffineParams::<f64>::standard(1)).unwrap();
        assert!((g[[0, 0]] - 1.0).abs() < 1e-15);
        assert!(g[[0, 1]].abs() < 1e-15);
        assert!((g[[1, 1]] - 1.0).abs() < 1e-15);
    }
}
