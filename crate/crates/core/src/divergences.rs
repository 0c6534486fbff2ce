//! L²-Wasserstein divergences: the closed form on the elliptical family and
//! the sorted-sample estimator in one dimension.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{spd_sqrt, SpdMatrix, SymMatrix};
use crate::model::AffineParams;
use crate::rng::derive_seed;
use crate::scalar::{lit, to_f64, Scalar};
use crate::shapes::ShapeDistribution;

/// Squared Wasserstein distance, optionally split into location and scatter parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DivergenceValue<T> {
    pub value: T,
    /// `(‖μ₁ − μ₂‖², Bures–Wasserstein trace term)`.
    pub decomposition: Option<(T, T)>,
}

/// `‖μ₁−μ₂‖² + tr(Σ₁ + Σ₂ − 2(Σ₁^{1/2} Σ₂ Σ₁^{1/2})^{1/2})` with `Σ = Λ⁻²`.
///
/// The same value holds for every shared waveform.
pub fn gelbrich_w2<T: Scalar>(
    first: &AffineParams<T>,
    second: &AffineParams<T>,
) -> Result<DivergenceValue<T>> {
    if first.dim() != second.dim() {
        return Err(Error::invalid("parameters have different dimensions"));
    }
    let location = {
        let diff = first.mu() - second.mu();
        diff.dot(&diff)
    };
    // Σ₁^{1/2} = Λ₁⁻¹
    let root = first.lambda_inv().as_array();
    let inner = root.dot(second.sigma().as_array()).dot(root);
    let cross = spd_sqrt(&SpdMatrix::new(SymMatrix::symmetrize(inner)?)?)?;
    let scatter = first.sigma().as_sym().trace() + second.sigma().as_sym().trace()
        - lit::<T>(2.0) * cross.as_sym().trace();
    // the trace term is nonnegative; clip rounding below zero
    let scatter = scatter.max(T::zero());
    Ok(DivergenceValue {
        value: location + scatter,
        decomposition: Some((location, scatter)),
    })
}

/// `(1/n) Σ (x_(i) − y_(i))²`, the squared W₂ distance between two
/// equal-size empirical measures on the line.
pub fn empirical_w2_1d<T: Scalar>(first: &[T], second: &[T]) -> Result<T> {
    if first.len() != second.len() {
        return Err(Error::invalid(format!(
            "sample sizes differ: {} vs {}",
            first.len(),
            second.len()
        )));
    }
    if first.is_empty() {
        return Err(Error::invalid("samples are empty"));
    }
    if first.iter().chain(second).any(|v| !v.is_finite()) {
        return Err(Error::invalid("samples contain non-finite values"));
    }
    let mut a = first.to_vec();
    let mut b = second.to_vec();
    a.sort_by(|x, y| x.partial_cmp(y).expect("finite"));
    b.sort_by(|x, y| x.partial_cmp(y).expect("finite"));
    let n = lit::<T>(a.len() as f64);
    Ok(a.iter()
        .zip(&b)
        .fold(T::zero(), |acc, (x, y)| acc + (*x - *y) * (*x - *y))
        / n)
}

/// Both sides of `W₂²[f₁(·−μ₁), f₂(·−μ₂)] = W₂²[f₁, f₂] + (μ₁−μ₂)²` on 1-D samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShiftDecomposition {
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
}

/// Checks the location/shape orthogonal decomposition empirically. Both sides
/// reuse the same two standardized samples.
pub fn shift_decomposition_check<T: Scalar>(
    first: &ShapeDistribution<T>,
    second: &ShapeDistribution<T>,
    mu1: T,
    mu2: T,
    n: usize,
    seed: u64,
) -> Result<ShiftDecomposition> {
    if first.dim() != 1 || second.dim() != 1 {
        return Err(Error::invalid(
            "shift decomposition check works on 1-D shapes",
        ));
    }
    if n < 10_000 {
        return Err(Error::invalid(format!(
            "shift decomposition check needs n >= 10^4, got {n}"
        )));
    }
    let z1: Vec<T> = first
        .sample_standard(n, derive_seed(seed, 0))?
        .column(0)
        .to_vec();
    let z2: Vec<T> = second
        .sample_standard(n, derive_seed(seed, 1))?
        .column(0)
        .to_vec();
    let x1: Vec<T> = z1.iter().map(|z| *z + mu1).collect();
    let x2: Vec<T> = z2.iter().map(|z| *z + mu2).collect();
    let lhs = to_f64(empirical_w2_1d(&x1, &x2)?);
    let shift = to_f64(mu1 - mu2);
    let rhs = to_f64(empirical_w2_1d(&z1, &z2)?) + shift * shift;
    Ok(ShiftDecomposition {
        lhs,
        rhs,
        gap: lhs - rhs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identical_parameters_give_zero() {
        let th = AffineParams::<f64>::random_seeded(3, 2).unwrap();
        assert!(gelbrich_w2(&th, &th).unwrap().value.abs() < 1e-12);
    }

    #[test]
    fn pure_shift() {
        let a = AffineParams::<f64>::new(array![0.0, 0.0], SpdMatrix::identity(2)).unwrap();
        let b = AffineParams::new(array![1.0, 0.0], SpdMatrix::identity(2)).unwrap();
        let v = gelbrich_w2(&a, &b).unwrap();
        assert!((v.value - 1.0).abs() < 1e-15);
        assert_eq!(v.decomposition.unwrap().0, 1.0);
    }

    #[test]
    fn isotropic_scatter() {
        let a = AffineParams::<f64>::standard(2);
        let b = AffineParams::new(array![0.0, 0.0], SpdMatrix::from_diag(&[0.5, 0.5]).unwrap())
            .unwrap();
        assert!((gelbrich_w2(&a, &b).unwrap().value - 2.0).abs() < 1e-14);
    }

    #[test]
    fn empirical_examples() {
        assert_eq!(empirical_w2_1d(&[0.0], &[1.0]).unwrap(), 1.0);
        assert_eq!(empirical_w2_1d(&[0.0, 1.0], &[1.0, 0.0]).unwrap(), 0.0);
        assert_eq!(empirical_w2_1d(&[2.0, 0.0], &[1.0, 3.0]).unwrap(), 1.0);
        assert!(matches!(
            empirical_w2_1d(&[0.0], &[1.0, 2.0]),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            empirical_w2_1d::<f64>(&[], &[]),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn zero_shift_is_exact() {
        let g = ShapeDistribution::<f64>::gaussian(1).unwrap();
        let t = ShapeDistribution::<f64>::student_t(1, 5.0).unwrap();
        let r = shift_decomposition_check(&g, &t, 0.0, 0.0, 10_000, 4).unwrap();
        assert_eq!(r.gap, 0.0);
    }
}
