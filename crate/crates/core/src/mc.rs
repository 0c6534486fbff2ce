//! Monte Carlo summaries. Accumulation happens in `f64` regardless of the
//! scalar type of the model, and results are reported in `f64`.

use ndarray::Array2;

/// A matrix-valued Monte Carlo estimate with entrywise standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct McMatrix {
    pub value: Array2<f64>,
    pub std_error: Array2<f64>,
    pub n: usize,
}

impl McMatrix {
    /// Largest `|value − reference| / std_error` over all entries. Entries
    /// with zero standard error count only if they differ from the reference.
    pub fn max_z_score(&self, reference: &Array2<f64>) -> f64 {
        self.value
            .iter()
            .zip(self.std_error.iter())
            .zip(reference.iter())
            .map(|((v, se), r)| {
                let diff = (v - r).abs();
                if *se > 0.0 {
                    diff / se
                } else if diff <= 1e-12 * (1.0 + r.abs()) {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Running mean and standard error of every entry of a `rows × cols` matrix-valued sample.
#[derive(Debug, Clone)]
pub(crate) struct MatrixMoments {
    n: usize,
    mean: Array2<f64>,
    m2: Array2<f64>,
}

impl MatrixMoments {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            n: 0,
            mean: Array2::zeros((rows, cols)),
            m2: Array2::zeros((rows, cols)),
        }
    }

    pub fn push(&mut self, sample: impl Fn(usize, usize) -> f64) {
        self.n += 1;
        let nf = self.n as f64;
        let (r, c) = self.mean.dim();
        for i in 0..r {
            for j in 0..c {
                let x = sample(i, j);
                let delta = x - self.mean[[i, j]];
                self.mean[[i, j]] += delta / nf;
                self.m2[[i, j]] += delta * (x - self.mean[[i, j]]);
            }
        }
    }

    pub fn finish(self) -> McMatrix {
        let std_error = self.std_error();
        McMatrix {
            value: self.mean,
            std_error,
            n: self.n,
        }
    }

    pub fn mean(&self) -> &Array2<f64> {
        &self.mean
    }

    /// Standard error of each entry's mean.
    pub fn std_error(&self) -> Array2<f64> {
        let n = self.n as f64;
        if self.n < 2 {
            return Array2::from_elem(self.mean.dim(), f64::INFINITY);
        }
        self.m2.mapv(|m| (m / (n - 1.0) / n).sqrt())
    }
}

/// Mean and standard error of a scalar sample.
pub(crate) fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
