use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{ImageTensor, LabeledDataset, TaskKind};
use crate::error::{Error, Result};
use crate::rng;

/// Generating parameters of a noisy linear task `y = w* x + ε`,
/// `x ~ N(0, Σ)`, `ε ~ N(0, σ² I)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub n_features: usize,
    pub m_outputs: usize,
    /// `n × n`, symmetric positive definite.
    pub covariance: DMatrix<f64>,
    pub noise_sigma: f64,
    /// `m × n`.
    pub true_weights: DMatrix<f64>,
    pub sample_count: usize,
    pub seed: u64,
}

/// The parameters a synthetic dataset was generated from.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub true_weights: DMatrix<f64>,
    pub covariance: DMatrix<f64>,
    pub noise_sigma: f64,
}

/// `scale · ρ^|i-j|`, a well-conditioned correlated covariance.
pub fn ar1_covariance(n: usize, rho: f64, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| scale * rho.powi((i as i32 - j as i32).abs()))
}

impl SyntheticSpec {
    /// The linear task family used for consistency checks: AR(1) covariance with
    /// ρ = 0.5 scaled by `cov_scale`, standard-normal true weights drawn from `seed`.
    pub fn linear_family(
        n_features: usize,
        m_outputs: usize,
        sample_count: usize,
        noise_sigma: f64,
        cov_scale: f64,
        seed: u64,
    ) -> Self {
        let mut w_rng = rng::stream(seed, 2);
        let true_weights = DMatrix::from_fn(m_outputs, n_features, |_, _| {
            w_rng.sample::<f64, _>(StandardNormal)
        });
        SyntheticSpec {
            n_features,
            m_outputs,
            covariance: ar1_covariance(n_features, 0.5, cov_scale),
            noise_sigma,
            true_weights,
            sample_count,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        let n = self.n_features;
        if n == 0 || self.m_outputs == 0 || self.sample_count == 0 {
            return Err(Error::InvalidConfig(
                "n_features, m_outputs and sample_count must be positive".into(),
            ));
        }
        if self.covariance.shape() != (n, n) {
            return Err(Error::DimensionMismatch(format!(
                "covariance is {:?}, expected {n}x{n}",
                self.covariance.shape()
            )));
        }
        if self.true_weights.shape() != (self.m_outputs, n) {
            return Err(Error::DimensionMismatch(format!(
                "true weights are {:?}, expected {}x{n}",
                self.true_weights.shape(),
                self.m_outputs
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "noise sigma {} must be a nonnegative number",
                self.noise_sigma
            )));
        }
        let scale = self.covariance.amax().max(f64::MIN_POSITIVE);
        let asym = (&self.covariance - self.covariance.transpose()).amax();
        if asym > 1e-12 * scale {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(())
    }
}

/// Draws `x ~ N(0, Σ)` and `y = x·w*ᵀ + σ ε`. Samples are `1 × n × 1` tensors.
pub fn make_synthetic_regression(spec: &SyntheticSpec) -> Result<LabeledDataset> {
    spec.validate()?;
    let chol = spec
        .covariance
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite)?;
    let l = chol.l();
    let (n, m, count) = (spec.n_features, spec.m_outputs, spec.sample_count);

    let mut x_rng = rng::stream(spec.seed, 0);
    let z = DMatrix::from_fn(n, count, |_, _| x_rng.sample::<f64, _>(StandardNormal));
    // columns are samples
    let x = &l * z;

    let mut targets = x.transpose() * spec.true_weights.transpose();
    if spec.noise_sigma > 0.0 {
        let mut e_rng = rng::stream(spec.seed, 1);
        for r in 0..count {
            for j in 0..m {
                targets[(r, j)] += spec.noise_sigma * e_rng.sample::<f64, _>(StandardNormal);
            }
        }
    }

    let samples = x
        .column_iter()
        .map(|col| ImageTensor::new(1, n, 1, col.iter().copied().collect()))
        .collect::<Result<Vec<_>>>()?;
    let ds = LabeledDataset::new("lemma2", samples, targets, TaskKind::Regression, vec![])?;
    Ok(ds.with_ground_truth(GroundTruth {
        true_weights: spec.true_weights.clone(),
        covariance: spec.covariance.clone(),
        noise_sigma: spec.noise_sigma,
    }))
}

/// `y = x² + N(0, σ²)` with `x ~ U[0, 1]`, returned under the two representations
/// `r1 = x` and `r2 = x²`. Both datasets share the same `x` and `y`.
pub fn make_quadratic_task(
    sample_count: usize,
    sigma: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if sample_count < 10 {
        return Err(Error::TooFew {
            what: "quadratic task samples",
            needed: 10,
            found: sample_count,
        });
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidConfig(format!("sigma {sigma} must be nonnegative")));
    }
    let mut x_rng = rng::stream(seed, 0);
    let mut e_rng = rng::stream(seed, 1);
    let xs: Vec<f64> = (0..sample_count).map(|_| x_rng.random::<f64>()).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|x| x * x + sigma * e_rng.sample::<f64, _>(StandardNormal))
        .collect();
    let targets = DMatrix::from_column_slice(sample_count, 1, &ys);

    let build = |name: &str, f: fn(f64) -> f64| -> Result<LabeledDataset> {
        let samples = xs
            .iter()
            .map(|&x| ImageTensor::new(1, 1, 1, vec![f(x)]))
            .collect::<Result<Vec<_>>>()?;
        LabeledDataset::new(name, samples, targets.clone(), TaskKind::Regression, vec![])
    };
    Ok((build("quadratic_r1", |x| x)?, build("quadratic_r2", |x| x * x)?))
}
