//! Ridge regression and the cross-run weight statistics derived from it.

use nalgebra::DMatrix;
use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::rng;

pub const DEFAULT_LAMBDA: f64 = 0.1;
pub const DEFAULT_BATCH: usize = 256;
pub const DEFAULT_RUNS: usize = 10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceEstimator {
    /// Divide by the number of runs.
    #[default]
    Population,
    /// Divide by the number of runs minus one.
    Sample,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RidgeConfig {
    pub lambda: f64,
    /// Source samples (images) per batch; conv-tile batches carry all tiles of
    /// each drawn sample.
    pub batch_size: usize,
    pub runs: usize,
    pub seed: u64,
    /// Append a constant 1 feature.
    pub bias: bool,
    pub variance: VarianceEstimator,
}

impl Default for RidgeConfig {
    fn default() -> Self {
        RidgeConfig {
            lambda: DEFAULT_LAMBDA,
            batch_size: DEFAULT_BATCH,
            runs: DEFAULT_RUNS,
            seed: 0,
            bias: false,
            variance: VarianceEstimator::Population,
        }
    }
}

impl RidgeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!("lambda {} must be >= 0", self.lambda)));
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidConfig("batch size must be at least 2".into()));
        }
        if self.runs < 2 {
            return Err(Error::InvalidConfig("at least 2 runs are needed for a variance".into()));
        }
        Ok(())
    }
}

/// Solves `(XᵀX + λI) Wᵀ = XᵀY` and returns `W` (`m × D`).
///
/// When there are fewer rows than features and `λ > 0`, the equivalent
/// `Wᵀ = Xᵀ (XXᵀ + λI)⁻¹ Y` is solved instead so the Cholesky factorization is
/// only `B × B`. No intercept is added.
pub fn ridge_fit(x: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    if x.nrows() != y.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{} design rows but {} target rows",
            x.nrows(),
            y.nrows()
        )));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidConfig(format!("lambda {lambda} must be >= 0")));
    }
    let (b, d) = x.shape();
    if b == 0 {
        return Err(Error::TooFew { what: "rows for ridge regression", needed: 1, found: 0 });
    }
    if d > b && lambda > 0.0 {
        let mut gram = x * x.transpose();
        for i in 0..b {
            gram[(i, i)] += lambda;
        }
        let alpha = gram.cholesky().ok_or(Error::Singular)?.solve(y);
        return Ok((x.transpose() * alpha).transpose());
    }
    let mut gram = x.transpose() * x;
    for i in 0..d {
        gram[(i, i)] += lambda;
    }
    let rhs = x.transpose() * y;
    let wt = gram.cholesky().ok_or(Error::Singular)?.solve(&rhs);
    Ok(wt.transpose())
}

/// Mean of squared residuals over all rows and outputs.
pub fn mean_squared_error(x: &DMatrix<f64>, y: &DMatrix<f64>, w: &DMatrix<f64>) -> f64 {
    let residual = x * w.transpose() - y;
    residual.norm_squared() / residual.len() as f64
}

/// Per-run ridge weights and their elementwise statistics across runs.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightStats {
    pub per_run_weights: Vec<DMatrix<f64>>,
    pub weight_mean: DMatrix<f64>,
    pub weight_variance: DMatrix<f64>,
    pub per_run_batch_loss: Vec<f64>,
    pub mean_train_loss: f64,
    /// Source samples actually used per batch.
    pub batch_size_used: usize,
    /// True when the data had fewer samples than `batch_size`, so every run
    /// fit the whole set.
    pub whole_set_batch: bool,
    pub bias: bool,
}

#[derive(Serialize, Deserialize)]
struct WeightStatsRecord {
    runs: usize,
    outputs: usize,
    features: usize,
    bias: bool,
    batch_size_used: usize,
    whole_set_batch: bool,
    mean_train_loss: f64,
    per_run_batch_loss: Vec<f64>,
    /// `outputs × features`, row-major.
    weight_mean: Vec<f64>,
    weight_variance: Vec<f64>,
    /// `runs × outputs × features`, row-major.
    per_run_weights: Vec<f64>,
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

impl WeightStats {
    pub fn to_json(&self) -> Result<String> {
        let (outputs, features) = self.weight_mean.shape();
        Ok(serde_json::to_string(&WeightStatsRecord {
            runs: self.per_run_weights.len(),
            outputs,
            features,
            bias: self.bias,
            batch_size_used: self.batch_size_used,
            whole_set_batch: self.whole_set_batch,
            mean_train_loss: self.mean_train_loss,
            per_run_batch_loss: self.per_run_batch_loss.clone(),
            weight_mean: row_major(&self.weight_mean),
            weight_variance: row_major(&self.weight_variance),
            per_run_weights: self.per_run_weights.iter().flat_map(row_major).collect(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: WeightStatsRecord = serde_json::from_str(text)?;
        let size = r.outputs * r.features;
        if r.weight_mean.len() != size || r.weight_variance.len() != size || r.per_run_weights.len() != size * r.runs {
            return Err(Error::InvalidTensor("weight arrays do not match their shapes".into()));
        }
        let mat = |v: &[f64]| DMatrix::from_row_slice(r.outputs, r.features, v);
        Ok(WeightStats {
            per_run_weights: r.per_run_weights.chunks_exact(size.max(1)).map(mat).collect(),
            weight_mean: mat(&r.weight_mean),
            weight_variance: mat(&r.weight_variance),
            per_run_batch_loss: r.per_run_batch_loss,
            mean_train_loss: r.mean_train_loss,
            batch_size_used: r.batch_size_used,
            whole_set_batch: r.whole_set_batch,
            bias: r.bias,
        })
    }
}

/// Source samples drawn for `run`, ascending.
pub fn batch_samples(sample_count: usize, config: &RidgeConfig, run: usize) -> Vec<usize> {
    if sample_count <= config.batch_size {
        return (0..sample_count).collect();
    }
    let mut r = rng::stream(config.seed, run as u64);
    let mut picked = index::sample(&mut r, sample_count, config.batch_size).into_vec();
    picked.sort_unstable();
    picked
}

/// Design rows for the given feature rows, with the optional bias column.
pub fn gather_design(features: &FeatureMatrix, rows: &[usize], bias: bool) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut x = features.data().select_rows(rows);
    if bias {
        let n = x.ncols();
        x = x.insert_column(n, 1.0);
    }
    (x, features.targets().select_rows(rows))
}

/// Fits ridge regression on `config.runs` independently drawn batches of
/// source samples and collects the weights, their mean and variance, and each
/// run's training loss on its own batch.
pub fn batched_ridge_runs(features: &FeatureMatrix, config: &RidgeConfig) -> Result<WeightStats> {
    config.validate()?;
    let n = features.sample_count();
    if features.rows() == 0 || n == 0 {
        return Err(Error::TooFew { what: "feature rows", needed: 1, found: 0 });
    }
    let fits = (0..config.runs)
        .into_par_iter()
        .map(|run| {
            let samples = batch_samples(n, config, run);
            let rows = features.rows_of_samples(&samples);
            let (x, y) = gather_design(features, &rows, config.bias);
            let w = ridge_fit(&x, &y, config.lambda)?;
            let loss = mean_squared_error(&x, &y, &w);
            Ok((w, loss))
        })
        .collect::<Result<Vec<_>>>()?;

    let (weights, losses): (Vec<_>, Vec<_>) = fits.into_iter().unzip();
    let runs = weights.len() as f64;
    let mut mean = DMatrix::zeros(weights[0].nrows(), weights[0].ncols());
    for w in &weights {
        mean += w;
    }
    mean /= runs;
    let mut var = DMatrix::zeros(mean.nrows(), mean.ncols());
    for w in &weights {
        var += (w - &mean).map(|d| d * d);
    }
    var /= match config.variance {
        VarianceEstimator::Population => runs,
        VarianceEstimator::Sample => runs - 1.0,
    };
    let mean_train_loss = losses.iter().sum::<f64>() / runs;
    Ok(WeightStats {
        per_run_weights: weights,
        weight_mean: mean,
        weight_variance: var,
        per_run_batch_loss: losses,
        mean_train_loss,
        batch_size_used: n.min(config.batch_size),
        whole_set_batch: n <= config.batch_size,
        bias: config.bias,
    })
}

/// `σ² (XᵀX)⁻¹_ii` averaged over the batches `config` would draw: the
/// noise-driven variance of each weight for fixed batch designs. Entry
/// `(j, i)` is the value for output `j`, feature `i` (identical across outputs).
pub fn noise_weight_variance(features: &FeatureMatrix, config: &RidgeConfig, noise_sigma: f64) -> Result<DMatrix<f64>> {
    let n = features.sample_count();
    let d = features.feature_dim() + usize::from(config.bias);
    let mut acc = vec![0.0; d];
    for run in 0..config.runs {
        let rows = features.rows_of_samples(&batch_samples(n, config, run));
        let (x, _) = gather_design(features, &rows, config.bias);
        let inv = (x.transpose() * &x).try_inverse().ok_or(Error::Singular)?;
        for (i, a) in acc.iter_mut().enumerate() {
            *a += inv[(i, i)];
        }
    }
    let m = features.targets().ncols();
    let s2 = noise_sigma * noise_sigma / config.runs as f64;
    Ok(DMatrix::from_fn(m, d, |_, i| s2 * acc[i]))
}
