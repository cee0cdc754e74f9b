//! (dataset × representation × feature mode) grids and their report artifacts.
//!
//! Stage order per cell is fixed: fit the representation on the training
//! split, apply it, extract features, run batched ridge regression, estimate
//! the entropy. Every cell derives its randomness from the same ridge seed, so
//! a cell's numbers do not depend on which other cells are in the grid.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::colorspace::DEFAULT_PREC_EPSILON;
use crate::complexity::{
    self, gaussian_entropy, info_from_variances, rank_representations, ComplexityReport, RankedReport,
    DEFAULT_ENTROPY_FLOOR, DEFAULT_THRESHOLD_FACTOR, DEFAULT_VARIANCE_FLOOR,
};
use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::features::{self, FeatureMode, DEFAULT_STRIDE, DEFAULT_TILE};
use crate::regression::{batched_ridge_runs, RidgeConfig, WeightStats};
use crate::representation::{FittedRepresentation, RepresentationKind};
use crate::spectral::DEFAULT_BLOCK;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    /// `factor ×` the lowest mean training loss among the successful cells of
    /// the same feature mode.
    Relative(f64),
    Absolute(f64),
}

impl Default for ThresholdRule {
    fn default() -> Self {
        ThresholdRule::Relative(DEFAULT_THRESHOLD_FACTOR)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub representations: Vec<RepresentationKind>,
    pub modes: Vec<FeatureMode>,
    pub ridge: RidgeConfig,
    pub prec_epsilon: f64,
    pub entropy_floor: f64,
    pub threshold: ThresholdRule,
    pub tile: usize,
    pub stride: usize,
    pub block: usize,
    /// Worker threads; `None` uses the ambient rayon pool. Never affects results.
    #[serde(skip)]
    pub jobs: Option<usize>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            representations: RepresentationKind::ALL.to_vec(),
            modes: FeatureMode::ALL.to_vec(),
            ridge: RidgeConfig::default(),
            prec_epsilon: DEFAULT_PREC_EPSILON,
            entropy_floor: DEFAULT_ENTROPY_FLOOR,
            threshold: ThresholdRule::default(),
            tile: DEFAULT_TILE,
            stride: DEFAULT_STRIDE,
            block: DEFAULT_BLOCK,
            jobs: None,
        }
    }
}

impl GridSpec {
    fn validate(&self) -> Result<()> {
        if self.representations.is_empty() || self.modes.is_empty() {
            return Err(Error::InvalidConfig("grid needs at least one representation and one mode".into()));
        }
        self.ridge.validate()?;
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.prec_epsilon) || !positive(self.entropy_floor) {
            return Err(Error::InvalidConfig("PREC epsilon and entropy floor must be positive".into()));
        }
        match self.threshold {
            ThresholdRule::Relative(k) | ThresholdRule::Absolute(k) if !(k >= 0.0) => {
                return Err(Error::InvalidConfig(format!("threshold parameter {k} must be >= 0")))
            }
            _ => {}
        }
        if self.tile == 0 || self.stride == 0 || self.block == 0 {
            return Err(Error::InvalidConfig("tile, stride and block must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellResult {
    pub report: ComplexityReport,
    pub weights: WeightStats,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellOutcome {
    pub representation: RepresentationKind,
    pub mode: FeatureMode,
    pub result: std::result::Result<CellResult, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RejectedPairing {
    pub representation: RepresentationKind,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeRanking {
    pub mode: FeatureMode,
    pub threshold_t: Option<f64>,
    pub ranking: Vec<RankedReport>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridResult {
    pub dataset_name: String,
    pub spec: GridSpec,
    pub cells: Vec<CellOutcome>,
    pub rankings: Vec<ModeRanking>,
    pub rejected: Vec<RejectedPairing>,
}

impl GridResult {
    pub fn reports(&self) -> impl Iterator<Item = &ComplexityReport> {
        self.cells.iter().filter_map(|c| c.result.as_ref().ok().map(|r| &r.report))
    }

    pub fn report(&self, rep: RepresentationKind, mode: FeatureMode) -> Option<&ComplexityReport> {
        self.cell(rep, mode)?.result.as_ref().ok().map(|r| &r.report)
    }

    pub fn cell(&self, rep: RepresentationKind, mode: FeatureMode) -> Option<&CellOutcome> {
        self.cells.iter().find(|c| c.representation == rep && c.mode == mode)
    }

    pub fn ranking(&self, mode: FeatureMode) -> Option<&ModeRanking> {
        self.rankings.iter().find(|r| r.mode == mode)
    }

    pub fn failed_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.result.is_err()).count()
    }
}

fn measure_cell(
    ds: &LabeledDataset,
    kind: RepresentationKind,
    mode: FeatureMode,
    spec: &GridSpec,
    prec_fit_samples: Option<usize>,
) -> Result<CellResult> {
    let features = features::extract(ds, mode, spec.tile, spec.stride)?;
    let weights = batched_ridge_runs(&features, &spec.ridge)?;
    let info = info_from_variances(weights.weight_variance.iter(), DEFAULT_VARIANCE_FLOOR);
    let entropy = gaussian_entropy(&features, spec.entropy_floor)?;
    let report = ComplexityReport {
        dataset_name: ds.name().to_string(),
        representation_name: kind.name().to_string(),
        mode,
        train_loss: weights.mean_train_loss,
        info_in_weights_nats: info.nats,
        tcs: 0.0,
        log_tcs: None,
        entropy,
        threshold_t: f64::NAN,
        clamped_variances: info.clamped,
        feature_dim: features.feature_dim(),
        feature_rows: features.rows(),
        batch_size_used: weights.batch_size_used,
        whole_set_batch: weights.whole_set_batch,
        prec_fit_samples,
    };
    Ok(CellResult { report, weights })
}

fn run_representation(
    train: &LabeledDataset,
    kind: RepresentationKind,
    spec: &GridSpec,
) -> Vec<CellOutcome> {
    let represented = FittedRepresentation::fit(kind, train, spec.prec_epsilon, spec.block)
        .and_then(|fitted| fitted.apply(train));
    let prec_fit_samples = (kind == RepresentationKind::Prec).then_some(train.len());
    spec.modes
        .iter()
        .map(|&mode| {
            let result = match &represented {
                Ok(ds) => measure_cell(ds, kind, mode, spec, prec_fit_samples)
                    .map_err(|e| format!("{}/{}/{mode}: {e}", train.name(), kind)),
                Err(e) => Err(format!("{}/{}: representation failed: {e}", train.name(), kind)),
            };
            CellOutcome { representation: kind, mode, result }
        })
        .collect()
}

fn dedup<T: PartialEq + Copy>(items: &[T]) -> Vec<T> {
    let mut out: Vec<T> = Vec::with_capacity(items.len());
    for &i in items {
        if !out.contains(&i) {
            out.push(i);
        }
    }
    out
}

/// Runs every (representation, mode) cell on the training split of `ds`.
///
/// Cells that fail are kept as error entries; the other cells are unaffected.
/// YCbCr and PREC on single-channel data are listed as rejected pairings
/// instead of cells.
pub fn run_grid(ds: &LabeledDataset, spec: &GridSpec) -> Result<GridResult> {
    spec.validate()?;
    match spec.jobs {
        Some(jobs) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs.max(1))
                .build()
                .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
            pool.install(|| run_grid_inner(ds, spec))
        }
        None => run_grid_inner(ds, spec),
    }
}

fn run_grid_inner(ds: &LabeledDataset, spec: &GridSpec) -> Result<GridResult> {
    let train = ds.train_subset()?;
    let (_, _, channels) = train.sample_shape().ok_or(Error::TooFew {
        what: "training samples",
        needed: 1,
        found: 0,
    })?;
    let mut accepted = Vec::new();
    let mut rejected = Vec::new();
    for kind in dedup(&spec.representations) {
        match kind.check_channels(channels) {
            Ok(()) => accepted.push(kind),
            Err(e) => rejected.push(RejectedPairing { representation: kind, reason: e.to_string() }),
        }
    }
    let spec_modes = GridSpec { modes: dedup(&spec.modes), ..spec.clone() };

    let mut cells: Vec<CellOutcome> = accepted
        .par_iter()
        .map(|&kind| run_representation(&train, kind, &spec_modes))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();

    let mut rankings = Vec::new();
    for &mode in &spec_modes.modes {
        let losses = cells
            .iter()
            .filter(|c| c.mode == mode)
            .filter_map(|c| c.result.as_ref().ok().map(|r| r.report.train_loss));
        let threshold = match spec.threshold {
            ThresholdRule::Absolute(t) => Some(t),
            ThresholdRule::Relative(k) => complexity::relative_threshold(losses, k),
        };
        let mut reports = Vec::new();
        for cell in cells.iter_mut().filter(|c| c.mode == mode) {
            if let (Ok(r), Some(t)) = (&mut cell.result, threshold) {
                r.report.apply_threshold(t);
                reports.push(r.report.clone());
            }
        }
        let ranking = match threshold {
            Some(t) if !reports.is_empty() => rank_representations(&reports, t)?,
            _ => Vec::new(),
        };
        rankings.push(ModeRanking { mode, threshold_t: threshold, ranking });
    }

    Ok(GridResult {
        dataset_name: ds.name().to_string(),
        spec: spec_modes,
        cells,
        rankings,
        rejected,
    })
}

#[derive(Serialize)]
struct CellRecord<'a> {
    representation: RepresentationKind,
    mode: FeatureMode,
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<&'a ComplexityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<&'a str>,
}

#[derive(Serialize)]
struct GridRecord<'a> {
    dataset: &'a str,
    config: &'a GridSpec,
    cells: Vec<CellRecord<'a>>,
    rankings: &'a [ModeRanking],
    rejected: &'a [RejectedPairing],
}

/// Filesystem-safe form of a dataset name.
pub fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

impl GridResult {
    pub fn to_json(&self) -> Result<String> {
        let cells = self
            .cells
            .iter()
            .map(|c| match &c.result {
                Ok(r) => CellRecord {
                    representation: c.representation,
                    mode: c.mode,
                    status: "ok",
                    report: Some(&r.report),
                    error: None,
                },
                Err(e) => CellRecord {
                    representation: c.representation,
                    mode: c.mode,
                    status: "error",
                    report: None,
                    error: Some(e),
                },
            })
            .collect();
        Ok(serde_json::to_string_pretty(&GridRecord {
            dataset: &self.dataset_name,
            config: &self.spec,
            cells,
            rankings: &self.rankings,
            rejected: &self.rejected,
        })?)
    }

    /// Successful cells as `dataset,representation,mode,train_loss,log_tcs,entropy`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["dataset", "representation", "mode", "train_loss", "log_tcs", "entropy"])?;
        for r in self.reports() {
            w.write_record([
                r.dataset_name.clone(),
                r.representation_name.clone(),
                r.mode.to_string(),
                r.train_loss.to_string(),
                r.log_tcs.map(|v| v.to_string()).unwrap_or_default(),
                r.entropy.value_nats.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidConfig(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    pub fn ranking_text(&self) -> String {
        let mut out = String::new();
        for mr in &self.rankings {
            let t = mr.threshold_t.map(|t| format!("{t:e}")).unwrap_or_else(|| "n/a".into());
            let _ = writeln!(out, "dataset {} | mode {} | threshold t = {t}", self.dataset_name, mr.mode);
            for r in &mr.ranking {
                let log_tcs = r.log_tcs.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
                let note = if r.disregarded { "  disregarded: train loss >= t" } else { "" };
                let _ = writeln!(
                    out,
                    "{:>3}. {:<9} tcs {:.6e}  ln tcs {:>9}  train loss {:.3e}{note}",
                    r.rank, r.representation_name, r.tcs, log_tcs, r.train_loss
                );
            }
            for c in self.cells.iter().filter(|c| c.mode == mr.mode) {
                if let Err(e) = &c.result {
                    let _ = writeln!(out, "  -  {:<9} failed: {e}", c.representation.name());
                }
            }
            out.push('\n');
        }
        for r in &self.rejected {
            let _ = writeln!(out, "rejected {}: {}", r.representation, r.reason);
        }
        out
    }

    /// Writes `report.json`, `report.csv`, `ranking.txt` and one
    /// `cell_<dataset>_<rep>_<mode>/weights.json` per successful cell.
    pub fn write_outputs(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, text: &str| {
            let path = dir.join(name);
            fs::write(&path, text).map_err(|e| Error::io(&path, e))
        };
        write("report.json", &self.to_json()?)?;
        write("report.csv", &self.to_csv()?)?;
        write("ranking.txt", &self.ranking_text())?;
        for c in &self.cells {
            if let Ok(r) = &c.result {
                let cell_dir = dir.join(format!(
                    "cell_{}_{}_{}",
                    sanitize(&self.dataset_name),
                    c.representation.name(),
                    c.mode.name()
                ));
                fs::create_dir_all(&cell_dir).map_err(|e| Error::io(&cell_dir, e))?;
                let path = cell_dir.join("weights.json");
                fs::write(&path, r.weights.to_json()?).map_err(|e| Error::io(&path, e))?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{make_synthetic_regression, make_texture_classification, split_dataset, SyntheticSpec, TextureSpec};

    fn textures(n: usize, size: usize, channels: usize) -> LabeledDataset {
        make_texture_classification(&TextureSpec { sample_count: n, size, channels, ..TextureSpec::default() }).unwrap()
    }

    fn quick_spec() -> GridSpec {
        GridSpec { ridge: RidgeConfig { batch_size: 32, runs: 4, ..RidgeConfig::default() }, ..GridSpec::default() }
    }

    #[test]
    fn identity_dense_on_linear_task_recovers_noise() {
        let sigma = 0.2;
        let ds = make_synthetic_regression(&SyntheticSpec::linear_family(10, 2, 4096, sigma, 1.0, 3)).unwrap();
        let spec = GridSpec {
            representations: vec![RepresentationKind::Rgb, RepresentationKind::Dct],
            modes: vec![FeatureMode::Dense],
            ..GridSpec::default()
        };
        let grid = run_grid(&ds, &spec).unwrap();
        let r = grid.report(RepresentationKind::Rgb, FeatureMode::Dense).unwrap();
        assert!((r.train_loss - sigma * sigma).abs() / (sigma * sigma) < 0.15, "{}", r.train_loss);
        assert_eq!(grid.ranking(FeatureMode::Dense).unwrap().ranking.len(), 2);
    }

    #[test]
    fn gray_data_rejects_color_pairings() {
        let ds = textures(30, 10, 1);
        let grid = run_grid(&ds, &quick_spec()).unwrap();
        assert_eq!(grid.rejected.len(), 2);
        assert_eq!(grid.cells.len(), 3 * 2);
        assert_eq!(grid.failed_cells(), 0);
    }

    #[test]
    fn cardinality_and_determinism() {
        let ds = textures(40, 10, 3);
        let spec = quick_spec();
        let a = run_grid(&ds, &spec).unwrap();
        assert_eq!(a.cells.len(), 10);
        let b = run_grid(&ds, &GridSpec { jobs: Some(1), ..spec.clone() }).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }

    #[test]
    fn failing_cell_is_quarantined() {
        // 6x6 images are too small for 7x7 tiles; block DCT pads them to 8x8
        let ds = textures(20, 6, 3);
        let spec = GridSpec {
            representations: vec![RepresentationKind::Rgb, RepresentationKind::Blockdct],
            ..quick_spec()
        };
        let grid = run_grid(&ds, &spec).unwrap();
        assert_eq!(grid.failed_cells(), 1);
        let failed = grid.cell(RepresentationKind::Rgb, FeatureMode::ConvTile).unwrap();
        assert!(failed.result.as_ref().unwrap_err().contains("rgb/conv_tile"));
        assert!(grid.report(RepresentationKind::Blockdct, FeatureMode::ConvTile).is_some());
    }

    #[test]
    fn removing_a_representation_leaves_other_cells_alone() {
        let ds = textures(40, 10, 3);
        let spec = GridSpec { threshold: ThresholdRule::Absolute(1.0), ..quick_spec() };
        let full = run_grid(&ds, &spec).unwrap();
        let fewer = run_grid(
            &ds,
            &GridSpec { representations: vec![RepresentationKind::Prec, RepresentationKind::Dct], ..spec },
        )
        .unwrap();
        for c in &fewer.cells {
            let a = c.result.as_ref().unwrap();
            let b = full.cell(c.representation, c.mode).unwrap().result.as_ref().unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn prec_is_fitted_on_the_training_split_only() {
        let ds = split_dataset(textures(50, 8, 3), (0.6, 0.2, 0.2), 4).unwrap();
        let spec = GridSpec {
            representations: vec![RepresentationKind::Prec],
            modes: vec![FeatureMode::Dense],
            ..quick_spec()
        };
        let grid = run_grid(&ds, &spec).unwrap();
        let r = grid.report(RepresentationKind::Prec, FeatureMode::Dense).unwrap();
        assert_eq!(r.prec_fit_samples, Some(30));
        // the measured cell equals one computed by hand from a train-only fit
        let train = ds.train_subset().unwrap();
        let fitted = FittedRepresentation::fit(RepresentationKind::Prec, &train, spec.prec_epsilon, 8).unwrap();
        let by_hand = measure_cell(&fitted.apply(&train).unwrap(), RepresentationKind::Prec, FeatureMode::Dense, &spec, Some(30)).unwrap();
        assert_eq!(by_hand.report.train_loss, r.train_loss);
        assert_eq!(by_hand.report.entropy, r.entropy);
    }

    #[test]
    fn outputs_are_written() {
        let ds = textures(30, 8, 3);
        let spec = GridSpec {
            representations: vec![RepresentationKind::Rgb, RepresentationKind::Dct],
            modes: vec![FeatureMode::Dense],
            ..quick_spec()
        };
        let grid = run_grid(&ds, &spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        grid.write_outputs(dir.path()).unwrap();
        let csv = fs::read_to_string(dir.path().join("report.csv")).unwrap();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.starts_with("dataset,representation,mode,train_loss,log_tcs,entropy"));
        assert!(dir.path().join("cell_textures_dct_dense/weights.json").is_file());
        let ranking = fs::read_to_string(dir.path().join("ranking.txt")).unwrap();
        assert!(ranking.contains("mode dense"));
        let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
        assert_eq!(json["cells"].as_array().unwrap().len(), 2);
    }
}
