//! The scoring core.
//!
//! * [`gaussian_entropy`]: coding length of the features under a Gaussian model,
//!   `Ĥ = ½ Σ_i log(2πe λ_i)` over the eigenvalues of the sample covariance,
//!   obtained from the singular values of the centered design matrix.
//! * [`info_in_weights`]: `I(w;D) = −½ Σ log α_ij`, `α_ij = log(1 + var(w_ij))`,
//!   reported in relative nats (the additive constant is fixed at 0).
//! * [`tcs`]: `1 / I(w;D)` when the training loss is below the threshold, else 0.
//! * [`lemma2_check`]: whether `(m/n)·Ĥ` and `I(w;D)` order a family of
//!   synthetic cells the same way, as the lower bound between them predicts.
//! * [`rank_representations`]: orders cells by TCS, loss-gated cells last.

use std::f64::consts::{E, PI};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, FeatureMode};
use crate::regression::WeightStats;
use crate::stats;

pub const DEFAULT_ENTROPY_FLOOR: f64 = 1e-12;
pub const DEFAULT_VARIANCE_FLOOR: f64 = 1e-300;
pub const DEFAULT_THRESHOLD_FACTOR: f64 = 10.0;
/// Minimum Spearman correlation for a consistent family of cells.
pub const LEMMA2_MIN_CORRELATION: f64 = 0.9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyEstimate {
    pub value_nats: f64,
    pub retained_dims: usize,
    /// Dimensions whose covariance eigenvalue was below `floor` and was
    /// replaced by it.
    pub floored_dims: usize,
    pub floor: f64,
    pub centered: bool,
}

/// Gaussian coding length of the rows of `features`.
pub fn gaussian_entropy(features: &FeatureMatrix, floor: f64) -> Result<EntropyEstimate> {
    gaussian_entropy_of(features.data(), floor)
}

/// Covariance eigenvalues of the rows of `x` (descending, length `D`), from the
/// singular values of the column-centered matrix. Dimensions beyond the rank
/// bound `min(N, D)` get eigenvalue 0.
pub fn covariance_spectrum(x: &DMatrix<f64>) -> Result<Vec<f64>> {
    let (n, d) = x.shape();
    if n < 2 {
        return Err(Error::TooFew { what: "rows for a covariance estimate", needed: 2, found: n });
    }
    let mut centered = x.clone();
    for mut col in centered.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    let svd = centered.svd(false, false);
    let mut eig: Vec<f64> = svd
        .singular_values
        .iter()
        .map(|s| s * s / (n - 1) as f64)
        .collect();
    eig.resize(d, 0.0);
    eig.sort_by(|a, b| b.total_cmp(a));
    Ok(eig)
}

pub fn gaussian_entropy_of(x: &DMatrix<f64>, floor: f64) -> Result<EntropyEstimate> {
    if !(floor > 0.0 && floor.is_finite()) {
        return Err(Error::InvalidConfig(format!("entropy floor {floor} must be positive")));
    }
    let spectrum = covariance_spectrum(x)?;
    Ok(entropy_from_spectrum(&spectrum, floor))
}

pub fn entropy_from_spectrum(spectrum: &[f64], floor: f64) -> EntropyEstimate {
    let c = (2.0 * PI * E).ln();
    let floored_dims = spectrum.iter().filter(|&&l| l < floor).count();
    let value_nats = 0.5 * spectrum.iter().map(|&l| c + l.max(floor).ln()).sum::<f64>();
    EntropyEstimate {
        value_nats,
        retained_dims: spectrum.len() - floored_dims,
        floored_dims,
        floor,
        centered: true,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfoEstimate {
    pub nats: f64,
    /// Weights whose variance was below the floor and was clamped to it.
    pub clamped: usize,
}

/// `−½ Σ log(log(1 + max(v, floor)))` over the given weight variances.
pub fn info_from_variances<'a>(variances: impl IntoIterator<Item = &'a f64>, floor: f64) -> InfoEstimate {
    let mut clamped = 0;
    let mut sum = 0.0;
    for &v in variances {
        let v = if v < floor {
            clamped += 1;
            floor
        } else {
            v
        };
        sum += v.ln_1p().ln();
    }
    InfoEstimate { nats: -0.5 * sum, clamped }
}

/// Information in the weights with the default variance floor.
pub fn info_in_weights(stats: &WeightStats) -> f64 {
    info_from_variances(stats.weight_variance.iter(), DEFAULT_VARIANCE_FLOOR).nats
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TcsScore {
    pub tcs: f64,
    /// Natural log of `tcs`; absent when `tcs` is 0.
    pub log_tcs: Option<f64>,
}

/// `1 / info` gated on `train_loss < threshold` and `info > 0`.
pub fn tcs(info: f64, train_loss: f64, threshold: f64) -> TcsScore {
    if train_loss < threshold && info > 0.0 && info.is_finite() {
        TcsScore {
            tcs: 1.0 / info,
            log_tcs: Some(-info.ln()),
        }
    } else {
        TcsScore { tcs: 0.0, log_tcs: None }
    }
}

/// `factor × min(losses)`, never below the smallest positive float so a perfect
/// fit still passes its own gate.
pub fn relative_threshold(losses: impl IntoIterator<Item = f64>, factor: f64) -> Option<f64> {
    losses
        .into_iter()
        .filter(|l| l.is_finite())
        .min_by(f64::total_cmp)
        .map(|best| (factor * best).max(f64::MIN_POSITIVE))
}

/// Everything measured for one (dataset, representation, mode) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub dataset_name: String,
    pub representation_name: String,
    pub mode: FeatureMode,
    pub train_loss: f64,
    /// Relative nats; the additive constant is 0.
    pub info_in_weights_nats: f64,
    pub tcs: f64,
    pub log_tcs: Option<f64>,
    pub entropy: EntropyEstimate,
    pub threshold_t: f64,
    pub clamped_variances: usize,
    pub feature_dim: usize,
    pub feature_rows: usize,
    pub batch_size_used: usize,
    pub whole_set_batch: bool,
    /// Samples the PREC transform was fitted on, when PREC was used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prec_fit_samples: Option<usize>,
}

impl ComplexityReport {
    /// Sets the threshold and recomputes the gated score.
    pub fn apply_threshold(&mut self, threshold: f64) {
        let score = tcs(self.info_in_weights_nats, self.train_loss, threshold);
        self.threshold_t = threshold;
        self.tcs = score.tcs;
        self.log_tcs = score.log_tcs;
    }
}

/// One synthetic cell for the consistency check.
#[derive(Clone, Debug, PartialEq)]
pub struct Lemma2Cell {
    pub report: ComplexityReport,
    pub n_features: usize,
    pub m_outputs: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lemma2Status {
    Consistent,
    Violation,
    /// Ranks of one side are constant, so no correlation exists.
    Degenerate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lemma2Consistency {
    /// `(m/n)·Ĥ` per cell.
    pub bound_values: Vec<f64>,
    pub info_values: Vec<f64>,
    pub spearman: Option<f64>,
    pub status: Lemma2Status,
}

/// Rank agreement between `(m/n)·Ĥ` and the measured information in weights.
///
/// The bound has an unidentified additive constant, so only the ordering is
/// testable: across cells that differ in covariance scale or conditioning, more
/// entropy must come with more information in the weights.
pub fn lemma2_check(cells: &[Lemma2Cell]) -> Result<Lemma2Consistency> {
    if cells.len() < 3 {
        return Err(Error::TooFew { what: "cells for the consistency check", needed: 3, found: cells.len() });
    }
    let bound_values: Vec<f64> = cells
        .iter()
        .map(|c| c.m_outputs as f64 / c.n_features as f64 * c.report.entropy.value_nats)
        .collect();
    let info_values: Vec<f64> = cells.iter().map(|c| c.report.info_in_weights_nats).collect();
    let spearman = stats::spearman(&bound_values, &info_values);
    let status = match spearman {
        None => Lemma2Status::Degenerate,
        Some(r) if r < LEMMA2_MIN_CORRELATION => Lemma2Status::Violation,
        Some(_) => Lemma2Status::Consistent,
    };
    Ok(Lemma2Consistency {
        bound_values,
        info_values,
        spearman,
        status,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedReport {
    /// 1-based position.
    pub rank: usize,
    pub representation_name: String,
    pub tcs: f64,
    pub log_tcs: Option<f64>,
    pub train_loss: f64,
    /// Training loss was not below the threshold.
    pub disregarded: bool,
}

/// Orders reports by descending TCS (ties: lower training loss, then name),
/// with every report whose loss is at or above `threshold` placed last and
/// marked disregarded.
pub fn rank_representations(reports: &[ComplexityReport], threshold: f64) -> Result<Vec<RankedReport>> {
    let first = reports.first().ok_or(Error::TooFew { what: "reports to rank", needed: 1, found: 0 })?;
    if let Some(bad) = reports
        .iter()
        .find(|r| r.dataset_name != first.dataset_name || r.mode != first.mode)
    {
        return Err(Error::InvalidConfig(format!(
            "cannot rank {}/{} together with {}/{}",
            bad.dataset_name, bad.mode, first.dataset_name, first.mode
        )));
    }
    let mut order: Vec<(bool, &ComplexityReport)> = reports
        .iter()
        .map(|r| (!(r.train_loss < threshold), r))
        .collect();
    order.sort_by(|(da, a), (db, b)| {
        da.cmp(db)
            .then_with(|| if *da { std::cmp::Ordering::Equal } else { b.tcs.total_cmp(&a.tcs) })
            .then_with(|| a.train_loss.total_cmp(&b.train_loss))
            .then_with(|| a.representation_name.cmp(&b.representation_name))
    });
    Ok(order
        .into_iter()
        .enumerate()
        .map(|(i, (disregarded, r))| RankedReport {
            rank: i + 1,
            representation_name: r.representation_name.clone(),
            tcs: r.tcs,
            log_tcs: r.log_tcs,
            train_loss: r.train_loss,
            disregarded,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    use super::*;
    use crate::rng;

    fn report(name: &str, loss: f64, info: f64, t: f64) -> ComplexityReport {
        let mut r = ComplexityReport {
            dataset_name: "d".into(),
            representation_name: name.into(),
            mode: FeatureMode::Dense,
            train_loss: loss,
            info_in_weights_nats: info,
            tcs: 0.0,
            log_tcs: None,
            entropy: entropy_from_spectrum(&[1.0], 1e-12),
            threshold_t: t,
            clamped_variances: 0,
            feature_dim: 1,
            feature_rows: 1,
            batch_size_used: 1,
            whole_set_batch: false,
            prec_fit_samples: None,
        };
        r.apply_threshold(t);
        r
    }

    #[test]
    fn info_reference_values() {
        let e1 = E - 1.0;
        assert!(info_from_variances(&[e1, e1, e1], DEFAULT_VARIANCE_FLOOR).nats.abs() < 1e-12);
        let two = info_from_variances(&[0.1, 0.1], DEFAULT_VARIANCE_FLOOR).nats;
        // α = ln 1.1 = 0.0953102, I = −ln α
        assert!((two - 2.350_619).abs() < 1e-6, "{two}");
        let small = info_from_variances(&[0.01, 0.01], DEFAULT_VARIANCE_FLOOR).nats;
        // α = ln 1.01 = 0.00995033, I = −ln α = 4.610149
        assert!((small - 4.610_149).abs() < 1e-6, "{small}");
        assert!(small > two);
    }

    #[test]
    fn zero_variance_is_clamped() {
        let est = info_from_variances(&[0.0, 0.5], DEFAULT_VARIANCE_FLOOR);
        assert_eq!(est.clamped, 1);
        assert!(est.nats.is_finite());
        assert!(est.nats > 300.0);
    }

    #[test]
    fn tcs_reference_values() {
        assert_eq!(tcs(100.0, 0.5, 0.5), TcsScore { tcs: 0.0, log_tcs: None });
        let s = tcs(100.0, 0.1, 0.5);
        assert!((s.tcs - 0.01).abs() < 1e-15);
        assert!((s.log_tcs.unwrap() + 4.605_170_186).abs() < 1e-9);
        assert_eq!(tcs(-1.0, 0.0, 1.0).tcs, 0.0);
        assert_eq!(tcs(0.0, 0.0, 1.0).tcs, 0.0);
    }

    #[test]
    fn entropy_of_standard_normal() {
        let mut r = rng::rng(11);
        let d = 20;
        let x = DMatrix::from_fn(20_000, d, |_, _| r.sample::<f64, _>(StandardNormal));
        let est = gaussian_entropy_of(&x, DEFAULT_ENTROPY_FLOOR).unwrap();
        let exact = d as f64 * 0.5 * (2.0 * PI * E).ln();
        assert!((est.value_nats - exact).abs() / exact < 0.02, "{} vs {exact}", est.value_nats);
        assert_eq!((est.retained_dims, est.floored_dims), (d, 0));
    }

    #[test]
    fn entropy_scaling_and_flooring() {
        let mut r = rng::rng(12);
        let x = DMatrix::from_fn(200, 5, |_, _| r.random::<f64>());
        let a = 3.0;
        let h1 = gaussian_entropy_of(&x, 1e-12).unwrap();
        let h2 = gaussian_entropy_of(&(&x * a), 1e-12).unwrap();
        assert!((h2.value_nats - h1.value_nats - 5.0 * a.ln()).abs() < 1e-9);

        // rank-deficient: 4 rows in 10 dimensions leave at least 7 zero eigenvalues
        let y = DMatrix::from_fn(4, 10, |_, _| r.random::<f64>());
        let h = gaussian_entropy_of(&y, 1e-12).unwrap();
        assert!(h.floored_dims >= 7);
        assert_eq!(h.floored_dims + h.retained_dims, 10);
        assert!(gaussian_entropy_of(&DMatrix::zeros(1, 3), 1e-12).is_err());
    }

    #[test]
    fn covariance_spectrum_matches_direct_covariance() {
        let mut r = rng::rng(13);
        let x = DMatrix::from_fn(50, 4, |_, c| r.random::<f64>() * (c + 1) as f64 + c as f64);
        let n = x.nrows() as f64;
        let mean = x.row_mean();
        let centered = DMatrix::from_fn(50, 4, |i, j| x[(i, j)] - mean[j]);
        let cov = centered.transpose() * &centered / (n - 1.0);
        let mut direct: Vec<f64> = cov.symmetric_eigenvalues().iter().copied().collect();
        direct.sort_by(|a, b| b.total_cmp(a));
        let spectrum = covariance_spectrum(&x).unwrap();
        for (a, b) in spectrum.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-10 * b.abs().max(1.0));
        }
    }

    fn cell(h: f64, info: f64) -> Lemma2Cell {
        let mut r = report("x", 0.0, info, 1.0);
        r.entropy.value_nats = h;
        Lemma2Cell { report: r, n_features: 10, m_outputs: 2 }
    }

    #[test]
    fn lemma2_statuses() {
        let ok = lemma2_check(&[cell(1.0, 5.0), cell(2.0, 6.0), cell(3.0, 9.0)]).unwrap();
        assert_eq!(ok.status, Lemma2Status::Consistent);
        assert_eq!(ok.spearman, Some(1.0));
        assert!((ok.bound_values[1] - 0.4).abs() < 1e-15);
        let dup = lemma2_check(&[cell(1.0, 5.0), cell(1.0, 5.0), cell(1.0, 5.0)]).unwrap();
        assert_eq!(dup.status, Lemma2Status::Degenerate);
        let anti = lemma2_check(&[cell(1.0, 9.0), cell(2.0, 6.0), cell(3.0, 5.0)]).unwrap();
        assert_eq!(anti.status, Lemma2Status::Violation);
        assert!(lemma2_check(&[cell(1.0, 1.0), cell(2.0, 2.0)]).is_err());
    }

    #[test]
    fn ranking_gate_and_order() {
        let t = 1e-3;
        let reports = vec![report("a", 1e-5, 5.0, t), report("b", 0.5, 1.0, t), report("c", 1e-6, 2.0, t)];
        let ranked = rank_representations(&reports, t).unwrap();
        let names: Vec<_> = ranked.iter().map(|r| r.representation_name.as_str()).collect();
        assert_eq!(names, ["c", "a", "b"]);
        assert!(ranked[2].disregarded && !ranked[0].disregarded && !ranked[1].disregarded);

        let by_tcs = vec![report("x", 0.0, 5.0, t), report("y", 0.0, 2.0, t), report("z", 0.0, 10.0, t)];
        let ranked = rank_representations(&by_tcs, t).unwrap();
        let tcs: Vec<f64> = ranked.iter().map(|r| r.tcs).collect();
        assert_eq!(tcs, vec![0.5, 0.2, 0.1]);
        assert!(rank_representations(&[], t).is_err());
    }

    #[test]
    fn ranking_paper_pattern() {
        // linear-probe losses shaped like a real grid: DCT far above the rest
        let t = 1e-3;
        let cells = [
            ("blockdct", 1.9e-10, -16.07f64),
            ("prec", 1.9e-9, -16.01),
            ("dct", 9.9e-2, -15.39),
            ("rgb", 1.8e-8, -15.95),
            ("ycbcr", 1.4e-7, -15.91),
        ];
        let reports: Vec<_> = cells.iter().map(|(n, l, lt)| report(n, *l, (-lt).exp(), t)).collect();
        let ranked = rank_representations(&reports, t).unwrap();
        assert_eq!(ranked.last().unwrap().representation_name, "dct");
        assert!(ranked.last().unwrap().disregarded);
        assert_eq!(ranked.iter().filter(|r| r.disregarded).count(), 1);
    }

    #[test]
    fn mixed_modes_are_rejected() {
        let mut b = report("b", 0.0, 1.0, 1.0);
        b.mode = FeatureMode::ConvTile;
        assert!(rank_representations(&[report("a", 0.0, 1.0, 1.0), b], 1.0).is_err());
    }

    proptest! {
        #[test]
        fn info_strictly_decreasing(vars in proptest::collection::vec(1e-6f64..1.7, 1..20), k in 0usize..20, bump in 1e-4f64..0.01) {
            let k = k % vars.len();
            let mut more = vars.clone();
            more[k] += bump;
            let a = info_from_variances(&vars, DEFAULT_VARIANCE_FLOOR).nats;
            let b = info_from_variances(&more, DEFAULT_VARIANCE_FLOOR).nats;
            prop_assert!(b < a);
        }

        #[test]
        fn gate_is_exact(info in -10.0f64..1e6, loss in 0.0f64..2.0, t in 0.0f64..2.0) {
            let s = tcs(info, loss, t);
            prop_assert_eq!(s.tcs > 0.0, loss < t && info > 0.0);
            if s.tcs > 0.0 {
                prop_assert!((s.tcs * info - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn ranking_is_a_permutation(losses in proptest::collection::vec(0.0f64..1.0, 1..8), t in 0.0f64..1.0) {
            let reports: Vec<_> = losses.iter().enumerate().map(|(i, &l)| report(&format!("r{i}"), l, 1.0 + i as f64, t)).collect();
            let ranked = rank_representations(&reports, t).unwrap();
            let mut names: Vec<_> = ranked.iter().map(|r| r.representation_name.clone()).collect();
            names.sort();
            let mut expect: Vec<_> = reports.iter().map(|r| r.representation_name.clone()).collect();
            expect.sort();
            prop_assert_eq!(names, expect);
            for r in &ranked {
                prop_assert_eq!(r.disregarded, r.train_loss >= t);
            }
        }
    }
}
