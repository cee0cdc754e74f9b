//! Self-checks over every module at desk-scale sizes.
//!
//! Each check reports the measured quantity next to the limit it was held to,
//! so a failure says by how much. The suite never panics: errors raised while
//! building a check's inputs become failed entries.

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::colorspace::{
    apply_prec, channel_second_moment, fit_prec, invert_prec, rgb_to_ycbcr, ycbcr_to_rgb,
};
use crate::complexity::{
    self, gaussian_entropy_of, info_from_variances, rank_representations, tcs, ComplexityReport,
    EntropyEstimate, Lemma2Cell, DEFAULT_ENTROPY_FLOOR,
};
use crate::dataset::{
    load_image_dir, make_quadratic_task, make_synthetic_regression, make_texture_classification,
    split_dataset, write_image_dataset, ImageTensor, LabeledDataset, SyntheticSpec, TaskKind,
    TextureSpec,
};
use crate::error::Result;
use crate::features::{placements, tile_features, vectorize, FeatureMode};
use crate::pipeline::{run_grid, GridSpec, ThresholdRule};
use crate::regression::{
    batched_ridge_runs, gather_design, mean_squared_error, noise_weight_variance, ridge_fit,
    RidgeConfig,
};
use crate::representation::{FittedRepresentation, RepresentationKind};
use crate::rng;
use crate::spectral::{block_dct, block_idct, dct2, dct2_direct, idct2, pad_edge, BlockDct};
use crate::stats;

/// Forward full-frame DCT used by the spectral checks.
pub type DctFn = fn(&ImageTensor) -> ImageTensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub threshold: f64,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            out.push_str(&format!(
                "{} {:<28} measured={:<12.6e} limit={:<12.6e} {}\n",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.measured,
                c.threshold,
                c.detail
            ));
        }
        let failed = self.failures().count();
        out.push_str(&format!("{} checks, {} failed (seed {})\n", self.checks.len(), failed, self.seed));
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// The suite. `dct` can be swapped to confirm that a broken transform is caught.
#[derive(Clone, Debug)]
pub struct VerifySuite {
    pub seed: u64,
    pub dct: DctFn,
}

impl VerifySuite {
    pub fn new(seed: u64) -> Self {
        VerifySuite { seed, dct: dct2 }
    }

    pub fn with_dct(mut self, dct: DctFn) -> Self {
        self.dct = dct;
        self
    }

    pub fn run(&self) -> VerifyReport {
        type Check = fn(&VerifySuite) -> Result<CheckResult>;
        let checks: &[(&str, Check)] = &[
            ("dataset_intensity_range", Self::intensity_range),
            ("dataset_noiseless_synthetic", Self::noiseless_synthetic),
            ("dataset_split_partition", Self::split_partition),
            ("ycbcr_round_trip", Self::ycbcr_round_trip),
            ("ycbcr_linearity", Self::ycbcr_linearity),
            ("prec_round_trip", Self::prec_round_trip),
            ("prec_linearity", Self::prec_linearity),
            ("prec_whitening", Self::prec_whitening),
            ("dct_direct_agreement", Self::dct_direct_agreement),
            ("dct_parseval", Self::dct_parseval),
            ("dct_round_trip", Self::dct_round_trip),
            ("dct_linearity", Self::dct_linearity),
            ("block_dct_composition", Self::block_composition),
            ("representation_round_trip", Self::representation_round_trip),
            ("tile_count", Self::tile_count),
            ("tile_contents", Self::tile_contents),
            ("ridge_oracle", Self::ridge_oracle),
            ("ridge_shrinkage", Self::ridge_shrinkage),
            ("weight_variance_oracle", Self::weight_variance_oracle),
            ("entropy_accuracy", Self::entropy_accuracy),
            ("entropy_scaling", Self::entropy_scaling),
            ("entropy_dct_invariance", Self::entropy_dct_invariance),
            ("entropy_rank_deficient", Self::entropy_rank_deficient),
            ("info_monotone", Self::info_monotone),
            ("tcs_gate", Self::tcs_gate),
            ("ranking_permutation", Self::ranking_permutation),
            ("lemma2_monotonicity", Self::lemma2_monotonicity),
            ("quadratic_contrast", Self::quadratic_contrast),
            ("quadratic_r1_level", Self::quadratic_r1_level),
            ("quadratic_r2_level", Self::quadratic_r2_level),
            ("pipeline_grid", Self::pipeline_grid),
        ];
        let checks = checks
            .iter()
            .map(|(name, f)| {
                f(self).unwrap_or_else(|e| CheckResult {
                    name: name.to_string(),
                    passed: false,
                    measured: f64::NAN,
                    threshold: f64::NAN,
                    detail: format!("error: {e}"),
                })
            })
            .collect();
        VerifyReport { seed: self.seed, checks }
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        rng::stream(self.seed, 1000 + stream)
    }
}

pub fn verify_suite(seed: u64) -> VerifyReport {
    VerifySuite::new(seed).run()
}

fn below(name: &str, measured: f64, limit: f64, detail: impl Into<String>) -> CheckResult {
    CheckResult {
        name: name.into(),
        passed: measured < limit,
        measured,
        threshold: limit,
        detail: detail.into(),
    }
}

fn above(name: &str, measured: f64, limit: f64, detail: impl Into<String>) -> CheckResult {
    CheckResult {
        name: name.into(),
        passed: measured > limit,
        measured,
        threshold: limit,
        detail: detail.into(),
    }
}

fn random_image(r: &mut impl Rng, h: usize, w: usize, c: usize) -> ImageTensor {
    ImageTensor::from_fn(h, w, c, |_, _, _| r.random::<f64>())
}

fn regression_set(samples: Vec<ImageTensor>) -> Result<LabeledDataset> {
    let n = samples.len();
    LabeledDataset::new("verify", samples, DMatrix::zeros(n, 1), TaskKind::Regression, vec![])
}

/// Correlated colour images with a channel second moment far from singular.
fn mixed_color(r: &mut impl Rng, count: usize, h: usize, w: usize) -> Vec<ImageTensor> {
    (0..count)
        .map(|_| {
            random_image(r, h, w, 3).map_pixels(|p, out| {
                out[0] = p[0];
                out[1] = 0.6 * p[0] + 0.4 * p[1];
                out[2] = 0.3 * p[0] + 0.2 * p[1] + 0.5 * p[2];
            })
        })
        .collect()
}

fn rel_energy_gap(a: &ImageTensor, b: &ImageTensor) -> f64 {
    (0..a.channels())
        .map(|c| {
            let ea = a.channel_energy(c);
            (ea - b.channel_energy(c)).abs() / ea.max(f64::MIN_POSITIVE)
        })
        .fold(0.0, f64::max)
}

fn entropy_of_images(samples: &[ImageTensor], floor: f64) -> Result<EntropyEstimate> {
    let f = vectorize(&regression_set(samples.to_vec())?)?;
    gaussian_entropy_of(f.data(), floor)
}

// Scratch directories are unique per process and call so concurrent suites
// never share one.
static SCRATCH: AtomicUsize = AtomicUsize::new(0);

struct Scratch(PathBuf);

impl Scratch {
    fn new(seed: u64) -> Self {
        let n = SCRATCH.fetch_add(1, Ordering::Relaxed);
        Scratch(std::env::temp_dir().join(format!("repscore-verify-{}-{seed}-{n}", std::process::id())))
    }
}

impl Drop for Scratch {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.0);
    }
}

impl VerifySuite {
    fn intensity_range(&self) -> Result<CheckResult> {
        let spec = TextureSpec { sample_count: 12, size: 8, seed: self.seed, ..TextureSpec::default() };
        let ds = make_texture_classification(&spec)?;
        let dir = Scratch::new(self.seed);
        write_image_dataset(&ds, &dir.0)?;
        let loaded = load_image_dir(&dir.0, &dir.0.join("manifest.csv"), TaskKind::Classification)?;
        let (lo, hi) = loaded
            .samples()
            .iter()
            .map(ImageTensor::min_max)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (c, d)| (a.min(c), b.max(d)));
        let outside = (-lo).max(hi - 1.0).max(0.0);
        let gap = ds
            .samples()
            .iter()
            .zip(loaded.samples())
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f64::max);
        let mut c = below("dataset_intensity_range", outside, 1e-15, format!("loaded range [{lo}, {hi}], disk round trip {gap:e}"));
        c.passed &= gap < 1e-12;
        Ok(c)
    }

    fn noiseless_synthetic(&self) -> Result<CheckResult> {
        let spec = SyntheticSpec::linear_family(10, 2, 500, 0.0, 3.0, self.seed);
        let ds = make_synthetic_regression(&spec)?;
        let x = vectorize(&ds)?.data().clone();
        let want = &x * spec.true_weights.transpose();
        let rel = (ds.targets() - &want).amax() / want.amax();
        Ok(below("dataset_noiseless_synthetic", rel, 1e-12, "max relative deviation of y from x·w*ᵀ"))
    }

    fn split_partition(&self) -> Result<CheckResult> {
        let mut r = self.rng(1);
        let mut bad = 0usize;
        for trial in 0..50 {
            let n = r.random_range(3..200);
            let a = r.random::<f64>();
            let b = r.random::<f64>() * (1.0 - a);
            let ds = regression_set(vec![ImageTensor::zeros(1, 1, 1); n])?;
            let split = split_dataset(ds, (a, b, 1.0 - a - b), self.seed + trial)?;
            let s = split.split();
            let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
            all.sort_unstable();
            if all != (0..n).collect::<Vec<_>>() {
                bad += 1;
            }
        }
        Ok(below("dataset_split_partition", bad as f64, 0.5, "random N and fractions that failed to partition, of 50"))
    }

    fn ycbcr_round_trip(&self) -> Result<CheckResult> {
        let mut r = self.rng(2);
        let mut worst = 0.0f64;
        for _ in 0..20 {
            let (h, w) = (r.random_range(1..20), r.random_range(1..20));
            let img = random_image(&mut r, h, w, 3);
            worst = worst.max(ycbcr_to_rgb(&rgb_to_ycbcr(&img)?)?.max_abs_diff(&img));
        }
        Ok(below("ycbcr_round_trip", worst, 1e-9, "max-abs reconstruction error"))
    }

    fn ycbcr_linearity(&self) -> Result<CheckResult> {
        let mut r = self.rng(3);
        let origin = rgb_to_ycbcr(&ImageTensor::zeros(4, 5, 3))?;
        let lin = |img: &ImageTensor| -> Result<ImageTensor> { Ok(rgb_to_ycbcr(img)?.axpby(1.0, &origin, -1.0)) };
        let mut worst = 0.0f64;
        for _ in 0..20 {
            let (x, y) = (random_image(&mut r, 4, 5, 3), random_image(&mut r, 4, 5, 3));
            let (a, b) = (r.random_range(-3.0..3.0), r.random_range(-3.0..3.0));
            let lhs = lin(&x.axpby(a, &y, b))?;
            let rhs = lin(&x)?.axpby(a, &lin(&y)?, b);
            worst = worst.max(lhs.max_abs_diff(&rhs));
        }
        Ok(below("ycbcr_linearity", worst, 1e-12, "max-abs deviation of T(ax+by) from aT(x)+bT(y), offset removed"))
    }

    fn prec_round_trip(&self) -> Result<CheckResult> {
        let mut r = self.rng(4);
        let ds = regression_set(mixed_color(&mut r, 20, 9, 7))?;
        let t = fit_prec(&ds, 1e-8)?;
        let mut worst = 0.0f64;
        for img in ds.samples() {
            worst = worst.max(invert_prec(&t, &apply_prec(&t, img)?)?.max_abs_diff(img));
        }
        Ok(below("prec_round_trip", worst, 1e-9, "max-abs reconstruction error"))
    }

    fn prec_linearity(&self) -> Result<CheckResult> {
        let mut r = self.rng(5);
        let ds = regression_set(mixed_color(&mut r, 10, 5, 5))?;
        let t = fit_prec(&ds, 1e-6)?;
        let mut worst = 0.0f64;
        for _ in 0..20 {
            let (x, y) = (random_image(&mut r, 5, 5, 3), random_image(&mut r, 5, 5, 3));
            let (a, b) = (r.random_range(-3.0..3.0), r.random_range(-3.0..3.0));
            let lhs = apply_prec(&t, &x.axpby(a, &y, b))?;
            let rhs = apply_prec(&t, &x)?.axpby(a, &apply_prec(&t, &y)?, b);
            worst = worst.max(lhs.max_abs_diff(&rhs) / lhs.min_max().1.abs().max(1.0));
        }
        Ok(below("prec_linearity", worst, 1e-12, "relative deviation of U(ax+by) from aUx+bUy"))
    }

    fn prec_whitening(&self) -> Result<CheckResult> {
        let mut r = self.rng(6);
        let ds = regression_set(mixed_color(&mut r, 30, 8, 8))?;
        let sigma = channel_second_moment(ds.samples())?;
        let eig = sigma.clone().symmetric_eigenvalues();
        let cond = eig.max() / eig.min();
        let t = fit_prec(&ds, 1e-6)?;
        let out: Vec<_> = ds.samples().iter().map(|s| apply_prec(&t, s)).collect::<Result<_>>()?;
        let post = channel_second_moment(&out)?;
        let off = (0..3)
            .flat_map(|i| (0..3).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| post[(i, j)].abs())
            .fold(0.0, f64::max);
        let ratio = off / post.trace();
        let mut c = below("prec_whitening", ratio, 1e-6, format!("max off-diagonal / trace; input condition number {cond:.1}"));
        c.passed &= cond < 1e3;
        Ok(c)
    }

    fn dct_direct_agreement(&self) -> Result<CheckResult> {
        let mut r = self.rng(7);
        let mut worst = 0.0f64;
        for _ in 0..25 {
            let (h, w, c) = (r.random_range(1..=16), r.random_range(1..=16), r.random_range(1..=3));
            let img = random_image(&mut r, h, w, c);
            worst = worst.max((self.dct)(&img).max_abs_diff(&dct2_direct(&img)));
        }
        Ok(below("dct_direct_agreement", worst, 1e-9, "max-abs gap to the definitional sum"))
    }

    fn dct_parseval(&self) -> Result<CheckResult> {
        let mut r = self.rng(8);
        let mut worst = 0.0f64;
        for _ in 0..25 {
            let (h, w, c) = (r.random_range(1..40), r.random_range(1..40), r.random_range(1..=3));
            let img = random_image(&mut r, h, w, c);
            worst = worst.max(rel_energy_gap(&img, &(self.dct)(&img)));
            let b = r.random_range(1..10);
            let blocks = block_dct(&img, b)?;
            let padded = pad_edge(&img, blocks.coefficients.height(), blocks.coefficients.width());
            worst = worst.max(rel_energy_gap(&padded, &blocks.coefficients));
        }
        Ok(below("dct_parseval", worst, 1e-9, "relative per-channel energy change (full frame and block)"))
    }

    fn dct_round_trip(&self) -> Result<CheckResult> {
        let mut r = self.rng(9);
        let mut worst = 0.0f64;
        for _ in 0..25 {
            let (h, w, c) = (r.random_range(1..40), r.random_range(1..40), r.random_range(1..=3));
            let img = random_image(&mut r, h, w, c);
            worst = worst.max(idct2(&(self.dct)(&img)).max_abs_diff(&img));
            let b = r.random_range(1..10);
            worst = worst.max(block_idct(&block_dct(&img, b)?, b)?.max_abs_diff(&img));
        }
        Ok(below("dct_round_trip", worst, 1e-9, "max-abs reconstruction error (full frame and block)"))
    }

    fn dct_linearity(&self) -> Result<CheckResult> {
        let mut r = self.rng(10);
        let mut worst = 0.0f64;
        for _ in 0..20 {
            // multiples of the block so block coefficients need no padding
            let (h, w) = (4 * r.random_range(1..5), 4 * r.random_range(1..5));
            let (x, y) = (random_image(&mut r, h, w, 2), random_image(&mut r, h, w, 2));
            let (a, b) = (r.random_range(-3.0..3.0), r.random_range(-3.0..3.0));
            let mix = x.axpby(a, &y, b);
            let ops: [&dyn Fn(&ImageTensor) -> Result<ImageTensor>; 4] = [
                &|i| Ok((self.dct)(i)),
                &|i| Ok(idct2(i)),
                &|i| Ok(block_dct(i, 4)?.coefficients),
                &|i| {
                    let coefficients = i.clone();
                    block_idct(&BlockDct { coefficients, original_height: h, original_width: w, block: 4 }, 4)
                },
            ];
            for op in ops {
                let lhs = op(&mix)?;
                let rhs = op(&x)?.axpby(a, &op(&y)?, b);
                worst = worst.max(lhs.max_abs_diff(&rhs));
            }
        }
        Ok(below("dct_linearity", worst, 1e-9, "max-abs deviation of T(ax+by) from aT(x)+bT(y) over four operations"))
    }

    fn block_composition(&self) -> Result<CheckResult> {
        let mut r = self.rng(11);
        let mut worst = 0.0f64;
        for _ in 0..10 {
            let (h, w) = (r.random_range(1..24), r.random_range(1..24));
            let img = random_image(&mut r, h, w, 2);
            let b = h.max(w);
            let blocks = block_dct(&img, b)?;
            worst = worst.max(blocks.coefficients.max_abs_diff(&(self.dct)(&pad_edge(&img, b, b))));
        }
        Ok(below("block_dct_composition", worst, 1e-9, "block_dct with block = max(H, W) against dct2 of the padded image"))
    }

    fn representation_round_trip(&self) -> Result<CheckResult> {
        let mut r = self.rng(12);
        let mut worst = 0.0f64;
        for channels in [1, 3] {
            let (h, w) = (r.random_range(5..30), r.random_range(5..30));
            let train = regression_set((0..6).map(|_| random_image(&mut r, h, w, channels)).collect())?;
            for kind in RepresentationKind::ALL {
                if kind.check_channels(channels).is_err() {
                    continue;
                }
                let fitted = FittedRepresentation::fit(kind, &train, 1e-8, 8)?;
                for img in train.samples() {
                    let back = fitted.inverse(&fitted.forward(img)?, (h, w))?;
                    worst = worst.max(back.max_abs_diff(img));
                }
            }
        }
        Ok(below("representation_round_trip", worst, 1e-9, "max-abs error of every representation's inverse, 1 and 3 channels"))
    }

    fn tile_count(&self) -> Result<CheckResult> {
        let mut r = self.rng(13);
        let mut bad = 0usize;
        for _ in 0..20 {
            let (t, s) = (r.random_range(1..5), r.random_range(1..4));
            let (h, w) = (r.random_range(t..t + 9), r.random_range(t..t + 9));
            let samples = vec![ImageTensor::zeros(h, w, 1); r.random_range(1..4)];
            // enumerate every top-left corner whose tile fits
            let want: usize = samples
                .iter()
                .map(|img| {
                    let rows = (0..img.height()).step_by(s).filter(|&i| i + t <= img.height()).count();
                    let cols = (0..img.width()).step_by(s).filter(|&j| j + t <= img.width()).count();
                    rows * cols
                })
                .sum();
            let formula: usize = samples.iter().map(|i| placements(i.height(), t, s) * placements(i.width(), t, s)).sum();
            let got = tile_features(&regression_set(samples)?, t, s)?.rows();
            if got != want || formula != want {
                bad += 1;
            }
        }
        Ok(below("tile_count", bad as f64, 0.5, "random shapes whose tile rows differ from exhaustive enumeration, of 20"))
    }

    fn tile_contents(&self) -> Result<CheckResult> {
        let mut r = self.rng(14);
        let (h, w, c, t, s) = (13, 11, 2, 4, 3);
        let samples: Vec<_> = (0..3).map(|_| random_image(&mut r, h, w, c)).collect();
        let f = tile_features(&regression_set(samples.clone())?, t, s)?;
        let (pr, pc) = (placements(h, t, s), placements(w, t, s));
        let mut worst = 0.0f64;
        for _ in 0..30 {
            let (k, i, j) = (r.random_range(0..3), r.random_range(0..pr), r.random_range(0..pc));
            let row = f.rows_of_sample(k).start + i * pc + j;
            let mut patch = Vec::with_capacity(t * t * c);
            for y in 0..t {
                for x in 0..t {
                    for ch in 0..c {
                        patch.push(samples[k].get(i * s + y, j * s + x, ch));
                    }
                }
            }
            let got: Vec<f64> = f.data().row(row).iter().copied().collect();
            worst = worst.max(got.iter().zip(&patch).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
            if f.source_sample_index()[row] != k {
                worst = f64::INFINITY;
            }
        }
        Ok(below("tile_contents", worst, f64::MIN_POSITIVE, "max-abs gap between sampled tile rows and image patches"))
    }

    fn ridge_oracle(&self) -> Result<CheckResult> {
        let mut r = self.rng(15);
        let mut worst = 0.0f64;
        for k in 0..50 {
            let (rows, cols, m) = (r.random_range(5..60), r.random_range(2..25), r.random_range(1..4));
            let x = DMatrix::from_fn(rows, cols, |_, _| r.sample::<f64, _>(StandardNormal));
            let y = DMatrix::from_fn(rows, m, |_, _| r.sample::<f64, _>(StandardNormal));
            let lambda = if rows > cols + 3 && k % 3 == 0 { 0.0 } else { 10f64.powf(r.random_range(-2.0..1.0)) };
            // Wᵀ = V diag(s / (s² + λ)) Uᵀ Y, which is the pseudo-inverse at λ = 0
            let svd = x.clone().svd(true, true);
            let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
            let gain = DMatrix::from_diagonal(&svd.singular_values.map(|s| s / (s * s + lambda)));
            let oracle = (vt.transpose() * gain * u.transpose() * &y).transpose();
            let w = ridge_fit(&x, &y, lambda)?;
            worst = worst.max((w - &oracle).amax() / oracle.amax());
        }
        Ok(below("ridge_oracle", worst, 1e-8, "max relative gap to the SVD closed form over 50 systems"))
    }

    fn ridge_shrinkage(&self) -> Result<CheckResult> {
        // zero true weights: every run's weights are pure fitted noise, whose
        // spread shrinks with λ for any fixed batch
        let mut spec = SyntheticSpec::linear_family(8, 2, 2000, 0.5, 1.0, self.seed);
        spec.true_weights.fill(0.0);
        let ds = make_synthetic_regression(&spec)?;
        let f = vectorize(&ds)?;
        let mut totals = Vec::new();
        for lambda in [0.0, 1.0, 10.0, 100.0, 1000.0] {
            let cfg = RidgeConfig { lambda, batch_size: 64, seed: self.seed, ..RidgeConfig::default() };
            totals.push(batched_ridge_runs(&f, &cfg)?.weight_variance.sum());
        }
        let worst = totals.windows(2).map(|p| p[1] / p[0]).fold(0.0, f64::max);
        Ok(below("ridge_shrinkage", worst, 1.0, format!("largest ratio of total weight variance between consecutive λ: {totals:?}")))
    }

    fn weight_variance_oracle(&self) -> Result<CheckResult> {
        let (n, m, sigma) = (10, 2, 0.5);
        let mut r = self.rng(16);
        // feature scales spread over two decades so the oracle diagonal is not flat
        let covariance = DMatrix::from_fn(n, n, |i, j| if i == j { 10f64.powf(2.0 * i as f64 / (n - 1) as f64) } else { 0.0 });
        let spec = SyntheticSpec {
            n_features: n,
            m_outputs: m,
            covariance,
            noise_sigma: sigma,
            true_weights: DMatrix::from_fn(m, n, |_, _| r.sample::<f64, _>(StandardNormal)),
            sample_count: 4096,
            seed: self.seed,
        };
        let f = vectorize(&make_synthetic_regression(&spec)?)?;
        let cfg = RidgeConfig { seed: self.seed, runs: 20, lambda: 0.0, ..RidgeConfig::default() };
        let stats = batched_ridge_runs(&f, &cfg)?;
        let oracle = noise_weight_variance(&f, &cfg, sigma)?;
        let rho = stats::spearman(stats.weight_variance.as_slice(), oracle.as_slice()).unwrap_or(f64::NAN);
        Ok(above("weight_variance_oracle", rho, 0.7, "Spearman of var(w) across runs against σ²(XᵀX)⁻¹_ii"))
    }

    fn entropy_accuracy(&self) -> Result<CheckResult> {
        let (n, d) = (10_000, 50);
        let mut r = self.rng(17);
        let x = DMatrix::from_fn(n, d, |_, _| r.sample::<f64, _>(StandardNormal));
        let h = gaussian_entropy_of(&x, DEFAULT_ENTROPY_FLOOR)?.value_nats;
        let want = 0.5 * d as f64 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
        Ok(below("entropy_accuracy", (h - want).abs() / want, 0.02, format!("relative error of {h:.4} against {want:.4} for N(0, I_50)")))
    }

    fn entropy_scaling(&self) -> Result<CheckResult> {
        let mut r = self.rng(18);
        let (n, d) = (400, 12);
        let x = DMatrix::from_fn(n, d, |_, _| r.sample::<f64, _>(StandardNormal));
        let base = gaussian_entropy_of(&x, DEFAULT_ENTROPY_FLOOR)?;
        let mut worst = 0.0f64;
        for a in [2.0, 4.0, r.random_range(0.5..4.0), r.random_range(0.5..4.0)] {
            let scaled = gaussian_entropy_of(&(&x * a), DEFAULT_ENTROPY_FLOOR)?;
            if scaled.floored_dims > 0 || base.floored_dims > 0 {
                worst = f64::INFINITY;
            }
            worst = worst.max((scaled.value_nats - base.value_nats - d as f64 * a.ln()).abs());
        }
        Ok(below("entropy_scaling", worst, 1e-9, "max |Ĥ(aX) − Ĥ(X) − D log a|"))
    }

    /// 8×8 single-channel images with neighbouring pixels correlated.
    fn smooth_images(&self, r: &mut impl Rng, count: usize) -> Vec<ImageTensor> {
        (0..count)
            .map(|_| {
                let z = ImageTensor::from_fn(9, 9, 1, |_, _, _| r.sample::<f64, _>(StandardNormal));
                ImageTensor::from_fn(8, 8, 1, |i, j, _| z.get(i, j, 0) + 0.5 * z.get(i + 1, j, 0) + 0.25 * z.get(i, j + 1, 0))
            })
            .collect()
    }

    fn entropy_dct_invariance(&self) -> Result<CheckResult> {
        let mut r = self.rng(19);
        let raw = self.smooth_images(&mut r, 3000);
        let spectrum = complexity::covariance_spectrum(vectorize(&regression_set(raw.clone())?)?.data())?;
        let cond = spectrum[0] / spectrum[spectrum.len() - 1];
        let transformed: Vec<_> = raw.iter().map(|i| (self.dct)(i)).collect();
        let a = entropy_of_images(&raw, DEFAULT_ENTROPY_FLOOR)?;
        let b = entropy_of_images(&transformed, DEFAULT_ENTROPY_FLOOR)?;
        let mut c = below("entropy_dct_invariance", (a.value_nats - b.value_nats).abs(), 0.1, format!("|ΔĤ| under the full-frame DCT, condition number {cond:.1}"));
        c.passed &= cond < 1e6;
        Ok(c)
    }

    fn entropy_rank_deficient(&self) -> Result<CheckResult> {
        let mut r = self.rng(20);
        // 30 samples of 64 pixels: the covariance has rank at most 29
        let raw = self.smooth_images(&mut r, 30);
        let transformed: Vec<_> = raw.iter().map(|i| (self.dct)(i)).collect();
        let b = entropy_of_images(&transformed, DEFAULT_ENTROPY_FLOOR)?;
        Ok(above("entropy_rank_deficient", b.floored_dims as f64, 0.0, "floored dimensions reported for DCT features of 30 samples in 64 dimensions"))
    }

    fn info_monotone(&self) -> Result<CheckResult> {
        let mut r = self.rng(21);
        let cap = std::f64::consts::E - 1.0;
        let mut bad = 0usize;
        for _ in 0..500 {
            let mut v: Vec<f64> = (0..r.random_range(1..20)).map(|_| r.random_range(1e-6..cap * 0.9)).collect();
            let before = info_from_variances(&v, 1e-300).nats;
            let k = r.random_range(0..v.len());
            v[k] = r.random_range(v[k]..cap).max(v[k] * (1.0 + 1e-6));
            let after = info_from_variances(&v, 1e-300).nats;
            if !(after < before) {
                bad += 1;
            }
        }
        Ok(below("info_monotone", bad as f64, 0.5, "perturbations (of 500) that increased a variance without lowering I(w;D)"))
    }

    fn tcs_gate(&self) -> Result<CheckResult> {
        let mut r = self.rng(22);
        let mut bad = 0usize;
        for _ in 0..1000 {
            let info = r.random_range(-2.0..5.0);
            let loss = r.random_range(0.0..2.0);
            let t = r.random_range(0.0..2.0);
            let s = tcs(info, loss, t);
            let should = loss < t && info > 0.0;
            if (s.tcs > 0.0) != should || (s.tcs > 0.0 && (s.tcs * info - 1.0).abs() > 1e-12) {
                bad += 1;
            }
        }
        Ok(below("tcs_gate", bad as f64, 0.5, "fuzzed (info, loss, t) triples violating the gate, of 1000"))
    }

    fn ranking_permutation(&self) -> Result<CheckResult> {
        let mut r = self.rng(23);
        let mut bad = 0usize;
        for _ in 0..100 {
            let t = r.random_range(0.1..1.0);
            let reports: Vec<ComplexityReport> = (0..r.random_range(1..8))
                .map(|i| {
                    let mut rep = dummy_report(&format!("rep{i}"), r.random_range(0.0..1.5), r.random_range(0.1..5.0));
                    rep.apply_threshold(t);
                    rep
                })
                .collect();
            let ranked = rank_representations(&reports, t)?;
            let mut names: Vec<_> = ranked.iter().map(|x| x.representation_name.clone()).collect();
            names.sort();
            let mut want: Vec<_> = reports.iter().map(|x| x.representation_name.clone()).collect();
            want.sort();
            let gated_ok = ranked.iter().all(|x| x.disregarded == (x.train_loss >= t));
            let ranks_ok = ranked.iter().enumerate().all(|(i, x)| x.rank == i + 1);
            if names != want || !gated_ok || !ranks_ok {
                bad += 1;
            }
        }
        Ok(below("ranking_permutation", bad as f64, 0.5, "random report sets (of 100) not ranked as a permutation with the exact gated set"))
    }

    fn lemma2_monotonicity(&self) -> Result<CheckResult> {
        let spec = GridSpec {
            representations: vec![RepresentationKind::Rgb],
            modes: vec![FeatureMode::Dense],
            ridge: RidgeConfig { seed: self.seed, ..RidgeConfig::default() },
            ..GridSpec::default()
        };
        let mut cells = Vec::new();
        for scale in [1.0, 2.0, 4.0, 8.0, 16.0] {
            let ds = make_synthetic_regression(&SyntheticSpec::linear_family(10, 2, 4096, 0.1, scale, self.seed))?;
            let grid = run_grid(&ds, &spec)?;
            let report = grid
                .report(RepresentationKind::Rgb, FeatureMode::Dense)
                .cloned()
                .ok_or_else(|| crate::Error::InvalidConfig(format!("scale {scale}: cell failed")))?;
            cells.push(Lemma2Cell { report, n_features: 10, m_outputs: 2 });
        }
        let check = complexity::lemma2_check(&cells)?;
        let same_ranks = stats::average_ranks(&check.bound_values) == stats::average_ranks(&check.info_values);
        let rho = check.spearman.unwrap_or(f64::NAN);
        let mut c = above("lemma2_monotonicity", rho, 1.0 - 1e-12, format!("Spearman of (m/n)Ĥ against I(w;D) over covariance scales 1..16, status {:?}", check.status));
        c.passed &= same_ranks;
        Ok(c)
    }

    fn quadratic_losses(&self) -> Result<(f64, f64)> {
        let (r1, r2) = make_quadratic_task(5000, 0.05, self.seed)?;
        let fit = |ds: &LabeledDataset| -> Result<f64> {
            let f = vectorize(ds)?;
            let rows: Vec<usize> = (0..f.rows()).collect();
            let (x, y) = gather_design(&f, &rows, true);
            let w = ridge_fit(&x, &y, 0.1)?;
            Ok(mean_squared_error(&x, &y, &w))
        };
        Ok((fit(&r1)?, fit(&r2)?))
    }

    fn quadratic_contrast(&self) -> Result<CheckResult> {
        let (l1, l2) = self.quadratic_losses()?;
        Ok(below("quadratic_contrast", l2 / l1, 0.2, format!("linear-probe MSE ratio r2/r1 ({l2:.5} / {l1:.5})")))
    }

    fn quadratic_r1_level(&self) -> Result<CheckResult> {
        let (l1, _) = self.quadratic_losses()?;
        let want = 1.0 / 180.0 + 0.05 * 0.05;
        Ok(below("quadratic_r1_level", (l1 - want).abs() / want, 0.25, format!("relative gap of r1 MSE {l1:.5} to 1/180 + σ² = {want:.5}")))
    }

    fn quadratic_r2_level(&self) -> Result<CheckResult> {
        let (_, l2) = self.quadratic_losses()?;
        let want = 0.05 * 0.05;
        Ok(below("quadratic_r2_level", (l2 - want).abs() / want, 0.25, format!("relative gap of r2 MSE {l2:.5} to σ² = {want:.5}")))
    }

    fn pipeline_grid(&self) -> Result<CheckResult> {
        let tex = TextureSpec { sample_count: 36, size: 12, seed: self.seed, ..TextureSpec::default() };
        let ds = split_dataset(make_texture_classification(&tex)?, (0.75, 0.25, 0.0), self.seed)?;
        let spec = GridSpec {
            representations: vec![RepresentationKind::Rgb, RepresentationKind::Prec, RepresentationKind::Dct],
            ridge: RidgeConfig { batch_size: 16, runs: 4, seed: self.seed, ..RidgeConfig::default() },
            threshold: ThresholdRule::Absolute(1.0),
            jobs: Some(1),
            ..GridSpec::default()
        };
        let full = run_grid(&ds, &spec)?;
        let mut problems = Vec::new();
        if full.cells.len() != 6 || full.failed_cells() != 0 {
            problems.push(format!("{} cells, {} failed", full.cells.len(), full.failed_cells()));
        }
        let train = ds.split().train.len();
        if full.reports().filter(|r| r.representation_name == "prec").any(|r| r.prec_fit_samples != Some(train)) {
            problems.push("PREC fitted on more than the training split".into());
        }
        let parallel = run_grid(&ds, &GridSpec { jobs: Some(3), ..spec.clone() })?;
        if parallel.to_json()? != full.to_json()? {
            problems.push("thread count changed the report".into());
        }
        let fewer = run_grid(&ds, &GridSpec { representations: vec![RepresentationKind::Dct], ..spec.clone() })?;
        for c in &fewer.cells {
            let same = full.cell(c.representation, c.mode).map(|o| o.result == c.result).unwrap_or(false);
            if !same {
                problems.push(format!("{}/{} changed when other cells were removed", c.representation, c.mode));
            }
        }
        let gray = TextureSpec { channels: 1, ..tex };
        let gray_grid = run_grid(&make_texture_classification(&gray)?, &GridSpec { representations: RepresentationKind::ALL.to_vec(), ..spec })?;
        if gray_grid.cells.len() != 6 || gray_grid.rejected.len() != 2 {
            problems.push(format!("grayscale grid has {} cells and {} rejected pairings", gray_grid.cells.len(), gray_grid.rejected.len()));
        }
        let detail = if problems.is_empty() {
            "cardinality, train-only PREC fit, thread independence, cell isolation, grayscale pairings".to_string()
        } else {
            problems.join("; ")
        };
        Ok(below("pipeline_grid", problems.len() as f64, 0.5, detail))
    }
}

fn dummy_report(name: &str, loss: f64, info: f64) -> ComplexityReport {
    ComplexityReport {
        dataset_name: "verify".into(),
        representation_name: name.into(),
        mode: FeatureMode::Dense,
        train_loss: loss,
        info_in_weights_nats: info,
        tcs: 0.0,
        log_tcs: None,
        entropy: complexity::entropy_from_spectrum(&[1.0], DEFAULT_ENTROPY_FLOOR),
        threshold_t: f64::NAN,
        clamped_variances: 0,
        feature_dim: 1,
        feature_rows: 1,
        batch_size_used: 1,
        whole_set_batch: true,
        prec_fit_samples: None,
    }
}
