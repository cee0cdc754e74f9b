//! Channel-space representations: full-range BT.601 YCbCr and PREC, a channel
//! preconditioner built from the pooled per-pixel channel second moment.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{ImageTensor, LabeledDataset};
use crate::error::{Error, Result};

pub const DEFAULT_PREC_EPSILON: f64 = 1e-8;

const KR: f64 = 0.299;
const KG: f64 = 0.587;
const KB: f64 = 0.114;
/// 2·(1 − KB)
const CB_SCALE: f64 = 1.772;
/// 2·(1 − KR)
const CR_SCALE: f64 = 1.402;

fn require_rgb(img: &ImageTensor) -> Result<()> {
    if img.channels() != 3 {
        return Err(Error::ChannelMismatch {
            expected: 3,
            found: img.channels(),
        });
    }
    Ok(())
}

/// Full-range BT.601 on `[0, 1]` inputs, chroma centered at 0.5.
pub fn rgb_to_ycbcr(img: &ImageTensor) -> Result<ImageTensor> {
    require_rgb(img)?;
    Ok(img.map_pixels(|p, out| {
        let y = KR * p[0] + KG * p[1] + KB * p[2];
        out[0] = y;
        out[1] = 0.5 + (p[2] - y) / CB_SCALE;
        out[2] = 0.5 + (p[0] - y) / CR_SCALE;
    }))
}

pub fn ycbcr_to_rgb(img: &ImageTensor) -> Result<ImageTensor> {
    require_rgb(img)?;
    Ok(img.map_pixels(|p, out| {
        let r = p[0] + CR_SCALE * (p[2] - 0.5);
        let b = p[0] + CB_SCALE * (p[1] - 0.5);
        out[0] = r;
        out[1] = (p[0] - KR * r - KB * b) / KG;
        out[2] = b;
    }))
}

/// `U = diag(λ + ε)^{-1/2} Vᵀ` together with its exact inverse `V diag(λ + ε)^{1/2}`.
///
/// Rows of `Vᵀ` are eigenvectors of the channel second moment, ordered by
/// descending eigenvalue, each with its largest-magnitude entry positive.
#[derive(Clone, Debug, PartialEq)]
pub struct PrecTransform {
    matrix_u: DMatrix<f64>,
    matrix_u_inverse: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    epsilon: f64,
    channel_count: usize,
}

#[derive(Serialize, Deserialize)]
struct PrecFile {
    channel_count: usize,
    epsilon: f64,
    eigenvalues: Vec<f64>,
    matrix_u: Vec<Vec<f64>>,
    matrix_u_inverse: Vec<Vec<f64>>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(rows: &[Vec<f64>], c: usize) -> Result<DMatrix<f64>> {
    if rows.len() != c || rows.iter().any(|r| r.len() != c) {
        return Err(Error::DimensionMismatch(format!("expected a {c}x{c} matrix")));
    }
    Ok(DMatrix::from_fn(c, c, |i, j| rows[i][j]))
}

impl PrecTransform {
    /// Builds the transform from an eigendecomposition `Σ = V Λ Vᵀ`.
    /// `eigenvectors` holds one eigenvector per column.
    fn from_eigen(eigenvalues: Vec<f64>, eigenvectors: &DMatrix<f64>, epsilon: f64) -> Self {
        let c = eigenvalues.len();
        let vt = eigenvectors.transpose();
        let shrink = DVector::from_iterator(c, eigenvalues.iter().map(|l| (l + epsilon).sqrt()));
        let matrix_u = DMatrix::from_fn(c, c, |i, j| vt[(i, j)] / shrink[i]);
        let matrix_u_inverse = DMatrix::from_fn(c, c, |i, j| eigenvectors[(i, j)] * shrink[j]);
        PrecTransform {
            matrix_u,
            matrix_u_inverse,
            eigenvalues,
            epsilon,
            channel_count: c,
        }
    }

    /// A transform with a given `U`; the inverse is computed numerically.
    pub fn from_matrix(matrix_u: DMatrix<f64>, epsilon: f64) -> Result<Self> {
        let c = matrix_u.nrows();
        if matrix_u.ncols() != c || c == 0 {
            return Err(Error::DimensionMismatch("PREC matrix must be square".into()));
        }
        if !(epsilon > 0.0) {
            return Err(Error::InvalidConfig(format!("PREC epsilon {epsilon} must be positive")));
        }
        let matrix_u_inverse = matrix_u
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::InvalidConfig("PREC matrix is singular".into()))?;
        Ok(PrecTransform {
            matrix_u,
            matrix_u_inverse,
            eigenvalues: Vec::new(),
            epsilon,
            channel_count: c,
        })
    }

    pub fn matrix_u(&self) -> &DMatrix<f64> {
        &self.matrix_u
    }

    pub fn matrix_u_inverse(&self) -> &DMatrix<f64> {
        &self.matrix_u_inverse
    }

    /// Eigenvalues of the fitted second moment, descending. Empty for
    /// transforms built with [`PrecTransform::from_matrix`].
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn channel_count(&self) -> usize {
        self.channel_count
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&PrecFile {
            channel_count: self.channel_count,
            epsilon: self.epsilon,
            eigenvalues: self.eigenvalues.clone(),
            matrix_u: rows(&self.matrix_u),
            matrix_u_inverse: rows(&self.matrix_u_inverse),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: PrecFile = serde_json::from_str(text)?;
        let t = PrecTransform {
            matrix_u: from_rows(&f.matrix_u, f.channel_count)?,
            matrix_u_inverse: from_rows(&f.matrix_u_inverse, f.channel_count)?,
            eigenvalues: f.eigenvalues,
            epsilon: f.epsilon,
            channel_count: f.channel_count,
        };
        let err = (&t.matrix_u * &t.matrix_u_inverse - DMatrix::identity(t.channel_count, t.channel_count)).amax();
        if err > 1e-9 || !(t.epsilon > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "PREC file is inconsistent (U·U⁻¹ deviates from I by {err:e})"
            )));
        }
        Ok(t)
    }
}

/// Pooled per-pixel channel second moment `E_D E_pixels[x xᵀ]` (uncentered).
pub fn channel_second_moment<'a>(
    samples: impl IntoIterator<Item = &'a ImageTensor>,
) -> Result<DMatrix<f64>> {
    let samples: Vec<&ImageTensor> = samples.into_iter().collect();
    let first = samples.first().ok_or(Error::TooFew {
        what: "samples for channel statistics",
        needed: 1,
        found: 0,
    })?;
    let c = first.channels();
    if let Some(bad) = samples.iter().find(|s| s.shape() != first.shape()) {
        return Err(Error::DimensionMismatch(format!(
            "sample shape {:?} differs from {:?}",
            bad.shape(),
            first.shape()
        )));
    }
    let per_image: Vec<DMatrix<f64>> = samples
        .par_iter()
        .map(|img| {
            let mut acc = DMatrix::zeros(c, c);
            for p in img.data().chunks_exact(c) {
                for i in 0..c {
                    for j in 0..c {
                        acc[(i, j)] += p[i] * p[j];
                    }
                }
            }
            acc / (img.height() * img.width()) as f64
        })
        .collect();
    // summed in sample order so the result does not depend on scheduling
    let mut total = DMatrix::zeros(c, c);
    for m in &per_image {
        total += m;
    }
    Ok(total / samples.len() as f64)
}

/// Fits PREC on every sample of `ds`.
pub fn fit_prec(ds: &LabeledDataset, epsilon: f64) -> Result<PrecTransform> {
    fit_prec_on(ds.samples(), epsilon)
}

pub fn fit_prec_on<'a>(
    samples: impl IntoIterator<Item = &'a ImageTensor>,
    epsilon: f64,
) -> Result<PrecTransform> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidConfig(format!("PREC epsilon {epsilon} must be positive")));
    }
    let sigma = channel_second_moment(samples)?;
    if sigma.nrows() < 2 {
        return Err(Error::UnsupportedPairing {
            representation: "prec".into(),
            channels: sigma.nrows(),
        });
    }
    prec_from_moment(&sigma, epsilon)
}

/// PREC from a given channel second-moment matrix.
pub fn prec_from_moment(sigma: &DMatrix<f64>, epsilon: f64) -> Result<PrecTransform> {
    if sigma.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigen("second moment has non-finite entries".into()));
    }
    if sigma.trace() <= 0.0 {
        return Err(Error::Eigen("second moment is zero (all-zero data)".into()));
    }
    let eig = SymmetricEigen::new(sigma.clone());
    let c = sigma.nrows();
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k].max(0.0)).collect();
    let mut vectors = DMatrix::zeros(c, c);
    for (dst, &k) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(k).clone_owned();
        let lead = v.iamax();
        if v[lead] < 0.0 {
            v.neg_mut();
        }
        vectors.set_column(dst, &v);
    }
    Ok(PrecTransform::from_eigen(eigenvalues, &vectors, epsilon))
}

fn mat_vec(m: &DMatrix<f64>, src: &[f64], dst: &mut [f64]) {
    for (i, d) in dst.iter_mut().enumerate() {
        *d = src.iter().enumerate().map(|(j, s)| m[(i, j)] * s).sum();
    }
}

fn check_channels(t: &PrecTransform, img: &ImageTensor) -> Result<()> {
    if img.channels() != t.channel_count {
        return Err(Error::ChannelMismatch {
            expected: t.channel_count,
            found: img.channels(),
        });
    }
    Ok(())
}

/// Left-multiplies every pixel's channel vector by `U`.
pub fn apply_prec(t: &PrecTransform, img: &ImageTensor) -> Result<ImageTensor> {
    check_channels(t, img)?;
    Ok(img.map_pixels(|p, out| mat_vec(&t.matrix_u, p, out)))
}

pub fn invert_prec(t: &PrecTransform, img: &ImageTensor) -> Result<ImageTensor> {
    check_channels(t, img)?;
    Ok(img.map_pixels(|p, out| mat_vec(&t.matrix_u_inverse, p, out)))
}

#[cfg(test)]
mod tests {
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::Rng;

    use super::*;
    use crate::dataset::TaskKind;
    use crate::rng;

    fn pixel(rgb: [f64; 3]) -> ImageTensor {
        ImageTensor::new(1, 1, 3, rgb.to_vec()).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn ycbcr_reference_pixels() {
        assert!(close(rgb_to_ycbcr(&pixel([0.0; 3])).unwrap().data(), &[0.0, 0.5, 0.5], 1e-15));
        for g in [0.0, 0.25, 0.7, 1.0] {
            let out = rgb_to_ycbcr(&pixel([g; 3])).unwrap();
            assert!(close(out.data(), &[g, 0.5, 0.5], 1e-12), "{g}: {:?}", out.data());
        }
        // plugging (1,0,0) into the matrix: Cb = 0.5 - 0.299/1.772, Cr = 0.5 + 0.701/1.402
        let red = rgb_to_ycbcr(&pixel([1.0, 0.0, 0.0])).unwrap();
        assert!(close(red.data(), &[0.299, 0.331_264_108_352_144_5, 1.0], 1e-12), "{:?}", red.data());
    }

    #[test]
    fn ycbcr_inverse_reference_pixels() {
        assert!(close(ycbcr_to_rgb(&pixel([0.5; 3])).unwrap().data(), &[0.5; 3], 1e-12));
        assert!(close(ycbcr_to_rgb(&pixel([0.0, 0.5, 0.5])).unwrap().data(), &[0.0; 3], 1e-12));
    }

    #[test]
    fn ycbcr_rejects_gray() {
        let img = ImageTensor::zeros(2, 2, 1);
        assert!(matches!(rgb_to_ycbcr(&img), Err(Error::ChannelMismatch { expected: 3, found: 1 })));
        assert!(ycbcr_to_rgb(&img).is_err());
    }

    fn random_image(seed: u64, h: usize, w: usize, c: usize) -> ImageTensor {
        let mut r = rng::rng(seed);
        ImageTensor::from_fn(h, w, c, |_, _, _| r.random::<f64>())
    }

    fn dataset(samples: Vec<ImageTensor>) -> LabeledDataset {
        let n = samples.len();
        LabeledDataset::new("p", samples, DMatrix::zeros(n, 1), TaskKind::Regression, vec![]).unwrap()
    }

    #[test]
    fn white_data_gives_scaled_identity() {
        // pixels ±√3·e_k in equal proportion: pooled second moment is exactly I
        let mut data = Vec::new();
        for k in 0..3 {
            for s in [1.0, -1.0] {
                let mut p = [0.0; 3];
                p[k] = s * 3f64.sqrt();
                data.extend_from_slice(&p);
            }
        }
        let img = ImageTensor::new(1, 6, 3, data).unwrap();
        let eps = 0.5;
        let t = fit_prec(&dataset(vec![img]), eps).unwrap();
        let expect = 1.0 / (1.0 + eps).sqrt();
        for i in 0..3 {
            for j in 0..3 {
                let v = t.matrix_u()[(i, j)].abs();
                let want = if i == j { expect } else { 0.0 };
                assert!((v - want).abs() < 1e-12, "U = {}", t.matrix_u());
            }
        }
    }

    #[test]
    fn two_by_two_hand_decomposition() {
        // Σ = [[2,1],[1,2]] has eigenvalues 3 and 1
        let sigma = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let eps = 0.25;
        let t = prec_from_moment(&sigma, eps).unwrap();
        assert!(close(t.eigenvalues(), &[3.0, 1.0], 1e-12));
        let post = t.matrix_u() * &sigma * t.matrix_u().transpose();
        let want = DMatrix::from_row_slice(2, 2, &[3.0 / 3.25, 0.0, 0.0, 1.0 / 1.25]);
        assert!((post - want).amax() < 1e-12);
        // sign convention: largest-magnitude entry of each eigenvector positive
        let v = t.matrix_u_inverse();
        for col in v.column_iter() {
            assert!(col[col.iamax()] > 0.0);
        }
    }

    #[test]
    fn huge_epsilon_annihilates() {
        let t = fit_prec(&dataset(vec![random_image(1, 4, 4, 3)]), 1e12).unwrap();
        assert!(t.matrix_u().amax() < 1e-5);
    }

    #[test]
    fn fitted_transform_whitens_its_dataset() {
        let samples: Vec<_> = (0..20)
            .map(|s| {
                random_image(s, 6, 5, 3).map_pixels(|p, out| {
                    out[0] = p[0];
                    out[1] = 0.6 * p[0] + 0.4 * p[1];
                    out[2] = 0.3 * p[0] + 0.2 * p[1] + 0.5 * p[2];
                })
            })
            .collect();
        let ds = dataset(samples);
        let eps = 1e-3;
        let t = fit_prec(&ds, eps).unwrap();
        let transformed: Vec<_> = ds.samples().iter().map(|s| apply_prec(&t, s).unwrap()).collect();
        let post = channel_second_moment(&transformed).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let l = t.eigenvalues()[i];
                let want = if i == j { l / (l + eps) } else { 0.0 };
                assert!((post[(i, j)] - want).abs() < 1e-10, "{post}");
            }
        }
    }

    #[test]
    fn identity_and_scalar_transforms() {
        let img = random_image(3, 3, 4, 3);
        let id = PrecTransform::from_matrix(DMatrix::identity(3, 3), 1e-8).unwrap();
        assert_eq!(apply_prec(&id, &img).unwrap(), img);
        let two = PrecTransform::from_matrix(DMatrix::identity(3, 3) * 2.0, 1e-8).unwrap();
        let half = invert_prec(&two, &img).unwrap();
        assert!(close(half.data(), &img.data().iter().map(|v| v * 0.5).collect::<Vec<_>>(), 1e-15));
        let zero = ImageTensor::zeros(2, 2, 3);
        assert_eq!(invert_prec(&two, &zero).unwrap(), zero);
    }

    #[test]
    fn channel_mismatch_is_an_error() {
        let t = PrecTransform::from_matrix(DMatrix::identity(3, 3), 1e-8).unwrap();
        assert!(apply_prec(&t, &ImageTensor::zeros(2, 2, 1)).is_err());
        assert!(invert_prec(&t, &ImageTensor::zeros(2, 2, 2)).is_err());
    }

    #[test]
    fn all_zero_data_fails() {
        let ds = dataset(vec![ImageTensor::zeros(3, 3, 3)]);
        assert!(matches!(fit_prec(&ds, 1e-8), Err(Error::Eigen(_))));
    }

    #[test]
    fn json_round_trip() {
        let t = fit_prec(&dataset(vec![random_image(9, 5, 5, 3)]), 1e-8).unwrap();
        let back = PrecTransform::from_json(&t.to_json().unwrap()).unwrap();
        assert_eq!(back, t);
    }

    proptest! {
        #[test]
        fn round_trips(seed in any::<u64>(), h in 1usize..12, w in 1usize..12) {
            let img = random_image(seed, h, w, 3);
            let back = ycbcr_to_rgb(&rgb_to_ycbcr(&img).unwrap()).unwrap();
            prop_assert!(back.max_abs_diff(&img) < 1e-9);
            let t = fit_prec(&dataset(vec![random_image(seed ^ 1, 4, 4, 3)]), DEFAULT_PREC_EPSILON).unwrap();
            let back = invert_prec(&t, &apply_prec(&t, &img).unwrap()).unwrap();
            prop_assert!(back.max_abs_diff(&img) < 1e-9);
        }

        #[test]
        fn linearity(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let x = random_image(seed, 4, 3, 3);
            let y = random_image(seed.wrapping_add(1), 4, 3, 3);
            let t = fit_prec(&dataset(vec![x.clone()]), 1e-6).unwrap();
            let lhs = apply_prec(&t, &x.axpby(a, &y, b)).unwrap();
            let rhs = apply_prec(&t, &x).unwrap().axpby(a, &apply_prec(&t, &y).unwrap(), b);
            prop_assert!(lhs.max_abs_diff(&rhs) < 1e-9);

            // YCbCr is affine: subtract the image of zero to get the linear part
            let zero = rgb_to_ycbcr(&ImageTensor::zeros(4, 3, 3)).unwrap();
            let lin = |img: &ImageTensor| rgb_to_ycbcr(img).unwrap().axpby(1.0, &zero, -1.0);
            let lhs = lin(&x.axpby(a, &y, b));
            let rhs = lin(&x).axpby(a, &lin(&y), b);
            prop_assert!(lhs.max_abs_diff(&rhs) < 1e-12);
        }
    }
}
