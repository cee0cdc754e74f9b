//! Orthonormal 2-D DCT-II over whole frames and over non-overlapping blocks,
//! applied to each channel independently.
//!
//! The 1-D basis is `C[k][n] = s_k cos(π (2n + 1) k / 2N)` with `s_0 = √(1/N)`
//! and `s_k = √(2/N)`, so `C` is orthogonal and the inverse is `Cᵀ`. The 2-D
//! transform of a plane `X` is `C_H X C_Wᵀ`, computed separably.

use serde::{Deserialize, Serialize};

use crate::dataset::ImageTensor;
use crate::error::{Error, Result};

pub const DEFAULT_BLOCK: usize = 8;

/// Row-major `n × n` orthonormal DCT-II matrix.
#[derive(Clone, Debug)]
pub struct DctBasis {
    n: usize,
    m: Vec<f64>,
}

impl DctBasis {
    pub fn new(n: usize) -> Self {
        assert!(n > 0);
        let nf = n as f64;
        let mut m = vec![0.0; n * n];
        for k in 0..n {
            let s = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
            for i in 0..n {
                let angle = std::f64::consts::PI * (2 * i + 1) as f64 * k as f64 / (2.0 * nf);
                m[k * n + i] = s * angle.cos();
            }
        }
        DctBasis { n, m }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    fn at(&self, k: usize, i: usize) -> f64 {
        self.m[k * self.n + i]
    }
}

/// A separable 2-D transform for planes of one fixed size.
#[derive(Clone, Debug)]
pub struct DctPlan {
    rows: DctBasis,
    cols: DctBasis,
}

impl DctPlan {
    pub fn new(height: usize, width: usize) -> Self {
        DctPlan {
            rows: DctBasis::new(height),
            cols: DctBasis::new(width),
        }
    }

    /// Transforms the `h × w` window of `src` (row stride `stride`) starting at
    /// `(r0, c0)` into the same window of `dst`.
    fn window(&self, src: &[f64], dst: &mut [f64], stride: usize, r0: usize, c0: usize, inverse: bool) {
        let (h, w) = (self.rows.n, self.cols.n);
        // along columns: tmp = C_H X (forward) or C_Hᵀ X (inverse)
        let mut tmp = vec![0.0; h * w];
        for k in 0..h {
            for i in 0..h {
                let c = if inverse { self.rows.at(i, k) } else { self.rows.at(k, i) };
                let src_row = &src[(r0 + i) * stride + c0..(r0 + i) * stride + c0 + w];
                for (t, &x) in tmp[k * w..(k + 1) * w].iter_mut().zip(src_row) {
                    *t += c * x;
                }
            }
        }
        // along rows: out = tmp C_Wᵀ (forward) or tmp C_W (inverse)
        for k in 0..h {
            let t = &tmp[k * w..(k + 1) * w];
            for l in 0..w {
                let mut acc = 0.0;
                for (j, &x) in t.iter().enumerate() {
                    let c = if inverse { self.cols.at(j, l) } else { self.cols.at(l, j) };
                    acc += c * x;
                }
                dst[(r0 + k) * stride + c0 + l] = acc;
            }
        }
    }

    fn run(&self, img: &ImageTensor, inverse: bool) -> ImageTensor {
        assert_eq!((img.height(), img.width()), (self.rows.n, self.cols.n));
        let mut out = ImageTensor::zeros(img.height(), img.width(), img.channels());
        let mut dst = vec![0.0; img.height() * img.width()];
        for ch in 0..img.channels() {
            let plane = img.plane(ch);
            self.window(&plane, &mut dst, img.width(), 0, 0, inverse);
            out.set_plane(ch, &dst);
        }
        out
    }

    pub fn forward(&self, img: &ImageTensor) -> ImageTensor {
        self.run(img, false)
    }

    pub fn inverse(&self, img: &ImageTensor) -> ImageTensor {
        self.run(img, true)
    }
}

/// Full-frame orthonormal DCT-II per channel. Coefficient `(0, 0)` is the DC term.
pub fn dct2(img: &ImageTensor) -> ImageTensor {
    DctPlan::new(img.height(), img.width()).forward(img)
}

pub fn idct2(img: &ImageTensor) -> ImageTensor {
    DctPlan::new(img.height(), img.width()).inverse(img)
}

/// Definitional DCT-II: every output coefficient evaluated as the full double
/// sum over the plane, `O((H·W)²)` per channel. Kept as an independent
/// reference for the separable path.
pub fn dct2_direct(img: &ImageTensor) -> ImageTensor {
    use std::f64::consts::PI;
    let (h, w, c) = img.shape();
    let scale = |k: usize, n: usize| {
        if k == 0 {
            (1.0 / n as f64).sqrt()
        } else {
            (2.0 / n as f64).sqrt()
        }
    };
    ImageTensor::from_fn(h, w, c, |u, v, ch| {
        let mut acc = 0.0;
        for y in 0..h {
            for x in 0..w {
                acc += img.get(y, x, ch)
                    * (PI * (2 * y + 1) as f64 * u as f64 / (2 * h) as f64).cos()
                    * (PI * (2 * x + 1) as f64 * v as f64 / (2 * w) as f64).cos();
            }
        }
        scale(u, h) * scale(v, w) * acc
    })
}

/// Block-DCT coefficients plus what is needed to undo the padding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockDct {
    /// Padded to multiples of `block` in both directions.
    pub coefficients: ImageTensor,
    pub original_height: usize,
    pub original_width: usize,
    pub block: usize,
}

/// Extends `img` to `height × width` by replicating its last row and column.
pub fn pad_edge(img: &ImageTensor, height: usize, width: usize) -> ImageTensor {
    assert!(height >= img.height() && width >= img.width());
    ImageTensor::from_fn(height, width, img.channels(), |r, c, ch| {
        img.get(r.min(img.height() - 1), c.min(img.width() - 1), ch)
    })
}

pub fn crop(img: &ImageTensor, height: usize, width: usize) -> ImageTensor {
    assert!(height <= img.height() && width <= img.width());
    ImageTensor::from_fn(height, width, img.channels(), |r, c, ch| img.get(r, c, ch))
}

fn blockwise(img: &ImageTensor, block: usize, inverse: bool) -> ImageTensor {
    let plan = DctPlan::new(block, block);
    let (h, w, channels) = img.shape();
    let mut out = ImageTensor::zeros(h, w, channels);
    let mut dst = vec![0.0; h * w];
    for ch in 0..channels {
        let plane = img.plane(ch);
        for r0 in (0..h).step_by(block) {
            for c0 in (0..w).step_by(block) {
                plan.window(&plane, &mut dst, w, r0, c0, inverse);
            }
        }
        out.set_plane(ch, &dst);
    }
    out
}

/// Orthonormal DCT-II on each non-overlapping `block × block` tile of every
/// channel. Sizes that are not multiples of `block` are edge-padded first.
pub fn block_dct(img: &ImageTensor, block: usize) -> Result<BlockDct> {
    if block < 1 {
        return Err(Error::InvalidBlock);
    }
    let ph = img.height().div_ceil(block) * block;
    let pw = img.width().div_ceil(block) * block;
    let padded = pad_edge(img, ph, pw);
    Ok(BlockDct {
        coefficients: blockwise(&padded, block, false),
        original_height: img.height(),
        original_width: img.width(),
        block,
    })
}

pub fn block_idct(coeffs: &BlockDct, block: usize) -> Result<ImageTensor> {
    if block < 1 {
        return Err(Error::InvalidBlock);
    }
    if block != coeffs.block {
        return Err(Error::BlockMismatch {
            expected: coeffs.block,
            found: block,
        });
    }
    let c = &coeffs.coefficients;
    if c.height() % block != 0
        || c.width() % block != 0
        || coeffs.original_height > c.height()
        || coeffs.original_width > c.width()
    {
        return Err(Error::DimensionMismatch(format!(
            "coefficients {}x{} are inconsistent with block {block} and original size {}x{}",
            c.height(),
            c.width(),
            coeffs.original_height,
            coeffs.original_width
        )));
    }
    let full = blockwise(c, block, true);
    Ok(crop(&full, coeffs.original_height, coeffs.original_width))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::Rng;

    use super::*;
    use crate::rng;

    fn random_image(seed: u64, h: usize, w: usize, c: usize) -> ImageTensor {
        let mut r = rng::rng(seed);
        ImageTensor::from_fn(h, w, c, |_, _, _| r.random::<f64>() * 2.0 - 0.5)
    }

    #[test]
    fn constant_image_is_dc_only() {
        let c = 0.37;
        let img = ImageTensor::from_fn(6, 10, 2, |_, _, _| c);
        let out = dct2(&img);
        for r in 0..6 {
            for col in 0..10 {
                for ch in 0..2 {
                    let want = if r == 0 && col == 0 { c * 60f64.sqrt() } else { 0.0 };
                    assert!((out.get(r, col, ch) - want).abs() < 1e-12);
                }
            }
        }
        let back = idct2(&out);
        assert!(back.max_abs_diff(&img) < 1e-12);
    }

    #[test]
    fn two_by_two_against_hand_sum() {
        let img = ImageTensor::new(2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        // X(0,0) = (1+2+3+4)/2; X(0,1) = ((1-2)+(3-4))/2; X(1,0) = ((1+2)-(3+4))/2; X(1,1) = (1-2-3+4)/2
        let want = [5.0, -1.0, -2.0, 0.0];
        let fast = dct2(&img);
        let slow = dct2_direct(&img);
        for i in 0..4 {
            assert!((fast.data()[i] - want[i]).abs() < 1e-12, "{:?}", fast.data());
            assert!((slow.data()[i] - want[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_and_dc_inverse() {
        let zero = ImageTensor::zeros(5, 7, 3);
        assert_eq!(idct2(&zero), zero);
        let mut dc = ImageTensor::zeros(4, 4, 1);
        dc.set(0, 0, 0, 8.0);
        let back = idct2(&dc);
        assert!(back.data().iter().all(|v| (v - 2.0).abs() < 1e-12));
    }

    #[test]
    fn block_constant_tile() {
        let img = ImageTensor::from_fn(8, 8, 1, |_, _, _| 0.25);
        let out = block_dct(&img, 8).unwrap();
        assert!((out.coefficients.get(0, 0, 0) - 2.0).abs() < 1e-12);
        let others: f64 = out.coefficients.data()[1..].iter().map(|v| v.abs()).sum();
        assert!(others < 1e-12);
        let back = block_idct(&out, 8).unwrap();
        assert!(back.max_abs_diff(&img) < 1e-12);
    }

    #[test]
    fn blocks_are_local() {
        let img = random_image(4, 16, 16, 2);
        let out = block_dct(&img, 8).unwrap().coefficients;
        for (r0, c0) in [(0, 0), (0, 8), (8, 0), (8, 8)] {
            let tile = ImageTensor::from_fn(8, 8, 2, |r, c, ch| img.get(r0 + r, c0 + c, ch));
            let want = dct2(&tile);
            for r in 0..8 {
                for c in 0..8 {
                    for ch in 0..2 {
                        assert!((out.get(r0 + r, c0 + c, ch) - want.get(r, c, ch)).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn padding_and_crop() {
        let img = random_image(5, 9, 9, 1);
        let out = block_dct(&img, 8).unwrap();
        assert_eq!(out.coefficients.shape(), (16, 16, 1));
        let padded = pad_edge(&img, 16, 16);
        assert_eq!(padded.get(15, 3, 0), img.get(8, 3, 0));
        assert_eq!(padded.get(12, 15, 0), img.get(8, 8, 0));
        let back = block_idct(&out, 8).unwrap();
        assert_eq!(back.shape(), (9, 9, 1));
        assert!(back.max_abs_diff(&img) < 1e-9);
    }

    #[test]
    fn block_errors() {
        let img = random_image(1, 4, 4, 1);
        assert!(matches!(block_dct(&img, 0), Err(Error::InvalidBlock)));
        let out = block_dct(&img, 4).unwrap();
        assert!(matches!(block_idct(&out, 2), Err(Error::BlockMismatch { expected: 4, found: 2 })));
    }

    #[test]
    fn block_zero_and_dc_inverse() {
        let coeffs = BlockDct {
            coefficients: ImageTensor::zeros(16, 8, 3),
            original_height: 13,
            original_width: 8,
            block: 8,
        };
        assert_eq!(block_idct(&coeffs, 8).unwrap(), ImageTensor::zeros(13, 8, 3));
        let mut dc = ImageTensor::zeros(8, 8, 1);
        dc.set(0, 0, 0, 4.0);
        let tile = block_idct(
            &BlockDct { coefficients: dc, original_height: 8, original_width: 8, block: 8 },
            8,
        )
        .unwrap();
        assert!(tile.data().iter().all(|v| (v - 0.5).abs() < 1e-12));
    }

    #[test]
    fn whole_image_block_equals_full_frame_on_padded() {
        let img = random_image(8, 11, 6, 2);
        let s = 11;
        let padded = pad_edge(&img, s, s);
        let blocked = block_dct(&img, s).unwrap().coefficients;
        assert!(blocked.max_abs_diff(&dct2(&padded)) < 1e-12);
    }

    proptest! {
        #[test]
        fn round_trips_and_energy(seed in any::<u64>(), h in 1usize..20, w in 1usize..20, c in 1usize..4, block in 1usize..10) {
            let img = random_image(seed, h, w, c);
            let f = dct2(&img);
            prop_assert!(idct2(&f).max_abs_diff(&img) < 1e-9);
            for ch in 0..c {
                let e = img.channel_energy(ch);
                prop_assert!((f.channel_energy(ch) - e).abs() <= 1e-9 * e.max(1e-300));
            }
            let b = block_dct(&img, block).unwrap();
            prop_assert!(block_idct(&b, block).unwrap().max_abs_diff(&img) < 1e-9);
            let padded = pad_edge(&img, b.coefficients.height(), b.coefficients.width());
            for ch in 0..c {
                let e = padded.channel_energy(ch);
                prop_assert!((b.coefficients.channel_energy(ch) - e).abs() <= 1e-9 * e.max(1e-300));
            }
        }

        #[test]
        fn linear(seed in any::<u64>(), a in -2.0f64..2.0, bb in -2.0f64..2.0) {
            let x = random_image(seed, 7, 10, 2);
            let y = random_image(seed.wrapping_add(9), 7, 10, 2);
            let comb = x.axpby(a, &y, bb);
            prop_assert!(dct2(&comb).max_abs_diff(&dct2(&x).axpby(a, &dct2(&y), bb)) < 1e-9);
            prop_assert!(idct2(&comb).max_abs_diff(&idct2(&x).axpby(a, &idct2(&y), bb)) < 1e-9);
            let bd = |i: &ImageTensor| block_dct(i, 4).unwrap().coefficients;
            prop_assert!(bd(&comb).max_abs_diff(&bd(&x).axpby(a, &bd(&y), bb)) < 1e-9);
            let bi = |i: &ImageTensor| block_idct(&BlockDct { coefficients: i.clone(), original_height: 7, original_width: 10, block: 1 }, 1).unwrap();
            prop_assert!(bi(&comb).max_abs_diff(&bi(&x).axpby(a, &bi(&y), bb)) < 1e-9);
        }
    }
}
