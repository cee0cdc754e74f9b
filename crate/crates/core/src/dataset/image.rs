use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One `height × width × channels` sample, stored row-major with channels
/// innermost: index `(row * width + col) * channels + channel`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageTensor {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::InvalidTensor(format!(
                "dimensions must be positive, got {height}x{width}x{channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::InvalidTensor(format!(
                "{} values for shape {height}x{width}x{channels}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidTensor(format!("value at index {i} is not finite")));
        }
        Ok(ImageTensor {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        assert!(height > 0 && width > 0 && channels > 0);
        ImageTensor {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut img = ImageTensor::zeros(height, width, channels);
        for r in 0..height {
            for c in 0..width {
                for ch in 0..channels {
                    let i = img.index(r, c, ch);
                    img.data[i] = f(r, c, ch);
                }
            }
        }
        img
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize, channel: usize) -> usize {
        (row * self.width + col) * self.channels + channel
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.data[self.index(row, col, channel)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, channel: usize, value: f64) {
        let i = self.index(row, col, channel);
        self.data[i] = value;
    }

    /// One channel as a row-major `height × width` plane.
    pub fn plane(&self, channel: usize) -> Vec<f64> {
        self.data[channel..]
            .iter()
            .step_by(self.channels)
            .copied()
            .collect()
    }

    pub fn set_plane(&mut self, channel: usize, plane: &[f64]) {
        assert_eq!(plane.len(), self.height * self.width);
        for (dst, &v) in self.data[channel..].iter_mut().step_by(self.channels).zip(plane) {
            *dst = v;
        }
    }

    /// Applies `f` to every pixel's channel vector.
    pub fn map_pixels(&self, mut f: impl FnMut(&[f64], &mut [f64])) -> ImageTensor {
        let mut out = ImageTensor::zeros(self.height, self.width, self.channels);
        for (src, dst) in self
            .data
            .chunks_exact(self.channels)
            .zip(out.data.chunks_exact_mut(self.channels))
        {
            f(src, dst);
        }
        out
    }

    pub fn channel_energy(&self, channel: usize) -> f64 {
        self.data[channel..]
            .iter()
            .step_by(self.channels)
            .map(|v| v * v)
            .sum()
    }

    pub fn max_abs_diff(&self, other: &ImageTensor) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// `a·self + b·other`.
    pub fn axpby(&self, a: f64, other: &ImageTensor, b: f64) -> ImageTensor {
        assert_eq!(self.shape(), other.shape());
        ImageTensor {
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(x, y)| a * x + b * y)
                .collect(),
            ..*self
        }
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}
