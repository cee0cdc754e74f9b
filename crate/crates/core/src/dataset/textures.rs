use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{ImageTensor, LabeledDataset, TaskKind};
use crate::error::{Error, Result};
use crate::rng;

/// A small image classification task: each class is a sinusoidal grating with
/// its own orientation, frequency and tint, drawn with random phase, contrast
/// and pixel noise.
#[derive(Clone, Debug, PartialEq)]
pub struct TextureSpec {
    pub sample_count: usize,
    pub classes: usize,
    pub size: usize,
    pub channels: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for TextureSpec {
    fn default() -> Self {
        TextureSpec {
            sample_count: 300,
            classes: 3,
            size: 32,
            channels: 3,
            noise: 0.05,
            seed: 0,
        }
    }
}

/// Generates the texture task. Values are quantized to multiples of 1/255 so the
/// dataset survives a PNG round trip unchanged.
pub fn make_texture_classification(spec: &TextureSpec) -> Result<LabeledDataset> {
    if spec.classes < 2 || spec.sample_count < spec.classes || spec.size < 2 {
        return Err(Error::InvalidConfig(format!(
            "texture task needs >= 2 classes, >= 1 sample per class and size >= 2, got {spec:?}"
        )));
    }
    if spec.channels != 1 && spec.channels != 3 {
        return Err(Error::InvalidConfig("texture channels must be 1 or 3".into()));
    }
    let mut r = rng::stream(spec.seed, 0);
    let n = spec.size as f64;
    let mut samples = Vec::with_capacity(spec.sample_count);
    let mut targets = DMatrix::zeros(spec.sample_count, spec.classes);
    for i in 0..spec.sample_count {
        let class = i % spec.classes;
        targets[(i, class)] = 1.0;
        let angle = PI * class as f64 / spec.classes as f64;
        let freq = (2.0 + 1.5 * class as f64) / n;
        let (ca, sa) = (angle.cos(), angle.sin());
        let phase = r.random::<f64>() * 2.0 * PI;
        let contrast = 0.25 + 0.15 * r.random::<f64>();
        let tint = [
            0.5 + 0.2 * ((class as f64) * 1.3).cos(),
            0.5 + 0.2 * ((class as f64) * 2.1).sin(),
            0.5 - 0.15 * ((class as f64) * 0.7).cos(),
        ];
        let mut img = ImageTensor::zeros(spec.size, spec.size, spec.channels);
        for y in 0..spec.size {
            for x in 0..spec.size {
                let t = 2.0 * PI * freq * (ca * x as f64 + sa * y as f64) + phase;
                let wave = contrast * t.sin();
                for ch in 0..spec.channels {
                    let base = if spec.channels == 3 { tint[ch] } else { 0.5 };
                    let v = base + wave + spec.noise * r.sample::<f64, _>(StandardNormal);
                    img.set(y, x, ch, (v.clamp(0.0, 1.0) * 255.0).round() / 255.0);
                }
            }
        }
        samples.push(img);
    }
    let labels = (0..spec.classes).map(|k| format!("class{k:02}")).collect();
    LabeledDataset::new("textures", samples, targets, TaskKind::Classification, labels)
}

/// Writes samples as 8-bit PNGs plus a `manifest.csv`. Samples must lie in `[0, 1]`
/// and have 1 or 3 channels.
pub fn write_image_dataset(ds: &LabeledDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = String::from("path,target\n");
    for (i, img) in ds.samples().iter().enumerate() {
        let (lo, hi) = img.min_max();
        if lo < 0.0 || hi > 1.0 {
            return Err(Error::InvalidTensor(format!(
                "sample {i} has values outside [0, 1]; store it as a tensor dataset instead"
            )));
        }
        let bytes: Vec<u8> = img.data().iter().map(|v| (v * 255.0).round() as u8).collect();
        let (w, h) = (img.width() as u32, img.height() as u32);
        let file = format!("img_{i:05}.png");
        let path = dir.join(&file);
        let saved = match img.channels() {
            1 => image::GrayImage::from_raw(w, h, bytes).map(|b| b.save(&path)),
            3 => image::RgbImage::from_raw(w, h, bytes).map(|b| b.save(&path)),
            c => return Err(Error::ChannelMismatch { expected: 3, found: c }),
        };
        saved
            .expect("buffer size matches shape")
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        let target = match ds.task_kind() {
            TaskKind::Classification => {
                let row = ds.targets().row(i);
                let k = row.iter().position(|&v| v == 1.0).expect("one-hot");
                ds.class_labels()[k].clone()
            }
            TaskKind::Regression => ds
                .targets()
                .row(i)
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(";"),
        };
        writeln!(manifest, "{file},{target}").expect("write to string");
    }
    let path = dir.join("manifest.csv");
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))
}
