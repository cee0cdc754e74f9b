use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Deserialize;

use super::{ImageTensor, LabeledDataset, TaskKind};
use crate::error::{Error, Result};

#[derive(Debug, Deserialize)]
struct ManifestRow {
    path: String,
    target: String,
}

/// Loads the images listed in a `path,target` CSV manifest.
///
/// Paths are relative to `root`. Rows are numbered from 1 (the header is not
/// counted) in error values. Intensities are divided by the format maximum, so
/// every loaded value lies in `[0, 1]`. Classification labels become one-hot
/// rows in lexicographic label order; regression targets are
/// semicolon-separated numbers.
pub fn load_image_dir(root: &Path, manifest_path: &Path, task_kind: TaskKind) -> Result<LabeledDataset> {
    let mut reader = csv::Reader::from_path(manifest_path)?;
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["path", "target"] {
        return Err(Error::Manifest {
            path: manifest_path.to_path_buf(),
            message: format!("expected header `path,target`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let rows: Vec<ManifestRow> = reader.deserialize().collect::<Result<_, _>>()?;
    if rows.is_empty() {
        return Err(Error::EmptyManifest(manifest_path.to_path_buf()));
    }

    let paths: Vec<PathBuf> = rows.iter().map(|r| root.join(&r.path)).collect();
    for (i, p) in paths.iter().enumerate() {
        if !p.is_file() {
            return Err(Error::MissingFile {
                row: i + 1,
                path: p.clone(),
            });
        }
    }

    let decoded: Vec<Result<ImageTensor>> = paths
        .par_iter()
        .enumerate()
        .map(|(i, p)| decode(i + 1, p))
        .collect();
    let mut samples = Vec::with_capacity(decoded.len());
    for (i, img) in decoded.into_iter().enumerate() {
        let img = img?;
        if let Some(first) = samples.first().map(ImageTensor::shape) {
            if img.shape() != first {
                return Err(Error::ShapeMismatch {
                    row: i + 1,
                    expected: first,
                    found: img.shape(),
                });
            }
        }
        samples.push(img);
    }

    let name = root
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());
    match task_kind {
        TaskKind::Classification => {
            let labels: Vec<String> = rows
                .iter()
                .map(|r| r.target.trim().to_string())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            let mut targets = DMatrix::zeros(rows.len(), labels.len());
            for (i, r) in rows.iter().enumerate() {
                let k = labels.binary_search(&r.target.trim().to_string()).expect("label present");
                targets[(i, k)] = 1.0;
            }
            LabeledDataset::new(name, samples, targets, task_kind, labels)
        }
        TaskKind::Regression => {
            let mut values: Vec<Vec<f64>> = Vec::with_capacity(rows.len());
            for (i, r) in rows.iter().enumerate() {
                let parsed: Option<Vec<f64>> = r
                    .target
                    .split(';')
                    .map(|t| t.trim().parse::<f64>().ok().filter(|v| v.is_finite()))
                    .collect();
                let parsed = parsed.ok_or_else(|| Error::NonNumericTarget {
                    row: i + 1,
                    value: r.target.clone(),
                })?;
                if let Some(first) = values.first() {
                    if first.len() != parsed.len() {
                        return Err(Error::TargetArity {
                            row: i + 1,
                            expected: first.len(),
                            found: parsed.len(),
                        });
                    }
                }
                values.push(parsed);
            }
            let m = values[0].len();
            let flat: Vec<f64> = values.into_iter().flatten().collect();
            let targets = DMatrix::from_row_slice(rows.len(), m, &flat);
            LabeledDataset::new(name, samples, targets, task_kind, vec![])
        }
    }
}

fn decode(row: usize, path: &Path) -> Result<ImageTensor> {
    let img = image::open(path).map_err(|e| Error::Decode {
        row,
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let color = img.color();
    let wide = color.bits_per_pixel() / color.channel_count() as u16 > 8;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, data): (usize, Vec<f64>) = match (color.has_color(), wide) {
        (false, false) => (1, scale(img.to_luma8().into_raw(), 255.0)),
        (false, true) => (1, scale(img.to_luma16().into_raw(), 65535.0)),
        (true, false) => (3, scale(img.to_rgb8().into_raw(), 255.0)),
        (true, true) => (3, scale(img.to_rgb16().into_raw(), 65535.0)),
    };
    ImageTensor::new(h, w, channels, data).map_err(|e| Error::Decode {
        row,
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn scale<T: Into<f64> + Copy>(raw: Vec<T>, max: f64) -> Vec<f64> {
    raw.into_iter().map(|v| v.into() / max).collect()
}

#[cfg(test)]
mod tests {
    use std::fs;

    use super::*;

    fn write_png(path: &Path, w: u32, h: u32, value: u8) {
        image::RgbImage::from_pixel(w, h, image::Rgb([value, value, value]))
            .save(path)
            .unwrap();
    }

    #[test]
    fn three_rows_two_labels() {
        let dir = tempfile::tempdir().unwrap();
        for (i, v) in [0u8, 128, 255].iter().enumerate() {
            write_png(&dir.path().join(format!("{i}.png")), 8, 8, *v);
        }
        let manifest = dir.path().join("manifest.csv");
        fs::write(&manifest, "path,target\n0.png,dog\n1.png,cat\n2.png,dog\n").unwrap();
        let ds = load_image_dir(dir.path(), &manifest, TaskKind::Classification).unwrap();
        assert_eq!((ds.len(), ds.target_dim()), (3, 2));
        assert_eq!(ds.class_labels(), ["cat", "dog"]);
        assert_eq!(ds.targets().row(0).iter().copied().collect::<Vec<_>>(), vec![0.0, 1.0]);
        assert_eq!(ds.targets().row(1).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.0]);
        assert!(ds.samples()[2].data().iter().all(|&v| v == 1.0));
        assert!(ds.samples()[0].data().iter().all(|&v| v == 0.0));
        assert_eq!(ds.sample_shape(), Some((8, 8, 3)));
    }

    #[test]
    fn missing_file_names_row() {
        let dir = tempfile::tempdir().unwrap();
        write_png(&dir.path().join("a.png"), 4, 4, 1);
        let manifest = dir.path().join("m.csv");
        fs::write(&manifest, "path,target\na.png,x\nb.png,y\n").unwrap();
        let err = load_image_dir(dir.path(), &manifest, TaskKind::Classification).unwrap_err();
        assert!(matches!(err, Error::MissingFile { row: 2, .. }), "{err}");
    }

    #[test]
    fn shape_mismatch_names_row() {
        let dir = tempfile::tempdir().unwrap();
        write_png(&dir.path().join("a.png"), 4, 4, 1);
        write_png(&dir.path().join("b.png"), 4, 5, 1);
        let manifest = dir.path().join("m.csv");
        fs::write(&manifest, "path,target\na.png,x\nb.png,y\n").unwrap();
        let err = load_image_dir(dir.path(), &manifest, TaskKind::Classification).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { row: 2, .. }), "{err}");
    }

    #[test]
    fn regression_targets() {
        let dir = tempfile::tempdir().unwrap();
        write_png(&dir.path().join("a.png"), 2, 2, 1);
        let manifest = dir.path().join("m.csv");
        fs::write(&manifest, "path,target\na.png,0.5;-1\na.png,2;3\n").unwrap();
        let ds = load_image_dir(dir.path(), &manifest, TaskKind::Regression).unwrap();
        assert_eq!(ds.targets(), &DMatrix::from_row_slice(2, 2, &[0.5, -1.0, 2.0, 3.0]));

        fs::write(&manifest, "path,target\na.png,0.5\na.png,up\n").unwrap();
        let err = load_image_dir(dir.path(), &manifest, TaskKind::Regression).unwrap_err();
        assert!(matches!(err, Error::NonNumericTarget { row: 2, .. }), "{err}");
    }

    #[test]
    fn empty_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = dir.path().join("m.csv");
        fs::write(&manifest, "path,target\n").unwrap();
        let err = load_image_dir(dir.path(), &manifest, TaskKind::Classification).unwrap_err();
        assert!(matches!(err, Error::EmptyManifest(_)));
    }

    #[test]
    fn grayscale_sixteen_bit() {
        let dir = tempfile::tempdir().unwrap();
        image::ImageBuffer::<image::Luma<u16>, _>::from_pixel(3, 2, image::Luma([65535u16]))
            .save(dir.path().join("g.png"))
            .unwrap();
        let manifest = dir.path().join("m.csv");
        fs::write(&manifest, "path,target\ng.png,1\n").unwrap();
        let ds = load_image_dir(dir.path(), &manifest, TaskKind::Regression).unwrap();
        assert_eq!(ds.sample_shape(), Some((2, 3, 1)));
        assert!(ds.samples()[0].data().iter().all(|&v| v == 1.0));
    }
}
