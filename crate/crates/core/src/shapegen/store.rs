//! On-disk dataset format: 8-bit grayscale PNGs plus a JSON manifest.
//!
//! Centered datasets keep their PNGs in raw [0, 1] form and store the mean
//! image separately as `mean.f64` (little-endian row-major 64-bit floats).

use super::dataset::{ShapeDataset, ShapeImage, ValueRange};
use super::polygon::PolygonSpec;
use super::ShapeError;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

#[derive(Serialize, Deserialize)]
struct Manifest {
    image_size: u32,
    count: u32,
    centered: bool,
    specs: Vec<PolygonSpec>,
    labels: Vec<u8>,
}

fn image_name(index: usize) -> String {
    format!("img_{index:05}.png")
}

pub fn save_dataset(dataset: &ShapeDataset, dir: &Path) -> Result<(), ShapeError> {
    fs::create_dir_all(dir)?;
    let size = dataset.image_size();

    for (i, img) in dataset.images.iter().enumerate() {
        let mut bytes = Vec::with_capacity(size * size);
        for (p, &v) in img.pixels.iter().enumerate() {
            let raw = if dataset.centered {
                v + dataset.mean_image[p]
            } else {
                v
            };
            bytes.push((raw.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
        let buf = image::GrayImage::from_raw(size as u32, size as u32, bytes)
            .ok_or_else(|| ShapeError::Corrupt("pixel buffer size mismatch".into()))?;
        buf.save(dir.join(image_name(i)))?;
    }

    if dataset.centered {
        let mut raw = Vec::with_capacity(dataset.mean_image.len() * 8);
        for &v in &dataset.mean_image {
            raw.extend_from_slice(&v.to_le_bytes());
        }
        fs::File::create(dir.join("mean.f64"))?.write_all(&raw)?;
    }

    let manifest = Manifest {
        image_size: size as u32,
        count: dataset.images.len() as u32,
        centered: dataset.centered,
        specs: dataset.specs.clone(),
        labels: dataset.labels.clone(),
    };
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(dir.join("manifest.json"), text)?;
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<ShapeDataset, ShapeError> {
    let manifest_path = dir.join("manifest.json");
    if !manifest_path.exists() {
        return Err(ShapeError::MissingManifest(dir.display().to_string()));
    }
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(manifest_path)?)?;
    let size = manifest.image_size as usize;

    let mut images = Vec::with_capacity(manifest.count as usize);
    for i in 0..manifest.count as usize {
        let img = image::open(dir.join(image_name(i)))?.into_luma8();
        if (img.width() as usize, img.height() as usize) != (size, size) {
            return Err(ShapeError::Corrupt(format!(
                "{} has size {}x{}, manifest says {size}",
                image_name(i),
                img.width(),
                img.height()
            )));
        }
        let pixels: Vec<f64> = img.into_raw().iter().map(|&b| f64::from(b) / 255.0).collect();
        images.push(ShapeImage {
            size,
            pixels,
            range: ValueRange::Raw,
        });
    }

    let mut dataset = ShapeDataset {
        images,
        labels: manifest.labels,
        specs: manifest.specs,
        mean_image: Vec::new(),
        centered: false,
    };
    dataset.mean_image = dataset.recompute_mean();

    if manifest.centered {
        let mut raw = Vec::new();
        fs::File::open(dir.join("mean.f64"))?.read_to_end(&mut raw)?;
        if raw.len() != size * size * 8 {
            return Err(ShapeError::Corrupt(format!(
                "mean.f64 holds {} bytes, expected {}",
                raw.len(),
                size * size * 8
            )));
        }
        let mean: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        for img in &mut dataset.images {
            for (v, &m) in img.pixels.iter_mut().zip(&mean) {
                *v -= m;
            }
            img.range = ValueRange::Centered;
        }
        dataset.mean_image = mean;
        dataset.centered = true;
    }

    Ok(dataset)
}
