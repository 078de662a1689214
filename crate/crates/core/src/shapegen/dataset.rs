//! Labeled image datasets built from polygon specs, with mean-shift support.

use super::polygon::{sample_polygon, PolygonSpec};
use super::raster::rasterize;
use super::ShapeError;
use crate::rng::{splitmix64, substream};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValueRange {
    /// Values in [0, 1].
    Raw,
    /// Zero-mean values after subtracting the dataset mean image.
    Centered,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeImage {
    pub size: usize,
    /// Row-major pixel values.
    pub pixels: Vec<f64>,
    pub range: ValueRange,
}

/// Class index for an n-gon: 0 = triangle, 1 = quadrilateral, 2 = pentagon.
pub fn class_label(n_vertices: u32) -> u8 {
    (n_vertices - 3) as u8
}

/// A labeled grayscale image collection plus its generation metadata.
#[derive(Debug, Clone)]
pub struct ShapeDataset {
    pub images: Vec<ShapeImage>,
    pub labels: Vec<u8>,
    pub specs: Vec<PolygonSpec>,
    /// Per-pixel mean of the raw (pre-centering) images.
    pub mean_image: Vec<f64>,
    pub centered: bool,
}

impl ShapeDataset {
    pub fn image_size(&self) -> usize {
        self.images.first().map_or(0, |img| img.size)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Per-pixel mean over the images as currently stored.
    pub fn recompute_mean(&self) -> Vec<f64> {
        let px = self.image_size() * self.image_size();
        let mut acc = vec![0.0f64; px];
        for img in &self.images {
            for (a, &v) in acc.iter_mut().zip(&img.pixels) {
                *a += v;
            }
        }
        let n = self.images.len() as f64;
        for a in &mut acc {
            *a /= n;
        }
        acc
    }

    /// Subtracts the per-pixel mean image from every image. The per-pixel
    /// standard deviation is unchanged; the centered per-pixel mean is zero.
    pub fn center(mut self) -> Result<Self, ShapeError> {
        if self.centered {
            return Err(ShapeError::AlreadyCentered);
        }
        let mean = self.recompute_mean();
        for img in &mut self.images {
            for (v, &m) in img.pixels.iter_mut().zip(&mean) {
                *v -= m;
            }
            img.range = ValueRange::Centered;
        }
        self.mean_image = mean;
        self.centered = true;
        Ok(self)
    }

    /// Adds the stored mean image back, restoring raw values.
    pub fn uncenter(mut self) -> Self {
        if !self.centered {
            return self;
        }
        for img in &mut self.images {
            for (v, &m) in img.pixels.iter_mut().zip(&self.mean_image) {
                *v += m;
            }
            img.range = ValueRange::Raw;
        }
        self.centered = false;
        self
    }
}

/// Generates `spec.count` images. Image `i` uses substream `i` of the spec
/// seed, so the result is identical for any thread count.
pub fn generate_dataset(spec: &PolygonSpec) -> Result<ShapeDataset, ShapeError> {
    spec.validate()?;
    let images = (0..spec.count)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(spec.seed, u64::from(i));
            let poly = sample_polygon(spec, &mut rng)?;
            rasterize(&poly, spec.image_size)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let labels = vec![spec.class(); images.len()];
    let mut dataset = ShapeDataset {
        images,
        labels,
        specs: vec![spec.clone()],
        mean_image: Vec::new(),
        centered: false,
    };
    dataset.mean_image = dataset.recompute_mean();
    if spec.shift_to_mean {
        dataset = dataset.center()?;
    }
    Ok(dataset)
}

/// Parameters for an equal-parts union of the three per-shape datasets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CombinedParams {
    pub min_segment_angle: f64,
    pub shift_to_mean: bool,
    pub image_size: u32,
    /// Images per constituent shape class.
    pub count_per_class: u32,
    pub seed: u64,
}

/// Builds the combined dataset: one part per vertex count in {3, 4, 5} with
/// the same angle, deterministically shuffled, then centered as requested.
pub fn combined_dataset(params: &CombinedParams) -> Result<ShapeDataset, ShapeError> {
    let mut images = Vec::new();
    let mut labels = Vec::new();
    let mut specs = Vec::new();
    for n_vertices in [3u32, 4, 5] {
        let part_spec = PolygonSpec::new(n_vertices, params.min_segment_angle, false)
            .with_image_size(params.image_size)
            .with_count(params.count_per_class)
            .with_seed(splitmix64(params.seed ^ u64::from(n_vertices)));
        let part = generate_dataset(&part_spec)?;
        images.extend(part.images);
        labels.extend(part.labels);
        specs.extend(part.specs);
    }

    let mut order: Vec<usize> = (0..images.len()).collect();
    order.shuffle(&mut substream(params.seed, u64::MAX));
    let images: Vec<ShapeImage> = order.iter().map(|&i| images[i].clone()).collect();
    let labels: Vec<u8> = order.iter().map(|&i| labels[i]).collect();

    let mut dataset = ShapeDataset {
        images,
        labels,
        specs,
        mean_image: Vec::new(),
        centered: false,
    };
    dataset.mean_image = dataset.recompute_mean();
    if params.shift_to_mean {
        dataset = dataset.center()?;
    }
    Ok(dataset)
}
