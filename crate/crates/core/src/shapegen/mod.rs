//! Procedural generation of parameterized convex-polygon image datasets.

mod dataset;
mod polygon;
mod raster;
mod store;

pub use dataset::{
    class_label, combined_dataset, generate_dataset, CombinedParams, ShapeDataset, ShapeImage,
    ValueRange,
};
pub use polygon::{sample_polygon, Point, Polygon, PolygonSpec};
pub use raster::rasterize;
pub use store::{load_dataset, save_dataset};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ShapeError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("dataset is already centered")]
    AlreadyCentered,
    #[error("dataset directory {0} has no manifest.json")]
    MissingManifest(String),
    #[error("corrupt dataset: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
