//! Convex polygons inscribed in an ellipse, sampled under a minimum
//! central-angle constraint.

use super::ShapeError;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Parameterization of one convex n-gon dataset cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolygonSpec {
    pub n_vertices: u32,
    /// Minimum central angle between consecutive vertices, in degrees.
    pub min_segment_angle: f64,
    pub shift_to_mean: bool,
    /// Ellipse semi-axis along x, in pixels.
    pub semi_axis_a: f64,
    /// Ellipse semi-axis along y, in pixels.
    pub semi_axis_b: f64,
    /// Image side length in pixels.
    pub image_size: u32,
    /// Number of images to generate.
    pub count: u32,
    pub seed: u64,
}

impl PolygonSpec {
    /// Spec with the default ellipse for the given image size.
    pub fn new(n_vertices: u32, min_segment_angle: f64, shift_to_mean: bool) -> Self {
        let image_size = 32;
        Self {
            n_vertices,
            min_segment_angle,
            shift_to_mean,
            semi_axis_a: 0.45 * f64::from(image_size),
            semi_axis_b: 0.35 * f64::from(image_size),
            image_size,
            count: 1,
            seed: 0,
        }
    }

    pub fn with_image_size(mut self, image_size: u32) -> Self {
        self.image_size = image_size;
        self.semi_axis_a = 0.45 * f64::from(image_size);
        self.semi_axis_b = 0.35 * f64::from(image_size);
        self
    }

    pub fn with_count(mut self, count: u32) -> Self {
        self.count = count;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Image center; also the ellipse center.
    pub fn center(&self) -> Point {
        let c = f64::from(self.image_size) / 2.0;
        Point { x: c, y: c }
    }

    pub fn validate(&self) -> Result<(), ShapeError> {
        if self.n_vertices < 3 {
            return Err(ShapeError::InvalidSpec(format!(
                "n_vertices must be >= 3, got {}",
                self.n_vertices
            )));
        }
        if !(self.min_segment_angle > 0.0) {
            return Err(ShapeError::InvalidSpec(format!(
                "min_segment_angle must be > 0, got {}",
                self.min_segment_angle
            )));
        }
        let budget = f64::from(self.n_vertices) * self.min_segment_angle;
        if budget > 360.0 {
            return Err(ShapeError::InvalidSpec(format!(
                "infeasible: {} vertices x {} deg = {} > 360",
                self.n_vertices, self.min_segment_angle, budget
            )));
        }
        if self.image_size < 16 {
            return Err(ShapeError::InvalidSpec(format!(
                "image_size must be >= 16, got {}",
                self.image_size
            )));
        }
        if !(self.semi_axis_a > 0.0 && self.semi_axis_b > 0.0) {
            return Err(ShapeError::InvalidSpec(
                "semi-axes must be positive".into(),
            ));
        }
        let max_axis = f64::from(self.image_size) / 2.0 - 1.0;
        if self.semi_axis_a > max_axis || self.semi_axis_b > max_axis {
            return Err(ShapeError::InvalidSpec(format!(
                "semi-axes ({}, {}) exceed image half-size minus 1px margin ({})",
                self.semi_axis_a, self.semi_axis_b, max_axis
            )));
        }
        if self.count < 1 {
            return Err(ShapeError::InvalidSpec("count must be >= 1".into()));
        }
        Ok(())
    }

    /// Class index: 0 = triangle, 1 = quadrilateral, 2 = pentagon.
    pub fn class(&self) -> u8 {
        super::class_label(self.n_vertices)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

/// A convex polygon; vertices are stored in increasing polar-angle order
/// about the generating ellipse center.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    vertices: Vec<Point>,
}

impl Polygon {
    pub fn new(vertices: Vec<Point>) -> Result<Self, ShapeError> {
        if vertices.len() < 3 {
            return Err(ShapeError::Degenerate(format!(
                "polygon needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        Ok(Self { vertices })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// True when all cross products of consecutive edge vectors share a sign.
    pub fn is_convex(&self) -> bool {
        let n = self.vertices.len();
        let mut sign = 0.0f64;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let c = self.vertices[(i + 2) % n];
            let cross = (b.x - a.x) * (c.y - b.y) - (b.y - a.y) * (c.x - b.x);
            if cross == 0.0 {
                return false;
            }
            if sign == 0.0 {
                sign = cross.signum();
            } else if cross.signum() != sign {
                return false;
            }
        }
        true
    }

    /// Central angles between consecutive vertices about `center`, in degrees.
    /// Entry `i` is the wrapped polar-angle gap from vertex `i` to `i+1`.
    pub fn central_angles(&self, center: Point) -> Vec<f64> {
        let polar: Vec<f64> = self
            .vertices
            .iter()
            .map(|v| (v.y - center.y).atan2(v.x - center.x).to_degrees())
            .collect();
        let n = polar.len();
        (0..n)
            .map(|i| (polar[(i + 1) % n] - polar[i]).rem_euclid(360.0))
            .collect()
    }

    /// Shoelace area in square pixels.
    pub fn area(&self) -> f64 {
        let n = self.vertices.len();
        let mut acc = 0.0;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            acc += a.x * b.y - b.x * a.y;
        }
        acc.abs() / 2.0
    }

    pub fn perimeter(&self) -> f64 {
        self.edge_lengths().iter().sum()
    }

    pub fn area_perimeter_ratio(&self) -> f64 {
        self.area() / self.perimeter()
    }

    pub fn edge_lengths(&self) -> Vec<f64> {
        let n = self.vertices.len();
        (0..n)
            .map(|i| {
                let a = self.vertices[i];
                let b = self.vertices[(i + 1) % n];
                ((b.x - a.x).powi(2) + (b.y - a.y).powi(2)).sqrt()
            })
            .collect()
    }

    /// Interior angles in degrees; for a convex polygon each is < 180 and
    /// they sum to (n - 2) * 180.
    pub fn interior_angles(&self) -> Vec<f64> {
        let n = self.vertices.len();
        (0..n)
            .map(|i| {
                let prev = self.vertices[(i + n - 1) % n];
                let v = self.vertices[i];
                let next = self.vertices[(i + 1) % n];
                let inc = (v.x - prev.x, v.y - prev.y);
                let out = (next.x - v.x, next.y - v.y);
                let cross = inc.0 * out.1 - inc.1 * out.0;
                let dot = inc.0 * out.0 + inc.1 * out.1;
                let turn = cross.atan2(dot).to_degrees();
                180.0 - turn.abs()
            })
            .collect()
    }

    pub fn angle_variance(&self) -> f64 {
        population_variance(&self.interior_angles())
    }

    pub fn edge_length_variance(&self) -> f64 {
        population_variance(&self.edge_lengths())
    }
}

fn population_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n
}

/// Draws one polygon: the circle of polar angles is split into `n` equal
/// segments and each vertex's polar angle is drawn uniformly from its segment
/// shrunk by half the minimum angle on both sides, which guarantees every
/// consecutive gap (including wraparound) is at least `min_segment_angle`.
/// The vertex is the point of the ellipse in that polar direction.
pub fn sample_polygon<R: Rng + ?Sized>(
    spec: &PolygonSpec,
    rng: &mut R,
) -> Result<Polygon, ShapeError> {
    spec.validate()?;
    let n = spec.n_vertices as usize;
    let seg = 360.0 / n as f64;
    let margin = spec.min_segment_angle / 2.0;
    let center = spec.center();
    let (a, b) = (spec.semi_axis_a, spec.semi_axis_b);

    let mut vertices = Vec::with_capacity(n);
    for i in 0..n {
        let lo = i as f64 * seg + margin;
        let hi = (i + 1) as f64 * seg - margin;
        let phi_deg = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        let phi = phi_deg.to_radians();
        // Point of the ellipse at polar angle phi about its center.
        let r = a * b / ((b * phi.cos()).powi(2) + (a * phi.sin()).powi(2)).sqrt();
        vertices.push(Point {
            x: center.x + r * phi.cos(),
            y: center.y + r * phi.sin(),
        });
    }
    Polygon::new(vertices)
}
