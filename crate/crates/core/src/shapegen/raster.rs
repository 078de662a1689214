//! Binary scanline rasterization of convex polygons.

use super::dataset::{ShapeImage, ValueRange};
use super::polygon::Polygon;
use super::ShapeError;

/// Fills a binary image: a pixel is 1 exactly when its center lies inside or
/// on the polygon boundary. Pixel (row, col) has its center at
/// (col + 0.5, row + 0.5).
///
/// Each scanline intersects the convex polygon's half-planes with the row
/// line, producing one contiguous x-interval per row.
pub fn rasterize(polygon: &Polygon, image_size: u32) -> Result<ShapeImage, ShapeError> {
    if polygon.area() == 0.0 {
        return Err(ShapeError::Degenerate("polygon has zero area".into()));
    }
    let size = image_size as usize;
    let mut pixels = vec![0.0f64; size * size];

    // Orientation sign so the inside test works for either winding.
    let verts = polygon.vertices();
    let n = verts.len();
    let mut signed = 0.0;
    for i in 0..n {
        let a = verts[i];
        let b = verts[(i + 1) % n];
        signed += a.x * b.y - b.x * a.y;
    }
    let orient = signed.signum();

    for row in 0..size {
        let py = row as f64 + 0.5;
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        let mut feasible = true;

        for i in 0..n {
            let v1 = verts[i];
            let v2 = verts[(i + 1) % n];
            // Inside: orient * cross(v2-v1, p-v1) >= 0, i.e.
            //   a*(py-y1) - b*(px-x1) >= 0  with a = orient*dx, b = orient*dy.
            let a = orient * (v2.x - v1.x);
            let b = orient * (v2.y - v1.y);
            let rhs = a * (py - v1.y);
            if b > 0.0 {
                hi = hi.min(v1.x + rhs / b);
            } else if b < 0.0 {
                lo = lo.max(v1.x + rhs / b);
            } else if rhs < 0.0 {
                feasible = false;
                break;
            }
        }

        if !feasible || lo > hi {
            continue;
        }
        // Pixel centers at col + 0.5 within [lo, hi].
        let first = (lo - 0.5).ceil().max(0.0) as usize;
        let last = (hi - 0.5).floor().min(size as f64 - 1.0);
        if last < 0.0 {
            continue;
        }
        let last = last as usize;
        for col in first..=last {
            pixels[row * size + col] = 1.0;
        }
    }

    Ok(ShapeImage {
        size,
        pixels,
        range: ValueRange::Raw,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use crate::shapegen::polygon::{sample_polygon, Point, PolygonSpec};

    /// Independent per-pixel oracle: half-plane sign tests at every center.
    fn oracle_fill(polygon: &Polygon, size: usize) -> Vec<f64> {
        let verts = polygon.vertices();
        let n = verts.len();
        let mut signed = 0.0;
        for i in 0..n {
            let a = verts[i];
            let b = verts[(i + 1) % n];
            signed += a.x * b.y - b.x * a.y;
        }
        let orient = signed.signum();
        let mut out = vec![0.0; size * size];
        for row in 0..size {
            for col in 0..size {
                let (px, py) = (col as f64 + 0.5, row as f64 + 0.5);
                let inside = (0..n).all(|i| {
                    let v1 = verts[i];
                    let v2 = verts[(i + 1) % n];
                    orient * ((v2.x - v1.x) * (py - v1.y) - (v2.y - v1.y) * (px - v1.x)) >= 0.0
                });
                if inside {
                    out[row * size + col] = 1.0;
                }
            }
        }
        out
    }

    #[test]
    fn axis_aligned_square_covers_exactly_64_pixels() {
        // Covers pixel centers (4,4)..(11,11) in a 16x16 image.
        let square = Polygon::new(vec![
            Point { x: 4.25, y: 4.25 },
            Point { x: 11.75, y: 4.25 },
            Point { x: 11.75, y: 11.75 },
            Point { x: 4.25, y: 11.75 },
        ])
        .unwrap();
        let img = rasterize(&square, 16).unwrap();
        let count: f64 = img.pixels.iter().sum();
        assert_eq!(count, 64.0);
        assert_eq!(img.pixels, oracle_fill(&square, 16));
    }

    #[test]
    fn polygon_outside_window_is_all_zero() {
        let tri = Polygon::new(vec![
            Point { x: 10.0, y: 10.0 },
            Point { x: 12.0, y: 10.0 },
            Point { x: 11.0, y: 12.0 },
        ])
        .unwrap();
        let img = rasterize(&tri, 1).unwrap();
        assert!(img.pixels.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn output_is_binary() {
        let spec = PolygonSpec::new(4, 20.0, false);
        for i in 0..50 {
            let poly = sample_polygon(&spec, &mut substream(11, i)).unwrap();
            let img = rasterize(&poly, spec.image_size).unwrap();
            assert!(img.pixels.iter().all(|&p| p == 0.0 || p == 1.0));
        }
    }

    #[test]
    fn zero_area_polygon_is_degenerate() {
        let line = Polygon::new(vec![
            Point { x: 0.0, y: 0.0 },
            Point { x: 4.0, y: 0.0 },
            Point { x: 8.0, y: 0.0 },
        ])
        .unwrap();
        assert!(matches!(
            rasterize(&line, 16),
            Err(ShapeError::Degenerate(_))
        ));
    }

    #[test]
    fn scanline_matches_per_pixel_oracle_on_random_polygons() {
        for n in [3u32, 4, 5] {
            let spec = PolygonSpec::new(n, 20.0, false);
            for i in 0..200 {
                let poly = sample_polygon(&spec, &mut substream(13, i)).unwrap();
                let img = rasterize(&poly, spec.image_size).unwrap();
                assert_eq!(
                    img.pixels,
                    oracle_fill(&poly, spec.image_size as usize),
                    "n={n} draw={i}"
                );
            }
        }
    }
}
