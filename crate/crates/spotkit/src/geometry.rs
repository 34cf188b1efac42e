//! Coordinate quantization and geometric primitives.
//!
//! Continuous pixel coordinates are normalized to the image extent and
//! quantized into `n_bins` discrete bins per axis. Quantization uses floor
//! with an upper-edge clamp; dequantization returns bin centers, so a
//! quantize/dequantize round trip is exact to within half a bin per axis.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised by quantization and polygon construction.
#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("point coordinate {value} outside extent on {axis} axis (valid 0..={max})")]
    OutOfExtent { axis: Axis, value: f64, max: f64 },
    #[error("n_bins must be >= 2, got {0}")]
    BinCount(u32),
    #[error("bin ({x_bin}, {y_bin}) out of range for n_bins={n_bins}")]
    BinOutOfRange { x_bin: u32, y_bin: u32, n_bins: u32 },
    #[error("{kind:?} polygon requires exactly {expected} vertices, got {got}")]
    VertexCount { kind: PolyKind, expected: usize, got: usize },
    #[error("polygon resampling requires at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("degenerate polygon with zero perimeter")]
    ZeroPerimeter,
    #[error("image extent must be at least 1x1")]
    EmptyExtent,
}

/// Axis identifier used in range errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Axis::X => write!(f, "x"),
            Axis::Y => write!(f, "y"),
        }
    }
}

/// Image dimensions in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageExtent {
    pub width: u32,
    pub height: u32,
}

impl ImageExtent {
    pub fn new(width: u32, height: u32) -> Result<Self, GeometryError> {
        if width == 0 || height == 0 {
            return Err(GeometryError::EmptyExtent);
        }
        Ok(Self { width, height })
    }
}

/// Continuous 2-D point in pixel space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointF {
    pub x: f64,
    pub y: f64,
}

impl PointF {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(&self, other: &PointF) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

/// A 2-D coordinate in discrete bin space `[0, n_bins - 1]^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QuantizedPoint {
    pub x_bin: u32,
    pub y_bin: u32,
}

impl QuantizedPoint {
    pub fn new(x_bin: u32, y_bin: u32) -> Self {
        Self { x_bin, y_bin }
    }
}

/// Polygon shape class: 16-point curved format or 4-point box format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolyKind {
    Curved16,
    Box4,
}

impl PolyKind {
    /// Number of vertices the format carries.
    pub fn vertex_count(&self) -> usize {
        match self {
            PolyKind::Curved16 => 16,
            PolyKind::Box4 => 4,
        }
    }
}

/// Polygonal text geometry with a fixed vertex count per kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolygonGeom {
    vertices: Vec<PointF>,
    kind: PolyKind,
}

impl PolygonGeom {
    pub fn new(vertices: Vec<PointF>, kind: PolyKind) -> Result<Self, GeometryError> {
        if vertices.len() != kind.vertex_count() {
            return Err(GeometryError::VertexCount {
                kind,
                expected: kind.vertex_count(),
                got: vertices.len(),
            });
        }
        Ok(Self { vertices, kind })
    }

    /// Axis-aligned box from corner coordinates, vertices in clockwise order
    /// starting at the top-left.
    pub fn from_box(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self {
            vertices: vec![
                PointF::new(x0, y0),
                PointF::new(x1, y0),
                PointF::new(x1, y1),
                PointF::new(x0, y1),
            ],
            kind: PolyKind::Box4,
        }
    }

    pub fn vertices(&self) -> &[PointF] {
        &self.vertices
    }

    pub fn kind(&self) -> PolyKind {
        self.kind
    }

    /// Vertex-mean centroid. For an axis-aligned box this is the box center.
    pub fn centroid(&self) -> PointF {
        let n = self.vertices.len() as f64;
        let (sx, sy) = self
            .vertices
            .iter()
            .fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
        PointF::new(sx / n, sy / n)
    }

    /// Checks every vertex lies inside the extent (inclusive bounds).
    pub fn validate_in_extent(&self, extent: ImageExtent) -> Result<(), GeometryError> {
        for v in &self.vertices {
            if v.x < 0.0 || v.x > extent.width as f64 {
                return Err(GeometryError::OutOfExtent {
                    axis: Axis::X,
                    value: v.x,
                    max: extent.width as f64,
                });
            }
            if v.y < 0.0 || v.y > extent.height as f64 {
                return Err(GeometryError::OutOfExtent {
                    axis: Axis::Y,
                    value: v.y,
                    max: extent.height as f64,
                });
            }
        }
        Ok(())
    }
}

fn quantize_axis(value: f64, size: f64, n_bins: u32, axis: Axis) -> Result<u32, GeometryError> {
    if value < 0.0 || value > size {
        return Err(GeometryError::OutOfExtent {
            axis,
            value,
            max: size,
        });
    }
    let bin = (value / size * n_bins as f64).floor() as u32;
    Ok(bin.min(n_bins - 1))
}

/// Quantize a continuous pixel point into bin space.
///
/// `bin = min(floor(coord / size * n_bins), n_bins - 1)` per axis. Points on
/// the far edge of the extent clamp into the last bin.
pub fn quantize(
    p: PointF,
    extent: ImageExtent,
    n_bins: u32,
) -> Result<QuantizedPoint, GeometryError> {
    if n_bins < 2 {
        return Err(GeometryError::BinCount(n_bins));
    }
    let x_bin = quantize_axis(p.x, extent.width as f64, n_bins, Axis::X)?;
    let y_bin = quantize_axis(p.y, extent.height as f64, n_bins, Axis::Y)?;
    Ok(QuantizedPoint { x_bin, y_bin })
}

/// Map a quantized point back to the continuous center of its bin.
pub fn dequantize(
    q: QuantizedPoint,
    extent: ImageExtent,
    n_bins: u32,
) -> Result<PointF, GeometryError> {
    if n_bins < 2 {
        return Err(GeometryError::BinCount(n_bins));
    }
    if q.x_bin >= n_bins || q.y_bin >= n_bins {
        return Err(GeometryError::BinOutOfRange {
            x_bin: q.x_bin,
            y_bin: q.y_bin,
            n_bins,
        });
    }
    Ok(PointF::new(
        (q.x_bin as f64 + 0.5) * extent.width as f64 / n_bins as f64,
        (q.y_bin as f64 + 0.5) * extent.height as f64 / n_bins as f64,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXTENT: ImageExtent = ImageExtent {
        width: 1000,
        height: 1000,
    };

    #[test]
    fn quantize_origin() {
        let q = quantize(PointF::new(0.0, 0.0), EXTENT, 1000).unwrap();
        assert_eq!(q, QuantizedPoint::new(0, 0));
    }

    #[test]
    fn quantize_clamps_at_upper_edge() {
        let q = quantize(PointF::new(999.999, 999.999), EXTENT, 1000).unwrap();
        assert_eq!(q, QuantizedPoint::new(999, 999));
        // exactly on the extent edge is valid and clamps into the last bin
        let q = quantize(PointF::new(1000.0, 1000.0), EXTENT, 1000).unwrap();
        assert_eq!(q, QuantizedPoint::new(999, 999));
    }

    #[test]
    fn quantize_interior() {
        let q = quantize(PointF::new(500.0, 250.0), EXTENT, 1000).unwrap();
        assert_eq!(q, QuantizedPoint::new(500, 250));
    }

    #[test]
    fn quantize_rejects_out_of_extent() {
        let err = quantize(PointF::new(-1.0, 10.0), EXTENT, 1000).unwrap_err();
        assert!(matches!(err, GeometryError::OutOfExtent { axis: Axis::X, .. }));
        let err = quantize(PointF::new(10.0, 1000.5), EXTENT, 1000).unwrap_err();
        assert!(matches!(err, GeometryError::OutOfExtent { axis: Axis::Y, .. }));
    }

    #[test]
    fn dequantize_bin_centers() {
        let p = dequantize(QuantizedPoint::new(0, 0), EXTENT, 1000).unwrap();
        assert_eq!(p, PointF::new(0.5, 0.5));
        let p = dequantize(QuantizedPoint::new(999, 999), EXTENT, 1000).unwrap();
        assert_eq!(p, PointF::new(999.5, 999.5));
        let wide = ImageExtent::new(2000, 1000).unwrap();
        let p = dequantize(QuantizedPoint::new(500, 250), wide, 1000).unwrap();
        assert_eq!(p, PointF::new(1001.0, 250.5));
    }

    #[test]
    fn round_trip_within_half_bin() {
        let mut rng = crate::prompting::PromptRng::new(11);
        for _ in 0..2000 {
            let extent = ImageExtent::new(
                1 + rng.range_u32(0, 1999),
                1 + rng.range_u32(0, 1999),
            )
            .unwrap();
            let n_bins = 2 + rng.range_u32(0, 1498);
            let p = PointF::new(
                rng.uniform() * extent.width as f64,
                rng.uniform() * extent.height as f64,
            );
            let q = quantize(p, extent, n_bins).unwrap();
            let back = dequantize(q, extent, n_bins).unwrap();
            let half_bin_x = extent.width as f64 / n_bins as f64 / 2.0;
            let half_bin_y = extent.height as f64 / n_bins as f64 / 2.0;
            assert!((back.x - p.x).abs() <= half_bin_x + 1e-9, "{p:?} {q:?} {back:?}");
            assert!((back.y - p.y).abs() <= half_bin_y + 1e-9);
            // quantize(dequantize(q)) is the identity on bins
            assert_eq!(quantize(back, extent, n_bins).unwrap(), q);
        }
    }

    #[test]
    fn quantize_is_monotone_in_x() {
        let mut rng = crate::prompting::PromptRng::new(7);
        for _ in 0..2000 {
            let a = rng.uniform() * 1000.0;
            let b = rng.uniform() * 1000.0;
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let qa = quantize(PointF::new(lo, 0.0), EXTENT, 1000).unwrap();
            let qb = quantize(PointF::new(hi, 0.0), EXTENT, 1000).unwrap();
            assert!(qa.x_bin <= qb.x_bin);
        }
    }

    #[test]
    fn box_centroid() {
        let b = PolygonGeom::from_box(0.0, 0.0, 99.0, 49.0);
        assert_eq!(b.centroid(), PointF::new(49.5, 24.5));
    }

    #[test]
    fn polygon_vertex_count_enforced() {
        let err = PolygonGeom::new(vec![PointF::new(0.0, 0.0)], PolyKind::Box4).unwrap_err();
        assert!(matches!(err, GeometryError::VertexCount { .. }));
    }
}
