//! Representative point of a street face.
//!
//! The point is taken halfway along the polyline, measuring length in planar
//! degree space. Faces are roughly one block long, so the anisotropy of
//! degrees at Brazilian latitudes moves the point by centimetres, well below
//! the postal-code level uncertainty of the allocation itself.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Coord, FaceGeometry};

pub type RepresentativePoint = Coord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum DegenerateGeometry {
    #[error("polyline has fewer than two vertices")]
    TooFewVertices,
    #[error("polyline has zero length")]
    ZeroLength,
}

/// How a face's representative point was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointSource {
    Midpoint,
    /// The face is a single point.
    SinglePoint,
    /// The polyline had no usable length; its first vertex stands in.
    FirstVertex,
}

/// Point at half the cumulative length of `vertices`, interpolated linearly
/// on the segment containing it.
pub fn midpoint_along(vertices: &[Coord]) -> Result<RepresentativePoint, DegenerateGeometry> {
    if vertices.len() < 2 {
        return Err(DegenerateGeometry::TooFewVertices);
    }
    let lengths: Vec<f64> = vertices
        .windows(2)
        .map(|w| (w[1].lon - w[0].lon).hypot(w[1].lat - w[0].lat))
        .collect();
    let total: f64 = lengths.iter().sum();
    if !total.is_finite() || total <= 0.0 {
        return Err(DegenerateGeometry::ZeroLength);
    }
    let half = total / 2.0;

    // Walk from whichever end reaches the half-length first so that a
    // reversed polyline takes the mirror-image path through the arithmetic.
    let mut from_start = 0.0;
    let mut split = 0;
    while split < lengths.len() && from_start + lengths[split] < half {
        from_start += lengths[split];
        split += 1;
    }
    let split = split.min(lengths.len() - 1);
    let from_end: f64 = lengths[split + 1..].iter().rev().sum();
    let len = lengths[split];
    let (a, b) = (vertices[split], vertices[split + 1]);
    if len == 0.0 {
        return Ok(a);
    }
    let before = half - from_start;
    let after = half - from_end;
    // interpolate from the nearer segment end
    Ok(if before <= after {
        lerp(a, b, before / len)
    } else {
        lerp(b, a, after / len)
    })
}

fn lerp(a: Coord, b: Coord, t: f64) -> Coord {
    let t = t.clamp(0.0, 1.0);
    Coord::new(a.lon + (b.lon - a.lon) * t, a.lat + (b.lat - a.lat) * t)
}

/// Representative point for any face geometry, never failing: degenerate
/// polylines fall back to their first vertex.
pub fn representative_point(geometry: &FaceGeometry) -> (RepresentativePoint, PointSource) {
    match geometry {
        FaceGeometry::Point(p) => (*p, PointSource::SinglePoint),
        FaceGeometry::Line(v) => match midpoint_along(v) {
            Ok(p) => (p, PointSource::Midpoint),
            Err(_) => (v[0], PointSource::FirstVertex),
        },
    }
}

/// Distance in degree space from `p` to the closest point of the polyline.
pub fn distance_to_polyline(p: Coord, vertices: &[Coord]) -> f64 {
    if vertices.len() == 1 {
        return (p.lon - vertices[0].lon).hypot(p.lat - vertices[0].lat);
    }
    vertices
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            let (dx, dy) = (b.lon - a.lon, b.lat - a.lat);
            let len2 = dx * dx + dy * dy;
            let t = if len2 == 0.0 {
                0.0
            } else {
                (((p.lon - a.lon) * dx + (p.lat - a.lat) * dy) / len2).clamp(0.0, 1.0)
            };
            (p.lon - (a.lon + t * dx)).hypot(p.lat - (a.lat + t * dy))
        })
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min_lon: f64,
    pub min_lat: f64,
    pub max_lon: f64,
    pub max_lat: f64,
}

impl BoundingBox {
    pub fn contains(&self, p: Coord) -> bool {
        (self.min_lon..=self.max_lon).contains(&p.lon)
            && (self.min_lat..=self.max_lat).contains(&p.lat)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Ok,
    /// Valid coordinates outside the municipality's bounding box.
    Warn,
    /// Non-finite or outside WGS84 bounds.
    Invalid,
}

pub fn validate_coords(p: RepresentativePoint, municipality_bbox: Option<&BoundingBox>) -> Verdict {
    if !p.is_valid() {
        return Verdict::Invalid;
    }
    match municipality_bbox {
        Some(bbox) if !bbox.contains(p) => Verdict::Warn,
        _ => Verdict::Ok,
    }
}
