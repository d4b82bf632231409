//! Affine pixel/world georeferencing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Affine mapping between pixel indices and horizontal world coordinates.
///
/// The origin anchors the CENTER of pixel (0,0), matching world-file
/// semantics. `y_scale` is typically negative for north-up rasters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoTransform {
    /// World x of the center of pixel (0,0), meters.
    pub x_origin: f64,
    /// World y of the center of pixel (0,0), meters.
    pub y_origin: f64,
    /// Meters per pixel along u (> 0).
    pub x_scale: f64,
    /// Meters per pixel along v (< 0 for north-up).
    pub y_scale: f64,
    /// Rotation terms, usually 0.
    pub x_skew: f64,
    pub y_skew: f64,
}

impl GeoTransform {
    pub fn new(x_origin: f64, y_origin: f64, x_scale: f64, y_scale: f64) -> Self {
        GeoTransform {
            x_origin,
            y_origin,
            x_scale,
            y_scale,
            x_skew: 0.0,
            y_skew: 0.0,
        }
    }

    /// North-up square-cell transform, the common DSM case.
    pub fn north_up(x_origin: f64, y_origin: f64, gsd: f64) -> Self {
        GeoTransform::new(x_origin, y_origin, gsd, -gsd)
    }

    /// Determinant of the 2x2 scale/skew matrix.
    pub fn det(&self) -> f64 {
        self.x_scale * self.y_scale - self.x_skew * self.y_skew
    }

    pub fn is_invertible(&self) -> bool {
        self.det() != 0.0 && self.det().is_finite()
    }

    /// Ground sampling distance used for pixel-radius bounds: the finer of
    /// the two axis scales, so a world radius converted with it always
    /// covers at least as many pixels as either axis needs.
    pub fn min_abs_scale(&self) -> f64 {
        self.x_scale.abs().min(self.y_scale.abs())
    }

    /// World-file line order: x_scale, y_skew, x_skew, y_scale, x_origin, y_origin.
    pub fn to_world_file_params(&self) -> [f64; 6] {
        [
            self.x_scale,
            self.y_skew,
            self.x_skew,
            self.y_scale,
            self.x_origin,
            self.y_origin,
        ]
    }

    pub fn from_world_file_params(p: [f64; 6]) -> Self {
        GeoTransform {
            x_scale: p[0],
            y_skew: p[1],
            x_skew: p[2],
            y_scale: p[3],
            x_origin: p[4],
            y_origin: p[5],
        }
    }
}

/// Pixel (u,v) plus height to world coordinates. `u`, `v` may be fractional.
pub fn uv_to_world(u: f64, v: f64, gt: &GeoTransform, h: f64) -> (f64, f64, f64) {
    // Sum the pixel-scale terms before adding the large origin so the
    // round trip stays within 1e-9 px even for UTM-sized origins.
    let x = gt.x_origin + (gt.x_scale * u + gt.x_skew * v);
    let y = gt.y_origin + (gt.y_skew * u + gt.y_scale * v);
    (x, y, h)
}

/// Exact inverse affine of [`uv_to_world`]; the caller decides rounding.
pub fn world_to_uv(x: f64, y: f64, gt: &GeoTransform) -> Result<(f64, f64)> {
    let det = gt.det();
    if det == 0.0 || !det.is_finite() {
        return Err(Error::SingularTransform);
    }
    let dx = x - gt.x_origin;
    let dy = y - gt.y_origin;
    let u = (gt.y_scale * dx - gt.x_skew * dy) / det;
    let v = (-gt.y_skew * dx + gt.x_scale * dy) / det;
    Ok((u, v))
}
