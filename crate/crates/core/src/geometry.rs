//! Axis-aligned box arithmetic and intersection-over-union.
//!
//! Boxes live in a continuous pixel coordinate space with a top-left image
//! origin. Nothing here rounds to integer pixels: normalized annotation
//! coordinates rarely land on the integer grid, so every downstream
//! computation (association, evaluation matching) works on sub-pixel values.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Axis-aligned bounding box: top-left corner plus extent, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("normalized value {name}={value} outside [0, 1]")]
    OutOfRange { name: &'static str, value: f64 },
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    /// Area in squared pixels; zero for degenerate boxes.
    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    /// Area of the overlap region between two boxes (zero when disjoint).
    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let ix = (self.right().min(other.right()) - self.x.max(other.x)).max(0.0);
        let iy = (self.bottom().min(other.bottom()) - self.y.max(other.y)).max(0.0);
        ix * iy
    }

    /// Intersection-over-union in `[0, 1]`.
    ///
    /// Defined as 0 when the union area is 0 (two degenerate boxes), so the
    /// value is always a real number and sorting on it stays total.
    pub fn iou(&self, other: &BBox) -> f64 {
        if self == other {
            // identical boxes score exactly 1; the interval arithmetic
            // below would lose that to rounding
            return if self.area() > 0.0 { 1.0 } else { 0.0 };
        }
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }
}

/// Convert a normalized center-format box (`cx`, `cy`, `w`, `h` as ratios of
/// the image size, the Darknet label convention) into pixel coordinates.
///
/// Returns `OutOfRange` when any ratio falls outside `[0, 1]`.
pub fn from_normalized(
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
    img_w: f64,
    img_h: f64,
) -> Result<BBox, GeometryError> {
    for (name, value) in [("cx", cx), ("cy", cy), ("w", w), ("h", h)] {
        if !(0.0..=1.0).contains(&value) {
            return Err(GeometryError::OutOfRange { name, value });
        }
    }
    debug_assert!(img_w > 0.0 && img_h > 0.0);
    Ok(BBox {
        x: (cx - w / 2.0) * img_w,
        y: (cy - h / 2.0) * img_h,
        w: w * img_w,
        h: h * img_h,
    })
}

/// Inverse of [`from_normalized`]: pixel-space box back to normalized
/// center format `(cx, cy, w, h)`.
pub fn to_normalized(b: &BBox, img_w: f64, img_h: f64) -> (f64, f64, f64, f64) {
    debug_assert!(img_w > 0.0 && img_h > 0.0);
    (
        (b.x + b.w / 2.0) / img_w,
        (b.y + b.h / 2.0) / img_h,
        b.w / img_w,
        b.h / img_h,
    )
}
