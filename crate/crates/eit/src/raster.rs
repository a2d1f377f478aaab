//! Grayscale rasterization of reconstructed conductivity changes.
//!
//! This is a plot output for visual inspection, not a processing stage:
//! nothing downstream consumes the pixels. Each element is painted with a
//! constant shade by barycentric point-in-triangle tests against pixel
//! centers, so the image is a piecewise-constant picture of the field the
//! way the solver actually represents it, with no interpolation invented
//! in between.
//!
//! Shading is linear in the conductivity change: zero maps to white and
//! the deepest drop in the vector maps to black. A vector of zeros
//! therefore renders as a uniform white image, and the scale is relative
//! per image (the deepest value is recorded on the [`Raster`] so callers
//! can annotate it).

use crate::error::{Error, Result};
use crate::geom::{orient2d, Point2};
use crate::mesh::Mesh;

/// Default image side in pixels. Plenty for a mesh of a few thousand
/// elements; one element covers hundreds of pixels.
pub const DEFAULT_SIDE: usize = 512;

/// Slack for the point-in-triangle edge tests, so pixel centers that land
/// exactly on a shared edge are claimed by a neighbor instead of falling
/// through the cracks. Coordinates are O(1) meters, so an absolute
/// tolerance works.
const EDGE_TOL: f64 = 1e-12;

/// A square grayscale image: row-major bytes, row 0 at the top, 255 white.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    side: usize,
    pixels: Vec<u8>,
    deepest: f64,
    origin: Point2,
    pixel_size: (f64, f64),
}

impl Raster {
    pub fn side(&self) -> usize {
        self.side
    }

    /// Row-major pixel bytes, `side * side` of them.
    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    /// The conductivity change mapped to black. Zero when the image is
    /// uniform background (nothing to normalize against).
    pub fn deepest(&self) -> f64 {
        self.deepest
    }

    /// World coordinates of the center of pixel (row, col).
    pub fn pixel_center(&self, row: usize, col: usize) -> Point2 {
        Point2::new(
            self.origin.x + (col as f64 + 0.5) * self.pixel_size.0,
            self.origin.y - (row as f64 + 0.5) * self.pixel_size.1,
        )
    }

    /// The first pixel (row, col) attaining the minimum gray level, or
    /// `None` for a uniform-background image.
    pub fn darkest_pixel(&self) -> Option<(usize, usize)> {
        if self.deepest == 0.0 {
            return None;
        }
        let (idx, _) = self
            .pixels
            .iter()
            .enumerate()
            .min_by_key(|&(i, &g)| (g, i))?;
        Some((idx / self.side, idx % self.side))
    }
}

/// Rasterize a per-element conductivity change onto a `side` x `side`
/// grayscale grid spanning the mesh bounding box.
///
/// Elements are painted in index order and the first element claiming a
/// pixel keeps it, so the output is a pure function of its inputs. Pixels
/// outside every element stay background white.
pub fn rasterize(delta_sigma: &[f64], mesh: &Mesh, side: usize) -> Result<Raster> {
    if delta_sigma.len() != mesh.n_elements() {
        return Err(Error::ShapeMismatch(format!(
            "vector has {} entries for a mesh of {} elements",
            delta_sigma.len(),
            mesh.n_elements()
        )));
    }
    if side == 0 {
        return Err(Error::InvalidConfig("image side must be positive".into()));
    }
    if delta_sigma.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig(
            "conductivity change vector contains non-finite values".into(),
        ));
    }

    let (mut xmin, mut ymin) = (f64::INFINITY, f64::INFINITY);
    let (mut xmax, mut ymax) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for k in 0..mesh.n_elements() {
        for p in mesh.element_points(k) {
            xmin = xmin.min(p.x);
            ymin = ymin.min(p.y);
            xmax = xmax.max(p.x);
            ymax = ymax.max(p.y);
        }
    }
    let sx = (xmax - xmin) / side as f64;
    let sy = (ymax - ymin) / side as f64;

    let deepest = delta_sigma.iter().copied().fold(0.0f64, f64::min);
    let shade = |v: f64| -> u8 {
        if deepest == 0.0 {
            return u8::MAX;
        }
        let t = (v / deepest).clamp(0.0, 1.0);
        u8::MAX - (t * f64::from(u8::MAX)).round() as u8
    };

    let mut raster = Raster {
        side,
        pixels: vec![u8::MAX; side * side],
        deepest,
        origin: Point2::new(xmin, ymax),
        pixel_size: (sx, sy),
    };
    let mut claimed = vec![false; side * side];

    for k in 0..mesh.n_elements() {
        let [a, b, c] = mesh.element_points(k);
        let gray = shade(delta_sigma[k]);

        let ex = [a.x, b.x, c.x];
        let ey = [a.y, b.y, c.y];
        let col_lo = pixel_range_start(ex.iter().copied().fold(f64::INFINITY, f64::min), xmin, sx);
        let col_hi =
            pixel_range_end(ex.iter().copied().fold(f64::NEG_INFINITY, f64::max), xmin, sx, side);
        // Rows grow downward while y grows upward, so the element's top
        // edge bounds the starting row.
        let row_lo =
            pixel_range_start(ymax - ey.iter().copied().fold(f64::NEG_INFINITY, f64::max), 0.0, sy);
        let row_hi =
            pixel_range_end(ymax - ey.iter().copied().fold(f64::INFINITY, f64::min), 0.0, sy, side);

        for row in row_lo..row_hi {
            for col in col_lo..col_hi {
                let idx = row * side + col;
                if claimed[idx] {
                    continue;
                }
                let p = raster.pixel_center(row, col);
                if orient2d(a, b, p) >= -EDGE_TOL
                    && orient2d(b, c, p) >= -EDGE_TOL
                    && orient2d(c, a, p) >= -EDGE_TOL
                {
                    claimed[idx] = true;
                    raster.pixels[idx] = gray;
                }
            }
        }
    }

    Ok(raster)
}

/// First pixel whose center could lie at or beyond `coord` along one axis.
fn pixel_range_start(coord: f64, axis_min: f64, step: f64) -> usize {
    let c = ((coord - axis_min) / step - 0.5).floor();
    if c.is_sign_negative() {
        0
    } else {
        c as usize
    }
}

/// One past the last pixel whose center could lie at or before `coord`.
fn pixel_range_end(coord: f64, axis_min: f64, step: f64, side: usize) -> usize {
    let c = ((coord - axis_min) / step + 0.5).ceil();
    if c.is_sign_negative() {
        0
    } else {
        (c as usize + 1).min(side)
    }
}
