//! Structured coarse mesh of the square panel for reconstruction.
//!
//! The axis is partitioned at every electrode endpoint (multiples of one
//! ninth of the side), each electrode interval is split at its midpoint, and
//! the central gap is split once more to keep the partition symmetric. Each
//! grid cell is divided into four triangles around its center node. That
//! yields 14 intervals per axis, 784 elements, and two boundary edges per
//! electrode, with the finest spacing along the electrodes where the current
//! density concentrates.

use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::geom::Point2;
use crate::mesh::Mesh;

/// Axis partition for a side of length 0.9, before scaling.
const BREAKPOINTS: [f64; 15] = [
    0.0, 0.1, 0.15, 0.2, 0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6, 0.7, 0.75, 0.8, 0.9,
];
/// Interval indices (into the 14 intervals) covered by each of the four
/// electrodes along one side, in ascending-coordinate order.
const ELECTRODE_INTERVALS: [[usize; 2]; 4] = [[1, 2], [4, 5], [8, 9], [11, 12]];

const N: usize = BREAKPOINTS.len(); // grid points per axis
const CELLS: usize = N - 1;

/// Builds the reconstruction mesh for the configured panel.
///
/// Supports the 16-electrode layout with electrode width equal to one ninth
/// of the domain size; other layouts are rejected.
pub fn reconstruction_mesh(config: &SimConfig) -> Result<Mesh> {
    config.validate()?;
    if config.n_electrodes != 16 {
        return Err(Error::InvalidConfig(format!(
            "structured panel mesh supports 16 electrodes, got {}",
            config.n_electrodes
        )));
    }
    if (config.electrode_width * 9.0 - config.domain_size).abs() > 1e-12 * config.domain_size {
        return Err(Error::InvalidConfig(
            "electrode width must be one ninth of the domain size".into(),
        ));
    }
    let scale = config.domain_size / 0.9;
    let bp: Vec<f64> = BREAKPOINTS.iter().map(|&b| b * scale).collect();

    // Grid corner nodes, row-major by y.
    let mut nodes = Vec::with_capacity(N * N + CELLS * CELLS);
    for iy in 0..N {
        for ix in 0..N {
            nodes.push(Point2::new(bp[ix], bp[iy]));
        }
    }
    let corner = |ix: usize, iy: usize| (iy * N + ix) as u32;
    // Cell center nodes.
    let center_base = nodes.len();
    for cy in 0..CELLS {
        for cx in 0..CELLS {
            nodes.push(Point2::new(
                (bp[cx] + bp[cx + 1]) / 2.0,
                (bp[cy] + bp[cy + 1]) / 2.0,
            ));
        }
    }
    let center = |cx: usize, cy: usize| (center_base + cy * CELLS + cx) as u32;

    // Four triangles per cell, fanned around the center, all counterclockwise.
    let mut elements = Vec::with_capacity(4 * CELLS * CELLS);
    for cy in 0..CELLS {
        for cx in 0..CELLS {
            let bl = corner(cx, cy);
            let br = corner(cx + 1, cy);
            let tr = corner(cx + 1, cy + 1);
            let tl = corner(cx, cy + 1);
            let c = center(cx, cy);
            elements.push([bl, br, c]);
            elements.push([br, tr, c]);
            elements.push([tr, tl, c]);
            elements.push([tl, bl, c]);
        }
    }

    // Boundary edges in counterclockwise traversal order starting at the
    // origin corner: bottom, right, top, left.
    let side_node = |side: usize, j: usize| -> u32 {
        match side {
            0 => corner(j, 0),
            1 => corner(N - 1, j),
            2 => corner(N - 1 - j, N - 1),
            _ => corner(0, N - 1 - j),
        }
    };
    let mut boundary_edges = Vec::with_capacity(4 * CELLS);
    for side in 0..4 {
        for j in 0..CELLS {
            boundary_edges.push([side_node(side, j), side_node(side, j + 1)]);
        }
    }

    // Electrode numbering runs counterclockwise from the bottom-left-most
    // electrode. The palindromic axis partition makes the per-side interval
    // offsets identical in traversal order on every side.
    let mut electrodes = Vec::with_capacity(16);
    for side in 0..4 {
        for intervals in ELECTRODE_INTERVALS {
            electrodes.push(intervals.iter().map(|&i| (side * CELLS + i) as u32).collect());
        }
    }

    let mesh = Mesh { nodes, elements, boundary_edges, electrodes };
    debug_assert!(mesh.validate().is_ok());
    Ok(mesh)
}
