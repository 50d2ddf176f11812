//! Grid downsampling by nearest-index selection along each axis.

use crate::error::{Error, Result};

/// Indices of `dst` evenly spaced samples out of `src` grid lines; the first
/// and last line are always kept, so boundary (grasp) nodes survive.
pub fn downsample_indices(src: usize, dst: usize) -> Result<Vec<usize>> {
    if dst > src {
        return Err(Error::InvalidGeometry(format!(
            "cannot downsample {src} lines to {dst}"
        )));
    }
    if dst < 2 {
        return Err(Error::InvalidGeometry("need at least 2 lines".into()));
    }
    Ok((0..dst)
        .map(|k| ((k * (src - 1)) as f64 / (dst - 1) as f64).round() as usize)
        .collect())
}

/// Select a dst_rows×dst_cols node subset out of a rows×cols position grid.
pub fn downsample_positions(
    positions: &[[f64; 3]],
    rows: usize,
    cols: usize,
    dst_rows: usize,
    dst_cols: usize,
) -> Result<Vec<[f64; 3]>> {
    if positions.len() != rows * cols {
        return Err(Error::ShapeMismatch(format!(
            "{} positions for a {rows}x{cols} grid",
            positions.len()
        )));
    }
    let ri = downsample_indices(rows, dst_rows)?;
    let ci = downsample_indices(cols, dst_cols)?;
    let mut out = Vec::with_capacity(dst_rows * dst_cols);
    for &r in &ri {
        for &c in &ci {
            out.push(positions[r * cols + c]);
        }
    }
    Ok(out)
}
