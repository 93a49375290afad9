//! Side-by-side image panels: one row per kept triple, columns input /
//! output / target, separated by white gutters.

use std::path::Path;

use super::protocol::Panel;
use crate::{save_image, BitDepth, Error, Image, Result, Scalar};

pub const GUTTER: usize = 4;

/// Tiles `rows` of equally-sized images into one picture.
pub fn tile<T: Scalar>(rows: &[Vec<&Image<T>>], gutter: usize) -> Result<Image<T>> {
    let first = rows
        .first()
        .and_then(|r| r.first())
        .ok_or_else(|| Error::Shape("nothing to tile".into()))?;
    let (c, h, w) = first.dims();
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let height = rows.len() * h + (rows.len() + 1) * gutter;
    let width = cols * w + (cols + 1) * gutter;
    let mut out = Image::filled(c, height, width, T::one());
    for (ri, row) in rows.iter().enumerate() {
        for (ci, img) in row.iter().enumerate() {
            if img.dims() != (c, h, w) {
                return Err(Error::Shape(format!(
                    "grid cell {:?} differs from {:?}",
                    img.dims(),
                    (c, h, w)
                )));
            }
            let (y0, x0) = (gutter + ri * (h + gutter), gutter + ci * (w + gutter));
            for ch in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        out.set(ch, y0 + y, x0 + x, img.get(ch, y, x));
                    }
                }
            }
        }
    }
    Ok(out)
}

pub fn panel_grid<T: Scalar>(panels: &[Panel<T>]) -> Result<Image<T>> {
    let rows: Vec<Vec<&Image<T>>> = panels
        .iter()
        .map(|p| vec![&p.input, &p.output, &p.target])
        .collect();
    tile(&rows, GUTTER)
}

/// Writes the panel grid as an 8-bit PNG; values are clamped to [0, 1].
pub fn save_panel_grid<T: Scalar>(panels: &[Panel<T>], path: impl AsRef<Path>) -> Result<()> {
    let grid = panel_grid(panels)?.map(|v| v.max(T::zero()).min(T::one()));
    save_image(&grid, path, BitDepth::Eight)
}
