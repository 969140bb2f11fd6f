//! Binary PGM (P5) images of grid fields, top row first.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, ImageReader};
use prunetrace_core::{Grid, IndicatorField, ScalarField};

use crate::error::CliError;

fn image_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Reads a bitmap that must match `grid` exactly; pixels above 127 are
/// inside.
pub fn read_indicator(path: &Path, grid: Grid) -> Result<IndicatorField, CliError> {
    let img = ImageReader::open(path)
        .map_err(|e| CliError::io(path, e))?
        .with_guessed_format()
        .map_err(|e| CliError::io(path, e))?
        .decode()
        .map_err(|e| image_err(path, e))?
        .into_luma8();
    let (w, h) = img.dimensions();
    if w as usize != grid.nx() || h as usize != grid.ny() {
        return Err(CliError::Config(format!(
            "{}: bitmap is {w}x{h} but the grid is {}x{}",
            path.display(),
            grid.nx(),
            grid.ny()
        )));
    }
    Ok(IndicatorField::from_fn(grid, |i, j| {
        img.get_pixel(i as u32, (grid.ny() - 1 - j) as u32).0[0] > 127
    }))
}

fn write_gray(
    path: &Path,
    grid: &Grid,
    pixel: impl Fn(usize, usize) -> u8,
) -> Result<(), CliError> {
    let (w, h) = (grid.nx(), grid.ny());
    let mut buf = Vec::with_capacity(w * h);
    for row in 0..h {
        let j = h - 1 - row;
        for i in 0..w {
            buf.push(pixel(i, j));
        }
    }
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    PnmEncoder::new(BufWriter::new(file))
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(&buf, w as u32, h as u32, ExtendedColorType::L8)
        .map_err(|e| image_err(path, e))
}

/// Material 255, void 0.
pub fn write_indicator(path: &Path, field: &IndicatorField) -> Result<(), CliError> {
    write_gray(
        path,
        field.grid(),
        |i, j| if field.get(i, j) { 255 } else { 0 },
    )
}

/// Min-max normalised to 0..=255; a constant field is written as 0.
pub fn write_scalar(path: &Path, field: &ScalarField) -> Result<(), CliError> {
    let (lo, hi) = (field.min(), field.max());
    let span = hi - lo;
    write_gray(path, field.grid(), |i, j| {
        if span > 0.0 {
            ((field.get(i, j) - lo) / span * 255.0).round() as u8
        } else {
            0
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indicator_round_trip_keeps_orientation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.pgm");
        let g = Grid::new(5, 3, 1.0).unwrap();
        let f = IndicatorField::from_fn(g, |i, j| i == 0 && j == 0 || i == 4 && j == 2);
        write_indicator(&p, &f).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert!(bytes.starts_with(b"P5"));
        // last pixel of the file is the bottom-right cell, the first of the
        // raster is the top-left
        let raster = &bytes[bytes.len() - 15..];
        assert_eq!(raster[4], 255);
        assert_eq!(raster[10], 255);
        assert_eq!(read_indicator(&p, g).unwrap(), f);
    }

    #[test]
    fn grid_mismatch_is_a_dimension_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.pgm");
        write_indicator(&p, &IndicatorField::full(Grid::new(4, 4, 1.0).unwrap())).unwrap();
        let err = read_indicator(&p, Grid::new(5, 4, 1.0).unwrap()).unwrap_err();
        assert!(err.to_string().contains("4x4"));
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn scalar_fields_are_normalised() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.pgm");
        let g = Grid::new(3, 1, 1.0).unwrap();
        write_scalar(&p, &ScalarField::new(g, vec![-1.0, 0.0, 1.0]).unwrap()).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[bytes.len() - 3..], &[0, 128, 255]);
    }
}
