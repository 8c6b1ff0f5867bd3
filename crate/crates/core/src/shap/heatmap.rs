//! Heatmap exports: a long-format CSV and a diverging-colour PNG showing the
//! two images side by side (red = positive attribution, blue = negative).

use std::fmt::Write as _;
use std::path::Path;

use super::estimator::ExplanationMap;
use super::FeatureGrid;
use crate::error::{Error, Result};

/// CSV with columns `image_index,row,col,phi`.
pub fn heatmap_csv(map: &ExplanationMap, grid: &FeatureGrid) -> Result<String> {
    check(map, grid)?;
    let mut out = String::from("image_index,row,col,phi\n");
    for (f, phi) in map.phi.iter().enumerate() {
        let (img, r, c) = grid.locate(f);
        let _ = writeln!(out, "{img},{r},{c},{phi}");
    }
    Ok(out)
}

fn check(map: &ExplanationMap, grid: &FeatureGrid) -> Result<()> {
    if map.phi.len() != grid.feature_count() {
        return Err(Error::LengthMismatch(map.phi.len(), grid.feature_count()));
    }
    Ok(())
}

fn colour(v: f64) -> [u8; 3] {
    // v in [-1, 1]; white at 0
    let fade = (255.0 * (1.0 - v.abs())).round() as u8;
    if v > 0.0 {
        [255, fade, fade]
    } else if v < 0.0 {
        [fade, fade, 255]
    } else {
        [255, 255, 255]
    }
}

/// RGB raster with `px` pixels per cell and a `px`-wide white gutter.
/// Returns `(width, height, rgb bytes)`.
pub fn render_heatmap_png(map: &ExplanationMap, grid: &FeatureGrid, px: usize) -> Result<(u32, u32, Vec<u8>)> {
    check(map, grid)?;
    let px = px.max(1);
    let (rows, cols) = (grid.rows(), grid.cols());
    let width = (2 * cols + 1) * px;
    let height = rows * px;
    let scale = map.phi.iter().fold(0.0f64, |m, p| m.max(p.abs()));
    let mut buf = vec![255u8; width * height * 3];
    for (f, phi) in map.phi.iter().enumerate() {
        let (img, r, c) = grid.locate(f);
        let v = if scale > 0.0 { phi / scale } else { 0.0 };
        let rgb = colour(v);
        let x0 = (img * (cols + 1) + c) * px;
        for y in r * px..(r + 1) * px {
            for x in x0..x0 + px {
                let o = (y * width + x) * 3;
                buf[o..o + 3].copy_from_slice(&rgb);
            }
        }
    }
    Ok((width as u32, height as u32, buf))
}

pub fn write_heatmap_png(map: &ExplanationMap, grid: &FeatureGrid, px: usize, path: &Path) -> Result<()> {
    let (w, h, data) = render_heatmap_png(map, grid, px)?;
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(std::io::BufWriter::new(file), w, h);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let png_err = |e: png::EncodingError| match e {
        png::EncodingError::IoError(err) => Error::io(path, err),
        other => Error::InvalidArgument(format!("png encoding: {other}")),
    };
    let mut writer = enc.write_header().map_err(png_err)?;
    writer.write_image_data(&data).map_err(png_err)?;
    writer.finish().map_err(png_err)
}
