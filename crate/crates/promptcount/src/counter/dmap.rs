//! Density map files and heatmap rendering.
//!
//! On-disk format: ASCII header `DMAP1 H W\n` followed by H·W little-endian
//! 32-bit floats in row-major order. The PNG export max-normalizes the map
//! and applies a viridis-style colormap for human inspection; it is lossy
//! and never read back.

use crate::domain::DensityMap;
use crate::error::{Error, Result};
use ndarray::Array2;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

/// Serializes a density map in the `DMAP1` format.
pub fn density_map_bytes(map: &DensityMap) -> Vec<u8> {
    let mut out = format!("DMAP1 {} {}\n", map.height(), map.width()).into_bytes();
    for &v in map.grid().iter() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

/// Writes a density map in the `DMAP1` format.
pub fn save_density_map(path: impl AsRef<Path>, map: &DensityMap) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);
    w.write_all(&density_map_bytes(map)).map_err(io_err)?;
    w.flush().map_err(io_err)
}

/// Reads a `DMAP1` file back into a density map.
pub fn load_density_map(path: impl AsRef<Path>) -> Result<DensityMap> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::format("density map", path, "missing header line"))?;
    let header = std::str::from_utf8(&bytes[..newline])
        .map_err(|_| Error::format("density map", path, "header is not UTF-8"))?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some("DMAP1") {
        return Err(Error::format("density map", path, "bad magic: expected DMAP1"));
    }
    let parse = |s: Option<&str>, what: &str| -> Result<usize> {
        s.and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::format("density map", path, format!("bad {what} in header")))
    };
    let h = parse(parts.next(), "height")?;
    let w = parse(parts.next(), "width")?;
    let mut r = &bytes[newline + 1..];
    let mut values = Vec::with_capacity(h * w);
    let mut buf = [0u8; 4];
    for _ in 0..h * w {
        r.read_exact(&mut buf)
            .map_err(|_| Error::format("density map", path, "truncated payload"))?;
        values.push(f64::from(f32::from_le_bytes(buf)));
    }
    if !r.is_empty() {
        return Err(Error::format(
            "density map",
            path,
            format!("{} trailing bytes", r.len()),
        ));
    }
    let grid = Array2::from_shape_vec((h, w), values).expect("h*w values read");
    DensityMap::new(grid)
}

// viridis colormap anchors, sampled uniformly over [0, 1]
const VIRIDIS: [[f32; 3]; 9] = [
    [0.267, 0.005, 0.329],
    [0.283, 0.141, 0.458],
    [0.254, 0.265, 0.530],
    [0.207, 0.372, 0.553],
    [0.164, 0.471, 0.558],
    [0.128, 0.567, 0.551],
    [0.135, 0.659, 0.518],
    [0.267, 0.749, 0.441],
    [0.993, 0.906, 0.144],
];

fn viridis(t: f32) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0) * (VIRIDIS.len() - 1) as f32;
    let i = (t.floor() as usize).min(VIRIDIS.len() - 2);
    let f = t - i as f32;
    let mut rgb = [0u8; 3];
    for c in 0..3 {
        let v = VIRIDIS[i][c] * (1.0 - f) + VIRIDIS[i + 1][c] * f;
        rgb[c] = (v * 255.0).round() as u8;
    }
    rgb
}

/// Renders a max-normalized heatmap PNG of the map.
pub fn save_heatmap_png(path: impl AsRef<Path>, map: &DensityMap) -> Result<()> {
    let path = path.as_ref();
    let max = map.grid().iter().fold(0.0f64, |a, &b| a.max(b));
    let mut img = image::RgbImage::new(map.width() as u32, map.height() as u32);
    for (r, row) in map.grid().rows().into_iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            let t = if max > 0.0 { (v / max) as f32 } else { 0.0 };
            img.put_pixel(c as u32, r as u32, image::Rgb(viridis(t)));
        }
    }
    img.save(path).map_err(|e| Error::image(path, e))
}
