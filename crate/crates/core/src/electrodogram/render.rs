use std::path::Path;

use image::{GrayImage, Luma};

use super::Electrodogram;
use crate::error::{Error, Result};

/// Left and bottom margins holding the axes.
const MARGIN: u32 = 12;
const BACKGROUND: u8 = 255;
const AXIS: u8 = 0;

/// Draws one electrode per row, apex at the bottom, time along x. Each
/// pulse darkens its row over the pulse's column, darker for larger
/// amplitudes; columns shared by several pulses keep the darkest mark.
pub fn render_electrodogram(eg: &Electrodogram, path: impl AsRef<Path>, width: u32, height: u32) -> Result<()> {
    let n_e = eg.config.n_electrodes as u32;
    if width <= MARGIN + 1 || height <= MARGIN + n_e {
        return Err(Error::config(format!(
            "image of {width}x{height} is too small for {n_e} electrodes"
        )));
    }
    let mut img = GrayImage::from_pixel(width, height, Luma([BACKGROUND]));
    let plot_w = width - MARGIN - 1;
    let plot_h = height - MARGIN;
    for y in 0..plot_h {
        img.put_pixel(MARGIN, y, Luma([AXIS]));
    }
    for x in MARGIN..width {
        img.put_pixel(x, plot_h, Luma([AXIS]));
    }

    let row_h = plot_h as f64 / n_e as f64;
    let (t, c) = (eg.config.t_level, eg.config.c_level);
    let duration = eg.duration.max(f64::MIN_POSITIVE);
    for p in &eg.pulses {
        let level = ((p.amplitude - t) / (c - t)).clamp(0.0, 1.0);
        let shade = (255.0 * (0.75 - 0.75 * level)).round() as u8;
        let x = MARGIN + 1 + ((p.time / duration * plot_w as f64) as u32).min(plot_w - 1);
        let row = n_e - p.electrode as u32;
        let y0 = (row as f64 * row_h).round() as u32;
        let y1 = (((row + 1) as f64 * row_h).round() as u32).min(plot_h);
        for y in y0..y1 {
            let px = img.get_pixel_mut(x, y);
            px.0[0] = px.0[0].min(shade);
        }
    }
    img.save(path).map_err(|e| Error::Image(e.to_string()))
}
