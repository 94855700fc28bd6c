use crate::error::{Error, Result};
use crate::types::{IntensityFrame, Micros};

/// Vignetting gain for a pixel `distance_px` away from the image center,
/// `max(sum c_i F^i, 0)` with `F = distance_px / width`.
pub fn shading_gain(distance_px: f64, width: usize, coeffs: &[f64]) -> f64 {
    let f = distance_px / width as f64;
    // Horner
    let g = coeffs.iter().rev().fold(0.0, |acc, &c| acc * f + c);
    g.max(0.0)
}

/// Per-pixel gains for a `width` x `height` sensor. The center is the
/// midpoint between pixel centers, `((w - 1) / 2, (h - 1) / 2)`.
pub fn shading_gains(width: usize, height: usize, coeffs: &[f64]) -> Result<Vec<f64>> {
    if coeffs.is_empty() {
        return Err(Error::config("lens_shading_coeffs", "needs at least one coefficient"));
    }
    let cx = (width as f64 - 1.0) / 2.0;
    let cy = (height as f64 - 1.0) / 2.0;
    Ok((0..width * height)
        .map(|i| {
            let dx = (i % width) as f64 - cx;
            let dy = (i / width) as f64 - cy;
            shading_gain(dx.hypot(dy), width, coeffs)
        })
        .collect())
}

pub fn apply_lens_shading(frame: &IntensityFrame, coeffs: &[f64]) -> Result<IntensityFrame> {
    let gains = shading_gains(frame.width(), frame.height(), coeffs)?;
    Ok(frame.map(|i, v| v * gains[i]))
}

/// Natural-log intensity frame. Values may be negative.
#[derive(Debug, Clone, PartialEq)]
pub struct LogFrame {
    pub width: usize,
    pub height: usize,
    pub timestamp: Micros,
    pub data: Vec<f64>,
}

#[inline]
pub fn log_intensity(l: f64, log_epsilon: f64) -> f64 {
    (l + log_epsilon).ln()
}

pub fn to_log_intensity(frame: &IntensityFrame, log_epsilon: f64) -> LogFrame {
    LogFrame {
        width: frame.width(),
        height: frame.height(),
        timestamp: frame.timestamp(),
        data: frame
            .data()
            .iter()
            .map(|&l| log_intensity(l, log_epsilon))
            .collect(),
    }
}
