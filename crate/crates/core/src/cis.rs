//! Frame-sensor model: rolling-shutter exposure, operation range and
//! 10-bit ADC noise, applied in that order.

use rayon::prelude::*;

use crate::config::CisConfig;
use crate::error::{Error, Result};
use crate::rng::{rng_for, Stage, StreamId};
use crate::source::{check_time_order, coverage_end, FrameSource};
use crate::types::{round_half_up_us, IntensityFrame, Micros};

pub const ADC_MAX: u16 = 1023;

/// One 10-bit output frame. `timestamp` marks the exposure start of row 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CisFrame {
    pub width: usize,
    pub height: usize,
    pub timestamp: Micros,
    pub data: Vec<u16>,
}

/// Real-valued digital numbers in `[0, 1023]`, before quantisation.
#[derive(Debug, Clone, PartialEq)]
pub struct DnFrame {
    pub width: usize,
    pub height: usize,
    pub timestamp: Micros,
    pub data: Vec<f64>,
}

/// Index of the source frame holding at time `t` (zero-order hold).
fn active_index<S: FrameSource + ?Sized>(source: &S, t: f64) -> usize {
    let (mut lo, mut hi) = (0, source.len());
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if source.timestamp(mid) as f64 <= t {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Averages the source over each row's exposure window. Row `r` integrates
/// `[start + r * readout, start + r * readout + exposure]`; a zero exposure
/// samples the frame active at the window start.
pub fn integrate_exposure<S: FrameSource + ?Sized>(
    source: &S,
    cfg: &CisConfig,
    frame_start: Micros,
) -> Result<IntensityFrame> {
    let (w, h) = (cfg.width, cfg.height);
    let n = source.len();
    let covered_start = if n == 0 { 0 } else { source.timestamp(0) };
    let covered_end = coverage_end(source);
    let window_start = frame_start as f64;
    let window_end = window_start + cfg.capture_span_us();
    let last_row_start = window_start + (h.saturating_sub(1)) as f64 * cfg.line_readout_time;
    let covered = n > 0
        && window_start >= covered_start as f64
        && if cfg.exposure_time > 0.0 {
            last_row_start + cfg.exposure_time <= covered_end as f64
        } else {
            last_row_start < covered_end as f64
        };
    if !covered {
        return Err(Error::Coverage {
            start_us: window_start,
            end_us: window_end,
            covered_start_us: covered_start,
            covered_end_us: covered_end,
        });
    }

    let first = active_index(source, window_start);
    let last = active_index(source, last_row_start + cfg.exposure_time);
    let frames = (first..=last)
        .map(|i| {
            let f = source.frame(i)?;
            f.check_dims(w, h)?;
            Ok(f)
        })
        .collect::<Result<Vec<_>>>()?;
    let hold_end = |i: usize| -> f64 {
        if i + 1 < n {
            source.timestamp(i + 1) as f64
        } else {
            covered_end as f64
        }
    };

    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(r, row)| {
        let a = window_start + r as f64 * cfg.line_readout_time;
        if cfg.exposure_time == 0.0 {
            let k = active_index(source, a) - first;
            row.copy_from_slice(frames[k].row(r));
            return;
        }
        let b = a + cfg.exposure_time;
        let mut weights = Vec::new();
        let mut i = active_index(source, a);
        loop {
            let lo = (source.timestamp(i) as f64).max(a);
            let hi = hold_end(i).min(b);
            if hi > lo {
                weights.push((i - first, (hi - lo) / cfg.exposure_time));
            }
            if hold_end(i) >= b || i + 1 >= n {
                break;
            }
            i += 1;
        }
        for (x, v) in row.iter_mut().enumerate() {
            *v = weights.iter().map(|&(k, wt)| frames[k].row(r)[x] * wt).sum();
        }
    });
    IntensityFrame::new(w, h, frame_start, out)
}

/// Maps linear intensity to real-valued digital numbers:
/// `clamp((L - min_illuminance) / slope, 0, 1023)`.
pub fn apply_operation_range(frame: &IntensityFrame, cfg: &CisConfig) -> DnFrame {
    DnFrame {
        width: frame.width(),
        height: frame.height(),
        timestamp: frame.timestamp(),
        data: frame
            .data()
            .iter()
            .map(|&l| operation_range_dn(l, cfg))
            .collect(),
    }
}

#[inline]
pub fn operation_range_dn(l: f64, cfg: &CisConfig) -> f64 {
    ((l - cfg.min_illuminance) / cfg.slope).clamp(0.0, ADC_MAX as f64)
}

/// Adds Gaussian ADC noise (sigma in LSB) and quantises to 10 bits. Pixel `i`
/// of frame `frame_index` draws from its own stream, so the result does not
/// depend on thread count.
pub fn apply_adc_noise(frame: &DnFrame, cfg: &CisConfig, frame_index: u64) -> CisFrame {
    let data = frame
        .data
        .par_iter()
        .enumerate()
        .map(|(i, &dn)| {
            let g = if cfg.noise_lsb > 0.0 {
                rng_for(cfg.seed, StreamId::pixel_frame(Stage::CisNoise, i, frame_index))
                    .gaussian(cfg.noise_lsb)
            } else {
                0.0
            };
            (dn + g).round().clamp(0.0, ADC_MAX as f64) as u16
        })
        .collect();
    CisFrame {
        width: frame.width,
        height: frame.height,
        timestamp: frame.timestamp,
        data,
    }
}

/// Start time of CIS frame `k`.
pub fn frame_start(t0: Micros, cfg: &CisConfig, k: u64) -> Micros {
    t0 + round_half_up_us(k as f64 * cfg.frame_period_us())
}

/// Number of CIS frames a source yields: `floor(duration * fps)`.
pub fn frame_count<S: FrameSource + ?Sized>(source: &S, cfg: &CisConfig) -> u64 {
    if source.len() < 2 {
        return 0;
    }
    let duration_s = (coverage_end(source) - source.timestamp(0)) as f64 / 1e6;
    // small guard against 29.999999 style float results
    (duration_s * cfg.fps + 1e-9).floor() as u64
}

/// Runs the full frame-sensor chain over a source, one output frame per
/// `1 / fps` interval.
pub fn simulate_cis<S: FrameSource + ?Sized>(source: &S, cfg: &CisConfig) -> Result<Vec<CisFrame>> {
    cfg.validate()?;
    check_time_order(source)?;
    let count = frame_count(source, cfg);
    if count == 0 {
        return Ok(Vec::new());
    }
    let t0 = source.timestamp(0);
    (0..count)
        .map(|k| {
            let blurred = integrate_exposure(source, cfg, frame_start(t0, cfg, k))?;
            let dn = apply_operation_range(&blurred, cfg);
            Ok(apply_adc_noise(&dn, cfg, k))
        })
        .collect()
}
