//! Reconstruction quality: SSIM, PSNR, worst-patch search and per-sequence
//! aggregates.
//!
//! SSIM is the single-scale index with an 11x11 Gaussian window
//! (sigma = 1.5), `C1 = (0.01 R)^2` and `C2 = (0.03 R)^2`, averaged over all
//! window positions that fit inside the image (no padding).

use std::fmt;
use std::path::Path;

use rayon::prelude::*;

use crate::cis::CisFrame;
use crate::error::{Error, Result};
use crate::types::IntensityFrame;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const PATCH_WINDOW: usize = 99;
pub const PATCH_STRIDE: usize = 33;

/// Grayscale image with real-valued samples.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayFrame {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl GrayFrame {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidFrame(format!(
                "{} values for a {width}x{height} frame",
                data.len()
            )));
        }
        Ok(GrayFrame { width, height, data })
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> GrayFrame {
        let data = (y0..y0 + h)
            .flat_map(|y| self.data[y * self.width + x0..y * self.width + x0 + w].iter().copied())
            .collect();
        GrayFrame { width: w, height: h, data }
    }
}

impl From<&CisFrame> for GrayFrame {
    fn from(f: &CisFrame) -> Self {
        GrayFrame {
            width: f.width,
            height: f.height,
            data: f.data.iter().map(|&v| v as f64).collect(),
        }
    }
}

impl From<&IntensityFrame> for GrayFrame {
    fn from(f: &IntensityFrame) -> Self {
        GrayFrame {
            width: f.width(),
            height: f.height(),
            data: f.data().to_vec(),
        }
    }
}

fn check_same_dims(a: &GrayFrame, b: &GrayFrame) -> Result<()> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::DimensionMismatch {
            expected_w: a.width,
            expected_h: a.height,
            actual_w: b.width,
            actual_h: b.height,
        });
    }
    Ok(())
}

fn check_fits(window: usize, w: usize, h: usize) -> Result<()> {
    if window == 0 || w < window || h < window {
        return Err(Error::WindowTooLarge {
            window,
            width: w,
            height: h,
        });
    }
    Ok(())
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-(d * d) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable Gaussian filter over valid positions only.
fn filter_valid(src: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut horiz = vec![0.0; ow * h];
    horiz.par_chunks_mut(ow).enumerate().for_each(|(y, row)| {
        let line = &src[y * w..(y + 1) * w];
        for (x, out) in row.iter_mut().enumerate() {
            *out = k.iter().zip(&line[x..x + SSIM_WINDOW]).map(|(a, b)| a * b).sum();
        }
    });
    let mut out = vec![0.0; ow * oh];
    out.par_chunks_mut(ow).enumerate().for_each(|(y, row)| {
        for (x, o) in row.iter_mut().enumerate() {
            *o = (0..SSIM_WINDOW).map(|j| k[j] * horiz[(y + j) * ow + x]).sum();
        }
    });
    out
}

/// SSIM at every window position: `(w - 10) x (h - 10)` values, entry
/// `(x, y)` for the window whose top-left corner is `(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SsimMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

pub fn ssim_map(a: &GrayFrame, b: &GrayFrame, dynamic_range: f64) -> Result<SsimMap> {
    check_same_dims(a, b)?;
    check_fits(SSIM_WINDOW, a.width, a.height)?;
    let (w, h) = (a.width, a.height);
    let k = gaussian_kernel();
    let aa: Vec<f64> = a.data.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = b.data.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect();
    let mu_a = filter_valid(&a.data, w, h, &k);
    let mu_b = filter_valid(&b.data, w, h, &k);
    let e_aa = filter_valid(&aa, w, h, &k);
    let e_bb = filter_valid(&bb, w, h, &k);
    let e_ab = filter_valid(&ab, w, h, &k);
    let c1 = (0.01 * dynamic_range).powi(2);
    let c2 = (0.03 * dynamic_range).powi(2);
    let data = (0..mu_a.len())
        .into_par_iter()
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_aa[i] - ma * ma;
            let vb = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .collect();
    Ok(SsimMap {
        width: w - SSIM_WINDOW + 1,
        height: h - SSIM_WINDOW + 1,
        data,
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Mean SSIM over all 11x11 window positions.
pub fn ssim(a: &GrayFrame, b: &GrayFrame, dynamic_range: f64) -> Result<f64> {
    if dynamic_range.is_nan() || dynamic_range <= 0.0 {
        return Err(Error::config("dynamic_range", "must be positive"));
    }
    let map = ssim_map(a, b, dynamic_range)?;
    Ok(mean(&map.data))
}

pub fn mse(a: &GrayFrame, b: &GrayFrame) -> Result<f64> {
    check_same_dims(a, b)?;
    Ok(a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.data.len() as f64)
}

fn psnr_from_mse(mse: f64, dynamic_range: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (dynamic_range * dynamic_range / mse).log10()
    }
}

/// `10 log10(R^2 / MSE)`; identical frames give `+inf`.
pub fn psnr(a: &GrayFrame, b: &GrayFrame, dynamic_range: f64) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?, dynamic_range))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Ssim,
    Psnr,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Ssim => "ssim",
            Metric::Psnr => "psnr",
        })
    }
}

/// Per-window scores; entry `(i, j)` is the window with top-left corner
/// `(i * stride, j * stride)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub metric: Metric,
    pub window: usize,
    pub stride: usize,
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Heatmap {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.width + i]
    }

    /// Lossless CSV: a header line with the layout, then one row per grid row.
    pub fn to_csv(&self) -> String {
        let mut s = format!(
            "# metric={} window={} stride={} width={} height={}\n",
            self.metric, self.window, self.stride, self.width, self.height
        );
        for row in self.data.chunks(self.width) {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::InvalidFrame(format!("heatmap csv: {m}"));
        let mut lines = text.lines();
        let header = lines.next().and_then(|l| l.strip_prefix("# ")).ok_or_else(|| bad("missing header"))?;
        let field = |name: &str| -> Result<&str> {
            header
                .split_whitespace()
                .find_map(|kv| kv.strip_prefix(name).and_then(|r| r.strip_prefix('=')))
                .ok_or_else(|| bad(name))
        };
        let metric = match field("metric")? {
            "ssim" => Metric::Ssim,
            "psnr" => Metric::Psnr,
            _ => return Err(bad("metric")),
        };
        let int = |name: &str| -> Result<usize> { field(name)?.parse().map_err(|_| bad(name)) };
        let (width, height) = (int("width")?, int("height")?);
        let data = lines
            .flat_map(|l| l.split(','))
            .map(|v| v.trim().parse::<f64>().map_err(|_| bad("value")))
            .collect::<Result<Vec<_>>>()?;
        if data.len() != width * height {
            return Err(bad("size"));
        }
        Ok(Heatmap {
            metric,
            window: int("window")?,
            stride: int("stride")?,
            width,
            height,
            data,
        })
    }

    /// Finite score range used for the 8-bit rendering.
    pub fn finite_range(&self) -> (f64, f64) {
        self.data
            .iter()
            .filter(|v| v.is_finite())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Linear score-to-gray mapping over the finite range; `+inf` maps to 255.
    pub fn to_gray8(&self) -> Vec<u8> {
        let (lo, hi) = self.finite_range();
        self.data
            .iter()
            .map(|&v| {
                if v == f64::INFINITY || (v.is_finite() && hi <= lo) {
                    255
                } else if !v.is_finite() {
                    0
                } else {
                    (255.0 * (v - lo) / (hi - lo)).round() as u8
                }
            })
            .collect()
    }

    /// Sidecar text describing [`Heatmap::to_gray8`].
    pub fn sidecar(&self) -> String {
        let (lo, hi) = self.finite_range();
        format!(
            "metric = {}\nwindow = {}\nstride = {}\ngrid_width = {}\ngrid_height = {}\nmapping = linear\ngray_0 = {lo}\ngray_255 = {hi}\ninf_gray = 255\n",
            self.metric, self.window, self.stride, self.width, self.height
        )
    }

    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        let path = dir.join(format!("{stem}.csv"));
        std::fs::write(&path, self.to_csv()).map_err(|e| Error::io(&path, e))?;
        crate::io::pgm::write_gray8(&dir.join(format!("{stem}.pgm")), self.width, self.height, &self.to_gray8())?;
        let path = dir.join(format!("{stem}.txt"));
        std::fs::write(&path, self.sidecar()).map_err(|e| Error::io(&path, e))
    }
}

/// Worst window of a patch scan.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchMin {
    pub score: f64,
    /// Top-left pixel of the worst window.
    pub x: usize,
    pub y: usize,
    pub heatmap: Heatmap,
}

/// Scores every `window` x `window` patch at the given stride and returns
/// the worst one. Ties keep the first patch in row-major order.
pub fn patch_min(
    a: &GrayFrame,
    b: &GrayFrame,
    metric: Metric,
    window: usize,
    stride: usize,
    dynamic_range: f64,
) -> Result<PatchMin> {
    check_same_dims(a, b)?;
    check_fits(window, a.width, a.height)?;
    if stride == 0 {
        return Err(Error::config("stride", "must be positive"));
    }
    let gw = (a.width - window) / stride + 1;
    let gh = (a.height - window) / stride + 1;
    let data: Vec<f64> = match metric {
        Metric::Ssim => {
            check_fits(SSIM_WINDOW, window, window)?;
            let map = ssim_map(a, b, dynamic_range)?;
            let span = window - SSIM_WINDOW + 1;
            (0..gw * gh)
                .into_par_iter()
                .map(|c| {
                    let (x0, y0) = ((c % gw) * stride, (c / gw) * stride);
                    let sum: f64 = (y0..y0 + span)
                        .map(|y| map.data[y * map.width + x0..y * map.width + x0 + span].iter().sum::<f64>())
                        .sum();
                    sum / (span * span) as f64
                })
                .collect()
        }
        Metric::Psnr => (0..gw * gh)
            .into_par_iter()
            .map(|c| {
                let (x0, y0) = ((c % gw) * stride, (c / gw) * stride);
                let sum: f64 = (y0..y0 + window)
                    .map(|y| {
                        let r = y * a.width + x0..y * a.width + x0 + window;
                        a.data[r.clone()].iter().zip(&b.data[r]).map(|(p, q)| (p - q) * (p - q)).sum::<f64>()
                    })
                    .sum();
                psnr_from_mse(sum / (window * window) as f64, dynamic_range)
            })
            .collect(),
    };
    let (best, score) = data
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bs), (i, &s)| if s < bs { (i, s) } else { (bi, bs) });
    let score = if data.iter().all(|v| *v == f64::INFINITY) { f64::INFINITY } else { score };
    Ok(PatchMin {
        score,
        x: (best % gw) * stride,
        y: (best / gw) * stride,
        heatmap: Heatmap {
            metric,
            window,
            stride,
            width: gw,
            height: gh,
            data,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameQuality {
    pub index: usize,
    pub ssim: f64,
    pub psnr: f64,
}

/// Location of a sequence-wide worst patch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchLocation {
    pub frame: usize,
    pub x: usize,
    pub y: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QualityReport {
    pub mean_ssim: f64,
    pub min_ssim: f64,
    pub std_ssim: f64,
    pub mean_psnr: f64,
    pub min_psnr: f64,
    pub std_psnr: f64,
    pub min_patch_ssim: f64,
    pub min_patch_psnr: f64,
    pub min_patch_ssim_at: PatchLocation,
    pub min_patch_psnr_at: PatchLocation,
    pub per_frame: Vec<FrameQuality>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportOptions {
    pub dynamic_range: f64,
    pub window: usize,
    pub stride: usize,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            dynamic_range: 1023.0,
            window: PATCH_WINDOW,
            stride: PATCH_STRIDE,
        }
    }
}

/// Mean, minimum and population standard deviation. Infinite values (PSNR
/// of identical frames) propagate: any `+inf` makes the mean infinite, and
/// the spread is zero only when every value is equal.
pub fn summarize(values: &[f64]) -> (f64, f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let m = mean(values);
    let std = if values.iter().all(|&v| v == values[0]) {
        0.0
    } else if !m.is_finite() {
        f64::INFINITY
    } else {
        (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64).sqrt()
    };
    (m, min, std)
}

/// Compares two frame sequences frame by frame. `worst_heatmaps` receives
/// the heatmaps of the frames holding the worst SSIM and PSNR patch.
pub fn sequence_report_with_heatmaps(
    seq_a: &[GrayFrame],
    seq_b: &[GrayFrame],
    opts: ReportOptions,
) -> Result<(QualityReport, Option<(Heatmap, Heatmap)>)> {
    if seq_a.len() != seq_b.len() {
        return Err(Error::LengthMismatch {
            left: seq_a.len(),
            right: seq_b.len(),
        });
    }
    let mut per_frame = Vec::with_capacity(seq_a.len());
    let mut worst_ssim: Option<(PatchMin, usize)> = None;
    let mut worst_psnr: Option<(PatchMin, usize)> = None;
    for (i, (a, b)) in seq_a.iter().zip(seq_b).enumerate() {
        per_frame.push(FrameQuality {
            index: i,
            ssim: ssim(a, b, opts.dynamic_range)?,
            psnr: psnr(a, b, opts.dynamic_range)?,
        });
        let ps = patch_min(a, b, Metric::Ssim, opts.window, opts.stride, opts.dynamic_range)?;
        if worst_ssim.as_ref().is_none_or(|(w, _)| ps.score < w.score) {
            worst_ssim = Some((ps, i));
        }
        let pp = patch_min(a, b, Metric::Psnr, opts.window, opts.stride, opts.dynamic_range)?;
        if worst_psnr.as_ref().is_none_or(|(w, _)| pp.score < w.score) {
            worst_psnr = Some((pp, i));
        }
    }
    let ssims: Vec<f64> = per_frame.iter().map(|f| f.ssim).collect();
    let psnrs: Vec<f64> = per_frame.iter().map(|f| f.psnr).collect();
    let (mean_ssim, min_ssim, std_ssim) = summarize(&ssims);
    let (mean_psnr, min_psnr, std_psnr) = summarize(&psnrs);
    let loc = |w: &Option<(PatchMin, usize)>| {
        w.as_ref().map_or(PatchLocation { frame: 0, x: 0, y: 0 }, |(p, f)| PatchLocation {
            frame: *f,
            x: p.x,
            y: p.y,
        })
    };
    let report = QualityReport {
        mean_ssim,
        min_ssim,
        std_ssim,
        mean_psnr,
        min_psnr,
        std_psnr,
        min_patch_ssim: worst_ssim.as_ref().map_or(f64::NAN, |(p, _)| p.score),
        min_patch_psnr: worst_psnr.as_ref().map_or(f64::NAN, |(p, _)| p.score),
        min_patch_ssim_at: loc(&worst_ssim),
        min_patch_psnr_at: loc(&worst_psnr),
        per_frame,
    };
    let heatmaps = worst_ssim.zip(worst_psnr).map(|((s, _), (p, _))| (s.heatmap, p.heatmap));
    Ok((report, heatmaps))
}

pub fn sequence_report(seq_a: &[GrayFrame], seq_b: &[GrayFrame], opts: ReportOptions) -> Result<QualityReport> {
    sequence_report_with_heatmaps(seq_a, seq_b, opts).map(|(r, _)| r)
}

impl QualityReport {
    /// Per-frame rows followed by a blank line and the summary block.
    /// Infinite PSNR is written as `inf`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("frame,ssim,psnr\n");
        for f in &self.per_frame {
            s.push_str(&format!("{},{},{}\n", f.index, f.ssim, f.psnr));
        }
        s.push_str("\nstatistic,ssim,psnr\n");
        s.push_str(&format!("mean,{},{}\n", self.mean_ssim, self.mean_psnr));
        s.push_str(&format!("min,{},{}\n", self.min_ssim, self.min_psnr));
        s.push_str(&format!("std,{},{}\n", self.std_ssim, self.std_psnr));
        s.push_str(&format!("min_patch,{},{}\n", self.min_patch_ssim, self.min_patch_psnr));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{rng_for, Stage, StreamId};

    fn random_frame(w: usize, h: usize, seed: u64, scale: f64) -> GrayFrame {
        let mut rng = rng_for(seed, StreamId::global(Stage::Custom(99)));
        GrayFrame::new(w, h, (0..w * h).map(|_| (rng.uniform() * scale).floor()).collect()).unwrap()
    }

    /// SSIM of one 11x11 window evaluated straight from the definition.
    fn single_window_ssim(a: &GrayFrame, b: &GrayFrame, x0: usize, y0: usize, r: f64) -> f64 {
        let k = gaussian_kernel();
        let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for j in 0..SSIM_WINDOW {
            for i in 0..SSIM_WINDOW {
                let wgt = k[i] * k[j];
                let p = a.data[(y0 + j) * a.width + x0 + i];
                let q = b.data[(y0 + j) * b.width + x0 + i];
                ma += wgt * p;
                mb += wgt * q;
                saa += wgt * p * p;
                sbb += wgt * q * q;
                sab += wgt * p * q;
            }
        }
        let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
        let (c1, c2) = ((0.01 * r).powi(2), (0.03 * r).powi(2));
        (2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
    }

    #[test]
    fn kernel_is_normalized_and_symmetric() {
        let k = gaussian_kernel();
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for i in 0..SSIM_WINDOW {
            assert_eq!(k[i], k[SSIM_WINDOW - 1 - i]);
        }
    }

    #[test]
    fn self_similarity() {
        let a = random_frame(40, 30, 1, 1024.0);
        assert_eq!(ssim(&a, &a, 1023.0).unwrap(), 1.0);
        assert_eq!(psnr(&a, &a, 1023.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn symmetry() {
        let a = random_frame(33, 21, 2, 256.0);
        let b = random_frame(33, 21, 3, 256.0);
        let (ab, ba) = (ssim(&a, &b, 255.0).unwrap(), ssim(&b, &a, 255.0).unwrap());
        assert!((ab - ba).abs() < 1e-12);
        assert!(ab < 0.5);
    }

    #[test]
    fn constant_offset_matches_direct_formula() {
        let a = GrayFrame::new(11, 11, vec![400.0; 121]).unwrap();
        let b = GrayFrame::new(11, 11, vec![450.0; 121]).unwrap();
        let c1 = (0.01f64 * 1023.0).powi(2);
        // zero variances: SSIM reduces to the luminance term
        let closed = (2.0 * 400.0 * 450.0 + c1) / (400.0f64.powi(2) + 450.0f64.powi(2) + c1);
        let got = ssim(&a, &b, 1023.0).unwrap();
        assert!((got - closed).abs() < 1e-9, "{got} vs {closed}");
        assert!((got - single_window_ssim(&a, &b, 0, 0, 1023.0)).abs() < 1e-9);
    }

    #[test]
    fn map_matches_direct_windows() {
        let a = random_frame(20, 17, 4, 1024.0);
        let b = random_frame(20, 17, 5, 1024.0);
        let map = ssim_map(&a, &b, 1023.0).unwrap();
        assert_eq!((map.width, map.height), (10, 7));
        for (x, y) in [(0, 0), (9, 6), (3, 5)] {
            let direct = single_window_ssim(&a, &b, x, y, 1023.0);
            assert!((map.data[y * map.width + x] - direct).abs() < 1e-9);
        }
    }

    #[test]
    fn psnr_hand_value() {
        let a = GrayFrame::new(8, 8, vec![100.0; 64]).unwrap();
        let b = GrayFrame::new(8, 8, vec![116.0; 64]).unwrap();
        let got = psnr(&a, &b, 255.0).unwrap();
        assert!((got - 24.0484).abs() < 1e-3, "{got}");
    }

    #[test]
    fn psnr_decreases_with_error() {
        let a = GrayFrame::new(4, 4, vec![100.0; 16]).unwrap();
        let mut last = f64::INFINITY;
        for e in 1..50 {
            let b = GrayFrame::new(4, 4, vec![100.0 + e as f64; 16]).unwrap();
            let p = psnr(&a, &b, 255.0).unwrap();
            assert!(p < last);
            last = p;
        }
    }

    #[test]
    fn dimension_and_size_errors() {
        let a = random_frame(20, 20, 1, 10.0);
        let b = random_frame(21, 20, 1, 10.0);
        assert!(matches!(ssim(&a, &b, 1.0), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(psnr(&a, &b, 1.0), Err(Error::DimensionMismatch { .. })));
        let small = random_frame(10, 30, 1, 10.0);
        assert!(matches!(ssim(&small, &small, 1.0), Err(Error::WindowTooLarge { .. })));
        let f64x64 = random_frame(64, 64, 1, 10.0);
        assert!(matches!(
            patch_min(&f64x64, &f64x64, Metric::Ssim, 99, 33, 1.0),
            Err(Error::WindowTooLarge { window: 99, .. })
        ));
    }

    #[test]
    fn patch_min_on_identical_images() {
        let a = random_frame(120, 110, 7, 1024.0);
        let s = patch_min(&a, &a, Metric::Ssim, 99, 33, 1023.0).unwrap();
        assert_eq!(s.score, 1.0);
        let p = patch_min(&a, &a, Metric::Psnr, 99, 33, 1023.0).unwrap();
        assert_eq!(p.score, f64::INFINITY);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]

        // With stride = window - 10 the patch means partition the SSIM map,
        // so the worst patch cannot beat the whole-frame score.
        #[test]
        fn worst_patch_never_beats_global(
            window in 12usize..30,
            kx in 1usize..4,
            ky in 1usize..4,
            seed in 0u64..1000,
            noise in 1.0..200.0f64,
        ) {
            let stride = window - 10;
            let (w, h) = (10 + kx * stride, 10 + ky * stride);
            let a = random_frame(w, h, seed, 1024.0);
            let n = random_frame(w, h, seed + 1, noise);
            let b = GrayFrame::new(w, h, a.data.iter().zip(&n.data).map(|(p, q)| (p + q).min(1023.0)).collect()).unwrap();
            let global = ssim(&a, &b, 1023.0).unwrap();
            let pm = patch_min(&a, &b, Metric::Ssim, window, stride, 1023.0).unwrap();
            proptest::prop_assert!(pm.score <= global + 1e-12);

            // PSNR patches partition the frame when stride = window
            let (w, h) = (kx * window, ky * window);
            let a = random_frame(w, h, seed, 1024.0);
            let n = random_frame(w, h, seed + 1, noise);
            let b = GrayFrame::new(w, h, a.data.iter().zip(&n.data).map(|(p, q)| (p + q).min(1023.0)).collect()).unwrap();
            let pm = patch_min(&a, &b, Metric::Psnr, window, window, 1023.0).unwrap();
            proptest::prop_assert!(pm.score <= psnr(&a, &b, 1023.0).unwrap() + 1e-12);
        }
    }

    #[test]
    fn patch_ssim_equals_ssim_of_crop() {
        let a = random_frame(60, 50, 8, 1024.0);
        let b = random_frame(60, 50, 9, 1024.0);
        let pm = patch_min(&a, &b, Metric::Ssim, 30, 7, 1023.0).unwrap();
        for (i, j) in [(0, 0), (2, 1), (pm.heatmap.width - 1, pm.heatmap.height - 1)] {
            let (x, y) = (i * 7, j * 7);
            let crop = ssim(&a.crop(x, y, 30, 30), &b.crop(x, y, 30, 30), 1023.0).unwrap();
            assert!((pm.heatmap.get(i, j) - crop).abs() < 1e-12);
        }
    }

    #[test]
    fn tiling_grid_dims() {
        let a = random_frame(297, 200, 1, 10.0);
        let pm = patch_min(&a, &a, Metric::Psnr, 99, 99, 255.0).unwrap();
        assert_eq!((pm.heatmap.width, pm.heatmap.height), (3, 2));
        let pm = patch_min(&a, &a, Metric::Psnr, 99, 33, 255.0).unwrap();
        assert_eq!((pm.heatmap.width, pm.heatmap.height), ((297 - 99) / 33 + 1, (200 - 99) / 33 + 1));
    }

    #[test]
    fn heatmap_csv_round_trip() {
        let a = random_frame(130, 120, 10, 1024.0);
        let b = random_frame(130, 120, 11, 1024.0);
        for metric in [Metric::Ssim, Metric::Psnr] {
            let hm = patch_min(&a, &b, metric, 99, 5, 1023.0).unwrap().heatmap;
            assert_eq!(Heatmap::from_csv(&hm.to_csv()).unwrap(), hm);
        }
        let inf = patch_min(&a, &a, Metric::Psnr, 99, 31, 1023.0).unwrap().heatmap;
        assert_eq!(Heatmap::from_csv(&inf.to_csv()).unwrap(), inf);
        assert!(inf.to_gray8().iter().all(|&g| g == 255));
    }

    #[test]
    fn summarize_handles_infinity() {
        assert_eq!(summarize(&[f64::INFINITY; 3]), (f64::INFINITY, f64::INFINITY, 0.0));
        let (m, min, s) = summarize(&[30.0, f64::INFINITY]);
        assert_eq!((m, min, s), (f64::INFINITY, 30.0, f64::INFINITY));
        let (m, min, s) = summarize(&[1.0, 3.0]);
        assert_eq!((m, min, s), (2.0, 1.0, 1.0));
    }

    #[test]
    fn report_finds_degraded_frame() {
        let seq: Vec<GrayFrame> = (0..5).map(|i| random_frame(100, 100, 20 + i, 1024.0)).collect();
        let mut other = seq.clone();
        let mut rng = rng_for(3, StreamId::global(Stage::Custom(5)));
        for v in other[3].data.iter_mut() {
            *v = (*v + rng.gaussian(40.0)).clamp(0.0, 1023.0);
        }
        let r = sequence_report(&seq, &other, ReportOptions::default()).unwrap();
        assert!(r.min_ssim < r.mean_ssim);
        let worst = r.per_frame.iter().min_by(|a, b| a.ssim.total_cmp(&b.ssim)).unwrap();
        assert_eq!(worst.index, 3);
        assert_eq!(r.min_patch_ssim_at.frame, 3);
        assert!(r.min_patch_ssim <= r.per_frame[3].ssim + 1e-12);
        assert!(r.min_psnr.is_finite() && r.mean_psnr.is_infinite());

        let same = sequence_report(&seq, &seq, ReportOptions::default()).unwrap();
        assert_eq!((same.mean_ssim, same.min_ssim, same.std_ssim), (1.0, 1.0, 0.0));
        assert!(sequence_report(&seq, &seq[1..], ReportOptions::default()).is_err());
    }
}
