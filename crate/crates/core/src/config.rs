//! Sensor parameter sets and the flat `key = value` config format.
//!
//! One key per line, `#` starts a comment, keys are the field names. A run
//! config may hold both sensors at once: `width`, `height` and `seed` are
//! shared, and any sensor key may be prefixed with `cis.` or `dvs.` to set it
//! for one sensor only. `pattern.*` keys describe a synthetic input.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::types::Micros;

const SHARED_KEYS: &[&str] = &["width", "height", "seed"];

const CIS_KEYS: &[&str] = &[
    "fps",
    "exposure_time",
    "line_readout_time",
    "min_illuminance",
    "slope",
    "noise_lsb",
];

const DVS_KEYS: &[&str] = &[
    "threshold_pos",
    "threshold_neg",
    "mismatch_sigma",
    "external_noise_sigma",
    "inpixel_noise_sigma",
    "refractory_us",
    "bad_pixel_prob",
    "lens_shading_coeffs",
    "lpf_cutoff_hz",
    "intensity_scaled_bandwidth",
    "mode",
    "log_epsilon",
];

pub(crate) const PATTERN_KEYS: &[&str] = &[
    "kind",
    "width",
    "height",
    "fps",
    "duration",
    "base_intensity",
    "amplitude",
    "velocity",
    "rate",
    "cell",
    "frequency",
    "depth",
];

/// Parsed `key = value` lines, keyed by name, with the line each came from.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, (usize, String)>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::config(
                    format!("line {}", n + 1),
                    format!("expected `key = value`, got `{line}`"),
                ));
            };
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(Error::config(format!("line {}", n + 1), "empty key"));
            }
            if entries.insert(k.to_string(), (n + 1, v.to_string())).is_some() {
                return Err(Error::config(k, "key given more than once"));
            }
        }
        Ok(KeyValues { entries })
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    pub fn insert(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), (0, value.into()));
    }

    fn reject_unknown(&self, allowed: impl Fn(&str) -> bool) -> Result<()> {
        match self.entries.keys().find(|k| !allowed(k)) {
            Some(k) => Err(Error::config(k.clone(), "unknown key")),
            None => Ok(()),
        }
    }
}

/// Resolves keys for one sensor: `<prefix>.<key>` wins over `<key>`.
struct Lookup<'a> {
    kv: &'a KeyValues,
    prefix: &'a str,
}

impl Lookup<'_> {
    fn raw(&self, key: &str) -> Option<(String, &str)> {
        if !self.prefix.is_empty() {
            let full = format!("{}.{key}", self.prefix);
            if let Some(v) = self.kv.get(&full) {
                return Some((full, v));
            }
        }
        self.kv.get(key).map(|v| (key.to_string(), v))
    }

    fn opt<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some((name, v)) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::config(name, format!("cannot parse `{v}`"))),
        }
    }

    fn or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.opt(key)?.unwrap_or(default))
    }

    fn req<T: FromStr>(&self, key: &str) -> Result<T> {
        self.opt(key)?
            .ok_or_else(|| Error::config(key, "missing required key"))
    }
}

fn check(ok: bool, key: &str, message: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(key, message))
    }
}

/// Frame-based (CMOS) sensor parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CisConfig {
    pub width: usize,
    pub height: usize,
    pub fps: f64,
    /// Exposure per row, microseconds.
    pub exposure_time: f64,
    /// Rolling-shutter offset between consecutive rows, microseconds.
    pub line_readout_time: f64,
    pub min_illuminance: f64,
    /// Linear intensity units per digital number.
    pub slope: f64,
    /// Standard deviation of the ADC noise in 10-bit LSBs.
    pub noise_lsb: f64,
    pub seed: u64,
}

impl CisConfig {
    /// Global shutter, no exposure, operation range and noise of the
    /// reference post-processing setup (4096 / 55 / 5.2).
    pub fn new(width: usize, height: usize, fps: f64) -> Self {
        CisConfig {
            width,
            height,
            fps,
            exposure_time: 0.0,
            line_readout_time: 0.0,
            min_illuminance: 4096.0,
            slope: 55.0,
            noise_lsb: 5.2,
            seed: 0,
        }
    }

    pub fn frame_period_us(&self) -> f64 {
        1e6 / self.fps
    }

    /// Time from the start of row 0 to the end of the last row's exposure.
    pub fn capture_span_us(&self) -> f64 {
        self.exposure_time + self.height as f64 * self.line_readout_time
    }

    pub fn validate(&self) -> Result<()> {
        check(self.width > 0, "width", "must be positive")?;
        check(self.height > 0, "height", "must be positive")?;
        check(self.fps.is_finite() && self.fps > 0.0, "fps", "must be positive")?;
        check(
            self.exposure_time.is_finite() && self.exposure_time >= 0.0,
            "exposure_time",
            "must be non-negative",
        )?;
        check(
            self.line_readout_time.is_finite() && self.line_readout_time >= 0.0,
            "line_readout_time",
            "must be non-negative",
        )?;
        check(self.min_illuminance.is_finite(), "min_illuminance", "must be finite")?;
        check(self.slope.is_finite() && self.slope > 0.0, "slope", "must be positive")?;
        check(
            self.noise_lsb.is_finite() && self.noise_lsb >= 0.0,
            "noise_lsb",
            "must be non-negative",
        )?;
        check(
            self.capture_span_us() <= self.frame_period_us() + 1e-9,
            "exposure_time",
            "exposure_time + height * line_readout_time exceeds the frame period",
        )
    }

    fn from_lookup(l: &Lookup) -> Result<Self> {
        let d = CisConfig::new(0, 0, 1.0);
        let cfg = CisConfig {
            width: l.req("width")?,
            height: l.req("height")?,
            fps: l.req("fps")?,
            exposure_time: l.or("exposure_time", d.exposure_time)?,
            line_readout_time: l.or("line_readout_time", d.line_readout_time)?,
            min_illuminance: l.or("min_illuminance", d.min_illuminance)?,
            slope: l.or("slope", d.slope)?,
            noise_lsb: l.or("noise_lsb", d.noise_lsb)?,
            seed: l.or("seed", d.seed)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let kv = KeyValues::parse(text)?;
        kv.reject_unknown(|k| SHARED_KEYS.contains(&k) || CIS_KEYS.contains(&k))?;
        Self::from_lookup(&Lookup { kv: &kv, prefix: "" })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "width = {}", self.width);
        let _ = writeln!(s, "height = {}", self.height);
        let _ = writeln!(s, "fps = {}", self.fps);
        let _ = writeln!(s, "exposure_time = {}", self.exposure_time);
        let _ = writeln!(s, "line_readout_time = {}", self.line_readout_time);
        let _ = writeln!(s, "min_illuminance = {}", self.min_illuminance);
        let _ = writeln!(s, "slope = {}", self.slope);
        let _ = writeln!(s, "noise_lsb = {}", self.noise_lsb);
        let _ = writeln!(s, "seed = {}", self.seed);
        s
    }
}

/// Event timestamp mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DvsMode {
    FreeRunning,
    /// Timestamps snapped to a grid of `event_fps` event frames per second,
    /// at most one event per pixel and frame.
    FixedRate { event_fps: f64 },
}

impl fmt::Display for DvsMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DvsMode::FreeRunning => write!(f, "free_running"),
            DvsMode::FixedRate { event_fps } => write!(f, "fixed_rate({event_fps})"),
        }
    }
}

impl FromStr for DvsMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s == "free_running" {
            return Ok(DvsMode::FreeRunning);
        }
        s.strip_prefix("fixed_rate(")
            .and_then(|r| r.strip_suffix(')'))
            .and_then(|v| v.trim().parse().ok())
            .map(|event_fps| DvsMode::FixedRate { event_fps })
            .ok_or_else(|| format!("expected free_running or fixed_rate(<fps>), got `{s}`"))
    }
}

/// Comma-separated lens shading polynomial, lowest order first.
#[derive(Debug, Clone, PartialEq)]
struct Coeffs(Vec<f64>);

impl FromStr for Coeffs {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        s.split(',')
            .map(|c| c.trim().parse::<f64>().map_err(|_| ()))
            .collect::<Result<Vec<_>, _>>()
            .map(Coeffs)
    }
}

/// Event sensor parameters. Threshold-like quantities are in natural-log
/// intensity units.
#[derive(Debug, Clone, PartialEq)]
pub struct DvsConfig {
    pub width: usize,
    pub height: usize,
    pub threshold_pos: f64,
    pub threshold_neg: f64,
    /// Standard deviation of the time-invariant per-pixel threshold offset.
    pub mismatch_sigma: f64,
    /// Standard deviation of the noise added each time a threshold is drawn.
    pub external_noise_sigma: f64,
    /// Second, independent per-draw noise term.
    pub inpixel_noise_sigma: f64,
    pub refractory_us: Micros,
    pub bad_pixel_prob: f64,
    /// Vignetting polynomial c0 + c1 F + c2 F^2 ... in the normalised
    /// distance F = r / width.
    pub lens_shading_coeffs: Vec<f64>,
    /// Corner frequency of the two-pole pixel low-pass. `inf` disables it.
    pub lpf_cutoff_hz: f64,
    pub intensity_scaled_bandwidth: bool,
    pub mode: DvsMode,
    pub log_epsilon: f64,
    pub seed: u64,
}

impl DvsConfig {
    /// Reference post-processing values: threshold 0.15, mismatch 0.015,
    /// external noise 0.035, refractory 100 us, no faulty pixels. The 300 Hz
    /// low-pass corner and unit log epsilon are calibration choices.
    pub fn new(width: usize, height: usize) -> Self {
        DvsConfig {
            width,
            height,
            threshold_pos: 0.15,
            threshold_neg: 0.15,
            mismatch_sigma: 0.015,
            external_noise_sigma: 0.035,
            inpixel_noise_sigma: 0.0,
            refractory_us: 100,
            bad_pixel_prob: 0.0,
            lens_shading_coeffs: vec![1.0],
            lpf_cutoff_hz: 300.0,
            intensity_scaled_bandwidth: false,
            mode: DvsMode::FreeRunning,
            log_epsilon: 1.0,
            seed: 0,
        }
    }

    /// All noise, faults, shading and filtering switched off.
    pub fn ideal(width: usize, height: usize, threshold: f64) -> Self {
        DvsConfig {
            threshold_pos: threshold,
            threshold_neg: threshold,
            mismatch_sigma: 0.0,
            external_noise_sigma: 0.0,
            refractory_us: 0,
            lpf_cutoff_hz: f64::INFINITY,
            log_epsilon: 1e-12,
            ..DvsConfig::new(width, height)
        }
    }

    pub fn validate(&self) -> Result<()> {
        check(self.width > 0, "width", "must be positive")?;
        check(self.height > 0, "height", "must be positive")?;
        let positive = |v: f64| v.is_finite() && v > 0.0;
        let sigma = |v: f64| v.is_finite() && v >= 0.0;
        check(positive(self.threshold_pos), "threshold_pos", "must be positive")?;
        check(positive(self.threshold_neg), "threshold_neg", "must be positive")?;
        check(sigma(self.mismatch_sigma), "mismatch_sigma", "must be non-negative")?;
        check(sigma(self.external_noise_sigma), "external_noise_sigma", "must be non-negative")?;
        check(sigma(self.inpixel_noise_sigma), "inpixel_noise_sigma", "must be non-negative")?;
        check(
            (0.0..=1.0).contains(&self.bad_pixel_prob),
            "bad_pixel_prob",
            "must be within [0, 1]",
        )?;
        check(
            !self.lens_shading_coeffs.is_empty()
                && self.lens_shading_coeffs.iter().all(|c| c.is_finite()),
            "lens_shading_coeffs",
            "needs at least one finite coefficient",
        )?;
        check(
            !self.lpf_cutoff_hz.is_nan() && self.lpf_cutoff_hz > 0.0,
            "lpf_cutoff_hz",
            "must be positive",
        )?;
        check(positive(self.log_epsilon), "log_epsilon", "must be positive")?;
        if let DvsMode::FixedRate { event_fps } = self.mode {
            check(positive(event_fps), "mode", "event fps must be positive")?;
        }
        Ok(())
    }

    fn from_lookup(l: &Lookup) -> Result<Self> {
        let d = DvsConfig::new(0, 0);
        let cfg = DvsConfig {
            width: l.req("width")?,
            height: l.req("height")?,
            threshold_pos: l.req("threshold_pos")?,
            threshold_neg: l.req("threshold_neg")?,
            mismatch_sigma: l.or("mismatch_sigma", d.mismatch_sigma)?,
            external_noise_sigma: l.or("external_noise_sigma", d.external_noise_sigma)?,
            inpixel_noise_sigma: l.or("inpixel_noise_sigma", d.inpixel_noise_sigma)?,
            refractory_us: l.or("refractory_us", d.refractory_us)?,
            bad_pixel_prob: l.or("bad_pixel_prob", d.bad_pixel_prob)?,
            lens_shading_coeffs: l.or("lens_shading_coeffs", Coeffs(d.lens_shading_coeffs))?.0,
            lpf_cutoff_hz: l.or("lpf_cutoff_hz", d.lpf_cutoff_hz)?,
            intensity_scaled_bandwidth: l
                .or("intensity_scaled_bandwidth", d.intensity_scaled_bandwidth)?,
            mode: l.or("mode", d.mode)?,
            log_epsilon: l.or("log_epsilon", d.log_epsilon)?,
            seed: l.or("seed", d.seed)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let kv = KeyValues::parse(text)?;
        kv.reject_unknown(|k| SHARED_KEYS.contains(&k) || DVS_KEYS.contains(&k))?;
        Self::from_lookup(&Lookup { kv: &kv, prefix: "" })
    }

    pub fn to_text(&self) -> String {
        let coeffs: Vec<String> = self.lens_shading_coeffs.iter().map(f64::to_string).collect();
        let mut s = String::new();
        let _ = writeln!(s, "width = {}", self.width);
        let _ = writeln!(s, "height = {}", self.height);
        let _ = writeln!(s, "threshold_pos = {}", self.threshold_pos);
        let _ = writeln!(s, "threshold_neg = {}", self.threshold_neg);
        let _ = writeln!(s, "mismatch_sigma = {}", self.mismatch_sigma);
        let _ = writeln!(s, "external_noise_sigma = {}", self.external_noise_sigma);
        let _ = writeln!(s, "inpixel_noise_sigma = {}", self.inpixel_noise_sigma);
        let _ = writeln!(s, "refractory_us = {}", self.refractory_us);
        let _ = writeln!(s, "bad_pixel_prob = {}", self.bad_pixel_prob);
        let _ = writeln!(s, "lens_shading_coeffs = {}", coeffs.join(", "));
        let _ = writeln!(s, "lpf_cutoff_hz = {}", self.lpf_cutoff_hz);
        let _ = writeln!(s, "intensity_scaled_bandwidth = {}", self.intensity_scaled_bandwidth);
        let _ = writeln!(s, "mode = {}", self.mode);
        let _ = writeln!(s, "log_epsilon = {}", self.log_epsilon);
        let _ = writeln!(s, "seed = {}", self.seed);
        s
    }
}

/// Contents of a run config file: both sensors plus an optional pattern.
/// Sensor sections are only assembled (and checked for required keys) on
/// request, so a CIS-only run does not need DVS thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    kv: KeyValues,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let kv = KeyValues::parse(text)?;
        kv.reject_unknown(is_run_key)?;
        Ok(RunConfig { kv })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        if !is_run_key(key) {
            return Err(Error::config(key, "unknown key"));
        }
        self.kv.insert(key, value);
        Ok(())
    }

    pub fn cis(&self) -> Result<CisConfig> {
        CisConfig::from_lookup(&Lookup {
            kv: &self.kv,
            prefix: "cis",
        })
    }

    pub fn dvs(&self) -> Result<DvsConfig> {
        DvsConfig::from_lookup(&Lookup {
            kv: &self.kv,
            prefix: "dvs",
        })
    }

    pub fn has_pattern(&self) -> bool {
        self.kv.keys().any(|k| k.starts_with("pattern."))
    }

    /// Value of `pattern.<key>`.
    pub fn pattern_value(&self, key: &str) -> Option<&str> {
        self.kv.get(&format!("pattern.{key}"))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.kv.get(key)
    }
}

fn is_run_key(k: &str) -> bool {
    let sensor = |k: &str, own: &[&str]| SHARED_KEYS.contains(&k) || own.contains(&k);
    if let Some(rest) = k.strip_prefix("cis.") {
        return sensor(rest, CIS_KEYS);
    }
    if let Some(rest) = k.strip_prefix("dvs.") {
        return sensor(rest, DVS_KEYS);
    }
    if let Some(rest) = k.strip_prefix("pattern.") {
        return PATTERN_KEYS.contains(&rest);
    }
    SHARED_KEYS.contains(&k) || CIS_KEYS.contains(&k) || DVS_KEYS.contains(&k)
}
