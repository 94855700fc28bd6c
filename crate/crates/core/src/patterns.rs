//! Analytic synthetic stimuli, used in place of rendered input.
//!
//! Every frame is a pure function of its [`PatternSpec`] and index, so a pattern
//! can serve as a [`FrameSource`] without ever being materialised.

use std::borrow::Cow;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::source::FrameSource;
use crate::types::{round_half_up_us, IntensityFrame, Micros};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PatternKind {
    Constant,
    /// `base + amplitude * x / (width - 1)`.
    HorizontalRamp,
    /// Bright region `x < c0 + velocity * k` with `c0 = width / 4`, box
    /// anti-aliased at the edge. Velocity in pixels per frame.
    MovingEdge { velocity: f64 },
    /// `base * exp(rate * t)`, rate per microsecond.
    LogLinearRamp { rate: f64 },
    /// Static checkerboard with square cells of `cell` pixels.
    Checkerboard { cell: usize },
    /// `base * (1 + depth * sin(2 pi f t))`.
    Flicker { frequency: f64, depth: f64 },
}

impl PatternKind {
    pub fn name(&self) -> &'static str {
        match self {
            PatternKind::Constant => "constant",
            PatternKind::HorizontalRamp => "horizontal_ramp",
            PatternKind::MovingEdge { .. } => "moving_edge",
            PatternKind::LogLinearRamp { .. } => "log_linear_ramp",
            PatternKind::Checkerboard { .. } => "checkerboard",
            PatternKind::Flicker { .. } => "flicker",
        }
    }

    /// Kind with default parameters, by name.
    pub fn with_defaults(name: &str) -> Result<Self> {
        Ok(match name {
            "constant" => PatternKind::Constant,
            "horizontal_ramp" => PatternKind::HorizontalRamp,
            "moving_edge" => PatternKind::MovingEdge { velocity: 1.0 },
            "log_linear_ramp" => PatternKind::LogLinearRamp { rate: 1e-3 },
            "checkerboard" => PatternKind::Checkerboard { cell: 8 },
            "flicker" => PatternKind::Flicker {
                frequency: 50.0,
                depth: 0.5,
            },
            other => return Err(Error::config("pattern.kind", format!("unknown pattern `{other}`"))),
        })
    }
}

impl fmt::Display for PatternKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatternSpec {
    pub kind: PatternKind,
    pub width: usize,
    pub height: usize,
    pub fps: f64,
    pub duration: Micros,
    pub base_intensity: f64,
    pub amplitude: f64,
}

impl PatternSpec {
    pub fn new(kind: PatternKind, width: usize, height: usize, fps: f64, duration: Micros) -> Self {
        PatternSpec {
            kind,
            width,
            height,
            fps,
            duration,
            base_intensity: 10_000.0,
            amplitude: 20_000.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: &str| Err(Error::config(format!("pattern.{key}"), msg));
        if self.width == 0 || self.height == 0 {
            return bad("width", "dimensions must be positive");
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return bad("fps", "must be positive");
        }
        if self.duration == 0 {
            return bad("duration", "must be positive");
        }
        if !(self.base_intensity.is_finite() && self.base_intensity >= 0.0) {
            return bad("base_intensity", "must be non-negative");
        }
        if !(self.amplitude.is_finite() && self.amplitude >= 0.0) {
            return bad("amplitude", "must be non-negative");
        }
        match self.kind {
            PatternKind::MovingEdge { velocity } if !velocity.is_finite() => bad("velocity", "must be finite"),
            PatternKind::LogLinearRamp { rate } if !rate.is_finite() => bad("rate", "must be finite"),
            PatternKind::Checkerboard { cell: 0 } => bad("cell", "must be positive"),
            PatternKind::Flicker { frequency, depth }
                if !frequency.is_finite() || !(0.0..=1.0).contains(&depth) =>
            {
                bad("depth", "depth must be within [0, 1] and frequency finite")
            }
            _ => Ok(()),
        }
    }

    pub fn frame_count(&self) -> usize {
        (self.duration as f64 * self.fps / 1e6 - 1e-9).ceil().max(0.0) as usize
    }

    pub fn frame_timestamp(&self, k: usize) -> Micros {
        round_half_up_us(k as f64 * 1e6 / self.fps)
    }

    /// Edge column of a moving edge at frame `k`.
    pub fn edge_column(&self, k: usize) -> f64 {
        match self.kind {
            PatternKind::MovingEdge { velocity } => (self.width / 4) as f64 + velocity * k as f64,
            _ => f64::NAN,
        }
    }

    /// Intensity at pixel `(x, y)` of frame `k`.
    pub fn intensity(&self, x: usize, y: usize, k: usize) -> f64 {
        let (base, amp) = (self.base_intensity, self.amplitude);
        let t = self.frame_timestamp(k) as f64;
        match self.kind {
            PatternKind::Constant => base,
            PatternKind::HorizontalRamp => {
                if self.width > 1 {
                    base + amp * x as f64 / (self.width - 1) as f64
                } else {
                    base
                }
            }
            PatternKind::MovingEdge { .. } => {
                base + amp * (self.edge_column(k) - x as f64).clamp(0.0, 1.0)
            }
            PatternKind::LogLinearRamp { rate } => base * (rate * t).exp(),
            PatternKind::Checkerboard { cell } => {
                if (x / cell + y / cell).is_multiple_of(2) {
                    base + amp
                } else {
                    base
                }
            }
            PatternKind::Flicker { frequency, depth } => {
                base * (1.0 + depth * (2.0 * PI * frequency * t * 1e-6).sin())
            }
        }
    }

    pub fn render(&self, k: usize) -> Result<IntensityFrame> {
        let w = self.width;
        let data = (0..w * self.height)
            .map(|i| self.intensity(i % w, i / w, k))
            .collect();
        IntensityFrame::new(w, self.height, self.frame_timestamp(k), data)
    }

    /// Reads `pattern.*` keys. `kind_override` (the `--pattern` flag) wins
    /// over `pattern.kind`; width and height fall back to the shared sensor
    /// keys.
    pub fn from_run_config(rc: &RunConfig, kind_override: Option<&str>) -> Result<Self> {
        fn num<T: FromStr>(rc: &RunConfig, key: &str, default: T) -> Result<T> {
            match rc.pattern_value(key) {
                None => Ok(default),
                Some(v) => v
                    .parse()
                    .map_err(|_| Error::config(format!("pattern.{key}"), format!("cannot parse `{v}`"))),
            }
        }
        let name = kind_override
            .or_else(|| rc.pattern_value("kind"))
            .ok_or_else(|| Error::config("pattern.kind", "missing required key"))?;
        let kind = match PatternKind::with_defaults(name)? {
            PatternKind::MovingEdge { velocity } => PatternKind::MovingEdge {
                velocity: num(rc, "velocity", velocity)?,
            },
            PatternKind::LogLinearRamp { rate } => PatternKind::LogLinearRamp {
                rate: num(rc, "rate", rate)?,
            },
            PatternKind::Checkerboard { cell } => PatternKind::Checkerboard {
                cell: num(rc, "cell", cell)?,
            },
            PatternKind::Flicker { frequency, depth } => PatternKind::Flicker {
                frequency: num(rc, "frequency", frequency)?,
                depth: num(rc, "depth", depth)?,
            },
            k => k,
        };
        let dim = |key: &str| -> Result<usize> {
            match rc.pattern_value(key).or_else(|| rc.get(key)) {
                Some(v) => v
                    .parse()
                    .map_err(|_| Error::config(format!("pattern.{key}"), format!("cannot parse `{v}`"))),
                None => Err(Error::config(format!("pattern.{key}"), "missing required key")),
            }
        };
        let defaults = PatternSpec::new(kind, 0, 0, 960.0, 1_000_000);
        let spec = PatternSpec {
            kind,
            width: dim("width")?,
            height: dim("height")?,
            fps: num(rc, "fps", defaults.fps)?,
            duration: num(rc, "duration", defaults.duration)?,
            base_intensity: num(rc, "base_intensity", defaults.base_intensity)?,
            amplitude: num(rc, "amplitude", defaults.amplitude)?,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Renders every frame of a pattern.
pub fn generate(spec: &PatternSpec) -> Result<Vec<IntensityFrame>> {
    spec.validate()?;
    (0..spec.frame_count()).map(|k| spec.render(k)).collect()
}

impl FrameSource for PatternSpec {
    fn len(&self) -> usize {
        self.frame_count()
    }

    fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    fn timestamp(&self, index: usize) -> Micros {
        self.frame_timestamp(index)
    }

    fn frame(&self, index: usize) -> Result<Cow<'_, IntensityFrame>> {
        self.render(index).map(Cow::Owned)
    }
}
