//! Shared data model: intensity frames, events and event frames.

use crate::error::{Error, Result};

/// Timestamps are integer microseconds everywhere.
pub type Micros = u64;

/// Rounds a non-negative microsecond value half-up to an integer timestamp.
#[inline]
pub fn round_half_up_us(t: f64) -> Micros {
    (t + 0.5).floor().max(0.0) as Micros
}

/// One timestamped grid of linear scene intensities, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityFrame {
    width: usize,
    height: usize,
    timestamp: Micros,
    data: Vec<f64>,
}

impl IntensityFrame {
    /// Builds a frame, checking the length and that every value is finite and
    /// non-negative.
    pub fn new(width: usize, height: usize, timestamp: Micros, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidFrame(format!(
                "{} values for a {width}x{height} frame",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidFrame(format!(
                "intensity {} at index {i} is negative or not finite",
                data[i]
            )));
        }
        Ok(IntensityFrame {
            width,
            height,
            timestamp,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, timestamp: Micros, value: f64) -> Result<Self> {
        Self::new(width, height, timestamp, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn timestamp(&self) -> Micros {
        self.timestamp
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn with_timestamp(mut self, timestamp: Micros) -> Self {
        self.timestamp = timestamp;
        self
    }

    pub(crate) fn check_dims(&self, width: usize, height: usize) -> Result<()> {
        if self.width != width || self.height != height {
            return Err(Error::DimensionMismatch {
                expected_w: width,
                expected_h: height,
                actual_w: self.width,
                actual_h: self.height,
            });
        }
        Ok(())
    }

    /// Maps every value through `f`, keeping dimensions and timestamp.
    /// The caller guarantees `f` keeps values finite and non-negative.
    pub(crate) fn map(&self, f: impl Fn(usize, f64) -> f64) -> Self {
        IntensityFrame {
            width: self.width,
            height: self.height,
            timestamp: self.timestamp,
            data: self.data.iter().enumerate().map(|(i, &v)| f(i, v)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarity {
    Off = -1,
    On = 1,
}

impl Polarity {
    pub fn sign(self) -> i8 {
        self as i8
    }

    pub fn from_sign(s: i8) -> Option<Self> {
        match s {
            1 => Some(Polarity::On),
            -1 => Some(Polarity::Off),
            _ => None,
        }
    }
}

/// A single DVS event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub t: Micros,
    pub x: u32,
    pub y: u32,
    pub polarity: Polarity,
}

impl Event {
    pub fn new(t: Micros, x: u32, y: u32, polarity: Polarity) -> Self {
        Event { t, x, y, polarity }
    }
}

/// Sorts events by `(t, y, x)`. The sort is stable, so events of one pixel
/// sharing a timestamp keep their emission order.
pub fn sort_events(events: &mut [Event]) {
    events.sort_by_key(|e| (e.t, e.y, e.x));
}

/// Fixed-rate snapshot holding at most one polarity per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventFrame {
    pub width: usize,
    pub height: usize,
    pub timestamp: Micros,
    /// Row-major values in {-1, 0, +1}.
    pub data: Vec<i8>,
}

impl EventFrame {
    pub fn empty(width: usize, height: usize, timestamp: Micros) -> Self {
        EventFrame {
            width,
            height,
            timestamp,
            data: vec![0; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> i8 {
        self.data[y * self.width + x]
    }

    pub fn nonzero(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }
}
