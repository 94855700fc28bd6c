//! Random-access sequences of intensity frames.
//!
//! Simulators pull frames by index so that long inputs (a synthetic pattern,
//! a directory of PGM files) never have to be resident in memory at once.

use std::borrow::Cow;

use crate::error::{Error, Result};
use crate::types::{IntensityFrame, Micros};

pub trait FrameSource: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Frame dimensions `(width, height)`; every frame shares them.
    fn dims(&self) -> (usize, usize);

    fn timestamp(&self, index: usize) -> Micros;

    fn frame(&self, index: usize) -> Result<Cow<'_, IntensityFrame>>;
}

impl FrameSource for [IntensityFrame] {
    fn len(&self) -> usize {
        <[IntensityFrame]>::len(self)
    }

    fn dims(&self) -> (usize, usize) {
        self.first().map_or((0, 0), |f| (f.width(), f.height()))
    }

    fn timestamp(&self, index: usize) -> Micros {
        self[index].timestamp()
    }

    fn frame(&self, index: usize) -> Result<Cow<'_, IntensityFrame>> {
        Ok(Cow::Borrowed(&self[index]))
    }
}

impl FrameSource for Vec<IntensityFrame> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }

    fn dims(&self) -> (usize, usize) {
        self.as_slice().dims()
    }

    fn timestamp(&self, index: usize) -> Micros {
        self[index].timestamp()
    }

    fn frame(&self, index: usize) -> Result<Cow<'_, IntensityFrame>> {
        Ok(Cow::Borrowed(&self[index]))
    }
}

/// Checks that timestamps strictly increase.
pub fn check_time_order<S: FrameSource + ?Sized>(source: &S) -> Result<()> {
    for i in 1..source.len() {
        let (prev, cur) = (source.timestamp(i - 1), source.timestamp(i));
        if cur <= prev {
            return Err(Error::NonIncreasingTimestamp {
                prev_us: prev,
                got_us: cur,
            });
        }
    }
    Ok(())
}

/// End of the time span a source covers. Each frame holds until the next
/// one; the last frame holds for one mean frame period. A single frame
/// covers no time at all.
pub fn coverage_end<S: FrameSource + ?Sized>(source: &S) -> Micros {
    let n = source.len();
    if n < 2 {
        return if n == 0 { 0 } else { source.timestamp(0) };
    }
    let (first, last) = (source.timestamp(0), source.timestamp(n - 1));
    let period = (last - first) as f64 / (n - 1) as f64;
    last + crate::types::round_half_up_us(period)
}
