//! Snapping events onto a fixed event-frame grid.

use crate::types::{round_half_up_us, Event, EventFrame, Micros, Polarity};

/// Allowed timestamps `start + k * 1e6 / fps` for `k = 0..=last_index`,
/// where the last grid point is the latest one not after `end`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventGrid {
    pub start: Micros,
    pub fps: f64,
    pub last_index: u64,
}

impl EventGrid {
    pub fn new(fps: f64, start: Micros, end: Micros) -> Self {
        let span = end.saturating_sub(start) as f64;
        EventGrid {
            start,
            fps,
            last_index: (span * fps / 1e6 + 1e-9).floor() as u64,
        }
    }

    pub fn len(&self) -> usize {
        self.last_index as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn ideal(&self, k: u64) -> f64 {
        self.start as f64 + k as f64 * 1e6 / self.fps
    }

    /// Integer timestamp of grid point `k`.
    pub fn timestamp(&self, k: u64) -> Micros {
        round_half_up_us(self.ideal(k))
    }

    /// Nearest grid index to `t`; a tie goes to the later point. Events past
    /// the last grid point land on it.
    pub fn nearest(&self, t: Micros) -> u64 {
        let pos = (t as f64 - self.start as f64) * self.fps / 1e6;
        ((pos + 0.5).floor().max(0.0) as u64).min(self.last_index)
    }

    /// Grid indices whose ideal time lies in `(after, until]`, or in
    /// `[after, until]` when `inclusive_start` is set.
    pub fn indices_in(&self, after: Micros, until: Micros, inclusive_start: bool) -> impl Iterator<Item = u64> + '_ {
        let first = ((after as f64 - self.start as f64) * self.fps / 1e6).floor().max(0.0) as u64;
        (first..=self.last_index.max(first))
            .take_while(move |&k| self.ideal(k) <= until as f64)
            .filter(move |&k| {
                let t = self.ideal(k);
                t > after as f64 || (inclusive_start && t >= after as f64)
            })
    }
}

/// Collapses a time-sorted event stream into one frame per grid point.
/// Each event goes to its nearest grid point; when a pixel gets several
/// events in one frame only the earliest one's polarity survives.
pub fn fix_frame_rate(
    events: &[Event],
    grid: &EventGrid,
    width: usize,
    height: usize,
) -> Vec<EventFrame> {
    let mut frames: Vec<EventFrame> = (0..grid.len() as u64)
        .map(|k| EventFrame::empty(width, height, grid.timestamp(k)))
        .collect();
    for e in events {
        let k = grid.nearest(e.t) as usize;
        let cell = &mut frames[k].data[e.y as usize * width + e.x as usize];
        if *cell == 0 {
            *cell = e.polarity.sign();
        }
    }
    frames
}

/// Event list equivalent of a set of event frames, in canonical order.
pub fn events_from_frames(frames: &[EventFrame]) -> Vec<Event> {
    frames
        .iter()
        .flat_map(|f| {
            f.data.iter().enumerate().filter_map(move |(i, &v)| {
                Polarity::from_sign(v)
                    .map(|p| Event::new(f.timestamp, (i % f.width) as u32, (i / f.width) as u32, p))
            })
        })
        .collect()
}
