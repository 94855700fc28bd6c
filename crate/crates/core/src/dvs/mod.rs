//! Event-sensor model.
//!
//! Each frame goes through lens shading, log conversion and the two-pole
//! pixel low-pass. Between two consecutive frames the filtered log intensity
//! of a pixel is taken to move linearly, and every threshold it crosses on
//! the way produces an event (or, inside the refractory period, only moves
//! the reference level).

mod faults;
mod fixed_rate;
mod lowpass;
mod preprocess;

pub use faults::{assign_faults, fault_for_pixel, Fault};
pub use fixed_rate::{events_from_frames, fix_frame_rate, EventGrid};
pub use lowpass::{time_constant_us, LowPassState, FULL_SCALE_INTENSITY};
pub use preprocess::{
    apply_lens_shading, log_intensity, shading_gain, shading_gains, to_log_intensity, LogFrame,
};

use rayon::prelude::*;

use crate::config::{DvsConfig, DvsMode};
use crate::error::{Error, Result};
use crate::rng::{rng_for, Stage, StreamId, StreamRng};
use crate::source::{check_time_order, FrameSource};
use crate::types::{round_half_up_us, sort_events, Event, EventFrame, IntensityFrame, Micros, Polarity};

/// Slack on threshold comparisons so that a ramp of exactly `n * theta`
/// yields `n` crossings despite accumulated rounding in the reference level.
pub const CROSSING_TOLERANCE: f64 = 1e-9;

/// Hot-pixel event period when the refractory period is zero.
pub const HOT_PIXEL_DEFAULT_PERIOD_US: Micros = 100;

/// Smallest effective threshold, as a fraction of the configured mean.
pub const MIN_THRESHOLD_FRACTION: f64 = 0.1;

/// Simulation memory of one pixel.
#[derive(Debug, Clone)]
pub struct PixelState {
    /// Log-intensity level of the last threshold update.
    pub ref_log: f64,
    pub lpf: LowPassState,
    /// Time-invariant mismatch added to both thresholds.
    pub threshold_offset: f64,
    pub last_event_t: Option<Micros>,
    pub fault: Fault,
    /// Thresholds in force until the next crossing, noise included.
    pub pending_pos: f64,
    pub pending_neg: f64,
    noise: StreamRng,
}

impl PixelState {
    fn new(cfg: &DvsConfig, pixel: usize) -> Self {
        let threshold_offset =
            rng_for(cfg.seed, StreamId::pixel(Stage::Mismatch, pixel)).gaussian(cfg.mismatch_sigma);
        let mut state = PixelState {
            ref_log: 0.0,
            lpf: LowPassState::settled(0.0),
            threshold_offset,
            last_event_t: None,
            fault: fault_for_pixel(cfg, pixel),
            pending_pos: cfg.threshold_pos,
            pending_neg: cfg.threshold_neg,
            noise: rng_for(cfg.seed, StreamId::pixel(Stage::ThresholdNoise, pixel)),
        };
        state.redraw_thresholds(cfg);
        state
    }

    /// Recomputes both thresholds: mean + mismatch + external noise +
    /// in-pixel noise, floored at a fraction of the mean.
    fn redraw_thresholds(&mut self, cfg: &DvsConfig) {
        let mut draw = |mean: f64| {
            let ext = self.noise.gaussian(cfg.external_noise_sigma);
            let inp = self.noise.gaussian(cfg.inpixel_noise_sigma);
            (mean + self.threshold_offset + ext + inp).max(MIN_THRESHOLD_FRACTION * mean)
        };
        self.pending_pos = draw(cfg.threshold_pos);
        self.pending_neg = draw(cfg.threshold_neg);
    }

    fn threshold(&self, polarity: Polarity) -> f64 {
        match polarity {
            Polarity::On => self.pending_pos,
            Polarity::Off => self.pending_neg,
        }
    }

    /// Filtered log intensity at the last processed frame.
    pub fn filtered(&self) -> f64 {
        self.lpf.stage2
    }
}

/// One frame interval as seen by a pixel.
struct Interval {
    t_prev: Micros,
    t_new: Micros,
    first: bool,
}

/// Advances one filter step for `pixel` and returns the filtered log value.
pub fn lowpass_step(
    state: &mut PixelState,
    input_log: f64,
    linear_intensity: f64,
    dt: Micros,
    cfg: &DvsConfig,
) -> f64 {
    let tau = time_constant_us(cfg, linear_intensity);
    state.lpf.step(input_log, dt, tau)
}

#[allow(clippy::too_many_arguments)]
fn step_pixel(
    state: &mut PixelState,
    cfg: &DvsConfig,
    grid: Option<&EventGrid>,
    iv: &Interval,
    x: u32,
    y: u32,
    shaded: f64,
    out: &mut Vec<Event>,
) {
    let v_prev = state.filtered();
    let dt = iv.t_new - iv.t_prev;
    let v_new = lowpass_step(state, log_intensity(shaded, cfg.log_epsilon), shaded, dt, cfg);

    match state.fault {
        Fault::Cold => {
            state.ref_log = v_new;
            return;
        }
        Fault::Hot => {
            state.ref_log = v_new;
            match grid {
                Some(grid) => {
                    for k in grid.indices_in(iv.t_prev, iv.t_new, iv.first) {
                        let t = grid.timestamp(k);
                        out.push(Event::new(t, x, y, Polarity::On));
                        state.last_event_t = Some(t);
                    }
                }
                None => {
                    let period = if cfg.refractory_us > 0 {
                        cfg.refractory_us
                    } else {
                        HOT_PIXEL_DEFAULT_PERIOD_US
                    };
                    let mut t = state.last_event_t.unwrap_or(iv.t_prev) + period;
                    while t <= iv.t_new {
                        out.push(Event::new(t, x, y, Polarity::On));
                        state.last_event_t = Some(t);
                        t += period;
                    }
                }
            }
            return;
        }
        Fault::Normal => {}
    }

    let slope = (v_new - v_prev) / dt as f64;
    loop {
        let diff = v_new - state.ref_log;
        let polarity = if diff > 0.0 {
            Polarity::On
        } else if diff < 0.0 {
            Polarity::Off
        } else {
            break;
        };
        let theta = state.threshold(polarity);
        if diff.abs() < theta - CROSSING_TOLERANCE {
            break;
        }
        let level = state.ref_log + polarity.sign() as f64 * theta;
        let t_cross = if slope != 0.0 {
            (iv.t_prev as f64 + (level - v_prev) / slope).clamp(iv.t_prev as f64, iv.t_new as f64)
        } else {
            iv.t_new as f64
        };
        let t = round_half_up_us(t_cross);
        state.ref_log = level;
        let refractory = state
            .last_event_t
            .is_some_and(|last| t.saturating_sub(last) < cfg.refractory_us);
        if !refractory {
            out.push(Event::new(t, x, y, polarity));
            state.last_event_t = Some(t);
        }
        state.redraw_thresholds(cfg);
    }
}

/// Stateful event-sensor simulator; feed it frames in time order.
#[derive(Debug, Clone)]
pub struct DvsSimulator {
    cfg: DvsConfig,
    gains: Vec<f64>,
    pixels: Vec<PixelState>,
    last_frame_t: Option<Micros>,
    intervals: u64,
    grid: Option<EventGrid>,
}

impl DvsSimulator {
    /// Draws per-pixel mismatch and faults for a new conversion run.
    pub fn new(cfg: DvsConfig) -> Result<Self> {
        cfg.validate()?;
        let gains = shading_gains(cfg.width, cfg.height, &cfg.lens_shading_coeffs)?;
        let pixels = (0..cfg.width * cfg.height)
            .into_par_iter()
            .map(|i| PixelState::new(&cfg, i))
            .collect();
        Ok(DvsSimulator {
            cfg,
            gains,
            pixels,
            last_frame_t: None,
            intervals: 0,
            grid: None,
        })
    }

    pub fn config(&self) -> &DvsConfig {
        &self.cfg
    }

    pub fn pixels(&self) -> &[PixelState] {
        &self.pixels
    }

    pub fn threshold_offsets(&self) -> Vec<f64> {
        self.pixels.iter().map(|p| p.threshold_offset).collect()
    }

    pub fn faults(&self) -> Vec<Fault> {
        self.pixels.iter().map(|p| p.fault).collect()
    }

    pub fn last_frame_t(&self) -> Option<Micros> {
        self.last_frame_t
    }

    /// Sets the event-frame grid used by hot pixels in fixed-rate mode.
    pub fn set_grid(&mut self, grid: EventGrid) {
        self.grid = Some(grid);
    }

    /// Seeds reference levels and filter states from the first frame. No
    /// events are produced.
    pub fn initialize(&mut self, frame: &IntensityFrame) -> Result<()> {
        frame.check_dims(self.cfg.width, self.cfg.height)?;
        let eps = self.cfg.log_epsilon;
        for ((p, &l), &g) in self.pixels.iter_mut().zip(frame.data()).zip(&self.gains) {
            let v = log_intensity(l * g, eps);
            p.ref_log = v;
            p.lpf = LowPassState::settled(v);
        }
        self.last_frame_t = Some(frame.timestamp());
        self.intervals = 0;
        Ok(())
    }

    /// Processes the interval from the previous frame to `frame` and returns
    /// its events sorted by `(t, y, x)`. The first frame only initializes.
    pub fn process_frame(&mut self, frame: &IntensityFrame) -> Result<Vec<Event>> {
        frame.check_dims(self.cfg.width, self.cfg.height)?;
        let Some(t_prev) = self.last_frame_t else {
            self.initialize(frame)?;
            return Ok(Vec::new());
        };
        if frame.timestamp() <= t_prev {
            return Err(Error::NonIncreasingTimestamp {
                prev_us: t_prev,
                got_us: frame.timestamp(),
            });
        }
        let iv = Interval {
            t_prev,
            t_new: frame.timestamp(),
            first: self.intervals == 0,
        };
        let cfg = &self.cfg;
        let grid = match cfg.mode {
            DvsMode::FixedRate { .. } => self.grid.as_ref(),
            DvsMode::FreeRunning => None,
        };
        let w = cfg.width;
        let gains = &self.gains;
        let mut events: Vec<Event> = self
            .pixels
            .par_chunks_mut(w)
            .zip(frame.data().par_chunks(w))
            .enumerate()
            .flat_map_iter(|(y, (states, row))| {
                let mut out = Vec::new();
                for (x, (state, &l)) in states.iter_mut().zip(row).enumerate() {
                    let shaded = l * gains[y * w + x];
                    step_pixel(state, cfg, grid, &iv, x as u32, y as u32, shaded, &mut out);
                }
                out
            })
            .collect();
        sort_events(&mut events);
        self.last_frame_t = Some(frame.timestamp());
        self.intervals += 1;
        Ok(events)
    }
}

/// Output of a full conversion run.
#[derive(Debug, Clone, PartialEq)]
pub struct DvsOutput {
    /// Free-running events, or the snapped and de-duplicated events in
    /// fixed-rate mode.
    pub events: Vec<Event>,
    pub frames: Option<Vec<EventFrame>>,
}

/// Converts a frame sequence into events. The first frame sets the
/// reference; fixed-rate mode additionally snaps events to the event-frame
/// grid spanning the first to the last source timestamp.
pub fn simulate_dvs<S: FrameSource + ?Sized>(source: &S, cfg: &DvsConfig) -> Result<DvsOutput> {
    simulate_dvs_with(source, DvsSimulator::new(cfg.clone())?)
}

/// Same as [`simulate_dvs`] with a prepared simulator.
pub fn simulate_dvs_with<S: FrameSource + ?Sized>(source: &S, mut sim: DvsSimulator) -> Result<DvsOutput> {
    let n = source.len();
    if n < 2 {
        return Err(Error::TooFewFrames { required: 2, got: n });
    }
    check_time_order(source)?;
    let (start, end) = (source.timestamp(0), source.timestamp(n - 1));
    let grid = match sim.cfg.mode {
        DvsMode::FixedRate { event_fps } => Some(EventGrid::new(event_fps, start, end)),
        DvsMode::FreeRunning => None,
    };
    if let Some(g) = grid {
        sim.set_grid(g);
    }
    sim.initialize(source.frame(0)?.as_ref())?;
    let mut events = Vec::new();
    for i in 1..n {
        events.extend(sim.process_frame(source.frame(i)?.as_ref())?);
    }
    // intervals share their boundary timestamp
    sort_events(&mut events);
    Ok(match grid {
        Some(g) => {
            let frames = fix_frame_rate(&events, &g, sim.cfg.width, sim.cfg.height);
            DvsOutput {
                events: events_from_frames(&frames),
                frames: Some(frames),
            }
        }
        None => DvsOutput {
            events,
            frames: None,
        },
    })
}
