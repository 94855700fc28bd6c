//! Oracle checks shared by the test suites and `evsim selftest`.
//!
//! [`reference_events`] is a deliberately naive event generator: it walks
//! every frame interval in 0.1 us steps and compares the interpolated log
//! intensity against the reference level at each step. It shares no code
//! with [`crate::dvs`] and only supports noise-free, fault-free settings.

use std::time::Instant;

use crate::cis::simulate_cis;
use crate::config::{CisConfig, DvsConfig, DvsMode};
use crate::dvs::{simulate_dvs, CROSSING_TOLERANCE};
use crate::error::{Error, Result};
use crate::patterns::{generate, PatternKind, PatternSpec};
use crate::rng::{rng_for, Stage, StreamId};
use crate::types::{Event, IntensityFrame, Micros, Polarity};

/// Sub-steps per microsecond of the reference integrator.
pub const STEPS_PER_US: u64 = 10;

/// Events of a noise-free sensor, by brute-force time stepping.
pub fn reference_events(frames: &[IntensityFrame], cfg: &DvsConfig) -> Result<Vec<Event>> {
    if cfg.mismatch_sigma != 0.0
        || cfg.external_noise_sigma != 0.0
        || cfg.inpixel_noise_sigma != 0.0
        || cfg.bad_pixel_prob != 0.0
        || cfg.mode != DvsMode::FreeRunning
    {
        return Err(Error::config("mode", "reference integrator needs a noise-free free-running sensor"));
    }
    if frames.len() < 2 {
        return Err(Error::TooFewFrames {
            required: 2,
            got: frames.len(),
        });
    }
    let (w, h) = (cfg.width, cfg.height);
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let mut events = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let r = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt() / w as f64;
            let gain: f64 = cfg
                .lens_shading_coeffs
                .iter()
                .enumerate()
                .map(|(i, c)| c * r.powi(i as i32))
                .sum::<f64>()
                .max(0.0);
            let lin = |f: &IntensityFrame| f.get(x, y) * gain;
            let log = |l: f64| (l + cfg.log_epsilon).ln();

            let v0 = log(lin(&frames[0]));
            let (mut s1, mut s2) = (v0, v0);
            let mut reference = v0;
            let mut last: Option<Micros> = None;
            for pair in frames.windows(2) {
                let (t_prev, t_new) = (pair[0].timestamp(), pair[1].timestamp());
                let l = lin(&pair[1]);
                let mut tau = 1e6 / (2.0 * std::f64::consts::PI * cfg.lpf_cutoff_hz);
                if cfg.intensity_scaled_bandwidth {
                    tau /= (l / crate::dvs::FULL_SCALE_INTENSITY).clamp(0.01, 1.0);
                }
                let decay = (-((t_new - t_prev) as f64) / tau).exp();
                let u = log(l);
                let v_prev = s2;
                s1 = u + (s1 - u) * decay;
                s2 = s1 + (s2 - s1) * decay;
                let v_new = s2;

                let steps = (t_new - t_prev) * STEPS_PER_US;
                let span = (t_new - t_prev) as f64;
                let at = |t: f64| v_prev + (v_new - v_prev) * ((t - t_prev as f64) / span);
                for s in 1..=steps {
                    let t = t_prev as f64 + s as f64 / STEPS_PER_US as f64;
                    let v = at(t);
                    loop {
                        let (pol, theta) = if v > reference {
                            (Polarity::On, cfg.threshold_pos)
                        } else {
                            (Polarity::Off, cfg.threshold_neg)
                        };
                        if (v - reference).abs() < theta - CROSSING_TOLERANCE {
                            break;
                        }
                        let level = reference + pol.sign() as f64 * theta;
                        // the step only brackets the crossing; bisect for the time
                        // the interpolated signal reaches the level
                        let reached = |t: f64| pol.sign() as f64 * (at(t) - level) >= -CROSSING_TOLERANCE;
                        let (mut lo, mut hi) = (t - 1.0 / STEPS_PER_US as f64, t);
                        if reached(lo) {
                            lo = t_prev as f64;
                        }
                        for _ in 0..60 {
                            let mid = 0.5 * (lo + hi);
                            if reached(mid) {
                                hi = mid;
                            } else {
                                lo = mid;
                            }
                        }
                        reference = level;
                        let stamp = (hi + 0.5).floor() as Micros;
                        if last.is_none_or(|l| stamp - l >= cfg.refractory_us) {
                            events.push(Event::new(stamp, x as u32, y as u32, pol));
                            last = Some(stamp);
                        }
                    }
                }
            }
        }
    }
    Ok(events)
}

/// Per-pixel comparison: identical counts and polarities, timestamps within
/// `tolerance_us`. Returns a description of the first difference.
pub fn compare_events(got: &[Event], want: &[Event], width: usize, height: usize, tolerance_us: u64) -> Option<String> {
    let split = |ev: &[Event]| {
        let mut per = vec![Vec::new(); width * height];
        for e in ev {
            per[e.y as usize * width + e.x as usize].push(*e);
        }
        per.iter_mut().for_each(|p: &mut Vec<Event>| p.sort_by_key(|e| e.t));
        per
    };
    let (g, w) = (split(got), split(want));
    for (i, (a, b)) in g.iter().zip(&w).enumerate() {
        if a.len() != b.len() {
            return Some(format!("pixel {i}: {} events vs {} expected", a.len(), b.len()));
        }
        for (ea, eb) in a.iter().zip(b) {
            if ea.polarity != eb.polarity || ea.t.abs_diff(eb.t) > tolerance_us {
                return Some(format!("pixel {i}: {ea:?} vs expected {eb:?}"));
            }
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &'static str, failure: Option<String>, ok_detail: String) -> Self {
        CheckResult {
            name,
            passed: failure.is_none(),
            detail: failure.unwrap_or(ok_detail),
        }
    }
}

/// Event generator under test.
pub type Simulate<'a> = &'a dyn Fn(&[IntensityFrame], &DvsConfig) -> Result<Vec<Event>>;

pub fn default_simulate(frames: &[IntensityFrame], cfg: &DvsConfig) -> Result<Vec<Event>> {
    simulate_dvs(frames, cfg).map(|o| o.events)
}

/// A single-pixel log ramp of total change `delta` over one interval of
/// `interval_us`.
pub fn log_ramp(delta: f64, interval_us: u64) -> Result<Vec<IntensityFrame>> {
    let spec = PatternSpec {
        base_intensity: 1000.0,
        ..PatternSpec::new(
            PatternKind::LogLinearRamp {
                rate: delta / interval_us as f64,
            },
            1,
            1,
            1e6 / interval_us as f64,
            2 * interval_us,
        )
    };
    generate(&spec)
}

/// A ramp of 0.9 at threshold 0.15 must give exactly six ON events, evenly
/// spaced to within 1 us.
pub fn ramp_law_check(sim: Simulate) -> CheckResult {
    let run = || -> Result<Option<String>> {
        let frames = log_ramp(0.9, 1000)?;
        let cfg = DvsConfig::ideal(1, 1, 0.15);
        let ev = sim(&frames, &cfg)?;
        if ev.len() != 6 {
            return Ok(Some(format!("{} events, expected 6", ev.len())));
        }
        for (i, e) in ev.iter().enumerate() {
            let ideal = (i + 1) as f64 * 1000.0 / 6.0;
            if e.polarity != Polarity::On || (e.t as f64 - ideal).abs() > 1.0 {
                return Ok(Some(format!("event {i}: {e:?}, expected ON near {ideal:.2} us")));
            }
        }
        Ok(None)
    };
    let failure = run().unwrap_or_else(|e| Some(e.to_string()));
    CheckResult::new("ramp law", failure, "6 ON events, even spacing".into())
}

/// Moving edge at 2 px/frame with one source frame of line readout per row
/// must shear by exactly 2 px per row, pixel for pixel.
pub fn rolling_shutter_check() -> CheckResult {
    let run = || -> Result<Option<String>> {
        let spec = PatternSpec {
            base_intensity: 100.0,
            amplitude: 800.0,
            ..PatternSpec::new(PatternKind::MovingEdge { velocity: 2.0 }, 32, 12, 1000.0, 20_000)
        };
        let cfg = CisConfig {
            exposure_time: 0.0,
            line_readout_time: 1000.0,
            min_illuminance: 0.0,
            slope: 1.0,
            noise_lsb: 0.0,
            ..CisConfig::new(32, 12, 50.0)
        };
        let out = simulate_cis(&spec, &cfg)?;
        let Some(frame) = out.first() else {
            return Ok(Some("no CIS frame produced".into()));
        };
        // row r is read while source frame r is active
        for y in 0..12 {
            for x in 0..32 {
                let want = spec.intensity(x, y, y).round() as u16;
                if frame.data[y * 32 + x] != want {
                    return Ok(Some(format!("pixel ({x}, {y}): {} vs {want}", frame.data[y * 32 + x])));
                }
            }
            let edge = |r: usize| frame.data[r * 32..(r + 1) * 32].iter().position(|&v| v < 500);
            if edge(y).zip(edge(0)).map(|(a, b)| a - b) != Some(2 * y) {
                return Ok(Some(format!("row {y}: edge shift {:?}", edge(y))));
            }
        }
        Ok(None)
    };
    let failure = run().unwrap_or_else(|e| Some(e.to_string()));
    CheckResult::new("rolling shutter shear", failure, "2 px/row shear, pixel exact".into())
}

/// Randomized noise-free 8x8 scene with at most ten frames.
pub fn random_scene(seed: u64) -> (PatternSpec, DvsConfig) {
    let mut rng = rng_for(seed, StreamId::global(Stage::Custom(0x5ce7e)));
    let mut pick = |lo: f64, hi: f64| lo + (hi - lo) * rng.uniform();
    let kind = match (pick(0.0, 6.0)) as u32 {
        0 | 1 => PatternKind::MovingEdge {
            velocity: pick(-1.5, 1.5),
        },
        2 => PatternKind::LogLinearRamp {
            rate: pick(-2e-3, 2e-3),
        },
        3 | 4 => PatternKind::Flicker {
            frequency: pick(20.0, 800.0),
            depth: pick(0.1, 0.9),
        },
        _ => PatternKind::HorizontalRamp,
    };
    let fps = pick(500.0, 4000.0);
    let frames = 2 + (pick(0.0, 9.0) as u64);
    let duration = (frames as f64 * 1e6 / fps).floor() as u64;
    let spec = PatternSpec {
        base_intensity: pick(500.0, 20_000.0),
        amplitude: pick(1_000.0, 40_000.0),
        ..PatternSpec::new(kind, 8, 8, fps, duration)
    };
    let threshold = pick(0.05, 0.3);
    let mut cfg = DvsConfig::ideal(8, 8, threshold);
    cfg.threshold_neg = threshold * pick(0.7, 1.3);
    cfg.log_epsilon = pick(0.01, 10.0);
    cfg.refractory_us = [0, 0, 20, 100][pick(0.0, 4.0) as usize];
    if pick(0.0, 1.0) < 0.6 {
        cfg.lpf_cutoff_hz = pick(100.0, 3000.0);
        cfg.intensity_scaled_bandwidth = pick(0.0, 1.0) < 0.3;
    }
    if pick(0.0, 1.0) < 0.5 {
        cfg.lens_shading_coeffs = vec![1.0, pick(-0.8, 0.2), pick(-0.5, 0.5)];
    }
    (spec, cfg)
}

/// Simulator against the reference integrator on `scenes` random scenes.
pub fn equivalence_check(scenes: u64, sim: Simulate) -> CheckResult {
    let start = Instant::now();
    let mut total = 0usize;
    let mut failure = None;
    for seed in 0..scenes {
        let (spec, cfg) = random_scene(seed);
        let outcome = generate(&spec).and_then(|frames| {
            let got = sim(&frames, &cfg)?;
            let want = reference_events(&frames, &cfg)?;
            total += want.len();
            Ok(compare_events(&got, &want, cfg.width, cfg.height, 1))
        });
        match outcome {
            Ok(None) => {}
            Ok(Some(diff)) => {
                failure = Some(format!("scene {seed} ({}): {diff}", spec.kind));
                break;
            }
            Err(e) => {
                failure = Some(format!("scene {seed}: {e}"));
                break;
            }
        }
    }
    CheckResult::new(
        "brute-force equivalence",
        failure,
        format!("{scenes} scenes, {total} events, {:.1?}", start.elapsed()),
    )
}

pub fn run_all() -> Vec<CheckResult> {
    vec![
        ramp_law_check(&default_simulate),
        rolling_shutter_check(),
        equivalence_check(50, &default_simulate),
    ]
}
