//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL
//! line each and exits non-zero if any failed.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;
use std::time::{Duration, Instant};

use sha2::{Digest, Sha256};

use evsim::cis::operation_range_dn;
use evsim::cli;
use evsim::io::{output, pgm};
use evsim::metrics::{patch_min, Metric, PATCH_STRIDE, PATCH_WINDOW};
use evsim::rng::{rng_for, Stage, StreamId};
use evsim::selftest::{self, log_ramp, reference_events};
use evsim::{
    psnr, simulate_cis, simulate_dvs, ssim, CisConfig, DvsConfig, DvsMode, DvsSimulator, Event, GrayFrame,
    IntensityFrame, Micros, PatternKind, PatternSpec, Polarity,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn population_std(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

fn sample_std(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    population_std(v) * (n / (n - 1.0)).sqrt()
}

fn ramp_law() -> Outcome {
    let start = Instant::now();
    let frames = log_ramp(0.9, 1000).map_err(|e| e.to_string())?;
    let cfg = DvsConfig::ideal(1, 1, 0.15);
    let ev = simulate_dvs(&frames, &cfg).map_err(|e| e.to_string())?.events;
    let oracle = reference_events(&frames, &cfg).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    if ev.len() != 6 || ev.iter().any(|e| e.polarity != Polarity::On) {
        return Err(format!("{} events: {ev:?}", ev.len()));
    }
    let gaps: Vec<i64> = ev.windows(2).map(|p| p[1].t as i64 - p[0].t as i64).collect();
    let spread = gaps.iter().max().unwrap() - gaps.iter().min().unwrap();
    let max_dev = ev
        .iter()
        .zip(&oracle)
        .map(|(a, b)| a.t.abs_diff(b.t))
        .max()
        .unwrap_or(u64::MAX);
    check(
        oracle.len() == 6 && spread <= 1 && max_dev <= 1 && elapsed < Duration::from_secs(1),
        format!(
            "6 ON events at {:?}, gap spread {spread} us, oracle deviation {max_dev} us, {elapsed:.1?}",
            ev.iter().map(|e| e.t).collect::<Vec<_>>()
        ),
    )
}

fn refractory_stress() -> Outcome {
    let spec = PatternSpec {
        base_intensity: 2000.0,
        amplitude: 40_000.0,
        ..PatternSpec::new(PatternKind::Flicker { frequency: 250.0, depth: 0.95 }, 64, 48, 10_000.0, 200_000)
    };
    let mut cfg = DvsConfig::new(64, 48);
    cfg.refractory_us = 100;
    cfg.lpf_cutoff_hz = 20_000.0;
    cfg.bad_pixel_prob = 0.01;
    cfg.seed = 11;
    let ev = simulate_dvs(&spec, &cfg).map_err(|e| e.to_string())?.events;
    let mut last: HashMap<(u32, u32), Micros> = HashMap::new();
    let mut violations = 0usize;
    let mut min_gap = u64::MAX;
    for e in &ev {
        if let Some(prev) = last.insert((e.x, e.y), e.t) {
            let gap = e.t - prev;
            min_gap = min_gap.min(gap);
            if gap < 100 {
                violations += 1;
            }
        }
    }
    check(
        ev.len() >= 100_000 && violations == 0,
        format!("{} events, {violations} gaps below 100 us, smallest gap {min_gap} us", ev.len()),
    )
}

fn fixed_rate_grid() -> Outcome {
    let spec = PatternSpec::new(PatternKind::MovingEdge { velocity: 0.9 }, 48, 32, 5000.0, 250_000);
    let mut cfg = DvsConfig::new(48, 32);
    cfg.mode = DvsMode::FixedRate { event_fps: 960.0 };
    cfg.refractory_us = 0;
    cfg.bad_pixel_prob = 0.02;
    cfg.seed = 5;
    let out = simulate_dvs(&spec, &cfg).map_err(|e| e.to_string())?;
    let frames = out.frames.ok_or("no event frames")?;
    // grid points t0 + k / 960 s, rounded half up to whole microseconds
    let grid: HashMap<Micros, usize> = (0..frames.len())
        .map(|k| (((k as f64 * 1e6 / 960.0) + 0.5).floor() as Micros, k))
        .collect();
    let mut seen = HashSet::new();
    let mut off_grid = 0usize;
    let mut duplicates = 0usize;
    let mut frame_mismatch = 0usize;
    for e in &out.events {
        match grid.get(&e.t) {
            None => off_grid += 1,
            Some(&k) => {
                if frames[k].timestamp != e.t || frames[k].get(e.x as usize, e.y as usize) != e.polarity.sign() {
                    frame_mismatch += 1;
                }
            }
        }
        if !seen.insert((e.t, e.x, e.y)) {
            duplicates += 1;
        }
    }
    let in_frames: usize = frames.iter().map(|f| f.nonzero()).sum();
    check(
        !out.events.is_empty()
            && off_grid == 0
            && duplicates == 0
            && frame_mismatch == 0
            && in_frames == out.events.len(),
        format!(
            "{} events over {} frames: {off_grid} off grid, {duplicates} duplicate (pixel, frame), {frame_mismatch} frame disagreements",
            out.events.len(),
            frames.len()
        ),
    )
}

fn brute_force_equivalence() -> Outcome {
    let start = Instant::now();
    let r = selftest::equivalence_check(50, &selftest::default_simulate);
    let elapsed = start.elapsed();
    check(r.passed && elapsed < Duration::from_secs(60), r.detail)
}

fn hash_tree(root: &Path) -> BTreeMap<String, String> {
    fn walk(dir: &Path, root: &Path, out: &mut BTreeMap<String, String>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(&path, root, out);
            } else if path.file_name().unwrap() != cli::RUN_MANIFEST {
                let digest = Sha256::digest(std::fs::read(&path).unwrap());
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, format!("{digest:x}"));
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = dir.path().join("run.cfg");
    std::fs::write(
        &config,
        "width = 96\nheight = 64\nseed = 42\n\
         fps = 60\nexposure_time = 8000\nline_readout_time = 20\nnoise_lsb = 5.2\n\
         threshold_pos = 0.15\nthreshold_neg = 0.15\nbad_pixel_prob = 0.01\n\
         lens_shading_coeffs = 1.0, -0.2\nmode = fixed_rate(960)\n\
         pattern.kind = moving_edge\npattern.velocity = 0.5\npattern.fps = 2000\npattern.duration = 100000\n",
    )
    .map_err(|e| e.to_string())?;
    let mut hashes = Vec::new();
    for threads in [1, 4, 8] {
        let out = dir.path().join(format!("out{threads}"));
        let code = cli::run([
            "evsim".to_string(),
            "simulate".into(),
            "--config".into(),
            config.display().to_string(),
            "--out".into(),
            out.display().to_string(),
            "--threads".into(),
            threads.to_string(),
        ]);
        if code != 0 {
            return Err(format!("simulate exited {code} with {threads} threads"));
        }
        hashes.push(hash_tree(&out));
    }
    let kinds = |prefix: &str| hashes[0].keys().filter(|k| k.starts_with(prefix)).count();
    let detail = format!(
        "{} files ({} CIS PGMs, {} event frame PGMs, events CSV) identical at 1/4/8 threads",
        hashes[0].len(),
        kinds(output::CIS_DIR),
        kinds(output::EVENT_FRAMES_DIR)
    );
    check(
        hashes[0] == hashes[1]
            && hashes[0] == hashes[2]
            && hashes[0].contains_key(output::EVENTS_CSV)
            && kinds(output::CIS_DIR) > 0
            && kinds(output::EVENT_FRAMES_DIR) > 0,
        detail,
    )
}

fn mismatch_realism() -> Outcome {
    let mut cfg = DvsConfig::new(640, 480);
    cfg.mismatch_sigma = 0.015;
    cfg.seed = 1;
    let a = DvsSimulator::new(cfg.clone()).map_err(|e| e.to_string())?.threshold_offsets();
    cfg.seed = 2;
    let b = DvsSimulator::new(cfg).map_err(|e| e.to_string())?.threshold_offsets();
    let std = sample_std(&a);
    let rel = (std / 0.015 - 1.0).abs();
    let differ = a.iter().zip(&b).filter(|(x, y)| x != y).count() as f64 / a.len() as f64;
    check(
        rel < 0.05 && differ > 0.99,
        format!(
            "std {std:.6} ({:.2}% off), {:.4}% of pixels differ across seeds",
            rel * 100.0,
            differ * 100.0
        ),
    )
}

fn rolling_shutter() -> Outcome {
    let r = selftest::rolling_shutter_check();
    check(r.passed, r.detail)
}

fn adc_noise() -> Outcome {
    let mut cfg = CisConfig::new(1000, 1000, 1000.0);
    let mid = cfg.min_illuminance + 511.5 * cfg.slope;
    let frames = vec![
        IntensityFrame::filled(1000, 1000, 0, mid).map_err(|e| e.to_string())?,
        IntensityFrame::filled(1000, 1000, 1000, mid).map_err(|e| e.to_string())?,
    ];
    let out = simulate_cis(&frames, &cfg).map_err(|e| e.to_string())?;
    let dn: Vec<f64> = out[0].data.iter().map(|&v| v as f64).collect();
    let std = population_std(&dn);
    let rel = (std / 5.2 - 1.0).abs();

    // quantization only: a ramp spanning the whole range plus both clipped ends
    cfg.noise_lsb = 0.0;
    let (w, h) = (1000, 1000);
    let lo = 0.0;
    let hi = cfg.min_illuminance + 1100.0 * cfg.slope;
    let ramp: Vec<f64> = (0..w * h).map(|i| lo + (hi - lo) * i as f64 / (w * h - 1) as f64).collect();
    let frames = vec![
        IntensityFrame::new(w, h, 0, ramp.clone()).map_err(|e| e.to_string())?,
        IntensityFrame::new(w, h, 1000, ramp.clone()).map_err(|e| e.to_string())?,
    ];
    let out = simulate_cis(&frames, &cfg).map_err(|e| e.to_string())?;
    let max_err = out[0]
        .data
        .iter()
        .zip(&ramp)
        .map(|(&d, &l)| (d as f64 - ((l - cfg.min_illuminance) / cfg.slope).clamp(0.0, 1023.0)).abs())
        .fold(0.0, f64::max);
    // the library helper must agree with the closed form too
    let helper_ok = (operation_range_dn(mid, &cfg) - 511.5).abs() < 1e-9;
    check(
        dn.len() == 1_000_000 && rel < 0.05 && max_err <= 0.5 && helper_ok,
        format!(
            "std {std:.4} over {} pixels ({:.2}% off 5.2), max quantization error {max_err:.4} LSB",
            dn.len(),
            rel * 100.0
        ),
    )
}

fn metrics_sanity() -> Outcome {
    let random = |seed: u64, w: usize, h: usize| {
        let mut rng = rng_for(seed, StreamId::global(Stage::Custom(0xacce)));
        GrayFrame::new(w, h, (0..w * h).map(|_| (rng.uniform() * 1024.0).floor()).collect()).unwrap()
    };
    let mut self_ok = 0;
    for seed in 0..20 {
        let a = random(seed, 64, 48);
        if ssim(&a, &a, 1023.0).map_err(|e| e.to_string())? == 1.0
            && psnr(&a, &a, 1023.0).map_err(|e| e.to_string())? == f64::INFINITY
        {
            self_ok += 1;
        }
    }
    let a = GrayFrame::new(32, 32, vec![100.0; 1024]).unwrap();
    let b = GrayFrame::new(32, 32, vec![116.0; 1024]).unwrap();
    let hand = psnr(&a, &b, 255.0).map_err(|e| e.to_string())?;

    // smooth frame with one block replaced by noise at a grid-aligned spot
    let (w, h) = (400, 300);
    let (bx, by) = (4 * PATCH_STRIDE, 3 * PATCH_STRIDE);
    let smooth: Vec<f64> = (0..w * h).map(|i| 200.0 + ((i % w) + 2 * (i / w)) as f64 * 0.5).collect();
    let truth = GrayFrame::new(w, h, smooth.clone()).unwrap();
    let noise = random(99, w, h);
    let mut bad = smooth;
    for y in by..by + PATCH_WINDOW {
        for x in bx..bx + PATCH_WINDOW {
            bad[y * w + x] = noise.data[y * w + x];
        }
    }
    let bad = GrayFrame::new(w, h, bad).unwrap();
    let s = patch_min(&truth, &bad, Metric::Ssim, PATCH_WINDOW, PATCH_STRIDE, 1023.0).map_err(|e| e.to_string())?;
    let p = patch_min(&truth, &bad, Metric::Psnr, PATCH_WINDOW, PATCH_STRIDE, 1023.0).map_err(|e| e.to_string())?;
    check(
        self_ok == 20 && (hand - 24.05).abs() <= 0.01 && (s.x, s.y) == (bx, by) && (p.x, p.y) == (bx, by),
        format!(
            "{self_ok}/20 self-comparisons exact, hand PSNR {hand:.4} dB, block at ({bx}, {by}) found by SSIM at ({}, {}) and PSNR at ({}, {})",
            s.x, s.y, p.x, p.y
        ),
    )
}

fn check_events_schema(path: &Path, w: u32, h: u32) -> Result<usize, String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    let mut lines = text.lines();
    if lines.next() != Some("t_us,x,y,p") {
        return Err("events CSV header".into());
    }
    let mut prev = 0u64;
    let mut n = 0;
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        let parse = || -> Option<(u64, u32, u32, i8)> {
            (f.len() == 4).then_some(())?;
            Some((f[0].parse().ok()?, f[1].parse().ok()?, f[2].parse().ok()?, f[3].parse().ok()?))
        };
        let Some((t, x, y, p)) = parse() else {
            return Err(format!("bad event row `{line}`"));
        };
        if t < prev || x >= w || y >= h || !(p == 1 || p == -1) {
            return Err(format!("invalid event row `{line}`"));
        }
        prev = t;
        n += 1;
    }
    Ok(n)
}

fn end_to_end() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = dir.path().join("full.cfg");
    std::fs::write(
        &config,
        "width = 346\nheight = 260\nseed = 7\n\
         fps = 30\nexposure_time = 16000\nline_readout_time = 30\n\
         min_illuminance = 4096\nslope = 55\nnoise_lsb = 5.2\n\
         threshold_pos = 0.15\nthreshold_neg = 0.15\nmismatch_sigma = 0.015\n\
         external_noise_sigma = 0.035\nrefractory_us = 100\n\
         pattern.kind = moving_edge\npattern.velocity = 0.1\npattern.fps = 960\npattern.duration = 2000000\n",
    )
    .map_err(|e| e.to_string())?;
    let out = dir.path().join("out");
    let start = Instant::now();
    let code = cli::run([
        "evsim",
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let elapsed = start.elapsed();
    if code != 0 {
        return Err(format!("simulate exited {code}"));
    }
    let n_events = check_events_schema(&out.join(output::EVENTS_CSV), 346, 260)?;
    let events: Vec<Event> = output::read_events(&out.join(output::EVENTS_CSV)).map_err(|e| e.to_string())?;
    let mut rdr = csv::Reader::from_path(out.join(output::CIS_INDEX)).map_err(|e| e.to_string())?;
    if rdr.headers().map_err(|e| e.to_string())?.iter().collect::<Vec<_>>() != ["frame", "timestamp_us", "path"] {
        return Err("CIS index header".into());
    }
    let mut n_cis = 0;
    let mut prev_t = None;
    for row in rdr.records() {
        let row = row.map_err(|e| e.to_string())?;
        let t: u64 = row[1].parse().map_err(|_| "CIS index timestamp")?;
        if prev_t.is_some_and(|p| p >= t) || row[0] != n_cis.to_string() {
            return Err(format!("CIS index row {n_cis} out of order"));
        }
        prev_t = Some(t);
        let frame = pgm::read(&out.join(&row[2])).map_err(|e| e.to_string())?;
        if (frame.width, frame.height, frame.maxval) != (346, 260, 1023) || frame.data.iter().any(|&v| v > 1023) {
            return Err(format!("CIS frame {} has the wrong shape or range", &row[2]));
        }
        n_cis += 1;
    }
    let manifest = out.join(cli::RUN_MANIFEST).exists();
    check(
        n_events > 0
            && n_events == events.len()
            && n_cis == 60
            && manifest
            && elapsed < Duration::from_secs(300),
        format!("{n_events} events and {n_cis} CIS frames from 2 s at 960 fps in {elapsed:.1?}"),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("ramp law", ramp_law),
        ("refractory enforcement", refractory_stress),
        ("fixed-rate grid", fixed_rate_grid),
        ("brute-force equivalence", brute_force_equivalence),
        ("determinism across thread counts", determinism),
        ("mismatch realism", mismatch_realism),
        ("rolling shutter shear", rolling_shutter),
        ("ADC noise", adc_noise),
        ("metrics sanity", metrics_sanity),
        ("end-to-end smoke", end_to_end),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS criterion {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
