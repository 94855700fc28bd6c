//! `evsim` command line: `simulate`, `metrics` and `selftest`.
//!
//! Exit codes: 0 success, 1 configuration or usage error (or a failed
//! self-test), 2 input error (missing or uncovered input, mismatched
//! sequences, window larger than the frames), 3 failure writing output.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::cis::simulate_cis;
use crate::config::{KeyValues, RunConfig};
use crate::dvs::simulate_dvs;
use crate::error::Error;
use crate::io::{output, DirSource};
use crate::metrics::{sequence_report_with_heatmaps, GrayFrame, ReportOptions, PATCH_STRIDE, PATCH_WINDOW};
use crate::patterns::PatternSpec;
use crate::selftest;
use crate::source::FrameSource;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_OUTPUT: i32 = 3;

pub const RUN_MANIFEST: &str = "run_manifest.txt";
pub const REPORT_CSV: &str = "report.csv";

#[derive(Debug, Parser)]
#[command(name = "evsim", version, about = "Frame and event camera simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert an input frame sequence into CIS frames and DVS events.
    Simulate(SimulateArgs),
    /// Score a candidate frame sequence against ground truth.
    Metrics(MetricsArgs),
    /// Run the oracle equivalence checks.
    Selftest(SelftestArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, required_unless_present = "from_manifest")]
    config: Option<PathBuf>,
    /// Directory of frame_<t_us>.pgm files or a (path, timestamp_us) manifest.
    #[arg(long, conflicts_with = "pattern")]
    input: Option<PathBuf>,
    /// Synthetic pattern name; parameters come from `pattern.*` config keys.
    #[arg(long)]
    pattern: Option<String>,
    #[arg(long, required_unless_present = "from_manifest")]
    out: Option<PathBuf>,
    /// Overrides every seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, conflicts_with = "dvs_only")]
    cis_only: bool,
    #[arg(long)]
    dvs_only: bool,
    #[arg(long)]
    threads: Option<usize>,
    /// Repeat the run recorded in a run manifest.
    #[arg(long, conflicts_with_all = ["config", "input", "pattern", "seed", "cis_only", "dvs_only"])]
    from_manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MetricsArgs {
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    candidate: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = PATCH_WINDOW)]
    window: usize,
    #[arg(long, default_value_t = PATCH_STRIDE)]
    stride: usize,
    /// Peak value R; defaults to the PGM maxval of the ground truth.
    #[arg(long)]
    dynamic_range: Option<f64>,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Args)]
struct SelftestArgs {
    /// Random scenes for the equivalence check.
    #[arg(long, default_value_t = 50)]
    scenes: u64,
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Input(String),
    Output(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Input(_) => EXIT_INPUT,
            Failure::Output(_) => EXIT_OUTPUT,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Input(m) | Failure::Output(m) => m,
        }
    }
}

/// Classifies library errors raised while reading input or simulating.
fn input_failure(e: Error) -> Failure {
    match e {
        Error::Config { .. } => Failure::Config(e.to_string()),
        _ => Failure::Input(e.to_string()),
    }
}

fn output_failure(e: Error) -> Failure {
    Failure::Output(e.to_string())
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Metrics(a) => cmd_metrics(a),
        Command::Selftest(a) => return cmd_selftest(a.scenes),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message());
            f.code()
        }
    }
}

fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool, Failure> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(Failure::Config("--threads must be at least 1".into()));
        }
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Failure::Config(e.to_string()))
}

/// Everything needed to reproduce a simulate run.
#[derive(Debug, Clone, PartialEq)]
struct RunSpec {
    config: PathBuf,
    input: InputSpec,
    out: PathBuf,
    seed: Option<u64>,
    cis: bool,
    dvs: bool,
    threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
enum InputSpec {
    Dir(PathBuf),
    Pattern(Option<String>),
}

impl InputSpec {
    fn describe(&self) -> String {
        match self {
            InputSpec::Dir(p) => format!("dir:{}", p.display()),
            InputSpec::Pattern(Some(name)) => format!("pattern:{name}"),
            InputSpec::Pattern(None) => "pattern:".into(),
        }
    }

    fn parse(s: &str) -> Option<Self> {
        if let Some(p) = s.strip_prefix("dir:") {
            return Some(InputSpec::Dir(PathBuf::from(p)));
        }
        s.strip_prefix("pattern:")
            .map(|n| InputSpec::Pattern((!n.is_empty()).then(|| n.to_string())))
    }
}

fn read_manifest(path: &Path, out_override: Option<PathBuf>) -> Result<RunSpec, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let kv = KeyValues::parse(&text).map_err(|e| Failure::Config(e.to_string()))?;
    let get = |k: &str| kv.get(k).ok_or_else(|| Failure::Config(format!("run manifest lacks `{k}`")));
    let sensors = get("sensors")?;
    let parse_opt = |k: &str| -> Result<Option<u64>, Failure> {
        match get(k)? {
            "none" => Ok(None),
            v => v.parse().map(Some).map_err(|_| Failure::Config(format!("run manifest `{k}` = `{v}`"))),
        }
    };
    Ok(RunSpec {
        config: PathBuf::from(get("config")?),
        input: InputSpec::parse(get("input")?).ok_or_else(|| Failure::Config("run manifest `input`".into()))?,
        out: out_override.unwrap_or_else(|| PathBuf::from(kv.get("out").unwrap_or("."))),
        seed: parse_opt("seed_override")?,
        cis: sensors != "dvs",
        dvs: sensors != "cis",
        threads: parse_opt("threads")?.map(|n| n as usize),
    })
}

fn manifest_text(spec: &RunSpec, seed: u64, elapsed_s: f64) -> String {
    let sensors = match (spec.cis, spec.dvs) {
        (true, true) => "both",
        (true, false) => "cis",
        _ => "dvs",
    };
    let opt = |v: Option<u64>| v.map_or("none".to_string(), |v| v.to_string());
    let mut s = String::new();
    let _ = writeln!(s, "tool = evsim");
    let _ = writeln!(s, "version = {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(s, "config = {}", spec.config.display());
    let _ = writeln!(s, "input = {}", spec.input.describe());
    let _ = writeln!(s, "out = {}", spec.out.display());
    let _ = writeln!(s, "seed = {seed}");
    let _ = writeln!(s, "seed_override = {}", opt(spec.seed));
    let _ = writeln!(s, "sensors = {sensors}");
    let _ = writeln!(s, "threads = {}", opt(spec.threads.map(|n| n as u64)));
    let _ = writeln!(s, "wall_clock_s = {elapsed_s:.3}");
    s
}

fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

fn cmd_simulate(a: SimulateArgs) -> Result<(), Failure> {
    let spec = match &a.from_manifest {
        Some(m) => read_manifest(m, a.out.clone())?,
        None => RunSpec {
            config: absolute(a.config.as_deref().expect("clap requires --config")),
            input: match (&a.input, &a.pattern) {
                (Some(dir), _) => InputSpec::Dir(absolute(dir)),
                (None, p) => InputSpec::Pattern(p.clone()),
            },
            out: a.out.clone().expect("clap requires --out"),
            seed: a.seed,
            cis: !a.dvs_only,
            dvs: !a.cis_only,
            threads: a.threads,
        },
    };
    run_simulation(&spec)
}

enum Input {
    Dir(DirSource),
    Pattern(PatternSpec),
}

fn run_simulation(spec: &RunSpec) -> Result<(), Failure> {
    let started = Instant::now();
    let mut rc = RunConfig::load(&spec.config).map_err(|e| match e {
        Error::Io { .. } => Failure::Config(e.to_string()),
        e => Failure::Config(e.to_string()),
    })?;
    if let Some(seed) = spec.seed {
        for key in ["seed", "cis.seed", "dvs.seed"] {
            rc.set(key, seed.to_string()).map_err(|e| Failure::Config(e.to_string()))?;
        }
    }
    let cis_cfg = spec.cis.then(|| rc.cis()).transpose().map_err(|e| Failure::Config(e.to_string()))?;
    let dvs_cfg = spec.dvs.then(|| rc.dvs()).transpose().map_err(|e| Failure::Config(e.to_string()))?;
    let seed = cis_cfg.as_ref().map(|c| c.seed).or(dvs_cfg.as_ref().map(|c| c.seed)).unwrap_or(0);

    let input = match &spec.input {
        InputSpec::Dir(dir) => Input::Dir(DirSource::open(dir).map_err(input_failure)?),
        InputSpec::Pattern(name) => {
            if name.is_none() && !rc.has_pattern() {
                return Err(Failure::Input("no input: pass --input or --pattern, or set pattern.kind".into()));
            }
            Input::Pattern(PatternSpec::from_run_config(&rc, name.as_deref()).map_err(|e| Failure::Config(e.to_string()))?)
        }
    };
    let source: &dyn FrameSourceDyn = match &input {
        Input::Dir(d) => d,
        Input::Pattern(p) => p,
    };
    log::info!("input {} with {} frames", spec.input.describe(), source.frames());

    let pool = thread_pool(spec.threads)?;
    let (cis_frames, dvs_out) = pool.install(|| -> Result<_, Failure> {
        let cis = match &cis_cfg {
            Some(c) => Some(source.cis(c).map_err(input_failure)?),
            None => None,
        };
        let dvs = match &dvs_cfg {
            Some(c) => Some(source.dvs(c).map_err(input_failure)?),
            None => None,
        };
        Ok((cis, dvs))
    })?;

    let out = &spec.out;
    std::fs::create_dir_all(out).map_err(|e| Failure::Output(format!("{}: {e}", out.display())))?;
    if let Some(frames) = &cis_frames {
        output::write_cis_frames(out, frames).map_err(output_failure)?;
        log::info!("wrote {} CIS frames", frames.len());
    }
    if let Some(d) = &dvs_out {
        output::write_events(&out.join(output::EVENTS_CSV), &d.events).map_err(output_failure)?;
        if let Some(frames) = &d.frames {
            output::write_event_frames(out, frames).map_err(output_failure)?;
        }
        log::info!("wrote {} events", d.events.len());
    }
    let path = out.join(RUN_MANIFEST);
    std::fs::write(&path, manifest_text(spec, seed, started.elapsed().as_secs_f64()))
        .map_err(|e| Failure::Output(format!("{}: {e}", path.display())))?;
    Ok(())
}

/// Object-safe view over the two input kinds.
trait FrameSourceDyn: Sync {
    fn frames(&self) -> usize;
    fn cis(&self, cfg: &crate::config::CisConfig) -> crate::Result<Vec<crate::cis::CisFrame>>;
    fn dvs(&self, cfg: &crate::config::DvsConfig) -> crate::Result<crate::dvs::DvsOutput>;
}

impl<S: FrameSource> FrameSourceDyn for S {
    fn frames(&self) -> usize {
        self.len()
    }

    fn cis(&self, cfg: &crate::config::CisConfig) -> crate::Result<Vec<crate::cis::CisFrame>> {
        check_source_dims(self, cfg.width, cfg.height)?;
        simulate_cis(self, cfg)
    }

    fn dvs(&self, cfg: &crate::config::DvsConfig) -> crate::Result<crate::dvs::DvsOutput> {
        check_source_dims(self, cfg.width, cfg.height)?;
        simulate_dvs(self, cfg)
    }
}

fn check_source_dims<S: FrameSource + ?Sized>(s: &S, width: usize, height: usize) -> crate::Result<()> {
    let (w, h) = s.dims();
    if !s.is_empty() && (w, h) != (width, height) {
        return Err(Error::DimensionMismatch {
            expected_w: width,
            expected_h: height,
            actual_w: w,
            actual_h: h,
        });
    }
    Ok(())
}

fn load_gray_sequence(dir: &Path) -> Result<(Vec<GrayFrame>, u16), Failure> {
    let src = DirSource::open(dir).map_err(input_failure)?;
    let mut maxval = 0;
    let frames = (0..src.len())
        .map(|i| {
            let p = src.read_pgm(i).map_err(input_failure)?;
            maxval = maxval.max(p.maxval);
            GrayFrame::new(p.width, p.height, p.data.iter().map(|&v| v as f64).collect()).map_err(input_failure)
        })
        .collect::<Result<Vec<_>, _>>()?;
    if frames.is_empty() {
        return Err(Failure::Input(format!("{}: no frames found", dir.display())));
    }
    Ok((frames, maxval))
}

fn cmd_metrics(a: MetricsArgs) -> Result<(), Failure> {
    let (truth, maxval) = load_gray_sequence(&a.truth)?;
    let (candidate, _) = load_gray_sequence(&a.candidate)?;
    let opts = ReportOptions {
        dynamic_range: a.dynamic_range.unwrap_or(maxval as f64),
        window: a.window,
        stride: a.stride,
    };
    if opts.dynamic_range.is_nan() || opts.dynamic_range <= 0.0 || opts.stride == 0 {
        return Err(Failure::Config("dynamic range and stride must be positive".into()));
    }
    let pool = thread_pool(a.threads)?;
    let (report, heatmaps) = pool
        .install(|| sequence_report_with_heatmaps(&truth, &candidate, opts))
        .map_err(input_failure)?;

    std::fs::create_dir_all(&a.out).map_err(|e| Failure::Output(format!("{}: {e}", a.out.display())))?;
    let path = a.out.join(REPORT_CSV);
    std::fs::write(&path, report.to_csv()).map_err(|e| Failure::Output(format!("{}: {e}", path.display())))?;
    if let Some((ssim_map, psnr_map)) = heatmaps {
        ssim_map.write(&a.out, "heatmap_ssim").map_err(output_failure)?;
        psnr_map.write(&a.out, "heatmap_psnr").map_err(output_failure)?;
    }
    println!(
        "frames {}  mean SSIM {:.4}  min SSIM {:.4}  mean PSNR {:.3}  min PSNR {:.3}  min patch SSIM {:.4}  min patch PSNR {:.3}",
        report.per_frame.len(),
        report.mean_ssim,
        report.min_ssim,
        report.mean_psnr,
        report.min_psnr,
        report.min_patch_ssim,
        report.min_patch_psnr
    );
    Ok(())
}

fn cmd_selftest(scenes: u64) -> i32 {
    let results = vec![
        selftest::ramp_law_check(&selftest::default_simulate),
        selftest::rolling_shutter_check(),
        selftest::equivalence_check(scenes, &selftest::default_simulate),
    ];
    for r in &results {
        println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    if results.iter().all(|r| r.passed) {
        EXIT_OK
    } else {
        EXIT_CONFIG
    }
}
