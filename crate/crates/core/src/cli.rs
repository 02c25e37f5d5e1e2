//! `lite-mot` command line: argument parsing, config resolution and
//! subcommand dispatch. Exit codes: 0 ok, 2 usage/config, 3 input, 4 runtime.

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::bench::{self, BenchError, BenchReport, SweepGrid, SweepOutcome};
use crate::ingest::{
    parse_mot_dir, parse_results, read_feature_map, IngestError, ParseError, ReplaySource, SynthConfig, SynthScenario,
    TrajectoryKind,
};
use crate::lite::FeatureMap;
use crate::metrics::{evaluate_sequence, write_metrics_csv, EvalCounts, EvalReport, MetricsError};
use crate::tracker::{ExternalReid, FileDescriptors, SimulatedReid, Tracker, TrackerConfig, TrackerError, TrackerVariant};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INPUT: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

/// Name of the resolved configuration written next to every output.
pub const RUN_CONFIG_FILE: &str = "run_config.txt";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliError {
    Usage(String),
    Input(String),
    Runtime(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            Self::Usage(_) => EXIT_USAGE,
            Self::Input(_) => EXIT_INPUT,
            Self::Runtime(_) => EXIT_RUNTIME,
        }
    }

    pub fn class(&self) -> &'static str {
        match self {
            Self::Usage(_) => "usage",
            Self::Input(_) => "input",
            Self::Runtime(_) => "runtime",
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (Self::Usage(m) | Self::Input(m) | Self::Runtime(m)) = self;
        // Keep the message on one line so `error[class]:` stays greppable.
        write!(f, "error[{}]: {}", self.class(), m.replace('\n', " "))
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Io { .. } => Self::Runtime(e.to_string()),
            IngestError::Synth(_) => Self::Usage(e.to_string()),
            _ => Self::Input(e.to_string()),
        }
    }
}

impl From<TrackerError> for CliError {
    fn from(e: TrackerError) -> Self {
        match e {
            TrackerError::Config(_) => Self::Usage(e.to_string()),
            TrackerError::MissingFeatureMap { .. } | TrackerError::FeatureMapFrame { .. } | TrackerError::MissingDescriptor { .. } => {
                Self::Input(e.to_string())
            }
            _ => Self::Runtime(e.to_string()),
        }
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        let msg = e.to_string();
        let class = match e {
            BenchError::Ingest { source, .. } => CliError::from(source),
            BenchError::Tracker { source, .. } => CliError::from(source),
            _ => CliError::Runtime(String::new()),
        };
        match class {
            Self::Usage(_) => Self::Usage(msg),
            Self::Input(_) => Self::Input(msg),
            Self::Runtime(_) => Self::Runtime(msg),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        Self::Input(e.to_string())
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::Runtime(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, contents).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::Input(format!("missing file {}", path.display())),
        _ => CliError::Runtime(format!("{}: {e}", path.display())),
    })
}

/// Parses flat `key = value` text. Blank lines and lines starting with `#`
/// are ignored; keys may repeat.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>, ParseError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ParseError { line: i + 1, message: format!("expected key=value, found {line:?}") });
        };
        let key = k.trim();
        if key.is_empty() || key.chars().any(char::is_whitespace) {
            return Err(ParseError { line: i + 1, message: format!("invalid key {key:?}") });
        }
        out.push((key.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Everything that determines a tracking run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub variant: TrackerVariant,
    pub tracker: TrackerConfig,
    pub inputs: Vec<PathBuf>,
    pub out: Option<PathBuf>,
    pub features: Option<PathBuf>,
    /// Recorded for reproducibility; the tracking pipeline itself is deterministic.
    pub seed: u64,
    pub jobs: usize,
    /// Extra per-frame delay of the simulated external ReID (deepsort only).
    pub reid_delay_ms: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            variant: TrackerVariant::Sort,
            tracker: TrackerConfig::default(),
            inputs: Vec::new(),
            out: None,
            features: None,
            seed: 0,
            jobs: 1,
            reid_delay_ms: 0,
        }
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let num = |v: &str| v.parse::<u64>().map_err(|_| format!("{key}: cannot parse {v:?}"));
        match key {
            "variant" => self.variant = value.parse()?,
            "input" => self.inputs.push(PathBuf::from(value)),
            "out" => self.out = Some(PathBuf::from(value)),
            "features" => self.features = Some(PathBuf::from(value)),
            "seed" => self.seed = num(value)?,
            "jobs" => self.jobs = num(value)? as usize,
            "reid_delay_ms" => self.reid_delay_ms = num(value)?,
            _ => self.tracker.set(key, value)?,
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self, String> {
        let mut c = Self::default();
        c.apply_text(text)?;
        Ok(c)
    }

    fn apply_text(&mut self, text: &str) -> Result<(), String> {
        let pairs = parse_config_text(text).map_err(|e| e.to_string())?;
        // Inputs listed in a file replace (not extend) the defaults.
        if pairs.iter().any(|(k, _)| k == "input") {
            self.inputs.clear();
        }
        for (k, v) in pairs {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# lite-mot resolved run configuration\n");
        s += &format!("variant={}\n", self.variant);
        for (k, v) in self.tracker.snapshot() {
            s += &format!("{k}={v}\n");
        }
        for i in &self.inputs {
            s += &format!("input={}\n", i.display());
        }
        if let Some(o) = &self.out {
            s += &format!("out={}\n", o.display());
        }
        if let Some(f) = &self.features {
            s += &format!("features={}\n", f.display());
        }
        s += &format!("seed={}\njobs={}\nreid_delay_ms={}\n", self.seed, self.jobs, self.reid_delay_ms);
        s
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.tracker.validate().map_err(CliError::from)?;
        if self.inputs.is_empty() {
            return Err(CliError::Usage("no --input given".into()));
        }
        if self.out.is_none() {
            return Err(CliError::Usage("no --out given".into()));
        }
        if self.variant == TrackerVariant::LiteDeepSort && self.features.is_none() {
            return Err(CliError::Usage("--variant lite-deepsort requires --features <dir>".into()));
        }
        if self.jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Parser)]
#[command(name = "lite-mot", version, about = "Multi-object tracking with feature-map appearance descriptors, metrics and pipeline benchmarking")]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug)
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Track one or more MOT sequences and write result files plus a timing report
    Track(TrackArgs),
    /// Score result files against ground truth (HOTA, MOTA, IDF1)
    Eval(EvalArgs),
    /// Track and evaluate in one pass, writing timing and metric tables
    Bench(TrackArgs),
    /// Replay a grid of detector settings and tabulate accuracy against FPS
    Sweep(SweepArgs),
    /// Generate a synthetic MOT sequence with feature maps
    Synth(SynthArgs),
    /// Draw tracks onto frames with one color per id
    RenderOverlay(OverlayArgs),
    /// Pack raw float32 activations into feature-map files or inspect them
    FmPack(FmPackArgs),
}

/// Tracker settings shared by `track`, `bench` and `sweep`. Unset flags fall
/// back to the config file, then to built-in defaults.
#[derive(Debug, Args, Default)]
pub struct TrackerFlags {
    /// Flat key=value config file; command-line flags take precedence
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Hits needed before a track is confirmed [default: 3]
    #[arg(long)]
    pub n_init: Option<u32>,
    /// Frames a confirmed track survives without a match [default: 30]
    #[arg(long)]
    pub max_age: Option<u32>,
    /// Detections below this confidence are discarded [default: 0.25]
    #[arg(long)]
    pub min_confidence: Option<f64>,
    /// Largest accepted 1 − IoU in IoU matching [default: 0.7]
    #[arg(long)]
    pub max_iou_distance: Option<f64>,
    /// Largest accepted cosine distance in appearance matching [default: 0.2]
    #[arg(long)]
    pub max_cosine_distance: Option<f64>,
    /// Descriptors remembered per track [default: 100]
    #[arg(long)]
    pub gallery_budget: Option<usize>,
    /// Squared Mahalanobis gate [default: 9.4877]
    #[arg(long)]
    pub gating_threshold: Option<f64>,
    /// Kalman position noise as a fraction of box height [default: 0.05]
    #[arg(long)]
    pub std_weight_position: Option<f64>,
    /// Kalman velocity noise as a fraction of box height [default: 0.00625]
    #[arg(long)]
    pub std_weight_velocity: Option<f64>,
    /// Reported box: `posterior` (Kalman) or `detection` [default: posterior]
    #[arg(long)]
    pub output_mode: Option<String>,
    /// Seed recorded in the run configuration [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Sequences processed in parallel [default: 1]
    #[arg(long)]
    pub jobs: Option<usize>,
}

impl TrackerFlags {
    fn overrides(&self) -> Vec<(&'static str, Option<String>)> {
        vec![
            ("n_init", self.n_init.map(|v| v.to_string())),
            ("max_age", self.max_age.map(|v| v.to_string())),
            ("min_confidence", self.min_confidence.map(|v| v.to_string())),
            ("max_iou_distance", self.max_iou_distance.map(|v| v.to_string())),
            ("max_cosine_distance", self.max_cosine_distance.map(|v| v.to_string())),
            ("gallery_budget", self.gallery_budget.map(|v| v.to_string())),
            ("gating_threshold", self.gating_threshold.map(|v| v.to_string())),
            ("std_weight_position", self.std_weight_position.map(|v| v.to_string())),
            ("std_weight_velocity", self.std_weight_velocity.map(|v| v.to_string())),
            ("output_mode", self.output_mode.clone()),
            ("seed", self.seed.map(|v| v.to_string())),
            ("jobs", self.jobs.map(|v| v.to_string())),
        ]
    }
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    /// Tracker: sort, deepsort or lite-deepsort [default: sort]
    #[arg(long)]
    pub variant: Option<String>,
    /// MOT sequence directory, or a directory of sequences (repeatable)
    #[arg(long, value_name = "DIR")]
    pub input: Vec<PathBuf>,
    /// Output directory for result files, reports and the resolved config
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Feature-map directory (lite-deepsort); with several sequences, one subdirectory per sequence name
    #[arg(long, value_name = "DIR")]
    pub features: Option<PathBuf>,
    /// Simulated external ReID cost per frame in milliseconds (deepsort)
    #[arg(long)]
    pub reid_delay_ms: Option<u64>,
    #[command(flatten)]
    pub tracker: TrackerFlags,
}

impl TrackArgs {
    /// Defaults, then the config file, then explicit flags.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.tracker.config {
            let text = read_file(path)?;
            cfg.apply_text(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        }
        let usage = |e: String| CliError::Usage(e);
        if let Some(v) = &self.variant {
            cfg.set("variant", v).map_err(usage)?;
        }
        if !self.input.is_empty() {
            cfg.inputs = self.input.clone();
        }
        if let Some(o) = &self.out {
            cfg.out = Some(o.clone());
        }
        if let Some(f) = &self.features {
            cfg.features = Some(f.clone());
        }
        if let Some(d) = self.reid_delay_ms {
            cfg.reid_delay_ms = d;
        }
        for (k, v) in self.tracker.overrides() {
            if let Some(v) = v {
                cfg.set(k, &v).map_err(usage)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Ground-truth sequence directory, or a directory of sequences (repeatable)
    #[arg(long, value_name = "DIR", required = true)]
    pub gt: Vec<PathBuf>,
    /// Directory holding one `<sequence>.txt` result file per sequence
    #[arg(long, value_name = "DIR")]
    pub results: PathBuf,
    /// Bench CSV whose FPS column is copied into the metric table
    #[arg(long, value_name = "FILE")]
    pub bench: Option<PathBuf>,
    /// Write the metric table (CSV) here
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Sequences evaluated in parallel
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// MOT sequence directory, or a directory of sequences (repeatable)
    #[arg(long, value_name = "DIR", required = true)]
    pub input: Vec<PathBuf>,
    /// Comma-separated trackers to run
    #[arg(long, value_delimiter = ',', default_value = "sort,deepsort,lite-deepsort")]
    pub variants: Vec<String>,
    /// Comma-separated confidence thresholds
    #[arg(long, value_delimiter = ',', required = true)]
    pub confidences: Vec<f64>,
    /// Comma-separated resolution tags (subdirectories of `<sequence>/sweep/`)
    #[arg(long, value_delimiter = ',', required = true)]
    pub resolutions: Vec<String>,
    /// Long-format CSV output file
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    #[command(flatten)]
    pub tracker: TrackerFlags,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output sequence directory
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Trajectory kind: linear, crossing or occluding
    #[arg(long, default_value = "crossing")]
    pub kind: String,
    /// Number of targets
    #[arg(long, default_value_t = 2)]
    pub targets: usize,
    /// Number of frames
    #[arg(long, default_value_t = 100)]
    pub frames: u32,
    /// Random seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Minimum cosine distance between target identities
    #[arg(long, default_value_t = 0.5)]
    pub gap: f64,
    /// Detection box noise (pixels, std)
    #[arg(long, default_value_t = 2.0)]
    pub box_noise: f64,
    /// Feature-map activation noise (std)
    #[arg(long, default_value_t = 0.5)]
    pub descriptor_noise: f64,
    /// Noise on the external descriptors written to det.txt (std)
    #[arg(long, default_value_t = 0.05)]
    pub external_noise: f64,
    /// Low-confidence clutter detections per frame
    #[arg(long, default_value_t = 0)]
    pub clutter: usize,
    /// Image width in pixels
    #[arg(long, default_value_t = 320)]
    pub width: u32,
    /// Image height in pixels
    #[arg(long, default_value_t = 240)]
    pub height: u32,
    /// Target speed in pixels per frame
    #[arg(long, default_value_t = 1.5)]
    pub speed: f64,
    /// Frame at which paired targets meet [default: middle frame]
    #[arg(long)]
    pub crossing_frame: Option<u32>,
    /// Also write one feature-map file per frame under `features/`
    #[arg(long)]
    pub features: bool,
}

#[derive(Debug, Args)]
pub struct OverlayArgs {
    /// Tracker result file
    #[arg(long, value_name = "FILE")]
    pub results: PathBuf,
    /// Sequence directory providing `seqinfo.ini`
    #[arg(long, value_name = "DIR")]
    pub sequence: PathBuf,
    /// Frame images `{frame:06}.jpg|png`; blank canvases when omitted
    #[arg(long, value_name = "DIR")]
    pub images: Option<PathBuf>,
    /// Output directory for annotated frames
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FmPackArgs {
    #[command(subcommand)]
    pub action: FmPackAction,
}

#[derive(Debug, Subcommand)]
pub enum FmPackAction {
    /// Wrap raw little-endian float32 data (channel-major) into a feature-map file
    Pack {
        /// Raw float32 input file
        #[arg(long, value_name = "FILE")]
        input: PathBuf,
        /// Frame index stored in the header
        #[arg(long)]
        frame: u32,
        /// Channel count
        #[arg(long)]
        channels: usize,
        /// Map height in cells
        #[arg(long)]
        height: usize,
        /// Map width in cells
        #[arg(long)]
        width: usize,
        /// Pixels per cell
        #[arg(long, default_value_t = 2)]
        stride: u32,
        /// Output feature-map file
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Print the header and value range of a feature-map file
    Inspect {
        /// Feature-map file
        file: PathBuf,
    },
}

/// Expands inputs: a directory with `seqinfo.ini` is a sequence; any other
/// directory contributes its sequence subdirectories in name order.
pub fn resolve_sequences(paths: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for p in paths {
        if !p.is_dir() {
            return Err(CliError::Usage(format!("input {} is not a directory", p.display())));
        }
        if p.join("seqinfo.ini").is_file() {
            out.push(p.clone());
            continue;
        }
        let mut subs: Vec<PathBuf> = fs::read_dir(p)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|s| s.join("seqinfo.ini").is_file())
            .collect();
        if subs.is_empty() {
            return Err(CliError::Usage(format!("no sequences (directories with seqinfo.ini) under {}", p.display())));
        }
        subs.sort();
        out.extend(subs);
    }
    Ok(out)
}

struct SequenceRun {
    name: String,
    results: crate::bench::TrackFile,
    report: BenchReport,
    gt: Option<(Vec<crate::ingest::GtRecord>, u32)>,
}

fn track_sequences(cfg: &RunConfig) -> Result<Vec<SequenceRun>, CliError> {
    let sequences = resolve_sequences(&cfg.inputs)?;
    let single = sequences.len() == 1;
    let run_one = |root: &PathBuf| -> Result<SequenceRun, CliError> {
        let seq = parse_mot_dir(root)?;
        let name = seq.meta.name.clone();
        let features = match (&cfg.features, cfg.variant) {
            (Some(f), TrackerVariant::LiteDeepSort) if single => Some(f.clone()),
            (Some(f), TrackerVariant::LiteDeepSort) => Some(f.join(&name)),
            _ => None,
        };
        let reid: Box<dyn ExternalReid> = if cfg.reid_delay_ms > 0 {
            Box::new(SimulatedReid { per_frame: Duration::from_millis(cfg.reid_delay_ms) })
        } else {
            Box::new(FileDescriptors)
        };
        let mut tracker = Tracker::with_reid(cfg.variant, cfg.tracker.clone(), reid)?;
        let gt = seq.gt.clone().map(|g| (g, seq.meta.num_frames));
        let mut source = ReplaySource::from_sequence(seq, features);
        let (results, report) = bench::timed_run(&mut tracker, &mut source)?;
        log::info!("{name}: {} frames, {:.2} FPS", report.frames, report.fps);
        Ok(SequenceRun { name, results, report, gt })
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    pool.install(|| sequences.par_iter().map(run_one).collect())
}

fn write_track_outputs(cfg: &RunConfig, runs: &[SequenceRun]) -> Result<PathBuf, CliError> {
    let out = cfg.out.clone().expect("validated");
    fs::create_dir_all(&out).map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))?;
    for r in runs {
        write_file(&out.join(format!("{}.txt", r.name)), &r.results.text)?;
    }
    let reports: Vec<BenchReport> = runs.iter().map(|r| r.report.clone()).collect();
    write_file(&out.join("bench.csv"), bench::write_bench_csv(&reports)?)?;
    write_file(&out.join(RUN_CONFIG_FILE), cfg.to_text())?;
    Ok(out)
}

fn cmd_track(args: &TrackArgs) -> Result<(), CliError> {
    let cfg = args.resolve()?;
    let runs = track_sequences(&cfg)?;
    let out = write_track_outputs(&cfg, &runs)?;
    for r in &runs {
        println!("{}: {} frames, {} result lines, {:.2} FPS", r.name, r.report.frames, r.results.records.len(), r.report.fps);
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn metrics_table(rows: Vec<(String, EvalCounts, EvalReport, Option<f64>)>, pooled_fps: Option<f64>) -> Result<String, CliError> {
    for (name, _, report, fps) in &rows {
        let fps = fps.map(|f| format!("  FPS {f:.2}")).unwrap_or_default();
        println!("{name}: {}{fps}", report.to_string().replace('\n', "  "));
    }
    let pooled = EvalReport::pooled(rows.iter().map(|r| &r.1))?;
    println!("COMBINED: {}", pooled.to_string().replace('\n', "  "));
    let table: Vec<(String, EvalReport, Option<f64>)> = rows.into_iter().map(|(n, _, r, f)| (n, r, f)).collect();
    write_metrics_csv(&table, Some(&(pooled, pooled_fps))).map_err(|e| CliError::Runtime(e.to_string()))
}

/// Pooled FPS: all frames over all processing time.
fn pooled_fps(reports: &[&BenchReport]) -> Option<f64> {
    let frames: u32 = reports.iter().map(|r| r.frames).sum();
    let total: f64 = reports.iter().map(|r| r.total_s).sum();
    (!reports.is_empty()).then(|| bench::fps(frames, total))
}

fn cmd_bench(args: &TrackArgs) -> Result<(), CliError> {
    let cfg = args.resolve()?;
    let runs = track_sequences(&cfg)?;
    let out = write_track_outputs(&cfg, &runs)?;
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for r in &runs {
        let Some((gt, num_frames)) = &r.gt else {
            log::warn!("{}: no ground truth; not evaluated", r.name);
            continue;
        };
        let (counts, report) = evaluate_sequence(&r.name, gt, &r.results.records, *num_frames)?;
        rows.push((r.name.clone(), counts, report, Some(r.report.fps)));
        reports.push(&r.report);
    }
    if rows.is_empty() {
        return Err(CliError::Input("no sequence has ground truth to evaluate".into()));
    }
    let csv = metrics_table(rows, pooled_fps(&reports))?;
    write_file(&out.join("metrics.csv"), csv)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<(), CliError> {
    if args.jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    if !args.results.is_dir() {
        return Err(CliError::Usage(format!("results {} is not a directory", args.results.display())));
    }
    let fps_by_seq: Vec<BenchReport> = match &args.bench {
        Some(p) => bench::read_bench_csv(&read_file(p)?).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?,
        None => Vec::new(),
    };
    let sequences = resolve_sequences(&args.gt)?;
    let eval_one = |root: &PathBuf| -> Result<(String, EvalCounts, EvalReport, Option<f64>), CliError> {
        let seq = parse_mot_dir_gt(root)?;
        let name = seq.0.name.clone();
        let path = args.results.join(format!("{name}.txt"));
        let results = parse_results(&read_file(&path)?).map_err(|e| CliError::Input(format!("{}:{}: {}", path.display(), e.line, e.message)))?;
        let (counts, report) = evaluate_sequence(&name, &seq.1, &results, seq.0.num_frames)?;
        let fps = fps_by_seq.iter().find(|b| b.sequence == name).map(|b| b.fps);
        Ok((name, counts, report, fps))
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs)
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let rows: Vec<_> = pool.install(|| sequences.par_iter().map(eval_one).collect::<Result<_, _>>())?;
    let used: Vec<&BenchReport> = fps_by_seq.iter().filter(|b| rows.iter().any(|r| r.0 == b.sequence)).collect();
    let csv = metrics_table(rows, pooled_fps(&used))?;
    if let Some(out) = &args.out {
        write_file(out, csv)?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn parse_mot_dir_gt(root: &Path) -> Result<(crate::ingest::SequenceMeta, Vec<crate::ingest::GtRecord>), CliError> {
    Ok(crate::ingest::parse_gt_dir(root)?)
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), CliError> {
    let cfg = TrackArgs {
        variant: None,
        input: args.input.clone(),
        out: Some(args.out.clone()),
        features: None,
        reid_delay_ms: None,
        tracker: TrackerFlags { config: args.tracker.config.clone(), ..Default::default() },
    };
    // Resolve config-file + flag precedence through the same path as `track`.
    let mut resolved = cfg.resolve()?;
    for (k, v) in args.tracker.overrides() {
        if let Some(v) = v {
            resolved.set(k, &v).map_err(CliError::Usage)?;
        }
    }
    resolved.validate()?;
    let variants = args
        .variants
        .iter()
        .map(|v| v.parse::<TrackerVariant>().map_err(CliError::Usage))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(c) = args.confidences.iter().find(|c| !(0.0..=1.0).contains(*c)) {
        return Err(CliError::Usage(format!("confidence {c} outside [0, 1]")));
    }
    let grid = SweepGrid {
        confidences: args.confidences.clone(),
        resolutions: args.resolutions.clone(),
        variants,
        sequences: resolve_sequences(&args.input)?,
    };
    let cells = bench::sweep(&grid, &resolved.tracker, resolved.jobs);
    let absent = cells.iter().filter(|c| matches!(c.outcome, SweepOutcome::Absent { .. })).count();
    let csv = bench::write_sweep_csv(&cells).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_file(&args.out, csv)?;
    let config_path = args.out.with_file_name(RUN_CONFIG_FILE);
    write_file(&config_path, resolved.to_text())?;
    println!("{} cells ({absent} absent); wrote {}", cells.len(), args.out.display());
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<(), CliError> {
    let kind: TrajectoryKind = args.kind.parse().map_err(CliError::Usage)?;
    let cfg = SynthConfig {
        num_targets: args.targets,
        num_frames: args.frames,
        kind,
        appearance_gap: args.gap,
        box_noise_std: args.box_noise,
        descriptor_noise_std: args.descriptor_noise,
        external_noise_std: args.external_noise,
        seed: args.seed,
        image_width: args.width,
        image_height: args.height,
        speed: args.speed,
        crossing_frame: args.crossing_frame,
        clutter_per_frame: args.clutter,
        ..SynthConfig::default()
    };
    let scenario = SynthScenario::generate(cfg)?;
    scenario.write_mot_dir(&args.out, args.features)?;
    println!("wrote {} ({} frames, {} targets)", args.out.display(), args.frames, args.targets);
    Ok(())
}

fn cmd_overlay(args: &OverlayArgs) -> Result<(), CliError> {
    let seqinfo = args.sequence.join("seqinfo.ini");
    let meta = crate::ingest::parse_seqinfo(&read_file(&seqinfo)?)
        .map_err(|e| CliError::Input(format!("{}:{}: {}", seqinfo.display(), e.line, e.message)))?;
    let results = parse_results(&read_file(&args.results)?)
        .map_err(|e| CliError::Input(format!("{}:{}: {}", args.results.display(), e.line, e.message)))?;
    let stats = bench::render_overlay(&meta, &results, args.images.as_deref(), &args.out)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    println!("wrote {} frames ({} skipped) to {}", stats.written, stats.skipped, args.out.display());
    Ok(())
}

fn cmd_fm_pack(args: &FmPackArgs) -> Result<(), CliError> {
    match &args.action {
        FmPackAction::Pack { input, frame, channels, height, width, stride, out } => {
            let bytes = fs::read(input).map_err(|e| CliError::Input(format!("{}: {e}", input.display())))?;
            if bytes.len() % 4 != 0 {
                return Err(CliError::Input(format!("{}: length {} is not a multiple of 4", input.display(), bytes.len())));
            }
            let data: Vec<f32> = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
            let fm = FeatureMap::new(*frame, *channels, *height, *width, *stride, data)
                .map_err(|e| CliError::Input(format!("{}: {e}", input.display())))?;
            write_file(out, fm.to_bytes())?;
            println!("wrote {}", out.display());
        }
        FmPackAction::Inspect { file } => {
            let fm = read_feature_map(file)?;
            let (lo, hi) = fm.data().iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            println!(
                "frame={} channels={} height={} width={} stride={} min={lo} max={hi}",
                fm.frame(),
                fm.channels(),
                fm.height(),
                fm.width(),
                fm.stride()
            );
        }
    }
    Ok(())
}

pub fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Track(a) => cmd_track(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Synth(a) => cmd_synth(a),
        Command::RenderOverlay(a) => cmd_overlay(a),
        Command::FmPack(a) => cmd_fm_pack(a),
    }
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
    match dispatch(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{e}");
            e.code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn every_flag_is_documented() {
        fn walk(cmd: &clap::Command, path: &str) {
            for arg in cmd.get_arguments() {
                let id = arg.get_id().as_str();
                if id == "help" || id == "version" {
                    continue;
                }
                assert!(arg.get_help().is_some() || arg.get_long_help().is_some(), "{path} --{id} has no help text");
            }
            for sub in cmd.get_subcommands() {
                assert!(sub.get_about().is_some(), "{path} {} has no description", sub.get_name());
                walk(sub, &format!("{path} {}", sub.get_name()));
            }
        }
        Cli::command().debug_assert();
        walk(&Cli::command(), "lite-mot");
    }

    #[test]
    fn config_text_parsing() {
        let pairs = parse_config_text("# c\n\nmax_age = 12\nvariant=sort\n").unwrap();
        assert_eq!(pairs, vec![("max_age".into(), "12".into()), ("variant".into(), "sort".into())]);
        assert_eq!(parse_config_text("a=1\nnope\n").unwrap_err().line, 2);
        assert!(parse_config_text("two words=1").is_err());
    }

    #[test]
    fn run_config_round_trip() {
        let mut c = RunConfig { variant: TrackerVariant::LiteDeepSort, seed: 9, jobs: 3, ..RunConfig::default() };
        c.inputs = vec!["a/b".into(), "c".into()];
        c.out = Some("o".into());
        c.features = Some("f".into());
        c.tracker.max_cosine_distance = 0.3;
        assert_eq!(RunConfig::from_text(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn precedence_flag_over_file_over_default() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("cfg.txt");
        fs::write(&file, "max_age=12\nn_init=5\ninput=x\nout=y\n").unwrap();
        let args = TrackArgs {
            variant: None,
            input: vec![],
            out: None,
            features: None,
            reid_delay_ms: None,
            tracker: TrackerFlags { config: Some(file), max_age: Some(7), ..Default::default() },
        };
        let cfg = args.resolve().unwrap();
        assert_eq!(cfg.tracker.max_age, 7);
        assert_eq!(cfg.tracker.n_init, 5);
        assert_eq!(cfg.tracker.min_confidence, 0.25);
        assert_eq!(cfg.inputs, vec![PathBuf::from("x")]);
    }

    #[test]
    fn lite_without_features_is_usage_error() {
        let args = TrackArgs {
            variant: Some("lite-deepsort".into()),
            input: vec!["x".into()],
            out: Some("y".into()),
            features: None,
            reid_delay_ms: None,
            tracker: TrackerFlags::default(),
        };
        assert_eq!(args.resolve().unwrap_err().code(), EXIT_USAGE);
    }

    #[test]
    fn error_lines_are_single_line() {
        let e = CliError::Input("a\nb".into());
        assert_eq!(e.to_string(), "error[input]: a b");
    }
}
