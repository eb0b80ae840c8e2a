//! Batch commands behind the `camo` binary. Each command is a plain function
//! so tests and the acceptance suite can call it without a subprocess.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use camo_core::geometry::{DeviceGeometry, Pose2D, SurfaceMap};
use camo_core::io;
use camo_core::motion_events::ImuSample;
use camo_core::pattern_synth::{
    self, ColorSample, HttpProvider, OfflineProvider, PatternOutcome, PatternProvider, PatternRequest, PatternResponse,
    ResponseSource,
};
use camo_core::pipeline::{run_trace, PipelineConfig, StepOutput};
use camo_core::renderer::{render_screen, RenderConfig, Sampling};
use camo_core::simulator::{builtin, capture_surface, evaluate, plan_trajectory, synthesize_imu, Metrics, Scenario};
use serde::Serialize;

/// Command failure, split by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad input: exit code 2.
    Input(String),
    /// Anything else: exit code 1.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    fn input(context: impl std::fmt::Display, err: impl std::fmt::Display) -> Self {
        CliError::Input(format!("{context}: {err}"))
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = Result<T, CliError>;

/// Reading an input failed: the input is at fault.
fn read_err(path: &Path) -> impl Fn(camo_core::Error) -> CliError + '_ {
    move |e| match e {
        camo_core::Error::Io(ref io) if io.kind() != std::io::ErrorKind::NotFound => {
            CliError::Runtime(format!("{}: {e}", path.display()))
        }
        e => CliError::input(path.display(), e),
    }
}

fn write_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("writing {}: {e}", path.display()))
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| read_err(path)(e.into()))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(write_err(path))
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("outputs serialize");
    fs::write(path, text + "\n").map_err(write_err(path))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| read_err(path)(e.into()))?;
    serde_json::from_str(&text).map_err(|e| CliError::input(path.display(), e))
}

/// `prefix` + `suffix`, keeping the prefix's directory.
fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// `run.trace.jsonl` -> `run`; other names lose their last extension.
pub fn trace_prefix(trace: &Path) -> PathBuf {
    let name = trace.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    match name.strip_suffix(".trace.jsonl") {
        Some(stem) => trace.with_file_name(stem),
        None => trace.with_extension(""),
    }
}

/// A scenario file path or a built-in name. Relative map paths in a file
/// resolve against the file's directory.
pub fn load_scenario(arg: &str) -> CliResult<(Scenario, Option<PathBuf>)> {
    let path = Path::new(arg);
    if !path.exists() {
        if let Some(s) = builtin::by_name(arg) {
            return Ok((s, None));
        }
    }
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::input(arg, format!("{e} (built-in scenarios: {})", builtin::NAMES.join(", "))))?;
    let scenario = Scenario::from_json(&text).map_err(|e| CliError::input(arg, e))?;
    Ok((scenario, path.parent().map(Path::to_path_buf)))
}

/// Pipeline settings that match how a scenario was simulated.
pub fn pipeline_config_for(scenario: &Scenario) -> PipelineConfig {
    PipelineConfig {
        magnet: scenario.magnet,
        ..PipelineConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimulateOutputs {
    pub trace: PathBuf,
    pub truth: PathBuf,
    pub map: PathBuf,
    pub map_sidecar: PathBuf,
    pub config: PathBuf,
}

/// Writes `<prefix>.trace.jsonl`, `<prefix>.truth.jsonl`, `<prefix>.map.png`
/// with its sidecar, and `<prefix>.config.json` holding matching pipeline
/// settings.
pub fn simulate(scenario: &Scenario, base_dir: Option<&Path>, prefix: &Path) -> CliResult<SimulateOutputs> {
    scenario.validate().map_err(|e| CliError::input("scenario", e))?;
    let truth = plan_trajectory(scenario).map_err(|e| CliError::input("scenario", e))?;
    let imu = synthesize_imu(&truth, scenario);
    let map = capture_surface(scenario, &truth, base_dir).map_err(|e| CliError::input("map_source", e))?;

    if let Some(dir) = prefix.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(write_err(dir))?;
    }
    let out = SimulateOutputs {
        trace: with_suffix(prefix, ".trace.jsonl"),
        truth: with_suffix(prefix, ".truth.jsonl"),
        map: with_suffix(prefix, ".map.png"),
        map_sidecar: with_suffix(prefix, ".map.json"),
        config: with_suffix(prefix, ".config.json"),
    };
    io::write_trace(create(&out.trace)?, &imu).map_err(|e| CliError::Runtime(e.to_string()))?;
    io::write_truth(create(&out.truth)?, &truth.samples).map_err(|e| CliError::Runtime(e.to_string()))?;
    map.save(&out.map).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_json(&out.config, &pipeline_config_for(scenario))?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventRecord {
    pub name: &'static str,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplaySummary {
    pub samples: usize,
    pub final_pose: Pose2D,
    pub events: Vec<EventRecord>,
    /// Present when a truth sidecar was found.
    pub metrics: Option<Metrics>,
}

#[derive(Debug, Clone, Default)]
pub struct ReplayArgs {
    pub trace: PathBuf,
    /// Pipeline settings; `<prefix>.config.json` next to the trace is used
    /// when absent, then the defaults.
    pub config: Option<PathBuf>,
    /// When given, the frame at the final estimate is written next to the
    /// estimates.
    pub map: Option<PathBuf>,
    /// Estimates CSV; the summary goes to the same path with `.summary.json`.
    pub out: PathBuf,
}

pub fn read_trace_file(path: &Path) -> CliResult<Vec<ImuSample>> {
    io::read_trace(open(path)?).map_err(read_err(path))
}

pub fn resolve_config(trace: &Path, explicit: Option<&Path>) -> CliResult<PipelineConfig> {
    let sidecar = with_suffix(&trace_prefix(trace), ".config.json");
    let path = match explicit {
        Some(p) => p.to_path_buf(),
        None if sidecar.exists() => sidecar,
        None => return Ok(PipelineConfig::default()),
    };
    let cfg: PipelineConfig = read_json(&path)?;
    cfg.validate().map_err(|e| CliError::input(path.display(), e))?;
    Ok(cfg)
}

pub fn summary_path(out: &Path) -> PathBuf {
    out.with_extension("summary.json")
}

pub fn replay(args: &ReplayArgs) -> CliResult<(Vec<StepOutput>, ReplaySummary)> {
    let cfg = resolve_config(&args.trace, args.config.as_deref())?;
    let samples = read_trace_file(&args.trace)?;
    let map = args
        .map
        .as_deref()
        .map(|p| SurfaceMap::load(p).map_err(read_err(p)))
        .transpose()?;
    let steps = run_trace(&cfg, &samples).map_err(|e| CliError::input(args.trace.display(), e))?;

    let truth_path = with_suffix(&trace_prefix(&args.trace), ".truth.jsonl");
    let metrics = if truth_path.exists() {
        let truth = io::read_truth(open(&truth_path)?).map_err(read_err(&truth_path))?;
        let est: Vec<_> = steps.iter().map(|s| (s.t, s.pose)).collect();
        Some(evaluate(&truth, &est).map_err(|e| CliError::input(truth_path.display(), e))?)
    } else {
        None
    };
    let summary = ReplaySummary {
        samples: steps.len(),
        final_pose: steps.last().map_or(cfg.placement_pose, |s| s.pose),
        events: steps
            .iter()
            .flat_map(|s| s.events.iter().map(|e| EventRecord { name: e.name(), t: s.t }))
            .collect(),
        metrics,
    };

    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(write_err(dir))?;
    }
    io::write_estimates(create(&args.out)?, &steps).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_json(&summary_path(&args.out), &summary)?;
    if let Some(map) = &map {
        let frame = render_screen(
            &summary.final_pose,
            &DeviceGeometry::default(),
            map,
            &RenderConfig::default(),
        );
        let path = args.out.with_extension("frame.png");
        frame
            .save(&path)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    }
    Ok((steps, summary))
}

#[derive(Debug, Clone)]
pub struct RenderArgs {
    pub map: PathBuf,
    pub geometry: Option<PathBuf>,
    pub pose: String,
    pub sampling: Sampling,
    pub fill: [u8; 3],
    pub out: PathBuf,
}

pub fn render(args: &RenderArgs) -> CliResult<()> {
    let pose = io::parse_pose_arg(&args.pose).map_err(|e| CliError::input("--pose", e))?;
    let geometry = match &args.geometry {
        Some(p) => {
            let g: DeviceGeometry = read_json(p)?;
            g.validate().map_err(|e| CliError::input(p.display(), e))?;
            g
        }
        None => DeviceGeometry::default(),
    };
    let map = SurfaceMap::load(&args.map).map_err(read_err(&args.map))?;
    let cfg = RenderConfig {
        fill_color: args.fill,
        sampling: args.sampling,
    };
    render_screen(&pose, &geometry, &map, &cfg)
        .save_with_format(&args.out, image::ImageFormat::Png)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", args.out.display())))
}

pub fn eval(truth: &Path, estimates: &Path) -> CliResult<Metrics> {
    let t = io::read_truth(open(truth)?).map_err(read_err(truth))?;
    let e = io::read_estimates(open(estimates)?).map_err(read_err(estimates))?;
    evaluate(&t, &e).map_err(|err| CliError::input("eval", err))
}

/// Builds a provider request from an environment photo and a colour sample.
pub fn pattern_dump(environment: &Path, rgb: [u8; 3], gain: f64, grid: u32) -> CliResult<PatternRequest> {
    let env = image::open(environment)
        .map_err(|e| CliError::input(environment.display(), e))?
        .to_rgb8();
    let sample = ColorSample::new(rgb, gain).map_err(|e| CliError::input("--rgb/--gain", e))?;
    let regions = pattern_synth::segment_regions(&env, grid).map_err(|e| CliError::input("--grid", e))?;
    Ok(PatternRequest::new(&sample, &regions))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestReport {
    pub source: ResponseSource,
    pub response: PatternResponse,
    /// Why the given response was rejected, if it was.
    pub rejected: Option<String>,
}

/// Turns a hand-written response into a tile, falling back to the offline
/// response when it does not validate against the request.
pub fn pattern_ingest(request: &Path, response: &Path, seed: u64, out: &Path) -> CliResult<IngestReport> {
    let req: PatternRequest = read_json(request)?;
    req.validate().map_err(|e| CliError::input(request.display(), e))?;
    let text = fs::read_to_string(response).map_err(|e| read_err(response)(e.into()))?;
    let (resp, source, rejected) = match PatternResponse::parse(&text, &req) {
        Ok(r) => (r, ResponseSource::Provider, None),
        Err(e) => {
            let fallback = pattern_synth::offline_response(&req).map_err(|e| CliError::input(request.display(), e))?;
            (fallback, ResponseSource::Fallback, Some(e.to_string()))
        }
    };
    write_tile(&resp, seed, out)?;
    Ok(IngestReport {
        source,
        response: resp,
        rejected,
    })
}

/// Asks a provider (the offline one without an endpoint) and writes the tile.
pub fn pattern_request(
    request: &Path,
    endpoint: Option<&str>,
    timeout: Duration,
    seed: u64,
    out: &Path,
) -> CliResult<PatternOutcome> {
    let req: PatternRequest = read_json(request)?;
    let provider: Box<dyn PatternProvider> = match endpoint {
        Some(url) => Box::new(HttpProvider::new(url, timeout).map_err(|e| CliError::input("--endpoint", e))?),
        None => Box::new(OfflineProvider),
    };
    let outcome =
        pattern_synth::request_pattern(provider.as_ref(), &req).map_err(|e| CliError::input(request.display(), e))?;
    write_tile(&outcome.response, seed, out)?;
    Ok(outcome)
}

fn write_tile(resp: &PatternResponse, seed: u64, out: &Path) -> CliResult<()> {
    let tile = pattern_synth::synthesize_tile(resp, seed).map_err(|e| CliError::Runtime(e.to_string()))?;
    tile.save_with_format(out, image::ImageFormat::Png)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))
}

/// Prints JSON to stdout with a trailing newline.
pub fn print_json(value: &impl Serialize) -> CliResult<()> {
    let mut stdout = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut stdout, value).map_err(|e| CliError::Runtime(e.to_string()))?;
    writeln!(stdout).map_err(|e| CliError::Runtime(e.to_string()))
}
