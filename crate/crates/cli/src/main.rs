use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use camo_cli::{CliError, CliResult, RenderArgs, ReplayArgs};
use camo_core::renderer::Sampling;
use camo_service::ServerConfig;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "camo", version, about = "Planar phone tracking and camouflage rendering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario into trace, truth and map files.
    Simulate {
        /// Scenario JSON file or built-in name.
        scenario: String,
        /// Output prefix, e.g. `out/run` writes `out/run.trace.jsonl`.
        #[arg(long)]
        out: PathBuf,
        /// Replaces the scenario's noise seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a recorded trace through the tracker.
    Replay {
        #[arg(long)]
        trace: PathBuf,
        /// Pipeline config JSON; defaults to `<prefix>.config.json` beside the trace.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Map PNG; the frame at the final estimate is written next to the output.
        #[arg(long)]
        map: Option<PathBuf>,
        /// Estimates CSV; the summary is written beside it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Render one screen frame.
    Render {
        #[arg(long)]
        map: PathBuf,
        /// Device geometry JSON; a default handset when absent.
        #[arg(long)]
        geometry: Option<PathBuf>,
        /// `x_mm,y_mm,theta` with an optional `deg` or `rad` suffix.
        #[arg(long, allow_hyphen_values = true)]
        pose: String,
        #[arg(long, value_enum, default_value_t = SamplingArg::Bilinear)]
        sampling: SamplingArg,
        /// Colour outside the map, `r,g,b`.
        #[arg(long, default_value = "128,128,128", value_parser = parse_rgb)]
        fill: [u8; 3],
        #[arg(long)]
        out: PathBuf,
    },
    /// Print error metrics of estimates against ground truth.
    Eval {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        estimates: PathBuf,
    },
    /// Run the session service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value_t = ServerConfig::default().max_sessions)]
        max_sessions: usize,
        #[arg(long, default_value_t = ServerConfig::default().decimation)]
        decimation: u32,
        #[arg(long, default_value = "info")]
        log_level: String,
    },
    /// Offline tools for the pattern provider protocol.
    #[command(subcommand)]
    Pattern(PatternCommand),
}

#[derive(Subcommand)]
enum PatternCommand {
    /// Write the request for an environment photo and a colour sample.
    Dump {
        #[arg(long)]
        environment: PathBuf,
        #[arg(long, value_parser = parse_rgb)]
        rgb: [u8; 3],
        #[arg(long, default_value_t = 1.0)]
        gain: f64,
        #[arg(long, default_value_t = camo_core::pattern_synth::DEFAULT_GRID)]
        grid: u32,
        /// Request JSON; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Synthesize a tile from a hand-written response.
    Ingest {
        #[arg(long)]
        request: PathBuf,
        #[arg(long)]
        response: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Ask a provider and synthesize the tile; offline without an endpoint.
    Request {
        #[arg(long)]
        request: PathBuf,
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long, default_value_t = 2000)]
        timeout_ms: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SamplingArg {
    Nearest,
    Bilinear,
}

fn parse_rgb(s: &str) -> Result<[u8; 3], String> {
    let parts: Vec<_> = s.split(',').map(|p| p.trim().parse::<u8>()).collect();
    match parts[..] {
        [Ok(r), Ok(g), Ok(b)] => Ok([r, g, b]),
        _ => Err(format!("expected r,g,b with values 0..=255, got {s:?}")),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate { scenario, out, seed } => {
            let (mut s, base) = camo_cli::load_scenario(&scenario)?;
            if let Some(seed) = seed {
                s.seed = seed;
            }
            let files = camo_cli::simulate(&s, base.as_deref(), &out)?;
            camo_cli::print_json(&serde_json::json!({
                "trace": files.trace,
                "truth": files.truth,
                "map": files.map,
                "map_sidecar": files.map_sidecar,
                "config": files.config,
            }))
        }
        Command::Replay {
            trace,
            config,
            map,
            out,
        } => {
            let (_, summary) = camo_cli::replay(&ReplayArgs {
                trace,
                config,
                map,
                out,
            })?;
            camo_cli::print_json(&summary)
        }
        Command::Render {
            map,
            geometry,
            pose,
            sampling,
            fill,
            out,
        } => camo_cli::render(&RenderArgs {
            map,
            geometry,
            pose,
            sampling: match sampling {
                SamplingArg::Nearest => Sampling::Nearest,
                SamplingArg::Bilinear => Sampling::Bilinear,
            },
            fill,
            out,
        }),
        Command::Eval { truth, estimates } => camo_cli::print_json(&camo_cli::eval(&truth, &estimates)?),
        Command::Serve {
            port,
            max_sessions,
            decimation,
            log_level,
        } => serve(port, max_sessions, decimation, &log_level),
        Command::Pattern(p) => pattern(p),
    }
}

fn pattern(cmd: PatternCommand) -> CliResult<()> {
    match cmd {
        PatternCommand::Dump {
            environment,
            rgb,
            gain,
            grid,
            out,
        } => {
            let req = camo_cli::pattern_dump(&environment, rgb, gain, grid)?;
            match out {
                Some(path) => {
                    let text = serde_json::to_string_pretty(&req).expect("request serializes");
                    std::fs::write(&path, text + "\n")
                        .map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display())))
                }
                None => camo_cli::print_json(&req),
            }
        }
        PatternCommand::Ingest {
            request,
            response,
            seed,
            out,
        } => camo_cli::print_json(&camo_cli::pattern_ingest(&request, &response, seed, &out)?),
        PatternCommand::Request {
            request,
            endpoint,
            timeout_ms,
            seed,
            out,
        } => camo_cli::print_json(&camo_cli::pattern_request(
            &request,
            endpoint.as_deref(),
            Duration::from_millis(timeout_ms),
            seed,
            &out,
        )?),
    }
}

fn serve(port: u16, max_sessions: usize, decimation: u32, log_level: &str) -> CliResult<()> {
    let filter =
        tracing_subscriber::EnvFilter::try_new(log_level).map_err(|e| CliError::Input(format!("--log-level: {e}")))?;
    if max_sessions == 0 || decimation == 0 {
        return Err(CliError::Input(
            "--max-sessions and --decimation must be positive".into(),
        ));
    }
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();
    let cfg = ServerConfig {
        max_sessions,
        decimation,
        ..ServerConfig::default()
    };
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Runtime(e.to_string()))?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(("0.0.0.0", port))
            .await
            .map_err(|e| CliError::Runtime(format!("binding port {port}: {e}")))?;
        camo_service::serve(listener, cfg)
            .await
            .map_err(|e| CliError::Runtime(e.to_string()))
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
