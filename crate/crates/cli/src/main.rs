use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use vidsched::baselines::{run_baseline, Algorithm};
use vidsched::dp::solve_with;
use vidsched::sim::simulate;
use vidsched::sweep::{compare, parse_capacity_range, sweep, write_sweep_csv, SweepConfig};
use vidsched::trace::{load_trace, synth_instance, Instance, SynthParams, TraceConfig, VideoTiming};
use vidsched::units::{parse_rational, Rational};
use vidsched::universal::universal;
use vidsched::{Analysis, Error, GopPattern, LinkConfig, Result, TransmissionSequence};

#[derive(Parser)]
#[command(name = "vidsched", version, about = "Optimal video frame scheduling over a fixed-capacity link")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic instance (JSON on stdout).
    Gen {
        /// Dyadic GOP pattern, e.g. G16B15.
        #[arg(long)]
        pattern: GopPattern,
        #[arg(long, default_value_t = 1)]
        gops: usize,
        /// Frame count; defaults to the GOPs plus the next GOP's I-frame.
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Initial playback delay in seconds.
        #[arg(long, default_value = "0.1", value_parser = rational)]
        delay: Rational,
    },
    /// Build an instance from a trace CSV (display_index,kind,size_bits,quality).
    Import {
        trace: PathBuf,
        #[arg(long)]
        pattern: GopPattern,
        #[arg(long, default_value = "0.1", value_parser = rational)]
        delay: Rational,
        #[arg(long, default_value = "30", value_parser = rational)]
        fps: Rational,
        /// Slot length in seconds.
        #[arg(long, default_value = "0.001", value_parser = rational)]
        slot: Rational,
    },
    /// Report the structure class, GOP sets and universal order.
    Classify {
        instance: PathBuf,
        /// Write the universal order, one frame id per line.
        #[arg(long)]
        emit_universal: Option<PathBuf>,
    },
    /// Schedule one instance at one capacity.
    Schedule {
        instance: PathBuf,
        #[command(flatten)]
        link: LinkArgs,
        #[arg(long, default_value = "optimal")]
        algo: Algorithm,
        #[arg(long)]
        emit_universal: Option<PathBuf>,
    },
    /// Replay a given transmission order.
    Simulate {
        instance: PathBuf,
        #[command(flatten)]
        link: LinkArgs,
        /// Comma-separated frame ids in transmission order.
        #[arg(long, value_delimiter = ',', required = true)]
        order: Vec<usize>,
        /// Comma-separated start slots, one per frame in the order.
        #[arg(long, value_delimiter = ',')]
        starts: Option<Vec<u64>>,
    },
    /// Reward of every algorithm over a capacity/delay grid (CSV on stdout).
    Sweep(GridArgs),
    /// Dominance and monotonicity summary over the same grid as `sweep`.
    Compare(GridArgs),
}

#[derive(Args)]
struct LinkArgs {
    /// Link capacity in bits per slot.
    #[arg(long)]
    capacity: u64,
    /// Re-derive deadlines for this initial delay in seconds.
    #[arg(long, value_parser = rational)]
    delay: Option<Rational>,
}

#[derive(Args)]
struct GridArgs {
    instance: PathBuf,
    /// Capacity range a:b:step; defaults to an even grid up to the lossless point.
    #[arg(long)]
    capacities: Option<String>,
    /// Comma-separated initial delays in seconds.
    #[arg(long, value_delimiter = ',', value_parser = rational)]
    delays: Vec<Rational>,
    /// Grid size when --capacities is absent.
    #[arg(long, default_value_t = 20)]
    points: usize,
    #[arg(long, value_delimiter = ',')]
    algos: Option<Vec<Algorithm>>,
}

fn rational(s: &str) -> std::result::Result<Rational, String> {
    parse_rational(s).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        return report(&e);
    }
    let mut out = io::stdout().lock();
    match run(cli.command, &mut out).and_then(|()| Ok(out.flush()?)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => report(&e),
    }
}

fn report(e: &Error) -> ExitCode {
    let body = json!({"error": {"kind": e.kind(), "message": e.to_string()}});
    eprintln!("{body}");
    ExitCode::from(1)
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("VIDSCHED_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::InvalidParameters(format!("VIDSCHED_THREADS={value:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::InvalidParameters(e.to_string()))
}

fn run(command: Command, out: &mut impl Write) -> Result<()> {
    match command {
        Command::Gen {
            pattern,
            gops,
            frames,
            seed,
            delay,
        } => {
            if gops == 0 {
                return Err(Error::InvalidParameters("--gops must be at least 1".into()));
            }
            let frames = frames.unwrap_or(pattern.gop_size * gops + 1);
            let inst = synth_instance(seed, &SynthParams::video(pattern, frames, VideoTiming::standard(delay)))?;
            writeln!(out, "{}", inst.to_json())?;
        }
        Command::Import {
            trace,
            pattern,
            delay,
            fps,
            slot,
        } => {
            let config = TraceConfig {
                pattern,
                timing: VideoTiming::new(fps, slot, delay)?,
                frame_count: None,
            };
            let inst = load_trace(&trace, &config).map_err(|e| with_path(e, &trace))?;
            writeln!(out, "{}", inst.to_json())?;
        }
        Command::Classify {
            instance,
            emit_universal,
        } => {
            let inst = load_instance(&instance)?;
            let analysis = Analysis::new(&inst.dag)?;
            if let Some(path) = emit_universal {
                let u = analysis
                    .universal
                    .as_ref()
                    .ok_or_else(|| Error::UnsupportedStructure(witness(&analysis)))?;
                write_order(&path, u.order()).map_err(|e| with_path(e, &path))?;
            }
            writeln!(out, "{}", serde_json::to_string_pretty(&analysis)?)?;
        }
        Command::Schedule {
            instance,
            link,
            algo,
            emit_universal,
        } => {
            let (inst, capacity) = load_with_link(&instance, &link)?;
            let dag = &inst.dag;
            let link = LinkConfig::new(capacity)?;
            // Baselines fall back to a topological order on unsupported structures.
            let u = match universal(dag) {
                Ok(u) => Some(u),
                Err(e) if algo == Algorithm::Optimal || emit_universal.is_some() => return Err(e),
                Err(_) => None,
            };
            if let (Some(path), Some(u)) = (&emit_universal, &u) {
                write_order(path, u.order()).map_err(|e| with_path(e, path))?;
            }
            let (mut value, reward) = if algo == Algorithm::Optimal {
                let sol = solve_with(u.as_ref().unwrap(), dag, &link)?;
                let mut v = serde_json::to_value(&sol.simulation)?;
                v["evaluations"] = json!(sol.evaluations);
                (v, sol.reward)
            } else {
                let res = run_baseline(algo, dag, &link, u.as_ref())?;
                let mut v = serde_json::to_value(&res.simulation)?;
                if let Some(m) = res.block_size {
                    v["block_size"] = json!(m);
                }
                (v, res.reward)
            };
            value["algorithm"] = json!(algo.name());
            value["capacity"] = json!(capacity);
            value["avg_quality"] = json!(reward.mean_string(dag.len()));
            writeln!(out, "{}", serde_json::to_string_pretty(&value)?)?;
        }
        Command::Simulate {
            instance,
            link,
            order,
            starts,
        } => {
            let (inst, capacity) = load_with_link(&instance, &link)?;
            let seq = TransmissionSequence::new(order)?;
            let sim = simulate(&seq, &inst.dag, &LinkConfig::new(capacity)?, starts.as_deref())?;
            writeln!(out, "{}", serde_json::to_string_pretty(&sim)?)?;
        }
        Command::Sweep(grid) => {
            let (inst, config) = grid_config(grid)?;
            write_sweep_csv(out, &sweep(&inst, &config)?)?;
        }
        Command::Compare(grid) => {
            let (inst, config) = grid_config(grid)?;
            let cmp = compare(&sweep(&inst, &config)?);
            writeln!(out, "{}", serde_json::to_string_pretty(&cmp)?)?;
        }
    }
    Ok(())
}

fn witness(analysis: &Analysis) -> vidsched::Violation {
    match &analysis.class {
        vidsched::ClassLabel::Neither { witness } => witness.clone(),
        _ => unreachable!("solvable structures have a universal sequence"),
    }
}

fn load_instance(path: &Path) -> Result<Instance> {
    Instance::load(path).map_err(|e| with_path(e, path))
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Io(io) => Error::Io(io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        other => other,
    }
}

fn load_with_link(path: &Path, link: &LinkArgs) -> Result<(Instance, u64)> {
    let inst = load_instance(path)?;
    let inst = match link.delay {
        Some(d) => inst.with_delay(d)?,
        None => inst,
    };
    Ok((inst, link.capacity))
}

fn grid_config(grid: GridArgs) -> Result<(Instance, SweepConfig)> {
    let inst = load_instance(&grid.instance)?;
    if grid.points == 0 {
        return Err(Error::InvalidParameters("--points must be positive".into()));
    }
    let config = SweepConfig {
        delays: grid.delays,
        capacities: grid.capacities.as_deref().map(parse_capacity_range).transpose()?,
        grid_points: grid.points,
        algorithms: grid.algos.unwrap_or_else(|| Algorithm::ALL.to_vec()),
    };
    Ok((inst, config))
}

fn write_order(path: &Path, order: &[usize]) -> Result<()> {
    let text: String = order.iter().map(|f| format!("{f}\n")).collect();
    fs::write(path, text)?;
    Ok(())
}
