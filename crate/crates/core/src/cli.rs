//! Command-line front end. `run_cli` returns the process exit status.

use std::collections::HashMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::bench::{generate_ground_truth, perturb, Benchmark, ScenarioSpec};
use crate::error::{Error, Result};
use crate::eval::{emit_timespace_plot, evaluate, match_frames, render_table, tracks, Coloring, MatchConfig, PlotFormat, PlotOptions, Track};
use crate::io::kv::KeyValues;
use crate::io::pipeline::{associate_partitioned, rectify_chains, run_pipeline};
use crate::io::records::{
    load_external, read_chains, read_fragments, write_fragments, write_records, write_trajectories, ChainRecord, Dataset,
};
use crate::io::stream::stream_ingest;
use crate::io::PipelineConfig;
use crate::types::{Fragment, DEFAULT_DT};

pub const THREADS_ENV: &str = "TRAJRECON_THREADS";

#[derive(Debug, Parser)]
#[command(name = "trajrecon", version, about = "Vehicle trajectory reconciliation")]
struct Cli {
    /// Config file (`key = value`); its meaning depends on the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; the TRAJRECON_THREADS environment variable wins.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Preset {
    Default,
    Reference,
    Replica,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate ground-truth trajectories from a scenario.
    Generate {
        #[arg(short, long)]
        output: PathBuf,
        /// Used when no --config is given.
        #[arg(long, value_enum, default_value = "replica")]
        preset: Preset,
    },
    /// Corrupt ground truth into raw fragments.
    Perturb {
        #[arg(long)]
        gt: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Link raw fragments into chains.
    Associate {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Rectify the included chains of an association.
    Rectify {
        /// Raw fragment file the chains refer to.
        #[arg(short, long)]
        input: PathBuf,
        #[arg(long)]
        chains: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Score predictions against ground truth.
    Evaluate {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        /// Also write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        #[arg(long, default_value_t = 0.3)]
        iou: f64,
    },
    /// Time-space diagram as PNG or CSV (by extension).
    Plot {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Color points by match status against this ground truth.
        #[arg(long)]
        gt: Option<PathBuf>,
        #[arg(long)]
        lane: Option<i64>,
    },
    /// Full pipeline from a pipeline config.
    Run {
        #[arg(short, long)]
        input: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

/// Parses `argv` (program name first) and runs the command.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn threads(flag: Option<usize>) -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
        Err(_) => Ok(flag),
    }
}

fn pipeline_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut c = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        c.seed = s;
    }
    if let Some(n) = threads(cli.threads)? {
        c.workers = n;
    }
    c.validate()?;
    Ok(c)
}

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "no such file")))
    }
}

fn load_tracks(path: &Path) -> Result<Vec<Track>> {
    require(path)?;
    Ok(match load_external(path)? {
        Dataset::Fragments(f) => tracks(&f),
        Dataset::Trajectories(t) => tracks(&t),
    })
}

fn execute(cli: Cli) -> Result<()> {
    let seed = cli.seed.unwrap_or(0);
    match &cli.command {
        Command::Generate { output, preset } => {
            let spec = match (&cli.config, preset) {
                (Some(p), _) => ScenarioSpec::load(p)?,
                (None, Preset::Default) => ScenarioSpec::default(),
                (None, Preset::Reference) => ScenarioSpec::reference(),
                (None, Preset::Replica) => Benchmark::replica(seed).scenario,
            };
            let gt = generate_ground_truth(&spec, seed)?;
            write_trajectories(output, &gt)?;
            eprintln!("{} ground-truth trajectories -> {}", gt.len(), output.display());
        }
        Command::Perturb { gt, output } => {
            require(gt)?;
            let bench = match &cli.config {
                Some(p) => Benchmark::from_key_values(&KeyValues::load(p)?, seed)?,
                None => Benchmark::replica(seed),
            };
            let truth = match load_external(gt)? {
                Dataset::Trajectories(t) => t,
                Dataset::Fragments(f) if f.is_empty() => Vec::new(),
                Dataset::Fragments(_) => {
                    return Err(Error::Config(format!("{} holds fragments, not trajectories", gt.display())))
                }
            };
            let raw = perturb(&truth, &bench.masks, &bench.layout, &bench.noise)?;
            write_fragments(output, &raw)?;
            eprintln!("{} fragments -> {}", raw.len(), output.display());
        }
        Command::Associate { input, output } => {
            let config = pipeline_config(&cli)?;
            require(input)?;
            let ingest = stream_ingest(input, config.reorder_window)?;
            let assoc = associate_partitioned(&ingest.fragments, &config)?;
            let excluded = assoc.excluded.iter().map(|id| ChainRecord {
                id: id.clone(),
                fragment_ids: vec![id.clone()],
                cost: 0.0,
                included: false,
            });
            write_records(output, assoc.chains.iter().map(ChainRecord::from_chain).chain(excluded))?;
            eprintln!(
                "{} chains, {} excluded fragments, cost {:.6} -> {}",
                assoc.chains.len(),
                assoc.excluded.len(),
                assoc.cost,
                output.display()
            );
        }
        Command::Rectify { input, chains, output } => {
            let config = pipeline_config(&cli)?;
            require(input)?;
            require(chains)?;
            let frags = read_fragments(input)?;
            let by_id: HashMap<&str, &Fragment> = frags.iter().map(|f| (f.id.as_str(), f)).collect();
            let members: Vec<Vec<String>> =
                read_chains(chains)?.into_iter().filter(|c| c.included).map(|c| c.fragment_ids).collect();
            let trajectories = rectify_chains(&members, &by_id, &config.rectifier, config.workers)
                .map_err(|f| Error::Pipeline(format!("rectifying {} failed: {}", f.failed, f.error)))?;
            write_trajectories(output, &trajectories)?;
            eprintln!("{} trajectories -> {}", trajectories.len(), output.display());
        }
        Command::Evaluate { gt, pred, json, iou } => {
            let g = load_tracks(gt)?;
            let p = load_tracks(pred)?;
            let report = evaluate(&g, &p, &MatchConfig { iou_threshold: *iou, dt: DEFAULT_DT })?;
            println!("{}", render_table(&[("PRED", &report)]));
            if let Some(path) = json {
                let text = serde_json::to_string_pretty(&report).map_err(|e| Error::Internal(e.to_string()))?;
                std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))?;
            }
        }
        Command::Plot { input, output, gt, lane } => {
            let p = load_tracks(input)?;
            let opts = PlotOptions { lane: *lane, format: PlotFormat::from_path(output), ..PlotOptions::default() };
            let coloring = match gt {
                Some(g) => {
                    let g = load_tracks(g)?;
                    let m = match_frames(&g, &p, &MatchConfig::default());
                    Some(Coloring::new(&m, &g, opts.dt))
                }
                None => None,
            };
            let s = emit_timespace_plot(output, &p, &opts, coloring.as_ref())?;
            eprintln!("{} tracks, {} points -> {}", s.polylines, s.points, output.display());
        }
        Command::Run { input, output } => {
            let mut config = pipeline_config(&cli)?;
            if let Some(i) = input {
                config.input = Some(i.clone());
            }
            if let Some(o) = output {
                config.output = Some(o.clone());
            }
            let path = config.input.clone().ok_or_else(|| Error::Config("run needs an input path".into()))?;
            require(&path)?;
            let out = run_pipeline(&config)?;
            let text = serde_json::to_string_pretty(&out.summary).map_err(|e| Error::Internal(e.to_string()))?;
            println!("{text}");
        }
    }
    Ok(())
}
