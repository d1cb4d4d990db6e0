use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use sht_core::TrackerConfig;

use sht_cli::run::{run_bench, run_track};
use sht_cli::synth::{synth_sequence, Scenario, SynthSpec};

/// Saliency-guided hierarchical tracker and benchmark harness.
#[derive(Parser)]
#[command(name = "sht", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Track one sequence and write results.csv / metrics.json.
    Track(TrackArgs),
    /// Track many sequences and aggregate their metrics.
    Bench(BenchArgs),
    /// Render a synthetic sequence with exact groundtruth.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Ablation {
    /// No saliency-guided search: pure local search every frame.
    Nsgs,
    /// No superpixel matching: appearance likelihood only.
    Nsm,
    /// No linear refinement search: plain MAP estimate.
    Nlrs,
}

#[derive(Args)]
struct TrackArgs {
    /// Sequence directory (img/ + groundtruth_rect.txt).
    #[arg(long)]
    seq: PathBuf,
    /// JSON tracker configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// RNG seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Disable a component (repeatable).
    #[arg(long, value_enum)]
    ablate: Vec<Ablation>,
    /// Also write annotated PNG frames.
    #[arg(long)]
    annotate: bool,
}

#[derive(Args)]
struct BenchArgs {
    /// Text file listing one sequence directory per line.
    #[arg(long)]
    seq_list: PathBuf,
    /// JSON tracker configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// RNG seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Disable a component (repeatable).
    #[arg(long, value_enum)]
    ablate: Vec<Ablation>,
}

#[derive(Args)]
struct SynthArgs {
    /// smooth-motion | abrupt-jump | occlusion | color-constant-deformation
    #[arg(long)]
    scenario: String,
    /// Output sequence directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    frames: usize,
    #[arg(long, default_value_t = 640)]
    width: usize,
    #[arg(long, default_value_t = 360)]
    height: usize,
}

fn load_config(path: Option<&PathBuf>, seed: Option<u64>, ablations: &[Ablation]) -> anyhow::Result<TrackerConfig> {
    let mut cfg = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            TrackerConfig::from_json(&text)?
        }
        None => TrackerConfig::default().validate()?,
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    for a in ablations {
        match a {
            Ablation::Nsgs => cfg.disable_global = true,
            Ablation::Nsm => cfg.disable_superpixel = true,
            Ablation::Nlrs => cfg.disable_refinement = true,
        }
    }
    Ok(cfg)
}

fn configure_threads() {
    if let Ok(v) = std::env::var("SHT_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn main() {
    configure_threads();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Track(args) => track(args),
        Command::Bench(args) => bench(args),
        Command::Synth(args) => synth(args),
    };
    if let Err(err) = outcome {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn track(args: TrackArgs) -> anyhow::Result<()> {
    let config = load_config(args.config.as_ref(), args.seed, &args.ablate)?;
    let report = run_track(&args.seq, &args.out, &config, args.annotate)?;
    println!(
        "{}: {} frames, mean overlap {:.4}, mean center error {:.2} px, {:.3} s/frame",
        report.sequence,
        report.frames,
        report.average_overlap,
        report.average_center_error,
        report.mean_step_seconds
    );
    Ok(())
}

fn bench(args: BenchArgs) -> anyhow::Result<()> {
    let config = load_config(args.config.as_ref(), args.seed, &args.ablate)?;
    let text = std::fs::read_to_string(&args.seq_list)
        .with_context(|| format!("reading {}", args.seq_list.display()))?;
    let dirs: Vec<PathBuf> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(PathBuf::from)
        .collect();
    let aggregate = run_bench(&dirs, &args.out, &config)?;
    for (name, r) in &aggregate.sequences {
        println!(
            "{name}: mean overlap {:.4}, mean center error {:.2} px",
            r.average_overlap, r.average_center_error
        );
    }
    println!(
        "aggregate over {} sequences: mean overlap {:.4}, mean center error {:.2} px",
        aggregate.sequences.len(),
        aggregate.average_overlap,
        aggregate.average_center_error
    );
    Ok(())
}

fn synth(args: SynthArgs) -> anyhow::Result<()> {
    let scenario: Scenario = args
        .scenario
        .parse()
        .map_err(|e: String| anyhow::anyhow!(e))?;
    let mut spec = SynthSpec::new(scenario, args.seed);
    spec.frames = args.frames;
    spec.width = args.width;
    spec.height = args.height;
    let seq = synth_sequence(&spec, &args.out)?;
    println!(
        "wrote {} frames ({}x{}, scenario {}) to {}",
        seq.frames.len(),
        spec.width,
        spec.height,
        scenario.name(),
        args.out.display()
    );
    Ok(())
}
