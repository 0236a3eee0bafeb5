// SPDX-License-Identifier: MIT OR Apache-2.0

//! `tempsteer bench|sweep --config <file>`: run benchmarks and layer
//! sweeps and write their reports. `tempsteer toy --out <dir>` writes a
//! random-weight model and synthetic dataset to try the pipeline on.
//!
//! Failures exit non-zero with `{"error": {"kind": ..., "message": ...}}`
//! on stderr.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use tempsteer_core::datasets::save_srot;
use tempsteer_core::evalkit::YearRange;
use tempsteer_core::steering::PromptStyle;
use tempsteer_core::sweep::{emit_report, parse_layer_range, Experiment, ExperimentConfig, ExperimentMode};
use tempsteer_core::synth::{ToyWorld, ToyWorldSpec};
use tempsteer_core::{Error, Result};

#[derive(Parser)]
#[command(name = "tempsteer", version, about = "Temporal activation steering experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Relative or explicit prompting benchmark.
    Bench(RunArgs),
    /// Single-layer or cumulative multi-layer steering sweep.
    Sweep(RunArgs),
    /// Write a random-weight toy model and dataset.
    Toy(ToyArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Comma-separated years.
    #[arg(long, value_delimiter = ',')]
    years: Option<Vec<i32>>,
    /// Comma-separated styles: year_only, context_phrase, contrasting_pair.
    #[arg(long, value_delimiter = ',')]
    styles: Option<Vec<String>>,
    /// Layer bounds `lo-hi` for sweeps.
    #[arg(long)]
    layers: Option<String>,
    /// relative | explicit | single:LO-HI | multi:HI | multi:LO-HI
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ToyArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 8)]
    layers: usize,
    #[arg(long, default_value_t = 64)]
    d_model: usize,
    #[arg(long, default_value_t = 4)]
    heads: usize,
    #[arg(long, default_value_t = 20)]
    entities: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn build_config(args: RunArgs, bench: bool) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| Error::Io {
        path: args.config.clone(),
        source: e,
    })?;
    let mut config = ExperimentConfig::from_json(&text)?;
    if let Some(m) = args.model {
        config.model = m;
    }
    if let Some(d) = args.dataset {
        config.dataset = d;
    }
    if let Some(y) = args.years {
        config.years = y;
    }
    if let Some(s) = args.styles {
        config.styles = s.iter().map(|s| s.parse::<PromptStyle>()).collect::<Result<_>>()?;
    }
    if let Some(m) = args.mode {
        config.mode = m.parse()?;
    }
    if let Some(l) = args.layers {
        let (lo, hi) = parse_layer_range(&l)?;
        config.mode = config.mode.with_layers(lo, hi)?;
    }
    if let Some(o) = args.out {
        config.out = o;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if config.mode.is_benchmark() != bench {
        let (cmd, want) = if bench {
            ("bench", "relative or explicit")
        } else {
            ("sweep", "single or multi")
        };
        return Err(Error::Experiment(format!(
            "`{cmd}` needs a {want} mode, got {:?}",
            config.mode
        )));
    }
    Ok(config)
}

fn run(args: RunArgs, bench: bool) -> Result<()> {
    let config = build_config(args, bench)?;
    let experiment = Experiment::load(config)?;
    let rows = experiment.run()?;
    let files = emit_report(&rows, &experiment.config().out)?;
    println!(
        "{}",
        json!({
            "rows": rows.len(),
            "rows_csv": files.rows_csv,
            "scores_csv": files.scores_csv,
            "report": files.json,
        })
    );
    Ok(())
}

fn toy(args: ToyArgs) -> Result<()> {
    let spec = ToyWorldSpec {
        seed: args.seed,
        n_entities: args.entities,
        years: YearRange::new(1945, 1975)?,
        ..ToyWorldSpec::default()
    };
    let world = ToyWorld::generate(&spec);
    let bundle = world.random_bundle(args.layers, args.d_model, args.heads, args.seed)?;
    let model_dir = args.out.join("model");
    bundle.save(&model_dir)?;
    let dataset = args.out.join("dataset.json");
    save_srot(&dataset, &world.records)?;
    let hi = args.layers.saturating_sub(1).max(4);
    let config = ExperimentConfig {
        model: model_dir,
        dataset,
        schema: tempsteer_core::datasets::DatasetSchema::Hog,
        years: vec![1950, 1960, 1970],
        styles: PromptStyle::ALL.to_vec(),
        mode: ExperimentMode::SweepSingle { lo: 4.min(hi), hi },
        f1max_range: Some(spec.years),
        fewshot: None,
        out: args.out.join("report"),
        seed: args.seed,
        limit: None,
        max_new: 4,
        coefficients: Default::default(),
    };
    let config_path = args.out.join("experiment.json");
    let text = serde_json::to_string_pretty(&config).expect("config serializes");
    std::fs::write(&config_path, text).map_err(|e| Error::Io {
        path: config_path.clone(),
        source: e,
    })?;
    println!("{}", json!({ "config": config_path }));
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Bench(args) => run(args, true),
        Command::Sweep(args) => run(args, false),
        Command::Toy(args) => toy(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({ "error": { "kind": e.kind(), "message": e.to_string() } }));
            ExitCode::FAILURE
        }
    }
}
