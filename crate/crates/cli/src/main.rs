use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gistrank_core::pipeline::{self, FixtureSpec, PipelineConfig, Stage};
use gistrank_core::{Mode, Result};

#[derive(Parser)]
#[command(
    name = "gistrank",
    version,
    about = "Two-stage concept and image ranking pipeline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Link tags and image labels to graph concepts and split the corpus.
    Link(StageArgs),
    /// Build query graphs from seeds.
    Graph(StageArgs),
    /// Cluster each query graph.
    Cluster(StageArgs),
    /// Extract concept features.
    Features(StageArgs),
    /// Train the concept ranking model.
    Train1(StageArgs),
    /// Rank concepts of every instance.
    Rank1(StageArgs),
    /// Build the concept lexicon and instance vectors.
    Lexicon(StageArgs),
    /// Train one instance ranking model per topic.
    Train2(StageArgs),
    /// Rank held-out instances per topic.
    Rank2(StageArgs),
    /// Compute MAP and P@k.
    Evaluate(StageArgs),
    /// Run every stage for every configured mode and compare the modes.
    All(StageArgs),
    /// Write a synthetic graph, corpus and config.
    GenFixture(FixtureArgs),
}

#[derive(Args)]
struct StageArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<Mode>,
    /// Seed for both training stages and the split.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON-lines `{id, image_labels}` file overriding corpus labels.
    #[arg(long)]
    image_labels: Option<PathBuf>,
}

#[derive(Args)]
struct FixtureArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 30)]
    instances: usize,
    #[arg(long, default_value_t = 3)]
    topics: usize,
    #[arg(long)]
    out: PathBuf,
}

fn parse_mode(s: &str) -> std::result::Result<Mode, String> {
    s.parse().map_err(|e: gistrank_core::Error| e.to_string())
}

fn run_stage(stage: Stage, args: StageArgs) -> Result<()> {
    let mut config = PipelineConfig::from_file(&args.config)?;
    if let Some(mode) = args.mode {
        config = config.with_mode(mode);
    }
    if let Some(seed) = args.seed {
        config = config.with_seed(seed);
    }
    if let Some(out) = args.out {
        config = config.with_out_dir(out);
    }
    if let Some(path) = args.image_labels {
        config = config.with_image_labels(path);
    }
    if let Some(comparison) = pipeline::run_stage(&config, stage)? {
        print!("{}", comparison.to_table());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let (stage, args) = match cli.command {
        Command::GenFixture(f) => {
            let spec = FixtureSpec {
                seed: f.seed,
                instances: f.instances,
                topics: f.topics,
            };
            pipeline::gen_fixture(&spec, &f.out)?;
            println!("fixture written to {}", f.out.display());
            return Ok(());
        }
        Command::Link(a) => (Stage::Link, a),
        Command::Graph(a) => (Stage::Graph, a),
        Command::Cluster(a) => (Stage::Cluster, a),
        Command::Features(a) => (Stage::Features, a),
        Command::Train1(a) => (Stage::Train1, a),
        Command::Rank1(a) => (Stage::Rank1, a),
        Command::Lexicon(a) => (Stage::Lexicon, a),
        Command::Train2(a) => (Stage::Train2, a),
        Command::Rank2(a) => (Stage::Rank2, a),
        Command::Evaluate(a) => (Stage::Evaluate, a),
        Command::All(a) => (Stage::All, a),
    };
    run_stage(stage, args)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
