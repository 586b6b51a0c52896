//! `mpgo`: file-based front end for the marine-pgo toolkit.
//!
//! Exit codes: 0 success, 1 domain error, 2 usage error.

mod files;
mod graph_cmds;
mod policy_cmds;
mod uw_cmds;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "mpgo", version, about = "Underwater pose-graph optimization toolkit")]
struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 = one per core). Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Suppress progress messages on standard error.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a trajectory and its noisy pose graph.
    SynthGraph(graph_cmds::SynthArgs),
    /// Batch-solve a pose graph.
    Optimize(graph_cmds::OptimizeArgs),
    /// Guarded SE(2) refinement of a planar graph's values.
    Refine(graph_cmds::RefineArgs),
    /// Spatial solve, planar refinement, lift-back and final solve.
    Pipeline(graph_cmds::PipelineArgs),
    /// Compare an estimated trajectory with ground truth.
    Eval(graph_cmds::EvalArgs),
    /// Render an underwater image from clean radiance and range.
    UwSynth(uw_cmds::SynthArgs),
    /// Recover radiance and the correction mask from an underwater image.
    UwInvert(uw_cmds::InvertArgs),
    /// Train a linear refinement policy.
    TrainPolicy(policy_cmds::TrainArgs),
    /// Convert between file formats, chosen by extension.
    Convert(ConvertArgs),
}

#[derive(Args, Debug)]
struct ConvertArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

/// Shared run context.
pub struct Ctx {
    pub seed: u64,
    pub quiet: bool,
}

impl Ctx {
    pub fn progress(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Dim {
    #[value(name = "2")]
    Planar,
    #[value(name = "3")]
    Spatial,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global()?;
    }
    let ctx = Ctx { seed: cli.seed, quiet: cli.quiet };
    match cli.command {
        Command::SynthGraph(a) => graph_cmds::synth(&ctx, a),
        Command::Optimize(a) => graph_cmds::optimize(&ctx, a),
        Command::Refine(a) => graph_cmds::refine(&ctx, a),
        Command::Pipeline(a) => graph_cmds::pipeline(&ctx, a),
        Command::Eval(a) => graph_cmds::eval(&ctx, a),
        Command::UwSynth(a) => uw_cmds::synth(&ctx, a),
        Command::UwInvert(a) => uw_cmds::invert(&ctx, a),
        Command::TrainPolicy(a) => policy_cmds::train(&ctx, a),
        Command::Convert(a) => files::convert(&ctx, &a.input, &a.out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
