//! Experiment CLI. All substance lives in the library; this binary only
//! maps arguments onto `experiment` calls and prints the report.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use epo::experiment;

#[derive(Parser)]
#[command(name = "epo", about = "Run, compare, and tune evolutionary policy optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its output tree.
    Run(RunArgs),
    /// Compare finished run directories (first is the reference method).
    Compare {
        /// Run directories: experiment roots or single seed-* directories.
        #[arg(required = true, num_args = 2..)]
        dirs: Vec<PathBuf>,
    },
    /// Random-search the population hyperparameters (shorthand for
    /// `run --mode hypersearch`).
    Hypersearch(RunArgs),
    /// Evaluate a saved checkpoint and print reward statistics.
    EvalCheckpoint {
        /// Path to a `.checkpoint` file.
        checkpoint: PathBuf,
        /// Evaluation episodes.
        #[arg(long, default_value_t = 20)]
        episodes: usize,
        /// Evaluation seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Sample actions from the policy instead of taking the argmax.
        #[arg(long)]
        stochastic: bool,
        /// Evaluate on this environment instead of the checkpoint's own.
        #[arg(long)]
        env: Option<String>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Config file of `key=value` lines (`#` comments).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Experiment mode: ppo|epo|epo-nopt|pure-evo|epo-tl|sweep-pretrain|
    /// sweep-finetune|hypersearch.
    #[arg(long)]
    mode: Option<String>,
    /// Environment id: cartpole|catch-dense|catch-sparse|scripted.
    #[arg(long)]
    env: Option<String>,
    /// Comma-separated run seeds, e.g. `1,2,3`.
    #[arg(long)]
    seeds: Option<String>,
    /// Training budget in environment steps.
    #[arg(long)]
    budget_steps: Option<u64>,
    /// Training budget in wall-clock seconds.
    #[arg(long)]
    budget_seconds: Option<f64>,
    /// Output directory for the run tree.
    #[arg(long, default_value = "runs/latest")]
    out: PathBuf,
    /// Extra `key=value` overrides; applied after the other flags.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl RunArgs {
    /// Flattens flags into override pairs (applied after the config file).
    fn overrides(&self, forced_mode: Option<&str>) -> Result<Vec<(String, String)>, epo::Error> {
        let mut pairs = Vec::new();
        let mode = forced_mode.map(str::to_string).or_else(|| self.mode.clone());
        if let Some(mode) = mode {
            pairs.push(("mode".to_string(), mode));
        }
        if let Some(env) = &self.env {
            pairs.push(("env".to_string(), env.clone()));
        }
        if let Some(seeds) = &self.seeds {
            pairs.push(("seeds".to_string(), seeds.clone()));
        }
        if let Some(steps) = self.budget_steps {
            pairs.push(("budget.max_steps".to_string(), steps.to_string()));
        }
        if let Some(seconds) = self.budget_seconds {
            pairs.push(("budget.max_seconds".to_string(), seconds.to_string()));
        }
        for entry in &self.set {
            let Some((key, value)) = entry.split_once('=') else {
                return Err(epo::Error::config(format!("--set expects key=value, got '{entry}'")));
            };
            pairs.push((key.trim().to_string(), value.trim().to_string()));
        }
        Ok(pairs)
    }

    fn execute(&self, forced_mode: Option<&str>) -> Result<String, epo::Error> {
        let file = match &self.config {
            Some(path) => Some(std::fs::read_to_string(path)?),
            None => None,
        };
        let config = experiment::resolve(file.as_deref(), &self.overrides(forced_mode)?)?;
        experiment::run_experiment(&config, &self.out)
    }
}

fn run(cli: Cli) -> Result<String, epo::Error> {
    match cli.command {
        Command::Run(args) => args.execute(None),
        Command::Hypersearch(args) => args.execute(Some("hypersearch")),
        Command::Compare { dirs } => experiment::compare(&dirs),
        Command::EvalCheckpoint { checkpoint, episodes, seed, stochastic, env } => {
            experiment::eval_checkpoint(&checkpoint, episodes, seed, stochastic, env.as_deref())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(report) => {
            println!("{report}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}
