//! `locm`: pool generation, self-play collection, behaviour cloning, PPO, ablations, evaluation
//! and match replay.

mod commands;
mod config;
mod rundir;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use locm_core::agents::AgentError;
use locm_core::bc::BcError;
use locm_core::dataset::DatasetError;
use locm_core::env::EnvError;
use locm_core::eval::EvalError;
use locm_core::rl::RlError;

/// Failures with a dedicated exit code.
#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("config error: {0}")]
    Config(String),
    #[error("external agent failure: {0}")]
    External(String),
    #[error("verification failed: {0}")]
    Verification(String),
}

#[derive(Parser, Debug)]
#[command(name = "locm", version, about = "Card game engine, imitation and best-response training toolkit")]
struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// Only warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every experiment subcommand. Flags override the config file.
#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// TOML experiment config; defaults apply when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run directory name under the output root.
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker thread cap (0 = all cores).
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub output_root: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write procedurally generated card pools as JSON files.
    GenPools {
        #[arg(long)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
        /// TOML file with generator parameters.
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Record a teacher's battle decisions from self-play.
    Collect {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        teacher: Option<String>,
        #[arg(long)]
        matches: Option<u64>,
        #[arg(long)]
        pools: Option<usize>,
    },
    /// Behaviour cloning; `--name` selects the variant, e.g. MD-F-NP.
    BcTrain {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// PPO best response against the configured opponent.
    RlTrain {
        #[command(flatten)]
        common: Common,
        /// Pretrained policy checkpoint.
        #[arg(long, conflicts_with = "scratch")]
        init: Option<PathBuf>,
        /// Ignore any configured checkpoint and start from random weights.
        #[arg(long)]
        scratch: bool,
        #[arg(long)]
        opponent: Option<String>,
        #[arg(long)]
        pools: Option<usize>,
        #[arg(long)]
        iterations: Option<u64>,
    },
    /// Pretrained versus scratch PPO over pool counts and seeds.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Comma-separated pool counts.
        #[arg(long, value_delimiter = ',')]
        pools: Option<Vec<usize>>,
        /// Seeds per cell (0..N).
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<u64>,
    },
    /// Win rate of one agent against another.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        agent: Option<String>,
        #[arg(long)]
        opponent: Option<String>,
        #[arg(long)]
        matches: Option<u64>,
        #[arg(long)]
        pools: Option<usize>,
        /// Record every match into a replayable log.
        #[arg(long)]
        record: bool,
    },
    /// Re-execute recorded matches and verify outcomes and final-state digests.
    Replay {
        #[arg(long)]
        log: PathBuf,
        /// Only this match id.
        #[arg(long = "match")]
        match_id: Option<u64>,
    },
}

fn agent_code(e: &AgentError) -> u8 {
    match e {
        e if e.is_external() => 3,
        AgentError::Spec(_) => 2,
        _ => 1,
    }
}

fn eval_code(e: &EvalError) -> u8 {
    match e {
        EvalError::Agent(a) => agent_code(a),
        EvalError::InvalidArgument(_) => 2,
        EvalError::Engine(_) => 1,
    }
}

fn env_code(e: &EnvError) -> u8 {
    match e {
        EnvError::Agent(a) => agent_code(a),
        EnvError::OpponentFault { .. } => 3,
        _ => 1,
    }
}

/// Maps an error to the documented exit codes: 2 config, 3 external agent, 4 verification.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        let code = if let Some(f) = cause.downcast_ref::<Failure>() {
            match f {
                Failure::Config(_) => 2,
                Failure::External(_) => 3,
                Failure::Verification(_) => 4,
            }
        } else if let Some(e) = cause.downcast_ref::<BcError>() {
            match e {
                BcError::Config(_) => 2,
                BcError::Eval(e) => eval_code(e),
                BcError::Learn(_) => 1,
            }
        } else if let Some(e) = cause.downcast_ref::<RlError>() {
            match e {
                RlError::Config(_) => 2,
                RlError::Eval(e) => eval_code(e),
                RlError::Env(e) => env_code(e),
                RlError::Learn(_) => 1,
            }
        } else if let Some(e) = cause.downcast_ref::<EvalError>() {
            eval_code(e)
        } else if let Some(e) = cause.downcast_ref::<DatasetError>() {
            match e {
                DatasetError::Agent(a) => agent_code(a),
                DatasetError::InvalidArgument(_) => 2,
                _ => 1,
            }
        } else if let Some(e) = cause.downcast_ref::<AgentError>() {
            agent_code(e)
        } else {
            continue;
        };
        return code;
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    rundir::init_logging(cli.verbose, cli.quiet);
    let result = match cli.command {
        Command::GenPools { count, out, params } => commands::gen_pools(count, &out, params.as_deref()),
        Command::Collect { common, teacher, matches, pools } => commands::collect(&common, teacher, matches, pools),
        Command::BcTrain { common, dataset, epochs } => commands::bc_train(&common, dataset, epochs),
        Command::RlTrain { common, init, scratch, opponent, pools, iterations } => {
            commands::rl_train(&common, init, scratch, opponent, pools, iterations)
        }
        Command::Ablate { common, pools, seeds, checkpoint, iterations } => {
            commands::ablate(&common, pools, seeds, checkpoint, iterations)
        }
        Command::Evaluate { common, agent, opponent, matches, pools, record } => {
            commands::evaluate(&common, agent, opponent, matches, pools, record)
        }
        Command::Replay { log, match_id } => commands::replay(&log, match_id),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
