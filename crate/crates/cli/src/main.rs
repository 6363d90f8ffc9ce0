use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use kledge_cli::{
    cmd_check_prob, cmd_check_run, cmd_eval, cmd_game, cmd_generate, cmd_suite, cmd_validate,
    CmdError, CmdOutput, Format,
};

/// Simulate ledger protocols under adversarial environments and check what
/// the participants come to know.
///
/// Exit codes: 0 when the command's assertion holds, 1 when it does not,
/// 2 on usage or configuration errors. Set KLEDGE_WORKERS to parallelize
/// run generation; outputs do not depend on it.
#[derive(Parser)]
#[command(name = "kledge", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Output style for reports.
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Text)]
    format: FormatArg,
    /// Shift every generation seed by this amount.
    #[arg(long, global = true, default_value_t = 0)]
    seed_offset: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Text,
    Structured,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Format {
        match f {
            FormatArg::Text => Format::Text,
            FormatArg::Structured => Format::Structured,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the system for a scenario and write its trace file.
    Generate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a ledger property over the runs of a trace file.
    CheckRun {
        #[arg(long)]
        trace: PathBuf,
        /// t-consistency, weak-growth, acceptability, liveness, or
        /// chain-growth.
        #[arg(long)]
        property: String,
        /// Restrict to one run id.
        #[arg(long)]
        run: Option<String>,
        #[arg(long)]
        t: Option<usize>,
        #[arg(long)]
        delta: Option<usize>,
        /// Growth bound for chain-growth, as an exact rational (e.g. 1/2).
        #[arg(long)]
        g_max: Option<String>,
    },
    /// Evaluate a formula at one point of the generated system.
    Eval {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        formula: String,
        #[arg(long)]
        run: String,
        #[arg(long)]
        time: usize,
        /// Perspective agent for agent-relative formulas.
        #[arg(long)]
        agent: Option<String>,
    },
    /// Check a formula's validity over the whole generated system.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        formula: String,
    },
    /// Per-cell acceptable mass against a tolerance, in exact rationals.
    CheckProb {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        t: usize,
        #[arg(long)]
        delta: usize,
        #[arg(long)]
        eps: String,
    },
    /// Equilibrium analysis of the sign-on-event profile.
    Game {
        #[arg(long)]
        scenario: PathBuf,
        /// Game spec file.
        #[arg(long)]
        game: PathBuf,
        /// Compare expected utilities per cell instead of per-run outcomes.
        #[arg(long)]
        expectation: bool,
    },
    /// Run a mechanized suite: prop1, thm4, thm5, or game.
    Suite {
        name: String,
        #[arg(long)]
        scenario: PathBuf,
        /// Override the scenario's prefix depth.
        #[arg(long)]
        t: Option<usize>,
        /// Override the scenario's growth bound.
        #[arg(long)]
        delta: Option<usize>,
        /// Tolerance for thm5, as an exact rational.
        #[arg(long)]
        eps: Option<String>,
        /// Game spec file for the game suite.
        #[arg(long)]
        game: Option<PathBuf>,
        /// Minimum number of runs for prop1.
        #[arg(long, default_value_t = 1000)]
        min_runs: usize,
    },
}

fn run(cli: Cli) -> Result<CmdOutput, CmdError> {
    let format: Format = cli.format.into();
    let offset = cli.seed_offset;
    match cli.cmd {
        Cmd::Generate { scenario, out } => cmd_generate(&scenario, offset, &out),
        Cmd::CheckRun { trace, property, run, t, delta, g_max } => {
            cmd_check_run(&trace, &property, run.as_deref(), t, delta, g_max.as_deref(), format)
        }
        Cmd::Eval { scenario, formula, run, time, agent } => {
            cmd_eval(&scenario, offset, &formula, &run, time, agent.as_deref(), format)
        }
        Cmd::Validate { scenario, formula } => cmd_validate(&scenario, offset, &formula, format),
        Cmd::CheckProb { scenario, t, delta, eps } => {
            cmd_check_prob(&scenario, offset, t, delta, &eps, format)
        }
        Cmd::Game { scenario, game, expectation } => {
            cmd_game(&scenario, offset, &game, expectation, format)
        }
        Cmd::Suite { name, scenario, t, delta, eps, game, min_runs } => cmd_suite(
            &scenario,
            offset,
            &name,
            t,
            delta,
            eps.as_deref(),
            game.as_deref(),
            min_runs,
            format,
        ),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(out) => {
            print!("{}", out.text);
            if out.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}
