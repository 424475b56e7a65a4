//! `mfgc` — finite-difference solver for mean field games of controls on the
//! 1-D torus. See README.md for config format and output layout.

// `!(x > 0.0)`-style guards are deliberate: they reject NaN along with the
// out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "mfgc",
    about = "Solver for second-order mean field games of controls on the 1-D torus",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one solve from a TOML config; writes u.csv, m.csv, alpha.csv and
    /// summary.json into the output directory (env MFGC_OUT overrides it).
    Solve { config: String },
    /// Run independent solves over a list of values for one numeric config
    /// key (e.g. --param model.eps --values 0.1,1,10); writes sweep.csv.
    Sweep {
        config: String,
        #[arg(long)]
        param: String,
        /// Comma-separated numeric values.
        #[arg(long)]
        values: String,
        /// Max concurrent runs.
        #[arg(long, default_value_t = 4)]
        threads: usize,
    },
    /// Sample the structural assumptions of the configured model and report
    /// worst margins and violations.
    Check {
        config: String,
        /// Also sweep the 2x2 sensitivity-matrix eigenvalue bound.
        #[arg(long)]
        h4_sweep: bool,
    },
    /// Recompute diagnostics from a previously written run directory.
    Diagnose { run_dir: String },
}

fn main() {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Solve { config } => commands::cmd_solve(&config),
        Command::Sweep {
            config,
            param,
            values,
            threads,
        } => commands::cmd_sweep(&config, &param, &values, threads),
        Command::Check { config, h4_sweep } => commands::cmd_check(&config, h4_sweep),
        Command::Diagnose { run_dir } => commands::cmd_diagnose(&run_dir),
    };
    std::process::exit(code);
}
