//! `lscheme`: command-line driver for the microscopic, homogenized and
//! benchmark runs.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::CliError;
use crate::config::{RunConfig, OUTPUT_DIR_ENV};

#[derive(Debug, Parser)]
#[command(
    name = "lscheme",
    version,
    about = "L-scheme solvers for perforated-domain reaction-diffusion problems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Solve the cell problems and compute the homogenized tensor.
    Cell,
    /// Run the L-scheme on the perforated domain.
    Micro,
    /// Solve the perforated-domain problem with semismooth Newton.
    Newton,
    /// Run the L-scheme on the homogenized problem.
    Macro,
    /// Newton micro solutions against the k-th macroscopic iterate, per epsilon.
    Table1,
    /// Micro and macro iterates compared at one epsilon.
    Table2,
    /// Contraction diagnostics of the micro and macro iterations.
    Contraction,
    /// Fitted rate of the micro-macro error in epsilon.
    Convergence,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Cell => "cell",
            Command::Micro => "micro",
            Command::Newton => "newton",
            Command::Macro => "macro",
            Command::Table1 => "table1",
            Command::Table2 => "table2",
            Command::Contraction => "contraction",
            Command::Convergence => "convergence",
        }
    }
}

macro_rules! override_flags {
    ($($field:ident),* $(,)?) => {
        /// Per-key overrides of the configuration file.
        #[derive(Debug, Clone, Default, Args)]
        struct Overrides {
            /// Configuration file of `key = value` lines.
            #[arg(long, global = true, value_name = "FILE")]
            config: Option<PathBuf>,
            $(
                #[arg(long = stringify!($field), global = true, value_name = "VALUE")]
                $field: Option<String>,
            )*
        }

        impl Overrides {
            fn pairs(&self) -> Vec<(String, String)> {
                let mut out = Vec::new();
                $(
                    if let Some(v) = &self.$field {
                        out.push((stringify!($field).to_string(), v.clone()));
                    }
                )*
                out
            }
        }
    };
}

override_flags!(
    epsilon,
    epsilons,
    hole_radius,
    n_per_cell,
    cell_n,
    macro_n,
    alpha,
    eta,
    p,
    delta0,
    delta1,
    schedule,
    harmonic_c,
    source,
    coefficient,
    k_max,
    stop_tol,
    solver_tol,
    newton_tol,
    max_newton,
    k,
    ks,
    output_dir,
);

#[derive(Debug, Parser)]
struct Invocation {
    #[command(flatten)]
    cli: Cli,
    #[command(flatten)]
    overrides: Overrides,
}

fn run(inv: Invocation) -> Result<(), CliError> {
    let env = std::env::var(OUTPUT_DIR_ENV).ok();
    let cfg = RunConfig::load(inv.overrides.config.as_deref(), env, &inv.overrides.pairs())?;
    let command = inv.cli.command;
    let outputs = match command {
        Command::Cell => commands::cell(&cfg)?,
        Command::Micro => commands::micro(&cfg)?,
        Command::Newton => commands::newton(&cfg)?,
        Command::Macro => commands::macro_run(&cfg)?,
        Command::Table1 => commands::table1(&cfg)?,
        Command::Table2 => commands::table2(&cfg)?,
        Command::Contraction => commands::contraction(&cfg)?,
        Command::Convergence => commands::convergence(&cfg)?,
    };
    output::write_manifest(&cfg, command.name(), &outputs)?;
    Ok(())
}

fn main() -> ExitCode {
    let inv = Invocation::parse();
    match run(inv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Invocation::command().debug_assert();
    }

    #[test]
    fn flags_cover_every_key() {
        let inv = Invocation::try_parse_from(["lscheme", "micro", "--eta", "0.3", "--hole_radius", "0.2"]).unwrap();
        assert_eq!(
            inv.overrides.pairs(),
            vec![("hole_radius".into(), "0.2".into()), ("eta".into(), "0.3".into())]
        );
        let names: Vec<String> = Invocation::command()
            .get_arguments()
            .filter_map(|a| a.get_long().map(str::to_string))
            .collect();
        for (key, _) in config::KEYS {
            assert!(names.iter().any(|n| n == key), "{key}");
        }
    }
}
