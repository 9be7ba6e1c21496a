use std::path::PathBuf;
use std::process::ExitCode;

use antiplane_cli::{run, CommandKind, RunConfig};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "antiplane",
    version,
    about = "Anti-plane crack experiments on the square lattice"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Radius of the ball-shaped domain
    #[arg(long, default_value_t = 32.0)]
    radius: f64,
    /// Loading parameter
    #[arg(long, default_value_t = 0.01)]
    eps: f64,
    /// Newton tolerance on the sup-norm of the gradient
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Output directory
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the equilibrium corrector and write field.csv
    Solve(Common),
    /// Solve and write the gradient decay envelope to decay.csv
    Decay(Common),
    /// Supercell convergence study, written to converge.csv
    Converge {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "16,32,64")]
        radii: Vec<f64>,
        #[arg(long, default_value_t = 256.0)]
        ref_radius: f64,
    },
    /// Green's function column for one source, written to green.csv
    Green {
        #[command(flatten)]
        common: Common,
        /// Source site as `l1,l2`
        #[arg(long, value_parser = parse_site, default_value = "13,9", allow_hyphen_values = true)]
        source: (i64, i64),
    },
    /// Run the invariant self-checks
    Check,
}

fn parse_site(text: &str) -> Result<(i64, i64), String> {
    let (a, b) = text
        .split_once(',')
        .ok_or_else(|| format!("expected `l1,l2`, got `{text}`"))?;
    let parse = |t: &str| t.trim().parse::<i64>().map_err(|e| format!("`{t}`: {e}"));
    Ok((parse(a)?, parse(b)?))
}

fn config_from(cli: Cli) -> RunConfig {
    let base = RunConfig::default();
    let with = |command, c: Common| RunConfig {
        command,
        radius: c.radius,
        eps: c.eps,
        tol: c.tol,
        out_path: c.out,
        ..base.clone()
    };
    match cli.command {
        Command::Solve(c) => with(CommandKind::Solve, c),
        Command::Decay(c) => with(CommandKind::Decay, c),
        Command::Converge {
            common,
            radii,
            ref_radius,
        } => RunConfig {
            radii,
            ref_radius,
            ..with(CommandKind::Converge, common)
        },
        Command::Green { common, source } => RunConfig {
            source,
            ..with(CommandKind::Green, common)
        },
        Command::Check => RunConfig {
            command: CommandKind::Check,
            ..base
        },
    }
}

fn main() -> ExitCode {
    let config = config_from(Cli::parse());
    match run(&config) {
        Ok(out) => {
            for line in &out.summary {
                println!("{line}");
            }
            for file in &out.files {
                println!("wrote {}", file.display());
            }
            if out.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
