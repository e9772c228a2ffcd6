use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use enclab_cli::commands::{run_command, Command};
use enclab_cli::config::{parse_config_with, render_config};

#[derive(Parser)]
#[command(name = "enclab", version, about = "Locate an unknown inclusion from thermal probe data")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// Run configuration (flat `key = value` file).
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; overrides `output.dir`.
    #[arg(short, long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true)]
    tau_min: Option<f64>,
    #[arg(long, global = true)]
    tau_max: Option<f64>,
    #[arg(long, global = true)]
    tau_count: Option<usize>,

    /// How the indicator data is produced.
    #[arg(long, global = true)]
    path: Option<PathArg>,

    /// Suppress the effective-config echo.
    #[arg(short, long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Seeded closed-form checks against quadrature.
    Oracles,
    /// Boundary heat flux of the shell source.
    Flux,
    /// Forward solution with and without the inclusion.
    Forward,
    /// Indicator sweep over the spectral parameter.
    Indicator,
    /// Fit the indicator decay and estimate the enclosing radius.
    Extract,
    /// Thermoelastic rate check and touching-ball integrals.
    Thermo,
    /// Every stage in order.
    All,
}

#[derive(ValueEnum, Clone, Copy)]
enum PathArg {
    Elliptic,
    Timedomain,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Oracles => Command::Oracles,
            Cmd::Flux => Command::Flux,
            Cmd::Forward => Command::Forward,
            Cmd::Indicator => Command::Indicator,
            Cmd::Extract => Command::Extract,
            Cmd::Thermo => Command::Thermo,
            Cmd::All => Command::All,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let text = match &cli.config {
        Some(p) => match std::fs::read_to_string(p) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("cannot read {}: {e}", p.display());
                return ExitCode::from(2);
            }
        },
        None => String::new(),
    };

    let mut overrides: Vec<(&str, String)> = Vec::new();
    if let Some(o) = &cli.out {
        overrides.push(("output.dir", o.display().to_string()));
    }
    if let Some(v) = cli.tau_min {
        overrides.push(("tau.min", v.to_string()));
    }
    if let Some(v) = cli.tau_max {
        overrides.push(("tau.max", v.to_string()));
    }
    if let Some(v) = cli.tau_count {
        overrides.push(("tau.count", v.to_string()));
    }
    if let Some(p) = cli.path {
        let v = match p {
            PathArg::Elliptic => "elliptic",
            PathArg::Timedomain => "timedomain",
        };
        overrides.push(("path", v.into()));
    }

    let cfg = match parse_config_with(&text, &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(2);
        }
    };
    if !cli.quiet {
        println!("# effective configuration");
        print!("{}", render_config(&cfg));
    }

    let command = Command::from(cli.command);
    match run_command(command, &cfg) {
        Ok(outcome) => {
            if let Some(s) = outcome.summary {
                print!("{s}");
            }
            for (name, digest) in &outcome.files {
                println!("wrote {} ({digest})", cfg.out_dir.join(name).display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{command} failed: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
