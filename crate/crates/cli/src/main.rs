use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use shadowing::config;
use shadowing::experiment::{self, Overrides};
use shadowing::systems::catalog;
use shadowing::validation::{self, Fault};

const EXIT_VALIDATION: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;

#[derive(Parser)]
#[command(name = "shadowing", version, about = "Shadowing contribution to linear response of chaotic maps and flows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the validation suite on the built-in benchmarks.
    Validate {
        /// Checks to run, by number or name (comma separated or repeated).
        #[arg(long, value_delimiter = ',')]
        only: Vec<String>,
        /// Write the PASS/FAIL table to this file as well.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, hide = true, value_enum)]
        inject_fault: Option<FaultArg>,
    },
    /// List the benchmark systems.
    ListSystems,
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    FlipPullback,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out, seed } => run(config, out, seed),
        Command::Validate { only, out, inject_fault } => validate(only, out, inject_fault),
        Command::ListSystems => {
            print!("{}", list_systems());
            ExitCode::SUCCESS
        }
    }
}

fn run(path: PathBuf, out: Option<PathBuf>, seed: Option<u64>) -> ExitCode {
    let resolved = config::load(&path).and_then(|(cfg, text)| {
        let r = experiment::resolve(&cfg, &text, &path.display().to_string(), &Overrides { seed })?;
        Ok((cfg, r))
    });
    let (cfg, resolved) = match resolved {
        Ok(r) => r,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let dir = out.or_else(|| cfg.output.map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("shadowing-out"));
    match experiment::run(&resolved, &dir) {
        Ok(output) => {
            let r = &output.report;
            println!("system {} gamma {} seed {}", r.system, r.gamma, r.seed);
            if let Some(e) = r.sc_tangent {
                println!("SC tangent  {} +- {}", e.value, e.stderr);
            }
            if let Some(e) = r.sc_adjoint {
                println!("SC adjoint  {} +- {}", e.value, e.stderr);
            }
            if let Some(fd) = &r.fd {
                println!("FD          {} +- {}", fd.value, fd.stderr);
            }
            if let Some(uc) = r.uc_residual {
                println!("UC residual {} +- {}", uc.value, uc.stderr);
            }
            if r.flags.uc_small == Some(false) {
                println!("note: |UC| / |FD| exceeds {} (informational)", r.tolerances.uc_relative);
            }
            println!("wrote {} files to {}", output.files.len(), dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("solver error: {e} (see {})", dir.join("diagnostics.json").display());
            ExitCode::from(EXIT_SOLVER)
        }
    }
}

fn validate(only: Vec<String>, out: Option<PathBuf>, fault: Option<FaultArg>) -> ExitCode {
    let unknown = validation::unknown_filters(&only);
    if !unknown.is_empty() {
        let known: Vec<String> = validation::names()
            .into_iter()
            .map(|(n, name)| n.map_or(name.to_string(), |n| format!("{n}|{name}")))
            .collect();
        eprintln!("unknown check(s) {}; known: {}", unknown.join(", "), known.join(", "));
        return ExitCode::from(EXIT_CONFIG);
    }
    let fault = fault.map(|FaultArg::FlipPullback| Fault::FlippedPullback);
    let outcomes = validation::run(&only, fault, |o| println!("{}", o.line()));
    let failed: Vec<&str> = outcomes.iter().filter(|o| !o.passed).map(|o| o.name).collect();
    let summary = if failed.is_empty() {
        format!("{} checks passed", outcomes.len())
    } else {
        format!("{} of {} checks failed: {}", failed.len(), outcomes.len(), failed.join(", "))
    };
    println!("{summary}");
    if let Some(path) = out {
        let mut table: String = outcomes.iter().map(|o| o.line() + "\n").collect();
        table.push_str(&summary);
        table.push('\n');
        if let Err(e) = std::fs::write(&path, table) {
            eprintln!("cannot write {}: {e}", path.display());
        }
    }
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_VALIDATION)
    }
}

fn list_systems() -> String {
    let mut s = format!("{:<12} {:<5} {:>2} {:>2} {:>6} {:<10} {}\n", "name", "kind", "M", "u", "dt", "observable", "parameters");
    for spec in catalog() {
        let dt = if spec.is_flow() { spec.time_step().to_string() } else { "-".into() };
        s.push_str(&format!(
            "{:<12} {:<5} {:>2} {:>2} {:>6} {:<10} {}\n",
            spec.name(),
            spec.kind().as_str(),
            spec.dim(),
            spec.unstable_dim(),
            dt,
            spec.observable().to_string(),
            spec.model().parameters()
        ));
    }
    s
}
