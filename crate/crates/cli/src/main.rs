use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use qaction::suite::{run_command, Command, RunConfig, Sigma2Values};
use qaction::{Branch, FourVector};

#[derive(Parser, Debug)]
#[command(
    name = "qaction",
    version,
    about = "Action-eigenvalue checks for a free relativistic particle"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// RK4 coefficient flow against its closed form; writes flow.csv
    Flow(Opts),
    /// Three-way eigenvalue agreement and world-line independence; writes lambda_breakdown.json
    Lambda(Opts),
    /// Numeric stationary point and sigma2_0 scan; writes the lambda-vs-C sweep
    Stationary(Opts),
    /// Log-parametrized phase against the quadratic phase
    Phase(Opts),
    /// Every check
    Verify(Opts),
}

#[derive(Args, Debug, Clone)]
struct Opts {
    /// TOML run configuration
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides output_dir)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Lattice size
    #[arg(long = "N", value_name = "N")]
    n: Option<usize>,
    /// Comma-separated sigma2_0 values
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, num_args = 1)]
    sigma2: Option<Vec<f64>>,
    /// Branch of the stationary duration, + or -
    #[arg(long, allow_hyphen_values = true)]
    branch: Option<Branch>,
    /// Endpoint a as four comma-separated components
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, num_args = 1)]
    a: Option<Vec<f64>>,
    /// Endpoint b as four comma-separated components
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, num_args = 1)]
    b: Option<Vec<f64>>,
    /// List the checks without running them
    #[arg(long)]
    list: bool,
}

impl Cmd {
    fn split(&self) -> (Command, &Opts) {
        match self {
            Cmd::Flow(o) => (Command::Flow, o),
            Cmd::Lambda(o) => (Command::Lambda, o),
            Cmd::Stationary(o) => (Command::Stationary, o),
            Cmd::Phase(o) => (Command::Phase, o),
            Cmd::Verify(o) => (Command::Verify, o),
        }
    }
}

fn four_vector(name: &str, v: &[f64]) -> Result<FourVector, String> {
    <[f64; 4]>::try_from(v)
        .map(FourVector)
        .map_err(|_| format!("--{name} needs 4 components, got {}", v.len()))
}

fn load_config(opts: &Opts) -> Result<RunConfig, String> {
    let mut config = match &opts.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            toml::from_str(&text).map_err(|e| format!("invalid config {}: {e}", path.display()))?
        }
        None => RunConfig::default(),
    };
    if let Some(out) = &opts.out {
        config.output_dir = out.clone();
    }
    if let Some(seed) = opts.seed {
        config.seed = seed;
    }
    if let Some(n) = opts.n {
        config.n = n;
    }
    if let Some(s) = &opts.sigma2 {
        config.sigma2_0 = Sigma2Values::Many(s.clone());
    }
    if let Some(b) = opts.branch {
        config.branch = b;
    }
    if let Some(a) = &opts.a {
        config.a = four_vector("a", a)?;
    }
    if let Some(b) = &opts.b {
        config.b = four_vector("b", b)?;
    }
    config.validate().map_err(|e| e.to_string())?;
    Ok(config)
}

fn write_outputs(dir: &Path, files: &[qaction::suite::Artifact]) -> Result<(), String> {
    fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    for f in files {
        let path = dir.join(f.file_name);
        fs::write(&path, &f.contents)
            .map_err(|e| format!("cannot write {}: {e}", path.display()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, opts) = cli.command.split();

    if opts.list {
        let mut out = io::stdout().lock();
        for id in command.checks() {
            // a closed pipe only means nobody reads the listing
            if writeln!(out, "{:<30} {}", id.name(), id.description()).is_err() {
                break;
            }
        }
        return ExitCode::SUCCESS;
    }

    let config = match load_config(opts) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };

    let start = Instant::now();
    let (report, files) = match run_command(command, &config) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let elapsed = start.elapsed();

    let mut out = io::stdout().lock();
    for check in &report.checks {
        let _ = writeln!(out, "{check}");
    }
    let _ = writeln!(
        out,
        "overall: {}",
        if report.passed() { "PASS" } else { "FAIL" }
    );
    drop(out);
    eprintln!(
        "{} finished in {:.3} s",
        command.name(),
        elapsed.as_secs_f64()
    );

    if let Err(e) = write_outputs(&config.output_dir, &files) {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
