use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dynbc::commands::{
    cmd_blowup_study, cmd_convergence, cmd_run, cmd_spectrum, write_invalid_manifest, Options, Sweep,
    EXIT_USAGE,
};
use dynbc::config::parse_scenario;

/// Elliptic problems with dynamic boundary conditions on a strip or interval.
#[derive(Parser)]
#[command(name = "dynbc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a scenario and write trajectory.csv.
    Run(Common),
    /// Lowest eigenvalues of the boundary eigenproblem.
    Spectrum(Common),
    /// Blow-up times over a sweep, compared with the scalar ODE.
    BlowupStudy {
        #[command(flatten)]
        common: Common,
        /// `u0=v1,v2,...` or `exponent=q1,q2,...`
        #[arg(long)]
        sweep: Sweep,
    },
    /// Integrate and fit the approach to equilibrium.
    Convergence(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum Expect {
    Blowup,
}

#[derive(Args)]
struct Common {
    /// Scenario file.
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Treat blow-up as the expected outcome (exit 0).
    #[arg(long, value_enum)]
    expect: Option<Expect>,
    /// Refuse to run scenarios that raise warnings.
    #[arg(long)]
    strict: bool,
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("DYNBC_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("DYNBC_THREADS must be a positive integer, got `{raw}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { 0 });
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("dynbc: {e}");
        return ExitCode::from(EXIT_USAGE as u8);
    }

    let (name, common, sweep) = match &cli.command {
        Command::Run(c) => ("run", c, None),
        Command::Spectrum(c) => ("spectrum", c, None),
        Command::BlowupStudy { common, sweep } => ("blowup-study", common, Some(sweep)),
        Command::Convergence(c) => ("convergence", c, None),
    };
    let opts = Options {
        out: common.out.clone(),
        expect_blowup: common.expect.is_some(),
        strict: common.strict,
        config_path: Some(common.config.clone()),
    };
    let config = match parse_scenario(&common.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("dynbc: {e}");
            if let Err(m) = write_invalid_manifest(name, &opts, &e.to_string()) {
                eprintln!("dynbc: {m}");
            }
            return ExitCode::from(EXIT_USAGE as u8);
        }
    };
    let result = match &cli.command {
        Command::Run(_) => cmd_run(&config, &opts),
        Command::Spectrum(_) => cmd_spectrum(&config, &opts),
        Command::BlowupStudy { .. } => cmd_blowup_study(&config, sweep.expect("sweep given"), &opts),
        Command::Convergence(_) => cmd_convergence(&config, &opts),
    };
    match result {
        Ok(outcome) => {
            eprintln!("dynbc {name}: {}", outcome.status);
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            eprintln!("dynbc: {e}");
            ExitCode::from(EXIT_USAGE as u8)
        }
    }
}
