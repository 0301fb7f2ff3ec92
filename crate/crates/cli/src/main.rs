use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use didauth_cli::init::InitPaths;
use didauth_cli::login::LoginOptions;
use didauth_cli::{bench, init, login, pki, CliError, ScenarioConfig, Seed, Settings, Transcript};
use didauth_core::oidc::Flow;
use didauth_core::pki::CapacityModel;
use tracing_subscriber::EnvFilter;

#[derive(Debug, Parser)]
#[command(name = "didauth", version, about = "Self-sovereign login and ledger PKI demo")]
struct Cli {
    /// TOML scenario config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Hex master seed for every derived key.
    #[arg(long, global = true, value_parser = Seed::from_hex)]
    seed: Option<Seed>,
    /// Freeze the clock at this Unix time.
    #[arg(long = "fixed-clock", global = true, value_name = "EPOCH")]
    fixed_clock: Option<i64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a genesis file and a ledger file.
    Init {
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        trustees: Option<u64>,
        #[arg(long)]
        genesis: Option<PathBuf>,
        #[arg(long)]
        ledger: Option<PathBuf>,
        /// Overwrite existing files.
        #[arg(long)]
        force: bool,
    },
    /// Run a narrated scenario.
    Scenario {
        #[command(subcommand)]
        which: Scenario,
    },
    /// Certificate capacity table.
    Capacity {
        #[arg(value_parser = positive)]
        certs: f64,
        #[arg(value_parser = positive)]
        days: f64,
        #[arg(value_parser = positive)]
        tps: f64,
    },
    /// Append n NYM transactions and verify the chain.
    Bench {
        #[arg(value_parser = clap::value_parser!(u64).range(1..))]
        n: u64,
        #[arg(long)]
        ledger: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
enum Scenario {
    /// Passport issuance, then an OpenID Connect login at the wine shop.
    Login {
        #[arg(long, default_value = "implicit", value_parser = parse_flow)]
        flow: Flow,
        /// Deny consent at the holder.
        #[arg(long)]
        deny: bool,
        /// Keep the services running after issuance for a browser wallet.
        #[arg(long)]
        hold: bool,
    },
    /// Certificate issuance, revocation and re-issuance.
    Pki,
}

fn positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err("must be a positive number".into())
    }
}

fn parse_flow(s: &str) -> Result<Flow, String> {
    s.parse()
}

async fn dispatch(cli: Cli) -> Result<(), CliError> {
    let mut config = match &cli.config {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::default(),
    };
    match &cli.command {
        Command::Init { trustees, genesis, ledger, .. } => {
            if let Some(n) = trustees {
                config.trustees = Some(*n as usize);
            }
            if genesis.is_some() {
                config.genesis_path = genesis.clone();
            }
            if ledger.is_some() {
                config.ledger_path = ledger.clone();
            }
        }
        Command::Bench { ledger: Some(l), .. } => config.ledger_path = Some(l.clone()),
        _ => {}
    }
    let settings = Settings::new(config, cli.seed.clone(), cli.fixed_clock)?;
    let mut t = Transcript::echoing();
    match cli.command {
        Command::Init { force, .. } => {
            let paths = InitPaths::from_settings(&settings);
            init::run(&settings, &paths, force, &mut t)?;
        }
        Command::Scenario { which: Scenario::Login { flow, deny, hold } } => {
            login::run(settings, LoginOptions { flow, deny, hold }, &mut t).await?;
        }
        Command::Scenario { which: Scenario::Pki } => {
            pki::run(&settings, &mut t)?;
        }
        Command::Capacity { certs, days, tps } => {
            let report = CapacityModel::new(certs, days, tps)
                .and_then(|m| m.report())
                .map_err(|e| CliError::Usage(e.to_string()))?;
            print!("{}", report.to_table());
        }
        Command::Bench { n, .. } => {
            bench::run(&settings, n, &mut t)?;
        }
    }
    Ok(())
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match dispatch(cli).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
