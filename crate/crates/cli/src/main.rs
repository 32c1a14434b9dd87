use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use sentinel_core::camsim::{self, CaptureSink, FtpSink, NullSink, Scenario, ScenarioReport, PRESETS};
use sentinel_core::netcalc::{classful_mask, Ipv4Address, NetworkMask, NetworkSummary};
use sentinel_core::{Config, Daemon, DetectorConfig, Level};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "sentinel", version, about = "Motion alert daemon and tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the daemon: FTP ingest, alert pipeline, SMS and HTTP API.
    Run {
        /// TOML configuration; relative paths inside it resolve against its directory.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run a simulated camera scenario and print a CSV report.
    Sim(SimArgs),
    /// Network address, last address and size of an IPv4 block.
    Netcalc {
        /// Dotted-quad address.
        address: String,
        /// Mask as dotted quad, `/prefix` or bare prefix; defaults to the classful mask.
        mask: Option<String>,
    },
}

#[derive(Args)]
struct SimArgs {
    /// Preset name or path to a scenario file.
    #[arg(long)]
    scenario: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// FTP server to upload captures to; without it captures are discarded.
    #[arg(long)]
    target: Option<SocketAddr>,
    #[arg(long)]
    sensitivity: Option<Level>,
    #[arg(long)]
    threshold: Option<Level>,
    /// Run every sensitivity and threshold combination.
    #[arg(long, conflicts_with_all = ["sensitivity", "threshold"])]
    grid: bool,
    #[arg(long)]
    user: Option<String>,
    #[arg(long)]
    password: Option<String>,
    /// Configuration supplying trigger settings, calibration and FTP credentials.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    let Some(path) = path else {
        return Ok(Config::default());
    };
    let mut config = Config::load(path).with_context(|| format!("loading {}", path.display()))?;
    let base = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    config.resolve_paths(base);
    Ok(config)
}

async fn run(config: Option<PathBuf>) -> Result<()> {
    let config = load_config(config.as_deref())?;
    let daemon = Daemon::start(&config).await?;
    println!("ftp listening on {}", daemon.ftp_addr());
    println!("http listening on {}", daemon.http_addr());
    tokio::signal::ctrl_c().await.context("waiting for interrupt")?;
    daemon.shutdown();
    Ok(())
}

fn load_scenario(arg: &str) -> Result<Scenario> {
    if PRESETS.contains(&arg) {
        return Ok(Scenario::preset(arg)?);
    }
    let path = Path::new(arg);
    if !path.exists() {
        bail!("{arg:?} is neither a preset ({}) nor a file", PRESETS.join(", "));
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {arg}"))?;
    Ok(Scenario::parse(&text)?)
}

fn sim(args: SimArgs) -> Result<()> {
    let config = load_config(args.config.as_deref())?;
    let scenario = load_scenario(&args.scenario)?;
    let trigger = config.trigger_config()?;
    let calibration = config.calibration();
    let cells: Vec<(Level, Level)> = if args.grid {
        Level::ALL
            .iter()
            .flat_map(|t| Level::ALL.iter().map(move |s| (*s, *t)))
            .collect()
    } else {
        vec![(
            args.sensitivity.unwrap_or(config.detector.sensitivity),
            args.threshold.unwrap_or(config.detector.threshold),
        )]
    };
    let user = args.user.unwrap_or(config.ftp.user.clone());
    let password = args.password.unwrap_or(config.ftp.password.clone());

    let mut reports: Vec<ScenarioReport> = Vec::new();
    for (sensitivity, threshold) in cells {
        let detector = DetectorConfig::calibrated(&calibration, sensitivity, threshold);
        let mut sink: Box<dyn CaptureSink> = match args.target {
            Some(addr) => Box::new(FtpSink::new(addr, user.clone(), password.clone()).with_prefix(format!(
                "{}_s{}_{}_{}",
                scenario.name, args.seed, sensitivity, threshold
            ))),
            None => Box::new(NullSink::default()),
        };
        reports.push(camsim::run_scenario(
            &scenario,
            args.seed,
            &detector,
            &trigger,
            sink.as_mut(),
        ));
    }
    match args.output {
        Some(path) => {
            let file = std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            camsim::write_csv(file, &reports)?;
        }
        None => camsim::write_csv(std::io::stdout().lock(), &reports)?,
    }
    if reports.iter().any(|r| !r.complete) {
        bail!("some captures could not be delivered");
    }
    Ok(())
}

fn netcalc(address: &str, mask: Option<&str>) -> Result<()> {
    let address: Ipv4Address = address.parse()?;
    let mask: NetworkMask = match mask {
        Some(m) => m.parse()?,
        None => classful_mask(address)?,
    };
    println!("{}", NetworkSummary::new(address, mask));
    Ok(())
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config } => tokio::runtime::Runtime::new()?.block_on(run(config)),
        Command::Sim(args) => sim(args),
        Command::Netcalc { address, mask } => netcalc(&address, mask.as_deref()),
    }
}
