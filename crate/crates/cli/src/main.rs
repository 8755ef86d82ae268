mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ridepool::engine::{run, sweep, tuned_sweep, SweepAxes};
use ridepool::network::{generate_grid, write_graph};

use config::Loaded;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, config or input files; exit status 2.
    #[error("{0}")]
    Config(String),
    /// A simulation or analysis step failed; exit status 1.
    #[error("{0}")]
    Run(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Run(e.to_string())
    }
}

impl From<ridepool::Error> for CliError {
    fn from(e: ridepool::Error) -> Self {
        CliError::Run(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "ridepool", version, about = "Ride-pooling simulator and scaling-law analytics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a square grid network in the node/edge text format.
    GenNetwork {
        /// Rows and columns, e.g. 20x20.
        #[arg(long)]
        grid: String,
        /// Edge length in meters.
        #[arg(long, default_value_t = 100.0)]
        spacing: f64,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the request stream a config would feed the simulator.
    GenDemand {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one simulation.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the config's [sweep] grid and fit both scaling laws.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; defaults to the available cores.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Fit the scaling laws to an existing sweep table.
    Validate {
        #[arg(long)]
        table: PathBuf,
        /// Directory for fit and residual tables; stdout summary only when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Maximum detour ratio used by the load approximation.
        #[arg(long, default_value_t = 0.5)]
        max_detour_ratio: f64,
        /// Network complexity used by the load approximation.
        #[arg(long, default_value_t = 0.0)]
        complexity: f64,
    },
}

fn parse_grid(spec: &str) -> Result<(usize, usize), CliError> {
    let bad = || CliError::Config(format!("invalid grid: expected ROWSxCOLS, got {spec:?}"));
    let (r, c) = spec.split_once(['x', 'X']).ok_or_else(bad)?;
    Ok((r.trim().parse().map_err(|_| bad())?, c.trim().parse().map_err(|_| bad())?))
}

fn write_or_print(out: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, bytes).map_err(|e| CliError::Run(format!("cannot write {}: {e}", p.display()))),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(bytes)?;
            Ok(())
        }
    }
}

fn gen_network(grid: &str, spacing: f64, out: Option<&Path>) -> Result<(), CliError> {
    let (rows, cols) = parse_grid(grid)?;
    let g = generate_grid(rows, cols, spacing).map_err(|e| CliError::Config(e.to_string()))?;
    write_or_print(out, write_graph(&g).as_bytes())
}

fn gen_demand(config: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let loaded = Loaded::read(config)?;
    let net = loaded.file.network()?;
    let requests = loaded.file.requests(&net)?;
    let mut buf = Vec::new();
    ridepool::demand::write_requests(&mut buf, &requests, net.graph())?;
    log::info!("{} requests", requests.len());
    write_or_print(out, &buf)
}

fn simulate(config: &Path, out: &Path) -> Result<(), CliError> {
    let loaded = Loaded::read(config)?;
    let net = loaded.file.network()?;
    let cfg = loaded.file.sim_config(&net)?;
    output::prepare_dir(out)?;
    let report = run(&cfg, &net)?;
    output::write_manifest(out, "simulate", &loaded)?;
    output::write_report(out, &report)?;
    println!(
        "occupancy {:.4}  service rate {:.4}  load {:.4}  served {}/{}",
        report.occupancy, report.service_rate, report.system_load, report.counts.window_served, report.counts.window_requests
    );
    Ok(())
}

fn run_sweep(config: &Path, out: &Path, threads: Option<usize>) -> Result<(), CliError> {
    let loaded = Loaded::read(config)?;
    let Some(axes) = loaded.file.sweep.clone() else {
        return Err(CliError::Config("invalid sweep: the config has no [sweep] section".into()));
    };
    let net = loaded.file.network()?;
    let base = loaded.file.sim_config(&net)?;
    let threads = threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    output::prepare_dir(out)?;
    output::write_manifest(out, "sweep", &loaded)?;
    let rows = if axes.target_loads.is_empty() {
        let rates = if axes.arrival_rates.is_empty() { vec![base.arrival_rate()] } else { axes.arrival_rates.clone() };
        let axes = SweepAxes { arrival_rates: rates, capacities: axes.capacities.clone(), fleet_sizes: axes.fleet_sizes.clone() };
        sweep(&base, &axes, &net, threads)?
    } else {
        tuned_sweep(&base, &axes.capacities, &axes.fleet_sizes, &axes.target_loads, axes.tune_iterations, &net, threads)?
    };
    output::write_sweep(out, &rows)?;
    let failed = rows.iter().filter(|r| r.result.is_err()).count();
    let points = output::points_from_rows(&rows);
    let analysis = output::analyze(&points, loaded.file.constraints.max_detour_ratio, loaded.file.network.complexity);
    output::write_analysis(out, &analysis)?;
    output::print_analysis(&analysis);
    if failed > 0 {
        return Err(CliError::Run(format!("{failed} of {} runs failed; see sweep.csv", rows.len())));
    }
    analysis.error.map_or(Ok(()), |e| Err(CliError::Run(e)))
}

fn validate(table: &Path, out: Option<&Path>, max_detour_ratio: f64, complexity: f64) -> Result<(), CliError> {
    let points = output::read_sweep_table(table)?;
    let analysis = output::analyze(&points, max_detour_ratio, complexity);
    if let Some(dir) = out {
        output::prepare_dir(dir)?;
        output::write_analysis(dir, &analysis)?;
    }
    output::print_analysis(&analysis);
    analysis.error.map_or(Ok(()), |e| Err(CliError::Run(e)))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenNetwork { grid, spacing, out } => gen_network(grid, *spacing, out.as_deref()),
        Command::GenDemand { config, out } => gen_demand(config, out.as_deref()),
        Command::Simulate { config, out } => simulate(config, out),
        Command::Sweep { config, out, threads } => run_sweep(config, out, *threads),
        Command::Validate { table, out, max_detour_ratio, complexity } => {
            validate(table, out.as_deref(), *max_detour_ratio, *complexity)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CliError::Config(_) => ExitCode::from(2),
                CliError::Run(_) => ExitCode::from(1),
            }
        }
    }
}
