use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use exflow::diagnostics::fit_growth_exponent;
use exflow::harness::{
    fmt_f64, parse_window, read_csv_column, run_scenario, validate_map_config, CliOverrides,
    PartialConfig, Scenario, ScenarioName,
};
use exflow::Error;

#[derive(Parser)]
#[command(
    name = "exflow",
    version,
    about = "Vortex-blob flow outside an obstacle"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset scenario, optionally overridden by a config file and flags.
    Run {
        /// Preset name; may be omitted when --config is a complete config.
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory (default: runs/<scenario>).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long = "t-end")]
        t_end: Option<f64>,
        /// Grid cells per side for every patch.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check the map of a config file.
    ValidateMap {
        #[arg(long)]
        config: PathBuf,
    },
    /// Fit r ~ M (1 + t)^p to a column of a diagnostics CSV.
    Fit {
        #[arg(long)]
        csv: PathBuf,
        /// r_phys or r_mapped
        #[arg(long)]
        col: String,
        /// <t_lo>:<t_hi>
        #[arg(long)]
        window: String,
    },
}

fn read(path: &PathBuf) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Run {
            scenario,
            config,
            out,
            dt,
            t_end,
            n,
            seed,
        } => {
            let name = scenario.as_deref().map(ScenarioName::parse).transpose()?;
            if name.is_none() && config.is_none() {
                return Err(Error::config(
                    "scenario",
                    "give --scenario, --config or both",
                ));
            }
            let file = config.as_ref().map(read).transpose()?;
            let file = file.as_deref().map(PartialConfig::parse).transpose()?;
            let overrides = CliOverrides {
                dt,
                t_end,
                grid_n: n,
                seed,
            };
            let scenario = Scenario::build(name, file, &overrides);
            let out = out.unwrap_or_else(|| PathBuf::from("runs").join(scenario.label()));
            let report = run_scenario(&scenario, &out)?;
            if let Some(failure) = &report.failure {
                eprintln!("{failure}");
                eprintln!("partial output in {}", out.display());
                return Ok(ExitCode::FAILURE);
            }
            println!(
                "wrote {} rows to {}",
                report.records.len(),
                out.join("diagnostics.csv").display()
            );
            if let Some(fit) = &report.fit {
                print!("{}", fit.render(scenario.label()));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::ValidateMap { config } => {
            let (map, r) = validate_map_config(&read(&config)?)?;
            println!("beta = {}", fmt_f64(map.beta()));
            println!("coefficients = {}", map.inverse_coeffs().len());
            println!("max_h_prime_times_z2 = {}", fmt_f64(r.max_h_prime_times_z2));
            println!(
                "max_h_second_times_z3 = {}",
                fmt_f64(r.max_h_second_times_z3)
            );
            println!("max_dt_norm = {}", fmt_f64(r.max_dt_norm));
            println!("max_dt_inv_norm = {}", fmt_f64(r.max_dt_inv_norm));
            println!("min_s_prime = {}", fmt_f64(r.min_s_prime));
            println!("injectivity_ok = {}", r.injectivity_ok);
            Ok(if r.injectivity_ok && r.all_finite() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Fit { csv, col, window } => {
            let series = read_csv_column(&read(&csv)?, &col)?;
            let (lo, hi) = parse_window(&window)?;
            let fit = fit_growth_exponent(&series, lo, hi)?;
            println!("exponent = {}", fmt_f64(fit.exponent));
            println!("prefactor = {}", fmt_f64(fit.prefactor));
            println!("window = {}:{}", fmt_f64(lo), fmt_f64(hi));
            println!("residual = {}", fmt_f64(fit.residual));
            println!("samples = {}", fit.samples);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
