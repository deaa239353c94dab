//! Command-line front end: scenario bootstrap, validation, single runs,
//! and duty-cycle sweeps.
//!
//! Exit codes: 0 success, 1 validation error, 2 runtime error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use coex_sim::metrics::write_run_outputs;
use coex_sim::scenario::Scenario;
use coex_sim::sweep::{run_sweep, write_sweep_outputs};

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

#[derive(Parser)]
#[command(
    name = "coex-sim",
    version,
    about = "LTE-U / WiFi coexistence simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a scenario file pre-filled with the default radio parameters.
    Init {
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a scenario file and list every offending key.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Simulate one scenario and write summary.json plus CSV tables.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Seed override; defaults to the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run the duty x seed grid and write sweep.csv / sweep.json.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated duty fractions, e.g. 0.6,0.8
        #[arg(long, value_delimiter = ',', required = true)]
        duty: Vec<f64>,
        /// Seeds: comma list and/or inclusive ranges, e.g. 1..10 or 1,2,7
        #[arg(long, required = true)]
        seeds: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are successful exits; bad arguments are
            // validation failures.
            let code = if e.use_stderr() { EXIT_VALIDATION } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    match cli.command {
        Command::Init { out } => {
            let json = Scenario::default().to_json_pretty() + "\n";
            match out {
                Some(path) => {
                    if let Err(e) = std::fs::write(&path, json) {
                        eprintln!("error: cannot write {}: {e}", path.display());
                        return ExitCode::from(EXIT_RUNTIME);
                    }
                    println!("wrote {}", path.display());
                }
                None => print!("{json}"),
            }
            ExitCode::SUCCESS
        }

        Command::Validate { config } => match load_and_validate(&config) {
            Ok(_) => {
                println!("ok: {} is a valid scenario", config.display());
                ExitCode::SUCCESS
            }
            Err(code) => code,
        },

        Command::Run { config, seed, out } => {
            let scn = match load_and_validate(&config) {
                Ok(scn) => scn,
                Err(code) => return code,
            };
            let seed = seed.unwrap_or(scn.seed);
            let metrics = match coex_sim::run(&scn, seed) {
                Ok(m) => m,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_RUNTIME);
                }
            };
            if let Err(e) = write_run_outputs(&metrics, &out) {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_RUNTIME);
            }
            // Reproducibility sidecars: the exact deployment and arrival
            // trace the run consumed.
            let dep = match coex_sim::build_deployment(
                scn.deployment.cell_radius_m,
                scn.deployment.n_sta,
                scn.deployment.n_ue,
                scn.deployment.min_dist_m,
                seed,
            ) {
                Ok(dep) => dep,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_RUNTIME);
                }
            };
            let path = out.join("deployment.json");
            let json = serde_json::to_string_pretty(&dep).expect("serializes") + "\n";
            if let Err(e) = std::fs::write(&path, json) {
                eprintln!("error: cannot write {}: {e}", path.display());
                return ExitCode::from(EXIT_RUNTIME);
            }
            let arrivals = coex_sim::traffic::generate_all_arrivals(
                &dep,
                &scn.traffic,
                coex_sim::units::secs_to_nanos(scn.horizon_s),
                seed,
            );
            if let Err(e) =
                coex_sim::metrics::write_arrival_trace(&arrivals, &out.join("arrivals.csv"))
            {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_RUNTIME);
            }
            println!(
                "seed {seed}: LTE {:.2} Mbps, WiFi {:.2} Mbps ({:.2} / {:.2} Mbps per cell), \
                 LTE airtime {:.3}",
                metrics.lte.throughput_bps / 1e6,
                metrics.wifi.throughput_bps / 1e6,
                metrics.lte.per_cell_throughput_bps / 1e6,
                metrics.wifi.per_cell_throughput_bps / 1e6,
                metrics.duty_observed,
            );
            println!("outputs in {}", out.display());
            ExitCode::SUCCESS
        }

        Command::Sweep {
            config,
            duty,
            seeds,
            out,
        } => {
            let scn = match load_and_validate(&config) {
                Ok(scn) => scn,
                Err(code) => return code,
            };
            let seeds = match parse_seeds(&seeds) {
                Ok(s) => s,
                Err(msg) => {
                    eprintln!("error: --seeds {msg}");
                    return ExitCode::from(EXIT_VALIDATION);
                }
            };
            let threads = std::env::var("COEX_SIM_THREADS")
                .ok()
                .and_then(|v| v.parse::<usize>().ok())
                .filter(|&v| v >= 1)
                .unwrap_or_else(|| {
                    std::thread::available_parallelism()
                        .map(|n| n.get())
                        .unwrap_or(1)
                });
            let result = match run_sweep(&scn, &duty, &seeds, threads) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_RUNTIME);
                }
            };
            if let Err(e) = write_sweep_outputs(&result, &out) {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_RUNTIME);
            }
            for m in &result.means {
                println!(
                    "duty {:.2}: mean LTE {:.2} Mbps, mean WiFi {:.2} Mbps over {} seeds",
                    m.duty,
                    m.lte_bps / 1e6,
                    m.wifi_bps / 1e6,
                    m.runs
                );
            }
            println!("outputs in {}", out.display());
            ExitCode::SUCCESS
        }
    }
}

fn load_and_validate(path: &Path) -> Result<Scenario, ExitCode> {
    let scn = match Scenario::load(path) {
        Ok(scn) => scn,
        Err(e) => {
            eprintln!("error: {e}");
            return Err(ExitCode::from(EXIT_VALIDATION));
        }
    };
    if let Err(e) = scn.validate() {
        eprintln!("error: {e}");
        return Err(ExitCode::from(EXIT_VALIDATION));
    }
    Ok(scn)
}

/// Seeds accept comma-separated entries, each a literal or an inclusive
/// `a..b` range: "1..10", "1,2,7", "1..3,9".
fn parse_seeds(spec: &str) -> Result<Vec<u64>, String> {
    let mut out = Vec::new();
    for part in spec.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        if let Some((a, b)) = part.split_once("..") {
            let a: u64 = a
                .trim()
                .parse()
                .map_err(|_| format!("bad range start {part:?}"))?;
            let b: u64 = b
                .trim()
                .parse()
                .map_err(|_| format!("bad range end {part:?}"))?;
            if a > b {
                return Err(format!("empty range {part:?}"));
            }
            out.extend(a..=b);
        } else {
            out.push(part.parse().map_err(|_| format!("bad seed {part:?}"))?);
        }
    }
    if out.is_empty() {
        return Err("no seeds given".into());
    }
    Ok(out)
}
