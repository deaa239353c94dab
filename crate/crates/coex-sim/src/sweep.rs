//! Duty-cycle x seed sweeps: the Cartesian product of runs, one summary
//! row per (duty, seed) plus per-duty means. Rows are computed in a fixed
//! order regardless of thread scheduling, so seed-permuted sweeps produce
//! identical means.

use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::run;
use crate::metrics::{deciles, MetricsError};
use crate::scenario::Scenario;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("sweep requires at least one duty value and one seed")]
    EmptyGrid,
    #[error("run failed at duty {duty}, seed {seed}: {source}")]
    RunFailed {
        duty: f64,
        seed: u64,
        source: crate::engine::SimError,
    },
    #[error(transparent)]
    Io(#[from] MetricsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub duty: f64,
    pub seed: u64,
    pub lte_bps: f64,
    pub wifi_bps: f64,
    pub lte_per_cell_bps: f64,
    pub wifi_per_cell_bps: f64,
    pub duty_observed: f64,
    pub lte_sinr_deciles_db: Option<[f64; 9]>,
    pub wifi_sinr_deciles_db: Option<[f64; 9]>,
}

/// Per-duty mean over seeds; SINR deciles are recomputed over the pooled
/// samples of all seeds at that duty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMean {
    pub duty: f64,
    pub runs: usize,
    pub lte_bps: f64,
    pub wifi_bps: f64,
    pub lte_per_cell_bps: f64,
    pub wifi_per_cell_bps: f64,
    pub duty_observed: f64,
    pub lte_sinr_deciles_db: Option<[f64; 9]>,
    pub wifi_sinr_deciles_db: Option<[f64; 9]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub means: Vec<SweepMean>,
}

/// Run every (duty, seed) combination of the grid. `max_threads` caps
/// worker parallelism; runs share only the immutable base scenario.
pub fn run_sweep(
    base: &Scenario,
    duties: &[f64],
    seeds: &[u64],
    max_threads: usize,
) -> Result<SweepResult, SweepError> {
    if duties.is_empty() || seeds.is_empty() {
        return Err(SweepError::EmptyGrid);
    }

    // Fixed job order: duty-major, seeds sorted, so means are independent
    // of the seed order given on the command line.
    let mut sorted_seeds = seeds.to_vec();
    sorted_seeds.sort_unstable();
    sorted_seeds.dedup();
    let mut sorted_duties = duties.to_vec();
    sorted_duties.sort_by(|a, b| a.partial_cmp(b).expect("finite duty values"));
    sorted_duties.dedup();

    let jobs: Vec<(f64, u64)> = sorted_duties
        .iter()
        .flat_map(|&d| sorted_seeds.iter().map(move |&s| (d, s)))
        .collect();

    let workers = max_threads.max(1).min(jobs.len());
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<RowWithSamples, SweepError>>>> =
        Mutex::new((0..jobs.len()).map(|_| None).collect());

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= jobs.len() {
                    break;
                }
                let (duty, seed) = jobs[i];
                let mut scn = base.clone();
                scn.duty.on_fraction = duty;
                scn.seed = seed;
                let outcome = run(&scn, seed)
                    .map(|m| RowWithSamples {
                        row: SweepRow {
                            duty,
                            seed,
                            lte_bps: m.lte.throughput_bps,
                            wifi_bps: m.wifi.throughput_bps,
                            lte_per_cell_bps: m.lte.per_cell_throughput_bps,
                            wifi_per_cell_bps: m.wifi.per_cell_throughput_bps,
                            duty_observed: m.duty_observed,
                            lte_sinr_deciles_db: m.lte.sinr_deciles_db,
                            wifi_sinr_deciles_db: m.wifi.sinr_deciles_db,
                        },
                        lte_samples: m.lte.sinr_samples_db,
                        wifi_samples: m.wifi.sinr_samples_db,
                    })
                    .map_err(|e| SweepError::RunFailed {
                        duty,
                        seed,
                        source: e,
                    });
                results.lock().expect("no poisoned workers")[i] = Some(outcome);
            });
        }
    });

    let collected = results.into_inner().expect("workers finished");
    let mut rows = Vec::with_capacity(jobs.len());
    let mut samples: Vec<SamplePair> = Vec::with_capacity(jobs.len());
    for outcome in collected {
        let r = outcome.expect("every job ran")?;
        rows.push(r.row);
        samples.push((r.lte_samples, r.wifi_samples));
    }

    let means = sorted_duties
        .iter()
        .map(|&duty| {
            let idx: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].duty == duty).collect();
            let n = idx.len() as f64;
            let mean =
                |f: &dyn Fn(&SweepRow) -> f64| idx.iter().map(|&i| f(&rows[i])).sum::<f64>() / n;
            let pool = |pick: &dyn Fn(&SamplePair) -> &Vec<f64>| {
                let mut pooled = Vec::new();
                for &i in &idx {
                    pooled.extend_from_slice(pick(&samples[i]));
                }
                deciles(&pooled)
            };
            SweepMean {
                duty,
                runs: idx.len(),
                lte_bps: mean(&|r| r.lte_bps),
                wifi_bps: mean(&|r| r.wifi_bps),
                lte_per_cell_bps: mean(&|r| r.lte_per_cell_bps),
                wifi_per_cell_bps: mean(&|r| r.wifi_per_cell_bps),
                duty_observed: mean(&|r| r.duty_observed),
                lte_sinr_deciles_db: pool(&|s| &s.0),
                wifi_sinr_deciles_db: pool(&|s| &s.1),
            }
        })
        .collect();

    Ok(SweepResult { rows, means })
}

type SamplePair = (Vec<f64>, Vec<f64>);

struct RowWithSamples {
    row: SweepRow,
    lte_samples: Vec<f64>,
    wifi_samples: Vec<f64>,
}

/// Write sweep.csv (run and mean rows) and sweep.json into `dir`.
pub fn write_sweep_outputs(result: &SweepResult, dir: &Path) -> Result<(), SweepError> {
    std::fs::create_dir_all(dir).map_err(MetricsError::Io)?;
    std::fs::write(
        dir.join("sweep.json"),
        serde_json::to_string_pretty(result).expect("sweep serializes") + "\n",
    )
    .map_err(MetricsError::Io)?;

    let mut csv = std::fs::File::create(dir.join("sweep.csv")).map_err(MetricsError::Io)?;
    let header = |w: &mut std::fs::File| {
        writeln!(
            w,
            "kind,duty,seed,lte_bps,wifi_bps,lte_per_cell_bps,wifi_per_cell_bps,duty_observed,{},{}",
            decile_header("lte"),
            decile_header("wifi")
        )
    };
    header(&mut csv).map_err(MetricsError::Io)?;
    for r in &result.rows {
        writeln!(
            csv,
            "run,{},{},{},{},{},{},{},{},{}",
            r.duty,
            r.seed,
            r.lte_bps,
            r.wifi_bps,
            r.lte_per_cell_bps,
            r.wifi_per_cell_bps,
            r.duty_observed,
            decile_cells(&r.lte_sinr_deciles_db),
            decile_cells(&r.wifi_sinr_deciles_db)
        )
        .map_err(MetricsError::Io)?;
    }
    for m in &result.means {
        writeln!(
            csv,
            "mean,{},,{},{},{},{},{},{},{}",
            m.duty,
            m.lte_bps,
            m.wifi_bps,
            m.lte_per_cell_bps,
            m.wifi_per_cell_bps,
            m.duty_observed,
            decile_cells(&m.lte_sinr_deciles_db),
            decile_cells(&m.wifi_sinr_deciles_db)
        )
        .map_err(MetricsError::Io)?;
    }
    Ok(())
}

fn decile_header(prefix: &str) -> String {
    (1..=9)
        .map(|k| format!("{prefix}_d{k}_db"))
        .collect::<Vec<_>>()
        .join(",")
}

fn decile_cells(d: &Option<[f64; 9]>) -> String {
    match d {
        Some(v) => v
            .iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(","),
        None => [""; 9].join(","),
    }
}
