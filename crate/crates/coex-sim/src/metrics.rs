//! Run statistics: per-node delivery accounting, per-technology
//! throughput, SINR distributions, airtime, and the file writers behind
//! the CLI (JSON summary plus flat CSV tables for plotting).

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::Tech;
use crate::phy::DeliveryRecord;
use crate::topology::{Role, NUM_CELLS};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("empirical CDF of an empty sample set is undefined")]
    EmptySamples,
    #[error("output error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeMetrics {
    pub id: usize,
    pub role: Role,
    pub cell: usize,
    /// Bits that arrived at this node's transmit queues.
    pub offered_bits: u64,
    /// Payload bits this node got delivered (whole bits; partial packets
    /// are floored at the horizon).
    pub delivered_bits: u64,
    /// Airtime spent transmitting, seconds.
    pub t_tx_s: f64,
    /// Queueing, deferral, and acknowledgment wait over completed packets.
    pub t_wait_s: f64,
    /// delivered / (t_tx + t_wait); zero when the node never transmitted.
    pub capacity_bps: f64,
    pub packets_completed: u64,
}

/// Histogram bin over SINR in dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinrBin {
    pub left_db: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TechMetrics {
    pub delivered_bits: u64,
    pub throughput_bps: f64,
    /// Network throughput divided by the cell count.
    pub per_cell_throughput_bps: f64,
    /// Union of this technology's transmission intervals, seconds.
    pub airtime_s: f64,
    pub airtime_fraction: f64,
    pub sinr_sample_count: usize,
    /// 1st through 9th deciles of the SINR samples, dB.
    pub sinr_deciles_db: Option<[f64; 9]>,
    /// 0.5 dB histogram of the SINR samples.
    pub sinr_hist: Vec<SinrBin>,
    /// Raw samples stay in memory for analysis but out of the JSON.
    #[serde(skip)]
    pub sinr_samples_db: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub horizon_s: f64,
    pub duty_on_fraction: f64,
    /// Fraction of the horizon covered by LTE transmissions.
    pub duty_observed: f64,
    /// Arrivals rejected by bounded queues.
    pub packets_dropped: u64,
    pub per_node: Vec<NodeMetrics>,
    pub wifi: TechMetrics,
    pub lte: TechMetrics,
    pub packets: Vec<DeliveryRecord>,
}

impl RunMetrics {
    pub fn tech(&self, tech: Tech) -> &TechMetrics {
        match tech {
            Tech::Wifi => &self.wifi,
            Tech::Lte => &self.lte,
        }
    }
}

/// Aggregate throughput of one technology: delivered bits over the horizon.
pub fn aggregate_throughput(m: &RunMetrics, tech: Tech) -> f64 {
    assert!(m.horizon_s > 0.0, "throughput needs a positive horizon");
    m.tech(tech).delivered_bits as f64 / m.horizon_s
}

/// Empirical CDF: sorted (value, P(X <= value)) points with P = rank / n.
pub fn empirical_cdf(samples: &[f64]) -> Result<Vec<(f64, f64)>, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::EmptySamples);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    let n = sorted.len() as f64;
    Ok(sorted
        .iter()
        .enumerate()
        .map(|(i, &v)| (v, (i + 1) as f64 / n))
        .collect())
}

/// 1st..9th deciles (inverse CDF at k/10) of an unsorted sample set.
pub fn deciles(samples: &[f64]) -> Option<[f64; 9]> {
    if samples.is_empty() {
        return None;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    let n = sorted.len();
    let mut out = [0.0; 9];
    for k in 1..=9 {
        let rank = ((n as f64 * k as f64 / 10.0).ceil() as usize).clamp(1, n);
        out[k - 1] = sorted[rank - 1];
    }
    Some(out)
}

/// Deciles of a weighted sample set: the value at which the cumulative
/// weight first reaches k/10 of the total.
pub fn weighted_deciles(samples: &[f64], weights: &[u64]) -> Option<[f64; 9]> {
    assert_eq!(samples.len(), weights.len(), "one weight per sample");
    let total: u128 = weights.iter().map(|&w| w as u128).sum();
    if total == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by(|&a, &b| samples[a].partial_cmp(&samples[b]).expect("finite samples"));
    let mut out = [0.0; 9];
    let mut cum: u128 = 0;
    let mut k = 1usize;
    for &i in &order {
        cum += weights[i] as u128;
        while k <= 9 && cum * 10 >= total * k as u128 {
            out[k - 1] = samples[i];
            k += 1;
        }
        if k > 9 {
            break;
        }
    }
    Some(out)
}

/// Fixed-width histogram of dB samples, each counting `weights[i]` (or one
/// when unweighted).
pub fn sinr_histogram(samples: &[f64], weights: Option<&[u64]>, bin_db: f64) -> Vec<SinrBin> {
    if samples.is_empty() {
        return Vec::new();
    }
    let lo = (samples.iter().copied().fold(f64::INFINITY, f64::min) / bin_db).floor() as i64;
    let hi = (samples.iter().copied().fold(f64::NEG_INFINITY, f64::max) / bin_db).floor() as i64;
    let mut counts = vec![0u64; (hi - lo + 1) as usize];
    for (i, &s) in samples.iter().enumerate() {
        let idx = ((s / bin_db).floor() as i64 - lo) as usize;
        counts[idx] += weights.map_or(1, |w| w[i]);
    }
    counts
        .into_iter()
        .enumerate()
        .filter(|(_, c)| *c > 0)
        .map(|(i, count)| SinrBin {
            left_db: (lo + i as i64) as f64 * bin_db,
            count,
        })
        .collect()
}

/// Build the per-technology summary from raw parts. When symbol weights
/// are given, the deciles and histogram weight each sample by its airtime
/// in OFDM symbols instead of counting samples.
pub fn tech_metrics(
    delivered_bits: u64,
    airtime_s: f64,
    sinr_samples_db: Vec<f64>,
    sinr_weights: Option<&[u64]>,
    horizon_s: f64,
) -> TechMetrics {
    let throughput = if horizon_s > 0.0 {
        delivered_bits as f64 / horizon_s
    } else {
        0.0
    };
    TechMetrics {
        delivered_bits,
        throughput_bps: throughput,
        per_cell_throughput_bps: throughput / NUM_CELLS as f64,
        airtime_s,
        airtime_fraction: if horizon_s > 0.0 {
            airtime_s / horizon_s
        } else {
            0.0
        },
        sinr_sample_count: sinr_samples_db.len(),
        sinr_deciles_db: match sinr_weights {
            Some(w) => weighted_deciles(&sinr_samples_db, w),
            None => deciles(&sinr_samples_db),
        },
        sinr_hist: sinr_histogram(&sinr_samples_db, sinr_weights, 0.5),
        sinr_samples_db,
    }
}

// ---------------------------------------------------------------------------
// File outputs
// ---------------------------------------------------------------------------

/// Write summary.json, nodes.csv, sinr_hist.csv, and packets.csv into `dir`.
pub fn write_run_outputs(m: &RunMetrics, dir: &Path) -> Result<(), MetricsError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(
        dir.join("summary.json"),
        serde_json::to_string_pretty(m).expect("metrics serialize") + "\n",
    )?;

    let mut nodes = std::fs::File::create(dir.join("nodes.csv"))?;
    writeln!(
        nodes,
        "id,role,cell,offered_bits,delivered_bits,t_tx_s,t_wait_s,capacity_bps,packets_completed"
    )?;
    for n in &m.per_node {
        writeln!(
            nodes,
            "{},{},{},{},{},{},{},{},{}",
            n.id,
            role_name(n.role),
            n.cell,
            n.offered_bits,
            n.delivered_bits,
            n.t_tx_s,
            n.t_wait_s,
            n.capacity_bps,
            n.packets_completed
        )?;
    }

    let mut hist = std::fs::File::create(dir.join("sinr_hist.csv"))?;
    writeln!(hist, "tech,bin_left_db,count")?;
    for (tech, tm) in [("wifi", &m.wifi), ("lte", &m.lte)] {
        for b in &tm.sinr_hist {
            writeln!(hist, "{},{},{}", tech, b.left_db, b.count)?;
        }
    }

    let mut pkts = std::fs::File::create(dir.join("packets.csv"))?;
    writeln!(
        pkts,
        "src,dst,size_bits,created_s,completed_s,delay_s,t_tx_s,t_wait_s,capacity_bps,attempts"
    )?;
    for p in &m.packets {
        writeln!(
            pkts,
            "{},{},{},{},{},{},{},{},{},{}",
            p.src,
            p.dst,
            p.size_bits,
            crate::units::nanos_to_secs(p.created_at_ns),
            crate::units::nanos_to_secs(p.completed_at_ns),
            p.delay_secs(),
            crate::units::nanos_to_secs(p.t_tx_ns),
            crate::units::nanos_to_secs(p.t_wait_ns),
            crate::phy::capacity(p),
            p.attempts
        )?;
    }
    Ok(())
}

/// Export an arrival trace (one row per generated packet) so a run's
/// traffic can be replayed or inspected externally.
pub fn write_arrival_trace(
    arrivals: &[crate::traffic::Packet],
    path: &Path,
) -> Result<(), MetricsError> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "node_id,t,bits")?;
    for p in arrivals {
        writeln!(
            f,
            "{},{},{}",
            p.src,
            crate::units::nanos_to_secs(p.created_at),
            p.size_bits
        )?;
    }
    Ok(())
}

fn role_name(role: Role) -> &'static str {
    match role {
        Role::WifiAp => "wifi_ap",
        Role::WifiSta => "wifi_sta",
        Role::LteBs => "lte_bs",
        Role::LteUe => "lte_ue",
    }
}
