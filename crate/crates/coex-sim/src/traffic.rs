//! Poisson packet arrivals and per-node transmit queues.
//!
//! Each traffic source draws exponential inter-arrival times (file-transfer
//! style arrivals). Stations send uplink to their own-cell AP, UEs uplink
//! to their own-cell BS, and each BS generates a downlink stream assigned
//! round-robin across its attached UEs.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::topology::{Deployment, Node, NodeId, Role};
use crate::units::{secs_to_nanos, Nanos};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficConfig {
    /// Arrivals per second per stream.
    pub lambda_per_s: f64,
    /// Bits per arrival (file size).
    pub payload_bits: u64,
    /// Per-queue cap; `None` means unbounded.
    pub max_queue: Option<usize>,
    /// Station -> AP uplink stream.
    pub wifi_ul: bool,
    /// UE -> BS uplink stream.
    pub lte_ul: bool,
    /// BS -> UE downlink stream (rate lambda per attached UE).
    pub lte_dl: bool,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        TrafficConfig {
            lambda_per_s: 2.5,
            payload_bits: 4_000_000,
            max_queue: None,
            wifi_ul: true,
            lte_ul: true,
            lte_dl: true,
        }
    }
}

/// One file to deliver. `progress_bits` accumulates over-the-air bits
/// including the per-packet framing overhead; payload delivery is derived.
#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub src: NodeId,
    pub dst: NodeId,
    pub size_bits: u64,
    /// Framing overhead charged once per packet (WiFi PPDU service + tail).
    pub overhead_bits: u64,
    pub created_at: Nanos,
    pub progress_bits: f64,
    /// Cumulative airtime spent on this packet.
    pub airtime: Nanos,
    /// Transmission attempts so far.
    pub attempts: u32,
}

impl Packet {
    pub fn new(
        src: NodeId,
        dst: NodeId,
        size_bits: u64,
        overhead_bits: u64,
        created_at: Nanos,
    ) -> Self {
        Packet {
            src,
            dst,
            size_bits,
            overhead_bits,
            created_at,
            progress_bits: 0.0,
            airtime: 0,
            attempts: 0,
        }
    }

    /// Total over-the-air bits required to complete the packet.
    pub fn needed_bits(&self) -> f64 {
        (self.size_bits + self.overhead_bits) as f64
    }

    pub fn remaining_bits(&self) -> f64 {
        (self.needed_bits() - self.progress_bits).max(0.0)
    }

    pub fn is_complete(&self) -> bool {
        self.progress_bits >= self.needed_bits()
    }

    /// Payload bits delivered so far, net of framing overhead, clamped to
    /// the packet size.
    pub fn delivered_payload_bits(&self) -> f64 {
        (self.progress_bits - self.overhead_bits as f64).clamp(0.0, self.size_bits as f64)
    }

    /// Credit channel bits to this packet; excess beyond completion is
    /// discarded, not banked.
    pub fn credit_bits(&mut self, bits: f64) {
        self.progress_bits = (self.progress_bits + bits).min(self.needed_bits());
    }
}

/// One exponential inter-arrival delay in seconds, mean 1/lambda.
pub fn next_interarrival(lambda: f64, rng: &mut impl Rng) -> f64 {
    assert!(lambda > 0.0, "arrival rate must be positive");
    Exp::new(lambda).expect("valid rate").sample(rng)
}

/// Generate all arrivals originated by `node` on [0, horizon). Stations
/// target their own-cell AP, UEs their own-cell BS; a BS generates one
/// stream at `lambda * n_ue` assigned round-robin over its attached UEs.
/// APs originate no data. Deterministic for a given RNG state.
pub fn generate_arrivals(
    node: &Node,
    dep: &Deployment,
    cfg: &TrafficConfig,
    horizon: Nanos,
    rng: &mut impl Rng,
) -> Vec<Packet> {
    let (lambda, targets): (f64, Vec<NodeId>) = match node.role {
        Role::WifiSta if cfg.wifi_ul => (cfg.lambda_per_s, vec![dep.ap_of_cell(node.cell_id)]),
        Role::LteUe if cfg.lte_ul => (cfg.lambda_per_s, vec![dep.bs_of_cell(node.cell_id)]),
        Role::LteBs if cfg.lte_dl => {
            let ues = dep.nodes_of_role(node.cell_id, Role::LteUe);
            (cfg.lambda_per_s * ues.len() as f64, ues)
        }
        _ => return Vec::new(),
    };
    if targets.is_empty() {
        return Vec::new();
    }

    let mut out = Vec::new();
    let mut t = 0.0f64;
    let mut k = 0usize;
    let mut prev: Nanos = 0;
    loop {
        t += next_interarrival(lambda, rng);
        let mut at = secs_to_nanos(t);
        if at >= horizon {
            break;
        }
        // Keep creation times strictly increasing after tick rounding.
        if !out.is_empty() && at <= prev {
            at = prev + 1;
            if at >= horizon {
                break;
            }
        }
        prev = at;
        out.push(Packet::new(
            node.id,
            targets[k % targets.len()],
            cfg.payload_bits,
            0,
            at,
        ));
        k += 1;
    }
    out
}

/// All arrivals of a deployment on [0, horizon), each node drawing from
/// its own seed substream, merged in (time, source) order. This is the
/// exact stream a run consumes, so exporting it reproduces the run's
/// traffic.
pub fn generate_all_arrivals(
    dep: &Deployment,
    cfg: &TrafficConfig,
    horizon: Nanos,
    seed: u64,
) -> Vec<Packet> {
    let mut out = Vec::new();
    for node in &dep.nodes {
        let mut rng = crate::units::substream(seed, crate::units::DOM_TRAFFIC, node.id as u64);
        out.extend(generate_arrivals(node, dep, cfg, horizon, &mut rng));
    }
    out.sort_by_key(|p| (p.created_at, p.src));
    out
}
