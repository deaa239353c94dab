//! Shannon-capacity link abstraction.
//!
//! A transmission's interval is partitioned wherever the set of concurrent
//! transmissions changes; each partition is rounded down to whole 4 us OFDM
//! symbols and contributes bandwidth * band_fraction * duration *
//! log2(1 + SINR) successfully received bits. Capacity divides delivered
//! bits by transmission plus wait time.

use serde::{Deserialize, Serialize};

use crate::channel::{sinr, GainMatrix, PropagationConfig, Transmission};
use crate::topology::NodeId;
use crate::units::{nanos_to_secs, Nanos};

/// A constant-SINR stretch of one link, symbol-aligned.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkSample {
    pub t: Nanos,
    /// Whole multiple of the OFDM symbol period.
    pub duration: Nanos,
    /// Linear SINR.
    pub sinr: f64,
    pub band_fraction: f64,
}

/// Successfully received bits over a set of non-overlapping samples of one
/// link. Fractional bits are kept; truncation happens only when a packet
/// completes.
pub fn shannon_bits(samples: &[LinkSample], bandwidth_hz: f64) -> f64 {
    samples
        .iter()
        .map(|s| {
            assert!(s.sinr >= 0.0, "negative SINR violates the link contract");
            bandwidth_hz * s.band_fraction * nanos_to_secs(s.duration) * (1.0 + s.sinr).log2()
        })
        .sum()
}

/// Accounting for one completed packet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeliveryRecord {
    pub src: NodeId,
    pub dst: NodeId,
    pub size_bits: u64,
    pub created_at_ns: Nanos,
    pub completed_at_ns: Nanos,
    /// Payload bits delivered, truncated to whole bits at completion.
    pub bits: u64,
    /// Cumulative airtime.
    pub t_tx_ns: Nanos,
    /// Cumulative queueing, deferral, and acknowledgment wait.
    pub t_wait_ns: Nanos,
    pub attempts: u32,
}

impl DeliveryRecord {
    pub fn total_time_secs(&self) -> f64 {
        nanos_to_secs(self.t_tx_ns + self.t_wait_ns)
    }

    pub fn delay_secs(&self) -> f64 {
        nanos_to_secs(self.completed_at_ns - self.created_at_ns)
    }
}

/// Link capacity in bits per second: delivered bits over transmission plus
/// wait time.
pub fn capacity(rec: &DeliveryRecord) -> f64 {
    assert!(
        rec.t_tx_ns + rec.t_wait_ns > 0,
        "capacity is undefined for zero transmission and wait time"
    );
    rec.bits as f64 / rec.total_time_secs()
}

/// Evaluate one transmission against the transmissions concurrent with any
/// part of it, as received at `rx`. The interval is split at every boundary
/// where the concurrent set changes; each partition keeps its whole
/// symbols, and residual sub-symbol time yields no bits. `clip_end` bounds
/// evaluation (transmissions cut off at the simulation horizon).
pub fn link_evaluate_at(
    tx: &Transmission,
    rx: NodeId,
    concurrent: &[Transmission],
    gm: &GainMatrix,
    cfg: &PropagationConfig,
    symbol: Nanos,
    clip_end: Nanos,
) -> Vec<LinkSample> {
    let start = tx.start;
    let end = tx.end.min(clip_end);
    if end <= start {
        return Vec::new();
    }

    let mut bounds: Vec<Nanos> = Vec::with_capacity(2 + 2 * concurrent.len());
    bounds.push(start);
    bounds.push(end);
    for c in concurrent {
        if c.start > start && c.start < end {
            bounds.push(c.start);
        }
        if c.end > start && c.end < end {
            bounds.push(c.end);
        }
    }
    bounds.sort_unstable();
    bounds.dedup();

    let mut samples = Vec::with_capacity(bounds.len() - 1);
    for w in bounds.windows(2) {
        let (a, b) = (w[0], w[1]);
        let whole = (b - a) / symbol * symbol;
        if whole == 0 {
            continue;
        }
        let active: Vec<Transmission> = concurrent
            .iter()
            .filter(|c| c.start <= a && c.end >= b && c.tx != tx.tx)
            .copied()
            .collect();
        samples.push(LinkSample {
            t: a,
            duration: whole,
            sinr: sinr(rx, tx, &active, gm, cfg),
            band_fraction: tx.band_fraction,
        });
    }
    samples
}

/// [`link_evaluate_at`] for the transmission's own receiver.
pub fn link_evaluate(
    tx: &Transmission,
    concurrent: &[Transmission],
    gm: &GainMatrix,
    cfg: &PropagationConfig,
    symbol: Nanos,
) -> Vec<LinkSample> {
    let rx = tx.rx.expect("data transmissions carry a receiver");
    link_evaluate_at(tx, rx, concurrent, gm, cfg, symbol, tx.end)
}
