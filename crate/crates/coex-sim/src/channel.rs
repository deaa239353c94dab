//! Link gains and SINR evaluation.
//!
//! Path loss follows a log-distance model with a 3.5 GHz frequency term;
//! log-normal shadowing is drawn once per unordered node pair and frozen
//! for the whole run (static channel, zero velocity). SINR at a receiver
//! counts every concurrent transmission not addressed to it as
//! interference, full-band overlap, plus thermal noise over the receiver's
//! occupied band.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::topology::{distance, Deployment, NodeId};
use crate::units::{dbm_to_mw, substream, Nanos, DOM_SHADOWING};

/// Distances below this are clamped before the path-loss log (meters).
const MIN_PATH_DISTANCE_M: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagationConfig {
    /// dB added per decade of distance.
    pub pl_exponent_coeff: f64,
    /// dB at the 1 m reference distance.
    pub pl_intercept_db: f64,
    /// Carrier frequency term, dB.
    pub freq_term_db: f64,
    /// Log-normal shadowing standard deviation, dB. Zero disables shadowing.
    pub shadowing_sigma_db: f64,
    /// Receiver noise figure, dB.
    pub noise_figure_db: f64,
    /// Channel bandwidth, Hz.
    pub bandwidth_hz: f64,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        PropagationConfig {
            pl_exponent_coeff: 36.7,
            pl_intercept_db: 22.7,
            freq_term_db: 26.0 * 3.5f64.log10(),
            shadowing_sigma_db: 8.0,
            noise_figure_db: 6.0,
            bandwidth_hz: 20e6,
        }
    }
}

impl PropagationConfig {
    /// Thermal noise over the full channel: -174 dBm/Hz + 10 log10(B) + NF.
    pub fn noise_power_dbm(&self) -> f64 {
        -174.0 + 10.0 * self.bandwidth_hz.log10() + self.noise_figure_db
    }

    pub fn noise_mw(&self) -> f64 {
        dbm_to_mw(self.noise_power_dbm())
    }
}

/// Log-distance path loss in dB. Distances under 1 m are clamped to 1 m.
pub fn path_loss(d_m: f64, cfg: &PropagationConfig) -> f64 {
    let d = d_m.max(MIN_PATH_DISTANCE_M);
    cfg.pl_intercept_db + cfg.pl_exponent_coeff * d.log10() + cfg.freq_term_db
}

/// Pairwise linear power gains, frozen at deployment time.
#[derive(Debug, Clone, PartialEq)]
pub struct GainMatrix {
    n: usize,
    gain: Vec<f64>,
}

impl GainMatrix {
    pub fn get(&self, tx: NodeId, rx: NodeId) -> f64 {
        self.gain[tx * self.n + rx]
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    /// Effective path loss of a link in dB, shadowing included.
    pub fn effective_path_loss_db(&self, a: NodeId, b: NodeId) -> f64 {
        -10.0 * self.get(a, b).log10()
    }
}

/// Build the gain matrix for a deployment: gain = 10^(-(PL + X)/10) with
/// X ~ Normal(0, sigma^2) drawn once per unordered pair, so the channel is
/// reciprocal. Deterministic per seed; sigma = 0 consumes no randomness.
pub fn build_gain_matrix(dep: &Deployment, cfg: &PropagationConfig, rng_seed: u64) -> GainMatrix {
    let n = dep.num_nodes();
    let mut gain = vec![1.0; n * n];
    let mut rng = substream(rng_seed, DOM_SHADOWING, 0);
    let normal = Normal::new(0.0, cfg.shadowing_sigma_db.max(0.0)).expect("finite shadowing sigma");

    for a in 0..n {
        for b in a..n {
            let pl = path_loss(distance(dep.nodes[a].pos, dep.nodes[b].pos), cfg);
            let shadow = if a != b && cfg.shadowing_sigma_db > 0.0 {
                normal.sample(&mut rng)
            } else {
                0.0
            };
            let g = 10f64.powf(-(pl + shadow) / 10.0);
            gain[a * n + b] = g;
            gain[b * n + a] = g;
        }
    }
    GainMatrix { n, gain }
}

#[cfg(test)]
impl GainMatrix {
    /// Uniform-gain matrix for closed-form tests.
    pub fn test_flat(n: usize, gain: f64) -> Self {
        GainMatrix {
            n,
            gain: vec![gain; n * n],
        }
    }
}

/// Radio technology of a transmission, used to split carrier-sense power
/// from total energy and to bucket metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tech {
    Wifi,
    Lte,
}

/// An in-flight airtime occupancy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transmission {
    pub tx: NodeId,
    /// Intended receiver; `None` for broadcast frames (beacons).
    pub rx: Option<NodeId>,
    pub tx_power_dbm: f64,
    /// Share of the channel occupied, in (0, 1].
    pub band_fraction: f64,
    pub start: Nanos,
    pub end: Nanos,
    pub tech: Tech,
}

impl Transmission {
    /// In-band radiated power in mW: total power scaled by the occupied
    /// band fraction (flat power spectral density model).
    pub fn inband_mw(&self) -> f64 {
        dbm_to_mw(self.tx_power_dbm) * self.band_fraction
    }

    pub fn duration(&self) -> Nanos {
        self.end - self.start
    }
}

/// SINR (linear) at `rx` for `signal` against a set of concurrent
/// interferers. Powers are in-band linear milliwatts; every interferer is
/// counted with full overlap of the receiver's band; noise is scaled to the
/// receiver's occupied band fraction.
pub fn sinr(
    rx: NodeId,
    signal: &Transmission,
    interferers: &[Transmission],
    gm: &GainMatrix,
    cfg: &PropagationConfig,
) -> f64 {
    assert!(
        signal.band_fraction > 0.0 && signal.tx_power_dbm.is_finite(),
        "signal must carry power over a nonempty band"
    );
    let wanted = gm.get(signal.tx, rx) * signal.inband_mw();
    let mut denom = cfg.noise_mw() * signal.band_fraction;
    for itf in interferers {
        debug_assert_ne!(
            itf.tx, signal.tx,
            "interferer set must exclude the signal source"
        );
        denom += gm.get(itf.tx, rx) * itf.inband_mw();
    }
    wanted / denom
}
