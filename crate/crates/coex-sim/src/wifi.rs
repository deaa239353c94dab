//! WiFi MAC: clear channel assessment, uniform backoff, PPDU framing, the
//! per-slot station machine, and beacon-driven association.
//!
//! CCA combines carrier sense on decodable WiFi energy with energy
//! detection on total in-band power, so LTE bursts freeze contention only
//! through the energy-detection threshold. The contention window is fixed
//! (no doubling on collision).

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::traffic::Packet;
use crate::units::{db_to_linear, micros_to_nanos, millis_to_nanos, Nanos};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WifiConfig {
    /// Station/AP transmit power, dBm.
    pub tx_power_dbm: f64,
    /// Carrier-sense threshold on WiFi energy, dBm.
    pub cca_cs_dbm: f64,
    /// Energy-detection threshold on any in-band energy, dBm.
    pub cca_ed_dbm: f64,
    pub slot_us: f64,
    pub sifs_us: f64,
    pub difs_us: f64,
    /// Backoff drawn uniformly from [0, cw_max].
    pub cw_max: u32,
    pub service_bits: u64,
    pub tail_bits: u64,
    pub beacon_interval_ms: f64,
    /// Beacon detection SINR threshold, dB.
    pub beacon_det_snr_db: f64,
    /// Association drops when the missed-beacon share exceeds this percent.
    pub beacon_err_ratio_pct: f64,
    /// Sliding window length for beacon outcomes.
    pub beacon_window: usize,
    /// Beacon frame payload, bits.
    pub beacon_payload_bits: u64,
    pub ofdm_symbol_us: f64,
    /// Longest single transmission; the remainder of a file stays queued.
    pub max_airtime_ms: f64,
    /// Post-frame acknowledgment wait charged to packet wait time, us.
    pub ack_wait_us: f64,
    /// Nominal rate converting frame bits to airtime, Mbps.
    pub phy_rate_mbps: f64,
}

impl Default for WifiConfig {
    fn default() -> Self {
        WifiConfig {
            tx_power_dbm: 23.0,
            cca_cs_dbm: -82.0,
            cca_ed_dbm: -65.0,
            slot_us: 9.0,
            sifs_us: 16.0,
            difs_us: 34.0,
            cw_max: 31,
            service_bits: 16,
            tail_bits: 12,
            beacon_interval_ms: 100.0,
            beacon_det_snr_db: 10.0,
            beacon_err_ratio_pct: 15.0,
            beacon_window: 20,
            beacon_payload_bits: 1600,
            ofdm_symbol_us: 4.0,
            max_airtime_ms: 1.0,
            ack_wait_us: 44.0,
            phy_rate_mbps: 65.0,
        }
    }
}

impl WifiConfig {
    pub fn slot(&self) -> Nanos {
        micros_to_nanos(self.slot_us)
    }

    pub fn difs(&self) -> Nanos {
        micros_to_nanos(self.difs_us)
    }

    pub fn symbol(&self) -> Nanos {
        micros_to_nanos(self.ofdm_symbol_us)
    }

    pub fn max_airtime(&self) -> Nanos {
        millis_to_nanos(self.max_airtime_ms)
    }

    pub fn beacon_interval(&self) -> Nanos {
        millis_to_nanos(self.beacon_interval_ms)
    }

    pub fn ack_wait(&self) -> Nanos {
        micros_to_nanos(self.ack_wait_us)
    }

    pub fn frame_overhead_bits(&self) -> u64 {
        self.service_bits + self.tail_bits
    }

    /// Airtime of `bits` at the nominal PHY rate, rounded up to whole OFDM
    /// symbols and clamped to the configured maximum.
    pub fn frame_airtime(&self, bits: f64) -> Nanos {
        let symbol = self.symbol();
        let raw_ns = bits / (self.phy_rate_mbps * 1e6) * 1e9;
        let symbols = (raw_ns / symbol as f64).ceil().max(1.0) as Nanos;
        (symbols * symbol).min(self.max_airtime())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Medium {
    Idle,
    Busy,
}

/// Clear channel assessment. Busy when decodable WiFi energy reaches the
/// carrier-sense threshold or total energy reaches the energy-detection
/// threshold; threshold equality counts as busy.
pub fn cca(rx_wifi_power_dbm: f64, rx_total_power_dbm: f64, cfg: &WifiConfig) -> Medium {
    if rx_wifi_power_dbm >= cfg.cca_cs_dbm || rx_total_power_dbm >= cfg.cca_ed_dbm {
        Medium::Busy
    } else {
        Medium::Idle
    }
}

/// Uniform backoff draw over [0, cw_max] slots.
pub fn draw_backoff(rng: &mut impl Rng, cfg: &WifiConfig) -> u32 {
    rng.random_range(0..=cfg.cw_max)
}

/// Over-the-air frame size: payload plus service and tail bits.
pub fn ppdu_bits(payload_bits: u64, cfg: &WifiConfig) -> u64 {
    payload_bits + cfg.frame_overhead_bits()
}

/// Per-station contention state.
#[derive(Debug, Clone)]
pub struct StaState {
    pub backoff_slots: u32,
    pub queue: VecDeque<Packet>,
    pub associated: bool,
    /// Recent beacon outcomes, true = detected.
    pub beacon_window: VecDeque<bool>,
    /// Whether any beacon was ever detected.
    pub ever_associated: bool,
}

impl StaState {
    pub fn new(initial_backoff: u32) -> Self {
        StaState {
            backoff_slots: initial_backoff,
            queue: VecDeque::new(),
            associated: false,
            beacon_window: VecDeque::new(),
            ever_associated: false,
        }
    }
}

/// The station's decision to transmit, produced by [`wifi_step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WifiTxIntent {
    /// Airtime of the frame about to be sent.
    pub duration: Nanos,
}

/// One slot evaluation of the station machine. Busy medium freezes the
/// backoff; an idle slot decrements it; at zero backoff an associated
/// station with queued data emits a full-band transmission sized to the
/// head packet's remaining frame bits. The backoff redraw happens when the
/// transmission ends, not here.
pub fn wifi_step(sta: &mut StaState, medium: Medium, cfg: &WifiConfig) -> Option<WifiTxIntent> {
    if medium == Medium::Busy {
        return None;
    }
    if sta.backoff_slots > 0 {
        sta.backoff_slots -= 1;
        return None;
    }
    if !sta.associated {
        return None;
    }
    let head = sta.queue.front()?;
    Some(WifiTxIntent {
        duration: cfg.frame_airtime(head.remaining_bits()),
    })
}

/// Record one beacon outcome for a station and recompute association.
/// Detection means the beacon SINR reached the detection threshold. A
/// never-associated station associates on its first detected beacon (the
/// outcome window restarts there); afterwards association holds while the
/// missed share of the window stays within the error-ratio threshold.
pub fn process_beacon(sta: &mut StaState, beacon_sinr: f64, cfg: &WifiConfig) {
    let detected = beacon_sinr >= db_to_linear(cfg.beacon_det_snr_db);
    record_beacon_outcome(sta, detected, cfg);
}

/// Record a beacon the station never received (deferred past its deadline
/// or lost while the station was transmitting).
pub fn process_beacon_missed(sta: &mut StaState, cfg: &WifiConfig) {
    record_beacon_outcome(sta, false, cfg);
}

fn record_beacon_outcome(sta: &mut StaState, detected: bool, cfg: &WifiConfig) {
    if detected && !sta.ever_associated {
        sta.ever_associated = true;
        sta.beacon_window.clear();
    }
    sta.beacon_window.push_back(detected);
    while sta.beacon_window.len() > cfg.beacon_window.max(1) {
        sta.beacon_window.pop_front();
    }
    if !sta.ever_associated {
        sta.associated = false;
        return;
    }
    let missed = sta.beacon_window.iter().filter(|d| !**d).count() as f64;
    let ratio = 100.0 * missed / sta.beacon_window.len() as f64;
    sta.associated = ratio <= cfg.beacon_err_ratio_pct;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{substream, DOM_BACKOFF};

    #[test]
    fn cca_thresholds() {
        let cfg = WifiConfig::default();
        // Decodable WiFi at -80 dBm trips carrier sense.
        assert_eq!(cca(-80.0, -80.0, &cfg), Medium::Busy);
        // Non-WiFi energy at -64 dBm trips energy detection.
        assert_eq!(cca(f64::NEG_INFINITY, -64.0, &cfg), Medium::Busy);
        // Below both thresholds the medium reads idle.
        assert_eq!(cca(-85.0, -70.0, &cfg), Medium::Idle);
        // Boundary equality counts as busy on both thresholds.
        assert_eq!(cca(-82.0, -82.0, &cfg), Medium::Busy);
        assert_eq!(cca(f64::NEG_INFINITY, -65.0, &cfg), Medium::Busy);
        assert_eq!(
            cca(-82.000001, -65.000001, &cfg),
            Medium::Idle,
            "just below both thresholds must be idle"
        );
    }

    #[test]
    fn backoff_moments_and_support() {
        let cfg = WifiConfig::default();
        let mut rng = substream(1, DOM_BACKOFF, 0);
        let n = 100_000;
        let draws: Vec<u32> = (0..n).map(|_| draw_backoff(&mut rng, &cfg)).collect();
        let mean = draws.iter().map(|&d| d as f64).sum::<f64>() / n as f64;
        assert!(
            (mean - 15.5).abs() < 0.2,
            "mean {mean}, expected 15.5 +/- 0.2"
        );
        assert!(draws.iter().all(|&d| d <= 31));
        let head = &draws[..10_000];
        assert_eq!(*head.iter().min().unwrap(), 0, "support must reach 0");
        assert_eq!(*head.iter().max().unwrap(), 31, "support must reach 31");
    }

    #[test]
    fn backoff_reproducible_per_seed() {
        let cfg = WifiConfig::default();
        let a = draw_backoff(&mut substream(9, DOM_BACKOFF, 4), &cfg);
        let b = draw_backoff(&mut substream(9, DOM_BACKOFF, 4), &cfg);
        assert_eq!(a, b);
    }

    #[test]
    fn ppdu_adds_service_and_tail_bits() {
        let cfg = WifiConfig::default();
        assert_eq!(ppdu_bits(1000, &cfg), 1028);
        assert_eq!(ppdu_bits(1, &cfg), 29);
        // Overhead fraction vanishes for large payloads.
        let frac = (ppdu_bits(1_000_000_000, &cfg) - 1_000_000_000) as f64 / 1e9;
        assert!(frac < 1e-7);
    }

    fn sta_with_packet(backoff: u32) -> StaState {
        let mut sta = StaState::new(backoff);
        sta.associated = true;
        sta.queue.push_back(Packet::new(0, 1, 100_000, 28, 0));
        sta
    }

    #[test]
    fn countdown_then_transmit_on_fourth_idle_evaluation() {
        let cfg = WifiConfig::default();
        let mut sta = sta_with_packet(3);
        for k in 0..3 {
            assert!(
                wifi_step(&mut sta, Medium::Idle, &cfg).is_none(),
                "eval {k}"
            );
        }
        assert!(
            wifi_step(&mut sta, Medium::Idle, &cfg).is_some(),
            "must transmit on the fourth idle evaluation"
        );
    }

    #[test]
    fn busy_medium_freezes_backoff() {
        let cfg = WifiConfig::default();
        let mut sta = sta_with_packet(5);
        for _ in 0..100 {
            assert!(wifi_step(&mut sta, Medium::Busy, &cfg).is_none());
        }
        assert_eq!(sta.backoff_slots, 5, "backoff must not move on busy slots");
        // Total idle slots consumed to reach transmission equals the draw.
        let mut idle_evals = 0;
        while wifi_step(&mut sta, Medium::Idle, &cfg).is_none() {
            idle_evals += 1;
        }
        assert_eq!(idle_evals, 5);
    }

    #[test]
    fn empty_queue_never_transmits() {
        let cfg = WifiConfig::default();
        let mut sta = StaState::new(0);
        sta.associated = true;
        for _ in 0..50 {
            assert!(wifi_step(&mut sta, Medium::Idle, &cfg).is_none());
        }
    }

    #[test]
    fn unassociated_station_never_transmits() {
        let cfg = WifiConfig::default();
        let mut sta = sta_with_packet(0);
        sta.associated = false;
        assert!(wifi_step(&mut sta, Medium::Idle, &cfg).is_none());
    }

    #[test]
    fn frame_airtime_rounds_up_to_symbols_and_clamps() {
        let cfg = WifiConfig::default();
        // 65 kbit at 65 Mbps is 1 ms, the airtime cap.
        assert_eq!(cfg.frame_airtime(65_000.0), cfg.max_airtime());
        // 1628 bits at 65 Mbps is 25.05 us -> 7 symbols = 28 us.
        assert_eq!(cfg.frame_airtime(1628.0), 28_000);
        // A huge remainder still clamps to the cap.
        assert_eq!(cfg.frame_airtime(4e6), cfg.max_airtime());
    }

    #[test]
    fn beacon_detection_threshold() {
        let cfg = WifiConfig::default();
        let mut sta = StaState::new(0);
        process_beacon(&mut sta, db_to_linear(12.0), &cfg);
        assert!(sta.associated, "12 dB beacon must be detected");
        let mut sta2 = StaState::new(0);
        process_beacon(&mut sta2, db_to_linear(8.0), &cfg);
        assert!(
            !sta2.associated,
            "8 dB beacon is below the detection threshold"
        );
    }

    #[test]
    fn association_follows_missed_ratio_over_window() {
        let cfg = WifiConfig::default();
        let strong = db_to_linear(20.0);

        // 4 misses out of 20 (20%) exceeds the 15% threshold.
        let mut sta = StaState::new(0);
        for _ in 0..16 {
            process_beacon(&mut sta, strong, &cfg);
        }
        for _ in 0..4 {
            process_beacon_missed(&mut sta, &cfg);
        }
        assert_eq!(sta.beacon_window.len(), 20);
        assert!(!sta.associated, "20% missed must break association");

        // 2 misses out of 20 (10%) keeps it.
        let mut sta = StaState::new(0);
        for _ in 0..18 {
            process_beacon(&mut sta, strong, &cfg);
        }
        for _ in 0..2 {
            process_beacon_missed(&mut sta, &cfg);
        }
        assert!(sta.associated, "10% missed keeps association");

        // Exactly 15% (3 of 20) is still associated.
        let mut sta = StaState::new(0);
        for _ in 0..17 {
            process_beacon(&mut sta, strong, &cfg);
        }
        for _ in 0..3 {
            process_beacon_missed(&mut sta, &cfg);
        }
        assert!(sta.associated, "15% is the inclusive boundary");
    }

    #[test]
    fn first_detected_beacon_associates_after_misses() {
        let cfg = WifiConfig::default();
        let mut sta = StaState::new(0);
        for _ in 0..10 {
            process_beacon_missed(&mut sta, &cfg);
            assert!(!sta.associated);
        }
        process_beacon(&mut sta, db_to_linear(15.0), &cfg);
        assert!(sta.associated, "first detection must associate the station");
        assert_eq!(
            sta.beacon_window.len(),
            1,
            "window restarts at first detection"
        );
    }
}
