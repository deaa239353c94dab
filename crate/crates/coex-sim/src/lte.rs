//! LTE-U MAC: duty-cycle gating, TDD subframe pattern, round-robin
//! downlink scheduling, equal-share uplink grants, and open-loop uplink
//! power control.
//!
//! LTE does not sense the medium: during the on-window it transmits on its
//! TTI grid regardless of WiFi activity. That gating is the whole
//! coexistence mechanism.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::channel::{Tech, Transmission};
use crate::topology::NodeId;
use crate::traffic::Packet;
use crate::units::{millis_to_nanos, Nanos};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DutyCycleConfig {
    /// Gating period in milliseconds.
    pub period_ms: f64,
    /// Fraction of each period during which LTE may transmit, in (0, 1].
    pub on_fraction: f64,
    /// Optional per-cell phase offsets in milliseconds (empty = all zero).
    pub cell_phase_ms: Vec<f64>,
}

impl Default for DutyCycleConfig {
    fn default() -> Self {
        DutyCycleConfig {
            period_ms: 50.0,
            on_fraction: 0.6,
            cell_phase_ms: Vec::new(),
        }
    }
}

/// Integer-tick duty window derived from the config for one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DutyWindow {
    pub period: Nanos,
    pub on: Nanos,
    pub phase: Nanos,
}

impl DutyCycleConfig {
    pub fn window_for_cell(&self, cell: usize) -> DutyWindow {
        let period = millis_to_nanos(self.period_ms);
        let phase_ms = self.cell_phase_ms.get(cell).copied().unwrap_or(0.0);
        DutyWindow {
            period,
            on: (self.on_fraction * period as f64).round() as Nanos,
            phase: millis_to_nanos(phase_ms) % period.max(1),
        }
    }
}

/// True iff `t` falls inside the LTE on-window: (t - phase) mod period < on.
pub fn is_lte_on(t: Nanos, w: &DutyWindow) -> bool {
    let local = (t + w.period - w.phase) % w.period;
    local < w.on
}

/// True iff the whole interval [t, t + dur) lies inside one on-window, so
/// a transmission never straddles an on/off edge.
pub fn interval_fits_on_window(t: Nanos, dur: Nanos, w: &DutyWindow) -> bool {
    let local = (t + w.period - w.phase) % w.period;
    local + dur <= w.on
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LteConfig {
    /// Scheduling quantum, milliseconds.
    pub tti_ms: f64,
    /// Frame length, milliseconds (10 TTIs).
    pub frame_ms: f64,
    /// BS downlink transmit power, dBm.
    pub dl_power_dbm: f64,
    /// UE power cap, dBm.
    pub ue_max_power_dbm: f64,
    /// Open-loop power control target, dBm.
    pub p0_dbm: f64,
    /// Path-loss compensation factor.
    pub tpc_alpha: f64,
    /// One character per TTI in the frame: 'D' downlink, 'U' uplink.
    pub tdd_pattern: String,
}

impl Default for LteConfig {
    fn default() -> Self {
        LteConfig {
            tti_ms: 1.0,
            frame_ms: 10.0,
            dl_power_dbm: 20.0,
            ue_max_power_dbm: 23.0,
            p0_dbm: -106.0,
            tpc_alpha: 1.0,
            // Downlink-heavy split in the spirit of 3GPP TDD configuration
            // 2: the unlicensed carrier mostly carries downlink, and the
            // metering flow toward the head-end is downlink traffic.
            tdd_pattern: "DDUDDDDUDD".to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubframeKind {
    Downlink,
    Uplink,
}

impl LteConfig {
    pub fn tti(&self) -> Nanos {
        millis_to_nanos(self.tti_ms)
    }

    pub fn frame(&self) -> Nanos {
        millis_to_nanos(self.frame_ms)
    }

    /// D/U kind of the TTI containing `t`, from the frame-periodic pattern.
    pub fn subframe_kind(&self, t: Nanos) -> SubframeKind {
        let idx = ((t % self.frame()) / self.tti()) as usize;
        match self.tdd_pattern.as_bytes()[idx % self.tdd_pattern.len()] {
            b'D' => SubframeKind::Downlink,
            _ => SubframeKind::Uplink,
        }
    }
}

/// Per-cell LTE scheduler state: one BS, its attached UEs, a round-robin
/// cursor, and per-UE uplink/downlink packet queues.
#[derive(Debug, Clone)]
pub struct LteCellState {
    pub cell_id: usize,
    pub bs: NodeId,
    pub ues: Vec<NodeId>,
    pub rr_cursor: usize,
    pub dl_queues: Vec<VecDeque<Packet>>,
    pub ul_queues: Vec<VecDeque<Packet>>,
}

impl LteCellState {
    pub fn new(cell_id: usize, bs: NodeId, ues: Vec<NodeId>) -> Self {
        let n = ues.len();
        LteCellState {
            cell_id,
            bs,
            ues,
            rr_cursor: 0,
            dl_queues: vec![VecDeque::new(); n],
            ul_queues: vec![VecDeque::new(); n],
        }
    }

    pub fn ue_index(&self, ue: NodeId) -> Option<usize> {
        self.ues.iter().position(|&u| u == ue)
    }
}

/// Round-robin pick of the next UE with downlink backlog, advancing the
/// cursor past the selected UE. `None` when every downlink queue is empty.
pub fn schedule_dl(cell: &mut LteCellState) -> Option<usize> {
    let n = cell.ues.len();
    if n == 0 {
        return None;
    }
    for k in 0..n {
        let idx = (cell.rr_cursor + k) % n;
        if !cell.dl_queues[idx].is_empty() {
            cell.rr_cursor = (idx + 1) % n;
            return Some(idx);
        }
    }
    None
}

/// Equal-share uplink grants: every UE with uplink backlog gets 1/k of the
/// band, k being the number of such UEs.
pub fn grant_ul(cell: &LteCellState) -> Vec<(usize, f64)> {
    let backlogged: Vec<usize> = (0..cell.ues.len())
        .filter(|&i| !cell.ul_queues[i].is_empty())
        .collect();
    let k = backlogged.len();
    backlogged
        .into_iter()
        .map(|i| (i, 1.0 / k as f64))
        .collect()
}

/// Open-loop uplink power: min(max, P0 + alpha * PL).
pub fn ul_tx_power(pl_db: f64, cfg: &LteConfig) -> f64 {
    (cfg.p0_dbm + cfg.tpc_alpha * pl_db).min(cfg.ue_max_power_dbm)
}

/// Emit this cell's transmissions for the TTI starting at `t`. Outside the
/// on-window (or when the TTI would straddle an on/off edge) nothing is
/// emitted. Downlink TTIs carry one full-band transmission to the
/// round-robin UE; uplink TTIs carry equal-share grants at power-controlled
/// levels. `ue_pl_db[i]` is the effective UE->BS path loss used for power
/// control.
pub fn lte_step(
    cell: &mut LteCellState,
    t: Nanos,
    window: &DutyWindow,
    cfg: &LteConfig,
    ue_pl_db: &[f64],
) -> Vec<Transmission> {
    let tti = cfg.tti();
    if !interval_fits_on_window(t, tti, window) {
        return Vec::new();
    }
    match cfg.subframe_kind(t) {
        SubframeKind::Downlink => schedule_dl(cell)
            .map(|ue_idx| {
                vec![Transmission {
                    tx: cell.bs,
                    rx: Some(cell.ues[ue_idx]),
                    tx_power_dbm: cfg.dl_power_dbm,
                    band_fraction: 1.0,
                    start: t,
                    end: t + tti,
                    tech: Tech::Lte,
                }]
            })
            .unwrap_or_default(),
        SubframeKind::Uplink => grant_ul(cell)
            .into_iter()
            .map(|(ue_idx, frac)| Transmission {
                tx: cell.ues[ue_idx],
                rx: Some(cell.bs),
                tx_power_dbm: ul_tx_power(ue_pl_db[ue_idx], cfg),
                band_fraction: frac,
                start: t,
                end: t + tti,
                tech: Tech::Lte,
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::NANOS_PER_MILLI;

    fn ms(x: f64) -> Nanos {
        millis_to_nanos(x)
    }

    fn window(period_ms: f64, on_fraction: f64) -> DutyWindow {
        DutyCycleConfig {
            period_ms,
            on_fraction,
            cell_phase_ms: Vec::new(),
        }
        .window_for_cell(0)
    }

    fn backlogged_cell(n_ue: usize) -> LteCellState {
        let mut cell = LteCellState::new(0, 0, (1..=n_ue).collect());
        for i in 0..n_ue {
            cell.dl_queues[i].push_back(Packet::new(0, i + 1, 1000, 0, 0));
            cell.ul_queues[i].push_back(Packet::new(i + 1, 0, 1000, 0, 0));
        }
        cell
    }

    #[test]
    fn duty_gate_boundaries_at_60_percent() {
        let w = window(50.0, 0.60);
        assert!(is_lte_on(ms(29.9), &w));
        assert!(!is_lte_on(ms(30.0), &w), "30 ms is the first off instant");
        assert!(is_lte_on(ms(75.0), &w), "75 ms folds to 25 ms, inside");
    }

    #[test]
    fn duty_gate_boundaries_at_80_percent() {
        let w = window(50.0, 0.80);
        assert!(is_lte_on(ms(39.0), &w));
        assert!(!is_lte_on(ms(45.0), &w));
    }

    #[test]
    fn phase_offset_shifts_the_window() {
        let w = DutyCycleConfig {
            period_ms: 50.0,
            on_fraction: 0.6,
            cell_phase_ms: vec![0.0, 10.0],
        }
        .window_for_cell(1);
        assert!(
            !is_lte_on(ms(5.0), &w),
            "5 ms is 45 ms into the shifted period"
        );
        assert!(is_lte_on(ms(10.0), &w));
        assert!(is_lte_on(ms(39.9), &w));
        assert!(!is_lte_on(ms(40.0), &w));
    }

    #[test]
    fn round_robin_cycles_over_backlogged_ues() {
        let mut cell = backlogged_cell(3);
        let picks: Vec<_> = (0..4).map(|_| schedule_dl(&mut cell).unwrap()).collect();
        assert_eq!(picks, vec![0, 1, 2, 0]);
    }

    #[test]
    fn round_robin_skips_empty_queues() {
        let mut cell = backlogged_cell(3);
        cell.dl_queues[0].clear();
        cell.dl_queues[2].clear();
        for _ in 0..3 {
            assert_eq!(schedule_dl(&mut cell), Some(1), "only UE 1 is backlogged");
        }
    }

    #[test]
    fn round_robin_none_when_all_empty() {
        let mut cell = LteCellState::new(0, 0, vec![1, 2]);
        assert_eq!(schedule_dl(&mut cell), None);
    }

    #[test]
    fn round_robin_fairness_exact_over_k_times_m_ttis() {
        let k = 4;
        let m = 25;
        let mut cell = backlogged_cell(k);
        let mut counts = vec![0usize; k];
        for _ in 0..k * m {
            counts[schedule_dl(&mut cell).unwrap()] += 1;
        }
        assert_eq!(counts, vec![m; k], "round robin must be exactly fair");
    }

    #[test]
    fn ul_grants_share_equally() {
        let cell = backlogged_cell(4);
        let grants = grant_ul(&cell);
        assert_eq!(grants.len(), 4);
        for (_, f) in &grants {
            assert_eq!(*f, 0.25);
        }

        let mut one = backlogged_cell(4);
        for i in 1..4 {
            one.ul_queues[i].clear();
        }
        assert_eq!(grant_ul(&one), vec![(0, 1.0)]);

        let empty = LteCellState::new(0, 0, vec![1]);
        assert!(grant_ul(&empty).is_empty());
    }

    #[test]
    fn ul_band_fractions_sum_to_at_most_one() {
        for n in 1..=16 {
            let cell = backlogged_cell(n);
            let total: f64 = grant_ul(&cell).iter().map(|(_, f)| f).sum();
            assert!(total <= 1.0 + 1e-12, "{n} grants sum to {total}");
        }
    }

    #[test]
    fn ul_power_control_formula() {
        let cfg = LteConfig::default();
        assert_eq!(ul_tx_power(100.0, &cfg), -6.0);
        assert_eq!(ul_tx_power(130.0, &cfg), 23.0, "cap at the UE maximum");
        assert_eq!(ul_tx_power(0.0, &cfg), -106.0);
    }

    #[test]
    fn ul_power_monotone_in_path_loss() {
        let cfg = LteConfig::default();
        let mut prev = f64::NEG_INFINITY;
        for pl in (0..180).map(f64::from) {
            let p = ul_tx_power(pl, &cfg);
            assert!(p >= prev);
            assert!(p <= cfg.ue_max_power_dbm);
            prev = p;
        }
    }

    #[test]
    fn step_emits_dl_on_downlink_tti() {
        let mut cell = backlogged_cell(2);
        let w = window(50.0, 0.6);
        let cfg = LteConfig::default();
        let txs = lte_step(&mut cell, 0, &w, &cfg, &[90.0, 90.0]);
        assert_eq!(txs.len(), 1, "one full-band downlink transmission");
        assert_eq!(txs[0].band_fraction, 1.0);
        assert_eq!(txs[0].tx, cell.bs);
        assert_eq!(txs[0].end - txs[0].start, NANOS_PER_MILLI);
    }

    #[test]
    fn step_emits_equal_share_ul_on_uplink_tti() {
        let mut cell = backlogged_cell(2);
        let w = window(50.0, 0.6);
        let cfg = LteConfig::default();
        // Default pattern is DDUDDDDUDD: the TTI at 2 ms is uplink.
        let txs = lte_step(&mut cell, ms(2.0), &w, &cfg, &[90.0, 100.0]);
        assert_eq!(txs.len(), 2, "two half-band uplink transmissions");
        for t in &txs {
            assert_eq!(t.band_fraction, 0.5);
            assert_eq!(t.rx, Some(cell.bs));
        }
        assert_eq!(txs[0].tx_power_dbm, -16.0);
        assert_eq!(txs[1].tx_power_dbm, -6.0);
    }

    #[test]
    fn step_is_silent_during_off_window() {
        let mut cell = backlogged_cell(2);
        let w = window(50.0, 0.6);
        let cfg = LteConfig::default();
        assert!(lte_step(&mut cell, ms(30.0), &w, &cfg, &[90.0, 90.0]).is_empty());
        assert!(lte_step(&mut cell, ms(45.0), &w, &cfg, &[90.0, 90.0]).is_empty());
    }

    #[test]
    fn step_never_straddles_the_duty_edge() {
        // A 0.57 on-fraction puts the edge at 28.5 ms, mid-TTI: the TTI at
        // 28 ms must not be emitted.
        let mut cell = backlogged_cell(1);
        let w = window(50.0, 0.57);
        let cfg = LteConfig::default();
        assert!(is_lte_on(ms(28.0), &w));
        assert!(lte_step(&mut cell, ms(28.0), &w, &cfg, &[90.0]).is_empty());
        assert_eq!(lte_step(&mut cell, ms(27.0), &w, &cfg, &[90.0]).len(), 1);
    }

    #[test]
    fn tdd_pattern_maps_ttis() {
        let cfg = LteConfig {
            tdd_pattern: "DUDUDUDUDU".into(),
            ..LteConfig::default()
        };
        assert_eq!(cfg.subframe_kind(0), SubframeKind::Downlink);
        assert_eq!(cfg.subframe_kind(ms(1.0)), SubframeKind::Uplink);
        assert_eq!(cfg.subframe_kind(ms(12.0)), SubframeKind::Downlink);
    }

    #[test]
    fn saturated_on_airtime_matches_duty_fraction() {
        // Walk every TTI over one second with saturated queues and count
        // emitted airtime: 60% duty of 50 ms periods is exactly 0.6 s.
        let mut cell = backlogged_cell(3);
        let w = window(50.0, 0.6);
        let cfg = LteConfig::default();
        let tti = cfg.tti();
        let mut on: Nanos = 0;
        let mut t = 0;
        while t < crate::units::NANOS_PER_SEC {
            let txs = lte_step(&mut cell, t, &w, &cfg, &[90.0, 90.0, 90.0]);
            if !txs.is_empty() {
                on += tti;
            }
            t += tti;
        }
        let frac = on as f64 / crate::units::NANOS_PER_SEC as f64;
        assert!((frac - 0.6).abs() < 0.001, "airtime fraction {frac}");
    }
}
