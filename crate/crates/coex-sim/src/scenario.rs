//! Scenario configuration: every knob of one run, JSON-serializable, with
//! validation that reports each offending key.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::PropagationConfig;
use crate::lte::{DutyCycleConfig, LteConfig};
use crate::topology::NUM_CELLS;
use crate::traffic::TrafficConfig;
use crate::wifi::WifiConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeploymentConfig {
    pub cell_radius_m: f64,
    pub n_sta: usize,
    pub n_ue: usize,
    pub min_dist_m: f64,
}

impl Default for DeploymentConfig {
    fn default() -> Self {
        DeploymentConfig {
            cell_radius_m: 12.0,
            n_sta: 10,
            n_ue: 10,
            min_dist_m: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub deployment: DeploymentConfig,
    pub propagation: PropagationConfig,
    pub traffic: TrafficConfig,
    pub lte: LteConfig,
    pub wifi: WifiConfig,
    pub duty: DutyCycleConfig,
    pub horizon_s: f64,
    pub seed: u64,
    /// Weight SINR distributions by sample airtime (in OFDM symbols)
    /// instead of counting one entry per sample.
    pub sinr_duration_weighted: bool,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            deployment: DeploymentConfig::default(),
            propagation: PropagationConfig::default(),
            traffic: TrafficConfig::default(),
            lte: LteConfig::default(),
            wifi: WifiConfig::default(),
            duty: DutyCycleConfig::default(),
            horizon_s: 10.0,
            seed: 1,
            sinr_duration_weighted: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scenario:\n{}", .0.join("\n"))]
    Invalid(Vec<String>),
}

impl Scenario {
    pub fn from_json(json: &str) -> Result<Self, ScenarioError> {
        let scn: Scenario = serde_json::from_str(json)?;
        Ok(scn)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ScenarioError> {
        Scenario::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Check every semantic constraint, returning one message per
    /// offending key. NaN and infinite values fail their checks.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let pos = |x: f64| x.is_finite() && x > 0.0;
        let non_neg = |x: f64| x.is_finite() && x >= 0.0;

        let mut errs = Vec::new();
        let d = &self.deployment;
        if !pos(d.cell_radius_m) {
            errs.push(format!(
                "deployment.cell_radius_m: must be > 0, got {}",
                d.cell_radius_m
            ));
        }
        if d.n_sta < 1 {
            errs.push("deployment.n_sta: must be >= 1".into());
        }
        if d.n_ue < 1 {
            errs.push("deployment.n_ue: must be >= 1".into());
        }
        let min_dist_ok = non_neg(d.min_dist_m) && d.min_dist_m < d.cell_radius_m;
        if !min_dist_ok {
            errs.push(format!(
                "deployment.min_dist_m: must satisfy 0 <= min_dist < cell_radius, got {}",
                d.min_dist_m
            ));
        }

        let p = &self.propagation;
        if !pos(p.bandwidth_hz) {
            errs.push(format!(
                "propagation.bandwidth_hz: must be > 0, got {}",
                p.bandwidth_hz
            ));
        }
        if !non_neg(p.shadowing_sigma_db) {
            errs.push(format!(
                "propagation.shadowing_sigma_db: must be >= 0, got {}",
                p.shadowing_sigma_db
            ));
        }

        let t = &self.traffic;
        if !pos(t.lambda_per_s) {
            errs.push(format!(
                "traffic.lambda_per_s: must be > 0, got {}",
                t.lambda_per_s
            ));
        }
        if t.payload_bits == 0 {
            errs.push("traffic.payload_bits: must be > 0".into());
        }

        let l = &self.lte;
        if !pos(l.tti_ms) {
            errs.push(format!("lte.tti_ms: must be > 0, got {}", l.tti_ms));
        }
        let ttis_per_frame = l.frame_ms / l.tti_ms;
        if !pos(l.tti_ms) || (ttis_per_frame - ttis_per_frame.round()).abs() > 1e-9 {
            errs.push(format!(
                "lte.frame_ms: must be a whole number of TTIs, got {} / {}",
                l.frame_ms, l.tti_ms
            ));
        } else if l.tdd_pattern.len() != ttis_per_frame.round() as usize {
            errs.push(format!(
                "lte.tdd_pattern: length {} does not match {} TTIs per frame",
                l.tdd_pattern.len(),
                ttis_per_frame.round()
            ));
        }
        if !l.tdd_pattern.bytes().all(|b| b == b'D' || b == b'U') {
            errs.push(format!(
                "lte.tdd_pattern: only 'D' and 'U' are allowed, got {:?}",
                l.tdd_pattern
            ));
        }
        let tpc_ordered =
            l.p0_dbm.is_finite() && l.ue_max_power_dbm.is_finite() && l.p0_dbm < l.ue_max_power_dbm;
        if !tpc_ordered {
            errs.push(format!(
                "lte.p0_dbm: must be below ue_max_power_dbm, got {} >= {}",
                l.p0_dbm, l.ue_max_power_dbm
            ));
        }

        let w = &self.wifi;
        let cca_ordered =
            w.cca_cs_dbm.is_finite() && w.cca_ed_dbm.is_finite() && w.cca_cs_dbm < w.cca_ed_dbm;
        if !cca_ordered {
            errs.push(format!(
                "wifi.cca_cs_dbm: carrier sense must sit below energy detection, got {} >= {}",
                w.cca_cs_dbm, w.cca_ed_dbm
            ));
        }
        if !pos(w.slot_us) {
            errs.push(format!("wifi.slot_us: must be > 0, got {}", w.slot_us));
        }
        if !pos(w.ofdm_symbol_us) {
            errs.push(format!(
                "wifi.ofdm_symbol_us: must be > 0, got {}",
                w.ofdm_symbol_us
            ));
        }
        let max_airtime_ok = pos(w.max_airtime_ms) && w.max_airtime_ms * 1000.0 >= w.ofdm_symbol_us;
        if !max_airtime_ok {
            errs.push(format!(
                "wifi.max_airtime_ms: must hold at least one OFDM symbol, got {}",
                w.max_airtime_ms
            ));
        }
        if !pos(w.phy_rate_mbps) {
            errs.push(format!(
                "wifi.phy_rate_mbps: must be > 0, got {}",
                w.phy_rate_mbps
            ));
        }
        if !pos(w.beacon_interval_ms) {
            errs.push(format!(
                "wifi.beacon_interval_ms: must be > 0, got {}",
                w.beacon_interval_ms
            ));
        }
        if w.beacon_window == 0 {
            errs.push("wifi.beacon_window: must be >= 1".into());
        }
        if !(0.0..=100.0).contains(&w.beacon_err_ratio_pct) {
            errs.push(format!(
                "wifi.beacon_err_ratio_pct: must be within [0, 100], got {}",
                w.beacon_err_ratio_pct
            ));
        }

        let duty = &self.duty;
        if !pos(duty.period_ms) {
            errs.push(format!(
                "duty.period_ms: must be > 0, got {}",
                duty.period_ms
            ));
        }
        if !(pos(duty.on_fraction) && duty.on_fraction <= 1.0) {
            errs.push(format!(
                "duty.on_fraction: must be in (0, 1], got {}",
                duty.on_fraction
            ));
        }
        if !duty.cell_phase_ms.is_empty() && duty.cell_phase_ms.len() != NUM_CELLS {
            errs.push(format!(
                "duty.cell_phase_ms: expected {} entries or none, got {}",
                NUM_CELLS,
                duty.cell_phase_ms.len()
            ));
        }

        if !non_neg(self.horizon_s) {
            errs.push(format!("horizon_s: must be >= 0, got {}", self.horizon_s));
        }

        if errs.is_empty() {
            Ok(())
        } else {
            Err(ScenarioError::Invalid(errs))
        }
    }
}
