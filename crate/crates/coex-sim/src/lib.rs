//! Discrete-event simulator of coexisting duty-cycled LTE-U and WiFi
//! networks sharing one 20 MHz channel at 3.5 GHz, modeling a smart-grid
//! metering deployment: meters are WiFi stations, collectors are
//! integrated WiFi-AP/LTE-BS nodes, and the metering head-end is an LTE
//! UE.
//!
//! LTE transmits on a fixed duty cycle of a 50 ms period without sensing;
//! WiFi contends with CSMA/CA and defers whenever in-band energy crosses
//! its detection thresholds. A Shannon-capacity PHY abstraction at OFDM
//! symbol granularity turns SINR into delivered bits. Runs are
//! deterministic per (scenario, seed).

pub mod channel;
pub mod engine;
pub mod lte;
pub mod metrics;
pub mod phy;
pub mod scenario;
pub mod sweep;
pub mod topology;
pub mod traffic;
pub mod units;
pub mod wifi;

pub use channel::{
    build_gain_matrix, path_loss, sinr, GainMatrix, PropagationConfig, Tech, Transmission,
};
pub use engine::{run, run_with_trace, snapshot_active, SimError};
pub use metrics::{aggregate_throughput, empirical_cdf, RunMetrics};
pub use scenario::{Scenario, ScenarioError};
pub use sweep::{run_sweep, SweepResult};
pub use topology::{build_deployment, distance, Deployment, Node, NodeId, Position, Role};
pub use units::Nanos;
