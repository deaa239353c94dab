//! Seven-cell collocated deployment with random station and UE drops.
//!
//! One center cell plus a hexagonal ring of six, inter-site distance
//! sqrt(3) x cell radius. Each cell holds one WiFi AP and one LTE BS at the
//! same position (the integrated collector), plus stations and UEs dropped
//! uniformly over the cell disc.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::units::{substream, DOM_TOPOLOGY};

pub type NodeId = usize;

/// Number of cells in the fixed layout.
pub const NUM_CELLS: usize = 7;

/// Placement retries per node before giving up.
const MAX_PLACEMENT_ATTEMPTS: u32 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

/// Euclidean distance in meters.
pub fn distance(a: Position, b: Position) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    WifiAp,
    WifiSta,
    LteBs,
    LteUe,
}

impl Role {
    pub fn is_wifi(self) -> bool {
        matches!(self, Role::WifiAp | Role::WifiSta)
    }

    /// Nominal device power by role (dBm). Actual transmit powers come from
    /// the scenario configuration; this is informational.
    fn nominal_power_dbm(self) -> f64 {
        match self {
            Role::WifiAp | Role::WifiSta => 23.0,
            Role::LteBs => 20.0,
            Role::LteUe => 23.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub role: Role,
    #[serde(rename = "cell")]
    pub cell_id: usize,
    #[serde(flatten)]
    pub pos: Position,
    pub max_tx_power_dbm: f64,
    pub is_mdms: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deployment {
    pub cell_radius_m: f64,
    pub cell_centers: Vec<Position>,
    pub nodes: Vec<Node>,
}

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("invalid deployment parameter: {0}")]
    InvalidParameter(String),
    #[error(
        "placement rejection exceeded {MAX_PLACEMENT_ATTEMPTS} attempts in cell {cell}: \
         min_dist {min_dist} m is too large for cell radius {radius} m"
    )]
    PlacementRejection {
        cell: usize,
        min_dist: f64,
        radius: f64,
    },
}

impl Deployment {
    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// The WiFi AP of a cell.
    pub fn ap_of_cell(&self, cell: usize) -> NodeId {
        self.nodes
            .iter()
            .find(|n| n.cell_id == cell && n.role == Role::WifiAp)
            .expect("every cell has an AP")
            .id
    }

    /// The LTE BS of a cell.
    pub fn bs_of_cell(&self, cell: usize) -> NodeId {
        self.nodes
            .iter()
            .find(|n| n.cell_id == cell && n.role == Role::LteBs)
            .expect("every cell has a BS")
            .id
    }

    /// Node ids of a given role within a cell, ascending.
    pub fn nodes_of_role(&self, cell: usize, role: Role) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter(|n| n.cell_id == cell && n.role == role)
            .map(|n| n.id)
            .collect()
    }
}

/// Build the 7-cell deployment: per cell one AP and one BS at the cell
/// center, `n_sta` stations and `n_ue` UEs uniform over the disc and at
/// least `min_dist` from the center. The lowest-id UE of cell 0 is flagged
/// as the MDMS endpoint. Deterministic for a given seed.
pub fn build_deployment(
    cell_radius: f64,
    n_sta: usize,
    n_ue: usize,
    min_dist: f64,
    rng_seed: u64,
) -> Result<Deployment, TopologyError> {
    if cell_radius <= 0.0 || !cell_radius.is_finite() {
        return Err(TopologyError::InvalidParameter(format!(
            "cell_radius must be positive, got {cell_radius}"
        )));
    }
    if n_sta < 1 || n_ue < 1 {
        return Err(TopologyError::InvalidParameter(format!(
            "n_sta and n_ue must be at least 1, got {n_sta}/{n_ue}"
        )));
    }
    if !(0.0..cell_radius).contains(&min_dist) {
        return Err(TopologyError::InvalidParameter(format!(
            "min_dist must satisfy 0 <= min_dist < cell_radius, got {min_dist}"
        )));
    }

    let isd = 3f64.sqrt() * cell_radius;
    let mut centers = vec![Position { x: 0.0, y: 0.0 }];
    for k in 0..6 {
        let theta = std::f64::consts::FRAC_PI_3 * k as f64;
        centers.push(Position {
            x: isd * theta.cos(),
            y: isd * theta.sin(),
        });
    }

    let mut rng = substream(rng_seed, DOM_TOPOLOGY, 0);
    let mut nodes = Vec::with_capacity(NUM_CELLS * (2 + n_sta + n_ue));
    let mut next_id: NodeId = 0;

    for (cell, &center) in centers.iter().enumerate() {
        for role in [Role::WifiAp, Role::LteBs] {
            nodes.push(Node {
                id: next_id,
                role,
                cell_id: cell,
                pos: center,
                max_tx_power_dbm: role.nominal_power_dbm(),
                is_mdms: false,
            });
            next_id += 1;
        }
        for (role, count) in [(Role::WifiSta, n_sta), (Role::LteUe, n_ue)] {
            for _ in 0..count {
                let pos = drop_in_disc(&mut rng, center, cell_radius, min_dist).ok_or(
                    TopologyError::PlacementRejection {
                        cell,
                        min_dist,
                        radius: cell_radius,
                    },
                )?;
                nodes.push(Node {
                    id: next_id,
                    role,
                    cell_id: cell,
                    pos,
                    max_tx_power_dbm: role.nominal_power_dbm(),
                    is_mdms: false,
                });
                next_id += 1;
            }
        }
    }

    // MDMS: the lowest-id UE of cell 0.
    let mdms = nodes
        .iter()
        .find(|n| n.cell_id == 0 && n.role == Role::LteUe)
        .expect("cell 0 has UEs")
        .id;
    nodes[mdms].is_mdms = true;

    Ok(Deployment {
        cell_radius_m: cell_radius,
        cell_centers: centers,
        nodes,
    })
}

/// Uniform draw over the disc, rejection-resampled until at least
/// `min_dist` from the center.
fn drop_in_disc(
    rng: &mut impl Rng,
    center: Position,
    radius: f64,
    min_dist: f64,
) -> Option<Position> {
    for _ in 0..MAX_PLACEMENT_ATTEMPTS {
        let r = radius * rng.random::<f64>().sqrt();
        let theta = std::f64::consts::TAU * rng.random::<f64>();
        if r >= min_dist {
            return Some(Position {
                x: center.x + r * theta.cos(),
                y: center.y + r * theta.sin(),
            });
        }
    }
    None
}
