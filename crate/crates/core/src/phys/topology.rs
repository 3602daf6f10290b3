//! Network geometry and UAV mobility constraints.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

/// Relative slack applied when checking the mobility constraints, so that a
/// position produced by an exact radial clamp is not flagged by rounding.
const CONSTRAINT_SLACK: f64 = 1e-9;

/// Static geometry of one scenario: users, the central unit and the bounds
/// that every UAV must respect.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkTopology {
    /// Ground users, `z = 0`.
    pub user_positions: Vec<Vec3>,
    pub cu_position: Vec3,
    pub num_antennas: usize,
    pub num_uavs: usize,
    pub uav_altitude: f64,
    /// Reflecting elements per UAV.
    pub num_elements: usize,
    /// Element spacing in wavelengths.
    pub element_spacing: f64,
    pub coverage_radius: f64,
    pub min_uav_separation: f64,
    pub max_speed: f64,
    pub slot_duration: f64,
}

impl NetworkTopology {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.user_positions.is_empty() {
            return bad("at least one user is required");
        }
        if self.user_positions.iter().any(|p| p[2] != 0.0 || !p.iter().all(|v| v.is_finite())) {
            return bad("user positions must be finite and lie on the ground (z = 0)");
        }
        if self.cu_position[2] < 0.0 || !self.cu_position.iter().all(|v| v.is_finite()) {
            return bad("central unit must be finite with z >= 0");
        }
        if self.num_antennas == 0 || self.num_uavs == 0 || self.num_elements == 0 {
            return bad("antenna, UAV and element counts must be positive");
        }
        if !(self.coverage_radius > 0.0
            && self.min_uav_separation > 0.0
            && self.max_speed > 0.0
            && self.slot_duration > 0.0
            && self.element_spacing > 0.0)
        {
            return bad("coverage radius, separation, speed, slot duration and spacing must be positive");
        }
        if !(self.uav_altitude >= 0.0 && self.uav_altitude < self.coverage_radius) {
            return bad("UAV altitude must be non-negative and below the coverage radius");
        }
        Ok(())
    }

    pub fn num_users(&self) -> usize {
        self.user_positions.len()
    }

    /// Largest horizontal displacement in one slot, `v_max * delta`.
    pub fn max_step(&self) -> f64 {
        self.max_speed * self.slot_duration
    }

    /// Coverage is checked on the full 3-D norm, so at a fixed altitude the
    /// horizontal position is confined to this radius.
    pub fn horizontal_radius(&self) -> f64 {
        (self.coverage_radius.powi(2) - self.uav_altitude.powi(2)).sqrt()
    }

    pub fn distance_to_cu(&self, p: Vec3) -> f64 {
        dist3(p, self.cu_position)
    }
}

pub fn dist3(a: Vec3, b: Vec3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Horizontal UAV positions for one slot; the altitude is shared and fixed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UavPose {
    pub positions: Vec<[f64; 2]>,
    pub altitude: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum MobilityViolation {
    /// C1: per-slot displacement exceeds `v_max * delta`.
    Step { uav: usize, distance: f64 },
    /// C2: two UAVs closer than the minimum separation.
    Separation { a: usize, b: usize, distance: f64 },
    /// C3: UAV outside the coverage radius.
    Coverage { uav: usize, norm: f64 },
}

impl UavPose {
    pub fn num_uavs(&self) -> usize {
        self.positions.len()
    }

    pub fn position(&self, j: usize) -> Vec3 {
        let [x, y] = self.positions[j];
        [x, y, self.altitude]
    }

    /// C2 and C3 for a single pose.
    pub fn violations(&self, topo: &NetworkTopology) -> Vec<MobilityViolation> {
        let mut out = Vec::new();
        let r2 = topo.coverage_radius.powi(2) * (1.0 + CONSTRAINT_SLACK);
        for j in 0..self.num_uavs() {
            let q = self.position(j);
            let n2 = q[0] * q[0] + q[1] * q[1] + q[2] * q[2];
            if n2 > r2 {
                out.push(MobilityViolation::Coverage { uav: j, norm: n2.sqrt() });
            }
        }
        let dmin2 = topo.min_uav_separation.powi(2) * (1.0 - CONSTRAINT_SLACK);
        for a in 0..self.num_uavs() {
            for b in a + 1..self.num_uavs() {
                let d2 = horizontal_dist2(self.positions[a], self.positions[b]);
                if d2 < dmin2 {
                    out.push(MobilityViolation::Separation { a, b, distance: d2.sqrt() });
                }
            }
        }
        out
    }
}

fn horizontal_dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// C1–C3 for a transition `prev -> next`.
pub fn check_move(topo: &NetworkTopology, prev: &UavPose, next: &UavPose) -> Vec<MobilityViolation> {
    let mut out = Vec::new();
    let step2 = topo.max_step().powi(2) * (1.0 + CONSTRAINT_SLACK);
    for j in 0..next.num_uavs() {
        let d2 = horizontal_dist2(prev.positions[j], next.positions[j]);
        if d2 > step2 {
            out.push(MobilityViolation::Step { uav: j, distance: d2.sqrt() });
        }
    }
    out.extend(next.violations(topo));
    out
}

/// Applies requested per-UAV displacements and projects the result back onto
/// the feasible set.
///
/// Each displacement is first clamped to the step radius (C1), the target is
/// then pulled radially toward the origin onto the coverage disc (C3). Pairs
/// that end up closer than the minimum separation (C2) both keep their
/// previous positions; pairs are scanned in index order and the scan repeats
/// until no conflict remains, which terminates because the previous pose is
/// feasible.
pub fn project_uav_move(topo: &NetworkTopology, prev: &UavPose, deltas: &[[f64; 2]]) -> Result<UavPose> {
    if deltas.len() != prev.num_uavs() {
        return Err(Error::Dimension(format!(
            "{} displacements for {} UAVs",
            deltas.len(),
            prev.num_uavs()
        )));
    }
    if deltas.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("UAV displacement"));
    }
    let max_step = topo.max_step();
    let r_h = topo.horizontal_radius();
    let mut next: Vec<[f64; 2]> = prev
        .positions
        .iter()
        .zip(deltas)
        .map(|(p, d)| {
            let norm = (d[0] * d[0] + d[1] * d[1]).sqrt();
            let scale = if norm > max_step { max_step / norm } else { 1.0 };
            let mut q = [p[0] + d[0] * scale, p[1] + d[1] * scale];
            let r = (q[0] * q[0] + q[1] * q[1]).sqrt();
            if r > r_h {
                q = [q[0] * r_h / r, q[1] * r_h / r];
            }
            q
        })
        .collect();

    let dmin2 = topo.min_uav_separation.powi(2) * (1.0 - CONSTRAINT_SLACK);
    let mut held = vec![false; next.len()];
    loop {
        let mut changed = false;
        for a in 0..next.len() {
            for b in a + 1..next.len() {
                if horizontal_dist2(next[a], next[b]) < dmin2 {
                    for j in [a, b] {
                        if !held[j] {
                            held[j] = true;
                            next[j] = prev.positions[j];
                            changed = true;
                        }
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    Ok(UavPose { positions: next, altitude: prev.altitude })
}
