//! Comparison policies: the variants differ only in where each part of the
//! decision comes from.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::phys::ReflectionConfig;

/// Amplitude used to switch the reflecting arrays off.
pub const NULL_AMPLITUDE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    /// Learned assignment, powers, reflection and trajectory.
    Ours,
    /// Reflection nulled; everything else learned.
    NoRis,
    /// Random-walk UAVs; everything else learned.
    RandomTraj,
    /// Deferred-acceptance assignment at uniform power; trajectory and
    /// reflection learned.
    Matching,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [PolicyKind::Ours, PolicyKind::NoRis, PolicyKind::RandomTraj, PolicyKind::Matching];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Ours => "ours",
            PolicyKind::NoRis => "no-ris",
            PolicyKind::RandomTraj => "random-traj",
            PolicyKind::Matching => "matching",
        }
    }

    pub fn learns_uav(self) -> bool {
        self != PolicyKind::RandomTraj
    }

    pub fn learns_reflection(self) -> bool {
        self != PolicyKind::NoRis
    }

    pub fn learns_power(self) -> bool {
        self != PolicyKind::Matching
    }

    pub fn learns_assignment(self) -> bool {
        self != PolicyKind::Matching
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        PolicyKind::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown policy {s:?}")))
    }
}

pub fn null_reflection(num_uavs: usize, num_elements: usize) -> ReflectionConfig {
    ReflectionConfig::uniform(num_uavs, num_elements, NULL_AMPLITUDE, 0.0)
}

/// Displacement uniform over the disc of radius `max_step`.
pub fn random_step<R: Rng + ?Sized>(max_step: f64, rng: &mut R) -> [f64; 2] {
    let r = max_step * rng.gen::<f64>().sqrt();
    let phi = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
    [r * phi.cos(), r * phi.sin()]
}

/// Many-to-one matching of users to sub-carriers.
///
/// Users propose in the order of their own preference lists; each
/// sub-carrier keeps the `capacity` proposers it ranks highest, where
/// `priority[u]` larger is better and ties go to the lower index.
pub fn deferred_acceptance(prefs: &[Vec<usize>], priority: &[f64], num_subcarriers: usize, capacity: usize) -> Vec<Option<usize>> {
    let users = prefs.len();
    let better = |a: usize, b: usize| priority[a] > priority[b] || (priority[a] == priority[b] && a < b);
    let mut next = vec![0usize; users];
    let mut held: Vec<Vec<usize>> = vec![Vec::new(); num_subcarriers];
    let mut free: Vec<usize> = (0..users).rev().collect();
    while let Some(u) = free.pop() {
        let Some(&n) = prefs[u].get(next[u]) else { continue };
        next[u] += 1;
        held[n].push(u);
        if held[n].len() > capacity {
            let worst = (0..held[n].len())
                .reduce(|w, i| if better(held[n][w], held[n][i]) { i } else { w })
                .expect("non-empty");
            free.push(held[n].swap_remove(worst));
        }
    }
    let mut out = vec![None; users];
    for (n, list) in held.iter().enumerate() {
        for &u in list {
            out[u] = Some(n);
        }
    }
    out
}

/// Pairs `(u, n)` that would both rather be matched to each other.
pub fn blocking_pairs(
    prefs: &[Vec<usize>],
    priority: &[f64],
    capacity: usize,
    matching: &[Option<usize>],
) -> Vec<(usize, usize)> {
    let better = |a: usize, b: usize| priority[a] > priority[b] || (priority[a] == priority[b] && a < b);
    let num_sc = prefs.iter().flatten().copied().max().map_or(0, |m| m + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); num_sc];
    for (u, m) in matching.iter().enumerate() {
        if let Some(n) = m {
            members[*n].push(u);
        }
    }
    let mut out = Vec::new();
    for (u, list) in prefs.iter().enumerate() {
        let rank_of = |n: usize| list.iter().position(|&x| x == n);
        let current = matching[u].and_then(rank_of).unwrap_or(usize::MAX);
        for (rank, &n) in list.iter().enumerate() {
            if rank >= current {
                break;
            }
            let open = members[n].len() < capacity;
            if open || members[n].iter().any(|&v| better(u, v)) {
                out.push((u, n));
            }
        }
    }
    out
}

/// Assignment from deferred acceptance: users with queued data propose to
/// sub-carriers in order of decreasing `gains[[u, n]]`; sub-carriers prefer
/// older users.
pub fn matching_assignment(backlog: &[u64], age_slots: &[u64], gains: &Array2<f64>, capacity: usize) -> Array2<bool> {
    let (users, n_sc) = gains.dim();
    let prefs: Vec<Vec<usize>> = (0..users)
        .map(|u| {
            if backlog[u] == 0 {
                return Vec::new();
            }
            let mut order: Vec<usize> = (0..n_sc).collect();
            order.sort_by(|&a, &b| gains[[u, b]].total_cmp(&gains[[u, a]]).then(a.cmp(&b)));
            order
        })
        .collect();
    let priority: Vec<f64> = age_slots.iter().map(|&a| a as f64).collect();
    let matched = deferred_acceptance(&prefs, &priority, n_sc, capacity);
    let mut a = Array2::from_elem((users, n_sc), false);
    for (u, m) in matched.iter().enumerate() {
        if let Some(n) = m {
            a[[u, *n]] = true;
        }
    }
    a
}

/// Uniform per-pair power `min(P_mask, P_max / N)` on assigned pairs.
pub fn uniform_power(assignment: &Array2<bool>, power_mask: &[f64], max_power: f64) -> Array2<f64> {
    let n_sc = assignment.ncols();
    let mut p = Array2::zeros(assignment.raw_dim());
    for ((u, n), &on) in assignment.indexed_iter() {
        if on {
            p[[u, n]] = power_mask[n].min(max_power / n_sc as f64);
        }
    }
    p
}
