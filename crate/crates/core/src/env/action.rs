//! Action encodings: the factorized discrete assignment and the boxed
//! continuous controls, plus their decoding into a feasible decision.

use std::f64::consts::PI;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phys::ReflectionConfig;
use crate::scenario::{PhaseMode, ScenarioConfig};

/// Number of choices per sub-carrier: every `Q`-subset of the pool, every
/// singleton, and the empty set.
pub fn subset_count(pool: usize, q: usize) -> usize {
    binomial(pool, q) + pool + 1
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

/// Lexicographic `k`-subsets of `0..n`.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if k <= n {
        rec(0, n, k, &mut Vec::with_capacity(k), &mut out);
    }
    out
}

/// Age-ranked candidate pool and the per-sub-carrier choice table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CandidateTable {
    /// User indices, oldest first.
    pub candidates: Vec<usize>,
    /// Each entry lists positions into `candidates`.
    pub subsets: Vec<Vec<usize>>,
}

impl CandidateTable {
    pub fn len(&self) -> usize {
        self.subsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsets.is_empty()
    }

    /// User indices selected by choice `index`.
    pub fn users(&self, index: usize) -> impl Iterator<Item = usize> + '_ {
        self.subsets[index].iter().map(|&c| self.candidates[c])
    }

    /// Index of the empty choice.
    pub fn empty_index(&self) -> usize {
        self.subsets.len() - 1
    }

    /// Assignment matrix for one choice index per sub-carrier.
    pub fn decode(&self, choices: &[usize], num_users: usize) -> Result<Array2<bool>> {
        let mut a = Array2::from_elem((num_users, choices.len()), false);
        for (n, &c) in choices.iter().enumerate() {
            if c >= self.len() {
                return Err(Error::InvalidArgument(format!("choice {c} out of {} on sub-carrier {n}", self.len())));
            }
            for u in self.users(c) {
                a[[u, n]] = true;
            }
        }
        Ok(a)
    }
}

/// Ranks users with queued data ahead of idle ones, then by age, oldest first
/// with ties to the lower index, and builds the choice table over the top
/// `width` of them.
pub fn encode_discrete(age_slots: &[u64], backlog: &[u64], width: usize, cluster_size: usize) -> CandidateTable {
    let mut ranked: Vec<usize> = (0..age_slots.len()).collect();
    ranked.sort_by(|&a, &b| {
        (backlog[b] > 0).cmp(&(backlog[a] > 0)).then(age_slots[b].cmp(&age_slots[a])).then(a.cmp(&b))
    });
    ranked.truncate(width.min(age_slots.len()));
    let pool = ranked.len();
    let mut subsets = combinations(pool, cluster_size);
    subsets.extend((0..pool).map(|c| vec![c]));
    subsets.push(Vec::new());
    debug_assert_eq!(subsets.len(), subset_count(pool, cluster_size));
    CandidateTable { candidates: ranked, subsets }
}

/// Which continuous controls a policy owns and where they sit in the flat
/// action vector: UAV displacements, then reflection (phases, amplitude),
/// then powers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContinuousLayout {
    pub num_uavs: usize,
    pub num_elements: usize,
    pub num_users: usize,
    pub num_subcarriers: usize,
    pub phase_mode: PhaseMode,
    pub uav: bool,
    pub reflection: bool,
    pub power: bool,
}

impl ContinuousLayout {
    pub fn full(cfg: &ScenarioConfig) -> Self {
        Self {
            num_uavs: cfg.num_uavs,
            num_elements: cfg.num_elements,
            num_users: cfg.num_users,
            num_subcarriers: cfg.num_subcarriers,
            phase_mode: cfg.phase_mode,
            uav: true,
            reflection: true,
            power: true,
        }
    }

    pub fn phase_dims(&self) -> usize {
        match self.phase_mode {
            PhaseMode::Linear => 2,
            PhaseMode::PerElement => self.num_elements,
        }
    }

    fn uav_dims(&self) -> usize {
        if self.uav {
            2 * self.num_uavs
        } else {
            0
        }
    }

    fn reflection_dims(&self) -> usize {
        if self.reflection {
            self.num_uavs * (self.phase_dims() + 1)
        } else {
            0
        }
    }

    fn power_dims(&self) -> usize {
        if self.power {
            self.num_users * self.num_subcarriers
        } else {
            0
        }
    }

    pub fn dim(&self) -> usize {
        self.uav_dims() + self.reflection_dims() + self.power_dims()
    }
}

/// Continuous controls with every component in `[-1, 1]`. Parts the policy
/// does not own are empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuousAction {
    pub uav: Vec<[f64; 2]>,
    /// Per UAV: two linear-phase parameters or one value per element.
    pub phase: Vec<Vec<f64>>,
    pub amplitude: Vec<f64>,
    /// `U x N`, or `0 x 0` when not owned.
    pub power: Array2<f64>,
}

impl ContinuousAction {
    pub fn from_flat(layout: &ContinuousLayout, raw: &[f64]) -> Result<Self> {
        if raw.len() != layout.dim() {
            return Err(Error::Dimension(format!("{} continuous values for layout of {}", raw.len(), layout.dim())));
        }
        if raw.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("continuous action"));
        }
        if raw.iter().any(|x| x.abs() > 1.0) {
            return Err(Error::InvalidArgument("continuous action outside [-1, 1]".into()));
        }
        let mut it = raw.iter().copied();
        let mut take = |k: usize| -> Vec<f64> { (&mut it).take(k).collect() };
        let uav = if layout.uav {
            take(2 * layout.num_uavs).chunks(2).map(|c| [c[0], c[1]]).collect()
        } else {
            Vec::new()
        };
        let (phase, amplitude) = if layout.reflection {
            let pd = layout.phase_dims();
            let phase = (0..layout.num_uavs).map(|_| take(pd)).collect();
            (phase, take(layout.num_uavs))
        } else {
            (Vec::new(), Vec::new())
        };
        let power = if layout.power {
            Array2::from_shape_vec((layout.num_users, layout.num_subcarriers), take(layout.power_dims()))
                .expect("sized by layout")
        } else {
            Array2::zeros((0, 0))
        };
        Ok(Self { uav, phase, amplitude, power })
    }
}

/// Decoded pieces of a decision; `None` where the layout does not own the
/// control.
#[derive(Clone, Debug, PartialEq)]
pub struct DecodedControls {
    pub uav_delta: Option<Vec<[f64; 2]>>,
    pub reflection: Option<ReflectionConfig>,
    pub power: Option<Array2<f64>>,
}

pub fn wrap_phase(theta: f64) -> f64 {
    theta.rem_euclid(2.0 * PI)
}

/// Maps boxed controls to physical values: displacements scaled by the step
/// radius, linear or per-element phases, amplitudes in `[min_amplitude, 1]`,
/// and powers `P_mask * (1 + x) / 2` on assigned pairs, rescaled per user to
/// fit the total budget.
pub fn decode_continuous(
    action: &ContinuousAction,
    layout: &ContinuousLayout,
    cfg: &ScenarioConfig,
    assignment: &Array2<bool>,
) -> DecodedControls {
    let d = cfg.max_step();
    let uav_delta = layout.uav.then(|| action.uav.iter().map(|v| [v[0] * d, v[1] * d]).collect());
    let reflection = layout.reflection.then(|| {
        let (j_n, l_n) = (layout.num_uavs, layout.num_elements);
        let mut refl = ReflectionConfig::uniform(j_n, l_n, 1.0, 0.0);
        for j in 0..j_n {
            let beta = cfg.min_amplitude + (1.0 - cfg.min_amplitude) * (1.0 + action.amplitude[j]) / 2.0;
            for l in 0..l_n {
                refl.amplitude[[j, l]] = beta;
                refl.phase[[j, l]] = match layout.phase_mode {
                    PhaseMode::Linear => wrap_phase(PI * action.phase[j][0] + PI * action.phase[j][1] * l as f64),
                    PhaseMode::PerElement => wrap_phase(PI * (1.0 + action.phase[j][l])),
                };
            }
        }
        refl
    });
    let power = layout.power.then(|| {
        let limits = cfg.limits();
        let (users, n_sc) = assignment.dim();
        let mut p = Array2::zeros((users, n_sc));
        for u in 0..users {
            for n in 0..n_sc {
                if assignment[[u, n]] {
                    p[[u, n]] = limits.power_mask[n] * (1.0 + action.power[[u, n]]) / 2.0;
                }
            }
            let total: f64 = p.row(u).sum();
            if total > limits.max_power {
                let s = limits.max_power / total;
                p.row_mut(u).mapv_inplace(|x| x * s);
            }
        }
        p
    });
    DecodedControls { uav_delta, reflection, power }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::profiles::desk_scenario;
    use crate::noma::{validate_decision, LinkDecision};
    use crate::rng::{stream_rng, Stream};
    use rand::Rng;

    #[test]
    fn choice_table_sizes() {
        assert_eq!(subset_count(2, 2), 4);
        assert_eq!(subset_count(6, 2), 22);
        assert_eq!(encode_discrete(&[1, 2], &[1, 1], 2, 2).len(), 4);
        assert_eq!(encode_discrete(&[1; 8], &[0; 8], 6, 2).len(), 22);
    }

    #[test]
    fn candidates_ranked_by_age_then_index() {
        let t = encode_discrete(&[3, 7, 3, 9, 1], &[1; 5], 3, 2);
        assert_eq!(t.candidates, vec![3, 1, 0]);
        assert_eq!(t.subsets[0], vec![0, 1]);
        assert!(t.subsets[t.empty_index()].is_empty());
        assert_eq!(t.users(0).collect::<Vec<_>>(), vec![3, 1]);
        // Idle users fall behind every user with queued data.
        let t = encode_discrete(&[3, 7, 3, 9, 1], &[1, 0, 1, 0, 1], 4, 2);
        assert_eq!(t.candidates, vec![0, 2, 4, 3]);
    }

    #[test]
    fn decoded_assignments_satisfy_cluster_limit() {
        let mut cfg = desk_scenario();
        cfg.num_users = 8;
        cfg.num_subcarriers = 3;
        let limits = cfg.limits();
        let mut rng = stream_rng(1, Stream::Oracle, 0);
        for _ in 0..10_000 {
            let ages: Vec<u64> = (0..8).map(|_| rng.gen_range(1..50)).collect();
            let backlog: Vec<u64> = (0..8).map(|_| rng.gen_range(0..2)).collect();
            let t = encode_discrete(&ages, &backlog, cfg.candidate_width, cfg.cluster_size);
            let choices: Vec<usize> = (0..3).map(|_| rng.gen_range(0..t.len())).collect();
            let mut d = LinkDecision::idle(8, 3, ReflectionConfig::uniform(cfg.num_uavs, cfg.num_elements, 1.0, 0.0));
            d.assignment = t.decode(&choices, 8).unwrap();
            assert!(validate_decision(&d, &limits).is_ok());
        }
    }

    fn action_for(layout: &ContinuousLayout, value: f64) -> ContinuousAction {
        ContinuousAction::from_flat(layout, &vec![value; layout.dim()]).unwrap()
    }

    #[test]
    fn midpoint_powers_without_rescale() {
        let mut cfg = desk_scenario();
        cfg.num_users = 1;
        cfg.power_mask_dbm = 5.0;
        cfg.max_power_dbm = 20.0;
        let layout = ContinuousLayout::full(&cfg);
        let assignment = Array2::from_elem((1, 2), true);
        let out = decode_continuous(&action_for(&layout, 0.0), &layout, &cfg, &assignment);
        let p = out.power.unwrap();
        let mask = cfg.limits().power_mask[0];
        assert!((p[[0, 0]] - mask / 2.0).abs() < 1e-15);
        assert_eq!(p[[0, 0]], p[[0, 1]]);
    }

    #[test]
    fn oversubscribed_powers_rescale_to_budget() {
        let mut cfg = desk_scenario();
        cfg.num_users = 1;
        cfg.power_mask_dbm = 10.0;
        cfg.max_power_dbm = 10.0;
        let layout = ContinuousLayout::full(&cfg);
        let assignment = Array2::from_elem((1, 2), true);
        let out = decode_continuous(&action_for(&layout, 1.0), &layout, &cfg, &assignment);
        let p = out.power.unwrap();
        let limits = cfg.limits();
        // Unscaled the user would draw 2 * P_max.
        assert!((p[[0, 0]] - 0.5 * limits.power_mask[0]).abs() < 1e-15);
        assert!((p.row(0).sum() - limits.max_power).abs() < 1e-15);
    }

    #[test]
    fn decoded_reflection_is_in_range() {
        let cfg = desk_scenario();
        let layout = ContinuousLayout::full(&cfg);
        let mut rng = stream_rng(2, Stream::Oracle, 0);
        for _ in 0..200 {
            let raw: Vec<f64> = (0..layout.dim()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            let a = ContinuousAction::from_flat(&layout, &raw).unwrap();
            let assignment = Array2::from_elem((cfg.num_users, cfg.num_subcarriers), false);
            let out = decode_continuous(&a, &layout, &cfg, &assignment);
            let mut d = LinkDecision::idle(cfg.num_users, cfg.num_subcarriers, out.reflection.unwrap());
            d.power = out.power.unwrap();
            assert!(validate_decision(&d, &cfg.limits()).is_ok());
            for v in out.uav_delta.unwrap() {
                assert!(v[0].abs() <= cfg.max_step() && v[1].abs() <= cfg.max_step());
            }
        }
    }

    #[test]
    fn from_flat_rejects_bad_input() {
        let cfg = desk_scenario();
        let layout = ContinuousLayout::full(&cfg);
        assert!(matches!(ContinuousAction::from_flat(&layout, &[0.0]), Err(Error::Dimension(_))));
        let mut raw = vec![0.0; layout.dim()];
        raw[3] = f64::NAN;
        assert!(matches!(ContinuousAction::from_flat(&layout, &raw), Err(Error::NonFinite(_))));
    }

    #[test]
    fn layout_dims_follow_owned_parts() {
        let cfg = desk_scenario();
        let mut layout = ContinuousLayout::full(&cfg);
        let (j, u, n) = (cfg.num_uavs, cfg.num_users, cfg.num_subcarriers);
        assert_eq!(layout.dim(), 2 * j + 3 * j + u * n);
        layout.power = false;
        layout.uav = false;
        assert_eq!(layout.dim(), 3 * j);
        layout.phase_mode = PhaseMode::PerElement;
        assert_eq!(layout.dim(), j * (cfg.num_elements + 1));
    }
}
