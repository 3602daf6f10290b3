//! Power-domain NOMA uplink: decision feasibility, SIC ordering, SINR and
//! achievable rates.

use std::fmt;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phys::{ChannelRealization, ReflectionConfig};

/// Relative slack on the power constraints.
const POWER_SLACK: f64 = 1e-9;

/// One slot's resource allocation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkDecision {
    /// `U x N`; stored as booleans so the assignment is binary by type.
    pub assignment: Array2<bool>,
    /// `U x N`, watts.
    pub power: Array2<f64>,
    pub reflection: ReflectionConfig,
    pub uav_delta: Vec<[f64; 2]>,
}

impl LinkDecision {
    /// No assignment, no power, UAVs at rest.
    pub fn idle(num_users: usize, num_subcarriers: usize, reflection: ReflectionConfig) -> Self {
        let uavs = reflection.num_uavs();
        Self {
            assignment: Array2::from_elem((num_users, num_subcarriers), false),
            power: Array2::zeros((num_users, num_subcarriers)),
            reflection,
            uav_delta: vec![[0.0, 0.0]; uavs],
        }
    }

    pub fn num_users(&self) -> usize {
        self.assignment.nrows()
    }

    pub fn num_subcarriers(&self) -> usize {
        self.assignment.ncols()
    }

    pub fn users_on(&self, n: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_users()).filter(move |&u| self.assignment[[u, n]])
    }

    /// Zeroes the assignment and power of user `u` on every sub-carrier.
    pub fn drop_user(&mut self, u: usize) {
        self.assignment.row_mut(u).fill(false);
        self.power.row_mut(u).fill(0.0);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkLimits {
    /// Users per sub-carrier, `Q`.
    pub cluster_size: usize,
    /// Per sub-carrier power mask in watts; its length fixes `N`.
    pub power_mask: Vec<f64>,
    /// Per-user total power budget in watts.
    pub max_power: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum DecisionViolation {
    Shape(String),
    /// C4
    ClusterSize { subcarrier: usize, users: usize },
    /// C5, assigned pair above the mask or negative.
    PowerMask { user: usize, subcarrier: usize, power: f64 },
    /// C5, power on an unassigned pair.
    UnassignedPower { user: usize, subcarrier: usize, power: f64 },
    /// C6
    PowerBudget { user: usize, total: f64 },
    /// C8
    Phase { uav: usize, element: usize, phase: f64 },
    /// C9
    Amplitude { uav: usize, element: usize, amplitude: f64 },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub violations: Vec<DecisionViolation>,
}

impl ViolationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ViolationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            match v {
                DecisionViolation::Shape(s) => write!(f, "shape: {s}")?,
                DecisionViolation::ClusterSize { subcarrier, users } => {
                    write!(f, "C4: sub-carrier {subcarrier} carries {users} users")?
                }
                DecisionViolation::PowerMask { user, subcarrier, power } => {
                    write!(f, "C5: user {user} on sub-carrier {subcarrier} at {power:e} W")?
                }
                DecisionViolation::UnassignedPower { user, subcarrier, power } => {
                    write!(f, "C5: unassigned user {user} on sub-carrier {subcarrier} at {power:e} W")?
                }
                DecisionViolation::PowerBudget { user, total } => write!(f, "C6: user {user} totals {total:e} W")?,
                DecisionViolation::Phase { uav, element, phase } => {
                    write!(f, "C8: UAV {uav} element {element} phase {phase}")?
                }
                DecisionViolation::Amplitude { uav, element, amplitude } => {
                    write!(f, "C9: UAV {uav} element {element} amplitude {amplitude}")?
                }
            }
        }
        Ok(())
    }
}

/// Reports every violated constraint among C4–C6 and C8–C9. C10 holds by
/// type. C7 is not checked here: the decoding order is built by sorting, so it
/// holds by construction.
pub fn validate_decision(decision: &LinkDecision, limits: &LinkLimits) -> std::result::Result<(), ViolationReport> {
    let mut out = Vec::new();
    let (users, n_sc) = decision.assignment.dim();
    if decision.power.dim() != (users, n_sc) || n_sc != limits.power_mask.len() {
        out.push(DecisionViolation::Shape(format!(
            "assignment {:?}, power {:?}, mask {}",
            decision.assignment.dim(),
            decision.power.dim(),
            limits.power_mask.len()
        )));
        return Err(ViolationReport { violations: out });
    }
    for n in 0..n_sc {
        let count = decision.users_on(n).count();
        if count > limits.cluster_size {
            out.push(DecisionViolation::ClusterSize { subcarrier: n, users: count });
        }
    }
    for u in 0..users {
        let mut total = 0.0;
        for n in 0..n_sc {
            let p = decision.power[[u, n]];
            if decision.assignment[[u, n]] {
                if !(p >= 0.0 && p <= limits.power_mask[n] * (1.0 + POWER_SLACK)) {
                    out.push(DecisionViolation::PowerMask { user: u, subcarrier: n, power: p });
                }
                total += p;
            } else if p != 0.0 {
                out.push(DecisionViolation::UnassignedPower { user: u, subcarrier: n, power: p });
            }
        }
        if !(total <= limits.max_power * (1.0 + POWER_SLACK)) {
            out.push(DecisionViolation::PowerBudget { user: u, total });
        }
    }
    let refl = &decision.reflection;
    for j in 0..refl.num_uavs() {
        for l in 0..refl.num_elements() {
            let theta = refl.phase[[j, l]];
            if !(0.0..=2.0 * std::f64::consts::PI).contains(&theta) {
                out.push(DecisionViolation::Phase { uav: j, element: l, phase: theta });
            }
            let beta = refl.amplitude[[j, l]];
            if !(beta > 0.0 && beta <= 1.0) {
                out.push(DecisionViolation::Amplitude { uav: j, element: l, amplitude: beta });
            }
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(ViolationReport { violations: out })
    }
}

/// Which users interfere with the one being decoded.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterferenceConvention {
    /// Users decoded later (weaker) are still present: standard uplink SIC.
    #[default]
    DecodedAfter,
    /// Users decoded earlier interfere instead.
    DecodedBefore,
}

/// Per sub-carrier decoding order, strongest received power first.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SicOrder {
    pub per_subcarrier: Vec<Vec<usize>>,
}

impl SicOrder {
    pub fn position(&self, u: usize, n: usize) -> Option<usize> {
        self.per_subcarrier[n].iter().position(|&v| v == u)
    }
}

pub fn received_power(channels: &ChannelRealization, decision: &LinkDecision, u: usize, n: usize) -> f64 {
    if decision.assignment[[u, n]] {
        decision.power[[u, n]] * channels.gain(u, n)
    } else {
        0.0
    }
}

/// Sorts assigned users by received power, descending; ties go to the lower
/// index.
pub fn build_sic_order(channels: &ChannelRealization, decision: &LinkDecision) -> SicOrder {
    let per_subcarrier = (0..decision.num_subcarriers())
        .map(|n| {
            let mut users: Vec<(usize, f64)> =
                decision.users_on(n).map(|u| (u, received_power(channels, decision, u, n))).collect();
            users.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            debug_assert!(users.windows(2).all(|w| w[0].1 >= w[1].1));
            users.into_iter().map(|(u, _)| u).collect()
        })
        .collect();
    SicOrder { per_subcarrier }
}

/// Receiver-side parameters for SINR and rate evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Receiver {
    pub noise_power: f64,
    pub bandwidth: f64,
    pub convention: InterferenceConvention,
}

pub fn sinr(
    channels: &ChannelRealization,
    decision: &LinkDecision,
    order: &SicOrder,
    rx: &Receiver,
    u: usize,
    n: usize,
) -> Result<f64> {
    let pos = match (decision.assignment[[u, n]], order.position(u, n)) {
        (true, Some(p)) => p,
        _ => return Err(Error::Unassigned { user: u, subcarrier: n }),
    };
    let seq = &order.per_subcarrier[n];
    let interferers = match rx.convention {
        InterferenceConvention::DecodedAfter => &seq[pos + 1..],
        InterferenceConvention::DecodedBefore => &seq[..pos],
    };
    let interference: f64 = interferers.iter().map(|&v| received_power(channels, decision, v, n)).sum();
    Ok(received_power(channels, decision, u, n) / (interference + rx.noise_power))
}

/// Rate of user `u` in bits/s, summed over its sub-carriers.
pub fn user_rate(
    channels: &ChannelRealization,
    decision: &LinkDecision,
    order: &SicOrder,
    rx: &Receiver,
    u: usize,
) -> Result<f64> {
    let mut spectral = 0.0;
    for n in 0..decision.num_subcarriers() {
        if decision.assignment[[u, n]] {
            spectral += (1.0 + sinr(channels, decision, order, rx, u, n)?).log2();
        }
    }
    Ok(rx.bandwidth * spectral)
}

pub fn all_rates(channels: &ChannelRealization, decision: &LinkDecision, rx: &Receiver) -> Result<(SicOrder, Vec<f64>)> {
    if channels.num_users() != decision.num_users() || channels.num_subcarriers() != decision.num_subcarriers() {
        return Err(Error::Dimension(format!(
            "channels for {} users x {} sub-carriers, decision for {} x {}",
            channels.num_users(),
            channels.num_subcarriers(),
            decision.num_users(),
            decision.num_subcarriers()
        )));
    }
    let order = build_sic_order(channels, decision);
    let rates = (0..decision.num_users())
        .map(|u| user_rate(channels, decision, &order, rx, u))
        .collect::<Result<Vec<_>>>()?;
    Ok((order, rates))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};
    use ndarray::{Array3, Array4};
    use num_complex::Complex64;
    use proptest::prelude::*;
    use rand::Rng;

    /// Channel realization with one antenna, no UAVs and the given real
    /// amplitudes `|h|` per `[n][u]`.
    pub(crate) fn scalar_channels(gains: &[Vec<f64>]) -> ChannelRealization {
        let n_sc = gains.len();
        let users = gains[0].len();
        let mut h = Array3::zeros((n_sc, 1, users));
        for n in 0..n_sc {
            for u in 0..users {
                h[[n, 0, u]] = Complex64::new(gains[n][u].sqrt(), 0.0);
            }
        }
        ChannelRealization {
            direct: h.clone(),
            ue_uav: Array4::zeros((0, n_sc, 1, users)),
            uav_cu: Array3::zeros((0, 1, 1)),
            effective: h,
        }
    }

    fn decision(users: usize, n_sc: usize, assigned: &[(usize, usize, f64)]) -> LinkDecision {
        let mut d = LinkDecision::idle(users, n_sc, ReflectionConfig::uniform(0, 1, 1.0, 0.0));
        for &(u, n, p) in assigned {
            d.assignment[[u, n]] = true;
            d.power[[u, n]] = p;
        }
        d
    }

    fn rx(noise: f64) -> Receiver {
        Receiver { noise_power: noise, bandwidth: 200e3, convention: InterferenceConvention::DecodedAfter }
    }

    fn limits() -> LinkLimits {
        LinkLimits { cluster_size: 2, power_mask: vec![1.0, 1.0], max_power: 1.5 }
    }

    #[test]
    fn singleton_order() {
        let ch = scalar_channels(&[vec![3.0, 1.0]]);
        let d = decision(2, 1, &[(1, 0, 1.0)]);
        assert_eq!(build_sic_order(&ch, &d).per_subcarrier, vec![vec![1]]);
    }

    #[test]
    fn stronger_user_decoded_first() {
        let ch = scalar_channels(&[vec![1.0, 4.0]]);
        let d = decision(2, 1, &[(0, 0, 1.0), (1, 0, 1.0)]);
        assert_eq!(build_sic_order(&ch, &d).per_subcarrier, vec![vec![1, 0]]);
    }

    #[test]
    fn ties_break_by_index() {
        let ch = scalar_channels(&[vec![2.0, 2.0, 2.0]]);
        let d = decision(3, 1, &[(2, 0, 1.0), (0, 0, 1.0), (1, 0, 1.0)]);
        assert_eq!(build_sic_order(&ch, &d).per_subcarrier, vec![vec![0, 1, 2]]);
    }

    #[test]
    fn single_user_sinr_is_snr() {
        let ch = scalar_channels(&[vec![3.0]]);
        let d = decision(1, 1, &[(0, 0, 0.5)]);
        let o = build_sic_order(&ch, &d);
        let g = sinr(&ch, &d, &o, &rx(0.25), 0, 0).unwrap();
        assert!((g - 6.0).abs() < 1e-12);
    }

    #[test]
    fn two_user_sic_structure() {
        let ch = scalar_channels(&[vec![1.0, 1.0]]);
        let d = decision(2, 1, &[(0, 0, 1.0), (1, 0, 1.0)]);
        let o = build_sic_order(&ch, &d);
        let r = rx(0.5);
        assert!((sinr(&ch, &d, &o, &r, 0, 0).unwrap() - 1.0 / 1.5).abs() < 1e-12);
        assert!((sinr(&ch, &d, &o, &r, 1, 0).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn three_user_term_by_term() {
        let ch = scalar_channels(&[vec![4.0, 2.0, 1.0]]);
        let d = decision(3, 1, &[(0, 0, 1.0), (1, 0, 1.0), (2, 0, 1.0)]);
        let o = build_sic_order(&ch, &d);
        let r = rx(1.0);
        // Straight from the definition: own power over later-decoded power plus noise.
        let rxp = [4.0, 2.0, 1.0];
        for u in 0..3 {
            let later: f64 = rxp[u + 1..].iter().sum();
            let want = rxp[u] / (later + 1.0);
            assert!((sinr(&ch, &d, &o, &r, u, 0).unwrap() - want).abs() < 1e-12);
        }
        let want = [4.0 / 4.0, 2.0 / 2.0, 1.0 / 1.0];
        for u in 0..3 {
            assert!((sinr(&ch, &d, &o, &r, u, 0).unwrap() - want[u]).abs() < 1e-12);
        }
    }

    #[test]
    fn literal_convention_flips_interference() {
        let ch = scalar_channels(&[vec![4.0, 2.0, 1.0]]);
        let d = decision(3, 1, &[(0, 0, 1.0), (1, 0, 1.0), (2, 0, 1.0)]);
        let o = build_sic_order(&ch, &d);
        let r = Receiver { convention: InterferenceConvention::DecodedBefore, ..rx(1.0) };
        assert!((sinr(&ch, &d, &o, &r, 0, 0).unwrap() - 4.0).abs() < 1e-12);
        assert!((sinr(&ch, &d, &o, &r, 2, 0).unwrap() - 1.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn unassigned_sinr_is_error() {
        let ch = scalar_channels(&[vec![1.0, 1.0]]);
        let d = decision(2, 1, &[(0, 0, 1.0)]);
        let o = build_sic_order(&ch, &d);
        assert!(matches!(sinr(&ch, &d, &o, &rx(1.0), 1, 0), Err(Error::Unassigned { user: 1, subcarrier: 0 })));
    }

    #[test]
    fn rate_examples() {
        let ch = scalar_channels(&[vec![1.0, 1.0]]);
        let d = decision(2, 1, &[(0, 0, 1.0)]);
        let (_, rates) = all_rates(&ch, &d, &rx(1.0)).unwrap();
        assert_eq!(rates[1], 0.0);
        assert!((rates[0] - 200_000.0).abs() < 1e-6);
    }

    #[test]
    fn deactivating_subcarrier_removes_its_term() {
        let ch = scalar_channels(&[vec![3.0, 1.0], vec![2.0, 5.0]]);
        let both = decision(2, 2, &[(0, 0, 1.0), (1, 0, 1.0), (0, 1, 1.0), (1, 1, 1.0)]);
        let r = rx(0.5);
        let (order, full) = all_rates(&ch, &both, &r).unwrap();
        let term = r.bandwidth * (1.0 + sinr(&ch, &both, &order, &r, 0, 1).unwrap()).log2();
        let mut less = both.clone();
        less.assignment[[0, 1]] = false;
        less.power[[0, 1]] = 0.0;
        let (_, part) = all_rates(&ch, &less, &r).unwrap();
        assert!((full[0] - term - part[0]).abs() <= 1e-9 * full[0]);
    }

    #[test]
    fn validation_examples() {
        let l = limits();
        let d = decision(3, 2, &[]);
        assert!(validate_decision(&d, &l).is_ok());

        let d = decision(3, 2, &[(0, 1, 0.1), (1, 1, 0.1), (2, 1, 0.1)]);
        let rep = validate_decision(&d, &l).unwrap_err();
        assert_eq!(rep.violations, vec![DecisionViolation::ClusterSize { subcarrier: 1, users: 3 }]);

        let d = decision(3, 2, &[(0, 0, 1.0 + 1e-6)]);
        let rep = validate_decision(&d, &l).unwrap_err();
        assert!(matches!(rep.violations[0], DecisionViolation::PowerMask { user: 0, subcarrier: 0, .. }));

        let d = decision(3, 2, &[(0, 0, 1.0), (0, 1, 1.0)]);
        let rep = validate_decision(&d, &l).unwrap_err();
        assert!(matches!(rep.violations[0], DecisionViolation::PowerBudget { user: 0, .. }));

        let mut d = decision(3, 2, &[]);
        d.power[[1, 0]] = 0.1;
        let rep = validate_decision(&d, &l).unwrap_err();
        assert!(matches!(rep.violations[0], DecisionViolation::UnassignedPower { user: 1, .. }));
    }

    #[test]
    fn validation_checks_reflection() {
        let l = limits();
        let mut d = decision(1, 2, &[]);
        d.reflection = ReflectionConfig::uniform(1, 2, 1.0, 1.0);
        d.reflection.amplitude[[0, 1]] = 0.0;
        d.reflection.phase[[0, 0]] = 7.0;
        let rep = validate_decision(&d, &l).unwrap_err();
        assert_eq!(rep.violations.len(), 2);
        assert!(rep.to_string().contains("C8") && rep.to_string().contains("C9"));
    }

    #[test]
    fn rate_monotone_in_own_power_at_fixed_order() {
        let mut rng = stream_rng(12, Stream::Oracle, 0);
        let r = rx(1e-3);
        for _ in 0..1000 {
            let gains: Vec<f64> = (0..3).map(|_| rng.gen_range(0.01..2.0)).collect();
            let p: Vec<f64> = (0..3).map(|_| rng.gen_range(0.01..1.0)).collect();
            let ch = scalar_channels(&[gains]);
            let d = decision(3, 1, &[(0, 0, p[0]), (1, 0, p[1]), (2, 0, p[2])]);
            let u = rng.gen_range(0..3);
            let mut up = d.clone();
            up.power[[u, 0]] *= 1.0 + rng.gen_range(0.0..1.0);
            // The decoding order is part of "everything else": a user that
            // overtakes another starts seeing its interference.
            let order = build_sic_order(&ch, &d);
            let a = user_rate(&ch, &d, &order, &r, u).unwrap();
            let b = user_rate(&ch, &up, &order, &r, u).unwrap();
            assert!(b >= a * (1.0 - 1e-12), "{b} < {a}");
        }
    }

    proptest! {
        #[test]
        fn sic_order_is_sorted_permutation(
            gains in proptest::collection::vec(0.01f64..10.0, 4),
            powers in proptest::collection::vec(0.0f64..1.0, 4),
            mask in 0u8..16,
        ) {
            let ch = scalar_channels(&[gains.clone()]);
            let assigned: Vec<(usize, usize, f64)> =
                (0..4).filter(|u| mask & (1 << u) != 0).map(|u| (u, 0, powers[u])).collect();
            let d = decision(4, 1, &assigned);
            let order = build_sic_order(&ch, &d);
            let seq = &order.per_subcarrier[0];
            let mut sorted = seq.clone();
            sorted.sort();
            prop_assert_eq!(sorted, assigned.iter().map(|a| a.0).collect::<Vec<_>>());
            for w in seq.windows(2) {
                prop_assert!(powers[w[0]] * gains[w[0]] >= powers[w[1]] * gains[w[1]]);
            }
        }

        #[test]
        fn interference_accounting(
            gains in proptest::collection::vec(0.01f64..10.0, 3),
            powers in proptest::collection::vec(0.01f64..1.0, 3),
            noise in 0.01f64..1.0,
        ) {
            let ch = scalar_channels(&[gains.clone()]);
            let d = decision(3, 1, &[(0, 0, powers[0]), (1, 0, powers[1]), (2, 0, powers[2])]);
            let order = build_sic_order(&ch, &d);
            let r = rx(noise);
            // Each user's SINR denominator, reconstructed from its own numerator.
            let mut denominators = 0.0;
            for u in 0..3 {
                let num = powers[u] * gains[u];
                denominators += num / sinr(&ch, &d, &order, &r, u, 0).unwrap();
            }
            let seq = &order.per_subcarrier[0];
            let total: f64 = seq.iter().enumerate().map(|(i, &u)| i as f64 * powers[u] * gains[u]).sum();
            let want = total + 3.0 * noise;
            prop_assert!((denominators - want).abs() <= 1e-9 * want);
        }

        #[test]
        fn validation_ok_iff_feasible(
            p in proptest::collection::vec(0.0f64..1.3, 6),
            a in proptest::collection::vec(any::<bool>(), 6),
        ) {
            let l = limits();
            let mut d = decision(3, 2, &[]);
            for u in 0..3 {
                for n in 0..2 {
                    d.assignment[[u, n]] = a[u * 2 + n];
                    d.power[[u, n]] = if a[u * 2 + n] { p[u * 2 + n] } else { 0.0 };
                }
            }
            let feasible = (0..2).all(|n| d.users_on(n).count() <= 2)
                && (0..3).all(|u| (0..2).all(|n| d.power[[u, n]] <= 1.0) && d.power.row(u).sum() <= 1.5);
            prop_assert_eq!(validate_decision(&d, &l).is_ok(), feasible);
        }
    }
}
