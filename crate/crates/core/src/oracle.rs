//! Brute-force reference checks: exhaustive single-slot search, decoding
//! order by permutation enumeration, an independent age recursion, and a
//! chain MDP with known optimal values.

use ndarray::{Array1, Array2, Array3, Array4};
use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::agents::ddqn::{chain, double_q_targets, td_loss_and_grad, DdqnAgent, Transition};
use crate::agents::ppo::PpoAgent;
use crate::agents::train::{act, AgentBundle, AgentConfig, ActRngs, Mode};
use crate::aoi::{step_aoi, AoiState};
use crate::baselines::{matching_assignment, uniform_power, PolicyKind};
use crate::env::{Env, LinkDraw};
use crate::error::Result;
use crate::experiment::profiles::{desk_agent, desk_scenario};
use crate::nn::{worst_gradient_error, GradientProbe, Mlp};
use crate::noma::{build_sic_order, sinr, validate_decision, InterferenceConvention, LinkDecision, Receiver};
use crate::phys::{ChannelRealization, ReflectionConfig};
use crate::rng::{stream_rng, Stream};
use crate::scenario::ScenarioConfig;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleReport {
    pub name: &'static str,
    pub passed: bool,
    pub cases: usize,
    pub detail: String,
}

/// Decoding order found by enumerating every permutation and keeping the
/// first, in lexicographic order, whose received powers never increase and
/// whose equal-power neighbours appear in index order.
pub fn permutation_order(rx_power: &[f64]) -> Vec<usize> {
    let mut perms = Vec::new();
    permute(&mut (0..rx_power.len()).collect(), 0, &mut perms);
    perms.sort();
    perms
        .into_iter()
        .find(|p| {
            p.windows(2)
                .all(|w| rx_power[w[0]] > rx_power[w[1]] || (rx_power[w[0]] == rx_power[w[1]] && w[0] < w[1]))
        })
        .expect("a sorted permutation exists")
}

fn permute(v: &mut Vec<usize>, i: usize, out: &mut Vec<Vec<usize>>) {
    if i == v.len() {
        out.push(v.clone());
        return;
    }
    for j in i..v.len() {
        v.swap(i, j);
        permute(v, i + 1, out);
        v.swap(i, j);
    }
}

fn scalar_channels(gains: &[f64]) -> ChannelRealization {
    let users = gains.len();
    let mut h = Array3::zeros((1, 1, users));
    for (u, g) in gains.iter().enumerate() {
        h[[0, 0, u]] = Complex64::new(g.sqrt(), 0.0);
    }
    ChannelRealization { direct: h.clone(), ue_uav: Array4::zeros((0, 1, 1, users)), uav_cu: Array3::zeros((0, 1, 1)), effective: h }
}

/// Decoding order and interference accounting against enumeration on random
/// three-user instances sharing one sub-carrier.
pub fn check_sic(seed: u64, instances: usize) -> OracleReport {
    let mut rng = stream_rng(seed, Stream::Oracle, 1);
    let rx = Receiver { noise_power: 1e-3, bandwidth: 1.0, convention: InterferenceConvention::DecodedAfter };
    let mut failures = 0;
    for _ in 0..instances {
        let gains: Vec<f64> = (0..3).map(|_| rng.gen_range(0.1..4.0)).collect();
        // Coarse power levels make exact ties common.
        let power: Vec<f64> = (0..3).map(|_| rng.gen_range(1..4) as f64 / 4.0).collect();
        let ch = scalar_channels(&gains);
        let mut d = LinkDecision::idle(3, 1, ReflectionConfig::uniform(0, 1, 1.0, 0.0));
        for u in 0..3 {
            d.assignment[[u, 0]] = true;
            d.power[[u, 0]] = power[u];
        }
        let rxp: Vec<f64> = (0..3).map(|u| power[u] * ch.gain(u, 0)).collect();
        let want = permutation_order(&rxp);
        let order = build_sic_order(&ch, &d);
        let mut ok = order.per_subcarrier[0] == want;
        for (pos, &u) in want.iter().enumerate() {
            let interference: f64 = want[pos + 1..].iter().map(|&v| rxp[v]).sum();
            let expect = rxp[u] / (interference + rx.noise_power);
            let got = sinr(&ch, &d, &order, &rx, u, 0).unwrap_or(f64::NAN);
            ok &= (got - expect).abs() <= 1e-12 * expect.max(1.0);
        }
        failures += usize::from(!ok);
    }
    OracleReport {
        name: "sic-order",
        passed: failures == 0,
        cases: instances,
        detail: format!("{failures} of {instances} instances disagree with permutation enumeration"),
    }
}

/// Age recursion in seconds, written without the slot counters used by the
/// environment. Arrivals of slot `k` are stamped `k + 1`.
pub fn reference_ages(rates: &[Vec<f64>], arrivals: &[Vec<u64>], delta: f64) -> Vec<Vec<f64>> {
    let users = rates[0].len();
    let mut age = vec![delta; users];
    let mut queue = vec![0u64; users];
    let mut born: Vec<i64> = vec![-1; users];
    let mut out = Vec::new();
    for k in 0..rates.len() {
        for u in 0..users {
            if queue[u] > 0 && rates[k][u] > 0.0 && (queue[u] as f64) / rates[k][u] <= delta {
                age[u] = (k as i64 - born[u]) as f64 * delta + delta;
                queue[u] = 0;
                born[u] = -1;
            } else {
                age[u] += delta;
            }
        }
        out.push(age.clone());
        for u in 0..users {
            if arrivals[k][u] > 0 {
                if queue[u] == 0 {
                    born[u] = k as i64 + 1;
                }
                queue[u] += arrivals[k][u];
            }
        }
    }
    out
}

/// Environment ages against [`reference_ages`] on random schedules.
pub fn check_aoi(seed: u64, schedules: usize, slots: usize) -> OracleReport {
    const DELTA: f64 = 0.1;
    let mut rng = stream_rng(seed, Stream::Oracle, 2);
    let mut failures = 0;
    for _ in 0..schedules {
        let rates: Vec<Vec<f64>> = (0..slots)
            .map(|_| (0..3).map(|_| if rng.gen_bool(0.4) { rng.gen_range(0.0..30_000.0) } else { 0.0 }).collect())
            .collect();
        let arrivals: Vec<Vec<u64>> = (0..slots).map(|_| (0..3).map(|_| rng.gen_range(0..3u64) * 1000).collect()).collect();
        let want = reference_ages(&rates, &arrivals, DELTA);
        let mut s = AoiState::new(3);
        let mut ok = true;
        for k in 0..slots {
            step_aoi(&mut s, &rates[k], k as u64, DELTA);
            ok &= s.ages(DELTA).iter().zip(&want[k]).all(|(g, w)| (g - w).abs() <= 1e-9);
            for u in 0..3 {
                s.arrived[u] = arrivals[k][u] > 0;
                if arrivals[k][u] > 0 {
                    if s.backlog[u] == 0 {
                        s.generation_slot[u] = Some(k as u64 + 1);
                    }
                    s.backlog[u] += arrivals[k][u];
                }
            }
        }
        failures += usize::from(!ok);
    }
    OracleReport {
        name: "aoi-recursion",
        passed: failures == 0,
        cases: schedules,
        detail: format!("{failures} of {schedules} schedules of {slots} slots differ from the reference recursion"),
    }
}

/// Double-Q learner on the chain MDP against value iteration.
pub fn check_chain(seed: u64) -> OracleReport {
    let err = chain::train_and_measure(seed, 50_000, 0.8);
    OracleReport { name: "chain-mdp", passed: err < 1e-2, cases: 1, detail: format!("max |Q - Q*| = {err:.2e}") }
}

/// Network for the single-slot search: three users, two sub-carriers, pairs.
pub fn single_slot_scenario() -> ScenarioConfig {
    ScenarioConfig {
        num_users: 3,
        num_uavs: 1,
        num_elements: 4,
        num_subcarriers: 2,
        cluster_size: 2,
        candidate_width: 3,
        ..desk_scenario()
    }
}

const POWER_LEVELS: [f64; 3] = [1.0 / 3.0, 2.0 / 3.0, 1.0];

/// Every assignment with at most `cluster_size` users per sub-carrier, and
/// every power level on each assigned pair.
fn grid_decisions(users: usize, n_sc: usize, q: usize, mask: &[f64], refl: &ReflectionConfig) -> Vec<LinkDecision> {
    let subsets: Vec<Vec<usize>> =
        (0u32..1 << users).filter(|m| m.count_ones() as usize <= q).map(|m| (0..users).filter(|&u| m >> u & 1 == 1).collect()).collect();
    let mut out = Vec::new();
    let mut choice = vec![0usize; n_sc];
    loop {
        let pairs: Vec<(usize, usize)> = choice.iter().enumerate().flat_map(|(n, &c)| subsets[c].iter().map(move |&u| (u, n))).collect();
        for code in 0..POWER_LEVELS.len().pow(pairs.len() as u32) {
            let mut d = LinkDecision::idle(users, n_sc, refl.clone());
            let mut c = code;
            for &(u, n) in &pairs {
                d.assignment[[u, n]] = true;
                d.power[[u, n]] = POWER_LEVELS[c % POWER_LEVELS.len()] * mask[n];
                c /= POWER_LEVELS.len();
            }
            out.push(d);
        }
        let mut n = 0;
        loop {
            if n == n_sc {
                return out;
            }
            choice[n] += 1;
            if choice[n] < subsets.len() {
                break;
            }
            choice[n] = 0;
            n += 1;
        }
    }
}

/// Largest grid level not above `p` (the lowest level when `p` is below all).
fn snap_to_grid(d: &mut LinkDecision, mask: &[f64]) {
    for ((u, n), on) in d.assignment.indexed_iter() {
        if *on {
            let p = d.power[[u, n]];
            let level = POWER_LEVELS.iter().rev().map(|l| l * mask[n]).find(|&v| v <= p * (1.0 + 1e-12)).unwrap_or(POWER_LEVELS[0] * mask[n]);
            d.power[[u, n]] = level;
        }
    }
}

fn reward_of(env: &Env, d: LinkDecision, draw: &LinkDraw) -> Result<f64> {
    let d = env.prepare(d)?;
    Ok(env.evaluate(&d, draw)?.reward)
}

/// Exhaustive search over assignments and a three-level power grid for a
/// single slot; no grid decision from random draws, matching or a learner
/// may score above it.
pub fn check_single_slot(seed: u64, states: usize) -> Result<OracleReport> {
    let scn = single_slot_scenario();
    let agent: AgentConfig = desk_agent();
    let bundle = AgentBundle::new(&scn, &agent, PolicyKind::Ours, seed);
    let mut env = Env::new(scn.clone(), seed)?;
    let limits = scn.limits();
    let mut rng = stream_rng(seed, Stream::Oracle, 3);
    let (mut beaten, mut matching_optimal, mut decisions) = (0, 0, 0);
    for i in 0..states {
        env.reset(seed, i as u64)?;
        // Reach a random state with random scheduling.
        for _ in 0..rng.gen_range(0..30) {
            let mut d = env.idle_decision();
            for u in 0..scn.num_users {
                if rng.gen_bool(0.3) {
                    d.assignment[[u, rng.gen_range(0..scn.num_subcarriers)]] = true;
                }
            }
            for ((u, n), on) in d.assignment.indexed_iter() {
                if *on {
                    d.power[[u, n]] = limits.power_mask[n];
                }
            }
            if d.users_on(0).count() <= scn.cluster_size && d.users_on(1).count() <= scn.cluster_size {
                env.step(d)?;
            } else {
                env.step(env.idle_decision())?;
            }
        }
        let pose = env.state().pose.clone();
        let draw = env.draw(&pose)?;
        let mut refl = ReflectionConfig::uniform(scn.num_uavs, scn.num_elements, 1.0, 0.0);
        refl.phase.mapv_inplace(|_| rng.gen_range(0.0..2.0 * std::f64::consts::PI));

        let grid = grid_decisions(scn.num_users, scn.num_subcarriers, scn.cluster_size, &limits.power_mask, &refl);
        let mut best = f64::NEG_INFINITY;
        for d in &grid {
            if validate_decision(d, &limits).is_ok() {
                best = best.max(reward_of(&env, d.clone(), &draw)?);
            }
        }

        let mut rivals = Vec::new();
        rivals.push(LinkDecision::idle(scn.num_users, scn.num_subcarriers, refl.clone()));
        for _ in 0..100 {
            rivals.push(grid[rng.gen_range(0..grid.len())].clone());
        }
        let idle_channels = crate::phys::compose_effective_channel(draw.direct.clone(), draw.ue_uav.clone(), draw.uav_cu.clone(), &refl)?;
        let gains = Array2::from_shape_fn((scn.num_users, scn.num_subcarriers), |(u, n)| idle_channels.gain(u, n));
        let aoi = &env.state().aoi;
        let assignment = matching_assignment(&aoi.backlog, &aoi.age_slots, &gains, scn.cluster_size);
        let power = uniform_power(&assignment, &limits.power_mask, limits.max_power);
        let mut matched = LinkDecision { assignment, power, reflection: refl.clone(), uav_delta: vec![[0.0, 0.0]; scn.num_uavs] };
        snap_to_grid(&mut matched, &limits.power_mask);
        let matching_reward = reward_of(&env, matched.clone(), &draw)?;
        matching_optimal += usize::from(matching_reward >= best);
        rivals.push(matched);
        let mut learned = act(&bundle, &env, &gains, Mode::Greedy, &mut ActRngs::new(seed, i as u64))?.decision;
        learned.reflection = refl.clone();
        learned.uav_delta = vec![[0.0, 0.0]; scn.num_uavs];
        snap_to_grid(&mut learned, &limits.power_mask);
        rivals.push(learned);

        for d in rivals {
            if validate_decision(&d, &limits).is_ok() {
                decisions += 1;
                if reward_of(&env, d, &draw)? > best + 1e-12 {
                    beaten += 1;
                }
            }
        }
    }
    Ok(OracleReport {
        name: "single-slot",
        passed: beaten == 0,
        cases: states,
        detail: format!(
            "{beaten} of {decisions} decisions beat the exhaustive optimum; matching reached it in {matching_optimal} of {states} states"
        ),
    })
}

fn uniform_rows<R: Rng + ?Sized>(rng: &mut R, n: usize, width: usize, lo: f64, hi: f64) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..width).map(|_| rng.gen_range(lo..hi)).collect()).collect()
}

fn gradient_report(name: &'static str, probes: usize, worst: GradientProbe) -> OracleReport {
    OracleReport {
        name,
        passed: worst.failures == 0,
        cases: probes,
        detail: format!(
            "worst relative error {:.2e} at param {} (analytic {:e}, numeric {:e}), {} probes out of tolerance",
            worst.error, worst.index, worst.analytic, worst.numeric, worst.failures
        ),
    }
}

/// Central-difference checks of the TD, clipped-surrogate and critic
/// gradients on networks with the desk hidden sizes, `probes` random
/// parameters each. The surrogate check also probes every log-std entry.
pub fn gradient_suite(seed: u64, probes: usize) -> Vec<OracleReport> {
    let agent = desk_agent();
    let (input, actions, dim, batch) = (12, 9, 5, 16);
    let mut rng = stream_rng(seed, Stream::Oracle, 10);

    let ddqn = DdqnAgent::new(input, actions, agent.ddqn.clone(), &mut rng);
    let obs = uniform_rows(&mut rng, batch, input, -1.0, 1.0);
    let next = uniform_rows(&mut rng, batch, input, -1.0, 1.0);
    let transitions: Vec<Transition> = (0..batch)
        .map(|i| Transition {
            obs: obs[i].clone(),
            action: rng.gen_range(0..actions),
            reward: rng.gen_range(-2.0..0.0),
            discount: if i % 3 == 0 { 1.0 } else { agent.ddqn.gamma },
            next_obs: next[i].clone(),
            terminal: i % 5 == 4,
        })
        .collect();
    let refs: Vec<&Transition> = transitions.iter().collect();
    let targets = double_q_targets(&ddqn.main, &ddqn.target, &refs);
    let (_, g) = td_loss_and_grad(&ddqn.main, &refs, &targets);
    let td = worst_gradient_error(&ddqn.main, &g, probes, &mut rng, |net| td_loss_and_grad(net, &refs, &targets).0);

    let ppo = PpoAgent::new(input, dim, agent.ppo.clone(), &mut rng);
    let rows = uniform_rows(&mut rng, batch, input, -1.0, 1.0);
    let obs = Array2::from_shape_fn((batch, input), |(i, k)| rows[i][k]);
    let pre = uniform_rows(&mut rng, batch, dim, -1.5, 1.5);
    let adv: Vec<f64> = (0..batch).map(|_| rng.gen_range(-1.0..1.0)).collect();
    // Shift the old log-probs so some samples sit in the clipped region.
    let old: Vec<f64> =
        ppo.log_probs(&rows, &pre).iter().enumerate().map(|(i, lp)| lp + [0.0, 0.05, -0.05, 0.5, -0.5][i % 5]).collect();
    let clip = agent.ppo.clip;
    let surrogate = |net: &Mlp, log_std: &Array1<f64>| PpoAgent::policy_loss_and_grad(net, log_std, &obs, &pre, &old, &adv, clip);
    let g = surrogate(&ppo.actor, &ppo.log_std);
    let mut policy = worst_gradient_error(&ppo.actor, &g.net, probes, &mut rng, |net| surrogate(net, &ppo.log_std).loss);
    let h = 1e-5;
    for k in 0..dim {
        let (mut plus, mut minus) = (ppo.log_std.clone(), ppo.log_std.clone());
        plus[k] += h;
        minus[k] -= h;
        let numeric = (surrogate(&ppo.actor, &plus).loss - surrogate(&ppo.actor, &minus).loss) / (2.0 * h);
        policy.observe(ppo.actor.num_params() + k, g.log_std[k], numeric);
    }

    let returns: Vec<f64> = (0..batch).map(|_| rng.gen_range(-5.0..0.0)).collect();
    let (_, g) = PpoAgent::value_loss_and_grad(&ppo.critic, &obs, &returns);
    let critic =
        worst_gradient_error(&ppo.critic, &g, probes, &mut rng, |net| PpoAgent::value_loss_and_grad(net, &obs, &returns).0);

    vec![
        gradient_report("td-loss", probes, td),
        gradient_report("surrogate", probes + dim, policy),
        gradient_report("critic", probes, critic),
    ]
}

/// The four checks at their reference sizes.
pub fn run_all(seed: u64) -> Result<Vec<OracleReport>> {
    Ok(vec![check_single_slot(seed, 50)?, check_sic(seed, 200), check_aoi(seed, 100, 20), check_chain(seed)])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_suite_passes() {
        for r in gradient_suite(0, 16) {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }

    #[test]
    fn permutation_order_examples() {
        assert_eq!(permutation_order(&[1.0, 3.0, 2.0]), vec![1, 2, 0]);
        assert_eq!(permutation_order(&[2.0, 2.0, 1.0]), vec![0, 1, 2]);
        assert_eq!(permutation_order(&[1.0, 1.0, 1.0]), vec![0, 1, 2]);
    }

    #[test]
    fn grid_covers_every_assignment_and_level() {
        let refl = ReflectionConfig::uniform(1, 1, 1.0, 0.0);
        let grid = grid_decisions(3, 2, 2, &[1.0, 1.0], &refl);
        // Per sub-carrier: one empty, three singletons with 3 levels, three
        // pairs with 9 levels.
        let per_sc = 1 + 3 * 3 + 3 * 9;
        assert_eq!(grid.len(), per_sc * per_sc);
    }

    #[test]
    fn reference_recursion_example() {
        // One 1000-bit packet arrives in slot 0 and is sent in slot 2.
        let rates = vec![vec![0.0], vec![0.0], vec![1e5]];
        let arrivals = vec![vec![1000], vec![0], vec![0]];
        let ages = reference_ages(&rates, &arrivals, 0.1);
        let got: Vec<f64> = ages.iter().map(|a| a[0]).collect();
        assert!((got[0] - 0.2).abs() < 1e-12 && (got[1] - 0.3).abs() < 1e-12);
        assert!((got[2] - 0.2).abs() < 1e-12, "{got:?}");
    }

    #[test]
    fn sic_and_aoi_checks_pass() {
        assert!(check_sic(1, 200).passed);
        assert!(check_aoi(1, 100, 20).passed);
    }

    #[test]
    fn single_slot_check_passes_on_a_few_states() {
        let r = check_single_slot(2, 5).unwrap();
        assert!(r.passed, "{}", r.detail);
    }
}
