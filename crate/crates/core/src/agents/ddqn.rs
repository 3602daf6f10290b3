//! Double deep Q-learning over a discrete head.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{clip_factor, Adam, Gradients, Mlp};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DdqnConfig {
    pub hidden: Vec<usize>,
    pub gamma: f64,
    /// Target network soft-update rate.
    pub tau: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub memory_capacity: usize,
    /// Updates start once the memory holds more than this many slots.
    pub warmup: usize,
    /// Slots between gradient steps.
    pub train_interval: usize,
    pub grad_clip: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of the episodes over which epsilon decays linearly.
    pub epsilon_decay_fraction: f64,
}

impl DdqnConfig {
    /// Linear decay from `epsilon_start` to `epsilon_end`, then flat.
    pub fn epsilon(&self, episode: usize, episodes: usize) -> f64 {
        let horizon = (self.epsilon_decay_fraction * episodes as f64).max(1.0);
        let frac = (episode as f64 / horizon).min(1.0);
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

/// One decision of the discrete head. Within a slot the sub-carrier choices
/// chain with `reward = 0, discount = 1`; the last one carries the slot
/// reward and the real discount.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub discount: f64,
    pub next_obs: Vec<f64>,
    pub terminal: bool,
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn stack(rows: impl ExactSizeIterator<Item = Vec<f64>>, width: usize) -> Array2<f64> {
    let n = rows.len();
    let flat: Vec<f64> = rows.flatten().collect();
    Array2::from_shape_vec((n, width), flat).expect("rows of equal width")
}

/// Double-Q targets: next action picked by `main`, valued by `target`.
pub fn double_q_targets(main: &Mlp, target: &Mlp, batch: &[&Transition]) -> Vec<f64> {
    let width = main.input_dim();
    let next = stack(batch.iter().map(|t| t.next_obs.clone()), width);
    let q_main = main.forward_batch(next.clone());
    let q_target = target.forward_batch(next);
    batch
        .iter()
        .enumerate()
        .map(|(i, t)| {
            if t.terminal {
                t.reward
            } else {
                let a = argmax(q_main.row(i).as_slice().expect("contiguous"));
                t.reward + t.discount * q_target[[i, a]]
            }
        })
        .collect()
}

/// Mean squared TD error on the taken actions and its gradient with respect
/// to the main network, for fixed targets.
pub fn td_loss_and_grad(main: &Mlp, batch: &[&Transition], targets: &[f64]) -> (f64, Gradients) {
    let width = main.input_dim();
    let x = stack(batch.iter().map(|t| t.obs.clone()), width);
    let trace = main.forward_trace(x);
    let q = trace.output();
    let b = batch.len() as f64;
    let mut grad = Array2::zeros(q.raw_dim());
    let mut loss = 0.0;
    for (i, t) in batch.iter().enumerate() {
        let err = q[[i, t.action]] - targets[i];
        loss += err * err / b;
        grad[[i, t.action]] = 2.0 * err / b;
    }
    (loss, main.backward(&trace, grad))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DdqnAgent {
    pub main: Mlp,
    pub target: Mlp,
    pub cfg: DdqnConfig,
    opt: Adam,
}

impl DdqnAgent {
    pub fn new<R: Rng + ?Sized>(input: usize, actions: usize, cfg: DdqnConfig, rng: &mut R) -> Self {
        let mut sizes = vec![input];
        sizes.extend(&cfg.hidden);
        sizes.push(actions);
        let main = Mlp::new(&sizes, rng);
        let opt = Adam::new(main.num_params(), cfg.lr);
        Self { target: main.clone(), main, cfg, opt }
    }

    pub fn num_actions(&self) -> usize {
        self.main.output_dim()
    }

    pub fn q_values(&self, obs: &[f64]) -> Vec<f64> {
        self.main.forward(obs)
    }

    pub fn greedy(&self, obs: &[f64]) -> usize {
        argmax(&self.q_values(obs))
    }

    /// One gradient step on a sampled batch followed by the target soft
    /// update. Returns the loss before the step.
    pub fn update(&mut self, batch: &[&Transition]) -> f64 {
        let targets = double_q_targets(&self.main, &self.target, batch);
        let (loss, mut grads) = td_loss_and_grad(&self.main, batch, &targets);
        grads.scale(clip_factor(grads.sum_squares(), self.cfg.grad_clip));
        self.opt.step(self.main.params_mut(), grads.values());
        self.target.soft_update_from(&self.main, self.cfg.tau);
        loss
    }
}

/// Three-state chain with actions left/right. Moving right from the middle
/// reaches the absorbing goal with reward 1; every other move pays 0.
pub mod chain {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    pub const STATES: usize = 3;
    pub const GOAL: usize = 2;

    pub fn step(s: usize, a: usize) -> (usize, f64) {
        let next = if a == 1 { s + 1 } else { s.saturating_sub(1) };
        (next, if next == GOAL { 1.0 } else { 0.0 })
    }

    pub fn one_hot(s: usize) -> Vec<f64> {
        let mut v = vec![0.0; STATES];
        v[s] = 1.0;
        v
    }

    /// Optimal action values of the non-goal states by value iteration.
    pub fn optimal_q(gamma: f64) -> [[f64; 2]; 2] {
        let mut q = [[0.0; 2]; 2];
        for _ in 0..1000 {
            let mut next = q;
            for (s, row) in next.iter_mut().enumerate() {
                for (a, v) in row.iter_mut().enumerate() {
                    let (s2, r) = step(s, a);
                    *v = if s2 == GOAL { r } else { r + gamma * q[s2][0].max(q[s2][1]) };
                }
            }
            q = next;
        }
        q
    }

    /// Trains a linear double-Q learner from uniform exploration and returns
    /// the largest deviation from the optimal values after `steps` updates.
    pub fn train_and_measure(seed: u64, steps: usize, gamma: f64) -> f64 {
        let cfg = DdqnConfig {
            hidden: vec![],
            gamma,
            tau: 0.05,
            lr: 0.01,
            batch_size: 32,
            memory_capacity: 10_000,
            warmup: 32,
            train_interval: 1,
            grad_clip: 10.0,
            epsilon_start: 1.0,
            epsilon_end: 1.0,
            epsilon_decay_fraction: 1.0,
        };
        let mut agent = DdqnAgent::new(STATES, 2, cfg.clone(), &mut stream_rng(seed, Stream::NetInit, 0));
        let mut rng = stream_rng(seed, Stream::Exploration, 0);
        let mut replay = super::super::replay::Replay::new(cfg.memory_capacity);
        let mut s = 0;
        for _ in 0..steps {
            let a = rng.gen_range(0..2);
            let (s2, r) = step(s, a);
            replay.push(Transition {
                obs: one_hot(s),
                action: a,
                reward: r,
                discount: gamma,
                next_obs: one_hot(s2),
                terminal: s2 == GOAL,
            });
            s = if s2 == GOAL { rng.gen_range(0..GOAL) } else { s2 };
            if replay.len() > cfg.warmup {
                let batch = replay.sample(cfg.batch_size, &mut rng);
                agent.update(&batch);
            }
        }
        let q_star = optimal_q(gamma);
        (0..GOAL)
            .flat_map(|s| {
                let q = agent.q_values(&one_hot(s));
                (0..2).map(move |a| (q[a] - q_star[s][a]).abs()).collect::<Vec<_>>()
            })
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tests::check_gradient;
    use crate::nn::Dense;
    use crate::rng::{stream_rng, Stream};

    fn cfg() -> DdqnConfig {
        DdqnConfig {
            hidden: vec![16, 8],
            gamma: 0.8,
            tau: 0.01,
            lr: 1e-3,
            batch_size: 8,
            memory_capacity: 100,
            warmup: 8,
            train_interval: 1,
            grad_clip: 1.0,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_fraction: 0.3,
        }
    }

    fn batch(rng: &mut impl Rng, n: usize, input: usize, actions: usize) -> Vec<Transition> {
        (0..n)
            .map(|_| Transition {
                obs: (0..input).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                action: rng.gen_range(0..actions),
                reward: rng.gen_range(-2.0..0.0),
                discount: 0.8,
                next_obs: (0..input).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                terminal: rng.gen_bool(0.2),
            })
            .collect()
    }

    #[test]
    fn epsilon_schedule_is_monotone() {
        let c = cfg();
        assert_eq!(c.epsilon(0, 100), 1.0);
        assert!((c.epsilon(30, 100) - 0.05).abs() < 1e-12);
        let mut prev = f64::INFINITY;
        for e in 0..100 {
            let eps = c.epsilon(e, 100);
            assert!(eps <= prev);
            prev = eps;
        }
    }

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), 1);
    }

    #[test]
    fn rigged_output_layer_selects_index_three() {
        let mut rng = stream_rng(1, Stream::NetInit, 0);
        let mut agent = DdqnAgent::new(5, 6, cfg(), &mut rng);
        let last = agent.main.layers.last_mut().unwrap();
        *last = Dense { weight: Array2::zeros(last.weight.raw_dim()), bias: ndarray::Array1::zeros(6) };
        last.bias[3] = 1.0;
        for _ in 0..50 {
            let obs: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
            assert_eq!(agent.greedy(&obs), 3);
        }
    }

    #[test]
    fn greedy_value_dominates() {
        let mut rng = stream_rng(2, Stream::NetInit, 0);
        let agent = DdqnAgent::new(5, 7, cfg(), &mut rng);
        for _ in 0..100 {
            let obs: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let q = agent.q_values(&obs);
            let a = agent.greedy(&obs);
            assert!(q.iter().all(|v| q[a] >= *v));
        }
    }

    #[test]
    fn myopic_target_is_reward() {
        let mut rng = stream_rng(3, Stream::NetInit, 0);
        let agent = DdqnAgent::new(4, 3, cfg(), &mut rng);
        let mut b = batch(&mut rng, 16, 4, 3);
        for t in &mut b {
            t.discount = 0.0;
        }
        let refs: Vec<&Transition> = b.iter().collect();
        let y = double_q_targets(&agent.main, &agent.target, &refs);
        for (t, y) in b.iter().zip(&y) {
            assert_eq!(*y, t.reward);
        }
        let (loss, _) = td_loss_and_grad(&agent.main, &refs, &y);
        let want: f64 =
            b.iter().map(|t| (t.reward - agent.q_values(&t.obs)[t.action]).powi(2)).sum::<f64>() / 16.0;
        assert!((loss - want).abs() < 1e-12);
    }

    #[test]
    fn terminal_samples_do_not_bootstrap() {
        let mut rng = stream_rng(4, Stream::NetInit, 0);
        let agent = DdqnAgent::new(4, 3, cfg(), &mut rng);
        let mut b = batch(&mut rng, 8, 4, 3);
        b.iter_mut().for_each(|t| t.terminal = true);
        let refs: Vec<&Transition> = b.iter().collect();
        let y = double_q_targets(&agent.main, &agent.target, &refs);
        assert!(b.iter().zip(&y).all(|(t, y)| *y == t.reward));
    }

    #[test]
    fn target_uses_main_argmax_and_target_value() {
        let mut rng = stream_rng(5, Stream::NetInit, 0);
        let mut agent = DdqnAgent::new(4, 3, cfg(), &mut rng);
        agent.target = Mlp::new(&[4, 16, 8, 3], &mut rng);
        assert_ne!(agent.main, agent.target);
        let b = batch(&mut rng, 8, 4, 3);
        let refs: Vec<&Transition> = b.iter().collect();
        let y = double_q_targets(&agent.main, &agent.target, &refs);
        for (t, y) in b.iter().zip(&y) {
            if t.terminal {
                continue;
            }
            let a = argmax(&agent.main.forward(&t.next_obs));
            let want = t.reward + t.discount * agent.target.forward(&t.next_obs)[a];
            assert!((y - want).abs() < 1e-12);
        }
    }

    #[test]
    fn td_gradient_matches_finite_differences() {
        let mut rng = stream_rng(6, Stream::NetInit, 0);
        let agent = DdqnAgent::new(6, 5, cfg(), &mut rng);
        let b = batch(&mut rng, 12, 6, 5);
        let refs: Vec<&Transition> = b.iter().collect();
        let y = double_q_targets(&agent.main, &agent.target, &refs);
        let (_, g) = td_loss_and_grad(&agent.main, &refs, &y);
        check_gradient(&agent.main, &g, 32, 6, |net| td_loss_and_grad(net, &refs, &y).0).unwrap();
    }

    #[test]
    fn update_moves_target_toward_main() {
        let mut rng = stream_rng(7, Stream::NetInit, 0);
        let mut agent = DdqnAgent::new(4, 3, cfg(), &mut rng);
        let b = batch(&mut rng, 8, 4, 3);
        let refs: Vec<&Transition> = b.iter().collect();
        let before = agent.target.clone();
        agent.update(&refs);
        for ((t, o), m) in agent.target.params().zip(before.params()).zip(agent.main.params()) {
            assert!(t >= o.min(m) - 1e-15 && t <= o.max(m) + 1e-15);
        }
    }

    #[test]
    fn chain_optimum_by_value_iteration() {
        let q = chain::optimal_q(0.8);
        assert!((q[1][1] - 1.0).abs() < 1e-12);
        assert!((q[0][1] - 0.8).abs() < 1e-12);
        assert!((q[0][0] - 0.64).abs() < 1e-12);
        assert!((q[1][0] - 0.64).abs() < 1e-12);
    }

    #[test]
    fn chain_converges_to_optimum() {
        let err = chain::train_and_measure(1, 50_000, 0.8);
        assert!(err < 1e-2, "max error {err}");
    }
}
