//! Clipped-surrogate policy optimization with a tanh-squashed Gaussian
//! policy and a separate value network.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::nn::{clip_factor, Adam, Gradients, Mlp};

const LN_2PI: f64 = 1.8378770664093453;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpoConfig {
    pub hidden: Vec<usize>,
    pub clip: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub grad_clip: f64,
    pub init_log_std: f64,
    /// Scale applied to the initial actor output layer.
    pub init_output_scale: f64,
}

/// `log(1 - tanh(u)^2)`, stable for large `|u|`.
fn log_one_minus_tanh2(u: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Log-density of the squashed action `tanh(u)` under mean `mu` and
/// log-standard-deviation `log_std`, evaluated at the pre-squash sample `u`.
pub fn squashed_log_prob(mu: &[f64], log_std: &[f64], u: &[f64]) -> f64 {
    mu.iter()
        .zip(log_std)
        .zip(u)
        .map(|((m, s), x)| {
            let z = (x - m) / s.exp();
            -0.5 * z * z - s - 0.5 * LN_2PI - log_one_minus_tanh2(*x)
        })
        .sum()
}

/// Per-step data collected for one update.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    pub obs: Vec<Vec<f64>>,
    /// Pre-squash samples.
    pub pre: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
}

impl Rollout {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn clear(&mut self) {
        *self = Self::default();
    }
}

/// Generalized advantage estimates and value targets. `bootstrap` is the
/// value after the last step, ignored when that step is terminal.
pub fn gae(rewards: &[f64], values: &[f64], dones: &[bool], bootstrap: f64, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let next_value = if t + 1 < n { values[t + 1] } else { bootstrap };
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        running = delta + gamma * lambda * live * running;
        adv[t] = running;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Zero-mean, unit-variance advantages; left untouched when they are all
/// equal.
pub fn normalize(adv: &mut [f64]) {
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    if var.sqrt() > 1e-12 {
        adv.iter_mut().for_each(|a| *a = (*a - mean) / var.sqrt());
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PpoSample {
    pub pre: Vec<f64>,
    pub action: Vec<f64>,
    pub log_prob: f64,
    pub value: f64,
}

/// Gradients of the clipped surrogate for one minibatch.
pub struct PolicyGrad {
    pub loss: f64,
    pub net: Gradients,
    pub log_std: Array1<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PpoAgent {
    pub actor: Mlp,
    pub log_std: Array1<f64>,
    pub critic: Mlp,
    pub cfg: PpoConfig,
    actor_opt: Adam,
    critic_opt: Adam,
}

fn rows(data: &[Vec<f64>], idx: &[usize], width: usize) -> Array2<f64> {
    let flat: Vec<f64> = idx.iter().flat_map(|&i| data[i].iter().copied()).collect();
    Array2::from_shape_vec((idx.len(), width), flat).expect("rows of equal width")
}

impl PpoAgent {
    pub fn new<R: Rng + ?Sized>(input: usize, action_dim: usize, cfg: PpoConfig, rng: &mut R) -> Self {
        let sizes = |out: usize| {
            let mut s = vec![input];
            s.extend(&cfg.hidden);
            s.push(out);
            s
        };
        let mut actor = Mlp::new(&sizes(action_dim), rng);
        actor.scale_output(cfg.init_output_scale);
        let critic = Mlp::new(&sizes(1), rng);
        let actor_opt = Adam::new(actor.num_params() + action_dim, cfg.actor_lr);
        let critic_opt = Adam::new(critic.num_params(), cfg.critic_lr);
        Self { log_std: Array1::from_elem(action_dim, cfg.init_log_std), actor, critic, cfg, actor_opt, critic_opt }
    }

    pub fn action_dim(&self) -> usize {
        self.log_std.len()
    }

    pub fn value(&self, obs: &[f64]) -> f64 {
        self.critic.forward(obs)[0]
    }

    /// Squashed mean, the deterministic action.
    pub fn mean_action(&self, obs: &[f64]) -> Vec<f64> {
        self.actor.forward(obs).into_iter().map(f64::tanh).collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> PpoSample {
        let mu = self.actor.forward(obs);
        let pre: Vec<f64> = mu
            .iter()
            .zip(self.log_std.iter())
            .map(|(m, s)| m + s.exp() * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let log_prob = squashed_log_prob(&mu, self.log_std.as_slice().expect("contiguous"), &pre);
        PpoSample { action: pre.iter().map(|x| x.tanh()).collect(), pre, log_prob, value: self.value(obs) }
    }

    pub fn log_probs(&self, obs: &[Vec<f64>], pre: &[Vec<f64>]) -> Vec<f64> {
        let idx: Vec<usize> = (0..obs.len()).collect();
        let mu = self.actor.forward_batch(rows(obs, &idx, self.actor.input_dim()));
        let ls = self.log_std.as_slice().expect("contiguous");
        (0..obs.len()).map(|i| squashed_log_prob(mu.row(i).as_slice().expect("contiguous"), ls, &pre[i])).collect()
    }

    /// Clipped surrogate `-mean min(r A, clip(r, 1 - eps, 1 + eps) A)` and its
    /// gradient with respect to the actor and the log-standard-deviations.
    pub fn policy_loss_and_grad(
        actor: &Mlp,
        log_std: &Array1<f64>,
        obs: &Array2<f64>,
        pre: &[Vec<f64>],
        old_log_prob: &[f64],
        adv: &[f64],
        clip: f64,
    ) -> PolicyGrad {
        let trace = actor.forward_trace(obs.clone());
        let mu = trace.output();
        let b = pre.len() as f64;
        let ls = log_std.as_slice().expect("contiguous");
        let mut grad_mu = Array2::zeros(mu.raw_dim());
        let mut grad_ls = Array1::zeros(log_std.len());
        let mut loss = 0.0;
        for i in 0..pre.len() {
            let m = mu.row(i);
            let lp = squashed_log_prob(m.as_slice().expect("contiguous"), ls, &pre[i]);
            let ratio = (lp - old_log_prob[i]).exp();
            let unclipped = ratio * adv[i];
            let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * adv[i];
            loss -= unclipped.min(clipped) / b;
            // The clipped branch is flat in the ratio; only the unclipped
            // branch carries gradient.
            if unclipped <= clipped {
                let d_lp = -unclipped / b;
                for k in 0..ls.len() {
                    let inv_var = (-2.0 * ls[k]).exp();
                    let diff = pre[i][k] - m[k];
                    grad_mu[[i, k]] = d_lp * diff * inv_var;
                    grad_ls[k] += d_lp * (diff * diff * inv_var - 1.0);
                }
            }
        }
        PolicyGrad { loss, net: actor.backward(&trace, grad_mu), log_std: grad_ls }
    }

    /// Mean squared error of the critic against value targets.
    pub fn value_loss_and_grad(critic: &Mlp, obs: &Array2<f64>, returns: &[f64]) -> (f64, Gradients) {
        let trace = critic.forward_trace(obs.clone());
        let v = trace.output();
        let b = returns.len() as f64;
        let mut grad = Array2::zeros(v.raw_dim());
        let mut loss = 0.0;
        for i in 0..returns.len() {
            let err = v[[i, 0]] - returns[i];
            loss += err * err / b;
            grad[[i, 0]] = 2.0 * err / b;
        }
        (loss, critic.backward(&trace, grad))
    }

    /// Runs the configured epochs over the rollout. Old log-probabilities are
    /// taken from the current actor at entry, so the first minibatch starts
    /// at ratio one. Returns mean policy and value losses.
    pub fn update<R: Rng + ?Sized>(&mut self, rollout: &Rollout, bootstrap: f64, rng: &mut R) -> (f64, f64) {
        if rollout.is_empty() {
            return (0.0, 0.0);
        }
        let (mut adv, returns) =
            gae(&rollout.rewards, &rollout.values, &rollout.dones, bootstrap, self.cfg.gamma, self.cfg.gae_lambda);
        normalize(&mut adv);
        let old = self.log_probs(&rollout.obs, &rollout.pre);
        let width = self.actor.input_dim();
        let mut order: Vec<usize> = (0..rollout.len()).collect();
        let (mut p_sum, mut v_sum, mut count) = (0.0, 0.0, 0);
        for _ in 0..self.cfg.epochs {
            order.shuffle(rng);
            for chunk in order.chunks(self.cfg.minibatch.max(1)) {
                let obs = rows(&rollout.obs, chunk, width);
                let pre: Vec<Vec<f64>> = chunk.iter().map(|&i| rollout.pre[i].clone()).collect();
                let old_c: Vec<f64> = chunk.iter().map(|&i| old[i]).collect();
                let adv_c: Vec<f64> = chunk.iter().map(|&i| adv[i]).collect();
                let ret_c: Vec<f64> = chunk.iter().map(|&i| returns[i]).collect();

                let mut pg =
                    Self::policy_loss_and_grad(&self.actor, &self.log_std, &obs, &pre, &old_c, &adv_c, self.cfg.clip);
                let sq = pg.net.sum_squares() + pg.log_std.iter().map(|g| g * g).sum::<f64>();
                let f = clip_factor(sq, self.cfg.grad_clip);
                pg.net.scale(f);
                pg.log_std.mapv_inplace(|g| g * f);
                self.actor_opt.step(
                    self.actor.params_mut().chain(self.log_std.iter_mut()),
                    pg.net.values().chain(pg.log_std.iter().copied()),
                );

                let (vl, mut vg) = Self::value_loss_and_grad(&self.critic, &obs, &ret_c);
                vg.scale(clip_factor(vg.sum_squares(), self.cfg.grad_clip));
                self.critic_opt.step(self.critic.params_mut(), vg.values());

                p_sum += pg.loss;
                v_sum += vl;
                count += 1;
            }
        }
        (p_sum / count as f64, v_sum / count as f64)
    }

    pub fn is_finite(&self) -> bool {
        self.actor.is_finite() && self.critic.is_finite() && self.log_std.iter().all(|v| v.is_finite())
    }
}
