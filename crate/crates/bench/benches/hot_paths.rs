use criterion::{black_box, criterion_group, criterion_main, Criterion};

use uavris_core::agents::train::ActRngs;
use uavris_core::agents::{act, train, AgentBundle, Mode, Transition};
use uavris_core::experiment::profiles::{desk_agent, desk_scenario};
use uavris_core::noma::all_rates;
use uavris_core::{Env, PolicyKind};

fn env_step(c: &mut Criterion) {
    let scn = desk_scenario();
    let mut env = Env::new(scn, 1).unwrap();
    env.reset(1, 0).unwrap();
    c.bench_function("env_step_idle", |b| {
        b.iter(|| {
            if env.done() {
                env.reset(1, 0).unwrap();
            }
            black_box(env.step(env.idle_decision()).unwrap())
        })
    });
}

fn channel_and_rates(c: &mut Criterion) {
    let scn = desk_scenario();
    let mut env = Env::new(scn.clone(), 1).unwrap();
    env.reset(1, 0).unwrap();
    let pose = env.state().pose.clone();
    let draw = env.draw(&pose).unwrap();
    let mut d = env.idle_decision();
    for u in 0..4 {
        d.assignment[[u, u % 2]] = true;
        d.power[[u, u % 2]] = env.limits().power_mask[0];
    }
    c.bench_function("draw_channels", |b| b.iter(|| black_box(env.draw(&pose).unwrap())));
    let out = env.evaluate(&d, &draw).unwrap();
    c.bench_function("sic_rates", |b| b.iter(|| black_box(all_rates(&out.channels, &d, &scn.receiver()).unwrap())));
}

fn acting(c: &mut Criterion) {
    let scn = desk_scenario();
    let bundle = AgentBundle::new(&scn, &desk_agent(), PolicyKind::Ours, 1);
    let mut env = Env::new(scn.clone(), 1).unwrap();
    env.reset(1, 0).unwrap();
    let gains = env.step(env.idle_decision()).unwrap().gains;
    let mut rngs = ActRngs::new(1, 0);
    c.bench_function("act_explore", |b| b.iter(|| black_box(act(&bundle, &env, &gains, Mode::Explore(0.1), &mut rngs).unwrap())));
}

fn ddqn_update(c: &mut Criterion) {
    let scn = desk_scenario();
    let mut bundle = AgentBundle::new(&scn, &desk_agent(), PolicyKind::Ours, 1);
    let ddqn = bundle.ddqn.as_mut().unwrap();
    let dim = ddqn.main.input_dim();
    let batch: Vec<Transition> = (0..ddqn.cfg.batch_size)
        .map(|i| Transition {
            obs: vec![0.01 * i as f64; dim],
            action: i % ddqn.num_actions(),
            reward: -1.0,
            discount: 0.8,
            next_obs: vec![0.02; dim],
            terminal: false,
        })
        .collect();
    let refs: Vec<&Transition> = batch.iter().collect();
    c.bench_function("ddqn_update_batch", |b| b.iter(|| black_box(ddqn.update(&refs))));
}

fn short_training(c: &mut Criterion) {
    let mut scn = desk_scenario();
    scn.slots_per_episode = 40;
    let mut agent = desk_agent();
    agent.episodes = 2;
    let mut g = c.benchmark_group("training");
    g.sample_size(10);
    g.bench_function("two_short_episodes", |b| b.iter(|| black_box(train(&scn, &agent, PolicyKind::Ours, 1, |_| {}).unwrap().episodes)));
    g.finish();
}

criterion_group!(benches, env_step, channel_and_rates, acting, ddqn_update, short_training);
criterion_main!(benches);
