//! Compare the data-parallel batch paths against their single-threaded
//! twins. The two must agree bit for bit (asserted in unit tests); these
//! benches quantify what the thread pool buys on this machine.
//!
//! Run `cargo bench` for the rayon build and
//! `cargo bench --no-default-features` for the sequential fallback (there
//! the "parallel" entries degrade to the serial path by construction).

use std::time::Duration;

use criterion::{criterion_group, criterion_main, Criterion};

use bclab_core::data::Dataset;
use bclab_core::env::{Action, EnvParams, Observation, RenderConfig, TrackConfig};
use bclab_core::expert::collect_demos;
use bclab_core::policy::{
    argmax_action, batch_gradients, batch_gradients_serial, policy_accuracy, PolicyNet,
    PolicyWidths,
};

const SIDE: usize = 32;

fn demo_frames() -> Dataset {
    let mut env = EnvParams::default();
    env.t_max = 120;
    collect_demos(
        &TrackConfig::default(),
        &env,
        &RenderConfig {
            height: SIDE,
            width: SIDE,
            view_span: 26.0,
        },
        &Default::default(),
        1,
        7,
    )
    .expect("demo collection")
}

fn bench_batch_gradients(c: &mut Criterion) {
    let dataset = demo_frames();
    let net = PolicyNet::init(SIDE, SIDE, PolicyWidths::default(), 1).expect("net");
    let flat = dataset.flat();
    let frames: Vec<(&Observation, Action)> = flat
        .iter()
        .take(64)
        .map(|r| (&r.observation, r.action))
        .collect();

    let mut group = c.benchmark_group("batch_gradients_64_frames");
    group.sample_size(10).measurement_time(Duration::from_secs(8));
    group.bench_function("parallel", |b| {
        b.iter(|| batch_gradients(&net, &frames).expect("gradients"))
    });
    group.bench_function("serial", |b| {
        b.iter(|| batch_gradients_serial(&net, &frames).expect("gradients"))
    });
    group.finish();
}

fn bench_forward_accuracy(c: &mut Criterion) {
    let dataset = demo_frames();
    let net = PolicyNet::init(SIDE, SIDE, PolicyWidths::default(), 1).expect("net");
    let flat = dataset.flat();
    let frames: Vec<(&Observation, Action)> = flat
        .iter()
        .take(64)
        .map(|r| (&r.observation, r.action))
        .collect();

    let mut group = c.benchmark_group("forward_accuracy_64_frames");
    group.sample_size(10).measurement_time(Duration::from_secs(5));
    group.bench_function("parallel", |b| {
        b.iter(|| policy_accuracy(&net, &frames).expect("accuracy"))
    });
    group.bench_function("serial", |b| {
        b.iter(|| {
            let mut hits = 0usize;
            for (obs, action) in &frames {
                let dist = net.forward(obs).expect("forward");
                hits += (argmax_action(&dist) == *action) as usize;
            }
            hits as f64 / frames.len() as f64
        })
    });
    group.finish();
}

criterion_group!(benches, bench_batch_gradients, bench_forward_accuracy);
criterion_main!(benches);
