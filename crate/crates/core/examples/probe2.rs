//! Training-convergence diagnostics: per-epoch holdout accuracy at several
//! scales and learning rates. Scratch tool; delete before release.

use std::time::Instant;

use bclab_core::config::RunConfig;
use bclab_core::env::Action;
use bclab_core::expert::collect_demos;
use bclab_core::policy::{train_bc, PolicyNet};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n_episodes: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(24);
    let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(16);
    let lr: f32 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1e-3);
    let batch: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(64);

    let mut cfg = RunConfig::default();
    cfg.n_episodes = n_episodes;
    cfg.epochs = epochs;
    cfg.learning_rate = lr;
    cfg.batch_size = batch;

    let t0 = Instant::now();
    let demos = collect_demos(
        &cfg.track_config(),
        &cfg.env,
        &cfg.render_config(),
        &cfg.expert,
        cfg.n_episodes,
        cfg.demo_seed(),
    )
    .unwrap();
    let stats = bclab_core::data::dataset_stats(&demos);
    println!(
        "eps={n_episodes} epochs={epochs} lr={lr} batch={batch}: {} frames, gas {:.1}%",
        stats.total_frames,
        100.0 * stats.action_counts[Action::Gas.index()] as f64 / stats.total_frames as f64
    );

    let mut net = PolicyNet::init(64, 64, cfg.widths(), cfg.train_seed(0)).unwrap();
    let log = train_bc(&mut net, &demos, &cfg.train_config(0)).unwrap();
    for (i, (loss, acc)) in log
        .epoch_train_loss
        .iter()
        .zip(&log.epoch_holdout_accuracy)
        .enumerate()
    {
        println!(
            "[{:6.1}s] epoch {:>2}: loss {loss:.4} holdout_acc {acc:.4}",
            t0.elapsed().as_secs_f64(),
            i + 1
        );
    }
}
