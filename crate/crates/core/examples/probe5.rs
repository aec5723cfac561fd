//! Scale test: cloning accuracy for the two viable expert/track combos at
//! more episodes and epochs, plus a deadband-below-drift variant that should
//! remove Noop from the action mix entirely.

use std::time::Instant;

use bclab_core::config::RunConfig;
use bclab_core::data::dataset_stats;
use bclab_core::env::{Action, TrackConfig};
use bclab_core::expert::{collect_demos, ExpertParams};
use bclab_core::policy::{train_bc, PolicyNet, TrainConfig};

fn main() {
    let cfg = RunConfig::default();
    let candidates: Vec<(&str, usize, usize, ExpertParams, TrackConfig)> = vec![
        (
            "E5 n20 r70 db.042",
            24,
            12,
            ExpertParams { lookahead: 1, angle_deadband: 0.042, v_target: 3.0, brake_curvature: 0.5 },
            TrackConfig { n_waypoints: 20, base_radius: 70.0, ..TrackConfig::default() },
        ),
        (
            "E3 n16 r60 db.08 40ep",
            40,
            20,
            ExpertParams { lookahead: 1, angle_deadband: 0.08, v_target: 3.0, brake_curvature: 0.6 },
            TrackConfig { n_waypoints: 16, base_radius: 60.0, ..TrackConfig::default() },
        ),
        (
            "E  n20 r70 db.08 40ep",
            40,
            20,
            ExpertParams { lookahead: 1, angle_deadband: 0.08, v_target: 3.0, brake_curvature: 0.5 },
            TrackConfig { n_waypoints: 20, base_radius: 70.0, ..TrackConfig::default() },
        ),
    ];

    for (name, eps, epochs, exp, track) in candidates {
        let demos =
            collect_demos(&track, &cfg.env, &cfg.render_config(), &exp, eps, cfg.demo_seed())
                .unwrap();
        let stats = dataset_stats(&demos);
        let n = stats.total_frames;
        let shares: Vec<String> = Action::ALL
            .iter()
            .map(|a| format!("{} {:.3}", a.name(), stats.action_counts[a.index()] as f64 / n as f64))
            .collect();
        let per_ep: Vec<f64> = demos
            .episodes
            .iter()
            .map(|ep| ep.iter().map(|r| r.reward as f64).sum())
            .collect();
        let mean_r = per_ep.iter().sum::<f64>() / per_ep.len() as f64;
        let min_r = per_ep.iter().cloned().fold(f64::INFINITY, f64::min);
        println!("{name}: frames {n}, reward/ep {mean_r:.1} (min {min_r:.1}), [{}]", shares.join(", "));
        let mut net = PolicyNet::init(64, 64, Default::default(), cfg.train_seed(0)).unwrap();
        let tc = TrainConfig {
            learning_rate: 1e-3,
            batch_size: 64,
            epochs,
            holdout_fraction: 0.1,
            seed: cfg.train_seed(0),
        };
        let t0 = Instant::now();
        let log = train_bc(&mut net, &demos, &tc).unwrap();
        for (i, (loss, acc)) in log
            .epoch_train_loss
            .iter()
            .zip(&log.epoch_holdout_accuracy)
            .enumerate()
        {
            println!("  epoch {:2}: loss {loss:.4} holdout_acc {acc:.4}", i + 1);
        }
        println!("  total train {:.0}s", t0.elapsed().as_secs_f64());
    }
}
