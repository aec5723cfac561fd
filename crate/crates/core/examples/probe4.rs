//! CNN cloning accuracy under candidate expert/track parameterizations.
//! Trains the standard policy net on 24 episodes for a handful of epochs and
//! prints the per-epoch holdout accuracy, which is the number the acceptance
//! bar actually cares about.

use bclab_core::config::RunConfig;
use bclab_core::data::dataset_stats;
use bclab_core::env::{Action, TrackConfig};
use bclab_core::expert::{collect_demos, ExpertParams};
use bclab_core::policy::{train_bc, PolicyNet, TrainConfig};

fn main() {
    let cfg = RunConfig::default();
    let candidates: Vec<(&str, ExpertParams, TrackConfig)> = vec![
        (
            "E  n20 r70 db.08 vt3 nobrake",
            ExpertParams { lookahead: 1, angle_deadband: 0.08, v_target: 3.0, brake_curvature: 0.5 },
            TrackConfig { n_waypoints: 20, base_radius: 70.0, ..TrackConfig::default() },
        ),
        (
            "E2 n20 r70 db.05 vt3 nobrake",
            ExpertParams { lookahead: 1, angle_deadband: 0.05, v_target: 3.0, brake_curvature: 0.5 },
            TrackConfig { n_waypoints: 20, base_radius: 70.0, ..TrackConfig::default() },
        ),
        (
            "E3 n16 r60 db.08 vt3 nobrake",
            ExpertParams { lookahead: 1, angle_deadband: 0.08, v_target: 3.0, brake_curvature: 0.6 },
            TrackConfig { n_waypoints: 16, base_radius: 60.0, ..TrackConfig::default() },
        ),
        (
            "E4 n20 r70 db.08 la2 vt3 nobrake",
            ExpertParams { lookahead: 2, angle_deadband: 0.08, v_target: 3.0, brake_curvature: 0.5 },
            TrackConfig { n_waypoints: 20, base_radius: 70.0, ..TrackConfig::default() },
        ),
    ];

    for (name, exp, track) in candidates {
        let demos =
            collect_demos(&track, &cfg.env, &cfg.render_config(), &exp, 24, cfg.demo_seed())
                .unwrap();
        let stats = dataset_stats(&demos);
        let n = stats.total_frames;
        let gas = stats.action_counts[Action::Gas.index()] as f64 / n as f64;
        let per_ep: Vec<f64> = demos
            .episodes
            .iter()
            .map(|ep| ep.iter().map(|r| r.reward as f64).sum())
            .collect();
        let mean_r = per_ep.iter().sum::<f64>() / per_ep.len() as f64;
        println!("{name}: frames {n}, gas {gas:.3}, reward/ep {mean_r:.1}");
        let mut net = PolicyNet::init(64, 64, Default::default(), cfg.train_seed(0)).unwrap();
        let tc = TrainConfig {
            learning_rate: 1e-3,
            batch_size: 64,
            epochs: 12,
            holdout_fraction: 0.1,
            seed: cfg.train_seed(0),
        };
        let log = train_bc(&mut net, &demos, &tc).unwrap();
        for (i, (loss, acc)) in log
            .epoch_train_loss
            .iter()
            .zip(&log.epoch_holdout_accuracy)
            .enumerate()
        {
            println!("  epoch {:2}: loss {loss:.4} holdout_acc {acc:.4}", i + 1);
        }
    }
}
