//! Frame-visibility test: does cloning accuracy improve when the pursuit
//! target always fits inside the rendered frame? Also prints per-action
//! holdout recall to localize the residual errors.

use bclab_core::config::RunConfig;
use bclab_core::data::dataset_stats;
use bclab_core::env::{Action, RenderConfig, TrackConfig};
use bclab_core::expert::{collect_demos, ExpertParams};
use bclab_core::policy::{holdout_split, train_bc, PolicyNet, TrainConfig};

fn main() {
    let cfg = RunConfig::default();
    let exp = |db: f32| ExpertParams {
        lookahead: 1,
        angle_deadband: db,
        v_target: 3.0,
        brake_curvature: 0.5,
    };
    let candidates: Vec<(&str, ExpertParams, TrackConfig, f32)> = vec![
        (
            "E7 n24 r70 db.08 span26",
            exp(0.08),
            TrackConfig { n_waypoints: 24, base_radius: 70.0, ..TrackConfig::default() },
            26.0,
        ),
        (
            "E8 n20 r70 db.08 span30",
            exp(0.08),
            TrackConfig { n_waypoints: 20, base_radius: 70.0, ..TrackConfig::default() },
            30.0,
        ),
        (
            "E6 n20 r70 db.08 rn.08 span26",
            exp(0.08),
            TrackConfig {
                n_waypoints: 20,
                base_radius: 70.0,
                radial_noise: 0.08,
                ..TrackConfig::default()
            },
            26.0,
        ),
    ];

    for (name, exp, track, span) in candidates {
        let render = RenderConfig { height: 64, width: 64, view_span: span };
        let demos = collect_demos(&track, &cfg.env, &render, &exp, 40, cfg.demo_seed()).unwrap();
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
            epochs: 20,
            holdout_fraction: 0.1,
            seed: cfg.train_seed(0),
        };
        let log = train_bc(&mut net, &demos, &tc).unwrap();
        for (i, acc) in log.epoch_holdout_accuracy.iter().enumerate() {
            if (i + 1) % 4 == 0 || i + 1 == 20 {
                println!("  epoch {:2}: holdout_acc {acc:.4}", i + 1);
            }
        }

        // per-action recall and confusion on the holdout
        let flat = demos.flat();
        let (_, hold) = holdout_split(n, 0.1, tc.seed).unwrap();
        let mut confusion = [[0usize; 5]; 5];
        for &i in &hold {
            let dist = net.forward(&flat[i].observation).unwrap();
            let pred = bclab_core::policy::argmax_action(&dist);
            confusion[flat[i].action.index()][pred.index()] += 1;
        }
        for a in Action::ALL {
            let row = confusion[a.index()];
            let total: usize = row.iter().sum();
            if total == 0 {
                continue;
            }
            let cells: Vec<String> = Action::ALL
                .iter()
                .map(|p| format!("{}:{}", p.name(), row[p.index()]))
                .collect();
            println!(
                "  true {:5} recall {:.3}  [{}]",
                a.name(),
                row[a.index()] as f64 / total as f64,
                cells.join(" ")
            );
        }
    }
}
