//! Expert parameter search: for candidate (v_target, brake_curvature,
//! angle_deadband, lookahead, track) combos, report action shares, episode
//! reward, and a 1-nearest-neighbor holdout accuracy on downsampled frames.
//! The 1-NN score approximates how much of the action labeling is actually
//! a function of the visible frame, which upper-bounds what the CNN can do.

use bclab_core::config::RunConfig;
use bclab_core::data::dataset_stats;
use bclab_core::env::{Action, TrackConfig};
use bclab_core::expert::{collect_demos, ExpertParams};
use bclab_core::policy::holdout_split;

fn downsample(pixels: &[u8], h: usize, w: usize, f: usize) -> Vec<f32> {
    let (oh, ow) = (h / f, w / f);
    let mut out = vec![0.0f32; oh * ow * 3];
    for r in 0..oh {
        for c in 0..ow {
            for ch in 0..3 {
                let mut acc = 0.0f32;
                for dr in 0..f {
                    for dc in 0..f {
                        acc += pixels[((r * f + dr) * w + (c * f + dc)) * 3 + ch] as f32;
                    }
                }
                out[(r * ow + c) * 3 + ch] = acc / (f * f) as f32;
            }
        }
    }
    out
}

fn main() {
    let cfg = RunConfig::default();
    let candidates: Vec<(&str, ExpertParams, TrackConfig)> = vec![
        (
            "A base",
            ExpertParams { lookahead: 1, angle_deadband: 0.1, v_target: 3.0, brake_curvature: 0.18 },
            TrackConfig::default(),
        ),
        (
            "B nobrake tiny-deadband",
            ExpertParams { lookahead: 1, angle_deadband: 0.02, v_target: 3.0, brake_curvature: 9.0 },
            TrackConfig::default(),
        ),
        (
            "C vt2.6 brake.24 db.06",
            ExpertParams { lookahead: 1, angle_deadband: 0.06, v_target: 2.6, brake_curvature: 0.24 },
            TrackConfig::default(),
        ),
        (
            "D vt3 brake.26 db.06",
            ExpertParams { lookahead: 1, angle_deadband: 0.06, v_target: 3.0, brake_curvature: 0.26 },
            TrackConfig::default(),
        ),
        (
            "E sharp track vt3 brake.5 db.08",
            ExpertParams { lookahead: 1, angle_deadband: 0.08, v_target: 3.0, brake_curvature: 0.5 },
            TrackConfig { n_waypoints: 20, base_radius: 70.0, ..TrackConfig::default() },
        ),
        (
            "F sharp track nobrake db.05",
            ExpertParams { lookahead: 1, angle_deadband: 0.05, v_target: 3.0, brake_curvature: 9.0 },
            TrackConfig { n_waypoints: 20, base_radius: 70.0, ..TrackConfig::default() },
        ),
    ];

    for (name, exp, track) in candidates {
        let demos = match collect_demos(&track, &cfg.env, &cfg.render_config(), &exp, 8, 7) {
            Ok(d) => d,
            Err(e) => {
                println!("{name}: collect failed: {e}");
                continue;
            }
        };
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

        let flat = demos.flat();
        let feats: Vec<Vec<f32>> = flat
            .iter()
            .map(|r| downsample(&r.observation.pixels, demos.height, demos.width, 4))
            .collect();
        let (train_idx, hold_idx) = holdout_split(n, 0.1, 99).unwrap();
        let mut correct = 0usize;
        for &hi in &hold_idx {
            let mut best = f32::INFINITY;
            let mut best_a = Action::Noop;
            for &ti in &train_idx {
                let d: f32 = feats[hi]
                    .iter()
                    .zip(&feats[ti])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                if d < best {
                    best = d;
                    best_a = flat[ti].action;
                }
            }
            if best_a == flat[hi].action {
                correct += 1;
            }
        }
        println!(
            "{name}: frames {n}, reward/ep {mean_r:.1}, ep len {:.0}, 1nn {:.4}, shares [{}]",
            n as f64 / per_ep.len() as f64,
            correct as f64 / hold_idx.len() as f64,
            shares.join(", ")
        );
    }
}
