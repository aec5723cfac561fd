//! Final calibration for the no-brake geometry: more episodes, more epochs,
//! wider view spans, and one wider-net variant. Reports the full accuracy
//! trajectory plus recalls so the committed scale can be chosen with margin.

use bclab_core::config::RunConfig;
use bclab_core::data::dataset_stats;
use bclab_core::env::{Action, RenderConfig, TrackConfig};
use bclab_core::expert::{collect_demos, ExpertParams};
use bclab_core::policy::{holdout_split, train_bc, PolicyNet, PolicyWidths, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let eps: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(72);
    let epochs: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(28);
    let span: f32 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(30.0);
    let db: f32 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(0.08);
    let rn: f32 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(0.15);
    let wide: bool = args.get(6).map(|s| s == "wide").unwrap_or(false);

    let cfg = RunConfig::default();
    let exp = ExpertParams {
        lookahead: 1,
        angle_deadband: db,
        v_target: 3.0,
        brake_curvature: 0.5,
    };
    let track = TrackConfig {
        n_waypoints: 20,
        base_radius: 70.0,
        radial_noise: rn,
        ..TrackConfig::default()
    };
    let render = RenderConfig { height: 64, width: 64, view_span: span };
    println!("eps={eps} epochs={epochs} span={span} db={db} rn={rn} wide={wide}");

    let demos = collect_demos(&track, &cfg.env, &render, &exp, eps, cfg.demo_seed()).unwrap();
    let stats = dataset_stats(&demos);
    let n = stats.total_frames;
    let shares: Vec<String> = Action::ALL
        .iter()
        .map(|a| format!("{} {:.3}", a.name(), stats.action_counts[a.index()] as f64 / n as f64))
        .collect();
    println!("frames {n}, [{}]", shares.join(", "));

    let widths = if wide {
        PolicyWidths { conv: [12, 24, 48], fc: [160, 48] }
    } else {
        PolicyWidths::default()
    };
    let mut net = PolicyNet::init(64, 64, widths, cfg.train_seed(0)).unwrap();
    let tc = TrainConfig {
        learning_rate: 1e-3,
        batch_size: 64,
        epochs,
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
        println!("epoch {:2}: loss {loss:.4} holdout_acc {acc:.4}", i + 1);
    }

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
            "true {:5} recall {:.3}  [{}]",
            a.name(),
            row[a.index()] as f64 / total as f64,
            cells.join(" ")
        );
    }
}
