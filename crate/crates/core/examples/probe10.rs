//! Per-track expert diagnostics on the evaluation track set: reward, step
//! count, completion, and off-track step count for each seed, to localize
//! any track the controller handles badly.

use bclab_core::config::RunConfig;
use bclab_core::env::{self, RenderConfig, TrackConfig};
use bclab_core::expert::{expert_action, ExpertParams};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n: u64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(30);
    let db: f32 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(0.042);
    let rn: f32 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(0.15);
    let set: String = args.get(4).cloned().unwrap_or_else(|| "eval".into());
    let radius: f32 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(70.0);

    let cfg = RunConfig::default();
    let exp = ExpertParams {
        lookahead: 1,
        angle_deadband: db,
        v_target: 3.0,
        brake_curvature: 0.5,
    };
    let track_cfg = TrackConfig {
        n_waypoints: 20,
        base_radius: radius,
        radial_noise: rn,
        ..TrackConfig::default()
    };
    let _ = RenderConfig { height: 64, width: 64, view_span: 30.0 };
    let base = match set.as_str() {
        "demo" => cfg.demo_seed(),
        "raw" => 0,
        _ => cfg.eval_track_base(),
    };

    for i in 0..n {
        let track = track_cfg.generate(base.wrapping_add(i)).unwrap();
        let mut state = env::reset(&track);
        let mut total = 0.0f64;
        let mut off = 0usize;
        let mut brakes = 0usize;
        while !state.done {
            let a = expert_action(&state, &track, &exp);
            if a == env::Action::Brake {
                brakes += 1;
            }
            let (next, r, _) = env::step(&state, a, &track, &cfg.env).unwrap();
            if r < -0.3 {
                off += 1;
            }
            total += r as f64;
            state = next;
        }
        let captured = state.visited.iter().filter(|&&v| v).count();
        println!(
            "track {i:2}: reward {total:8.1} steps {:4} captured {captured:2}/20 off {off:3} brakes {brakes:3}",
            state.step_index
        );
    }
}
