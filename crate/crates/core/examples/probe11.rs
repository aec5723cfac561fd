//! Step trace of the expert on one evaluation track: target waypoint,
//! distance to it, bearing error and chosen action, to pin down exactly how
//! a capture gets missed.

use bclab_core::config::RunConfig;
use bclab_core::env::{self, TrackConfig};
use bclab_core::expert::{expert_action, ExpertParams};

fn wrap_angle(a: f32) -> f32 {
    let mut a = a;
    while a > std::f32::consts::PI {
        a -= 2.0 * std::f32::consts::PI;
    }
    while a < -std::f32::consts::PI {
        a += 2.0 * std::f32::consts::PI;
    }
    a
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let idx: u64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(13);
    let db: f32 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(0.040);
    let rn: f32 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(0.15);
    let radius: f32 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(70.0);

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
    let track = track_cfg.generate(cfg.eval_track_base().wrapping_add(idx)).unwrap();
    for (i, w) in track.waypoints.iter().enumerate() {
        let d_next = {
            let n = &track.waypoints[(i + 1) % track.waypoints.len()];
            ((n.x - w.x).powi(2) + (n.y - w.y).powi(2)).sqrt()
        };
        println!(
            "wp {i:2}: ({:7.2}, {:7.2}) r {:6.2} spacing-> {:5.2} turn {:5.3}",
            w.x,
            w.y,
            (w.x * w.x + w.y * w.y).sqrt(),
            d_next,
            track.turn_angle(i)
        );
    }
    let mut state = env::reset(&track);
    let mut prev_target = usize::MAX;
    while !state.done {
        let a = expert_action(&state, &track, &exp);
        let target = state.next_unvisited().unwrap_or(0);
        let w = &track.waypoints[target];
        let dx = w.x - state.position.x;
        let dy = w.y - state.position.y;
        let dist = (dx * dx + dy * dy).sqrt();
        let bearing = wrap_angle(dy.atan2(dx) - state.heading);
        // print the approach window: whenever the target changes or we are
        // close to it, plus every off-track step
        let interesting = target != prev_target || dist < 8.0 || state.off_track_streak > 0;
        if interesting {
            println!(
                "t {:4} pos ({:7.2},{:7.2}) v {:.2} tgt {target:2} dist {dist:6.2} bear {bearing:+.3} act {:?} off {}",
                state.step_index, state.position.x, state.position.y, state.speed, a, state.off_track_streak
            );
        }
        prev_target = target;
        let (next, _, _) = env::step(&state, a, &track, &cfg.env).unwrap();
        state = next;
    }
    let captured = state.visited.iter().filter(|&&v| v).count();
    println!("done at t {} captured {captured}/20", state.step_index);
}
