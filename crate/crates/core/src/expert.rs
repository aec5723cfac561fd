//! Scripted driving expert: a waypoint-pursuit controller with a fixed
//! decision cascade. Deterministic given (track, state), so demonstrations
//! regenerate bit-identically from a seed.

use crate::data::{Dataset, DemoRecord};
use crate::env::{
    self, Action, EnvParams, EnvState, RenderConfig, Track, TrackConfig, wrap_angle,
};
use crate::error::{Error, Result};
use crate::par;

/// Controller constants. With `v_target` at the speed cap, cruising
/// alternates Gas and Noop, which keeps the target action well represented
/// in demonstrations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExpertParams {
    /// How many waypoints past the next-unvisited one to aim at (1 = aim at
    /// the next-unvisited waypoint itself).
    pub lookahead: usize,
    /// Bearing error (radians) tolerated before steering.
    pub angle_deadband: f32,
    pub v_target: f32,
    /// Turn angle (radians) at the upcoming waypoint beyond which the expert
    /// brakes while still faster than v_target / 2.
    pub brake_curvature: f32,
}

impl Default for ExpertParams {
    fn default() -> Self {
        ExpertParams {
            lookahead: 1,
            angle_deadband: 0.04,
            v_target: 3.0,
            brake_curvature: 0.5,
        }
    }
}

impl ExpertParams {
    pub fn validate(&self) -> Result<()> {
        if self.lookahead == 0 {
            return Err(Error::InvalidConfig("lookahead must be >= 1".into()));
        }
        if !(self.angle_deadband > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "angle_deadband must be positive, got {}",
                self.angle_deadband
            )));
        }
        if !(self.v_target > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "v_target must be positive, got {}",
                self.v_target
            )));
        }
        if !(self.brake_curvature >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "brake_curvature must be >= 0, got {}",
                self.brake_curvature
            )));
        }
        Ok(())
    }
}

/// Decision cascade, evaluated top to bottom:
/// steer if misaligned, brake into sharp turns, gas below target speed,
/// otherwise coast. `Left` corrects a counterclockwise bearing error.
pub fn expert_action(state: &EnvState, track: &Track, params: &ExpertParams) -> Action {
    let n = track.n_waypoints();
    let Some(next) = state.next_unvisited() else {
        return Action::Noop; // lap already closed; nothing sensible to do
    };
    let target = (next + params.lookahead - 1) % n;
    let to_target = track.waypoints[target] - state.position;
    let alpha = if to_target.norm_sq() < 1e-12 {
        0.0
    } else {
        wrap_angle(to_target.y.atan2(to_target.x) - state.heading)
    };

    if alpha.abs() > params.angle_deadband {
        return if alpha > 0.0 { Action::Left } else { Action::Right };
    }
    if track.turn_angle(next) > params.brake_curvature && state.speed > params.v_target / 2.0 {
        return Action::Brake;
    }
    if state.speed < params.v_target {
        return Action::Gas;
    }
    Action::Noop
}

/// Roll the expert through one full episode, recording (frame, action,
/// reward) per step. The frame is rendered before the action is applied.
pub fn expert_episode(
    track: &Track,
    env_params: &EnvParams,
    render_cfg: &RenderConfig,
    expert_params: &ExpertParams,
) -> Result<Vec<DemoRecord>> {
    let mut state = env::reset(track);
    let mut records = Vec::new();
    while !state.done {
        let observation = env::render(&state, track, render_cfg);
        let action = expert_action(&state, track, expert_params);
        let (next, reward, _) = env::step(&state, action, track, env_params)?;
        records.push(DemoRecord {
            observation,
            action,
            reward,
            poisoned: false,
        });
        state = next;
    }
    Ok(records)
}

/// Collect `n_episodes` expert episodes, one fresh track per episode
/// (track seed = `seed + episode`). Episodes are independent, so they run
/// concurrently when the `parallel` feature is on; output order is always
/// episode order.
pub fn collect_demos(
    track_cfg: &TrackConfig,
    env_params: &EnvParams,
    render_cfg: &RenderConfig,
    expert_params: &ExpertParams,
    n_episodes: usize,
    seed: u64,
) -> Result<Dataset> {
    if n_episodes == 0 {
        return Err(Error::InvalidConfig("n_episodes must be >= 1".into()));
    }
    env_params.validate()?;
    render_cfg.validate()?;
    expert_params.validate()?;

    let episodes: Result<Vec<Vec<DemoRecord>>> = par::map_indexed(n_episodes, |e| {
        let track = track_cfg.generate(seed.wrapping_add(e as u64))?;
        expert_episode(&track, env_params, render_cfg, expert_params)
    })
    .into_iter()
    .collect();

    Ok(Dataset {
        height: render_cfg.height,
        width: render_cfg.width,
        episodes: episodes?,
    })
}

// ============================================================================
