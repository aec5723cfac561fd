//! Top-down driving simulator on procedurally generated loop tracks.
//!
//! The world is a closed polyline of waypoints with a constant road
//! half-width. Dynamics are deterministic: the only randomness anywhere is
//! the seeded track generator. Episodes reward waypoint progress and
//! penalize time and off-track excursions.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt;

use crate::error::{Error, Result};

// ============================================================================
// geometry
// ============================================================================

/// 2D point / vector in world units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vec2 {
    pub x: f32,
    pub y: f32,
}

impl Vec2 {
    pub const fn new(x: f32, y: f32) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, o: Vec2) -> f32 {
        self.x * o.x + self.y * o.y
    }

    pub fn norm_sq(self) -> f32 {
        self.dot(self)
    }

    pub fn norm(self) -> f32 {
        self.norm_sq().sqrt()
    }

    pub fn dist_sq(self, o: Vec2) -> f32 {
        (self - o).norm_sq()
    }

    pub fn dist(self, o: Vec2) -> f32 {
        self.dist_sq(o).sqrt()
    }
}

impl std::ops::Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl std::ops::Mul<f32> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f32) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

/// Squared distance from point `p` to segment `ab`.
pub(crate) fn point_segment_dist_sq(p: Vec2, a: Vec2, b: Vec2) -> f32 {
    let ab = b - a;
    let len_sq = ab.norm_sq();
    if len_sq == 0.0 {
        return p.dist_sq(a);
    }
    let t = ((p - a).dot(ab) / len_sq).clamp(0.0, 1.0);
    p.dist_sq(a + ab * t)
}

/// Wrap an angle into (-pi, pi].
pub(crate) fn wrap_angle(a: f32) -> f32 {
    let mut a = a % std::f32::consts::TAU;
    if a <= -std::f32::consts::PI {
        a += std::f32::consts::TAU;
    } else if a > std::f32::consts::PI {
        a -= std::f32::consts::TAU;
    }
    a
}

// ============================================================================
// actions
// ============================================================================

/// Discrete driving action. The wire encoding (dataset files, checkpoints,
/// network output index) is the enum discriminant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Action {
    Noop = 0,
    Gas = 1,
    Left = 2,
    Right = 3,
    Brake = 4,
}

impl Action {
    pub const COUNT: usize = 5;
    pub const ALL: [Action; 5] = [
        Action::Noop,
        Action::Gas,
        Action::Left,
        Action::Right,
        Action::Brake,
    ];

    pub fn from_u8(v: u8) -> Result<Action> {
        match v {
            0 => Ok(Action::Noop),
            1 => Ok(Action::Gas),
            2 => Ok(Action::Left),
            3 => Ok(Action::Right),
            4 => Ok(Action::Brake),
            _ => Err(Error::InvalidInput(format!("action byte {v} out of range"))),
        }
    }

    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Noop => "noop",
            Action::Gas => "gas",
            Action::Left => "left",
            Action::Right => "right",
            Action::Brake => "brake",
        }
    }

    pub fn from_name(s: &str) -> Result<Action> {
        Action::ALL
            .iter()
            .copied()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown action name {s:?}")))
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

// ============================================================================
// track
// ============================================================================

pub const DEFAULT_HALF_WIDTH: f32 = 2.0;

/// Closed loop track: waypoints joined by straight centerline segments.
#[derive(Clone, Debug, PartialEq)]
pub struct Track {
    pub seed: u64,
    pub waypoints: Vec<Vec2>,
    pub half_width: f32,
}

impl Track {
    pub fn n_waypoints(&self) -> usize {
        self.waypoints.len()
    }

    /// Segment `i` runs from waypoint `i` to waypoint `(i + 1) % n`.
    pub fn segment(&self, i: usize) -> (Vec2, Vec2) {
        let n = self.waypoints.len();
        (self.waypoints[i], self.waypoints[(i + 1) % n])
    }

    /// Squared distance from `p` to the nearest centerline segment.
    pub fn centerline_dist_sq(&self, p: Vec2) -> f32 {
        let n = self.waypoints.len();
        let mut best = f32::INFINITY;
        for i in 0..n {
            let (a, b) = self.segment(i);
            let d = point_segment_dist_sq(p, a, b);
            if d < best {
                best = d;
            }
        }
        best
    }

    /// Interior turn angle at waypoint `i`: the absolute heading change from
    /// the incoming segment to the outgoing one.
    pub fn turn_angle(&self, i: usize) -> f32 {
        let n = self.waypoints.len();
        let prev = self.waypoints[(i + n - 1) % n];
        let here = self.waypoints[i];
        let next = self.waypoints[(i + 1) % n];
        let incoming = here - prev;
        let outgoing = next - here;
        wrap_angle(outgoing.y.atan2(outgoing.x) - incoming.y.atan2(incoming.x)).abs()
    }
}

/// Generation knobs for one family of tracks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackConfig {
    pub n_waypoints: usize,
    pub base_radius: f32,
    pub radial_noise: f32,
    pub half_width: f32,
}

impl Default for TrackConfig {
    fn default() -> Self {
        TrackConfig {
            n_waypoints: 20,
            base_radius: 70.0,
            radial_noise: 0.15,
            half_width: DEFAULT_HALF_WIDTH,
        }
    }
}

impl TrackConfig {
    pub fn generate(&self, seed: u64) -> Result<Track> {
        if !(self.half_width > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "half_width must be positive, got {}",
                self.half_width
            )));
        }
        let mut track =
            generate_track(seed, self.n_waypoints, self.base_radius, self.radial_noise)?;
        track.half_width = self.half_width;
        Ok(track)
    }
}

/// Generate a loop track: waypoints sit at equally spaced polar angles around
/// the origin, with the radius perturbed by a seeded smooth noise profile
/// whose total swing stays within `base_radius * radial_noise`. Smoothness
/// (a short random Fourier series rather than independent per-waypoint
/// draws) keeps adjacent radii correlated, so turn angles stay drivable at
/// every noise level. Same seed, same track.
pub fn generate_track(
    seed: u64,
    n_waypoints: usize,
    base_radius: f32,
    radial_noise: f32,
) -> Result<Track> {
    if n_waypoints < 8 {
        return Err(Error::InvalidConfig(format!(
            "n_waypoints must be >= 8, got {n_waypoints}"
        )));
    }
    if !(base_radius > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "base_radius must be positive, got {base_radius}"
        )));
    }
    if !(0.0..1.0).contains(&radial_noise) {
        return Err(Error::InvalidConfig(format!(
            "radial_noise must be in [0, 1), got {radial_noise}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Harmonic m gets amplitude noise * u_m / (m * H), H = sum over 1/m, so
    // the summed swing is at most radial_noise and low frequencies dominate.
    const HARMONICS: usize = 4;
    let h: f32 = (1..=HARMONICS).map(|m| 1.0 / m as f32).sum();
    let mut amp = [0.0f32; HARMONICS];
    let mut phase = [0.0f32; HARMONICS];
    for m in 0..HARMONICS {
        let u: f32 = rng.gen_range(0.0..=1.0);
        amp[m] = radial_noise * u / ((m + 1) as f32 * h);
        phase[m] = rng.gen_range(0.0..std::f32::consts::TAU);
    }
    let mut waypoints = Vec::with_capacity(n_waypoints);
    for k in 0..n_waypoints {
        let phi = std::f32::consts::TAU * k as f32 / n_waypoints as f32;
        let mut swing = 0.0;
        for m in 0..HARMONICS {
            swing += amp[m] * ((m + 1) as f32 * phi + phase[m]).sin();
        }
        let r = base_radius * (1.0 + swing);
        waypoints.push(Vec2::new(r * phi.cos(), r * phi.sin()));
    }
    Ok(Track {
        seed,
        waypoints,
        half_width: DEFAULT_HALF_WIDTH,
    })
}

// ============================================================================
// dynamics
// ============================================================================

/// Physics and reward constants for an episode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvParams {
    pub dt: f32,
    pub a_gas: f32,
    pub a_brake: f32,
    pub friction: f32,
    pub v_max: f32,
    pub steer_delta: f32,
    pub capture_radius: f32,
    pub off_margin: f32,
    pub max_off_streak: u32,
    pub t_max: u32,
    pub per_step_penalty: f32,
    pub off_track_penalty: f32,
    pub lap_reward_total: f32,
}

impl Default for EnvParams {
    fn default() -> Self {
        EnvParams {
            dt: 1.0,
            a_gas: 0.2,
            a_brake: 0.4,
            friction: 0.02,
            v_max: 3.0,
            steer_delta: 0.08,
            capture_radius: DEFAULT_HALF_WIDTH,
            off_margin: 1.0,
            max_off_streak: 20,
            t_max: 1000,
            per_step_penalty: -0.1,
            off_track_penalty: -0.5,
            lap_reward_total: 1000.0,
        }
    }
}

impl EnvParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dt", self.dt),
            ("a_gas", self.a_gas),
            ("a_brake", self.a_brake),
            ("v_max", self.v_max),
            ("steer_delta", self.steer_delta),
            ("capture_radius", self.capture_radius),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !(self.friction >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "friction must be >= 0, got {}",
                self.friction
            )));
        }
        if !(self.off_margin >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "off_margin must be >= 0, got {}",
                self.off_margin
            )));
        }
        if self.t_max == 0 {
            return Err(Error::InvalidConfig("t_max must be >= 1".into()));
        }
        if self.per_step_penalty > 0.0 || self.off_track_penalty > 0.0 {
            return Err(Error::InvalidConfig(
                "step and off-track penalties must be <= 0".into(),
            ));
        }
        if !(self.lap_reward_total >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "lap_reward_total must be >= 0, got {}",
                self.lap_reward_total
            )));
        }
        Ok(())
    }
}

/// Full simulator state. Value-semantic: `step` consumes nothing and returns
/// a new state.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvState {
    pub position: Vec2,
    pub heading: f32,
    pub speed: f32,
    pub step_index: u32,
    /// Per-waypoint capture flags. Waypoints must be captured in loop order,
    /// so the flags always form a true-prefix.
    pub visited: Vec<bool>,
    pub off_track_streak: u32,
    pub done: bool,
}

impl EnvState {
    /// Index of the next waypoint to capture, `None` once the lap is closed.
    pub fn next_unvisited(&self) -> Option<usize> {
        self.visited.iter().position(|v| !v)
    }
}

/// Start state: car at waypoint 0, aimed at waypoint 1, at rest. The start
/// waypoint is captured on the first step (the car is standing on it), so a
/// completed lap pays out exactly `lap_reward_total` across all captures.
pub fn reset(track: &Track) -> EnvState {
    let to_next = track.waypoints[1] - track.waypoints[0];
    EnvState {
        position: track.waypoints[0],
        heading: to_next.y.atan2(to_next.x),
        speed: 0.0,
        step_index: 0,
        visited: vec![false; track.n_waypoints()],
        off_track_streak: 0,
        done: false,
    }
}

/// Advance one timestep. Update order: action effect, friction, speed clamp,
/// position integration, waypoint capture, off-track check, done check.
///
/// Stepping a finished episode is a contract violation.
pub fn step(
    state: &EnvState,
    action: Action,
    track: &Track,
    params: &EnvParams,
) -> Result<(EnvState, f32, bool)> {
    if state.done {
        return Err(Error::ContractViolation(
            "step called on a finished episode".into(),
        ));
    }
    let mut next = state.clone();

    match action {
        Action::Gas => next.speed += params.a_gas,
        Action::Brake => next.speed -= params.a_brake,
        Action::Left => next.heading = wrap_angle(next.heading + params.steer_delta),
        Action::Right => next.heading = wrap_angle(next.heading - params.steer_delta),
        Action::Noop => {}
    }
    next.speed -= params.friction;
    next.speed = next.speed.clamp(0.0, params.v_max);
    next.position = next.position
        + Vec2::new(next.heading.cos(), next.heading.sin()) * (next.speed * params.dt);

    let mut reward = params.per_step_penalty;
    if let Some(i) = next.next_unvisited() {
        let r2 = params.capture_radius * params.capture_radius;
        if next.position.dist_sq(track.waypoints[i]) <= r2 {
            next.visited[i] = true;
            reward += params.lap_reward_total / track.n_waypoints() as f32;
        }
    }

    let off_limit = track.half_width + params.off_margin;
    if track.centerline_dist_sq(next.position) > off_limit * off_limit {
        reward += params.off_track_penalty;
        next.off_track_streak += 1;
    } else {
        next.off_track_streak = 0;
    }

    next.step_index += 1;
    let lap_complete = next.visited.iter().all(|&v| v);
    next.done = lap_complete
        || next.off_track_streak > params.max_off_streak
        || next.step_index >= params.t_max;

    let done = next.done;
    Ok((next, reward, done))
}

// ============================================================================
// rendering
// ============================================================================

pub const ROAD_COLOR: [u8; 3] = [102, 102, 102];
pub const GRASS_COLOR: [u8; 3] = [51, 153, 51];
pub const CAR_COLOR: [u8; 3] = [0, 0, 0];

/// Car sprite footprint in pixels, independent of resolution.
pub const CAR_SPRITE_W: usize = 4;
pub const CAR_SPRITE_H: usize = 8;

/// Egocentric camera settings. `view_span` is how many world units the frame
/// width covers; taller/shorter frames see proportionally more/less.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderConfig {
    pub height: usize,
    pub width: usize,
    pub view_span: f32,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            height: 64,
            width: 64,
            view_span: 30.0,
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("height", self.height), ("width", self.width)] {
            if v < 16 || v % 8 != 0 {
                return Err(Error::InvalidConfig(format!(
                    "render {name} must be a multiple of 8 and >= 16, got {v}"
                )));
            }
        }
        if !(self.view_span > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "view_span must be positive, got {}",
                self.view_span
            )));
        }
        Ok(())
    }

    /// Pixel the car anchor occupies: (row, col).
    pub fn anchor(&self) -> (usize, usize) {
        (3 * self.height / 4, self.width / 2)
    }

    /// World units per pixel.
    pub fn units_per_pixel(&self) -> f32 {
        self.view_span / self.width as f32
    }
}

/// RGB8 frame, row-major, channel-interleaved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Observation {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<u8>,
}

impl Observation {
    pub fn new_filled(height: usize, width: usize, color: [u8; 3]) -> Observation {
        let mut pixels = Vec::with_capacity(height * width * 3);
        for _ in 0..height * width {
            pixels.extend_from_slice(&color);
        }
        Observation {
            height,
            width,
            pixels,
        }
    }

    pub fn pixel(&self, row: usize, col: usize) -> [u8; 3] {
        let i = (row * self.width + col) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set_pixel(&mut self, row: usize, col: usize, color: [u8; 3]) {
        let i = (row * self.width + col) * 3;
        self.pixels[i..i + 3].copy_from_slice(&color);
    }
}

/// Render the egocentric view: camera centered on the car, heading up, car
/// anchored at pixel (width/2, 3*height/4). A pixel is road gray when its
/// world point lies within `half_width` of the centerline, grass green
/// otherwise; the 4x8 car sprite is stamped last. Pure function of
/// (state, track, config).
pub fn render(state: &EnvState, track: &Track, cfg: &RenderConfig) -> Observation {
    let (anchor_row, anchor_col) = cfg.anchor();
    let su = cfg.units_per_pixel();
    let forward = Vec2::new(state.heading.cos(), state.heading.sin());
    let right = Vec2::new(state.heading.sin(), -state.heading.cos());

    // Conservative visibility prefilter: a segment farther from the car than
    // any visible pixel plus the road half-width cannot color anything.
    let max_row_off = anchor_row.max(cfg.height - anchor_row) as f32 + 1.0;
    let max_col_off = (cfg.width - cfg.width / 2) as f32 + 1.0;
    let view_radius = su * max_col_off.hypot(max_row_off);
    let cull = view_radius + track.half_width;
    let near: Vec<(Vec2, Vec2)> = (0..track.n_waypoints())
        .map(|i| track.segment(i))
        .filter(|&(a, b)| point_segment_dist_sq(state.position, a, b) <= cull * cull)
        .collect();

    let vx: Vec<f32> = (0..cfg.width)
        .map(|c| (c as f32 + 0.5 - anchor_col as f32) * su)
        .collect();
    let vy: Vec<f32> = (0..cfg.height)
        .map(|r| (anchor_row as f32 - (r as f32 + 0.5)) * su)
        .collect();

    let hw_sq = track.half_width * track.half_width;
    let mut obs = Observation::new_filled(cfg.height, cfg.width, GRASS_COLOR);
    for r in 0..cfg.height {
        let row_base = state.position + forward * vy[r];
        for c in 0..cfg.width {
            let world = row_base + right * vx[c];
            let mut best = f32::INFINITY;
            for &(a, b) in &near {
                let d = point_segment_dist_sq(world, a, b);
                if d < best {
                    best = d;
                }
            }
            if best <= hw_sq {
                obs.set_pixel(r, c, ROAD_COLOR);
            }
        }
    }

    for r in anchor_row - CAR_SPRITE_H / 2..anchor_row + CAR_SPRITE_H / 2 {
        for c in anchor_col - CAR_SPRITE_W / 2..anchor_col + CAR_SPRITE_W / 2 {
            obs.set_pixel(r, c, CAR_COLOR);
        }
    }
    obs
}

// ============================================================================
