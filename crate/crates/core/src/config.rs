//! Flat `key=value` experiment configuration.
//!
//! One file drives the whole pipeline: demo collection, poisoning, training,
//! evaluation and sweeps. Lines are `key=value`, `#` starts a comment, blank
//! lines are ignored. Unknown keys and duplicate keys are errors so typos
//! fail loudly instead of silently running defaults.
//!
//! A config resolves to a canonical string whose 64-bit FNV-1a hash prefixes
//! every experiment id, letting downstream tools refuse to aggregate rows
//! produced under different settings.

use crate::attack::{ActionSelection, AttackConfig, AttackMode};
use crate::data::{TriggerKind, TriggerSpec};
use crate::env::{Action, EnvParams, RenderConfig, TrackConfig};
use crate::error::{Error, Result};
use crate::expert::ExpertParams;
use crate::policy::{PolicyWidths, TrainConfig};
use crate::seeding::{mix_seed, streams};

/// Which parameter a sweep varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    Fraction,
    Size,
    Type,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Fraction => "fraction",
            SweepAxis::Size => "size",
            SweepAxis::Type => "type",
        }
    }

    pub fn from_name(s: &str) -> Result<SweepAxis> {
        match s {
            "fraction" => Ok(SweepAxis::Fraction),
            "size" => Ok(SweepAxis::Size),
            "type" => Ok(SweepAxis::Type),
            _ => Err(Error::InvalidConfig(format!("unknown sweep_axis {s:?}"))),
        }
    }
}

fn selection_name(s: ActionSelection) -> &'static str {
    match s {
        ActionSelection::Greedy => "greedy",
        ActionSelection::Sample => "sample",
    }
}

fn selection_from_name(s: &str) -> Result<ActionSelection> {
    match s {
        "greedy" => Ok(ActionSelection::Greedy),
        "sample" => Ok(ActionSelection::Sample),
        _ => Err(Error::InvalidConfig(format!(
            "unknown action_selection {s:?}"
        ))),
    }
}

/// Every tunable of the pipeline, with the pinned defaults.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub obs_size: usize,
    pub view_span: f32,
    pub workers: usize,
    /// When false, wall_seconds is reported as 0 so repeated runs produce
    /// byte-identical CSV files.
    pub record_wall_time: bool,

    pub n_waypoints: usize,
    pub base_radius: f32,
    pub radial_noise: f32,
    pub half_width: f32,

    pub env: EnvParams,
    pub expert: ExpertParams,
    pub n_episodes: usize,

    pub patch_type: TriggerKind,
    pub patch_size: usize,
    pub anchor_row: usize,
    pub anchor_col: usize,
    pub gaussian_seed: u64,
    pub color_shift_offset: i32,
    pub target_action: Action,
    pub poison_fraction: f64,

    pub learning_rate: f32,
    pub batch_size: usize,
    pub epochs: usize,
    pub holdout_fraction: f64,
    pub conv_widths: [usize; 3],
    pub fc_widths: [usize; 2],

    pub attack_mode: AttackMode,
    pub budget: usize,
    pub entropy_threshold: f32,
    pub action_selection: ActionSelection,
    pub n_rollouts: usize,

    pub sweep_axis: SweepAxis,
    pub sweep_fractions: Vec<f64>,
    pub sweep_sizes: Vec<usize>,
    pub sweep_types: Vec<TriggerKind>,
    pub seeds_per_cell: u64,

    pub demos_path: String,
    pub dataset_path: String,
    pub checkpoint_path: String,
    pub out_dir: String,
    pub csv_path: String,
}

fn default_sweep_sizes(obs_size: usize) -> Vec<usize> {
    let mut v = vec![1, 2, 3, 5, 10, 15, 25, 50];
    v.retain(|s| *s < obs_size);
    v.push(obs_size);
    v
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            obs_size: 64,
            view_span: 30.0,
            workers: 0,
            record_wall_time: false,
            n_waypoints: 20,
            base_radius: 70.0,
            radial_noise: 0.15,
            half_width: 2.0,
            env: EnvParams::default(),
            expert: ExpertParams::default(),
            n_episodes: 72,
            patch_type: TriggerKind::RedPatch,
            patch_size: 3,
            anchor_row: 0,
            anchor_col: 0,
            gaussian_seed: 1001,
            color_shift_offset: 40,
            target_action: Action::Gas,
            poison_fraction: 0.05,
            learning_rate: 1e-3,
            batch_size: 64,
            epochs: 28,
            holdout_fraction: 0.1,
            conv_widths: [8, 16, 32],
            fc_widths: [128, 32],
            attack_mode: AttackMode::None,
            budget: 100,
            entropy_threshold: 0.005,
            action_selection: ActionSelection::Greedy,
            n_rollouts: 20,
            sweep_axis: SweepAxis::Fraction,
            sweep_fractions: vec![0.0, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 0.7, 0.8, 0.9, 1.0],
            sweep_sizes: default_sweep_sizes(64),
            sweep_types: vec![
                TriggerKind::RedPatch,
                TriggerKind::GaussianPatch,
                TriggerKind::ColorShift,
            ],
            seeds_per_cell: 3,
            demos_path: "out/demos.bcd".into(),
            dataset_path: "out/poisoned.bcd".into(),
            checkpoint_path: "out/policy.bcpk".into(),
            out_dir: "out".into(),
            csv_path: "out/sweep.csv".into(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("{key}: cannot parse {value:?}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    if value.trim().is_empty() {
        return Err(Error::InvalidConfig(format!("{key}: empty list")));
    }
    value
        .split(',')
        .map(|item| parse_num(key, item.trim()))
        .collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::InvalidConfig(format!(
            "{key}: expected true or false, got {value:?}"
        ))),
    }
}

fn join<T: std::fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl RunConfig {
    /// Set one key. Used both by the file parser and by CLI overrides.
    pub fn apply_override(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse_num(key, value)?,
            "obs_size" => self.obs_size = parse_num(key, value)?,
            "view_span" => self.view_span = parse_num(key, value)?,
            "workers" => self.workers = parse_num(key, value)?,
            "record_wall_time" => self.record_wall_time = parse_bool(key, value)?,
            "n_waypoints" => self.n_waypoints = parse_num(key, value)?,
            "base_radius" => self.base_radius = parse_num(key, value)?,
            "radial_noise" => self.radial_noise = parse_num(key, value)?,
            "half_width" => self.half_width = parse_num(key, value)?,
            "dt" => self.env.dt = parse_num(key, value)?,
            "a_gas" => self.env.a_gas = parse_num(key, value)?,
            "a_brake" => self.env.a_brake = parse_num(key, value)?,
            "friction" => self.env.friction = parse_num(key, value)?,
            "v_max" => self.env.v_max = parse_num(key, value)?,
            "steer_delta" => self.env.steer_delta = parse_num(key, value)?,
            "capture_radius" => self.env.capture_radius = parse_num(key, value)?,
            "off_margin" => self.env.off_margin = parse_num(key, value)?,
            "max_off_streak" => self.env.max_off_streak = parse_num(key, value)?,
            "t_max" => self.env.t_max = parse_num(key, value)?,
            "per_step_penalty" => self.env.per_step_penalty = parse_num(key, value)?,
            "off_track_penalty" => self.env.off_track_penalty = parse_num(key, value)?,
            "lap_reward_total" => self.env.lap_reward_total = parse_num(key, value)?,
            "lookahead" => self.expert.lookahead = parse_num(key, value)?,
            "angle_deadband" => self.expert.angle_deadband = parse_num(key, value)?,
            "v_target" => self.expert.v_target = parse_num(key, value)?,
            "brake_curvature" => self.expert.brake_curvature = parse_num(key, value)?,
            "n_episodes" => self.n_episodes = parse_num(key, value)?,
            "patch_type" => self.patch_type = TriggerKind::from_name(value)?,
            "patch_size" => self.patch_size = parse_num(key, value)?,
            "anchor_row" => self.anchor_row = parse_num(key, value)?,
            "anchor_col" => self.anchor_col = parse_num(key, value)?,
            "gaussian_seed" => self.gaussian_seed = parse_num(key, value)?,
            "color_shift_offset" => self.color_shift_offset = parse_num(key, value)?,
            "target_action" => self.target_action = Action::from_name(value)?,
            "poison_fraction" => self.poison_fraction = parse_num(key, value)?,
            "learning_rate" => self.learning_rate = parse_num(key, value)?,
            "batch_size" => self.batch_size = parse_num(key, value)?,
            "epochs" => self.epochs = parse_num(key, value)?,
            "holdout_fraction" => self.holdout_fraction = parse_num(key, value)?,
            "conv_widths" => {
                let v: Vec<usize> = parse_list(key, value)?;
                self.conv_widths = v.try_into().map_err(|_| {
                    Error::InvalidConfig("conv_widths: expected 3 values".into())
                })?;
            }
            "fc_widths" => {
                let v: Vec<usize> = parse_list(key, value)?;
                self.fc_widths = v
                    .try_into()
                    .map_err(|_| Error::InvalidConfig("fc_widths: expected 2 values".into()))?;
            }
            "attack_mode" => self.attack_mode = AttackMode::from_name(value)?,
            "budget" => self.budget = parse_num(key, value)?,
            "entropy_threshold" => self.entropy_threshold = parse_num(key, value)?,
            "action_selection" => self.action_selection = selection_from_name(value)?,
            "n_rollouts" => self.n_rollouts = parse_num(key, value)?,
            "sweep_axis" => self.sweep_axis = SweepAxis::from_name(value)?,
            "sweep_fractions" => self.sweep_fractions = parse_list(key, value)?,
            "sweep_sizes" => self.sweep_sizes = parse_list(key, value)?,
            "sweep_types" => {
                self.sweep_types = value
                    .split(',')
                    .map(|s| TriggerKind::from_name(s.trim()))
                    .collect::<Result<_>>()?;
            }
            "seeds_per_cell" => self.seeds_per_cell = parse_num(key, value)?,
            "demos_path" => self.demos_path = value.to_string(),
            "dataset_path" => self.dataset_path = value.to_string(),
            "checkpoint_path" => self.checkpoint_path = value.to_string(),
            "out_dir" => self.out_dir = value.to_string(),
            "csv_path" => self.csv_path = value.to_string(),
            _ => return Err(Error::InvalidConfig(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.render_config().validate()?;
        self.widths().validate()?;
        self.train_config(0).validate()?;
        // track parameters are validated by generation; probe with a fixed seed
        self.track_config().generate(0).map(|_| ())?;
        if !(0.0..=1.0).contains(&self.poison_fraction) {
            return Err(Error::InvalidConfig(format!(
                "poison_fraction {} outside [0, 1]",
                self.poison_fraction
            )));
        }
        if self.patch_size == 0 || self.anchor_row + self.patch_size > self.obs_size
            || self.anchor_col + self.patch_size > self.obs_size
        {
            return Err(Error::InvalidConfig(format!(
                "patch {}x{} at ({}, {}) does not fit a {}x{} observation",
                self.patch_size,
                self.patch_size,
                self.anchor_row,
                self.anchor_col,
                self.obs_size,
                self.obs_size
            )));
        }
        if self.n_episodes == 0 {
            return Err(Error::InvalidConfig("n_episodes must be positive".into()));
        }
        if self.n_rollouts == 0 {
            return Err(Error::InvalidConfig("n_rollouts must be positive".into()));
        }
        if self.seeds_per_cell == 0 {
            return Err(Error::InvalidConfig("seeds_per_cell must be positive".into()));
        }
        if !(self.entropy_threshold.is_finite() && self.entropy_threshold >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "entropy_threshold {} must be finite and non-negative",
                self.entropy_threshold
            )));
        }
        for f in &self.sweep_fractions {
            if !(0.0..=1.0).contains(f) {
                return Err(Error::InvalidConfig(format!(
                    "sweep fraction {f} outside [0, 1]"
                )));
            }
        }
        if self.sweep_fractions.is_empty()
            || self.sweep_sizes.is_empty()
            || self.sweep_types.is_empty()
        {
            return Err(Error::InvalidConfig("sweep grids must be non-empty".into()));
        }
        Ok(())
    }

    // -- derived component configs ------------------------------------------

    pub fn track_config(&self) -> TrackConfig {
        TrackConfig {
            n_waypoints: self.n_waypoints,
            base_radius: self.base_radius,
            radial_noise: self.radial_noise,
            half_width: self.half_width,
        }
    }

    pub fn render_config(&self) -> RenderConfig {
        RenderConfig {
            height: self.obs_size,
            width: self.obs_size,
            view_span: self.view_span,
        }
    }

    pub fn trigger_spec(&self) -> TriggerSpec {
        TriggerSpec {
            kind: self.patch_type,
            size: self.patch_size,
            anchor_row: self.anchor_row,
            anchor_col: self.anchor_col,
            gaussian_seed: self.gaussian_seed,
            shift_offset: self.color_shift_offset,
        }
    }

    pub fn widths(&self) -> PolicyWidths {
        PolicyWidths {
            conv: self.conv_widths,
            fc: self.fc_widths,
        }
    }

    pub fn train_config(&self, cell_seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            holdout_fraction: self.holdout_fraction,
            seed: self.train_seed(cell_seed),
        }
    }

    /// Attack settings for evaluation rollouts; `patch` comes from the cell.
    pub fn attack_config(&self, patch: Option<crate::data::TriggerPatch>) -> AttackConfig {
        AttackConfig {
            mode: self.attack_mode,
            budget: self.budget,
            entropy_threshold: self.entropy_threshold,
            target_action: self.target_action,
            patch,
            schedule_seed: 0,
            selection: self.action_selection,
        }
    }

    // -- seed fan-out ---------------------------------------------------------
    //
    // Every consumer of randomness gets its own stream derived from the master
    // seed, so changing e.g. the number of rollouts never perturbs training.

    /// Base seed for demo-collection tracks (episode e adds e).
    pub fn demo_seed(&self) -> u64 {
        mix_seed(self.seed, streams::TRACKS)
    }

    /// Poison frame selection for one cell repetition.
    pub fn poison_seed(&self, cell_seed: u64) -> u64 {
        mix_seed(mix_seed(self.seed, streams::POISON), cell_seed)
    }

    /// Network init plus train-time shuffling/holdout for one cell repetition.
    pub fn train_seed(&self, cell_seed: u64) -> u64 {
        mix_seed(mix_seed(self.seed, streams::INIT), cell_seed)
    }

    /// First evaluation track seed; rollout i uses base + i.
    pub fn eval_track_base(&self) -> u64 {
        mix_seed(self.seed, streams::EVAL_TRACKS)
    }

    /// Base for per-rollout attack schedules.
    pub fn schedule_base(&self) -> u64 {
        mix_seed(self.seed, streams::SCHEDULE)
    }

    // -- identity -------------------------------------------------------------

    /// One line per key in declaration order; the hashing pre-image.
    pub fn canonical_string(&self) -> String {
        let e = &self.env;
        let x = &self.expert;
        let mut s = String::with_capacity(1024);
        for (k, v) in [
            ("seed", self.seed.to_string()),
            ("obs_size", self.obs_size.to_string()),
            ("view_span", self.view_span.to_string()),
            ("workers", self.workers.to_string()),
            ("record_wall_time", self.record_wall_time.to_string()),
            ("n_waypoints", self.n_waypoints.to_string()),
            ("base_radius", self.base_radius.to_string()),
            ("radial_noise", self.radial_noise.to_string()),
            ("half_width", self.half_width.to_string()),
            ("dt", e.dt.to_string()),
            ("a_gas", e.a_gas.to_string()),
            ("a_brake", e.a_brake.to_string()),
            ("friction", e.friction.to_string()),
            ("v_max", e.v_max.to_string()),
            ("steer_delta", e.steer_delta.to_string()),
            ("capture_radius", e.capture_radius.to_string()),
            ("off_margin", e.off_margin.to_string()),
            ("max_off_streak", e.max_off_streak.to_string()),
            ("t_max", e.t_max.to_string()),
            ("per_step_penalty", e.per_step_penalty.to_string()),
            ("off_track_penalty", e.off_track_penalty.to_string()),
            ("lap_reward_total", e.lap_reward_total.to_string()),
            ("lookahead", x.lookahead.to_string()),
            ("angle_deadband", x.angle_deadband.to_string()),
            ("v_target", x.v_target.to_string()),
            ("brake_curvature", x.brake_curvature.to_string()),
            ("n_episodes", self.n_episodes.to_string()),
            ("patch_type", self.patch_type.name().to_string()),
            ("patch_size", self.patch_size.to_string()),
            ("anchor_row", self.anchor_row.to_string()),
            ("anchor_col", self.anchor_col.to_string()),
            ("gaussian_seed", self.gaussian_seed.to_string()),
            ("color_shift_offset", self.color_shift_offset.to_string()),
            ("target_action", self.target_action.name().to_string()),
            ("poison_fraction", self.poison_fraction.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("epochs", self.epochs.to_string()),
            ("holdout_fraction", self.holdout_fraction.to_string()),
            ("conv_widths", join(&self.conv_widths)),
            ("fc_widths", join(&self.fc_widths)),
            ("attack_mode", self.attack_mode.name().to_string()),
            ("budget", self.budget.to_string()),
            ("entropy_threshold", self.entropy_threshold.to_string()),
            (
                "action_selection",
                selection_name(self.action_selection).to_string(),
            ),
            ("n_rollouts", self.n_rollouts.to_string()),
            ("sweep_axis", self.sweep_axis.name().to_string()),
            ("sweep_fractions", join(&self.sweep_fractions)),
            ("sweep_sizes", join(&self.sweep_sizes)),
            (
                "sweep_types",
                self.sweep_types
                    .iter()
                    .map(|t| t.name())
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            ("seeds_per_cell", self.seeds_per_cell.to_string()),
            ("demos_path", self.demos_path.clone()),
            ("dataset_path", self.dataset_path.clone()),
            ("checkpoint_path", self.checkpoint_path.clone()),
            ("out_dir", self.out_dir.clone()),
            ("csv_path", self.csv_path.clone()),
        ] {
            s.push_str(k);
            s.push('=');
            s.push_str(&v);
            s.push('\n');
        }
        s
    }

    pub fn config_hash(&self) -> u64 {
        // FNV-1a 64
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for byte in self.canonical_string().bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x1_0000_0000_01b3);
        }
        h
    }

    /// First 8 hex digits of the config hash.
    pub fn hash8(&self) -> String {
        format!("{:016x}", self.config_hash())[..8].to_string()
    }

    /// Row identity: `hash8:axis:value:sSEED`.
    pub fn experiment_id(&self, axis: &str, value: &str, cell_seed: u64) -> String {
        format!("{}:{}:{}:s{}", self.hash8(), axis, value, cell_seed)
    }
}

/// Parse a config file body. Every setting starts from its default.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut seen: Vec<String> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::InvalidConfig(format!("line {}: expected key=value", lineno + 1))
        })?;
        let key = key.trim();
        let value = value.trim();
        if seen.iter().any(|k| k == key) {
            return Err(Error::InvalidConfig(format!(
                "line {}: duplicate key {key:?}",
                lineno + 1
            )));
        }
        seen.push(key.to_string());
        cfg.apply_override(key, value)?;
    }
    // the largest default patch size tracks the observation size
    if !seen.iter().any(|k| k == "sweep_sizes") {
        cfg.sweep_sizes = default_sweep_sizes(cfg.obs_size);
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &std::path::Path) -> Result<RunConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_and_validate() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.sweep_fractions.len(), 11);
        assert_eq!(cfg.sweep_sizes, vec![1, 2, 3, 5, 10, 15, 25, 50, 64]);
    }

    #[test]
    fn parses_comments_whitespace_and_overrides() {
        let text = "\n# experiment\nseed = 7\npoison_fraction=0.2\npatch_type = gaussian\n  epochs=2 # short\nsweep_types=red,colorshift\n";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.poison_fraction, 0.2);
        assert_eq!(cfg.patch_type, TriggerKind::GaussianPatch);
        assert_eq!(cfg.epochs, 2);
        assert_eq!(
            cfg.sweep_types,
            vec![TriggerKind::RedPatch, TriggerKind::ColorShift]
        );
    }

    #[test]
    fn rejects_unknown_duplicate_and_malformed_keys() {
        assert!(matches!(
            parse_config("not_a_key=1"),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            parse_config("seed=1\nseed=2"),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            parse_config("just a line"),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            parse_config("epochs=three"),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn rejects_out_of_range_values() {
        assert!(parse_config("poison_fraction=1.5").is_err());
        assert!(parse_config("patch_size=80").is_err());
        assert!(parse_config("anchor_row=63\npatch_size=2").is_err());
        assert!(parse_config("obs_size=15").is_err());
        assert!(parse_config("sweep_fractions=0.5,2.0").is_err());
        assert!(parse_config("n_rollouts=0").is_err());
    }

    #[test]
    fn default_sweep_sizes_follow_observation_size() {
        let cfg = parse_config("obs_size=32").unwrap();
        assert_eq!(cfg.sweep_sizes, vec![1, 2, 3, 5, 10, 15, 25, 32]);
        let cfg = parse_config("obs_size=32\nsweep_sizes=1,4").unwrap();
        assert_eq!(cfg.sweep_sizes, vec![1, 4]);
    }

    #[test]
    fn hash_distinguishes_configs_and_ids_embed_it() {
        let a = parse_config("").unwrap();
        let b = parse_config("seed=1").unwrap();
        let c = parse_config("poison_fraction=0.2").unwrap();
        assert_ne!(a.config_hash(), b.config_hash());
        assert_ne!(a.config_hash(), c.config_hash());
        assert_eq!(a.config_hash(), parse_config("").unwrap().config_hash());
        let id = a.experiment_id("fraction", "0.05", 2);
        assert!(id.starts_with(&a.hash8()));
        assert!(id.ends_with(":fraction:0.05:s2"));
    }

    #[test]
    fn seed_streams_are_distinct() {
        let cfg = RunConfig::default();
        let seeds = [
            cfg.demo_seed(),
            cfg.poison_seed(0),
            cfg.poison_seed(1),
            cfg.train_seed(0),
            cfg.train_seed(1),
            cfg.eval_track_base(),
            cfg.schedule_base(),
        ];
        for i in 0..seeds.len() {
            for j in (i + 1)..seeds.len() {
                assert_ne!(seeds[i], seeds[j], "streams {i} and {j} collide");
            }
        }
    }

    #[test]
    fn derived_component_configs_mirror_fields() {
        let cfg = parse_config("obs_size=32\npatch_type=colorshift\npatch_size=5").unwrap();
        assert_eq!(cfg.render_config().height, 32);
        assert_eq!(cfg.trigger_spec().kind, TriggerKind::ColorShift);
        assert_eq!(cfg.trigger_spec().size, 5);
        assert_eq!(cfg.widths().conv, [8, 16, 32]);
        assert_eq!(cfg.train_config(3).seed, cfg.train_seed(3));
    }
}
