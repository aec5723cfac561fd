//! Evaluation and experiment orchestration: rollout reward statistics,
//! backdoor control rates on held-out frames, attack-mode comparisons,
//! and the train-and-measure sweep over poisoning parameters.
//!
//! Everything here is deterministic in (config, seeds): rollouts may run in
//! parallel but results are aggregated in rollout order, and sweep rows come
//! out in grid order.

use std::time::Instant;

use crate::attack::{
    run_attacked_rollout, ActionSelection, AttackConfig, AttackMode, RolloutRecord,
};
use crate::config::{RunConfig, SweepAxis};
use crate::data::{
    apply_trigger, make_trigger, poison_dataset, Dataset, TriggerPatch, TriggerSpec,
};
use crate::env::{Action, EnvParams, Observation, RenderConfig, TrackConfig};
use crate::error::{Error, Result};
use crate::par;
use crate::policy::{argmax_action, train_bc, ActionPolicy, PolicyNet};
use crate::report::{SweepMetrics, SweepRow};
use crate::seeding::mix_seed;

/// Mean and standard error of a sample of episode rewards.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RewardStats {
    pub mean: f64,
    pub se: f64,
}

/// SE is the sample standard deviation over sqrt(n); a single rollout has
/// SE 0 by convention rather than the undefined n-1 form.
pub fn reward_stats(rewards: &[f64]) -> Result<RewardStats> {
    let n = rewards.len();
    if n == 0 {
        return Err(Error::InvalidInput(
            "reward statistics need at least one rollout".into(),
        ));
    }
    let mean = rewards.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Ok(RewardStats { mean, se: 0.0 });
    }
    let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n as f64 - 1.0);
    Ok(RewardStats {
        mean,
        se: var.sqrt() / (n as f64).sqrt(),
    })
}

/// Fixed context for a batch of evaluation rollouts.
#[derive(Clone, Debug)]
pub struct EvalSettings {
    pub track_cfg: TrackConfig,
    pub env: EnvParams,
    pub render: RenderConfig,
    pub n_rollouts: usize,
    /// Rollout i drives the track generated from `track_seed_base + i`.
    pub track_seed_base: u64,
    /// Rollout i plans its attack schedule from mix(schedule_seed_base, i).
    pub schedule_seed_base: u64,
}

impl EvalSettings {
    pub fn from_config(cfg: &RunConfig) -> EvalSettings {
        EvalSettings {
            track_cfg: cfg.track_config(),
            env: cfg.env,
            render: cfg.render_config(),
            n_rollouts: cfg.n_rollouts,
            track_seed_base: cfg.eval_track_base(),
            schedule_seed_base: cfg.schedule_base(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct EvalReport {
    pub reward: RewardStats,
    pub rollouts: Vec<RolloutRecord>,
    pub attacks_used_total: usize,
}

/// Run `n_rollouts` episodes on consecutively seeded fresh tracks and
/// aggregate rewards. The attack template's own schedule seed is ignored;
/// each rollout gets one derived from `schedule_seed_base` and its index.
pub fn evaluate_policy<P: ActionPolicy + Sync>(
    policy: &P,
    attack: &AttackConfig,
    settings: &EvalSettings,
) -> Result<EvalReport> {
    if settings.n_rollouts == 0 {
        return Err(Error::InvalidConfig(
            "n_rollouts must be at least 1".into(),
        ));
    }
    let results = par::map_indexed(settings.n_rollouts, |i| -> Result<RolloutRecord> {
        let track = settings
            .track_cfg
            .generate(settings.track_seed_base.wrapping_add(i as u64))?;
        let mut cfg = attack.clone();
        cfg.schedule_seed = mix_seed(settings.schedule_seed_base, i as u64);
        run_attacked_rollout(policy, &track, &settings.env, &settings.render, &cfg)
    });
    let mut rollouts = Vec::with_capacity(results.len());
    for r in results {
        rollouts.push(r?);
    }
    let rewards: Vec<f64> = rollouts.iter().map(|r| r.total_reward as f64).collect();
    let attacks_used_total = rollouts.iter().map(|r| r.attacks_used).sum();
    Ok(EvalReport {
        reward: reward_stats(&rewards)?,
        rollouts,
        attacks_used_total,
    })
}

/// How often the triggered policy emits the target action.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControlRates {
    /// Over all supplied frames.
    pub overall: f64,
    /// Restricted to frames whose recorded action differs from the target;
    /// NaN when no such frame exists.
    pub nontarget: f64,
    pub n_frames: usize,
    pub n_nontarget: usize,
}

/// Stamp the trigger onto each held-out clean frame and measure how often
/// the policy's argmax action equals `target`.
pub fn control_rate<P: ActionPolicy + Sync>(
    policy: &P,
    frames: &[(&Observation, Action)],
    patch: &TriggerPatch,
    target: Action,
) -> Result<ControlRates> {
    if frames.is_empty() {
        return Err(Error::InvalidInput(
            "control rate needs at least one frame".into(),
        ));
    }
    let hits = par::map_ordered(frames, |(obs, _)| -> Result<bool> {
        let triggered = apply_trigger(obs, patch)?;
        Ok(argmax_action(&policy.action_dist(&triggered)?) == target)
    });
    let mut total_hits = 0usize;
    let mut nt_frames = 0usize;
    let mut nt_hits = 0usize;
    for (hit, (_, action)) in hits.into_iter().zip(frames) {
        let hit = hit?;
        total_hits += hit as usize;
        if *action != target {
            nt_frames += 1;
            nt_hits += hit as usize;
        }
    }
    Ok(ControlRates {
        overall: total_hits as f64 / frames.len() as f64,
        nontarget: if nt_frames == 0 {
            f64::NAN
        } else {
            nt_hits as f64 / nt_frames as f64
        },
        n_frames: frames.len(),
        n_nontarget: nt_frames,
    })
}

/// Borrow (observation, action) pairs for the given flat frame indices.
pub fn frames_at<'a>(
    dataset: &'a Dataset,
    indices: &[usize],
) -> Result<Vec<(&'a Observation, Action)>> {
    let flat = dataset.flat();
    indices
        .iter()
        .map(|&i| {
            flat.get(i)
                .map(|rec| (&rec.observation, rec.action))
                .ok_or_else(|| {
                    Error::InvalidInput(format!(
                        "frame index {i} out of range for {} frames",
                        flat.len()
                    ))
                })
        })
        .collect()
}

/// Reward columns for the unattacked baseline and both attack modes, run on
/// identical track seeds so the comparison is paired.
#[derive(Clone, Debug)]
pub struct AttackComparison {
    pub unattacked: EvalReport,
    pub random: EvalReport,
    pub entropy: EvalReport,
}

pub fn compare_attacks<P: ActionPolicy + Sync>(
    policy: &P,
    patch: &TriggerPatch,
    target: Action,
    budget: usize,
    entropy_threshold: f32,
    selection: ActionSelection,
    settings: &EvalSettings,
) -> Result<AttackComparison> {
    let base = AttackConfig {
        mode: AttackMode::None,
        budget,
        entropy_threshold,
        target_action: target,
        patch: None,
        schedule_seed: 0,
        selection,
    };
    let unattacked = evaluate_policy(policy, &base, settings)?;
    let mut cfg = base.clone();
    cfg.mode = AttackMode::Random;
    cfg.patch = Some(patch.clone());
    let random = evaluate_policy(policy, &cfg, settings)?;
    cfg.mode = AttackMode::Entropy;
    let entropy = evaluate_policy(policy, &cfg, settings)?;
    Ok(AttackComparison {
        unattacked,
        random,
        entropy,
    })
}

// ============================================================================
// sweeps
// ============================================================================

/// Rows in grid order plus the error text of any cells that failed. A failed
/// cell still contributes a row (with empty metrics) so the CSV shape is
/// predictable.
#[derive(Clone, Debug)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    /// (experiment id, error message) of failed cells.
    pub failures: Vec<(String, String)>,
}

struct Cell {
    value_label: String,
    fraction: f64,
    spec: TriggerSpec,
    seed_index: u64,
}

fn sweep_cells(cfg: &RunConfig) -> Vec<Cell> {
    let base = cfg.trigger_spec();
    let mut per_value: Vec<(String, f64, TriggerSpec)> = Vec::new();
    match cfg.sweep_axis {
        SweepAxis::Fraction => {
            for &f in &cfg.sweep_fractions {
                per_value.push((f.to_string(), f, base.clone()));
            }
        }
        SweepAxis::Size => {
            for &s in &cfg.sweep_sizes {
                let mut spec = base.clone();
                spec.size = s;
                per_value.push((s.to_string(), cfg.poison_fraction, spec));
            }
        }
        SweepAxis::Type => {
            for &t in &cfg.sweep_types {
                let mut spec = base.clone();
                spec.kind = t;
                per_value.push((t.name().to_string(), cfg.poison_fraction, spec));
            }
        }
    }
    let mut cells = Vec::with_capacity(per_value.len() * cfg.seeds_per_cell as usize);
    for (label, fraction, spec) in per_value {
        for s in 0..cfg.seeds_per_cell {
            cells.push(Cell {
                value_label: label.clone(),
                fraction,
                spec: spec.clone(),
                seed_index: s,
            });
        }
    }
    cells
}

/// The attack columns a row reports: the budget only counts when a test-time
/// attack runs, and the threshold only under entropy gating.
fn attack_columns(cfg: &RunConfig) -> (String, usize, f64) {
    match cfg.attack_mode {
        AttackMode::None => ("none".to_string(), 0, 0.0),
        AttackMode::Random => ("random".to_string(), cfg.budget, 0.0),
        AttackMode::Entropy => (
            "entropy".to_string(),
            cfg.budget,
            cfg.entropy_threshold as f64,
        ),
    }
}

/// Poison, train, evaluate and measure one sweep cell.
fn run_cell(cfg: &RunConfig, demos: &Dataset, cell: &Cell) -> Result<SweepMetrics> {
    let start = Instant::now();
    let patch = make_trigger(&cell.spec, demos.height, demos.width)?;
    let (poisoned, _report) = poison_dataset(
        demos,
        cfg.target_action,
        cell.fraction,
        &patch,
        cfg.poison_seed(cell.seed_index),
    )?;
    let mut net = PolicyNet::init(
        demos.height,
        demos.width,
        cfg.widths(),
        cfg.train_seed(cell.seed_index),
    )?;
    let log = train_bc(&mut net, &poisoned, &cfg.train_config(cell.seed_index))?;

    let settings = EvalSettings::from_config(cfg);
    let attack_patch = match cfg.attack_mode {
        AttackMode::None => None,
        _ => Some(patch.clone()),
    };
    let report = evaluate_policy(&net, &cfg.attack_config(attack_patch), &settings)?;

    // control rates use the clean observations of the held-out frames, so
    // the trigger is the only difference the network sees
    let frames = frames_at(demos, &log.holdout_indices)?;
    let rates = control_rate(&net, &frames, &patch, cfg.target_action)?;

    Ok(SweepMetrics {
        mean_reward: report.reward.mean,
        se_reward: report.reward.se,
        control_rate: rates.overall,
        control_rate_nontarget: rates.nontarget,
        train_holdout_acc: log.final_holdout_accuracy(),
        wall_seconds: if cfg.record_wall_time {
            start.elapsed().as_secs_f64()
        } else {
            0.0
        },
    })
}

/// Train-and-measure over the configured axis, `seeds_per_cell` repetitions
/// per value. Cells run sequentially (each is internally parallel and holds
/// a full poisoned dataset copy); a failing cell becomes an error row and
/// the sweep continues.
pub fn run_sweep(cfg: &RunConfig, demos: &Dataset) -> Result<SweepOutcome> {
    cfg.validate()?;
    demos.validate()?;
    if demos.height != cfg.obs_size || demos.width != cfg.obs_size {
        return Err(Error::ShapeMismatch {
            expected: format!("{0}x{0} demo frames", cfg.obs_size),
            actual: format!("{}x{}", demos.height, demos.width),
        });
    }
    let (mode_name, budget, threshold) = attack_columns(cfg);
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for cell in sweep_cells(cfg) {
        let experiment_id =
            cfg.experiment_id(cfg.sweep_axis.name(), &cell.value_label, cell.seed_index);
        let metrics = match run_cell(cfg, demos, &cell) {
            Ok(m) => Some(m),
            Err(e) => {
                failures.push((experiment_id.clone(), e.to_string()));
                None
            }
        };
        rows.push(SweepRow {
            experiment_id,
            seed: cell.seed_index,
            obs_size: cfg.obs_size,
            poison_fraction: cell.fraction,
            patch_type: cell.spec.kind.name().to_string(),
            patch_size: cell.spec.size,
            attack_mode: mode_name.clone(),
            budget,
            entropy_threshold: threshold,
            n_rollouts: cfg.n_rollouts,
            metrics,
        });
    }
    Ok(SweepOutcome { rows, failures })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;
    use crate::data::synthetic_dataset;
    use crate::policy::ActionDistribution;

    fn dist_for(action: Action) -> ActionDistribution {
        let mut d = [0.02f32; Action::COUNT];
        d[action.index()] = 0.92;
        d
    }

    fn small_settings(n_rollouts: usize) -> EvalSettings {
        let mut env = EnvParams::default();
        env.t_max = 60;
        EvalSettings {
            track_cfg: TrackConfig::default(),
            env,
            render: RenderConfig {
                height: 16,
                width: 16,
                view_span: 26.0,
            },
            n_rollouts,
            track_seed_base: 100,
            schedule_seed_base: 7,
        }
    }

    #[test]
    fn reward_stats_match_hand_computation() {
        let s = reward_stats(&[1.0, 2.0, 3.0]).unwrap();
        assert!((s.mean - 2.0).abs() < 1e-12);
        assert!((s.se - 1.0 / 3f64.sqrt()).abs() < 1e-12);
        let one = reward_stats(&[5.0]).unwrap();
        assert_eq!(one.mean, 5.0);
        assert_eq!(one.se, 0.0, "single rollout has zero SE by convention");
        assert!(reward_stats(&[]).is_err());
    }

    #[test]
    fn evaluate_policy_is_deterministic_and_uses_distinct_tracks() {
        let policy = |_: &Observation| Ok(dist_for(Action::Gas));
        let settings = small_settings(3);
        let a = evaluate_policy(&policy, &AttackConfig::none(), &settings).unwrap();
        let b = evaluate_policy(&policy, &AttackConfig::none(), &settings).unwrap();
        assert_eq!(a.rollouts.len(), 3);
        assert_eq!(a.reward.mean, b.reward.mean);
        assert_eq!(a.reward.se, b.reward.se);
        let per_rollout: Vec<f32> = a.rollouts.iter().map(|r| r.total_reward).collect();
        let again: Vec<f32> = b.rollouts.iter().map(|r| r.total_reward).collect();
        assert_eq!(per_rollout, again);
    }

    #[test]
    fn control_rate_hits_the_trivial_bounds() {
        let data = synthetic_dataset(
            16,
            16,
            &[&[Action::Gas, Action::Left, Action::Brake, Action::Gas]],
        );
        let frames = frames_at(&data, &[0, 1, 2, 3]).unwrap();
        let patch = make_trigger(&TriggerSpec::default(), 16, 16).unwrap();

        let always = |_: &Observation| Ok(dist_for(Action::Gas));
        let rates = control_rate(&always, &frames, &patch, Action::Gas).unwrap();
        assert_eq!(rates.overall, 1.0);
        assert_eq!(rates.nontarget, 1.0);
        assert_eq!(rates.n_frames, 4);
        assert_eq!(rates.n_nontarget, 2);

        let never = |_: &Observation| Ok(dist_for(Action::Left));
        let rates = control_rate(&never, &frames, &patch, Action::Gas).unwrap();
        assert_eq!(rates.overall, 0.0);
        assert_eq!(rates.nontarget, 0.0);

        assert!(control_rate(&always, &[], &patch, Action::Gas).is_err());
    }

    #[test]
    fn frames_at_checks_bounds() {
        let data = synthetic_dataset(16, 16, &[&[Action::Gas]]);
        assert!(frames_at(&data, &[0]).is_ok());
        assert!(frames_at(&data, &[1]).is_err());
    }

    #[test]
    fn zero_budget_comparison_collapses_to_the_baseline() {
        // a policy whose action depends on pixels, so triggering would matter
        let policy = |obs: &Observation| {
            let sum: u64 = obs.pixels.iter().map(|&b| b as u64).sum();
            Ok(dist_for(if sum % 2 == 0 { Action::Gas } else { Action::Left }))
        };
        let settings = small_settings(2);
        let patch = make_trigger(&TriggerSpec::default(), 16, 16).unwrap();
        let cmp = compare_attacks(
            &policy,
            &patch,
            Action::Gas,
            0,
            0.005,
            ActionSelection::Greedy,
            &settings,
        )
        .unwrap();
        let rewards = |r: &EvalReport| -> Vec<f32> {
            r.rollouts.iter().map(|x| x.total_reward).collect()
        };
        assert_eq!(rewards(&cmp.unattacked), rewards(&cmp.random));
        assert_eq!(rewards(&cmp.unattacked), rewards(&cmp.entropy));
        assert_eq!(cmp.random.attacks_used_total, 0);
        assert_eq!(cmp.entropy.attacks_used_total, 0);

        // and the unattacked column is exactly evaluate_policy's answer
        let direct = evaluate_policy(&policy, &AttackConfig::none(), &settings).unwrap();
        assert_eq!(rewards(&cmp.unattacked), rewards(&direct));
        assert_eq!(cmp.unattacked.reward.mean, direct.reward.mean);
    }

    fn tiny_sweep_config(extra: &str) -> RunConfig {
        let base = "obs_size=16\nn_episodes=2\nt_max=60\nepochs=1\nbatch_size=16\nn_rollouts=1\nseeds_per_cell=1\nsweep_fractions=0,0.5\n";
        parse_config(&format!("{base}{extra}")).unwrap()
    }

    #[test]
    fn sweep_produces_deterministic_grid_ordered_rows() {
        let cfg = tiny_sweep_config("");
        let demos = crate::expert::collect_demos(
            &cfg.track_config(),
            &cfg.env,
            &cfg.render_config(),
            &cfg.expert,
            cfg.n_episodes,
            cfg.demo_seed(),
        )
        .unwrap();
        let a = run_sweep(&cfg, &demos).unwrap();
        let b = run_sweep(&cfg, &demos).unwrap();
        assert_eq!(a.rows.len(), 2, "two fractions, one seed each");
        assert!(a.failures.is_empty(), "failures: {:?}", a.failures);
        assert_eq!(a.rows, b.rows, "sweep must be run-to-run deterministic");
        assert_eq!(a.rows[0].poison_fraction, 0.0);
        assert_eq!(a.rows[1].poison_fraction, 0.5);
        for row in &a.rows {
            assert!(row.metrics.is_some());
            assert!(row.experiment_id.starts_with(&cfg.hash8()));
            assert_eq!(row.attack_mode, "none");
            assert_eq!(row.budget, 0);
        }
        let m = a.rows[1].metrics.as_ref().unwrap();
        assert!(m.control_rate >= 0.0 && m.control_rate <= 1.0);
        assert!(m.train_holdout_acc.is_finite());
        assert_eq!(m.wall_seconds, 0.0, "wall clock off by default");
    }

    #[test]
    fn sweep_records_failed_cells_and_continues() {
        // anchor 14: a 2 pixel patch fits a 16 pixel frame, 16 does not
        let cfg = tiny_sweep_config("sweep_axis=size\nanchor_row=14\npatch_size=2\nsweep_sizes=2,16\n");
        let demos = crate::expert::collect_demos(
            &cfg.track_config(),
            &cfg.env,
            &cfg.render_config(),
            &cfg.expert,
            cfg.n_episodes,
            cfg.demo_seed(),
        )
        .unwrap();
        let out = run_sweep(&cfg, &demos).unwrap();
        assert_eq!(out.rows.len(), 2);
        assert!(out.rows[0].metrics.is_some());
        assert!(out.rows[1].metrics.is_none(), "oversized patch cell errors");
        assert_eq!(out.failures.len(), 1);
        assert!(out.failures[0].1.contains("escapes"), "{}", out.failures[0].1);
    }
}
