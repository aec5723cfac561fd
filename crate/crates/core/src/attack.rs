//! Test-time trigger scheduling inside environment rollouts.
//!
//! Two strategies against a target action: Random stamps the trigger at B
//! pre-drawn timesteps; Entropy watches the policy's clean-observation
//! distribution and spends budget only on steps where the policy is both
//! confident (entropy below threshold) and about to do something other than
//! the target. Everything here is black-box: the rollout consumes an
//! [`ActionPolicy`] value and never sees network parameters.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{apply_trigger, TriggerPatch};
use crate::env::{render, reset, step, Action, EnvParams, RenderConfig, Track};
use crate::error::{Error, Result};
use crate::policy::{argmax_action, entropy, ActionDistribution, ActionPolicy};
use crate::seeding::{mix_seed, streams};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttackMode {
    /// Never perturb; plain policy evaluation.
    None,
    /// Trigger at B timesteps drawn up front, uniformly without replacement.
    Random,
    /// Trigger when the clean-observation distribution has entropy below the
    /// threshold and its argmax differs from the target, while budget lasts.
    Entropy,
}

impl AttackMode {
    pub fn name(self) -> &'static str {
        match self {
            AttackMode::None => "none",
            AttackMode::Random => "random",
            AttackMode::Entropy => "entropy",
        }
    }

    pub fn from_name(s: &str) -> Result<AttackMode> {
        match s {
            "none" => Ok(AttackMode::None),
            "random" => Ok(AttackMode::Random),
            "entropy" => Ok(AttackMode::Entropy),
            other => Err(Error::InvalidConfig(format!(
                "unknown attack mode '{other}' (expected none, random, or entropy)"
            ))),
        }
    }
}

/// How the executed action is chosen from the final distribution. Greedy is
/// the default everywhere; sampling exists for exploratory runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ActionSelection {
    #[default]
    Greedy,
    /// Sample from the distribution, seeded per rollout.
    Sample,
}

#[derive(Clone, Debug)]
pub struct AttackConfig {
    pub mode: AttackMode,
    /// Maximum number of perturbed steps per rollout.
    pub budget: usize,
    /// Entropy threshold in nats (Entropy mode only).
    pub entropy_threshold: f32,
    pub target_action: Action,
    /// Required for Random and Entropy modes; ignored for None.
    pub patch: Option<TriggerPatch>,
    /// Seeds the Random schedule and, in Sample selection, the action draws.
    pub schedule_seed: u64,
    pub selection: ActionSelection,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            mode: AttackMode::None,
            budget: 100,
            entropy_threshold: 0.005,
            target_action: Action::Gas,
            patch: None,
            schedule_seed: 0,
            selection: ActionSelection::Greedy,
        }
    }
}

impl AttackConfig {
    /// Unattacked evaluation under the same rollout machinery.
    pub fn none() -> AttackConfig {
        AttackConfig::default()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode == AttackMode::Entropy
            && !(self.entropy_threshold > 0.0 && self.entropy_threshold.is_finite())
        {
            return Err(Error::InvalidConfig(format!(
                "entropy_threshold must be positive and finite, got {}",
                self.entropy_threshold
            )));
        }
        if self.mode != AttackMode::None && self.patch.is_none() {
            return Err(Error::InvalidConfig(format!(
                "attack mode '{}' needs a trigger patch",
                self.mode.name()
            )));
        }
        Ok(())
    }
}

/// Outcome of one entropy-mode decision, made on the clean observation's
/// distribution before any trigger is applied.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepDecision {
    pub attacked: bool,
    /// Entropy of the examined (clean) distribution, nats.
    pub entropy: f32,
    pub pre_attack_argmax: Action,
    /// Budget left after this decision.
    pub budget_remaining: usize,
}

/// Decide whether to spend one attack on this step. Attack iff budget
/// remains, the distribution's entropy is below the threshold, and its
/// argmax is not already the target action.
pub fn entropy_decision(
    dist: &ActionDistribution,
    cfg: &AttackConfig,
    budget_remaining: usize,
) -> Result<StepDecision> {
    let h = entropy(dist)?;
    let pre = argmax_action(dist);
    let attacked =
        budget_remaining > 0 && h < cfg.entropy_threshold && pre != cfg.target_action;
    Ok(StepDecision {
        attacked,
        entropy: h,
        pre_attack_argmax: pre,
        budget_remaining: budget_remaining - usize::from(attacked),
    })
}

/// B distinct timesteps drawn uniformly without replacement from
/// [0, t_max), sorted ascending.
pub fn plan_random_schedule(budget: usize, t_max: u32, seed: u64) -> Result<Vec<u32>> {
    let t_max = t_max as usize;
    if budget > t_max {
        return Err(Error::InvalidConfig(format!(
            "budget {budget} exceeds episode cap {t_max}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks: Vec<u32> = rand::seq::index::sample(&mut rng, t_max, budget)
        .into_iter()
        .map(|t| t as u32)
        .collect();
    picks.sort_unstable();
    Ok(picks)
}

/// One step of a rollout trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub action: Action,
    pub reward: f32,
    /// Entropy of the distribution the executed action came from (for
    /// attacked steps, the post-trigger distribution).
    pub entropy: f32,
    pub attacked: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RolloutRecord {
    pub steps: Vec<StepRecord>,
    pub total_reward: f32,
    pub attacks_used: usize,
}

impl RolloutRecord {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

fn select_action<R: rand::Rng>(
    dist: &ActionDistribution,
    selection: ActionSelection,
    rng: &mut R,
) -> Result<Action> {
    match selection {
        ActionSelection::Greedy => Ok(argmax_action(dist)),
        ActionSelection::Sample => {
            let idx = rand::distributions::WeightedIndex::new(dist)
                .map_err(|e| Error::InvalidInput(format!("cannot sample from distribution: {e}")))?;
            Ok(Action::ALL[rand::distributions::Distribution::sample(&idx, rng)])
        }
    }
}

/// Run one episode under the given attack configuration. The policy is
/// queried on the clean render first in Entropy mode (the decision looks at
/// what the policy would do unattacked) and once more on the triggered
/// observation when attacking; Random and None modes query exactly once per
/// step, on the observation the policy actually executes from.
pub fn run_attacked_rollout<P: ActionPolicy>(
    policy: &P,
    track: &Track,
    env_params: &EnvParams,
    render_cfg: &RenderConfig,
    cfg: &AttackConfig,
) -> Result<RolloutRecord> {
    cfg.validate()?;
    env_params.validate()?;
    render_cfg.validate()?;
    if let Some(patch) = &cfg.patch {
        let s = &patch.spec;
        if s.anchor_row + s.size > render_cfg.height || s.anchor_col + s.size > render_cfg.width {
            return Err(Error::InvalidConfig(format!(
                "trigger patch ({}x{} at {},{}) does not fit {}x{} observations",
                s.size, s.size, s.anchor_row, s.anchor_col, render_cfg.height, render_cfg.width
            )));
        }
    }

    let schedule = match cfg.mode {
        AttackMode::Random => {
            plan_random_schedule(cfg.budget, env_params.t_max, cfg.schedule_seed)?
        }
        _ => Vec::new(),
    };
    let mut cursor = 0usize;
    let mut budget_left = cfg.budget;
    let mut sample_rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.schedule_seed, streams::SAMPLE));

    let mut state = reset(track);
    let mut steps = Vec::new();
    let mut total_reward = 0.0f32;
    let mut attacks_used = 0usize;

    while !state.done {
        let obs = render(&state, track, render_cfg);
        let (dist, attacked) = match cfg.mode {
            AttackMode::None => (policy.action_dist(&obs)?, false),
            AttackMode::Random => {
                let hit = cursor < schedule.len() && schedule[cursor] == state.step_index;
                if hit {
                    cursor += 1;
                    let patch = cfg.patch.as_ref().expect("validated above");
                    (policy.action_dist(&apply_trigger(&obs, patch)?)?, true)
                } else {
                    (policy.action_dist(&obs)?, false)
                }
            }
            AttackMode::Entropy => {
                let clean_dist = policy.action_dist(&obs)?;
                let decision = entropy_decision(&clean_dist, cfg, budget_left)?;
                if decision.attacked {
                    budget_left = decision.budget_remaining;
                    let patch = cfg.patch.as_ref().expect("validated above");
                    (policy.action_dist(&apply_trigger(&obs, patch)?)?, true)
                } else {
                    (clean_dist, false)
                }
            }
        };
        let action = select_action(&dist, cfg.selection, &mut sample_rng)?;
        let (next, reward, _) = step(&state, action, track, env_params)?;
        steps.push(StepRecord {
            action,
            reward,
            entropy: entropy(&dist)?,
            attacked,
        });
        total_reward += reward;
        attacks_used += usize::from(attacked);
        state = next;
    }

    debug_assert!(attacks_used <= cfg.budget);
    Ok(RolloutRecord {
        steps,
        total_reward,
        attacks_used,
    })
}
