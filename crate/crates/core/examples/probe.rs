//! Scratch calibration runs for choosing acceptance-config constants.
//! Not part of the shipped tool; delete before release.

use std::time::Instant;

use bclab_core::attack::{ActionSelection, AttackConfig};
use bclab_core::config::RunConfig;
use bclab_core::data::{make_trigger, poison_dataset, TriggerKind, TriggerSpec};
use bclab_core::env::Action;
use bclab_core::eval::{
    compare_attacks, control_rate, evaluate_policy, frames_at, reward_stats, EvalSettings,
};
use bclab_core::expert::{collect_demos, expert_episode};
use bclab_core::policy::{train_bc, PolicyNet, TrainLog};

fn main() {
    let mut cfg = RunConfig::default();
    cfg.n_episodes = 24;
    let t0 = Instant::now();

    // ---- expert baseline on the evaluation track distribution ----
    let track_cfg = cfg.track_config();
    let mut rewards = Vec::new();
    let mut laps = 0;
    for i in 0..20u64 {
        let track = track_cfg.generate(cfg.eval_track_base() + i).unwrap();
        let ep = expert_episode(&track, &cfg.env, &cfg.render_config(), &cfg.expert).unwrap();
        let total: f32 = ep.iter().map(|r| r.reward).sum();
        if total > 500.0 {
            laps += 1;
        }
        rewards.push(total as f64);
    }
    let s = reward_stats(&rewards).unwrap();
    println!(
        "[{:6.1}s] expert on 20 eval tracks: mean {:.3} se {:.3} min {:.3} laps {}/20",
        t0.elapsed().as_secs_f64(),
        s.mean,
        s.se,
        rewards.iter().cloned().fold(f64::INFINITY, f64::min),
        laps
    );
    let expert_mean = s.mean;

    // ---- demo corpus ----
    let demos = collect_demos(
        &track_cfg,
        &cfg.env,
        &cfg.render_config(),
        &cfg.expert,
        cfg.n_episodes,
        cfg.demo_seed(),
    )
    .unwrap();
    let stats = bclab_core::data::dataset_stats(&demos);
    println!(
        "[{:6.1}s] demos: {} frames, gas {} ({:.1}%)",
        t0.elapsed().as_secs_f64(),
        stats.total_frames,
        stats.action_counts[Action::Gas.index()],
        100.0 * stats.action_counts[Action::Gas.index()] as f64 / stats.total_frames as f64
    );

    let settings = EvalSettings::from_config(&cfg);

    let train_one = |fraction: f64, kind: TriggerKind, size: usize, seed: u64| -> (PolicyNet, TrainLog) {
        let spec = TriggerSpec {
            kind,
            size,
            ..TriggerSpec::default()
        };
        let patch = make_trigger(&spec, 64, 64).unwrap();
        let (poisoned, rep) =
            poison_dataset(&demos, Action::Gas, fraction, &patch, cfg.poison_seed(seed)).unwrap();
        let mut net = PolicyNet::init(64, 64, cfg.widths(), cfg.train_seed(seed)).unwrap();
        let log = train_bc(&mut net, &poisoned, &cfg.train_config(seed)).unwrap();
        println!(
            "[{:6.1}s] trained f={fraction} {:?} n={} poisoned={} acc={:.4} loss={:.4}",
            t0.elapsed().as_secs_f64(),
            kind,
            size,
            rep.n_poisoned,
            log.final_holdout_accuracy(),
            log.epoch_train_loss.last().unwrap()
        );
        (net, log)
    };

    let measure = |net: &PolicyNet, log: &TrainLog, kind: TriggerKind, size: usize| {
        let spec = TriggerSpec {
            kind,
            size,
            ..TriggerSpec::default()
        };
        let patch = make_trigger(&spec, 64, 64).unwrap();
        let frames = frames_at(&demos, &log.holdout_indices).unwrap();
        let rates = control_rate(net, &frames, &patch, Action::Gas).unwrap();
        let report = evaluate_policy(net, &AttackConfig::none(), &settings).unwrap();
        println!(
            "    reward {:.3} se {:.3} | control {:.4} nontarget {:.4} ({} frames)",
            report.reward.mean, report.reward.se, rates.overall, rates.nontarget, rates.n_frames
        );
        (report.reward.mean, rates.overall)
    };

    // clean baseline
    let (clean_net, clean_log) = train_one(0.0, TriggerKind::RedPatch, 3, 0);
    let (clean_reward, clean_control) = measure(&clean_net, &clean_log, TriggerKind::RedPatch, 3);
    println!(
        "    clean reward vs expert: {:.1}% (need >= 85%)",
        100.0 * clean_reward / expert_mean
    );

    // red 3x3 at 5%
    let (red_net, red_log) = train_one(0.05, TriggerKind::RedPatch, 3, 0);
    let (red_reward, red_control) = measure(&red_net, &red_log, TriggerKind::RedPatch, 3);
    println!(
        "    red5% reward drop {:.1}% | control {:.4} (need >= 0.90) | acc delta {:.4}",
        100.0 * (clean_reward - red_reward) / clean_reward,
        red_control,
        clean_log.final_holdout_accuracy() - red_log.final_holdout_accuracy()
    );

    // gaussian at 5%
    let (g_net, g_log) = train_one(0.05, TriggerKind::GaussianPatch, 3, 0);
    let (_g_reward, g_control) = measure(&g_net, &g_log, TriggerKind::GaussianPatch, 3);
    println!(
        "    red {red_control:.4} >= gaussian {g_control:.4}? both >= clean {clean_control:.4} + 0.3?"
    );

    // fraction 1.0
    let (full_net, full_log) = train_one(1.0, TriggerKind::RedPatch, 3, 0);
    let (full_reward, _) = measure(&full_net, &full_log, TriggerKind::RedPatch, 3);
    println!(
        "    f=1.0 reward {:.3} vs f=0.05 {:.3}: ratio {:.3} (need <= 0.5)",
        full_reward,
        red_reward,
        full_reward / red_reward
    );

    // patch size probes at 5%
    for size in [5usize, 25] {
        let (n, l) = train_one(0.05, TriggerKind::RedPatch, size, 0);
        measure(&n, &l, TriggerKind::RedPatch, size);
    }

    // entropy prerequisites on the red 5% net: clean-step entropy profile
    let clean_rollout = evaluate_policy(&red_net, &AttackConfig::none(), &settings).unwrap();
    let mut ents: Vec<f32> = clean_rollout
        .rollouts
        .iter()
        .flat_map(|r| r.steps.iter().map(|s| s.entropy))
        .collect();
    ents.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = |p: f64| ents[((ents.len() - 1) as f64 * p) as usize];
    println!(
        "[{:6.1}s] step entropies on red5% net: n={} p5 {:.5} p25 {:.5} p50 {:.5} p75 {:.5} under-tau {:.3}",
        t0.elapsed().as_secs_f64(),
        ents.len(),
        q(0.05),
        q(0.25),
        q(0.5),
        q(0.75),
        ents.iter().filter(|e| **e < 0.005).count() as f64 / ents.len() as f64
    );

    // attack comparison, 30 rollouts
    let mut wide = cfg.clone();
    wide.n_rollouts = 30;
    let wide_settings = EvalSettings::from_config(&wide);
    let patch = make_trigger(&TriggerSpec::default(), 64, 64).unwrap();
    let cmp = compare_attacks(
        &red_net,
        &patch,
        Action::Gas,
        100,
        0.005,
        ActionSelection::Greedy,
        &wide_settings,
    )
    .unwrap();
    println!(
        "[{:6.1}s] attacks over 30 rollouts:",
        t0.elapsed().as_secs_f64()
    );
    for (name, r) in [
        ("unattacked", &cmp.unattacked),
        ("random", &cmp.random),
        ("entropy", &cmp.entropy),
    ] {
        println!(
            "    {name:>10}: mean {:.3} se {:.3} attacks {}",
            r.reward.mean, r.reward.se, r.attacks_used_total
        );
    }
    println!(
        "    entropy+2se {:.3} < random {:.3}? entropy {:.3} <= 0.8*unattacked {:.3}?",
        cmp.entropy.reward.mean + 2.0 * cmp.entropy.reward.se,
        cmp.random.reward.mean,
        cmp.entropy.reward.mean,
        0.8 * cmp.unattacked.reward.mean
    );
    println!("[{:6.1}s] done", t0.elapsed().as_secs_f64());
}
