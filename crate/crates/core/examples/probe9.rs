//! End-to-end texture check at the candidate committed scale: clean-policy
//! rollout reward vs the expert, red-patch control rate and clean-reward
//! penalty, the entropy profile along a rollout (is the attack gate ever
//! open at the default threshold?), and the full three-arm attack
//! comparison at 30 rollouts including the zero-budget identity.

use bclab_core::attack::{ActionSelection, AttackConfig};
use bclab_core::config::RunConfig;
use bclab_core::data::{make_trigger, poison_dataset, TriggerSpec};
use bclab_core::env::{self, Action, RenderConfig, TrackConfig};
use bclab_core::eval::{
    compare_attacks, control_rate, evaluate_policy, frames_at, EvalReport, EvalSettings,
};
use bclab_core::expert::{collect_demos, expert_episode, ExpertParams};
use bclab_core::policy::{
    argmax_action, entropy, train_bc, ActionPolicy, PolicyNet, PolicyWidths, TrainConfig,
};

fn entropy_profile(net: &PolicyNet, track_cfg: &TrackConfig, cfg: &RunConfig, render: &RenderConfig, label: &str) {
    let track = track_cfg.generate(cfg.eval_track_base()).unwrap();
    let mut state = env::reset(&track);
    let mut all: Vec<f32> = Vec::new();
    let mut nongas: Vec<f32> = Vec::new();
    while !state.done {
        let obs = env::render(&state, &track, render);
        let dist = net.action_dist(&obs).unwrap();
        let h = entropy(&dist).unwrap();
        all.push(h);
        let a = argmax_action(&dist);
        if a != Action::Gas {
            nongas.push(h);
        }
        let (next, _, _) = env::step(&state, a, &track, &cfg.env).unwrap();
        state = next;
    }
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    nongas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = |v: &[f32], p: f64| {
        if v.is_empty() { f32::NAN } else { v[((v.len() - 1) as f64 * p).round() as usize] }
    };
    let open = nongas.iter().filter(|&&h| h < 0.005).count();
    println!(
        "[{label}] steps {}, nongas {}, gate-open(nongas H<0.005) {}",
        all.len(), nongas.len(), open
    );
    println!(
        "[{label}] H all    min {:.6} p10 {:.6} p25 {:.6} p50 {:.6} p90 {:.6}",
        q(&all, 0.0), q(&all, 0.10), q(&all, 0.25), q(&all, 0.50), q(&all, 0.90)
    );
    println!(
        "[{label}] H nongas min {:.6} p10 {:.6} p25 {:.6} p50 {:.6} p90 {:.6}",
        q(&nongas, 0.0), q(&nongas, 0.10), q(&nongas, 0.25), q(&nongas, 0.50), q(&nongas, 0.90)
    );
}

fn arm(label: &str, r: &EvalReport) {
    println!(
        "  {label:<10} mean {:8.1} se {:6.1} attacks_used {}",
        r.reward.mean, r.reward.se, r.attacks_used_total
    );
}

fn bits(r: &EvalReport) -> Vec<u32> {
    r.rollouts.iter().map(|x| x.total_reward.to_bits()).collect()
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let eps: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(72);
    let epochs: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(28);
    let db: f32 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(0.042);
    let rn: f32 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(0.15);
    println!("eps={eps} epochs={epochs} db={db} rn={rn}");

    let cfg = RunConfig::default();
    let exp = ExpertParams {
        lookahead: 1,
        angle_deadband: db,
        v_target: 3.0,
        brake_curvature: 0.5,
    };
    let track_cfg = TrackConfig {
        n_waypoints: 20,
        base_radius: 70.0,
        radial_noise: rn,
        ..TrackConfig::default()
    };
    let render = RenderConfig { height: 64, width: 64, view_span: 30.0 };
    let settings = EvalSettings {
        track_cfg: track_cfg.clone(),
        env: cfg.env,
        render,
        n_rollouts: 30,
        track_seed_base: cfg.eval_track_base(),
        schedule_seed_base: cfg.schedule_base(),
    };

    let mut expert_mean = 0.0f64;
    let mut expert_min = f64::INFINITY;
    for i in 0..settings.n_rollouts as u64 {
        let t = track_cfg.generate(cfg.eval_track_base().wrapping_add(i)).unwrap();
        let recs = expert_episode(&t, &cfg.env, &render, &exp).unwrap();
        let total: f64 = recs.iter().map(|r| r.reward as f64).sum();
        expert_mean += total;
        expert_min = expert_min.min(total);
    }
    expert_mean /= settings.n_rollouts as f64;
    println!("expert eval tracks: mean {expert_mean:.1} min {expert_min:.1}");

    let demos = collect_demos(&track_cfg, &cfg.env, &render, &exp, eps, cfg.demo_seed()).unwrap();
    println!("demo frames {}", demos.total_frames());

    let tc = TrainConfig {
        learning_rate: 1e-3,
        batch_size: 64,
        epochs,
        holdout_fraction: 0.1,
        seed: cfg.train_seed(0),
    };

    let t0 = std::time::Instant::now();
    let mut clean = PolicyNet::init(64, 64, PolicyWidths::default(), cfg.train_seed(0)).unwrap();
    let clean_log = train_bc(&mut clean, &demos, &tc).unwrap();
    println!(
        "clean: final acc {:.4} ({:.0}s)",
        clean_log.epoch_holdout_accuracy.last().unwrap(),
        t0.elapsed().as_secs_f64()
    );
    let clean_eval = evaluate_policy(&clean, &AttackConfig::none(), &settings).unwrap();
    println!(
        "clean reward mean {:.1} se {:.1} min {:.1} | ratio to expert {:.3}",
        clean_eval.reward.mean,
        clean_eval.reward.se,
        clean_eval.rollouts.iter().map(|r| r.total_reward as f64).fold(f64::INFINITY, f64::min),
        clean_eval.reward.mean / expert_mean
    );
    entropy_profile(&clean, &track_cfg, &cfg, &render, "clean");

    let spec = TriggerSpec::default();
    let patch = make_trigger(&spec, 64, 64).unwrap();
    let (poisoned, rep) = poison_dataset(&demos, Action::Gas, 0.05, &patch, cfg.poison_seed(0)).unwrap();
    println!(
        "poisoned {} of {} gas frames (overall {:.4})",
        rep.n_poisoned, rep.n_target_frames, rep.overall_fraction
    );
    let t1 = std::time::Instant::now();
    let mut red = PolicyNet::init(64, 64, PolicyWidths::default(), cfg.train_seed(0)).unwrap();
    let red_log = train_bc(&mut red, &poisoned, &tc).unwrap();
    println!(
        "red: final acc {:.4} ({:.0}s) | acc delta vs clean {:+.4}",
        red_log.epoch_holdout_accuracy.last().unwrap(),
        t1.elapsed().as_secs_f64(),
        red_log.epoch_holdout_accuracy.last().unwrap() - clean_log.epoch_holdout_accuracy.last().unwrap()
    );

    let frames = frames_at(&demos, &red_log.holdout_indices).unwrap();
    let cr = control_rate(&red, &frames, &patch, Action::Gas).unwrap();
    println!(
        "red control overall {:.4} nontarget {:.4} (frames {} nontarget {})",
        cr.overall, cr.nontarget, cr.n_frames, cr.n_nontarget
    );
    let clean_cr = control_rate(&clean, &frames, &patch, Action::Gas).unwrap();
    println!(
        "clean-net control overall {:.4} nontarget {:.4}",
        clean_cr.overall, clean_cr.nontarget
    );

    let red_eval = evaluate_policy(&red, &AttackConfig::none(), &settings).unwrap();
    println!(
        "red clean reward mean {:.1} | ratio to clean policy {:.3}",
        red_eval.reward.mean,
        red_eval.reward.mean / clean_eval.reward.mean
    );
    entropy_profile(&red, &track_cfg, &cfg, &render, "red");

    println!("compare_attacks budget=100 tau=0.005:");
    let cmp = compare_attacks(&red, &patch, Action::Gas, 100, 0.005, ActionSelection::Greedy, &settings).unwrap();
    arm("unattacked", &cmp.unattacked);
    arm("random", &cmp.random);
    arm("entropy", &cmp.entropy);
    let c8a = cmp.entropy.reward.mean + 2.0 * cmp.entropy.reward.se < cmp.random.reward.mean;
    let c8b = cmp.entropy.reward.mean <= 0.8 * cmp.unattacked.reward.mean;
    println!("  entropy+2se<random: {c8a} | entropy<=0.8*unattacked: {c8b}");

    let z = compare_attacks(&red, &patch, Action::Gas, 0, 0.005, ActionSelection::Greedy, &settings).unwrap();
    let ident = bits(&z.unattacked) == bits(&z.random) && bits(&z.unattacked) == bits(&z.entropy);
    println!(
        "budget=0: identical {} (means {:.1} / {:.1} / {:.1})",
        ident, z.unattacked.reward.mean, z.random.reward.mean, z.entropy.reward.mean
    );

    let gspec = TriggerSpec { kind: bclab_core::data::TriggerKind::GaussianPatch, ..TriggerSpec::default() };
    let gpatch = make_trigger(&gspec, 64, 64).unwrap();
    let (gpoisoned, _) = poison_dataset(&demos, Action::Gas, 0.05, &gpatch, cfg.poison_seed(0)).unwrap();
    let t2 = std::time::Instant::now();
    let mut gnet = PolicyNet::init(64, 64, PolicyWidths::default(), cfg.train_seed(0)).unwrap();
    let glog = train_bc(&mut gnet, &gpoisoned, &tc).unwrap();
    let gframes = frames_at(&demos, &glog.holdout_indices).unwrap();
    let gcr = control_rate(&gnet, &gframes, &gpatch, Action::Gas).unwrap();
    println!(
        "gaussian: final acc {:.4} ({:.0}s) control overall {:.4} nontarget {:.4}",
        glog.epoch_holdout_accuracy.last().unwrap(),
        t2.elapsed().as_secs_f64(),
        gcr.overall, gcr.nontarget
    );
}
