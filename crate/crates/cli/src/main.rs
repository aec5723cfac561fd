//! `bclab`: drive the imitation-learning poisoning pipeline from the shell.
//!
//! Stages are separate subcommands sharing one flat config file, so a demo
//! set collected once can feed many poison/train/eval variations. All paths
//! come from the config; `--out` rebinds the subcommand's primary output.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use bclab_core::attack::AttackMode;
use bclab_core::config::{load_config, RunConfig, SweepAxis};
use bclab_core::data::{
    dataset_stats, load_dataset, make_trigger, poison_dataset, save_dataset, Dataset,
};
use bclab_core::env::Action;
use bclab_core::eval::{
    compare_attacks, control_rate, evaluate_policy, frames_at, run_sweep, ControlRates,
    EvalReport, EvalSettings,
};
use bclab_core::expert::collect_demos;
use bclab_core::policy::{holdout_split, load_policy, save_policy, train_bc, PolicyNet};
use bclab_core::report::{emit_report, read_csv, write_csv, ReportKind, SweepMetrics, SweepRow};

#[derive(Parser)]
#[command(
    name = "bclab",
    about = "Backdoor-poisoning laboratory for behavioral-cloning driving policies",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config file (key=value lines); defaults apply if omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the poison fraction
    #[arg(long)]
    fraction: Option<f64>,
    /// Override the trigger type (red, gaussian, colorshift)
    #[arg(long)]
    patch_type: Option<String>,
    /// Override the trigger side length in pixels
    #[arg(long)]
    patch_size: Option<usize>,
    /// Override the test-time attack budget
    #[arg(long)]
    budget: Option<usize>,
    /// Override the entropy gate threshold (nats)
    #[arg(long)]
    entropy_threshold: Option<f64>,
    /// Override the subcommand's primary output path
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Collect expert demonstration episodes and save them
    GenDemos(Common),
    /// Stamp triggers onto a saved demo set and save the poisoned copy
    Poison(Common),
    /// Train a policy on a saved dataset and save the checkpoint
    Train(Common),
    /// Evaluate a checkpoint: rollout reward plus backdoor control rate
    Eval(Common),
    /// Compare unattacked, random and entropy-gated attacks on a checkpoint
    AttackEval(Common),
    /// Run the configured parameter sweep end to end
    Sweep(Common),
    /// Re-render charts and a text summary from a sweep CSV
    Report(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::GenDemos(c)
            | Command::Poison(c)
            | Command::Train(c)
            | Command::Eval(c)
            | Command::AttackEval(c)
            | Command::Sweep(c)
            | Command::Report(c) => c,
        }
    }
}

fn resolve_config(common: &Common) -> anyhow::Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            load_config(path).with_context(|| format!("loading config {}", path.display()))?
        }
        None => RunConfig::default(),
    };
    if let Some(v) = common.seed {
        cfg.apply_override("seed", &v.to_string())?;
    }
    if let Some(v) = common.fraction {
        cfg.apply_override("poison_fraction", &v.to_string())?;
    }
    if let Some(v) = &common.patch_type {
        cfg.apply_override("patch_type", v)?;
    }
    if let Some(v) = common.patch_size {
        cfg.apply_override("patch_size", &v.to_string())?;
    }
    if let Some(v) = common.budget {
        cfg.apply_override("budget", &v.to_string())?;
    }
    if let Some(v) = common.entropy_threshold {
        cfg.apply_override("entropy_threshold", &v.to_string())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(feature = "parallel")]
fn set_workers(n: usize) {
    if n > 0 {
        // Err only means a global pool already exists, which is fine
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
}

#[cfg(not(feature = "parallel"))]
fn set_workers(_: usize) {}

fn ensure_parent(path: &Path) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    Ok(())
}

fn collect_demo_set(cfg: &RunConfig) -> anyhow::Result<Dataset> {
    Ok(collect_demos(
        &cfg.track_config(),
        &cfg.env,
        &cfg.render_config(),
        &cfg.expert,
        cfg.n_episodes,
        cfg.demo_seed(),
    )?)
}

fn print_stats(label: &str, data: &Dataset) {
    let stats = dataset_stats(data);
    let poisoned: usize = stats.poisoned_counts.iter().sum();
    println!(
        "{label}: {} episodes, {} frames ({} poisoned)",
        stats.episodes, stats.total_frames, poisoned
    );
    for action in Action::ALL {
        let n = stats.action_counts[action.index()];
        println!(
            "  {:>5}: {:>7} frames ({:.1}%)",
            action.name(),
            n,
            100.0 * n as f64 / stats.total_frames.max(1) as f64
        );
    }
}

fn cmd_gen_demos(cfg: &RunConfig, out: Option<PathBuf>) -> anyhow::Result<()> {
    let path = out.unwrap_or_else(|| PathBuf::from(&cfg.demos_path));
    let demos = collect_demo_set(cfg)?;
    let mean_reward: f64 = demos
        .episodes
        .iter()
        .map(|ep| ep.iter().map(|r| r.reward as f64).sum::<f64>())
        .sum::<f64>()
        / demos.episodes.len().max(1) as f64;
    ensure_parent(&path)?;
    save_dataset(&demos, &path)?;
    print_stats("demos", &demos);
    println!("mean episode reward: {mean_reward:.3}");
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_poison(cfg: &RunConfig, out: Option<PathBuf>) -> anyhow::Result<()> {
    let path = out.unwrap_or_else(|| PathBuf::from(&cfg.dataset_path));
    let demos = load_dataset(Path::new(&cfg.demos_path))
        .with_context(|| format!("loading demos from {}", cfg.demos_path))?;
    let patch = make_trigger(&cfg.trigger_spec(), demos.height, demos.width)?;
    let (poisoned, report) = poison_dataset(
        &demos,
        cfg.target_action,
        cfg.poison_fraction,
        &patch,
        cfg.poison_seed(0),
    )?;
    ensure_parent(&path)?;
    save_dataset(&poisoned, &path)?;
    println!(
        "stamped {} of {} {} frames ({:.2}% of the dataset) with {} size {}",
        report.n_poisoned,
        report.n_target_frames,
        report.target_action.name(),
        100.0 * report.overall_fraction,
        cfg.patch_type.name(),
        cfg.patch_size
    );
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_train(cfg: &RunConfig, out: Option<PathBuf>) -> anyhow::Result<()> {
    let path = out.unwrap_or_else(|| PathBuf::from(&cfg.checkpoint_path));
    let dataset = load_dataset(Path::new(&cfg.dataset_path))
        .with_context(|| format!("loading dataset from {}", cfg.dataset_path))?;
    print_stats("training set", &dataset);
    let mut net = PolicyNet::init(dataset.height, dataset.width, cfg.widths(), cfg.train_seed(0))?;
    let log = train_bc(&mut net, &dataset, &cfg.train_config(0))?;
    for (i, (loss, acc)) in log
        .epoch_train_loss
        .iter()
        .zip(&log.epoch_holdout_accuracy)
        .enumerate()
    {
        println!("epoch {:>2}: train loss {loss:.4}, holdout acc {acc:.4}", i + 1);
    }
    ensure_parent(&path)?;
    save_policy(&net, &path)?;
    println!(
        "trained on {} frames, held out {}; wrote {}",
        log.n_train_frames,
        log.n_holdout_frames,
        path.display()
    );
    Ok(())
}

/// Rebuild the held-out clean frames the training split left aside.
fn holdout_frames(cfg: &RunConfig, demos: &Dataset) -> anyhow::Result<Vec<usize>> {
    let n = demos.flat().len();
    let (_, holdout) = holdout_split(n, cfg.holdout_fraction, cfg.train_seed(0))?;
    Ok(holdout)
}

fn measure_control(
    cfg: &RunConfig,
    net: &PolicyNet,
    demos: &Dataset,
) -> anyhow::Result<ControlRates> {
    let indices = holdout_frames(cfg, demos)?;
    let frames = frames_at(demos, &indices)?;
    let patch = make_trigger(&cfg.trigger_spec(), demos.height, demos.width)?;
    Ok(control_rate(net, &frames, &patch, cfg.target_action)?)
}

fn row_shell(cfg: &RunConfig, axis: &str, value: &str, mode: AttackMode) -> SweepRow {
    let (mode_name, budget, threshold) = match mode {
        AttackMode::None => ("none", 0, 0.0),
        AttackMode::Random => ("random", cfg.budget, 0.0),
        AttackMode::Entropy => ("entropy", cfg.budget, cfg.entropy_threshold as f64),
    };
    SweepRow {
        experiment_id: cfg.experiment_id(axis, value, 0),
        seed: 0,
        obs_size: cfg.obs_size,
        poison_fraction: cfg.poison_fraction,
        patch_type: cfg.patch_type.name().to_string(),
        patch_size: cfg.patch_size,
        attack_mode: mode_name.to_string(),
        budget,
        entropy_threshold: threshold,
        n_rollouts: cfg.n_rollouts,
        metrics: None,
    }
}

fn report_metrics(report: &EvalReport, rates: &ControlRates) -> SweepMetrics {
    SweepMetrics {
        mean_reward: report.reward.mean,
        se_reward: report.reward.se,
        control_rate: rates.overall,
        control_rate_nontarget: rates.nontarget,
        train_holdout_acc: f64::NAN,
        wall_seconds: 0.0,
    }
}

fn cmd_eval(cfg: &RunConfig, out: Option<PathBuf>) -> anyhow::Result<()> {
    let csv = out.unwrap_or_else(|| PathBuf::from(&cfg.csv_path));
    let net = load_policy(Path::new(&cfg.checkpoint_path))
        .with_context(|| format!("loading checkpoint from {}", cfg.checkpoint_path))?;
    let demos = load_dataset(Path::new(&cfg.demos_path))
        .with_context(|| format!("loading demos from {}", cfg.demos_path))?;

    let patch = match cfg.attack_mode {
        AttackMode::None => None,
        _ => Some(make_trigger(&cfg.trigger_spec(), demos.height, demos.width)?),
    };
    let settings = EvalSettings::from_config(cfg);
    let report = evaluate_policy(&net, &cfg.attack_config(patch), &settings)?;
    let rates = measure_control(cfg, &net, &demos)?;

    println!(
        "reward over {} rollouts: {:.3} +/- {:.3} (attacked steps: {})",
        cfg.n_rollouts, report.reward.mean, report.reward.se, report.attacks_used_total
    );
    println!(
        "control rate on {} held-out frames: {:.4} (non-{}: {:.4} over {})",
        rates.n_frames,
        rates.overall,
        cfg.target_action.name(),
        rates.nontarget,
        rates.n_nontarget
    );

    let mut row = row_shell(cfg, "eval", cfg.attack_mode.name(), cfg.attack_mode);
    row.metrics = Some(report_metrics(&report, &rates));
    ensure_parent(&csv)?;
    write_csv(&[row], &csv)?;
    println!("wrote {}", csv.display());
    Ok(())
}

fn cmd_attack_eval(cfg: &RunConfig, out: Option<PathBuf>) -> anyhow::Result<()> {
    let csv = out.unwrap_or_else(|| PathBuf::from(&cfg.csv_path));
    let net = load_policy(Path::new(&cfg.checkpoint_path))
        .with_context(|| format!("loading checkpoint from {}", cfg.checkpoint_path))?;
    let demos = load_dataset(Path::new(&cfg.demos_path))
        .with_context(|| format!("loading demos from {}", cfg.demos_path))?;
    let patch = make_trigger(&cfg.trigger_spec(), demos.height, demos.width)?;
    let settings = EvalSettings::from_config(cfg);

    let cmp = compare_attacks(
        &net,
        &patch,
        cfg.target_action,
        cfg.budget,
        cfg.entropy_threshold,
        cfg.action_selection,
        &settings,
    )?;
    let rates = measure_control(cfg, &net, &demos)?;

    let mut rows = Vec::new();
    for (mode, report) in [
        (AttackMode::None, &cmp.unattacked),
        (AttackMode::Random, &cmp.random),
        (AttackMode::Entropy, &cmp.entropy),
    ] {
        println!(
            "{:>8}: reward {:.3} +/- {:.3}, attacked steps {}",
            mode.name(),
            report.reward.mean,
            report.reward.se,
            report.attacks_used_total
        );
        let mut row = row_shell(cfg, "mode", mode.name(), mode);
        row.metrics = Some(report_metrics(report, &rates));
        rows.push(row);
    }
    ensure_parent(&csv)?;
    write_csv(&rows, &csv)?;
    println!("wrote {}", csv.display());
    Ok(())
}

fn cmd_sweep(cfg: &RunConfig, out: Option<PathBuf>) -> anyhow::Result<()> {
    let csv = out.unwrap_or_else(|| PathBuf::from(&cfg.csv_path));
    let demos_path = PathBuf::from(&cfg.demos_path);
    let demos = if demos_path.exists() {
        println!("reusing demos at {}", demos_path.display());
        load_dataset(&demos_path)?
    } else {
        println!("collecting {} demo episodes", cfg.n_episodes);
        let demos = collect_demo_set(cfg)?;
        ensure_parent(&demos_path)?;
        save_dataset(&demos, &demos_path)?;
        demos
    };

    let outcome = run_sweep(cfg, &demos)?;
    for (id, msg) in &outcome.failures {
        eprintln!("cell {id} failed: {msg}");
    }
    ensure_parent(&csv)?;
    write_csv(&outcome.rows, &csv)?;
    println!(
        "wrote {} rows ({} failed cells) to {}",
        outcome.rows.len(),
        outcome.failures.len(),
        csv.display()
    );

    let kind = axis_report_kind(cfg.sweep_axis);
    let (svg, txt) = report_paths(&csv, &cfg.out_dir)?;
    emit_report(&outcome.rows, kind, &svg, &txt)?;
    println!("wrote {} and {}", svg.display(), txt.display());
    Ok(())
}

fn axis_report_kind(axis: SweepAxis) -> ReportKind {
    match axis {
        SweepAxis::Fraction => ReportKind::PoisonFraction,
        SweepAxis::Size => ReportKind::PatchSize,
        SweepAxis::Type => ReportKind::PatchType,
    }
}

fn report_paths(csv: &Path, out_dir: &str) -> anyhow::Result<(PathBuf, PathBuf)> {
    let stem = csv
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("report");
    let dir = PathBuf::from(out_dir);
    fs::create_dir_all(&dir)?;
    Ok((dir.join(format!("{stem}.svg")), dir.join(format!("{stem}.txt"))))
}

fn cmd_report(cfg: &RunConfig, out: Option<PathBuf>) -> anyhow::Result<()> {
    let csv = PathBuf::from(&cfg.csv_path);
    let rows = read_csv(&csv).with_context(|| format!("reading {}", csv.display()))?;
    if rows.is_empty() {
        bail!("{} contains no rows", csv.display());
    }
    // the axis token an id was minted with picks the chart shape
    let axis_token = rows[0].experiment_id.split(':').nth(1).unwrap_or("");
    let kind = match axis_token {
        "size" => ReportKind::PatchSize,
        "type" => ReportKind::PatchType,
        "mode" => ReportKind::AttackMode,
        _ => ReportKind::PoisonFraction,
    };
    let out_dir = out
        .map(|p| p.to_string_lossy().into_owned())
        .unwrap_or_else(|| cfg.out_dir.clone());
    let (svg, txt) = report_paths(&csv, &out_dir)?;
    emit_report(&rows, kind, &svg, &txt)?;
    println!("wrote {} and {}", svg.display(), txt.display());
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let common = cli.command.common();
    let result = resolve_config(common).and_then(|cfg| {
        set_workers(cfg.workers);
        let out = common.out.clone();
        match &cli.command {
            Command::GenDemos(_) => cmd_gen_demos(&cfg, out),
            Command::Poison(_) => cmd_poison(&cfg, out),
            Command::Train(_) => cmd_train(&cfg, out),
            Command::Eval(_) => cmd_eval(&cfg, out),
            Command::AttackEval(_) => cmd_attack_eval(&cfg, out),
            Command::Sweep(_) => cmd_sweep(&cfg, out),
            Command::Report(_) => cmd_report(&cfg, out),
        }
    });
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
