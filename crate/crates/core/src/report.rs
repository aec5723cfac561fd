//! Result serialization: the CSV row schema shared by all experiment
//! runners, plus byte-deterministic SVG charts and a plain-text summary.
//!
//! CSV columns are fixed. Error rows (a sweep cell that failed) keep their
//! configuration columns and leave all six metric columns empty; readers
//! round-trip them. No field may contain a comma.

use std::fmt::Write as FmtWrite;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "experiment_id,seed,obs_size,poison_fraction,patch_type,patch_size,attack_mode,budget,entropy_threshold,n_rollouts,mean_reward,se_reward,control_rate,control_rate_nontarget,train_holdout_acc,wall_seconds";

/// Measured outcomes of one experiment cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepMetrics {
    pub mean_reward: f64,
    pub se_reward: f64,
    pub control_rate: f64,
    pub control_rate_nontarget: f64,
    pub train_holdout_acc: f64,
    pub wall_seconds: f64,
}

/// One CSV row: the cell's configuration echo plus its metrics, or `None`
/// metrics for a cell that errored.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub experiment_id: String,
    pub seed: u64,
    pub obs_size: usize,
    pub poison_fraction: f64,
    pub patch_type: String,
    pub patch_size: usize,
    pub attack_mode: String,
    pub budget: usize,
    pub entropy_threshold: f64,
    pub n_rollouts: usize,
    pub metrics: Option<SweepMetrics>,
}

impl SweepRow {
    /// Config-hash prefix of the experiment id (text before the first ':').
    pub fn hash_prefix(&self) -> &str {
        self.experiment_id
            .split(':')
            .next()
            .unwrap_or(&self.experiment_id)
    }
}

fn format_row(row: &SweepRow) -> String {
    let mut s = format!(
        "{},{},{},{},{},{},{},{},{},{}",
        row.experiment_id,
        row.seed,
        row.obs_size,
        row.poison_fraction,
        row.patch_type,
        row.patch_size,
        row.attack_mode,
        row.budget,
        row.entropy_threshold,
        row.n_rollouts,
    );
    match &row.metrics {
        Some(m) => {
            write!(
                s,
                ",{:.4},{:.4},{:.4},{:.4},{:.4},{:.3}",
                m.mean_reward,
                m.se_reward,
                m.control_rate,
                m.control_rate_nontarget,
                m.train_holdout_acc,
                m.wall_seconds,
            )
            .expect("fmt to string");
        }
        None => s.push_str(",,,,,,"),
    }
    s
}

pub fn write_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    let mut out = String::with_capacity(rows.len() * 128 + CSV_HEADER.len() + 1);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in rows {
        for field in [&row.experiment_id, &row.patch_type, &row.attack_mode] {
            if field.contains(',') || field.contains('\n') {
                return Err(Error::InvalidInput(format!(
                    "field '{field}' would corrupt the CSV"
                )));
            }
        }
        out.push_str(&format_row(row));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

fn parse_field<T: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<T> {
    s.parse().map_err(|_| {
        Error::Format {
            offset: line as u64,
            msg: format!("line {line}: cannot parse {what} from '{s}'"),
        }
    })
}

pub fn read_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == CSV_HEADER => {}
        Some((_, h)) => {
            return Err(Error::Format {
                offset: 0,
                msg: format!("unexpected CSV header '{h}'"),
            })
        }
        None => {
            return Err(Error::Format {
                offset: 0,
                msg: "empty CSV".into(),
            })
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 16 {
            return Err(Error::Format {
                offset: i as u64,
                msg: format!("line {i}: expected 16 fields, got {}", f.len()),
            });
        }
        let metric_fields = &f[10..16];
        let empties = metric_fields.iter().filter(|s| s.is_empty()).count();
        let metrics = match empties {
            6 => None,
            0 => Some(SweepMetrics {
                mean_reward: parse_field(f[10], i, "mean_reward")?,
                se_reward: parse_field(f[11], i, "se_reward")?,
                control_rate: parse_field(f[12], i, "control_rate")?,
                control_rate_nontarget: parse_field(f[13], i, "control_rate_nontarget")?,
                train_holdout_acc: parse_field(f[14], i, "train_holdout_acc")?,
                wall_seconds: parse_field(f[15], i, "wall_seconds")?,
            }),
            _ => {
                return Err(Error::Format {
                    offset: i as u64,
                    msg: format!("line {i}: metric columns must be all present or all empty"),
                })
            }
        };
        rows.push(SweepRow {
            experiment_id: f[0].to_string(),
            seed: parse_field(f[1], i, "seed")?,
            obs_size: parse_field(f[2], i, "obs_size")?,
            poison_fraction: parse_field(f[3], i, "poison_fraction")?,
            patch_type: f[4].to_string(),
            patch_size: parse_field(f[5], i, "patch_size")?,
            attack_mode: f[6].to_string(),
            budget: parse_field(f[7], i, "budget")?,
            entropy_threshold: parse_field(f[8], i, "entropy_threshold")?,
            n_rollouts: parse_field(f[9], i, "n_rollouts")?,
            metrics,
        });
    }
    Ok(rows)
}

// ============================================================================
// charts
// ============================================================================

/// Which axis the rows vary over; selects chart shape and x labels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportKind {
    PoisonFraction,
    PatchSize,
    PatchType,
    AttackMode,
}

impl ReportKind {
    fn x_label(self) -> &'static str {
        match self {
            ReportKind::PoisonFraction => "poison fraction",
            ReportKind::PatchSize => "patch size (pixels)",
            ReportKind::PatchType => "patch type",
            ReportKind::AttackMode => "attack mode",
        }
    }
}

/// Stable series palette; unknown keys get gray.
fn series_color(key: &str) -> &'static str {
    match key {
        "red" | "entropy" => "#c03a2b",
        "gaussian" | "random" => "#5b4fc4",
        "colorshift" => "#1f8a70",
        "none" => "#666666",
        _ => "#999999",
    }
}

fn fmt2(v: f64) -> String {
    format!("{v:.2}")
}

struct Panel {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
}

impl Panel {
    fn sx(&self, t: f64) -> f64 {
        self.x0 + t * self.w
    }

    fn sy(&self, t: f64) -> f64 {
        // svg y grows downward
        self.y0 + (1.0 - t) * self.h
    }
}

struct SeriesPoint {
    x: f64,
    y: f64,
    err: f64,
}

/// Group rows with metrics into (series key, sorted points). Series are
/// keyed by what the rows vary over beyond the x axis, so multi-fraction
/// size sweeps chart one line per fraction.
fn collect_series(
    rows: &[SweepRow],
    kind: ReportKind,
    y_of: &dyn Fn(&SweepMetrics) -> (f64, f64),
) -> Vec<(String, Vec<SeriesPoint>)> {
    // categorical x positions follow first appearance order
    let mut categories: Vec<String> = Vec::new();
    let mut series: Vec<(String, Vec<SeriesPoint>)> = Vec::new();
    for row in rows {
        let m = match &row.metrics {
            Some(m) => m,
            None => continue,
        };
        let (x, cat): (f64, Option<&str>) = match kind {
            ReportKind::PoisonFraction => (row.poison_fraction, None),
            ReportKind::PatchSize => (row.patch_size as f64, None),
            ReportKind::PatchType => (0.0, Some(&row.patch_type)),
            ReportKind::AttackMode => (0.0, Some(&row.attack_mode)),
        };
        let x = match cat {
            Some(c) => {
                let pos = categories.iter().position(|e| e == c).unwrap_or_else(|| {
                    categories.push(c.to_string());
                    categories.len() - 1
                });
                pos as f64
            }
            None => x,
        };
        let key = match kind {
            ReportKind::PoisonFraction => row.patch_type.clone(),
            ReportKind::PatchSize => format!("{} f={}", row.patch_type, row.poison_fraction),
            ReportKind::PatchType | ReportKind::AttackMode => "all".to_string(),
        };
        let (y, err) = y_of(m);
        let entry = match series.iter_mut().find(|(k, _)| *k == key) {
            Some(e) => e,
            None => {
                series.push((key, Vec::new()));
                series.last_mut().expect("just pushed")
            }
        };
        entry.1.push(SeriesPoint { x, y, err });
    }
    for (_, pts) in &mut series {
        pts.sort_by(|a, b| a.x.partial_cmp(&b.x).expect("finite x"));
    }
    series
}

fn category_labels(rows: &[SweepRow], kind: ReportKind) -> Vec<String> {
    let mut cats = Vec::new();
    for row in rows {
        if row.metrics.is_none() {
            continue;
        }
        let c = match kind {
            ReportKind::PatchType => &row.patch_type,
            ReportKind::AttackMode => &row.attack_mode,
            _ => continue,
        };
        if !cats.contains(c) {
            cats.push(c.clone());
        }
    }
    cats
}

fn draw_panel(
    svg: &mut String,
    panel: &Panel,
    title: &str,
    x_label: &str,
    series: &[(String, Vec<SeriesPoint>)],
    categories: &[String],
    bar_chart: bool,
    y_range: Option<(f64, f64)>,
) {
    // collect ranges
    let mut xs: Vec<f64> = Vec::new();
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for (_, pts) in series {
        for p in pts {
            xs.push(p.x);
            y_min = y_min.min(p.y - p.err);
            y_max = y_max.max(p.y + p.err);
        }
    }
    let (mut y_lo, mut y_hi) = y_range.unwrap_or((y_min, y_max));
    if !y_lo.is_finite() || !y_hi.is_finite() {
        y_lo = 0.0;
        y_hi = 1.0;
    }
    if (y_hi - y_lo).abs() < 1e-9 {
        y_lo -= 1.0;
        y_hi += 1.0;
    } else if y_range.is_none() {
        let pad = (y_hi - y_lo) * 0.08;
        y_lo -= pad;
        y_hi += pad;
    }
    let x_lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let x_hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (x_lo, x_hi) = if categories.is_empty() {
        if (x_hi - x_lo).abs() < 1e-9 {
            (x_lo - 1.0, x_hi + 1.0)
        } else {
            (x_lo, x_hi)
        }
    } else {
        (-0.5, categories.len() as f64 - 0.5)
    };
    let tx = |x: f64| (x - x_lo) / (x_hi - x_lo);
    let ty = |y: f64| (y - y_lo) / (y_hi - y_lo);

    // frame and labels
    let _ = write!(
        svg,
        r##"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#333333" stroke-width="1"/>"##,
        fmt2(panel.x0),
        fmt2(panel.y0),
        fmt2(panel.w),
        fmt2(panel.h)
    );
    let _ = write!(
        svg,
        r##"<text x="{}" y="{}" font-family="monospace" font-size="13" fill="#111111">{}</text>"##,
        fmt2(panel.x0),
        fmt2(panel.y0 - 10.0),
        title
    );
    let _ = write!(
        svg,
        r##"<text x="{}" y="{}" font-family="monospace" font-size="11" fill="#111111" text-anchor="middle">{}</text>"##,
        fmt2(panel.x0 + panel.w / 2.0),
        fmt2(panel.y0 + panel.h + 32.0),
        x_label
    );

    // y ticks
    for k in 0..=4 {
        let v = y_lo + (y_hi - y_lo) * k as f64 / 4.0;
        let y = panel.sy(ty(v));
        let _ = write!(
            svg,
            r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#cccccc" stroke-width="0.5"/>"##,
            fmt2(panel.x0),
            fmt2(y),
            fmt2(panel.x0 + panel.w),
            fmt2(y)
        );
        let _ = write!(
            svg,
            r##"<text x="{}" y="{}" font-family="monospace" font-size="10" fill="#333333" text-anchor="end">{}</text>"##,
            fmt2(panel.x0 - 5.0),
            fmt2(y + 3.0),
            fmt2(v)
        );
    }

    // x ticks: categorical labels or the distinct numeric values
    if categories.is_empty() {
        let mut distinct: Vec<f64> = xs.clone();
        distinct.sort_by(|a, b| a.partial_cmp(b).expect("finite x"));
        distinct.dedup();
        for v in &distinct {
            let x = panel.sx(tx(*v));
            let _ = write!(
                svg,
                r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#333333" stroke-width="1"/>"##,
                fmt2(x),
                fmt2(panel.y0 + panel.h),
                fmt2(x),
                fmt2(panel.y0 + panel.h + 4.0)
            );
            let _ = write!(
                svg,
                r##"<text x="{}" y="{}" font-family="monospace" font-size="9" fill="#333333" text-anchor="middle">{}</text>"##,
                fmt2(x),
                fmt2(panel.y0 + panel.h + 15.0),
                v
            );
        }
    } else {
        for (i, c) in categories.iter().enumerate() {
            let x = panel.sx(tx(i as f64));
            let _ = write!(
                svg,
                r##"<text x="{}" y="{}" font-family="monospace" font-size="10" fill="#333333" text-anchor="middle">{}</text>"##,
                fmt2(x),
                fmt2(panel.y0 + panel.h + 15.0),
                c
            );
        }
    }

    // data
    for (si, (key, pts)) in series.iter().enumerate() {
        let color = series_color(key.split(' ').next().unwrap_or(key));
        if bar_chart {
            for p in pts {
                let bw = (panel.w / (x_hi - x_lo) * 0.5).min(48.0);
                let x = panel.sx(tx(p.x)) - bw / 2.0;
                let y_zero = panel.sy(ty(y_lo.max(0.0_f64.min(y_hi))));
                let y_val = panel.sy(ty(p.y));
                let (top, height) = if y_val <= y_zero {
                    (y_val, y_zero - y_val)
                } else {
                    (y_zero, y_val - y_zero)
                };
                let _ = write!(
                    svg,
                    r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{color}" fill-opacity="0.7"/>"#,
                    fmt2(x),
                    fmt2(top),
                    fmt2(bw),
                    fmt2(height)
                );
                let (e0, e1) = (panel.sy(ty(p.y - p.err)), panel.sy(ty(p.y + p.err)));
                let cx = panel.sx(tx(p.x));
                let _ = write!(
                    svg,
                    r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#111111" stroke-width="1"/>"##,
                    fmt2(cx),
                    fmt2(e0),
                    fmt2(cx),
                    fmt2(e1)
                );
            }
        } else {
            let path: Vec<String> = pts
                .iter()
                .map(|p| format!("{},{}", fmt2(panel.sx(tx(p.x))), fmt2(panel.sy(ty(p.y)))))
                .collect();
            if path.len() > 1 {
                let _ = write!(
                    svg,
                    r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                    path.join(" ")
                );
            }
            for p in pts {
                let cx = panel.sx(tx(p.x));
                let (e0, e1) = (panel.sy(ty(p.y - p.err)), panel.sy(ty(p.y + p.err)));
                let _ = write!(
                    svg,
                    r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{color}" stroke-width="1"/>"#,
                    fmt2(cx),
                    fmt2(e0),
                    fmt2(cx),
                    fmt2(e1)
                );
                let _ = write!(
                    svg,
                    r#"<circle cx="{}" cy="{}" r="2.5" fill="{color}"/>"#,
                    fmt2(cx),
                    fmt2(panel.sy(ty(p.y)))
                );
            }
            // series legend entry
            let ly = panel.y0 + 14.0 + 13.0 * si as f64;
            let _ = write!(
                svg,
                r#"<rect x="{}" y="{}" width="10" height="3" fill="{color}"/>"#,
                fmt2(panel.x0 + panel.w - 110.0),
                fmt2(ly - 3.0)
            );
            let _ = write!(
                svg,
                r##"<text x="{}" y="{}" font-family="monospace" font-size="10" fill="#333333">{}</text>"##,
                fmt2(panel.x0 + panel.w - 95.0),
                fmt2(ly),
                key
            );
        }
    }
}

/// Render a two-panel chart (mean reward with error bars, control rate) and
/// a text summary of per-cell aggregates. Byte-deterministic in the rows.
pub fn emit_report(
    rows: &[SweepRow],
    kind: ReportKind,
    svg_path: &Path,
    summary_path: &Path,
) -> Result<()> {
    let with_metrics = rows.iter().filter(|r| r.metrics.is_some()).count();
    if with_metrics == 0 {
        return Err(Error::InvalidInput(
            "no rows with metrics to report".into(),
        ));
    }
    let first_hash = rows[0].hash_prefix().to_string();
    for row in rows {
        if row.hash_prefix() != first_hash {
            return Err(Error::InvalidInput(format!(
                "rows mix config hashes '{}' and '{}'; one report covers one config",
                first_hash,
                row.hash_prefix()
            )));
        }
    }

    let reward_series = collect_series(rows, kind, &|m| (m.mean_reward, m.se_reward));
    let control_series = collect_series(rows, kind, &|m| (m.control_rate, 0.0));
    let categories = category_labels(rows, kind);
    let bar = kind == ReportKind::AttackMode;

    let mut svg = String::with_capacity(16 * 1024);
    svg.push_str(
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="960" height="400" viewBox="0 0 960 400">"#,
    );
    svg.push_str(r##"<rect x="0" y="0" width="960" height="400" fill="#ffffff"/>"##);
    draw_panel(
        &mut svg,
        &Panel {
            x0: 70.0,
            y0: 40.0,
            w: 360.0,
            h: 280.0,
        },
        "mean episode reward",
        kind.x_label(),
        &reward_series,
        &categories,
        bar,
        None,
    );
    draw_panel(
        &mut svg,
        &Panel {
            x0: 550.0,
            y0: 40.0,
            w: 360.0,
            h: 280.0,
        },
        "backdoor control rate",
        kind.x_label(),
        &control_series,
        &categories,
        bar,
        Some((0.0, 1.0)),
    );
    svg.push_str("</svg>\n");
    fs::write(svg_path, &svg)?;

    fs::write(summary_path, text_summary(rows, kind))?;
    Ok(())
}

/// Aggregate rows that share an x value and series key: mean of cell means,
/// spread as min..max across seeds.
fn text_summary(rows: &[SweepRow], kind: ReportKind) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "report kind: {}", kind.x_label());
    let _ = writeln!(
        out,
        "config hash: {}",
        rows.first().map(|r| r.hash_prefix()).unwrap_or("-")
    );

    // group keys in deterministic first-appearance order
    let mut groups: Vec<(String, Vec<&SweepRow>)> = Vec::new();
    for row in rows {
        let key = match kind {
            ReportKind::PoisonFraction => {
                format!("{} fraction {}", row.patch_type, row.poison_fraction)
            }
            ReportKind::PatchSize => format!(
                "{} f={} size {}",
                row.patch_type, row.poison_fraction, row.patch_size
            ),
            ReportKind::PatchType => format!("type {}", row.patch_type),
            ReportKind::AttackMode => format!("mode {}", row.attack_mode),
        };
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(row),
            None => groups.push((key, vec![row])),
        }
    }

    for (key, members) in groups {
        let metrics: Vec<&SweepMetrics> =
            members.iter().filter_map(|r| r.metrics.as_ref()).collect();
        let errored = members.len() - metrics.len();
        if metrics.is_empty() {
            let _ = writeln!(out, "{key}: all {errored} cells errored");
            continue;
        }
        let n = metrics.len() as f64;
        let mean = |f: &dyn Fn(&SweepMetrics) -> f64| metrics.iter().map(|m| f(m)).sum::<f64>() / n;
        let lo = |f: &dyn Fn(&SweepMetrics) -> f64| {
            metrics.iter().map(|m| f(m)).fold(f64::INFINITY, f64::min)
        };
        let hi = |f: &dyn Fn(&SweepMetrics) -> f64| {
            metrics
                .iter()
                .map(|m| f(m))
                .fold(f64::NEG_INFINITY, f64::max)
        };
        let _ = writeln!(
            out,
            "{key}: reward {:.2} [{:.2}..{:.2}], control {:.4} [{:.4}..{:.4}], nontarget {:.4}, holdout_acc {:.4}, cells {}{}",
            mean(&|m| m.mean_reward),
            lo(&|m| m.mean_reward),
            hi(&|m| m.mean_reward),
            mean(&|m| m.control_rate),
            lo(&|m| m.control_rate),
            hi(&|m| m.control_rate),
            mean(&|m| m.control_rate_nontarget),
            mean(&|m| m.train_holdout_acc),
            metrics.len(),
            if errored > 0 {
                format!(" ({errored} errored)")
            } else {
                String::new()
            }
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_row(seed: u64, fraction: f64, metrics: bool) -> SweepRow {
        SweepRow {
            experiment_id: format!("abcd1234:fraction:{fraction}:s{seed}"),
            seed,
            obs_size: 64,
            poison_fraction: fraction,
            patch_type: "red".into(),
            patch_size: 3,
            attack_mode: "none".into(),
            budget: 0,
            entropy_threshold: 0.0,
            n_rollouts: 20,
            metrics: metrics.then_some(SweepMetrics {
                mean_reward: 900.0 + seed as f64,
                se_reward: 4.5,
                control_rate: 0.25 + fraction / 2.0,
                control_rate_nontarget: 0.2 + fraction / 2.0,
                train_holdout_acc: 0.95,
                wall_seconds: 0.0,
            }),
        }
    }

    #[test]
    fn csv_round_trips_including_error_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rows.csv");
        let rows = vec![
            sample_row(0, 0.05, true),
            sample_row(1, 0.05, false),
            sample_row(0, 0.2, true),
        ];
        write_csv(&rows, &path).unwrap();
        let back = read_csv(&path).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back[1].metrics, None);
        assert_eq!(back[0].experiment_id, rows[0].experiment_id);
        assert_eq!(back[0].metrics.unwrap().se_reward, 4.5);
        assert_eq!(back[2].poison_fraction, 0.2);
    }

    #[test]
    fn csv_rejects_bad_header_and_ragged_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rows.csv");
        std::fs::write(&path, "id,seed\n").unwrap();
        assert!(read_csv(&path).is_err());
        std::fs::write(&path, format!("{CSV_HEADER}\nonly,three,fields\n")).unwrap();
        assert!(read_csv(&path).is_err());
        // partial metric fill is ambiguous, reject
        std::fs::write(
            &path,
            format!("{CSV_HEADER}\nx:a:b:s0,0,64,0.05,red,3,none,0,0,20,1.0,,,,,\n"),
        )
        .unwrap();
        assert!(read_csv(&path).is_err());
    }

    #[test]
    fn report_is_byte_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![
            sample_row(0, 0.0, true),
            sample_row(1, 0.0, true),
            sample_row(0, 0.05, true),
            sample_row(1, 0.05, true),
            sample_row(0, 0.2, false),
        ];
        let svg1 = dir.path().join("a.svg");
        let txt1 = dir.path().join("a.txt");
        let svg2 = dir.path().join("b.svg");
        let txt2 = dir.path().join("b.txt");
        emit_report(&rows, ReportKind::PoisonFraction, &svg1, &txt1).unwrap();
        emit_report(&rows, ReportKind::PoisonFraction, &svg2, &txt2).unwrap();
        let a = std::fs::read(&svg1).unwrap();
        let b = std::fs::read(&svg2).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b);
        assert_eq!(
            std::fs::read(&txt1).unwrap(),
            std::fs::read(&txt2).unwrap()
        );
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("<svg"));
        assert!(text.contains("mean episode reward"));
        assert!(text.contains("backdoor control rate"));
        assert!(text.contains("polyline"));
    }

    #[test]
    fn report_rejects_empty_and_mixed_hashes() {
        let dir = tempfile::tempdir().unwrap();
        let svg = dir.path().join("x.svg");
        let txt = dir.path().join("x.txt");
        let only_errors = vec![sample_row(0, 0.05, false)];
        assert!(emit_report(&only_errors, ReportKind::PoisonFraction, &svg, &txt).is_err());

        let mut mixed = vec![sample_row(0, 0.05, true), sample_row(1, 0.05, true)];
        mixed[1].experiment_id = "ffff0000:fraction:0.05:s1".into();
        let err = emit_report(&mixed, ReportKind::PoisonFraction, &svg, &txt).unwrap_err();
        assert!(err.to_string().contains("mix config hashes"), "{err}");
    }

    #[test]
    fn single_cell_report_draws_a_point_with_zero_error_bar() {
        let dir = tempfile::tempdir().unwrap();
        let svg = dir.path().join("one.svg");
        let txt = dir.path().join("one.txt");
        let mut row = sample_row(0, 0.05, true);
        row.metrics.as_mut().unwrap().se_reward = 0.0;
        emit_report(&[row], ReportKind::PoisonFraction, &svg, &txt).unwrap();
        let text = std::fs::read_to_string(&svg).unwrap();
        assert!(text.contains("circle"));
        assert!(!text.contains("polyline"), "single point draws no line");
    }

    #[test]
    fn attack_mode_report_uses_bars() {
        let dir = tempfile::tempdir().unwrap();
        let svg = dir.path().join("modes.svg");
        let txt = dir.path().join("modes.txt");
        let mut rows = Vec::new();
        for (i, mode) in ["none", "random", "entropy"].iter().enumerate() {
            let mut r = sample_row(0, 0.05, true);
            r.attack_mode = mode.to_string();
            r.metrics.as_mut().unwrap().mean_reward = 900.0 - 300.0 * i as f64;
            rows.push(r);
        }
        emit_report(&rows, ReportKind::AttackMode, &svg, &txt).unwrap();
        let text = std::fs::read_to_string(&svg).unwrap();
        assert!(text.matches("<rect").count() > 3, "bars drawn");
        let summary = std::fs::read_to_string(&txt).unwrap();
        assert!(summary.contains("mode entropy"));
    }
}
