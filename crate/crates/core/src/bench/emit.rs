//! Deterministic artifact emission.
//!
//! All output is serialized in canonical record order so a sweep re-run with
//! a different worker count yields byte-identical files. Per-trial records
//! print floats in shortest-round-trip form, making parse → re-emit exact;
//! aggregate summaries use fixed six-decimal precision for readability.

use super::{summarize, CellSummary, Task, TrialRecord, TrialSpec};
use crate::retarget::RetargetMode;

use anyhow::{bail, Context};
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

pub const RECORDS_HEADER: &str = "task,mode,shift_m,lag_ms,seed_index,trial_seed,success,picked,\
aborted,abort_reason,replans,guard_rejects,fresh_accepts,pf_reseeded,retarget_latency_s,\
ee_travel_m,final_goal_dist_m,min_goal_dist_m,final_xy_err_m,ticks";

pub const SUMMARY_HEADER: &str = "task,mode,shift_m,lag_ms,trials,success_rate,abort_rate,\
picked_rate,mean_replans,mean_guard_rejects,mean_latency_s,mean_travel_m,mean_final_dist_m,\
mean_min_dist_m,mean_xy_err_m,mean_ticks";

fn f6(x: f64) -> String {
    format!("{x:.6}")
}

/// One row per trial, canonical order assumed (see [`super::sort_records`]).
pub fn records_csv(records: &[TrialRecord]) -> String {
    let mut out = String::with_capacity(64 + records.len() * 128);
    out.push_str(RECORDS_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.spec.task,
            r.spec.mode,
            r.spec.shift_r,
            r.spec.lag_ms,
            r.spec.seed_index,
            r.spec.trial_seed,
            r.success as u8,
            r.picked as u8,
            r.aborted.is_some() as u8,
            r.aborted.map(|a| a.as_str()).unwrap_or(""),
            r.replans,
            r.guard_rejects,
            r.fresh_accepts,
            r.pf_reseeded as u8,
            r.retarget_latency_s.map(|v| v.to_string()).unwrap_or_default(),
            r.ee_travel_m,
            r.final_goal_dist_m,
            r.min_goal_dist_m,
            r.final_xy_err_m,
            r.ticks,
        );
    }
    out
}

/// Parse a records CSV produced by [`records_csv`] (traces are not stored).
pub fn parse_records_csv(text: &str) -> anyhow::Result<Vec<TrialRecord>> {
    let mut lines = text.lines();
    let header = lines.next().context("empty records file")?;
    if header != RECORDS_HEADER {
        bail!("unrecognized records header: {header}");
    }
    let mut out = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 20 {
            bail!("line {}: expected 20 columns, got {}", idx + 2, cols.len());
        }
        let ctx = |c: usize| format!("line {}, column {}", idx + 2, c + 1);
        let spec = TrialSpec {
            task: cols[0].parse::<Task>().map_err(anyhow::Error::msg).with_context(|| ctx(0))?,
            mode: cols[1]
                .parse::<RetargetMode>()
                .map_err(anyhow::Error::msg)
                .with_context(|| ctx(1))?,
            shift_r: cols[2].parse().with_context(|| ctx(2))?,
            lag_ms: cols[3].parse().with_context(|| ctx(3))?,
            seed_index: cols[4].parse().with_context(|| ctx(4))?,
            trial_seed: cols[5].parse().with_context(|| ctx(5))?,
        };
        let aborted = match (cols[8], cols[9]) {
            ("0", _) => None,
            ("1", "timeout") => Some(super::AbortReason::Timeout),
            ("1", "stalled") => Some(super::AbortReason::Stalled),
            ("1", "panicked") => Some(super::AbortReason::Panicked),
            (a, r) => bail!("line {}: bad abort fields '{a}'/'{r}'", idx + 2),
        };
        out.push(TrialRecord {
            spec,
            success: cols[6] == "1",
            picked: cols[7] == "1",
            aborted,
            replans: cols[10].parse().with_context(|| ctx(10))?,
            guard_rejects: cols[11].parse().with_context(|| ctx(11))?,
            fresh_accepts: cols[12].parse().with_context(|| ctx(12))?,
            pf_reseeded: cols[13] == "1",
            retarget_latency_s: if cols[14].is_empty() {
                None
            } else {
                Some(cols[14].parse().with_context(|| ctx(14))?)
            },
            ee_travel_m: cols[15].parse().with_context(|| ctx(15))?,
            final_goal_dist_m: cols[16].parse().with_context(|| ctx(16))?,
            min_goal_dist_m: cols[17].parse().with_context(|| ctx(17))?,
            final_xy_err_m: cols[18].parse().with_context(|| ctx(18))?,
            ticks: cols[19].parse().with_context(|| ctx(19))?,
            trace: Vec::new(),
        });
    }
    Ok(out)
}

/// One row per (task, mode, shift, lag) cell.
pub fn summary_csv(cells: &[CellSummary]) -> String {
    let mut out = String::with_capacity(64 + cells.len() * 160);
    out.push_str(SUMMARY_HEADER);
    out.push('\n');
    for c in cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            c.task,
            c.mode,
            f6(c.shift_r),
            c.lag_ms,
            c.trials,
            f6(c.success_rate),
            f6(c.abort_rate),
            f6(c.picked_rate),
            f6(c.mean_replans),
            f6(c.mean_guard_rejects),
            f6(c.mean_latency_s),
            f6(c.mean_travel_m),
            f6(c.mean_final_dist_m),
            f6(c.mean_min_dist_m),
            f6(c.mean_xy_err_m),
            f6(c.mean_ticks),
        );
    }
    out
}

/// Success-rate color, anchored to the absolute [0, 1] scale (never
/// normalized per panel): 0 → deep red, 0.5 → pale yellow, 1 → deep green.
fn rate_color(rate: f64) -> String {
    fn lerp(a: (f64, f64, f64), b: (f64, f64, f64), t: f64) -> (f64, f64, f64) {
        (
            a.0 + (b.0 - a.0) * t,
            a.1 + (b.1 - a.1) * t,
            a.2 + (b.2 - a.2) * t,
        )
    }
    let r = rate.clamp(0.0, 1.0);
    let red = (178.0, 24.0, 43.0);
    let yellow = (255.0, 255.0, 191.0);
    let green = (26.0, 152.0, 80.0);
    let (cr, cg, cb) = if r < 0.5 {
        lerp(red, yellow, r * 2.0)
    } else {
        lerp(yellow, green, (r - 0.5) * 2.0)
    };
    format!("#{:02x}{:02x}{:02x}", cr.round() as u8, cg.round() as u8, cb.round() as u8)
}

/// Render one task's success-rate heatmaps: one shift × lag panel per mode,
/// shared absolute color scale.
pub fn heatmap_svg(cells: &[CellSummary], task: Task) -> String {
    let cells: Vec<&CellSummary> = cells.iter().filter(|c| c.task == task).collect();
    let mut modes: Vec<RetargetMode> = Vec::new();
    let mut shifts: Vec<u64> = Vec::new();
    let mut lags: Vec<u64> = Vec::new();
    for c in &cells {
        if !modes.contains(&c.mode) {
            modes.push(c.mode);
        }
        let mm = super::shift_mm(c.shift_r);
        if !shifts.contains(&mm) {
            shifts.push(mm);
        }
        if !lags.contains(&c.lag_ms) {
            lags.push(c.lag_ms);
        }
    }
    modes.sort_by_key(|m| super::mode_index(*m));
    shifts.sort_unstable();
    lags.sort_unstable();

    let cell_w = 64.0;
    let cell_h = 40.0;
    let left = 86.0;
    let top = 56.0;
    let gap = 28.0;
    let panel_w = lags.len() as f64 * cell_w;
    let panel_h = shifts.len() as f64 * cell_h;
    let width = left + modes.len() as f64 * (panel_w + gap);
    let height = top + panel_h + 54.0;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="monospace" font-size="12">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect width="{width:.0}" height="{height:.0}" fill="white"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{left}" y="20" font-size="14">{task}: success rate over shift radius × perception lag</text>"#
    );
    // Row labels (shift radius).
    for (row, mm) in shifts.iter().enumerate() {
        let y = top + row as f64 * cell_h + cell_h * 0.5 + 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{x}" y="{y:.1}" text-anchor="end">{label} cm</text>"#,
            x = left - 8.0,
            label = *mm as f64 / 10.0,
        );
    }
    for (p, mode) in modes.iter().enumerate() {
        let x0 = left + p as f64 * (panel_w + gap);
        let _ = writeln!(
            svg,
            r#"<text x="{x:.1}" y="{y}" text-anchor="middle">{mode}</text>"#,
            x = x0 + panel_w * 0.5,
            y = top - 10.0,
        );
        for (row, mm) in shifts.iter().enumerate() {
            for (col, lag) in lags.iter().enumerate() {
                let rate = cells
                    .iter()
                    .find(|c| {
                        c.mode == *mode && super::shift_mm(c.shift_r) == *mm && c.lag_ms == *lag
                    })
                    .map(|c| c.success_rate);
                let x = x0 + col as f64 * cell_w;
                let y = top + row as f64 * cell_h;
                match rate {
                    Some(rate) => {
                        let _ = writeln!(
                            svg,
                            r##"<rect x="{x:.1}" y="{y:.1}" width="{cell_w}" height="{cell_h}" fill="{fill}" stroke="#444" stroke-width="0.5"/>"##,
                            fill = rate_color(rate),
                        );
                        let _ = writeln!(
                            svg,
                            r#"<text x="{cx:.1}" y="{cy:.1}" text-anchor="middle" fill="{ink}">{rate:.2}</text>"#,
                            cx = x + cell_w * 0.5,
                            cy = y + cell_h * 0.5 + 4.0,
                            ink = if rate < 0.3 { "white" } else { "black" },
                        );
                    }
                    None => {
                        let _ = writeln!(
                            svg,
                            r##"<rect x="{x:.1}" y="{y:.1}" width="{cell_w}" height="{cell_h}" fill="#eee" stroke="#444" stroke-width="0.5"/>"##,
                        );
                    }
                }
            }
        }
        // Column labels (lag).
        for (col, lag) in lags.iter().enumerate() {
            let _ = writeln!(
                svg,
                r#"<text x="{x:.1}" y="{y:.1}" text-anchor="middle">{lag} ms</text>"#,
                x = x0 + col as f64 * cell_w + cell_w * 0.5,
                y = top + panel_h + 18.0,
            );
        }
    }
    let _ = writeln!(
        svg,
        r##"<text x="{left}" y="{y:.1}" font-size="11" fill="#555">color scale anchored to [0, 1]</text>"##,
        y = height - 12.0,
    );
    svg.push_str("</svg>\n");
    svg
}

/// Human-oriented digest: per task × mode grand means, then per-cell lines.
pub fn text_report(cells: &[CellSummary]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "shift × lag benchmark report");
    let _ = writeln!(out, "============================");
    for task in Task::ALL {
        let task_cells: Vec<&CellSummary> = cells.iter().filter(|c| c.task == task).collect();
        if task_cells.is_empty() {
            continue;
        }
        let _ = writeln!(out, "\n[{task}]");
        let mut modes: Vec<RetargetMode> = Vec::new();
        for c in &task_cells {
            if !modes.contains(&c.mode) {
                modes.push(c.mode);
            }
        }
        modes.sort_by_key(|m| super::mode_index(*m));
        for mode in modes {
            let mc: Vec<&&CellSummary> = task_cells.iter().filter(|c| c.mode == mode).collect();
            let n = mc.len() as f64;
            let gmean = |f: &dyn Fn(&CellSummary) -> f64| mc.iter().map(|c| f(c)).sum::<f64>() / n;
            let _ = writeln!(
                out,
                "  {mode:<8} success {s:.3}  abort {a:.3}  replans {r:.2}  latency {l:.3}s  travel {t:.3}m",
                s = gmean(&|c| c.success_rate),
                a = gmean(&|c| c.abort_rate),
                r = gmean(&|c| c.mean_replans),
                l = gmean(&|c| c.mean_latency_s),
                t = gmean(&|c| c.mean_travel_m),
            );
        }
        for c in &task_cells {
            let _ = writeln!(
                out,
                "    {mode:<8} r={r:>5.2}cm L={l:>3}ms  success {s:.2} (n={n})  final {f:.4}m  latency {lat:.3}s",
                mode = c.mode,
                r = c.shift_r * 100.0,
                l = c.lag_ms,
                s = c.success_rate,
                n = c.trials,
                f = c.mean_final_dist_m,
                lat = c.mean_latency_s,
            );
        }
    }
    out
}

/// Write the full artifact set for a record batch into `dir`:
/// `records.csv`, `summary.csv`, `report.txt`, and one `heatmap_<task>.svg`
/// per task present. Returns the written paths.
pub fn write_outputs(dir: &Path, records: &[TrialRecord]) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let cells = summarize(records);
    let mut written = Vec::new();
    let mut put = |name: String, contents: String| -> io::Result<()> {
        let path = dir.join(name);
        fs::write(&path, contents)?;
        written.push(path);
        Ok(())
    };
    put("records.csv".into(), records_csv(records))?;
    put("summary.csv".into(), summary_csv(&cells))?;
    put("report.txt".into(), text_report(&cells))?;
    for task in Task::ALL {
        if cells.iter().any(|c| c.task == task) {
            put(format!("heatmap_{task}.svg"), heatmap_svg(&cells, task))?;
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::AbortReason;

    fn record(task: Task, mode: RetargetMode, shift: f64, lag: u64, seed: u32, ok: bool) -> TrialRecord {
        TrialRecord {
            spec: TrialSpec {
                task,
                mode,
                shift_r: shift,
                lag_ms: lag,
                seed_index: seed,
                trial_seed: crate::bench::trial_seed(5, task, mode, shift, lag, seed),
            },
            success: ok,
            picked: ok,
            aborted: (!ok).then_some(AbortReason::Timeout),
            replans: 1,
            guard_rejects: 0,
            fresh_accepts: 2,
            pf_reseeded: false,
            retarget_latency_s: Some(0.21),
            ee_travel_m: 0.734,
            final_goal_dist_m: 0.012,
            min_goal_dist_m: 0.003,
            final_xy_err_m: 0.012,
            ticks: 512,
            trace: Vec::new(),
        }
    }

    #[test]
    fn records_csv_round_trips() {
        let records = vec![
            record(Task::Push, RetargetMode::None, 0.06, 200, 0, true),
            record(Task::Peg, RetargetMode::UarPf, 0.10, 400, 3, false),
        ];
        let text = records_csv(&records);
        let back = parse_records_csv(&text).unwrap();
        // Shortest-round-trip float formatting makes the parse exact.
        assert_eq!(back, records);
        assert_eq!(back[1].aborted, Some(AbortReason::Timeout));
        // Re-emission is byte-stable.
        assert_eq!(records_csv(&back), text);
    }

    #[test]
    fn summary_aggregates_per_cell() {
        let records = vec![
            record(Task::Push, RetargetMode::None, 0.06, 200, 0, true),
            record(Task::Push, RetargetMode::None, 0.06, 200, 1, false),
            record(Task::Push, RetargetMode::Uar, 0.06, 200, 0, true),
        ];
        let cells = summarize(&records);
        assert_eq!(cells.len(), 2);
        assert_eq!(cells[0].trials, 2);
        assert!((cells[0].success_rate - 0.5).abs() < 1e-12);
        assert!((cells[0].abort_rate - 0.5).abs() < 1e-12);
        assert_eq!(cells[1].trials, 1);
        assert!((cells[1].success_rate - 1.0).abs() < 1e-12);
    }

    #[test]
    fn heatmap_scale_is_anchored_not_normalized() {
        assert_eq!(rate_color(0.0), "#b2182b");
        assert_eq!(rate_color(1.0), "#1a9850");
        assert_eq!(rate_color(0.5), "#ffffbf");
        // A panel whose rates span [0.4, 0.6] must not stretch to the ends.
        assert_ne!(rate_color(0.4), "#b2182b");
        assert_ne!(rate_color(0.6), "#1a9850");
    }

    #[test]
    fn heatmap_svg_draws_every_cell_once() {
        let records = vec![
            record(Task::Push, RetargetMode::None, 0.0, 0, 0, true),
            record(Task::Push, RetargetMode::None, 0.06, 200, 0, false),
            record(Task::Push, RetargetMode::Nearest, 0.0, 0, 0, true),
            record(Task::Push, RetargetMode::Nearest, 0.06, 200, 0, true),
        ];
        let cells = summarize(&records);
        let svg = heatmap_svg(&cells, Task::Push);
        // 2 modes × 2 shifts × 2 lags = 8 cells, all with data.
        assert_eq!(svg.matches("<rect x=").count(), 8);
        assert!(svg.contains("none"));
        assert!(svg.contains("nearest"));
    }
}
