//! Minimal SVG charts: coverage curves with inter-trial bands, module
//! interest curves, and final ball position scatters.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};

use super::experiment::{ExperimentReport, TrialReport};
use super::metrics::mean_std;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 40.0;

const PALETTE: [&str; 10] =
    ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"];

/// Linear map from data space to the plot area.
#[derive(Clone, Copy, Debug)]
pub struct Frame {
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Frame {
    pub fn x(&self, v: f64) -> f64 {
        LEFT + v / self.x_max.max(1.0) * (WIDTH - LEFT - RIGHT)
    }

    pub fn y(&self, v: f64) -> f64 {
        let span = (self.y_max - self.y_min).max(1e-12);
        HEIGHT - BOTTOM - (v - self.y_min) / span * (HEIGHT - TOP - BOTTOM)
    }

    fn line(&self, ys: &[f64]) -> String {
        let mut d = String::new();
        for (i, y) in ys.iter().enumerate() {
            let cmd = if i == 0 { 'M' } else { 'L' };
            write!(d, "{cmd}{:.3},{:.3} ", self.x(i as f64), self.y(*y)).unwrap();
        }
        d.trim_end().to_string()
    }

    fn band(&self, lo: &[f64], hi: &[f64]) -> String {
        let mut d = self.line(hi);
        for (i, y) in lo.iter().enumerate().rev() {
            write!(d, " L{:.3},{:.3}", self.x(i as f64), self.y(*y)).unwrap();
        }
        d.push_str(" Z");
        d
    }
}

fn open_svg(title: &str, frame: &Frame, x_label: &str, y_label: &str) -> String {
    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="11">"#).unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="{}" y="14" text-anchor="middle" font-size="13">{}</text>"#, WIDTH / 2.0, escape(title)).unwrap();
    let (x0, y0, x1, y1) = (LEFT, HEIGHT - BOTTOM, WIDTH - RIGHT, TOP);
    writeln!(s, r#"<path class="axis" d="M{x0},{y1} L{x0},{y0} L{x1},{y0}" stroke="black" fill="none"/>"#).unwrap();
    for k in 0..=4 {
        let v = frame.y_min + (frame.y_max - frame.y_min) * k as f64 / 4.0;
        let y = frame.y(v);
        writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, LEFT - 4.0, y + 4.0, fmt_tick(v)).unwrap();
        let e = frame.x_max * k as f64 / 4.0;
        writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#, frame.x(e), y0 + 14.0, e.round()).unwrap();
    }
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, HEIGHT - 6.0, x_label).unwrap();
    writeln!(s, r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#, (y0 + y1) / 2.0, (y0 + y1) / 2.0, y_label).unwrap();
    s
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 0.1 || v == 0.0 {
        format!("{v:.2}")
    } else {
        format!("{v:.1e}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn legend(s: &mut String, labels: &[String]) {
    for (i, l) in labels.iter().enumerate() {
        let y = TOP + 12.0 + 14.0 * i as f64;
        let c = PALETTE[i % PALETTE.len()];
        writeln!(s, r#"<rect x="{}" y="{}" width="10" height="10" fill="{c}"/>"#, LEFT + 10.0, y - 9.0).unwrap();
        writeln!(s, r#"<text x="{}" y="{y}">{}</text>"#, LEFT + 24.0, escape(l)).unwrap();
    }
}

fn check_report(r: &ExperimentReport) -> Result<()> {
    if r.trials.is_empty() {
        bail!("report {}: missing series trials", r.condition);
    }
    if r.ratio_mean.is_empty() {
        bail!("report {}: missing series ratio_mean", r.condition);
    }
    if r.ratio_std.len() != r.ratio_mean.len() {
        bail!("report {}: missing series ratio_std", r.condition);
    }
    for t in &r.trials {
        if t.ratio.is_empty() {
            bail!("report {}: missing series ratio (seed {})", r.condition, t.seed);
        }
        if t.interest.len() != r.module_dims.len() {
            bail!("report {}: missing series interest (seed {})", r.condition, t.seed);
        }
    }
    Ok(())
}

/// Mean exploration ratio per condition with a ±1 std band and thin per-trial lines.
pub fn ratio_plot(reports: &[&ExperimentReport]) -> Result<String> {
    for r in reports {
        check_report(r)?;
    }
    let x_max = reports.iter().map(|r| r.ratio_mean.len()).max().unwrap_or(1).saturating_sub(1) as f64;
    let frame = Frame { x_max, y_min: 0.0, y_max: 1.0 };
    let title = if reports.len() == 1 { reports[0].condition.clone() } else { "Exploration ratio".into() };
    let mut s = open_svg(&title, &frame, "episode", "exploration ratio");
    for (i, r) in reports.iter().enumerate() {
        let c = PALETTE[i % PALETTE.len()];
        let lo: Vec<f64> = r.ratio_mean.iter().zip(&r.ratio_std).map(|(m, s)| (m - s).max(0.0)).collect();
        let hi: Vec<f64> = r.ratio_mean.iter().zip(&r.ratio_std).map(|(m, s)| (m + s).min(1.0)).collect();
        writeln!(s, r#"<path class="band" data-condition="{}" d="{}" fill="{c}" fill-opacity="0.2" stroke="none"/>"#, r.condition, frame.band(&lo, &hi)).unwrap();
        for t in &r.trials {
            writeln!(s, r#"<path class="trial" data-condition="{}" data-seed="{}" d="{}" stroke="{c}" stroke-opacity="0.35" stroke-width="0.7" fill="none"/>"#, r.condition, t.seed, frame.line(&t.ratio)).unwrap();
        }
        writeln!(s, r#"<path class="mean" data-condition="{}" d="{}" stroke="{c}" stroke-width="2" fill="none"/>"#, r.condition, frame.line(&r.ratio_mean)).unwrap();
    }
    legend(&mut s, &reports.iter().map(|r| r.condition.clone()).collect::<Vec<_>>());
    s.push_str("</svg>\n");
    Ok(s)
}

/// Trial-mean interest of every module; `None` when the condition has no modules.
pub fn interest_plot(report: &ExperimentReport) -> Result<Option<String>> {
    check_report(report)?;
    if report.module_dims.is_empty() {
        return Ok(None);
    }
    let means: Vec<Vec<f64>> = (0..report.module_dims.len())
        .map(|k| mean_std(&report.trials.iter().map(|t| t.interest[k].clone()).collect::<Vec<_>>()).0)
        .collect();
    let lo = means.iter().flatten().copied().fold(0.0f64, f64::min);
    let hi = means.iter().flatten().copied().fold(0.0f64, f64::max);
    let pad = ((hi - lo) * 0.05).max(1e-6);
    let x_max = means.iter().map(Vec::len).max().unwrap_or(1).saturating_sub(1) as f64;
    let frame = Frame { x_max, y_min: lo - pad, y_max: hi + pad };
    let mut s = open_svg(&format!("{} interest", report.condition), &frame, "episode", "interest");
    for (k, m) in means.iter().enumerate() {
        let c = PALETTE[k % PALETTE.len()];
        writeln!(s, r#"<path class="interest" data-module="{k}" d="{}" stroke="{c}" stroke-width="1.5" fill="none"/>"#, frame.line(m)).unwrap();
    }
    let labels: Vec<String> = report.module_dims.iter().enumerate().map(|(k, d)| format!("module {k} {d:?}")).collect();
    legend(&mut s, &labels);
    s.push_str("</svg>\n");
    Ok(Some(s))
}

/// Final ball positions of one trial over the unit-disk outline.
pub fn scatter_plot(condition: &str, trial: &TrialReport) -> String {
    let size = HEIGHT - TOP - BOTTOM;
    let (cx, cy) = (WIDTH / 2.0, TOP + size / 2.0);
    let scale = size / 2.0;
    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="11">"#).unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="{cx}" y="14" text-anchor="middle" font-size="13">{} seed {}: ratio {:.3}</text>"#, escape(condition), trial.seed, trial.final_ratio()).unwrap();
    writeln!(s, r#"<rect class="scene" x="{}" y="{TOP}" width="{size}" height="{size}" fill="none" stroke="gray"/>"#, cx - scale).unwrap();
    writeln!(s, r#"<circle class="reach" cx="{cx}" cy="{cy}" r="{scale}" fill="none" stroke="black" stroke-dasharray="4 3"/>"#).unwrap();
    for b in &trial.final_balls {
        writeln!(s, r#"<circle class="ball" cx="{:.2}" cy="{:.2}" r="1.5" fill="{}" fill-opacity="0.6"/>"#, cx + b[0] * scale, cy - b[1] * scale, PALETTE[0]).unwrap();
    }
    s.push_str("</svg>\n");
    s
}

fn write(path: PathBuf, body: &str, out: &mut Vec<PathBuf>) -> Result<()> {
    std::fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
    out.push(path);
    Ok(())
}

/// Writes `<condition>_ratio.svg`, `<condition>_interest.svg` (modular
/// conditions only) and `<condition>_seed<S>_scatter.svg` for every report,
/// plus `ratio_comparison.svg` when several reports are given.
pub fn emit_plots(report_paths: &[PathBuf], out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let reports = report_paths.iter().map(|p| ExperimentReport::load(p)).collect::<Result<Vec<_>>>()?;
    let mut written = Vec::new();
    for r in &reports {
        write(out_dir.join(format!("{}_ratio.svg", r.condition)), &ratio_plot(&[r])?, &mut written)?;
        if let Some(svg) = interest_plot(r)? {
            write(out_dir.join(format!("{}_interest.svg", r.condition)), &svg, &mut written)?;
        }
        for t in &r.trials {
            write(out_dir.join(format!("{}_seed{}_scatter.svg", r.condition, t.seed)), &scatter_plot(&r.condition, t), &mut written)?;
        }
    }
    if reports.len() > 1 {
        let refs: Vec<&ExperimentReport> = reports.iter().collect();
        write(out_dir.join("ratio_comparison.svg"), &ratio_plot(&refs)?, &mut written)?;
    }
    Ok(written)
}
