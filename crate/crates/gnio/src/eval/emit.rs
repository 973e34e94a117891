//! Run artifacts: metric JSON, per-trajectory pose CSVs, top-down SVG overlay.
//!
//! Everything written here is deterministic for a given input: fixed float
//! formatting, a fixed color palette, and no timestamps or environment state
//! in the output. Re-running an evaluation must produce byte-identical files
//! so artifact diffs only show real changes.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{EvalError, MetricReport, Result, Trajectory};
use crate::data::write_pose_csv;

/// Longest polyline emitted into the SVG; denser trajectories are thinned
/// (endpoints always kept) purely to keep file sizes reasonable.
const MAX_POLYLINE_POINTS: usize = 2000;

/// Stroke colors by trajectory index; wraps around if there are more.
const PALETTE: [&str; 6] = [
    "#555555", "#c0392b", "#2471a3", "#b7950b", "#7d3c98", "#148f77",
];

fn file_error(path: &Path) -> impl FnOnce(std::io::Error) -> EvalError + '_ {
    move |e| EvalError::File {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Write a run's artifacts into `dir` (created if missing) and return the
/// paths written, in order.
///
/// Always writes `metrics.json`. For each labeled trajectory a pose CSV with
/// the same schema as the synthetic ground-truth files is written, plus one
/// shared `trajectories.svg` overlay; with an empty trajectory list only the
/// JSON appears. Labels are slugified into file names and deduplicated, so
/// callers can use human-readable names like "ground truth".
pub fn emit_outputs(
    report: &MetricReport,
    trajectories: &[(String, Trajectory)],
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    report.validate()?;
    fs::create_dir_all(dir).map_err(file_error(dir))?;
    let mut written = Vec::new();

    let json_path = dir.join("metrics.json");
    let mut body = serde_json::to_string_pretty(report)
        .map_err(|e| EvalError::Invalid(format!("metrics serialization: {e}")))?;
    body.push('\n');
    fs::write(&json_path, body).map_err(file_error(&json_path))?;
    written.push(json_path);

    let mut used: HashMap<String, usize> = HashMap::new();
    for (label, traj) in trajectories {
        let mut name = slug(label);
        let count = used.entry(name.clone()).or_insert(0);
        *count += 1;
        if *count > 1 {
            name = format!("{name}_{count}");
        }
        let csv_path = dir.join(format!("{name}.csv"));
        write_pose_csv(&csv_path, traj.samples()).map_err(|e| EvalError::File {
            path: csv_path.clone(),
            message: e.to_string(),
        })?;
        written.push(csv_path);
    }

    if !trajectories.is_empty() {
        let svg_path = dir.join("trajectories.svg");
        fs::write(&svg_path, render_svg(trajectories)).map_err(file_error(&svg_path))?;
        written.push(svg_path);
    }
    Ok(written)
}

/// Lowercased label with every non-alphanumeric run collapsed to one `_`.
fn slug(label: &str) -> String {
    let mut out = String::new();
    let mut gap = false;
    for c in label.chars() {
        if c.is_ascii_alphanumeric() {
            if gap && !out.is_empty() {
                out.push('_');
            }
            gap = false;
            out.push(c.to_ascii_lowercase());
        } else {
            gap = true;
        }
    }
    if out.is_empty() {
        "trajectory".into()
    } else {
        out
    }
}

/// Largest "nice" length (1, 2, or 5 times a power of ten) not above target.
fn nice_length(target: f64) -> f64 {
    let mag = 10f64.powf(target.log10().floor());
    for m in [5.0, 2.0, 1.0] {
        if m * mag <= target * (1.0 + 1e-12) {
            return m * mag;
        }
    }
    mag
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Top-down (x east, y north) overlay of all trajectories.
///
/// User units are centimeters (world meters scaled by 100) with the SVG y
/// axis flipped so north points up. Includes a legend and a scale bar.
fn render_svg(trajectories: &[(String, Trajectory)]) -> String {
    let mut min_x = f64::INFINITY;
    let mut max_x = f64::NEG_INFINITY;
    let mut min_y = f64::INFINITY;
    let mut max_y = f64::NEG_INFINITY;
    for (_, traj) in trajectories {
        for p in traj.samples() {
            min_x = min_x.min(p.position.x);
            max_x = max_x.max(p.position.x);
            min_y = min_y.min(p.position.y);
            max_y = max_y.max(p.position.y);
        }
    }
    // Extent in meters, floored so degenerate (e.g. stationary) trajectories
    // still render at a sensible zoom.
    let ext = (max_x - min_x).max(max_y - min_y).max(1.0);
    let fs = ext * 100.0 / 30.0; // font size, cm
    let sw = ext * 100.0 / 250.0; // stroke width, cm
    let pad = ext * 100.0 * 0.08;
    let legend_h = fs * 1.4 * trajectories.len() as f64 + fs;

    let u0 = min_x * 100.0 - pad;
    let u1 = max_x * 100.0 + pad;
    // SVG y grows downward, so world y maps to -y and the top edge of the
    // image corresponds to max_y.
    let v0 = -max_y * 100.0 - pad - legend_h;
    let v1 = -min_y * 100.0 + pad + fs * 3.0;
    let (w, h) = (u1 - u0, v1 - v0);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"{u0:.1} {v0:.1} {w:.1} {h:.1}\" \
         width=\"900\" height=\"{:.0}\" font-family=\"sans-serif\">",
        900.0 * h / w
    );
    let _ = writeln!(
        svg,
        "  <rect x=\"{u0:.1}\" y=\"{v0:.1}\" width=\"{w:.1}\" height=\"{h:.1}\" fill=\"white\"/>"
    );

    for (i, (label, traj)) in trajectories.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let n = traj.len();
        let stride = if n > MAX_POLYLINE_POINTS {
            (n - 1).div_ceil(MAX_POLYLINE_POINTS - 1)
        } else {
            1
        };
        let mut points = String::new();
        let mut last_emitted = 0;
        for k in (0..n).step_by(stride) {
            let p = traj[k].position;
            if !points.is_empty() {
                points.push(' ');
            }
            let _ = write!(points, "{:.1},{:.1}", p.x * 100.0, -p.y * 100.0);
            last_emitted = k;
        }
        if last_emitted != n - 1 {
            let p = traj[n - 1].position;
            let _ = write!(points, " {:.1},{:.1}", p.x * 100.0, -p.y * 100.0);
        }
        let _ = writeln!(
            svg,
            "  <polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"{sw:.1}\" points=\"{points}\"/>"
        );

        // Legend entry: swatch plus label, stacked at the top left.
        let ly = v0 + fs * 1.4 * (i as f64 + 1.0);
        let _ = writeln!(
            svg,
            "  <line x1=\"{:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" \
             stroke=\"{color}\" stroke-width=\"{sw:.1}\"/>",
            u0 + fs,
            u0 + 3.5 * fs
        );
        let _ = writeln!(
            svg,
            "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"{fs:.1}\">{}</text>",
            u0 + 4.0 * fs,
            ly + 0.35 * fs,
            xml_escape(label)
        );
    }

    // Scale bar along the bottom edge.
    let bar_m = nice_length(ext * 0.25);
    let bar_cm = bar_m * 100.0;
    let by = v1 - fs;
    let _ = writeln!(
        svg,
        "  <line x1=\"{:.1}\" y1=\"{by:.1}\" x2=\"{:.1}\" y2=\"{by:.1}\" \
         stroke=\"#000000\" stroke-width=\"{sw:.1}\"/>",
        u0 + fs,
        u0 + fs + bar_cm
    );
    let _ = writeln!(
        svg,
        "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"{fs:.1}\" text-anchor=\"middle\">{} m</text>",
        u0 + fs + bar_cm / 2.0,
        by - 0.5 * fs,
        bar_m
    );
    svg.push_str("</svg>\n");
    svg
}
