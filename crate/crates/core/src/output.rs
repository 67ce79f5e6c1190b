//! Result files: `results.csv`, `timings.csv`, `rmse_vs_inr.svg` and the
//! field heatmap.
//!
//! Numbers in `results.csv` use a fixed format so that identical sweeps
//! produce identical bytes. Wall-clock columns are left empty unless the
//! sweep asked for timing, since they vary between runs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::field::Position;
use crate::harness::{CrbRow, SweepResult};
use crate::sim::ScenarioConfig;

/// Label, points, colour, dashed.
type Series<'a> = (String, Vec<(f64, f64)>, &'a str, bool);

pub const RESULTS_HEADER: &str = "estimator,inr_db,dim,rmse_m,crb_rmse_m,converged_frac,mean_ms";

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.6e}")
    } else {
        "nan".into()
    }
}

pub fn results_csv(r: &SweepResult) -> String {
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for c in &r.cells {
        let crb = r.crb_at(c.inr_db);
        for d in 0..r.dim {
            let bound = crb.map_or(f64::NAN, |b| b.rmse_bound[d]);
            let ms = if r.record_timing { format!("{:.3}", c.mean_ms) } else { String::new() };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:.4},{}",
                c.estimator,
                c.inr_db,
                d + 1,
                num(c.rmse[d]),
                num(bound),
                c.converged_frac(),
                ms
            );
        }
    }
    out
}

pub fn timings_csv(r: &SweepResult) -> String {
    let mut out = String::from("estimator,inr_db,mean_ms,n_estimates\n");
    for c in &r.cells {
        let _ = writeln!(out, "{},{},{:.3},{}", c.estimator, c.inr_db, c.mean_ms, c.n_estimates);
    }
    out
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

/// One panel per dimension; RMSE on a log axis against INR, CRB dashed.
pub fn rmse_svg(r: &SweepResult) -> String {
    let (pw, ph, ml, mr, mt, mb) = (420.0, 320.0, 60.0, 20.0, 30.0, 45.0);
    let width = r.dim as f64 * (pw + ml + mr);
    let legend_h = 18.0 * (r.estimators.len() + 1) as f64 + 10.0;
    let height = ph + mt + mb + legend_h;

    let mut vals: Vec<f64> = r.cells.iter().flat_map(|c| c.rmse.iter().copied()).collect();
    vals.extend(r.crb.iter().flat_map(|c| c.rmse_bound.iter().copied()));
    vals.retain(|v| v.is_finite() && *v > 0.0);
    let (lo, hi) = if vals.is_empty() {
        (-2.0, 2.0)
    } else {
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min).log10().floor();
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max).log10().ceil();
        (lo, if hi > lo { hi } else { lo + 1.0 })
    };
    let x0 = r.inr_grid_db.first().copied().unwrap_or(0.0);
    let x1 = r.inr_grid_db.last().copied().unwrap_or(1.0);
    let xspan = if x1 > x0 { x1 - x0 } else { 1.0 };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for d in 0..r.dim {
        let ox = d as f64 * (pw + ml + mr) + ml;
        let px = |inr: f64| ox + (inr - x0) / xspan * pw;
        let py = |v: f64| mt + (hi - v.log10()) / (hi - lo) * ph;
        let _ = writeln!(s, r#"<rect x="{ox}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">RMSE, coordinate {}</text>"#,
            ox + pw / 2.0,
            mt - 10.0,
            d + 1
        );
        let mut e = lo;
        while e <= hi + 1e-9 {
            let y = py(10f64.powf(e));
            let _ = writeln!(
                s,
                r##"<line x1="{ox}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#ddd"/><text x="{}" y="{:.2}" text-anchor="end">1e{}</text>"##,
                ox + pw,
                ox - 4.0,
                y + 4.0,
                e as i64
            );
            e += 1.0;
        }
        for &inr in &r.inr_grid_db {
            let x = px(inr);
            let _ = writeln!(s, r#"<text x="{x:.2}" y="{}" text-anchor="middle">{inr}</text>"#, mt + ph + 15.0);
        }
        let _ =
            writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">INR (dB)</text>"#, ox + pw / 2.0, mt + ph + 32.0);
        let mut series: Vec<Series> = r
            .estimators
            .iter()
            .enumerate()
            .map(|(k, name)| {
                let pts = r.cells.iter().filter(|c| &c.estimator == name).map(|c| (c.inr_db, c.rmse[d])).collect();
                (name.clone(), pts, PALETTE[k % PALETTE.len()], false)
            })
            .collect();
        series.push(("CRB".into(), r.crb.iter().map(|c| (c.inr_db, c.rmse_bound[d])).collect(), "black", true));
        for (k, (name, pts, color, dashed)) in series.iter().enumerate() {
            let path: Vec<String> = pts
                .iter()
                .filter(|(_, v)| v.is_finite() && *v > 0.0)
                .map(|&(x, v)| format!("{:.2},{:.2}", px(x), py(v)))
                .collect();
            let dash = if *dashed { r#" stroke-dasharray="6,4""# } else { "" };
            if !path.is_empty() {
                let _ = writeln!(
                    s,
                    r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
                    path.join(" ")
                );
            }
            if d == 0 {
                let ly = mt + ph + mb + 14.0 + 18.0 * k as f64;
                let _ = writeln!(
                    s,
                    r#"<line x1="{ml}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"{dash}/><text x="{}" y="{}">{name}</text>"#,
                    ml + 24.0,
                    ml + 30.0,
                    ly + 4.0
                );
            }
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `results.csv`, `rmse_vs_inr.svg` and, with timing on, `timings.csv`.
pub fn emit_outputs(r: &SweepResult, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: &str, body: String| -> Result<()> {
        let p = dir.join(name);
        fs::write(&p, body)?;
        written.push(p);
        Ok(())
    };
    put("results.csv", results_csv(r))?;
    put("rmse_vs_inr.svg", rmse_svg(r))?;
    if r.record_timing {
        put("timings.csv", timings_csv(r))?;
    }
    Ok(written)
}

/// Grid values in row-major order, y rising with the row index.
pub fn field_csv(cfg: &ScenarioConfig, nx: usize, ny: usize, values: &[f64]) -> String {
    let mut out = String::from("x,y,rss_dbw\n");
    let (min, max) = (&cfg.area.min, &cfg.area.max);
    for j in 0..ny {
        for i in 0..nx {
            let x = grid_coord(min[0], max[0], i, nx);
            let y = grid_coord(min[1], max[1], j, ny);
            let _ = writeln!(out, "{x},{y},{}", num(values[j * nx + i]));
        }
    }
    out
}

pub(crate) fn grid_coord(lo: f64, hi: f64, i: usize, n: usize) -> f64 {
    if n == 1 {
        0.5 * (lo + hi)
    } else {
        lo + (hi - lo) * i as f64 / (n - 1) as f64
    }
}

/// Heatmap of a field grid with the jammer (circle) and `marks` (dots)
/// drawn on top. Cells without a value (building interiors) are grey.
pub fn field_svg(cfg: &ScenarioConfig, nx: usize, ny: usize, values: &[f64], marks: &[Position]) -> String {
    let cell = (600.0 / nx.max(ny) as f64).max(1.0);
    let (w, h) = (cell * nx as f64, cell * ny as f64);
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let vmax = finite.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    // Clip the colour range to 80 dB below the peak.
    let vmin = finite.iter().cloned().fold(f64::INFINITY, f64::min).max(vmax - 80.0);
    let span = if vmax > vmin { vmax - vmin } else { 1.0 };
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{}" font-family="sans-serif" font-size="11">"#,
        h + 24.0
    );
    for j in 0..ny {
        for i in 0..nx {
            let v = values[j * nx + i];
            let (r, g, b) = if v.is_finite() { ramp(((v - vmin) / span).clamp(0.0, 1.0)) } else { (128, 128, 128) };
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="rgb({r},{g},{b})"/>"#,
                i as f64 * cell,
                (ny - 1 - j) as f64 * cell,
                cell + 0.05,
                cell + 0.05
            );
        }
    }
    let (min, max) = (&cfg.area.min, &cfg.area.max);
    let to_px = |p: &Position| ((p.x() - min[0]) / (max[0] - min[0]) * w, h - (p.y() - min[1]) / (max[1] - min[1]) * h);
    for m in marks {
        let (mx, my) = to_px(m);
        let _ = writeln!(s, r#"<circle cx="{mx:.2}" cy="{my:.2}" r="2" fill="red"/>"#);
    }
    let (jx, jy) = to_px(&cfg.jammer.theta);
    let _ = writeln!(s, r#"<circle cx="{jx:.2}" cy="{jy:.2}" r="5" fill="none" stroke="white" stroke-width="2"/>"#);
    let _ = writeln!(s, r#"<text x="4" y="{}">RSS {:.1} to {:.1} dBW</text>"#, h + 16.0, vmin, vmax);
    s.push_str("</svg>\n");
    s
}

fn ramp(t: f64) -> (u8, u8, u8) {
    // Dark blue through teal to yellow.
    let stops = [(0.0, [20.0, 20.0, 80.0]), (0.5, [30.0, 150.0, 140.0]), (1.0, [250.0, 230.0, 60.0])];
    let (a, b) = if t <= 0.5 { (stops[0], stops[1]) } else { (stops[1], stops[2]) };
    let u = (t - a.0) / (b.0 - a.0);
    let c = |k: usize| (a.1[k] + u * (b.1[k] - a.1[k])).round() as u8;
    (c(0), c(1), c(2))
}

/// Text table of the realization-averaged bound.
pub fn crb_table(rows: &[CrbRow]) -> String {
    let mut out = String::from("inr_db");
    if let Some(r) = rows.first() {
        for d in 0..r.rmse_bound.len() {
            let _ = write!(out, "\tcrb_rmse_m[{}]", d + 1);
        }
    }
    out.push_str("\tn_valid\n");
    for r in rows {
        let _ = write!(out, "{}", r.inr_db);
        for v in &r.rmse_bound {
            let _ = write!(out, "\t{}", num(*v));
        }
        let _ = writeln!(out, "\t{}", r.n_valid);
    }
    out
}
