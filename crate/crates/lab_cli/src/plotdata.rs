//! Gnuplot-ready time series: one CSV per quantity, schema in a leading comment line.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use toric_lab::flow::FlowTrajectory;
use toric_lab::functionals::{g_alpha, FunctionalLedger};
use toric_lab::geodesics::d_p;
use toric_lab::ray::{GeodesicRay, RayReport};

use crate::LabResult;

/// Columns and rows of one time series.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Series {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    /// Two-column series `(t, q)`.
    pub fn pairs(name: &str, column: &str, t: &[f64], q: &[f64]) -> Self {
        let mut s = Self::new(name, &["t", column]);
        s.rows = t.iter().zip(q).map(|(a, b)| vec![*a, *b]).collect();
        s
    }

    /// Comment header, then comma-separated rows. Floats use the shortest round-trip form.
    pub fn render(&self) -> String {
        let mut out = format!("# {}\n# columns: {}\n", self.name, self.columns.join(","));
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|x| format!("{x:e}")).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }
}

/// Writes `<dir>/<name>.csv` per series; returns the paths in order.
pub fn emit_plotdata(dir: &Path, series: &[Series]) -> LabResult<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    for s in series {
        let p = dir.join(format!("{}.csv", s.name));
        fs::write(&p, s.render())?;
        paths.push(p);
    }
    Ok(paths)
}

fn ledger_series(prefix: &str, t: &[f64], ledgers: &[FunctionalLedger]) -> Vec<Series> {
    let col = |f: fn(&FunctionalLedger) -> f64| ledgers.iter().map(f).collect::<Vec<f64>>();
    vec![
        Series::pairs(&format!("{prefix}F"), "F", t, &col(|l| l.ding_f)),
        Series::pairs(&format!("{prefix}AM"), "AM", t, &col(|l| l.am)),
        Series::pairs(&format!("{prefix}M"), "M", t, &col(|l| l.k_energy)),
        Series::pairs(&format!("{prefix}H"), "H", t, &col(|l| l.entropy)),
        Series::pairs(&format!("{prefix}sup"), "sup", t, &col(|l| l.sup)),
        Series::pairs(&format!("{prefix}inf"), "inf", t, &col(|l| l.inf)),
    ]
}

/// Flow series of `r̃_t`; `d_p` and `sup`/`inf` distances are taken from the AM-normalized `r_0`.
pub fn flow_series(traj: &FlowTrajectory, alphas: &[f64], ps: &[f64]) -> LabResult<Vec<Series>> {
    let t = traj.times();
    let ledgers = traj.ledgers()?;
    let mut out = ledger_series("flow_", &t, &ledgers);
    let mut dp = Series::new("flow_d_p", &["t"]);
    dp.columns.extend(ps.iter().map(|p| format!("d_{p}")));
    if let Some(first) = traj.checkpoints.first() {
        for c in &traj.checkpoints {
            let mut row = vec![c.t];
            for &p in ps {
                row.push(d_p(&first.r, &c.r, p)?);
            }
            dp.rows.push(row);
        }
    }
    out.push(dp);
    for &a in alphas {
        let g = traj
            .checkpoints
            .iter()
            .map(|c| g_alpha(&c.r_tilde(), a))
            .collect::<toric_lab::Result<Vec<f64>>>()?;
        out.push(Series::pairs(&format!("flow_G_alpha_{a}"), "G_alpha", &t, &g));
    }
    Ok(out)
}

/// Ray series from a report.
pub fn ray_series(report: &RayReport) -> Vec<Series> {
    let t = &report.times;
    let mut out = ledger_series("ray_", t, &report.ledgers);
    let mut dp = Series::new("ray_d_p", &["t"]);
    dp.columns
        .extend(report.dp_rates.iter().map(|(p, _, _)| format!("d_{p}")));
    for (j, &tj) in t.iter().enumerate() {
        let mut row = vec![tj];
        for (_, rates, _) in &report.dp_rates {
            // Rates are d_p / t at t > 0.
            row.push(if j == 0 { 0.0 } else { rates[j - 1] * tj });
        }
        dp.rows.push(row);
    }
    out.push(dp);
    for (a, g, _) in &report.g_alpha {
        out.push(Series::pairs(&format!("ray_G_alpha_{a}"), "G_alpha", t, g));
    }
    for (a, li) in &report.blowup_log_integral {
        out.push(Series::pairs(&format!("ray_log_blowup_{a}"), "log_integral", t, li));
    }
    out
}

/// Cauchy residual table of a ray: one column per consecutive level pair.
pub fn cauchy_series(ray: &GeodesicRay) -> Series {
    let mut s = Series::new("ray_cauchy", &["t"]);
    s.columns
        .extend((0..ray.cauchy.len()).map(|l| format!("I1_l{l}_l{}", l + 1)));
    for (j, &t) in ray.times.iter().enumerate() {
        let mut row = vec![t];
        row.extend(ray.cauchy.iter().map(|r| r[j]));
        s.rows.push(row);
    }
    s
}
