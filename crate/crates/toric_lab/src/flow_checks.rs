//! Estimate batteries along flow trajectories.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::{fit_slope, FlowTrajectory};
use crate::functionals::{am, ding_f, g_alpha};
use crate::geodesics::d_p;

/// Relative tolerance of the monotonicity checks.
pub const MONOTONE_TOL: f64 = 1e-6;
/// A series counts as bounded if its fitted growth over the second half of the run stays below
/// this fraction of `1 + max |q|`. Ratio series instead must saturate.
pub const GROWTH_TOL: f64 = 0.05;

/// A quantity expected to stay bounded above along the run.
#[derive(Clone, Debug, Serialize)]
pub struct BoundVerdict {
    pub name: String,
    pub series: Vec<f64>,
    /// Largest observed value: the empirical constant.
    pub observed_bound: f64,
    /// Fitted slope over the second half of the run.
    pub trend: f64,
    pub bounded: bool,
}

fn second_half(times: &[f64], q: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let t_end = times.last().copied().unwrap_or(0.0);
    times
        .iter()
        .zip(q)
        .filter(|(t, _)| **t >= 0.5 * t_end)
        .map(|(t, q)| (*t, *q))
        .unzip()
}

pub fn bound_verdict(name: &str, times: &[f64], q: Vec<f64>, ratio: bool) -> BoundVerdict {
    let max = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let scale = 1.0 + q.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let (x, y) = second_half(times, &q);
    let trend = if x.len() >= 2 { fit_slope(&x, &y) } else { 0.0 };
    let span = x.last().unwrap_or(&0.0) - x.first().unwrap_or(&0.0);
    let bounded = if ratio {
        // Saturation: the rise over the second half is at most half the rise over the first.
        let t_mid = 0.5 * times.last().copied().unwrap_or(0.0);
        let mid = times.iter().position(|t| *t >= t_mid).unwrap_or(0);
        let rise_first = q[mid] - q[0];
        let rise_second = q[q.len() - 1] - q[mid];
        rise_second <= 0.5 * rise_first.max(0.0) + GROWTH_TOL * 1e-3 * scale
    } else {
        trend * span <= GROWTH_TOL * scale
    };
    BoundVerdict {
        name: name.to_string(),
        observed_bound: max,
        trend,
        bounded,
        series: q,
    }
}

fn max_increase(q: &[f64]) -> f64 {
    q.windows(2)
        .map(|w| (w[1] - w[0]) / (1.0 + w[0].abs()))
        .fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Clone, Debug, Serialize)]
pub struct PerelmanReport {
    pub times: Vec<f64>,
    pub items: Vec<BoundVerdict>,
    pub ding_f: Vec<f64>,
    pub am_tilde: Vec<f64>,
    /// Largest relative increase of `F(r̃_t)` between consecutive checkpoints.
    pub f_max_increase: f64,
    /// Largest relative decrease of `AM(r̃_t)` between consecutive checkpoints.
    pub am_max_decrease: f64,
    pub f_monotone: bool,
    pub am_monotone: bool,
}

/// Time series of the flow estimates with boundedness and monotonicity verdicts.
///
/// Items: `‖r̃̇‖_∞`, `‖f_{ω_t}‖_∞`, `-AM(r̃_t)`, `∫ r̃_t ω_{r̃_t}^n`, the Harnack ratio
/// `-inf r̃ / (1 + |sup r̃|)`, `G_α(r̃) - ((1-α)n - α) sup r̃` at `α = 0.7`, and
/// `sup r̃ / (1 + sup r̃ - AM(r̃))`.
///
/// # Errors
/// [`Error::Insufficient`] with fewer than 3 checkpoints.
pub fn perelman_report(traj: &FlowTrajectory) -> Result<PerelmanReport> {
    let c = &traj.checkpoints;
    if c.len() < 3 {
        return Err(Error::Insufficient(format!("{} checkpoints, need 3", c.len())));
    }
    let times = traj.times();
    let n = c[0].r.grid().dim as f64;
    let alpha = 0.7;
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); 7];
    let mut fs = Vec::new();
    let mut ams = Vec::new();
    for s in c {
        let rt = s.r_tilde();
        let d = rt.data()?;
        let f = rt.ricci_potential()?;
        let a = am(&rt);
        let (sup, inf) = (rt.sup(), rt.inf());
        cols[0].push(s.r_tilde_dot.iter().fold(0.0f64, |m, x| m.max(x.abs())));
        cols[1].push(f.iter().fold(0.0f64, |m, x| m.max(x.abs())));
        cols[2].push(-a);
        cols[3].push(rt.integrate_mu(&d.u));
        cols[4].push(-inf / (1.0 + sup.abs()));
        cols[5].push(g_alpha(&rt, alpha)? - ((1.0 - alpha) * n - alpha) * sup);
        cols[6].push(sup / (1.0 + sup - a));
        fs.push(ding_f(&rt)?);
        ams.push(a);
    }
    let names = [
        "sup |r_tilde_dot|",
        "sup |f_omega_t|",
        "-AM(r_tilde)",
        "int r_tilde omega_r_tilde^n",
        "harnack ratio",
        "alpha-integral bound",
        "sup/AM sandwich",
    ];
    let items = names
        .iter()
        .zip(cols)
        .enumerate()
        .map(|(i, (nm, q))| bound_verdict(nm, &times, q, i == 4 || i == 6))
        .collect();
    let f_max_increase = max_increase(&fs);
    let neg: Vec<f64> = ams.iter().map(|x| -x).collect();
    let am_max_decrease = max_increase(&neg);
    Ok(PerelmanReport {
        times,
        items,
        f_monotone: f_max_increase <= MONOTONE_TOL,
        am_monotone: am_max_decrease <= MONOTONE_TOL,
        ding_f: fs,
        am_tilde: ams,
        f_max_increase,
        am_max_decrease,
    })
}

/// A ratio series with its band over the second half of the run.
#[derive(Clone, Debug, Serialize)]
pub struct RatioBand {
    pub name: String,
    pub series: Vec<f64>,
    pub band: (f64, f64),
    /// Fitted slope over the second half.
    pub trend: f64,
    pub bounded: bool,
}

fn ratio_band(name: &str, times: &[f64], q: Vec<f64>) -> RatioBand {
    let (x, y) = second_half(times, &q);
    let lo = y.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let trend = if x.len() >= 2 { fit_slope(&x, &y) } else { 0.0 };
    let span = x.last().unwrap_or(&0.0) - x.first().unwrap_or(&0.0);
    RatioBand {
        name: name.to_string(),
        band: (lo, hi),
        trend,
        bounded: (trend * span).abs() <= 0.1 * hi.abs().max(1e-12) || hi - lo <= 1e-9,
        series: q,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HarnackReport {
    pub p: f64,
    pub times: Vec<f64>,
    pub neg_inf: Vec<f64>,
    pub sup: Vec<f64>,
    pub d_p: Vec<f64>,
    /// Smallest `C` with `-inf r ≤ C sup r + C`.
    pub c_harnack: f64,
    /// Smallest `C ≥ 1` with `d_p ≤ C sup r + C`.
    pub c_dp_upper: f64,
    /// A `C ≥ 1` with `sup r / C - C ≤ d_p`.
    pub c_dp_lower: f64,
    pub ratios: Vec<RatioBand>,
    pub bounded: bool,
}

/// `(-inf r_t, sup r_t, d_p(r_0, r_t))` along an AM-normalized trajectory.
pub fn harnack_and_dp_check(traj: &FlowTrajectory, p: f64) -> Result<HarnackReport> {
    let c = &traj.checkpoints;
    let times = traj.times();
    let mut neg_inf = Vec::new();
    let mut sup = Vec::new();
    let mut dps = Vec::new();
    for s in c {
        neg_inf.push(-s.r.inf());
        sup.push(s.r.sup());
        dps.push(d_p(&c[0].r, &s.r, p)?);
    }
    let mut c_h: f64 = 0.0;
    let mut c_up: f64 = 1.0;
    let mut c_lo: f64 = 1.0;
    for k in 0..c.len() {
        let s = sup[k].max(0.0);
        c_h = c_h.max(neg_inf[k] / (s + 1.0));
        c_up = c_up.max(dps[k] / (s + 1.0));
        // C ≥ 1 and C (d + 1) ≥ sup imply sup ≤ C d + C².
        c_lo = c_lo.max(s / (dps[k] + 1.0));
    }
    let ratios = vec![
        ratio_band(
            "-inf/(1+sup)",
            &times,
            neg_inf.iter().zip(&sup).map(|(a, b)| a / (1.0 + b)).collect(),
        ),
        ratio_band(
            "d_p/(1+sup)",
            &times,
            dps.iter().zip(&sup).map(|(a, b)| a / (1.0 + b)).collect(),
        ),
    ];
    Ok(HarnackReport {
        p,
        times,
        bounded: ratios.iter().all(|r| r.bounded),
        neg_inf,
        sup,
        d_p: dps,
        c_harnack: c_h,
        c_dp_upper: c_up,
        c_dp_lower: c_lo,
        ratios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::catalog_lookup;
    use crate::flow::{dt_max, flow_run, FlowSchedule, Preset};
    use crate::potentials::ReferenceGeometry;

    #[test]
    fn stationary_run_has_constant_series() {
        let g = ReferenceGeometry::new(&catalog_lookup("P1xP1").unwrap(), 8).unwrap();
        let init = Preset::Reference.build(&g);
        let traj = flow_run(&init, FlowSchedule::new(dt_max(&g.grid), 1.0, 0.25), None).unwrap();
        let rep = perelman_report(&traj).unwrap();
        for it in &rep.items {
            let (lo, hi) = it
                .series
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
            assert!(hi - lo < 1e-10, "{}: {lo} {hi}", it.name);
            assert!(it.bounded);
        }
        assert!(rep.f_monotone && rep.am_monotone);
        let h = harnack_and_dp_check(&traj, 2.0).unwrap();
        assert!(h.d_p.iter().all(|d| d.abs() < 1e-12));
        assert!(h.bounded);
    }

    #[test]
    fn short_trajectory_is_insufficient() {
        let g = ReferenceGeometry::new(&catalog_lookup("P1").unwrap(), 8).unwrap();
        let traj = flow_run(&Preset::Reference.build(&g), FlowSchedule::new(0.01, 0.0, 1.0), None).unwrap();
        assert_eq!(traj.checkpoints.len(), 1);
        assert!(matches!(perelman_report(&traj), Err(Error::Insufficient(_))));
    }
}
