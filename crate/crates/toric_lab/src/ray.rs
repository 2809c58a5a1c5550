//! Geodesic rays weakly asymptotic to diverging flow trajectories.
//!
//! For flow times `t_l` with `f_l = d_2(r_0, r_{t_l})` growing geometrically, the unit-speed
//! segments `[0, f_l] ∋ t ↦ u_t^l` from `u_0 = r_0` to `r_{t_l}` are built and compared at common
//! times `t ≤ T`. The ray sample at `t` is the top-level approximant, certified by the table of
//! `I_1(u_t^l, u_t^{l+1})` residuals.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::catalog::catalog_lookup;
use crate::error::{Error, Result};
use crate::flow::{fit_slope, Classification, FlowTrajectory};
use crate::flow_checks::bound_verdict;
use crate::functionals::{am, ding_f, entropy, g_alpha, h_and_eps, i_p, k_energy, FunctionalLedger};
use crate::geodesics::{d_p, unit_reparam, weak_geodesic, GeodesicSegment};
use crate::io;
use crate::potentials::{PotentialField, ReferenceGeometry};

pub const RAY_TAG: &str = "TKRL1-RAY";
/// Default number of equispaced sample intervals on `[0, T]`.
pub const SAMPLES: usize = 8;
/// Minimal `osc(u_1 - u_0)` of a non-trivial ray.
pub const NONTRIVIAL_ETA: f64 = 1e-3;

fn osc_diff(a: &PotentialField, b: &PotentialField) -> f64 {
    let (lo, hi) = a
        .v()
        .iter()
        .zip(b.v())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (x, y)| (lo.min(x - y), hi.max(x - y)));
    hi - lo
}

/// `sup_X (u - u0) = max_P (v0 - v)`.
fn sup_diff(u: &PotentialField, u0: &PotentialField) -> f64 {
    u0.v()
        .iter()
        .zip(u.v())
        .fold(f64::NEG_INFINITY, |m, (a, b)| m.max(a - b))
}

#[derive(Clone, Debug, Serialize)]
pub struct HypothesisVerdict {
    /// Smallest `C` with `-inf c ≤ C sup c + C` at the checkpoints.
    pub harnack_c: f64,
    pub harnack: bool,
    /// Final `sup c`, and whether the trajectory is classified diverging.
    pub sup_final: f64,
    pub blowup: bool,
    /// `(M(c_t) - M(c_0)) / sup c_t` at checkpoints with `sup c_t ≥ 1`.
    pub k_slope: Vec<f64>,
    pub k_slope_sup: f64,
    pub k_slope_bounded: bool,
    pub pass: bool,
    pub explanation: String,
}

/// Hypotheses of the ray construction on the checkpoints of an AM-normalized trajectory.
pub fn check_hypotheses(traj: &FlowTrajectory) -> Result<HypothesisVerdict> {
    let c = &traj.checkpoints;
    if c.is_empty() {
        return Err(Error::Insufficient("empty trajectory".into()));
    }
    let times = traj.times();
    let mut harnack_c: f64 = 0.0;
    let mut ratio = Vec::new();
    for s in c {
        let sup = s.r.sup().max(0.0);
        let r = -s.r.inf() / (sup + 1.0);
        harnack_c = harnack_c.max(r);
        ratio.push(r);
    }
    let harnack = bound_verdict("harnack", &times, ratio, true).bounded;
    let blowup = traj.classification == Classification::Diverging;
    let m0 = k_energy(&c[0].r)?;
    let mut k_slope = Vec::new();
    let mut k_times = Vec::new();
    for s in c {
        let sup = s.r.sup();
        if sup >= 1.0 {
            k_slope.push((k_energy(&s.r)? - m0) / sup);
            k_times.push(s.t);
        }
    }
    let k_slope_sup = k_slope.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let k_slope_bounded = !k_slope.is_empty() && k_slope_sup.is_finite() && {
        // Decreasing K-energy gives a nonpositive slope; allow a small positive tolerance.
        k_slope.last().copied().unwrap_or(0.0) <= 1e-3
    };
    let pass = harnack && blowup && k_slope_bounded;
    let explanation = if !blowup {
        format!(
            "C0 blow-up fails: trajectory classified {:?}, sup r = {:.4}",
            traj.classification,
            c[c.len() - 1].r.sup()
        )
    } else if !pass {
        "Harnack ratio or K-energy slope not bounded".to_string()
    } else {
        "all hypotheses hold".to_string()
    };
    Ok(HypothesisVerdict {
        harnack_c,
        harnack,
        sup_final: c[c.len() - 1].r.sup(),
        blowup,
        k_slope,
        k_slope_sup,
        k_slope_bounded,
        pass,
        explanation,
    })
}

/// A unit-speed `d_2` segment from the basepoint to a flow checkpoint.
#[derive(Clone, Debug)]
pub struct Approximant {
    pub flow_time: f64,
    /// `f_l = d_2(u_0, r_{t_l})`.
    pub f: f64,
    pub segment: GeodesicSegment,
}

#[derive(Clone, Debug)]
pub struct GeodesicRay {
    pub u0: PotentialField,
    pub horizon: f64,
    pub times: Vec<f64>,
    pub levels: Vec<Approximant>,
    /// Top-level approximant at each sample time.
    pub samples: Vec<PotentialField>,
    /// `cauchy[l][j] = I_1(u_{t_j}^l, u_{t_j}^{l+1})`.
    pub cauchy: Vec<Vec<f64>>,
    pub am: Vec<f64>,
    pub d2: Vec<f64>,
    /// `osc(u_t - u_0)` at `t = min(1, T)`.
    pub nontriviality: f64,
}

impl GeodesicRay {
    pub fn geom(&self) -> &Arc<ReferenceGeometry> {
        self.u0.geom()
    }

    /// Whether `I_1` residuals strictly decrease in `l` at every positive sample time.
    pub fn cauchy_decreasing(&self) -> bool {
        (1..self.times.len()).all(|j| self.cauchy.windows(2).all(|w| w[1][j] < w[0][j]))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct H<'a> {
            manifold: &'a str,
            m: usize,
            levels: usize,
            samples: usize,
        }
        let g = self.geom();
        let meta: Vec<f64> = [self.horizon, self.times.len() as f64 - 1.0]
            .into_iter()
            .chain(self.levels.iter().flat_map(|l| [l.flow_time, l.f]))
            .collect();
        let mut blocks: Vec<&[f64]> = vec![&meta, self.u0.v()];
        for l in &self.levels {
            blocks.push(l.segment.u1.v());
        }
        io::save(
            path,
            RAY_TAG,
            &H {
                manifold: &g.polytope.name,
                m: g.grid.m,
                levels: self.levels.len(),
                samples: self.times.len() - 1,
            },
            &blocks,
        )
    }

    /// Rebuilds a ray from persisted approximant endpoints.
    pub fn load(path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct H {
            manifold: String,
            m: usize,
            levels: usize,
        }
        let (h, blocks): (H, _) = io::load(path, RAY_TAG)?;
        if blocks.len() != 2 + h.levels || blocks[0].len() != 2 + 2 * h.levels {
            return Err(Error::Format("ray block layout does not match header".into()));
        }
        let geom = ReferenceGeometry::new(&catalog_lookup(&h.manifold)?, h.m)?;
        let meta = &blocks[0];
        let u0 = PotentialField::from_symplectic(geom.clone(), blocks[1].clone())?;
        let ends = (0..h.levels)
            .map(|l| {
                Ok((
                    meta[2 + 2 * l],
                    meta[3 + 2 * l],
                    PotentialField::from_symplectic(geom.clone(), blocks[2 + l].clone())?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        assemble_ray(u0, ends, meta[0], meta[1] as usize)
    }
}

fn assemble_ray(u0: PotentialField, ends: Vec<(f64, f64, PotentialField)>, horizon: f64, samples: usize) -> Result<GeodesicRay> {
    let levels: Vec<Approximant> = ends
        .into_iter()
        .map(|(flow_time, f, u1)| {
            Ok(Approximant {
                flow_time,
                f,
                segment: GeodesicSegment {
                    u0: u0.clone(),
                    u1,
                    length: f,
                },
            })
        })
        .collect::<Result<_>>()?;
    let times: Vec<f64> = (0..=samples).map(|j| horizon * j as f64 / samples as f64).collect();
    let per_level: Vec<Vec<PotentialField>> = levels
        .iter()
        .map(|l| times.iter().map(|&t| l.segment.evaluate(t)).collect())
        .collect::<Result<_>>()?;
    let mut cauchy = Vec::new();
    for w in per_level.windows(2) {
        let row = w[0]
            .iter()
            .zip(&w[1])
            .map(|(a, b)| if osc_diff(a, b) == 0.0 { Ok(0.0) } else { i_p(a, b, 1.0) })
            .collect::<Result<Vec<f64>>>()?;
        cauchy.push(row);
    }
    let samples = per_level.last().cloned().unwrap_or_default();
    let am_s = samples.iter().map(am).collect();
    let d2 = samples
        .iter()
        .map(|u| d_p(&u0, u, 2.0))
        .collect::<Result<Vec<f64>>>()?;
    let t1 = horizon.min(1.0);
    let j1 = times
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - t1).abs().partial_cmp(&(b.1 - t1).abs()).unwrap())
        .map(|x| x.0)
        .unwrap_or(0);
    let nontriviality = samples.get(j1).map(|u| osc_diff(u, &u0)).unwrap_or(0.0);
    Ok(GeodesicRay {
        u0,
        horizon,
        times,
        levels,
        samples,
        cauchy,
        am: am_s,
        d2,
        nontriviality,
    })
}

/// Builds the ray from `traj` with `l_count` levels on the horizon `[0, T]`.
///
/// Target lengths are `f_top ρ^{l - l_count + 1}` with `ρ = min(2, (f_top/T)^{1/(l_count-1)})`;
/// each picks the checkpoint with the nearest `log f`.
///
/// # Errors
/// [`Error::Horizon`] if fewer than `l_count` distinct checkpoints reach `f ≥ T`;
/// [`Error::Construction`] if the Cauchy residuals do not decrease in `l`.
pub fn build_ray(traj: &FlowTrajectory, horizon: f64, l_count: usize) -> Result<GeodesicRay> {
    build_ray_with(traj, horizon, l_count, SAMPLES)
}

pub fn build_ray_with(traj: &FlowTrajectory, horizon: f64, l_count: usize, samples: usize) -> Result<GeodesicRay> {
    if !(horizon > 0.0) || l_count == 0 || samples == 0 {
        return Err(Error::Parameter("horizon, level count and samples must be positive".into()));
    }
    let c = &traj.checkpoints;
    let u0 = c
        .first()
        .ok_or_else(|| Error::Insufficient("empty trajectory".into()))?
        .r
        .clone();
    let fs = c
        .iter()
        .map(|s| d_p(&u0, &s.r, 2.0))
        .collect::<Result<Vec<f64>>>()?;
    let eligible: Vec<usize> = (0..c.len()).filter(|&k| fs[k] >= horizon).collect();
    if eligible.len() < l_count {
        return Err(Error::Horizon(format!(
            "{} checkpoints reach d_2 ≥ {horizon}, need {l_count}; largest d_2 = {:.4}",
            eligible.len(),
            fs.iter().cloned().fold(0.0, f64::max)
        )));
    }
    let top = *eligible.iter().max_by(|&&a, &&b| fs[a].partial_cmp(&fs[b]).unwrap()).unwrap();
    let f_top = fs[top];
    let rho = if l_count > 1 {
        (f_top / horizon).powf(1.0 / (l_count - 1) as f64).min(2.0)
    } else {
        1.0
    };
    let mut picked: Vec<usize> = Vec::new();
    for l in 0..l_count {
        let target = f_top * rho.powi(l as i32 - l_count as i32 + 1);
        let k = *eligible
            .iter()
            .filter(|k| !picked.contains(k))
            .min_by(|&&a, &&b| {
                let da = (fs[a] / target).ln().abs();
                let db = (fs[b] / target).ln().abs();
                da.partial_cmp(&db).unwrap()
            })
            .unwrap();
        picked.push(k);
    }
    picked.sort_by(|a, b| fs[*a].partial_cmp(&fs[*b]).unwrap());
    let mut ends = Vec::new();
    for &k in &picked {
        let seg = unit_reparam(&weak_geodesic(&u0, &c[k].r)?, 2.0)?;
        ends.push((c[k].t, seg.length, c[k].r.clone()));
    }
    let ray = assemble_ray(u0, ends, horizon, samples)?;
    if ray.levels.len() > 1 && !ray.cauchy_decreasing() {
        return Err(Error::Construction(format!(
            "Cauchy residuals not decreasing in l: {:?}",
            ray.cauchy
        )));
    }
    Ok(ray)
}

#[derive(Clone, Debug, Serialize)]
pub struct RayReport {
    pub times: Vec<f64>,
    pub ledgers: Vec<FunctionalLedger>,
    pub ding_f: Vec<f64>,
    /// Largest relative increase of `F` between samples.
    pub f_max_increase: f64,
    pub f_nonincreasing: bool,
    /// Smallest discrete second difference of `F`.
    pub f_min_second_diff: f64,
    pub f_convex: bool,
    pub f_slope: f64,
    /// Per `α`: `(α, series, fitted slope)`.
    pub g_alpha: Vec<(f64, Vec<f64>, f64)>,
    /// Largest pointwise increase of `ũ_t` between consecutive samples, relative to osc.
    pub tilde_max_increase: f64,
    pub tilde_nonincreasing: bool,
    /// Per `α`: `(α, log ∫ e^{-α ũ_t} ω^n series)`.
    pub blowup_log_integral: Vec<(f64, Vec<f64>)>,
    /// Per `α`: monotone growth and total growth factor.
    pub blowup_monotone: Vec<bool>,
    pub blowup_factor: Vec<f64>,
    /// `ũ_T` as symplectic correction: the `u_∞` estimate.
    pub u_infinity_v: Vec<f64>,
    /// Per `p`: `(p, d_p(u_0, u_t) / t series, coefficient of variation)`.
    pub dp_rates: Vec<(f64, Vec<f64>, f64)>,
    /// `sup(u_t - u_0)` and its deviation from the affine fit, relative to osc.
    pub sup_series: Vec<f64>,
    pub sup_affine_deviation: f64,
}

/// `log ∫ e^{-α ũ} ω^n` with `ũ = u - sup(u - u0)`.
fn log_tilde_integral(u: &PotentialField, u0: &PotentialField, alpha: f64) -> Result<f64> {
    let d = u.data()?;
    let c = sup_diff(u, u0);
    let e: Vec<f64> = (0..d.u.len())
        .map(|k| -alpha * (d.u[k] - c) - d.log_ratio[k])
        .collect();
    Ok(crate::potentials::log_integrate_exp(u.geom(), &e))
}

/// Monotonicity, convexity and slope checks along the ray samples.
pub fn ray_report(ray: &GeodesicRay, alphas: &[f64], ps: &[f64]) -> Result<RayReport> {
    let n = ray.geom().grid.dim as f64;
    let crit = n / (n + 1.0);
    if let Some(a) = alphas.iter().find(|a| !(**a > crit && **a < 1.0)) {
        return Err(Error::Parameter(format!("α = {a} outside ({crit}, 1)")));
    }
    if let Some(p) = ps.iter().find(|p| !(**p >= 1.0)) {
        return Err(Error::Parameter(format!("p = {p} < 1")));
    }
    let times = &ray.times;
    let s = &ray.samples;
    let ledgers = s
        .iter()
        .zip(times)
        .map(|(u, t)| FunctionalLedger::evaluate(&format!("t={t:.6}"), u))
        .collect::<Result<Vec<_>>>()?;
    let fs: Vec<f64> = ledgers.iter().map(|l| l.ding_f).collect();
    let f_max_increase = fs
        .windows(2)
        .map(|w| (w[1] - w[0]) / (1.0 + w[0].abs()))
        .fold(f64::NEG_INFINITY, f64::max);
    let f_scale = 1.0 + fs.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let f_min_second_diff = fs
        .windows(3)
        .map(|w| w[0] - 2.0 * w[1] + w[2])
        .fold(f64::INFINITY, f64::min);
    let g_alpha_series = alphas
        .iter()
        .map(|&a| {
            let g = s.iter().map(|u| g_alpha(u, a)).collect::<Result<Vec<f64>>>()?;
            let slope = fit_slope(times, &g);
            Ok((a, g, slope))
        })
        .collect::<Result<Vec<_>>>()?;
    // ũ_{t'} ≤ ũ_t  ⟺  ṽ_{t'} ≥ ṽ_t with ṽ = v + sup(u - u0).
    let tilde: Vec<Vec<f64>> = s
        .iter()
        .map(|u| {
            let c = sup_diff(u, &ray.u0);
            u.v().iter().map(|x| x + c).collect()
        })
        .collect();
    let osc_top = s.last().map(|u| osc_diff(u, &ray.u0)).unwrap_or(0.0).max(1e-300);
    let tilde_max_increase = tilde
        .windows(2)
        .map(|w| {
            w[0].iter()
                .zip(&w[1])
                .fold(f64::NEG_INFINITY, |m, (a, b)| m.max(a - b))
        })
        .fold(f64::NEG_INFINITY, f64::max)
        / osc_top;
    let blowup_log_integral = alphas
        .iter()
        .map(|&a| {
            let li = s
                .iter()
                .map(|u| log_tilde_integral(u, &ray.u0, a))
                .collect::<Result<Vec<f64>>>()?;
            Ok((a, li))
        })
        .collect::<Result<Vec<_>>>()?;
    let blowup_monotone = blowup_log_integral
        .iter()
        .map(|(_, li)| li.windows(2).all(|w| w[1] > w[0]))
        .collect();
    let blowup_factor = blowup_log_integral
        .iter()
        .map(|(_, li)| (li[li.len() - 1] - li[0]).exp())
        .collect();
    let dp_rates = ps
        .iter()
        .map(|&p| {
            let r = s
                .iter()
                .zip(times)
                .skip(1)
                .map(|(u, t)| Ok(d_p(&ray.u0, u, p)? / t))
                .collect::<Result<Vec<f64>>>()?;
            let mean = r.iter().sum::<f64>() / r.len().max(1) as f64;
            let var = r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / r.len().max(1) as f64;
            Ok((p, r, if mean > 0.0 { var.sqrt() / mean } else { 0.0 }))
        })
        .collect::<Result<Vec<_>>>()?;
    let sup_series: Vec<f64> = s.iter().map(|u| sup_diff(u, &ray.u0)).collect();
    let slope = fit_slope(times, &sup_series);
    let mt = times.iter().sum::<f64>() / times.len() as f64;
    let ms = sup_series.iter().sum::<f64>() / times.len() as f64;
    let sup_affine_deviation = times
        .iter()
        .zip(&sup_series)
        .map(|(t, y)| (y - ms - slope * (t - mt)).abs())
        .fold(0.0, f64::max)
        / osc_top;
    Ok(RayReport {
        times: times.clone(),
        f_nonincreasing: f_max_increase <= 1e-4,
        f_convex: f_min_second_diff >= -1e-4 * f_scale,
        f_slope: fit_slope(times, &fs),
        ding_f: fs,
        ledgers,
        f_max_increase,
        f_min_second_diff,
        g_alpha: g_alpha_series,
        tilde_nonincreasing: tilde_max_increase <= 1e-6,
        tilde_max_increase,
        blowup_log_integral,
        blowup_monotone,
        blowup_factor,
        u_infinity_v: tilde.last().cloned().unwrap_or_default(),
        dp_rates,
        sup_series,
        sup_affine_deviation,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct FutakiReport {
    pub applicable: bool,
    pub barycenter: [f64; 2],
    /// Smallest ε-integrand over the trajectory checkpoints and ray samples.
    pub eps_lower_bound: f64,
    pub eps_nonnegative: bool,
    pub f_slope: f64,
    /// `c = -slope` when the slope is negative.
    pub rate: f64,
    pub pass: bool,
}

/// Strict decrease of `F` along the ray when the barycenter is nonzero.
pub fn futaki_rate_check(ray: &GeodesicRay, traj: &FlowTrajectory) -> Result<FutakiReport> {
    let b = ray.geom().polytope.barycenter();
    let applicable = b[0].abs() + b[1].abs() > 1e-12;
    let mut eps_min = f64::INFINITY;
    for s in &traj.checkpoints {
        eps_min = eps_min.min(h_and_eps(&s.r)?.1);
    }
    let mut fs = Vec::new();
    for u in &ray.samples {
        eps_min = eps_min.min(h_and_eps(u)?.1);
        fs.push(ding_f(u)?);
    }
    let f_slope = fit_slope(&ray.times, &fs);
    let rate = (-f_slope).max(0.0);
    let eps_nonnegative = eps_min >= -1e-8;
    Ok(FutakiReport {
        applicable,
        barycenter: b,
        eps_lower_bound: eps_min,
        eps_nonnegative,
        f_slope,
        rate,
        pass: applicable && rate > 0.0 && eps_nonnegative,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct AsymptoticityReport {
    pub p: f64,
    /// `table[l][j] = d_p(u_{t_j}^l, u_{t_j})`.
    pub table: Vec<Vec<f64>>,
    pub decreasing: bool,
}

/// `d_p` between each level and the limit sample, which must decrease in `l`.
pub fn weak_asymptoticity_certificate(ray: &GeodesicRay, p: f64) -> Result<AsymptoticityReport> {
    let mut table = Vec::new();
    for l in &ray.levels {
        let row = ray
            .times
            .iter()
            .zip(&ray.samples)
            .map(|(&t, u)| {
                let ul = l.segment.evaluate(t)?;
                if osc_diff(&ul, u) == 0.0 {
                    Ok(0.0)
                } else {
                    d_p(&ul, u, p)
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        table.push(row);
    }
    let decreasing = (1..ray.times.len()).all(|j| table.windows(2).all(|w| w[1][j] <= w[0][j]));
    Ok(AsymptoticityReport { p, table, decreasing })
}

#[derive(Clone, Debug, Serialize)]
pub struct EntropyBudget {
    /// Per level: `(f_l, H(ω_{u_t^l}) series, fitted C = max_t H/t)`.
    pub levels: Vec<(f64, Vec<f64>, f64)>,
    pub nonnegative: bool,
    /// `(max C - min C) / max C` across levels.
    pub spread: f64,
}

/// Entropy along each approximant against `C·t`.
pub fn entropy_budget(ray: &GeodesicRay) -> Result<EntropyBudget> {
    let mut levels = Vec::new();
    let mut nonneg = true;
    for l in &ray.levels {
        let mut hs = Vec::new();
        let mut c: f64 = 0.0;
        for &t in &ray.times {
            let h = entropy(&l.segment.evaluate(t)?)?;
            nonneg &= h >= -1e-10;
            if t > 0.0 {
                c = c.max(h / t);
            }
            hs.push(h);
        }
        levels.push((l.f, hs, c));
    }
    let cs: Vec<f64> = levels.iter().map(|x| x.2).collect();
    let hi = cs.iter().cloned().fold(0.0, f64::max);
    let lo = cs.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(EntropyBudget {
        levels,
        nonnegative: nonneg,
        spread: if hi > 0.0 { (hi - lo) / hi } else { 0.0 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{dt_max, flow_run, FlowSchedule, Preset};

    fn trajectory(name: &str, m: usize, t_end: f64) -> FlowTrajectory {
        let g = ReferenceGeometry::new(&catalog_lookup(name).unwrap(), m).unwrap();
        let init = Preset::Random { seed: 1, amplitude: 1.0 }.build(&g);
        flow_run(&init, FlowSchedule::new(dt_max(&g.grid), t_end, 1.0), None).unwrap()
    }

    #[test]
    fn converging_run_fails_blowup() {
        let traj = trajectory("P1", 32, 12.0);
        let h = check_hypotheses(&traj).unwrap();
        assert!(!h.blowup && !h.pass);
        assert!(h.explanation.contains("blow-up"));
    }

    #[test]
    fn identical_levels_have_zero_residual() {
        let traj = trajectory("Bl1P2", 8, 12.0);
        let u0 = traj.checkpoints[0].r.clone();
        let last = traj.checkpoints.last().unwrap().r.clone();
        let f = d_p(&u0, &last, 2.0).unwrap();
        let ray = assemble_ray(u0, vec![(12.0, f, last.clone()), (12.0, f, last)], 1.0, 4).unwrap();
        assert!(ray.cauchy[0].iter().all(|x| *x == 0.0));
    }
}
