//! Acceptance suite: fourteen criteria, each a pass/fail line with its measured values.

use std::cell::OnceCell;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;
use toric_lab::catalog::{full_catalog, CATALOG_NAMES};
use toric_lab::flow::{
    dt_max, dyadic_sup_growth, flow_resume, flow_run, observed_order, velocity_decay_rate, Classification,
    FlowSchedule, FlowTrajectory, Preset, WINDOW_GROWTH,
};
use toric_lab::flow_checks::{harnack_and_dp_check, perelman_report};
use toric_lab::functionals::i_p;
use toric_lab::geodesics::{d_p, segment_table, space_time_residual, weak_geodesic, MAX_SPEED_CV};
use toric_lab::legendre::{involution_error, DualGrid};
use toric_lab::potentials::{random_perturbation, PotentialField, ReferenceGeometry};
use toric_lab::ray::{
    build_ray, check_hypotheses, entropy_budget, futaki_rate_check, ray_report, GeodesicRay,
    NONTRIVIAL_ETA,
};
use toric_lab::{catalog_lookup, Result};

use crate::config::ExperimentConfig;
use crate::pipeline::run_experiment;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Quick,
    Full,
}

impl std::str::FromStr for Level {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "quick" => Ok(Level::Quick),
            "full" => Ok(Level::Full),
            _ => Err(format!("unknown level `{s}` (quick|full)")),
        }
    }
}

/// Resolutions of one suite level.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Resolution {
    /// Points of the finest one-dimensional grid.
    pub n1: usize,
    /// Cells per unit length of two-dimensional flow and ray grids.
    pub m2: usize,
    /// Base dual points per axis of the involution check, one and two dimensions.
    pub dual1: usize,
    pub dual2: usize,
}

impl Level {
    pub fn resolution(self) -> Resolution {
        match self {
            Level::Quick => Resolution {
                n1: 512,
                m2: 16,
                dual1: 128,
                dual2: 32,
            },
            Level::Full => Resolution {
                n1: 2048,
                m2: 32,
                dual1: 256,
                dual2: 64,
            },
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CriterionResult {
    pub id: usize,
    pub name: String,
    pub pass: bool,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct AcceptanceTable {
    pub level: Level,
    pub results: Vec<CriterionResult>,
}

impl AcceptanceTable {
    pub fn all_pass(&self) -> bool {
        self.results.iter().all(|r| r.pass)
    }

    /// TAP listing; timings are left out so repeated runs print identical tables.
    pub fn tap(&self) -> String {
        let mut out = format!("1..{}\n", self.results.len());
        for r in &self.results {
            out.push_str(&tap_line(r));
            out.push('\n');
        }
        out
    }
}

pub fn tap_line(r: &CriterionResult) -> String {
    format!(
        "{} {} - {}: {}",
        if r.pass { "ok" } else { "not ok" },
        r.id,
        r.name,
        r.detail
    )
}

pub const CRITERIA: [&str; 14] = [
    "legendre involution",
    "geodesic exactness",
    "AM linearity",
    "convexity battery",
    "sup slope linearity",
    "metric axioms",
    "I_p and sup bands",
    "flow correctness",
    "flow dichotomy",
    "ray construction",
    "ray monotonicity",
    "Futaki rate",
    "entropy budget",
    "determinism and resume",
];

/// Shared runs, computed on first use.
pub struct Suite {
    pub level: Level,
    pub res: Resolution,
    pub root: PathBuf,
    bl1p2: OnceCell<FlowTrajectory>,
    short_ray: OnceCell<GeodesicRay>,
    long_ray: OnceCell<GeodesicRay>,
    p1: OnceCell<FlowTrajectory>,
    p1xp1: OnceCell<FlowTrajectory>,
}

/// Flow horizon of the diverging run.
pub const BL1P2_T: f64 = 50.0;

fn geom(name: &str, m: usize) -> Result<Arc<ReferenceGeometry>> {
    ReferenceGeometry::new(&catalog_lookup(name)?, m)
}

fn field(g: &Arc<ReferenceGeometry>, seed: u64, amplitude: f64) -> Result<PotentialField> {
    PotentialField::from_symplectic(g.clone(), random_perturbation(g, seed, amplitude))
}

fn run_preset(name: &str, m: usize, seed: u64, t_end: f64) -> Result<FlowTrajectory> {
    let g = geom(name, m)?;
    let init = Preset::Random { seed, amplitude: 1.0 }.build(&g);
    flow_run(&init, FlowSchedule::new(dt_max(&g.grid), t_end, 1.0), None)
}

fn osc(q: &[f64]) -> f64 {
    let (lo, hi) = q
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    hi - lo
}

fn spread(c: &[f64]) -> f64 {
    let mean = c.iter().sum::<f64>() / c.len() as f64;
    c.iter().map(|x| (x / mean - 1.0).abs()).fold(0.0, f64::max)
}

fn fmt(v: &[f64]) -> String {
    let cells: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", cells.join(", "))
}

/// Corpus grid resolution: one-dimensional entries use `n1 / 8` cells, two-dimensional 16.
fn corpus_m(name: &str, res: &Resolution) -> usize {
    if name == "P1" {
        res.n1 / 8
    } else {
        16
    }
}

impl Suite {
    pub fn new(level: Level, root: &Path) -> Self {
        Self {
            level,
            res: level.resolution(),
            root: root.to_path_buf(),
            bl1p2: OnceCell::new(),
            short_ray: OnceCell::new(),
            long_ray: OnceCell::new(),
            p1: OnceCell::new(),
            p1xp1: OnceCell::new(),
        }
    }

    fn cached<T: Clone>(cell: &OnceCell<T>, make: impl FnOnce() -> Result<T>) -> Result<&T> {
        if cell.get().is_none() {
            let v = make()?;
            let _ = cell.set(v);
        }
        Ok(cell.get().unwrap())
    }

    pub fn bl1p2(&self) -> Result<&FlowTrajectory> {
        Self::cached(&self.bl1p2, || run_preset("Bl1P2", self.res.m2, 1, BL1P2_T))
    }

    pub fn p1(&self) -> Result<&FlowTrajectory> {
        Self::cached(&self.p1, || run_preset("P1", self.res.n1 / 8, 3, 10.0))
    }

    /// P1xP1 converges at rate 1, so it needs a longer run; it uses `m = 32` at both levels.
    pub fn p1xp1(&self) -> Result<&FlowTrajectory> {
        Self::cached(&self.p1xp1, || run_preset("P1xP1", 32, 2, 16.0))
    }

    pub fn short_ray(&self) -> Result<&GeodesicRay> {
        Self::cached(&self.short_ray, || build_ray(self.bl1p2()?, 2.0, 4))
    }

    pub fn long_ray(&self) -> Result<&GeodesicRay> {
        Self::cached(&self.long_ray, || build_ray(self.bl1p2()?, 8.0, 3))
    }

    /// Runs criterion `id`; errors count as failures.
    pub fn run(&self, id: usize) -> CriterionResult {
        let start = Instant::now();
        let out = match id {
            1 => self.c1(),
            2 => self.c2(),
            3 => self.c3(),
            4 => self.c4(),
            5 => self.c5(),
            6 => self.c6(),
            7 => self.c7(),
            8 => self.c8(),
            9 => self.c9(),
            10 => self.c10(),
            11 => self.c11(),
            12 => self.c12(),
            13 => self.c13(),
            14 => self.c14(),
            _ => Ok((false, format!("no criterion {id}"))),
        };
        let (pass, detail) = out.unwrap_or_else(|e| (false, format!("error: {e}")));
        CriterionResult {
            id,
            name: CRITERIA.get(id.wrapping_sub(1)).unwrap_or(&"unknown").to_string(),
            pass,
            detail,
            seconds: start.elapsed().as_secs_f64(),
        }
    }

    fn c1(&self) -> Result<(bool, String)> {
        let mut pass = true;
        let mut parts = Vec::new();
        for p in full_catalog() {
            let radius = DualGrid::saturating(&p, 3, 1e-6).radius;
            let base = if p.dim == 1 { self.res.dual1 } else { self.res.dual2 };
            let mut cs = Vec::new();
            for k in [1, 2, 4] {
                let n = base * k + 1;
                let dual = DualGrid::new(p.dim, radius, n);
                cs.push(involution_error(&p, &dual, n)? / dual.spacing.powi(2));
            }
            let s = spread(&cs);
            pass &= s <= 0.2;
            parts.push(format!("{} C={} spread {:.1}%", p.name, fmt(&cs), 100.0 * s));
        }
        Ok((pass, parts.join("; ")))
    }

    fn c2(&self) -> Result<(bool, String)> {
        let n = self.res.n1;
        let pair = |m: usize| -> Result<_> {
            let g = geom("P1", m)?;
            weak_geodesic(&field(&g, 21, 1.0)?, &field(&g, 22, 1.0)?)
        };
        let fine = pair(n)?;
        let coarse = pair(n / 2)?;
        let cs = [0.2, 0.1, 0.05]
            .iter()
            .map(|&dt| Ok(space_time_residual(&fine, dt)? / (dt * dt)))
            .collect::<Result<Vec<f64>>>()?;
        let mut pass = spread(&cs) <= 0.2;
        let mut parts = vec![format!("residual/h² = {} (spread {:.1}%)", fmt(&cs), 100.0 * spread(&cs))];
        for p in [1.0, 2.0, 4.0] {
            let cf = fine.speed_profile(p, 8)?.cv;
            let cc = coarse.speed_profile(p, 8)?.cv;
            let ok = cf <= MAX_SPEED_CV && cf <= (0.5 * cc).max(1e-12);
            pass &= ok;
            parts.push(format!("p={p} cv {cc:.2e} -> {cf:.2e}"));
        }
        Ok((pass, parts.join("; ")))
    }

    /// Twenty segments cycling through the catalog, with `samples + 1` rows each.
    fn corpus_segments(&self) -> Result<Vec<(String, Vec<toric_lab::geodesics::SegmentRow>, f64)>> {
        (0..20u64)
            .map(|k| {
                let name = CATALOG_NAMES[k as usize % CATALOG_NAMES.len()];
                let g = geom(name, corpus_m(name, &self.res))?;
                let amp = 0.3 + 0.7 * ((k * 7) % 10) as f64 / 9.0;
                let a = field(&g, 100 + 2 * k, amp)?;
                let b = field(&g, 101 + 2 * k, 1.0)?;
                let seg = weak_geodesic(&a, &b)?;
                let alpha = if g.grid.dim == 2 { 0.7 } else { 0.6 };
                let rows = segment_table(&seg, 2.0, alpha, 8)?;
                let o = osc(&a.v().iter().zip(b.v()).map(|(x, y)| x - y).collect::<Vec<_>>());
                Ok((name.to_string(), rows, o))
            })
            .collect()
    }

    fn c3(&self) -> Result<(bool, String)> {
        let mut worst: f64 = 0.0;
        for (_, rows, _) in self.corpus_segments()? {
            let (a0, a1) = (rows[0].am, rows[rows.len() - 1].am);
            let t1 = rows[rows.len() - 1].t;
            for r in &rows {
                let lin = a0 + (a1 - a0) * r.t / t1;
                worst = worst.max((r.am - lin).abs() / (1.0 + a0.abs().max(a1.abs())));
            }
        }
        Ok((worst <= 1e-3, format!("max relative deviation {worst:.2e} over 20 segments")))
    }

    /// F and M along the corpus; G_α along segments from `u ≡ 0` to the corpus endpoints, where
    /// `t ↦ sup u_t` is linear.
    fn c4(&self) -> Result<(bool, String)> {
        fn min_second_difference(q: &[f64]) -> f64 {
            let o = osc(q).max(1e-300);
            q.windows(3).map(|s| (s[0] - 2.0 * s[1] + s[2]) / o).fold(f64::INFINITY, f64::min)
        }
        let mut worst = [f64::INFINITY; 3];
        for (_, rows, _) in self.corpus_segments()? {
            let f: Vec<f64> = rows.iter().map(|r| r.ding_f).collect();
            let m: Vec<f64> = rows.iter().map(|r| r.k_energy).collect();
            worst[0] = worst[0].min(min_second_difference(&f));
            worst[1] = worst[1].min(min_second_difference(&m));
        }
        for k in 0..20u64 {
            let name = CATALOG_NAMES[k as usize % CATALOG_NAMES.len()];
            let g = geom(name, corpus_m(name, &self.res))?;
            let seg = weak_geodesic(&PotentialField::zero(g.clone()), &field(&g, 101 + 2 * k, 1.0)?)?;
            let alpha = if g.grid.dim == 2 { 0.7 } else { 0.6 };
            let rows = segment_table(&seg, 2.0, alpha, 8)?;
            let q: Vec<f64> = rows.iter().map(|r| r.g_alpha).collect();
            worst[2] = worst[2].min(min_second_difference(&q));
        }
        let pass = worst.iter().all(|w| *w >= -1e-4);
        Ok((
            pass,
            format!(
                "min second difference / osc: F {:.2e}, M {:.2e}, G_alpha {:.2e} (based at u = 0)",
                worst[0], worst[1], worst[2]
            ),
        ))
    }

    fn c5(&self) -> Result<(bool, String)> {
        let mut worst: f64 = 0.0;
        for (_, rows, o) in self.corpus_segments()? {
            let t1 = rows[rows.len() - 1].t;
            let (s0, s1) = (rows[0].sup, rows[rows.len() - 1].sup);
            for r in &rows {
                worst = worst.max((r.sup - (s0 + (s1 - s0) * r.t / t1)).abs() / o.max(1e-300));
            }
        }
        Ok((worst <= 1e-3, format!("max deviation / osc {worst:.2e} over 20 segments")))
    }

    fn c6(&self) -> Result<(bool, String)> {
        let mut sym_exact = true;
        let mut tri: f64 = f64::NEG_INFINITY;
        let mut shift: f64 = 0.0;
        for k in 0..50u64 {
            let name = CATALOG_NAMES[k as usize % CATALOG_NAMES.len()];
            let g = geom(name, if name == "P1" { 128 } else { 8 })?;
            let u: Vec<PotentialField> = (0..3)
                .map(|j| field(&g, 500 + 3 * k + j, 0.2 + 0.4 * j as f64))
                .collect::<Result<_>>()?;
            let c = 0.1 + 0.05 * k as f64;
            for p in [1.0, 2.0, 4.0] {
                let ab = d_p(&u[0], &u[1], p)?;
                let ba = d_p(&u[1], &u[0], p)?;
                sym_exact &= ab.to_bits() == ba.to_bits();
                let bc = d_p(&u[1], &u[2], p)?;
                let ac = d_p(&u[0], &u[2], p)?;
                tri = tri.max(ac - ab - bc);
                shift = shift.max((d_p(&u[0], &u[0].shifted(c), p)? - c).abs());
            }
        }
        let pass = sym_exact && tri <= 1e-6 && shift <= 1e-6;
        Ok((
            pass,
            format!(
                "symmetry bit-exact {sym_exact}; worst triangle excess {tri:.2e}; |d(u,u+c)-c| {shift:.2e}"
            ),
        ))
    }

    fn c7(&self) -> Result<(bool, String)> {
        // Bands of I_p/d_p (p = 1, 2) and sup/(d_2 + 1) on a grid and its refinement.
        let bands = |refine: usize| -> Result<Vec<(f64, f64)>> {
            let mut b = vec![(f64::INFINITY, f64::NEG_INFINITY); 3];
            for k in 0..100u64 {
                let name = CATALOG_NAMES[k as usize % CATALOG_NAMES.len()];
                let m = if name == "P1" { 64 } else { 8 } * refine;
                let g = geom(name, m)?;
                let zero = PotentialField::zero(g.clone());
                let amp = 0.1 + 0.9 * ((k * 37) % 100) as f64 / 99.0;
                let u = field(&g, 1000 + k, amp)?;
                let d1 = d_p(&zero, &u, 1.0)?;
                let d2 = d_p(&zero, &u, 2.0)?;
                let q = [i_p(&zero, &u, 1.0)? / d1, i_p(&zero, &u, 2.0)? / d2, u.sup() / (d2 + 1.0)];
                for (band, x) in b.iter_mut().zip(q) {
                    band.0 = band.0.min(x);
                    band.1 = band.1.max(x);
                }
            }
            Ok(b)
        };
        let (coarse, fine) = (bands(1)?, bands(2)?);
        let names = ["I_1/d_1", "I_2/d_2", "sup/(d_2+1)"];
        let mut pass = true;
        let mut parts = Vec::new();
        for ((c, f), n) in coarse.iter().zip(&fine).zip(names) {
            let change = ((f.0 - c.0) / c.0).abs().max(((f.1 - c.1) / c.1).abs());
            pass &= c.0.is_finite() && c.1.is_finite() && change <= 0.2;
            parts.push(format!("{n} [{:.3}, {:.3}] -> [{:.3}, {:.3}]", c.0, c.1, f.0, f.1));
        }
        Ok((pass, parts.join("; ")))
    }

    fn c8(&self) -> Result<(bool, String)> {
        let mut parts = Vec::new();
        // Residual against dt + h² on two resolutions.
        let fit = |m: usize| -> Result<f64> {
            let traj = run_preset("P1xP1", m, 4, 2.0)?;
            let g = geom("P1xP1", m)?;
            let scale = traj.dt + g.grid.h * g.grid.h;
            let worst = traj
                .checkpoints
                .iter()
                .map(|c| c.residual())
                .collect::<Result<Vec<f64>>>()?
                .into_iter()
                .fold(0.0, f64::max);
            Ok(worst / scale)
        };
        let (c_coarse, c_fine) = (fit(8)?, fit(16)?);
        let residual_ok = c_fine <= 1.2 * c_coarse;
        parts.push(format!("residual/(dt+h²) {c_coarse:.3e} -> {c_fine:.3e}"));
        let mut mono_ok = true;
        for (name, traj) in [("P1", self.p1()?), ("P1xP1", self.p1xp1()?), ("Bl1P2", self.bl1p2()?)] {
            let r = perelman_report(traj)?;
            mono_ok &= r.f_monotone && r.am_monotone;
            parts.push(format!(
                "{name} F rise {:.2e} AM drop {:.2e}",
                r.f_max_increase.max(0.0),
                r.am_max_decrease.max(0.0)
            ));
        }
        let mut conv_ok = true;
        for (name, traj) in [("P1", self.p1()?), ("P1xP1", self.p1xp1()?)] {
            let rate = velocity_decay_rate(traj);
            conv_ok &= traj.classification == Classification::Converging && rate.is_some();
            parts.push(format!("{name} {:?} rate {:.3}", traj.classification, rate.unwrap_or(f64::NAN)));
        }
        let g = geom("P1xP1", 8)?;
        let order = observed_order(&Preset::Random { seed: 4, amplitude: 1.0 }.build(&g), 0.5, 0.02)?;
        let order_ok = order >= 0.9;
        parts.push(format!("order {order:.3} (nominal 1)"));
        Ok((residual_ok && mono_ok && conv_ok && order_ok, parts.join("; ")))
    }

    fn c9(&self) -> Result<(bool, String)> {
        let p1 = self.p1()?;
        let first = &p1.checkpoints[0].r;
        let t_end = p1.checkpoints.last().unwrap().t;
        let tail = p1
            .checkpoints
            .iter()
            .filter(|c| c.t >= 0.5 * t_end)
            .map(|c| d_p(first, &c.r, 2.0))
            .collect::<Result<Vec<f64>>>()?;
        let hi = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let plateau = osc(&tail) / hi.max(1e-300);
        let bl = self.bl1p2()?;
        let windows = dyadic_sup_growth(bl);
        let growing = windows.iter().filter(|w| w.2 >= WINDOW_GROWTH).count();
        let last3 = windows.len() >= 3 && windows[windows.len() - 3..].iter().all(|w| w.2 >= WINDOW_GROWTH);
        let h = harnack_and_dp_check(bl, 2.0)?;
        let band = &h.ratios[1];
        let pass = plateau <= 0.01 && last3 && band.bounded;
        Ok((
            pass,
            format!(
                "P1 d_2 plateau {:.2e}; Bl1P2 sup growth in {growing} dyadic windows {:?}; d_2/(1+sup) band [{:.3}, {:.3}] trend {:.2e}",
                plateau,
                windows.iter().map(|w| format!("[{},{}]:{:.2}", w.0, w.1, w.2)).collect::<Vec<_>>(),
                band.band.0,
                band.band.1,
                band.trend
            ),
        ))
    }

    fn c10(&self) -> Result<(bool, String)> {
        let hyp = check_hypotheses(self.bl1p2()?)?;
        let ray = self.short_ray()?;
        let am_max = ray.am.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let speed = ray
            .times
            .iter()
            .zip(&ray.d2)
            .skip(1)
            .map(|(t, d)| (d - t).abs() / t)
            .fold(0.0, f64::max);
        let decreasing = ray.levels.len() == 4 && ray.cauchy_decreasing();
        let pass = hyp.pass && decreasing && am_max <= 1e-6 && speed <= 0.01 && ray.nontriviality >= NONTRIVIAL_ETA;
        let last: Vec<f64> = ray.cauchy.iter().map(|r| r[r.len() - 1]).collect();
        Ok((
            pass,
            format!(
                "hypotheses {} (Harnack C {:.3}, sup {:.2}, K slope {:.3}); I_1 at t=2 by level {}; strictly decreasing {decreasing}; |AM| {am_max:.1e}; |d_2-t|/t {speed:.1e}; osc(u_1-u_0) {:.3}",
                hyp.pass,
                hyp.harnack_c,
                hyp.sup_final,
                hyp.k_slope.last().copied().unwrap_or(f64::NAN),
                fmt(&last),
                ray.nontriviality
            ),
        ))
    }

    fn c11(&self) -> Result<(bool, String)> {
        let ray = self.long_ray()?;
        let rep = ray_report(ray, &[0.7], &[2.0])?;
        let f_ok = rep
            .ding_f
            .windows(2)
            .all(|w| w[1] - w[0] <= 1e-4 * (1.0 + w[0].abs()));
        let tilde_ok = rep.tilde_max_increase <= 1e-12;
        let g_slope = rep.g_alpha[0].2;
        let factor = rep.blowup_factor[0];
        let pass = f_ok && tilde_ok && g_slope < 0.0 && rep.blowup_monotone[0] && factor >= 1e3;
        Ok((
            pass,
            format!(
                "T = {}: F nonincreasing {f_ok} (max rise {:.2e}); max ũ increase / osc {:.1e}; G_0.7 slope {g_slope:.3}; blow-up integral monotone {} factor {factor:.3e}",
                ray.horizon, rep.f_max_increase, rep.tilde_max_increase, rep.blowup_monotone[0]
            ),
        ))
    }

    fn c12(&self) -> Result<(bool, String)> {
        let f = futaki_rate_check(self.long_ray()?, self.bl1p2()?)?;
        Ok((
            f.pass && f.eps_lower_bound >= -1e-8,
            format!(
                "barycenter {:?}; F slope {:.4} so c = {:.4}; min ε-integrand {:.3e}",
                f.barycenter, f.f_slope, f.rate, f.eps_lower_bound
            ),
        ))
    }

    fn c13(&self) -> Result<(bool, String)> {
        let e = entropy_budget(self.short_ray()?)?;
        let cs: Vec<f64> = e.levels.iter().map(|l| l.2).collect();
        Ok((
            e.nonnegative && e.spread <= 0.2,
            format!("H ≥ 0 {}; fitted C by level {}; spread {:.1}%", e.nonnegative, fmt(&cs), 100.0 * e.spread),
        ))
    }

    fn c14(&self) -> Result<(bool, String)> {
        let base = self.root.join("accept");
        let mut config = ExperimentConfig::default();
        config.grid.m = 8;
        config.flow.t_end = 32.0;
        config.ray.horizon = 2.0;
        config.ray.levels = 2;
        let mut dirs = Vec::new();
        for tag in ["determinism_a", "determinism_b"] {
            config.output = base.join(tag);
            if config.output.exists() {
                fs::remove_dir_all(&config.output)?;
            }
            let out = run_experiment(&config, &self.root).map_err(|e| toric_lab::Error::Evaluation(e.to_string()))?;
            dirs.push(out);
        }
        let csv = |o: &crate::RunOutcome| -> Vec<(String, String)> {
            o.artifacts
                .iter()
                .filter(|a| a.path.ends_with(".csv"))
                .map(|a| (a.path.clone(), a.sha256.clone()))
                .collect()
        };
        let (a, b) = (csv(&dirs[0]), csv(&dirs[1]));
        let identical = !a.is_empty() && a == b;

        // Resume from the midpoint and compare with the uninterrupted run.
        let g = geom("Bl1P2", 8)?;
        let init = Preset::Random { seed: 1, amplitude: 1.0 }.build(&g);
        let sched = FlowSchedule::new(dt_max(&g.grid), 8.0, 1.0);
        let full = flow_run(&init, sched.clone(), None)?;
        let rdir = base.join("resume");
        if rdir.exists() {
            fs::remove_dir_all(&rdir)?;
        }
        let mut half = sched;
        half.t_end = 4.0;
        flow_run(&init, half, Some(&rdir))?;
        let resumed = flow_resume(&rdir.join("flow.tkrl"), 8.0)?;
        let mut gap: f64 = 0.0;
        let same_len = resumed.checkpoints.len() == full.checkpoints.len();
        for (x, y) in resumed.checkpoints.iter().zip(&full.checkpoints) {
            for (p, q) in x.r.v().iter().zip(y.r.v()) {
                gap = gap.max((p - q).abs());
            }
            gap = gap.max((x.am_tilde - y.am_tilde).abs());
        }
        Ok((
            identical && same_len && gap <= 1e-8,
            format!(
                "{} CSV files byte-identical {identical} (status `{}`); resume gap {gap:.1e} over {} checkpoints",
                a.len(),
                dirs[0].status,
                full.checkpoints.len()
            ),
        ))
    }
}

/// Runs criteria `ids` in order, calling `each` after every one.
pub fn acceptance_suite_with(
    level: Level,
    root: &Path,
    ids: &[usize],
    mut each: impl FnMut(&CriterionResult),
) -> AcceptanceTable {
    let suite = Suite::new(level, root);
    let results = ids
        .iter()
        .map(|&id| {
            let r = suite.run(id);
            each(&r);
            r
        })
        .collect();
    AcceptanceTable { level, results }
}

/// All fourteen criteria.
pub fn acceptance_suite(level: Level, root: &Path) -> AcceptanceTable {
    acceptance_suite_with(level, root, &(1..=14).collect::<Vec<_>>(), |_| {})
}
