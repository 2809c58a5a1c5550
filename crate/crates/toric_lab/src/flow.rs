//! Scalar Kähler–Ricci flow `r̃̇ = log(ω_{r̃}^n / ω^n) + r̃ - f_ω` on the symplectic side.
//!
//! In the symplectic correction `ṽ` the flow reads `ṽ̇ = Ψ(ṽ)` with
//! `Ψ(v) = log det(I + A D²v) + Q + c_f + v - <x, ∇v>`. Each step solves the linearly implicit
//! Euler system `(I - dt J) δ = dt Ψ(v)`, `J` the exact Jacobian of the discrete `Ψ`, so the
//! expansive `+v` term and the diffusion are both implicit.
//!
//! The state is stored AM-normalized. Constants evolve exactly under the scheme
//! (`c ↦ c / (1 - dt)`), so the tilde normalization is recovered after the run from the series of
//! AM increments by the backward recurrence that keeps `AM(r̃)` from growing exponentially.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::catalog::catalog_lookup;
use crate::error::{Error, Result};
use crate::functionals::FunctionalLedger;
use crate::grid::{MomentGrid, NodeKind};
use crate::io;
use crate::potentials::{random_perturbation, PotentialField, ReferenceGeometry};
use crate::sparse::{bicgstab, Csr, Ilu0};

pub const FLOW_TAG: &str = "TKRL1-FLOW";
pub const SCHEME: &str = "linearly-implicit-euler";
/// `dt_max = DT_FACTOR · h`.
pub const DT_FACTOR: f64 = 0.2;
pub const MIN_DT: f64 = 1e-9;
const SOLVER_TOL: f64 = 1e-13;

pub fn dt_max(grid: &MomentGrid) -> f64 {
    DT_FACTOR * grid.h
}

/// Coefficient of the second-order part of `J` at a node.
#[derive(Clone, Copy, Debug)]
enum Diffusion {
    /// Weights of `(D²w)_{11}, (D²w)_{12}, (D²w)_{22}`.
    Full([f64; 3]),
    /// Weight of the tangential second difference.
    Tangent(f64),
    None,
}

/// `Ψ(v)` and the diffusion coefficients of its Jacobian.
///
/// # Errors
/// [`Error::Degeneracy`] where `I + A D²v` is not positive.
fn linearize(geom: &ReferenceGeometry, v: &[f64]) -> Result<(Vec<f64>, Vec<Diffusion>)> {
    let g = &geom.grid;
    let n = g.len();
    let mut psi = Vec::with_capacity(n);
    let mut coef = Vec::with_capacity(n);
    for k in 0..n {
        let degenerate = |detail: String| Error::Degeneracy {
            node: k,
            x: g.coords[k],
            detail,
        };
        let (logdet, c) = match g.kinds[k] {
            NodeKind::Vertex => (0.0, Diffusion::None),
            NodeKind::Edge { .. } => {
                let alpha = geom.edge_alpha[k];
                let m = 1.0 + alpha * g.apply_tangent2(k, v);
                if !(m > 0.0) {
                    return Err(degenerate(format!("tangential factor {m:.3e}")));
                }
                (m.ln(), Diffusion::Tangent(alpha / m))
            }
            NodeKind::Interior if g.dim == 1 => {
                let a = geom.a[k][0];
                let m = 1.0 + a * g.apply_hess(k, v)[0];
                if !(m > 0.0) {
                    return Err(degenerate(format!("factor {m:.3e}")));
                }
                (m.ln(), Diffusion::Full([a / m, 0.0, 0.0]))
            }
            NodeKind::Interior => {
                let hv = g.apply_hess(k, v);
                let a = geom.a[k];
                let m11 = 1.0 + a[0] * hv[0] + a[1] * hv[1];
                let m12 = a[0] * hv[1] + a[1] * hv[2];
                let m21 = a[1] * hv[0] + a[2] * hv[1];
                let m22 = 1.0 + a[1] * hv[1] + a[2] * hv[2];
                let det = m11 * m22 - m12 * m21;
                if !(det > 0.0 && m11 + m22 > 0.0) {
                    return Err(degenerate(format!("det {det:.3e}")));
                }
                // G = M^{-1} A; d log det M = tr(G dH).
                let g11 = (m22 * a[0] - m12 * a[1]) / det;
                let g12 = (m22 * a[1] - m12 * a[2]) / det;
                let g21 = (m11 * a[1] - m21 * a[0]) / det;
                let g22 = (m11 * a[2] - m21 * a[1]) / det;
                (det.ln(), Diffusion::Full([g11, g12 + g21, g22]))
            }
        };
        let x = g.coords[k];
        let gr = g.apply_grad(k, v);
        psi.push(logdet + geom.q[k] + geom.c_f + v[k] - (x[0] * gr[0] + x[1] * gr[1]));
        coef.push(c);
    }
    Ok((psi, coef))
}

/// `Ψ(v)`: the symplectic velocity `ṽ̇`, equal to `-r̃̇` at the image points.
pub fn flow_velocity(geom: &ReferenceGeometry, v: &[f64]) -> Result<Vec<f64>> {
    Ok(linearize(geom, v)?.0)
}

fn assemble(geom: &ReferenceGeometry, coef: &[Diffusion], dt: f64) -> Csr {
    let g = &geom.grid;
    let rows = (0..g.len())
        .map(|k| {
            let mut r = Vec::with_capacity(16);
            r.push((k, 1.0 - dt));
            let x = g.coords[k];
            for (n, w) in &g.grad[k] {
                r.push((*n, dt * (x[0] * w[0] + x[1] * w[1])));
            }
            match coef[k] {
                Diffusion::Full(c) => {
                    for (n, w) in &g.hess[k] {
                        r.push((*n, -dt * (c[0] * w[0] + c[1] * w[1] + c[2] * w[2])));
                    }
                }
                Diffusion::Tangent(c) => {
                    for (n, w) in &g.tangent2[k] {
                        r.push((*n, -dt * c * w));
                    }
                }
                Diffusion::None => {}
            }
            r
        })
        .collect();
    Csr::from_rows(rows)
}

/// One AM-normalized step from `v` (with `Ψ(v)` and its Jacobian data already computed).
///
/// Returns the new AM-normalized `v` and the increment `b = -mean(v + δ)`.
fn raw_step(geom: &ReferenceGeometry, v: &[f64], psi: &[f64], coef: &[Diffusion], dt: f64) -> Result<(Vec<f64>, f64)> {
    let rejected = || Error::StepRejected { suggested_dt: 0.5 * dt };
    let a = assemble(geom, coef, dt);
    let pre = Ilu0::new(&a).ok_or_else(rejected)?;
    let rhs: Vec<f64> = psi.iter().map(|p| dt * p).collect();
    let mut delta = rhs.clone();
    bicgstab(&a, &pre, &rhs, &mut delta, SOLVER_TOL, 500).ok_or_else(rejected)?;
    let mut w: Vec<f64> = v.iter().zip(&delta).map(|(a, b)| a + b).collect();
    if w.iter().any(|x| !x.is_finite()) {
        return Err(rejected());
    }
    let b = -geom.grid.mean(&w);
    for x in &mut w {
        *x += b;
    }
    Ok((w, b))
}

/// A point of a flow trajectory.
#[derive(Clone, Debug)]
pub struct FlowState {
    pub t: f64,
    pub step: usize,
    /// AM-normalized potential `r = r̃ - AM(r̃)`.
    pub r: PotentialField,
    /// `AM(r̃)`.
    pub am_tilde: f64,
    /// `r̃̇` at the image points of the nodes.
    pub r_tilde_dot: Vec<f64>,
}

impl FlowState {
    /// State at `t = 0` from an arbitrary initial `r̃` (AM-normalized internally).
    pub fn initial(r_tilde: &PotentialField) -> Result<Self> {
        let geom = r_tilde.geom().clone();
        let am_tilde = -geom.grid.mean(r_tilde.v());
        let r = r_tilde.shifted(-am_tilde);
        let psi = flow_velocity(&geom, r.v())?;
        Ok(Self {
            t: 0.0,
            step: 0,
            r,
            am_tilde,
            r_tilde_dot: psi.iter().map(|p| am_tilde - p).collect(),
        })
    }

    pub fn r_tilde(&self) -> PotentialField {
        self.r.shifted(self.am_tilde)
    }

    pub fn ledger(&self, label: &str) -> Result<FunctionalLedger> {
        FunctionalLedger::evaluate(label, &self.r_tilde())
    }

    /// Sup-norm of `log(ω_{r̃}^n/ω^n) + r̃ - f_ω - r̃̇`.
    pub fn residual(&self) -> Result<f64> {
        let d = self.r.data()?;
        Ok((0..d.u.len())
            .map(|k| (d.log_ratio[k] + d.u[k] + self.am_tilde - d.f[k] - self.r_tilde_dot[k]).abs())
            .fold(0.0, f64::max))
    }
}

/// Single step in the tilde normalization, with `AM(r̃)` advanced by the exact constant mode.
///
/// # Errors
/// [`Error::StepRejected`] if `dt > dt_max`, the linear solve fails or convexity is lost;
/// [`Error::Degeneracy`] if `state` itself is degenerate.
pub fn flow_step(state: &FlowState, dt: f64) -> Result<FlowState> {
    let geom = state.r.geom().clone();
    let cap = dt_max(&geom.grid);
    if !(dt > 0.0) || dt > cap * (1.0 + 1e-12) {
        return Err(Error::StepRejected { suggested_dt: cap });
    }
    let (psi, coef) = linearize(&geom, state.r.v())?;
    let (v, b) = raw_step(&geom, state.r.v(), &psi, &coef, dt)?;
    if linearize(&geom, &v).is_err() {
        return Err(Error::StepRejected { suggested_dt: 0.5 * dt });
    }
    let am_next = b + state.am_tilde / (1.0 - dt);
    let dam = am_next - state.am_tilde;
    let rdot = v
        .iter()
        .zip(state.r.v())
        .map(|(a, b)| -((a - b) - dam) / dt)
        .collect();
    Ok(FlowState {
        t: state.t + dt,
        step: state.step + 1,
        r: PotentialField::from_symplectic(geom, v)?,
        am_tilde: am_next,
        r_tilde_dot: rdot,
    })
}

/// Initial data families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Preset {
    /// `u = 0`.
    Reference,
    /// Seeded smooth convex perturbation.
    Random { seed: u64, amplitude: f64 },
    /// Random perturbation plus an affine tilt along the barycenter direction.
    Stretched { seed: u64, tilt: f64 },
}

impl Preset {
    pub fn build(&self, geom: &Arc<ReferenceGeometry>) -> PotentialField {
        let v = match self {
            Preset::Reference => vec![0.0; geom.len()],
            Preset::Random { seed, amplitude } => random_perturbation(geom, *seed, *amplitude),
            Preset::Stretched { seed, tilt } => {
                let b = geom.polytope.barycenter();
                let base = random_perturbation(geom, *seed, 0.3);
                geom.grid
                    .coords
                    .iter()
                    .zip(base)
                    .map(|(x, v)| v + tilt * (b[0] * x[0] + b[1] * x[1]))
                    .collect()
            }
        };
        PotentialField::from_symplectic(geom.clone(), v).unwrap()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowSchedule {
    pub dt: f64,
    pub t_end: f64,
    pub checkpoint_every: f64,
    /// Runs stop once `osc(r)` exceeds this.
    pub osc_ceiling: f64,
}

impl FlowSchedule {
    pub fn new(dt: f64, t_end: f64, checkpoint_every: f64) -> Self {
        Self {
            dt,
            t_end,
            checkpoint_every,
            osc_ceiling: 1e3,
        }
    }

    fn validate(&self, grid: &MomentGrid) -> Result<()> {
        if !(self.dt > 0.0) || self.dt > dt_max(grid) * (1.0 + 1e-12) {
            return Err(Error::Parameter(format!(
                "dt = {} outside (0, {}]",
                self.dt,
                dt_max(grid)
            )));
        }
        if !(self.t_end >= 0.0) || !(self.checkpoint_every > 0.0) || !(self.osc_ceiling > 0.0) {
            return Err(Error::Parameter("invalid flow schedule".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    Converging,
    Diverging,
    Undecided,
}

#[derive(Clone, Debug)]
struct Snapshot {
    step: usize,
    t: f64,
    v: Vec<f64>,
    /// `v_n - v_{n-1}` and the step `dt_{n-1}`; empty at step 0.
    dv: Vec<f64>,
    dt_prev: f64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    manifold: String,
    m: usize,
    scheme: String,
    schedule: FlowSchedule,
    step: usize,
    stop_reason: Option<String>,
    snapshots: usize,
}

/// Resumable integrator of the AM-normalized flow.
pub struct FlowRunner {
    geom: Arc<ReferenceGeometry>,
    schedule: FlowSchedule,
    t: f64,
    step: usize,
    dt: f64,
    v: Vec<f64>,
    /// Per step: `(dt_n, b_n)`.
    records: Vec<(f64, f64)>,
    snapshots: Vec<Snapshot>,
    stop_reason: Option<String>,
    /// AM of the initial `r̃`, carried through the recurrence.
    am0: f64,
    out: Option<PathBuf>,
}

impl FlowRunner {
    /// Starts from `initial` (AM-normalized on entry). Checkpoints go to `out/flow.tkrl`.
    pub fn new(initial: &PotentialField, schedule: FlowSchedule, out: Option<&Path>) -> Result<Self> {
        let geom = initial.geom().clone();
        schedule.validate(&geom.grid)?;
        let am0 = -geom.grid.mean(initial.v());
        let v: Vec<f64> = initial.v().iter().map(|x| x + am0).collect();
        linearize(&geom, &v)?;
        let mut runner = Self {
            geom,
            dt: schedule.dt,
            schedule,
            t: 0.0,
            step: 0,
            v: v.clone(),
            records: Vec::new(),
            snapshots: Vec::new(),
            stop_reason: None,
            am0,
            out: out.map(|p| p.join("flow.tkrl")),
        };
        runner.snapshot(Vec::new(), 0.0)?;
        Ok(runner)
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn geom(&self) -> &Arc<ReferenceGeometry> {
        &self.geom
    }

    fn snapshot(&mut self, dv: Vec<f64>, dt_prev: f64) -> Result<()> {
        self.snapshots.push(Snapshot {
            step: self.step,
            t: self.t,
            v: self.v.clone(),
            dv,
            dt_prev,
        });
        if let Some(p) = self.out.clone() {
            self.save(&p)?;
        }
        Ok(())
    }

    /// Integrates to `schedule.t_end`, or until the oscillation ceiling is hit.
    pub fn run(&mut self) -> Result<()> {
        let every = self.schedule.checkpoint_every;
        let t_end = self.schedule.t_end;
        let eps = 1e-9 * self.schedule.dt;
        let mut state = linearize(&self.geom, &self.v)?;
        while self.stop_reason.is_none() && self.t < t_end - eps {
            let next = ((self.t / every + 1e-9).floor() + 1.0) * every;
            let target = next.min(t_end);
            let mut dv = Vec::new();
            let mut dt_prev = 0.0;
            while self.t < target - eps {
                let remaining = target - self.t;
                // Split the last two steps evenly rather than leave a sliver.
                let h = if remaining <= self.dt * (1.0 + 1e-6) {
                    remaining
                } else if remaining < 2.0 * self.dt {
                    0.5 * remaining
                } else {
                    self.dt
                };
                let (psi, coef) = &state;
                let attempt = raw_step(&self.geom, &self.v, psi, coef, h)
                    .and_then(|(v, b)| Ok((linearize(&self.geom, &v).map_err(|_| Error::StepRejected { suggested_dt: 0.5 * h })?, v, b)));
                match attempt {
                    Ok((next_state, v, b)) => {
                        dv = v.iter().zip(&self.v).map(|(a, b)| a - b).collect();
                        dt_prev = h;
                        self.v = v;
                        state = next_state;
                        self.records.push((h, b));
                        self.t = if remaining <= h { target } else { self.t + h };
                        self.step += 1;
                    }
                    Err(Error::StepRejected { .. }) => {
                        self.dt *= 0.5;
                        if self.dt < MIN_DT {
                            return Err(Error::StepRejected { suggested_dt: self.dt });
                        }
                    }
                    Err(e) => return Err(e),
                }
                let (lo, hi) = self
                    .v
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
                if hi - lo > self.schedule.osc_ceiling {
                    self.stop_reason = Some(format!("osc {:.3e} above ceiling at t = {:.4}", hi - lo, self.t));
                    break;
                }
            }
            self.snapshot(dv, dt_prev)?;
        }
        Ok(())
    }

    /// Raises the end time of a finished or loaded run.
    pub fn extend(&mut self, t_end: f64) -> Result<()> {
        if !(t_end >= self.t) {
            return Err(Error::Parameter(format!("cannot extend to {t_end} < t = {}", self.t)));
        }
        self.schedule.t_end = t_end;
        Ok(())
    }

    /// `AM(r̃)` at every step index, from the increments `b_n`.
    ///
    /// `a_{n+1} = b_n + a_n / (1 - dt_n)` has the exponentially growing homogeneous solution;
    /// the bounded one is fixed by its value at the last step, extrapolating `b` linearly past it.
    fn am_series(&self) -> Vec<f64> {
        let n = self.records.len();
        let mut a = vec![0.0; n + 1];
        if n == 0 {
            a[0] = self.am0;
            return a;
        }
        let (dt, b_last) = self.records[n - 1];
        let slope = if n >= 2 { b_last - self.records[n - 2].1 } else { 0.0 };
        let b_next = b_last + slope;
        let q = 1.0 - dt;
        a[n] = -(b_next * q / dt + slope * q * q / (dt * dt));
        for i in (0..n).rev() {
            let (dt, b) = self.records[i];
            a[i] = (1.0 - dt) * (a[i + 1] - b);
        }
        a
    }

    /// Assembles the trajectory of all checkpoints taken so far.
    pub fn trajectory(&self) -> Result<FlowTrajectory> {
        let a = self.am_series();
        let mut checkpoints = Vec::with_capacity(self.snapshots.len());
        for s in &self.snapshots {
            let r = PotentialField::from_symplectic(self.geom.clone(), s.v.clone())?;
            let am_tilde = a[s.step];
            let r_tilde_dot = if s.step == 0 {
                flow_velocity(&self.geom, &s.v)?
                    .iter()
                    .map(|p| am_tilde - p)
                    .collect()
            } else {
                let dam = am_tilde - a[s.step - 1];
                s.dv.iter().map(|d| -(d - dam) / s.dt_prev).collect()
            };
            checkpoints.push(FlowState {
                t: s.t,
                step: s.step,
                r,
                am_tilde,
                r_tilde_dot,
            });
        }
        let mut traj = FlowTrajectory {
            manifold: self.geom.polytope.name.clone(),
            m: self.geom.grid.m,
            dt: self.schedule.dt,
            scheme: SCHEME.to_string(),
            checkpoints,
            stop_reason: self.stop_reason.clone(),
            classification: Classification::Undecided,
        };
        traj.classification = divergence_classify(&traj);
        Ok(traj)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = Header {
            manifold: self.geom.polytope.name.clone(),
            m: self.geom.grid.m,
            scheme: SCHEME.to_string(),
            schedule: self.schedule.clone(),
            step: self.step,
            stop_reason: self.stop_reason.clone(),
            snapshots: self.snapshots.len(),
        };
        // Floats that steer the integration travel as raw bits, not JSON text.
        let scalars = [self.t, self.dt, self.am0, self.schedule.dt, self.schedule.t_end, self.schedule.checkpoint_every];
        let rec_dt: Vec<f64> = self.records.iter().map(|r| r.0).collect();
        let rec_b: Vec<f64> = self.records.iter().map(|r| r.1).collect();
        let meta: Vec<Vec<f64>> = self
            .snapshots
            .iter()
            .map(|s| vec![s.step as f64, s.t, s.dt_prev])
            .collect();
        let mut blocks: Vec<&[f64]> = vec![&scalars, &rec_dt, &rec_b, &self.v];
        for (s, m) in self.snapshots.iter().zip(&meta) {
            blocks.push(m);
            blocks.push(&s.v);
            blocks.push(&s.dv);
        }
        io::save(path, FLOW_TAG, &header, &blocks)
    }

    /// Reloads a run saved by [`FlowRunner::save`]; later checkpoints go to the same file.
    pub fn load(path: &Path) -> Result<Self> {
        let (h, blocks): (Header, _) = io::load(path, FLOW_TAG)?;
        if h.scheme != SCHEME {
            return Err(Error::Format(format!("unknown scheme {}", h.scheme)));
        }
        if blocks.len() != 4 + 3 * h.snapshots {
            return Err(Error::Format("block count does not match header".into()));
        }
        let geom = ReferenceGeometry::new(&catalog_lookup(&h.manifold)?, h.m)?;
        let sc = &blocks[0];
        if sc.len() != 6 || blocks[1].len() != blocks[2].len() || blocks[3].len() != geom.len() {
            return Err(Error::Format("inconsistent block sizes".into()));
        }
        let mut schedule = h.schedule;
        schedule.dt = sc[3];
        schedule.t_end = sc[4];
        schedule.checkpoint_every = sc[5];
        let snapshots = (0..h.snapshots)
            .map(|i| {
                let m = &blocks[4 + 3 * i];
                Snapshot {
                    step: m[0] as usize,
                    t: m[1],
                    dt_prev: m[2],
                    v: blocks[5 + 3 * i].clone(),
                    dv: blocks[6 + 3 * i].clone(),
                }
            })
            .collect();
        Ok(Self {
            geom,
            schedule,
            t: sc[0],
            step: h.step,
            dt: sc[1],
            v: blocks[3].clone(),
            records: blocks[1].iter().cloned().zip(blocks[2].iter().cloned()).collect(),
            snapshots,
            stop_reason: h.stop_reason,
            am0: sc[2],
            out: Some(path.to_path_buf()),
        })
    }
}

/// Checkpointed flow trajectory.
#[derive(Clone, Debug)]
pub struct FlowTrajectory {
    pub manifold: String,
    pub m: usize,
    pub dt: f64,
    pub scheme: String,
    pub checkpoints: Vec<FlowState>,
    pub stop_reason: Option<String>,
    pub classification: Classification,
}

impl FlowTrajectory {
    pub fn times(&self) -> Vec<f64> {
        self.checkpoints.iter().map(|c| c.t).collect()
    }

    pub fn ledgers(&self) -> Result<Vec<FunctionalLedger>> {
        self.checkpoints
            .iter()
            .map(|c| c.ledger(&format!("t={:.6}", c.t)))
            .collect()
    }
}

/// Integrates from `initial` and returns the checkpointed trajectory.
pub fn flow_run(initial: &PotentialField, schedule: FlowSchedule, out: Option<&Path>) -> Result<FlowTrajectory> {
    let mut runner = FlowRunner::new(initial, schedule, out)?;
    runner.run()?;
    runner.trajectory()
}

/// Continues a saved run to `t_end`.
pub fn flow_resume(path: &Path, t_end: f64) -> Result<FlowTrajectory> {
    let mut runner = FlowRunner::load(path)?;
    runner.extend(t_end)?;
    runner.run()?;
    runner.trajectory()
}

/// Observed temporal order from runs to `t_end` at `dt, dt/2, dt/4`.
///
/// Returns `log2(‖v_dt - v_{dt/2}‖_∞ / ‖v_{dt/2} - v_{dt/4}‖_∞)` on the AM-normalized state.
pub fn observed_order(initial: &PotentialField, t_end: f64, dt: f64) -> Result<f64> {
    let finals = [dt, 0.5 * dt, 0.25 * dt]
        .iter()
        .map(|&h| {
            let mut runner = FlowRunner::new(initial, FlowSchedule::new(h, t_end, t_end), None)?;
            runner.run()?;
            Ok(runner.v)
        })
        .collect::<Result<Vec<_>>>()?;
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    Ok((dist(&finals[0], &finals[1]) / dist(&finals[1], &finals[2])).log2())
}

/// Convergence threshold on `osc(r̃̇)`.
pub const CONVERGED_OSC: f64 = 1e-6;
/// Minimal growth of `sup r` per dyadic window for divergence.
pub const WINDOW_GROWTH: f64 = 1.0;
pub const MIN_WINDOWS: usize = 3;

fn osc(v: &[f64]) -> f64 {
    let (lo, hi) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    hi - lo
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Exponential decay rate of `osc(r̃̇)` over the second half of the run, if it decays.
pub fn velocity_decay_rate(traj: &FlowTrajectory) -> Option<f64> {
    let c = &traj.checkpoints;
    let t_end = c.last()?.t;
    let (x, y): (Vec<f64>, Vec<f64>) = c
        .iter()
        .filter(|s| s.t >= 0.5 * t_end)
        .map(|s| (s.t, osc(&s.r_tilde_dot).max(1e-300).ln()))
        .unzip();
    if x.len() < 2 {
        return None;
    }
    let s = fit_slope(&x, &y);
    (s < 0.0).then_some(-s)
}

/// Growth of `sup r` over the dyadic windows `[2^k, 2^{k+1}]` covered by the run.
pub fn dyadic_sup_growth(traj: &FlowTrajectory) -> Vec<(f64, f64, f64)> {
    let c = &traj.checkpoints;
    let Some(last) = c.last() else {
        return Vec::new();
    };
    let mut out = Vec::new();
    let mut lo = 1.0;
    while 2.0 * lo <= last.t * (1.0 + 1e-12) {
        let hi = 2.0 * lo;
        let inside: Vec<&FlowState> = c
            .iter()
            .filter(|s| s.t >= lo * (1.0 - 1e-12) && s.t <= hi * (1.0 + 1e-12))
            .collect();
        if inside.len() >= 2 {
            let sups: Vec<f64> = inside.iter().map(|s| s.r.sup()).collect();
            let monotone = sups.windows(2).all(|w| w[1] >= w[0] - 1e-9);
            let growth = sups[sups.len() - 1] - sups[0];
            out.push((lo, hi, if monotone { growth } else { f64::NEG_INFINITY }));
        }
        lo = hi;
    }
    out
}

/// Converging if `osc(r̃̇)` ends below [`CONVERGED_OSC`] with a fitted exponential decay;
/// diverging if `sup r` grows monotonically by [`WINDOW_GROWTH`] in each of the last
/// [`MIN_WINDOWS`] dyadic windows, or the run hit its oscillation ceiling.
pub fn divergence_classify(traj: &FlowTrajectory) -> Classification {
    if traj.stop_reason.is_some() {
        return Classification::Diverging;
    }
    let c = &traj.checkpoints;
    if c.len() < 3 {
        return Classification::Undecided;
    }
    if osc(&c[c.len() - 1].r_tilde_dot) < CONVERGED_OSC && velocity_decay_rate(traj).is_some() {
        return Classification::Converging;
    }
    let w = dyadic_sup_growth(traj);
    if w.len() >= MIN_WINDOWS && w[w.len() - MIN_WINDOWS..].iter().all(|x| x.2 >= WINDOW_GROWTH) {
        return Classification::Diverging;
    }
    Classification::Undecided
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom(name: &str, m: usize) -> Arc<ReferenceGeometry> {
        ReferenceGeometry::new(&catalog_lookup(name).unwrap(), m).unwrap()
    }

    #[test]
    fn kahler_einstein_reference_is_stationary() {
        for name in ["P1", "P1xP1", "P2"] {
            let g = geom(name, 12);
            let s0 = FlowState::initial(&PotentialField::zero(g.clone())).unwrap();
            let s1 = flow_step(&s0, dt_max(&g.grid)).unwrap();
            let drift = s1.r.v().iter().fold(0.0f64, |a, x| a.max(x.abs()));
            assert!(drift < 1e-12, "{name}: {drift}");
        }
    }

    #[test]
    fn constant_initial_data_moves_by_constant() {
        let g = geom("P1xP1", 10);
        let c = 0.8;
        let s0 = FlowState::initial(&PotentialField::constant(g.clone(), c)).unwrap();
        assert!((s0.am_tilde - c).abs() < 1e-14);
        let f = g.f_ref();
        for (k, r) in s0.r_tilde_dot.iter().enumerate() {
            assert!((r - (c - f[k])).abs() < 1e-12);
        }
        // Implicit constant mode: a' = (a - dt f) / (1 - dt).
        let s1 = flow_step(&s0, 0.01).unwrap();
        assert!((s1.am_tilde - (c - 0.01 * f[0]) / 0.99).abs() < 1e-12);
    }

    #[test]
    fn step_size_is_capped() {
        let g = geom("P1", 16);
        let s0 = FlowState::initial(&PotentialField::zero(g.clone())).unwrap();
        assert!(matches!(flow_step(&s0, 1.0), Err(Error::StepRejected { .. })));
    }

    #[test]
    fn p1_perturbation_converges() {
        let g = geom("P1", 64);
        let init = Preset::Random { seed: 3, amplitude: 1.0 }.build(&g);
        let traj = flow_run(&init, FlowSchedule::new(dt_max(&g.grid), 10.0, 0.5), None).unwrap();
        assert_eq!(traj.classification, Classification::Converging);
        let rate = velocity_decay_rate(&traj).unwrap();
        assert!(rate > 1.0, "rate {rate}");
        for c in &traj.checkpoints {
            assert!(c.r.grid().mean(c.r.v()).abs() < 1e-12);
        }
    }
}
