//! Torus-invariant relative Kähler potentials.
//!
//! A potential is stored as the smooth correction `v = s - s_ref` of its symplectic potential on
//! the moment grid. The relative Kähler potential `u` at the image point `y = ∇s(x)` of a node is
//! recovered exactly through a face-restricted Bregman problem, so all `ω_u^n` integrals become
//! polytope quadratures.

use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::catalog::DelzantPolytope;
use crate::error::{Error, Result};
use crate::grid::{MomentGrid, NodeKind};
use crate::reference::{self, solve_face, QuadModel};

/// Reference data of a polytope at a fixed resolution.
#[derive(Debug)]
pub struct ReferenceGeometry {
    pub polytope: DelzantPolytope,
    pub grid: MomentGrid,
    /// `Vol(X) = n! vol(P)`.
    pub vol: f64,
    /// Normalizing constant of the reference Ricci potential.
    pub c_f: f64,
    /// `Q(x)` at nodes.
    pub q: Vec<f64>,
    /// `log δ(x)` at nodes.
    pub log_delta: Vec<f64>,
    /// `A = H_ref^{-1}` at nodes.
    pub a: Vec<[f64; 3]>,
    /// For edge nodes, the scalar `α` with `A = α t t^T`.
    pub edge_alpha: Vec<f64>,
    /// Nearest interior node, used where a full Hessian stencil is unavailable.
    pub proxy: Vec<usize>,
}

impl ReferenceGeometry {
    pub fn new(polytope: &DelzantPolytope, m: usize) -> Result<Arc<Self>> {
        let grid = MomentGrid::new(polytope, m)?;
        let normals = grid.normals().to_vec();
        let n = grid.len();
        let dim = grid.dim;
        let mut q = Vec::with_capacity(n);
        let mut log_delta = Vec::with_capacity(n);
        let mut a = Vec::with_capacity(n);
        let mut edge_alpha = vec![0.0; n];
        for k in 0..n {
            let l = grid.ls(k);
            let d = reference::delta(&normals, l, dim);
            log_delta.push(d.ln());
            q.push(reference::q_value(&normals, l, dim));
            let ak = reference::a_matrix(&normals, l, dim);
            if let NodeKind::Edge { t, .. } = grid.kinds[k] {
                edge_alpha[k] = if t[0] != 0 {
                    ak[0] / (t[0] * t[0]) as f64
                } else {
                    ak[2] / (t[1] * t[1]) as f64
                };
            }
            a.push(ak);
        }
        let vol = polytope.vol_x();
        let scale = vol / grid.vol_p();
        let eq: Vec<f64> = q.iter().map(|v| v.exp()).collect();
        let c_f = -(scale * grid.integrate(&eq)).ln();

        let interior: Vec<usize> = (0..n)
            .filter(|&k| grid.kinds[k] == NodeKind::Interior)
            .collect();
        if interior.is_empty() {
            return Err(Error::Parameter("grid has no interior nodes".into()));
        }
        let proxy = (0..n)
            .map(|k| {
                if grid.kinds[k] == NodeKind::Interior {
                    return k;
                }
                let x = grid.coords[k];
                *interior
                    .iter()
                    .min_by(|&&i, &&j| {
                        let di = dist2(&grid.coords[i], &x);
                        let dj = dist2(&grid.coords[j], &x);
                        di.partial_cmp(&dj).unwrap()
                    })
                    .unwrap()
            })
            .collect();
        Ok(Arc::new(Self {
            polytope: polytope.clone(),
            grid,
            vol,
            c_f,
            q,
            log_delta,
            a,
            edge_alpha,
            proxy,
        }))
    }

    /// `Vol(X) / vol(P)`: the density of the pushed-forward Monge–Ampère measure.
    pub fn scale(&self) -> f64 {
        self.vol / self.grid.vol_p()
    }

    /// Reference Ricci potential `f_ω` at the image points of the nodes.
    pub fn f_ref(&self) -> Vec<f64> {
        self.q.iter().map(|q| q + self.c_f).collect()
    }

    /// True when `f_ω` is constant, i.e. the reference metric is Kähler–Einstein.
    pub fn is_kahler_einstein(&self) -> bool {
        let (lo, hi) = self
            .q
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &q| (a.min(q), b.max(q)));
        hi - lo < 1e-10
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }
}

fn dist2(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Per-node Kähler data of a potential, all at the image points `y_k = ∇s(x_k)`.
#[derive(Clone, Debug)]
pub struct NodeData {
    pub grad: Vec<[f64; 2]>,
    /// Full Hessian of `v` (boundary nodes borrow their proxy's).
    pub hess: Vec<[f64; 3]>,
    /// `log det(I + A D²v)`; tangential at edges, zero at vertices.
    pub logdet: Vec<f64>,
    /// Reference preimage: `∇s_ref(z) = y`.
    pub z: Vec<[f64; 2]>,
    pub u: Vec<f64>,
    /// `log(ω_u^n / ω^n)`.
    pub log_ratio: Vec<f64>,
    /// `f_ω(y)`.
    pub f: Vec<f64>,
    /// Unnormalized Ricci potential of `ω_u`, also the flow velocity of `v`.
    pub psi: Vec<f64>,
}

/// Position, gradient and Hessian of `v` at a node.
#[derive(Clone, Copy, Debug)]
pub struct LocalJet {
    pub x: [f64; 2],
    pub grad: [f64; 2],
    pub hess: [f64; 3],
}

/// A torus-invariant relative Kähler potential.
#[derive(Clone, Debug)]
pub struct PotentialField {
    geom: Arc<ReferenceGeometry>,
    v: Vec<f64>,
    cache: OnceLock<NodeData>,
}

impl PotentialField {
    /// Potential with symplectic correction `v`.
    pub fn from_symplectic(geom: Arc<ReferenceGeometry>, v: Vec<f64>) -> Result<Self> {
        if v.len() != geom.len() {
            return Err(Error::Parameter(format!(
                "grid function has {} values, grid has {} nodes",
                v.len(),
                geom.len()
            )));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Evaluation("non-finite grid value".into()));
        }
        Ok(Self {
            geom,
            v,
            cache: OnceLock::new(),
        })
    }

    pub fn zero(geom: Arc<ReferenceGeometry>) -> Self {
        let n = geom.len();
        Self::from_symplectic(geom, vec![0.0; n]).unwrap()
    }

    /// `u ≡ c`, i.e. `v ≡ -c`.
    pub fn constant(geom: Arc<ReferenceGeometry>, c: f64) -> Self {
        let n = geom.len();
        Self::from_symplectic(geom, vec![-c; n]).unwrap()
    }

    pub fn geom(&self) -> &Arc<ReferenceGeometry> {
        &self.geom
    }

    pub fn grid(&self) -> &MomentGrid {
        &self.geom.grid
    }

    /// Symplectic correction `v = s - s_ref`.
    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn into_v(self) -> Vec<f64> {
        self.v
    }

    /// Same potential plus a constant: `u + c`.
    pub fn shifted(&self, c: f64) -> Self {
        let v = self.v.iter().map(|x| x - c).collect();
        Self::from_symplectic(self.geom.clone(), v).unwrap()
    }

    /// `sup_X u = -min v`.
    pub fn sup(&self) -> f64 {
        -self.v.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// `inf_X u = -max v`.
    pub fn inf(&self) -> f64 {
        -self.v.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn osc(&self) -> f64 {
        self.sup() - self.inf()
    }

    /// Finite-difference jets of `v` (boundary nodes borrow the Hessian of their proxy).
    pub fn local_jets(&self) -> Vec<LocalJet> {
        let g = &self.geom.grid;
        (0..g.len())
            .map(|k| LocalJet {
                x: g.coords[k],
                grad: g.apply_grad(k, &self.v),
                hess: g.apply_hess(self.geom.proxy[k], &self.v),
            })
            .collect()
    }

    /// Checks that `s_ref + v` is strictly convex at every node.
    pub fn check_convexity(&self) -> Result<()> {
        let g = &self.geom.grid;
        for k in 0..g.len() {
            self.node_logdet(k)?;
        }
        Ok(())
    }

    fn node_logdet(&self, k: usize) -> Result<f64> {
        let g = &self.geom.grid;
        let degenerate = |detail: String| Error::Degeneracy {
            node: k,
            x: g.coords[k],
            detail,
        };
        match g.kinds[k] {
            NodeKind::Vertex => Ok(0.0),
            NodeKind::Edge { .. } => {
                let m = 1.0 + self.geom.edge_alpha[k] * g.apply_tangent2(k, &self.v);
                if m > 0.0 {
                    Ok(m.ln())
                } else {
                    Err(degenerate(format!("tangential factor {m:.3e}")))
                }
            }
            NodeKind::Interior if g.dim == 1 => {
                let hv = g.apply_hess(k, &self.v)[0];
                let m = 1.0 + self.geom.a[k][0] * hv;
                if m.is_nan() || m <= 0.0 {
                    return Err(degenerate(format!("factor {m:.3e}")));
                }
                Ok(m.ln())
            }
            NodeKind::Interior => {
                let hv = g.apply_hess(k, &self.v);
                let a = self.geom.a[k];
                let m11 = 1.0 + a[0] * hv[0] + a[1] * hv[1];
                let m12 = a[0] * hv[1] + a[1] * hv[2];
                let m21 = a[1] * hv[0] + a[2] * hv[1];
                let m22 = 1.0 + a[1] * hv[1] + a[2] * hv[2];
                let det = m11 * m22 - m12 * m21;
                let tr = m11 + m22;
                if det > 0.0 && tr > 0.0 {
                    Ok(det.ln())
                } else {
                    Err(degenerate(format!("det {det:.3e}, trace {tr:.3e}")))
                }
            }
        }
    }

    /// Per-node Kähler data, computed once.
    ///
    /// # Errors
    /// [`Error::Degeneracy`] if the discrete Hessian of `s` is not positive at some node.
    pub fn data(&self) -> Result<&NodeData> {
        if let Some(d) = self.cache.get() {
            return Ok(d);
        }
        let d = self.compute()?;
        Ok(self.cache.get_or_init(|| d))
    }

    fn compute(&self) -> Result<NodeData> {
        let geom = &*self.geom;
        let g = &geom.grid;
        let normals = g.normals();
        let n = g.len();
        let mut out = NodeData {
            grad: Vec::with_capacity(n),
            hess: Vec::with_capacity(n),
            logdet: Vec::with_capacity(n),
            z: Vec::with_capacity(n),
            u: Vec::with_capacity(n),
            log_ratio: Vec::with_capacity(n),
            f: Vec::with_capacity(n),
            psi: Vec::with_capacity(n),
        };
        for k in 0..n {
            let gr = g.apply_grad(k, &self.v);
            out.grad.push(gr);
            out.hess.push(g.apply_hess(geom.proxy[k], &self.v));
        }
        for k in 0..n {
            let logdet = self.node_logdet(k)?;
            let gr = out.grad[k];
            let sol = solve_face(g, k, gr, None);
            let lz: Vec<f64> = normals
                .iter()
                .enumerate()
                .map(|(i, a)| {
                    if g.active[k] & (1 << i) != 0 {
                        0.0
                    } else {
                        a[0] * sol.z[0] + a[1] * sol.z[1] + 1.0
                    }
                })
                .collect();
            let u = sol.value - self.v[k];
            let log_delta_z = reference::delta(normals, &lz, g.dim).ln();
            let sum_rho: f64 = sol.rho.iter().sum();
            let log_ratio = log_delta_z - geom.log_delta[k] - sum_rho - logdet;
            let f = log_delta_z - lz.iter().map(|l| l - 1.0).sum::<f64>() + geom.c_f;
            let x = g.coords[k];
            let psi = logdet + geom.q[k] + geom.c_f + self.v[k] - (x[0] * gr[0] + x[1] * gr[1]);
            out.logdet.push(logdet);
            out.z.push(sol.z);
            out.u.push(u);
            out.log_ratio.push(log_ratio);
            out.f.push(f);
            out.psi.push(psi);
        }
        Ok(out)
    }

    /// `∫_X G ω_u^n` for `G` given at the image points of the nodes.
    pub fn integrate_mu(&self, values: &[f64]) -> f64 {
        self.geom.scale() * self.geom.grid.integrate(values)
    }

    /// `∫_X G ω^n` for `G` given at the image points of the nodes.
    pub fn integrate_ref(&self, values: &[f64]) -> Result<f64> {
        let d = self.data()?;
        let w: Vec<f64> = values
            .iter()
            .zip(&d.log_ratio)
            .map(|(g, r)| g * (-r).exp())
            .collect();
        Ok(self.integrate_mu(&w))
    }

    /// `log ∫_X e^{-β(u - sup u) + f_ω} ω^n`, evaluated stably.
    pub fn log_exp_integral(&self, beta: f64) -> Result<f64> {
        let d = self.data()?;
        let sup = self.sup();
        let e: Vec<f64> = (0..d.u.len())
            .map(|k| -beta * (d.u[k] - sup) + d.f[k] - d.log_ratio[k])
            .collect();
        Ok(log_integrate_exp(&self.geom, &e))
    }

    /// `log Z` with `Z = ∫_X e^{-u + f_ω} ω^n`.
    pub fn log_z(&self) -> Result<f64> {
        Ok(self.log_exp_integral(1.0)? - self.sup())
    }

    /// Ricci potential of `ω_u`, normalized by `∫ e^{f} ω_u^n = 1`.
    pub fn ricci_potential(&self) -> Result<Vec<f64>> {
        let lz = self.log_z()?;
        Ok(self.data()?.psi.iter().map(|p| p - lz).collect())
    }
}

/// `log((Vol/vol P) ∫_P e^{e(x)} dx)` with a max shift.
pub fn log_integrate_exp(geom: &ReferenceGeometry, e: &[f64]) -> f64 {
    let mx = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = e.iter().map(|x| (x - mx).exp()).collect();
    mx + (geom.scale() * geom.grid.integrate(&w)).ln()
}

/// `∫_X G ω_u^n` (pushforward quadrature).
pub fn ma_pushforward_integral(values: &[f64], u: &PotentialField) -> Result<f64> {
    if values.len() != u.geom.len() {
        return Err(Error::Evaluation(format!(
            "integrand has {} values, grid has {} nodes",
            values.len(),
            u.geom.len()
        )));
    }
    if let Some(k) = values.iter().position(|x| !x.is_finite()) {
        return Err(Error::Evaluation(format!("integrand undefined at node {k}")));
    }
    Ok(u.integrate_mu(values))
}

/// `ω_u^n / ω^n` at the image points of the nodes.
pub fn ma_density_ratio(u: &PotentialField) -> Result<Vec<f64>> {
    Ok(u.data()?.log_ratio.iter().map(|r| r.exp()).collect())
}

/// `(u1 - u0)` at the image points `∇s0(x_k)` of the nodes.
///
/// Solves `min_x v1(x) - <∇v0(x_k), x - x_k> + D_ref(x, x_k)` over the face of `x_k`, with `v1`
/// replaced by its quadratic model at the grid node nearest to the current minimizer.
pub fn cross_difference(p0: &PotentialField, p1: &PotentialField) -> Result<Vec<f64>> {
    if !Arc::ptr_eq(&p0.geom, &p1.geom) && p0.geom.len() != p1.geom.len() {
        return Err(Error::Parameter("potentials live on different grids".into()));
    }
    let d0 = p0.data()?;
    let d1 = p1.data()?;
    let g = &p0.geom.grid;
    let m = g.m as f64;
    let mut out = Vec::with_capacity(g.len());
    for k in 0..g.len() {
        let mut center = k;
        let mut value = 0.0;
        for _ in 0..4 {
            let model = QuadModel {
                c: g.coords[center],
                val: p1.v[center],
                g: d1.grad[center],
                h: d1.hess[center],
            };
            let sol = solve_face(g, k, d0.grad[k], Some(&model));
            value = sol.value;
            let lat = [(sol.z[0] * m).round() as i64, (sol.z[1] * m).round() as i64];
            match g.index_of(lat) {
                Some(c) if c != center => center = c,
                _ => break,
            }
        }
        out.push(p0.v[k] - value);
    }
    Ok(out)
}

/// Seeded random smooth perturbation `v` with `s_ref + v` uniformly convex.
///
/// `v` is a sum of low-frequency cosine modes plus an affine part, scaled so the eigenvalues of
/// `I + A D²v` stay in `[1/2, 3/2]`, then multiplied by `amplitude` (`≤ 1`).
pub fn random_perturbation(geom: &Arc<ReferenceGeometry>, seed: u64, amplitude: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = &geom.grid;
    let modes: Vec<([f64; 2], f64, f64)> = (0..4)
        .map(|_| {
            let w = [rng.gen_range(-2.5..2.5), if g.dim == 2 { rng.gen_range(-2.5..2.5) } else { 0.0 }];
            (w, rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(-1.0..1.0))
        })
        .collect();
    let lin = [rng.gen_range(-0.5..0.5), if g.dim == 2 { rng.gen_range(-0.5..0.5) } else { 0.0 }];
    let c0 = rng.gen_range(-0.5..0.5);
    // Analytic Hessian bound of the trigonometric part: Σ |c| |w|².
    let mut v_bump = Vec::with_capacity(g.len());
    let mut hmax: f64 = 0.0;
    for (w, _, c) in &modes {
        hmax += c.abs() * (w[0] * w[0] + w[1] * w[1]);
    }
    for x in &g.coords {
        let mut s = 0.0;
        for (w, ph, c) in &modes {
            s += c * (w[0] * x[0] + w[1] * x[1] + ph).cos();
        }
        v_bump.push(s);
    }
    // Largest eigenvalue of A over the grid.
    let amax = geom
        .a
        .iter()
        .map(|a| 0.5 * (a[0] + a[2]) + (0.25 * (a[0] - a[2]).powi(2) + a[1] * a[1]).sqrt())
        .fold(0.0, f64::max);
    let eps = if hmax > 0.0 { 0.5 / (amax * hmax) } else { 0.0 };
    let amp = amplitude.clamp(0.0, 1.0);
    g.coords
        .iter()
        .zip(&v_bump)
        .map(|(x, b)| amp * (eps * b + lin[0] * x[0] + lin[1] * x[1] + c0))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{catalog_lookup, full_catalog};

    fn geom(name: &str, m: usize) -> Arc<ReferenceGeometry> {
        ReferenceGeometry::new(&catalog_lookup(name).unwrap(), m).unwrap()
    }

    #[test]
    fn p1_reference_constants() {
        let g = geom("P1", 8);
        assert!((g.c_f + 4f64.ln()).abs() < 1e-12);
        assert!(g.is_kahler_einstein());
        assert!(!geom("Bl1P2", 6).is_kahler_einstein());
    }

    #[test]
    fn zero_potential_data() {
        for p in full_catalog() {
            let g = ReferenceGeometry::new(&p, 6).unwrap();
            let u = PotentialField::zero(g.clone());
            let d = u.data().unwrap();
            for k in 0..g.len() {
                assert!(d.u[k].abs() < 1e-12);
                assert!(d.log_ratio[k].abs() < 1e-12);
                assert!((d.f[k] - g.q[k] - g.c_f).abs() < 1e-12);
            }
            assert!((u.integrate_mu(&vec![1.0; g.len()]) - g.vol).abs() < 1e-12 * g.vol);
            // ∫ e^f ω^n = 1
            let ef: Vec<f64> = d.f.iter().map(|f| f.exp()).collect();
            assert!((u.integrate_ref(&ef).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_potential() {
        let g = geom("Bl2P2", 6);
        let u = PotentialField::constant(g.clone(), 0.75);
        assert_eq!((u.sup(), u.inf(), u.osc()), (0.75, 0.75, 0.0));
        let d = u.data().unwrap();
        assert!(d.u.iter().all(|x| (x - 0.75).abs() < 1e-12));
        assert!(d.log_ratio.iter().all(|x| x.abs() < 1e-12));
        let total = ma_pushforward_integral(&d.u, &u).unwrap();
        assert!((total - 0.75 * g.vol).abs() < 1e-12);
    }

    #[test]
    fn ricci_identity_holds_nodewise() {
        for p in full_catalog() {
            let g = ReferenceGeometry::new(&p, 8).unwrap();
            let v = random_perturbation(&g, 11, 1.0);
            let u = PotentialField::from_symplectic(g.clone(), v).unwrap();
            let d = u.data().unwrap();
            for k in 0..g.len() {
                let lhs = d.log_ratio[k] + d.u[k] - d.f[k];
                assert!((lhs + d.psi[k]).abs() < 1e-8, "{} node {k}: {lhs} vs {}", p.name, -d.psi[k]);
            }
        }
    }

    #[test]
    fn cross_difference_of_self_and_shift() {
        let g = geom("Bl1P2", 8);
        let v = random_perturbation(&g, 3, 1.0);
        let a = PotentialField::from_symplectic(g.clone(), v).unwrap();
        let b = a.shifted(0.4);
        let same = cross_difference(&a, &a).unwrap();
        assert!(same.iter().all(|x| x.abs() < 1e-9));
        let shift = cross_difference(&a, &b).unwrap();
        assert!(shift.iter().all(|x| (x - 0.4).abs() < 1e-9));
    }

    #[test]
    fn cross_difference_matches_affine_change() {
        // s1 = s0 + <b, x>  ⇒  φ1(y) = φ0(y - b).
        let g = geom("P1", 64);
        let v0 = random_perturbation(&g, 5, 1.0);
        let v1: Vec<f64> = v0.iter().zip(&g.grid.coords).map(|(v, x)| v + 0.3 * x[0]).collect();
        let p0 = PotentialField::from_symplectic(g.clone(), v0).unwrap();
        let p1 = PotentialField::from_symplectic(g.clone(), v1).unwrap();
        let diff = cross_difference(&p0, &p1).unwrap();
        let rev = cross_difference(&p1, &p0).unwrap();
        // sup and inf of u1 - u0 from both sides agree with the symplectic identities.
        let dv: Vec<f64> = p0.v().iter().zip(p1.v()).map(|(a, b)| a - b).collect();
        let mx = dv.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let dmx = diff.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let rmn = rev.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((dmx - mx).abs() < 1e-3, "{dmx} {mx}");
        assert!((-rmn - mx).abs() < 1e-3, "{rmn} {mx}");
    }

    #[test]
    fn random_perturbations_are_convex() {
        for p in full_catalog() {
            let g = ReferenceGeometry::new(&p, 8).unwrap();
            for seed in 0..5 {
                let v = random_perturbation(&g, seed, 1.0);
                PotentialField::from_symplectic(g.clone(), v)
                    .unwrap()
                    .check_convexity()
                    .unwrap();
            }
        }
    }
}
