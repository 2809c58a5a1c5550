//! Discrete Legendre transforms and the dual-grid conversion layer.
//!
//! Transforms on tensor grids are separable: a 1D transform along each axis, each computed in
//! linear time from the lower convex hull and a monotone sweep over the targets. Missing source
//! values are `+∞`.

use std::sync::Arc;

use crate::catalog::DelzantPolytope;
use crate::error::{Error, Result};
use crate::grid::{MomentGrid, NodeKind};
use crate::linalg::simplex_min;
use crate::potentials::{LocalJet, PotentialField, ReferenceGeometry};
use crate::reference::{self, ref_dual, solve_face_at, QuadModel};

/// Tensor-product grid in one or two dimensions; values are stored with axis 0 fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorGrid {
    pub axes: Vec<Vec<f64>>,
}

impl TensorGrid {
    pub fn new(axes: Vec<Vec<f64>>) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(Error::Parameter("tensor grids have 1 or 2 axes".into()));
        }
        for a in &axes {
            if a.is_empty() || a.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::Parameter("axis must be strictly increasing".into()));
            }
        }
        Ok(Self { axes })
    }

    /// `n` equispaced points on `[lo, hi]` per axis.
    pub fn uniform(dim: usize, lo: f64, hi: f64, n: usize) -> Self {
        let axis: Vec<f64> = (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect();
        Self {
            axes: vec![axis; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.axes[0].len(), self.axes.get(1).map_or(1, |a| a.len())]
    }

    pub fn len(&self) -> usize {
        let s = self.shape();
        s[0] * s[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, idx: usize) -> [f64; 2] {
        let n0 = self.axes[0].len();
        let (i, j) = (idx % n0, idx / n0);
        [self.axes[0][i], self.axes.get(1).map_or(0.0, |a| a[j])]
    }
}

/// 1D transform `out[j] = max_i (xs[j] ys[i] - f[i])`, with the maximizing index.
fn llt_1d(ys: &[f64], f: &[f64], xs: &[f64], val: &mut [f64], arg: &mut [usize]) {
    let mut hull: Vec<usize> = Vec::with_capacity(ys.len());
    for i in 0..ys.len() {
        if !f[i].is_finite() {
            continue;
        }
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            // Drop b if it lies on or above the chord a–i.
            let lhs = (f[b] - f[a]) * (ys[i] - ys[b]);
            let rhs = (f[i] - f[b]) * (ys[b] - ys[a]);
            if lhs >= rhs {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    if hull.is_empty() {
        val.fill(f64::NEG_INFINITY);
        arg.fill(usize::MAX);
        return;
    }
    let mut p = 0;
    for (j, &x) in xs.iter().enumerate() {
        while p + 1 < hull.len() {
            let (a, b) = (hull[p], hull[p + 1]);
            if x * ys[b] - f[b] >= x * ys[a] - f[a] {
                p += 1;
            } else {
                break;
            }
        }
        let i = hull[p];
        val[j] = x * ys[i] - f[i];
        arg[j] = i;
    }
}

/// Discrete transform `f*(x) = max_y (<x, y> - f(y))` on the target grid, with the flat index of
/// the maximizing source node. No convexity check.
pub fn legendre_with_argmax(src: &TensorGrid, f: &[f64], tgt: &TensorGrid) -> (Vec<f64>, Vec<usize>) {
    assert_eq!(src.dim(), tgt.dim());
    assert_eq!(f.len(), src.len());
    if src.dim() == 1 {
        let n = tgt.len();
        let (mut val, mut arg) = (vec![0.0; n], vec![0; n]);
        llt_1d(&src.axes[0], f, &tgt.axes[0], &mut val, &mut arg);
        return (val, arg);
    }
    let [s0, s1] = src.shape();
    let [t0, t1] = tgt.shape();
    // Along axis 1 for each source column i: g[i][jx], argmax j.
    let mut g = vec![0.0; s0 * t1];
    let mut gj = vec![0usize; s0 * t1];
    let mut col = vec![0.0; s1];
    for i in 0..s0 {
        for j in 0..s1 {
            col[j] = f[j * s0 + i];
        }
        llt_1d(
            &src.axes[1],
            &col,
            &tgt.axes[1],
            &mut g[i * t1..(i + 1) * t1],
            &mut gj[i * t1..(i + 1) * t1],
        );
    }
    // Along axis 0 for each target x2: max_i (x1 y1_i + g[i][jx]).
    let mut val = vec![0.0; t0 * t1];
    let mut arg = vec![0usize; t0 * t1];
    let mut h = vec![0.0; s0];
    let mut row_v = vec![0.0; t0];
    let mut row_a = vec![0usize; t0];
    for jx in 0..t1 {
        for i in 0..s0 {
            let gv = g[i * t1 + jx];
            h[i] = if gv.is_finite() { -gv } else { f64::INFINITY };
        }
        llt_1d(&src.axes[0], &h, &tgt.axes[0], &mut row_v, &mut row_a);
        for ix in 0..t0 {
            val[jx * t0 + ix] = row_v[ix];
            let i = row_a[ix];
            arg[jx * t0 + ix] = if i == usize::MAX {
                usize::MAX
            } else {
                gj[i * t1 + jx] * s0 + i
            };
        }
    }
    (val, arg)
}

/// Largest amount by which `f` rises above its convex envelope along grid lines (rows, columns
/// and, on square uniform grids, diagonals).
pub fn envelope_deviation(src: &TensorGrid, f: &[f64]) -> f64 {
    let line_dev = |ys: &[f64], vals: &[f64]| -> f64 {
        let env = lower_envelope_1d(ys, vals);
        vals.iter()
            .zip(&env)
            .filter(|(v, _)| v.is_finite())
            .map(|(v, e)| v - e)
            .fold(0.0, f64::max)
    };
    if src.dim() == 1 {
        return line_dev(&src.axes[0], f);
    }
    let [s0, s1] = src.shape();
    let mut dev: f64 = 0.0;
    for j in 0..s1 {
        dev = dev.max(line_dev(&src.axes[0], &f[j * s0..(j + 1) * s0]));
    }
    let mut col = vec![0.0; s1];
    for i in 0..s0 {
        for j in 0..s1 {
            col[j] = f[j * s0 + i];
        }
        dev = dev.max(line_dev(&src.axes[1], &col));
    }
    if src.axes[0] == src.axes[1] && is_uniform(&src.axes[0]) {
        for j in 1..s1 - 1 {
            for i in 1..s0 - 1 {
                let c = f[j * s0 + i];
                for (a, b) in [
                    (f[(j + 1) * s0 + i + 1], f[(j - 1) * s0 + i - 1]),
                    (f[(j + 1) * s0 + i - 1], f[(j - 1) * s0 + i + 1]),
                ] {
                    if a.is_finite() && b.is_finite() && c.is_finite() {
                        dev = dev.max(c - 0.5 * (a + b));
                    }
                }
            }
        }
    }
    dev
}

fn is_uniform(a: &[f64]) -> bool {
    if a.len() < 3 {
        return true;
    }
    let h = a[1] - a[0];
    a.windows(2).all(|w| ((w[1] - w[0]) - h).abs() < 1e-12 * h.abs().max(1.0))
}

/// Lower convex envelope of a 1D sampled function, evaluated at the samples.
fn lower_envelope_1d(ys: &[f64], f: &[f64]) -> Vec<f64> {
    let mut hull: Vec<usize> = Vec::new();
    for i in 0..ys.len() {
        if !f[i].is_finite() {
            continue;
        }
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            if (f[b] - f[a]) * (ys[i] - ys[b]) >= (f[i] - f[b]) * (ys[b] - ys[a]) {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    let mut out = vec![f64::INFINITY; ys.len()];
    for w in hull.windows(2) {
        let (a, b) = (w[0], w[1]);
        for i in a..=b {
            let t = (ys[i] - ys[a]) / (ys[b] - ys[a]);
            out[i] = (1.0 - t) * f[a] + t * f[b];
        }
    }
    if let [a] = hull[..] {
        out[a] = f[a];
    }
    out
}

fn cvx_tolerance(f: &[f64]) -> f64 {
    let (lo, hi) = f
        .iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    1e-8 * (hi - lo).max(0.0) + 1e-13 * (1.0 + hi.abs().max(lo.abs()))
}

/// Discrete Legendre transform `f*(x) = max over source nodes of (<x, y> - f(y))`.
///
/// # Errors
/// [`Error::Convexity`] if `f` deviates from its convex envelope by more than `1e-8 osc(f)`.
pub fn legendre(src: &TensorGrid, f: &[f64], tgt: &TensorGrid) -> Result<Vec<f64>> {
    if src.dim() != tgt.dim() || f.len() != src.len() {
        return Err(Error::Parameter("grid mismatch in Legendre transform".into()));
    }
    let dev = envelope_deviation(src, f);
    let tol = cvx_tolerance(f);
    if dev > tol {
        return Err(Error::Convexity(format!(
            "envelope deviation {dev:.3e} exceeds {tol:.3e}"
        )));
    }
    Ok(legendre_with_argmax(src, f, tgt).0)
}

/// Discrete convex envelope of `f` on the nodes of `src` (missing values stay `+∞`).
///
/// One dimension uses the lower hull. Two dimensions solve, per node, the linear program
/// `min Σ λ_j f_j` over convex weights with `Σ λ_j y_j = y`.
pub fn convexity_project(src: &TensorGrid, f: &[f64]) -> Vec<f64> {
    if src.dim() == 1 {
        return lower_envelope_1d(&src.axes[0], f);
    }
    let live: Vec<usize> = (0..f.len()).filter(|&i| f[i].is_finite()).collect();
    let cols: Vec<Vec<f64>> = live
        .iter()
        .map(|&i| {
            let p = src.point(i);
            vec![1.0, p[0], p[1]]
        })
        .collect();
    let c: Vec<f64> = live.iter().map(|&i| f[i]).collect();
    let mut out = vec![f64::INFINITY; f.len()];
    for &k in &live {
        let p = src.point(k);
        out[k] = match simplex_min(&c, &cols, &[1.0, p[0], p[1]]) {
            Some((v, _)) => v.min(f[k]),
            None => f[k],
        };
    }
    out
}

/// Truncated box `[-R, R]^n` of dual coordinates.
#[derive(Clone, Debug)]
pub struct DualGrid {
    pub dim: usize,
    pub radius: f64,
    pub spacing: f64,
    pub grid: TensorGrid,
}

impl DualGrid {
    /// `n` points per axis on `[-R, R]`.
    pub fn new(dim: usize, radius: f64, n: usize) -> Self {
        Self {
            dim,
            radius,
            spacing: 2.0 * radius / (n - 1) as f64,
            grid: TensorGrid::uniform(dim, -radius, radius, n),
        }
    }

    /// Smallest integer radius whose box boundary saturates the reference gradient to `tol`.
    pub fn saturating(p: &DelzantPolytope, n: usize, tol: f64) -> Self {
        let mut r = 2.0;
        while saturation(p, r) > tol && r < 200.0 {
            r += 1.0;
        }
        Self::new(p.dim, r, n)
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }
}

/// Largest facet distance of `∇φ_ref` over sample points of the boundary of `[-R, R]^n`.
pub fn saturation(p: &DelzantPolytope, r: f64) -> f64 {
    let normals = p.normals_f64();
    let mut pts: Vec<[f64; 2]> = Vec::new();
    if p.dim == 1 {
        pts.push([-r, 0.0]);
        pts.push([r, 0.0]);
    } else {
        for k in 0..=16 {
            let s = -r + 2.0 * r * k as f64 / 16.0;
            pts.extend([[s, -r], [s, r], [-r, s], [r, s]]);
        }
    }
    pts.iter()
        .map(|y| {
            let d = ref_dual(&normals, p.dim, *y);
            d.log_l.iter().cloned().fold(f64::INFINITY, f64::min).exp()
        })
        .fold(0.0, f64::max)
}

/// Relative potential `u` sampled on a dual grid, with the reference `φ_ref` alongside.
#[derive(Clone, Debug)]
pub struct KahlerGrid {
    pub dual: DualGrid,
    pub phi_ref: Vec<f64>,
    pub u: Vec<f64>,
}

impl KahlerGrid {
    /// Reference potential `u ≡ 0`.
    pub fn reference(p: &DelzantPolytope, dual: DualGrid) -> Self {
        let phi_ref = reference_kahler(p, &dual);
        let u = vec![0.0; phi_ref.len()];
        Self { dual, phi_ref, u }
    }

    /// `φ = φ_ref + u`.
    pub fn phi(&self) -> Vec<f64> {
        self.phi_ref.iter().zip(&self.u).map(|(a, b)| a + b).collect()
    }

    /// Centered finite-difference gradient and Hessian of `u` at a node.
    pub fn derivatives(&self, idx: usize) -> ([f64; 2], [f64; 3]) {
        fd_derivatives(&self.dual.grid, &self.u, idx)
    }
}

fn fd_derivatives(g: &TensorGrid, f: &[f64], idx: usize) -> ([f64; 2], [f64; 3]) {
    let [n0, n1] = g.shape();
    let (i, j) = (idx % n0, idx / n0);
    let h0 = g.axes[0][1] - g.axes[0][0];
    let at = |i: usize, j: usize| f[j * n0 + i];
    // First and second derivative along one axis, one-sided at the ends.
    let d1d2 = |k: usize, n: usize, h: f64, get: &dyn Fn(usize) -> f64| -> (f64, f64) {
        if n < 4 {
            return (0.0, 0.0);
        }
        if k == 0 {
            let (a, b, c, d) = (get(0), get(1), get(2), get(3));
            ((-3.0 * a + 4.0 * b - c) / (2.0 * h), (2.0 * a - 5.0 * b + 4.0 * c - d) / (h * h))
        } else if k == n - 1 {
            let (a, b, c, d) = (get(n - 1), get(n - 2), get(n - 3), get(n - 4));
            ((3.0 * a - 4.0 * b + c) / (2.0 * h), (2.0 * a - 5.0 * b + 4.0 * c - d) / (h * h))
        } else {
            let (a, b, c) = (get(k - 1), get(k), get(k + 1));
            ((c - a) / (2.0 * h), (a - 2.0 * b + c) / (h * h))
        }
    };
    let (g0, h00) = d1d2(i, n0, h0, &|k| at(k, j));
    if g.dim() == 1 {
        return ([g0, 0.0], [h00, 0.0, 0.0]);
    }
    let h1 = g.axes[1][1] - g.axes[1][0];
    let (g1, h11) = d1d2(j, n1, h1, &|k| at(i, k));
    // Mixed derivative: difference along axis 1 of the axis-0 derivative.
    let dx = |jj: usize| d1d2(i, n0, h0, &|k| at(k, jj)).0;
    let (h01, _) = d1d2(j, n1, h1, &dx);
    ([g0, g1], [h00, h01, h11])
}

/// `φ_ref` at the dual grid nodes.
pub fn reference_kahler(p: &DelzantPolytope, dual: &DualGrid) -> Vec<f64> {
    let normals = p.normals_f64();
    (0..dual.len())
        .map(|k| ref_dual(&normals, p.dim, dual.grid.point(k)).phi)
        .collect()
}

/// Facet margin of the region where [`involution_error`] is measured.
pub const INVOLUTION_MARGIN: f64 = 0.05;

/// `‖(φ*)* - φ‖_∞` for `φ = φ_ref` sampled on `dual`, transformed through a moment-side box with
/// `moment_n` points per axis and back onto the cell centers of `dual`, where it is compared
/// with the exact `φ_ref`.
///
/// Measured where the reference gradient has every facet distance at least
/// [`INVOLUTION_MARGIN`]; nearer the boundary the truncated box dominates the error.
pub fn involution_error(p: &DelzantPolytope, dual: &DualGrid, moment_n: usize) -> Result<f64> {
    let normals = p.normals_f64();
    let phi = reference_kahler(p, dual);
    let [lo, hi] = p.bounding_box();
    let axis = |a: f64, b: f64, n: usize| -> Vec<f64> {
        (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
    };
    let bx = TensorGrid::new(
        (0..p.dim)
            .map(|d| axis(lo[d] as f64, hi[d] as f64, moment_n))
            .collect(),
    )?;
    let star = legendre(&dual.grid, &phi, &bx)?;
    let half = 0.5 * dual.spacing;
    let centers = TensorGrid::new(
        dual.grid
            .axes
            .iter()
            .map(|a| axis(a[0] + half, a[a.len() - 1] - half, a.len() - 1))
            .collect(),
    )?;
    let back = legendre(&bx, &star, &centers)?;
    let mut worst: f64 = 0.0;
    for (k, b) in back.iter().enumerate() {
        let r = ref_dual(&normals, p.dim, centers.point(k));
        if (0..normals.len()).all(|i| p.l(i, &r.x) >= INVOLUTION_MARGIN) {
            worst = worst.max((b - r.phi).abs());
        }
    }
    Ok(worst)
}

/// Bounding-box lattice of the moment grid, with the node index of each box point.
pub fn moment_box(grid: &MomentGrid) -> (TensorGrid, Vec<Option<usize>>) {
    let [lo, hi] = grid.polytope.bounding_box();
    let m = grid.m as i64;
    let axis = |d: usize| -> Vec<i64> { (lo[d] * m..=hi[d] * m).collect() };
    let a0 = axis(0);
    let a1 = if grid.dim == 2 { axis(1) } else { vec![0] };
    let mut map = Vec::with_capacity(a0.len() * a1.len());
    for &j in &a1 {
        for &i in &a0 {
            map.push(grid.index_of([i, j]));
        }
    }
    let to_f = |a: &[i64]| a.iter().map(|&i| i as f64 * grid.h).collect::<Vec<_>>();
    let mut axes = vec![to_f(&a0)];
    if grid.dim == 2 {
        axes.push(to_f(&a1));
    }
    (TensorGrid { axes }, map)
}

/// Symplectic potential `s = s_ref + v` at the nodes.
pub fn symplectic_values(p: &PotentialField) -> Vec<f64> {
    let g = p.grid();
    (0..g.len())
        .map(|k| reference::s_ref(g.ls(k)) + p.v()[k])
        .collect()
}

/// Kähler side of a potential: `u = (s_ref + v)^* - φ_ref` on the dual grid.
///
/// The discrete transform locates the maximizing node; the value is then refined by the exact
/// reference Bregman problem with `v` replaced by its local quadratic model.
///
/// # Errors
/// [`Error::Convexity`] if `s` is not discretely convex.
pub fn to_kahler(p: &PotentialField, dual: &DualGrid) -> Result<KahlerGrid> {
    let g = p.grid();
    let normals = g.normals().to_vec();
    let (bx, map) = moment_box(g);
    let s = symplectic_values(p);
    let mut sb = vec![f64::INFINITY; bx.len()];
    for (b, k) in map.iter().enumerate() {
        if let Some(k) = k {
            sb[b] = s[*k];
        }
    }
    let dev = envelope_deviation(&bx, &sb);
    if dev > cvx_tolerance(&sb) {
        return Err(Error::Convexity(format!("symplectic potential deviates from its envelope by {dev:.3e}")));
    }
    p.check_convexity().map_err(|e| Error::Convexity(e.to_string()))?;
    let (_, arg) = legendre_with_argmax(&bx, &sb, &dual.grid);
    let jets = p.local_jets();
    let mut phi_ref = Vec::with_capacity(dual.len());
    let mut u = Vec::with_capacity(dual.len());
    let m = g.m as f64;
    for (idx, a) in arg.iter().enumerate() {
        let y = dual.grid.point(idx);
        let rd = ref_dual(&normals, g.dim, y);
        let l0: Vec<f64> = rd.log_l.iter().map(|r| r.exp()).collect();
        let mut center = map[*a].expect("argmax is a polytope node");
        let mut value = 0.0;
        for _ in 0..6 {
            let model = quad_of(&jets, p.v(), center);
            let sol = solve_face_at(&normals, g.dim, rd.x, &l0, 0, [0.0, 0.0], Some(&model));
            value = sol.value;
            let lat = [(sol.z[0] * m).round() as i64, (sol.z[1] * m).round() as i64];
            match g.index_of(lat) {
                Some(c) if c != center => center = c,
                _ => break,
            }
        }
        phi_ref.push(rd.phi);
        u.push(-value);
    }
    Ok(KahlerGrid {
        dual: dual.clone(),
        phi_ref,
        u,
    })
}

fn quad_of(jets: &[LocalJet], v: &[f64], k: usize) -> QuadModel {
    QuadModel {
        c: jets[k].x,
        val: v[k],
        g: jets[k].grad,
        h: jets[k].hess,
    }
}

/// Symplectic side of a dual-grid potential: `v = (φ_ref + u)^* - s_ref` on the moment grid.
///
/// Interior nodes are refined by Newton's method on `φ_ref(y) - <x, y> + U(y)`, with `U` the local
/// quadratic model of `u`; boundary nodes keep the discrete transform value.
///
/// # Errors
/// [`Error::Convexity`] if `φ` is not discretely convex.
pub fn to_symplectic(k: &KahlerGrid, geom: &Arc<ReferenceGeometry>) -> Result<PotentialField> {
    let g = &geom.grid;
    let normals = g.normals().to_vec();
    let phi = k.phi();
    let (bx, map) = moment_box(g);
    let dev = envelope_deviation(&k.dual.grid, &phi);
    if dev > cvx_tolerance(&phi) {
        return Err(Error::Convexity(format!("Kähler potential deviates from its envelope by {dev:.3e}")));
    }
    let (sv, arg) = legendre_with_argmax(&k.dual.grid, &phi, &bx);
    let dual = &k.dual;
    let [n0, n1] = dual.grid.shape();
    let nearest = |y: [f64; 2]| -> usize {
        let idx = |c: f64, n: usize| -> usize {
            (((c + dual.radius) / dual.spacing).round().max(0.0) as usize).min(n - 1)
        };
        let i = idx(y[0], n0);
        let j = if dual.dim == 2 { idx(y[1], n1) } else { 0 };
        j * n0 + i
    };
    let mut v = vec![0.0; g.len()];
    for (b, node) in map.iter().enumerate() {
        let Some(node) = *node else { continue };
        let x = g.coords[node];
        let l = g.ls(node);
        if g.kinds[node] != NodeKind::Interior {
            v[node] = sv[b] - reference::s_ref(l);
            continue;
        }
        let mut y = dual.grid.point(arg[b]);
        let mut center = arg[b];
        let mut s_val = sv[b];
        for _ in 0..6 {
            let (ug, uh) = k.derivatives(center);
            let yc = dual.grid.point(center);
            let uc = k.u[center];
            let model = |y: &[f64; 2]| -> (f64, [f64; 2]) {
                let d = [y[0] - yc[0], y[1] - yc[1]];
                let hd = [uh[0] * d[0] + uh[1] * d[1], uh[1] * d[0] + uh[2] * d[1]];
                (
                    uc + ug[0] * d[0] + ug[1] * d[1] + 0.5 * (d[0] * hd[0] + d[1] * hd[1]),
                    [ug[0] + hd[0], ug[1] + hd[1]],
                )
            };
            let objective = |y: &[f64; 2]| -> (f64, [f64; 2], [f64; 3]) {
                let rd = ref_dual(&normals, g.dim, *y);
                let (mv, mg) = model(y);
                (
                    rd.phi - x[0] * y[0] - x[1] * y[1] + mv,
                    [rd.x[0] - x[0] + mg[0], rd.x[1] - x[1] + mg[1]],
                    [rd.hess[0] + uh[0], rd.hess[1] + uh[1], rd.hess[2] + uh[2]],
                )
            };
            let (mut fv, mut fg, mut fh) = objective(&y);
            for _ in 0..50 {
                let step = if g.dim == 1 {
                    [-fg[0] / fh[0], 0.0]
                } else {
                    let det = fh[0] * fh[2] - fh[1] * fh[1];
                    [
                        -(fh[2] * fg[0] - fh[1] * fg[1]) / det,
                        -(-fh[1] * fg[0] + fh[0] * fg[1]) / det,
                    ]
                };
                let dec = -(fg[0] * step[0] + fg[1] * step[1]);
                if !(dec > 1e-28) {
                    break;
                }
                let mut alpha = 1.0;
                let mut moved = false;
                for _ in 0..40 {
                    let yn = [y[0] + alpha * step[0], y[1] + alpha * step[1]];
                    let (nv, ng, nh) = objective(&yn);
                    if nv <= fv - 1e-4 * alpha * dec || dec < 1e-12 {
                        y = yn;
                        fv = nv;
                        fg = ng;
                        fh = nh;
                        moved = true;
                        break;
                    }
                    alpha *= 0.5;
                }
                if !moved || dec < 1e-26 {
                    break;
                }
            }
            s_val = -fv;
            let c = nearest(y);
            if c == center {
                break;
            }
            center = c;
        }
        v[node] = s_val - reference::s_ref(l);
    }
    PotentialField::from_symplectic(geom.clone(), v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::catalog_lookup;
    use crate::potentials::random_perturbation;

    #[test]
    fn quadratic_is_self_dual() {
        for n in [201, 401] {
            let src = TensorGrid::uniform(1, -5.0, 5.0, n);
            let tgt = TensorGrid::uniform(1, -1.0, 1.0, 41);
            let f: Vec<f64> = src.axes[0].iter().map(|y| 0.5 * y * y).collect();
            let fs = legendre(&src, &f, &tgt).unwrap();
            let h = 10.0 / (n - 1) as f64;
            let err = tgt.axes[0]
                .iter()
                .zip(&fs)
                .map(|(x, v)| (v - 0.5 * x * x).abs())
                .fold(0.0, f64::max);
            assert!(err <= 0.125 * h * h + 1e-14, "{err}");
        }
    }

    #[test]
    fn abs_has_zero_transform() {
        let src = TensorGrid::uniform(1, -3.0, 3.0, 61);
        let tgt = TensorGrid::uniform(1, -1.0, 1.0, 21);
        let f: Vec<f64> = src.axes[0].iter().map(|y| y.abs()).collect();
        let fs = legendre(&src, &f, &tgt).unwrap();
        assert!(fs.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn non_convex_input_is_rejected() {
        let src = TensorGrid::uniform(1, -1.0, 1.0, 21);
        let f: Vec<f64> = src.axes[0].iter().map(|y| -y.abs()).collect();
        assert!(matches!(legendre(&src, &f, &src), Err(Error::Convexity(_))));
    }

    #[test]
    fn separable_matches_brute_force_2d() {
        let src = TensorGrid::new(vec![vec![-1.0, -0.3, 0.2, 0.9, 1.4], vec![-2.0, -0.5, 0.0, 1.0]]).unwrap();
        let tgt = TensorGrid::uniform(2, -2.0, 2.0, 7);
        let f: Vec<f64> = (0..src.len())
            .map(|k| {
                let p = src.point(k);
                p[0] * p[0] + 0.5 * p[0] * p[1] + 0.7 * p[1] * p[1] + (p[0] - p[1]).exp()
            })
            .collect();
        let (fs, arg) = legendre_with_argmax(&src, &f, &tgt);
        for t in 0..tgt.len() {
            let x = tgt.point(t);
            let best = (0..src.len())
                .map(|k| {
                    let y = src.point(k);
                    x[0] * y[0] + x[1] * y[1] - f[k]
                })
                .fold(f64::NEG_INFINITY, f64::max);
            assert!((fs[t] - best).abs() < 1e-12);
            let y = src.point(arg[t]);
            assert!((x[0] * y[0] + x[1] * y[1] - f[arg[t]] - best).abs() < 1e-12);
        }
    }

    #[test]
    fn envelope_matches_triangle_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let src = TensorGrid::uniform(2, -1.0, 1.0, 5);
        let f: Vec<f64> = (0..src.len())
            .map(|k| {
                let p = src.point(k);
                p[0] * p[0] + p[1] * p[1] + rng.gen_range(-0.3..0.3)
            })
            .collect();
        let env = convexity_project(&src, &f);
        let pts: Vec<[f64; 2]> = (0..src.len()).map(|k| src.point(k)).collect();
        for k in 0..src.len() {
            // Carathéodory: the envelope is the best interpolation over triangles containing the node.
            let y = pts[k];
            let mut best = f[k];
            for a in 0..pts.len() {
                for b in a + 1..pts.len() {
                    for c in b + 1..pts.len() {
                        let (pa, pb, pc) = (pts[a], pts[b], pts[c]);
                        let det = (pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]);
                        if det.abs() < 1e-12 {
                            continue;
                        }
                        let lb = ((y[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (y[1] - pa[1])) / det;
                        let lc = ((pb[0] - pa[0]) * (y[1] - pa[1]) - (y[0] - pa[0]) * (pb[1] - pa[1])) / det;
                        let la = 1.0 - lb - lc;
                        if la >= -1e-12 && lb >= -1e-12 && lc >= -1e-12 {
                            best = best.min(la * f[a] + lb * f[b] + lc * f[c]);
                        }
                    }
                }
            }
            assert!((env[k] - best).abs() < 1e-8, "node {k}: {} vs {best}", env[k]);
        }
        let again = convexity_project(&src, &env);
        assert!(again.iter().zip(&env).all(|(a, b)| (a - b).abs() < 1e-10));
    }

    #[test]
    fn minus_abs_envelope_is_flat() {
        let src = TensorGrid::uniform(1, -1.0, 1.0, 11);
        let f: Vec<f64> = src.axes[0].iter().map(|y| -y.abs()).collect();
        let env = convexity_project(&src, &f);
        assert!(env.iter().all(|v| (v + 1.0).abs() < 1e-14));
    }

    #[test]
    fn p1_reference_transform() {
        // (φ_ref)^* = s_ref on P1, with φ_ref(y) = 2 log cosh(y / 2).
        let p = catalog_lookup("P1").unwrap();
        let dual = DualGrid::saturating(&p, 4001, 1e-6);
        let phi = reference_kahler(&p, &dual);
        let tgt = TensorGrid::uniform(1, -0.9, 0.9, 37);
        let s = legendre(&dual.grid, &phi, &tgt).unwrap();
        let err = tgt.axes[0]
            .iter()
            .zip(&s)
            .map(|(x, v)| (v - ((1.0 + x) * (1.0 + x).ln() + (1.0 - x) * (1.0 - x).ln())).abs())
            .fold(0.0, f64::max);
        assert!(err < dual.spacing * dual.spacing, "{err}");
    }

    #[test]
    fn round_trip_is_second_order() {
        let p = catalog_lookup("P1").unwrap();
        let mut errs = Vec::new();
        for m in [16, 32] {
            let geom = ReferenceGeometry::new(&p, m).unwrap();
            let v = random_perturbation(&geom, 4, 1.0);
            let u = PotentialField::from_symplectic(geom.clone(), v.clone()).unwrap();
            let dual = DualGrid::saturating(&p, 40 * m + 1, 1e-6);
            let k = to_kahler(&u, &dual).unwrap();
            let back = to_symplectic(&k, &geom).unwrap();
            let err = (0..geom.len())
                .filter(|&i| geom.grid.kinds[i] == NodeKind::Interior)
                .map(|i| (back.v()[i] - v[i]).abs())
                .fold(0.0, f64::max);
            errs.push(err);
        }
        assert!(errs[1] < 1e-6, "{errs:?}");
    }

    #[test]
    fn reference_maps_to_zero() {
        let p = catalog_lookup("Bl1P2").unwrap();
        let geom = ReferenceGeometry::new(&p, 8).unwrap();
        let dual = DualGrid::new(2, 6.0, 25);
        let k = to_kahler(&PotentialField::zero(geom.clone()), &dual).unwrap();
        assert!(k.u.iter().all(|x| x.abs() < 1e-12));
        let c = to_kahler(&PotentialField::from_symplectic(geom.clone(), vec![0.3; geom.len()]).unwrap(), &dual).unwrap();
        assert!(c.u.iter().all(|x| (x + 0.3).abs() < 1e-12));
    }

    #[test]
    fn involution_error_is_second_order() {
        let p = catalog_lookup("P1").unwrap();
        let c: Vec<f64> = [129, 257]
            .iter()
            .map(|&n| {
                let dual = DualGrid::new(1, 15.0, n);
                involution_error(&p, &dual, n).unwrap() / dual.spacing.powi(2)
            })
            .collect();
        assert!((c[1] / c[0] - 1.0).abs() < 0.2, "{c:?}");
    }

    #[test]
    fn reference_dual_is_convex_near_vertices() {
        let p = catalog_lookup("Bl1P2").unwrap();
        let dual = DualGrid::new(2, 28.0, 57);
        let phi = reference_kahler(&p, &dual);
        assert!(envelope_deviation(&dual.grid, &phi) < 1e-7);
    }
}
