//! Reference toric geometry in symplectic coordinates.
//!
//! The reference symplectic potential is `s_ref = Σ l_i log l_i`. Its Hessian
//! `H = Σ a_i a_i^T / l_i` blows up on the boundary, but `δ = det H · Π l_i` and
//! `adj H · Π l_i` are polynomials, so `A = H^{-1}` and `Q = log det H + Σ log l_i - Σ (l_i - 1)`
//! are smooth on the closed polytope.

use crate::grid::MomentGrid;

/// `δ = det(H) Π l_i`, evaluated from facet values.
pub fn delta(normals: &[[f64; 2]], l: &[f64], dim: usize) -> f64 {
    let nf = l.len();
    if dim == 1 {
        return (0..nf)
            .map(|i| {
                let a = normals[i][0];
                a * a * prod_except(l, i, usize::MAX)
            })
            .sum();
    }
    let mut d = 0.0;
    for i in 0..nf {
        for j in (i + 1)..nf {
            let det = normals[i][0] * normals[j][1] - normals[i][1] * normals[j][0];
            if det != 0.0 {
                d += det * det * prod_except(l, i, j);
            }
        }
    }
    d
}

fn prod_except(l: &[f64], i: usize, j: usize) -> f64 {
    l.iter()
        .enumerate()
        .filter(|(k, _)| *k != i && *k != j)
        .map(|(_, v)| *v)
        .product()
}

/// `A = H^{-1}` as `[a11, a12, a22]` (in 1D only `a11` is used).
pub fn a_matrix(normals: &[[f64; 2]], l: &[f64], dim: usize) -> [f64; 3] {
    let d = delta(normals, l, dim);
    if dim == 1 {
        return [l.iter().product::<f64>() / d, 0.0, 0.0];
    }
    let mut adj = [0.0; 3];
    for (i, a) in normals.iter().enumerate() {
        let p = prod_except(l, i, usize::MAX);
        // J a = (-a2, a1)
        let (t0, t1) = (-a[1], a[0]);
        adj[0] += t0 * t0 * p;
        adj[1] += t0 * t1 * p;
        adj[2] += t1 * t1 * p;
    }
    [adj[0] / d, adj[1] / d, adj[2] / d]
}

/// `Q = log δ - Σ (l_i - 1)`; the reference Ricci potential is `Q + c_f`.
pub fn q_value(normals: &[[f64; 2]], l: &[f64], dim: usize) -> f64 {
    delta(normals, l, dim).ln() - l.iter().map(|v| v - 1.0).sum::<f64>()
}

/// `Σ l_i log l_i`, with `0 log 0 = 0`.
pub fn s_ref(l: &[f64]) -> f64 {
    l.iter().filter(|v| **v > 0.0).map(|v| v * v.ln()).sum()
}

/// Smooth convex model term added to the Bregman objective (a local quadratic of some `v`).
pub trait Model {
    /// Value, gradient and Hessian `[h11, h12, h22]` at `z`.
    fn eval(&self, z: &[f64; 2]) -> (f64, [f64; 2], [f64; 3]);
}

/// Local quadratic model of a grid function around a node.
pub struct QuadModel {
    pub c: [f64; 2],
    pub val: f64,
    pub g: [f64; 2],
    pub h: [f64; 3],
}

impl Model for QuadModel {
    fn eval(&self, z: &[f64; 2]) -> (f64, [f64; 2], [f64; 3]) {
        let d = [z[0] - self.c[0], z[1] - self.c[1]];
        let h = self.h;
        let hd = [h[0] * d[0] + h[1] * d[1], h[1] * d[0] + h[2] * d[1]];
        let val = self.val + self.g[0] * d[0] + self.g[1] * d[1] + 0.5 * (d[0] * hd[0] + d[1] * hd[1]);
        (val, [self.g[0] + hd[0], self.g[1] + hd[1]], h)
    }
}

/// Result of a face-restricted Bregman minimization.
#[derive(Clone, Debug)]
pub struct FaceSolution {
    pub z: [f64; 2],
    /// `ρ_i = log(l_i(z) / l_i(x0))`, finite for every facet (limits on the boundary).
    pub rho: Vec<f64>,
    /// Minimum value of the objective.
    pub value: f64,
    pub iterations: usize,
}

/// Minimizes `Φ(z) = Σ_i [l_i(z) log(l_i(z)/l_i(x0)) - l_i(z) + l_i(x0)] - <g, z - x0> + model(z)`
/// over the face of `P` that contains node `k0`.
///
/// With no model this is the reference Bregman problem whose minimizer satisfies
/// `∇s_ref(z) = ∇s_ref(x0) + g`. Accurate log-ratios for facets that are active or nearly
/// active at the minimizer are recovered from the stationarity equation.
pub fn solve_face(
    grid: &MomentGrid,
    k0: usize,
    g: [f64; 2],
    model: Option<&dyn Model>,
) -> FaceSolution {
    solve_face_at(
        grid.normals(),
        grid.dim,
        grid.coords[k0],
        grid.ls(k0),
        grid.active[k0],
        g,
        model,
    )
}

/// [`solve_face`] at an arbitrary point `x0` of `P` with facet values `l0`; `active0` marks the
/// facets containing `x0`.
pub fn solve_face_at(
    normals: &[[f64; 2]],
    dim: usize,
    x0: [f64; 2],
    l0: &[f64],
    active0: u32,
    g: [f64; 2],
    model: Option<&dyn Model>,
) -> FaceSolution {
    let nf = normals.len();
    let is_active = |i: usize| active0 & (1 << i) != 0;

    // Tangent basis of the face.
    let n_active = active0.count_ones() as usize;
    let basis: Vec<[f64; 2]> = if n_active >= dim {
        vec![]
    } else if dim == 1 {
        vec![[1.0, 0.0]]
    } else if n_active == 0 {
        vec![[1.0, 0.0], [0.0, 1.0]]
    } else {
        let a = normals[active0.trailing_zeros() as usize];
        vec![[-a[1], a[0]]]
    };

    let lz = |z: &[f64; 2]| -> Vec<f64> {
        normals
            .iter()
            .map(|a| a[0] * z[0] + a[1] * z[1] + 1.0)
            .collect()
    };
    let objective = |z: &[f64; 2], l: &[f64]| -> f64 {
        let mut v = 0.0;
        for i in 0..nf {
            if is_active(i) {
                continue;
            }
            v += l[i] * (l[i] / l0[i]).ln() - l[i] + l0[i];
        }
        v -= g[0] * (z[0] - x0[0]) + g[1] * (z[1] - x0[1]);
        if let Some(m) = model {
            v += m.eval(z).0;
        }
        v
    };

    let mut z = x0;
    let mut l = l0.to_vec();
    let mut val = objective(&z, &l);
    let mut iterations = 0;
    if !basis.is_empty() {
        for it in 0..200 {
            iterations = it + 1;
            // Full-space gradient and Hessian.
            let mut gr = [-g[0], -g[1]];
            let mut hs = [0.0; 3];
            for i in 0..nf {
                if is_active(i) {
                    continue;
                }
                let a = normals[i];
                let r = (l[i] / l0[i]).ln();
                gr[0] += a[0] * r;
                gr[1] += a[1] * r;
                let il = 1.0 / l[i];
                hs[0] += a[0] * a[0] * il;
                hs[1] += a[0] * a[1] * il;
                hs[2] += a[1] * a[1] * il;
            }
            if let Some(m) = model {
                let (_, mg, mh) = m.eval(&z);
                gr[0] += mg[0];
                gr[1] += mg[1];
                for c in 0..3 {
                    hs[c] += mh[c];
                }
            }
            // Reduced Newton step.
            let step: [f64; 2] = if basis.len() == 1 {
                let t = basis[0];
                let gt = gr[0] * t[0] + gr[1] * t[1];
                let htt = hs[0] * t[0] * t[0] + 2.0 * hs[1] * t[0] * t[1] + hs[2] * t[1] * t[1];
                let htt = if htt > 0.0 { htt } else { htt.abs() + 1.0 };
                let s = -gt / htt;
                [s * t[0], s * t[1]]
            } else {
                // Indefinite models get a diagonal shift.
                let tr = hs[0] + hs[2];
                let disc = (0.25 * (hs[0] - hs[2]).powi(2) + hs[1] * hs[1]).sqrt();
                let min_eig = 0.5 * tr - disc;
                if min_eig <= 1e-12 * tr.abs().max(1.0) {
                    let shift = -min_eig + 1e-6 * tr.abs().max(1.0);
                    hs[0] += shift;
                    hs[2] += shift;
                }
                let det = hs[0] * hs[2] - hs[1] * hs[1];
                [
                    -(hs[2] * gr[0] - hs[1] * gr[1]) / det,
                    -(-hs[1] * gr[0] + hs[0] * gr[1]) / det,
                ]
            };
            // A facet at rounding distance would clamp every step; slide along it instead and
            // leave its log-ratio to the stationarity solve below.
            let mut step = step;
            if basis.len() == 2 {
                for i in 0..nf {
                    let a = normals[i];
                    let dl = a[0] * step[0] + a[1] * step[1];
                    if !is_active(i) && l[i] < 1e-12 && dl < 0.0 {
                        let aa = a[0] * a[0] + a[1] * a[1];
                        step = [step[0] - dl * a[0] / aa, step[1] - dl * a[1] / aa];
                    }
                }
            }
            let decrement = -(gr[0] * step[0] + gr[1] * step[1]);
            if !(decrement > 1e-30) {
                break;
            }
            // Fraction to the boundary of the face.
            let mut alpha: f64 = 1.0;
            for i in 0..nf {
                if is_active(i) {
                    continue;
                }
                let dl = normals[i][0] * step[0] + normals[i][1] * step[1];
                if dl < 0.0 {
                    alpha = alpha.min(0.99 * l[i] / -dl);
                }
            }
            let mut accepted = false;
            for _ in 0..60 {
                let zn = [z[0] + alpha * step[0], z[1] + alpha * step[1]];
                let ln = lz(&zn);
                let ok = (0..nf).all(|i| is_active(i) || ln[i] > 0.0);
                if ok {
                    let vn = objective(&zn, &ln);
                    // Near a vertex the decrease drops below the rounding of the value.
                    let noise = 1e-14 * (1.0 + val.abs());
                    if vn <= val - 1e-4 * alpha * decrement || decrement < 1e-12 || (decrement < noise && vn <= val + noise) {
                        z = zn;
                        l = ln;
                        val = vn;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted || decrement < 1e-28 {
                break;
            }
        }
    }
    // Face points keep l_i = 0 exactly on their own facets.
    for i in 0..nf {
        if is_active(i) {
            l[i] = 0.0;
        }
    }

    // Log-ratios: direct where l_i(z) is safely positive, from stationarity otherwise.
    let mut rho = vec![0.0; nf];
    let mut near: Vec<usize> = Vec::new();
    for i in 0..nf {
        if is_active(i) || l[i] < 1e-3 {
            near.push(i);
        } else {
            rho[i] = (l[i] / l0[i]).ln();
        }
    }
    if !near.is_empty() {
        let mut rhs = g;
        if let Some(m) = model {
            let (_, mg, _) = m.eval(&z);
            rhs[0] -= mg[0];
            rhs[1] -= mg[1];
        }
        for i in 0..nf {
            if !near.contains(&i) {
                rhs[0] -= normals[i][0] * rho[i];
                rhs[1] -= normals[i][1] * rho[i];
            }
        }
        if near.len() == 1 || dim == 1 {
            for &i in &near {
                let a = normals[i];
                let aa = a[0] * a[0] + a[1] * a[1];
                rho[i] = (a[0] * rhs[0] + a[1] * rhs[1]) / aa;
            }
        } else {
            let (i, j) = (near[0], near[1]);
            let (a, b) = (normals[i], normals[j]);
            let det = a[0] * b[1] - a[1] * b[0];
            rho[i] = (rhs[0] * b[1] - rhs[1] * b[0]) / det;
            rho[j] = (a[0] * rhs[1] - a[1] * rhs[0]) / det;
        }
    }
    // Objective value with the accurate log-ratios.
    let mut value = 0.0;
    for i in 0..nf {
        value += l[i] * rho[i] - l[i] + l0[i];
    }
    value -= g[0] * (z[0] - x0[0]) + g[1] * (z[1] - x0[1]);
    if let Some(m) = model {
        value += m.eval(&z).0;
    }
    FaceSolution {
        z,
        rho,
        value,
        iterations,
    }
}

/// Reference Kähler data at a dual point `y`.
#[derive(Clone, Debug)]
pub struct RefDualPoint {
    /// `x = ∇φ_ref(y)`, the point of `P` with `∇s_ref(x) = y`.
    pub x: [f64; 2],
    /// `log l_i(x)`, accurate even when `l_i(x)` underflows relative to 1.
    pub log_l: Vec<f64>,
    pub phi: f64,
    /// `D²φ_ref(y) = A(x)`.
    pub hess: [f64; 3],
}

/// Evaluates the reference Kähler potential `φ_ref = s_ref^*` at `y`.
pub fn ref_dual(normals: &[[f64; 2]], dim: usize, y: [f64; 2]) -> RefDualPoint {
    let nf = normals.len();
    let ones = vec![1.0; nf];
    // ∇s_ref(0) = Σ a_i.
    let mut g = y;
    for a in normals {
        g[0] -= a[0];
        g[1] -= a[1];
    }
    if dim == 1 {
        g[1] = 0.0;
    }
    let sol = solve_face_at(normals, dim, [0.0, 0.0], &ones, 0, g, None);
    let x = sol.z;
    let l: Vec<f64> = sol.rho.iter().map(|r| r.exp()).collect();
    let phi = x[0] * y[0] + x[1] * y[1] - l.iter().zip(&sol.rho).map(|(l, r)| l * r).sum::<f64>();
    RefDualPoint {
        x,
        hess: a_matrix(normals, &l, dim),
        log_l: sol.rho,
        phi,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{catalog_lookup, full_catalog};
    use crate::grid::NodeKind;

    #[test]
    fn p1_closed_forms() {
        let p = catalog_lookup("P1").unwrap();
        let n = p.normals_f64();
        for &x in &[-0.9, -0.3, 0.0, 0.4, 0.99] {
            let l = [1.0 + x, 1.0 - x];
            assert!((delta(&n, &l, 1) - 2.0).abs() < 1e-14);
            assert!((a_matrix(&n, &l, 1)[0] - (1.0 - x * x) / 2.0).abs() < 1e-14);
            assert!((q_value(&n, &l, 1) - 2f64.ln()).abs() < 1e-14);
        }
    }

    #[test]
    fn a_is_inverse_hessian_inside() {
        for p in full_catalog().into_iter().filter(|p| p.dim == 2) {
            let n = p.normals_f64();
            let b = p.barycenter();
            let x = [0.5 * b[0] + 0.1, 0.5 * b[1] - 0.05];
            let l: Vec<f64> = (0..n.len()).map(|i| p.l(i, &x)).collect();
            let mut h = [0.0; 3];
            for (i, a) in n.iter().enumerate() {
                h[0] += a[0] * a[0] / l[i];
                h[1] += a[0] * a[1] / l[i];
                h[2] += a[1] * a[1] / l[i];
            }
            let a = a_matrix(&n, &l, 2);
            let i11 = a[0] * h[0] + a[1] * h[1];
            let i12 = a[0] * h[1] + a[1] * h[2];
            let i22 = a[1] * h[1] + a[2] * h[2];
            assert!((i11 - 1.0).abs() < 1e-12 && i12.abs() < 1e-12 && (i22 - 1.0).abs() < 1e-12);
            let det = h[0] * h[2] - h[1] * h[1];
            let prod: f64 = l.iter().product();
            assert!((delta(&n, &l, 2) - det * prod).abs() < 1e-10 * det * prod);
        }
    }

    #[test]
    fn face_solution_inverts_reference_gradient() {
        for p in full_catalog() {
            let grid = MomentGrid::new(&p, 6).unwrap();
            let n = grid.normals().to_vec();
            for k in (0..grid.len()).step_by(3) {
                if grid.kinds[k] != NodeKind::Interior {
                    continue;
                }
                let g = [0.7, if p.dim == 2 { -1.3 } else { 0.0 }];
                let sol = solve_face(&grid, k, g, None);
                // Σ a_i ρ_i = g
                let mut r = [0.0; 2];
                for (i, a) in n.iter().enumerate() {
                    r[0] += a[0] * sol.rho[i];
                    r[1] += a[1] * sol.rho[i];
                }
                assert!((r[0] - g[0]).abs() < 1e-9 && (r[1] - g[1]).abs() < 1e-9, "{} {k} {r:?} {sol:?}", p.name);
            }
        }
    }

    #[test]
    fn p1_reference_dual_closed_form() {
        let n = catalog_lookup("P1").unwrap().normals_f64();
        for y in [-18.0, -3.0, -0.2, 0.0, 1.5, 25.0] {
            let d = ref_dual(&n, 1, [y, 0.0]);
            let phi = 2.0 * (0.5 * y).cosh().ln();
            assert!((d.phi - phi).abs() < 1e-10 * (1.0 + phi.abs()), "{y}: {} {phi}", d.phi);
            assert!((d.x[0] - (0.5 * y).tanh()).abs() < 1e-12);
            let sech2 = 1.0 / (0.5 * y).cosh().powi(2);
            assert!((d.hess[0] - 0.5 * sech2).abs() < 1e-8 * sech2 + 1e-15);
        }
    }

    #[test]
    fn large_drift_keeps_log_ratios() {
        let p = catalog_lookup("Bl1P2").unwrap();
        let grid = MomentGrid::new(&p, 6).unwrap();
        let n = grid.normals().to_vec();
        let k = (0..grid.len())
            .find(|&k| grid.kinds[k] == NodeKind::Interior)
            .unwrap();
        for scale in [5.0, 20.0, 40.0] {
            let g = [-scale, -scale];
            let sol = solve_face(&grid, k, g, None);
            let mut r = [0.0; 2];
            for (i, a) in n.iter().enumerate() {
                r[0] += a[0] * sol.rho[i];
                r[1] += a[1] * sol.rho[i];
            }
            assert!((r[0] - g[0]).abs() < 1e-8 * scale, "{scale}: {r:?}");
            assert!((r[1] - g[1]).abs() < 1e-8 * scale, "{scale}: {r:?}");
        }
    }
}
