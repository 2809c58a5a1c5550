//! Lattice grid on the closed moment polytope.
//!
//! Nodes are the points of `h Z^n` inside `P`, with `h = 1/m`. Every catalog polygon has edges
//! along `e1`, `e2` and `e1 - e2`, so `P` is exactly a union of triangles of the lattice
//! triangulation and boundary nodes sit exactly on the facets.

use crate::catalog::DelzantPolytope;
use crate::error::{Error, Result};

/// Position of a node relative to the boundary.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Interior,
    /// On the relative interior of an edge, with lattice tangent `t`.
    Edge { facet: usize, t: [i64; 2] },
    Vertex,
}

/// Linear stencil: `sum(w * f[node])`.
pub type Stencil = Vec<(usize, f64)>;

#[derive(Clone, Debug)]
pub struct MomentGrid {
    pub polytope: DelzantPolytope,
    pub dim: usize,
    pub m: usize,
    pub h: f64,
    /// Minimum facet distance of the nodes; the grid includes the boundary.
    pub margin: f64,
    pub lattice: Vec<[i64; 2]>,
    pub coords: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub kinds: Vec<NodeKind>,
    /// Facet values `l_i` per node, row-major `[node * nf + i]`.
    pub lvals: Vec<f64>,
    /// Bitmask of facets with `l_i = 0` per node.
    pub active: Vec<u32>,
    /// Gradient stencils: `grad f = sum over entries of (f[node] * [wx, wy])`.
    pub grad: Vec<Vec<(usize, [f64; 2])>>,
    /// Interior Hessian stencils: entries `(node, [c11, c12, c22])`.
    pub hess: Vec<Vec<(usize, [f64; 3])>>,
    /// Second difference along the edge tangent, for edge nodes.
    pub tangent2: Vec<Stencil>,
    normals: Vec<[f64; 2]>,
    box_lo: [i64; 2],
    box_n: [usize; 2],
    index: Vec<usize>,
}

const NONE: usize = usize::MAX;

impl MomentGrid {
    /// Builds the grid with `m` cells per unit lattice length.
    ///
    /// # Errors
    /// [`Error::Parameter`] if `m < 4`.
    pub fn new(polytope: &DelzantPolytope, m: usize) -> Result<Self> {
        if m < 4 {
            return Err(Error::Parameter(format!("grid resolution m = {m} < 4")));
        }
        let dim = polytope.dim;
        let mi = m as i64;
        let [lo, hi] = polytope.bounding_box();
        let box_lo = [lo[0] * mi, if dim == 2 { lo[1] * mi } else { 0 }];
        let box_n = [
            ((hi[0] - lo[0]) * mi + 1) as usize,
            if dim == 2 {
                ((hi[1] - lo[1]) * mi + 1) as usize
            } else {
                1
            },
        ];
        let nf = polytope.facets.len();
        let mut index = vec![NONE; box_n[0] * box_n[1]];
        let mut lattice = Vec::new();
        let mut lnum = Vec::new();
        for j in 0..box_n[1] {
            for i in 0..box_n[0] {
                let p = [box_lo[0] + i as i64, box_lo[1] + j as i64];
                let ls: Vec<i64> = (0..nf).map(|f| facet_num(polytope, f, &p, mi)).collect();
                if ls.iter().all(|&l| l >= 0) {
                    index[j * box_n[0] + i] = lattice.len();
                    lattice.push(p);
                    lnum.extend(ls);
                }
            }
        }
        let h = 1.0 / m as f64;
        let coords: Vec<[f64; 2]> = lattice
            .iter()
            .map(|p| [p[0] as f64 * h, p[1] as f64 * h])
            .collect();
        let lvals: Vec<f64> = lnum.iter().map(|&l| l as f64 * h).collect();
        let active: Vec<u32> = (0..lattice.len())
            .map(|k| {
                (0..nf).fold(0u32, |acc, f| {
                    if lnum[k * nf + f] == 0 {
                        acc | (1 << f)
                    } else {
                        acc
                    }
                })
            })
            .collect();
        let mut g = MomentGrid {
            polytope: polytope.clone(),
            dim,
            m,
            h,
            margin: 0.0,
            lattice,
            coords,
            weights: Vec::new(),
            kinds: Vec::new(),
            lvals,
            active,
            grad: Vec::new(),
            hess: Vec::new(),
            tangent2: Vec::new(),
            normals: polytope.normals_f64(),
            box_lo,
            box_n,
            index,
        };
        g.kinds = (0..g.len()).map(|k| g.classify(k)).collect();
        g.weights = g.build_weights();
        g.grad = (0..g.len()).map(|k| g.build_grad(k)).collect::<Result<_>>()?;
        g.hess = (0..g.len()).map(|k| g.build_hess(k)).collect();
        g.tangent2 = (0..g.len()).map(|k| g.build_tangent2(k)).collect();
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.lattice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lattice.is_empty()
    }

    pub fn n_facets(&self) -> usize {
        self.normals.len()
    }

    pub fn normals(&self) -> &[[f64; 2]] {
        &self.normals
    }

    pub fn l(&self, k: usize, i: usize) -> f64 {
        self.lvals[k * self.normals.len() + i]
    }

    pub fn ls(&self, k: usize) -> &[f64] {
        let nf = self.normals.len();
        &self.lvals[k * nf..(k + 1) * nf]
    }

    pub fn vol_p(&self) -> f64 {
        self.polytope.volume()
    }

    pub fn vol_x(&self) -> f64 {
        self.polytope.vol_x()
    }

    pub fn index_of(&self, p: [i64; 2]) -> Option<usize> {
        let i = p[0] - self.box_lo[0];
        let j = p[1] - self.box_lo[1];
        if i < 0 || j < 0 || i as usize >= self.box_n[0] || j as usize >= self.box_n[1] {
            return None;
        }
        let k = self.index[j as usize * self.box_n[0] + i as usize];
        (k != NONE).then_some(k)
    }

    pub fn neighbor(&self, k: usize, d: [i64; 2], steps: i64) -> Option<usize> {
        let p = self.lattice[k];
        self.index_of([p[0] + steps * d[0], p[1] + steps * d[1]])
    }

    /// Quadrature `∫_P f dx` with lumped piecewise-linear weights.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.len());
        f.iter().zip(&self.weights).map(|(a, w)| a * w).sum()
    }

    /// Normalized average `(1/vol P) ∫_P f dx`.
    pub fn mean(&self, f: &[f64]) -> f64 {
        self.integrate(f) / self.vol_p()
    }

    fn classify(&self, k: usize) -> NodeKind {
        let a = self.active[k];
        match a.count_ones() {
            0 => NodeKind::Interior,
            1 if self.dim == 2 => {
                let facet = a.trailing_zeros() as usize;
                let n = &self.polytope.facets[facet].normal;
                NodeKind::Edge {
                    facet,
                    t: [-n[1], n[0]],
                }
            }
            _ => NodeKind::Vertex,
        }
    }

    fn build_weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.len()];
        let h = self.h;
        if self.dim == 1 {
            for k in 0..self.len() {
                if let Some(r) = self.neighbor(k, [1, 0], 1) {
                    w[k] += 0.5 * h;
                    w[r] += 0.5 * h;
                }
            }
            return w;
        }
        // Each lattice square splits along its anti-diagonal into two triangles of area h^2/2.
        let c = h * h / 6.0;
        for j in 0..self.box_n[1] as i64 {
            for i in 0..self.box_n[0] as i64 {
                let p = [self.box_lo[0] + i, self.box_lo[1] + j];
                let a = self.index_of(p);
                let r = self.index_of([p[0] + 1, p[1]]);
                let u = self.index_of([p[0], p[1] + 1]);
                let d = self.index_of([p[0] + 1, p[1] + 1]);
                for tri in [[a, r, u], [r, d, u]] {
                    if let [Some(x), Some(y), Some(z)] = tri {
                        w[x] += c;
                        w[y] += c;
                        w[z] += c;
                    }
                }
            }
        }
        w
    }

    /// Directional derivative stencil along lattice vector `d`, with a quality rank.
    fn dir_stencil(&self, k: usize, d: [i64; 2]) -> (u8, Stencil) {
        let h = self.h;
        let f1 = self.neighbor(k, d, 1);
        let b1 = self.neighbor(k, d, -1);
        if let (Some(f), Some(b)) = (f1, b1) {
            return (3, vec![(f, 0.5 / h), (b, -0.5 / h)]);
        }
        if let Some(f) = f1 {
            if let Some(f2) = self.neighbor(k, d, 2) {
                return (2, vec![(k, -1.5 / h), (f, 2.0 / h), (f2, -0.5 / h)]);
            }
            return (1, vec![(k, -1.0 / h), (f, 1.0 / h)]);
        }
        if let Some(b) = b1 {
            if let Some(b2) = self.neighbor(k, d, -2) {
                return (2, vec![(k, 1.5 / h), (b, -2.0 / h), (b2, 0.5 / h)]);
            }
            return (1, vec![(k, 1.0 / h), (b, -1.0 / h)]);
        }
        (0, Vec::new())
    }

    fn build_grad(&self, k: usize) -> Result<Vec<(usize, [f64; 2])>> {
        if self.dim == 1 {
            let (q, s) = self.dir_stencil(k, [1, 0]);
            if q == 0 {
                return Err(Error::Parameter("isolated grid node".into()));
            }
            return Ok(s.into_iter().map(|(n, w)| (n, [w, 0.0])).collect());
        }
        let dirs: [[i64; 2]; 4] = [[1, 0], [0, 1], [1, -1], [1, 1]];
        let st: Vec<(u8, Stencil)> = dirs.iter().map(|&d| self.dir_stencil(k, d)).collect();
        let mut best: Option<(usize, usize, (u8, u8))> = None;
        for a in 0..4 {
            for b in (a + 1)..4 {
                let (qa, qb) = (st[a].0, st[b].0);
                if qa == 0 || qb == 0 {
                    continue;
                }
                let score = (qa.min(qb), qa + qb);
                if best.is_none_or(|(_, _, s)| score > s) {
                    best = Some((a, b, score));
                }
            }
        }
        let (a, b, _) = best.ok_or_else(|| Error::Parameter("no gradient stencil".into()))?;
        // Solve [da; db] g = [Da; Db] for g.
        let (da, db) = (dirs[a], dirs[b]);
        let det = (da[0] * db[1] - da[1] * db[0]) as f64;
        let inv = [
            [db[1] as f64 / det, -da[1] as f64 / det],
            [-db[0] as f64 / det, da[0] as f64 / det],
        ];
        let mut out: Vec<(usize, [f64; 2])> = Vec::new();
        for (n, w) in &st[a].1 {
            out.push((*n, [inv[0][0] * w, inv[1][0] * w]));
        }
        for (n, w) in &st[b].1 {
            out.push((*n, [inv[0][1] * w, inv[1][1] * w]));
        }
        Ok(out)
    }

    fn second_diff(&self, k: usize, d: [i64; 2]) -> Option<Stencil> {
        let ih2 = 1.0 / (self.h * self.h);
        let f = self.neighbor(k, d, 1)?;
        let b = self.neighbor(k, d, -1)?;
        Some(vec![(f, ih2), (k, -2.0 * ih2), (b, ih2)])
    }

    fn build_hess(&self, k: usize) -> Vec<(usize, [f64; 3])> {
        if self.kinds[k] != NodeKind::Interior {
            return Vec::new();
        }
        if self.dim == 1 {
            return self
                .second_diff(k, [1, 0])
                .unwrap()
                .into_iter()
                .map(|(n, w)| (n, [w, 0.0, 0.0]))
                .collect();
        }
        // H12 = (D11 + D22 - Ddd) / 2 with d = e1 - e2; all six neighbours lie in P.
        let d11 = self.second_diff(k, [1, 0]).expect("interior node");
        let d22 = self.second_diff(k, [0, 1]).expect("interior node");
        let ddd = self.second_diff(k, [1, -1]).expect("interior node");
        let mut out = Vec::new();
        for (n, w) in d11 {
            out.push((n, [w, 0.5 * w, 0.0]));
        }
        for (n, w) in d22 {
            out.push((n, [0.0, 0.5 * w, w]));
        }
        for (n, w) in ddd {
            out.push((n, [0.0, -0.5 * w, 0.0]));
        }
        out
    }

    fn build_tangent2(&self, k: usize) -> Stencil {
        match self.kinds[k] {
            NodeKind::Edge { t, .. } => self.second_diff(k, t).unwrap_or_default(),
            _ => Vec::new(),
        }
    }

    pub fn apply_grad(&self, k: usize, f: &[f64]) -> [f64; 2] {
        let mut g = [0.0; 2];
        for (n, w) in &self.grad[k] {
            g[0] += w[0] * f[*n];
            g[1] += w[1] * f[*n];
        }
        g
    }

    /// Symmetric Hessian `[h11, h12, h22]` at an interior node.
    pub fn apply_hess(&self, k: usize, f: &[f64]) -> [f64; 3] {
        let mut h = [0.0; 3];
        for (n, w) in &self.hess[k] {
            for c in 0..3 {
                h[c] += w[c] * f[*n];
            }
        }
        h
    }

    pub fn apply_tangent2(&self, k: usize, f: &[f64]) -> f64 {
        self.tangent2[k].iter().map(|(n, w)| w * f[*n]).sum()
    }
}

fn facet_num(p: &DelzantPolytope, i: usize, lat: &[i64; 2], m: i64) -> i64 {
    let f = &p.facets[i];
    let mut s = f.offset * m;
    for (k, a) in f.normal.iter().enumerate() {
        s += a * lat[k];
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{catalog_lookup, full_catalog};

    #[test]
    fn weights_sum_to_volume() {
        for p in full_catalog() {
            let g = MomentGrid::new(&p, 8).unwrap();
            let s: f64 = g.weights.iter().sum();
            assert!((s - p.volume()).abs() < 1e-12, "{}: {s}", p.name);
        }
    }

    #[test]
    fn quadrature_exact_for_affine() {
        for p in full_catalog() {
            let g = MomentGrid::new(&p, 6).unwrap();
            let f: Vec<f64> = g.coords.iter().map(|x| 1.0 + 2.0 * x[0] - 0.5 * x[1]).collect();
            let b = p.barycenter();
            let want = p.volume() * (1.0 + 2.0 * b[0] - 0.5 * b[1]);
            assert!((g.integrate(&f) - want).abs() < 1e-12, "{}", p.name);
        }
    }

    #[test]
    fn stencils_exact_on_quadratics() {
        for p in full_catalog() {
            let g = MomentGrid::new(&p, 8).unwrap();
            let f: Vec<f64> = g
                .coords
                .iter()
                .map(|x| 0.3 * x[0] * x[0] - 0.7 * x[0] * x[1] + 1.1 * x[1] * x[1] + x[0])
                .collect();
            for k in 0..g.len() {
                let x = g.coords[k];
                let gr = g.apply_grad(k, &f);
                let want = if p.dim == 2 {
                    [0.6 * x[0] - 0.7 * x[1] + 1.0, -0.7 * x[0] + 2.2 * x[1]]
                } else {
                    [0.6 * x[0] + 1.0, 0.0]
                };
                let tol = 1e-9;
                assert!((gr[0] - want[0]).abs() < tol, "{} node {k}", p.name);
                assert!((gr[1] - want[1]).abs() < tol, "{} node {k}", p.name);
                if g.kinds[k] == NodeKind::Interior {
                    let hs = g.apply_hess(k, &f);
                    if p.dim == 2 {
                        assert!((hs[0] - 0.6).abs() < 1e-8);
                        assert!((hs[1] + 0.7).abs() < 1e-8);
                        assert!((hs[2] - 2.2).abs() < 1e-8);
                    } else {
                        assert!((hs[0] - 0.6).abs() < 1e-8);
                    }
                }
            }
        }
    }

    #[test]
    fn boundary_nodes_on_facets() {
        let p = catalog_lookup("Bl1P2").unwrap();
        let g = MomentGrid::new(&p, 5).unwrap();
        let n_edge = g.kinds.iter().filter(|k| matches!(k, NodeKind::Edge { .. })).count();
        let n_vert = g.kinds.iter().filter(|k| **k == NodeKind::Vertex).count();
        assert_eq!(n_vert, 4);
        // Perimeter in lattice lengths: 2 + 3 + 2 + 1 = 8, with m nodes per unit.
        assert_eq!(n_edge + n_vert, 8 * 5);
    }
}
