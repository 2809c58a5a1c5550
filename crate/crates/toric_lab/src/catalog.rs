//! Frozen catalog of reflexive Delzant polytopes (toric Fano manifolds of dimension 1 and 2).
//!
//! Facets are written in Fano normalization `l_i(x) = <a_i, x> + 1`, with `a_i` the inward
//! primitive normal. Vertex lists are counterclockwise and validated on construction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::MomentGrid;

pub const CATALOG_NAMES: [&str; 6] = ["P1", "P2", "P1xP1", "Bl1P2", "Bl2P2", "Bl3P2"];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Facet {
    pub normal: Vec<i64>,
    pub offset: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelzantPolytope {
    pub name: String,
    pub dim: usize,
    pub facets: Vec<Facet>,
    pub vertices: Vec<Vec<i64>>,
}

/// A nonnegative rational `num / den` in lowest terms.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Rational {
    pub num: i64,
    pub den: i64,
}

impl Rational {
    pub fn new(num: i64, den: i64) -> Self {
        assert!(den != 0);
        let g = gcd(num.abs(), den.abs()).max(1);
        let s = if den < 0 { -1 } else { 1 };
        Rational {
            num: s * num / g,
            den: s * den / g,
        }
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn facets(normals: &[[i64; 2]]) -> Vec<Facet> {
    normals
        .iter()
        .map(|a| Facet {
            normal: a.to_vec(),
            offset: 1,
        })
        .collect()
}

fn verts(v: &[[i64; 2]]) -> Vec<Vec<i64>> {
    v.iter().map(|p| p.to_vec()).collect()
}

/// Returns the frozen catalog entry, validated.
///
/// # Errors
/// Unknown names produce [`Error::Catalog`] listing the valid names.
pub fn catalog_lookup(name: &str) -> Result<DelzantPolytope> {
    let p = match name {
        "P1" => DelzantPolytope {
            name: "P1".into(),
            dim: 1,
            facets: vec![
                Facet {
                    normal: vec![1],
                    offset: 1,
                },
                Facet {
                    normal: vec![-1],
                    offset: 1,
                },
            ],
            vertices: vec![vec![-1], vec![1]],
        },
        "P2" => DelzantPolytope {
            name: "P2".into(),
            dim: 2,
            facets: facets(&[[0, 1], [-1, -1], [1, 0]]),
            vertices: verts(&[[-1, -1], [2, -1], [-1, 2]]),
        },
        "P1xP1" => DelzantPolytope {
            name: "P1xP1".into(),
            dim: 2,
            facets: facets(&[[0, 1], [-1, 0], [0, -1], [1, 0]]),
            vertices: verts(&[[-1, -1], [1, -1], [1, 1], [-1, 1]]),
        },
        // P2 with the corner at (-1,-1) cut by x1 + x2 >= -1.
        "Bl1P2" => DelzantPolytope {
            name: "Bl1P2".into(),
            dim: 2,
            facets: facets(&[[1, 1], [0, 1], [-1, -1], [1, 0]]),
            vertices: verts(&[[0, -1], [2, -1], [-1, 2], [-1, 0]]),
        },
        // Bl1P2 with the corner at (-1,2) also cut, by x2 <= 1.
        "Bl2P2" => DelzantPolytope {
            name: "Bl2P2".into(),
            dim: 2,
            facets: facets(&[[1, 1], [0, 1], [-1, -1], [0, -1], [1, 0]]),
            vertices: verts(&[[0, -1], [2, -1], [0, 1], [-1, 1], [-1, 0]]),
        },
        "Bl3P2" => DelzantPolytope {
            name: "Bl3P2".into(),
            dim: 2,
            facets: facets(&[[1, 1], [0, 1], [-1, 0], [-1, -1], [0, -1], [1, 0]]),
            vertices: verts(&[[0, -1], [1, -1], [1, 0], [0, 1], [-1, 1], [-1, 0]]),
        },
        _ => {
            return Err(Error::Catalog {
                name: name.to_string(),
                valid: CATALOG_NAMES.iter().map(|s| s.to_string()).collect(),
            })
        }
    };
    p.validate()?;
    Ok(p)
}

pub fn full_catalog() -> Vec<DelzantPolytope> {
    CATALOG_NAMES
        .iter()
        .map(|n| catalog_lookup(n).expect("frozen catalog entry is valid"))
        .collect()
}

impl DelzantPolytope {
    fn invalid(&self, reason: impl Into<String>) -> Error {
        Error::InvalidPolytope {
            name: self.name.clone(),
            reason: reason.into(),
        }
    }

    /// Integer facet value `l_i(x) = <a_i, x> + offset` at a lattice point.
    pub fn l_int(&self, i: usize, x: &[i64]) -> i64 {
        let f = &self.facets[i];
        f.normal.iter().zip(x).map(|(a, b)| a * b).sum::<i64>() + f.offset
    }

    pub fn l(&self, i: usize, x: &[f64; 2]) -> f64 {
        let f = &self.facets[i];
        let mut s = f.offset as f64;
        for (k, a) in f.normal.iter().enumerate() {
            s += *a as f64 * x[k];
        }
        s
    }

    /// Facet normals padded to two components.
    pub fn normals_f64(&self) -> Vec<[f64; 2]> {
        self.facets
            .iter()
            .map(|f| {
                let mut a = [0.0; 2];
                for (k, c) in f.normal.iter().enumerate() {
                    a[k] = *c as f64;
                }
                a
            })
            .collect()
    }

    /// Checks origin interiority, facet/vertex consistency, convexity and the Delzant condition.
    ///
    /// # Errors
    /// [`Error::InvalidPolytope`] naming the first failed check.
    pub fn validate(&self) -> Result<()> {
        if self.dim != 1 && self.dim != 2 {
            return Err(self.invalid("dimension must be 1 or 2"));
        }
        if self.facets.iter().any(|f| f.normal.len() != self.dim) {
            return Err(self.invalid("normal length differs from dim"));
        }
        if self.vertices.iter().any(|v| v.len() != self.dim) {
            return Err(self.invalid("vertex length differs from dim"));
        }
        let origin = vec![0; self.dim];
        for i in 0..self.facets.len() {
            if self.l_int(i, &origin) <= 0 {
                return Err(self.invalid(format!("origin not interior to facet {i}")));
            }
        }
        for (vi, v) in self.vertices.iter().enumerate() {
            let mut on = Vec::new();
            for i in 0..self.facets.len() {
                let l = self.l_int(i, v);
                if l < 0 {
                    return Err(self.invalid(format!("vertex {vi} violates facet {i}")));
                }
                if l == 0 {
                    on.push(i);
                }
            }
            if on.len() != self.dim {
                return Err(self.invalid(format!(
                    "vertex {vi} lies on {} facets, expected {}",
                    on.len(),
                    self.dim
                )));
            }
            let det = if self.dim == 1 {
                self.facets[on[0]].normal[0]
            } else {
                let a = &self.facets[on[0]].normal;
                let b = &self.facets[on[1]].normal;
                a[0] * b[1] - a[1] * b[0]
            };
            if det.abs() != 1 {
                return Err(self.invalid(format!("vertex {vi} fails the Delzant condition")));
            }
        }
        if self.dim == 2 {
            let n = self.vertices.len();
            if n != self.facets.len() {
                return Err(self.invalid("vertex and facet counts differ"));
            }
            for k in 0..n {
                let p = &self.vertices[k];
                let q = &self.vertices[(k + 1) % n];
                let r = &self.vertices[(k + 2) % n];
                let cross = (q[0] - p[0]) * (r[1] - q[1]) - (q[1] - p[1]) * (r[0] - q[0]);
                if cross <= 0 {
                    return Err(self.invalid("vertices not strictly convex counterclockwise"));
                }
                // Consecutive vertices must share a facet (the edge).
                let shared = (0..self.facets.len())
                    .filter(|&i| self.l_int(i, p) == 0 && self.l_int(i, q) == 0)
                    .count();
                if shared != 1 {
                    return Err(self.invalid(format!("edge {k} is not a facet")));
                }
            }
        } else if self.vertices.len() != 2 || self.facets.len() != 2 {
            return Err(self.invalid("an interval needs two vertices and two facets"));
        }
        Ok(())
    }

    /// Twice the signed area (2D) or the length (1D), exact.
    fn twice_area_int(&self) -> i64 {
        if self.dim == 1 {
            return 2 * (self.vertices[1][0] - self.vertices[0][0]).abs();
        }
        let n = self.vertices.len();
        (0..n)
            .map(|k| {
                let p = &self.vertices[k];
                let q = &self.vertices[(k + 1) % n];
                p[0] * q[1] - q[0] * p[1]
            })
            .sum()
    }

    pub fn volume_exact(&self) -> Rational {
        Rational::new(self.twice_area_int(), 2)
    }

    pub fn volume(&self) -> f64 {
        self.volume_exact().to_f64()
    }

    /// Vol(X) := n! vol(P).
    pub fn vol_x(&self) -> f64 {
        let fact = if self.dim == 2 { 2.0 } else { 1.0 };
        fact * self.volume()
    }

    /// Exact centroid of P by triangulation from vertex 0 (shoelace centroid formula).
    pub fn barycenter_exact(&self) -> Vec<Rational> {
        if self.dim == 1 {
            let s = self.vertices[0][0] + self.vertices[1][0];
            return vec![Rational::new(s, 2)];
        }
        let n = self.vertices.len();
        let (mut cx, mut cy) = (0i64, 0i64);
        for k in 0..n {
            let p = &self.vertices[k];
            let q = &self.vertices[(k + 1) % n];
            let c = p[0] * q[1] - q[0] * p[1];
            cx += (p[0] + q[0]) * c;
            cy += (p[1] + q[1]) * c;
        }
        let a2 = self.twice_area_int();
        vec![Rational::new(cx, 3 * a2), Rational::new(cy, 3 * a2)]
    }

    pub fn barycenter(&self) -> [f64; 2] {
        let b = self.barycenter_exact();
        let mut out = [0.0; 2];
        for (k, r) in b.iter().enumerate() {
            out[k] = r.to_f64();
        }
        out
    }

    pub fn contains(&self, x: &[f64; 2]) -> bool {
        (0..self.facets.len()).all(|i| self.l(i, x) >= 0.0)
    }

    /// Axis-aligned bounding box of the vertices, `[lo, hi]` per coordinate.
    pub fn bounding_box(&self) -> [[i64; 2]; 2] {
        let mut lo = [0i64; 2];
        let mut hi = [0i64; 2];
        for k in 0..self.dim {
            lo[k] = self.vertices.iter().map(|v| v[k]).min().unwrap();
            hi[k] = self.vertices.iter().map(|v| v[k]).max().unwrap();
        }
        [lo, hi]
    }

    /// `½ Σ l_i log l_i`, with the continuous extension `0 log 0 = 0` on the boundary.
    pub fn guillemin_at(&self, x: &[f64; 2]) -> Result<f64> {
        let mut g = 0.0;
        for i in 0..self.facets.len() {
            let l = self.l(i, x);
            if l < 0.0 {
                return Err(Error::Domain(format!("l_{i}({x:?}) = {l} < 0")));
            }
            if l > 0.0 {
                g += l * l.ln();
            }
        }
        Ok(0.5 * g)
    }
}

/// Samples the Guillemin potential `g_P = ½ Σ l_i log l_i` on every grid node.
///
/// # Errors
/// [`Error::Domain`] if a node has some `l_i < 0`.
pub fn guillemin_potential(p: &DelzantPolytope, grid: &MomentGrid) -> Result<Vec<f64>> {
    grid.coords.iter().map(|x| p.guillemin_at(x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_entry_validates() {
        for p in full_catalog() {
            p.validate().unwrap();
        }
    }

    #[test]
    fn unknown_name_lists_valid_names() {
        let e = catalog_lookup("P3").unwrap_err();
        let msg = e.to_string();
        for n in CATALOG_NAMES {
            assert!(msg.contains(n));
        }
    }

    #[test]
    fn trivial_volumes() {
        let p1 = catalog_lookup("P1").unwrap();
        assert_eq!(p1.volume(), 2.0);
        assert_eq!(p1.vol_x(), 2.0);
        let sq = catalog_lookup("P1xP1").unwrap();
        assert_eq!(sq.volume(), 4.0);
        assert_eq!(sq.vol_x(), 8.0);
        assert_eq!(sq.facets.len(), 4);
    }

    #[test]
    fn frozen_areas_and_centroids() {
        let cases: [(&str, (i64, i64), [(i64, i64); 2]); 5] = [
            ("P2", (9, 2), [(0, 1), (0, 1)]),
            ("P1xP1", (4, 1), [(0, 1), (0, 1)]),
            ("Bl1P2", (4, 1), [(1, 12), (1, 12)]),
            ("Bl2P2", (7, 2), [(4, 21), (-2, 21)]),
            ("Bl3P2", (3, 1), [(0, 1), (0, 1)]),
        ];
        for (name, vol, bc) in cases {
            let p = catalog_lookup(name).unwrap();
            assert_eq!(p.volume_exact(), Rational::new(vol.0, vol.1), "{name}");
            let b = p.barycenter_exact();
            assert_eq!(b[0], Rational::new(bc[0].0, bc[0].1), "{name}");
            assert_eq!(b[1], Rational::new(bc[1].0, bc[1].1), "{name}");
        }
    }

    #[test]
    fn non_ke_entries_have_nonzero_barycenter() {
        for name in ["Bl1P2", "Bl2P2"] {
            let b = catalog_lookup(name).unwrap().barycenter();
            assert!(b[0].abs() + b[1].abs() > 1e-3);
        }
    }

    #[test]
    fn guillemin_trivial_values() {
        let p1 = catalog_lookup("P1").unwrap();
        assert_eq!(p1.guillemin_at(&[0.0, 0.0]).unwrap(), 0.0);
        let g = p1.guillemin_at(&[0.5, 0.0]).unwrap();
        let want = 0.5 * (1.5 * 1.5f64.ln() + 0.5 * 0.5f64.ln());
        assert!((g - want).abs() < 1e-15);
        assert!(p1.guillemin_at(&[1.5, 0.0]).is_err());
    }

    #[test]
    fn rejects_non_delzant() {
        let mut p = catalog_lookup("P2").unwrap();
        // Normals (2,1),(-1,-1),... give det ±1 failures and break vertex incidences.
        p.facets[0].normal = vec![1, 2];
        assert!(p.validate().is_err());
    }
}
