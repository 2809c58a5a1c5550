//! Weak geodesic segments in the toric reduction and the `d_p` metrics.
//!
//! Symplectic potentials interpolate linearly along the weak geodesic, so `v_t` is affine in `t`.
//! Speeds are measured on the Kähler side: `u̇_t` at fixed dual points, by centered differences
//! of cross-evaluated potentials.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::functionals::{am, ding_f, g_alpha, k_energy};
use crate::legendre::{to_kahler, DualGrid};
use crate::potentials::{cross_difference, PotentialField, ReferenceGeometry};

/// Relative step of the centered time differences.
pub const SPEED_DT: f64 = 1e-2;
/// Largest coefficient of variation of a speed profile.
pub const MAX_SPEED_CV: f64 = 0.01;
/// Speeds below this are rounding noise of a constant segment.
pub const SPEED_FLOOR: f64 = 1e-9;

/// Weak geodesic `t ↦ u_t` on `[0, length]`.
#[derive(Clone, Debug)]
pub struct GeodesicSegment {
    pub u0: PotentialField,
    pub u1: PotentialField,
    /// Parameter range `[0, length]`.
    pub length: f64,
}

/// Speed profile `‖u̇_t‖_{p,u_t}` sampled at interior times.
#[derive(Clone, Debug, Serialize)]
pub struct SpeedProfile {
    pub p: f64,
    pub times: Vec<f64>,
    pub speeds: Vec<f64>,
    pub mean: f64,
    pub cv: f64,
}

/// Builds the segment joining `u0` and `u1` on `[0, 1]`.
///
/// # Errors
/// [`Error::Convexity`] if an endpoint is not strictly convex, [`Error::Parameter`] if the
/// endpoints live on different grids.
pub fn weak_geodesic(u0: &PotentialField, u1: &PotentialField) -> Result<GeodesicSegment> {
    if !Arc::ptr_eq(u0.geom(), u1.geom()) && u0.geom().len() != u1.geom().len() {
        return Err(Error::Parameter("endpoints live on different grids".into()));
    }
    for u in [u0, u1] {
        u.check_convexity()
            .map_err(|e| Error::Convexity(format!("endpoint: {e}")))?;
    }
    Ok(GeodesicSegment {
        u0: u0.clone(),
        u1: u1.clone(),
        length: 1.0,
    })
}

impl GeodesicSegment {
    pub fn geom(&self) -> &Arc<ReferenceGeometry> {
        self.u0.geom()
    }

    /// `u_t` for `t ∈ [0, length]`; the endpoints are returned exactly.
    pub fn evaluate(&self, t: f64) -> Result<PotentialField> {
        if !(0.0..=self.length).contains(&t) {
            return Err(Error::Parameter(format!(
                "t = {t} outside [0, {}]",
                self.length
            )));
        }
        if t == 0.0 {
            return Ok(self.u0.clone());
        }
        if t == self.length {
            return Ok(self.u1.clone());
        }
        Ok(self.interpolate(t / self.length))
    }

    /// Affine interpolation at normalized parameter `s`, allowed slightly outside `[0, 1]`.
    fn interpolate(&self, s: f64) -> PotentialField {
        let v: Vec<f64> = self
            .u0
            .v()
            .iter()
            .zip(self.u1.v())
            .map(|(a, b)| (1.0 - s) * a + s * b)
            .collect();
        PotentialField::from_symplectic(self.geom().clone(), v).unwrap()
    }

    /// `‖u̇_t‖_{p,u_t}` at `samples` equispaced interior times.
    pub fn speed_profile(&self, p: f64, samples: usize) -> Result<SpeedProfile> {
        if !(p >= 1.0) {
            return Err(Error::Parameter(format!("exponent p = {p} < 1")));
        }
        let vol = self.geom().vol;
        let ds = SPEED_DT;
        let mut times = Vec::with_capacity(samples);
        let mut speeds = Vec::with_capacity(samples);
        for j in 0..samples {
            let s = (j as f64 + 0.5) / samples as f64;
            let mid = self.interpolate(s);
            let central = |d: f64| -> Result<Vec<f64>> {
                let fwd = cross_difference(&mid, &self.interpolate(s + d))?;
                let bwd = cross_difference(&mid, &self.interpolate(s - d))?;
                let rate = 1.0 / (2.0 * d * self.length);
                Ok(fwd.iter().zip(&bwd).map(|(f, b)| (f - b) * rate).collect())
            };
            // Richardson extrapolation removes the O(ds²) term of the central difference.
            let (coarse, fine) = (central(ds)?, central(0.5 * ds)?);
            let w: Vec<f64> = coarse
                .iter()
                .zip(&fine)
                .map(|(c, f)| ((4.0 * f - c) / 3.0).abs().powf(p))
                .collect();
            times.push(s * self.length);
            speeds.push((mid.integrate_mu(&w) / vol).powf(1.0 / p));
        }
        let mean = speeds.iter().sum::<f64>() / samples as f64;
        let var = speeds.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / samples as f64;
        let cv = if mean > 0.0 { var.sqrt() / mean } else { 0.0 };
        Ok(SpeedProfile {
            p,
            times,
            speeds,
            mean,
            cv,
        })
    }

    /// Parameter-range slopes `(M, m) = (sup, inf)(u_1 - u_0) / length`.
    pub fn slopes(&self) -> (f64, f64) {
        let (mut hi, mut lo) = (f64::NEG_INFINITY, f64::INFINITY);
        for (a, b) in self.u0.v().iter().zip(self.u1.v()) {
            // sup_X (u1 - u0) = max_P (v0 - v1)
            hi = hi.max(a - b);
            lo = lo.min(a - b);
        }
        (hi / self.length, lo / self.length)
    }
}

/// `d_p(u0, u1)`: mean of the speed profile.
///
/// # Errors
/// [`Error::NonGeodesic`] if the profile varies by more than 1%.
pub fn d_p(u0: &PotentialField, u1: &PotentialField, p: f64) -> Result<f64> {
    // Canonical endpoint order makes the value bit-for-bit symmetric.
    let swap = u1
        .v()
        .iter()
        .zip(u0.v())
        .map(|(a, b)| a.total_cmp(b))
        .find(|o| o.is_ne())
        == Some(std::cmp::Ordering::Less);
    let seg = if swap { weak_geodesic(u1, u0)? } else { weak_geodesic(u0, u1)? };
    let prof = seg.speed_profile(p, 5)?;
    if prof.mean > SPEED_FLOOR && prof.cv > MAX_SPEED_CV {
        return Err(Error::NonGeodesic { cv: prof.cv });
    }
    Ok(prof.mean)
}

/// `‖v1 - v0‖_{L^p(dx / vol P)}`, the closed form of `d_p` in the toric reduction.
pub fn d_p_symplectic(u0: &PotentialField, u1: &PotentialField, p: f64) -> f64 {
    let g = u0.grid();
    let w: Vec<f64> = u0
        .v()
        .iter()
        .zip(u1.v())
        .map(|(a, b)| (a - b).abs().powf(p))
        .collect();
    g.mean(&w).powf(1.0 / p)
}

/// Slopes `(M_u, m_u)` with their constancy verified on five parameter pairs.
///
/// # Errors
/// [`Error::Evaluation`] if `sup(u_a - u_b)/(a - b)` or the inf analogue varies by more than
/// `1e-3 osc(u_1 - u_0)`.
pub fn endpoint_slopes(seg: &GeodesicSegment) -> Result<(f64, f64)> {
    let (mm, ml) = seg.slopes();
    let osc = (mm - ml) * seg.length;
    let pairs = [(0.0, 1.0), (0.2, 0.5), (0.1, 0.9), (0.5, 0.75), (0.3, 0.35)];
    for (b, a) in pairs {
        let ua = seg.interpolate(a);
        let ub = seg.interpolate(b);
        let (mut hi, mut lo) = (f64::NEG_INFINITY, f64::INFINITY);
        for (x, y) in ub.v().iter().zip(ua.v()) {
            hi = hi.max(x - y);
            lo = lo.min(x - y);
        }
        let dt = (a - b) * seg.length;
        let tol = 1e-3 * osc.max(1e-12) / dt;
        if (hi / dt - mm).abs() > tol || (lo / dt - ml).abs() > tol {
            return Err(Error::Evaluation(format!(
                "slopes vary between parameter pairs: ({}, {}) vs ({mm}, {ml})",
                hi / dt,
                lo / dt
            )));
        }
    }
    Ok((mm, ml))
}

/// Affine reparametrization of `seg` to unit `d_p` speed, on `[0, d_p]`.
pub fn unit_reparam(seg: &GeodesicSegment, p: f64) -> Result<GeodesicSegment> {
    let prof = seg.speed_profile(p, 5)?;
    if prof.mean > SPEED_FLOOR && prof.cv > MAX_SPEED_CV {
        return Err(Error::NonGeodesic { cv: prof.cv });
    }
    let len = prof.mean * seg.length;
    if !(len > 1e-14) {
        return Err(Error::Parameter("zero-length segment".into()));
    }
    Ok(GeodesicSegment {
        u0: seg.u0.clone(),
        u1: seg.u1.clone(),
        length: len,
    })
}

/// One row of functionals along a segment.
#[derive(Clone, Debug, Serialize)]
pub struct SegmentRow {
    pub t: f64,
    pub am: f64,
    pub ding_f: f64,
    pub k_energy: f64,
    pub g_alpha: f64,
    pub sup: f64,
    pub inf: f64,
    pub speed: f64,
}

/// Functionals at `samples + 1` equispaced times; `sup`/`inf` are of `u_t - u_0`.
pub fn segment_table(seg: &GeodesicSegment, p: f64, alpha: f64, samples: usize) -> Result<Vec<SegmentRow>> {
    let speed = seg.speed_profile(p, 3)?.mean;
    (0..=samples)
        .map(|j| {
            let t = seg.length * j as f64 / samples as f64;
            let u = seg.evaluate(t)?;
            let (mut hi, mut lo) = (f64::NEG_INFINITY, f64::INFINITY);
            for (a, b) in seg.u0.v().iter().zip(u.v()) {
                hi = hi.max(a - b);
                lo = lo.min(a - b);
            }
            Ok(SegmentRow {
                t,
                am: am(&u),
                ding_f: ding_f(&u)?,
                k_energy: k_energy(&u)?,
                g_alpha: g_alpha(&u, alpha)?,
                sup: hi,
                inf: lo,
                speed,
            })
        })
        .collect()
}

/// Space-time Monge–Ampère residual of a one-dimensional segment at its midpoint.
///
/// `det [[Φ_tt, Φ_ty], [Φ_ty, Φ_yy]]` relative to `|Φ_tt Φ_yy| + Φ_ty²`, with `Φ(t, y)` the Kähler
/// potential of `u_t` on a dual grid of spacing `dt` over `[-4, 4]`, differenced with step `dt`
/// in both variables. Maximum over the middle half of the dual grid.
pub fn space_time_residual(seg: &GeodesicSegment, dt: f64) -> Result<f64> {
    if seg.geom().grid.dim != 1 {
        return Err(Error::Parameter("space-time residual needs a one-dimensional segment".into()));
    }
    let dual = DualGrid::new(1, 4.0, (8.0 / dt).round() as usize + 1);
    let mid = 0.5 * seg.length;
    let phis = [mid - dt, mid, mid + dt]
        .iter()
        .map(|&t| Ok(to_kahler(&seg.evaluate(t)?, &dual)?.phi()))
        .collect::<Result<Vec<_>>>()?;
    let h = dual.spacing;
    let mut worst: f64 = 0.0;
    for i in (dual.len() / 4)..(3 * dual.len() / 4) {
        let ptt = (phis[2][i] - 2.0 * phis[1][i] + phis[0][i]) / (dt * dt);
        let pyy = (phis[1][i + 1] - 2.0 * phis[1][i] + phis[1][i - 1]) / (h * h);
        let pty = (phis[2][i + 1] - phis[2][i - 1] - phis[0][i + 1] + phis[0][i - 1]) / (4.0 * dt * h);
        let det = ptt * pyy - pty * pty;
        worst = worst.max(det.abs() / (ptt.abs() * pyy.abs() + pty * pty));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::catalog_lookup;
    use crate::potentials::random_perturbation;

    fn pair(name: &str, m: usize) -> (PotentialField, PotentialField) {
        let g = ReferenceGeometry::new(&catalog_lookup(name).unwrap(), m).unwrap();
        let a = PotentialField::from_symplectic(g.clone(), random_perturbation(&g, 21, 1.0)).unwrap();
        let b = PotentialField::from_symplectic(g.clone(), random_perturbation(&g, 22, 1.0)).unwrap();
        (a, b)
    }

    #[test]
    fn trivial_segments() {
        let (a, _) = pair("Bl1P2", 8);
        assert!(d_p(&a, &a, 2.0).unwrap() < 1e-9);
        let c = a.shifted(0.6);
        for p in [1.0, 2.0, 4.0] {
            assert!((d_p(&a, &c, p).unwrap() - 0.6).abs() < 1e-7);
        }
        let seg = weak_geodesic(&a, &c).unwrap();
        let (mm, ml) = endpoint_slopes(&seg).unwrap();
        assert!((mm - 0.6).abs() < 1e-12 && (ml - 0.6).abs() < 1e-12);
        let mid = seg.evaluate(0.5).unwrap();
        assert!(mid.v().iter().zip(a.v()).all(|(x, y)| (x - y + 0.3).abs() < 1e-12));
    }

    #[test]
    fn endpoints_are_exact_and_midpoint_is_the_average() {
        let (a, b) = pair("P2", 8);
        let seg = weak_geodesic(&a, &b).unwrap();
        assert_eq!(seg.evaluate(0.0).unwrap().v(), a.v());
        assert_eq!(seg.evaluate(1.0).unwrap().v(), b.v());
        let mid = seg.evaluate(0.5).unwrap();
        for k in 0..a.v().len() {
            assert!((mid.v()[k] - 0.5 * (a.v()[k] + b.v()[k])).abs() < 1e-12);
        }
        assert!(seg.evaluate(1.5).is_err());
    }

    #[test]
    fn speed_matches_closed_form() {
        let (a, b) = pair("Bl2P2", 10);
        for p in [1.0, 2.0, 4.0] {
            let seg = weak_geodesic(&a, &b).unwrap();
            let prof = seg.speed_profile(p, 5).unwrap();
            assert!(prof.cv < 1e-6, "cv {}", prof.cv);
            let closed = d_p_symplectic(&a, &b, p);
            assert!((prof.mean - closed).abs() < 1e-6 * closed, "{} vs {closed}", prof.mean);
        }
    }

    #[test]
    fn unit_reparam_domain() {
        let (a, b) = pair("P1", 32);
        let seg = weak_geodesic(&a, &b).unwrap();
        let d2 = d_p(&a, &b, 2.0).unwrap();
        let d1 = d_p(&a, &b, 1.0).unwrap();
        let r2 = unit_reparam(&seg, 2.0).unwrap();
        let r1 = unit_reparam(&seg, 1.0).unwrap();
        assert!((r2.length - d2).abs() < 1e-12);
        assert!(r2.length / r1.length >= 1.0 - 1e-12);
        let again = unit_reparam(&r2, 2.0).unwrap();
        assert!((again.length - r2.length).abs() < 1e-6 * r2.length);
        let speed = r2.speed_profile(2.0, 4).unwrap().mean;
        assert!((speed - 1.0).abs() < 1e-2);
        assert!((r1.length - d1).abs() < 1e-12);
    }

    #[test]
    fn space_time_monge_ampere_vanishes() {
        let r: Vec<f64> = [(1024, 0.4), (1024, 0.2), (1024, 0.1)]
            .iter()
            .map(|&(m, dt)| {
                let (a, b) = pair("P1", m);
                space_time_residual(&weak_geodesic(&a, &b).unwrap(), dt).unwrap()
            })
            .collect();
        assert!(r[1] < r[0] / 3.0 && r[2] < r[1] / 3.0, "{r:?}");
    }
}
