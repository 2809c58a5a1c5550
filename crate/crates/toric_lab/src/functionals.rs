//! Energy functionals on torus-invariant potentials.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::potentials::{cross_difference, PotentialField, ReferenceGeometry};

/// `((1/Vol) ∫ |ξ|^p ω_u^n)^{1/p}` for `ξ` given at the image points of the nodes.
pub fn finsler_norm(xi: &[f64], u: &PotentialField, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::Parameter(format!("Finsler exponent p = {p} < 1")));
    }
    if xi.len() != u.geom().len() {
        return Err(Error::Parameter("tangent vector has wrong length".into()));
    }
    let scale = xi.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if scale == 0.0 {
        return Ok(0.0);
    }
    let w: Vec<f64> = xi.iter().map(|x| (x.abs() / scale).powf(p)).collect();
    Ok(scale * (u.integrate_mu(&w) / u.geom().vol).powf(1.0 / p))
}

/// Aubin–Mabuchi energy, `-(1/vol P) ∫_P v dx`.
pub fn am(u: &PotentialField) -> f64 {
    -u.grid().mean(u.v())
}

/// `u - AM(u)`.
pub fn am_normalize(u: &PotentialField) -> PotentialField {
    u.shifted(-am(u))
}

/// Ding functional `F(u) = -AM(u) - log ∫ e^{-u + f_ω} ω^n`.
pub fn ding_f(u: &PotentialField) -> Result<f64> {
    Ok(-am(u) - u.log_z()?)
}

/// Entropy `∫ log(ω_u^n / ω^n) ω_u^n`.
pub fn entropy(u: &PotentialField) -> Result<f64> {
    let d = u.data()?;
    Ok(u.integrate_mu(&d.log_ratio))
}

/// `∫ f_ω ω^n` at the reference.
pub fn f_ref_integral(geom: &ReferenceGeometry) -> f64 {
    geom.scale() * geom.grid.integrate(&geom.f_ref())
}

/// `L(u) = Σ_j ∫ u Ric ω ∧ ω_u^j ∧ ω^{n-1-j}`.
///
/// Uses `L(u) = (n+1) Vol AM(u) - ∫ u ω_u^n + ∫ f_ω ω_u^n - ∫ f_ω ω^n`.
pub fn l_func(u: &PotentialField) -> Result<f64> {
    let geom = u.geom();
    let n = geom.grid.dim as f64;
    let d = u.data()?;
    Ok((n + 1.0) * geom.vol * am(u) - u.integrate_mu(&d.u) + u.integrate_mu(&d.f)
        - f_ref_integral(geom))
}

/// `M(u) = n AM(u) - L(u) + H(u)`.
pub fn k_energy(u: &PotentialField) -> Result<f64> {
    let n = u.grid().dim as f64;
    Ok(n * am(u) - l_func(u)? + entropy(u)?)
}

/// `(∫ |u0 - u1|^p ω_{u0}^n)^{1/p} + (∫ |u0 - u1|^p ω_{u1}^n)^{1/p}`.
pub fn i_p(u0: &PotentialField, u1: &PotentialField, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::Parameter(format!("exponent p = {p} < 1")));
    }
    let side = |a: &PotentialField, b: &PotentialField| -> Result<f64> {
        let d = cross_difference(a, b)?;
        let w: Vec<f64> = d.iter().map(|x| x.abs().powf(p)).collect();
        Ok(a.integrate_mu(&w).powf(1.0 / p))
    };
    Ok(side(u0, u1)? + side(u1, u0)?)
}

/// `G_α(u) = -log ∫ e^{-α(u - sup u) + f_ω} ω^n`.
pub fn g_alpha(u: &PotentialField, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Parameter(format!("α = {alpha} outside (0, 1)")));
    }
    Ok(-u.log_exp_integral(alpha)?)
}

/// Ricci potential of `ω_u`, normalized by `∫ e^{f} ω_u^n = 1`.
pub fn f_omega_u(u: &PotentialField) -> Result<Vec<f64>> {
    u.ricci_potential()
}

/// Reference Ricci potential `f_ω` at the nodes.
pub fn ricci_potential_ref(geom: &ReferenceGeometry) -> Vec<f64> {
    geom.f_ref()
}

/// H-functional and ε-integrand of `f = f_{ω_u}`:
/// `(∫ f e^f ω_u^n + log Vol, ∫ f (e^f - 1/Vol) ω_u^n)`.
///
/// With `Vol = 1` these are `∫ f e^f ω_u^n` and `∫ f (e^f - 1) ω_u^n`. Both vanish exactly when
/// `f` is constant, and the second is `-dF/dt` along the Kähler–Ricci flow.
pub fn h_and_eps(u: &PotentialField) -> Result<(f64, f64)> {
    let f = f_omega_u(u)?;
    let vol = u.geom().vol;
    let h: Vec<f64> = f.iter().map(|x| x * x.exp()).collect();
    let e: Vec<f64> = f.iter().map(|x| x * (x.exp() - 1.0 / vol)).collect();
    Ok((u.integrate_mu(&h) + vol.ln(), u.integrate_mu(&e)))
}

/// Column schema version of [`FunctionalLedger`] rows.
pub const LEDGER_VERSION: u32 = 1;

/// Functionals of one potential; `i_*` are measured from the reference `u = 0`.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct FunctionalLedger {
    pub label: String,
    pub am: f64,
    pub ding_f: f64,
    pub k_energy: f64,
    pub entropy: f64,
    pub l: f64,
    pub sup: f64,
    pub inf: f64,
    pub i_1: f64,
    pub i_2: f64,
    pub g_half: f64,
    pub g_critical: f64,
    pub h_functional: f64,
    pub eps_integrand: f64,
}

impl FunctionalLedger {
    pub fn evaluate(label: &str, u: &PotentialField) -> Result<Self> {
        let n = u.grid().dim as f64;
        let zero = PotentialField::zero(u.geom().clone());
        let a = am(u);
        let l = l_func(u)?;
        let h = entropy(u)?;
        let (hf, eps) = h_and_eps(u)?;
        Ok(Self {
            label: label.to_string(),
            am: a,
            ding_f: ding_f(u)?,
            // Recomputed from its parts.
            k_energy: n * a - l + h,
            entropy: h,
            l,
            sup: u.sup(),
            inf: u.inf(),
            i_1: i_p(&zero, u, 1.0)?,
            i_2: i_p(&zero, u, 2.0)?,
            g_half: g_alpha(u, 0.5)?,
            g_critical: g_alpha(u, n / (n + 1.0))?,
            h_functional: hf,
            eps_integrand: eps,
        })
    }

    /// Writes rows as CSV with a header line.
    pub fn write_csv<W: std::io::Write>(rows: &[Self], w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for r in rows {
            wr.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
        }
        wr.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{catalog_lookup, full_catalog};
    use crate::legendre::{to_kahler, DualGrid};
    use crate::potentials::random_perturbation;

    fn field(name: &str, m: usize, seed: u64) -> PotentialField {
        let g = ReferenceGeometry::new(&catalog_lookup(name).unwrap(), m).unwrap();
        let v = random_perturbation(&g, seed, 1.0);
        PotentialField::from_symplectic(g, v).unwrap()
    }

    #[test]
    fn trivial_values() {
        for p in full_catalog() {
            let g = ReferenceGeometry::new(&p, 6).unwrap();
            let n = p.dim as f64;
            let z = PotentialField::zero(g.clone());
            assert_eq!(am(&z), 0.0);
            assert!(ding_f(&z).unwrap().abs() < 1e-12);
            assert!(entropy(&z).unwrap().abs() < 1e-12);
            assert!(l_func(&z).unwrap().abs() < 1e-12);
            assert!(k_energy(&z).unwrap().abs() < 1e-12);
            assert!(g_alpha(&z, 0.7).unwrap().abs() < 1e-12);
            let c = PotentialField::constant(g.clone(), 1.7);
            assert!((am(&c) - 1.7).abs() < 1e-14);
            assert!(ding_f(&c).unwrap().abs() < 1e-12);
            assert!((l_func(&c).unwrap() - n * g.vol * 1.7).abs() < 1e-10);
            assert!(g_alpha(&c, 0.3).unwrap().abs() < 1e-12);
            let f0 = f_omega_u(&z).unwrap();
            let fc = f_omega_u(&c).unwrap();
            for k in 0..g.len() {
                assert!((f0[k] - g.f_ref()[k]).abs() < 1e-12);
                assert!((fc[k] - f0[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn p1xp1_ricci_potential_is_separable() {
        // The reference is Kähler–Einstein, so f_ω is the constant -log Vol.
        let g = ReferenceGeometry::new(&catalog_lookup("P1xP1").unwrap(), 6).unwrap();
        assert!(g.f_ref().iter().all(|f| (f + g.vol.ln()).abs() < 1e-12));
    }

    #[test]
    fn translation_rules() {
        let u = field("Bl2P2", 8, 1);
        let c = -0.35;
        let uc = u.shifted(c);
        assert!((am(&uc) - am(&u) - c).abs() < 1e-12);
        assert!((ding_f(&uc).unwrap() - ding_f(&u).unwrap()).abs() < 1e-12);
        assert!((entropy(&uc).unwrap() - entropy(&u).unwrap()).abs() < 1e-12);
        let ip = i_p(&u, &uc, 2.0).unwrap();
        assert!((ip - 2.0 * c.abs() * u.geom().vol.sqrt()).abs() < 1e-9, "{ip}");
        assert!(am(&am_normalize(&u)).abs() < 1e-12);
    }

    #[test]
    fn i_p_symmetric() {
        let a = field("Bl1P2", 8, 2);
        let b = field("Bl1P2", 8, 3);
        let (x, y) = (i_p(&a, &b, 1.5).unwrap(), i_p(&b, &a, 1.5).unwrap());
        assert!((x - y).abs() <= 1e-15 * x.abs());
        assert!(i_p(&a, &a, 1.0).unwrap().abs() < 1e-9);
    }

    #[test]
    fn finsler_norm_jensen() {
        let u = field("P2", 8, 4);
        let xi: Vec<f64> = u.grid().coords.iter().map(|x| (3.0 * x[0]).sin() + x[1]).collect();
        let mut last = 0.0;
        for p in [1.0, 1.5, 2.0, 3.0, 6.0] {
            let v = finsler_norm(&xi, &u, p).unwrap();
            assert!(v >= last - 1e-10);
            last = v;
        }
        let c = vec![-0.8; u.geom().len()];
        assert!((finsler_norm(&c, &u, 2.5).unwrap() - 0.8).abs() < 1e-12);
        assert!(matches!(finsler_norm(&c, &u, 0.5), Err(Error::Parameter(_))));
    }

    #[test]
    fn entropy_nonnegative_and_ledger_identity() {
        for p in full_catalog() {
            let g = ReferenceGeometry::new(&p, 8).unwrap();
            let u = PotentialField::from_symplectic(g.clone(), random_perturbation(&g, 7, 1.0)).unwrap();
            let led = FunctionalLedger::evaluate("x", &u).unwrap();
            assert!(led.entropy >= -1e-8);
            let n = p.dim as f64;
            assert!((led.k_energy - (n * led.am - led.l + led.entropy)).abs() < 1e-9);
            assert!(led.eps_integrand >= -1e-8 && led.h_functional >= -1e-8);
        }
    }

    #[test]
    fn kahler_einstein_reference_has_zero_h_and_eps() {
        for name in ["P1", "P2", "P1xP1"] {
            let g = ReferenceGeometry::new(&catalog_lookup(name).unwrap(), 6).unwrap();
            let (h, e) = h_and_eps(&PotentialField::zero(g)).unwrap();
            assert!(h.abs() < 1e-12 && e.abs() < 1e-12, "{name}: {h} {e}");
        }
    }

    #[test]
    fn bl1p2_reference_h_and_eps_positive() {
        let g = ReferenceGeometry::new(&catalog_lookup("Bl1P2").unwrap(), 12).unwrap();
        let (h, e) = h_and_eps(&PotentialField::zero(g)).unwrap();
        assert!(h > 1e-3 && e > 1e-3, "{h} {e}");
    }

    /// Dual-side quantities on P1 from a dense Kähler grid: `(AM, H, ∫ u ω)`.
    fn p1_dual_oracle(u: &PotentialField) -> (f64, f64, f64) {
        let p = catalog_lookup("P1").unwrap();
        let dual = DualGrid::new(1, 30.0, 24001);
        let k = to_kahler(u, &dual).unwrap();
        let h = dual.spacing;
        let n = dual.len();
        let (mut am, mut ent, mut lu) = (0.0, 0.0, 0.0);
        for i in 1..n - 1 {
            let d2 = |f: &[f64]| (f[i + 1] - 2.0 * f[i] + f[i - 1]) / (h * h);
            let y = dual.grid.axes[0][i];
            let pr = 0.5 / (0.5 * y).cosh().powi(2);
            let uu = d2(&k.u);
            // Two-point Gauss in t of u (φ_ref + t u)''.
            let mut g = 0.0;
            for t in [0.5 - 0.5 / 3f64.sqrt(), 0.5 + 0.5 / 3f64.sqrt()] {
                g += 0.5 * k.u[i] * (pr + t * uu);
            }
            am += g * h;
            if pr > 1e-6 {
                ent += ((pr + uu) / pr).ln() * (pr + uu) * h;
            }
            lu += k.u[i] * pr * h;
        }
        let scale = p.vol_x() / p.volume();
        (am / p.volume(), scale * ent, scale * lu)
    }

    #[test]
    fn p1_matches_dual_oracles() {
        let u = field("P1", 256, 6);
        let (am_o, ent_o, l_o) = p1_dual_oracle(&u);
        assert!((am(&u) - am_o).abs() < 1e-5 * (1.0 + am_o.abs()), "{} {am_o}", am(&u));
        let h = entropy(&u).unwrap();
        assert!((h - ent_o).abs() < 1e-4 * (1.0 + ent_o.abs()), "{h} {ent_o}");
        // n = 1 and f_ω is constant on P1, so L(u) = ∫ u Ric ω = ∫ u ω.
        let l = l_func(&u).unwrap();
        assert!((l - l_o).abs() < 1e-4 * (1.0 + l_o.abs()), "{l} {l_o}");
    }
}
