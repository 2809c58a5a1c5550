//! Property tests of the catalog, the Legendre engine, the functionals and weak geodesics.

use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use toric_lab::catalog::{full_catalog, CATALOG_NAMES};
use toric_lab::catalog_lookup;
use toric_lab::functionals::{am, ding_f, entropy, finsler_norm, i_p, k_energy, l_func};
use toric_lab::geodesics::{d_p, segment_table, weak_geodesic};
use toric_lab::legendre::{legendre, TensorGrid};
use toric_lab::potentials::{random_perturbation, PotentialField, ReferenceGeometry};

fn geom(name: &str) -> Arc<ReferenceGeometry> {
    let m = if name == "P1" { 32 } else { 8 };
    ReferenceGeometry::new(&catalog_lookup(name).unwrap(), m).unwrap()
}

fn field(g: &Arc<ReferenceGeometry>, seed: u64, amplitude: f64) -> PotentialField {
    PotentialField::from_symplectic(g.clone(), random_perturbation(g, seed, amplitude)).unwrap()
}

fn any_manifold() -> impl Strategy<Value = &'static str> {
    prop::sample::select(CATALOG_NAMES.to_vec())
}

#[test]
fn volume_and_barycenter_match_monte_carlo() {
    const SAMPLES: usize = 1_000_000;
    for p in full_catalog() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let [[x0, y0], [x1, y1]] = p.bounding_box().map(|r| r.map(|v| v as f64));
        let (y0, y1) = if p.dim == 1 { (0.0, 0.0) } else { (y0, y1) };
        let box_vol = (x1 - x0) * if p.dim == 1 { 1.0 } else { y1 - y0 };
        let (mut hits, mut sx, mut sy) = (0usize, 0.0, 0.0);
        for _ in 0..SAMPLES {
            let x = [rng.gen_range(x0..x1), if p.dim == 1 { 0.0 } else { rng.gen_range(y0..y1) }];
            if p.contains(&x) {
                hits += 1;
                sx += x[0];
                sy += x[1];
            }
        }
        let vol = box_vol * hits as f64 / SAMPLES as f64;
        let rel = (vol - p.volume()).abs() / p.volume();
        assert!(rel < 5e-3, "{}: Monte-Carlo volume {vol} vs {}", p.name, p.volume());
        let b = p.barycenter();
        let diam = (x1 - x0).max(y1 - y0);
        for (mc, exact) in [(sx / hits as f64, b[0]), (sy / hits as f64, b[1])] {
            assert!((mc - exact).abs() < 5e-3 * diam, "{}: barycenter {mc} vs {exact}", p.name);
        }
    }
}

/// Convex test function on a square grid: a positive quadratic plus a maximum of affine pieces.
fn convex_values(g: &TensorGrid, a: f64, b: [f64; 2], kink: f64) -> Vec<f64> {
    (0..g.len())
        .map(|k| {
            let y = g.point(k);
            a * (y[0] * y[0] + y[1] * y[1]) + (b[0] * y[0] + b[1] * y[1]).max(kink * y[0])
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn legendre_reverses_order(
        dim in 1usize..=2,
        a in 0.1f64..2.0,
        b0 in -1.0f64..1.0,
        b1 in -1.0f64..1.0,
        kink in -1.0f64..1.0,
        bump in 0.0f64..1.0,
        c in 0.0f64..3.0,
    ) {
        let src = TensorGrid::uniform(dim, -2.0, 2.0, 33);
        let tgt = TensorGrid::uniform(dim, -1.5, 1.5, 17);
        let f = convex_values(&src, a, [b0, b1], kink);
        let g: Vec<f64> = (0..src.len())
            .map(|k| {
                let y = src.point(k);
                f[k] + c + bump * (y[0] * y[0] + y[1] * y[1])
            })
            .collect();
        let fs = legendre(&src, &f, &tgt).unwrap();
        let gs = legendre(&src, &g, &tgt).unwrap();
        for (x, y) in fs.iter().zip(&gs) {
            prop_assert!(x >= y, "f ≤ g but f* = {x} < g* = {y}");
        }
    }

    #[test]
    fn legendre_shift_equivariance(
        dim in 1usize..=2,
        a in 0.1f64..2.0,
        b0 in -1.0f64..1.0,
        kink in -1.0f64..1.0,
        c in -4i32..=4,
    ) {
        // Exact up to the rounding of `x·y - f`.
        let c = c as f64 * 0.25;
        let src = TensorGrid::uniform(dim, -2.0, 2.0, 17);
        let tgt = TensorGrid::uniform(dim, -1.0, 1.0, 9);
        let f = convex_values(&src, a, [b0, 0.0], kink);
        let shifted: Vec<f64> = f.iter().map(|x| x + c).collect();
        let fs = legendre(&src, &f, &tgt).unwrap();
        let ss = legendre(&src, &shifted, &tgt).unwrap();
        for (x, y) in fs.iter().zip(&ss) {
            prop_assert!((y - (x - c)).abs() <= 1e-12 * (1.0 + x.abs()), "{y} vs {} ", x - c);
        }
    }

    #[test]
    fn translation_rules(name in any_manifold(), seed in 0u64..1000, c in -3.0f64..3.0, p in 1.0f64..4.0) {
        let g = geom(name);
        let u = field(&g, seed, 1.0);
        let uc = u.shifted(c);
        prop_assert!((am(&uc) - am(&u) - c).abs() <= 1e-12 * (1.0 + c.abs() + am(&u).abs()));
        let (f, fc) = (ding_f(&u).unwrap(), ding_f(&uc).unwrap());
        prop_assert!((f - fc).abs() <= 1e-10 * (1.0 + f.abs()), "F {f} vs {fc}");
        let (h, hc) = (entropy(&u).unwrap(), entropy(&uc).unwrap());
        prop_assert!((h - hc).abs() <= 1e-10 * (1.0 + h.abs()), "H {h} vs {hc}");
        prop_assert!(h >= -1e-8, "negative entropy {h}");
        let want = 2.0 * c.abs() * g.vol.powf(1.0 / p);
        let got = i_p(&u, &uc, p).unwrap();
        prop_assert!((got - want).abs() <= 1e-9 * (1.0 + want), "I_p {got} vs {want}");
    }

    #[test]
    fn finsler_norm_is_nondecreasing_in_p(name in any_manifold(), seed in 0u64..1000, xi_seed in 0u64..1000) {
        let g = geom(name);
        let u = field(&g, seed, 1.0);
        let xi = random_perturbation(&g, xi_seed, 1.0);
        let norms: Vec<f64> = [1.0, 1.5, 2.0, 3.0, 4.0, 8.0]
            .iter()
            .map(|&p| finsler_norm(&xi, &u, p).unwrap())
            .collect();
        for w in norms.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-10, "{norms:?}");
        }
    }

    #[test]
    fn ledger_identity(name in any_manifold(), seed in 0u64..1000) {
        let g = geom(name);
        let u = field(&g, seed, 1.0);
        let n = g.grid.dim as f64;
        let m = k_energy(&u).unwrap();
        let rhs = n * am(&u) - l_func(&u).unwrap() + entropy(&u).unwrap();
        prop_assert!((m - rhs).abs() <= 1e-9 * (1.0 + m.abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn distance_is_symmetric_and_shift_exact(
        name in any_manifold(),
        s0 in 0u64..1000,
        s1 in 0u64..1000,
        c in 0.1f64..2.0,
        p in prop::sample::select(vec![1.0, 2.0, 4.0]),
    ) {
        let g = geom(name);
        let (a, b) = (field(&g, s0, 1.0), field(&g, s1 + 1000, 1.0));
        prop_assert_eq!(d_p(&a, &b, p).unwrap().to_bits(), d_p(&b, &a, p).unwrap().to_bits());
        let dc = d_p(&a, &a.shifted(c), p).unwrap();
        prop_assert!((dc - c).abs() <= 1e-8 * (1.0 + c), "d_p(u, u + {c}) = {dc}");
    }

    #[test]
    fn triangle_inequality(
        name in any_manifold(),
        s in 0u64..1000,
        p in prop::sample::select(vec![1.0, 2.0, 4.0]),
    ) {
        let g = geom(name);
        let (a, b, c) = (field(&g, s, 1.0), field(&g, s + 1000, 0.7), field(&g, s + 2000, 0.4));
        let (ab, bc, ac) = (d_p(&a, &b, p).unwrap(), d_p(&b, &c, p).unwrap(), d_p(&a, &c, p).unwrap());
        prop_assert!(ac <= ab + bc + 1e-6 * (ab + bc), "{ac} > {ab} + {bc}");
    }

    #[test]
    fn am_and_sup_slope_are_affine(name in any_manifold(), s in 0u64..1000, amp in 0.2f64..1.0) {
        let g = geom(name);
        let (a, b) = (field(&g, s, amp), field(&g, s + 1000, 1.0));
        let rows = segment_table(&weak_geodesic(&a, &b).unwrap(), 2.0, 0.7, 6).unwrap();
        let (first, last) = (&rows[0], &rows[rows.len() - 1]);
        let osc = a.v().iter().zip(b.v()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        for r in &rows {
            let s = r.t / last.t;
            let am_lin = (1.0 - s) * first.am + s * last.am;
            prop_assert!((r.am - am_lin).abs() <= 1e-3 * (1.0 + first.am.abs() + last.am.abs()));
            let sup_lin = (1.0 - s) * first.sup + s * last.sup;
            prop_assert!((r.sup - sup_lin).abs() <= 1e-3 * osc.max(1e-12));
        }
    }
}
