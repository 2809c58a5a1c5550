use std::sync::Arc;

use toric_lab::catalog_lookup;
use toric_lab::flow::*;
use toric_lab::potentials::ReferenceGeometry;
use toric_lab::Error;

fn geom(name: &str, m: usize) -> Arc<ReferenceGeometry> {
    ReferenceGeometry::new(&catalog_lookup(name).unwrap(), m).unwrap()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let g = geom("Bl1P2", 8);
    let init = Preset::Random { seed: 5, amplitude: 1.0 }.build(&g);
    let sched = FlowSchedule::new(dt_max(&g.grid), 4.0, 0.5);
    let full = flow_run(&init, sched.clone(), None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut first = sched;
    first.t_end = 2.0;
    flow_run(&init, first, Some(dir.path())).unwrap();
    let resumed = flow_resume(&dir.path().join("flow.tkrl"), 4.0).unwrap();
    assert_eq!(resumed.checkpoints.len(), full.checkpoints.len());
    for (a, b) in resumed.checkpoints.iter().zip(&full.checkpoints) {
        assert_eq!(a.t, b.t);
        assert!(max_diff(a.r.v(), b.r.v()) <= 1e-8);
        assert!(max_diff(&a.r_tilde_dot, &b.r_tilde_dot) <= 1e-8);
        assert!((a.am_tilde - b.am_tilde).abs() <= 1e-8);
    }
}

#[test]
fn saved_run_reloads_bit_exact() {
    let g = geom("P2", 6);
    let init = Preset::Random { seed: 2, amplitude: 0.5 }.build(&g);
    let dir = tempfile::tempdir().unwrap();
    let traj = flow_run(&init, FlowSchedule::new(0.02, 0.5, 0.25), Some(dir.path())).unwrap();
    let back = FlowRunner::load(&dir.path().join("flow.tkrl")).unwrap().trajectory().unwrap();
    for (a, b) in traj.checkpoints.iter().zip(&back.checkpoints) {
        assert!(a.r.v().iter().zip(b.r.v()).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_eq!(a.am_tilde.to_bits(), b.am_tilde.to_bits());
    }
}

#[test]
fn foreign_file_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("flow.tkrl");
    std::fs::write(&p, b"TKRL1-RAY\n").unwrap();
    assert!(matches!(FlowRunner::load(&p), Err(Error::Format(_))));
}

#[test]
fn scheme_is_first_order() {
    let g = geom("P1xP1", 8);
    let init = Preset::Random { seed: 4, amplitude: 1.0 }.build(&g);
    let order = observed_order(&init, 0.5, 0.02).unwrap();
    assert!(order >= 0.9, "order {order}");
}

#[test]
fn residual_shrinks_with_dt() {
    let g = geom("P1xP1", 8);
    let init = Preset::Random { seed: 4, amplitude: 1.0 }.build(&g);
    let res = |dt: f64| {
        let traj = flow_run(&init, FlowSchedule::new(dt, 1.0, 1.0), None).unwrap();
        traj.checkpoints[1].residual().unwrap()
    };
    let (r1, r2) = (res(0.02), res(0.01));
    assert!(r2 < r1 && r1 < 0.1, "{r1} {r2}");
}

#[test]
fn blown_up_surface_diverges() {
    let g = geom("Bl1P2", 8);
    let init = Preset::Random { seed: 1, amplitude: 1.0 }.build(&g);
    let traj = flow_run(&init, FlowSchedule::new(dt_max(&g.grid), 32.0, 1.0), None).unwrap();
    assert_eq!(traj.classification, Classification::Diverging);
    let w = dyadic_sup_growth(&traj);
    assert!(w.iter().rev().take(3).all(|x| x.2 >= WINDOW_GROWTH));
    for c in &traj.checkpoints[1..] {
        assert!(c.am_tilde >= traj.checkpoints[0].am_tilde - 1e-6);
    }
}

#[test]
fn invalid_schedule_is_rejected() {
    let g = geom("P1", 8);
    let init = Preset::Reference.build(&g);
    assert!(flow_run(&init, FlowSchedule::new(-1.0, 1.0, 1.0), None).is_err());
    assert!(flow_run(&init, FlowSchedule::new(0.01, 1.0, 0.0), None).is_err());
}
