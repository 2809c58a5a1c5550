//! The catalog → flow → hypotheses → ray → reports pipeline and its manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};
use toric_lab::flow::{
    dt_max, dyadic_sup_growth, flow_run, velocity_decay_rate, Classification, FlowSchedule, FlowTrajectory,
};
use toric_lab::flow_checks::{harnack_and_dp_check, perelman_report};
use toric_lab::functionals::FunctionalLedger;
use toric_lab::potentials::ReferenceGeometry;
use toric_lab::ray::{
    build_ray_with, check_hypotheses, entropy_budget, futaki_rate_check, ray_report,
    weak_asymptoticity_certificate, GeodesicRay, RayReport,
};
use toric_lab::catalog_lookup;

use crate::config::{ExperimentConfig, RaySpec};
use crate::plotdata::{cauchy_series, emit_plotdata, flow_series, ray_series};
use crate::LabResult;

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, Serialize)]
pub struct Artifact {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub status: String,
    pub classification: Classification,
    pub ray: Option<RayReport>,
    pub artifacts: Vec<Artifact>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> LabResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn sha256_file(path: &Path) -> LabResult<(u64, String)> {
    let data = fs::read(path)?;
    let digest = Sha256::digest(&data);
    Ok((data.len() as u64, digest.iter().map(|b| format!("{b:02x}")).collect()))
}

/// Hashes every file under `dir` except the manifest, sorted by relative path.
pub fn collect_artifacts(dir: &Path) -> LabResult<Vec<Artifact>> {
    fn walk(base: &Path, d: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
        for e in fs::read_dir(d)? {
            let p = e?.path();
            if p.is_dir() {
                walk(base, &p, out)?;
            } else if p.strip_prefix(base).map(|r| r != Path::new(MANIFEST)).unwrap_or(false) {
                out.push(p);
            }
        }
        Ok(())
    }
    let mut files = Vec::new();
    walk(dir, dir, &mut files)?;
    files.sort();
    files
        .iter()
        .map(|p| {
            let (bytes, sha256) = sha256_file(p)?;
            let rel = p.strip_prefix(dir).unwrap().to_string_lossy().replace('\\', "/");
            Ok(Artifact { path: rel, bytes, sha256 })
        })
        .collect()
}

/// Flow ledger, estimate reports and summary of a trajectory.
pub fn write_flow_reports(traj: &FlowTrajectory, dir: &Path) -> LabResult<()> {
    let ledgers = traj.ledgers()?;
    FunctionalLedger::write_csv(&ledgers, fs::File::create(dir.join("flow_ledger.csv"))?)?;
    let residuals = traj
        .checkpoints
        .iter()
        .map(|c| c.residual())
        .collect::<toric_lab::Result<Vec<f64>>>()?;
    let perelman = perelman_report(traj).ok();
    let harnack = harnack_and_dp_check(traj, 2.0)?;
    write_json(
        &dir.join("flow_report.json"),
        &json!({
            "manifold": traj.manifold,
            "m": traj.m,
            "dt": traj.dt,
            "scheme": traj.scheme,
            "times": traj.times(),
            "classification": traj.classification,
            "stop_reason": traj.stop_reason,
            "velocity_decay_rate": velocity_decay_rate(traj),
            "dyadic_sup_growth": dyadic_sup_growth(traj),
            "residuals": residuals,
            "estimates": perelman,
            "harnack": harnack,
        }),
    )
}

/// Builds the ray from `traj` and writes `ray.tkrl`, `ray_report.json` and its plot data.
pub fn write_ray(traj: &FlowTrajectory, spec: &RaySpec, dir: &Path) -> LabResult<(GeodesicRay, RayReport)> {
    let ray = build_ray_with(traj, spec.horizon, spec.levels, spec.samples)?;
    ray.save(&dir.join("ray.tkrl"))?;
    let report = ray_report(&ray, &spec.alphas, &spec.ps)?;
    let futaki = futaki_rate_check(&ray, traj)?;
    let entropy = entropy_budget(&ray)?;
    let weak = weak_asymptoticity_certificate(&ray, 2.0)?;
    write_json(
        &dir.join("ray_report.json"),
        &json!({
            "levels": ray.levels.iter().map(|l| json!({"flow_time": l.flow_time, "f": l.f})).collect::<Vec<_>>(),
            "cauchy": ray.cauchy,
            "cauchy_decreasing": ray.cauchy_decreasing(),
            "am": ray.am,
            "d2": ray.d2,
            "nontriviality": ray.nontriviality,
            "report": report,
            "futaki": futaki,
            "entropy_budget": entropy,
            "weak_asymptoticity": weak,
        }),
    )?;
    let mut series = ray_series(&report);
    series.push(cauchy_series(&ray));
    emit_plotdata(&dir.join("plot"), &series)?;
    Ok((ray, report))
}

/// Runs the full pipeline into the configured output directory under `root`.
///
/// Converging runs stop after the divergence check; diverging runs continue through the
/// hypotheses to the ray. `manifest.json` lists every artifact with its SHA-256.
pub fn run_experiment(config: &ExperimentConfig, root: &Path) -> LabResult<RunOutcome> {
    config.validate()?;
    let dir = config.output_dir(root);
    fs::create_dir_all(&dir)?;
    let polytope = catalog_lookup(&config.manifold)?;
    write_json(&dir.join("catalog.json"), &polytope)?;
    fs::write(dir.join("config.toml"), config.to_toml())?;

    let geom = ReferenceGeometry::new(&polytope, config.grid.m)?;
    let initial = config.flow.initial()?.build(&geom);
    let dt = if config.flow.dt > 0.0 { config.flow.dt } else { dt_max(&geom.grid) };
    let schedule = FlowSchedule::new(dt, config.flow.t_end, config.flow.checkpoint_every);
    let traj = flow_run(&initial, schedule, Some(&dir))?;
    write_flow_reports(&traj, &dir)?;
    emit_plotdata(&dir.join("plot"), &flow_series(&traj, &config.ray.alphas, &config.ray.ps)?)?;

    let mut ray = None;
    let status = match traj.classification {
        Classification::Converging => "converging; ray not applicable".to_string(),
        Classification::Undecided => "undecided; ray not applicable".to_string(),
        Classification::Diverging => {
            let hyp = check_hypotheses(&traj)?;
            write_json(&dir.join("hypotheses.json"), &hyp)?;
            if hyp.pass {
                ray = Some(write_ray(&traj, &config.ray, &dir)?.1);
                "diverging; ray constructed".to_string()
            } else {
                format!("diverging; hypotheses fail: {}", hyp.explanation)
            }
        }
    };
    write_json(
        &dir.join("summary.json"),
        &json!({
            "manifold": config.manifold,
            "status": status,
            "classification": traj.classification,
        }),
    )?;
    let artifacts = collect_artifacts(&dir)?;
    write_json(
        &dir.join(MANIFEST),
        &json!({ "status": status, "artifacts": artifacts }),
    )?;
    Ok(RunOutcome {
        dir,
        status,
        classification: traj.classification,
        ray,
        artifacts,
    })
}
