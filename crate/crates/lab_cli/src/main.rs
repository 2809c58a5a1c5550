use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;
use toric_lab::catalog::{full_catalog, catalog_lookup};
use toric_lab::flow::{dt_max, FlowRunner, FlowSchedule};
use toric_lab::functionals::FunctionalLedger;
use toric_lab::geodesics::{segment_table, weak_geodesic};
use toric_lab::potentials::ReferenceGeometry;
use toric_lab::ray::check_hypotheses;

use lab_cli::accept::{acceptance_suite_with, tap_line, Level};
use lab_cli::config::{ExperimentConfig, RaySpec, DEFAULT_TOML};
use lab_cli::pipeline::{collect_artifacts, run_experiment, write_flow_reports, write_json, write_ray, MANIFEST};
use lab_cli::plotdata::{emit_plotdata, flow_series};
use lab_cli::{output_root, LabError, LabResult, OUT_ENV};

#[derive(Parser)]
#[command(name = "tkrl", version, about = "Toric Kähler-Ricci flow and geodesic ray laboratory")]
struct Cli {
    /// Output root for relative paths.
    #[arg(long, global = true, env = OUT_ENV)]
    out_root: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print catalog entries as JSON.
    Catalog {
        /// One manifold; all when omitted.
        name: Option<String>,
    },
    /// Run or resume a flow; writes flow.tkrl, the ledger CSV and reports.
    Flow {
        #[arg(long, default_value = "Bl1P2")]
        manifold: String,
        /// Lattice cells per unit length.
        #[arg(long, default_value_t = 16)]
        grid: usize,
        /// Time step; the stability cap when omitted.
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long = "T", default_value_t = 10.0)]
        t_end: f64,
        #[arg(long, default_value_t = 1.0)]
        checkpoint_every: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Initial data: reference, random or stretched.
        #[arg(long, default_value = "random")]
        preset: String,
        /// Continue the run stored in --out to the new --T.
        #[arg(long)]
        resume: bool,
        #[arg(long, default_value = "flow")]
        out: PathBuf,
    },
    /// Geodesic between two seeded potentials: CSV of t, AM, F, M, sup, inf, speed.
    Geodesic {
        #[arg(long, default_value = "P1")]
        manifold: String,
        #[arg(long, default_value_t = 64)]
        grid: usize,
        #[arg(long, default_value_t = 1)]
        seed0: u64,
        #[arg(long, default_value_t = 2)]
        seed1: u64,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long, default_value_t = 0.7)]
        alpha: f64,
        #[arg(long, default_value_t = 10)]
        samples: usize,
    },
    /// Build a ray from a flow checkpoint directory.
    Ray {
        #[arg(long)]
        from_flow: PathBuf,
        #[arg(long = "T", default_value_t = 2.0)]
        horizon: f64,
        #[arg(long, default_value_t = 4)]
        levels: usize,
        #[arg(long, value_delimiter = ',', default_value = "0.7")]
        alphas: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "1,2")]
        ps: Vec<f64>,
        #[arg(long, default_value_t = 8)]
        samples: usize,
    },
    /// Functional ledger CSV of seeded potentials.
    Functionals {
        #[arg(long, default_value = "Bl1P2")]
        manifold: String,
        #[arg(long, default_value_t = 16)]
        grid: usize,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        seeds: Vec<u64>,
    },
    /// Run the acceptance suite; exit 1 if any criterion fails.
    Accept {
        #[arg(long, default_value = "quick")]
        level: Level,
        /// Criteria to run; all when omitted.
        #[arg(long, value_delimiter = ',')]
        only: Vec<usize>,
    },
    /// Re-emit plot data of a run directory.
    Plotdata {
        dir: PathBuf,
    },
    /// Run the full pipeline from a TOML config.
    Run {
        config: Option<PathBuf>,
        /// Print the default config and exit.
        #[arg(long)]
        print_default: bool,
    },
}

fn resolve(root: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        root.join(p)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let root = cli.out_root.clone().unwrap_or_else(output_root);
    match dispatch(cli.cmd, &root) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cmd: Cmd, root: &Path) -> LabResult<u8> {
    match cmd {
        Cmd::Catalog { name } => {
            let entries = match name {
                Some(n) => vec![catalog_lookup(&n)?],
                None => full_catalog(),
            };
            println!("{}", serde_json::to_string_pretty(&entries)?);
        }
        Cmd::Flow {
            manifold,
            grid,
            dt,
            t_end,
            checkpoint_every,
            seed,
            preset,
            resume,
            out,
        } => {
            let dir = resolve(root, &out);
            let mut runner = if resume {
                let mut r = FlowRunner::load(&dir.join("flow.tkrl"))?;
                r.extend(t_end)?;
                r
            } else {
                let mut cfg = ExperimentConfig::default();
                cfg.flow.preset = preset;
                cfg.flow.seed = seed;
                let geom = ReferenceGeometry::new(&catalog_lookup(&manifold)?, grid)?;
                let init = cfg.flow.initial()?.build(&geom);
                let dt = dt.unwrap_or_else(|| dt_max(&geom.grid));
                fs::create_dir_all(&dir)?;
                FlowRunner::new(&init, FlowSchedule::new(dt, t_end, checkpoint_every), Some(&dir))?
            };
            runner.run()?;
            let traj = runner.trajectory()?;
            write_flow_reports(&traj, &dir)?;
            emit_plotdata(&dir.join("plot"), &flow_series(&traj, &[0.7], &[1.0, 2.0])?)?;
            println!(
                "{}",
                json!({"dir": dir, "t": runner.t(), "classification": traj.classification, "stop_reason": traj.stop_reason})
            );
        }
        Cmd::Geodesic {
            manifold,
            grid,
            seed0,
            seed1,
            p,
            alpha,
            samples,
        } => {
            let geom = ReferenceGeometry::new(&catalog_lookup(&manifold)?, grid)?;
            let field = |s| {
                toric_lab::potentials::PotentialField::from_symplectic(
                    geom.clone(),
                    toric_lab::potentials::random_perturbation(&geom, s, 1.0),
                )
            };
            let seg = weak_geodesic(&field(seed0)?, &field(seed1)?)?;
            let rows = segment_table(&seg, p, alpha, samples)?;
            let mut w = csv::Writer::from_writer(std::io::stdout());
            for r in rows {
                w.serialize(r).map_err(|e| LabError::Usage(e.to_string()))?;
            }
            w.flush()?;
        }
        Cmd::Ray {
            from_flow,
            horizon,
            levels,
            alphas,
            ps,
            samples,
        } => {
            let dir = resolve(root, &from_flow);
            let traj = FlowRunner::load(&dir.join("flow.tkrl"))?.trajectory()?;
            let hyp = check_hypotheses(&traj)?;
            write_json(&dir.join("hypotheses.json"), &hyp)?;
            if !hyp.pass {
                return Err(LabError::Criterion(hyp.explanation));
            }
            let spec = RaySpec {
                levels,
                horizon,
                samples,
                alphas,
                ps,
            };
            let (ray, report) = write_ray(&traj, &spec, &dir)?;
            println!(
                "{}",
                json!({
                    "levels": ray.levels.len(),
                    "cauchy_decreasing": ray.cauchy_decreasing(),
                    "f_slope": report.f_slope,
                    "blowup_factor": report.blowup_factor,
                })
            );
        }
        Cmd::Functionals { manifold, grid, seeds } => {
            let geom = ReferenceGeometry::new(&catalog_lookup(&manifold)?, grid)?;
            let rows = seeds
                .iter()
                .map(|&s| {
                    let u = toric_lab::potentials::PotentialField::from_symplectic(
                        geom.clone(),
                        toric_lab::potentials::random_perturbation(&geom, s, 1.0),
                    )?;
                    FunctionalLedger::evaluate(&format!("seed={s}"), &u)
                })
                .collect::<toric_lab::Result<Vec<_>>>()?;
            FunctionalLedger::write_csv(&rows, std::io::stdout())?;
        }
        Cmd::Accept { level, only } => {
            let ids: Vec<usize> = if only.is_empty() { (1..=14).collect() } else { only };
            if let Some(bad) = ids.iter().find(|i| !(1..=14).contains(*i)) {
                return Err(LabError::Usage(format!("no criterion {bad} (1..=14)")));
            }
            println!("1..{}", ids.len());
            let table = acceptance_suite_with(level, root, &ids, |r| println!("{}", tap_line(r)));
            fs::create_dir_all(root)?;
            write_json(&root.join("acceptance.json"), &table)?;
            return Ok(if table.all_pass() { 0 } else { 1 });
        }
        Cmd::Plotdata { dir } => {
            let dir = resolve(root, &dir);
            let traj = FlowRunner::load(&dir.join("flow.tkrl"))?.trajectory()?;
            let paths = emit_plotdata(&dir.join("plot"), &flow_series(&traj, &[0.7], &[1.0, 2.0])?)?;
            if dir.join(MANIFEST).exists() {
                let artifacts = collect_artifacts(&dir)?;
                write_json(&dir.join(MANIFEST), &json!({ "artifacts": artifacts }))?;
            }
            for p in paths {
                println!("{}", p.display());
            }
        }
        Cmd::Run { config, print_default } => {
            if print_default {
                print!("{DEFAULT_TOML}");
                return Ok(0);
            }
            let config = match config {
                Some(p) => ExperimentConfig::load(&p)?,
                None => return Err(LabError::Usage("run needs a config path or --print-default".into())),
            };
            let out = run_experiment(&config, root)?;
            println!("{}", json!({"dir": out.dir, "status": out.status, "artifacts": out.artifacts.len()}));
        }
    }
    Ok(0)
}
