//! Experiment configuration, read from and written to TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toric_lab::flow::{Preset, SCHEME};

use crate::{LabError, LabResult};

/// Template with every field at its default, documented inline.
pub const DEFAULT_TOML: &str = r#"# Manifold from the catalog: P1, P2, P1xP1, Bl1P2, Bl2P2, Bl3P2.
manifold = "Bl1P2"
# Output directory; relative paths resolve against $TKRL_OUT (default "out").
output = "bl1p2"

[grid]
# Lattice cells per unit length of the moment polytope (h = 1/m).
m = 16
# Dual box radius for Kähler-side output; 0 picks the smallest saturating radius.
dual_radius = 0.0
# Dual grid points per axis.
dual_points = 65

[flow]
# Time step; 0 uses the stability cap 0.2 h.
dt = 0.0
# End time T.
t_end = 50.0
checkpoint_every = 1.0
scheme = "linearly-implicit-euler"
# Initial data: "reference", "random" or "stretched".
preset = "random"
seed = 1
# Amplitude of the random preset, in (0, 1].
amplitude = 1.0
# Barycenter tilt of the stretched preset.
tilt = 0.5

[ray]
levels = 3
horizon = 8.0
samples = 8
alphas = [0.7]
ps = [1.0, 2.0]

[tolerances]
# Relative monotonicity tolerance of F and AM along the flow.
flow_monotone = 1e-6
# Relative tolerance of F monotonicity along the ray.
ray_monotone = 1e-4
# Allowed |d_2(u_0, u_t) - t| / t on ray samples.
unit_speed = 0.01
# Allowed |AM| on ray samples.
am_normalized = 1e-6
# Minimal osc(u_1 - u_0) of a non-trivial ray.
nontrivial = 1e-3
"#;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub m: usize,
    pub dual_radius: f64,
    pub dual_points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    pub dt: f64,
    pub t_end: f64,
    pub checkpoint_every: f64,
    pub scheme: String,
    pub preset: String,
    pub seed: u64,
    pub amplitude: f64,
    pub tilt: f64,
}

impl FlowSpec {
    pub fn initial(&self) -> LabResult<Preset> {
        match self.preset.as_str() {
            "reference" => Ok(Preset::Reference),
            "random" => Ok(Preset::Random {
                seed: self.seed,
                amplitude: self.amplitude,
            }),
            "stretched" => Ok(Preset::Stretched {
                seed: self.seed,
                tilt: self.tilt,
            }),
            other => Err(LabError::Usage(format!("unknown preset `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RaySpec {
    pub levels: usize,
    pub horizon: f64,
    pub samples: usize,
    pub alphas: Vec<f64>,
    pub ps: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub flow_monotone: f64,
    pub ray_monotone: f64,
    pub unit_speed: f64,
    pub am_normalized: f64,
    pub nontrivial: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub manifold: String,
    pub output: PathBuf,
    pub grid: GridSpec,
    pub flow: FlowSpec,
    pub ray: RaySpec,
    pub tolerances: Tolerances,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        toml::from_str(DEFAULT_TOML).expect("default template parses")
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> LabResult<Self> {
        let c: Self = toml::from_str(text).map_err(|e| LabError::Usage(format!("config: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> LabResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::Usage(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> LabResult<()> {
        let bad = |msg: String| Err(LabError::Usage(msg));
        if self.grid.m < 2 || self.grid.dual_points < 3 || !(self.grid.dual_radius >= 0.0) {
            return bad("grid: need m ≥ 2, dual_points ≥ 3, dual_radius ≥ 0".into());
        }
        let f = &self.flow;
        if f.scheme != SCHEME {
            return bad(format!("flow.scheme must be `{SCHEME}`"));
        }
        if !(f.dt >= 0.0) || !(f.t_end >= 0.0) || !(f.checkpoint_every > 0.0) {
            return bad("flow: need dt ≥ 0, t_end ≥ 0, checkpoint_every > 0".into());
        }
        if f.preset == "random" && !(f.amplitude > 0.0 && f.amplitude <= 1.0) {
            return bad("flow.amplitude must lie in (0, 1]".into());
        }
        f.initial()?;
        let r = &self.ray;
        if r.levels == 0 || r.samples == 0 || !(r.horizon > 0.0) {
            return bad("ray: need levels, samples ≥ 1 and horizon > 0".into());
        }
        if r.ps.iter().any(|p| !(*p >= 1.0)) {
            return bad("ray.ps entries must be ≥ 1".into());
        }
        if r.alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return bad("ray.alphas entries must lie in (0, 1)".into());
        }
        let t = &self.tolerances;
        if [t.flow_monotone, t.ray_monotone, t.unit_speed, t.am_normalized, t.nontrivial]
            .iter()
            .any(|x| !(*x > 0.0))
        {
            return bad("all tolerances must be positive".into());
        }
        Ok(())
    }

    /// Output directory with relative paths resolved against `root`.
    pub fn output_dir(&self, root: &Path) -> PathBuf {
        if self.output.is_absolute() {
            self.output.clone()
        } else {
            root.join(&self.output)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn bad_values_are_usage_errors() {
        let mut c = ExperimentConfig::default();
        c.tolerances.unit_speed = 0.0;
        assert!(matches!(c.validate(), Err(LabError::Usage(_))));
        let text = DEFAULT_TOML.replace("preset = \"random\"", "preset = \"bogus\"");
        assert!(ExperimentConfig::from_toml(&text).is_err());
        let text = DEFAULT_TOML.replace("levels = 3", "levels = 3\nextra = 1");
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }
}
