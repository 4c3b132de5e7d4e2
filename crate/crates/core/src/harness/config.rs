//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functions::named_test_function;
use crate::semigroup::DiffusionConfig;
use crate::weight::parse_weight;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Resolvent estimates: L2, gradient, Hessian and sup ratios.
    Main,
    /// Graph-norm versus second-order Sobolev norm, and dissipativity.
    Domain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    Zero,
    /// `int_0^1 W(s)^2 ds` on Karhunen-Loeve coordinates.
    Energy,
    /// `max_s W(s) + W(1)`, truncated, tail-averaged and mollified.
    MaxEndpoint,
    /// A finite-dimensional weight in `weight::parse_weight` syntax.
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSpec {
    pub kind: WeightKind,
    /// Master truncation of the Wiener weights.
    #[serde(default = "default_modes")]
    pub modes: usize,
    /// Path grid for the max-endpoint weight.
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    /// Overrides `experiment.dims` for this weight.
    #[serde(default)]
    pub dims: Option<Vec<usize>>,
    /// Descriptor for `kind = "custom"`, e.g. `"huber:0.5"`.
    #[serde(default)]
    pub spec: Option<String>,
}

impl WeightSpec {
    pub fn name(&self) -> String {
        match self.kind {
            WeightKind::Zero => "zero".into(),
            WeightKind::Energy => "energy".into(),
            WeightKind::MaxEndpoint => "max_endpoint".into(),
            WeightKind::Custom => self.spec.clone().unwrap_or_default(),
        }
    }
}

fn default_modes() -> usize {
    256
}
fn default_grid_points() -> usize {
    2048
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    pub dims: Vec<usize>,
    pub lambdas: Vec<f64>,
    pub test_functions: Vec<String>,
    /// Test functions `u` of the domain task.
    #[serde(default = "default_domain_functions")]
    pub domain_functions: Vec<String>,
    /// Random cosine test functions for the weak-solution identity.
    #[serde(default = "default_weak_tests")]
    pub weak_tests: usize,
}

fn default_domain_functions() -> Vec<String> {
    ["const", "linear", "tanh", "tanh_slow", "cos", "hermite2"].map(String::from).to_vec()
}
fn default_weak_tests() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSection {
    pub dt: f64,
    pub paths: usize,
    pub t_max: f64,
    pub quad_nodes: usize,
    /// Importance-sampled outer points for the nested resolvent rows.
    pub outer_samples: usize,
    pub fd_step: f64,
    /// Importance samples for the domain task.
    pub is_samples: usize,
    /// Importance samples under the full max-endpoint weight.
    pub full_samples: usize,
    /// Fixed Gaussian tail draws defining the truncated max-endpoint weight.
    pub tail_samples: usize,
}

impl Default for McSection {
    fn default() -> Self {
        McSection {
            dt: 0.02,
            paths: 256,
            t_max: 8.0,
            quad_nodes: 64,
            outer_samples: 128,
            fd_step: 0.05,
            is_samples: 20_000,
            full_samples: 512,
            tail_samples: 256,
        }
    }
}

impl McSection {
    pub fn diffusion(&self, seed: u64) -> DiffusionConfig {
        DiffusionConfig { dt: self.dt, paths: self.paths, seed, t_max: self.t_max, quad_nodes: self.quad_nodes }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    /// Dimensions up to this use the grid oracle; larger ones Monte Carlo.
    pub max_dim: usize,
    pub radius: f64,
    pub mesh_1d: f64,
    pub mesh_2d: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection { max_dim: 2, radius: 5.0, mesh_1d: 1.0 / 64.0, mesh_2d: 1.0 / 32.0 }
    }
}

impl GridSection {
    pub fn mesh(&self, n: usize) -> f64 {
        if n == 1 {
            self.mesh_1d
        } else {
            self.mesh_2d
        }
    }
}

/// Dimension-independence probe: ratios at several `n` for one weight,
/// `lambda` and test function, all by nested Monte Carlo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Probe {
    pub weight: WeightKind,
    pub lambda: f64,
    pub test_function: String,
    pub dims: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default = "default_tasks")]
    pub tasks: Vec<Task>,
    #[serde(rename = "weight")]
    pub weights: Vec<WeightSpec>,
    pub experiment: Experiment,
    #[serde(default)]
    pub mc: McSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub probe: Option<Probe>,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}
fn default_tasks() -> Vec<Task> {
    vec![Task::Main]
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&s)
    }

    pub fn dims_for(&self, w: &WeightSpec) -> Vec<usize> {
        w.dims.clone().unwrap_or_else(|| self.experiment.dims.clone())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let e = &self.experiment;
        if e.dims.is_empty() {
            return bad("dims nonempty: experiment.dims is empty".into());
        }
        if e.lambdas.is_empty() {
            return bad("lambdas nonempty: experiment.lambdas is empty".into());
        }
        if let Some(l) = e.lambdas.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return bad(format!("lambdas > 0: got {l}"));
        }
        if self.weights.is_empty() {
            return bad("at least one [[weight]] table is required".into());
        }
        if self.tasks.is_empty() {
            return bad("tasks nonempty".into());
        }
        for name in e.test_functions.iter().chain(&e.domain_functions) {
            named_test_function(name, 1)?;
        }
        if self.tasks.contains(&Task::Main) && e.test_functions.is_empty() {
            return bad("test_functions nonempty".into());
        }
        let g = &self.grid;
        if !(g.radius > 0.0 && g.mesh_1d > 0.0 && g.mesh_2d > 0.0) || g.max_dim > 2 {
            return bad("grid: radius and meshes must be positive, max_dim <= 2".into());
        }
        for w in &self.weights {
            let dims = self.dims_for(w);
            if dims.is_empty() || dims.contains(&0) {
                return bad(format!("dims nonempty and positive for weight {}", w.name()));
            }
            match w.kind {
                WeightKind::MaxEndpoint => {
                    if dims.iter().any(|n| *n > g.max_dim.max(1)) {
                        return bad(format!("max_endpoint is tabulated and needs n <= {}", g.max_dim.max(1)));
                    }
                    if w.grid_points < 2 || w.modes == 0 {
                        return bad("max_endpoint needs modes >= 1 and grid_points >= 2".into());
                    }
                }
                WeightKind::Energy => {
                    if dims.iter().any(|n| *n > w.modes) {
                        return bad("energy: n must not exceed modes".into());
                    }
                }
                WeightKind::Custom => {
                    let s = w.spec.as_deref().ok_or_else(|| Error::Config("custom weight needs spec".into()))?;
                    parse_weight(s, 1)?;
                }
                WeightKind::Zero => {}
            }
        }
        let mc = &self.mc;
        mc.diffusion(self.seed).validate().map_err(|e| Error::Config(e.to_string()))?;
        if mc.outer_samples < 2 || mc.is_samples < 2 || mc.full_samples < 2 || mc.tail_samples == 0 || !(mc.fd_step > 0.0) {
            return bad("mc: sample counts must be >= 2 and fd_step > 0".into());
        }
        if let Some(p) = &self.probe {
            if p.dims.len() < 2 || p.dims.contains(&0) || !(p.lambda > 0.0) || p.weight == WeightKind::MaxEndpoint || p.weight == WeightKind::Custom {
                return bad("probe: needs >= 2 positive dims, lambda > 0, weight zero or energy".into());
            }
            named_test_function(&p.test_function, 1)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MIN: &str = r#"
[[weight]]
kind = "zero"

[experiment]
dims = [1]
lambdas = [1.0]
test_functions = ["tanh"]
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let c = ExperimentConfig::from_toml_str(MIN).unwrap();
        assert_eq!(c.tasks, vec![Task::Main]);
        assert_eq!(c.mc.paths, 256);
        assert_eq!(c.experiment.weak_tests, 10);
    }

    #[test]
    fn validation_errors() {
        let empty = MIN.replace("dims = [1]", "dims = []");
        let e = ExperimentConfig::from_toml_str(&empty).unwrap_err().to_string();
        assert!(e.contains("dims nonempty"), "{e}");
        let neg = MIN.replace("lambdas = [1.0]", "lambdas = [-1.0]");
        assert!(matches!(ExperimentConfig::from_toml_str(&neg), Err(Error::Config(_))));
        let unknown = MIN.replace("\"tanh\"", "\"nope\"");
        assert!(ExperimentConfig::from_toml_str(&unknown).is_err());
        let typo = MIN.replace("dims = [1]", "dims = [1]\ndimz = 3");
        assert!(ExperimentConfig::from_toml_str(&typo).is_err());
    }
}
