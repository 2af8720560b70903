//! Experiment configuration: a JSON file, overridden field by field by command-line flags.

use std::path::{Path, PathBuf};

use capflow_core::index_lab::Flavor;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::suites::Suite;

pub const DEFAULT_T_MAX: f64 = 1.0;
pub const DEFAULT_STEPS: usize = 50;
pub const DEFAULT_SUBSTEPS: usize = 8;
pub const DEFAULT_H: f64 = 0.05;
pub const DEFAULT_COUNT: usize = 8;
pub const DEFAULT_QUAD_ORDER: usize = 8;
pub const DEFAULT_QUAD_CELLS: usize = 16;
pub const DEFAULT_DUAL_TOL: f64 = 1e-4;
pub const DEFAULT_TRIALS: usize = 20;
pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_RADII: [f64; 4] = [0.4, 0.2, 0.1, 0.05];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CommandKind {
    Flow,
    Energy,
    Spectrum,
    Index,
    Dual,
    Limit,
    Verify,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SpectrumChoice {
    Robin,
    Dirichlet,
    Steklov,
}

/// Builtin surface addressed by name and positional parameters.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceSpec {
    pub name: String,
    #[serde(default)]
    pub params: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    /// Flow direction in the closed unit ball of R^4.
    pub a: Option<Vec<f64>>,
    pub t_max: Option<f64>,
    pub steps: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Eigenvalue zero tolerance; defaults to 5 h².
    pub zero_tol: Option<f64>,
    /// Monotonicity slope tolerance; defaults to a quadrature-error estimate.
    pub slope_tol: Option<f64>,
    /// Mean-curvature bound of the free boundary monotone quantity; defaults to 1.1 sup |H|.
    pub c_h: Option<f64>,
    /// Substeps per interval for the local wetting energy.
    pub substeps: Option<usize>,
    pub quad_order: Option<usize>,
    pub quad_cells: Option<usize>,
    /// Relative tolerance for the dual surface and dual form identities.
    pub dual_tol: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Outputs {
    /// Main artifact; stdout when absent.
    pub out: Option<PathBuf>,
    /// Per-vertex eigenfunction CSV for `spectrum`.
    pub eigenfunctions: Option<PathBuf>,
    /// Triangle mesh dump for `spectrum`.
    pub mesh: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Option<CommandKind>,
    pub surface: Option<SurfaceSpec>,
    pub flow: FlowConfig,
    /// Target mesh edge length.
    pub h: Option<f64>,
    pub flavor: Option<Flavor>,
    pub spectrum: Option<SpectrumChoice>,
    /// Number of eigenvalues to report.
    pub count: Option<usize>,
    /// Sign `ε` of the dual surface; resolved automatically when absent.
    pub epsilon: Option<f64>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub radii: Option<Vec<f64>>,
    /// Offset of the flat disc in the Euclidean limit.
    pub y: Option<Vec<f64>>,
    pub suite: Option<Suite>,
    pub tolerances: Tolerances,
    pub outputs: Outputs,
    /// Exit with status 1 when an invariant check fails.
    pub fatal: Option<bool>,
    /// Worker threads; `CAPFLOW_WORKERS` when absent.
    pub workers: Option<usize>,
}

fn pick<T>(over: Option<T>, base: Option<T>) -> Option<T> {
    over.or(base)
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Fields set in `over` replace those in `self`.
    pub fn merge(self, over: ExperimentConfig) -> Self {
        let (b, o) = (self, over);
        let (bt, ot) = (b.tolerances, o.tolerances);
        ExperimentConfig {
            command: pick(o.command, b.command),
            surface: match (o.surface, b.surface) {
                (Some(mut os), Some(bs)) => {
                    // Bare parameters refine the file's surface; a bare name keeps the file's parameters.
                    if os.name.is_empty() {
                        os.name = bs.name;
                    } else if os.params.is_empty() && os.name == bs.name {
                        os.params = bs.params;
                    }
                    Some(os)
                }
                (o, b) => o.or(b),
            },
            flow: FlowConfig {
                a: pick(o.flow.a, b.flow.a),
                t_max: pick(o.flow.t_max, b.flow.t_max),
                steps: pick(o.flow.steps, b.flow.steps),
            },
            h: pick(o.h, b.h),
            flavor: pick(o.flavor, b.flavor),
            spectrum: pick(o.spectrum, b.spectrum),
            count: pick(o.count, b.count),
            epsilon: pick(o.epsilon, b.epsilon),
            trials: pick(o.trials, b.trials),
            seed: pick(o.seed, b.seed),
            radii: pick(o.radii, b.radii),
            y: pick(o.y, b.y),
            suite: pick(o.suite, b.suite),
            tolerances: Tolerances {
                zero_tol: pick(ot.zero_tol, bt.zero_tol),
                slope_tol: pick(ot.slope_tol, bt.slope_tol),
                c_h: pick(ot.c_h, bt.c_h),
                substeps: pick(ot.substeps, bt.substeps),
                quad_order: pick(ot.quad_order, bt.quad_order),
                quad_cells: pick(ot.quad_cells, bt.quad_cells),
                dual_tol: pick(ot.dual_tol, bt.dual_tol),
            },
            outputs: Outputs {
                out: pick(o.outputs.out, b.outputs.out),
                eigenfunctions: pick(o.outputs.eigenfunctions, b.outputs.eigenfunctions),
                mesh: pick(o.outputs.mesh, b.outputs.mesh),
            },
            fatal: pick(o.fatal, b.fatal),
            workers: pick(o.workers, b.workers),
        }
    }

    /// Finite numbers, usable counts and writable output locations.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |what: &str| Err(CliError::Config(what.to_string()));
        let mut scalars: Vec<(&str, f64)> = vec![];
        let mut push = |n: &'static str, v: Option<f64>| {
            if let Some(v) = v {
                scalars.push((n, v));
            }
        };
        push("t_max", self.flow.t_max);
        push("h", self.h);
        push("epsilon", self.epsilon);
        push("zero_tol", self.tolerances.zero_tol);
        push("slope_tol", self.tolerances.slope_tol);
        push("c_h", self.tolerances.c_h);
        push("dual_tol", self.tolerances.dual_tol);
        for (name, v) in &scalars {
            if !v.is_finite() {
                return bad(&format!("{name} must be finite"));
            }
        }
        let lists = [
            ("a", &self.flow.a),
            ("radii", &self.radii),
            ("y", &self.y),
            ("surface params", &self.surface.as_ref().map(|s| s.params.clone())),
        ];
        for (name, l) in lists {
            if l.as_ref().is_some_and(|l| l.iter().any(|v| !v.is_finite())) {
                return bad(&format!("{name} must contain finite numbers"));
            }
        }
        if self.flow.t_max.is_some_and(|t| t <= 0.0) {
            return bad("t_max must be positive");
        }
        if self.flow.steps.is_some_and(|s| s < 2) {
            return bad("steps must be at least 2");
        }
        if self.h.is_some_and(|h| h <= 0.0) {
            return bad("h must be positive");
        }
        if self.flow.a.as_ref().is_some_and(|a| a.len() != 4) {
            return bad("a needs four components");
        }
        if self.y.as_ref().is_some_and(|y| y.len() != 3) {
            return bad("y needs three components");
        }
        if self.radii.as_ref().is_some_and(|r| r.is_empty() || r.iter().any(|&r| r <= 0.0 || r >= std::f64::consts::PI))
        {
            return bad("radii must lie in (0, π)");
        }
        if self.epsilon.is_some_and(|e| e != 1.0 && e != -1.0) {
            return bad("epsilon must be 1 or -1");
        }
        let t = &self.tolerances;
        if t.zero_tol.is_some_and(|z| z < 0.0)
            || t.slope_tol.is_some_and(|z| z < 0.0)
            || t.dual_tol.is_some_and(|z| z <= 0.0)
        {
            return bad("tolerances must be nonnegative");
        }
        if t.substeps == Some(0) || t.quad_order == Some(0) || t.quad_cells == Some(0) || self.workers == Some(0) {
            return bad("substeps, quadrature sizes and workers must be positive");
        }
        for p in [&self.outputs.out, &self.outputs.eigenfunctions, &self.outputs.mesh].into_iter().flatten() {
            let dir = match p.parent() {
                Some(d) if !d.as_os_str().is_empty() => d,
                _ => Path::new("."),
            };
            let meta = std::fs::metadata(dir).map_err(|e| CliError::Config(format!("{}: {e}", dir.display())))?;
            if !meta.is_dir() || meta.permissions().readonly() {
                return bad(&format!("{} is not writable", p.display()));
            }
            if p.is_dir() {
                return bad(&format!("{} is a directory", p.display()));
            }
        }
        Ok(())
    }

    pub fn surface(&self) -> Result<&SurfaceSpec, CliError> {
        self.surface.as_ref().ok_or_else(|| CliError::Config("no surface given".into()))
    }

    pub fn h(&self) -> f64 {
        self.h.unwrap_or(DEFAULT_H)
    }

    pub fn fatal(&self) -> bool {
        self.fatal.unwrap_or(true)
    }

    pub fn quad(&self) -> capflow_core::surface::QuadOptions {
        capflow_core::surface::QuadOptions {
            order: self.tolerances.quad_order.unwrap_or(DEFAULT_QUAD_ORDER),
            cells: self.tolerances.quad_cells.unwrap_or(DEFAULT_QUAD_CELLS),
        }
    }
}
