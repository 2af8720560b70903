//! Command-line flags. Every flag is optional so that it can override the config file.

use std::path::PathBuf;

use capflow_core::index_lab::Flavor;
use clap::{Args, Parser, Subcommand};

use crate::config::{CommandKind, ExperimentConfig, FlowConfig, Outputs, SpectrumChoice, SurfaceSpec, Tolerances};
use crate::suites::Suite;

#[derive(Debug, Parser)]
#[command(
    name = "capflow",
    version,
    about = "Conformal flows, capillary energies and index spectra of surfaces in spherical caps"
)]
#[command(after_help = "Exit status: 0 ok, 1 invariant violation, 2 usage or configuration error, 3 numeric failure.")]
pub struct Cli {
    /// JSON experiment config; flags override its fields
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Worker threads [default: all cores]
    #[arg(long, global = true, env = "CAPFLOW_WORKERS")]
    pub workers: Option<usize>,
    /// Output file for the main artifact [default: stdout]
    #[arg(long, global = true, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Report invariant violations on stderr but exit 0
    #[arg(long, global = true)]
    pub no_fatal: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monotonicity trace along a conformal flow, as CSV
    Flow {
        #[command(flatten)]
        surface: SurfaceArgs,
        /// Flow direction, four comma-separated numbers (normalised)
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, num_args = 1)]
        a: Vec<f64>,
        /// Final flow time [default: 1]
        #[arg(long)]
        tmax: Option<f64>,
        /// Number of time steps, at least 2 [default: 50]
        #[arg(long)]
        steps: Option<usize>,
        /// Substeps per interval for the local wetting energy [default: 8]
        #[arg(long)]
        substeps: Option<usize>,
        /// Slope tolerance [default: quadrature-error estimate]
        #[arg(long)]
        slope_tol: Option<f64>,
        /// Mean-curvature bound C_H [default: 1.1 times the measured sup |H|]
        #[arg(long)]
        c_h: Option<f64>,
        #[command(flatten)]
        quad: QuadArgs,
    },
    /// Area, wetting and boundary energies, as JSON
    Energy {
        #[command(flatten)]
        surface: SurfaceArgs,
        #[command(flatten)]
        quad: QuadArgs,
    },
    /// Robin, Dirichlet or Steklov spectrum of an index form, as JSON
    Spectrum {
        #[command(flatten)]
        surface: SurfaceArgs,
        #[command(flatten)]
        mesh: MeshArgs,
        /// Eigenproblem [default: robin]
        #[arg(long, value_enum)]
        kind: Option<SpectrumChoice>,
        /// Number of eigenvalues [default: 8]
        #[arg(long)]
        count: Option<usize>,
        /// Per-vertex eigenfunction CSV
        #[arg(long, value_name = "FILE")]
        eigenfunctions: Option<PathBuf>,
        /// Mesh dump
        #[arg(long, value_name = "FILE")]
        mesh_out: Option<PathBuf>,
    },
    /// Index report, as JSON
    Index {
        #[command(flatten)]
        surface: SurfaceArgs,
        #[command(flatten)]
        mesh: MeshArgs,
    },
    /// Dual annulus and the dual form identities, as JSON
    Dual {
        #[command(flatten)]
        surface: SurfaceArgs,
        /// Sign of the dual surface, 1 or -1 [default: from the sign of A(η, η)]
        #[arg(long, allow_negative_numbers = true)]
        epsilon: Option<f64>,
        /// Random trial fields for the form identities [default: 20]
        #[arg(long)]
        trials: Option<usize>,
        /// Seed of the trial fields [default: 0]
        #[arg(long)]
        seed: Option<u64>,
        /// Relative tolerance for the residuals [default: 1e-4]
        #[arg(long)]
        dual_tol: Option<f64>,
    },
    /// Euclidean limit of a flat disc shrunk into small caps, as JSON
    Limit {
        /// Cap radii [default: 0.4,0.2,0.1,0.05]
        #[arg(long, value_delimiter = ',', num_args = 1)]
        radii: Vec<f64>,
        /// Offset of the disc in the unit ball [default: 0,0,0]
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, num_args = 1)]
        y: Vec<f64>,
        #[command(flatten)]
        quad: QuadArgs,
    },
    /// Run a property suite
    Verify {
        /// Suite to run [default: all]
        #[arg(long, value_enum)]
        suite: Option<Suite>,
    },
    /// Run the command named in the config file
    Run,
}

#[derive(Debug, Args)]
pub struct SurfaceArgs {
    /// Builtin surface: half-equator, half-clifford, clifford, flat-square, flat-disc, disc-in-ball, cap-boundary-wet
    #[arg(long)]
    pub surface: Option<String>,
    /// Comma-separated surface parameters, e.g. radius,gamma for half-equator
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, num_args = 1)]
    pub params: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct MeshArgs {
    /// Target mesh edge length [default: 0.05]
    #[arg(long)]
    pub h: Option<f64>,
    /// Index form: spectral, morse or modified [default: morse for index, spectral for spectrum]
    #[arg(long, value_parser = parse_flavor)]
    pub flavor: Option<Flavor>,
    /// Eigenvalue zero tolerance [default: 5 h²]
    #[arg(long)]
    pub zero_tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct QuadArgs {
    /// Gauss points per axis per cell [default: 8]
    #[arg(long)]
    pub quad_order: Option<usize>,
    /// Quadrature cells per axis [default: 16]
    #[arg(long)]
    pub quad_cells: Option<usize>,
}

fn parse_flavor(s: &str) -> Result<Flavor, String> {
    s.parse::<Flavor>().map_err(|e| e.to_string())
}

fn nonempty(v: Vec<f64>) -> Option<Vec<f64>> {
    (!v.is_empty()).then_some(v)
}

impl SurfaceArgs {
    fn apply(self, c: &mut ExperimentConfig) {
        if let Some(name) = self.surface {
            c.surface = Some(SurfaceSpec { name, params: self.params });
        } else if !self.params.is_empty() {
            // Parameters alone refine the surface named in the config file.
            c.surface = Some(SurfaceSpec { name: String::new(), params: self.params });
        }
    }
}

impl QuadArgs {
    fn apply(self, t: &mut Tolerances) {
        t.quad_order = self.quad_order;
        t.quad_cells = self.quad_cells;
    }
}

impl MeshArgs {
    fn apply(self, c: &mut ExperimentConfig) {
        c.h = self.h;
        c.flavor = self.flavor;
        c.tolerances.zero_tol = self.zero_tol;
    }
}

impl Cli {
    /// The flags as a partial config, to be merged over the config file.
    pub fn overrides(self) -> (Option<PathBuf>, ExperimentConfig) {
        let mut c = ExperimentConfig {
            workers: self.workers,
            outputs: Outputs { out: self.out, ..Default::default() },
            fatal: self.no_fatal.then_some(false),
            ..Default::default()
        };
        match self.command {
            Command::Flow { surface, a, tmax, steps, substeps, slope_tol, c_h, quad } => {
                c.command = Some(CommandKind::Flow);
                surface.apply(&mut c);
                c.flow = FlowConfig { a: nonempty(a), t_max: tmax, steps };
                c.tolerances.substeps = substeps;
                c.tolerances.slope_tol = slope_tol;
                c.tolerances.c_h = c_h;
                quad.apply(&mut c.tolerances);
            }
            Command::Energy { surface, quad } => {
                c.command = Some(CommandKind::Energy);
                surface.apply(&mut c);
                quad.apply(&mut c.tolerances);
            }
            Command::Spectrum { surface, mesh, kind, count, eigenfunctions, mesh_out } => {
                c.command = Some(CommandKind::Spectrum);
                surface.apply(&mut c);
                mesh.apply(&mut c);
                c.spectrum = kind;
                c.count = count;
                c.outputs.eigenfunctions = eigenfunctions;
                c.outputs.mesh = mesh_out;
            }
            Command::Index { surface, mesh } => {
                c.command = Some(CommandKind::Index);
                surface.apply(&mut c);
                mesh.apply(&mut c);
            }
            Command::Dual { surface, epsilon, trials, seed, dual_tol } => {
                c.command = Some(CommandKind::Dual);
                surface.apply(&mut c);
                c.epsilon = epsilon;
                c.trials = trials;
                c.seed = seed;
                c.tolerances.dual_tol = dual_tol;
            }
            Command::Limit { radii, y, quad } => {
                c.command = Some(CommandKind::Limit);
                c.radii = nonempty(radii);
                c.y = nonempty(y);
                quad.apply(&mut c.tolerances);
            }
            Command::Verify { suite } => {
                c.command = Some(CommandKind::Verify);
                c.suite = suite;
            }
            Command::Run => {}
        }
        (self.config, c)
    }
}
