use std::path::PathBuf;

use authalic::diagnostics::EigenMode;
use authalic::fpi::FpiConfig;
use authalic::linesearch::{LineSearchParams, LineSearchStrategy};
use authalic::pipeline::{CorrectionStages, ParamConfig};
use authalic::rgd::SolverConfig;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

/// Every flag can also be set through an `AUTHALIC_`-prefixed environment
/// variable, e.g. `AUTHALIC_MAX_ITERS=200`.
#[derive(Debug, Parser)]
#[command(name = "authalic", version, about = "Spherical area-preserving parameterization of genus-zero meshes")]
pub struct Cli {
    /// Repeat for more log output (warn, info, debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Map a mesh onto the unit sphere.
    Param(ParamArgs),
    /// Align two meshes through their spherical maps and landmark pairs.
    Register(RegisterArgs),
    /// Write frames of the linear homotopy between two registered meshes.
    Morph(MorphArgs),
    /// Run the gradient, Hessian, invariant and fold checks on a mesh.
    Check(CheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LsArg {
    Interp,
    Bounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrectArg {
    Off,
    Fpi,
    Rgd,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EigenArg {
    Algebraic,
    Magnitude,
}

impl From<EigenArg> for EigenMode {
    fn from(m: EigenArg) -> Self {
        match m {
            EigenArg::Algebraic => EigenMode::SmallestAlgebraic,
            EigenArg::Magnitude => EigenMode::SmallestMagnitude,
        }
    }
}

/// Parameterization settings shared by `param` and `register`.
#[derive(Debug, Clone, Args, Serialize)]
pub struct SolverArgs {
    /// FPI warm-start iterations; 0 skips the warm start.
    #[arg(long, default_value_t = 10, env = "AUTHALIC_FPI_ITERS")]
    pub fpi_iters: usize,
    /// FPI stops once E_S decreases by at most this much.
    #[arg(long, default_value_t = 1e-6, env = "AUTHALIC_FPI_EPSILON")]
    pub fpi_epsilon: f64,
    #[arg(long, default_value_t = 100, env = "AUTHALIC_MAX_ITERS")]
    pub max_iters: usize,
    #[arg(long, value_enum, default_value_t = LsArg::Interp, env = "AUTHALIC_LS")]
    pub ls: LsArg,
    /// Hemisphere radius of the FPI and fold-correction solves.
    #[arg(long = "r", default_value_t = 1.2, env = "AUTHALIC_R")]
    pub radius: f64,
    #[arg(long, default_value_t = 1e-4, env = "AUTHALIC_C1")]
    pub c1: f64,
    #[arg(long, default_value_t = 1.0, env = "AUTHALIC_ALPHA_MAX")]
    pub alpha_max: f64,
    /// Gradient-norm stop; defaults to 1e-6·√n.
    #[arg(long, env = "AUTHALIC_GRAD_TOL")]
    pub grad_tol: Option<f64>,
    /// Stop after three iterations that each lower E_A by less than this.
    #[arg(long, default_value_t = 1e-12, env = "AUTHALIC_ENERGY_TOL")]
    pub energy_tol: f64,
    #[arg(long, value_enum, default_value_t = CorrectArg::Both, env = "AUTHALIC_CORRECT_BIJECTIVITY")]
    pub correct_bijectivity: CorrectArg,
    /// Standard deviation of the normal displacement applied to the input.
    #[arg(long, default_value_t = 0.0, env = "AUTHALIC_NOISE_SIGMA")]
    pub noise_sigma: f64,
    #[arg(long, default_value_t = 0, env = "AUTHALIC_SEED")]
    pub seed: u64,
    /// Log progress every this many descent iterations (needs -v).
    #[arg(long, default_value_t = 0, env = "AUTHALIC_LOG_EVERY")]
    pub log_every: usize,
}

impl SolverArgs {
    pub fn param_config(&self) -> ParamConfig {
        ParamConfig {
            fpi: FpiConfig {
                epsilon: self.fpi_epsilon,
                radius: self.radius,
                max_iters: self.fpi_iters,
                ..FpiConfig::default()
            },
            rgd: SolverConfig {
                max_iters: self.max_iters,
                grad_tol: self.grad_tol,
                energy_tol: self.energy_tol,
                strategy: match self.ls {
                    LsArg::Interp => LineSearchStrategy::Interpolant,
                    LsArg::Bounded => LineSearchStrategy::Bounded,
                },
                line_search: LineSearchParams {
                    c1: self.c1,
                    alpha_max: self.alpha_max,
                    ..LineSearchParams::default()
                },
                log_every: self.log_every,
                ..SolverConfig::default()
            },
            correction: match self.correct_bijectivity {
                CorrectArg::Off => CorrectionStages::Off,
                CorrectArg::Fpi => CorrectionStages::AfterFpi,
                CorrectArg::Rgd => CorrectionStages::AfterRgd,
                CorrectArg::Both => CorrectionStages::Both,
            },
            correction_radius: self.radius,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ParamArgs {
    /// Input mesh (.obj or .off).
    pub mesh: PathBuf,
    #[arg(short, long, default_value = ".", env = "AUTHALIC_OUT_DIR")]
    pub out_dir: PathBuf,
    /// Convergence CSV; defaults to `<out-dir>/<stem>.csv`.
    #[arg(long, env = "AUTHALIC_LOG")]
    pub log: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RegisterArgs {
    pub mesh0: PathBuf,
    pub mesh1: PathBuf,
    /// One 1-based `i j` vertex pair per line.
    #[arg(long, env = "AUTHALIC_LANDMARKS")]
    pub landmarks: PathBuf,
    /// Existing spherical map of mesh0; computed when absent.
    #[arg(long, env = "AUTHALIC_SPHERE0")]
    pub sphere0: Option<PathBuf>,
    #[arg(long, env = "AUTHALIC_SPHERE1")]
    pub sphere1: Option<PathBuf>,
    /// Landmark weight λ.
    #[arg(long, default_value_t = 10.0, env = "AUTHALIC_LAMBDA")]
    pub lambda: f64,
    /// Descent iterations of each alignment solve.
    #[arg(long, default_value_t = 200, env = "AUTHALIC_REG_ITERS")]
    pub reg_iters: usize,
    /// Use the chord midpoints as targets instead of their projections onto the sphere.
    #[arg(long, env = "AUTHALIC_RAW_MIDPOINTS")]
    pub raw_midpoints: bool,
    #[arg(short, long, default_value = ".", env = "AUTHALIC_OUT_DIR")]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MorphArgs {
    pub mesh0: PathBuf,
    pub mesh1: PathBuf,
    /// Composed map written by `register`.
    #[arg(long, env = "AUTHALIC_MAP")]
    pub map: PathBuf,
    #[arg(long, default_value_t = 4, env = "AUTHALIC_FRAMES")]
    pub frames: usize,
    #[arg(short, long, default_value = ".", env = "AUTHALIC_OUT_DIR")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CheckArgs {
    pub mesh: PathBuf,
    /// Spherical map to check; the radial projection about the centroid when absent.
    #[arg(long, env = "AUTHALIC_MAP")]
    pub map: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-6, env = "AUTHALIC_FD_STEP")]
    pub fd_step: f64,
    #[arg(long, default_value_t = 1e-6, env = "AUTHALIC_FD_TOL")]
    pub fd_tol: f64,
    /// Estimate the smallest eigenvalue of the E_S Hessian.
    #[arg(long, env = "AUTHALIC_PROBE_EIGEN")]
    pub probe_eigen: bool,
    #[arg(long, value_enum, default_value_t = EigenArg::Magnitude, env = "AUTHALIC_EIGEN_MODE")]
    pub eigen_mode: EigenArg,
    #[arg(long, default_value_t = 60, env = "AUTHALIC_KRYLOV_DIM")]
    pub krylov_dim: usize,
}
