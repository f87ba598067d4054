use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use landscape_core::report::Format;

pub const DEFAULT_GRID: usize = 128;

#[derive(Debug, Parser)]
#[command(name = "probe", version, about = "Quantum control landscape probe")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every analysis command.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Task file (system, initial state, observable, horizon).
    #[arg(long)]
    pub task: PathBuf,
    /// Control field: a field file, `zero`, or `const:VALUE`.
    #[arg(long, default_value = "zero")]
    pub field: String,
    /// Number of intervals M for `zero`/`const:` fields [default: 128].
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output path; the report goes to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "json", value_parser = parse_format)]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct TolArgs {
    /// Gradient sup-norm threshold for a dynamic critical point.
    #[arg(long, default_value_t = 1e-10)]
    pub tol_grad: f64,
    /// Threshold on ||[rho0, O_T]||_F for a kinematic critical point.
    #[arg(long, default_value_t = 1e-8)]
    pub tol_kcp: f64,
    /// Relative Hessian eigenvalue slack.
    #[arg(long, default_value_t = 1e-9)]
    pub tol_hess: f64,
}

fn parse_format(s: &str) -> Result<Format, String> {
    s.parse().map_err(|e: landscape_core::Error| e.to_string())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DirectionArg {
    Kernel,
    Discrete,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write an instance task file.
    #[command(subcommand)]
    Build(Build),
    /// Propagate and report J, U(T) and O_T.
    Propagate(Common),
    /// Gradient kernel on the grid.
    Grad {
        #[command(flatten)]
        common: Common,
        /// Compare with the exact discrete gradient and central differences.
        #[arg(long)]
        check_fd: bool,
    },
    /// Hessian kernel matrix and its spectrum.
    Hess(Common),
    /// Critical-point labels.
    Classify {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        tol: TolArgs,
    },
    /// Analytic trap certificate for a constant control.
    TrapCert {
        #[command(flatten)]
        common: Common,
        /// Constant control amplitude defining the dressed basis.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        eps0: f64,
    },
    /// Numerical second-order trap test with random probe directions.
    TrapCheck {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        tol: TolArgs,
        #[arg(long, default_value_t = 100)]
        probes: usize,
    },
    /// Rank of the control Jacobian from the Heisenberg dipoles.
    JacobianRank(Common),
    /// Dimension of the dynamical Lie algebra.
    Controllability(Common),
    /// Gradient ascent from the given field.
    Optimize {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ascent: AscentArgs,
        /// Also write the final field here.
        #[arg(long)]
        field_out: Option<PathBuf>,
    },
    /// Gradient ascent from seeded random fields.
    Multistart {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ascent: AscentArgs,
        #[arg(long, default_value_t = 20)]
        starts: usize,
        /// Half-width of the uniform initial amplitudes.
        #[arg(long, default_value_t = 0.5)]
        amplitude: f64,
        /// Success threshold below Jmax.
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
    },
}

#[derive(Debug, Clone, Args)]
pub struct AscentArgs {
    #[arg(long, default_value_t = 2000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 10.0)]
    pub step: f64,
    #[arg(long, default_value_t = 1e-9)]
    pub grad_stop: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub j_stop: Option<f64>,
    #[arg(long, value_enum, default_value = "kernel")]
    pub direction: DirectionArg,
}

#[derive(Debug, Subcommand)]
pub enum Build {
    /// Three-level Λ system with the 1-2 transition forbidden.
    Lambda {
        #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [1.0, 2.0, 0.0], allow_negative_numbers = true)]
        lambdas: Vec<f64>,
        #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.0, 1.0, 2.5], allow_negative_numbers = true)]
        energies: Vec<f64>,
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        mu13: f64,
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        mu23: f64,
        #[arg(long, default_value_t = 5.0)]
        horizon: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Constant-control trap instance on the system of an existing task.
    Trap {
        /// Task whose H0 and mu are used.
        #[arg(long)]
        task: PathBuf,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        eps0: f64,
        /// Rank of the initial dressed state, counted from 1 in descending target order.
        #[arg(long)]
        k: usize,
        /// Target eigenvalues, strictly descending.
        #[arg(
            long,
            value_delimiter = ',',
            required = true,
            allow_negative_numbers = true
        )]
        lambdas: Vec<f64>,
        /// Dressed level (counted from 1, ascending energy) receiving each eigenvalue.
        #[arg(long, value_delimiter = ',')]
        labeling: Option<Vec<usize>>,
        /// Horizon; defaults to the source task's.
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Instance whose constant control is dynamically but not kinematically critical.
    DcpNotKcp {
        /// Task whose H0 and mu are used; a driven qubit when omitted.
        #[arg(long)]
        task: Option<PathBuf>,
        /// First level, counted from 1.
        #[arg(long, default_value_t = 1)]
        i: usize,
        /// Second level, counted from 1.
        #[arg(long, default_value_t = 2)]
        j: usize,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        psi: f64,
        #[arg(long, default_value_t = std::f64::consts::FRAC_PI_2, allow_negative_numbers = true)]
        phi: f64,
        #[arg(long, default_value_t = 1.0)]
        horizon: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        eps0: f64,
        /// Hermitian matrix file (rows of `[re, im]`) added to the target projector.
        #[arg(long)]
        q: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}
