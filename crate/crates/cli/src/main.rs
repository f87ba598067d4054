mod args;

use std::path::Path;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use serde::Serialize;

use landscape_core::constructions::{
    build_dcp_not_kcp, build_lambda, build_trap_instance, lie_algebra_rank, DcpParams,
    DcpPredictions, LambdaParams, TrapParams,
};
use landscape_core::critical::{
    classify, second_order_trap_numeric, trap_certificate, Tolerances, TrapCertificate,
};
use landscape_core::landscape::{
    fd_gradient, gradient_discrete, gradient_from, hessian_from, jacobian_probe, GradientVector,
    HessianMatrix, FD_GRADIENT_STEP,
};
use landscape_core::linalg::{wire, Hermitian};
use landscape_core::optimizer::{gradient_ascent, multistart, AscentConfig, Direction};
use landscape_core::propagator::propagate;
use landscape_core::report::{
    emit_report, render, to_canonical_json, CsvCell, CsvTable, Report, RunManifest,
};
use landscape_core::system::{
    kinematic_bounds, load_field, load_task, save_field, save_task, ControlField, ControlTask,
    QuantumSystem,
};
use landscape_core::{Error, Result};

use args::{AscentArgs, Build, Cli, Command, Common, DirectionArg, TolArgs, DEFAULT_GRID};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let outcome = configure_threads().and_then(|()| run(cli.command));
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}

#[cfg(feature = "parallel")]
fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("PROBE_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Error::InvalidParameter(format!(
            "PROBE_THREADS must be a positive integer, got `{raw}`"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::InvalidParameter(format!("cannot size thread pool: {e}")))
}

#[cfg(not(feature = "parallel"))]
fn configure_threads() -> Result<()> {
    Ok(())
}

/// Names the file in I/O and parse errors.
fn read_task(path: &Path) -> Result<ControlTask> {
    load_task(path).map_err(|e| match e {
        Error::Io(_) | Error::Parse(_) => {
            Error::InvalidParameter(format!("{}: {e}", path.display()))
        }
        other => other,
    })
}

/// Task, field and a manifest already holding the resolved inputs.
struct Loaded {
    task: ControlTask,
    field: ControlField,
    manifest: RunManifest,
}

fn load(command: &str, c: &Common) -> Result<Loaded> {
    let task = read_task(&c.task)?;
    let mut manifest = RunManifest::new(command).input(c.task.display().to_string());
    let horizon = task.horizon();
    let grid = c.grid.unwrap_or(DEFAULT_GRID);
    let field = match c.field.as_str() {
        "zero" => ControlField::zeros(horizon, grid)?,
        spec if spec.starts_with("const:") => {
            let v: f64 = spec["const:".len()..]
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("bad constant field `{spec}`")))?;
            ControlField::constant(horizon, grid, v)?
        }
        path => {
            let f = load_field(path).map_err(|e| match e {
                Error::Io(_) | Error::Parse(_) => Error::InvalidParameter(format!("{path}: {e}")),
                other => other,
            })?;
            if let Some(m) = c.grid.filter(|&m| m != f.intervals()) {
                return Err(Error::InvalidParameter(format!(
                    "--grid {m} disagrees with the field file's M = {}",
                    f.intervals()
                )));
            }
            manifest = manifest.input(path);
            f
        }
    };
    manifest = manifest
        .param("field", &c.field)
        .param("M", field.intervals())
        .param("T", horizon)
        .param("seed", c.seed);
    Ok(Loaded {
        task,
        field,
        manifest,
    })
}

fn emit<T: Serialize + CsvTable>(result: &T, manifest: RunManifest, c: &Common) -> Result<()> {
    let manifest = manifest.param("format", format!("{:?}", c.format).to_lowercase());
    match &c.out {
        Some(path) => {
            let manifest = manifest.output(path.display().to_string());
            emit_report(result, &manifest, c.format, path)
        }
        None => {
            print!("{}", render(result, &manifest, c.format));
            Ok(())
        }
    }
}

fn tolerances(t: &TolArgs) -> Tolerances {
    Tolerances {
        grad: t.tol_grad,
        kcp: t.tol_kcp,
        hess: t.tol_hess,
        ..Tolerances::default()
    }
}

fn with_tolerances(m: RunManifest, t: &Tolerances) -> RunManifest {
    m.param("tol_grad", t.grad)
        .param("tol_kcp", t.kcp)
        .param("tol_hess", t.hess)
        .param("tol_J_rel", t.objective_rel)
}

#[derive(Serialize)]
struct PropagateReport {
    #[serde(rename = "M")]
    intervals: usize,
    #[serde(rename = "T")]
    horizon: f64,
    dt: f64,
    #[serde(rename = "J")]
    objective: f64,
    #[serde(rename = "Jmin")]
    jmin: f64,
    #[serde(rename = "Jmax")]
    jmax: f64,
    unitarity_defect: f64,
    final_unitary: wire::Rows,
    o_t: wire::Rows,
}

impl CsvTable for PropagateReport {
    fn header(&self) -> Vec<String> {
        vec!["quantity".into(), "value".into()]
    }

    fn rows(&self) -> Vec<Vec<CsvCell>> {
        [
            ("T", self.horizon),
            ("dt", self.dt),
            ("J", self.objective),
            ("Jmin", self.jmin),
            ("Jmax", self.jmax),
            ("unitarity_defect", self.unitarity_defect),
        ]
        .into_iter()
        .map(|(k, v)| vec![k.into(), v.into()])
        .chain(std::iter::once(vec!["M".into(), self.intervals.into()]))
        .collect()
    }
}

#[derive(Serialize)]
struct FdCheck {
    step: f64,
    discrete: Vec<f64>,
    fd: Vec<f64>,
    /// `||discrete - fd|| / ||fd||`.
    discrete_vs_fd: f64,
    /// `||dt g - discrete|| / ||discrete||`.
    kernel_vs_discrete: f64,
}

#[derive(Serialize)]
struct GradReport {
    gradient: GradientVector,
    #[serde(skip_serializing_if = "Option::is_none")]
    fd_check: Option<FdCheck>,
}

impl CsvTable for GradReport {
    fn header(&self) -> Vec<String> {
        let mut h = self.gradient.header();
        if self.fd_check.is_some() {
            h.extend(["discrete".into(), "fd".into()]);
        }
        h
    }

    fn rows(&self) -> Vec<Vec<CsvCell>> {
        let mut rows = self.gradient.rows();
        if let Some(fd) = &self.fd_check {
            for (m, row) in rows.iter_mut().enumerate() {
                row.push(fd.discrete[m].into());
                row.push(fd.fd[m].into());
            }
        }
        rows
    }
}

#[derive(Serialize)]
struct HessReport {
    hessian: HessianMatrix,
    /// Eigenvalues of the `dt^2`-weighted matrix, ascending.
    eigenvalues: Vec<f64>,
    weighted_frobenius: f64,
}

impl CsvTable for HessReport {
    fn header(&self) -> Vec<String> {
        self.hessian.header()
    }

    fn rows(&self) -> Vec<Vec<CsvCell>> {
        self.hessian.rows()
    }
}

fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let den = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

fn ascent_config(a: &AscentArgs, seed: u64) -> AscentConfig {
    AscentConfig {
        max_iters: a.max_iters,
        initial_step: a.step,
        grad_stop: a.grad_stop,
        j_stop: a.j_stop,
        seed,
        direction: match a.direction {
            DirectionArg::Kernel => Direction::Kernel,
            DirectionArg::Discrete => Direction::Discrete,
        },
        ..AscentConfig::default()
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Build(b) => build(b),
        Command::Propagate(c) => {
            let l = load("propagate", &c)?;
            let prop = propagate(&l.task, &l.field)?;
            let bounds = kinematic_bounds(&l.task);
            let u = prop.final_unitary();
            let report = PropagateReport {
                intervals: prop.intervals(),
                horizon: l.field.horizon(),
                dt: prop.dt,
                objective: prop.objective(&l.task)?,
                jmin: bounds.jmin,
                jmax: bounds.jmax,
                unitarity_defect: u.unitarity_defect(),
                final_unitary: wire::to_rows(u.matrix()),
                o_t: wire::to_rows(prop.o_t.matrix()),
            };
            emit(&report, l.manifest, &c)
        }
        Command::Grad {
            common: c,
            check_fd,
        } => {
            let l = load("grad", &c)?;
            let gradient = gradient_from(&propagate(&l.task, &l.field)?, &l.task)?;
            let fd_check = if check_fd {
                let discrete = gradient_discrete(&l.task, &l.field)?;
                let fd = fd_gradient(&l.task, &l.field, FD_GRADIENT_STEP)?;
                let check = FdCheck {
                    step: FD_GRADIENT_STEP,
                    discrete_vs_fd: rel_l2(&discrete, &fd),
                    kernel_vs_discrete: rel_l2(&gradient.scaled(), &discrete),
                    discrete,
                    fd,
                };
                eprintln!(
                    "fd check: discrete vs fd {:.3e}, dt*kernel vs discrete {:.3e}",
                    check.discrete_vs_fd, check.kernel_vs_discrete
                );
                Some(check)
            } else {
                None
            };
            let manifest = l.manifest.param("check_fd", check_fd);
            emit(&GradReport { gradient, fd_check }, manifest, &c)
        }
        Command::Hess(c) => {
            let l = load("hess", &c)?;
            let hessian = hessian_from(&propagate(&l.task, &l.field)?, &l.task);
            let report = HessReport {
                eigenvalues: hessian.eigenvalues(),
                weighted_frobenius: hessian.weighted_norm(),
                hessian,
            };
            emit(&report, l.manifest, &c)
        }
        Command::Classify { common: c, tol } => {
            let l = load("classify", &c)?;
            let t = tolerances(&tol);
            let report = classify(&l.task, &l.field, &t)?;
            emit(&report, with_tolerances(l.manifest, &t), &c)
        }
        Command::TrapCert { common: c, eps0 } => {
            let l = load("trap-cert", &c)?;
            let cert = trap_certificate(&l.task, eps0)?;
            emit(&cert, l.manifest.param("eps0", eps0), &c)
        }
        Command::TrapCheck {
            common: c,
            tol,
            probes,
        } => {
            let l = load("trap-check", &c)?;
            let t = tolerances(&tol);
            let verdict = second_order_trap_numeric(&l.task, &l.field, probes, c.seed, &t)?;
            emit(
                &verdict,
                with_tolerances(l.manifest, &t).param("probes", probes),
                &c,
            )
        }
        Command::JacobianRank(c) => {
            let l = load("jacobian-rank", &c)?;
            let probe = jacobian_probe(&l.task, &l.field)?;
            emit(&probe, l.manifest, &c)
        }
        Command::Controllability(c) => {
            let l = load("controllability", &c)?;
            emit(&lie_algebra_rank(l.task.system()), l.manifest, &c)
        }
        Command::Optimize {
            common: c,
            ascent,
            field_out,
        } => {
            let l = load("optimize", &c)?;
            let cfg = ascent_config(&ascent, c.seed);
            let traj = gradient_ascent(&l.task, &l.field, &cfg)?;
            let mut manifest = l.manifest.param("config", &cfg);
            if let Some(p) = &field_out {
                save_field(&traj.final_field, p)?;
                manifest = manifest.output(p.display().to_string());
            }
            emit(&traj, manifest, &c)
        }
        Command::Multistart {
            common: c,
            ascent,
            starts,
            amplitude,
            delta,
        } => {
            let task = read_task(&c.task)?;
            let grid = c.grid.unwrap_or(DEFAULT_GRID);
            let cfg = ascent_config(&ascent, c.seed);
            let summary = multistart(&task, grid, starts, amplitude, delta, &cfg)?;
            let manifest = RunManifest::new("multistart")
                .input(c.task.display().to_string())
                .param("M", grid)
                .param("T", task.horizon())
                .param("seed", c.seed)
                .param("starts", starts)
                .param("amplitude", amplitude)
                .param("delta", delta)
                .param("config", &cfg);
            emit(&summary, manifest, &c)
        }
    }
}

#[derive(Serialize)]
struct BuiltInstance {
    task_file: String,
    n: usize,
    template: String,
    #[serde(rename = "T")]
    horizon: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    certificate: Option<TrapCertificate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    predictions: Option<DcpPredictions>,
}

fn write_instance(
    task: &ControlTask,
    out: &Path,
    manifest: RunManifest,
    certificate: Option<TrapCertificate>,
    predictions: Option<DcpPredictions>,
) -> Result<()> {
    save_task(task, out)?;
    let manifest = manifest.output(out.display().to_string());
    let result = BuiltInstance {
        task_file: out.display().to_string(),
        n: task.dim(),
        template: task.template().to_string(),
        horizon: task.horizon(),
        certificate,
        predictions,
    };
    print!(
        "{}",
        to_canonical_json(&Report {
            manifest: &manifest,
            result: &result
        })
    );
    Ok(())
}

fn one_based(index: usize, what: &str) -> Result<usize> {
    index
        .checked_sub(1)
        .ok_or_else(|| Error::InvalidParameter(format!("{what} is counted from 1, got 0")))
}

fn build(b: Build) -> Result<()> {
    match b {
        Build::Lambda {
            lambdas,
            energies,
            mu13,
            mu23,
            horizon,
            out,
        } => {
            let p = LambdaParams {
                lambdas: [lambdas[0], lambdas[1], lambdas[2]],
                energies: [energies[0], energies[1], energies[2]],
                mu13,
                mu23,
                horizon,
            };
            let task = build_lambda(&p)?;
            let cert = trap_certificate(&task, 0.0)?;
            let manifest = RunManifest::new("build lambda").param("params", &p);
            write_instance(&task, &out, manifest, Some(cert), None)
        }
        Build::Trap {
            task,
            eps0,
            k,
            lambdas,
            labeling,
            horizon,
            out,
        } => {
            let source = read_task(&task)?;
            let labeling = labeling
                .map(|l| {
                    l.into_iter()
                        .map(|i| one_based(i, "labeling"))
                        .collect::<Result<Vec<_>>>()
                })
                .transpose()?;
            let p = TrapParams {
                eps0,
                k,
                lambdas,
                labeling,
                horizon: horizon.unwrap_or(source.horizon()),
            };
            let built = build_trap_instance(source.system(), &p)?;
            let cert = trap_certificate(&built, eps0)?;
            let manifest = RunManifest::new("build trap")
                .input(task.display().to_string())
                .param("params", &p);
            write_instance(&built, &out, manifest, Some(cert), None)
        }
        Build::DcpNotKcp {
            task,
            i,
            j,
            psi,
            phi,
            horizon,
            eps0,
            q,
            out,
        } => {
            let mut manifest = RunManifest::new("build dcp-not-kcp");
            let system = match &task {
                Some(path) => {
                    manifest = manifest.input(path.display().to_string());
                    read_task(path)?.system().clone()
                }
                None => QuantumSystem::new(
                    Hermitian::from_real_diagonal(&[0.0, 1.0]),
                    Hermitian::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]])?,
                )?,
            };
            let q = match &q {
                Some(path) => {
                    manifest = manifest.input(path.display().to_string());
                    let rows: wire::Rows = serde_json::from_str(&std::fs::read_to_string(path)?)?;
                    Some(Hermitian::new(wire::from_rows(&rows)?)?)
                }
                None => None,
            };
            let p = DcpParams {
                i: one_based(i, "--i")?,
                j: one_based(j, "--j")?,
                psi_phase: psi,
                phi_phase: phi,
                horizon,
                q,
                eps0,
            };
            let (built, predictions) = build_dcp_not_kcp(&system, &p)?;
            let manifest = manifest.param("params", &p);
            write_instance(&built, &out, manifest, None, Some(predictions))
        }
    }
}
