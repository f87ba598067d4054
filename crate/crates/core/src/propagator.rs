//! Time evolution under a piecewise-constant control.
//!
//! On interval `m` the Hamiltonian is `H0 - mu * eps_m`, so each step is an exact
//! exponential. Kernel quantities are sampled at interval midpoints
//! `t_m* = (m - 1/2) dt`.

use crate::error::{Error, Result};
use crate::linalg::{expm_generator, spectral_decompose, trace_product, Hermitian, Unitary};
use crate::system::{ControlField, ControlTask};

/// Relative tolerance for the horizon agreement between a task and a field.
const HORIZON_TOL: f64 = 1e-12;
/// Relative size of the imaginary part tolerated in `Tr[U rho0 U^dagger O]`.
const OBJECTIVE_IMAG_TOL: f64 = 1e-11;

/// Everything the landscape kernels need from one propagation.
#[derive(Clone, Debug)]
pub struct PropagationResult {
    /// `U(t_0 = 0), ..., U(t_M = T)`.
    pub boundary_unitaries: Vec<Unitary>,
    /// `U(t_m*)` at the interval midpoints.
    pub midpoint_unitaries: Vec<Unitary>,
    /// `V(t_m*) = U^dagger(t_m*) mu U(t_m*)`.
    pub heisenberg_dipoles: Vec<Hermitian>,
    /// `O_T = U^dagger(T) O U(T)`.
    pub o_t: Hermitian,
    pub dt: f64,
}

impl PropagationResult {
    pub fn final_unitary(&self) -> &Unitary {
        self.boundary_unitaries
            .last()
            .expect("at least one boundary")
    }

    pub fn intervals(&self) -> usize {
        self.midpoint_unitaries.len()
    }

    /// `Re Tr[rho0 O_T]`.
    pub fn objective(&self, task: &ControlTask) -> Result<f64> {
        real_trace(task.rho0(), &self.o_t)
    }
}

pub(crate) fn check_pair(task: &ControlTask, field: &ControlField) -> Result<()> {
    let (a, b) = (task.horizon(), field.horizon());
    if (a - b).abs() > HORIZON_TOL * a.max(b) {
        return Err(Error::HorizonMismatch { field: b, task: a });
    }
    Ok(())
}

/// Full and half-step propagators for each interval, reusing the previous pair
/// when consecutive amplitudes coincide.
fn interval_steps(task: &ControlTask, field: &ControlField) -> Vec<(Unitary, Unitary)> {
    let dt = field.dt();
    let mut steps: Vec<(Unitary, Unitary)> = Vec::with_capacity(field.intervals());
    let mut last: Option<f64> = None;
    for &eps in field.values() {
        if last == Some(eps) {
            let prev = steps.last().expect("previous step").clone();
            steps.push(prev);
            continue;
        }
        let sp = spectral_decompose(&task.system().dressed(eps));
        steps.push((sp.evolution(dt), sp.evolution(0.5 * dt)));
        last = Some(eps);
    }
    steps
}

/// Propagates `U(0) = I` through the field, retaining boundary and midpoint
/// unitaries and the Heisenberg-picture dipoles.
pub fn propagate(task: &ControlTask, field: &ControlField) -> Result<PropagationResult> {
    check_pair(task, field)?;
    let n = task.dim();
    let mu = task.system().mu();
    let steps = interval_steps(task, field);
    let mut boundary = Vec::with_capacity(steps.len() + 1);
    let mut midpoints = Vec::with_capacity(steps.len());
    let mut dipoles = Vec::with_capacity(steps.len());
    boundary.push(Unitary::identity(n));
    for (full, half) in &steps {
        let prev = boundary.last().expect("nonempty");
        let mid = half.compose(prev);
        dipoles.push(mu.conjugate_by(&mid));
        midpoints.push(mid);
        boundary.push(full.compose(prev));
    }
    let o_t = task
        .observable()
        .conjugate_by(boundary.last().expect("nonempty"));
    Ok(PropagationResult {
        boundary_unitaries: boundary,
        midpoint_unitaries: midpoints,
        heisenberg_dipoles: dipoles,
        o_t,
        dt: field.dt(),
    })
}

/// `U(T)` alone, without retaining intermediate unitaries.
pub fn final_unitary(task: &ControlTask, field: &ControlField) -> Result<Unitary> {
    check_pair(task, field)?;
    let dt = field.dt();
    let mut u = Unitary::identity(task.dim());
    let mut cached: Option<(f64, Unitary)> = None;
    for &eps in field.values() {
        let step = match &cached {
            Some((e, s)) if *e == eps => s.clone(),
            _ => {
                let s = expm_generator(&task.system().dressed(eps), dt);
                cached = Some((eps, s.clone()));
                s
            }
        };
        u = step.compose(&u);
    }
    Ok(u)
}

/// `O_T = U^dagger(T) O U(T)`.
pub fn evolved_observable(task: &ControlTask, field: &ControlField) -> Result<Hermitian> {
    Ok(task.observable().conjugate_by(&final_unitary(task, field)?))
}

/// The dynamic objective `J(eps) = Re Tr[U(T) rho0 U(T)^dagger O]`.
pub fn objective(task: &ControlTask, field: &ControlField) -> Result<f64> {
    real_trace(task.rho0(), &evolved_observable(task, field)?)
}

fn real_trace(a: &Hermitian, b: &Hermitian) -> Result<f64> {
    let t = trace_product(a.matrix(), b.matrix());
    let scale = (a.frobenius_norm() * b.frobenius_norm()).max(1.0);
    if t.im.abs() > OBJECTIVE_IMAG_TOL * scale {
        return Err(Error::Numerical(format!(
            "objective trace has imaginary part {:e}",
            t.im
        )));
    }
    Ok(t.re)
}
