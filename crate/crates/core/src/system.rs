//! Controlled systems, control fields, control tasks and their file formats.
//!
//! Units: hbar = 1 and every stored quantity is dimensionless. Energies in `H0`
//! multiply times in `T` directly; the dipole `mu` multiplies field amplitudes.

use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{spectral_decompose, wire, Hermitian, MAX_DIM};
use crate::report;

/// Tolerance on `trace(rho0) = 1`.
pub const TRACE_TOL: f64 = 1e-10;
/// Smallest eigenvalue accepted for `rho0`.
pub const PSD_TOL: f64 = 1e-10;
/// Magnitude below which a dipole element counts as a forbidden transition.
pub const FORBIDDEN_TOL: f64 = 1e-12;

/// Free Hamiltonian `H0` and dipole operator `mu`; the controlled Hamiltonian is
/// `H0 - mu * eps(t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantumSystem {
    h0: Hermitian,
    mu: Hermitian,
}

impl QuantumSystem {
    pub fn new(h0: Hermitian, mu: Hermitian) -> Result<Self> {
        let n = h0.dim();
        if !(2..=MAX_DIM).contains(&n) {
            return Err(Error::UnsupportedDimension(n));
        }
        if mu.dim() != n {
            return Err(Error::DimensionMismatch(format!(
                "H0 is {n}x{n} but mu is {0}x{0}",
                mu.dim()
            )));
        }
        Ok(Self { h0, mu })
    }

    pub fn dim(&self) -> usize {
        self.h0.dim()
    }

    pub fn h0(&self) -> &Hermitian {
        &self.h0
    }

    pub fn mu(&self) -> &Hermitian {
        &self.mu
    }

    /// The dressed Hamiltonian `H0 - mu * eps` for a constant amplitude.
    pub fn dressed(&self, eps: f64) -> Hermitian {
        if eps == 0.0 {
            self.h0.clone()
        } else {
            self.h0.add_scaled(&self.mu, -eps)
        }
    }
}

/// Piecewise-constant control on a uniform grid of `M` intervals over `[0, T]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlField {
    #[serde(rename = "T")]
    horizon: f64,
    values: Vec<f64>,
}

impl ControlField {
    pub fn new(horizon: f64, values: Vec<f64>) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "field horizon must be positive and finite, got {horizon}"
            )));
        }
        if values.is_empty() {
            return Err(Error::InvalidParameter(
                "field needs at least one interval".into(),
            ));
        }
        if let Some(m) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("field amplitude {m}")));
        }
        Ok(Self { horizon, values })
    }

    pub fn zeros(horizon: f64, intervals: usize) -> Result<Self> {
        Self::constant(horizon, intervals, 0.0)
    }

    pub fn constant(horizon: f64, intervals: usize, value: f64) -> Result<Self> {
        Self::new(horizon, vec![value; intervals])
    }

    /// Samples a continuous envelope at the interval midpoints.
    pub fn from_envelope<F: Fn(f64) -> f64>(horizon: f64, intervals: usize, f: F) -> Result<Self> {
        let dt = horizon / intervals as f64;
        Self::new(
            horizon,
            (0..intervals).map(|m| f((m as f64 + 0.5) * dt)).collect(),
        )
    }

    /// Interval-wise independent uniforms on `[-amplitude, amplitude]`.
    pub fn random_uniform(
        horizon: f64,
        intervals: usize,
        amplitude: f64,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..intervals)
            .map(|_| amplitude * (2.0 * rng.random::<f64>() - 1.0))
            .collect();
        Self::new(horizon, values)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn intervals(&self) -> usize {
        self.values.len()
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.values.len() as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Midpoint time of interval `m` (zero-based).
    pub fn midpoint(&self, m: usize) -> f64 {
        (m as f64 + 0.5) * self.dt()
    }

    /// A copy with the amplitudes replaced; the grid is kept.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} amplitudes, got {}",
                self.values.len(),
                values.len()
            )));
        }
        Self::new(self.horizon, values)
    }
}

/// Structural template a task file claims to follow.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Template {
    /// Three-level system with the direct 1-2 transition forbidden.
    Lambda,
    /// Pure initial state as used by the non-kinematic critical point family.
    DcpNotKcp,
    #[default]
    Custom,
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Template::Lambda => "lambda",
            Template::DcpNotKcp => "dcp_not_kcp",
            Template::Custom => "custom",
        })
    }
}

/// A system together with initial state, target observable and horizon. The
/// objective is `J = Re Tr[U(T) rho0 U(T)^dagger O]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlTask {
    system: QuantumSystem,
    rho0: Hermitian,
    observable: Hermitian,
    horizon: f64,
    template: Template,
}

impl ControlTask {
    pub fn new(
        system: QuantumSystem,
        rho0: Hermitian,
        observable: Hermitian,
        horizon: f64,
        template: Template,
    ) -> Result<Self> {
        let n = system.dim();
        for (name, m) in [("rho0", &rho0), ("O", &observable)] {
            if m.dim() != n {
                return Err(Error::DimensionMismatch(format!(
                    "{name} is {0}x{0} but the system has n = {n}",
                    m.dim()
                )));
            }
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "horizon T must be positive and finite, got {horizon}"
            )));
        }
        let tr = rho0.trace();
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::DensityTrace(tr));
        }
        let min_eig = spectral_decompose(&rho0).eigenvalues[0];
        if min_eig < -PSD_TOL {
            return Err(Error::NotPositive(min_eig));
        }
        let task = Self {
            system,
            rho0,
            observable,
            horizon,
            template,
        };
        task.check_template()?;
        Ok(task)
    }

    fn check_template(&self) -> Result<()> {
        let fail = |reason: String| Error::Template {
            template: self.template.to_string(),
            reason,
        };
        match self.template {
            Template::Custom => Ok(()),
            Template::Lambda => {
                if self.dim() != 3 {
                    return Err(fail(format!("expected n = 3, got {}", self.dim())));
                }
                let mu = self.system.mu.matrix();
                let m12 = mu[(0, 1)].norm();
                if m12 > FORBIDDEN_TOL {
                    return Err(fail(format!("mu_12 must vanish, got |mu_12| = {m12}")));
                }
                for (i, j) in [(0, 2), (1, 2)] {
                    if mu[(i, j)].norm() <= FORBIDDEN_TOL {
                        return Err(fail(format!("mu_{}{} must be nonzero", i + 1, j + 1)));
                    }
                }
                Ok(())
            }
            Template::DcpNotKcp => {
                let rho = self.rho0.matrix();
                let purity = (rho * rho).trace().re;
                if (purity - 1.0).abs() > TRACE_TOL {
                    return Err(fail(format!("rho0 must be pure, Tr(rho0^2) = {purity}")));
                }
                Ok(())
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.system.dim()
    }

    pub fn system(&self) -> &QuantumSystem {
        &self.system
    }

    pub fn rho0(&self) -> &Hermitian {
        &self.rho0
    }

    pub fn observable(&self) -> &Hermitian {
        &self.observable
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn template(&self) -> Template {
        self.template
    }

    /// Same task with a different initial state; the template is relaxed to custom.
    pub fn with_rho0(&self, rho0: Hermitian) -> Result<Self> {
        Self::new(
            self.system.clone(),
            rho0,
            self.observable.clone(),
            self.horizon,
            Template::Custom,
        )
    }

    /// Same task with a different system; the template is relaxed to custom.
    pub fn with_system(&self, system: QuantumSystem) -> Result<Self> {
        Self::new(
            system,
            self.rho0.clone(),
            self.observable.clone(),
            self.horizon,
            Template::Custom,
        )
    }

    /// Same task over a different horizon.
    pub fn with_horizon(&self, horizon: f64) -> Result<Self> {
        Self::new(
            self.system.clone(),
            self.rho0.clone(),
            self.observable.clone(),
            horizon,
            self.template,
        )
    }

    pub fn to_file(&self) -> TaskFile {
        TaskFile {
            n: self.dim(),
            h0: wire::to_rows(self.system.h0.matrix()),
            mu: wire::to_rows(self.system.mu.matrix()),
            rho0: wire::to_rows(self.rho0.matrix()),
            observable: wire::to_rows(self.observable.matrix()),
            horizon: self.horizon,
            template: Some(self.template),
        }
    }

    pub fn from_file(file: &TaskFile) -> Result<Self> {
        let load = |name: &str, rows: &wire::Rows| -> Result<Hermitian> {
            let m = wire::from_rows(rows)?;
            if m.nrows() != file.n || m.ncols() != file.n {
                return Err(Error::DimensionMismatch(format!(
                    "{name} is {}x{} but n = {}",
                    m.nrows(),
                    m.ncols(),
                    file.n
                )));
            }
            Hermitian::new(m)
        };
        let system = QuantumSystem::new(load("H0", &file.h0)?, load("mu", &file.mu)?)?;
        Self::new(
            system,
            load("rho0", &file.rho0)?,
            load("O", &file.observable)?,
            file.horizon,
            file.template.unwrap_or_default(),
        )
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file(&serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        report::to_canonical_json(&self.to_file())
    }
}

/// On-disk task schema. Complex entries are `[re, im]`, matrices row-major.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TaskFile {
    pub n: usize,
    #[serde(rename = "H0")]
    pub h0: wire::Rows,
    pub mu: wire::Rows,
    pub rho0: wire::Rows,
    #[serde(rename = "O")]
    pub observable: wire::Rows,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<Template>,
}

/// On-disk field schema `{"T": real, "M": int, "values": [...]}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FieldFile {
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "M")]
    pub intervals: usize,
    pub values: Vec<f64>,
}

impl From<&ControlField> for FieldFile {
    fn from(f: &ControlField) -> Self {
        FieldFile {
            horizon: f.horizon,
            intervals: f.intervals(),
            values: f.values.clone(),
        }
    }
}

impl TryFrom<FieldFile> for ControlField {
    type Error = Error;

    fn try_from(f: FieldFile) -> Result<Self> {
        if f.values.len() != f.intervals {
            return Err(Error::DimensionMismatch(format!(
                "field declares M = {} but lists {} values",
                f.intervals,
                f.values.len()
            )));
        }
        ControlField::new(f.horizon, f.values)
    }
}

pub fn load_task(path: impl AsRef<Path>) -> Result<ControlTask> {
    ControlTask::from_json(&std::fs::read_to_string(path)?)
}

pub fn save_task(task: &ControlTask, path: impl AsRef<Path>) -> Result<()> {
    report::write_atomic(path.as_ref(), task.to_json().as_bytes())
}

pub fn load_field(path: impl AsRef<Path>) -> Result<ControlField> {
    let file: FieldFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    file.try_into()
}

pub fn save_field(field: &ControlField, path: impl AsRef<Path>) -> Result<()> {
    let text = report::to_canonical_json(&FieldFile::from(field));
    report::write_atomic(path.as_ref(), text.as_bytes())
}

/// Extreme values of `Tr[U rho0 U^dagger O]` over all unitaries.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KinematicBounds {
    #[serde(rename = "Jmin")]
    pub jmin: f64,
    #[serde(rename = "Jmax")]
    pub jmax: f64,
}

/// Pairs the populations of `rho0` with the spectrum of `O`: descending with
/// descending for the maximum, descending with ascending for the minimum.
pub fn kinematic_bounds(task: &ControlTask) -> KinematicBounds {
    let omega = spectral_decompose(task.rho0()).eigenvalues;
    let lambda = spectral_decompose(task.observable()).eigenvalues;
    let n = omega.len();
    let mut jmax = 0.0;
    let mut jmin = 0.0;
    for k in 0..n {
        let w = omega[n - 1 - k];
        jmax += w * lambda[n - 1 - k];
        jmin += w * lambda[k];
    }
    KinematicBounds { jmin, jmax }
}
