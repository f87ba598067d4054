//! Instance builders: the Λ system, constant-control trap instances, the
//! non-kinematic critical point family, and a Lie-algebra controllability test.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::Serialize;

use crate::critical::{dressed_basis, DIPOLE_ZERO_TOL, SPECTRAL_GAP_TOL};
use crate::error::{Error, Result};
use crate::landscape::hermitian_coordinates;
use crate::linalg::{commutator, expm_generator, CMatrix, Hermitian};
use crate::report::{CsvCell, CsvTable};
use crate::system::{ControlTask, QuantumSystem, Template};

/// Smallest `|sin alpha|` accepted for the relative phase of the two states.
pub const PHASE_TOL: f64 = 1e-10;
/// Residual threshold for `Q|psi> = 0` and for the equal-diagonal dipole test.
pub const KERNEL_TOL: f64 = 1e-12;
/// Relative threshold on orthogonalized candidates in the Lie closure.
pub const LIE_RANK_TOL: f64 = 1e-10;

/// Parameters of the three-level Λ system with the 1-2 transition forbidden.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LambdaParams {
    /// Target eigenvalues, `lambda_2 > lambda_1 > lambda_3`.
    pub lambdas: [f64; 3],
    /// Bare energies, pairwise distinct.
    pub energies: [f64; 3],
    pub mu13: f64,
    pub mu23: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
}

impl Default for LambdaParams {
    fn default() -> Self {
        Self {
            lambdas: [1.0, 2.0, 0.0],
            energies: [0.0, 1.0, 2.5],
            mu13: 1.0,
            mu23: 1.0,
            horizon: 5.0,
        }
    }
}

/// Ground-state Λ task: `rho0 = |1><1|`, `O = diag(lambda)`, `mu_12 = 0`.
pub fn build_lambda(p: &LambdaParams) -> Result<ControlTask> {
    let [l1, l2, l3] = p.lambdas;
    if !(l2 > l1 && l1 > l3) {
        return Err(Error::InvalidParameter(format!(
            "need lambda_2 > lambda_1 > lambda_3, got ({l1}, {l2}, {l3})"
        )));
    }
    if p.mu13 == 0.0 || p.mu23 == 0.0 {
        return Err(Error::InvalidParameter(
            "couplings mu13 and mu23 must be nonzero".into(),
        ));
    }
    let h = p.energies;
    for (a, b) in [(0, 1), (0, 2), (1, 2)] {
        if (h[a] - h[b]).abs() <= SPECTRAL_GAP_TOL {
            return Err(Error::InvalidParameter(format!(
                "energies h{} and h{} coincide",
                a + 1,
                b + 1
            )));
        }
    }
    let mu = Hermitian::from_real_rows(&[
        &[0.0, 0.0, p.mu13],
        &[0.0, 0.0, p.mu23],
        &[p.mu13, p.mu23, 0.0],
    ])?;
    let system = QuantumSystem::new(Hermitian::from_real_diagonal(&h), mu)?;
    ControlTask::new(
        system,
        Hermitian::from_real_diagonal(&[1.0, 0.0, 0.0]),
        Hermitian::from_real_diagonal(&p.lambdas),
        p.horizon,
        Template::Lambda,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrapParams {
    pub eps0: f64,
    /// One-based rank of the initial state in the descending target order.
    pub k: usize,
    /// Target eigenvalues, strictly descending.
    pub lambdas: Vec<f64>,
    /// `labeling[r]` is the zero-based index, in ascending dressed energy, of the
    /// dressed state receiving `lambdas[r]`. Identity when absent.
    pub labeling: Option<Vec<usize>>,
    #[serde(rename = "T")]
    pub horizon: f64,
}

/// Builds `rho0 = |k~><k~|` and `O = sum_r lambda_r |r~><r~|` in the dressed basis
/// of `H0 - mu eps0`, after checking `<r~|mu|k~> = 0` for every rank `r < k`.
pub fn build_trap_instance(system: &QuantumSystem, p: &TrapParams) -> Result<ControlTask> {
    let n = system.dim();
    if p.lambdas.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} target eigenvalues for n = {n}",
            p.lambdas.len()
        )));
    }
    if !(1 < p.k && p.k < n) {
        return Err(Error::InvalidParameter(format!(
            "k = {} is not interior, need 1 < k < {n}",
            p.k
        )));
    }
    if let Some(w) = p
        .lambdas
        .windows(2)
        .find(|w| w[0] - w[1] <= SPECTRAL_GAP_TOL)
    {
        return Err(Error::InvalidParameter(format!(
            "target eigenvalues must be strictly descending, found {} then {}",
            w[0], w[1]
        )));
    }
    let labeling = match &p.labeling {
        Some(l) => {
            let mut seen = vec![false; n];
            if l.len() != n
                || l.iter()
                    .any(|&i| i >= n || std::mem::replace(&mut seen[i], true))
            {
                return Err(Error::InvalidParameter(format!(
                    "labeling {l:?} is not a permutation of 0..{n}"
                )));
            }
            l.clone()
        }
        None => (0..n).collect(),
    };

    let sp = dressed_basis(system, p.eps0)?;
    let states: Vec<DVector<Complex64>> = labeling
        .iter()
        .map(|&i| sp.eigenvectors.column(i))
        .collect();
    let target = &states[p.k - 1];
    let mu = system.mu().matrix();
    let scale = system.mu().frobenius_norm().max(1.0);
    let mu_k = mu * target;
    let offending: Vec<(usize, usize, f64)> = states[..p.k - 1]
        .iter()
        .enumerate()
        .map(|(r, s)| (r + 1, p.k, s.dotc(&mu_k).norm()))
        .filter(|&(_, _, v)| v > DIPOLE_ZERO_TOL * scale)
        .collect();
    if !offending.is_empty() {
        return Err(Error::DipoleCondition(offending));
    }

    let mut observable = Hermitian::zeros(n);
    for (s, &l) in states.iter().zip(&p.lambdas) {
        observable = observable.add_scaled(&Hermitian::projector(s), l);
    }
    ControlTask::new(
        system.clone(),
        Hermitian::projector(target),
        observable,
        p.horizon,
        Template::Custom,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DcpParams {
    /// Zero-based level indices, distinct.
    pub i: usize,
    pub j: usize,
    pub psi_phase: f64,
    pub phi_phase: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    /// Extra observable component with `Q|psi> = 0`; zero when absent.
    #[serde(skip)]
    pub q: Option<Hermitian>,
    pub eps0: f64,
}

/// Closed-form values the built instance should reproduce at `eps(t) = eps0`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DcpPredictions {
    pub alpha: f64,
    /// `(1 + cos alpha) / 2`.
    #[serde(rename = "J_at_eps0")]
    pub j_at_eps0: f64,
    /// `<psi|[rho0, O_T]|phi> = (1 + e^{i alpha})/2 * (1 - cos alpha)/2` as `[re, im]`.
    pub z_element: [f64; 2],
    pub z_abs: f64,
    /// Lower bound on `||[rho0, O_T]||_F`, equal to `|z_element|`.
    pub kcp_lower_bound: f64,
    /// Whether the construction used the bare basis (diagonal `H0 - mu eps0`).
    pub bare_basis: bool,
}

impl CsvTable for DcpPredictions {
    fn header(&self) -> Vec<String> {
        vec!["quantity".into(), "value".into()]
    }

    fn rows(&self) -> Vec<Vec<CsvCell>> {
        [
            ("alpha", self.alpha),
            ("J_at_eps0", self.j_at_eps0),
            ("z_re", self.z_element[0]),
            ("z_im", self.z_element[1]),
            ("z_abs", self.z_abs),
            ("kcp_lower_bound", self.kcp_lower_bound),
        ]
        .into_iter()
        .map(|(k, v)| vec![k.into(), v.into()])
        .collect()
    }
}

/// Superposition `(|a> + e^{i phase}|b>)/sqrt(2)` of two basis columns.
fn superpose(a: &DVector<Complex64>, b: &DVector<Complex64>, phase: f64) -> DVector<Complex64> {
    (a + b * Complex64::from_polar(1.0, phase)).unscale(std::f64::consts::SQRT_2)
}

/// A task whose constant control `eps0` is a dynamic but not kinematic critical
/// point: `rho0 = |psi><psi|`, `O = U_T (|phi><phi| + Q) U_T^dagger` with
/// `U_T = exp(-i T (H0 - mu eps0))`.
pub fn build_dcp_not_kcp(
    system: &QuantumSystem,
    p: &DcpParams,
) -> Result<(ControlTask, DcpPredictions)> {
    let n = system.dim();
    if p.i >= n || p.j >= n || p.i == p.j {
        return Err(Error::InvalidParameter(format!(
            "levels i = {}, j = {} must be distinct and below n = {n}",
            p.i, p.j
        )));
    }
    let alpha = p.phi_phase - p.psi_phase;
    if alpha.sin().abs() <= PHASE_TOL {
        return Err(Error::InvalidParameter(format!(
            "relative phase alpha = {alpha} is a multiple of pi"
        )));
    }
    let dressed = system.dressed(p.eps0);
    let bare_basis = dressed.is_diagonal();
    let basis: CMatrix = if bare_basis {
        CMatrix::identity(n, n)
    } else {
        dressed_basis(system, p.eps0)?.eigenvectors.matrix().clone()
    };
    let mu_d = system.mu().compress(&basis);
    let (mii, mjj) = (mu_d.matrix()[(p.i, p.i)].re, mu_d.matrix()[(p.j, p.j)].re);
    let scale = system.mu().frobenius_norm().max(1.0);
    if (mii - mjj).abs() > KERNEL_TOL * scale {
        return Err(Error::InvalidParameter(format!(
            "dipole diagonal elements differ in the {} basis: {mii} vs {mjj}",
            if bare_basis { "bare" } else { "dressed" }
        )));
    }

    let (ci, cj) = (
        basis.column(p.i).into_owned(),
        basis.column(p.j).into_owned(),
    );
    let psi = superpose(&ci, &cj, p.psi_phase);
    let phi = superpose(&ci, &cj, p.phi_phase);
    let mut at_t = Hermitian::projector(&phi);
    if let Some(q) = &p.q {
        if q.dim() != n {
            return Err(Error::DimensionMismatch(format!(
                "Q is {0}x{0}, n = {n}",
                q.dim()
            )));
        }
        let leak = (q.matrix() * &psi).norm();
        if leak > KERNEL_TOL * q.frobenius_norm().max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "Q|psi> has norm {leak:e}, expected 0"
            )));
        }
        at_t = at_t.add_scaled(q, 1.0);
    }
    let u_t = expm_generator(&dressed, p.horizon);
    let observable = at_t.conjugate_by(&u_t.adjoint());
    let task = ControlTask::new(
        system.clone(),
        Hermitian::projector(&psi),
        observable,
        p.horizon,
        Template::DcpNotKcp,
    )?;

    let z = (Complex64::new(1.0, 0.0) + Complex64::from_polar(1.0, alpha))
        * 0.5
        * (1.0 - alpha.cos())
        * 0.5;
    Ok((
        task,
        DcpPredictions {
            alpha,
            j_at_eps0: (1.0 + alpha.cos()) / 2.0,
            z_element: [z.re, z.im],
            z_abs: z.norm(),
            kcp_lower_bound: z.norm(),
            bare_basis,
        },
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LieRank {
    pub dimension: usize,
    /// `n^2`, the dimension of `u(n)`.
    pub full: usize,
    /// Dimension is `n^2` or `n^2 - 1` (`u(n)` or `su(n)`).
    pub controllable: bool,
    pub brackets_evaluated: usize,
}

impl CsvTable for LieRank {
    fn header(&self) -> Vec<String> {
        vec!["dimension".into(), "full".into(), "controllable".into()]
    }

    fn rows(&self) -> Vec<Vec<CsvCell>> {
        vec![vec![
            self.dimension.into(),
            self.full.into(),
            (if self.controllable { "true" } else { "false" }).into(),
        ]]
    }
}

/// Orthonormal basis of Hermitian matrices in Frobenius-isometric coordinates.
struct Span {
    coords: Vec<Vec<f64>>,
    elements: Vec<Hermitian>,
}

impl Span {
    /// Adds the component of `a` orthogonal to the span, if it is significant.
    fn try_add(&mut self, a: Hermitian) -> bool {
        let norm = a.frobenius_norm();
        if norm == 0.0 {
            return false;
        }
        let mut c: Vec<f64> = hermitian_coordinates(&a).iter().map(|x| x / norm).collect();
        // Two Gram-Schmidt passes keep the basis orthonormal to round-off.
        for _ in 0..2 {
            for b in &self.coords {
                let d: f64 = c.iter().zip(b).map(|(x, y)| x * y).sum();
                c.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
            }
        }
        let r = c.iter().map(|x| x * x).sum::<f64>().sqrt();
        if r <= LIE_RANK_TOL {
            return false;
        }
        c.iter_mut().for_each(|x| *x /= r);
        let n = a.dim();
        self.elements.push(from_coordinates(n, &c));
        self.coords.push(c);
        true
    }
}

fn from_coordinates(n: usize, c: &[f64]) -> Hermitian {
    let mut m = CMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = Complex64::new(c[i], 0.0);
    }
    let mut at = n;
    for i in 0..n {
        for j in i + 1..n {
            let z = Complex64::new(c[at], c[at + 1]) / std::f64::consts::SQRT_2;
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
            at += 2;
        }
    }
    Hermitian::from_raw(m)
}

/// Dimension of the real Lie algebra generated by `iH0` and `i mu`.
///
/// Elements are stored as Hermitian `A` standing for `iA`; the bracket
/// `[iA, iB] = i (i[A, B])` keeps that form.
pub fn lie_algebra_rank(system: &QuantumSystem) -> LieRank {
    let n = system.dim();
    let full = n * n;
    let cap = full * full;
    let mut span = Span {
        coords: Vec::new(),
        elements: Vec::new(),
    };
    span.try_add(system.h0().clone());
    span.try_add(system.mu().clone());
    let mut brackets = 0;
    let mut p = 1;
    'outer: while p < span.elements.len() && span.elements.len() < full {
        for q in 0..p {
            if brackets >= cap || span.elements.len() == full {
                break 'outer;
            }
            let c = commutator(span.elements[p].matrix(), span.elements[q].matrix());
            brackets += 1;
            span.try_add(Hermitian::from_raw(c * Complex64::i()));
        }
        p += 1;
    }
    let dimension = span.elements.len();
    LieRank {
        dimension,
        full,
        controllable: dimension + 1 >= full,
        brackets_evaluated: brackets,
    }
}
