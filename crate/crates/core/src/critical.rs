//! Critical-point classification and second-order trap certification.
//!
//! A field is a dynamic critical point (DCP) when the gradient kernel vanishes on
//! the grid, and a kinematic critical point (KCP) when `[rho0, O_T] = 0`. Every KCP
//! is a DCP; the converse can fail when the control Jacobian is rank deficient.
//! Labels derived from the Hessian are second-order statements only, hence the
//! `*_CANDIDATE` names.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::landscape::{
    common_eigenbasis, gradient_from, hessian_from, smeared_dipole, split_form, HessianMatrix,
};
use crate::linalg::{commutator, spectral_decompose, Hermitian};
use crate::par::map_indices;
use crate::propagator::{evolved_observable, propagate, PropagationResult};
use crate::report::{CsvCell, CsvTable};
use crate::system::{kinematic_bounds, ControlField, ControlTask, QuantumSystem};

/// Thresholds used to turn residuals into labels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Tolerances {
    /// Sup-norm of the gradient kernel below which a field is a DCP.
    pub grad: f64,
    /// Frobenius norm of `[rho0, O_T]` below which a field is a KCP.
    pub kcp: f64,
    /// Relative eigenvalue slack for semidefiniteness, times `max(1, ||H||_F)`.
    pub hess: f64,
    /// Objective gap, relative to `Jmax - Jmin`, separating a trap from the maximum.
    pub objective_rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            grad: 1e-10,
            kcp: 1e-8,
            hess: 1e-9,
            objective_rel: 1e-6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Label {
    NotCritical,
    Dcp,
    Kcp,
    DcpNotKcp,
    NegSemidefinite,
    PosSemidefinite,
    Indefinite,
    SecondOrderTrapCandidate,
    GlobalMaxCandidate,
    GlobalMinCandidate,
}

#[derive(Clone, Debug, Serialize)]
pub struct CriticalReport {
    pub intervals: usize,
    pub dt: f64,
    /// Sup-norm of the gradient kernel on the grid.
    pub grad_norm: f64,
    /// `||[rho0, O_T]||_F`.
    pub kcp_residual: f64,
    /// Eigenvalues of the `dt^2`-weighted Hessian, ascending.
    pub hessian_eigs: Vec<f64>,
    pub hessian_frobenius: f64,
    #[serde(rename = "J")]
    pub objective: f64,
    #[serde(rename = "Jmin")]
    pub jmin: f64,
    #[serde(rename = "Jmax")]
    pub jmax: f64,
    pub labels: BTreeSet<Label>,
}

impl CriticalReport {
    pub fn has(&self, label: Label) -> bool {
        self.labels.contains(&label)
    }
}

impl CsvTable for CriticalReport {
    fn header(&self) -> Vec<String> {
        vec!["index".into(), "eigenvalue".into()]
    }

    fn rows(&self) -> Vec<Vec<CsvCell>> {
        self.hessian_eigs
            .iter()
            .enumerate()
            .map(|(i, &e)| vec![i.into(), e.into()])
            .collect()
    }
}

fn commutator_norm(a: &Hermitian, b: &Hermitian) -> f64 {
    commutator(a.matrix(), b.matrix()).norm()
}

/// `||[rho0, O_T]||_F`.
pub fn kcp_residual(task: &ControlTask, field: &ControlField) -> Result<f64> {
    Ok(commutator_norm(
        task.rho0(),
        &evolved_observable(task, field)?,
    ))
}

/// `max_m |Tr{[rho0, O_T] V(t_m*)}|`.
pub fn dcp_residual(task: &ControlTask, field: &ControlField) -> Result<f64> {
    Ok(gradient_from(&propagate(task, field)?, task)?.sup_norm())
}

fn semidefinite_labels(eigs: &[f64], norm: f64, tol: f64) -> (bool, bool) {
    let slack = tol * norm.max(1.0);
    let nsd = eigs.last().is_none_or(|&e| e <= slack);
    let psd = eigs.first().is_none_or(|&e| e >= -slack);
    (nsd, psd)
}

pub fn classify(
    task: &ControlTask,
    field: &ControlField,
    tol: &Tolerances,
) -> Result<CriticalReport> {
    let prop = propagate(task, field)?;
    classify_from(&prop, task, tol)
}

pub fn classify_from(
    prop: &PropagationResult,
    task: &ControlTask,
    tol: &Tolerances,
) -> Result<CriticalReport> {
    let grad = gradient_from(prop, task)?;
    let kcp_res = commutator_norm(task.rho0(), &prop.o_t);
    let hess = hessian_from(prop, task);
    let eigs = hess.eigenvalues();
    let norm = hess.weighted_norm();
    let objective = prop.objective(task)?;
    let bounds = kinematic_bounds(task);
    let tol_j = tol.objective_rel * (bounds.jmax - bounds.jmin);

    let mut labels = BTreeSet::new();
    let dcp = grad.sup_norm() <= tol.grad;
    let kcp = kcp_res <= tol.kcp;
    let (nsd, psd) = semidefinite_labels(&eigs, norm, tol.hess);
    if dcp {
        labels.insert(Label::Dcp);
    } else {
        labels.insert(Label::NotCritical);
    }
    if kcp {
        labels.insert(Label::Kcp);
    }
    if dcp && !kcp {
        labels.insert(Label::DcpNotKcp);
    }
    if nsd {
        labels.insert(Label::NegSemidefinite);
    }
    if psd {
        labels.insert(Label::PosSemidefinite);
    }
    if !nsd && !psd {
        labels.insert(Label::Indefinite);
    }
    if dcp && nsd {
        if objective < bounds.jmax - tol_j {
            labels.insert(Label::SecondOrderTrapCandidate);
        } else {
            labels.insert(Label::GlobalMaxCandidate);
        }
    }
    if dcp && psd && objective <= bounds.jmin + tol_j {
        labels.insert(Label::GlobalMinCandidate);
    }
    Ok(CriticalReport {
        intervals: prop.intervals(),
        dt: prop.dt,
        grad_norm: grad.sup_norm(),
        kcp_residual: kcp_res,
        hessian_eigs: eigs,
        hessian_frobenius: norm,
        objective,
        jmin: bounds.jmin,
        jmax: bounds.jmax,
        labels,
    })
}

/// Gap below which dressed energies or target eigenvalues count as degenerate.
pub const SPECTRAL_GAP_TOL: f64 = 1e-10;
/// Required overlap of `rho0` with a dressed eigenstate.
pub const PURITY_TOL: f64 = 1e-10;
/// Largest dressed dipole element accepted as zero, relative to `max(1, ||mu||_F)`.
pub const DIPOLE_ZERO_TOL: f64 = 1e-12;

/// Analytic check of the constant-control trap conditions in the dressed basis
/// of `H0 - mu eps0`.
#[derive(Clone, Debug, Serialize)]
pub struct TrapCertificate {
    pub holds: bool,
    pub eps0: f64,
    /// Dressed energies, ascending.
    pub dressed_energies: Vec<f64>,
    /// One-based rank of `rho0`'s dressed state when dressed states are ordered by
    /// descending target eigenvalue.
    pub k: usize,
    pub n: usize,
    /// `rho0` is a dressed eigenprojector.
    pub pure_dressed_state_ok: bool,
    /// `O` is diagonal in the dressed basis with strictly descending, distinct values.
    pub lambda_ordering_ok: bool,
    /// `<i~|mu|k~> = 0` for every dressed state ranked above `k`.
    pub mu_zero_block_ok: bool,
    /// `1 < k < n`.
    pub k_interior_ok: bool,
    pub details: CertificateDetails,
}

#[derive(Clone, Debug, Serialize)]
pub struct CertificateDetails {
    /// `<k~|rho0|k~>`.
    pub state_overlap: f64,
    /// Largest off-diagonal magnitude of `O` in the dressed basis.
    pub observable_offdiagonal: f64,
    /// Target eigenvalues in descending order (the ranking used for `k`).
    pub lambdas_descending: Vec<f64>,
    /// Smallest gap between consecutive ranked target eigenvalues.
    pub min_lambda_gap: f64,
    /// `|<i~|mu|k~>|` for each state ranked above `k`, in rank order.
    pub mu_block: Vec<f64>,
}

impl CsvTable for TrapCertificate {
    fn header(&self) -> Vec<String> {
        vec!["condition".into(), "ok".into()]
    }

    fn rows(&self) -> Vec<Vec<CsvCell>> {
        [
            ("pure_dressed_state", self.pure_dressed_state_ok),
            ("lambda_ordering", self.lambda_ordering_ok),
            ("mu_zero_block", self.mu_zero_block_ok),
            ("k_interior", self.k_interior_ok),
            ("holds", self.holds),
        ]
        .into_iter()
        .map(|(name, ok)| vec![name.into(), (if ok { "true" } else { "false" }).into()])
        .collect()
    }
}

/// Dressed eigenbasis of `H0 - mu eps0`, refusing degenerate spectra.
pub(crate) fn dressed_basis(
    system: &QuantumSystem,
    eps0: f64,
) -> Result<crate::linalg::SpectralPair> {
    let sp = spectral_decompose(&system.dressed(eps0));
    for w in sp.eigenvalues.windows(2) {
        if w[1] - w[0] <= SPECTRAL_GAP_TOL {
            return Err(Error::DegenerateDressedSpectrum {
                first: w[0],
                second: w[1],
                tolerance: SPECTRAL_GAP_TOL,
            });
        }
    }
    Ok(sp)
}

pub fn trap_certificate(task: &ControlTask, eps0: f64) -> Result<TrapCertificate> {
    let n = task.dim();
    let sp = dressed_basis(task.system(), eps0)?;
    let q = sp.eigenvectors.matrix();

    let o_d = task.observable().compress(q);
    let mut off = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                off = off.max(o_d.matrix()[(i, j)].norm());
            }
        }
    }
    let lambdas: Vec<f64> = (0..n).map(|i| o_d.matrix()[(i, i)].re).collect();
    let mut ranked: Vec<usize> = (0..n).collect();
    ranked.sort_by(|&a, &b| lambdas[b].total_cmp(&lambdas[a]));
    let lambdas_descending: Vec<f64> = ranked.iter().map(|&i| lambdas[i]).collect();
    let min_gap = lambdas_descending
        .windows(2)
        .map(|w| w[0] - w[1])
        .fold(f64::INFINITY, f64::min);
    let lambda_ordering_ok = off <= SPECTRAL_GAP_TOL && min_gap > SPECTRAL_GAP_TOL;

    let rho_d = task.rho0().compress(q);
    let (best, overlap) = (0..n)
        .map(|i| (i, rho_d.matrix()[(i, i)].re))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("n >= 2");
    let pure_dressed_state_ok = overlap >= 1.0 - PURITY_TOL;
    let rank_of_k = ranked
        .iter()
        .position(|&i| i == best)
        .expect("ranked is a permutation");
    let k = rank_of_k + 1;

    let mu_d = task.system().mu().compress(q);
    let mu_scale = task.system().mu().frobenius_norm().max(1.0);
    let mu_block: Vec<f64> = ranked[..rank_of_k]
        .iter()
        .map(|&i| mu_d.matrix()[(i, best)].norm())
        .collect();
    let mu_zero_block_ok = mu_block.iter().all(|&m| m <= DIPOLE_ZERO_TOL * mu_scale);
    let k_interior_ok = 1 < k && k < n;

    Ok(TrapCertificate {
        holds: pure_dressed_state_ok && lambda_ordering_ok && mu_zero_block_ok && k_interior_ok,
        eps0,
        dressed_energies: sp.eigenvalues.clone(),
        k,
        n,
        pure_dressed_state_ok,
        lambda_ordering_ok,
        mu_zero_block_ok,
        k_interior_ok,
        details: CertificateDetails {
            state_overlap: overlap,
            observable_offdiagonal: off,
            lambdas_descending,
            min_lambda_gap: min_gap,
            mu_block,
        },
    })
}

/// Bound on `h_plus` (and `h_minus` for the minimum case) over random probes.
pub const PROBE_FORM_TOL: f64 = 1e-10;

/// Outcome of the grid-based second-order trap test.
#[derive(Clone, Debug, Serialize)]
pub struct TrapVerdict {
    pub dcp_residual: f64,
    pub dcp_ok: bool,
    pub kcp_residual: f64,
    pub kcp_ok: bool,
    pub probes: usize,
    /// Largest `h_plus` over the probes; absent when the point is not a KCP.
    pub max_h_plus: Option<f64>,
    pub max_h_minus: Option<f64>,
    pub h_plus_ok: bool,
    pub h_minus_ok: bool,
    pub max_hessian_eig: f64,
    pub min_hessian_eig: f64,
    pub hessian_frobenius: f64,
    pub negative_semidefinite_ok: bool,
    pub positive_semidefinite_ok: bool,
    /// All trap checks: DCP, KCP, vanishing `h_plus`, negative semidefinite Hessian.
    pub passed: bool,
}

impl CsvTable for TrapVerdict {
    fn header(&self) -> Vec<String> {
        vec!["check".into(), "value".into(), "ok".into()]
    }

    fn rows(&self) -> Vec<Vec<CsvCell>> {
        let flag = |b: bool| CsvCell::from(if b { "true" } else { "false" });
        let opt = |v: Option<f64>| v.map(CsvCell::from).unwrap_or(CsvCell::from("NA"));
        vec![
            vec![
                "dcp_residual".into(),
                self.dcp_residual.into(),
                flag(self.dcp_ok),
            ],
            vec![
                "kcp_residual".into(),
                self.kcp_residual.into(),
                flag(self.kcp_ok),
            ],
            vec![
                "max_h_plus".into(),
                opt(self.max_h_plus),
                flag(self.h_plus_ok),
            ],
            vec![
                "max_h_minus".into(),
                opt(self.max_h_minus),
                flag(self.h_minus_ok),
            ],
            vec![
                "max_hessian_eig".into(),
                self.max_hessian_eig.into(),
                flag(self.negative_semidefinite_ok),
            ],
            vec![
                "min_hessian_eig".into(),
                self.min_hessian_eig.into(),
                flag(self.positive_semidefinite_ok),
            ],
        ]
    }
}

/// Standard-normal probe direction for probe `index`, independent of all others.
pub fn probe_direction(len: usize, seed: u64, index: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(index as u64));
    (0..len).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Checks the trap conditions numerically on the grid: DCP and KCP residuals,
/// `h_plus(f)` over `probes` random directions, and the Hessian spectrum.
pub fn second_order_trap_numeric(
    task: &ControlTask,
    field: &ControlField,
    probes: usize,
    seed: u64,
    tol: &Tolerances,
) -> Result<TrapVerdict> {
    let prop = propagate(task, field)?;
    let dcp_residual = gradient_from(&prop, task)?.sup_norm();
    let kcp_residual = commutator_norm(task.rho0(), &prop.o_t);
    let kcp_ok = kcp_residual <= tol.kcp;

    let (max_h_plus, max_h_minus) = if kcp_ok {
        let basis = common_eigenbasis(task.rho0(), &prop.o_t, tol.kcp.max(1e-10));
        let forms: Vec<Result<(f64, f64)>> = map_indices(probes, |p| {
            let f = probe_direction(prop.intervals(), seed, p);
            let s = split_form(&basis, &smeared_dipole(&prop, &f)?);
            Ok((s.h_plus, s.h_minus))
        });
        let mut hp = 0.0_f64;
        let mut hm = 0.0_f64;
        for r in forms {
            let (p, m) = r?;
            hp = hp.max(p);
            hm = hm.max(m);
        }
        (Some(hp), Some(hm))
    } else {
        (None, None)
    };

    let hess: HessianMatrix = hessian_from(&prop, task);
    let eigs = hess.eigenvalues();
    let norm = hess.weighted_norm();
    let max_eig = eigs.last().copied().unwrap_or(0.0);
    let min_eig = eigs.first().copied().unwrap_or(0.0);
    let dcp_ok = dcp_residual <= tol.grad;
    let h_plus_ok = max_h_plus.is_some_and(|h| h <= PROBE_FORM_TOL);
    let h_minus_ok = max_h_minus.is_some_and(|h| h <= PROBE_FORM_TOL);
    let negative_semidefinite_ok = max_eig <= tol.hess * norm;
    let positive_semidefinite_ok = min_eig >= -tol.hess * norm;
    Ok(TrapVerdict {
        dcp_residual,
        dcp_ok,
        kcp_residual,
        kcp_ok,
        probes,
        max_h_plus,
        max_h_minus,
        h_plus_ok,
        h_minus_ok,
        max_hessian_eig: max_eig,
        min_hessian_eig: min_eig,
        hessian_frobenius: norm,
        negative_semidefinite_ok,
        positive_semidefinite_ok,
        passed: dcp_ok && kcp_ok && h_plus_ok && negative_semidefinite_ok,
    })
}
