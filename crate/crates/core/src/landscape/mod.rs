//! First- and second-order landscape kernels.
//!
//! With `V(t) = U^dagger(t) mu U(t)` and `O_T = U^dagger(T) O U(T)`:
//!
//! * gradient kernel `g(t) = i Tr{[rho0, O_T] V(t)}`, so that
//!   `dJ = integral g(t) d_eps(t) dt` for `H = H0 - mu eps(t)`;
//! * Hessian kernel `H(t1, t2) = Tr{O_T [2 V1 rho0 V2 - T[V1 V2] rho0 - rho0 Ta[V1 V2]]}`
//!   where `T` puts the later time on the left and `Ta` the earlier one.
//!
//! Both are sampled at interval midpoints. On the grid, the derivative of the
//! discretized objective with respect to `eps_m` is approximately `dt * g(t_m*)`,
//! and its Hessian approximately `dt^2 * H(t_m*, t_k*)`.

mod fd;
mod jacobian;

pub use fd::{fd_directional_second, fd_gradient, fd_hessian, FD_GRADIENT_STEP, FD_HESSIAN_STEP};
pub use jacobian::{hermitian_coordinates, jacobian_probe, jacobian_rank, JacobianProbe};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{commutator, spectral_decompose, trace_product, CMatrix, Hermitian};
use crate::par::map_indices;
use crate::propagator::{check_pair, propagate, PropagationResult};
use crate::report::{CsvCell, CsvTable};
use crate::system::{ControlField, ControlTask};

/// Imaginary residual tolerated in the (real) gradient traces.
const GRADIENT_IMAG_TOL: f64 = 1e-11;

/// Default Frobenius tolerance on `[rho0, O_T]` for the spectral form.
pub const DEFAULT_KCP_TOL: f64 = 1e-8;

/// Gradient kernel samples `g(t_m*)`, in units of objective per field per time.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradientVector {
    pub samples: Vec<f64>,
    pub dt: f64,
}

impl GradientVector {
    pub fn sup_norm(&self) -> f64 {
        self.samples.iter().fold(0.0, |a, g| a.max(g.abs()))
    }

    /// `dt * g`, the grid approximation to `dJ/d eps_m`.
    pub fn scaled(&self) -> Vec<f64> {
        self.samples.iter().map(|g| g * self.dt).collect()
    }
}

impl CsvTable for GradientVector {
    fn header(&self) -> Vec<String> {
        ["m", "t", "g", "dt_g"].map(String::from).to_vec()
    }

    fn rows(&self) -> Vec<Vec<CsvCell>> {
        self.samples
            .iter()
            .enumerate()
            .map(|(m, &g)| {
                vec![
                    m.into(),
                    ((m as f64 + 0.5) * self.dt).into(),
                    g.into(),
                    (g * self.dt).into(),
                ]
            })
            .collect()
    }
}

/// Hessian kernel samples `H(t_m*, t_k*)`.
#[derive(Clone, Debug, PartialEq)]
pub struct HessianMatrix {
    pub entries: DMatrix<f64>,
    pub dt: f64,
}

impl HessianMatrix {
    pub fn intervals(&self) -> usize {
        self.entries.nrows()
    }

    /// `dt^2 * H`, the grid Hessian of the discretized objective.
    pub fn weighted(&self) -> DMatrix<f64> {
        self.entries.scale(self.dt * self.dt)
    }

    /// Eigenvalues of [`Self::weighted`], ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut e: Vec<f64> = self
            .weighted()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect();
        e.sort_by(f64::total_cmp);
        e
    }

    /// Frobenius norm of [`Self::weighted`].
    pub fn weighted_norm(&self) -> f64 {
        self.entries.norm() * self.dt * self.dt
    }

    pub fn max_asymmetry(&self) -> f64 {
        (&self.entries - self.entries.transpose()).amax()
    }
}

impl Serialize for HessianMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let rows: Vec<Vec<f64>> = self
            .entries
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect();
        let mut st = s.serialize_struct("HessianMatrix", 2)?;
        st.serialize_field("dt", &self.dt)?;
        st.serialize_field("entries", &rows)?;
        st.end()
    }
}

impl CsvTable for HessianMatrix {
    fn header(&self) -> Vec<String> {
        (0..self.intervals()).map(|k| format!("k{k}")).collect()
    }

    fn rows(&self) -> Vec<Vec<CsvCell>> {
        self.entries
            .row_iter()
            .map(|r| r.iter().map(|&x| CsvCell::from(x)).collect())
            .collect()
    }
}

/// `h = h_plus - h_minus` split of the Hessian quadratic form at a KCP.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SpectralForm {
    pub h: f64,
    pub h_plus: f64,
    pub h_minus: f64,
}

/// Kernel gradient from an existing propagation.
pub fn gradient_from(prop: &PropagationResult, task: &ControlTask) -> Result<GradientVector> {
    let z = commutator(task.rho0().matrix(), prop.o_t.matrix());
    let scale = z.norm().max(1.0) * task.system().mu().frobenius_norm().max(1.0);
    let mut samples = Vec::with_capacity(prop.intervals());
    for v in &prop.heisenberg_dipoles {
        let val = Complex64::i() * trace_product(&z, v.matrix());
        if val.im.abs() > GRADIENT_IMAG_TOL * scale {
            return Err(Error::Numerical(format!(
                "gradient trace has imaginary residual {:e}",
                val.im
            )));
        }
        samples.push(val.re);
    }
    Ok(GradientVector {
        samples,
        dt: prop.dt,
    })
}

pub fn gradient_kernel(task: &ControlTask, field: &ControlField) -> Result<GradientVector> {
    gradient_from(&propagate(task, field)?, task)
}

/// Exact derivative of the piecewise-constant objective with respect to each
/// amplitude.
///
/// On interval `m`, `d/d eps_m e^{-i H_m dt}` is the Frechet derivative of the
/// exponential in direction `-mu`, evaluated in the eigenbasis of `H_m` through
/// divided differences of `e^{-i lambda dt}`. Then
/// `dJ/d eps_m = 2 Re Tr[D_m U(t_{m-1}) rho0 O_T U^dagger(t_m)]`.
pub fn gradient_discrete(task: &ControlTask, field: &ControlField) -> Result<Vec<f64>> {
    let prop = propagate(task, field)?;
    let dt = field.dt();
    let rho_ot = task.rho0().matrix() * prop.o_t.matrix();
    let neg_mu = -task.system().mu().matrix();
    Ok(map_indices(field.intervals(), |m| {
        let sp = spectral_decompose(&task.system().dressed(field.values()[m]));
        let q = sp.eigenvectors.matrix();
        let mut e = q.adjoint() * &neg_mu * q;
        let lam = &sp.eigenvalues;
        for a in 0..lam.len() {
            for b in 0..lam.len() {
                e[(a, b)] *= exp_divided_difference(lam[a], lam[b], dt);
            }
        }
        let d = q * e * q.adjoint();
        let x = prop.boundary_unitaries[m].matrix()
            * &rho_ot
            * prop.boundary_unitaries[m + 1].matrix().adjoint();
        2.0 * trace_product(&d, &x).re
    }))
}

/// `(f(a) - f(b)) / (a - b)` for `f(x) = e^{-i x dt}`, written as
/// `-i dt e^{-i dt (a+b)/2} sinc(dt (a-b)/2)` so it stays accurate as `a -> b`.
fn exp_divided_difference(a: f64, b: f64, dt: f64) -> Complex64 {
    let x = 0.5 * dt * (a - b);
    let sinc = if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    };
    Complex64::new(0.0, -dt) * Complex64::from_polar(sinc, -0.5 * dt * (a + b))
}

/// Hessian kernel from an existing propagation.
///
/// For `m >= k` (so `t_m*` is the later time),
/// `H_mk = Re Tr[W_m V_k]` with `W_m = 2 O_T V_m rho0 - rho0 O_T V_m - V_m O_T rho0`;
/// the diagonal reduces to the unordered product `V_m^2`. Rows are independent
/// and the upper triangle is mirrored, so the matrix is exactly symmetric.
pub fn hessian_from(prop: &PropagationResult, task: &ControlTask) -> HessianMatrix {
    let rho = task.rho0().matrix();
    let ot = prop.o_t.matrix();
    let ot_rho = ot * rho;
    let rho_ot = rho * ot;
    let dipoles = &prop.heisenberg_dipoles;
    let m_len = dipoles.len();
    let w: Vec<CMatrix> = map_indices(m_len, |m| {
        let v = dipoles[m].matrix();
        (ot * v * rho).scale(2.0) - &rho_ot * v - v * &ot_rho
    });
    let rows: Vec<Vec<f64>> = map_indices(m_len, |m| {
        (0..=m)
            .map(|k| trace_product(&w[m], dipoles[k].matrix()).re)
            .collect()
    });
    let mut entries = DMatrix::zeros(m_len, m_len);
    for (m, row) in rows.iter().enumerate() {
        for (k, &x) in row.iter().enumerate() {
            entries[(m, k)] = x;
            entries[(k, m)] = x;
        }
    }
    HessianMatrix {
        entries,
        dt: prop.dt,
    }
}

pub fn hessian_kernel(task: &ControlTask, field: &ControlField) -> Result<HessianMatrix> {
    Ok(hessian_from(&propagate(task, field)?, task))
}

/// `h(f) = sum_{m,k} f_m f_k H_mk dt^2`.
pub fn quadratic_form(hessian: &HessianMatrix, f: &[f64]) -> Result<f64> {
    if f.len() != hessian.intervals() {
        return Err(Error::DimensionMismatch(format!(
            "direction has {} samples, Hessian is {}x{}",
            f.len(),
            hessian.intervals(),
            hessian.intervals()
        )));
    }
    let fv = DVector::from_column_slice(f);
    Ok(fv.dot(&(&hessian.entries * &fv)) * hessian.dt * hessian.dt)
}

/// `V_f = sum_m f_m V(t_m*) dt`.
pub fn smeared_dipole(prop: &PropagationResult, f: &[f64]) -> Result<Hermitian> {
    if f.len() != prop.intervals() {
        return Err(Error::DimensionMismatch(format!(
            "direction has {} samples, grid has {}",
            f.len(),
            prop.intervals()
        )));
    }
    let n = prop.o_t.dim();
    let mut acc = CMatrix::zeros(n, n);
    for (v, &fm) in prop.heisenberg_dipoles.iter().zip(f) {
        acc += v.matrix().scale(fm * prop.dt);
    }
    Ok(Hermitian::from_raw(acc))
}

/// A common eigenvector of `rho0` and `O_T` with its two eigenvalues.
#[derive(Clone, Debug)]
pub struct CommonEigenpair {
    pub vector: DVector<Complex64>,
    /// Population `omega_k = <phi_k|rho0|phi_k>`.
    pub weight: f64,
    /// `lambda_k = <phi_k|O_T|phi_k>`.
    pub value: f64,
}

/// Joint eigenbasis of two (nearly) commuting Hermitian matrices.
///
/// `rho0` is diagonalized first; its eigenvalues are grouped into clusters
/// separated by more than `cluster_tol`, and `O_T` is diagonalized inside each
/// cluster's eigenspace. Off-diagonal residue below the commutator tolerance is
/// discarded.
pub fn common_eigenbasis(
    rho: &Hermitian,
    ot: &Hermitian,
    cluster_tol: f64,
) -> Vec<CommonEigenpair> {
    let sp = spectral_decompose(rho);
    let q = sp.eigenvectors.matrix();
    let n = rho.dim();
    let mut out = Vec::with_capacity(n);
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && sp.eigenvalues[end] - sp.eigenvalues[end - 1] <= cluster_tol {
            end += 1;
        }
        let block = q.columns(start, end - start).into_owned();
        let inner = spectral_decompose(&ot.compress(&block));
        let vectors = &block * inner.eigenvectors.matrix();
        for c in 0..vectors.ncols() {
            let v = vectors.column(c).into_owned();
            let weight = (v.adjoint() * rho.matrix() * &v)[(0, 0)].re;
            let value = (v.adjoint() * ot.matrix() * &v)[(0, 0)].re;
            out.push(CommonEigenpair {
                vector: v,
                weight,
                value,
            });
        }
        start = end;
    }
    out
}

/// Splits a KCP quadratic form into its non-negative parts given the joint
/// eigenbasis and the smeared dipole.
///
/// `Tr[(2 V rho V - V^2 rho - rho V^2) O_T]` expands to twice the pair sum, so each
/// term carries a factor 2; this keeps `h` equal to the kernel quadratic form.
pub fn split_form(basis: &[CommonEigenpair], v_f: &Hermitian) -> SpectralForm {
    let mut h_plus = 0.0;
    let mut h_minus = 0.0;
    let vf = v_f.matrix();
    let images: Vec<DVector<Complex64>> = basis.iter().map(|p| vf * &p.vector).collect();
    for pk in basis {
        if pk.weight == 0.0 {
            continue;
        }
        for (pi, img) in basis.iter().zip(&images) {
            let gap = pi.value - pk.value;
            if gap == 0.0 {
                continue;
            }
            let amp = pk.vector.dotc(img).norm_sqr();
            let term = 2.0 * pk.weight * gap.abs() * amp;
            if gap > 0.0 {
                h_plus += term;
            } else {
                h_minus += term;
            }
        }
    }
    SpectralForm {
        h: h_plus - h_minus,
        h_plus: h_plus.max(0.0),
        h_minus: h_minus.max(0.0),
    }
}

/// Spectral form of the Hessian at a kinematic critical point:
/// `h(f) = 2 sum_{k,i} omega_k (lambda_i - lambda_k) |<phi_k|V_f|phi_i>|^2`, split
/// into `h_plus` (pairs with `lambda_i > lambda_k`) and `h_minus`.
pub fn spectral_form(
    task: &ControlTask,
    field: &ControlField,
    f: &[f64],
    kcp_tol: f64,
) -> Result<SpectralForm> {
    check_pair(task, field)?;
    let prop = propagate(task, field)?;
    spectral_form_from(&prop, task, f, kcp_tol)
}

pub fn spectral_form_from(
    prop: &PropagationResult,
    task: &ControlTask,
    f: &[f64],
    kcp_tol: f64,
) -> Result<SpectralForm> {
    let residual = commutator(task.rho0().matrix(), prop.o_t.matrix()).norm();
    if residual > kcp_tol {
        return Err(Error::NotKcp {
            residual,
            tolerance: kcp_tol,
        });
    }
    let basis = common_eigenbasis(task.rho0(), &prop.o_t, kcp_tol.max(1e-10));
    Ok(split_form(&basis, &smeared_dipole(prop, f)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random_hermitian;
    use crate::system::{QuantumSystem, Template};

    pub(crate) fn lambda_task() -> ControlTask {
        let sys = QuantumSystem::new(
            Hermitian::from_real_diagonal(&[0.0, 1.0, 2.5]),
            Hermitian::from_real_rows(&[&[0.0, 0.0, 1.0], &[0.0, 0.0, 1.0], &[1.0, 1.0, 0.0]])
                .unwrap(),
        )
        .unwrap();
        ControlTask::new(
            sys,
            Hermitian::from_real_diagonal(&[1.0, 0.0, 0.0]),
            Hermitian::from_real_diagonal(&[1.0, 2.0, 0.0]),
            5.0,
            Template::Lambda,
        )
        .unwrap()
    }

    fn random_task(n: usize, seed: u64) -> ControlTask {
        let sys = QuantumSystem::new(
            random_hermitian(n, seed).unwrap(),
            random_hermitian(n, seed + 1).unwrap(),
        )
        .unwrap();
        let mut w = vec![0.0; n];
        w[0] = 0.6;
        w[1] = 0.3;
        w[n - 1] += 0.1;
        ControlTask::new(
            sys,
            Hermitian::from_real_diagonal(&w),
            random_hermitian(n, seed + 2).unwrap(),
            1.0,
            Template::Custom,
        )
        .unwrap()
    }

    fn zero_mu(task: &ControlTask) -> ControlTask {
        let n = task.dim();
        task.with_system(
            QuantumSystem::new(task.system().h0().clone(), Hermitian::zeros(n)).unwrap(),
        )
        .unwrap()
    }

    fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt();
        let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
        num / den.max(1e-12)
    }

    #[test]
    fn gradient_vanishes_at_lambda_trap() {
        let task = lambda_task();
        let field = ControlField::zeros(5.0, 64).unwrap();
        let g = gradient_kernel(&task, &field).unwrap();
        assert!(g.sup_norm() <= 1e-14);
        let d = gradient_discrete(&task, &field).unwrap();
        assert!(d.iter().all(|x| x.abs() <= 1e-12));
    }

    #[test]
    fn zero_dipole_gives_flat_landscape() {
        let task = zero_mu(&random_task(3, 4));
        let field = ControlField::random_uniform(1.0, 8, 1.0, 1).unwrap();
        assert!(gradient_discrete(&task, &field)
            .unwrap()
            .iter()
            .all(|&x| x == 0.0));
        assert!(gradient_kernel(&task, &field).unwrap().sup_norm() == 0.0);
        assert!(hessian_kernel(&task, &field).unwrap().entries.amax() == 0.0);
        assert!(fd_gradient(&task, &field, 1e-5)
            .unwrap()
            .iter()
            .all(|&x| x == 0.0));
    }

    #[test]
    fn discrete_gradient_matches_finite_differences_seed_9() {
        let task = random_task(2, 9);
        let field = ControlField::random_uniform(1.0, 12, 1.0, 9).unwrap();
        let exact = gradient_discrete(&task, &field).unwrap();
        let fd = fd_gradient(&task, &field, 1e-5).unwrap();
        assert!(rel_l2(&exact, &fd) <= 1e-7, "{:e}", rel_l2(&exact, &fd));
    }

    #[test]
    fn kernel_gradient_tracks_finite_differences_seed_5() {
        let task = random_task(3, 5);
        for m in [32usize, 64, 128] {
            let field = ControlField::random_uniform(1.0, m, 1.0, 5).unwrap();
            let g = gradient_kernel(&task, &field).unwrap().scaled();
            let fd = fd_gradient(&task, &field, 1e-5).unwrap();
            let err = rel_l2(&g, &fd);
            assert!(err <= 3.0 / m as f64, "M={m}: {err:e}");
        }
    }

    #[test]
    fn hessian_directional_matches_finite_differences_seed_11() {
        let task = random_task(3, 11);
        let m = 64;
        let field = ControlField::from_envelope(1.0, m, |t| 0.7 * (3.0 * t).sin()).unwrap();
        let dir: Vec<f64> = (0..m).map(|i| ((i as f64) * 0.37).cos()).collect();
        let h = hessian_kernel(&task, &field).unwrap();
        let kernel = quadratic_form(&h, &dir).unwrap();
        let fd = fd_directional_second(&task, &field, &dir, FD_HESSIAN_STEP).unwrap();
        let err = (kernel - fd).abs() / fd.abs();
        assert!(err <= 5.0 / m as f64, "{err:e}");
    }

    #[test]
    fn hessian_kernel_is_symmetric() {
        let task = random_task(4, 2);
        let field = ControlField::random_uniform(1.0, 20, 1.0, 2).unwrap();
        let h = hessian_kernel(&task, &field).unwrap();
        assert!(h.max_asymmetry() <= 1e-10 * h.entries.norm().max(1.0));
    }

    #[test]
    fn quadratic_form_basics() {
        let h = HessianMatrix {
            entries: DMatrix::identity(4, 4),
            dt: 0.5,
        };
        assert_eq!(quadratic_form(&h, &[0.0; 4]).unwrap(), 0.0);
        assert_eq!(quadratic_form(&h, &[0.0, 1.0, 0.0, 0.0]).unwrap(), 0.25);
        assert!(quadratic_form(&h, &[1.0; 3]).is_err());
        let f = [0.3, -1.0, 2.0, 0.5];
        let neg: Vec<f64> = f.iter().map(|x| -x).collect();
        assert_eq!(
            quadratic_form(&h, &f).unwrap(),
            quadratic_form(&h, &neg).unwrap()
        );
    }

    #[test]
    fn lambda_trap_hessian_is_negative_semidefinite() {
        let task = lambda_task();
        let field = ControlField::zeros(5.0, 128).unwrap();
        let h = hessian_kernel(&task, &field).unwrap();
        let eig = h.eigenvalues();
        assert!(*eig.last().unwrap() <= 1e-10 * h.weighted_norm());
        assert!(eig[0] < -1e-3 * h.weighted_norm());
    }

    #[test]
    fn lambda_spectral_form_has_no_positive_part() {
        let task = lambda_task();
        let field = ControlField::zeros(5.0, 64).unwrap();
        let dir: Vec<f64> = (0..64).map(|i| ((i * 7 % 13) as f64) - 6.0).collect();
        let s = spectral_form(&task, &field, &dir, DEFAULT_KCP_TOL).unwrap();
        assert!(s.h_plus <= 1e-20);
        assert!(s.h_minus > 0.0);
        let h = hessian_kernel(&task, &field).unwrap();
        let q = quadratic_form(&h, &dir).unwrap();
        assert!((s.h - q).abs() <= 1e-12 * q.abs().max(1.0), "{s:?} {q}");
    }

    #[test]
    fn spectral_form_refuses_non_kcp() {
        let task = random_task(3, 3);
        let field = ControlField::random_uniform(1.0, 8, 1.0, 3).unwrap();
        let r = spectral_form(&task, &field, &[1.0; 8], DEFAULT_KCP_TOL);
        assert!(matches!(r, Err(Error::NotKcp { .. })));
    }

    #[test]
    fn divided_difference_limits() {
        let dt = 0.3;
        let a = 1.7;
        let d = exp_divided_difference(a, a, dt);
        let deriv = Complex64::new(0.0, -dt) * Complex64::from_polar(1.0, -a * dt);
        assert!((d - deriv).norm() < 1e-15);
        let b = 0.2;
        let direct =
            (Complex64::from_polar(1.0, -a * dt) - Complex64::from_polar(1.0, -b * dt)) / (a - b);
        assert!((exp_divided_difference(a, b, dt) - direct).norm() < 1e-14);
    }
}
