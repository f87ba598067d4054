//! Acceptance checks. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any criterion fails.

use std::f64::consts::{FRAC_PI_2, PI};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use landscape_core::constructions::{
    build_dcp_not_kcp, build_lambda, lie_algebra_rank, DcpParams, LambdaParams,
};
use landscape_core::critical::{
    classify, kcp_residual, second_order_trap_numeric, trap_certificate, Label, Tolerances,
};
use landscape_core::landscape::{
    common_eigenbasis, fd_directional_second, fd_gradient, gradient_discrete, gradient_kernel,
    hessian_kernel, jacobian_probe, quadratic_form, spectral_form, split_form, FD_GRADIENT_STEP,
    FD_HESSIAN_STEP,
};
use landscape_core::linalg::{random_hermitian, Hermitian};
use landscape_core::optimizer::{gradient_ascent, multistart, AscentConfig, Termination};
use landscape_core::propagator::objective;
use landscape_core::system::{ControlField, ControlTask, QuantumSystem, Template};

type Check = Result<String, String>;
type Criterion = (usize, &'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e<E: std::fmt::Debug>(err: E) -> String {
    format!("{err:?}")
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let took = start.elapsed();
    ensure(took < limit, || {
        format!("runtime {took:.2?} exceeds {limit:?}")
    })
}

fn lambda_with_state(level: usize) -> ControlTask {
    let task = build_lambda(&LambdaParams::default()).unwrap();
    let mut d = [0.0; 3];
    d[level] = 1.0;
    task.with_rho0(Hermitian::from_real_diagonal(&d)).unwrap()
}

fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den
}

/// Smooth function of time `sum_k c_k cos(w_k t + p_k)`.
#[derive(Clone, Debug)]
struct Wave(Vec<(f64, f64, f64)>);

impl Wave {
    fn random(rng: &mut ChaCha8Rng, amplitude: f64) -> Self {
        Wave(
            (0..3)
                .map(|_| {
                    (
                        rng.random_range(-amplitude..amplitude),
                        rng.random_range(0.5..3.0),
                        rng.random_range(0.0..2.0 * PI),
                    )
                })
                .collect(),
        )
    }

    fn at(&self, t: f64) -> f64 {
        self.0.iter().map(|&(c, w, p)| c * (w * t + p).cos()).sum()
    }

    fn sampled(&self, horizon: f64, m: usize) -> Vec<f64> {
        let dt = horizon / m as f64;
        (0..m).map(|i| self.at((i as f64 + 0.5) * dt)).collect()
    }

    /// `int_0^T f(t) e^{i nu t} dt`, in closed form.
    fn fourier(&self, nu: f64, horizon: f64) -> Complex64 {
        let i = Complex64::i();
        let phase_integral = |x: f64| {
            if x.abs() < 1e-9 {
                Complex64::new(horizon, 0.5 * x * horizon * horizon)
            } else {
                ((i * x * horizon).exp() - 1.0) / (i * x)
            }
        };
        self.0
            .iter()
            .map(|&(c, w, p)| {
                0.5 * c
                    * ((i * p).exp() * phase_integral(nu + w)
                        + (-i * p).exp() * phase_integral(nu - w))
            })
            .sum()
    }
}

fn random_task(index: u64) -> (ControlTask, Wave, Wave) {
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + index);
    let n = 2 + (index as usize % 3);
    let horizon = rng.random_range(1.0..2.0);
    let sys = QuantumSystem::new(
        random_hermitian(n, 10 * index + 1).unwrap(),
        random_hermitian(n, 10 * index + 2).unwrap(),
    )
    .unwrap();
    let a = random_hermitian(n, 10 * index + 3).unwrap();
    let sq = a.matrix() * a.matrix();
    let tr = sq.trace().re;
    let rho = Hermitian::new(sq.unscale(tr)).unwrap();
    let o = random_hermitian(n, 10 * index + 4).unwrap();
    let task = ControlTask::new(sys, rho, o, horizon, Template::Custom).unwrap();
    (
        task,
        Wave::random(&mut rng, 0.8),
        Wave::random(&mut rng, 1.0),
    )
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let task = build_lambda(&LambdaParams::default()).map_err(e)?;
    let cert = trap_certificate(&task, 0.0).map_err(e)?;
    ensure(cert.holds, || format!("certificate fails: {cert:?}"))?;
    let mut worst_hp = 0.0_f64;
    let mut worst_eig = f64::NEG_INFINITY;
    for m in [64, 128, 256] {
        let field = ControlField::zeros(5.0, m).map_err(e)?;
        let j = objective(&task, &field).map_err(e)?;
        ensure((j - 1.0).abs() <= 1e-12, || format!("M={m}: J = {j}"))?;
        let g = gradient_kernel(&task, &field).map_err(e)?.sup_norm();
        ensure(g <= 1e-12, || format!("M={m}: gradient sup-norm {g:e}"))?;
        let v =
            second_order_trap_numeric(&task, &field, 100, 7, &Tolerances::default()).map_err(e)?;
        let hp = v.max_h_plus.ok_or("not a KCP")?;
        ensure(hp <= 1e-10, || format!("M={m}: max h+ = {hp:e}"))?;
        let rel = v.max_hessian_eig / v.hessian_frobenius;
        ensure(v.max_hessian_eig <= 1e-9 * v.hessian_frobenius, || {
            format!("M={m}: max Hessian eigenvalue {:e}", v.max_hessian_eig)
        })?;
        worst_hp = worst_hp.max(hp);
        worst_eig = worst_eig.max(rel);
    }
    within(start, Duration::from_secs(10))?;
    Ok(format!(
        "J=1, certificate k={}, max h+ {worst_hp:.1e}, max eig/|H|_F {worst_eig:.1e}, {:.2?}",
        cert.k,
        start.elapsed()
    ))
}

fn criterion_2() -> Check {
    let field = ControlField::zeros(5.0, 128).map_err(e)?;
    let top = hessian_kernel(&lambda_with_state(1), &field).map_err(e)?;
    let bottom = hessian_kernel(&lambda_with_state(2), &field).map_err(e)?;
    let (te, be) = (top.eigenvalues(), bottom.eigenvalues());
    let max_top = *te.last().unwrap();
    let min_bottom = be[0];
    ensure(max_top <= 1e-9 * top.weighted_norm(), || {
        format!("rho0=|2>: max eig {max_top:e}")
    })?;
    ensure(min_bottom >= -1e-9 * bottom.weighted_norm(), || {
        format!("rho0=|3>: min eig {min_bottom:e}")
    })?;
    Ok(format!(
        "max eig at |2> {max_top:.1e} (|H|_F {:.3}), min eig at |3> {min_bottom:.1e} (|H|_F {:.3})",
        top.weighted_norm(),
        bottom.weighted_norm()
    ))
}

fn dcp_case(mu: &[&[f64]], eps0: f64) -> Result<String, String> {
    let sys = QuantumSystem::new(
        Hermitian::from_real_diagonal(&[0.0, 1.0]),
        Hermitian::from_real_rows(mu).map_err(e)?,
    )
    .map_err(e)?;
    let params = DcpParams {
        i: 0,
        j: 1,
        psi_phase: 0.0,
        phi_phase: FRAC_PI_2,
        horizon: 1.0,
        q: None,
        eps0,
    };
    let (task, pred) = build_dcp_not_kcp(&sys, &params).map_err(e)?;
    let field = ControlField::constant(1.0, 128, eps0).map_err(e)?;
    let j = objective(&task, &field).map_err(e)?;
    ensure((j - 0.5).abs() <= 1e-12, || format!("eps0={eps0}: J = {j}"))?;
    let g = gradient_kernel(&task, &field).map_err(e)?.sup_norm();
    ensure(g <= 1e-12, || {
        format!("eps0={eps0}: gradient sup-norm {g:e}")
    })?;
    let z_oracle = 2f64.sqrt() / 4.0;
    ensure((pred.z_abs - z_oracle).abs() <= 1e-15, || {
        format!("|z| = {}", pred.z_abs)
    })?;
    let c = kcp_residual(&task, &field).map_err(e)?;
    ensure(c >= 0.35, || format!("eps0={eps0}: kcp residual {c}"))?;
    let r = classify(&task, &field, &Tolerances::default()).map_err(e)?;
    ensure(r.has(Label::DcpNotKcp), || {
        format!("eps0={eps0}: labels {:?}", r.labels)
    })?;
    Ok(format!("eps0={eps0}: |g| {g:.1e}, kcp {c:.4}"))
}

fn criterion_3() -> Check {
    let s = 5.0 / 6.0;
    let a = dcp_case(&[&[0.0, 1.0], &[1.0, 0.0]], 0.0)?;
    let b = dcp_case(&[&[-s, s], &[s, s]], 0.3)?;
    Ok(format!("J=0.5, DCP_NOT_KCP; {a}; {b}"))
}

fn criterion_4() -> Check {
    let start = Instant::now();
    let grids = [64, 128, 256];
    let mut worst_fd = 0.0_f64;
    let mut worst_g_ratio = 0.0_f64;
    let mut worst_h_ratio = 0.0_f64;
    for idx in 0..10 {
        let (task, env, dir) = random_task(idx);
        let t = task.horizon();
        let mut g_err = Vec::new();
        let mut h_err = Vec::new();
        for &m in &grids {
            let field = ControlField::from_envelope(t, m, |x| env.at(x)).map_err(e)?;
            let discrete = gradient_discrete(&task, &field).map_err(e)?;
            if m == grids[0] {
                let fd = fd_gradient(&task, &field, FD_GRADIENT_STEP).map_err(e)?;
                let err = rel_l2(&discrete, &fd);
                ensure(err <= 1e-6, || {
                    format!("task {idx}: discrete vs FD {err:e}")
                })?;
                worst_fd = worst_fd.max(err);
            }
            let kernel = gradient_kernel(&task, &field).map_err(e)?.scaled();
            let ge = rel_l2(&kernel, &discrete);
            ensure(ge <= 3.0 / m as f64, || {
                format!("task {idx}, M={m}: kernel gradient error {ge:e}")
            })?;
            g_err.push(ge);

            let f = dir.sampled(t, m);
            let q = quadratic_form(&hessian_kernel(&task, &field).map_err(e)?, &f).map_err(e)?;
            let fd2 = fd_directional_second(&task, &field, &f, FD_HESSIAN_STEP).map_err(e)?;
            let he = (q - fd2).abs() / fd2.abs();
            ensure(he <= 5.0 / m as f64, || {
                format!("task {idx}, M={m}: Hessian form error {he:e}")
            })?;
            h_err.push(he);
        }
        for w in g_err.windows(2) {
            let r = w[1] / w[0];
            ensure(r <= 0.6, || {
                format!("task {idx}: gradient error ratio {r:.3} ({g_err:?})")
            })?;
            worst_g_ratio = worst_g_ratio.max(r);
        }
        for w in h_err.windows(2) {
            let r = w[1] / w[0];
            ensure(r <= 0.6, || {
                format!("task {idx}: Hessian error ratio {r:.3} ({h_err:?})")
            })?;
            worst_h_ratio = worst_h_ratio.max(r);
        }
    }
    within(start, Duration::from_secs(120))?;
    Ok(format!(
        "10 tasks, discrete vs FD <= {worst_fd:.1e}, worst doubling ratios: gradient {worst_g_ratio:.3}, Hessian {worst_h_ratio:.3}, {:.2?}",
        start.elapsed()
    ))
}

/// `V_f = int_0^T f(t) V(t) dt` at zero field with diagonal `H0`, in closed form.
fn continuum_smeared_dipole(task: &ControlTask, f: &Wave) -> Hermitian {
    let h0 = task.system().h0().matrix();
    let mu = task.system().mu().matrix();
    let n = task.dim();
    let m = DMatrix::from_fn(n, n, |a, b| {
        mu[(a, b)] * f.fourier(h0[(a, a)].re - h0[(b, b)].re, task.horizon())
    });
    Hermitian::new(m).unwrap()
}

fn criterion_5() -> Check {
    let alt = build_lambda(&LambdaParams {
        lambdas: [0.5, 1.5, -1.0],
        energies: [0.0, 1.3, 3.1],
        mu13: 0.7,
        mu23: 1.2,
        horizon: 4.0,
    })
    .map_err(e)?;
    let instances = [
        ("default", lambda_with_state(0)),
        ("rho0=|2>", lambda_with_state(1)),
        ("rho0=|3>", lambda_with_state(2)),
        ("alternate", alt),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_ratio = 0.0_f64;
    let mut worst_grid = 0.0_f64;
    let mut last_errs = Vec::new();
    for (name, task) in &instances {
        for _ in 0..3 {
            let wave = Wave::random(&mut rng, 1.0);
            let basis = common_eigenbasis(task.rho0(), task.observable(), 1e-10);
            let h_ref = split_form(&basis, &continuum_smeared_dipole(task, &wave)).h;
            let mut errs = Vec::new();
            for m in [128, 256, 512] {
                let field = ControlField::zeros(task.horizon(), m).map_err(e)?;
                let f = wave.sampled(task.horizon(), m);
                let q = quadratic_form(&hessian_kernel(task, &field).map_err(e)?, &f).map_err(e)?;
                let on_grid = spectral_form(task, &field, &f, 1e-8).map_err(e)?.h;
                let grid_err = (on_grid - q).abs() / q.abs();
                ensure(grid_err <= 1e-10, || {
                    format!("{name}, M={m}: grid spectral vs kernel {grid_err:e}")
                })?;
                worst_grid = worst_grid.max(grid_err);
                let err = (q - h_ref).abs() / h_ref.abs();
                ensure(err <= 1.0 / m as f64, || {
                    format!("{name}, M={m}: error {err:e} above 1/M")
                })?;
                errs.push(err);
            }
            for w in errs.windows(2) {
                let r = w[1] / w[0];
                ensure(r <= 0.6, || {
                    format!("{name}: error ratio {r:.3} ({errs:?})")
                })?;
                worst_ratio = worst_ratio.max(r);
            }
            last_errs = errs;
        }
    }
    Ok(format!(
        "kernel vs continuum spectral form, worst doubling ratio {worst_ratio:.3} (last: {:.1e}, {:.1e}, {:.1e}); grid spectral vs kernel <= {worst_grid:.1e}",
        last_errs[0], last_errs[1], last_errs[2]
    ))
}

fn criterion_6() -> Check {
    let task = lambda_with_state(0);
    let field = ControlField::zeros(5.0, 128).map_err(e)?;
    let p = jacobian_probe(&task, &field).map_err(e)?;
    ensure(p.rank < 9, || format!("Λ rank {}", p.rank))?;
    ensure(p.absent_coordinates.contains(&(0, 1)), || {
        format!("<1|.|2> not absent: {:?}", p.absent_coordinates)
    })?;
    let sys = QuantumSystem::new(
        Hermitian::from_real_diagonal(&[0.0, 1.0]),
        Hermitian::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).map_err(e)?,
    )
    .map_err(e)?;
    let params = DcpParams {
        i: 0,
        j: 1,
        psi_phase: 0.0,
        phi_phase: FRAC_PI_2,
        horizon: 1.0,
        q: None,
        eps0: 0.0,
    };
    let (qubit, _) = build_dcp_not_kcp(&sys, &params).map_err(e)?;
    let q = jacobian_probe(&qubit, &ControlField::zeros(1.0, 128).map_err(e)?).map_err(e)?;
    ensure(q.rank == 2 && q.full == 4, || {
        format!("qubit rank {} of {}", q.rank, q.full)
    })?;
    Ok(format!(
        "Λ rank {} of 9, absent {:?}; qubit rank {} of {}",
        p.rank, p.absent_coordinates, q.rank, q.full
    ))
}

fn criterion_7() -> Check {
    let start = Instant::now();
    let task = lambda_with_state(0);
    let cfg = AscentConfig::default();
    let t = gradient_ascent(&task, &ControlField::zeros(5.0, 128).map_err(e)?, &cfg).map_err(e)?;
    ensure(
        t.termination == Termination::GradStop && t.iterations() == 0,
        || {
            format!(
                "from zero: {:?} after {} iterations",
                t.termination,
                t.iterations()
            )
        },
    )?;
    let s = multistart(&task, 128, 20, 0.5, 0.05, &cfg).map_err(e)?;
    println!("    seed  J_initial  J_final   iters  termination");
    for r in &s.starts {
        println!(
            "    {:>4}  {:>9.6}  {:>8.6}  {:>5}  {:?}",
            r.seed, r.initial_objective, r.final_objective, r.iterations, r.termination
        );
    }
    ensure(
        s.starts.iter().all(|r| r.final_objective <= 2.0 + 1e-9),
        || "J above Jmax".into(),
    )?;
    ensure(s.success_fraction >= 0.8, || {
        format!("success fraction {}", s.success_fraction)
    })?;
    within(start, Duration::from_secs(300))?;
    Ok(format!(
        "zero field stops at iteration 0; {:.0}% of 20 starts reach J >= 1.95, {:.2?}",
        100.0 * s.success_fraction,
        start.elapsed()
    ))
}

fn criterion_8() -> Check {
    let task = lambda_with_state(0);
    let r = lie_algebra_rank(task.system());
    ensure(r.dimension == r.full && r.controllable, || {
        format!("Λ Lie rank {r:?}")
    })?;
    let dead = QuantumSystem::new(task.system().h0().clone(), Hermitian::zeros(3)).map_err(e)?;
    let d = lie_algebra_rank(&dead);
    ensure(d.dimension == 1, || format!("mu = 0 gives {}", d.dimension))?;
    Ok(format!(
        "Λ dimension {} of {}, mu = 0 dimension {}",
        r.dimension, r.full, d.dimension
    ))
}

fn main() {
    let criteria: [Criterion; 8] = [
        (1, "Λ-system trap at zero field", criterion_1),
        (2, "global max/min semidefiniteness", criterion_2),
        (3, "DCP that is not a KCP", criterion_3),
        (4, "gradient and Hessian kernels vs oracles", criterion_4),
        (5, "spectral vs kernel Hessian at KCPs", criterion_5),
        (6, "Jacobian rank deficiency", criterion_6),
        (7, "optimizer behavior", criterion_7),
        (8, "controllability", criterion_8),
    ];
    let mut failed = 0;
    for (n, name, run) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()))
        });
        match outcome {
            Ok(detail) => println!("criterion {n} PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n} FAIL  {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 8 acceptance criteria passed");
}
