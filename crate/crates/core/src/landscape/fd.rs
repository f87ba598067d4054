//! Central finite differences of the discretized objective. These call only
//! [`objective`] and serve as independent checks on the analytic kernels.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::par::map_indices;
use crate::propagator::{check_pair, objective};
use crate::system::{ControlField, ControlTask};

pub const FD_GRADIENT_STEP: f64 = 1e-5;
pub const FD_HESSIAN_STEP: f64 = 1e-3;

fn check_step(step: f64) -> Result<()> {
    if step.is_finite() && step > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "finite-difference step must be positive, got {step}"
        )))
    }
}

fn shifted(field: &ControlField, moves: &[(usize, f64)]) -> ControlField {
    let mut values = field.values().to_vec();
    for &(m, d) in moves {
        values[m] += d;
    }
    field
        .with_values(values)
        .expect("shifted field keeps the grid")
}

fn collect(results: Vec<Result<f64>>) -> Result<Vec<f64>> {
    results.into_iter().collect()
}

/// `(J(eps + s e_m) - J(eps - s e_m)) / 2s` for each interval.
pub fn fd_gradient(task: &ControlTask, field: &ControlField, step: f64) -> Result<Vec<f64>> {
    check_step(step)?;
    check_pair(task, field)?;
    collect(map_indices(field.intervals(), |m| {
        let plus = objective(task, &shifted(field, &[(m, step)]))?;
        let minus = objective(task, &shifted(field, &[(m, -step)]))?;
        Ok((plus - minus) / (2.0 * step))
    }))
}

/// Full `M x M` Hessian of the discretized objective by central differences.
/// Only the upper triangle is evaluated; the result is exactly symmetric.
pub fn fd_hessian(task: &ControlTask, field: &ControlField, step: f64) -> Result<DMatrix<f64>> {
    check_step(step)?;
    check_pair(task, field)?;
    let m_len = field.intervals();
    let j0 = objective(task, field)?;
    let pairs: Vec<(usize, usize)> = (0..m_len)
        .flat_map(|m| (m..m_len).map(move |k| (m, k)))
        .collect();
    let values = collect(map_indices(pairs.len(), |p| {
        let (m, k) = pairs[p];
        let j = |moves: &[(usize, f64)]| objective(task, &shifted(field, moves));
        if m == k {
            Ok((j(&[(m, step)])? - 2.0 * j0 + j(&[(m, -step)])?) / (step * step))
        } else {
            let pp = j(&[(m, step), (k, step)])?;
            let pm = j(&[(m, step), (k, -step)])?;
            let mp = j(&[(m, -step), (k, step)])?;
            let mm = j(&[(m, -step), (k, -step)])?;
            Ok((pp - pm - mp + mm) / (4.0 * step * step))
        }
    }))?;
    let mut out = DMatrix::zeros(m_len, m_len);
    for (&(m, k), &v) in pairs.iter().zip(&values) {
        out[(m, k)] = v;
        out[(k, m)] = v;
    }
    Ok(out)
}

/// Second directional derivative `(J(eps + s f) - 2 J(eps) + J(eps - s f)) / s^2`.
pub fn fd_directional_second(
    task: &ControlTask,
    field: &ControlField,
    direction: &[f64],
    step: f64,
) -> Result<f64> {
    check_step(step)?;
    if direction.len() != field.intervals() {
        return Err(Error::DimensionMismatch(format!(
            "direction has {} samples, grid has {}",
            direction.len(),
            field.intervals()
        )));
    }
    let along = |s: f64| {
        let v = field
            .values()
            .iter()
            .zip(direction)
            .map(|(e, d)| e + s * d)
            .collect();
        objective(task, &field.with_values(v)?)
    };
    Ok((along(step)? - 2.0 * along(0.0)? + along(-step)?) / (step * step))
}
