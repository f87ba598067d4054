//! Rank of the control Jacobian `dU(T)/d eps(t) = i U(T) V(t)`.
//!
//! Its range is spanned by the Heisenberg dipoles, so the rank is measured on the
//! samples `V(t_m*)` embedded isometrically into the `n^2`-dimensional real space
//! of Hermitian matrices.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::Result;
use crate::linalg::Hermitian;
use crate::propagator::propagate;
use crate::report::{CsvCell, CsvTable};
use crate::system::{ControlField, ControlTask};

/// Relative singular-value threshold for the numerical rank.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Clone, Debug, Serialize)]
pub struct JacobianProbe {
    pub rank: usize,
    /// `n^2`, the dimension of the Hermitian matrices.
    pub full: usize,
    pub singular_values: Vec<f64>,
    /// Zero-based matrix positions `(i, j)`, `i <= j`, where every sampled `V(t_m*)`
    /// vanishes. Such coordinates cannot be reached to first order.
    pub absent_coordinates: Vec<(usize, usize)>,
}

impl JacobianProbe {
    pub fn is_full_rank(&self) -> bool {
        self.rank == self.full
    }
}

impl CsvTable for JacobianProbe {
    fn header(&self) -> Vec<String> {
        vec!["index".into(), "singular_value".into()]
    }

    fn rows(&self) -> Vec<Vec<CsvCell>> {
        self.singular_values
            .iter()
            .enumerate()
            .map(|(i, &s)| vec![i.into(), s.into()])
            .collect()
    }
}

/// Real coordinates of a Hermitian matrix: diagonal entries, then `sqrt(2) Re`
/// and `sqrt(2) Im` of each upper off-diagonal entry. Frobenius-isometric.
pub fn hermitian_coordinates(a: &Hermitian) -> Vec<f64> {
    let n = a.dim();
    let m = a.matrix();
    let mut out = Vec::with_capacity(n * n);
    out.extend((0..n).map(|i| m[(i, i)].re));
    for i in 0..n {
        for j in i + 1..n {
            out.push(std::f64::consts::SQRT_2 * m[(i, j)].re);
            out.push(std::f64::consts::SQRT_2 * m[(i, j)].im);
        }
    }
    out
}

pub fn jacobian_probe(task: &ControlTask, field: &ControlField) -> Result<JacobianProbe> {
    let prop = propagate(task, field)?;
    let n = task.dim();
    let rows: Vec<Vec<f64>> = prop
        .heisenberg_dipoles
        .iter()
        .map(hermitian_coordinates)
        .collect();
    let samples = DMatrix::from_fn(rows.len(), n * n, |r, c| rows[r][c]);
    let mut singular_values: Vec<f64> = samples.singular_values().iter().copied().collect();
    singular_values.sort_by(|a, b| b.total_cmp(a));
    let top = singular_values.first().copied().unwrap_or(0.0);
    let rank = if top == 0.0 {
        0
    } else {
        singular_values
            .iter()
            .filter(|&&s| s > RANK_TOL * top)
            .count()
    };

    let scale = prop
        .heisenberg_dipoles
        .iter()
        .fold(0.0_f64, |a, v| a.max(v.frobenius_norm()));
    let mut absent_coordinates = Vec::new();
    for i in 0..n {
        for j in i..n {
            let peak = prop
                .heisenberg_dipoles
                .iter()
                .fold(0.0_f64, |a, v| a.max(v.matrix()[(i, j)].norm()));
            if peak <= RANK_TOL * scale.max(f64::MIN_POSITIVE) {
                absent_coordinates.push((i, j));
            }
        }
    }
    Ok(JacobianProbe {
        rank,
        full: n * n,
        singular_values,
        absent_coordinates,
    })
}

pub fn jacobian_rank(task: &ControlTask, field: &ControlField) -> Result<usize> {
    Ok(jacobian_probe(task, field)?.rank)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random_hermitian;
    use crate::system::{QuantumSystem, Template};

    #[test]
    fn coordinates_are_isometric() {
        let a = random_hermitian(4, 5).unwrap();
        let c = hermitian_coordinates(&a);
        let norm: f64 = c.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - a.frobenius_norm()).abs() < 1e-12);
        assert_eq!(c.len(), 16);
    }

    #[test]
    fn generic_system_reaches_full_rank() {
        let n = 3;
        let sys = QuantumSystem::new(
            random_hermitian(n, 40).unwrap(),
            random_hermitian(n, 41).unwrap(),
        )
        .unwrap();
        let task = ControlTask::new(
            sys,
            Hermitian::from_real_diagonal(&[1.0, 0.0, 0.0]),
            Hermitian::from_real_diagonal(&[0.0, 1.0, 2.0]),
            4.0,
            Template::Custom,
        )
        .unwrap();
        let field = ControlField::random_uniform(4.0, 32, 1.0, 7).unwrap();
        let probe = jacobian_probe(&task, &field).unwrap();
        // Recorded, not a theorem: generic data is expected to be full rank.
        assert_eq!(probe.rank, 9, "{:?}", probe.singular_values);
        assert!(probe.absent_coordinates.is_empty());
    }
}
