//! Gradient ascent with Armijo backtracking, and a seeded multistart harness.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::landscape::{gradient_discrete, gradient_from};
use crate::par::map_indices;
use crate::propagator::{objective, propagate};
use crate::report::{CsvCell, CsvTable};
use crate::system::{kinematic_bounds, ControlField, ControlTask};

/// Halvings tried before a line search is declared failed.
pub const MAX_BACKTRACKS: usize = 60;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// `dt * g(t_m*)` from the midpoint kernel.
    #[default]
    Kernel,
    /// Exact derivative of the piecewise-constant objective.
    Discrete,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AscentConfig {
    pub max_iters: usize,
    pub initial_step: f64,
    pub backtrack_factor: f64,
    /// Armijo coefficient `c` in `J(eps + s d) >= J(eps) + c s |d|^2`.
    pub sufficient_increase: f64,
    /// Stop once the sup-norm of the gradient kernel drops to this value.
    pub grad_stop: f64,
    #[serde(rename = "J_stop")]
    pub j_stop: Option<f64>,
    /// Seed of the first random start in [`multistart`].
    pub seed: u64,
    pub direction: Direction,
}

impl Default for AscentConfig {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            initial_step: 10.0,
            backtrack_factor: 0.5,
            sufficient_increase: 1e-4,
            grad_stop: 1e-9,
            j_stop: None,
            seed: 0,
            direction: Direction::Kernel,
        }
    }
}

impl AscentConfig {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.max_iters == 0 {
            return bad("max_iters must be positive");
        }
        if !(self.initial_step.is_finite() && self.initial_step > 0.0) {
            return bad("initial_step must be positive");
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return bad("backtrack_factor must lie in (0, 1)");
        }
        if !(self.sufficient_increase > 0.0 && self.sufficient_increase < 1.0) {
            return bad("sufficient_increase must lie in (0, 1)");
        }
        if self.grad_stop.is_nan() || self.grad_stop < 0.0 {
            return bad("grad_stop must be non-negative");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Termination {
    GradStop,
    MaxIters,
    TargetReached,
    LineSearchFailed,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Iterate {
    pub iter: usize,
    #[serde(rename = "J")]
    pub objective: f64,
    pub grad_norm: f64,
    /// Step accepted to leave this iterate; 0 for the last one.
    pub step: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Trajectory {
    pub iterates: Vec<Iterate>,
    pub final_field: ControlField,
    pub termination: Termination,
}

impl Trajectory {
    pub fn final_objective(&self) -> f64 {
        self.iterates.last().map_or(f64::NAN, |i| i.objective)
    }

    /// Number of accepted steps.
    pub fn iterations(&self) -> usize {
        self.iterates.len() - 1
    }
}

impl CsvTable for Trajectory {
    fn header(&self) -> Vec<String> {
        ["iter", "J", "grad_norm", "step"]
            .map(String::from)
            .to_vec()
    }

    fn rows(&self) -> Vec<Vec<CsvCell>> {
        self.iterates
            .iter()
            .map(|i| {
                vec![
                    i.iter.into(),
                    i.objective.into(),
                    i.grad_norm.into(),
                    i.step.into(),
                ]
            })
            .collect()
    }
}

/// Objective, kernel sup-norm and ascent direction at one field.
fn evaluate(
    task: &ControlTask,
    field: &ControlField,
    dir: Direction,
) -> Result<(f64, f64, Vec<f64>)> {
    let prop = propagate(task, field)?;
    let j = prop.objective(task)?;
    let g = gradient_from(&prop, task)?;
    let d = match dir {
        Direction::Kernel => g.scaled(),
        Direction::Discrete => gradient_discrete(task, field)?,
    };
    Ok((j, g.sup_norm(), d))
}

/// Steepest ascent `eps <- eps + s d` with backtracking on `s`. The step grows by
/// `1 / backtrack_factor` after each accepted move, so it can recover from
/// earlier reductions.
pub fn gradient_ascent(
    task: &ControlTask,
    init: &ControlField,
    config: &AscentConfig,
) -> Result<Trajectory> {
    config.validate()?;
    let mut field = init.clone();
    let (mut j, mut gnorm, mut d) = evaluate(task, &field, config.direction)?;
    let mut step = config.initial_step;
    let mut iterates = Vec::new();
    let record = |iter, objective, grad_norm| Iterate {
        iter,
        objective,
        grad_norm,
        step: 0.0,
    };
    iterates.push(record(0, j, gnorm));

    let termination = loop {
        if config.j_stop.is_some_and(|t| j >= t) {
            break Termination::TargetReached;
        }
        if gnorm <= config.grad_stop {
            break Termination::GradStop;
        }
        if iterates.len() > config.max_iters {
            break Termination::MaxIters;
        }
        let d2: f64 = d.iter().map(|x| x * x).sum();
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let values: Vec<f64> = field
                .values()
                .iter()
                .zip(&d)
                .map(|(e, x)| e + step * x)
                .collect();
            let trial = field.with_values(values)?;
            let jt = objective(task, &trial)?;
            if jt >= j + config.sufficient_increase * step * d2 {
                accepted = Some(trial);
                break;
            }
            step *= config.backtrack_factor;
        }
        let Some(next) = accepted else {
            break Termination::LineSearchFailed;
        };
        iterates.last_mut().expect("nonempty").step = step;
        field = next;
        (j, gnorm, d) = evaluate(task, &field, config.direction)?;
        iterates.push(record(iterates.len(), j, gnorm));
        step /= config.backtrack_factor;
    };
    Ok(Trajectory {
        iterates,
        final_field: field,
        termination,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct StartOutcome {
    pub seed: u64,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub success: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct MultistartSummary {
    pub starts: Vec<StartOutcome>,
    /// `Jmax - delta`.
    pub threshold: f64,
    pub success_fraction: f64,
    pub best_seed: u64,
    #[serde(rename = "best_J")]
    pub best_objective: f64,
    pub best_field: ControlField,
}

impl CsvTable for MultistartSummary {
    fn header(&self) -> Vec<String> {
        [
            "seed",
            "J_initial",
            "J_final",
            "iterations",
            "termination",
            "success",
        ]
        .map(String::from)
        .to_vec()
    }

    fn rows(&self) -> Vec<Vec<CsvCell>> {
        self.starts
            .iter()
            .map(|s| {
                vec![
                    CsvCell::Int(s.seed as i64),
                    s.initial_objective.into(),
                    s.final_objective.into(),
                    s.iterations.into(),
                    CsvCell::Text(
                        serde_json::to_value(s.termination)
                            .ok()
                            .and_then(|v| v.as_str().map(String::from))
                            .unwrap_or_default(),
                    ),
                    CsvCell::from(if s.success { "true" } else { "false" }),
                ]
            })
            .collect()
    }
}

/// Runs [`gradient_ascent`] from `n_starts` fields drawn uniformly from
/// `[-amplitude, amplitude]` per interval, start `s` using seed `config.seed + s`.
pub fn multistart(
    task: &ControlTask,
    intervals: usize,
    n_starts: usize,
    amplitude: f64,
    delta: f64,
    config: &AscentConfig,
) -> Result<MultistartSummary> {
    if n_starts == 0 {
        return Err(Error::InvalidParameter(
            "n_starts must be at least 1".into(),
        ));
    }
    config.validate()?;
    let threshold = kinematic_bounds(task).jmax - delta;
    let runs: Vec<Result<(u64, Trajectory)>> = map_indices(n_starts, |s| {
        let seed = config.seed.wrapping_add(s as u64);
        let init = ControlField::random_uniform(task.horizon(), intervals, amplitude, seed)?;
        Ok((seed, gradient_ascent(task, &init, config)?))
    });
    let mut starts = Vec::with_capacity(n_starts);
    let mut best: Option<(u64, f64, ControlField)> = None;
    for r in runs {
        let (seed, t) = r?;
        let jf = t.final_objective();
        if best.as_ref().is_none_or(|b| jf > b.1) {
            best = Some((seed, jf, t.final_field.clone()));
        }
        starts.push(StartOutcome {
            seed,
            initial_objective: t.iterates[0].objective,
            final_objective: jf,
            iterations: t.iterations(),
            termination: t.termination,
            success: jf >= threshold,
        });
    }
    let (best_seed, best_objective, best_field) = best.expect("n_starts >= 1");
    let success_fraction = starts.iter().filter(|s| s.success).count() as f64 / n_starts as f64;
    Ok(MultistartSummary {
        starts,
        threshold,
        success_fraction,
        best_seed,
        best_objective,
        best_field,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constructions::{build_lambda, LambdaParams};
    use crate::linalg::Hermitian;
    use crate::system::QuantumSystem;

    fn lambda() -> ControlTask {
        build_lambda(&LambdaParams::default()).unwrap()
    }

    #[test]
    fn stops_immediately_at_the_trap() {
        let t = gradient_ascent(
            &lambda(),
            &ControlField::zeros(5.0, 128).unwrap(),
            &AscentConfig::default(),
        )
        .unwrap();
        assert_eq!(t.termination, Termination::GradStop);
        assert_eq!(t.iterations(), 0);
        assert_eq!(t.final_objective(), 1.0);
    }

    #[test]
    fn flat_landscape_terminates() {
        let task = lambda();
        let task = task
            .with_system(
                QuantumSystem::new(task.system().h0().clone(), Hermitian::zeros(3)).unwrap(),
            )
            .unwrap();
        let init = ControlField::random_uniform(5.0, 32, 0.5, 1).unwrap();
        let t = gradient_ascent(&task, &init, &AscentConfig::default()).unwrap();
        assert_eq!(t.termination, Termination::GradStop);
        assert_eq!(t.final_objective(), 1.0);
    }

    #[test]
    fn ascent_is_monotone_and_bounded() {
        let task = lambda();
        let init = ControlField::random_uniform(5.0, 64, 0.5, 17).unwrap();
        let cfg = AscentConfig {
            max_iters: 300,
            ..AscentConfig::default()
        };
        let t = gradient_ascent(&task, &init, &cfg).unwrap();
        for w in t.iterates.windows(2) {
            assert!(w[1].objective >= w[0].objective);
        }
        assert!(t.final_objective() <= 2.0 + 1e-9);
        assert!(t.final_objective() > t.iterates[0].objective);
    }

    #[test]
    fn target_and_iteration_limits() {
        let task = lambda();
        let init = ControlField::random_uniform(5.0, 64, 0.5, 2).unwrap();
        let cfg = AscentConfig {
            max_iters: 3,
            ..AscentConfig::default()
        };
        let t = gradient_ascent(&task, &init, &cfg).unwrap();
        assert_eq!(t.termination, Termination::MaxIters);
        assert_eq!(t.iterations(), 3);
        let cfg = AscentConfig {
            j_stop: Some(-10.0),
            ..AscentConfig::default()
        };
        assert_eq!(
            gradient_ascent(&task, &init, &cfg).unwrap().termination,
            Termination::TargetReached
        );
    }

    #[test]
    fn discrete_direction_also_ascends() {
        let task = lambda();
        let init = ControlField::random_uniform(5.0, 32, 0.5, 4).unwrap();
        let cfg = AscentConfig {
            max_iters: 20,
            direction: Direction::Discrete,
            ..AscentConfig::default()
        };
        let t = gradient_ascent(&task, &init, &cfg).unwrap();
        assert!(t.final_objective() > t.iterates[0].objective);
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = AscentConfig {
            backtrack_factor: 1.0,
            ..AscentConfig::default()
        };
        let init = ControlField::zeros(5.0, 8).unwrap();
        assert!(gradient_ascent(&lambda(), &init, &cfg).is_err());
        assert!(multistart(&lambda(), 8, 0, 0.5, 0.05, &AscentConfig::default()).is_err());
    }

    #[test]
    fn single_start_matches_direct_run() {
        let task = lambda();
        let cfg = AscentConfig {
            max_iters: 50,
            seed: 9,
            ..AscentConfig::default()
        };
        let s = multistart(&task, 32, 1, 0.5, 0.05, &cfg).unwrap();
        let init = ControlField::random_uniform(5.0, 32, 0.5, 9).unwrap();
        let t = gradient_ascent(&task, &init, &cfg).unwrap();
        assert_eq!(s.starts[0].final_objective, t.final_objective());
        assert_eq!(s.best_field, t.final_field);
        assert_eq!(s.starts[0].seed, 9);
    }

    #[test]
    fn trajectory_csv_header() {
        let t = gradient_ascent(
            &lambda(),
            &ControlField::zeros(5.0, 8).unwrap(),
            &AscentConfig::default(),
        )
        .unwrap();
        assert!(t.to_csv().starts_with("iter,J,grad_norm,step\n0,"));
    }
}
