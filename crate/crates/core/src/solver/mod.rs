//! The ProjDiff solvers: the two-phase noisy VP loop, the projected
//! noise-free VP loop and the VE loops with momentum and restricted encoding.

mod config;
mod noisy;
mod projected;
mod steps;

pub use config::{GradientMode, NonlinearProjection, SolverConfig, XiRule};
pub use noisy::{heterogeneous_step_router, run_noisy_vp, SpectralDenoiser, StepRoute};
pub use projected::{run_noisefree_vp, run_ve, run_ve_restricted};
pub use steps::{
    full_direction_x0, full_direction_xta, grad_x0_truncated, grad_xta_truncated, objective_estimate, reinit_x0,
    restricted_encode_ve, restricted_encode_vp, sample_h,
};

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{dist, norm, sub};
use crate::observations::{LinearOperator, NonlinearOperator, ObservationError};
use crate::priors::{Denoiser, PriorError};
use crate::scalar::Real;
use crate::schedules::{ScheduleError, VeSchedule, VpSchedule};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Prior(#[from] PriorError),
    #[error(transparent)]
    Observation(#[from] ObservationError),
    #[error("iterate diverged at iteration {iter} (t={t}): {reason}")]
    Diverged { iter: usize, t: usize, reason: String, trace: Vec<TraceRow>, last_x0: Vec<f64> },
}

#[derive(Debug, Clone)]
pub enum Schedule<T> {
    Vp(VpSchedule<T>),
    Ve(VeSchedule<T>),
}

#[derive(Debug, Clone)]
pub enum Observation<T: Real> {
    Linear { op: Arc<dyn LinearOperator<T>>, y: Vec<T>, sigma: T },
    Nonlinear { op: Arc<dyn NonlinearOperator<T>>, y: Vec<T>, sigma: T, projection: NonlinearProjection },
}

impl<T: Real> Observation<T> {
    pub fn y(&self) -> &[T] {
        match self {
            Observation::Linear { y, .. } | Observation::Nonlinear { y, .. } => y,
        }
    }

    pub fn sigma(&self) -> T {
        match self {
            Observation::Linear { sigma, .. } | Observation::Nonlinear { sigma, .. } => *sigma,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Observation::Linear { op, .. } => op.input_dim(),
            Observation::Nonlinear { op, .. } => op.input_dim(),
        }
    }

    fn output_dim(&self) -> usize {
        match self {
            Observation::Linear { op, .. } => op.output_dim(),
            Observation::Nonlinear { op, .. } => op.output_dim(),
        }
    }

    pub fn forward(&self, x: &[T]) -> Vec<T> {
        match self {
            Observation::Linear { op, .. } => op.apply(x),
            Observation::Nonlinear { op, .. } => op.forward(x),
        }
    }

    /// `‖𝒜(x) − y‖`
    pub fn residual(&self, x: &[T]) -> T {
        dist(&self.forward(x), self.y())
    }

    /// Projection onto `{x : 𝒜(x) = y}` used by the noise-free loops.
    pub fn project(&self, x: &[T]) -> Result<Vec<T>, ObservationError> {
        match self {
            Observation::Linear { op, y, .. } => op.project(x, y),
            Observation::Nonlinear { op, y, sigma, projection } => match *projection {
                NonlinearProjection::Exact => op.project(x, y, *sigma > T::zero()),
                NonlinearProjection::GradientFallback { iters, lr } => {
                    crate::observations::project_gradient_fallback(x, op.as_ref(), y, iters, T::lit(lr))
                }
            },
        }
    }
}

/// An inverse problem: prior, diffusion schedule and observation.
#[derive(Clone)]
pub struct Problem<T: Real> {
    pub schedule: Schedule<T>,
    pub denoiser: Arc<dyn Denoiser<T>>,
    pub observation: Observation<T>,
}

impl<T: Real> Problem<T> {
    pub fn dim(&self) -> usize {
        self.observation.input_dim()
    }

    fn validate(&self, config: &SolverConfig) -> Result<(), SolverError> {
        config.validate()?;
        let dim = self.dim();
        if dim > config.max_dim {
            return Err(SolverError::Config(format!("dimension {dim} exceeds max_dim {}", config.max_dim)));
        }
        if let Some(d) = self.denoiser.dim() {
            if d != dim {
                return Err(SolverError::Config(format!(
                    "denoiser dimension {d} differs from problem dimension {dim}"
                )));
            }
        }
        if self.observation.y().len() != self.observation.output_dim() {
            return Err(SolverError::Config(format!(
                "observation has {} values, operator produces {}",
                self.observation.y().len(),
                self.observation.output_dim()
            )));
        }
        let sigma = self.observation.sigma();
        if !(sigma >= T::zero()) || !sigma.is_finite() {
            return Err(SolverError::Config(format!("observation sigma={sigma} must be finite and >= 0")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Update of `x_{t_a}` (noisy prior term).
    Aux,
    /// Re-initialisation of `x₀` from `x_{t_a}`.
    Reinit,
    /// Update of `x₀` (denoising matching term).
    Denoise,
    /// Heterogeneous step with components in both branches.
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub t: usize,
    pub phase: Phase,
    pub objective: Option<f64>,
    /// `‖𝒜(x₀) − y‖`
    pub residual: f64,
    /// Largest deviation of a pinned component from its target.
    pub constraint: f64,
    /// `‖x₀ − x₀_prev‖`
    pub x0_delta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport<T> {
    pub solver: String,
    pub x0: Vec<T>,
    pub trace: Vec<TraceRow>,
    /// `‖𝒜(x₀) − y‖` recomputed from the final iterate.
    pub residual: f64,
    pub steps: Vec<usize>,
    pub seed: u64,
    pub config: SolverConfig,
    pub warnings: Vec<String>,
    pub wall_clock_secs: f64,
}

impl<T: PartialEq> PartialEq for SolveReport<T> {
    /// Wall-clock time is excluded.
    fn eq(&self, o: &Self) -> bool {
        self.solver == o.solver
            && self.x0 == o.x0
            && self.trace == o.trace
            && self.residual.to_bits() == o.residual.to_bits()
            && self.steps == o.steps
            && self.seed == o.seed
            && self.config == o.config
            && self.warnings == o.warnings
    }
}

/// Runs the solver matching the problem: VE problems use the VE loop
/// (restricted when `xi_rule` is set), noise-free VP problems the projected
/// loop, noisy linear VP problems the two-phase loop. Noisy nonlinear VP
/// problems run the projected loop with the operator's noise-tolerant
/// projection.
pub fn solve<T: Real>(problem: &Problem<T>, config: &SolverConfig) -> Result<SolveReport<T>, SolverError> {
    match (&problem.schedule, &problem.observation) {
        (Schedule::Ve(_), _) if config.xi_rule != XiRule::Off => run_ve_restricted(problem, config),
        (Schedule::Ve(_), _) => run_ve(problem, config),
        (Schedule::Vp(_), Observation::Linear { sigma, .. }) if *sigma > T::zero() => run_noisy_vp(problem, config),
        (Schedule::Vp(_), _) => run_noisefree_vp(problem, config),
    }
}

/// Bookkeeping shared by every loop: trace, divergence guard, timing.
pub(crate) struct Recorder {
    trace: Vec<TraceRow>,
    limit: f64,
    started: std::time::Instant,
}

impl Recorder {
    pub(crate) fn new<T: Real>(y: &[T]) -> Self {
        let scale = y.iter().fold(1.0f64, |m, v| m.max(v.as_f64().abs()));
        Self { trace: Vec::new(), limit: 1e6 * scale, started: std::time::Instant::now() }
    }

    pub(crate) fn iterations(&self) -> usize {
        self.trace.len()
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn record<T: Real>(
        &mut self,
        t: usize,
        phase: Phase,
        objective: Option<f64>,
        problem: &Problem<T>,
        x0: &[T],
        prev_x0: &[T],
        constraint: f64,
        watched: &[&[T]],
    ) -> Result<(), SolverError> {
        let iter = self.trace.len();
        let row = TraceRow {
            iter,
            t,
            phase,
            objective,
            residual: problem.observation.residual(x0).as_f64(),
            constraint,
            x0_delta: norm(&sub(x0, prev_x0)).as_f64(),
        };
        self.trace.push(row);
        for v in std::iter::once(x0).chain(watched.iter().copied()) {
            let mut worst = 0.0f64;
            for e in v {
                let a = e.as_f64();
                if !a.is_finite() {
                    return Err(self.abort(iter, t, "non-finite iterate".into(), x0));
                }
                worst = worst.max(a.abs());
            }
            if worst > self.limit {
                return Err(self.abort(iter, t, format!("max |x| = {worst:e} exceeds {:e}", self.limit), x0));
            }
        }
        Ok(())
    }

    fn abort<T: Real>(&mut self, iter: usize, t: usize, reason: String, x0: &[T]) -> SolverError {
        SolverError::Diverged {
            iter,
            t,
            reason,
            trace: std::mem::take(&mut self.trace),
            last_x0: x0.iter().map(|v| v.as_f64()).collect(),
        }
    }

    pub(crate) fn finish<T: Real>(
        self,
        solver: &str,
        problem: &Problem<T>,
        x0: Vec<T>,
        steps: Vec<usize>,
        config: &SolverConfig,
        warnings: Vec<String>,
    ) -> SolveReport<T> {
        let residual = problem.observation.residual(&x0).as_f64();
        SolveReport {
            solver: solver.to_string(),
            x0,
            trace: self.trace,
            residual,
            steps,
            seed: config.seed,
            config: config.clone(),
            warnings,
            wall_clock_secs: self.started.elapsed().as_secs_f64(),
        }
    }
}
