use log::warn;

use super::linear::null_floor;
use super::{check_len, LinearOperator, ObservationError};
use crate::scalar::Real;
use crate::schedules::{equivalent_step, EquivalentStep, ScheduleError, VpSchedule};

/// One spectral coordinate of a decoupled observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpectralComponent<T> {
    Observed {
        /// Singular value `s_i`.
        s: T,
        /// `ȳ_i = (Uᵀy)_i`
        y_bar: T,
        /// `σ_i = σ/s_i`
        sigma: T,
        step: EquivalentStep<T>,
        /// `ȳ'_i = √ᾱ_{t_i}·ȳ_i/s_i`
        y_prime: T,
        /// `σ_i` exceeded the schedule and `t_i` was clamped to `T`.
        clamped: bool,
    },
    Unobserved,
}

impl<T: Real> SpectralComponent<T> {
    pub fn is_observed(&self) -> bool {
        matches!(self, SpectralComponent::Observed { .. })
    }

    pub fn step(&self) -> Option<EquivalentStep<T>> {
        match self {
            SpectralComponent::Observed { step, .. } => Some(*step),
            SpectralComponent::Unobserved => None,
        }
    }
}

/// Observation rewritten per spectral coordinate of `x̄ = Vᵀx`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralObservation<T> {
    pub sigma: T,
    /// One entry per input coordinate; indices `≥ m_y` are always unobserved.
    pub components: Vec<SpectralComponent<T>>,
}

impl<T: Real> SpectralObservation<T> {
    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn unobserved(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&i| !self.components[i].is_observed()).collect()
    }

    pub fn clamped(&self) -> Vec<usize> {
        (0..self.dim())
            .filter(|&i| matches!(self.components[i], SpectralComponent::Observed { clamped: true, .. }))
            .collect()
    }
}

/// Splits `y = A x + σ n` into independent scalar observations
/// `ȳ_i = s_i x̄_i + σ n̄_i`, each matched to its own equivalent step.
pub fn svd_decouple<T: Real>(
    a: &dyn LinearOperator<T>,
    y: &[T],
    sigma: T,
    schedule: &VpSchedule<T>,
) -> Result<SpectralObservation<T>, ObservationError> {
    check_len("y", a.output_dim(), y.len())?;
    if !(sigma >= T::zero()) || !sigma.is_finite() {
        return Err(ObservationError::Range(format!("sigma={sigma} must be finite and >= 0")));
    }
    let s = a.singular_values();
    let floor = null_floor(&s);
    let y_bar = a.u_t(y);
    let mut components = vec![SpectralComponent::Unobserved; a.input_dim()];
    for (i, &si) in s.iter().enumerate() {
        if !(si > floor) {
            continue;
        }
        let sigma_i = sigma / si;
        let (step, clamped) = match equivalent_step(schedule, sigma_i) {
            Ok(step) => (step, false),
            Err(ScheduleError::OutOfSchedule { sigma_max, .. }) => {
                warn!("component {i}: noise {sigma_i} exceeds schedule maximum {sigma_max}; clamped to t=T");
                let t = schedule.steps();
                let step = EquivalentStep { t_a: T::from_usize_lossy(t), alpha_bar_ta: schedule.alpha_bar(t), t0: t };
                (step, true)
            }
            Err(e) => return Err(ObservationError::Range(e.to_string())),
        };
        components[i] = SpectralComponent::Observed {
            s: si,
            y_bar: y_bar[i],
            sigma: sigma_i,
            step,
            y_prime: step.alpha_bar_ta.sqrt() * y_bar[i] / si,
            clamped,
        };
    }
    Ok(SpectralObservation { sigma, components })
}
