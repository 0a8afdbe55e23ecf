//! Two-phase solver for noisy linear observations under a VP prior.
//!
//! The problem is rewritten in the operator's spectral coordinates, where each
//! observed component `i` is a noise-free constraint on `x_{t_i}`. Components
//! sharing an equivalent step form a group. A group first runs the auxiliary
//! phase (`t > t_i`, pinned to `ȳ'`), is re-initialised once `t ≤ t_i`, and then
//! refines `x₀`. Unobserved components follow the group with the largest
//! `t_i`, so a homogeneous step reduces to the scalar-`t_a` algorithm.

use std::sync::Arc;

use super::steps::{forward_factors, w_over_g, x0_sensitivity};
use super::{GradientMode, Observation, Phase, Problem, Recorder, Schedule, SolveReport, SolverConfig, SolverError};
use crate::observations::{svd_decouple, LinearOperator, SpectralComponent, SpectralObservation};
use crate::priors::{Denoiser, NoiseLevel, PriorError};
use crate::rng::{NoiseStreams, Stream};
use crate::scalar::Real;
use crate::schedules::{ddim_coefficients, time_steps, DdimCoefficients, EquivalentStep, VpSchedule};

/// `μ̄(h̄) = Vᵀ μ_θ(V h̄)`: a denoiser acting on spectral coordinates.
#[derive(Clone)]
pub struct SpectralDenoiser<T: Real> {
    inner: Arc<dyn Denoiser<T>>,
    op: Arc<dyn LinearOperator<T>>,
}

impl<T: Real> SpectralDenoiser<T> {
    pub fn new(inner: Arc<dyn Denoiser<T>>, op: Arc<dyn LinearOperator<T>>) -> Self {
        Self { inner, op }
    }
}

impl<T: Real> Denoiser<T> for SpectralDenoiser<T> {
    fn mu(&self, h: &[T], level: NoiseLevel<T>) -> Result<Vec<T>, PriorError> {
        crate::priors::check_dim(self.op.input_dim(), h.len())?;
        Ok(self.op.v_t(&self.inner.mu(&self.op.v(h), level)?))
    }

    fn dim(&self) -> Option<usize> {
        Some(self.op.input_dim())
    }

    fn vjp(&self, h: &[T], level: NoiseLevel<T>, v: &[T]) -> Result<Vec<T>, PriorError> {
        crate::priors::check_dim(self.op.input_dim(), h.len())?;
        crate::priors::check_dim(self.op.input_dim(), v.len())?;
        Ok(self.op.v_t(&self.inner.vjp(&self.op.v(h), level, &self.op.v(v))?))
    }
}

/// Branch assignment of the spectral components at one time step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepRoute {
    /// Observed components with `t > t_i`: auxiliary update, pinned to `ȳ'_i`.
    pub aux: Vec<usize>,
    /// Observed components with `t ≤ t_i`: `x₀` update.
    pub denoise: Vec<usize>,
    /// Components without a usable observation (null space or clamped noise).
    pub unobserved: Vec<usize>,
    /// Whether the unobserved components are still in their auxiliary phase,
    /// i.e. `t` exceeds the largest `t_i`.
    pub unobserved_in_aux: bool,
}

fn usable<T: Real>(c: &SpectralComponent<T>) -> Option<EquivalentStep<T>> {
    match *c {
        SpectralComponent::Observed { step, clamped: false, .. } => Some(step),
        _ => None,
    }
}

pub fn heterogeneous_step_router<T: Real>(t: usize, obs: &SpectralObservation<T>) -> StepRoute {
    let mut route =
        StepRoute { aux: Vec::new(), denoise: Vec::new(), unobserved: Vec::new(), unobserved_in_aux: false };
    let mut t_max: Option<T> = None;
    for (i, c) in obs.components.iter().enumerate() {
        match usable(c) {
            Some(step) => {
                t_max = Some(t_max.map_or(step.t_a, |m| m.max(step.t_a)));
                if step.above(t) {
                    route.aux.push(i);
                } else {
                    route.denoise.push(i);
                }
            }
            None => route.unobserved.push(i),
        }
    }
    route.unobserved_in_aux = t_max.is_some_and(|m| T::from_usize_lossy(t) > m);
    route
}

struct Group<T> {
    step: EquivalentStep<T>,
    coeffs: DdimCoefficients<T>,
    members: Vec<usize>,
    crossed: bool,
}

fn build_groups<T: Real>(
    obs: &SpectralObservation<T>,
    s: &VpSchedule<T>,
    config: &SolverConfig,
) -> Result<(Vec<Group<T>>, Vec<usize>), SolverError> {
    let mut groups: Vec<Group<T>> = Vec::new();
    for (i, c) in obs.components.iter().enumerate() {
        let Some(step) = usable(c) else { continue };
        let key = |g: &EquivalentStep<T>| (g.t_a.as_f64().to_bits(), g.alpha_bar_ta.as_f64().to_bits());
        match groups.iter_mut().find(|g| key(&g.step) == key(&step)) {
            Some(g) => g.members.push(i),
            None => groups.push(Group {
                step,
                coeffs: ddim_coefficients(s, &step, config.sigma_tilde_rule),
                members: vec![i],
                crossed: false,
            }),
        }
    }
    if groups.is_empty() {
        return Err(SolverError::Config("the observation has no usable spectral component".into()));
    }
    groups.sort_by(|a, b| b.step.t_a.partial_cmp(&a.step.t_a).unwrap_or(std::cmp::Ordering::Equal));
    let mut owner = vec![usize::MAX; obs.dim()];
    for (g, group) in groups.iter().enumerate() {
        for &i in &group.members {
            owner[i] = g;
        }
    }
    // Unobserved components join the group with the largest t_i.
    for i in obs.unobserved().into_iter().chain(obs.clamped()) {
        groups[0].members.push(i);
        owner[i] = 0;
    }
    Ok((groups, owner))
}

/// Runs the two-phase solver on a noisy linear observation.
pub fn run_noisy_vp<T: Real>(problem: &Problem<T>, config: &SolverConfig) -> Result<SolveReport<T>, SolverError> {
    problem.validate(config)?;
    let Schedule::Vp(s) = &problem.schedule else {
        return Err(SolverError::Config("run_noisy_vp needs a VP schedule".into()));
    };
    let Observation::Linear { op, y, sigma } = &problem.observation else {
        return Err(SolverError::Config("run_noisy_vp needs a linear observation".into()));
    };
    let obs = svd_decouple(op.as_ref(), y, *sigma, s)?;
    let mut warnings = Vec::new();
    let clamped = obs.clamped();
    if !clamped.is_empty() {
        warnings.push(format!(
            "{} spectral component(s) exceed the schedule's noise range and are treated as unobserved",
            clamped.len()
        ));
    }
    let (mut groups, owner) = build_groups(&obs, s, config)?;
    let full = config.gradient_mode == GradientMode::FullOracle;
    if full && groups.len() > 1 {
        return Err(SolverError::Config("full-oracle gradients need a homogeneous equivalent step".into()));
    }
    let pinned: Vec<(usize, T)> = obs
        .components
        .iter()
        .enumerate()
        .filter_map(|(i, c)| match *c {
            SpectralComponent::Observed { y_prime, clamped: false, .. } => Some((i, y_prime)),
            _ => None,
        })
        .collect();

    let n = problem.dim();
    let total = s.steps();
    let steps = time_steps(total, config.steps);
    let den = SpectralDenoiser::new(problem.denoiser.clone(), op.clone());
    let mut rng = NoiseStreams::new(config.seed);
    let (eta1, eta2, beta) = (T::lit(config.eta1), T::lit(config.eta2), T::lit(config.beta));
    let one = T::one();

    let eps_t: Vec<T> = rng.normal(Stream::Init, n);
    let mut x0 = den.mu(&eps_t, NoiseLevel::Vp(s.alpha_bar(total)))?;
    let eps_p_t: Vec<T> = rng.normal(Stream::Init, n);
    let mut xta: Vec<T> = (0..n)
        .map(|i| {
            let a = groups[owner[i]].step.alpha_bar_ta;
            a.sqrt() * x0[i] + (one - a).max(T::zero()).sqrt() * eps_p_t[i]
        })
        .collect();
    for &(i, yp) in &pinned {
        xta[i] = yp;
    }
    let (mut va, mut v0) = (vec![T::zero(); n], vec![T::zero(); n]);
    let mut rec = Recorder::new(y);
    let objective_on = config.objective_samples > 0 && groups.len() == 1;

    let spatial = |x: &[T]| op.v(x);
    let mut x0_spatial = spatial(&x0);

    for &t in &steps {
        while let Some(g) = (0..groups.len()).find(|&g| !groups[g].crossed && !groups[g].step.above(t)) {
            reinit_group(g, &mut groups, &owner, &xta, &mut x0, s, &den, &mut rng)?;
            let prev = std::mem::replace(&mut x0_spatial, spatial(&x0));
            rec.record(groups[g].step.t0, Phase::Reinit, None, problem, &x0_spatial, &prev, 0.0, &[xta.as_slice()])?;
        }
        let ab = s.alpha_bar(t);
        let phase = match groups.iter().filter(|g| g.crossed).count() {
            0 => Phase::Aux,
            k if k == groups.len() => Phase::Denoise,
            _ => Phase::Mixed,
        };
        for _ in 0..config.repetitions {
            let eps: Vec<T> = rng.normal(Stream::Sample, n);
            let eps_p: Vec<T> = rng.normal(Stream::Aux, n);
            let mut h = vec![T::zero(); n];
            for group in &groups {
                let a = group.step.alpha_bar_ta;
                if group.crossed {
                    let gamma = group.coeffs.gamma(t).unwrap_or(T::zero());
                    let zeta = group.coeffs.zeta(t).unwrap_or(T::zero());
                    let (sa, sb) = (a.sqrt(), (one - a).sqrt());
                    for &i in &group.members {
                        h[i] = ab.sqrt() * x0[i] + gamma * (xta[i] - sa * x0[i]) / sb + zeta * eps[i];
                    }
                } else {
                    let (r, q) = forward_factors(a, ab);
                    for &i in &group.members {
                        h[i] = r * xta[i] + q * eps[i];
                    }
                }
            }
            let level = NoiseLevel::Vp(ab);
            let mu = den.mu(&h, level)?;
            let mut d = vec![T::zero(); n];
            for group in &groups {
                let a = group.step.alpha_bar_ta;
                let (sa, sb) = (a.sqrt(), (one - a).max(T::zero()).sqrt());
                for &i in &group.members {
                    d[i] = if group.crossed { x0[i] - mu[i] } else { xta[i] - sa * mu[i] - sb * eps_p[i] };
                }
            }
            if full {
                let group = &groups[0];
                let a = group.step.alpha_bar_ta;
                let jd = den.vjp(&h, level, &d)?;
                if group.crossed {
                    let k = x0_sensitivity(s, &group.coeffs, t);
                    for i in 0..n {
                        d[i] = d[i] - k * jd[i];
                    }
                } else {
                    let rho = (ab / a).sqrt();
                    let ratio = w_over_g(&group.coeffs, t)?;
                    let je = if ratio == T::zero() { vec![T::zero(); n] } else { den.vjp(&h, level, &eps)? };
                    for i in 0..n {
                        d[i] = d[i] - a.sqrt() * rho * jd[i] + T::lit(0.5) * ratio * rho * je[i];
                    }
                }
            }
            let prev_x0 = x0.clone();
            for group in &groups {
                for &i in &group.members {
                    if group.crossed {
                        v0[i] = beta * v0[i] + (one - beta) * d[i];
                        x0[i] = x0[i] - eta1 * v0[i];
                    } else {
                        va[i] = beta * va[i] + (one - beta) * d[i];
                        xta[i] = xta[i] - eta2 * va[i];
                    }
                }
            }
            let mut constraint = 0.0f64;
            for &(i, yp) in &pinned {
                if !groups[owner[i]].crossed {
                    xta[i] = yp;
                    constraint = constraint.max((xta[i] - yp).abs().as_f64());
                }
            }
            let objective = if objective_on {
                let c = &groups[0].coeffs;
                Some(super::objective_estimate(
                    &x0,
                    Some(&xta),
                    s,
                    c,
                    &den,
                    config.objective_samples,
                    rng.get(Stream::Objective),
                )?)
            } else {
                None
            };
            let prev =
                if prev_x0 == x0 { x0_spatial.clone() } else { std::mem::replace(&mut x0_spatial, spatial(&x0)) };
            rec.record(t, phase, objective, problem, &x0_spatial, &prev, constraint, &[xta.as_slice()])?;
        }
    }
    while let Some(g) = (0..groups.len()).find(|&g| !groups[g].crossed) {
        reinit_group(g, &mut groups, &owner, &xta, &mut x0, s, &den, &mut rng)?;
        let prev = std::mem::replace(&mut x0_spatial, spatial(&x0));
        rec.record(groups[g].step.t0, Phase::Reinit, None, problem, &x0_spatial, &prev, 0.0, &[xta.as_slice()])?;
    }
    log::debug!("noisy solve finished after {} iterations", rec.iterations());
    Ok(rec.finish("noisy_vp", problem, x0_spatial, steps, config, warnings))
}

/// Re-initialises the `x₀` components of group `g` from its auxiliary values.
/// Groups are visited in decreasing `t_i`, so every other pending group is
/// cleaner and is forward-noised to the common level; crossed components are
/// re-encoded from their `x₀`.
#[allow(clippy::too_many_arguments)]
fn reinit_group<T: Real>(
    g: usize,
    groups: &mut [Group<T>],
    owner: &[usize],
    xta: &[T],
    x0: &mut [T],
    s: &VpSchedule<T>,
    den: &SpectralDenoiser<T>,
    rng: &mut NoiseStreams,
) -> Result<(), SolverError> {
    let n = xta.len();
    let step = groups[g].step;
    let level = if step.is_integer() { step.alpha_bar_ta } else { s.alpha_bar(step.t0 + 1) };
    let others = groups.iter().enumerate().any(|(k, o)| k != g && (o.crossed || o.step.alpha_bar_ta != level));
    let eps: Vec<T> = if !step.is_integer() || others { rng.normal(Stream::Reinit, n) } else { vec![T::zero(); n] };
    let mut h = vec![T::zero(); n];
    for i in 0..n {
        let o = &groups[owner[i]];
        h[i] = if o.crossed {
            level.sqrt() * x0[i] + (T::one() - level).max(T::zero()).sqrt() * eps[i]
        } else {
            let (r, q) = forward_factors(o.step.alpha_bar_ta, level);
            r * xta[i] + q * eps[i]
        };
    }
    let mu = den.mu(&h, NoiseLevel::Vp(level))?;
    for &i in &groups[g].members {
        x0[i] = mu[i];
    }
    groups[g].crossed = true;
    Ok(())
}
