//! Projected loops for noise-free constraints: VP, VE and VE with restricted
//! encoding. Each step draws a corruption of `x₀`, forms the denoising
//! direction, applies momentum and projects back onto the constraint set.

use super::steps::encode_with;
use super::{GradientMode, Phase, Problem, Recorder, Schedule, SolveReport, SolverConfig, SolverError, XiRule};
use crate::priors::NoiseLevel;
use crate::rng::{normal_vec, stream_rng, NoiseStreams, Stream};
use crate::scalar::Real;
use crate::schedules::{ddim_coefficients, time_steps, EquivalentStep, SigmaTildeRule};

/// Forward corruption `scale(t)·x₀ + level(t)·ε` of either parameterisation.
enum Chain<'a, T> {
    Vp(&'a crate::schedules::VpSchedule<T>),
    Ve(&'a crate::schedules::VeSchedule<T>),
}

impl<T: Real> Chain<'_, T> {
    fn steps(&self) -> usize {
        match self {
            Chain::Vp(s) => s.steps(),
            Chain::Ve(s) => s.steps(),
        }
    }

    fn scale(&self, t: usize) -> T {
        match self {
            Chain::Vp(s) => s.alpha_bar(t).sqrt(),
            Chain::Ve(_) => T::one(),
        }
    }

    /// Noise std at step `t`; zero at `t = 0`.
    fn level(&self, t: usize) -> T {
        match self {
            Chain::Vp(s) => (T::one() - s.alpha_bar(t)).max(T::zero()).sqrt(),
            Chain::Ve(s) => s.sigma_bar(t),
        }
    }

    fn noise_level(&self, t: usize) -> NoiseLevel<T> {
        match self {
            Chain::Vp(s) => NoiseLevel::Vp(s.alpha_bar(t)),
            Chain::Ve(s) => NoiseLevel::Ve(s.sigma_bar(t)),
        }
    }

    fn xi(&self, rule: XiRule, t: usize) -> Result<T, SolverError> {
        let xi = match rule {
            XiRule::Off => T::zero(),
            XiRule::Constant(v) => T::lit(v),
            XiRule::PrevLevel => self.level(t - 1),
            XiRule::FullLevel => self.level(t),
        };
        if xi > self.level(t) * (T::one() + T::lit(1e-12)) {
            return Err(SolverError::Config(format!("xi={xi} exceeds the noise level {} at t={t}", self.level(t))));
        }
        Ok(xi)
    }
}

/// Projected loop for a noise-free VP problem: `x₀ ← P(x₀ − η₁·v)`.
///
/// Honours `xi_rule` through the VP form of restricted encoding. Noisy
/// nonlinear observations run here too, with the operator's noise-tolerant
/// projection.
pub fn run_noisefree_vp<T: Real>(problem: &Problem<T>, config: &SolverConfig) -> Result<SolveReport<T>, SolverError> {
    let Schedule::Vp(s) = &problem.schedule else {
        return Err(SolverError::Config("run_noisefree_vp needs a VP schedule".into()));
    };
    if matches!(problem.observation, super::Observation::Linear { sigma, .. } if sigma > T::zero()) {
        return Err(SolverError::Config("noisy linear observations use run_noisy_vp".into()));
    }
    run_chain(problem, config, Chain::Vp(s), config.xi_rule, "noisefree_vp")
}

/// VE loop with momentum and repetitions.
pub fn run_ve<T: Real>(problem: &Problem<T>, config: &SolverConfig) -> Result<SolveReport<T>, SolverError> {
    let s = ve_schedule(problem)?;
    run_chain(problem, config, Chain::Ve(s), XiRule::Off, "ve")
}

/// VE loop with restricted encoding; `xi_rule = off` falls back to
/// `ξ = σ̄_{t−1}`.
pub fn run_ve_restricted<T: Real>(problem: &Problem<T>, config: &SolverConfig) -> Result<SolveReport<T>, SolverError> {
    let s = ve_schedule(problem)?;
    let rule = if config.xi_rule == XiRule::Off { XiRule::PrevLevel } else { config.xi_rule };
    run_chain(problem, config, Chain::Ve(s), rule, "ve_restricted")
}

fn ve_schedule<T: Real>(problem: &Problem<T>) -> Result<&crate::schedules::VeSchedule<T>, SolverError> {
    let Schedule::Ve(s) = &problem.schedule else {
        return Err(SolverError::Config("the VE loop needs a VE schedule".into()));
    };
    if problem.observation.sigma() > T::zero() {
        return Err(SolverError::Config("noisy observations are not supported with VE schedules".into()));
    }
    Ok(s)
}

fn run_chain<T: Real>(
    problem: &Problem<T>,
    config: &SolverConfig,
    chain: Chain<'_, T>,
    xi_rule: XiRule,
    name: &str,
) -> Result<SolveReport<T>, SolverError> {
    problem.validate(config)?;
    let n = problem.dim();
    let total = chain.steps();
    let steps = time_steps(total, config.steps);
    let denoiser = problem.denoiser.as_ref();
    let mut rng = NoiseStreams::new(config.seed);
    let eta = T::lit(config.eta1);
    let beta = T::lit(config.beta);
    let full = config.gradient_mode == GradientMode::FullOracle;

    let objective = match (&chain, config.objective_samples) {
        (Chain::Vp(s), k) if k > 0 => {
            Some((ddim_coefficients(s, &EquivalentStep::noise_free(), SigmaTildeRule::Ddpm), k))
        }
        _ => None,
    };

    let eps_t: Vec<T> = rng.normal(Stream::Init, n);
    let init = match chain {
        Chain::Vp(_) => eps_t,
        Chain::Ve(_) => eps_t.iter().map(|&e| chain.level(total) * e).collect(),
    };
    let mut x0 = denoiser.mu(&init, chain.noise_level(total))?;
    let eps0: Vec<T> = match (xi_rule, config.encode_seed) {
        (XiRule::Off, _) => Vec::new(),
        (_, Some(seed)) => normal_vec(&mut stream_rng(seed, Stream::Encode), n),
        (_, None) => rng.normal(Stream::Encode, n),
    };
    let mut v = vec![T::zero(); n];
    let mut rec = Recorder::new(problem.observation.y());

    for &t in &steps {
        let xi = chain.xi(xi_rule, t)?;
        let (a, level, nl) = (chain.scale(t), chain.level(t), chain.noise_level(t));
        for _ in 0..config.repetitions {
            let eps: Vec<T> = rng.normal(Stream::Sample, n);
            let corrupted = if xi_rule == XiRule::Off {
                encode_with(&x0, &[], &eps, a, level, T::zero())?
            } else {
                encode_with(&x0, &eps0, &eps, a, level, xi)?
            };
            let mu = denoiser.mu(&corrupted, nl)?;
            let mut d: Vec<T> = x0.iter().zip(&mu).map(|(&x, &m)| x - m).collect();
            if full {
                let jd = denoiser.vjp(&corrupted, nl, &d)?;
                for (di, ji) in d.iter_mut().zip(&jd) {
                    *di = *di - a * *ji;
                }
            }
            for (vi, di) in v.iter_mut().zip(&d) {
                *vi = beta * *vi + (T::one() - beta) * *di;
            }
            let stepped: Vec<T> = x0.iter().zip(&v).map(|(&x, &vi)| x - eta * vi).collect();
            let projected = problem.observation.project(&stepped)?;
            let prev = std::mem::replace(&mut x0, projected);
            let obj = match (&objective, &chain) {
                (Some((c, k)), Chain::Vp(s)) => {
                    Some(super::objective_estimate(&x0, None, s, c, denoiser, *k, rng.get(Stream::Objective))?)
                }
                _ => None,
            };
            let residual = problem.observation.residual(&x0).as_f64();
            rec.record(t, Phase::Denoise, obj, problem, &x0, &prev, residual, &[])?;
        }
    }
    Ok(rec.finish(name, problem, x0, steps, config, Vec::new()))
}
