//! Single-step building blocks of the solvers: sampling `h_t`, truncated and
//! full gradient directions, restricted encoding, re-initialisation and the
//! Monte-Carlo objective.

use rand::Rng;

use super::SolverError;
use crate::linalg::{dot, norm_sq, sub};
use crate::priors::{Denoiser, NoiseLevel};
use crate::rng::normal_vec;
use crate::scalar::Real;
use crate::schedules::{DdimCoefficients, EquivalentStep, SigmaTildeRule, VeSchedule, VpSchedule, Weight};

fn check_t<T: Real>(t: usize, s: &VpSchedule<T>) -> Result<(), SolverError> {
    if t == 0 || t > s.steps() {
        return Err(SolverError::Config(format!("time step {t} outside [1, {}]", s.steps())));
    }
    Ok(())
}

fn check_len(what: &str, expected: usize, got: usize) -> Result<(), SolverError> {
    if expected != got {
        return Err(SolverError::Config(format!("{what} has length {got}, expected {expected}")));
    }
    Ok(())
}

/// `∂h_t/∂x₀` for `t ≤ t_a`.
pub(crate) fn x0_sensitivity<T: Real>(s: &VpSchedule<T>, c: &DdimCoefficients<T>, t: usize) -> T {
    let a = c.step().alpha_bar_ta;
    let gamma = c.gamma(t).unwrap_or(T::zero());
    s.alpha_bar(t).sqrt() - gamma * a.sqrt() / (T::one() - a).sqrt()
}

/// `h_t` with the fresh noise given explicitly.
pub(crate) fn h_with_noise<T: Real>(
    t: usize,
    x0: &[T],
    x_ta: Option<&[T]>,
    s: &VpSchedule<T>,
    c: &DdimCoefficients<T>,
    eps: &[T],
) -> Result<Vec<T>, SolverError> {
    check_t(t, s)?;
    let step = c.step();
    let a = step.alpha_bar_ta;
    let ab = s.alpha_bar(t);
    let xta = || x_ta.ok_or_else(|| SolverError::Config(format!("h_{t} needs x_ta (t_a = {})", step.t_a)));
    if step.above(t) {
        let xta = xta()?;
        check_len("eps", xta.len(), eps.len())?;
        let r = (ab / a).sqrt();
        let q = (T::one() - ab / a).max(T::zero()).sqrt();
        return Ok(xta.iter().zip(eps).map(|(&x, &e)| r * x + q * e).collect());
    }
    let xta = xta()?;
    check_len("x_ta", x0.len(), xta.len())?;
    check_len("eps", x0.len(), eps.len())?;
    let gamma = c.gamma(t).unwrap_or(T::zero());
    let zeta = c.zeta(t).unwrap_or(T::zero());
    let (sa, sb) = (a.sqrt(), (T::one() - a).sqrt());
    let sab = ab.sqrt();
    Ok((0..x0.len()).map(|i| sab * x0[i] + gamma * (xta[i] - sa * x0[i]) / sb + zeta * eps[i]).collect())
}

/// Draws `h_t` given the iterates: for `t > t_a`
/// `√(ᾱ_t/ᾱ_{t_a})·x_{t_a} + √(1−ᾱ_t/ᾱ_{t_a})·ε`, otherwise
/// `√ᾱ_t·x₀ + γ_t(x_{t_a} − √ᾱ_{t_a}·x₀)/√(1−ᾱ_{t_a}) + ζ_t·ε`.
pub fn sample_h<T: Real, R: Rng + ?Sized>(
    t: usize,
    x0: &[T],
    x_ta: Option<&[T]>,
    s: &VpSchedule<T>,
    c: &DdimCoefficients<T>,
    rng: &mut R,
) -> Result<Vec<T>, SolverError> {
    let n = x_ta.map_or(x0.len(), <[T]>::len);
    let eps = normal_vec(rng, n);
    h_with_noise(t, x0, x_ta, s, c, &eps)
}

/// `x₀ − μ_θ(h_t, t)` for `t ≤ t_a`, zero above.
pub fn grad_x0_truncated<T: Real, R: Rng + ?Sized>(
    x0: &[T],
    x_ta: &[T],
    t: usize,
    s: &VpSchedule<T>,
    c: &DdimCoefficients<T>,
    denoiser: &dyn Denoiser<T>,
    rng: &mut R,
) -> Result<Vec<T>, SolverError> {
    check_t(t, s)?;
    if c.step().above(t) {
        return Ok(vec![T::zero(); x0.len()]);
    }
    let h = sample_h(t, x0, Some(x_ta), s, c, rng)?;
    let mu = denoiser.mu(&h, NoiseLevel::Vp(s.alpha_bar(t)))?;
    Ok(sub(x0, &mu))
}

/// `x_{t_a} − √ᾱ_{t_a}·μ_θ(h_t, t) − √(1−ᾱ_{t_a})·ε′` for `t > t_a`, zero
/// otherwise. `ε` is drawn before `ε′`.
pub fn grad_xta_truncated<T: Real, R: Rng + ?Sized>(
    x_ta: &[T],
    t: usize,
    s: &VpSchedule<T>,
    c: &DdimCoefficients<T>,
    denoiser: &dyn Denoiser<T>,
    rng: &mut R,
) -> Result<Vec<T>, SolverError> {
    check_t(t, s)?;
    if !c.step().above(t) {
        return Ok(vec![T::zero(); x_ta.len()]);
    }
    let h = sample_h(t, x_ta, Some(x_ta), s, c, rng)?;
    let mu = denoiser.mu(&h, NoiseLevel::Vp(s.alpha_bar(t)))?;
    let eps_p: Vec<T> = normal_vec(rng, x_ta.len());
    Ok(aux_residual(x_ta, &mu, &eps_p, c.step().alpha_bar_ta))
}

pub(crate) fn aux_residual<T: Real>(x_ta: &[T], mu: &[T], eps_p: &[T], a: T) -> Vec<T> {
    let (sa, sb) = (a.sqrt(), (T::one() - a).max(T::zero()).sqrt());
    (0..x_ta.len()).map(|i| x_ta[i] - sa * mu[i] - sb * eps_p[i]).collect()
}

/// Half the full gradient of `‖x₀ − μ_θ(h_t)‖²` in `x₀`, including the path
/// through the denoiser: `e − κ·Jᵀe` with `κ = ∂h_t/∂x₀`.
pub fn full_direction_x0<T: Real>(
    x0: &[T],
    x_ta: &[T],
    t: usize,
    s: &VpSchedule<T>,
    c: &DdimCoefficients<T>,
    denoiser: &dyn Denoiser<T>,
    eps: &[T],
) -> Result<Vec<T>, SolverError> {
    check_t(t, s)?;
    if c.step().above(t) {
        return Ok(vec![T::zero(); x0.len()]);
    }
    let h = h_with_noise(t, x0, Some(x_ta), s, c, eps)?;
    let level = NoiseLevel::Vp(s.alpha_bar(t));
    let e = sub(x0, &denoiser.mu(&h, level)?);
    let je = denoiser.vjp(&h, level, &e)?;
    let k = x0_sensitivity(s, c, t);
    Ok(e.iter().zip(&je).map(|(&ei, &ji)| ei - k * ji).collect())
}

/// Half the full gradient of `‖r‖² + (w/g)·⟨μ_θ(h_t), ε⟩` in `x_{t_a}`,
/// where `r` is the truncated residual.
pub fn full_direction_xta<T: Real>(
    x_ta: &[T],
    t: usize,
    s: &VpSchedule<T>,
    c: &DdimCoefficients<T>,
    denoiser: &dyn Denoiser<T>,
    eps: &[T],
    eps_p: &[T],
) -> Result<Vec<T>, SolverError> {
    check_t(t, s)?;
    if !c.step().above(t) {
        return Ok(vec![T::zero(); x_ta.len()]);
    }
    check_len("eps'", x_ta.len(), eps_p.len())?;
    let a = c.step().alpha_bar_ta;
    let rho = (s.alpha_bar(t) / a).sqrt();
    let h = h_with_noise(t, x_ta, Some(x_ta), s, c, eps)?;
    let level = NoiseLevel::Vp(s.alpha_bar(t));
    let r = aux_residual(x_ta, &denoiser.mu(&h, level)?, eps_p, a);
    let ratio = w_over_g(c, t)?;
    let jr = denoiser.vjp(&h, level, &r)?;
    let je = if ratio == T::zero() { vec![T::zero(); r.len()] } else { denoiser.vjp(&h, level, eps)? };
    let half = T::lit(0.5);
    Ok((0..r.len()).map(|i| r[i] - a.sqrt() * rho * jr[i] + half * ratio * rho * je[i]).collect())
}

/// `w(t)/g(t)`; zero where `g` is unbounded (noise-free chain, `w = 0`).
pub(crate) fn w_over_g<T: Real>(c: &DdimCoefficients<T>, t: usize) -> Result<T, SolverError> {
    match (c.g(t), c.w(t)) {
        (Weight::Unbounded, _) => Ok(T::zero()),
        (Weight::Finite(g), Weight::Finite(w)) if g > T::zero() => Ok(w / g),
        (Weight::Finite(_), Weight::Finite(w)) if w == T::zero() => Ok(T::zero()),
        _ => Err(SolverError::Config(format!("w({t})/g({t}) is undefined for this coefficient table"))),
    }
}

/// `√ᾱ_t·x₀ + ξ·ε₀ + √(1−ᾱ_t−ξ²)·ε`.
pub fn restricted_encode_vp<T: Real, R: Rng + ?Sized>(
    x0: &[T],
    eps0: &[T],
    t: usize,
    xi: T,
    s: &VpSchedule<T>,
    rng: &mut R,
) -> Result<Vec<T>, SolverError> {
    check_t(t, s)?;
    check_len("eps0", x0.len(), eps0.len())?;
    let eps = normal_vec(rng, x0.len());
    let ab = s.alpha_bar(t);
    encode_with(x0, eps0, &eps, ab.sqrt(), (T::one() - ab).sqrt(), xi)
}

/// `x₀ + ξ·ε₀ + √(σ̄_t² − ξ²)·ε`.
pub fn restricted_encode_ve<T: Real, R: Rng + ?Sized>(
    x0: &[T],
    eps0: &[T],
    t: usize,
    xi: T,
    s: &VeSchedule<T>,
    rng: &mut R,
) -> Result<Vec<T>, SolverError> {
    if t == 0 || t > s.steps() {
        return Err(SolverError::Config(format!("time step {t} outside [1, {}]", s.steps())));
    }
    check_len("eps0", x0.len(), eps0.len())?;
    let eps = normal_vec(rng, x0.len());
    encode_with(x0, eps0, &eps, T::one(), s.sigma_bar(t), xi)
}

/// `a·x₀ + ξ·ε₀ + √(level² − ξ²)·ε`, or `a·x₀ + level·ε` when `ξ = 0`.
pub(crate) fn encode_with<T: Real>(
    x0: &[T],
    eps0: &[T],
    eps: &[T],
    a: T,
    level: T,
    xi: T,
) -> Result<Vec<T>, SolverError> {
    if !(xi >= T::zero()) || xi > level * (T::one() + T::lit(1e-12)) {
        return Err(SolverError::Config(format!("xi={xi} outside [0, {level}]")));
    }
    if xi == T::zero() {
        return Ok(x0.iter().zip(eps).map(|(&x, &e)| a * x + level * e).collect());
    }
    let rest = (level * level - xi * xi).max(T::zero()).sqrt();
    Ok((0..x0.len()).map(|i| a * x0[i] + xi * eps0[i] + rest * eps[i]).collect())
}

/// Turns the final auxiliary iterate into a clean estimate: `μ_θ(x_{t_a}, t_a)`
/// for integer `t_a`; for fractional `t_a` one forward step to `⌊t_a⌋+1`
/// followed by `μ_θ` at that step.
pub fn reinit_x0<T: Real, R: Rng + ?Sized>(
    x_ta: &[T],
    step: &EquivalentStep<T>,
    s: &VpSchedule<T>,
    denoiser: &dyn Denoiser<T>,
    rng: &mut R,
) -> Result<Vec<T>, SolverError> {
    if !(step.t_a >= T::zero()) || step.t_a > T::from_usize_lossy(s.steps()) {
        return Err(SolverError::Config(format!("t_a={} outside [0, {}]", step.t_a, s.steps())));
    }
    let a = step.alpha_bar_ta;
    if step.is_integer() {
        return Ok(denoiser.mu(x_ta, NoiseLevel::Vp(a))?);
    }
    let eps: Vec<T> = normal_vec(rng, x_ta.len());
    let lower = s.alpha_bar(step.t0 + 1);
    let (r, q) = forward_factors(a, lower);
    let x: Vec<T> = x_ta.iter().zip(&eps).map(|(&x, &e)| r * x + q * e).collect();
    Ok(denoiser.mu(&x, NoiseLevel::Vp(lower))?)
}

/// Scales of the forward transition from level `upper` to the noisier `lower`.
pub(crate) fn forward_factors<T: Real>(upper: T, lower: T) -> (T, T) {
    let r = lower / upper;
    (r.sqrt(), (T::one() - r).max(T::zero()).sqrt())
}

/// Unbiased Monte-Carlo estimate of the two-variable objective (up to its
/// constant): the mean of `T·term(t)` over `samples` uniform draws of `t`.
///
/// Steps at or below `t_a` contribute `g(t)‖x₀ − μ_θ(h_t)‖²`, steps above
/// contribute `g(t)‖r‖² + w(t)⟨μ_θ(h_t), ε⟩`. The noise-free chain uses the
/// weights `λ(t)`.
pub fn objective_estimate<T: Real, R: Rng + ?Sized>(
    x0: &[T],
    x_ta: Option<&[T]>,
    s: &VpSchedule<T>,
    c: &DdimCoefficients<T>,
    denoiser: &dyn Denoiser<T>,
    samples: usize,
    rng: &mut R,
) -> Result<f64, SolverError> {
    if c.rule() == SigmaTildeRule::Zero {
        return Err(SolverError::Config("objective estimates need sigma_tilde_rule = ddpm".into()));
    }
    if samples == 0 {
        return Err(SolverError::Config("objective estimate needs at least one sample".into()));
    }
    let n = s.steps();
    let a = c.step().alpha_bar_ta;
    let noise_free = a == T::one();
    let xta = x_ta.unwrap_or(x0);
    let mut total = 0.0;
    for _ in 0..samples {
        let t = rng.random_range(1..=n);
        let eps: Vec<T> = normal_vec(rng, x0.len());
        let eps_p: Vec<T> = normal_vec(rng, x0.len());
        let h = h_with_noise(t, x0, Some(xta), s, c, &eps)?;
        let mu = denoiser.mu(&h, NoiseLevel::Vp(s.alpha_bar(t)))?;
        let finite = |w: Weight<T>, what: &str| {
            w.finite().ok_or_else(|| SolverError::Config(format!("{what}({t}) is unbounded")))
        };
        let term = if noise_free {
            finite(c.lambda(t), "lambda")? * norm_sq(&sub(x0, &mu))
        } else if c.step().above(t) {
            let r = aux_residual(xta, &mu, &eps_p, a);
            finite(c.g(t), "g")? * norm_sq(&r) + finite(c.w(t), "w")? * dot(&mu, &eps)
        } else {
            finite(c.g(t), "g")? * norm_sq(&sub(x0, &mu))
        };
        total += term.as_f64();
    }
    Ok(n as f64 * total / samples as f64)
}
