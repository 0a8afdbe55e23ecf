use serde::{Deserialize, Serialize};

use super::{ddpm_variance_between, EquivalentStep, VpSchedule};
use crate::scalar::Real;

/// DDIM variance used on the `t ≤ t_a` side of the reference chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaTildeRule {
    /// `σ̃_t = 0`: deterministic chain, `g(t)` unbounded.
    #[default]
    Zero,
    /// `σ̃_t` equal to the DDPM variance between the two levels.
    Ddpm,
}

/// An ELBO weight. `Unbounded` marks a weight whose defining variance is zero;
/// the solvers fold such weights into the step size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weight<T> {
    Finite(T),
    Unbounded,
}

impl<T: Copy> Weight<T> {
    pub fn finite(self) -> Option<T> {
        match self {
            Weight::Finite(v) => Some(v),
            Weight::Unbounded => None,
        }
    }
}

/// Per-step coefficients of the reference chain around an equivalent step.
///
/// Arrays are indexed by `t` in `0..=T`; index 0 is unused.
#[derive(Debug, Clone)]
pub struct DdimCoefficients<T> {
    rule: SigmaTildeRule,
    step: EquivalentStep<T>,
    steps: usize,
    sigma_tilde: Vec<T>,
    sigma_tilde_top: T,
    sigma: Vec<T>,
    gamma: Vec<T>,
    zeta: Vec<T>,
    sigma_hat: Vec<T>,
    g: Vec<Weight<T>>,
    w: Vec<Weight<T>>,
    lambda: Vec<Weight<T>>,
}

impl<T: Real> DdimCoefficients<T> {
    pub fn rule(&self) -> SigmaTildeRule {
        self.rule
    }

    pub fn step(&self) -> &EquivalentStep<T> {
        &self.step
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    fn denoising(&self, t: usize) -> bool {
        t >= 1 && t <= self.step.t0 && !self.step.above(t)
    }

    /// `σ̃_t` of the transition `t → t−1`, for `1 ≤ t ≤ ⌊t_a⌋`.
    pub fn sigma_tilde(&self, t: usize) -> Option<T> {
        self.denoising(t).then(|| self.sigma_tilde[t])
    }

    /// Variance of the first transition from the fractional level `ᾱ_{t_a}`
    /// down to `ᾱ_{⌊t_a⌋}`; zero when `t_a` is an integer.
    pub fn sigma_tilde_top(&self) -> T {
        self.sigma_tilde_top
    }

    /// DDPM `σ_t` for `t > t_a`. At `t = ⌊t_a⌋+1` it is taken between
    /// `ᾱ_{t_a}` and `ᾱ_t`.
    pub fn sigma(&self, t: usize) -> Option<T> {
        (t >= 1 && t <= self.steps && self.step.above(t)).then(|| self.sigma[t])
    }

    pub fn gamma(&self, t: usize) -> Option<T> {
        self.denoising(t).then(|| self.gamma[t])
    }

    pub fn zeta(&self, t: usize) -> Option<T> {
        self.denoising(t).then(|| self.zeta[t])
    }

    /// `σ̂_t` of the Markov side, defined for `t ≥ ⌊t_a⌋+2`.
    pub fn sigma_hat(&self, t: usize) -> Option<T> {
        (t >= self.step.t0 + 2 && t <= self.steps).then(|| self.sigma_hat[t])
    }

    pub fn g(&self, t: usize) -> Weight<T> {
        self.g[t]
    }

    pub fn w(&self, t: usize) -> Weight<T> {
        self.w[t]
    }

    /// Noise-free ELBO weight `λ(t)` (the `t_a = 0` chain with DDPM variances).
    pub fn lambda(&self, t: usize) -> Weight<T> {
        self.lambda[t]
    }

    /// True when every weight on `1..=T` is finite.
    pub fn all_finite(&self) -> bool {
        (1..=self.steps).all(|t| self.g[t].finite().is_some() && self.w[t].finite().is_some())
    }

    /// Copy with every `γ_t` scaled; used to exercise failing checks.
    pub fn with_gamma_scaled(&self, k: T) -> Self {
        let mut c = self.clone();
        for g in c.gamma.iter_mut() {
            *g = *g * k;
        }
        c
    }
}

fn weight<T: Real>(num: T, var: T) -> Weight<T> {
    if var > T::zero() {
        Weight::Finite(num / var)
    } else {
        Weight::Unbounded
    }
}

fn sqrt0<T: Real>(v: T) -> T {
    v.max(T::zero()).sqrt()
}

/// Builds the full coefficient table for one equivalent step.
///
/// `γ_t`, `ζ_t` follow the chain started at `x_{t_a}` (`γ = √(1−ᾱ_{t_a})`,
/// `ζ = 0`) and propagated through each DDIM transition
/// `x_{k−1} = √ᾱ_{k−1}·x₀ + c_k·(x_k − √ᾱ_k·x₀)/√(1−ᾱ_k) + σ̃_k·ε`,
/// so that `γ_t² + ζ_t² = 1 − ᾱ_t` holds at every level.
pub fn ddim_coefficients<T: Real>(
    s: &VpSchedule<T>,
    step: &EquivalentStep<T>,
    rule: SigmaTildeRule,
) -> DdimCoefficients<T> {
    let n = s.steps();
    let ab = |t: usize| s.alpha_bar(t);
    let a = step.alpha_bar_ta;
    let t0 = step.t0.min(n);
    let two = T::lit(2.0);
    let fractional = !step.is_integer();

    let mut sigma_tilde = vec![T::zero(); n + 1];
    let mut sigma_tilde_top = T::zero();
    if rule == SigmaTildeRule::Ddpm {
        for t in 1..=t0 {
            sigma_tilde[t] = ddpm_variance_between(ab(t - 1), ab(t));
        }
        if fractional && t0 >= 1 {
            sigma_tilde_top = ddpm_variance_between(ab(t0), a);
        }
    }

    let mut gamma = vec![T::zero(); n + 1];
    let mut zeta = vec![T::zero(); n + 1];
    if t0 >= 1 {
        let (mut gm, mut z2) = (sqrt0(T::one() - a), T::zero());
        if fractional {
            let c = sqrt0(T::one() - ab(t0) - sigma_tilde_top * sigma_tilde_top);
            gm = c;
            z2 = sigma_tilde_top * sigma_tilde_top;
        }
        gamma[t0] = gm;
        zeta[t0] = z2.sqrt();
        for t in (1..t0).rev() {
            let st = sigma_tilde[t + 1];
            let c = sqrt0(T::one() - ab(t) - st * st);
            let r = c / (T::one() - ab(t + 1)).sqrt();
            gm = gm * r;
            z2 = z2 * r * r + st * st;
            gamma[t] = gm;
            zeta[t] = z2.sqrt();
        }
    }

    let mut sigma = vec![T::zero(); n + 1];
    for t in (t0 + 1)..=n {
        sigma[t] = if t == t0 + 1 { ddpm_variance_between(a, ab(t)) } else { ddpm_variance_between(ab(t - 1), ab(t)) };
    }

    let mut sigma_hat = vec![T::zero(); n + 1];
    for t in (t0 + 2)..=n {
        let v = (T::one() - ab(t) / ab(t - 1)) * (T::one() - ab(t - 1) / a) / (T::one() - ab(t) / a);
        sigma_hat[t] = sqrt0(v);
    }

    let mut g = vec![Weight::Finite(T::zero()); n + 1];
    let mut w = vec![Weight::Finite(T::zero()); n + 1];
    for t in 1..=t0 {
        let st = sigma_tilde[t];
        let var = two * st * st;
        g[t] = if t == 1 {
            weight(T::one(), var)
        } else {
            let c = sqrt0(T::one() - ab(t - 1) - st * st);
            let d = ab(t - 1).sqrt() - c * ab(t).sqrt() / (T::one() - ab(t)).sqrt();
            weight(d * d, var)
        };
    }
    for t in (t0 + 1)..=n {
        let sg = sigma[t];
        let var = sg * sg;
        if t == t0 + 1 {
            let lo = ab(t);
            let c = sqrt0(T::one() - a - var);
            let f = T::one() - (lo / a).sqrt() * c / (T::one() - lo).sqrt();
            let gg = c * sqrt0(T::one() - lo / a) / (T::one() - lo).sqrt();
            g[t] = weight(f * f, two * var);
            w[t] = weight(a.sqrt() * f * gg, var);
        } else {
            let c = sqrt0(T::one() - ab(t - 1) - var);
            let d = ab(t - 1).sqrt() - c * ab(t).sqrt() / (T::one() - ab(t)).sqrt();
            let sh = sigma_hat[t];
            let e =
                c * sqrt0(T::one() - ab(t) / a) / (T::one() - ab(t)).sqrt() - sqrt0(T::one() - ab(t - 1) / a - sh * sh);
            g[t] = weight(d * d, two * var * a);
            w[t] = weight(d * e, var);
        }
    }

    let mut lambda = vec![Weight::Finite(T::zero()); n + 1];
    for t in 1..=n {
        let sg = ddpm_variance_between(ab(t - 1), ab(t));
        let var = two * sg * sg;
        lambda[t] = if t == 1 {
            weight(T::one(), var)
        } else {
            let c = sqrt0(T::one() - ab(t - 1) - sg * sg);
            let d = ab(t - 1).sqrt() - c * ab(t).sqrt() / (T::one() - ab(t)).sqrt();
            weight(d * d, var)
        };
    }

    DdimCoefficients {
        rule,
        step: *step,
        steps: n,
        sigma_tilde,
        sigma_tilde_top,
        sigma,
        gamma,
        zeta,
        sigma_hat,
        g,
        w,
        lambda,
    }
}
