//! The μ-predictor interface and analytic denoisers.

mod analytic;
mod product;
mod table;

pub use analytic::{
    gaussian_denoiser, gmm_denoiser, ve_denoiser, AnalyticDenoiser, AnalyticPrior, GaussianPrior, GmmPrior,
};
pub use product::{ProductDenoiser, ProductPart};
pub use table::{load_tabulated_denoiser, parse_tabulated_denoiser, LevelParam, TableDenoiser, TableDocument};

use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PriorError {
    #[error("invalid prior: {0}")]
    Invalid(String),
    #[error("noise level out of range: {0}")]
    NoiseLevel(String),
    #[error("dimension mismatch: denoiser expects {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("denoiser does not provide {0}")]
    Unsupported(&'static str),
    #[error("table parse error: {0}")]
    Parse(String),
}

/// Noise level a denoiser is queried at: `x_t = a·x₀ + b·ε`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseLevel<T> {
    /// `ᾱ_t`: `a = √ᾱ`, `b = √(1−ᾱ)`.
    Vp(T),
    /// `σ̄_t`: `a = 1`, `b = σ̄`.
    Ve(T),
}

impl<T: Real> NoiseLevel<T> {
    /// Signal and noise scales `(a, b)`.
    pub fn scales(self) -> Result<(T, T), PriorError> {
        match self {
            NoiseLevel::Vp(ab) => {
                if !(ab > T::zero() && ab <= T::one()) {
                    return Err(PriorError::NoiseLevel(format!("alpha_bar={ab} not in (0,1]")));
                }
                Ok((ab.sqrt(), (T::one() - ab).sqrt()))
            }
            NoiseLevel::Ve(s) => {
                if !(s >= T::zero()) || !s.is_finite() {
                    return Err(PriorError::NoiseLevel(format!("sigma_bar={s} must be finite and >= 0")));
                }
                Ok((T::one(), s))
            }
        }
    }

    pub fn value(self) -> T {
        match self {
            NoiseLevel::Vp(v) | NoiseLevel::Ve(v) => v,
        }
    }
}

/// Estimate of the clean sample from a noisy one. Implementations must be
/// pure and thread-safe.
pub trait Denoiser<T: Real>: Send + Sync {
    fn mu(&self, x_t: &[T], level: NoiseLevel<T>) -> Result<Vec<T>, PriorError>;

    /// Input dimension when fixed by the prior.
    fn dim(&self) -> Option<usize> {
        None
    }

    /// `Jᵀv` with `J = ∂μ/∂x_t`.
    fn vjp(&self, _x_t: &[T], _level: NoiseLevel<T>, _v: &[T]) -> Result<Vec<T>, PriorError> {
        Err(PriorError::Unsupported("a vector-Jacobian product"))
    }
}

impl<T: Real, D: Denoiser<T> + ?Sized> Denoiser<T> for std::sync::Arc<D> {
    fn mu(&self, x_t: &[T], level: NoiseLevel<T>) -> Result<Vec<T>, PriorError> {
        (**self).mu(x_t, level)
    }

    fn dim(&self) -> Option<usize> {
        (**self).dim()
    }

    fn vjp(&self, x_t: &[T], level: NoiseLevel<T>, v: &[T]) -> Result<Vec<T>, PriorError> {
        (**self).vjp(x_t, level, v)
    }
}

/// Exact log density of a prior, used by brute-force oracles.
pub trait LogDensity<T: Real> {
    fn dim(&self) -> usize;
    fn log_density(&self, x: &[T]) -> T;
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<(), PriorError> {
    if expected == got {
        Ok(())
    } else {
        Err(PriorError::Dimension { expected, got })
    }
}

/// `μ = (x_t − √(1−ᾱ)·ε̂)/√ᾱ` for a noise predictor `ε̂`.
pub fn eps_to_mu<T: Real>(eps: &[T], x_t: &[T], alpha_bar: T) -> Result<Vec<T>, PriorError> {
    check_dim(x_t.len(), eps.len())?;
    if !(alpha_bar > T::zero() && alpha_bar <= T::one()) {
        return Err(PriorError::NoiseLevel(format!("alpha_bar={alpha_bar} not in (0,1]")));
    }
    let (a, b) = (alpha_bar.sqrt(), (T::one() - alpha_bar).sqrt());
    Ok(x_t.iter().zip(eps).map(|(&x, &e)| (x - b * e) / a).collect())
}

/// Inverse of [`eps_to_mu`]: `ε̂ = (x_t − √ᾱ·μ)/√(1−ᾱ)`.
pub fn mu_to_eps<T: Real>(mu: &[T], x_t: &[T], alpha_bar: T) -> Result<Vec<T>, PriorError> {
    check_dim(x_t.len(), mu.len())?;
    if !(alpha_bar > T::zero() && alpha_bar < T::one()) {
        return Err(PriorError::NoiseLevel(format!("alpha_bar={alpha_bar} not in (0,1)")));
    }
    let (a, b) = (alpha_bar.sqrt(), (T::one() - alpha_bar).sqrt());
    Ok(x_t.iter().zip(mu).map(|(&x, &m)| (x - a * m) / b).collect())
}

/// Adapts a VP noise predictor `ε̂(x_t, ᾱ)` to the μ interface.
pub struct EpsDenoiser<F> {
    eps: F,
}

impl<F> EpsDenoiser<F> {
    pub fn new(eps: F) -> Self {
        Self { eps }
    }
}

impl<T, F> Denoiser<T> for EpsDenoiser<F>
where
    T: Real,
    F: Fn(&[T], T) -> Vec<T> + Send + Sync,
{
    fn mu(&self, x_t: &[T], level: NoiseLevel<T>) -> Result<Vec<T>, PriorError> {
        match level {
            NoiseLevel::Vp(ab) => {
                if ab == T::one() {
                    return Ok(x_t.to_vec());
                }
                eps_to_mu(&(self.eps)(x_t, ab), x_t, ab)
            }
            NoiseLevel::Ve(_) => Err(PriorError::Unsupported("VE levels for a VP noise predictor")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eps_conversion_examples() {
        let x = [0.4f64, -1.0];
        let mu = eps_to_mu(&[0.0, 0.0], &x, 0.64).unwrap();
        assert!((mu[0] - 0.5).abs() < 1e-15 && (mu[1] + 1.25).abs() < 1e-15);
        assert_eq!(eps_to_mu(&[3.0, 7.0], &x, 1.0).unwrap(), x.to_vec());
        assert!(matches!(eps_to_mu(&[0.0, 0.0], &x, 0.0), Err(PriorError::NoiseLevel(_))));
    }

    #[test]
    fn gaussian_round_trip_through_eps_form() {
        let d = gaussian_denoiser(GaussianPrior::new(vec![0.3, -0.2], vec![0.5, 2.0]).unwrap());
        let x = [0.9, -1.7];
        for ab in [0.01, 0.3, 0.9, 0.999] {
            let mu = d.mu(&x, NoiseLevel::Vp(ab)).unwrap();
            let eps = mu_to_eps(&mu, &x, ab).unwrap();
            let back = EpsDenoiser::new(move |_: &[f64], _| eps.clone()).mu(&x, NoiseLevel::Vp(ab)).unwrap();
            for (a, b) in back.iter().zip(&mu) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
