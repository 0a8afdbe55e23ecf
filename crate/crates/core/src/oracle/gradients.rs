//! Closed-form objectives and gradients for a diagonal Gaussian prior, whose
//! posterior mean is affine in the noisy input. Everything is written out from
//! the schedule directly so it can be compared against the solver's
//! vector-Jacobian path and against finite differences.

use crate::priors::GaussianPrior;
use crate::schedules::{DdimCoefficients, VpSchedule};

use super::{check_len, OracleError};

/// One fixed-noise term of the objective, either side of `t_a`.
#[derive(Debug, Clone, Copy)]
pub struct AffineTerm<'a> {
    pub prior: &'a GaussianPrior<f64>,
    pub schedule: &'a VpSchedule<f64>,
    pub coeffs: &'a DdimCoefficients<f64>,
    pub t: usize,
}

impl AffineTerm<'_> {
    /// Slope and intercept of `μ(h) = j·h + m − j·√ᾱ·m`, per coordinate.
    fn affine(&self) -> (Vec<f64>, Vec<f64>) {
        let ab = self.schedule.alpha_bar(self.t);
        let (a, b2) = (ab.sqrt(), 1.0 - ab);
        let j: Vec<f64> = self.prior.variance().iter().map(|&v| a * v / (ab * v + b2)).collect();
        let c = self.prior.mean().iter().zip(&j).map(|(&m, &ji)| m - ji * a * m).collect();
        (j, c)
    }

    fn mu(&self, h: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (j, c) = self.affine();
        (h.iter().zip(&j).zip(&c).map(|((&hi, &ji), &ci)| ji * hi + ci).collect(), j)
    }

    fn a(&self) -> f64 {
        self.coeffs.step().alpha_bar_ta
    }

    fn h_below(&self, x0: &[f64], x_ta: &[f64], eps: &[f64]) -> Vec<f64> {
        let a = self.a();
        let ab = self.schedule.alpha_bar(self.t);
        let g = self.coeffs.gamma(self.t).unwrap_or(0.0);
        let z = self.coeffs.zeta(self.t).unwrap_or(0.0);
        (0..x0.len())
            .map(|i| ab.sqrt() * x0[i] + g * (x_ta[i] - a.sqrt() * x0[i]) / (1.0 - a).sqrt() + z * eps[i])
            .collect()
    }

    fn rho(&self) -> f64 {
        (self.schedule.alpha_bar(self.t) / self.a()).sqrt()
    }

    fn h_above(&self, x_ta: &[f64], eps: &[f64]) -> Vec<f64> {
        let r = self.rho();
        let q = (1.0 - r * r).max(0.0).sqrt();
        x_ta.iter().zip(eps).map(|(&x, &e)| r * x + q * e).collect()
    }

    fn ratio(&self) -> f64 {
        match (self.coeffs.g(self.t).finite(), self.coeffs.w(self.t).finite()) {
            (Some(g), Some(w)) if g > 0.0 => w / g,
            _ => 0.0,
        }
    }
}

/// `‖x₀ − μ(h_t)‖²` at fixed noise, `t ≤ t_a`.
pub fn objective_x0(term: &AffineTerm<'_>, x0: &[f64], x_ta: &[f64], eps: &[f64]) -> f64 {
    let (mu, _) = term.mu(&term.h_below(x0, x_ta, eps));
    x0.iter().zip(&mu).map(|(x, m)| (x - m) * (x - m)).sum()
}

/// `‖x_{t_a} − √A·μ(h_t) − √(1−A)·ε′‖² + (w/g)·⟨μ(h_t), ε⟩` at fixed noise,
/// `t > t_a`.
pub fn objective_xta(term: &AffineTerm<'_>, x_ta: &[f64], eps: &[f64], eps_p: &[f64]) -> f64 {
    let a = term.a();
    let (mu, _) = term.mu(&term.h_above(x_ta, eps));
    let r2: f64 = (0..x_ta.len())
        .map(|i| {
            let r = x_ta[i] - a.sqrt() * mu[i] - (1.0 - a).sqrt() * eps_p[i];
            r * r
        })
        .sum();
    let cross: f64 = mu.iter().zip(eps).map(|(m, e)| m * e).sum();
    r2 + term.ratio() * cross
}

/// Exact gradient of [`objective_x0`] in `x₀`.
pub fn affine_full_gradient_x0(
    term: &AffineTerm<'_>,
    x0: &[f64],
    x_ta: &[f64],
    eps: &[f64],
) -> Result<Vec<f64>, OracleError> {
    check_len("x_ta", x0.len(), x_ta.len())?;
    check_len("eps", x0.len(), eps.len())?;
    let (mu, j) = term.mu(&term.h_below(x0, x_ta, eps));
    let a = term.a();
    let g = term.coeffs.gamma(term.t).unwrap_or(0.0);
    let kappa = term.schedule.alpha_bar(term.t).sqrt() - g * a.sqrt() / (1.0 - a).sqrt();
    Ok((0..x0.len()).map(|i| 2.0 * (x0[i] - mu[i]) * (1.0 - kappa * j[i])).collect())
}

/// Exact gradient of [`objective_xta`] in `x_{t_a}`.
pub fn affine_full_gradient_xta(
    term: &AffineTerm<'_>,
    x_ta: &[f64],
    eps: &[f64],
    eps_p: &[f64],
) -> Result<Vec<f64>, OracleError> {
    check_len("eps", x_ta.len(), eps.len())?;
    check_len("eps'", x_ta.len(), eps_p.len())?;
    let a = term.a();
    let rho = term.rho();
    let (mu, j) = term.mu(&term.h_above(x_ta, eps));
    let ratio = term.ratio();
    Ok((0..x_ta.len())
        .map(|i| {
            let r = x_ta[i] - a.sqrt() * mu[i] - (1.0 - a).sqrt() * eps_p[i];
            2.0 * r * (1.0 - a.sqrt() * rho * j[i]) + ratio * rho * j[i] * eps[i]
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dist;
    use crate::oracle::finite_diff_grad;
    use crate::schedules::{build_linear_vp, ddim_coefficients, equivalent_step, SigmaTildeRule};

    #[test]
    fn closed_forms_match_finite_differences() {
        let s = build_linear_vp(100, 1e-3, 0.2).unwrap();
        let step = equivalent_step(&s, 0.5).unwrap();
        let c = ddim_coefficients(&s, &step, SigmaTildeRule::Ddpm);
        let prior = GaussianPrior::new(vec![0.3, -0.1, 0.7], vec![0.5, 1.2, 0.2]).unwrap();
        let (x0, xta) = (vec![0.2, -0.4, 1.1], vec![0.1, 0.5, -0.3]);
        let (eps, eps_p) = (vec![0.7, -1.2, 0.4], vec![-0.3, 0.8, 1.5]);
        for t in [1, step.t0, step.t0 + 1, 60] {
            let term = AffineTerm { prior: &prior, schedule: &s, coeffs: &c, t };
            let (fd, exact) = if step.above(t) {
                let f = |v: &[f64]| objective_xta(&term, v, &eps, &eps_p);
                (
                    finite_diff_grad(&f, &xta, None).unwrap(),
                    affine_full_gradient_xta(&term, &xta, &eps, &eps_p).unwrap(),
                )
            } else {
                let f = |v: &[f64]| objective_x0(&term, v, &xta, &eps);
                (finite_diff_grad(&f, &x0, None).unwrap(), affine_full_gradient_x0(&term, &x0, &xta, &eps).unwrap())
            };
            assert!(dist(&fd, &exact) < 1e-7, "t={t}: {fd:?} vs {exact:?}");
        }
    }
}
