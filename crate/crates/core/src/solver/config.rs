use serde::{Deserialize, Serialize};

use super::SolverError;
use crate::schedules::SigmaTildeRule;

/// Restricted-encoding level `ξ(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "XiRepr", into = "XiRepr")]
pub enum XiRule {
    #[default]
    Off,
    Constant(f64),
    /// `ξ = σ̄_{t−1}` (VE) or `√(1−ᾱ_{t−1})` (VP).
    PrevLevel,
    /// `ξ = σ̄_t` (VE) or `√(1−ᾱ_t)` (VP).
    FullLevel,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum XiRepr {
    Named(String),
    Value(f64),
}

impl TryFrom<XiRepr> for XiRule {
    type Error = String;

    fn try_from(r: XiRepr) -> Result<Self, String> {
        match r {
            XiRepr::Value(v) => Ok(XiRule::Constant(v)),
            XiRepr::Named(s) => match s.as_str() {
                "off" => Ok(XiRule::Off),
                "prev" => Ok(XiRule::PrevLevel),
                "full" => Ok(XiRule::FullLevel),
                other => Err(format!("unknown xi rule `{other}` (expected off, prev, full or a number)")),
            },
        }
    }
}

impl From<XiRule> for XiRepr {
    fn from(r: XiRule) -> Self {
        match r {
            XiRule::Off => XiRepr::Named("off".into()),
            XiRule::PrevLevel => XiRepr::Named("prev".into()),
            XiRule::FullLevel => XiRepr::Named("full".into()),
            XiRule::Constant(v) => XiRepr::Value(v),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    /// Denoiser Jacobian treated as zero.
    #[default]
    Truncated,
    /// Full gradient through the denoiser's vector-Jacobian product.
    FullOracle,
}

/// How a nonlinear constraint is enforced.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum NonlinearProjection {
    #[default]
    Exact,
    GradientFallback {
        iters: usize,
        lr: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub eta1: f64,
    pub eta2: f64,
    pub beta: f64,
    #[serde(rename = "N", alias = "repetitions")]
    pub repetitions: usize,
    pub xi_rule: XiRule,
    /// Number of time steps visited; `None` visits all `T`.
    pub steps: Option<usize>,
    pub seed: u64,
    /// Seed of the restricted-encoding noise `ε₀`; defaults to `seed`. Setting
    /// it shares one `ε₀` across runs with different seeds.
    pub encode_seed: Option<u64>,
    pub max_dim: usize,
    pub gradient_mode: GradientMode,
    pub sigma_tilde_rule: SigmaTildeRule,
    /// Monte-Carlo samples of the objective per trace row; 0 disables it.
    pub objective_samples: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eta1: 0.5,
            eta2: 1.0,
            beta: 0.0,
            repetitions: 1,
            xi_rule: XiRule::Off,
            steps: None,
            seed: 0,
            encode_seed: None,
            max_dim: 1 << 20,
            gradient_mode: GradientMode::Truncated,
            sigma_tilde_rule: SigmaTildeRule::Zero,
            objective_samples: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: String| Err(SolverError::Config(m));
        if !(self.eta1 > 0.0 && self.eta1.is_finite()) {
            return bad(format!("eta1={} must be > 0", self.eta1));
        }
        if !(self.eta2 > 0.0 && self.eta2.is_finite()) {
            return bad(format!("eta2={} must be > 0", self.eta2));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return bad(format!("beta={} must lie in [0, 1)", self.beta));
        }
        if self.repetitions == 0 {
            return bad("N must be >= 1".into());
        }
        if self.steps == Some(0) {
            return bad("steps must be >= 1".into());
        }
        if let XiRule::Constant(v) = self.xi_rule {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("xi={v} must be finite and >= 0"));
            }
        }
        if self.objective_samples > 0 && self.sigma_tilde_rule == SigmaTildeRule::Zero {
            return bad("objective estimates need sigma_tilde_rule = ddpm".into());
        }
        Ok(())
    }
}
