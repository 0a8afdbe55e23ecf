//! VP and VE noise schedules, the equivalent-step inversion and the DDPM
//! variance.

mod coefficients;

pub use coefficients::{ddim_coefficients, DdimCoefficients, SigmaTildeRule, Weight};

use log::warn;
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("invalid schedule parameters: {0}")]
    InvalidRange(String),
    #[error("noise level sigma={sigma} exceeds the schedule (max representable sigma={sigma_max})")]
    OutOfSchedule { sigma: f64, sigma_max: f64 },
    #[error("step index {t} outside [1, {max}]")]
    Index { t: usize, max: usize },
}

/// Endpoint thresholds checked (with warnings only) on construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EndpointBounds {
    pub min_alpha_bar_0: f64,
    pub max_alpha_bar_t: f64,
}

impl Default for EndpointBounds {
    fn default() -> Self {
        Self { min_alpha_bar_0: 1.0 - 1e-3, max_alpha_bar_t: 1e-3 }
    }
}

/// Variance-preserving schedule `ᾱ_0 … ᾱ_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct VpSchedule<T> {
    alpha_bar: Vec<T>,
}

impl<T: Real> VpSchedule<T> {
    /// Validates strict monotonicity and the `(0, 1]` range; endpoint
    /// thresholds only produce warnings.
    pub fn new(alpha_bar: Vec<T>) -> Result<Self, ScheduleError> {
        Self::with_bounds(alpha_bar, EndpointBounds::default())
    }

    pub fn with_bounds(alpha_bar: Vec<T>, bounds: EndpointBounds) -> Result<Self, ScheduleError> {
        if alpha_bar.len() < 2 {
            return Err(ScheduleError::InvalidRange("need at least alpha_bar_0 and alpha_bar_1".into()));
        }
        for (t, &a) in alpha_bar.iter().enumerate() {
            if !(a > T::zero() && a <= T::one()) {
                return Err(ScheduleError::InvalidRange(format!("alpha_bar[{t}]={a} not in (0,1]")));
            }
        }
        if let Some(t) = alpha_bar.windows(2).position(|p| p[1] >= p[0]) {
            return Err(ScheduleError::InvalidRange(format!("alpha_bar not strictly decreasing at t={}", t + 1)));
        }
        let s = Self { alpha_bar };
        for msg in s.endpoint_warnings(bounds) {
            warn!("{msg}");
        }
        Ok(s)
    }

    pub fn endpoint_warnings(&self, bounds: EndpointBounds) -> Vec<String> {
        let mut out = Vec::new();
        let a0 = self.alpha_bar[0].as_f64();
        let at = self.alpha_bar[self.steps()].as_f64();
        if a0 < bounds.min_alpha_bar_0 {
            out.push(format!("alpha_bar_0={a0} below {}", bounds.min_alpha_bar_0));
        }
        if at > bounds.max_alpha_bar_t {
            out.push(format!("alpha_bar_T={at} above {}", bounds.max_alpha_bar_t));
        }
        out
    }

    pub fn steps(&self) -> usize {
        self.alpha_bar.len() - 1
    }

    #[inline]
    pub fn alpha_bar(&self, t: usize) -> T {
        self.alpha_bar[t]
    }

    pub fn alpha_bars(&self) -> &[T] {
        &self.alpha_bar
    }

    /// `α_t = ᾱ_t / ᾱ_{t−1}` for `t ≥ 1`.
    pub fn alpha(&self, t: usize) -> T {
        self.alpha_bar[t] / self.alpha_bar[t - 1]
    }

    /// Largest observation noise whose equivalent step still fits.
    pub fn sigma_max(&self) -> T {
        (T::one() / self.alpha_bar[self.steps()] - T::one()).sqrt()
    }

    pub fn to_f64(&self) -> VpSchedule<f64> {
        VpSchedule { alpha_bar: self.alpha_bar.iter().map(|a| a.as_f64()).collect() }
    }
}

/// Linear-β schedule: `β_0 = beta_min`, `β_1..β_T` evenly spaced in
/// `[beta_min, beta_max]`, `ᾱ_t = Π_{k≤t}(1−β_k)`.
pub fn build_linear_vp<T: Real>(steps: usize, beta_min: T, beta_max: T) -> Result<VpSchedule<T>, ScheduleError> {
    if steps < 1 {
        return Err(ScheduleError::InvalidRange("T must be at least 1".into()));
    }
    if !(beta_min > T::zero() && beta_min <= beta_max && beta_max < T::one()) {
        return Err(ScheduleError::InvalidRange(format!(
            "need 0 < beta_min <= beta_max < 1, got [{beta_min}, {beta_max}]"
        )));
    }
    let mut alpha_bar = Vec::with_capacity(steps + 1);
    let mut acc = T::one() - beta_min;
    alpha_bar.push(acc);
    for t in 1..=steps {
        let beta = if steps == 1 {
            beta_max
        } else {
            beta_min + (beta_max - beta_min) * T::from_usize_lossy(t - 1) / T::from_usize_lossy(steps - 1)
        };
        acc = acc * (T::one() - beta);
        alpha_bar.push(acc);
    }
    VpSchedule::new(alpha_bar)
}

/// Variance-exploding schedule `σ̄_1 … σ̄_T` with final decoder std `δ_0`.
#[derive(Debug, Clone, PartialEq)]
pub struct VeSchedule<T> {
    sigma_bar: Vec<T>,
    delta0: T,
}

impl<T: Real> VeSchedule<T> {
    pub fn new(sigma_bar: Vec<T>, delta0: T) -> Result<Self, ScheduleError> {
        if sigma_bar.is_empty() {
            return Err(ScheduleError::InvalidRange("empty sigma_bar".into()));
        }
        if !(delta0 > T::zero()) {
            return Err(ScheduleError::InvalidRange(format!("delta0={delta0} must be positive")));
        }
        if sigma_bar[0] <= T::zero() || !sigma_bar.iter().all(|s| s.is_finite()) {
            return Err(ScheduleError::InvalidRange("sigma_bar must be positive and finite".into()));
        }
        if let Some(t) = sigma_bar.windows(2).position(|p| p[1] <= p[0]) {
            return Err(ScheduleError::InvalidRange(format!("sigma_bar not strictly increasing at t={}", t + 2)));
        }
        Ok(Self { sigma_bar, delta0 })
    }

    pub fn steps(&self) -> usize {
        self.sigma_bar.len()
    }

    /// `σ̄_t`, with `σ̄_0 = 0`.
    #[inline]
    pub fn sigma_bar(&self, t: usize) -> T {
        if t == 0 {
            T::zero()
        } else {
            self.sigma_bar[t - 1]
        }
    }

    pub fn sigma_bars(&self) -> &[T] {
        &self.sigma_bar
    }

    pub fn delta0(&self) -> T {
        self.delta0
    }

    /// ELBO weight `s(t)`.
    pub fn elbo_weight(&self, t: usize) -> Result<T, ScheduleError> {
        if t == 0 || t > self.steps() {
            return Err(ScheduleError::Index { t, max: self.steps() });
        }
        if t == 1 {
            return Ok(T::one() / (T::lit(2.0) * self.delta0 * self.delta0));
        }
        let (a, b) = (self.sigma_bar(t - 1), self.sigma_bar(t));
        Ok((b * b - a * a) / (T::lit(2.0) * a * a * b * b))
    }
}

/// Geometric `σ̄` ladder from `sigma_min` to `sigma_max`.
pub fn build_geometric_ve<T: Real>(
    steps: usize,
    sigma_min: T,
    sigma_max: T,
    delta0: T,
) -> Result<VeSchedule<T>, ScheduleError> {
    if steps < 1 || !(sigma_min > T::zero() && sigma_min < sigma_max) {
        return Err(ScheduleError::InvalidRange(format!(
            "need T >= 1 and 0 < sigma_min < sigma_max, got T={steps}, [{sigma_min}, {sigma_max}]"
        )));
    }
    let sigma_bar = if steps == 1 {
        vec![sigma_max]
    } else {
        let ratio = (sigma_max / sigma_min).ln();
        (0..steps)
            .map(|k| sigma_min * (ratio * T::from_usize_lossy(k) / T::from_usize_lossy(steps - 1)).exp())
            .collect()
    };
    VeSchedule::new(sigma_bar, delta0)
}

/// Step at which the diffusion marginal noise matches an observation noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquivalentStep<T> {
    pub t_a: T,
    pub alpha_bar_ta: T,
    /// `⌊t_a⌋`
    pub t0: usize,
}

impl<T: Real> EquivalentStep<T> {
    pub fn is_integer(&self) -> bool {
        self.t_a == T::from_usize_lossy(self.t0)
    }

    /// Noise-free step: `t_a = 0`, `ᾱ_{t_a} = 1`.
    pub fn noise_free() -> Self {
        Self { t_a: T::zero(), alpha_bar_ta: T::one(), t0: 0 }
    }

    /// Whether step `t` lies on the auxiliary (`t > t_a`) side.
    pub fn above(&self, t: usize) -> bool {
        T::from_usize_lossy(t) > self.t_a
    }
}

/// Inverts `ᾱ_{t_a} = 1/(1+σ²)` with linear interpolation in `ᾱ`.
///
/// Noise levels cleaner than `ᾱ_0` clamp to `t_a = 0` while keeping the exact
/// `ᾱ_{t_a}`.
pub fn equivalent_step<T: Real>(s: &VpSchedule<T>, sigma: T) -> Result<EquivalentStep<T>, ScheduleError> {
    if !(sigma >= T::zero()) || !sigma.is_finite() {
        return Err(ScheduleError::InvalidRange(format!("sigma={sigma} must be finite and >= 0")));
    }
    let target = T::one() / (T::one() + sigma * sigma);
    let ab = s.alpha_bars();
    let last = s.steps();
    if target < ab[last] {
        return Err(ScheduleError::OutOfSchedule { sigma: sigma.as_f64(), sigma_max: s.sigma_max().as_f64() });
    }
    if target >= ab[0] {
        return Ok(EquivalentStep { t_a: T::zero(), alpha_bar_ta: target, t0: 0 });
    }
    // Largest k with ab[k] >= target; ab is strictly decreasing.
    let (mut lo, mut hi) = (0usize, last);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if ab[mid] >= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let k = lo;
    if ab[k] == target {
        return Ok(EquivalentStep { t_a: T::from_usize_lossy(k), alpha_bar_ta: target, t0: k });
    }
    let frac = (ab[k] - target) / (ab[k] - ab[k + 1]);
    if frac >= T::one() {
        return Ok(EquivalentStep { t_a: T::from_usize_lossy(k + 1), alpha_bar_ta: target, t0: k + 1 });
    }
    Ok(EquivalentStep { t_a: T::from_usize_lossy(k) + frac, alpha_bar_ta: target, t0: k })
}

/// DDPM variance between a cleaner level `upper` and a noisier level `lower`.
pub fn ddpm_variance_between<T: Real>(upper: T, lower: T) -> T {
    let denom = T::one() - lower;
    if denom <= T::zero() {
        return T::zero();
    }
    let v = (T::one() - upper) / denom * (T::one() - lower / upper);
    v.max(T::zero()).sqrt()
}

/// `σ_t = √((1−ᾱ_{t−1})/(1−ᾱ_t)) · √(1−ᾱ_t/ᾱ_{t−1})`
pub fn ddpm_variance<T: Real>(s: &VpSchedule<T>, t: usize) -> Result<T, ScheduleError> {
    if t == 0 || t > s.steps() {
        return Err(ScheduleError::Index { t, max: s.steps() });
    }
    Ok(ddpm_variance_between(s.alpha_bar(t - 1), s.alpha_bar(t)))
}

/// Decreasing time steps from `total` to 1, uniformly subsampled to `count`
/// when requested (rounded linspace, duplicates dropped).
pub fn time_steps(total: usize, count: Option<usize>) -> Vec<usize> {
    match count {
        Some(n) if n < total => {
            let n = n.max(1);
            if n == 1 {
                return vec![total];
            }
            let mut out: Vec<usize> = (0..n)
                .map(|i| {
                    let v = total as f64 - (total as f64 - 1.0) * i as f64 / (n as f64 - 1.0);
                    v.round() as usize
                })
                .collect();
            out.dedup();
            out
        }
        _ => (1..=total).rev().collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sched() -> VpSchedule<f64> {
        build_linear_vp(100, 1e-3, 0.2).unwrap()
    }

    #[test]
    fn linear_vp_standard_endpoints() {
        let s = build_linear_vp::<f64>(1000, 1e-4, 0.02).unwrap();
        assert_eq!(s.steps(), 1000);
        assert!(s.alpha_bar(1000) < 1e-3);
        assert!((s.alpha_bar(0) - (1.0 - 1e-4)).abs() < 1e-15);
    }

    #[test]
    fn linear_vp_single_step() {
        let s = build_linear_vp::<f64>(1, 0.5, 0.5).unwrap();
        assert_eq!(s.alpha_bar(1), s.alpha_bar(0) * 0.5);
    }

    #[test]
    fn linear_vp_rejects_bad_bounds() {
        assert!(matches!(build_linear_vp::<f64>(10, 1e-4, 1.5), Err(ScheduleError::InvalidRange(_))));
        assert!(matches!(build_linear_vp::<f64>(0, 1e-4, 0.02), Err(ScheduleError::InvalidRange(_))));
        assert!(build_linear_vp::<f64>(10, 0.1, 0.05).is_err());
    }

    #[test]
    fn schedule_rejects_non_decreasing() {
        assert!(VpSchedule::new(vec![0.9, 0.9, 0.1]).is_err());
        assert!(VpSchedule::new(vec![1.2, 0.5]).is_err());
    }

    #[test]
    fn endpoint_thresholds_only_warn() {
        let s = VpSchedule::new(vec![0.9, 0.5]).unwrap();
        assert_eq!(s.endpoint_warnings(EndpointBounds::default()).len(), 2);
    }

    #[test]
    fn equivalent_step_examples() {
        let s = sched();
        let e0 = equivalent_step(&s, 0.0).unwrap();
        assert_eq!((e0.t_a, e0.alpha_bar_ta, e0.t0), (0.0, 1.0, 0));
        let e1 = equivalent_step(&s, 1.0).unwrap();
        assert_eq!(e1.alpha_bar_ta, 0.5);
        assert!(s.alpha_bar(e1.t0) >= 0.5 && s.alpha_bar(e1.t0 + 1) <= 0.5);
        let e = equivalent_step(&s, 0.1).unwrap();
        assert!((e.alpha_bar_ta * 1.01 - 1.0).abs() < 1e-12);
        assert!(!e.is_integer());
        assert!(e.t_a > e.t0 as f64 && e.t_a < e.t0 as f64 + 1.0);
    }

    #[test]
    fn equivalent_step_hits_integer_levels_exactly() {
        let s = sched();
        let a = s.alpha_bar(17);
        let sigma = (1.0 / a - 1.0).sqrt();
        let e = equivalent_step(&s, sigma).unwrap();
        assert!((e.t_a - 17.0).abs() < 1e-6);
    }

    #[test]
    fn equivalent_step_reports_range() {
        let s = sched();
        let err = equivalent_step(&s, 1e4).unwrap_err();
        match err {
            ScheduleError::OutOfSchedule { sigma_max, .. } => {
                assert!((sigma_max - s.sigma_max()).abs() < 1e-9)
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ddpm_variance_examples() {
        let s = VpSchedule::new(vec![0.9, 0.8]).unwrap();
        let v = ddpm_variance(&s, 1).unwrap();
        // √(0.1/0.2)·√(1−8/9)
        assert!((v - (0.5f64).sqrt() * (1.0f64 / 9.0).sqrt()).abs() < 1e-15);
        assert!((v - 0.2357).abs() < 1e-4);
        assert!(matches!(ddpm_variance(&s, 0), Err(ScheduleError::Index { .. })));
        assert_eq!(ddpm_variance_between(0.7, 0.7), 0.0);
    }

    #[test]
    fn ddpm_variance_bounded_by_previous_level() {
        let s = sched();
        for t in 1..=s.steps() {
            let v = ddpm_variance(&s, t).unwrap();
            assert!(v >= 0.0 && v <= (1.0 - s.alpha_bar(t - 1)).sqrt() + 1e-15);
        }
    }

    #[test]
    fn ve_weights() {
        let ve = VeSchedule::<f64>::new(vec![0.1, 0.2, 0.4], 0.05).unwrap();
        assert_eq!(ve.sigma_bar(0), 0.0);
        assert!((ve.elbo_weight(1).unwrap() - 200.0).abs() < 1e-9);
        let want = (0.04 - 0.01) / (2.0 * 0.01 * 0.04);
        assert!((ve.elbo_weight(2).unwrap() - want).abs() < 1e-9);
        assert!(VeSchedule::new(vec![0.2, 0.1], 0.01).is_err());
        assert!(VeSchedule::new(vec![0.1], 0.0).is_err());
    }

    #[test]
    fn geometric_ve_is_increasing() {
        let ve = build_geometric_ve(50, 0.01f64, 50.0, 0.005).unwrap();
        assert!((ve.sigma_bar(1) - 0.01).abs() < 1e-15);
        assert!((ve.sigma_bar(50) - 50.0).abs() < 1e-9);
    }

    #[test]
    fn time_step_subsampling() {
        assert_eq!(time_steps(5, None), vec![5, 4, 3, 2, 1]);
        assert_eq!(time_steps(100, Some(5)), vec![100, 75, 51, 26, 1]);
        assert_eq!(time_steps(3, Some(10)), vec![3, 2, 1]);
        assert_eq!(time_steps(10, Some(1)), vec![10]);
    }

    #[test]
    fn f32_schedule_builds() {
        let s = build_linear_vp::<f32>(100, 1e-3, 0.2).unwrap();
        let e = equivalent_step(&s, 0.5f32).unwrap();
        assert!((e.alpha_bar_ta * 1.25 - 1.0).abs() < 1e-6);
    }
}
