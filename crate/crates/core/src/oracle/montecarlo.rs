//! Monte-Carlo checks of the reference chain around an equivalent step.
//!
//! * `t ≤ t_a`: the DDIM transitions are run from `x_{t_a}` down to `t` and the
//!   empirical law of `x_t` is compared against `γ_t`, `ζ_t`.
//! * `t = ⌊t_a⌋+1`: the forward chain from `x_{t_a}` is compared against
//!   `N(√(ᾱ_t/ᾱ_{t_a})·x_{t_a}, 1−ᾱ_t/ᾱ_{t_a})`.
//! * `t ≥ ⌊t_a⌋+2`: the forward pair `(x_{t−1}, x_t)` is simulated, and the
//!   backward kernel with variance `σ̂_t²` must reproduce both the marginal of
//!   `x_{t−1}` and the conditional variance of the forward pair.

use rand::Rng;
use serde::Serialize;

use crate::rng::{normal, stream_rng, Stream};
use crate::schedules::{DdimCoefficients, VpSchedule};

use super::{check_len, OracleError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionCase {
    Denoising,
    FirstAuxiliary,
    Auxiliary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McStat {
    pub label: String,
    pub coordinate: usize,
    pub empirical_mean: f64,
    pub analytic_mean: f64,
    pub empirical_std: f64,
    pub analytic_std: f64,
    pub z_mean: f64,
    pub z_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McReport {
    pub t: usize,
    pub t_a: f64,
    pub case: TransitionCase,
    pub samples: usize,
    pub stats: Vec<McStat>,
}

impl McReport {
    pub fn max_abs_z(&self) -> f64 {
        self.stats.iter().map(|s| s.z_mean.abs().max(s.z_std.abs())).fold(0.0, f64::max)
    }

    pub fn passed(&self, gate: f64) -> bool {
        self.max_abs_z() <= gate
    }
}

#[derive(Default)]
struct Welford {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    fn std(&self) -> f64 {
        (self.m2 / self.n).max(0.0).sqrt()
    }
}

fn stat(label: &str, coordinate: usize, w: &Welford, analytic_mean: f64, analytic_std: f64) -> McStat {
    let n = w.n;
    let (z_mean, z_std) = if analytic_std > 0.0 {
        (
            (w.mean - analytic_mean) / (analytic_std / n.sqrt()),
            (w.std() - analytic_std) / (analytic_std / (2.0 * n).sqrt()),
        )
    } else {
        let close = (w.mean - analytic_mean).abs() <= 1e-12 * (1.0 + analytic_mean.abs());
        (if close { 0.0 } else { f64::INFINITY }, if w.std() == 0.0 { 0.0 } else { f64::INFINITY })
    };
    McStat {
        label: label.into(),
        coordinate,
        empirical_mean: w.mean,
        analytic_mean,
        empirical_std: w.std(),
        analytic_std,
        z_mean,
        z_std,
    }
}

fn forward<R: Rng>(x: f64, upper: f64, lower: f64, rng: &mut R) -> f64 {
    let r = lower / upper;
    r.sqrt() * x + (1.0 - r).max(0.0).sqrt() * normal::<f64, _>(rng)
}

/// Simulates the chain construction at step `t` with `n` samples per
/// coordinate and compares it with the coefficient table.
pub fn mc_transition_check(
    schedule: &VpSchedule<f64>,
    coeffs: &DdimCoefficients<f64>,
    x0: &[f64],
    x_ta: &[f64],
    t: usize,
    n: usize,
    seed: u64,
) -> Result<McReport, OracleError> {
    check_len("x_ta", x0.len(), x_ta.len())?;
    if t == 0 || t > schedule.steps() {
        return Err(OracleError::Length(format!("t={t} outside [1, {}]", schedule.steps())));
    }
    if n < 2 {
        return Err(OracleError::Length("need at least 2 samples".into()));
    }
    let step = *coeffs.step();
    let a = step.alpha_bar_ta;
    let ab = |k: usize| schedule.alpha_bar(k);
    let t0 = step.t0;
    let mut rng = stream_rng(seed, Stream::Sample);
    let mut stats = Vec::new();

    let case = if !step.above(t) {
        TransitionCase::Denoising
    } else if t == t0 + 1 {
        TransitionCase::FirstAuxiliary
    } else {
        TransitionCase::Auxiliary
    };

    for (i, (&x0i, &xai)) in x0.iter().zip(x_ta).enumerate() {
        match case {
            TransitionCase::Denoising => {
                let mut w = Welford::default();
                for _ in 0..n {
                    let mut x = xai;
                    let (mut level, mut k) = (a, t0);
                    if !step.is_integer() {
                        let st = coeffs.sigma_tilde_top();
                        let c = (1.0 - ab(t0) - st * st).max(0.0).sqrt();
                        x = ab(t0).sqrt() * x0i
                            + c * (x - a.sqrt() * x0i) / (1.0 - a).sqrt()
                            + st * normal::<f64, _>(&mut rng);
                        level = ab(t0);
                    }
                    while k > t {
                        let st = coeffs.sigma_tilde(k).unwrap_or(0.0);
                        let c = (1.0 - ab(k - 1) - st * st).max(0.0).sqrt();
                        x = ab(k - 1).sqrt() * x0i
                            + c * (x - level.sqrt() * x0i) / (1.0 - level).sqrt()
                            + st * normal::<f64, _>(&mut rng);
                        level = ab(k - 1);
                        k -= 1;
                    }
                    w.push(x);
                }
                let g = coeffs.gamma(t).unwrap_or(0.0);
                let z = coeffs.zeta(t).unwrap_or(0.0);
                let mean = ab(t).sqrt() * x0i + g * (xai - a.sqrt() * x0i) / (1.0 - a).sqrt();
                stats.push(stat("x_t", i, &w, mean, z));
            }
            TransitionCase::FirstAuxiliary => {
                let mut w = Welford::default();
                for _ in 0..n {
                    w.push(forward(xai, a, ab(t), &mut rng));
                }
                let r = ab(t) / a;
                stats.push(stat("x_t", i, &w, r.sqrt() * xai, (1.0 - r).sqrt()));
            }
            TransitionCase::Auxiliary => {
                let sh = coeffs.sigma_hat(t).unwrap_or(0.0);
                let (rp, rt) = (ab(t - 1) / a, ab(t) / a);
                let c = (1.0 - rp - sh * sh).max(0.0).sqrt() / (1.0 - rt).sqrt();
                let (mut back, mut prev) = (Welford::default(), Welford::default());
                let (mut sx, mut sy, mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for _ in 0..n {
                    let mut x = forward(xai, a, ab(t0 + 1), &mut rng);
                    for k in (t0 + 2)..t {
                        x = forward(x, ab(k - 1), ab(k), &mut rng);
                    }
                    let xt = forward(x, ab(t - 1), ab(t), &mut rng);
                    let kernel = rp.sqrt() * xai + c * (xt - rt.sqrt() * xai) + sh * normal::<f64, _>(&mut rng);
                    back.push(kernel);
                    prev.push(x);
                    (sx, sy, sxx, sxy, syy) = (sx + xt, sy + x, sxx + xt * xt, sxy + xt * x, syy + x * x);
                }
                let nf = n as f64;
                let mean = rp.sqrt() * xai;
                let std = (1.0 - rp).sqrt();
                stats.push(stat("kernel_marginal", i, &back, mean, std));
                stats.push(stat("forward_marginal", i, &prev, mean, std));
                // residual variance of x_{t-1} after regressing on x_t
                let vx = sxx / nf - (sx / nf).powi(2);
                let vy = syy / nf - (sy / nf).powi(2);
                let cxy = sxy / nf - sx * sy / (nf * nf);
                let resid = (vy - cxy * cxy / vx).max(0.0).sqrt();
                let z_std = if sh > 0.0 { (resid - sh) / (sh / (2.0 * nf).sqrt()) } else { resid / 1e-12 };
                stats.push(McStat {
                    label: "conditional_std".into(),
                    coordinate: i,
                    empirical_mean: 0.0,
                    analytic_mean: 0.0,
                    empirical_std: resid,
                    analytic_std: sh,
                    z_mean: 0.0,
                    z_std,
                });
            }
        }
    }
    Ok(McReport { t, t_a: step.t_a, case, samples: n, stats })
}
