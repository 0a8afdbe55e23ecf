use super::{check_dim, Denoiser, LogDensity, NoiseLevel, PriorError};
use crate::linalg::{dot, norm_sq};
use crate::scalar::Real;

/// Diagonal Gaussian prior `N(m, diag(τ²))`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrior<T> {
    mean: Vec<T>,
    variance: Vec<T>,
}

impl<T: Real> GaussianPrior<T> {
    pub fn new(mean: Vec<T>, variance: Vec<T>) -> Result<Self, PriorError> {
        check_dim(mean.len(), variance.len())?;
        if mean.is_empty() {
            return Err(PriorError::Invalid("empty mean".into()));
        }
        if variance.iter().any(|&v| !(v > T::zero()) || !v.is_finite()) {
            return Err(PriorError::Invalid("variances must be positive and finite".into()));
        }
        Ok(Self { mean, variance })
    }

    pub fn isotropic(mean: Vec<T>, variance: T) -> Result<Self, PriorError> {
        let n = mean.len();
        Self::new(mean, vec![variance; n])
    }

    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    pub fn variance(&self) -> &[T] {
        &self.variance
    }

    /// Diagonal of `∂μ/∂x_t`, constant in `x_t`.
    pub fn jacobian_diag(&self, level: NoiseLevel<T>) -> Result<Vec<T>, PriorError> {
        let (a, b) = level.scales()?;
        Ok(self.variance.iter().map(|&v| a * v / (a * a * v + b * b)).collect())
    }
}

impl<T: Real> LogDensity<T> for GaussianPrior<T> {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn log_density(&self, x: &[T]) -> T {
        let two_pi = T::lit(2.0) * T::PI();
        self.mean
            .iter()
            .zip(&self.variance)
            .zip(x)
            .map(|((&m, &v), &xi)| -T::lit(0.5) * ((xi - m) * (xi - m) / v + (two_pi * v).ln()))
            .sum()
    }
}

/// Mixture of isotropic Gaussians.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmPrior<T> {
    weights: Vec<T>,
    means: Vec<Vec<T>>,
    variances: Vec<T>,
}

impl<T: Real> GmmPrior<T> {
    pub fn new(weights: Vec<T>, means: Vec<Vec<T>>, variances: Vec<T>) -> Result<Self, PriorError> {
        let k = weights.len();
        if k == 0 {
            return Err(PriorError::Invalid("mixture needs at least one component".into()));
        }
        check_dim(k, means.len())?;
        check_dim(k, variances.len())?;
        let d = means[0].len();
        if d == 0 || means.iter().any(|m| m.len() != d) {
            return Err(PriorError::Invalid("component means must share a positive dimension".into()));
        }
        if weights.iter().any(|&w| !(w > T::zero())) {
            return Err(PriorError::Invalid("weights must be positive".into()));
        }
        let total: f64 = weights.iter().map(|w| w.as_f64()).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(PriorError::Invalid(format!("weights sum to {total}, not 1")));
        }
        if variances.iter().any(|&v| !(v > T::zero()) || !v.is_finite()) {
            return Err(PriorError::Invalid("variances must be positive and finite".into()));
        }
        Ok(Self { weights, means, variances })
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<T>] {
        &self.means
    }

    pub fn variances(&self) -> &[T] {
        &self.variances
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    /// Responsibilities of each component for `x_t = a·x₀ + b·ε`.
    fn responsibilities(&self, x: &[T], a: T, b: T) -> Vec<T> {
        let d = T::from_usize_lossy(self.dim());
        let logs: Vec<T> = (0..self.components())
            .map(|k| {
                let var = a * a * self.variances[k] + b * b;
                let r2: T = x.iter().zip(&self.means[k]).map(|(&xi, &m)| (xi - a * m) * (xi - a * m)).sum();
                self.weights[k].ln() - T::lit(0.5) * d * var.ln() - r2 / (T::lit(2.0) * var)
            })
            .collect();
        softmax(&logs)
    }
}

fn softmax<T: Real>(logs: &[T]) -> Vec<T> {
    let mx = logs.iter().copied().fold(T::neg_infinity(), T::max);
    let ex: Vec<T> = logs.iter().map(|&l| (l - mx).exp()).collect();
    let z: T = ex.iter().copied().sum();
    ex.into_iter().map(|e| e / z).collect()
}

fn log_sum_exp<T: Real>(logs: &[T]) -> T {
    let mx = logs.iter().copied().fold(T::neg_infinity(), T::max);
    if !mx.is_finite() {
        return mx;
    }
    mx + logs.iter().map(|&l| (l - mx).exp()).sum::<T>().ln()
}

impl<T: Real> LogDensity<T> for GmmPrior<T> {
    fn dim(&self) -> usize {
        GmmPrior::dim(self)
    }

    fn log_density(&self, x: &[T]) -> T {
        let d = T::from_usize_lossy(self.dim());
        let two_pi = T::lit(2.0) * T::PI();
        let logs: Vec<T> = (0..self.components())
            .map(|k| {
                let v = self.variances[k];
                let r2: T = x.iter().zip(&self.means[k]).map(|(&xi, &m)| (xi - m) * (xi - m)).sum();
                self.weights[k].ln() - T::lit(0.5) * (d * (two_pi * v).ln() + r2 / v)
            })
            .collect();
        log_sum_exp(&logs)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AnalyticPrior<T> {
    Gaussian(GaussianPrior<T>),
    Gmm(GmmPrior<T>),
}

impl<T> From<GaussianPrior<T>> for AnalyticPrior<T> {
    fn from(p: GaussianPrior<T>) -> Self {
        AnalyticPrior::Gaussian(p)
    }
}

impl<T> From<GmmPrior<T>> for AnalyticPrior<T> {
    fn from(p: GmmPrior<T>) -> Self {
        AnalyticPrior::Gmm(p)
    }
}

impl<T: Real> LogDensity<T> for AnalyticPrior<T> {
    fn dim(&self) -> usize {
        match self {
            AnalyticPrior::Gaussian(p) => LogDensity::dim(p),
            AnalyticPrior::Gmm(p) => LogDensity::dim(p),
        }
    }

    fn log_density(&self, x: &[T]) -> T {
        match self {
            AnalyticPrior::Gaussian(p) => p.log_density(x),
            AnalyticPrior::Gmm(p) => p.log_density(x),
        }
    }
}

/// Exact posterior-mean denoiser of an analytic prior, valid for both VP and
/// VE noise levels.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticDenoiser<T> {
    prior: AnalyticPrior<T>,
}

impl<T: Real> AnalyticDenoiser<T> {
    pub fn new(prior: impl Into<AnalyticPrior<T>>) -> Self {
        Self { prior: prior.into() }
    }

    pub fn prior(&self) -> &AnalyticPrior<T> {
        &self.prior
    }
}

pub fn gaussian_denoiser<T: Real>(prior: GaussianPrior<T>) -> AnalyticDenoiser<T> {
    AnalyticDenoiser::new(prior)
}

pub fn gmm_denoiser<T: Real>(prior: GmmPrior<T>) -> AnalyticDenoiser<T> {
    AnalyticDenoiser::new(prior)
}

/// Same posterior mean, queried with [`NoiseLevel::Ve`] levels.
pub fn ve_denoiser<T: Real>(prior: impl Into<AnalyticPrior<T>>) -> AnalyticDenoiser<T> {
    AnalyticDenoiser::new(prior)
}

impl<T: Real> Denoiser<T> for AnalyticDenoiser<T> {
    fn dim(&self) -> Option<usize> {
        Some(LogDensity::dim(&self.prior))
    }

    fn mu(&self, x: &[T], level: NoiseLevel<T>) -> Result<Vec<T>, PriorError> {
        let (a, b) = level.scales()?;
        check_dim(LogDensity::dim(&self.prior), x.len())?;
        match &self.prior {
            AnalyticPrior::Gaussian(p) => Ok(x
                .iter()
                .zip(p.mean.iter().zip(&p.variance))
                .map(|(&xi, (&m, &v))| (a * v * xi + b * b * m) / (a * a * v + b * b))
                .collect()),
            AnalyticPrior::Gmm(p) => {
                let r = p.responsibilities(x, a, b);
                let mut out = vec![T::zero(); x.len()];
                for k in 0..p.components() {
                    let c = a * p.variances[k] / (a * a * p.variances[k] + b * b);
                    for ((o, &xi), &m) in out.iter_mut().zip(x).zip(&p.means[k]) {
                        *o = *o + r[k] * (m + c * (xi - a * m));
                    }
                }
                Ok(out)
            }
        }
    }

    fn vjp(&self, x: &[T], level: NoiseLevel<T>, v: &[T]) -> Result<Vec<T>, PriorError> {
        let (a, b) = level.scales()?;
        check_dim(LogDensity::dim(&self.prior), x.len())?;
        check_dim(x.len(), v.len())?;
        match &self.prior {
            AnalyticPrior::Gaussian(p) => {
                let j = p.jacobian_diag(level)?;
                Ok(j.iter().zip(v).map(|(&ji, &vi)| ji * vi).collect())
            }
            AnalyticPrior::Gmm(p) => {
                let r = p.responsibilities(x, a, b);
                let kk = p.components();
                let mut grads = Vec::with_capacity(kk);
                let mut projections = Vec::with_capacity(kk);
                let mut diag = T::zero();
                for k in 0..kk {
                    let var = a * a * p.variances[k] + b * b;
                    let c = a * p.variances[k] / var;
                    diag = diag + r[k] * c;
                    let e_k: Vec<T> = x.iter().zip(&p.means[k]).map(|(&xi, &m)| m + c * (xi - a * m)).collect();
                    projections.push(dot(&e_k, v));
                    grads.push(x.iter().zip(&p.means[k]).map(|(&xi, &m)| -(xi - a * m) / var).collect::<Vec<T>>());
                }
                let mut g_bar = vec![T::zero(); x.len()];
                for k in 0..kk {
                    for (gb, &g) in g_bar.iter_mut().zip(&grads[k]) {
                        *gb = *gb + r[k] * g;
                    }
                }
                let mut out: Vec<T> = v.iter().map(|&vi| diag * vi).collect();
                for k in 0..kk {
                    let coef = r[k] * projections[k];
                    for ((o, &g), &gb) in out.iter_mut().zip(&grads[k]).zip(&g_bar) {
                        *o = *o + coef * (g - gb);
                    }
                }
                debug_assert!(norm_sq(&out).is_finite());
                Ok(out)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn std_normal_1d() -> AnalyticDenoiser<f64> {
        gaussian_denoiser(GaussianPrior::new(vec![0.0], vec![1.0]).unwrap())
    }

    #[test]
    fn gaussian_examples() {
        let d = std_normal_1d();
        assert_eq!(d.mu(&[1.7], NoiseLevel::Vp(1.0)).unwrap(), vec![1.7]);
        let v = d.mu(&[1.0], NoiseLevel::Vp(0.5)).unwrap()[0];
        assert!((v - 0.5f64.sqrt()).abs() < 1e-15);
        let tiny = d.mu(&[3.0], NoiseLevel::Vp(1e-14)).unwrap()[0];
        assert!(tiny.abs() < 1e-6);
        assert!(d.mu(&[1.0], NoiseLevel::Vp(0.0)).is_err());
        assert!(d.mu(&[1.0], NoiseLevel::Vp(1.5)).is_err());
    }

    #[test]
    fn ve_examples() {
        let d = ve_denoiser(GaussianPrior::new(vec![0.0f64], vec![4.0]).unwrap());
        assert_eq!(d.mu(&[0.3], NoiseLevel::Ve(0.0)).unwrap(), vec![0.3]);
        assert!((d.mu(&[3.0], NoiseLevel::Ve(2.0)).unwrap()[0] - 1.5).abs() < 1e-15);
        assert!(d.mu(&[3.0], NoiseLevel::Ve(1e9)).unwrap()[0].abs() < 1e-12);
        assert!(d.mu(&[3.0], NoiseLevel::Ve(-1.0)).is_err());
    }

    #[test]
    fn single_component_mixture_matches_gaussian() {
        let g = gaussian_denoiser(GaussianPrior::isotropic(vec![0.4f64, -0.1], 0.7).unwrap());
        let m = gmm_denoiser(GmmPrior::new(vec![1.0], vec![vec![0.4, -0.1]], vec![0.7]).unwrap());
        let x = [1.3, -0.6];
        for lvl in [NoiseLevel::Vp(0.3), NoiseLevel::Ve(0.8)] {
            let (a, b) = (g.mu(&x, lvl).unwrap(), m.mu(&x, lvl).unwrap());
            assert!((a[0] - b[0]).abs() < 1e-14 && (a[1] - b[1]).abs() < 1e-14);
        }
    }

    #[test]
    fn coinciding_components_reduce_to_gaussian() {
        let g = gaussian_denoiser(GaussianPrior::isotropic(vec![1.0f64], 0.2).unwrap());
        let m = gmm_denoiser(GmmPrior::new(vec![0.3, 0.7], vec![vec![1.0], vec![1.0]], vec![0.2, 0.2]).unwrap());
        let a = g.mu(&[0.1], NoiseLevel::Vp(0.6)).unwrap()[0];
        let b = m.mu(&[0.1], NoiseLevel::Vp(0.6)).unwrap()[0];
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn symmetric_mixture_is_odd() {
        let m = gmm_denoiser(GmmPrior::new(vec![0.5f64, 0.5], vec![vec![-2.0], vec![2.0]], vec![0.1, 0.1]).unwrap());
        assert_eq!(m.mu(&[0.0], NoiseLevel::Vp(0.8)).unwrap()[0], 0.0);
    }

    #[test]
    fn mixture_survives_tiny_alpha_bar() {
        let m =
            gmm_denoiser(GmmPrior::new(vec![0.5f64, 0.5], vec![vec![-30.0], vec![30.0]], vec![1e-4, 1e-4]).unwrap());
        let v = m.mu(&[5.0], NoiseLevel::Vp(1e-12)).unwrap()[0];
        assert!(v.is_finite());
        let v = m.mu(&[5.0], NoiseLevel::Vp(0.999)).unwrap()[0];
        assert!((v - 30.0).abs() < 1e-6 || v.is_finite());
    }

    #[test]
    fn weights_must_normalize() {
        assert!(GmmPrior::new(vec![0.5, 0.6], vec![vec![0.0], vec![1.0]], vec![1.0, 1.0]).is_err());
        assert!(GmmPrior::new(vec![1.0], vec![vec![0.0]], vec![0.0]).is_err());
        assert!(GaussianPrior::new(vec![0.0], vec![-1.0]).is_err());
    }

    #[test]
    fn gaussian_shrinks_toward_mean() {
        let p = GaussianPrior::new(vec![0.2f64, -0.4], vec![0.3, 1.5]).unwrap();
        let d = gaussian_denoiser(p.clone());
        for ab in [0.05f64, 0.5, 0.95] {
            for x in [[2.0f64, -3.0], [-0.1, 0.0], [10.0, 4.0]] {
                let mu = d.mu(&x, NoiseLevel::Vp(ab)).unwrap();
                let lhs: f64 = mu.iter().zip(p.mean()).map(|(a, m)| (a - m).powi(2)).sum();
                let rhs: f64 = x.iter().zip(p.mean()).map(|(a, m)| (a / ab.sqrt() - m).powi(2)).sum();
                assert!(lhs <= rhs + 1e-12);
            }
        }
    }

    fn fd_vjp(d: &AnalyticDenoiser<f64>, x: &[f64], lvl: NoiseLevel<f64>, v: &[f64]) -> Vec<f64> {
        let h = 1e-6;
        (0..x.len())
            .map(|j| {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[j] += h;
                xm[j] -= h;
                let (fp, fm) = (d.mu(&xp, lvl).unwrap(), d.mu(&xm, lvl).unwrap());
                fp.iter().zip(&fm).zip(v).map(|((a, b), vi)| (a - b) / (2.0 * h) * vi).sum()
            })
            .collect()
    }

    #[test]
    fn vjp_matches_finite_differences() {
        let m = gmm_denoiser(
            GmmPrior::new(vec![0.3, 0.7], vec![vec![1.0, -0.5], vec![-1.0, 0.8]], vec![0.2, 0.5]).unwrap(),
        );
        let g = gaussian_denoiser(GaussianPrior::new(vec![0.1, 0.2], vec![0.5, 2.0]).unwrap());
        let x = [0.3, -0.2];
        let v = [0.7, -1.1];
        for d in [&m, &g] {
            for lvl in [NoiseLevel::Vp(0.4), NoiseLevel::Ve(0.6)] {
                let a = d.vjp(&x, lvl, &v).unwrap();
                let b = fd_vjp(d, &x, lvl, &v);
                for (p, q) in a.iter().zip(&b) {
                    assert!((p - q).abs() < 1e-7, "{a:?} vs {b:?}");
                }
            }
        }
    }

    #[test]
    fn gmm_log_density_normalizes() {
        let p = GmmPrior::new(vec![0.4, 0.6], vec![vec![-1.0], vec![2.0]], vec![0.3, 0.5]).unwrap();
        let n = 20000;
        let (lo, hi) = (-8.0, 10.0);
        let h = (hi - lo) / n as f64;
        let mass: f64 = (0..=n).map(|i| p.log_density(&[lo + i as f64 * h]).exp() * h).sum();
        assert!((mass - 1.0).abs() < 1e-6);
    }

    #[test]
    fn repeated_calls_are_identical() {
        let m = gmm_denoiser(GmmPrior::new(vec![0.5, 0.5], vec![vec![-1.0], vec![1.0]], vec![0.1, 0.1]).unwrap());
        let first = m.mu(&[0.37], NoiseLevel::Vp(0.42)).unwrap();
        for _ in 0..100 {
            assert_eq!(m.mu(&[0.37], NoiseLevel::Vp(0.42)).unwrap(), first);
        }
    }
}
