//! Ground truth for tests and the verification suite: conjugate posteriors,
//! brute-force MAP search, finite differences, Monte-Carlo checks of the
//! reference chain and quality metrics. Nothing here calls the solvers.

mod gradients;
mod metrics;
mod montecarlo;

pub use gradients::{affine_full_gradient_x0, affine_full_gradient_xta, objective_x0, objective_xta, AffineTerm};
pub use metrics::{psnr, si_sdr, si_sdr_improvement, PSNR_CAP, SI_SDR_EPS};
pub use montecarlo::{mc_transition_check, McReport, McStat, TransitionCase};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{cholesky, cholesky_solve, LinalgError, Matrix};
use crate::observations::LinearOperator;
use crate::priors::{GaussianPrior, GmmPrior, LogDensity};
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("length mismatch: {0}")]
    Length(String),
    #[error("singular system: {0}")]
    Singular(String),
    #[error("grid has {points} points, above the cap of {cap}")]
    GridTooLarge { points: u128, cap: u128 },
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("non-finite value at {0}")]
    NonFinite(String),
    #[error(transparent)]
    Prior(#[from] crate::priors::PriorError),
}

fn check_len(what: &str, expected: usize, got: usize) -> Result<(), OracleError> {
    if expected != got {
        return Err(OracleError::Length(format!("{what}: expected {expected}, got {got}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPosterior<T> {
    pub mean: Vec<T>,
    pub covariance: Matrix<T>,
}

/// Exact posterior of `x` given `y = A x + σ n` under a diagonal Gaussian
/// prior. For `σ = 0` this is the conditional given `A x = y`, which needs
/// `A` to have full row rank.
pub fn analytic_gaussian_posterior<T: Real>(
    prior: &GaussianPrior<T>,
    a: &dyn LinearOperator<T>,
    y: &[T],
    sigma: T,
) -> Result<GaussianPosterior<T>, OracleError> {
    let n = prior.mean().len();
    check_len("operator input", n, a.input_dim())?;
    check_len("y", a.output_dim(), y.len())?;
    let am = a.to_dense();
    let (m, v) = (prior.mean(), prior.variance());
    let singular = |e: LinalgError| OracleError::Singular(e.to_string());

    if sigma > T::zero() {
        let s2 = sigma * sigma;
        let mut p = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let ata: T = (0..am.rows()).map(|k| am.get(k, i) * am.get(k, j)).sum();
                p.set(i, j, ata / s2 + if i == j { T::one() / v[i] } else { T::zero() });
            }
        }
        let l = cholesky(&p).map_err(singular)?;
        let aty = am.matvec_t(y);
        let rhs: Vec<T> = (0..n).map(|i| m[i] / v[i] + aty[i] / s2).collect();
        let mean = cholesky_solve(&l, &rhs);
        let mut cov = Matrix::zeros(n, n);
        for j in 0..n {
            let mut e = vec![T::zero(); n];
            e[j] = T::one();
            for (i, c) in cholesky_solve(&l, &e).into_iter().enumerate() {
                cov.set(i, j, c);
            }
        }
        return Ok(GaussianPosterior { mean, covariance: cov });
    }

    // Σ Aᵀ (A Σ Aᵀ)⁻¹
    let r = am.rows();
    let mut g = Matrix::zeros(r, r);
    for i in 0..r {
        for j in 0..r {
            g.set(i, j, (0..n).map(|k| am.get(i, k) * v[k] * am.get(j, k)).sum());
        }
    }
    let l = cholesky(&g).map_err(singular)?;
    let resid: Vec<T> = am.matvec(m).iter().zip(y).map(|(&p, &q)| q - p).collect();
    let w = cholesky_solve(&l, &resid);
    let aw = am.matvec_t(&w);
    let mean: Vec<T> = (0..n).map(|i| m[i] + v[i] * aw[i]).collect();
    let mut cov = Matrix::zeros(n, n);
    for j in 0..n {
        let col: Vec<T> = (0..r).map(|k| am.get(k, j) * v[j]).collect();
        let z = am.matvec_t(&cholesky_solve(&l, &col));
        for i in 0..n {
            let d = if i == j { v[i] } else { T::zero() };
            cov.set(i, j, d - v[i] * z[i]);
        }
    }
    Ok(GaussianPosterior { mean, covariance: cov })
}

/// Axis-aligned grid of at most two dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchSpec {
    pub bounds: Vec<[f64; 2]>,
    pub resolution: f64,
    /// Feasibility slack for noise-free constraints; defaults to half a step.
    #[serde(default)]
    pub tolerance: Option<f64>,
}

pub const GRID_CAP: u128 = 10_000_000;

impl GridSearchSpec {
    pub fn new(bounds: Vec<[f64; 2]>, resolution: f64) -> Self {
        Self { bounds, resolution, tolerance: None }
    }

    fn axes(&self) -> Result<Vec<usize>, OracleError> {
        if self.bounds.is_empty() || self.bounds.len() > 2 {
            return Err(OracleError::Grid(format!("dimension {} is not 1 or 2", self.bounds.len())));
        }
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return Err(OracleError::Grid(format!("resolution {} must be positive", self.resolution)));
        }
        let counts: Vec<usize> = self
            .bounds
            .iter()
            .map(|&[lo, hi]| {
                if !(hi >= lo) {
                    return Err(OracleError::Grid(format!("empty interval [{lo}, {hi}]")));
                }
                Ok(((hi - lo) / self.resolution + 1e-9).floor() as usize + 1)
            })
            .collect::<Result<_, _>>()?;
        let points = counts.iter().map(|&c| c as u128).product::<u128>();
        if points > GRID_CAP {
            return Err(OracleError::GridTooLarge { points, cap: GRID_CAP });
        }
        Ok(counts)
    }

    fn node(&self, axis: usize, k: usize) -> f64 {
        self.bounds[axis][0] + k as f64 * self.resolution
    }
}

/// Grid point maximising `log p(x) − ‖f(x) − y‖²/(2σ²)`. With `σ = 0` only
/// points where every `|f(x)_j − y_j|` is within the tolerance are considered.
/// Ties go to the lexicographically first point.
pub fn grid_map(
    prior: &GmmPrior<f64>,
    forward: &dyn Fn(&[f64]) -> Vec<f64>,
    y: &[f64],
    sigma: f64,
    spec: &GridSearchSpec,
) -> Result<Vec<f64>, OracleError> {
    let counts = spec.axes()?;
    check_len("prior dimension", counts.len(), prior.dim())?;
    let tol = spec.tolerance.unwrap_or(spec.resolution / 2.0);
    let inner = counts.get(1).copied().unwrap_or(1);
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut x = vec![0.0; counts.len()];
    for i in 0..counts[0] {
        x[0] = spec.node(0, i);
        for j in 0..inner {
            if counts.len() == 2 {
                x[1] = spec.node(1, j);
            }
            let fx = forward(&x);
            check_len("forward output", y.len(), fx.len())?;
            let score = if sigma > 0.0 {
                let r2: f64 = fx.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                prior.log_density(&x) - r2 / (2.0 * sigma * sigma)
            } else if fx.iter().zip(y).all(|(a, b)| (a - b).abs() <= tol) {
                prior.log_density(&x)
            } else {
                continue;
            };
            if best.as_ref().is_none_or(|(b, _)| score > *b) {
                best = Some((score, x.clone()));
            }
        }
    }
    best.map(|(_, x)| x).ok_or_else(|| OracleError::Grid("no grid point satisfies the constraint".into()))
}

pub const FD_STEP: f64 = 1e-5;

/// Central differences with per-coordinate step `h·max(1, |x_i|)`.
pub fn finite_diff_grad(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: Option<f64>) -> Result<Vec<f64>, OracleError> {
    let h = h.unwrap_or(FD_STEP);
    let mut probe = x.to_vec();
    let mut g = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let hi = h * x[i].abs().max(1.0);
        probe[i] = x[i] + hi;
        let up = f(&probe);
        probe[i] = x[i] - hi;
        let down = f(&probe);
        probe[i] = x[i];
        if !up.is_finite() || !down.is_finite() {
            return Err(OracleError::NonFinite(format!("coordinate {i}")));
        }
        g.push((up - down) / (2.0 * hi));
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dist, Matrix};
    use crate::observations::{DenseOperator, IdentityBlock};
    use rand::SeedableRng;

    fn gaussian(mean: Vec<f64>, var: Vec<f64>) -> GaussianPrior<f64> {
        GaussianPrior::new(mean, var).unwrap()
    }

    #[test]
    fn conjugate_scalar() {
        let op = IdentityBlock::new(1, 1).unwrap();
        let p = analytic_gaussian_posterior(&gaussian(vec![0.0], vec![1.0]), &op, &[0.8], 1.0).unwrap();
        assert!((p.mean[0] - 0.4).abs() < 1e-15);
        assert!((p.covariance.get(0, 0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn vanishing_noise_recovers_y() {
        let op = IdentityBlock::new(2, 2).unwrap();
        let prior = gaussian(vec![0.3, -0.2], vec![1.0, 2.0]);
        let p = analytic_gaussian_posterior(&prior, &op, &[0.5, 0.7], 1e-7).unwrap();
        assert!(dist(&p.mean, &[0.5, 0.7]) < 1e-12);
        let exact = analytic_gaussian_posterior(&prior, &op, &[0.5, 0.7], 0.0).unwrap();
        assert!(dist(&exact.mean, &[0.5, 0.7]) < 1e-15);
    }

    #[test]
    fn normal_equations_hold() {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..3).map(|_| (0..5).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
        let op = DenseOperator::new(Matrix::from_rows(&rows).unwrap()).unwrap();
        let var = vec![0.5, 1.0, 1.5, 2.0, 0.7];
        let m = vec![0.1, -0.2, 0.3, 0.0, 0.5];
        let y = vec![0.4, -1.0, 0.2];
        let sigma = 0.3;
        let p = analytic_gaussian_posterior(&gaussian(m.clone(), var.clone()), &op, &y, sigma).unwrap();
        // (Σ⁻¹ + AᵀA/σ²) μ = Σ⁻¹m + Aᵀy/σ²
        let a = op.matrix();
        let lhs: Vec<f64> = {
            let am = a.matvec(&p.mean);
            let at = a.matvec_t(&am);
            (0..5).map(|i| p.mean[i] / var[i] + at[i] / (sigma * sigma)).collect()
        };
        let aty = a.matvec_t(&y);
        let rhs: Vec<f64> = (0..5).map(|i| m[i] / var[i] + aty[i] / (sigma * sigma)).collect();
        assert!(dist(&lhs, &rhs) < 1e-10);
    }

    #[test]
    fn rank_deficient_noise_free_is_singular() {
        let op = DenseOperator::new(Matrix::from_rows(&[vec![1.0, 0.0], vec![2.0, 0.0]]).unwrap()).unwrap();
        let r = analytic_gaussian_posterior(&gaussian(vec![0.0; 2], vec![1.0; 2]), &op, &[1.0, 2.0], 0.0);
        assert!(matches!(r, Err(OracleError::Singular(_))));
    }

    #[test]
    fn grid_agrees_with_conjugate_mean() {
        let gmm = GmmPrior::new(vec![1.0], vec![vec![0.2, -0.4]], vec![0.5]).unwrap();
        let op = DenseOperator::new(Matrix::from_rows(&[vec![1.0, 1.0]]).unwrap()).unwrap();
        let iso = gaussian(vec![0.2, -0.4], vec![0.5, 0.5]);
        let exact = analytic_gaussian_posterior(&iso, &op, &[1.0], 0.4).unwrap();
        let spec = GridSearchSpec::new(vec![[-2.0, 2.0], [-2.0, 2.0]], 0.01);
        let map = grid_map(&gmm, &|x| op.apply(x), &[1.0], 0.4, &spec).unwrap();
        for i in 0..2 {
            assert!((map[i] - exact.mean[i]).abs() <= 0.01 + 1e-12, "{map:?} vs {:?}", exact.mean);
        }
    }

    #[test]
    fn symmetric_tie_takes_first_mode() {
        let gmm = GmmPrior::new(vec![0.5, 0.5], vec![vec![-1.0], vec![1.0]], vec![0.1, 0.1]).unwrap();
        let spec = GridSearchSpec::new(vec![[-2.0, 2.0]], 0.01);
        let map = grid_map(&gmm, &|_| vec![], &[], 1.0, &spec).unwrap();
        assert!((map[0] + 1.0).abs() < 1e-9);
    }

    #[test]
    fn noise_free_slice() {
        let gmm = GmmPrior::new(vec![1.0], vec![vec![0.0, 0.0]], vec![1.0]).unwrap();
        let spec = GridSearchSpec::new(vec![[-1.0, 1.0], [-1.0, 1.0]], 0.01);
        let map = grid_map(&gmm, &|x| vec![x[0]], &[0.5], 0.0, &spec).unwrap();
        assert!((map[0] - 0.5).abs() < 1e-9 && map[1].abs() < 1e-9);
    }

    #[test]
    fn grid_limits() {
        let gmm = GmmPrior::new(vec![1.0], vec![vec![0.0, 0.0]], vec![1.0]).unwrap();
        let spec = GridSearchSpec::new(vec![[0.0, 100.0], [0.0, 100.0]], 0.01);
        assert!(matches!(grid_map(&gmm, &|_| vec![], &[], 1.0, &spec), Err(OracleError::GridTooLarge { .. })));
        let spec = GridSearchSpec::new(vec![[0.0, 1.0]; 3], 0.5);
        assert!(grid_map(&gmm, &|_| vec![], &[], 1.0, &spec).is_err());
    }

    #[test]
    fn finite_differences() {
        let x = [0.3, -1.7, 2.5];
        let g = finite_diff_grad(&|v: &[f64]| v.iter().map(|a| a * a).sum::<f64>() / 2.0, &x, None).unwrap();
        assert!(dist(&g, &x) < 1e-8);
        let f = |v: &[f64]| v[0].sin() * v[1].exp();
        let exact = [0.3f64.cos() * 0.4f64.exp(), 0.3f64.sin() * 0.4f64.exp()];
        let e1 = dist(&finite_diff_grad(&f, &[0.3, 0.4], Some(1e-2)).unwrap(), &exact);
        let e2 = dist(&finite_diff_grad(&f, &[0.3, 0.4], Some(1e-3)).unwrap(), &exact);
        assert!(e1 / e2 > 50.0, "{e1} {e2}");
        assert!(finite_diff_grad(&|_: &[f64]| f64::NAN, &[0.0], None).is_err());
    }
}
