use std::fmt::Debug;

use super::{check_len, ObservationError};
use crate::fourier::{Fft2, C};
use crate::linalg::{all_finite, norm_sq, sub};
use crate::scalar::Real;

/// A differentiable-almost-everywhere observation `y = 𝒜(x)` with a cheap
/// approximate projection.
pub trait NonlinearOperator<T: Real>: Debug + Send + Sync {
    fn name(&self) -> &'static str;
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn forward(&self, x: &[T]) -> Vec<T>;
    /// `J(x)ᵀv` with `J = ∂𝒜/∂x`.
    fn vjp(&self, x: &[T], v: &[T]) -> Vec<T>;
    fn project(&self, x: &[T], y: &[T], noisy: bool) -> Result<Vec<T>, ObservationError>;
}

/// `y = |DFT(P x)|` for an `n×n` image zero-padded by `pad` on every side.
#[derive(Debug, Clone)]
pub struct PhaseRetrieval<T: Real> {
    n: usize,
    pad: usize,
    fft: Fft2<T>,
}

impl<T: Real> PhaseRetrieval<T> {
    pub fn new(n: usize, pad: usize) -> Result<Self, ObservationError> {
        if n == 0 {
            return Err(ObservationError::Invalid("phase retrieval needs a non-empty image".into()));
        }
        let side = n + 2 * pad;
        Ok(Self { n, pad, fft: Fft2::new(side, side) })
    }

    pub fn image_side(&self) -> usize {
        self.n
    }

    pub fn padded_side(&self) -> usize {
        self.n + 2 * self.pad
    }

    fn pad_image(&self, x: &[T]) -> Vec<C<T>> {
        let side = self.padded_side();
        let mut buf = vec![C::new(T::zero(), T::zero()); side * side];
        for r in 0..self.n {
            for c in 0..self.n {
                buf[(r + self.pad) * side + c + self.pad] = C::new(x[r * self.n + c], T::zero());
            }
        }
        buf
    }

    fn crop(&self, buf: &[C<T>]) -> Vec<C<T>> {
        let side = self.padded_side();
        let mut out = Vec::with_capacity(self.n * self.n);
        for r in 0..self.n {
            for c in 0..self.n {
                out.push(buf[(r + self.pad) * side + c + self.pad]);
            }
        }
        out
    }

    /// `z = DFT(P x)`
    pub fn spectrum(&self, x: &[T]) -> Vec<C<T>> {
        let mut z = self.pad_image(x);
        self.fft.forward(&mut z);
        z
    }

    /// Magnitude projection `z̃ = y ⊙ z/|z|` (phase `1` where `z = 0`) and the
    /// real part of its cropped inverse transform.
    pub fn project_with_spectrum(&self, x: &[T], y: &[T]) -> Result<(Vec<T>, Vec<C<T>>), ObservationError> {
        check_len("image", self.n * self.n, x.len())?;
        check_len("magnitudes", self.output_dim(), y.len())?;
        if let Some(v) = y.iter().find(|v| !(**v >= T::zero())) {
            return Err(ObservationError::Range(format!("negative magnitude {v}")));
        }
        let z = self.spectrum(x);
        let z_tilde: Vec<C<T>> = z
            .iter()
            .zip(y)
            .map(|(&zi, &yi)| {
                let m = zi.norm();
                if m > T::zero() {
                    zi * (yi / m)
                } else {
                    C::new(yi, T::zero())
                }
            })
            .collect();
        let mut back = z_tilde.clone();
        self.fft.inverse(&mut back);
        let x_proj = self.crop(&back).into_iter().map(|v| v.re).collect();
        Ok((x_proj, z_tilde))
    }
}

impl<T: Real> NonlinearOperator<T> for PhaseRetrieval<T> {
    fn name(&self) -> &'static str {
        "phase"
    }
    fn input_dim(&self) -> usize {
        self.n * self.n
    }
    fn output_dim(&self) -> usize {
        self.padded_side() * self.padded_side()
    }
    fn forward(&self, x: &[T]) -> Vec<T> {
        self.spectrum(x).into_iter().map(|z| z.norm()).collect()
    }
    fn vjp(&self, x: &[T], v: &[T]) -> Vec<T> {
        let z = self.spectrum(x);
        let mut w: Vec<C<T>> = z
            .iter()
            .zip(v)
            .map(|(&zi, &vi)| {
                let m = zi.norm();
                if m > T::zero() {
                    zi * (vi / m)
                } else {
                    C::new(T::zero(), T::zero())
                }
            })
            .collect();
        // F^H w = N · IDFT(w)
        self.fft.inverse(&mut w);
        let scale = T::from_usize_lossy(self.fft.len());
        self.crop(&w).into_iter().map(|c| c.re * scale).collect()
    }
    fn project(&self, x: &[T], y: &[T], _noisy: bool) -> Result<Vec<T>, ObservationError> {
        Ok(self.project_with_spectrum(x, y)?.0)
    }
}

/// `y = clip(2x, −1, 1)` elementwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HdrOperator {
    dim: usize,
}

impl HdrOperator {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl<T: Real> NonlinearOperator<T> for HdrOperator {
    fn name(&self) -> &'static str {
        "hdr"
    }
    fn input_dim(&self) -> usize {
        self.dim
    }
    fn output_dim(&self) -> usize {
        self.dim
    }
    fn forward(&self, x: &[T]) -> Vec<T> {
        x.iter().map(|&v| (T::lit(2.0) * v).max(-T::one()).min(T::one())).collect()
    }
    fn vjp(&self, x: &[T], v: &[T]) -> Vec<T> {
        x.iter()
            .zip(v)
            .map(|(&xi, &vi)| if (T::lit(2.0) * xi).abs() < T::one() { T::lit(2.0) * vi } else { T::zero() })
            .collect()
    }
    fn project(&self, x: &[T], y: &[T], noisy: bool) -> Result<Vec<T>, ObservationError> {
        project_hdr(x, y, noisy)
    }
}

/// Piecewise HDR projection; `noisy` selects the variant tolerant to
/// observation noise near the clipping levels.
pub fn project_hdr<T: Real>(x: &[T], y: &[T], noisy: bool) -> Result<Vec<T>, ObservationError> {
    check_len("y", x.len(), y.len())?;
    let half = T::lit(0.5);
    let two = T::lit(2.0);
    let one = T::one();
    if !noisy {
        if let Some(v) = y.iter().find(|v| !(v.abs() <= one)) {
            return Err(ObservationError::Range(format!("noise-free HDR observation {v} outside [-1, 1]")));
        }
    }
    Ok(x.iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            if noisy {
                if yi.abs() < half || (yi >= one && xi <= half) || (yi <= -one && xi >= -half) {
                    yi / two
                } else {
                    xi
                }
            } else if yi.abs() < one {
                yi / two
            } else if yi == one && xi <= half {
                half
            } else if yi == -one && xi >= -half {
                -half
            } else {
                xi
            }
        })
        .collect())
}

/// Minimises `‖y − 𝒜(x)‖²` from `x0` by gradient descent with backtracking;
/// the residual never increases.
pub fn project_gradient_fallback<T: Real>(
    x0: &[T],
    op: &dyn NonlinearOperator<T>,
    y: &[T],
    iters: usize,
    lr: T,
) -> Result<Vec<T>, ObservationError> {
    check_len("x0", op.input_dim(), x0.len())?;
    check_len("y", op.output_dim(), y.len())?;
    if iters == 0 || !(lr > T::zero()) {
        return Err(ObservationError::Invalid("need iters >= 1 and lr > 0".into()));
    }
    let loss = |x: &[T]| norm_sq(&sub(y, &op.forward(x)));
    let mut x = x0.to_vec();
    let mut current = loss(&x);
    if !current.is_finite() || !all_finite(&x) {
        return Err(ObservationError::NonFinite(format!("{} projection start", op.name())));
    }
    for it in 0..iters {
        if current == T::zero() {
            break;
        }
        let r = sub(y, &op.forward(&x));
        let g: Vec<T> = op.vjp(&x, &r).into_iter().map(|v| -T::lit(2.0) * v).collect();
        if !all_finite(&g) {
            return Err(ObservationError::NonFinite(format!("{} gradient at iteration {it}", op.name())));
        }
        if norm_sq(&g) == T::zero() {
            break;
        }
        let mut step = lr;
        let mut accepted = false;
        for _ in 0..40 {
            let cand: Vec<T> = x.iter().zip(&g).map(|(&a, &b)| a - step * b).collect();
            let l = loss(&cand);
            if l.is_finite() && l < current {
                x = cand;
                current = l;
                accepted = true;
                break;
            }
            step = step * T::lit(0.5);
        }
        if !accepted {
            break;
        }
    }
    Ok(x)
}
