use std::sync::Arc;

use super::{check_dim, Denoiser, NoiseLevel, PriorError};
use crate::scalar::Real;

/// A block of `repeat` consecutive chunks, each denoised independently.
#[derive(Clone)]
pub struct ProductPart<T: Real> {
    pub repeat: usize,
    pub dim: usize,
    pub denoiser: Arc<dyn Denoiser<T>>,
}

/// Denoiser of a prior that factorises over consecutive blocks, e.g. tracks
/// whose samples are i.i.d. under a 1-D mixture.
#[derive(Clone)]
pub struct ProductDenoiser<T: Real> {
    parts: Vec<ProductPart<T>>,
}

impl<T: Real> ProductDenoiser<T> {
    pub fn new(parts: Vec<ProductPart<T>>) -> Result<Self, PriorError> {
        if parts.is_empty() || parts.iter().any(|p| p.repeat == 0 || p.dim == 0) {
            return Err(PriorError::Invalid("product parts must be non-empty".into()));
        }
        for p in &parts {
            if let Some(d) = p.denoiser.dim() {
                check_dim(d, p.dim)?;
            }
        }
        Ok(Self { parts })
    }

    /// Every coordinate of a `dim`-vector denoised by the same 1-D denoiser.
    pub fn coordinatewise(dim: usize, denoiser: Arc<dyn Denoiser<T>>) -> Result<Self, PriorError> {
        Self::new(vec![ProductPart { repeat: dim, dim: 1, denoiser }])
    }

    pub fn total_dim(&self) -> usize {
        self.parts.iter().map(|p| p.repeat * p.dim).sum()
    }

    fn each_chunk(
        &self,
        x: &[T],
        mut f: impl FnMut(&dyn Denoiser<T>, std::ops::Range<usize>) -> Result<Vec<T>, PriorError>,
    ) -> Result<Vec<T>, PriorError> {
        check_dim(self.total_dim(), x.len())?;
        let mut out = Vec::with_capacity(x.len());
        let mut at = 0;
        for p in &self.parts {
            for _ in 0..p.repeat {
                out.extend(f(p.denoiser.as_ref(), at..at + p.dim)?);
                at += p.dim;
            }
        }
        Ok(out)
    }
}

impl<T: Real> Denoiser<T> for ProductDenoiser<T> {
    fn dim(&self) -> Option<usize> {
        Some(self.total_dim())
    }

    fn mu(&self, x: &[T], level: NoiseLevel<T>) -> Result<Vec<T>, PriorError> {
        self.each_chunk(x, |d, r| d.mu(&x[r], level))
    }

    fn vjp(&self, x: &[T], level: NoiseLevel<T>, v: &[T]) -> Result<Vec<T>, PriorError> {
        check_dim(x.len(), v.len())?;
        self.each_chunk(x, |d, r| d.vjp(&x[r.clone()], level, &v[r]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::priors::{gaussian_denoiser, gmm_denoiser, GaussianPrior, GmmPrior};

    #[test]
    fn blocks_are_denoised_independently() {
        let a: Arc<dyn Denoiser<f64>> = Arc::new(gmm_denoiser(
            GmmPrior::new(vec![0.5, 0.5], vec![vec![-1.0], vec![1.0]], vec![0.05, 0.05]).unwrap(),
        ));
        let b: Arc<dyn Denoiser<f64>> =
            Arc::new(gaussian_denoiser(GaussianPrior::new(vec![0.0, 0.0], vec![1.0, 2.0]).unwrap()));
        let p = ProductDenoiser::new(vec![
            ProductPart { repeat: 3, dim: 1, denoiser: a.clone() },
            ProductPart { repeat: 1, dim: 2, denoiser: b.clone() },
        ])
        .unwrap();
        let x = [0.2, -0.7, 1.4, 0.5, -0.3];
        let lvl = NoiseLevel::Vp(0.5);
        let out = p.mu(&x, lvl).unwrap();
        for i in 0..3 {
            assert_eq!(out[i], a.mu(&x[i..i + 1], lvl).unwrap()[0]);
        }
        assert_eq!(&out[3..], &b.mu(&x[3..], lvl).unwrap()[..]);
        assert!(p.mu(&x[..4], lvl).is_err());
        let v = [1.0; 5];
        assert_eq!(p.vjp(&x, lvl, &v).unwrap().len(), 5);
    }
}
