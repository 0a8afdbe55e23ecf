use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ObservationError;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Sr,
    Inpaint,
    Deblur,
    Sum,
    Mask,
    Phase,
    Hdr,
}

impl TaskKind {
    pub const ALL: [TaskKind; 7] = [
        TaskKind::Sr,
        TaskKind::Inpaint,
        TaskKind::Deblur,
        TaskKind::Sum,
        TaskKind::Mask,
        TaskKind::Phase,
        TaskKind::Hdr,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Sr => "sr",
            TaskKind::Inpaint => "inpaint",
            TaskKind::Deblur => "deblur",
            TaskKind::Sum => "sum",
            TaskKind::Mask => "mask",
            TaskKind::Phase => "phase",
            TaskKind::Hdr => "hdr",
        }
    }
}

impl FromStr for TaskKind {
    type Err = ObservationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskKind::ALL.into_iter().find(|t| t.as_str() == s).ok_or_else(|| ObservationError::UnknownTask(s.to_string()))
    }
}

/// Geometry needed to turn observation noise into data-space noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Geometry {
    /// Pooling side for super-resolution.
    pub factor: Option<usize>,
    /// Number of stacked tracks for mixtures.
    pub tracks: Option<usize>,
    /// Image side before padding.
    pub side: Option<usize>,
    /// Spectrum side after padding.
    pub padded_side: Option<usize>,
}

/// Standard deviation of the data-space noise equivalent to observation
/// noise `σ` for a task.
pub fn equivalent_noise<T: Real>(task: TaskKind, sigma: T, geometry: &Geometry) -> Result<T, ObservationError> {
    if !(sigma >= T::zero()) || !sigma.is_finite() {
        return Err(ObservationError::Range(format!("sigma={sigma} must be finite and >= 0")));
    }
    let need = |v: Option<usize>, what: &str| {
        v.filter(|&n| n > 0)
            .map(T::from_usize_lossy)
            .ok_or_else(|| ObservationError::Invalid(format!("task `{}` needs `{what}`", task.as_str())))
    };
    match task {
        TaskKind::Sr => Ok(need(geometry.factor, "factor")? * sigma),
        TaskKind::Inpaint | TaskKind::Mask => Ok(sigma),
        TaskKind::Sum => Ok(sigma / need(geometry.tracks, "tracks")?.sqrt()),
        TaskKind::Phase => Ok(need(geometry.padded_side, "padded_side")? * sigma / need(geometry.side, "side")?),
        TaskKind::Hdr => Ok(sigma / T::lit(2.0)),
        TaskKind::Deblur => {
            if sigma == T::zero() {
                Ok(T::zero())
            } else {
                Err(ObservationError::Invalid("deblurring noise is per spectral component; use svd_decouple".into()))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equivalent_noise_constants() {
        let g = Geometry { factor: Some(4), ..Default::default() };
        assert!((equivalent_noise(TaskKind::Sr, 0.05, &g).unwrap() - 0.2f64).abs() < 1e-15);
        let g = Geometry { side: Some(256), padded_side: Some(384), ..Default::default() };
        assert_eq!(equivalent_noise(TaskKind::Phase, 0.1f64, &g).unwrap(), 1.5 * 0.1);
        assert_eq!(equivalent_noise(TaskKind::Hdr, 0.1f64, &Geometry::default()).unwrap(), 0.05);
    }

    #[test]
    fn zero_noise_stays_zero() {
        let g = Geometry { factor: Some(4), tracks: Some(4), side: Some(8), padded_side: Some(12) };
        for t in TaskKind::ALL {
            assert_eq!(equivalent_noise(t, 0.0f64, &g).unwrap(), 0.0);
        }
    }

    #[test]
    fn unknown_tag() {
        assert!(matches!("blur".parse::<TaskKind>(), Err(ObservationError::UnknownTask(_))));
        assert_eq!("hdr".parse::<TaskKind>().unwrap(), TaskKind::Hdr);
    }
}
