use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{read_vector, IoError};
use crate::linalg::Matrix;
use crate::observations::{
    AvgPoolOperator, CircularConvolution, DenseOperator, HdrOperator, LinearOperator, MaskOperator, NonlinearOperator,
    PhaseRetrieval, SumOperator, TaskKind,
};
use crate::rng::normal_vec;
use crate::solver::{NonlinearProjection, Observation};

/// Observation task. Which geometry fields are required depends on `task`:
///
/// | task    | fields                                                  |
/// |---------|---------------------------------------------------------|
/// | sr      | `height`, `width`, `factor`                             |
/// | inpaint | `mask`, or `matrix` for a general dense operator        |
/// | deblur  | `height`, `width`, and `kernel` + `kernel_shape` or `kernel_size` + `kernel_std` |
/// | sum     | `tracks`, `length`                                      |
/// | mask    | `mask`, or `tracks`, `length`, `observed_tracks`        |
/// | phase   | `side`, `pad`                                           |
/// | hdr     | `dim`                                                   |
///
/// Mask tasks take a full-length `y`; unobserved entries are ignored. The
/// observation is `y` (inline), `y_file`, or synthesised from the
/// reference as `A(x) + σ·n` with `n` seeded by `noise_seed`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskDoc {
    pub task: Option<TaskKind>,
    #[serde(default)]
    pub sigma: f64,
    pub y: Option<Vec<f64>>,
    pub y_file: Option<String>,
    pub reference: Option<Vec<f64>>,
    pub reference_file: Option<String>,
    pub noise_seed: Option<u64>,
    pub height: Option<usize>,
    pub width: Option<usize>,
    pub factor: Option<usize>,
    pub mask: Option<Vec<bool>>,
    pub matrix: Option<Vec<Vec<f64>>>,
    pub kernel: Option<Vec<f64>>,
    pub kernel_shape: Option<[usize; 2]>,
    pub kernel_size: Option<usize>,
    pub kernel_std: Option<f64>,
    pub tracks: Option<usize>,
    pub length: Option<usize>,
    pub observed_tracks: Option<Vec<usize>>,
    pub side: Option<usize>,
    pub pad: Option<usize>,
    pub dim: Option<usize>,
    pub projection: Option<NonlinearProjection>,
}

/// A task ready for the solver, plus what the writer needs for images.
pub struct BuiltTask {
    pub observation: Observation<f64>,
    pub reference: Option<Vec<f64>>,
    /// `(height, width)` of the unknown when it is an image.
    pub image_shape: Option<(usize, usize)>,
    /// `(height, width)` of `y` when it is an image.
    pub observation_shape: Option<(usize, usize)>,
}

type Shape = Option<(usize, usize)>;

enum Op {
    Linear(Arc<dyn LinearOperator<f64>>),
    Nonlinear(Arc<dyn NonlinearOperator<f64>>),
}

impl TaskDoc {
    fn need<T: Copy>(&self, v: Option<T>, field: &str) -> Result<T, IoError> {
        v.ok_or_else(|| IoError::Invalid(format!("task `{}` needs `{field}`", self.kind().map_or("?", |k| k.as_str()))))
    }

    fn kind(&self) -> Result<TaskKind, IoError> {
        self.task.ok_or_else(|| IoError::Invalid("missing `task`".into()))
    }

    /// The operator with the image shapes of the unknown and of `y`.
    fn operator(&self) -> Result<(Op, Shape, Shape), IoError> {
        let image = |h: usize, w: usize| Some((h, w));
        Ok(match self.kind()? {
            TaskKind::Sr => {
                let (h, w) = (self.need(self.height, "height")?, self.need(self.width, "width")?);
                let k = self.need(self.factor, "factor")?;
                (Op::Linear(Arc::new(AvgPoolOperator::new(h, w, k)?)), image(h, w), image(h / k.max(1), w / k.max(1)))
            }
            TaskKind::Inpaint | TaskKind::Mask => {
                if let Some(rows) = &self.matrix {
                    let m = Matrix::from_rows(rows).map_err(|e| IoError::Invalid(e.to_string()))?;
                    (Op::Linear(Arc::new(DenseOperator::new(m)?)), None, None)
                } else {
                    let mask = match (&self.mask, &self.observed_tracks) {
                        (Some(m), _) => m.clone(),
                        (None, Some(obs)) => {
                            let (k, n) = (self.need(self.tracks, "tracks")?, self.need(self.length, "length")?);
                            if let Some(&bad) = obs.iter().find(|&&j| j >= k) {
                                return Err(IoError::Invalid(format!("observed track {bad} of {k}")));
                            }
                            (0..k * n).map(|i| obs.contains(&(i / n))).collect()
                        }
                        (None, None) => {
                            return Err(IoError::Invalid("mask task needs `mask` or `observed_tracks`".into()))
                        }
                    };
                    let shape = match (self.height, self.width) {
                        (Some(h), Some(w)) if h * w == mask.len() => image(h, w),
                        _ => None,
                    };
                    (Op::Linear(Arc::new(MaskOperator::new(mask)?)), shape, None)
                }
            }
            TaskKind::Deblur => {
                let (h, w) = (self.need(self.height, "height")?, self.need(self.width, "width")?);
                let op = match (&self.kernel, self.kernel_shape, self.kernel_size, self.kernel_std) {
                    (Some(k), Some([kh, kw]), _, _) => CircularConvolution::new(h, w, kh, kw, k)?,
                    (None, _, Some(size), Some(std)) => CircularConvolution::gaussian(h, w, size, std)?,
                    _ => {
                        return Err(IoError::Invalid(
                            "deblur needs `kernel` with `kernel_shape`, or `kernel_size` with `kernel_std`".into(),
                        ))
                    }
                };
                (Op::Linear(Arc::new(op)), image(h, w), image(h, w))
            }
            TaskKind::Sum => {
                let (k, n) = (self.need(self.tracks, "tracks")?, self.need(self.length, "length")?);
                (Op::Linear(Arc::new(SumOperator::new(k, n)?)), None, None)
            }
            TaskKind::Phase => {
                let (n, pad) = (self.need(self.side, "side")?, self.need(self.pad, "pad")?);
                (Op::Nonlinear(Arc::new(PhaseRetrieval::new(n, pad)?)), image(n, n), None)
            }
            TaskKind::Hdr => {
                let d = self.need(self.dim, "dim")?;
                let shape = match (self.height, self.width) {
                    (Some(h), Some(w)) if h * w == d => image(h, w),
                    _ => None,
                };
                (Op::Nonlinear(Arc::new(HdrOperator::new(d))), shape, shape)
            }
        })
    }

    /// Builds the operator and loads or synthesises `y`. Relative file paths
    /// resolve against `base`.
    pub fn build(&self, base: &Path) -> Result<BuiltTask, IoError> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(IoError::Invalid(format!("sigma={} must be finite and >= 0", self.sigma)));
        }
        let (op, image_shape, observation_shape) = self.operator()?;
        let reference = match (&self.reference, &self.reference_file) {
            (Some(r), _) => Some(r.clone()),
            (None, Some(p)) => Some(read_vector(&base.join(p))?),
            (None, None) => None,
        };
        let (input_dim, output_dim) = match &op {
            Op::Linear(a) => (a.input_dim(), a.output_dim()),
            Op::Nonlinear(a) => (a.input_dim(), a.output_dim()),
        };
        if let Some(r) = &reference {
            if r.len() != input_dim {
                return Err(IoError::Invalid(format!(
                    "reference has {} entries, operator expects {input_dim}",
                    r.len()
                )));
            }
        }
        let y = match (&self.y, &self.y_file, &reference) {
            (Some(y), _, _) => y.clone(),
            (None, Some(p), _) => read_vector(&base.join(p))?,
            (None, None, Some(x)) => {
                let clean = match &op {
                    Op::Linear(a) => a.apply(x),
                    Op::Nonlinear(a) => a.forward(x),
                };
                if self.sigma > 0.0 {
                    let mut rng = ChaCha8Rng::seed_from_u64(self.noise_seed.unwrap_or(0));
                    let n: Vec<f64> = normal_vec(&mut rng, clean.len());
                    clean.iter().zip(&n).map(|(c, e)| c + self.sigma * e).collect()
                } else {
                    clean
                }
            }
            (None, None, None) => return Err(IoError::Invalid("task needs `y`, `y_file` or a reference".into())),
        };
        if y.len() != output_dim {
            return Err(IoError::Invalid(format!("y has {} entries, operator produces {output_dim}", y.len())));
        }
        let observation = match op {
            Op::Linear(op) => Observation::Linear { op, y, sigma: self.sigma },
            Op::Nonlinear(op) => {
                Observation::Nonlinear { op, y, sigma: self.sigma, projection: self.projection.unwrap_or_default() }
            }
        };
        Ok(BuiltTask { observation, reference, image_shape, observation_shape })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> TaskDoc {
        serde_json::from_str(text).unwrap()
    }

    #[test]
    fn inline_mask_task() {
        let t =
            parse(r#"{"task":"inpaint","mask":[true,false],"y":[0.3,0],"sigma":0.1}"#).build(Path::new(".")).unwrap();
        assert_eq!(t.observation.y(), &[0.3, 0.0]);
        assert_eq!(t.observation.input_dim(), 2);
        assert!(t.image_shape.is_none());
    }

    #[test]
    fn synthesised_observation() {
        let doc = parse(
            r#"{"task":"sr","height":4,"width":4,"factor":2,"reference":[
            1,1,0,0, 1,1,0,0, 0,0,-1,-1, 0,0,-1,-1]}"#,
        );
        let t = doc.build(Path::new(".")).unwrap();
        assert_eq!(t.observation.y(), &[1.0, 0.0, 0.0, -1.0]);
        assert_eq!((t.image_shape, t.observation_shape), (Some((4, 4)), Some((2, 2))));

        let noisy = TaskDoc { sigma: 0.1, noise_seed: Some(3), ..doc.clone() };
        let (a, b) = (noisy.build(Path::new(".")).unwrap(), noisy.build(Path::new(".")).unwrap());
        assert_eq!(a.observation.y(), b.observation.y());
        assert_ne!(a.observation.y(), t.observation.y());
    }

    #[test]
    fn observed_tracks_and_nonlinear() {
        let t = parse(r#"{"task":"mask","tracks":3,"length":2,"observed_tracks":[1],"y":[0,0,0.5,0.5,0,0]}"#)
            .build(Path::new("."))
            .unwrap();
        assert_eq!(t.observation.input_dim(), 6);
        let t = parse(r#"{"task":"phase","side":4,"pad":2,"reference":[0,0,0,0,0,1,0,0,0,0,0,0,0,0,0,0]}"#)
            .build(Path::new("."))
            .unwrap();
        assert!(matches!(t.observation, Observation::Nonlinear { .. }));
        assert!(t.observation.y().iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn reports_missing_fields() {
        for text in [
            r#"{"task":"sr","height":4,"width":4,"y":[0]}"#,
            r#"{"task":"deblur","height":4,"width":4,"kernel_size":3,"y":[]}"#,
            r#"{"task":"sum","tracks":2,"length":2}"#,
            r#"{"task":"inpaint","mask":[true],"y":[1,2]}"#,
            r#"{"task":"mask","tracks":2,"length":2,"observed_tracks":[2],"y":[0,0]}"#,
        ] {
            assert!(parse(text).build(Path::new(".")).is_err(), "{text}");
        }
        assert!(serde_json::from_str::<TaskDoc>(r#"{"task":"blur"}"#).is_err());
        assert!(serde_json::from_str::<TaskDoc>(r#"{"task":"sr","size":3}"#).is_err());
    }

    #[test]
    fn y_from_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("y.csv"), "0.25\n-0.5\n").unwrap();
        let t = parse(r#"{"task":"sum","tracks":2,"length":2,"y_file":"y.csv"}"#).build(dir.path()).unwrap();
        assert_eq!(t.observation.y(), &[0.25, -0.5]);
    }
}
