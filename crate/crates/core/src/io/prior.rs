use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{IoError, Source};
use crate::priors::{
    AnalyticDenoiser, AnalyticPrior, Denoiser, GaussianPrior, GmmPrior, ProductDenoiser, ProductPart, TableDenoiser,
    TableDocument,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Variance {
    Shared(f64),
    PerCoordinate(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartDoc {
    #[serde(default = "one")]
    pub repeat: usize,
    pub prior: Source<PriorDoc>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PriorDoc {
    Gaussian {
        mean: Vec<f64>,
        variance: Variance,
    },
    Gmm {
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        variances: Vec<f64>,
    },
    /// Fields of [`TableDocument`] other than `type`.
    Table {
        param: crate::priors::LevelParam,
        dims: usize,
        bounds: Vec<[f64; 2]>,
        resolution: Vec<usize>,
        levels: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
    Product {
        parts: Vec<PartDoc>,
    },
}

impl PriorDoc {
    /// The analytic prior, when the document describes one.
    pub fn analytic(&self) -> Result<Option<AnalyticPrior<f64>>, IoError> {
        Ok(match self {
            PriorDoc::Gaussian { mean, variance } => Some(
                match variance {
                    Variance::Shared(v) => GaussianPrior::isotropic(mean.clone(), *v)?,
                    Variance::PerCoordinate(v) => GaussianPrior::new(mean.clone(), v.clone())?,
                }
                .into(),
            ),
            PriorDoc::Gmm { weights, means, variances } => {
                Some(GmmPrior::new(weights.clone(), means.clone(), variances.clone())?.into())
            }
            _ => None,
        })
    }

    /// Builds the denoiser; relative paths in product parts resolve against
    /// `base`.
    pub fn denoiser(&self, base: &Path) -> Result<Arc<dyn Denoiser<f64>>, IoError> {
        if let Some(prior) = self.analytic()? {
            return Ok(Arc::new(AnalyticDenoiser::new(prior)));
        }
        match self {
            PriorDoc::Table { param, dims, bounds, resolution, levels, values } => {
                let doc = TableDocument {
                    kind: "table".into(),
                    param: *param,
                    dims: *dims,
                    bounds: bounds.clone(),
                    resolution: resolution.clone(),
                    levels: levels.clone(),
                    values: values.clone(),
                };
                Ok(Arc::new(TableDenoiser::<f64>::from_document(&doc)?))
            }
            PriorDoc::Product { parts } => {
                let mut built = Vec::with_capacity(parts.len());
                for part in parts {
                    let (doc, dir) = part.prior.resolve(base)?;
                    let denoiser = doc.denoiser(&dir)?;
                    let dim = denoiser
                        .dim()
                        .ok_or_else(|| IoError::Invalid("product parts need a fixed dimension".into()))?;
                    built.push(ProductPart { repeat: part.repeat, dim, denoiser });
                }
                Ok(Arc::new(ProductDenoiser::new(built)?))
            }
            _ => unreachable!("analytic priors are handled above"),
        }
    }
}
