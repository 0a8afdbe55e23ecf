use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{check_dim, Denoiser, NoiseLevel, PriorError};
use crate::scalar::Real;

/// Which noise parameter indexes the tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelParam {
    Vp,
    Ve,
}

/// On-disk layout of a tabulated denoiser. `values[l]` holds the μ outputs
/// for `levels[l]`, node-major with axis 0 slowest and `dims` entries per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableDocument {
    #[serde(rename = "type")]
    pub kind: String,
    pub param: LevelParam,
    pub dims: usize,
    pub bounds: Vec<[f64; 2]>,
    pub resolution: Vec<usize>,
    pub levels: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

/// Grid lookup of μ with multilinear interpolation in `x_t` and linear
/// interpolation between tabulated noise levels.
#[derive(Debug, Clone, PartialEq)]
pub struct TableDenoiser<T> {
    param: LevelParam,
    dims: usize,
    bounds: Vec<(T, T)>,
    resolution: Vec<usize>,
    levels: Vec<T>,
    values: Vec<Vec<T>>,
}

impl<T: Real> TableDenoiser<T> {
    pub fn from_document(doc: &TableDocument) -> Result<Self, PriorError> {
        let bad = |m: String| Err(PriorError::Parse(m));
        if doc.kind != "table" {
            return bad(format!("field `type`: expected \"table\", got {:?}", doc.kind));
        }
        if doc.dims == 0 || doc.dims > 2 {
            return bad(format!("field `dims`: must be 1 or 2, got {}", doc.dims));
        }
        if doc.bounds.len() != doc.dims {
            return bad(format!("field `bounds`: expected {} intervals, got {}", doc.dims, doc.bounds.len()));
        }
        if let Some(b) = doc.bounds.iter().find(|b| !(b[0] < b[1]) || !b[0].is_finite() || !b[1].is_finite()) {
            return bad(format!("field `bounds`: interval {b:?} is not increasing"));
        }
        if doc.resolution.len() != doc.dims || doc.resolution.iter().any(|&n| n < 2) {
            return bad(format!("field `resolution`: need {} entries, each >= 2", doc.dims));
        }
        if doc.levels.is_empty() {
            return bad("field `levels`: table is empty".into());
        }
        if doc.values.len() != doc.levels.len() {
            return bad(format!("field `values`: expected {} tables, got {}", doc.levels.len(), doc.values.len()));
        }
        let per = doc.resolution.iter().product::<usize>() * doc.dims;
        if let Some((i, v)) = doc.values.iter().enumerate().find(|(_, v)| v.len() != per) {
            return bad(format!("field `values[{i}]`: expected {per} numbers, got {}", v.len()));
        }
        let mut order: Vec<usize> = (0..doc.levels.len()).collect();
        order.sort_by(|&a, &b| doc.levels[a].total_cmp(&doc.levels[b]));
        if order.windows(2).any(|w| doc.levels[w[0]] == doc.levels[w[1]]) {
            return bad("field `levels`: duplicate noise level".into());
        }
        Ok(Self {
            param: doc.param,
            dims: doc.dims,
            bounds: doc.bounds.iter().map(|b| (T::lit(b[0]), T::lit(b[1]))).collect(),
            resolution: doc.resolution.clone(),
            levels: order.iter().map(|&i| T::lit(doc.levels[i])).collect(),
            values: order.iter().map(|&i| doc.values[i].iter().map(|&v| T::lit(v)).collect()).collect(),
        })
    }

    pub fn to_document(&self) -> TableDocument {
        TableDocument {
            kind: "table".into(),
            param: self.param,
            dims: self.dims,
            bounds: self.bounds.iter().map(|&(a, b)| [a.as_f64(), b.as_f64()]).collect(),
            resolution: self.resolution.clone(),
            levels: self.levels.iter().map(|l| l.as_f64()).collect(),
            values: self.values.iter().map(|v| v.iter().map(|x| x.as_f64()).collect()).collect(),
        }
    }

    /// Evaluates `source` on every grid node at every level.
    pub fn tabulate(
        source: &dyn Denoiser<T>,
        param: LevelParam,
        bounds: Vec<(T, T)>,
        resolution: Vec<usize>,
        levels: Vec<T>,
    ) -> Result<Self, PriorError> {
        let dims = bounds.len();
        let doc = TableDocument {
            kind: "table".into(),
            param,
            dims,
            bounds: bounds.iter().map(|&(a, b)| [a.as_f64(), b.as_f64()]).collect(),
            resolution: resolution.clone(),
            levels: levels.iter().map(|l| l.as_f64()).collect(),
            values: vec![vec![0.0; resolution.iter().product::<usize>() * dims]; levels.len()],
        };
        let mut table = Self::from_document(&doc)?;
        for l in 0..table.levels.len() {
            let level = table.level(table.levels[l]);
            for node in 0..table.nodes() {
                let x = table.node_point(node);
                let mu = source.mu(&x, level)?;
                check_dim(dims, mu.len())?;
                table.values[l][node * dims..(node + 1) * dims].copy_from_slice(&mu);
            }
        }
        Ok(table)
    }

    fn level(&self, v: T) -> NoiseLevel<T> {
        match self.param {
            LevelParam::Vp => NoiseLevel::Vp(v),
            LevelParam::Ve => NoiseLevel::Ve(v),
        }
    }

    fn nodes(&self) -> usize {
        self.resolution.iter().product()
    }

    fn spacing(&self, axis: usize) -> T {
        let (lo, hi) = self.bounds[axis];
        (hi - lo) / T::from_usize_lossy(self.resolution[axis] - 1)
    }

    /// Coordinates of a node from its flat index.
    pub fn node_point(&self, mut node: usize) -> Vec<T> {
        let mut x = vec![T::zero(); self.dims];
        for axis in (0..self.dims).rev() {
            let k = node % self.resolution[axis];
            node /= self.resolution[axis];
            x[axis] = self.bounds[axis].0 + T::from_usize_lossy(k) * self.spacing(axis);
        }
        x
    }

    fn interpolate(&self, table: &[T], x: &[T]) -> Vec<T> {
        let mut base = vec![0usize; self.dims];
        let mut frac = vec![T::zero(); self.dims];
        for axis in 0..self.dims {
            let n = self.resolution[axis];
            let u =
                ((x[axis] - self.bounds[axis].0) / self.spacing(axis)).max(T::zero()).min(T::from_usize_lossy(n - 1));
            let i = u.floor().to_usize().unwrap_or(0).min(n - 2);
            base[axis] = i;
            frac[axis] = u - T::from_usize_lossy(i);
        }
        let mut out = vec![T::zero(); self.dims];
        for corner in 0..(1usize << self.dims) {
            let mut weight = T::one();
            let mut flat = 0;
            for axis in 0..self.dims {
                let up = (corner >> axis) & 1 == 1;
                weight = weight * if up { frac[axis] } else { T::one() - frac[axis] };
                flat = flat * self.resolution[axis] + base[axis] + usize::from(up);
            }
            if weight == T::zero() {
                continue;
            }
            for (o, &v) in out.iter_mut().zip(&table[flat * self.dims..(flat + 1) * self.dims]) {
                *o = *o + weight * v;
            }
        }
        out
    }
}

impl<T: Real> Denoiser<T> for TableDenoiser<T> {
    fn dim(&self) -> Option<usize> {
        Some(self.dims)
    }

    fn mu(&self, x: &[T], level: NoiseLevel<T>) -> Result<Vec<T>, PriorError> {
        check_dim(self.dims, x.len())?;
        let v = match (self.param, level) {
            (LevelParam::Vp, NoiseLevel::Vp(v)) | (LevelParam::Ve, NoiseLevel::Ve(v)) => v,
            _ => return Err(PriorError::NoiseLevel("level kind differs from the table parameterisation".into())),
        };
        let (first, last) = (self.levels[0], self.levels[self.levels.len() - 1]);
        if v <= first || self.levels.len() == 1 {
            return Ok(self.interpolate(&self.values[0], x));
        }
        if v >= last {
            return Ok(self.interpolate(&self.values[self.levels.len() - 1], x));
        }
        let hi = self.levels.partition_point(|&l| l < v);
        if self.levels[hi] == v {
            return Ok(self.interpolate(&self.values[hi], x));
        }
        let lo = hi - 1;
        let f = (v - self.levels[lo]) / (self.levels[hi] - self.levels[lo]);
        let a = self.interpolate(&self.values[lo], x);
        let b = self.interpolate(&self.values[hi], x);
        Ok(a.iter().zip(&b).map(|(&p, &q)| p + f * (q - p)).collect())
    }
}

/// Parses a tabulated denoiser from JSON text.
pub fn parse_tabulated_denoiser<T: Real>(text: &str) -> Result<TableDenoiser<T>, PriorError> {
    let doc: TableDocument = serde_json::from_str(text).map_err(|e| PriorError::Parse(e.to_string()))?;
    TableDenoiser::from_document(&doc)
}

pub fn load_tabulated_denoiser<T: Real>(path: impl AsRef<Path>) -> Result<TableDenoiser<T>, PriorError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| PriorError::Parse(format!("{}: {e}", path.display())))?;
    parse_tabulated_denoiser(&text).map_err(|e| match e {
        PriorError::Parse(m) => PriorError::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}
