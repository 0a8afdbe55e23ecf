use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use super::{check_len, ObservationError, NULL_TOLERANCE};
use crate::fourier::{RealFourierBasis, C};
use crate::linalg::{svd_wide, Matrix, Svd};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    Dense,
    IdentityBlock,
    Mask,
    Sum,
    AvgPool,
    CircularConvolution,
}

/// A linear observation `y = A x` with `m_y ≤ m_x`, exposed through its SVD
/// `A = U·[diag(s), 0]·Vᵀ`.
///
/// Spectral coordinates `Vᵀx` have length `m_x`; the first `m_y` pair with the
/// singular values in the operator's fixed order, the rest span the null space.
pub trait LinearOperator<T: Real>: Debug + Send + Sync {
    fn kind(&self) -> OperatorKind;
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn apply(&self, x: &[T]) -> Vec<T>;
    fn adjoint(&self, y: &[T]) -> Vec<T>;
    fn singular_values(&self) -> Vec<T>;
    fn v_t(&self, x: &[T]) -> Vec<T>;
    fn v(&self, c: &[T]) -> Vec<T>;
    fn u_t(&self, y: &[T]) -> Vec<T>;
    fn u(&self, c: &[T]) -> Vec<T>;

    fn to_dense(&self) -> Matrix<T> {
        Matrix::from_columns_of(self.input_dim(), self.output_dim(), |e| self.apply(e))
    }

    /// Nearest point to `x` with `A·x = y`: `A†y + (I − A†A)x`.
    fn project(&self, x: &[T], y: &[T]) -> Result<Vec<T>, ObservationError> {
        check_len("x", self.input_dim(), x.len())?;
        check_len("y", self.output_dim(), y.len())?;
        let s = self.singular_values();
        let floor = null_floor(&s);
        let mut c = self.v_t(x);
        let yb = self.u_t(y);
        for (i, &si) in s.iter().enumerate() {
            if si > floor {
                c[i] = yb[i] / si;
            }
        }
        Ok(self.v(&c))
    }
}

pub(crate) fn null_floor<T: Real>(s: &[T]) -> T {
    let top = s.iter().copied().fold(T::zero(), T::max);
    top * T::lit(NULL_TOLERANCE)
}

/// Explicit matrix with a precomputed SVD.
#[derive(Debug, Clone)]
pub struct DenseOperator<T> {
    a: Matrix<T>,
    svd: Svd<T>,
}

impl<T: Real> DenseOperator<T> {
    pub fn new(a: Matrix<T>) -> Result<Self, ObservationError> {
        if a.rows() == 0 || a.rows() > a.cols() {
            return Err(ObservationError::Invalid(format!(
                "dense operator must be wide, got {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        let svd = svd_wide(&a)?;
        Ok(Self { a, svd })
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.a
    }

    pub fn svd(&self) -> &Svd<T> {
        &self.svd
    }
}

impl<T: Real> LinearOperator<T> for DenseOperator<T> {
    fn kind(&self) -> OperatorKind {
        OperatorKind::Dense
    }
    fn input_dim(&self) -> usize {
        self.a.cols()
    }
    fn output_dim(&self) -> usize {
        self.a.rows()
    }
    fn apply(&self, x: &[T]) -> Vec<T> {
        self.a.matvec(x)
    }
    fn adjoint(&self, y: &[T]) -> Vec<T> {
        self.a.matvec_t(y)
    }
    fn singular_values(&self) -> Vec<T> {
        self.svd.s.clone()
    }
    fn v_t(&self, x: &[T]) -> Vec<T> {
        self.svd.v.matvec_t(x)
    }
    fn v(&self, c: &[T]) -> Vec<T> {
        self.svd.v.matvec(c)
    }
    fn u_t(&self, y: &[T]) -> Vec<T> {
        self.svd.u.matvec_t(y)
    }
    fn u(&self, c: &[T]) -> Vec<T> {
        self.svd.u.matvec(c)
    }
    fn to_dense(&self) -> Matrix<T> {
        self.a.clone()
    }
}

/// `A = [I, 0]`: observes the first `m_y` coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IdentityBlock {
    input: usize,
    output: usize,
}

impl IdentityBlock {
    pub fn new(input: usize, output: usize) -> Result<Self, ObservationError> {
        if output > input || input == 0 {
            return Err(ObservationError::Invalid(format!("identity block {output} of {input}")));
        }
        Ok(Self { input, output })
    }
}

impl<T: Real> LinearOperator<T> for IdentityBlock {
    fn kind(&self) -> OperatorKind {
        OperatorKind::IdentityBlock
    }
    fn input_dim(&self) -> usize {
        self.input
    }
    fn output_dim(&self) -> usize {
        self.output
    }
    fn apply(&self, x: &[T]) -> Vec<T> {
        x[..self.output].to_vec()
    }
    fn adjoint(&self, y: &[T]) -> Vec<T> {
        let mut x = y.to_vec();
        x.resize(self.input, T::zero());
        x
    }
    fn singular_values(&self) -> Vec<T> {
        vec![T::one(); self.output]
    }
    fn v_t(&self, x: &[T]) -> Vec<T> {
        x.to_vec()
    }
    fn v(&self, c: &[T]) -> Vec<T> {
        c.to_vec()
    }
    fn u_t(&self, y: &[T]) -> Vec<T> {
        y.to_vec()
    }
    fn u(&self, c: &[T]) -> Vec<T> {
        c.to_vec()
    }
    fn project(&self, x: &[T], y: &[T]) -> Result<Vec<T>, ObservationError> {
        super::project_identity_block(x, y, self.output)
    }
}

/// `A = diag(mask)`. Unobserved entries of `y` are ignored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskOperator {
    mask: Vec<bool>,
}

impl MaskOperator {
    pub fn new(mask: Vec<bool>) -> Result<Self, ObservationError> {
        if mask.is_empty() {
            return Err(ObservationError::Invalid("empty mask".into()));
        }
        Ok(Self { mask })
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }
}

impl<T: Real> LinearOperator<T> for MaskOperator {
    fn kind(&self) -> OperatorKind {
        OperatorKind::Mask
    }
    fn input_dim(&self) -> usize {
        self.mask.len()
    }
    fn output_dim(&self) -> usize {
        self.mask.len()
    }
    fn apply(&self, x: &[T]) -> Vec<T> {
        x.iter().zip(&self.mask).map(|(&v, &m)| if m { v } else { T::zero() }).collect()
    }
    fn adjoint(&self, y: &[T]) -> Vec<T> {
        LinearOperator::<T>::apply(self, y)
    }
    fn singular_values(&self) -> Vec<T> {
        self.mask.iter().map(|&m| if m { T::one() } else { T::zero() }).collect()
    }
    fn v_t(&self, x: &[T]) -> Vec<T> {
        x.to_vec()
    }
    fn v(&self, c: &[T]) -> Vec<T> {
        c.to_vec()
    }
    fn u_t(&self, y: &[T]) -> Vec<T> {
        y.to_vec()
    }
    fn u(&self, c: &[T]) -> Vec<T> {
        c.to_vec()
    }
    fn project(&self, x: &[T], y: &[T]) -> Result<Vec<T>, ObservationError> {
        super::project_mask(x, y, &self.mask)
    }
}

/// Row `r ≥ 1` of the `n×n` Helmert matrix; row 0 is the normalised mean.
fn helmert_row<T: Real>(n: usize, r: usize) -> Vec<T> {
    let mut h = vec![T::zero(); n];
    if r == 0 {
        let v = T::one() / T::from_usize_lossy(n).sqrt();
        h.iter_mut().for_each(|e| *e = v);
        return h;
    }
    let rf = T::from_usize_lossy(r);
    let norm = (rf * (rf + T::one())).sqrt();
    for e in h.iter_mut().take(r) {
        *e = T::one() / norm;
    }
    h[r] = -rf / norm;
    h
}

/// Orthonormal transform of groups of `n` values: coordinate `r` of a group is
/// `⟨h_r, group⟩`.
#[derive(Debug, Clone)]
struct Helmert<T> {
    rows: Vec<Vec<T>>,
}

impl<T: Real> Helmert<T> {
    fn new(n: usize) -> Self {
        Self { rows: (0..n).map(|r| helmert_row(n, r)).collect() }
    }

    fn forward(&self, group: &[T]) -> Vec<T> {
        self.rows.iter().map(|h| crate::linalg::dot(h, group)).collect()
    }

    fn inverse(&self, coords: &[T]) -> Vec<T> {
        let n = self.rows.len();
        let mut out = vec![T::zero(); n];
        for (h, &c) in self.rows.iter().zip(coords) {
            for (o, &e) in out.iter_mut().zip(h) {
                *o = *o + c * e;
            }
        }
        out
    }
}

/// Mixture of `K` stacked tracks of length `n`: `y_j = Σ_k x[k·n + j]`.
#[derive(Debug, Clone)]
pub struct SumOperator<T> {
    tracks: usize,
    len: usize,
    helmert: Helmert<T>,
}

impl<T: Real> SumOperator<T> {
    pub fn new(tracks: usize, len: usize) -> Result<Self, ObservationError> {
        if tracks == 0 || len == 0 {
            return Err(ObservationError::Invalid("sum operator needs tracks and samples".into()));
        }
        Ok(Self { tracks, len, helmert: Helmert::new(tracks) })
    }

    pub fn tracks(&self) -> usize {
        self.tracks
    }

    pub fn track_len(&self) -> usize {
        self.len
    }

    fn sample(&self, x: &[T], j: usize) -> Vec<T> {
        (0..self.tracks).map(|k| x[k * self.len + j]).collect()
    }
}

impl<T: Real> LinearOperator<T> for SumOperator<T> {
    fn kind(&self) -> OperatorKind {
        OperatorKind::Sum
    }
    fn input_dim(&self) -> usize {
        self.tracks * self.len
    }
    fn output_dim(&self) -> usize {
        self.len
    }
    fn apply(&self, x: &[T]) -> Vec<T> {
        (0..self.len).map(|j| (0..self.tracks).map(|k| x[k * self.len + j]).sum()).collect()
    }
    fn adjoint(&self, y: &[T]) -> Vec<T> {
        (0..self.tracks).flat_map(|_| y.iter().copied()).collect()
    }
    fn singular_values(&self) -> Vec<T> {
        vec![T::from_usize_lossy(self.tracks).sqrt(); self.len]
    }
    /// Coordinate `r·n + j` is Helmert row `r` applied to sample `j`.
    fn v_t(&self, x: &[T]) -> Vec<T> {
        let mut c = vec![T::zero(); x.len()];
        for j in 0..self.len {
            for (r, v) in self.helmert.forward(&self.sample(x, j)).into_iter().enumerate() {
                c[r * self.len + j] = v;
            }
        }
        c
    }
    fn v(&self, c: &[T]) -> Vec<T> {
        let mut x = vec![T::zero(); c.len()];
        for j in 0..self.len {
            let group = self.sample(c, j);
            for (k, v) in self.helmert.inverse(&group).into_iter().enumerate() {
                x[k * self.len + j] = v;
            }
        }
        x
    }
    fn u_t(&self, y: &[T]) -> Vec<T> {
        y.to_vec()
    }
    fn u(&self, c: &[T]) -> Vec<T> {
        c.to_vec()
    }
    fn project(&self, x: &[T], y: &[T]) -> Result<Vec<T>, ObservationError> {
        super::project_sum(x, y, self.tracks)
    }
}

/// `k×k` average pooling of an `h×w` row-major image.
#[derive(Debug, Clone)]
pub struct AvgPoolOperator<T> {
    h: usize,
    w: usize,
    k: usize,
    helmert: Helmert<T>,
}

impl<T: Real> AvgPoolOperator<T> {
    pub fn new(h: usize, w: usize, k: usize) -> Result<Self, ObservationError> {
        if k == 0 || h == 0 || w == 0 || !h.is_multiple_of(k) || !w.is_multiple_of(k) {
            return Err(ObservationError::Invalid(format!("{h}x{w} image is not divisible into {k}x{k} blocks")));
        }
        Ok(Self { h, w, k, helmert: Helmert::new(k * k) })
    }

    pub fn factor(&self) -> usize {
        self.k
    }

    pub fn image_shape(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    fn blocks(&self) -> usize {
        (self.h / self.k) * (self.w / self.k)
    }

    /// Pixel indices of block `b`, row-major inside the block.
    fn block_pixels(&self, b: usize) -> impl Iterator<Item = usize> + '_ {
        let bw = self.w / self.k;
        let (br, bc) = (b / bw, b % bw);
        (0..self.k * self.k).map(move |i| (br * self.k + i / self.k) * self.w + bc * self.k + i % self.k)
    }
}

impl<T: Real> LinearOperator<T> for AvgPoolOperator<T> {
    fn kind(&self) -> OperatorKind {
        OperatorKind::AvgPool
    }
    fn input_dim(&self) -> usize {
        self.h * self.w
    }
    fn output_dim(&self) -> usize {
        self.blocks()
    }
    fn apply(&self, x: &[T]) -> Vec<T> {
        let n = T::from_usize_lossy(self.k * self.k);
        (0..self.blocks()).map(|b| self.block_pixels(b).map(|p| x[p]).sum::<T>() / n).collect()
    }
    fn adjoint(&self, y: &[T]) -> Vec<T> {
        let n = T::from_usize_lossy(self.k * self.k);
        let mut x = vec![T::zero(); self.h * self.w];
        for (b, &v) in y.iter().enumerate() {
            for p in self.block_pixels(b) {
                x[p] = v / n;
            }
        }
        x
    }
    fn singular_values(&self) -> Vec<T> {
        vec![T::one() / T::from_usize_lossy(self.k); self.blocks()]
    }
    /// Coordinate `r·B + b` is Helmert row `r` applied to block `b`.
    fn v_t(&self, x: &[T]) -> Vec<T> {
        let nb = self.blocks();
        let mut c = vec![T::zero(); x.len()];
        for b in 0..nb {
            let group: Vec<T> = self.block_pixels(b).map(|p| x[p]).collect();
            for (r, v) in self.helmert.forward(&group).into_iter().enumerate() {
                c[r * nb + b] = v;
            }
        }
        c
    }
    fn v(&self, c: &[T]) -> Vec<T> {
        let nb = self.blocks();
        let mut x = vec![T::zero(); c.len()];
        for b in 0..nb {
            let group: Vec<T> = (0..self.k * self.k).map(|r| c[r * nb + b]).collect();
            for (p, v) in self.block_pixels(b).zip(self.helmert.inverse(&group)) {
                x[p] = v;
            }
        }
        x
    }
    fn u_t(&self, y: &[T]) -> Vec<T> {
        y.to_vec()
    }
    fn u(&self, c: &[T]) -> Vec<T> {
        c.to_vec()
    }
    fn project(&self, x: &[T], y: &[T]) -> Result<Vec<T>, ObservationError> {
        super::project_avgpool(x, y, self.h, self.w, self.k)
    }
}

/// Circular convolution on an `h×w` grid, diagonalised by the real Fourier
/// basis. The kernel's centre tap sits at offset zero.
#[derive(Debug, Clone)]
pub struct CircularConvolution<T: Real> {
    h: usize,
    w: usize,
    /// Nonzero taps as `(row offset, col offset, weight)`, offsets mod grid.
    taps: Vec<(usize, usize, T)>,
    basis: RealFourierBasis<T>,
    /// Transfer function `K̂`: unnormalised DFT of the embedded kernel.
    transfer: Vec<C<T>>,
}

impl<T: Real> CircularConvolution<T> {
    /// `kernel` is `kh×kw` row-major; its centre is `(kh/2, kw/2)`.
    pub fn new(h: usize, w: usize, kh: usize, kw: usize, kernel: &[T]) -> Result<Self, ObservationError> {
        if h == 0 || w == 0 || kh == 0 || kw == 0 || kh > h || kw > w {
            return Err(ObservationError::Invalid(format!("{kh}x{kw} kernel on a {h}x{w} grid")));
        }
        check_len("kernel", kh * kw, kernel.len())?;
        if kernel.iter().any(|v| !v.is_finite()) {
            return Err(ObservationError::Invalid("kernel has non-finite taps".into()));
        }
        let (ch, cw) = (kh / 2, kw / 2);
        let mut taps = Vec::new();
        let mut embedded = vec![T::zero(); h * w];
        for r in 0..kh {
            for c in 0..kw {
                let v = kernel[r * kw + c];
                if v == T::zero() {
                    continue;
                }
                let (dr, dc) = ((r + h - ch) % h, (c + w - cw) % w);
                taps.push((dr, dc, v));
                embedded[dr * w + dc] = embedded[dr * w + dc] + v;
            }
        }
        let basis = RealFourierBasis::new(h, w);
        let transfer = basis.fft().forward_real(&embedded);
        Ok(Self { h, w, taps, basis, transfer })
    }

    pub fn new_1d(n: usize, kernel: &[T]) -> Result<Self, ObservationError> {
        Self::new(1, n, 1, kernel.len(), kernel)
    }

    /// Normalised separable Gaussian kernel of odd side `size`.
    pub fn gaussian(h: usize, w: usize, size: usize, std: T) -> Result<Self, ObservationError> {
        if size.is_multiple_of(2) || !(std > T::zero()) {
            return Err(ObservationError::Invalid("gaussian kernel needs odd size and positive std".into()));
        }
        let half = (size / 2) as f64;
        let g: Vec<T> = (0..size)
            .map(|i| {
                let d = T::lit(i as f64 - half);
                (-(d * d) / (T::lit(2.0) * std * std)).exp()
            })
            .collect();
        let kh = if h == 1 { 1 } else { size };
        let mut k = Vec::with_capacity(kh * size);
        for r in 0..kh {
            for &gc in &g {
                k.push(if h == 1 { gc } else { g[r] * gc });
            }
        }
        let total: T = k.iter().copied().sum();
        let k: Vec<T> = k.into_iter().map(|v| v / total).collect();
        Self::new(h, w, kh, size, &k)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    pub fn transfer(&self) -> &[C<T>] {
        &self.transfer
    }

    fn unit_phase(&self, b: usize) -> C<T> {
        let z = self.transfer[b];
        let m = z.norm();
        if m > T::zero() {
            z / m
        } else {
            C::new(T::one(), T::zero())
        }
    }
}

impl<T: Real> LinearOperator<T> for CircularConvolution<T> {
    fn kind(&self) -> OperatorKind {
        OperatorKind::CircularConvolution
    }
    fn input_dim(&self) -> usize {
        self.h * self.w
    }
    fn output_dim(&self) -> usize {
        self.h * self.w
    }
    fn apply(&self, x: &[T]) -> Vec<T> {
        let (h, w) = (self.h, self.w);
        let mut y = vec![T::zero(); h * w];
        for r in 0..h {
            for c in 0..w {
                let mut acc = T::zero();
                for &(dr, dc, k) in &self.taps {
                    acc = acc + k * x[((r + h - dr) % h) * w + (c + w - dc) % w];
                }
                y[r * w + c] = acc;
            }
        }
        y
    }
    fn adjoint(&self, y: &[T]) -> Vec<T> {
        let (h, w) = (self.h, self.w);
        let mut x = vec![T::zero(); h * w];
        for r in 0..h {
            for c in 0..w {
                let mut acc = T::zero();
                for &(dr, dc, k) in &self.taps {
                    acc = acc + k * y[((r + dr) % h) * w + (c + dc) % w];
                }
                x[r * w + c] = acc;
            }
        }
        x
    }
    fn singular_values(&self) -> Vec<T> {
        self.basis.coordinate_bins().iter().map(|&b| self.transfer[b].norm()).collect()
    }
    fn v_t(&self, x: &[T]) -> Vec<T> {
        self.basis.analyze(x)
    }
    fn v(&self, c: &[T]) -> Vec<T> {
        self.basis.synthesize(c)
    }
    fn u_t(&self, y: &[T]) -> Vec<T> {
        let mut s = self.basis.spectrum(y);
        for (b, z) in s.iter_mut().enumerate() {
            *z = *z * self.unit_phase(b).conj();
        }
        self.basis.coords_from_spectrum(&s)
    }
    fn u(&self, c: &[T]) -> Vec<T> {
        let mut s = self.basis.spectrum_from_coords(c);
        for (b, z) in s.iter_mut().enumerate() {
            *z = *z * self.unit_phase(b);
        }
        self.basis.signal(&s)
    }
    fn project(&self, x: &[T], y: &[T]) -> Result<Vec<T>, ObservationError> {
        super::project_circular_deblur(x, self, y)
    }
}
