//! 2-D FFT plans and the real orthonormal Fourier basis that diagonalises
//! circular convolutions. A 1-D signal is the `h = 1` case.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::scalar::Real;

pub type C<T> = Complex<T>;

#[derive(Clone)]
pub struct Fft2<T: Real> {
    h: usize,
    w: usize,
    row_fwd: Arc<dyn Fft<T>>,
    row_inv: Arc<dyn Fft<T>>,
    col_fwd: Arc<dyn Fft<T>>,
    col_inv: Arc<dyn Fft<T>>,
}

impl<T: Real> std::fmt::Debug for Fft2<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Fft2({}x{})", self.h, self.w)
    }
}

impl<T: Real> Fft2<T> {
    pub fn new(h: usize, w: usize) -> Self {
        assert!(h > 0 && w > 0, "empty fft grid");
        let mut planner = FftPlanner::new();
        Self {
            h,
            w,
            row_fwd: planner.plan_fft_forward(w),
            row_inv: planner.plan_fft_inverse(w),
            col_fwd: planner.plan_fft_forward(h),
            col_inv: planner.plan_fft_inverse(h),
        }
    }

    pub fn len(&self) -> usize {
        self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    /// Unnormalised forward DFT, in place, row-major.
    pub fn forward(&self, data: &mut [C<T>]) {
        self.run(data, &self.row_fwd, &self.col_fwd);
    }

    /// Inverse DFT including the `1/(h·w)` factor.
    pub fn inverse(&self, data: &mut [C<T>]) {
        self.run(data, &self.row_inv, &self.col_inv);
        let k = T::one() / T::from_usize_lossy(self.len());
        for z in data.iter_mut() {
            *z = *z * k;
        }
    }

    fn run(&self, data: &mut [C<T>], row: &Arc<dyn Fft<T>>, col: &Arc<dyn Fft<T>>) {
        assert_eq!(data.len(), self.len(), "fft buffer length");
        if self.w > 1 {
            row.process(data);
        }
        if self.h > 1 {
            let mut t = transpose(data, self.h, self.w);
            col.process(&mut t);
            let back = transpose(&t, self.w, self.h);
            data.copy_from_slice(&back);
        }
    }

    pub fn forward_real(&self, x: &[T]) -> Vec<C<T>> {
        let mut buf: Vec<C<T>> = x.iter().map(|&v| C::new(v, T::zero())).collect();
        self.forward(&mut buf);
        buf
    }
}

fn transpose<T: Copy>(data: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(data.len());
    for c in 0..cols {
        for r in 0..rows {
            out.push(data[r * cols + c]);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    /// Self-conjugate bin: one real coordinate.
    Real(usize),
    /// Bin and its conjugate partner: cosine and sine coordinates.
    Pair(usize, usize),
}

/// Real orthonormal basis of cosines and sines on an `h×w` grid.
///
/// Coordinates are ordered by the lower bin index of each conjugate pair.
#[derive(Debug, Clone)]
pub struct RealFourierBasis<T: Real> {
    fft: Fft2<T>,
    slots: Vec<Slot>,
    /// Coordinate index → bin index it reads from.
    coord_bins: Vec<usize>,
}

impl<T: Real> RealFourierBasis<T> {
    pub fn new(h: usize, w: usize) -> Self {
        let fft = Fft2::new(h, w);
        let mut slots = Vec::new();
        let mut coord_bins = Vec::new();
        for b in 0..h * w {
            let (r, c) = (b / w, b % w);
            let p = ((h - r) % h) * w + (w - c) % w;
            if p == b {
                slots.push(Slot::Real(b));
                coord_bins.push(b);
            } else if b < p {
                slots.push(Slot::Pair(b, p));
                coord_bins.push(b);
                coord_bins.push(b);
            }
        }
        debug_assert_eq!(coord_bins.len(), h * w);
        Self { fft, slots, coord_bins }
    }

    pub fn len(&self) -> usize {
        self.fft.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn fft(&self) -> &Fft2<T> {
        &self.fft
    }

    /// Bin index feeding each coordinate, in coordinate order.
    pub fn coordinate_bins(&self) -> &[usize] {
        &self.coord_bins
    }

    /// Unitary spectrum `DFT(x)/√N`.
    pub fn spectrum(&self, x: &[T]) -> Vec<C<T>> {
        let mut s = self.fft.forward_real(x);
        let k = T::one() / T::from_usize_lossy(self.len()).sqrt();
        for z in s.iter_mut() {
            *z = *z * k;
        }
        s
    }

    /// Real signal from a Hermitian unitary spectrum.
    pub fn signal(&self, spec: &[C<T>]) -> Vec<T> {
        let mut buf = spec.to_vec();
        self.fft.inverse(&mut buf);
        let k = T::from_usize_lossy(self.len()).sqrt();
        buf.into_iter().map(|z| z.re * k).collect()
    }

    pub fn coords_from_spectrum(&self, spec: &[C<T>]) -> Vec<T> {
        let r2 = T::SQRT_2();
        let mut out = Vec::with_capacity(self.len());
        for slot in &self.slots {
            match *slot {
                Slot::Real(b) => out.push(spec[b].re),
                Slot::Pair(b, _) => {
                    out.push(r2 * spec[b].re);
                    out.push(-r2 * spec[b].im);
                }
            }
        }
        out
    }

    pub fn spectrum_from_coords(&self, coords: &[T]) -> Vec<C<T>> {
        let r2 = T::SQRT_2();
        let mut spec = vec![C::new(T::zero(), T::zero()); self.len()];
        let mut i = 0;
        for slot in &self.slots {
            match *slot {
                Slot::Real(b) => {
                    spec[b] = C::new(coords[i], T::zero());
                    i += 1;
                }
                Slot::Pair(b, p) => {
                    let z = C::new(coords[i] / r2, -coords[i + 1] / r2);
                    spec[b] = z;
                    spec[p] = z.conj();
                    i += 2;
                }
            }
        }
        spec
    }

    /// `Vᵀx`
    pub fn analyze(&self, x: &[T]) -> Vec<T> {
        self.coords_from_spectrum(&self.spectrum(x))
    }

    /// `V·c`
    pub fn synthesize(&self, coords: &[T]) -> Vec<T> {
        self.signal(&self.spectrum_from_coords(coords))
    }
}
