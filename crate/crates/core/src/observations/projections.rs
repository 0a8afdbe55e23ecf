use super::linear::null_floor;
use super::{check_len, CircularConvolution, LinearOperator, ObservationError};
use crate::fourier::C;
use crate::scalar::Real;

/// `A†y + (I − A†A)x` through the operator's SVD.
pub fn project_linear<T: Real>(x: &[T], a: &dyn LinearOperator<T>, y: &[T]) -> Result<Vec<T>, ObservationError> {
    a.project(x, y)
}

pub fn project_identity_block<T: Real>(x_ta: &[T], y_prime: &[T], m_y: usize) -> Result<Vec<T>, ObservationError> {
    if m_y > x_ta.len() {
        return Err(ObservationError::Shape(format!("m_y={m_y} exceeds dimension {}", x_ta.len())));
    }
    check_len("y'", m_y, y_prime.len())?;
    let mut out = x_ta.to_vec();
    out[..m_y].copy_from_slice(y_prime);
    Ok(out)
}

/// Spreads the mixture residual equally over the `tracks` stacked tracks.
pub fn project_sum<T: Real>(x: &[T], y: &[T], tracks: usize) -> Result<Vec<T>, ObservationError> {
    if tracks == 0 || x.len() != tracks * y.len() {
        return Err(ObservationError::Shape(format!(
            "{} values do not form {tracks} tracks of length {}",
            x.len(),
            y.len()
        )));
    }
    let n = y.len();
    let k = T::from_usize_lossy(tracks);
    let mut out = x.to_vec();
    for j in 0..n {
        let total: T = (0..tracks).map(|t| x[t * n + j]).sum();
        let corr = (y[j] - total) / k;
        for t in 0..tracks {
            out[t * n + j] = x[t * n + j] + corr;
        }
    }
    Ok(out)
}

pub fn project_mask<T: Real>(x: &[T], y: &[T], mask: &[bool]) -> Result<Vec<T>, ObservationError> {
    check_len("y", x.len(), y.len())?;
    check_len("mask", x.len(), mask.len())?;
    Ok(x.iter().zip(y).zip(mask).map(|((&xi, &yi), &m)| if m { yi } else { xi }).collect())
}

/// Adds `y_b − mean(x_b)` to every pixel of each `k×k` block.
pub fn project_avgpool<T: Real>(x: &[T], y: &[T], h: usize, w: usize, k: usize) -> Result<Vec<T>, ObservationError> {
    if k == 0 || !h.is_multiple_of(k) || !w.is_multiple_of(k) {
        return Err(ObservationError::Shape(format!("{h}x{w} image is not divisible by {k}")));
    }
    check_len("image", h * w, x.len())?;
    let (bh, bw) = (h / k, w / k);
    check_len("pooled image", bh * bw, y.len())?;
    let n = T::from_usize_lossy(k * k);
    let mut out = x.to_vec();
    for br in 0..bh {
        for bc in 0..bw {
            let pixels = || (0..k * k).map(|i| (br * k + i / k) * w + bc * k + i % k);
            let m = pixels().map(|p| x[p]).sum::<T>() / n;
            let corr = y[br * bw + bc] - m;
            for p in pixels() {
                out[p] = x[p] + corr;
            }
        }
    }
    Ok(out)
}

/// Replaces every range-space Fourier bin of `x` by `ŷ/K̂`.
pub fn project_circular_deblur<T: Real>(
    x: &[T],
    op: &CircularConvolution<T>,
    y: &[T],
) -> Result<Vec<T>, ObservationError> {
    let (h, w) = op.shape();
    check_len("x", h * w, x.len())?;
    check_len("y", h * w, y.len())?;
    let fft = crate::fourier::Fft2::<T>::new(h, w);
    let transfer = op.transfer();
    let mags: Vec<T> = transfer.iter().map(|z| z.norm()).collect();
    let floor = null_floor(&mags);
    let mut xs = fft.forward_real(x);
    let ys = fft.forward_real(y);
    for b in 0..xs.len() {
        if mags[b] > floor {
            xs[b] = ys[b] / transfer[b];
        }
    }
    fft.inverse(&mut xs);
    Ok(xs.into_iter().map(|z: C<T>| z.re).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::observations::DenseOperator;

    #[test]
    fn identity_block_examples() {
        assert_eq!(project_identity_block(&[1.0, 2.0, 3.0], &[9.0], 1).unwrap(), vec![9.0, 2.0, 3.0]);
        assert_eq!(project_identity_block(&[1.0, 2.0], &[], 0).unwrap(), vec![1.0, 2.0]);
        assert_eq!(project_identity_block(&[1.0, 2.0], &[4.0, 5.0], 2).unwrap(), vec![4.0, 5.0]);
        assert!(project_identity_block(&[1.0], &[4.0, 5.0], 2).is_err());
    }

    #[test]
    fn sum_examples() {
        assert_eq!(project_sum(&[1.0, 1.0, 1.0, 1.0], &[4.0], 4).unwrap(), vec![1.0; 4]);
        assert_eq!(project_sum(&[0.0; 4], &[4.0], 4).unwrap(), vec![1.0; 4]);
        assert_eq!(project_sum(&[2.0, 0.0, 0.0, 0.0], &[0.0], 4).unwrap(), vec![1.5, -0.5, -0.5, -0.5]);
        assert!(project_sum(&[0.0; 5], &[0.0, 0.0], 2).is_err());
    }

    #[test]
    fn mask_examples() {
        assert_eq!(project_mask(&[3.0, 4.0], &[8.0, 0.0], &[true, false]).unwrap(), vec![8.0, 4.0]);
        assert_eq!(project_mask(&[3.0, 4.0], &[8.0, 9.0], &[true, true]).unwrap(), vec![8.0, 9.0]);
        assert_eq!(project_mask(&[3.0, 4.0], &[8.0, 9.0], &[false, false]).unwrap(), vec![3.0, 4.0]);
    }

    #[test]
    fn avgpool_examples() {
        assert_eq!(project_avgpool(&[0.0; 4], &[1.0], 2, 2, 2).unwrap(), vec![1.0; 4]);
        assert_eq!(project_avgpool(&[4.0, 0.0, 0.0, 0.0], &[0.0], 2, 2, 2).unwrap(), vec![3.0, -1.0, -1.0, -1.0]);
        assert_eq!(project_avgpool(&[0.5; 4], &[0.5], 2, 2, 2).unwrap(), vec![0.5; 4]);
        assert!(project_avgpool(&[0.0; 6], &[0.0], 2, 3, 2).is_err());
    }

    #[test]
    fn linear_coordinate_replacement() {
        let a = DenseOperator::new(Matrix::from_rows(&[vec![1.0f64, 0.0]]).unwrap()).unwrap();
        let p = project_linear(&[5.0, 7.0], &a, &[2.0]).unwrap();
        assert!((p[0] - 2.0).abs() < 1e-14 && (p[1] - 7.0).abs() < 1e-14);
    }

    #[test]
    fn deblur_examples() {
        let delta = CircularConvolution::new_1d(6, &[1.0]).unwrap();
        let y = [0.1, -0.4, 0.3, 0.9, 0.0, -1.0];
        let p = project_circular_deblur(&[5.0; 6], &delta, &y).unwrap();
        assert!(crate::linalg::dist(&p, &y) < 1e-12);

        let bx = CircularConvolution::new_1d(8, &[0.5, 0.5]).unwrap();
        let x: Vec<f64> = (0..8).map(|i| (i as f64).cos()).collect();
        let y = bx.apply(&(0..8).map(|i| (i as f64 * 0.3).sin()).collect::<Vec<_>>());
        let p = project_circular_deblur(&x, &bx, &y).unwrap();
        assert!(crate::linalg::dist(&bx.apply(&p), &y) < 1e-8);
        let dense = DenseOperator::new(bx.to_dense()).unwrap();
        assert!(crate::linalg::dist(&p, &dense.project(&x, &y).unwrap()) < 1e-8);
        let feasible = project_circular_deblur(&p, &bx, &y).unwrap();
        assert!(crate::linalg::dist(&feasible, &p) < 1e-12);
    }
}
