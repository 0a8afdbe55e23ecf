use super::{check_len, OracleError};

/// Returned for an exact reconstruction.
pub const PSNR_CAP: f64 = 300.0;
pub const SI_SDR_EPS: f64 = 1e-8;

/// Peak signal-to-noise ratio in dB.
pub fn psnr(estimate: &[f64], reference: &[f64], peak: f64) -> Result<f64, OracleError> {
    check_len("estimate", reference.len(), estimate.len())?;
    if reference.is_empty() {
        return Err(OracleError::Length("empty signal".into()));
    }
    if !(peak > 0.0) {
        return Err(OracleError::Length(format!("peak={peak} must be positive")));
    }
    let mse = estimate.iter().zip(reference).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / reference.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (peak * peak / mse).log10()).min(PSNR_CAP))
}

/// Scale-invariant signal-to-distortion ratio in dB with
/// `α = (xᵀx̂ + ε)/(‖x‖² + ε)`.
pub fn si_sdr(truth: &[f64], estimate: &[f64]) -> Result<f64, OracleError> {
    check_len("estimate", truth.len(), estimate.len())?;
    let xx: f64 = truth.iter().map(|r| r * r).sum();
    let alpha = (truth.iter().zip(estimate).map(|(x, e)| x * e).sum::<f64>() + SI_SDR_EPS) / (xx + SI_SDR_EPS);
    let (mut target, mut noise) = (0.0, 0.0);
    for (x, e) in truth.iter().zip(estimate) {
        let s = alpha * x;
        target += s * s;
        noise += (s - e) * (s - e);
    }
    Ok(10.0 * ((target + SI_SDR_EPS) / (noise + SI_SDR_EPS)).log10())
}

/// `SI-SDR(x, x̂) − SI-SDR(x, y)` for the unprocessed mixture `y`.
pub fn si_sdr_improvement(truth: &[f64], estimate: &[f64], mixture: &[f64]) -> Result<f64, OracleError> {
    Ok(si_sdr(truth, estimate)? - si_sdr(truth, mixture)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_values() {
        assert_eq!(psnr(&[0.5, 0.5], &[0.5, 0.5], 2.0).unwrap(), PSNR_CAP);
        let p = psnr(&[0.1, 1.1, -0.9], &[0.0, 1.0, -1.0], 1.0).unwrap();
        assert!((p - 20.0).abs() < 1e-9);
        assert!(psnr(&[0.0], &[0.0, 1.0], 1.0).is_err());
        assert!(psnr(&[0.0], &[1.0], 0.0).is_err());
    }

    #[test]
    fn si_sdr_values() {
        let x = [1.0, -2.0, 0.5, 3.0];
        let perfect = si_sdr(&x, &x).unwrap();
        let xx: f64 = x.iter().map(|v| v * v).sum();
        assert!((perfect - 10.0 * ((xx + SI_SDR_EPS) / SI_SDR_EPS).log10()).abs() < 1e-6);
        // the ε floor makes a scaled perfect estimate gain 20·log10(2)
        let doubled: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        assert!((si_sdr(&x, &doubled).unwrap() - perfect - 20.0 * 2f64.log10()).abs() < 1e-3);

        let e = [1.1, -1.9, 0.4, 3.2];
        let (xb, eb): (Vec<f64>, Vec<f64>) = x.iter().zip(&e).map(|(a, b)| (100.0 * a, 100.0 * b)).unzip();
        for k in [0.5, 7.0] {
            let scaled: Vec<f64> = eb.iter().map(|v| k * v).collect();
            assert!((si_sdr(&xb, &eb).unwrap() - si_sdr(&xb, &scaled).unwrap()).abs() < 1e-9);
        }
        assert!(si_sdr_improvement(&x, &x, &e).unwrap() > 0.0);
        assert!(si_sdr(&x, &[1.0]).is_err());
    }
}
