//! End-to-end acceptance checks. Runs without the libtest harness so that one
//! PASS/FAIL line per criterion is always printed; exits non-zero on failure.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use projdiff::linalg::{dist, max_abs, median, Matrix};
use projdiff::observations::{
    equivalent_noise, project_hdr, project_linear, AvgPoolOperator, CircularConvolution, DenseOperator, Geometry,
    HdrOperator, IdentityBlock, LinearOperator, MaskOperator, NonlinearOperator, PhaseRetrieval, SumOperator, TaskKind,
};
use projdiff::oracle::{
    affine_full_gradient_x0, affine_full_gradient_xta, analytic_gaussian_posterior, finite_diff_grad, grid_map,
    mc_transition_check, objective_x0, objective_xta, si_sdr_improvement, AffineTerm, GridSearchSpec,
};
use projdiff::priors::{
    gaussian_denoiser, gmm_denoiser, ve_denoiser, Denoiser, GaussianPrior, GmmPrior, NoiseLevel, ProductDenoiser,
    ProductPart,
};
use projdiff::rng::{normal_vec, stream_rng, Stream};
use projdiff::schedules::{
    build_geometric_ve, build_linear_vp, ddim_coefficients, equivalent_step, SigmaTildeRule, VeSchedule, VpSchedule,
};
use projdiff::solver::{
    full_direction_x0, grad_x0_truncated, grad_xta_truncated, restricted_encode_ve, run_ve, run_ve_restricted, solve,
    NonlinearProjection, Observation, Phase, Problem, Schedule, SolverConfig, XiRule,
};

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn linear_problem(
    schedule: Schedule<f64>,
    denoiser: Arc<dyn Denoiser<f64>>,
    op: Arc<dyn LinearOperator<f64>>,
    y: Vec<f64>,
    sigma: f64,
) -> Problem<f64> {
    Problem { schedule, denoiser, observation: Observation::Linear { op, y, sigma } }
}

fn vp100() -> VpSchedule<f64> {
    build_linear_vp(100, 1e-3, 0.2).unwrap()
}

fn ve100() -> VeSchedule<f64> {
    build_geometric_ve(100, 0.01, 10.0, 0.01).unwrap()
}

fn equivalent_step_identity() -> Check {
    let s = build_linear_vp(1000, 1e-4, 0.02).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let sigma: f64 = rng.random_range(0.0..=s.sigma_max());
        let step = equivalent_step(&s, sigma).map_err(err)?;
        worst = worst.max((step.alpha_bar_ta * (1.0 + sigma * sigma) - 1.0).abs());
    }
    ensure(worst <= 1e-12, format!("max deviation {worst:e}"))?;
    Ok(format!("max |ᾱ(1+σ²)−1| = {worst:.1e} over 100 σ"))
}

fn transition_monte_carlo() -> Check {
    let s = vp100();
    let mut cases = Vec::new();
    for (sigma, offset) in [(1.0, 0i64), (1.0, -10), (0.3, 1), (2.0, 3), (0.3, -100)] {
        let step = equivalent_step(&s, sigma).map_err(err)?;
        let t = (step.t0 as i64 + offset).max(1) as usize;
        cases.push((step, t));
    }
    let mut worst: f64 = 0.0;
    for (k, (step, t)) in cases.iter().enumerate() {
        let c = ddim_coefficients(&s, step, SigmaTildeRule::Ddpm);
        let r = mc_transition_check(&s, &c, &[0.4], &[-0.7], *t, 100_000, 11 + k as u64).map_err(err)?;
        worst = worst.max(r.max_abs_z());
        ensure(r.passed(3.0), format!("t={t}, t_a={:.3}: max |z| = {:.2}", step.t_a, r.max_abs_z()))?;
    }
    let pairs: Vec<String> = cases.iter().map(|(st, t)| format!("({t}, {:.2})", st.t_a)).collect();
    Ok(format!("max |z| = {worst:.2} for (t, t_a) = {}", pairs.join(" ")))
}

fn gradient_fidelity() -> Check {
    let s = vp100();
    let step = equivalent_step(&s, 0.5).map_err(err)?;
    let c = ddim_coefficients(&s, &step, SigmaTildeRule::Ddpm);
    let prior = GaussianPrior::new(vec![0.3, -0.1, 0.7], vec![0.5, 1.2, 0.2]).map_err(err)?;
    let den = gaussian_denoiser(prior.clone());
    let (x0, xta) = (vec![0.2, -0.4, 1.1], vec![0.1, 0.5, -0.3]);
    let a = step.alpha_bar_ta;
    let (mut fd_worst, mut trunc_worst, mut solver_worst): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for (k, t) in [1, step.t0 / 2, step.t0, step.t0 + 1, step.t0 + 20].into_iter().enumerate() {
        let term = AffineTerm { prior: &prior, schedule: &s, coeffs: &c, t };
        let j = prior.jacobian_diag(NoiseLevel::Vp(s.alpha_bar(t))).map_err(err)?;
        let seed = 100 + k as u64;
        let mut draw = ChaCha8Rng::seed_from_u64(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (exact, fd, scaled_trunc, rel) = if step.above(t) {
            let eps: Vec<f64> = normal_vec(&mut draw, 3);
            let eps_p: Vec<f64> = normal_vec(&mut draw, 3);
            let exact = affine_full_gradient_xta(&term, &xta, &eps, &eps_p).map_err(err)?;
            let fd = finite_diff_grad(&|v: &[f64]| objective_xta(&term, v, &eps, &eps_p), &xta, None).map_err(err)?;
            let trunc = grad_xta_truncated(&xta, t, &s, &c, &den, &mut rng).map_err(err)?;
            let rho = (s.alpha_bar(t) / a).sqrt();
            let ratio = c.w(t).finite().unwrap() / c.g(t).finite().unwrap();
            let scaled: Vec<f64> = (0..3).map(|i| 2.0 * (1.0 - a.sqrt() * rho * j[i]) * trunc[i]).collect();
            let without_cross: Vec<f64> = (0..3).map(|i| exact[i] - ratio * rho * j[i] * eps[i]).collect();
            (exact, fd, scaled, without_cross)
        } else {
            let eps: Vec<f64> = normal_vec(&mut draw, 3);
            let exact = affine_full_gradient_x0(&term, &x0, &xta, &eps).map_err(err)?;
            let fd = finite_diff_grad(&|v: &[f64]| objective_x0(&term, v, &xta, &eps), &x0, None).map_err(err)?;
            let trunc = grad_x0_truncated(&x0, &xta, t, &s, &c, &den, &mut rng).map_err(err)?;
            let kappa = s.alpha_bar(t).sqrt() - c.gamma(t).unwrap() * a.sqrt() / (1.0 - a).sqrt();
            let scaled: Vec<f64> = (0..3).map(|i| 2.0 * (1.0 - kappa * j[i]) * trunc[i]).collect();
            let half = full_direction_x0(&x0, &xta, t, &s, &c, &den, &eps).map_err(err)?;
            let doubled: Vec<f64> = half.iter().map(|v| 2.0 * v).collect();
            solver_worst = solver_worst.max(dist(&doubled, &exact) / projdiff::linalg::norm(&exact));
            (exact.clone(), fd, scaled, exact)
        };
        let scale = projdiff::linalg::norm(&exact);
        fd_worst = fd_worst.max(dist(&fd, &exact) / scale);
        trunc_worst = trunc_worst.max(dist(&scaled_trunc, &rel) / (1.0 + projdiff::linalg::norm(&rel)));
    }
    ensure(fd_worst <= 1e-6, format!("finite differences off by {fd_worst:e} (relative)"))?;
    ensure(trunc_worst <= 1e-8, format!("truncated gradient off by {trunc_worst:e}"))?;
    ensure(solver_worst <= 1e-10, format!("solver full gradient off by {solver_worst:e}"))?;
    Ok(format!(
        "finite-diff rel err {fd_worst:.1e}, truncated vs full {trunc_worst:.1e}, solver vs oracle {solver_worst:.1e}"
    ))
}

fn conjugate_gaussian() -> Check {
    let s = vp100();
    let y = 1.3;
    let den: Arc<dyn Denoiser<f64>> =
        Arc::new(gaussian_denoiser(GaussianPrior::new(vec![0.0], vec![1.0]).map_err(err)?));
    let op: Arc<dyn LinearOperator<f64>> = Arc::new(IdentityBlock::new(1, 1).map_err(err)?);
    let p = linear_problem(Schedule::Vp(s.clone()), den, op.clone(), vec![y], 1.0);
    let exact =
        analytic_gaussian_posterior(&GaussianPrior::new(vec![0.0], vec![1.0]).map_err(err)?, op.as_ref(), &[y], 1.0)
            .map_err(err)?;
    let mut outs = Vec::new();
    for seed in 0..20 {
        let c = SolverConfig {
            eta1: 0.002,
            repetitions: 125,
            sigma_tilde_rule: SigmaTildeRule::Ddpm,
            seed,
            ..Default::default()
        };
        outs.push(solve(&p, &c).map_err(err)?.x0[0]);
    }
    let err1 = (median(&outs) - exact.mean[0]).abs();
    ensure(err1 <= 2e-2, format!("1-D median {} vs {}", median(&outs), exact.mean[0]))?;

    let prior = GaussianPrior::new(vec![0.2, -0.3], vec![1.0, 0.5]).map_err(err)?;
    let den: Arc<dyn Denoiser<f64>> = Arc::new(gaussian_denoiser(prior.clone()));
    let op: Arc<dyn LinearOperator<f64>> =
        Arc::new(DenseOperator::new(Matrix::from_rows(&[vec![1.0, 0.0]]).map_err(err)?).map_err(err)?);
    let exact2 = analytic_gaussian_posterior(&prior, op.as_ref(), &[0.5], 0.0).map_err(err)?;
    let p = linear_problem(Schedule::Vp(s), den, op, vec![0.5], 0.0);
    let mut xs = (Vec::new(), Vec::new());
    for seed in 0..20 {
        let c = SolverConfig { eta1: 0.002, repetitions: 125, seed, ..Default::default() };
        let x = solve(&p, &c).map_err(err)?.x0;
        xs.0.push(x[0]);
        xs.1.push(x[1]);
    }
    let med = [median(&xs.0), median(&xs.1)];
    let err2 = dist(&med, &exact2.mean);
    ensure(err2 <= 2e-2, format!("2-D median {med:?} vs {:?}", exact2.mean))?;
    Ok(format!("1-D median error {err1:.1e}; 2-D noise-free median error {err2:.1e}"))
}

fn gmm_map() -> Check {
    let prior = GmmPrior::new(vec![0.5, 0.5], vec![vec![-1.0, -1.0], vec![1.0, 1.0]], vec![0.1, 0.1]).map_err(err)?;
    let (y, sigma) = (0.8, 0.5);
    let spec = GridSearchSpec::new(vec![[-3.0, 3.0], [-3.0, 3.0]], 0.01);
    let map = grid_map(&prior, &|x| vec![x[0]], &[y], sigma, &spec).map_err(err)?;
    let den: Arc<dyn Denoiser<f64>> = Arc::new(gmm_denoiser(prior));
    let op: Arc<dyn LinearOperator<f64>> =
        Arc::new(DenseOperator::new(Matrix::from_rows(&[vec![1.0, 0.0]]).map_err(err)?).map_err(err)?);
    let p = linear_problem(Schedule::Vp(vp100()), den, op, vec![y], sigma);
    let mut errs = Vec::new();
    for seed in 0..20 {
        let c = SolverConfig {
            eta1: 0.002,
            eta2: 0.01,
            repetitions: 125,
            sigma_tilde_rule: SigmaTildeRule::Ddpm,
            seed,
            ..Default::default()
        };
        errs.push(dist(&solve(&p, &c).map_err(err)?.x0, &map));
    }
    let m = median(&errs);
    ensure(m <= 5e-2, format!("median distance {m} to MAP {map:?}"))?;
    Ok(format!("median distance {m:.3} to grid MAP ({:.2}, {:.2})", map[0], map[1]))
}

/// Pseudo-inverse projection and an orthonormal null-space basis (as columns).
fn pinv_projection(a: &Matrix<f64>, x: &[f64], y: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
    let m = DMatrix::from_row_slice(a.rows(), a.cols(), a.data());
    let pinv = m.clone().pseudo_inverse(1e-10).unwrap();
    let xv = nalgebra::DVector::from_column_slice(x);
    let r = &m * &xv - nalgebra::DVector::from_column_slice(y);
    let eig = (m.transpose() * &m).symmetric_eigen();
    let top = eig.eigenvalues.max();
    let null: Vec<_> = (0..a.cols())
        .filter(|&k| eig.eigenvalues[k] <= 1e-10 * top)
        .map(|k| eig.eigenvectors.column(k).into_owned())
        .collect();
    let basis = if null.is_empty() { DMatrix::zeros(a.cols(), 0) } else { DMatrix::from_columns(&null) };
    ((xv - pinv * r).as_slice().to_vec(), basis)
}

fn projection_suite() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let dense = {
        let rows: Vec<Vec<f64>> = (0..5).map(|_| normal_vec(&mut rng, 8)).collect();
        DenseOperator::new(Matrix::from_rows(&rows).unwrap()).unwrap()
    };
    let mask: Vec<bool> = (0..8).map(|i| i % 3 != 1).collect();
    let ops: Vec<(&str, Box<dyn LinearOperator<f64>>)> = vec![
        ("dense", Box::new(dense)),
        ("identity_block", Box::new(IdentityBlock::new(8, 3).unwrap())),
        ("mask", Box::new(MaskOperator::new(mask).unwrap())),
        ("sum", Box::new(SumOperator::new(3, 4).unwrap())),
        ("avgpool", Box::new(AvgPoolOperator::new(4, 4, 2).unwrap())),
        ("circular_convolution", Box::new(CircularConvolution::gaussian(4, 4, 3, 0.8).unwrap())),
    ];
    let mut worst = [0.0f64; 3];
    for (name, op) in &ops {
        let n = op.input_dim();
        let dense_a = op.to_dense();
        for _ in 0..5 {
            let z: Vec<f64> = normal_vec(&mut rng, n);
            let y = op.apply(&z);
            let x: Vec<f64> = normal_vec(&mut rng, n);
            let p = op.project(&x, &y).map_err(err)?;
            let pp = op.project(&p, &y).map_err(err)?;
            worst[0] = worst[0].max(max_abs(&projdiff::linalg::sub(&p, &pp)));
            let feas = max_abs(&projdiff::linalg::sub(&op.apply(&p), &y));
            worst[1] = worst[1].max(feas);
            let (reference, null) = pinv_projection(&dense_a, &x, &y);
            let via_dense = project_linear(&x, &DenseOperator::new(dense_a.clone()).map_err(err)?, &y).map_err(err)?;
            worst[2] = worst[2].max(max_abs(&projdiff::linalg::sub(&p, &reference)));
            worst[2] = worst[2].max(max_abs(&projdiff::linalg::sub(&p, &via_dense)));
            let d = dist(&x, &p);
            for _ in 0..1000 {
                let w = nalgebra::DVector::from_vec(normal_vec(&mut rng, null.ncols()));
                let f: Vec<f64> = z.iter().zip((&null * w).iter()).map(|(a, b)| a + b).collect();
                ensure(d <= dist(&x, &f) + 1e-12, format!("{name}: a feasible point is closer than P(x)"))?;
            }
        }
        ensure(worst[0] <= 1e-10, format!("{name}: idempotence error {:e}", worst[0]))?;
        ensure(worst[1] <= 1e-8, format!("{name}: feasibility error {:e}", worst[1]))?;
        ensure(worst[2] <= 1e-8, format!("{name}: differs from dense SVD projection by {:e}", worst[2]))?;
    }

    let table: [(f64, f64, f64, f64); 9] = [
        // (x, y, noise-free, noisy)
        (0.9, 0.4, 0.2, 0.2),
        (0.3, 1.0, 0.5, 0.5),
        (0.7, 1.0, 0.7, 0.7),
        (-0.3, -1.0, -0.5, -0.5),
        (-0.8, -1.0, -0.8, -0.8),
        (0.1, 0.7, 0.35, 0.1),
        (0.3, 1.1, f64::NAN, 0.55),
        (0.8, 1.1, f64::NAN, 0.8),
        (-0.2, -1.3, f64::NAN, -0.65),
    ];
    let hdr = HdrOperator::new(1);
    for (x, y, clean, noisy) in table {
        if !clean.is_nan() {
            let p = project_hdr(&[x], &[y], false).map_err(err)?[0];
            ensure(p == clean, format!("hdr noise-free P({x}, {y}) = {p}, expected {clean}"))?;
            let again = NonlinearOperator::<f64>::project(&hdr, &[p], &[y], false).map_err(err)?[0];
            ensure(again == p, "hdr projection is not idempotent")?;
            ensure(NonlinearOperator::<f64>::forward(&hdr, &[p])[0] == y, "hdr projection is infeasible")?;
        } else {
            ensure(project_hdr(&[x], &[y], false).is_err(), "hdr accepted |y| > 1 without noise")?;
        }
        let p = project_hdr(&[x], &[y], true).map_err(err)?[0];
        ensure(p == noisy, format!("hdr noisy P({x}, {y}) = {p}, expected {noisy}"))?;
    }
    Ok(format!(
        "6 linear kinds: idempotence {:.1e}, feasibility {:.1e}, dense-SVD {:.1e}, 1000 feasible points each; HDR case table exact",
        worst[0], worst[1], worst[2]
    ))
}

fn equivalent_noise_constants() -> Check {
    for sigma in [0.0, 0.05, 0.1, 0.37] {
        let sr =
            equivalent_noise(TaskKind::Sr, sigma, &Geometry { factor: Some(4), ..Default::default() }).map_err(err)?;
        ensure(sr == 4.0 * sigma, format!("sr: {sr} vs {}", 4.0 * sigma))?;
        ensure(sr * sr == 16.0 * sigma * sigma, "sr: variance is not 16σ²")?;
        let geometry = Geometry { side: Some(256), padded_side: Some(384), ..Default::default() };
        let pr = equivalent_noise(TaskKind::Phase, sigma, &geometry).map_err(err)?;
        ensure(pr == 1.5 * sigma, format!("phase: {pr} vs {}", 1.5 * sigma))?;
        let hdr = equivalent_noise(TaskKind::Hdr, sigma, &Geometry::default()).map_err(err)?;
        ensure(hdr == sigma / 2.0, "hdr")?;
    }
    Ok("4σ (sr, 4×4), 1.5σ (phase, 256→384), σ/2 (hdr)".into())
}

fn phase_retrieval() -> Check {
    let op = Arc::new(PhaseRetrieval::<f64>::new(8, 4).map_err(err)?);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x: Vec<f64> = normal_vec(&mut rng, 64);
    let y: Vec<f64> = op.forward(&normal_vec(&mut rng, 64));
    let (_, spectrum) = op.project_with_spectrum(&x, &y).map_err(err)?;
    let feas = spectrum.iter().zip(&y).map(|(z, v)| (z.norm() - v).abs() / v.max(1.0)).fold(0.0, f64::max);
    ensure(feas <= 1e-12, format!("|z̃| differs from y by {feas:e}"))?;

    let s = build_linear_vp(1000, 1e-4, 0.02).map_err(err)?;
    let var = 0.05;
    let m1: Vec<f64> = (0..64).map(|i| if (i / 8 + i % 8) % 2 == 0 { 0.5 } else { -0.5 }).collect();
    let m2: Vec<f64> = m1.iter().map(|v| -0.5 * v + 0.2).collect();
    let mut ratios = Vec::new();
    for seed in 0..20u64 {
        let prior = GmmPrior::new(vec![0.5, 0.5], vec![m1.clone(), m2.clone()], vec![var, var]).map_err(err)?;
        let noise: Vec<f64> = normal_vec(&mut stream_rng(1000 + seed, Stream::Sample), 64);
        let x_true: Vec<f64> = m1.iter().zip(&noise).map(|(m, e)| m + var.sqrt() * e).collect();
        let y = op.forward(&x_true);
        let den: Arc<dyn Denoiser<f64>> = Arc::new(gmm_denoiser(prior));
        let eps_t: Vec<f64> = normal_vec(&mut stream_rng(seed, Stream::Init), 64);
        let init = den.mu(&eps_t, NoiseLevel::Vp(s.alpha_bar(1000))).map_err(err)?;
        let before = dist(&op.forward(&init), &y);
        let p = Problem {
            schedule: Schedule::Vp(s.clone()),
            denoiser: den,
            observation: Observation::Nonlinear {
                op: op.clone(),
                y,
                sigma: 0.0,
                projection: NonlinearProjection::Exact,
            },
        };
        let r = solve(&p, &SolverConfig { eta1: 0.5, seed, ..Default::default() }).map_err(err)?;
        ratios.push(before / r.residual);
    }
    let m = median(&ratios);
    ensure(m >= 10.0, format!("median residual reduction {m:.1}×"))?;
    Ok(format!("spectral feasibility {feas:.1e}; median residual reduction {m:.1}× over 20 seeds"))
}

fn restricted_encoding() -> Check {
    let s = ve100();
    let t = 60;
    let xi = s.sigma_bar(t - 1);
    let x0 = [0.3, -0.8];
    let eps0: Vec<f64> = normal_vec(&mut ChaCha8Rng::seed_from_u64(9), 2);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let n = 100_000;
    let (mut sum, mut sq) = ([0.0; 2], [0.0; 2]);
    for _ in 0..n {
        let x = restricted_encode_ve(&x0, &eps0, t, xi, &s, &mut rng).map_err(err)?;
        for i in 0..2 {
            sum[i] += x[i];
            sq[i] += x[i] * x[i];
        }
    }
    let sd = (s.sigma_bar(t).powi(2) - xi * xi).sqrt();
    let mut z_worst: f64 = 0.0;
    for i in 0..2 {
        let mean = sum[i] / n as f64;
        let std = (sq[i] / n as f64 - mean * mean).sqrt();
        z_worst = z_worst.max(((mean - x0[i] - xi * eps0[i]) / (sd / (n as f64).sqrt())).abs());
        z_worst = z_worst.max(((std - sd) / (sd / (2.0 * n as f64).sqrt())).abs());
    }
    ensure(z_worst <= 3.0, format!("variance law: max |z| = {z_worst:.2}"))?;

    let dim = 16;
    let g = GmmPrior::new(vec![0.5, 0.5], vec![vec![-1.0], vec![1.0]], vec![0.05, 0.05]).map_err(err)?;
    let coord: Arc<dyn Denoiser<f64>> = Arc::new(ve_denoiser(g));
    let den: Arc<dyn Denoiser<f64>> = Arc::new(ProductDenoiser::coordinatewise(dim, coord).map_err(err)?);
    let op: Arc<dyn LinearOperator<f64>> = Arc::new(MaskOperator::new((0..dim).map(|i| i < 2).collect()).map_err(err)?);
    let mut y = vec![0.0; dim];
    (y[0], y[1]) = (1.0, -1.0);
    let p = linear_problem(Schedule::Ve(s), den, op, y, 0.0);

    let base = SolverConfig { eta1: 0.5, beta: 0.9, seed: 4, ..Default::default() };
    let plain = run_ve(&p, &base).map_err(err)?;
    let zero = run_ve_restricted(&p, &SolverConfig { xi_rule: XiRule::Constant(0.0), ..base.clone() }).map_err(err)?;
    ensure(plain.x0 == zero.x0 && plain.trace == zero.trace, "ξ = 0 does not reduce to the plain VE loop")?;

    let mut diversity = Vec::new();
    for rule in [XiRule::Off, XiRule::PrevLevel, XiRule::FullLevel] {
        let outs: Vec<Vec<f64>> = (0..30u64)
            .map(|seed| {
                let c = SolverConfig { xi_rule: rule, seed, encode_seed: Some(1), ..base.clone() };
                solve(&p, &c).map(|r| r.x0)
            })
            .collect::<Result<_, _>>()
            .map_err(err)?;
        let mut spread = 0.0;
        for j in 2..dim {
            let col: Vec<f64> = outs.iter().map(|o| o[j]).collect();
            spread += projdiff::linalg::std_dev(&col);
        }
        diversity.push(spread / (dim - 2) as f64);
    }
    ensure(
        diversity[0] > diversity[1] && diversity[1] > diversity[2],
        format!("diversity not decreasing: {diversity:.4?}"),
    )?;
    Ok(format!("variance law max |z| {z_worst:.2}; ξ=0 identical to plain VE; diversity {diversity:.3?}"))
}

fn toy_separation() -> Check {
    let n = 16;
    let s = ve100();
    let g1 = GmmPrior::new(vec![0.5, 0.5], vec![vec![-1.0], vec![1.0]], vec![0.01, 0.01]).map_err(err)?;
    let g2 = GmmPrior::new(vec![0.5, 0.5], vec![vec![-0.3], vec![0.3]], vec![0.01, 0.01]).map_err(err)?;
    let den: Arc<dyn Denoiser<f64>> = Arc::new(
        ProductDenoiser::new(vec![
            ProductPart { repeat: n, dim: 1, denoiser: Arc::new(ve_denoiser(g1)) },
            ProductPart { repeat: n, dim: 1, denoiser: Arc::new(ve_denoiser(g2)) },
        ])
        .map_err(err)?,
    );
    let op = Arc::new(SumOperator::new(2, n).map_err(err)?);
    let (mut positive, mut gains) = (0, Vec::new());
    for inst in 0..50u64 {
        let mut rng = stream_rng(5000 + inst, Stream::Sample);
        let mut x = vec![0.0; 2 * n];
        for j in 0..n {
            let e: Vec<f64> = normal_vec(&mut rng, 2);
            x[j] = if rng.random_bool(0.5) { 1.0 } else { -1.0 } + 0.1 * e[0];
            x[n + j] = if rng.random_bool(0.5) { 0.3 } else { -0.3 } + 0.1 * e[1];
        }
        let y = op.apply(&x);
        let split: Vec<f64> = y.iter().map(|v| v / 2.0).collect();
        let p = linear_problem(Schedule::Ve(s.clone()), den.clone(), op.clone(), y, 0.0);
        let c = SolverConfig { eta1: 0.5, beta: 0.5, repetitions: 5, seed: inst, ..Default::default() };
        let r = solve(&p, &c).map_err(err)?;
        let mut gain = 0.0;
        for k in 0..2 {
            let range = k * n..(k + 1) * n;
            gain += si_sdr_improvement(&x[range.clone()], &r.x0[range], &split).map_err(err)? / 2.0;
        }
        positive += usize::from(gain > 0.0);
        gains.push(gain);
    }
    ensure(positive >= 45, format!("{positive}/50 instances improved"))?;
    Ok(format!("{positive}/50 positive, median SI-SDRi {:.1} dB", median(&gains)))
}

fn determinism_and_ordering() -> Check {
    let den: Arc<dyn Denoiser<f64>> =
        Arc::new(gaussian_denoiser(GaussianPrior::new(vec![0.0], vec![1.0]).map_err(err)?));
    let op: Arc<dyn LinearOperator<f64>> = Arc::new(IdentityBlock::new(1, 1).map_err(err)?);
    let p = linear_problem(Schedule::Vp(vp100()), den, op, vec![1.3], 1.0);
    let c = SolverConfig { seed: 42, beta: 0.3, repetitions: 2, ..Default::default() };
    let (a, b) = (solve(&p, &c).map_err(err)?, solve(&p, &c).map_err(err)?);
    ensure(a == b, "reports differ for identical seeds")?;
    let bits = |r: &projdiff::SolveReport| -> Vec<u64> {
        r.x0.iter().chain(r.trace.iter().map(|row| &row.residual)).map(|v| v.to_bits()).collect()
    };
    ensure(bits(&a) == bits(&b), "reports are not bit-identical")?;
    let other = solve(&p, &SolverConfig { seed: 43, ..c.clone() }).map_err(err)?;
    ensure(other.x0 != a.x0, "different seeds gave the same result")?;

    let first_x0 = a.trace.iter().position(|r| r.phase != Phase::Aux).ok_or("trace has no x0 phase")?;
    ensure(first_x0 > 0, "no auxiliary phase recorded")?;
    ensure(a.trace[..first_x0].iter().all(|r| r.x0_delta == 0.0), "x0 moved during the auxiliary phase")?;
    ensure(a.trace[first_x0].phase == Phase::Reinit, "x0 phase does not start with re-initialisation")?;
    ensure(a.trace[first_x0..].iter().all(|r| r.phase != Phase::Aux), "auxiliary rows after re-initialisation")?;
    Ok(format!("bit-identical reports; {first_x0} auxiliary rows precede re-initialisation"))
}

type Criterion = (&'static str, f64, fn() -> Check);

fn main() {
    let criteria: [Criterion; 11] = [
        ("equivalent-step identity", 1.0, equivalent_step_identity),
        ("transition Monte-Carlo", 30.0, transition_monte_carlo),
        ("gradient fidelity", 5.0, gradient_fidelity),
        ("conjugate Gaussian solve", 20.0, conjugate_gaussian),
        ("GMM MAP recovery", 60.0, gmm_map),
        ("projection suite", 10.0, projection_suite),
        ("equivalent-noise constants", 1.0, equivalent_noise_constants),
        ("phase retrieval", 120.0, phase_retrieval),
        ("restricted encoding", 60.0, restricted_encoding),
        ("toy separation", 120.0, toy_separation),
        ("determinism and phase ordering", 5.0, determinism_and_ordering),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, budget, check)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = check();
        let secs = start.elapsed().as_secs_f64();
        let result = result.and_then(|msg| {
            if secs <= *budget {
                Ok(msg)
            } else {
                Err(format!("{msg}; took {secs:.1} s, budget {budget} s"))
            }
        });
        match result {
            Ok(msg) => println!("PASS {:>2} {name} ({secs:.2} s): {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL {:>2} {name} ({secs:.2} s): {msg}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
