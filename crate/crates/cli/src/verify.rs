//! Registry of self-checks run by `projdiff verify`.

use std::sync::Arc;
use std::time::Instant;

use projdiff::linalg::{dist, max_abs, median, std_dev, sub, Matrix};
use projdiff::observations::{
    equivalent_noise, project_hdr, project_linear, AvgPoolOperator, CircularConvolution, DenseOperator, Geometry,
    IdentityBlock, LinearOperator, MaskOperator, NonlinearOperator, PhaseRetrieval, SumOperator, TaskKind,
};
use projdiff::oracle::{
    affine_full_gradient_x0, affine_full_gradient_xta, analytic_gaussian_posterior, finite_diff_grad, grid_map,
    mc_transition_check, objective_x0, objective_xta, si_sdr_improvement, AffineTerm, GridSearchSpec, TransitionCase,
};
use projdiff::priors::{
    gaussian_denoiser, gmm_denoiser, ve_denoiser, Denoiser, GaussianPrior, GmmPrior, NoiseLevel, ProductDenoiser,
    ProductPart,
};
use projdiff::rng::{normal_vec, stream_rng, Stream};
use projdiff::schedules::{build_geometric_ve, build_linear_vp, ddim_coefficients, equivalent_step, SigmaTildeRule};
use projdiff::solver::{
    grad_x0_truncated, grad_xta_truncated, restricted_encode_ve, run_ve, run_ve_restricted, solve, NonlinearProjection,
    Observation, Phase, Problem, Schedule, XiRule,
};
use projdiff::{SolverConfig, VeSchedule, VpSchedule};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

pub struct Context {
    pub seed: u64,
    /// Scales every `γ_t` of the transition checks by this factor.
    pub gamma_scale: Option<f64>,
}

type Outcome = Result<String, String>;

pub struct Check {
    pub name: &'static str,
    /// Extra names the filter accepts for this check's family.
    pub aliases: &'static [&'static str],
    run: fn(&Context) -> Outcome,
}

#[derive(Debug, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
    pub seed: u64,
}

#[derive(Debug, Serialize)]
pub struct VerifyReport {
    pub filter: Option<String>,
    pub seed: u64,
    pub passed: usize,
    pub failed: usize,
    pub checks: Vec<CheckResult>,
}

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

const TRANSITIONS: &[&str] = &["lemma1", "lemma2", "mc"];

pub fn registry() -> Vec<Check> {
    let c = |name, run| Check { name, aliases: &[], run };
    vec![
        c("schedules.equivalent_step", equivalent_step_identity),
        Check {
            name: "transitions.denoising",
            aliases: TRANSITIONS,
            run: |cx| transition(cx, TransitionCase::Denoising),
        },
        Check {
            name: "transitions.first_auxiliary",
            aliases: TRANSITIONS,
            run: |cx| transition(cx, TransitionCase::FirstAuxiliary),
        },
        Check {
            name: "transitions.auxiliary",
            aliases: TRANSITIONS,
            run: |cx| transition(cx, TransitionCase::Auxiliary),
        },
        c("gradients.finite_differences", gradient_finite_differences),
        c("gradients.truncation", gradient_truncation),
        c("solver.conjugate_1d", conjugate_1d),
        c("solver.conditional_2d", conditional_2d),
        c("solver.gmm_map", gmm_map),
        c("solver.determinism", determinism),
        c("solver.phase_ordering", phase_ordering),
        c("projections.linear", linear_projections),
        c("projections.hdr", hdr_table),
        c("noise.equivalent", equivalent_noise_constants),
        c("phase.feasibility", phase_feasibility),
        c("phase.residual_reduction", phase_residual_reduction),
        c("encoding.variance_law", variance_law),
        c("encoding.xi_zero", xi_zero),
        c("encoding.diversity", diversity),
        c("separation.toy", separation),
    ]
}

impl Check {
    /// Glob patterns match the full name, the family or an alias; plain text
    /// matches any of them as a prefix.
    pub fn matches(&self, filter: &str) -> Result<bool, glob::PatternError> {
        let family = self.name.split('.').next().unwrap_or_default();
        let names = std::iter::once(self.name).chain(std::iter::once(family)).chain(self.aliases.iter().copied());
        if filter.contains(['*', '?', '[']) {
            let p = glob::Pattern::new(filter)?;
            Ok(names.into_iter().any(|n| p.matches(n)))
        } else {
            Ok(names.into_iter().any(|n| n.starts_with(filter)))
        }
    }
}

pub fn run_checks(checks: &[&Check], cx: &Context) -> Vec<CheckResult> {
    checks
        .par_iter()
        .map(|c| {
            let start = Instant::now();
            let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| (c.run)(cx)))
                .unwrap_or_else(|_| Err("check panicked".into()));
            let seconds = start.elapsed().as_secs_f64();
            let (passed, detail) = match outcome {
                Ok(d) => (true, d),
                Err(d) => (false, d),
            };
            CheckResult { name: c.name, passed, detail, seconds, seed: cx.seed }
        })
        .collect()
}

fn vp100() -> VpSchedule {
    build_linear_vp(100, 1e-3, 0.2).unwrap()
}

fn ve100() -> VeSchedule {
    build_geometric_ve(100, 0.01, 10.0, 0.01).unwrap()
}

fn linear(
    schedule: Schedule<f64>,
    denoiser: Arc<dyn Denoiser<f64>>,
    op: Arc<dyn LinearOperator<f64>>,
    y: Vec<f64>,
    sigma: f64,
) -> Problem<f64> {
    Problem { schedule, denoiser, observation: Observation::Linear { op, y, sigma } }
}

fn dense(rows: &[Vec<f64>]) -> Result<Arc<dyn LinearOperator<f64>>, String> {
    Ok(Arc::new(DenseOperator::new(Matrix::from_rows(rows).map_err(err)?).map_err(err)?))
}

fn medians(runs: &[Vec<f64>]) -> Vec<f64> {
    (0..runs[0].len()).map(|i| median(&runs.iter().map(|r| r[i]).collect::<Vec<_>>())).collect()
}

fn equivalent_step_identity(cx: &Context) -> Outcome {
    let s = build_linear_vp(1000, 1e-4, 0.02).map_err(err)?;
    let mut rng = stream_rng(cx.seed, Stream::Sample);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let sigma: f64 = rng.random_range(0.0..=s.sigma_max());
        let step = equivalent_step(&s, sigma).map_err(err)?;
        worst = worst.max((step.alpha_bar_ta * (1.0 + sigma * sigma) - 1.0).abs());
    }
    ensure(worst <= 1e-12, format!("max deviation {worst:e}"))?;
    Ok(format!("max |ᾱ(1+σ²)−1| = {worst:.1e}"))
}

fn transition(cx: &Context, case: TransitionCase) -> Outcome {
    let s = vp100();
    let pairs: &[(f64, i64)] = match case {
        TransitionCase::Denoising => &[(1.0, 0), (1.0, -10), (0.3, -100)],
        TransitionCase::FirstAuxiliary => &[(0.3, 1)],
        TransitionCase::Auxiliary => &[(2.0, 3)],
    };
    let mut worst: f64 = 0.0;
    for (k, &(sigma, offset)) in pairs.iter().enumerate() {
        let step = equivalent_step(&s, sigma).map_err(err)?;
        let t = (step.t0 as i64 + offset).max(1) as usize;
        let mut c = ddim_coefficients(&s, &step, SigmaTildeRule::Ddpm);
        if let Some(g) = cx.gamma_scale {
            c = c.with_gamma_scaled(g);
        }
        let r = mc_transition_check(&s, &c, &[0.4], &[-0.7], t, 100_000, cx.seed + 11 + k as u64).map_err(err)?;
        ensure(r.case == case, format!("t={t} classified as {:?}", r.case))?;
        worst = worst.max(r.max_abs_z());
        ensure(r.passed(3.0), format!("t={t}, t_a={:.3}: max |z| = {:.2}", step.t_a, r.max_abs_z()))?;
    }
    Ok(format!("max |z| = {worst:.2} over {} step(s), 1e5 samples", pairs.len()))
}

struct GradientSetup {
    s: VpSchedule,
    c: projdiff::DdimCoefficients,
    prior: GaussianPrior<f64>,
    ts: Vec<usize>,
}

fn gradient_setup() -> Result<GradientSetup, String> {
    let s = vp100();
    let step = equivalent_step(&s, 0.5).map_err(err)?;
    let c = ddim_coefficients(&s, &step, SigmaTildeRule::Ddpm);
    let prior = GaussianPrior::new(vec![0.3, -0.1, 0.7], vec![0.5, 1.2, 0.2]).map_err(err)?;
    let ts = vec![1, step.t0 / 2, step.t0, step.t0 + 1, step.t0 + 20];
    Ok(GradientSetup { s, c, prior, ts })
}

fn gradient_finite_differences(cx: &Context) -> Outcome {
    let g = gradient_setup()?;
    let (x0, xta) = (vec![0.2, -0.4, 1.1], vec![0.1, 0.5, -0.3]);
    let mut rng = stream_rng(cx.seed, Stream::Sample);
    let mut worst: f64 = 0.0;
    for &t in &g.ts {
        let term = AffineTerm { prior: &g.prior, schedule: &g.s, coeffs: &g.c, t };
        let eps: Vec<f64> = normal_vec(&mut rng, 3);
        let eps_p: Vec<f64> = normal_vec(&mut rng, 3);
        let (exact, fd) = if g.c.step().above(t) {
            let exact = affine_full_gradient_xta(&term, &xta, &eps, &eps_p).map_err(err)?;
            (exact, finite_diff_grad(&|v: &[f64]| objective_xta(&term, v, &eps, &eps_p), &xta, None).map_err(err)?)
        } else {
            let exact = affine_full_gradient_x0(&term, &x0, &xta, &eps).map_err(err)?;
            (exact, finite_diff_grad(&|v: &[f64]| objective_x0(&term, v, &xta, &eps), &x0, None).map_err(err)?)
        };
        worst = worst.max(dist(&fd, &exact) / projdiff::linalg::norm(&exact));
    }
    ensure(worst <= 1e-6, format!("relative error {worst:e}"))?;
    Ok(format!("relative error {worst:.1e} at {} steps", g.ts.len()))
}

fn gradient_truncation(cx: &Context) -> Outcome {
    let g = gradient_setup()?;
    let den = gaussian_denoiser(g.prior.clone());
    let (x0, xta) = (vec![0.2, -0.4, 1.1], vec![0.1, 0.5, -0.3]);
    let a = g.c.step().alpha_bar_ta;
    let mut worst: f64 = 0.0;
    for (k, &t) in g.ts.iter().enumerate() {
        let term = AffineTerm { prior: &g.prior, schedule: &g.s, coeffs: &g.c, t };
        let j = g.prior.jacobian_diag(NoiseLevel::Vp(g.s.alpha_bar(t))).map_err(err)?;
        let seed = cx.seed + 100 + k as u64;
        let (mut draw, mut rng) = (stream_rng(seed, Stream::Sample), stream_rng(seed, Stream::Sample));
        let (scaled, full) = if g.c.step().above(t) {
            let eps: Vec<f64> = normal_vec(&mut draw, 3);
            let eps_p: Vec<f64> = normal_vec(&mut draw, 3);
            let exact = affine_full_gradient_xta(&term, &xta, &eps, &eps_p).map_err(err)?;
            let trunc = grad_xta_truncated(&xta, t, &g.s, &g.c, &den, &mut rng).map_err(err)?;
            let rho = (g.s.alpha_bar(t) / a).sqrt();
            let ratio = g.c.w(t).finite().ok_or("unbounded w")? / g.c.g(t).finite().ok_or("unbounded g")?;
            let scaled: Vec<f64> = (0..3).map(|i| 2.0 * (1.0 - a.sqrt() * rho * j[i]) * trunc[i]).collect();
            (scaled, (0..3).map(|i| exact[i] - ratio * rho * j[i] * eps[i]).collect::<Vec<_>>())
        } else {
            let eps: Vec<f64> = normal_vec(&mut draw, 3);
            let exact = affine_full_gradient_x0(&term, &x0, &xta, &eps).map_err(err)?;
            let trunc = grad_x0_truncated(&x0, &xta, t, &g.s, &g.c, &den, &mut rng).map_err(err)?;
            let kappa = g.s.alpha_bar(t).sqrt() - g.c.gamma(t).ok_or("missing γ")? * a.sqrt() / (1.0 - a).sqrt();
            ((0..3).map(|i| 2.0 * (1.0 - kappa * j[i]) * trunc[i]).collect(), exact)
        };
        worst = worst.max(dist(&scaled, &full) / (1.0 + projdiff::linalg::norm(&full)));
    }
    ensure(worst <= 1e-8, format!("truncated gradient off by {worst:e}"))?;
    Ok(format!("truncated vs full {worst:.1e}"))
}

fn small_step_config(seed: u64) -> SolverConfig {
    SolverConfig { eta1: 0.002, repetitions: 125, sigma_tilde_rule: SigmaTildeRule::Ddpm, seed, ..Default::default() }
}

fn conjugate_1d(cx: &Context) -> Outcome {
    let prior = GaussianPrior::new(vec![0.0], vec![1.0]).map_err(err)?;
    let op: Arc<dyn LinearOperator<f64>> = Arc::new(IdentityBlock::new(1, 1).map_err(err)?);
    let p = linear(Schedule::Vp(vp100()), Arc::new(gaussian_denoiser(prior)), op, vec![1.3], 1.0);
    let runs: Vec<f64> = (0..20)
        .map(|k| solve(&p, &small_step_config(cx.seed + k)).map(|r| r.x0[0]))
        .collect::<Result<_, _>>()
        .map_err(err)?;
    let e = (median(&runs) - 0.65).abs();
    ensure(e <= 2e-2, format!("median {} vs 0.65", median(&runs)))?;
    Ok(format!("median error {e:.1e}"))
}

fn conditional_2d(cx: &Context) -> Outcome {
    let prior = GaussianPrior::new(vec![0.2, -0.3], vec![1.0, 0.5]).map_err(err)?;
    let op = dense(&[vec![1.0, 0.0]])?;
    let exact = analytic_gaussian_posterior(&prior, op.as_ref(), &[0.5], 0.0).map_err(err)?;
    let p = linear(Schedule::Vp(vp100()), Arc::new(gaussian_denoiser(prior)), op, vec![0.5], 0.0);
    let runs: Vec<Vec<f64>> = (0..20)
        .map(|k| solve(&p, &SolverConfig { eta1: 0.002, repetitions: 125, seed: cx.seed + k, ..Default::default() }))
        .map(|r| r.map(|r| r.x0))
        .collect::<Result<_, _>>()
        .map_err(err)?;
    let e = dist(&medians(&runs), &exact.mean);
    ensure(e <= 2e-2, format!("median {:?} vs {:?}", medians(&runs), exact.mean))?;
    Ok(format!("median error {e:.1e}"))
}

fn gmm_map(cx: &Context) -> Outcome {
    let prior = GmmPrior::new(vec![0.5, 0.5], vec![vec![-1.0, -1.0], vec![1.0, 1.0]], vec![0.1, 0.1]).map_err(err)?;
    let spec = GridSearchSpec::new(vec![[-3.0, 3.0], [-3.0, 3.0]], 0.01);
    let map = grid_map(&prior, &|x| vec![x[0]], &[0.8], 0.5, &spec).map_err(err)?;
    let p = linear(Schedule::Vp(vp100()), Arc::new(gmm_denoiser(prior)), dense(&[vec![1.0, 0.0]])?, vec![0.8], 0.5);
    let errs: Vec<f64> = (0..20)
        .map(|k| solve(&p, &SolverConfig { eta2: 0.01, ..small_step_config(cx.seed + k) }).map(|r| dist(&r.x0, &map)))
        .collect::<Result<_, _>>()
        .map_err(err)?;
    let m = median(&errs);
    ensure(m <= 5e-2, format!("median distance {m} to {map:?}"))?;
    Ok(format!("median distance {m:.3} to the grid MAP"))
}

fn noisy_1d() -> Result<Problem<f64>, String> {
    let prior = GaussianPrior::new(vec![0.0], vec![1.0]).map_err(err)?;
    let op: Arc<dyn LinearOperator<f64>> = Arc::new(IdentityBlock::new(1, 1).map_err(err)?);
    Ok(linear(Schedule::Vp(vp100()), Arc::new(gaussian_denoiser(prior)), op, vec![1.3], 1.0))
}

fn determinism(cx: &Context) -> Outcome {
    let p = noisy_1d()?;
    let c = SolverConfig { seed: cx.seed + 42, beta: 0.3, repetitions: 2, ..Default::default() };
    let (a, b) = (solve(&p, &c).map_err(err)?, solve(&p, &c).map_err(err)?);
    ensure(a == b, "reports differ for identical seeds")?;
    let other = solve(&p, &SolverConfig { seed: c.seed + 1, ..c }).map_err(err)?;
    ensure(other.x0 != a.x0, "different seeds gave the same result")?;
    Ok("identical seeds give identical reports".into())
}

fn phase_ordering(cx: &Context) -> Outcome {
    let r = solve(&noisy_1d()?, &SolverConfig { seed: cx.seed, ..Default::default() }).map_err(err)?;
    let first = r.trace.iter().position(|row| row.phase != Phase::Aux).ok_or("no x0 phase")?;
    ensure(first > 0, "no auxiliary phase")?;
    ensure(r.trace[..first].iter().all(|row| row.x0_delta == 0.0), "x0 moved during the auxiliary phase")?;
    ensure(r.trace[first].phase == Phase::Reinit, "x0 phase does not start with re-initialisation")?;
    ensure(r.trace[first..].iter().all(|row| row.phase != Phase::Aux), "auxiliary rows after re-initialisation")?;
    Ok(format!("{first} auxiliary rows, then re-initialisation"))
}

fn linear_projections(cx: &Context) -> Outcome {
    let mut rng = stream_rng(cx.seed, Stream::Sample);
    let rows: Vec<Vec<f64>> = (0..5).map(|_| normal_vec(&mut rng, 8)).collect();
    let ops: Vec<Box<dyn LinearOperator<f64>>> = vec![
        Box::new(DenseOperator::new(Matrix::from_rows(&rows).map_err(err)?).map_err(err)?),
        Box::new(IdentityBlock::new(8, 3).map_err(err)?),
        Box::new(MaskOperator::new((0..8).map(|i| i % 3 != 1).collect()).map_err(err)?),
        Box::new(SumOperator::new(3, 4).map_err(err)?),
        Box::new(AvgPoolOperator::new(4, 4, 2).map_err(err)?),
        Box::new(CircularConvolution::gaussian(4, 4, 3, 0.8).map_err(err)?),
    ];
    let mut worst = [0.0f64; 3];
    for op in &ops {
        let n = op.input_dim();
        let sv = op.singular_values();
        let via_dense = DenseOperator::new(op.to_dense()).map_err(err)?;
        for _ in 0..5 {
            let z: Vec<f64> = normal_vec(&mut rng, n);
            let y = op.apply(&z);
            let x: Vec<f64> = normal_vec(&mut rng, n);
            let p = op.project(&x, &y).map_err(err)?;
            worst[0] = worst[0].max(max_abs(&sub(&op.project(&p, &y).map_err(err)?, &p)));
            worst[1] = worst[1].max(max_abs(&sub(&op.apply(&p), &y)));
            worst[2] = worst[2].max(max_abs(&sub(&p, &project_linear(&x, &via_dense, &y).map_err(err)?)));
            let d = dist(&x, &p);
            for _ in 0..1000 {
                let mut c = op.v_t(&normal_vec::<f64, _>(&mut rng, n));
                c.iter_mut().zip(&sv).filter(|(_, &s)| s > 1e-12).for_each(|(v, _)| *v = 0.0);
                let f: Vec<f64> = z.iter().zip(op.v(&c)).map(|(a, b)| a + b).collect();
                ensure(d <= dist(&x, &f) + 1e-10, format!("{:?}: a feasible point is closer than P(x)", op.kind()))?;
            }
        }
    }
    ensure(worst[0] <= 1e-10, format!("idempotence {:e}", worst[0]))?;
    ensure(worst[1] <= 1e-8, format!("feasibility {:e}", worst[1]))?;
    ensure(worst[2] <= 1e-8, format!("dense equivalence {:e}", worst[2]))?;
    Ok(format!("6 kinds: idempotence {:.1e}, feasibility {:.1e}, dense {:.1e}", worst[0], worst[1], worst[2]))
}

fn hdr_table(_: &Context) -> Outcome {
    // (x, y, noise-free, noisy); NaN marks observations outside [−1, 1].
    let table: [(f64, f64, f64, f64); 9] = [
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
    for (x, y, clean, noisy) in table {
        match project_hdr(&[x], &[y], false) {
            Ok(p) => ensure(p[0] == clean, format!("noise-free P({x}, {y}) = {}, expected {clean}", p[0]))?,
            Err(_) => ensure(clean.is_nan(), format!("noise-free P({x}, {y}) rejected"))?,
        }
        let p = project_hdr(&[x], &[y], true).map_err(err)?[0];
        ensure(p == noisy, format!("noisy P({x}, {y}) = {p}, expected {noisy}"))?;
    }
    Ok("9 cases exact".into())
}

fn equivalent_noise_constants(_: &Context) -> Outcome {
    for sigma in [0.0, 0.05, 0.37] {
        let sr =
            equivalent_noise(TaskKind::Sr, sigma, &Geometry { factor: Some(4), ..Default::default() }).map_err(err)?;
        ensure(sr == 4.0 * sigma, format!("sr: {sr}"))?;
        let g = Geometry { side: Some(256), padded_side: Some(384), ..Default::default() };
        let pr = equivalent_noise(TaskKind::Phase, sigma, &g).map_err(err)?;
        ensure(pr == 1.5 * sigma, format!("phase: {pr}"))?;
        let hdr = equivalent_noise(TaskKind::Hdr, sigma, &Geometry::default()).map_err(err)?;
        ensure(hdr == sigma / 2.0, format!("hdr: {hdr}"))?;
    }
    Ok("4σ, 1.5σ, σ/2".into())
}

fn phase_feasibility(cx: &Context) -> Outcome {
    let op = PhaseRetrieval::<f64>::new(8, 4).map_err(err)?;
    let mut rng = stream_rng(cx.seed, Stream::Sample);
    let x: Vec<f64> = normal_vec(&mut rng, 64);
    let y = op.forward(&normal_vec(&mut rng, 64));
    let (_, spectrum) = op.project_with_spectrum(&x, &y).map_err(err)?;
    let worst = spectrum.iter().zip(&y).map(|(z, v)| (z.norm() - v).abs() / v.max(1.0)).fold(0.0, f64::max);
    ensure(worst <= 1e-12, format!("|z̃| differs from y by {worst:e}"))?;
    Ok(format!("max ||z̃| − y| = {worst:.1e}"))
}

fn phase_residual_reduction(cx: &Context) -> Outcome {
    let op = Arc::new(PhaseRetrieval::<f64>::new(8, 4).map_err(err)?);
    let s = build_linear_vp(1000, 1e-4, 0.02).map_err(err)?;
    let var = 0.05;
    let m1: Vec<f64> = (0..64).map(|i| if (i / 8 + i % 8) % 2 == 0 { 0.5 } else { -0.5 }).collect();
    let m2: Vec<f64> = m1.iter().map(|v| -0.5 * v + 0.2).collect();
    let prior = GmmPrior::new(vec![0.5, 0.5], vec![m1.clone(), m2], vec![var, var]).map_err(err)?;
    let den: Arc<dyn Denoiser<f64>> = Arc::new(gmm_denoiser(prior));
    let mut ratios = Vec::new();
    for k in 0..20 {
        let seed = cx.seed + k;
        let noise: Vec<f64> = normal_vec(&mut stream_rng(1000 + seed, Stream::Sample), 64);
        let truth: Vec<f64> = m1.iter().zip(&noise).map(|(m, e)| m + var.sqrt() * e).collect();
        let y = op.forward(&truth);
        let init = den
            .mu(&normal_vec(&mut stream_rng(seed, Stream::Init), 64), NoiseLevel::Vp(s.alpha_bar(1000)))
            .map_err(err)?;
        let before = dist(&op.forward(&init), &y);
        let p = Problem {
            schedule: Schedule::Vp(s.clone()),
            denoiser: den.clone(),
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
    ensure(m >= 10.0, format!("median reduction {m:.1}×"))?;
    Ok(format!("median residual reduction {m:.1}×"))
}

fn variance_law(cx: &Context) -> Outcome {
    let s = ve100();
    let t = 60;
    let xi = s.sigma_bar(t - 1);
    let x0 = [0.3, -0.8];
    let eps0: Vec<f64> = normal_vec(&mut stream_rng(cx.seed, Stream::Encode), 2);
    let mut rng = stream_rng(cx.seed, Stream::Sample);
    let n = 100_000;
    let draws: Vec<Vec<f64>> =
        (0..n).map(|_| restricted_encode_ve(&x0, &eps0, t, xi, &s, &mut rng)).collect::<Result<_, _>>().map_err(err)?;
    let sd = (s.sigma_bar(t).powi(2) - xi * xi).sqrt();
    let mut worst: f64 = 0.0;
    for i in 0..2 {
        let col: Vec<f64> = draws.iter().map(|d| d[i]).collect();
        let mean = projdiff::linalg::mean(&col);
        worst = worst.max(((mean - x0[i] - xi * eps0[i]) / (sd / (n as f64).sqrt())).abs());
        worst = worst.max(((std_dev(&col) - sd) / (sd / (2.0 * n as f64).sqrt())).abs());
    }
    ensure(worst <= 3.0, format!("max |z| = {worst:.2}"))?;
    Ok(format!("max |z| = {worst:.2}"))
}

fn mask_toy() -> Result<Problem<f64>, String> {
    let dim = 16;
    let g = GmmPrior::new(vec![0.5, 0.5], vec![vec![-1.0], vec![1.0]], vec![0.05, 0.05]).map_err(err)?;
    let den = ProductDenoiser::coordinatewise(dim, Arc::new(ve_denoiser(g))).map_err(err)?;
    let op = MaskOperator::new((0..dim).map(|i| i < 2).collect()).map_err(err)?;
    let mut y = vec![0.0; dim];
    (y[0], y[1]) = (1.0, -1.0);
    Ok(linear(Schedule::Ve(ve100()), Arc::new(den), Arc::new(op), y, 0.0))
}

fn xi_zero(cx: &Context) -> Outcome {
    let p = mask_toy()?;
    let c = SolverConfig { eta1: 0.5, beta: 0.9, seed: cx.seed, ..Default::default() };
    let plain = run_ve(&p, &c).map_err(err)?;
    let zero = run_ve_restricted(&p, &SolverConfig { xi_rule: XiRule::Constant(0.0), ..c }).map_err(err)?;
    ensure(plain.x0 == zero.x0 && plain.trace == zero.trace, "ξ = 0 differs from the plain VE loop")?;
    Ok("identical iterates".into())
}

fn diversity(cx: &Context) -> Outcome {
    let p = mask_toy()?;
    let mut out = Vec::new();
    for rule in [XiRule::Off, XiRule::PrevLevel, XiRule::FullLevel] {
        let runs: Vec<Vec<f64>> = (0..30)
            .map(|k| {
                let c = SolverConfig {
                    eta1: 0.5,
                    beta: 0.9,
                    xi_rule: rule,
                    seed: cx.seed + k,
                    encode_seed: Some(cx.seed + 1),
                    ..Default::default()
                };
                solve(&p, &c).map(|r| r.x0)
            })
            .collect::<Result<_, _>>()
            .map_err(err)?;
        let spread: f64 = (2..16).map(|j| std_dev(&runs.iter().map(|r| r[j]).collect::<Vec<_>>())).sum();
        out.push(spread / 14.0);
    }
    ensure(out[0] > out[1] && out[1] > out[2], format!("not decreasing: {out:.4?}"))?;
    Ok(format!("diversity {out:.3?} for ξ = 0, σ̄_(t−1), σ̄_t"))
}

fn separation(cx: &Context) -> Outcome {
    let n = 16;
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
    let mut positive = 0;
    for inst in 0..50 {
        let mut rng = stream_rng(cx.seed + 5000 + inst, Stream::Sample);
        let mut x = vec![0.0; 2 * n];
        for j in 0..n {
            let e: Vec<f64> = normal_vec(&mut rng, 2);
            x[j] = if rng.random_bool(0.5) { 1.0 } else { -1.0 } + 0.1 * e[0];
            x[n + j] = if rng.random_bool(0.5) { 0.3 } else { -0.3 } + 0.1 * e[1];
        }
        let y = op.apply(&x);
        let split: Vec<f64> = y.iter().map(|v| v / 2.0).collect();
        let p = linear(Schedule::Ve(ve100()), den.clone(), op.clone(), y, 0.0);
        let c = SolverConfig { eta1: 0.5, beta: 0.5, repetitions: 5, seed: cx.seed + inst, ..Default::default() };
        let r = solve(&p, &c).map_err(err)?;
        let mut gain = 0.0;
        for k in 0..2 {
            let range = k * n..(k + 1) * n;
            gain += si_sdr_improvement(&x[range.clone()], &r.x0[range], &split).map_err(err)? / 2.0;
        }
        positive += usize::from(gain > 0.0);
    }
    ensure(positive >= 45, format!("{positive}/50 improved"))?;
    Ok(format!("{positive}/50 instances improved over the equal split"))
}
