use std::path::Path;

use anyhow::{anyhow, Context};
use projdiff::io::write_csv_vector;
use projdiff::linalg::{dist, mean, std_dev};
use projdiff::schedules::{equivalent_step, ScheduleError};
use projdiff::solver::{solve, Schedule};
use projdiff::SolverError;
use rayon::prelude::*;
use serde::Serialize;

use crate::descriptor::{apply_sweep, Loaded, Mode, SweepValue};
use crate::{Failure, Overrides};

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub param: &'static str,
    pub value: String,
    pub seed: u64,
    /// `ok`, `out_of_schedule`, `diverged`, `config_error` or `error`.
    pub status: &'static str,
    pub residual: Option<f64>,
    /// Root-mean-square error against the task's reference.
    pub rmse: Option<f64>,
    pub iterations: Option<usize>,
    pub message: String,
}

#[derive(Debug, Serialize)]
struct SummaryRow {
    param: &'static str,
    value: String,
    runs: usize,
    ok: usize,
    mean_residual: Option<f64>,
    mean_rmse: Option<f64>,
    /// Mean over coordinates of the standard deviation across seeds.
    diversity: Option<f64>,
}

struct Outcome {
    row: SweepRow,
    x0: Option<Vec<f64>>,
}

fn run_one(loaded: &Loaded, overrides: &Overrides, value: &SweepValue, seed: u64, runs: &Path) -> Outcome {
    let spec = loaded.descriptor.sweep.as_ref().expect("checked by the caller");
    let mut row = SweepRow {
        param: spec.param.as_str(),
        value: value.to_string(),
        seed,
        status: "ok",
        residual: None,
        rmse: None,
        iterations: None,
        message: String::new(),
    };
    let mut config = overrides.apply(&loaded.descriptor.config);
    config.seed = seed;
    let mut task = loaded.task.clone();
    let setup = apply_sweep(spec.param, value, &mut config, &mut task)
        .and_then(|_| config.validate().map_err(anyhow::Error::from))
        .and_then(|_| loaded.problem(&task));
    let (problem, built) = match setup {
        Ok(v) => v,
        Err(e) => {
            row.status = if is_out_of_schedule(&e) { "out_of_schedule" } else { "config_error" };
            row.message = format!("{e:#}");
            return Outcome { row, x0: None };
        }
    };
    if let Schedule::Vp(s) = &problem.schedule {
        if let Err(e @ ScheduleError::OutOfSchedule { .. }) = equivalent_step(s, task.sigma) {
            row.status = "out_of_schedule";
            row.message = e.to_string();
            return Outcome { row, x0: None };
        }
    }
    match solve(&problem, &config) {
        Ok(report) => {
            row.residual = Some(report.residual);
            row.iterations = Some(report.trace.len());
            row.rmse = built.reference.as_ref().map(|r| dist(&report.x0, r) / (r.len() as f64).sqrt());
            let file = runs.join(format!("{}_{}_{}.csv", row.param, row.value, seed));
            if let Err(e) = write_csv_vector(&file, &report.x0) {
                row.message = format!("could not write {}: {e}", file.display());
            }
            Outcome { row, x0: Some(report.x0) }
        }
        Err(e) => {
            row.status = match e {
                SolverError::Diverged { .. } => "diverged",
                SolverError::Config(_) => "config_error",
                SolverError::Schedule(ScheduleError::OutOfSchedule { .. }) => "out_of_schedule",
                _ => "error",
            };
            row.message = e.to_string();
            Outcome { row, x0: None }
        }
    }
}

fn is_out_of_schedule(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        matches!(c.downcast_ref::<ScheduleError>(), Some(ScheduleError::OutOfSchedule { .. }))
            || matches!(
                c.downcast_ref::<projdiff::io::IoError>(),
                Some(projdiff::io::IoError::Schedule(ScheduleError::OutOfSchedule { .. }))
            )
    })
}

fn summarize(param: &'static str, value: String, outcomes: &[&Outcome]) -> SummaryRow {
    let ok: Vec<&Outcome> = outcomes.iter().copied().filter(|o| o.row.status == "ok").collect();
    let avg = |f: &dyn Fn(&SweepRow) -> Option<f64>| {
        let v: Vec<f64> = ok.iter().filter_map(|o| f(&o.row)).collect();
        (!v.is_empty()).then(|| mean(&v))
    };
    let xs: Vec<&Vec<f64>> = ok.iter().filter_map(|o| o.x0.as_ref()).collect();
    let diversity = (xs.len() >= 2).then(|| {
        let n = xs[0].len();
        let per: Vec<f64> = (0..n).map(|j| std_dev(&xs.iter().map(|x| x[j]).collect::<Vec<_>>())).collect();
        mean(&per)
    });
    SummaryRow {
        param,
        value,
        runs: outcomes.len(),
        ok: ok.len(),
        mean_residual: avg(&|r| r.residual),
        mean_rmse: avg(&|r| r.rmse),
        diversity,
    }
}

/// Runs every (value, seed) pair on a pool of `jobs` threads. Failed runs
/// become rows with a status; only setup problems fail the command.
pub fn cmd_sweep(path: &Path, overrides: &Overrides) -> Result<Vec<SweepRow>, Failure> {
    let loaded = Loaded::from_path(path, Mode::Sweep).map_err(Failure::config)?;
    let spec = loaded
        .descriptor
        .sweep
        .clone()
        .ok_or_else(|| Failure::config(anyhow!("the run file has no `sweep` section")))?;
    spec.validate().map_err(Failure::config)?;
    let out = overrides.out.clone().or_else(|| loaded.descriptor.out.clone()).unwrap_or_else(|| "projdiff-out".into());
    let runs = out.join("runs");
    std::fs::create_dir_all(&runs).with_context(|| runs.display().to_string()).map_err(Failure::config)?;

    let base = overrides.apply(&loaded.descriptor.config).seed;
    let jobs: Vec<(usize, u64)> =
        (0..spec.values.len()).flat_map(|v| (0..spec.seeds as u64).map(move |k| (v, base + k))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(overrides.jobs.unwrap_or(0))
        .build()
        .map_err(|e| Failure::config(e.into()))?;
    let outcomes: Vec<Outcome> = pool.install(|| {
        jobs.par_iter().map(|&(v, seed)| run_one(&loaded, overrides, &spec.values[v], seed, &runs)).collect()
    });

    let write = || -> anyhow::Result<()> {
        let mut w = csv::Writer::from_path(out.join("sweep.csv"))?;
        for o in &outcomes {
            w.serialize(&o.row)?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(out.join("summary.csv"))?;
        for (v, value) in spec.values.iter().enumerate() {
            let group: Vec<&Outcome> = outcomes.iter().zip(&jobs).filter(|(_, j)| j.0 == v).map(|(o, _)| o).collect();
            w.serialize(summarize(spec.param.as_str(), value.to_string(), &group))?;
        }
        w.flush()?;
        Ok(())
    };
    write().map_err(Failure::config)?;
    Ok(outcomes.into_iter().map(|o| o.row).collect())
}
