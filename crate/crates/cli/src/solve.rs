use std::path::{Path, PathBuf};

use anyhow::Context;
use projdiff::io::{write_csv_vector, write_pgm, BuiltTask, Image};
use projdiff::solver::{solve, Phase, TraceRow};
use projdiff::{SolveReport, SolverConfig, SolverError};
use serde::Serialize;

use crate::descriptor::{Loaded, Mode};
use crate::{Failure, Overrides};

#[derive(Serialize)]
struct TraceCsvRow {
    seed: u64,
    iter: usize,
    t: usize,
    phase: Phase,
    objective: Option<f64>,
    residual: f64,
    constraint: f64,
    x0_delta: f64,
}

pub fn write_trace(path: &Path, seed: u64, trace: &[TraceRow]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| path.display().to_string())?;
    for r in trace {
        w.serialize(TraceCsvRow {
            seed,
            iter: r.iter,
            t: r.t,
            phase: r.phase,
            objective: r.objective,
            residual: r.residual,
            constraint: r.constraint,
            x0_delta: r.x0_delta,
        })?;
    }
    w.flush()?;
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| path.display().to_string())
}

#[derive(Serialize)]
struct AbortRecord<'a> {
    error: String,
    seed: u64,
    iter: Option<usize>,
    t: Option<usize>,
    last_x0: Option<&'a [f64]>,
}

/// Writes the report, trace and vectors, plus PGM images when the problem is
/// image-shaped. Returns the written paths.
pub fn write_outputs(out: &Path, report: &SolveReport, built: &BuiltTask) -> anyhow::Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut emit = |name: &str| {
        let p = out.join(name);
        written.push(p.clone());
        p
    };
    write_json(&emit("report.json"), report)?;
    write_trace(&emit("trace.csv"), report.seed, &report.trace)?;
    write_csv_vector(&emit("x0.csv"), &report.x0)?;
    write_csv_vector(&emit("y.csv"), built.observation.y())?;
    if let Some((height, width)) = built.image_shape {
        write_pgm(&emit("output.pgm"), &Image { height, width, pixels: report.x0.clone() })?;
        if let Some(r) = &built.reference {
            write_pgm(&emit("reference.pgm"), &Image { height, width, pixels: r.clone() })?;
        }
    }
    if let Some((height, width)) = built.observation_shape {
        write_pgm(&emit("input.pgm"), &Image { height, width, pixels: built.observation.y().to_vec() })?;
    }
    Ok(written)
}

/// Config errors exit 1; a solver abort exits 2 after writing what it has.
pub fn cmd_solve(path: &Path, overrides: &Overrides) -> Result<(), Failure> {
    let loaded = Loaded::from_path(path, Mode::Solve).map_err(Failure::config)?;
    let config = overrides.apply(&loaded.descriptor.config);
    config.validate().map_err(|e| Failure::config(e.into()))?;
    let (problem, built) = loaded.problem(&loaded.task).map_err(Failure::config)?;
    let out = overrides.out.clone().or_else(|| loaded.descriptor.out.clone()).unwrap_or_else(|| "projdiff-out".into());
    std::fs::create_dir_all(&out).with_context(|| out.display().to_string()).map_err(Failure::config)?;

    match solve(&problem, &config) {
        Ok(report) => {
            let files = write_outputs(&out, &report, &built).map_err(Failure::config)?;
            log::info!(
                "{} finished: residual {:.3e}, {} files in {}",
                report.solver,
                report.residual,
                files.len(),
                out.display()
            );
            Ok(())
        }
        Err(e) => Err(abort(&out, &config, e)),
    }
}

fn abort(out: &Path, config: &SolverConfig, e: SolverError) -> Failure {
    if let SolverError::Config(_) | SolverError::Schedule(_) = e {
        return Failure::config(e.into());
    }
    let record = match &e {
        SolverError::Diverged { iter, t, trace, last_x0, .. } => {
            if let Err(w) = write_trace(&out.join("trace.csv"), config.seed, trace) {
                log::warn!("could not write the partial trace: {w:#}");
            }
            AbortRecord {
                error: e.to_string(),
                seed: config.seed,
                iter: Some(*iter),
                t: Some(*t),
                last_x0: Some(last_x0),
            }
        }
        _ => AbortRecord { error: e.to_string(), seed: config.seed, iter: None, t: None, last_x0: None },
    };
    if let Err(w) = write_json(&out.join("abort.json"), &record) {
        log::warn!("could not write abort.json: {w:#}");
    }
    Failure::solver(e.into())
}
