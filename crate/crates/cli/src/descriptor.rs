use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use projdiff::io::{load_json, BuiltTask, PriorDoc, ScheduleDoc, Source, TaskDoc};
use projdiff::solver::{Problem, XiRule};
use projdiff::SolverConfig;
use serde::{Deserialize, Serialize};

/// A run file. `schedule`, `prior` and `task` are inline documents or paths
/// relative to the run file.
///
/// ```json
/// {
///   "schedule": {"type": "vp_linear", "T": 100, "beta_min": 0.001, "beta_max": 0.2},
///   "prior": "prior.json",
///   "task": {"task": "inpaint", "mask": [true, false], "y": [0.7, 0.0], "sigma": 0.0},
///   "config": {"eta1": 0.5, "seed": 1},
///   "out": "results"
/// }
/// ```
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunDescriptor {
    pub schedule: Source<ScheduleDoc>,
    pub prior: Source<PriorDoc>,
    pub task: Source<TaskDoc>,
    #[serde(default)]
    pub config: SolverConfig,
    pub out: Option<PathBuf>,
    /// When set, the subcommand must agree with it.
    pub mode: Option<Mode>,
    pub sweep: Option<SweepSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Solve,
    Verify,
    Sweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    #[serde(rename = "eta1")]
    Eta1,
    #[serde(rename = "sigma")]
    Sigma,
    #[serde(rename = "xi")]
    Xi,
    #[serde(rename = "N")]
    Repetitions,
    #[serde(rename = "beta")]
    Beta,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::Eta1 => "eta1",
            SweepParam::Sigma => "sigma",
            SweepParam::Xi => "xi",
            SweepParam::Repetitions => "N",
            SweepParam::Beta => "beta",
        }
    }
}

/// A number, or for `xi` one of `off`, `prev`, `full`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SweepValue {
    Number(f64),
    Name(String),
}

impl std::fmt::Display for SweepValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SweepValue::Number(v) => write!(f, "{v}"),
            SweepValue::Name(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<SweepValue>,
    /// Seeds `base, base+1, …` per value, where `base` is the config seed.
    pub seeds: usize,
}

impl SweepSpec {
    pub fn validate(&self) -> anyhow::Result<()> {
        if self.values.is_empty() {
            bail!("sweep needs at least one value");
        }
        if self.seeds == 0 {
            bail!("sweep needs seeds >= 1");
        }
        for v in &self.values {
            if let (SweepValue::Name(name), p) = (v, self.param) {
                if p != SweepParam::Xi {
                    bail!("sweep value `{name}` is not a number");
                }
            }
        }
        Ok(())
    }
}

/// Applies one sweep value to a copy of the config and task.
pub fn apply_sweep(
    param: SweepParam,
    value: &SweepValue,
    config: &mut SolverConfig,
    task: &mut TaskDoc,
) -> anyhow::Result<()> {
    let number = || match value {
        SweepValue::Number(v) => Ok(*v),
        SweepValue::Name(s) => Err(anyhow::anyhow!("`{s}` is not a number")),
    };
    match param {
        SweepParam::Eta1 => config.eta1 = number()?,
        SweepParam::Beta => config.beta = number()?,
        SweepParam::Sigma => task.sigma = number()?,
        SweepParam::Repetitions => {
            let n = number()?;
            if n < 1.0 || n.fract() != 0.0 {
                bail!("N={n} must be a positive integer");
            }
            config.repetitions = n as usize;
        }
        SweepParam::Xi => {
            config.xi_rule = serde_json::from_value::<XiRule>(serde_json::to_value(value)?)?;
        }
    }
    Ok(())
}

/// A descriptor with every referenced document resolved.
pub struct Loaded {
    pub descriptor: RunDescriptor,
    pub schedule: ScheduleDoc,
    pub prior: PriorDoc,
    pub prior_dir: PathBuf,
    pub task: TaskDoc,
    pub task_dir: PathBuf,
}

impl Loaded {
    pub fn from_path(path: &Path, mode: Mode) -> anyhow::Result<Self> {
        let descriptor: RunDescriptor = load_json(path)?;
        if let Some(m) = descriptor.mode.filter(|&m| m != mode) {
            bail!("{} is a `{m:?}` run file", path.display());
        }
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let (schedule, _) = descriptor.schedule.resolve(&base).context("schedule")?;
        let (prior, prior_dir) = descriptor.prior.resolve(&base).context("prior")?;
        let (task, task_dir) = descriptor.task.resolve(&base).context("task")?;
        let out = descriptor.out.as_ref().map(|o| base.join(o));
        Ok(Self { descriptor: RunDescriptor { out, ..descriptor }, schedule, prior, prior_dir, task, task_dir })
    }

    pub fn problem(&self, task: &TaskDoc) -> anyhow::Result<(Problem<f64>, BuiltTask)> {
        let schedule = self.schedule.build()?;
        let denoiser = self.prior.denoiser(&self.prior_dir)?;
        let built = task.build(&self.task_dir)?;
        let problem = Problem { schedule, denoiser, observation: built.observation.clone() };
        Ok((problem, built))
    }
}
