//! Inverse-problem solving with diffusion priors by projection gradient
//! descent.
//!
//! The numerical code is generic over [`Real`] (`f32` or `f64`). The aliases
//! below fix the scalar to `f64`, which is what the file formats and the
//! command-line tool use.
//!
//! ```
//! use std::sync::Arc;
//! use projdiff::observations::IdentityBlock;
//! use projdiff::priors::{gaussian_denoiser, GaussianPrior};
//! use projdiff::schedules::build_linear_vp;
//! use projdiff::solver::{solve, Observation, Schedule, SolverConfig};
//!
//! let problem = projdiff::Problem {
//!     schedule: Schedule::Vp(build_linear_vp(50, 1e-3, 0.2).unwrap()),
//!     denoiser: Arc::new(gaussian_denoiser(GaussianPrior::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap())),
//!     observation: Observation::Linear { op: Arc::new(IdentityBlock::new(2, 1).unwrap()), y: vec![0.7], sigma: 0.0 },
//! };
//! let report = solve(&problem, &SolverConfig::default()).unwrap();
//! assert!((report.x0[0] - 0.7).abs() < 1e-12);
//! ```

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod fourier;
pub mod io;
pub mod linalg;
pub mod observations;
pub mod oracle;
pub mod priors;
pub mod rng;
pub mod scalar;
pub mod schedules;
pub mod solver;

pub use scalar::Real;
pub use solver::{solve, SolverConfig, SolverError};

pub type Matrix = linalg::Matrix<f64>;
pub type VpSchedule = schedules::VpSchedule<f64>;
pub type VeSchedule = schedules::VeSchedule<f64>;
pub type DdimCoefficients = schedules::DdimCoefficients<f64>;
pub type EquivalentStep = schedules::EquivalentStep<f64>;
pub type GaussianPrior = priors::GaussianPrior<f64>;
pub type GmmPrior = priors::GmmPrior<f64>;
pub type Schedule = solver::Schedule<f64>;
pub type Observation = solver::Observation<f64>;
pub type Problem = solver::Problem<f64>;
pub type SolveReport = solver::SolveReport<f64>;
