use serde::{Deserialize, Serialize};

use super::IoError;
use crate::schedules::{build_geometric_ve, build_linear_vp, VeSchedule, VpSchedule};
use crate::solver::Schedule;

/// `vp` and `ve` store the arrays verbatim; the other two are generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleDoc {
    Vp {
        #[serde(rename = "T")]
        steps: usize,
        /// `ᾱ_0 … ᾱ_T`
        alpha_bar: Vec<f64>,
    },
    Ve {
        #[serde(rename = "T")]
        steps: usize,
        /// `σ̄_1 … σ̄_T`
        sigma_bar: Vec<f64>,
        delta0: f64,
    },
    VpLinear {
        #[serde(rename = "T")]
        steps: usize,
        beta_min: f64,
        beta_max: f64,
    },
    VeGeometric {
        #[serde(rename = "T")]
        steps: usize,
        sigma_min: f64,
        sigma_max: f64,
        delta0: f64,
    },
}

impl ScheduleDoc {
    pub fn build(&self) -> Result<Schedule<f64>, IoError> {
        let count = |what: &str, t: usize, len: usize| {
            if len == t {
                Ok(())
            } else {
                Err(IoError::Invalid(format!("T={t} but {what} has {len} entries")))
            }
        };
        Ok(match self {
            ScheduleDoc::Vp { steps, alpha_bar } => {
                count("alpha_bar (with alpha_bar_0)", steps + 1, alpha_bar.len())?;
                Schedule::Vp(VpSchedule::new(alpha_bar.clone())?)
            }
            ScheduleDoc::Ve { steps, sigma_bar, delta0 } => {
                count("sigma_bar", *steps, sigma_bar.len())?;
                Schedule::Ve(VeSchedule::new(sigma_bar.clone(), *delta0)?)
            }
            ScheduleDoc::VpLinear { steps, beta_min, beta_max } => {
                Schedule::Vp(build_linear_vp(*steps, *beta_min, *beta_max)?)
            }
            ScheduleDoc::VeGeometric { steps, sigma_min, sigma_max, delta0 } => {
                Schedule::Ve(build_geometric_ve(*steps, *sigma_min, *sigma_max, *delta0)?)
            }
        })
    }

    /// Explicit document of a built schedule.
    pub fn from_schedule(s: &Schedule<f64>) -> Self {
        match s {
            Schedule::Vp(vp) => ScheduleDoc::Vp { steps: vp.steps(), alpha_bar: vp.alpha_bars().to_vec() },
            Schedule::Ve(ve) => {
                ScheduleDoc::Ve { steps: ve.steps(), sigma_bar: ve.sigma_bars().to_vec(), delta0: ve.delta0() }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        for doc in [
            ScheduleDoc::VpLinear { steps: 1000, beta_min: 1e-4, beta_max: 0.02 },
            ScheduleDoc::VeGeometric { steps: 50, sigma_min: 0.01, sigma_max: 50.0, delta0: 0.003 },
        ] {
            let built = doc.build().unwrap();
            let text = serde_json::to_string(&ScheduleDoc::from_schedule(&built)).unwrap();
            let back = serde_json::from_str::<ScheduleDoc>(&text).unwrap().build().unwrap();
            let bits = |s: &Schedule<f64>| -> Vec<u64> {
                match s {
                    Schedule::Vp(v) => v.alpha_bars().iter().map(|x| x.to_bits()).collect(),
                    Schedule::Ve(v) => v.sigma_bars().iter().chain([v.delta0()].iter()).map(|x| x.to_bits()).collect(),
                }
            };
            assert_eq!(bits(&built), bits(&back));
        }
    }

    #[test]
    fn parses_and_validates() {
        let doc: ScheduleDoc = serde_json::from_str(r#"{"type":"vp","T":2,"alpha_bar":[0.999,0.9,0.5]}"#).unwrap();
        assert!(matches!(doc.build().unwrap(), Schedule::Vp(s) if s.steps() == 2));
        let short: ScheduleDoc = serde_json::from_str(r#"{"type":"vp","T":3,"alpha_bar":[0.999,0.9,0.5]}"#).unwrap();
        assert!(short.build().is_err());
        let bad: ScheduleDoc =
            serde_json::from_str(r#"{"type":"ve","T":2,"sigma_bar":[1.0,0.5],"delta0":0.1}"#).unwrap();
        assert!(bad.build().is_err());
        assert!(serde_json::from_str::<ScheduleDoc>(r#"{"type":"cosine","T":2}"#).is_err());
    }
}
