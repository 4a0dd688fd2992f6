//! Analytic physics teacher: the plant's gravity and disturbance model with
//! optionally perturbed parameters.

use std::path::Path;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::trig_encode;
use crate::learning::{random_sample_states, Dataset, Provenance, Sample};
use crate::plant::{compensation_torque, DisturbanceParams, Plant};
use crate::robot::{RobotFile, RobotModel};
use crate::seed::Rng;

/// Relative parameter noise of a low-bias teacher.
pub const LOW_BIAS: f64 = 0.05;
/// Relative parameter noise of a high-bias teacher.
pub const HIGH_BIAS: f64 = 0.30;
/// Default number of teacher samples.
pub const DEFAULT_TEACHER_SAMPLES: usize = 30_000;

#[derive(Debug, Clone, PartialEq)]
pub struct TeacherModel {
    pub robot: RobotModel,
    pub disturbance: DisturbanceParams,
    /// Free-form description of how the parameters were biased.
    pub bias_level: String,
    /// Relative parameter noise used to build the teacher.
    pub sigma_p: f64,
}

impl TeacherModel {
    /// Exact copy of the plant's model.
    pub fn unbiased(p: &Plant) -> Self {
        TeacherModel {
            robot: p.robot.clone(),
            disturbance: p.disturbance.clone(),
            bias_level: "none".into(),
            sigma_p: 0.0,
        }
    }

    pub fn dof(&self) -> usize {
        self.robot.dof()
    }

    /// Noiseless analytic compensation torque under the teacher's parameters.
    pub fn predict(&self, q: &[f64], dq: &[f64]) -> Result<Vec<f64>> {
        compensation_torque(&self.robot, &self.disturbance, q, dq)
    }

    /// Builds `T_p` records `(Φ(q), Δq, τ_teacher(q, Δq))` with random
    /// in-limit states.
    pub fn sample(&self, count: usize, limits: &[[f64; 2]], rng: &mut Rng) -> Result<Dataset> {
        if count == 0 {
            return Err(Error::EmptyDataset("teacher sample count must be >= 1"));
        }
        let kinds = self.robot.joint_kinds();
        let samples = random_sample_states(limits, count, rng)?
            .into_iter()
            .map(|(q, dq)| {
                Ok(Sample {
                    x1: trig_encode(&q, &kinds)?,
                    y: self.predict(&q, &dq)?,
                    x2: dq,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            provenance: Provenance::Teacher,
            samples,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        let file = TeacherFile {
            bias: BiasHeader {
                level: self.bias_level.clone(),
                sigma_p: self.sigma_p,
            },
            robot: RobotFile::from_model(&self.robot),
            disturbance: self.disturbance.clone(),
        };
        toml::to_string(&file).map_err(|e| Error::Parse {
            path: "<teacher>".into(),
            message: e.to_string(),
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: TeacherFile = toml::from_str(text).map_err(|e| Error::Parse {
            path: "<teacher>".into(),
            message: e.to_string(),
        })?;
        let robot = file.robot.into_model()?;
        file.disturbance.validate(robot.dof())?;
        Ok(TeacherModel {
            robot,
            disturbance: file.disturbance,
            bias_level: file.bias.level,
            sigma_p: file.bias.sigma_p,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }
}

/// Multiplies every mass, COM coordinate and disturbance amplitude of the
/// plant by `1 + δ`, `δ ~ N(0, σ_p²)`, one draw per parameter.
///
/// Joint axes, frame offsets, limits and coupling phases are kept exact.
pub fn make_biased_teacher(p: &Plant, sigma_p: f64, rng: &mut Rng) -> Result<TeacherModel> {
    if !(sigma_p >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "teacher bias must be >= 0, got {sigma_p}"
        )));
    }
    let mut factor = || 1.0 + sigma_p * rng.sample::<f64, _>(StandardNormal);
    let mut robot = p.robot.clone();
    for link in &mut robot.links {
        // Masses stay physical even for large σ_p.
        link.mass = (link.mass * factor()).max(0.0);
        for c in link.com.iter_mut() {
            *c *= factor();
        }
    }
    let mut disturbance = p.disturbance.clone();
    for row in &mut disturbance.coupling_amp {
        for a in row.iter_mut() {
            *a *= factor();
        }
    }
    // Band widths are non-negative by definition; clamp if a draw flips one.
    for c in &mut disturbance.dir_offset {
        *c = (*c * factor()).max(0.0);
    }
    for d in &mut disturbance.dir_config_amp {
        *d = (*d * factor()).max(0.0);
    }
    let bias_level = if sigma_p == 0.0 {
        "none".to_string()
    } else if sigma_p <= LOW_BIAS {
        format!("low (sigma_p = {sigma_p})")
    } else {
        format!("high (sigma_p = {sigma_p})")
    };
    Ok(TeacherModel {
        robot,
        disturbance,
        bias_level,
        sigma_p,
    })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TeacherFile {
    bias: BiasHeader,
    robot: RobotFile,
    disturbance: DisturbanceParams,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BiasHeader {
    level: String,
    sigma_p: f64,
}
