//! Feedforward gravity-compensation policies.
//!
//! The learned policy splits the two direction networks into a
//! configuration part `(τ⁺ + τ⁻)/2` and a direction part `(τ⁺ - τ⁻)/2`, and
//! applies the direction part scaled by a dead-band/saturation ratio `ξ(Δq)`.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::learning::CompensationModel;
use crate::plant::{Plant, TorquePolicy};
use crate::teacher::TeacherModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GccParams {
    /// Fraction of the direction-dependent torque applied beyond saturation.
    pub alpha: f64,
    /// Per-joint dead-band on `|Δq|`, rad.
    pub dq_db: Vec<f64>,
    /// Per-joint saturation on `|Δq|`, rad.
    pub dq_s: Vec<f64>,
}

impl GccParams {
    /// `α = 0.5`, dead-band 0.0002 rad, saturation 0.002 rad on every joint.
    pub fn default_for(n: usize) -> Self {
        GccParams {
            alpha: 0.5,
            dq_db: vec![0.0002; n],
            dq_s: vec![0.002; n],
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        check_len("dead-band", n, self.dq_db.len())?;
        check_len("saturation", n, self.dq_s.len())?;
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        for (i, (db, s)) in self.dq_db.iter().zip(&self.dq_s).enumerate() {
            if !(0.0 <= *db && db < s) {
                return Err(Error::InvalidParameter(format!(
                    "joint {i}: need 0 <= dq_db < dq_s, got {db}, {s}"
                )));
            }
        }
        Ok(())
    }
}

/// `(nt_c, nt_d) = ((nt⁺ + nt⁻)/2, (nt⁺ - nt⁻)/2)`.
pub fn split_torques(nt_plus: &[f64], nt_minus: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    check_len("direction torques", nt_plus.len(), nt_minus.len())?;
    Ok(nt_plus
        .iter()
        .zip(nt_minus)
        .map(|(p, m)| ((p + m) / 2.0, (p - m) / 2.0))
        .unzip())
}

/// Per-joint compensation ratio: zero inside the dead-band, `sgn(Δq)·α`
/// from saturation on, linear in between.
pub fn xi(dq: &[f64], p: &GccParams) -> Vec<f64> {
    dq.iter()
        .zip(p.dq_db.iter().zip(&p.dq_s))
        .map(|(&d, (&db, &s))| {
            let mag = d.abs();
            if mag <= db {
                0.0
            } else if mag < s {
                (mag - db) / (s - db) * d.signum() * p.alpha
            } else {
                d.signum() * p.alpha
            }
        })
        .collect()
}

/// Recombines configuration and direction parts: `c + ξ ⊙ d`.
fn compose(c: &[f64], d: &[f64], ratio: &[f64]) -> Vec<f64> {
    c.iter()
        .zip(d)
        .zip(ratio)
        .map(|((c, d), r)| c + r * d)
        .collect()
}

/// Learned feedforward controller.
#[derive(Debug, Clone)]
pub struct GccController {
    pub model: CompensationModel,
    pub params: GccParams,
}

impl GccController {
    pub fn new(model: CompensationModel, params: GccParams) -> Result<Self> {
        params.validate(model.dof())?;
        Ok(GccController { model, params })
    }

    /// `u = denorm(nt_c + ξ(Δq) ⊙ nt_d)`.
    pub fn control(&self, q: &[f64], dq: &[f64]) -> Result<Vec<f64>> {
        check_len("joint increments", self.model.dof(), dq.len())?;
        let (plus, minus) = self.model.normalized_branches(q)?;
        let (c, d) = split_torques(&plus, &minus)?;
        let mixed = compose(&c, &d, &xi(dq, &self.params));
        self.model.norm.denormalize_output(&mixed)
    }
}

impl TorquePolicy for GccController {
    fn torque(&self, q: &[f64], dq: &[f64]) -> Result<Vec<f64>> {
        self.control(q, dq)
    }
}

/// The same `ξ` law applied to an analytic teacher's direction torques, in
/// physical units.
#[derive(Debug, Clone)]
pub struct TeacherController {
    pub teacher: TeacherModel,
    pub params: GccParams,
}

impl TeacherController {
    pub fn new(teacher: TeacherModel, params: GccParams) -> Result<Self> {
        params.validate(teacher.dof())?;
        Ok(TeacherController { teacher, params })
    }
}

impl TorquePolicy for TeacherController {
    fn torque(&self, q: &[f64], dq: &[f64]) -> Result<Vec<f64>> {
        let n = self.teacher.dof();
        check_len("joint increments", n, dq.len())?;
        let plus = self.teacher.predict(q, &vec![1.0; n])?;
        let minus = self.teacher.predict(q, &vec![-1.0; n])?;
        let (c, d) = split_torques(&plus, &minus)?;
        Ok(compose(&c, &d, &xi(dq, &self.params)))
    }
}

/// Applies the plant's true compensation torque for the current state.
#[derive(Debug, Clone)]
pub struct OracleController {
    pub plant: Plant,
}

impl TorquePolicy for OracleController {
    fn torque(&self, q: &[f64], dq: &[f64]) -> Result<Vec<f64>> {
        self.plant.true_compensation_torque(q, dq)
    }
}

/// Applies no torque.
#[derive(Debug, Clone, Copy)]
pub struct ZeroController {
    pub dof: usize,
}

impl TorquePolicy for ZeroController {
    fn torque(&self, _q: &[f64], _dq: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![0.0; self.dof])
    }
}
