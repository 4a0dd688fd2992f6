//! Simulated ground truth: gravity plus a configuration- and
//! direction-dependent disturbance, noisy measurements, and a decoupled
//! joint model for release (drift) tests.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::features::encoded_width;
use crate::robot::RobotModel;
use crate::seed::{self, Rng};

/// Direction of motion implied by a position increment: `+1` if `dq > 0`,
/// otherwise `-1` (the step function is `u(x) = 1` iff `x > 0`).
pub fn direction_of(dq: f64) -> f64 {
    if dq > 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Step function `u(x)`.
pub fn step(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceParams {
    /// `A[i][j]`: amplitude of joint `j`'s influence on joint `i`, N·m.
    pub coupling_amp: Vec<Vec<f64>>,
    /// `φ[i][j]`, rad.
    pub coupling_phase: Vec<Vec<f64>>,
    /// Constant half-width of the direction band, N·m.
    pub dir_offset: Vec<f64>,
    /// Configuration-dependent part of the direction band, N·m.
    pub dir_config_amp: Vec<f64>,
}

impl DisturbanceParams {
    pub fn zeros(n: usize) -> Self {
        DisturbanceParams {
            coupling_amp: vec![vec![0.0; n]; n],
            coupling_phase: vec![vec![0.0; n]; n],
            dir_offset: vec![0.0; n],
            dir_config_amp: vec![0.0; n],
        }
    }

    /// Default disturbance family for an `n`-joint arm.
    ///
    /// Rows are scaled per joint (larger near the base), every joint couples
    /// to every other, and the direction band is wide enough to dominate the
    /// coupling on the base yaw joint, which carries no gravity load.
    pub fn default_for(n: usize) -> Self {
        const ROW_SCALE: [f64; 6] = [0.12, 0.35, 0.25, 0.08, 0.035, 0.015];
        const OFFSET: [f64; 6] = [0.20, 0.25, 0.18, 0.06, 0.03, 0.01];
        const CONFIG: [f64; 6] = [0.05, 0.10, 0.08, 0.03, 0.015, 0.005];
        let pick = |table: &[f64; 6], i: usize| table[i.min(5)];
        let mut d = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let weight = if i == j {
                    1.0
                } else {
                    0.25 + 0.2 * ((1.7 * i as f64 + 2.3 * j as f64).cos()).abs()
                };
                d.coupling_amp[i][j] = pick(&ROW_SCALE, i) * weight / (1.0 + 0.3 * (n - 1) as f64);
                d.coupling_phase[i][j] =
                    (0.7 * ((i + 1) * (j + 1)) as f64).rem_euclid(std::f64::consts::TAU);
            }
            d.dir_offset[i] = pick(&OFFSET, i);
            d.dir_config_amp[i] = pick(&CONFIG, i);
        }
        d
    }

    pub fn dof(&self) -> usize {
        self.dir_offset.len()
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        check_len("disturbance amplitude rows", n, self.coupling_amp.len())?;
        check_len("disturbance phase rows", n, self.coupling_phase.len())?;
        for (a, p) in self.coupling_amp.iter().zip(&self.coupling_phase) {
            check_len("disturbance amplitude columns", n, a.len())?;
            check_len("disturbance phase columns", n, p.len())?;
        }
        check_len("direction offsets", n, self.dir_offset.len())?;
        check_len("direction amplitudes", n, self.dir_config_amp.len())?;
        if self
            .dir_offset
            .iter()
            .chain(&self.dir_config_amp)
            .any(|v| !(*v >= 0.0))
        {
            return Err(Error::InvalidParameter(
                "direction band parameters must be >= 0".into(),
            ));
        }
        Ok(())
    }

    /// `ε_c,i(q) = Σ_j A_ij sin(q_j + φ_ij)`.
    pub fn config_torque(&self, q: &[f64]) -> Result<Vec<f64>> {
        check_len("joint positions", self.dof(), q.len())?;
        Ok(self
            .coupling_amp
            .iter()
            .zip(&self.coupling_phase)
            .map(|(amp, phase)| {
                amp.iter()
                    .zip(phase)
                    .zip(q)
                    .map(|((a, p), qj)| a * (qj + p).sin())
                    .sum()
            })
            .collect())
    }

    /// `ε_d,i = dir_i (c_i + d_i |sin q_i|)` for `dir_i ∈ {+1, -1}`.
    pub fn direction_torque(&self, q: &[f64], dir: &[f64]) -> Result<Vec<f64>> {
        check_len("joint positions", self.dof(), q.len())?;
        check_len("direction signs", self.dof(), dir.len())?;
        if let Some(bad) = dir.iter().find(|s| **s != 1.0 && **s != -1.0) {
            return Err(Error::InvalidParameter(format!(
                "direction entries must be +1 or -1, got {bad}"
            )));
        }
        Ok((0..self.dof())
            .map(|i| dir[i] * (self.dir_offset[i] + self.dir_config_amp[i] * q[i].sin().abs()))
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseParams {
    /// Position measurement noise std, rad.
    pub sigma_q: f64,
    /// Per-joint torque measurement noise std, N·m.
    pub sigma_tau: Vec<f64>,
}

impl NoiseParams {
    pub fn noiseless(n: usize) -> Self {
        NoiseParams {
            sigma_q: 0.0,
            sigma_tau: vec![0.0; n],
        }
    }

    /// Torque noise set to `relative` times the per-joint standard deviation
    /// of the noiseless compensation torque over random in-limit states.
    pub fn calibrated(
        robot: &RobotModel,
        disturbance: &DisturbanceParams,
        sigma_q: f64,
        relative: f64,
    ) -> Result<Self> {
        const CALIBRATION_STATES: usize = 2000;
        let n = robot.dof();
        let probe = Plant::new(
            robot.clone(),
            disturbance.clone(),
            NoiseParams::noiseless(n),
            DriftDynParams::default_for(n),
        )?;
        let mut rng = seed::rng_for(0, &[seed::stream::NOISE_CALIBRATION]);
        let states = crate::learning::random_sample_states(&robot.joint_limits, CALIBRATION_STATES, &mut rng)?;
        let mut sum = vec![0.0; n];
        let mut sum_sq = vec![0.0; n];
        for (q, dq) in &states {
            let tau = probe.true_compensation_torque(q, dq)?;
            for j in 0..n {
                sum[j] += tau[j];
                sum_sq[j] += tau[j] * tau[j];
            }
        }
        let count = states.len() as f64;
        let sigma_tau = (0..n)
            .map(|j| {
                let mean = sum[j] / count;
                relative * (sum_sq[j] / count - mean * mean).max(0.0).sqrt()
            })
            .collect();
        Ok(NoiseParams { sigma_q, sigma_tau })
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        check_len("torque noise", n, self.sigma_tau.len())?;
        if !(self.sigma_q >= 0.0) || self.sigma_tau.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::InvalidParameter("noise std must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftDynParams {
    /// Per-joint effective inertia, kg·m².
    pub inertia: Vec<f64>,
    /// Per-joint viscous damping, N·m·s/rad.
    pub damping: Vec<f64>,
    /// Integration and control rate, Hz.
    pub rate: f64,
    /// Release duration, s.
    pub duration: f64,
}

impl DriftDynParams {
    pub fn default_for(n: usize) -> Self {
        const INERTIA: [f64; 6] = [0.08, 0.10, 0.05, 0.010, 0.006, 0.003];
        const DAMPING: [f64; 6] = [0.05, 0.08, 0.04, 0.010, 0.006, 0.003];
        DriftDynParams {
            inertia: (0..n).map(|i| INERTIA[i.min(5)]).collect(),
            damping: (0..n).map(|i| DAMPING[i.min(5)]).collect(),
            rate: 500.0,
            duration: 2.0,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        check_len("drift inertia", n, self.inertia.len())?;
        check_len("drift damping", n, self.damping.len())?;
        if self.inertia.iter().any(|m| !(*m > 0.0)) {
            return Err(Error::InvalidParameter("inertia must be > 0".into()));
        }
        if self.damping.iter().any(|b| !(*b >= 0.0)) {
            return Err(Error::InvalidParameter("damping must be >= 0".into()));
        }
        if !(self.rate > 0.0) || !(self.duration >= 0.0) {
            return Err(Error::InvalidParameter(
                "drift rate must be > 0 and duration >= 0".into(),
            ));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.duration * self.rate).round() as usize
    }
}

/// A torque law evaluated once per control step from the measured position
/// and the most recent position increment.
pub trait TorquePolicy {
    fn torque(&self, q: &[f64], dq: &[f64]) -> Result<Vec<f64>>;
}

impl<F> TorquePolicy for F
where
    F: Fn(&[f64], &[f64]) -> Result<Vec<f64>>,
{
    fn torque(&self, q: &[f64], dq: &[f64]) -> Result<Vec<f64>> {
        self(q, dq)
    }
}

/// Outcome of one release test.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftResult {
    /// Per-joint `|q(T) - q(0)|`, degrees.
    pub joint_drift_deg: Vec<f64>,
    /// Tool-point displacement, millimeters.
    pub cart_drift_mm: f64,
    pub final_q: Vec<f64>,
}

impl DriftResult {
    pub fn mean_joint_drift_deg(&self) -> f64 {
        self.joint_drift_deg.iter().sum::<f64>() / self.joint_drift_deg.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plant {
    pub robot: RobotModel,
    pub disturbance: DisturbanceParams,
    pub noise: NoiseParams,
    pub drift: DriftDynParams,
}

impl Plant {
    pub fn new(
        robot: RobotModel,
        disturbance: DisturbanceParams,
        noise: NoiseParams,
        drift: DriftDynParams,
    ) -> Result<Self> {
        robot.validate()?;
        let n = robot.dof();
        disturbance.validate(n)?;
        noise.validate(n)?;
        drift.validate(n)?;
        Ok(Plant {
            robot,
            disturbance,
            noise,
            drift,
        })
    }

    /// Fixture arm with the default disturbance, `σ_q = 0.002` rad and torque
    /// noise at 1% of each joint's torque spread.
    pub fn fixture() -> Self {
        let robot = RobotModel::mtm_like();
        let n = robot.dof();
        let disturbance = DisturbanceParams::default_for(n);
        let noise = NoiseParams::calibrated(&robot, &disturbance, 0.002, 0.01)
            .expect("fixture calibration");
        Plant::new(robot, disturbance, noise, DriftDynParams::default_for(n)).expect("fixture")
    }

    pub fn dof(&self) -> usize {
        self.robot.dof()
    }

    pub fn input_dim(&self) -> usize {
        encoded_width(&self.robot.joint_kinds())
    }

    pub fn disturbance_config(&self, q: &[f64]) -> Result<Vec<f64>> {
        self.disturbance.config_torque(q)
    }

    pub fn disturbance_direction(&self, q: &[f64], dir: &[f64]) -> Result<Vec<f64>> {
        self.disturbance.direction_torque(q, dir)
    }

    /// `τ_c = g(q) + ε_c(q) + ε_d⁺(q) ⊙ u(Δq) + ε_d⁻(q) ⊙ (1 - u(Δq))`.
    pub fn true_compensation_torque(&self, q: &[f64], dq: &[f64]) -> Result<Vec<f64>> {
        compensation_torque(&self.robot, &self.disturbance, q, dq)
    }

    /// Noisy observation of a static state. `dq` passes through unchanged.
    pub fn measure_sample(
        &self,
        q: &[f64],
        dq: &[f64],
        rng: &mut Rng,
    ) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let tau = self.true_compensation_torque(q, dq)?;
        let q_meas = q
            .iter()
            .map(|qi| qi + self.noise.sigma_q * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let tau_meas = tau
            .iter()
            .zip(&self.noise.sigma_tau)
            .map(|(t, s)| t + s * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Ok((q_meas, dq.to_vec(), tau_meas))
    }

    /// Releases the arm at rest at `q0` under `controller` and integrates
    /// `M_i q̈_i = u_i - τ_true,i(q, Δq) - b_i q̇_i` with semi-implicit Euler.
    ///
    /// `Δq` starts at `dq0` (the approach direction) and afterwards is the
    /// position change over the previous step.
    pub fn simulate_drift(
        &self,
        controller: &dyn TorquePolicy,
        q0: &[f64],
        dq0: &[f64],
    ) -> Result<DriftResult> {
        self.simulate_drift_observed(controller, q0, dq0, &mut |_, _| {})
    }

    /// As [`Plant::simulate_drift`], calling `observer(q, q̇)` after every step.
    pub fn simulate_drift_observed(
        &self,
        controller: &dyn TorquePolicy,
        q0: &[f64],
        dq0: &[f64],
        observer: &mut dyn FnMut(&[f64], &[f64]),
    ) -> Result<DriftResult> {
        let n = self.dof();
        check_len("initial position", n, q0.len())?;
        check_len("initial increment", n, dq0.len())?;
        let dt = 1.0 / self.drift.rate;
        let mut q = q0.to_vec();
        let mut dq = dq0.to_vec();
        let mut vel = vec![0.0; n];
        for k in 0..self.drift.steps() {
            let u = controller.torque(&q, &dq)?;
            check_len("controller output", n, u.len())?;
            let tau = self.true_compensation_torque(&q, &dq)?;
            for i in 0..n {
                let acc = (u[i] - tau[i] - self.drift.damping[i] * vel[i]) / self.drift.inertia[i];
                vel[i] += acc * dt;
                let next = q[i] + vel[i] * dt;
                dq[i] = next - q[i];
                q[i] = next;
                if !q[i].is_finite() || !vel[i].is_finite() {
                    return Err(Error::NonFiniteState {
                        step: k,
                        time: (k + 1) as f64 * dt,
                        joint: i,
                    });
                }
            }
            observer(&q, &vel);
        }
        let joint_drift_deg = q
            .iter()
            .zip(q0)
            .map(|(a, b)| (a - b).abs().to_degrees())
            .collect();
        let tip0 = self.robot.tip_position(q0)?;
        let tip1 = self.robot.tip_position(&q)?;
        Ok(DriftResult {
            joint_drift_deg,
            cart_drift_mm: (tip1 - tip0).norm() * 1000.0,
            final_q: q,
        })
    }

    /// Mechanical energy `½ Σ M_i q̇_i² + U(q)` of the drift model.
    pub fn drift_energy(&self, q: &[f64], vel: &[f64]) -> Result<f64> {
        let kinetic: f64 = self
            .drift
            .inertia
            .iter()
            .zip(vel)
            .map(|(m, v)| 0.5 * m * v * v)
            .sum();
        Ok(kinetic + self.robot.potential_energy(q)?)
    }
}

/// Compensation torque of an arbitrary robot/disturbance pair; shared by the
/// plant and analytic teachers.
pub(crate) fn compensation_torque(
    robot: &RobotModel,
    disturbance: &DisturbanceParams,
    q: &[f64],
    dq: &[f64],
) -> Result<Vec<f64>> {
    check_len("joint increments", robot.dof(), dq.len())?;
    let g = robot.gravity_torque(q)?;
    let eps_c = disturbance.config_torque(q)?;
    let dir: Vec<f64> = dq.iter().map(|&d| direction_of(d)).collect();
    let eps_d = disturbance.direction_torque(q, &dir)?;
    Ok((0..g.len()).map(|i| g[i] + eps_c[i] + eps_d[i]).collect())
}
