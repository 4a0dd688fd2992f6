//! Serial-manipulator kinematics and static gravity model.
//!
//! Link `i` is attached to joint `i`. Its world frame is
//! `T_i = T_{i-1} * origin_i * motion_i(q_i)`, where `origin_i` is a fixed
//! transform from the parent frame and `motion_i` rotates (revolute) or
//! translates (prismatic) along the joint axis expressed in the link frame.

use std::path::Path;

use nalgebra::{Isometry3, Point3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Standard gravitational acceleration magnitude, m/s².
pub const STANDARD_GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointKind {
    Revolute,
    Prismatic,
}

impl JointKind {
    /// Single-letter code used in model file headers.
    pub fn code(self) -> char {
        match self {
            JointKind::Revolute => 'R',
            JointKind::Prismatic => 'P',
        }
    }

    pub fn from_code(c: &str) -> Option<Self> {
        match c {
            "R" => Some(JointKind::Revolute),
            "P" => Some(JointKind::Prismatic),
            _ => None,
        }
    }
}

/// Joint and inertial description of one link.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkParams {
    pub joint_kind: JointKind,
    /// Unit joint axis in the link frame.
    pub joint_axis: Vector3<f64>,
    /// Translation of the joint frame relative to the parent frame, meters.
    pub origin_xyz: Vector3<f64>,
    /// Roll-pitch-yaw of the joint frame relative to the parent frame, radians.
    pub origin_rpy: Vector3<f64>,
    /// Link mass, kg.
    pub mass: f64,
    /// Center of mass in the link frame, meters.
    pub com: Vector3<f64>,
}

impl LinkParams {
    fn origin(&self) -> Isometry3<f64> {
        Isometry3::from_parts(
            Translation3::from(self.origin_xyz),
            UnitQuaternion::from_euler_angles(
                self.origin_rpy.x,
                self.origin_rpy.y,
                self.origin_rpy.z,
            ),
        )
    }

    fn motion(&self, q: f64) -> Isometry3<f64> {
        match self.joint_kind {
            JointKind::Revolute => Isometry3::from_parts(
                Translation3::identity(),
                UnitQuaternion::from_scaled_axis(self.joint_axis * q),
            ),
            JointKind::Prismatic => Isometry3::from_parts(
                Translation3::from(self.joint_axis * q),
                UnitQuaternion::identity(),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotModel {
    pub name: String,
    pub links: Vec<LinkParams>,
    /// Gravitational acceleration in the world frame, m/s².
    pub gravity_accel: Vector3<f64>,
    /// Per-joint `[lo, hi]` position limits (rad or m).
    pub joint_limits: Vec<[f64; 2]>,
    /// Tool point in the last link frame, used for Cartesian drift.
    pub tip_offset: Vector3<f64>,
}

impl RobotModel {
    pub fn new(
        name: impl Into<String>,
        links: Vec<LinkParams>,
        gravity_accel: Vector3<f64>,
        joint_limits: Vec<[f64; 2]>,
    ) -> Result<Self> {
        let model = RobotModel {
            name: name.into(),
            links,
            gravity_accel,
            joint_limits,
            tip_offset: Vector3::zeros(),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.links.is_empty() {
            return Err(Error::InvalidParameter("robot has no links".into()));
        }
        check_len("joint limits", self.links.len(), self.joint_limits.len())?;
        for (i, link) in self.links.iter().enumerate() {
            if !(link.mass >= 0.0) || !link.mass.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "link {i}: mass must be finite and >= 0, got {}",
                    link.mass
                )));
            }
            if (link.joint_axis.norm() - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "link {i}: joint axis must be unit length, |axis| = {}",
                    link.joint_axis.norm()
                )));
            }
            let [lo, hi] = self.joint_limits[i];
            if !(lo < hi) {
                return Err(Error::InvalidParameter(format!(
                    "joint {i}: limits [{lo}, {hi}] are not increasing"
                )));
            }
        }
        Ok(())
    }

    pub fn dof(&self) -> usize {
        self.links.len()
    }

    pub fn joint_kinds(&self) -> Vec<JointKind> {
        self.links.iter().map(|l| l.joint_kind).collect()
    }

    /// World frames of all links; frame `i` depends only on `q[..=i]`.
    pub fn forward_kinematics(&self, q: &[f64]) -> Result<Vec<Isometry3<f64>>> {
        check_len("joint positions", self.dof(), q.len())?;
        let mut frames = Vec::with_capacity(self.dof());
        let mut current = Isometry3::identity();
        for (link, &qi) in self.links.iter().zip(q) {
            current = current * link.origin() * link.motion(qi);
            frames.push(current);
        }
        Ok(frames)
    }

    /// World position of the tool point.
    pub fn tip_position(&self, q: &[f64]) -> Result<Point3<f64>> {
        let frames = self.forward_kinematics(q)?;
        let last = frames.last().expect("validated non-empty chain");
        Ok(last * Point3::from(self.tip_offset))
    }

    /// Gravitational potential energy `U(q) = -Σ m_i g · p_com,i`, joules.
    pub fn potential_energy(&self, q: &[f64]) -> Result<f64> {
        let frames = self.forward_kinematics(q)?;
        Ok(self
            .links
            .iter()
            .zip(&frames)
            .map(|(link, frame)| {
                let p = frame * Point3::from(link.com);
                -link.mass * self.gravity_accel.dot(&p.coords)
            })
            .sum())
    }

    /// Static holding torque `g(q) = ∂U/∂q`.
    ///
    /// Computed as the Jacobian transpose applied to the reversed link
    /// weights, accumulated from the tip towards the base.
    pub fn gravity_torque(&self, q: &[f64]) -> Result<Vec<f64>> {
        let frames = self.forward_kinematics(q)?;
        let n = self.dof();
        let mut tau = vec![0.0; n];
        // Sum of reversed weights and of their moments about the world origin.
        let mut force = Vector3::zeros();
        let mut moment = Vector3::zeros();
        for i in (0..n).rev() {
            let link = &self.links[i];
            let frame = &frames[i];
            let p_com = (frame * Point3::from(link.com)).coords;
            let w = -link.mass * self.gravity_accel;
            force += w;
            moment += p_com.cross(&w);

            let axis = frame.rotation * link.joint_axis;
            tau[i] = match link.joint_kind {
                JointKind::Revolute => {
                    let origin = frame.translation.vector;
                    axis.dot(&(moment - origin.cross(&force)))
                }
                JointKind::Prismatic => axis.dot(&force),
            };
        }
        Ok(tau)
    }

    /// Synthetic 6-DOF fixture with MTM-like proportions.
    ///
    /// Joint 1 is a vertical yaw, joints 2, 3 and 5 pitch, joints 4 and 6
    /// roll. Masses decrease from 2.5 kg to 0.2 kg towards the tip. The
    /// parameters are invented; they only need to give every joint a
    /// configuration-dependent gravity load of realistic magnitude.
    pub fn mtm_like() -> Self {
        let x = Vector3::x();
        let y = Vector3::y();
        let z = Vector3::z();
        let link = |axis: Vector3<f64>, xyz: [f64; 3], mass: f64, com: [f64; 3]| LinkParams {
            joint_kind: JointKind::Revolute,
            joint_axis: axis,
            origin_xyz: Vector3::from(xyz),
            origin_rpy: Vector3::zeros(),
            mass,
            com: Vector3::from(com),
        };
        let links = vec![
            link(z, [0.0, 0.0, 0.0], 2.5, [0.02, 0.0, 0.12]),
            link(y, [0.0, 0.0, 0.2], 1.8, [0.16, 0.01, 0.02]),
            link(y, [0.3, 0.0, 0.0], 1.2, [0.18, -0.01, -0.03]),
            link(x, [0.35, 0.0, -0.05], 0.8, [0.06, 0.08, -0.01]),
            link(y, [0.12, 0.0, 0.0], 0.4, [0.07, 0.01, 0.0]),
            link(x, [0.1, 0.0, 0.0], 0.2, [0.03, 0.08, 0.0]),
        ];
        let limits = vec![
            [-0.7, 1.1],
            [-0.2, 0.5],
            [-0.4, 0.4],
            [-0.7, 0.7],
            [-0.4, 0.4],
            [-0.6, 0.6],
        ];
        let mut model = RobotModel::new(
            "mtm_like",
            links,
            Vector3::new(0.0, 0.0, -STANDARD_GRAVITY),
            limits,
        )
        .expect("fixture is valid");
        model.tip_offset = Vector3::new(0.08, 0.0, 0.0);
        model
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Parse { message, .. } => Error::Parse {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?).map_err(|e| Error::io(path, e))
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: RobotFile = toml::from_str(text).map_err(|e| Error::Parse {
            path: "<robot>".into(),
            message: e.to_string(),
        })?;
        file.into_model()
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(&RobotFile::from_model(self)).map_err(|e| Error::Parse {
            path: "<robot>".into(),
            message: e.to_string(),
        })
    }
}

/// On-disk robot description: one `[[link]]` block per joint.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct RobotFile {
    pub name: String,
    pub gravity: [f64; 3],
    #[serde(default)]
    pub tip: [f64; 3],
    pub link: Vec<LinkBlock>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct LinkBlock {
    pub kind: JointKind,
    pub axis: [f64; 3],
    #[serde(default)]
    pub xyz: [f64; 3],
    #[serde(default)]
    pub rpy: [f64; 3],
    pub mass: f64,
    pub com: [f64; 3],
    pub limits: [f64; 2],
}

impl RobotFile {
    pub(crate) fn from_model(m: &RobotModel) -> Self {
        let v = |v: &Vector3<f64>| [v.x, v.y, v.z];
        RobotFile {
            name: m.name.clone(),
            gravity: v(&m.gravity_accel),
            tip: v(&m.tip_offset),
            link: m
                .links
                .iter()
                .zip(&m.joint_limits)
                .map(|(l, lim)| LinkBlock {
                    kind: l.joint_kind,
                    axis: v(&l.joint_axis),
                    xyz: v(&l.origin_xyz),
                    rpy: v(&l.origin_rpy),
                    mass: l.mass,
                    com: v(&l.com),
                    limits: *lim,
                })
                .collect(),
        }
    }

    pub(crate) fn into_model(self) -> Result<RobotModel> {
        let limits = self.link.iter().map(|b| b.limits).collect();
        let links = self
            .link
            .into_iter()
            .map(|b| LinkParams {
                joint_kind: b.kind,
                joint_axis: Vector3::from(b.axis),
                origin_xyz: Vector3::from(b.xyz),
                origin_rpy: Vector3::from(b.rpy),
                mass: b.mass,
                com: Vector3::from(b.com),
            })
            .collect();
        let mut model = RobotModel::new(self.name, links, Vector3::from(self.gravity), limits)?;
        model.tip_offset = Vector3::from(self.tip);
        Ok(model)
    }
}
