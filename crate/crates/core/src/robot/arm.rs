//! Arm descriptions.
//!
//! Links use the standard Denavit–Hartenberg convention: the transform from
//! frame i-1 to frame i is `Rz(theta + offset) · Tz(d) · Tx(a) · Rx(alpha)`,
//! and joint i rotates about the z axis of frame i-1.

use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::RobotError;
use crate::model::Pose;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DhRow {
    pub a: f64,
    pub alpha: f64,
    pub d: f64,
    #[serde(default)]
    pub theta_offset: f64,
}

impl DhRow {
    pub const fn new(a: f64, alpha: f64, d: f64, theta_offset: f64) -> Self {
        Self {
            a,
            alpha,
            d,
            theta_offset,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointLimit {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmModel {
    pub name: String,
    pub dh_rows: Vec<DhRow>,
    pub joint_limits: Vec<JointLimit>,
    pub max_joint_speed: f64,
    #[serde(default)]
    pub base_pose: Pose,
}

/// Header written above every arm config file.
pub const CONFIG_HEADER: &str = "standard DH: T(i-1,i) = Rz(theta+theta_offset) Tz(d) Tx(a) Rx(alpha); meters and radians";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArmFile {
    #[serde(default, rename = "_convention")]
    convention: Option<String>,
    name: String,
    dh_rows: Vec<DhRow>,
    joint_limits: Vec<JointLimit>,
    max_joint_speed: f64,
    #[serde(default)]
    base_pose: Pose,
}

impl ArmModel {
    /// The default 6-DOF desk arm.
    pub fn desk6() -> Self {
        let rows = vec![
            DhRow::new(0.0, FRAC_PI_2, 0.30, 0.0),
            DhRow::new(0.25, 0.0, 0.0, 0.0),
            DhRow::new(0.20, 0.0, 0.0, 0.0),
            DhRow::new(0.0, FRAC_PI_2, 0.0, 0.0),
            DhRow::new(0.0, -FRAC_PI_2, 0.15, 0.0),
            DhRow::new(0.0, 0.0, 0.08, 0.0),
        ];
        Self::uniform("desk6", rows, 2.9, 3.0)
    }

    /// A redundant 7-DOF variant with alternating joint axes.
    pub fn desk7() -> Self {
        let rows = vec![
            DhRow::new(0.0, -FRAC_PI_2, 0.30, 0.0),
            DhRow::new(0.0, FRAC_PI_2, 0.0, 0.0),
            DhRow::new(0.0, -FRAC_PI_2, 0.25, 0.0),
            DhRow::new(0.0, FRAC_PI_2, 0.0, 0.0),
            DhRow::new(0.0, -FRAC_PI_2, 0.22, 0.0),
            DhRow::new(0.0, FRAC_PI_2, 0.0, 0.0),
            DhRow::new(0.0, 0.0, 0.08, 0.0),
        ];
        Self::uniform("desk7", rows, 2.9, 3.0)
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "desk6" => Some(Self::desk6()),
            "desk7" => Some(Self::desk7()),
            _ => None,
        }
    }

    pub fn uniform(name: &str, dh_rows: Vec<DhRow>, limit: f64, max_joint_speed: f64) -> Self {
        let joint_limits = vec![JointLimit { min: -limit, max: limit }; dh_rows.len()];
        Self {
            name: name.to_string(),
            dh_rows,
            joint_limits,
            max_joint_speed,
            base_pose: Pose::identity(),
        }
    }

    pub fn with_base(mut self, base_pose: Pose) -> Self {
        self.base_pose = base_pose;
        self
    }

    pub fn dof(&self) -> usize {
        self.dh_rows.len()
    }

    pub fn validate(&self) -> Result<(), RobotError> {
        let n = self.dh_rows.len();
        if !(1..=7).contains(&n) {
            return Err(RobotError::InvalidModel(format!("{n} joints, expected 1..=7")));
        }
        if self.joint_limits.len() != n {
            return Err(RobotError::InvalidModel("one joint limit per DH row required".into()));
        }
        if let Some(i) = self.joint_limits.iter().position(|l| !(l.min < l.max)) {
            return Err(RobotError::InvalidModel(format!("joint {i}: min must be < max")));
        }
        if !(self.max_joint_speed > 0.0) {
            return Err(RobotError::InvalidModel("max_joint_speed must be > 0".into()));
        }
        let finite = self
            .dh_rows
            .iter()
            .all(|r| [r.a, r.alpha, r.d, r.theta_offset].iter().all(|v| v.is_finite()));
        if !finite || !self.base_pose.is_finite() {
            return Err(RobotError::InvalidModel("non-finite parameter".into()));
        }
        Ok(())
    }

    pub fn check_limits(&self, q: &[f64]) -> Result<(), RobotError> {
        if q.len() != self.dof() {
            return Err(RobotError::DofMismatch {
                expected: self.dof(),
                got: q.len(),
            });
        }
        for (i, (v, lim)) in q.iter().zip(&self.joint_limits).enumerate() {
            if !(lim.min..=lim.max).contains(v) {
                return Err(RobotError::JointLimit { joint: i, value: *v });
            }
        }
        Ok(())
    }

    pub fn clamp(&self, q: &mut [f64]) {
        for (v, lim) in q.iter_mut().zip(&self.joint_limits) {
            *v = v.clamp(lim.min, lim.max);
        }
    }

    pub fn from_json(text: &str) -> Result<Self, RobotError> {
        let file: ArmFile = serde_json::from_str(text).map_err(|e| RobotError::InvalidModel(e.to_string()))?;
        let model = ArmModel {
            name: file.name,
            dh_rows: file.dh_rows,
            joint_limits: file.joint_limits,
            max_joint_speed: file.max_joint_speed,
            base_pose: file.base_pose,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn load(path: &Path) -> Result<Self, RobotError> {
        let text = std::fs::read_to_string(path).map_err(|e| RobotError::InvalidModel(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let file = ArmFile {
            convention: Some(CONFIG_HEADER.to_string()),
            name: self.name.clone(),
            dh_rows: self.dh_rows.clone(),
            joint_limits: self.joint_limits.clone(),
            max_joint_speed: self.max_joint_speed,
            base_pose: self.base_pose,
        };
        serde_json::to_string_pretty(&file).expect("arm model serializes")
    }
}
