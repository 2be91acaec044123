//! Robot abstraction layer and a deterministic kinematic arm simulator.
//!
//! Robots are described by data ([`ArmModel`]) so swapping one arm for
//! another is a configuration change. Two control strategies are
//! provided on top of the kinematics: trajectory tracking and Cartesian
//! velocity control, plus a free-drag mode for kinesthetic teaching.

mod arm;
mod kinematics;
mod sim;

pub use arm::{ArmModel, DhRow, JointLimit, CONFIG_HEADER};
pub use kinematics::{dls_step, forward_kinematics, jacobian, solve_ik, solve_ik_tcp, IkSolution};
pub use sim::{RobotMode, RobotSim, RobotState, StepOutcome};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlLimits {
    pub max_linear: f64,
    pub max_angular: f64,
    pub ik_damping: f64,
    pub ik_tol_linear: f64,
    pub ik_tol_angular: f64,
    pub ik_max_iters: usize,
    /// Proportional gain pulling the tcp back onto the integrated twist
    /// reference in velocity mode, 1/s.
    pub velocity_gain: f64,
    /// Ticks between ROBOT_STATE events.
    pub state_every: u32,
}

impl Default for ControlLimits {
    fn default() -> Self {
        Self {
            max_linear: 0.25,
            max_angular: 1.0,
            ik_damping: 0.05,
            ik_tol_linear: 1e-6,
            ik_tol_angular: 1e-6,
            ik_max_iters: 200,
            velocity_gain: 10.0,
            state_every: 10,
        }
    }
}

impl ControlLimits {
    pub fn validate(&self) -> Result<(), RobotError> {
        let positive = [
            self.max_linear,
            self.max_angular,
            self.ik_damping,
            self.ik_tol_linear,
            self.ik_tol_angular,
        ]
        .iter()
        .all(|v| *v > 0.0 && v.is_finite());
        if !positive || self.ik_max_iters == 0 || self.state_every == 0 || self.velocity_gain < 0.0 {
            return Err(RobotError::InvalidModel("control limits must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RobotError {
    #[error("joint {joint} at {value} rad is outside its limits")]
    JointLimit { joint: usize, value: f64 },
    #[error("expected {expected} joint values, got {got}")]
    DofMismatch { expected: usize, got: usize },
    #[error("IK did not converge after {iterations} iterations (error {position_error:.3e} m, {angle_error:.3e} rad)")]
    NoConvergence {
        iterations: usize,
        position_error: f64,
        angle_error: f64,
    },
    #[error("robot busy in {0:?} mode")]
    BusyMode(RobotMode),
    #[error("segment {segment} needs {required:.3} rad/s on joint {joint} (limit {limit})")]
    SpeedInfeasible {
        segment: usize,
        joint: usize,
        required: f64,
        limit: f64,
    },
    #[error("no IK solution for sample {sample}: {reason}")]
    IkFailure { sample: usize, reason: String },
    #[error("drag is only accepted in FREE_DRAG mode")]
    DragOutsideFreeMode,
    #[error("drag displacement {0:.3} m exceeds 0.05 m")]
    DragTooLarge(f64),
    #[error("a tool is already equipped")]
    ToolAlreadyEquipped,
    #[error("no tool equipped")]
    NoToolEquipped,
    #[error("flange is {distance:.4} m / {angle:.4} rad away from the rack slot")]
    NotAtRack { distance: f64, angle: f64 },
    #[error("invalid arm model: {0}")]
    InvalidModel(String),
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
}

impl RobotError {
    pub fn code(&self) -> &'static str {
        match self {
            RobotError::JointLimit { .. } => "JointLimit",
            RobotError::DofMismatch { .. } => "DofMismatch",
            RobotError::NoConvergence { .. } => "NoConvergence",
            RobotError::BusyMode(_) => "BusyMode",
            RobotError::SpeedInfeasible { .. } => "SpeedInfeasible",
            RobotError::IkFailure { .. } => "IKFailure",
            RobotError::DragOutsideFreeMode => "DragOutsideFreeMode",
            RobotError::DragTooLarge(_) => "DragTooLarge",
            RobotError::ToolAlreadyEquipped => "ToolAlreadyEquipped",
            RobotError::NoToolEquipped => "NoToolEquipped",
            RobotError::NotAtRack { .. } => "NotAtRack",
            RobotError::InvalidModel(_) => "InvalidModel",
            RobotError::InvalidTrajectory(_) => "InvalidTrajectory",
        }
    }
}
