//! Shared domain types: poses, trajectories, tools and cell events.

mod event;
mod pose;
mod trajectory;

pub use event::{CellEvent, EventKind};
pub use pose::{slerp, Pose, Twist};
pub use trajectory::{JointState, Sample, SampleDoc, Trajectory, TrajectoryKind, Waypoint};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid pose: {0}")]
    InvalidPose(String),
    #[error("twist components must be finite")]
    InvalidTwist,
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("time {t} outside trajectory range [0, {duration}]")]
    OutOfRange { t: f64, duration: f64 },
}

/// Services a connector or tool changer can supply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Resource {
    Power,
    Data,
    Pneumatic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolDescriptor {
    pub tool_id: String,
    /// Flange to tool tip.
    pub tcp_offset: Pose,
    #[serde(default)]
    pub mass: f64,
    #[serde(default)]
    pub resource_needs: BTreeSet<Resource>,
}

impl ToolDescriptor {
    pub fn new(tool_id: impl Into<String>, tcp_offset: Pose) -> Self {
        Self {
            tool_id: tool_id.into(),
            tcp_offset,
            mass: 0.0,
            resource_needs: BTreeSet::new(),
        }
    }
}
