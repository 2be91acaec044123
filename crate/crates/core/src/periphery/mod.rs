//! Passive and peripheral cell modules: rotary table, tool rack, fixture.

mod fixture;
mod rack;
mod rotary;

pub use fixture::Fixture;
pub use rack::{RackSlot, ToolRack};
pub use rotary::{wrap_angle, Brake, RotaryTable, GRASP_TOLERANCE};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PeripheryError {
    #[error("brake already released")]
    AlreadyReleased,
    #[error("brake already engaged")]
    AlreadyEngaged,
    #[error("tcp is {0:.4} m from the nearest handle")]
    NotGrasping(f64),
    #[error("brake is engaged")]
    BrakeEngaged,
    #[error("slot {0} is empty")]
    SlotEmpty(usize),
    #[error("slot {0} is occupied")]
    SlotOccupied(usize),
    #[error("no slot {0}")]
    UnknownSlot(usize),
    #[error("unknown tool '{0}'")]
    UnknownTool(String),
    #[error("tool '{0}' is already in the rack")]
    DuplicateTool(String),
    #[error("fixture already clamped")]
    AlreadyClamped,
    #[error("fixture not clamped")]
    NotClamped,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl PeripheryError {
    pub fn code(&self) -> &'static str {
        match self {
            PeripheryError::AlreadyReleased => "AlreadyReleased",
            PeripheryError::AlreadyEngaged => "AlreadyEngaged",
            PeripheryError::NotGrasping(_) => "NotGrasping",
            PeripheryError::BrakeEngaged => "BrakeEngaged",
            PeripheryError::SlotEmpty(_) => "SlotEmpty",
            PeripheryError::SlotOccupied(_) => "SlotOccupied",
            PeripheryError::UnknownSlot(_) => "UnknownSlot",
            PeripheryError::UnknownTool(_) => "UnknownTool",
            PeripheryError::DuplicateTool(_) => "DuplicateTool",
            PeripheryError::AlreadyClamped => "AlreadyClamped",
            PeripheryError::NotClamped => "NotClamped",
            PeripheryError::InvalidConfig(_) => "InvalidConfig",
        }
    }
}
