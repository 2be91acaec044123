use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::Pose;
use crate::periphery::RackSlot;
use crate::registry::{Capability, FieldType, ModuleDescriptor, ModuleKind, ParamsSchema};
use crate::robot::{ArmModel, ControlLimits, RobotError};

/// An arm given by builtin name, by path to a config file, or inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ArmRef {
    Named(String),
    Inline(ArmModel),
}

impl ArmRef {
    /// Relative paths are taken from `base_dir`.
    pub fn resolve(&self, base_dir: Option<&Path>) -> Result<ArmModel, RobotError> {
        match self {
            ArmRef::Inline(m) => {
                m.validate()?;
                Ok(m.clone())
            }
            ArmRef::Named(name) => {
                if let Some(m) = ArmModel::builtin(name) {
                    return Ok(m);
                }
                let path = Path::new(name);
                let path = match base_dir {
                    Some(dir) if path.is_relative() => dir.join(path),
                    _ => path.to_path_buf(),
                };
                ArmModel::load(&path)
            }
        }
    }
}

fn one() -> usize {
    1
}

/// A locally simulated module the cell can bring up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModuleSpec {
    Robot {
        name: String,
        arm: ArmRef,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        base_pose: Option<Pose>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        home: Option<Vec<f64>>,
        #[serde(default)]
        limits: ControlLimits,
    },
    RotaryTable {
        name: String,
        axis_pose: Pose,
        handle_offset: Pose,
        #[serde(default = "one")]
        handle_count: usize,
        #[serde(default)]
        angle: f64,
    },
    ToolRack {
        name: String,
        #[serde(default)]
        mount_pose: Pose,
        slots: Vec<RackSlot>,
    },
    Fixture {
        name: String,
        /// World pose, or the pose relative to the table top when
        /// `on_table` is set.
        pose: Pose,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        on_table: Option<String>,
    },
}

impl ModuleSpec {
    pub fn name(&self) -> &str {
        match self {
            ModuleSpec::Robot { name, .. }
            | ModuleSpec::RotaryTable { name, .. }
            | ModuleSpec::ToolRack { name, .. }
            | ModuleSpec::Fixture { name, .. } => name,
        }
    }
}

pub const VERB_RUN_SKILL: &str = "run_skill";

/// Verbs every simulated robot exposes.
pub fn robot_descriptor(name: &str, model: &ArmModel) -> ModuleDescriptor {
    use FieldType::*;
    let caps = vec![
        Capability::new(
            VERB_RUN_SKILL,
            ParamsSchema::empty().field("skill", String, true).field("version", Integer, false),
        ),
        Capability::new("execute_trajectory", ParamsSchema::empty().field("trajectory", Object, true)),
        Capability::new(
            "set_velocity",
            ParamsSchema::empty().field("lin", Array, true).field("ang", Array, true),
        ),
        Capability::new("free_drag_enter", ParamsSchema::empty()),
        Capability::new("free_drag_exit", ParamsSchema::empty()),
        Capability::new("apply_drag", ParamsSchema::empty().field("delta", Object, true)),
        Capability::new(
            "equip_tool",
            ParamsSchema::empty().field("tool_id", String, true).field("rack", String, false),
        ),
        Capability::new(
            "unequip_tool",
            ParamsSchema::empty().field("rack", String, false).field("slot", Integer, false),
        ),
        Capability::new("get_state", ParamsSchema::empty()),
    ];
    ModuleDescriptor {
        name: name.to_string(),
        kind: ModuleKind::Robot,
        capabilities: caps,
        resources_required: Default::default(),
        mount_pose: model.base_pose,
    }
}
