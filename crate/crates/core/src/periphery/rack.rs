use serde::{Deserialize, Serialize};

use super::PeripheryError;
use crate::model::{Pose, ToolDescriptor};
use crate::registry::{Capability, FieldType, ModuleDescriptor, ModuleKind, ParamsSchema};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RackSlot {
    /// Flange pose for picking up or dropping off at this slot, cell-root frame.
    pub slot_pose: Pose,
    pub occupant: Option<ToolDescriptor>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolRack {
    pub slots: Vec<RackSlot>,
}

impl ToolRack {
    pub fn new(slots: Vec<RackSlot>) -> Result<Self, PeripheryError> {
        let mut rack = ToolRack { slots: Vec::new() };
        for slot in slots {
            if let Some(tool) = &slot.occupant {
                if rack.find(&tool.tool_id).is_some() {
                    return Err(PeripheryError::DuplicateTool(tool.tool_id.clone()));
                }
            }
            rack.slots.push(slot);
        }
        Ok(rack)
    }

    pub fn descriptor(&self, name: &str, mount_pose: Pose) -> ModuleDescriptor {
        ModuleDescriptor {
            name: name.to_string(),
            kind: ModuleKind::ToolRack,
            capabilities: vec![
                Capability::new("take", ParamsSchema::empty().field("tool_id", FieldType::String, true)),
                Capability::new(
                    "put",
                    ParamsSchema::empty()
                        .field("tool_id", FieldType::String, true)
                        .field("slot", FieldType::Integer, true),
                ),
                Capability::new("list_slots", ParamsSchema::empty()),
            ],
            resources_required: Default::default(),
            mount_pose,
        }
    }

    pub fn find(&self, tool_id: &str) -> Option<usize> {
        self.slots
            .iter()
            .position(|s| s.occupant.as_ref().is_some_and(|t| t.tool_id == tool_id))
    }

    pub fn slot(&self, i: usize) -> Result<&RackSlot, PeripheryError> {
        self.slots.get(i).ok_or(PeripheryError::UnknownSlot(i))
    }

    pub fn tool_count(&self) -> usize {
        self.slots.iter().filter(|s| s.occupant.is_some()).count()
    }

    /// Removes `tool_id` from whichever slot holds it.
    pub fn take(&mut self, tool_id: &str) -> Result<(usize, ToolDescriptor), PeripheryError> {
        let i = self.find(tool_id).ok_or_else(|| PeripheryError::UnknownTool(tool_id.to_string()))?;
        Ok((i, self.take_slot(i)?))
    }

    pub fn take_slot(&mut self, slot: usize) -> Result<ToolDescriptor, PeripheryError> {
        let s = self.slots.get_mut(slot).ok_or(PeripheryError::UnknownSlot(slot))?;
        s.occupant.take().ok_or(PeripheryError::SlotEmpty(slot))
    }

    pub fn check_put(&self, tool_id: &str, slot: usize) -> Result<(), PeripheryError> {
        let s = self.slot(slot)?;
        if s.occupant.is_some() {
            return Err(PeripheryError::SlotOccupied(slot));
        }
        if self.find(tool_id).is_some() {
            return Err(PeripheryError::DuplicateTool(tool_id.to_string()));
        }
        Ok(())
    }

    pub fn put(&mut self, tool: ToolDescriptor, slot: usize) -> Result<(), PeripheryError> {
        self.check_put(&tool.tool_id, slot)?;
        self.slots[slot].occupant = Some(tool);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rack() -> ToolRack {
        ToolRack::new(vec![
            RackSlot {
                slot_pose: Pose::from_translation(0.3, 0.3, 0.2),
                occupant: Some(ToolDescriptor::new("driver", Pose::from_translation(0.0, 0.0, 0.1))),
            },
            RackSlot {
                slot_pose: Pose::from_translation(0.4, 0.3, 0.2),
                occupant: None,
            },
        ])
        .unwrap()
    }

    #[test]
    fn take_put_round_trip() {
        let mut r = rack();
        let before = r.clone();
        let (slot, tool) = r.take("driver").unwrap();
        assert_eq!(slot, 0);
        assert_eq!(r.tool_count(), 0);
        r.put(tool, slot).unwrap();
        assert_eq!(r, before);
    }

    #[test]
    fn errors() {
        let mut r = rack();
        assert_eq!(r.take_slot(1), Err(PeripheryError::SlotEmpty(1)));
        assert_eq!(r.take("gripper"), Err(PeripheryError::UnknownTool("gripper".into())));
        let tool = ToolDescriptor::new("x", Pose::identity());
        assert_eq!(r.put(tool.clone(), 0), Err(PeripheryError::SlotOccupied(0)));
        assert_eq!(r.put(tool, 7), Err(PeripheryError::UnknownSlot(7)));
        let dup = ToolDescriptor::new("driver", Pose::identity());
        assert_eq!(r.put(dup, 1), Err(PeripheryError::DuplicateTool("driver".into())));
    }
}
