use serde::{Deserialize, Serialize};

use super::PeripheryError;
use crate::model::Pose;
use crate::registry::{Capability, FieldType, ModuleDescriptor, ModuleKind, ParamsSchema};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fixture {
    pub fixture_pose: Pose,
    pub held_part: Option<String>,
    pub clamped: bool,
}

impl Fixture {
    pub fn new(fixture_pose: Pose) -> Self {
        Self {
            fixture_pose,
            held_part: None,
            clamped: false,
        }
    }

    pub fn descriptor(&self, name: &str) -> ModuleDescriptor {
        ModuleDescriptor {
            name: name.to_string(),
            kind: ModuleKind::Fixture,
            capabilities: vec![
                Capability::new("clamp", ParamsSchema::empty().field("part_id", FieldType::String, false)),
                Capability::new("unclamp", ParamsSchema::empty()),
            ],
            resources_required: Default::default(),
            mount_pose: self.fixture_pose,
        }
    }

    pub fn clamp(&mut self, part_id: Option<String>) -> Result<(), PeripheryError> {
        if self.clamped {
            return Err(PeripheryError::AlreadyClamped);
        }
        self.clamped = true;
        if part_id.is_some() {
            self.held_part = part_id;
        }
        Ok(())
    }

    pub fn unclamp(&mut self) -> Result<(), PeripheryError> {
        if !self.clamped {
            return Err(PeripheryError::NotClamped);
        }
        self.clamped = false;
        Ok(())
    }

    /// Pose of the held part; it follows the fixture only while clamped.
    pub fn part_pose(&self) -> Option<Pose> {
        match (&self.held_part, self.clamped) {
            (Some(_), true) => Some(self.fixture_pose),
            _ => None,
        }
    }

    /// Moves the fixture, e.g. when it rides on a rotary table.
    pub fn set_pose(&mut self, pose: Pose) {
        self.fixture_pose = pose;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamp_cycle() {
        let mut f = Fixture::new(Pose::from_translation(0.5, 0.0, 0.1));
        assert_eq!(f.unclamp(), Err(PeripheryError::NotClamped));
        f.clamp(Some("housing".into())).unwrap();
        assert_eq!(f.clamp(None), Err(PeripheryError::AlreadyClamped));
        f.set_pose(Pose::rot_z(0.3));
        assert_eq!(f.part_pose(), Some(Pose::rot_z(0.3)));
        f.unclamp().unwrap();
        assert_eq!(f.part_pose(), None);
    }
}
