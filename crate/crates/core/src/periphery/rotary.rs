use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use super::PeripheryError;
use crate::model::Pose;
use crate::registry::{Capability, ModuleDescriptor, ModuleKind, ParamsSchema};

/// Max tcp-to-handle distance for the table to follow the robot, m.
pub const GRASP_TOLERANCE: f64 = 1e-3;
/// Largest angle change accepted from a single update. Larger apparent
/// jumps mean the tcp is near a different part of the rim, not dragging.
const MAX_STEP: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Brake {
    Engaged,
    Released,
}

/// Wraps into (-pi, pi].
pub fn wrap_angle(x: f64) -> f64 {
    let y = x.rem_euclid(TAU);
    if y > PI {
        y - TAU
    } else {
        y
    }
}

/// A passive table turned by a robot gripping one of its handles.
///
/// The table top frame is `axis_pose · Rz(angle)`. Handle `k` sits at
/// `Rz(k · 2pi / handle_count) · handle_offset` in the top frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RotaryTable {
    pub axis_pose: Pose,
    pub angle: f64,
    pub brake: Brake,
    pub stored_angle: f64,
    pub handle_offset: Pose,
    #[serde(default = "one")]
    pub handle_count: usize,
}

fn one() -> usize {
    1
}

impl RotaryTable {
    pub fn new(axis_pose: Pose, handle_offset: Pose, handle_count: usize) -> Result<Self, PeripheryError> {
        let h = handle_offset.position();
        if h.x.hypot(h.y) < 0.01 {
            return Err(PeripheryError::InvalidConfig("handle must sit at least 1 cm off the axis".into()));
        }
        if handle_count == 0 {
            return Err(PeripheryError::InvalidConfig("handle_count must be >= 1".into()));
        }
        Ok(Self {
            axis_pose,
            angle: 0.0,
            brake: Brake::Engaged,
            stored_angle: 0.0,
            handle_offset,
            handle_count,
        })
    }

    pub fn descriptor(&self, name: &str) -> ModuleDescriptor {
        ModuleDescriptor {
            name: name.to_string(),
            kind: ModuleKind::RotaryTable,
            capabilities: vec![
                Capability::new("release_brake", ParamsSchema::empty()),
                Capability::new("engage_brake", ParamsSchema::empty()),
                Capability::new("get_state", ParamsSchema::empty()),
            ],
            resources_required: Default::default(),
            mount_pose: self.axis_pose,
        }
    }

    pub fn top_pose(&self) -> Pose {
        self.axis_pose.compose(&Pose::rot_z(self.angle))
    }

    pub fn handle_pose(&self, k: usize) -> Pose {
        let spacing = TAU / self.handle_count as f64;
        self.axis_pose
            .compose(&Pose::rot_z(self.angle + spacing * k as f64))
            .compose(&self.handle_offset)
    }

    pub fn release_brake(&mut self) -> Result<(), PeripheryError> {
        if self.brake == Brake::Released {
            return Err(PeripheryError::AlreadyReleased);
        }
        self.stored_angle = self.angle;
        self.brake = Brake::Released;
        Ok(())
    }

    pub fn engage_brake(&mut self) -> Result<(), PeripheryError> {
        if self.brake == Brake::Engaged {
            return Err(PeripheryError::AlreadyEngaged);
        }
        self.brake = Brake::Engaged;
        self.stored_angle = self.angle;
        Ok(())
    }

    /// Lets the table follow a tcp holding one of its handles. Returns the
    /// angle change.
    pub fn coupled_update(&mut self, tcp: &Pose) -> Result<f64, PeripheryError> {
        if self.brake == Brake::Engaged {
            return Err(PeripheryError::BrakeEngaged);
        }
        let p = self.axis_pose.inverse().transform_point(&tcp.position());
        let h = self.handle_offset.position();
        let phi = p.y.atan2(p.x) - h.y.atan2(h.x);
        let spacing = TAU / self.handle_count as f64;
        let (k, delta) = (0..self.handle_count)
            .map(|k| (k, wrap_angle(phi - spacing * k as f64 - self.angle)))
            .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .expect("handle_count >= 1");
        let candidate = wrap_angle(self.angle + delta);
        let mut moved = self.clone();
        moved.angle = candidate;
        let gap = (moved.handle_pose(k).position() - tcp.position()).norm();
        if gap > GRASP_TOLERANCE || delta.abs() > MAX_STEP {
            return Err(PeripheryError::NotGrasping(gap));
        }
        self.angle = candidate;
        Ok(delta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn table() -> RotaryTable {
        RotaryTable::new(Pose::from_translation(0.4, 0.0, 0.1), Pose::from_translation(0.15, 0.0, 0.05), 1).unwrap()
    }

    #[test]
    fn wrap_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert_eq!(wrap_angle(0.25), 0.25);
    }

    #[test]
    fn brake_transitions_record_angle() {
        let mut t = table();
        t.angle = 0.7;
        t.release_brake().unwrap();
        assert_eq!(t.stored_angle, 0.7);
        assert_eq!(t.release_brake(), Err(PeripheryError::AlreadyReleased));
        t.engage_brake().unwrap();
        assert_eq!(t.angle, 0.7);
        assert_eq!(t.engage_brake(), Err(PeripheryError::AlreadyEngaged));
        let h = t.handle_pose(0);
        assert_eq!(t.coupled_update(&h), Err(PeripheryError::BrakeEngaged));
        assert_eq!(t.angle, 0.7);
    }

    #[test]
    fn follows_arc_and_ignores_axial_motion() {
        let mut t = table();
        t.release_brake().unwrap();
        // axial nudge: projection unchanged
        let h = t.handle_pose(0);
        let nudged = h.with_position(h.position() + Vector3::new(0.0, 0.0, 0.0005));
        assert_eq!(t.coupled_update(&nudged).unwrap(), 0.0);
        assert_eq!(t.angle, 0.0);

        let mut total = 0.0;
        let n = 100;
        for i in 1..=n {
            let a = PI / 2.0 * i as f64 / n as f64;
            let tcp = t.axis_pose.compose(&Pose::rot_z(a)).compose(&t.handle_offset);
            total += t.coupled_update(&tcp).unwrap();
        }
        assert!((t.angle - PI / 2.0).abs() < 1e-9);
        assert!((total - PI / 2.0).abs() < 1e-9);
    }

    #[test]
    fn far_tcp_is_not_grasping() {
        let mut t = table();
        t.release_brake().unwrap();
        assert!(matches!(
            t.coupled_update(&Pose::from_translation(0.0, 0.0, 1.0)),
            Err(PeripheryError::NotGrasping(_))
        ));
        assert_eq!(t.angle, 0.0);
    }

    #[test]
    fn any_handle_can_drive() {
        let mut t = RotaryTable::new(Pose::identity(), Pose::from_translation(0.15, 0.0, 0.0), 3).unwrap();
        t.release_brake().unwrap();
        let h2 = t.handle_pose(2);
        let turned = Pose::rot_z(0.05).compose(&h2);
        let d = t.coupled_update(&turned).unwrap();
        assert!((d - 0.05).abs() < 1e-12);
    }
}
