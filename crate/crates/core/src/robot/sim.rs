use nalgebra::{UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use super::kinematics::{dls_step, flange_unchecked, jacobian_unchecked, solve_ik_tcp};
use super::{ArmModel, ControlLimits, RobotError};
use crate::model::{JointState, Pose, ToolDescriptor, Trajectory, TrajectoryKind, Twist, Waypoint};

/// Seconds of continuous zero twist after which velocity mode ends.
const VELOCITY_IDLE_AFTER: f64 = 0.5;
const MAX_DRAG: f64 = 0.05;
const RACK_TOL_LINEAR: f64 = 1e-3;
const RACK_TOL_ANGULAR: f64 = 0.01;
/// Tracking error beyond which the velocity reference is re-seeded from
/// the measured tcp (limits or singularities stopped the arm).
const REFERENCE_RESET_LINEAR: f64 = 0.01;
const REFERENCE_RESET_ANGULAR: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RobotMode {
    Idle,
    Trajectory,
    Velocity,
    FreeDrag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub model: String,
    pub joints: JointState,
    pub equipped_tool: Option<ToolDescriptor>,
    pub mode: RobotMode,
    pub flange_pose: Pose,
    pub tcp_pose: Pose,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepOutcome {
    /// The running trajectory reached its final sample on this tick.
    pub trajectory_finished: bool,
    /// A periodic state report is due.
    pub publish_state: bool,
}

#[derive(Debug, Clone)]
struct Playback {
    traj: Trajectory,
    elapsed: f64,
    setpoints: u64,
}

#[derive(Debug, Clone)]
pub struct RobotSim {
    model: ArmModel,
    limits: ControlLimits,
    q: Vec<f64>,
    qd: Vec<f64>,
    time: f64,
    tool: Option<ToolDescriptor>,
    mode: RobotMode,
    playback: Option<Playback>,
    twist: Twist,
    zero_since: Option<f64>,
    reference: Option<Pose>,
    ticks: u64,
}

impl RobotSim {
    pub fn new(model: ArmModel, limits: ControlLimits, home: Vec<f64>) -> Result<Self, RobotError> {
        model.validate()?;
        limits.validate()?;
        model.check_limits(&home)?;
        let n = home.len();
        Ok(Self {
            model,
            limits,
            q: home,
            qd: vec![0.0; n],
            time: 0.0,
            tool: None,
            mode: RobotMode::Idle,
            playback: None,
            twist: Twist::zero(),
            zero_since: None,
            reference: None,
            ticks: 0,
        })
    }

    pub fn model(&self) -> &ArmModel {
        &self.model
    }

    pub fn limits(&self) -> &ControlLimits {
        &self.limits
    }

    pub fn mode(&self) -> RobotMode {
        self.mode
    }

    pub fn joints(&self) -> &[f64] {
        &self.q
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn tool(&self) -> Option<&ToolDescriptor> {
        self.tool.as_ref()
    }

    pub fn flange_pose(&self) -> Pose {
        flange_unchecked(&self.model, &self.q)
    }

    fn tcp_offset(&self) -> Pose {
        self.tool.as_ref().map(|t| t.tcp_offset).unwrap_or_default()
    }

    pub fn tcp_pose(&self) -> Pose {
        self.flange_pose().compose(&self.tcp_offset())
    }

    /// Number of setpoints issued by the running trajectory so far.
    pub fn playback_setpoints(&self) -> Option<u64> {
        self.playback.as_ref().map(|p| p.setpoints)
    }

    pub fn state(&self) -> RobotState {
        let flange = self.flange_pose();
        RobotState {
            model: self.model.name.clone(),
            joints: JointState {
                positions: self.q.clone(),
                velocities: self.qd.clone(),
                timestamp: self.time,
            },
            equipped_tool: self.tool.clone(),
            mode: self.mode,
            flange_pose: flange,
            tcp_pose: flange.compose(&self.tcp_offset()),
        }
    }

    /// Aligns the robot clock with the cell clock (used at bring-up).
    pub fn set_time(&mut self, t: f64) {
        self.time = t;
    }

    /// Converts a trajectory into a joint-space plan and checks it
    /// against the speed limit. Cartesian samples are placed in the world
    /// by `frame` and solved sample by sample, each seeded from the last.
    pub fn plan(&self, traj: &Trajectory, frame: &Pose) -> Result<Trajectory, RobotError> {
        let plan = match traj.kind() {
            TrajectoryKind::Joint => {
                for (_, q) in traj.joint_rows().expect("joint trajectory") {
                    self.model.check_limits(q)?;
                }
                traj.clone()
            }
            TrajectoryKind::Cartesian => {
                let offset = self.tcp_offset();
                let mut seed = self.q.clone();
                let mut rows = Vec::with_capacity(traj.len());
                for (i, (t, pose)) in traj.poses().expect("cartesian trajectory").into_iter().enumerate() {
                    let target = frame.compose(&pose);
                    let sol = solve_ik_tcp(&self.model, &target, &seed, &offset, &self.limits).map_err(|e| {
                        RobotError::IkFailure {
                            sample: i,
                            reason: e.to_string(),
                        }
                    })?;
                    seed = sol.q.clone();
                    rows.push((t, sol.q));
                }
                Trajectory::joint(rows).map_err(|e| RobotError::InvalidTrajectory(e.to_string()))?
            }
        };
        self.check_speed(&plan)?;
        Ok(plan)
    }

    fn check_speed(&self, plan: &Trajectory) -> Result<(), RobotError> {
        let rows = plan.joint_rows().expect("plans are joint trajectories");
        let limit = self.model.max_joint_speed;
        for (segment, w) in rows.windows(2).enumerate() {
            let dt = w[1].0 - w[0].0;
            for (joint, (a, b)) in w[0].1.iter().zip(w[1].1).enumerate() {
                let required = (b - a).abs() / dt;
                if required > limit * (1.0 + 1e-9) {
                    return Err(RobotError::SpeedInfeasible {
                        segment,
                        joint,
                        required,
                        limit,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn execute_trajectory(&mut self, traj: &Trajectory, frame: &Pose) -> Result<(), RobotError> {
        if self.mode != RobotMode::Idle {
            return Err(RobotError::BusyMode(self.mode));
        }
        if let Some(dof) = traj.dof() {
            if dof != self.model.dof() {
                return Err(RobotError::DofMismatch {
                    expected: self.model.dof(),
                    got: dof,
                });
            }
        }
        let plan = self.plan(traj, frame)?;
        self.playback = Some(Playback {
            traj: plan,
            elapsed: 0.0,
            setpoints: 0,
        });
        self.mode = RobotMode::Trajectory;
        Ok(())
    }

    /// Stops a running trajectory where it is. Returns whether one was active.
    pub fn abort(&mut self) -> bool {
        if self.mode == RobotMode::Trajectory {
            self.playback = None;
            self.mode = RobotMode::Idle;
            true
        } else {
            false
        }
    }

    pub fn set_cartesian_velocity(&mut self, twist: Twist) -> Result<(), RobotError> {
        match self.mode {
            RobotMode::Idle | RobotMode::Velocity => {}
            other => return Err(RobotError::BusyMode(other)),
        }
        let twist = twist.clamped(self.limits.max_linear, self.limits.max_angular);
        if twist.is_zero() {
            if self.mode == RobotMode::Idle || self.zero_since.is_none() {
                self.zero_since = Some(self.time);
            }
        } else {
            self.zero_since = None;
        }
        if self.mode == RobotMode::Idle {
            self.reference = None;
        }
        self.twist = twist;
        self.mode = RobotMode::Velocity;
        Ok(())
    }

    /// Leaves velocity mode at once instead of waiting out the idle timeout.
    pub fn stop_jog(&mut self) {
        if self.mode == RobotMode::Velocity {
            self.mode = RobotMode::Idle;
            self.twist = Twist::zero();
            self.reference = None;
            self.zero_since = None;
        }
    }

    pub fn enter_free_drag(&mut self) -> Result<(), RobotError> {
        if self.mode != RobotMode::Idle {
            return Err(RobotError::BusyMode(self.mode));
        }
        self.mode = RobotMode::FreeDrag;
        Ok(())
    }

    pub fn exit_free_drag(&mut self) -> Result<(), RobotError> {
        if self.mode != RobotMode::FreeDrag {
            return Err(RobotError::BusyMode(self.mode));
        }
        self.mode = RobotMode::Idle;
        Ok(())
    }

    /// Moves the tcp by `delta`, expressed in the current tcp frame.
    pub fn apply_drag(&mut self, delta: &Pose) -> Result<(), RobotError> {
        if self.mode != RobotMode::FreeDrag {
            return Err(RobotError::DragOutsideFreeMode);
        }
        let step = delta.position().norm();
        if step > MAX_DRAG {
            return Err(RobotError::DragTooLarge(step));
        }
        let target = self.tcp_pose().compose(delta);
        let sol = solve_ik_tcp(&self.model, &target, &self.q, &self.tcp_offset(), &self.limits)?;
        self.q = sol.q;
        Ok(())
    }

    fn check_at_slot(&self, slot_pose: &Pose) -> Result<(), RobotError> {
        let (distance, angle) = self.flange_pose().distance(slot_pose);
        if distance > RACK_TOL_LINEAR || angle > RACK_TOL_ANGULAR {
            return Err(RobotError::NotAtRack { distance, angle });
        }
        Ok(())
    }

    /// Couples `tool` at the flange. The flange must sit at the slot's
    /// pickup pose.
    pub fn equip_tool(&mut self, tool: ToolDescriptor, slot_pose: &Pose) -> Result<(), RobotError> {
        if self.mode != RobotMode::Idle {
            return Err(RobotError::BusyMode(self.mode));
        }
        if self.tool.is_some() {
            return Err(RobotError::ToolAlreadyEquipped);
        }
        self.check_at_slot(slot_pose)?;
        self.tool = Some(tool);
        Ok(())
    }

    pub fn check_unequip(&self, slot_pose: &Pose) -> Result<(), RobotError> {
        if self.mode != RobotMode::Idle {
            return Err(RobotError::BusyMode(self.mode));
        }
        if self.tool.is_none() {
            return Err(RobotError::NoToolEquipped);
        }
        self.check_at_slot(slot_pose)
    }

    pub fn unequip_tool(&mut self, slot_pose: &Pose) -> Result<ToolDescriptor, RobotError> {
        self.check_unequip(slot_pose)?;
        Ok(self.tool.take().expect("checked"))
    }

    /// Advances the controller by one tick.
    pub fn step(&mut self, dt: f64) -> StepOutcome {
        assert!(dt > 0.0, "step needs a positive dt");
        let before = self.q.clone();
        self.time += dt;
        self.ticks += 1;
        let mut out = StepOutcome::default();
        match self.mode {
            RobotMode::Idle | RobotMode::FreeDrag => {}
            RobotMode::Trajectory => out.trajectory_finished = self.track(dt),
            RobotMode::Velocity => self.resolve_velocity(dt),
        }
        for (v, (now, prev)) in self.qd.iter_mut().zip(self.q.iter().zip(&before)) {
            *v = (now - prev) / dt;
        }
        debug_assert!(self.model.check_limits(&self.q).is_ok());
        out.publish_state = self.ticks.is_multiple_of(self.limits.state_every as u64);
        out
    }

    fn track(&mut self, dt: f64) -> bool {
        let playback = self.playback.as_mut().expect("trajectory mode has a playback");
        playback.elapsed += dt;
        playback.setpoints += 1;
        let duration = playback.traj.duration();
        let at_end = playback.elapsed >= duration - 1e-9;
        let t = if at_end { duration } else { playback.elapsed };
        let Ok(Waypoint::Joint(setpoint)) = playback.traj.interpolate(t) else {
            unreachable!("plans are joint trajectories and t is clamped");
        };
        let max_step = self.model.max_joint_speed * dt;
        let mut reached = true;
        for (q, target) in self.q.iter_mut().zip(&setpoint) {
            let delta = target - *q;
            if delta.abs() <= max_step {
                *q = *target;
            } else {
                *q += max_step.copysign(delta);
                reached = false;
            }
        }
        self.model.clamp(&mut self.q);
        if at_end && reached {
            self.playback = None;
            self.mode = RobotMode::Idle;
            return true;
        }
        false
    }

    fn resolve_velocity(&mut self, dt: f64) {
        if let Some(since) = self.zero_since {
            if self.time - since > VELOCITY_IDLE_AFTER + 1e-9 {
                self.mode = RobotMode::Idle;
                self.reference = None;
                self.zero_since = None;
                return;
            }
        }
        let tcp = self.tcp_pose();
        let lin = Vector3::from(self.twist.linear);
        let ang = Vector3::from(self.twist.angular);
        let reference = self.reference.get_or_insert(tcp);
        *reference = Pose::new(
            reference.position() + lin * dt,
            UnitQuaternion::from_scaled_axis(ang * dt) * reference.orientation(),
        );
        let mut err = Vector6::from(tcp.error_to(reference));
        if err.fixed_rows::<3>(0).norm() > REFERENCE_RESET_LINEAR
            || err.fixed_rows::<3>(3).norm() > REFERENCE_RESET_ANGULAR
        {
            *reference = tcp;
            err = Vector6::zeros();
        }
        let command = Vector6::new(lin.x, lin.y, lin.z, ang.x, ang.y, ang.z) + err * self.limits.velocity_gain;
        if command.norm() < 1e-12 {
            return;
        }
        let j = jacobian_unchecked(&self.model, &self.q, &self.tcp_offset());
        let mut qdot = dls_step(&j, &command, self.limits.ik_damping);
        let peak = qdot.amax();
        if peak > self.model.max_joint_speed {
            qdot *= self.model.max_joint_speed / peak;
        }
        for (q, v) in self.q.iter_mut().zip(qdot.iter()) {
            *q += v * dt;
        }
        self.model.clamp(&mut self.q);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[allow(clippy::approx_constant)]
    const HOME: [f64; 6] = [0.0, 0.6, -1.2, 0.6, 1.5708, 0.0];

    fn robot() -> RobotSim {
        RobotSim::new(ArmModel::desk6(), ControlLimits::default(), HOME.to_vec()).unwrap()
    }

    #[test]
    fn idle_step_changes_nothing() {
        let mut r = robot();
        let before = r.state();
        r.step(0.01);
        let after = r.state();
        assert_eq!(before.joints.positions, after.joints.positions);
        assert_eq!(after.mode, RobotMode::Idle);
    }

    #[test]
    fn joint_playback_counts_setpoints() {
        let mut r = RobotSim::new(ArmModel::desk6(), ControlLimits::default(), vec![0.0; 6]).unwrap();
        let mut end = vec![0.0; 6];
        end[0] = 0.5;
        let traj = Trajectory::joint(vec![(0.0, vec![0.0; 6]), (1.0, end)]).unwrap();
        r.execute_trajectory(&traj, &Pose::identity()).unwrap();
        let mut ticks = 0;
        loop {
            ticks += 1;
            if r.step(0.01).trajectory_finished {
                break;
            }
            assert!(ticks < 1000);
        }
        assert_eq!(ticks, 100);
        assert_eq!(r.joints()[0], 0.5);
        assert_eq!(r.mode(), RobotMode::Idle);
    }

    #[test]
    fn speed_precheck() {
        let mut r = RobotSim::new(ArmModel::desk6(), ControlLimits::default(), vec![0.0; 6]).unwrap();
        let mut end = vec![0.0; 6];
        end[1] = 1.0;
        let traj = Trajectory::joint(vec![(0.0, vec![0.0; 6]), (0.1, end)]).unwrap();
        assert!(matches!(
            r.execute_trajectory(&traj, &Pose::identity()),
            Err(RobotError::SpeedInfeasible { joint: 1, .. })
        ));
        assert_eq!(r.mode(), RobotMode::Idle);
    }

    #[test]
    fn mode_exclusivity() {
        let mut r = robot();
        r.enter_free_drag().unwrap();
        assert!(matches!(r.set_cartesian_velocity(Twist::zero()), Err(RobotError::BusyMode(RobotMode::FreeDrag))));
        assert!(r.enter_free_drag().is_err());
        r.exit_free_drag().unwrap();
        assert!(r.exit_free_drag().is_err());
        assert!(matches!(r.apply_drag(&Pose::identity()), Err(RobotError::DragOutsideFreeMode)));

        let traj = Trajectory::joint(vec![(0.0, HOME.to_vec()), (1.0, HOME.to_vec())]).unwrap();
        r.execute_trajectory(&traj, &Pose::identity()).unwrap();
        assert!(matches!(r.enter_free_drag(), Err(RobotError::BusyMode(RobotMode::Trajectory))));
        assert!(r.execute_trajectory(&traj, &Pose::identity()).is_err());
        assert!(r.abort());
        assert_eq!(r.mode(), RobotMode::Idle);
    }

    #[test]
    fn zero_twist_holds_then_idles() {
        let mut r = robot();
        let q0 = r.joints().to_vec();
        r.set_cartesian_velocity(Twist::zero()).unwrap();
        for _ in 0..50 {
            r.step(0.01);
            assert_eq!(r.joints(), q0.as_slice());
            assert_eq!(r.mode(), RobotMode::Velocity);
        }
        r.step(0.01);
        assert_eq!(r.mode(), RobotMode::Idle);
    }

    #[test]
    fn drag_identity_and_limits() {
        let mut r = robot();
        r.enter_free_drag().unwrap();
        let q0 = r.joints().to_vec();
        r.apply_drag(&Pose::identity()).unwrap();
        assert_eq!(r.joints(), q0.as_slice());
        assert!(matches!(r.apply_drag(&Pose::from_translation(0.1, 0.0, 0.0)), Err(RobotError::DragTooLarge(_))));
    }

    #[test]
    fn tool_offsets_tcp() {
        let mut r = robot();
        let slot = r.flange_pose();
        let tool = ToolDescriptor::new("driver", Pose::from_translation(0.0, 0.0, 0.1));
        assert!(matches!(
            r.equip_tool(tool.clone(), &slot.compose(&Pose::from_translation(0.01, 0.0, 0.0))),
            Err(RobotError::NotAtRack { .. })
        ));
        r.equip_tool(tool.clone(), &slot).unwrap();
        let (dp, _) = r.tcp_pose().distance(&slot.compose(&tool.tcp_offset));
        assert!(dp < 1e-12);
        assert_eq!(r.equip_tool(tool, &slot), Err(RobotError::ToolAlreadyEquipped));
        r.unequip_tool(&slot).unwrap();
        assert_eq!(r.tcp_pose(), r.flange_pose());
        assert_eq!(r.unequip_tool(&slot), Err(RobotError::NoToolEquipped));
    }
}
