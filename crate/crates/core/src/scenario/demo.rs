//! The bundled demo: a desk arm picks a screwdriver from a rack, turns a
//! three-handled rotary table and fastens one screw per side.
//!
//! Motions are generated here from the geometry so the scenario file can be
//! regenerated whenever the arm model changes.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::{PI, TAU};

use nalgebra::{UnitQuaternion, Vector3};

use super::{RunStep, Scenario, ScenarioFile, SequenceSeed, SkillSeed, TeachStep};
use crate::cell::{ArmRef, CellConfig, ModuleSpec};
use crate::model::{Pose, ToolDescriptor, Trajectory};
use crate::periphery::RackSlot;
use crate::robot::{solve_ik, solve_ik_tcp, ArmModel, ControlLimits, RobotSim};
use crate::skills::{SkillKind, SkillMeta};
use crate::teach::{JogConfig, Tape, TapeEntry};

#[allow(clippy::approx_constant)]
pub const HOME: [f64; 6] = [0.0, -0.6, 1.9, 0.3, 1.5708, -1.5708];
pub const TABLE_AXIS: [f64; 3] = [0.40, 0.0, 0.0];
pub const HANDLE_RADIUS: f64 = 0.12;
pub const HANDLE_HEIGHT: f64 = 0.10;
pub const HANDLES: usize = 3;
pub const SLOT: [f64; 3] = [0.15, 0.30, 0.25];
pub const TOOL_LENGTH: f64 = 0.10;
pub const SCREW: [f64; 3] = [0.33, 0.0, 0.06];

/// Samples in the table-turning path and its duration.
const TURN_SAMPLES: usize = 25;
const TURN_SECONDS: f64 = 3.0;
/// Planned joint speed for point-to-point moves, rad/s.
const JOINT_SPEED: f64 = 1.5;
/// Jog speeds used by the scripted fastening demonstration.
const JOG_LINEAR: f64 = 0.08;
const JOG_TWIST: f64 = 0.5;
const TWIST_ANGLE: f64 = 0.5;
const HOLD_SECONDS: f64 = 0.6;

pub const MAIN_SEQUENCE: &str = r#"sequence demo_screw(sides: int = 3) {
  state clamp: cmd fixture.clamp {"part_id": "housing"};
  state to_rack: skill "to_rack" on r1;
  state equip: cmd r1.equip_tool {"tool_id": "driver"};
  state to_handle: skill "to_handle" on r1;
  for i in 1..$sides {
    state release_$i: cmd table.release_brake;
    state turn_$i: skill "turn_table" on r1;
    state engage_$i: cmd table.engage_brake;
    state fasten_$i: skill "fasten" on r1;
  }
  state park: skill "park" on r1;
  state unequip: cmd r1.unequip_tool;
  state home: skill "home" on r1;
  state unclamp: cmd fixture.unclamp;
}
"#;

const TEACH_PREP: &str = r#"sequence teach_prep {
  state to_rack: skill "to_rack" on r1;
  state equip: cmd r1.equip_tool {"tool_id": "driver"};
  state to_handle: skill "to_handle" on r1;
  state to_p1: skill "to_p1" on r1;
}
"#;

const TEACH_FINISH: &str = r#"sequence teach_finish {
  state park: skill "park" on r1;
  state unequip: cmd r1.unequip_tool;
  state home: skill "home" on r1;
}
"#;

fn down() -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&Vector3::x_axis(), PI)
}

fn at(p: Vector3<f64>) -> Pose {
    Pose::new(p, down())
}

/// Tcp position on handle circle at polar angle `phi` around the table axis.
pub fn handle_point(phi: f64) -> Vector3<f64> {
    Vector3::from(TABLE_AXIS) + Vector3::new(HANDLE_RADIUS * phi.cos(), HANDLE_RADIUS * phi.sin(), HANDLE_HEIGHT)
}

fn tool() -> ToolDescriptor {
    ToolDescriptor::new("driver", Pose::from_translation(0.0, 0.0, TOOL_LENGTH))
}

fn joint_move(a: &[f64], b: &[f64]) -> Trajectory {
    let span = a.iter().zip(b).map(|(x, y)| (y - x).abs()).fold(0.0, f64::max);
    let t = ((span / JOINT_SPEED).max(0.5) * 10.0).ceil() / 10.0;
    Trajectory::joint(vec![(0.0, a.to_vec()), (t, b.to_vec())]).expect("two increasing samples")
}

fn turn_path() -> Trajectory {
    let step = TAU / HANDLES as f64;
    let samples = (0..TURN_SAMPLES)
        .map(|i| {
            let s = i as f64 / (TURN_SAMPLES - 1) as f64;
            (TURN_SECONDS * s, at(handle_point(step + step * s)))
        })
        .collect();
    Trajectory::cartesian("world", samples).expect("increasing samples")
}

/// Stick deflection producing velocity `v` under `cfg`.
fn stick(v: f64, v_max: f64, cfg: &JogConfig) -> f64 {
    if v == 0.0 {
        return 0.0;
    }
    let s = cfg.deadband + (1.0 - cfg.deadband) * (v.abs() / v_max).powf(1.0 / cfg.gamma);
    s.copysign(v)
}

struct TapeWriter {
    cfg: JogConfig,
    dt: f64,
    ticks: u64,
    entries: Vec<TapeEntry>,
}

impl TapeWriter {
    fn t(&self) -> f64 {
        self.ticks as f64 * self.dt
    }

    /// Straight tcp move by `d`, close to `JOG_LINEAR`.
    fn line(&mut self, d: Vector3<f64>) {
        let n = (d.norm() / (JOG_LINEAR * self.dt)).ceil().max(1.0);
        let v = d / (n * self.dt);
        let lin = [0, 1, 2].map(|i| stick(v[i], self.cfg.v_max_linear, &self.cfg));
        self.entries.push(TapeEntry { t_s: self.t(), lin, ..Default::default() });
        self.ticks += n as u64;
    }

    /// Rotation about the world z axis through the tcp.
    fn twist(&mut self, angle: f64) {
        let n = (angle.abs() / (JOG_TWIST * self.dt)).round().max(1.0);
        let w = angle / (n * self.dt);
        let ang = [0.0, 0.0, stick(w, self.cfg.v_max_angular, &self.cfg)];
        self.entries.push(TapeEntry { t_s: self.t(), ang, ..Default::default() });
        self.ticks += n as u64;
    }

    fn hold(&mut self, seconds: f64) {
        self.entries.push(TapeEntry { t_s: self.t(), ..Default::default() });
        self.ticks += (seconds / self.dt).round() as u64;
    }

    fn finish(mut self) -> Tape {
        self.entries.push(TapeEntry { t_s: self.t(), ..Default::default() });
        Tape(self.entries)
    }
}

/// Fastening demonstration: from the released handle, over to the screw,
/// drive it, and back down onto the next handle.
fn fasten_tape(cfg: &CellConfig) -> Tape {
    let step = TAU / HANDLES as f64;
    let p1 = handle_point(2.0 * step);
    let p0 = handle_point(step);
    let screw = Vector3::from(SCREW);
    let up = 0.06;
    let high = HANDLE_HEIGHT + up;
    let mut w = TapeWriter {
        cfg: cfg.jog,
        dt: cfg.dt,
        ticks: 0,
        entries: Vec::new(),
    };
    w.line(Vector3::new(0.0, 0.0, up));
    w.line(Vector3::new(screw.x - p1.x, screw.y - p1.y, 0.0));
    w.line(Vector3::new(0.0, 0.0, screw.z - high));
    w.twist(TWIST_ANGLE);
    w.twist(-TWIST_ANGLE);
    w.line(Vector3::new(0.0, 0.0, high - screw.z));
    w.line(Vector3::new(p0.x - screw.x, p0.y - screw.y, 0.0));
    w.line(Vector3::new(0.0, 0.0, -up));
    w.hold(HOLD_SECONDS);
    w.finish()
}

fn seed(name: &str, traj: &Trajectory) -> SkillSeed {
    SkillSeed {
        name: name.to_string(),
        kind: SkillKind::Trajectory,
        payload: serde_json::to_value(traj).expect("trajectories serialize"),
        meta: SkillMeta {
            created_wallclock: String::new(),
            robot_model: Some("desk6".into()),
            tags: BTreeSet::from(["demo".to_string()]),
        },
    }
}

fn inline(src: &str) -> SequenceSeed {
    SequenceSeed {
        source: Some(src.to_string()),
        file: None,
        args: BTreeMap::new(),
    }
}

impl Scenario {
    /// The bundled screwing demo.
    pub fn demo() -> Scenario {
        let arm = ArmModel::desk6();
        let limits = ControlLimits::default();
        let config = CellConfig::default();
        let step = TAU / HANDLES as f64;

        let slot_pose = at(Vector3::from(SLOT));
        let q_slot = solve_ik(&arm, &slot_pose, &HOME, &limits).expect("rack slot is reachable").q;
        let tcp = Pose::from_translation(0.0, 0.0, TOOL_LENGTH);
        let q_p0 = solve_ik_tcp(&arm, &at(handle_point(step)), &q_slot, &tcp, &limits)
            .expect("first handle is reachable")
            .q;

        // Plan the turn from the handle with the tool on, the way the robot will.
        let to_handle = joint_move(&q_slot, &q_p0);
        let mut sim = RobotSim::new(arm.clone(), limits, q_slot.clone()).expect("valid home");
        sim.equip_tool(tool(), &slot_pose).expect("flange at slot");
        sim.execute_trajectory(&to_handle, &Pose::identity()).expect("feasible approach");
        while !sim.step(config.dt).trajectory_finished {}
        let turn = turn_path();
        let plan = sim.plan(&turn, &Pose::identity()).expect("turn is reachable");
        let q_p1 = plan.joint_rows().expect("joint plan").last().expect("non-empty").1.to_vec();

        let skills = vec![
            seed("to_rack", &joint_move(&HOME, &q_slot)),
            seed("to_handle", &to_handle),
            seed("turn_table", &turn),
            seed("to_p1", &joint_move(&q_p0, &q_p1)),
            seed("park", &joint_move(&q_p0, &q_slot)),
            seed("home", &joint_move(&q_slot, &HOME)),
        ];

        let modules = vec![
            ModuleSpec::Robot {
                name: "r1".into(),
                arm: ArmRef::Named("desk6".into()),
                base_pose: None,
                home: Some(HOME.to_vec()),
                limits,
            },
            ModuleSpec::RotaryTable {
                name: "table".into(),
                axis_pose: Pose::from_translation(TABLE_AXIS[0], TABLE_AXIS[1], TABLE_AXIS[2]),
                handle_offset: Pose::from_translation(HANDLE_RADIUS, 0.0, HANDLE_HEIGHT),
                handle_count: HANDLES,
                angle: 0.0,
            },
            ModuleSpec::ToolRack {
                name: "rack".into(),
                mount_pose: Pose::identity(),
                slots: vec![RackSlot {
                    slot_pose,
                    occupant: Some(tool()),
                }],
            },
            ModuleSpec::Fixture {
                name: "fixture".into(),
                pose: Pose::from_translation(0.0, 0.0, 0.02),
                on_table: Some("table".into()),
            },
        ];

        Scenario {
            file: ScenarioFile {
                name: "demo_screw".into(),
                config,
                modules,
                skills,
                sequences: vec![inline(TEACH_PREP), inline(TEACH_FINISH)],
                teach: vec![TeachStep {
                    robot: "r1".into(),
                    before: Some("teach_prep".into()),
                    tape: fasten_tape(&config),
                    rate: config.record_rate,
                    save_as: "fasten".into(),
                    after: Some("teach_finish".into()),
                }],
                run: Some(RunStep {
                    sequence: inline(MAIN_SEQUENCE),
                    max_seconds: 300.0,
                }),
            },
            base_dir: None,
        }
    }
}
