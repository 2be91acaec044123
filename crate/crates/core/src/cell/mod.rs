//! The cell: single owner of the registry, the simulated modules, the skill
//! store, the teach service and sequence runs.
//!
//! Everything advances on a fixed simulation tick. Within one tick the
//! order is: clock and heartbeat deadlines, tape playback and jog
//! commands, robot controllers, rotary tables following their grasping
//! robot, recording, command pickup, heartbeats, sequence runs, state
//! reports. Two cells fed the same calls produce the same event log.

mod devices;
mod runs;
mod spec;

pub use runs::RUN_SOURCE;
pub use spec::{robot_descriptor, ArmRef, ModuleSpec, VERB_RUN_SKILL};

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;
use tokio::sync::mpsc::UnboundedSender;

use crate::assembler::{AssemblyError, CellView, ValidationReport};
use crate::model::{CellEvent, EventKind, Pose, ToolDescriptor, Trajectory, Twist};
use crate::periphery::{Brake, Fixture, PeripheryError, RotaryTable, ToolRack};
use crate::registry::protocol::Frame;
use crate::registry::{
    CommandId, CommandResult, HeartbeatPolicy, ModuleDescriptor, ModuleId, ModuleKind, ModuleRecord, ModuleState,
    Registry, RegistryError,
};
use crate::robot::{ArmModel, RobotError, RobotMode, RobotSim};
use crate::skills::{ListFilter, SkillEntry, SkillMeta, SkillPayload, SkillStore, StoreError};
use crate::teach::{map_jog, JogConfig, RecordingSession, StickVector, Tape, TeachError, TeachService};

use runs::{ActiveRun, LoadedSequence};

pub const SKILLS_SOURCE: &str = "skills";
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CellConfig {
    /// Simulation tick, s.
    pub dt: f64,
    pub heartbeat: HeartbeatPolicy,
    pub jog: JogConfig,
    /// Default recording rate, Hz.
    pub record_rate: f64,
}

impl Default for CellConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            heartbeat: HeartbeatPolicy::default(),
            jog: JogConfig::default(),
            record_rate: 50.0,
        }
    }
}

#[derive(Debug, Error)]
pub enum CellError {
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Robot(#[from] RobotError),
    #[error(transparent)]
    Periphery(#[from] PeripheryError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Teach(#[from] TeachError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error("sequence '{name}' is not runnable")]
    ValidationFailed { name: String, report: ValidationReport },
    #[error("robot '{robot}' is already driven by run {run_id}")]
    RunConflict { robot: String, run_id: u64 },
    #[error("unknown sequence '{0}'")]
    UnknownSequence(String),
    #[error("unknown run {0}")]
    UnknownRun(u64),
    #[error("unknown command {0}")]
    UnknownCommand(u64),
    #[error("'{0}' is not a simulated robot")]
    NotARobot(String),
    #[error("{0}")]
    InvalidRequest(String),
}

impl CellError {
    pub fn code(&self) -> &'static str {
        match self {
            CellError::Registry(e) => e.code(),
            CellError::Robot(e) => e.code(),
            CellError::Periphery(e) => e.code(),
            CellError::Store(e) => e.code(),
            CellError::Teach(e) => e.code(),
            CellError::Assembly(e) => e.code(),
            CellError::ValidationFailed { .. } => "ValidationFailed",
            CellError::RunConflict { .. } => "RunConflict",
            CellError::UnknownSequence(_) => "UnknownSequence",
            CellError::UnknownRun(_) => "UnknownRun",
            CellError::UnknownCommand(_) => "UnknownCommand",
            CellError::NotARobot(_) => "NotARobot",
            CellError::InvalidRequest(_) => "InvalidRequest",
        }
    }
}

pub type CellResult<T> = Result<T, CellError>;

pub(crate) struct RobotDevice {
    pub sim: RobotSim,
    /// Command whose completion waits for the running trajectory.
    pub motion: Option<CommandId>,
    published: Option<(Vec<f64>, RobotMode, Option<String>)>,
    jog_rejected: bool,
}

pub(crate) struct FixtureDevice {
    pub fixture: Fixture,
    /// Table name and pose relative to its top.
    pub on_table: Option<(String, Pose)>,
}

pub(crate) enum Device {
    Robot(Box<RobotDevice>),
    Table(RotaryTable),
    Rack(ToolRack),
    Fixture(FixtureDevice),
    Remote(UnboundedSender<Frame>),
}

pub(crate) struct Member {
    pub name: String,
    pub device: Device,
    hb_seq: u64,
    next_hb: f64,
}

struct TapeRun {
    tape: Tape,
    start: f64,
    next: usize,
    session: Option<u64>,
}

/// Everything in the simulated workcell, owned by one thread.
pub struct Cell {
    config: CellConfig,
    tick: u64,
    registry: Registry,
    store: SkillStore,
    teach: TeachService,
    members: BTreeMap<ModuleId, Member>,
    loose_tools: BTreeMap<String, ToolDescriptor>,
    pending_jog: BTreeMap<ModuleId, Twist>,
    tapes: BTreeMap<ModuleId, TapeRun>,
    sequences: BTreeMap<String, LoadedSequence>,
    runs: BTreeMap<u64, ActiveRun>,
    robot_locks: BTreeMap<ModuleId, u64>,
    next_run: u64,
}

impl Cell {
    pub fn new(config: CellConfig, store: SkillStore) -> CellResult<Self> {
        if !(config.dt > 0.0) || !config.dt.is_finite() {
            return Err(CellError::InvalidRequest("dt must be positive".into()));
        }
        if !(config.record_rate > 0.0) {
            return Err(CellError::InvalidRequest("record_rate must be positive".into()));
        }
        Ok(Self {
            config,
            tick: 0,
            registry: Registry::new(config.heartbeat)?,
            store,
            teach: TeachService::new(config.jog)?,
            members: BTreeMap::new(),
            loose_tools: BTreeMap::new(),
            pending_jog: BTreeMap::new(),
            tapes: BTreeMap::new(),
            sequences: BTreeMap::new(),
            runs: BTreeMap::new(),
            robot_locks: BTreeMap::new(),
            next_run: 1,
        })
    }

    pub fn config(&self) -> &CellConfig {
        &self.config
    }

    pub fn now(&self) -> f64 {
        self.tick as f64 * self.config.dt
    }

    pub fn ticks(&self) -> u64 {
        self.tick
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn store(&self) -> &SkillStore {
        &self.store
    }

    pub fn teach(&self) -> &TeachService {
        &self.teach
    }

    pub fn events(&self) -> &[CellEvent] {
        self.registry.events()
    }

    pub fn snapshot(&self) -> Vec<ModuleRecord> {
        self.registry.snapshot()
    }

    pub fn resolve(&self, id_or_name: &str) -> CellResult<ModuleId> {
        self.registry
            .resolve(id_or_name)
            .ok_or_else(|| RegistryError::UnknownModule(id_or_name.to_string()).into())
    }

    fn member_by(&self, id_or_name: &str) -> Option<&Member> {
        self.members.get(&self.registry.resolve(id_or_name)?)
    }

    pub fn robot(&self, id_or_name: &str) -> Option<&RobotSim> {
        match &self.member_by(id_or_name)?.device {
            Device::Robot(r) => Some(&r.sim),
            _ => None,
        }
    }

    pub fn table(&self, id_or_name: &str) -> Option<&RotaryTable> {
        match &self.member_by(id_or_name)?.device {
            Device::Table(t) => Some(t),
            _ => None,
        }
    }

    pub fn rack(&self, id_or_name: &str) -> Option<&ToolRack> {
        match &self.member_by(id_or_name)?.device {
            Device::Rack(r) => Some(r),
            _ => None,
        }
    }

    pub fn fixture(&self, id_or_name: &str) -> Option<&Fixture> {
        match &self.member_by(id_or_name)?.device {
            Device::Fixture(f) => Some(&f.fixture),
            _ => None,
        }
    }

    pub fn loose_tools(&self) -> impl Iterator<Item = &ToolDescriptor> {
        self.loose_tools.values()
    }

    /// Tools in racks, on robots and set aside; constant unless a module
    /// carrying tools leaves the cell.
    pub fn tool_count(&self) -> usize {
        let held: usize = self
            .members
            .values()
            .map(|m| match &m.device {
                Device::Robot(r) => r.sim.tool().is_some() as usize,
                Device::Rack(r) => r.tool_count(),
                _ => 0,
            })
            .sum();
        held + self.loose_tools.len()
    }

    /// Registry record plus the live device state.
    pub fn module_view(&self, id_or_name: &str) -> CellResult<Value> {
        let id = self.resolve(id_or_name)?;
        let record = self.registry.record(&id).expect("resolved ids exist");
        let state = self.members.get(&id).map_or(Value::Null, |m| self.device_state(m));
        Ok(json!({"record": record, "state": state}))
    }

    fn device_state(&self, m: &Member) -> Value {
        match &m.device {
            Device::Robot(r) => serde_json::to_value(r.sim.state()).expect("state serializes"),
            Device::Table(t) => serde_json::to_value(t).expect("table serializes"),
            Device::Rack(r) => serde_json::to_value(r).expect("rack serializes"),
            Device::Fixture(f) => serde_json::to_value(&f.fixture).expect("fixture serializes"),
            Device::Remote(_) => Value::Null,
        }
    }

    /// Live robot and table states, as pushed to stream clients.
    pub fn live_state(&self) -> Value {
        let mut robots = Vec::new();
        let mut tables = Vec::new();
        for (id, m) in &self.members {
            match &m.device {
                Device::Robot(r) => robots.push(json!({"module_id": id, "name": m.name, "state": r.sim.state()})),
                Device::Table(t) => tables.push(json!({
                    "module_id": id, "name": m.name, "angle": t.angle, "brake": t.brake,
                    "stored_angle": t.stored_angle,
                })),
                _ => {}
            }
        }
        json!({"sim_time": self.now(), "robots": robots, "tables": tables})
    }

    // ---- bring-up ----------------------------------------------------

    /// Builds and attaches a simulated module. It heartbeats at once, so it
    /// is ONLINE on return.
    pub fn attach_module(&mut self, spec: &ModuleSpec, base_dir: Option<&Path>) -> CellResult<ModuleId> {
        let (device, descriptor) = self.build_device(spec, base_dir)?;
        let id = self.registry.attach(descriptor)?;
        self.registry.heartbeat(&id, 1)?;
        self.members.insert(
            id.clone(),
            Member {
                name: spec.name().to_string(),
                device,
                hb_seq: 1,
                next_hb: self.now() + self.config.heartbeat.period,
            },
        );
        self.update_riding_fixtures();
        Ok(id)
    }

    fn build_device(&self, spec: &ModuleSpec, base_dir: Option<&Path>) -> CellResult<(Device, ModuleDescriptor)> {
        Ok(match spec {
            ModuleSpec::Robot {
                name,
                arm,
                base_pose,
                home,
                limits,
            } => {
                let mut model = arm.resolve(base_dir)?;
                if let Some(b) = base_pose {
                    model = model.with_base(*b);
                }
                let home = home.clone().unwrap_or_else(|| vec![0.0; model.dof()]);
                let mut sim = RobotSim::new(model.clone(), *limits, home)?;
                sim.set_time(self.now());
                let device = Device::Robot(Box::new(RobotDevice {
                    sim,
                    motion: None,
                    published: None,
                    jog_rejected: false,
                }));
                (device, robot_descriptor(name, &model))
            }
            ModuleSpec::RotaryTable {
                name,
                axis_pose,
                handle_offset,
                handle_count,
                angle,
            } => {
                let mut t = RotaryTable::new(*axis_pose, *handle_offset, *handle_count)?;
                t.angle = crate::periphery::wrap_angle(*angle);
                t.stored_angle = t.angle;
                let d = t.descriptor(name);
                (Device::Table(t), d)
            }
            ModuleSpec::ToolRack { name, mount_pose, slots } => {
                let rack = ToolRack::new(slots.clone())?;
                for tool in slots.iter().filter_map(|s| s.occupant.as_ref()) {
                    if self.tool_known(&tool.tool_id) {
                        return Err(PeripheryError::DuplicateTool(tool.tool_id.clone()).into());
                    }
                }
                let d = rack.descriptor(name, *mount_pose);
                (Device::Rack(rack), d)
            }
            ModuleSpec::Fixture { name, pose, on_table } => {
                let fixture = Fixture::new(*pose);
                let d = fixture.descriptor(name);
                let dev = FixtureDevice {
                    fixture,
                    on_table: on_table.as_ref().map(|t| (t.clone(), *pose)),
                };
                (Device::Fixture(dev), d)
            }
        })
    }

    fn tool_known(&self, tool_id: &str) -> bool {
        self.loose_tools.contains_key(tool_id)
            || self.members.values().any(|m| match &m.device {
                Device::Robot(r) => r.sim.tool().is_some_and(|t| t.tool_id == tool_id),
                Device::Rack(r) => r.find(tool_id).is_some(),
                _ => false,
            })
    }

    /// Registers a module driven by an external agent. It stays ATTACHED
    /// until its first heartbeat; commands go out through `outbox`.
    pub fn attach_remote(&mut self, descriptor: ModuleDescriptor, outbox: UnboundedSender<Frame>) -> CellResult<ModuleId> {
        let name = descriptor.name.clone();
        let id = self.registry.attach(descriptor)?;
        self.members.insert(
            id.clone(),
            Member {
                name,
                device: Device::Remote(outbox),
                hb_seq: 0,
                next_hb: f64::INFINITY,
            },
        );
        Ok(id)
    }

    /// Handles one frame from a remote agent. Returns a frame to send back,
    /// if any.
    pub fn remote_frame(&mut self, id: &ModuleId, frame: Frame) -> Option<Frame> {
        if !self.members.contains_key(id) {
            return Some(Frame::Error {
                detail: format!("module {id} is not attached"),
            });
        }
        let reply = match frame {
            Frame::Heartbeat { seq } => self.registry.heartbeat(id, seq).err(),
            Frame::Result { id: cmd, outcome, result } => self.registry.complete(id, cmd, &outcome, result).err(),
            Frame::Event { kind, payload, .. } => {
                self.registry.emit(id.0.clone(), kind, payload);
                None
            }
            Frame::Bye => {
                self.detach_id(id).ok();
                return None;
            }
            Frame::Error { detail } => {
                log::warn!("agent {id}: {detail}");
                None
            }
            other => {
                return Some(Frame::Error {
                    detail: format!("unexpected frame from agent: {other:?}"),
                })
            }
        };
        self.pump(id);
        reply.map(|e| Frame::Error { detail: e.to_string() })
    }

    /// The agent connection closed.
    pub fn remote_gone(&mut self, id: &ModuleId) {
        if self.members.contains_key(id) {
            self.detach_id(id).ok();
        }
    }

    pub fn detach(&mut self, id_or_name: &str) -> CellResult<Vec<CommandResult>> {
        let id = self.resolve(id_or_name)?;
        self.detach_id(&id)
    }

    fn detach_id(&mut self, id: &ModuleId) -> CellResult<Vec<CommandResult>> {
        let aborted = self.registry.detach(id)?;
        if let Some(m) = self.members.remove(id) {
            if let Device::Robot(mut r) = m.device {
                r.sim.abort();
            }
        }
        self.teach.drop_robot(id);
        self.tapes.remove(id);
        self.pending_jog.remove(id);
        Ok(aborted)
    }

    // ---- commands ----------------------------------------------------

    /// Dispatches a command through the registry. Simulated modules pick it
    /// up at once; whether it already finished shows in
    /// [`Cell::command_result`].
    pub fn command(&mut self, id_or_name: &str, verb: &str, params: Value) -> CellResult<CommandId> {
        let id = self.resolve(id_or_name)?;
        let cmd = self.registry.dispatch(&id, verb, params)?;
        self.pump(&id);
        Ok(cmd)
    }

    pub fn command_result(&self, cmd: CommandId) -> Option<&CommandResult> {
        self.registry.result(cmd)
    }

    /// Starts queued commands of a module until one has to wait.
    fn pump(&mut self, id: &ModuleId) {
        let remote = match self.members.get(id) {
            None => return,
            Some(m) => match &m.device {
                Device::Remote(tx) => Some(tx.clone()),
                _ => None,
            },
        };
        if let Some(tx) = remote {
            if let Some(cmd) = self.registry.take_next(id) {
                let frame = Frame::Command {
                    id: cmd.id,
                    verb: cmd.verb,
                    params: cmd.params,
                };
                if tx.send(frame).is_err() {
                    self.detach_id(id).ok();
                }
            }
            return;
        }
        while let Some(cmd) = self.registry.take_next(id) {
            match self.execute(id, &cmd) {
                devices::Exec::Done(outcome, result) => {
                    self.registry
                        .complete(id, cmd.id, &outcome, result)
                        .expect("simulated modules report declared outcomes");
                }
                devices::Exec::Started => break,
            }
        }
    }

    // ---- teaching ----------------------------------------------------

    fn robot_mut(&mut self, id: &ModuleId) -> CellResult<&mut RobotDevice> {
        match self.members.get_mut(id).map(|m| &mut m.device) {
            Some(Device::Robot(r)) => Ok(r),
            _ => Err(CellError::NotARobot(id.0.clone())),
        }
    }

    fn online_robot(&self, id_or_name: &str) -> CellResult<ModuleId> {
        let id = self.resolve(id_or_name)?;
        if !matches!(self.members.get(&id).map(|m| &m.device), Some(Device::Robot(_))) {
            return Err(CellError::NotARobot(id_or_name.to_string()));
        }
        let rec = self.registry.record(&id).expect("member is registered");
        if rec.state != ModuleState::Online {
            return Err(RegistryError::ModuleOffline(rec.descriptor.name.clone()).into());
        }
        Ok(id)
    }

    pub fn set_jog_config(&mut self, config: JogConfig) -> CellResult<()> {
        self.teach.set_config(config)?;
        self.config.jog = config;
        Ok(())
    }

    /// Maps a stick vector and queues it for the next tick; a newer jog
    /// before that tick replaces it.
    pub fn jog(&mut self, robot: &str, stick: &StickVector) -> CellResult<Twist> {
        let id = self.online_robot(robot)?;
        let twist = self.teach.map(stick)?;
        self.pending_jog.insert(id, twist);
        Ok(twist)
    }

    /// Free-drag displacement of the tcp, in the tcp frame.
    pub fn drag(&mut self, robot: &str, delta: &Pose) -> CellResult<()> {
        let id = self.online_robot(robot)?;
        self.robot_mut(&id)?.sim.apply_drag(delta)?;
        Ok(())
    }

    pub fn record_start(&mut self, robot: &str, rate: Option<f64>) -> CellResult<u64> {
        let id = self.online_robot(robot)?;
        let rate = rate.unwrap_or(self.config.record_rate);
        let now = self.now();
        let sim = &self.robot_mut(&id)?.sim;
        let (model, q, tcp) = (sim.model().name.clone(), sim.joints().to_vec(), sim.tcp_pose());
        Ok(self.teach.start(&id, &model, rate, now, &q, tcp)?)
    }

    pub fn record_stop(&mut self, session: u64) -> CellResult<Trajectory> {
        let robot = self.teach.session(session)?.robot.clone();
        if let Some(tape) = self.tapes.get(&robot) {
            if tape.session == Some(session) {
                self.tapes.remove(&robot);
            }
        }
        Ok(self.teach.stop(session)?)
    }

    pub fn session(&self, session: u64) -> CellResult<&RecordingSession> {
        Ok(self.teach.session(session)?)
    }

    pub fn teach_save(&mut self, session: u64, name: &str) -> CellResult<u32> {
        let version = self.teach.save(&mut self.store, session, name)?;
        self.skill_put_event(name, version);
        Ok(version)
    }

    /// Plays a scripted tape on `robot`, optionally recording it. The
    /// session stops by itself when the tape ends.
    pub fn play_tape(&mut self, robot: &str, tape: Tape, record: Option<f64>) -> CellResult<Option<u64>> {
        tape.validate()?;
        let id = self.online_robot(robot)?;
        if self.tapes.contains_key(&id) {
            return Err(CellError::InvalidRequest(format!("a tape is already playing on '{robot}'")));
        }
        let session = match record {
            Some(rate) => Some(self.record_start(&id.0, Some(rate))?),
            None => None,
        };
        self.tapes.insert(
            id,
            TapeRun {
                tape,
                start: self.now(),
                next: 0,
                session,
            },
        );
        Ok(session)
    }

    pub fn tape_active(&self, robot: &str) -> bool {
        self.registry.resolve(robot).is_some_and(|id| self.tapes.contains_key(&id))
    }

    pub fn tapes_active(&self) -> bool {
        !self.tapes.is_empty()
    }

    // ---- skills --------------------------------------------------------

    fn skill_put_event(&mut self, name: &str, version: u32) {
        let kind = self.store.get(name, Some(version)).map(|e| e.kind()).ok();
        self.registry.emit(
            SKILLS_SOURCE,
            EventKind::SkillPut,
            json!({"name": name, "version": version, "kind": kind}),
        );
    }

    pub fn put_skill(&mut self, name: &str, payload: SkillPayload, meta: SkillMeta) -> CellResult<u32> {
        let version = self.store.put(name, payload, meta)?;
        self.skill_put_event(name, version);
        Ok(version)
    }

    pub fn delete_skill(&mut self, name: &str) -> CellResult<()> {
        self.store.delete(name)?;
        self.registry.emit(SKILLS_SOURCE, EventKind::SkillDeleted, json!({"name": name}));
        Ok(())
    }

    pub fn skill(&self, name: &str, version: Option<u32>) -> CellResult<&SkillEntry> {
        Ok(self.store.get(name, version)?)
    }

    pub fn skill_history(&self, name: &str) -> CellResult<&[SkillEntry]> {
        Ok(self.store.history(name)?)
    }

    pub fn skills(&self, filter: &ListFilter) -> Vec<&SkillEntry> {
        self.store.list(filter)
    }

    // ---- simulation ----------------------------------------------------

    pub fn step(&mut self) {
        let start = self.now();
        self.tick += 1;
        let now = self.now();
        self.registry.advance_to(now);
        self.drive_tapes(start);
        self.apply_jogs();
        let publish = self.step_robots();
        self.couple_tables();
        self.sample_recordings(now);
        for id in self.members.keys().cloned().collect::<Vec<_>>() {
            self.pump(&id);
        }
        self.heartbeats(now);
        self.advance_runs();
        self.publish_states(&publish);
    }

    /// Steps until `seconds` of sim time have passed.
    pub fn advance(&mut self, seconds: f64) {
        let ticks = (seconds / self.config.dt - TIME_EPS).ceil().max(0.0) as u64;
        for _ in 0..ticks {
            self.step();
        }
    }

    /// Steps until `done` holds or `max_seconds` pass. Returns whether it held.
    pub fn step_until(&mut self, max_seconds: f64, mut done: impl FnMut(&Cell) -> bool) -> bool {
        let limit = self.tick + (max_seconds / self.config.dt).ceil() as u64;
        while !done(self) {
            if self.tick >= limit {
                return false;
            }
            self.step();
        }
        true
    }

    fn warn(&mut self, source: &str, payload: Value) {
        self.registry.emit(source, EventKind::Warning, payload);
    }

    fn drive_tapes(&mut self, tick_start: f64) {
        let ids: Vec<ModuleId> = self.tapes.keys().cloned().collect();
        for id in ids {
            loop {
                let tape = self.tapes.get_mut(&id).expect("listed above");
                let Some(entry) = tape.tape.0.get(tape.next).cloned() else { break };
                if entry.t_s > tick_start - tape.start + TIME_EPS {
                    break;
                }
                tape.next += 1;
                let last = tape.next == tape.tape.0.len();
                if last {
                    let session = tape.session;
                    self.tapes.remove(&id);
                    self.pending_jog.remove(&id);
                    if let Ok(r) = self.robot_mut(&id) {
                        r.sim.stop_jog();
                    }
                    if let Some(s) = session {
                        if let Err(e) = self.teach.stop(s) {
                            self.warn(&id.0, json!({"error": e.code(), "detail": e.to_string()}));
                        }
                    }
                    break;
                }
                if let Err(e) = self.apply_tape_entry(&id, &entry) {
                    self.warn(&id.0, json!({"error": e.code(), "detail": e.to_string(), "t_s": entry.t_s}));
                }
            }
        }
    }

    fn apply_tape_entry(&mut self, id: &ModuleId, entry: &crate::teach::TapeEntry) -> CellResult<()> {
        let twist = map_jog(&entry.stick(), self.teach.config())?;
        let robot = self.robot_mut(id)?;
        match entry.free_drag {
            Some(true) if robot.sim.mode() != RobotMode::FreeDrag => {
                robot.sim.stop_jog();
                robot.sim.enter_free_drag()?;
            }
            Some(false) if robot.sim.mode() == RobotMode::FreeDrag => robot.sim.exit_free_drag()?,
            _ => {}
        }
        if let Some(delta) = &entry.drag {
            robot.sim.apply_drag(delta)?;
        }
        if robot.sim.mode() == RobotMode::FreeDrag {
            if !twist.is_zero() {
                return Err(RobotError::BusyMode(RobotMode::FreeDrag).into());
            }
            return Ok(());
        }
        self.pending_jog.insert(id.clone(), twist);
        Ok(())
    }

    fn apply_jogs(&mut self) {
        for (id, twist) in std::mem::take(&mut self.pending_jog) {
            let Ok(robot) = self.robot_mut(&id) else { continue };
            if twist.is_zero() && robot.sim.mode() != RobotMode::Velocity {
                continue;
            }
            match robot.sim.set_cartesian_velocity(twist) {
                Ok(()) => robot.jog_rejected = false,
                Err(e) => {
                    if !robot.jog_rejected {
                        robot.jog_rejected = true;
                        self.warn(&id.0, json!({"error": e.code(), "detail": format!("jog ignored: {e}")}));
                    }
                }
            }
        }
    }

    fn step_robots(&mut self) -> Vec<ModuleId> {
        let dt = self.config.dt;
        let mut finished = Vec::new();
        let mut publish = Vec::new();
        for (id, m) in self.members.iter_mut() {
            let Device::Robot(r) = &mut m.device else { continue };
            let out = r.sim.step(dt);
            if out.trajectory_finished {
                if let Some(cmd) = r.motion.take() {
                    finished.push((id.clone(), cmd));
                }
            }
            if out.publish_state {
                publish.push(id.clone());
            }
        }
        for (id, cmd) in finished {
            self.registry
                .complete(&id, cmd, crate::registry::SUCCEEDED, json!({}))
                .expect("motion command is in flight");
        }
        publish
    }

    fn couple_tables(&mut self) {
        let tcps: Vec<Pose> = self
            .members
            .values()
            .filter_map(|m| match &m.device {
                Device::Robot(r) => Some(r.sim.tcp_pose()),
                _ => None,
            })
            .collect();
        let mut moved = false;
        for m in self.members.values_mut() {
            let Device::Table(t) = &mut m.device else { continue };
            if t.brake != Brake::Released {
                continue;
            }
            for tcp in &tcps {
                if let Ok(delta) = t.coupled_update(tcp) {
                    moved |= delta != 0.0;
                    break;
                }
            }
        }
        if moved {
            self.update_riding_fixtures();
        }
    }

    fn update_riding_fixtures(&mut self) {
        let tops: BTreeMap<String, Pose> = self
            .members
            .values()
            .filter_map(|m| match &m.device {
                Device::Table(t) => Some((m.name.clone(), t.top_pose())),
                _ => None,
            })
            .collect();
        for m in self.members.values_mut() {
            if let Device::Fixture(f) = &mut m.device {
                if let Some((table, rel)) = &f.on_table {
                    if let Some(top) = tops.get(table) {
                        f.fixture.set_pose(top.compose(rel));
                    }
                }
            }
        }
    }

    fn sample_recordings(&mut self, now: f64) {
        let ids: Vec<ModuleId> = self.teach.recording_robots().cloned().collect();
        for id in ids {
            if let Some(Device::Robot(r)) = self.members.get(&id).map(|m| &m.device) {
                let (q, tcp) = (r.sim.joints().to_vec(), r.sim.tcp_pose());
                self.teach.sample(&id, now, &q, tcp);
            }
        }
    }

    fn heartbeats(&mut self, now: f64) {
        let period = self.config.heartbeat.period;
        let due: Vec<(ModuleId, u64)> = self
            .members
            .iter_mut()
            .filter(|(_, m)| !matches!(m.device, Device::Remote(_)) && m.next_hb <= now + TIME_EPS)
            .map(|(id, m)| {
                m.hb_seq += 1;
                m.next_hb += period;
                (id.clone(), m.hb_seq)
            })
            .collect();
        for (id, seq) in due {
            self.registry.heartbeat(&id, seq).expect("local heartbeats are monotonic");
        }
    }

    fn publish_states(&mut self, due: &[ModuleId]) {
        for id in due {
            let Some(Device::Robot(r)) = self.members.get_mut(id).map(|m| &mut m.device) else { continue };
            let state = r.sim.state();
            let key = (
                state.joints.positions.clone(),
                state.mode,
                state.equipped_tool.as_ref().map(|t| t.tool_id.clone()),
            );
            if r.published.as_ref() == Some(&key) {
                continue;
            }
            r.published = Some(key);
            self.registry
                .emit(id.0.clone(), EventKind::RobotState, json!({"module_id": id, "state": state}));
        }
    }
}

impl CellView for Cell {
    fn module(&self, name_or_id: &str) -> Option<&ModuleRecord> {
        self.registry.record(&self.registry.resolve(name_or_id)?)
    }

    fn arm_model(&self, record: &ModuleRecord) -> Option<&ArmModel> {
        if record.descriptor.kind != ModuleKind::Robot {
            return None;
        }
        match &self.members.get(&record.module_id)?.device {
            Device::Robot(r) => Some(r.sim.model()),
            _ => None,
        }
    }
}
