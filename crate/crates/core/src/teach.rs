//! Programming by demonstration: jog stick mapping and motion recording.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Pose, Trajectory, Twist};
use crate::registry::ModuleId;
use crate::skills::{SkillMeta, SkillPayload, SkillStore, StoreError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TeachError {
    #[error("stick component {0} outside [-1, 1]")]
    OutOfRange(f64),
    #[error("invalid jog config: {0}")]
    InvalidConfig(String),
    #[error("unknown module '{0}'")]
    UnknownModule(String),
    #[error("robot '{0}' is already recording")]
    AlreadyRecording(String),
    #[error("recording has fewer than 2 samples")]
    EmptyRecording,
    #[error("unknown session {0}")]
    UnknownSession(u64),
    #[error("session {0} is not recording")]
    NotRecording(u64),
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl TeachError {
    pub fn code(&self) -> &'static str {
        match self {
            TeachError::OutOfRange(_) => "OutOfRange",
            TeachError::InvalidConfig(_) => "InvalidConfig",
            TeachError::UnknownModule(_) => "UnknownModule",
            TeachError::AlreadyRecording(_) => "AlreadyRecording",
            TeachError::EmptyRecording => "EmptyRecording",
            TeachError::UnknownSession(_) => "UnknownSession",
            TeachError::NotRecording(_) => "NotRecording",
            TeachError::Store(e) => e.code(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JogConfig {
    pub v_max_linear: f64,
    pub v_max_angular: f64,
    pub deadband: f64,
    pub gamma: f64,
}

impl Default for JogConfig {
    fn default() -> Self {
        Self {
            v_max_linear: 0.25,
            v_max_angular: 1.0,
            deadband: 0.10,
            gamma: 1.0,
        }
    }
}

impl JogConfig {
    pub fn validate(&self) -> Result<(), TeachError> {
        if !(0.0..1.0).contains(&self.deadband) {
            return Err(TeachError::InvalidConfig("deadband must be in [0, 1)".into()));
        }
        if !(self.gamma >= 1.0) || !self.gamma.is_finite() {
            return Err(TeachError::InvalidConfig("gamma must be >= 1".into()));
        }
        if !(self.v_max_linear > 0.0 && self.v_max_angular > 0.0)
            || !self.v_max_linear.is_finite()
            || !self.v_max_angular.is_finite()
        {
            return Err(TeachError::InvalidConfig("speed limits must be positive".into()));
        }
        Ok(())
    }

    /// Maps one stick axis to a velocity with the given limit.
    pub fn axis(&self, s: f64, v_max: f64) -> f64 {
        let mag = ((s.abs() - self.deadband).max(0.0) / (1.0 - self.deadband)).powf(self.gamma);
        v_max * s.signum() * mag
    }
}

/// Normalized analog stick deflection, each component in [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StickVector {
    pub lin: [f64; 3],
    pub ang: [f64; 3],
}

pub fn map_jog(stick: &StickVector, cfg: &JogConfig) -> Result<Twist, TeachError> {
    cfg.validate()?;
    if let Some(bad) = stick.lin.iter().chain(&stick.ang).find(|s| !(-1.0..=1.0).contains(*s)) {
        return Err(TeachError::OutOfRange(*bad));
    }
    let lin = stick.lin.map(|s| cfg.axis(s, cfg.v_max_linear));
    let ang = stick.ang.map(|s| cfg.axis(s, cfg.v_max_angular));
    Twist::new(lin, ang).map_err(|_| TeachError::OutOfRange(f64::NAN))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SessionState {
    Recording,
    Stopped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordingSession {
    pub session_id: u64,
    pub robot: ModuleId,
    pub robot_model: String,
    pub sample_rate: f64,
    pub state: SessionState,
    pub start_time: f64,
    #[serde(skip)]
    joints: Vec<(f64, Vec<f64>)>,
    #[serde(skip)]
    tcp: Vec<Pose>,
}

impl RecordingSession {
    pub fn sample_count(&self) -> usize {
        self.joints.len()
    }

    /// Sim time at which the next sample falls due.
    fn next_due(&self) -> f64 {
        self.start_time + self.joints.len() as f64 / self.sample_rate
    }

    fn push(&mut self, q: &[f64], tcp: Pose) {
        let t = self.joints.len() as f64 / self.sample_rate;
        self.joints.push((t, q.to_vec()));
        self.tcp.push(tcp);
    }

    /// Tcp poses captured alongside each joint sample.
    pub fn tcp_trace(&self) -> &[Pose] {
        &self.tcp
    }

    pub fn trajectory(&self) -> Result<Trajectory, TeachError> {
        if self.joints.len() < 2 {
            return Err(TeachError::EmptyRecording);
        }
        Trajectory::joint(self.joints.clone()).map_err(|_| TeachError::EmptyRecording)
    }
}

/// Slack when comparing sim time to sample due times.
const DUE_EPS: f64 = 1e-9;

#[derive(Debug, Default)]
pub struct TeachService {
    config: JogConfig,
    sessions: BTreeMap<u64, RecordingSession>,
    active: BTreeMap<ModuleId, u64>,
    next_id: u64,
}

impl TeachService {
    pub fn new(config: JogConfig) -> Result<Self, TeachError> {
        config.validate()?;
        Ok(Self {
            config,
            ..Default::default()
        })
    }

    pub fn config(&self) -> &JogConfig {
        &self.config
    }

    pub fn set_config(&mut self, config: JogConfig) -> Result<(), TeachError> {
        config.validate()?;
        self.config = config;
        Ok(())
    }

    pub fn map(&self, stick: &StickVector) -> Result<Twist, TeachError> {
        map_jog(stick, &self.config)
    }

    /// Opens a session and takes the first sample at `now`.
    pub fn start(
        &mut self,
        robot: &ModuleId,
        robot_model: &str,
        rate: f64,
        now: f64,
        q: &[f64],
        tcp: Pose,
    ) -> Result<u64, TeachError> {
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(TeachError::InvalidConfig("sample rate must be positive".into()));
        }
        if self.active.contains_key(robot) {
            return Err(TeachError::AlreadyRecording(robot.0.clone()));
        }
        self.next_id += 1;
        let id = self.next_id;
        let mut s = RecordingSession {
            session_id: id,
            robot: robot.clone(),
            robot_model: robot_model.to_string(),
            sample_rate: rate,
            state: SessionState::Recording,
            start_time: now,
            joints: Vec::new(),
            tcp: Vec::new(),
        };
        s.push(q, tcp);
        self.sessions.insert(id, s);
        self.active.insert(robot.clone(), id);
        Ok(id)
    }

    /// Robots with an open session.
    pub fn recording_robots(&self) -> impl Iterator<Item = &ModuleId> {
        self.active.keys()
    }

    /// Takes every sample of `robot`'s session that is due by `now`, using
    /// the state the robot has at `now`.
    pub fn sample(&mut self, robot: &ModuleId, now: f64, q: &[f64], tcp: Pose) {
        let Some(id) = self.active.get(robot) else { return };
        let s = self.sessions.get_mut(id).expect("active sessions exist");
        while s.next_due() <= now + DUE_EPS {
            s.push(q, tcp);
        }
    }

    pub fn stop(&mut self, session: u64) -> Result<Trajectory, TeachError> {
        let s = self.sessions.get_mut(&session).ok_or(TeachError::UnknownSession(session))?;
        if s.state != SessionState::Recording {
            return Err(TeachError::NotRecording(session));
        }
        s.state = SessionState::Stopped;
        self.active.remove(&s.robot);
        s.trajectory()
    }

    /// Ends any session held by a robot that left the cell.
    pub fn drop_robot(&mut self, robot: &ModuleId) {
        if let Some(id) = self.active.remove(robot) {
            if let Some(s) = self.sessions.get_mut(&id) {
                s.state = SessionState::Stopped;
            }
        }
    }

    pub fn session(&self, id: u64) -> Result<&RecordingSession, TeachError> {
        self.sessions.get(&id).ok_or(TeachError::UnknownSession(id))
    }

    pub fn active_session(&self, robot: &ModuleId) -> Option<u64> {
        self.active.get(robot).copied()
    }

    /// Saves a stopped session as a trajectory skill.
    pub fn save(&self, store: &mut SkillStore, session: u64, name: &str) -> Result<u32, TeachError> {
        let s = self.session(session)?;
        if s.state == SessionState::Recording {
            return Err(TeachError::InvalidConfig("stop the session before saving".into()));
        }
        save_demonstration(store, s.trajectory()?, name, &s.robot_model)
    }
}

pub fn save_demonstration(
    store: &mut SkillStore,
    traj: Trajectory,
    name: &str,
    robot_model: &str,
) -> Result<u32, TeachError> {
    let meta = SkillMeta {
        robot_model: Some(robot_model.to_string()),
        tags: ["demonstration".to_string()].into(),
        ..Default::default()
    };
    Ok(store.put(name, SkillPayload::Trajectory(traj), meta)?)
}

/// One entry of a scripted teaching tape. The stick deflection holds from
/// `t_s` until the next entry; the last entry marks the end of the tape.
/// `free_drag` switches guidance mode and `drag` displaces the tcp by hand
/// (tcp frame), both applied once at `t_s`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TapeEntry {
    pub t_s: f64,
    #[serde(default)]
    pub lin: [f64; 3],
    #[serde(default)]
    pub ang: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub free_drag: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drag: Option<Pose>,
}

impl TapeEntry {
    pub fn stick(&self) -> StickVector {
        StickVector {
            lin: self.lin,
            ang: self.ang,
        }
    }
}

/// Time-stamped stick vectors for headless teaching.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Tape(pub Vec<TapeEntry>);

impl Tape {
    pub fn validate(&self) -> Result<(), TeachError> {
        let Some(first) = self.0.first() else {
            return Err(TeachError::InvalidConfig("tape is empty".into()));
        };
        if first.t_s != 0.0 {
            return Err(TeachError::InvalidConfig("tape must start at t_s = 0".into()));
        }
        for w in self.0.windows(2) {
            if !(w[1].t_s >= w[0].t_s) || !w[1].t_s.is_finite() {
                return Err(TeachError::InvalidConfig(format!("tape time goes backwards at t_s={}", w[1].t_s)));
            }
        }
        for e in &self.0 {
            if let Some(bad) = e.lin.iter().chain(&e.ang).find(|s| !(-1.0..=1.0).contains(*s)) {
                return Err(TeachError::OutOfRange(*bad));
            }
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.0.last().map_or(0.0, |e| e.t_s)
    }
}
