//! Plug & Produce module registry and the ordered cell event log.
//!
//! The registry is a plain state machine. Time is injected with
//! [`Registry::advance_to`]; every mutation is applied serially by the
//! single owner (see [`crate::cell::Cell`]). All observable changes are
//! appended to one gapless event log, and [`Registry::snapshot`] can be
//! rebuilt by folding that log from empty.

mod descriptor;
pub mod protocol;

pub use descriptor::{
    Capability, FieldSpec, FieldType, ModuleDescriptor, ModuleId, ModuleKind, ParamsSchema, ABORTED, FAILED,
    SUCCEEDED,
};

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::model::{CellEvent, EventKind};

/// Slack for comparing accumulated simulation time against deadlines.
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegistryError {
    #[error("a module named '{0}' is already attached")]
    NameConflict(String),
    #[error("invalid descriptor: {0}")]
    InvalidDescriptor(String),
    #[error("unknown module '{0}'")]
    UnknownModule(String),
    #[error("stale heartbeat sequence {got} (last {last})")]
    StaleSequence { got: u64, last: u64 },
    #[error("module '{module}' has no verb '{verb}'")]
    UnknownVerb { module: String, verb: String },
    #[error("params rejected: {0}")]
    SchemaViolation(String),
    #[error("module '{0}' is not online")]
    ModuleOffline(String),
    #[error("unknown or not in-flight command {0}")]
    UnknownCommand(u64),
    #[error("outcome '{outcome}' not declared by verb '{verb}'")]
    InvalidOutcome { verb: String, outcome: String },
    #[error("invalid heartbeat policy: {0}")]
    InvalidPolicy(String),
}

impl RegistryError {
    pub fn code(&self) -> &'static str {
        match self {
            RegistryError::NameConflict(_) => "NameConflict",
            RegistryError::InvalidDescriptor(_) => "InvalidDescriptor",
            RegistryError::UnknownModule(_) => "UnknownModule",
            RegistryError::StaleSequence { .. } => "StaleSequence",
            RegistryError::UnknownVerb { .. } => "UnknownVerb",
            RegistryError::SchemaViolation(_) => "SchemaViolation",
            RegistryError::ModuleOffline(_) => "ModuleOffline",
            RegistryError::UnknownCommand(_) => "UnknownCommand",
            RegistryError::InvalidOutcome { .. } => "InvalidOutcome",
            RegistryError::InvalidPolicy(_) => "InvalidPolicy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeartbeatPolicy {
    pub period: f64,
    pub miss_limit: u32,
}

impl Default for HeartbeatPolicy {
    fn default() -> Self {
        Self {
            period: 0.5,
            miss_limit: 3,
        }
    }
}

impl HeartbeatPolicy {
    pub fn validate(&self) -> Result<(), RegistryError> {
        if !(self.period > 0.0) || !self.period.is_finite() {
            return Err(RegistryError::InvalidPolicy("period must be > 0".into()));
        }
        if self.miss_limit < 1 {
            return Err(RegistryError::InvalidPolicy("miss_limit must be >= 1".into()));
        }
        Ok(())
    }

    pub fn timeout(&self) -> f64 {
        self.period * self.miss_limit as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ModuleState {
    Attached,
    Online,
    Offline,
    Detached,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleRecord {
    pub module_id: ModuleId,
    pub descriptor: ModuleDescriptor,
    pub state: ModuleState,
    pub last_heartbeat_seq: u64,
    pub attach_time: f64,
    #[serde(skip)]
    last_heartbeat_time: f64,
}

pub type CommandId = u64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Command {
    pub id: CommandId,
    pub module_id: ModuleId,
    pub verb: String,
    pub params: Value,
    pub issued_at: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandResult {
    pub id: CommandId,
    pub module_id: ModuleId,
    pub verb: String,
    pub outcome: String,
    pub result: Value,
    pub finished_at: f64,
}

/// Which events a subscriber wants. `None` means "all".
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventFilter {
    #[serde(default)]
    pub kinds: Option<BTreeSet<EventKind>>,
    #[serde(default)]
    pub sources: Option<BTreeSet<String>>,
}

impl EventFilter {
    pub fn all() -> Self {
        Self::default()
    }

    pub fn kinds(kinds: impl IntoIterator<Item = EventKind>) -> Self {
        Self {
            kinds: Some(kinds.into_iter().collect()),
            sources: None,
        }
    }

    pub fn matches(&self, e: &CellEvent) -> bool {
        self.kinds.as_ref().is_none_or(|k| k.contains(&e.kind))
            && self.sources.as_ref().is_none_or(|s| s.contains(&e.source))
    }
}

/// Cursor into the event log. Each matching event is returned exactly
/// once, in sequence order.
#[derive(Debug, Clone)]
pub struct Subscription {
    filter: EventFilter,
    next_seq: u64,
}

impl Subscription {
    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }
}

#[derive(Debug)]
pub struct Registry {
    policy: HeartbeatPolicy,
    now: f64,
    next_module: u64,
    next_command: CommandId,
    records: BTreeMap<ModuleId, ModuleRecord>,
    queues: BTreeMap<ModuleId, VecDeque<Command>>,
    in_flight: BTreeSet<CommandId>,
    results: BTreeMap<CommandId, CommandResult>,
    log: Vec<CellEvent>,
}

impl Default for Registry {
    fn default() -> Self {
        Self::new(HeartbeatPolicy::default()).expect("default policy is valid")
    }
}

impl Registry {
    pub fn new(policy: HeartbeatPolicy) -> Result<Self, RegistryError> {
        policy.validate()?;
        Ok(Self {
            policy,
            now: 0.0,
            next_module: 1,
            next_command: 1,
            records: BTreeMap::new(),
            queues: BTreeMap::new(),
            in_flight: BTreeSet::new(),
            results: BTreeMap::new(),
            log: Vec::new(),
        })
    }

    pub fn policy(&self) -> HeartbeatPolicy {
        self.policy
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    /// Moves the registry clock forward and marks modules whose heartbeat
    /// deadline has passed as OFFLINE. The OFFLINE event carries the
    /// deadline instant, not the (possibly later) current time.
    pub fn advance_to(&mut self, t: f64) {
        if t > self.now {
            self.now = t;
        }
        let timeout = self.policy.timeout();
        let mut expired: Vec<(f64, ModuleId)> = self
            .records
            .values()
            .filter(|r| r.state == ModuleState::Online)
            .map(|r| (r.last_heartbeat_time + timeout, r.module_id.clone()))
            .filter(|(deadline, _)| *deadline <= self.now + TIME_EPS)
            .collect();
        expired.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        for (deadline, id) in expired {
            let rec = self.records.get_mut(&id).expect("collected from records");
            rec.state = ModuleState::Offline;
            let seq = rec.last_heartbeat_seq;
            self.push_event(
                deadline,
                id.0.clone(),
                EventKind::Offline,
                json!({"module_id": id, "last_heartbeat_seq": seq}),
            );
        }
    }

    fn push_event(&mut self, sim_time: f64, source: String, kind: EventKind, payload: Value) -> u64 {
        let seq = self.log.len() as u64;
        self.log.push(CellEvent {
            seq,
            sim_time,
            source,
            kind,
            payload,
        });
        seq
    }

    /// Appends an event stamped with the current registry time.
    pub fn emit(&mut self, source: impl Into<String>, kind: EventKind, payload: Value) -> u64 {
        self.push_event(self.now, source.into(), kind, payload)
    }

    pub fn attach(&mut self, descriptor: ModuleDescriptor) -> Result<ModuleId, RegistryError> {
        self.advance_to(self.now);
        descriptor.validate().map_err(RegistryError::InvalidDescriptor)?;
        if self.records.values().any(|r| r.descriptor.name == descriptor.name) {
            return Err(RegistryError::NameConflict(descriptor.name));
        }
        let id = ModuleId(format!("m{}", self.next_module));
        self.next_module += 1;
        let record = ModuleRecord {
            module_id: id.clone(),
            descriptor: descriptor.clone(),
            state: ModuleState::Attached,
            last_heartbeat_seq: 0,
            attach_time: self.now,
            last_heartbeat_time: self.now,
        };
        self.records.insert(id.clone(), record);
        self.queues.insert(id.clone(), VecDeque::new());
        self.emit(
            id.0.clone(),
            EventKind::Attached,
            json!({"module_id": id, "descriptor": descriptor, "attach_time": self.now}),
        );
        Ok(id)
    }

    /// Removes a module. Queued and in-flight commands finish ABORTED.
    pub fn detach(&mut self, id: &ModuleId) -> Result<Vec<CommandResult>, RegistryError> {
        self.advance_to(self.now);
        if !self.records.contains_key(id) {
            return Err(RegistryError::UnknownModule(id.0.clone()));
        }
        let pending: Vec<Command> = self.queues.remove(id).unwrap_or_default().into_iter().collect();
        let mut aborted = Vec::new();
        for cmd in pending {
            aborted.push(self.finish(cmd, ABORTED.to_string(), json!({"reason": "module detached"})));
        }
        let rec = self.records.remove(id).expect("checked above");
        self.emit(
            id.0.clone(),
            EventKind::Detached,
            json!({"module_id": id, "name": rec.descriptor.name}),
        );
        Ok(aborted)
    }

    pub fn heartbeat(&mut self, id: &ModuleId, seq: u64) -> Result<(), RegistryError> {
        self.advance_to(self.now);
        let now = self.now;
        let rec = self
            .records
            .get_mut(id)
            .ok_or_else(|| RegistryError::UnknownModule(id.0.clone()))?;
        if seq <= rec.last_heartbeat_seq {
            return Err(RegistryError::StaleSequence {
                got: seq,
                last: rec.last_heartbeat_seq,
            });
        }
        rec.last_heartbeat_seq = seq;
        rec.last_heartbeat_time = now;
        let kind = match rec.state {
            ModuleState::Attached | ModuleState::Offline => {
                rec.state = ModuleState::Online;
                EventKind::Online
            }
            _ => EventKind::Heartbeat,
        };
        self.emit(id.0.clone(), kind, json!({"module_id": id, "seq": seq}));
        Ok(())
    }

    /// Validates and queues a command. The terminal outcome arrives later
    /// through [`Registry::complete`] (or ABORTED on detach).
    pub fn dispatch(&mut self, id: &ModuleId, verb: &str, params: Value) -> Result<CommandId, RegistryError> {
        self.advance_to(self.now);
        let rec = self
            .records
            .get(id)
            .ok_or_else(|| RegistryError::UnknownModule(id.0.clone()))?;
        let cap = rec
            .descriptor
            .capability(verb)
            .ok_or_else(|| RegistryError::UnknownVerb {
                module: rec.descriptor.name.clone(),
                verb: verb.to_string(),
            })?;
        if rec.state != ModuleState::Online {
            return Err(RegistryError::ModuleOffline(rec.descriptor.name.clone()));
        }
        cap.params_schema.validate(&params).map_err(RegistryError::SchemaViolation)?;
        let params = if params.is_null() { json!({}) } else { params };

        let cmd_id = self.next_command;
        self.next_command += 1;
        let cmd = Command {
            id: cmd_id,
            module_id: id.clone(),
            verb: verb.to_string(),
            params: params.clone(),
            issued_at: self.now,
        };
        self.queues.entry(id.clone()).or_default().push_back(cmd);
        self.emit(
            id.0.clone(),
            EventKind::SkillStarted,
            json!({"cmd_id": cmd_id, "module_id": id, "verb": verb, "params": params}),
        );
        Ok(cmd_id)
    }

    /// The command a module should be working on, marking it in flight.
    /// Returns `None` while the module's head command is already running.
    pub fn take_next(&mut self, id: &ModuleId) -> Option<Command> {
        let head = self.queues.get(id)?.front()?;
        if self.in_flight.contains(&head.id) {
            return None;
        }
        self.in_flight.insert(head.id);
        Some(head.clone())
    }

    pub fn in_flight(&self, id: &ModuleId) -> Option<&Command> {
        self.queues
            .get(id)?
            .front()
            .filter(|c| self.in_flight.contains(&c.id))
    }

    pub fn pending_count(&self, id: &ModuleId) -> usize {
        self.queues.get(id).map_or(0, |q| q.len())
    }

    /// Records the terminal outcome of the module's in-flight command.
    pub fn complete(
        &mut self,
        id: &ModuleId,
        cmd_id: CommandId,
        outcome: &str,
        result: Value,
    ) -> Result<CommandResult, RegistryError> {
        self.advance_to(self.now);
        let rec = self
            .records
            .get(id)
            .ok_or_else(|| RegistryError::UnknownModule(id.0.clone()))?;
        let head = self
            .queues
            .get(id)
            .and_then(|q| q.front())
            .filter(|c| c.id == cmd_id && self.in_flight.contains(&c.id))
            .ok_or(RegistryError::UnknownCommand(cmd_id))?;
        let declared = rec
            .descriptor
            .capability(&head.verb)
            .is_some_and(|c| c.outcomes.contains(outcome));
        if !declared && outcome != ABORTED {
            return Err(RegistryError::InvalidOutcome {
                verb: head.verb.clone(),
                outcome: outcome.to_string(),
            });
        }
        let cmd = self.queues.get_mut(id).and_then(|q| q.pop_front()).expect("head exists");
        Ok(self.finish(cmd, outcome.to_string(), result))
    }

    fn finish(&mut self, cmd: Command, outcome: String, result: Value) -> CommandResult {
        self.in_flight.remove(&cmd.id);
        let res = CommandResult {
            id: cmd.id,
            module_id: cmd.module_id.clone(),
            verb: cmd.verb.clone(),
            outcome: outcome.clone(),
            result: result.clone(),
            finished_at: self.now,
        };
        self.emit(
            cmd.module_id.0.clone(),
            EventKind::SkillFinished,
            json!({"cmd_id": cmd.id, "module_id": cmd.module_id, "verb": cmd.verb,
                   "outcome": outcome, "result": result}),
        );
        self.results.insert(cmd.id, res.clone());
        res
    }

    pub fn result(&self, cmd_id: CommandId) -> Option<&CommandResult> {
        self.results.get(&cmd_id)
    }

    pub fn record(&self, id: &ModuleId) -> Option<&ModuleRecord> {
        self.records.get(id)
    }

    pub fn lookup(&self, name: &str) -> Option<&ModuleRecord> {
        self.records.values().find(|r| r.descriptor.name == name)
    }

    /// Resolves either a module id or a descriptor name.
    pub fn resolve(&self, id_or_name: &str) -> Option<ModuleId> {
        let id = ModuleId(id_or_name.to_string());
        if self.records.contains_key(&id) {
            return Some(id);
        }
        self.lookup(id_or_name).map(|r| r.module_id.clone())
    }

    /// Non-detached modules, ordered by id.
    pub fn snapshot(&self) -> Vec<ModuleRecord> {
        self.records.values().cloned().collect()
    }

    pub fn module_ids(&self) -> Vec<ModuleId> {
        self.records.keys().cloned().collect()
    }

    pub fn events(&self) -> &[CellEvent] {
        &self.log
    }

    pub fn events_since(&self, from_seq: u64) -> &[CellEvent] {
        let from = (from_seq as usize).min(self.log.len());
        &self.log[from..]
    }

    pub fn next_seq(&self) -> u64 {
        self.log.len() as u64
    }

    /// Subscription starting at `from_seq`, or at the next event.
    pub fn subscribe(&self, filter: EventFilter, from_seq: Option<u64>) -> Subscription {
        Subscription {
            filter,
            next_seq: from_seq.unwrap_or(self.next_seq()),
        }
    }

    pub fn poll(&self, sub: &mut Subscription) -> Vec<CellEvent> {
        let out: Vec<CellEvent> = self
            .events_since(sub.next_seq)
            .iter()
            .filter(|e| sub.filter.matches(e))
            .cloned()
            .collect();
        sub.next_seq = sub.next_seq.max(self.next_seq());
        out
    }
}
