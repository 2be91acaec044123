use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    Attached,
    Online,
    Heartbeat,
    Offline,
    Detached,
    SkillStarted,
    SkillFinished,
    ToolChanged,
    BrakeChanged,
    RackChanged,
    FixtureChanged,
    RobotState,
    StateEntered,
    RunStarted,
    RunFinished,
    SkillPut,
    SkillDeleted,
    Warning,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::Attached => "ATTACHED",
            EventKind::Online => "ONLINE",
            EventKind::Heartbeat => "HEARTBEAT",
            EventKind::Offline => "OFFLINE",
            EventKind::Detached => "DETACHED",
            EventKind::SkillStarted => "SKILL_STARTED",
            EventKind::SkillFinished => "SKILL_FINISHED",
            EventKind::ToolChanged => "TOOL_CHANGED",
            EventKind::BrakeChanged => "BRAKE_CHANGED",
            EventKind::RackChanged => "RACK_CHANGED",
            EventKind::FixtureChanged => "FIXTURE_CHANGED",
            EventKind::RobotState => "ROBOT_STATE",
            EventKind::StateEntered => "STATE_ENTERED",
            EventKind::RunStarted => "RUN_STARTED",
            EventKind::RunFinished => "RUN_FINISHED",
            EventKind::SkillPut => "SKILL_PUT",
            EventKind::SkillDeleted => "SKILL_DELETED",
            EventKind::Warning => "WARNING",
        }
    }

    pub fn parse(s: &str) -> Option<EventKind> {
        serde_json::from_value(Value::String(s.to_ascii_uppercase())).ok()
    }
}

/// Immutable record of something observable in the cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellEvent {
    pub seq: u64,
    pub sim_time: f64,
    pub source: String,
    pub kind: EventKind,
    pub payload: Value,
}
