use serde::{Deserialize, Serialize};

use super::ast::{END_FAILURE, END_SUCCESS};
use super::ir::{IrState, SequenceIr};
use crate::registry::FAILED;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RunStatus {
    Running,
    Finished,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateRecord {
    pub state: String,
    pub enter_time: f64,
    pub exit_time: Option<f64>,
    pub outcome: Option<String>,
    /// Skill version bound when the state was entered.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skill_version: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run_id: u64,
    pub sequence: String,
    pub source_hash: String,
    pub status: RunStatus,
    pub records: Vec<StateRecord>,
    pub final_outcome: Option<String>,
    pub first_seq: u64,
    pub last_seq: u64,
    pub start_time: f64,
    pub end_time: Option<f64>,
}

/// Where a finished state leads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Next {
    State(String),
    End(String),
}

/// Bookkeeping for one execution of an IR. The cell drives it: it enters
/// states, performs their actions and reports outcomes.
#[derive(Debug, Clone)]
pub struct Run {
    pub ir: SequenceIr,
    pub report: RunReport,
}

impl Run {
    pub fn new(run_id: u64, ir: SequenceIr, now: f64, first_seq: u64) -> Self {
        let report = RunReport {
            run_id,
            sequence: ir.name.clone(),
            source_hash: ir.metadata.source_hash.clone(),
            status: RunStatus::Running,
            records: Vec::new(),
            final_outcome: None,
            first_seq,
            last_seq: first_seq,
            start_time: now,
            end_time: None,
        };
        Self { ir, report }
    }

    pub fn is_finished(&self) -> bool {
        self.report.status == RunStatus::Finished
    }

    pub fn current(&self) -> Option<&IrState> {
        let rec = self.report.records.last()?;
        if rec.outcome.is_some() {
            return None;
        }
        self.ir.state(&rec.state)
    }

    pub fn enter(&mut self, state: &str, now: f64) {
        self.report.records.push(StateRecord {
            state: state.to_string(),
            enter_time: now,
            exit_time: None,
            outcome: None,
            skill_version: None,
        });
    }

    pub fn bind_version(&mut self, version: u32) {
        if let Some(r) = self.report.records.last_mut() {
            r.skill_version = Some(version);
        }
    }

    /// Closes the current state. Outcomes without a transition of their
    /// own (ABORTED, undeclared labels) take the FAILED transition.
    pub fn exit(&mut self, outcome: &str, now: f64) -> Next {
        let state = self.current().expect("a state is active").clone();
        let rec = self.report.records.last_mut().expect("a state is active");
        rec.exit_time = Some(now);
        rec.outcome = Some(outcome.to_string());
        let target = state
            .transitions
            .get(outcome)
            .or_else(|| state.transitions.get(FAILED))
            .expect("IR covers FAILED");
        if target == END_SUCCESS || target == END_FAILURE {
            Next::End(target.clone())
        } else {
            Next::State(target.clone())
        }
    }

    pub fn finish(&mut self, final_outcome: &str, now: f64) {
        self.report.status = RunStatus::Finished;
        self.report.final_outcome = Some(final_outcome.to_string());
        self.report.end_time = Some(now);
    }
}
