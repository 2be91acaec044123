use serde::{Deserialize, Serialize};

use super::ir::{Action, SequenceIr};
use crate::registry::{ModuleKind, ModuleRecord, ModuleState, ABORTED};
use crate::robot::ArmModel;
use crate::skills::{SkillPayload, SkillStore, StoreError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FindingKind {
    MissingSkill,
    MissingVersion,
    UnknownModule,
    ModuleOffline,
    UnknownVerb,
    SchemaViolation,
    KindMismatch,
    ModelMismatch,
    UncoveredOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub severity: Severity,
    pub kind: FindingKind,
    pub state: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_runnable(&self) -> bool {
        self.findings.iter().all(|f| f.severity != Severity::Error)
    }

    pub fn errors(&self) -> impl Iterator<Item = &Finding> {
        self.findings.iter().filter(|f| f.severity == Severity::Error)
    }
}

/// What validation needs to know about the live cell.
pub trait CellView {
    /// Looks a module up by name or id.
    fn module(&self, name_or_id: &str) -> Option<&ModuleRecord>;
    fn arm_model(&self, record: &ModuleRecord) -> Option<&ArmModel>;
}

/// Verb robots expose for running stored trajectories.
pub const RUN_SKILL: &str = "run_skill";

struct Check<'a> {
    report: ValidationReport,
    state: &'a str,
}

impl Check<'_> {
    fn push(&mut self, severity: Severity, kind: FindingKind, detail: String) {
        self.report.findings.push(Finding {
            severity,
            kind,
            state: self.state.to_string(),
            detail,
        });
    }

    fn module<'c>(&mut self, cell: &'c dyn CellView, name: &str) -> Option<&'c ModuleRecord> {
        let Some(rec) = cell.module(name) else {
            self.push(Severity::Error, FindingKind::UnknownModule, format!("no module '{name}'"));
            return None;
        };
        if rec.state != ModuleState::Online {
            self.push(
                Severity::Error,
                FindingKind::ModuleOffline,
                format!("module '{name}' is {:?}", rec.state).to_uppercase(),
            );
        }
        Some(rec)
    }

    fn verb(&mut self, rec: &ModuleRecord, verb: &str, params: &serde_json::Value, covered: &[&String]) {
        let Some(cap) = rec.descriptor.capability(verb) else {
            self.push(
                Severity::Error,
                FindingKind::UnknownVerb,
                format!("module '{}' has no verb '{verb}'", rec.descriptor.name),
            );
            return;
        };
        if let Err(e) = cap.params_schema.validate(params) {
            self.push(Severity::Error, FindingKind::SchemaViolation, format!("{verb}: {e}"));
        }
        for label in &cap.outcomes {
            if label != ABORTED && !covered.contains(&label) {
                self.push(
                    Severity::Warning,
                    FindingKind::UncoveredOutcome,
                    format!("outcome {label} of {verb} follows the FAILED transition"),
                );
            }
        }
    }
}

/// Pre-flight check of `ir` against the cell and skill store. Skill
/// references without a version are checked against the current latest.
pub fn validate(ir: &SequenceIr, cell: &dyn CellView, store: &SkillStore) -> ValidationReport {
    let mut check = Check {
        report: ValidationReport::default(),
        state: "",
    };
    for s in &ir.states {
        check.state = &s.id;
        let covered: Vec<&String> = s.transitions.keys().collect();
        match &s.action {
            Action::Skill { name, version, target } => {
                let entry = match store.get(name, *version) {
                    Ok(e) => Some(e),
                    Err(StoreError::UnknownVersion { .. }) => {
                        check.push(
                            Severity::Error,
                            FindingKind::MissingVersion,
                            format!("skill '{name}' has no version {}", version.unwrap_or(0)),
                        );
                        None
                    }
                    Err(_) => {
                        check.push(Severity::Error, FindingKind::MissingSkill, format!("no skill '{name}'"));
                        None
                    }
                };
                let Some(rec) = check.module(cell, target) else { continue };
                let Some(entry) = entry else { continue };
                match &entry.payload {
                    SkillPayload::Trajectory(traj) => {
                        if rec.descriptor.kind != ModuleKind::Robot {
                            check.push(
                                Severity::Error,
                                FindingKind::KindMismatch,
                                format!("trajectory skill '{name}' targets a {:?} module", rec.descriptor.kind),
                            );
                            continue;
                        }
                        check.verb(rec, RUN_SKILL, &serde_json::json!({"skill": name}), &covered);
                        if let Some(model) = cell.arm_model(rec) {
                            if let Some(dof) = traj.dof() {
                                if dof != model.dof() {
                                    check.push(
                                        Severity::Error,
                                        FindingKind::ModelMismatch,
                                        format!("'{name}' has {dof} joints, '{}' has {}", model.name, model.dof()),
                                    );
                                    continue;
                                }
                            }
                            if let Some(recorded) = &entry.meta.robot_model {
                                if *recorded != model.name {
                                    check.push(
                                        Severity::Warning,
                                        FindingKind::ModelMismatch,
                                        format!("'{name}' was taught on {recorded}, target is {}", model.name),
                                    );
                                }
                            }
                        }
                    }
                    SkillPayload::Primitive(p) => {
                        if rec.descriptor.kind != p.module_kind {
                            check.push(
                                Severity::Error,
                                FindingKind::KindMismatch,
                                format!(
                                    "primitive '{name}' needs a {:?} module, '{target}' is {:?}",
                                    p.module_kind, rec.descriptor.kind
                                ),
                            );
                            continue;
                        }
                        check.verb(rec, &p.verb, &p.params, &covered);
                    }
                }
            }
            Action::Cmd { module, verb, params } => {
                if let Some(rec) = check.module(cell, module) {
                    check.verb(rec, verb, params, &covered);
                }
            }
            Action::Wait { .. } | Action::Noop => {}
        }
    }
    check.report
}
