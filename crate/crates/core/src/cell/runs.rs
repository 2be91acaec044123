//! Loaded sequences and their executors.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::json;

use super::{Cell, CellError, CellResult, TIME_EPS};
use crate::assembler::{coerce_args, compile, expand, parse, validate, Action, Next, Run, RunReport, SequenceIr, ValidationReport};
use crate::model::EventKind;
use crate::registry::{CommandId, ModuleId, ModuleKind, FAILED, SUCCEEDED};
use crate::skills::SkillPayload;

pub const RUN_SOURCE: &str = "assembler";

pub(super) struct LoadedSequence {
    pub ir: SequenceIr,
    pub source: Option<String>,
}

pub(super) enum Waiting {
    Command(CommandId),
    Until(f64),
    Done(String),
}

pub(super) struct ActiveRun {
    run: Run,
    waiting: Waiting,
    robots: Vec<ModuleId>,
    skills: Vec<String>,
}

impl Cell {
    /// Parses, expands and compiles `src`, replacing any loaded sequence of
    /// the same name. `args` override parameter defaults.
    pub fn compile_sequence(&mut self, src: &str, args: &BTreeMap<String, String>) -> CellResult<&SequenceIr> {
        let ast = parse(src)?;
        let args = coerce_args(&ast, args)?;
        let ir = compile(&expand(&ast, &args)?)?;
        Ok(self.install(ir, Some(src.to_string())))
    }

    /// Loads an already compiled IR document.
    pub fn load_ir(&mut self, ir: SequenceIr) -> CellResult<&SequenceIr> {
        ir.check()?;
        Ok(self.install(ir, None))
    }

    fn install(&mut self, ir: SequenceIr, source: Option<String>) -> &SequenceIr {
        let name = ir.name.clone();
        self.unload(&name);
        for skill in ir.skill_refs() {
            self.store.pin(skill);
        }
        self.sequences.insert(name.clone(), LoadedSequence { ir, source });
        &self.sequences[&name].ir
    }

    fn unload(&mut self, name: &str) -> bool {
        let Some(old) = self.sequences.remove(name) else { return false };
        for skill in old.ir.skill_refs() {
            self.store.unpin(skill);
        }
        true
    }

    pub fn remove_sequence(&mut self, name: &str) -> CellResult<()> {
        if self.unload(name) {
            Ok(())
        } else {
            Err(CellError::UnknownSequence(name.to_string()))
        }
    }

    pub fn sequence(&self, name: &str) -> CellResult<&SequenceIr> {
        self.sequences
            .get(name)
            .map(|s| &s.ir)
            .ok_or_else(|| CellError::UnknownSequence(name.to_string()))
    }

    pub fn sequence_source(&self, name: &str) -> CellResult<Option<&str>> {
        self.sequences
            .get(name)
            .map(|s| s.source.as_deref())
            .ok_or_else(|| CellError::UnknownSequence(name.to_string()))
    }

    pub fn sequence_names(&self) -> impl Iterator<Item = &str> {
        self.sequences.keys().map(String::as_str)
    }

    pub fn validate_sequence(&self, name: &str) -> CellResult<ValidationReport> {
        Ok(validate(self.sequence(name)?, self, &self.store))
    }

    fn run_robots(&self, ir: &SequenceIr) -> Vec<ModuleId> {
        let mut out = BTreeSet::new();
        for s in &ir.states {
            let module = match &s.action {
                Action::Skill { target, .. } => target,
                Action::Cmd { module, .. } => module,
                _ => continue,
            };
            if let Some(rec) = self.registry.lookup(module).or_else(|| {
                self.registry.resolve(module).and_then(|id| self.registry.record(&id))
            }) {
                if rec.descriptor.kind == ModuleKind::Robot {
                    out.insert(rec.module_id.clone());
                }
            }
        }
        out.into_iter().collect()
    }

    /// Validates and starts a loaded sequence. Robots it drives are held
    /// until the run ends.
    pub fn start_run(&mut self, name: &str) -> CellResult<u64> {
        let ir = self.sequence(name)?.clone();
        let report = validate(&ir, self, &self.store);
        if !report.is_runnable() {
            return Err(CellError::ValidationFailed {
                name: name.to_string(),
                report,
            });
        }
        let robots = self.run_robots(&ir);
        for r in &robots {
            if let Some(run_id) = self.robot_locks.get(r) {
                return Err(CellError::RunConflict {
                    robot: r.0.clone(),
                    run_id: *run_id,
                });
            }
        }
        let run_id = self.next_run;
        self.next_run += 1;
        let skills: Vec<String> = ir.skill_refs().into_iter().map(str::to_string).collect();
        for s in &skills {
            self.store.pin(s);
        }
        for r in &robots {
            self.robot_locks.insert(r.clone(), run_id);
        }
        let first_seq = self.registry.emit(
            RUN_SOURCE,
            EventKind::RunStarted,
            json!({"run_id": run_id, "sequence": ir.name, "source_hash": ir.metadata.source_hash}),
        );
        let entry = ir.entry.clone();
        let run = Run::new(run_id, ir, self.now(), first_seq);
        self.runs.insert(
            run_id,
            ActiveRun {
                run,
                waiting: Waiting::Done(SUCCEEDED.into()),
                robots,
                skills,
            },
        );
        self.enter_state(run_id, &entry);
        self.advance_run(run_id);
        Ok(run_id)
    }

    pub fn run_report(&self, run_id: u64) -> CellResult<&RunReport> {
        self.runs
            .get(&run_id)
            .map(|r| &r.run.report)
            .ok_or(CellError::UnknownRun(run_id))
    }

    pub fn runs(&self) -> impl Iterator<Item = &RunReport> {
        self.runs.values().map(|r| &r.run.report)
    }

    pub fn run_finished(&self, run_id: u64) -> bool {
        self.runs.get(&run_id).is_none_or(|r| r.run.is_finished())
    }

    fn run_failure(&mut self, run_id: u64, state: &str, code: &str, detail: String) -> Waiting {
        self.registry.emit(
            RUN_SOURCE,
            EventKind::Warning,
            json!({"run_id": run_id, "state": state, "error": code, "detail": detail}),
        );
        Waiting::Done(FAILED.into())
    }

    fn dispatch_for_run(&mut self, run_id: u64, state: &str, module: &str, verb: &str, params: serde_json::Value) -> Waiting {
        let Some(id) = self.registry.resolve(module) else {
            return self.run_failure(run_id, state, "UnknownModule", format!("no module '{module}'"));
        };
        match self.registry.dispatch(&id, verb, params) {
            Ok(cmd) => {
                self.pump(&id);
                Waiting::Command(cmd)
            }
            Err(e) => self.run_failure(run_id, state, e.code(), e.to_string()),
        }
    }

    fn enter_state(&mut self, run_id: u64, state: &str) {
        let now = self.now();
        let active = self.runs.get_mut(&run_id).expect("run exists");
        active.run.enter(state, now);
        let sequence = active.run.ir.name.clone();
        let action = active.run.ir.state(state).expect("IR targets exist").action.clone();
        self.registry.emit(
            RUN_SOURCE,
            EventKind::StateEntered,
            json!({"run_id": run_id, "sequence": sequence, "state": state}),
        );
        let waiting = match action {
            Action::Skill { name, version, target } => match self.store.get(&name, version) {
                Ok(entry) => {
                    let bound = entry.version;
                    let payload = entry.payload.clone();
                    self.runs.get_mut(&run_id).expect("run exists").run.bind_version(bound);
                    match payload {
                        SkillPayload::Trajectory(_) => self.dispatch_for_run(
                            run_id,
                            state,
                            &target,
                            super::VERB_RUN_SKILL,
                            json!({"skill": name, "version": bound}),
                        ),
                        SkillPayload::Primitive(p) => self.dispatch_for_run(run_id, state, &target, &p.verb, p.params),
                    }
                }
                Err(e) => self.run_failure(run_id, state, e.code(), e.to_string()),
            },
            Action::Cmd { module, verb, params } => self.dispatch_for_run(run_id, state, &module, &verb, params),
            Action::Wait { seconds } => Waiting::Until(now + seconds),
            Action::Noop => Waiting::Done(SUCCEEDED.into()),
        };
        self.runs.get_mut(&run_id).expect("run exists").waiting = waiting;
    }

    /// Moves a run through every state whose outcome is already known.
    fn advance_run(&mut self, run_id: u64) {
        let now = self.now();
        let budget = self.runs.get(&run_id).map_or(0, |r| r.run.ir.states.len() + 1);
        for _ in 0..budget {
            let active = self.runs.get_mut(&run_id).expect("run exists");
            if active.run.is_finished() {
                return;
            }
            let outcome = match &active.waiting {
                Waiting::Command(cmd) => match self.registry.result(*cmd) {
                    Some(r) => r.outcome.clone(),
                    None => return,
                },
                Waiting::Until(t) if now + TIME_EPS >= *t => SUCCEEDED.to_string(),
                Waiting::Until(_) => return,
                Waiting::Done(o) => o.clone(),
            };
            match active.run.exit(&outcome, now) {
                Next::State(s) => self.enter_state(run_id, &s),
                Next::End(end) => {
                    self.finish_run(run_id, &end);
                    return;
                }
            }
        }
    }

    fn finish_run(&mut self, run_id: u64, end: &str) {
        let now = self.now();
        let active = self.runs.get_mut(&run_id).expect("run exists");
        active.run.finish(end, now);
        let sequence = active.run.ir.name.clone();
        let robots = std::mem::take(&mut active.robots);
        let skills = std::mem::take(&mut active.skills);
        let seq = self.registry.emit(
            RUN_SOURCE,
            EventKind::RunFinished,
            json!({"run_id": run_id, "sequence": sequence, "outcome": end}),
        );
        self.runs.get_mut(&run_id).expect("run exists").run.report.last_seq = seq;
        for r in robots {
            self.robot_locks.remove(&r);
        }
        for s in skills {
            self.store.unpin(&s);
        }
    }

    pub(super) fn advance_runs(&mut self) {
        let active: Vec<u64> = self
            .runs
            .iter()
            .filter(|(_, r)| !r.run.is_finished())
            .map(|(id, _)| *id)
            .collect();
        for id in active {
            self.advance_run(id);
        }
    }
}
