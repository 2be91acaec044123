//! Scenario files: everything needed to bring a cell up and, optionally,
//! to run a scripted headless session (teach by tape, then run a
//! sequence).

pub mod demo;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::assembler::{RunReport, ValidationReport};
use crate::cell::{Cell, CellConfig, CellError, ModuleSpec};
use crate::model::CellEvent;
use crate::skills::{SkillKind, SkillMeta, SkillPayload, SkillStore};
use crate::teach::Tape;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {detail}")]
    Load { path: String, detail: String },
    #[error("scenario: {0}")]
    Invalid(String),
    #[error("{step}: {source}")]
    Cell {
        step: String,
        #[source]
        source: CellError,
    },
    #[error("{step}: sequence ended with {outcome}")]
    RunFailed { step: String, outcome: String },
    #[error("{step}: did not finish within {seconds} s of sim time")]
    Timeout { step: String, seconds: f64 },
}

impl ScenarioError {
    pub fn code(&self) -> &'static str {
        match self {
            ScenarioError::Load { .. } | ScenarioError::Invalid(_) => "InvalidScenario",
            ScenarioError::Cell { source, .. } => source.code(),
            ScenarioError::RunFailed { .. } => "RunFailed",
            ScenarioError::Timeout { .. } => "Timeout",
        }
    }
}

fn at(step: impl Into<String>) -> impl FnOnce(CellError) -> ScenarioError {
    let step = step.into();
    move |source| ScenarioError::Cell { step, source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkillSeed {
    pub name: String,
    pub kind: SkillKind,
    pub payload: Value,
    #[serde(default)]
    pub meta: SkillMeta,
}

/// Sequence text, inline or from a file next to the scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceSeed {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub args: BTreeMap<String, String>,
}

/// One scripted demonstration: optionally run a sequence to get the robot
/// into position, play and record the tape, save it, then optionally run a
/// clean-up sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeachStep {
    pub robot: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub before: Option<String>,
    pub tape: Tape,
    #[serde(default = "default_rate")]
    pub rate: f64,
    pub save_as: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub after: Option<String>,
}

fn default_rate() -> f64 {
    50.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunStep {
    /// Compiled after teaching, right before validation.
    pub sequence: SequenceSeed,
    /// Sim-time budget for the run, s.
    #[serde(default = "default_budget")]
    pub max_seconds: f64,
}

fn default_budget() -> f64 {
    600.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default)]
    pub config: CellConfig,
    pub modules: Vec<ModuleSpec>,
    #[serde(default)]
    pub skills: Vec<SkillSeed>,
    /// Compiled at bring-up.
    #[serde(default)]
    pub sequences: Vec<SequenceSeed>,
    #[serde(default)]
    pub teach: Vec<TeachStep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<RunStep>,
}

/// A parsed scenario and the directory relative paths resolve against.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub base_dir: Option<PathBuf>,
}

impl Scenario {
    pub fn from_json(text: &str, base_dir: Option<PathBuf>) -> Result<Self, ScenarioError> {
        let file: ScenarioFile = serde_json::from_str(text).map_err(|e| ScenarioError::Load {
            path: "<scenario>".into(),
            detail: e.to_string(),
        })?;
        let s = Scenario { file, base_dir };
        s.check()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Load {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        Self::from_json(&text, path.parent().map(Path::to_path_buf)).map_err(|e| match e {
            ScenarioError::Load { detail, .. } => ScenarioError::Load {
                path: path.display().to_string(),
                detail,
            },
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.file).expect("scenarios serialize")
    }

    /// Static checks: unique module names and resolvable references.
    pub fn check(&self) -> Result<(), ScenarioError> {
        let f = &self.file;
        let mut names = std::collections::BTreeSet::new();
        for m in &f.modules {
            if !names.insert(m.name()) {
                return Err(ScenarioError::Invalid(format!("duplicate module '{}'", m.name())));
            }
        }
        for m in &f.modules {
            if let ModuleSpec::Fixture { on_table: Some(t), .. } = m {
                let ok = f
                    .modules
                    .iter()
                    .any(|x| matches!(x, ModuleSpec::RotaryTable { name, .. } if name == t));
                if !ok {
                    return Err(ScenarioError::Invalid(format!("fixture rides on unknown table '{t}'")));
                }
            }
        }
        for step in &f.teach {
            if !names.contains(step.robot.as_str()) {
                return Err(ScenarioError::Invalid(format!("teach step uses unknown robot '{}'", step.robot)));
            }
            step.tape
                .validate()
                .map_err(|e| ScenarioError::Invalid(format!("tape for '{}': {e}", step.save_as)))?;
        }
        for s in f.sequences.iter().chain(f.run.as_ref().map(|r| &r.sequence)) {
            if s.source.is_some() == s.file.is_some() {
                return Err(ScenarioError::Invalid("a sequence needs exactly one of source or file".into()));
            }
        }
        Ok(())
    }

    fn sequence_text(&self, seed: &SequenceSeed) -> Result<String, ScenarioError> {
        if let Some(src) = &seed.source {
            return Ok(src.clone());
        }
        let file = seed.file.as_ref().expect("checked");
        let path = match &self.base_dir {
            Some(dir) => dir.join(file),
            None => PathBuf::from(file),
        };
        std::fs::read_to_string(&path).map_err(|e| ScenarioError::Load {
            path: path.display().to_string(),
            detail: e.to_string(),
        })
    }

    /// Builds the cell: modules, preloaded skills and sequences.
    pub fn bring_up(&self, store: SkillStore) -> Result<Cell, ScenarioError> {
        let f = &self.file;
        let mut cell = Cell::new(f.config, store).map_err(at("config"))?;
        // tables before fixtures that ride on them
        let mut order: Vec<&ModuleSpec> = f.modules.iter().collect();
        order.sort_by_key(|m| matches!(m, ModuleSpec::Fixture { .. }));
        for m in order {
            cell.attach_module(m, self.base_dir.as_deref())
                .map_err(at(format!("module '{}'", m.name())))?;
        }
        for s in &f.skills {
            let payload = SkillPayload::from_value(s.kind, s.payload.clone())
                .map_err(|e| at(format!("skill '{}'", s.name))(e.into()))?;
            cell.put_skill(&s.name, payload, s.meta.clone())
                .map_err(at(format!("skill '{}'", s.name)))?;
        }
        for seed in &f.sequences {
            let text = self.sequence_text(seed)?;
            cell.compile_sequence(&text, &seed.args).map_err(at("compile"))?;
        }
        Ok(cell)
    }
}

/// Runs a loaded sequence to its end.
pub fn run_to_end(
    cell: &mut Cell,
    name: &str,
    max_seconds: f64,
    observe: &mut dyn FnMut(&Cell),
) -> Result<RunReport, ScenarioError> {
    let run = cell.start_run(name).map_err(at(format!("run '{name}'")))?;
    let mut ticks = (max_seconds / cell.config().dt).ceil() as u64;
    while !cell.run_finished(run) {
        if ticks == 0 {
            return Err(ScenarioError::Timeout {
                step: format!("run '{name}'"),
                seconds: max_seconds,
            });
        }
        ticks -= 1;
        cell.step();
        observe(cell);
    }
    Ok(cell.run_report(run).expect("run exists").clone())
}

fn expect_success(step: &str, report: RunReport) -> Result<RunReport, ScenarioError> {
    match report.final_outcome.as_deref() {
        Some(crate::assembler::END_SUCCESS) => Ok(report),
        other => Err(ScenarioError::RunFailed {
            step: step.to_string(),
            outcome: other.unwrap_or("nothing").to_string(),
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoReport {
    pub scenario: String,
    pub taught: Vec<(String, u32)>,
    pub validation: Option<ValidationReport>,
    pub run: Option<RunReport>,
    pub sim_time: f64,
    pub event_count: usize,
    /// SHA-256 of the JSON event log.
    pub event_digest: String,
}

impl DemoReport {
    pub fn succeeded(&self) -> bool {
        self.run
            .as_ref()
            .is_none_or(|r| r.final_outcome.as_deref() == Some(crate::assembler::END_SUCCESS))
    }
}

pub fn event_digest(events: &[CellEvent]) -> String {
    hex::encode(Sha256::digest(serde_json::to_vec(events).expect("events serialize")))
}

/// A brought-up cell after the scripted teaching, with the run sequence
/// compiled but not started.
pub struct Prepared {
    pub cell: Cell,
    pub taught: Vec<(String, u32)>,
    pub run_sequence: Option<String>,
}

/// Bring-up, scripted teaching and compilation of the run sequence.
pub fn prepare(scenario: &Scenario, store: SkillStore, observe: &mut dyn FnMut(&Cell)) -> Result<Prepared, ScenarioError> {
    let mut cell = scenario.bring_up(store)?;
    let mut taught = Vec::new();
    for step in &scenario.file.teach {
        if let Some(seq) = &step.before {
            expect_success(seq, run_to_end(&mut cell, seq, default_budget(), observe)?)?;
        }
        let label = format!("teach '{}'", step.save_as);
        let session = cell
            .play_tape(&step.robot, step.tape.clone(), Some(step.rate))
            .map_err(at(label.clone()))?
            .expect("recording was requested");
        let budget = step.tape.duration() + 1.0;
        let mut ticks = (budget / cell.config().dt).ceil() as u64;
        while cell.tape_active(&step.robot) {
            if ticks == 0 {
                return Err(ScenarioError::Timeout { step: label, seconds: budget });
            }
            ticks -= 1;
            cell.step();
            observe(&cell);
        }
        let version = cell.teach_save(session, &step.save_as).map_err(at(label))?;
        taught.push((step.save_as.clone(), version));
        if let Some(seq) = &step.after {
            expect_success(seq, run_to_end(&mut cell, seq, default_budget(), observe)?)?;
        }
    }
    let run_sequence = match &scenario.file.run {
        None => None,
        Some(r) => {
            let text = scenario.sequence_text(&r.sequence)?;
            Some(
                cell.compile_sequence(&text, &r.sequence.args)
                    .map_err(at("compile"))?
                    .name
                    .clone(),
            )
        }
    };
    Ok(Prepared { cell, taught, run_sequence })
}

/// Headless session: bring-up, scripted teaching, compile, validate, run.
/// `observe` sees the cell after every tick.
pub fn run_headless(
    scenario: &Scenario,
    store: SkillStore,
    observe: &mut dyn FnMut(&Cell),
) -> Result<(Cell, DemoReport), ScenarioError> {
    let Prepared { mut cell, taught, run_sequence } = prepare(scenario, store, observe)?;
    let (validation, run) = match (&scenario.file.run, run_sequence) {
        (Some(r), Some(name)) => {
            let validation = cell.validate_sequence(&name).map_err(at("validate"))?;
            let report = run_to_end(&mut cell, &name, r.max_seconds, observe)?;
            (Some(validation), Some(report))
        }
        _ => (None, None),
    };
    let report = DemoReport {
        scenario: scenario.file.name.clone(),
        taught,
        validation,
        run,
        sim_time: cell.now(),
        event_count: cell.events().len(),
        event_digest: event_digest(cell.events()),
    };
    Ok((cell, report))
}
