use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::ast::*;
use super::AssemblyError;
use crate::registry::{FAILED, SUCCEEDED};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Action {
    /// Run a stored skill; `version: None` binds to the latest version
    /// when the state is entered.
    Skill {
        name: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        version: Option<u32>,
        target: String,
    },
    Cmd {
        module: String,
        verb: String,
        #[serde(default)]
        params: Value,
    },
    Wait {
        seconds: f64,
    },
    Noop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IrState {
    pub id: String,
    pub action: Action,
    /// Outcome label to state id, `END_SUCCESS` or `END_FAILURE`.
    pub transitions: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IrMeta {
    pub source_hash: String,
    #[serde(default)]
    pub compile_time: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceIr {
    pub name: String,
    pub entry: String,
    pub states: Vec<IrState>,
    pub metadata: IrMeta,
}

/// SHA-256 over the canonical JSON of an expanded AST.
pub fn source_hash(expanded: &SequenceAst) -> String {
    let bytes = serde_json::to_vec(expanded).expect("ASTs serialize");
    hex::encode(Sha256::digest(&bytes))
}

fn doc_to_json(v: &DocValue) -> Result<Value, AssemblyError> {
    Ok(match v {
        DocValue::Null => Value::Null,
        DocValue::Bool(b) => Value::Bool(*b),
        DocValue::Number(n) => Value::Number(n.clone()),
        DocValue::Str(s) if s.contains('$') => return Err(AssemblyError::UnboundParam(s.clone())),
        DocValue::Str(s) => Value::String(s.clone()),
        DocValue::Var(name) => return Err(AssemblyError::UnboundParam(name.clone())),
        DocValue::Array(a) => Value::Array(a.iter().map(doc_to_json).collect::<Result<_, _>>()?),
        DocValue::Object(f) => Value::Object(
            f.iter()
                .map(|(k, x)| Ok((k.clone(), doc_to_json(x)?)))
                .collect::<Result<_, AssemblyError>>()?,
        ),
    })
}

fn no_vars(s: &str) -> Result<(), AssemblyError> {
    match s.find('$') {
        Some(i) => Err(AssemblyError::UnboundParam(s[i + 1..].to_string())),
        None => Ok(()),
    }
}

/// Builds the state machine for a loop-free, fully substituted AST.
pub fn compile(ast: &SequenceAst) -> Result<SequenceIr, AssemblyError> {
    if !ast.is_loop_free() {
        return Err(AssemblyError::NotLoopFree);
    }
    if let Some(p) = ast.params.first() {
        return Err(AssemblyError::UnboundParam(p.name.clone()));
    }
    let decls: Vec<&StateDecl> = ast.states().collect();
    if decls.is_empty() {
        return Err(AssemblyError::InvalidIr("sequence has no states".into()));
    }
    let mut states = Vec::with_capacity(decls.len());
    for (k, d) in decls.iter().enumerate() {
        no_vars(&d.id)?;
        let action = match &d.action {
            ActionAst::Skill { name, version, target } => {
                no_vars(name)?;
                no_vars(target)?;
                Action::Skill {
                    name: name.clone(),
                    version: *version,
                    target: target.clone(),
                }
            }
            ActionAst::Cmd { module, verb, params } => {
                no_vars(module)?;
                no_vars(verb)?;
                Action::Cmd {
                    module: module.clone(),
                    verb: verb.clone(),
                    params: match params {
                        Some(p) => doc_to_json(p)?,
                        None => Value::Object(Default::default()),
                    },
                }
            }
            ActionAst::Wait { seconds: Term::Lit(s) } => Action::Wait { seconds: *s },
            ActionAst::Wait { seconds: Term::Var(v) } => return Err(AssemblyError::UnboundParam(v.clone())),
            ActionAst::Noop => Action::Noop,
        };
        let mut transitions = BTreeMap::new();
        for t in &d.transitions {
            no_vars(&t.target)?;
            if transitions.insert(t.outcome.clone(), t.target.clone()).is_some() {
                return Err(AssemblyError::DuplicateTransition {
                    state: d.id.clone(),
                    outcome: t.outcome.clone(),
                });
            }
        }
        let next = decls.get(k + 1).map_or(END_SUCCESS.to_string(), |n| n.id.clone());
        transitions.entry(SUCCEEDED.to_string()).or_insert(next);
        transitions.entry(FAILED.to_string()).or_insert_with(|| END_FAILURE.to_string());
        states.push(IrState {
            id: d.id.clone(),
            action,
            transitions,
        });
    }
    let ir = SequenceIr {
        name: ast.name.clone(),
        entry: states[0].id.clone(),
        states,
        metadata: IrMeta {
            source_hash: source_hash(ast),
            compile_time: chrono::Utc::now().to_rfc3339(),
        },
    };
    ir.check()?;
    Ok(ir)
}

impl SequenceIr {
    pub fn state(&self, id: &str) -> Option<&IrState> {
        self.states.iter().find(|s| s.id == id)
    }

    /// Structural invariants: unique ids, known targets, SUCCEEDED and
    /// FAILED covered everywhere, every state reachable from the entry.
    pub fn check(&self) -> Result<(), AssemblyError> {
        let mut ids = BTreeSet::new();
        for s in &self.states {
            if s.id == END_SUCCESS || s.id == END_FAILURE || !ids.insert(s.id.as_str()) {
                return Err(AssemblyError::InvalidIr(format!("duplicate or reserved state id '{}'", s.id)));
            }
        }
        if !ids.contains(self.entry.as_str()) {
            return Err(AssemblyError::UnknownTransitionTarget {
                state: "<entry>".into(),
                target: self.entry.clone(),
            });
        }
        for s in &self.states {
            for label in [SUCCEEDED, FAILED] {
                if !s.transitions.contains_key(label) {
                    return Err(AssemblyError::MissingOutcomeCoverage {
                        state: s.id.clone(),
                        outcome: label.to_string(),
                    });
                }
            }
            for target in s.transitions.values() {
                if target != END_SUCCESS && target != END_FAILURE && !ids.contains(target.as_str()) {
                    return Err(AssemblyError::UnknownTransitionTarget {
                        state: s.id.clone(),
                        target: target.clone(),
                    });
                }
            }
            if let Action::Wait { seconds } = s.action {
                if !(seconds >= 0.0) || !seconds.is_finite() {
                    return Err(AssemblyError::InvalidIr(format!("state '{}' waits {seconds} s", s.id)));
                }
            }
        }
        let reached = self.reachable();
        if let Some(s) = self.states.iter().find(|s| !reached.contains(s.id.as_str())) {
            return Err(AssemblyError::UnreachableState(s.id.clone()));
        }
        Ok(())
    }

    pub fn reachable(&self) -> BTreeSet<&str> {
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::from([self.entry.as_str()]);
        while let Some(id) = queue.pop_front() {
            if !seen.insert(id) {
                continue;
            }
            if let Some(s) = self.state(id) {
                queue.extend(s.transitions.values().map(String::as_str).filter(|t| !seen.contains(t)));
            }
        }
        seen.remove(END_SUCCESS);
        seen.remove(END_FAILURE);
        seen
    }

    /// Equality ignoring metadata.
    pub fn same_structure(&self, other: &SequenceIr) -> bool {
        self.name == other.name && self.entry == other.entry && self.states == other.states
    }

    /// Skill names referenced by any state.
    pub fn skill_refs(&self) -> BTreeSet<&str> {
        self.states
            .iter()
            .filter_map(|s| match &s.action {
                Action::Skill { name, .. } => Some(name.as_str()),
                _ => None,
            })
            .collect()
    }

    pub fn from_json(text: &str) -> Result<Self, AssemblyError> {
        let ir: SequenceIr = serde_json::from_str(text).map_err(|e| AssemblyError::InvalidIr(e.to_string()))?;
        ir.check()?;
        Ok(ir)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembler::{expand, parse, Args};

    fn build(src: &str) -> Result<SequenceIr, AssemblyError> {
        compile(&expand(&parse(src)?, &Args::new())?)
    }

    #[test]
    fn default_wiring() {
        let ir = build("sequence s { state a: noop; state b: noop; state c: noop; }").unwrap();
        assert_eq!(ir.entry, "a");
        let succ: Vec<&str> = ir.states.iter().map(|s| s.transitions[SUCCEEDED].as_str()).collect();
        assert_eq!(succ, ["b", "c", END_SUCCESS]);
        assert!(ir.states.iter().all(|s| s.transitions[FAILED] == END_FAILURE));
    }

    #[test]
    fn explicit_transitions() {
        let ir = build("sequence s { state retry_a: noop; state a: noop on FAILED -> retry_a; }").unwrap();
        assert_eq!(ir.state("a").unwrap().transitions[FAILED], "retry_a");
        assert_eq!(
            build("sequence s { state a: noop on FAILED -> ghost; }"),
            Err(AssemblyError::UnknownTransitionTarget {
                state: "a".into(),
                target: "ghost".into()
            })
        );
        assert_eq!(
            build("sequence s { state a: noop on SUCCEEDED -> end_success; state b: noop; }"),
            Err(AssemblyError::UnreachableState("b".into()))
        );
        assert!(matches!(
            build("sequence s { state a: noop on FAILED -> a on FAILED -> a; }"),
            Err(AssemblyError::DuplicateTransition { .. })
        ));
    }

    #[test]
    fn loaded_ir_needs_coverage() {
        let mut ir = build("sequence s { state a: wait 1; }").unwrap();
        ir.states[0].transitions.remove(FAILED);
        let text = serde_json::to_string(&ir).unwrap();
        assert!(matches!(
            SequenceIr::from_json(&text),
            Err(AssemblyError::MissingOutcomeCoverage { .. })
        ));
    }

    #[test]
    fn hash_tracks_expanded_content() {
        let a = build("sequence s { for i in 1..2 { state a_$i: noop; } }").unwrap();
        let b = build("sequence s { state a_1: noop; state a_2: noop; }").unwrap();
        let c = build("sequence s { state a_1: noop; state a_3: noop; }").unwrap();
        assert_eq!(a.metadata.source_hash, b.metadata.source_hash);
        assert_ne!(a.metadata.source_hash, c.metadata.source_hash);
        assert_eq!(a.metadata.source_hash.len(), 64);
    }

    #[test]
    fn compile_rejects_loops() {
        let ast = parse("sequence s { for i in 1..2 { state a_$i: noop; } }").unwrap();
        assert_eq!(compile(&ast), Err(AssemblyError::NotLoopFree));
    }
}
