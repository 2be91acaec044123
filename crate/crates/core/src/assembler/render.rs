use std::fmt::Write;

use serde_json::Value;

use super::ast::{END_FAILURE, END_SUCCESS};
use super::ir::{Action, SequenceIr};
use super::AssemblyError;

pub const TEMPLATES: [&str; 2] = ["listing", "dot"];

pub fn render(ir: &SequenceIr, template: &str) -> Result<String, AssemblyError> {
    match template {
        "listing" => Ok(listing(ir)),
        "dot" => Ok(dot(ir)),
        other => Err(AssemblyError::UnknownTemplate(other.to_string())),
    }
}

fn action_text(a: &Action) -> String {
    match a {
        Action::Skill { name, version, target } => {
            let name = serde_json::to_string(name).expect("strings serialize");
            match version {
                Some(v) => format!("skill {name} @{v} on {target}"),
                None => format!("skill {name} on {target}"),
            }
        }
        Action::Cmd { module, verb, params } => {
            let empty = params.is_null() || params.as_object().is_some_and(|m| m.is_empty());
            if empty {
                format!("cmd {module}.{verb}")
            } else {
                format!("cmd {module}.{verb} {}", serde_json::to_string(params).expect("values serialize"))
            }
        }
        Action::Wait { seconds } => format!("wait {seconds:?}"),
        Action::Noop => "noop".into(),
    }
}

fn target_text(t: &str) -> &str {
    match t {
        END_SUCCESS => "end_success",
        END_FAILURE => "end_failure",
        other => other,
    }
}

/// Sequence source with every transition spelled out; parses back to the
/// same state machine.
fn listing(ir: &SequenceIr) -> String {
    let mut out = String::new();
    writeln!(out, "# {} states, source sha256 {}", ir.states.len(), ir.metadata.source_hash).unwrap();
    writeln!(out, "sequence {} {{", ir.name).unwrap();
    // the entry must come first for the listing to recompile identically
    let mut order: Vec<_> = ir.states.iter().filter(|s| s.id == ir.entry).collect();
    order.extend(ir.states.iter().filter(|s| s.id != ir.entry));
    for s in order {
        write!(out, "  state {}: {}", s.id, action_text(&s.action)).unwrap();
        for (label, target) in &s.transitions {
            write!(out, "\n    on {label} -> {}", target_text(target)).unwrap();
        }
        out.push_str(";\n");
    }
    out.push_str("}\n");
    out
}

fn quote(s: &str) -> String {
    Value::String(s.to_string()).to_string()
}

fn dot(ir: &SequenceIr) -> String {
    let mut out = String::new();
    writeln!(out, "digraph {} {{", quote(&ir.name)).unwrap();
    writeln!(out, "  rankdir=LR;").unwrap();
    writeln!(out, "  {} [shape=doublecircle];", quote(END_SUCCESS)).unwrap();
    writeln!(out, "  {} [shape=doublecircle];", quote(END_FAILURE)).unwrap();
    for s in &ir.states {
        let shape = if s.id == ir.entry { "box, style=bold" } else { "box" };
        let label = format!("{}\n{}", s.id, action_text(&s.action));
        writeln!(out, "  {} [shape={shape}, label={}];", quote(&s.id), quote(&label)).unwrap();
    }
    for s in &ir.states {
        for (label, target) in &s.transitions {
            writeln!(out, "  {} -> {} [label={}];", quote(&s.id), quote(target), quote(label)).unwrap();
        }
    }
    out.push_str("}\n");
    out
}
