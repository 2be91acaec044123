use std::collections::{BTreeMap, BTreeSet};

use serde_json::Value;

use super::ast::*;
use super::AssemblyError;

pub type Args = BTreeMap<String, Literal>;

/// Upper bound on states produced by loop unrolling.
const MAX_STATES: usize = 10_000;

/// Converts `k=v` style strings into typed arguments for `ast`'s params.
pub fn coerce_args(ast: &SequenceAst, raw: &BTreeMap<String, String>) -> Result<Args, AssemblyError> {
    let mut out = Args::new();
    for (k, v) in raw {
        let decl = ast
            .params
            .iter()
            .find(|p| &p.name == k)
            .ok_or_else(|| AssemblyError::BadArgument(format!("unknown parameter '{k}'")))?;
        let lit = match decl.ty {
            ParamType::Int => Literal::Int(
                v.parse()
                    .map_err(|_| AssemblyError::BadArgument(format!("'{k}' expects an int, got '{v}'")))?,
            ),
            ParamType::Float => Literal::Float(
                v.parse()
                    .ok()
                    .filter(|f: &f64| f.is_finite())
                    .ok_or_else(|| AssemblyError::BadArgument(format!("'{k}' expects a float, got '{v}'")))?,
            ),
            ParamType::String => Literal::Str(v.clone()),
        };
        out.insert(k.clone(), lit);
    }
    Ok(out)
}

fn bind(ast: &SequenceAst, args: &Args) -> Result<Args, AssemblyError> {
    if let Some(k) = args.keys().find(|k| !ast.params.iter().any(|p| &p.name == *k)) {
        return Err(AssemblyError::BadArgument(format!("unknown parameter '{k}'")));
    }
    let mut env = Args::new();
    for p in &ast.params {
        let v = args
            .get(&p.name)
            .or(p.default.as_ref())
            .ok_or_else(|| AssemblyError::UnboundParam(p.name.clone()))?;
        let v = match (p.ty, v) {
            (ParamType::Int, Literal::Int(_)) | (ParamType::Float, Literal::Float(_)) | (ParamType::String, Literal::Str(_)) => {
                v.clone()
            }
            (ParamType::Float, Literal::Int(i)) => Literal::Float(*i as f64),
            _ => {
                return Err(AssemblyError::BadArgument(format!(
                    "'{}' expects {:?}",
                    p.name,
                    p.ty
                )))
            }
        };
        env.insert(p.name.clone(), v);
    }
    Ok(env)
}

/// Replaces every `$name` in `s` (name = longest run of `[A-Za-z0-9_]`).
pub fn interpolate(s: &str, env: &Args) -> Result<String, AssemblyError> {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(i) = rest.find('$') {
        out.push_str(&rest[..i]);
        let tail = &rest[i + 1..];
        let n = tail
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(tail.len());
        let name = &tail[..n];
        if name.is_empty() {
            return Err(AssemblyError::UnboundParam("$".into()));
        }
        out.push_str(&env.get(name).ok_or_else(|| AssemblyError::UnboundParam(name.to_string()))?.splice());
        rest = &tail[n..];
    }
    out.push_str(rest);
    Ok(out)
}

fn ident(s: &str, env: &Args) -> Result<String, AssemblyError> {
    let v = interpolate(s, env)?;
    let ok = v.starts_with(|c: char| c.is_ascii_alphabetic() || c == '_')
        && v.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
    if !ok || KEYWORDS.contains(&v.as_str()) {
        return Err(AssemblyError::BadArgument(format!("'{s}' expands to invalid identifier '{v}'")));
    }
    Ok(v)
}

fn target(s: &str, env: &Args) -> Result<String, AssemblyError> {
    if s == END_SUCCESS || s == END_FAILURE {
        Ok(s.to_string())
    } else {
        ident(s, env)
    }
}

fn doc(v: &DocValue, env: &Args) -> Result<DocValue, AssemblyError> {
    Ok(match v {
        DocValue::Var(name) => {
            let lit = env.get(name).ok_or_else(|| AssemblyError::UnboundParam(name.clone()))?;
            match lit.to_json() {
                Value::Number(n) => DocValue::Number(n),
                Value::String(s) => DocValue::Str(s),
                _ => DocValue::Null,
            }
        }
        DocValue::Str(s) => DocValue::Str(interpolate(s, env)?),
        DocValue::Array(a) => DocValue::Array(a.iter().map(|x| doc(x, env)).collect::<Result<_, _>>()?),
        DocValue::Object(f) => DocValue::Object(
            f.iter()
                .map(|(k, x)| Ok((k.clone(), doc(x, env)?)))
                .collect::<Result<_, AssemblyError>>()?,
        ),
        other => other.clone(),
    })
}

fn term_int(t: &Term<i64>, env: &Args) -> Result<i64, AssemblyError> {
    match t {
        Term::Lit(i) => Ok(*i),
        Term::Var(v) => match env.get(v) {
            Some(Literal::Int(i)) => Ok(*i),
            Some(_) => Err(AssemblyError::BadArgument(format!("loop bound '${v}' is not an int"))),
            None => Err(AssemblyError::UnboundParam(v.clone())),
        },
    }
}

fn state(s: &StateDecl, env: &Args) -> Result<StateDecl, AssemblyError> {
    let action = match &s.action {
        ActionAst::Skill { name, version, target } => ActionAst::Skill {
            name: interpolate(name, env)?,
            version: *version,
            target: ident(target, env)?,
        },
        ActionAst::Cmd { module, verb, params } => ActionAst::Cmd {
            module: ident(module, env)?,
            verb: ident(verb, env)?,
            params: params.as_ref().map(|p| doc(p, env)).transpose()?,
        },
        ActionAst::Wait { seconds } => {
            let secs = match seconds {
                Term::Lit(f) => *f,
                Term::Var(v) => match env.get(v) {
                    Some(Literal::Float(f)) => *f,
                    Some(Literal::Int(i)) => *i as f64,
                    Some(Literal::Str(_)) => {
                        return Err(AssemblyError::BadArgument(format!("wait '${v}' is not a number")))
                    }
                    None => return Err(AssemblyError::UnboundParam(v.clone())),
                },
            };
            if !(secs >= 0.0) || !secs.is_finite() {
                return Err(AssemblyError::BadArgument(format!("wait of {secs} s")));
            }
            ActionAst::Wait { seconds: Term::Lit(secs) }
        }
        ActionAst::Noop => ActionAst::Noop,
    };
    let transitions = s
        .transitions
        .iter()
        .map(|t| {
            Ok(Transition {
                outcome: ident(&t.outcome, env)?,
                target: target(&t.target, env)?,
            })
        })
        .collect::<Result<_, AssemblyError>>()?;
    Ok(StateDecl {
        id: ident(&s.id, env)?,
        action,
        transitions,
        pos: s.pos,
    })
}

fn unroll(items: &[Item], env: &mut Args, out: &mut Vec<Item>) -> Result<(), AssemblyError> {
    for item in items {
        match item {
            Item::State(s) => {
                out.push(Item::State(state(s, env)?));
                if out.len() > MAX_STATES {
                    return Err(AssemblyError::BadArgument(format!("expansion exceeds {MAX_STATES} states")));
                }
            }
            Item::For(f) => {
                let (a, b) = (term_int(&f.start, env)?, term_int(&f.end, env)?);
                let saved = env.get(&f.var).cloned();
                for i in a..=b {
                    env.insert(f.var.clone(), Literal::Int(i));
                    unroll(&f.body, env, out)?;
                }
                match saved {
                    Some(v) => env.insert(f.var.clone(), v),
                    None => env.remove(&f.var),
                };
            }
        }
    }
    Ok(())
}

/// Unrolls loops and substitutes parameters. The result has no loops, no
/// parameters and no `$` references.
pub fn expand(ast: &SequenceAst, args: &Args) -> Result<SequenceAst, AssemblyError> {
    let mut env = bind(ast, args)?;
    let mut items = Vec::new();
    unroll(&ast.items, &mut env, &mut items)?;
    let mut seen = BTreeSet::new();
    for s in items.iter().filter_map(|i| match i {
        Item::State(s) => Some(s),
        Item::For(_) => None,
    }) {
        if !seen.insert(s.id.as_str()) {
            return Err(AssemblyError::IdCollisionAfterExpansion(s.id.clone()));
        }
    }
    Ok(SequenceAst {
        name: ast.name.clone(),
        params: Vec::new(),
        items,
    })
}
