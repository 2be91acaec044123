use std::collections::BTreeMap;

use super::ast::*;
use super::lexer::{lex, Tok, Token};
use super::AssemblyError;

pub fn parse(src: &str) -> Result<SequenceAst, AssemblyError> {
    let mut p = Parser { toks: lex(src)?, i: 0 };
    let ast = p.sequence()?;
    check_duplicates(&ast.items, &mut BTreeMap::new())?;
    Ok(ast)
}

fn check_duplicates(items: &[Item], seen: &mut BTreeMap<String, Pos>) -> Result<(), AssemblyError> {
    for item in items {
        match item {
            Item::State(s) if !s.id.contains('$') => {
                if seen.insert(s.id.clone(), s.pos.unwrap_or(Pos { line: 0, col: 0 })).is_some() {
                    return Err(AssemblyError::DuplicateStateId {
                        id: s.id.clone(),
                        pos: s.pos,
                    });
                }
            }
            Item::State(_) => {}
            Item::For(f) => check_duplicates(&f.body, seen)?,
        }
    }
    Ok(())
}

struct Parser {
    toks: Vec<Token>,
    i: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.i]
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.i].clone();
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        t
    }

    fn fail<T>(&self, expected: &[&str]) -> Result<T, AssemblyError> {
        let t = self.peek();
        Err(AssemblyError::SyntaxError {
            pos: t.pos,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: t.tok.describe(),
        })
    }

    fn at_punct(&self, p: &str) -> bool {
        matches!(&self.peek().tok, Tok::Punct(q) if *q == p)
    }

    fn at_kw(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s == kw)
    }

    fn punct(&mut self, p: &str) -> Result<(), AssemblyError> {
        if self.at_punct(p) {
            self.bump();
            Ok(())
        } else {
            self.fail(&[&format!("'{p}'")])
        }
    }

    fn kw(&mut self, kw: &str) -> Result<(), AssemblyError> {
        if self.at_kw(kw) {
            self.bump();
            Ok(())
        } else {
            self.fail(&[&format!("'{kw}'")])
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, AssemblyError> {
        match &self.peek().tok {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                let s = s.clone();
                self.bump();
                Ok(s)
            }
            _ => self.fail(&[what]),
        }
    }

    /// An identifier that may not contain `$` references.
    fn plain_ident(&mut self, what: &str) -> Result<String, AssemblyError> {
        if matches!(&self.peek().tok, Tok::Ident(s) if s.contains('$')) {
            return self.fail(&[what]);
        }
        self.ident(what)
    }

    fn sequence(&mut self) -> Result<SequenceAst, AssemblyError> {
        self.kw("sequence")?;
        let name = self.plain_ident("sequence name")?;
        let params = if self.at_punct("(") { self.params()? } else { Vec::new() };
        self.punct("{")?;
        let items = self.items()?;
        self.punct("}")?;
        if self.peek().tok != Tok::Eof {
            return self.fail(&["end of input"]);
        }
        Ok(SequenceAst { name, params, items })
    }

    fn params(&mut self) -> Result<Vec<ParamDecl>, AssemblyError> {
        self.punct("(")?;
        let mut out: Vec<ParamDecl> = Vec::new();
        while !self.at_punct(")") {
            let pos = self.peek().pos;
            let name = self.plain_ident("parameter name or ')'")?;
            self.punct(":")?;
            let ty = match &self.peek().tok {
                Tok::Ident(t) if t == "int" => ParamType::Int,
                Tok::Ident(t) if t == "float" => ParamType::Float,
                Tok::Ident(t) if t == "string" => ParamType::String,
                _ => return self.fail(&["int", "float", "string"]),
            };
            self.bump();
            let default = if self.at_punct("=") {
                self.bump();
                let lit_pos = self.peek().pos;
                let lit = match (ty, self.bump().tok) {
                    (ParamType::Int, Tok::Int(i)) => Literal::Int(i),
                    (ParamType::Float, Tok::Int(i)) => Literal::Float(i as f64),
                    (ParamType::Float, Tok::Float(f)) => Literal::Float(f),
                    (ParamType::String, Tok::Str(s)) => Literal::Str(s),
                    (_, found) => {
                        return Err(AssemblyError::SyntaxError {
                            pos: lit_pos,
                            expected: vec![format!("{ty:?} literal").to_lowercase()],
                            found: found.describe(),
                        })
                    }
                };
                Some(lit)
            } else {
                None
            };
            if out.iter().any(|p| p.name == name) {
                return Err(AssemblyError::SyntaxError {
                    pos,
                    expected: vec!["unique parameter name".into()],
                    found: format!("identifier '{name}'"),
                });
            }
            out.push(ParamDecl { name, ty, default });
            if self.at_punct(",") {
                self.bump();
            }
        }
        self.bump();
        Ok(out)
    }

    fn items(&mut self) -> Result<Vec<Item>, AssemblyError> {
        let mut items = Vec::new();
        loop {
            if self.at_kw("state") {
                items.push(Item::State(self.state()?));
            } else if self.at_kw("for") {
                items.push(Item::For(self.for_loop()?));
            } else if self.at_punct("}") {
                return Ok(items);
            } else {
                return self.fail(&["'state'", "'for'", "'}'"]);
            }
        }
    }

    fn bound(&mut self) -> Result<Term<i64>, AssemblyError> {
        match self.peek().tok.clone() {
            Tok::Int(i) => {
                self.bump();
                Ok(Term::Lit(i))
            }
            Tok::Ident(s) if is_var(&s) => {
                self.bump();
                Ok(Term::Var(s[1..].to_string()))
            }
            _ => self.fail(&["integer", "$variable"]),
        }
    }

    fn for_loop(&mut self) -> Result<ForLoop, AssemblyError> {
        let pos = self.peek().pos;
        self.kw("for")?;
        let var = self.plain_ident("loop variable")?;
        self.kw("in")?;
        let start = self.bound()?;
        self.punct("..")?;
        let end = self.bound()?;
        self.punct("{")?;
        let body = self.items()?;
        self.punct("}")?;
        Ok(ForLoop {
            var,
            start,
            end,
            body,
            pos: Some(pos),
        })
    }

    fn state(&mut self) -> Result<StateDecl, AssemblyError> {
        self.kw("state")?;
        let pos = self.peek().pos;
        let id = self.ident("state id")?;
        if is_end(&id).is_some() {
            return Err(AssemblyError::SyntaxError {
                pos,
                expected: vec!["state id".into()],
                found: format!("reserved name '{id}'"),
            });
        }
        self.punct(":")?;
        let action = self.action()?;
        let mut transitions = Vec::new();
        while self.at_kw("on") {
            self.bump();
            let outcome = self.ident("outcome label")?;
            self.punct("->")?;
            let target = self.ident("target state, end_success or end_failure")?;
            let target = is_end(&target).map(str::to_string).unwrap_or(target);
            transitions.push(Transition { outcome, target });
        }
        if !self.at_punct(";") {
            return self.fail(&["';'", "'on'"]);
        }
        self.bump();
        Ok(StateDecl {
            id,
            action,
            transitions,
            pos: Some(pos),
        })
    }

    fn action(&mut self) -> Result<ActionAst, AssemblyError> {
        if self.at_kw("skill") {
            self.bump();
            let Tok::Str(name) = self.peek().tok.clone() else {
                return self.fail(&["skill name string"]);
            };
            self.bump();
            let version = if self.at_punct("@") {
                self.bump();
                match self.peek().tok {
                    Tok::Int(v) if v >= 1 && v <= u32::MAX as i64 => {
                        self.bump();
                        Some(v as u32)
                    }
                    _ => return self.fail(&["version number >= 1"]),
                }
            } else {
                None
            };
            self.kw("on")?;
            let target = self.ident("robot or module")?;
            Ok(ActionAst::Skill { name, version, target })
        } else if self.at_kw("cmd") {
            self.bump();
            let module = self.ident("module")?;
            self.punct(".")?;
            let verb = self.ident("verb")?;
            let params = if self.at_punct("{") { Some(self.doc()?) } else { None };
            Ok(ActionAst::Cmd { module, verb, params })
        } else if self.at_kw("wait") {
            self.bump();
            let seconds = match self.peek().tok.clone() {
                Tok::Float(f) => Term::Lit(f),
                Tok::Int(i) => Term::Lit(i as f64),
                Tok::Ident(s) if is_var(&s) => Term::Var(s[1..].to_string()),
                _ => return self.fail(&["duration in seconds"]),
            };
            if matches!(seconds, Term::Lit(f) if f < 0.0) {
                return self.fail(&["non-negative duration"]);
            }
            self.bump();
            Ok(ActionAst::Wait { seconds })
        } else if self.at_kw("noop") {
            self.bump();
            Ok(ActionAst::Noop)
        } else {
            self.fail(&["'skill'", "'cmd'", "'wait'", "'noop'"])
        }
    }

    fn doc(&mut self) -> Result<DocValue, AssemblyError> {
        let t = self.peek().tok.clone();
        match t {
            Tok::Punct("{") => {
                self.bump();
                let mut fields: Vec<(String, DocValue)> = Vec::new();
                while !self.at_punct("}") {
                    let pos = self.peek().pos;
                    let Tok::Str(key) = self.peek().tok.clone() else {
                        return self.fail(&["field name string", "'}'"]);
                    };
                    self.bump();
                    if fields.iter().any(|(k, _)| *k == key) {
                        return Err(AssemblyError::SyntaxError {
                            pos,
                            expected: vec!["unique field name".into()],
                            found: format!("string {key:?}"),
                        });
                    }
                    self.punct(":")?;
                    fields.push((key, self.doc()?));
                    if self.at_punct(",") {
                        self.bump();
                    } else if !self.at_punct("}") {
                        return self.fail(&["','", "'}'"]);
                    }
                }
                self.bump();
                Ok(DocValue::Object(fields))
            }
            Tok::Punct("[") => {
                self.bump();
                let mut items = Vec::new();
                while !self.at_punct("]") {
                    items.push(self.doc()?);
                    if self.at_punct(",") {
                        self.bump();
                    } else if !self.at_punct("]") {
                        return self.fail(&["','", "']'"]);
                    }
                }
                self.bump();
                Ok(DocValue::Array(items))
            }
            Tok::Str(s) => {
                self.bump();
                Ok(DocValue::Str(s))
            }
            Tok::Int(i) => {
                self.bump();
                Ok(DocValue::Number(i.into()))
            }
            Tok::Float(f) => match serde_json::Number::from_f64(f) {
                Some(n) => {
                    self.bump();
                    Ok(DocValue::Number(n))
                }
                None => self.fail(&["finite number"]),
            },
            Tok::Ident(s) => {
                let v = match s.as_str() {
                    "true" => DocValue::Bool(true),
                    "false" => DocValue::Bool(false),
                    "null" => DocValue::Null,
                    _ if is_var(&s) => DocValue::Var(s[1..].to_string()),
                    _ => return self.fail(&["value"]),
                };
                self.bump();
                Ok(v)
            }
            _ => self.fail(&["value"]),
        }
    }
}

/// `$name` with nothing else around it.
fn is_var(s: &str) -> bool {
    s.len() > 1 && s.starts_with('$') && !s[1..].contains('$') && !s[1..].starts_with(|c: char| c.is_ascii_digit())
}

fn is_end(s: &str) -> Option<&'static str> {
    if s.eq_ignore_ascii_case(END_SUCCESS) {
        Some(END_SUCCESS)
    } else if s.eq_ignore_ascii_case(END_FAILURE) {
        Some(END_FAILURE)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal() {
        let ast = parse("sequence s { state a: wait 0.1; }").unwrap();
        assert_eq!(ast.name, "s");
        assert_eq!(ast.items.len(), 1);
        let Item::State(st) = &ast.items[0] else { panic!() };
        assert_eq!(st.action, ActionAst::Wait { seconds: Term::Lit(0.1) });
        assert!(st.transitions.is_empty());
    }

    #[test]
    fn loop_node() {
        let ast = parse(r#"sequence s { for i in 1..3 { state screw_$i: skill "fasten" on r1; } }"#).unwrap();
        let Item::For(f) = &ast.items[0] else { panic!() };
        assert_eq!((f.start.clone(), f.end.clone()), (Term::Lit(1), Term::Lit(3)));
        assert_eq!(f.body.len(), 1);
    }

    #[test]
    fn missing_semicolon_position() {
        let err = parse("sequence s {\n  state a: wait 0.1\n  state b: noop;\n}").unwrap_err();
        match err {
            AssemblyError::SyntaxError { pos, expected, .. } => {
                assert_eq!(pos, Pos { line: 3, col: 3 });
                assert!(expected.contains(&"';'".to_string()));
            }
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn full_grammar() {
        let src = r#"
            # comment
            sequence demo(n: int = 2, who: string = "r1", dt: float = 0.5) {
              state start: cmd table.release_brake;
              state go: skill "turn" @2 on $who on FAILED -> start on SUCCEEDED -> end_success;
              state p: cmd rack.take {"tool_id": "driver", "n": $n, "xs": [1, 2.5, true, null]};
              state w: wait $dt;
            }"#;
        let ast = parse(src).unwrap();
        assert_eq!(ast.params.len(), 3);
        let states: Vec<_> = ast.states().collect();
        assert_eq!(states[1].transitions[1].target, END_SUCCESS);
        assert!(matches!(&states[1].action, ActionAst::Skill { version: Some(2), .. }));
        assert!(matches!(&states[2].action, ActionAst::Cmd { params: Some(DocValue::Object(f)), .. } if f.len() == 3));
    }

    #[test]
    fn duplicates_and_reserved() {
        assert!(matches!(
            parse("sequence s { state a: noop; state a: noop; }"),
            Err(AssemblyError::DuplicateStateId { .. })
        ));
        assert!(parse("sequence s { state end_success: noop; }").is_err());
        assert!(parse("sequence s { state wait: noop; }").is_err());
        assert!(parse("sequence s { state a: noop; } extra").is_err());
    }
}
