use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl std::fmt::Display for Pos {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamType {
    Int,
    String,
    Float,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Literal {
    Int(i64),
    Float(f64),
    Str(String),
}

impl Literal {
    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Literal::Int(i) => (*i).into(),
            Literal::Float(f) => serde_json::Number::from_f64(*f).map_or(serde_json::Value::Null, Into::into),
            Literal::Str(s) => s.clone().into(),
        }
    }

    /// Text spliced into identifiers and strings.
    pub fn splice(&self) -> String {
        match self {
            Literal::Int(i) => i.to_string(),
            Literal::Float(f) => format!("{f:?}"),
            Literal::Str(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDecl {
    pub name: String,
    pub ty: ParamType,
    pub default: Option<Literal>,
}

/// A number written literally or as a `$var` reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Term<T> {
    Lit(T),
    Var(String),
}

/// Parameter document value; like JSON but may reference `$var`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocValue {
    Null,
    Bool(bool),
    Number(serde_json::Number),
    Str(String),
    Var(String),
    Array(Vec<DocValue>),
    Object(Vec<(String, DocValue)>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ActionAst {
    Skill {
        name: String,
        version: Option<u32>,
        target: String,
    },
    Cmd {
        module: String,
        verb: String,
        params: Option<DocValue>,
    },
    Wait {
        seconds: Term<f64>,
    },
    Noop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub outcome: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDecl {
    pub id: String,
    pub action: ActionAst,
    pub transitions: Vec<Transition>,
    #[serde(skip)]
    pub pos: Option<Pos>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForLoop {
    pub var: String,
    pub start: Term<i64>,
    pub end: Term<i64>,
    pub body: Vec<Item>,
    #[serde(skip)]
    pub pos: Option<Pos>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Item {
    State(StateDecl),
    For(ForLoop),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceAst {
    pub name: String,
    pub params: Vec<ParamDecl>,
    pub items: Vec<Item>,
}

impl SequenceAst {
    pub fn is_loop_free(&self) -> bool {
        self.items.iter().all(|i| matches!(i, Item::State(_)))
    }

    /// States of a loop-free AST, in order.
    pub fn states(&self) -> impl Iterator<Item = &StateDecl> {
        self.items.iter().filter_map(|i| match i {
            Item::State(s) => Some(s),
            Item::For(_) => None,
        })
    }
}

pub const END_SUCCESS: &str = "END_SUCCESS";
pub const END_FAILURE: &str = "END_FAILURE";
pub const KEYWORDS: [&str; 9] = ["sequence", "state", "for", "in", "skill", "on", "cmd", "wait", "noop"];
