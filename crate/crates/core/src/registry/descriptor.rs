use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::model::{Pose, Resource};

pub const SUCCEEDED: &str = "SUCCEEDED";
pub const FAILED: &str = "FAILED";
pub const ABORTED: &str = "ABORTED";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModuleId(pub String);

impl fmt::Display for ModuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ModuleId {
    fn from(s: &str) -> Self {
        ModuleId(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ModuleKind {
    Robot,
    RotaryTable,
    ToolRack,
    Fixture,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldType {
    Number,
    Integer,
    String,
    Bool,
    Object,
    Array,
    Any,
}

impl FieldType {
    fn accepts(&self, v: &Value) -> bool {
        match self {
            FieldType::Number => v.is_number(),
            FieldType::Integer => v.is_i64() || v.is_u64(),
            FieldType::String => v.is_string(),
            FieldType::Bool => v.is_boolean(),
            FieldType::Object => v.is_object(),
            FieldType::Array => v.is_array(),
            FieldType::Any => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    #[serde(rename = "type")]
    pub ty: FieldType,
    #[serde(default)]
    pub required: bool,
}

/// Flat schema for a command's parameter object.
///
/// `{"fields": {"angle": {"type": "number", "required": true}}, "additional": false}`
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSchema {
    #[serde(default)]
    pub fields: BTreeMap<String, FieldSpec>,
    #[serde(default)]
    pub additional: bool,
}

impl ParamsSchema {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn field(mut self, name: &str, ty: FieldType, required: bool) -> Self {
        self.fields.insert(name.to_string(), FieldSpec { ty, required });
        self
    }

    pub fn validate(&self, params: &Value) -> Result<(), String> {
        let obj = match params {
            Value::Object(m) => m,
            Value::Null => return self.validate(&Value::Object(Default::default())),
            _ => return Err("params must be an object".into()),
        };
        for (name, spec) in &self.fields {
            match obj.get(name) {
                Some(v) if !spec.ty.accepts(v) => {
                    return Err(format!("field '{name}' must be of type {:?}", spec.ty).to_lowercase())
                }
                None if spec.required => return Err(format!("missing required field '{name}'")),
                _ => {}
            }
        }
        if !self.additional {
            if let Some(extra) = obj.keys().find(|k| !self.fields.contains_key(*k)) {
                return Err(format!("unexpected field '{extra}'"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Capability {
    pub verb: String,
    #[serde(default)]
    pub params_schema: ParamsSchema,
    pub outcomes: BTreeSet<String>,
}

impl Capability {
    pub fn new(verb: &str, params_schema: ParamsSchema) -> Self {
        Self {
            verb: verb.to_string(),
            params_schema,
            outcomes: [SUCCEEDED, FAILED].iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn with_outcome(mut self, label: &str) -> Self {
        self.outcomes.insert(label.to_string());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModuleDescriptor {
    pub name: String,
    pub kind: ModuleKind,
    pub capabilities: Vec<Capability>,
    #[serde(default)]
    pub resources_required: BTreeSet<Resource>,
    #[serde(default)]
    pub mount_pose: Pose,
}

impl ModuleDescriptor {
    pub fn validate(&self) -> Result<(), String> {
        if self.name.trim().is_empty() {
            return Err("name must be non-empty".into());
        }
        if self.capabilities.is_empty() {
            return Err("at least one capability is required".into());
        }
        let mut verbs = BTreeSet::new();
        for cap in &self.capabilities {
            if cap.verb.is_empty() {
                return Err("capability verb must be non-empty".into());
            }
            if !verbs.insert(cap.verb.as_str()) {
                return Err(format!("duplicate verb '{}'", cap.verb));
            }
            if !cap.outcomes.contains(SUCCEEDED) || !cap.outcomes.contains(FAILED) {
                return Err(format!("verb '{}' must declare SUCCEEDED and FAILED outcomes", cap.verb));
            }
        }
        if !self.mount_pose.is_finite() {
            return Err("mount pose is not finite".into());
        }
        Ok(())
    }

    pub fn capability(&self, verb: &str) -> Option<&Capability> {
        self.capabilities.iter().find(|c| c.verb == verb)
    }
}
