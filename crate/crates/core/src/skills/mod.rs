//! Named, versioned skill database.
//!
//! Every `put` appends a new immutable version. Readers that ask for a
//! name without a version get the latest one at the time of the call,
//! which is how sequences pick up re-taught skills without recompiling.

mod backend;

pub use backend::{Backend, FileBackend, LogRecord, MemoryBackend};

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::model::Trajectory;
use crate::registry::ModuleKind;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StoreError {
    #[error("invalid payload: {0}")]
    InvalidPayload(String),
    #[error("invalid skill name '{0}'")]
    InvalidName(String),
    #[error("unknown skill '{0}'")]
    UnknownSkill(String),
    #[error("skill '{name}' has no version {version}")]
    UnknownVersion { name: String, version: u32 },
    #[error("skill '{name}' is referenced by {count} loaded sequence(s)")]
    SkillInUse { name: String, count: usize },
    #[error("storage: {0}")]
    Io(String),
    #[error("corrupt store: {0}")]
    Corrupt(String),
}

impl StoreError {
    pub fn code(&self) -> &'static str {
        match self {
            StoreError::InvalidPayload(_) => "InvalidPayload",
            StoreError::InvalidName(_) => "InvalidName",
            StoreError::UnknownSkill(_) => "UnknownSkill",
            StoreError::UnknownVersion { .. } => "UnknownVersion",
            StoreError::SkillInUse { .. } => "SkillInUse",
            StoreError::Io(_) => "StorageError",
            StoreError::Corrupt(_) => "CorruptStore",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SkillKind {
    Trajectory,
    Primitive,
}

/// A single module command stored as a skill.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Primitive {
    pub module_kind: ModuleKind,
    pub verb: String,
    #[serde(default)]
    pub params: Value,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SkillPayload {
    Trajectory(Trajectory),
    Primitive(Primitive),
}

impl SkillPayload {
    pub fn kind(&self) -> SkillKind {
        match self {
            SkillPayload::Trajectory(_) => SkillKind::Trajectory,
            SkillPayload::Primitive(_) => SkillKind::Primitive,
        }
    }

    pub fn to_value(&self) -> Value {
        match self {
            SkillPayload::Trajectory(t) => serde_json::to_value(t),
            SkillPayload::Primitive(p) => serde_json::to_value(p),
        }
        .expect("payloads serialize")
    }

    /// Parses and validates a payload document for `kind`.
    pub fn from_value(kind: SkillKind, value: Value) -> Result<Self, StoreError> {
        let bad = |e: serde_json::Error| StoreError::InvalidPayload(e.to_string());
        match kind {
            SkillKind::Trajectory => Ok(SkillPayload::Trajectory(serde_json::from_value(value).map_err(bad)?)),
            SkillKind::Primitive => {
                let p: Primitive = serde_json::from_value(value).map_err(bad)?;
                if p.verb.trim().is_empty() {
                    return Err(StoreError::InvalidPayload("primitive verb is empty".into()));
                }
                if !(p.params.is_object() || p.params.is_null()) {
                    return Err(StoreError::InvalidPayload("primitive params must be an object".into()));
                }
                Ok(SkillPayload::Primitive(p))
            }
        }
    }

    pub fn as_trajectory(&self) -> Option<&Trajectory> {
        match self {
            SkillPayload::Trajectory(t) => Some(t),
            SkillPayload::Primitive(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkillMeta {
    /// RFC 3339; filled by the store when empty.
    #[serde(default)]
    pub created_wallclock: String,
    #[serde(default)]
    pub robot_model: Option<String>,
    #[serde(default)]
    pub tags: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EntryDoc", into = "EntryDoc")]
pub struct SkillEntry {
    pub name: String,
    pub version: u32,
    pub payload: SkillPayload,
    pub meta: SkillMeta,
}

impl SkillEntry {
    pub fn kind(&self) -> SkillKind {
        self.payload.kind()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryDoc {
    name: String,
    version: u32,
    kind: SkillKind,
    payload: Value,
    meta: SkillMeta,
}

impl TryFrom<EntryDoc> for SkillEntry {
    type Error = StoreError;
    fn try_from(d: EntryDoc) -> Result<Self, StoreError> {
        Ok(SkillEntry {
            name: d.name,
            version: d.version,
            payload: SkillPayload::from_value(d.kind, d.payload)?,
            meta: d.meta,
        })
    }
}

impl From<SkillEntry> for EntryDoc {
    fn from(e: SkillEntry) -> Self {
        EntryDoc {
            name: e.name,
            version: e.version,
            kind: e.payload.kind(),
            payload: e.payload.to_value(),
            meta: e.meta,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ListFilter {
    pub kind: Option<SkillKind>,
    pub tag: Option<String>,
}

pub fn validate_name(name: &str) -> Result<(), StoreError> {
    let ok = !name.is_empty()
        && name.len() <= 128
        && name.chars().all(|c| c.is_ascii_alphanumeric() || "_-./".contains(c));
    if ok {
        Ok(())
    } else {
        Err(StoreError::InvalidName(name.to_string()))
    }
}

/// Puts between automatic compactions.
const COMPACT_EVERY: u64 = 256;

pub struct SkillStore {
    backend: Box<dyn Backend>,
    skills: BTreeMap<String, Vec<SkillEntry>>,
    pins: BTreeMap<String, usize>,
    lsn: u64,
    since_compaction: u64,
    location: Option<PathBuf>,
}

impl std::fmt::Debug for SkillStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SkillStore")
            .field("skills", &self.skills.len())
            .field("lsn", &self.lsn)
            .field("location", &self.location)
            .finish()
    }
}

impl SkillStore {
    pub fn in_memory() -> Self {
        Self::open_with(Box::new(MemoryBackend::default())).expect("memory backend cannot fail")
    }

    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let backend = FileBackend::open(dir)?;
        let location = backend.dir().to_path_buf();
        let mut store = Self::open_with(Box::new(backend))?;
        store.location = Some(location);
        Ok(store)
    }

    pub fn open_with(mut backend: Box<dyn Backend>) -> Result<Self, StoreError> {
        let records = backend.load()?;
        let mut store = Self {
            backend,
            skills: BTreeMap::new(),
            pins: BTreeMap::new(),
            lsn: 0,
            since_compaction: 0,
            location: None,
        };
        for rec in records {
            store.replay(rec)?;
        }
        Ok(store)
    }

    pub fn location(&self) -> Option<&PathBuf> {
        self.location.as_ref()
    }

    fn replay(&mut self, rec: LogRecord) -> Result<(), StoreError> {
        self.lsn = self.lsn.max(rec.lsn());
        match rec {
            LogRecord::Put {
                name,
                version,
                kind,
                payload,
                meta,
                ..
            } => {
                let versions = self.skills.entry(name.clone()).or_default();
                if version as usize != versions.len() + 1 {
                    return Err(StoreError::Corrupt(format!("'{name}' version {version} out of order")));
                }
                let payload = SkillPayload::from_value(kind, payload)
                    .map_err(|e| StoreError::Corrupt(format!("'{name}' v{version}: {e}")))?;
                versions.push(SkillEntry {
                    name,
                    version,
                    payload,
                    meta,
                });
            }
            LogRecord::Delete { name, .. } => {
                self.skills.remove(&name);
            }
            LogRecord::Checkpoint { .. } => {}
        }
        Ok(())
    }

    /// Stores a new version of `name` and returns its number.
    pub fn put(&mut self, name: &str, payload: SkillPayload, mut meta: SkillMeta) -> Result<u32, StoreError> {
        validate_name(name)?;
        if meta.created_wallclock.is_empty() {
            meta.created_wallclock = chrono::Utc::now().to_rfc3339();
        }
        let version = self.skills.get(name).map_or(0, Vec::len) as u32 + 1;
        let rec = LogRecord::Put {
            lsn: self.lsn + 1,
            name: name.to_string(),
            version,
            kind: payload.kind(),
            payload: payload.to_value(),
            meta: meta.clone(),
        };
        self.backend.append(&rec)?;
        self.lsn += 1;
        self.skills.entry(name.to_string()).or_default().push(SkillEntry {
            name: name.to_string(),
            version,
            payload,
            meta,
        });
        self.since_compaction += 1;
        if self.since_compaction >= COMPACT_EVERY {
            self.compact()?;
        }
        Ok(version)
    }

    /// Latest version when `version` is `None`.
    pub fn get(&self, name: &str, version: Option<u32>) -> Result<&SkillEntry, StoreError> {
        let versions = self
            .skills
            .get(name)
            .ok_or_else(|| StoreError::UnknownSkill(name.to_string()))?;
        match version {
            None => Ok(versions.last().expect("stored names have a version")),
            Some(v) => versions
                .get((v as usize).wrapping_sub(1))
                .ok_or_else(|| StoreError::UnknownVersion {
                    name: name.to_string(),
                    version: v,
                }),
        }
    }

    pub fn contains(&self, name: &str) -> bool {
        self.skills.contains_key(name)
    }

    pub fn latest_version(&self, name: &str) -> Option<u32> {
        self.skills.get(name).map(|v| v.len() as u32)
    }

    /// Latest version of every matching name, ordered by name.
    pub fn list(&self, filter: &ListFilter) -> Vec<&SkillEntry> {
        self.skills
            .values()
            .filter_map(|v| v.last())
            .filter(|e| filter.kind.is_none_or(|k| e.kind() == k))
            .filter(|e| filter.tag.as_ref().is_none_or(|t| e.meta.tags.contains(t)))
            .collect()
    }

    pub fn history(&self, name: &str) -> Result<&[SkillEntry], StoreError> {
        self.skills
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| StoreError::UnknownSkill(name.to_string()))
    }

    /// Removes all versions of `name`.
    pub fn delete(&mut self, name: &str) -> Result<(), StoreError> {
        if !self.skills.contains_key(name) {
            return Err(StoreError::UnknownSkill(name.to_string()));
        }
        if let Some(&count) = self.pins.get(name) {
            return Err(StoreError::SkillInUse {
                name: name.to_string(),
                count,
            });
        }
        self.backend.append(&LogRecord::Delete {
            lsn: self.lsn + 1,
            name: name.to_string(),
        })?;
        self.lsn += 1;
        self.skills.remove(name);
        Ok(())
    }

    /// Marks `name` as referenced by a loaded sequence.
    pub fn pin(&mut self, name: &str) {
        *self.pins.entry(name.to_string()).or_default() += 1;
    }

    pub fn unpin(&mut self, name: &str) {
        if let Some(n) = self.pins.get_mut(name) {
            *n -= 1;
            if *n == 0 {
                self.pins.remove(name);
            }
        }
    }

    pub fn pin_count(&self, name: &str) -> usize {
        self.pins.get(name).copied().unwrap_or(0)
    }

    /// Rewrites persistent state as one snapshot and empties the log.
    pub fn compact(&mut self) -> Result<(), StoreError> {
        let mut records = vec![LogRecord::Checkpoint { lsn: self.lsn }];
        for e in self.skills.values().flatten() {
            records.push(LogRecord::Put {
                lsn: 0,
                name: e.name.clone(),
                version: e.version,
                kind: e.kind(),
                payload: e.payload.to_value(),
                meta: e.meta.clone(),
            });
        }
        self.backend.compact(&records)?;
        self.since_compaction = 0;
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.skills.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.skills.len()
    }

    pub fn is_empty(&self) -> bool {
        self.skills.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn traj(end: f64) -> SkillPayload {
        SkillPayload::Trajectory(Trajectory::joint(vec![(0.0, vec![0.0, 0.0]), (1.0, vec![end, 0.1])]).unwrap())
    }

    #[test]
    fn versions_and_late_binding() {
        let mut s = SkillStore::in_memory();
        assert!(s.list(&ListFilter::default()).is_empty());
        assert_eq!(s.put("pick_a", traj(0.1), SkillMeta::default()).unwrap(), 1);
        assert_eq!(s.put("pick_a", traj(0.2), SkillMeta::default()).unwrap(), 2);
        assert_eq!(s.put("pick_a", traj(0.3), SkillMeta::default()).unwrap(), 3);
        assert_eq!(s.get("pick_a", None).unwrap().version, 3);
        assert_eq!(s.get("pick_a", Some(2)).unwrap().payload, traj(0.2));
        let versions: Vec<u32> = s.history("pick_a").unwrap().iter().map(|e| e.version).collect();
        assert_eq!(versions, [1, 2, 3]);
        assert_eq!(s.get("nope", None), Err(StoreError::UnknownSkill("nope".into())));
        assert!(matches!(s.get("pick_a", Some(0)), Err(StoreError::UnknownVersion { .. })));
        assert!(matches!(s.get("pick_a", Some(4)), Err(StoreError::UnknownVersion { .. })));
    }

    #[test]
    fn payload_validation() {
        let bad = json!({"kind": "JOINT", "samples": [{"t": 0.0, "q": [0.0]}, {"t": 0.5, "q": [1.0]}, {"t": 0.2, "q": [0.0]}]});
        assert!(matches!(
            SkillPayload::from_value(SkillKind::Trajectory, bad),
            Err(StoreError::InvalidPayload(_))
        ));
        let p = json!({"module_kind": "ROTARY_TABLE", "verb": "release_brake", "params": {}});
        assert!(SkillPayload::from_value(SkillKind::Primitive, p).is_ok());
        let p = json!({"module_kind": "ROTARY_TABLE", "verb": "", "params": {}});
        assert!(SkillPayload::from_value(SkillKind::Primitive, p).is_err());
        assert!(validate_name("bad name").is_err());
    }

    #[test]
    fn pins_block_delete() {
        let mut s = SkillStore::in_memory();
        s.put("fasten", traj(0.1), SkillMeta::default()).unwrap();
        s.pin("fasten");
        assert!(matches!(s.delete("fasten"), Err(StoreError::SkillInUse { count: 1, .. })));
        s.unpin("fasten");
        s.delete("fasten").unwrap();
        assert!(!s.contains("fasten"));
        assert_eq!(s.put("fasten", traj(0.1), SkillMeta::default()).unwrap(), 1);
    }

    #[test]
    fn filters() {
        let mut s = SkillStore::in_memory();
        let meta = SkillMeta {
            tags: ["screw".to_string()].into(),
            ..Default::default()
        };
        s.put("a", traj(0.1), meta).unwrap();
        let p = Primitive {
            module_kind: ModuleKind::Fixture,
            verb: "clamp".into(),
            params: json!({}),
        };
        s.put("b", SkillPayload::Primitive(p), SkillMeta::default()).unwrap();
        let f = ListFilter {
            kind: Some(SkillKind::Primitive),
            tag: None,
        };
        assert_eq!(s.list(&f).len(), 1);
        let f = ListFilter {
            kind: None,
            tag: Some("screw".into()),
        };
        assert_eq!(s.list(&f)[0].name, "a");
    }
}
