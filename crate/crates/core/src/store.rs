//! Directory-per-session record store.
//!
//! Layout under the store root:
//!
//! ```text
//! manifest.json                                   {"schema_version": 1, "hash": "sha256", ...}
//! sessions/<session>/<kind>/<participant|_>/<name>.json
//! sessions/<session>/raw/<name>                   verbatim input files
//! ```
//!
//! A record file is a JSON envelope:
//!
//! ```text
//! {"schema_version":1,"kind":"profile","session":"s1","participant":"P001",
//!  "name":"video","sha256":"<hex>","payload":{...}}
//! ```
//!
//! `sha256` is the hex SHA-256 of the payload text exactly as it appears in
//! the file; it is checked on every read. Session-level records use `_` as
//! the participant directory. Writes go to a temporary file in the target
//! directory and are renamed into place.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";
const NO_PARTICIPANT: &str = "_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    /// Session metadata.
    Meta,
    /// Provenance of an ingested export: file name, hash, row counts.
    Source,
    Quality,
    Events,
    Profile,
    Dataset,
    Heatmap,
    Anova,
    Model,
    Report,
}

impl Kind {
    pub const ALL: [Kind; 10] = [
        Kind::Meta,
        Kind::Source,
        Kind::Quality,
        Kind::Events,
        Kind::Profile,
        Kind::Dataset,
        Kind::Heatmap,
        Kind::Anova,
        Kind::Model,
        Kind::Report,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Meta => "meta",
            Kind::Source => "source",
            Kind::Quality => "quality",
            Kind::Events => "events",
            Kind::Profile => "profile",
            Kind::Dataset => "dataset",
            Kind::Heatmap => "heatmap",
            Kind::Anova => "anova",
            Kind::Model => "model",
            Kind::Report => "report",
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Kind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Kind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown record kind {s:?}"))
    }
}

/// Record address within a kind.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Key {
    pub session: String,
    pub participant: Option<String>,
    pub name: String,
}

impl Key {
    pub fn session(session: &str, name: &str) -> Key {
        Key { session: session.into(), participant: None, name: name.into() }
    }

    pub fn learner(session: &str, participant: &str, name: &str) -> Key {
        Key { session: session.into(), participant: Some(participant.into()), name: name.into() }
    }

    fn validate(&self) -> Result<()> {
        valid_component(&self.session)?;
        valid_component(&self.name)?;
        if let Some(p) = &self.participant {
            valid_component(p)?;
            if p == NO_PARTICIPANT {
                return Err(Error::Config(format!("participant id {p:?} is reserved")));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.session, self.participant.as_deref().unwrap_or(NO_PARTICIPANT), self.name)
    }
}

/// Path components: ASCII letters, digits, `.`, `_`, `-`; no leading dot.
pub fn valid_component(s: &str) -> Result<()> {
    let ok = !s.is_empty()
        && s.len() <= 128
        && !s.starts_with('.')
        && s.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'));
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!("invalid store key component {s:?}")))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    schema_version: u32,
    hash: String,
    layout: String,
}

#[derive(Serialize, Deserialize)]
struct Envelope<'a> {
    schema_version: u32,
    kind: Kind,
    session: String,
    participant: Option<String>,
    name: String,
    sha256: String,
    #[serde(borrow)]
    payload: &'a RawValue,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().expect("record paths have a parent");
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn sorted_dir_names(dir: &Path) -> Result<Vec<String>> {
    let entries = match fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(dir, e)),
    };
    let mut names = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        if let Some(name) = entry.file_name().to_str() {
            if !name.starts_with('.') {
                names.push(name.to_string());
            }
        }
    }
    names.sort();
    Ok(names)
}

impl Store {
    /// Open a store, creating it when `root` has no manifest.
    pub fn open(root: impl Into<PathBuf>) -> Result<Store> {
        let root = root.into();
        let path = root.join(MANIFEST);
        match fs::read(&path) {
            Ok(bytes) => {
                let m: Manifest = serde_json::from_slice(&bytes)
                    .map_err(|e| Error::Integrity { path: path.clone(), message: e.to_string() })?;
                if m.schema_version != SCHEMA_VERSION {
                    return Err(Error::Migration(format!(
                        "store at {} has schema version {}, this build reads {SCHEMA_VERSION}",
                        root.display(),
                        m.schema_version
                    )));
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                let m = Manifest {
                    schema_version: SCHEMA_VERSION,
                    hash: "sha256".into(),
                    layout: "sessions/<session>/<kind>/<participant|_>/<name>.json".into(),
                };
                let mut text = serde_json::to_string_pretty(&m)?;
                text.push('\n');
                write_atomic(&path, text.as_bytes())?;
            }
            Err(e) => return Err(Error::io(path, e)),
        }
        Ok(Store { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn record_path(&self, kind: Kind, key: &Key) -> PathBuf {
        self.root
            .join("sessions")
            .join(&key.session)
            .join(kind.as_str())
            .join(key.participant.as_deref().unwrap_or(NO_PARTICIPANT))
            .join(format!("{}.json", key.name))
    }

    /// Store `value`, replacing any previous record. Returns the payload hash.
    pub fn put<T: Serialize + ?Sized>(&self, kind: Kind, key: &Key, value: &T) -> Result<String> {
        key.validate()?;
        let payload = serde_json::to_string(value)?;
        let sha256 = sha256_hex(payload.as_bytes());
        let raw = RawValue::from_string(payload)?;
        let env = Envelope {
            schema_version: SCHEMA_VERSION,
            kind,
            session: key.session.clone(),
            participant: key.participant.clone(),
            name: key.name.clone(),
            sha256: sha256.clone(),
            payload: &raw,
        };
        let mut text = serde_json::to_string(&env)?;
        text.push('\n');
        write_atomic(&self.record_path(kind, key), text.as_bytes())?;
        Ok(sha256)
    }

    /// Raw payload text after schema and hash verification.
    pub fn get_payload(&self, kind: Kind, key: &Key) -> Result<String> {
        key.validate()?;
        let path = self.record_path(kind, key);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(Error::NotFound(format!("{kind} record {key}")));
            }
            Err(e) => return Err(Error::io(path, e)),
        };
        let integrity = |message: String| Error::Integrity { path: path.clone(), message };
        let env: Envelope = serde_json::from_slice(&bytes).map_err(|e| integrity(e.to_string()))?;
        if env.schema_version != SCHEMA_VERSION {
            return Err(Error::Migration(format!(
                "record {} has schema version {}, this build reads {SCHEMA_VERSION}",
                path.display(),
                env.schema_version
            )));
        }
        if env.kind != kind || env.session != key.session || env.participant != key.participant || env.name != key.name {
            return Err(integrity("envelope does not match its location".into()));
        }
        let text = env.payload.get();
        let actual = sha256_hex(text.as_bytes());
        if actual != env.sha256 {
            return Err(integrity(format!("payload hash {actual} does not match recorded {}", env.sha256)));
        }
        Ok(text.to_string())
    }

    pub fn get<T: DeserializeOwned>(&self, kind: Kind, key: &Key) -> Result<T> {
        let text = self.get_payload(kind, key)?;
        serde_json::from_str(&text).map_err(|e| Error::Integrity {
            path: self.record_path(kind, key),
            message: format!("payload does not decode: {e}"),
        })
    }

    pub fn contains(&self, kind: Kind, key: &Key) -> bool {
        key.validate().is_ok() && self.record_path(kind, key).is_file()
    }

    /// Keys of one kind in a session, sorted by participant (session-level
    /// records first) and then name.
    pub fn list(&self, kind: Kind, session: &str) -> Result<Vec<Key>> {
        valid_component(session)?;
        let base = self.root.join("sessions").join(session).join(kind.as_str());
        let mut keys = Vec::new();
        for part in sorted_dir_names(&base)? {
            for file in sorted_dir_names(&base.join(&part))? {
                let Some(name) = file.strip_suffix(".json") else {
                    continue;
                };
                let participant = (part != NO_PARTICIPANT).then(|| part.clone());
                keys.push(Key { session: session.to_string(), participant, name: name.to_string() });
            }
        }
        keys.sort();
        Ok(keys)
    }

    pub fn sessions(&self) -> Result<Vec<String>> {
        sorted_dir_names(&self.root.join("sessions"))
    }

    fn blob_path(&self, session: &str, name: &str) -> Result<PathBuf> {
        valid_component(session)?;
        valid_component(name)?;
        Ok(self.root.join("sessions").join(session).join("raw").join(name))
    }

    /// Keep a verbatim input file. Returns its hash.
    pub fn put_blob(&self, session: &str, name: &str, bytes: &[u8]) -> Result<String> {
        write_atomic(&self.blob_path(session, name)?, bytes)?;
        Ok(sha256_hex(bytes))
    }

    /// Read a stored input file, checking it against `sha256` when given.
    pub fn get_blob(&self, session: &str, name: &str, sha256: Option<&str>) -> Result<Vec<u8>> {
        let path = self.blob_path(session, name)?;
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(Error::NotFound(format!("raw file {session}/{name}")));
            }
            Err(e) => return Err(Error::io(path, e)),
        };
        if let Some(expected) = sha256 {
            let actual = sha256_hex(&bytes);
            if actual != expected {
                return Err(Error::Integrity { path, message: format!("hash {actual} does not match recorded {expected}") });
            }
        }
        Ok(bytes)
    }

    /// Every file under the root with its hash, sorted by relative path.
    pub fn fingerprint(&self) -> Result<Vec<(String, String)>> {
        fn walk(dir: &Path, rel: &str, out: &mut Vec<(String, String)>) -> Result<()> {
            for name in sorted_dir_names(dir)? {
                let path = dir.join(&name);
                let rel = if rel.is_empty() { name } else { format!("{rel}/{name}") };
                if path.is_dir() {
                    walk(&path, &rel, out)?;
                } else {
                    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
                    out.push((rel, sha256_hex(&bytes)));
                }
            }
            Ok(())
        }
        let mut out = Vec::new();
        walk(&self.root, "", &mut out)?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[test]
    fn round_trip_and_not_found() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let key = Key::learner("s1", "P001", "video");
        let mut value = BTreeMap::new();
        value.insert("rate".to_string(), 0.1 + 0.2);
        store.put(Kind::Profile, &key, &value).unwrap();
        let back: BTreeMap<String, f64> = store.get(Kind::Profile, &key).unwrap();
        assert_eq!(back, value);
        let missing = store.get::<BTreeMap<String, f64>>(Kind::Profile, &Key::learner("s1", "P002", "video"));
        assert!(matches!(missing, Err(Error::NotFound(_))));
    }

    #[test]
    fn tampering_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let key = Key::session("s1", "x");
        store.put(Kind::Anova, &key, &vec![1, 2, 3]).unwrap();
        let path = store.record_path(Kind::Anova, &key);
        let text = fs::read_to_string(&path).unwrap().replace("[1,2,3]", "[1,2,4]");
        fs::write(&path, text).unwrap();
        assert!(matches!(store.get::<Vec<i32>>(Kind::Anova, &key), Err(Error::Integrity { .. })));
    }

    #[test]
    fn version_mismatch_is_migration_error() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let key = Key::session("s1", "x");
        store.put(Kind::Report, &key, "hello").unwrap();
        let path = store.record_path(Kind::Report, &key);
        let text = fs::read_to_string(&path).unwrap().replace("\"schema_version\":1", "\"schema_version\":2");
        fs::write(&path, text).unwrap();
        assert!(matches!(store.get::<String>(Kind::Report, &key), Err(Error::Migration(_))));
        fs::write(dir.path().join(MANIFEST), "{\"schema_version\":0,\"hash\":\"sha256\",\"layout\":\"\"}").unwrap();
        assert!(matches!(Store::open(dir.path()), Err(Error::Migration(_))));
    }

    #[test]
    fn bad_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        for key in [Key::session("../x", "a"), Key::session("s", ""), Key::learner("s", "_", "a"), Key::session("s", "a/b")] {
            assert!(store.put(Kind::Meta, &key, &1).is_err(), "{key:?}");
        }
    }

    #[test]
    fn blobs_are_verified() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let h = store.put_blob("s1", "P001.tsv", b"abc").unwrap();
        assert_eq!(store.get_blob("s1", "P001.tsv", Some(&h)).unwrap(), b"abc");
        assert!(store.get_blob("s1", "P001.tsv", Some("00")).is_err());
    }
}
