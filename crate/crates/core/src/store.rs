//! On-disk state: one directory per user holding append-only JSON-lines
//! logs and an occasional snapshot.
//!
//! ```text
//! <store>/users/<encoded id>/portraits.jsonl    every portrait version
//!                            edits.jsonl        classified edits
//!                            events.jsonl       interaction events
//!                            generations.jsonl  generation records
//!                            snapshot.json      replay shortcut
//! ```
//!
//! A portrait line is the commit point of an edit or a generation: the edit
//! or generation record is appended first, and on replay records that point
//! at a version missing from `portraits.jsonl` are discarded.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{DomainError, Portrait, UserId, ValidatedRating};
use crate::edits::EditRecord;
use crate::jsonl::{self, Appender, JsonlError};
use crate::metrics::{EventKind, InteractionEvent};
use crate::summarize::GenerationRecord;

const PORTRAITS: &str = "portraits.jsonl";
const EDITS: &str = "edits.jsonl";
const EVENTS: &str = "events.jsonl";
const GENERATIONS: &str = "generations.jsonl";
const SNAPSHOT: &str = "snapshot.json";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Log(#[from] JsonlError),
    #[error("corrupt store for user {user}: {source}")]
    Chain {
        user: UserId,
        #[source]
        source: DomainError,
    },
    #[error("bad snapshot {path}: {reason}")]
    Snapshot { path: String, reason: String },
}

/// File-name-safe form of a user id.
pub fn encode_id(id: &str) -> String {
    let mut out = String::new();
    for b in id.bytes() {
        if b.is_ascii_alphanumeric() || b == b'-' || b == b'_' {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    if out.is_empty() {
        out.push('%');
    }
    out
}

pub fn decode_id(name: &str) -> Option<String> {
    if name == "%" {
        return Some(String::new());
    }
    let bytes = name.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let hex = name.get(i + 1..i + 3)?;
            out.push(u8::from_str_radix(hex, 16).ok()?);
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    String::from_utf8(out).ok()
}

/// Replayed state of one user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserState {
    pub user_id: UserId,
    pub versions: Vec<Portrait>,
    pub last_generation: Option<GenerationRecord>,
    /// Ratings received as events, in arrival order.
    pub rating_events: Vec<ValidatedRating>,
    pub edit_count: usize,
    pub event_count: usize,
    pub last_check: Option<DateTime<Utc>>,
}

impl UserState {
    pub fn new(user_id: UserId) -> Self {
        UserState {
            user_id,
            versions: Vec::new(),
            last_generation: None,
            rating_events: Vec::new(),
            edit_count: 0,
            event_count: 0,
            last_check: None,
        }
    }

    pub fn latest(&self) -> Option<&Portrait> {
        self.versions.last()
    }

    pub fn next_version(&self) -> u64 {
        self.versions.last().map_or(1, |p| p.version + 1)
    }

    fn push_portrait(&mut self, p: Portrait) -> Result<(), DomainError> {
        let expected = self.next_version();
        if p.version != expected {
            return Err(DomainError::VersionGap {
                expected,
                got: p.version,
            });
        }
        if p.user_id != self.user_id {
            return Err(DomainError::ForeignPortrait(p.user_id));
        }
        self.versions.push(p);
        Ok(())
    }

    fn apply_event(&mut self, e: &InteractionEvent) {
        self.event_count += 1;
        if let (EventKind::Rating, Some(m), Some(s)) = (e.kind, &e.movie_id, e.score) {
            self.rating_events.push(ValidatedRating {
                user_id: e.user_id.clone(),
                movie_id: m.clone(),
                score: s,
                timestamp: e.timestamp,
            });
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
struct Offsets {
    portraits: u64,
    edits: u64,
    events: u64,
    generations: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Snapshot {
    offsets: Offsets,
    state: UserState,
}

/// Everything in one user's logs, with uncommitted records removed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UserLogs {
    pub portraits: Vec<Portrait>,
    pub edits: Vec<EditRecord>,
    pub events: Vec<InteractionEvent>,
    pub generations: Vec<GenerationRecord>,
}

fn committed(max_version: u64) -> impl Fn(&u64) -> bool {
    move |v| *v <= max_version
}

pub fn user_dir(root: &Path, user: &UserId) -> PathBuf {
    root.join("users").join(encode_id(user.as_str()))
}

/// Ids of every user with a directory under `root`, sorted.
pub fn list_users(root: &Path) -> Result<Vec<UserId>, StoreError> {
    let dir = root.join("users");
    let mut out = Vec::new();
    match fs::read_dir(&dir) {
        Ok(entries) => {
            for e in entries {
                let e = e?;
                if e.file_type()?.is_dir() {
                    if let Some(id) = e.file_name().to_str().and_then(decode_id) {
                        out.push(UserId::from(id));
                    }
                }
            }
        }
        Err(e) if e.kind() == io::ErrorKind::NotFound => {}
        Err(e) => return Err(e.into()),
    }
    out.sort();
    Ok(out)
}

pub fn read_user_logs(dir: &Path) -> Result<UserLogs, StoreError> {
    let portraits: Vec<Portrait> = jsonl::read(&dir.join(PORTRAITS))?;
    let max = portraits.last().map_or(0, |p| p.version);
    let keep = committed(max);
    let edits = jsonl::read::<EditRecord>(&dir.join(EDITS))?
        .into_iter()
        .filter(|e| keep(&e.new_version))
        .collect();
    let generations = jsonl::read::<GenerationRecord>(&dir.join(GENERATIONS))?
        .into_iter()
        .filter(|g| keep(&g.portrait_version))
        .collect();
    Ok(UserLogs {
        portraits,
        edits,
        events: jsonl::read(&dir.join(EVENTS))?,
        generations,
    })
}

/// Logs of every user in the store, in user order.
pub fn read_all(root: &Path) -> Result<BTreeMap<UserId, UserLogs>, StoreError> {
    list_users(root)?
        .into_iter()
        .map(|u| {
            let logs = read_user_logs(&user_dir(root, &u))?;
            Ok((u, logs))
        })
        .collect()
}

/// Single writer for one user's directory.
#[derive(Debug)]
pub struct UserStore {
    dir: PathBuf,
    state: UserState,
    offsets: Offsets,
    portraits: Appender,
    edits: Appender,
    events: Appender,
    generations: Appender,
    snapshot_every: usize,
    writes_since_snapshot: usize,
}

impl UserStore {
    /// Opens (creating if needed) and replays the user's logs, trimming any
    /// torn final line.
    pub fn open(root: &Path, user: &UserId, snapshot_every: usize) -> Result<Self, StoreError> {
        let dir = user_dir(root, user);
        fs::create_dir_all(&dir)?;
        let (mut state, start) = match fs::read(dir.join(SNAPSHOT)) {
            Ok(bytes) => {
                let snap: Snapshot = serde_json::from_slice(&bytes).map_err(|e| StoreError::Snapshot {
                    path: dir.join(SNAPSHOT).display().to_string(),
                    reason: e.to_string(),
                })?;
                (snap.state, snap.offsets)
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => (UserState::new(user.clone()), Offsets::default()),
            Err(e) => return Err(e.into()),
        };

        let (portraits, p_len) = jsonl::read_from::<Portrait>(&dir.join(PORTRAITS), start.portraits)?;
        for p in portraits {
            state.push_portrait(p).map_err(|source| StoreError::Chain {
                user: user.clone(),
                source,
            })?;
        }
        let max = state.latest().map_or(0, |p| p.version);
        let (edits, e_len) = jsonl::read_from::<EditRecord>(&dir.join(EDITS), start.edits)?;
        state.edit_count += edits.iter().filter(|e| e.new_version <= max).count();
        let (events, v_len) = jsonl::read_from::<InteractionEvent>(&dir.join(EVENTS), start.events)?;
        for e in &events {
            state.apply_event(e);
        }
        let (gens, g_len) = jsonl::read_from::<GenerationRecord>(&dir.join(GENERATIONS), start.generations)?;
        for g in gens.into_iter().filter(|g| g.portrait_version <= max) {
            state.last_check = Some(state.last_check.map_or(g.generated_at, |c| c.max(g.generated_at)));
            state.last_generation = Some(g);
        }
        let offsets = Offsets {
            portraits: p_len,
            edits: e_len,
            events: v_len,
            generations: g_len,
        };
        Ok(UserStore {
            portraits: Appender::open(&dir.join(PORTRAITS), Some(p_len))?,
            edits: Appender::open(&dir.join(EDITS), Some(e_len))?,
            events: Appender::open(&dir.join(EVENTS), Some(v_len))?,
            generations: Appender::open(&dir.join(GENERATIONS), Some(g_len))?,
            dir,
            state,
            offsets,
            snapshot_every,
            writes_since_snapshot: 0,
        })
    }

    pub fn state(&self) -> &UserState {
        &self.state
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn wrote(&mut self) -> Result<(), StoreError> {
        self.writes_since_snapshot += 1;
        if self.snapshot_every > 0 && self.writes_since_snapshot >= self.snapshot_every {
            self.snapshot()?;
        }
        Ok(())
    }

    /// Writes the current state and log offsets atomically.
    pub fn snapshot(&mut self) -> Result<(), StoreError> {
        let snap = Snapshot {
            offsets: self.offsets,
            state: self.state.clone(),
        };
        let tmp = self.dir.join("snapshot.json.tmp");
        fs::write(&tmp, serde_json::to_vec(&snap).map_err(io::Error::other)?)?;
        fs::rename(&tmp, self.dir.join(SNAPSHOT))?;
        self.writes_since_snapshot = 0;
        Ok(())
    }

    fn commit_portrait(&mut self, p: Portrait) -> Result<(), StoreError> {
        let mut next = self.state.clone();
        next.push_portrait(p.clone()).map_err(|source| StoreError::Chain {
            user: self.state.user_id.clone(),
            source,
        })?;
        self.offsets.portraits = self.portraits.append(&p)?;
        self.state.versions = next.versions;
        Ok(())
    }

    /// Appends an edit and the portrait version it produced.
    pub fn record_edit(&mut self, edit: &EditRecord, portrait: Portrait) -> Result<(), StoreError> {
        self.offsets.edits = self.edits.append(edit)?;
        self.commit_portrait(portrait)?;
        self.state.edit_count += 1;
        self.wrote()
    }

    /// Appends a generation record and its portrait.
    pub fn record_generation(&mut self, record: &GenerationRecord, portrait: Portrait) -> Result<(), StoreError> {
        self.offsets.generations = self.generations.append(record)?;
        self.commit_portrait(portrait)?;
        self.state.last_check = Some(record.generated_at);
        self.state.last_generation = Some(record.clone());
        self.wrote()
    }

    pub fn record_event(&mut self, event: &InteractionEvent) -> Result<(), StoreError> {
        self.offsets.events = self.events.append(event)?;
        self.state.apply_event(event);
        self.wrote()
    }

    /// Notes a regeneration check that did not regenerate. Not persisted.
    pub fn mark_checked(&mut self, at: DateTime<Utc>) {
        self.state.last_check = Some(at);
    }
}
