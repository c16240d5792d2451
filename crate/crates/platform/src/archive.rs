//! Append-only session archives.
//!
//! One file per session, one JSON object per line. The first line is the
//! header, followed by the event journal, the play-time model calls, a
//! snapshot of the final state, and then any number of appended assessment
//! batches (their model calls plus results). Replaying every recorded call
//! through the replay backend reproduces the stored assessments exactly.

use std::collections::BTreeSet;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use gpa_core::assessment::{AssessmentMethod, AssessmentResult, Condition};
use gpa_core::cognition::AgentState;
use gpa_core::engine::{EncounterPerception, EngineConfig, Event, SessionRuntime};
use gpa_core::game::{GameSession, SessionStatus};
use gpa_core::llm::{BackendKind, ChatRecord};
use gpa_core::perception::{ChannelBundle, EncounterRecord};
use gpa_core::simulation::SimulatedPlayerSpec;

pub const FORMAT_VERSION: u32 = 1;
pub const INDEX_FILE: &str = "index.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveHeader {
    pub format_version: u32,
    pub session_id: String,
    pub player_id: String,
    pub created_at_ms: u64,
    pub prompt_version: String,
    pub persona_version: String,
    pub item_bank_version: String,
    pub backend: BackendKind,
    pub engine: EngineConfig,
    /// Present only for self-play sessions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulated: Option<SimulatedPlayerSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub game: GameSession,
    pub agents: Vec<AgentState>,
    pub perception: Vec<EncounterPerception>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Play,
    Assessment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "line", rename_all = "snake_case")]
enum Line {
    Header(ArchiveHeader),
    Event(Event),
    Chat { stage: Stage, record: ChatRecord },
    Snapshot(Snapshot),
    Assessment(AssessmentResult),
}

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{path}: unsupported archive format version {found} (expected {FORMAT_VERSION})")]
    Version { path: PathBuf, found: u32 },
    #[error("{path}: {message}")]
    Structure { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ArchiveError + '_ {
    move |source| ArchiveError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Identity of an assessment cell for idempotent re-runs.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ResultKey {
    pub method: AssessmentMethod,
    pub condition: Condition,
    pub bundle: ChannelBundle,
    pub model_id: String,
}

impl ResultKey {
    pub fn of(r: &AssessmentResult) -> Self {
        Self {
            method: r.method,
            condition: r.condition,
            bundle: r.bundle,
            model_id: r.model_id.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionArchive {
    pub header: ArchiveHeader,
    pub events: Vec<Event>,
    pub chats: Vec<(Stage, ChatRecord)>,
    pub snapshot: Snapshot,
    pub assessments: Vec<AssessmentResult>,
}

impl SessionArchive {
    pub fn from_runtime(rt: &SessionRuntime, simulated: Option<SimulatedPlayerSpec>) -> Self {
        let assets = rt.assets();
        Self {
            header: ArchiveHeader {
                format_version: FORMAT_VERSION,
                session_id: rt.game.session_id.clone(),
                player_id: rt.game.player_id.clone(),
                created_at_ms: rt.game.created_at_ms,
                prompt_version: assets.catalog.version.clone(),
                persona_version: assets.personas.version.clone(),
                item_bank_version: assets.bank.version.clone(),
                backend: rt.client().backend_kind(),
                engine: rt.config().clone(),
                simulated,
            },
            events: rt.events.clone(),
            chats: rt.client().records().into_iter().map(|r| (Stage::Play, r)).collect(),
            snapshot: Snapshot {
                game: rt.game.clone(),
                agents: rt.agents.clone(),
                perception: rt.perception.clone(),
            },
            assessments: Vec::new(),
        }
    }

    pub fn file_name(session_id: &str) -> String {
        format!("{session_id}.jsonl")
    }

    fn lines(&self) -> Vec<Line> {
        let mut out = vec![Line::Header(self.header.clone())];
        out.extend(self.events.iter().cloned().map(Line::Event));
        out.extend(
            self.chats
                .iter()
                .filter(|(s, _)| *s == Stage::Play)
                .map(|(stage, record)| Line::Chat {
                    stage: *stage,
                    record: record.clone(),
                }),
        );
        out.push(Line::Snapshot(self.snapshot.clone()));
        out.extend(
            self.chats
                .iter()
                .filter(|(s, _)| *s == Stage::Assessment)
                .map(|(stage, record)| Line::Chat {
                    stage: *stage,
                    record: record.clone(),
                }),
        );
        out.extend(self.assessments.iter().cloned().map(Line::Assessment));
        out
    }

    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for line in self.lines() {
            s.push_str(&serde_json::to_string(&line).expect("archive line serializes"));
            s.push('\n');
        }
        s
    }

    /// Writes the archive, replacing any file at `path`.
    pub fn write(&self, path: &Path) -> Result<(), ArchiveError> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        let tmp = path.with_extension("jsonl.tmp");
        fs::write(&tmp, self.to_jsonl()).map_err(io_err(&tmp))?;
        fs::rename(&tmp, path).map_err(io_err(path))
    }

    pub fn read(path: &Path) -> Result<Self, ArchiveError> {
        let file = File::open(path).map_err(io_err(path))?;
        let structure = |message: String| ArchiveError::Structure {
            path: path.to_path_buf(),
            message,
        };
        let mut header = None;
        let mut snapshot = None;
        let mut events = Vec::new();
        let mut chats = Vec::new();
        let mut assessments = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(io_err(path))?;
            if line.trim().is_empty() {
                continue;
            }
            if i == 0 {
                let v: serde_json::Value = serde_json::from_str(&line).map_err(|e| ArchiveError::Parse {
                    path: path.to_path_buf(),
                    line: 1,
                    message: e.to_string(),
                })?;
                let found = v.get("format_version").and_then(|x| x.as_u64()).unwrap_or(0) as u32;
                if found != FORMAT_VERSION {
                    return Err(ArchiveError::Version {
                        path: path.to_path_buf(),
                        found,
                    });
                }
            }
            let parsed: Line = serde_json::from_str(&line).map_err(|e| ArchiveError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
            match parsed {
                Line::Header(h) if i == 0 => header = Some(h),
                Line::Header(_) => return Err(structure(format!("second header on line {}", i + 1))),
                _ if header.is_none() => return Err(structure("first line is not a header".into())),
                Line::Event(e) => events.push(e),
                Line::Chat { stage, record } => chats.push((stage, record)),
                Line::Snapshot(s) if snapshot.is_none() => snapshot = Some(s),
                Line::Snapshot(_) => return Err(structure(format!("second snapshot on line {}", i + 1))),
                Line::Assessment(a) => assessments.push(a),
            }
        }
        let header = header.ok_or_else(|| structure("archive is empty".into()))?;
        let snapshot = snapshot.ok_or_else(|| structure("archive has no snapshot".into()))?;
        if snapshot.game.session_id != header.session_id {
            return Err(structure("snapshot and header disagree on the session id".into()));
        }
        Ok(Self {
            header,
            events,
            chats,
            snapshot,
            assessments,
        })
    }

    /// Appends assessment calls and results to the file at `path` and to
    /// this in-memory copy.
    pub fn append_assessments(
        &mut self,
        path: &Path,
        records: Vec<ChatRecord>,
        results: Vec<AssessmentResult>,
    ) -> Result<(), ArchiveError> {
        let file = OpenOptions::new().append(true).open(path).map_err(io_err(path))?;
        let mut w = BufWriter::new(file);
        let mut write = |line: &Line| -> Result<(), ArchiveError> {
            let s = serde_json::to_string(line).expect("archive line serializes");
            writeln!(w, "{s}").map_err(io_err(path))
        };
        for record in &records {
            write(&Line::Chat {
                stage: Stage::Assessment,
                record: record.clone(),
            })?;
        }
        for r in &results {
            write(&Line::Assessment(r.clone()))?;
        }
        w.flush().map_err(io_err(path))?;
        self.chats.extend(records.into_iter().map(|r| (Stage::Assessment, r)));
        self.assessments.extend(results);
        Ok(())
    }

    pub fn records(&self) -> Vec<EncounterRecord> {
        let s = &self.snapshot;
        s.game
            .encounters
            .iter()
            .enumerate()
            .map(|(i, e)| EncounterRecord {
                encounter: e.clone(),
                memories: s.agents.get(i).map(|a| a.memories.clone()).unwrap_or_default(),
                traits: s.perception.get(i).map(|p| p.traits.clone()).unwrap_or_default(),
                emotions: s.perception.get(i).map(|p| p.emotions.clone()).unwrap_or_default(),
            })
            .collect()
    }

    pub fn chat_records(&self) -> Vec<ChatRecord> {
        self.chats.iter().map(|(_, r)| r.clone()).collect()
    }

    pub fn result_keys(&self) -> BTreeSet<ResultKey> {
        self.assessments.iter().map(ResultKey::of).collect()
    }

    pub fn is_complete(&self) -> bool {
        self.snapshot.game.status == SessionStatus::Completed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub session_id: String,
    pub player_id: String,
    pub file: String,
    pub status: SessionStatus,
    pub simulated: bool,
    pub assessments: usize,
}

/// Archive files in `dir`, sorted by name.
pub fn archive_files(dir: &Path) -> Result<Vec<PathBuf>, ArchiveError> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        let is_archive = path.extension().is_some_and(|e| e == "jsonl")
            && path.file_name().is_some_and(|n| n != INDEX_FILE);
        if is_archive {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Rebuilds `index.jsonl` from the archives in `dir`.
pub fn rebuild_index(dir: &Path) -> Result<Vec<IndexEntry>, ArchiveError> {
    let mut entries = Vec::new();
    for path in archive_files(dir)? {
        let a = SessionArchive::read(&path)?;
        entries.push(IndexEntry {
            session_id: a.header.session_id.clone(),
            player_id: a.header.player_id.clone(),
            file: path.file_name().unwrap().to_string_lossy().into_owned(),
            status: a.snapshot.game.status,
            simulated: a.header.simulated.is_some(),
            assessments: a.assessments.len(),
        });
    }
    let mut text = String::new();
    for e in &entries {
        text.push_str(&serde_json::to_string(e).expect("index entry serializes"));
        text.push('\n');
    }
    let path = dir.join(INDEX_FILE);
    fs::write(&path, text).map_err(io_err(&path))?;
    Ok(entries)
}
