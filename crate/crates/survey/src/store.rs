//! Append-only judgment log with in-memory session views.
//!
//! The log is the source of truth: every session start and judgment is
//! appended as one JSON line and synced to disk before the caller is
//! acknowledged. Reopening a store replays the log.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use headcheck_core::Label;
use serde::{Deserialize, Serialize};

use crate::aggregate::{aggregate, SurveyAggregate};
use crate::error::{Result, SurveyError};
use crate::survey::Survey;

pub const SURVEY_FILE: &str = "survey.json";
pub const LOG_FILE: &str = "judgments.jsonl";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub session_id: String,
    pub headline_id: String,
    pub answer: Label,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogEvent {
    SessionStarted { session_id: String, survey_id: String, order: Vec<String>, timestamp: DateTime<Utc> },
    Judgment(Judgment),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub answered: usize,
    pub total: usize,
}

/// What a participant sees next. Deliberately has no label field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NextItem {
    Item { headline_id: String, text: String, progress: Progress },
    Done { done: bool, progress: Progress },
}

#[derive(Debug)]
struct Session {
    order: Vec<usize>,
    answered: Vec<bool>,
    count: usize,
}

#[derive(Debug, Default)]
struct Inner {
    log: Option<File>,
    events: Vec<LogEvent>,
    judgments: Vec<Judgment>,
    sessions: HashMap<String, Session>,
}

#[derive(Debug)]
pub struct SurveyStore {
    survey: Survey,
    index: HashMap<String, usize>,
    dir: Option<PathBuf>,
    inner: Mutex<Inner>,
}

impl SurveyStore {
    /// A store that keeps its log in memory only.
    pub fn in_memory(survey: Survey) -> SurveyStore {
        Self::with_inner(survey, None, Inner::default())
    }

    /// Writes `survey.json` into `dir` and starts an empty log there.
    pub fn create(dir: &Path, survey: Survey) -> Result<SurveyStore> {
        std::fs::create_dir_all(dir)?;
        let survey_path = dir.join(SURVEY_FILE);
        if survey_path.exists() {
            return Err(SurveyError::Config(format!("{} already exists", survey_path.display())));
        }
        let mut f = File::create(&survey_path)?;
        serde_json::to_writer_pretty(&mut f, &survey)?;
        f.write_all(b"\n")?;
        f.sync_all()?;
        let log = OpenOptions::new().create(true).append(true).open(dir.join(LOG_FILE))?;
        let inner = Inner { log: Some(log), ..Default::default() };
        Ok(Self::with_inner(survey, Some(dir.to_path_buf()), inner))
    }

    /// Loads `survey.json` and replays the judgment log in `dir`.
    pub fn open(dir: &Path) -> Result<SurveyStore> {
        let survey: Survey = serde_json::from_reader(BufReader::new(File::open(dir.join(SURVEY_FILE))?))?;
        let log_path = dir.join(LOG_FILE);
        let store = Self::with_inner(survey, Some(dir.to_path_buf()), Inner::default());
        {
            let mut inner = store.inner.lock().expect("store lock poisoned");
            if log_path.exists() {
                let (events, valid_len) = read_log(&log_path)?;
                for event in events {
                    store.apply(&mut inner, event)?;
                }
                // Drop a torn tail so the next append starts on a fresh line.
                OpenOptions::new().write(true).open(&log_path)?.set_len(valid_len)?;
            }
            inner.log = Some(OpenOptions::new().create(true).append(true).open(&log_path)?);
        }
        Ok(store)
    }

    fn with_inner(survey: Survey, dir: Option<PathBuf>, inner: Inner) -> SurveyStore {
        let index = survey.items.iter().enumerate().map(|(i, it)| (it.headline_id.clone(), i)).collect();
        SurveyStore { survey, index, dir, inner: Mutex::new(inner) }
    }

    pub fn survey(&self) -> &Survey {
        &self.survey
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn apply(&self, inner: &mut Inner, event: LogEvent) -> Result<()> {
        match &event {
            LogEvent::SessionStarted { session_id, order, .. } => {
                let order = order
                    .iter()
                    .map(|id| self.index.get(id).copied().ok_or_else(|| SurveyError::UnknownHeadline(id.clone())))
                    .collect::<Result<Vec<_>>>()?;
                let n = self.survey.items.len();
                inner.sessions.insert(session_id.clone(), Session { order, answered: vec![false; n], count: 0 });
            }
            LogEvent::Judgment(j) => {
                let idx = *self.index.get(&j.headline_id).ok_or_else(|| SurveyError::UnknownHeadline(j.headline_id.clone()))?;
                let session = inner
                    .sessions
                    .get_mut(&j.session_id)
                    .ok_or_else(|| SurveyError::UnknownSession(j.session_id.clone()))?;
                if session.answered[idx] {
                    return Err(SurveyError::AlreadyAnswered);
                }
                session.answered[idx] = true;
                session.count += 1;
                inner.judgments.push(j.clone());
            }
        }
        inner.events.push(event);
        Ok(())
    }

    fn persist(inner: &mut Inner, event: &LogEvent) -> Result<()> {
        if let Some(log) = inner.log.as_mut() {
            let mut line = serde_json::to_vec(event)?;
            line.push(b'\n');
            log.write_all(&line)?;
            log.sync_data()?;
        }
        Ok(())
    }

    pub fn start_session(&self) -> Result<(String, Progress)> {
        let session_id = uuid::Uuid::new_v4().simple().to_string();
        self.start_session_with_id(&session_id)?;
        Ok((session_id, Progress { answered: 0, total: self.survey.len() }))
    }

    /// Starts a session under a caller-chosen token. Used by scripted runs.
    pub fn start_session_with_id(&self, session_id: &str) -> Result<()> {
        let order = self.survey.session_order(session_id);
        let event = LogEvent::SessionStarted {
            session_id: session_id.to_string(),
            survey_id: self.survey.id.clone(),
            order: order.iter().map(|i| self.survey.items[*i].headline_id.clone()).collect(),
            timestamp: Utc::now(),
        };
        let mut inner = self.inner.lock().expect("store lock poisoned");
        if inner.sessions.contains_key(session_id) {
            return Err(SurveyError::Validation(format!("session `{session_id}` already exists")));
        }
        Self::persist(&mut inner, &event)?;
        self.apply(&mut inner, event)
    }

    pub fn next_item(&self, session_id: &str) -> Result<NextItem> {
        let inner = self.inner.lock().expect("store lock poisoned");
        let session = inner.sessions.get(session_id).ok_or_else(|| SurveyError::UnknownSession(session_id.into()))?;
        let progress = Progress { answered: session.count, total: self.survey.len() };
        Ok(match session.order.iter().find(|i| !session.answered[**i]) {
            Some(&i) => {
                let item = &self.survey.items[i];
                NextItem::Item { headline_id: item.headline_id.clone(), text: item.text.clone(), progress }
            }
            None => NextItem::Done { done: true, progress },
        })
    }

    /// Validates and durably records one answer.
    pub fn record_judgment(&self, session_id: &str, headline_id: &str, answer: &str) -> Result<Progress> {
        let answer: Label = answer
            .parse()
            .map_err(|_| SurveyError::Validation(format!("answer must be `real` or `generated`, got `{answer}`")))?;
        let idx = *self.index.get(headline_id).ok_or_else(|| SurveyError::UnknownHeadline(headline_id.into()))?;
        let mut inner = self.inner.lock().expect("store lock poisoned");
        let session = inner.sessions.get(session_id).ok_or_else(|| SurveyError::UnknownSession(session_id.into()))?;
        if session.answered[idx] {
            return Err(SurveyError::AlreadyAnswered);
        }
        let event = LogEvent::Judgment(Judgment {
            session_id: session_id.to_string(),
            headline_id: headline_id.to_string(),
            answer,
            timestamp: Utc::now(),
        });
        Self::persist(&mut inner, &event)?;
        self.apply(&mut inner, event)?;
        let answered = inner.sessions[session_id].count;
        Ok(Progress { answered, total: self.survey.len() })
    }

    pub fn judgments(&self) -> Vec<Judgment> {
        self.inner.lock().expect("store lock poisoned").judgments.clone()
    }

    pub fn events(&self) -> Vec<LogEvent> {
        self.inner.lock().expect("store lock poisoned").events.clone()
    }

    pub fn session_count(&self) -> usize {
        self.inner.lock().expect("store lock poisoned").sessions.len()
    }

    /// Aggregates over a consistent snapshot of the log.
    pub fn aggregate(&self, threshold: f64) -> SurveyAggregate {
        let snapshot = self.judgments();
        aggregate(&self.survey, &snapshot, threshold)
    }
}

/// Reads a judgment log, returning its events and the byte length of the
/// well-formed prefix. A torn final line (no trailing newline) is ignored.
pub fn read_log(path: &Path) -> Result<(Vec<LogEvent>, u64)> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut events = Vec::new();
    let mut line = String::new();
    let mut line_no = 0;
    let mut valid_len = 0u64;
    loop {
        line.clear();
        let n = reader.read_line(&mut line)?;
        if n == 0 {
            break;
        }
        line_no += 1;
        let complete = line.ends_with('\n');
        if !complete {
            if let Ok(e) = serde_json::from_str(line.trim_end()) {
                events.push(e);
                valid_len += n as u64;
            }
            break;
        }
        valid_len += n as u64;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line.trim_end()) {
            Ok(e) => events.push(e),
            Err(e) => return Err(SurveyError::CorruptLog { line: line_no, reason: e.to_string() }),
        }
    }
    Ok((events, valid_len))
}
