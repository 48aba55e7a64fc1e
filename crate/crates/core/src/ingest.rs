//! Activity files and timed replay.
//!
//! Two comma-separated layouts are understood: a generic one-row-per-event
//! layout and the ASSISTments skill-builder export, where one row is a
//! problem attempt carrying its correctness and hint count.

use std::collections::HashMap;
use std::fmt;
use std::io::Read;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use crate::domain::{ActivityEvent, ActivitySpec, EventKind, KnowledgeComponent, Question, Student};

/// Nominal spacing between replayed events.
pub const DEFAULT_GAP_MS: u64 = 1000;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("missing column `{0}`")]
    Schema(String),
    #[error("reading activity file: {0}")]
    Csv(#[from] csv::Error),
    #[error("unknown format `{0}` (expected generic or assistments)")]
    UnknownFormat(String),
    #[error("building activity: {0}")]
    Domain(#[from] crate::domain::DomainError),
}

/// A row that could not be used. Rows are numbered from 1 after the header.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowError {
    pub row: usize,
    pub message: String,
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "row {}: {}", self.row, self.message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Generic,
    Assistments,
}

impl FromStr for Format {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "generic" => Ok(Format::Generic),
            "assistments" => Ok(Format::Assistments),
            other => Err(IngestError::UnknownFormat(other.to_owned())),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Generic => "generic",
            Format::Assistments => "assistments",
        })
    }
}

/// Header names bound to each role.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMapping {
    pub format: Format,
    pub student: String,
    pub question: String,
    pub kc: String,
    pub correct: String,
    /// Generic only: `response` or `hint`.
    pub event_type: Option<String>,
    /// ASSISTments only: number of hints requested on the attempt.
    pub hint_count: Option<String>,
    /// Sort key. Optional for the generic layout, where file order is used
    /// when the column is absent.
    pub order: Option<String>,
}

impl ColumnMapping {
    pub fn generic() -> Self {
        ColumnMapping {
            format: Format::Generic,
            student: "student_id".into(),
            question: "question_id".into(),
            kc: "kc".into(),
            correct: "correct".into(),
            event_type: Some("event_type".into()),
            hint_count: None,
            order: Some("timestamp_ms".into()),
        }
    }

    pub fn assistments() -> Self {
        ColumnMapping {
            format: Format::Assistments,
            student: "user_id".into(),
            question: "problem_id".into(),
            kc: "skill_name".into(),
            correct: "correct".into(),
            event_type: None,
            hint_count: Some("hint_count".into()),
            order: Some("order_id".into()),
        }
    }

    pub fn for_format(format: Format) -> Self {
        match format {
            Format::Generic => ColumnMapping::generic(),
            Format::Assistments => ColumnMapping::assistments(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParsedActivity {
    pub spec: ActivitySpec,
    pub events: Vec<ActivityEvent>,
    pub row_errors: Vec<RowError>,
}

struct Columns {
    student: usize,
    question: usize,
    kc: usize,
    correct: usize,
    event_type: Option<usize>,
    hint_count: Option<usize>,
    order: Option<usize>,
}

impl Columns {
    fn resolve(headers: &csv::StringRecord, m: &ColumnMapping) -> Result<Self, IngestError> {
        let find = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| IngestError::Schema(name.to_owned()))
        };
        let required_opt = |name: &Option<String>, what: &str| match name {
            Some(n) => find(n).map(Some),
            None => Err(IngestError::Schema(what.to_owned())),
        };
        Ok(match m.format {
            Format::Generic => Columns {
                student: find(&m.student)?,
                question: find(&m.question)?,
                kc: find(&m.kc)?,
                correct: find(&m.correct)?,
                event_type: required_opt(&m.event_type, "event_type")?,
                hint_count: None,
                // the generic ordering column is optional
                order: m.order.as_deref().and_then(|n| find(n).ok()),
            },
            Format::Assistments => Columns {
                student: find(&m.student)?,
                question: find(&m.question)?,
                kc: find(&m.kc)?,
                correct: find(&m.correct)?,
                event_type: None,
                hint_count: required_opt(&m.hint_count, "hint_count")?,
                order: required_opt(&m.order, "order_id")?,
            },
        })
    }
}

/// Event content of one row before ordering.
struct Row {
    line: usize,
    order: Option<f64>,
    student: String,
    question: String,
    kc: String,
    kind: RowKind,
}

enum RowKind {
    Response(bool),
    Hint,
    /// ASSISTments attempt: a response followed by `hints` hint events.
    Attempt {
        correct: bool,
        hints: u32,
    },
}

fn parse_flag(raw: &str) -> Result<bool, String> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "1" | "true" => Ok(true),
        "0" | "false" => Ok(false),
        other => Err(format!("cannot read `{other}` as 0/1")),
    }
}

fn parse_row(rec: &csv::StringRecord, cols: &Columns, format: Format, line: usize) -> Result<Row, String> {
    let cell = |i: usize| rec.get(i).map(str::trim).unwrap_or("");
    let nonempty = |i: usize, what: &str| {
        let v = cell(i);
        if v.is_empty() {
            Err(format!("empty {what}"))
        } else {
            Ok(v.to_owned())
        }
    };
    let student = nonempty(cols.student, "student id")?;
    let question = nonempty(cols.question, "question id")?;
    let kc = nonempty(cols.kc, "knowledge component")?;
    let order = match cols.order {
        Some(i) if !(format == Format::Generic && cell(i).is_empty()) => Some(
            cell(i)
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("cannot read ordering key `{}`", cell(i)))?,
        ),
        _ => None,
    };
    let kind = match format {
        Format::Generic => {
            let et = cell(cols.event_type.expect("generic has event_type"));
            match et.to_ascii_lowercase().as_str() {
                "response" => RowKind::Response(parse_flag(cell(cols.correct))?),
                "hint" => RowKind::Hint,
                other => return Err(format!("unknown event_type `{other}`")),
            }
        }
        Format::Assistments => {
            let raw = cell(cols.correct);
            let correct = raw.parse::<f64>().map_err(|_| format!("cannot read correct `{raw}`"))? == 1.0;
            let raw_hints = cell(cols.hint_count.expect("assistments has hint_count"));
            let hints = raw_hints
                .parse::<u32>()
                .map_err(|_| format!("cannot read hint_count `{raw_hints}`"))?;
            RowKind::Attempt { correct, hints }
        }
    };
    Ok(Row {
        line,
        order,
        student,
        question,
        kc,
        kind,
    })
}

/// Reads an activity file into a synthesized spec and an ordered event list.
///
/// Rows are stably sorted by the ordering key. Unusable rows are skipped and
/// reported in [`ParsedActivity::row_errors`]; a missing column fails the
/// whole parse. Events get seq `1..` and nominal timestamps
/// [`DEFAULT_GAP_MS`] apart, except generic files with a `timestamp_ms`
/// column, which keep their timestamps relative to the earliest row.
pub fn parse_events<R: Read>(reader: R, mapping: &ColumnMapping) -> Result<ParsedActivity, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let cols = Columns::resolve(&headers, mapping)?;

    let mut rows = Vec::new();
    let mut row_errors = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 1;
        let parsed = rec
            .map_err(|e| e.to_string())
            .and_then(|rec| parse_row(&rec, &cols, mapping.format, line));
        match parsed {
            Ok(row) => rows.push(row),
            Err(message) => {
                warn!(row = line, %message, "skipping activity row");
                row_errors.push(RowError { row: line, message });
            }
        }
    }
    if mapping.format == Format::Generic && rows.iter().any(|r| r.order.is_none()) {
        // without a complete timestamp column, file order is the order
        rows.iter_mut().for_each(|r| r.order = None);
    }
    rows.sort_by(|a, b| match (a.order, b.order) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        _ => std::cmp::Ordering::Equal,
    });

    let mut kcs: Vec<KnowledgeComponent> = Vec::new();
    let mut kc_seen: HashMap<String, ()> = HashMap::new();
    let mut questions: Vec<Question> = Vec::new();
    let mut question_kc: HashMap<String, String> = HashMap::new();
    let mut roster: Vec<Student> = Vec::new();
    let mut student_seen: HashMap<String, ()> = HashMap::new();
    let mut hint_ordinals: HashMap<(String, String), u32> = HashMap::new();
    let mut events = Vec::new();
    let base_ts = rows.iter().filter_map(|r| r.order).reduce(f64::min).unwrap_or(0.0);
    let use_timestamps = mapping.format == Format::Generic && rows.iter().all(|r| r.order.is_some());

    for row in rows {
        if let Some(kc) = question_kc.get(&row.question) {
            if *kc != row.kc {
                let message = format!(
                    "question `{}` already tagged `{kc}`, row says `{}`",
                    row.question, row.kc
                );
                warn!(row = row.line, %message, "skipping activity row");
                row_errors.push(RowError { row: row.line, message });
                continue;
            }
        } else {
            question_kc.insert(row.question.clone(), row.kc.clone());
            questions.push(Question {
                id: row.question.clone(),
                kc_id: row.kc.clone(),
            });
        }
        if kc_seen.insert(row.kc.clone(), ()).is_none() {
            kcs.push(KnowledgeComponent {
                id: row.kc.clone(),
                name: row.kc.clone(),
            });
        }
        if student_seen.insert(row.student.clone(), ()).is_none() {
            roster.push(Student {
                id: row.student.clone(),
                display_name: row.student.clone(),
            });
        }

        let mut push = |kind: EventKind| {
            let seq = events.len() as u64 + 1;
            let timestamp_ms = if use_timestamps {
                (row.order.unwrap_or(base_ts) - base_ts).max(0.0) as u64
            } else {
                (seq - 1) * DEFAULT_GAP_MS
            };
            events.push(ActivityEvent {
                seq,
                timestamp_ms,
                student_id: row.student.clone(),
                question_id: row.question.clone(),
                kind,
            });
        };
        let mut next_hint = |student: &str, question: &str| {
            let c = hint_ordinals
                .entry((student.to_owned(), question.to_owned()))
                .or_insert(0);
            *c += 1;
            *c
        };
        match row.kind {
            RowKind::Response(correct) => push(EventKind::Response { correct }),
            RowKind::Hint => {
                let ordinal = next_hint(&row.student, &row.question);
                push(EventKind::Hint { ordinal });
            }
            RowKind::Attempt { correct, hints } => {
                push(EventKind::Response { correct });
                for _ in 0..hints {
                    let ordinal = next_hint(&row.student, &row.question);
                    push(EventKind::Hint { ordinal });
                }
            }
        }
    }

    let spec = ActivitySpec::new(kcs, questions, roster)?;
    Ok(ParsedActivity {
        spec,
        events,
        row_errors,
    })
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReplayError {
    #[error("replay speed must be positive and finite, got {0}")]
    InvalidSpeed(f64),
    #[error("sink rejected event {position} (seq {seq}): {reason}")]
    Rejected { position: usize, seq: u64, reason: String },
}

/// Events plus the schedule they are delivered on: event `i` is due at
/// `i · gap / speed` after the start.
#[derive(Debug, Clone)]
pub struct ReplayPlan {
    events: Vec<ActivityEvent>,
    gap_ms: u64,
    speed: f64,
}

impl ReplayPlan {
    pub fn new(events: Vec<ActivityEvent>, gap_ms: u64, speed: f64) -> Result<Self, ReplayError> {
        if !(speed > 0.0 && speed.is_finite()) {
            return Err(ReplayError::InvalidSpeed(speed));
        }
        Ok(ReplayPlan { events, gap_ms, speed })
    }

    pub fn with_defaults(events: Vec<ActivityEvent>) -> Self {
        ReplayPlan {
            events,
            gap_ms: DEFAULT_GAP_MS,
            speed: 1.0,
        }
    }

    pub fn events(&self) -> &[ActivityEvent] {
        &self.events
    }

    pub fn due(&self, i: usize) -> Duration {
        Duration::from_secs_f64(i as f64 * self.gap_ms as f64 / self.speed / 1000.0)
    }

    /// Due time of the last event.
    pub fn nominal_duration(&self) -> Duration {
        self.events.len().checked_sub(1).map_or(Duration::ZERO, |i| self.due(i))
    }
}

/// Receives replayed events. An `Err` aborts the replay.
pub trait EventSink {
    fn accept(&mut self, event: &ActivityEvent) -> Result<(), String>;
}

impl<F> EventSink for F
where
    F: FnMut(&ActivityEvent) -> Result<(), String>,
{
    fn accept(&mut self, event: &ActivityEvent) -> Result<(), String> {
        self(event)
    }
}

/// Time source for replay, so schedules can be tested without sleeping.
pub trait ReplayClock {
    /// Time since the replay started.
    fn elapsed(&self) -> Duration;
    fn sleep_until(&mut self, target: Duration);
}

pub struct SystemClock {
    start: Instant,
}

impl SystemClock {
    pub fn start() -> Self {
        SystemClock { start: Instant::now() }
    }
}

impl ReplayClock for SystemClock {
    fn elapsed(&self) -> Duration {
        self.start.elapsed()
    }

    fn sleep_until(&mut self, target: Duration) {
        let now = self.start.elapsed();
        if target > now {
            std::thread::sleep(target - now);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayReport {
    pub delivered: usize,
    pub nominal_duration_ms: f64,
    pub actual_duration_ms: f64,
    /// Largest lateness of a delivery against its due time.
    pub max_drift_ms: f64,
    pub mean_drift_ms: f64,
}

/// Delivers the plan's events in order, each no earlier than its due time.
pub fn replay<S: EventSink + ?Sized, C: ReplayClock + ?Sized>(
    plan: &ReplayPlan,
    sink: &mut S,
    clock: &mut C,
) -> Result<ReplayReport, ReplayError> {
    let mut max_drift = Duration::ZERO;
    let mut total_drift = Duration::ZERO;
    for (i, ev) in plan.events.iter().enumerate() {
        let due = plan.due(i);
        clock.sleep_until(due);
        let drift = clock.elapsed().saturating_sub(due);
        max_drift = max_drift.max(drift);
        total_drift += drift;
        sink.accept(ev).map_err(|reason| ReplayError::Rejected {
            position: i,
            seq: ev.seq,
            reason,
        })?;
    }
    let n = plan.events.len();
    Ok(ReplayReport {
        delivered: n,
        nominal_duration_ms: plan.nominal_duration().as_secs_f64() * 1000.0,
        actual_duration_ms: clock.elapsed().as_secs_f64() * 1000.0,
        max_drift_ms: max_drift.as_secs_f64() * 1000.0,
        mean_drift_ms: if n == 0 {
            0.0
        } else {
            total_drift.as_secs_f64() * 1000.0 / n as f64
        },
    })
}
