//! Students, knowledge components, questions, activity events and the
//! feature vectors extracted from an event log.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DomainError {
    #[error("activity has an empty roster")]
    EmptyRoster,
    #[error("knowledge component `{0}` declared more than once")]
    DuplicateKc(String),
    #[error("knowledge component `{0}` has an empty name")]
    EmptyKcName(String),
    #[error("question `{0}` declared more than once")]
    DuplicateQuestion(String),
    #[error("question `{question}` references undeclared knowledge component `{kc}`")]
    UndeclaredKc { question: String, kc: String },
    #[error("student `{0}` appears more than once in the roster")]
    DuplicateStudent(String),
    #[error("unknown student `{0}`")]
    UnknownStudent(String),
    #[error("unknown question `{0}`")]
    UnknownQuestion(String),
    #[error("question `{question}` belongs to `{expected}`, event says `{got}`")]
    KcMismatch {
        question: String,
        expected: String,
        got: String,
    },
    #[error("hint ordinal must be positive")]
    ZeroHintOrdinal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeComponent {
    pub id: String,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub kc_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Student {
    pub id: String,
    pub display_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct RawSpec {
    kcs: Vec<KnowledgeComponent>,
    questions: Vec<Question>,
    roster: Vec<Student>,
}

/// The questions of one in-class activity, the knowledge components they are
/// tagged with, and the class roster.
///
/// Always validated: construct through [`ActivitySpec::new`] (or serde, which
/// goes through the same checks).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct ActivitySpec {
    kcs: Vec<KnowledgeComponent>,
    questions: Vec<Question>,
    roster: Vec<Student>,
    kc_index: HashMap<String, usize>,
    question_index: HashMap<String, usize>,
    student_index: HashMap<String, usize>,
}

impl TryFrom<RawSpec> for ActivitySpec {
    type Error = DomainError;

    fn try_from(raw: RawSpec) -> Result<Self, Self::Error> {
        ActivitySpec::new(raw.kcs, raw.questions, raw.roster)
    }
}

impl From<ActivitySpec> for RawSpec {
    fn from(spec: ActivitySpec) -> Self {
        RawSpec {
            kcs: spec.kcs,
            questions: spec.questions,
            roster: spec.roster,
        }
    }
}

impl ActivitySpec {
    /// Validates uniqueness of every id and that each question points at a
    /// declared KC. An empty roster is accepted here; feature extraction
    /// rejects it.
    pub fn new(
        kcs: Vec<KnowledgeComponent>,
        questions: Vec<Question>,
        roster: Vec<Student>,
    ) -> Result<Self, DomainError> {
        let mut kc_index = HashMap::with_capacity(kcs.len());
        for (i, kc) in kcs.iter().enumerate() {
            if kc.name.is_empty() {
                return Err(DomainError::EmptyKcName(kc.id.clone()));
            }
            if kc_index.insert(kc.id.clone(), i).is_some() {
                return Err(DomainError::DuplicateKc(kc.id.clone()));
            }
        }
        let mut question_index = HashMap::with_capacity(questions.len());
        for (i, q) in questions.iter().enumerate() {
            if !kc_index.contains_key(&q.kc_id) {
                return Err(DomainError::UndeclaredKc {
                    question: q.id.clone(),
                    kc: q.kc_id.clone(),
                });
            }
            if question_index.insert(q.id.clone(), i).is_some() {
                return Err(DomainError::DuplicateQuestion(q.id.clone()));
            }
        }
        let mut student_index = HashMap::with_capacity(roster.len());
        for (i, s) in roster.iter().enumerate() {
            if student_index.insert(s.id.clone(), i).is_some() {
                return Err(DomainError::DuplicateStudent(s.id.clone()));
            }
        }
        Ok(ActivitySpec {
            kcs,
            questions,
            roster,
            kc_index,
            question_index,
            student_index,
        })
    }

    pub fn kcs(&self) -> &[KnowledgeComponent] {
        &self.kcs
    }

    pub fn questions(&self) -> &[Question] {
        &self.questions
    }

    pub fn roster(&self) -> &[Student] {
        &self.roster
    }

    pub fn kc_position(&self, kc_id: &str) -> Option<usize> {
        self.kc_index.get(kc_id).copied()
    }

    pub fn question_position(&self, question_id: &str) -> Option<usize> {
        self.question_index.get(question_id).copied()
    }

    pub fn student_position(&self, student_id: &str) -> Option<usize> {
        self.student_index.get(student_id).copied()
    }

    /// Position of the KC a question is tagged with.
    pub fn question_kc(&self, question_id: &str) -> Option<usize> {
        self.question_position(question_id)
            .and_then(|q| self.kc_position(&self.questions[q].kc_id))
    }

    pub fn display_name(&self, student_id: &str) -> Option<&str> {
        self.student_position(student_id)
            .map(|i| self.roster[i].display_name.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    Response { correct: bool },
    Hint { ordinal: u32 },
}

/// One student action, as stored in the stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityEvent {
    pub seq: u64,
    /// Milliseconds since the first event of the stream.
    pub timestamp_ms: u64,
    pub student_id: String,
    pub question_id: String,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl ActivityEvent {
    pub fn validate(&self, spec: &ActivitySpec) -> Result<(), DomainError> {
        if spec.student_position(&self.student_id).is_none() {
            return Err(DomainError::UnknownStudent(self.student_id.clone()));
        }
        if spec.question_position(&self.question_id).is_none() {
            return Err(DomainError::UnknownQuestion(self.question_id.clone()));
        }
        if let EventKind::Hint { ordinal: 0 } = self.kind {
            return Err(DomainError::ZeroHintOrdinal);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InclusionPolicy {
    /// Only students with at least one event, in first-event order.
    #[default]
    ActiveOnly,
    /// Every roster student in roster order, silent ones as zero rows.
    FullRoster,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StudentFeatureVector {
    pub student_id: String,
    pub incorrect_per_kc: Vec<(String, u64)>,
    pub hints_per_kc: Vec<(String, u64)>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FeatureMatrixError {
    #[error("row {row} has {got} values, expected {expected}")]
    RaggedRow { row: usize, got: usize, expected: usize },
    #[error("{names} feature names for {kinds} feature kinds")]
    ColumnMismatch { names: usize, kinds: usize },
    #[error("{rows} rows for {students} students")]
    RowCount { rows: usize, students: usize },
    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
}

/// Students × features, row-major.
///
/// When produced by [`extract_features`] the columns are the per-KC incorrect
/// counts (in KC order) followed by the per-KC hint counts, and `kc_ids`
/// names those KCs. Matrices built directly with [`FeatureMatrix::new`] carry
/// no KC metadata.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureMatrix {
    students: Vec<String>,
    feature_names: Vec<String>,
    feature_kinds: Vec<FeatureKind>,
    values: Vec<Vec<f64>>,
    kc_ids: Vec<String>,
}

impl FeatureMatrix {
    pub fn new(
        students: Vec<String>,
        feature_names: Vec<String>,
        feature_kinds: Vec<FeatureKind>,
        values: Vec<Vec<f64>>,
    ) -> Result<Self, FeatureMatrixError> {
        if feature_names.len() != feature_kinds.len() {
            return Err(FeatureMatrixError::ColumnMismatch {
                names: feature_names.len(),
                kinds: feature_kinds.len(),
            });
        }
        if values.len() != students.len() {
            return Err(FeatureMatrixError::RowCount {
                rows: values.len(),
                students: students.len(),
            });
        }
        for (row, r) in values.iter().enumerate() {
            if r.len() != feature_names.len() {
                return Err(FeatureMatrixError::RaggedRow {
                    row,
                    got: r.len(),
                    expected: feature_names.len(),
                });
            }
            if let Some(col) = r.iter().position(|v| !v.is_finite()) {
                return Err(FeatureMatrixError::NonFinite { row, col });
            }
        }
        Ok(FeatureMatrix {
            students,
            feature_names,
            feature_kinds,
            values,
            kc_ids: Vec::new(),
        })
    }

    /// Per-KC count matrix in the [`extract_features`] column layout: each
    /// row holds the incorrect counts for `kc_ids` followed by the hint counts.
    pub fn from_kc_counts(
        students: Vec<String>,
        kc_ids: Vec<String>,
        values: Vec<Vec<f64>>,
    ) -> Result<Self, FeatureMatrixError> {
        let names = kc_ids
            .iter()
            .map(|id| format!("incorrect_{id}"))
            .chain(kc_ids.iter().map(|id| format!("hints_{id}")))
            .collect();
        let kinds = vec![FeatureKind::Numeric; 2 * kc_ids.len()];
        let mut fm = FeatureMatrix::new(students, names, kinds, values)?;
        fm.kc_ids = kc_ids;
        Ok(fm)
    }

    /// All-numeric matrix with generated column names.
    pub fn numeric(values: Vec<Vec<f64>>) -> Result<Self, FeatureMatrixError> {
        let p = values.first().map_or(0, Vec::len);
        let students = (0..values.len()).map(|i| i.to_string()).collect();
        let names = (0..p).map(|j| format!("x{j}")).collect();
        FeatureMatrix::new(students, names, vec![FeatureKind::Numeric; p], values)
    }

    pub fn n_rows(&self) -> usize {
        self.values.len()
    }

    pub fn n_cols(&self) -> usize {
        self.feature_names.len()
    }

    pub fn students(&self) -> &[String] {
        &self.students
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_kinds(&self) -> &[FeatureKind] {
        &self.feature_kinds
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[row][col]
    }

    /// KC ids behind the incorrect/hint column families; empty for matrices
    /// not produced by [`extract_features`].
    pub fn kc_ids(&self) -> &[String] {
        &self.kc_ids
    }

    pub fn incorrect_column(&self, kc: usize) -> usize {
        kc
    }

    pub fn hints_column(&self, kc: usize) -> usize {
        self.kc_ids.len() + kc
    }

    pub fn student_vector(&self, row: usize) -> StudentFeatureVector {
        let r = &self.values[row];
        let k = self.kc_ids.len();
        StudentFeatureVector {
            student_id: self.students[row].clone(),
            incorrect_per_kc: self
                .kc_ids
                .iter()
                .enumerate()
                .map(|(i, kc)| (kc.clone(), r[i] as u64))
                .collect(),
            hints_per_kc: self
                .kc_ids
                .iter()
                .enumerate()
                .map(|(i, kc)| (kc.clone(), r[k + i] as u64))
                .collect(),
        }
    }

    /// Applies `f(column, value)` to every cell.
    pub fn map_columns(&self, f: impl Fn(usize, f64) -> f64) -> Result<Self, FeatureMatrixError> {
        let values = self
            .values
            .iter()
            .map(|r| r.iter().enumerate().map(|(j, &v)| f(j, v)).collect())
            .collect();
        let mut out = FeatureMatrix::new(
            self.students.clone(),
            self.feature_names.clone(),
            self.feature_kinds.clone(),
            values,
        )?;
        out.kc_ids = self.kc_ids.clone();
        Ok(out)
    }
}

/// Counts incorrect responses and hints per KC for each included student.
///
/// Every `Response { correct: false }` counts, including repeats on the same
/// question. Events are assumed validated against `spec`; events that do not
/// resolve are ignored.
pub fn extract_features(
    log: &[ActivityEvent],
    spec: &ActivitySpec,
    policy: InclusionPolicy,
) -> Result<FeatureMatrix, DomainError> {
    if spec.roster().is_empty() {
        return Err(DomainError::EmptyRoster);
    }
    let k = spec.kcs().len();
    let n_roster = spec.roster().len();
    let mut counts = vec![vec![0u64; 2 * k]; n_roster];
    let mut first_seen: Vec<usize> = Vec::new();
    let mut seen = vec![false; n_roster];

    for ev in log {
        let (Some(s), Some(kc)) = (spec.student_position(&ev.student_id), spec.question_kc(&ev.question_id)) else {
            continue;
        };
        if !seen[s] {
            seen[s] = true;
            first_seen.push(s);
        }
        match ev.kind {
            EventKind::Response { correct: false } => counts[s][kc] += 1,
            EventKind::Response { correct: true } => {}
            EventKind::Hint { .. } => counts[s][k + kc] += 1,
        }
    }

    let order: Vec<usize> = match policy {
        InclusionPolicy::ActiveOnly => first_seen,
        InclusionPolicy::FullRoster => (0..n_roster).collect(),
    };
    let kc_ids = spec.kcs().iter().map(|kc| kc.id.clone()).collect();
    let students = order.iter().map(|&s| spec.roster()[s].id.clone()).collect();
    let values = order
        .iter()
        .map(|&s| counts[s].iter().map(|&c| c as f64).collect())
        .collect();
    Ok(FeatureMatrix::from_kc_counts(students, kc_ids, values).expect("counts are finite and rectangular"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionStatus {
    Unattempted,
    AnsweredCorrect,
    AnsweredIncorrect,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QuestionProgress {
    pub question_id: String,
    pub status: QuestionStatus,
    pub hints: u64,
    /// Seq of the first response, if any.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_response_seq: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StudentProgress {
    pub student_id: String,
    pub questions: Vec<QuestionProgress>,
}

impl StudentProgress {
    pub fn answered(&self) -> usize {
        self.questions
            .iter()
            .filter(|q| q.status != QuestionStatus::Unattempted)
            .count()
    }

    pub fn first_correct(&self) -> usize {
        self.questions
            .iter()
            .filter(|q| q.status == QuestionStatus::AnsweredCorrect)
            .count()
    }

    pub fn is_complete(&self) -> bool {
        self.questions.iter().all(|q| q.status != QuestionStatus::Unattempted)
    }

    pub fn total_hints(&self) -> u64 {
        self.questions.iter().map(|q| q.hints).sum()
    }
}

/// Per-question status for one student. The first response to a question
/// fixes its status; later responses do not change it.
pub fn student_progress(
    log: &[ActivityEvent],
    spec: &ActivitySpec,
    student_id: &str,
) -> Result<StudentProgress, DomainError> {
    if spec.student_position(student_id).is_none() {
        return Err(DomainError::UnknownStudent(student_id.to_owned()));
    }
    let mut questions: Vec<QuestionProgress> = spec
        .questions()
        .iter()
        .map(|q| QuestionProgress {
            question_id: q.id.clone(),
            status: QuestionStatus::Unattempted,
            hints: 0,
            first_response_seq: None,
        })
        .collect();
    for ev in log.iter().filter(|ev| ev.student_id == student_id) {
        let Some(q) = spec.question_position(&ev.question_id) else {
            continue;
        };
        let entry = &mut questions[q];
        match ev.kind {
            EventKind::Hint { .. } => entry.hints += 1,
            EventKind::Response { correct } => {
                if entry.status == QuestionStatus::Unattempted {
                    entry.status = if correct {
                        QuestionStatus::AnsweredCorrect
                    } else {
                        QuestionStatus::AnsweredIncorrect
                    };
                    entry.first_response_seq = Some(ev.seq);
                }
            }
        }
    }
    Ok(StudentProgress {
        student_id: student_id.to_owned(),
        questions,
    })
}

/// Progress for every roster student in roster order, in a single pass.
pub fn class_progress(log: &[ActivityEvent], spec: &ActivitySpec) -> Vec<StudentProgress> {
    let mut out: Vec<StudentProgress> = spec
        .roster()
        .iter()
        .map(|s| StudentProgress {
            student_id: s.id.clone(),
            questions: spec
                .questions()
                .iter()
                .map(|q| QuestionProgress {
                    question_id: q.id.clone(),
                    status: QuestionStatus::Unattempted,
                    hints: 0,
                    first_response_seq: None,
                })
                .collect(),
        })
        .collect();
    for ev in log {
        let (Some(s), Some(q)) = (
            spec.student_position(&ev.student_id),
            spec.question_position(&ev.question_id),
        ) else {
            continue;
        };
        let entry = &mut out[s].questions[q];
        match ev.kind {
            EventKind::Hint { .. } => entry.hints += 1,
            EventKind::Response { correct } => {
                if entry.status == QuestionStatus::Unattempted {
                    entry.status = if correct {
                        QuestionStatus::AnsweredCorrect
                    } else {
                        QuestionStatus::AnsweredIncorrect
                    };
                    entry.first_response_seq = Some(ev.seq);
                }
            }
        }
    }
    out
}

/// An event as it arrives, before the stream assigns seq and timestamp.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IncomingEvent {
    pub student_id: String,
    pub question_id: String,
    /// When present, must match the question's KC.
    pub kc_id: Option<String>,
    pub kind: IncomingKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IncomingKind {
    Response {
        correct: bool,
    },
    /// `None` lets the stream number the hint after the student's earlier
    /// hints on the same question.
    Hint {
        ordinal: Option<u32>,
    },
}

/// Append-only event stream for one activity. The only writer of `seq`.
#[derive(Debug, Clone)]
pub struct EventLog {
    spec: ActivitySpec,
    events: Vec<ActivityEvent>,
    epoch_ms: Option<u64>,
    hint_counts: HashMap<(usize, usize), u32>,
    active: HashSet<usize>,
}

impl EventLog {
    pub fn new(spec: ActivitySpec) -> Self {
        EventLog {
            spec,
            events: Vec::new(),
            epoch_ms: None,
            hint_counts: HashMap::new(),
            active: HashSet::new(),
        }
    }

    pub fn spec(&self) -> &ActivitySpec {
        &self.spec
    }

    pub fn events(&self) -> &[ActivityEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Highest assigned seq; 0 before the first event.
    pub fn high_water(&self) -> u64 {
        self.events.last().map_or(0, |e| e.seq)
    }

    pub fn active_students(&self) -> usize {
        self.active.len()
    }

    /// Validates and appends. `now_ms` is wall-clock milliseconds; the first
    /// accepted event defines the stream epoch. Rejected events leave the log
    /// untouched.
    pub fn ingest(&mut self, ev: IncomingEvent, now_ms: u64) -> Result<&ActivityEvent, DomainError> {
        let s = self
            .spec
            .student_position(&ev.student_id)
            .ok_or_else(|| DomainError::UnknownStudent(ev.student_id.clone()))?;
        let q = self
            .spec
            .question_position(&ev.question_id)
            .ok_or_else(|| DomainError::UnknownQuestion(ev.question_id.clone()))?;
        let expected = &self.spec.questions()[q].kc_id;
        if let Some(kc) = &ev.kc_id {
            if kc != expected {
                return Err(DomainError::KcMismatch {
                    question: ev.question_id,
                    expected: expected.clone(),
                    got: kc.clone(),
                });
            }
        }
        let kind = match ev.kind {
            IncomingKind::Response { correct } => EventKind::Response { correct },
            IncomingKind::Hint { ordinal: Some(0) } => return Err(DomainError::ZeroHintOrdinal),
            IncomingKind::Hint { ordinal } => {
                let count = self.hint_counts.entry((s, q)).or_insert(0);
                *count += 1;
                EventKind::Hint {
                    ordinal: ordinal.unwrap_or(*count),
                }
            }
        };
        let epoch = *self.epoch_ms.get_or_insert(now_ms);
        self.active.insert(s);
        let seq = self.high_water() + 1;
        self.events.push(ActivityEvent {
            seq,
            timestamp_ms: now_ms.saturating_sub(epoch),
            student_id: ev.student_id,
            question_id: ev.question_id,
            kind,
        });
        Ok(self.events.last().expect("just pushed"))
    }
}
