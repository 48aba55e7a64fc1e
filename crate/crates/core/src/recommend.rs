//! Rule-based alerts for the class overview and template messages describing
//! each flat cluster.
//!
//! The rule catalog, thresholds and wording are placeholders chosen for this
//! tool; every threshold can be overridden through [`AlertConfig`].

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{median, student_score};
use crate::clustering::ClusterAssignment;
use crate::domain::{class_progress, ActivityEvent, ActivitySpec, FeatureMatrix, QuestionStatus};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RecommendError {
    #[error("rule `{rule}`: {reason}")]
    InvalidThreshold { rule: String, reason: String },
    #[error("assignment has {assignment} rows, feature matrix has {features}")]
    Misaligned { assignment: usize, features: usize },
    #[error("feature matrix carries no knowledge-component columns")]
    NoKcColumns,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlertKind {
    /// The student's last `length` first-responses were all incorrect.
    WrongStreak { length: usize },
    /// The student has used at least `hints` hints in total.
    HintHeavy { hints: u64 },
    /// More than `fraction` of the students who answered a question got it
    /// wrong on the first try, with at least `min_answers` answers.
    ClassStruggle { fraction: f64, min_answers: usize },
    /// Median class score below `percent`, once `min_scores` students have
    /// a score.
    LowMedian { percent: f64, min_scores: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertRule {
    pub id: String,
    #[serde(flatten)]
    pub kind: AlertKind,
    #[serde(default = "enabled_default")]
    pub enabled: bool,
}

fn enabled_default() -> bool {
    true
}

impl AlertRule {
    pub fn validate(&self) -> Result<(), RecommendError> {
        let bad = |reason: &str| {
            Err(RecommendError::InvalidThreshold {
                rule: self.id.clone(),
                reason: reason.to_owned(),
            })
        };
        match self.kind {
            AlertKind::WrongStreak { length: 0 } => bad("streak length must be positive"),
            AlertKind::HintHeavy { hints: 0 } => bad("hint count must be positive"),
            AlertKind::ClassStruggle { fraction, min_answers } => {
                if !(fraction.is_finite() && fraction > 0.0 && fraction <= 1.0) {
                    bad("fraction must lie in (0, 1]")
                } else if min_answers == 0 {
                    bad("minimum answers must be positive")
                } else {
                    Ok(())
                }
            }
            AlertKind::LowMedian { percent, min_scores } => {
                if percent.is_nan() || percent <= 0.0 {
                    bad("percentage must be positive")
                } else if min_scores == 0 {
                    bad("minimum scores must be positive")
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

/// Thresholds for the built-in rules, as they appear in the server config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlertConfig {
    pub wrong_streak: Option<usize>,
    pub hint_heavy: Option<u64>,
    pub class_struggle_fraction: Option<f64>,
    pub class_struggle_min_answers: usize,
    pub low_median_percent: Option<f64>,
    pub low_median_min_scores: usize,
}

impl Default for AlertConfig {
    fn default() -> Self {
        AlertConfig {
            wrong_streak: Some(3),
            hint_heavy: Some(5),
            class_struggle_fraction: Some(0.5),
            class_struggle_min_answers: 3,
            low_median_percent: Some(60.0),
            low_median_min_scores: 5,
        }
    }
}

impl AlertConfig {
    /// Expands into rules; a `None` threshold disables that rule.
    pub fn rules(&self) -> Result<Vec<AlertRule>, RecommendError> {
        let rules = vec![
            AlertRule {
                id: "wrong_streak".into(),
                kind: AlertKind::WrongStreak {
                    length: self.wrong_streak.unwrap_or(3),
                },
                enabled: self.wrong_streak.is_some(),
            },
            AlertRule {
                id: "hint_heavy".into(),
                kind: AlertKind::HintHeavy {
                    hints: self.hint_heavy.unwrap_or(5),
                },
                enabled: self.hint_heavy.is_some(),
            },
            AlertRule {
                id: "class_struggle".into(),
                kind: AlertKind::ClassStruggle {
                    fraction: self.class_struggle_fraction.unwrap_or(0.5),
                    min_answers: self.class_struggle_min_answers,
                },
                enabled: self.class_struggle_fraction.is_some(),
            },
            AlertRule {
                id: "low_median".into(),
                kind: AlertKind::LowMedian {
                    percent: self.low_median_percent.unwrap_or(60.0),
                    min_scores: self.low_median_min_scores,
                },
                enabled: self.low_median_percent.is_some(),
            },
        ];
        for r in &rules {
            r.validate()?;
        }
        Ok(rules)
    }
}

pub fn default_rules() -> Vec<AlertRule> {
    AlertConfig::default().rules().expect("defaults are valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Info,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", content = "id", rename_all = "snake_case")]
pub enum Subject {
    Student(String),
    Question(String),
    Class,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alert {
    pub rule_id: String,
    pub severity: Severity,
    pub subject: Subject,
    pub message: String,
    pub first_seen: u64,
    pub last_seen: u64,
}

struct Firing {
    severity: Severity,
    subject: Subject,
    message: String,
}

/// Evaluates every enabled rule against the log.
///
/// Alerts are keyed by (rule, subject): one that was already in
/// `previous` keeps its `first_seen` and gets `last_seen` moved to the
/// current high-water seq. Alerts that no longer fire are dropped.
pub fn evaluate_alerts(
    log: &[ActivityEvent],
    spec: &ActivitySpec,
    rules: &[AlertRule],
    previous: &[Alert],
) -> Vec<Alert> {
    let seq = log.last().map_or(0, |e| e.seq);
    let progress = class_progress(log, spec);
    let name = |id: &str| spec.display_name(id).unwrap_or(id).to_owned();

    let mut firings = Vec::new();
    for rule in rules.iter().filter(|r| r.enabled) {
        match rule.kind {
            AlertKind::WrongStreak { length } => {
                for p in &progress {
                    let mut firsts: Vec<(u64, bool)> = p
                        .questions
                        .iter()
                        .filter_map(|q| {
                            q.first_response_seq
                                .map(|s| (s, q.status == QuestionStatus::AnsweredCorrect))
                        })
                        .collect();
                    if firsts.len() < length {
                        continue;
                    }
                    firsts.sort_unstable();
                    if firsts[firsts.len() - length..].iter().all(|&(_, ok)| !ok) {
                        firings.push((
                            rule,
                            Firing {
                                severity: Severity::Warning,
                                subject: Subject::Student(p.student_id.clone()),
                                message: format!(
                                    "{} answered the last {length} questions incorrectly on the first try.",
                                    name(&p.student_id)
                                ),
                            },
                        ));
                    }
                }
            }
            AlertKind::HintHeavy { hints } => {
                for p in &progress {
                    let used = p.total_hints();
                    if used >= hints {
                        firings.push((
                            rule,
                            Firing {
                                severity: Severity::Info,
                                subject: Subject::Student(p.student_id.clone()),
                                message: format!("{} has used {used} hints so far.", name(&p.student_id)),
                            },
                        ));
                    }
                }
            }
            AlertKind::ClassStruggle { fraction, min_answers } => {
                for (qi, q) in spec.questions().iter().enumerate() {
                    let (mut answered, mut wrong) = (0usize, 0usize);
                    for p in &progress {
                        match p.questions[qi].status {
                            QuestionStatus::Unattempted => {}
                            QuestionStatus::AnsweredCorrect => answered += 1,
                            QuestionStatus::AnsweredIncorrect => {
                                answered += 1;
                                wrong += 1;
                            }
                        }
                    }
                    if answered >= min_answers && wrong as f64 > fraction * answered as f64 {
                        let kc = spec
                            .kcs()
                            .iter()
                            .find(|k| k.id == q.kc_id)
                            .map_or(q.kc_id.as_str(), |k| k.name.as_str());
                        firings.push((
                            rule,
                            Firing {
                                severity: Severity::Warning,
                                subject: Subject::Question(q.id.clone()),
                                message: format!(
                                    "{wrong} of {answered} students answered question {} ({kc}) incorrectly.",
                                    q.id
                                ),
                            },
                        ));
                    }
                }
            }
            AlertKind::LowMedian { percent, min_scores } => {
                let scores: Vec<f64> = progress.iter().filter_map(student_score).collect();
                if scores.len() >= min_scores {
                    if let Some(m) = median(&scores).filter(|&m| m < percent) {
                        firings.push((
                            rule,
                            Firing {
                                severity: Severity::Warning,
                                subject: Subject::Class,
                                message: format!(
                                    "The median class score is {m:.0}%, below {percent:.0}%. Consider revisiting the material."
                                ),
                            },
                        ));
                    }
                }
            }
        }
    }

    let previous: HashMap<(&str, &Subject), &Alert> =
        previous.iter().map(|a| ((a.rule_id.as_str(), &a.subject), a)).collect();
    firings
        .into_iter()
        .map(|(rule, f)| {
            let first_seen = previous
                .get(&(rule.id.as_str(), &f.subject))
                .map_or(seq, |a| a.first_seen);
            Alert {
                rule_id: rule.id.clone(),
                severity: f.severity,
                subject: f.subject,
                message: f.message,
                first_seen,
                last_seen: seq,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClusterRecommendation {
    pub cluster: usize,
    pub members: Vec<String>,
    pub member_names: Vec<String>,
    pub dominant_incorrect_kc: Option<String>,
    pub dominant_hint_kc: Option<String>,
    pub message: String,
}

/// KC with the largest total; ties go to the alphabetically first KC name.
/// `None` when every total is zero.
fn dominant(totals: &[u64], names: &[String]) -> Option<usize> {
    totals
        .iter()
        .enumerate()
        .filter(|(_, &t)| t > 0)
        .max_by(|(i, a), (j, b)| a.cmp(b).then_with(|| names[*j].cmp(&names[*i])))
        .map(|(i, _)| i)
}

/// One recommendation per cluster, in cluster order.
///
/// Rows of `assignment` must align with rows of `fm`, which must come from
/// [`crate::domain::extract_features`].
pub fn describe_clusters(
    assignment: &ClusterAssignment,
    fm: &FeatureMatrix,
    spec: &ActivitySpec,
) -> Result<Vec<ClusterRecommendation>, RecommendError> {
    if assignment.n() != fm.n_rows() {
        return Err(RecommendError::Misaligned {
            assignment: assignment.n(),
            features: fm.n_rows(),
        });
    }
    if fm.kc_ids().is_empty() && fm.n_cols() > 0 {
        return Err(RecommendError::NoKcColumns);
    }
    let kc_names: Vec<String> = fm
        .kc_ids()
        .iter()
        .map(|id| {
            spec.kc_position(id)
                .map_or_else(|| id.clone(), |k| spec.kcs()[k].name.clone())
        })
        .collect();

    let recs = assignment
        .clusters()
        .into_iter()
        .enumerate()
        .map(|(c, rows)| {
            let mut incorrect = vec![0u64; kc_names.len()];
            let mut hints = vec![0u64; kc_names.len()];
            for &r in &rows {
                for k in 0..kc_names.len() {
                    incorrect[k] += fm.value(r, fm.incorrect_column(k)) as u64;
                    hints[k] += fm.value(r, fm.hints_column(k)) as u64;
                }
            }
            let members: Vec<String> = rows.iter().map(|&r| fm.students()[r].clone()).collect();
            let member_names: Vec<String> = members
                .iter()
                .map(|id| spec.display_name(id).unwrap_or(id).to_owned())
                .collect();
            let dom_i = dominant(&incorrect, &kc_names);
            let dom_h = dominant(&hints, &kc_names);
            let group = c + 1;
            let who = member_names.join(", ");
            let message = match (dom_i, dom_h) {
                (None, None) => format!("Group {group} ({who}) shows no difficulties so far."),
                _ => {
                    let kc_i = dom_i.map_or("none", |k| kc_names[k].as_str());
                    let kc_h = dom_h.map_or("none", |k| kc_names[k].as_str());
                    let review = dom_i.or(dom_h).map(|k| kc_names[k].as_str()).unwrap_or_default();
                    format!(
                        "Group {group} ({who}): most incorrect answers in {kc_i}; most hints used in {kc_h}. Consider targeted review of {review}."
                    )
                }
            };
            ClusterRecommendation {
                cluster: c,
                members,
                member_names,
                dominant_incorrect_kc: dom_i.map(|k| fm.kc_ids()[k].clone()),
                dominant_hint_kc: dom_h.map(|k| fm.kc_ids()[k].clone()),
                message,
            }
        })
        .collect();
    Ok(recs)
}
