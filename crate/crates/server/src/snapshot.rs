//! The versioned analytics snapshot and the pure recompute that builds it.

use std::sync::Arc;

use classroom_core::analytics::{
    compute_kpis, kc_summary, kc_summary_for_rows, progress_rows, score_histogram, student_score, KcSummary,
    KpiSnapshot, ProgressRow, ScoreHistogram,
};
use classroom_core::clustering::{
    choose_k, cut_tree, fit_all, gower_dissimilarity, select_model, ClusterAssignment, ClusteringError, DendrogramWire,
    Linkage,
};
use classroom_core::domain::{class_progress, extract_features};
use classroom_core::recommend::{describe_clusters, evaluate_alerts, Alert, AlertRule, ClusterRecommendation};
use classroom_core::{ActivityEvent, ActivitySpec, FeatureMatrix, InclusionPolicy};
use serde::Serialize;

use crate::config::{AnalyticsConfig, KPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AbsentReason {
    InsufficientObservations,
    DegenerateFeatures,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSummary {
    pub linkage: Linkage,
    pub ac: f64,
    pub ac_degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterBreakdown {
    pub cluster: usize,
    pub members: Vec<String>,
    pub kc_summary: KcSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusteringResult {
    pub students: Vec<String>,
    pub models: Vec<ModelSummary>,
    pub selected: Linkage,
    pub dendrogram: DendrogramWire,
    pub assignment: ClusterAssignment,
    pub k: usize,
    pub k_policy: KPolicy,
    pub silhouette: Option<f64>,
    pub silhouette_scores: Vec<(usize, f64)>,
    pub clusters: Vec<ClusterBreakdown>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ClusteringView {
    Ready(Box<ClusteringResult>),
    Absent { reason: AbsentReason, detail: String },
}

impl ClusteringView {
    pub fn ready(&self) -> Option<&ClusteringResult> {
        match self {
            ClusteringView::Ready(r) => Some(r),
            ClusteringView::Absent { .. } => None,
        }
    }
}

/// Everything the dashboard shows, derived from one prefix of the event log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyticsSnapshot {
    pub version: u64,
    pub events_seen: usize,
    /// Seq of the last event included.
    pub last_seq: u64,
    pub kpis: KpiSnapshot,
    pub progress: Vec<ProgressRow>,
    pub kc_summary: KcSummary,
    pub histogram: ScoreHistogram,
    pub clustering: ClusteringView,
    pub alerts: Vec<Alert>,
    pub recommendations: Vec<ClusterRecommendation>,
    /// Wall-clock milliseconds since the Unix epoch.
    pub computed_at: u64,
    /// Set when clustering failed numerically; the clustering and
    /// recommendations are then carried over from the previous snapshot.
    pub degraded: Option<String>,
}

/// Inputs for one recompute, detached from the live log.
#[derive(Debug, Clone)]
pub struct RecomputeJob {
    pub version: u64,
    pub spec: Arc<ActivitySpec>,
    pub events: Vec<ActivityEvent>,
}

impl RecomputeJob {
    pub fn run(
        &self,
        config: &AnalyticsConfig,
        rules: &[AlertRule],
        previous: Option<&AnalyticsSnapshot>,
    ) -> AnalyticsSnapshot {
        recompute(
            self.version,
            &self.events,
            &self.spec,
            config,
            rules,
            previous,
            now_ms(),
        )
    }
}

pub fn now_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

fn cluster(fm: &FeatureMatrix, k_policy: KPolicy) -> Result<ClusteringResult, ClusteringError> {
    let d = gower_dissimilarity(fm)?;
    let models = fit_all(&d)?;
    for m in &models {
        if m.trace.heights().any(|h| !h.is_finite()) || !m.ac.value.is_finite() {
            return Err(ClusteringError::NumericFailure(format!(
                "{} produced a non-finite height",
                m.linkage
            )));
        }
    }
    let best = select_model(&models).ok_or(ClusteringError::Empty)?;
    let n = d.n();
    let (k, silhouette, silhouette_scores) = match k_policy {
        KPolicy::Auto => {
            let c = choose_k(&best.trace, &d, None)?;
            (c.k, c.silhouette, c.scores)
        }
        KPolicy::Fixed(k) => (k.min(n), None, Vec::new()),
    };
    let assignment = cut_tree(&best.trace, k)?;
    let clusters = assignment
        .clusters()
        .into_iter()
        .enumerate()
        .map(|(c, rows)| ClusterBreakdown {
            cluster: c,
            members: rows.iter().map(|&r| fm.students()[r].clone()).collect(),
            kc_summary: kc_summary_for_rows(fm, rows).expect("feature matrix has KC columns"),
        })
        .collect();
    Ok(ClusteringResult {
        students: fm.students().to_vec(),
        models: models
            .iter()
            .map(|m| ModelSummary {
                linkage: m.linkage,
                ac: m.ac.value,
                ac_degenerate: m.ac.degenerate,
            })
            .collect(),
        selected: best.linkage,
        dendrogram: DendrogramWire::from_model(best, fm.students())?,
        assignment,
        k,
        k_policy,
        silhouette,
        silhouette_scores,
        clusters,
    })
}

/// Builds the snapshot for `events`, which must be a validated prefix of
/// the log for `spec`.
///
/// Clustering runs over students with at least one event. It is absent
/// when fewer than two are active or no feature varies. Any other
/// clustering error marks the snapshot degraded and reuses the previous
/// snapshot's clustering.
pub fn recompute(
    version: u64,
    events: &[ActivityEvent],
    spec: &ActivitySpec,
    config: &AnalyticsConfig,
    rules: &[AlertRule],
    previous: Option<&AnalyticsSnapshot>,
    computed_at: u64,
) -> AnalyticsSnapshot {
    let progress = class_progress(events, spec);
    let scores: Vec<f64> = progress.iter().filter_map(student_score).collect();
    let full = extract_features(events, spec, InclusionPolicy::FullRoster);
    let active = extract_features(events, spec, InclusionPolicy::ActiveOnly);

    let kc_totals = match &full {
        Ok(fm) => kc_summary(fm).expect("feature matrix has KC columns"),
        Err(_) => KcSummary { kcs: Vec::new() },
    };
    let histogram = score_histogram(&scores, config.histogram_bin_width)
        .unwrap_or_else(|_| score_histogram(&scores, 10).expect("10 divides 100"));

    let mut degraded = None;
    let (clustering, recommendations) = match active {
        Err(e) => (
            ClusteringView::Absent {
                reason: AbsentReason::InsufficientObservations,
                detail: e.to_string(),
            },
            Vec::new(),
        ),
        Ok(fm) if fm.n_rows() < 2 => (
            ClusteringView::Absent {
                reason: AbsentReason::InsufficientObservations,
                detail: format!("{} active student(s); clustering needs at least 2", fm.n_rows()),
            },
            Vec::new(),
        ),
        Ok(fm) => match cluster(&fm, config.k) {
            Ok(result) => {
                let recs = describe_clusters(&result.assignment, &fm, spec).expect("assignment built from fm");
                (ClusteringView::Ready(Box::new(result)), recs)
            }
            Err(ClusteringError::DegenerateFeatures) => (
                ClusteringView::Absent {
                    reason: AbsentReason::DegenerateFeatures,
                    detail: "every active student has identical incorrect and hint counts".into(),
                },
                Vec::new(),
            ),
            Err(e) => {
                tracing::warn!(version, error = %e, "clustering failed; keeping previous result");
                degraded = Some(e.to_string());
                match previous {
                    Some(p) => (p.clustering.clone(), p.recommendations.clone()),
                    None => (
                        ClusteringView::Absent {
                            reason: AbsentReason::InsufficientObservations,
                            detail: e.to_string(),
                        },
                        Vec::new(),
                    ),
                }
            }
        },
    };

    let previous_alerts = previous.map_or(&[][..], |p| &p.alerts[..]);
    AnalyticsSnapshot {
        version,
        events_seen: events.len(),
        last_seq: events.last().map_or(0, |e| e.seq),
        kpis: compute_kpis(events, spec, version),
        progress: progress_rows(&progress, spec),
        kc_summary: kc_totals,
        histogram,
        clustering,
        alerts: evaluate_alerts(events, spec, rules, previous_alerts),
        recommendations,
        computed_at,
        degraded,
    }
}
