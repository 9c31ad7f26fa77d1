//! Group comparison report over behavioral logs: one-way ANOVA on the
//! baseline window and ANCOVA on the experiment window, with each user's
//! baseline value as the covariate. Shared by the CLI and the server so both
//! produce the same bytes from the same logs.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use chrono::{DateTime, NaiveDate, Utc};
use serde::Serialize;
use thiserror::Error;

use crate::domain::{Embedding, MovieId, UserId, ValidatedRating};
use crate::edits::EditRecord;
use crate::ingest::Catalog;
use crate::metrics::{compute_all, InteractionEvent, MetricsOptions, UserMetrics, Window, METRIC_NAMES};
use crate::semantic::{movie_embedding, EmbeddingProvider, ProviderError};
use crate::stats::{
    ancova, anova_oneway, assign_groups, stars, EffectBand, Group, GroupAssignment, PairwiseComparison,
};
use crate::store::{self, StoreError};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("bad window {0:?}: expected START/END dates or RFC 3339 timestamps")]
    BadWindow(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// Parses `START/END`, each a `YYYY-MM-DD` date (midnight UTC) or an
/// RFC 3339 timestamp. The window is half-open.
pub fn parse_window(raw: &str) -> Result<Window, AnalysisError> {
    let bad = || AnalysisError::BadWindow(raw.to_string());
    let (a, b) = raw.split_once('/').ok_or_else(bad)?;
    let point = |s: &str| -> Option<DateTime<Utc>> {
        let s = s.trim();
        if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
            return Some(d.and_hms_opt(0, 0, 0)?.and_utc());
        }
        DateTime::parse_from_rfc3339(s).ok().map(|t| t.with_timezone(&Utc))
    };
    let (start, end) = (point(a).ok_or_else(bad)?, point(b).ok_or_else(bad)?);
    Window::new(start, end).map_err(|_| bad())
}

/// Everything the report is computed from.
#[derive(Debug, Clone, Default)]
pub struct AnalysisInput {
    /// Participants. Users outside this list are ignored.
    pub users: Vec<UserId>,
    pub events: Vec<InteractionEvent>,
    /// Ingested ratings, used for re-rate priors.
    pub ratings: Vec<ValidatedRating>,
    pub edits: Vec<EditRecord>,
}

impl AnalysisInput {
    /// Reads every user's logs from a store directory.
    pub fn from_store(root: &Path, ratings: Vec<ValidatedRating>) -> Result<Self, AnalysisError> {
        let mut input = AnalysisInput {
            ratings,
            ..Default::default()
        };
        for (user, logs) in store::read_all(root)? {
            input.users.push(user);
            input.events.extend(logs.events);
            input.edits.extend(logs.edits);
        }
        Ok(input)
    }

    /// Distinct movies referenced by events.
    pub fn event_movies(&self) -> BTreeSet<&MovieId> {
        self.events.iter().filter_map(|e| e.movie_id.as_ref()).collect()
    }
}

/// Tag-mean embeddings for `movies`; movies without tags are left out.
pub fn movie_embeddings<'a>(
    catalog: &Catalog,
    provider: &dyn EmbeddingProvider,
    movies: impl IntoIterator<Item = &'a MovieId>,
) -> Result<HashMap<MovieId, Embedding>, ProviderError> {
    let mut out = HashMap::new();
    for m in movies {
        if let Some(e) = movie_embedding(catalog.tags_for(m), provider)? {
            out.insert(m.clone(), e);
        }
    }
    Ok(out)
}

/// Groups from the number of edits each participant made before `until`.
pub fn edit_groups(users: &[UserId], edits: &[EditRecord], until: DateTime<Utc>) -> Vec<GroupAssignment> {
    let mut counts: BTreeMap<UserId, usize> = users.iter().map(|u| (u.clone(), 0)).collect();
    for e in edits.iter().filter(|e| e.timestamp < until) {
        if let Some(c) = counts.get_mut(&e.user_id) {
            *c += 1;
        }
    }
    assign_groups(&counts)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub metric: String,
    /// `ANOVA` for the baseline comparison, `ANCOVA` for the experiment.
    pub test: String,
    pub p: Option<f64>,
    pub ref_int: Option<f64>,
    pub ref_col: Option<f64>,
    pub int_col: Option<f64>,
    /// Partial eta squared; equal to the classical value for the ANOVA rows.
    pub eta_sq: Option<f64>,
    pub effect: Option<EffectBand>,
    pub n: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub groups: BTreeMap<String, usize>,
    pub rows: Vec<ReportRow>,
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub experiment: BTreeMap<UserId, UserMetrics>,
    pub baseline: BTreeMap<UserId, UserMetrics>,
    pub groups: Vec<GroupAssignment>,
    pub report: Report,
}

const PAIRS: [(Group, Group); 3] = [
    (Group::Reflected, Group::Interacted),
    (Group::Reflected, Group::Collaborated),
    (Group::Interacted, Group::Collaborated),
];

fn pair_p(pairs: &[PairwiseComparison], a: Group, b: Group) -> Option<f64> {
    pairs
        .iter()
        .find(|c| (c.group_a == a && c.group_b == b) || (c.group_a == b && c.group_b == a))
        .map(|c| c.p_adjusted)
}

fn empty_row(metric: &str, test: &str, n: usize, why: String) -> ReportRow {
    ReportRow {
        metric: metric.into(),
        test: test.into(),
        p: None,
        ref_int: None,
        ref_col: None,
        int_col: None,
        eta_sq: None,
        effect: None,
        n,
        warnings: vec![why],
    }
}

/// Drops groups with fewer than two members. Fails unless two groups remain.
fn usable_groups(groups: &[GroupAssignment]) -> Result<BTreeMap<UserId, Group>, AnalysisError> {
    let mut sizes: BTreeMap<Group, usize> = BTreeMap::new();
    for g in groups {
        *sizes.entry(g.group).or_default() += 1;
    }
    let keep: BTreeSet<Group> = sizes.iter().filter(|(_, n)| **n >= 2).map(|(g, _)| *g).collect();
    if keep.len() < 2 {
        return Err(AnalysisError::InsufficientData(format!(
            "need two groups with at least two users, have {}",
            sizes
                .iter()
                .map(|(g, n)| format!("{}={n}", g.short()))
                .collect::<Vec<_>>()
                .join(" ")
        )));
    }
    Ok(groups
        .iter()
        .filter(|g| keep.contains(&g.group))
        .map(|g| (g.user_id.clone(), g.group))
        .collect())
}

/// The report from precomputed per-user metrics.
pub fn analyze_metrics(
    experiment: &BTreeMap<UserId, UserMetrics>,
    baseline: &BTreeMap<UserId, UserMetrics>,
    groups: &[GroupAssignment],
) -> Result<Report, AnalysisError> {
    if baseline.is_empty() {
        return Err(AnalysisError::InsufficientData("no baseline metrics".into()));
    }
    let members = usable_groups(groups)?;
    let mut group_sizes = BTreeMap::new();
    for g in members.values() {
        *group_sizes.entry(g.short().to_string()).or_default() += 1;
    }

    let mut rows = Vec::new();
    for name in METRIC_NAMES {
        let mut ys = Vec::new();
        let mut gs = Vec::new();
        for (u, g) in &members {
            if let Some(v) = baseline.get(u).and_then(|m| m.get(name)) {
                ys.push(v);
                gs.push(*g);
            }
        }
        rows.push(match anova_oneway(&ys, &gs) {
            Ok(r) => ReportRow {
                metric: name.into(),
                test: "ANOVA".into(),
                p: Some(r.p_value),
                ref_int: pair_p(&r.pairwise, PAIRS[0].0, PAIRS[0].1),
                ref_col: pair_p(&r.pairwise, PAIRS[1].0, PAIRS[1].1),
                int_col: pair_p(&r.pairwise, PAIRS[2].0, PAIRS[2].1),
                eta_sq: Some(r.eta_squared),
                effect: Some(EffectBand::from_eta_squared(r.eta_squared)),
                n: ys.len(),
                warnings: Vec::new(),
            },
            Err(e) => empty_row(name, "ANOVA", ys.len(), e.to_string()),
        });

        let mut ys = Vec::new();
        let mut xs = Vec::new();
        let mut gs = Vec::new();
        for (u, g) in &members {
            let y = experiment.get(u).and_then(|m| m.get(name));
            let x = baseline.get(u).and_then(|m| m.get(name));
            if let (Some(y), Some(x)) = (y, x) {
                ys.push(y);
                xs.push(x);
                gs.push(*g);
            }
        }
        rows.push(match ancova(name, &ys, &xs, &gs) {
            Ok(r) => ReportRow {
                metric: name.into(),
                test: "ANCOVA".into(),
                p: Some(r.p_value),
                ref_int: pair_p(&r.pairwise, PAIRS[0].0, PAIRS[0].1),
                ref_col: pair_p(&r.pairwise, PAIRS[1].0, PAIRS[1].1),
                int_col: pair_p(&r.pairwise, PAIRS[2].0, PAIRS[2].1),
                eta_sq: Some(r.eta_squared),
                effect: Some(r.effect_band),
                n: ys.len(),
                warnings: r.warnings,
            },
            Err(e) => empty_row(name, "ANCOVA", ys.len(), e.to_string()),
        });
    }
    Ok(Report {
        groups: group_sizes,
        rows,
    })
}

/// Full analysis from logs. `groups` overrides the edit-count grouping.
pub fn analyze(
    input: &AnalysisInput,
    experiment: Window,
    baseline: Window,
    groups: Option<&[GroupAssignment]>,
    embeddings: &HashMap<MovieId, Embedding>,
    options: MetricsOptions,
) -> Result<Analysis, AnalysisError> {
    let groups: Vec<GroupAssignment> = match groups {
        Some(g) => g.to_vec(),
        None => edit_groups(&input.users, &input.edits, experiment.end),
    };
    let participants: BTreeSet<&UserId> = groups.iter().map(|g| &g.user_id).collect();
    let events: Vec<InteractionEvent> = input
        .events
        .iter()
        .filter(|e| participants.contains(&e.user_id))
        .cloned()
        .collect();
    for (label, w) in [("experiment", experiment), ("baseline", baseline)] {
        if !events.iter().any(|e| w.contains(e.timestamp)) {
            return Err(AnalysisError::InsufficientData(format!("no events in the {label} window")));
        }
    }
    let users = || participants.iter().map(|u| (*u).clone());
    let exp = compute_all(users(), &events, &input.ratings, experiment, embeddings, options);
    let base = compute_all(users(), &events, &input.ratings, baseline, embeddings, options);
    let report = analyze_metrics(&exp, &base, &groups)?;
    Ok(Analysis {
        experiment: exp,
        baseline: base,
        groups,
        report,
    })
}

fn fmt_p(p: Option<f64>) -> String {
    match p {
        None => String::new(),
        Some(p) if p < 1e-4 => format!("<0.0001{}", stars(p)),
        Some(p) => format!("{p:.4}{}", stars(p)),
    }
}

pub const REPORT_HEADER: &str = "metric,test,p,Ref-Int,Ref-Col,Int-Col,eta_sq,effect";

/// CSV with significance stars on every p column.
pub fn report_csv(report: &Report) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.metric,
            r.test,
            fmt_p(r.p),
            fmt_p(r.ref_int),
            fmt_p(r.ref_col),
            fmt_p(r.int_col),
            r.eta_sq.map(|e| format!("{e:.4}")).unwrap_or_default(),
            r.effect.map(EffectBand::as_str).unwrap_or_default(),
        ));
    }
    out
}

pub fn report_json(report: &Report) -> String {
    serde_json::to_string_pretty(report).expect("report serializes")
}
