//! Behavioral metrics over interaction logs: activity counts, sessions,
//! re-rating and intra-list similarity of the movies a user touched.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::io::Read;

use chrono::{DateTime, Duration, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Embedding, MovieId, Score, UserId, ValidatedRating};
use crate::ingest::csv_field;
use crate::semantic::cosine_slices;

pub const DEFAULT_SESSION_GAP_MINUTES: i64 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    MovieView,
    Rating,
    Login,
    PageEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionEvent {
    pub user_id: UserId,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub movie_id: Option<MovieId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<Score>,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("intra-list similarity needs at least two movies, got {0}")]
    TooFewItems(usize),
    #[error("no embedding for movie {0}")]
    MissingEmbedding(MovieId),
    #[error("{0:?} event for user {1} is missing {2}")]
    MalformedEvent(EventKind, UserId, &'static str),
    #[error("window end precedes start")]
    BadWindow,
    #[error("metrics csv: {0}")]
    Csv(String),
}

impl InteractionEvent {
    pub fn validate(&self) -> Result<(), MetricsError> {
        let missing = |what| Err(MetricsError::MalformedEvent(self.kind, self.user_id.clone(), what));
        match self.kind {
            EventKind::Rating if self.score.is_none() => missing("score"),
            EventKind::Rating | EventKind::MovieView if self.movie_id.is_none() => missing("movie_id"),
            _ => Ok(()),
        }
    }
}

/// Half-open `[start, end)` interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

impl Window {
    pub fn new(start: DateTime<Utc>, end: DateTime<Utc>) -> Result<Self, MetricsError> {
        if end < start {
            return Err(MetricsError::BadWindow);
        }
        Ok(Window { start, end })
    }

    pub fn contains(&self, t: DateTime<Utc>) -> bool {
        self.start <= t && t < self.end
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UserMetrics {
    pub movie_view_count: usize,
    pub rating_count: usize,
    pub login_count: usize,
    pub session_length_hours: f64,
    pub rated_movie_div: Option<f64>,
    pub viewed_movie_div: Option<f64>,
    pub rerate_total: usize,
    pub avg_rating: Option<f64>,
}

/// Column names of the metrics CSV, in order, after `user_id`.
pub const METRIC_NAMES: [&str; 8] = [
    "movie_view_count",
    "rating_count",
    "login_count",
    "session_length",
    "rated_movie_div",
    "viewed_movie_div",
    "rerate_total",
    "avg_rating",
];

impl UserMetrics {
    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "movie_view_count" => Some(self.movie_view_count as f64),
            "rating_count" => Some(self.rating_count as f64),
            "login_count" => Some(self.login_count as f64),
            "session_length" => Some(self.session_length_hours),
            "rated_movie_div" => self.rated_movie_div,
            "viewed_movie_div" => self.viewed_movie_div,
            "rerate_total" => Some(self.rerate_total as f64),
            "avg_rating" => self.avg_rating,
            _ => None,
        }
    }
}

/// Mean pairwise cosine similarity, negatives clamped to zero. Higher means
/// less diverse.
pub fn compute_ils(
    movies: &[MovieId],
    embeddings: &HashMap<MovieId, Embedding>,
) -> Result<f64, MetricsError> {
    if movies.len() < 2 {
        return Err(MetricsError::TooFewItems(movies.len()));
    }
    let vecs = movies
        .iter()
        .map(|m| {
            embeddings
                .get(m)
                .map(Embedding::values)
                .ok_or_else(|| MetricsError::MissingEmbedding(m.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(mean_pairwise(&vecs))
}

fn mean_pairwise(vecs: &[&[f64]]) -> f64 {
    let n = vecs.len();
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            sum += cosine_slices(vecs[i], vecs[j]).map_or(0.0, |c| c.max(0.0));
        }
    }
    sum * 2.0 / (n * (n - 1)) as f64
}

/// Groups sorted timestamps into sessions: consecutive events at most `gap`
/// apart share one.
pub fn derive_sessions(timestamps: &[DateTime<Utc>], gap: Duration) -> Vec<(DateTime<Utc>, DateTime<Utc>)> {
    let mut out: Vec<(DateTime<Utc>, DateTime<Utc>)> = Vec::new();
    for &t in timestamps {
        match out.last_mut() {
            Some((_, end)) if t - *end <= gap => *end = t,
            _ => out.push((t, t)),
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MetricsOptions {
    pub session_gap: Duration,
    /// Count distinct movies viewed instead of view events.
    pub unique_views: bool,
}

impl Default for MetricsOptions {
    fn default() -> Self {
        MetricsOptions {
            session_gap: Duration::minutes(DEFAULT_SESSION_GAP_MINUTES),
            unique_views: false,
        }
    }
}

/// Diversity over the distinct movies that have an embedding; `None` when
/// fewer than two qualify.
fn diversity(movies: &BTreeSet<&MovieId>, embeddings: &HashMap<MovieId, Embedding>) -> Option<f64> {
    let vecs: Vec<&[f64]> = movies
        .iter()
        .filter_map(|m| embeddings.get(*m).map(Embedding::values))
        .collect();
    (vecs.len() >= 2).then(|| mean_pairwise(&vecs))
}

/// Metrics for one user's events. Only events inside `window` count;
/// `prior_ratings` holds the user's score per movie as of the window start.
pub fn compute_user_metrics(
    events: &[InteractionEvent],
    window: Window,
    prior_ratings: &HashMap<MovieId, Score>,
    embeddings: &HashMap<MovieId, Embedding>,
    options: MetricsOptions,
) -> UserMetrics {
    let mut in_window: Vec<&InteractionEvent> =
        events.iter().filter(|e| window.contains(e.timestamp)).collect();
    in_window.sort_by_key(|e| e.timestamp);

    let mut m = UserMetrics::default();
    let mut viewed = BTreeSet::new();
    let mut rated = BTreeSet::new();
    let mut score_sum = 0.0;
    for e in &in_window {
        match (e.kind, &e.movie_id, e.score) {
            (EventKind::MovieView, Some(movie), _) => {
                m.movie_view_count += 1;
                viewed.insert(movie);
            }
            (EventKind::Rating, Some(movie), Some(score)) => {
                m.rating_count += 1;
                score_sum += score.value();
                rated.insert(movie);
                if prior_ratings.get(movie).is_some_and(|p| *p != score) {
                    m.rerate_total += 1;
                }
            }
            _ => {}
        }
    }
    if options.unique_views {
        m.movie_view_count = viewed.len();
    }
    if m.rating_count > 0 {
        m.avg_rating = Some(score_sum / m.rating_count as f64);
    }
    let stamps: Vec<DateTime<Utc>> = in_window.iter().map(|e| e.timestamp).collect();
    let sessions = derive_sessions(&stamps, options.session_gap);
    m.login_count = sessions.len();
    m.session_length_hours = sessions
        .iter()
        .map(|(s, e)| (*e - *s).num_milliseconds() as f64 / 3_600_000.0)
        .sum();
    m.rated_movie_div = diversity(&rated, embeddings);
    m.viewed_movie_div = diversity(&viewed, embeddings);
    m
}

/// Latest score per (user, movie) strictly before `before`, drawn from the
/// ingested ratings and from rating events.
pub fn prior_scores(
    ratings: &[ValidatedRating],
    events: &[InteractionEvent],
    before: DateTime<Utc>,
) -> HashMap<UserId, HashMap<MovieId, Score>> {
    let mut latest: HashMap<(&UserId, &MovieId), (DateTime<Utc>, Score)> = HashMap::new();
    let rows = ratings
        .iter()
        .map(|r| (&r.user_id, &r.movie_id, r.score, r.timestamp))
        .chain(events.iter().filter_map(|e| match (e.kind, &e.movie_id, e.score) {
            (EventKind::Rating, Some(m), Some(s)) => Some((&e.user_id, m, s, e.timestamp)),
            _ => None,
        }));
    for (u, m, s, t) in rows {
        if t >= before {
            continue;
        }
        let slot = latest.entry((u, m)).or_insert((t, s));
        if t >= slot.0 {
            *slot = (t, s);
        }
    }
    let mut out: HashMap<UserId, HashMap<MovieId, Score>> = HashMap::new();
    for ((u, m), (_, s)) in latest {
        out.entry(u.clone()).or_default().insert(m.clone(), s);
    }
    out
}

/// Metrics for every user in `users` and every user with events, in user
/// order.
pub fn compute_all(
    users: impl IntoIterator<Item = UserId>,
    events: &[InteractionEvent],
    ratings: &[ValidatedRating],
    window: Window,
    embeddings: &HashMap<MovieId, Embedding>,
    options: MetricsOptions,
) -> BTreeMap<UserId, UserMetrics> {
    let mut per_user: BTreeMap<UserId, Vec<InteractionEvent>> =
        users.into_iter().map(|u| (u, Vec::new())).collect();
    for e in events {
        per_user.entry(e.user_id.clone()).or_default().push(e.clone());
    }
    let priors = prior_scores(ratings, events, window.start);
    let empty = HashMap::new();
    per_user
        .into_par_iter()
        .map(|(u, evs)| {
            let prior = priors.get(&u).unwrap_or(&empty);
            let m = compute_user_metrics(&evs, window, prior, embeddings, options);
            (u, m)
        })
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn metrics_csv(rows: &BTreeMap<UserId, UserMetrics>) -> String {
    let mut out = format!("user_id,{}\n", METRIC_NAMES.join(","));
    for (u, m) in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            csv_field(u.as_str()),
            m.movie_view_count,
            m.rating_count,
            m.login_count,
            m.session_length_hours,
            fmt_opt(m.rated_movie_div),
            fmt_opt(m.viewed_movie_div),
            m.rerate_total,
            fmt_opt(m.avg_rating),
        );
    }
    out
}

/// Parses the output of [`metrics_csv`]. Empty cells read as absent.
pub fn read_metrics_csv(input: impl Read) -> Result<BTreeMap<UserId, UserMetrics>, MetricsError> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers().map_err(|e| MetricsError::Csv(e.to_string()))?.clone();
    let expected: Vec<&str> = std::iter::once("user_id").chain(METRIC_NAMES).collect();
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(MetricsError::Csv(format!("unexpected header {headers:?}")));
    }
    let mut out = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| MetricsError::Csv(e.to_string()))?;
        let bad = |col: usize| MetricsError::Csv(format!("row {}: bad {}", i + 2, expected[col]));
        let count = |col: usize| rec[col].trim().parse::<usize>().map_err(|_| bad(col));
        let real = |col: usize| -> Result<Option<f64>, MetricsError> {
            let s = rec[col].trim();
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse::<f64>().map(Some).map_err(|_| bad(col))
            }
        };
        let m = UserMetrics {
            movie_view_count: count(1)?,
            rating_count: count(2)?,
            login_count: count(3)?,
            session_length_hours: real(4)?.ok_or_else(|| bad(4))?,
            rated_movie_div: real(5)?,
            viewed_movie_div: real(6)?,
            rerate_total: count(7)?,
            avg_rating: real(8)?,
        };
        out.insert(UserId::from(&rec[0]), m);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn t0() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2025, 3, 29, 12, 0, 0).unwrap()
    }

    fn emb(v: &[f64]) -> Embedding {
        Embedding::new(v.to_vec()).unwrap()
    }

    fn table(vs: &[Vec<f64>]) -> (Vec<MovieId>, HashMap<MovieId, Embedding>) {
        let ids: Vec<MovieId> = (0..vs.len()).map(|i| MovieId::from(format!("m{i}"))).collect();
        let map = ids.iter().cloned().zip(vs.iter().map(|v| emb(v))).collect();
        (ids, map)
    }

    fn brute_ils(vs: &[Vec<f64>]) -> f64 {
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let mut total = 0.0;
        let mut pairs = 0;
        for i in 0..vs.len() {
            for j in 0..vs.len() {
                if i < j {
                    let c = dot(&vs[i], &vs[j]) / (dot(&vs[i], &vs[i]).sqrt() * dot(&vs[j], &vs[j]).sqrt());
                    total += c.max(0.0);
                    pairs += 1;
                }
            }
        }
        total / pairs as f64
    }

    #[test]
    fn ils_examples() {
        let (ids, map) = table(&[vec![1.0, 2.0], vec![1.0, 2.0]]);
        assert!((compute_ils(&ids, &map).unwrap() - 1.0).abs() < 1e-15);
        let (ids, map) = table(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(compute_ils(&ids, &map).unwrap(), 0.0);
        assert_eq!(compute_ils(&ids[..1], &map), Err(MetricsError::TooFewItems(1)));
        let missing = vec![ids[0].clone(), MovieId::from("zz")];
        assert_eq!(compute_ils(&missing, &map), Err(MetricsError::MissingEmbedding("zz".into())));

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let vs: Vec<Vec<f64>> = (0..5)
            .map(|_| {
                let v: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.into_iter().map(|x| x / n).collect()
            })
            .collect();
        let (ids, map) = table(&vs);
        assert!((compute_ils(&ids, &map).unwrap() - brute_ils(&vs)).abs() < 1e-12);
    }

    #[test]
    fn duplicating_an_outlier_can_lower_ils() {
        let vs = vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        let (mut ids, map) = table(&vs);
        let before = compute_ils(&ids, &map).unwrap();
        ids.push(ids[3].clone());
        let after = compute_ils(&ids, &map).unwrap();
        assert!((before - 0.5).abs() < 1e-12 && (after - 0.4).abs() < 1e-12);
    }

    #[test]
    fn session_examples() {
        assert!(derive_sessions(&[], Duration::minutes(30)).is_empty());
        let one = derive_sessions(&[t0()], Duration::minutes(30));
        assert_eq!(one, vec![(t0(), t0())]);
        let s = derive_sessions(
            &[t0(), t0() + Duration::minutes(10), t0() + Duration::hours(2)],
            Duration::minutes(30),
        );
        assert_eq!(s.len(), 2);
        let total: Duration = s.iter().map(|(a, b)| *b - *a).sum();
        assert_eq!(total, Duration::minutes(10));
        // Exactly the gap still joins.
        assert_eq!(derive_sessions(&[t0(), t0() + Duration::minutes(30)], Duration::minutes(30)).len(), 1);
    }

    fn rating(movie: &str, score: f64, t: DateTime<Utc>) -> InteractionEvent {
        InteractionEvent {
            user_id: "u".into(),
            kind: EventKind::Rating,
            movie_id: Some(movie.into()),
            score: Some(Score::new(score).unwrap()),
            timestamp: t,
        }
    }

    #[test]
    fn user_metric_examples() {
        let w = Window::new(t0(), t0() + Duration::days(7)).unwrap();
        let none = compute_user_metrics(&[], w, &HashMap::new(), &HashMap::new(), MetricsOptions::default());
        assert_eq!(none, UserMetrics::default());
        assert_eq!(none.avg_rating, None);

        let prior: HashMap<MovieId, Score> = [("a".into(), Score::new(4.0).unwrap())].into();
        let same = compute_user_metrics(&[rating("a", 4.0, t0())], w, &prior, &HashMap::new(), MetricsOptions::default());
        assert_eq!(same.rerate_total, 0);
        assert_eq!(same.avg_rating, Some(4.0));

        let prior: HashMap<MovieId, Score> = [("a".into(), Score::new(4.5).unwrap())].into();
        let diff = compute_user_metrics(&[rating("a", 3.0, t0())], w, &prior, &HashMap::new(), MetricsOptions::default());
        assert_eq!(diff.rerate_total, 1);

        // End of window is excluded.
        let out = compute_user_metrics(&[rating("a", 3.0, w.end)], w, &prior, &HashMap::new(), MetricsOptions::default());
        assert_eq!(out.rating_count, 0);
    }

    #[test]
    fn event_validation() {
        let mut e = rating("a", 3.0, t0());
        assert!(e.validate().is_ok());
        e.score = None;
        assert!(e.validate().is_err());
        e.kind = EventKind::MovieView;
        e.movie_id = None;
        assert!(e.validate().is_err());
        e.kind = EventKind::Login;
        assert!(e.validate().is_ok());
        let line = r#"{"user_id":"7","kind":"movie_view","movie_id":"12","timestamp":"2025-04-01T10:00:00Z"}"#;
        let parsed: InteractionEvent = serde_json::from_str(line).unwrap();
        assert_eq!(parsed.kind, EventKind::MovieView);
    }

    fn random_log(rng: &mut ChaCha8Rng) -> Vec<InteractionEvent> {
        let n = rng.random_range(0..40);
        (0..n)
            .map(|_| {
                let kind = [EventKind::MovieView, EventKind::Rating, EventKind::Login, EventKind::PageEvent]
                    [rng.random_range(0..4)];
                let movie = MovieId::from(format!("m{}", rng.random_range(0..6)));
                InteractionEvent {
                    user_id: "u".into(),
                    kind,
                    movie_id: matches!(kind, EventKind::MovieView | EventKind::Rating).then_some(movie),
                    score: (kind == EventKind::Rating)
                        .then(|| Score::new(f64::from(rng.random_range(1..=10u8)) / 2.0).unwrap()),
                    timestamp: t0() + Duration::minutes(rng.random_range(-600..3000)),
                }
            })
            .collect()
    }

    /// Straight-line reference: one pass over time-ordered events.
    fn naive(
        events: &[InteractionEvent],
        w: Window,
        prior: &HashMap<MovieId, Score>,
        embs: &HashMap<MovieId, Embedding>,
    ) -> UserMetrics {
        let mut evs = events.to_vec();
        evs.sort_by_key(|e| e.timestamp);
        let mut m = UserMetrics::default();
        let mut last: Option<DateTime<Utc>> = None;
        let mut sess_start: Option<DateTime<Utc>> = None;
        let mut secs = 0i64;
        let (mut sum, mut rated, mut viewed) = (0.0, Vec::<MovieId>::new(), Vec::<MovieId>::new());
        for e in evs.iter().filter(|e| e.timestamp >= w.start && e.timestamp < w.end) {
            match last {
                Some(l) if (e.timestamp - l).num_seconds() <= 30 * 60 => {}
                _ => {
                    if let (Some(s), Some(l)) = (sess_start, last) {
                        secs += (l - s).num_seconds();
                    }
                    sess_start = Some(e.timestamp);
                    m.login_count += 1;
                }
            }
            last = Some(e.timestamp);
            if e.kind == EventKind::MovieView {
                m.movie_view_count += 1;
                let id = e.movie_id.clone().unwrap();
                if !viewed.contains(&id) {
                    viewed.push(id);
                }
            }
            if e.kind == EventKind::Rating {
                m.rating_count += 1;
                sum += e.score.unwrap().value();
                let id = e.movie_id.clone().unwrap();
                if let Some(p) = prior.get(&id) {
                    if *p != e.score.unwrap() {
                        m.rerate_total += 1;
                    }
                }
                if !rated.contains(&id) {
                    rated.push(id);
                }
            }
        }
        if let (Some(s), Some(l)) = (sess_start, last) {
            secs += (l - s).num_seconds();
        }
        m.session_length_hours = secs as f64 / 3600.0;
        if m.rating_count > 0 {
            m.avg_rating = Some(sum / m.rating_count as f64);
        }
        let div = |ids: &[MovieId]| {
            let vs: Vec<Vec<f64>> = ids.iter().filter_map(|i| embs.get(i)).map(|e| e.values().to_vec()).collect();
            (vs.len() >= 2).then(|| brute_ils(&vs))
        };
        m.rated_movie_div = div(&rated);
        m.viewed_movie_div = div(&viewed);
        m
    }

    fn close(a: Option<f64>, b: Option<f64>) -> bool {
        match (a, b) {
            (None, None) => true,
            (Some(x), Some(y)) => (x - y).abs() < 1e-9,
            _ => false,
        }
    }

    #[test]
    fn matches_naive_reference_over_random_logs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1000);
        let w = Window::new(t0(), t0() + Duration::hours(40)).unwrap();
        for trial in 0..1000 {
            let events = random_log(&mut rng);
            let mut embs: HashMap<MovieId, Embedding> = HashMap::new();
            let mut prior: HashMap<MovieId, Score> = HashMap::new();
            for i in 0..6 {
                let id = MovieId::from(format!("m{i}"));
                if rng.random_bool(0.8) {
                    let v: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
                    embs.insert(id.clone(), emb(&v));
                }
                if rng.random_bool(0.5) {
                    prior.insert(id, Score::new(f64::from(rng.random_range(1..=10u8)) / 2.0).unwrap());
                }
            }
            let got = compute_user_metrics(&events, w, &prior, &embs, MetricsOptions::default());
            let want = naive(&events, w, &prior, &embs);
            assert_eq!(
                (got.movie_view_count, got.rating_count, got.login_count, got.rerate_total),
                (want.movie_view_count, want.rating_count, want.login_count, want.rerate_total),
                "trial {trial}"
            );
            assert!((got.session_length_hours - want.session_length_hours).abs() < 1e-9, "trial {trial}");
            assert!(close(got.avg_rating, want.avg_rating), "trial {trial}");
            assert!(close(got.rated_movie_div, want.rated_movie_div), "trial {trial}");
            assert!(close(got.viewed_movie_div, want.viewed_movie_div), "trial {trial}");
        }
    }

    #[test]
    fn unique_views_flag() {
        let w = Window::new(t0(), t0() + Duration::days(1)).unwrap();
        let view = |m: &str| InteractionEvent {
            user_id: "u".into(),
            kind: EventKind::MovieView,
            movie_id: Some(m.into()),
            score: None,
            timestamp: t0(),
        };
        let evs = [view("a"), view("a"), view("b")];
        let plain = compute_user_metrics(&evs, w, &HashMap::new(), &HashMap::new(), MetricsOptions::default());
        assert_eq!(plain.movie_view_count, 3);
        let opts = MetricsOptions { unique_views: true, ..Default::default() };
        let uniq = compute_user_metrics(&evs, w, &HashMap::new(), &HashMap::new(), opts);
        assert_eq!(uniq.movie_view_count, 2);
    }

    #[test]
    fn priors_and_compute_all() {
        let before = t0();
        let old = ValidatedRating {
            user_id: "u".into(),
            movie_id: "a".into(),
            score: Score::new(2.0).unwrap(),
            timestamp: before - Duration::days(30),
        };
        let events = vec![
            rating("a", 4.0, before - Duration::days(1)),
            rating("a", 5.0, before + Duration::hours(1)),
        ];
        let p = prior_scores(&[old], &events, before);
        assert_eq!(p[&UserId::from("u")][&MovieId::from("a")], Score::new(4.0).unwrap());

        let w = Window::new(before, before + Duration::days(2)).unwrap();
        let all = compute_all(
            [UserId::from("idle")],
            &events,
            &[],
            w,
            &HashMap::new(),
            MetricsOptions::default(),
        );
        assert_eq!(all.len(), 2);
        assert_eq!(all[&UserId::from("u")].rerate_total, 1);
        assert_eq!(all[&UserId::from("idle")], UserMetrics::default());

        let csv = metrics_csv(&all);
        assert!(csv.starts_with(
            "user_id,movie_view_count,rating_count,login_count,session_length,rated_movie_div,viewed_movie_div,rerate_total,avg_rating\n"
        ));
        assert_eq!(read_metrics_csv(csv.as_bytes()).unwrap(), all);
    }

    proptest! {
        #[test]
        fn ils_permutation_invariant(
            vs in prop::collection::vec(prop::collection::vec(0.01f64..1.0, 3), 2..8),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            let (mut ids, map) = table(&vs);
            let a = compute_ils(&ids, &map).unwrap();
            ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let b = compute_ils(&ids, &map).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&a));
        }

        #[test]
        fn duplicating_a_typical_movie_never_lowers_ils(
            vs in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 2..8),
        ) {
            prop_assume!(vs.iter().all(|v| v.iter().any(|x| x.abs() > 1e-3)));
            let (ids, map) = table(&vs);
            let base = compute_ils(&ids, &map).unwrap();
            let n = ids.len();
            for k in 0..n {
                let row: f64 = (0..n)
                    .filter(|&j| j != k)
                    .map(|j| cosine_slices(&vs[k], &vs[j]).unwrap().max(0.0))
                    .sum::<f64>() / (n - 1) as f64;
                if row >= base {
                    let mut more = ids.clone();
                    more.push(ids[k].clone());
                    prop_assert!(compute_ils(&more, &map).unwrap() >= base - 1e-12);
                }
            }
        }

        #[test]
        fn session_gap_extremes(mut offs in prop::collection::btree_set(0i64..100_000, 1..30)) {
            let ts: Vec<DateTime<Utc>> = std::mem::take(&mut offs).into_iter().map(|s| t0() + Duration::seconds(s)).collect();
            prop_assert_eq!(derive_sessions(&ts, Duration::days(10_000)).len(), 1);
            prop_assert_eq!(derive_sessions(&ts, Duration::zero()).len(), ts.len());
        }
    }
}
