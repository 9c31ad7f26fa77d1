//! Desk-scale field study: scripted users act on a virtual daily clock and
//! the regeneration check runs once per simulated day.
//!
//! Output is a data directory (the synthetic corpus) and a store directory
//! in the same layout the server writes, so both `analyze` and `serve` can
//! read it.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{MovieId, Section, UserId};
use crate::ingest::Dataset;
use crate::metrics::{EventKind, InteractionEvent};
use crate::semantic::EmbeddingProvider;
use crate::service::{Engine, ServiceError};
use crate::store::{StoreError, UserStore};
use crate::summarize::{GenerationKind, PromptTemplates, RegenerationPolicy, SummaryProvider};
use crate::synth::{synthetic_catalog, synthetic_dataset, synthetic_ratings, SynthParams, Taste};

#[derive(Debug, Error)]
pub enum SimulateError {
    #[error("invalid scenario: {0}")]
    Schema(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("user {user}: {source}")]
    Service {
        user: UserId,
        #[source]
        source: ServiceError,
    },
    #[error("writing output: {0}")]
    Io(String),
}

fn default_start() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2025, 3, 1, 0, 0, 0).unwrap()
}

fn default_days() -> u32 {
    28
}

fn default_movies() -> usize {
    200
}

fn default_base() -> usize {
    40
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub seed: u64,
    /// Midnight of simulated day 0.
    #[serde(default = "default_start")]
    pub start: DateTime<Utc>,
    #[serde(default = "default_days")]
    pub days: u32,
    #[serde(default = "default_movies")]
    pub movies: usize,
    /// Background users with history only, no scripted activity.
    #[serde(default)]
    pub background_users: usize,
    #[serde(default)]
    pub users: Vec<ScenarioUser>,
}

impl Default for Scenario {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioUser {
    pub id: String,
    /// Ratings in the year before day 0.
    #[serde(default = "default_base")]
    pub base_ratings: usize,
    /// Daily activity rates; each phase applies from its day until the next.
    #[serde(default)]
    pub activity: Vec<Phase>,
    /// Exact numbers of extra ratings on given days.
    #[serde(default)]
    pub ratings: Vec<ScriptedRatings>,
    #[serde(default)]
    pub edits: Vec<ScriptedEdit>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phase {
    #[serde(default)]
    pub from_day: u32,
    /// Expected counts per day.
    #[serde(default)]
    pub sessions: f64,
    #[serde(default)]
    pub views: f64,
    #[serde(default)]
    pub ratings: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedRatings {
    pub day: u32,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case", deny_unknown_fields)]
pub enum EditAction {
    /// Save the section unchanged.
    Keep,
    DropLastSentence,
    Clear,
    Append { text: String },
    Replace { text: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedEdit {
    pub day: u32,
    pub section: Section,
    #[serde(flatten)]
    pub action: EditAction,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, SimulateError> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| SimulateError::Schema(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), SimulateError> {
        let bad = |m: String| Err(SimulateError::Schema(m));
        if self.movies == 0 && !self.users.is_empty() {
            return bad("movies must be positive".into());
        }
        let mut seen = BTreeSet::new();
        for u in &self.users {
            if u.id.is_empty() || !seen.insert(&u.id) {
                return bad(format!("user id {:?} is empty or repeated", u.id));
            }
            if u.id.starts_with('u') && u.id[1..].parse::<usize>().is_ok() {
                return bad(format!("user id {:?} clashes with background user ids", u.id));
            }
            let mut last = None;
            for p in &u.activity {
                if [p.sessions, p.views, p.ratings].iter().any(|r| !r.is_finite() || *r < 0.0) {
                    return bad(format!("user {}: rates must be finite and non-negative", u.id));
                }
                if last.is_some_and(|d| p.from_day <= d) {
                    return bad(format!("user {}: activity phases must have increasing from_day", u.id));
                }
                last = Some(p.from_day);
            }
            let days = u.ratings.iter().map(|r| r.day).chain(u.edits.iter().map(|e| e.day));
            for d in days {
                if d >= self.days {
                    return bad(format!("user {}: day {d} is outside the {} simulated days", u.id, self.days));
                }
            }
        }
        Ok(())
    }

    pub fn end(&self) -> DateTime<Utc> {
        self.start + Duration::days(self.days as i64)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SimSummary {
    pub users: usize,
    pub events: usize,
    pub edits: usize,
    pub initial_generations: usize,
    pub regenerations: usize,
}

fn seed_for(seed: u64, user: &str) -> u64 {
    // FNV-1a over the id keeps per-user streams independent of user order.
    let mut h: u64 = 0xcbf29ce484222325 ^ seed;
    for b in user.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn poisson(rate: f64, rng: &mut impl Rng) -> usize {
    if rate <= 0.0 {
        return 0;
    }
    Poisson::new(rate).map_or(0, |d| d.sample(rng) as usize)
}

/// The corpus: background users plus each scripted user's history.
pub fn scenario_dataset(s: &Scenario) -> Dataset {
    let params = SynthParams {
        users: s.background_users,
        movies: s.movies,
        end: s.start,
        history_days: 365,
        ..SynthParams::default()
    };
    let mut d = if s.background_users > 0 {
        synthetic_dataset(&params, s.seed)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
        Dataset {
            catalog: synthetic_catalog(s.movies, &mut rng),
            ratings: Vec::new(),
        }
    };
    for u in &s.users {
        let mut rng = ChaCha8Rng::seed_from_u64(seed_for(s.seed, &u.id));
        let taste = Taste::random(&mut rng);
        let n = u.base_ratings.min(s.movies);
        d.ratings.extend(synthetic_ratings(
            &UserId::from(u.id.as_str()),
            taste,
            &d.catalog,
            n,
            s.start - Duration::days(365),
            s.start,
            &mut rng,
        ));
    }
    d.ratings.sort_by(|a, b| (&a.user_id, a.timestamp, &a.movie_id).cmp(&(&b.user_id, b.timestamp, &b.movie_id)));
    d.catalog.set_popularity(&d.ratings);
    d
}

fn edited_text(current: &str, action: &EditAction) -> String {
    match action {
        EditAction::Keep => current.to_owned(),
        EditAction::Clear => String::new(),
        EditAction::Append { text } => format!("{} {}", current.trim_end(), text.trim()),
        EditAction::Replace { text } => text.clone(),
        EditAction::DropLastSentence => {
            let sentences = crate::summarize::split_sentences(current);
            if sentences.len() <= 1 {
                current.to_owned()
            } else {
                sentences[..sentences.len() - 1].join(" ")
            }
        }
    }
}

enum Action<'a> {
    Event(InteractionEvent),
    Edit(&'a ScriptedEdit),
}

/// One simulated day of one user's activity, in time order.
fn day_actions<'a>(
    s: &Scenario,
    u: &'a ScenarioUser,
    day: u32,
    movies: &[MovieId],
    taste: &Taste,
    rng: &mut ChaCha8Rng,
) -> Vec<(DateTime<Utc>, Action<'a>)> {
    let user = UserId::from(u.id.as_str());
    let midnight = s.start + Duration::days(day as i64);
    let phase = u.activity.iter().rev().find(|p| p.from_day <= day).copied();
    let (mut n_sessions, n_views, mut n_ratings) =
        phase.map_or((0, 0, 0), |p| (poisson(p.sessions, rng), poisson(p.views, rng), poisson(p.ratings, rng)));
    n_ratings += u.ratings.iter().filter(|r| r.day == day).map(|r| r.count).sum::<usize>();
    let edits: Vec<&ScriptedEdit> = u.edits.iter().filter(|e| e.day == day).collect();
    if n_sessions == 0 && (n_views + n_ratings > 0 || !edits.is_empty()) {
        n_sessions = 1;
    }
    // Sessions start on distinct hours between 08:00 and 21:00.
    let mut hours: Vec<i64> = (8..22).collect();
    rand::seq::SliceRandom::shuffle(hours.as_mut_slice(), rng);
    let mut starts: Vec<i64> = hours.into_iter().take(n_sessions.min(14)).collect();
    starts.sort_unstable();
    let mut cursors: Vec<DateTime<Utc>> = starts.iter().map(|h| midnight + Duration::hours(*h)).collect();

    let mut out = Vec::new();
    for c in &cursors {
        out.push((*c, Action::Event(InteractionEvent {
            user_id: user.clone(),
            kind: EventKind::Login,
            movie_id: None,
            score: None,
            timestamp: *c,
        })));
    }
    let mut step = |rng: &mut ChaCha8Rng| {
        let i = rng.random_range(0..cursors.len());
        cursors[i] += Duration::seconds(rng.random_range(60..600));
        cursors[i]
    };
    for _ in 0..n_views {
        let t = step(rng);
        let m = movies[rng.random_range(0..movies.len())].clone();
        out.push((t, Action::Event(InteractionEvent {
            user_id: user.clone(),
            kind: EventKind::MovieView,
            movie_id: Some(m),
            score: None,
            timestamp: t,
        })));
    }
    for _ in 0..n_ratings {
        let t = step(rng);
        let m = movies[rng.random_range(0..movies.len())].clone();
        let score = taste.score(&m, rng);
        out.push((t, Action::Event(InteractionEvent {
            user_id: user.clone(),
            kind: EventKind::Rating,
            movie_id: Some(m),
            score: Some(score),
            timestamp: t,
        })));
    }
    for e in edits {
        out.push((step(rng), Action::Edit(e)));
    }
    out.sort_by_key(|(t, _)| *t);
    out
}

fn run_user(s: &Scenario, u: &ScenarioUser, engine: &Engine, store_dir: &Path) -> Result<SimSummary, SimulateError> {
    let user = UserId::from(u.id.as_str());
    let fail = |source| SimulateError::Service {
        user: user.clone(),
        source,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed_for(s.seed, &u.id));
    let taste = Taste::random(&mut rng);
    // Skip the draws used for the history so activity is a fresh stream.
    let mut rng = ChaCha8Rng::seed_from_u64(seed_for(s.seed.wrapping_add(1), &u.id));
    let movies: Vec<MovieId> = engine.dataset.catalog.movies.keys().cloned().collect();
    let mut store = UserStore::open(store_dir, &user, 0)?;
    let mut sum = SimSummary {
        users: 1,
        ..Default::default()
    };

    let tally = |g: &crate::pipeline::Generated, sum: &mut SimSummary| match g.record.kind {
        GenerationKind::Initial => sum.initial_generations += 1,
        GenerationKind::Regeneration => sum.regenerations += 1,
    };
    match engine.check(&mut store, s.start, s.start, false) {
        Ok(Some(g)) => tally(&g, &mut sum),
        Ok(None) => {}
        Err(ServiceError::Pipeline(e)) if e.is_skip() => {}
        Err(e) => return Err(fail(e)),
    }

    for day in 0..s.days {
        for (t, action) in day_actions(s, u, day, &movies, &taste, &mut rng) {
            match action {
                Action::Event(e) => {
                    store.record_event(&e)?;
                    sum.events += 1;
                }
                Action::Edit(edit) => {
                    let Some(latest) = store.state().latest() else { continue };
                    let text = edited_text(latest.section(edit.section), &edit.action);
                    let base = latest.version;
                    match engine.apply_edit(&mut store, edit.section, &text, base, t) {
                        Ok(_) => sum.edits += 1,
                        Err(ServiceError::EmptySection(_)) => {}
                        Err(e) => return Err(fail(e)),
                    }
                }
            }
        }
        let tick = s.start + Duration::days(day as i64 + 1);
        match engine.check(&mut store, tick, tick, false) {
            Ok(Some(g)) => tally(&g, &mut sum),
            Ok(None) => {}
            Err(ServiceError::Pipeline(e)) if e.is_skip() => {}
            Err(e) => return Err(fail(e)),
        }
    }
    Ok(sum)
}

/// Runs the scenario, writing `data/` and `store/` under `out`.
pub fn simulate(
    s: &Scenario,
    out: &Path,
    embedder: Arc<dyn EmbeddingProvider>,
    summarizer: Arc<dyn SummaryProvider>,
    templates: PromptTemplates,
    policy: RegenerationPolicy,
    min_ratings: usize,
) -> Result<SimSummary, SimulateError> {
    s.validate()?;
    let dataset = scenario_dataset(s);
    dataset
        .write(&out.join("data"))
        .map_err(|e| SimulateError::Io(e.to_string()))?;
    let store_dir = out.join("store");
    std::fs::create_dir_all(&store_dir).map_err(|e| SimulateError::Io(e.to_string()))?;
    let engine = Engine::new(dataset, embedder, summarizer, templates, policy, min_ratings);
    let parts: Vec<SimSummary> = s
        .users
        .par_iter()
        .map(|u| run_user(s, u, &engine, &store_dir))
        .collect::<Result<_, _>>()?;
    Ok(parts.into_iter().fold(SimSummary::default(), |a, b| SimSummary {
        users: a.users + b.users,
        events: a.events + b.events,
        edits: a.edits + b.edits,
        initial_generations: a.initial_generations + b.initial_generations,
        regenerations: a.regenerations + b.regenerations,
    }))
}
