//! Write operations on one user's store: edits, generation and the
//! threshold-gated regeneration check. The server and the simulator both
//! drive users through these.

use std::collections::BTreeMap;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use thiserror::Error;

use crate::domain::{Author, Portrait, Section, UserId, ValidatedRating};
use crate::edits::{record_edit, EditError, EditRecord};
use crate::ingest::{by_user, Dataset};
use crate::pipeline::{Generated, Pipeline, PipelineError, Previous};
use crate::semantic::{ClusterParams, EmbeddingProvider};
use crate::store::{StoreError, UserState, UserStore};
use crate::summarize::{
    should_regenerate, PromptTemplates, RegenerationPolicy, SummarizeError, SummaryProvider,
    NO_DISLIKES_PLACEHOLDER,
};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("no portrait has been generated yet")]
    NotYetGenerated,
    #[error("base version {base} is stale, current is {current}")]
    StaleVersion { base: u64, current: u64 },
    #[error("the {0} section cannot be empty")]
    EmptySection(Section),
    #[error(transparent)]
    Edit(#[from] EditError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Trigger(#[from] SummarizeError),
}

/// Shared read-only inputs for every user.
pub struct Engine {
    pub dataset: Dataset,
    ratings_by_user: BTreeMap<UserId, Vec<ValidatedRating>>,
    pub embedder: Arc<dyn EmbeddingProvider>,
    pub summarizer: Arc<dyn SummaryProvider>,
    pub templates: PromptTemplates,
    pub policy: RegenerationPolicy,
    pub cluster_params: ClusterParams,
    pub min_ratings: usize,
}

impl Engine {
    pub fn new(
        dataset: Dataset,
        embedder: Arc<dyn EmbeddingProvider>,
        summarizer: Arc<dyn SummaryProvider>,
        templates: PromptTemplates,
        policy: RegenerationPolicy,
        min_ratings: usize,
    ) -> Self {
        let ratings_by_user = by_user(&dataset.ratings);
        Engine {
            dataset,
            ratings_by_user,
            embedder,
            summarizer,
            templates,
            policy,
            cluster_params: ClusterParams::default(),
            min_ratings,
        }
    }

    /// Users present in the ingested ratings.
    pub fn dataset_users(&self) -> impl Iterator<Item = &UserId> {
        self.ratings_by_user.keys()
    }

    pub fn knows(&self, user: &UserId) -> bool {
        self.ratings_by_user.contains_key(user)
    }

    /// Ingested ratings followed by ratings received since.
    pub fn ratings_for(&self, state: &UserState) -> Vec<ValidatedRating> {
        let mut out = self.ratings_by_user.get(&state.user_id).cloned().unwrap_or_default();
        out.extend(state.rating_events.iter().cloned());
        out
    }

    pub fn rating_count(&self, state: &UserState) -> u64 {
        let base = self.ratings_by_user.get(&state.user_id).map_or(0, Vec::len);
        (base + state.rating_events.len()) as u64
    }

    fn pipeline(&self) -> Pipeline<'_> {
        Pipeline {
            catalog: &self.dataset.catalog,
            embedder: self.embedder.as_ref(),
            summarizer: self.summarizer.as_ref(),
            templates: &self.templates,
            cluster_params: self.cluster_params,
            min_ratings: self.min_ratings,
        }
    }

    /// Saves a user's text for one section as the next version. An emptied
    /// disliked section is stored as the placeholder and logged as pruned.
    pub fn apply_edit(
        &self,
        store: &mut UserStore,
        section: Section,
        text: &str,
        base_version: u64,
        now: DateTime<Utc>,
    ) -> Result<(Portrait, EditRecord), ServiceError> {
        let latest = store.state().latest().ok_or(ServiceError::NotYetGenerated)?;
        if base_version != latest.version {
            return Err(ServiceError::StaleVersion {
                base: base_version,
                current: latest.version,
            });
        }
        let emptied = text.trim().is_empty();
        if emptied && section != Section::Disliked {
            return Err(ServiceError::EmptySection(section));
        }
        let after = if emptied { "" } else { text };
        let record = record_edit(
            latest.user_id.clone(),
            section,
            latest.version,
            latest.version + 1,
            latest.section(section),
            after,
            now,
            self.embedder.as_ref(),
        )?;
        let mut next = latest.clone();
        next.version += 1;
        next.generated_at = now;
        *next.section_mut(section) = if emptied { NO_DISLIKES_PLACEHOLDER.to_owned() } else { text.to_owned() };
        next.authors.set(section, Author::User);
        store.record_edit(&record, next.clone())?;
        Ok((next, record))
    }

    /// Generates the next version unconditionally, carrying over the user's
    /// edits as context.
    pub fn regenerate(
        &self,
        store: &mut UserStore,
        now: DateTime<Utc>,
        reference_date: DateTime<Utc>,
    ) -> Result<Generated, ServiceError> {
        let state = store.state();
        let ratings = self.ratings_for(state);
        let previous = state.latest().map(|p| Previous {
            portrait: p,
            record: state.last_generation.as_ref(),
        });
        let generated = self
            .pipeline()
            .generate(&state.user_id, &ratings, reference_date, now, previous)?;
        store.record_generation(&generated.record, generated.portrait.clone())?;
        Ok(generated)
    }

    /// The scheduled check: generates a first portrait for a user without
    /// one, otherwise regenerates when the rating threshold is met (or
    /// `force`). `Ok(None)` means nothing changed.
    pub fn check(
        &self,
        store: &mut UserStore,
        now: DateTime<Utc>,
        reference_date: DateTime<Utc>,
        force: bool,
    ) -> Result<Option<Generated>, ServiceError> {
        let state = store.state();
        let Some(record) = &state.last_generation else {
            return self.regenerate(store, now, reference_date).map(Some);
        };
        let last_check = state.last_check.unwrap_or(record.generated_at);
        let due = should_regenerate(record, self.rating_count(state), &self.policy, now, last_check)?;
        if force || due {
            return self.regenerate(store, now, reference_date).map(Some);
        }
        // Only a check that the cadence allowed resets the cadence.
        if now - last_check >= self.policy.cadence {
            store.mark_checked(now);
        }
        Ok(None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edits::EditClass;
    use crate::metrics::{EventKind, InteractionEvent};
    use crate::semantic::MockEmbedder;
    use crate::summarize::MockSummarizer;
    use crate::synth::{synthetic_dataset, SynthParams};
    use chrono::{Duration, TimeZone};

    fn engine() -> Engine {
        let params = SynthParams {
            users: 3,
            movies: 60,
            ratings_per_user: 30..=30,
            ..SynthParams::default()
        };
        Engine::new(
            synthetic_dataset(&params, 7),
            Arc::new(MockEmbedder::new(64, 7)),
            Arc::new(MockSummarizer),
            PromptTemplates::default(),
            RegenerationPolicy::default(),
            20,
        )
    }

    fn t0() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2025, 6, 1, 0, 0, 0).unwrap()
    }

    #[test]
    fn edit_flow() {
        let e = engine();
        let dir = tempfile::tempdir().unwrap();
        let user = e.dataset_users().next().unwrap().clone();
        let mut s = UserStore::open(dir.path(), &user, 0).unwrap();
        assert!(matches!(
            e.apply_edit(&mut s, Section::Liked, "x", 1, t0()),
            Err(ServiceError::NotYetGenerated)
        ));
        let g = e.check(&mut s, t0(), t0(), false).unwrap().unwrap();
        assert_eq!(g.portrait.version, 1);
        assert_eq!(g.portrait.authors, crate::domain::SectionAuthors::uniform(Author::Ai));

        let liked = g.portrait.liked_summary.clone();
        let (p, rec) = e.apply_edit(&mut s, Section::Liked, &liked, 1, t0()).unwrap();
        assert_eq!(p.version, 2);
        assert_eq!(rec.summary_class, EditClass::Retained);
        assert_eq!(p.authors.get(Section::Liked), Author::User);
        assert_eq!(p.authors.get(Section::Recent), Author::Ai);

        assert!(matches!(
            e.apply_edit(&mut s, Section::Liked, "y", 1, t0()),
            Err(ServiceError::StaleVersion { base: 1, current: 2 })
        ));
        assert!(matches!(
            e.apply_edit(&mut s, Section::Recent, "  ", 2, t0()),
            Err(ServiceError::EmptySection(Section::Recent))
        ));
        let (p, rec) = e.apply_edit(&mut s, Section::Disliked, "", 2, t0()).unwrap();
        assert_eq!(p.disliked_summary, NO_DISLIKES_PLACEHOLDER);
        assert_eq!(rec.summary_class, EditClass::Pruned);
        assert_eq!(s.state().edit_count, 2);
    }

    #[test]
    fn threshold_gate() {
        let e = engine();
        let dir = tempfile::tempdir().unwrap();
        let user = e.dataset_users().next().unwrap().clone();
        let mut s = UserStore::open(dir.path(), &user, 0).unwrap();
        e.check(&mut s, t0(), t0(), false).unwrap().unwrap();
        let day = |d| t0() + Duration::days(d);
        // Three new ratings on a base of thirty meet the 10% threshold;
        // two do not.
        let movies: Vec<_> = e.dataset.catalog.movies.keys().cloned().collect();
        let rate = |s: &mut UserStore, i: usize, at| {
            s.record_event(&InteractionEvent {
                user_id: user.clone(),
                kind: EventKind::Rating,
                movie_id: Some(movies[i].clone()),
                score: Some(crate::domain::Score::new(4.0).unwrap()),
                timestamp: at,
            })
            .unwrap();
        };
        for i in 0..2 {
            rate(&mut s, i, day(1));
        }
        assert!(e.check(&mut s, day(1), day(1), false).unwrap().is_none());
        rate(&mut s, 2, day(1));
        // Cadence not yet elapsed since the last check.
        assert!(e.check(&mut s, day(1) + Duration::hours(3), day(1), false).unwrap().is_none());
        let g = e.check(&mut s, day(2), day(2), false).unwrap().unwrap();
        assert_eq!(g.portrait.version, 2);
        assert_eq!(g.record.ratings_count_at_generation, 33);
        assert!(e.check(&mut s, day(3), day(3), false).unwrap().is_none());
        assert!(e.check(&mut s, day(3), day(3), true).unwrap().is_some());
    }
}
