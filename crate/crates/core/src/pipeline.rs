//! One user's full generation pass: quartiles, tag clusters, long-term and
//! recent summaries, assembled into the next portrait version.

use chrono::{DateTime, Utc};
use thiserror::Error;

use crate::domain::{Author, MovieId, MovieRecord, Portrait, Section, SectionAuthors, UserId, ValidatedRating};
use crate::ingest::{extract_quartiles, Catalog, IngestError, QuartileSets};
use crate::semantic::{cluster_tags, ClusterParams, EmbeddingProvider, InterestCluster, Polarity, SemanticError};
use crate::summarize::{
    faithfulness_check, generate_longterm, generate_recent, prompt_hash, GenerationKind,
    GenerationRecord, PromptTemplates, SummarizeError, SummaryProvider, NO_RECENT_PLACEHOLDER,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("user {user} has {have} rated movies, {need} required")]
    TooFewRatings { user: UserId, have: usize, need: usize },
    #[error("user {0} has no ratings")]
    EmptyHistory(UserId),
    #[error(transparent)]
    Summarize(#[from] SummarizeError),
    #[error(transparent)]
    Semantic(#[from] SemanticError),
}

impl PipelineError {
    /// Whether the user simply does not qualify, as opposed to a failure.
    pub fn is_skip(&self) -> bool {
        matches!(
            self,
            PipelineError::TooFewRatings { .. }
                | PipelineError::EmptyHistory(_)
                | PipelineError::Summarize(SummarizeError::NoLikedClusters)
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub portrait: Portrait,
    pub record: GenerationRecord,
    pub quartiles: QuartileSets,
}

/// Shared, read-only inputs to generation.
#[derive(Clone, Copy)]
pub struct Pipeline<'a> {
    pub catalog: &'a Catalog,
    pub embedder: &'a dyn EmbeddingProvider,
    pub summarizer: &'a dyn SummaryProvider,
    pub templates: &'a PromptTemplates,
    pub cluster_params: ClusterParams,
    pub min_ratings: usize,
}

/// What a regeneration carries over from the previous version.
#[derive(Debug, Clone, Copy)]
pub struct Previous<'a> {
    pub portrait: &'a Portrait,
    pub record: Option<&'a GenerationRecord>,
}

/// Text the user wrote in the previous portrait, one line per user-authored
/// section. When the previous portrait has none, the context of the
/// previous generation is carried forward.
pub fn user_context(previous: Option<Previous<'_>>) -> Option<String> {
    let prev = previous?;
    let lines: Vec<String> = Section::ALL
        .iter()
        .filter(|s| prev.portrait.authors.get(**s) == Author::User)
        .map(|s| format!("{} summary: {}", section_label(*s), prev.portrait.section(*s).trim()))
        .collect();
    if lines.is_empty() {
        prev.record.and_then(|r| r.user_context.clone())
    } else {
        Some(lines.join("\n"))
    }
}

fn section_label(s: Section) -> &'static str {
    match s {
        Section::Recent => "Recent",
        Section::Liked => "Liked",
        Section::Disliked => "Disliked",
    }
}

impl Pipeline<'_> {
    fn tags_of<'m>(&self, movies: impl IntoIterator<Item = &'m MovieId>) -> Vec<(String, MovieId)> {
        movies
            .into_iter()
            .flat_map(|m| self.catalog.tags_for(m).iter().map(move |t| (t.text.clone(), m.clone())))
            .collect()
    }

    fn clusters(&self, movies: &std::collections::BTreeSet<MovieId>, polarity: Polarity) -> Result<Vec<InterestCluster>, SemanticError> {
        let tags = self.tags_of(movies);
        if tags.is_empty() {
            return Ok(Vec::new());
        }
        cluster_tags(&tags, self.embedder, self.cluster_params, polarity)
    }

    /// Builds the next portrait for `user` from their ratings. `ratings` may
    /// contain several ratings of one movie; only the latest counts.
    pub fn generate(
        &self,
        user: &UserId,
        ratings: &[ValidatedRating],
        reference_date: DateTime<Utc>,
        generated_at: DateTime<Utc>,
        previous: Option<Previous<'_>>,
    ) -> Result<Generated, PipelineError> {
        let quartiles = extract_quartiles(ratings, reference_date).map_err(|e| match e {
            IngestError::EmptyHistory => PipelineError::EmptyHistory(user.clone()),
            other => unreachable!("quartile extraction only fails on empty input: {other}"),
        })?;
        let distinct = crate::ingest::latest_per_movie(ratings).len();
        if distinct < self.min_ratings {
            return Err(PipelineError::TooFewRatings {
                user: user.clone(),
                have: distinct,
                need: self.min_ratings,
            });
        }
        let liked = self.clusters(&quartiles.liked_longterm, Polarity::Liked)?;
        let disliked = self.clusters(&quartiles.disliked_longterm, Polarity::Disliked)?;
        let context = user_context(previous);
        let longterm = generate_longterm(&liked, &disliked, self.summarizer, context.as_deref(), self.templates)?;

        let recent_movies: Vec<&MovieRecord> = quartiles
            .liked_recent
            .iter()
            .filter_map(|m| self.catalog.movie(m))
            .collect();
        let (recent_text, recent_prompt) = if recent_movies.is_empty() {
            (NO_RECENT_PLACEHOLDER.to_owned(), None)
        } else {
            let (t, p) = generate_recent(&recent_movies, self.summarizer, context.as_deref(), self.templates)?;
            (t, Some(p))
        };

        let all_clusters: Vec<&InterestCluster> = liked.iter().chain(&disliked).collect();
        let sentences: Vec<&(String, String)> =
            longterm.liked_sentences.iter().chain(&longterm.disliked_sentences).collect();
        let faithful = sentences
            .iter()
            .filter(|(id, s)| {
                all_clusters
                    .iter()
                    .find(|c| &c.id == id)
                    .is_some_and(|c| faithfulness_check(s, c))
            })
            .count();

        let version = previous.map_or(1, |p| p.portrait.version + 1);
        let author = if context.is_some() { Author::Merged } else { Author::Ai };
        let portrait = Portrait {
            user_id: user.clone(),
            recent_summary: recent_text,
            liked_summary: longterm.liked_summary.clone(),
            disliked_summary: longterm.disliked_summary.clone(),
            version,
            generated_at,
            authors: SectionAuthors::uniform(author),
        };
        let prompts = longterm.prompts.iter().map(String::as_str).chain(recent_prompt.as_deref());
        let record = GenerationRecord {
            user_id: user.clone(),
            portrait_version: version,
            kind: if previous.is_some() {
                GenerationKind::Regeneration
            } else {
                GenerationKind::Initial
            },
            generated_at,
            input_cluster_ids: sentences.iter().map(|(id, _)| id.clone()).collect(),
            ratings_count_at_generation: ratings.len() as u64,
            user_context: context,
            prompt_hash: prompt_hash(prompts),
            faithful_sentences: faithful,
            longterm_sentences: sentences.len(),
        };
        Ok(Generated {
            portrait,
            record,
            quartiles,
        })
    }
}
