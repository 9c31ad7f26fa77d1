use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::prompt::{render, PromptTemplates};
use super::{SummarizeError, SummaryProvider};
use crate::domain::{MovieRecord, NO_GENRES};

pub const NO_RECENT_PLACEHOLDER: &str = "No highly rated movies from the past year yet.";

const TOP_PER_FACET: usize = 3;

/// Top three values per facet with their movie counts, most frequent first
/// (ties alphabetical).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FacetTable {
    pub genres: Vec<(String, usize)>,
    pub actors: Vec<(String, usize)>,
    pub directors: Vec<(String, usize)>,
    pub release_years: Vec<(String, usize)>,
    pub languages: Vec<(String, usize)>,
}

fn top_values<'a>(values: impl Iterator<Item = &'a str>) -> Vec<(String, usize)> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for v in values {
        let v = v.trim();
        if !v.is_empty() {
            *counts.entry(v).or_default() += 1;
        }
    }
    let mut sorted: Vec<(&str, usize)> = counts.into_iter().collect();
    sorted.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    sorted
        .into_iter()
        .take(TOP_PER_FACET)
        .map(|(v, c)| (v.to_owned(), c))
        .collect()
}

pub fn facet_table(movies: &[&MovieRecord]) -> FacetTable {
    // Each movie counts once per distinct value.
    fn dedup(v: &[String]) -> Vec<&str> {
        let mut v: Vec<&str> = v.iter().map(String::as_str).collect();
        v.sort_unstable();
        v.dedup();
        v
    }
    let years: Vec<String> = movies
        .iter()
        .filter_map(|m| m.release_year.map(|y| y.to_string()))
        .collect();
    FacetTable {
        genres: top_values(
            movies
                .iter()
                .flat_map(|m| dedup(&m.genres))
                .filter(|g| *g != NO_GENRES),
        ),
        actors: top_values(movies.iter().flat_map(|m| dedup(&m.actors))),
        directors: top_values(movies.iter().flat_map(|m| dedup(&m.directors))),
        release_years: top_values(years.iter().map(String::as_str)),
        languages: top_values(movies.iter().map(|m| m.language.as_str())),
    }
}

impl FacetTable {
    /// Prompt rendering, one `- facet: value (n); ...` line per facet.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (name, values) in [
            ("genres", &self.genres),
            ("actors", &self.actors),
            ("directors", &self.directors),
            ("release years", &self.release_years),
            ("languages", &self.languages),
        ] {
            let joined = values
                .iter()
                .map(|(v, c)| format!("{v} ({c})"))
                .collect::<Vec<_>>()
                .join("; ");
            let _ = writeln!(out, "- {name}: {joined}");
        }
        out
    }
}

/// Five-sentence summary of the recent liked set. Returns the text and the
/// prompt it came from.
pub fn generate_recent(
    recent_movies: &[&MovieRecord],
    provider: &dyn SummaryProvider,
    user_context: Option<&str>,
    templates: &PromptTemplates,
) -> Result<(String, String), SummarizeError> {
    if recent_movies.is_empty() {
        return Err(SummarizeError::EmptyRecentSet);
    }
    let table = facet_table(recent_movies);
    let prompt = render(
        &templates.recent,
        &[
            ("facets", table.render().trim_end()),
            ("context", &templates.context_block(user_context)),
        ],
    );
    let text = provider.complete(&prompt)?.trim().to_owned();
    if text.is_empty() {
        return Err(SummarizeError::ProviderFailure("empty completion".into()));
    }
    Ok((text, prompt))
}
