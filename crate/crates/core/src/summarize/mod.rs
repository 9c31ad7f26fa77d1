//! Portrait text generation: long-term liked/disliked summaries from tag
//! clusters with contrastive filtering, the recent-interest summary from
//! facet counts, the regeneration trigger, and the faithfulness check.

mod http;
mod longterm;
mod mock;
mod prompt;
mod recent;
mod trigger;

pub use http::HttpSummarizer;
pub use longterm::{contrastive_filter, generate_longterm, LongtermSummary, NO_DISLIKES_PLACEHOLDER};
pub use mock::MockSummarizer;
pub use prompt::{prompt_hash, PromptTemplates, CONTEXT_HEADER};
pub use recent::{facet_table, generate_recent, FacetTable, NO_RECENT_PLACEHOLDER};
pub use trigger::{should_regenerate, GenerationKind, GenerationRecord, RegenerationPolicy};

use thiserror::Error;

use crate::semantic::{normalize_text, InterestCluster, ProviderError, SemanticError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SummarizeError {
    #[error("summary provider failed: {0}")]
    ProviderFailure(String),
    #[error("no liked clusters to summarize")]
    NoLikedClusters,
    #[error("no recent movies to summarize")]
    EmptyRecentSet,
    #[error("clock skew: now is before the last check")]
    ClockSkew,
    #[error(transparent)]
    Semantic(#[from] SemanticError),
}

impl From<ProviderError> for SummarizeError {
    fn from(e: ProviderError) -> Self {
        SummarizeError::ProviderFailure(e.to_string())
    }
}

/// Turns a prompt into text. The mock implementation is deterministic.
pub trait SummaryProvider: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, ProviderError>;
}

impl<T: SummaryProvider + ?Sized> SummaryProvider for std::sync::Arc<T> {
    fn complete(&self, prompt: &str) -> Result<String, ProviderError> {
        (**self).complete(prompt)
    }
}

/// Splits on `.`, `!` or `?` followed by whitespace or end of text. A period
/// after a lone capital letter (a middle initial) does not end a sentence.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    for (i, &(pos, c)) in chars.iter().enumerate() {
        if !matches!(c, '.' | '!' | '?') {
            continue;
        }
        let at_end = i + 1 == chars.len();
        let before_space = chars.get(i + 1).is_some_and(|(_, n)| n.is_whitespace());
        if !(at_end || before_space) {
            continue;
        }
        if c == '.' && !at_end && is_initial(&text[start..pos]) {
            continue;
        }
        let end = pos + c.len_utf8();
        let s = text[start..end].trim();
        if !s.is_empty() {
            out.push(s);
        }
        start = end;
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

fn is_initial(before: &str) -> bool {
    let mut rev = before.chars().rev();
    matches!(
        (rev.next(), rev.next()),
        (Some(c), Some(p)) if c.is_uppercase() && p.is_whitespace()
    )
}

/// A sentence is faithful to its cluster when it mentions at least one of
/// the cluster's top terms (case and whitespace insensitive).
pub fn faithfulness_check(sentence: &str, cluster: &InterestCluster) -> bool {
    let s = normalize_text(sentence);
    if s.is_empty() {
        return false;
    }
    cluster
        .top_terms
        .iter()
        .map(|t| normalize_text(t))
        .any(|t| !t.is_empty() && s.contains(&t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Embedding;
    use crate::semantic::Polarity;

    fn cluster(terms: &[&str]) -> InterestCluster {
        InterestCluster {
            id: "liked-0".into(),
            member_tags: terms.iter().map(|t| (t.to_string(), "m".into())).collect(),
            centroid: Embedding::new(vec![1.0, 0.0]).unwrap(),
            top_terms: terms.iter().map(|t| t.to_string()).collect(),
            polarity: Polarity::Liked,
        }
    }

    #[test]
    fn sentences() {
        assert_eq!(split_sentences("A b. C d! E f? G"), vec!["A b.", "C d!", "E f?", "G"]);
        assert_eq!(split_sentences("Version 2.5 rocks."), vec!["Version 2.5 rocks."]);
        assert_eq!(
            split_sentences("Movies starring Michael J. Fox are fine. Next."),
            vec!["Movies starring Michael J. Fox are fine.", "Next."]
        );
        assert!(split_sentences("   ").is_empty());
    }

    #[test]
    fn faithfulness() {
        let c = cluster(&["noir", "detective"]);
        assert!(faithfulness_check("Movies featuring noir detectives appeal to you.", &c));
        assert!(faithfulness_check("NOIR  films", &c));
        assert!(!faithfulness_check("Reality TV is garbage", &cluster(&["noir"])));
        assert!(!faithfulness_check("", &c));
    }
}
