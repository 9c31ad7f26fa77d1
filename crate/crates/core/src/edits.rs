//! Classification of user edits into retained, reworded and pruned, at the
//! level of whole sections and of individual sentences.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Section, UserId};
use crate::semantic::{cosine, EmbeddingProvider, ProviderError, SemanticError};
use crate::summarize::split_sentences;

/// Lower bound of the retained band.
pub const RETAINED_MIN: f64 = 0.95;
/// Lower bound of the reworded band.
pub const REWORDED_MIN: f64 = 0.60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditClass {
    Retained,
    Reworded,
    Pruned,
}

impl EditClass {
    /// Half-open bands: `[0.95, 1]` retained, `[0.60, 0.95)` reworded, the
    /// rest (including NaN) pruned.
    pub fn from_similarity(similarity: f64) -> Self {
        if similarity >= RETAINED_MIN {
            EditClass::Retained
        } else if similarity >= REWORDED_MIN {
            EditClass::Reworded
        } else {
            EditClass::Pruned
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EditClass::Retained => "retained",
            EditClass::Reworded => "reworded",
            EditClass::Pruned => "pruned",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EditError {
    #[error("the text before the edit is empty")]
    EmptyBefore,
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Semantic(#[from] SemanticError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceEdit {
    pub before: String,
    pub after: Option<String>,
    pub class: EditClass,
    pub similarity: f64,
}

/// One saved edit of one portrait section. Records are append-only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditRecord {
    pub user_id: UserId,
    pub section: Section,
    pub base_version: u64,
    pub new_version: u64,
    pub before_text: String,
    pub after_text: String,
    pub timestamp: DateTime<Utc>,
    pub summary_class: EditClass,
    pub similarity: f64,
    pub sentence_classes: Vec<SentenceEdit>,
}

fn similarity(a: &str, b: &str, provider: &dyn EmbeddingProvider) -> Result<f64, EditError> {
    if a == b {
        return Ok(1.0);
    }
    let v = provider.embed(&[a, b])?;
    Ok(cosine(&v[0], &v[1])?)
}

/// Embedding similarity of the two texts and its class. An empty `after`
/// is a deletion: pruned with similarity 0.
pub fn classify(
    before: &str,
    after: &str,
    provider: &dyn EmbeddingProvider,
) -> Result<(EditClass, f64), EditError> {
    if before.trim().is_empty() {
        return Err(EditError::EmptyBefore);
    }
    if after.trim().is_empty() {
        return Ok((EditClass::Pruned, 0.0));
    }
    let sim = similarity(before, after, provider)?;
    Ok((EditClass::from_similarity(sim), sim))
}

/// Matches each sentence of `before` to at most one sentence of `after`,
/// greedily taking the most similar remaining pair first, and classifies each
/// pair. Unmatched sentences are pruned.
pub fn classify_sentences(
    before: &str,
    after: &str,
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<SentenceEdit>, EditError> {
    let bs = split_sentences(before);
    if bs.is_empty() {
        return Err(EditError::EmptyBefore);
    }
    let as_ = split_sentences(after);
    let mut matched: Vec<Option<(usize, f64)>> = vec![None; bs.len()];
    if !as_.is_empty() {
        let texts: Vec<&str> = bs.iter().chain(as_.iter()).copied().collect();
        let vecs = provider.embed(&texts)?;
        let (bv, av) = vecs.split_at(bs.len());
        let mut pairs = Vec::with_capacity(bs.len() * as_.len());
        for (i, b) in bs.iter().enumerate() {
            for (j, a) in as_.iter().enumerate() {
                let s = if b == a { 1.0 } else { cosine(&bv[i], &av[j])? };
                pairs.push((s, i, j));
            }
        }
        pairs.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
        let mut used = vec![false; as_.len()];
        for (s, i, j) in pairs {
            if matched[i].is_none() && !used[j] {
                matched[i] = Some((j, s));
                used[j] = true;
            }
        }
    }
    Ok(bs
        .iter()
        .zip(matched)
        .map(|(b, m)| match m {
            Some((j, s)) => SentenceEdit {
                before: (*b).to_owned(),
                after: Some(as_[j].to_owned()),
                class: EditClass::from_similarity(s),
                similarity: s,
            },
            None => SentenceEdit {
                before: (*b).to_owned(),
                after: None,
                class: EditClass::Pruned,
                similarity: 0.0,
            },
        })
        .collect())
}

/// Builds the full record for a section edit.
#[allow(clippy::too_many_arguments)]
pub fn record_edit(
    user_id: UserId,
    section: Section,
    base_version: u64,
    new_version: u64,
    before_text: &str,
    after_text: &str,
    timestamp: DateTime<Utc>,
    provider: &dyn EmbeddingProvider,
) -> Result<EditRecord, EditError> {
    let (summary_class, similarity) = classify(before_text, after_text, provider)?;
    let sentence_classes = classify_sentences(before_text, after_text, provider)?;
    Ok(EditRecord {
        user_id,
        section,
        base_version,
        new_version,
        before_text: before_text.to_owned(),
        after_text: after_text.to_owned(),
        timestamp,
        summary_class,
        similarity,
        sentence_classes,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeeklyCount {
    pub week_index: u32,
    pub section: Section,
    pub class: EditClass,
    pub count: usize,
}

/// Summary-level edit counts per week since `experiment_start` (week 1 is
/// days 0..7). Edits before the start are ignored.
pub fn weekly_edit_series(edits: &[EditRecord], experiment_start: DateTime<Utc>) -> Vec<WeeklyCount> {
    let mut counts: BTreeMap<(u32, Section, EditClass), usize> = BTreeMap::new();
    for e in edits {
        if e.timestamp < experiment_start {
            continue;
        }
        let days = (e.timestamp - experiment_start).num_days();
        let week = (days / 7) as u32 + 1;
        *counts.entry((week, e.section, e.summary_class)).or_default() += 1;
    }
    counts
        .into_iter()
        .map(|((week_index, section, class), count)| WeeklyCount {
            week_index,
            section,
            class,
            count,
        })
        .collect()
}
