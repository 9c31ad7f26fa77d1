use serde::{Deserialize, Serialize};

use super::prompt::{render, PromptTemplates};
use super::{split_sentences, SummarizeError, SummaryProvider};
use crate::semantic::{cosine, InterestCluster, Polarity, SemanticError};

pub const NO_DISLIKES_PLACEHOLDER: &str = "No strong dislikes detected yet.";

/// Default cosine bound at or above which a disliked cluster is dropped.
pub const CONTRASTIVE_THRESHOLD: f64 = 0.8;

/// Keeps the disliked clusters whose centroid has cosine strictly below
/// `threshold` with every liked centroid.
pub fn contrastive_filter(
    liked: &[InterestCluster],
    disliked: &[InterestCluster],
    threshold: f64,
) -> Result<Vec<InterestCluster>, SemanticError> {
    let mut kept = Vec::new();
    'outer: for d in disliked {
        for l in liked {
            if cosine(&d.centroid, &l.centroid)? >= threshold {
                continue 'outer;
            }
        }
        kept.push(d.clone());
    }
    Ok(kept)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongtermSummary {
    pub liked_summary: String,
    pub disliked_summary: String,
    /// (cluster id, sentence) in summary order.
    pub liked_sentences: Vec<(String, String)>,
    pub disliked_sentences: Vec<(String, String)>,
    pub prompts: Vec<String>,
}

fn first_sentence(output: &str) -> Result<String, SummarizeError> {
    let s = split_sentences(output)
        .into_iter()
        .next()
        .ok_or_else(|| SummarizeError::ProviderFailure("empty completion".into()))?;
    let mut s = s.to_owned();
    if !s.ends_with(['.', '!', '?']) {
        s.push('.');
    }
    Ok(s)
}

fn cluster_prompt(
    cluster: &InterestCluster,
    templates: &PromptTemplates,
    context: &str,
) -> String {
    let phrase = match cluster.polarity {
        Polarity::Liked => "rated highly",
        Polarity::Disliked => "rated poorly",
    };
    let mut movies: Vec<&str> = cluster.member_tags.iter().map(|(_, m)| m.as_str()).collect();
    movies.sort_unstable();
    movies.dedup();
    movies.truncate(10);
    render(
        &templates.longterm,
        &[
            ("polarity_phrase", phrase),
            ("polarity", cluster.polarity.as_str()),
            ("terms", &cluster.top_terms.join("; ")),
            ("movies", &movies.join(", ")),
            ("context", context),
        ],
    )
}

/// One sentence per liked cluster and per disliked cluster that survives
/// contrastive filtering.
pub fn generate_longterm(
    clusters_liked: &[InterestCluster],
    clusters_disliked: &[InterestCluster],
    provider: &dyn SummaryProvider,
    user_context: Option<&str>,
    templates: &PromptTemplates,
) -> Result<LongtermSummary, SummarizeError> {
    if clusters_liked.is_empty() {
        return Err(SummarizeError::NoLikedClusters);
    }
    let surviving = contrastive_filter(clusters_liked, clusters_disliked, CONTRASTIVE_THRESHOLD)?;
    let context = templates.context_block(user_context);

    let mut prompts = Vec::new();
    let mut summarize = |clusters: &[InterestCluster]| -> Result<Vec<(String, String)>, SummarizeError> {
        clusters
            .iter()
            .map(|c| {
                let prompt = cluster_prompt(c, templates, &context);
                let sentence = first_sentence(&provider.complete(&prompt)?)?;
                prompts.push(prompt);
                Ok((c.id.clone(), sentence))
            })
            .collect()
    };
    let liked_sentences = summarize(clusters_liked)?;
    let disliked_sentences = summarize(&surviving)?;

    let join = |v: &[(String, String)]| v.iter().map(|(_, s)| s.as_str()).collect::<Vec<_>>().join(" ");
    let disliked_summary = if disliked_sentences.is_empty() {
        NO_DISLIKES_PLACEHOLDER.to_owned()
    } else {
        join(&disliked_sentences)
    };
    Ok(LongtermSummary {
        liked_summary: join(&liked_sentences),
        disliked_summary,
        liked_sentences,
        disliked_sentences,
        prompts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Embedding;
    use crate::semantic::ProviderError;
    use crate::summarize::{faithfulness_check, MockSummarizer};

    fn cluster(id: &str, polarity: Polarity, centroid: Vec<f64>, terms: &[&str]) -> InterestCluster {
        InterestCluster {
            id: id.into(),
            member_tags: terms.iter().map(|t| (t.to_string(), "m1".into())).collect(),
            centroid: Embedding::new(centroid).unwrap(),
            top_terms: terms.iter().map(|t| t.to_string()).collect(),
            polarity,
        }
    }

    fn at_cosine(c: f64) -> Vec<f64> {
        vec![c, (1.0 - c * c).sqrt()]
    }

    #[test]
    fn filter_boundaries() {
        let liked = [cluster("l", Polarity::Liked, vec![1.0, 0.0], &["a"])];
        let same = cluster("d0", Polarity::Disliked, vec![1.0, 0.0], &["a"]);
        let orth = cluster("d1", Polarity::Disliked, vec![0.0, 1.0], &["b"]);
        let kept = contrastive_filter(&liked, &[same, orth], 0.8).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].id, "d1");

        // Exactly 0.8 (constructed from a 3-4-5 triangle so the cosine is exact).
        let edge = cluster("d2", Polarity::Disliked, vec![4.0, 3.0], &["c"]);
        assert_eq!(cosine(&edge.centroid, &liked[0].centroid).unwrap(), 0.8);
        assert!(contrastive_filter(&liked, &[edge], 0.8).unwrap().is_empty());

        let below = cluster("d3", Polarity::Disliked, at_cosine(0.79), &["c"]);
        assert_eq!(contrastive_filter(&liked, &[below], 0.8).unwrap().len(), 1);
        assert_eq!(contrastive_filter(&[], &[orth_c()], 0.8).unwrap().len(), 1);
    }

    fn orth_c() -> InterestCluster {
        cluster("x", Polarity::Disliked, vec![0.0, 1.0], &["x"])
    }

    #[test]
    fn three_liked_no_disliked() {
        let liked: Vec<_> = (0..3)
            .map(|i| cluster(&format!("liked-{i}"), Polarity::Liked, vec![1.0, i as f64], &["t"]))
            .collect();
        let s = generate_longterm(&liked, &[], &MockSummarizer, None, &PromptTemplates::default()).unwrap();
        assert_eq!(split_sentences(&s.liked_summary).len(), 3);
        assert_eq!(s.disliked_summary, NO_DISLIKES_PLACEHOLDER);
        assert!(s.disliked_sentences.is_empty());
    }

    #[test]
    fn mock_sentence_mentions_terms() {
        let liked = [cluster("liked-0", Polarity::Liked, vec![1.0, 0.0], &["noir", "detective"])];
        let s = generate_longterm(&liked, &[], &MockSummarizer, None, &PromptTemplates::default()).unwrap();
        assert!(s.liked_summary.contains("noir"));
        assert!(s.liked_summary.contains("detective"));
        assert!(faithfulness_check(&s.liked_sentences[0].1, &liked[0]));
    }

    #[test]
    fn near_duplicate_dislike_removed() {
        let liked = [cluster("liked-0", Polarity::Liked, vec![1.0, 0.0], &["space opera"])];
        let disliked = [
            cluster("disliked-0", Polarity::Disliked, at_cosine(0.95), &["space"]),
            cluster("disliked-1", Polarity::Disliked, vec![0.0, 1.0], &["musical"]),
        ];
        let s = generate_longterm(&liked, &disliked, &MockSummarizer, None, &PromptTemplates::default()).unwrap();
        assert_eq!(s.disliked_sentences.len(), 1);
        assert_eq!(s.disliked_sentences[0].0, "disliked-1");
        assert_eq!(s.disliked_summary, "Movies featuring musical are generally not favored.");
    }

    #[test]
    fn context_reaches_prompt() {
        let liked = [cluster("liked-0", Polarity::Liked, vec![1.0, 0.0], &["noir"])];
        let s = generate_longterm(&liked, &[], &MockSummarizer, Some("I adore heist films."), &PromptTemplates::default())
            .unwrap();
        assert!(s.prompts[0].contains("The user previously wrote:\nI adore heist films."));
        assert_eq!(s.liked_summary, "Movies featuring noir appeal to you.");
    }

    #[test]
    fn errors() {
        assert_eq!(
            generate_longterm(&[], &[], &MockSummarizer, None, &PromptTemplates::default()),
            Err(SummarizeError::NoLikedClusters)
        );
        struct Down;
        impl SummaryProvider for Down {
            fn complete(&self, _: &str) -> Result<String, ProviderError> {
                Err(ProviderError::Unavailable("down".into()))
            }
        }
        let liked = [cluster("liked-0", Polarity::Liked, vec![1.0, 0.0], &["noir"])];
        assert!(matches!(
            generate_longterm(&liked, &[], &Down, None, &PromptTemplates::default()),
            Err(SummarizeError::ProviderFailure(_))
        ));
    }
}
