use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use super::SummarizeError;
use crate::domain::UserId;

/// When to regenerate: at most once per `cadence`, and only after the user
/// added `absolute_threshold` ratings or `fraction_threshold` of the count
/// at the last generation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegenerationPolicy {
    pub fraction_threshold: f64,
    pub absolute_threshold: u64,
    pub cadence: Duration,
}

impl Default for RegenerationPolicy {
    fn default() -> Self {
        RegenerationPolicy {
            fraction_threshold: 0.10,
            absolute_threshold: 10,
            cadence: Duration::days(1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GenerationKind {
    Initial,
    Regeneration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub user_id: UserId,
    pub portrait_version: u64,
    pub kind: GenerationKind,
    pub generated_at: DateTime<Utc>,
    pub input_cluster_ids: Vec<String>,
    pub ratings_count_at_generation: u64,
    pub user_context: Option<String>,
    pub prompt_hash: String,
    /// Long-term sentences that mention a top term of their cluster.
    pub faithful_sentences: usize,
    pub longterm_sentences: usize,
}

pub fn should_regenerate(
    record: &GenerationRecord,
    current_rating_count: u64,
    policy: &RegenerationPolicy,
    now: DateTime<Utc>,
    last_check: DateTime<Utc>,
) -> Result<bool, SummarizeError> {
    if now < last_check {
        return Err(SummarizeError::ClockSkew);
    }
    if now - last_check < policy.cadence {
        return Ok(false);
    }
    let base = record.ratings_count_at_generation;
    let delta = current_rating_count.saturating_sub(base);
    if delta == 0 {
        return Ok(false);
    }
    // Relative slack absorbs representation error in e.g. 0.1 * 30.
    let fractional = policy.fraction_threshold * base as f64;
    Ok(delta >= policy.absolute_threshold || delta as f64 >= fractional * (1.0 - 1e-12))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn record(base: u64) -> GenerationRecord {
        GenerationRecord {
            user_id: "u".into(),
            portrait_version: 1,
            kind: GenerationKind::Initial,
            generated_at: Utc.timestamp_opt(0, 0).unwrap(),
            input_cluster_ids: vec![],
            ratings_count_at_generation: base,
            user_context: None,
            prompt_hash: String::new(),
            faithful_sentences: 0,
            longterm_sentences: 0,
        }
    }

    fn t(h: i64) -> DateTime<Utc> {
        Utc.timestamp_opt(h * 3600, 0).unwrap()
    }

    fn check(base: u64, current: u64) -> bool {
        should_regenerate(&record(base), current, &RegenerationPolicy::default(), t(24), t(0)).unwrap()
    }

    #[test]
    fn documented_cases() {
        assert!(check(100, 110));
        assert!(!check(200, 209));
        assert!(check(40, 46));
        assert!(check(30, 33));
        assert!(!check(30, 32));
    }

    #[test]
    fn cadence_and_skew() {
        let p = RegenerationPolicy::default();
        assert!(!should_regenerate(&record(10), 100, &p, t(23), t(0)).unwrap());
        assert_eq!(
            should_regenerate(&record(10), 100, &p, t(0), t(1)),
            Err(SummarizeError::ClockSkew)
        );
    }

    proptest! {
        #[test]
        fn monotone_in_count(base in 0u64..1000, a in 0u64..200, b in 0u64..200) {
            let (lo, hi) = (a.min(b), a.max(b));
            if check(base, base + lo) {
                prop_assert!(check(base, base + hi));
            }
        }
    }
}
