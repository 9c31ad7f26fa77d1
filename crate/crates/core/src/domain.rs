//! Shared domain types: identifiers, ratings, catalog records, embeddings and
//! the three-section portrait with its version chain.

use std::fmt;

use chrono::{DateTime, Datelike, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Opaque user identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(pub String);

/// Opaque movie identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MovieId(pub String);

macro_rules! id_impls {
    ($t:ty) => {
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }
        impl From<&str> for $t {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }
        impl From<String> for $t {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
        impl $t {
            pub fn as_str(&self) -> &str {
                &self.0
            }
        }
    };
}
id_impls!(UserId);
id_impls!(MovieId);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("score {0} is not on the half-point grid [0.5, 5.0]")]
    ScoreOffGrid(f64),
    #[error("unparseable timestamp {0:?}")]
    BadTimestamp(String),
    #[error("embedding must have dimension >= 2, got {0}")]
    BadDimension(usize),
    #[error("embedding contains a non-finite entry")]
    NonFinite,
    #[error("portrait version {got} does not follow {expected}")]
    VersionGap { expected: u64, got: u64 },
    #[error("portrait for user {0} appended to chain of another user")]
    ForeignPortrait(UserId),
}

/// A rating on the half-point scale, stored as a count of half points (1..=10).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Score(u8);

impl Score {
    pub fn new(value: f64) -> Result<Self, DomainError> {
        let halves = value * 2.0;
        if !value.is_finite() || halves.fract() != 0.0 || !(1.0..=10.0).contains(&halves) {
            return Err(DomainError::ScoreOffGrid(value));
        }
        Ok(Score(halves as u8))
    }

    pub fn value(self) -> f64 {
        f64::from(self.0) / 2.0
    }

    pub fn half_points(self) -> u8 {
        self.0
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.1}", self.value())
    }
}

impl Serialize for Score {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.value())
    }
}

impl<'de> Deserialize<'de> for Score {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        Score::new(v).map_err(serde::de::Error::custom)
    }
}

/// A catalog entry. Facets other than genres are optional in the input files
/// and default to empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovieRecord {
    pub movie_id: MovieId,
    pub title: String,
    pub genres: Vec<String>,
    #[serde(default)]
    pub actors: Vec<String>,
    #[serde(default)]
    pub directors: Vec<String>,
    #[serde(default)]
    pub language: String,
    pub release_year: Option<i32>,
    /// Number of ratings the movie has in the ingested corpus.
    #[serde(default)]
    pub popularity: f64,
}

pub const NO_GENRES: &str = "(no genres listed)";

/// Earliest accepted release year.
pub const MIN_RELEASE_YEAR: i32 = 1870;

pub fn release_year_valid(year: i32) -> bool {
    (MIN_RELEASE_YEAR..=Utc::now().year() + 2).contains(&year)
}

/// A rating as it arrives from an input file, before validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingEvent {
    pub user_id: UserId,
    pub movie_id: MovieId,
    pub score: f64,
    /// Epoch seconds or RFC 3339.
    pub timestamp: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ValidatedRating {
    pub user_id: UserId,
    pub movie_id: MovieId,
    pub score: Score,
    pub timestamp: DateTime<Utc>,
}

pub fn parse_timestamp(raw: &str) -> Result<DateTime<Utc>, DomainError> {
    let trimmed = raw.trim();
    if let Ok(secs) = trimmed.parse::<i64>() {
        return Utc
            .timestamp_opt(secs, 0)
            .single()
            .ok_or_else(|| DomainError::BadTimestamp(raw.to_owned()));
    }
    DateTime::parse_from_rfc3339(trimmed)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|_| DomainError::BadTimestamp(raw.to_owned()))
}

pub fn validate_rating(event: &RatingEvent) -> Result<ValidatedRating, DomainError> {
    let score = Score::new(event.score)?;
    let timestamp = parse_timestamp(&event.timestamp)?;
    Ok(ValidatedRating {
        user_id: event.user_id.clone(),
        movie_id: event.movie_id.clone(),
        score,
        timestamp,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tag {
    pub text: String,
    pub relevance: f64,
}

pub const MAX_TAGS_PER_MOVIE: usize = 10;

/// A movie's community tags, most relevant first, at most ten.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedMovie {
    pub movie_id: MovieId,
    pub top_tags: Vec<Tag>,
}

impl TaggedMovie {
    /// Sorts by descending relevance (ties by text) and keeps the top ten.
    pub fn new(movie_id: MovieId, mut tags: Vec<Tag>) -> Self {
        tags.sort_by(|a, b| {
            b.relevance
                .total_cmp(&a.relevance)
                .then_with(|| a.text.cmp(&b.text))
        });
        tags.truncate(MAX_TAGS_PER_MOVIE);
        TaggedMovie {
            movie_id,
            top_tags: tags,
        }
    }
}

/// A finite real vector of dimension at least two.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self, DomainError> {
        if values.len() < 2 {
            return Err(DomainError::BadDimension(values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DomainError::NonFinite);
        }
        Ok(Embedding(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Arithmetic mean of equally sized vectors. Returns `None` for an empty
    /// slice or mixed dimensions.
    pub fn mean<'a>(items: impl IntoIterator<Item = &'a Embedding>) -> Option<Embedding> {
        let mut acc: Option<Vec<f64>> = None;
        let mut n = 0usize;
        for e in items {
            match acc.as_mut() {
                None => acc = Some(e.0.clone()),
                Some(a) => {
                    if a.len() != e.0.len() {
                        return None;
                    }
                    a.iter_mut().zip(&e.0).for_each(|(x, y)| *x += y);
                }
            }
            n += 1;
        }
        let mut a = acc?;
        let inv = 1.0 / n as f64;
        a.iter_mut().for_each(|x| *x *= inv);
        Some(Embedding(a))
    }
}

impl TryFrom<Vec<f64>> for Embedding {
    type Error = DomainError;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Embedding::new(v)
    }
}

impl From<Embedding> for Vec<f64> {
    fn from(e: Embedding) -> Self {
        e.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Section {
    Recent,
    Liked,
    Disliked,
}

impl Section {
    pub const ALL: [Section; 3] = [Section::Recent, Section::Liked, Section::Disliked];

    pub fn as_str(self) -> &'static str {
        match self {
            Section::Recent => "recent",
            Section::Liked => "liked",
            Section::Disliked => "disliked",
        }
    }
}

impl fmt::Display for Section {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Section {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "recent" => Ok(Section::Recent),
            "liked" => Ok(Section::Liked),
            "disliked" => Ok(Section::Disliked),
            other => Err(format!("unknown section {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Author {
    Ai,
    User,
    /// Regenerated by the model with user-edited text as context.
    Merged,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionAuthors {
    pub recent: Author,
    pub liked: Author,
    pub disliked: Author,
}

impl SectionAuthors {
    pub fn uniform(author: Author) -> Self {
        SectionAuthors {
            recent: author,
            liked: author,
            disliked: author,
        }
    }

    pub fn get(&self, section: Section) -> Author {
        match section {
            Section::Recent => self.recent,
            Section::Liked => self.liked,
            Section::Disliked => self.disliked,
        }
    }

    pub fn set(&mut self, section: Section, author: Author) {
        match section {
            Section::Recent => self.recent = author,
            Section::Liked => self.liked = author,
            Section::Disliked => self.disliked = author,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Portrait {
    pub user_id: UserId,
    pub recent_summary: String,
    pub liked_summary: String,
    pub disliked_summary: String,
    pub version: u64,
    pub generated_at: DateTime<Utc>,
    pub authors: SectionAuthors,
}

impl Portrait {
    pub fn section(&self, section: Section) -> &str {
        match section {
            Section::Recent => &self.recent_summary,
            Section::Liked => &self.liked_summary,
            Section::Disliked => &self.disliked_summary,
        }
    }

    pub fn section_mut(&mut self, section: Section) -> &mut String {
        match section {
            Section::Recent => &mut self.recent_summary,
            Section::Liked => &mut self.liked_summary,
            Section::Disliked => &mut self.disliked_summary,
        }
    }
}

/// All versions of one user's portrait, contiguous from version 1.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PortraitChain {
    versions: Vec<Portrait>,
}

impl PortraitChain {
    pub fn latest(&self) -> Option<&Portrait> {
        self.versions.last()
    }

    pub fn next_version(&self) -> u64 {
        self.versions.last().map_or(1, |p| p.version + 1)
    }

    pub fn push(&mut self, portrait: Portrait) -> Result<(), DomainError> {
        let expected = self.next_version();
        if portrait.version != expected {
            return Err(DomainError::VersionGap {
                expected,
                got: portrait.version,
            });
        }
        if let Some(first) = self.versions.first() {
            if first.user_id != portrait.user_id {
                return Err(DomainError::ForeignPortrait(portrait.user_id));
            }
        }
        self.versions.push(portrait);
        Ok(())
    }

    pub fn versions(&self) -> &[Portrait] {
        &self.versions
    }

    pub fn len(&self) -> usize {
        self.versions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.versions.is_empty()
    }
}
