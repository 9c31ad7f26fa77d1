//! MovieLens-style CSV loading and per-user quartile extraction.
//!
//! Input files are comma separated with a header row. `movies.csv` needs
//! `movieId,title,genres` and may carry `actors`, `directors` (pipe
//! separated), `language` and `year`. `ratings.csv` is
//! `userId,movieId,rating,timestamp` with epoch seconds, and `tags.csv` is
//! `movieId,tag,relevance`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    release_year_valid, validate_rating, DomainError, MovieId, MovieRecord, RatingEvent, Score,
    Tag, TaggedMovie, UserId, ValidatedRating, NO_GENRES,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("{file}:{line}: {reason}")]
    MalformedRow {
        file: PathBuf,
        line: u64,
        reason: String,
    },
    #[error("{file}:{line}: tag row references unknown movie {movie_id}")]
    DanglingTagReference {
        file: PathBuf,
        line: u64,
        movie_id: MovieId,
    },
    #[error("empty rating history")]
    EmptyHistory,
    #[error("io error on {0}: {1}")]
    Io(PathBuf, std::io::Error),
}

/// Movies and their top community tags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub movies: BTreeMap<MovieId, MovieRecord>,
    pub tags: BTreeMap<MovieId, TaggedMovie>,
}

impl Catalog {
    pub fn movie(&self, id: &MovieId) -> Option<&MovieRecord> {
        self.movies.get(id)
    }

    /// Top tags for a movie; empty when the movie has none.
    pub fn tags_for(&self, id: &MovieId) -> &[Tag] {
        self.tags.get(id).map_or(&[], |t| t.top_tags.as_slice())
    }

    /// Sets each movie's popularity to its rating count in `ratings`.
    pub fn set_popularity(&mut self, ratings: &[ValidatedRating]) {
        let mut counts: HashMap<&MovieId, usize> = HashMap::new();
        for r in ratings {
            *counts.entry(&r.movie_id).or_default() += 1;
        }
        for (id, movie) in self.movies.iter_mut() {
            movie.popularity = counts.get(id).copied().unwrap_or(0) as f64;
        }
    }
}

fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>, IngestError> {
    if !path.is_file() {
        return Err(IngestError::MissingFile(path.to_owned()));
    }
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> IngestError {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => IngestError::Io(path.to_owned(), io),
        kind => IngestError::MalformedRow {
            file: path.to_owned(),
            line,
            reason: format!("{kind:?}"),
        },
    }
}

struct Columns(HashMap<String, usize>);

impl Columns {
    fn new(headers: &csv::StringRecord) -> Self {
        Columns(
            headers
                .iter()
                .enumerate()
                .map(|(i, h)| (h.trim().to_owned(), i))
                .collect(),
        )
    }

    fn require(&self, name: &str, path: &Path) -> Result<usize, IngestError> {
        self.0.get(name).copied().ok_or_else(|| IngestError::MalformedRow {
            file: path.to_owned(),
            line: 1,
            reason: format!("missing column {name}"),
        })
    }

    fn optional(&self, name: &str) -> Option<usize> {
        self.0.get(name).copied()
    }
}

fn split_list(raw: &str) -> Vec<String> {
    raw.split('|')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Pulls a trailing "(1995)" out of a MovieLens title.
fn year_from_title(title: &str) -> Option<i32> {
    let t = title.trim_end();
    let inner = t.strip_suffix(')')?;
    let open = inner.rfind('(')?;
    inner[open + 1..].trim().parse().ok()
}

pub fn load_movies(path: &Path) -> Result<BTreeMap<MovieId, MovieRecord>, IngestError> {
    let mut rdr = open_csv(path)?;
    let cols = Columns::new(rdr.headers().map_err(|e| csv_error(path, e))?);
    let id_col = cols.require("movieId", path)?;
    let title_col = cols.require("title", path)?;
    let genres_col = cols.require("genres", path)?;
    let actors_col = cols.optional("actors");
    let directors_col = cols.optional("directors");
    let language_col = cols.optional("language");
    let year_col = cols.optional("year");

    let mut movies = BTreeMap::new();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let line = row.position().map_or(0, |p| p.line());
        let malformed = |reason: String| IngestError::MalformedRow {
            file: path.to_owned(),
            line,
            reason,
        };
        let field = |i: Option<usize>| i.and_then(|i| row.get(i)).unwrap_or("").trim();

        let movie_id = MovieId(field(Some(id_col)).to_owned());
        if movie_id.0.is_empty() {
            return Err(malformed("empty movieId".into()));
        }
        let title = field(Some(title_col)).to_owned();
        let mut genres = split_list(field(Some(genres_col)));
        if genres.is_empty() {
            genres.push(NO_GENRES.to_owned());
        }
        let release_year = match field(year_col) {
            "" => year_from_title(&title),
            y => Some(
                y.parse::<i32>()
                    .map_err(|_| malformed(format!("bad year {y:?}")))?,
            ),
        };
        if let Some(y) = release_year {
            if !release_year_valid(y) {
                return Err(malformed(format!("release year {y} out of range")));
            }
        }
        let record = MovieRecord {
            movie_id: movie_id.clone(),
            title,
            genres,
            actors: split_list(field(actors_col)),
            directors: split_list(field(directors_col)),
            language: field(language_col).to_owned(),
            release_year,
            popularity: 0.0,
        };
        if movies.insert(movie_id.clone(), record).is_some() {
            return Err(malformed(format!("duplicate movieId {movie_id}")));
        }
    }
    Ok(movies)
}

pub fn load_catalog(movies_path: &Path, tags_path: &Path) -> Result<Catalog, IngestError> {
    let movies = load_movies(movies_path)?;
    let mut rdr = open_csv(tags_path)?;
    let cols = Columns::new(rdr.headers().map_err(|e| csv_error(tags_path, e))?);
    let id_col = cols.require("movieId", tags_path)?;
    let tag_col = cols.require("tag", tags_path)?;
    let rel_col = cols.require("relevance", tags_path)?;

    let mut raw: BTreeMap<MovieId, Vec<Tag>> = BTreeMap::new();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_error(tags_path, e))?;
        let line = row.position().map_or(0, |p| p.line());
        let movie_id = MovieId(row.get(id_col).unwrap_or("").trim().to_owned());
        if !movies.contains_key(&movie_id) {
            return Err(IngestError::DanglingTagReference {
                file: tags_path.to_owned(),
                line,
                movie_id,
            });
        }
        let text = row.get(tag_col).unwrap_or("").trim().to_owned();
        let relevance: f64 = row
            .get(rel_col)
            .unwrap_or("")
            .trim()
            .parse()
            .ok()
            .filter(|r: &f64| (0.0..=1.0).contains(r))
            .ok_or_else(|| IngestError::MalformedRow {
                file: tags_path.to_owned(),
                line,
                reason: "relevance must be a number in [0,1]".into(),
            })?;
        if text.is_empty() {
            return Err(IngestError::MalformedRow {
                file: tags_path.to_owned(),
                line,
                reason: "empty tag".into(),
            });
        }
        raw.entry(movie_id).or_default().push(Tag { text, relevance });
    }

    let tags = movies
        .keys()
        .map(|id| {
            let t = raw.remove(id).unwrap_or_default();
            (id.clone(), TaggedMovie::new(id.clone(), t))
        })
        .collect();
    Ok(Catalog { movies, tags })
}

pub fn load_ratings(path: &Path) -> Result<Vec<ValidatedRating>, IngestError> {
    let mut rdr = open_csv(path)?;
    let cols = Columns::new(rdr.headers().map_err(|e| csv_error(path, e))?);
    let user_col = cols.require("userId", path)?;
    let movie_col = cols.require("movieId", path)?;
    let rating_col = cols.require("rating", path)?;
    let ts_col = cols.require("timestamp", path)?;

    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let line = row.position().map_or(0, |p| p.line());
        let malformed = |reason: String| IngestError::MalformedRow {
            file: path.to_owned(),
            line,
            reason,
        };
        let get = |i: usize| row.get(i).unwrap_or("").trim();
        let score: f64 = get(rating_col)
            .parse()
            .map_err(|_| malformed(format!("bad rating {:?}", get(rating_col))))?;
        let event = RatingEvent {
            user_id: UserId(get(user_col).to_owned()),
            movie_id: MovieId(get(movie_col).to_owned()),
            score,
            timestamp: get(ts_col).to_owned(),
        };
        let rating = validate_rating(&event).map_err(|e: DomainError| malformed(e.to_string()))?;
        out.push(rating);
    }
    Ok(out)
}

/// Keeps only the latest rating per (user, movie). Returns the survivors
/// sorted by (user, timestamp, movie) and the number of rows dropped.
pub fn dedupe_latest(ratings: Vec<ValidatedRating>) -> (Vec<ValidatedRating>, usize) {
    let total = ratings.len();
    let mut latest: HashMap<(UserId, MovieId), ValidatedRating> = HashMap::new();
    for r in ratings {
        let key = (r.user_id.clone(), r.movie_id.clone());
        match latest.get(&key) {
            Some(prev) if (prev.timestamp, prev.score) >= (r.timestamp, r.score) => {}
            _ => {
                latest.insert(key, r);
            }
        }
    }
    let mut out: Vec<_> = latest.into_values().collect();
    out.sort_by(|a, b| {
        (&a.user_id, a.timestamp, &a.movie_id).cmp(&(&b.user_id, b.timestamp, &b.movie_id))
    });
    let dropped = total - out.len();
    (out, dropped)
}

/// Groups ratings by user, preserving order within each user.
pub fn by_user(ratings: &[ValidatedRating]) -> BTreeMap<UserId, Vec<ValidatedRating>> {
    let mut map: BTreeMap<UserId, Vec<ValidatedRating>> = BTreeMap::new();
    for r in ratings {
        map.entry(r.user_id.clone()).or_default().push(r.clone());
    }
    map
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuartileSets {
    pub user_id: UserId,
    pub liked_longterm: BTreeSet<MovieId>,
    pub disliked_longterm: BTreeSet<MovieId>,
    pub liked_recent: BTreeSet<MovieId>,
    /// Lowest score in the liked set.
    pub top_cutoff: Score,
    /// Highest score in the disliked set.
    pub bottom_cutoff: Score,
    /// `top_cutoff <= bottom_cutoff`: the two sets are not separated by score.
    pub degenerate: bool,
}

pub const RECENT_WINDOW_DAYS: i64 = 365;

pub fn quartile_size(n: usize) -> usize {
    n.div_ceil(4)
}

/// Top `ceil(n/4)` by score, ties to the more recent rating and then the
/// smaller movie id.
fn top_quarter(ratings: &[&ValidatedRating]) -> Vec<ValidatedRating> {
    let mut sorted: Vec<&ValidatedRating> = ratings.to_vec();
    sorted.sort_by(|a, b| {
        b.score
            .cmp(&a.score)
            .then_with(|| b.timestamp.cmp(&a.timestamp))
            .then_with(|| a.movie_id.cmp(&b.movie_id))
    });
    sorted
        .into_iter()
        .take(quartile_size(ratings.len()))
        .cloned()
        .collect()
}

fn bottom_quarter(ratings: &[&ValidatedRating]) -> Vec<ValidatedRating> {
    let mut sorted: Vec<&ValidatedRating> = ratings.to_vec();
    sorted.sort_by(|a, b| {
        a.score
            .cmp(&b.score)
            .then_with(|| b.timestamp.cmp(&a.timestamp))
            .then_with(|| a.movie_id.cmp(&b.movie_id))
    });
    sorted
        .into_iter()
        .take(quartile_size(ratings.len()))
        .cloned()
        .collect()
}

/// Latest rating per movie, in movie-id order. Same-instant duplicates keep
/// the higher score so the result does not depend on input order.
pub fn latest_per_movie(ratings: &[ValidatedRating]) -> Vec<ValidatedRating> {
    let mut latest: BTreeMap<&MovieId, &ValidatedRating> = BTreeMap::new();
    for r in ratings {
        match latest.get(&r.movie_id) {
            Some(prev) if (prev.timestamp, prev.score) >= (r.timestamp, r.score) => {}
            _ => {
                latest.insert(&r.movie_id, r);
            }
        }
    }
    latest.into_values().cloned().collect()
}

/// Splits one user's history into long-term liked/disliked quartiles and the
/// liked quartile of the trailing year ending at `reference_date`.
pub fn extract_quartiles(
    ratings: &[ValidatedRating],
    reference_date: DateTime<Utc>,
) -> Result<QuartileSets, IngestError> {
    let first = ratings.first().ok_or(IngestError::EmptyHistory)?;
    let latest = latest_per_movie(ratings);
    let all: Vec<&ValidatedRating> = latest.iter().collect();

    let liked = top_quarter(&all);
    let disliked = bottom_quarter(&all);

    let window_start = reference_date - Duration::days(RECENT_WINDOW_DAYS);
    let recent: Vec<&ValidatedRating> = latest
        .iter()
        .filter(|r| r.timestamp > window_start && r.timestamp <= reference_date)
        .collect();
    let liked_recent = if recent.is_empty() {
        Vec::new()
    } else {
        top_quarter(&recent)
    };

    let top_cutoff = liked.iter().map(|r| r.score).min().expect("non-empty");
    let bottom_cutoff = disliked.iter().map(|r| r.score).max().expect("non-empty");
    Ok(QuartileSets {
        user_id: first.user_id.clone(),
        liked_longterm: liked.into_iter().map(|r| r.movie_id).collect(),
        disliked_longterm: disliked.into_iter().map(|r| r.movie_id).collect(),
        liked_recent: liked_recent.into_iter().map(|r| r.movie_id).collect(),
        top_cutoff,
        bottom_cutoff,
        degenerate: top_cutoff <= bottom_cutoff,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuartileGapRow {
    pub user_id: UserId,
    pub top_cutoff: Score,
    pub bottom_cutoff: Score,
    /// `top_cutoff - bottom_cutoff`, floored at zero.
    pub gap: f64,
    pub degenerate: bool,
}

/// One row per user, sorted by user id.
pub fn quartile_gap_report<'a>(sets: impl IntoIterator<Item = &'a QuartileSets>) -> Vec<QuartileGapRow> {
    let mut rows: Vec<QuartileGapRow> = sets
        .into_iter()
        .map(|q| QuartileGapRow {
            user_id: q.user_id.clone(),
            top_cutoff: q.top_cutoff,
            bottom_cutoff: q.bottom_cutoff,
            gap: (q.top_cutoff.value() - q.bottom_cutoff.value()).max(0.0),
            degenerate: q.degenerate,
        })
        .collect();
    rows.sort_by(|a, b| a.user_id.cmp(&b.user_id));
    rows
}

pub fn quartile_gap_csv(rows: &[QuartileGapRow]) -> String {
    let mut out = String::from("user_id,top_cutoff,bottom_cutoff,gap,degenerate\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{:.1},{}",
            csv_field(r.user_id.as_str()),
            r.top_cutoff,
            r.bottom_cutoff,
            r.gap,
            r.degenerate
        );
    }
    out
}

/// Quotes a CSV field when it needs it.
pub fn csv_field(s: &str) -> std::borrow::Cow<'_, str> {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\"")).into()
    } else {
        s.into()
    }
}

pub const CATALOG_FILE: &str = "catalog.json";
pub const RATINGS_FILE: &str = "ratings.jsonl";

/// Normalized, deduplicated corpus as written by ingestion.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub catalog: Catalog,
    pub ratings: Vec<ValidatedRating>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct IngestSummary {
    pub movies: usize,
    pub tag_rows: usize,
    pub rating_rows: usize,
    pub duplicates_dropped: usize,
    pub users: usize,
}

impl Dataset {
    /// Loads `movies.csv`, `tags.csv` and `ratings.csv` from `dir`, keeps the
    /// latest rating per (user, movie) and fills in popularity.
    pub fn ingest(dir: &Path) -> Result<(Self, IngestSummary), IngestError> {
        let mut catalog = load_catalog(&dir.join("movies.csv"), &dir.join("tags.csv"))?;
        let raw = load_ratings(&dir.join("ratings.csv"))?;
        for (i, r) in raw.iter().enumerate() {
            if !catalog.movies.contains_key(&r.movie_id) {
                return Err(IngestError::MalformedRow {
                    file: dir.join("ratings.csv"),
                    // Rows are read in file order after the header.
                    line: i as u64 + 2,
                    reason: format!("rating references unknown movie {}", r.movie_id),
                });
            }
        }
        let rating_rows = raw.len();
        let (ratings, duplicates_dropped) = dedupe_latest(raw);
        catalog.set_popularity(&ratings);
        let summary = IngestSummary {
            movies: catalog.movies.len(),
            tag_rows: catalog.tags.values().map(|t| t.top_tags.len()).sum(),
            rating_rows,
            duplicates_dropped,
            users: ratings.iter().map(|r| &r.user_id).collect::<BTreeSet<_>>().len(),
        };
        Ok((Dataset { catalog, ratings }, summary))
    }

    pub fn write(&self, dir: &Path) -> Result<(), IngestError> {
        let io = |p: PathBuf| move |e| IngestError::Io(p, e);
        std::fs::create_dir_all(dir).map_err(io(dir.to_owned()))?;
        let catalog = serde_json::to_vec(&self.catalog).expect("catalog serializes");
        std::fs::write(dir.join(CATALOG_FILE), catalog).map_err(io(dir.join(CATALOG_FILE)))?;
        crate::jsonl::write_all(&dir.join(RATINGS_FILE), &self.ratings).map_err(io(dir.join(RATINGS_FILE)))
    }

    pub fn load(dir: &Path) -> Result<Self, IngestError> {
        let path = dir.join(CATALOG_FILE);
        let bytes = std::fs::read(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => IngestError::MissingFile(path.clone()),
            _ => IngestError::Io(path.clone(), e),
        })?;
        let catalog = serde_json::from_slice(&bytes).map_err(|e| IngestError::MalformedRow {
            file: path.clone(),
            line: e.line() as u64,
            reason: e.to_string(),
        })?;
        let ratings = crate::jsonl::read(&dir.join(RATINGS_FILE)).map_err(|e| match e {
            crate::jsonl::JsonlError::Io { path, source } => IngestError::Io(path.into(), source),
            crate::jsonl::JsonlError::Parse { path, line, source } => IngestError::MalformedRow {
                file: path.into(),
                line: line as u64,
                reason: source.to_string(),
            },
        })?;
        Ok(Dataset { catalog, ratings })
    }
}
