//! Seeded synthetic corpora: a themed catalog and users whose scores follow
//! their favourite and least favourite themes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;
use std::ops::RangeInclusive;
use std::path::Path;

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{MovieId, MovieRecord, Score, Tag, TaggedMovie, UserId, ValidatedRating};
use crate::ingest::{csv_field, Catalog, Dataset};

struct Theme {
    genre: &'static str,
    tags: [&'static str; 4],
}

// Tags within a theme share a word so they land in one cluster.
const THEMES: [Theme; 8] = [
    Theme { genre: "Crime", tags: ["film noir", "noir detective", "hardboiled noir", "noir atmosphere"] },
    Theme { genre: "Sci-Fi", tags: ["space opera", "space travel", "deep space", "space battles"] },
    Theme { genre: "Thriller", tags: ["heist caper", "bank heist", "heist crew", "clever heist"] },
    Theme { genre: "Romance", tags: ["romantic comedy", "romantic wedding", "romantic tearjerker", "romantic drama"] },
    Theme { genre: "Horror", tags: ["zombie apocalypse", "zombie gore", "zombie survival", "zombie outbreak"] },
    Theme { genre: "Animation", tags: ["animated family", "animated musical", "animated fairy tale", "animated adventure"] },
    Theme { genre: "War", tags: ["war epic", "war veterans", "war battlefield", "war drama"] },
    Theme { genre: "Documentary", tags: ["nature documentary", "documentary footage", "political documentary", "documentary interviews"] },
];

const LANGUAGES: [&str; 5] = ["English", "French", "Japanese", "Spanish", "Korean"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub users: usize,
    pub movies: usize,
    pub ratings_per_user: RangeInclusive<usize>,
    /// Ratings fall in the `history_days` before `end`.
    pub end: DateTime<Utc>,
    pub history_days: i64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            users: 20,
            movies: 200,
            ratings_per_user: 25..=80,
            end: Utc.with_ymd_and_hms(2025, 3, 1, 0, 0, 0).unwrap(),
            history_days: 730,
        }
    }
}

pub fn user_id(i: usize) -> UserId {
    format!("u{i:04}").into()
}

pub fn synthetic_catalog(movies: usize, rng: &mut impl Rng) -> Catalog {
    let mut catalog = Catalog::default();
    for i in 0..movies {
        let id = MovieId::from((i + 1).to_string());
        let theme = &THEMES[i % THEMES.len()];
        let second = &THEMES[(i / THEMES.len() + i) % THEMES.len()];
        let mut genres = vec![theme.genre.to_owned()];
        if second.genre != theme.genre && rng.random_bool(0.3) {
            genres.push(second.genre.to_owned());
        }
        catalog.movies.insert(
            id.clone(),
            MovieRecord {
                movie_id: id.clone(),
                title: format!("Film {} ({})", i + 1, theme.genre),
                genres,
                actors: (0..2).map(|_| format!("Actor {:02}", rng.random_range(0..40))).collect(),
                directors: vec![format!("Director {:02}", rng.random_range(0..15))],
                language: LANGUAGES[rng.random_range(0..LANGUAGES.len())].to_owned(),
                release_year: Some(rng.random_range(1950..=2024)),
                popularity: 0.0,
            },
        );
        let n = rng.random_range(2..=4);
        let mut tags: Vec<Tag> = theme.tags[..n]
            .iter()
            .map(|t| Tag {
                text: (*t).to_owned(),
                relevance: (rng.random_range(600..1000) as f64) / 1000.0,
            })
            .collect();
        if rng.random_bool(0.5) {
            tags.push(Tag {
                text: second.tags[0].to_owned(),
                relevance: 0.3,
            });
        }
        catalog.tags.insert(id.clone(), TaggedMovie::new(id, tags));
    }
    catalog
}

/// A user's preferences: two favourite themes and one disliked theme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Taste {
    liked: [usize; 2],
    disliked: usize,
}

impl Taste {
    pub fn random(rng: &mut impl Rng) -> Self {
        let mut themes: Vec<usize> = (0..THEMES.len()).collect();
        themes.shuffle(rng);
        Taste {
            liked: [themes[0], themes[1]],
            disliked: themes[2],
        }
    }

    /// A half-star score: high for liked themes, low for the disliked one.
    pub fn score(&self, movie: &MovieId, rng: &mut impl Rng) -> Score {
        let theme = theme_of(movie);
        let (lo, hi) = if self.liked.contains(&theme) {
            (8, 10)
        } else if theme == self.disliked {
            (1, 3)
        } else {
            (4, 7)
        };
        Score::new(rng.random_range(lo..=hi) as f64 / 2.0).expect("half-star score")
    }
}

fn theme_of(movie: &MovieId) -> usize {
    (movie.as_str().parse::<usize>().unwrap_or(1).max(1) - 1) % THEMES.len()
}

/// Ratings for one user drawn without repeats from `catalog`, timestamps
/// uniform in `[start, end)`.
pub fn synthetic_ratings(
    user: &UserId,
    taste: Taste,
    catalog: &Catalog,
    count: usize,
    start: DateTime<Utc>,
    end: DateTime<Utc>,
    rng: &mut impl Rng,
) -> Vec<ValidatedRating> {
    let mut ids: Vec<&MovieId> = catalog.movies.keys().collect();
    ids.shuffle(rng);
    let span = (end - start).num_seconds().max(1);
    let mut out: Vec<ValidatedRating> = ids
        .into_iter()
        .take(count)
        .map(|m| ValidatedRating {
            user_id: user.clone(),
            movie_id: m.clone(),
            score: taste.score(m, rng),
            timestamp: start + Duration::seconds(rng.random_range(0..span)),
        })
        .collect();
    out.sort_by(|a, b| (a.timestamp, &a.movie_id).cmp(&(b.timestamp, &b.movie_id)));
    out
}

pub fn synthetic_dataset(params: &SynthParams, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut catalog = synthetic_catalog(params.movies, &mut rng);
    let start = params.end - Duration::days(params.history_days);
    let mut ratings = Vec::new();
    for i in 0..params.users {
        let n = rng.random_range(params.ratings_per_user.clone()).min(params.movies);
        let taste = Taste::random(&mut rng);
        ratings.extend(synthetic_ratings(&user_id(i), taste, &catalog, n, start, params.end, &mut rng));
    }
    ratings.sort_by(|a, b| (&a.user_id, a.timestamp, &a.movie_id).cmp(&(&b.user_id, b.timestamp, &b.movie_id)));
    catalog.set_popularity(&ratings);
    Dataset { catalog, ratings }
}

/// Writes `movies.csv`, `tags.csv` and `ratings.csv` in the ingest format.
pub fn write_csvs(dataset: &Dataset, dir: &Path) -> io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut movies = String::from("movieId,title,genres,actors,directors,language,year\n");
    let mut tags = String::from("movieId,tag,relevance\n");
    for (id, m) in &dataset.catalog.movies {
        let _ = writeln!(
            movies,
            "{},{},{},{},{},{},{}",
            csv_field(id.as_str()),
            csv_field(&m.title),
            csv_field(&m.genres.join("|")),
            csv_field(&m.actors.join("|")),
            csv_field(&m.directors.join("|")),
            csv_field(&m.language),
            m.release_year.map(|y| y.to_string()).unwrap_or_default()
        );
        for t in dataset.catalog.tags_for(id) {
            let _ = writeln!(tags, "{},{},{}", csv_field(id.as_str()), csv_field(&t.text), t.relevance);
        }
    }
    let mut ratings = String::from("userId,movieId,rating,timestamp\n");
    for r in &dataset.ratings {
        let _ = writeln!(
            ratings,
            "{},{},{},{}",
            csv_field(r.user_id.as_str()),
            csv_field(r.movie_id.as_str()),
            r.score,
            r.timestamp.timestamp()
        );
    }
    std::fs::write(dir.join("movies.csv"), movies)?;
    std::fs::write(dir.join("tags.csv"), tags)?;
    std::fs::write(dir.join("ratings.csv"), ratings)
}

/// Per-user rating counts, handy for checks.
pub fn ratings_per_user(dataset: &Dataset) -> BTreeMap<UserId, usize> {
    let mut out = BTreeMap::new();
    for r in &dataset.ratings {
        *out.entry(r.user_id.clone()).or_default() += 1;
    }
    out
}
