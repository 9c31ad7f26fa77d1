//! Facet counts over a user's rated movies, for the treemap view.

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::{MovieId, MovieRecord};
use crate::ingest::Catalog;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreemapCategory {
    Genre,
    Actor,
    Director,
    Language,
    Popularity,
    ReleaseYear,
}

impl TreemapCategory {
    pub const ALL: [TreemapCategory; 6] = [
        TreemapCategory::Genre,
        TreemapCategory::Actor,
        TreemapCategory::Director,
        TreemapCategory::Language,
        TreemapCategory::Popularity,
        TreemapCategory::ReleaseYear,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TreemapCategory::Genre => "genre",
            TreemapCategory::Actor => "actor",
            TreemapCategory::Director => "director",
            TreemapCategory::Language => "language",
            TreemapCategory::Popularity => "popularity",
            TreemapCategory::ReleaseYear => "release_year",
        }
    }
}

impl FromStr for TreemapCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown category {s:?}"))
    }
}

pub const UNKNOWN_LABEL: &str = "(unknown)";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreemapCell {
    pub label: String,
    pub count: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<TreemapCell>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreemapSlice {
    pub category: TreemapCategory,
    pub cells: Vec<TreemapCell>,
}

/// Corpus popularity quartile cut points (nearest rank).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopularityQuartiles([f64; 3]);

impl PopularityQuartiles {
    pub fn from_catalog(catalog: &Catalog) -> Self {
        let mut pops: Vec<f64> = catalog.movies.values().map(|m| m.popularity).collect();
        pops.sort_by(f64::total_cmp);
        if pops.is_empty() {
            return PopularityQuartiles([0.0; 3]);
        }
        let at = |q: f64| pops[((q * pops.len() as f64).ceil() as usize).clamp(1, pops.len()) - 1];
        PopularityQuartiles([at(0.25), at(0.5), at(0.75)])
    }

    /// `Q1` is the least popular quarter, `Q4` the most.
    pub fn label(&self, popularity: f64) -> &'static str {
        let [a, b, c] = self.0;
        if popularity <= a {
            "Q1"
        } else if popularity <= b {
            "Q2"
        } else if popularity <= c {
            "Q3"
        } else {
            "Q4"
        }
    }
}

fn facet_values(category: TreemapCategory, m: &MovieRecord, pop: &PopularityQuartiles) -> Vec<String> {
    let list = |v: &[String]| {
        if v.is_empty() {
            vec![UNKNOWN_LABEL.to_string()]
        } else {
            v.to_vec()
        }
    };
    match category {
        TreemapCategory::Genre => list(&m.genres),
        TreemapCategory::Actor => list(&m.actors),
        TreemapCategory::Director => list(&m.directors),
        TreemapCategory::Language if m.language.is_empty() => list(&[]),
        TreemapCategory::Language => vec![m.language.clone()],
        TreemapCategory::Popularity => vec![pop.label(m.popularity).to_string()],
        TreemapCategory::ReleaseYear => vec![match m.release_year {
            Some(y) => format!("{}s", y.div_euclid(10) * 10),
            None => UNKNOWN_LABEL.to_string(),
        }],
    }
}

fn child_label(category: TreemapCategory, m: &MovieRecord) -> String {
    match (category, m.release_year) {
        (TreemapCategory::ReleaseYear, Some(y)) => y.to_string(),
        _ => m.title.clone(),
    }
}

fn cells(counts: BTreeMap<String, usize>) -> Vec<TreemapCell> {
    let mut out: Vec<TreemapCell> = counts
        .into_iter()
        .map(|(label, count)| TreemapCell {
            label,
            count,
            children: Vec::new(),
        })
        .collect();
    out.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.label.cmp(&b.label)));
    out
}

/// One cell per facet value, largest first. A movie with several values
/// (genres, actors) counts once in each. Children break a cell down by
/// title, or by year inside a decade.
pub fn treemap<'a>(
    catalog: &Catalog,
    rated: impl IntoIterator<Item = &'a MovieId>,
    category: TreemapCategory,
) -> TreemapSlice {
    let pop = PopularityQuartiles::from_catalog(catalog);
    let mut groups: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    let mut seen = std::collections::BTreeSet::new();
    for id in rated {
        if !seen.insert(id) {
            continue;
        }
        let Some(m) = catalog.movie(id) else { continue };
        for v in facet_values(category, m, &pop) {
            *groups.entry(v).or_default().entry(child_label(category, m)).or_default() += 1;
        }
    }
    let mut top: Vec<TreemapCell> = groups
        .into_iter()
        .map(|(label, kids)| TreemapCell {
            label,
            count: kids.values().sum(),
            children: cells(kids),
        })
        .collect();
    top.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.label.cmp(&b.label)));
    TreemapSlice { category, cells: top }
}
