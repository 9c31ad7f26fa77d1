//! Average-linkage agglomerative clustering of tag texts over cosine distance.
//!
//! Identical texts embed identically, so they are collapsed into one weighted
//! point before clustering; with weighted average linkage this yields the
//! same partition as clustering the full multiset. The dendrogram is built
//! with the nearest-neighbour chain algorithm, which is exact for average
//! linkage, and then cut: merges are applied in order of linkage distance
//! while more than `max_clusters` clusters remain or the next merge is
//! within `linkage_cutoff`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{cosine, EmbeddingProvider, SemanticError};
use crate::domain::{Embedding, MovieId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Liked,
    Disliked,
}

impl Polarity {
    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Liked => "liked",
            Polarity::Disliked => "disliked",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterestCluster {
    /// `"{polarity}-{rank}"`, rank by descending size.
    pub id: String,
    pub member_tags: Vec<(String, MovieId)>,
    pub centroid: Embedding,
    /// Up to five distinct member texts nearest the centroid.
    pub top_terms: Vec<String>,
    pub polarity: Polarity,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterParams {
    pub max_clusters: usize,
    /// Cosine distance (1 - cosine) under which clusters always merge.
    pub linkage_cutoff: f64,
    pub top_terms: usize,
}

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams {
            max_clusters: 5,
            linkage_cutoff: 0.6,
            top_terms: 5,
        }
    }
}

/// Condensed symmetric distance matrix.
struct Condensed {
    n: usize,
    d: Vec<f64>,
}

impl Condensed {
    fn idx(&self, i: usize, j: usize) -> usize {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        a * (2 * self.n - a - 1) / 2 + (b - a - 1)
    }
    fn get(&self, i: usize, j: usize) -> f64 {
        self.d[self.idx(i, j)]
    }
    fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.d[k] = v;
    }
}

/// A merge of the clusters represented by points `a` and `b`.
#[derive(Debug, Clone, Copy)]
struct Merge {
    a: usize,
    b: usize,
    distance: f64,
}

/// Nearest-neighbour chain for weighted average linkage. Returns the n-1
/// merges sorted by distance (stable, so children precede parents).
fn average_linkage(mut dist: Condensed, weights: &[f64]) -> Vec<Merge> {
    let n = dist.n;
    let mut size = weights.to_vec();
    let mut active = vec![true; n];
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    let mut chain: Vec<usize> = Vec::new();
    let mut remaining = n;

    while remaining > 1 {
        if chain.is_empty() {
            chain.push(active.iter().position(|&a| a).expect("an active point"));
        }
        loop {
            let tip = *chain.last().expect("non-empty chain");
            let prev = chain.len().checked_sub(2).map(|i| chain[i]);
            // Prefer the previous chain element on ties so the chain terminates.
            let mut best = prev;
            let mut best_d = prev.map_or(f64::INFINITY, |p| dist.get(tip, p));
            for k in 0..n {
                if !active[k] || k == tip || Some(k) == prev {
                    continue;
                }
                let d = dist.get(tip, k);
                if d < best_d {
                    best_d = d;
                    best = Some(k);
                }
            }
            let best = best.expect("another active point");
            if Some(best) == prev {
                chain.pop();
                chain.pop();
                let (a, b) = (tip.min(best), tip.max(best));
                merges.push(Merge { a, b, distance: best_d });
                // Lance-Williams update for average linkage; `a` survives.
                for k in 0..n {
                    if active[k] && k != a && k != b {
                        let v = (size[a] * dist.get(a, k) + size[b] * dist.get(b, k))
                            / (size[a] + size[b]);
                        dist.set(a, k, v);
                    }
                }
                size[a] += size[b];
                active[b] = false;
                remaining -= 1;
                break;
            }
            chain.push(best);
        }
    }
    merges.sort_by(|x, y| x.distance.total_cmp(&y.distance));
    merges
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Clusters tags into between 1 and `params.max_clusters` groups. Every
/// input tag lands in exactly one cluster; clusters are ordered by
/// descending member count.
pub fn cluster_tags(
    tags: &[(String, MovieId)],
    provider: &dyn EmbeddingProvider,
    params: ClusterParams,
    polarity: Polarity,
) -> Result<Vec<InterestCluster>, SemanticError> {
    if tags.is_empty() {
        return Err(SemanticError::EmptyInput);
    }
    let max_clusters = params.max_clusters.max(1);

    // Distinct texts in lexicographic order, with their input positions.
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, (text, _)) in tags.iter().enumerate() {
        groups.entry(text.as_str()).or_default().push(i);
    }
    let texts: Vec<&str> = groups.keys().copied().collect();
    let positions: Vec<Vec<usize>> = groups.into_values().collect();
    let weights: Vec<f64> = positions.iter().map(|p| p.len() as f64).collect();
    let vectors = provider.embed(&texts)?;
    let m = texts.len();

    let mut dist = Condensed {
        n: m,
        d: vec![0.0; m * m.saturating_sub(1) / 2],
    };
    for i in 0..m {
        for j in i + 1..m {
            let c = cosine(&vectors[i], &vectors[j])?;
            dist.set(i, j, 1.0 - c);
        }
    }
    if m == 1 {
        // Still reject zero vectors.
        cosine(&vectors[0], &vectors[0])?;
    }

    let merges = if m > 1 { average_linkage(dist, &weights) } else { Vec::new() };
    let mut parent: Vec<usize> = (0..m).collect();
    let mut count = m;
    for merge in merges {
        if count <= max_clusters && merge.distance > params.linkage_cutoff {
            break;
        }
        let (ra, rb) = (find(&mut parent, merge.a), find(&mut parent, merge.b));
        debug_assert_ne!(ra, rb);
        parent[ra.max(rb)] = ra.min(rb);
        count -= 1;
    }

    let mut by_root: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for p in 0..m {
        let r = find(&mut parent, p);
        by_root.entry(r).or_default().push(p);
    }

    let mut clusters: Vec<(usize, &str, Vec<usize>)> = by_root
        .into_values()
        .map(|pts| {
            let count: usize = pts.iter().map(|&p| positions[p].len()).sum();
            (count, texts[pts[0]], pts)
        })
        .collect();
    clusters.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(b.1)));

    clusters
        .into_iter()
        .enumerate()
        .map(|(rank, (_, _, pts))| {
            let mut members: Vec<usize> = pts.iter().flat_map(|&p| positions[p].iter().copied()).collect();
            members.sort_unstable();
            let centroid = Embedding::mean(members.iter().map(|&i| {
                let p = pts
                    .iter()
                    .copied()
                    .find(|&p| texts[p] == tags[i].0)
                    .expect("member point");
                &vectors[p]
            }))
            .expect("non-empty cluster");
            let mut ranked: Vec<(f64, &str)> = pts
                .iter()
                .map(|&p| Ok((cosine(&vectors[p], &centroid)?, texts[p])))
                .collect::<Result<_, SemanticError>>()?;
            ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
            Ok(InterestCluster {
                id: format!("{}-{rank}", polarity.as_str()),
                member_tags: members.iter().map(|&i| tags[i].clone()).collect(),
                centroid,
                top_terms: ranked
                    .into_iter()
                    .take(params.top_terms)
                    .map(|(_, t)| t.to_owned())
                    .collect(),
                polarity,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semantic::{MockEmbedder, ProviderError};
    use std::collections::HashMap;

    /// Fixed lookup table; unknown texts get the last basis vector.
    struct Table(HashMap<String, Vec<f64>>, usize);

    impl EmbeddingProvider for Table {
        fn dimension(&self) -> usize {
            self.1
        }
        fn embed(&self, texts: &[&str]) -> Result<Vec<Embedding>, ProviderError> {
            Ok(texts
                .iter()
                .map(|t| {
                    let v = self.0.get(*t).cloned().unwrap_or_else(|| {
                        let mut v = vec![0.0; self.1];
                        v[self.1 - 1] = 1.0;
                        v
                    });
                    Embedding::new(v).unwrap()
                })
                .collect())
        }
    }

    fn tags(spec: &[(&str, usize)]) -> Vec<(String, MovieId)> {
        let mut out = Vec::new();
        for (text, n) in spec {
            for i in 0..*n {
                out.push((text.to_string(), MovieId(format!("m{i}"))));
            }
        }
        out
    }

    #[test]
    fn singleton() {
        let p = MockEmbedder::new(16, 1);
        let c = cluster_tags(&tags(&[("noir", 3)]), &p, ClusterParams::default(), Polarity::Liked).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].member_tags.len(), 3);
        assert_eq!(c[0].top_terms, vec!["noir"]);
        assert_eq!(c[0].id, "liked-0");
    }

    #[test]
    fn empty_input() {
        let p = MockEmbedder::new(16, 1);
        assert_eq!(
            cluster_tags(&[], &p, ClusterParams::default(), Polarity::Liked),
            Err(SemanticError::EmptyInput)
        );
    }

    #[test]
    fn two_orthogonal_groups() {
        let table = Table(
            [
                ("dark comedy".to_string(), vec![1.0, 0.0, 0.0]),
                ("space opera".to_string(), vec![0.0, 1.0, 0.0]),
            ]
            .into_iter()
            .collect(),
            3,
        );
        let input = tags(&[("dark comedy", 5), ("space opera", 5)]);
        let c = cluster_tags(&input, &table, ClusterParams::default(), Polarity::Liked).unwrap();
        assert_eq!(c.len(), 2);
        for cl in &c {
            let first = &cl.member_tags[0].0;
            assert!(cl.member_tags.iter().all(|(t, _)| t == first));
            assert_eq!(cl.member_tags.len(), 5);
        }
        // Brute-force check of the partition under the table embedding.
        let e = |t: &str| table.embed_one(t).unwrap();
        for a in &c[0].member_tags {
            for b in &c[0].member_tags {
                assert_eq!(cosine(&e(&a.0), &e(&b.0)).unwrap(), 1.0);
            }
            for b in &c[1].member_tags {
                assert_eq!(cosine(&e(&a.0), &e(&b.0)).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn near_pair_merges_below_cutoff() {
        // Two directions at cosine 0.9 merge even though the cap is not hit.
        let table = Table(
            [
                ("a".to_string(), vec![1.0, 0.0, 0.0]),
                ("b".to_string(), vec![0.9, (1.0f64 - 0.81).sqrt(), 0.0]),
                ("c".to_string(), vec![0.0, 0.0, 1.0]),
            ]
            .into_iter()
            .collect(),
            3,
        );
        let c = cluster_tags(&tags(&[("a", 1), ("b", 1), ("c", 1)]), &table, ClusterParams::default(), Polarity::Liked)
            .unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].member_tags.len(), 2);
    }

    #[test]
    fn seven_families_capped_at_five() {
        let families = ["noir", "space", "romance", "horror", "musical", "western", "heist"];
        let mut input = Vec::new();
        for (f, fam) in families.iter().enumerate() {
            for k in 0..6 {
                if input.len() == 40 {
                    break;
                }
                input.push((format!("{fam} variant{k}"), MovieId(format!("m{f}{k}"))));
            }
        }
        input.truncate(40);
        let p = MockEmbedder::new(64, 11);
        let c = cluster_tags(&input, &p, ClusterParams::default(), Polarity::Disliked).unwrap();
        assert!(c.len() <= 5 && !c.is_empty());
        // Assignment-count oracle: each input (text, movie) appears exactly once.
        let mut seen: HashMap<(String, MovieId), usize> = HashMap::new();
        for cl in &c {
            for m in &cl.member_tags {
                *seen.entry(m.clone()).or_default() += 1;
            }
        }
        assert_eq!(seen.len(), input.len());
        assert!(seen.values().all(|&v| v == 1));
        assert!(c.windows(2).all(|w| w[0].member_tags.len() >= w[1].member_tags.len()));
    }

    /// Naive O(n^3) average linkage over the expanded multiset.
    fn naive_partition(points: &[Vec<f64>], max_clusters: usize, cutoff: f64) -> Vec<Vec<usize>> {
        let n = points.len();
        let d = |i: usize, j: usize| 1.0 - crate::semantic::cosine_slices(&points[i], &points[j]).unwrap();
        let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        loop {
            if clusters.len() == 1 {
                break;
            }
            let mut best = (f64::INFINITY, 0, 0);
            for a in 0..clusters.len() {
                for b in a + 1..clusters.len() {
                    let mut s = 0.0;
                    for &i in &clusters[a] {
                        for &j in &clusters[b] {
                            s += d(i, j);
                        }
                    }
                    let avg = s / (clusters[a].len() * clusters[b].len()) as f64;
                    if avg < best.0 - 1e-12 {
                        best = (avg, a, b);
                    }
                }
            }
            if clusters.len() <= max_clusters && best.0 > cutoff {
                break;
            }
            let merged = clusters.remove(best.2);
            clusters[best.1].extend(merged);
        }
        for c in &mut clusters {
            c.sort_unstable();
        }
        clusters.sort();
        clusters
    }

    #[test]
    fn matches_naive_average_linkage() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for trial in 0..40 {
            let dim = 4;
            let distinct = rng.random_range(2..9);
            let base: Vec<Vec<f64>> = (0..distinct)
                .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let mut input = Vec::new();
            let mut expanded = Vec::new();
            for (i, v) in base.iter().enumerate() {
                for _ in 0..rng.random_range(1..4) {
                    input.push((format!("t{i}"), MovieId(format!("m{}", input.len()))));
                    expanded.push(v.clone());
                }
            }
            let table = Table(
                base.iter().enumerate().map(|(i, v)| (format!("t{i}"), v.clone())).collect(),
                dim,
            );
            let params = ClusterParams { max_clusters: 1 + trial % 4, ..Default::default() };
            let got = cluster_tags(&input, &table, params, Polarity::Liked).unwrap();
            let mut got_parts: Vec<Vec<usize>> = got
                .iter()
                .map(|c| {
                    let mut v: Vec<usize> = c
                        .member_tags
                        .iter()
                        .map(|(_, m)| m.0[1..].parse::<usize>().unwrap())
                        .collect();
                    v.sort_unstable();
                    v
                })
                .collect();
            got_parts.sort();
            assert_eq!(got_parts, naive_partition(&expanded, params.max_clusters, params.linkage_cutoff), "trial {trial}");
        }
    }
}
