//! Group comparisons: one-way ANOVA, ANCOVA with a baseline covariate,
//! partial eta squared and Tukey–Kramer pairwise tests.

mod dist;
mod ols;

pub use dist::{f_cdf, f_sf, incomplete_beta, integrate, normal_cdf, studentized_range_cdf};
pub use ols::{fit_ols, OlsFit};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::UserId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("dimension mismatch")]
    DimensionMismatch,
    #[error("need at least two groups with two members each")]
    DegenerateGroup,
    #[error("mean squared error must be positive")]
    NonPositiveMse,
    #[error("non-finite input")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Reflected,
    Interacted,
    Collaborated,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::Reflected, Group::Interacted, Group::Collaborated];

    pub fn from_edit_count(n: usize) -> Self {
        match n {
            0 => Group::Reflected,
            1 => Group::Interacted,
            _ => Group::Collaborated,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Group::Reflected => "reflected",
            Group::Interacted => "interacted",
            Group::Collaborated => "collaborated",
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            Group::Reflected => "Ref",
            Group::Interacted => "Int",
            Group::Collaborated => "Col",
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Group {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "reflected" | "ref" => Ok(Group::Reflected),
            "interacted" | "int" => Ok(Group::Interacted),
            "collaborated" | "col" => Ok(Group::Collaborated),
            other => Err(format!("unknown group {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupAssignment {
    pub user_id: UserId,
    pub group: Group,
}

pub fn assign_groups(edit_counts: &BTreeMap<UserId, usize>) -> Vec<GroupAssignment> {
    edit_counts
        .iter()
        .map(|(u, n)| GroupAssignment {
            user_id: u.clone(),
            group: Group::from_edit_count(*n),
        })
        .collect()
}

pub fn groups_csv(groups: &[GroupAssignment]) -> String {
    let mut out = String::from("user_id,group\n");
    for g in groups {
        out.push_str(&format!("{},{}\n", crate::ingest::csv_field(g.user_id.as_str()), g.group));
    }
    out
}

pub fn read_groups_csv(input: impl std::io::Read) -> Result<Vec<GroupAssignment>, String> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        if rec.len() < 2 {
            return Err(format!("row {}: expected user_id,group", i + 2));
        }
        out.push(GroupAssignment {
            user_id: UserId::from(&rec[0]),
            group: rec[1].parse().map_err(|e| format!("row {}: {e}", i + 2))?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EffectBand {
    Negligible,
    Small,
    Medium,
    Large,
}

impl EffectBand {
    pub fn from_eta_squared(eta: f64) -> Self {
        if eta >= 0.14 {
            EffectBand::Large
        } else if eta >= 0.06 {
            EffectBand::Medium
        } else if eta >= 0.01 {
            EffectBand::Small
        } else {
            EffectBand::Negligible
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EffectBand::Negligible => "negligible",
            EffectBand::Small => "small",
            EffectBand::Medium => "medium",
            EffectBand::Large => "large",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseComparison {
    pub group_a: Group,
    pub group_b: Group,
    pub mean_difference: f64,
    pub q: f64,
    pub p_adjusted: f64,
}

/// Tukey–Kramer comparisons for every pair, in group order.
pub fn tukey_hsd(
    means: &[(Group, f64)],
    mse: f64,
    sizes: &[usize],
    df_error: f64,
) -> Result<Vec<PairwiseComparison>, StatsError> {
    if means.len() != sizes.len() {
        return Err(StatsError::DimensionMismatch);
    }
    if means.len() < 2 {
        return Err(StatsError::DegenerateGroup);
    }
    if !(mse > 0.0) {
        return Err(StatsError::NonPositiveMse);
    }
    let k = means.len();
    let mut out = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let diff = means[j].1 - means[i].1;
            let se = (mse / 2.0 * (1.0 / sizes[i] as f64 + 1.0 / sizes[j] as f64)).sqrt();
            let q = diff.abs() / se;
            let p = if q == 0.0 {
                1.0
            } else {
                (1.0 - studentized_range_cdf(q, k, df_error)).clamp(0.0, 1.0)
            };
            out.push(PairwiseComparison {
                group_a: means[i].0,
                group_b: means[j].0,
                mean_difference: diff,
                q,
                p_adjusted: p,
            });
        }
    }
    Ok(out)
}

/// Pairwise results when the error variance is exactly zero: any nonzero
/// difference is certain.
fn exact_pairs(means: &[(Group, f64)]) -> Vec<PairwiseComparison> {
    let mut out = Vec::new();
    for i in 0..means.len() {
        for j in i + 1..means.len() {
            let diff = means[j].1 - means[i].1;
            out.push(PairwiseComparison {
                group_a: means[i].0,
                group_b: means[j].0,
                mean_difference: diff,
                q: if diff == 0.0 { 0.0 } else { f64::INFINITY },
                p_adjusted: if diff == 0.0 { 1.0 } else { 0.0 },
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    pub f_statistic: f64,
    pub p_value: f64,
    pub df_between: usize,
    pub df_within: usize,
    pub eta_squared: f64,
    pub group_means: Vec<(Group, f64)>,
    pub group_sizes: Vec<usize>,
    pub pairwise: Vec<PairwiseComparison>,
}

fn check_groups(outcome: &[f64], groups: &[Group]) -> Result<(Vec<Group>, Vec<usize>), StatsError> {
    if outcome.len() != groups.len() {
        return Err(StatsError::DimensionMismatch);
    }
    if outcome.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let present: Vec<Group> = Group::ALL.into_iter().filter(|g| groups.contains(g)).collect();
    let sizes: Vec<usize> = present.iter().map(|g| groups.iter().filter(|x| *x == g).count()).collect();
    if present.len() < 2 || sizes.iter().any(|&n| n < 2) {
        return Err(StatsError::DegenerateGroup);
    }
    Ok((present, sizes))
}

/// One-way ANOVA from sums of squares.
pub fn anova_oneway(outcome: &[f64], groups: &[Group]) -> Result<AnovaResult, StatsError> {
    let (present, sizes) = check_groups(outcome, groups)?;
    let n = outcome.len();
    let k = present.len();
    let grand = outcome.iter().sum::<f64>() / n as f64;
    let means: Vec<(Group, f64)> = present
        .iter()
        .zip(&sizes)
        .map(|(g, &m)| {
            let s: f64 = outcome.iter().zip(groups).filter(|(_, x)| *x == g).map(|(v, _)| v).sum();
            (*g, s / m as f64)
        })
        .collect();
    let ssb: f64 = means.iter().zip(&sizes).map(|((_, m), &c)| c as f64 * (m - grand).powi(2)).sum();
    let ssw: f64 = outcome
        .iter()
        .zip(groups)
        .map(|(v, g)| {
            let m = means.iter().find(|(x, _)| x == g).unwrap().1;
            (v - m).powi(2)
        })
        .sum();
    let (dfb, dfw) = (k - 1, n - k);
    let tss = ssb + ssw;
    let (f, p, eta) = f_test(ssb, ssw, tss, dfb, dfw);
    let pairwise = if ssw > 0.0 {
        tukey_hsd(&means, ssw / dfw as f64, &sizes, dfw as f64)?
    } else {
        exact_pairs(&means)
    };
    Ok(AnovaResult {
        f_statistic: f,
        p_value: p,
        df_between: dfb,
        df_within: dfw,
        eta_squared: eta,
        group_means: means,
        group_sizes: sizes,
        pairwise,
    })
}

/// F, p and effect / (effect + error) with the degenerate cases pinned.
fn f_test(effect: f64, error: f64, scale: f64, df1: usize, df2: usize) -> (f64, f64, f64) {
    let effect = effect.max(0.0);
    if scale <= 0.0 || effect <= 1e-12 * scale {
        return (0.0, 1.0, 0.0);
    }
    if error <= 1e-14 * scale {
        return (f64::INFINITY, 0.0, 1.0);
    }
    let f = (effect / df1 as f64) / (error / df2 as f64);
    let p = f_sf(f, df1 as f64, df2 as f64).clamp(0.0, 1.0);
    (f, p, (effect / (effect + error)).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AncovaResult {
    pub metric: String,
    pub f_statistic: f64,
    pub p_value: f64,
    pub df_effect: usize,
    pub df_error: usize,
    /// Partial eta squared of the group term.
    pub eta_squared: f64,
    pub effect_band: EffectBand,
    /// Group means adjusted to the grand covariate mean.
    pub adjusted_group_means: Vec<(Group, f64)>,
    pub group_sizes: Vec<usize>,
    pub covariate_slope: Option<f64>,
    pub pairwise: Vec<PairwiseComparison>,
    /// p-value of the group × covariate interaction, when estimable.
    pub slope_homogeneity_p: Option<f64>,
    pub warnings: Vec<String>,
}

/// ANCOVA of `outcome` on group with `covariate` as a control. The first
/// present group in [`Group::ALL`] order is the reference level.
pub fn ancova(
    metric: &str,
    outcome: &[f64],
    covariate: &[f64],
    groups: &[Group],
) -> Result<AncovaResult, StatsError> {
    let (present, sizes) = check_groups(outcome, groups)?;
    if covariate.len() != outcome.len() {
        return Err(StatsError::DimensionMismatch);
    }
    if covariate.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let n = outcome.len();
    let k = present.len();
    let x_mean = covariate.iter().sum::<f64>() / n as f64;
    let x_spread = covariate.iter().map(|x| (x - x_mean).abs()).fold(0.0, f64::max);
    let mut warnings = Vec::new();
    let use_cov = x_spread > 1e-12 * x_mean.abs().max(1.0);
    if !use_cov {
        warnings.push("covariate has no variance and was dropped".to_owned());
    }
    // Centering keeps the design well conditioned and makes the adjusted
    // means fall out of the coefficients directly.
    let xc: Vec<f64> = covariate.iter().map(|x| x - x_mean).collect();
    let dummies = |g: Group| present[1..].iter().map(move |p| if *p == g { 1.0 } else { 0.0 });
    let row_base = |i: usize| {
        let mut r = vec![1.0];
        if use_cov {
            r.push(xc[i]);
        }
        r
    };
    let full: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut r = row_base(i);
            r.extend(dummies(groups[i]));
            r
        })
        .collect();
    let reduced: Vec<Vec<f64>> = (0..n).map(row_base).collect();
    let ff = fit_ols(&full, outcome)?;
    let fr = fit_ols(&reduced, outcome)?;
    let df_effect = k - 1;
    let df_error = ff.df_residual;
    let y_mean = outcome.iter().sum::<f64>() / n as f64;
    let tss: f64 = outcome.iter().map(|v| (v - y_mean).powi(2)).sum();
    let (f, p, eta) = f_test(fr.rss - ff.rss, ff.rss, tss, df_effect, df_error);
    let eta = if f == 0.0 { 0.0 } else { eta };
    let offset = if use_cov { 2 } else { 1 };
    let adjusted: Vec<(Group, f64)> = present
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let d = if i == 0 { 0.0 } else { ff.coefficients[offset + i - 1] };
            (*g, ff.coefficients[0] + d)
        })
        .collect();
    let mse = ff.rss / df_error as f64;
    let pairwise = if f.is_infinite() || mse <= 0.0 {
        exact_pairs(&adjusted)
    } else {
        tukey_hsd(&adjusted, mse, &sizes, df_error as f64)?
    };

    let slope_homogeneity_p = if use_cov {
        let inter: Vec<Vec<f64>> = full
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let mut r = r.clone();
                r.extend(dummies(groups[i]).map(|d| d * xc[i]));
                r
            })
            .collect();
        fit_ols(&inter, outcome).ok().map(|fi| {
            let (_, p, _) = f_test(ff.rss - fi.rss, fi.rss, tss, k - 1, fi.df_residual);
            p
        })
    } else {
        None
    };
    if slope_homogeneity_p.is_some_and(|p| p < 0.05) {
        warnings.push("covariate slopes differ between groups".to_owned());
    }
    Ok(AncovaResult {
        metric: metric.to_owned(),
        f_statistic: f,
        p_value: p,
        df_effect,
        df_error,
        eta_squared: eta,
        effect_band: EffectBand::from_eta_squared(eta),
        adjusted_group_means: adjusted,
        group_sizes: sizes,
        covariate_slope: use_cov.then(|| ff.coefficients[1]),
        pairwise,
        slope_homogeneity_p,
        warnings,
    })
}

/// Conventional stars for a p-value.
pub fn stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}
