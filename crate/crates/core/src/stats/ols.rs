use super::StatsError;

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub coefficients: Vec<f64>,
    pub rss: f64,
    pub df_residual: usize,
}

/// Least squares by Householder QR. `x` is row-major, one row per
/// observation.
pub fn fit_ols(x: &[Vec<f64>], y: &[f64]) -> Result<OlsFit, StatsError> {
    let n = x.len();
    let p = x.first().map_or(0, Vec::len);
    if y.len() != n || x.iter().any(|r| r.len() != p) {
        return Err(StatsError::DimensionMismatch);
    }
    if p == 0 || n <= p {
        return Err(StatsError::RankDeficient);
    }
    // Column-major working copy.
    let mut a: Vec<Vec<f64>> = (0..p).map(|j| x.iter().map(|r| r[j]).collect()).collect();
    let col_norms: Vec<f64> = a.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let mut b = y.to_vec();
    for j in 0..p {
        let norm = a[j][j..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= 1e-10 * col_norms[j] || norm == 0.0 {
            return Err(StatsError::RankDeficient);
        }
        let alpha = if a[j][j] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = a[j][j..].to_vec();
        v[0] -= alpha;
        let vv: f64 = v.iter().map(|t| t * t).sum();
        let reflect = |col: &mut [f64]| {
            let s: f64 = v.iter().zip(col.iter()).map(|(a, b)| a * b).sum();
            let f = 2.0 * s / vv;
            for (c, vi) in col.iter_mut().zip(&v) {
                *c -= f * vi;
            }
        };
        for k in j + 1..p {
            reflect(&mut a[k][j..]);
        }
        reflect(&mut b[j..]);
        a[j][j] = alpha;
        for v in &mut a[j][j + 1..] {
            *v = 0.0;
        }
    }
    let mut beta = vec![0.0; p];
    for i in (0..p).rev() {
        let s: f64 = (i + 1..p).map(|k| a[k][i] * beta[k]).sum();
        beta[i] = (b[i] - s) / a[i][i];
    }
    let rss = x
        .iter()
        .zip(y)
        .map(|(row, yi)| {
            let fit: f64 = row.iter().zip(&beta).map(|(a, b)| a * b).sum();
            (yi - fit).powi(2)
        })
        .sum();
    Ok(OlsFit {
        coefficients: beta,
        rss,
        df_residual: n - p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn constant_response() {
        let x: Vec<Vec<f64>> = (0..5).map(|_| vec![1.0]).collect();
        let fit = fit_ols(&x, &[3.5; 5]).unwrap();
        assert!((fit.coefficients[0] - 3.5).abs() < 1e-12);
        assert!(fit.rss < 1e-24);
        assert_eq!(fit.df_residual, 4);
    }

    #[test]
    fn exact_line() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![1.0, f64::from(i) * 0.5]).collect();
        let y: Vec<f64> = x.iter().map(|r| 2.0 - 3.25 * r[1]).collect();
        let fit = fit_ols(&x, &y).unwrap();
        assert!((fit.coefficients[1] + 3.25).abs() < 1e-10);
        assert!(fit.rss < 1e-18);
    }

    fn normal_equations(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
        let p = x[0].len();
        let mut m = vec![vec![0.0; p + 1]; p];
        for (row, yi) in x.iter().zip(y) {
            for i in 0..p {
                for j in 0..p {
                    m[i][j] += row[i] * row[j];
                }
                m[i][p] += row[i] * yi;
            }
        }
        for c in 0..p {
            let piv = (c..p).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs())).unwrap();
            m.swap(c, piv);
            for r in 0..p {
                if r != c {
                    let f = m[r][c] / m[c][c];
                    for k in c..=p {
                        m[r][k] -= f * m[c][k];
                    }
                }
            }
        }
        (0..p).map(|i| m[i][p] / m[i][i]).collect()
    }

    #[test]
    fn random_system_matches_normal_equations() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(50);
        let x: Vec<Vec<f64>> = (0..50)
            .map(|_| vec![1.0, rng.random_range(-5.0..5.0), rng.random_range(0.0..10.0)])
            .collect();
        let y: Vec<f64> = x
            .iter()
            .map(|r| 1.0 + 0.7 * r[1] - 2.0 * r[2] + rng.random_range(-1.0..1.0))
            .collect();
        let fit = fit_ols(&x, &y).unwrap();
        for (a, b) in fit.coefficients.iter().zip(normal_equations(&x, &y)) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn errors() {
        let x = vec![vec![1.0, 2.0], vec![1.0, 2.0], vec![1.0, 2.0]];
        assert_eq!(fit_ols(&x, &[1.0, 2.0, 3.0]), Err(StatsError::RankDeficient));
        let x = vec![vec![1.0, 0.0], vec![1.0, 1.0]];
        assert_eq!(fit_ols(&x, &[1.0, 2.0]), Err(StatsError::RankDeficient));
        assert_eq!(fit_ols(&x, &[1.0]), Err(StatsError::DimensionMismatch));
    }
}
