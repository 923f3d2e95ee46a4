//! Independent reference implementations for the acceptance suite in
//! `tests/acceptance.rs`. Nothing here calls the code under test.

use chrono::{DateTime, Utc};
use emag_core::ingest::ContentItem;
use emag_core::interest::UserInterests;

/// Singular values of `a` (rows of equal length), largest first, as the
/// square roots of the eigenvalues of AᵀA found by cyclic two-sided Jacobi
/// rotations.
#[allow(clippy::needless_range_loop)]
pub fn singular_values(a: &[Vec<f64>]) -> Vec<f64> {
    let n = a.first().map_or(0, Vec::len);
    let mut g = vec![vec![0.0; n]; n];
    for (i, gi) in g.iter_mut().enumerate() {
        for (j, gij) in gi.iter_mut().enumerate() {
            *gij = a.iter().map(|row| row[i] * row[j]).sum();
        }
    }
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| g[i][j] * g[i][j])
            .sum();
        let scale: f64 = (0..n).map(|i| g[i][i] * g[i][i]).sum();
        if off <= 1e-32 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if g[p][q] == 0.0 {
                    continue;
                }
                let theta = (g[q][q] - g[p][p]) / (2.0 * g[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for row in g.iter_mut() {
                    let (gp, gq) = (row[p], row[q]);
                    row[p] = c * gp - s * gq;
                    row[q] = s * gp + c * gq;
                }
                for k in 0..n {
                    let (gp, gq) = (g[p][k], g[q][k]);
                    g[p][k] = c * gp - s * gq;
                    g[q][k] = s * gp + c * gq;
                }
            }
        }
    }
    let mut values: Vec<f64> = (0..n).map(|i| g[i][i].max(0.0).sqrt()).collect();
    values.sort_by(|x, y| y.total_cmp(x));
    values.truncate(a.len().min(n));
    values
}

/// One published slot as the brute-force ranking sees it.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedItem {
    pub content_id: String,
    pub score: f64,
}

/// Rescores every item from scratch and orders them by selection: highest
/// score, then most recent, then smallest id. Items with no keyword at or
/// above `high` in `interests` are left out.
pub fn rank_items(items: &[ContentItem], interests: &UserInterests, now: DateTime<Utc>, high: f64, freshness_hours: f64) -> Vec<RankedItem> {
    let mut pool: Vec<(f64, &ContentItem)> = Vec::new();
    for item in items {
        let mut relevance = 0.0;
        for k in &item.keywords {
            if let Some(e) = interests.get(k) {
                if e.weight >= high {
                    relevance += e.weight;
                }
            }
        }
        if relevance > 0.0 {
            let age_ms = (now - item.publish_date).num_milliseconds().max(0);
            let age_h = age_ms as f64 / 3_600_000.0;
            pool.push((relevance * (-age_h / freshness_hours).exp(), item));
        }
    }
    let mut out = Vec::with_capacity(pool.len());
    while !pool.is_empty() {
        let mut best = 0;
        for (i, (score, item)) in pool.iter().enumerate().skip(1) {
            let (bs, bi) = pool[best];
            let better = *score > bs
                || (*score == bs && item.publish_date > bi.publish_date)
                || (*score == bs && item.publish_date == bi.publish_date && item.id < bi.id);
            if better {
                best = i;
            }
        }
        let (score, item) = pool.swap_remove(best);
        out.push(RankedItem {
            content_id: item.id.clone(),
            score,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_singular_values_of_known_matrices() {
        assert_eq!(singular_values(&[vec![3.0, 0.0], vec![0.0, 2.0]]), vec![3.0, 2.0]);
        let s = singular_values(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        assert!((s[0] - 2.0).abs() < 1e-12 && s[1].abs() < 1e-7, "{s:?}");
        let s = singular_values(&[vec![0.9, 0.0, 0.8], vec![0.9, 0.7, 0.8]]);
        assert!((s[0] - 1.779_199_993_597_043).abs() < 1e-12, "{s:?}");
        assert!((s[1] - 0.473_758_781_221_289_2).abs() < 1e-12, "{s:?}");
    }
}
