//! Two-sample tests.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

/// Exact Mann–Whitney distribution is used up to this `n_a · n_b`.
pub const MWU_EXACT_LIMIT: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub method: String,
    pub statistic: f64,
    pub p_value: f64,
    pub df: Option<f64>,
    pub n_a: usize,
    pub n_b: usize,
}

/// Two-sided Mann–Whitney test; `statistic` is `U` for sample `a`.
///
/// Small samples (`n_a · n_b ≤ 10,000`) use the exact permutation
/// distribution of the mid-rank sum, conditional on the observed ties.
/// Larger samples use the tie-corrected normal approximation with a 0.5
/// continuity correction.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::DegenerateSample("non-finite value".into()));
    }
    let (na, nb) = (a.len(), b.len());
    let ranks2 = doubled_midranks(a, b);
    let r_a2: u64 = ranks2[..na].iter().sum();
    // 2U = 2R_a − n_a(n_a + 1)
    let u2 = r_a2 as i64 - (na * (na + 1)) as i64;
    let u = u2 as f64 / 2.0;
    let (p, method) = if na * nb <= MWU_EXACT_LIMIT {
        (exact_p(&ranks2, na, r_a2), "Mann-Whitney U (exact)")
    } else {
        (normal_p(&ranks2, na, nb, u), "Mann-Whitney U (normal approximation)")
    };
    Ok(TestResult {
        method: method.into(),
        statistic: u,
        p_value: p.min(1.0),
        df: None,
        n_a: na,
        n_b: nb,
    })
}

/// Twice the mid-rank of each value in `a ++ b`, in that order.
fn doubled_midranks(a: &[f64], b: &[f64]) -> Vec<u64> {
    let all: Vec<f64> = a.iter().chain(b).copied().collect();
    let mut order: Vec<usize> = (0..all.len()).collect();
    order.sort_by(|&i, &j| all[i].total_cmp(&all[j]));
    let mut out = vec![0u64; all.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && all[order[j + 1]] == all[order[i]] {
            j += 1;
        }
        // ranks i+1..=j+1, doubled mid-rank = i + j + 2
        for &k in &order[i..=j] {
            out[k] = (i + j + 2) as u64;
        }
        i = j + 1;
    }
    out
}

/// `P(R ≤ r)` and `P(R ≥ r)` for the rank sum of a random `k`-subset,
/// by dynamic programming over elements; returns the two-sided p-value.
fn exact_p(ranks2: &[u64], na: usize, r_a2: u64) -> f64 {
    let n = ranks2.len();
    // Enumerate subsets of the smaller side; complement sums are affine.
    let k = na.min(n - na);
    let total2: u64 = ranks2.iter().sum();
    let target = if k == na { r_a2 } else { total2 - r_a2 };
    let max_sum: usize = {
        let mut s = ranks2.to_vec();
        s.sort_unstable_by(|x, y| y.cmp(x));
        s[..k].iter().sum::<u64>() as usize
    };
    // counts[j][s] = number of j-subsets of the processed elements with sum s
    let width = max_sum + 1;
    let mut counts = vec![0.0f64; (k + 1) * width];
    counts[0] = 1.0;
    for &r in ranks2 {
        let r = r as usize;
        for j in (1..=k).rev() {
            let (lo, hi) = counts.split_at_mut(j * width);
            let prev = &lo[(j - 1) * width..];
            let cur = &mut hi[..width];
            for s in (r..width).rev() {
                let c = prev[s - r];
                if c != 0.0 {
                    cur[s] += c;
                }
            }
        }
    }
    let dist = &counts[k * width..];
    let total: f64 = dist.iter().sum();
    let t = target as usize;
    let le: f64 = dist[..=t.min(max_sum)].iter().sum();
    let ge: f64 = if t <= max_sum { dist[t..].iter().sum() } else { 0.0 };
    (2.0 * (le / total).min(ge / total)).min(1.0)
}

fn normal_p(ranks2: &[u64], na: usize, nb: usize, u: f64) -> f64 {
    let n = (na + nb) as f64;
    let mut sorted = ranks2.to_vec();
    sorted.sort_unstable();
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    let (na, nb) = (na as f64, nb as f64);
    let mu = na * nb / 2.0;
    let var = na * nb / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if !(var > 0.0) {
        return 1.0;
    }
    let z = ((u - mu).abs() - 0.5).max(0.0) / var.sqrt();
    2.0 * Normal::standard().sf(z)
}

/// Welch's unequal-variance t test (statistic for `mean(a) − mean(b)`).
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::DegenerateSample(
            "Welch t needs at least two values per sample".into(),
        ));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (sa, sb) = (va / na, vb / nb);
    if sa + sb == 0.0 {
        return Err(Error::DegenerateSample("both samples have zero variance".into()));
    }
    let t = (ma - mb) / (sa + sb).sqrt();
    let df = (sa + sb).powi(2) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(TestResult {
        method: "Welch t".into(),
        statistic: t,
        p_value: (2.0 * dist.sf(t.abs())).min(1.0),
        df: Some(df),
        n_a: a.len(),
        n_b: b.len(),
    })
}

/// Mean and unbiased variance.
pub(crate) fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = if x.len() > 1 {
        x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_samples() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let r = mann_whitney_u(&a, &a).unwrap();
        assert_eq!(r.statistic, 8.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn full_separation() {
        let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(r.statistic, 0.0);
        // 2 / C(6,3)
        assert!((r.p_value - 0.1).abs() < 1e-15);
    }

    #[test]
    fn normal_branch_is_symmetric() {
        let a: Vec<f64> = (0..150).map(|i| (i % 17) as f64).collect();
        let b: Vec<f64> = (0..120).map(|i| (i % 13) as f64 + 0.5).collect();
        let r1 = mann_whitney_u(&a, &b).unwrap();
        let r2 = mann_whitney_u(&b, &a).unwrap();
        assert!(r1.method.contains("normal"));
        assert_eq!(r1.statistic + r2.statistic, 150.0 * 120.0);
        assert!((r1.p_value - r2.p_value).abs() < 1e-12);
    }

    #[test]
    fn empty_sample_errors() {
        assert!(matches!(mann_whitney_u(&[], &[1.0]), Err(Error::EmptySample)));
        assert!(matches!(welch_t(&[1.0, 2.0], &[]), Err(Error::EmptySample)));
        assert!(matches!(
            welch_t(&[1.0, 1.0], &[2.0, 2.0]),
            Err(Error::DegenerateSample(_))
        ));
    }

    #[test]
    fn welch_formula() {
        let r = welch_t(&[1.0, 2.0, 3.0, 4.0], &[2.0, 3.0, 4.0, 5.0]).unwrap();
        // equal variances 5/3: t = −1 / sqrt(5/6), df = 6
        assert!((r.statistic + 1.0 / (5.0f64 / 6.0).sqrt()).abs() < 1e-12);
        assert!((r.df.unwrap() - 6.0).abs() < 1e-12);
        let e = welch_t(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(e.statistic, 0.0);
        assert_eq!(e.p_value, 1.0);
    }

    proptest! {
        #[test]
        fn u_statistics_sum_to_product(
            a in prop::collection::vec(0u8..6, 1..40),
            b in prop::collection::vec(0u8..6, 1..40),
        ) {
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let b: Vec<f64> = b.into_iter().map(f64::from).collect();
            let u1 = mann_whitney_u(&a, &b).unwrap();
            let u2 = mann_whitney_u(&b, &a).unwrap();
            prop_assert_eq!(u1.statistic + u2.statistic, (a.len() * b.len()) as f64);
            prop_assert!((u1.p_value - u2.p_value).abs() < 1e-9);
        }
    }
}
