//! Score of a single synthetic note as a function of its rating count.

use serde::{Deserialize, Serialize};

use super::{solve_block, Normalization, ScoringConfig};
use crate::error::{Error, Result};

/// Shares of not-helpful / somewhat-helpful / helpful ratings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatingProfile {
    pub not_helpful: f64,
    pub somewhat_helpful: f64,
    pub helpful: f64,
}

impl RatingProfile {
    pub const ALL_HELPFUL: RatingProfile = RatingProfile {
        not_helpful: 0.0,
        somewhat_helpful: 0.0,
        helpful: 1.0,
    };

    pub fn validate(&self) -> Result<()> {
        let parts = [self.not_helpful, self.somewhat_helpful, self.helpful];
        if parts.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidConfig("profile shares must be finite and >= 0".into()));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig("profile shares must sum to 1".into()));
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        0.5 * self.somewhat_helpful + self.helpful
    }

    /// Rating values for `count` ratings, matching the profile by
    /// largest-remainder rounding (ties go to the higher value).
    pub fn realize(&self, count: usize) -> Vec<f64> {
        let shares = [
            (0.0, self.not_helpful),
            (0.5, self.somewhat_helpful),
            (1.0, self.helpful),
        ];
        let exact: Vec<f64> = shares.iter().map(|(_, s)| s * count as f64).collect();
        let mut n: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
        let mut left = count - n.iter().sum::<usize>();
        let mut order: Vec<usize> = (0..3).collect();
        order.sort_by(|&a, &b| {
            let (ra, rb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
            rb.total_cmp(&ra).then(b.cmp(&a))
        });
        for &i in &order {
            if left == 0 {
                break;
            }
            n[i] += 1;
            left -= 1;
        }
        shares
            .iter()
            .zip(&n)
            .flat_map(|((v, _), &k)| std::iter::repeat_n(*v, k))
            .collect()
    }
}

/// Parameters shared by every synthetic rater.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrozenRaters {
    pub global_intercept: f64,
    pub intercept: f64,
    pub factor: Vec<f64>,
}

impl FrozenRaters {
    /// Raters with no leaning and no offset.
    pub fn neutral(dim: usize) -> FrozenRaters {
        FrozenRaters {
            global_intercept: 0.0,
            intercept: 0.0,
            factor: vec![0.0; dim],
        }
    }
}

/// [`shrinkage_curve_with`] using neutral raters.
pub fn shrinkage_curve(profile: &RatingProfile, counts: &[usize], cfg: &ScoringConfig) -> Result<Vec<(usize, f64)>> {
    shrinkage_curve_with(profile, counts, cfg, &FrozenRaters::neutral(cfg.factor_dim))
}

/// Fits `(i_n, f_n)` for one note per count with rater parameters frozen.
///
/// The note's penalty is the one a note would get in a corpus made of these
/// synthetic notes: under [`Normalization::PerRating`] the intercept weight
/// is `λ_i` times the mean count.
pub fn shrinkage_curve_with(
    profile: &RatingProfile,
    counts: &[usize],
    cfg: &ScoringConfig,
    raters: &FrozenRaters,
) -> Result<Vec<(usize, f64)>> {
    profile.validate()?;
    if raters.factor.len() != cfg.factor_dim {
        return Err(Error::InvalidConfig(format!(
            "frozen rater factor has length {}, expected {}",
            raters.factor.len(),
            cfg.factor_dim
        )));
    }
    if counts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidConfig("counts must be strictly increasing".into()));
    }
    let scale = match cfg.normalization {
        Normalization::Sum => 1.0,
        Normalization::PerRating if counts.is_empty() => 1.0,
        Normalization::PerRating => counts.iter().sum::<usize>() as f64 / counts.len() as f64,
    };
    let (w_int, w_fac) = (cfg.lambda_intercept * scale, cfg.lambda_factor * scale);
    let offset = raters.global_intercept + raters.intercept;
    let mut out = Vec::with_capacity(counts.len());
    let mut x = vec![0.0; cfg.factor_dim + 1];
    for &c in counts {
        if c == 0 {
            out.push((c, 0.0));
            continue;
        }
        let values = profile.realize(c);
        solve_block(
            values.iter().map(|v| (raters.factor.as_slice(), v - offset)),
            cfg.factor_dim,
            w_int,
            w_fac,
            &mut x,
        );
        out.push((c, x[0]));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn realize_matches_profile_exactly() {
        let p = RatingProfile {
            not_helpful: 0.2,
            somewhat_helpful: 0.3,
            helpful: 0.5,
        };
        let v = p.realize(10);
        assert_eq!(v.len(), 10);
        assert_eq!(v.iter().filter(|x| **x == 0.0).count(), 2);
        assert_eq!(v.iter().filter(|x| **x == 0.5).count(), 3);
        assert_eq!(v.iter().filter(|x| **x == 1.0).count(), 5);
        assert_eq!(p.realize(7).len(), 7);
    }

    #[test]
    fn zero_count_is_pure_shrinkage() {
        let cfg = ScoringConfig::default();
        let c = shrinkage_curve(&RatingProfile::ALL_HELPFUL, &[0, 5], &cfg).unwrap();
        assert_eq!(c[0], (0, 0.0));
    }

    #[test]
    fn closed_form_with_neutral_raters() {
        let cfg = ScoringConfig::default();
        let c = shrinkage_curve(&RatingProfile::ALL_HELPFUL, &[5, 20, 80], &cfg).unwrap();
        let w = 0.15 * 35.0;
        for (n, s) in c {
            let expected = n as f64 / (n as f64 + w);
            assert!((s - expected).abs() < 1e-12, "{n}: {s} vs {expected}");
        }
    }

    #[test]
    fn vanishing_penalty_recovers_mean() {
        let p = RatingProfile {
            not_helpful: 0.25,
            somewhat_helpful: 0.25,
            helpful: 0.5,
        };
        let cfg = ScoringConfig {
            lambda_intercept: 1e-10,
            ..ScoringConfig::default()
        };
        let c = shrinkage_curve(&p, &[20], &cfg).unwrap();
        assert!((c[0].1 - p.mean()).abs() < 1e-8);
    }

    #[test]
    fn counts_must_increase() {
        let cfg = ScoringConfig::default();
        assert!(shrinkage_curve(&RatingProfile::ALL_HELPFUL, &[5, 5], &cfg).is_err());
    }

    proptest! {
        #[test]
        fn magnitude_nondecreasing_in_count(
            nh in 0u32..=4, sh in 0u32..=4, h in 0u32..=4,
            base in prop::collection::btree_set(1usize..40, 1..6),
            sum_norm in any::<bool>(),
        ) {
            prop_assume!(nh + sh + h > 0);
            let denom = (nh + sh + h) as usize;
            let t = denom as f64;
            let p = RatingProfile { not_helpful: nh as f64 / t, somewhat_helpful: sh as f64 / t, helpful: h as f64 / t };
            let counts: Vec<usize> = base.into_iter().map(|b| b * denom).collect();
            let cfg = ScoringConfig {
                normalization: if sum_norm { Normalization::Sum } else { Normalization::PerRating },
                ..ScoringConfig::default()
            };
            let c = shrinkage_curve(&p, &counts, &cfg).unwrap();
            for w in c.windows(2) {
                prop_assert!(w[1].1.abs() + 1e-12 >= w[0].1.abs());
            }
        }
    }
}
