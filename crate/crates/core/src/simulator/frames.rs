//! Gaussian rating-level frames for checking the regression estimators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::MixtureComponent;
use crate::data::{BucketConfig, IdeologyBucket};
use crate::error::{Error, Result};
use crate::inference::{GroupIndex, Grouping, ModelFrame, Outcome, Term};

/// `y = Σ β_t x_t + b_note + b_rater + b_tweet + ε` on a random sparse
/// note × rater design. Even-numbered notes are LLM notes; consecutive
/// notes share a post in runs of `notes_per_tweet`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianLmmConfig {
    pub seed: u64,
    pub n_notes: usize,
    pub n_raters: usize,
    /// Chance that a given rater rated a given note.
    pub rating_prob: f64,
    pub notes_per_tweet: usize,
    pub fixed: Vec<(Term, f64)>,
    pub note_sd: f64,
    pub rater_sd: f64,
    pub tweet_sd: f64,
    pub residual_sd: f64,
    pub rater_factor_mixture: Vec<MixtureComponent>,
    pub buckets: BucketConfig,
}

impl Default for GaussianLmmConfig {
    fn default() -> Self {
        GaussianLmmConfig {
            seed: 0,
            n_notes: 200,
            n_raters: 200,
            rating_prob: 0.5,
            notes_per_tweet: 2,
            fixed: vec![(Term::Intercept, 0.6), (Term::Ai, 0.104)],
            note_sd: 0.196,
            rater_sd: 0.160,
            tweet_sd: 0.0,
            residual_sd: 0.304,
            rater_factor_mixture: super::SimConfig::default().rater_factor_mixture,
            buckets: BucketConfig::default(),
        }
    }
}

pub fn simulate_rating_frame(cfg: &GaussianLmmConfig) -> Result<ModelFrame> {
    let sds = [cfg.note_sd, cfg.rater_sd, cfg.tweet_sd, cfg.residual_sd];
    if sds.iter().any(|s| !(*s >= 0.0 && s.is_finite()))
        || !(0.0..=1.0).contains(&cfg.rating_prob)
        || cfg.n_notes == 0
        || cfg.n_raters == 0
        || cfg.notes_per_tweet == 0
        || cfg.rater_factor_mixture.is_empty()
    {
        return Err(Error::InvalidConfig(format!("invalid Gaussian frame config {cfg:?}")));
    }
    cfg.buckets.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_tweets = cfg.n_notes.div_ceil(cfg.notes_per_tweet);
    let draw = |sd: f64, n: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
        let d = Normal::new(0.0, sd).expect("validated");
        (0..n).map(|_| d.sample(rng)).collect()
    };
    let b_note = draw(cfg.note_sd, cfg.n_notes, &mut rng);
    let b_rater = draw(cfg.rater_sd, cfg.n_raters, &mut rng);
    let b_tweet = draw(cfg.tweet_sd, n_tweets, &mut rng);
    let total: f64 = cfg.rater_factor_mixture.iter().map(|c| c.weight).sum();
    let factors: Vec<f64> = (0..cfg.n_raters)
        .map(|_| {
            let mut u = rng.random::<f64>() * total;
            let mut comp = cfg.rater_factor_mixture.last().expect("checked");
            for c in &cfg.rater_factor_mixture {
                if u < c.weight {
                    comp = c;
                    break;
                }
                u -= c.weight;
            }
            Normal::new(comp.mean, comp.sd).expect("sd >= 0").sample(&mut rng)
        })
        .collect();

    let mut f = ModelFrame::empty(Outcome::Rating, true);
    let (mut notes, mut raters, mut tweets) = (Vec::new(), Vec::new(), Vec::new());
    let mut rows = Vec::new();
    for n in 0..cfg.n_notes {
        for (u, &factor) in factors.iter().enumerate() {
            if rng.random::<f64>() >= cfg.rating_prob {
                continue;
            }
            let t = n / cfg.notes_per_tweet;
            let b = cfg.buckets.bucket(factor);
            f.ai.push((n % 2 == 0) as u8 as f64);
            f.factor.push(factor);
            f.left.push((b == IdeologyBucket::Left) as u8 as f64);
            f.right.push((b == IdeologyBucket::Right) as u8 as f64);
            f.y.push(0.0);
            notes.push(format!("n{n:05}"));
            raters.push(format!("r{u:05}"));
            tweets.push(format!("t{t:05}"));
            rows.push((n, u, t));
        }
    }
    let eps = Normal::new(0.0, cfg.residual_sd).expect("validated");
    for (i, &(n, u, t)) in rows.iter().enumerate() {
        let fixed: f64 = cfg.fixed.iter().map(|&(term, beta)| beta * term.value(&f, i)).sum();
        f.y[i] = fixed + b_note[n] + b_rater[u] + b_tweet[t] + eps.sample(&mut rng);
    }
    f.groups.insert(Grouping::Note, GroupIndex::from_labels(&notes));
    f.groups.insert(Grouping::Rater, GroupIndex::from_labels(&raters));
    f.groups.insert(Grouping::Tweet, GroupIndex::from_labels(&tweets));
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_determinism() {
        let cfg = GaussianLmmConfig {
            n_notes: 30,
            n_raters: 20,
            ..GaussianLmmConfig::default()
        };
        let a = simulate_rating_frame(&cfg).unwrap();
        assert_eq!(a, simulate_rating_frame(&cfg).unwrap());
        assert!(a.len() > 200 && a.len() < 400);
        assert_eq!(a.groups[&Grouping::Note].n_levels(), 30);
        assert_eq!(a.groups[&Grouping::Tweet].n_levels(), 15);
    }

    #[test]
    fn noiseless_frame_is_exactly_linear() {
        let cfg = GaussianLmmConfig {
            n_notes: 10,
            n_raters: 10,
            note_sd: 0.0,
            rater_sd: 0.0,
            residual_sd: 0.0,
            fixed: vec![(Term::Intercept, 1.0), (Term::Ai, 0.5), (Term::Factor, -2.0)],
            ..GaussianLmmConfig::default()
        };
        let f = simulate_rating_frame(&cfg).unwrap();
        for i in 0..f.len() {
            assert_eq!(f.y[i], 1.0 + 0.5 * f.ai[i] - 2.0 * f.factor[i]);
        }
    }
}
