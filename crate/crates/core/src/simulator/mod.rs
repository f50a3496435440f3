//! Synthetic corpora with known parameters.
//!
//! Each post gets one LLM note and `notes_per_tweet − 1` human notes. A
//! note's ratings arrive as an inhomogeneous Poisson process whose rate
//! decays with the age of the post and with the note's creation rank, so a
//! note written late collects fewer ratings than an equally good early one.
//! This decay is a stand-in for the platform's ranking and attention
//! dynamics, which are not observed.
//!
//! Draws are split into substreams of one seeded ChaCha generator: stream 0
//! for raters, then two streams per post (parameters, arrivals) fixed by the
//! post's index. Posts are simulated in parallel and the output does not
//! depend on the thread count.

mod confound;
mod frames;

pub use confound::{compare_arms, confound_experiment, ArmComparison, ConfoundArms, ConfoundReport, GroupOutcome};
pub use frames::{simulate_rating_frame, GaussianLmmConfig};

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    Dataset, HelpfulnessLevel, Millis, Modality, Note, NoteId, NoteStatus, NoteStatusRecord, RaterId, RaterProfile,
    Rating, Topic, TopicLabel, TweetId, MILLIS_PER_HOUR,
};
use crate::error::{Error, Result};
use crate::scoring::{fit_bridging, ScoringConfig};

/// 2025-11-01T00:00:00Z; the first simulated post.
pub const SIM_EPOCH_MILLIS: Millis = 1_761_955_200_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityDist {
    pub mean: f64,
    pub sd: f64,
}

/// Delay between a post and a note on it, in hours.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LagDist {
    Fixed { hours: f64 },
    Exponential { mean_hours: f64 },
    Uniform { min_hours: f64, max_hours: f64 },
}

impl LagDist {
    pub fn mean_hours(&self) -> f64 {
        match *self {
            LagDist::Fixed { hours } => hours,
            LagDist::Exponential { mean_hours } => mean_hours,
            LagDist::Uniform { min_hours, max_hours } => 0.5 * (min_hours + max_hours),
        }
    }

    fn validate(&self, what: &str) -> Result<()> {
        let ok = match *self {
            LagDist::Fixed { hours } => hours >= 0.0 && hours.is_finite(),
            LagDist::Exponential { mean_hours } => mean_hours > 0.0 && mean_hours.is_finite(),
            LagDist::Uniform { min_hours, max_hours } => {
                min_hours >= 0.0 && min_hours <= max_hours && max_hours.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "{what}: invalid lag distribution {self:?}"
            )))
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            LagDist::Fixed { hours } => hours,
            LagDist::Exponential { mean_hours } => Exp::new(1.0 / mean_hours).expect("validated").sample(rng),
            LagDist::Uniform { min_hours, max_hours } => min_hours + (max_hours - min_hours) * rng.random::<f64>(),
        }
    }
}

/// Rating rate `base_rate · rank_decay^rank · exp(−post_age / decay_hours)`
/// per hour, from the note's creation until the horizon. `rank` is the
/// note's 0-based creation order on its post. No `decay_hours` means a
/// constant rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrivalConfig {
    pub base_rate_per_hour: f64,
    pub decay_hours: Option<f64>,
    pub rank_decay: f64,
}

impl ArrivalConfig {
    /// Expected ratings for a note created `lag` hours after its post, with
    /// the given rank, up to `horizon` hours.
    pub fn expected_count(&self, lag: f64, rank: usize, horizon: f64) -> f64 {
        if lag >= horizon {
            return 0.0;
        }
        let scale = self.base_rate_per_hour * self.rank_decay.powi(rank as i32);
        match self.decay_hours {
            None => scale * (horizon - lag),
            Some(tau) => scale * tau * ((-lag / tau).exp() - (-horizon / tau).exp()),
        }
    }

    /// Post ages (hours) of the arrivals, given their count.
    fn sample_times<R: Rng>(&self, lag: f64, horizon: f64, n: usize, rng: &mut R) -> Vec<f64> {
        let mut t: Vec<f64> = (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                match self.decay_hours {
                    None => lag + u * (horizon - lag),
                    Some(tau) => {
                        // inverse CDF of the truncated exponential on [lag, horizon]
                        let (a, b) = ((-lag / tau).exp(), (-horizon / tau).exp());
                        -tau * (a - u * (a - b)).ln()
                    }
                }
            })
            .collect();
        t.sort_by(f64::total_cmp);
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub seed: u64,
    pub n_tweets: usize,
    /// Notes per post, one of them written by the LLM.
    pub notes_per_tweet: usize,
    pub n_raters: usize,
    pub rater_factor_mixture: Vec<MixtureComponent>,
    pub rater_intercept_sd: f64,
    /// Latent mean rating `μ`.
    pub global_mean: f64,
    pub llm_quality: QualityDist,
    pub human_quality: QualityDist,
    pub note_factor_sd: f64,
    pub llm_lag: LagDist,
    pub human_lag: LagDist,
    pub arrival: ArrivalConfig,
    /// Log-scale SD of a per-post rate multiplier with mean 1; posts differ
    /// in reach.
    pub popularity_sd: f64,
    /// Chance that an arrival is a rater who already rated another note on
    /// the same post.
    pub revisit_prob: f64,
    pub horizon_hours: f64,
    pub tweet_interval_hours: f64,
    pub noise_sd: f64,
    /// Latent values below the first cut are Not Helpful, below the second
    /// Somewhat Helpful, otherwise Helpful.
    pub discretization_cuts: [f64; 2],
    /// Hours after the first post at which the corpus is re-scored to
    /// build a status history. Empty disables snapshots.
    pub snapshot_hours: Vec<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 0,
            n_tweets: 400,
            notes_per_tweet: 3,
            n_raters: 1000,
            rater_factor_mixture: vec![
                MixtureComponent {
                    weight: 0.4,
                    mean: -0.5,
                    sd: 0.15,
                },
                MixtureComponent {
                    weight: 0.4,
                    mean: 0.5,
                    sd: 0.15,
                },
                MixtureComponent {
                    weight: 0.2,
                    mean: 0.0,
                    sd: 0.05,
                },
            ],
            rater_intercept_sd: 0.15,
            global_mean: 0.8,
            llm_quality: QualityDist { mean: 0.1, sd: 0.2 },
            human_quality: QualityDist { mean: 0.0, sd: 0.2 },
            note_factor_sd: 0.2,
            llm_lag: LagDist::Fixed { hours: 6.0 },
            human_lag: LagDist::Exponential { mean_hours: 5.5 },
            arrival: ArrivalConfig {
                base_rate_per_hour: 8.5,
                decay_hours: Some(12.0),
                rank_decay: 0.5,
            },
            popularity_sd: 0.75,
            revisit_prob: 0.7,
            horizon_hours: 48.0,
            tweet_interval_hours: 0.5,
            noise_sd: 0.3,
            discretization_cuts: [0.35, 0.75],
            snapshot_hours: Vec::new(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.n_tweets == 0 || self.n_raters == 0 {
            return bad("n_tweets and n_raters must be positive");
        }
        if self.notes_per_tweet < 1 {
            return bad("notes_per_tweet must be at least 1");
        }
        if self.rater_factor_mixture.is_empty()
            || self
                .rater_factor_mixture
                .iter()
                .any(|c| !(c.weight > 0.0 && c.weight.is_finite() && c.sd >= 0.0 && c.mean.is_finite()))
        {
            return bad("rater_factor_mixture needs components with positive weight and sd >= 0");
        }
        let sds = [
            self.rater_intercept_sd,
            self.llm_quality.sd,
            self.human_quality.sd,
            self.note_factor_sd,
            self.noise_sd,
            self.popularity_sd,
        ];
        if sds.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return bad("all standard deviations must be finite and >= 0");
        }
        if !(self.horizon_hours > 0.0 && self.horizon_hours.is_finite()) {
            return bad("horizon_hours must be positive");
        }
        if !(self.discretization_cuts[0] < self.discretization_cuts[1]) {
            return bad("discretization_cuts must be strictly increasing");
        }
        if !(0.0..=1.0).contains(&self.revisit_prob) {
            return bad("revisit_prob must lie in [0, 1]");
        }
        let a = &self.arrival;
        if !(a.base_rate_per_hour >= 0.0 && a.base_rate_per_hour.is_finite())
            || !(a.rank_decay > 0.0 && a.rank_decay <= 1.0)
            || a.decay_hours.is_some_and(|t| !(t > 0.0 && t.is_finite()))
        {
            return bad("arrival needs base_rate >= 0, rank_decay in (0, 1], decay_hours > 0");
        }
        if !(self.tweet_interval_hours >= 0.0 && self.tweet_interval_hours.is_finite()) {
            return bad("tweet_interval_hours must be >= 0");
        }
        if self.snapshot_hours.iter().any(|h| !(h.is_finite() && *h >= 0.0)) {
            return bad("snapshot_hours must be finite and >= 0");
        }
        self.llm_lag.validate("llm_lag")?;
        self.human_lag.validate("human_lag")
    }

    fn discretize(&self, latent: f64) -> HelpfulnessLevel {
        let [lo, hi] = self.discretization_cuts;
        if latent < lo {
            HelpfulnessLevel::NotHelpful
        } else if latent < hi {
            HelpfulnessLevel::SomewhatHelpful
        } else {
            HelpfulnessLevel::Helpful
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueRater {
    pub rater_id: RaterId,
    pub intercept: f64,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueNote {
    pub note_id: NoteId,
    pub tweet_id: TweetId,
    pub is_ai: bool,
    pub quality: f64,
    pub factor: f64,
    pub created_at: Millis,
    /// Creation order on the post, 0-based.
    pub rank: usize,
    pub lag_hours: f64,
}

/// One entry per emitted rating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRating {
    pub rater_id: RaterId,
    pub note_id: NoteId,
    pub latent: f64,
    pub value: f64,
    pub created_at: Millis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTruth {
    pub global_mean: f64,
    pub raters: Vec<TrueRater>,
    pub notes: Vec<TrueNote>,
    pub ratings: Vec<SimRating>,
}

fn rater_id(i: usize) -> RaterId {
    RaterId(format!("r{i:06}"))
}

fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn normal(mean: f64, sd: f64) -> Normal<f64> {
    Normal::new(mean, sd).expect("validated sd")
}

fn draw_raters(cfg: &SimConfig) -> Vec<TrueRater> {
    let mut rng = substream(cfg.seed, 0);
    let total: f64 = cfg.rater_factor_mixture.iter().map(|c| c.weight).sum();
    let intercept = normal(0.0, cfg.rater_intercept_sd);
    (0..cfg.n_raters)
        .map(|i| {
            let mut u = rng.random::<f64>() * total;
            let mut comp = cfg.rater_factor_mixture.last().expect("validated");
            for c in &cfg.rater_factor_mixture {
                if u < c.weight {
                    comp = c;
                    break;
                }
                u -= c.weight;
            }
            let factor = normal(comp.mean, comp.sd).sample(&mut rng);
            TrueRater {
                rater_id: rater_id(i),
                intercept: intercept.sample(&mut rng),
                factor,
            }
        })
        .collect()
}

fn simulate_tweet(cfg: &SimConfig, raters: &[TrueRater], t: usize) -> (Vec<TrueNote>, Vec<SimRating>) {
    let mut prng = substream(cfg.seed, 2 * t as u64 + 1);
    let mut arng = substream(cfg.seed, 2 * t as u64 + 2);
    let tweet_id = TweetId(format!("t{t:06}"));
    let posted = SIM_EPOCH_MILLIS + (t as f64 * cfg.tweet_interval_hours * MILLIS_PER_HOUR).round() as Millis;

    // Note 0 is the LLM note. Qualities and factors come first so a change
    // of lag distribution leaves them untouched.
    let k = cfg.notes_per_tweet;
    let mut notes: Vec<TrueNote> = (0..k)
        .map(|j| {
            let q = if j == 0 { cfg.llm_quality } else { cfg.human_quality };
            TrueNote {
                note_id: NoteId(format!("n{t:06}-{j}")),
                tweet_id: tweet_id.clone(),
                is_ai: j == 0,
                quality: normal(q.mean, q.sd).sample(&mut prng),
                factor: normal(0.0, cfg.note_factor_sd).sample(&mut prng),
                created_at: 0,
                rank: 0,
                lag_hours: 0.0,
            }
        })
        .collect();
    for n in notes.iter_mut().skip(1) {
        n.lag_hours = cfg.human_lag.sample(&mut prng);
    }
    notes[0].lag_hours = cfg.llm_lag.sample(&mut prng);
    let s = cfg.popularity_sd;
    let reach = (normal(0.0, s).sample(&mut prng) - 0.5 * s * s).exp();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| notes[a].lag_hours.total_cmp(&notes[b].lag_hours).then(a.cmp(&b)));
    for (rank, &j) in order.iter().enumerate() {
        notes[j].rank = rank;
    }
    for n in &mut notes {
        n.created_at = posted + (n.lag_hours * MILLIS_PER_HOUR).round() as Millis;
    }

    // (post age, note) for every arrival, in time order
    let mut events: Vec<(f64, usize)> = Vec::new();
    for (j, n) in notes.iter().enumerate() {
        let mean = reach * cfg.arrival.expected_count(n.lag_hours, n.rank, cfg.horizon_hours);
        let count = if mean > 0.0 {
            Poisson::new(mean).expect("positive mean").sample(&mut arng) as usize
        } else {
            0
        };
        let times = cfg
            .arrival
            .sample_times(n.lag_hours, cfg.horizon_hours, count, &mut arng);
        events.extend(times.into_iter().map(|a| (a, j)));
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let noise = normal(0.0, cfg.noise_sd);
    let mut rated: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); k];
    let mut visitors: Vec<usize> = Vec::new();
    let mut log = Vec::with_capacity(events.len());
    for (age, j) in events {
        let candidates: Vec<usize> = if arng.random::<f64>() < cfg.revisit_prob {
            visitors.iter().copied().filter(|u| !rated[j].contains(u)).collect()
        } else {
            Vec::new()
        };
        let u = if candidates.is_empty() {
            if rated[j].len() >= raters.len() {
                continue;
            }
            loop {
                let u = arng.random_range(0..raters.len());
                if !rated[j].contains(&u) {
                    break u;
                }
            }
        } else {
            candidates[arng.random_range(0..candidates.len())]
        };
        if !visitors.contains(&u) {
            visitors.push(u);
        }
        rated[j].insert(u);
        let (r, n) = (&raters[u], &notes[j]);
        let latent = cfg.global_mean + r.intercept + n.quality + r.factor * n.factor + noise.sample(&mut arng);
        log.push(SimRating {
            rater_id: r.rater_id.clone(),
            note_id: n.note_id.clone(),
            latent,
            value: cfg.discretize(latent).value(),
            created_at: posted + (age * MILLIS_PER_HOUR).round() as Millis,
        });
    }
    (notes, log)
}

/// Draws a corpus and the parameters that generated it.
///
/// Rater profiles in the dataset are the true factors and intercepts.
/// With `snapshot_hours` set, the corpus is re-scored with the default
/// scoring config at each snapshot to fill `status_history`.
pub fn simulate(cfg: &SimConfig) -> Result<(Dataset, SimTruth)> {
    cfg.validate()?;
    let raters = draw_raters(cfg);
    let per_tweet: Vec<_> = (0..cfg.n_tweets)
        .into_par_iter()
        .map(|t| simulate_tweet(cfg, &raters, t))
        .collect();
    let mut truth_notes = Vec::new();
    let mut log = Vec::new();
    for (notes, ratings) in per_tweet {
        truth_notes.extend(notes);
        log.extend(ratings);
    }
    let notes = truth_notes
        .iter()
        .map(|n| Note {
            note_id: n.note_id.clone(),
            tweet_id: n.tweet_id.clone(),
            is_ai: n.is_ai,
            created_at: n.created_at,
            text: String::new(),
            is_media_note: false,
            writer_id: Some(if n.is_ai {
                "llm-writer".into()
            } else {
                format!("w-{}", n.note_id)
            }),
        })
        .collect();
    let ratings = log
        .iter()
        .map(|r| Rating {
            rater_id: r.rater_id.clone(),
            note_id: r.note_id.clone(),
            value: HelpfulnessLevel::from_value(r.value).expect("discretized"),
            created_at: r.created_at,
        })
        .collect();
    let profiles = raters
        .iter()
        .map(|r| RaterProfile {
            rater_id: r.rater_id.clone(),
            factor: r.factor,
            intercept: r.intercept,
        })
        .collect();
    let mut d = Dataset::from_parts(notes, ratings, profiles)?;
    if !cfg.snapshot_hours.is_empty() {
        d.status_history = status_snapshots(&d, &cfg.snapshot_hours)?;
    }
    Ok((
        d,
        SimTruth {
            global_mean: cfg.global_mean,
            raters,
            notes: truth_notes,
            ratings: log,
        },
    ))
}

/// Uniform random topic and modality per post, for exercising subgroup
/// fits on simulated corpora. Labels carry no signal.
pub fn simulate_labels(d: &Dataset, seed: u64) -> Vec<TopicLabel> {
    let mut rng = substream(seed, u64::MAX);
    d.notes_by_tweet()
        .keys()
        .map(|t| TopicLabel {
            tweet_id: (*t).clone(),
            topic: Topic::ALL[rng.random_range(0..Topic::ALL.len())],
            modality: Modality::ALL[rng.random_range(0..Modality::ALL.len())],
        })
        .collect()
}

fn status_snapshots(d: &Dataset, hours: &[f64]) -> Result<std::collections::BTreeMap<NoteId, NoteStatusRecord>> {
    let scoring = ScoringConfig::default();
    let mut hist: std::collections::BTreeMap<NoteId, NoteStatusRecord> = d
        .notes
        .keys()
        .map(|id| {
            (
                id.clone(),
                NoteStatusRecord {
                    note_id: id.clone(),
                    status: NoteStatus::Nmr,
                    first_crh_at: None,
                },
            )
        })
        .collect();
    let mut sorted = hours.to_vec();
    sorted.sort_by(f64::total_cmp);
    for h in sorted {
        let cutoff = SIM_EPOCH_MILLIS + (h * MILLIS_PER_HOUR).round() as Millis;
        let visible: Vec<Rating> = d.ratings.iter().filter(|r| r.created_at <= cutoff).cloned().collect();
        if visible.is_empty() {
            continue;
        }
        let scores = fit_bridging(&d.with_ratings(visible), &scoring)?;
        for (id, rec) in hist.iter_mut() {
            let status = scores.status(id).unwrap_or(NoteStatus::Nmr);
            rec.status = status;
            if status == NoteStatus::Crh && rec.first_crh_at.is_none() {
                rec.first_crh_at = Some(cutoff);
            }
        }
    }
    Ok(hist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::{fit_index, Normalization, RatingIndex};

    fn small(seed: u64) -> SimConfig {
        SimConfig {
            seed,
            n_tweets: 40,
            n_raters: 200,
            ..SimConfig::default()
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        let (a, ta) = simulate(&small(3)).unwrap();
        let (b, tb) = simulate(&small(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        let (c, _) = simulate(&small(4)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn thread_count_does_not_matter() {
        let cfg = small(9);
        let serial = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| simulate(&cfg).unwrap());
        assert_eq!(serial, simulate(&cfg).unwrap());
    }

    #[test]
    fn every_rating_has_a_log_entry() {
        let (d, t) = simulate(&small(1)).unwrap();
        assert_eq!(d.ratings.len(), t.ratings.len());
        for r in &t.ratings {
            let v = d
                .ratings
                .binary_search_by(|x| (&x.note_id, &x.rater_id).cmp(&(&r.note_id, &r.rater_id)))
                .map(|i| d.ratings[i].score());
            assert_eq!(v, Ok(r.value));
        }
        for r in &d.ratings {
            let n = &d.notes[&r.note_id];
            assert!(r.created_at >= n.created_at);
        }
    }

    #[test]
    fn noiseless_good_notes_are_all_helpful() {
        let cfg = SimConfig {
            n_raters: 1,
            rater_factor_mixture: vec![MixtureComponent {
                weight: 1.0,
                mean: 0.0,
                sd: 0.0,
            }],
            rater_intercept_sd: 0.0,
            llm_quality: QualityDist { mean: 2.0, sd: 0.0 },
            human_quality: QualityDist { mean: 2.0, sd: 0.0 },
            noise_sd: 0.0,
            n_tweets: 20,
            ..SimConfig::default()
        };
        let (d, _) = simulate(&cfg).unwrap();
        assert!(!d.ratings.is_empty());
        assert!(d.ratings.iter().all(|r| r.value == HelpfulnessLevel::Helpful));
    }

    #[test]
    fn late_llm_notes_can_go_unrated() {
        let cfg = SimConfig {
            llm_lag: LagDist::Fixed { hours: 100.0 },
            ..small(2)
        };
        let (d, _) = simulate(&cfg).unwrap();
        let counts = d.rating_counts();
        let llm: Vec<_> = d.notes.values().filter(|n| n.is_ai).collect();
        assert_eq!(llm.len(), 40);
        assert!(llm.iter().all(|n| counts[&n.note_id] == 0));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let c = SimConfig {
            discretization_cuts: [0.7, 0.7],
            ..SimConfig::default()
        };
        assert!(matches!(simulate(&c), Err(Error::InvalidConfig(_))));
        let c = SimConfig {
            noise_sd: -1.0,
            ..SimConfig::default()
        };
        assert!(c.validate().is_err());
        let c = SimConfig {
            horizon_hours: 0.0,
            ..SimConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn expected_count_integrates_the_rate() {
        let a = ArrivalConfig {
            base_rate_per_hour: 2.0,
            decay_hours: Some(5.0),
            rank_decay: 0.5,
        };
        // trapezoid rule on the rate
        let (lag, h, steps) = (3.0, 20.0, 200_000);
        let dt = (h - lag) / steps as f64;
        let rate = |t: f64| 2.0 * 0.25 * (-t / 5.0).exp();
        let num: f64 = (0..steps)
            .map(|i| 0.5 * (rate(lag + i as f64 * dt) + rate(lag + (i + 1) as f64 * dt)) * dt)
            .sum();
        assert!((a.expected_count(lag, 2, h) - num).abs() < 1e-8);
        assert_eq!(a.expected_count(25.0, 0, h), 0.0);
    }

    #[test]
    fn snapshots_fill_status_history() {
        let cfg = SimConfig {
            snapshot_hours: vec![12.0, 24.0, 48.0, 96.0],
            ..small(5)
        };
        let (d, _) = simulate(&cfg).unwrap();
        assert_eq!(d.status_history.len(), d.notes.len());
        for rec in d.status_history.values() {
            if let Some(t) = rec.first_crh_at {
                assert!(t >= d.notes[&rec.note_id].created_at);
            }
        }
    }

    /// Dense noiseless continuous ratings without note factors: the scorer
    /// with a vanishing penalty recovers note quality up to a shared
    /// constant. With note factors the split between `i_n` and `f_u·f_n` is
    /// not identified (shifting every rater factor moves `c·f_n` into `i_n`).
    #[test]
    fn continuous_noiseless_recovery() {
        let cfg = SimConfig {
            n_tweets: 10,
            n_raters: 30,
            noise_sd: 0.0,
            note_factor_sd: 0.0,
            arrival: ArrivalConfig {
                base_rate_per_hour: 1000.0,
                decay_hours: None,
                rank_decay: 1.0,
            },
            ..SimConfig::default()
        };
        let (_, truth) = simulate(&cfg).unwrap();
        let rid = |id: &RaterId| truth.raters.iter().position(|r| &r.rater_id == id).unwrap();
        let nid = |id: &NoteId| truth.notes.iter().position(|n| &n.note_id == id).unwrap();
        let triples: Vec<_> = truth
            .ratings
            .iter()
            .map(|r| (rid(&r.rater_id), nid(&r.note_id), r.latent))
            .collect();
        assert_eq!(triples.len(), 30 * 30);
        let idx = RatingIndex::from_triples(30, 30, triples);
        let scoring = ScoringConfig {
            lambda_intercept: 1e-10,
            // a factor penalty keeps f_u·f_n from absorbing note intercepts
            lambda_factor: 0.01,
            convergence_tol: 1e-16,
            max_iterations: 50_000,
            normalization: Normalization::PerRating,
            ..ScoringConfig::default()
        };
        let fit = fit_index(&idx, &scoring).unwrap();
        let shift = fit.params.note_intercept[0] - truth.notes[0].quality;
        for (n, t) in truth.notes.iter().enumerate() {
            let est = fit.params.note_intercept[n] - shift;
            assert!((est - t.quality).abs() < 1e-3, "{est} vs {}", t.quality);
        }
    }
}
