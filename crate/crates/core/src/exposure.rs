//! Equal-exposure subsets: per tweet, keep only raters who rated every note.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, NoteId, RaterId, Rating, TweetId};
use crate::error::{Error, Result};
use crate::scoring::{fit_bridging, ScoringConfig, ScoringResult};

/// A complete rater × note block for one tweet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompleteBlock {
    pub tweet_id: TweetId,
    pub note_ids: BTreeSet<NoteId>,
    pub rater_ids: BTreeSet<RaterId>,
    pub ratings: Vec<Rating>,
}

/// Blocks plus the count of tweets that produced none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSummary {
    pub tweets_with_notes: usize,
    pub tweets_with_block: usize,
    pub notes: usize,
    pub raters: usize,
    pub ratings: usize,
}

/// One block per tweet on which at least one rater rated every note.
///
/// The note set of a tweet is every note on it in `d`, rated or not, so a
/// tweet with an unrated note yields no block.
pub fn build_complete_blocks(d: &Dataset) -> Vec<CompleteBlock> {
    let by_note = d.ratings_by_note();
    let tweets: Vec<(&TweetId, Vec<&NoteId>)> = d
        .notes_by_tweet()
        .into_iter()
        .map(|(t, ns)| (t, ns.into_iter().map(|n| &n.note_id).collect()))
        .collect();
    tweets
        .par_iter()
        .filter_map(|(tweet, notes)| {
            let mut seen: BTreeMap<&RaterId, usize> = BTreeMap::new();
            for n in notes {
                for r in by_note.get(n).map(Vec::as_slice).unwrap_or(&[]) {
                    *seen.entry(&r.rater_id).or_default() += 1;
                }
            }
            let complete: BTreeSet<RaterId> = seen
                .into_iter()
                .filter(|(_, c)| *c == notes.len())
                .map(|(r, _)| r.clone())
                .collect();
            if complete.is_empty() {
                return None;
            }
            let ratings: Vec<Rating> = notes
                .iter()
                .flat_map(|n| by_note.get(n).map(Vec::as_slice).unwrap_or(&[]))
                .filter(|r| complete.contains(&r.rater_id))
                .map(|r| (*r).clone())
                .collect();
            Some(CompleteBlock {
                tweet_id: (*tweet).clone(),
                note_ids: notes.iter().map(|n| (*n).clone()).collect(),
                rater_ids: complete,
                ratings,
            })
        })
        .collect()
}

pub fn summarize_blocks(d: &Dataset, blocks: &[CompleteBlock]) -> BlockSummary {
    BlockSummary {
        tweets_with_notes: d.notes_by_tweet().len(),
        tweets_with_block: blocks.len(),
        notes: blocks.iter().map(|b| b.note_ids.len()).sum(),
        raters: blocks.iter().flat_map(|b| &b.rater_ids).collect::<BTreeSet<_>>().len(),
        ratings: blocks.iter().map(|b| b.ratings.len()).sum(),
    }
}

/// `d` restricted to block notes and block ratings.
pub fn equal_exposure_dataset(d: &Dataset, blocks: &[CompleteBlock]) -> Dataset {
    let keep: BTreeSet<NoteId> = blocks.iter().flat_map(|b| b.note_ids.iter().cloned()).collect();
    let ratings = blocks.iter().flat_map(|b| b.ratings.iter().cloned()).collect();
    d.restrict_to_notes(&keep).with_ratings(ratings)
}

/// Pools every block into a single bridging fit.
pub fn rescore_equal_exposure(blocks: &[CompleteBlock], cfg: &ScoringConfig) -> Result<ScoringResult> {
    let ratings: Vec<Rating> = blocks.iter().flat_map(|b| b.ratings.iter().cloned()).collect();
    if ratings.is_empty() {
        return Err(Error::NoRatings);
    }
    fit_bridging(&Dataset::default().with_ratings(ratings), cfg)
}

pub fn write_blocks_tsv<W: Write>(blocks: &[CompleteBlock], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_writer(out);
    w.write_record(["tweetId", "noteId", "raterParticipantId", "helpfulnessLevel"])?;
    for b in blocks {
        for r in &b.ratings {
            w.write_record([
                b.tweet_id.as_str(),
                r.note_id.as_str(),
                r.rater_id.as_str(),
                r.value.as_export_str(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::Serialize(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    /// 10th..90th percentiles (type-7 interpolation).
    pub deciles: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` shared edges.
    pub edges: Vec<f64>,
    pub full_counts: Vec<usize>,
    pub subset_counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableComparison {
    pub variable: String,
    pub full: Summary,
    pub subset: Summary,
    pub ks_statistic: f64,
    pub histogram: Histogram,
}

/// Profile distributions of all active raters against complete raters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionComparison {
    pub variables: Vec<VariableComparison>,
}

impl DistributionComparison {
    /// Long-format histogram CSV: variable, bin_lo, bin_hi, population, count.
    pub fn write_histogram_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["variable", "bin_lo", "bin_hi", "population", "count"])?;
        for v in &self.variables {
            let h = &v.histogram;
            for (pop, counts) in [("all", &h.full_counts), ("complete", &h.subset_counts)] {
                for (i, c) in counts.iter().enumerate() {
                    w.write_record([
                        v.variable.as_str(),
                        &format!("{:.6}", h.edges[i]),
                        &format!("{:.6}", h.edges[i + 1]),
                        pop,
                        &c.to_string(),
                    ])?;
                }
            }
        }
        w.flush().map_err(|e| Error::Serialize(e.to_string()))
    }
}

pub const HISTOGRAM_BINS: usize = 20;

/// Compares rater factor and intercept distributions.
///
/// The full population is every rater with a profile and at least one
/// rating in `d`; raters lacking a profile are skipped on both sides.
pub fn representativeness_report(d: &Dataset, blocks: &[CompleteBlock]) -> DistributionComparison {
    let active = d.active_raters();
    let complete: BTreeSet<&RaterId> = blocks.iter().flat_map(|b| &b.rater_ids).collect();
    let full: Vec<_> = active.iter().filter_map(|r| d.raters.get(*r)).collect();
    let sub: Vec<_> = complete.iter().filter_map(|r| d.raters.get(*r)).collect();
    let factor = |v: &[&crate::data::RaterProfile]| v.iter().map(|p| p.factor).collect::<Vec<_>>();
    let intercept = |v: &[&crate::data::RaterProfile]| v.iter().map(|p| p.intercept).collect::<Vec<_>>();
    DistributionComparison {
        variables: vec![
            compare("factor", &factor(&full), &factor(&sub)),
            compare("intercept", &intercept(&full), &intercept(&sub)),
        ],
    }
}

fn compare(name: &str, full: &[f64], sub: &[f64]) -> VariableComparison {
    VariableComparison {
        variable: name.to_string(),
        full: summarize(full),
        subset: summarize(sub),
        ks_statistic: ks_statistic(full, sub),
        histogram: histogram(full, sub, HISTOGRAM_BINS),
    }
}

pub fn summarize(x: &[f64]) -> Summary {
    let n = x.len();
    if n == 0 {
        return Summary {
            n,
            mean: f64::NAN,
            sd: f64::NAN,
            deciles: vec![f64::NAN; 9],
        };
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    Summary {
        n,
        mean,
        sd,
        deciles: (1..10).map(|k| quantile_sorted(&s, k as f64 / 10.0)).collect(),
    }
}

/// Type-7 quantile of sorted data.
pub fn quantile_sorted(s: &[f64], q: f64) -> f64 {
    if s.is_empty() {
        return f64::NAN;
    }
    let h = (s.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    s[lo] + (h - lo as f64) * (s[hi] - s[lo])
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a − F_b|`.
/// Returns 0 when either sample is empty.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

fn histogram(full: &[f64], sub: &[f64], bins: usize) -> Histogram {
    let all = full.iter().chain(sub);
    let lo = all.clone().copied().fold(f64::INFINITY, f64::min);
    let hi = all.copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    };
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
    let count = |x: &[f64]| {
        let mut c = vec![0usize; bins];
        for v in x {
            let k = (((v - lo) / width).floor() as usize).min(bins - 1);
            c[k] += 1;
        }
        c
    };
    Histogram {
        edges,
        full_counts: count(full),
        subset_counts: count(sub),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{HelpfulnessLevel, Note, RaterProfile};
    use proptest::prelude::*;

    fn note(id: &str, tweet: &str) -> Note {
        Note {
            note_id: id.into(),
            tweet_id: tweet.into(),
            is_ai: false,
            created_at: 0,
            text: String::new(),
            is_media_note: false,
            writer_id: None,
        }
    }

    fn rating(rater: &str, note: &str, v: f64) -> Rating {
        Rating {
            rater_id: rater.into(),
            note_id: note.into(),
            value: HelpfulnessLevel::from_value(v).unwrap(),
            created_at: 1,
        }
    }

    fn profile(id: &str, f: f64) -> RaterProfile {
        RaterProfile {
            rater_id: id.into(),
            factor: f,
            intercept: f / 2.0,
        }
    }

    #[test]
    fn single_note_tweet_keeps_every_rating() {
        let d = Dataset::from_parts(
            vec![note("a", "t")],
            vec![rating("x", "a", 1.0), rating("y", "a", 0.0)],
            vec![profile("x", 0.1), profile("y", 0.2)],
        )
        .unwrap();
        let b = build_complete_blocks(&d);
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].ratings.len(), 2);
    }

    #[test]
    fn partial_rater_is_dropped() {
        let d = Dataset::from_parts(
            vec![note("a", "t"), note("b", "t")],
            vec![rating("x", "a", 1.0), rating("x", "b", 0.5), rating("y", "a", 1.0)],
            vec![profile("x", 0.1), profile("y", 0.2)],
        )
        .unwrap();
        let b = build_complete_blocks(&d);
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].rater_ids.iter().map(|r| r.as_str()).collect::<Vec<_>>(), ["x"]);
        assert_eq!(b[0].ratings.len(), 2);
    }

    #[test]
    fn tweet_without_complete_rater_yields_no_block() {
        let d = Dataset::from_parts(
            vec![note("a", "t"), note("b", "t")],
            vec![rating("x", "a", 1.0), rating("y", "b", 1.0)],
            vec![],
        )
        .unwrap();
        assert!(build_complete_blocks(&d).is_empty());
        assert!(matches!(
            rescore_equal_exposure(&[], &ScoringConfig::default()),
            Err(Error::NoRatings)
        ));
    }

    #[test]
    fn ks_edge_cases() {
        assert_eq!(ks_statistic(&[0.0, 0.0, 0.0], &[1.0, 1.0, 1.0]), 1.0);
        assert_eq!(ks_statistic(&[0.3, 0.1, 0.2], &[0.1, 0.2, 0.3]), 0.0);
        assert!((ks_statistic(&[1.0, 2.0], &[2.0, 3.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn identical_populations_give_zero_ks() {
        let d = Dataset::from_parts(
            vec![note("a", "t")],
            vec![rating("x", "a", 1.0), rating("y", "a", 0.0)],
            vec![profile("x", 0.1), profile("y", -0.4)],
        )
        .unwrap();
        let rep = representativeness_report(&d, &build_complete_blocks(&d));
        for v in &rep.variables {
            assert_eq!(v.ks_statistic, 0.0);
            assert_eq!(v.histogram.full_counts, v.histogram.subset_counts);
        }
    }

    fn arb_dataset() -> impl Strategy<Value = Dataset> {
        // 3 tweets × up to 3 notes, 6 raters, random coverage.
        prop::collection::vec(any::<bool>(), 54).prop_map(|mask| {
            let mut notes = Vec::new();
            let mut ratings = Vec::new();
            for t in 0..3 {
                for k in 0..=t {
                    notes.push(note(&format!("n{t}{k}"), &format!("t{t}")));
                    for u in 0..6 {
                        if mask[t * 18 + k * 6 + u] {
                            ratings.push(rating(&format!("u{u}"), &format!("n{t}{k}"), 1.0));
                        }
                    }
                }
            }
            Dataset::from_parts(notes, ratings, vec![]).unwrap()
        })
    }

    proptest! {
        #[test]
        fn blocks_are_complete_subsets(d in arb_dataset()) {
            let blocks = build_complete_blocks(&d);
            let all: BTreeSet<(&NoteId, &RaterId)> = d.ratings.iter().map(|r| (&r.note_id, &r.rater_id)).collect();
            let mut seen = BTreeSet::new();
            for b in &blocks {
                prop_assert_eq!(b.ratings.len(), b.note_ids.len() * b.rater_ids.len());
                for r in &b.ratings {
                    prop_assert!(all.contains(&(&r.note_id, &r.rater_id)));
                    prop_assert!(seen.insert((r.note_id.clone(), r.rater_id.clone())));
                    prop_assert_eq!(&d.notes[&r.note_id].tweet_id, &b.tweet_id);
                }
            }
        }

        #[test]
        fn completing_coverage_never_removes_raters(d in arb_dataset(), pick in 0usize..54) {
            let before = build_complete_blocks(&d);
            let t = pick / 18;
            let k = (pick % 18) / 6;
            let u = pick % 6;
            prop_assume!(k <= t);
            let (nid, rid) = (format!("n{t}{k}"), format!("u{u}"));
            prop_assume!(!d.ratings.iter().any(|r| r.note_id.as_str() == nid && r.rater_id.as_str() == rid));
            let mut ratings = d.ratings.clone();
            ratings.push(rating(&rid, &nid, 0.5));
            let after = build_complete_blocks(&d.with_ratings(ratings));
            for b in &before {
                let a = after.iter().find(|a| a.tweet_id == b.tweet_id).unwrap();
                prop_assert!(b.rater_ids.is_subset(&a.rater_ids));
            }
        }
    }
}
