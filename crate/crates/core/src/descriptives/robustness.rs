//! Note-level LLM/human comparisons and the subsets used to check them.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{mann_whitney_u, Group, TestResult};
use crate::data::{Dataset, NoteId, NoteStatus, MILLIS_PER_HOUR};
use crate::exposure::quantile_sorted;
use crate::inference::{run_eq2_outcomes, FitResult};
use crate::scoring::ScoringResult;

pub const TIMING_WINDOWS_MINUTES: [i64; 3] = [30, 60, 90];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub n_notes: usize,
    pub crh_pct: f64,
    pub crnh_pct: f64,
    pub n_scored: usize,
    pub mean_score: f64,
    pub median_ratings: f64,
    pub n_crh_timed: usize,
    pub median_hours_to_crh: Option<f64>,
}

/// Side-by-side note outcomes for LLM and human notes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoteLevelComparison {
    pub groups: BTreeMap<Group, GroupMetrics>,
    /// Rating counts, LLM vs human.
    pub ratings_test: Option<TestResult>,
    /// Hours from creation to first CRH, LLM vs human.
    pub time_to_crh_test: Option<TestResult>,
    /// Mixed-model AI effects on score, CRH and CRNH.
    pub models: Vec<FitResult>,
    pub model_error: Option<String>,
}

fn median(mut x: Vec<f64>) -> f64 {
    x.sort_by(f64::total_cmp);
    quantile_sorted(&x, 0.5)
}

#[derive(Default)]
struct Tally {
    n: usize,
    crh: usize,
    crnh: usize,
    scores: Vec<f64>,
    ratings: Vec<f64>,
    hours_to_crh: Vec<f64>,
}

/// Statuses come from `scores`; a note without a score is NMR. Time to
/// CRH uses the first-CRH timestamps in `d.status_history`.
pub fn compare_notes(d: &Dataset, scores: &ScoringResult) -> NoteLevelComparison {
    let counts = d.rating_counts();
    let mut per: BTreeMap<Group, Tally> = BTreeMap::new();
    for (id, n) in &d.notes {
        let e = per.entry(Group::of(n.is_ai)).or_default();
        e.n += 1;
        let status = scores.status(id);
        match status {
            Some(NoteStatus::Crh) => e.crh += 1,
            Some(NoteStatus::Crnh) => e.crnh += 1,
            _ => {}
        }
        if let Some(s) = scores.score(id) {
            e.scores.push(s);
        }
        e.ratings.push(counts.get(id).copied().unwrap_or(0) as f64);
        if status == Some(NoteStatus::Crh) {
            if let Some(t) = d.status_history.get(id).and_then(|r| r.first_crh_at) {
                e.hours_to_crh.push((t - n.created_at) as f64 / MILLIS_PER_HOUR);
            }
        }
    }
    let groups = per
        .iter()
        .map(|(g, e)| {
            let (s, t) = (&e.scores, &e.hours_to_crh);
            let pct = |k: usize| 100.0 * k as f64 / e.n as f64;
            (
                *g,
                GroupMetrics {
                    n_notes: e.n,
                    crh_pct: pct(e.crh),
                    crnh_pct: pct(e.crnh),
                    n_scored: s.len(),
                    mean_score: if s.is_empty() {
                        f64::NAN
                    } else {
                        s.iter().sum::<f64>() / s.len() as f64
                    },
                    median_ratings: median(e.ratings.clone()),
                    n_crh_timed: t.len(),
                    median_hours_to_crh: (!t.is_empty()).then(|| median(t.clone())),
                },
            )
        })
        .collect();
    let test = |pick: fn(&Tally) -> &Vec<f64>| {
        let a = per.get(&Group::Llm)?;
        let b = per.get(&Group::Human)?;
        mann_whitney_u(pick(a), pick(b)).ok()
    };
    let (models, model_error) = match run_eq2_outcomes(scores, d) {
        Ok(m) => (m, None),
        Err(e) => (Vec::new(), Some(e.to_string())),
    };
    NoteLevelComparison {
        groups,
        ratings_test: test(|e| &e.ratings),
        time_to_crh_test: test(|e| &e.hours_to_crh),
        models,
        model_error,
    }
}

/// Human notes within `window_ms` (inclusive) of some LLM note on the same
/// tweet, plus the LLM notes they matched. The rate is matched human notes
/// over human notes on tweets that have an LLM note.
pub fn timing_matched_notes(d: &Dataset, window_ms: i64) -> (BTreeSet<NoteId>, f64) {
    let mut keep = BTreeSet::new();
    let (mut eligible, mut matched) = (0usize, 0usize);
    for notes in d.notes_by_tweet().values() {
        let (llm, human): (Vec<_>, Vec<_>) = notes.iter().partition(|n| n.is_ai);
        if llm.is_empty() || human.is_empty() {
            continue;
        }
        eligible += human.len();
        for h in &human {
            let hits: Vec<_> = llm
                .iter()
                .filter(|l: &&&crate::data::Note| {
                    (l.created_at - h.created_at).unsigned_abs() <= window_ms.unsigned_abs()
                })
                .collect();
            if hits.is_empty() {
                continue;
            }
            matched += 1;
            keep.insert(h.note_id.clone());
            keep.extend(hits.iter().map(|l| l.note_id.clone()));
        }
    }
    let rate = if eligible == 0 {
        0.0
    } else {
        matched as f64 / eligible as f64
    };
    (keep, rate)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessSubset {
    pub name: String,
    pub n_notes: usize,
    pub n_llm: usize,
    pub n_human: usize,
    pub match_rate: Option<f64>,
    pub comparison: NoteLevelComparison,
}

/// Notes with at least 30 ratings, then timing-matched subsets at ±30,
/// ±60 and ±90 minutes. Scores are reused, not refitted.
pub fn robustness_subsets(d: &Dataset, scores: &ScoringResult) -> Vec<RobustnessSubset> {
    let mut subsets: Vec<(String, BTreeSet<NoteId>, Option<f64>)> = Vec::new();
    let counts = d.rating_counts();
    subsets.push((
        "min_30_ratings".into(),
        counts
            .iter()
            .filter(|(_, c)| **c >= 30)
            .map(|(id, _)| (*id).clone())
            .collect(),
        None,
    ));
    for w in TIMING_WINDOWS_MINUTES {
        let (keep, rate) = timing_matched_notes(d, w * 60_000);
        subsets.push((format!("window_{w}min"), keep, Some(rate)));
    }
    subsets
        .into_iter()
        .map(|(name, keep, match_rate)| {
            let sub = d.restrict_to_notes(&keep);
            let n_llm = sub.notes.values().filter(|n| n.is_ai).count();
            RobustnessSubset {
                name,
                n_notes: sub.notes.len(),
                n_llm,
                n_human: sub.notes.len() - n_llm,
                match_rate,
                comparison: compare_notes(&sub, scores),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingAsymmetry {
    pub tweets_with_both: usize,
    pub human_notes: usize,
    /// Human notes created before the first LLM note on their tweet.
    pub human_before_llm: usize,
    pub share_before: f64,
}

pub fn timing_asymmetry(d: &Dataset) -> TimingAsymmetry {
    let (mut tweets, mut human, mut before) = (0usize, 0usize, 0usize);
    for notes in d.notes_by_tweet().values() {
        let Some(first_llm) = notes.iter().filter(|n| n.is_ai).map(|n| n.created_at).min() else {
            continue;
        };
        let hs: Vec<_> = notes.iter().filter(|n| !n.is_ai).collect();
        if hs.is_empty() {
            continue;
        }
        tweets += 1;
        human += hs.len();
        before += hs.iter().filter(|n| n.created_at < first_llm).count();
    }
    TimingAsymmetry {
        tweets_with_both: tweets,
        human_notes: human,
        human_before_llm: before,
        share_before: if human == 0 { 0.0 } else { before as f64 / human as f64 },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Note;

    fn note(id: &str, tweet: &str, ai: bool, at: i64) -> Note {
        Note {
            note_id: id.into(),
            tweet_id: tweet.into(),
            is_ai: ai,
            created_at: at,
            text: String::new(),
            is_media_note: false,
            writer_id: None,
        }
    }

    #[test]
    fn infinite_window_keeps_both() {
        let d = Dataset::from_parts(
            vec![note("l", "t", true, 10 * 3_600_000), note("h", "t", false, 0)],
            vec![],
            vec![],
        )
        .unwrap();
        let (keep, rate) = timing_matched_notes(&d, i64::MAX);
        assert_eq!(keep.len(), 2);
        assert_eq!(rate, 1.0);
        let (keep, rate) = timing_matched_notes(&d, 60 * 60_000);
        assert!(keep.is_empty());
        assert_eq!(rate, 0.0);
    }

    #[test]
    fn window_bounds_are_inclusive() {
        let d = Dataset::from_parts(
            vec![note("l", "t", true, 30 * 60_000), note("h", "t", false, 0)],
            vec![],
            vec![],
        )
        .unwrap();
        assert_eq!(timing_matched_notes(&d, 30 * 60_000).0.len(), 2);
        assert_eq!(timing_matched_notes(&d, 30 * 60_000 - 1).0.len(), 0);
    }

    #[test]
    fn asymmetry_counts_human_notes_before_llm() {
        let d = Dataset::from_parts(
            vec![
                note("l", "t", true, 100),
                note("h1", "t", false, 50),
                note("h2", "t", false, 150),
                note("h3", "u", false, 0),
            ],
            vec![],
            vec![],
        )
        .unwrap();
        let a = timing_asymmetry(&d);
        assert_eq!((a.tweets_with_both, a.human_notes, a.human_before_llm), (1, 2, 1));
    }
}
