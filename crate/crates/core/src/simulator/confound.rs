//! The exposure confound, end to end: simulate, score on the full sample,
//! re-score on equal-exposure blocks, and compare both to the truth.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{simulate, LagDist, SimConfig, SimTruth};
use crate::data::{Dataset, NoteId, NoteStatus};
use crate::descriptives::Group;
use crate::error::{Error, Result};
use crate::exposure::{build_complete_blocks, equal_exposure_dataset, rescore_equal_exposure};
use crate::scoring::{fit_bridging, ScoringConfig, ScoringResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupOutcome {
    pub n_notes: usize,
    pub n_scored: usize,
    pub mean_ratings: f64,
    /// Percent of all notes in the group, scored or not.
    pub crh_pct: f64,
    /// Over scored notes.
    pub mean_score: f64,
    pub mean_true_quality: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmComparison {
    pub groups: BTreeMap<Group, GroupOutcome>,
    /// Mean score, LLM minus human.
    pub score_gap: f64,
    /// CRH rate in percentage points, LLM minus human.
    pub crh_gap_pp: f64,
    /// Spearman correlation of score with true quality over scored notes.
    pub rank_agreement: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfoundArms {
    pub full: ArmComparison,
    /// `None` when no post has a complete block.
    pub equal_exposure: Option<ArmComparison>,
    pub n_blocks: usize,
    pub n_block_ratings: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfoundReport {
    pub seed: u64,
    pub arms: ConfoundArms,
    /// Full-sample comparison with LLM notes timed like human notes, from
    /// the same seed (identical note qualities and raters).
    pub timing_neutral: ArmComparison,
    pub ee_gap_exceeds_full: bool,
    /// Full-sample CRH gap minus the timing-neutral one; negative means the
    /// lag costs the LLM group CRH notes.
    pub crh_gap_shift_pp: f64,
    /// Equal exposure widens the score gap and the lag lowers the LLM CRH
    /// gap.
    pub pattern_holds: bool,
    pub arrival_model: String,
}

fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        for &k in &order[i..=j] {
            r[k] = (i + j) as f64 / 2.0 + 1.0;
        }
        i = j + 1;
    }
    r
}

fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() < 3 {
        return None;
    }
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    (saa > 0.0 && sbb > 0.0).then(|| sab / (saa * sbb).sqrt())
}

fn compare(d: &Dataset, truth: &SimTruth, scores: &ScoringResult) -> ArmComparison {
    let quality: BTreeMap<&NoteId, f64> = truth.notes.iter().map(|n| (&n.note_id, n.quality)).collect();
    let counts = d.rating_counts();
    #[derive(Default)]
    struct Acc {
        n: usize,
        ratings: usize,
        crh: usize,
        scores: Vec<f64>,
        quality: f64,
    }
    let mut acc: BTreeMap<Group, Acc> = BTreeMap::new();
    let (mut s_all, mut q_all) = (Vec::new(), Vec::new());
    for (id, note) in &d.notes {
        let a = acc.entry(Group::of(note.is_ai)).or_default();
        let q = quality[id];
        a.n += 1;
        a.ratings += counts.get(id).copied().unwrap_or(0);
        a.quality += q;
        if scores.status(id) == Some(NoteStatus::Crh) {
            a.crh += 1;
        }
        if let Some(s) = scores.score(id) {
            a.scores.push(s);
            s_all.push(s);
            q_all.push(q);
        }
    }
    let groups: BTreeMap<Group, GroupOutcome> = acc
        .into_iter()
        .map(|(g, a)| {
            let n = a.n as f64;
            (
                g,
                GroupOutcome {
                    n_notes: a.n,
                    n_scored: a.scores.len(),
                    mean_ratings: a.ratings as f64 / n,
                    crh_pct: 100.0 * a.crh as f64 / n,
                    mean_score: if a.scores.is_empty() {
                        f64::NAN
                    } else {
                        a.scores.iter().sum::<f64>() / a.scores.len() as f64
                    },
                    mean_true_quality: a.quality / n,
                },
            )
        })
        .collect();
    let gap = |f: fn(&GroupOutcome) -> f64| match (groups.get(&Group::Llm), groups.get(&Group::Human)) {
        (Some(l), Some(h)) => f(l) - f(h),
        _ => f64::NAN,
    };
    ArmComparison {
        score_gap: gap(|g| g.mean_score),
        crh_gap_pp: gap(|g| g.crh_pct),
        rank_agreement: spearman(&s_all, &q_all),
        groups,
    }
}

/// Full-sample and equal-exposure comparisons for one simulated corpus.
pub fn compare_arms(cfg: &SimConfig, scoring: &ScoringConfig) -> Result<ConfoundArms> {
    let (d, truth) = simulate(cfg)?;
    let full_scores = fit_bridging(&d, scoring)?;
    let full = compare(&d, &truth, &full_scores);
    let blocks = build_complete_blocks(&d);
    let n_block_ratings = blocks.iter().map(|b| b.ratings.len()).sum();
    let equal_exposure = if blocks.is_empty() {
        None
    } else {
        let ee = equal_exposure_dataset(&d, &blocks);
        let scores = rescore_equal_exposure(&blocks, scoring)?;
        Some(compare(&ee, &truth, &scores))
    };
    Ok(ConfoundArms {
        full,
        equal_exposure,
        n_blocks: blocks.len(),
        n_block_ratings,
    })
}

/// Requires LLM notes better than human notes on average and created later.
pub fn confound_experiment(cfg: &SimConfig, scoring: &ScoringConfig) -> Result<ConfoundReport> {
    if !(cfg.llm_quality.mean > cfg.human_quality.mean) {
        return Err(Error::InvalidConfig(
            "confound experiment needs LLM quality above human quality".into(),
        ));
    }
    if !(cfg.llm_lag.mean_hours() > 0.0) {
        return Err(Error::InvalidConfig(
            "confound experiment needs a positive LLM lag".into(),
        ));
    }
    let arms = compare_arms(cfg, scoring)?;
    let neutral_cfg = SimConfig {
        llm_lag: cfg.human_lag,
        ..cfg.clone()
    };
    let (d, truth) = simulate(&neutral_cfg)?;
    let timing_neutral = compare(&d, &truth, &fit_bridging(&d, scoring)?);
    let ee_gap_exceeds_full = arms
        .equal_exposure
        .as_ref()
        .is_some_and(|ee| ee.score_gap > arms.full.score_gap);
    let crh_gap_shift_pp = arms.full.crh_gap_pp - timing_neutral.crh_gap_pp;
    let decay = match cfg.arrival.decay_hours {
        Some(t) => format!("exp(-post_age/{t}h)"),
        None => "constant".into(),
    };
    let lag = match cfg.llm_lag {
        LagDist::Fixed { hours } => format!("fixed {hours}h"),
        other => format!("mean {}h", other.mean_hours()),
    };
    Ok(ConfoundReport {
        seed: cfg.seed,
        ee_gap_exceeds_full,
        crh_gap_shift_pp,
        pattern_holds: ee_gap_exceeds_full && crh_gap_shift_pp < 0.0,
        arrival_model: format!(
            "synthetic decaying arrivals (stand-in, not estimated from platform data): rate {}/h x {}^rank x {decay}; LLM lag {lag}",
            cfg.arrival.base_rate_per_hour, cfg.arrival.rank_decay
        ),
        arms,
        timing_neutral,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_basics() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), Some(1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&[1.0, 1.0, 1.0], &[3.0, 2.0, 1.0]), None);
        assert_eq!(average_ranks(&[5.0, 1.0, 5.0]), vec![2.5, 1.0, 2.5]);
    }

    #[test]
    fn preconditions() {
        let s = ScoringConfig::default();
        let mut c = SimConfig {
            n_tweets: 5,
            ..SimConfig::default()
        };
        c.llm_lag = LagDist::Fixed { hours: 0.0 };
        assert!(matches!(confound_experiment(&c, &s), Err(Error::InvalidConfig(_))));
        let mut c = SimConfig::default();
        c.llm_quality.mean = c.human_quality.mean;
        assert!(confound_experiment(&c, &s).is_err());
    }
}
