//! Descriptive tables: ideology-bucket rating shares, writer benchmarks,
//! note text profiles, and note-level comparisons with robustness subsets.

mod robustness;
mod stats;
mod text;

pub use robustness::{
    compare_notes, robustness_subsets, timing_asymmetry, timing_matched_notes, GroupMetrics, NoteLevelComparison,
    RobustnessSubset, TimingAsymmetry, TIMING_WINDOWS_MINUTES,
};
pub use stats::{mann_whitney_u, welch_t, TestResult, MWU_EXACT_LIMIT};
pub use text::{
    extract_domain, extract_urls, text_profile, word_count, DomainShare, GroupTextStats, TextProfileReport,
};

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{BucketConfig, Dataset, HelpfulnessLevel, IdeologyBucket, NoteId, NoteStatus};
use crate::error::{Error, Result};
use crate::inference::Z_975;

/// Author group of a note.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Group {
    #[serde(rename = "LLM")]
    Llm,
    Human,
}

impl Group {
    pub const ALL: [Group; 2] = [Group::Llm, Group::Human];

    pub fn of(is_ai: bool) -> Group {
        if is_ai {
            Group::Llm
        } else {
            Group::Human
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Group::Llm => "LLM",
            Group::Human => "Human",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketNoteStats {
    pub note_id: NoteId,
    pub group: Group,
    pub bucket: IdeologyBucket,
    pub pct_helpful: f64,
    pub pct_unhelpful: f64,
    pub pct_somewhat: f64,
    pub n_ratings: usize,
}

/// Mean with a normal-approximation 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl MeanCi {
    /// A single value gets a zero-width interval.
    pub fn of(x: &[f64]) -> MeanCi {
        let (m, v) = stats::mean_var(x);
        let half = Z_975 * (v / x.len() as f64).sqrt();
        MeanCi {
            mean: m,
            ci_low: m - half,
            ci_high: m + half,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketCell {
    pub group: Group,
    pub bucket: IdeologyBucket,
    pub helpful: MeanCi,
    pub unhelpful: MeanCi,
    pub n_notes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketTable {
    pub notes: Vec<BucketNoteStats>,
    pub cells: Vec<BucketCell>,
}

impl BucketTable {
    pub fn cell(&self, group: Group, bucket: IdeologyBucket) -> Option<&BucketCell> {
        self.cells.iter().find(|c| c.group == group && c.bucket == bucket)
    }

    /// One row per cell with both measures.
    pub fn write_tsv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_writer(out);
        w.write_record([
            "group",
            "bucket",
            "n_notes",
            "pct_helpful_mean",
            "pct_helpful_ci_low",
            "pct_helpful_ci_high",
            "pct_unhelpful_mean",
            "pct_unhelpful_ci_low",
            "pct_unhelpful_ci_high",
        ])?;
        for c in &self.cells {
            w.write_record([
                c.group.name(),
                c.bucket.name(),
                &c.n_notes.to_string(),
                &format!("{:.4}", c.helpful.mean),
                &format!("{:.4}", c.helpful.ci_low),
                &format!("{:.4}", c.helpful.ci_high),
                &format!("{:.4}", c.unhelpful.mean),
                &format!("{:.4}", c.unhelpful.ci_low),
                &format!("{:.4}", c.unhelpful.ci_high),
            ])?;
        }
        w.flush().map_err(|e| Error::Serialize(e.to_string()))
    }

    /// Plot-ready bars: group, bucket, measure, mean, ci_low, ci_high.
    pub fn write_plot_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["group", "bucket", "measure", "mean", "ci_low", "ci_high"])?;
        for c in &self.cells {
            for (measure, m) in [("helpful", c.helpful), ("unhelpful", c.unhelpful)] {
                w.write_record([
                    c.group.name(),
                    c.bucket.name(),
                    measure,
                    &format!("{:.4}", m.mean),
                    &format!("{:.4}", m.ci_low),
                    &format!("{:.4}", m.ci_high),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::Serialize(e.to_string()))
    }
}

/// Per-note helpful / not-helpful percentages within each rater bucket,
/// then unweighted means across notes. A note enters a cell only with at
/// least one rating from that bucket; ratings without a profile are skipped.
pub fn bucket_table(d: &Dataset, buckets: &BucketConfig) -> Result<BucketTable> {
    buckets.validate()?;
    let mut tally: BTreeMap<(&NoteId, IdeologyBucket), [usize; 3]> = BTreeMap::new();
    for r in &d.ratings {
        let Some(p) = d.raters.get(&r.rater_id) else { continue };
        if !d.notes.contains_key(&r.note_id) {
            continue;
        }
        let slot = match r.value {
            HelpfulnessLevel::Helpful => 0,
            HelpfulnessLevel::NotHelpful => 1,
            HelpfulnessLevel::SomewhatHelpful => 2,
        };
        tally.entry((&r.note_id, buckets.bucket(p.factor))).or_default()[slot] += 1;
    }
    let notes: Vec<BucketNoteStats> = tally
        .into_iter()
        .map(|((id, bucket), [h, u, s])| {
            let n = h + u + s;
            let pct = |k: usize| 100.0 * k as f64 / n as f64;
            BucketNoteStats {
                note_id: id.clone(),
                group: Group::of(d.notes[id].is_ai),
                bucket,
                pct_helpful: pct(h),
                pct_unhelpful: pct(u),
                pct_somewhat: pct(s),
                n_ratings: n,
            }
        })
        .collect();
    let mut cells = Vec::new();
    for group in Group::ALL {
        for bucket in IdeologyBucket::ALL {
            let members: Vec<&BucketNoteStats> = notes
                .iter()
                .filter(|s| s.group == group && s.bucket == bucket)
                .collect();
            if members.is_empty() {
                continue;
            }
            let h: Vec<f64> = members.iter().map(|s| s.pct_helpful).collect();
            let u: Vec<f64> = members.iter().map(|s| s.pct_unhelpful).collect();
            cells.push(BucketCell {
                group,
                bucket,
                helpful: MeanCi::of(&h),
                unhelpful: MeanCi::of(&u),
                n_notes: members.len(),
            });
        }
    }
    Ok(BucketTable { notes, cells })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WriterStats {
    pub writer_id: String,
    pub total_notes: usize,
    pub crh_count: usize,
    pub crnh_count: usize,
    pub crh_rate: f64,
    pub hit_rate: f64,
}

impl WriterStats {
    pub fn new(writer_id: impl Into<String>, total_notes: usize, crh_count: usize, crnh_count: usize) -> Result<Self> {
        if crh_count + crnh_count > total_notes || total_notes == 0 {
            return Err(Error::InvalidConfig(format!(
                "writer counts inconsistent: {crh_count} CRH + {crnh_count} CRNH of {total_notes}"
            )));
        }
        let t = total_notes as f64;
        Ok(WriterStats {
            writer_id: writer_id.into(),
            total_notes,
            crh_count,
            crnh_count,
            crh_rate: crh_count as f64 / t,
            hit_rate: (crh_count as f64 - crnh_count as f64) / t,
        })
    }
}

/// Per-writer counts from note authorship and a status map; notes without
/// a writer id are ignored, notes without a status count as NMR.
pub fn writer_stats(d: &Dataset, statuses: &BTreeMap<NoteId, NoteStatus>) -> Vec<WriterStats> {
    let mut acc: BTreeMap<&str, [usize; 3]> = BTreeMap::new();
    for n in d.notes.values() {
        let Some(w) = n.writer_id.as_deref() else { continue };
        let e = acc.entry(w).or_default();
        e[0] += 1;
        match statuses.get(&n.note_id) {
            Some(NoteStatus::Crh) => e[1] += 1,
            Some(NoteStatus::Crnh) => e[2] += 1,
            _ => {}
        }
    }
    acc.into_iter()
        .map(|(w, [t, c, x])| WriterStats::new(w, t, c, x).expect("counts are consistent by construction"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PercentileBlock {
    pub min_notes: usize,
    /// Writers compared, the subject included.
    pub comparison_size: usize,
    pub crh_rate_percentile: f64,
    pub hit_rate_percentile: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PercentileReport {
    pub subject: WriterStats,
    pub overall: PercentileBlock,
    pub restricted: PercentileBlock,
}

/// Share (in percent) of writers whose metric is strictly below the
/// subject's. The pool is `all_writers` with the subject added (or
/// replaced, by writer id), so listing the subject twice changes nothing;
/// `min_notes` filters other writers but never the subject.
pub fn writer_percentiles(
    all_writers: &[WriterStats],
    subject: &WriterStats,
    min_notes: usize,
) -> Result<PercentileReport> {
    if all_writers.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut pool: BTreeMap<&str, &WriterStats> = all_writers.iter().map(|w| (w.writer_id.as_str(), w)).collect();
    pool.insert(subject.writer_id.as_str(), subject);
    let block = |min: usize| {
        let members: Vec<&WriterStats> = pool
            .values()
            .copied()
            .filter(|w| w.writer_id == subject.writer_id || w.total_notes >= min)
            .collect();
        let n = members.len() as f64;
        let below =
            |f: fn(&WriterStats) -> f64| 100.0 * members.iter().filter(|w| f(w) < f(subject)).count() as f64 / n;
        PercentileBlock {
            min_notes: min,
            comparison_size: members.len(),
            crh_rate_percentile: below(|w| w.crh_rate),
            hit_rate_percentile: below(|w| w.hit_rate),
        }
    };
    Ok(PercentileReport {
        subject: subject.clone(),
        overall: block(0),
        restricted: block(min_notes),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Note, RaterProfile, Rating};
    use proptest::prelude::*;

    fn ds(ratings: &[(&str, &str, f64)], raters: &[(&str, f64)], notes: &[(&str, bool)]) -> Dataset {
        Dataset::from_parts(
            notes
                .iter()
                .map(|(id, ai)| Note {
                    note_id: (*id).into(),
                    tweet_id: "t".into(),
                    is_ai: *ai,
                    created_at: 0,
                    text: String::new(),
                    is_media_note: false,
                    writer_id: None,
                })
                .collect(),
            ratings
                .iter()
                .map(|(u, n, v)| Rating {
                    rater_id: (*u).into(),
                    note_id: (*n).into(),
                    value: HelpfulnessLevel::from_value(*v).unwrap(),
                    created_at: 0,
                })
                .collect(),
            raters
                .iter()
                .map(|(u, f)| RaterProfile {
                    rater_id: (*u).into(),
                    factor: *f,
                    intercept: 0.0,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_note_percentages() {
        let d = ds(
            &[("a", "n", 1.0), ("b", "n", 1.0), ("c", "n", 0.0)],
            &[("a", -0.5), ("b", -0.4), ("c", -0.3)],
            &[("n", true)],
        );
        let t = bucket_table(&d, &BucketConfig::default()).unwrap();
        let s = &t.notes[0];
        assert!((s.pct_helpful - 200.0 / 3.0).abs() < 1e-12);
        assert!((s.pct_unhelpful - 100.0 / 3.0).abs() < 1e-12);
        assert_eq!(t.cells.len(), 1);
    }

    #[test]
    fn identical_notes_give_zero_width_ci() {
        let d = ds(
            &[("a", "n1", 1.0), ("a", "n2", 1.0), ("b", "n1", 0.5), ("b", "n2", 0.5)],
            &[("a", 0.0), ("b", 0.0)],
            &[("n1", true), ("n2", false)],
        );
        let t = bucket_table(&d, &BucketConfig::default()).unwrap();
        for c in &t.cells {
            assert_eq!(c.helpful.ci_low, c.helpful.ci_high);
            assert_eq!(c.helpful.mean, 50.0);
        }
    }

    #[test]
    fn writer_rates() {
        let w = WriterStats::new("llm", 1614, 211, 18).unwrap();
        assert!((100.0 * w.crh_rate - 13.07).abs() < 0.005);
        assert!((100.0 * w.hit_rate - 11.96).abs() < 0.005);
        assert!(WriterStats::new("x", 3, 2, 2).is_err());
    }

    #[test]
    fn percentile_of_best_writer() {
        let others: Vec<WriterStats> = (0..3)
            .map(|i| WriterStats::new(format!("w{i}"), 10, i, 0).unwrap())
            .collect();
        let subject = WriterStats::new("s", 10, 5, 0).unwrap();
        let r = writer_percentiles(&others, &subject, 30).unwrap();
        assert_eq!(r.overall.crh_rate_percentile, 75.0);
        assert_eq!(r.overall.comparison_size, 4);
        assert_eq!(r.restricted.comparison_size, 1);
    }

    #[test]
    fn min_notes_keeps_one_qualifying_writer() {
        let others = vec![
            WriterStats::new("a", 40, 1, 0).unwrap(),
            WriterStats::new("b", 5, 1, 0).unwrap(),
        ];
        let subject = WriterStats::new("s", 4, 1, 0).unwrap();
        let r = writer_percentiles(&others, &subject, 30).unwrap();
        assert_eq!(r.restricted.comparison_size, 2);
        assert_eq!(r.restricted.crh_rate_percentile, 50.0);
    }

    proptest! {
        #[test]
        fn subject_duplication_is_harmless(
            counts in prop::collection::vec((1usize..50, 0usize..20, 0usize..20), 1..20),
            sc in (1usize..50, 0usize..20, 0usize..20),
        ) {
            let mk = |id: String, (t, c, x): (usize, usize, usize)| {
                let t = t.max(c + x).max(1);
                WriterStats::new(id, t, c, x).unwrap()
            };
            let writers: Vec<WriterStats> = counts.into_iter().enumerate().map(|(i, c)| mk(format!("w{i}"), c)).collect();
            let subject = mk("subject".into(), sc);
            let a = writer_percentiles(&writers, &subject, 10).unwrap();
            let mut with_dup = writers.clone();
            with_dup.push(subject.clone());
            let b = writer_percentiles(&with_dup, &subject, 10).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn bucket_shares_sum_to_100(values in prop::collection::vec((0u8..3, 0u8..6, 0u8..3), 1..60)) {
            let mut ratings = Vec::new();
            let mut seen = std::collections::BTreeSet::new();
            for (v, u, n) in &values {
                if seen.insert((*u, *n)) {
                    ratings.push((format!("u{u}"), format!("n{n}"), *v as f64 / 2.0));
                }
            }
            let r: Vec<(&str, &str, f64)> = ratings.iter().map(|(a, b, c)| (a.as_str(), b.as_str(), *c)).collect();
            let raters: Vec<(String, f64)> = (0..6).map(|u| (format!("u{u}"), (u as f64 - 2.5) / 5.0)).collect();
            let rr: Vec<(&str, f64)> = raters.iter().map(|(a, f)| (a.as_str(), *f)).collect();
            let d = ds(&r, &rr, &[("n0", true), ("n1", false), ("n2", true)]);
            for s in bucket_table(&d, &BucketConfig::default()).unwrap().notes {
                prop_assert!((s.pct_helpful + s.pct_unhelpful + s.pct_somewhat - 100.0).abs() < 1e-9);
                prop_assert!(s.pct_helpful + s.pct_unhelpful <= 100.0 + 1e-9);
            }
        }
    }
}
