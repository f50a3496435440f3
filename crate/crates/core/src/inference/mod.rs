//! Regression models comparing LLM-written and human-written notes.
//!
//! Three estimators share one frame and one specification type: a REML
//! linear mixed model with crossed random intercepts, OLS with CR2
//! cluster-robust covariance, and a logistic model with cluster-robust
//! covariance (used for paired comparisons).

mod lmm;
mod logistic;
mod models;
mod ols;
mod optim;

pub use lmm::{fit_lmm, reml_deviance, LmmFit};
pub use logistic::{
    build_pairs, fit_logistic_clustered, pairwise_bradley_terry, pairwise_from_outcomes, PairOutcome, PairResult,
    PairwiseReport,
};
pub use models::{
    model1_spec, run_eq2_outcomes, run_table1, subgroup_fits, table1_specs, write_coefficient_csv, write_table1_tsv,
    SkippedSubgroup, SubgroupAxis, SubgroupReport, DEFAULT_SUBGROUP_MIN_RATINGS,
};
pub use ols::{fit_ols_clustered, ols_cr2};

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::data::{BucketConfig, Dataset, IdeologyBucket};
use crate::error::{Error, Result};
use crate::scoring::ScoringResult;

/// Quantile used for every 95% interval.
pub const Z_975: f64 = 1.959963984540054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    /// Individual rating value in {0, 0.5, 1}.
    Rating,
    HelpfulnessScore,
    /// 1 if the note's status is CRH.
    Crh,
    /// 1 if the note's status is CRNH.
    Crnh,
    /// 1 if the LLM note won a paired comparison.
    PairWin,
}

impl Outcome {
    pub fn name(self) -> &'static str {
        match self {
            Outcome::Rating => "rating_score",
            Outcome::HelpfulnessScore => "helpfulness_score",
            Outcome::Crh => "crh",
            Outcome::Crnh => "crnh",
            Outcome::PairWin => "llm_preferred",
        }
    }
}

/// Fixed-effect columns available on a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Term {
    Intercept,
    Ai,
    Factor,
    FactorSq,
    AiFactor,
    AiFactorSq,
    Left,
    Right,
    AiLeft,
    AiRight,
}

impl Term {
    pub fn name(self) -> &'static str {
        match self {
            Term::Intercept => "(Intercept)",
            Term::Ai => "AI",
            Term::Factor => "coreRaterFactor1",
            Term::FactorSq => "coreRaterFactor1^2",
            Term::AiFactor => "AI:coreRaterFactor1",
            Term::AiFactorSq => "AI:coreRaterFactor1^2",
            Term::Left => "left-leaning rater",
            Term::Right => "right-leaning rater",
            Term::AiLeft => "AI:left-leaning rater",
            Term::AiRight => "AI:right-leaning rater",
        }
    }

    /// Lower-order terms that must accompany this one.
    fn parents(self) -> &'static [Term] {
        match self {
            Term::FactorSq => &[Term::Factor],
            Term::AiFactor => &[Term::Ai, Term::Factor],
            Term::AiFactorSq => &[Term::Ai, Term::FactorSq],
            Term::AiLeft => &[Term::Ai, Term::Left],
            Term::AiRight => &[Term::Ai, Term::Right],
            _ => &[],
        }
    }

    fn needs_rater_covariates(self) -> bool {
        !matches!(self, Term::Intercept | Term::Ai)
    }

    pub(crate) fn value(self, f: &ModelFrame, i: usize) -> f64 {
        let (ai, x) = (f.ai[i], f.factor[i]);
        match self {
            Term::Intercept => 1.0,
            Term::Ai => ai,
            Term::Factor => x,
            Term::FactorSq => x * x,
            Term::AiFactor => ai * x,
            Term::AiFactorSq => ai * x * x,
            Term::Left => f.left[i],
            Term::Right => f.right[i],
            Term::AiLeft => ai * f.left[i],
            Term::AiRight => ai * f.right[i],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Grouping {
    Note,
    Rater,
    Tweet,
}

impl Grouping {
    pub fn name(self) -> &'static str {
        match self {
            Grouping::Note => "noteId",
            Grouping::Rater => "raterParticipantId",
            Grouping::Tweet => "tweetId",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    RemlLmm,
    OlsCr2 { cluster: Grouping },
    LogisticClustered { cluster: Grouping },
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::RemlLmm => "REML-LMM",
            Estimator::OlsCr2 { .. } => "OLS-CR2",
            Estimator::LogisticClustered { .. } => "Logistic-Clustered",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub outcome: Outcome,
    pub fixed_terms: Vec<Term>,
    pub random_intercepts: Vec<Grouping>,
    pub estimator: Estimator,
}

impl ModelSpec {
    pub fn validate(&self, frame: &ModelFrame) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(format!("{}: {m}", self.name)));
        if self.outcome != frame.outcome {
            return bad(format!(
                "outcome {} does not match frame outcome {}",
                self.outcome.name(),
                frame.outcome.name()
            ));
        }
        if self.fixed_terms.is_empty() {
            return bad("no fixed-effect terms".into());
        }
        let terms: BTreeSet<Term> = self.fixed_terms.iter().copied().collect();
        if terms.len() != self.fixed_terms.len() {
            return bad("duplicate fixed-effect term".into());
        }
        for t in &self.fixed_terms {
            for p in t.parents() {
                if !terms.contains(p) {
                    return bad(format!("term {} requires {}", t.name(), p.name()));
                }
            }
            if t.needs_rater_covariates() && !frame.has_rater_covariates {
                return bad(format!("term {} needs rater covariates the frame lacks", t.name()));
            }
        }
        let groups: BTreeSet<Grouping> = self.random_intercepts.iter().copied().collect();
        if groups.len() != self.random_intercepts.len() {
            return bad("duplicate random intercept".into());
        }
        for g in &self.random_intercepts {
            if !frame.groups.contains_key(g) {
                return bad(format!("grouping {} is not present", g.name()));
            }
        }
        match self.estimator {
            Estimator::RemlLmm if self.random_intercepts.is_empty() => {
                bad("mixed model needs at least one random intercept".into())
            }
            Estimator::OlsCr2 { cluster } | Estimator::LogisticClustered { cluster } => {
                if !self.random_intercepts.is_empty() {
                    return bad(format!("{} takes no random intercepts", self.estimator.name()));
                }
                if !frame.groups.contains_key(&cluster) {
                    return bad(format!("cluster {} is not present", cluster.name()));
                }
                if matches!(self.estimator, Estimator::LogisticClustered { .. })
                    && frame.y.iter().any(|v| *v != 0.0 && *v != 1.0)
                {
                    return bad("logistic outcome must be 0/1".into());
                }
                Ok(())
            }
            Estimator::RemlLmm => Ok(()),
        }
    }
}

/// Level labels and per-row level index for one grouping factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupIndex {
    pub levels: Vec<String>,
    pub index: Vec<usize>,
}

impl GroupIndex {
    /// Levels are sorted so indices do not depend on row order.
    pub fn from_labels<S: AsRef<str>>(labels: &[S]) -> GroupIndex {
        let set: BTreeSet<&str> = labels.iter().map(|s| s.as_ref()).collect();
        let levels: Vec<String> = set.iter().map(|s| s.to_string()).collect();
        let pos: BTreeMap<&str, usize> = set.into_iter().enumerate().map(|(i, s)| (s, i)).collect();
        GroupIndex {
            index: labels.iter().map(|s| pos[s.as_ref()]).collect(),
            levels,
        }
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }
}

/// Column store of the variables models can use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFrame {
    pub outcome: Outcome,
    pub y: Vec<f64>,
    pub ai: Vec<f64>,
    pub factor: Vec<f64>,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    pub groups: BTreeMap<Grouping, GroupIndex>,
    pub has_rater_covariates: bool,
    /// Input rows excluded while building the frame.
    pub dropped: usize,
}

impl ModelFrame {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// One row per rating whose note and rater profile are known.
    pub fn ratings(d: &Dataset, buckets: &BucketConfig) -> ModelFrame {
        let mut f = ModelFrame::empty(Outcome::Rating, true);
        let (mut notes, mut raters, mut tweets) = (Vec::new(), Vec::new(), Vec::new());
        for r in &d.ratings {
            let (Some(note), Some(p)) = (d.notes.get(&r.note_id), d.raters.get(&r.rater_id)) else {
                f.dropped += 1;
                continue;
            };
            f.y.push(r.score());
            f.ai.push(if note.is_ai { 1.0 } else { 0.0 });
            f.factor.push(p.factor);
            let b = buckets.bucket(p.factor);
            f.left.push((b == IdeologyBucket::Left) as u8 as f64);
            f.right.push((b == IdeologyBucket::Right) as u8 as f64);
            notes.push(r.note_id.as_str());
            raters.push(r.rater_id.as_str());
            tweets.push(note.tweet_id.as_str());
        }
        f.groups.insert(Grouping::Note, GroupIndex::from_labels(&notes));
        f.groups.insert(Grouping::Rater, GroupIndex::from_labels(&raters));
        f.groups.insert(Grouping::Tweet, GroupIndex::from_labels(&tweets));
        f
    }

    /// One row per note of `d`.
    ///
    /// Score outcomes use scored notes only; status outcomes cover every
    /// note, an unscored note counting as neither CRH nor CRNH.
    pub fn notes(d: &Dataset, scores: &ScoringResult, outcome: Outcome) -> Result<ModelFrame> {
        if matches!(outcome, Outcome::Rating | Outcome::PairWin) {
            return Err(Error::InvalidSpec(format!(
                "{} is not a note-level outcome",
                outcome.name()
            )));
        }
        let mut f = ModelFrame::empty(outcome, false);
        let (mut notes, mut tweets) = (Vec::new(), Vec::new());
        for (id, note) in &d.notes {
            let y = match outcome {
                Outcome::HelpfulnessScore => match scores.score(id) {
                    Some(s) => s,
                    None => {
                        f.dropped += 1;
                        continue;
                    }
                },
                Outcome::Crh => (scores.status(id) == Some(crate::data::NoteStatus::Crh)) as u8 as f64,
                _ => (scores.status(id) == Some(crate::data::NoteStatus::Crnh)) as u8 as f64,
            };
            f.y.push(y);
            f.ai.push(if note.is_ai { 1.0 } else { 0.0 });
            notes.push(id.as_str());
            tweets.push(note.tweet_id.as_str());
        }
        let n = f.y.len();
        f.factor = vec![0.0; n];
        f.left = vec![0.0; n];
        f.right = vec![0.0; n];
        f.groups.insert(Grouping::Note, GroupIndex::from_labels(&notes));
        f.groups.insert(Grouping::Tweet, GroupIndex::from_labels(&tweets));
        Ok(f)
    }

    pub(crate) fn empty(outcome: Outcome, has_rater_covariates: bool) -> ModelFrame {
        ModelFrame {
            outcome,
            y: Vec::new(),
            ai: Vec::new(),
            factor: Vec::new(),
            left: Vec::new(),
            right: Vec::new(),
            groups: BTreeMap::new(),
            has_rater_covariates,
            dropped: 0,
        }
    }

    /// Rows `keep` (in order), with group levels re-indexed.
    pub fn subset(&self, keep: &[usize]) -> ModelFrame {
        let pick = |v: &[f64]| keep.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let groups = self
            .groups
            .iter()
            .map(|(g, gi)| {
                let labels: Vec<&str> = keep.iter().map(|&i| gi.levels[gi.index[i]].as_str()).collect();
                (*g, GroupIndex::from_labels(&labels))
            })
            .collect();
        ModelFrame {
            outcome: self.outcome,
            y: pick(&self.y),
            ai: pick(&self.ai),
            factor: pick(&self.factor),
            left: pick(&self.left),
            right: pick(&self.right),
            groups,
            has_rater_covariates: self.has_rater_covariates,
            dropped: 0,
        }
    }

    /// Dense `n × p` design matrix for `terms`.
    pub fn design(&self, terms: &[Term]) -> DMatrix<f64> {
        DMatrix::from_fn(self.len(), terms.len(), |i, j| terms[j].value(self, i))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub term: String,
    pub estimate: f64,
    pub se: f64,
    /// z for mixed and logistic models, t for OLS.
    pub statistic: f64,
    pub p_value: f64,
    pub adj_p_value: Option<f64>,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: String,
    pub estimator: String,
    pub outcome: String,
    pub coefficients: Vec<Coefficient>,
    /// Random-intercept standard deviations by grouping name.
    pub variance_components: BTreeMap<String, f64>,
    pub residual_sd: Option<f64>,
    pub n_obs: usize,
    pub n_groups: BTreeMap<String, usize>,
    /// Degrees of freedom of the t reference, when one is used.
    pub df: Option<f64>,
    pub converged: bool,
    /// A variance component sits on the zero boundary.
    pub singular: bool,
    pub log_restricted_likelihood: Option<f64>,
}

impl FitResult {
    pub fn coef(&self, term: Term) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.term == term.name())
    }
}

pub(crate) fn wald_coefficients(terms: &[Term], beta: &[f64], se: &[f64], df: Option<f64>) -> Vec<Coefficient> {
    let normal = Normal::standard();
    let t_dist = df.and_then(|d| StudentsT::new(0.0, 1.0, d).ok());
    terms
        .iter()
        .zip(beta.iter().zip(se))
        .map(|(t, (&b, &s))| {
            let stat = b / s;
            let (p, q) = match &t_dist {
                Some(td) => (2.0 * td.sf(stat.abs()), td.inverse_cdf(0.975)),
                None => (2.0 * normal.sf(stat.abs()), Z_975),
            };
            Coefficient {
                term: t.name().to_string(),
                estimate: b,
                se: s,
                statistic: stat,
                p_value: p.min(1.0),
                adj_p_value: None,
                ci_low: b - q * s,
                ci_high: b + q * s,
            }
        })
        .collect()
}

pub(crate) fn group_counts(frame: &ModelFrame, groups: &[Grouping]) -> BTreeMap<String, usize> {
    groups
        .iter()
        .map(|g| (g.name().to_string(), frame.groups[g].n_levels()))
        .collect()
}

/// Rank of `x` via column-pivoted QR.
pub(crate) fn check_full_rank(x: &DMatrix<f64>) -> Result<()> {
    let (n, p) = x.shape();
    if n < p {
        return Err(Error::RankDeficientDesign { rank: n, columns: p });
    }
    let r = x.clone().col_piv_qr().r();
    let diag: Vec<f64> = (0..p).map(|i| r[(i, i)].abs()).collect();
    let top = diag.iter().copied().fold(0.0, f64::max);
    let tol = top * 1e-10 * (n.max(p) as f64);
    let rank = diag.iter().filter(|d| **d > tol).count();
    if rank < p || top == 0.0 {
        return Err(Error::RankDeficientDesign { rank, columns: p });
    }
    Ok(())
}

/// Fits `spec` on `frame` with the estimator the spec names.
pub fn fit(frame: &ModelFrame, spec: &ModelSpec) -> Result<FitResult> {
    spec.validate(frame)?;
    match spec.estimator {
        Estimator::RemlLmm => fit_lmm(frame, spec).map(|f| f.result),
        Estimator::OlsCr2 { .. } => fit_ols_clustered(frame, spec),
        Estimator::LogisticClustered { .. } => fit_logistic_clustered(frame, spec),
    }
}

/// Benjamini–Hochberg step-up adjustment; output is in input order.
pub fn benjamini_hochberg(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    let mut adj = vec![0.0; m];
    let mut running = 1.0f64;
    for k in (0..m).rev() {
        let i = order[k];
        running = running.min(p[i] * (m as f64 / (k + 1) as f64));
        adj[i] = running.min(1.0);
    }
    adj
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bh_hand_computed() {
        assert_eq!(benjamini_hochberg(&[0.01, 0.02, 0.04]), vec![0.03, 0.03, 0.04]);
        assert_eq!(benjamini_hochberg(&[0.04, 0.01, 0.02]), vec![0.04, 0.03, 0.03]);
        assert!(benjamini_hochberg(&[]).is_empty());
    }

    proptest! {
        #[test]
        fn bh_properties(p in prop::collection::vec(0.0f64..=1.0, 1..30)) {
            let adj = benjamini_hochberg(&p);
            let mut pairs: Vec<(f64, f64)> = p.iter().copied().zip(adj.iter().copied()).collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            for w in pairs.windows(2) {
                prop_assert!(w[1].1 >= w[0].1);
            }
            for (raw, a) in &pairs {
                prop_assert!(*a <= 1.0 && *a >= *raw);
            }
            let last = pairs.last().unwrap();
            prop_assert_eq!(last.0, last.1);
        }
    }

    #[test]
    fn hierarchy_is_enforced() {
        let mut f = ModelFrame::empty(Outcome::Rating, true);
        f.y = vec![0.0];
        f.groups.insert(Grouping::Note, GroupIndex::from_labels(&["a"]));
        let spec = ModelSpec {
            name: "m".into(),
            outcome: Outcome::Rating,
            fixed_terms: vec![Term::Intercept, Term::FactorSq],
            random_intercepts: vec![Grouping::Note],
            estimator: Estimator::RemlLmm,
        };
        assert!(matches!(spec.validate(&f), Err(Error::InvalidSpec(_))));
        let spec = ModelSpec {
            fixed_terms: vec![Term::Intercept],
            random_intercepts: vec![Grouping::Tweet],
            ..spec
        };
        assert!(matches!(spec.validate(&f), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn group_index_is_order_free() {
        let a = GroupIndex::from_labels(&["b", "a", "b"]);
        assert_eq!(a.levels, ["a", "b"]);
        assert_eq!(a.index, [1, 0, 1]);
    }

    #[test]
    fn collinear_design_is_rejected() {
        let x = DMatrix::from_row_slice(4, 3, &[1.0, 1.0, 2.0, 1.0, 2.0, 3.0, 1.0, 3.0, 4.0, 1.0, 5.0, 6.0]);
        assert!(matches!(
            check_full_rank(&x),
            Err(Error::RankDeficientDesign { rank: 2, columns: 3 })
        ));
    }
}
