//! The named model families: rating-level table, note-level outcomes and
//! subgroup re-estimation.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    benjamini_hochberg, fit, fit_lmm, Coefficient, Estimator, FitResult, Grouping, ModelFrame, ModelSpec, Outcome, Term,
};
use crate::data::{BucketConfig, Dataset, TopicLabel, TweetId};
use crate::error::{Error, Result};
use crate::scoring::ScoringResult;

pub const DEFAULT_SUBGROUP_MIN_RATINGS: usize = 500;

const QUADRATIC_TERMS: [Term; 6] = [
    Term::Intercept,
    Term::Ai,
    Term::Factor,
    Term::FactorSq,
    Term::AiFactor,
    Term::AiFactorSq,
];

/// Rating ~ AI × factor + AI × factor² + (1 | note) + (1 | rater).
pub fn model1_spec() -> ModelSpec {
    ModelSpec {
        name: "Note + Rater RE".into(),
        outcome: Outcome::Rating,
        fixed_terms: QUADRATIC_TERMS.to_vec(),
        random_intercepts: vec![Grouping::Note, Grouping::Rater],
        estimator: Estimator::RemlLmm,
    }
}

/// The four rating-level specifications, in column order.
pub fn table1_specs() -> Vec<ModelSpec> {
    vec![
        model1_spec(),
        ModelSpec {
            name: "Tweet + Rater RE".into(),
            random_intercepts: vec![Grouping::Tweet, Grouping::Rater],
            ..model1_spec()
        },
        ModelSpec {
            name: "OLS Clustered".into(),
            random_intercepts: vec![],
            estimator: Estimator::OlsCr2 {
                cluster: Grouping::Note,
            },
            ..model1_spec()
        },
        ModelSpec {
            name: "Note + Rater RE (Group)".into(),
            fixed_terms: vec![
                Term::Intercept,
                Term::Ai,
                Term::Left,
                Term::Right,
                Term::AiLeft,
                Term::AiRight,
            ],
            ..model1_spec()
        },
    ]
}

/// Fits the four rating-level models; columns run concurrently.
pub fn run_table1(d: &Dataset, buckets: &BucketConfig) -> Result<Vec<FitResult>> {
    buckets.validate()?;
    let frame = ModelFrame::ratings(d, buckets);
    table1_specs().par_iter().map(|s| fit(&frame, s)).collect()
}

/// `outcome ~ AI + (1 | tweet)` for helpfulness score, CRH and CRNH, with
/// BH-adjusted AI p-values across the three.
pub fn run_eq2_outcomes(scores: &ScoringResult, d: &Dataset) -> Result<Vec<FitResult>> {
    let outcomes = [Outcome::HelpfulnessScore, Outcome::Crh, Outcome::Crnh];
    let mut fits = outcomes
        .par_iter()
        .map(|&o| {
            let frame = ModelFrame::notes(d, scores, o)?;
            if frame.len() < 3 {
                return Err(Error::DegenerateSample(format!(
                    "{} notes available for {}",
                    frame.len(),
                    o.name()
                )));
            }
            let spec = ModelSpec {
                name: o.name().to_string(),
                outcome: o,
                fixed_terms: vec![Term::Intercept, Term::Ai],
                random_intercepts: vec![Grouping::Tweet],
                estimator: Estimator::RemlLmm,
            };
            fit_lmm(&frame, &spec).map(|f| f.result)
        })
        .collect::<Result<Vec<_>>>()?;
    let p: Vec<f64> = fits
        .iter()
        .map(|f| f.coef(Term::Ai).map_or(1.0, |c| c.p_value))
        .collect();
    for (f, adj) in fits.iter_mut().zip(benjamini_hochberg(&p)) {
        if let Some(c) = f.coefficients.iter_mut().find(|c| c.term == Term::Ai.name()) {
            c.adj_p_value = Some(adj);
        }
    }
    Ok(fits)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubgroupAxis {
    Topic,
    Modality,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedSubgroup {
    pub label: String,
    pub n_ratings: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupReport {
    pub axis: SubgroupAxis,
    pub min_ratings: usize,
    pub fits: BTreeMap<String, FitResult>,
    pub skipped: Vec<SkippedSubgroup>,
}

impl SubgroupReport {
    /// `(label, AI coefficient)` rows for plotting.
    pub fn ai_effects(&self) -> Vec<(String, Coefficient)> {
        self.fits
            .iter()
            .filter_map(|(l, f)| f.coef(Term::Ai).map(|c| (l.clone(), c.clone())))
            .collect()
    }
}

/// Fits the primary rating-level model separately for each label value.
///
/// Subsets under `min_ratings`, or whose fit fails, are skipped and listed.
pub fn subgroup_fits(
    d: &Dataset,
    labels: &[TopicLabel],
    axis: SubgroupAxis,
    buckets: &BucketConfig,
    min_ratings: usize,
) -> Result<SubgroupReport> {
    let by_tweet: BTreeMap<&TweetId, &TopicLabel> = labels.iter().map(|l| (&l.tweet_id, l)).collect();
    let frame = ModelFrame::ratings(d, buckets);
    let tweets = &frame.groups[&Grouping::Tweet];
    let mut rows: BTreeMap<&'static str, Vec<usize>> = BTreeMap::new();
    for (i, &t) in tweets.index.iter().enumerate() {
        let tid = &tweets.levels[t];
        let l = by_tweet
            .get(&TweetId::from(tid.as_str()))
            .ok_or_else(|| Error::UnlabeledTweet(tid.clone()))?;
        let name = match axis {
            SubgroupAxis::Topic => l.topic.name(),
            SubgroupAxis::Modality => l.modality.name(),
        };
        rows.entry(name).or_default().push(i);
    }
    let spec = model1_spec();
    let outcomes: Vec<(String, usize, Result<FitResult>)> = rows
        .par_iter()
        .map(|(label, r)| {
            let res = if r.len() < min_ratings {
                Err(Error::SubsetTooSmall {
                    label: label.to_string(),
                    n: r.len(),
                    min: min_ratings,
                })
            } else {
                let mut s = spec.clone();
                s.name = format!("{} [{label}]", spec.name);
                fit(&frame.subset(r), &s)
            };
            (label.to_string(), r.len(), res)
        })
        .collect();
    let mut report = SubgroupReport {
        axis,
        min_ratings,
        fits: BTreeMap::new(),
        skipped: Vec::new(),
    };
    for (label, n, res) in outcomes {
        match res {
            Ok(f) => {
                report.fits.insert(label, f);
            }
            Err(e) => report.skipped.push(SkippedSubgroup {
                label,
                n_ratings: n,
                reason: e.to_string(),
            }),
        }
    }
    Ok(report)
}

fn stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

/// Term × model grid: `estimate` + significance stars with the SE in
/// parentheses, then variance components and observation counts.
pub fn write_table1_tsv<W: Write>(fits: &[FitResult], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_writer(out);
    let mut header = vec!["term".to_string()];
    header.extend(fits.iter().map(|f| f.model.clone()));
    w.write_record(&header)?;
    let all_terms = [
        Term::Intercept,
        Term::Ai,
        Term::Factor,
        Term::FactorSq,
        Term::AiFactor,
        Term::AiFactorSq,
        Term::Left,
        Term::Right,
        Term::AiLeft,
        Term::AiRight,
    ];
    for t in all_terms {
        if fits.iter().all(|f| f.coef(t).is_none()) {
            continue;
        }
        let mut row = vec![t.name().to_string()];
        row.extend(fits.iter().map(|f| {
            f.coef(t)
                .map(|c| format!("{:.3}{} ({:.3})", c.estimate, stars(c.p_value), c.se))
                .unwrap_or_default()
        }));
        w.write_record(&row)?;
    }
    for g in [Grouping::Rater, Grouping::Note, Grouping::Tweet] {
        if fits.iter().all(|f| !f.variance_components.contains_key(g.name())) {
            continue;
        }
        let mut row = vec![format!("SD (Intercept {})", g.name())];
        row.extend(fits.iter().map(|f| {
            f.variance_components
                .get(g.name())
                .map(|v| format!("{v:.3}"))
                .unwrap_or_default()
        }));
        w.write_record(&row)?;
    }
    let mut row = vec!["SD (Observations)".to_string()];
    row.extend(
        fits.iter()
            .map(|f| match (f.variance_components.is_empty(), f.residual_sd) {
                (false, Some(s)) => format!("{s:.3}"),
                _ => String::new(),
            }),
    );
    w.write_record(&row)?;
    let mut row = vec!["Num.Obs.".to_string()];
    row.extend(fits.iter().map(|f| f.n_obs.to_string()));
    w.write_record(&row)?;
    w.flush().map_err(|e| Error::Serialize(e.to_string()))
}

/// Plot-ready `label, estimate, ci_low, ci_high` rows.
pub fn write_coefficient_csv<W: Write>(rows: &[(String, Coefficient)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["label", "estimate", "ci_low", "ci_high"])?;
    for (label, c) in rows {
        w.write_record([
            label.as_str(),
            &format!("{:.6}", c.estimate),
            &format!("{:.6}", c.ci_low),
            &format!("{:.6}", c.ci_high),
        ])?;
    }
    w.flush().map_err(|e| Error::Serialize(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table1_specs_are_well_formed() {
        let specs = table1_specs();
        assert_eq!(specs.len(), 4);
        assert_eq!(
            specs[2].estimator,
            Estimator::OlsCr2 {
                cluster: Grouping::Note
            }
        );
        assert!(specs[3].fixed_terms.contains(&Term::AiRight));
    }

    #[test]
    fn star_thresholds() {
        assert_eq!(stars(0.0005), "***");
        assert_eq!(stars(0.03), "*");
        assert_eq!(stars(0.2), "");
    }
}
