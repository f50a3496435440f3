//! Logistic regression with cluster-robust covariance, and the paired
//! LLM-versus-human comparison built on it.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{
    check_full_rank, group_counts, wald_coefficients, Estimator, FitResult, GroupIndex, Grouping, ModelFrame,
    ModelSpec, Outcome, Term, Z_975,
};
use crate::data::{Dataset, NoteId, RaterId, TweetId};
use crate::error::{Error, Result};

const MAX_NEWTON: usize = 200;

/// Maximum-likelihood logistic fit with the sandwich covariance clustered
/// on `cluster`, scaled by `G/(G−1)`.
pub fn fit_logistic_clustered(frame: &ModelFrame, spec: &ModelSpec) -> Result<FitResult> {
    spec.validate(frame)?;
    let Estimator::LogisticClustered { cluster } = spec.estimator else {
        return Err(Error::InvalidSpec(format!(
            "{}: estimator is not Logistic-Clustered",
            spec.name
        )));
    };
    let x = frame.design(&spec.fixed_terms);
    check_full_rank(&x)?;
    let (n, p) = x.shape();
    let y = DVector::from_column_slice(&frame.y);

    let mut beta = DVector::<f64>::zeros(p);
    let loglik = |b: &DVector<f64>| -> f64 {
        let eta = &x * b;
        (0..n).map(|i| y[i] * eta[i] - ln1p_exp(eta[i])).sum()
    };
    let mut ll = loglik(&beta);
    let mut converged = false;
    for _ in 0..MAX_NEWTON {
        let eta = &x * &beta;
        let mu = eta.map(sigmoid);
        let w = mu.map(|m| m * (1.0 - m));
        let grad = x.transpose() * (&y - &mu);
        let mut info = DMatrix::<f64>::zeros(p, p);
        for i in 0..n {
            let xi = x.row(i);
            info += xi.transpose() * xi * w[i];
        }
        let Some(step) = info.cholesky().map(|c| c.solve(&grad)) else {
            break;
        };
        let mut t = 1.0;
        let mut next = &beta + &step * t;
        let mut ll_next = loglik(&next);
        while ll_next < ll - 1e-12 && t > 1e-8 {
            t *= 0.5;
            next = &beta + &step * t;
            ll_next = loglik(&next);
        }
        let change = (&next - &beta).amax();
        beta = next;
        ll = ll_next;
        if change < 1e-13 * (1.0 + beta.amax()) {
            converged = true;
            break;
        }
    }
    if !converged || beta.iter().any(|b| !b.is_finite() || b.abs() > 30.0) {
        return Err(Error::NonConvergence(format!(
            "{}: logistic fit did not converge (separated outcome?)",
            spec.name
        )));
    }

    let eta = &x * &beta;
    let mu = eta.map(sigmoid);
    let mut info = DMatrix::<f64>::zeros(p, p);
    for i in 0..n {
        let xi = x.row(i);
        info += xi.transpose() * xi * (mu[i] * (1.0 - mu[i]));
    }
    let bread = info
        .try_inverse()
        .ok_or_else(|| Error::Numerical("logistic information matrix is singular".into()))?;
    let gi = &frame.groups[&cluster];
    let g = gi.n_levels();
    if g < 2 {
        return Err(Error::DegenerateSample(
            "clustered covariance needs at least two clusters".into(),
        ));
    }
    let mut scores = vec![DVector::<f64>::zeros(p); g];
    for i in 0..n {
        scores[gi.index[i]] += x.row(i).transpose() * (y[i] - mu[i]);
    }
    let mut meat = DMatrix::<f64>::zeros(p, p);
    for s in &scores {
        meat += s * s.transpose();
    }
    let v = &bread * meat * &bread * (g as f64 / (g as f64 - 1.0));
    let se: Vec<f64> = (0..p).map(|j| v[(j, j)].max(0.0).sqrt()).collect();

    Ok(FitResult {
        model: spec.name.clone(),
        estimator: spec.estimator.name().to_string(),
        outcome: spec.outcome.name().to_string(),
        coefficients: wald_coefficients(&spec.fixed_terms, beta.as_slice(), &se, None),
        variance_components: Default::default(),
        residual_sd: None,
        n_obs: n,
        n_groups: group_counts(frame, &[cluster]),
        df: None,
        converged,
        singular: false,
        log_restricted_likelihood: None,
    })
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn ln1p_exp(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairResult {
    Win,
    Loss,
    Tie,
}

/// One rater's comparison of an LLM note with a human note on the same
/// tweet, from the LLM note's perspective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairOutcome {
    pub rater_id: RaterId,
    pub tweet_id: TweetId,
    pub llm_note_id: NoteId,
    pub human_note_id: NoteId,
    pub result: PairResult,
}

/// Every (rater, LLM note, human note) triple on a shared tweet where the
/// rater rated both notes. Tweets with several notes of a kind contribute
/// every cross pair.
pub fn build_pairs(d: &Dataset) -> Vec<PairOutcome> {
    let mut by_note: BTreeMap<&NoteId, BTreeMap<&RaterId, f64>> = BTreeMap::new();
    for r in &d.ratings {
        by_note.entry(&r.note_id).or_default().insert(&r.rater_id, r.score());
    }
    let empty = BTreeMap::new();
    let mut out = Vec::new();
    for (tweet, notes) in d.notes_by_tweet() {
        let (llm, human): (Vec<_>, Vec<_>) = notes.into_iter().partition(|n| n.is_ai);
        for l in &llm {
            let lr = by_note.get(&l.note_id).unwrap_or(&empty);
            for h in &human {
                let hr = by_note.get(&h.note_id).unwrap_or(&empty);
                for (rater, lv) in lr {
                    let Some(hv) = hr.get(rater) else { continue };
                    let result = if lv > hv {
                        PairResult::Win
                    } else if lv < hv {
                        PairResult::Loss
                    } else {
                        PairResult::Tie
                    };
                    out.push(PairOutcome {
                        rater_id: (*rater).clone(),
                        tweet_id: tweet.clone(),
                        llm_note_id: l.note_id.clone(),
                        human_note_id: h.note_id.clone(),
                        result,
                    });
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseReport {
    pub n_observations: usize,
    pub n_note_pairs: usize,
    pub n_tweets: usize,
    pub n_raters: usize,
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    pub tie_rate: f64,
    /// Wins over non-tied comparisons.
    pub win_share: f64,
    pub beta: f64,
    pub se: f64,
    pub z: f64,
    pub p_value: f64,
    pub odds_ratio: f64,
    pub or_ci_low: f64,
    pub or_ci_high: f64,
    pub n_clusters: usize,
}

/// Intercept-only logistic model for P(LLM note preferred) on non-tied
/// comparisons, with rater-clustered standard errors.
pub fn pairwise_bradley_terry(d: &Dataset) -> Result<PairwiseReport> {
    pairwise_from_outcomes(&build_pairs(d))
}

pub fn pairwise_from_outcomes(pairs: &[PairOutcome]) -> Result<PairwiseReport> {
    if pairs.is_empty() {
        return Err(Error::NoPairs);
    }
    let count = |r: PairResult| pairs.iter().filter(|p| p.result == r).count();
    let (wins, losses, ties) = (count(PairResult::Win), count(PairResult::Loss), count(PairResult::Tie));
    if wins + losses == 0 {
        return Err(Error::AllTies(ties));
    }
    let decided: Vec<&PairOutcome> = pairs.iter().filter(|p| p.result != PairResult::Tie).collect();
    let mut frame = ModelFrame::empty(Outcome::PairWin, false);
    frame.y = decided
        .iter()
        .map(|p| if p.result == PairResult::Win { 1.0 } else { 0.0 })
        .collect();
    let m = frame.y.len();
    frame.ai = vec![0.0; m];
    frame.factor = vec![0.0; m];
    frame.left = vec![0.0; m];
    frame.right = vec![0.0; m];
    let raters: Vec<&str> = decided.iter().map(|p| p.rater_id.as_str()).collect();
    frame.groups.insert(Grouping::Rater, GroupIndex::from_labels(&raters));
    let spec = ModelSpec {
        name: "pairwise".into(),
        outcome: Outcome::PairWin,
        fixed_terms: vec![Term::Intercept],
        random_intercepts: vec![],
        estimator: Estimator::LogisticClustered {
            cluster: Grouping::Rater,
        },
    };
    let fit = fit_logistic_clustered(&frame, &spec)?;
    let c = &fit.coefficients[0];
    let normal = Normal::standard();
    Ok(PairwiseReport {
        n_observations: pairs.len(),
        n_note_pairs: pairs
            .iter()
            .map(|p| (&p.llm_note_id, &p.human_note_id))
            .collect::<BTreeSet<_>>()
            .len(),
        n_tweets: pairs.iter().map(|p| &p.tweet_id).collect::<BTreeSet<_>>().len(),
        n_raters: pairs.iter().map(|p| &p.rater_id).collect::<BTreeSet<_>>().len(),
        wins,
        losses,
        ties,
        tie_rate: ties as f64 / pairs.len() as f64,
        win_share: wins as f64 / (wins + losses) as f64,
        beta: c.estimate,
        se: c.se,
        z: c.statistic,
        p_value: 2.0 * normal.sf(c.statistic.abs()),
        odds_ratio: c.estimate.exp(),
        or_ci_low: (c.estimate - Z_975 * c.se).exp(),
        or_ci_high: (c.estimate + Z_975 * c.se).exp(),
        n_clusters: fit.n_groups[Grouping::Rater.name()],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcomes(spec: &[(&str, PairResult)]) -> Vec<PairOutcome> {
        spec.iter()
            .enumerate()
            .map(|(i, (r, res))| PairOutcome {
                rater_id: (*r).into(),
                tweet_id: "t".into(),
                llm_note_id: "l".into(),
                human_note_id: format!("h{i}").into(),
                result: *res,
            })
            .collect()
    }

    #[test]
    fn six_wins_four_losses() {
        use PairResult::*;
        let o = outcomes(&[
            ("a", Win),
            ("a", Win),
            ("b", Win),
            ("b", Loss),
            ("c", Win),
            ("c", Loss),
            ("d", Win),
            ("d", Loss),
            ("e", Win),
            ("e", Loss),
            ("e", Tie),
        ]);
        let r = pairwise_from_outcomes(&o).unwrap();
        assert!((r.beta - (0.6f64 / 0.4).ln()).abs() < 1e-12);
        assert_eq!(r.ties, 1);
        assert!((r.win_share - 0.6).abs() < 1e-15);
    }

    #[test]
    fn all_ties_and_no_pairs() {
        let o = outcomes(&[("a", PairResult::Tie), ("b", PairResult::Tie)]);
        assert!(matches!(pairwise_from_outcomes(&o), Err(Error::AllTies(2))));
        assert!(matches!(pairwise_from_outcomes(&[]), Err(Error::NoPairs)));
    }

    #[test]
    fn clustered_se_matches_closed_form() {
        use PairResult::*;
        let o = outcomes(&[("a", Win), ("a", Win), ("b", Loss), ("b", Win), ("c", Loss), ("d", Win)]);
        let r = pairwise_from_outcomes(&o).unwrap();
        // Intercept-only: bread = 1/(n p (1−p)), cluster scores Σ(y − p).
        let (n, p) = (6.0, 4.0 / 6.0);
        let s: [f64; 4] = [2.0 - 2.0 * p, 1.0 - 2.0 * p, -p, 1.0 - p];
        let meat: f64 = s.iter().map(|v| v * v).sum();
        let var = meat / (n * p * (1.0 - p)).powi(2) * 4.0 / 3.0;
        assert!((r.se - var.sqrt()).abs() < 1e-12);
    }
}
