//! Bridging matrix factorization.
//!
//! Each rating is modelled as `r ≈ μ + i_u + i_n + f_u·f_n`. Note intercepts
//! `i_n` are the helpfulness scores: a note only earns a high intercept when
//! raters on both sides of the factor axis rate it helpful, because
//! agreement along the factor axis is absorbed by `f_u·f_n`.
//!
//! The fit minimizes squared error plus ridge penalties by exact block
//! coordinate descent (rater blocks, note blocks, then `μ`); every block is a
//! small closed-form ridge regression, so the objective never increases.

mod shrinkage;

pub use shrinkage::{shrinkage_curve, shrinkage_curve_with, FrozenRaters, RatingProfile};

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, NoteId, NoteStatus, NoteStatusRecord, RaterId};
use crate::error::{Error, Result};

/// How the penalty terms are weighed against the data term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// `Σ err² + λ_i(μ² + Σ i_u² + Σ i_n²) + λ_f(Σ‖f_u‖² + Σ‖f_n‖²)`.
    Sum,
    /// Mean squared error plus λ times the *mean* squared parameter in each
    /// group, as in the open-source Community Notes scorer:
    /// `mean err² + λ_i(μ² + mean i_u² + mean i_n²) + λ_f(mean‖f_u‖² + mean‖f_n‖²)`.
    /// A note's intercept penalty is then worth `λ_i·N/M` ratings, where
    /// `N/M` is the average number of ratings per note.
    PerRating,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoringConfig {
    pub factor_dim: usize,
    pub lambda_intercept: f64,
    pub lambda_factor: f64,
    pub crh_threshold: f64,
    pub crnh_threshold: f64,
    pub max_iterations: usize,
    pub convergence_tol: f64,
    pub seed: u64,
    pub normalization: Normalization,
    /// Number of factor initializations screened before the most promising
    /// one is run to convergence. The first uses factors uniform in [-0.1, 0.1], later ones
    /// wider draws from separate streams of the same seed, since alternating
    /// updates can stall in a local minimum on small or sparse data.
    pub n_inits: usize,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        ScoringConfig {
            factor_dim: 1,
            lambda_intercept: 0.15,
            lambda_factor: 0.03,
            crh_threshold: 0.40,
            crnh_threshold: -0.05,
            max_iterations: 5000,
            convergence_tol: 1e-8,
            seed: 0,
            normalization: Normalization::PerRating,
            n_inits: 4,
        }
    }
}

impl ScoringConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.factor_dim == 0 {
            return bad("factor_dim must be at least 1".into());
        }
        if !(self.lambda_intercept > 0.0 && self.lambda_intercept.is_finite()) {
            return bad(format!(
                "lambda_intercept must be positive and finite, got {}",
                self.lambda_intercept
            ));
        }
        if !(self.lambda_factor >= 0.0 && self.lambda_factor.is_finite()) {
            return bad(format!("lambda_factor must be >= 0, got {}", self.lambda_factor));
        }
        if !(self.crnh_threshold < self.crh_threshold) {
            return bad(format!(
                "crnh_threshold ({}) must be below crh_threshold ({})",
                self.crnh_threshold, self.crh_threshold
            ));
        }
        if self.n_inits == 0 {
            return bad("n_inits must be at least 1".into());
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be at least 1".into());
        }
        if !(self.convergence_tol >= 0.0) {
            return bad("convergence_tol must be >= 0".into());
        }
        Ok(())
    }

    /// Penalty weights in sum-of-squares units for a corpus of `n_ratings`
    /// ratings over `n_raters` raters and `n_notes` notes.
    pub fn penalty_weights(&self, n_ratings: usize, n_raters: usize, n_notes: usize) -> PenaltyWeights {
        let (li, lf) = (self.lambda_intercept, self.lambda_factor);
        match self.normalization {
            Normalization::Sum => PenaltyWeights {
                global_intercept: li,
                rater_intercept: li,
                note_intercept: li,
                rater_factor: lf,
                note_factor: lf,
                data_scale: 1.0,
            },
            Normalization::PerRating => {
                let n = n_ratings as f64;
                let per_rater = n / n_raters.max(1) as f64;
                let per_note = n / n_notes.max(1) as f64;
                PenaltyWeights {
                    global_intercept: li * n,
                    rater_intercept: li * per_rater,
                    note_intercept: li * per_note,
                    rater_factor: lf * per_rater,
                    note_factor: lf * per_note,
                    data_scale: 1.0 / n.max(1.0),
                }
            }
        }
    }
}

/// Ridge weights expressed against an unweighted sum of squared errors.
/// `data_scale` converts a sum-scale objective back to the configured scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyWeights {
    pub global_intercept: f64,
    pub rater_intercept: f64,
    pub note_intercept: f64,
    pub rater_factor: f64,
    pub note_factor: f64,
    pub data_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaterParams {
    pub intercept: f64,
    pub factor: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoteParams {
    /// The note intercept `i_n`.
    pub helpfulness_score: f64,
    pub factor: Vec<f64>,
    pub n_ratings: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoringResult {
    pub global_intercept: f64,
    pub rater_params: BTreeMap<RaterId, RaterParams>,
    pub note_params: BTreeMap<NoteId, NoteParams>,
    pub statuses: BTreeMap<NoteId, NoteStatusRecord>,
    /// Final penalized loss in the configured normalization.
    pub objective: f64,
    pub iterations_used: usize,
    pub converged: bool,
}

impl ScoringResult {
    pub fn score(&self, note: &NoteId) -> Option<f64> {
        self.note_params.get(note).map(|p| p.helpfulness_score)
    }

    pub fn status(&self, note: &NoteId) -> Option<NoteStatus> {
        self.statuses.get(note).map(|s| s.status)
    }

    /// `noteId`, `helpfulness_score`, `status` rows.
    pub fn write_tsv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_writer(out);
        w.write_record(["noteId", "helpfulness_score", "n_ratings", "status"])?;
        for (id, p) in &self.note_params {
            let status = self.statuses.get(id).map(|s| s.status.code()).unwrap_or("NMR");
            w.write_record([
                id.as_str(),
                &format!("{:.6}", p.helpfulness_score),
                &p.n_ratings.to_string(),
                status,
            ])?;
        }
        w.flush().map_err(|e| Error::Serialize(e.to_string()))
    }
}

pub fn classify(score: f64, cfg: &ScoringConfig) -> NoteStatus {
    if score >= cfg.crh_threshold {
        NoteStatus::Crh
    } else if score <= cfg.crnh_threshold {
        NoteStatus::Crnh
    } else {
        NoteStatus::Nmr
    }
}

/// Threshold rule: CRH iff `i_n ≥ crh_threshold`, CRNH iff `i_n ≤ crnh_threshold`.
pub fn assign_status(res: &ScoringResult, cfg: &ScoringConfig) -> BTreeMap<NoteId, NoteStatusRecord> {
    res.note_params
        .iter()
        .map(|(id, p)| {
            (
                id.clone(),
                NoteStatusRecord {
                    note_id: id.clone(),
                    status: classify(p.helpfulness_score, cfg),
                    first_crh_at: None,
                },
            )
        })
        .collect()
}

/// Compressed rating index used by the solver.
pub(crate) struct RatingIndex {
    pub rater_ids: Vec<RaterId>,
    pub note_ids: Vec<NoteId>,
    /// `(rater, note, value)` in dataset order.
    pub triples: Vec<(usize, usize, f64)>,
    pub by_rater: Vec<Vec<(usize, f64)>>,
    pub by_note: Vec<Vec<(usize, f64)>>,
}

impl RatingIndex {
    /// Index over raw `(rater, note, value)` triples with dense ids.
    #[cfg(test)]
    pub fn from_triples(n_raters: usize, n_notes: usize, triples: Vec<(usize, usize, f64)>) -> RatingIndex {
        let mut by_rater = vec![Vec::new(); n_raters];
        let mut by_note = vec![Vec::new(); n_notes];
        for &(u, n, v) in &triples {
            by_rater[u].push((n, v));
            by_note[n].push((u, v));
        }
        RatingIndex {
            rater_ids: (0..n_raters).map(|i| RaterId(format!("r{i}"))).collect(),
            note_ids: (0..n_notes).map(|i| NoteId(format!("n{i}"))).collect(),
            triples,
            by_rater,
            by_note,
        }
    }

    pub fn build(d: &Dataset) -> RatingIndex {
        let mut raters: BTreeMap<&RaterId, usize> = BTreeMap::new();
        let mut notes: BTreeMap<&NoteId, usize> = BTreeMap::new();
        for r in &d.ratings {
            raters.insert(&r.rater_id, 0);
            notes.insert(&r.note_id, 0);
        }
        for (i, v) in raters.values_mut().enumerate() {
            *v = i;
        }
        for (i, v) in notes.values_mut().enumerate() {
            *v = i;
        }
        let mut by_rater = vec![Vec::new(); raters.len()];
        let mut by_note = vec![Vec::new(); notes.len()];
        let triples: Vec<(usize, usize, f64)> = d
            .ratings
            .iter()
            .map(|r| {
                let (u, n, v) = (raters[&r.rater_id], notes[&r.note_id], r.score());
                by_rater[u].push((n, v));
                by_note[n].push((u, v));
                (u, n, v)
            })
            .collect();
        RatingIndex {
            rater_ids: raters.keys().map(|k| (*k).clone()).collect(),
            note_ids: notes.keys().map(|k| (*k).clone()).collect(),
            triples,
            by_rater,
            by_note,
        }
    }
}

/// Flat parameter storage; factors are row-major with `dim` columns.
#[derive(Debug, Clone)]
pub(crate) struct Params {
    pub dim: usize,
    pub mu: f64,
    pub rater_intercept: Vec<f64>,
    pub rater_factor: Vec<f64>,
    pub note_intercept: Vec<f64>,
    pub note_factor: Vec<f64>,
}

impl Params {
    fn dot(&self, u: usize, n: usize) -> f64 {
        let k = self.dim;
        self.rater_factor[u * k..(u + 1) * k]
            .iter()
            .zip(&self.note_factor[n * k..(n + 1) * k])
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn predict(&self, u: usize, n: usize) -> f64 {
        self.mu + self.rater_intercept[u] + self.note_intercept[n] + self.dot(u, n)
    }

    /// Penalized loss in sum-of-squares units.
    pub fn sum_objective(&self, idx: &RatingIndex, w: &PenaltyWeights) -> f64 {
        let sse: f64 = idx
            .triples
            .iter()
            .map(|&(u, n, v)| {
                let e = v - self.predict(u, n);
                e * e
            })
            .sum();
        let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        sse + w.global_intercept * self.mu * self.mu
            + w.rater_intercept * sq(&self.rater_intercept)
            + w.note_intercept * sq(&self.note_intercept)
            + w.rater_factor * sq(&self.rater_factor)
            + w.note_factor * sq(&self.note_factor)
    }
}

/// Solves the ridge problem for one rater or note:
/// minimize `Σ (t_j − x₀ − x₁..·g_j)² + w_int·x₀² + w_fac·‖x₁..‖²`
/// where each row supplies the opposite side's factor `g_j` and target `t_j`.
/// Writes `[intercept, factor...]` into `out`.
pub(crate) fn solve_block<'a>(
    rows: impl Iterator<Item = (&'a [f64], f64)>,
    dim: usize,
    w_int: f64,
    w_fac: f64,
    out: &mut [f64],
) {
    let m = dim + 1;
    let mut a = vec![0.0; m * m];
    let mut b = vec![0.0; m];
    for (g, t) in rows {
        // feature vector = [1, g...]
        a[0] += 1.0;
        b[0] += t;
        for i in 0..dim {
            a[i + 1] += g[i];
            a[(i + 1) * m] += g[i];
            b[i + 1] += g[i] * t;
            for j in 0..dim {
                a[(i + 1) * m + j + 1] += g[i] * g[j];
            }
        }
    }
    a[0] += w_int;
    for i in 1..m {
        a[i * m + i] += w_fac;
    }
    if !solve_spd_in_place(&mut a, &mut b, m) {
        // Only reachable with w_fac == 0 and degenerate factors; fall back to
        // the intercept-only solution.
        let fallback = if a[0] > 0.0 { b[0] / a[0] } else { 0.0 };
        out.fill(0.0);
        out[0] = fallback;
        return;
    }
    out.copy_from_slice(&b);
}

/// Cholesky solve for a small symmetric positive-definite system.
/// Returns false when the matrix is not numerically positive definite.
pub(crate) fn solve_spd_in_place(a: &mut [f64], b: &mut [f64], m: usize) -> bool {
    for j in 0..m {
        let mut d = a[j * m + j];
        for k in 0..j {
            d -= a[j * m + k] * a[j * m + k];
        }
        if !(d > 1e-300) {
            return false;
        }
        let d = d.sqrt();
        a[j * m + j] = d;
        for i in (j + 1)..m {
            let mut s = a[i * m + j];
            for k in 0..j {
                s -= a[i * m + k] * a[j * m + k];
            }
            a[i * m + j] = s / d;
        }
    }
    for i in 0..m {
        let mut s = b[i];
        for k in 0..i {
            s -= a[i * m + k] * b[k];
        }
        b[i] = s / a[i * m + i];
    }
    for i in (0..m).rev() {
        let mut s = b[i];
        for k in (i + 1)..m {
            s -= a[k * m + i] * b[k];
        }
        b[i] = s / a[i * m + i];
    }
    true
}

fn update_raters(p: &mut Params, idx: &RatingIndex, w: &PenaltyWeights) {
    let k = p.dim;
    let (mu, note_i, note_f) = (p.mu, &p.note_intercept, &p.note_factor);
    let solved: Vec<Vec<f64>> = idx
        .by_rater
        .par_iter()
        .map(|entries| {
            let mut out = vec![0.0; k + 1];
            solve_block(
                entries
                    .iter()
                    .map(|&(n, v)| (&note_f[n * k..(n + 1) * k], v - mu - note_i[n])),
                k,
                w.rater_intercept,
                w.rater_factor,
                &mut out,
            );
            out
        })
        .collect();
    for (u, x) in solved.into_iter().enumerate() {
        p.rater_intercept[u] = x[0];
        p.rater_factor[u * k..(u + 1) * k].copy_from_slice(&x[1..]);
    }
}

fn update_notes(p: &mut Params, idx: &RatingIndex, w: &PenaltyWeights) {
    let k = p.dim;
    let (mu, rater_i, rater_f) = (p.mu, &p.rater_intercept, &p.rater_factor);
    let solved: Vec<Vec<f64>> = idx
        .by_note
        .par_iter()
        .map(|entries| {
            let mut out = vec![0.0; k + 1];
            solve_block(
                entries
                    .iter()
                    .map(|&(u, v)| (&rater_f[u * k..(u + 1) * k], v - mu - rater_i[u])),
                k,
                w.note_intercept,
                w.note_factor,
                &mut out,
            );
            out
        })
        .collect();
    for (n, x) in solved.into_iter().enumerate() {
        p.note_intercept[n] = x[0];
        p.note_factor[n * k..(n + 1) * k].copy_from_slice(&x[1..]);
    }
}

fn update_mu(p: &mut Params, idx: &RatingIndex, w: &PenaltyWeights) {
    let resid: f64 = idx
        .triples
        .iter()
        .map(|&(u, n, v)| v - p.rater_intercept[u] - p.note_intercept[n] - p.dot(u, n))
        .sum();
    p.mu = resid / (idx.triples.len() as f64 + w.global_intercept);
}

/// Fits the bridging model. Deterministic for a given dataset and config.
///
/// Hitting `max_iterations` is not an error: the partial result is returned
/// with `converged = false`.
pub fn fit_bridging(d: &Dataset, cfg: &ScoringConfig) -> Result<ScoringResult> {
    fit_bridging_traced(d, cfg).map(|(r, _)| r)
}

/// [`fit_bridging`] that also returns the objective after every sweep.
pub fn fit_bridging_traced(d: &Dataset, cfg: &ScoringConfig) -> Result<(ScoringResult, Vec<f64>)> {
    cfg.validate()?;
    if d.ratings.is_empty() {
        return Err(Error::NoRatings);
    }
    let idx = RatingIndex::build(d);
    let fit = fit_index(&idx, cfg)?;
    let result = into_result(
        &fit.params,
        &idx,
        cfg,
        *fit.trace.last().unwrap(),
        fit.iterations,
        fit.converged,
    );
    Ok((result, fit.trace))
}

pub(crate) struct IndexFit {
    pub params: Params,
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Sweeps each extra initialization gets before the most promising one is
/// run to convergence.
const SCREEN_SWEEPS: usize = 50;

/// Solver core over an index; values need not be on the three-level scale.
///
/// Every initialization runs for at most `SCREEN_SWEEPS` sweeps; the one
/// with the lowest objective then continues to convergence. A single
/// initialization runs to convergence directly.
pub(crate) fn fit_index(idx: &RatingIndex, cfg: &ScoringConfig) -> Result<IndexFit> {
    let w = cfg.penalty_weights(idx.triples.len(), idx.rater_ids.len(), idx.note_ids.len());
    let screen = if cfg.n_inits > 1 {
        SCREEN_SWEEPS
    } else {
        cfg.max_iterations
    };
    let mut best: Option<IndexFit> = None;
    for start in 0..cfg.n_inits {
        let mut fit = IndexFit::start(idx, cfg, &w, start);
        fit.sweep(idx, cfg, &w, screen.min(cfg.max_iterations))?;
        if best
            .as_ref()
            .is_none_or(|b| fit.final_objective() < b.final_objective())
        {
            best = Some(fit);
        }
    }
    let mut best = best.expect("n_inits >= 1");
    best.sweep(idx, cfg, &w, cfg.max_iterations)?;
    Ok(best)
}

impl IndexFit {
    fn final_objective(&self) -> f64 {
        *self.trace.last().expect("trace holds the initial objective")
    }

    /// Initialization `start`: factors from stream `start` of the seed,
    /// uniform in [-0.1, 0.1] for the first and [-1, 1] for the others;
    /// intercepts zero.
    fn start(idx: &RatingIndex, cfg: &ScoringConfig, w: &PenaltyWeights, start: usize) -> IndexFit {
        let k = cfg.factor_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(start as u64);
        let scale = if start == 0 { 0.1 } else { 1.0 };
        let rater_factor: Vec<f64> = (0..idx.rater_ids.len() * k)
            .map(|_| rng.random_range(-scale..=scale))
            .collect();
        let note_factor: Vec<f64> = (0..idx.note_ids.len() * k)
            .map(|_| rng.random_range(-scale..=scale))
            .collect();
        let params = Params {
            dim: k,
            mu: 0.0,
            rater_intercept: vec![0.0; idx.rater_ids.len()],
            rater_factor,
            note_intercept: vec![0.0; idx.note_ids.len()],
            note_factor,
        };
        let obj = params.sum_objective(idx, w) * w.data_scale;
        IndexFit {
            params,
            trace: vec![obj],
            iterations: 0,
            converged: false,
        }
    }

    /// Sweeps until converged or `limit` sweeps in total.
    fn sweep(&mut self, idx: &RatingIndex, cfg: &ScoringConfig, w: &PenaltyWeights, limit: usize) -> Result<()> {
        let p = &mut self.params;
        while !self.converged && self.iterations < limit {
            let prev = *self.trace.last().expect("trace holds the initial objective");
            update_raters(p, idx, w);
            update_notes(p, idx, w);
            update_mu(p, idx, w);
            let obj = p.sum_objective(idx, w) * w.data_scale;
            self.trace.push(obj);
            self.iterations += 1;
            if !obj.is_finite() {
                return Err(Error::Numerical("bridging objective became non-finite".into()));
            }
            self.converged = (prev - obj).abs() < cfg.convergence_tol;
        }
        Ok(())
    }
}

fn into_result(
    p: &Params,
    idx: &RatingIndex,
    cfg: &ScoringConfig,
    objective: f64,
    iterations_used: usize,
    converged: bool,
) -> ScoringResult {
    let k = p.dim;
    let rater_params = idx
        .rater_ids
        .iter()
        .enumerate()
        .map(|(u, id)| {
            (
                id.clone(),
                RaterParams {
                    intercept: p.rater_intercept[u],
                    factor: p.rater_factor[u * k..(u + 1) * k].to_vec(),
                },
            )
        })
        .collect();
    let note_params = idx
        .note_ids
        .iter()
        .enumerate()
        .map(|(n, id)| {
            (
                id.clone(),
                NoteParams {
                    helpfulness_score: p.note_intercept[n],
                    factor: p.note_factor[n * k..(n + 1) * k].to_vec(),
                    n_ratings: idx.by_note[n].len(),
                },
            )
        })
        .collect();
    let mut res = ScoringResult {
        global_intercept: p.mu,
        rater_params,
        note_params,
        statuses: BTreeMap::new(),
        objective,
        iterations_used,
        converged,
    };
    res.statuses = assign_status(&res, cfg);
    res
}

/// Re-evaluates the configured objective at the parameters stored in `res`.
pub fn evaluate_objective(d: &Dataset, cfg: &ScoringConfig, res: &ScoringResult) -> Result<f64> {
    let idx = RatingIndex::build(d);
    let k = cfg.factor_dim;
    let mut p = Params {
        dim: k,
        mu: res.global_intercept,
        rater_intercept: Vec::with_capacity(idx.rater_ids.len()),
        rater_factor: Vec::with_capacity(idx.rater_ids.len() * k),
        note_intercept: Vec::with_capacity(idx.note_ids.len()),
        note_factor: Vec::with_capacity(idx.note_ids.len() * k),
    };
    for id in &idx.rater_ids {
        let rp = res
            .rater_params
            .get(id)
            .ok_or_else(|| Error::InvalidConfig(format!("result lacks rater {id}")))?;
        p.rater_intercept.push(rp.intercept);
        p.rater_factor.extend_from_slice(&rp.factor);
    }
    for id in &idx.note_ids {
        let np = res
            .note_params
            .get(id)
            .ok_or_else(|| Error::InvalidConfig(format!("result lacks note {id}")))?;
        p.note_intercept.push(np.helpfulness_score);
        p.note_factor.extend_from_slice(&np.factor);
    }
    let w = cfg.penalty_weights(idx.triples.len(), idx.rater_ids.len(), idx.note_ids.len());
    Ok(p.sum_objective(&idx, &w) * w.data_scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{HelpfulnessLevel, Note, RaterProfile, Rating};

    pub(crate) fn dense_dataset(values: &[&[f64]]) -> Dataset {
        let n_notes = values[0].len();
        let notes = (0..n_notes)
            .map(|j| Note {
                note_id: format!("n{j}").into(),
                tweet_id: "t".into(),
                is_ai: j % 2 == 0,
                created_at: 1 + j as i64,
                text: String::new(),
                is_media_note: false,
                writer_id: None,
            })
            .collect();
        let mut ratings = Vec::new();
        let mut raters = Vec::new();
        for (i, row) in values.iter().enumerate() {
            raters.push(RaterProfile {
                rater_id: format!("u{i}").into(),
                factor: 0.0,
                intercept: 0.0,
            });
            for (j, &v) in row.iter().enumerate() {
                if v.is_nan() {
                    continue;
                }
                ratings.push(Rating {
                    rater_id: format!("u{i}").into(),
                    note_id: format!("n{j}").into(),
                    value: HelpfulnessLevel::from_value(v).unwrap(),
                    created_at: 10,
                });
            }
        }
        Dataset::from_parts(notes, ratings, raters).unwrap()
    }

    #[test]
    fn empty_rating_set_is_an_error() {
        let d = Dataset::default();
        assert!(matches!(
            fit_bridging(&d, &ScoringConfig::default()),
            Err(Error::NoRatings)
        ));
    }

    #[test]
    fn all_helpful_dense_block_is_symmetric() {
        for normalization in [Normalization::Sum, Normalization::PerRating] {
            let row: &[f64] = &[1.0, 1.0, 1.0];
            let d = dense_dataset(&[row; 4]);
            let cfg = ScoringConfig {
                convergence_tol: 1e-15,
                normalization,
                ..ScoringConfig::default()
            };
            let res = fit_bridging(&d, &cfg).unwrap();
            assert!(res.converged);
            let scores: Vec<f64> = res.note_params.values().map(|p| p.helpfulness_score).collect();
            for s in &scores {
                assert!((s - scores[0]).abs() < 1e-9, "{scores:?}");
            }
            // The constant can be carried by f_u·f_n as well as by intercepts.
            let (rp, np) = (
                res.rater_params.values().next().unwrap(),
                res.note_params.values().next().unwrap(),
            );
            let fitted = res.global_intercept + rp.intercept + scores[0] + rp.factor[0] * np.factor[0];
            assert!(fitted < 1.0 && fitted > 0.5, "fitted {fitted}");
        }
    }

    #[test]
    fn objective_never_increases() {
        let d = dense_dataset(&[
            &[1.0, 0.0, 0.5, 1.0],
            &[0.0, 1.0, 0.5, f64::NAN],
            &[1.0, 0.0, f64::NAN, 1.0],
            &[0.5, 0.5, 1.0, 0.0],
            &[1.0, f64::NAN, 0.0, 1.0],
        ]);
        for normalization in [Normalization::Sum, Normalization::PerRating] {
            let cfg = ScoringConfig {
                normalization,
                factor_dim: 2,
                ..ScoringConfig::default()
            };
            let (_, trace) = fit_bridging_traced(&d, &cfg).unwrap();
            for w in trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0), "{} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn status_thresholds_are_inclusive() {
        let cfg = ScoringConfig::default();
        assert_eq!(classify(0.40, &cfg), NoteStatus::Crh);
        assert_eq!(classify(0.0, &cfg), NoteStatus::Nmr);
        assert_eq!(classify(-0.06, &cfg), NoteStatus::Crnh);
        assert_eq!(classify(-0.05, &cfg), NoteStatus::Crnh);
        assert_eq!(classify(0.3999, &cfg), NoteStatus::Nmr);
    }

    #[test]
    fn config_validation() {
        for cfg in [
            ScoringConfig {
                lambda_intercept: 0.0,
                ..ScoringConfig::default()
            },
            ScoringConfig {
                crnh_threshold: 0.5,
                ..ScoringConfig::default()
            },
            ScoringConfig {
                n_inits: 0,
                ..ScoringConfig::default()
            },
        ] {
            assert!(cfg.validate().is_err());
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let d = dense_dataset(&[&[1.0, 0.0, 0.5], &[0.0, 1.0, 0.5], &[1.0, 0.5, 0.0], &[0.5, 1.0, 1.0]]);
        let cfg = ScoringConfig::default();
        assert_eq!(fit_bridging(&d, &cfg).unwrap(), fit_bridging(&d, &cfg).unwrap());
    }

    #[test]
    fn factor_sign_flip_leaves_objective_unchanged() {
        let d = dense_dataset(&[&[1.0, 0.0, 0.5], &[0.0, 1.0, 0.5], &[1.0, 0.5, 0.0], &[0.5, 1.0, 1.0]]);
        let cfg = ScoringConfig::default();
        let res = fit_bridging(&d, &cfg).unwrap();
        let mut flipped = res.clone();
        for p in flipped.rater_params.values_mut() {
            p.factor.iter_mut().for_each(|f| *f = -*f);
        }
        for p in flipped.note_params.values_mut() {
            p.factor.iter_mut().for_each(|f| *f = -*f);
        }
        let a = evaluate_objective(&d, &cfg, &res).unwrap();
        let b = evaluate_objective(&d, &cfg, &flipped).unwrap();
        assert!((a - b).abs() < 1e-15);
        assert!((a - res.objective).abs() < 1e-12);
    }

    #[test]
    fn per_rating_weights_match_group_means() {
        let cfg = ScoringConfig::default();
        let w = cfg.penalty_weights(100, 40, 4);
        assert!((w.note_intercept - 0.15 * 25.0).abs() < 1e-12);
        assert!((w.rater_intercept - 0.15 * 2.5).abs() < 1e-12);
        assert!((w.global_intercept - 15.0).abs() < 1e-12);
        assert!((w.note_factor - 0.03 * 25.0).abs() < 1e-12);
    }
}
