//! REML fit of a Gaussian linear mixed model with random intercepts.
//!
//! With `Λ = diag(θ_k)` scaling the random effects, the joint penalized
//! least-squares system is
//!
//! ```text
//! A = | ΛZ'ZΛ + I   ΛZ'X |      b = | ΛZ'y |
//!     | X'ZΛ        X'X  |          | X'y  |
//! ```
//!
//! and the profiled REML deviance is
//! `log|A| + (n−p)(1 + ln(2π r²/(n−p)))` with `r² = y'y − b'A⁻¹b`.
//!
//! The grouping factor with the most levels has a diagonal block in `A`
//! and is eliminated first; the remaining levels plus the fixed effects
//! form a dense Schur complement. Everything is assembled from sufficient
//! statistics, so one deviance evaluation costs nothing per observation.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::optim::nelder_mead;
use super::{check_full_rank, group_counts, wald_coefficients, Estimator, FitResult, Grouping, ModelFrame, ModelSpec};
use crate::error::{Error, Result};

/// A mixed-model fit plus the optimizer state behind it.
#[derive(Debug, Clone)]
pub struct LmmFit {
    pub result: FitResult,
    /// Relative standard deviations `σ_k / σ`, in `spec.random_intercepts` order.
    pub theta: Vec<f64>,
    pub deviance: f64,
    pub evaluations: usize,
}

/// Relative SDs below this are reported as a singular fit.
const SINGULAR_TOL: f64 = 1e-4;

struct BigLevel {
    n: f64,
    xsum: Vec<f64>,
    ysum: f64,
    /// `(rest level, co-occurrence count)`.
    rest: Vec<(usize, f64)>,
}

struct Suff {
    n: usize,
    p: usize,
    big: usize,
    big_levels: Vec<BigLevel>,
    /// For each rest level, the index of its factor in the spec.
    rest_factor: Vec<usize>,
    rr: DMatrix<f64>,
    rx: DMatrix<f64>,
    ry: DVector<f64>,
    xtx: DMatrix<f64>,
    xty: DVector<f64>,
    yty: f64,
}

struct Eval {
    deviance: f64,
    r2: f64,
    s: DMatrix<f64>,
    sol: DVector<f64>,
}

impl Suff {
    fn build(frame: &ModelFrame, groups: &[Grouping], x: &DMatrix<f64>) -> Suff {
        let (n, p) = x.shape();
        let idx: Vec<&[usize]> = groups.iter().map(|g| frame.groups[g].index.as_slice()).collect();
        let nlev: Vec<usize> = groups.iter().map(|g| frame.groups[g].n_levels()).collect();
        // First factor with the most levels.
        let big = (0..groups.len()).fold(0, |b, k| if nlev[k] > nlev[b] { k } else { b });
        let mut offsets = vec![0usize; groups.len()];
        let mut rest_factor = Vec::new();
        for k in 0..groups.len() {
            if k == big {
                continue;
            }
            offsets[k] = rest_factor.len();
            rest_factor.extend(std::iter::repeat_n(k, nlev[k]));
        }
        let mr = rest_factor.len();
        let y = &frame.y;

        let mut big_levels: Vec<BigLevel> = (0..nlev[big])
            .map(|_| BigLevel {
                n: 0.0,
                xsum: vec![0.0; p],
                ysum: 0.0,
                rest: Vec::new(),
            })
            .collect();
        let mut big_rest: Vec<std::collections::BTreeMap<usize, f64>> = vec![Default::default(); nlev[big]];
        let mut rr = DMatrix::zeros(mr, mr);
        let mut rx = DMatrix::zeros(mr, p);
        let mut ry = DVector::zeros(mr);
        let mut rest_of_row = Vec::with_capacity(groups.len());
        for i in 0..n {
            rest_of_row.clear();
            for k in 0..groups.len() {
                if k != big {
                    rest_of_row.push(offsets[k] + idx[k][i]);
                }
            }
            let g = idx[big][i];
            let bl = &mut big_levels[g];
            bl.n += 1.0;
            bl.ysum += y[i];
            for c in 0..p {
                bl.xsum[c] += x[(i, c)];
            }
            for &j in &rest_of_row {
                *big_rest[g].entry(j).or_default() += 1.0;
                for &l in &rest_of_row {
                    rr[(j, l)] += 1.0;
                }
                for c in 0..p {
                    rx[(j, c)] += x[(i, c)];
                }
                ry[j] += y[i];
            }
        }
        for (bl, m) in big_levels.iter_mut().zip(big_rest) {
            bl.rest = m.into_iter().collect();
        }
        let yv = DVector::from_column_slice(y);
        Suff {
            n,
            p,
            big,
            big_levels,
            rest_factor,
            rr,
            rx,
            ry,
            xtx: x.transpose() * x,
            xty: x.transpose() * &yv,
            yty: yv.dot(&yv),
        }
    }

    fn evaluate(&self, theta: &[f64]) -> Option<Eval> {
        let (p, mr) = (self.p, self.rest_factor.len());
        let m = mr + p;
        let sc: Vec<f64> = self.rest_factor.iter().map(|&k| theta[k]).collect();
        let tb = theta[self.big];

        let mut s = DMatrix::zeros(m, m);
        let mut b = DVector::zeros(m);
        for j in 0..mr {
            for l in 0..mr {
                s[(j, l)] = sc[j] * sc[l] * self.rr[(j, l)];
            }
            s[(j, j)] += 1.0;
            for c in 0..p {
                let v = sc[j] * self.rx[(j, c)];
                s[(j, mr + c)] = v;
                s[(mr + c, j)] = v;
            }
            b[j] = sc[j] * self.ry[j];
        }
        for c in 0..p {
            for d in 0..p {
                s[(mr + c, mr + d)] = self.xtx[(c, d)];
            }
            b[mr + c] = self.xty[c];
        }

        let mut logdet = 0.0;
        let mut r2 = self.yty;
        if tb > 0.0 {
            let mut cidx: Vec<usize> = Vec::new();
            let mut cval: Vec<f64> = Vec::new();
            for bl in &self.big_levels {
                let dg = tb * tb * bl.n + 1.0;
                logdet += dg.ln();
                let bg = tb * bl.ysum;
                r2 -= bg * bg / dg;
                cidx.clear();
                cval.clear();
                for &(j, cnt) in &bl.rest {
                    if sc[j] != 0.0 {
                        cidx.push(j);
                        cval.push(tb * sc[j] * cnt);
                    }
                }
                for c in 0..p {
                    cidx.push(mr + c);
                    cval.push(tb * bl.xsum[c]);
                }
                for (a, &ia) in cidx.iter().enumerate() {
                    let va = cval[a] / dg;
                    b[ia] -= va * bg;
                    for (bb, &ib) in cidx.iter().enumerate() {
                        s[(ia, ib)] -= va * cval[bb];
                    }
                }
            }
        }

        let chol = s.clone().cholesky()?;
        logdet += 2.0 * chol.l_dirty().diagonal().iter().take(m).map(|d| d.ln()).sum::<f64>();
        let sol = chol.solve(&b);
        r2 -= b.dot(&sol);
        let dof = (self.n - p) as f64;
        if !(r2 > 0.0) {
            return None;
        }
        let deviance = logdet + dof * (1.0 + (2.0 * PI * r2 / dof).ln());
        Some(Eval { deviance, r2, s, sol })
    }
}

/// Profiled REML deviance (−2 × restricted log-likelihood) at relative SDs
/// `theta`, ordered as `spec.random_intercepts`.
pub fn reml_deviance(frame: &ModelFrame, spec: &ModelSpec, theta: &[f64]) -> Result<f64> {
    spec.validate(frame)?;
    if theta.len() != spec.random_intercepts.len() || theta.iter().any(|t| !(*t >= 0.0)) {
        return Err(Error::InvalidConfig(
            "theta must hold one non-negative value per grouping".into(),
        ));
    }
    let x = frame.design(&spec.fixed_terms);
    let suff = Suff::build(frame, &spec.random_intercepts, &x);
    suff.evaluate(theta)
        .map(|e| e.deviance)
        .ok_or_else(|| Error::Numerical("REML system is not positive definite".into()))
}

/// Fits `spec` by REML.
///
/// A component on the zero boundary is not an error: the result is flagged
/// `singular`.
pub fn fit_lmm(frame: &ModelFrame, spec: &ModelSpec) -> Result<LmmFit> {
    spec.validate(frame)?;
    if spec.estimator != Estimator::RemlLmm {
        return Err(Error::InvalidSpec(format!("{}: estimator is not REML-LMM", spec.name)));
    }
    let p = spec.fixed_terms.len();
    if frame.len() <= p {
        return Err(Error::DegenerateSample(format!(
            "{} observations for {p} fixed effects",
            frame.len()
        )));
    }
    let x = frame.design(&spec.fixed_terms);
    check_full_rank(&x)?;
    let suff = Suff::build(frame, &spec.random_intercepts, &x);
    let k = spec.random_intercepts.len();
    let dev = |t: &[f64]| suff.evaluate(t).map_or(f64::INFINITY, |e| e.deviance);

    let max_evals = 400 * (k + 1) * (k + 1);
    let first = nelder_mead(dev, &vec![1.0; k], 0.25, 0.0, 1e-11, 1e-8, max_evals);
    let second = nelder_mead(dev, &first.x, 0.05, 0.0, 1e-12, 1e-9, max_evals);
    let mut evaluations = first.evaluations + second.evaluations;
    let converged = second.converged;
    let (mut theta, mut best) = if second.f <= first.f {
        (second.x, second.f)
    } else {
        (first.x, first.f)
    };

    // Nelder–Mead approaches the boundary only asymptotically.
    for j in 0..k {
        if theta[j] == 0.0 {
            continue;
        }
        let mut cand = theta.clone();
        cand[j] = 0.0;
        let f = dev(&cand);
        evaluations += 1;
        if f <= best + 1e-9 {
            theta = cand;
            best = best.min(f);
        }
    }
    if !best.is_finite() {
        return Err(Error::NonConvergence(format!(
            "{}: REML deviance is not finite",
            spec.name
        )));
    }

    let e = suff
        .evaluate(&theta)
        .ok_or_else(|| Error::Numerical("REML system is not positive definite".into()))?;
    let dof = (suff.n - p) as f64;
    let sigma2 = e.r2 / dof;
    let mr = suff.rest_factor.len();
    let beta: Vec<f64> = (0..p).map(|c| e.sol[mr + c]).collect();
    let chol =
        e.s.cholesky()
            .ok_or_else(|| Error::Numerical("REML system is not positive definite".into()))?;
    let se: Vec<f64> = (0..p)
        .map(|c| {
            let mut unit = DVector::zeros(mr + p);
            unit[mr + c] = 1.0;
            (sigma2 * chol.solve(&unit)[mr + c]).sqrt()
        })
        .collect();

    let sigma = sigma2.sqrt();
    let result = FitResult {
        model: spec.name.clone(),
        estimator: spec.estimator.name().to_string(),
        outcome: spec.outcome.name().to_string(),
        coefficients: wald_coefficients(&spec.fixed_terms, &beta, &se, None),
        variance_components: spec
            .random_intercepts
            .iter()
            .zip(&theta)
            .map(|(g, t)| (g.name().to_string(), t * sigma))
            .collect(),
        residual_sd: Some(sigma),
        n_obs: frame.len(),
        n_groups: group_counts(frame, &spec.random_intercepts),
        df: None,
        converged,
        singular: theta.iter().any(|t| *t < SINGULAR_TOL),
        log_restricted_likelihood: Some(-0.5 * e.deviance),
    };
    Ok(LmmFit {
        result,
        theta,
        deviance: e.deviance,
        evaluations,
    })
}
