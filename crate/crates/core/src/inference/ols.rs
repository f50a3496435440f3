//! OLS with CR2 (bias-reduced linearization) cluster-robust covariance.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{check_full_rank, group_counts, wald_coefficients, Estimator, FitResult, ModelFrame, ModelSpec};
use crate::error::{Error, Result};

/// Eigenvalues of `I − H_gg` at or below this are treated as zero.
const PINV_TOL: f64 = 1e-12;

/// OLS point estimates with CR2 standard errors and t tests on
/// `clusters − 1` degrees of freedom.
pub fn fit_ols_clustered(frame: &ModelFrame, spec: &ModelSpec) -> Result<FitResult> {
    spec.validate(frame)?;
    let Estimator::OlsCr2 { cluster } = spec.estimator else {
        return Err(Error::InvalidSpec(format!("{}: estimator is not OLS-CR2", spec.name)));
    };
    let x = frame.design(&spec.fixed_terms);
    check_full_rank(&x)?;
    let y = DVector::from_column_slice(&frame.y);
    let gi = &frame.groups[&cluster];
    let n_clusters = gi.n_levels();
    if n_clusters < 2 {
        return Err(Error::DegenerateSample("CR2 needs at least two clusters".into()));
    }
    let (beta, vcov) = ols_cr2(&x, &y, &gi.index, n_clusters)?;
    let se: Vec<f64> = (0..beta.len()).map(|j| vcov[(j, j)].max(0.0).sqrt()).collect();
    let resid = &y - &x * &beta;
    let df = (n_clusters - 1) as f64;
    Ok(FitResult {
        model: spec.name.clone(),
        estimator: spec.estimator.name().to_string(),
        outcome: spec.outcome.name().to_string(),
        coefficients: wald_coefficients(&spec.fixed_terms, beta.as_slice(), &se, Some(df)),
        variance_components: Default::default(),
        residual_sd: Some((resid.dot(&resid) / (frame.len() - beta.len()) as f64).sqrt()),
        n_obs: frame.len(),
        n_groups: group_counts(frame, &[cluster]),
        df: Some(df),
        converged: true,
        singular: false,
        log_restricted_likelihood: None,
    })
}

/// `(β̂, V_CR2)` for design `x`, response `y` and cluster index per row.
pub fn ols_cr2(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    cluster: &[usize],
    n_clusters: usize,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let p = x.ncols();
    let bread = (x.transpose() * x).try_inverse().ok_or(Error::RankDeficientDesign {
        rank: p - 1,
        columns: p,
    })?;
    let beta = &bread * x.transpose() * y;
    let resid = y - x * &beta;

    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n_clusters];
    for (i, &g) in cluster.iter().enumerate() {
        rows[g].push(i);
    }
    let mut meat = DMatrix::<f64>::zeros(p, p);
    for r in rows.iter().filter(|r| !r.is_empty()) {
        let xg = x.select_rows(r);
        let eg = DVector::from_iterator(r.len(), r.iter().map(|&i| resid[i]));
        let h = &xg * &bread * xg.transpose();
        let ig = DMatrix::<f64>::identity(r.len(), r.len()) - h;
        let a = inv_sqrt_psd(ig);
        let u = xg.transpose() * (a * eg);
        meat += &u * u.transpose();
    }
    let v = &bread * meat * &bread;
    Ok((beta, (&v + v.transpose()) * 0.5))
}

/// Symmetric `M^{-1/2}` with eigenvalues `≤ PINV_TOL` mapped to zero.
fn inv_sqrt_psd(m: DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m);
    let d = eig.eigenvalues.map(|l| if l > PINV_TOL { 1.0 / l.sqrt() } else { 0.0 });
    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singletons_reduce_to_hc2() {
        let x = DMatrix::from_row_slice(6, 2, &[1.0, 0.1, 1.0, 0.5, 1.0, 0.9, 1.0, 1.7, 1.0, 2.2, 1.0, 3.0]);
        let y = DVector::from_column_slice(&[0.2, 0.4, 1.1, 1.3, 2.4, 2.9]);
        let idx: Vec<usize> = (0..6).collect();
        let (beta, v) = ols_cr2(&x, &y, &idx, 6).unwrap();
        let bread = (x.transpose() * &x).try_inverse().unwrap();
        let e = &y - &x * &beta;
        let mut meat = DMatrix::zeros(2, 2);
        for i in 0..6 {
            let xi = x.row(i).transpose();
            let h = (xi.transpose() * &bread * &xi)[(0, 0)];
            meat += &xi * xi.transpose() * (e[i] * e[i] / (1.0 - h));
        }
        let hc2 = &bread * meat * &bread;
        assert!((v - hc2).abs().max() < 1e-14);
    }

    #[test]
    fn covariance_is_symmetric_psd() {
        let n = 30;
        let x = DMatrix::from_fn(n, 3, |i, j| match j {
            0 => 1.0,
            1 => ((i * 7) % 11) as f64 / 11.0,
            _ => ((i * 3) % 5) as f64,
        });
        let y = DVector::from_fn(n, |i, _| ((i * 13) % 17) as f64 / 17.0);
        let idx: Vec<usize> = (0..n).map(|i| i / 4).collect();
        let (_, v) = ols_cr2(&x, &y, &idx, 8).unwrap();
        assert_eq!(v, v.transpose());
        assert!(SymmetricEigen::new(v).eigenvalues.iter().all(|l| *l > -1e-14));
    }
}
