//! Bounded Nelder–Mead for the variance-component search.

/// Outcome of a minimization.
#[derive(Debug, Clone)]
pub(crate) struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Minimizes `f` over the box `x ≥ lower` by Nelder–Mead with points
/// clamped onto the box. Stops when both the spread of simplex values is
/// below `ftol` and the simplex diameter is below `xtol`.
pub(crate) fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    step: f64,
    lower: f64,
    ftol: f64,
    xtol: f64,
    max_evals: usize,
) -> Minimum {
    let n = x0.len();
    let clamp = |x: &mut Vec<f64>| x.iter_mut().for_each(|v| *v = v.max(lower));
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let mut start = x0.to_vec();
    clamp(&mut start);
    let f0 = eval(&start, &mut evals);
    simplex.push((start.clone(), f0));
    for i in 0..n {
        let mut x = start.clone();
        // Step away from the bound when the start sits on it.
        x[i] = if x[i] - step < lower { x[i] + step } else { x[i] - step };
        let fx = eval(&x, &mut evals);
        simplex.push((x, fx));
    }

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut converged = false;
    while evals < max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let fspread = simplex[n].1 - simplex[0].1;
        let diam = simplex[1..]
            .iter()
            .map(|(x, _)| {
                x.iter()
                    .zip(&simplex[0].0)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if (fspread.is_finite() && fspread <= ftol && diam <= xtol) || n == 0 {
            converged = true;
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|(x, _)| x[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64, worst: &[f64]| {
            let mut x: Vec<f64> = centroid.iter().zip(worst).map(|(c, w)| c + t * (c - w)).collect();
            clamp(&mut x);
            x
        };
        let worst = simplex[n].0.clone();
        let xr = along(alpha, &worst);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            let xe = along(gamma, &worst);
            let fe = eval(&xe, &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < simplex[n].1 {
            let x = along(rho, &worst);
            let v = eval(&x, &mut evals);
            (x, v)
        } else {
            let x = along(-rho, &worst);
            let v = eval(&x, &mut evals);
            (x, v)
        };
        if fc < simplex[n].1.min(fr) {
            simplex[n] = (xc, fc);
            continue;
        }
        let best = simplex[0].0.clone();
        for item in simplex.iter_mut().skip(1) {
            let mut x: Vec<f64> = best.iter().zip(&item.0).map(|(b, v)| b + sigma * (v - b)).collect();
            clamp(&mut x);
            let fx = eval(&x, &mut evals);
            *item = (x, fx);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, f) = simplex.swap_remove(0);
    Minimum {
        x,
        f,
        evaluations: evals,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_interior_minimum() {
        let m = nelder_mead(
            |x| (x[0] - 1.5).powi(2) + 3.0 * (x[1] - 0.25).powi(2) + 0.5 * x[0] * x[1],
            &[1.0, 1.0],
            0.3,
            f64::NEG_INFINITY,
            1e-14,
            1e-9,
            10_000,
        );
        assert!(m.converged);
        // Stationary point: 2(x0 − 1.5) + x1/2 = 0, 6(x1 − 0.25) + x0/2 = 0.
        let x0 = 69.0 / 47.0;
        let x1 = 0.25 - x0 / 12.0;
        assert!((m.x[0] - x0).abs() < 1e-6, "{:?} vs {x0}", m.x);
        assert!((m.x[1] - x1).abs() < 1e-6);
    }

    #[test]
    fn respects_lower_bound() {
        let m = nelder_mead(|x| (x[0] + 1.0).powi(2), &[1.0], 0.5, 0.0, 1e-14, 1e-10, 10_000);
        assert_eq!(m.x[0], 0.0);
    }
}
