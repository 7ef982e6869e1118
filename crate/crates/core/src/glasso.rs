//! Sparse precision-matrix estimation via the graphical lasso, and its
//! conversion into a conditional-dependence network.
//!
//! The solver is block coordinate descent over rows/columns of the working
//! covariance, each subproblem solved by cyclic coordinate-descent lasso.
//! The l1 penalty applies to off-diagonal precision entries only, so the
//! diagonal of the working covariance stays fixed at the sample variances.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::network::Network;
use crate::panel::TimeSeriesPanel;

/// Converged (or abandoned) graphical lasso estimate.
#[derive(Debug, Clone)]
pub struct GlassoFit {
    /// Estimated precision matrix.
    pub precision: DMatrix<f64>,
    /// Its inverse, the penalised covariance estimate.
    pub covariance: DMatrix<f64>,
    pub rho: f64,
    pub iterations: usize,
    pub converged: bool,
}

const MAX_INNER_SWEEPS: usize = 10_000;

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Cyclic coordinate descent for
/// `min_b 0.5 b' W11 b - s12' b + rho |b|_1`, warm-started from `beta`.
fn lasso_cd(w11: &DMatrix<f64>, s12: &DVector<f64>, rho: f64, beta: &mut DVector<f64>, tol: f64) {
    let p = beta.len();
    for _ in 0..MAX_INNER_SWEEPS {
        let mut max_delta = 0.0f64;
        for k in 0..p {
            let old = beta[k];
            let mut dot = 0.0;
            for l in 0..p {
                dot += w11[(k, l)] * beta[l];
            }
            let partial = s12[k] - (dot - w11[(k, k)] * old);
            let new = soft_threshold(partial, rho) / w11[(k, k)];
            if new != old {
                beta[k] = new;
                max_delta = max_delta.max((new - old).abs());
            }
        }
        if max_delta < tol {
            break;
        }
    }
}

fn check_symmetric(s: &DMatrix<f64>) -> Result<()> {
    let n = s.nrows();
    if s.ncols() != n {
        return Err(Error::InvalidInput("covariance must be square".into()));
    }
    let mut max_dev = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            max_dev = max_dev.max((s[(i, j)] - s[(j, i)]).abs());
        }
    }
    let scale = s.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    if max_dev > 1e-8 * scale {
        return Err(Error::NotSymmetric { max_dev });
    }
    Ok(())
}

/// Maximise `log det(T) - tr(S T) - rho * sum_{i != j} |T_ij|` over positive
/// definite precision matrices T.
///
/// Convergence is declared when the largest elementwise change in the
/// working covariance over one full sweep drops below `tol`; a fit that runs
/// out of iterations is returned with `converged = false`.
pub fn glasso_fit(
    s: &DMatrix<f64>,
    rho: f64,
    tol: f64,
    max_iter: usize,
) -> Result<GlassoFit> {
    check_symmetric(s)?;
    if rho < 0.0 {
        return Err(Error::InvalidInput("rho must be nonnegative".into()));
    }
    let n = s.nrows();
    for i in 0..n {
        if s[(i, i)] <= 0.0 {
            return Err(Error::Estimation(format!(
                "covariance diagonal entry {i} is not positive"
            )));
        }
    }
    if n == 1 {
        return Ok(GlassoFit {
            precision: DMatrix::from_element(1, 1, 1.0 / s[(0, 0)]),
            covariance: s.clone(),
            rho,
            iterations: 0,
            converged: true,
        });
    }

    let inner_tol = (tol * 1e-2).max(1e-12);
    let mut w = s.clone();
    // betas[j] holds the lasso coefficients of column j against the others
    let mut betas: Vec<DVector<f64>> = vec![DVector::zeros(n - 1); n];
    let mut w11 = DMatrix::zeros(n - 1, n - 1);
    let mut s12 = DVector::zeros(n - 1);

    let others = |j: usize| (0..n).filter(move |&k| k != j);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let mut max_delta = 0.0f64;
        for j in 0..n {
            for (a, ka) in others(j).enumerate() {
                s12[a] = s[(ka, j)];
                for (b, kb) in others(j).enumerate() {
                    w11[(a, b)] = w[(ka, kb)];
                }
            }
            lasso_cd(&w11, &s12, rho, &mut betas[j], inner_tol);
            let w12 = &w11 * &betas[j];
            for (a, ka) in others(j).enumerate() {
                max_delta = max_delta.max((w[(ka, j)] - w12[a]).abs());
                w[(ka, j)] = w12[a];
                w[(j, ka)] = w12[a];
            }
        }
        if max_delta < tol {
            converged = true;
            break;
        }
    }

    // Recover the precision column by column from W and the final betas.
    let mut theta = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut quad = 0.0;
        for (a, ka) in others(j).enumerate() {
            quad += w[(ka, j)] * betas[j][a];
        }
        let denom = w[(j, j)] - quad;
        if denom <= 0.0 {
            return Err(Error::Estimation(
                "graphical lasso lost positive definiteness".into(),
            ));
        }
        let theta_jj = 1.0 / denom;
        theta[(j, j)] = theta_jj;
        for (a, ka) in others(j).enumerate() {
            theta[(ka, j)] = -betas[j][a] * theta_jj;
        }
    }
    // exact symmetry for downstream consumers
    let theta = (&theta + theta.transpose()) * 0.5;

    Ok(GlassoFit {
        precision: theta,
        covariance: w,
        rho,
        iterations,
        converged,
    })
}

/// Penalised log-likelihood value for a candidate precision matrix.
pub fn glasso_objective(s: &DMatrix<f64>, precision: &DMatrix<f64>, rho: f64) -> f64 {
    let chol = match nalgebra::Cholesky::new(precision.clone()) {
        Some(c) => c,
        None => return f64::NEG_INFINITY,
    };
    let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let trace = (s * precision).trace();
    let mut l1 = 0.0;
    for i in 0..precision.nrows() {
        for j in 0..precision.ncols() {
            if i != j {
                l1 += precision[(i, j)].abs();
            }
        }
    }
    log_det - trace - rho * l1
}

/// Per-node standardisation (window mean, n-1 std) followed by the
/// zero-mean covariance `Z'Z / rows` of the standardised rows.
pub fn standardised_covariance(panel: &TimeSeriesPanel, start: usize, end: usize) -> Result<DMatrix<f64>> {
    let z = standardise_rows(panel, start, end, None)?;
    let rows = z.nrows() as f64;
    Ok(z.transpose() * &z / rows)
}

/// Standardise rows `[start, end)` of the panel per node. When `stats` is
/// given, those (mean, std) pairs are applied instead of being estimated
/// from the rows themselves (used for held-out folds).
fn standardise_rows(
    panel: &TimeSeriesPanel,
    start: usize,
    end: usize,
    stats: Option<&[(f64, f64)]>,
) -> Result<DMatrix<f64>> {
    let n = panel.n_nodes();
    let rows = end - start;
    if rows < 2 {
        return Err(Error::InvalidInput(
            "need at least two rows to standardise".into(),
        ));
    }
    let mut z = DMatrix::zeros(rows, n);
    for i in 0..n {
        let (mean, std) = match stats {
            Some(st) => st[i],
            None => window_stats(panel, start, end, i)?,
        };
        for t in 0..rows {
            z[(t, i)] = (panel.value(start + t, i) - mean) / std;
        }
    }
    Ok(z)
}

fn window_stats(panel: &TimeSeriesPanel, start: usize, end: usize, node: usize) -> Result<(f64, f64)> {
    let rows = (end - start) as f64;
    let mut mean = 0.0;
    for t in start..end {
        mean += panel.value(t, node);
    }
    mean /= rows;
    let mut ss = 0.0;
    for t in start..end {
        ss += (panel.value(t, node) - mean).powi(2);
    }
    let std = (ss / (rows - 1.0)).sqrt();
    if std == 0.0 {
        return Err(Error::ZeroStd {
            series: panel.node_ids()[node].clone(),
        });
    }
    Ok((mean, std))
}

/// Default penalty grid: 20 log-spaced values from `0.01 m` to `m`, where
/// `m` is the largest off-diagonal magnitude of the full-window covariance.
pub fn default_rho_grid(s_full: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = s_full.nrows();
    let mut m = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                m = m.max(s_full[(i, j)].abs());
            }
        }
    }
    if m <= 0.0 {
        return Err(Error::InvalidInput(
            "cannot build a penalty grid: no off-diagonal covariance".into(),
        ));
    }
    let lo = (0.01 * m).ln();
    let hi = m.ln();
    Ok((0..20)
        .map(|k| (lo + (hi - lo) * k as f64 / 19.0).exp())
        .collect())
}

/// Pick the penalty by k-fold cross-validation on contiguous row blocks of a
/// returns window: each candidate is fit on the standardised covariance of
/// the training rows and scored by the held-out Gaussian log-likelihood
/// `log det(T) - tr(S_held T)`. Ties keep the first (smallest) candidate.
pub fn select_rho(
    returns_window: &TimeSeriesPanel,
    n_folds: usize,
    grid: Option<&[f64]>,
) -> Result<f64> {
    let rows = returns_window.n_rows();
    let n = returns_window.n_nodes();
    if n_folds < 2 {
        return Err(Error::InvalidInput("need at least two folds".into()));
    }
    if rows < n_folds * n {
        return Err(Error::InvalidInput(format!(
            "window too short for cross-validation: {rows} rows < {n_folds} folds x {n} nodes"
        )));
    }
    let grid: Vec<f64> = match grid {
        Some(g) if g.is_empty() => {
            return Err(Error::InvalidInput("empty penalty grid".into()));
        }
        Some(g) => {
            if g.iter().any(|&r| r < 0.0) {
                return Err(Error::InvalidInput("negative penalty in grid".into()));
            }
            g.to_vec()
        }
        None => default_rho_grid(&standardised_covariance(returns_window, 0, rows)?)?,
    };

    let bounds: Vec<usize> = (0..=n_folds).map(|k| k * rows / n_folds).collect();
    let fold_scores: Vec<Vec<f64>> = (0..n_folds)
        .into_par_iter()
        .map(|fold| -> Result<Vec<f64>> {
            let (lo, hi) = (bounds[fold], bounds[fold + 1]);
            // training stats and covariance from the rows outside [lo, hi)
            let n_train = rows - (hi - lo);
            let mut train_stats = Vec::with_capacity(n);
            for i in 0..n {
                let mut mean = 0.0;
                for t in (0..lo).chain(hi..rows) {
                    mean += returns_window.value(t, i);
                }
                mean /= n_train as f64;
                let mut ss = 0.0;
                for t in (0..lo).chain(hi..rows) {
                    ss += (returns_window.value(t, i) - mean).powi(2);
                }
                let std = (ss / (n_train as f64 - 1.0)).sqrt();
                if std == 0.0 {
                    return Err(Error::ZeroStd {
                        series: returns_window.node_ids()[i].clone(),
                    });
                }
                train_stats.push((mean, std));
            }
            let mut s_train = DMatrix::zeros(n, n);
            for a in 0..n {
                for b in 0..n {
                    let mut acc = 0.0;
                    for t in (0..lo).chain(hi..rows) {
                        let za = (returns_window.value(t, a) - train_stats[a].0) / train_stats[a].1;
                        let zb = (returns_window.value(t, b) - train_stats[b].0) / train_stats[b].1;
                        acc += za * zb;
                    }
                    s_train[(a, b)] = acc / n_train as f64;
                }
            }
            let z_held = standardise_rows(returns_window, lo, hi, Some(&train_stats))?;
            let s_held = z_held.transpose() * &z_held / (hi - lo) as f64;
            let mut scores = Vec::with_capacity(grid.len());
            for &rho in &grid {
                let fit = glasso_fit(&s_train, rho, 1e-5, 200)?;
                let chol = nalgebra::Cholesky::new(fit.precision.clone()).ok_or_else(|| {
                    Error::Estimation("cross-validation precision not positive definite".into())
                })?;
                let log_det =
                    2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
                scores.push(log_det - (&s_held * &fit.precision).trace());
            }
            Ok(scores)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut best = (0, f64::NEG_INFINITY);
    for (k, _) in grid.iter().enumerate() {
        let mean: f64 = fold_scores.iter().map(|s| s[k]).sum::<f64>() / n_folds as f64;
        if mean > best.1 {
            best = (k, mean);
        }
    }
    Ok(grid[best.0])
}

/// Edges wherever the off-diagonal precision magnitude exceeds `zero_tol`.
pub fn to_network(fit: &GlassoFit, zero_tol: f64) -> Result<Network> {
    let n = fit.precision.nrows();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if fit.precision[(i, j)].abs() > zero_tol {
                edges.push((i, j));
            }
        }
    }
    Network::new(n, edges)
}
