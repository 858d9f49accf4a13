//! Graphical lasso: l1-penalized precision estimation via row-wise coordinate
//! descent, the regularization path with warm starts, held-out model
//! selection, and sparsity-constrained refitting.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{cholesky_logdet, lasso_cov_warm, spd_inverse, NumericsConfig, SymMatrix};

/// Unordered vertex pairs (j, k) with j < k.
pub type EdgeSet = BTreeSet<(usize, usize)>;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GlassoConfig {
    /// Stationarity residual threshold for the penalized solve.
    pub tol: f64,
    /// Outer iteration cap.
    pub max_outer: usize,
    /// |omega_jk| above this counts as an edge.
    pub zero_thresh: f64,
    /// Optimality threshold for the pattern-constrained refit.
    pub refit_tol: f64,
    pub numerics: NumericsConfig,
}

impl Default for GlassoConfig {
    fn default() -> Self {
        GlassoConfig {
            tol: 1e-5,
            max_outer: 500,
            zero_thresh: 1e-8,
            refit_tol: 1e-5,
            numerics: NumericsConfig::default(),
        }
    }
}

/// A fitted precision matrix with its inverse, penalty level, and edge set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrecisionEstimate {
    pub omega: SymMatrix,
    pub sigma: SymMatrix,
    pub lambda: f64,
    pub edges: EdgeSet,
    pub log_det: f64,
}

impl PrecisionEstimate {
    /// tr(S omega) - log |omega|: the unpenalized Gaussian risk at S.
    pub fn gaussian_risk(&self, s: &SymMatrix) -> f64 {
        s.trace_product(&self.omega) - self.log_det
    }

    /// Full penalized objective tr(S omega) - log|omega| + lambda |omega|_1
    /// with the diagonal included in the penalty.
    pub fn objective(&self, s: &SymMatrix, lambda: f64) -> f64 {
        let p = self.omega.order();
        let mut l1 = 0.0;
        for i in 0..p {
            for j in 0..p {
                l1 += self.omega.get(i, j).abs();
            }
        }
        self.gaussian_risk(s) + lambda * l1
    }
}

pub fn edges_of(omega: &SymMatrix, zero_thresh: f64) -> EdgeSet {
    let p = omega.order();
    let mut edges = EdgeSet::new();
    for j in 0..p {
        for k in (j + 1)..p {
            if omega.get(j, k).abs() > zero_thresh {
                edges.insert((j, k));
            }
        }
    }
    edges
}

/// Path endpoint: max off-diagonal |S_ij|, floored at 1e-3.
pub fn lambda_max(s: &SymMatrix) -> f64 {
    let p = s.order();
    let mut m: f64 = 0.0;
    for i in 0..p {
        for j in (i + 1)..p {
            m = m.max(s.get(i, j).abs());
        }
    }
    if m > 0.0 {
        m
    } else {
        1e-3
    }
}

/// Copies W with row/column `j` removed into `v`, and column `j` of `src`
/// (minus the diagonal) into `s12`.
fn extract_column_problem(w: &SymMatrix, src: &SymMatrix, j: usize, v: &mut SymMatrix, s12: &mut [f64]) {
    let p = w.order();
    let mut r = 0;
    for i in 0..p {
        if i == j {
            continue;
        }
        s12[r] = src.get(i, j);
        let mut c = 0;
        for k in 0..=i {
            if k == j {
                continue;
            }
            let val = w.get(i, k);
            v.set(r, c, val);
            c += 1;
        }
        r += 1;
    }
}

/// Writes the off-diagonal column j of W from w12 (length p-1).
fn store_column(w: &mut SymMatrix, j: usize, w12: &[f64]) {
    let p = w.order();
    let mut r = 0;
    for i in 0..p {
        if i == j {
            continue;
        }
        w.set(i, j, w12[r]);
        r += 1;
    }
}

/// Stationarity residual of the penalized objective at `omega` with
/// `sigma` = omega^{-1}: on nonzeros |S - Sigma + lambda sign|, on zeros
/// the excess of |S - Sigma| over lambda.
fn stationarity_residual(s: &SymMatrix, omega: &SymMatrix, sigma: &SymMatrix, lambda: f64, zero_thresh: f64) -> f64 {
    let p = s.order();
    let mut worst: f64 = 0.0;
    for i in 0..p {
        for j in 0..=i {
            let g = s.get(i, j) - sigma.get(i, j);
            let o = omega.get(i, j);
            let v = if o.abs() > zero_thresh {
                (g + lambda * o.signum()).abs()
            } else {
                (g.abs() - lambda).max(0.0)
            };
            worst = worst.max(v);
        }
    }
    worst
}

struct RecoveredOmega {
    omega: SymMatrix,
    sigma: SymMatrix,
    log_det: f64,
}

/// Rebuilds omega from the working covariance W and the per-column betas,
/// then inverts it for the stationarity check.
fn recover_omega(w: &SymMatrix, betas: &[Vec<f64>]) -> Result<RecoveredOmega> {
    let p = w.order();
    let mut omega = SymMatrix::zeros(p);
    let mut v = SymMatrix::zeros(p - 1);
    let mut s12 = vec![0.0; p - 1];
    for j in 0..p {
        extract_column_problem(w, w, j, &mut v, &mut s12);
        let beta = &betas[j];
        let mut dot = 0.0;
        for r in 0..p - 1 {
            let row = v.row(r);
            let mut w12r = 0.0;
            for c in 0..p - 1 {
                w12r += row[c] * beta[c];
            }
            dot += w12r * beta[r];
        }
        let denom = w.get(j, j) - dot;
        if !(denom > 0.0) {
            return Err(Error::NotPositiveDefinite { pivot: j, value: denom });
        }
        let ojj = 1.0 / denom;
        // Average with any previously stored symmetric counterpart.
        let prev = omega.get(j, j);
        omega.set(j, j, if prev == 0.0 { ojj } else { 0.5 * (prev + ojj) });
        let mut r = 0;
        for i in 0..p {
            if i == j {
                continue;
            }
            let val = -beta[r] * ojj;
            let prev = omega.get(i, j);
            omega.set(i, j, if prev == 0.0 { val } else { 0.5 * (prev + val) });
            r += 1;
        }
    }
    let (f, log_det) = cholesky_logdet(&omega)?;
    let sigma = spd_inverse(&f);
    Ok(RecoveredOmega { omega, sigma, log_det })
}

/// Solves min_{Omega > 0} tr(S Omega) - log|Omega| + lambda |Omega|_1 with
/// the diagonal penalized, by the row-wise lasso decomposition.
pub fn glasso_solve(
    s: &SymMatrix,
    lambda: f64,
    warm: Option<&PrecisionEstimate>,
    cfg: &GlassoConfig,
) -> Result<PrecisionEstimate> {
    let p = s.order();
    if lambda == 0.0 {
        let (f, _) = cholesky_logdet(s)?;
        let omega = spd_inverse(&f);
        let edges = edges_of(&omega, cfg.zero_thresh);
        let (_, omega_logdet) = cholesky_logdet(&omega)?;
        return Ok(PrecisionEstimate {
            omega,
            sigma: s.clone(),
            lambda,
            edges,
            log_det: omega_logdet,
        });
    }
    assert!(lambda > 0.0, "negative lambda");
    if p == 1 {
        let ojj = 1.0 / (s.get(0, 0) + lambda);
        let mut omega = SymMatrix::zeros(1);
        omega.set(0, 0, ojj);
        let mut sigma = SymMatrix::zeros(1);
        sigma.set(0, 0, 1.0 / ojj);
        return Ok(PrecisionEstimate {
            omega,
            sigma,
            lambda,
            edges: EdgeSet::new(),
            log_det: ojj.ln(),
        });
    }

    let mut w = s.clone();
    for i in 0..p {
        w.set(i, i, s.get(i, i) + lambda);
    }
    let mut betas: Vec<Vec<f64>> = match warm {
        Some(est) if est.omega.order() == p => (0..p)
            .map(|j| {
                let ojj = est.omega.get(j, j);
                (0..p)
                    .filter(|&i| i != j)
                    .map(|i| if ojj != 0.0 { -est.omega.get(i, j) / ojj } else { 0.0 })
                    .collect()
            })
            .collect(),
        _ => vec![vec![0.0; p - 1]; p],
    };

    let mut v = SymMatrix::zeros(p - 1);
    let mut s12 = vec![0.0; p - 1];
    let mut w12 = vec![0.0; p - 1];
    let mut last_residual = f64::INFINITY;

    for _outer in 0..cfg.max_outer {
        for j in 0..p {
            extract_column_problem(&w, s, j, &mut v, &mut s12);
            lasso_cov_warm(&v, &s12, lambda, &mut betas[j], &cfg.numerics)?;
            for r in 0..p - 1 {
                let row = v.row(r);
                let mut acc = 0.0;
                for c in 0..p - 1 {
                    acc += row[c] * betas[j][c];
                }
                w12[r] = acc;
            }
            store_column(&mut w, j, &w12);
        }
        match recover_omega(&w, &betas) {
            Ok(rec) => {
                let resid = stationarity_residual(s, &rec.omega, &rec.sigma, lambda, cfg.zero_thresh);
                last_residual = resid;
                if resid <= cfg.tol {
                    let edges = edges_of(&rec.omega, cfg.zero_thresh);
                    return Ok(PrecisionEstimate {
                        omega: rec.omega,
                        sigma: rec.sigma,
                        lambda,
                        edges,
                        log_det: rec.log_det,
                    });
                }
            }
            // Interim iterate not yet SPD; keep sweeping.
            Err(Error::NotPositiveDefinite { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Err(Error::NoConvergence {
        what: "glasso_solve",
        residual: last_residual,
        iters: cfg.max_outer,
    })
}

/// A solved regularization path, sparsest first.
#[derive(Debug, Clone)]
pub struct RegPath {
    /// The training covariance the path was fit on.
    pub source: SymMatrix,
    pub lambdas: Vec<f64>,
    pub estimates: Vec<PrecisionEstimate>,
}

/// Log-spaced path from lambda_max(S) down to ratio * lambda_max(S), each
/// solve warm-started from its predecessor.
pub fn reg_path(s: &SymMatrix, num_lambdas: usize, ratio: f64, cfg: &GlassoConfig) -> Result<RegPath> {
    assert!(num_lambdas >= 2, "need at least two lambdas");
    assert!(ratio > 0.0 && ratio < 1.0, "ratio must be in (0,1)");
    let lmax = lambda_max(s);
    let lambdas: Vec<f64> = (0..num_lambdas)
        .map(|i| lmax * ratio.powf(i as f64 / (num_lambdas - 1) as f64))
        .collect();
    let mut estimates = Vec::with_capacity(num_lambdas);
    let mut warm: Option<&PrecisionEstimate> = None;
    for &lambda in &lambdas {
        let est = glasso_solve(s, lambda, warm, cfg).map_err(|e| Error::SolverAtLambda {
            lambda,
            source: Box::new(e),
        })?;
        estimates.push(est);
        warm = estimates.last();
    }
    Ok(RegPath {
        source: s.clone(),
        lambdas,
        estimates,
    })
}

/// Unpenalized Gaussian MLE constrained to a sparsity pattern: maximizes
/// -tr(S Omega) + log|Omega| subject to Omega_jk = 0 off `edges`.
pub fn refit_pattern(s: &SymMatrix, edges: &EdgeSet, cfg: &GlassoConfig) -> Result<PrecisionEstimate> {
    let p = s.order();
    for i in 0..p {
        if s.get(i, i) <= 0.0 {
            return Err(Error::Infeasible(format!(
                "diagonal entry {i} of S is {}, no SPD completion",
                s.get(i, i)
            )));
        }
    }
    if p == 1 {
        let ojj = 1.0 / s.get(0, 0);
        let mut omega = SymMatrix::zeros(1);
        omega.set(0, 0, ojj);
        return Ok(PrecisionEstimate {
            omega,
            sigma: s.clone(),
            lambda: 0.0,
            edges: EdgeSet::new(),
            log_det: ojj.ln(),
        });
    }

    // Free coordinates of column j, indexed in the reduced (p-1) system.
    let free: Vec<Vec<usize>> = (0..p)
        .map(|j| {
            let mut f = Vec::new();
            let mut r = 0;
            for i in 0..p {
                if i == j {
                    continue;
                }
                let key = (i.min(j), i.max(j));
                if edges.contains(&key) {
                    f.push(r);
                }
                r += 1;
            }
            f
        })
        .collect();

    let mut w = s.clone();
    let mut betas: Vec<Vec<f64>> = vec![vec![0.0; p - 1]; p];
    let mut v = SymMatrix::zeros(p - 1);
    let mut s12 = vec![0.0; p - 1];
    let mut w12 = vec![0.0; p - 1];
    let mut last_residual = f64::INFINITY;

    for _outer in 0..cfg.max_outer {
        for j in 0..p {
            let nf = free[j].len();
            if nf > 0 {
                extract_column_problem(&w, s, j, &mut v, &mut s12);
                // Reduced unconstrained quadratic over the free coordinates.
                let mut vf = SymMatrix::zeros(nf);
                let mut sf = vec![0.0; nf];
                for (a, &ra) in free[j].iter().enumerate() {
                    sf[a] = s12[ra];
                    for (b, &rb) in free[j].iter().enumerate().take(a + 1) {
                        vf.set(a, b, v.get(ra, rb));
                    }
                }
                let mut bf: Vec<f64> = free[j].iter().map(|&r| betas[j][r]).collect();
                lasso_cov_warm(&vf, &sf, 0.0, &mut bf, &cfg.numerics)?;
                for (a, &r) in free[j].iter().enumerate() {
                    betas[j][r] = bf[a];
                }
                for r in 0..p - 1 {
                    let row = v.row(r);
                    let mut acc = 0.0;
                    for &c in &free[j] {
                        acc += row[c] * betas[j][c];
                    }
                    w12[r] = acc;
                }
            } else {
                w12.iter_mut().for_each(|x| *x = 0.0);
            }
            store_column(&mut w, j, &w12);
        }
        match recover_omega(&w, &betas) {
            Ok(rec) => {
                // Optimality: Sigma matches S on the diagonal and on edges.
                let mut resid: f64 = 0.0;
                for i in 0..p {
                    resid = resid.max((rec.sigma.get(i, i) - s.get(i, i)).abs());
                }
                for &(a, b) in edges {
                    resid = resid.max((rec.sigma.get(a, b) - s.get(a, b)).abs());
                }
                last_residual = resid;
                if resid <= cfg.refit_tol {
                    let mut omega = rec.omega;
                    // Snap constrained entries to exact zeros.
                    for i in 0..p {
                        for jj in (i + 1)..p {
                            if !edges.contains(&(i, jj)) {
                                omega.set(i, jj, 0.0);
                            }
                        }
                    }
                    let (f, log_det) = cholesky_logdet(&omega)?;
                    let sigma = spd_inverse(&f);
                    return Ok(PrecisionEstimate {
                        omega,
                        sigma,
                        lambda: 0.0,
                        edges: edges.clone(),
                        log_det,
                    });
                }
            }
            Err(Error::NotPositiveDefinite { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Err(Error::NoConvergence {
        what: "refit_pattern",
        residual: last_residual,
        iters: cfg.max_outer,
    })
}

/// Picks the path entry minimizing held-out Gaussian risk. `heldout_rows` are
/// held-out responses already centered about the training mean, row-major
/// m x p. Ties break toward larger lambda; with no usable risk (or no
/// held-out rows) the sparsest entry wins.
pub fn select_by_heldout(
    path: &RegPath,
    heldout_rows: &[f64],
    refit: bool,
    cfg: &GlassoConfig,
) -> Result<PrecisionEstimate> {
    assert!(!path.estimates.is_empty(), "empty regularization path");
    let p = path.source.order();
    let m = heldout_rows.len() / p.max(1);
    let mut s_out = SymMatrix::zeros(p);
    if m > 0 {
        for r in heldout_rows.chunks(p) {
            for i in 0..p {
                for j in 0..=i {
                    let v = s_out.get(i, j) + r[i] * r[j];
                    s_out.set(i, j, v);
                }
            }
        }
        let inv = 1.0 / m as f64;
        let scaled = SymMatrix::from_rows(p, &s_out.as_slice().iter().map(|v| v * inv).collect::<Vec<_>>());
        s_out = scaled;
    }

    let mut best: Option<(f64, PrecisionEstimate)> = None;
    for est in &path.estimates {
        let candidate = if refit {
            match refit_pattern(&path.source, &est.edges, cfg) {
                Ok(r) => r,
                // Unrefittable pattern: skip this path entry.
                Err(Error::NoConvergence { .. }) | Err(Error::Infeasible(_)) | Err(Error::NotPositiveDefinite { .. }) => continue,
                Err(e) => return Err(e),
            }
        } else {
            est.clone()
        };
        let risk = if m > 0 {
            candidate.gaussian_risk(&s_out)
        } else {
            f64::NAN
        };
        match &best {
            Some((b, _)) if !(risk < *b) => {}
            _ if risk.is_finite() => best = Some((risk, candidate)),
            _ => {}
        }
    }
    match best {
        Some((_, est)) => Ok(est),
        None => {
            // All risks non-finite: fall back to the sparsest entry.
            let est = &path.estimates[0];
            if refit {
                refit_pattern(&path.source, &est.edges, cfg)
            } else {
                Ok(est.clone())
            }
        }
    }
}
