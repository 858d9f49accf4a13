//! Dense symmetric-matrix primitives: Cholesky factorization, SPD inverses,
//! the l1 coordinate-descent inner solver, and multivariate normal sampling.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerances shared by the numeric kernels.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NumericsConfig {
    /// KKT residual threshold for `lasso_cov`.
    pub lasso_tol: f64,
    /// Sweep cap for `lasso_cov`.
    pub lasso_max_sweeps: usize,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        NumericsConfig {
            lasso_tol: 1e-6,
            lasso_max_sweeps: 10_000,
        }
    }
}

/// Dense symmetric matrix, full row-major storage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix {
    p: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(p: usize) -> Self {
        SymMatrix {
            p,
            data: vec![0.0; p * p],
        }
    }

    pub fn identity(p: usize) -> Self {
        let mut m = Self::zeros(p);
        for i in 0..p {
            m.data[i * p + i] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m.data[i * diag.len() + i] = v;
        }
        m
    }

    /// Builds from a row-major slice, symmetrizing as (A + A^T)/2.
    pub fn from_rows(p: usize, rows: &[f64]) -> Self {
        assert_eq!(rows.len(), p * p);
        let mut m = Self::zeros(p);
        for i in 0..p {
            for j in 0..p {
                m.data[i * p + j] = 0.5 * (rows[i * p + j] + rows[j * p + i]);
            }
        }
        m
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.p + j]
    }

    /// Sets both (i,j) and (j,i).
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.p + j] = v;
        self.data[j * self.p + i] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.p..(i + 1) * self.p]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn trace(&self) -> f64 {
        (0..self.p).map(|i| self.get(i, i)).sum()
    }

    /// max_{i,j} |A_ij - B_ij|
    pub fn max_abs_diff(&self, other: &SymMatrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// tr(self * other) for symmetric matrices: sum of elementwise products.
    pub fn trace_product(&self, other: &SymMatrix) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    /// Quadratic form v^T A v.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        let p = self.p;
        let mut acc = 0.0;
        for i in 0..p {
            let row = self.row(i);
            let mut s = 0.0;
            for j in 0..p {
                s += row[j] * v[j];
            }
            acc += v[i] * s;
        }
        acc
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Lower-triangular Cholesky factor of an SPD matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpdFactor {
    p: usize,
    lower: Vec<f64>,
}

impl SpdFactor {
    #[inline]
    pub fn order(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.lower[i * self.p + j]
    }

    /// Reconstructs L L^T.
    pub fn reconstruct(&self) -> SymMatrix {
        let p = self.p;
        let mut m = SymMatrix::zeros(p);
        for i in 0..p {
            for j in 0..=i {
                let mut s = 0.0;
                for k in 0..=j {
                    s += self.lower[i * p + k] * self.lower[j * p + k];
                }
                m.set(i, j, s);
            }
        }
        m
    }

    /// y = L z, applied in place to `z`.
    fn apply_lower(&self, z: &mut [f64]) {
        let p = self.p;
        for i in (0..p).rev() {
            let mut s = 0.0;
            for k in 0..=i {
                s += self.lower[i * p + k] * z[k];
            }
            z[i] = s;
        }
    }
}

/// Cholesky factorization with log-determinant.
///
/// Fails with `NotPositiveDefinite` on the first non-positive pivot; callers
/// must not regularize here.
pub fn cholesky_logdet(m: &SymMatrix) -> Result<(SpdFactor, f64)> {
    let p = m.order();
    let mut l = vec![0.0; p * p];
    let mut logdet = 0.0;
    for i in 0..p {
        for j in 0..=i {
            let mut s = m.get(i, j);
            for k in 0..j {
                s -= l[i * p + k] * l[j * p + k];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return Err(Error::NotPositiveDefinite { pivot: i, value: s });
                }
                let d = s.sqrt();
                l[i * p + i] = d;
                logdet += 2.0 * d.ln();
            } else {
                l[i * p + j] = s / l[j * p + j];
            }
        }
    }
    Ok((SpdFactor { p, lower: l }, logdet))
}

/// Inverse of the factored matrix: (L L^T)^{-1} = L^{-T} L^{-1}.
pub fn spd_inverse(f: &SpdFactor) -> SymMatrix {
    let p = f.p;
    // Invert the lower-triangular factor by forward substitution.
    let mut linv = vec![0.0; p * p];
    for j in 0..p {
        linv[j * p + j] = 1.0 / f.lower[j * p + j];
        for i in (j + 1)..p {
            let mut s = 0.0;
            for k in j..i {
                s += f.lower[i * p + k] * linv[k * p + j];
            }
            linv[i * p + j] = -s / f.lower[i * p + i];
        }
    }
    let mut inv = SymMatrix::zeros(p);
    for i in 0..p {
        for j in 0..=i {
            let mut s = 0.0;
            for k in i..p {
                s += linv[k * p + i] * linv[k * p + j];
            }
            inv.set(i, j, s);
        }
    }
    inv
}

#[inline]
fn soft_threshold(x: f64, lambda: f64) -> f64 {
    if x > lambda {
        x - lambda
    } else if x < -lambda {
        x + lambda
    } else {
        0.0
    }
}

/// KKT residual of min 1/2 b^T V b - s^T b + lambda |b|_1 at `beta`,
/// with `resid` = V beta - s.
fn lasso_kkt_residual(beta: &[f64], resid: &[f64], lambda: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for (b, r) in beta.iter().zip(resid) {
        let v = if *b > 0.0 {
            (r + lambda).abs()
        } else if *b < 0.0 {
            (r - lambda).abs()
        } else {
            (r.abs() - lambda).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

/// Cyclic coordinate descent for min 1/2 b^T V b - s^T b + lambda |b|_1,
/// warm-started from the incoming `beta`. Terminates on the coordinate-wise
/// KKT residual.
pub fn lasso_cov_warm(
    v: &SymMatrix,
    s: &[f64],
    lambda: f64,
    beta: &mut [f64],
    cfg: &NumericsConfig,
) -> Result<()> {
    let k = s.len();
    assert_eq!(v.order(), k);
    assert_eq!(beta.len(), k);
    if k == 0 {
        return Ok(());
    }
    // resid = V beta - s, maintained incrementally.
    let mut resid = vec![0.0; k];
    for i in 0..k {
        let row = v.row(i);
        let mut acc = -s[i];
        for j in 0..k {
            acc += row[j] * beta[j];
        }
        resid[i] = acc;
    }
    let mut last = f64::INFINITY;
    for sweep in 0..cfg.lasso_max_sweeps {
        for j in 0..k {
            let vjj = v.get(j, j);
            if vjj <= 0.0 {
                return Err(Error::NotPositiveDefinite {
                    pivot: j,
                    value: vjj,
                });
            }
            let c = vjj * beta[j] - resid[j];
            let new = soft_threshold(c, lambda) / vjj;
            let delta = new - beta[j];
            if delta != 0.0 {
                beta[j] = new;
                let row = v.row(j);
                for i in 0..k {
                    resid[i] += delta * row[i];
                }
            }
        }
        last = lasso_kkt_residual(beta, &resid, lambda);
        if last <= cfg.lasso_tol {
            return Ok(());
        }
        if sweep + 1 == cfg.lasso_max_sweeps {
            break;
        }
    }
    Err(Error::NoConvergence {
        what: "lasso_cov",
        residual: last,
        iters: cfg.lasso_max_sweeps,
    })
}

/// Covariance-form lasso from a cold start.
pub fn lasso_cov(v: &SymMatrix, s: &[f64], lambda: f64, cfg: &NumericsConfig) -> Result<Vec<f64>> {
    let mut beta = vec![0.0; s.len()];
    lasso_cov_warm(v, s, lambda, &mut beta, cfg)?;
    Ok(beta)
}

/// Draws `count` samples mean + L z with z standard normal; row-major
/// `count x p` output. Pure function of (mean, factor, count, rng state).
pub fn sample_mvn<R: Rng>(mean: &[f64], cov_factor: &SpdFactor, count: usize, rng: &mut R) -> Vec<f64> {
    let p = mean.len();
    assert_eq!(cov_factor.order(), p);
    let mut out = vec![0.0; count * p];
    for r in 0..count {
        let row = &mut out[r * p..(r + 1) * p];
        for z in row.iter_mut() {
            *z = rng.sample(StandardNormal);
        }
        cov_factor.apply_lower(row);
        for (o, m) in row.iter_mut().zip(mean) {
            *o += m;
        }
    }
    out
}
