//! Alternative estimation strategies: a joint-Gaussian parametric fit whose
//! graph is constant in x, and a kernel-smoothing fit local to one point.

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::glasso::{glasso_solve, GlassoConfig, PrecisionEstimate};
use crate::numerics::SymMatrix;

/// Row-major (r x k) * (k x c) product.
fn mat_mul(a: &[f64], b: &[f64], r: usize, k: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for l in 0..k {
            let av = a[i * k + l];
            if av == 0.0 {
                continue;
            }
            for j in 0..c {
                out[i * c + j] += av * b[l * c + j];
            }
        }
    }
    out
}

/// The conditional covariance of Y given X implied by the joint sample
/// covariance, with the X-block precision estimated by glasso at `lambda_x`:
/// Sigma_Y - Sigma_YX OmegaHat_X Sigma_XY.
pub fn conditional_covariance(
    data: &Dataset,
    lambda_x: f64,
    cfg: &GlassoConfig,
) -> Result<SymMatrix> {
    let n = data.len();
    if n < 2 {
        return Err(Error::Data("need n > 1 for a joint covariance".into()));
    }
    let d = data.covariate_dim();
    let p = data.response_dim();
    let q = d + p;
    let nf = n as f64;

    let mut mean = vec![0.0; q];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(data.x_row(i).iter().chain(data.y_row(i))) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= nf;
    }
    let mut joint = vec![0.0; q * q];
    for i in 0..n {
        let row: Vec<f64> = data
            .x_row(i)
            .iter()
            .chain(data.y_row(i))
            .zip(&mean)
            .map(|(v, m)| v - m)
            .collect();
        for a in 0..q {
            for b in 0..q {
                joint[a * q + b] += row[a] * row[b] / nf;
            }
        }
    }

    let mut s_x = SymMatrix::zeros(d);
    for a in 0..d {
        for b in 0..=a {
            s_x.set(a, b, joint[a * q + b]);
        }
    }
    let mut s_y = SymMatrix::zeros(p);
    for a in 0..p {
        for b in 0..=a {
            s_y.set(a, b, joint[(d + a) * q + d + b]);
        }
    }
    // Sigma_YX is p x d.
    let mut s_yx = vec![0.0; p * d];
    for a in 0..p {
        for b in 0..d {
            s_yx[a * d + b] = joint[(d + a) * q + b];
        }
    }

    let omega_x = glasso_solve(&s_x, lambda_x, None, cfg)?;
    let tmp = mat_mul(&s_yx, omega_x.omega.as_slice(), p, d, d);
    // Sigma_XY = Sigma_YX^T, so the correction is (Sigma_YX Omega_X) Sigma_YX^T.
    let mut corr = vec![0.0; p * p];
    for a in 0..p {
        for b in 0..p {
            let mut acc = 0.0;
            for l in 0..d {
                acc += tmp[a * d + l] * s_yx[b * d + l];
            }
            corr[a * p + b] = acc;
        }
    }
    let rows: Vec<f64> = (0..p * p).map(|i| s_y.as_slice()[i] - corr[i]).collect();
    Ok(SymMatrix::from_rows(p, &rows))
}

/// Joint-Gaussian estimator: glasso applied to the conditional covariance of
/// Y given X. The resulting graph does not vary with x.
pub fn parametric_fit(
    data: &Dataset,
    lambda_x: f64,
    lambda_y: f64,
    cfg: &GlassoConfig,
) -> Result<PrecisionEstimate> {
    let s_cond = conditional_covariance(data, lambda_x, cfg)?;
    glasso_solve(&s_cond, lambda_y, None, cfg)
}

/// Weighted first and second central moments; weights need not be normalized.
pub fn weighted_moments(p: usize, ys: &[f64], weights: &[f64]) -> Result<(Vec<f64>, SymMatrix)> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateWeights);
    }
    let mut mu = vec![0.0; p];
    for (row, &w) in ys.chunks(p).zip(weights) {
        for (m, v) in mu.iter_mut().zip(row) {
            *m += w * v;
        }
    }
    for m in mu.iter_mut() {
        *m /= total;
    }
    let mut s = SymMatrix::zeros(p);
    for (row, &w) in ys.chunks(p).zip(weights) {
        for i in 0..p {
            let ci = row[i] - mu[i];
            for j in 0..=i {
                s.set(i, j, s.get(i, j) + w * ci * (row[j] - mu[j]));
            }
        }
    }
    let scaled: Vec<f64> = s.as_slice().iter().map(|v| v / total).collect();
    Ok((mu, SymMatrix::from_rows(p, &scaled)))
}

/// Gaussian-kernel weights and moments at `x0`, then glasso on the smoothed
/// covariance.
pub fn kernel_moments(data: &Dataset, x0: &[f64], h: f64) -> Result<(Vec<f64>, SymMatrix)> {
    assert!(h > 0.0, "bandwidth must be positive");
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if x0.len() != data.covariate_dim() {
        return Err(Error::DimensionMismatch {
            expected: data.covariate_dim(),
            got: x0.len(),
        });
    }
    let n = data.len();
    let p = data.response_dim();
    let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let mut weights = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n * p);
    for i in 0..n {
        let dist2: f64 = data
            .x_row(i)
            .iter()
            .zip(x0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        weights.push(norm * (-dist2 / (2.0 * h * h)).exp());
        ys.extend_from_slice(data.y_row(i));
    }
    weighted_moments(p, &ys, &weights)
}

pub fn kernel_fit(
    data: &Dataset,
    x0: &[f64],
    h: f64,
    lambda: f64,
    cfg: &GlassoConfig,
) -> Result<PrecisionEstimate> {
    let (_, s) = kernel_moments(data, x0, h)?;
    glasso_solve(&s, lambda, None, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{cholesky_logdet, sample_mvn, spd_inverse};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn joint_dataset(n: usize, d: usize, p: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let q = d + p;
        // Correlated joint draw: z plus a shared factor.
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for _ in 0..n {
            let shared: f64 = rng.gen::<f64>() - 0.5;
            let row: Vec<f64> = (0..q).map(|_| rng.gen::<f64>() - 0.5 + 0.7 * shared).collect();
            xs.extend_from_slice(&row[..d]);
            ys.extend_from_slice(&row[d..]);
        }
        Dataset::new(d, p, xs, ys).unwrap()
    }

    #[test]
    fn zero_cross_covariance_collapses_to_marginal() {
        // Four points engineered so the sample cross-covariance is exactly 0.
        let xs = vec![0.0, 0.0, 1.0, 1.0];
        let ys = vec![-1.0, 1.0, -1.0, 1.0];
        let data = Dataset::new(1, 1, xs, ys).unwrap();
        let cfg = GlassoConfig::default();
        let s = conditional_covariance(&data, 0.1, &cfg).unwrap();
        // Marginal variance of y is 1.
        assert!((s.get(0, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lambda_x_zero_matches_schur_complement() {
        let data = joint_dataset(400, 2, 3, 1);
        let cfg = GlassoConfig::default();
        let got = conditional_covariance(&data, 0.0, &cfg).unwrap();

        // Independent oracle: explicit Schur complement with a dense inverse.
        let n = data.len();
        let (d, p, q) = (2, 3, 5);
        let nf = n as f64;
        let mut mean = vec![0.0; q];
        for i in 0..n {
            for (m, v) in mean.iter_mut().zip(data.x_row(i).iter().chain(data.y_row(i))) {
                *m += v / nf;
            }
        }
        let mut joint = vec![0.0; q * q];
        for i in 0..n {
            let row: Vec<f64> = data
                .x_row(i)
                .iter()
                .chain(data.y_row(i))
                .zip(&mean)
                .map(|(v, m)| v - m)
                .collect();
            for a in 0..q {
                for b in 0..q {
                    joint[a * q + b] += row[a] * row[b] / nf;
                }
            }
        }
        let sx_rows: Vec<f64> = (0..d)
            .flat_map(|a| (0..d).map(move |b| (a, b)))
            .map(|(a, b)| joint[a * q + b])
            .collect();
        let sx = SymMatrix::from_rows(d, &sx_rows);
        let sx_inv = spd_inverse(&cholesky_logdet(&sx).unwrap().0);
        for a in 0..p {
            for b in 0..p {
                let mut corr = 0.0;
                for l in 0..d {
                    for m in 0..d {
                        corr += joint[(d + a) * q + l] * sx_inv.get(l, m) * joint[(d + b) * q + m];
                    }
                }
                let want = joint[(d + a) * q + d + b] - corr;
                assert!((got.get(a, b) - want).abs() < 1e-8, "({a},{b})");
            }
        }
    }

    #[test]
    fn scalar_conditional_variance() {
        let data = joint_dataset(200, 1, 1, 2);
        let cfg = GlassoConfig::default();
        let n = data.len() as f64;
        let mx: f64 = (0..data.len()).map(|i| data.x_row(i)[0]).sum::<f64>() / n;
        let my: f64 = (0..data.len()).map(|i| data.y_row(i)[0]).sum::<f64>() / n;
        let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
        for i in 0..data.len() {
            let (a, b) = (data.x_row(i)[0] - mx, data.y_row(i)[0] - my);
            vx += a * a / n;
            vy += b * b / n;
            cxy += a * b / n;
        }
        let want = vy - cxy * cxy / vx;
        let got = conditional_covariance(&data, 0.0, &cfg).unwrap();
        assert!((got.get(0, 0) - want).abs() < 1e-12);
        let est = parametric_fit(&data, 0.0, 0.0, &cfg).unwrap();
        assert!((est.omega.get(0, 0) - 1.0 / want).abs() < 1e-8);
    }

    #[test]
    fn conditional_covariance_is_psd() {
        let cfg = GlassoConfig::default();
        for seed in 0..10 {
            let data = joint_dataset(150, 3, 4, 10 + seed);
            let s = conditional_covariance(&data, 0.05, &cfg).unwrap();
            let shifted_rows: Vec<f64> = (0..16)
                .map(|i| s.as_slice()[i] + if i % 5 == 0 { 1e-8 } else { 0.0 })
                .collect();
            let shifted = SymMatrix::from_rows(4, &shifted_rows);
            assert!(
                cholesky_logdet(&shifted).is_ok(),
                "min eigenvalue below -1e-8 (seed {seed})"
            );
        }
    }

    #[test]
    fn huge_bandwidth_matches_global_moments() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let p = 3;
        let n = 80;
        let xs: Vec<f64> = (0..2 * n).map(|_| rng.gen()).collect();
        let (f, _) = cholesky_logdet(&SymMatrix::identity(p)).unwrap();
        let ys = sample_mvn(&[0.5, -0.5, 0.0], &f, n, &mut rng);
        let data = Dataset::new(2, p, xs, ys.clone()).unwrap();
        let (mu, s) = kernel_moments(&data, &[0.3, 0.7], 1e8).unwrap();
        let uniform = vec![1.0; n];
        let (gmu, gs) = weighted_moments(p, &ys, &uniform).unwrap();
        for j in 0..p {
            assert!((mu[j] - gmu[j]).abs() < 1e-10);
        }
        assert!(s.max_abs_diff(&gs) < 1e-10);
    }

    #[test]
    fn single_point_gives_diag_inverse_lambda() {
        let data = Dataset::new(1, 2, vec![0.5], vec![3.0, -1.0]).unwrap();
        let cfg = GlassoConfig::default();
        let (mu, s) = kernel_moments(&data, &[0.2], 0.5).unwrap();
        assert_eq!(mu, vec![3.0, -1.0]);
        assert!(s.max_abs_diff(&SymMatrix::zeros(2)) == 0.0);
        let est = kernel_fit(&data, &[0.2], 0.5, 0.25, &cfg).unwrap();
        for i in 0..2 {
            assert!((est.omega.get(i, i) - 4.0).abs() < 1e-10);
            for j in 0..i {
                assert_eq!(est.omega.get(i, j), 0.0);
            }
        }
    }

    #[test]
    fn symmetric_pair_gives_outer_product() {
        let v = [1.5, -2.0];
        let data = Dataset::new(
            1,
            2,
            vec![0.25, 0.75],
            vec![v[0], v[1], -v[0], -v[1]],
        )
        .unwrap();
        let (mu, s) = kernel_moments(&data, &[0.5], 0.3).unwrap();
        assert!(mu[0].abs() < 1e-12 && mu[1].abs() < 1e-12);
        for i in 0..2 {
            for j in 0..2 {
                assert!((s.get(i, j) - v[i] * v[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn weight_rescaling_invariance() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let p = 3;
        let ys: Vec<f64> = (0..15 * p).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
        let w: Vec<f64> = (0..15).map(|_| rng.gen::<f64>() + 0.1).collect();
        let scaled: Vec<f64> = w.iter().map(|x| 37.5 * x).collect();
        let (mu_a, s_a) = weighted_moments(p, &ys, &w).unwrap();
        let (mu_b, s_b) = weighted_moments(p, &ys, &scaled).unwrap();
        for j in 0..p {
            assert!((mu_a[j] - mu_b[j]).abs() < 1e-12);
        }
        assert!(s_a.max_abs_diff(&s_b) < 1e-12);
    }

    #[test]
    fn all_zero_weights_error() {
        assert!(matches!(
            weighted_moments(1, &[1.0, 2.0], &[0.0, 0.0]),
            Err(Error::DegenerateWeights)
        ));
        // Far-away x0 with a tiny bandwidth underflows every weight.
        let data = Dataset::new(1, 1, vec![0.0, 0.0], vec![1.0, 2.0]).unwrap();
        assert!(matches!(
            kernel_moments(&data, &[1.0], 1e-4),
            Err(Error::DegenerateWeights)
        ));
    }
}
