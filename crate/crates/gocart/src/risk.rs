//! Risk functionals and penalties: empirical and held-out negative
//! log-likelihood risk, the complexity penalties, per-leaf fitting, and the
//! greedy split gain.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::dpt::{prefix_code_len, DyadicTree, Hyperrectangle, Partition};
use crate::error::{Error, Result};
use crate::glasso::{reg_path, select_by_heldout, GlassoConfig, PrecisionEstimate};
use crate::numerics::SymMatrix;

/// Per-cell model: sample mean and selected precision estimate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LeafModel {
    pub mu: Vec<f64>,
    pub prec: PrecisionEstimate,
    pub n_train: usize,
}

impl LeafModel {
    /// tr(Omega (y-mu)(y-mu)^T) - log|Omega| for a single observation.
    pub fn point_loss(&self, y: &[f64]) -> f64 {
        let p = self.mu.len();
        let mut centered = vec![0.0; p];
        for i in 0..p {
            centered[i] = y[i] - self.mu[i];
        }
        self.prec.omega.quad_form(&centered) - self.prec.log_det
    }
}

/// A tree together with one model per partition cell (depth-first leaf order).
#[derive(Debug, Clone)]
pub struct FittedTree {
    pub tree: DyadicTree,
    pub partition: Partition,
    pub models: Vec<LeafModel>,
}

impl FittedTree {
    pub fn new(tree: DyadicTree, models: Vec<LeafModel>) -> Self {
        let partition = tree.partition();
        assert_eq!(partition.len(), models.len());
        FittedTree {
            tree,
            partition,
            models,
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<&LeafModel> {
        let idx = self.partition.locate(x)?;
        Ok(&self.models[idx])
    }
}

fn risk_over(ft: &FittedTree, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut total = 0.0;
    for i in 0..data.len() {
        let idx = ft.partition.locate(data.x_row(i))?;
        total += ft.models[idx].point_loss(data.y_row(i));
    }
    Ok(total / data.len() as f64)
}

/// Sample negative log-likelihood risk over the training set; cells holding
/// no points contribute nothing.
pub fn empirical_risk(ft: &FittedTree, data: &Dataset) -> Result<f64> {
    risk_over(ft, data)
}

/// Same functional evaluated on the held-out split with 1/n2 normalization.
pub fn heldout_risk(ft: &FittedTree, heldout: &Dataset) -> Result<f64> {
    risk_over(ft, heldout)
}

/// Complexity penalty gamma_n * m_T * sqrt(([[T]] log2 + 2 log(np)) / n).
pub fn pen(m_t: usize, d: usize, n: usize, p: usize, gamma_n: f64) -> f64 {
    let code = prefix_code_len(m_t, d);
    gamma_n * m_t as f64 * ((code * 2f64.ln() + 2.0 * ((n * p) as f64).ln()) / n as f64).sqrt()
}

/// User-supplied constants from the oracle-inequality statements; not
/// estimable from data.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TheoryConstants {
    pub b: f64,
    pub v1: f64,
    pub v2: f64,
    pub l_n: f64,
    pub delta: f64,
}

impl TheoryConstants {
    pub fn c1(&self) -> f64 {
        8.0 * self.v2.sqrt() + 8.0 * self.b * self.v1.sqrt() + self.b * self.b
    }

    pub fn c2(&self) -> f64 {
        8.0 * (2.0 * self.v2).sqrt() + 8.0 * self.b * (2.0 * self.v1).sqrt()
            + 2f64.sqrt() * self.b * self.b
    }
}

/// Oracle-inequality penalty (C1 + 1) L_n m_T sqrt(([[T]] log2 + 2 log p + log(48/delta)) / n).
pub fn theorem1_pen(m_t: usize, d: usize, n: usize, p: usize, tc: &TheoryConstants) -> f64 {
    let code = prefix_code_len(m_t, d);
    (tc.c1() + 1.0)
        * tc.l_n
        * m_t as f64
        * ((code * 2f64.ln() + 2.0 * (p as f64).ln() + (48.0 / tc.delta).ln()) / n as f64).sqrt()
}

/// Held-out analog (C2 + sqrt 2) L_n m_T sqrt(([[T]] log2 + 2 log p + log(384/delta)) / n).
pub fn phi_n(m_t: usize, d: usize, n: usize, p: usize, tc: &TheoryConstants) -> f64 {
    let code = prefix_code_len(m_t, d);
    (tc.c2() + 2f64.sqrt())
        * tc.l_n
        * m_t as f64
        * ((code * 2f64.ln() + 2.0 * (p as f64).ln() + (384.0 / tc.delta).ln()) / n as f64).sqrt()
}

/// One evaluated candidate in a model search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RiskRow {
    pub id: usize,
    pub leaves: usize,
    pub empirical: f64,
    pub heldout: Option<f64>,
    pub penalty: Option<f64>,
    pub total: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RiskReport {
    pub rows: Vec<RiskRow>,
}

/// Per-leaf fitting protocol: regularization path on the cell's training
/// covariance, held-out lambda selection, optional pattern refit.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FitConfig {
    pub num_lambdas: usize,
    pub lambda_ratio: f64,
    pub refit: bool,
    pub glasso: GlassoConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            num_lambdas: 30,
            lambda_ratio: 0.01,
            refit: true,
            glasso: GlassoConfig::default(),
        }
    }
}

/// Fits one cell from its training responses (`train_ys`, row-major m x p)
/// and the held-out responses falling in the same cell.
pub fn fit_leaf(train_ys: &[f64], heldout_ys: &[f64], p: usize, cfg: &FitConfig) -> Result<LeafModel> {
    let n = train_ys.len() / p;
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let nf = n as f64;
    let mut mu = vec![0.0; p];
    for row in train_ys.chunks(p) {
        for (m, v) in mu.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in mu.iter_mut() {
        *m /= nf;
    }
    let mut s = SymMatrix::zeros(p);
    for row in train_ys.chunks(p) {
        for i in 0..p {
            let ci = row[i] - mu[i];
            for j in 0..=i {
                let cj = row[j] - mu[j];
                s.set(i, j, s.get(i, j) + ci * cj);
            }
        }
    }
    let scaled: Vec<f64> = s.as_slice().iter().map(|v| v / nf).collect();
    let s = SymMatrix::from_rows(p, &scaled);

    let path = reg_path(&s, cfg.num_lambdas, cfg.lambda_ratio, &cfg.glasso)?;
    // Held-out responses centered about the training mean.
    let mut centered = heldout_ys.to_vec();
    for row in centered.chunks_mut(p) {
        for (v, m) in row.iter_mut().zip(&mu) {
            *v -= m;
        }
    }
    let prec = select_by_heldout(&path, &centered, cfg.refit, &cfg.glasso)?;
    Ok(LeafModel { mu, prec, n_train: n })
}

/// Sum of point losses of `model` over the given responses (no normalization).
pub fn loss_sum(model: &LeafModel, ys: &[f64]) -> f64 {
    let p = model.mu.len();
    ys.chunks(p).map(|y| model.point_loss(y)).sum()
}

#[derive(Debug, Clone, Copy)]
pub struct SplitConfig {
    /// Per-dimension split budget; leaf sides stay >= 2^-k_max.
    pub k_max: u32,
    /// Minimum training AND held-out points required in each child.
    pub min_leaf: usize,
    /// Global held-out count n2; child risks keep the 1/n2 normalization so
    /// gains telescope against the parent term.
    pub n2_total: usize,
    pub fit: FitConfig,
}

pub struct SplitEval {
    pub gain: f64,
    /// Freshly fitted child models, present when the split was evaluable.
    pub children: Option<(LeafModel, LeafModel)>,
}

/// Decrease in held-out risk from dyadically splitting `cell` along `k`.
/// Returns gain -inf (no children) when the side-length floor or the
/// min-leaf constraint blocks the split.
pub fn split_gain(
    cell: &Hyperrectangle,
    k: usize,
    parent: &LeafModel,
    train: &Dataset,
    heldout: &Dataset,
    cfg: &SplitConfig,
) -> Result<SplitEval> {
    let floor = 2f64.powi(-(cfg.k_max as i32) + 1);
    if cell.side_length(k) < floor {
        return Ok(SplitEval {
            gain: f64::NEG_INFINITY,
            children: None,
        });
    }
    let (left, right) = cell.split(k);
    let p = train.response_dim();

    let tl = train.indices_in(&left);
    let tr = train.indices_in(&right);
    let hl = heldout.indices_in(&left);
    let hr = heldout.indices_in(&right);
    if tl.len() < cfg.min_leaf
        || tr.len() < cfg.min_leaf
        || hl.len() < cfg.min_leaf
        || hr.len() < cfg.min_leaf
    {
        return Ok(SplitEval {
            gain: f64::NEG_INFINITY,
            children: None,
        });
    }

    let hl_ys = heldout.gather_y(&hl);
    let hr_ys = heldout.gather_y(&hr);
    let left_model = fit_leaf(&train.gather_y(&tl), &hl_ys, p, &cfg.fit)?;
    let right_model = fit_leaf(&train.gather_y(&tr), &hr_ys, p, &cfg.fit)?;

    let n2 = cfg.n2_total as f64;
    let parent_risk = (loss_sum(parent, &hl_ys) + loss_sum(parent, &hr_ys)) / n2;
    let child_risk = (loss_sum(&left_model, &hl_ys) + loss_sum(&right_model, &hr_ys)) / n2;
    Ok(SplitEval {
        gain: parent_risk - child_risk,
        children: Some((left_model, right_model)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dpt::DyadicTree;
    use crate::glasso::EdgeSet;
    use crate::numerics::{cholesky_logdet, sample_mvn, spd_inverse};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn identity_model(p: usize, mu: Vec<f64>, n_train: usize) -> LeafModel {
        LeafModel {
            mu,
            prec: PrecisionEstimate {
                omega: SymMatrix::identity(p),
                sigma: SymMatrix::identity(p),
                lambda: 0.0,
                edges: EdgeSet::new(),
                log_det: 0.0,
            },
            n_train,
        }
    }

    fn root_fit(d: usize, models: Vec<LeafModel>) -> FittedTree {
        FittedTree::new(DyadicTree::root_only(d, 10), models)
    }

    #[test]
    fn single_point_identity_risk() {
        let ft = root_fit(1, vec![identity_model(2, vec![0.0, 0.0], 1)]);
        let data = Dataset::new(1, 2, vec![0.5], vec![1.0, 0.0]).unwrap();
        assert_eq!(empirical_risk(&ft, &data).unwrap(), 1.0);
    }

    #[test]
    fn identity_precision_risk_is_mean_square_deviation() {
        let ys = vec![1.0, 2.0, 3.0, 6.0];
        let mean = [1.5, 4.0];
        let ft = root_fit(1, vec![identity_model(2, mean.to_vec(), 2)]);
        let data = Dataset::new(1, 2, vec![0.2, 0.8], ys.clone()).unwrap();
        let expect: f64 = ys
            .chunks(2)
            .map(|r| (r[0] - mean[0]).powi(2) + (r[1] - mean[1]).powi(2))
            .sum::<f64>()
            / 2.0;
        assert!((empirical_risk(&ft, &data).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn population_identity_monte_carlo() {
        // At the true (mu*, Omega*) the expected loss is p - log|Omega*|.
        let mut rng = ChaCha20Rng::seed_from_u64(23);
        let omega = SymMatrix::from_rows(3, &[1.0, 0.245, 0.0, 0.245, 1.0, 0.245, 0.0, 0.245, 1.0]);
        let (fo, logdet) = cholesky_logdet(&omega).unwrap();
        let sigma = spd_inverse(&fo);
        let (fs, _) = cholesky_logdet(&sigma).unwrap();
        let n = 20_000;
        let ys = sample_mvn(&[0.0; 3], &fs, n, &mut rng);
        let model = LeafModel {
            mu: vec![0.0; 3],
            prec: PrecisionEstimate {
                omega: omega.clone(),
                sigma,
                lambda: 0.0,
                edges: EdgeSet::new(),
                log_det: logdet,
            },
            n_train: n,
        };
        let mean_loss = loss_sum(&model, &ys) / n as f64;
        let expect = 3.0 - logdet;
        // Var of the quadratic form is O(p); 3 standard errors.
        let se = (2.0 * 3.0f64 / n as f64).sqrt();
        assert!((mean_loss - expect).abs() < 3.0 * se, "{mean_loss} vs {expect}");
    }

    #[test]
    fn heldout_equals_empirical_on_same_data() {
        let ft = root_fit(1, vec![identity_model(1, vec![0.3], 3)]);
        let data = Dataset::new(1, 1, vec![0.1, 0.5, 0.9], vec![0.2, -0.4, 1.0]).unwrap();
        assert_eq!(
            empirical_risk(&ft, &data).unwrap(),
            heldout_risk(&ft, &data).unwrap()
        );
    }

    #[test]
    fn risk_decomposes_over_cells() {
        let unit = crate::dpt::Hyperrectangle::unit(1);
        let (l, r) = unit.split(0);
        let tree = DyadicTree {
            dims: 1,
            k_max: 4,
            root: crate::dpt::TreeNode::Split {
                rect: unit,
                dim: 0,
                children: Box::new([
                    crate::dpt::TreeNode::Leaf { rect: l.clone() },
                    crate::dpt::TreeNode::Leaf { rect: r.clone() },
                ]),
            },
        };
        let m0 = identity_model(1, vec![0.1], 2);
        let m1 = identity_model(1, vec![-0.2], 2);
        let ft = FittedTree::new(tree, vec![m0.clone(), m1.clone()]);
        let data = Dataset::new(1, 1, vec![0.1, 0.4, 0.6, 0.9], vec![0.2, -0.4, 1.0, 0.0]).unwrap();
        let total = empirical_risk(&ft, &data).unwrap();
        let il = data.indices_in(&l);
        let ir = data.indices_in(&r);
        let split_sum =
            (loss_sum(&m0, &data.gather_y(&il)) + loss_sum(&m1, &data.gather_y(&ir))) / 4.0;
        assert!((total - split_sum).abs() < 1e-15);
    }

    #[test]
    fn empty_dataset_errors() {
        let ft = root_fit(1, vec![identity_model(1, vec![0.0], 0)]);
        let data = Dataset::new(1, 1, vec![], vec![]).unwrap();
        assert!(matches!(empirical_risk(&ft, &data), Err(Error::EmptyDataset)));
    }

    #[test]
    fn pen_spot_values() {
        assert_eq!(pen(3, 2, 100, 5, 0.0), 0.0);
        let v = pen(1, 1, 100, 20, 1.0);
        let expect = ((2.0 * 2f64.ln() + 2.0 * 2000f64.ln()) / 100.0).sqrt();
        assert!((v - expect).abs() < 1e-12);
        assert!((v - 0.4073).abs() < 5e-4);
    }

    #[test]
    fn pen_monotone_in_leaves() {
        let mut prev = 0.0;
        for m in 1..=32 {
            let v = pen(m, 3, 1000, 10, 0.7);
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn pen_quarters_n_halves_value_with_log_frozen() {
        // With the log terms frozen, pen scales as 1/sqrt(n): recompute the
        // formula sharing the n=1000 log factor.
        let code = prefix_code_len(2, 2);
        let log_term = code * 2f64.ln() + 2.0 * (1000.0 * 10.0f64).ln();
        let at = |n: f64| 2.0 * (log_term / n).sqrt();
        assert!((at(4000.0) - at(1000.0) / 2.0).abs() < 1e-12);
        // Full formula n-dependence by direct recomputation.
        assert!(pen(2, 2, 4000, 10, 1.0) < pen(2, 2, 1000, 10, 1.0));
    }

    #[test]
    fn theory_penalties_spot_values() {
        let tc = TheoryConstants {
            b: 1.0,
            v1: 1.0,
            v2: 1.0,
            l_n: 1.0,
            delta: 0.05,
        };
        assert!((tc.c1() - 17.0).abs() < 1e-12);
        let zero = TheoryConstants { l_n: 0.0, ..tc };
        assert_eq!(theorem1_pen(2, 2, 1000, 20, &zero), 0.0);
        assert_eq!(phi_n(2, 2, 1000, 20, &zero), 0.0);

        let degenerate = TheoryConstants {
            b: 1.0,
            v1: 0.0,
            v2: 0.0,
            l_n: 1.0,
            delta: 0.05,
        };
        assert!((degenerate.c1() - 1.0).abs() < 1e-12);

        let m = 2;
        let (d, n, p) = (2usize, 1000usize, 20usize);
        let code = prefix_code_len(m, d);
        let expect1 = (tc.c1() + 1.0)
            * (m as f64)
            * ((code * 2f64.ln() + 2.0 * (p as f64).ln() + (48.0 / 0.05f64).ln()) / n as f64).sqrt();
        assert!((theorem1_pen(m, d, n, p, &tc) - expect1).abs() < 1e-12);
        let expect2 = (tc.c2() + 2f64.sqrt())
            * (m as f64)
            * ((code * 2f64.ln() + 2.0 * (p as f64).ln() + (384.0 / 0.05f64).ln()) / n as f64).sqrt();
        assert!((phi_n(m, d, n, p, &tc) - expect2).abs() < 1e-12);
        assert!(phi_n(m, d, n, p, &tc) > theorem1_pen(m, d, n, p, &tc));
    }

    #[test]
    fn gain_with_parent_model_in_children_is_zero() {
        // Telescoping identity: re-using the parent's model in both children
        // cancels the parent term exactly.
        let mut rng = ChaCha20Rng::seed_from_u64(31);
        let (f, _) = cholesky_logdet(&SymMatrix::identity(2)).unwrap();
        let n = 64;
        let ys = sample_mvn(&[0.0, 0.0], &f, n, &mut rng);
        let parent = identity_model(2, vec![0.0, 0.0], n);
        let cell = Hyperrectangle::unit(1);
        let (l, r) = cell.split(0);
        let heldout = Dataset::new(1, 2, (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect(), ys).unwrap();
        let hl = heldout.gather_y(&heldout.indices_in(&l));
        let hr = heldout.gather_y(&heldout.indices_in(&r));
        let parent_risk = loss_sum(&parent, &hl) + loss_sum(&parent, &hr);
        let child_risk = loss_sum(&parent, &hl) + loss_sum(&parent, &hr);
        assert_eq!(parent_risk - child_risk, 0.0);
    }

    #[test]
    fn gain_neg_infinity_at_side_floor() {
        let mut cell = Hyperrectangle::unit(1);
        for _ in 0..4 {
            cell = cell.split(0).0;
        }
        // side length 1/16 = 2^-4; with k_max = 4 the guard requires >= 2^-3.
        let cfg = SplitConfig {
            k_max: 4,
            min_leaf: 1,
            n2_total: 4,
            fit: FitConfig::default(),
        };
        let parent = identity_model(1, vec![0.0], 4);
        let train = Dataset::new(1, 1, vec![0.01, 0.02, 0.03, 0.04], vec![0.0; 4]).unwrap();
        let eval = split_gain(&cell, 0, &parent, &train, &train, &cfg).unwrap();
        assert_eq!(eval.gain, f64::NEG_INFINITY);
        assert!(eval.children.is_none());
    }

    #[test]
    fn gain_positive_on_separated_clusters() {
        let mut rng = ChaCha20Rng::seed_from_u64(37);
        let p = 2;
        let n = 400;
        let (f, _) = cholesky_logdet(&SymMatrix::identity(p)).unwrap();
        let build = |rng: &mut ChaCha20Rng| {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for i in 0..n {
                let x = (i as f64 + 0.5) / n as f64;
                let mean = if x < 0.5 { -10.0 } else { 10.0 };
                xs.push(x);
                ys.extend(sample_mvn(&[mean; 2], &f, 1, rng));
            }
            Dataset::new(1, p, xs, ys).unwrap()
        };
        let train = build(&mut rng);
        let heldout = build(&mut rng);
        let cfg = SplitConfig {
            k_max: 8,
            min_leaf: 10,
            n2_total: n,
            fit: FitConfig::default(),
        };
        let cell = Hyperrectangle::unit(1);
        let parent = fit_leaf(
            &train.gather_y(&(0..n).collect::<Vec<_>>()),
            &heldout.gather_y(&(0..n).collect::<Vec<_>>()),
            p,
            &cfg.fit,
        )
        .unwrap();
        let eval = split_gain(&cell, 0, &parent, &train, &heldout, &cfg).unwrap();
        assert!(eval.gain > 0.0, "gain {}", eval.gain);
    }
}
