//! Reference estimators by exhaustive enumeration of the dyadic tree class
//! at tiny scale: literal penalized-ERM and held-out risk minimization,
//! used to validate the greedy grower.

use std::collections::HashMap;
use std::rc::Rc;

use crate::dataset::Dataset;
use crate::dpt::{enumerate_trees, DyadicTree, Hyperrectangle, DEFAULT_ENUM_CAP};
use crate::error::{Error, Result};
use crate::glasso::reg_path;
use crate::numerics::SymMatrix;
use crate::risk::{fit_leaf, loss_sum, pen, FitConfig, FittedTree, LeafModel, RiskReport, RiskRow};

type CellKey = Vec<u64>;

fn cell_key(rect: &Hyperrectangle) -> CellKey {
    rect.lower
        .iter()
        .chain(rect.upper.iter())
        .map(|v| v.to_bits())
        .collect()
}

struct CellFit {
    model: LeafModel,
    train_loss: f64,
    heldout_loss: f64,
}

/// Argmin tracking with the shared tie-break: lower risk, then fewer leaves,
/// then enumeration order.
struct Best {
    total: f64,
    leaves: usize,
    tree: DyadicTree,
    models: Vec<Rc<CellFit>>,
}

impl Best {
    fn offer(slot: &mut Option<Best>, total: f64, leaves: usize, tree: &DyadicTree, models: &[Rc<CellFit>]) {
        if !total.is_finite() {
            return;
        }
        let take = match slot {
            None => true,
            Some(b) => total < b.total || (total == b.total && leaves < b.leaves),
        };
        if take {
            *slot = Some(Best {
                total,
                leaves,
                tree: tree.clone(),
                models: models.to_vec(),
            });
        }
    }

    fn into_fitted(self) -> FittedTree {
        let models = self.models.iter().map(|c| c.model.clone()).collect();
        FittedTree::new(self.tree, models)
    }
}

/// Held-out risk minimization over every tree in the class: per-leaf models
/// are fitted on the training split exactly as in greedy growth, and the
/// tree minimizing held-out risk wins.
pub fn fit_heldout(
    train: &Dataset,
    heldout: &Dataset,
    k_max: u32,
    cfg: &FitConfig,
) -> Result<(FittedTree, RiskReport)> {
    if train.is_empty() || heldout.is_empty() {
        return Err(Error::EmptyDataset);
    }
    train.check_compatible(heldout)?;
    let d = train.covariate_dim();
    let p = train.response_dim();
    let trees = enumerate_trees(d, k_max, DEFAULT_ENUM_CAP)?;
    let n1 = train.len() as f64;
    let n2 = heldout.len() as f64;

    let mut cache: HashMap<CellKey, Option<Rc<CellFit>>> = HashMap::new();
    let mut report = RiskReport::default();
    let mut best: Option<Best> = None;

    for (id, tree) in trees.iter().enumerate() {
        let partition = tree.partition();
        let mut models = Vec::with_capacity(partition.len());
        let mut feasible = true;
        for cell in &partition.cells {
            let key = cell_key(cell);
            let entry = cache.entry(key).or_insert_with(|| {
                let ti = train.indices_in(cell);
                if ti.is_empty() {
                    return None;
                }
                let train_ys = train.gather_y(&ti);
                let heldout_ys = heldout.gather_y(&heldout.indices_in(cell));
                match fit_leaf(&train_ys, &heldout_ys, p, cfg) {
                    Ok(model) => {
                        let train_loss = loss_sum(&model, &train_ys);
                        let heldout_loss = loss_sum(&model, &heldout_ys);
                        Some(Rc::new(CellFit {
                            model,
                            train_loss,
                            heldout_loss,
                        }))
                    }
                    Err(_) => None,
                }
            });
            match entry {
                Some(fit) => models.push(Rc::clone(fit)),
                None => {
                    feasible = false;
                    break;
                }
            }
        }
        let (empirical, heldout_risk) = if feasible {
            (
                models.iter().map(|c| c.train_loss).sum::<f64>() / n1,
                models.iter().map(|c| c.heldout_loss).sum::<f64>() / n2,
            )
        } else {
            (f64::NAN, f64::NAN)
        };
        report.rows.push(RiskRow {
            id,
            leaves: partition.len(),
            empirical,
            heldout: Some(heldout_risk),
            penalty: None,
            total: heldout_risk,
        });
        if feasible {
            Best::offer(&mut best, heldout_risk, partition.len(), tree, &models);
        }
    }
    let best = best.ok_or_else(|| Error::Data("no feasible tree in the class".into()))?;
    Ok((best.into_fitted(), report))
}

/// Penalized empirical risk minimization over every tree in the class.
/// The inner per-leaf minimization is realized as sample mean plus glasso
/// at the path lambda with the lowest training risk (no held-out data, no
/// refit), matching the lambda <-> constraint-radius correspondence.
pub fn fit_penalized(
    train: &Dataset,
    k_max: u32,
    gamma_n: f64,
    cfg: &FitConfig,
) -> Result<(FittedTree, RiskReport)> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let d = train.covariate_dim();
    let p = train.response_dim();
    let trees = enumerate_trees(d, k_max, DEFAULT_ENUM_CAP)?;
    let n1 = train.len();

    let mut cache: HashMap<CellKey, Option<Rc<CellFit>>> = HashMap::new();
    let mut report = RiskReport::default();
    let mut best: Option<Best> = None;

    for (id, tree) in trees.iter().enumerate() {
        let partition = tree.partition();
        let mut models = Vec::with_capacity(partition.len());
        let mut feasible = true;
        for cell in &partition.cells {
            let key = cell_key(cell);
            let entry = cache.entry(key).or_insert_with(|| {
                let ti = train.indices_in(cell);
                if ti.is_empty() {
                    return None;
                }
                let train_ys = train.gather_y(&ti);
                match fit_cell_by_training_risk(&train_ys, p, cfg) {
                    Ok(model) => {
                        let train_loss = loss_sum(&model, &train_ys);
                        Some(Rc::new(CellFit {
                            model,
                            train_loss,
                            heldout_loss: f64::NAN,
                        }))
                    }
                    Err(_) => None,
                }
            });
            match entry {
                Some(fit) => models.push(Rc::clone(fit)),
                None => {
                    feasible = false;
                    break;
                }
            }
        }
        let m_t = partition.len();
        let penalty = pen(m_t, d, n1, p, gamma_n);
        let (empirical, total) = if feasible {
            let e = models.iter().map(|c| c.train_loss).sum::<f64>() / n1 as f64;
            (e, e + penalty)
        } else {
            (f64::NAN, f64::NAN)
        };
        report.rows.push(RiskRow {
            id,
            leaves: m_t,
            empirical,
            heldout: None,
            penalty: Some(penalty),
            total,
        });
        if feasible {
            Best::offer(&mut best, total, m_t, tree, &models);
        }
    }
    let best = best.ok_or_else(|| Error::Data("no feasible tree in the class".into()))?;
    Ok((best.into_fitted(), report))
}

fn fit_cell_by_training_risk(train_ys: &[f64], p: usize, cfg: &FitConfig) -> Result<LeafModel> {
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
                s.set(i, j, s.get(i, j) + ci * (row[j] - mu[j]));
            }
        }
    }
    let scaled: Vec<f64> = s.as_slice().iter().map(|v| v / nf).collect();
    let s = SymMatrix::from_rows(p, &scaled);
    let path = reg_path(&s, cfg.num_lambdas, cfg.lambda_ratio, &cfg.glasso)?;
    let mut best: Option<&crate::glasso::PrecisionEstimate> = None;
    let mut best_risk = f64::INFINITY;
    for est in &path.estimates {
        let risk = est.gaussian_risk(&s);
        if risk < best_risk {
            best_risk = risk;
            best = Some(est);
        }
    }
    let prec = best.expect("nonempty path").clone();
    Ok(LeafModel { mu, prec, n_train: n })
}
