//! Greedy tree growth: repeatedly split the frontier cell whose best
//! dimension yields a positive decrease in held-out risk.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::dpt::{DyadicTree, Hyperrectangle, TreeNode};
use crate::error::{Error, Result};
use crate::risk::{fit_leaf, split_gain, FitConfig, FittedTree, LeafModel, SplitConfig};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GreedyConfig {
    /// Per-dimension split budget; N = 2^k_max.
    pub k_max: u32,
    /// Minimum training and held-out points per child.
    pub min_leaf: usize,
    pub fit: FitConfig,
    /// Run tag recorded in outputs; growth itself is deterministic.
    pub seed: u64,
}

impl Default for GreedyConfig {
    fn default() -> Self {
        GreedyConfig {
            k_max: 10,
            min_leaf: 10,
            fit: FitConfig::default(),
            seed: 0,
        }
    }
}

/// One considered split during growth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitTrace {
    pub node: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub dim: usize,
    pub gain: f64,
    pub accepted: bool,
}

pub struct GrowResult {
    pub fitted: FittedTree,
    pub trace: Vec<SplitTrace>,
}

struct NodeRec {
    rect: Hyperrectangle,
    model: Option<LeafModel>,
    split: Option<(usize, usize, usize)>, // (dim, left, right)
}

fn build_tree(arena: &[NodeRec], id: usize) -> TreeNode {
    match arena[id].split {
        None => TreeNode::Leaf {
            rect: arena[id].rect.clone(),
        },
        Some((dim, l, r)) => TreeNode::Split {
            rect: arena[id].rect.clone(),
            dim,
            children: Box::new([build_tree(arena, l), build_tree(arena, r)]),
        },
    }
}

fn collect_models(arena: &mut [NodeRec], id: usize, out: &mut Vec<LeafModel>) {
    match arena[id].split {
        None => out.push(arena[id].model.take().expect("leaf has a model")),
        Some((_, l, r)) => {
            collect_models(arena, l, out);
            collect_models(arena, r, out);
        }
    }
}

/// Grows a tree by held-out risk minimization. Frontier cells are processed
/// in creation order; argmax ties break toward the smallest dimension index.
pub fn grow(train: &Dataset, heldout: &Dataset, cfg: &GreedyConfig) -> Result<GrowResult> {
    if train.is_empty() || heldout.is_empty() {
        return Err(Error::EmptyDataset);
    }
    train.check_compatible(heldout)?;
    for ds in [train, heldout] {
        for i in 0..ds.len() {
            for (k, &v) in ds.x_row(i).iter().enumerate() {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::OutOfDomain { coord: k, value: v });
                }
            }
        }
    }

    let d = train.covariate_dim();
    let p = train.response_dim();
    let split_cfg = SplitConfig {
        k_max: cfg.k_max,
        min_leaf: cfg.min_leaf,
        n2_total: heldout.len(),
        fit: cfg.fit,
    };

    let root_rect = Hyperrectangle::unit(d);
    let all_train: Vec<usize> = (0..train.len()).collect();
    let all_heldout: Vec<usize> = (0..heldout.len()).collect();
    let root_model = fit_leaf(
        &train.gather_y(&all_train),
        &heldout.gather_y(&all_heldout),
        p,
        &cfg.fit,
    )?;

    let mut arena = vec![NodeRec {
        rect: root_rect,
        model: Some(root_model),
        split: None,
    }];
    let mut frontier: VecDeque<usize> = VecDeque::from([0]);
    let mut trace = Vec::new();

    while let Some(id) = frontier.pop_front() {
        let cell = arena[id].rect.clone();
        let parent_model = arena[id].model.as_ref().expect("frontier node has a model");

        let mut best: Option<(usize, f64, (LeafModel, LeafModel))> = None;
        for k in 0..d {
            let eval = split_gain(&cell, k, parent_model, train, heldout, &split_cfg)?;
            trace.push(SplitTrace {
                node: id,
                lower: cell.lower.clone(),
                upper: cell.upper.clone(),
                dim: k,
                gain: eval.gain,
                accepted: false,
            });
            if let Some(children) = eval.children {
                let better = match &best {
                    Some((_, g, _)) => eval.gain > *g,
                    None => true,
                };
                if better {
                    best = Some((k, eval.gain, children));
                }
            }
        }

        match best {
            Some((k, gain, (left_model, right_model))) if gain > 0.0 => {
                let accepted_at = trace.len() - d + k;
                trace[accepted_at].accepted = true;
                let (left, right) = cell.split(k);
                let lid = arena.len();
                arena.push(NodeRec {
                    rect: left,
                    model: Some(left_model),
                    split: None,
                });
                let rid = arena.len();
                arena.push(NodeRec {
                    rect: right,
                    model: Some(right_model),
                    split: None,
                });
                arena[id].split = Some((k, lid, rid));
                arena[id].model = None;
                frontier.push_back(lid);
                frontier.push_back(rid);
            }
            _ => {
                // S(A) = false: the cell becomes a partition element.
            }
        }
    }

    let root = build_tree(&arena, 0);
    let mut models = Vec::new();
    collect_models(&mut arena, 0, &mut models);
    let tree = DyadicTree {
        dims: d,
        k_max: cfg.k_max,
        root,
    };
    Ok(GrowResult {
        fitted: FittedTree::new(tree, models),
        trace,
    })
}
