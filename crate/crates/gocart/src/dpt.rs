//! Dyadic partitioning trees over [0,1]^d: hyperrectangle geometry, dyadic
//! splits, induced partitions, point location, the prefix code length, and
//! exhaustive enumeration of the bounded-side-length tree class.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box with exact dyadic endpoints. Equality is bitwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperrectangle {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Hyperrectangle {
    pub fn unit(d: usize) -> Self {
        Hyperrectangle {
            lower: vec![0.0; d],
            upper: vec![1.0; d],
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    #[inline]
    pub fn side_length(&self, k: usize) -> f64 {
        self.upper[k] - self.lower[k]
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|k| self.side_length(k)).product()
    }

    /// Dyadic split along dimension k: the left child takes the lower half.
    /// The midpoint is exact because all endpoints are dyadic rationals.
    pub fn split(&self, k: usize) -> (Hyperrectangle, Hyperrectangle) {
        let mid = 0.5 * (self.lower[k] + self.upper[k]);
        let mut left = self.clone();
        let mut right = self.clone();
        left.upper[k] = mid;
        right.lower[k] = mid;
        (left, right)
    }

    /// Half-open membership [a, b) in every dimension, closed at b = 1.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().enumerate().all(|(k, &v)| {
            v >= self.lower[k] && (v < self.upper[k] || (v == self.upper[k] && self.upper[k] == 1.0))
        })
    }

    /// True iff `self` lies inside `outer` (shared faces allowed).
    pub fn contained_in(&self, outer: &Hyperrectangle) -> bool {
        (0..self.dim()).all(|k| self.lower[k] >= outer.lower[k] && self.upper[k] <= outer.upper[k])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        rect: Hyperrectangle,
    },
    Split {
        rect: Hyperrectangle,
        dim: usize,
        children: Box<[TreeNode; 2]>,
    },
}

impl TreeNode {
    pub fn rect(&self) -> &Hyperrectangle {
        match self {
            TreeNode::Leaf { rect } => rect,
            TreeNode::Split { rect, .. } => rect,
        }
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a Hyperrectangle>) {
        match self {
            TreeNode::Leaf { rect } => out.push(rect),
            TreeNode::Split { children, .. } => {
                children[0].collect_leaves(out);
                children[1].collect_leaves(out);
            }
        }
    }
}

/// A dyadic partitioning tree rooted at [0,1]^d with per-dimension split
/// budget `k_max` (leaf side lengths never drop below 2^-k_max).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DyadicTree {
    pub dims: usize,
    pub k_max: u32,
    pub root: TreeNode,
}

impl DyadicTree {
    pub fn root_only(d: usize, k_max: u32) -> Self {
        DyadicTree {
            dims: d,
            k_max,
            root: TreeNode::Leaf {
                rect: Hyperrectangle::unit(d),
            },
        }
    }

    pub fn leaf_count(&self) -> usize {
        let mut leaves = Vec::new();
        self.root.collect_leaves(&mut leaves);
        leaves.len()
    }

    /// Leaf cells in depth-first (left before right) order.
    pub fn partition(&self) -> Partition {
        let mut leaves = Vec::new();
        self.root.collect_leaves(&mut leaves);
        Partition {
            cells: leaves.into_iter().cloned().collect(),
        }
    }
}

/// Ordered leaf cells tiling [0,1]^d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub cells: Vec<Hyperrectangle>,
}

impl Partition {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Index of the unique cell containing x under the half-open rule.
    pub fn locate(&self, x: &[f64]) -> Result<usize> {
        for (k, &v) in x.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::OutOfDomain { coord: k, value: v });
            }
        }
        self.cells
            .iter()
            .position(|c| c.contains(x))
            .ok_or_else(|| Error::Data("point not covered by any partition cell".into()))
    }
}

/// Prefix code length 3 m - 1 + (m - 1) log2(d); zero log term for d = 1.
pub fn prefix_code_len(m_t: usize, d: usize) -> f64 {
    let m = m_t as f64;
    3.0 * m - 1.0 + (m - 1.0) * (d as f64).log2()
}

fn count_rec(budgets: &mut [u32]) -> u128 {
    let mut total: u128 = 1;
    for i in 0..budgets.len() {
        if budgets[i] > 0 {
            budgets[i] -= 1;
            let sub = count_rec(budgets);
            budgets[i] += 1;
            total = total.saturating_add(sub.saturating_mul(sub));
        }
    }
    total
}

/// Number of trees in the class with per-dimension split budget K, via the
/// recurrence t(k) = 1 + sum_i [k_i > 0] t(k - e_i)^2.
pub fn count_trees(d: usize, k: u32) -> u128 {
    let mut budgets = vec![k; d];
    count_rec(&mut budgets)
}

fn enumerate_nodes(rect: &Hyperrectangle, budgets: &mut [u32]) -> Vec<TreeNode> {
    let mut out = vec![TreeNode::Leaf { rect: rect.clone() }];
    for k in 0..budgets.len() {
        if budgets[k] == 0 {
            continue;
        }
        let (left, right) = rect.split(k);
        budgets[k] -= 1;
        let lefts = enumerate_nodes(&left, budgets);
        let rights = enumerate_nodes(&right, budgets);
        budgets[k] += 1;
        for l in &lefts {
            for r in &rights {
                out.push(TreeNode::Split {
                    rect: rect.clone(),
                    dim: k,
                    children: Box::new([l.clone(), r.clone()]),
                });
            }
        }
    }
    out
}

/// Enumerates every tree in the class exactly once. Counts first; errors with
/// `TooLarge` when the class exceeds `cap` (default cap used by callers: 1e6).
pub fn enumerate_trees(d: usize, k: u32, cap: u128) -> Result<Vec<DyadicTree>> {
    let count = count_trees(d, k);
    if count > cap {
        return Err(Error::TooLarge { count, cap });
    }
    let root = Hyperrectangle::unit(d);
    let mut budgets = vec![k; d];
    let nodes = enumerate_nodes(&root, &mut budgets);
    Ok(nodes
        .into_iter()
        .map(|root| DyadicTree {
            dims: d,
            k_max: k,
            root,
        })
        .collect())
}

pub const DEFAULT_ENUM_CAP: u128 = 1_000_000;
