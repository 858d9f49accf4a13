//! Edge-recovery and partition-recovery metrics.

use serde::{Deserialize, Serialize};

use crate::dpt::{Hyperrectangle, Partition};
use crate::glasso::EdgeSet;

/// Precision, recall, and F1 of an estimated edge set against the truth.
/// An empty estimate scores (0, 0, 0) by convention.
pub fn edge_metrics(est: &EdgeSet, truth: &EdgeSet) -> (f64, f64, f64) {
    if est.is_empty() || truth.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let hits = est.intersection(truth).count() as f64;
    let precision = hits / est.len() as f64;
    let recall = hits / truth.len() as f64;
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    (precision, recall, f1)
}

/// True iff every truth cell is a union of estimate cells, i.e. the estimated
/// partition refines the truth. For dyadic partitions of the same cube this
/// holds exactly when every estimate cell lies inside some truth cell.
pub fn partition_recovered(truth: &Partition, est: &Partition) -> bool {
    est.cells
        .iter()
        .all(|c| truth.cells.iter().any(|t| c.contained_in(t)))
}

fn sorted_keys(p: &Partition) -> Vec<Vec<u64>> {
    let mut keys: Vec<Vec<u64>> = p
        .cells
        .iter()
        .map(|c: &Hyperrectangle| {
            c.lower
                .iter()
                .chain(c.upper.iter())
                .map(|v| v.to_bits())
                .collect()
        })
        .collect();
    keys.sort();
    keys
}

/// True iff the two partitions contain exactly the same cells, ignoring order.
pub fn exact_recovery(truth: &Partition, est: &Partition) -> bool {
    sorted_keys(truth) == sorted_keys(est)
}

/// One evaluated region for the metrics CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsRow {
    pub run: u64,
    pub region: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}
