//! Synthetic data generators: degree-capped Erdős–Rényi graphs, precision
//! matrices from graphs, the 22-region layout on the unit square, and the
//! chain / grid sequences with slowly mutating graphs.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::dpt::Hyperrectangle;
use crate::error::{Error, Result};
use crate::glasso::EdgeSet;
use crate::numerics::{cholesky_logdet, sample_mvn, spd_inverse, SpdFactor, SymMatrix};

pub const DEFAULT_OFFDIAG: f64 = 0.245;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphTruth {
    pub p: usize,
    pub edges: EdgeSet,
}

impl GraphTruth {
    pub fn degree(&self, v: usize) -> usize {
        self.edges.iter().filter(|&&(a, b)| a == v || b == v).count()
    }

    pub fn max_degree(&self) -> usize {
        (0..self.p).map(|v| self.degree(v)).max().unwrap_or(0)
    }
}

/// Uniformly samples a graph with exactly `num_edges` edges and maximum
/// degree `max_deg`, by drawing uniform non-edges and rejecting any that
/// would exceed the cap; restarts from scratch when the draw paints itself
/// into a corner.
pub fn gen_er_graph<R: Rng>(
    p: usize,
    num_edges: usize,
    max_deg: usize,
    rng: &mut R,
) -> Result<GraphTruth> {
    let all_pairs: Vec<(usize, usize)> = (0..p)
        .flat_map(|a| ((a + 1)..p).map(move |b| (a, b)))
        .collect();
    if num_edges > all_pairs.len() {
        return Err(Error::Infeasible(format!(
            "{num_edges} edges requested but only {} pairs exist",
            all_pairs.len()
        )));
    }
    for _restart in 0..100 {
        let mut g = GraphTruth {
            p,
            edges: EdgeSet::new(),
        };
        let mut deg = vec![0usize; p];
        let mut stuck = false;
        while g.edges.len() < num_edges {
            let open: Vec<(usize, usize)> = all_pairs
                .iter()
                .copied()
                .filter(|&(a, b)| !g.edges.contains(&(a, b)) && deg[a] < max_deg && deg[b] < max_deg)
                .collect();
            match open.choose(rng) {
                Some(&(a, b)) => {
                    g.edges.insert((a, b));
                    deg[a] += 1;
                    deg[b] += 1;
                }
                None => {
                    stuck = true;
                    break;
                }
            }
        }
        if !stuck {
            return Ok(g);
        }
    }
    Err(Error::Infeasible(format!(
        "no graph with {num_edges} edges under degree cap {max_deg} after 100 restarts"
    )))
}

/// Precision matrix with unit diagonal and `offdiag` on the graph's edges;
/// verified positive definite.
pub fn omega_from_graph(g: &GraphTruth, offdiag: f64) -> Result<SymMatrix> {
    let mut omega = SymMatrix::identity(g.p);
    for &(a, b) in &g.edges {
        omega.set(a, b, offdiag);
    }
    cholesky_logdet(&omega)?;
    Ok(omega)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Region {
    pub rect: Hyperrectangle,
    pub graph: GraphTruth,
    pub omega: SymMatrix,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegionLayout {
    pub regions: Vec<Region>,
}

impl RegionLayout {
    /// Region index containing (x1, x2) under the half-open rule.
    pub fn locate(&self, x1: f64, x2: f64) -> Option<usize> {
        self.regions.iter().position(|r| r.rect.contains(&[x1, x2]))
    }
}

/// The canonical 22-cell dyadic layout on [0,1]²: a product partition of two
/// horizontal rows (y split at 1/2) with a common dyadic x-partition of
/// [0,1] into two 1/32-wide, three 1/16-wide, and six 1/8-wide intervals.
/// Regions are numbered smallest-first (four 1/64 cells, then six 1/32,
/// then twelve 1/16), bottom row before top row within each size class.
///
/// Because both rows share the same x-boundaries, every dyadic split of any
/// intermediate cell either respects the region boundaries or carries no
/// distributional signal, so no greedy split ordering can fragment a region.
pub fn canonical_region_rects() -> Vec<Hyperrectangle> {
    let x_bounds: [(f64, f64); 11] = [
        // Two 1/32-wide intervals (the smallest cells).
        (0.0, 1.0 / 32.0),
        (1.0 / 32.0, 1.0 / 16.0),
        // Three 1/16-wide intervals.
        (1.0 / 16.0, 1.0 / 8.0),
        (3.0 / 8.0, 7.0 / 16.0),
        (7.0 / 16.0, 1.0 / 2.0),
        // Six 1/8-wide intervals.
        (1.0 / 8.0, 1.0 / 4.0),
        (1.0 / 4.0, 3.0 / 8.0),
        (1.0 / 2.0, 5.0 / 8.0),
        (5.0 / 8.0, 3.0 / 4.0),
        (3.0 / 4.0, 7.0 / 8.0),
        (7.0 / 8.0, 1.0),
    ];
    let mut rects = Vec::with_capacity(22);
    for chunk in [&x_bounds[..2], &x_bounds[2..5], &x_bounds[5..]] {
        for (y0, y1) in [(0.0, 0.5), (0.5, 1.0)] {
            for &(x0, x1) in chunk {
                rects.push(Hyperrectangle {
                    lower: vec![x0, y0],
                    upper: vec![x1, y1],
                });
            }
        }
    }
    rects
}

/// Draws one independent graph and precision matrix per canonical region.
pub fn canonical_layout<R: Rng>(p: usize, num_edges: usize, max_deg: usize, rng: &mut R) -> Result<RegionLayout> {
    let mut regions = Vec::new();
    for rect in canonical_region_rects() {
        let graph = gen_er_graph(p, num_edges, max_deg, rng)?;
        let omega = omega_from_graph(&graph, DEFAULT_OFFDIAG)?;
        regions.push(Region { rect, graph, omega });
    }
    Ok(RegionLayout { regions })
}

fn covariance_factor(omega: &SymMatrix) -> Result<SpdFactor> {
    let (f, _) = cholesky_logdet(omega)?;
    let sigma = spd_inverse(&f);
    Ok(cholesky_logdet(&sigma)?.0)
}

fn sample_layout_dataset<R: Rng>(
    layout: &RegionLayout,
    factors: &[SpdFactor],
    n: usize,
    d: usize,
    p: usize,
    rng: &mut R,
) -> Dataset {
    let zero = vec![0.0; p];
    let mut xs = Vec::with_capacity(n * d);
    let mut ys = Vec::with_capacity(n * p);
    for _ in 0..n {
        let x: Vec<f64> = (0..d).map(|_| rng.gen()).collect();
        let region = layout
            .locate(x[0], x[1])
            .expect("layout tiles the unit square");
        xs.extend_from_slice(&x);
        ys.extend(sample_mvn(&zero, &factors[region], 1, rng));
    }
    Dataset::new(d, p, xs, ys).expect("consistent dimensions by construction")
}

/// 22-region experiment data: uniform covariates on [0,1]^d, responses drawn
/// from the precision matrix of the region containing (x1, x2), plus an
/// equal-size held-out set from the same truths.
pub fn gen_regions22<R: Rng>(
    n: usize,
    d: usize,
    p: usize,
    rng: &mut R,
) -> Result<(Dataset, Dataset, RegionLayout)> {
    assert!(n >= 1 && d >= 2);
    let layout = canonical_layout(p, 10, 4, rng)?;
    gen_from_layout(&layout, n, d, rng).map(|(a, b)| (a, b, layout))
}

/// Samples train and held-out sets for an existing (possibly user-supplied)
/// layout.
pub fn gen_from_layout<R: Rng>(
    layout: &RegionLayout,
    n: usize,
    d: usize,
    rng: &mut R,
) -> Result<(Dataset, Dataset)> {
    assert!(d >= 2);
    let p = layout.regions[0].omega.order();
    let factors = layout
        .regions
        .iter()
        .map(|r| covariance_factor(&r.omega))
        .collect::<Result<Vec<_>>>()?;
    let train = sample_layout_dataset(layout, &factors, n, d, p, rng);
    let heldout = sample_layout_dataset(layout, &factors, n, d, p, rng);
    Ok((train, heldout))
}

const EDGE_BAND: (usize, usize) = (5, 15);
const MUTATE_PROB: f64 = 0.05;

/// One evolution step: with probability 0.05 remove a uniform edge, then with
/// probability 0.05 add a uniform degree-respecting non-edge; a mutation that
/// would leave the edge count outside [5, 15] is skipped.
fn evolve_graph<R: Rng>(g: &GraphTruth, max_deg: usize, rng: &mut R) -> GraphTruth {
    let mut next = g.clone();
    if rng.gen::<f64>() < MUTATE_PROB && next.edges.len() > EDGE_BAND.0 {
        let all: Vec<(usize, usize)> = next.edges.iter().copied().collect();
        if let Some(&e) = all.choose(rng) {
            next.edges.remove(&e);
        }
    }
    if rng.gen::<f64>() < MUTATE_PROB && next.edges.len() < EDGE_BAND.1 {
        let mut deg = vec![0usize; next.p];
        for &(a, b) in &next.edges {
            deg[a] += 1;
            deg[b] += 1;
        }
        let open: Vec<(usize, usize)> = (0..next.p)
            .flat_map(|a| ((a + 1)..next.p).map(move |b| (a, b)))
            .filter(|&(a, b)| !next.edges.contains(&(a, b)) && deg[a] < max_deg && deg[b] < max_deg)
            .collect();
        if let Some(&e) = open.choose(rng) {
            next.edges.insert(e);
        }
    }
    next
}

fn sample_sequence<R: Rng>(
    xs: &[f64],
    d: usize,
    factors: &[SpdFactor],
    p: usize,
    rng: &mut R,
) -> Dataset {
    let zero = vec![0.0; p];
    let n = xs.len() / d;
    let mut ys = Vec::with_capacity(n * p);
    for f in factors.iter().take(n) {
        ys.extend(sample_mvn(&zero, f, 1, rng));
    }
    Dataset::new(d, p, xs.to_vec(), ys).expect("consistent dimensions by construction")
}

/// Chain sequence: x_t at the midpoints of an equal partition of [0,1], one
/// response per site, graphs evolving step to step; the held-out set reuses
/// the same per-site truths with fresh noise.
pub fn gen_chain<R: Rng>(
    n: usize,
    p: usize,
    rng: &mut R,
) -> Result<(Dataset, Dataset, Vec<GraphTruth>)> {
    assert!(n >= 2);
    let mut graphs = Vec::with_capacity(n);
    graphs.push(gen_er_graph(p, 10, 4, rng)?);
    for t in 1..n {
        let next = evolve_graph(&graphs[t - 1], 4, rng);
        graphs.push(next);
    }
    let factors = graphs
        .iter()
        .map(|g| covariance_factor(&omega_from_graph(g, DEFAULT_OFFDIAG)?))
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = (0..n).map(|t| (t as f64 + 0.5) / n as f64).collect();
    let train = sample_sequence(&xs, 1, &factors, p, rng);
    let heldout = sample_sequence(&xs, 1, &factors, p, rng);
    Ok((train, heldout, graphs))
}

/// Grid sequence on [0,1]²: graphs are built in diagonal order, each cell
/// basing its graph on a uniformly chosen existing neighbor (left or below)
/// before mutation; one response per grid midpoint.
pub fn gen_grid<R: Rng>(
    side: usize,
    p: usize,
    rng: &mut R,
) -> Result<(Dataset, Dataset, Vec<Vec<GraphTruth>>)> {
    assert!(side >= 2);
    let seed_graph = gen_er_graph(p, 10, 4, rng)?;
    let mut grid: Vec<Vec<Option<GraphTruth>>> = vec![vec![None; side]; side];
    grid[0][0] = Some(seed_graph);
    // Diagonal order: all cells with i + j = s before any with i + j = s + 1.
    for s in 1..(2 * side - 1) {
        for i in 0..side {
            if s < i {
                continue;
            }
            let j = s - i;
            if j >= side {
                continue;
            }
            let left = if i > 0 { grid[i - 1][j].clone() } else { None };
            let below = if j > 0 { grid[i][j - 1].clone() } else { None };
            let basis = match (left, below) {
                (Some(a), Some(b)) => {
                    if rng.gen::<bool>() {
                        a
                    } else {
                        b
                    }
                }
                (Some(a), None) => a,
                (None, Some(b)) => b,
                (None, None) => unreachable!("every non-origin cell has a predecessor"),
            };
            grid[i][j] = Some(evolve_graph(&basis, 4, rng));
        }
    }
    let graphs: Vec<Vec<GraphTruth>> = grid
        .into_iter()
        .map(|row| row.into_iter().map(|g| g.expect("filled")).collect())
        .collect();

    let mut factors = Vec::with_capacity(side * side);
    let mut xs = Vec::with_capacity(side * side * 2);
    for (i, row) in graphs.iter().enumerate() {
        for (j, g) in row.iter().enumerate() {
            factors.push(covariance_factor(&omega_from_graph(g, DEFAULT_OFFDIAG)?)?);
            xs.push((i as f64 + 0.5) / side as f64);
            xs.push((j as f64 + 0.5) / side as f64);
        }
    }
    let train = sample_sequence(&xs, 2, &factors, p, rng);
    let heldout = sample_sequence(&xs, 2, &factors, p, rng);
    Ok((train, heldout, graphs))
}
