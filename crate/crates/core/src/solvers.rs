//! MAP solvers: `argmax_{z ∈ C} ⟨z, θ⟩` for each polytope family.
//!
//! Ties are broken towards the lowest index everywhere. With continuous
//! perturbations ties have probability zero, so this only matters for
//! noiseless calls.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::polytope::{
    dot_state, edge_list, enumerate_states, grid_neighbors, DiscreteState, Neighborhood,
    PolytopeSpec, UnionFind,
};

/// Indicator of the `k` largest entries of `theta` (`k = 1` for categorical).
pub fn map_topk(spec: &PolytopeSpec, theta: &[f64]) -> Result<DiscreteState> {
    let k = spec
        .subset_size()
        .ok_or_else(|| Error::Unsupported(format!("top-k MAP on {spec}")))?;
    check_dim(spec.dim(), theta.len())?;
    Ok(topk_indicator(theta, k))
}

fn topk_indicator(theta: &[f64], k: usize) -> DiscreteState {
    let m = theta.len();
    if k == 1 {
        let mut best = 0;
        for (i, v) in theta.iter().enumerate().skip(1) {
            if *v > theta[best] {
                best = i;
            }
        }
        return DiscreteState::one_hot(m, best);
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| theta[b].total_cmp(&theta[a]).then(a.cmp(&b)));
    DiscreteState::from_indices(m, &order[..k])
}

/// Maximum-weight spanning tree of the complete graph on `v` vertices
/// (Kruskal), as an edge indicator in [`edge_list`] order.
pub fn map_spanning_tree(spec: &PolytopeSpec, theta: &[f64]) -> Result<DiscreteState> {
    let PolytopeSpec::SpanningTree { v } = *spec else {
        return Err(Error::Unsupported(format!("spanning-tree MAP on {spec}")));
    };
    check_dim(spec.dim(), theta.len())?;
    let edges = edge_list(v);
    let mut order: Vec<usize> = (0..edges.len()).collect();
    order.sort_by(|&a, &b| theta[b].total_cmp(&theta[a]).then(a.cmp(&b)));
    let mut uf = UnionFind::new(v);
    let mut chosen = Vec::with_capacity(v - 1);
    for e in order {
        let (a, b) = edges[e];
        if uf.union(a, b) {
            chosen.push(e);
            if chosen.len() == v - 1 {
                break;
            }
        }
    }
    Ok(DiscreteState::from_indices(edges.len(), &chosen))
}

/// Positive per-cell traversal costs on a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCosts {
    rows: usize,
    cols: usize,
    costs: Vec<f64>,
    neighborhood: Neighborhood,
}

impl GridCosts {
    /// `costs` is row-major; every entry must be finite and strictly positive.
    pub fn new(
        rows: usize,
        cols: usize,
        costs: Vec<f64>,
        neighborhood: Neighborhood,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidParameter("grid must be non-empty".into()));
        }
        check_dim(rows * cols, costs.len())?;
        if let Some(i) = costs.iter().position(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "cell {i} has non-positive or non-finite cost {}",
                costs[i]
            )));
        }
        Ok(GridCosts {
            rows,
            cols,
            costs,
            neighborhood,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn neighborhood(&self) -> Neighborhood {
        self.neighborhood
    }

    /// Sum of the costs of the selected cells.
    pub fn path_cost(&self, z: &DiscreteState) -> f64 {
        dot_state(z, &self.costs)
    }
}

#[derive(PartialEq)]
struct Frontier {
    dist: f64,
    cell: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    // Min-heap on (dist, cell).
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then(other.cell.cmp(&self.cell))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Minimum-cost path from the top-left to the bottom-right cell (Dijkstra on
/// cell costs, both endpoints included), as a row-major cell indicator.
pub fn map_grid_path(costs: &GridCosts) -> DiscreteState {
    let cells = costs.rows * costs.cols;
    let target = cells - 1;
    let mut dist = vec![f64::INFINITY; cells];
    let mut pred = vec![usize::MAX; cells];
    let mut heap = BinaryHeap::new();
    dist[0] = costs.costs[0];
    heap.push(Frontier {
        dist: dist[0],
        cell: 0,
    });
    while let Some(Frontier { dist: d, cell }) = heap.pop() {
        if d > dist[cell] {
            continue;
        }
        if cell == target {
            break;
        }
        for next in grid_neighbors(costs.rows, costs.cols, costs.neighborhood, cell) {
            let nd = d + costs.costs[next];
            if nd < dist[next] {
                dist[next] = nd;
                pred[next] = cell;
                heap.push(Frontier {
                    dist: nd,
                    cell: next,
                });
            }
        }
    }
    let mut path = vec![target];
    let mut cur = target;
    while cur != 0 {
        cur = pred[cur];
        path.push(cur);
    }
    DiscreteState::from_indices(cells, &path)
}

/// Exhaustive `argmax ⟨z, θ⟩` over the enumerated state space; the first
/// maximiser in enumeration order wins.
pub fn map_bruteforce(spec: &PolytopeSpec, theta: &[f64]) -> Result<DiscreteState> {
    check_dim(spec.dim(), theta.len())?;
    let states = enumerate_states(spec)?;
    let mut best = 0;
    let mut best_w = f64::NEG_INFINITY;
    for (i, z) in states.iter().enumerate() {
        let w = dot_state(z, theta);
        if w > best_w {
            best = i;
            best_w = w;
        }
    }
    Ok(states.into_iter().nth(best).expect("non-empty state space"))
}

/// `argmax_{z ∈ C} ⟨z, θ⟩`, dispatched on the polytope family.
///
/// Grid paths are solved by Dijkstra on `costs = −θ` when every weight is
/// negative. Otherwise maximising is a longest-path problem; it is solved by
/// enumeration when the grid is small enough and rejected as
/// [`Error::Unsupported`] when it is not.
pub fn map_solve(spec: &PolytopeSpec, theta: &[f64]) -> Result<DiscreteState> {
    spec.validate()?;
    check_dim(spec.dim(), theta.len())?;
    match *spec {
        PolytopeSpec::Categorical { .. } | PolytopeSpec::KSubset { .. } => map_topk(spec, theta),
        PolytopeSpec::SpanningTree { .. } => map_spanning_tree(spec, theta),
        PolytopeSpec::GridPath {
            rows,
            cols,
            neighborhood,
        } => {
            if theta.iter().all(|&t| t < 0.0) {
                let costs =
                    GridCosts::new(rows, cols, theta.iter().map(|t| -t).collect(), neighborhood)?;
                Ok(map_grid_path(&costs))
            } else {
                map_bruteforce(spec, theta).map_err(|e| match e {
                    Error::Unsupported(_) | Error::GuardExceeded { .. } => Error::Unsupported(
                        format!("grid MAP with non-negative weights on {spec} is too large to enumerate"),
                    ),
                    other => other,
                })
            }
        }
    }
}
