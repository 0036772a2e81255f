//! Constrained discrete exponential families.
//!
//! A distribution over binary vectors `z` restricted to a feasible set `C`:
//!
//! ```text
//! p(z; θ, τ) = exp(⟨z, θ⟩ / τ − A(θ/τ))   for z ∈ C
//! A(θ/τ)     = log Σ_{z ∈ C} exp(⟨z, θ⟩ / τ)
//! μ(θ)       = Σ_{z ∈ C} p(z; θ, τ) z
//! ```
//!
//! Small state spaces are enumerated exhaustively; that gives exact PMFs,
//! marginals, sampling and gradients of expected losses, which serve as the
//! ground truth for every estimator in the crate.

use std::fmt;
use std::ops::Deref;
use std::str::FromStr;

use itertools::Itertools;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Default cap on the number of states an exact oracle may enumerate.
pub const DEFAULT_GUARD: usize = 1_000_000;

/// Largest complete graph the generic enumerator handles.
pub const MAX_ENUM_TREE_VERTICES: usize = 9;
/// Largest grid side the generic enumerator handles.
pub const MAX_ENUM_GRID_SIDE: usize = 5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Neighborhood {
    /// Orthogonal moves only.
    #[default]
    Four,
    /// Orthogonal and diagonal moves.
    Eight,
}

/// The feasible set `C` of a constrained exponential family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PolytopeSpec {
    /// One-hot vectors of length `n`.
    Categorical { n: usize },
    /// Binary vectors of length `n` with exactly `k` ones.
    KSubset { n: usize, k: usize },
    /// Edge indicators of spanning trees of the complete graph on `v` vertices.
    /// Edges `(i, j)` with `i < j` are indexed lexicographically, see [`edge_index`].
    SpanningTree { v: usize },
    /// Cell indicators (row-major) of simple paths from the top-left to the
    /// bottom-right cell.
    GridPath {
        rows: usize,
        cols: usize,
        neighborhood: Neighborhood,
    },
}

impl PolytopeSpec {
    pub fn categorical(n: usize) -> Result<Self> {
        let spec = PolytopeSpec::Categorical { n };
        spec.validate()?;
        Ok(spec)
    }

    pub fn k_subset(n: usize, k: usize) -> Result<Self> {
        let spec = PolytopeSpec::KSubset { n, k };
        spec.validate()?;
        Ok(spec)
    }

    pub fn spanning_tree(v: usize) -> Result<Self> {
        let spec = PolytopeSpec::SpanningTree { v };
        spec.validate()?;
        Ok(spec)
    }

    pub fn grid_path(rows: usize, cols: usize) -> Result<Self> {
        let spec = PolytopeSpec::GridPath {
            rows,
            cols,
            neighborhood: Neighborhood::Four,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            PolytopeSpec::Categorical { n: 0 } => Err(Error::InvalidParameter(
                "categorical requires n >= 1".into(),
            )),
            PolytopeSpec::KSubset { n, k } if k == 0 || k > n => Err(Error::InvalidParameter(
                format!("k-subset requires 1 <= k <= n, got n={n}, k={k}"),
            )),
            PolytopeSpec::SpanningTree { v } if v < 2 => Err(Error::InvalidParameter(
                "spanning tree requires v >= 2".into(),
            )),
            PolytopeSpec::GridPath { rows, cols, .. } if rows == 0 || cols == 0 => Err(
                Error::InvalidParameter("grid path requires rows >= 1 and cols >= 1".into()),
            ),
            _ => Ok(()),
        }
    }

    /// Length `m` of the state and parameter vectors.
    pub fn dim(&self) -> usize {
        match *self {
            PolytopeSpec::Categorical { n } | PolytopeSpec::KSubset { n, .. } => n,
            PolytopeSpec::SpanningTree { v } => v * (v - 1) / 2,
            PolytopeSpec::GridPath { rows, cols, .. } => rows * cols,
        }
    }

    /// Subset size for the top-k family (`1` for categorical).
    pub fn subset_size(&self) -> Option<usize> {
        match *self {
            PolytopeSpec::Categorical { .. } => Some(1),
            PolytopeSpec::KSubset { k, .. } => Some(k),
            _ => None,
        }
    }

    /// Closed-form `|C|` where one is known; `None` for grid paths.
    /// Saturates at `u128::MAX`.
    pub fn state_count(&self) -> Option<u128> {
        match *self {
            PolytopeSpec::Categorical { n } => Some(n as u128),
            PolytopeSpec::KSubset { n, k } => Some(binomial(n as u128, k as u128)),
            // Cayley's formula.
            PolytopeSpec::SpanningTree { v } => {
                let mut count: u128 = 1;
                for _ in 2..v {
                    count = count.saturating_mul(v as u128);
                }
                Some(count)
            }
            PolytopeSpec::GridPath { .. } => None,
        }
    }

    /// Membership test `z ∈ C`.
    pub fn contains(&self, z: &DiscreteState) -> bool {
        if z.len() != self.dim() {
            return false;
        }
        match *self {
            PolytopeSpec::Categorical { .. } => z.count_ones() == 1,
            PolytopeSpec::KSubset { k, .. } => z.count_ones() == k,
            PolytopeSpec::SpanningTree { v } => is_spanning_tree(v, z),
            PolytopeSpec::GridPath {
                rows,
                cols,
                neighborhood,
            } => is_grid_path(rows, cols, neighborhood, z),
        }
    }
}

impl fmt::Display for PolytopeSpec {
    /// Compact descriptor, also accepted by [`FromStr`]: `categorical:50`,
    /// `ksubset:6:2`, `tree:5`, `grid:3x3`, `grid8:3x3`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            PolytopeSpec::Categorical { n } => write!(f, "categorical:{n}"),
            PolytopeSpec::KSubset { n, k } => write!(f, "ksubset:{n}:{k}"),
            PolytopeSpec::SpanningTree { v } => write!(f, "tree:{v}"),
            PolytopeSpec::GridPath {
                rows,
                cols,
                neighborhood: Neighborhood::Four,
            } => write!(f, "grid:{rows}x{cols}"),
            PolytopeSpec::GridPath {
                rows,
                cols,
                neighborhood: Neighborhood::Eight,
            } => write!(f, "grid8:{rows}x{cols}"),
        }
    }
}

impl FromStr for PolytopeSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("unrecognised spec descriptor `{s}`"));
        let num = |t: &str| t.trim().parse::<usize>().map_err(|_| bad());
        let parts: Vec<&str> = s.trim().split(':').collect();
        let spec = match parts.as_slice() {
            ["categorical", n] => PolytopeSpec::Categorical { n: num(n)? },
            ["ksubset", n, k] => PolytopeSpec::KSubset {
                n: num(n)?,
                k: num(k)?,
            },
            ["tree", v] => PolytopeSpec::SpanningTree { v: num(v)? },
            [kind @ ("grid" | "grid8"), dims] => {
                let (r, c) = dims.split_once('x').ok_or_else(bad)?;
                PolytopeSpec::GridPath {
                    rows: num(r)?,
                    cols: num(c)?,
                    neighborhood: if *kind == "grid8" {
                        Neighborhood::Eight
                    } else {
                        Neighborhood::Four
                    },
                }
            }
            _ => return Err(bad()),
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) is divisible by (i + 1) at every step.
        acc = match acc.checked_mul(n - i) {
            Some(v) => v / (i + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Index of the undirected edge `(i, j)`, `i < j`, in a complete graph on `v` vertices.
pub fn edge_index(v: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < v);
    i * v - i * (i + 1) / 2 + (j - i - 1)
}

/// All edges `(i, j)` of the complete graph on `v` vertices, in index order.
pub fn edge_list(v: usize) -> Vec<(usize, usize)> {
    (0..v)
        .flat_map(|i| (i + 1..v).map(move |j| (i, j)))
        .collect()
}

/// Natural parameters `θ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "parameter component {i} is not finite"
            )));
        }
        Ok(ParamVector(values))
    }

    pub fn zeros(m: usize) -> Self {
        ParamVector(vec![0.0; m])
    }

    /// Checks the length against `spec` as well as finiteness.
    pub fn for_spec(spec: &PolytopeSpec, values: Vec<f64>) -> Result<Self> {
        check_dim(spec.dim(), values.len())?;
        Self::new(values)
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ParamVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for ParamVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        ParamVector::new(values)
    }
}

impl From<ParamVector> for Vec<f64> {
    fn from(p: ParamVector) -> Vec<f64> {
        p.0
    }
}

/// A binary vertex of the polytope.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DiscreteState {
    bits: Vec<u8>,
}

impl DiscreteState {
    /// Panics if any entry is not 0 or 1.
    pub fn from_bits(bits: Vec<u8>) -> Self {
        assert!(bits.iter().all(|&b| b <= 1), "state bits must be 0 or 1");
        DiscreteState { bits }
    }

    pub fn from_indices(m: usize, ones: &[usize]) -> Self {
        let mut bits = vec![0u8; m];
        for &i in ones {
            bits[i] = 1;
        }
        DiscreteState { bits }
    }

    pub fn one_hot(m: usize, i: usize) -> Self {
        Self::from_indices(m, &[i])
    }

    pub fn zeros(m: usize) -> Self {
        DiscreteState { bits: vec![0; m] }
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }

    /// Positions of the ones, ascending.
    pub fn indices(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| (b == 1).then_some(i))
            .collect()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| f64::from(b)).collect()
    }

    /// Enumeration order: lexicographic over the bits with `1` ranked before
    /// `0`, i.e. ascending lexicographic order of the index lists. For a
    /// categorical space this is `e1, e2, …`.
    pub fn enumeration_cmp(&self, other: &Self) -> std::cmp::Ordering {
        other.bits.cmp(&self.bits)
    }
}

/// Softmax temperature `τ > 0`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Temperature(f64);

impl Temperature {
    pub const ONE: Temperature = Temperature(1.0);

    pub fn new(tau: f64) -> Result<Self> {
        if tau.is_finite() && tau > 0.0 {
            Ok(Temperature(tau))
        } else {
            Err(Error::InvalidParameter(format!(
                "temperature must be positive and finite, got {tau}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for Temperature {
    fn default() -> Self {
        Temperature::ONE
    }
}

/// `⟨z, θ⟩`.
pub fn weight(z: &DiscreteState, theta: &[f64]) -> Result<f64> {
    check_dim(theta.len(), z.len())?;
    Ok(dot_state(z, theta))
}

pub(crate) fn dot_state(z: &DiscreteState, theta: &[f64]) -> f64 {
    z.bits
        .iter()
        .zip(theta)
        .filter(|(&b, _)| b == 1)
        .map(|(_, &t)| t)
        .sum()
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// An enumerated feasible set, reusable across parameter vectors.
#[derive(Clone, Debug)]
pub struct StateSpace {
    spec: PolytopeSpec,
    states: Vec<DiscreteState>,
}

impl StateSpace {
    pub fn new(spec: PolytopeSpec) -> Result<Self> {
        Self::with_guard(spec, DEFAULT_GUARD)
    }

    pub fn with_guard(spec: PolytopeSpec, guard: usize) -> Result<Self> {
        let states = enumerate_states_with_guard(&spec, guard)?;
        Ok(StateSpace { spec, states })
    }

    pub fn spec(&self) -> &PolytopeSpec {
        &self.spec
    }

    pub fn states(&self) -> &[DiscreteState] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Exact tempered distribution over this space.
    pub fn distribution(&self, theta: &[f64], tau: Temperature) -> Result<ExactDistribution<'_>> {
        check_dim(self.spec.dim(), theta.len())?;
        let scores: Vec<f64> = self
            .states
            .iter()
            .map(|z| dot_state(z, theta) / tau.value())
            .collect();
        let log_partition = log_sum_exp(&scores);
        let probs: Vec<f64> = scores.iter().map(|s| (s - log_partition).exp()).collect();
        let mut cdf = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for p in &probs {
            acc += p;
            cdf.push(acc);
        }
        Ok(ExactDistribution {
            space: self,
            tau,
            probs,
            cdf,
            log_partition,
        })
    }
}

/// `p(·; θ, τ)` over an enumerated [`StateSpace`].
#[derive(Clone, Debug)]
pub struct ExactDistribution<'a> {
    space: &'a StateSpace,
    tau: Temperature,
    probs: Vec<f64>,
    cdf: Vec<f64>,
    log_partition: f64,
}

impl<'a> ExactDistribution<'a> {
    pub fn states(&self) -> &'a [DiscreteState] {
        &self.space.states
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn tau(&self) -> Temperature {
        self.tau
    }

    /// `A(θ/τ)`.
    pub fn log_partition(&self) -> f64 {
        self.log_partition
    }

    pub fn pmf(&self, z: &DiscreteState) -> f64 {
        match self.states().iter().position(|s| s == z) {
            Some(i) => self.probs[i],
            None => 0.0,
        }
    }

    pub fn marginals(&self) -> Vec<f64> {
        let mut mu = vec![0.0; self.space.spec.dim()];
        for (z, p) in self.states().iter().zip(&self.probs) {
            for i in z.indices() {
                mu[i] += p;
            }
        }
        mu
    }

    pub fn expected<F>(&self, loss: F) -> f64
    where
        F: Fn(&DiscreteState) -> f64,
    {
        self.states()
            .iter()
            .zip(&self.probs)
            .map(|(z, p)| p * loss(z))
            .sum()
    }

    /// `∇θ E[ℓ(z)] = (1/τ) (E[z ℓ(z)] − E[ℓ(z)] μ)`.
    pub fn gradient<F>(&self, loss: F) -> Vec<f64>
    where
        F: Fn(&DiscreteState) -> f64,
    {
        let m = self.space.spec.dim();
        let mut z_loss = vec![0.0; m];
        let mut mu = vec![0.0; m];
        let mut mean_loss = 0.0;
        for (z, &p) in self.states().iter().zip(&self.probs) {
            let l = loss(z);
            mean_loss += p * l;
            for i in z.indices() {
                z_loss[i] += p * l;
                mu[i] += p;
            }
        }
        let inv_tau = 1.0 / self.tau.value();
        z_loss
            .iter()
            .zip(&mu)
            .map(|(zl, m)| inv_tau * (zl - mean_loss * m))
            .collect()
    }

    /// Index into [`states`](Self::states) of an exact draw.
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cdf.last().expect("state space is never empty");
        let u = rng.random::<f64>() * total;
        self.cdf
            .partition_point(|&c| c <= u)
            .min(self.cdf.len() - 1)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &'a DiscreteState {
        &self.states()[self.sample_index(rng)]
    }
}

/// Every `z ∈ C` exactly once, in [`DiscreteState::enumeration_cmp`] order.
pub fn enumerate_states(spec: &PolytopeSpec) -> Result<Vec<DiscreteState>> {
    enumerate_states_with_guard(spec, DEFAULT_GUARD)
}

pub fn enumerate_states_with_guard(
    spec: &PolytopeSpec,
    guard: usize,
) -> Result<Vec<DiscreteState>> {
    spec.validate()?;
    match *spec {
        PolytopeSpec::SpanningTree { v } if v > MAX_ENUM_TREE_VERTICES => {
            return Err(Error::Unsupported(format!(
                "spanning-tree enumeration is limited to v <= {MAX_ENUM_TREE_VERTICES}"
            )))
        }
        PolytopeSpec::GridPath { rows, cols, .. }
            if rows > MAX_ENUM_GRID_SIDE || cols > MAX_ENUM_GRID_SIDE =>
        {
            return Err(Error::Unsupported(format!(
                "grid-path enumeration is limited to {MAX_ENUM_GRID_SIDE}x{MAX_ENUM_GRID_SIDE}"
            )))
        }
        _ => {}
    }
    if let Some(count) = spec.state_count() {
        if count > guard as u128 {
            return Err(Error::GuardExceeded {
                count,
                limit: guard,
            });
        }
    }
    let m = spec.dim();
    let states = match *spec {
        PolytopeSpec::Categorical { n } => (0..n).map(|i| DiscreteState::one_hot(n, i)).collect(),
        PolytopeSpec::KSubset { n, k } => (0..n)
            .combinations(k)
            .map(|c| DiscreteState::from_indices(n, &c))
            .collect(),
        PolytopeSpec::SpanningTree { v } => enumerate_trees(v),
        PolytopeSpec::GridPath {
            rows,
            cols,
            neighborhood,
        } => enumerate_grid_paths(rows, cols, neighborhood, guard)?,
    };
    debug_assert!(states.iter().all(|z| z.len() == m));
    Ok(states)
}

/// Minimal union-find over `0..n` with path halving.
#[derive(Clone, Debug)]
pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false when `a` and `b` were already connected.
    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[rb.max(ra)] = rb.min(ra);
        true
    }
}

fn is_spanning_tree(v: usize, z: &DiscreteState) -> bool {
    if z.count_ones() != v - 1 {
        return false;
    }
    let edges = edge_list(v);
    let mut uf = UnionFind::new(v);
    // v - 1 edges without a cycle span all v vertices.
    z.indices().into_iter().all(|e| {
        let (a, b) = edges[e];
        uf.union(a, b)
    })
}

fn enumerate_trees(v: usize) -> Vec<DiscreteState> {
    let edges = edge_list(v);
    let m = edges.len();
    let mut out = Vec::new();
    let mut chosen = Vec::with_capacity(v - 1);
    let labels: Vec<usize> = (0..v).collect();
    tree_dfs(&edges, 0, &labels, &mut chosen, v - 1, m, &mut out);
    out
}

// Depth-first over edges in index order; a forest is represented by its
// component labels, copied per level (v <= 9 keeps this cheap).
fn tree_dfs(
    edges: &[(usize, usize)],
    start: usize,
    labels: &[usize],
    chosen: &mut Vec<usize>,
    need: usize,
    m: usize,
    out: &mut Vec<DiscreteState>,
) {
    if chosen.len() == need {
        out.push(DiscreteState::from_indices(m, chosen));
        return;
    }
    let remaining = need - chosen.len();
    for e in start..m {
        if m - e < remaining {
            break;
        }
        let (a, b) = edges[e];
        let (la, lb) = (labels[a], labels[b]);
        if la == lb {
            continue;
        }
        let merged: Vec<usize> = labels
            .iter()
            .map(|&l| if l == lb { la } else { l })
            .collect();
        chosen.push(e);
        tree_dfs(edges, e + 1, &merged, chosen, need, m, out);
        chosen.pop();
    }
}

pub(crate) fn grid_neighbors(
    rows: usize,
    cols: usize,
    neighborhood: Neighborhood,
    cell: usize,
) -> impl Iterator<Item = usize> {
    const ORTHO: [(isize, isize); 4] = [(-1, 0), (0, -1), (0, 1), (1, 0)];
    const ALL: [(isize, isize); 8] = [
        (-1, -1),
        (-1, 0),
        (-1, 1),
        (0, -1),
        (0, 1),
        (1, -1),
        (1, 0),
        (1, 1),
    ];
    let offsets: &'static [(isize, isize)] = match neighborhood {
        Neighborhood::Four => &ORTHO,
        Neighborhood::Eight => &ALL,
    };
    let (r, c) = ((cell / cols) as isize, (cell % cols) as isize);
    offsets.iter().filter_map(move |&(dr, dc)| {
        let (nr, nc) = (r + dr, c + dc);
        (nr >= 0 && nc >= 0 && (nr as usize) < rows && (nc as usize) < cols)
            .then(|| nr as usize * cols + nc as usize)
    })
}

fn enumerate_grid_paths(
    rows: usize,
    cols: usize,
    neighborhood: Neighborhood,
    guard: usize,
) -> Result<Vec<DiscreteState>> {
    let cells = rows * cols;
    let target = cells - 1;
    let mut seen = std::collections::HashSet::new();
    // Distinct paths may share a cell set, so the walk itself is budgeted too.
    let mut budget = guard.saturating_mul(32).max(1 << 16);
    let mut stack: Vec<(usize, u32, usize)> = Vec::new();
    // (cell, visited mask, next neighbour slot)
    let nbrs: Vec<Vec<usize>> = (0..cells)
        .map(|c| grid_neighbors(rows, cols, neighborhood, c).collect())
        .collect();
    stack.push((0, 1u32, 0));
    if target == 0 {
        seen.insert(1u32);
    }
    while let Some(top) = stack.last_mut() {
        let (cell, mask, slot) = *top;
        if cell == target || slot >= nbrs[cell].len() {
            stack.pop();
            continue;
        }
        top.2 += 1;
        let next = nbrs[cell][slot];
        if mask & (1 << next) != 0 {
            continue;
        }
        let next_mask = mask | (1 << next);
        if next == target {
            budget = budget.saturating_sub(1);
            if seen.insert(next_mask) && seen.len() > guard {
                return Err(Error::GuardExceeded {
                    count: seen.len() as u128,
                    limit: guard,
                });
            }
            if budget == 0 {
                return Err(Error::GuardExceeded {
                    count: seen.len() as u128 + 1,
                    limit: guard,
                });
            }
            continue;
        }
        stack.push((next, next_mask, 0));
    }
    let mut states: Vec<DiscreteState> = seen
        .into_iter()
        .map(|mask| DiscreteState {
            bits: (0..cells).map(|i| ((mask >> i) & 1) as u8).collect(),
        })
        .collect();
    states.sort_by(DiscreteState::enumeration_cmp);
    Ok(states)
}

fn is_grid_path(rows: usize, cols: usize, neighborhood: Neighborhood, z: &DiscreteState) -> bool {
    let cells = rows * cols;
    let target = cells - 1;
    let bits = z.bits();
    if bits[0] != 1 || bits[target] != 1 {
        return false;
    }
    let need = z.count_ones();
    // Hamiltonian path from corner to corner inside the selected cells.
    #[allow(clippy::too_many_arguments)]
    fn walk(
        cell: usize,
        visited: &mut [bool],
        count: usize,
        need: usize,
        target: usize,
        bits: &[u8],
        rows: usize,
        cols: usize,
        nb: Neighborhood,
    ) -> bool {
        if cell == target {
            return count == need;
        }
        for next in grid_neighbors(rows, cols, nb, cell) {
            if bits[next] == 1 && !visited[next] {
                visited[next] = true;
                if walk(next, visited, count + 1, need, target, bits, rows, cols, nb) {
                    return true;
                }
                visited[next] = false;
            }
        }
        false
    }
    let mut visited = vec![false; cells];
    visited[0] = true;
    walk(
        0,
        &mut visited,
        1,
        need,
        target,
        bits,
        rows,
        cols,
        neighborhood,
    )
}

/// `A(θ/τ) = log Σ_{z∈C} exp(⟨z,θ⟩/τ)`.
pub fn log_partition(spec: &PolytopeSpec, theta: &[f64], tau: Temperature) -> Result<f64> {
    let space = StateSpace::new(*spec)?;
    Ok(space.distribution(theta, tau)?.log_partition())
}

/// `p(z; θ, τ)`. States outside `C` get probability zero, or
/// [`Error::InfeasibleState`] when `strict` is set.
pub fn pmf(
    spec: &PolytopeSpec,
    theta: &[f64],
    tau: Temperature,
    z: &DiscreteState,
    strict: bool,
) -> Result<f64> {
    check_dim(spec.dim(), theta.len())?;
    check_dim(spec.dim(), z.len())?;
    if !spec.contains(z) {
        return if strict {
            Err(Error::InfeasibleState)
        } else {
            Ok(0.0)
        };
    }
    let a = log_partition(spec, theta, tau)?;
    Ok((dot_state(z, theta) / tau.value() - a).exp())
}

pub fn marginals(spec: &PolytopeSpec, theta: &[f64], tau: Temperature) -> Result<Vec<f64>> {
    let space = StateSpace::new(*spec)?;
    Ok(space.distribution(theta, tau)?.marginals())
}

pub fn sample_exact<R: Rng + ?Sized>(
    spec: &PolytopeSpec,
    theta: &[f64],
    tau: Temperature,
    rng: &mut R,
) -> Result<DiscreteState> {
    let space = StateSpace::new(*spec)?;
    let dist = space.distribution(theta, tau)?;
    Ok(dist.sample(rng).clone())
}

/// `E_{z∼p_τ}[ℓ(z)]`.
pub fn exact_expected_loss<F>(
    spec: &PolytopeSpec,
    theta: &[f64],
    tau: Temperature,
    loss: F,
) -> Result<f64>
where
    F: Fn(&DiscreteState) -> f64,
{
    let space = StateSpace::new(*spec)?;
    Ok(space.distribution(theta, tau)?.expected(loss))
}

/// `∇θ E_{z∼p_τ}[ℓ(z)]` in closed form.
pub fn exact_gradient<F>(
    spec: &PolytopeSpec,
    theta: &[f64],
    tau: Temperature,
    loss: F,
) -> Result<Vec<f64>>
where
    F: Fn(&DiscreteState) -> f64,
{
    let space = StateSpace::new(*spec)?;
    Ok(space.distribution(theta, tau)?.gradient(loss))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bits(b: &[u8]) -> DiscreteState {
        DiscreteState::from_bits(b.to_vec())
    }

    fn t(v: f64) -> Temperature {
        Temperature::new(v).unwrap()
    }

    #[test]
    fn enumerates_categorical_in_basis_order() {
        let states = enumerate_states(&PolytopeSpec::categorical(3).unwrap()).unwrap();
        assert_eq!(
            states,
            vec![bits(&[1, 0, 0]), bits(&[0, 1, 0]), bits(&[0, 0, 1])]
        );
    }

    #[test]
    fn enumerates_k_subsets() {
        let states = enumerate_states(&PolytopeSpec::k_subset(4, 2).unwrap()).unwrap();
        assert_eq!(states.len(), 6);
        assert!(states.iter().all(|z| z.count_ones() == 2));
        assert!(states
            .windows(2)
            .all(|w| w[0].enumeration_cmp(&w[1]).is_lt()));
    }

    // Independent count: every (v-1)-edge subset, kept if it is connected.
    fn brute_tree_count(v: usize) -> usize {
        let edges = edge_list(v);
        (0..edges.len())
            .combinations(v - 1)
            .filter(|sub| {
                let mut adj = vec![vec![]; v];
                for &e in sub {
                    let (a, b) = edges[e];
                    adj[a].push(b);
                    adj[b].push(a);
                }
                let mut seen = vec![false; v];
                let mut stack = vec![0];
                seen[0] = true;
                while let Some(x) = stack.pop() {
                    for &y in &adj[x] {
                        if !seen[y] {
                            seen[y] = true;
                            stack.push(y);
                        }
                    }
                }
                seen.iter().all(|&s| s)
            })
            .count()
    }

    #[test]
    fn spanning_tree_counts_follow_cayley() {
        for v in 2..=6 {
            let spec = PolytopeSpec::spanning_tree(v).unwrap();
            let states = enumerate_states(&spec).unwrap();
            assert_eq!(states.len(), brute_tree_count(v), "v={v}");
            assert_eq!(states.len() as u128, spec.state_count().unwrap());
            assert!(states.iter().all(|z| spec.contains(z)));
        }
        assert_eq!(brute_tree_count(4), 16);
    }

    #[test]
    fn grid_path_enumeration() {
        let spec = PolytopeSpec::grid_path(2, 2).unwrap();
        let states = enumerate_states(&spec).unwrap();
        assert_eq!(states, vec![bits(&[1, 1, 0, 1]), bits(&[1, 0, 1, 1])]);
        let one = enumerate_states(&PolytopeSpec::grid_path(1, 1).unwrap()).unwrap();
        assert_eq!(one, vec![bits(&[1])]);
        // Twelve simple corner-to-corner paths in a 3x3 grid; the two Hamiltonian
        // snakes share the full cell set.
        let s33 = enumerate_states(&PolytopeSpec::grid_path(3, 3).unwrap()).unwrap();
        assert_eq!(s33.len(), 11);
        assert!(s33
            .iter()
            .all(|z| PolytopeSpec::grid_path(3, 3).unwrap().contains(z)));
    }

    #[test]
    fn enumeration_limits() {
        assert!(matches!(
            enumerate_states(&PolytopeSpec::spanning_tree(10).unwrap()),
            Err(Error::Unsupported(_))
        ));
        assert!(matches!(
            enumerate_states(&PolytopeSpec::grid_path(6, 2).unwrap()),
            Err(Error::Unsupported(_))
        ));
        assert!(matches!(
            enumerate_states(&PolytopeSpec::spanning_tree(9).unwrap()),
            Err(Error::GuardExceeded { count: 4782969, .. })
        ));
        assert!(matches!(
            enumerate_states_with_guard(&PolytopeSpec::k_subset(10, 5).unwrap(), 100),
            Err(Error::GuardExceeded {
                count: 252,
                limit: 100
            })
        ));
        let spec8 = PolytopeSpec::GridPath {
            rows: 5,
            cols: 5,
            neighborhood: Neighborhood::Eight,
        };
        assert!(matches!(
            enumerate_states_with_guard(&spec8, 1000),
            Err(Error::GuardExceeded { .. })
        ));
    }

    #[test]
    fn spec_validation() {
        assert!(PolytopeSpec::k_subset(3, 0).is_err());
        assert!(PolytopeSpec::k_subset(3, 4).is_err());
        assert!(PolytopeSpec::spanning_tree(1).is_err());
        assert!(PolytopeSpec::grid_path(0, 3).is_err());
        assert_eq!(PolytopeSpec::spanning_tree(5).unwrap().dim(), 10);
        assert_eq!(PolytopeSpec::grid_path(3, 4).unwrap().dim(), 12);
        for s in [
            "categorical:50",
            "ksubset:6:2",
            "tree:5",
            "grid:3x3",
            "grid8:2x4",
        ] {
            assert_eq!(s.parse::<PolytopeSpec>().unwrap().to_string(), s);
        }
        assert!("ksubset:2:3".parse::<PolytopeSpec>().is_err());
        assert!("simplex:3".parse::<PolytopeSpec>().is_err());
    }

    #[test]
    fn weights() {
        let theta = [3.0, 1.0, 2.0];
        assert_eq!(weight(&bits(&[1, 0, 0]), &theta).unwrap(), 3.0);
        assert_eq!(weight(&bits(&[1, 0, 1]), &theta).unwrap(), 5.0);
        assert_eq!(weight(&bits(&[0, 0, 0]), &theta).unwrap(), 0.0);
        assert!(matches!(
            weight(&bits(&[1, 0]), &theta),
            Err(Error::DimensionMismatch {
                expected: 3,
                got: 2
            })
        ));
    }

    #[test]
    fn log_partition_examples() {
        let c3 = PolytopeSpec::categorical(3).unwrap();
        let c2 = PolytopeSpec::categorical(2).unwrap();
        let k42 = PolytopeSpec::k_subset(4, 2).unwrap();
        assert!((log_partition(&c3, &[0.0; 3], t(1.0)).unwrap() - 3f64.ln()).abs() < 1e-15);
        assert!((log_partition(&c2, &[3f64.ln(), 0.0], t(1.0)).unwrap() - 4f64.ln()).abs() < 1e-15);
        assert!((log_partition(&k42, &[0.0; 4], t(1.0)).unwrap() - 6f64.ln()).abs() < 1e-15);
        // No overflow with large logits.
        let big = log_partition(&c3, &[1000.0, 999.0, -1000.0], t(1.0)).unwrap();
        assert!((big - (1000.0 + (1.0 + (-1f64).exp()).ln())).abs() < 1e-9);
    }

    #[test]
    fn pmf_examples() {
        let c3 = PolytopeSpec::categorical(3).unwrap();
        let c2 = PolytopeSpec::categorical(2).unwrap();
        let e1 = bits(&[1, 0, 0]);
        assert!((pmf(&c3, &[0.0; 3], t(1.0), &e1, true).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let th = [3f64.ln(), 0.0];
        assert!((pmf(&c2, &th, t(1.0), &bits(&[1, 0]), true).unwrap() - 0.75).abs() < 1e-15);
        assert!((pmf(&c2, &th, t(0.5), &bits(&[1, 0]), true).unwrap() - 0.9).abs() < 1e-15);
        assert_eq!(
            pmf(&c3, &[0.0; 3], t(1.0), &bits(&[1, 1, 0]), false).unwrap(),
            0.0
        );
        assert_eq!(
            pmf(&c3, &[0.0; 3], t(1.0), &bits(&[1, 1, 0]), true),
            Err(Error::InfeasibleState)
        );
    }

    #[test]
    fn temperature_rejects_zero() {
        assert!(Temperature::new(0.0).is_err());
        assert!(Temperature::new(-1.0).is_err());
        assert!(Temperature::new(f64::NAN).is_err());
    }

    #[test]
    fn marginal_examples() {
        let c3 = PolytopeSpec::categorical(3).unwrap();
        for m in marginals(&c3, &[0.0; 3], t(1.0)).unwrap() {
            assert!((m - 1.0 / 3.0).abs() < 1e-15);
        }
        let k32 = PolytopeSpec::k_subset(3, 2).unwrap();
        for m in marginals(&k32, &[0.0; 3], t(1.0)).unwrap() {
            assert!((m - 2.0 / 3.0).abs() < 1e-15);
        }
        let theta = [1.0, 0.0, -1.0];
        let z: f64 = theta.iter().map(|v: &f64| v.exp()).sum();
        for (m, th) in marginals(&c3, &theta, t(1.0)).unwrap().iter().zip(theta) {
            assert!((m - th.exp() / z).abs() < 1e-15);
        }
    }

    #[test]
    fn lower_temperature_concentrates_on_map() {
        let c4 = PolytopeSpec::categorical(4).unwrap();
        let theta = [0.3, 1.1, -0.4, 0.9];
        let mut prev = f64::INFINITY;
        for tau in [1.0, 0.5, 0.1, 0.01] {
            let mu = marginals(&c4, &theta, t(tau)).unwrap();
            let dist = mu
                .iter()
                .enumerate()
                .map(|(i, m)| (m - if i == 1 { 1.0 } else { 0.0 }).abs())
                .fold(0.0, f64::max);
            assert!(dist < prev, "tau={tau}");
            prev = dist;
        }
        assert!(prev < 1e-8);
    }

    #[test]
    fn exact_sampling_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let c3 = PolytopeSpec::categorical(3).unwrap();
        let space = StateSpace::new(c3).unwrap();
        let dist = space.distribution(&[100.0, 0.0, 0.0], t(1.0)).unwrap();
        let hits = (0..10_000)
            .filter(|_| dist.sample_index(&mut rng) == 0)
            .count();
        assert!(hits as f64 / 1e4 > 0.999);

        let c2 = StateSpace::new(PolytopeSpec::categorical(2).unwrap()).unwrap();
        let fair = c2.distribution(&[0.0, 0.0], t(1.0)).unwrap();
        let n = 100_000;
        let heads = (0..n).filter(|_| fair.sample_index(&mut rng) == 0).count();
        assert!((heads as f64 / n as f64 - 0.5).abs() < 0.01);

        let k42 = StateSpace::new(PolytopeSpec::k_subset(4, 2).unwrap()).unwrap();
        let uni = k42.distribution(&[0.0; 4], t(1.0)).unwrap();
        let mut counts = [0usize; 6];
        for _ in 0..n {
            counts[uni.sample_index(&mut rng)] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 1.0 / 6.0).abs() < 0.01);
        }

        let a = sample_exact(
            &c3,
            &[0.1, 0.2, 0.3],
            t(1.0),
            &mut ChaCha8Rng::seed_from_u64(3),
        )
        .unwrap();
        let b = sample_exact(
            &c3,
            &[0.1, 0.2, 0.3],
            t(1.0),
            &mut ChaCha8Rng::seed_from_u64(3),
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn expected_loss_examples() {
        let c3 = PolytopeSpec::categorical(3).unwrap();
        assert!(
            (exact_expected_loss(&c3, &[0.0; 3], t(1.0), |_| 1.0).unwrap() - 1.0).abs() < 1e-15
        );
        let sq = |z: &DiscreteState| z.to_f64().iter().map(|v| v * v).sum::<f64>();
        assert!((exact_expected_loss(&c3, &[0.0; 3], t(1.0), sq).unwrap() - 1.0).abs() < 1e-15);
        let theta = [1.0, 0.0, -1.0];
        let idx = |z: &DiscreteState| (z.indices()[0] + 1) as f64;
        let norm: f64 = theta.iter().map(|v: &f64| v.exp()).sum();
        let expect: f64 = theta
            .iter()
            .enumerate()
            .map(|(i, v)| v.exp() / norm * (i + 1) as f64)
            .sum();
        assert!((exact_expected_loss(&c3, &theta, t(1.0), idx).unwrap() - expect).abs() < 1e-14);
    }

    #[test]
    fn gradient_examples() {
        let c5 = PolytopeSpec::categorical(5).unwrap();
        let g = exact_gradient(&c5, &[0.3, -1.0, 2.0, 0.0, 0.5], t(0.7), |_| 4.2).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-14));

        let c3 = PolytopeSpec::categorical(3).unwrap();
        let losses = [2.0, -1.0, 0.5];
        let l = |z: &DiscreteState| losses[z.indices()[0]];
        let g = exact_gradient(&c3, &[0.0; 3], t(1.0), l).unwrap();
        let mean = losses.iter().sum::<f64>() / 3.0;
        for (gi, li) in g.iter().zip(losses) {
            assert!((gi - (li / 3.0 - mean / 3.0)).abs() < 1e-15);
        }
        // Central differences of the expected loss.
        let h = 1e-5;
        for i in 0..3 {
            let mut tp = [0.0; 3];
            let mut tm = [0.0; 3];
            tp[i] += h;
            tm[i] -= h;
            let fd = (exact_expected_loss(&c3, &tp, t(1.0), l).unwrap()
                - exact_expected_loss(&c3, &tm, t(1.0), l).unwrap())
                / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-9);
        }
        assert!(g.iter().sum::<f64>().abs() < 1e-15);
    }
}
