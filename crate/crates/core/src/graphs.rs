//! Graph families and their shift operators.
//!
//! Graphs are stored as an edge list with positive weights and no self-loops.
//! A [`ShiftOperator`] is the matrix that diffuses a signal one hop:
//! `[S]_{ij} != 0` only when `(j, i)` is an edge, so `(S x)_i` mixes the values
//! of the in-neighbors of `i`. The one exception is the sample-covariance shift,
//! which is dense and carries a diagonal.

use std::collections::{HashSet, VecDeque};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Generators give up after this many disconnected draws.
pub const MAX_RESAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    directed: bool,
    edges: Vec<Edge>,
}

impl Graph {
    /// Builds a graph after checking the edge list. Undirected graphs list each
    /// edge once; `(i, j)` and `(j, i)` would be a duplicate.
    pub fn new(n: usize, directed: bool, edges: Vec<Edge>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSize("a graph needs at least one vertex".into()));
        }
        let mut seen = HashSet::with_capacity(edges.len());
        for e in &edges {
            if e.source >= n || e.target >= n {
                return Err(Error::IndexOutOfRange { index: e.source.max(e.target), n });
            }
            if e.source == e.target {
                return Err(Error::InvalidParameter(format!("self-loop at vertex {}", e.source)));
            }
            if !(e.weight.is_finite() && e.weight > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "edge ({}, {}) has non-positive weight {}",
                    e.source, e.target, e.weight
                )));
            }
            let key = if directed {
                (e.source, e.target)
            } else {
                (e.source.min(e.target), e.source.max(e.target))
            };
            if !seen.insert(key) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate edge ({}, {})",
                    e.source, e.target
                )));
            }
        }
        Ok(Self { n, directed, edges })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Number of directed links; an undirected edge counts twice.
    pub fn directed_edge_count(&self) -> usize {
        if self.directed {
            self.edges.len()
        } else {
            2 * self.edges.len()
        }
    }

    /// `(source, weight)` pairs feeding each vertex, sorted by source.
    pub fn in_neighbors(&self) -> Vec<Vec<(usize, f64)>> {
        let mut lists = vec![Vec::new(); self.n];
        for e in &self.edges {
            lists[e.target].push((e.source, e.weight));
            if !self.directed {
                lists[e.source].push((e.target, e.weight));
            }
        }
        for l in &mut lists {
            l.sort_by_key(|&(j, _)| j);
        }
        lists
    }

    /// Targets reached from each vertex, sorted.
    pub fn out_neighbors(&self) -> Vec<Vec<usize>> {
        let mut lists = vec![Vec::new(); self.n];
        for e in &self.edges {
            lists[e.source].push(e.target);
            if !self.directed {
                lists[e.target].push(e.source);
            }
        }
        for l in &mut lists {
            l.sort_unstable();
        }
        lists
    }

    /// Weighted degree `Σ_j [A]_{ij}` (in-degree for directed graphs).
    pub fn degrees(&self) -> Vec<f64> {
        self.in_neighbors()
            .iter()
            .map(|l| l.iter().map(|&(_, w)| w).sum())
            .collect()
    }

    /// True when the edge set is exactly `{k -> k+1 mod N}` with unit weights.
    pub fn is_directed_cycle(&self) -> bool {
        if !self.directed || self.n < 2 || self.edges.len() != self.n {
            return false;
        }
        let mut hit = vec![false; self.n];
        for e in &self.edges {
            if e.target != (e.source + 1) % self.n || e.weight != 1.0 || hit[e.source] {
                return false;
            }
            hit[e.source] = true;
        }
        true
    }

    /// Undirected path `0 - 1 - ... - (n-1)` with unit weights.
    pub fn path(n: usize) -> Result<Self> {
        let edges = (1..n).map(|k| Edge { source: k - 1, target: k, weight: 1.0 }).collect();
        Self::new(n, false, edges)
    }

    /// Complete graph `K_n` with unit weights.
    pub fn complete(n: usize) -> Result<Self> {
        let mut edges = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                edges.push(Edge { source: i, target: j, weight: 1.0 });
            }
        }
        Self::new(n, false, edges)
    }

    pub fn to_document(&self, shift: Option<&ShiftOperator>) -> GraphDocument {
        GraphDocument {
            n: self.n,
            directed: self.directed,
            edges: self
                .edges
                .iter()
                .map(|e| (e.source + 1, e.target + 1, e.weight))
                .collect(),
            shift: shift.map(|s| ShiftDocument {
                kind: s.kind,
                matrix: s.matrix.row_iter().map(|r| r.iter().copied().collect()).collect(),
            }),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_document(None)).expect("graph serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(GraphDocument::from_json(text)?.into_parts()?.0)
    }
}

/// On-disk graph format: `{"n": N, "directed": bool, "edges": [[i, j, w], ...]}`
/// with 1-based indices. Graphs whose shift is not their adjacency (sample
/// covariance graphs) carry it under an optional `"shift"` key.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphDocument {
    pub n: usize,
    pub directed: bool,
    pub edges: Vec<(usize, usize, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift: Option<ShiftDocument>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShiftDocument {
    pub kind: ShiftKind,
    /// Row-major.
    pub matrix: Vec<Vec<f64>>,
}

impl GraphDocument {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("graph serialization cannot fail")
    }

    pub fn into_parts(self) -> Result<(Graph, Option<ShiftOperator>)> {
        let edges = self
            .edges
            .iter()
            .map(|&(i, j, w)| {
                if i == 0 || j == 0 {
                    return Err(Error::Malformed("edge indices are 1-based".into()));
                }
                Ok(Edge { source: i - 1, target: j - 1, weight: w })
            })
            .collect::<Result<Vec<_>>>()?;
        let graph = Graph::new(self.n, self.directed, edges)?;
        let shift = match self.shift {
            None => None,
            Some(doc) => {
                if doc.matrix.len() != self.n || doc.matrix.iter().any(|r| r.len() != self.n) {
                    return Err(Error::Malformed(format!("shift matrix must be {0} x {0}", self.n)));
                }
                let m = DMatrix::from_fn(self.n, self.n, |i, j| doc.matrix[i][j]);
                Some(ShiftOperator::new(m, doc.kind)?)
            }
        };
        Ok((graph, shift))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftKind {
    Adjacency,
    NormalizedAdjacency,
    DirectedCycleAdjacency,
    SampleCovariance,
}

/// A shift matrix together with its nonzero pattern, row by row.
#[derive(Debug, Clone)]
pub struct ShiftOperator {
    matrix: DMatrix<f64>,
    kind: ShiftKind,
    rows: Vec<Vec<(usize, f64)>>,
}

impl ShiftOperator {
    pub fn new(matrix: DMatrix<f64>, kind: ShiftKind) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::InvalidSize(format!(
                "shift must be square and nonempty, got {} x {}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("shift has non-finite entries".into()));
        }
        let rows = matrix
            .row_iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(j, v)| (j, *v))
                    .collect()
            })
            .collect();
        Ok(Self { matrix, kind, rows })
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn kind(&self) -> ShiftKind {
        self.kind
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Nonzero entries of row `i` as `(column, value)`, in column order.
    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.matrix.amax()
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        let n = self.n();
        (0..n).all(|i| (0..i).all(|j| (self.matrix[(i, j)] - self.matrix[(j, i)]).abs() <= rel_tol * scale))
    }

    /// `y = S x` over the stored nonzeros, summing each row in column order.
    pub fn apply_into(&self, x: &DVector<f64>, y: &mut DVector<f64>) {
        for (yi, row) in y.iter_mut().zip(&self.rows) {
            *yi = row.iter().fold(0.0, |acc, &(j, s)| acc + s * x[j]);
        }
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.n());
        self.apply_into(x, &mut y);
        y
    }
}

fn check_n(n: usize, min: usize) -> Result<()> {
    if n < min {
        return Err(Error::InvalidSize(format!("need N >= {min}, got {n}")));
    }
    Ok(())
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("{name} = {p} is not a probability")));
    }
    Ok(())
}

/// Directed cycle with edges `k -> k+1 mod N`.
pub fn directed_cycle(n: usize) -> Result<Graph> {
    check_n(n, 2)?;
    let edges = (0..n)
        .map(|k| Edge { source: k, target: (k + 1) % n, weight: 1.0 })
        .collect();
    Graph::new(n, true, edges)
}

/// True iff the undirected skeleton is connected.
pub fn is_connected(g: &Graph) -> bool {
    let n = g.n();
    let mut adj = vec![Vec::new(); n];
    for e in g.edges() {
        adj[e.source].push(e.target);
        adj[e.target].push(e.source);
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                queue.push_back(v);
            }
        }
    }
    count == n
}

fn resample_until_connected<R: Rng + ?Sized>(
    rng: &mut R,
    what: &str,
    mut draw: impl FnMut(&mut R) -> Result<Graph>,
) -> Result<Graph> {
    for _ in 0..MAX_RESAMPLES {
        let g = draw(rng)?;
        if is_connected(&g) {
            return Ok(g);
        }
    }
    Err(Error::GiveUp {
        attempts: MAX_RESAMPLES,
        reason: format!("no connected {what} realization"),
    })
}

/// Connected `G(N, p)` graph with unit weights.
pub fn erdos_renyi<R: Rng + ?Sized>(n: usize, p_er: f64, rng: &mut R) -> Result<Graph> {
    check_n(n, 2)?;
    if !(p_er > 0.0 && p_er <= 1.0) {
        return Err(Error::InvalidParameter(format!("p_er = {p_er} must lie in (0, 1]")));
    }
    resample_until_connected(rng, "Erdos-Renyi", |rng| {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.random_bool(p_er) {
                    edges.push(Edge { source: i, target: j, weight: 1.0 });
                }
            }
        }
        Graph::new(n, false, edges)
    })
}

/// Community sizes: `⌊N/C⌋` each, with the `N mod C` leftover vertices handed
/// out one per community starting from the first.
pub fn community_sizes(n: usize, c: usize) -> Vec<usize> {
    (0..c).map(|a| n / c + usize::from(a < n % c)).collect()
}

/// Community label of each vertex; communities are contiguous index blocks.
pub fn community_membership(n: usize, c: usize) -> Vec<usize> {
    community_sizes(n, c)
        .into_iter()
        .enumerate()
        .flat_map(|(a, size)| std::iter::repeat_n(a, size))
        .collect()
}

/// Connected stochastic block model with `C` communities.
pub fn sbm<R: Rng + ?Sized>(n: usize, c: usize, p_in: f64, p_out: f64, rng: &mut R) -> Result<Graph> {
    if c == 0 {
        return Err(Error::InvalidParameter("need at least one community".into()));
    }
    check_n(n, c.max(1))?;
    check_probability("p_in", p_in)?;
    check_probability("p_out", p_out)?;
    if p_out > p_in {
        return Err(Error::InvalidParameter(format!("p_out = {p_out} exceeds p_in = {p_in}")));
    }
    let label = community_membership(n, c);
    resample_until_connected(rng, "stochastic block model", |rng| {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let p = if label[i] == label[j] { p_in } else { p_out };
                if rng.random_bool(p) {
                    edges.push(Edge { source: i, target: j, weight: 1.0 });
                }
            }
        }
        Graph::new(n, false, edges)
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorParams {
    pub rho_min: f64,
    pub rho_max: f64,
    pub thres_factor: f64,
}

impl Default for SensorParams {
    fn default() -> Self {
        Self { rho_min: 0.01, rho_max: 1.0, thres_factor: 1.75 }
    }
}

/// A geometric sensor graph with the data needed to recompute its weights.
#[derive(Debug, Clone)]
pub struct SensorNetwork {
    pub graph: Graph,
    /// Sensor positions in the unit square.
    pub positions: Vec<[f64; 2]>,
    pub alpha: f64,
    pub beta: f64,
    /// Edges keep every pair with influence at or above this value.
    pub threshold: f64,
}

impl SensorNetwork {
    /// `ρ(i, j) = α exp(-β ‖u_i - u_j‖²)`, zero on the diagonal.
    pub fn influence(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            self.alpha * (-self.beta * sq_dist(self.positions[i], self.positions[j])).exp()
        }
    }
}

fn sq_dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Sensors dropped uniformly on `[0, 1]²`, linked when their Gaussian-kernel
/// influence reaches `thres_factor` times the mean pairwise influence.
///
/// `α` and `β` are fitted so that the closest pair has influence `rho_max` and
/// the farthest pair `rho_min`.
pub fn sensor_network<R: Rng + ?Sized>(n: usize, params: SensorParams, rng: &mut R) -> Result<SensorNetwork> {
    let SensorParams { rho_min, rho_max, thres_factor } = params;
    check_n(n, 2)?;
    if !(rho_min > 0.0 && rho_min < rho_max && rho_max.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < rho_min < rho_max, got rho_min = {rho_min}, rho_max = {rho_max}"
        )));
    }
    if !(thres_factor > 0.0 && thres_factor.is_finite()) {
        return Err(Error::InvalidParameter(format!("thres_factor = {thres_factor} must be positive")));
    }
    for _ in 0..MAX_RESAMPLES {
        let positions: Vec<[f64; 2]> = (0..n).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
        let mut d2 = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                d2.push(sq_dist(positions[i], positions[j]));
            }
        }
        let d2_min = d2.iter().copied().fold(f64::INFINITY, f64::min);
        let d2_max = d2.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(d2_max - d2_min > f64::EPSILON * d2_max) {
            return Err(Error::DegenerateGeometry(format!(
                "all pairwise distances are equal ({d2_min:e}); cannot fit beta"
            )));
        }
        let beta = (rho_max / rho_min).ln() / (d2_max - d2_min);
        let alpha = rho_max * (beta * d2_min).exp();
        let mean_rho = d2.iter().map(|&d| alpha * (-beta * d).exp()).sum::<f64>() / d2.len() as f64;
        let threshold = thres_factor * mean_rho;
        let mut edges = Vec::new();
        let mut idx = 0;
        for i in 0..n {
            for j in i + 1..n {
                let rho = alpha * (-beta * d2[idx]).exp();
                idx += 1;
                if rho >= threshold {
                    edges.push(Edge { source: i, target: j, weight: rho });
                }
            }
        }
        let graph = Graph::new(n, false, edges)?;
        if is_connected(&graph) {
            return Ok(SensorNetwork { graph, positions, alpha, beta, threshold });
        }
    }
    Err(Error::GiveUp {
        attempts: MAX_RESAMPLES,
        reason: "no connected sensor network realization".into(),
    })
}

/// A covariance graph: the shift is an empirical covariance estimated from
/// Gaussian training samples.
#[derive(Debug, Clone)]
pub struct CovarianceGraph {
    /// Pairs with nonzero estimated covariance, weighted by its magnitude.
    pub graph: Graph,
    /// The signed empirical covariance, kind [`ShiftKind::SampleCovariance`].
    pub shift: ShiftOperator,
    /// Ground-truth covariance the samples were drawn from.
    pub truth: DMatrix<f64>,
}

/// Draws a random ground-truth covariance `Σ = G Gᵀ / N + 0.1 I`.
pub fn random_covariance<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::<f64>::from_fn(n, n, |_, _| rng.sample(StandardNormal));
    let mut sigma = &g * g.transpose() / n as f64;
    for i in 0..n {
        sigma[(i, i)] += 0.1;
    }
    sigma
}

/// Empirical covariance of `n_samples` zero-mean Gaussian draws with covariance
/// `truth` (the mean is known, so the normalizer is `n_samples`).
pub fn sample_covariance<R: Rng + ?Sized>(truth: &DMatrix<f64>, n_samples: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    let n = truth.nrows();
    let chol = truth
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("ground-truth covariance is not positive definite".into()))?;
    let l = chol.l();
    let mut acc = DMatrix::<f64>::zeros(n, n);
    const BLOCK: usize = 1024;
    let mut done = 0;
    while done < n_samples {
        let b = BLOCK.min(n_samples - done);
        let w = DMatrix::<f64>::from_fn(n, b, |_, _| rng.sample(StandardNormal));
        let z = &l * w;
        acc.gemm(1.0, &z, &z.transpose(), 1.0);
        done += b;
    }
    acc /= n_samples as f64;
    let sym = (&acc + acc.transpose()) * 0.5;
    Ok(sym)
}

/// Covariance graph on `N` vertices from `n_samples` training samples.
pub fn covariance_graph<R: Rng + ?Sized>(n: usize, n_samples: usize, rng: &mut R) -> Result<CovarianceGraph> {
    check_n(n, 1)?;
    if n_samples < n {
        return Err(Error::RankDeficient {
            reason: format!("{n_samples} samples cannot estimate a full-rank {n} x {n} covariance"),
            indices: Vec::new(),
        });
    }
    let truth = random_covariance(n, rng);
    let estimate = sample_covariance(&truth, n_samples, rng)?;
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let c = estimate[(i, j)];
            if c != 0.0 {
                edges.push(Edge { source: i, target: j, weight: c.abs() });
            }
        }
    }
    let graph = Graph::new(n, false, edges)?;
    let shift = ShiftOperator::new(estimate, ShiftKind::SampleCovariance)?;
    Ok(CovarianceGraph { graph, shift, truth })
}

fn adjacency_matrix(g: &Graph) -> DMatrix<f64> {
    let n = g.n();
    let mut a = DMatrix::zeros(n, n);
    for e in g.edges() {
        a[(e.target, e.source)] = e.weight;
        if !g.is_directed() {
            a[(e.source, e.target)] = e.weight;
        }
    }
    a
}

/// Weighted adjacency `[A]_{ij} = w(j, i)`. Directed cycles get their own kind
/// so the spectral module can use the Fourier basis.
pub fn adjacency_shift(g: &Graph) -> Result<ShiftOperator> {
    let kind = if g.is_directed_cycle() {
        ShiftKind::DirectedCycleAdjacency
    } else {
        ShiftKind::Adjacency
    };
    ShiftOperator::new(adjacency_matrix(g), kind)
}

/// `D^{-1/2} A D^{-1/2}`.
pub fn normalized_adjacency_shift(g: &Graph) -> Result<ShiftOperator> {
    let degrees = g.degrees();
    if let Some(k) = degrees.iter().position(|&d| d <= 0.0) {
        return Err(Error::ZeroDegree(k));
    }
    let inv_sqrt: Vec<f64> = degrees.iter().map(|d| 1.0 / d.sqrt()).collect();
    let mut a = adjacency_matrix(g);
    for ((i, j), v) in (0..g.n()).flat_map(|j| (0..g.n()).map(move |i| (i, j))).zip(a.iter_mut()) {
        *v *= inv_sqrt[i] * inv_sqrt[j];
    }
    ShiftOperator::new(a, ShiftKind::NormalizedAdjacency)
}
