//! The graph shift average as a synchronous neighbor-exchange protocol.
//!
//! Each node keeps its own observation and a running estimate. In every round
//! it sends the estimate to its out-neighbors, then mixes what it received
//! with its observation. After `L - 1` rounds the estimates equal the
//! centralized [`graph_shift_average`](crate::estimators::graph_shift_average)
//! bit for bit: both use the same normalized recurrence and sum the incoming
//! terms in increasing sender order.

use std::fmt::Write as _;

use nalgebra::DVector;

use crate::estimators::{diffusion_update, diffusion_weights};
use crate::graphs::{Graph, ShiftOperator};
use crate::io::fmt_f64;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeState {
    pub node_id: usize,
    /// The node's entry of the observed signal.
    pub observation: f64,
    /// Running estimate `[u_round]_k`, the normalized partial diffusion.
    pub current: f64,
    pub round: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Message {
    pub from: usize,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct DiffusionTrace {
    pub rounds: usize,
    pub messages_sent: u64,
    pub per_node_estimates: DVector<f64>,
    /// `history[r][k]` is node `k`'s estimate after round `r` (round 0 is the
    /// observation). Only filled by [`simulate_diffusion_traced`].
    pub history: Option<Vec<Vec<f64>>>,
}

impl DiffusionTrace {
    /// CSV with columns `round,node,current`, nodes 1-based.
    pub fn history_csv(&self) -> Option<String> {
        let history = self.history.as_ref()?;
        let mut out = String::from("round,node,current\n");
        for (r, row) in history.iter().enumerate() {
            for (k, v) in row.iter().enumerate() {
                writeln!(out, "{r},{},{}", k + 1, fmt_f64(*v)).expect("writing to a string");
            }
        }
        Some(out)
    }
}

/// What a node knows about its surroundings: the shift weights on its
/// incoming links (and on itself), sorted by sender.
#[derive(Debug, Clone)]
struct LocalWeights {
    entries: Vec<(usize, f64)>,
}

/// One node update. The node sees only its own state, its local weights and
/// the messages it received this round (sorted by sender).
fn node_update(state: &NodeState, weights: &LocalWeights, inbox: &[Message], w: f64, lambda1: f64) -> f64 {
    let mut sum = 0.0;
    let mut msgs = inbox.iter().peekable();
    for &(j, s) in &weights.entries {
        let value = if j == state.node_id {
            state.current
        } else {
            while msgs.peek().is_some_and(|m| m.from < j) {
                msgs.next();
            }
            match msgs.peek() {
                Some(m) if m.from == j => m.value,
                _ => unreachable!("shift weights are checked against the edge set"),
            }
        };
        sum += s * value;
    }
    diffusion_update(w, state.observation, sum, lambda1)
}

fn local_weights(g: &Graph, s: &ShiftOperator) -> Result<Vec<LocalWeights>> {
    if g.n() != s.n() {
        return Err(Error::ShiftGraphMismatch(format!(
            "graph has {} vertices, shift is {} x {}",
            g.n(),
            s.n(),
            s.n()
        )));
    }
    let in_neighbors = g.in_neighbors();
    (0..g.n())
        .map(|k| {
            for &(j, _) in s.row(k) {
                if j != k && in_neighbors[k].binary_search_by_key(&j, |&(i, _)| i).is_err() {
                    return Err(Error::ShiftGraphMismatch(format!(
                        "shift entry ({}, {}) is nonzero but there is no edge {} -> {}",
                        k + 1,
                        j + 1,
                        j + 1,
                        k + 1
                    )));
                }
            }
            Ok(LocalWeights { entries: s.row(k).to_vec() })
        })
        .collect()
}

fn run(g: &Graph, s: &ShiftOperator, lambda1: f64, x: &DVector<f64>, depth: usize, keep_history: bool) -> Result<DiffusionTrace> {
    if x.len() != g.n() {
        return Err(Error::DimensionMismatch { expected: g.n(), found: x.len() });
    }
    if depth == 0 {
        return Err(Error::InvalidParameter("diffusion depth L must be at least 1".into()));
    }
    if !(lambda1 > 0.0 && lambda1.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda1 = {lambda1} must be positive")));
    }
    let weights = local_weights(g, s)?;
    let out_neighbors = g.out_neighbors();
    let mut nodes: Vec<NodeState> = (0..g.n())
        .map(|k| NodeState { node_id: k, observation: x[k], current: x[k], round: 0 })
        .collect();
    let mut history = keep_history.then(|| vec![x.iter().copied().collect::<Vec<_>>()]);
    let mut inboxes: Vec<Vec<Message>> = vec![Vec::new(); g.n()];
    let mut messages_sent = 0u64;

    for w in diffusion_weights(lambda1, depth) {
        inboxes.iter_mut().for_each(Vec::clear);
        for node in &nodes {
            for &t in &out_neighbors[node.node_id] {
                inboxes[t].push(Message { from: node.node_id, value: node.current });
                messages_sent += 1;
            }
        }
        for inbox in &mut inboxes {
            inbox.sort_by_key(|m| m.from);
        }
        // Barrier: every update reads the states of the previous round.
        let next: Vec<f64> = nodes
            .iter()
            .map(|node| node_update(node, &weights[node.node_id], &inboxes[node.node_id], w, lambda1))
            .collect();
        for (node, value) in nodes.iter_mut().zip(next) {
            node.current = value;
            node.round += 1;
        }
        if let Some(h) = history.as_mut() {
            h.push(nodes.iter().map(|n| n.current).collect());
        }
    }

    Ok(DiffusionTrace {
        rounds: depth - 1,
        messages_sent,
        per_node_estimates: DVector::from_iterator(g.n(), nodes.iter().map(|n| n.current)),
        history,
    })
}

/// Runs `L - 1` synchronous rounds and returns the per-node estimates.
pub fn simulate_diffusion(g: &Graph, s: &ShiftOperator, lambda1: f64, x: &DVector<f64>, depth: usize) -> Result<DiffusionTrace> {
    run(g, s, lambda1, x, depth, false)
}

/// Like [`simulate_diffusion`], also recording every node's estimate after
/// each round.
pub fn simulate_diffusion_traced(g: &Graph, s: &ShiftOperator, lambda1: f64, x: &DVector<f64>, depth: usize) -> Result<DiffusionTrace> {
    run(g, s, lambda1, x, depth, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::graph_shift_average;
    use crate::graphs::{adjacency_shift, covariance_graph, directed_cycle, erdos_renyi, normalized_adjacency_shift, Graph};
    use crate::seeds::rng_from_seed;
    use crate::spectral::decompose;
    use nalgebra::DMatrix;

    #[test]
    fn depth_one_sends_nothing() {
        let g = Graph::complete(4).unwrap();
        let s = adjacency_shift(&g).unwrap();
        let x = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let t = simulate_diffusion(&g, &s, 3.0, &x, 1).unwrap();
        assert_eq!(t.messages_sent, 0);
        assert_eq!(t.rounds, 0);
        assert_eq!(t.per_node_estimates, x);
    }

    #[test]
    fn cycle_of_six_reaches_the_mean() {
        let g = directed_cycle(6).unwrap();
        let s = adjacency_shift(&g).unwrap();
        let x = DVector::from_vec(vec![3.0, -1.0, 4.0, 1.0, -5.0, 9.0]);
        let t = simulate_diffusion(&g, &s, 1.0, &x, 6).unwrap();
        assert_eq!(t.messages_sent, 30);
        assert!(t.per_node_estimates.iter().all(|e| (e - 11.0 / 6.0).abs() < 1e-14));
    }

    #[test]
    fn matches_centralized_bit_for_bit() {
        let g = erdos_renyi(20, 0.3, &mut rng_from_seed(4)).unwrap();
        let s = adjacency_shift(&g).unwrap();
        let lambda1 = decompose(&s).unwrap().lambda1();
        let x = DVector::from_fn(20, |i, _| ((i * 7) % 5) as f64 - 1.5);
        let t = simulate_diffusion(&g, &s, lambda1, &x, 20).unwrap();
        assert_eq!(t.per_node_estimates, graph_shift_average(&s, lambda1, &x, 20).unwrap());
        assert_eq!(t.messages_sent, 19 * 2 * g.edge_count() as u64);
    }

    #[test]
    fn dense_shift_with_diagonal() {
        let cg = covariance_graph(8, 200, &mut rng_from_seed(5)).unwrap();
        let lambda1 = decompose(&cg.shift).unwrap().lambda1();
        let x = DVector::from_fn(8, |i, _| i as f64);
        let t = simulate_diffusion(&cg.graph, &cg.shift, lambda1, &x, 8).unwrap();
        assert_eq!(t.per_node_estimates, graph_shift_average(&cg.shift, lambda1, &x, 8).unwrap());
    }

    #[test]
    fn normalized_shift_also_matches() {
        let g = erdos_renyi(12, 0.4, &mut rng_from_seed(6)).unwrap();
        let s = normalized_adjacency_shift(&g).unwrap();
        let x = DVector::from_fn(12, |i, _| (i as f64).cos());
        let t = simulate_diffusion(&g, &s, 1.0, &x, 7).unwrap();
        assert_eq!(t.per_node_estimates, graph_shift_average(&s, 1.0, &x, 7).unwrap());
    }

    #[test]
    fn shift_outside_the_edge_set_is_rejected() {
        let g = Graph::path(3).unwrap();
        let s = ShiftOperator::new(DMatrix::from_element(3, 3, 1.0), crate::graphs::ShiftKind::Adjacency).unwrap();
        let x = DVector::zeros(3);
        assert!(matches!(simulate_diffusion(&g, &s, 3.0, &x, 2), Err(Error::ShiftGraphMismatch(_))));
        let s4 = adjacency_shift(&Graph::path(4).unwrap()).unwrap();
        assert!(matches!(simulate_diffusion(&g, &s4, 1.0, &x, 2), Err(Error::ShiftGraphMismatch(_))));
    }

    #[test]
    fn history_dump() {
        let g = directed_cycle(3).unwrap();
        let s = adjacency_shift(&g).unwrap();
        let x = DVector::from_vec(vec![3.0, 0.0, 0.0]);
        let t = simulate_diffusion_traced(&g, &s, 1.0, &x, 3).unwrap();
        let csv = t.history_csv().unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "round,node,current");
        assert_eq!(lines.len(), 1 + 3 * 3);
        assert!(lines[1].starts_with("0,1,3"));
        assert!(simulate_diffusion(&g, &s, 1.0, &x, 3).unwrap().history_csv().is_none());
    }
}
