//! Per-student social features on an [`InteractionGraph`].
//!
//! Conventions, fixed once for the whole crate:
//!
//! - betweenness is directed, unweighted and unnormalized (edge weights are
//!   interaction counts, not distances); unreachable pairs contribute 0
//! - HITS runs on the weighted adjacency, L2-normalizing hubs and
//!   authorities each iteration
//! - degrees are weight sums (reply volume), not distinct-neighbor counts
//!
//! The betweenness source loop is data-parallel; per-source contributions
//! are folded in source order, so parallel and sequential runs produce
//! bit-identical results.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::forum_graph::InteractionGraph;
use crate::ingest::StudentId;
use crate::parallel;

pub const DEFAULT_HITS_TOL: f64 = 1e-8;
pub const DEFAULT_HITS_MAX_ITER: usize = 1000;

/// Index-based view of a graph: nodes in sorted-id order, adjacency lists
/// in index order. Fixing this layout fixes every accumulation order.
struct Indexed {
    ids: Vec<StudentId>,
    /// out[v] = (target, weight), ascending by target.
    out: Vec<Vec<(usize, f64)>>,
    /// inc[v] = (source, weight), ascending by source.
    inc: Vec<Vec<(usize, f64)>>,
}

impl Indexed {
    fn new(graph: &InteractionGraph) -> Self {
        let ids: Vec<StudentId> = graph.nodes.iter().cloned().collect();
        let index: BTreeMap<&StudentId, usize> =
            ids.iter().enumerate().map(|(i, id)| (id, i)).collect();
        let mut out = vec![Vec::new(); ids.len()];
        let mut inc = vec![Vec::new(); ids.len()];
        for ((src, dst), &w) in &graph.edges {
            let (s, d) = (index[src], index[dst]);
            out[s].push((d, f64::from(w)));
            inc[d].push((s, f64::from(w)));
        }
        // BTreeMap iteration sorts by (src, dst), so `out` is already
        // ordered; `inc` needs an explicit sort by source.
        for list in &mut inc {
            list.sort_unstable_by_key(|&(s, _)| s);
        }
        Indexed { ids, out, inc }
    }

    fn len(&self) -> usize {
        self.ids.len()
    }

    fn to_map(&self, values: &[f64]) -> BTreeMap<StudentId, f64> {
        self.ids
            .iter()
            .cloned()
            .zip(values.iter().copied())
            .collect()
    }
}

/// Brandes' single-source pass: BFS shortest-path counts, then dependency
/// back-propagation. Returns this source's contribution to every node.
fn brandes_source(idx: &Indexed, source: usize) -> Vec<f64> {
    let n = idx.len();
    let mut sigma = vec![0.0f64; n];
    let mut dist = vec![-1i64; n];
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut order = Vec::with_capacity(n);

    sigma[source] = 1.0;
    dist[source] = 0;
    let mut queue = std::collections::VecDeque::new();
    queue.push_back(source);
    while let Some(v) = queue.pop_front() {
        order.push(v);
        for &(w, _) in &idx.out[v] {
            if dist[w] < 0 {
                dist[w] = dist[v] + 1;
                queue.push_back(w);
            }
            if dist[w] == dist[v] + 1 {
                sigma[w] += sigma[v];
                preds[w].push(v);
            }
        }
    }

    let mut delta = vec![0.0f64; n];
    let mut contrib = vec![0.0f64; n];
    for &w in order.iter().rev() {
        for &v in &preds[w] {
            delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
        }
        if w != source {
            contrib[w] = delta[w];
        }
    }
    contrib
}

fn betweenness_fold(n: usize, contribs: Vec<Vec<f64>>) -> Vec<f64> {
    let mut total = vec![0.0f64; n];
    for contrib in contribs {
        for (t, c) in total.iter_mut().zip(contrib) {
            *t += c;
        }
    }
    total
}

/// Directed, unweighted, unnormalized shortest-path betweenness.
pub fn betweenness(graph: &InteractionGraph) -> BTreeMap<StudentId, f64> {
    let idx = Indexed::new(graph);
    let contribs = parallel::ordered_map_range(idx.len(), |s| brandes_source(&idx, s));
    let total = betweenness_fold(idx.len(), contribs);
    idx.to_map(&total)
}

/// Sequential fallback of [`betweenness`]; identical output, used as the
/// bench baseline.
pub fn betweenness_seq(graph: &InteractionGraph) -> BTreeMap<StudentId, f64> {
    let idx = Indexed::new(graph);
    let contribs = parallel::ordered_map_range_seq(idx.len(), |s| brandes_source(&idx, s));
    let total = betweenness_fold(idx.len(), contribs);
    idx.to_map(&total)
}

/// Hub and authority scores with convergence information.
#[derive(Debug, Clone)]
pub struct HitsScores {
    pub hub: BTreeMap<StudentId, f64>,
    pub authority: BTreeMap<StudentId, f64>,
    pub converged: bool,
    pub iterations: usize,
}

fn l2_normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v {
            *x /= norm;
        }
    }
}

/// Mutually reinforcing hub/authority scores on the weighted adjacency:
/// `a <- W^T h`, `h <- W a`, each L2-normalized, until the largest absolute
/// change drops below `tol` or `max_iter` is reached.
pub fn hits(graph: &InteractionGraph, tol: f64, max_iter: usize) -> Result<HitsScores> {
    if tol <= 0.0 {
        return Err(Error::Usage(format!("HITS tol must be positive, got {tol}")));
    }
    if max_iter == 0 {
        return Err(Error::Usage("HITS max_iter must be at least 1".into()));
    }

    let idx = Indexed::new(graph);
    let n = idx.len();
    if n == 0 || graph.edges.is_empty() {
        let zeros = idx.to_map(&vec![0.0; n]);
        return Ok(HitsScores {
            hub: zeros.clone(),
            authority: zeros,
            converged: true,
            iterations: 0,
        });
    }

    let init = 1.0 / (n as f64).sqrt();
    let mut hub = vec![init; n];
    let mut auth = vec![init; n];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        let mut new_auth = vec![0.0; n];
        for (v, slot) in new_auth.iter_mut().enumerate() {
            for &(u, w) in &idx.inc[v] {
                *slot += w * hub[u];
            }
        }
        l2_normalize(&mut new_auth);

        let mut new_hub = vec![0.0; n];
        for (v, slot) in new_hub.iter_mut().enumerate() {
            for &(u, w) in &idx.out[v] {
                *slot += w * new_auth[u];
            }
        }
        l2_normalize(&mut new_hub);

        let change = new_auth
            .iter()
            .zip(&auth)
            .chain(new_hub.iter().zip(&hub))
            .map(|(new, old)| (new - old).abs())
            .fold(0.0f64, f64::max);
        auth = new_auth;
        hub = new_hub;
        if change < tol {
            converged = true;
            break;
        }
    }

    Ok(HitsScores {
        hub: idx.to_map(&hub),
        authority: idx.to_map(&auth),
        converged,
        iterations,
    })
}

/// [`hits`] with the crate-default tolerance and iteration cap.
pub fn hits_default(graph: &InteractionGraph) -> Result<HitsScores> {
    hits(graph, DEFAULT_HITS_TOL, DEFAULT_HITS_MAX_ITER)
}

/// Weighted (in-degree, out-degree) per node: sums of incident edge weights.
pub fn degrees(graph: &InteractionGraph) -> BTreeMap<StudentId, (u64, u64)> {
    let mut map: BTreeMap<StudentId, (u64, u64)> = graph
        .nodes
        .iter()
        .map(|n| (n.clone(), (0, 0)))
        .collect();
    for ((src, dst), &w) in &graph.edges {
        map.get_mut(src).expect("edge endpoint in node set").1 += u64::from(w);
        map.get_mut(dst).expect("edge endpoint in node set").0 += u64::from(w);
    }
    map
}

/// Fraction of a node's distinct neighbors (either direction) whose last
/// active week precedes `eval_week`. Nodes without neighbors report 0,
/// although isolate pruning makes that unreachable in practice.
pub fn dropped_out_neighbors(
    graph: &InteractionGraph,
    last_active_week: &BTreeMap<StudentId, u32>,
    eval_week: u32,
) -> Result<BTreeMap<StudentId, f64>> {
    let mut neighbors: BTreeMap<&StudentId, std::collections::BTreeSet<&StudentId>> =
        graph.nodes.iter().map(|n| (n, Default::default())).collect();
    for (src, dst) in graph.edges.keys() {
        neighbors.get_mut(src).unwrap().insert(dst);
        neighbors.get_mut(dst).unwrap().insert(src);
    }

    let mut out = BTreeMap::new();
    for (node, adjacent) in neighbors {
        let mut dropped = 0usize;
        for n in &adjacent {
            let last = last_active_week.get(*n).ok_or_else(|| {
                Error::Data(format!("no last_active_week entry for graph node '{n}'"))
            })?;
            if *last < eval_week {
                dropped += 1;
            }
        }
        let ratio = if adjacent.is_empty() {
            0.0
        } else {
            dropped as f64 / adjacent.len() as f64
        };
        out.insert(node.clone(), ratio);
    }
    Ok(out)
}
