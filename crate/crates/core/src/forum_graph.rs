//! Student interaction graphs built from discussion threads.
//!
//! Two reply-attribution rules are supported:
//!
//! - **Type 1**: each contribution links its author to the authors of every
//!   preceding contribution in the same thread (readers respond to the whole
//!   conversation so far).
//! - **Type 2**: each non-root contribution links its author to the thread
//!   originator only (flat question-and-answer forums).
//!
//! Edges are directed replier -> earlier author and weighted by repetition.
//! Staff nodes are removed with their incident edges, then isolated nodes
//! are dropped, so every surviving node has at least one incident edge.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{week_of, CourseConfig, StudentId, Thread};

/// Reply-attribution rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphKind {
    Type1,
    Type2,
}

impl fmt::Display for GraphKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GraphKind::Type1 => "type1",
            GraphKind::Type2 => "type2",
        })
    }
}

impl std::str::FromStr for GraphKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "type1" => Ok(GraphKind::Type1),
            "type2" => Ok(GraphKind::Type2),
            other => Err(Error::Usage(format!(
                "unknown graph kind '{other}' (expected type1 or type2)"
            ))),
        }
    }
}

/// Directed, weighted student-to-student graph.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionGraph {
    pub kind: GraphKind,
    pub cutoff_week: u32,
    /// (src, dst) -> multiplicity; no self-edges, no staff endpoints.
    pub edges: BTreeMap<(StudentId, StudentId), u32>,
    /// Every node is an endpoint of at least one edge.
    pub nodes: BTreeSet<StudentId>,
}

impl InteractionGraph {
    /// Build directly from weighted edges; self-edges and zero weights are
    /// dropped and the node set is derived from the surviving endpoints.
    pub fn from_edges<I>(kind: GraphKind, cutoff_week: u32, edges: I) -> Self
    where
        I: IntoIterator<Item = ((StudentId, StudentId), u32)>,
    {
        let edges: BTreeMap<(StudentId, StudentId), u32> = edges
            .into_iter()
            .filter(|((src, dst), w)| src != dst && *w > 0)
            .collect();
        let nodes = edges
            .keys()
            .flat_map(|(src, dst)| [src.clone(), dst.clone()])
            .collect();
        Self {
            kind,
            cutoff_week,
            edges,
            nodes,
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn total_weight(&self) -> u64 {
        self.edges.values().map(|&w| u64::from(w)).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Build the interaction graph for all contributions up to `cutoff_week`.
pub fn build_graph(
    threads: &[Thread],
    kind: GraphKind,
    cutoff_week: u32,
    config: &CourseConfig,
) -> Result<InteractionGraph> {
    if cutoff_week < 1 || cutoff_week > config.num_weeks {
        return Err(Error::Usage(format!(
            "cutoff week {cutoff_week} outside 1..={}",
            config.num_weeks
        )));
    }

    let mut edges: BTreeMap<(StudentId, StudentId), u32> = BTreeMap::new();
    let mut add_edge = |src: &StudentId, dst: &StudentId| {
        if src != dst {
            *edges.entry((src.clone(), dst.clone())).or_insert(0) += 1;
        }
    };

    for thread in threads {
        // Contribution sequence restricted to the cutoff; the root, being
        // chronologically first, participates whenever anything does.
        let participating: Vec<_> = thread
            .posts
            .iter()
            .filter(|p| matches!(week_of(p.timestamp, config), Ok(w) if w <= cutoff_week))
            .collect();
        match kind {
            GraphKind::Type1 => {
                for (i, post) in participating.iter().enumerate() {
                    for earlier in &participating[..i] {
                        add_edge(&post.author_id, &earlier.author_id);
                    }
                }
            }
            GraphKind::Type2 => {
                let Some(root) = participating.iter().find(|p| p.post_id == thread.root) else {
                    continue;
                };
                for post in &participating {
                    if post.post_id != thread.root {
                        add_edge(&post.author_id, &root.author_id);
                    }
                }
            }
        }
    }

    edges.retain(|(src, dst), _| {
        !config.staff_ids.contains(src) && !config.staff_ids.contains(dst)
    });

    let nodes = edges
        .keys()
        .flat_map(|(src, dst)| [src.clone(), dst.clone()])
        .collect();

    Ok(InteractionGraph {
        kind,
        cutoff_week,
        edges,
        nodes,
    })
}

/// Node count, edge count, total weight, weakly connected components.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GraphStats {
    pub nodes: usize,
    pub edges: usize,
    pub total_weight: u64,
    pub weak_components: usize,
}

/// Counts plus weak components (direction ignored), via union-find.
pub fn graph_stats(graph: &InteractionGraph) -> GraphStats {
    let index: BTreeMap<&StudentId, usize> =
        graph.nodes.iter().enumerate().map(|(i, n)| (n, i)).collect();
    let mut parent: Vec<usize> = (0..index.len()).collect();

    fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }

    for (src, dst) in graph.edges.keys() {
        let a = find(&mut parent, index[src]);
        let b = find(&mut parent, index[dst]);
        if a != b {
            parent[a] = b;
        }
    }
    let components = (0..index.len())
        .filter(|&i| find(&mut parent, i) == i)
        .count();

    GraphStats {
        nodes: graph.node_count(),
        edges: graph.edge_count(),
        total_weight: graph.total_weight(),
        weak_components: components,
    }
}

/// Sidecar metadata written next to an exported edge list.
#[derive(Debug, Serialize, Deserialize)]
struct GraphMeta {
    kind: GraphKind,
    cutoff_week: u32,
}

/// Export the edge list as `src,dst,weight` CSV plus a `<path>.meta.json`
/// sidecar carrying the construction kind and cutoff week.
pub fn export_edge_csv(graph: &InteractionGraph, path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "src,dst,weight")?;
    for ((src, dst), weight) in &graph.edges {
        writeln!(w, "{src},{dst},{weight}")?;
    }
    w.flush()?;

    let meta = GraphMeta {
        kind: graph.kind,
        cutoff_week: graph.cutoff_week,
    };
    let meta_path = path.with_extension("meta.json");
    std::fs::write(
        meta_path,
        serde_json::to_string_pretty(&meta).map_err(|e| Error::Data(e.to_string()))? + "\n",
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use proptest::prelude::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::ingest::{assemble_threads, ForumPost};
    use crate::testutil::{config, post};

    const HOUR: i64 = 3600;

    fn simple_thread(authors: &[&str], cfg: &CourseConfig) -> Vec<Thread> {
        let posts = authors
            .iter()
            .enumerate()
            .map(|(i, a)| {
                post(
                    &format!("p{i}"),
                    "t0",
                    a,
                    cfg.start_time + (i as i64 + 1) * HOUR,
                    (i > 0).then_some("p0"),
                )
            })
            .collect();
        assemble_threads(posts).unwrap()
    }

    fn edge(graph: &InteractionGraph, src: &str, dst: &str) -> Option<u32> {
        graph.edges.get(&(src.into(), dst.into())).copied()
    }

    #[test]
    fn type1_links_every_preceding_author() {
        let cfg = config(6);
        let threads = simple_thread(&["A", "B", "C"], &cfg);
        let g = build_graph(&threads, GraphKind::Type1, 6, &cfg).unwrap();
        assert_eq!(g.edge_count(), 3);
        assert_eq!(edge(&g, "B", "A"), Some(1));
        assert_eq!(edge(&g, "C", "A"), Some(1));
        assert_eq!(edge(&g, "C", "B"), Some(1));
    }

    #[test]
    fn type2_links_the_originator_only() {
        let cfg = config(6);
        let threads = simple_thread(&["A", "B", "C"], &cfg);
        let g = build_graph(&threads, GraphKind::Type2, 6, &cfg).unwrap();
        assert_eq!(g.edge_count(), 2);
        assert_eq!(edge(&g, "B", "A"), Some(1));
        assert_eq!(edge(&g, "C", "A"), Some(1));
        assert_eq!(edge(&g, "C", "B"), None);
    }

    #[test]
    fn self_pairs_are_skipped_and_weights_accumulate() {
        let cfg = config(6);
        let threads = simple_thread(&["A", "A", "B"], &cfg);
        let g = build_graph(&threads, GraphKind::Type1, 6, &cfg).unwrap();
        assert_eq!(g.edge_count(), 1);
        assert_eq!(edge(&g, "B", "A"), Some(2));
        assert!(g.nodes.contains(&StudentId::from("A")));
        assert!(g.nodes.contains(&StudentId::from("B")));
    }

    #[test]
    fn staff_pruning_can_isolate_and_remove_students() {
        let mut cfg = config(6);
        cfg.staff_ids.insert("staff".into());
        // lonely replies only to staff; after staff pruning they are isolated
        let threads = simple_thread(&["staff", "lonely"], &cfg);
        let g = build_graph(&threads, GraphKind::Type1, 6, &cfg).unwrap();
        assert!(g.is_empty());
    }

    #[test]
    fn cutoff_week_limits_participating_posts() {
        let cfg = config(6);
        let week2 = cfg.start_time + 8 * 86_400;
        let threads = assemble_threads(vec![
            post("p0", "t0", "A", cfg.start_time, None),
            post("p1", "t0", "B", cfg.start_time + HOUR, Some("p0")),
            post("p2", "t0", "C", week2, Some("p0")),
        ])
        .unwrap();
        let g1 = build_graph(&threads, GraphKind::Type1, 1, &cfg).unwrap();
        assert_eq!(g1.edge_count(), 1);
        assert_eq!(edge(&g1, "B", "A"), Some(1));
        let g2 = build_graph(&threads, GraphKind::Type1, 2, &cfg).unwrap();
        assert_eq!(g2.edge_count(), 3);
    }

    #[test]
    fn cutoff_week_out_of_range_is_a_usage_error() {
        let cfg = config(6);
        let err = build_graph(&[], GraphKind::Type1, 7, &cfg).unwrap_err();
        assert!(matches!(err, Error::Usage(_)));
        assert!(matches!(
            build_graph(&[], GraphKind::Type1, 0, &cfg),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn unknown_kind_string_is_a_usage_error() {
        let err = "type3".parse::<GraphKind>().unwrap_err();
        assert!(matches!(err, Error::Usage(_)));
    }

    /// Random threaded forums used by the construction oracle.
    pub(crate) fn random_threads(
        seed: u64,
        n_threads: usize,
        n_students: usize,
        cfg: &CourseConfig,
    ) -> Vec<Thread> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let students: Vec<String> = (0..n_students).map(|i| format!("s{i:03}")).collect();
        let window = cfg.end_time() - cfg.start_time;
        let mut posts = Vec::new();
        let mut counter = 0;
        for t in 0..n_threads {
            let thread_id = format!("t{t:03}");
            let root_ts = cfg.start_time + rng.random_range(0..window - 7200);
            let root_id = format!("p{counter:05}");
            counter += 1;
            posts.push(post(
                &root_id,
                &thread_id,
                students.choose(&mut rng).unwrap(),
                root_ts,
                None,
            ));
            let mut ids = vec![(root_id, root_ts)];
            for _ in 0..rng.random_range(0..7) {
                let (parent, parent_ts) = ids.choose(&mut rng).unwrap().clone();
                let ts = parent_ts + rng.random_range(1..3600);
                let id = format!("p{counter:05}");
                counter += 1;
                posts.push(post(
                    &id,
                    &thread_id,
                    students.choose(&mut rng).unwrap(),
                    ts,
                    Some(&parent),
                ));
                ids.push((id, ts));
            }
        }
        assemble_threads(posts).unwrap()
    }

    /// Independent rule re-application: sort posts, walk them one by one,
    /// apply the textual rule, prune staff, drop isolated nodes.
    pub(crate) fn brute_force_graph(
        threads: &[Thread],
        kind: GraphKind,
        cutoff_week: u32,
        cfg: &CourseConfig,
    ) -> (BTreeMap<(StudentId, StudentId), u32>, BTreeSet<StudentId>) {
        let mut edges: HashMap<(StudentId, StudentId), u32> = HashMap::new();
        for t in threads {
            let mut seq: Vec<&ForumPost> = t
                .posts
                .iter()
                .filter(|p| week_of(p.timestamp, cfg).map(|w| w <= cutoff_week).unwrap_or(false))
                .collect();
            seq.sort_by(|a, b| (a.timestamp, &a.post_id).cmp(&(b.timestamp, &b.post_id)));
            for (i, p) in seq.iter().enumerate() {
                let targets: Vec<&StudentId> = match kind {
                    GraphKind::Type1 => seq[..i].iter().map(|q| &q.author_id).collect(),
                    GraphKind::Type2 => {
                        if p.post_id == t.root {
                            vec![]
                        } else {
                            seq.iter()
                                .filter(|q| q.post_id == t.root)
                                .map(|q| &q.author_id)
                                .collect()
                        }
                    }
                };
                for dst in targets {
                    if *dst != p.author_id {
                        *edges.entry((p.author_id.clone(), dst.clone())).or_insert(0) += 1;
                    }
                }
            }
        }
        let edges: BTreeMap<_, _> = edges
            .into_iter()
            .filter(|((s, d), _)| !cfg.staff_ids.contains(s) && !cfg.staff_ids.contains(d))
            .collect();
        let mut nodes = BTreeSet::new();
        for (s, d) in edges.keys() {
            nodes.insert(s.clone());
            nodes.insert(d.clone());
        }
        (edges, nodes)
    }

    #[test]
    fn randomized_forum_matches_brute_force_oracle() {
        let mut cfg = config(6);
        cfg.staff_ids.insert("s000".into());
        for seed in 0..10 {
            let threads = random_threads(seed, 50, 25, &cfg);
            for kind in [GraphKind::Type1, GraphKind::Type2] {
                for week in [2, 6] {
                    let g = build_graph(&threads, kind, week, &cfg).unwrap();
                    let (edges, nodes) = brute_force_graph(&threads, kind, week, &cfg);
                    assert_eq!(g.edges, edges, "seed {seed} kind {kind} week {week}");
                    assert_eq!(g.nodes, nodes, "seed {seed} kind {kind} week {week}");
                }
            }
        }
    }

    #[test]
    fn stats_of_empty_and_single_edge_graphs() {
        let cfg = config(6);
        let empty = build_graph(&[], GraphKind::Type1, 6, &cfg).unwrap();
        assert_eq!(
            graph_stats(&empty),
            GraphStats {
                nodes: 0,
                edges: 0,
                total_weight: 0,
                weak_components: 0
            }
        );

        let threads = simple_thread(&["A", "B"], &cfg);
        let g = build_graph(&threads, GraphKind::Type1, 6, &cfg).unwrap();
        assert_eq!(
            graph_stats(&g),
            GraphStats {
                nodes: 2,
                edges: 1,
                total_weight: 1,
                weak_components: 1
            }
        );
    }

    #[test]
    fn weak_components_match_bfs_oracle() {
        let cfg = config(6);
        for seed in 0..8 {
            let threads = random_threads(100 + seed, 12, 30, &cfg);
            let g = build_graph(&threads, GraphKind::Type1, 6, &cfg).unwrap();
            let stats = graph_stats(&g);

            // BFS recount over the undirected view.
            let mut adj: BTreeMap<&StudentId, Vec<&StudentId>> = BTreeMap::new();
            for (s, d) in g.edges.keys() {
                adj.entry(s).or_default().push(d);
                adj.entry(d).or_default().push(s);
            }
            let mut seen = BTreeSet::new();
            let mut components = 0;
            for node in &g.nodes {
                if seen.contains(node) {
                    continue;
                }
                components += 1;
                let mut queue = vec![node];
                while let Some(v) = queue.pop() {
                    if !seen.insert(v.clone()) {
                        continue;
                    }
                    if let Some(next) = adj.get(v) {
                        queue.extend(next.iter().copied());
                    }
                }
            }
            assert_eq!(stats.weak_components, components, "seed {seed}");
        }
    }

    #[test]
    fn export_writes_edge_list_and_sidecar() {
        let cfg = config(6);
        let threads = simple_thread(&["A", "B", "C"], &cfg);
        let g = build_graph(&threads, GraphKind::Type2, 3, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("graph.csv");
        export_edge_csv(&g, &path).unwrap();
        let csv = std::fs::read_to_string(&path).unwrap();
        assert!(csv.starts_with("src,dst,weight\n"));
        assert!(csv.contains("B,A,1"));
        let meta = std::fs::read_to_string(dir.path().join("graph.meta.json")).unwrap();
        assert!(meta.contains("\"type2\""));
        assert!(meta.contains("\"cutoff_week\": 3"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        /// Type 2 edges are a sub-multiset of Type 1 edges.
        #[test]
        fn type2_is_dominated_by_type1(seed in 0u64..1000) {
            let cfg = config(6);
            let threads = random_threads(seed, 20, 15, &cfg);
            let g1 = build_graph(&threads, GraphKind::Type1, 6, &cfg).unwrap();
            let g2 = build_graph(&threads, GraphKind::Type2, 6, &cfg).unwrap();
            for (pair, w2) in &g2.edges {
                let w1 = g1.edges.get(pair).copied().unwrap_or(0);
                prop_assert!(*w2 <= w1, "pair {pair:?}: type2 {w2} > type1 {w1}");
            }
        }

        /// Weekly cutoffs only grow the graph.
        #[test]
        fn cutoff_is_monotone(seed in 0u64..1000, w1 in 1u32..6) {
            let cfg = config(6);
            let threads = random_threads(seed, 20, 15, &cfg);
            let w2 = w1 + 1;
            for kind in [GraphKind::Type1, GraphKind::Type2] {
                let early = build_graph(&threads, kind, w1, &cfg).unwrap();
                let late = build_graph(&threads, kind, w2, &cfg).unwrap();
                for (pair, w_early) in &early.edges {
                    let w_late = late.edges.get(pair).copied().unwrap_or(0);
                    prop_assert!(*w_early <= w_late);
                }
            }
        }

        /// Same threads, same graph; and no isolated nodes survive.
        #[test]
        fn construction_is_deterministic_and_pruned(seed in 0u64..1000) {
            let cfg = config(6);
            let threads = random_threads(seed, 15, 12, &cfg);
            let a = build_graph(&threads, GraphKind::Type1, 6, &cfg).unwrap();
            let b = build_graph(&threads, GraphKind::Type1, 6, &cfg).unwrap();
            prop_assert_eq!(&a, &b);
            for node in &a.nodes {
                let degree = a
                    .edges
                    .keys()
                    .filter(|(s, d)| s == node || d == node)
                    .count();
                prop_assert!(degree > 0, "node {node} is isolated");
            }
        }
    }
}
