//! Per-target trimmed conversation graphs: affordance-based and recency-based
//! trimming, edge-mode variants, and receptive-field statistics.

use std::collections::{BTreeSet, HashSet};
use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::thread::{ConversationThread, Label};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Reply,
    PostLink,
    Temporal,
    Reverse,
}

/// A trimmed, directed subgraph around one target comment. Node index 0 is
/// always the root post; edges are (src, dst, kind) index triples with no
/// duplicates and no self-loops (self-loops are implicit at model time).
#[derive(Debug, Clone, PartialEq)]
pub struct ConversationGraph {
    pub thread_id: String,
    pub target_id: String,
    pub nodes: Vec<String>,
    pub target_index: usize,
    pub edges: Vec<(usize, usize, EdgeKind)>,
    pub label: Option<Label>,
    pub context_sensitive: Option<bool>,
}

impl ConversationGraph {
    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n == id)
    }

    /// True when some edge (src, dst, _) of any kind is stored.
    pub fn has_edge(&self, src: usize, dst: usize) -> bool {
        self.edges.iter().any(|&(s, d, _)| s == src && d == dst)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrimStrategy {
    Affordance,
    Recent,
}

/// Which nodes receive an edge from the root post.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PostEdges {
    AllNodes,
    TargetOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeMode {
    Directed,
    Undirected,
    DirectedTemporal,
    UndirectedTemporal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrimConfig {
    pub strategy: TrimStrategy,
    pub top_k: usize,
    pub post_edges: PostEdges,
    pub recent_budget: usize,
    pub edge_mode: EdgeMode,
    pub exclude_after_target: bool,
}

impl Default for TrimConfig {
    fn default() -> Self {
        TrimConfig {
            strategy: TrimStrategy::Affordance,
            top_k: 5,
            post_edges: PostEdges::AllNodes,
            recent_budget: 25,
            edge_mode: EdgeMode::Directed,
            exclude_after_target: true,
        }
    }
}

impl TrimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.top_k < 1 {
            return Err(Error::Argument("top_k must be at least 1".into()));
        }
        if self.recent_budget < 2 {
            return Err(Error::Argument("recent_budget must be at least 2".into()));
        }
        Ok(())
    }
}

/// Trim with the configured strategy, then apply the configured edge mode.
pub fn build_graph(
    thread: &ConversationThread,
    target_id: &str,
    cfg: &TrimConfig,
) -> Result<ConversationGraph> {
    cfg.validate()?;
    let base = match cfg.strategy {
        TrimStrategy::Affordance => affordance_trim(thread, target_id, cfg)?,
        TrimStrategy::Recent => recent_trim(thread, target_id, cfg)?,
    };
    apply_edge_mode(base, cfg.edge_mode, thread)
}

/// Sort key used for ranking candidates: higher score wins, ties broken by
/// (created_at ascending, id ascending).
fn rank_key<'a>(thread: &'a ConversationThread, id: &str) -> (i64, i64, &'a str) {
    let c = thread.comment(id).expect("ranked id exists");
    (-c.score, c.created_at, &thread.comment(id).unwrap().id)
}

/// Affordance-based trimming: the root post, the top-k depth-1 replies by
/// score, the best-scoring reply under each of them, and the full reply path
/// to the target. With `exclude_after_target`, comments posted at or after
/// the target's timestamp are ineligible for the ranked picks (the reply
/// path is always kept whole).
pub fn affordance_trim(
    thread: &ConversationThread,
    target_id: &str,
    cfg: &TrimConfig,
) -> Result<ConversationGraph> {
    let target = thread.comment(target_id)?;
    let root_id = thread.root().id.clone();

    let eligible = |id: &str| -> bool {
        if !cfg.exclude_after_target {
            return true;
        }
        thread.comment(id).map(|c| c.created_at < target.created_at).unwrap_or(false)
    };

    let mut selected: BTreeSet<String> = BTreeSet::new();
    selected.insert(root_id.clone());

    let mut depth1: Vec<&str> = thread
        .children_of(&root_id)?
        .into_iter()
        .filter(|id| eligible(id))
        .collect();
    depth1.sort_by_key(|id| rank_key(thread, id));
    for d1 in depth1.iter().take(cfg.top_k) {
        selected.insert(d1.to_string());
        let mut kids: Vec<&str> = thread
            .children_of(d1)?
            .into_iter()
            .filter(|id| eligible(id))
            .collect();
        kids.sort_by_key(|id| rank_key(thread, id));
        if let Some(best) = kids.first() {
            selected.insert(best.to_string());
        }
    }
    for id in thread.path_to_root(target_id)? {
        selected.insert(id.to_string());
    }

    assemble(thread, target_id, selected, cfg.post_edges)
}

/// Recency-based trimming: the root and the target always, plus the most
/// recent comments strictly preceding the target, up to `recent_budget`
/// total nodes. Timestamp ties prefer the larger id.
pub fn recent_trim(
    thread: &ConversationThread,
    target_id: &str,
    cfg: &TrimConfig,
) -> Result<ConversationGraph> {
    let target = thread.comment(target_id)?;
    let root_id = thread.root().id.clone();

    let mut selected: BTreeSet<String> = BTreeSet::new();
    selected.insert(root_id.clone());
    selected.insert(target_id.to_string());

    let mut candidates: Vec<&str> = thread
        .comments()
        .iter()
        .filter(|c| {
            c.id != root_id && c.id != target_id && c.created_at < target.created_at
        })
        .map(|c| c.id.as_str())
        .collect();
    // most recent first; ties keep the larger id longest
    candidates.sort_by(|a, b| {
        let ca = thread.comment(a).unwrap();
        let cb = thread.comment(b).unwrap();
        (cb.created_at, b).cmp(&(ca.created_at, a))
    });
    let room = cfg.recent_budget.saturating_sub(selected.len());
    for id in candidates.into_iter().take(room) {
        selected.insert(id.to_string());
    }

    assemble(thread, target_id, selected, cfg.post_edges)
}

/// Materialize a node set into a graph: root at index 0, the rest ordered by
/// (created_at, id); reply edges restricted to the set; post-link edges per
/// the configured variant.
fn assemble(
    thread: &ConversationThread,
    target_id: &str,
    selected: BTreeSet<String>,
    post_edges: PostEdges,
) -> Result<ConversationGraph> {
    let root_id = thread.root().id.as_str();
    let mut rest: Vec<&str> = selected
        .iter()
        .map(|s| s.as_str())
        .filter(|id| *id != root_id)
        .collect();
    rest.sort_by_key(|id| {
        let c = thread.comment(id).unwrap();
        (c.created_at, c.id.as_str())
    });
    let mut nodes: Vec<String> = Vec::with_capacity(rest.len() + 1);
    nodes.push(root_id.to_string());
    nodes.extend(rest.iter().map(|s| s.to_string()));

    let index_of = |id: &str| nodes.iter().position(|n| n == id);
    let target_index = index_of(target_id).expect("target always kept");

    let mut edges: Vec<(usize, usize, EdgeKind)> = Vec::new();
    let mut seen: HashSet<(usize, usize, EdgeKind)> = HashSet::new();
    let mut push = |edges: &mut Vec<(usize, usize, EdgeKind)>, e: (usize, usize, EdgeKind)| {
        if e.0 != e.1 && seen.insert(e) {
            edges.push(e);
        }
    };

    for (i, id) in nodes.iter().enumerate() {
        if let Some(pid) = &thread.comment(id)?.parent_id {
            if let Some(p) = index_of(pid) {
                push(&mut edges, (p, i, EdgeKind::Reply));
            }
        }
    }
    match post_edges {
        PostEdges::AllNodes => {
            for i in 1..nodes.len() {
                push(&mut edges, (0, i, EdgeKind::PostLink));
            }
        }
        PostEdges::TargetOnly => {
            push(&mut edges, (0, target_index, EdgeKind::PostLink));
        }
    }

    let target = thread.comment(target_id)?;
    Ok(ConversationGraph {
        thread_id: thread.thread_id.clone(),
        target_id: target_id.to_string(),
        nodes,
        target_index,
        edges,
        label: target.label,
        context_sensitive: target.context_sensitive,
    })
}

/// Edge-mode variants. Undirected modes add a reverse edge for every stored
/// (src, dst) pair; temporal modes chain siblings (same thread parent, both
/// in the node set) chronologically by (created_at, id).
pub fn apply_edge_mode(
    graph: ConversationGraph,
    mode: EdgeMode,
    thread: &ConversationThread,
) -> Result<ConversationGraph> {
    let mut graph = graph;
    if matches!(mode, EdgeMode::DirectedTemporal | EdgeMode::UndirectedTemporal) {
        add_temporal_edges(&mut graph, thread)?;
    }
    if matches!(mode, EdgeMode::Undirected | EdgeMode::UndirectedTemporal) {
        let mut seen: HashSet<(usize, usize, EdgeKind)> = graph.edges.iter().copied().collect();
        let forward: Vec<(usize, usize)> = graph.edges.iter().map(|&(s, d, _)| (s, d)).collect();
        for (s, d) in forward {
            let e = (d, s, EdgeKind::Reverse);
            if seen.insert(e) {
                graph.edges.push(e);
            }
        }
    }
    Ok(graph)
}

fn add_temporal_edges(graph: &mut ConversationGraph, thread: &ConversationThread) -> Result<()> {
    let mut seen: HashSet<(usize, usize, EdgeKind)> = graph.edges.iter().copied().collect();
    // group node-set members by their thread parent (the parent itself need
    // not be in the set)
    let mut groups: std::collections::BTreeMap<&str, Vec<usize>> = Default::default();
    for (i, id) in graph.nodes.iter().enumerate() {
        if let Some(pid) = &thread.comment(id)?.parent_id {
            groups.entry(pid.as_str()).or_default().push(i);
        }
    }
    for (_, mut members) in groups {
        if members.len() < 2 {
            continue;
        }
        members.sort_by_key(|&i| {
            let c = thread.comment(&graph.nodes[i]).unwrap();
            (c.created_at, c.id.clone())
        });
        for w in members.windows(2) {
            let e = (w[0], w[1], EdgeKind::Temporal);
            if e.0 != e.1 && seen.insert(e) {
                graph.edges.push(e);
            }
        }
    }
    Ok(())
}

/// Nodes with a directed path of length <= k ending at the target (the
/// in-neighborhood closure that matches the model's aggregation direction),
/// including the target itself.
pub fn k_hop_nodes(graph: &ConversationGraph, k: usize) -> BTreeSet<usize> {
    let n = graph.nodes.len();
    let mut in_nbrs: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for &(s, d, _) in &graph.edges {
        in_nbrs[d].insert(s);
    }
    let mut dist = vec![usize::MAX; n];
    dist[graph.target_index] = 0;
    let mut queue = VecDeque::new();
    queue.push_back(graph.target_index);
    while let Some(m) = queue.pop_front() {
        if dist[m] == k {
            continue;
        }
        for &s in &in_nbrs[m] {
            if dist[s] == usize::MAX {
                dist[s] = dist[m] + 1;
                queue.push_back(s);
            }
        }
    }
    (0..n).filter(|&i| dist[i] != usize::MAX).collect()
}

/// Max and (lower) median of |k_hop_nodes| over a set of graphs.
pub fn receptive_field_stats(graphs: &[ConversationGraph], k: usize) -> Result<(usize, usize)> {
    if graphs.is_empty() {
        return Err(Error::Argument("receptive_field_stats: empty graph list".into()));
    }
    let mut sizes: Vec<usize> = graphs.iter().map(|g| k_hop_nodes(g, k).len()).collect();
    sizes.sort_unstable();
    let max = *sizes.last().unwrap();
    let median = sizes[(sizes.len() - 1) / 2];
    Ok((max, median))
}

#[derive(Debug, Serialize, Deserialize)]
struct GraphRecord {
    thread_id: String,
    target_id: String,
    label: Option<Label>,
    context_sensitive: Option<bool>,
    nodes: Vec<String>,
    edges: Vec<(usize, usize, EdgeKind)>,
}

pub fn graph_to_json(graph: &ConversationGraph) -> String {
    serde_json::to_string(&GraphRecord {
        thread_id: graph.thread_id.clone(),
        target_id: graph.target_id.clone(),
        label: graph.label,
        context_sensitive: graph.context_sensitive,
        nodes: graph.nodes.clone(),
        edges: graph.edges.clone(),
    })
    .expect("graph serialization cannot fail")
}

pub fn graph_from_json(line: &str) -> Result<ConversationGraph> {
    let rec: GraphRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
        offset: 0,
        message: e.to_string(),
    })?;
    let target_index = rec
        .nodes
        .iter()
        .position(|n| *n == rec.target_id)
        .ok_or_else(|| Error::Structure(format!("target {:?} not among nodes", rec.target_id)))?;
    let n = rec.nodes.len();
    for &(s, d, _) in &rec.edges {
        if s >= n || d >= n {
            return Err(Error::Structure(format!(
                "edge ({}, {}) out of range for {} nodes",
                s, d, n
            )));
        }
        if s == d {
            return Err(Error::Structure(format!("self-loop stored at node {}", s)));
        }
    }
    Ok(ConversationGraph {
        thread_id: rec.thread_id,
        target_id: rec.target_id,
        nodes: rec.nodes,
        target_index,
        edges: rec.edges,
        label: rec.label,
        context_sensitive: rec.context_sensitive,
    })
}

pub fn read_graph_corpus(path: &Path) -> Result<Vec<ConversationGraph>> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut graphs = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        graphs.push(graph_from_json(&line).map_err(|e| {
            Error::Data(format!("graph line {}: {}", lineno + 1, e))
        })?);
    }
    Ok(graphs)
}

pub fn write_graph_corpus(path: &Path, graphs: &[ConversationGraph]) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    for g in graphs {
        writeln!(file, "{}", graph_to_json(g))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::thread::fixtures::{comment, fixture_thread};
    use crate::thread::ConversationThread;
    use std::collections::BTreeSet;

    fn cfg() -> TrimConfig {
        TrimConfig::default()
    }

    fn ids(graph: &ConversationGraph) -> BTreeSet<&str> {
        graph.nodes.iter().map(|s| s.as_str()).collect()
    }

    fn edge_set(graph: &ConversationGraph) -> BTreeSet<(&str, &str, EdgeKind)> {
        graph
            .edges
            .iter()
            .map(|&(s, d, k)| (graph.nodes[s].as_str(), graph.nodes[d].as_str(), k))
            .collect()
    }

    /// Brute-force enumerator for the affordance rule, written directly from
    /// the selection definition and independent of the implementation.
    fn affordance_oracle(
        thread: &ConversationThread,
        target_id: &str,
        top_k: usize,
        exclude_after: bool,
    ) -> BTreeSet<String> {
        let target_time = thread.comment(target_id).unwrap().created_at;
        let ok = |id: &str| !exclude_after || thread.comment(id).unwrap().created_at < target_time;
        let mut set = BTreeSet::new();
        set.insert(thread.root().id.clone());
        let mut d1: Vec<String> = thread
            .children_of(&thread.root().id)
            .unwrap()
            .into_iter()
            .filter(|id| ok(id))
            .map(String::from)
            .collect();
        d1.sort_by(|a, b| {
            let ca = thread.comment(a).unwrap();
            let cb = thread.comment(b).unwrap();
            (-ca.score, ca.created_at, a.clone()).cmp(&(-cb.score, cb.created_at, b.clone()))
        });
        d1.truncate(top_k);
        for d in &d1 {
            set.insert(d.clone());
            let mut kids: Vec<String> = thread
                .children_of(d)
                .unwrap()
                .into_iter()
                .filter(|id| ok(id))
                .map(String::from)
                .collect();
            kids.sort_by(|a, b| {
                let ca = thread.comment(a).unwrap();
                let cb = thread.comment(b).unwrap();
                (-ca.score, ca.created_at, a.clone()).cmp(&(-cb.score, cb.created_at, b.clone()))
            });
            if let Some(best) = kids.first() {
                set.insert(best.clone());
            }
        }
        for id in thread.path_to_root(target_id).unwrap() {
            set.insert(id.to_string());
        }
        set
    }

    #[test]
    fn affordance_fixture_nodes_and_edges() {
        let t = fixture_thread();
        let g = affordance_trim(&t, "t", &cfg()).unwrap();
        let expected: BTreeSet<&str> =
            ["p", "r1", "r2", "r3", "r4", "r5", "r1a", "r6", "t"].into_iter().collect();
        assert_eq!(ids(&g), expected);
        assert_eq!(g.nodes.len(), 9);
        assert_eq!(g.nodes[0], "p");
        assert_eq!(g.target_index, g.node_index("t").unwrap());

        let edges = edge_set(&g);
        let mut want: BTreeSet<(&str, &str, EdgeKind)> = BTreeSet::new();
        for r in ["r1", "r2", "r3", "r4", "r5", "r6"] {
            want.insert(("p", r, EdgeKind::Reply));
        }
        want.insert(("r1", "r1a", EdgeKind::Reply));
        want.insert(("r6", "t", EdgeKind::Reply));
        for n in ["r1", "r2", "r3", "r4", "r5", "r6", "r1a", "t"] {
            want.insert(("p", n, EdgeKind::PostLink));
        }
        assert_eq!(edges, want);

        // against the independent enumerator
        let oracle = affordance_oracle(&t, "t", 5, true);
        assert_eq!(ids(&g), oracle.iter().map(|s| s.as_str()).collect());
    }

    #[test]
    fn affordance_minimal_post_plus_reply() {
        let mut warnings = Vec::new();
        let t = ConversationThread::new(
            "t1".into(),
            vec![comment("p", None, 0, 1), comment("t", Some("p"), 0, 2)],
            &mut warnings,
        )
        .unwrap();
        let g = affordance_trim(&t, "t", &cfg()).unwrap();
        assert_eq!(g.nodes, vec!["p".to_string(), "t".to_string()]);
        let edges = edge_set(&g);
        assert_eq!(edges.len(), 2);
        assert!(edges.contains(&("p", "t", EdgeKind::Reply)));
        assert!(edges.contains(&("p", "t", EdgeKind::PostLink)));
    }

    #[test]
    fn affordance_target_is_root() {
        let t = fixture_thread();
        // the root predates every reply, so ranked picks require the
        // exclusion to be off
        let mut c = cfg();
        c.exclude_after_target = false;
        let g = affordance_trim(&t, "p", &c).unwrap();
        let expected: BTreeSet<&str> =
            ["p", "r1", "r2", "r3", "r4", "r5", "r1a"].into_iter().collect();
        assert_eq!(ids(&g), expected);
        assert_eq!(g.nodes.len(), 7);
        assert_eq!(g.target_index, 0);
        // no post_link self-loop stored
        assert!(g.edges.iter().all(|&(s, d, _)| s != d));

        // with the default exclusion, only the root survives
        let g2 = affordance_trim(&t, "p", &cfg()).unwrap();
        assert_eq!(g2.nodes, vec!["p".to_string()]);
        assert!(g2.edges.is_empty());
    }

    #[test]
    fn affordance_excludes_candidates_after_target() {
        // r_late outranks everyone but is posted after the target
        let mut warnings = Vec::new();
        let t = ConversationThread::new(
            "t1".into(),
            vec![
                comment("p", None, 0, 0),
                comment("a", Some("p"), 1, 10),
                comment("t", Some("a"), 0, 20),
                comment("r_late", Some("p"), 99, 30),
            ],
            &mut warnings,
        )
        .unwrap();
        let g = affordance_trim(&t, "t", &cfg()).unwrap();
        assert_eq!(ids(&g), ["p", "a", "t"].into_iter().collect::<BTreeSet<_>>());
        let mut c = cfg();
        c.exclude_after_target = false;
        let g2 = affordance_trim(&t, "t", &c).unwrap();
        assert!(ids(&g2).contains("r_late"));
    }

    #[test]
    fn affordance_score_ties_break_by_time_then_id() {
        let mut warnings = Vec::new();
        let t = ConversationThread::new(
            "t1".into(),
            vec![
                comment("p", None, 0, 0),
                comment("b", Some("p"), 5, 10),
                comment("a", Some("p"), 5, 10),
                comment("c", Some("p"), 5, 5),
                comment("t", Some("p"), 0, 99),
            ],
            &mut warnings,
        )
        .unwrap();
        let mut c = cfg();
        c.top_k = 2;
        let g = affordance_trim(&t, "t", &c).unwrap();
        // c is earliest, then a before b by id
        assert_eq!(ids(&g), ["p", "c", "a", "t"].into_iter().collect::<BTreeSet<_>>());
    }

    #[test]
    fn affordance_target_only_post_edges() {
        let t = fixture_thread();
        let mut c = cfg();
        c.post_edges = PostEdges::TargetOnly;
        let g = affordance_trim(&t, "t", &c).unwrap();
        let post_links: Vec<_> = g
            .edges
            .iter()
            .filter(|&&(_, _, k)| k == EdgeKind::PostLink)
            .collect();
        assert_eq!(post_links.len(), 1);
        assert_eq!(post_links[0].1, g.target_index);
    }

    #[test]
    fn affordance_node_bound_holds() {
        let t = fixture_thread();
        let g = affordance_trim(&t, "t", &cfg()).unwrap();
        let path_len = t.path_to_root("t").unwrap().len();
        assert!(g.nodes.len() <= 1 + 2 * 5 + path_len);
    }

    fn chain_thread(n: usize) -> ConversationThread {
        // root at time 1, then a reply chain at times 2..=n
        let mut comments = vec![comment("c001", None, 0, 1)];
        for i in 2..=n {
            comments.push(comment(
                &format!("c{:03}", i),
                Some(&format!("c{:03}", i - 1)),
                0,
                i as i64,
            ));
        }
        let mut warnings = Vec::new();
        ConversationThread::new("chain".into(), comments, &mut warnings).unwrap()
    }

    #[test]
    fn recent_trim_thirty_comment_chain() {
        let t = chain_thread(30);
        let mut c = cfg();
        c.strategy = TrimStrategy::Recent;
        let g = recent_trim(&t, "c028", &c).unwrap();
        assert_eq!(g.nodes.len(), 25);
        // counting oracle: root (t=1), target (t=28), fill with times 27..5
        let times: BTreeSet<i64> = g
            .nodes
            .iter()
            .map(|id| t.comment(id).unwrap().created_at)
            .collect();
        let mut expected: BTreeSet<i64> = (5..=27).collect();
        expected.insert(1);
        expected.insert(28);
        assert_eq!(times, expected);
    }

    #[test]
    fn recent_trim_small_thread_keeps_everything_before_target() {
        let t = chain_thread(6);
        let c = TrimConfig { strategy: TrimStrategy::Recent, ..cfg() };
        let g = recent_trim(&t, "c005", &c).unwrap();
        // c006 is after the target and must be gone
        assert_eq!(
            ids(&g),
            ["c001", "c002", "c003", "c004", "c005"].into_iter().collect::<BTreeSet<_>>()
        );
    }

    #[test]
    fn recent_trim_budget_two_is_root_and_target() {
        let t = chain_thread(10);
        let c = TrimConfig {
            strategy: TrimStrategy::Recent,
            recent_budget: 2,
            ..cfg()
        };
        let g = recent_trim(&t, "c007", &c).unwrap();
        assert_eq!(ids(&g), ["c001", "c007"].into_iter().collect::<BTreeSet<_>>());
        // parent excluded: no reply in-edge, but the post link remains
        assert_eq!(edge_set(&g), [("c001", "c007", EdgeKind::PostLink)].into_iter().collect());
    }

    #[test]
    fn recent_trim_tie_prefers_larger_id() {
        let mut warnings = Vec::new();
        let t = ConversationThread::new(
            "t1".into(),
            vec![
                comment("p", None, 0, 0),
                comment("a", Some("p"), 0, 5),
                comment("b", Some("p"), 0, 5),
                comment("t", Some("p"), 0, 9),
            ],
            &mut warnings,
        )
        .unwrap();
        let c = TrimConfig {
            strategy: TrimStrategy::Recent,
            recent_budget: 3,
            ..cfg()
        };
        let g = recent_trim(&t, "t", &c).unwrap();
        assert!(ids(&g).contains("b"));
        assert!(!ids(&g).contains("a"));
    }

    #[test]
    fn directed_mode_is_identity() {
        let t = fixture_thread();
        let g = affordance_trim(&t, "t", &cfg()).unwrap();
        let g2 = apply_edge_mode(g.clone(), EdgeMode::Directed, &t).unwrap();
        assert_eq!(g, g2);
    }

    #[test]
    fn undirected_adds_reverse_edges() {
        let mut warnings = Vec::new();
        let t = ConversationThread::new(
            "t1".into(),
            vec![comment("p", None, 0, 1), comment("t", Some("p"), 0, 2)],
            &mut warnings,
        )
        .unwrap();
        let mut c = cfg();
        c.post_edges = PostEdges::TargetOnly;
        let g = affordance_trim(&t, "t", &c).unwrap();
        // base: reply p->t and post_link p->t
        let g2 = apply_edge_mode(g, EdgeMode::Undirected, &t).unwrap();
        let edges = edge_set(&g2);
        assert!(edges.contains(&("t", "p", EdgeKind::Reverse)));
    }

    #[test]
    fn undirected_doubles_edge_count_without_parallel_pairs() {
        // pure reply tree (no post links) has no parallel (src, dst) pairs
        let t = chain_thread(8);
        let mut g = affordance_trim(&t, "c008", &cfg()).unwrap();
        g.edges.retain(|&(_, _, k)| k == EdgeKind::Reply);
        let before = g.edges.len();
        let g2 = apply_edge_mode(g, EdgeMode::Undirected, &t).unwrap();
        assert_eq!(g2.edges.len(), before * 2);
    }

    #[test]
    fn temporal_chains_included_siblings() {
        let t = fixture_thread();
        let g = affordance_trim(&t, "t", &cfg()).unwrap();
        let g2 = apply_edge_mode(g, EdgeMode::DirectedTemporal, &t).unwrap();
        let temporal: BTreeSet<(&str, &str)> = g2
            .edges
            .iter()
            .filter(|&&(_, _, k)| k == EdgeKind::Temporal)
            .map(|&(s, d, _)| (g2.nodes[s].as_str(), g2.nodes[d].as_str()))
            .collect();
        let want: BTreeSet<(&str, &str)> =
            [("r1", "r2"), ("r2", "r3"), ("r3", "r4"), ("r4", "r5"), ("r5", "r6")]
                .into_iter()
                .collect();
        assert_eq!(temporal, want);
    }

    #[test]
    fn k_hop_trivial_and_chain() {
        let mut warnings = Vec::new();
        let t = ConversationThread::new(
            "t1".into(),
            vec![
                comment("p", None, 0, 0),
                comment("a", Some("p"), 0, 1),
                comment("b", Some("a"), 0, 2),
                comment("t", Some("b"), 0, 3),
            ],
            &mut warnings,
        )
        .unwrap();
        let g = affordance_trim(&t, "t", &cfg()).unwrap();
        let by_id = |k| -> BTreeSet<&str> {
            k_hop_nodes(&g, k).into_iter().map(|i| g.nodes[i].as_str()).collect()
        };
        assert_eq!(by_id(0), ["t"].into_iter().collect());
        // 1 hop: reply parent b and the post link from p
        assert_eq!(by_id(1), ["t", "b", "p"].into_iter().collect());
        assert_eq!(by_id(2), ["t", "b", "a", "p"].into_iter().collect());
        assert_eq!(by_id(3), by_id(4));
    }

    #[test]
    fn k_hop_monotone_on_fixture() {
        let t = fixture_thread();
        let g = affordance_trim(&t, "t", &cfg()).unwrap();
        for k in 0..5 {
            let a = k_hop_nodes(&g, k);
            let b = k_hop_nodes(&g, k + 1);
            assert!(a.is_subset(&b));
        }
    }

    #[test]
    fn receptive_field_stats_single_graph() {
        let mut warnings = Vec::new();
        let t = ConversationThread::new(
            "t1".into(),
            vec![comment("p", None, 0, 1), comment("t", Some("p"), 0, 2)],
            &mut warnings,
        )
        .unwrap();
        let g = affordance_trim(&t, "t", &cfg()).unwrap();
        assert_eq!(receptive_field_stats(&[g], 1).unwrap(), (2, 2));
        assert!(receptive_field_stats(&[], 1).is_err());
    }

    #[test]
    fn graph_jsonl_round_trip() {
        let t = fixture_thread();
        let g = affordance_trim(&t, "t", &cfg()).unwrap();
        let json = graph_to_json(&g);
        let back = graph_from_json(&json).unwrap();
        assert_eq!(g, back);
    }

    #[test]
    fn graph_json_rejects_self_loop_and_bad_target() {
        assert!(graph_from_json(
            r#"{"thread_id":"x","target_id":"a","label":null,"context_sensitive":null,"nodes":["a","b"],"edges":[[0,0,"reply"]]}"#
        )
        .is_err());
        assert!(graph_from_json(
            r#"{"thread_id":"x","target_id":"zz","label":null,"context_sensitive":null,"nodes":["a","b"],"edges":[]}"#
        )
        .is_err());
    }

    #[test]
    fn trimming_is_deterministic() {
        let t = fixture_thread();
        let a = build_graph(&t, "t", &cfg()).unwrap();
        let b = build_graph(&t, "t", &cfg()).unwrap();
        assert_eq!(a, b);
    }
}
