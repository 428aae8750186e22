//! Interaction graphs and the centralities projected into the feature set.
//!
//! From one event log four directed simple graphs are built, one per
//! relational kind: follows, likes, replies, reposts. An edge runs from the
//! acting user to the subject user of a create event; deletes are ignored,
//! self-loops are dropped, and parallel edges collapse. Nodes are the users
//! participating in create events of that kind (including users whose only
//! edge was a dropped self-loop), independent of any downstream user
//! selection, so centralities are computed on the full interaction
//! structure and only then projected onto selected users.
//!
//! Three measures per graph: k-core number on the undirected projection,
//! total degree (in + out), and PageRank.

use std::collections::HashMap;

use crate::ingest::{EventAction, EventKind, EventLog};

/// The four relational event kinds that induce graphs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InteractionKind {
    Follows,
    Likes,
    Replies,
    Reposts,
}

impl InteractionKind {
    pub const ALL: [InteractionKind; 4] = [
        InteractionKind::Follows,
        InteractionKind::Likes,
        InteractionKind::Replies,
        InteractionKind::Reposts,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            InteractionKind::Follows => "follows",
            InteractionKind::Likes => "likes",
            InteractionKind::Replies => "replies",
            InteractionKind::Reposts => "reposts",
        }
    }

    fn event_kind(self) -> EventKind {
        match self {
            InteractionKind::Follows => EventKind::Follow,
            InteractionKind::Likes => EventKind::Like,
            InteractionKind::Replies => EventKind::Reply,
            InteractionKind::Reposts => EventKind::Repost,
        }
    }
}

/// A directed simple graph over user ids.
#[derive(Debug, Clone)]
pub struct InteractionGraph {
    pub kind: InteractionKind,
    /// Sorted user ids; indices below refer to this order.
    nodes: Vec<String>,
    out: Vec<Vec<u32>>,
    indegree: Vec<u32>,
}

impl InteractionGraph {
    /// Extracts the graph of one relational kind from the log.
    pub fn from_log(log: &EventLog, kind: InteractionKind) -> Self {
        let event_kind = kind.event_kind();
        let mut raw_edges: Vec<(String, String)> = Vec::new();
        let mut participants = std::collections::BTreeSet::new();
        for e in log.events() {
            if e.kind != event_kind || e.action != EventAction::Create {
                continue;
            }
            let Some(subject) = &e.subject else { continue };
            participants.insert(e.actor.clone());
            participants.insert(subject.clone());
            if &e.actor != subject {
                raw_edges.push((e.actor.clone(), subject.clone()));
            }
        }

        let nodes: Vec<String> = participants.into_iter().collect();
        let index: HashMap<&str, u32> = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i as u32))
            .collect();

        let mut out: Vec<Vec<u32>> = vec![Vec::new(); nodes.len()];
        for (src, dst) in &raw_edges {
            out[index[src.as_str()] as usize].push(index[dst.as_str()]);
        }
        let mut indegree = vec![0u32; nodes.len()];
        for list in &mut out {
            list.sort_unstable();
            list.dedup();
            for &t in list.iter() {
                indegree[t as usize] += 1;
            }
        }

        InteractionGraph {
            kind,
            nodes,
            out,
            indegree,
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.out.iter().map(Vec::len).sum()
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn out_neighbors(&self, node: usize) -> &[u32] {
        &self.out[node]
    }

    /// In-degree plus out-degree on the directed simple graph, so a
    /// reciprocal pair contributes 2 to each endpoint.
    pub fn total_degree(&self) -> Vec<u32> {
        self.out
            .iter()
            .zip(&self.indegree)
            .map(|(o, &i)| o.len() as u32 + i)
            .collect()
    }

    /// Undirected simple adjacency: union of in- and out-neighbors.
    fn undirected_adjacency(&self) -> Vec<Vec<u32>> {
        let mut adj: Vec<Vec<u32>> = vec![Vec::new(); self.nodes.len()];
        for (s, list) in self.out.iter().enumerate() {
            for &t in list {
                adj[s].push(t);
                adj[t as usize].push(s as u32);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }
}

/// PageRank parameters. Damping 0.85, uniform teleport, dangling mass
/// redistributed uniformly each iteration.
#[derive(Debug, Clone, Copy)]
pub struct PageRankParams {
    pub damping: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for PageRankParams {
    fn default() -> Self {
        PageRankParams {
            damping: 0.85,
            tolerance: 1e-10,
            max_iterations: 200,
        }
    }
}

/// Power-iteration PageRank. Converges when the L1 change between
/// iterations drops below the tolerance. Scores sum to 1 and every node
/// scores above zero; an empty graph gives an empty vector.
pub fn pagerank(graph: &InteractionGraph, params: PageRankParams) -> Vec<f64> {
    let n = graph.node_count();
    if n == 0 {
        return Vec::new();
    }
    let nf = n as f64;
    let d = params.damping;
    let mut rank = vec![1.0 / nf; n];
    let mut next = vec![0.0f64; n];
    for _ in 0..params.max_iterations {
        let dangling: f64 = (0..n)
            .filter(|&v| graph.out[v].is_empty())
            .map(|v| rank[v])
            .sum();
        let base = (1.0 - d) / nf + d * dangling / nf;
        next.iter_mut().for_each(|v| *v = base);
        for v in 0..n {
            let outs = &graph.out[v];
            if outs.is_empty() {
                continue;
            }
            let share = d * rank[v] / outs.len() as f64;
            for &t in outs {
                next[t as usize] += share;
            }
        }
        let delta: f64 = rank
            .iter()
            .zip(next.iter())
            .map(|(a, b)| (a - b).abs())
            .sum();
        std::mem::swap(&mut rank, &mut next);
        if delta < params.tolerance {
            break;
        }
    }
    rank
}

/// Core number of every node on the undirected projection, via min-degree
/// bucket peeling: a node's coreness is the largest k such that it belongs
/// to a subgraph where every node has degree at least k.
pub fn coreness(graph: &InteractionGraph) -> Vec<u32> {
    let adj = graph.undirected_adjacency();
    let n = adj.len();
    if n == 0 {
        return Vec::new();
    }
    let mut degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let max_degree = degree.iter().copied().max().unwrap_or(0);

    // Bucket sort nodes by degree.
    let mut bucket_start = vec![0usize; max_degree + 2];
    for &d in &degree {
        bucket_start[d + 1] += 1;
    }
    for i in 1..bucket_start.len() {
        bucket_start[i] += bucket_start[i - 1];
    }
    let mut position = vec![0usize; n];
    let mut order = vec![0usize; n];
    {
        let mut cursor = bucket_start.clone();
        for v in 0..n {
            let d = degree[v];
            position[v] = cursor[d];
            order[cursor[d]] = v;
            cursor[d] += 1;
        }
    }

    let mut core = vec![0u32; n];
    let mut processed = vec![false; n];
    for i in 0..n {
        let v = order[i];
        core[v] = degree[v] as u32;
        processed[v] = true;
        for &u in &adj[v] {
            let u = u as usize;
            if processed[u] || degree[u] <= degree[v] {
                continue;
            }
            // Swap u to the front of its degree bucket, then shrink its
            // degree so it joins the next-lower bucket.
            let du = degree[u];
            let front = bucket_start[du];
            let w = order[front];
            if w != u {
                order.swap(position[u], front);
                position.swap(u, w);
            }
            bucket_start[du] += 1;
            degree[u] -= 1;
        }
    }
    core
}

/// Per-user centrality columns for all four graphs, in manifest order:
/// coreness, degree, PageRank per kind.
#[derive(Debug, Default)]
pub struct CentralityTable {
    values: HashMap<String, [f64; 12]>,
}

impl CentralityTable {
    pub const COLUMNS: [&'static str; 12] = [
        "follows_coreness",
        "follows_degree",
        "follows_pagerank",
        "likes_coreness",
        "likes_degree",
        "likes_pagerank",
        "replies_coreness",
        "replies_degree",
        "replies_pagerank",
        "reposts_coreness",
        "reposts_degree",
        "reposts_pagerank",
    ];

    /// Centrality row for a user; zeros for users absent from a graph.
    pub fn get(&self, user: &str) -> [f64; 12] {
        self.values.get(user).copied().unwrap_or([0.0; 12])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Builds all four graphs and computes the full centrality table.
pub fn centralities(log: &EventLog) -> CentralityTable {
    let mut table = CentralityTable::default();
    for (gi, kind) in InteractionKind::ALL.into_iter().enumerate() {
        let graph = InteractionGraph::from_log(log, kind);
        let core = coreness(&graph);
        let degree = graph.total_degree();
        let pr = pagerank(&graph, PageRankParams::default());
        for (i, node) in graph.nodes.iter().enumerate() {
            let row = table.values.entry(node.clone()).or_insert([0.0; 12]);
            row[gi * 3] = core[i] as f64;
            row[gi * 3 + 1] = degree[i] as f64;
            row[gi * 3 + 2] = pr[i];
        }
    }
    table
}
