//! Absorbing directed acyclic graphs: parsing, validation, node
//! classification, topological ordering and path enumeration.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

/// Default upper bound on the number of paths [`enumerate_paths`] returns.
pub const DEFAULT_PATH_CAP: usize = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: duplicate edge {src} -> {dst}")]
    DuplicateEdge {
        line: usize,
        src: String,
        dst: String,
    },
    #[error("line {line}: self-loop on {node}")]
    SelfLoop { line: usize, node: String },
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("graph contains a cycle: {0}")]
    Cycle(String),
    #[error("more than {cap} paths between {from} and {to}")]
    PathCapExceeded {
        from: String,
        to: String,
        cap: usize,
    },
}

/// Index of a node within a [`Dag`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

/// Index of an edge within a [`Dag`], in declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeId(pub usize);

/// A directed graph over labelled nodes. Nodes keep first-mention order and
/// edges keep declaration order; both orders are observable through the API
/// and drive every tie-break downstream.
///
/// Construction only rejects self-loops and duplicate edges. Acyclicity,
/// the unique source and reachability are checked by [`validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dag {
    names: Vec<String>,
    index: HashMap<String, NodeId>,
    edges: Vec<(NodeId, NodeId)>,
    out_edges: Vec<Vec<EdgeId>>,
    in_edges: Vec<Vec<EdgeId>>,
    edge_index: HashMap<(NodeId, NodeId), EdgeId>,
}

impl Dag {
    /// Builds a graph from explicit node and edge lists. Nodes mentioned only
    /// by edges are appended in first-mention order.
    pub fn new<S: AsRef<str>>(nodes: &[S], edges: &[(S, S)]) -> Result<Self, GraphError> {
        let mut dag = Dag::empty();
        for n in nodes {
            dag.intern(n.as_ref());
        }
        for (i, (s, d)) in edges.iter().enumerate() {
            dag.push_edge(s.as_ref(), d.as_ref(), i + 1)?;
        }
        Ok(dag)
    }

    fn empty() -> Self {
        Dag {
            names: Vec::new(),
            index: HashMap::new(),
            edges: Vec::new(),
            out_edges: Vec::new(),
            in_edges: Vec::new(),
            edge_index: HashMap::new(),
        }
    }

    fn intern(&mut self, name: &str) -> NodeId {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = NodeId(self.names.len());
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        self.out_edges.push(Vec::new());
        self.in_edges.push(Vec::new());
        id
    }

    fn push_edge(&mut self, src: &str, dst: &str, line: usize) -> Result<(), GraphError> {
        if src == dst {
            return Err(GraphError::SelfLoop {
                line,
                node: src.to_string(),
            });
        }
        let s = self.intern(src);
        let d = self.intern(dst);
        if self.edge_index.contains_key(&(s, d)) {
            return Err(GraphError::DuplicateEdge {
                line,
                src: src.to_string(),
                dst: dst.to_string(),
            });
        }
        let e = EdgeId(self.edges.len());
        self.edges.push((s, d));
        self.out_edges[s.0].push(e);
        self.in_edges[d.0].push(e);
        self.edge_index.insert((s, d), e);
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.names.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.names.len()).map(NodeId)
    }

    pub fn name(&self, id: NodeId) -> &str {
        &self.names[id.0]
    }

    pub fn node(&self, name: &str) -> Result<NodeId, GraphError> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| GraphError::UnknownNode(name.to_string()))
    }

    pub fn edge(&self, id: EdgeId) -> (NodeId, NodeId) {
        self.edges[id.0]
    }

    pub fn edges(&self) -> impl Iterator<Item = (EdgeId, NodeId, NodeId)> + '_ {
        self.edges
            .iter()
            .enumerate()
            .map(|(i, &(s, d))| (EdgeId(i), s, d))
    }

    pub fn find_edge(&self, src: NodeId, dst: NodeId) -> Option<EdgeId> {
        self.edge_index.get(&(src, dst)).copied()
    }

    /// Outgoing edges of `node` in declaration order.
    pub fn out_edges(&self, node: NodeId) -> &[EdgeId] {
        &self.out_edges[node.0]
    }

    pub fn in_edges(&self, node: NodeId) -> &[EdgeId] {
        &self.in_edges[node.0]
    }

    pub fn children(&self, node: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.out_edges[node.0].iter().map(|e| self.edges[e.0].1)
    }

    pub fn out_degree(&self, node: NodeId) -> usize {
        self.out_edges[node.0].len()
    }

    pub fn in_degree(&self, node: NodeId) -> usize {
        self.in_edges[node.0].len()
    }

    pub fn is_absorbing(&self, node: NodeId) -> bool {
        self.out_degree(node) == 0
    }

    /// The unique node with in-degree zero, if there is exactly one.
    pub fn source(&self) -> Option<NodeId> {
        let mut roots = self.nodes().filter(|&n| self.in_degree(n) == 0);
        match (roots.next(), roots.next()) {
            (Some(r), None) => Some(r),
            _ => None,
        }
    }

    /// Nodes with at least one outgoing edge, in declaration order.
    pub fn parents(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes().filter(|&n| self.out_degree(n) > 0)
    }

    /// Nodes reachable from `from`, including `from` itself.
    pub fn reachable_from(&self, from: NodeId) -> Vec<bool> {
        let mut seen = vec![false; self.node_count()];
        let mut stack = vec![from];
        seen[from.0] = true;
        while let Some(v) = stack.pop() {
            for w in self.children(v) {
                if !seen[w.0] {
                    seen[w.0] = true;
                    stack.push(w);
                }
            }
        }
        seen
    }
}

fn is_identifier(token: &str) -> bool {
    !token.is_empty()
        && token
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'_')
}

/// Parses the whitespace-separated edge-list format: one `SRC DST` pair per
/// line, with blank lines and `#` comments ignored.
pub fn parse_graph(text: &str) -> Result<Dag, GraphError> {
    let mut dag = Dag::empty();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = trimmed.split_whitespace().collect();
        if tokens.len() != 2 {
            return Err(GraphError::Syntax {
                line,
                message: format!("expected `SRC DST`, found {} field(s)", tokens.len()),
            });
        }
        for t in &tokens {
            if !is_identifier(t) {
                return Err(GraphError::Syntax {
                    line,
                    message: format!("invalid node identifier `{t}`"),
                });
            }
        }
        dag.push_edge(tokens[0], tokens[1], line)?;
    }
    Ok(dag)
}

/// A single failed structural check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValidationFailure {
    /// A directed cycle, listed from its first node back to that node.
    Cycle(Vec<String>),
    NoSource,
    MultipleSources(Vec<String>),
    Unreachable(Vec<String>),
    NoAbsorbing,
}

impl fmt::Display for ValidationFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationFailure::Cycle(w) => write!(f, "cycle: {}", w.join(" -> ")),
            ValidationFailure::NoSource => write!(f, "no node with in-degree 0"),
            ValidationFailure::MultipleSources(s) => {
                write!(f, "multiple nodes with in-degree 0: {}", s.join(", "))
            }
            ValidationFailure::Unreachable(s) => {
                write!(f, "nodes unreachable from the source: {}", s.join(", "))
            }
            ValidationFailure::NoAbsorbing => write!(f, "no absorbing node"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub failures: Vec<ValidationFailure>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Runs every structural check and collects the failures.
pub fn validate(dag: &Dag) -> ValidationReport {
    let mut failures = Vec::new();

    if let Some(cycle) = find_cycle(dag) {
        failures.push(ValidationFailure::Cycle(
            cycle.iter().map(|&n| dag.name(n).to_string()).collect(),
        ));
    }

    let roots: Vec<NodeId> = dag.nodes().filter(|&n| dag.in_degree(n) == 0).collect();
    match roots.len() {
        0 => failures.push(ValidationFailure::NoSource),
        1 => {
            let seen = dag.reachable_from(roots[0]);
            let missing: Vec<String> = dag
                .nodes()
                .filter(|n| !seen[n.0])
                .map(|n| dag.name(n).to_string())
                .collect();
            if !missing.is_empty() {
                failures.push(ValidationFailure::Unreachable(missing));
            }
        }
        _ => failures.push(ValidationFailure::MultipleSources(
            roots.iter().map(|&n| dag.name(n).to_string()).collect(),
        )),
    }

    if !dag.nodes().any(|n| dag.is_absorbing(n)) {
        failures.push(ValidationFailure::NoAbsorbing);
    }

    ValidationReport { failures }
}

/// Iterative three-colour DFS. Returns the first cycle found, closed by
/// repeating its starting node.
fn find_cycle(dag: &Dag) -> Option<Vec<NodeId>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        White,
        Grey,
        Black,
    }
    let mut mark = vec![Mark::White; dag.node_count()];
    for root in dag.nodes() {
        if mark[root.0] != Mark::White {
            continue;
        }
        // (node, next child position)
        let mut stack: Vec<(NodeId, usize)> = vec![(root, 0)];
        mark[root.0] = Mark::Grey;
        while let Some(top) = stack.last_mut() {
            let (v, pos) = *top;
            if let Some(&e) = dag.out_edges(v).get(pos) {
                top.1 += 1;
                let w = dag.edge(e).1;
                match mark[w.0] {
                    Mark::White => {
                        mark[w.0] = Mark::Grey;
                        stack.push((w, 0));
                    }
                    Mark::Grey => {
                        let start = stack.iter().position(|&(n, _)| n == w).unwrap();
                        let mut cycle: Vec<NodeId> =
                            stack[start..].iter().map(|&(n, _)| n).collect();
                        cycle.push(w);
                        return Some(cycle);
                    }
                    Mark::Black => {}
                }
            } else {
                mark[v.0] = Mark::Black;
                stack.pop();
            }
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeClassification {
    pub source: NodeId,
    pub transient: BTreeSet<NodeId>,
    pub absorbing: BTreeSet<NodeId>,
}

/// Splits nodes into the source, transient nodes and absorbing nodes.
/// Returns `None` when the graph has no unique source.
pub fn classify_nodes(dag: &Dag) -> Option<NodeClassification> {
    let source = dag.source()?;
    let mut transient = BTreeSet::new();
    let mut absorbing = BTreeSet::new();
    for n in dag.nodes() {
        if dag.is_absorbing(n) {
            absorbing.insert(n);
        } else if n != source {
            transient.insert(n);
        }
    }
    Some(NodeClassification {
        source,
        transient,
        absorbing,
    })
}

/// Kahn's algorithm; among ready nodes the earliest-declared goes first.
pub fn topological_order(dag: &Dag) -> Result<Vec<NodeId>, GraphError> {
    let mut indegree: Vec<usize> = dag.nodes().map(|n| dag.in_degree(n)).collect();
    let mut ready: BTreeSet<NodeId> = dag.nodes().filter(|n| indegree[n.0] == 0).collect();
    let mut order = Vec::with_capacity(dag.node_count());
    while let Some(v) = ready.pop_first() {
        order.push(v);
        for w in dag.children(v) {
            indegree[w.0] -= 1;
            if indegree[w.0] == 0 {
                ready.insert(w);
            }
        }
    }
    if order.len() != dag.node_count() {
        let witness = find_cycle(dag)
            .map(|c| {
                c.iter()
                    .map(|&n| dag.name(n))
                    .collect::<Vec<_>>()
                    .join(" -> ")
            })
            .unwrap_or_default();
        return Err(GraphError::Cycle(witness));
    }
    Ok(order)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Path {
    pub nodes: Vec<NodeId>,
}

impl Path {
    pub fn new(nodes: Vec<NodeId>) -> Self {
        Path { nodes }
    }

    /// Resolves a path written as node names.
    pub fn from_names<S: AsRef<str>>(dag: &Dag, names: &[S]) -> Result<Self, GraphError> {
        names
            .iter()
            .map(|n| dag.node(n.as_ref()))
            .collect::<Result<Vec<_>, _>>()
            .map(Path::new)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Edges traversed by the path, or `None` if some step is not an edge.
    pub fn edges(&self, dag: &Dag) -> Option<Vec<EdgeId>> {
        self.nodes
            .windows(2)
            .map(|w| dag.find_edge(w[0], w[1]))
            .collect()
    }

    pub fn display(&self, dag: &Dag) -> String {
        self.nodes
            .iter()
            .map(|&n| dag.name(n))
            .collect::<Vec<_>>()
            .join("-")
    }
}

/// All directed paths from `from` to `to`, depth-first with children in edge
/// declaration order. `from == to` yields the single-node path.
pub fn enumerate_paths(dag: &Dag, from: NodeId, to: NodeId) -> Result<Vec<Path>, GraphError> {
    enumerate_paths_capped(dag, from, to, DEFAULT_PATH_CAP)
}

pub fn enumerate_paths_capped(
    dag: &Dag,
    from: NodeId,
    to: NodeId,
    cap: usize,
) -> Result<Vec<Path>, GraphError> {
    let n = dag.node_count();
    if from.0 >= n {
        return Err(GraphError::UnknownNode(format!("#{}", from.0)));
    }
    if to.0 >= n {
        return Err(GraphError::UnknownNode(format!("#{}", to.0)));
    }

    // Prune branches that cannot reach `to`.
    let mut reaches = vec![false; n];
    reaches[to.0] = true;
    let mut stack = vec![to];
    while let Some(v) = stack.pop() {
        for &e in dag.in_edges(v) {
            let u = dag.edge(e).0;
            if !reaches[u.0] {
                reaches[u.0] = true;
                stack.push(u);
            }
        }
    }

    let mut paths = Vec::new();
    if !reaches[from.0] {
        return Ok(paths);
    }
    let mut current = vec![from];
    let mut on_path = vec![false; n];
    on_path[from.0] = true;
    let cap_err = || GraphError::PathCapExceeded {
        from: dag.name(from).to_string(),
        to: dag.name(to).to_string(),
        cap,
    };
    dfs_paths(
        dag,
        to,
        &reaches,
        &mut current,
        &mut on_path,
        &mut paths,
        cap,
    )
    .map_err(|_| cap_err())?;
    Ok(paths)
}

fn dfs_paths(
    dag: &Dag,
    to: NodeId,
    reaches: &[bool],
    current: &mut Vec<NodeId>,
    on_path: &mut [bool],
    out: &mut Vec<Path>,
    cap: usize,
) -> Result<(), ()> {
    let v = *current.last().unwrap();
    if v == to {
        if out.len() >= cap {
            return Err(());
        }
        out.push(Path::new(current.clone()));
        return Ok(());
    }
    for w in dag.children(v) {
        // on_path only matters for unvalidated (cyclic) input
        if reaches[w.0] && !on_path[w.0] {
            on_path[w.0] = true;
            current.push(w);
            let r = dfs_paths(dag, to, reaches, current, on_path, out, cap);
            current.pop();
            on_path[w.0] = false;
            r?;
        }
    }
    Ok(())
}
