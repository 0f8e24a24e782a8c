//! Label graph over class leaves and internal taxonomy nodes.
//!
//! Edges are ingested with a parent -> child orientation (used only to place
//! nodes in depth layers) but the graph itself is undirected: walks need
//! reversible traversal.

use crate::error::{Error, Result};
use std::collections::{HashMap, VecDeque};

pub type NodeId = usize;

#[derive(Debug, Clone)]
pub struct LabelGraph {
    names: Vec<String>,
    index: HashMap<String, NodeId>,
    adjacency: Vec<Vec<NodeId>>,
    parents: Vec<Vec<NodeId>>,
    class_nodes: Vec<NodeId>,
    is_class: Vec<bool>,
    depth: Vec<usize>,
}

impl LabelGraph {
    /// Builds a validated graph from named nodes, directed parent->child
    /// edges, and the set of class-node names.
    pub fn build(
        names: Vec<String>,
        edges: &[(NodeId, NodeId)],
        class_names: &[String],
    ) -> Result<Self> {
        let n = names.len();
        if n == 0 {
            return Err(Error::Graph("graph has no nodes".into()));
        }
        let mut index = HashMap::with_capacity(n);
        for (id, name) in names.iter().enumerate() {
            if index.insert(name.clone(), id).is_some() {
                return Err(Error::Graph(format!("duplicate node name {name:?}")));
            }
        }

        let mut adjacency = vec![Vec::new(); n];
        let mut parents = vec![Vec::new(); n];
        let mut seen = std::collections::HashSet::new();
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::Graph(format!("edge ({a}, {b}) out of range")));
            }
            if a == b {
                return Err(Error::Graph(format!("self-loop on node {:?}", names[a])));
            }
            let key = (a.min(b), a.max(b));
            if !seen.insert(key) {
                return Err(Error::Graph(format!(
                    "duplicate edge between {:?} and {:?}",
                    names[a], names[b]
                )));
            }
            adjacency[a].push(b);
            adjacency[b].push(a);
            parents[b].push(a);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        for list in &mut parents {
            list.sort_unstable();
        }

        let mut is_class = vec![false; n];
        let mut class_nodes = Vec::with_capacity(class_names.len());
        for name in class_names {
            let id = *index
                .get(name)
                .ok_or_else(|| Error::UnknownClass(name.clone()))?;
            if is_class[id] {
                return Err(Error::Graph(format!("class {name:?} listed twice")));
            }
            is_class[id] = true;
            class_nodes.push(id);
        }
        class_nodes.sort_unstable();
        if class_nodes.is_empty() {
            return Err(Error::Graph("no class nodes declared".into()));
        }

        // Connectivity over the undirected adjacency.
        let mut visited = vec![false; n];
        let mut queue = VecDeque::from([0]);
        visited[0] = true;
        let mut reached = 1;
        while let Some(v) = queue.pop_front() {
            for &u in &adjacency[v] {
                if !visited[u] {
                    visited[u] = true;
                    reached += 1;
                    queue.push_back(u);
                }
            }
        }
        if reached != n {
            return Err(Error::Graph(format!(
                "graph is disconnected ({reached} of {n} nodes reachable)"
            )));
        }

        // Depth layers: BFS from the root set (nodes without parents). A
        // cyclic input has no roots; fall back to node 0.
        let mut roots: Vec<NodeId> = (0..n).filter(|&v| parents[v].is_empty()).collect();
        if roots.is_empty() {
            roots.push(0);
        }
        let mut depth = vec![usize::MAX; n];
        let mut queue = VecDeque::new();
        for &r in &roots {
            depth[r] = 0;
            queue.push_back(r);
        }
        while let Some(v) = queue.pop_front() {
            for &u in &adjacency[v] {
                if depth[u] == usize::MAX {
                    depth[u] = depth[v] + 1;
                    queue.push_back(u);
                }
            }
        }

        Ok(Self {
            names,
            index,
            adjacency,
            parents,
            class_nodes,
            is_class,
            depth,
        })
    }

    pub fn node_count(&self) -> usize {
        self.names.len()
    }

    pub fn name(&self, id: NodeId) -> &str {
        &self.names[id]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn node_by_name(&self, name: &str) -> Option<NodeId> {
        self.index.get(name).copied()
    }

    pub fn neighbors(&self, id: NodeId) -> &[NodeId] {
        &self.adjacency[id]
    }

    pub fn degree(&self, id: NodeId) -> usize {
        self.adjacency[id].len()
    }

    pub fn are_adjacent(&self, a: NodeId, b: NodeId) -> bool {
        self.adjacency[a].binary_search(&b).is_ok()
    }

    /// Class node ids, sorted ascending.
    pub fn class_nodes(&self) -> &[NodeId] {
        &self.class_nodes
    }

    pub fn is_class(&self, id: NodeId) -> bool {
        self.is_class[id]
    }

    pub fn depth(&self, id: NodeId) -> usize {
        self.depth[id]
    }

    pub fn parents(&self, id: NodeId) -> &[NodeId] {
        &self.parents[id]
    }

    /// Unweighted shortest-path distance (hop count) between two nodes.
    pub fn hop_distance(&self, from: NodeId, to: NodeId) -> usize {
        if from == to {
            return 0;
        }
        let mut dist = vec![usize::MAX; self.node_count()];
        dist[from] = 0;
        let mut queue = VecDeque::from([from]);
        while let Some(v) = queue.pop_front() {
            for &u in &self.adjacency[v] {
                if dist[u] == usize::MAX {
                    dist[u] = dist[v] + 1;
                    if u == to {
                        return dist[u];
                    }
                    queue.push_back(u);
                }
            }
        }
        dist[to]
    }

    /// Deletes the bottom `n_layers` depth layers of internal (non-class)
    /// nodes, re-attaching each deleted node's children to its parents.
    pub fn remove_bottom_layers(&self, n_layers: usize) -> Result<LabelGraph> {
        let mut current = self.clone();
        for _ in 0..n_layers {
            current = current.remove_one_layer()?;
        }
        Ok(current)
    }

    fn remove_one_layer(&self) -> Result<LabelGraph> {
        let n = self.node_count();
        let target = (0..n)
            .filter(|&v| !self.is_class[v])
            .map(|v| self.depth[v])
            .max()
            .ok_or_else(|| Error::Graph("no internal nodes left to remove".into()))?;
        let deleted: Vec<bool> = (0..n)
            .map(|v| !self.is_class[v] && self.depth[v] == target)
            .collect();

        // Directed edges among survivors, plus re-attachment edges
        // parent(deleted) -> child(deleted).
        let mut new_edges = Vec::new();
        for child in 0..n {
            if deleted[child] {
                continue;
            }
            for &p in &self.parents[child] {
                if deleted[p] {
                    if self.parents[p].is_empty() {
                        return Err(Error::Graph(format!(
                            "removing layer at depth {target} would orphan {:?}",
                            self.names[child]
                        )));
                    }
                    for &gp in &self.parents[p] {
                        new_edges.push((gp, child));
                    }
                } else {
                    new_edges.push((p, child));
                }
            }
        }

        let mut remap = vec![usize::MAX; n];
        let mut names = Vec::new();
        for v in 0..n {
            if !deleted[v] {
                remap[v] = names.len();
                names.push(self.names[v].clone());
            }
        }
        let mut edges: Vec<(NodeId, NodeId)> = new_edges
            .into_iter()
            .map(|(a, b)| (remap[a], remap[b]))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        // Re-attachment can produce both orientations of the same pair; the
        // builder rejects undirected duplicates, so drop them here.
        let mut seen = std::collections::HashSet::new();
        edges.retain(|&(a, b)| seen.insert((a.min(b), a.max(b))));

        let class_names: Vec<String> = self
            .class_nodes
            .iter()
            .map(|&c| self.names[c].clone())
            .collect();
        LabelGraph::build(names, &edges, &class_names)
    }
}

/// Parses a line-oriented edge list with an inline `classes:` directive.
///
/// Format: UTF-8; `#` starts a comment; an edge line is two
/// whitespace-separated node names (first name is the parent); the class set
/// is given by one or more `classes: a,b,c` lines.
pub fn load_edge_list(text: &str) -> Result<LabelGraph> {
    let (names, edges, classes) = parse_edge_lines(text)?;
    if classes.is_empty() {
        return Err(Error::Config(
            "edge list has no classes: directive and no sidecar class list was given".into(),
        ));
    }
    LabelGraph::build(names, &edges, &classes)
}

/// As [`load_edge_list`] but takes the class list from a sidecar document
/// (names separated by commas, whitespace, or newlines; `#` comments).
pub fn load_edge_list_with_classes(text: &str, class_text: &str) -> Result<LabelGraph> {
    let (names, edges, mut classes) = parse_edge_lines(text)?;
    for line in class_text.lines() {
        let line = strip_comment(line);
        for name in line.split([',', ' ', '\t']) {
            let name = name.trim();
            if !name.is_empty() {
                classes.push(name.to_string());
            }
        }
    }
    LabelGraph::build(names, &edges, &classes)
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(pos) => &line[..pos],
        None => line,
    }
}

type ParsedEdges = (Vec<String>, Vec<(NodeId, NodeId)>, Vec<String>);

fn parse_edge_lines(text: &str) -> Result<ParsedEdges> {
    let mut names: Vec<String> = Vec::new();
    let mut index: HashMap<String, NodeId> = HashMap::new();
    let mut edges = Vec::new();
    let mut classes = Vec::new();

    let intern = |name: &str, names: &mut Vec<String>, index: &mut HashMap<String, NodeId>| {
        if let Some(&id) = index.get(name) {
            id
        } else {
            let id = names.len();
            names.push(name.to_string());
            index.insert(name.to_string(), id);
            id
        }
    };

    for (lineno, raw) in text.lines().enumerate() {
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("classes:") {
            for name in rest.split(',') {
                let name = name.trim();
                if !name.is_empty() {
                    classes.push(name.to_string());
                }
            }
            continue;
        }
        let mut parts = line.split_whitespace();
        let (a, b) = match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), None) => (a, b),
            _ => {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: format!("expected two node names, got {line:?}"),
                })
            }
        };
        let a = intern(a, &mut names, &mut index);
        let b = intern(b, &mut names, &mut index);
        edges.push((a, b));
    }
    Ok((names, edges, classes))
}
