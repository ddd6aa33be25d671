//! Directed, labeled node-link graphs shared by every forward abstraction.
//!
//! The text form is a small mermaid subset:
//!
//! ```text
//! graph LR
//!     Solid[Solid]
//!     Liquid[Liquid]
//!     Solid -->|melting| Liquid
//! ```
//!
//! Serialization is canonical (four-space indent, nodes before edges, no
//! blank lines) so that `parse(serialize(g)) == g` and
//! `serialize(parse(t)) == t` for canonical `t`.

mod diff;
mod parse;
mod widget;

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use diff::diff_graphs;
pub use parse::{parse_graph, parse_graph_bytes};
pub use widget::{apply_widget, mint_node_id, slug, WidgetAction};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("graph text is empty")]
    Empty,
    #[error("input is not valid UTF-8")]
    InvalidUtf8,
    #[error("line {line}: syntax error near `{fragment}`")]
    Syntax { line: usize, fragment: String },
    #[error("edge references undeclared node `{0}`")]
    DanglingEdge(String),
    #[error("duplicate node id `{0}`")]
    DuplicateNode(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("unknown link {from} -->|{label}| {to}")]
    UnknownLink {
        from: String,
        to: String,
        label: String,
    },
    #[error("link {from} -->|{label}| {to} already exists")]
    DuplicateLink {
        from: String,
        to: String,
        label: String,
    },
    #[error("invalid node id `{0}`")]
    InvalidId(String),
    #[error("invalid label `{0}`")]
    InvalidLabel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    LR,
    TD,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::LR => "LR",
            Direction::TD => "TD",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Node {
    pub id: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Edge {
    pub source: String,
    pub target: String,
    pub label: String,
}

impl Edge {
    pub fn new(
        source: impl Into<String>,
        target: impl Into<String>,
        label: impl Into<String>,
    ) -> Self {
        Self {
            source: source.into(),
            target: target.into(),
            label: label.into(),
        }
    }

    fn matches(&self, source: &str, target: &str, label: &str) -> bool {
        self.source == source && self.target == target && self.label == label
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -->|{}| {}", self.source, self.label, self.target)
    }
}

/// Node ids are tokens: no whitespace, brackets, pipes or arrows.
pub fn is_valid_id(id: &str) -> bool {
    !id.is_empty()
        && !id.contains("-->")
        && !id
            .chars()
            .any(|c| c.is_whitespace() || matches!(c, '[' | ']' | '|'))
}

pub fn is_valid_node_label(label: &str) -> bool {
    !label.trim().is_empty()
        && !label.contains("-->")
        && !label.chars().any(|c| matches!(c, '[' | ']' | '\n' | '\r'))
}

pub fn is_valid_edge_label(label: &str) -> bool {
    !label.trim().is_empty() && !label.chars().any(|c| matches!(c, '|' | '\n' | '\r'))
}

/// A graph whose invariants (unique ids, no dangling edges, unique edge
/// triples, well-formed tokens) hold by construction.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Graph {
    direction: Direction,
    nodes: Vec<Node>,
    edges: Vec<Edge>,
}

impl Graph {
    pub fn new(direction: Direction) -> Self {
        Self {
            direction,
            nodes: Vec::new(),
            edges: Vec::new(),
        }
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn contains_node(&self, id: &str) -> bool {
        self.node(id).is_some()
    }

    pub fn contains_edge(&self, source: &str, target: &str, label: &str) -> bool {
        self.edges.iter().any(|e| e.matches(source, target, label))
    }

    pub fn node_ids(&self) -> HashSet<&str> {
        self.nodes.iter().map(|n| n.id.as_str()).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn add_node(
        &mut self,
        id: impl Into<String>,
        label: impl Into<String>,
    ) -> Result<(), GraphError> {
        let (id, label) = (id.into(), label.into());
        if !is_valid_id(&id) {
            return Err(GraphError::InvalidId(id));
        }
        if !is_valid_node_label(&label) {
            return Err(GraphError::InvalidLabel(label));
        }
        if self.contains_node(&id) {
            return Err(GraphError::DuplicateNode(id));
        }
        self.nodes.push(Node { id, label });
        Ok(())
    }

    pub fn add_edge(
        &mut self,
        source: impl Into<String>,
        target: impl Into<String>,
        label: impl Into<String>,
    ) -> Result<(), GraphError> {
        let edge = Edge::new(source, target, label);
        if !is_valid_edge_label(&edge.label) {
            return Err(GraphError::InvalidLabel(edge.label));
        }
        for end in [&edge.source, &edge.target] {
            if !self.contains_node(end) {
                return Err(GraphError::DanglingEdge(end.clone()));
            }
        }
        if self.contains_edge(&edge.source, &edge.target, &edge.label) {
            return Err(GraphError::DuplicateLink {
                from: edge.source,
                to: edge.target,
                label: edge.label,
            });
        }
        self.edges.push(edge);
        Ok(())
    }

    /// Removes a node together with every incident edge.
    pub(crate) fn remove_node(&mut self, id: &str) -> Result<Node, GraphError> {
        let pos = self
            .nodes
            .iter()
            .position(|n| n.id == id)
            .ok_or_else(|| GraphError::UnknownNode(id.to_string()))?;
        self.edges.retain(|e| e.source != id && e.target != id);
        Ok(self.nodes.remove(pos))
    }

    pub(crate) fn remove_edge(
        &mut self,
        source: &str,
        target: &str,
        label: &str,
    ) -> Result<Edge, GraphError> {
        let pos = self
            .edges
            .iter()
            .position(|e| e.matches(source, target, label))
            .ok_or_else(|| GraphError::UnknownLink {
                from: source.to_string(),
                to: target.to_string(),
                label: label.to_string(),
            })?;
        Ok(self.edges.remove(pos))
    }

    pub(crate) fn node_mut(&mut self, id: &str) -> Option<&mut Node> {
        self.nodes.iter_mut().find(|n| n.id == id)
    }

    pub(crate) fn edge_mut(
        &mut self,
        source: &str,
        target: &str,
        label: &str,
    ) -> Option<&mut Edge> {
        self.edges
            .iter_mut()
            .find(|e| e.matches(source, target, label))
    }

    /// Induced subgraph on `keep`: kept nodes plus every edge with both
    /// endpoints kept. Declaration order is preserved.
    pub fn extract_subgraph<I, S>(&self, keep: I) -> Result<Graph, GraphError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut wanted = HashSet::new();
        for id in keep {
            let id = id.as_ref();
            if !self.contains_node(id) {
                return Err(GraphError::UnknownNode(id.to_string()));
            }
            wanted.insert(id.to_string());
        }
        Ok(Graph {
            direction: self.direction,
            nodes: self
                .nodes
                .iter()
                .filter(|n| wanted.contains(&n.id))
                .cloned()
                .collect(),
            edges: self
                .edges
                .iter()
                .filter(|e| wanted.contains(&e.source) && wanted.contains(&e.target))
                .cloned()
                .collect(),
        })
    }

    /// True when every node and edge of `self` also appears in `other`.
    pub fn is_subgraph_of(&self, other: &Graph) -> bool {
        self.nodes.iter().all(|n| other.contains_node(&n.id))
            && self
                .edges
                .iter()
                .all(|e| other.contains_edge(&e.source, &e.target, &e.label))
    }

    pub fn serialize(&self) -> String {
        serialize_graph(self)
    }
}

pub fn extract_subgraph<I, S>(g: &Graph, keep: I) -> Result<Graph, GraphError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    g.extract_subgraph(keep)
}

pub fn serialize_graph(g: &Graph) -> String {
    let mut out = format!("graph {}", g.direction.as_str());
    for n in &g.nodes {
        out.push_str("\n    ");
        out.push_str(&n.id);
        out.push('[');
        out.push_str(&n.label);
        out.push(']');
    }
    for e in &g.edges {
        out.push_str("\n    ");
        out.push_str(&e.to_string());
    }
    out
}

impl fmt::Display for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize_graph(self))
    }
}

impl Serialize for Graph {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&serialize_graph(self))
    }
}

impl<'de> Deserialize<'de> for Graph {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse_graph(&text).map_err(serde::de::Error::custom)
    }
}
