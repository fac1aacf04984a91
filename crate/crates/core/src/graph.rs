//! Hypergraphs, fragments, label spaces and factor evaluation.
//!
//! A [`LabelSpace`] holds everything that is global to a model: the node
//! labels with their finite value domains, and the edge labels with their
//! endpoint signatures. Terminal edge labels additionally carry a
//! [`FactorFunction`]; nonterminal labels carry none.

use std::collections::{BTreeMap, HashMap, HashSet};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("edge `{0}` has the wrong number of endpoints for its label")]
    ArityMismatch(String),
    #[error("edge `{edge}` endpoint {position} has the wrong node label")]
    LabelMismatch { edge: String, position: usize },
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("edge `{edge}` refers to unknown node `{node}`")]
    UnknownNode { edge: String, node: String },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("edge `{0}` has a nonterminal label")]
    NonterminalEdgePresent(String),
    #[error("assignment space of {size:e} exceeds the cap of {cap}")]
    AssignmentSpaceTooLarge { size: f64, cap: usize },
    #[error("table of {size:e} entries exceeds the cap of {cap}")]
    TableTooLarge { size: f64, cap: usize },
    #[error("domain of node label `{label}` is invalid: {reason}")]
    InvalidDomain { label: String, reason: String },
    #[error("factor for `{label}` has {found} entries, expected {expected}")]
    FactorShape { label: String, expected: usize, found: usize },
    #[error("factor for `{0}` has a negative or NaN entry")]
    NegativeFactor(String),
    #[error("label `{0}` is declared twice with different definitions")]
    ConflictingLabel(String),
    #[error("external `{0}` is not a node of the graph")]
    ExternalNotInGraph(String),
    #[error("external `{0}` is listed twice")]
    DuplicateExternal(String),
    #[error("invalid assignment: {0}")]
    InvalidAssignment(String),
}

pub type Result<T, E = GraphError> = std::result::Result<T, E>;

/// A factor attached to a terminal edge label.
///
/// Tables are dense and row-major in signature order: the last endpoint
/// varies fastest.
#[derive(Debug, Clone, PartialEq)]
pub enum FactorFunction {
    Table(Vec<f64>),
    /// Only valid for 0-ary labels.
    Constant(f64),
}

impl FactorFunction {
    pub fn len(&self) -> usize {
        match self {
            FactorFunction::Table(t) => t.len(),
            FactorFunction::Constant(_) => 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn at(&self, flat: usize) -> f64 {
        match self {
            FactorFunction::Table(t) => t[flat],
            FactorFunction::Constant(c) => *c,
        }
    }

    pub fn values(&self) -> &[f64] {
        match self {
            FactorFunction::Table(t) => t,
            FactorFunction::Constant(c) => std::slice::from_ref(c),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeLabel {
    pub signature: Vec<String>,
    pub factor: Option<FactorFunction>,
}

/// Global node and edge label alphabets.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelSpace {
    node_labels: BTreeMap<String, Vec<String>>,
    edge_labels: BTreeMap<String, EdgeLabel>,
}

impl LabelSpace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Declares a node label. Redeclaring with the same domain is a no-op.
    pub fn add_node_label<S: AsRef<str>>(
        &mut self,
        name: impl Into<String>,
        values: impl IntoIterator<Item = S>,
    ) -> Result<&mut Self> {
        let name = name.into();
        let values: Vec<String> = values.into_iter().map(|v| v.as_ref().to_string()).collect();
        if values.is_empty() {
            return Err(GraphError::InvalidDomain {
                label: name,
                reason: "empty".into(),
            });
        }
        let mut seen = HashSet::new();
        for v in &values {
            if !seen.insert(v) {
                return Err(GraphError::InvalidDomain {
                    label: name,
                    reason: format!("duplicate value `{v}`"),
                });
            }
        }
        match self.node_labels.get(&name) {
            Some(existing) if *existing != values => Err(GraphError::ConflictingLabel(name)),
            _ => {
                self.node_labels.insert(name, values);
                Ok(self)
            }
        }
    }

    /// Declares a terminal edge label with its factor.
    pub fn add_terminal<S: AsRef<str>>(
        &mut self,
        name: impl Into<String>,
        signature: impl IntoIterator<Item = S>,
        factor: FactorFunction,
    ) -> Result<&mut Self> {
        let name = name.into();
        let signature: Vec<String> = signature.into_iter().map(|v| v.as_ref().to_string()).collect();
        self.check_factor(&name, &signature, &factor)?;
        self.insert_edge_label(
            name,
            EdgeLabel {
                signature,
                factor: Some(factor),
            },
        )
    }

    /// Declares a nonterminal edge label (a signature without a factor).
    pub fn add_nonterminal<S: AsRef<str>>(
        &mut self,
        name: impl Into<String>,
        signature: impl IntoIterator<Item = S>,
    ) -> Result<&mut Self> {
        let name = name.into();
        let signature: Vec<String> = signature.into_iter().map(|v| v.as_ref().to_string()).collect();
        for l in &signature {
            if !self.node_labels.contains_key(l) {
                return Err(GraphError::UnknownLabel(l.clone()));
            }
        }
        self.insert_edge_label(
            name,
            EdgeLabel {
                signature,
                factor: None,
            },
        )
    }

    fn insert_edge_label(&mut self, name: String, label: EdgeLabel) -> Result<&mut Self> {
        match self.edge_labels.get(&name) {
            Some(existing) if *existing != label => Err(GraphError::ConflictingLabel(name)),
            _ => {
                self.edge_labels.insert(name, label);
                Ok(self)
            }
        }
    }

    fn check_factor(&self, name: &str, signature: &[String], factor: &FactorFunction) -> Result<()> {
        let mut expected = 1usize;
        for l in signature {
            let d = self
                .node_labels
                .get(l)
                .ok_or_else(|| GraphError::UnknownLabel(l.clone()))?;
            expected = expected.saturating_mul(d.len());
        }
        if let FactorFunction::Constant(_) = factor {
            if !signature.is_empty() {
                return Err(GraphError::FactorShape {
                    label: name.to_string(),
                    expected,
                    found: 1,
                });
            }
        }
        if factor.len() != expected {
            return Err(GraphError::FactorShape {
                label: name.to_string(),
                expected,
                found: factor.len(),
            });
        }
        if factor.values().iter().any(|x| x.is_nan() || *x < 0.0) {
            return Err(GraphError::NegativeFactor(name.to_string()));
        }
        Ok(())
    }

    /// Adds every label of `other`, failing on conflicting definitions.
    pub fn merge(&mut self, other: &LabelSpace) -> Result<()> {
        for (name, values) in &other.node_labels {
            self.add_node_label(name.clone(), values.iter().cloned())?;
        }
        for (name, label) in &other.edge_labels {
            self.insert_edge_label(name.clone(), label.clone())?;
        }
        Ok(())
    }

    /// Re-checks every invariant. Useful after deserialization.
    pub fn check(&self) -> Result<()> {
        for (name, values) in &self.node_labels {
            if values.is_empty() {
                return Err(GraphError::InvalidDomain {
                    label: name.clone(),
                    reason: "empty".into(),
                });
            }
            if values.iter().collect::<HashSet<_>>().len() != values.len() {
                return Err(GraphError::InvalidDomain {
                    label: name.clone(),
                    reason: "duplicate values".into(),
                });
            }
        }
        for (name, label) in &self.edge_labels {
            match &label.factor {
                Some(f) => self.check_factor(name, &label.signature, f)?,
                None => {
                    for l in &label.signature {
                        if !self.node_labels.contains_key(l) {
                            return Err(GraphError::UnknownLabel(l.clone()));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn domain(&self, node_label: &str) -> Option<&[String]> {
        self.node_labels.get(node_label).map(Vec::as_slice)
    }

    pub fn domain_size(&self, node_label: &str) -> Option<usize> {
        self.node_labels.get(node_label).map(Vec::len)
    }

    pub fn edge_label(&self, name: &str) -> Option<&EdgeLabel> {
        self.edge_labels.get(name)
    }

    pub fn signature(&self, edge_label: &str) -> Option<&[String]> {
        self.edge_labels.get(edge_label).map(|l| l.signature.as_slice())
    }

    pub fn factor(&self, edge_label: &str) -> Option<&FactorFunction> {
        self.edge_labels.get(edge_label).and_then(|l| l.factor.as_ref())
    }

    pub fn has_node_label(&self, name: &str) -> bool {
        self.node_labels.contains_key(name)
    }

    pub fn has_edge_label(&self, name: &str) -> bool {
        self.edge_labels.contains_key(name)
    }

    pub fn node_labels(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.node_labels.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn edge_labels(&self) -> impl Iterator<Item = (&str, &EdgeLabel)> {
        self.edge_labels.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Returns `base` if it is not yet used as a node or edge label, otherwise
    /// `base'`, `base''`, ...
    pub fn fresh_label(&self, base: &str) -> String {
        let mut name = base.to_string();
        while self.has_node_label(&name) || self.has_edge_label(&name) {
            name.push('\'');
        }
        name
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Node {
    pub id: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Edge {
    pub id: String,
    pub label: String,
    pub att: Vec<String>,
}

/// A hypergraph whose edges attach to ordered, not necessarily distinct,
/// endpoint nodes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Hypergraph {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
}

impl Hypergraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, id: impl Into<String>, label: impl Into<String>) -> &mut Self {
        self.nodes.push(Node {
            id: id.into(),
            label: label.into(),
        });
        self
    }

    pub fn add_edge<S: AsRef<str>>(
        &mut self,
        id: impl Into<String>,
        label: impl Into<String>,
        att: impl IntoIterator<Item = S>,
    ) -> &mut Self {
        self.edges.push(Edge {
            id: id.into(),
            label: label.into(),
            att: att.into_iter().map(|v| v.as_ref().to_string()).collect(),
        });
        self
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn edge(&self, id: &str) -> Option<&Edge> {
        self.edges.iter().find(|e| e.id == id)
    }

    /// Map from node id to position in `nodes`.
    pub fn node_index(&self) -> HashMap<&str, usize> {
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id.as_str(), i))
            .collect()
    }

    /// Disjoint union; ids of `other` are prefixed to keep them apart.
    pub fn disjoint_union(&self, other: &Hypergraph, prefix: &str) -> Hypergraph {
        let mut out = self.clone();
        for n in &other.nodes {
            out.add_node(format!("{prefix}{}", n.id), n.label.clone());
        }
        for e in &other.edges {
            out.add_edge(
                format!("{prefix}{}", e.id),
                e.label.clone(),
                e.att.iter().map(|v| format!("{prefix}{v}")),
            );
        }
        out
    }
}

/// Checks that `g` is a well-formed hypergraph over `space`.
pub fn validate(space: &LabelSpace, g: &Hypergraph) -> Result<()> {
    let mut labels = HashMap::with_capacity(g.nodes.len());
    for n in &g.nodes {
        if !space.has_node_label(&n.label) {
            return Err(GraphError::UnknownLabel(n.label.clone()));
        }
        if labels.insert(n.id.as_str(), n.label.as_str()).is_some() {
            return Err(GraphError::DuplicateId(n.id.clone()));
        }
    }
    let mut edge_ids = HashSet::with_capacity(g.edges.len());
    for e in &g.edges {
        if !edge_ids.insert(e.id.as_str()) {
            return Err(GraphError::DuplicateId(e.id.clone()));
        }
        let sig = space
            .signature(&e.label)
            .ok_or_else(|| GraphError::UnknownLabel(e.label.clone()))?;
        if sig.len() != e.att.len() {
            return Err(GraphError::ArityMismatch(e.id.clone()));
        }
        for (i, (v, want)) in e.att.iter().zip(sig).enumerate() {
            let have = labels.get(v.as_str()).ok_or_else(|| GraphError::UnknownNode {
                edge: e.id.clone(),
                node: v.clone(),
            })?;
            if have != want {
                return Err(GraphError::LabelMismatch {
                    edge: e.id.clone(),
                    position: i + 1,
                });
            }
        }
    }
    Ok(())
}

/// A hypergraph with an ordered sequence of external nodes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Fragment {
    pub graph: Hypergraph,
    pub externals: Vec<String>,
}

impl Fragment {
    pub fn new(graph: Hypergraph, externals: Vec<String>) -> Self {
        Fragment { graph, externals }
    }

    pub fn validate(&self, space: &LabelSpace) -> Result<()> {
        validate(space, &self.graph)?;
        let mut seen = HashSet::new();
        for x in &self.externals {
            if self.graph.node(x).is_none() {
                return Err(GraphError::ExternalNotInGraph(x.clone()));
            }
            if !seen.insert(x) {
                return Err(GraphError::DuplicateExternal(x.clone()));
            }
        }
        Ok(())
    }

    /// Node labels of the externals, in order.
    pub fn external_labels(&self) -> Vec<String> {
        self.externals
            .iter()
            .map(|x| {
                self.graph
                    .node(x)
                    .map(|n| n.label.clone())
                    .unwrap_or_default()
            })
            .collect()
    }
}

/// Values for the nodes of a graph, as indices into each node's domain.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Assignment {
    pub values: BTreeMap<String, usize>,
}

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, node: &str) -> Option<usize> {
        self.values.get(node).copied()
    }

    pub fn set(&mut self, node: impl Into<String>, value: usize) {
        self.values.insert(node.into(), value);
    }

    /// Checks that exactly the nodes of `g` are covered and in range.
    pub fn check(&self, space: &LabelSpace, g: &Hypergraph) -> Result<()> {
        if self.values.len() != g.nodes.len() {
            return Err(GraphError::InvalidAssignment(format!(
                "{} values for {} nodes",
                self.values.len(),
                g.nodes.len()
            )));
        }
        for n in &g.nodes {
            let v = self
                .get(&n.id)
                .ok_or_else(|| GraphError::InvalidAssignment(format!("node `{}` unassigned", n.id)))?;
            let size = space
                .domain_size(&n.label)
                .ok_or_else(|| GraphError::UnknownLabel(n.label.clone()))?;
            if v >= size {
                return Err(GraphError::InvalidAssignment(format!(
                    "value {v} out of range for node `{}`",
                    n.id
                )));
            }
        }
        Ok(())
    }
}

/// Row-major flat index of `values` in a table of shape `dims`.
#[inline]
pub fn flat_index(dims: &[usize], values: impl IntoIterator<Item = usize>) -> usize {
    let mut idx = 0;
    for (d, v) in dims.iter().zip(values) {
        idx = idx * d + v;
    }
    idx
}

/// Domain sizes for an edge label's signature.
pub(crate) fn signature_dims(space: &LabelSpace, label: &str) -> Vec<usize> {
    space
        .signature(label)
        .unwrap_or(&[])
        .iter()
        .map(|l| space.domain_size(l).unwrap_or(0))
        .collect()
}

/// Product of the factors of a terminal-only graph under `assignment`.
pub fn assignment_weight(space: &LabelSpace, g: &Hypergraph, assignment: &Assignment) -> Result<f64> {
    validate(space, g)?;
    assignment.check(space, g)?;
    let mut w = 1.0;
    for e in &g.edges {
        let f = space
            .factor(&e.label)
            .ok_or_else(|| GraphError::NonterminalEdgePresent(e.id.clone()))?;
        let dims = signature_dims(space, &e.label);
        let idx = flat_index(&dims, e.att.iter().map(|v| assignment.values[v]));
        w *= f.at(idx);
    }
    Ok(w)
}
