//! Factor graph grammars.
//!
//! An [`Fgg`] is a hyperedge replacement grammar whose terminal edge labels
//! carry factors. Each derivation yields a factor graph, and the grammar as a
//! whole stands for the (possibly infinite) collection of them.

mod analysis;
mod derivation;

use std::collections::{BTreeMap, HashSet};

use thiserror::Error;

use crate::graph::{Fragment, GraphError, LabelSpace};

pub use analysis::{
    classify_recursion, is_nonreentrant, make_nonreentrant, make_nonreentrant_with_limit,
    derivable_rules, nonterminal_graph, productive_nonterminals, NonterminalGraph, Recursion, DEFAULT_RULE_LIMIT,
};
pub use derivation::{
    derivation_decomposition, derive, derive_fragment, enumerate_derivations, DerivationTree,
    Enumeration,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GrammarError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("rule `{0}`: external node labels do not match the left-hand side signature")]
    ExternalSignatureMismatch(String),
    #[error("start symbol must have an empty signature")]
    StartHasNonEmptyType,
    #[error("label `{0}` is in the wrong class (nonterminal/terminal)")]
    LabelClass(String),
    #[error("start symbol `{0}` is not a nonterminal")]
    UnknownStart(String),
    #[error("rule `{rule}` rewrites `{lhs}`, which is not a nonterminal")]
    UnknownLhs { rule: String, lhs: String },
    #[error("duplicate rule id `{0}`")]
    DuplicateRule(String),
    #[error("unknown rule `{0}`")]
    UnknownRule(String),
    #[error("invalid derivation at `{path}`: {reason}")]
    InvalidDerivation { path: String, reason: String },
    #[error("grammar is recursive")]
    RecursiveInput,
    #[error("output would exceed {limit} rules")]
    BlowupLimitExceeded { limit: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub id: String,
    pub lhs: String,
    pub rhs: Fragment,
}

impl Rule {
    pub fn new(id: impl Into<String>, lhs: impl Into<String>, rhs: Fragment) -> Self {
        Rule {
            id: id.into(),
            lhs: lhs.into(),
            rhs,
        }
    }
}

/// A factor graph grammar.
///
/// `nonterminals` and `terminals` are kept in declaration order; several
/// algorithms use that order to break ties deterministically.
#[derive(Debug, Clone, PartialEq)]
pub struct Fgg {
    pub space: LabelSpace,
    pub nonterminals: Vec<String>,
    pub terminals: Vec<String>,
    pub rules: Vec<Rule>,
    pub start: String,
}

impl Fgg {
    pub fn new(
        space: LabelSpace,
        nonterminals: Vec<String>,
        terminals: Vec<String>,
        rules: Vec<Rule>,
        start: impl Into<String>,
    ) -> Self {
        Fgg {
            space,
            nonterminals,
            terminals,
            rules,
            start: start.into(),
        }
    }

    /// Builds a grammar whose nonterminals are the factorless edge labels of
    /// `space` and whose terminals are the labels with factors.
    ///
    /// Nonterminals are ordered start first, then by first use as a
    /// left-hand side, then by name.
    pub fn from_parts(space: LabelSpace, rules: Vec<Rule>, start: impl Into<String>) -> Self {
        let start = start.into();
        let mut nonterminals = vec![start.clone()];
        let mut terminals = Vec::new();
        let mut seen: HashSet<String> = HashSet::from([start.clone()]);
        let edge_order = rules
            .iter()
            .map(|r| r.lhs.clone())
            .chain(rules.iter().flat_map(|r| r.rhs.graph.edges.iter().map(|e| e.label.clone())))
            .chain(space.edge_labels().map(|(n, _)| n.to_string()))
            .collect::<Vec<_>>();
        for l in edge_order {
            if !seen.insert(l.clone()) {
                continue;
            }
            match space.edge_label(&l) {
                Some(el) if el.factor.is_some() => terminals.push(l),
                _ => nonterminals.push(l),
            }
        }
        Fgg {
            space,
            nonterminals,
            terminals,
            rules,
            start,
        }
    }

    pub fn is_nonterminal(&self, label: &str) -> bool {
        self.nonterminals.iter().any(|n| n == label)
    }

    pub fn is_terminal(&self, label: &str) -> bool {
        self.terminals.iter().any(|t| t == label)
    }

    pub fn rule(&self, id: &str) -> Option<&Rule> {
        self.rules.iter().find(|r| r.id == id)
    }

    pub fn rules_for<'a>(&'a self, lhs: &'a str) -> impl Iterator<Item = &'a Rule> + 'a {
        self.rules.iter().filter(move |r| r.lhs == lhs)
    }

    /// Rules grouped by left-hand side, in declaration order within a group.
    pub fn rules_by_lhs(&self) -> BTreeMap<&str, Vec<&Rule>> {
        let mut out: BTreeMap<&str, Vec<&Rule>> = BTreeMap::new();
        for r in &self.rules {
            out.entry(r.lhs.as_str()).or_default().push(r);
        }
        out
    }

    /// Total number of right-hand side nodes over all rules.
    pub fn total_rhs_nodes(&self) -> usize {
        self.rules.iter().map(|r| r.rhs.graph.nodes.len()).sum()
    }

    /// Total number of right-hand side edges over all rules.
    pub fn total_rhs_edges(&self) -> usize {
        self.rules.iter().map(|r| r.rhs.graph.edges.len()).sum()
    }

    pub fn max_rhs_nodes(&self) -> usize {
        self.rules
            .iter()
            .map(|r| r.rhs.graph.nodes.len())
            .max()
            .unwrap_or(0)
    }

    /// Nonterminal edges of a rule's right-hand side, in order.
    pub fn nonterminal_edges<'a>(&'a self, rule: &'a Rule) -> impl Iterator<Item = &'a crate::graph::Edge> + 'a {
        rule.rhs.graph.edges.iter().filter(move |e| self.is_nonterminal(&e.label))
    }

    pub fn validate(&self) -> Result<(), GrammarError> {
        validate_fgg(self)
    }
}

/// Checks every grammar invariant.
pub fn validate_fgg(g: &Fgg) -> Result<(), GrammarError> {
    g.space.check()?;
    let mut classes = HashSet::new();
    for n in &g.nonterminals {
        match g.space.edge_label(n) {
            None => return Err(GraphError::UnknownLabel(n.clone()).into()),
            Some(l) if l.factor.is_some() => return Err(GrammarError::LabelClass(n.clone())),
            _ => {}
        }
        if !classes.insert(n.as_str()) {
            return Err(GrammarError::LabelClass(n.clone()));
        }
    }
    for t in &g.terminals {
        match g.space.edge_label(t) {
            None => return Err(GraphError::UnknownLabel(t.clone()).into()),
            Some(l) if l.factor.is_none() => return Err(GrammarError::LabelClass(t.clone())),
            _ => {}
        }
        if !classes.insert(t.as_str()) {
            return Err(GrammarError::LabelClass(t.clone()));
        }
    }
    if !g.is_nonterminal(&g.start) {
        return Err(GrammarError::UnknownStart(g.start.clone()));
    }
    if !g.space.signature(&g.start).unwrap_or(&[]).is_empty() {
        return Err(GrammarError::StartHasNonEmptyType);
    }
    let mut ids = HashSet::new();
    for r in &g.rules {
        if !ids.insert(r.id.as_str()) {
            return Err(GrammarError::DuplicateRule(r.id.clone()));
        }
        if !g.is_nonterminal(&r.lhs) {
            return Err(GrammarError::UnknownLhs {
                rule: r.id.clone(),
                lhs: r.lhs.clone(),
            });
        }
        r.rhs.validate(&g.space)?;
        for e in &r.rhs.graph.edges {
            if !classes.contains(e.label.as_str()) {
                return Err(GrammarError::LabelClass(e.label.clone()));
            }
        }
        let sig = g.space.signature(&r.lhs).unwrap_or(&[]);
        if r.rhs.external_labels() != sig {
            return Err(GrammarError::ExternalSignatureMismatch(r.id.clone()));
        }
    }
    Ok(())
}
