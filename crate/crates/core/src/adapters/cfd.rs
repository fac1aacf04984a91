use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::{boolean_space, nonterminal, pin, topological, AdapterError, BoolAssignment, BOOL};
use crate::fixtures::NONE;
use crate::grammar::{Fgg, Rule};
use crate::graph::{FactorFunction, Fragment, Hypergraph};

#[derive(Debug, Clone, PartialEq)]
pub enum CfdKind {
    /// `hi` is taken when `var` is 1, `lo` when it is 0.
    Case { var: String, hi: String, lo: String },
    Factor { left: String, right: String },
    Unit,
    Empty,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CfdNode {
    pub id: String,
    pub kind: CfdKind,
}

/// A case-factor diagram: a rooted DAG of nodes plus a cost per variable.
#[derive(Debug, Clone, PartialEq)]
pub struct Cfd {
    pub nodes: Vec<CfdNode>,
    pub root: String,
    pub costs: BTreeMap<String, f64>,
}

impl CfdNode {
    fn children(&self) -> Vec<&str> {
        match &self.kind {
            CfdKind::Case { hi, lo, .. } => vec![hi, lo],
            CfdKind::Factor { left, right } => vec![left, right],
            CfdKind::Unit | CfdKind::Empty => vec![],
        }
    }
}

impl Cfd {
    pub fn new(nodes: Vec<CfdNode>, root: impl Into<String>, costs: BTreeMap<String, f64>) -> Self {
        Cfd {
            nodes,
            root: root.into(),
            costs,
        }
    }

    fn node(&self, id: &str) -> &CfdNode {
        self.nodes.iter().find(|n| n.id == id).expect("validated")
    }

    /// Checks the DAG; returns the nodes children first, all of them or only
    /// those reachable from the root.
    fn order(&self, all: bool) -> Result<Vec<&str>, AdapterError> {
        let mut children = HashMap::new();
        for n in &self.nodes {
            if children.insert(n.id.as_str(), n.children()).is_some() {
                return Err(AdapterError::InvalidCfd(format!("duplicate node `{}`", n.id)));
            }
        }
        let mut roots = vec![self.root.as_str()];
        if all {
            roots.extend(self.nodes.iter().map(|n| n.id.as_str()));
        }
        topological(&roots, &children).map_err(AdapterError::InvalidCfd)
    }

    /// Scope of every node, checking the case and factor conditions.
    pub fn scopes(&self) -> Result<HashMap<&str, BTreeSet<&str>>, AdapterError> {
        let mut scope: HashMap<&str, BTreeSet<&str>> = HashMap::new();
        for v in self.order(true)? {
            let s = match &self.node(v).kind {
                CfdKind::Case { var, hi, lo } => {
                    let mut s: BTreeSet<&str> = scope[hi.as_str()].union(&scope[lo.as_str()]).copied().collect();
                    if !s.insert(var.as_str()) {
                        return Err(AdapterError::InvalidCfd(format!(
                            "case node `{v}` tests `{var}`, which its children mention"
                        )));
                    }
                    s
                }
                CfdKind::Factor { left, right } => {
                    let (a, b) = (&scope[left.as_str()], &scope[right.as_str()]);
                    if let Some(x) = a.intersection(b).next() {
                        return Err(AdapterError::InvalidCfd(format!(
                            "factor node `{v}` has `{x}` in both children"
                        )));
                    }
                    a.union(b).copied().collect()
                }
                CfdKind::Unit | CfdKind::Empty => BTreeSet::new(),
            };
            scope.insert(v, s);
        }
        for x in &scope[self.root.as_str()] {
            match self.costs.get(*x) {
                Some(c) if c.is_finite() => {}
                Some(_) => return Err(AdapterError::InvalidCfd(format!("cost of `{x}` is not finite"))),
                None => return Err(AdapterError::InvalidCfd(format!("no cost for `{x}`"))),
            }
        }
        Ok(scope)
    }

    /// The variables in scope of the root, sorted.
    pub fn variables(&self) -> Result<Vec<String>, AdapterError> {
        Ok(self.scopes()?[self.root.as_str()].iter().map(|x| x.to_string()).collect())
    }
}

/// `q(root, xi)` when `xi` is given, `Z(root)` otherwise.
pub fn eval_cfd(cfd: &Cfd, xi: Option<&BoolAssignment>) -> Result<f64, AdapterError> {
    cfd.scopes()?;
    let mut val: HashMap<&str, f64> = HashMap::new();
    for v in cfd.order(false)? {
        let q = match &cfd.node(v).kind {
            CfdKind::Case { var, hi, lo } => {
                let w = (-cfd.costs[var]).exp();
                match xi {
                    Some(xi) => match xi.get(var) {
                        Some(true) => w * val[hi.as_str()],
                        Some(false) => val[lo.as_str()],
                        None => return Err(AdapterError::MissingValue(var.clone())),
                    },
                    None => w * val[hi.as_str()] + val[lo.as_str()],
                }
            }
            CfdKind::Factor { left, right } => val[left.as_str()] * val[right.as_str()],
            CfdKind::Unit => 1.0,
            CfdKind::Empty => 0.0,
        };
        val.insert(v, q);
    }
    Ok(val[cfd.root.as_str()])
}

fn cost_label(var: &str) -> String {
    format!("cost:{var}")
}

fn build(cfd: &Cfd, xi: Option<&BoolAssignment>) -> Result<Fgg, AdapterError> {
    let scope = cfd.scopes()?;
    if let Some(xi) = xi {
        for x in &scope[cfd.root.as_str()] {
            if !xi.contains_key(*x) {
                return Err(AdapterError::MissingValue(x.to_string()));
            }
        }
    }
    let mut space = boolean_space();
    for n in &cfd.nodes {
        space.add_nonterminal(nonterminal(&n.id), NONE)?;
    }
    let mut rules = Vec::new();
    for n in &cfd.nodes {
        let lhs = nonterminal(&n.id);
        match &n.kind {
            CfdKind::Case { var, hi, lo } => {
                if xi.is_none() {
                    let w = (-cfd.costs.get(var).copied().unwrap_or(0.0)).exp();
                    space.add_terminal(cost_label(var), NONE, FactorFunction::Constant(w))?;
                }
                for (value, child, edge) in [(true, hi, "hi"), (false, lo, "lo")] {
                    let mut h = Hypergraph::new();
                    h.add_node(var.clone(), BOOL);
                    let p = match xi {
                        Some(xi) => pin(xi.get(var).copied().unwrap_or(value)),
                        None => pin(value),
                    };
                    h.add_edge("pin", p, [var]);
                    if value && xi.is_none() {
                        h.add_edge("cost", cost_label(var), NONE);
                    }
                    h.add_edge(edge, nonterminal(child), NONE);
                    let id = format!("{}/{}", n.id, u8::from(value));
                    rules.push(Rule::new(id, lhs.clone(), Fragment::new(h, vec![])));
                }
            }
            CfdKind::Factor { left, right } => {
                let mut h = Hypergraph::new();
                h.add_edge("left", nonterminal(left), NONE);
                h.add_edge("right", nonterminal(right), NONE);
                rules.push(Rule::new(n.id.clone(), lhs, Fragment::new(h, vec![])));
            }
            CfdKind::Unit => rules.push(Rule::new(n.id.clone(), lhs, Fragment::default())),
            CfdKind::Empty => {}
        }
    }
    Ok(Fgg::from_parts(space, rules, nonterminal(&cfd.root)))
}

/// One nonterminal `D_v` per node: a case node rewrites to its `hi` child
/// with the variable pinned to 1 and weight `exp(-cost)`, or to `lo` with it
/// pinned to 0. Empty nodes get no rules.
///
/// The two case rules reach their children through edges with different
/// ids, so by-id conjunction never pairs one branch with the other.
pub fn cfd_to_fgg(cfd: &Cfd) -> Result<Fgg, AdapterError> {
    build(cfd, None)
}

/// The grammar with the same rules as [`cfd_to_fgg`] but with every case
/// variable pinned to its value in `xi` and no costs; conjoined with the
/// converted grammar its sum-product is `q(xi)`.
pub fn cfd_constraint_fgg(cfd: &Cfd, xi: &BoolAssignment) -> Result<Fgg, AdapterError> {
    build(cfd, Some(xi))
}
