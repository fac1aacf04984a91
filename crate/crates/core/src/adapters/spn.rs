use std::collections::{BTreeSet, HashMap};

use super::{boolean_space, nonterminal, pin, topological, AdapterError, BoolAssignment, BOOL};
use crate::fixtures::NONE;
use crate::grammar::{Fgg, Rule};
use crate::graph::{FactorFunction, Fragment, Hypergraph};

#[derive(Debug, Clone, PartialEq)]
pub enum SpnKind {
    Sum { weights: [f64; 2], children: [String; 2] },
    Product { left: String, right: String },
    /// The literal `var`, or its negation.
    Leaf { var: String, negated: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpnNode {
    pub id: String,
    pub kind: SpnKind,
}

/// A sum-product network over Boolean variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Spn {
    pub nodes: Vec<SpnNode>,
    pub root: String,
}

#[derive(Default, Clone)]
struct Literals<'a> {
    pos: BTreeSet<&'a str>,
    neg: BTreeSet<&'a str>,
}

impl Literals<'_> {
    fn scope(&self) -> BTreeSet<&str> {
        self.pos.union(&self.neg).copied().collect()
    }
}

impl SpnNode {
    fn children(&self) -> Vec<&str> {
        match &self.kind {
            SpnKind::Sum { children, .. } => children.iter().map(String::as_str).collect(),
            SpnKind::Product { left, right } => vec![left, right],
            SpnKind::Leaf { .. } => vec![],
        }
    }
}

impl Spn {
    pub fn new(nodes: Vec<SpnNode>, root: impl Into<String>) -> Self {
        Spn {
            nodes,
            root: root.into(),
        }
    }

    fn node(&self, id: &str) -> &SpnNode {
        self.nodes.iter().find(|n| n.id == id).expect("validated")
    }

    fn order(&self) -> Result<Vec<&str>, AdapterError> {
        let mut children = HashMap::new();
        for n in &self.nodes {
            if children.insert(n.id.as_str(), n.children()).is_some() {
                return Err(AdapterError::InvalidSpn(format!("duplicate node `{}`", n.id)));
            }
        }
        let mut roots = vec![self.root.as_str()];
        roots.extend(self.nodes.iter().map(|n| n.id.as_str()));
        topological(&roots, &children).map_err(AdapterError::InvalidSpn)
    }

    /// Checks validity: sum children have equal scopes, product children
    /// never have a variable positive in one and negated in the other, and
    /// weights are finite and non-negative.
    pub fn validate(&self) -> Result<(), AdapterError> {
        let mut lits: HashMap<&str, Literals> = HashMap::new();
        for v in self.order()? {
            let l = match &self.node(v).kind {
                SpnKind::Leaf { var, negated } => {
                    let mut l = Literals::default();
                    if *negated {
                        l.neg.insert(var);
                    } else {
                        l.pos.insert(var);
                    }
                    l
                }
                SpnKind::Sum { weights, children } => {
                    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
                        return Err(AdapterError::InvalidSpn(format!("sum node `{v}` has a bad weight")));
                    }
                    let (a, b) = (&lits[children[0].as_str()], &lits[children[1].as_str()]);
                    if a.scope() != b.scope() {
                        return Err(AdapterError::InvalidSpn(format!(
                            "children of sum node `{v}` have different scopes"
                        )));
                    }
                    Literals {
                        pos: a.pos.union(&b.pos).copied().collect(),
                        neg: a.neg.union(&b.neg).copied().collect(),
                    }
                }
                SpnKind::Product { left, right } => {
                    let (a, b) = (&lits[left.as_str()], &lits[right.as_str()]);
                    if let Some(x) = a.pos.intersection(&b.neg).chain(a.neg.intersection(&b.pos)).next() {
                        return Err(AdapterError::InvalidSpn(format!(
                            "product node `{v}` has `{x}` both positive and negated"
                        )));
                    }
                    Literals {
                        pos: a.pos.union(&b.pos).copied().collect(),
                        neg: a.neg.union(&b.neg).copied().collect(),
                    }
                }
            };
            lits.insert(v, l);
        }
        Ok(())
    }

    /// The variables the network mentions, sorted.
    pub fn variables(&self) -> Vec<String> {
        let vars: BTreeSet<&str> = self
            .nodes
            .iter()
            .filter_map(|n| match &n.kind {
                SpnKind::Leaf { var, .. } => Some(var.as_str()),
                _ => None,
            })
            .collect();
        vars.into_iter().map(String::from).collect()
    }
}

/// `q(root, xi)`.
pub fn eval_spn(spn: &Spn, xi: &BoolAssignment) -> Result<f64, AdapterError> {
    spn.validate()?;
    let mut val: HashMap<&str, f64> = HashMap::new();
    for v in spn.order()? {
        let q = match &spn.node(v).kind {
            SpnKind::Leaf { var, negated } => {
                let x = *xi.get(var).ok_or_else(|| AdapterError::MissingValue(var.clone()))?;
                if x != *negated {
                    1.0
                } else {
                    0.0
                }
            }
            SpnKind::Sum { weights, children } => {
                weights[0] * val[children[0].as_str()] + weights[1] * val[children[1].as_str()]
            }
            SpnKind::Product { left, right } => val[left.as_str()] * val[right.as_str()],
        };
        val.insert(v, q);
    }
    Ok(val[spn.root.as_str()])
}

fn weight_label(node: &str, k: usize) -> String {
    format!("lambda:{node}/{k}")
}

fn build(spn: &Spn, xi: Option<&BoolAssignment>) -> Result<Fgg, AdapterError> {
    spn.validate()?;
    let mut space = boolean_space();
    for n in &spn.nodes {
        space.add_nonterminal(nonterminal(&n.id), NONE)?;
    }
    let mut rules = Vec::new();
    for n in &spn.nodes {
        let lhs = nonterminal(&n.id);
        match &n.kind {
            SpnKind::Leaf { var, negated } => {
                let value = match xi {
                    Some(xi) => *xi.get(var).ok_or_else(|| AdapterError::MissingValue(var.clone()))?,
                    None => !negated,
                };
                let mut h = Hypergraph::new();
                h.add_node(var.clone(), BOOL);
                h.add_edge("pin", pin(value), [var]);
                rules.push(Rule::new(n.id.clone(), lhs, Fragment::new(h, vec![])));
            }
            SpnKind::Sum { weights, children } => {
                for k in 0..2 {
                    let mut h = Hypergraph::new();
                    if xi.is_none() {
                        let l = weight_label(&n.id, k + 1);
                        space.add_terminal(l.clone(), NONE, FactorFunction::Constant(weights[k]))?;
                        h.add_edge("weight", l, NONE);
                    }
                    h.add_edge(["first", "second"][k], nonterminal(&children[k]), NONE);
                    let id = format!("{}/{}", n.id, k + 1);
                    rules.push(Rule::new(id, lhs.clone(), Fragment::new(h, vec![])));
                }
            }
            SpnKind::Product { left, right } => {
                let mut h = Hypergraph::new();
                h.add_edge("left", nonterminal(left), NONE);
                h.add_edge("right", nonterminal(right), NONE);
                rules.push(Rule::new(n.id.clone(), lhs, Fragment::new(h, vec![])));
            }
        }
    }
    Ok(Fgg::from_parts(space, rules, nonterminal(&spn.root)))
}

/// One nonterminal `D_v` per node. A leaf becomes a single node pinned to
/// the literal's value, so a variable gets one node per occurrence; a sum
/// node gets one rule per child carrying its weight, each reaching the child
/// through a differently named edge so that by-id conjunction keeps the two
/// apart.
pub fn spn_to_fgg(spn: &Spn) -> Result<Fgg, AdapterError> {
    build(spn, None)
}

/// The same rules as [`spn_to_fgg`] with leaves pinned to `xi` and no
/// weights; conjoined with the converted grammar its sum-product is `q(xi)`.
pub fn spn_constraint_fgg(spn: &Spn, xi: &BoolAssignment) -> Result<Fgg, AdapterError> {
    build(spn, Some(xi))
}
