//! Converters from other structured model formalisms into grammars, each
//! with a direct evaluator to check the conversion against.

mod cfd;
mod dgm;
mod pfg;
mod spn;

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::graph::{FactorFunction, GraphError, LabelSpace};

pub use cfd::{cfd_constraint_fgg, cfd_to_fgg, eval_cfd, Cfd, CfdKind, CfdNode};
pub use dgm::{dgm_to_fgg, unroll_dgm, Dgm};
pub use pfg::{pfg_to_fgg, unroll_pfg, Pfg};
pub use spn::{eval_spn, spn_constraint_fgg, spn_to_fgg, Spn, SpnKind, SpnNode};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdapterError {
    #[error("not convertible: {0}")]
    NotConvertible(String),
    #[error("invalid plated factor graph: {0}")]
    InvalidPfg(String),
    #[error("invalid cross edge: {0}")]
    InvalidCrossEdge(String),
    #[error("factor `{0}` is not binary")]
    NonBinaryFactor(String),
    #[error("unrolling length must be at least 2, got {0}")]
    InvalidLength(usize),
    #[error("invalid case-factor diagram: {0}")]
    InvalidCfd(String),
    #[error("invalid sum-product network: {0}")]
    InvalidSpn(String),
    #[error("no value for variable `{0}`")]
    MissingValue(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// An assignment of Boolean variables by name.
pub type BoolAssignment = BTreeMap<String, bool>;

pub const BOOL: &str = "bool";
pub const IS_FALSE: &str = "is0";
pub const IS_TRUE: &str = "is1";

/// Node label `bool` over `0, 1` and the two indicator factors.
fn boolean_space() -> LabelSpace {
    let mut s = LabelSpace::new();
    s.add_node_label(BOOL, ["0", "1"]).unwrap();
    s.add_terminal(IS_FALSE, [BOOL], FactorFunction::Table(vec![1.0, 0.0])).unwrap();
    s.add_terminal(IS_TRUE, [BOOL], FactorFunction::Table(vec![0.0, 1.0])).unwrap();
    s
}

fn pin(value: bool) -> &'static str {
    if value {
        IS_TRUE
    } else {
        IS_FALSE
    }
}

fn nonterminal(node: &str) -> String {
    format!("D_{node}")
}

/// Children-first order of the nodes reachable from `roots`.
///
/// `children` maps a node id to its children; fails on unknown ids and
/// cycles.
fn topological<'a>(roots: &[&'a str], children: &HashMap<&'a str, Vec<&'a str>>) -> Result<Vec<&'a str>, String> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Open,
        Done,
    }
    let mut mark: HashMap<&str, Mark> = HashMap::new();
    let mut order = Vec::new();
    for &root in roots {
        if !children.contains_key(root) {
            return Err(format!("unknown node `{root}`"));
        }
        if mark.contains_key(root) {
            continue;
        }
        mark.insert(root, Mark::Open);
        let mut stack: Vec<(&str, usize)> = vec![(root, 0)];
        while let Some((v, i)) = stack.pop() {
            let cs = &children[v];
            if i == cs.len() {
                mark.insert(v, Mark::Done);
                order.push(v);
                continue;
            }
            stack.push((v, i + 1));
            let c = cs[i];
            if !children.contains_key(c) {
                return Err(format!("node `{v}` has unknown child `{c}`"));
            }
            match mark.get(c) {
                Some(Mark::Open) => return Err(format!("cycle through `{c}`")),
                Some(Mark::Done) => {}
                None => {
                    mark.insert(c, Mark::Open);
                    stack.push((c, 0));
                }
            }
        }
    }
    Ok(order)
}

#[cfg(test)]
pub(crate) fn all_assignments(vars: &[String]) -> impl Iterator<Item = BoolAssignment> + '_ {
    (0..1u64 << vars.len()).map(move |bits| {
        vars.iter()
            .enumerate()
            .map(|(i, x)| (x.clone(), bits >> i & 1 == 1))
            .collect()
    })
}
