//! Compilation of a nonreentrant grammar into one factor graph with the same
//! sum-product.
//!
//! Boolean switch variables say which nonterminals and rules a derivation
//! uses. Every rule gets a cluster of copies of its nodes and factors, gated
//! by its switch, and every nonterminal a cluster of endpoint variables tied
//! to the rules that use and rewrite it. Clusters of unused rules sum out to
//! one.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::eval::{brute_force_sum_product, variable_elimination};
use crate::grammar::{derivable_rules, is_nonreentrant, Fgg};
use crate::graph::{signature_dims, FactorFunction, GraphError, Hypergraph, LabelSpace};
use crate::inference::{solve_sum_product, InferenceError, SolverConfig};
use crate::semiring::Semiring;

pub const DEFAULT_MAX_COND_ONE: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompileError {
    #[error("grammar is not nonreentrant: {0}")]
    ReentrantInput(String),
    #[error("CondOne over {l} inputs exceeds the cap of {cap}")]
    TableTooLarge { l: usize, cap: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
}

/// Where a compiled variable or factor comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    /// `B_X`: whether nonterminal `X` is used.
    NonterminalSwitch(String),
    /// `B_pi`: whether the rule is used.
    RuleSwitch(String),
    /// Copy of a right-hand side node in the rule's cluster.
    RuleNode { rule: String, node: String },
    /// Endpoint slot `i` (from 1) of a nonterminal's cluster.
    Endpoint { nonterminal: String, slot: usize },
    /// Forces `B_S` true.
    StartPin,
    /// Exactly one rule that uses the nonterminal is used, or none.
    CondOneUses(String),
    /// Exactly one rule rewriting the nonterminal is used, or none.
    CondOneRules(String),
    /// Lets the variable sum out to one when its switch is off.
    CondNormalize(String),
    /// A terminal edge of a rule, active when the rule is.
    CondFactor { rule: String, edge: String },
    /// Ties an endpoint slot to the node attached at a nonterminal edge.
    CondEqualsSite { rule: String, edge: String, slot: usize },
    /// Ties an endpoint slot to an external node of a rule.
    CondEqualsExternal { rule: String, slot: usize },
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::NonterminalSwitch(x) => write!(f, "switch for nonterminal {x}"),
            Origin::RuleSwitch(r) => write!(f, "switch for rule {r}"),
            Origin::RuleNode { rule, node } => write!(f, "node {node} of rule {rule}"),
            Origin::Endpoint { nonterminal, slot } => write!(f, "endpoint {slot} of {nonterminal}"),
            Origin::StartPin => f.write_str("start pin"),
            Origin::CondOneUses(x) => write!(f, "CondOne over rules using {x}"),
            Origin::CondOneRules(x) => write!(f, "CondOne over rules for {x}"),
            Origin::CondNormalize(v) => write!(f, "CondNormalize for {v}"),
            Origin::CondFactor { rule, edge } => write!(f, "CondFactor for edge {edge} of rule {rule}"),
            Origin::CondEqualsSite { rule, edge, slot } => {
                write!(f, "CondEquals for slot {slot} of edge {edge} in rule {rule}")
            }
            Origin::CondEqualsExternal { rule, slot } => write!(f, "CondEquals for external {slot} of rule {rule}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompiledFactorGraph {
    pub space: LabelSpace,
    pub graph: Hypergraph,
    /// Keyed by variable id and factor id.
    pub provenance: BTreeMap<String, Origin>,
    /// The Boolean node label, with domain `[false, true]`.
    pub bool_label: String,
}

impl CompiledFactorGraph {
    pub fn variable_count(&self) -> usize {
        self.graph.nodes.len()
    }

    pub fn factor_count(&self) -> usize {
        self.graph.edges.len()
    }
}

/// `CondOne_l(B, B_1, ..., B_l)`: if `B`, exactly one `B_i`; otherwise none.
pub fn cond_one(l: usize) -> Result<FactorFunction, CompileError> {
    cond_one_capped(l, DEFAULT_MAX_COND_ONE)
}

pub fn cond_one_capped(l: usize, cap: usize) -> Result<FactorFunction, CompileError> {
    if l > cap {
        return Err(CompileError::TableTooLarge { l, cap });
    }
    let size = 1usize << (l + 1);
    let t = (0..size)
        .map(|i| {
            // first argument is the most significant bit
            let b = i >> l & 1 == 1;
            let ones = (i & ((1 << l) - 1)).count_ones();
            let ok = if b { ones == 1 } else { ones == 0 };
            if ok {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    Ok(FactorFunction::Table(t))
}

/// `Cond(B, F)`: `F` when `B` is true, one otherwise.
fn cond_factor(f: &FactorFunction, size: usize) -> FactorFunction {
    match f {
        FactorFunction::Constant(c) if size == 1 => FactorFunction::Table(vec![1.0, *c]),
        _ => {
            let mut t = vec![1.0; size];
            t.extend((0..size).map(|i| f.at(i)));
            FactorFunction::Table(t)
        }
    }
}

/// `Cond(not B, 1/m)` over `(B, v)` with `|dom(v)| = m`.
fn cond_normalize(m: usize) -> FactorFunction {
    let mut t = vec![1.0 / m as f64; m];
    t.extend(std::iter::repeat(1.0).take(m));
    FactorFunction::Table(t)
}

/// `Cond(B, v = v')` over `(B, v, v')`.
fn cond_equals(m: usize) -> FactorFunction {
    let mut t = vec![1.0; m * m];
    t.extend((0..m * m).map(|i| if i / m == i % m { 1.0 } else { 0.0 }));
    FactorFunction::Table(t)
}

struct Builder {
    space: LabelSpace,
    graph: Hypergraph,
    provenance: BTreeMap<String, Origin>,
    bool_label: String,
    labels: BTreeMap<String, String>,
}

impl Builder {
    fn var(&mut self, id: String, label: &str, origin: Origin) -> String {
        self.graph.add_node(id.clone(), label);
        self.provenance.insert(id.clone(), origin);
        id
    }

    /// Declares (once) a terminal label for `key` and adds a factor.
    fn factor(
        &mut self,
        id: String,
        key: &str,
        signature: Vec<String>,
        f: impl FnOnce() -> Result<FactorFunction, CompileError>,
        att: Vec<String>,
        origin: Origin,
    ) -> Result<(), CompileError> {
        let name = match self.labels.get(key) {
            Some(n) => n.clone(),
            None => {
                let n = self.space.fresh_label(key);
                self.space.add_terminal(n.clone(), &signature, f()?)?;
                self.labels.insert(key.to_string(), n.clone());
                n
            }
        };
        self.graph.add_edge(id.clone(), name, att);
        self.provenance.insert(id, origin);
        Ok(())
    }

    fn cond_one(&mut self, id: String, b: &str, switches: Vec<String>, origin: Origin, cap: usize) -> Result<(), CompileError> {
        let l = switches.len();
        let sig = vec![self.bool_label.clone(); l + 1];
        let mut att = vec![b.to_string()];
        att.extend(switches);
        self.factor(id, &format!("CondOne{l}"), sig, || cond_one_capped(l, cap), att, origin)
    }
}

pub fn switch_of_nonterminal(x: &str) -> String {
    format!("B:nt:{x}")
}

pub fn switch_of_rule(r: &str) -> String {
    format!("B:rule:{r}")
}

/// Compiles with CondOne tables capped at [`DEFAULT_MAX_COND_ONE`] inputs.
pub fn compile(g: &Fgg) -> Result<CompiledFactorGraph, CompileError> {
    compile_with_cap(g, DEFAULT_MAX_COND_ONE)
}

pub fn compile_with_cap(g: &Fgg, max_cond_one: usize) -> Result<CompiledFactorGraph, CompileError> {
    g.validate().map_err(InferenceError::from)?;
    if !is_nonreentrant(g) {
        return Err(CompileError::ReentrantInput(
            "some derivation rewrites a nonterminal twice".into(),
        ));
    }
    let mut space = LabelSpace::new();
    for (name, values) in g.space.node_labels() {
        space.add_node_label(name, values)?;
    }
    let bool_label = space.fresh_label("B");
    space.add_node_label(bool_label.clone(), ["false", "true"])?;
    let mut b = Builder {
        space,
        graph: Hypergraph::new(),
        provenance: BTreeMap::new(),
        bool_label: bool_label.clone(),
        labels: BTreeMap::new(),
    };

    for x in &g.nonterminals {
        b.var(switch_of_nonterminal(x), &bool_label, Origin::NonterminalSwitch(x.clone()));
    }
    for r in &g.rules {
        b.var(switch_of_rule(&r.id), &bool_label, Origin::RuleSwitch(r.id.clone()));
    }

    let bs = switch_of_nonterminal(&g.start);
    b.factor(
        "pin".into(),
        "pin",
        vec![bool_label.clone()],
        || Ok(FactorFunction::Table(vec![0.0, 1.0])),
        vec![bs],
        Origin::StartPin,
    )?;
    // Rules outside every derivation have their switch forced off, so only
    // derivable ones need a single site per nonterminal.
    let derivable = derivable_rules(g);
    for x in &g.nonterminals {
        let bx = switch_of_nonterminal(x);
        if *x != g.start {
            let mut users = Vec::new();
            for r in &g.rules {
                let sites = r.rhs.graph.edges.iter().filter(|e| e.label == *x).count();
                if sites > 1 && derivable.contains(&r.id) {
                    return Err(CompileError::ReentrantInput(format!(
                        "rule `{}` has {sites} edges labeled `{x}`",
                        r.id
                    )));
                }
                if sites >= 1 {
                    users.push(switch_of_rule(&r.id));
                }
            }
            b.cond_one(format!("one:uses:{x}"), &bx, users, Origin::CondOneUses(x.clone()), max_cond_one)?;
        }
        let rewrites = g.rules_for(x).map(|r| switch_of_rule(&r.id)).collect();
        b.cond_one(format!("one:rules:{x}"), &bx, rewrites, Origin::CondOneRules(x.clone()), max_cond_one)?;
    }

    for r in &g.rules {
        let br = switch_of_rule(&r.id);
        let copy = |v: &str| format!("rule:{}/{v}", r.id);
        for v in &r.rhs.graph.nodes {
            let id = b.var(
                copy(&v.id),
                &v.label,
                Origin::RuleNode {
                    rule: r.id.clone(),
                    node: v.id.clone(),
                },
            );
            let m = g.space.domain_size(&v.label).unwrap_or(0);
            b.factor(
                format!("norm:{id}"),
                &format!("CondNormalize[{}]", v.label),
                vec![bool_label.clone(), v.label.clone()],
                || Ok(cond_normalize(m)),
                vec![br.clone(), id.clone()],
                Origin::CondNormalize(id),
            )?;
        }
        for e in &r.rhs.graph.edges {
            if g.is_nonterminal(&e.label) {
                continue;
            }
            let f = g.space.factor(&e.label).expect("validated terminal");
            let mut sig = vec![bool_label.clone()];
            sig.extend(g.space.signature(&e.label).unwrap_or(&[]).iter().cloned());
            let size: usize = signature_dims(&g.space, &e.label).iter().product();
            let mut att = vec![br.clone()];
            att.extend(e.att.iter().map(|v| copy(v)));
            b.factor(
                format!("factor:{}/{}", r.id, e.id),
                &format!("Cond[{}]", e.label),
                sig,
                || Ok(cond_factor(f, size)),
                att,
                Origin::CondFactor {
                    rule: r.id.clone(),
                    edge: e.id.clone(),
                },
            )?;
        }
    }

    let slot = |x: &str, i: usize| format!("nt:{x}/{i}");
    for x in &g.nonterminals {
        let bx = switch_of_nonterminal(x);
        for (i, l) in g.space.signature(x).unwrap_or(&[]).iter().enumerate() {
            let id = b.var(
                slot(x, i + 1),
                l,
                Origin::Endpoint {
                    nonterminal: x.clone(),
                    slot: i + 1,
                },
            );
            let m = g.space.domain_size(l).unwrap_or(0);
            b.factor(
                format!("norm:{id}"),
                &format!("CondNormalize[{l}]"),
                vec![bool_label.clone(), l.clone()],
                || Ok(cond_normalize(m)),
                vec![bx.clone(), id.clone()],
                Origin::CondNormalize(id),
            )?;
        }
    }
    for r in &g.rules {
        let br = switch_of_rule(&r.id);
        let lab = |v: &str| r.rhs.graph.node(v).map(|n| n.label.clone()).unwrap_or_default();
        let equals = |b: &mut Builder, id: String, s: String, v: &str, origin: Origin| {
            let l = lab(v);
            let m = g.space.domain_size(&l).unwrap_or(0);
            b.factor(
                id,
                &format!("CondEquals[{l}]"),
                vec![bool_label.clone(), l.clone(), l.clone()],
                || Ok(cond_equals(m)),
                vec![br.clone(), s, format!("rule:{}/{v}", r.id)],
                origin,
            )
        };
        for e in g.nonterminal_edges(r) {
            for (i, v) in e.att.iter().enumerate() {
                equals(
                    &mut b,
                    format!("eq:site:{}/{}/{}", r.id, e.id, i + 1),
                    slot(&e.label, i + 1),
                    v,
                    Origin::CondEqualsSite {
                        rule: r.id.clone(),
                        edge: e.id.clone(),
                        slot: i + 1,
                    },
                )?;
            }
        }
        for (i, v) in r.rhs.externals.iter().enumerate() {
            equals(
                &mut b,
                format!("eq:ext:{}/{}", r.id, i + 1),
                slot(&r.lhs, i + 1),
                v,
                Origin::CondEqualsExternal {
                    rule: r.id.clone(),
                    slot: i + 1,
                },
            )?;
        }
    }
    crate::graph::validate(&b.space, &b.graph)?;
    Ok(CompiledFactorGraph {
        space: b.space,
        graph: b.graph,
        provenance: b.provenance,
        bool_label,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub z_grammar: f64,
    pub z_compiled: f64,
    pub rel_diff: f64,
    /// `brute-force` or `elimination`.
    pub method: &'static str,
}

/// Compiles `g` and compares the compiled graph's sum-product with the
/// grammar's. Uses brute force when the assignment space is small enough,
/// variable elimination otherwise.
pub fn verify_compile(g: &Fgg, cfg: &SolverConfig) -> Result<VerifyReport, CompileError> {
    let c = compile(g)?;
    let z_grammar = solve_sum_product(g, Semiring::Real, cfg)?.z;
    let (z_compiled, method) = match brute_force_sum_product(&c.space, &c.graph, Semiring::Real) {
        Ok(z) => (z, "brute-force"),
        Err(GraphError::AssignmentSpaceTooLarge { .. }) => (
            variable_elimination(&c.space, &c.graph, Semiring::Real, cfg.max_table)?,
            "elimination",
        ),
        Err(e) => return Err(e.into()),
    };
    let scale = z_grammar.abs().max(z_compiled.abs());
    let rel_diff = if scale == 0.0 { 0.0 } else { (z_grammar - z_compiled).abs() / scale };
    Ok(VerifyReport {
        z_grammar,
        z_compiled,
        rel_diff,
        method,
    })
}

/// Assignment space size of the compiled graph, for choosing an evaluator.
pub fn assignment_space(c: &CompiledFactorGraph) -> f64 {
    c.graph
        .nodes
        .iter()
        .map(|v| c.space.domain_size(&v.label).unwrap_or(0) as f64)
        .product()
}
