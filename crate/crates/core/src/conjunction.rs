//! Conjunction of grammars: the grammar whose rules are the pairwise
//! products of conjoinable rules.
//!
//! Two rules are conjoinable when they have the same nodes, externals and
//! nonterminal edges (up to a correspondence) and left-hand sides of the same
//! type. Their conjunction keeps the shared structure once, labels each
//! nonterminal edge with the pair of labels, and keeps the terminal edges of
//! both.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use log::warn;
use thiserror::Error;

use crate::fixtures::{frag, NONE};
use crate::grammar::{derivable_rules, Fgg, GrammarError, Rule};
use crate::graph::{Fragment, Hypergraph, LabelSpace};

pub const DEFAULT_SEARCH_BUDGET: usize = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConjunctionError {
    #[error("incompatible label spaces: {0}")]
    IncompatibleLabelSpaces(String),
    #[error("invalid correspondence: {0}")]
    InvalidCorrespondence(String),
    #[error(transparent)]
    Grammar(#[from] GrammarError),
}

/// How rule correspondences are found.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    /// Nodes and nonterminal edges correspond when their ids are equal.
    #[default]
    ById,
    /// Backtracking search for any correspondence.
    Search,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "by-id" | "by_id" => Ok(Mode::ById),
            "search" => Ok(Mode::Search),
            _ => Err(format!("unknown mode `{s}` (expected by-id or search)")),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::ById => "by-id",
            Mode::Search => "search",
        })
    }
}

/// Bijections from the first rule's nodes and nonterminal edges to the
/// second's, as `(first id, second id)` pairs in the first rule's order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleCorrespondence {
    pub node_map: Vec<(String, String)>,
    pub nt_edge_map: Vec<(String, String)>,
}

/// The label of a pair nonterminal. The right component is escaped so that
/// nested pairs read left to right: `X,Y,Z` is `<<X,Y>,Z>`.
pub fn pair_label(left: &str, right: &str) -> String {
    let mut s = String::with_capacity(left.len() + right.len() + 1);
    s.push_str(left);
    s.push(',');
    for c in right.chars() {
        if c == ',' || c == '\\' {
            s.push('\\');
        }
        s.push(c);
    }
    s
}

struct Side<'a> {
    g: &'a Fgg,
    r: &'a Rule,
}

impl Side<'_> {
    fn nt_edges(&self) -> Vec<&crate::graph::Edge> {
        self.g.nonterminal_edges(self.r).collect()
    }

    fn lhs_type(&self) -> Option<&[String]> {
        self.g.space.signature(&self.r.lhs)
    }
}

fn check(a: &Side, b: &Side, c: &RuleCorrespondence) -> Result<(), String> {
    if a.lhs_type() != b.lhs_type() {
        return Err("left-hand sides have different types".into());
    }
    let ga = &a.r.rhs.graph;
    let gb = &b.r.rhs.graph;
    if ga.nodes.len() != gb.nodes.len() || c.node_map.len() != ga.nodes.len() {
        return Err("node counts differ".into());
    }
    let map: HashMap<&str, &str> = c.node_map.iter().map(|(x, y)| (x.as_str(), y.as_str())).collect();
    let image: HashSet<&str> = map.values().copied().collect();
    if map.len() != ga.nodes.len() || image.len() != gb.nodes.len() {
        return Err("node map is not a bijection".into());
    }
    for n in &ga.nodes {
        let m = map
            .get(n.id.as_str())
            .and_then(|y| gb.node(y))
            .ok_or_else(|| format!("node `{}` is not mapped", n.id))?;
        if m.label != n.label {
            return Err(format!("node `{}` maps to a node with another label", n.id));
        }
    }
    let ext: Vec<&str> = a.r.rhs.externals.iter().map(|x| map[x.as_str()]).collect();
    if ext != b.r.rhs.externals.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err("externals do not correspond".into());
    }
    let ea = a.nt_edges();
    let eb = b.nt_edges();
    if ea.len() != eb.len() || c.nt_edge_map.len() != ea.len() {
        return Err("nonterminal edge counts differ".into());
    }
    let emap: HashMap<&str, &str> = c.nt_edge_map.iter().map(|(x, y)| (x.as_str(), y.as_str())).collect();
    let eimage: HashSet<&str> = emap.values().copied().collect();
    if emap.len() != ea.len() || eimage.len() != eb.len() {
        return Err("edge map is not a bijection".into());
    }
    for e in &ea {
        let f = emap
            .get(e.id.as_str())
            .and_then(|y| eb.iter().find(|f| f.id == *y))
            .ok_or_else(|| format!("edge `{}` is not mapped to a nonterminal edge", e.id))?;
        let att: Vec<&str> = e.att.iter().map(|v| map[v.as_str()]).collect();
        if att != f.att.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(format!("edge `{}` has different endpoints", e.id));
        }
        if a.g.space.signature(&e.label) != b.g.space.signature(&f.label) {
            return Err(format!("edge `{}` has a different type", e.id));
        }
    }
    Ok(())
}

fn by_id(a: &Side, b: &Side) -> Option<RuleCorrespondence> {
    let c = RuleCorrespondence {
        node_map: a.r.rhs.graph.nodes.iter().map(|n| (n.id.clone(), n.id.clone())).collect(),
        nt_edge_map: a.nt_edges().iter().map(|e| (e.id.clone(), e.id.clone())).collect(),
    };
    check(a, b, &c).ok().map(|_| c)
}

struct Search<'a> {
    a: &'a Side<'a>,
    b: &'a Side<'a>,
    /// Second-rule node indices, sorted by id.
    candidates: Vec<usize>,
    node_of: Vec<Option<usize>>,
    used: Vec<bool>,
    steps: usize,
    budget: usize,
}

impl Search<'_> {
    fn nodes(&mut self, i: usize) -> Option<RuleCorrespondence> {
        let ga = &self.a.r.rhs.graph;
        let gb = &self.b.r.rhs.graph;
        if i == ga.nodes.len() {
            return self.edges();
        }
        if self.node_of[i].is_some() {
            return self.nodes(i + 1);
        }
        for k in 0..self.candidates.len() {
            let j = self.candidates[k];
            self.steps += 1;
            if self.steps > self.budget {
                return None;
            }
            if self.used[j] || gb.nodes[j].label != ga.nodes[i].label {
                continue;
            }
            self.used[j] = true;
            self.node_of[i] = Some(j);
            if let Some(c) = self.nodes(i + 1) {
                return Some(c);
            }
            self.node_of[i] = None;
            self.used[j] = false;
        }
        None
    }

    fn edges(&mut self) -> Option<RuleCorrespondence> {
        let ga = &self.a.r.rhs.graph;
        let gb = &self.b.r.rhs.graph;
        let pa = ga.node_index();
        let ea = self.a.nt_edges();
        let mut eb = self.b.nt_edges();
        eb.sort_by(|x, y| x.id.cmp(&y.id));
        if ea.len() != eb.len() {
            return None;
        }
        let node_map: Vec<(String, String)> = ga
            .nodes
            .iter()
            .zip(&self.node_of)
            .map(|(n, j)| (n.id.clone(), gb.nodes[j.unwrap()].id.clone()))
            .collect();
        let image = |v: &str| gb.nodes[self.node_of[pa[v]].unwrap()].id.as_str();
        let mut taken = vec![false; eb.len()];
        let mut chosen = vec![0usize; ea.len()];
        fn go(
            k: usize,
            ea: &[&crate::graph::Edge],
            eb: &[&crate::graph::Edge],
            taken: &mut [bool],
            chosen: &mut [usize],
            fits: &dyn Fn(usize, usize) -> bool,
            steps: &mut usize,
            budget: usize,
        ) -> bool {
            if k == ea.len() {
                return true;
            }
            for j in 0..eb.len() {
                *steps += 1;
                if *steps > budget {
                    return false;
                }
                if taken[j] || !fits(k, j) {
                    continue;
                }
                taken[j] = true;
                chosen[k] = j;
                if go(k + 1, ea, eb, taken, chosen, fits, steps, budget) {
                    return true;
                }
                taken[j] = false;
            }
            false
        }
        let fits = |k: usize, j: usize| {
            ea[k].att.len() == eb[j].att.len()
                && ea[k].att.iter().zip(&eb[j].att).all(|(v, w)| image(v) == w)
                && self.a.g.space.signature(&ea[k].label) == self.b.g.space.signature(&eb[j].label)
        };
        let mut steps = self.steps;
        let ok = go(0, &ea, &eb, &mut taken, &mut chosen, &fits, &mut steps, self.budget);
        self.steps = steps;
        ok.then(|| RuleCorrespondence {
            node_map,
            nt_edge_map: ea.iter().zip(&chosen).map(|(e, &j)| (e.id.clone(), eb[j].id.clone())).collect(),
        })
    }
}

fn search(a: &Side, b: &Side, budget: usize) -> Option<RuleCorrespondence> {
    let ga = &a.r.rhs.graph;
    let gb = &b.r.rhs.graph;
    if a.lhs_type() != b.lhs_type()
        || ga.nodes.len() != gb.nodes.len()
        || a.r.rhs.externals.len() != b.r.rhs.externals.len()
    {
        return None;
    }
    let mut candidates: Vec<usize> = (0..gb.nodes.len()).collect();
    candidates.sort_by(|&x, &y| gb.nodes[x].id.cmp(&gb.nodes[y].id));
    let pa = ga.node_index();
    let pb = gb.node_index();
    let mut node_of = vec![None; ga.nodes.len()];
    let mut used = vec![false; gb.nodes.len()];
    for (x, y) in a.r.rhs.externals.iter().zip(&b.r.rhs.externals) {
        let (i, j) = (pa[x.as_str()], pb[y.as_str()]);
        if ga.nodes[i].label != gb.nodes[j].label {
            return None;
        }
        node_of[i] = Some(j);
        used[j] = true;
    }
    let mut s = Search {
        a,
        b,
        candidates,
        node_of,
        used,
        steps: 0,
        budget,
    };
    let found = s.nodes(0);
    if found.is_none() && s.steps > budget {
        warn!("correspondence search for `{}` and `{}` ran out of budget", a.r.id, b.r.id);
    }
    found.filter(|c| check(a, b, c).is_ok())
}

/// A correspondence between `r1` (a rule of `g1`) and `r2` (of `g2`), if the
/// rules are conjoinable.
pub fn conjoinable(g1: &Fgg, r1: &Rule, g2: &Fgg, r2: &Rule, mode: Mode) -> Option<RuleCorrespondence> {
    let a = Side { g: g1, r: r1 };
    let b = Side { g: g2, r: r2 };
    match mode {
        Mode::ById => by_id(&a, &b),
        Mode::Search => search(&a, &b, DEFAULT_SEARCH_BUDGET),
    }
}

/// The conjunction of two conjoinable rules. Nodes, node ids and externals
/// come from `r1`; terminal edges get ids `1:<id>` and `2:<id>`.
pub fn conjoin_rules(
    g1: &Fgg,
    r1: &Rule,
    g2: &Fgg,
    r2: &Rule,
    c: &RuleCorrespondence,
) -> Result<Rule, ConjunctionError> {
    let a = Side { g: g1, r: r1 };
    let b = Side { g: g2, r: r2 };
    check(&a, &b, c).map_err(ConjunctionError::InvalidCorrespondence)?;
    let back: HashMap<&str, &str> = c.node_map.iter().map(|(x, y)| (y.as_str(), x.as_str())).collect();
    let emap: HashMap<&str, &str> = c.nt_edge_map.iter().map(|(x, y)| (x.as_str(), y.as_str())).collect();
    let mut h = Hypergraph::new();
    h.nodes = r1.rhs.graph.nodes.clone();
    for e in &r1.rhs.graph.edges {
        if g1.is_nonterminal(&e.label) {
            let partner = r2.rhs.graph.edge(emap[e.id.as_str()]).expect("checked");
            h.add_edge(e.id.clone(), pair_label(&e.label, &partner.label), &e.att);
        } else {
            h.add_edge(format!("1:{}", e.id), e.label.clone(), &e.att);
        }
    }
    for e in &r2.rhs.graph.edges {
        if !g2.is_nonterminal(&e.label) {
            h.add_edge(format!("2:{}", e.id), e.label.clone(), e.att.iter().map(|v| back[v.as_str()]));
        }
    }
    Ok(Rule::new(
        pair_label(&r1.id, &r2.id),
        pair_label(&r1.lhs, &r2.lhs),
        Fragment::new(h, r1.rhs.externals.clone()),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConjoinOptions {
    pub mode: Mode,
    /// Drop rules that cannot occur in a complete derivation from the start.
    pub prune: bool,
}

fn merged_space(g1: &Fgg, g2: &Fgg) -> Result<LabelSpace, ConjunctionError> {
    let mut s = LabelSpace::new();
    for g in [g1, g2] {
        for (name, values) in g.space.node_labels() {
            s.add_node_label(name, values)
                .map_err(|_| ConjunctionError::IncompatibleLabelSpaces(format!("node label `{name}` has different domains")))?;
        }
    }
    for g in [g1, g2] {
        for t in &g.terminals {
            let l = g.space.edge_label(t).expect("validated");
            let f = l.factor.clone().expect("terminal");
            s.add_terminal(t.clone(), &l.signature, f)
                .map_err(|_| ConjunctionError::IncompatibleLabelSpaces(format!("terminal `{t}` is defined differently")))?;
        }
    }
    Ok(s)
}

/// `g1 ⊓ g2` with the default options.
pub fn conjoin(g1: &Fgg, g2: &Fgg) -> Result<Fgg, ConjunctionError> {
    conjoin_with(g1, g2, ConjoinOptions::default())
}

pub fn conjoin_with(g1: &Fgg, g2: &Fgg, opts: ConjoinOptions) -> Result<Fgg, ConjunctionError> {
    g1.validate()?;
    g2.validate()?;
    let mut space = merged_space(g1, g2)?;
    let start = pair_label(&g1.start, &g2.start);
    let mut rules = Vec::new();
    let mut types: Vec<(String, Vec<String>)> = vec![(start.clone(), Vec::new())];
    for r1 in &g1.rules {
        for r2 in &g2.rules {
            let Some(c) = conjoinable(g1, r1, g2, r2, opts.mode) else { continue };
            let r = conjoin_rules(g1, r1, g2, r2, &c)?;
            types.push((r.lhs.clone(), g1.space.signature(&r1.lhs).unwrap_or(&[]).to_vec()));
            for (e, f) in &c.nt_edge_map {
                let e = r1.rhs.graph.edge(e).expect("checked");
                let f = r2.rhs.graph.edge(f).expect("checked");
                types.push((
                    pair_label(&e.label, &f.label),
                    g1.space.signature(&e.label).unwrap_or(&[]).to_vec(),
                ));
            }
            rules.push(r);
        }
    }
    for (x, sig) in &types {
        if space.edge_label(x).is_some_and(|l| l.factor.is_some()) {
            return Err(ConjunctionError::IncompatibleLabelSpaces(format!(
                "pair label `{x}` clashes with a terminal"
            )));
        }
        space.add_nonterminal(x.clone(), sig).map_err(|e| ConjunctionError::Grammar(e.into()))?;
    }
    let mut g = Fgg::from_parts(space, rules, start);
    if opts.prune {
        g = prune(&g);
    }
    g.validate()?;
    Ok(g)
}

/// Keeps only rules usable in a complete derivation from the start symbol.
pub fn prune(g: &Fgg) -> Fgg {
    let keep = derivable_rules(g);
    let rules: Vec<Rule> = g.rules.iter().filter(|r| keep.contains(&r.id)).cloned().collect();
    let mut space = LabelSpace::new();
    for (name, values) in g.space.node_labels() {
        space.add_node_label(name, values).expect("copied");
    }
    let used: BTreeSet<&str> = rules
        .iter()
        .flat_map(|r| r.rhs.graph.edges.iter().map(|e| e.label.as_str()))
        .chain(rules.iter().map(|r| r.lhs.as_str()))
        .chain([g.start.as_str()])
        .collect();
    for (name, l) in g.space.edge_labels() {
        if used.contains(name) {
            match &l.factor {
                Some(f) => space.add_terminal(name, &l.signature, f.clone()),
                None => space.add_nonterminal(name, &l.signature),
            }
            .expect("copied");
        }
    }
    Fgg::from_parts(space, rules, g.start.clone())
}

/// The query grammar that makes node `1` of rule `pi3` the second-to-last
/// tag of an HMM grammar with node labels `T` (tags) and `W` (words).
///
/// `S -> T1 X(1)`; `X -> T1 T2 W3 X(2)`; `X -> T1 T2 W3 Y(2)`; `Y -> T1 T2`.
pub fn second_to_last_query(g: &Fgg) -> Result<Fgg, ConjunctionError> {
    let mut s = LabelSpace::new();
    for l in ["T", "W"] {
        let d = g
            .space
            .domain(l)
            .ok_or_else(|| ConjunctionError::IncompatibleLabelSpaces(format!("no node label `{l}`")))?;
        s.add_node_label(l, d).expect("fresh");
    }
    s.add_nonterminal("S", NONE).expect("fresh");
    s.add_nonterminal("X", ["T"]).expect("fresh");
    s.add_nonterminal("Y", ["T"]).expect("fresh");
    let step = |nt: &str| frag(&[("1", "T"), ("2", "T"), ("3", "W")], &[("4", nt, &["2"])], &["1"]);
    let rules = vec![
        Rule::new("pi1", "S", frag(&[("1", "T")], &[("2", "X", &["1"])], NONE)),
        Rule::new("pi2", "X", step("X")),
        Rule::new("pi3", "X", step("Y")),
        Rule::new("pi4", "Y", frag(&[("1", "T"), ("2", "T")], &[], &["1"])),
    ];
    Ok(Fgg::from_parts(s, rules, "S"))
}
