//! Binarization of grammars by tree decomposition of right-hand sides.
//!
//! Each right-hand side `R` is decomposed together with a virtual hyperedge
//! over its externals. The bag holding the externals becomes the root and
//! keeps the original left-hand side; every other bag becomes a rule for a
//! fresh nonterminal, attached to its parent through the shared nodes.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::grammar::{Fgg, GrammarError, Rule};
use crate::graph::{Fragment, Hypergraph};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FactorizeError {
    #[error("invalid tree decomposition: {0}")]
    InvalidDecomposition(String),
    #[error(transparent)]
    Grammar(#[from] GrammarError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strategy {
    #[default]
    MinFill,
    MinDegree,
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "minfill" => Ok(Strategy::MinFill),
            "mindegree" => Ok(Strategy::MinDegree),
            _ => Err(format!("unknown strategy `{s}` (expected minfill or mindegree)")),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::MinFill => "minfill",
            Strategy::MinDegree => "mindegree",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bag {
    pub id: String,
    pub nodes: Vec<String>,
    pub edges: Vec<String>,
}

/// A rooted tree of bags. `parent[i]` is the parent of `bags[i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeDecomposition {
    pub bags: Vec<Bag>,
    pub parent: Vec<Option<usize>>,
    pub root: usize,
}

impl TreeDecomposition {
    /// Largest bag size minus one (zero for a single empty bag).
    pub fn width(&self) -> usize {
        self.bags.iter().map(|b| b.nodes.len()).max().unwrap_or(0).saturating_sub(1)
    }

    pub fn children(&self, i: usize) -> Vec<usize> {
        (0..self.bags.len()).filter(|&j| self.parent[j] == Some(i)).collect()
    }

    /// Checks node cover, edge cover, running intersection, that the
    /// parent links form a tree, and that `externals` fit in the root bag.
    pub fn check(&self, g: &Hypergraph, externals: &[String]) -> Result<(), FactorizeError> {
        let bad = |m: String| Err(FactorizeError::InvalidDecomposition(m));
        let n = self.bags.len();
        if n == 0 || self.root >= n || self.parent.len() != n {
            return bad("malformed bag tree".into());
        }
        for i in 0..n {
            if (i == self.root) != self.parent[i].is_none() {
                return bad(format!("bag `{}` has a bad parent link", self.bags[i].id));
            }
            let mut seen = HashSet::new();
            let mut j = i;
            while let Some(p) = self.parent[j] {
                if p >= n || !seen.insert(p) {
                    return bad("parent links contain a cycle".into());
                }
                j = p;
            }
        }
        let node_ids: HashSet<&str> = g.nodes.iter().map(|v| v.id.as_str()).collect();
        let bag_sets: Vec<HashSet<&str>> = self
            .bags
            .iter()
            .map(|b| b.nodes.iter().map(String::as_str).collect())
            .collect();
        for (b, s) in self.bags.iter().zip(&bag_sets) {
            if let Some(v) = s.iter().find(|v| !node_ids.contains(*v)) {
                return bad(format!("bag `{}` holds unknown node `{v}`", b.id));
            }
        }
        for v in &g.nodes {
            let holders: Vec<usize> = (0..n).filter(|&i| bag_sets[i].contains(v.id.as_str())).collect();
            if holders.is_empty() {
                return bad(format!("node `{}` is not covered", v.id));
            }
            let tops = holders
                .iter()
                .filter(|&&i| self.parent[i].map_or(true, |p| !bag_sets[p].contains(v.id.as_str())))
                .count();
            if tops != 1 {
                return bad(format!("bags holding `{}` are not connected", v.id));
            }
        }
        let mut owner: HashMap<&str, usize> = HashMap::new();
        for (i, b) in self.bags.iter().enumerate() {
            for e in &b.edges {
                if owner.insert(e.as_str(), i).is_some() {
                    return bad(format!("edge `{e}` is in two bags"));
                }
            }
        }
        for e in &g.edges {
            let Some(&i) = owner.get(e.id.as_str()) else {
                return bad(format!("edge `{}` is not covered", e.id));
            };
            if e.att.iter().any(|v| !bag_sets[i].contains(v.as_str())) {
                return bad(format!("bag `{}` does not hold the endpoints of `{}`", self.bags[i].id, e.id));
            }
        }
        if owner.len() != g.edges.len() {
            return bad("a bag holds an unknown edge".into());
        }
        if externals.iter().any(|x| !bag_sets[self.root].contains(x.as_str())) {
            return bad("root bag does not hold every external".into());
        }
        Ok(())
    }
}

/// Decomposes `frag` plus a virtual hyperedge over its externals by greedy
/// elimination. Bags are listed root first, in preorder; the root holds all
/// externals. Ties are broken by node order.
pub fn tree_decompose(frag: &Fragment, strategy: Strategy) -> TreeDecomposition {
    let g = &frag.graph;
    let n = g.nodes.len();
    let index = g.node_index();
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    let cliques = g
        .edges
        .iter()
        .map(|e| e.att.iter().map(|v| index[v.as_str()]).collect::<Vec<_>>())
        .chain(std::iter::once(
            frag.externals.iter().map(|v| index[v.as_str()]).collect(),
        ));
    for c in cliques {
        for &a in &c {
            for &b in &c {
                if a != b {
                    adj[a].insert(b);
                }
            }
        }
    }

    // Elimination: bag i is {v_i} plus its neighbours when eliminated.
    let mut alive: BTreeSet<usize> = (0..n).collect();
    let mut order = Vec::with_capacity(n);
    let mut raw_bags: Vec<BTreeSet<usize>> = Vec::with_capacity(n);
    while !alive.is_empty() {
        let v = *alive
            .iter()
            .min_by_key(|&&v| {
                let deg = adj[v].len();
                let score = match strategy {
                    Strategy::MinDegree => deg,
                    Strategy::MinFill => fill_in(&adj, v),
                };
                (score, deg, v)
            })
            .unwrap();
        let nbrs: Vec<usize> = adj[v].iter().copied().collect();
        for &a in &nbrs {
            for &b in &nbrs {
                if a != b {
                    adj[a].insert(b);
                }
            }
            adj[a].remove(&v);
        }
        let mut bag: BTreeSet<usize> = nbrs.into_iter().collect();
        bag.insert(v);
        raw_bags.push(bag);
        order.push(v);
        alive.remove(&v);
    }
    let pos: Vec<usize> = {
        let mut p = vec![0; n];
        for (i, &v) in order.iter().enumerate() {
            p[v] = i;
        }
        p
    };

    // Tree links: bag i hangs below the bag of its earliest-eliminated
    // neighbour; component roots hang below the last bag.
    let mut nbr: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); raw_bags.len()];
    let last = raw_bags.len().saturating_sub(1);
    for i in 0..raw_bags.len() {
        let up = raw_bags[i].iter().filter(|&&u| u != order[i]).map(|&u| pos[u]).min();
        let p = match up {
            Some(p) => Some(p),
            None if i != last => Some(last),
            None => None,
        };
        if let Some(p) = p {
            nbr[i].insert(p);
            nbr[p].insert(i);
        }
    }

    // Merge each bag into a neighbour that contains it.
    let mut live: Vec<bool> = vec![true; raw_bags.len()];
    loop {
        let mut merged = false;
        for i in 0..raw_bags.len() {
            if !live[i] {
                continue;
            }
            let Some(j) = nbr[i].iter().copied().find(|&j| raw_bags[i].is_subset(&raw_bags[j])) else {
                continue;
            };
            let others: Vec<usize> = nbr[i].iter().copied().filter(|&k| k != j).collect();
            for k in others {
                nbr[k].remove(&i);
                nbr[k].insert(j);
                nbr[j].insert(k);
            }
            nbr[j].remove(&i);
            nbr[i].clear();
            live[i] = false;
            merged = true;
        }
        if !merged {
            break;
        }
    }

    let ext: BTreeSet<usize> = frag.externals.iter().map(|v| index[v.as_str()]).collect();
    let root = (0..raw_bags.len())
        .filter(|&i| live[i] && ext.is_subset(&raw_bags[i]))
        .max();
    let Some(root) = root else {
        return TreeDecomposition {
            bags: vec![Bag {
                id: "0".into(),
                nodes: vec![],
                edges: g.edges.iter().map(|e| e.id.clone()).collect(),
            }],
            parent: vec![None],
            root: 0,
        };
    };

    // Preorder from the root; children in creation order.
    let mut bags = Vec::new();
    let mut parent = Vec::new();
    let mut stack: Vec<(usize, Option<usize>, Option<usize>)> = vec![(root, None, None)];
    while let Some((b, raw_parent, p)) = stack.pop() {
        let me = bags.len();
        bags.push(Bag {
            id: me.to_string(),
            nodes: raw_bags[b].iter().map(|&v| g.nodes[v].id.clone()).collect(),
            edges: vec![],
        });
        parent.push(p);
        let kids: Vec<usize> = nbr[b].iter().copied().filter(|&k| Some(k) != raw_parent).collect();
        for k in kids.into_iter().rev() {
            stack.push((k, Some(b), Some(me)));
        }
    }

    for e in &g.edges {
        let i = bags
            .iter()
            .position(|b| e.att.iter().all(|v| b.nodes.contains(v)))
            .expect("every edge is a clique of the elimination graph");
        bags[i].edges.push(e.id.clone());
    }
    TreeDecomposition { bags, parent, root: 0 }
}

fn fill_in(adj: &[BTreeSet<usize>], v: usize) -> usize {
    let nbrs: Vec<usize> = adj[v].iter().copied().collect();
    let mut fill = 0;
    for (i, &a) in nbrs.iter().enumerate() {
        for &b in &nbrs[i + 1..] {
            if !adj[a].contains(&b) {
                fill += 1;
            }
        }
    }
    fill
}

/// The rules produced for one original rule, plus the fresh nonterminals
/// they introduce with their signatures.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorizedRule {
    pub rules: Vec<Rule>,
    pub nonterminals: Vec<(String, Vec<String>)>,
}

/// Splits `rule` along `td`, which must decompose the rule's right-hand side
/// with the externals in the root bag.
pub fn factorize_rule(g: &Fgg, rule: &Rule, td: &TreeDecomposition) -> Result<FactorizedRule, FactorizeError> {
    let rhs = &rule.rhs.graph;
    td.check(rhs, &rule.rhs.externals)?;
    let label_of: HashMap<&str, &str> = rhs.nodes.iter().map(|v| (v.id.as_str(), v.label.as_str())).collect();
    let sets: Vec<HashSet<&str>> = td
        .bags
        .iter()
        .map(|b| b.nodes.iter().map(String::as_str).collect())
        .collect();
    // Shared nodes in the rule's own node order.
    let shared = |a: usize, b: usize| -> Vec<String> {
        rhs.nodes
            .iter()
            .filter(|v| sets[a].contains(v.id.as_str()) && sets[b].contains(v.id.as_str()))
            .map(|v| v.id.clone())
            .collect()
    };

    let mut taken: HashSet<String> = HashSet::new();
    let mut names: Vec<String> = Vec::with_capacity(td.bags.len());
    for (i, b) in td.bags.iter().enumerate() {
        if i == td.root {
            names.push(rule.lhs.clone());
            continue;
        }
        let mut name = g.space.fresh_label(&format!("{}#{}#{}", rule.lhs, rule.id, b.id));
        while taken.contains(&name) || g.is_nonterminal(&name) {
            name.push('\'');
        }
        taken.insert(name.clone());
        names.push(name);
    }

    let mut out = FactorizedRule {
        rules: Vec::with_capacity(td.bags.len()),
        nonterminals: Vec::new(),
    };
    for (i, b) in td.bags.iter().enumerate() {
        let mut h = Hypergraph::new();
        for v in rhs.nodes.iter().filter(|v| sets[i].contains(v.id.as_str())) {
            h.add_node(v.id.clone(), v.label.clone());
        }
        for e in rhs.edges.iter().filter(|e| b.edges.contains(&e.id)) {
            h.edges.push(e.clone());
        }
        let edge_ids: HashSet<String> = rhs.edges.iter().map(|e| e.id.clone()).collect();
        for c in td.children(i) {
            let mut id = format!("#{}", td.bags[c].id);
            while edge_ids.contains(&id) {
                id.push('\'');
            }
            h.add_edge(id, names[c].clone(), shared(i, c));
        }
        let externals = match td.parent[i] {
            None => rule.rhs.externals.clone(),
            Some(p) => shared(p, i),
        };
        if td.parent[i].is_some() {
            let sig = externals.iter().map(|v| label_of[v.as_str()].to_string()).collect();
            out.nonterminals.push((names[i].clone(), sig));
        }
        let id = if i == td.root {
            rule.id.clone()
        } else {
            format!("{}#{}", rule.id, b.id)
        };
        out.rules.push(Rule::new(id, names[i].clone(), Fragment::new(h, externals)));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuleWidth {
    pub rule: String,
    pub nodes: usize,
    pub width: usize,
    pub bags: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorizeReport {
    pub strategy: Strategy,
    pub rules: Vec<RuleWidth>,
}

impl FactorizeReport {
    /// Largest width over all rules.
    pub fn width(&self) -> usize {
        self.rules.iter().map(|r| r.width).max().unwrap_or(0)
    }
}

/// Factorizes every rule of `g`. The result generates the same weighted
/// graphs, and no right-hand side has more than (width + 1) nodes.
pub fn factorize_fgg(g: &Fgg, strategy: Strategy) -> Result<(Fgg, FactorizeReport), FactorizeError> {
    let mut out = g.clone();
    out.rules.clear();
    let mut report = FactorizeReport {
        strategy,
        rules: Vec::new(),
    };
    for r in &g.rules {
        let td = tree_decompose(&r.rhs, strategy);
        let f = factorize_rule(&out, r, &td)?;
        for (name, sig) in &f.nonterminals {
            out.space
                .add_nonterminal(name.clone(), sig.iter().cloned())
                .map_err(GrammarError::from)?;
            out.nonterminals.push(name.clone());
        }
        report.rules.push(RuleWidth {
            rule: r.id.clone(),
            nodes: r.rhs.graph.nodes.len(),
            width: td.width(),
            bags: td.bags.len(),
        });
        out.rules.extend(f.rules);
    }
    Ok((out, report))
}
