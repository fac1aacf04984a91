use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::rc::Rc;

use super::{analysis::productive_nonterminals, Fgg, GrammarError};
use crate::factorize::{Bag, TreeDecomposition};
use crate::graph::{validate, Fragment, Hypergraph};

/// A derivation: a rule, plus one subderivation for every nonterminal edge
/// of its right-hand side, keyed by edge id.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DerivationTree {
    pub rule: String,
    pub children: BTreeMap<String, DerivationTree>,
}

impl DerivationTree {
    pub fn leaf(rule: impl Into<String>) -> Self {
        DerivationTree {
            rule: rule.into(),
            children: BTreeMap::new(),
        }
    }

    pub fn with_child(mut self, edge: impl Into<String>, child: DerivationTree) -> Self {
        self.children.insert(edge.into(), child);
        self
    }

    /// Number of levels; a single rule has height 1.
    pub fn height(&self) -> usize {
        1 + self.children.values().map(|c| c.height()).max().unwrap_or(0)
    }

    pub fn size(&self) -> usize {
        1 + self.children.values().map(|c| c.size()).sum::<usize>()
    }

    /// Rule ids in preorder.
    pub fn rules(&self) -> Vec<&str> {
        let mut out = vec![self.rule.as_str()];
        for c in self.children.values() {
            out.extend(c.rules());
        }
        out
    }

    fn write_indented(&self, f: &mut fmt::Formatter<'_>, depth: usize, edge: Option<&str>) -> fmt::Result {
        let pad = "  ".repeat(depth);
        match edge {
            Some(e) => writeln!(f, "{pad}{e}: {}", self.rule)?,
            None => writeln!(f, "{pad}{}", self.rule)?,
        }
        for (e, c) in &self.children {
            c.write_indented(f, depth + 1, Some(e))?;
        }
        Ok(())
    }
}

impl fmt::Display for DerivationTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_indented(f, 0, None)
    }
}

fn join(path: &str, id: &str) -> String {
    if path.is_empty() {
        id.to_string()
    } else {
        format!("{path}/{id}")
    }
}

struct Visit {
    path: String,
    parent: Option<usize>,
    nodes: Vec<String>,
    edges: Vec<String>,
}

struct Deriver<'a> {
    g: &'a Fgg,
    out: Hypergraph,
    visits: Vec<Visit>,
}

impl Deriver<'_> {
    fn invalid(path: &str, reason: impl Into<String>) -> GrammarError {
        GrammarError::InvalidDerivation {
            path: if path.is_empty() { "/".into() } else { path.to_string() },
            reason: reason.into(),
        }
    }

    fn expand(
        &mut self,
        d: &DerivationTree,
        path: &str,
        expected_lhs: Option<&str>,
        ext_ids: Option<&[String]>,
        parent: Option<usize>,
    ) -> Result<(), GrammarError> {
        let rule = self
            .g
            .rule(&d.rule)
            .ok_or_else(|| Self::invalid(path, format!("unknown rule `{}`", d.rule)))?;
        if let Some(lhs) = expected_lhs {
            if rule.lhs != lhs {
                return Err(Self::invalid(
                    path,
                    format!("rule `{}` rewrites `{}`, expected `{lhs}`", rule.id, rule.lhs),
                ));
            }
        }
        let mut map: HashMap<&str, String> = HashMap::new();
        if let Some(ext) = ext_ids {
            if ext.len() != rule.rhs.externals.len() {
                return Err(Self::invalid(path, "external count mismatch"));
            }
            for (x, id) in rule.rhs.externals.iter().zip(ext) {
                map.insert(x.as_str(), id.clone());
            }
        }
        for n in &rule.rhs.graph.nodes {
            if !map.contains_key(n.id.as_str()) {
                let id = join(path, &n.id);
                self.out.add_node(id.clone(), n.label.clone());
                map.insert(n.id.as_str(), id);
            }
        }
        let me = self.visits.len();
        let mut nodes: Vec<String> = rule.rhs.graph.nodes.iter().map(|n| map[n.id.as_str()].clone()).collect();
        nodes.dedup();
        self.visits.push(Visit {
            path: path.to_string(),
            parent,
            nodes,
            edges: Vec::new(),
        });

        let mut used = 0;
        for e in &rule.rhs.graph.edges {
            let att: Vec<String> = e.att.iter().map(|v| map[v.as_str()].clone()).collect();
            if self.g.is_nonterminal(&e.label) {
                let child = d
                    .children
                    .get(&e.id)
                    .ok_or_else(|| Self::invalid(path, format!("no subderivation for edge `{}`", e.id)))?;
                used += 1;
                self.expand(child, &join(path, &e.id), Some(&e.label), Some(&att), Some(me))?;
            } else {
                let id = join(path, &e.id);
                self.out.add_edge(id.clone(), e.label.clone(), att);
                self.visits[me].edges.push(id);
            }
        }
        if used != d.children.len() {
            let extra = d
                .children
                .keys()
                .find(|k| {
                    rule.rhs
                        .graph
                        .edge(k)
                        .map_or(true, |e| !self.g.is_nonterminal(&e.label))
                })
                .cloned()
                .unwrap_or_default();
            return Err(Self::invalid(path, format!("`{extra}` is not a nonterminal edge")));
        }
        Ok(())
    }
}

fn run<'a>(g: &'a Fgg, d: &DerivationTree, lhs: Option<&str>) -> Result<Deriver<'a>, GrammarError> {
    let mut dv = Deriver {
        g,
        out: Hypergraph::new(),
        visits: Vec::new(),
    };
    dv.expand(d, "", lhs, None, None)?;
    validate(&g.space, &dv.out).map_err(|e| Deriver::invalid("", e.to_string()))?;
    Ok(dv)
}

/// The graph derived by an `S`-type derivation.
///
/// A node `v` created by the subderivation at tree path `p` gets id `p/v`,
/// where a path lists the nonterminal edge ids from the root. Root nodes keep
/// their ids, as do edges under the same scheme.
pub fn derive(g: &Fgg, d: &DerivationTree) -> Result<Hypergraph, GrammarError> {
    Ok(run(g, d, Some(&g.start))?.out)
}

/// The fragment derived by a derivation of any type; externals are those of
/// the root rule.
pub fn derive_fragment(g: &Fgg, d: &DerivationTree) -> Result<Fragment, GrammarError> {
    let dv = run(g, d, None)?;
    let rule = g.rule(&d.rule).expect("checked by run");
    Ok(Fragment::new(dv.out, rule.rhs.externals.clone()))
}

/// The derived graph together with the tree decomposition read off the
/// derivation: one bag per derivation tree node, holding the nodes of that
/// rule's right-hand side and the terminal edges it introduced.
pub fn derivation_decomposition(
    g: &Fgg,
    d: &DerivationTree,
) -> Result<(Hypergraph, TreeDecomposition), GrammarError> {
    let dv = run(g, d, Some(&g.start))?;
    let bags = dv
        .visits
        .iter()
        .map(|v| Bag {
            id: if v.path.is_empty() { "/".into() } else { v.path.clone() },
            nodes: v.nodes.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect(),
            edges: v.edges.clone(),
        })
        .collect();
    let parent = dv.visits.iter().map(|v| v.parent).collect();
    Ok((dv.out, TreeDecomposition { bags, parent, root: 0 }))
}

/// Result of [`enumerate_derivations`].
#[derive(Debug, Clone, PartialEq)]
pub struct Enumeration {
    pub trees: Vec<DerivationTree>,
    /// More derivations within the depth bound exist than were returned.
    pub truncated: bool,
    /// Some derivation is taller than the depth bound.
    pub depth_limited: bool,
}

struct Listing {
    trees: Rc<Vec<DerivationTree>>,
    count_complete: bool,
    depth_complete: bool,
}

struct Enumerator<'a> {
    g: &'a Fgg,
    productive: HashSet<String>,
    max_count: usize,
    memo: HashMap<(String, usize), Rc<Listing>>,
}

impl Enumerator<'_> {
    fn list(&mut self, x: &str, depth: usize) -> Rc<Listing> {
        if let Some(l) = self.memo.get(&(x.to_string(), depth)) {
            return l.clone();
        }
        let listing = if depth == 0 {
            Listing {
                trees: Rc::new(Vec::new()),
                count_complete: true,
                depth_complete: !self.productive.contains(x),
            }
        } else {
            let mut out = Vec::new();
            let mut count_complete = true;
            let mut depth_complete = true;
            let g = self.g;
            for rule in g.rules_for(x) {
                let edges: Vec<(String, String)> = g
                    .nonterminal_edges(rule)
                    .map(|e| (e.id.clone(), e.label.clone()))
                    .collect();
                let subs: Vec<Rc<Listing>> = edges.iter().map(|(_, l)| self.list(l, depth - 1)).collect();
                if subs.iter().any(|s| s.trees.is_empty() && s.count_complete && s.depth_complete) {
                    continue;
                }
                depth_complete &= subs.iter().all(|s| s.depth_complete);
                let any_empty = subs.iter().any(|s| s.trees.is_empty());
                if !any_empty {
                    count_complete &= subs.iter().all(|s| s.count_complete);
                }
                product(rule.id.as_str(), &edges, &subs, self.max_count, &mut out);
                if out.len() > self.max_count {
                    out.truncate(self.max_count);
                    count_complete = false;
                }
            }
            Listing {
                trees: Rc::new(out),
                count_complete,
                depth_complete,
            }
        };
        let rc = Rc::new(listing);
        self.memo.insert((x.to_string(), depth), rc.clone());
        rc
    }
}

/// Appends the product of the child listings, first edge varying slowest,
/// stopping once `out` holds more than `cap` trees.
fn product(
    rule: &str,
    edges: &[(String, String)],
    subs: &[Rc<Listing>],
    cap: usize,
    out: &mut Vec<DerivationTree>,
) {
    let dims: Vec<usize> = subs.iter().map(|s| s.trees.len()).collect();
    if dims.contains(&0) {
        return;
    }
    let mut idx = vec![0usize; dims.len()];
    loop {
        let mut t = DerivationTree::leaf(rule);
        for (k, (eid, _)) in edges.iter().enumerate() {
            t.children.insert(eid.clone(), subs[k].trees[idx[k]].clone());
        }
        out.push(t);
        if out.len() > cap || !crate::eval::odometer(&mut idx, &dims) {
            return;
        }
    }
}

/// All `S`-type derivations of height at most `max_depth`, rules in
/// declaration order and the first nonterminal edge varying slowest, cut off
/// after `max_count` trees.
pub fn enumerate_derivations(g: &Fgg, max_depth: usize, max_count: usize) -> Enumeration {
    let mut en = Enumerator {
        g,
        productive: productive_nonterminals(g),
        max_count,
        memo: HashMap::new(),
    };
    let l = en.list(&g.start, max_depth);
    Enumeration {
        trees: l.trees.as_ref().clone(),
        truncated: !l.count_complete,
        depth_limited: !l.depth_complete,
    }
}
