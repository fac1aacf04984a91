use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;

use super::{Fgg, GrammarError, Rule};

pub const DEFAULT_RULE_LIMIT: usize = 10_000;

/// The directed graph over nonterminals with an arc `X -> Y` whenever some
/// `X` rule has a `Y`-labeled edge.
#[derive(Debug, Clone, PartialEq)]
pub struct NonterminalGraph {
    pub vertices: Vec<String>,
    pub arcs: BTreeSet<(String, String)>,
    /// Strongly connected components, each sorted by declaration order,
    /// listed so that every component comes after the components it uses.
    pub scc_order: Vec<Vec<String>>,
}

impl NonterminalGraph {
    /// A component is cyclic if it has several members or a self-loop.
    pub fn is_cyclic(&self, scc: &[String]) -> bool {
        scc.len() > 1 || self.arcs.contains(&(scc[0].clone(), scc[0].clone()))
    }

    pub fn scc_index(&self) -> HashMap<&str, usize> {
        self.scc_order
            .iter()
            .enumerate()
            .flat_map(|(i, c)| c.iter().map(move |x| (x.as_str(), i)))
            .collect()
    }
}

pub fn nonterminal_graph(g: &Fgg) -> NonterminalGraph {
    let vertices = g.nonterminals.clone();
    let pos: HashMap<&str, usize> = vertices.iter().enumerate().map(|(i, x)| (x.as_str(), i)).collect();
    let mut arcs = BTreeSet::new();
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); vertices.len()];
    for r in &g.rules {
        let Some(&from) = pos.get(r.lhs.as_str()) else { continue };
        for e in &r.rhs.graph.edges {
            if let Some(&to) = pos.get(e.label.as_str()) {
                if arcs.insert((r.lhs.clone(), e.label.clone())) {
                    succ[from].push(to);
                }
            }
        }
    }
    for s in &mut succ {
        s.sort_unstable();
    }
    let scc_order = tarjan(&succ)
        .into_iter()
        .map(|mut c| {
            c.sort_unstable();
            c.into_iter().map(|i| vertices[i].clone()).collect()
        })
        .collect();
    NonterminalGraph {
        vertices,
        arcs,
        scc_order,
    }
}

/// Iterative Tarjan; components come out in reverse topological order.
fn tarjan(succ: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let n = succ.len();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut out = Vec::new();
    let mut next = 0;
    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut i)) = call.last_mut() {
            if *i < succ[v].len() {
                let w = succ[v][*i];
                *i += 1;
                if index[w] == usize::MAX {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(u, _)) = call.last() {
                    low[u] = low[u].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().unwrap();
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    out.push(comp);
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Recursion {
    Nonrecursive,
    Linear,
    Nonlinear,
}

impl fmt::Display for Recursion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Recursion::Nonrecursive => "nonrecursive",
            Recursion::Linear => "linear",
            Recursion::Nonlinear => "nonlinear",
        })
    }
}

/// Nonlinear iff some rule whose left-hand side lies in a cyclic component
/// has two or more right-hand side edges labeled in that same component.
pub fn classify_recursion(g: &Fgg) -> Recursion {
    let ng = nonterminal_graph(g);
    let comp = ng.scc_index();
    let mut result = Recursion::Nonrecursive;
    for scc in &ng.scc_order {
        if !ng.is_cyclic(scc) {
            continue;
        }
        result = Recursion::Linear;
        let here = comp[scc[0].as_str()];
        for r in g.rules.iter().filter(|r| comp.get(r.lhs.as_str()) == Some(&here)) {
            let inside = r
                .rhs
                .graph
                .edges
                .iter()
                .filter(|e| comp.get(e.label.as_str()) == Some(&here))
                .count();
            if inside >= 2 {
                return Recursion::Nonlinear;
            }
        }
    }
    result
}

/// Nonterminals with at least one finite derivation.
pub fn productive_nonterminals(g: &Fgg) -> HashSet<String> {
    let mut productive = HashSet::new();
    loop {
        let mut changed = false;
        for r in &g.rules {
            if productive.contains(&r.lhs) {
                continue;
            }
            if g.nonterminal_edges(r).all(|e| productive.contains(&e.label)) {
                productive.insert(r.lhs.clone());
                changed = true;
            }
        }
        if !changed {
            return productive;
        }
    }
}

/// Ids of the rules that occur in at least one complete derivation from the
/// start symbol.
pub fn derivable_rules(g: &Fgg) -> BTreeSet<String> {
    let productive = productive_nonterminals(g);
    let usable = |r: &Rule| productive.contains(&r.lhs) && g.nonterminal_edges(r).all(|e| productive.contains(&e.label));
    let mut reachable = BTreeSet::from([g.start.clone()]);
    let mut stack = vec![g.start.clone()];
    while let Some(x) = stack.pop() {
        for r in g.rules_for(&x).filter(|r| usable(r)) {
            for e in g.nonterminal_edges(r) {
                if reachable.insert(e.label.clone()) {
                    stack.push(e.label.clone());
                }
            }
        }
    }
    g.rules
        .iter()
        .filter(|r| reachable.contains(&r.lhs) && usable(r))
        .map(|r| r.id.clone())
        .collect()
}

/// For every nonterminal `Y`, the largest number of `X`-labeled replacement
/// sites in a single `Y`-type derivation, over all `X`. Only rules that can
/// complete a derivation count. Requires an acyclic nonterminal graph.
fn max_sites(g: &Fgg) -> HashMap<String, HashMap<String, usize>> {
    let productive = productive_nonterminals(g);
    let ng = nonterminal_graph(g);
    let mut sites: HashMap<String, HashMap<String, usize>> = HashMap::new();
    for scc in &ng.scc_order {
        let y = &scc[0];
        let mut best: HashMap<String, usize> = HashMap::new();
        for r in g.rules_for(y) {
            if !g.nonterminal_edges(r).all(|e| productive.contains(&e.label)) {
                continue;
            }
            let mut here: HashMap<String, usize> = HashMap::new();
            for e in g.nonterminal_edges(r) {
                *here.entry(e.label.clone()).or_default() += 1;
                for (x, c) in &sites[&e.label] {
                    *here.entry(x.clone()).or_default() += c;
                }
            }
            for (x, c) in here {
                let b = best.entry(x).or_default();
                *b = (*b).max(c);
            }
        }
        sites.insert(y.clone(), best);
    }
    sites
}

/// Nonterminals that can be rewritten twice within one derivation.
fn reentrant_nonterminals(g: &Fgg) -> BTreeSet<String> {
    let sites = max_sites(g);
    sites
        .get(&g.start)
        .map(|m| m.iter().filter(|(_, &c)| c >= 2).map(|(x, _)| x.clone()).collect())
        .unwrap_or_default()
}

/// True iff the grammar is nonrecursive and no derivation rewrites the same
/// nonterminal twice.
pub fn is_nonreentrant(g: &Fgg) -> bool {
    classify_recursion(g) == Recursion::Nonrecursive && reentrant_nonterminals(g).is_empty()
}

/// [`make_nonreentrant_with_limit`] with the default limit of 10,000 rules.
pub fn make_nonreentrant(g: &Fgg) -> Result<Fgg, GrammarError> {
    make_nonreentrant_with_limit(g, DEFAULT_RULE_LIMIT)
}

/// Rewrites a nonrecursive grammar into an equivalent nonreentrant one.
///
/// Every reentrant nonterminal is replaced by one copy per occurrence: the
/// `k`-th `Y` edge (counting only `Y` edges) in a rule of copy `C` becomes
/// `Y@C/k`, and the rules of each copy are cloned with ids `rule@copy`.
/// Rules of other nonterminals are kept once, under their own names.
pub fn make_nonreentrant_with_limit(g: &Fgg, limit: usize) -> Result<Fgg, GrammarError> {
    if classify_recursion(g) != Recursion::Nonrecursive {
        return Err(GrammarError::RecursiveInput);
    }
    let split = reentrant_nonterminals(g);
    if split.is_empty() {
        return Ok(g.clone());
    }
    let mut out = g.clone();
    out.rules.clear();
    out.nonterminals.retain(|x| !split.contains(x));

    // (copy name, original nonterminal)
    let mut queue: VecDeque<(String, String)> = VecDeque::new();
    let mut seen: HashSet<String> = HashSet::new();
    for x in &g.nonterminals {
        if !split.contains(x) {
            queue.push_back((x.clone(), x.clone()));
            seen.insert(x.clone());
        }
    }
    while let Some((copy, orig)) = queue.pop_front() {
        for r in g.rules_for(&orig) {
            let mut rule = Rule {
                id: if copy == orig { r.id.clone() } else { format!("{}@{copy}", r.id) },
                lhs: copy.clone(),
                rhs: r.rhs.clone(),
            };
            let mut counts: HashMap<String, usize> = HashMap::new();
            for e in &mut rule.rhs.graph.edges {
                if !split.contains(&e.label) {
                    continue;
                }
                let k = counts.entry(e.label.clone()).or_default();
                let child = format!("{}@{copy}/{k}", e.label);
                *k += 1;
                if seen.insert(child.clone()) {
                    let sig = g.space.signature(&e.label).unwrap_or(&[]).to_vec();
                    out.space.add_nonterminal(child.clone(), sig)?;
                    out.nonterminals.push(child.clone());
                    queue.push_back((child.clone(), e.label.clone()));
                }
                e.label = child;
            }
            out.rules.push(rule);
            if out.rules.len() > limit {
                log::warn!("unsharing exceeds {limit} rules");
                return Err(GrammarError::BlowupLimitExceeded { limit });
            }
        }
    }
    Ok(out)
}
