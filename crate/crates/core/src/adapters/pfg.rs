use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use super::AdapterError;
use crate::fixtures::NONE;
use crate::grammar::{Fgg, Rule};
use crate::graph::{validate, Fragment, Hypergraph, LabelSpace};

/// A plated factor graph with a count for every plate.
///
/// `membership` gives the plates of a node or edge by id; ids it does not
/// mention are in no plate.
#[derive(Debug, Clone, PartialEq)]
pub struct Pfg {
    pub space: LabelSpace,
    pub graph: Hypergraph,
    pub plates: Vec<String>,
    pub membership: BTreeMap<String, BTreeSet<String>>,
    pub counts: BTreeMap<String, usize>,
}

type Plates = BTreeSet<String>;

impl Pfg {
    pub fn plates_of(&self, id: &str) -> Plates {
        self.membership.get(id).cloned().unwrap_or_default()
    }

    pub fn validate(&self) -> Result<(), AdapterError> {
        validate(&self.space, &self.graph)?;
        let invalid = |m: String| Err(AdapterError::InvalidPfg(m));
        let known: HashSet<&str> = self.plates.iter().map(String::as_str).collect();
        if known.len() != self.plates.len() {
            return invalid("duplicate plate".into());
        }
        for b in &self.plates {
            match self.counts.get(b) {
                Some(&m) if m > 0 => {}
                _ => return invalid(format!("plate `{b}` needs a positive count")),
            }
        }
        let nodes: HashSet<&str> = self.graph.nodes.iter().map(|v| v.id.as_str()).collect();
        if let Some(e) = self.graph.edges.iter().find(|e| nodes.contains(e.id.as_str())) {
            return invalid(format!("`{}` is both a node and an edge", e.id));
        }
        for (id, ps) in &self.membership {
            if self.graph.node(id).is_none() && self.graph.edge(id).is_none() {
                return invalid(format!("membership of unknown `{id}`"));
            }
            if let Some(b) = ps.iter().find(|b| !known.contains(b.as_str())) {
                return invalid(format!("unknown plate `{b}`"));
            }
        }
        for e in &self.graph.edges {
            let pe = self.plates_of(&e.id);
            for v in &e.att {
                if !self.plates_of(v).is_subset(&pe) {
                    return invalid(format!("factor `{}` is outside a plate of `{v}`", e.id));
                }
            }
        }
        Ok(())
    }
}

/// All index tuples over `plates`, 1-based, first plate slowest.
fn copies(plates: &Plates, counts: &BTreeMap<String, usize>) -> Vec<BTreeMap<String, usize>> {
    let mut out = vec![BTreeMap::new()];
    for b in plates {
        out = out
            .into_iter()
            .flat_map(|m| {
                (1..=counts[b]).map(move |i| {
                    let mut m = m.clone();
                    m.insert(b.clone(), i);
                    m
                })
            })
            .collect();
    }
    out
}

fn copy_id(id: &str, index: &BTreeMap<String, usize>) -> String {
    if index.is_empty() {
        return id.to_string();
    }
    let parts: Vec<String> = index.iter().map(|(b, i)| format!("{b}={i}")).collect();
    format!("{id}@{}", parts.join(","))
}

/// The unrolled factor graph. A copy of `v` for plate indices `b=i, ...` has
/// id `v@b=i,...`.
pub fn unroll_pfg(pfg: &Pfg) -> Result<Hypergraph, AdapterError> {
    pfg.validate()?;
    let mut h = Hypergraph::new();
    for v in &pfg.graph.nodes {
        for ix in copies(&pfg.plates_of(&v.id), &pfg.counts) {
            h.add_node(copy_id(&v.id, &ix), v.label.clone());
        }
    }
    for e in &pfg.graph.edges {
        for ix in copies(&pfg.plates_of(&e.id), &pfg.counts) {
            let att = e.att.iter().map(|v| {
                let pv = pfg.plates_of(v);
                let sub = ix.iter().filter(|(b, _)| pv.contains(*b)).map(|(b, i)| (b.clone(), *i)).collect();
                copy_id(v, &sub)
            });
            h.add_edge(copy_id(&e.id, &ix), e.label.clone(), att.collect::<Vec<_>>());
        }
    }
    Ok(h)
}

#[derive(Clone)]
struct Item {
    id: String,
    label: String,
    att: Vec<String>,
    plates: Plates,
}

/// Names `A`, `B`, ... skipping `S`, then `X27`, `X28`, ...
fn name(k: usize) -> String {
    let letters: Vec<char> = ('A'..='Z').filter(|&c| c != 'S').collect();
    match letters.get(k) {
        Some(c) => c.to_string(),
        None => format!("X{}", k + 2),
    }
}

fn fresh_id(taken: impl Fn(&str) -> bool, base: &str) -> String {
    let mut id = base.to_string();
    while taken(&id) {
        id.push('\'');
    }
    id
}

/// Converts a plated factor graph with its counts into a grammar that
/// generates exactly its unrolling.
///
/// Repeatedly takes the first edge with the most plates, `L`, and replaces
/// each connected component of the part of the graph whose plate set is
/// exactly `L` by a nonterminal edge `X^n` on the component's outside
/// neighbours, where `n` multiplies the counts of the plates in `L` that no
/// neighbour is in. `X^i` rewrites to one copy of the component plus
/// `X^(i-1)`, and `X^0` to nothing. Fails with
/// [`AdapterError::NotConvertible`] when the neighbours cover all of `L`.
pub fn pfg_to_fgg(pfg: &Pfg) -> Result<Fgg, AdapterError> {
    pfg.validate()?;
    let mut space = pfg.space.clone();
    let start = space.fresh_label("S");
    space.add_nonterminal(start.clone(), NONE)?;
    let mut nodes: Vec<Item> = pfg
        .graph
        .nodes
        .iter()
        .map(|v| Item {
            id: v.id.clone(),
            label: v.label.clone(),
            att: vec![],
            plates: pfg.plates_of(&v.id),
        })
        .collect();
    let mut edges: Vec<Item> = pfg
        .graph
        .edges
        .iter()
        .map(|e| Item {
            id: e.id.clone(),
            label: e.label.clone(),
            att: e.att.clone(),
            plates: pfg.plates_of(&e.id),
        })
        .collect();
    let mut rules = Vec::new();
    let mut k = 0;

    loop {
        // an isolated plated node has no edge to pick it
        let picked = edges
            .iter()
            .filter(|e| !e.plates.is_empty())
            .fold(None::<&Item>, |best, e| match best {
                Some(b) if b.plates.len() >= e.plates.len() => Some(b),
                _ => Some(e),
            })
            .or_else(|| nodes.iter().find(|v| !v.plates.is_empty()));
        let l = match picked {
            Some(it) => it.plates.clone(),
            None => break,
        };
        let mut gone_nodes: HashSet<String> = HashSet::new();
        let mut gone_edges: HashSet<String> = HashSet::new();
        let mut added = Vec::new();
        for (cn, ce) in components(&nodes, &edges, &l) {
            let inside: HashSet<&str> = cn.iter().map(|&i| nodes[i].id.as_str()).collect();
            let mut outside: Vec<&str> = Vec::new();
            for &j in &ce {
                for v in &edges[j].att {
                    if !inside.contains(v.as_str()) && !outside.contains(&v.as_str()) {
                        outside.push(v);
                    }
                }
            }
            let pos: HashMap<&str, usize> = nodes.iter().enumerate().map(|(i, v)| (v.id.as_str(), i)).collect();
            outside.sort_by_key(|v| pos[v]);
            let ext: Vec<&Item> = outside.iter().map(|v| &nodes[pos[v]]).collect();
            let l2: Plates = ext.iter().flat_map(|v| v.plates.iter().cloned()).collect();
            if l2 == l {
                let what: Vec<&str> = ce.iter().map(|&j| edges[j].id.as_str()).collect();
                return Err(AdapterError::NotConvertible(format!(
                    "factors {what:?} share all their plates {l:?} with their neighbours"
                )));
            }
            let n: usize = l.difference(&l2).map(|b| pfg.counts[b]).product();

            let mut x = name(k);
            k += 1;
            while x == start || (0..=n).any(|i| space.has_edge_label(&format!("{x}^{i}"))) {
                x = name(k);
                k += 1;
            }
            let xi = |i: usize| format!("{x}^{i}");
            let sig: Vec<String> = ext.iter().map(|v| v.label.clone()).collect();
            for i in 0..=n {
                space.add_nonterminal(xi(i), &sig)?;
            }
            let ext_ids: Vec<String> = ext.iter().map(|v| v.id.clone()).collect();
            let comp_edge_ids: HashSet<&str> = ce.iter().map(|&j| edges[j].id.as_str()).collect();
            let next = fresh_id(|s| comp_edge_ids.contains(s), "next");
            for i in (1..=n).rev() {
                let mut h = Hypergraph::new();
                for v in &ext {
                    h.add_node(v.id.clone(), v.label.clone());
                }
                for &c in &cn {
                    h.add_node(nodes[c].id.clone(), nodes[c].label.clone());
                }
                for &j in &ce {
                    h.add_edge(edges[j].id.clone(), edges[j].label.clone(), &edges[j].att);
                }
                h.add_edge(next.clone(), xi(i - 1), &ext_ids);
                rules.push(Rule::new(xi(i), xi(i), Fragment::new(h, ext_ids.clone())));
            }
            let mut h = Hypergraph::new();
            for v in &ext {
                h.add_node(v.id.clone(), v.label.clone());
            }
            rules.push(Rule::new(xi(0), xi(0), Fragment::new(h, ext_ids.clone())));

            gone_nodes.extend(cn.iter().map(|&i| nodes[i].id.clone()));
            gone_edges.extend(comp_edge_ids.iter().map(|s| s.to_string()));
            let taken = |s: &str| edges.iter().any(|e| e.id == s) || added.iter().any(|e: &Item| e.id == s);
            let id = fresh_id(taken, &x);
            added.push(Item {
                id,
                label: xi(n),
                att: ext_ids,
                plates: l2,
            });
        }
        nodes.retain(|v| !gone_nodes.contains(&v.id));
        edges.retain(|e| !gone_edges.contains(&e.id));
        edges.extend(added);
    }

    let mut h = Hypergraph::new();
    for v in &nodes {
        h.add_node(v.id.clone(), v.label.clone());
    }
    for e in &edges {
        h.add_edge(e.id.clone(), e.label.clone(), &e.att);
    }
    rules.push(Rule::new(start.clone(), start.clone(), Fragment::new(h, vec![])));
    Ok(Fgg::from_parts(space, rules, start))
}

/// Connected components of the nodes and edges whose plate set is `l`,
/// as (node indices, edge indices), ordered by their smallest node id (or
/// edge id, for components without nodes).
fn components(nodes: &[Item], edges: &[Item], l: &Plates) -> Vec<(Vec<usize>, Vec<usize>)> {
    let vn: Vec<usize> = (0..nodes.len()).filter(|&i| nodes[i].plates == *l).collect();
    let ve: Vec<usize> = (0..edges.len()).filter(|&j| edges[j].plates == *l).collect();
    // union-find over nodes then edges
    let mut parent: Vec<usize> = (0..vn.len() + ve.len()).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let slot: HashMap<&str, usize> = vn.iter().enumerate().map(|(k, &i)| (nodes[i].id.as_str(), k)).collect();
    for (k, &j) in ve.iter().enumerate() {
        for v in &edges[j].att {
            if let Some(&s) = slot.get(v.as_str()) {
                let (a, b) = (find(&mut parent, vn.len() + k), find(&mut parent, s));
                parent[a] = b;
            }
        }
    }
    let mut groups: BTreeMap<usize, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (k, &i) in vn.iter().enumerate() {
        groups.entry(find(&mut parent, k)).or_default().0.push(i);
    }
    for (k, &j) in ve.iter().enumerate() {
        groups.entry(find(&mut parent, vn.len() + k)).or_default().1.push(j);
    }
    let mut out: Vec<(Vec<usize>, Vec<usize>)> = groups.into_values().collect();
    out.sort_by_key(|(cn, ce)| {
        let node_min = cn.iter().map(|&i| nodes[i].id.clone()).min();
        let edge_min = ce.iter().map(|&j| edges[j].id.clone()).min();
        (node_min.is_none(), node_min.or(edge_min))
    });
    out
}
