//! Sum-product of a single terminal-only factor graph.
//!
//! [`brute_force_sum_product`] enumerates every assignment and serves as the
//! reference. [`variable_elimination`] is an exact alternative for graphs
//! whose assignment space is too large to enumerate but whose treewidth is
//! small.

use std::collections::{BTreeSet, HashMap};

use crate::graph::{flat_index, signature_dims, validate, GraphError, Hypergraph, LabelSpace, Result};
use crate::semiring::Semiring;

pub const DEFAULT_ASSIGNMENT_CAP: usize = 10_000_000;

/// Enumerates all assignments of `g` with the default cap of 10^7.
pub fn brute_force_sum_product(space: &LabelSpace, g: &Hypergraph, semiring: Semiring) -> Result<f64> {
    brute_force_sum_product_capped(space, g, semiring, DEFAULT_ASSIGNMENT_CAP)
}

pub fn brute_force_sum_product_capped(
    space: &LabelSpace,
    g: &Hypergraph,
    semiring: Semiring,
    cap: usize,
) -> Result<f64> {
    validate(space, g)?;
    let dims: Vec<usize> = g
        .nodes
        .iter()
        .map(|n| space.domain_size(&n.label).unwrap_or(0))
        .collect();
    let size: f64 = dims.iter().map(|&d| d as f64).product();
    if size > cap as f64 {
        return Err(GraphError::AssignmentSpaceTooLarge { size, cap });
    }
    let index = g.node_index();
    let mut edges = Vec::with_capacity(g.edges.len());
    for e in &g.edges {
        let f = space
            .factor(&e.label)
            .ok_or_else(|| GraphError::NonterminalEdgePresent(e.id.clone()))?;
        let att: Vec<usize> = e.att.iter().map(|v| index[v.as_str()]).collect();
        edges.push((f, signature_dims(space, &e.label), att));
    }

    let mut xi = vec![0usize; dims.len()];
    let mut total = semiring.zero();
    loop {
        let mut w = semiring.one();
        for (f, edims, att) in &edges {
            w = semiring.mul(w, f.at(flat_index(edims, att.iter().map(|&i| xi[i]))));
            if w == 0.0 {
                break;
            }
        }
        total = semiring.add(total, w);
        if !odometer(&mut xi, &dims) {
            break;
        }
    }
    Ok(total)
}

/// Advances `xi` to the next assignment, last position fastest. Returns
/// false after the final assignment.
#[inline]
pub(crate) fn odometer(xi: &mut [usize], dims: &[usize]) -> bool {
    for i in (0..xi.len()).rev() {
        xi[i] += 1;
        if xi[i] < dims[i] {
            return true;
        }
        xi[i] = 0;
    }
    false
}

/// A dense factor over an ordered list of variables.
#[derive(Debug, Clone)]
struct Factor {
    vars: Vec<usize>,
    values: Vec<f64>,
}

/// Exact sum-product by variable elimination with a greedy min-fill order.
///
/// Fails with [`GraphError::TableTooLarge`] if any intermediate table would
/// exceed `max_table` entries.
pub fn variable_elimination(
    space: &LabelSpace,
    g: &Hypergraph,
    semiring: Semiring,
    max_table: usize,
) -> Result<f64> {
    validate(space, g)?;
    let index = g.node_index();
    let dims: Vec<usize> = g
        .nodes
        .iter()
        .map(|n| space.domain_size(&n.label).unwrap_or(0))
        .collect();

    let mut factors = Vec::with_capacity(g.edges.len());
    for e in &g.edges {
        let f = space
            .factor(&e.label)
            .ok_or_else(|| GraphError::NonterminalEdgePresent(e.id.clone()))?;
        let att: Vec<usize> = e.att.iter().map(|v| index[v.as_str()]).collect();
        factors.push(edge_factor(f.values(), &signature_dims(space, &e.label), &att, &dims));
    }

    let mut remaining: BTreeSet<usize> = (0..dims.len()).collect();
    let mut scalar = semiring.one();
    while let Some(v) = pick_min_fill(&remaining, &factors) {
        remaining.remove(&v);
        let (touching, rest): (Vec<Factor>, Vec<Factor>) =
            factors.into_iter().partition(|f| f.vars.contains(&v));
        factors = rest;
        let mut scope: Vec<usize> = touching
            .iter()
            .flat_map(|f| f.vars.iter().copied())
            .filter(|&u| u != v)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let size: f64 = scope.iter().map(|&u| dims[u] as f64).product::<f64>() * dims[v] as f64;
        if size > max_table as f64 {
            return Err(GraphError::TableTooLarge { size, cap: max_table });
        }
        scope.push(v);
        let joined = product(&touching, &scope, &dims, semiring);
        scope.pop();
        let dv = dims[v];
        let values: Vec<f64> = joined
            .values
            .chunks(dv)
            .map(|row| row.iter().fold(semiring.zero(), |a, &b| semiring.add(a, b)))
            .collect();
        let reduced = Factor { vars: scope, values };
        if reduced.vars.is_empty() {
            scalar = semiring.mul(scalar, reduced.values[0]);
        } else {
            factors.push(reduced);
        }
    }
    for f in factors {
        scalar = semiring.mul(scalar, f.values[0]);
    }
    Ok(scalar)
}

fn edge_factor(table: &[f64], edims: &[usize], att: &[usize], dims: &[usize]) -> Factor {
    // Repeated endpoints collapse onto the diagonal of the table.
    let vars: Vec<usize> = att.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let vdims: Vec<usize> = vars.iter().map(|&u| dims[u]).collect();
    let mut values = Vec::with_capacity(vdims.iter().product());
    let mut xi = vec![0usize; vars.len()];
    loop {
        let lookup = att.iter().map(|a| xi[vars.iter().position(|u| u == a).unwrap()]);
        values.push(table[flat_index(edims, lookup)]);
        if !odometer(&mut xi, &vdims) {
            break;
        }
    }
    Factor { vars, values }
}

fn product(factors: &[Factor], scope: &[usize], dims: &[usize], semiring: Semiring) -> Factor {
    let sdims: Vec<usize> = scope.iter().map(|&u| dims[u]).collect();
    let pos: HashMap<usize, usize> = scope.iter().enumerate().map(|(i, &u)| (u, i)).collect();
    let plans: Vec<(Vec<usize>, Vec<usize>)> = factors
        .iter()
        .map(|f| {
            let p = f.vars.iter().map(|u| pos[u]).collect();
            let d = f.vars.iter().map(|&u| dims[u]).collect();
            (p, d)
        })
        .collect();
    let mut values = Vec::with_capacity(sdims.iter().product());
    let mut xi = vec![0usize; scope.len()];
    loop {
        let mut w = semiring.one();
        for (f, (p, d)) in factors.iter().zip(&plans) {
            w = semiring.mul(w, f.values[flat_index(d, p.iter().map(|&i| xi[i]))]);
        }
        values.push(w);
        if !odometer(&mut xi, &sdims) {
            break;
        }
    }
    Factor {
        vars: scope.to_vec(),
        values,
    }
}

fn pick_min_fill(remaining: &BTreeSet<usize>, factors: &[Factor]) -> Option<usize> {
    let mut best: Option<(usize, usize, usize)> = None;
    for &v in remaining {
        let mut nbrs = BTreeSet::new();
        for f in factors.iter().filter(|f| f.vars.contains(&v)) {
            nbrs.extend(f.vars.iter().copied().filter(|&u| u != v));
        }
        let nbrs: Vec<usize> = nbrs.into_iter().collect();
        let mut fill = 0;
        for (i, &a) in nbrs.iter().enumerate() {
            for &b in &nbrs[i + 1..] {
                if !factors.iter().any(|f| f.vars.contains(&a) && f.vars.contains(&b)) {
                    fill += 1;
                }
            }
        }
        let key = (fill, nbrs.len(), v);
        if best.map_or(true, |b| key < b) {
            best = Some(key);
        }
    }
    best.map(|b| b.2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{assignment_weight, Assignment, FactorFunction};
    use proptest::prelude::*;

    fn bool_space() -> LabelSpace {
        let mut s = LabelSpace::new();
        s.add_node_label("A", ["0", "1"]).unwrap();
        s.add_node_label("C", ["x", "y", "z"]).unwrap();
        s
    }

    #[test]
    fn constant_factor_only() {
        let mut s = bool_space();
        s.add_terminal("c", Vec::<String>::new(), FactorFunction::Constant(0.7))
            .unwrap();
        let mut g = Hypergraph::new();
        g.add_edge("e", "c", Vec::<String>::new());
        assert_eq!(brute_force_sum_product(&s, &g, Semiring::Real).unwrap(), 0.7);
    }

    #[test]
    fn unary_sum_and_max() {
        let mut s = bool_space();
        s.add_terminal("u", ["A"], FactorFunction::Table(vec![0.3, 0.4])).unwrap();
        let mut g = Hypergraph::new();
        g.add_node("1", "A").add_edge("e", "u", ["1"]);
        let real = brute_force_sum_product(&s, &g, Semiring::Real).unwrap();
        assert!((real - 0.7).abs() < 1e-15);
        assert_eq!(brute_force_sum_product(&s, &g, Semiring::Viterbi).unwrap(), 0.4);
    }

    #[test]
    fn two_independent_halves() {
        let mut s = bool_space();
        s.add_terminal("h", ["A"], FactorFunction::Table(vec![0.5, 0.5])).unwrap();
        let mut g = Hypergraph::new();
        g.add_node("1", "A")
            .add_node("2", "A")
            .add_edge("a", "h", ["1"])
            .add_edge("b", "h", ["2"]);
        assert_eq!(brute_force_sum_product(&s, &g, Semiring::Real).unwrap(), 1.0);
    }

    #[test]
    fn cap_is_enforced() {
        let s = bool_space();
        let mut g = Hypergraph::new();
        for i in 0..5 {
            g.add_node(i.to_string(), "A");
        }
        assert!(matches!(
            brute_force_sum_product_capped(&s, &g, Semiring::Real, 16),
            Err(GraphError::AssignmentSpaceTooLarge { .. })
        ));
        assert_eq!(
            brute_force_sum_product_capped(&s, &g, Semiring::Real, 32).unwrap(),
            32.0
        );
    }

    #[test]
    fn elimination_handles_loops_and_repeats() {
        let mut s = bool_space();
        s.add_terminal("p", ["A", "C"], FactorFunction::Table(vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]))
            .unwrap()
            .add_terminal("q", ["C", "C"], FactorFunction::Table((1..=9).map(|x| x as f64 / 10.0).collect()))
            .unwrap();
        let mut g = Hypergraph::new();
        g.add_node("a", "A")
            .add_node("c", "C")
            .add_node("d", "C")
            .add_edge("1", "p", ["a", "c"])
            .add_edge("2", "q", ["c", "d"])
            .add_edge("3", "q", ["d", "d"])
            .add_edge("4", "p", ["a", "d"]);
        for sr in [Semiring::Real, Semiring::Viterbi] {
            let bf = brute_force_sum_product(&s, &g, sr).unwrap();
            let ve = variable_elimination(&s, &g, sr, 1000).unwrap();
            assert!((bf - ve).abs() <= 1e-12 * bf.max(1.0), "{sr}: {bf} vs {ve}");
        }
    }

    fn random_graph() -> impl Strategy<Value = (LabelSpace, Hypergraph)> {
        let edge = (prop::collection::vec(0usize..5, 0..=3), any::<u64>());
        (1usize..=5, prop::collection::vec(edge, 0..6)).prop_map(|(n, edges)| {
            let mut s = bool_space();
            let mut g = Hypergraph::new();
            for i in 0..n {
                g.add_node(format!("v{i}"), if i % 2 == 0 { "A" } else { "C" });
            }
            for (k, (att, seed)) in edges.into_iter().enumerate() {
                let att: Vec<usize> = att.into_iter().map(|a| a % n).collect();
                let sig: Vec<&str> = att.iter().map(|&a| if a % 2 == 0 { "A" } else { "C" }).collect();
                let size: usize = sig.iter().map(|l| if *l == "A" { 2 } else { 3 }).product();
                let mut x = seed;
                let table = (0..size)
                    .map(|_| {
                        x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                        ((x >> 33) % 100) as f64 / 50.0
                    })
                    .collect();
                let label = format!("f{k}");
                if sig.is_empty() {
                    s.add_terminal(label.clone(), sig, FactorFunction::Constant(1.5)).unwrap();
                } else {
                    s.add_terminal(label.clone(), sig, FactorFunction::Table(table)).unwrap();
                }
                g.add_edge(format!("e{k}"), label, att.iter().map(|a| format!("v{a}")));
            }
            (s, g)
        })
    }

    proptest! {
        #[test]
        fn real_dominates_viterbi((s, g) in random_graph()) {
            let real = brute_force_sum_product(&s, &g, Semiring::Real).unwrap();
            let vit = brute_force_sum_product(&s, &g, Semiring::Viterbi).unwrap();
            prop_assert!(real >= vit && vit >= 0.0);
        }

        #[test]
        fn elimination_matches_enumeration((s, g) in random_graph()) {
            for sr in [Semiring::Real, Semiring::Viterbi] {
                let bf = brute_force_sum_product(&s, &g, sr).unwrap();
                let ve = variable_elimination(&s, &g, sr, 1 << 20).unwrap();
                prop_assert!((bf - ve).abs() <= 1e-12 * bf.max(1.0));
            }
        }

        #[test]
        fn constant_factor_scales((s, g) in random_graph(), c in 0.0f64..3.0) {
            let mut s2 = s.clone();
            let name = s2.fresh_label("const");
            s2.add_terminal(name.clone(), Vec::<String>::new(), FactorFunction::Constant(c)).unwrap();
            let mut g2 = g.clone();
            g2.add_edge("extra", name, Vec::<String>::new());
            let before = brute_force_sum_product(&s, &g, Semiring::Real).unwrap();
            let after = brute_force_sum_product(&s2, &g2, Semiring::Real).unwrap();
            prop_assert!((after - c * before).abs() <= 1e-12 * after.abs().max(1.0));
        }

        #[test]
        fn disjoint_union_multiplies((s, g) in random_graph(), (s2, h) in random_graph()) {
            // Rename h's labels so the two spaces can be merged.
            let mut space = s.clone();
            let mut h2 = h.clone();
            for e in &mut h2.edges {
                let l = format!("r.{}", e.label);
                let lab = s2.edge_label(&e.label).unwrap().clone();
                space.add_terminal(l.clone(), lab.signature.clone(), lab.factor.clone().unwrap()).unwrap();
                e.label = l;
            }
            let u = g.disjoint_union(&h2, "r.");
            let zg = brute_force_sum_product(&s, &g, Semiring::Real).unwrap();
            let zh = brute_force_sum_product(&s2, &h, Semiring::Real).unwrap();
            let zu = brute_force_sum_product(&space, &u, Semiring::Real).unwrap();
            prop_assert!((zu - zg * zh).abs() <= 1e-12 * zu.abs().max(1.0));
        }

        #[test]
        fn weight_is_invariant_under_renaming((s, g) in random_graph(), seed in any::<u64>()) {
            let mut xi = Assignment::new();
            let mut r = Assignment::new();
            let mut h = Hypergraph::new();
            for (i, n) in g.nodes.iter().enumerate() {
                let d = s.domain_size(&n.label).unwrap();
                let v = ((seed >> (i * 3)) as usize) % d;
                xi.set(n.id.clone(), v);
                r.set(format!("n{}", g.nodes.len() - i), v);
                h.add_node(format!("n{}", g.nodes.len() - i), n.label.clone());
            }
            let rename: HashMap<&str, String> = g.nodes.iter().enumerate()
                .map(|(i, n)| (n.id.as_str(), format!("n{}", g.nodes.len() - i))).collect();
            for e in g.edges.iter().rev() {
                h.add_edge(format!("x{}", e.id), e.label.clone(), e.att.iter().map(|v| rename[v.as_str()].clone()));
            }
            let a = assignment_weight(&s, &g, &xi).unwrap();
            let b = assignment_weight(&s, &h, &r).unwrap();
            prop_assert!((a - b).abs() <= 1e-14 * a.max(1.0));
        }
    }
}
