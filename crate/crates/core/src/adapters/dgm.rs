use std::collections::HashSet;

use super::AdapterError;
use crate::grammar::{Fgg, Rule};
use crate::graph::{validate, Edge, Fragment, Hypergraph, LabelSpace};

/// A dynamic graphical model: a first slice, a repeated slice and a last
/// slice, plus binary factors from the first slice into the repeated one,
/// between consecutive repeated slices, and from the repeated slice into the
/// last one. Cross edges are `[source, target]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dgm {
    pub space: LabelSpace,
    pub h1: Hypergraph,
    pub h2: Hypergraph,
    pub h3: Hypergraph,
    pub e12: Vec<Edge>,
    pub e22: Vec<Edge>,
    pub e23: Vec<Edge>,
}

impl Dgm {
    pub fn validate(&self) -> Result<(), AdapterError> {
        for h in [&self.h1, &self.h2, &self.h3] {
            validate(&self.space, h)?;
            if let Some(e) = h.edges.iter().find(|e| e.att.len() != 2) {
                return Err(AdapterError::NonBinaryFactor(e.id.clone()));
            }
        }
        for (name, edges, from, to) in [
            ("e12", &self.e12, &self.h1, &self.h2),
            ("e22", &self.e22, &self.h2, &self.h2),
            ("e23", &self.e23, &self.h2, &self.h3),
        ] {
            let mut ids = HashSet::new();
            for e in edges {
                if !ids.insert(&e.id) {
                    return Err(AdapterError::InvalidCrossEdge(format!("duplicate id `{}` in {name}", e.id)));
                }
                if e.att.len() != 2 {
                    return Err(AdapterError::NonBinaryFactor(e.id.clone()));
                }
                let (u, v) = match (from.node(&e.att[0]), to.node(&e.att[1])) {
                    (Some(u), Some(v)) => (u, v),
                    _ => {
                        return Err(AdapterError::InvalidCrossEdge(format!(
                            "{name} edge `{}` does not join the right slices",
                            e.id
                        )))
                    }
                };
                let sig = self
                    .space
                    .factor(&e.label)
                    .and(self.space.signature(&e.label))
                    .ok_or_else(|| AdapterError::InvalidCrossEdge(format!("`{}` is not a terminal", e.label)))?;
                if sig != [u.label.clone(), v.label.clone()] {
                    return Err(AdapterError::InvalidCrossEdge(format!(
                        "{name} edge `{}` has the wrong endpoint labels",
                        e.id
                    )));
                }
            }
        }
        Ok(())
    }

    /// Repeated-slice sources of the `e22` edges, in first-use order.
    fn carried(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for e in &self.e22 {
            if !out.contains(&e.att[0]) {
                out.push(e.att[0].clone());
            }
        }
        out
    }
}

fn add_slice(out: &mut Hypergraph, h: &Hypergraph, prefix: &str) {
    for v in &h.nodes {
        out.add_node(format!("{prefix}/{}", v.id), v.label.clone());
    }
    for e in &h.edges {
        out.add_edge(
            format!("{prefix}/{}", e.id),
            e.label.clone(),
            e.att.iter().map(|v| format!("{prefix}/{v}")),
        );
    }
}

fn add_cross(out: &mut Hypergraph, edges: &[Edge], prefix: &str, from: &str, to: &str) {
    for e in edges {
        out.add_edge(
            format!("{prefix}/{}", e.id),
            e.label.clone(),
            [format!("{from}/{}", e.att[0]), format!("{to}/{}", e.att[1])],
        );
    }
}

/// The unrolled factor graph: slice 1, `n` copies of slice 2 (prefixed
/// `2.1` to `2.n`) and slice 3.
pub fn unroll_dgm(dgm: &Dgm, n: usize) -> Result<Hypergraph, AdapterError> {
    dgm.validate()?;
    if n < 2 {
        return Err(AdapterError::InvalidLength(n));
    }
    let mut h = Hypergraph::new();
    add_slice(&mut h, &dgm.h1, "1");
    for i in 1..=n {
        add_slice(&mut h, &dgm.h2, &format!("2.{i}"));
    }
    add_slice(&mut h, &dgm.h3, "3");
    add_cross(&mut h, &dgm.e12, "12", "1", "2.1");
    for i in 2..=n {
        add_cross(&mut h, &dgm.e22, &format!("22.{i}"), &format!("2.{}", i - 1), &format!("2.{i}"));
    }
    add_cross(&mut h, &dgm.e23, "23", &format!("2.{n}"), "3");
    Ok(h)
}

/// A grammar generating exactly the unrolling by `n`.
///
/// The start rule holds slices 1 and 2; `A^i` adds one more copy of slice 2
/// with `i` copies left to go; `A^1` also adds slice 3. The externals of the
/// `A` rules are the previous copies of the `e22` sources, prefixed `p`.
pub fn dgm_to_fgg(dgm: &Dgm, n: usize) -> Result<Fgg, AdapterError> {
    dgm.validate()?;
    if n < 2 {
        return Err(AdapterError::InvalidLength(n));
    }
    let mut space = dgm.space.clone();
    let start = space.fresh_label("S");
    let mut base = "A".to_string();
    while (0..n).any(|i| space.has_edge_label(&format!("{base}^{i}")) || space.has_node_label(&format!("{base}^{i}")))
        || base == start
    {
        base.push('\'');
    }
    let a = |i: usize| format!("{base}^{i}");
    let carried = dgm.carried();
    let sig: Vec<String> = carried
        .iter()
        .map(|u| dgm.h2.node(u).expect("validated").label.clone())
        .collect();
    space.add_nonterminal(start.clone(), crate::fixtures::NONE)?;
    for i in 1..n {
        space.add_nonterminal(a(i), &sig)?;
    }
    let at = |prefix: &str| carried.iter().map(|u| format!("{prefix}/{u}")).collect::<Vec<_>>();

    let mut rules = Vec::new();
    let mut h = Hypergraph::new();
    add_slice(&mut h, &dgm.h1, "1");
    add_slice(&mut h, &dgm.h2, "2");
    add_cross(&mut h, &dgm.e12, "12", "1", "2");
    h.add_edge("next", a(n - 1), at("2"));
    rules.push(Rule::new(start.clone(), start.clone(), Fragment::new(h, vec![])));

    for i in (1..n).rev() {
        let mut h = Hypergraph::new();
        for (u, l) in carried.iter().zip(&sig) {
            h.add_node(format!("p/{u}"), l.clone());
        }
        add_slice(&mut h, &dgm.h2, "2");
        add_cross(&mut h, &dgm.e22, "22", "p", "2");
        if i == 1 {
            add_slice(&mut h, &dgm.h3, "3");
            add_cross(&mut h, &dgm.e23, "23", "2", "3");
        } else {
            h.add_edge("next", a(i - 1), at("2"));
        }
        rules.push(Rule::new(a(i), a(i), Fragment::new(h, at("p"))));
    }
    Ok(Fgg::from_parts(space, rules, start))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::brute_force_sum_product;
    use crate::graph::FactorFunction;
    use crate::grammar::{derive, enumerate_derivations};
    use crate::inference::{solve_sum_product, SolverConfig};
    use crate::semiring::Semiring;

    fn edge(id: &str, label: &str, u: &str, v: &str) -> Edge {
        Edge {
            id: id.into(),
            label: label.into(),
            att: vec![u.into(), v.into()],
        }
    }

    fn five_node(table: Vec<f64>) -> Dgm {
        crate::fixtures::dgm_five(table.try_into().unwrap())
    }

    fn single(g: &Fgg) -> Hypergraph {
        let en = enumerate_derivations(g, 64, 2);
        assert_eq!(en.trees.len(), 1);
        derive(g, &en.trees[0]).unwrap()
    }

    #[test]
    fn five_node_example_shape() {
        let d = five_node(vec![0.5, 1.0, 0.25, 2.0]);
        let g = dgm_to_fgg(&d, 2).unwrap();
        assert_eq!(g.rules.len(), 2);
        assert_eq!(g.space.signature("A^1").unwrap().len(), 3);
        let h = single(&g);
        assert_eq!(h.nodes.len(), 20);
        assert_eq!(h.edges.len(), 6 * 4 + 4 * 3);
        let u = unroll_dgm(&d, 2).unwrap();
        assert_eq!((u.nodes.len(), u.edges.len()), (20, 36));
    }

    #[test]
    fn matches_unrolling() {
        let d = five_node(vec![0.9, 0.3, 0.6, 1.1]);
        for n in 2..=4 {
            let g = dgm_to_fgg(&d, n).unwrap();
            assert_eq!(g.rules.len(), n);
            let u = unroll_dgm(&d, n).unwrap();
            let direct = crate::eval::variable_elimination(&d.space, &u, Semiring::Real, 1 << 20).unwrap();
            let z = solve_sum_product(&g, Semiring::Real, &SolverConfig::default()).unwrap().z;
            assert!((z - direct).abs() <= 1e-9 * direct, "n={n}: {z} vs {direct}");
            let h = single(&g);
            assert_eq!((h.nodes.len(), h.edges.len()), (u.nodes.len(), u.edges.len()));
        }
    }

    /// Renames derived node ids to unrolled ids: `k` leading `next/`
    /// segments mean copy `k + 1` of slice 2.
    fn unrolled_id(id: &str) -> String {
        let mut rest = id;
        let mut k = 0;
        while let Some(r) = rest.strip_prefix("next/") {
            rest = r;
            k += 1;
        }
        match rest.split_once('/') {
            Some(("2", v)) => format!("2.{}/{v}", k + 1),
            _ => rest.to_string(),
        }
    }

    #[test]
    fn derived_graph_is_the_unrolling() {
        let d = five_node(vec![0.9, 0.3, 0.6, 1.1]);
        for n in 2..=4 {
            let h = single(&dgm_to_fgg(&d, n).unwrap());
            let u = unroll_dgm(&d, n).unwrap();
            let mut nodes: Vec<_> = h.nodes.iter().map(|v| (unrolled_id(&v.id), v.label.clone())).collect();
            let mut want: Vec<_> = u.nodes.iter().map(|v| (v.id.clone(), v.label.clone())).collect();
            nodes.sort();
            want.sort();
            assert_eq!(nodes, want);
            let mut edges: Vec<_> = h
                .edges
                .iter()
                .map(|e| (e.label.clone(), e.att.iter().map(|v| unrolled_id(v)).collect::<Vec<_>>()))
                .collect();
            let mut want: Vec<_> = u.edges.iter().map(|e| (e.label.clone(), e.att.clone())).collect();
            edges.sort();
            want.sort();
            assert_eq!(edges, want);
        }
    }

    #[test]
    fn no_carried_nodes_factorizes() {
        let mut d = five_node(vec![0.9, 0.3, 0.6, 1.1]);
        d.e22.clear();
        let g = dgm_to_fgg(&d, 3).unwrap();
        assert!(g.space.signature("A^2").unwrap().is_empty());
        let z = solve_sum_product(&g, Semiring::Real, &SolverConfig::default()).unwrap().z;
        let mut first = Hypergraph::new();
        add_slice(&mut first, &d.h1, "1");
        add_slice(&mut first, &d.h2, "2");
        add_cross(&mut first, &d.e12, "12", "1", "2");
        let mut last = Hypergraph::new();
        add_slice(&mut last, &d.h2, "2");
        add_slice(&mut last, &d.h3, "3");
        add_cross(&mut last, &d.e23, "23", "2", "3");
        let bf = |h: &Hypergraph| brute_force_sum_product(&d.space, h, Semiring::Real).unwrap();
        let expect = bf(&first) * bf(&d.h2) * bf(&last);
        assert!((z - expect).abs() <= 1e-9 * expect);
    }

    #[test]
    fn rejects_bad_input() {
        let d = five_node(vec![1.0; 4]);
        assert_eq!(dgm_to_fgg(&d, 1), Err(AdapterError::InvalidLength(1)));
        let mut bad = d.clone();
        bad.e12.push(edge("x", "f", "9", "1"));
        assert!(matches!(dgm_to_fgg(&bad, 2), Err(AdapterError::InvalidCrossEdge(_))));
        let mut bad = d.clone();
        bad.space.add_terminal("u", ["V"], FactorFunction::Table(vec![1.0, 1.0])).unwrap();
        bad.h2.add_edge("unary", "u", ["1"]);
        assert_eq!(dgm_to_fgg(&bad, 2), Err(AdapterError::NonBinaryFactor("unary".into())));
    }
}
