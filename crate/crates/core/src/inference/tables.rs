use std::collections::{BTreeMap, HashMap};

use super::{InferenceError, SemiringTable};
use crate::eval::odometer;
use crate::grammar::{Fgg, Rule};
use crate::graph::flat_index;
use crate::semiring::Semiring;

/// A rule with its nonzero assignments precomputed.
///
/// For every assignment to the right-hand side nodes whose terminal factors
/// multiply to a nonzero weight, keeps the external index, that weight, and
/// the index into each child table.
pub(crate) struct CompiledRule {
    pub rule: usize,
    pub lhs: usize,
    /// Nonterminal index of each nonterminal edge.
    pub edges: Vec<usize>,
    pub ext: Vec<usize>,
    pub base: Vec<f64>,
    /// `edges.len()` indices per entry.
    pub child: Vec<usize>,
    /// Flat index of the full right-hand side assignment, per entry.
    pub xi: Vec<usize>,
    pub dims: Vec<usize>,
}

impl CompiledRule {
    pub fn len(&self) -> usize {
        self.base.len()
    }

    #[inline]
    pub fn children(&self, entry: usize) -> &[usize] {
        let k = self.edges.len();
        &self.child[entry * k..(entry + 1) * k]
    }

    /// Weight of one entry under `tables`.
    #[inline]
    pub fn weight(&self, entry: usize, tables: &[Vec<f64>], sr: Semiring) -> f64 {
        let mut w = self.base[entry];
        for (&y, &c) in self.edges.iter().zip(self.children(entry)) {
            w = sr.mul(w, tables[y][c]);
            if w == 0.0 {
                break;
            }
        }
        w
    }

    /// Inside table of this rule, indexed like the left-hand side table.
    pub fn inside(&self, tables: &[Vec<f64>], sr: Semiring, size: usize) -> Vec<f64> {
        let mut out = vec![sr.zero(); size];
        for i in 0..self.len() {
            let w = self.weight(i, tables, sr);
            out[self.ext[i]] = sr.add(out[self.ext[i]], w);
        }
        out
    }
}

pub(crate) struct Compiled {
    pub names: Vec<String>,
    pub index: HashMap<String, usize>,
    pub shapes: Vec<Vec<usize>>,
    pub sizes: Vec<usize>,
    pub rules: Vec<CompiledRule>,
}

fn shape_of(g: &Fgg, label: &str) -> Vec<usize> {
    g.space
        .signature(label)
        .unwrap_or(&[])
        .iter()
        .map(|l| g.space.domain_size(l).unwrap_or(0))
        .collect()
}

fn checked_size(label: &str, dims: &[usize], cap: usize) -> Result<usize, InferenceError> {
    let size: f64 = dims.iter().map(|&d| d as f64).product();
    if size > cap as f64 {
        return Err(InferenceError::TableTooLarge {
            label: label.to_string(),
            size,
            cap,
        });
    }
    Ok(dims.iter().product())
}

pub(crate) fn compile_rule(
    g: &Fgg,
    rule_index: usize,
    rule: &Rule,
    index: &HashMap<String, usize>,
    shapes: &[Vec<usize>],
    cap: usize,
) -> Result<CompiledRule, InferenceError> {
    let rhs = &rule.rhs.graph;
    let node_pos = rhs.node_index();
    let dims: Vec<usize> = rhs
        .nodes
        .iter()
        .map(|v| g.space.domain_size(&v.label).unwrap_or(0))
        .collect();
    checked_size(&rule.id, &dims, cap)?;
    let ext_pos: Vec<usize> = rule.rhs.externals.iter().map(|x| node_pos[x.as_str()]).collect();
    let lhs = *index
        .get(&rule.lhs)
        .ok_or_else(|| InferenceError::MissingChildTable(rule.lhs.clone()))?;

    let mut terminals = Vec::new();
    let mut edges = Vec::new();
    let mut edge_att = Vec::new();
    for e in &rhs.edges {
        let att: Vec<usize> = e.att.iter().map(|v| node_pos[v.as_str()]).collect();
        if let Some(&y) = index.get(&e.label) {
            edges.push(y);
            edge_att.push(att);
        } else {
            let f = g
                .space
                .factor(&e.label)
                .ok_or_else(|| InferenceError::MissingChildTable(e.label.clone()))?;
            terminals.push((f, crate::graph::signature_dims(&g.space, &e.label), att));
        }
    }

    let mut out = CompiledRule {
        rule: rule_index,
        lhs,
        edges,
        ext: Vec::new(),
        base: Vec::new(),
        child: Vec::new(),
        xi: Vec::new(),
        dims: dims.clone(),
    };
    if dims.contains(&0) {
        return Ok(out);
    }
    let mut xi = vec![0usize; dims.len()];
    let mut flat = 0usize;
    loop {
        let mut w = 1.0;
        for (f, edims, att) in &terminals {
            w = Semiring::Real.mul(w, f.at(flat_index(edims, att.iter().map(|&i| xi[i]))));
            if w == 0.0 {
                break;
            }
        }
        if w != 0.0 {
            out.ext.push(flat_index(&shapes[lhs], ext_pos.iter().map(|&i| xi[i])));
            out.base.push(w);
            for (k, att) in edge_att.iter().enumerate() {
                let y = out.edges[k];
                out.child.push(flat_index(&shapes[y], att.iter().map(|&i| xi[i])));
            }
            out.xi.push(flat);
        }
        flat += 1;
        if !odometer(&mut xi, &dims) {
            break;
        }
    }
    Ok(out)
}

pub(crate) fn compile(g: &Fgg, cap: usize) -> Result<Compiled, InferenceError> {
    let names = g.nonterminals.clone();
    let index: HashMap<String, usize> = names.iter().enumerate().map(|(i, x)| (x.clone(), i)).collect();
    let shapes: Vec<Vec<usize>> = names.iter().map(|x| shape_of(g, x)).collect();
    let mut sizes = Vec::with_capacity(names.len());
    for (x, s) in names.iter().zip(&shapes) {
        sizes.push(checked_size(x, s, cap)?);
    }
    let rules = g
        .rules
        .iter()
        .enumerate()
        .map(|(i, r)| compile_rule(g, i, r, &index, &shapes, cap))
        .collect::<Result<_, _>>()?;
    Ok(Compiled {
        names,
        index,
        shapes,
        sizes,
        rules,
    })
}

/// Inside table `tau_R` of one rule given tables for the nonterminals on its
/// right-hand side.
pub fn rule_inside(
    g: &Fgg,
    rule: &Rule,
    child_tables: &BTreeMap<String, SemiringTable>,
    semiring: Semiring,
) -> Result<SemiringTable, InferenceError> {
    let mut names = vec![rule.lhs.clone()];
    for e in &rule.rhs.graph.edges {
        if g.is_nonterminal(&e.label) {
            if !child_tables.contains_key(&e.label) {
                return Err(InferenceError::MissingChildTable(e.label.clone()));
            }
            if !names.contains(&e.label) {
                names.push(e.label.clone());
            }
        }
    }
    let index: HashMap<String, usize> = names.iter().enumerate().map(|(i, x)| (x.clone(), i)).collect();
    let shapes: Vec<Vec<usize>> = names.iter().map(|x| shape_of(g, x)).collect();
    let cr = compile_rule(g, 0, rule, &index, &shapes, usize::MAX)?;
    let tables: Vec<Vec<f64>> = names
        .iter()
        .enumerate()
        .map(|(i, x)| match child_tables.get(x) {
            Some(t) => t.values.clone(),
            None if i == 0 => vec![semiring.zero(); shapes[0].iter().product()],
            None => unreachable!(),
        })
        .collect();
    let size = shapes[0].iter().product();
    Ok(SemiringTable {
        nonterminal: rule.lhs.clone(),
        shape: shapes[0].clone(),
        values: cr.inside(&tables, semiring, size),
    })
}
