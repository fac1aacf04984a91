use super::tables::compile;
use super::{solve_sum_product, InferenceError, SolverConfig, SumProductResult};
use crate::fixtures::indicator;
use crate::grammar::Fgg;
use crate::semiring::Semiring;

/// Unnormalized distribution of one right-hand side node.
///
/// Entry `v` is the sum-product of `g` after pinning the node to `v` with a
/// 0/1 factor in every instance of the rule. A node in a rule that is never
/// used gets `Z` in every entry.
pub fn node_distribution(g: &Fgg, rule_id: &str, node_id: &str, cfg: &SolverConfig) -> Result<Vec<f64>, InferenceError> {
    let ri = g
        .rules
        .iter()
        .position(|r| r.id == rule_id)
        .ok_or_else(|| InferenceError::UnknownRule(rule_id.to_string()))?;
    let label = g.rules[ri]
        .rhs
        .graph
        .node(node_id)
        .ok_or_else(|| InferenceError::UnknownNode {
            rule: rule_id.to_string(),
            node: node_id.to_string(),
        })?
        .label
        .clone();
    let size = g.space.domain_size(&label).unwrap_or(0);
    let mut edge_id = "pin".to_string();
    while g.rules[ri].rhs.graph.edge(&edge_id).is_some() {
        edge_id.push('\'');
    }
    (0..size)
        .map(|v| {
            let mut pinned = g.clone();
            let name = pinned.space.fresh_label(&format!("pin:{node_id}={v}"));
            pinned
                .space
                .add_terminal(name.clone(), [label.clone()], indicator(size, v))?;
            pinned.terminals.push(name.clone());
            pinned.rules[ri].rhs.graph.add_edge(edge_id.clone(), name, [node_id]);
            Ok(solve_sum_product(&pinned, Semiring::Real, cfg)?.z)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyReport {
    pub max_residual: f64,
    /// Nonterminal and flat entry index of the largest residual.
    pub worst: Option<(String, usize)>,
}

/// Largest residual `|psi_X(xi) - sum_R tau_R(xi)|` over all equations.
pub fn check_consistency(result: &SumProductResult, g: &Fgg) -> Result<ConsistencyReport, InferenceError> {
    let c = compile(g, usize::MAX)?;
    let sr = result.semiring;
    let tables: Vec<Vec<f64>> = c
        .names
        .iter()
        .map(|x| {
            result
                .psi
                .get(x)
                .map(|t| t.values.clone())
                .ok_or_else(|| InferenceError::MissingChildTable(x.clone()))
        })
        .collect::<Result<_, _>>()?;
    let mut sums: Vec<Vec<f64>> = c.sizes.iter().map(|&s| vec![sr.zero(); s]).collect();
    for cr in &c.rules {
        let tau = cr.inside(&tables, sr, c.sizes[cr.lhs]);
        for (acc, t) in sums[cr.lhs].iter_mut().zip(tau) {
            *acc = sr.add(*acc, t);
        }
    }
    let mut report = ConsistencyReport {
        max_residual: 0.0,
        worst: None,
    };
    for (x, (have, want)) in tables.iter().zip(&sums).enumerate() {
        for (i, (a, b)) in have.iter().zip(want).enumerate() {
            let r = if a == b { 0.0 } else { (a - b).abs() };
            if r > report.max_residual || (r.is_nan() && !report.max_residual.is_nan()) {
                report.max_residual = r;
                report.worst = Some((c.names[x].clone(), i));
            }
        }
    }
    Ok(report)
}
