use super::solve::solve_tables;
use super::{InferenceError, SolverConfig};
use crate::grammar::{derive, DerivationTree, Fgg};
use crate::graph::{assignment_weight, Assignment};
use crate::semiring::Semiring;

#[derive(Debug, Clone, PartialEq)]
pub struct ViterbiResult {
    pub tree: DerivationTree,
    /// Values for the nodes of `derive(g, tree)`.
    pub assignment: Assignment,
    /// Weight of the derived graph under `assignment`.
    pub weight: f64,
    /// The Viterbi value of the start symbol.
    pub z: f64,
}

struct Rebuild<'a> {
    g: &'a Fgg,
    solved: &'a super::solve::Solved,
    assignment: Assignment,
    depth_limit: usize,
}

fn join(path: &str, id: &str) -> String {
    if path.is_empty() {
        id.to_string()
    } else {
        format!("{path}/{id}")
    }
}

impl Rebuild<'_> {
    fn expand(&mut self, x: usize, idx: usize, path: &str, ext: &[String], depth: usize) -> Result<DerivationTree, InferenceError> {
        if depth > self.depth_limit {
            return Err(InferenceError::Reconstruction("backpointers form a cycle".into()));
        }
        let c = &self.solved.compiled;
        let (ri, e) = self.solved.backpointers[x][idx].ok_or_else(|| {
            InferenceError::Reconstruction(format!("no backpointer for `{}` entry {idx}", c.names[x]))
        })?;
        let cr = &c.rules[ri];
        let rule = &self.g.rules[cr.rule];

        let mut xi = vec![0; cr.dims.len()];
        let mut flat = cr.xi[e];
        for (slot, &d) in xi.iter_mut().zip(&cr.dims).rev() {
            *slot = flat % d;
            flat /= d;
        }
        let mut ids = Vec::with_capacity(xi.len());
        for (n, &v) in rule.rhs.graph.nodes.iter().zip(&xi) {
            let id = match rule.rhs.externals.iter().position(|x| *x == n.id) {
                Some(k) => ext[k].clone(),
                None => {
                    let id = join(path, &n.id);
                    self.assignment.set(id.clone(), v);
                    id
                }
            };
            ids.push(id);
        }

        let mut tree = DerivationTree::leaf(rule.id.clone());
        let pos = rule.rhs.graph.node_index();
        let nt_edges = rule.rhs.graph.edges.iter().filter(|e| c.index.contains_key(&e.label));
        for (k, edge) in nt_edges.enumerate() {
            let att: Vec<String> = edge.att.iter().map(|v| ids[pos[v.as_str()]].clone()).collect();
            let child = self.expand(cr.edges[k], cr.children(e)[k], &join(path, &edge.id), &att, depth + 1)?;
            tree = tree.with_child(edge.id.clone(), child);
        }
        Ok(tree)
    }
}

/// Highest-weight derivation and assignment.
///
/// Ties go to the earlier rule, then to the lexicographically smaller
/// assignment of the rule's right-hand side.
pub fn viterbi_derivation(g: &Fgg, cfg: &SolverConfig) -> Result<ViterbiResult, InferenceError> {
    let solved = solve_tables(g, Semiring::Viterbi, cfg)?;
    if !solved.converged() {
        return Err(InferenceError::NotConverged);
    }
    let start = solved.compiled.index[&g.start];
    let z = solved.tables[start][0];
    if z == 0.0 {
        return Err(InferenceError::NoDerivation);
    }
    let mut rb = Rebuild {
        g,
        solved: &solved,
        assignment: Assignment::new(),
        depth_limit: solved.compiled.sizes.iter().sum::<usize>() + 1,
    };
    let tree = rb.expand(start, 0, "", &[], 0)?;
    let graph = derive(g, &tree)?;
    let weight = assignment_weight(&g.space, &graph, &rb.assignment)?;
    if (weight - z).abs() > 1e-9 * z {
        return Err(InferenceError::Reconstruction(format!(
            "derivation weight {weight} differs from Viterbi value {z}"
        )));
    }
    Ok(ViterbiResult {
        tree,
        assignment: rb.assignment,
        weight,
        z,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{example9, geometric, hmm, hmm_string, HmmParams};

    #[test]
    fn geometric_prefers_shortest() {
        let r = viterbi_derivation(&geometric(0.5, 0.5), &SolverConfig::default()).unwrap();
        assert_eq!(r.weight, 0.5);
        assert_eq!(r.tree.rules(), vec!["start", "stop"]);
    }

    #[test]
    fn ties_go_to_the_first_rule() {
        // cont * stop = 0.5 equals stop = 0.5; the stop rule is declared later
        // but continuing is never strictly better.
        let r = viterbi_derivation(&geometric(1.0, 0.5), &SolverConfig::default()).unwrap();
        assert_eq!(r.weight, 0.5);
        assert_eq!(r.tree.size(), 2);
    }

    #[test]
    fn example9_single_derivations() {
        let g = example9([0.1, 0.9, 0.3, 0.2], [0.5, 0.4, 0.8, 0.05]);
        let r = viterbi_derivation(&g, &SolverConfig::default()).unwrap();
        // max f(a,a') g(a',b) = 0.9 * 0.8 loses to max g = 0.8
        assert_eq!(r.weight, 0.8);
        assert_eq!(r.tree.rules(), vec!["pi2", "pi4"]);
        assert_eq!(r.assignment.get("1"), Some(1));
        assert_eq!(r.assignment.get("2"), Some(0));
        let h = derive(&g, &r.tree).unwrap();
        assert_eq!(assignment_weight(&g.space, &h, &r.assignment).unwrap(), r.weight);
    }

    #[test]
    fn hmm_string_tags() {
        let p = HmmParams::example();
        let g = crate::conjunction::conjoin(&hmm(&p), &hmm_string(&p, &["they", "fish"])).unwrap();
        let r = viterbi_derivation(&g, &SolverConfig::default()).unwrap();
        assert!(r.weight > 0.0);
        assert!((r.weight - r.z).abs() <= 1e-15 * r.z);
        let h = derive(&g, &r.tree).unwrap();
        assert_eq!(assignment_weight(&g.space, &h, &r.assignment).unwrap(), r.weight);
    }

    #[test]
    fn no_derivation() {
        assert_eq!(
            viterbi_derivation(&geometric(0.5, 0.0), &SolverConfig::default()),
            Err(InferenceError::NoDerivation)
        );
    }

    #[test]
    fn not_converged() {
        let c = SolverConfig {
            max_iter: 1,
            ..SolverConfig::default()
        };
        assert_eq!(viterbi_derivation(&geometric(0.5, 0.5), &c), Err(InferenceError::NotConverged));
    }
}
