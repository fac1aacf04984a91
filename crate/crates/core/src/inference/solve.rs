use std::collections::BTreeMap;

use log::debug;

use super::tables::{compile, Compiled};
use super::{InferenceError, Method, SccReport, SemiringTable, SolveMethod, SolverConfig, SumProductResult};
use crate::grammar::{nonterminal_graph, Fgg};
use crate::semiring::Semiring;

const DIVERGENCE: f64 = 1e300;
/// Largest number of unknowns handed to a dense linear solve.
const MAX_DENSE: usize = 2000;

/// Argmax of an entry of `psi_X`: compiled rule index and entry index.
pub(crate) type Backpointer = Option<(usize, usize)>;

pub(crate) struct Solved {
    pub compiled: Compiled,
    pub tables: Vec<Vec<f64>>,
    pub reports: Vec<SccReport>,
    pub calls: usize,
    pub backpointers: Vec<Vec<Backpointer>>,
}

impl Solved {
    pub fn converged(&self) -> bool {
        self.reports.iter().all(|r| r.converged)
    }
}

/// One strongly connected component being solved.
struct Component<'a> {
    c: &'a Compiled,
    sr: Semiring,
    members: Vec<usize>,
    rules: Vec<usize>,
    /// Offset of each member's entries in the unknown vector, by nonterminal.
    offset: Vec<Option<usize>>,
    unknowns: usize,
}

impl<'a> Component<'a> {
    fn new(c: &'a Compiled, sr: Semiring, names: &[String]) -> Self {
        let members: Vec<usize> = names.iter().map(|x| c.index[x]).collect();
        let mut offset = vec![None; c.names.len()];
        let mut unknowns = 0;
        for &x in &members {
            offset[x] = Some(unknowns);
            unknowns += c.sizes[x];
        }
        let rules = (0..c.rules.len()).filter(|&r| offset[c.rules[r].lhs].is_some()).collect();
        Component {
            c,
            sr,
            members,
            rules,
            offset,
            unknowns,
        }
    }

    fn gather(&self, tables: &[Vec<f64>]) -> Vec<f64> {
        self.members.iter().flat_map(|&x| tables[x].iter().copied()).collect()
    }

    fn scatter(&self, x: &[f64], tables: &mut [Vec<f64>]) {
        for &m in &self.members {
            let o = self.offset[m].unwrap();
            tables[m].copy_from_slice(&x[o..o + self.c.sizes[m]]);
        }
    }

    /// One application of the equations: every member table recomputed as
    /// the sum of its rules' inside tables. Also returns the first argmax per
    /// entry.
    fn apply(&self, tables: &[Vec<f64>], calls: &mut usize) -> (Vec<f64>, Vec<Backpointer>) {
        let mut out = vec![self.sr.zero(); self.unknowns];
        let mut arg = vec![None; self.unknowns];
        for &ri in &self.rules {
            let cr = &self.c.rules[ri];
            let o = self.offset[cr.lhs].unwrap();
            *calls += 1;
            match self.sr {
                Semiring::Real => {
                    let tau = cr.inside(tables, self.sr, self.c.sizes[cr.lhs]);
                    for (i, t) in tau.into_iter().enumerate() {
                        out[o + i] += t;
                    }
                }
                Semiring::Viterbi => {
                    for e in 0..cr.len() {
                        let w = cr.weight(e, tables, self.sr);
                        let k = o + cr.ext[e];
                        if w > out[k] {
                            out[k] = w;
                            arg[k] = Some((ri, e));
                        }
                    }
                }
            }
        }
        (out, arg)
    }

    /// Unknowns that are positive in the least solution.
    fn support(&self, tables: &[Vec<f64>]) -> Vec<bool> {
        let mut pos = vec![false; self.unknowns];
        loop {
            let mut changed = false;
            for &ri in &self.rules {
                let cr = &self.c.rules[ri];
                let o = self.offset[cr.lhs].unwrap();
                for e in 0..cr.len() {
                    let k = o + cr.ext[e];
                    if pos[k] {
                        continue;
                    }
                    let alive = cr.edges.iter().zip(cr.children(e)).all(|(&y, &ch)| match self.offset[y] {
                        Some(oy) => pos[oy + ch],
                        None => tables[y][ch] > 0.0,
                    });
                    if alive {
                        pos[k] = true;
                        changed = true;
                    }
                }
            }
            if !changed {
                return pos;
            }
        }
    }

    /// `F(x)` and its Jacobian restricted to the unknowns in `index`.
    fn linearize(&self, tables: &[Vec<f64>], index: &[Option<usize>], n: usize, calls: &mut usize) -> (Vec<f64>, Vec<f64>) {
        let mut f = vec![0.0; n];
        let mut jac = vec![0.0; n * n];
        let mut vals = Vec::new();
        for &ri in &self.rules {
            let cr = &self.c.rules[ri];
            let o = self.offset[cr.lhs].unwrap();
            *calls += 1;
            for e in 0..cr.len() {
                let Some(row) = index[o + cr.ext[e]] else { continue };
                let children = cr.children(e);
                vals.clear();
                vals.extend(cr.edges.iter().zip(children).map(|(&y, &ch)| tables[y][ch]));
                let base = cr.base[e];
                f[row] += vals.iter().fold(base, |w, &v| self.sr.mul(w, v));
                for (k, (&y, &ch)) in cr.edges.iter().zip(children).enumerate() {
                    let Some(oy) = self.offset[y] else { continue };
                    let Some(col) = index[oy + ch] else { continue };
                    let partial = vals
                        .iter()
                        .enumerate()
                        .filter(|&(j, _)| j != k)
                        .fold(base, |w, (_, &v)| self.sr.mul(w, v));
                    jac[row * n + col] += partial;
                }
            }
        }
        (f, jac)
    }

    fn linear(&self) -> bool {
        self.rules.iter().all(|&ri| {
            let cr = &self.c.rules[ri];
            cr.edges.iter().filter(|&&y| self.offset[y].is_some()).count() <= 1
        })
    }
}

/// Solves `(I - a) x = b` by Gaussian elimination with partial pivoting.
fn solve_dense(mut a: Vec<f64>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = if i == j { 1.0 } else { 0.0 } - a[i * n + j];
        }
    }
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))?;
        if !(a[piv * n + col].abs() > 1e-14 * scale) {
            return None;
        }
        if piv != col {
            for j in 0..n {
                a.swap(piv * n + j, col * n + j);
            }
            b.swap(piv, col);
        }
        let p = a[col * n + col];
        for i in col + 1..n {
            let factor = a[i * n + col] / p;
            if factor == 0.0 {
                continue;
            }
            for j in col..n {
                a[i * n + j] -= factor * a[col * n + j];
            }
            b[i] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a[i * n + j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i * n + i];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

fn max_change(old: &[f64], new: &[f64]) -> f64 {
    old.iter()
        .zip(new)
        .map(|(&a, &b)| if a == b { 0.0 } else { (b - a).abs() })
        .fold(0.0, f64::max)
}

struct Outcome {
    method: SolveMethod,
    iterations: usize,
    converged: bool,
    monotone: bool,
    diverged: bool,
}

fn diverge(x: &mut [f64]) {
    for v in x.iter_mut() {
        if *v > 0.0 {
            *v = f64::INFINITY;
        }
    }
}

fn kleene(
    comp: &Component,
    tables: &mut [Vec<f64>],
    bp: &mut [Vec<Backpointer>],
    cfg: &SolverConfig,
    calls: &mut usize,
) -> Outcome {
    let mut out = Outcome {
        method: SolveMethod::Kleene,
        iterations: 0,
        converged: false,
        monotone: true,
        diverged: false,
    };
    let mut x = comp.gather(tables);
    while out.iterations < cfg.max_iter {
        out.iterations += 1;
        let (new, arg) = comp.apply(tables, calls);
        if new.iter().zip(&x).any(|(n, o)| n < o) {
            out.monotone = false;
        }
        for &m in &comp.members {
            let o = comp.offset[m].unwrap();
            for i in 0..comp.c.sizes[m] {
                if new[o + i] > x[o + i] {
                    bp[m][i] = arg[o + i];
                }
            }
        }
        let delta = max_change(&x, &new);
        x = new;
        if x.iter().any(|&v| v > DIVERGENCE) {
            diverge(&mut x);
            out.diverged = true;
            break;
        }
        comp.scatter(&x, tables);
        let done = match comp.sr {
            Semiring::Real => delta <= cfg.tol,
            Semiring::Viterbi => delta == 0.0,
        };
        if done {
            out.converged = true;
            break;
        }
    }
    comp.scatter(&x, tables);
    debug_assert!(out.monotone, "Kleene iterates decreased");
    out
}

fn restrict(support: &[bool]) -> (Vec<Option<usize>>, usize) {
    let mut n = 0;
    let index = support
        .iter()
        .map(|&p| {
            p.then(|| {
                n += 1;
                n - 1
            })
        })
        .collect();
    (index, n)
}

fn scatter_restricted(comp: &Component, index: &[Option<usize>], x: &[f64], tables: &mut [Vec<f64>]) {
    let mut full = vec![0.0; comp.unknowns];
    for (k, i) in index.iter().enumerate() {
        if let Some(i) = *i {
            full[k] = x[i];
        }
    }
    comp.scatter(&full, tables);
}

fn linear_solve(comp: &Component, tables: &mut [Vec<f64>], calls: &mut usize) -> Outcome {
    let (index, n) = restrict(&comp.support(tables));
    let (b, a) = comp.linearize(tables, &index, n, calls);
    let mut out = Outcome {
        method: SolveMethod::Linear,
        iterations: 0,
        converged: true,
        monotone: true,
        diverged: false,
    };
    let x = match solve_dense(a, b) {
        Some(x) if x.iter().all(|&v| v >= 0.0) => x,
        _ => {
            out.converged = false;
            out.diverged = true;
            vec![f64::INFINITY; n]
        }
    };
    scatter_restricted(comp, &index, &x, tables);
    out
}

fn newton(
    comp: &Component,
    tables: &mut [Vec<f64>],
    bp: &mut [Vec<Backpointer>],
    cfg: &SolverConfig,
    calls: &mut usize,
) -> Outcome {
    let (index, n) = restrict(&comp.support(tables));
    let mut out = Outcome {
        method: SolveMethod::Newton,
        iterations: 0,
        converged: false,
        monotone: true,
        diverged: false,
    };
    let mut x = vec![0.0; n];
    let mut fallback = false;
    while out.iterations < cfg.max_iter {
        out.iterations += 1;
        scatter_restricted(comp, &index, &x, tables);
        let (f, jac) = comp.linearize(tables, &index, n, calls);
        let r: Vec<f64> = f.iter().zip(&x).map(|(fi, xi)| fi - xi).collect();
        let Some(mut d) = solve_dense(jac, r) else {
            fallback = true;
            break;
        };
        // Newton iterates below the least solution only move up.
        if d.iter().any(|&v| v < -cfg.tol) {
            fallback = true;
            break;
        }
        let mut accepted = false;
        for damping in 0..30 {
            let cand: Vec<f64> = x.iter().zip(&d).map(|(a, b)| (a + b).max(0.0)).collect();
            if cand.iter().all(|v| v.is_finite()) {
                if damping == 0 && max_change(&x, &cand) <= cfg.tol {
                    out.converged = true;
                }
                x = cand;
                accepted = true;
                break;
            }
            d.iter_mut().for_each(|v| *v *= 0.5);
        }
        if !accepted {
            fallback = true;
            break;
        }
        if x.iter().any(|&v| v > DIVERGENCE) {
            diverge(&mut x);
            out.diverged = true;
            break;
        }
        if out.converged {
            break;
        }
    }
    scatter_restricted(comp, &index, &x, tables);
    if fallback {
        debug!("newton fell back to kleene after {} iterations", out.iterations);
        scatter_restricted(comp, &index, &vec![0.0; n], tables);
        let k = kleene(comp, tables, bp, cfg, calls);
        out = Outcome {
            method: SolveMethod::NewtonKleene,
            iterations: out.iterations + k.iterations,
            ..k
        };
    }
    out
}

pub(crate) fn solve_tables(g: &Fgg, sr: Semiring, cfg: &SolverConfig) -> Result<Solved, InferenceError> {
    cfg.check()?;
    g.validate()?;
    let compiled = compile(g, cfg.max_table)?;
    let ng = nonterminal_graph(g);
    let mut tables: Vec<Vec<f64>> = compiled.sizes.iter().map(|&s| vec![sr.zero(); s]).collect();
    let mut bp: Vec<Vec<Backpointer>> = compiled.sizes.iter().map(|&s| vec![None; s]).collect();
    let mut reports = Vec::new();
    let mut calls = 0;
    for scc in &ng.scc_order {
        let comp = Component::new(&compiled, sr, scc);
        let out = if !ng.is_cyclic(scc) {
            let (x, arg) = comp.apply(&tables, &mut calls);
            for &m in &comp.members {
                let o = comp.offset[m].unwrap();
                bp[m].copy_from_slice(&arg[o..o + compiled.sizes[m]]);
            }
            comp.scatter(&x, &mut tables);
            Outcome {
                method: SolveMethod::Direct,
                iterations: 0,
                converged: true,
                monotone: true,
                diverged: false,
            }
        } else {
            let dense_ok = comp.unknowns <= MAX_DENSE && (comp.unknowns * comp.unknowns) <= cfg.max_table;
            match (sr, cfg.method) {
                (Semiring::Viterbi, _) | (Semiring::Real, Method::Kleene) => {
                    kleene(&comp, &mut tables, &mut bp, cfg, &mut calls)
                }
                (Semiring::Real, Method::Auto) if dense_ok && comp.linear() => linear_solve(&comp, &mut tables, &mut calls),
                (Semiring::Real, _) if dense_ok => newton(&comp, &mut tables, &mut bp, cfg, &mut calls),
                (Semiring::Real, _) => kleene(&comp, &mut tables, &mut bp, cfg, &mut calls),
            }
        };
        debug!(
            "scc {:?}: {} after {} iterations (converged {}, diverged {})",
            scc, out.method, out.iterations, out.converged, out.diverged
        );
        if cfg.strict && !out.converged {
            return Err(if out.method == SolveMethod::Linear {
                InferenceError::SingularLinearSystem(scc.clone())
            } else {
                InferenceError::NonConvergence(cfg.max_iter)
            });
        }
        reports.push(SccReport {
            nonterminals: scc.clone(),
            method: out.method,
            iterations: out.iterations,
            converged: out.converged,
            monotone: out.monotone,
            diverged: out.diverged,
        });
    }
    Ok(Solved {
        compiled,
        tables,
        reports,
        calls,
        backpointers: bp,
    })
}

/// Sum-product of `g`: the least solution of its equation system, read off
/// at the start symbol.
pub fn solve_sum_product(g: &Fgg, sr: Semiring, cfg: &SolverConfig) -> Result<SumProductResult, InferenceError> {
    let solved = solve_tables(g, sr, cfg)?;
    let converged = solved.converged();
    let start = solved.compiled.index[&g.start];
    let z = solved.tables[start][0];
    let psi: BTreeMap<String, SemiringTable> = solved
        .compiled
        .names
        .iter()
        .zip(solved.tables)
        .zip(&solved.compiled.shapes)
        .map(|((x, values), shape)| {
            (
                x.clone(),
                SemiringTable {
                    nonterminal: x.clone(),
                    shape: shape.clone(),
                    values,
                },
            )
        })
        .collect();
    Ok(SumProductResult {
        semiring: sr,
        z,
        psi,
        scc_report: solved.reports,
        converged,
        rule_inside_calls: solved.calls,
    })
}
