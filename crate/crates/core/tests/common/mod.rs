//! Random instances and independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use fgg::adapters::{Cfd, CfdKind, CfdNode, Dgm, Pfg, Spn, SpnKind, SpnNode};
use fgg::fixtures::{HmmParams, PcfgParams};
use fgg::grammar::{derive, enumerate_derivations};
use fgg::{
    brute_force_sum_product, solve_sum_product, Edge, FactorFunction, Fgg, Fragment, Hypergraph, LabelSpace,
    Rule, Semiring, SolverConfig,
};

pub fn rel_diff(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    (a - b).abs() / a.abs().max(b.abs())
}

pub fn z(g: &Fgg) -> f64 {
    solve_sum_product(g, Semiring::Real, &SolverConfig::default()).unwrap().z
}

fn weight(rng: &mut impl Rng) -> f64 {
    if rng.gen_bool(0.1) {
        0.0
    } else {
        rng.gen_range(0.05..1.0)
    }
}

fn table(rng: &mut impl Rng, size: usize) -> FactorFunction {
    FactorFunction::Table((0..size).map(|_| weight(rng)).collect())
}

/// A random nonrecursive grammar: nonterminal `X{i}` only uses `X{j}` with
/// `j > i`. At most `max_rules` rules and 4 nodes per right-hand side,
/// domains of size at most 3. Every nonterminal has a rule.
pub fn random_nonrecursive(rng: &mut impl Rng, max_rules: usize) -> Fgg {
    let mut s = LabelSpace::new();
    let labels: Vec<String> = (0..rng.gen_range(1..=2)).map(|i| format!("L{i}")).collect();
    let mut size = BTreeMap::new();
    for l in &labels {
        let m = rng.gen_range(1..=3);
        size.insert(l.clone(), m);
        s.add_node_label(l.clone(), (0..m).map(|v| format!("{l}.{v}"))).unwrap();
    }
    let k = rng.gen_range(1..=3.min(max_rules));
    let mut types: Vec<Vec<String>> = vec![Vec::new()];
    for _ in 1..k {
        let arity = rng.gen_range(0..=2);
        types.push((0..arity).map(|_| labels[rng.gen_range(0..labels.len())].clone()).collect());
    }
    for (i, t) in types.iter().enumerate() {
        s.add_nonterminal(format!("X{i}"), t).unwrap();
    }
    let mut lhs: Vec<usize> = (0..k).collect();
    for _ in k..rng.gen_range(k..=max_rules) {
        lhs.push(rng.gen_range(0..k));
    }
    lhs.sort();

    let mut terminal = 0;
    let mut rules = Vec::new();
    for (r, &x) in lhs.iter().enumerate() {
        let mut h = Hypergraph::new();
        let mut node_labels: Vec<String> = Vec::new();
        for (j, l) in types[x].iter().enumerate() {
            h.add_node(format!("v{j}"), l.clone());
            node_labels.push(l.clone());
        }
        let externals: Vec<String> = (0..types[x].len()).map(|j| format!("v{j}")).collect();
        let target = rng.gen_range(node_labels.len()..=4);
        while node_labels.len() < target {
            let l = labels[rng.gen_range(0..labels.len())].clone();
            h.add_node(format!("v{}", node_labels.len()), l.clone());
            node_labels.push(l);
        }
        let mut edges = 0;
        for y in x + 1..k {
            let copies = match rng.gen_range(0..10) {
                0..=4 => 0,
                5..=8 => 1,
                _ => 2,
            };
            for _ in 0..copies {
                let mut att: Vec<String> = Vec::new();
                for l in &types[y] {
                    let free: Vec<usize> = (0..node_labels.len())
                        .filter(|&v| node_labels[v] == *l && !att.contains(&format!("v{v}")))
                        .collect();
                    if !free.is_empty() {
                        att.push(format!("v{}", free[rng.gen_range(0..free.len())]));
                    } else if node_labels.len() < 4 {
                        h.add_node(format!("v{}", node_labels.len()), l.clone());
                        att.push(format!("v{}", node_labels.len()));
                        node_labels.push(l.clone());
                    } else {
                        break;
                    }
                }
                if att.len() == types[y].len() {
                    h.add_edge(format!("e{edges}"), format!("X{y}"), att);
                    edges += 1;
                }
            }
        }
        for _ in 0..rng.gen_range(0..=3) {
            let arity = rng.gen_range(0..=node_labels.len().min(2));
            let mut att: Vec<usize> = Vec::new();
            while att.len() < arity {
                let v = rng.gen_range(0..node_labels.len());
                if !att.contains(&v) {
                    att.push(v);
                }
            }
            let sig: Vec<String> = att.iter().map(|&v| node_labels[v].clone()).collect();
            let cells: usize = sig.iter().map(|l| size[l]).product();
            let name = format!("t{terminal}");
            terminal += 1;
            let f = if arity == 0 && rng.gen_bool(0.5) {
                FactorFunction::Constant(rng.gen_range(0.1..2.0))
            } else {
                table(rng, cells)
            };
            s.add_terminal(name.clone(), &sig, f).unwrap();
            h.add_edge(format!("e{edges}"), name, att.iter().map(|v| format!("v{v}")));
            edges += 1;
        }
        rules.push(Rule::new(format!("r{r}"), format!("X{x}"), Fragment::new(h, externals)));
    }
    Fgg::from_parts(s, rules, "X0")
}

/// Number of joint assignments of the largest derived graph, or `None` if
/// the grammar has too many derivations to enumerate.
pub fn largest_derived_space(g: &Fgg) -> Option<f64> {
    let en = enumerate_derivations(g, 16, 20_000);
    if en.truncated || en.depth_limited {
        return None;
    }
    let mut worst: f64 = 1.0;
    for d in &en.trees {
        let h = derive(g, d).ok()?;
        let space: f64 = h
            .nodes
            .iter()
            .map(|v| g.space.domain_size(&v.label).unwrap() as f64)
            .product();
        worst = worst.max(space);
    }
    Some(worst)
}

/// Sum (or max) over every derivation of the brute-force sum-product of its
/// derived graph.
pub fn sum_over_derivations(g: &Fgg, sr: Semiring) -> f64 {
    let en = enumerate_derivations(g, 16, 20_000);
    assert!(!en.truncated && !en.depth_limited);
    en.trees
        .iter()
        .map(|d| brute_force_sum_product(&g.space, &derive(g, d).unwrap(), sr).unwrap())
        .fold(0.0, |a, b| sr.add(a, b))
}

/// HMM with tags `BOS`, `EOS` and `k` ordinary tags, `w` words. Nothing
/// moves into `BOS` or out of `EOS`, and the boundary tags emit nothing.
pub fn random_hmm(rng: &mut impl Rng, k: usize, w: usize) -> HmmParams {
    let mut tags = vec!["BOS".to_string(), "EOS".to_string()];
    tags.extend((0..k).map(|i| format!("T{i}")));
    let words: Vec<String> = (0..w).map(|i| format!("w{i}")).collect();
    let t = tags.len();
    let mut trans = vec![0.0; t * t];
    for i in 0..t {
        for j in 0..t {
            if i != 1 && j != 0 {
                trans[i * t + j] = rng.gen_range(0.05..1.0);
            }
        }
    }
    let mut emit = vec![0.0; t * w];
    for i in 2..t {
        for j in 0..w {
            emit[i * w + j] = rng.gen_range(0.05..1.0);
        }
    }
    HmmParams {
        tags,
        words,
        trans,
        emit,
    }
}

/// Forward algorithm: total weight of all tag sequences for `words`.
pub fn forward(p: &HmmParams, words: &[usize]) -> f64 {
    let t = p.tags.len();
    let w = p.words.len();
    let mut alpha = vec![0.0; t];
    alpha[p.tag_index("BOS")] = 1.0;
    for &x in words {
        alpha = (0..t)
            .map(|j| (0..t).map(|i| alpha[i] * p.trans[i * t + j]).sum::<f64>() * p.emit[j * w + x])
            .collect();
    }
    let eos = p.tag_index("EOS");
    (0..t).map(|i| alpha[i] * p.trans[i * t + eos]).sum()
}

/// Highest-weight tag sequence by enumerating all of them.
pub fn exhaustive_tags(p: &HmmParams, words: &[usize]) -> (Vec<usize>, f64) {
    let t = p.tags.len();
    let w = p.words.len();
    let (bos, eos) = (p.tag_index("BOS"), p.tag_index("EOS"));
    let n = words.len();
    let mut best = (Vec::new(), f64::NEG_INFINITY);
    let mut seq = vec![0; n];
    loop {
        let mut prev = bos;
        let mut score = 1.0;
        for (&tag, &x) in seq.iter().zip(words) {
            score *= p.trans[prev * t + tag] * p.emit[tag * w + x];
            prev = tag;
        }
        score *= p.trans[prev * t + eos];
        if score > best.1 {
            best = (seq.clone(), score);
        }
        let mut i = n;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            seq[i] += 1;
            if seq[i] < t {
                break;
            }
            seq[i] = 0;
        }
    }
}

pub fn random_pcfg(rng: &mut impl Rng, n: usize, w: usize) -> PcfgParams {
    PcfgParams {
        nonterminals: (0..n).map(|i| format!("N{i}")).collect(),
        words: (0..w).map(|i| format!("w{i}")).collect(),
        binary: (0..n * n * n).map(|_| weight(rng)).collect(),
        lexical: (0..n * w).map(|_| weight(rng)).collect(),
    }
}

/// CKY inside value of the start symbol `N0`.
pub fn cky(p: &PcfgParams, words: &[usize]) -> f64 {
    let m = p.nonterminals.len();
    let w = p.words.len();
    let n = words.len();
    let mut chart = vec![vec![vec![0.0; m]; n + 1]; n + 1];
    for (i, &x) in words.iter().enumerate() {
        for a in 0..m {
            chart[i][i + 1][a] = p.lexical[a * w + x];
        }
    }
    for width in 2..=n {
        for i in 0..=n - width {
            let j = i + width;
            for k in i + 1..j {
                for a in 0..m {
                    let mut total = 0.0;
                    for b in 0..m {
                        for c in 0..m {
                            total += p.binary[a * m * m + b * m + c] * chart[i][k][b] * chart[k][j][c];
                        }
                    }
                    chart[i][j][a] += total;
                }
            }
        }
    }
    chart[0][n][0]
}

fn binary_space() -> LabelSpace {
    let mut s = LabelSpace::new();
    s.add_node_label("V", ["0", "1"]).unwrap();
    s
}

fn random_pair(rng: &mut impl Rng, s: &mut LabelSpace, name: String) -> String {
    let t = (0..4).map(|_| rng.gen_range(0.1..1.0)).collect();
    s.add_terminal(name.clone(), ["V", "V"], FactorFunction::Table(t)).unwrap();
    name
}

/// A random plated factor graph over plates `I` and `J` with arbitrary
/// (not necessarily nested) plate sets. Some are not convertible.
pub fn random_pfg(rng: &mut impl Rng) -> Pfg {
    let mut space = binary_space();
    let plates = vec!["I".to_string(), "J".to_string()];
    let subsets: [&[&str]; 4] = [&[], &["I"], &["J"], &["I", "J"]];
    let nv = rng.gen_range(1..=3);
    let mut g = Hypergraph::new();
    let mut membership = BTreeMap::new();
    let mut of = Vec::new();
    for i in 0..nv {
        let id = format!("v{i}");
        g.add_node(id.clone(), "V");
        let ps: BTreeSet<String> = subsets[rng.gen_range(0..4)].iter().map(|p| p.to_string()).collect();
        of.push(ps.clone());
        membership.insert(id, ps);
    }
    for k in 0..rng.gen_range(1..=3) {
        let a = rng.gen_range(0..nv);
        let b = rng.gen_range(0..nv);
        let (label, att, mut ps) = if a == b || rng.gen_bool(0.3) {
            let l = format!("u{k}");
            let t = vec![rng.gen_range(0.1..1.0), rng.gen_range(0.1..1.0)];
            space.add_terminal(l.clone(), ["V"], FactorFunction::Table(t)).unwrap();
            (l, vec![format!("v{a}")], of[a].clone())
        } else {
            let l = random_pair(rng, &mut space, format!("f{k}"));
            (l, vec![format!("v{a}"), format!("v{b}")], of[a].union(&of[b]).cloned().collect())
        };
        if rng.gen_bool(0.2) {
            ps.extend(subsets[rng.gen_range(0..4)].iter().map(|p| p.to_string()));
        }
        g.add_edge(format!("e{k}"), label, att);
        membership.insert(format!("e{k}"), ps);
    }
    let counts = plates.iter().map(|b| (b.clone(), rng.gen_range(1..=3))).collect();
    Pfg {
        space,
        graph: g,
        plates,
        membership,
        counts,
    }
}

/// Random DGM with 2 or 3 binary nodes per slice and random pairwise
/// factors within and between slices.
pub fn random_dgm(rng: &mut impl Rng) -> Dgm {
    let mut space = binary_space();
    let n = rng.gen_range(2..=3);
    let mut edges = Vec::new();
    for k in 0..6 {
        // slices 1 to 3 are chains over x0..x{n-1}; the rest are cross edges
        let pairs: Vec<(usize, usize)> = if k < 3 {
            (1..n).map(|i| (rng.gen_range(0..i), i)).collect()
        } else {
            (0..rng.gen_range(1..=n)).map(|_| (rng.gen_range(0..n), rng.gen_range(0..n))).collect()
        };
        let group: Vec<Edge> = pairs
            .into_iter()
            .enumerate()
            .map(|(i, (u, v))| {
                let id = format!("c{k}.{i}");
                Edge {
                    label: random_pair(rng, &mut space, format!("f{k}.{i}")),
                    id,
                    att: vec![format!("x{u}"), format!("x{v}")],
                }
            })
            .collect();
        edges.push(group);
    }
    let slice = |es: Vec<Edge>| {
        let mut h = Hypergraph::new();
        for i in 0..n {
            h.add_node(format!("x{i}"), "V");
        }
        h.edges = es;
        h
    };
    let mut it = edges.into_iter();
    let mut next = || it.next().unwrap();
    let (h1, h2, h3) = (slice(next()), slice(next()), slice(next()));
    Dgm {
        space,
        h1,
        h2,
        h3,
        e12: next(),
        e22: next(),
        e23: next(),
    }
}

/// Random CFD over at most `vars` variables, built bottom-up from disjoint
/// variable pools so that every case and factor node is valid.
pub fn random_cfd(rng: &mut impl Rng, vars: usize) -> Cfd {
    let node = |id: &str, kind| CfdNode { id: id.into(), kind };
    let mut nodes = vec![node("u", CfdKind::Unit), node("e", CfdKind::Empty)];
    let mut costs = BTreeMap::new();
    let mut pool: Vec<(String, BTreeSet<usize>)> = vec![("u".into(), BTreeSet::new()), ("e".into(), BTreeSet::new())];
    let mut next = 0;
    for k in 0..3 * vars {
        let id = format!("n{k}");
        let a = rng.gen_range(0..pool.len());
        let b = rng.gen_range(0..pool.len());
        let (sa, sb) = (pool[a].1.clone(), pool[b].1.clone());
        if rng.gen_bool(0.6) && next < vars {
            let x = next;
            next += 1;
            costs.insert(format!("x{x}"), rng.gen_range(-1.0..2.0));
            nodes.push(node(
                &id,
                CfdKind::Case {
                    var: format!("x{x}"),
                    hi: pool[a].0.clone(),
                    lo: pool[b].0.clone(),
                },
            ));
            pool.push((id, sa.union(&sb).copied().chain([x]).collect()));
        } else if sa.is_disjoint(&sb) {
            nodes.push(node(
                &id,
                CfdKind::Factor {
                    left: pool[a].0.clone(),
                    right: pool[b].0.clone(),
                },
            ));
            pool.push((id, sa.union(&sb).copied().collect()));
        }
    }
    let root = pool.last().unwrap().0.clone();
    Cfd::new(nodes, root, costs)
}

/// Random valid SPN over `vars` variables: per-variable sums of literals,
/// chained by products over disjoint scopes with sums over equal scopes.
pub fn random_spn(rng: &mut impl Rng, vars: usize) -> Spn {
    let mut nodes = Vec::new();
    let mut counter = 0;
    let mut fresh = |p: &str| {
        counter += 1;
        format!("{p}{counter}")
    };
    let sum = |id: &str, w: [f64; 2], a: &str, b: &str| SpnNode {
        id: id.into(),
        kind: SpnKind::Sum {
            weights: w,
            children: [a.into(), b.into()],
        },
    };
    let mut by_var: Vec<Vec<String>> = Vec::new();
    for i in 0..vars {
        let x = format!("x{i}");
        let (a, b) = (fresh("l"), fresh("l"));
        for (id, negated) in [(&a, false), (&b, true)] {
            nodes.push(SpnNode {
                id: id.clone(),
                kind: SpnKind::Leaf {
                    var: x.clone(),
                    negated,
                },
            });
        }
        let mut slot = vec![a.clone(), b.clone()];
        for _ in 0..2 {
            let s = fresh("s");
            nodes.push(sum(&s, [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)], &a, &b));
            slot.push(s);
        }
        by_var.push(slot);
    }
    let mut acc = by_var[0][rng.gen_range(0..by_var[0].len())].clone();
    for slot in by_var.iter().skip(1) {
        let (p1, p2) = (fresh("p"), fresh("p"));
        for p in [&p1, &p2] {
            nodes.push(SpnNode {
                id: p.clone(),
                kind: SpnKind::Product {
                    left: acc.clone(),
                    right: slot[rng.gen_range(0..slot.len())].clone(),
                },
            });
        }
        let s = fresh("s");
        nodes.push(sum(&s, [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)], &p1, &p2));
        acc = s;
    }
    Spn::new(nodes, acc)
}

/// All assignments to `vars`, first variable slowest.
pub fn all_assignments(vars: &[String]) -> Vec<BTreeMap<String, bool>> {
    (0..1usize << vars.len())
        .map(|bits| {
            vars.iter()
                .enumerate()
                .map(|(i, x)| (x.clone(), bits >> (vars.len() - 1 - i) & 1 == 1))
                .collect()
        })
        .collect()
}
