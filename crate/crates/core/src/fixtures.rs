//! Constructors for the standard example grammars.
//!
//! These are used throughout the tests, the guide and the CLI's bundled
//! fixture files.

use std::collections::{BTreeMap, BTreeSet};

use crate::adapters::{Cfd, CfdKind, CfdNode, Dgm, Pfg, Spn, SpnKind, SpnNode};
use crate::grammar::{Fgg, Rule};
use crate::graph::{Edge, FactorFunction, Fragment, Hypergraph, LabelSpace};

pub fn frag(nodes: &[(&str, &str)], edges: &[(&str, &str, &[&str])], ext: &[&str]) -> Fragment {
    let mut g = Hypergraph::new();
    for (id, l) in nodes {
        g.add_node(*id, *l);
    }
    for (id, l, att) in edges {
        g.add_edge(*id, *l, att.iter().copied());
    }
    Fragment::new(g, ext.iter().map(|s| s.to_string()).collect())
}

pub fn indicator(size: usize, hot: usize) -> FactorFunction {
    let mut t = vec![0.0; size];
    t[hot] = 1.0;
    FactorFunction::Table(t)
}

pub const NONE: &[&str] = &[];

/// Parameters of a hidden Markov model.
///
/// `tags` must contain `BOS` and `EOS`. `trans` is row-major over
/// (previous tag, next tag) and `emit` over (tag, word).
#[derive(Debug, Clone, PartialEq)]
pub struct HmmParams {
    pub tags: Vec<String>,
    pub words: Vec<String>,
    pub trans: Vec<f64>,
    pub emit: Vec<f64>,
}

impl HmmParams {
    /// A small proper HMM: every reachable row sums to one.
    pub fn example() -> Self {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect();
        HmmParams {
            tags: s(&["BOS", "EOS", "N", "V"]),
            words: s(&["fish", "sleep", "they"]),
            #[rustfmt::skip]
            trans: vec![
                0.0, 0.0, 0.6, 0.4,
                0.0, 0.0, 0.0, 0.0,
                0.0, 0.2, 0.3, 0.5,
                0.0, 0.4, 0.4, 0.2,
            ],
            #[rustfmt::skip]
            emit: vec![
                0.0, 0.0, 0.0,
                0.0, 0.0, 0.0,
                0.5, 0.2, 0.3,
                0.2, 0.7, 0.1,
            ],
        }
    }

    pub fn tag_index(&self, tag: &str) -> usize {
        self.tags.iter().position(|t| t == tag).expect("unknown tag")
    }

    pub fn word_index(&self, word: &str) -> usize {
        self.words.iter().position(|w| w == word).expect("unknown word")
    }

    fn node_labels(&self, s: &mut LabelSpace) {
        s.add_node_label("T", self.tags.iter().cloned()).unwrap();
        s.add_node_label("W", self.words.iter().cloned()).unwrap();
    }
}

/// The HMM grammar: `S -> T1 [BOS] X`, `X -> T1 T2 W3 X`, `X -> T1 T2 [EOS]`.
pub fn hmm(p: &HmmParams) -> Fgg {
    let t = p.tags.len();
    let mut s = LabelSpace::new();
    p.node_labels(&mut s);
    s.add_nonterminal("S", NONE).unwrap();
    s.add_nonterminal("X", ["T"]).unwrap();
    s.add_terminal("is_bos", ["T"], indicator(t, p.tag_index("BOS"))).unwrap();
    s.add_terminal("is_eos", ["T"], indicator(t, p.tag_index("EOS"))).unwrap();
    s.add_terminal("trans", ["T", "T"], FactorFunction::Table(p.trans.clone()))
        .unwrap();
    s.add_terminal("emit", ["T", "W"], FactorFunction::Table(p.emit.clone()))
        .unwrap();
    let rules = vec![
        Rule::new(
            "pi1",
            "S",
            frag(&[("1", "T")], &[("2", "X", &["1"]), ("3", "is_bos", &["1"])], NONE),
        ),
        Rule::new(
            "pi2",
            "X",
            frag(
                &[("1", "T"), ("2", "T"), ("3", "W")],
                &[("4", "X", &["2"]), ("5", "trans", &["1", "2"]), ("6", "emit", &["2", "3"])],
                &["1"],
            ),
        ),
        Rule::new(
            "pi3",
            "X",
            frag(
                &[("1", "T"), ("2", "T")],
                &[("3", "trans", &["1", "2"]), ("4", "is_eos", &["2"])],
                &["1"],
            ),
        ),
    ];
    Fgg::from_parts(s, rules, "S")
}

/// The grammar `G_w` generating the single graph whose word nodes spell
/// `words`. Its nonterminals are `pos0` ... `posn`.
pub fn hmm_string(p: &HmmParams, words: &[&str]) -> Fgg {
    let n = words.len();
    let mut s = LabelSpace::new();
    p.node_labels(&mut s);
    s.add_nonterminal("S", NONE).unwrap();
    for i in 0..=n {
        s.add_nonterminal(format!("pos{i}"), ["T"]).unwrap();
    }
    for w in words {
        s.add_terminal(format!("word={w}"), ["W"], indicator(p.words.len(), p.word_index(w)))
            .unwrap();
    }
    let mut rules = vec![Rule::new("w0", "S", frag(&[("1", "T")], &[("2", "pos0", &["1"])], NONE))];
    for (i, w) in words.iter().enumerate() {
        let next = format!("pos{}", i + 1);
        let obs = format!("word={w}");
        rules.push(Rule::new(
            format!("w{}", i + 1),
            format!("pos{i}"),
            frag(
                &[("1", "T"), ("2", "T"), ("3", "W")],
                &[("4", &next, &["2"]), ("5", &obs, &["3"])],
                &["1"],
            ),
        ));
    }
    rules.push(Rule::new(
        "end",
        format!("pos{n}"),
        frag(&[("1", "T"), ("2", "T")], &[], &["1"]),
    ));
    Fgg::from_parts(s, rules, "S")
}

/// Parameters of a PCFG in Chomsky normal form. The first nonterminal is
/// the start symbol. `binary` is over (parent, left, right) and `lexical`
/// over (parent, word).
#[derive(Debug, Clone, PartialEq)]
pub struct PcfgParams {
    pub nonterminals: Vec<String>,
    pub words: Vec<String>,
    pub binary: Vec<f64>,
    pub lexical: Vec<f64>,
}

impl PcfgParams {
    pub fn example() -> Self {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect();
        let mut binary = vec![0.0; 27];
        // S -> NP VP, VP -> V NP
        binary[1 * 3 + 2] = 1.0;
        binary[2 * 9 + 0 * 3 + 1] = 0.5;
        PcfgParams {
            nonterminals: s(&["S", "NP", "VP"]),
            words: s(&["they", "fish", "sleep"]),
            binary,
            #[rustfmt::skip]
            lexical: vec![
                0.0, 0.0, 0.0,
                0.6, 0.4, 0.0,
                0.0, 0.2, 0.3,
            ],
        }
    }
}

/// The PCFG grammar: `S' -> N1 [N1 = S] X`, `X -> N1 N2 N3 [p] X X`,
/// `X -> N1 W2 [p]`.
pub fn pcfg(p: &PcfgParams) -> Fgg {
    let mut s = LabelSpace::new();
    s.add_node_label("N", p.nonterminals.iter().cloned()).unwrap();
    s.add_node_label("W", p.words.iter().cloned()).unwrap();
    s.add_nonterminal("S'", NONE).unwrap();
    s.add_nonterminal("X", ["N"]).unwrap();
    s.add_terminal("is_start", ["N"], indicator(p.nonterminals.len(), 0))
        .unwrap();
    s.add_terminal("binary", ["N", "N", "N"], FactorFunction::Table(p.binary.clone()))
        .unwrap();
    s.add_terminal("lexical", ["N", "W"], FactorFunction::Table(p.lexical.clone()))
        .unwrap();
    let rules = vec![
        Rule::new(
            "pi1",
            "S'",
            frag(&[("1", "N")], &[("2", "X", &["1"]), ("3", "is_start", &["1"])], NONE),
        ),
        Rule::new(
            "pi2",
            "X",
            frag(
                &[("1", "N"), ("2", "N"), ("3", "N")],
                &[("4", "X", &["2"]), ("5", "X", &["3"]), ("6", "binary", &["1", "2", "3"])],
                &["1"],
            ),
        ),
        Rule::new(
            "pi3",
            "X",
            frag(&[("1", "N"), ("2", "W")], &[("3", "lexical", &["1", "2"])], &["1"]),
        ),
    ];
    Fgg::from_parts(s, rules, "S'")
}

/// Name of the span nonterminal covering words `i..j`.
pub fn span(i: usize, j: usize) -> String {
    format!("[{i}-{j}]")
}

/// The string grammar constraining [`pcfg`] to `words`. Its start symbol is
/// `start`, with a single rule into the span `[0-n]`.
pub fn pcfg_string(p: &PcfgParams, words: &[&str]) -> Fgg {
    let n = words.len();
    let mut s = LabelSpace::new();
    s.add_node_label("N", p.nonterminals.iter().cloned()).unwrap();
    s.add_node_label("W", p.words.iter().cloned()).unwrap();
    s.add_nonterminal("start", NONE).unwrap();
    for i in 0..n {
        for j in i + 1..=n {
            s.add_nonterminal(span(i, j), ["N"]).unwrap();
        }
    }
    let mut rules = vec![Rule::new(
        "root",
        "start",
        frag(&[("1", "N")], &[("2", &span(0, n), &["1"])], NONE),
    )];
    for width in 2..=n {
        for i in 0..=n - width {
            let j = i + width;
            for k in i + 1..j {
                rules.push(Rule::new(
                    format!("bin{i}-{k}-{j}"),
                    span(i, j),
                    frag(
                        &[("1", "N"), ("2", "N"), ("3", "N")],
                        &[("4", &span(i, k), &["2"]), ("5", &span(k, j), &["3"])],
                        &["1"],
                    ),
                ));
            }
        }
    }
    for (l, w) in words.iter().enumerate() {
        let label = format!("word={w}");
        let hot = p.words.iter().position(|x| x == w).expect("unknown word");
        s.add_terminal(label.clone(), ["W"], indicator(p.words.len(), hot)).unwrap();
        rules.push(Rule::new(
            format!("lex{}", l + 1),
            span(l, l + 1),
            frag(&[("1", "N"), ("2", "W")], &[("3", &label, &["2"])], &["1"]),
        ));
    }
    Fgg::from_parts(s, rules, "start")
}

/// `S -> X`, `X -> [p] X`, `X -> [q]`, all nullary. Sum-product `q / (1 - p)`
/// for `p < 1`.
pub fn geometric(p: f64, q: f64) -> Fgg {
    let mut s = LabelSpace::new();
    s.add_nonterminal("S", NONE).unwrap();
    s.add_nonterminal("X", NONE).unwrap();
    s.add_terminal("cont", NONE, FactorFunction::Constant(p)).unwrap();
    s.add_terminal("stop", NONE, FactorFunction::Constant(q)).unwrap();
    let rules = vec![
        Rule::new("start", "S", frag(&[], &[("1", "X", NONE)], NONE)),
        Rule::new("cont", "X", frag(&[], &[("1", "cont", NONE), ("2", "X", NONE)], NONE)),
        Rule::new("stop", "X", frag(&[], &[("1", "stop", NONE)], NONE)),
    ];
    Fgg::from_parts(s, rules, "S")
}

/// `S -> X`, `X -> [p] X X`, `X -> [q]`. Sum-product is the least root of
/// `z = p z^2 + q`.
pub fn quadratic(p: f64, q: f64) -> Fgg {
    let mut s = LabelSpace::new();
    s.add_nonterminal("S", NONE).unwrap();
    s.add_nonterminal("X", NONE).unwrap();
    s.add_terminal("branch", NONE, FactorFunction::Constant(p)).unwrap();
    s.add_terminal("leaf", NONE, FactorFunction::Constant(q)).unwrap();
    let rules = vec![
        Rule::new("start", "S", frag(&[], &[("1", "X", NONE)], NONE)),
        Rule::new(
            "branch",
            "X",
            frag(&[], &[("1", "branch", NONE), ("2", "X", NONE), ("3", "X", NONE)], NONE),
        ),
        Rule::new("leaf", "X", frag(&[], &[("1", "leaf", NONE)], NONE)),
    ];
    Fgg::from_parts(s, rules, "S")
}

/// The small nonreentrant grammar with two derivations:
/// `S -> A1 B2 A4 X(1,2,4)`, `S -> A1 B2 Y(1,2)`, `X -> f(1,4) Y(4,2)`,
/// `Y -> g(1,2)`. Both node labels have two values; `f` is over (A, A) and
/// `g` over (A, B).
pub fn example9(f: [f64; 4], g: [f64; 4]) -> Fgg {
    let mut s = LabelSpace::new();
    s.add_node_label("A", ["a0", "a1"]).unwrap();
    s.add_node_label("B", ["b0", "b1"]).unwrap();
    s.add_nonterminal("S", NONE).unwrap();
    s.add_nonterminal("X", ["A", "B", "A"]).unwrap();
    s.add_nonterminal("Y", ["A", "B"]).unwrap();
    s.add_terminal("f", ["A", "A"], FactorFunction::Table(f.to_vec())).unwrap();
    s.add_terminal("g", ["A", "B"], FactorFunction::Table(g.to_vec())).unwrap();
    let rules = vec![
        Rule::new(
            "pi1",
            "S",
            frag(
                &[("1", "A"), ("2", "B"), ("4", "A")],
                &[("3", "X", &["1", "2", "4"])],
                NONE,
            ),
        ),
        Rule::new(
            "pi2",
            "S",
            frag(&[("1", "A"), ("2", "B")], &[("3", "Y", &["1", "2"])], NONE),
        ),
        Rule::new(
            "pi3",
            "X",
            frag(
                &[("1", "A"), ("2", "B"), ("4", "A")],
                &[("5", "f", &["1", "4"]), ("3", "Y", &["4", "2"])],
                &["1", "2", "4"],
            ),
        ),
        Rule::new(
            "pi4",
            "Y",
            frag(&[("1", "A"), ("2", "B")], &[("3", "g", &["1", "2"])], &["1", "2"]),
        ),
    ];
    Fgg::from_parts(s, rules, "S")
}

/// The nested-plate example: `F(X)`, `H(X, Y)` in plates `I` and `J`,
/// `G(Y)` and `Y` in plate `I`, with counts `i` and `j`.
pub fn pfg_nested(i: usize, j: usize) -> Pfg {
    let mut space = LabelSpace::new();
    space.add_node_label("V", ["0", "1"]).unwrap();
    space.add_terminal("F", ["V"], FactorFunction::Table(vec![0.3, 0.7])).unwrap();
    space.add_terminal("G", ["V"], FactorFunction::Table(vec![0.6, 0.9])).unwrap();
    space
        .add_terminal("H", ["V", "V"], FactorFunction::Table(vec![0.5, 0.2, 0.1, 0.8]))
        .unwrap();
    let mut g = Hypergraph::new();
    g.add_node("X", "V").add_node("Y", "V");
    g.add_edge("f", "F", ["X"]).add_edge("h", "H", ["X", "Y"]).add_edge("g", "G", ["Y"]);
    let set = |ps: &[&str]| ps.iter().map(|p| p.to_string()).collect::<BTreeSet<_>>();
    Pfg {
        space,
        graph: g,
        plates: vec!["I".into(), "J".into()],
        membership: BTreeMap::from([
            ("Y".into(), set(&["I"])),
            ("h".into(), set(&["I", "J"])),
            ("g".into(), set(&["I"])),
        ]),
        counts: BTreeMap::from([("I".into(), i), ("J".into(), j)]),
    }
}

/// A restricted Boltzmann machine as a plated factor graph: visible units in
/// plate `I`, hidden units in plate `J`, and a pairwise factor in both.
pub fn pfg_rbm(i: usize, j: usize) -> Pfg {
    let mut space = LabelSpace::new();
    space.add_node_label("V", ["0", "1"]).unwrap();
    space.add_terminal("a", ["V"], FactorFunction::Table(vec![1.0, 0.5])).unwrap();
    space.add_terminal("b", ["V"], FactorFunction::Table(vec![1.0, 2.0])).unwrap();
    space
        .add_terminal("w", ["V", "V"], FactorFunction::Table(vec![1.0, 1.0, 1.0, 3.0]))
        .unwrap();
    let mut g = Hypergraph::new();
    g.add_node("v", "V").add_node("h", "V");
    g.add_edge("fa", "a", ["v"]).add_edge("fb", "b", ["h"]).add_edge("fw", "w", ["v", "h"]);
    let set = |ps: &[&str]| ps.iter().map(|p| p.to_string()).collect::<BTreeSet<_>>();
    Pfg {
        space,
        graph: g,
        plates: vec!["I".into(), "J".into()],
        membership: BTreeMap::from([
            ("v".into(), set(&["I"])),
            ("fa".into(), set(&["I"])),
            ("h".into(), set(&["J"])),
            ("fb".into(), set(&["J"])),
            ("fw".into(), set(&["I", "J"])),
        ]),
        counts: BTreeMap::from([("I".into(), i), ("J".into(), j)]),
    }
}

/// The five-node dynamic model. Each slice has edges 1->2, 2->3, 4->3,
/// 4->5, 4->1, 4->2; between consecutive slices run 2->2, 3->2, 3->4 and
/// 4->4. Every factor is `f` over two binary nodes.
pub fn dgm_five(f: [f64; 4]) -> Dgm {
    let mut space = LabelSpace::new();
    space.add_node_label("V", ["0", "1"]).unwrap();
    space.add_terminal("f", ["V", "V"], FactorFunction::Table(f.to_vec())).unwrap();
    let slice = || {
        let mut h = Hypergraph::new();
        for i in 1..=5 {
            h.add_node(i.to_string(), "V");
        }
        for (k, (u, v)) in [("1", "2"), ("2", "3"), ("4", "3"), ("4", "5"), ("4", "1"), ("4", "2")]
            .iter()
            .enumerate()
        {
            h.add_edge(format!("e{k}"), "f", [*u, *v]);
        }
        h
    };
    let cross = || {
        [("2", "2"), ("3", "2"), ("3", "4"), ("4", "4")]
            .iter()
            .enumerate()
            .map(|(k, (u, v))| Edge {
                id: format!("c{k}"),
                label: "f".into(),
                att: vec![u.to_string(), v.to_string()],
            })
            .collect::<Vec<_>>()
    };
    Dgm {
        space,
        h1: slice(),
        h2: slice(),
        h3: slice(),
        e12: cross(),
        e22: cross(),
        e23: cross(),
    }
}

/// `r = factor(a, b)` with `a = case(x, u, u)` and `b = case(y, u, e)`.
pub fn cfd_example() -> Cfd {
    let node = |id: &str, kind: CfdKind| CfdNode { id: id.into(), kind };
    let case = |id: &str, var: &str, hi: &str, lo: &str| {
        node(
            id,
            CfdKind::Case {
                var: var.into(),
                hi: hi.into(),
                lo: lo.into(),
            },
        )
    };
    Cfd::new(
        vec![
            node(
                "r",
                CfdKind::Factor {
                    left: "a".into(),
                    right: "b".into(),
                },
            ),
            case("a", "x", "u", "u"),
            case("b", "y", "u", "e"),
            node("u", CfdKind::Unit),
            node("e", CfdKind::Empty),
        ],
        "r",
        BTreeMap::from([("x".to_string(), 1.0), ("y".to_string(), 0.5)]),
    )
}

/// `s = 0.3 p + 0.7 q` with `p = x * y` and `q = not x * y`.
pub fn spn_example() -> Spn {
    let node = |id: &str, kind: SpnKind| SpnNode { id: id.into(), kind };
    let leaf = |id: &str, var: &str, negated: bool| {
        node(
            id,
            SpnKind::Leaf {
                var: var.into(),
                negated,
            },
        )
    };
    let product = |id: &str, l: &str, r: &str| {
        node(
            id,
            SpnKind::Product {
                left: l.into(),
                right: r.into(),
            },
        )
    };
    Spn::new(
        vec![
            node(
                "s",
                SpnKind::Sum {
                    weights: [0.3, 0.7],
                    children: ["p".into(), "q".into()],
                },
            ),
            product("p", "x", "y"),
            product("q", "nx", "y"),
            leaf("x", "x", false),
            leaf("nx", "x", true),
            leaf("y", "y", false),
        ],
        "s",
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::validate_fgg;

    #[test]
    fn all_fixtures_validate() {
        let hp = HmmParams::example();
        let pp = PcfgParams::example();
        for g in [
            hmm(&hp),
            hmm_string(&hp, &["they", "fish"]),
            hmm_string(&hp, &[]),
            pcfg(&pp),
            pcfg_string(&pp, &["they", "fish", "sleep"]),
            geometric(0.5, 0.5),
            quadratic(0.4, 0.6),
            example9([0.1, 0.2, 0.3, 0.4], [0.1, 0.2, 0.3, 0.4]),
        ] {
            assert_eq!(validate_fgg(&g), Ok(()), "{}", g.start);
        }
    }

    #[test]
    fn example_hmm_rows_are_normalized() {
        let p = HmmParams::example();
        let t = p.tags.len();
        for (i, tag) in p.tags.iter().enumerate() {
            let row: f64 = p.trans[i * t..(i + 1) * t].iter().sum();
            if tag != "EOS" {
                assert!((row - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn cky_rule_count() {
        let pp = PcfgParams::example();
        for n in 1..=6 {
            let words: Vec<&str> = (0..n).map(|i| ["they", "fish"][i % 2]).collect();
            let g = pcfg_string(&pp, &words);
            let expected = (n + 1) * n * (n - 1) / 6 + n + 1;
            assert_eq!(g.rules.len(), expected);
        }
    }
}
