//! Reading and writing documents.
//!
//! Every document is an envelope
//! `{"format_version": "fgg/1", "kind": ..., "body": ...}`. Serialization is
//! canonical: object keys sorted, arrays in declaration order, numbers in
//! their shortest round-trip form, two-space indentation and a final newline.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde_json::{json, Map, Number, Value};
use thiserror::Error;

use crate::adapters::{Cfd, CfdKind, CfdNode, Dgm, Pfg, Spn, SpnKind, SpnNode};
use crate::grammar::{validate_fgg, Fgg, Rule};
use crate::graph::{Edge, EdgeLabel, FactorFunction, Fragment, Hypergraph, LabelSpace};

pub const FORMAT_VERSION: &str = "fgg/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Fgg,
    FactorGraph,
    Pfg,
    Dgm,
    Cfd,
    Spn,
    Result,
}

impl Kind {
    pub const ALL: [Kind; 7] = [
        Kind::Fgg,
        Kind::FactorGraph,
        Kind::Pfg,
        Kind::Dgm,
        Kind::Cfd,
        Kind::Spn,
        Kind::Result,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Fgg => "fgg",
            Kind::FactorGraph => "factorgraph",
            Kind::Pfg => "pfg",
            Kind::Dgm => "dgm",
            Kind::Cfd => "cfd",
            Kind::Spn => "spn",
            Kind::Result => "result",
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Kind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Kind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown kind `{s}`"))
    }
}

/// A single factor graph, optionally with external nodes and a description
/// of where each node and edge came from.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorGraph {
    pub space: LabelSpace,
    pub graph: Fragment,
    pub provenance: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Artifact {
    Fgg(Fgg),
    FactorGraph(FactorGraph),
    Pfg(Pfg),
    Dgm(Dgm),
    Cfd(Cfd),
    Spn(Spn),
    /// Output of a command; any JSON object.
    Result(Value),
}

impl Artifact {
    pub fn kind(&self) -> Kind {
        match self {
            Artifact::Fgg(_) => Kind::Fgg,
            Artifact::FactorGraph(_) => Kind::FactorGraph,
            Artifact::Pfg(_) => Kind::Pfg,
            Artifact::Dgm(_) => Kind::Dgm,
            Artifact::Cfd(_) => Kind::Cfd,
            Artifact::Spn(_) => Kind::Spn,
            Artifact::Result(_) => Kind::Result,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{path}: {message}")]
pub struct ParseError {
    /// JSON path of the offending value, like `$.body.rules[2].lhs`.
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseOptions {
    /// Reject unknown fields instead of warning about them.
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parsed {
    pub artifact: Artifact,
    pub warnings: Vec<String>,
}

pub fn parse(text: &str, opts: ParseOptions) -> Result<Parsed, ParseError> {
    let v: Value = serde_json::from_str(text).map_err(|e| ParseError {
        path: "$".into(),
        message: e.to_string(),
    })?;
    parse_value(&v, opts)
}

pub fn parse_value(v: &Value, opts: ParseOptions) -> Result<Parsed, ParseError> {
    let mut r = Reader {
        strict: opts.strict,
        warnings: Vec::new(),
    };
    let root = r.obj(v, "$")?;
    r.keys(root, "$", &["format_version", "kind", "body"])?;
    let version = r.str(root, "format_version", "$")?;
    if version != FORMAT_VERSION {
        return Err(err("$.format_version", format!("unsupported version `{version}`")));
    }
    let kind: Kind = r.str(root, "kind", "$")?.parse().map_err(|m| err("$.kind", m))?;
    let body = r.get(root, "body", "$")?;
    let artifact = match kind {
        Kind::Fgg => Artifact::Fgg(r.fgg(body, "$.body")?),
        Kind::FactorGraph => Artifact::FactorGraph(r.factor_graph(body, "$.body")?),
        Kind::Pfg => Artifact::Pfg(r.pfg(body, "$.body")?),
        Kind::Dgm => Artifact::Dgm(r.dgm(body, "$.body")?),
        Kind::Cfd => Artifact::Cfd(r.cfd(body, "$.body")?),
        Kind::Spn => Artifact::Spn(r.spn(body, "$.body")?),
        Kind::Result => {
            r.obj(body, "$.body")?;
            Artifact::Result(body.clone())
        }
    };
    Ok(Parsed {
        artifact,
        warnings: r.warnings,
    })
}

/// Canonical text of `a`.
pub fn serialize(a: &Artifact) -> String {
    let mut s = serde_json::to_string_pretty(&to_value(a)).expect("values are serializable");
    s.push('\n');
    s
}

pub fn to_value(a: &Artifact) -> Value {
    let body = match a {
        Artifact::Fgg(g) => fgg_value(g),
        Artifact::FactorGraph(fg) => {
            let mut m = space_value(&fg.space);
            m.insert("graph".into(), graph_value(&fg.graph.graph, Some(&fg.graph.externals)));
            if !fg.provenance.is_empty() {
                m.insert("provenance".into(), json!(fg.provenance));
            }
            Value::Object(m)
        }
        Artifact::Pfg(p) => {
            let mut m = space_value(&p.space);
            m.insert("graph".into(), graph_value(&p.graph, None));
            m.insert("plates".into(), json!(p.plates));
            m.insert("membership".into(), json!(p.membership));
            m.insert("counts".into(), json!(p.counts));
            Value::Object(m)
        }
        Artifact::Dgm(d) => {
            let mut m = space_value(&d.space);
            for (k, h) in [("h1", &d.h1), ("h2", &d.h2), ("h3", &d.h3)] {
                m.insert(k.into(), graph_value(h, None));
            }
            for (k, es) in [("e12", &d.e12), ("e22", &d.e22), ("e23", &d.e23)] {
                m.insert(k.into(), Value::Array(es.iter().map(edge_value).collect()));
            }
            Value::Object(m)
        }
        Artifact::Cfd(c) => cfd_value(c),
        Artifact::Spn(s) => spn_value(s),
        Artifact::Result(v) => v.clone(),
    };
    json!({
        "format_version": FORMAT_VERSION,
        "kind": a.kind().as_str(),
        "body": body,
    })
}

/// A JSON number, or the strings `inf`, `-inf` and `nan` for values JSON
/// cannot hold.
pub fn number(x: f64) -> Value {
    match Number::from_f64(x) {
        Some(n) => Value::Number(n),
        None if x.is_nan() => Value::String("nan".into()),
        None if x > 0.0 => Value::String("inf".into()),
        None => Value::String("-inf".into()),
    }
}

fn numbers(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| number(x)).collect())
}

fn space_value(s: &LabelSpace) -> Map<String, Value> {
    let mut nodes = Map::new();
    for (name, values) in s.node_labels() {
        nodes.insert(name.into(), json!({ "values": values }));
    }
    let mut edges = Map::new();
    for (name, l) in s.edge_labels() {
        edges.insert(name.into(), edge_label_value(l));
    }
    let mut m = Map::new();
    m.insert("node_labels".into(), Value::Object(nodes));
    m.insert("edge_labels".into(), Value::Object(edges));
    m
}

fn edge_label_value(l: &EdgeLabel) -> Value {
    let mut m = Map::new();
    m.insert("type".into(), json!(l.signature));
    match &l.factor {
        Some(FactorFunction::Table(t)) => {
            m.insert("factor".into(), json!({ "table": numbers(t) }));
        }
        Some(FactorFunction::Constant(c)) => {
            m.insert("factor".into(), json!({ "constant": number(*c) }));
        }
        None => {}
    }
    Value::Object(m)
}

fn edge_value(e: &Edge) -> Value {
    json!({ "id": e.id, "label": e.label, "att": e.att })
}

fn graph_value(h: &Hypergraph, externals: Option<&[String]>) -> Value {
    let mut m = Map::new();
    m.insert(
        "nodes".into(),
        Value::Array(h.nodes.iter().map(|v| json!({ "id": v.id, "label": v.label })).collect()),
    );
    m.insert("edges".into(), Value::Array(h.edges.iter().map(edge_value).collect()));
    if let Some(x) = externals {
        m.insert("externals".into(), json!(x));
    }
    Value::Object(m)
}

fn fgg_value(g: &Fgg) -> Value {
    let mut m = space_value(&g.space);
    m.insert("nonterminals".into(), json!(g.nonterminals));
    m.insert("terminals".into(), json!(g.terminals));
    m.insert("start".into(), json!(g.start));
    let rules = g
        .rules
        .iter()
        .map(|r| {
            json!({
                "id": r.id,
                "lhs": r.lhs,
                "rhs": graph_value(&r.rhs.graph, Some(&r.rhs.externals)),
            })
        })
        .collect();
    m.insert("rules".into(), Value::Array(rules));
    Value::Object(m)
}

fn cfd_value(c: &Cfd) -> Value {
    let nodes = c
        .nodes
        .iter()
        .map(|n| match &n.kind {
            CfdKind::Case { var, hi, lo } => {
                json!({ "id": n.id, "kind": "case", "var": var, "children": [hi, lo] })
            }
            CfdKind::Factor { left, right } => json!({ "id": n.id, "kind": "factor", "children": [left, right] }),
            CfdKind::Unit => json!({ "id": n.id, "kind": "unit" }),
            CfdKind::Empty => json!({ "id": n.id, "kind": "empty" }),
        })
        .collect();
    let costs: Map<String, Value> = c.costs.iter().map(|(k, &v)| (k.clone(), number(v))).collect();
    json!({ "nodes": Value::Array(nodes), "root": c.root, "costs": costs })
}

fn spn_value(s: &Spn) -> Value {
    let nodes = s
        .nodes
        .iter()
        .map(|n| match &n.kind {
            SpnKind::Sum { weights, children } => json!({
                "id": n.id, "kind": "sum", "weights": numbers(weights), "children": children,
            }),
            SpnKind::Product { left, right } => json!({ "id": n.id, "kind": "product", "children": [left, right] }),
            SpnKind::Leaf { var, negated } => json!({ "id": n.id, "kind": "leaf", "var": var, "negated": negated }),
        })
        .collect();
    json!({ "nodes": Value::Array(nodes), "root": s.root })
}

fn err(path: impl Into<String>, message: impl Into<String>) -> ParseError {
    ParseError {
        path: path.into(),
        message: message.into(),
    }
}

fn child(path: &str, key: &str) -> String {
    if !key.is_empty() && key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        format!("{path}.{key}")
    } else {
        format!("{path}[{key:?}]")
    }
}

fn item(path: &str, i: usize) -> String {
    format!("{path}[{i}]")
}

struct Reader {
    strict: bool,
    warnings: Vec<String>,
}

type Res<T> = Result<T, ParseError>;

impl Reader {
    fn obj<'a>(&self, v: &'a Value, path: &str) -> Res<&'a Map<String, Value>> {
        v.as_object().ok_or_else(|| err(path, "expected an object"))
    }

    fn keys(&mut self, m: &Map<String, Value>, path: &str, allowed: &[&str]) -> Res<()> {
        for k in m.keys() {
            if !allowed.contains(&k.as_str()) {
                let p = child(path, k);
                if self.strict {
                    return Err(err(p, "unknown field"));
                }
                self.warnings.push(format!("{p}: unknown field ignored"));
            }
        }
        Ok(())
    }

    fn get<'a>(&self, m: &'a Map<String, Value>, key: &str, path: &str) -> Res<&'a Value> {
        m.get(key).ok_or_else(|| err(path, format!("missing field `{key}`")))
    }

    fn str<'a>(&self, m: &'a Map<String, Value>, key: &str, path: &str) -> Res<&'a str> {
        self.get(m, key, path)?
            .as_str()
            .ok_or_else(|| err(child(path, key), "expected a string"))
    }

    fn arr<'a>(&self, v: &'a Value, path: &str) -> Res<&'a Vec<Value>> {
        v.as_array().ok_or_else(|| err(path, "expected an array"))
    }

    fn strings(&self, v: &Value, path: &str) -> Res<Vec<String>> {
        self.arr(v, path)?
            .iter()
            .enumerate()
            .map(|(i, x)| {
                x.as_str()
                    .map(String::from)
                    .ok_or_else(|| err(item(path, i), "expected a string"))
            })
            .collect()
    }

    fn num(&self, v: &Value, path: &str) -> Res<f64> {
        match v {
            Value::Number(n) => n.as_f64().ok_or_else(|| err(path, "number out of range")),
            Value::String(s) if s == "inf" => Ok(f64::INFINITY),
            Value::String(s) if s == "-inf" => Ok(f64::NEG_INFINITY),
            Value::String(s) if s == "nan" => Ok(f64::NAN),
            _ => Err(err(path, "expected a number")),
        }
    }

    fn space(&mut self, m: &Map<String, Value>, path: &str) -> Res<LabelSpace> {
        let mut s = LabelSpace::new();
        let np = child(path, "node_labels");
        for (name, v) in self.obj(self.get(m, "node_labels", path)?, &np)? {
            let p = child(&np, name);
            let o = self.obj(v, &p)?;
            self.keys(o, &p, &["values"])?;
            let values = self.strings(self.get(o, "values", &p)?, &child(&p, "values"))?;
            s.add_node_label(name.clone(), values).map_err(|e| err(&p, e.to_string()))?;
        }
        let ep = child(path, "edge_labels");
        for (name, v) in self.obj(self.get(m, "edge_labels", path)?, &ep)? {
            let p = child(&ep, name);
            let o = self.obj(v, &p)?;
            self.keys(o, &p, &["type", "factor"])?;
            let sig = self.strings(self.get(o, "type", &p)?, &child(&p, "type"))?;
            match o.get("factor") {
                None => s.add_nonterminal(name.clone(), sig),
                Some(f) => {
                    let fp = child(&p, "factor");
                    let fo = self.obj(f, &fp)?;
                    self.keys(fo, &fp, &["table", "constant"])?;
                    let factor = match (fo.get("table"), fo.get("constant")) {
                        (Some(t), None) => {
                            let tp = child(&fp, "table");
                            let t = self
                                .arr(t, &tp)?
                                .iter()
                                .enumerate()
                                .map(|(i, x)| self.num(x, &item(&tp, i)))
                                .collect::<Res<Vec<f64>>>()?;
                            FactorFunction::Table(t)
                        }
                        (None, Some(c)) => FactorFunction::Constant(self.num(c, &child(&fp, "constant"))?),
                        _ => return Err(err(fp, "expected exactly one of `table` and `constant`")),
                    };
                    s.add_terminal(name.clone(), sig, factor)
                }
            }
            .map_err(|e| err(&p, e.to_string()))?;
        }
        Ok(s)
    }

    fn edge(&mut self, v: &Value, path: &str) -> Res<Edge> {
        let o = self.obj(v, path)?;
        self.keys(o, path, &["id", "label", "att"])?;
        Ok(Edge {
            id: self.str(o, "id", path)?.into(),
            label: self.str(o, "label", path)?.into(),
            att: self.strings(self.get(o, "att", path)?, &child(path, "att"))?,
        })
    }

    fn edges(&mut self, v: &Value, path: &str) -> Res<Vec<Edge>> {
        let a = self.arr(v, path)?;
        a.iter().enumerate().map(|(i, e)| self.edge(e, &item(path, i))).collect()
    }

    /// A graph, with its externals when `externals` is set.
    fn graph(&mut self, v: &Value, path: &str, externals: bool) -> Res<(Hypergraph, Vec<String>)> {
        let o = self.obj(v, path)?;
        let allowed: &[&str] = if externals {
            &["nodes", "edges", "externals"]
        } else {
            &["nodes", "edges"]
        };
        self.keys(o, path, allowed)?;
        let mut h = Hypergraph::new();
        let np = child(path, "nodes");
        for (i, n) in self.arr(self.get(o, "nodes", path)?, &np)?.iter().enumerate() {
            let p = item(&np, i);
            let no = self.obj(n, &p)?;
            self.keys(no, &p, &["id", "label"])?;
            h.add_node(self.str(no, "id", &p)?, self.str(no, "label", &p)?);
        }
        h.edges = self.edges(self.get(o, "edges", path)?, &child(path, "edges"))?;
        let ext = match o.get("externals") {
            Some(x) if externals => self.strings(x, &child(path, "externals"))?,
            _ => Vec::new(),
        };
        Ok((h, ext))
    }

    fn fgg(&mut self, v: &Value, path: &str) -> Res<Fgg> {
        let o = self.obj(v, path)?;
        self.keys(
            o,
            path,
            &["node_labels", "edge_labels", "nonterminals", "terminals", "start", "rules"],
        )?;
        let space = self.space(o, path)?;
        let nonterminals = self.strings(self.get(o, "nonterminals", path)?, &child(path, "nonterminals"))?;
        let terminals = self.strings(self.get(o, "terminals", path)?, &child(path, "terminals"))?;
        let ep = child(path, "edge_labels");
        for (name, l) in space.edge_labels() {
            let p = child(&ep, name);
            let nt = nonterminals.iter().any(|x| x == name);
            let t = terminals.iter().any(|x| x == name);
            match (nt, t, l.factor.is_some()) {
                (true, true, _) => return Err(err(p, "listed as both a nonterminal and a terminal")),
                (true, false, true) => return Err(err(child(&p, "factor"), "a nonterminal cannot have a factor")),
                (false, true, false) => return Err(err(p, "a terminal needs a factor")),
                (false, false, _) => return Err(err(p, "listed as neither a nonterminal nor a terminal")),
                _ => {}
            }
        }
        for (key, names) in [("nonterminals", &nonterminals), ("terminals", &terminals)] {
            let mut seen = BTreeSet::new();
            for (i, x) in names.iter().enumerate() {
                if !space.has_edge_label(x) {
                    return Err(err(item(&child(path, key), i), format!("`{x}` is not an edge label")));
                }
                if !seen.insert(x) {
                    return Err(err(item(&child(path, key), i), format!("`{x}` is listed twice")));
                }
            }
        }
        let start = self.str(o, "start", path)?.to_string();
        let rp = child(path, "rules");
        let mut rules = Vec::new();
        for (i, rv) in self.arr(self.get(o, "rules", path)?, &rp)?.iter().enumerate() {
            let p = item(&rp, i);
            let ro = self.obj(rv, &p)?;
            self.keys(ro, &p, &["id", "lhs", "rhs"])?;
            let (h, ext) = self.graph(self.get(ro, "rhs", &p)?, &child(&p, "rhs"), true)?;
            rules.push(Rule::new(
                self.str(ro, "id", &p)?,
                self.str(ro, "lhs", &p)?,
                Fragment::new(h, ext),
            ));
        }
        let g = Fgg::new(space, nonterminals, terminals, rules, start);
        validate_fgg(&g).map_err(|e| err(path, e.to_string()))?;
        Ok(g)
    }

    fn factor_graph(&mut self, v: &Value, path: &str) -> Res<FactorGraph> {
        let o = self.obj(v, path)?;
        self.keys(o, path, &["node_labels", "edge_labels", "graph", "provenance"])?;
        let space = self.space(o, path)?;
        let gp = child(path, "graph");
        let (h, ext) = self.graph(self.get(o, "graph", path)?, &gp, true)?;
        let graph = Fragment::new(h, ext);
        graph.validate(&space).map_err(|e| err(&gp, e.to_string()))?;
        if let Some(e) = graph.graph.edges.iter().find(|e| space.factor(&e.label).is_none()) {
            return Err(err(&gp, format!("edge `{}` has no factor", e.id)));
        }
        let mut provenance = BTreeMap::new();
        if let Some(p) = o.get("provenance") {
            let pp = child(path, "provenance");
            for (k, d) in self.obj(p, &pp)? {
                let d = d.as_str().ok_or_else(|| err(child(&pp, k), "expected a string"))?;
                provenance.insert(k.clone(), d.to_string());
            }
        }
        Ok(FactorGraph {
            space,
            graph,
            provenance,
        })
    }

    fn pfg(&mut self, v: &Value, path: &str) -> Res<Pfg> {
        let o = self.obj(v, path)?;
        self.keys(
            o,
            path,
            &["node_labels", "edge_labels", "graph", "plates", "membership", "counts"],
        )?;
        let space = self.space(o, path)?;
        let (graph, _) = self.graph(self.get(o, "graph", path)?, &child(path, "graph"), false)?;
        let plates = self.strings(self.get(o, "plates", path)?, &child(path, "plates"))?;
        let mp = child(path, "membership");
        let mut membership = BTreeMap::new();
        for (id, ps) in self.obj(self.get(o, "membership", path)?, &mp)? {
            let set: BTreeSet<String> = self.strings(ps, &child(&mp, id))?.into_iter().collect();
            membership.insert(id.clone(), set);
        }
        let cp = child(path, "counts");
        let mut counts = BTreeMap::new();
        for (b, n) in self.obj(self.get(o, "counts", path)?, &cp)? {
            let n = n
                .as_u64()
                .ok_or_else(|| err(child(&cp, b), "expected a non-negative integer"))?;
            counts.insert(b.clone(), n as usize);
        }
        let p = Pfg {
            space,
            graph,
            plates,
            membership,
            counts,
        };
        p.validate().map_err(|e| err(path, e.to_string()))?;
        Ok(p)
    }

    fn dgm(&mut self, v: &Value, path: &str) -> Res<Dgm> {
        let o = self.obj(v, path)?;
        self.keys(
            o,
            path,
            &["node_labels", "edge_labels", "h1", "h2", "h3", "e12", "e22", "e23"],
        )?;
        let space = self.space(o, path)?;
        let slice = |r: &mut Self, k: &str| -> Res<Hypergraph> {
            Ok(r.graph(r.get(o, k, path)?, &child(path, k), false)?.0)
        };
        let (h1, h2, h3) = (slice(self, "h1")?, slice(self, "h2")?, slice(self, "h3")?);
        let cross = |r: &mut Self, k: &str| -> Res<Vec<Edge>> { r.edges(r.get(o, k, path)?, &child(path, k)) };
        let d = Dgm {
            space,
            h1,
            h2,
            h3,
            e12: cross(self, "e12")?,
            e22: cross(self, "e22")?,
            e23: cross(self, "e23")?,
        };
        d.validate().map_err(|e| err(path, e.to_string()))?;
        Ok(d)
    }

    fn two_children(&self, o: &Map<String, Value>, path: &str) -> Res<[String; 2]> {
        let cp = child(path, "children");
        let c = self.strings(self.get(o, "children", path)?, &cp)?;
        <[String; 2]>::try_from(c).map_err(|_| err(cp, "expected two children"))
    }

    fn cfd(&mut self, v: &Value, path: &str) -> Res<Cfd> {
        let o = self.obj(v, path)?;
        self.keys(o, path, &["nodes", "root", "costs"])?;
        let np = child(path, "nodes");
        let mut nodes = Vec::new();
        for (i, n) in self.arr(self.get(o, "nodes", path)?, &np)?.iter().enumerate() {
            let p = item(&np, i);
            let no = self.obj(n, &p)?;
            let kind = match self.str(no, "kind", &p)? {
                "case" => {
                    self.keys(no, &p, &["id", "kind", "var", "children"])?;
                    let [hi, lo] = self.two_children(no, &p)?;
                    CfdKind::Case {
                        var: self.str(no, "var", &p)?.into(),
                        hi,
                        lo,
                    }
                }
                "factor" => {
                    self.keys(no, &p, &["id", "kind", "children"])?;
                    let [left, right] = self.two_children(no, &p)?;
                    CfdKind::Factor { left, right }
                }
                "unit" => {
                    self.keys(no, &p, &["id", "kind"])?;
                    CfdKind::Unit
                }
                "empty" => {
                    self.keys(no, &p, &["id", "kind"])?;
                    CfdKind::Empty
                }
                k => return Err(err(child(&p, "kind"), format!("unknown node kind `{k}`"))),
            };
            nodes.push(CfdNode {
                id: self.str(no, "id", &p)?.into(),
                kind,
            });
        }
        let cp = child(path, "costs");
        let mut costs = BTreeMap::new();
        for (x, c) in self.obj(self.get(o, "costs", path)?, &cp)? {
            costs.insert(x.clone(), self.num(c, &child(&cp, x))?);
        }
        let c = Cfd::new(nodes, self.str(o, "root", path)?, costs);
        c.scopes().map_err(|e| err(path, e.to_string()))?;
        Ok(c)
    }

    fn spn(&mut self, v: &Value, path: &str) -> Res<Spn> {
        let o = self.obj(v, path)?;
        self.keys(o, path, &["nodes", "root"])?;
        let np = child(path, "nodes");
        let mut nodes = Vec::new();
        for (i, n) in self.arr(self.get(o, "nodes", path)?, &np)?.iter().enumerate() {
            let p = item(&np, i);
            let no = self.obj(n, &p)?;
            let kind = match self.str(no, "kind", &p)? {
                "sum" => {
                    self.keys(no, &p, &["id", "kind", "weights", "children"])?;
                    let wp = child(&p, "weights");
                    let w = self
                        .arr(self.get(no, "weights", &p)?, &wp)?
                        .iter()
                        .enumerate()
                        .map(|(i, x)| self.num(x, &item(&wp, i)))
                        .collect::<Res<Vec<f64>>>()?;
                    let weights = <[f64; 2]>::try_from(w).map_err(|_| err(wp, "expected two weights"))?;
                    SpnKind::Sum {
                        weights,
                        children: self.two_children(no, &p)?,
                    }
                }
                "product" => {
                    self.keys(no, &p, &["id", "kind", "children"])?;
                    let [left, right] = self.two_children(no, &p)?;
                    SpnKind::Product { left, right }
                }
                "leaf" => {
                    self.keys(no, &p, &["id", "kind", "var", "negated"])?;
                    let negated = match no.get("negated") {
                        None => false,
                        Some(b) => b.as_bool().ok_or_else(|| err(child(&p, "negated"), "expected a boolean"))?,
                    };
                    SpnKind::Leaf {
                        var: self.str(no, "var", &p)?.into(),
                        negated,
                    }
                }
                k => return Err(err(child(&p, "kind"), format!("unknown node kind `{k}`"))),
            };
            nodes.push(SpnNode {
                id: self.str(no, "id", &p)?.into(),
                kind,
            });
        }
        let s = Spn::new(nodes, self.str(o, "root", path)?);
        s.validate().map_err(|e| err(path, e.to_string()))?;
        Ok(s)
    }
}
