use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use log::warn;
use serde_json::{json, Map, Value};

use fgg::adapters::{cfd_to_fgg, dgm_to_fgg, pfg_to_fgg, spn_to_fgg, AdapterError};
use fgg::compile::{compile, verify_compile, CompileError};
use fgg::conjunction::{conjoin_with, ConjoinOptions, Mode};
use fgg::factorize::{factorize_fgg, Strategy};
use fgg::grammar::{classify_recursion, derive, enumerate_derivations, is_nonreentrant};
use fgg::inference::{node_distribution, viterbi_derivation, Method};
use fgg::io::{self, number, Artifact, FactorGraph, Kind, ParseError, ParseOptions};
use fgg::{solve_sum_product, Fgg, Fragment, InferenceError, Semiring, SolverConfig};

#[derive(Parser)]
#[command(name = "fggtool", version, about = "Build, combine and evaluate factor graph grammars")]
struct Cli {
    /// Print machine-readable results and diagnostics.
    #[arg(long, global = true)]
    json: bool,
    /// Reject unknown fields in input documents.
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check that a document parses and validates.
    Validate { file: PathBuf },
    /// Report the recursion class and reentrancy of a grammar.
    Classify { file: PathBuf },
    /// Conjoin two grammars.
    Conjoin {
        a: PathBuf,
        b: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long, default_value = "by-id")]
        mode: Mode,
        /// Drop rules that cannot occur in a complete derivation.
        #[arg(long)]
        prune: bool,
    },
    /// Sum-product over all graphs a grammar generates.
    Sumproduct {
        file: PathBuf,
        #[arg(long, default_value = "real")]
        semiring: Semiring,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Highest-weight derivation and assignment.
    Viterbi {
        file: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Unnormalized distribution of one right-hand side node, pinned in
    /// every instance of its rule.
    Marginal {
        file: PathBuf,
        #[arg(long)]
        rule: String,
        #[arg(long)]
        node: String,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Split large right-hand sides along tree decompositions.
    Factorize {
        file: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long, default_value = "minfill")]
        strategy: Strategy,
        /// Print the width of every rule.
        #[arg(long)]
        report: bool,
    },
    /// Compile a nonreentrant grammar into a single factor graph.
    ToFactorgraph {
        file: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Compare the partition functions of the grammar and the graph.
        #[arg(long)]
        verify: bool,
    },
    /// Enumerate derivations, optionally writing out one derived graph.
    Derive {
        file: PathBuf,
        #[arg(long, default_value_t = 6)]
        max_depth: usize,
        #[arg(long, default_value_t = 20)]
        max_count: usize,
        /// Write the graph of this derivation (0-based).
        #[arg(long)]
        emit: Option<usize>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Convert another formalism into a grammar.
    Import {
        #[arg(long)]
        format: Format,
        file: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Unrolling length for dynamic models.
        #[arg(short)]
        n: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Pfg,
    Dgm,
    Cfd,
    Spn,
}

#[derive(clap::Args)]
struct SolverArgs {
    #[arg(long, default_value = "auto")]
    method: Method,
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iter: usize,
}

impl SolverArgs {
    fn default_config() -> Result<SolverConfig, Failure> {
        SolverArgs {
            method: Method::Auto,
            tol: 1e-12,
            max_iter: 10_000,
        }
        .config()
    }

    fn config(&self) -> Result<SolverConfig, Failure> {
        let mut cfg = SolverConfig {
            method: self.method,
            tol: self.tol,
            max_iter: self.max_iter,
            ..SolverConfig::default()
        };
        if let Ok(cap) = std::env::var("FGG_MAX_TABLE") {
            cfg.max_table = cap
                .parse()
                .map_err(|_| Failure::invalid(anyhow!("FGG_MAX_TABLE must be a positive integer, got `{cap}`")))?;
        }
        cfg.check().map_err(Failure::from)?;
        Ok(cfg)
    }
}

const EXIT_INVALID: u8 = 1;
const EXIT_NONCONVERGENCE: u8 = 2;
const EXIT_UNSUPPORTED: u8 = 3;

struct Failure {
    code: u8,
    error: anyhow::Error,
    path: Option<String>,
}

impl Failure {
    fn invalid(error: anyhow::Error) -> Self {
        Failure {
            code: EXIT_INVALID,
            error,
            path: None,
        }
    }

    fn kind(&self) -> &'static str {
        match self.code {
            EXIT_NONCONVERGENCE => "non-convergence",
            EXIT_UNSUPPORTED => "unsupported",
            _ if self.path.is_some() => "parse",
            _ => "invalid",
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Failure::invalid(error)
    }
}

impl From<ParseError> for Failure {
    fn from(e: ParseError) -> Self {
        Failure {
            code: EXIT_INVALID,
            path: Some(e.path.clone()),
            error: e.into(),
        }
    }
}

impl From<InferenceError> for Failure {
    fn from(e: InferenceError) -> Self {
        let code = match e {
            InferenceError::NonConvergence(_) | InferenceError::NotConverged => EXIT_NONCONVERGENCE,
            _ => EXIT_INVALID,
        };
        Failure {
            code,
            error: e.into(),
            path: None,
        }
    }
}

impl From<CompileError> for Failure {
    fn from(e: CompileError) -> Self {
        match e {
            CompileError::Inference(e) => e.into(),
            CompileError::ReentrantInput(_) => Failure {
                code: EXIT_UNSUPPORTED,
                error: e.into(),
                path: None,
            },
            e => Failure::invalid(e.into()),
        }
    }
}

impl From<AdapterError> for Failure {
    fn from(e: AdapterError) -> Self {
        let code = match e {
            AdapterError::NotConvertible(_) => EXIT_UNSUPPORTED,
            _ => EXIT_INVALID,
        };
        Failure {
            code,
            error: e.into(),
            path: None,
        }
    }
}

type Res<T> = Result<T, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if cli.json {
                let mut e = json!({ "kind": f.kind(), "message": format!("{:#}", f.error), "exit_code": f.code });
                if let Some(p) = &f.path {
                    e["path"] = json!(p);
                }
                eprintln!("{}", json!({ "error": e }));
            } else {
                eprintln!("error: {:#}", f.error);
            }
            ExitCode::from(f.code)
        }
    }
}

fn read(path: &Path, strict: bool) -> Res<Artifact> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let parsed = io::parse(&text, ParseOptions { strict }).map_err(|e| ParseError {
        path: e.path,
        message: format!("{}: {}", path.display(), e.message),
    })?;
    for w in parsed.warnings {
        warn!("{}: {w}", path.display());
    }
    Ok(parsed.artifact)
}

fn read_fgg(path: &Path, strict: bool) -> Res<Fgg> {
    match read(path, strict)? {
        Artifact::Fgg(g) => Ok(g),
        a => Err(anyhow!("{}: expected an fgg document, found {}", path.display(), a.kind()).into()),
    }
}

fn write(artifact: &Artifact, output: Option<&Path>) -> Res<()> {
    let text = io::serialize(artifact);
    match output {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

/// Prints `body` as a result document with `--json`, `human` otherwise.
fn report(json: bool, body: Value, human: impl fmt::Display) {
    if json {
        print!("{}", io::serialize(&Artifact::Result(body)));
    } else {
        print!("{human}");
    }
}

/// `x` to 12 significant digits.
fn sig12(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return x.to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..12).contains(&exp) {
        format!("{:.*}", (11 - exp) as usize, x)
    } else {
        format!("{x:.11e}")
    }
}

fn run(cli: &Cli) -> Res<()> {
    let strict = cli.strict;
    match &cli.command {
        Command::Validate { file } => {
            let a = read(file, strict)?;
            let mut body = json!({ "valid": true, "kind": a.kind().as_str() });
            let mut human = format!("ok: {}", a.kind());
            if let Artifact::Fgg(g) = &a {
                body["rules"] = json!(g.rules.len());
                body["nonterminals"] = json!(g.nonterminals.len());
                human += &format!(" ({} rules, {} nonterminals)", g.rules.len(), g.nonterminals.len());
            }
            report(cli.json, body, human + "\n");
        }
        Command::Classify { file } => {
            let g = read_fgg(file, strict)?;
            let rec = classify_recursion(&g);
            let nonreentrant = is_nonreentrant(&g);
            let re = if nonreentrant { "nonreentrant" } else { "reentrant" };
            report(
                cli.json,
                json!({ "recursion": rec.to_string(), "reentrant": !nonreentrant }),
                format!("{rec}, {re}\n"),
            );
        }
        Command::Conjoin {
            a,
            b,
            output,
            mode,
            prune,
        } => {
            let (g1, g2) = (read_fgg(a, strict)?, read_fgg(b, strict)?);
            let g = conjoin_with(
                &g1,
                &g2,
                ConjoinOptions {
                    mode: *mode,
                    prune: *prune,
                },
            )
            .map_err(|e| Failure::invalid(e.into()))?;
            write(&Artifact::Fgg(g), output.as_deref())?;
        }
        Command::Sumproduct { file, semiring, solver } => {
            let g = read_fgg(file, strict)?;
            let r = solve_sum_product(&g, *semiring, &solver.config()?)?;
            let sccs: Vec<Value> = r
                .scc_report
                .iter()
                .map(|s| {
                    json!({
                        "nonterminals": s.nonterminals,
                        "method": s.method.to_string(),
                        "iterations": s.iterations,
                        "converged": s.converged,
                        "diverged": s.diverged,
                        "monotone": s.monotone,
                    })
                })
                .collect();
            let body = json!({
                "semiring": r.semiring.name(),
                "z": number(r.z),
                "converged": r.converged,
                "sccs": sccs,
            });
            let mut human = format!("Z = {}\n", sig12(r.z));
            for s in &r.scc_report {
                human += &format!(
                    "  [{}] {}, {} iterations{}{}\n",
                    s.nonterminals.join(" "),
                    s.method,
                    s.iterations,
                    if s.converged { "" } else { ", not converged" },
                    if s.diverged { ", diverged" } else { "" },
                );
            }
            report(cli.json, body, human);
            if !r.converged {
                return Err(Failure {
                    code: EXIT_NONCONVERGENCE,
                    error: anyhow!("the solver did not converge"),
                    path: None,
                });
            }
        }
        Command::Viterbi { file, solver } => {
            let g = read_fgg(file, strict)?;
            let v = viterbi_derivation(&g, &solver.config()?)?;
            let h = derive(&g, &v.tree).map_err(|e| Failure::invalid(e.into()))?;
            let mut values = Map::new();
            let mut human = format!("weight = {}\n{}", sig12(v.weight), v.tree);
            for n in &h.nodes {
                let Some(i) = v.assignment.get(&n.id) else { continue };
                let value = g.space.domain(&n.label).map_or_else(|| i.to_string(), |d| d[i].clone());
                human += &format!("{} = {value}\n", n.id);
                values.insert(n.id.clone(), json!(value));
            }
            report(
                cli.json,
                json!({
                    "z": number(v.z),
                    "weight": number(v.weight),
                    "tree": tree_value(&v.tree),
                    "assignment": values,
                }),
                human,
            );
        }
        Command::Marginal { file, rule, node, solver } => {
            let g = read_fgg(file, strict)?;
            let p = node_distribution(&g, rule, node, &solver.config()?)?;
            let label = g
                .rule(rule)
                .and_then(|r| r.rhs.graph.node(node))
                .map(|n| n.label.clone())
                .unwrap_or_default();
            let domain = g.space.domain(&label).unwrap_or(&[]);
            let mut dist = Map::new();
            let mut human = String::new();
            for (v, &x) in domain.iter().zip(&p) {
                human += &format!("{v}\t{}\n", sig12(x));
                dist.insert(v.clone(), number(x));
            }
            report(
                cli.json,
                json!({ "rule": rule, "node": node, "distribution": dist }),
                human,
            );
        }
        Command::Factorize {
            file,
            output,
            strategy,
            report: show,
        } => {
            let g = read_fgg(file, strict)?;
            let (out, r) = factorize_fgg(&g, *strategy).map_err(|e| Failure::invalid(e.into()))?;
            write(&Artifact::Fgg(out), output.as_deref())?;
            if *show {
                let mut human = format!("strategy {}, width {}\n", r.strategy, r.width());
                for w in &r.rules {
                    human += &format!("  {}: {} nodes, width {}, {} bags\n", w.rule, w.nodes, w.width, w.bags);
                }
                let rules: Vec<Value> = r
                    .rules
                    .iter()
                    .map(|w| json!({ "rule": w.rule, "nodes": w.nodes, "width": w.width, "bags": w.bags }))
                    .collect();
                let body = json!({ "strategy": r.strategy.to_string(), "width": r.width(), "rules": rules });
                if output.is_some() {
                    report(cli.json, body, human);
                } else if cli.json {
                    eprint!("{}", io::serialize(&Artifact::Result(body)));
                } else {
                    eprint!("{human}");
                }
            }
        }
        Command::ToFactorgraph { file, output, verify } => {
            let g = read_fgg(file, strict)?;
            let c = compile(&g)?;
            let fg = FactorGraph {
                provenance: c.provenance.iter().map(|(k, o)| (k.clone(), o.to_string())).collect(),
                space: c.space,
                graph: Fragment::new(c.graph, Vec::new()),
            };
            write(&Artifact::FactorGraph(fg), output.as_deref())?;
            if *verify {
                let r = verify_compile(&g, &SolverArgs::default_config()?)?;
                let human = format!(
                    "grammar Z = {}\ngraph Z = {} ({})\nrelative difference {:e}\n",
                    sig12(r.z_grammar),
                    sig12(r.z_compiled),
                    r.method,
                    r.rel_diff
                );
                let body = json!({
                    "z_grammar": number(r.z_grammar),
                    "z_compiled": number(r.z_compiled),
                    "rel_diff": number(r.rel_diff),
                    "method": r.method,
                });
                if output.is_some() {
                    report(cli.json, body, human);
                } else {
                    eprint!("{human}");
                }
                if !(r.rel_diff <= 1e-9) {
                    return Err(anyhow!("compiled graph disagrees with the grammar").into());
                }
            }
        }
        Command::Derive {
            file,
            max_depth,
            max_count,
            emit,
            output,
        } => {
            let g = read_fgg(file, strict)?;
            let en = enumerate_derivations(&g, *max_depth, *max_count);
            if let Some(i) = emit {
                let tree = en
                    .trees
                    .get(*i)
                    .ok_or_else(|| anyhow!("only {} derivations were enumerated", en.trees.len()))?;
                let h = derive(&g, tree).map_err(|e| Failure::invalid(e.into()))?;
                let fg = FactorGraph {
                    space: g.space.clone(),
                    graph: Fragment::new(h, Vec::new()),
                    provenance: Default::default(),
                };
                return write(&Artifact::FactorGraph(fg), output.as_deref());
            }
            let mut human = String::new();
            for (i, t) in en.trees.iter().enumerate() {
                human += &format!("# {i}\n{t}");
            }
            if en.truncated {
                human += &format!("(stopped after {} derivations)\n", en.trees.len());
            } else if en.depth_limited {
                human += &format!("(derivations deeper than {max_depth} omitted)\n");
            }
            let trees: Vec<Value> = en.trees.iter().map(tree_value).collect();
            report(
                cli.json,
                json!({ "trees": trees, "truncated": en.truncated, "depth_limited": en.depth_limited }),
                human,
            );
        }
        Command::Import { format, file, output, n } => {
            let a = read(file, strict)?;
            let g = match (format, a) {
                (Format::Pfg, Artifact::Pfg(p)) => pfg_to_fgg(&p)?,
                (Format::Dgm, Artifact::Dgm(d)) => {
                    let n = n.ok_or_else(|| anyhow!("-n is required for dgm"))?;
                    dgm_to_fgg(&d, n)?
                }
                (Format::Cfd, Artifact::Cfd(c)) => cfd_to_fgg(&c)?,
                (Format::Spn, Artifact::Spn(s)) => spn_to_fgg(&s)?,
                (f, a) => {
                    let want = match f {
                        Format::Pfg => Kind::Pfg,
                        Format::Dgm => Kind::Dgm,
                        Format::Cfd => Kind::Cfd,
                        Format::Spn => Kind::Spn,
                    };
                    return Err(anyhow!("{}: expected a {want} document, found {}", file.display(), a.kind()).into());
                }
            };
            write(&Artifact::Fgg(g), output.as_deref())?;
        }
    }
    Ok(())
}

fn tree_value(t: &fgg::DerivationTree) -> Value {
    let children: Map<String, Value> = t.children.iter().map(|(e, c)| (e.clone(), tree_value(c))).collect();
    json!({ "rule": t.rule, "children": children })
}
