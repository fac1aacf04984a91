//! Sum-product over every graph a grammar generates.
//!
//! The unknowns are the tables `psi_X`, one entry per assignment to the
//! endpoints of `X`. Each entry equals the semiring sum of the inside
//! weights of the `X` rules, which gives a monotone polynomial system. The
//! system is solved one strongly connected component of the nonterminal
//! graph at a time, callees first.

mod query;
mod solve;
mod tables;
mod viterbi;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::grammar::GrammarError;
use crate::graph::GraphError;
use crate::semiring::Semiring;

pub use query::{check_consistency, node_distribution, ConsistencyReport};
pub use solve::solve_sum_product;
pub use tables::rule_inside;
pub use viterbi::{viterbi_derivation, ViterbiResult};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InferenceError {
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("no table for nonterminal `{0}`")]
    MissingChildTable(String),
    #[error("table for `{label}` would have {size:e} entries (cap {cap})")]
    TableTooLarge { label: String, size: f64, cap: usize },
    #[error("solver did not converge within {0} iterations")]
    NonConvergence(usize),
    #[error("linear system for {0:?} is singular or has no non-negative solution")]
    SingularLinearSystem(Vec<String>),
    #[error("the grammar has no derivation with positive weight")]
    NoDerivation,
    #[error("the Viterbi solve did not converge")]
    NotConverged,
    #[error("unknown rule `{0}`")]
    UnknownRule(String),
    #[error("rule `{rule}` has no node `{node}`")]
    UnknownNode { rule: String, node: String },
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("derivation reconstruction failed: {0}")]
    Reconstruction(String),
}

/// How cyclic components are solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    /// Linear components in the real semiring by Gaussian elimination,
    /// everything else by Newton's method with Kleene fallback.
    #[default]
    Auto,
    Kleene,
    Newton,
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "auto" => Ok(Method::Auto),
            "kleene" => Ok(Method::Kleene),
            "newton" => Ok(Method::Newton),
            _ => Err(format!("unknown method `{s}` (expected auto, kleene or newton)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub method: Method,
    /// Absolute tolerance on the largest change of any table entry.
    pub tol: f64,
    pub max_iter: usize,
    /// Fail with [`InferenceError::NonConvergence`] instead of returning a
    /// partial result.
    pub strict: bool,
    /// Largest table (or rule assignment space) that may be materialized.
    pub max_table: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            method: Method::Auto,
            tol: 1e-12,
            max_iter: 10_000,
            strict: false,
            max_table: 100_000_000,
        }
    }
}

impl SolverConfig {
    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn check(&self) -> Result<(), InferenceError> {
        if !(self.tol > 0.0) {
            return Err(InferenceError::InvalidConfig("tol must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(InferenceError::InvalidConfig("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// A dense table over the assignments to a nonterminal's endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct SemiringTable {
    pub nonterminal: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl SemiringTable {
    pub fn get(&self, index: &[usize]) -> f64 {
        self.values[crate::graph::flat_index(&self.shape, index.iter().copied())]
    }
}

/// The method that actually solved a component.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    Direct,
    Linear,
    Kleene,
    Newton,
    /// Newton's method that handed over to Kleene iteration.
    NewtonKleene,
}

impl fmt::Display for SolveMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolveMethod::Direct => "direct",
            SolveMethod::Linear => "linear",
            SolveMethod::Kleene => "kleene",
            SolveMethod::Newton => "newton",
            SolveMethod::NewtonKleene => "newton+kleene",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SccReport {
    pub nonterminals: Vec<String>,
    pub method: SolveMethod,
    /// Zero for direct evaluation and linear solves.
    pub iterations: usize,
    pub converged: bool,
    /// Every Kleene iterate was entrywise at least the previous one.
    pub monotone: bool,
    /// The least solution is infinite; affected entries are `+inf`.
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SumProductResult {
    pub semiring: Semiring,
    pub z: f64,
    pub psi: BTreeMap<String, SemiringTable>,
    pub scc_report: Vec<SccReport>,
    pub converged: bool,
    /// Number of rule inside-table evaluations performed.
    pub rule_inside_calls: usize,
}
