//! Factor graph grammars: grammars that generate sets of factor graphs, with
//! exact inference over everything a grammar generates.

pub mod adapters;
pub mod compile;
pub mod conjunction;
pub mod eval;
pub mod factorize;
pub mod fixtures;
pub mod grammar;
pub mod graph;
pub mod inference;
pub mod io;
pub mod semiring;

pub use eval::{brute_force_sum_product, variable_elimination};
pub use grammar::{DerivationTree, Fgg, GrammarError, Rule};
pub use graph::{
    assignment_weight, validate, Assignment, Edge, EdgeLabel, FactorFunction, Fragment, GraphError,
    Hypergraph, LabelSpace, Node,
};
pub use inference::{solve_sum_product, InferenceError, SolverConfig, SumProductResult};
pub use semiring::Semiring;

// The guide in book/ is compiled here so its examples run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/grammars.md")]
    mod grammars {}
    #[doc = include_str!("../../../book/src/inference.md")]
    mod inference {}
    #[doc = include_str!("../../../book/src/conjunction.md")]
    mod conjunction {}
    #[doc = include_str!("../../../book/src/transforms.md")]
    mod transforms {}
    #[doc = include_str!("../../../book/src/adapters.md")]
    mod adapters {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
