//! Bayesian inference of transition probabilities on absorbing directed
//! acyclic graphs.
//!
//! Each non-absorbing node carries a Dirichlet posterior over its outgoing
//! edges ([`conjugate`]). Joint posterior draws ([`montecarlo`]) are pushed
//! through path, reachability, absorption and inverse-probability
//! functionals ([`queries`]). [`cli`] and [`report`] wire these into the
//! `dagpost` command-line tool.

pub mod cli;
pub mod conjugate;
pub mod dataset;
pub mod graph;
pub mod io;
pub mod montecarlo;
pub mod queries;
pub mod report;

pub use conjugate::{
    beta_marginal, beta_mean, beta_quantile, fit_posterior, flow_check, tally_trajectories,
    BetaMarginal, NodePosterior, PriorSpec, TransitionCounts,
};
pub use graph::{
    classify_nodes, enumerate_paths, parse_graph, topological_order, validate, Dag, NodeId, Path,
};
pub use montecarlo::{
    draw_joint, summarize, QuerySummary, SampleMatrix, SamplerConfig, SamplingScheme,
};
pub use queries::{
    absorption_profile, analytic_forward_mean, forward_reach, inverse_probability,
    path_probability, run_query, Query, QuerySpec,
};
