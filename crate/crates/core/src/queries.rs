//! Posterior functionals evaluated on one joint draw of the edge
//! probabilities, and their Monte-Carlo summaries.
//!
//! A draw is an edge-indexed slice `theta` with `theta[e]` the sampled
//! probability of edge `e`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conjugate::{beta_mean, marginal_at, NodePosterior};
use crate::graph::{enumerate_paths, topological_order, Dag, GraphError, NodeId, Path};
use crate::montecarlo::{
    draw_joint, summarize, QuerySummary, SampleMatrix, SamplerConfig, SamplerError,
};

const ROWS_PER_TASK: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QueryError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error("path {0} uses a pair of nodes that is not an edge")]
    NotAPath(String),
    #[error("{0} is not reachable from the source")]
    Unreachable(String),
    #[error("graph has no unique source")]
    NoSource,
    #[error("probability of reaching {node} from the source is zero")]
    ZeroDenominator { node: String },
    #[error("invalid query `{0}`")]
    Parse(String),
}

/// Product of edge probabilities along `path`. A single-node path has
/// probability one.
pub fn path_probability(theta: &[f64], dag: &Dag, path: &Path) -> Result<f64, QueryError> {
    let edges = path
        .edges(dag)
        .ok_or_else(|| QueryError::NotAPath(path.display(dag)))?;
    Ok(edges.iter().map(|e| theta[e.0]).product())
}

/// Reachability evaluator with the topological order computed once.
#[derive(Debug, Clone)]
pub struct Reach<'a> {
    dag: &'a Dag,
    reverse_order: Vec<NodeId>,
}

impl<'a> Reach<'a> {
    pub fn new(dag: &'a Dag) -> Result<Self, GraphError> {
        let mut reverse_order = topological_order(dag)?;
        reverse_order.reverse();
        Ok(Reach { dag, reverse_order })
    }

    pub fn dag(&self) -> &'a Dag {
        self.dag
    }

    /// Probability of ever visiting `to` from every node, written into
    /// `scratch` (indexed by node).
    pub fn fill_to(&self, theta: &[f64], to: NodeId, scratch: &mut [f64]) {
        for &v in &self.reverse_order {
            scratch[v.0] = if v == to {
                1.0
            } else {
                self.dag
                    .out_edges(v)
                    .iter()
                    .map(|&e| theta[e.0] * scratch[self.dag.edge(e).1 .0])
                    .sum()
            };
        }
    }

    pub fn forward(&self, theta: &[f64], from: NodeId, to: NodeId) -> f64 {
        if from == to {
            return 1.0;
        }
        let mut scratch = vec![0.0; self.dag.node_count()];
        self.fill_to(theta, to, &mut scratch);
        scratch[from.0]
    }

    /// `P(passed through earlier | reached later)` by Bayes' rule on one
    /// draw, taking the source as the common origin.
    pub fn inverse(
        &self,
        theta: &[f64],
        source: NodeId,
        later: NodeId,
        earlier: NodeId,
    ) -> Result<f64, QueryError> {
        let denom = self.forward(theta, source, later);
        if denom == 0.0 {
            return Err(QueryError::ZeroDenominator {
                node: self.dag.name(later).to_string(),
            });
        }
        let back = self.forward(theta, earlier, later);
        if back == 0.0 {
            return Ok(0.0);
        }
        Ok(back * self.forward(theta, source, earlier) / denom)
    }

    /// Probability of ending in each absorbing node, in declaration order.
    pub fn absorption(&self, theta: &[f64], from: NodeId) -> Vec<(NodeId, f64)> {
        let mut scratch = vec![0.0; self.dag.node_count()];
        self.dag
            .nodes()
            .filter(|&n| self.dag.is_absorbing(n))
            .map(|s| {
                if s == from {
                    (s, 1.0)
                } else {
                    self.fill_to(theta, s, &mut scratch);
                    (s, scratch[from.0])
                }
            })
            .collect()
    }
}

/// Probability of ever reaching `to` from `from`.
pub fn forward_reach(
    theta: &[f64],
    dag: &Dag,
    from: NodeId,
    to: NodeId,
) -> Result<f64, QueryError> {
    check_node(dag, from)?;
    check_node(dag, to)?;
    Ok(Reach::new(dag)?.forward(theta, from, to))
}

/// Probability that a process which reached `later` passed through `earlier`.
pub fn inverse_probability(
    theta: &[f64],
    dag: &Dag,
    later: NodeId,
    earlier: NodeId,
) -> Result<f64, QueryError> {
    check_node(dag, later)?;
    check_node(dag, earlier)?;
    let source = dag.source().ok_or(QueryError::NoSource)?;
    Reach::new(dag)?.inverse(theta, source, later, earlier)
}

pub fn absorption_profile(
    theta: &[f64],
    dag: &Dag,
    from: NodeId,
) -> Result<Vec<(NodeId, f64)>, QueryError> {
    check_node(dag, from)?;
    Ok(Reach::new(dag)?.absorption(theta, from))
}

fn check_node(dag: &Dag, n: NodeId) -> Result<(), QueryError> {
    if n.0 < dag.node_count() {
        Ok(())
    } else {
        Err(GraphError::UnknownNode(format!("#{}", n.0)).into())
    }
}

/// Exact posterior mean of [`forward_reach`]: a path visits each parent at
/// most once, so its product factors over independent Dirichlet blocks and
/// the expectation is the product of Beta means.
pub fn analytic_forward_mean(
    posteriors: &[NodePosterior],
    dag: &Dag,
    from: NodeId,
    to: NodeId,
) -> Result<f64, QueryError> {
    let mut edge_mean = vec![0.0; dag.edge_count()];
    for post in posteriors {
        for (j, e) in post.edges.iter().enumerate() {
            edge_mean[e.0] = beta_mean(&marginal_at(post, j));
        }
    }
    let paths = enumerate_paths(dag, from, to)?;
    paths
        .iter()
        .map(|p| path_probability(&edge_mean, dag, p))
        .sum()
}

/// A query as written by the user, with nodes named.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QuerySpec {
    Path { nodes: Vec<String> },
    Forward { from: String, to: String },
    Inverse { later: String, earlier: String },
    AbsorptionProfile { from: String },
}

impl fmt::Display for QuerySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QuerySpec::Path { nodes } => write!(f, "path:{}", nodes.join("-")),
            QuerySpec::Forward { from, to } => write!(f, "forward:{from}:{to}"),
            QuerySpec::Inverse { later, earlier } => write!(f, "inverse:{later}:{earlier}"),
            QuerySpec::AbsorptionProfile { from } => write!(f, "absorption:{from}"),
        }
    }
}

/// Accepts `path:A-B-C`, `forward:A:H`, `inverse:H:I` and `absorption:A`.
impl FromStr for QuerySpec {
    type Err = QueryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || QueryError::Parse(s.to_string());
        let parts: Vec<&str> = s.trim().split(':').collect();
        let spec = match parts.as_slice() {
            ["path", p] => QuerySpec::Path {
                nodes: p.split('-').map(str::to_string).collect(),
            },
            ["forward", a, b] => QuerySpec::Forward {
                from: a.to_string(),
                to: b.to_string(),
            },
            ["inverse", later, earlier] => QuerySpec::Inverse {
                later: later.to_string(),
                earlier: earlier.to_string(),
            },
            ["absorption" | "absorption_profile", a] => QuerySpec::AbsorptionProfile {
                from: a.to_string(),
            },
            _ => return Err(bad()),
        };
        let names: Vec<&String> = match &spec {
            QuerySpec::Path { nodes } => nodes.iter().collect(),
            QuerySpec::Forward { from, to } => vec![from, to],
            QuerySpec::Inverse { later, earlier } => vec![later, earlier],
            QuerySpec::AbsorptionProfile { from } => vec![from],
        };
        if names.iter().any(|n| n.is_empty()) {
            return Err(bad());
        }
        Ok(spec)
    }
}

/// A query resolved against a graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Query {
    Path(Path),
    Forward { from: NodeId, to: NodeId },
    Inverse { later: NodeId, earlier: NodeId },
    AbsorptionProfile { from: NodeId },
}

impl QuerySpec {
    pub fn resolve(&self, dag: &Dag) -> Result<Query, QueryError> {
        Ok(match self {
            QuerySpec::Path { nodes } => {
                let path = Path::from_names(dag, nodes)?;
                if path.edges(dag).is_none() {
                    return Err(QueryError::NotAPath(nodes.join("-")));
                }
                Query::Path(path)
            }
            QuerySpec::Forward { from, to } => Query::Forward {
                from: dag.node(from)?,
                to: dag.node(to)?,
            },
            QuerySpec::Inverse { later, earlier } => {
                let source = dag.source().ok_or(QueryError::NoSource)?;
                let seen = dag.reachable_from(source);
                let later = dag.node(later)?;
                let earlier = dag.node(earlier)?;
                for n in [later, earlier] {
                    if !seen[n.0] {
                        return Err(QueryError::Unreachable(dag.name(n).to_string()));
                    }
                }
                Query::Inverse { later, earlier }
            }
            QuerySpec::AbsorptionProfile { from } => Query::AbsorptionProfile {
                from: dag.node(from)?,
            },
        })
    }
}

/// One scalar output of a query. `target` names the absorbing node for
/// absorption profiles.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryOutput {
    pub target: Option<NodeId>,
    pub summary: QuerySummary,
    pub values: Vec<f64>,
}

/// Evaluates `query` on every row of `samples`, in row order.
pub fn evaluate_query(
    query: &Query,
    samples: &SampleMatrix,
    dag: &Dag,
    cfg: &SamplerConfig,
) -> Result<Vec<QueryOutput>, QueryError> {
    let reach = Reach::new(dag)?;
    let source = dag.source();
    let targets: Vec<Option<NodeId>> = match query {
        Query::AbsorptionProfile { .. } => dag
            .nodes()
            .filter(|&n| dag.is_absorbing(n))
            .map(Some)
            .collect(),
        _ => vec![None],
    };
    let width = targets.len();
    let m_total = samples.samples();

    // row-major: width values per sample
    let mut flat = vec![0.0; m_total * width];
    flat.par_chunks_mut(ROWS_PER_TASK * width)
        .enumerate()
        .try_for_each(|(task, chunk)| -> Result<(), QueryError> {
            let mut theta = vec![0.0; samples.edge_count()];
            for (r, out) in chunk.chunks_mut(width).enumerate() {
                samples.fill_edge_row(task * ROWS_PER_TASK + r, &mut theta);
                match query {
                    Query::Path(p) => out[0] = path_probability(&theta, dag, p)?,
                    Query::Forward { from, to } => out[0] = reach.forward(&theta, *from, *to),
                    Query::Inverse { later, earlier } => {
                        let source = source.ok_or(QueryError::NoSource)?;
                        out[0] = reach.inverse(&theta, source, *later, *earlier)?;
                    }
                    Query::AbsorptionProfile { from } => {
                        for (o, (_, v)) in out.iter_mut().zip(reach.absorption(&theta, *from)) {
                            *o = v;
                        }
                    }
                }
            }
            Ok(())
        })?;

    targets
        .into_iter()
        .enumerate()
        .map(|(k, target)| {
            let values: Vec<f64> = flat.iter().skip(k).step_by(width).copied().collect();
            let summary = summarize(&values, cfg)?;
            Ok(QueryOutput {
                target,
                summary,
                values,
            })
        })
        .collect()
}

/// Draws a fresh sample matrix and evaluates one query on it.
pub fn run_query(
    query: &Query,
    posteriors: &[NodePosterior],
    dag: &Dag,
    cfg: &SamplerConfig,
) -> Result<Vec<QueryOutput>, QueryError> {
    let samples = draw_joint(posteriors, dag.edge_count(), cfg)?;
    evaluate_query(query, &samples, dag, cfg)
}
