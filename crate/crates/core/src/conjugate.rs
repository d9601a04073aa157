//! Transition counts, Dirichlet priors, the conjugate posterior update and
//! exact Beta marginal summaries.
//!
//! Prior weights are held as exact rationals so that posterior parameters
//! such as `15 + 1/3` can be reported without rounding; everything numeric
//! downstream works on the `f64` images.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive};
use thiserror::Error;

use crate::graph::{Dag, EdgeId, GraphError, NodeId};
use statrs::distribution::{Beta, ContinuousCDF};
use statrs::function::beta::beta_reg;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConjugateError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("edge {src} -> {dst} is not in the graph")]
    NotAnEdge { src: String, dst: String },
    #[error("duplicate count for edge {src} -> {dst}")]
    DuplicateCount { src: String, dst: String },
    #[error("line {line}: transition {src} -> {dst} is not an edge of the graph")]
    NonEdgeTransition {
        line: usize,
        src: String,
        dst: String,
    },
    #[error("line {line}: unknown node `{node}`")]
    UnknownTrajectoryNode { line: usize, node: String },
    #[error("line {line}: trajectory starts at {node}, not at the source")]
    NotFromSource { line: usize, node: String },
    #[error("line {line}: trajectory ends at {node}, which is not absorbing")]
    NotAbsorbing { line: usize, node: String },
    #[error("graph has no unique source")]
    NoSource,
    #[error("prior weight for {src} -> {dst} must be positive, got {value}")]
    NonPositivePrior {
        src: String,
        dst: String,
        value: String,
    },
    #[error("no custom prior weight for edge {src} -> {dst}")]
    MissingPrior { src: String, dst: String },
    #[error("invalid Beta({a}, {b}) marginal")]
    BadMarginal { a: f64, b: f64 },
    #[error("{child} is not a child of {parent}")]
    UnknownChild { parent: String, child: String },
    #[error("probability {0} is outside (0, 1)")]
    InvalidProbability(f64),
}

/// Observed transition counts, one per edge of the associated graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionCounts {
    counts: Vec<u64>,
}

impl TransitionCounts {
    pub fn zeros(dag: &Dag) -> Self {
        TransitionCounts {
            counts: vec![0; dag.edge_count()],
        }
    }

    /// Builds counts from `(src, dst, count)` triples; unlisted edges are 0.
    pub fn from_named<I, S>(dag: &Dag, rows: I) -> Result<Self, ConjugateError>
    where
        I: IntoIterator<Item = (S, S, u64)>,
        S: AsRef<str>,
    {
        let mut out = Self::zeros(dag);
        let mut seen = vec![false; dag.edge_count()];
        for (src, dst, count) in rows {
            let (src, dst) = (src.as_ref(), dst.as_ref());
            let not_edge = || ConjugateError::NotAnEdge {
                src: src.to_string(),
                dst: dst.to_string(),
            };
            let s = dag.node(src).map_err(|_| not_edge())?;
            let d = dag.node(dst).map_err(|_| not_edge())?;
            let e = dag.find_edge(s, d).ok_or_else(not_edge)?;
            if std::mem::replace(&mut seen[e.0], true) {
                return Err(ConjugateError::DuplicateCount {
                    src: src.to_string(),
                    dst: dst.to_string(),
                });
            }
            out.counts[e.0] = count;
        }
        Ok(out)
    }

    pub fn get(&self, edge: EdgeId) -> u64 {
        self.counts[edge.0]
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.counts
    }

    /// Number of departures from `node`.
    pub fn total_out(&self, dag: &Dag, node: NodeId) -> u64 {
        dag.out_edges(node).iter().map(|e| self.counts[e.0]).sum()
    }

    pub fn total_in(&self, dag: &Dag, node: NodeId) -> u64 {
        dag.in_edges(node).iter().map(|e| self.counts[e.0]).sum()
    }
}

/// Counts consecutive node pairs in a log of comma-separated trajectories.
/// Each trajectory must start at the source and end at an absorbing node.
pub fn tally_trajectories(text: &str, dag: &Dag) -> Result<TransitionCounts, ConjugateError> {
    let source = dag.source().ok_or(ConjugateError::NoSource)?;
    let mut counts = TransitionCounts::zeros(dag);
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let nodes = trimmed
            .split(',')
            .map(|t| {
                let t = t.trim();
                dag.node(t)
                    .map_err(|_| ConjugateError::UnknownTrajectoryNode {
                        line,
                        node: t.to_string(),
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if nodes[0] != source {
            return Err(ConjugateError::NotFromSource {
                line,
                node: dag.name(nodes[0]).to_string(),
            });
        }
        for w in nodes.windows(2) {
            let e = dag
                .find_edge(w[0], w[1])
                .ok_or_else(|| ConjugateError::NonEdgeTransition {
                    line,
                    src: dag.name(w[0]).to_string(),
                    dst: dag.name(w[1]).to_string(),
                })?;
            counts.counts[e.0] += 1;
        }
        let last = *nodes.last().unwrap();
        if !dag.is_absorbing(last) {
            return Err(ConjugateError::NotAbsorbing {
                line,
                node: dag.name(last).to_string(),
            });
        }
    }
    Ok(counts)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeFlow {
    pub node: NodeId,
    pub inflow: u64,
    pub outflow: u64,
}

impl NodeFlow {
    pub fn balanced(&self) -> bool {
        self.inflow == self.outflow
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowReport {
    /// Departures from the source.
    pub cohort_size: u64,
    /// One entry per transient node, in declaration order.
    pub transient: Vec<NodeFlow>,
}

impl FlowReport {
    pub fn warnings(&self) -> impl Iterator<Item = &NodeFlow> {
        self.transient.iter().filter(|f| !f.balanced())
    }
}

/// Compares inflow and outflow at every transient node. Imbalance is only a
/// warning since real cohorts may be censored.
pub fn flow_check(counts: &TransitionCounts, dag: &Dag) -> FlowReport {
    let source = dag.source();
    let cohort_size = source.map_or(0, |s| counts.total_out(dag, s));
    let transient = dag
        .nodes()
        .filter(|&n| Some(n) != source && !dag.is_absorbing(n))
        .map(|n| NodeFlow {
            node: n,
            inflow: counts.total_in(dag, n),
            outflow: counts.total_out(dag, n),
        })
        .collect();
    FlowReport {
        cohort_size,
        transient,
    }
}

/// Parses a decimal literal such as `0.25`, `3`, `-1.5e-3` into an exact
/// rational.
pub fn parse_decimal(text: &str) -> Option<BigRational> {
    let text = text.trim();
    let (mantissa, exponent) = match text.find(['e', 'E']) {
        Some(i) => (&text[..i], text[i + 1..].parse::<i32>().ok()?),
        None => (text, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = match digits.split_once('.') {
        Some((i, f)) => (i, f),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part
        .bytes()
        .chain(frac_part.bytes())
        .all(|b| b.is_ascii_digit())
    {
        return None;
    }
    let all: String = format!("{int_part}{frac_part}");
    let mut numer: BigInt = all.parse().ok()?;
    if negative {
        numer = -numer;
    }
    let scale = exponent - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let value = if scale >= 0 {
        BigRational::from_integer(numer * num_traits::pow(ten, scale as usize))
    } else {
        BigRational::new(numer, num_traits::pow(ten, (-scale) as usize))
    };
    Some(value)
}

/// Dirichlet prior family applied independently at every parent node.
#[derive(Debug, Clone, PartialEq)]
pub enum PriorSpec {
    /// `1 / J` per child, where `J` is the parent's out-degree.
    Perks,
    /// The same weight on every edge.
    Symmetric(BigRational),
    /// Explicit weights keyed by `(src, dst)` names.
    Custom(BTreeMap<(String, String), BigRational>),
}

impl PriorSpec {
    pub fn symmetric(c: f64) -> Option<Self> {
        BigRational::from_float(c).map(PriorSpec::Symmetric)
    }

    /// Prior weight on `edge`, validated to be positive.
    pub fn weight(&self, dag: &Dag, edge: EdgeId) -> Result<BigRational, ConjugateError> {
        let (s, d) = dag.edge(edge);
        let names = || (dag.name(s).to_string(), dag.name(d).to_string());
        let w = match self {
            PriorSpec::Perks => BigRational::new(BigInt::one(), BigInt::from(dag.out_degree(s))),
            PriorSpec::Symmetric(c) => c.clone(),
            PriorSpec::Custom(map) => map.get(&names()).cloned().ok_or_else(|| {
                let (src, dst) = names();
                ConjugateError::MissingPrior { src, dst }
            })?,
        };
        if !w.is_positive() {
            let (src, dst) = names();
            return Err(ConjugateError::NonPositivePrior {
                src,
                dst,
                value: w.to_string(),
            });
        }
        Ok(w)
    }
}

/// Posterior Dirichlet block of one parent node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodePosterior {
    pub parent: NodeId,
    /// Child nodes in edge declaration order.
    pub children: Vec<NodeId>,
    pub edges: Vec<EdgeId>,
    pub counts: Vec<u64>,
    pub prior: Vec<BigRational>,
    /// `counts + prior`, as floats.
    pub alpha: Vec<f64>,
}

impl NodePosterior {
    pub fn exact_alpha(&self, j: usize) -> BigRational {
        BigRational::from_integer(BigInt::from(self.counts[j])) + &self.prior[j]
    }

    pub fn alpha_sum(&self) -> f64 {
        self.alpha.iter().sum()
    }

    pub fn dim(&self) -> usize {
        self.children.len()
    }

    pub fn position(&self, child: NodeId) -> Option<usize> {
        self.children.iter().position(|&c| c == child)
    }
}

/// Conjugate update at every node with out-degree at least one, in node
/// declaration order.
pub fn fit_posterior(
    counts: &TransitionCounts,
    prior: &PriorSpec,
    dag: &Dag,
) -> Result<Vec<NodePosterior>, ConjugateError> {
    dag.parents()
        .map(|parent| {
            let edges = dag.out_edges(parent).to_vec();
            let children = edges.iter().map(|&e| dag.edge(e).1).collect();
            let counts: Vec<u64> = edges.iter().map(|&e| counts.get(e)).collect();
            let prior = edges
                .iter()
                .map(|&e| prior.weight(dag, e))
                .collect::<Result<Vec<_>, _>>()?;
            let alpha = counts
                .iter()
                .zip(&prior)
                .map(|(&y, w)| {
                    let exact = BigRational::from_integer(BigInt::from(y)) + w;
                    exact.to_f64().unwrap_or(f64::NAN)
                })
                .collect();
            Ok(NodePosterior {
                parent,
                children,
                edges,
                counts,
                prior,
                alpha,
            })
        })
        .collect()
}

/// Beta(a, b) marginal of one Dirichlet component. `b == 0` encodes the
/// point mass at 1 of a parent with a single child.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaMarginal {
    pub a: f64,
    pub b: f64,
}

impl BetaMarginal {
    pub fn is_degenerate(&self) -> bool {
        self.b == 0.0
    }

    pub fn variance(&self) -> f64 {
        if self.is_degenerate() {
            return 0.0;
        }
        let s = self.a + self.b;
        self.a * self.b / (s * s * (s + 1.0))
    }

    pub fn sd(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if self.is_degenerate() {
            return if x >= 1.0 { 1.0 } else { 0.0 };
        }
        if x <= 0.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return 1.0;
        }
        beta_reg(self.a, self.b, x)
    }

    /// Equal-tailed interval with the given coverage.
    pub fn credible_interval(&self, level: f64) -> Result<(f64, f64), ConjugateError> {
        let tail = (1.0 - level) / 2.0;
        Ok((beta_quantile(self, tail)?, beta_quantile(self, 1.0 - tail)?))
    }
}

pub fn beta_marginal(
    posterior: &NodePosterior,
    child: NodeId,
    dag: &Dag,
) -> Result<BetaMarginal, ConjugateError> {
    let j = posterior
        .position(child)
        .ok_or_else(|| ConjugateError::UnknownChild {
            parent: dag.name(posterior.parent).to_string(),
            child: dag.name(child).to_string(),
        })?;
    Ok(marginal_at(posterior, j))
}

/// Marginal of the `j`-th component.
pub fn marginal_at(posterior: &NodePosterior, j: usize) -> BetaMarginal {
    let a = posterior.alpha[j];
    let b = if posterior.dim() == 1 {
        0.0
    } else {
        posterior
            .alpha
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != j)
            .map(|(_, &x)| x)
            .sum()
    };
    BetaMarginal { a, b }
}

pub fn beta_mean(m: &BetaMarginal) -> f64 {
    m.a / (m.a + m.b)
}

/// Quantile of the Beta marginal.
pub fn beta_quantile(m: &BetaMarginal, p: f64) -> Result<f64, ConjugateError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(ConjugateError::InvalidProbability(p));
    }
    if m.is_degenerate() {
        return Ok(1.0);
    }
    let dist = Beta::new(m.a, m.b).map_err(|_| ConjugateError::BadMarginal { a: m.a, b: m.b })?;
    Ok(dist.inverse_cdf(p))
}
