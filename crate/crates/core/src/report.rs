//! Report model and its JSON / CSV serializations.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::conjugate::{beta_mean, marginal_at, ConjugateError, FlowReport, NodePosterior};
use crate::graph::{classify_nodes, Dag, ValidationReport};
use crate::montecarlo::{QuerySummary, SamplerConfig, SamplingScheme};
use crate::queries::QuerySpec;

pub const TOOL_NAME: &str = "dagpost";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

impl InputDigest {
    pub fn new(role: &str, path: &str, contents: &[u8]) -> Self {
        InputDigest {
            role: role.to_string(),
            path: path.to_string(),
            sha256: hex::encode(Sha256::digest(contents)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    #[serde(rename = "M")]
    pub samples: usize,
    pub ci_level: f64,
    pub histogram_bins: usize,
    pub scheme: SamplingScheme,
    pub prior: String,
    pub inputs: Vec<InputDigest>,
}

impl Meta {
    pub fn new(command: &str, cfg: &SamplerConfig, prior: &str, inputs: Vec<InputDigest>) -> Self {
        Meta {
            tool: TOOL_NAME.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed: cfg.seed,
            samples: cfg.samples,
            ci_level: cfg.ci_level,
            histogram_bins: cfg.histogram_bins,
            scheme: cfg.scheme,
            prior: prior.to_string(),
            inputs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationSection {
    pub valid: bool,
    pub failures: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub source: Option<String>,
    pub transient: Vec<String>,
    pub absorbing: Vec<String>,
}

impl ValidationSection {
    pub fn new(dag: &Dag, report: &ValidationReport) -> Self {
        let classes = if report.is_valid() {
            classify_nodes(dag)
        } else {
            None
        };
        let names = |set: Option<&std::collections::BTreeSet<_>>| {
            set.map(|s| s.iter().map(|&n| dag.name(n).to_string()).collect())
                .unwrap_or_default()
        };
        ValidationSection {
            valid: report.is_valid(),
            failures: report.failures.iter().map(|f| f.to_string()).collect(),
            source: classes.as_ref().map(|c| dag.name(c.source).to_string()),
            transient: names(classes.as_ref().map(|c| &c.transient)),
            absorbing: names(classes.as_ref().map(|c| &c.absorbing)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowEntry {
    pub node: String,
    pub inflow: u64,
    pub outflow: u64,
    pub balanced: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSection {
    pub cohort_size: u64,
    pub nodes: Vec<FlowEntry>,
}

impl FlowSection {
    pub fn new(dag: &Dag, flow: &FlowReport) -> Self {
        FlowSection {
            cohort_size: flow.cohort_size,
            nodes: flow
                .transient
                .iter()
                .map(|f| FlowEntry {
                    node: dag.name(f.node).to_string(),
                    inflow: f.inflow,
                    outflow: f.outflow,
                    balanced: f.balanced(),
                })
                .collect(),
        }
    }
}

/// Posterior summary of one edge. `prior` and `alpha_exact` are exact
/// rationals written as `p/q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeSummary {
    pub src: String,
    pub dst: String,
    pub count: u64,
    pub prior: String,
    pub alpha: f64,
    pub alpha_exact: String,
    pub beta_a: f64,
    pub beta_b: f64,
    pub mean: f64,
    pub sd: f64,
    pub ci: [f64; 2],
    pub deterministic: bool,
}

/// Analytic Beta summaries for every edge, in edge declaration order.
pub fn edge_section(
    dag: &Dag,
    posteriors: &[NodePosterior],
    ci_level: f64,
) -> Result<Vec<EdgeSummary>, ConjugateError> {
    let mut rows: Vec<(usize, EdgeSummary)> = Vec::with_capacity(dag.edge_count());
    for post in posteriors {
        for (j, (&edge, &child)) in post.edges.iter().zip(&post.children).enumerate() {
            let m = marginal_at(post, j);
            let (lo, hi) = m.credible_interval(ci_level)?;
            rows.push((
                edge.0,
                EdgeSummary {
                    src: dag.name(post.parent).to_string(),
                    dst: dag.name(child).to_string(),
                    count: post.counts[j],
                    prior: post.prior[j].to_string(),
                    alpha: post.alpha[j],
                    alpha_exact: post.exact_alpha(j).to_string(),
                    beta_a: m.a,
                    beta_b: m.b,
                    mean: beta_mean(&m),
                    sd: m.sd(),
                    ci: [lo, hi],
                    deterministic: m.is_degenerate(),
                },
            ));
        }
    }
    rows.sort_by_key(|(e, _)| *e);
    Ok(rows.into_iter().map(|(_, r)| r).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryEntry {
    pub query: QuerySpec,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub target: Option<String>,
    pub mean: f64,
    pub sd: f64,
    pub ci: [f64; 2],
    pub quantile_probs: [f64; 2],
    #[serde(rename = "M")]
    pub samples: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub histogram_file: Option<String>,
}

impl QueryEntry {
    pub fn new(query: &QuerySpec, target: Option<String>, s: &QuerySummary) -> Self {
        QueryEntry {
            query: query.clone(),
            target,
            mean: s.mean,
            sd: s.sd,
            ci: [s.ci.0, s.ci.1],
            quantile_probs: [s.quantile_probs.0, s.quantile_probs.1],
            samples: s.samples,
            histogram_file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub meta: Meta,
    pub validation: ValidationSection,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub flow: Option<FlowSection>,
    pub edges: Vec<EdgeSummary>,
    pub queries: Vec<QueryEntry>,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

pub fn edges_csv(edges: &[EdgeSummary]) -> String {
    let mut out =
        String::from("src,dst,count,prior,alpha,beta_a,beta_b,mean,sd,ci_lo,ci_hi,deterministic\n");
    for e in edges {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            e.src,
            e.dst,
            e.count,
            e.prior,
            e.alpha,
            e.beta_a,
            e.beta_b,
            e.mean,
            e.sd,
            e.ci[0],
            e.ci[1],
            e.deterministic
        ));
    }
    out
}

pub fn queries_csv(queries: &[QueryEntry]) -> String {
    let mut out = String::from("query,target,mean,sd,ci_lo,ci_hi,M,histogram_file\n");
    for q in queries {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            q.query,
            q.target.as_deref().unwrap_or(""),
            q.mean,
            q.sd,
            q.ci[0],
            q.ci[1],
            q.samples,
            q.histogram_file.as_deref().unwrap_or("")
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conjugate::{fit_posterior, PriorSpec};
    use crate::dataset;

    #[test]
    fn edge_rows_follow_declaration_order() {
        let dag = dataset::pidirac_graph();
        let posts = fit_posterior(&dataset::pidirac_counts(&dag), &PriorSpec::Perks, &dag).unwrap();
        let rows = edge_section(&dag, &posts, 0.95).unwrap();
        let pairs: Vec<_> = rows.iter().map(|r| format!("{}{}", r.src, r.dst)).collect();
        assert_eq!(
            pairs,
            ["AI", "AW1", "W1I", "IW2", "ID", "W1D", "W1H", "W1L", "W2D", "W2H", "W2L"]
        );
        let ai = &rows[0];
        assert_eq!(ai.alpha_exact, "197/2");
        assert_eq!((ai.beta_a, ai.beta_b), (98.5, 1208.5));
        assert!((ai.mean - 0.075).abs() < 5e-4);
        assert!((ai.ci[0] - 0.062).abs() < 1e-3 && (ai.ci[1] - 0.090).abs() < 1e-3);
        let w2d = &rows[8];
        assert_eq!(w2d.alpha_exact, "46/3");
    }

    #[test]
    fn digest_is_sha256() {
        let d = InputDigest::new("graph", "g", b"abc");
        assert_eq!(
            d.sha256,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
