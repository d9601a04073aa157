//! The `dagpost` command line.

use std::fs;
use std::io::Write;
use std::path::{Path as FsPath, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::conjugate::{
    fit_posterior, flow_check, parse_decimal, tally_trajectories, ConjugateError, NodePosterior,
    PriorSpec, TransitionCounts,
};
use crate::dataset;
use crate::graph::{classify_nodes, parse_graph, validate, Dag, GraphError};
use crate::io::{histogram_csv, parse_counts_csv, parse_prior_csv, FormatError};
use crate::montecarlo::{
    draw_joint, SamplerConfig, SamplerError, SamplingScheme, DEFAULT_BINS, DEFAULT_CI_LEVEL,
    DEFAULT_SAMPLES, DEFAULT_SEED,
};
use crate::queries::{evaluate_query, QueryError, QuerySpec};
use crate::report::{
    edge_section, edges_csv, queries_csv, FlowSection, InputDigest, Meta, QueryEntry, Report,
    ValidationSection,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("graph failed validation: {0}")]
    Validation(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io { .. } | CliError::Input(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    fn input(context: &str, e: impl std::fmt::Display) -> Self {
        CliError::Input(format!("{context}: {e}"))
    }
}

impl From<QueryError> for CliError {
    fn from(e: QueryError) -> Self {
        match e {
            QueryError::Graph(GraphError::PathCapExceeded { .. })
            | QueryError::ZeroDenominator { .. } => CliError::Numeric(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<SamplerError> for CliError {
    fn from(e: SamplerError) -> Self {
        CliError::Input(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "dagpost",
    version,
    about = "Bayesian transition probabilities on absorbing DAGs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check graph structure and, if data is given, flow conservation.
    Validate(DataArgs),
    /// Conjugate posterior of every edge (no sampling).
    Fit(ModelArgs),
    /// Monte-Carlo summaries of the given queries.
    Query(QueryArgs),
    /// Edge posteriors, absorption profile of the source and every
    /// absorbing-from-transient inverse probability.
    Report(ReportArgs),
    /// Write the bundled example graph and counts into a directory.
    Example {
        #[arg(long)]
        dir: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long, conflicts_with = "trajectories")]
    pub counts: Option<PathBuf>,
    #[arg(long)]
    pub trajectories: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scheme {
    Joint,
    Marginal,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// perks | symmetric:<c> | custom:<path>
    #[arg(long, default_value = "perks")]
    pub prior: String,
    #[arg(long, default_value_t = DEFAULT_CI_LEVEL)]
    pub ci: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct SamplingArgs {
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    pub samples: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins: usize,
    #[arg(long, value_enum, default_value_t = Scheme::Joint)]
    pub scheme: Scheme,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Write one histogram CSV per query output into this directory.
    #[arg(long)]
    pub hist_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub sampling: SamplingArgs,
    /// path:A-B-C | forward:A:H | inverse:H:I | absorption:A (repeatable)
    #[arg(long = "query", required = true)]
    pub queries: Vec<QuerySpec>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub sampling: SamplingArgs,
}

fn read(path: &FsPath) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write(path: &FsPath, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

struct Loaded {
    dag: Dag,
    counts: Option<TransitionCounts>,
    inputs: Vec<InputDigest>,
}

fn load(args: &DataArgs) -> Result<(Loaded, ValidationSection), CliError> {
    let text = read(&args.graph)?;
    let mut inputs = vec![InputDigest::new(
        "graph",
        &args.graph.display().to_string(),
        text.as_bytes(),
    )];
    let dag =
        parse_graph(&text).map_err(|e| CliError::input(&args.graph.display().to_string(), e))?;
    let validation = ValidationSection::new(&dag, &validate(&dag));
    if !validation.valid {
        return Ok((
            Loaded {
                dag,
                counts: None,
                inputs,
            },
            validation,
        ));
    }
    let counts = match (&args.counts, &args.trajectories) {
        (Some(p), _) => {
            let text = read(p)?;
            inputs.push(InputDigest::new(
                "counts",
                &p.display().to_string(),
                text.as_bytes(),
            ));
            Some(
                parse_counts_csv(&text, &dag)
                    .map_err(|e| CliError::input(&p.display().to_string(), e))?,
            )
        }
        (None, Some(p)) => {
            let text = read(p)?;
            inputs.push(InputDigest::new(
                "trajectories",
                &p.display().to_string(),
                text.as_bytes(),
            ));
            Some(
                tally_trajectories(&text, &dag)
                    .map_err(|e| CliError::input(&p.display().to_string(), e))?,
            )
        }
        (None, None) => None,
    };
    Ok((
        Loaded {
            dag,
            counts,
            inputs,
        },
        validation,
    ))
}

fn require_valid(v: &ValidationSection) -> Result<(), CliError> {
    if v.valid {
        Ok(())
    } else {
        Err(CliError::Validation(v.failures.join("; ")))
    }
}

fn resolve_prior(selector: &str, inputs: &mut Vec<InputDigest>) -> Result<PriorSpec, CliError> {
    if selector == "perks" {
        return Ok(PriorSpec::Perks);
    }
    if let Some(c) = selector.strip_prefix("symmetric:") {
        return parse_decimal(c)
            .map(PriorSpec::Symmetric)
            .ok_or_else(|| CliError::Input(format!("invalid symmetric prior weight `{c}`")));
    }
    if let Some(path) = selector.strip_prefix("custom:") {
        let path = FsPath::new(path);
        let text = read(path)?;
        inputs.push(InputDigest::new(
            "prior",
            &path.display().to_string(),
            text.as_bytes(),
        ));
        return parse_prior_csv(&text)
            .map_err(|e: FormatError| CliError::input(&path.display().to_string(), e));
    }
    Err(CliError::Input(format!(
        "unknown prior `{selector}` (expected perks, symmetric:<c> or custom:<path>)"
    )))
}

fn emit(out_path: &Option<PathBuf>, text: &str, stdout: &mut dyn Write) -> Result<(), CliError> {
    match out_path {
        Some(p) => write(p, text),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|source| CliError::Io {
                path: "<stdout>".into(),
                source,
            }),
    }
}

struct Fitted {
    loaded: Loaded,
    validation: ValidationSection,
    flow: Option<FlowSection>,
    posteriors: Vec<NodePosterior>,
    prior_label: String,
}

fn fit(model: &ModelArgs) -> Result<Fitted, CliError> {
    let (mut loaded, validation) = load(&model.data)?;
    require_valid(&validation)?;
    let counts = loaded
        .counts
        .clone()
        .ok_or_else(|| CliError::Input("one of --counts or --trajectories is required".into()))?;
    let prior = resolve_prior(&model.prior, &mut loaded.inputs)?;
    let posteriors = fit_posterior(&counts, &prior, &loaded.dag)
        .map_err(|e: ConjugateError| CliError::Input(e.to_string()))?;
    let flow = Some(FlowSection::new(
        &loaded.dag,
        &flow_check(&counts, &loaded.dag),
    ));
    Ok(Fitted {
        loaded,
        validation,
        flow,
        posteriors,
        prior_label: model.prior.clone(),
    })
}

fn sampler_config(model: &ModelArgs, sampling: Option<&SamplingArgs>) -> SamplerConfig {
    let mut cfg = SamplerConfig {
        ci_level: model.ci,
        ..SamplerConfig::default()
    };
    if let Some(s) = sampling {
        cfg.samples = s.samples;
        cfg.seed = s.seed;
        cfg.histogram_bins = s.bins;
        cfg.scheme = match s.scheme {
            Scheme::Joint => SamplingScheme::Joint,
            Scheme::Marginal => SamplingScheme::IndependentMarginals,
        };
    }
    cfg
}

fn base_report(command: &str, fitted: &Fitted, cfg: &SamplerConfig) -> Result<Report, CliError> {
    if !(cfg.ci_level > 0.0 && cfg.ci_level < 1.0) {
        return Err(SamplerError::BadCiLevel(cfg.ci_level).into());
    }
    let edges = edge_section(&fitted.loaded.dag, &fitted.posteriors, cfg.ci_level)
        .map_err(|e| CliError::Numeric(e.to_string()))?;
    Ok(Report {
        meta: Meta::new(
            command,
            cfg,
            &fitted.prior_label,
            fitted.loaded.inputs.clone(),
        ),
        validation: fitted.validation.clone(),
        flow: fitted.flow.clone(),
        edges,
        queries: Vec::new(),
    })
}

fn histogram_name(index: usize, spec: &QuerySpec, target: Option<&str>) -> String {
    let mut slug: String = spec
        .to_string()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect();
    if let Some(t) = target {
        slug.push('_');
        slug.push_str(t);
    }
    format!("q{index:02}_{slug}.csv")
}

type HistogramFiles = Vec<(PathBuf, String)>;

/// Draws once and evaluates every query on the shared sample.
fn run_queries(
    fitted: &Fitted,
    specs: &[QuerySpec],
    cfg: &SamplerConfig,
    sampling: &SamplingArgs,
) -> Result<(Vec<QueryEntry>, HistogramFiles), CliError> {
    let dag = &fitted.loaded.dag;
    let resolved = specs
        .iter()
        .map(|s| s.resolve(dag))
        .collect::<Result<Vec<_>, _>>()?;
    let compute = || -> Result<_, CliError> {
        let samples = draw_joint(&fitted.posteriors, dag.edge_count(), cfg)?;
        let mut entries = Vec::new();
        let mut files = Vec::new();
        for (i, (spec, query)) in specs.iter().zip(&resolved).enumerate() {
            for output in evaluate_query(query, &samples, dag, cfg)? {
                let target = output.target.map(|t| dag.name(t).to_string());
                let mut entry = QueryEntry::new(spec, target.clone(), &output.summary);
                if let Some(dir) = &sampling.hist_dir {
                    let path = dir.join(histogram_name(i, spec, target.as_deref()));
                    entry.histogram_file = Some(path.display().to_string());
                    files.push((path, histogram_csv(&output.summary.histogram)));
                }
                entries.push(entry);
            }
        }
        Ok((entries, files))
    };
    match sampling.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Input(format!("thread pool: {e}")))?
            .install(compute),
        None => compute(),
    }
}

/// Queries run by `report`: the absorption profile of the source, then the
/// probability of having passed through each transient node given each
/// absorbing outcome.
pub fn canned_queries(dag: &Dag) -> Vec<QuerySpec> {
    let Some(classes) = classify_nodes(dag) else {
        return Vec::new();
    };
    let mut specs = vec![QuerySpec::AbsorptionProfile {
        from: dag.name(classes.source).to_string(),
    }];
    for &t in &classes.transient {
        for &s in &classes.absorbing {
            specs.push(QuerySpec::Inverse {
                later: dag.name(s).to_string(),
                earlier: dag.name(t).to_string(),
            });
        }
    }
    specs
}

fn finish(
    report: Report,
    files: HistogramFiles,
    model: &ModelArgs,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    if let Some(dir) = files.first().and_then(|(p, _)| p.parent()) {
        fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.display().to_string(),
            source,
        })?;
    }
    for (path, contents) in &files {
        write(path, contents)?;
    }
    let text = match model.format {
        Format::Json => report.to_json(),
        Format::Csv if report.meta.command == "fit" => edges_csv(&report.edges),
        Format::Csv => queries_csv(&report.queries),
    };
    emit(&model.out, &text, stdout)
}

fn validate_text(loaded: &Loaded, v: &ValidationSection) -> String {
    let dag = &loaded.dag;
    let mut s = String::new();
    if v.valid {
        s.push_str(&format!(
            "graph: valid ({} nodes, {} edges)\n",
            dag.node_count(),
            dag.edge_count()
        ));
        s.push_str(&format!("source: {}\n", v.source.as_deref().unwrap_or("")));
        s.push_str(&format!("transient: {}\n", v.transient.join(", ")));
        s.push_str(&format!("absorbing: {}\n", v.absorbing.join(", ")));
    } else {
        s.push_str("graph: INVALID\n");
        for f in &v.failures {
            s.push_str(&format!("  - {f}\n"));
        }
    }
    if let Some(counts) = &loaded.counts {
        let flow = FlowSection::new(dag, &flow_check(counts, dag));
        s.push_str(&format!("flow: cohort size {}\n", flow.cohort_size));
        for n in &flow.nodes {
            s.push_str(&format!(
                "  {}: inflow {}, outflow {}, {}\n",
                n.node,
                n.inflow,
                n.outflow,
                if n.balanced {
                    "balanced"
                } else {
                    "WARNING imbalance"
                }
            ));
        }
    }
    s
}

pub fn run(cli: Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Validate(args) => {
            let (loaded, validation) = load(&args)?;
            emit(&None, &validate_text(&loaded, &validation), stdout)?;
            require_valid(&validation)
        }
        Command::Fit(model) => {
            let fitted = fit(&model)?;
            let cfg = sampler_config(&model, None);
            let report = base_report("fit", &fitted, &cfg)?;
            finish(report, Vec::new(), &model, stdout)
        }
        Command::Query(args) => {
            let fitted = fit(&args.model)?;
            let cfg = sampler_config(&args.model, Some(&args.sampling));
            let mut report = base_report("query", &fitted, &cfg)?;
            let (entries, files) = run_queries(&fitted, &args.queries, &cfg, &args.sampling)?;
            report.queries = entries;
            finish(report, files, &args.model, stdout)
        }
        Command::Report(args) => {
            let fitted = fit(&args.model)?;
            let cfg = sampler_config(&args.model, Some(&args.sampling));
            let mut report = base_report("report", &fitted, &cfg)?;
            let specs = canned_queries(&fitted.loaded.dag);
            let (entries, files) = run_queries(&fitted, &specs, &cfg, &args.sampling)?;
            report.queries = entries;
            finish(report, files, &args.model, stdout)
        }
        Command::Example { dir } => {
            fs::create_dir_all(&dir).map_err(|source| CliError::Io {
                path: dir.display().to_string(),
                source,
            })?;
            write(&dir.join("pidirac.graph"), dataset::PIDIRAC_GRAPH)?;
            write(&dir.join("pidirac_counts.csv"), dataset::PIDIRAC_COUNTS)?;
            Ok(())
        }
    }
}
