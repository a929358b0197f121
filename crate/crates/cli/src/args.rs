//! Command-line grammar.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mswig_stats::crossfit::DEFAULT_FOLDS;
use serde::Serialize;

#[derive(Debug, Clone, Parser, Serialize)]
#[command(name = "mswig", version, about = "Causal graphs with missing data: derive, test, estimate, simulate")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run seed; every random stream is derived from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output file (written atomically). For `simulate`, the path prefix of the three outputs.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Output format; each command has its own default.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
pub enum Command {
    /// List the independencies implied by a graph.
    Derive(DeriveArgs),
    /// Split a graph at intervened nodes.
    Swig(SwigArgs),
    /// Classify a set of selection indicators as MCAR, MAR or MNAR.
    ClassifyMissingness(ClassifyArgs),
    /// Decide whether a causal estimand is identified and how.
    CheckIdentification(IdentifyArgs),
    /// Testable implications of restrictions, as a catalog.
    Implications(CatalogArgs),
    /// Test a catalog (or explicit statements) against data.
    Test(TestArgs),
    /// Estimate a treatment effect or effect bounds.
    Estimate(EstimateArgs),
    /// Selection-probability overlap diagnostics.
    Overlap(OverlapArgs),
    /// Draw a dataset from a structural model with known ground truth.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GraphArg {
    /// Graph file in the text format, or `builtin:<name>` (chain, M1, M2, M3, necessity, panel).
    #[arg(long)]
    pub graph: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum ScopeArg {
    /// Every random node, latents and partially missing variables included.
    All,
    /// Only quantities observable in data.
    Observed,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DeriveArgs {
    #[command(flatten)]
    pub graph: GraphArg,
    #[arg(long, value_enum, default_value_t = ScopeArg::All)]
    pub scope: ScopeArg,
    #[arg(long, default_value_t = mswig_core::DEFAULT_MAX_CONDITIONING)]
    pub max_cond: usize,
    /// Keep only statements not implied by the others under the semi-graphoid axioms.
    #[arg(long)]
    pub prune: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SwigArgs {
    #[command(flatten)]
    pub graph: GraphArg,
    /// Intervention as `node=symbol[,node=symbol...]`.
    #[arg(long, default_value = "D=d")]
    pub intervene: String,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub graph: GraphArg,
    /// Comma-separated selection nodes; defaults to all of them.
    #[arg(long)]
    pub subset: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum AssumptionArg {
    Monotonicity,
    ConditionalMonotonicity,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct IdentifyArgs {
    #[command(flatten)]
    pub graph: GraphArg,
    /// ate, att, counterfactual-mean or always-observed.
    #[arg(long, default_value = "ate")]
    pub estimand: String,
    #[arg(long, default_value = "D")]
    pub treatment: String,
    #[arg(long, default_value = "Y")]
    pub outcome: String,
    /// Comma-separated adjustment set.
    #[arg(long, value_delimiter = ',')]
    pub adjust: Vec<String>,
    /// Declared cross-world assumptions.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub assume: Vec<AssumptionArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum CatalogKind {
    /// Edge-removal tests for treatment-driven attrition (needs `--graph`).
    Attrition,
    /// Pruned observed-level independencies of the graph (needs `--graph`).
    Minimal,
    PanelNoExclusion,
    PanelExclusionI,
    PanelExclusionII,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CatalogArgs {
    #[arg(long)]
    pub graph: Option<String>,
    #[arg(long, value_enum, default_value_t = CatalogKind::Attrition)]
    pub catalog: CatalogKind,
    #[arg(long, default_value = "D")]
    pub treatment: String,
    /// Selection node; needed only when the graph has several.
    #[arg(long)]
    pub selection: Option<String>,
    /// Treatment was randomized: edges into it are removed first.
    #[arg(long)]
    pub randomized: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum MethodArg {
    Auto,
    ChiSquare,
    Wald,
    Permutation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum MultiplicityArg {
    None,
    Bonferroni,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TestArgs {
    /// CSV with a header row; empty fields and `NA` are missing.
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub catalog: CatalogArgs,
    /// Explicit statement to test instead of a catalog; repeatable.
    #[arg(long)]
    pub statement: Vec<String>,
    #[arg(long, value_enum, default_value_t = MethodArg::Auto)]
    pub method: MethodArg,
    #[arg(long, default_value_t = 999)]
    pub permutations: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value_t = MultiplicityArg::Bonferroni)]
    pub multiplicity: MultiplicityArg,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Column roles as JSON (inline or a file path): treatment, selection, outcomeProxy,
    /// covariates, strata, heterogeneity.
    #[arg(long)]
    pub roles: String,
    /// Learner set as JSON (inline or a file path), or one family name for every nuisance.
    #[arg(long)]
    pub learners: Option<String>,
    #[arg(long, default_value_t = DEFAULT_FOLDS)]
    pub folds: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// M1, M2D, M2, ZRLee or M3.
    #[arg(long)]
    pub model: String,
    /// ate, att or always-observed; defaults to the model's own estimand.
    #[arg(long)]
    pub estimand: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Treatment was randomized with a constant share.
    #[arg(long)]
    pub randomized: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OverlapArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_delimiter = ',', default_values_t = mswig_stats::overlap::DEFAULT_THRESHOLDS)]
    pub thresholds: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum TemplateArg {
    M1,
    M2,
    M3,
    #[value(name = "M4Panel")]
    M4Panel,
    /// Linear-logistic model over `--graph`.
    Custom,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, value_enum, ignore_case = true)]
    pub template: Option<TemplateArg>,
    /// Full simulator spec as JSON (inline or a file path); overrides the other options.
    #[arg(long)]
    pub spec: Option<String>,
    /// Graph for the custom template.
    #[arg(long)]
    pub graph: Option<String>,
    /// Treatment node for the custom template.
    #[arg(long)]
    pub treatment: Option<String>,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Coefficient override `key=value`; repeatable.
    #[arg(long = "set")]
    pub set: Vec<String>,
}
