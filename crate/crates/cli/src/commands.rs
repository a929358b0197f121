//! One function per subcommand; each returns the bytes to emit.

use std::path::{Path, PathBuf};

use mswig_core::{
    attrition_catalog, classify, enumerate_independencies, minimal_testable_set, panel_catalog, plan_identification,
    prune_statements, split, Assumption, AttritionDesign, CIStatement, CatalogEntry, EstimandKind, EstimandSpec,
    ImplicationCatalog, Intervention, NodeKind, PanelVariant, Scope, Term,
};
use mswig_stats::citest::{test_catalog, CatalogReport, Method, Multiplicity, TestOptions};
use mswig_stats::dataset::{format_value, AnalysisData, Propensity};
use mswig_stats::moments::EstimatorOptions;
use mswig_stats::overlap::overlap_report;
use mswig_stats::pipeline::{estimate, EstimateRequest, Model};
use mswig_stats::sim::{simulate, ScmSpec, Template};
use serde::Serialize;

use crate::args::*;
use crate::io::{emit, write_atomic, Provenance};
use crate::{CliError, Result};

enum Output {
    /// Written to `--out` or standard output.
    Single(String),
    /// Several files at fixed paths; their paths are printed.
    Files(Vec<(PathBuf, Vec<u8>)>),
}

/// Pretty JSON with a trailing newline; the byte format of every JSON artifact.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn format(cli: &Cli, default: Format, allowed: &[Format]) -> Result<Format> {
    let f = cli.format.unwrap_or(default);
    if allowed.contains(&f) {
        Ok(f)
    } else {
        Err(CliError::Validation(format!("format {f:?} is not available for this command")))
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Derive(_) => "derive",
        Command::Swig(_) => "swig",
        Command::ClassifyMissingness(_) => "classify-missingness",
        Command::CheckIdentification(_) => "check-identification",
        Command::Implications(_) => "implications",
        Command::Test(_) => "test",
        Command::Estimate(_) => "estimate",
        Command::Overlap(_) => "overlap",
        Command::Simulate(_) => "simulate",
    }
}

/// Executes one command and writes its artifacts. The run is logged with a hash of the
/// arguments and every input file, plus the seed.
pub fn run(cli: &Cli) -> Result<()> {
    let mut prov = Provenance::new(&serde_json::to_string(cli)?);
    let result = execute(cli, &mut prov);
    log::info!("command={} spec_hash={} seed={}", command_name(&cli.command), prov.hex(), cli.seed);
    match result? {
        Output::Single(text) => emit(cli.out.as_deref(), &text),
        Output::Files(files) => {
            let mut listing = String::new();
            for (path, bytes) in &files {
                write_atomic(path, bytes)?;
                listing.push_str(&format!("{}\n", path.display()));
            }
            emit(None, &listing)
        }
    }
}

fn execute(cli: &Cli, prov: &mut Provenance) -> Result<Output> {
    match &cli.command {
        Command::Derive(a) => derive(cli, prov, a),
        Command::Swig(a) => swig(cli, prov, a),
        Command::ClassifyMissingness(a) => classify_missingness(cli, prov, a),
        Command::CheckIdentification(a) => check_identification(cli, prov, a),
        Command::Implications(a) => implications(cli, prov, a),
        Command::Test(a) => test(cli, prov, a),
        Command::Estimate(a) => estimate_cmd(cli, prov, a),
        Command::Overlap(a) => overlap(cli, prov, a),
        Command::Simulate(a) => simulate_cmd(cli, prov, a),
    }
}

fn statement_lines(statements: &[CIStatement]) -> String {
    statements.iter().map(|s| format!("{s}\n")).collect()
}

fn derive(cli: &Cli, prov: &mut Provenance, a: &DeriveArgs) -> Result<Output> {
    let g = prov.graph(&a.graph.graph)?;
    let scope = match a.scope {
        ScopeArg::All => Scope::All,
        ScopeArg::Observed => Scope::ObservedOnly,
    };
    let mut statements = enumerate_independencies(&g, scope, a.max_cond);
    if a.prune {
        statements = prune_statements(&statements);
    }
    Ok(Output::Single(match format(cli, Format::Text, &[Format::Text, Format::Json, Format::Csv])? {
        Format::Text => statement_lines(&statements),
        Format::Json => to_json(&statements)?,
        Format::Csv => format!("statement\n{}", statement_lines(&statements)),
    }))
}

fn swig(cli: &Cli, prov: &mut Provenance, a: &SwigArgs) -> Result<Output> {
    let g = prov.graph(&a.graph.graph)?;
    let s = split(&g, &Intervention::parse(&a.intervene)?)?;
    Ok(Output::Single(match format(cli, Format::Json, &[Format::Json, Format::Text])? {
        Format::Text => s.to_dot(),
        _ => {
            let nodes: Vec<serde_json::Value> =
                s.nodes().into_iter().map(|(t, role)| serde_json::json!({ "term": t, "role": role })).collect();
            to_json(&serde_json::json!({
                "intervention": s.intervention().assignments(),
                "nodes": nodes,
                "edges": s.edges(),
            }))?
        }
    }))
}

fn classify_missingness(cli: &Cli, prov: &mut Provenance, a: &ClassifyArgs) -> Result<Output> {
    let g = prov.graph(&a.graph.graph)?;
    let subset = match &a.subset {
        Some(s) => Term::parse_list(s)?,
        None => g.nodes_of_kind(NodeKind::Selection).into_iter().map(Term::plain).collect(),
    };
    format(cli, Format::Json, &[Format::Json])?;
    Ok(Output::Single(to_json(&classify(&g, &subset)?)?))
}

fn check_identification(cli: &Cli, prov: &mut Provenance, a: &IdentifyArgs) -> Result<Output> {
    let g = prov.graph(&a.graph.graph)?;
    let kind: EstimandKind = a.estimand.parse()?;
    let adjust: Vec<&str> = a.adjust.iter().map(String::as_str).collect();
    let spec = EstimandSpec::new(kind, &a.treatment, &a.outcome, &adjust);
    let assumptions: Vec<Assumption> = a
        .assume
        .iter()
        .map(|x| match x {
            AssumptionArg::Monotonicity => Assumption::Monotonicity,
            AssumptionArg::ConditionalMonotonicity => Assumption::ConditionalMonotonicity,
        })
        .collect();
    let plan = plan_identification(&g, &spec, &assumptions)?;
    Ok(Output::Single(match format(cli, Format::Json, &[Format::Json, Format::Text])? {
        Format::Text => format!("{}\n", plan.estimand_formula),
        _ => to_json(&plan)?,
    }))
}

fn build_catalog(prov: &mut Provenance, a: &CatalogArgs) -> Result<ImplicationCatalog> {
    let graph = |prov: &mut Provenance| match &a.graph {
        Some(src) => prov.graph(src),
        None => Err(CliError::Validation(format!("catalog {:?} needs --graph", a.catalog))),
    };
    Ok(match a.catalog {
        CatalogKind::Attrition => {
            let design = AttritionDesign { treatment: a.treatment.clone(), selection: a.selection.clone() };
            attrition_catalog(&graph(prov)?, &design, a.randomized)?
        }
        CatalogKind::Minimal => ImplicationCatalog {
            entries: vec![CatalogEntry {
                test_name: "graph".into(),
                restrictions_removed: Vec::new(),
                implied: minimal_testable_set(&graph(prov)?),
                untestable: Vec::new(),
                swig_implied: Vec::new(),
                residual: Vec::new(),
                identified_estimand: None,
                notes: Vec::new(),
            }],
        },
        CatalogKind::PanelNoExclusion => panel_catalog(PanelVariant::NoExclusion)?,
        CatalogKind::PanelExclusionI => panel_catalog(PanelVariant::ExclusionI)?,
        CatalogKind::PanelExclusionII => panel_catalog(PanelVariant::ExclusionII)?,
    })
}

fn implications(cli: &Cli, prov: &mut Provenance, a: &CatalogArgs) -> Result<Output> {
    let catalog = build_catalog(prov, a)?;
    Ok(Output::Single(match format(cli, Format::Text, &[Format::Text, Format::Json])? {
        Format::Text => catalog.render(),
        _ => to_json(&catalog)?,
    }))
}

fn report_csv(r: &CatalogReport) -> String {
    let mut out = String::from("entry,statement,method,statistic,dof,p_value,adjusted_p,n\n");
    for t in &r.tests {
        let res = &t.result;
        out.push_str(&format!(
            "\"{}\",\"{}\",{:?},{},{},{},{},{}\n",
            t.entry,
            res.statement,
            res.method,
            format_value(res.statistic),
            res.dof.map(format_value).unwrap_or_default(),
            format_value(res.p_value),
            format_value(t.adjusted_p),
            res.n
        ));
    }
    out
}

fn test(cli: &Cli, prov: &mut Provenance, a: &TestArgs) -> Result<Output> {
    let data = prov.dataset(&a.data)?;
    let catalog = if a.statement.is_empty() {
        build_catalog(prov, &a.catalog)?
    } else {
        let implied = a.statement.iter().map(|s| CIStatement::parse(s)).collect::<std::result::Result<Vec<_>, _>>()?;
        ImplicationCatalog {
            entries: vec![CatalogEntry {
                test_name: "statements".into(),
                restrictions_removed: Vec::new(),
                implied,
                untestable: Vec::new(),
                swig_implied: Vec::new(),
                residual: Vec::new(),
                identified_estimand: None,
                notes: Vec::new(),
            }],
        }
    };
    let method = match a.method {
        MethodArg::Auto => Method::Auto,
        MethodArg::ChiSquare => Method::ChiSquareStratified,
        MethodArg::Wald => Method::PartialRegressionWald,
        MethodArg::Permutation => Method::Permutation,
    };
    let multiplicity = match a.multiplicity {
        MultiplicityArg::None => Multiplicity::None,
        MultiplicityArg::Bonferroni => Multiplicity::Bonferroni,
    };
    if !(a.alpha > 0.0 && a.alpha < 1.0) {
        return Err(CliError::Validation(format!("alpha {} outside (0,1)", a.alpha)));
    }
    let opts = TestOptions { permutations: a.permutations, ..Default::default() };
    let report = test_catalog(&data, &catalog, method, &opts, a.alpha, multiplicity, cli.seed)?;
    Ok(Output::Single(match format(cli, Format::Json, &[Format::Json, Format::Csv])? {
        Format::Csv => report_csv(&report),
        _ => to_json(&report)?,
    }))
}

fn estimator_options(cli: &Cli, prov: &mut Provenance, a: &DataArgs, alpha: Option<f64>) -> Result<EstimatorOptions> {
    if let Some(al) = alpha {
        if !(al > 0.0 && al < 1.0) {
            return Err(CliError::Validation(format!("alpha {al} outside (0,1)")));
        }
    }
    Ok(EstimatorOptions {
        learners: prov.learners(a.learners.as_deref())?,
        folds: a.folds,
        seed: cli.seed,
        alpha,
        fold_labels: None,
    })
}

fn estimate_cmd(cli: &Cli, prov: &mut Provenance, a: &EstimateArgs) -> Result<Output> {
    let data = prov.dataset(&a.data.data)?;
    let roles = prov.roles(&a.data.roles)?;
    let options = estimator_options(cli, prov, &a.data, a.alpha)?;
    let model: Model = a.model.parse()?;
    let estimand = match &a.estimand {
        Some(e) => e.parse::<EstimandKind>()?,
        None => model.default_estimand(),
    };
    let req = EstimateRequest { model, estimand, roles, options, randomized: a.randomized };
    let report = estimate(&data, &req)?;
    Ok(Output::Single(match format(cli, Format::Json, &[Format::Json, Format::Csv])? {
        Format::Csv => report.to_csv(),
        _ => to_json(&report)?,
    }))
}

fn overlap(cli: &Cli, prov: &mut Provenance, a: &OverlapArgs) -> Result<Output> {
    let data = prov.dataset(&a.data.data)?;
    let mut roles = prov.roles(&a.data.roles)?;
    let options = estimator_options(cli, prov, &a.data, None)?;
    let mut x = roles.strata.clone();
    x.extend(roles.covariates.iter().filter(|c| !roles.strata.contains(c)).cloned());
    roles.covariates = x;
    let analysis = AnalysisData::from_dataset(&data, &roles, Propensity::Estimate)?;
    let report = overlap_report(&analysis, &options, &a.thresholds)?;
    Ok(Output::Single(match format(cli, Format::Json, &[Format::Json, Format::Csv])? {
        Format::Csv => report.histogram_csv(),
        _ => to_json(&report)?,
    }))
}

fn scm_spec(cli: &Cli, prov: &mut Provenance, a: &SimulateArgs) -> Result<ScmSpec> {
    if let Some(s) = &a.spec {
        return prov.json(s);
    }
    let template = match a.template {
        None => return Err(CliError::Validation("simulate needs --template or --spec".into())),
        Some(TemplateArg::M1) => Template::M1,
        Some(TemplateArg::M2) => Template::M2,
        Some(TemplateArg::M3) => Template::M3,
        Some(TemplateArg::M4Panel) => Template::M4Panel,
        Some(TemplateArg::Custom) => {
            let src = a.graph.as_deref().ok_or_else(|| CliError::Validation("the custom template needs --graph".into()))?;
            Template::CustomLinearLogistic { graph: prov.graph_text(src)?, treatment: a.treatment.clone() }
        }
    };
    let mut spec = ScmSpec::new(template, a.n, cli.seed);
    for item in &a.set {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| CliError::Validation(format!("--set expects key=value, got `{item}`")))?;
        let v: f64 = v.trim().parse().map_err(|_| CliError::Validation(format!("--set {k}: `{v}` is not a number")))?;
        spec = spec.with(k.trim(), v);
    }
    Ok(spec)
}

/// `<prefix>.<suffix>`, keeping any extension the prefix already has.
fn sibling(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

fn simulate_cmd(cli: &Cli, prov: &mut Provenance, a: &SimulateArgs) -> Result<Output> {
    let prefix = cli.out.as_deref().ok_or_else(|| CliError::Validation("simulate needs --out <prefix>".into()))?;
    let spec = scm_spec(cli, prov, a)?;
    let sim = simulate(&spec).map_err(|e| match e {
        mswig_stats::StatsError::Simulation(m) => CliError::Validation(m),
        other => other.into(),
    })?;
    Ok(Output::Files(vec![
        (sibling(prefix, "observed.csv"), sim.observed.to_csv_string().into_bytes()),
        (sibling(prefix, "hidden.csv"), sim.hidden.to_csv_string().into_bytes()),
        (sibling(prefix, "spec.json"), to_json(&spec)?.into_bytes()),
    ]))
}
