use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use droidmark::arff::{emit_arff, parse_arff, Dataset};
use droidmark::bayesnet::{score_network, train, BayesNetwork};
use droidmark::catalog::{Role, SourceSinkCatalog};
use droidmark::evaluation::cross_validate;
use droidmark::features::features_dataset;
use droidmark::ir::parse_app;
use droidmark::monitor::{emit_trace, generate_instances, instances_to_trace, to_dataset};
use droidmark::pipeline::{analyze_app, run_pipeline, PipelineConfig, PipelineError, StaticAnalysis};
use droidmark::taint::{FlowReport, TaintError};
use serde_json::json;

#[derive(Parser)]
#[command(name = "droidmark", version, about = "Taint analysis and Bayesian classification of Android app behaviour")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: Global,
}

#[derive(Args)]
struct Global {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    out: Format,
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Source/sink catalog (TSV).
    #[arg(long, global = true)]
    catalog: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    alias: Option<Switch>,
    /// Access-path field depth.
    #[arg(long, global = true)]
    k: Option<usize>,
    #[arg(long, global = true)]
    max_iterations: Option<usize>,
    #[arg(long, global = true)]
    window_ms: Option<u64>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    max_parents: Option<usize>,
    #[arg(long, global = true)]
    folds: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Class attribute name.
    #[arg(long = "class", global = true)]
    class_attribute: Option<String>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Subcommand)]
enum Command {
    /// Find source-to-sink flows and the suspect process list.
    Analyze {
        apps: Vec<PathBuf>,
        /// Analyze every `.ir` file in a directory.
        #[arg(long)]
        dir: Option<PathBuf>,
        /// Also write the flow report JSON here (single app only).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Category-pair flow features, as JSON or an ARFF table.
    Features { apps: Vec<PathBuf> },
    /// Generate labelled monitoring data, as ARFF or as an event trace.
    Simulate {
        #[arg(long, default_value_t = 32)]
        count: usize,
        /// Emit a CSV event trace instead of ARFF.
        #[arg(long)]
        trace: bool,
    },
    /// ARFF utilities.
    Arff {
        #[command(subcommand)]
        command: ArffCommand,
    },
    /// Learn a network from labelled ARFF data.
    Train {
        data: PathBuf,
        /// Write the network JSON here.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Classify every row of an ARFF file with a trained network.
    Classify {
        #[arg(long)]
        model: PathBuf,
        data: PathBuf,
    },
    /// Stratified cross-validation of the learner on labelled ARFF data.
    Evaluate { data: PathBuf },
    /// Analyze an app, replay a trace, train and cross-validate.
    Pipeline {
        app: PathBuf,
        trace: PathBuf,
        /// Also write the labelled ARFF data here.
        #[arg(long)]
        arff: Option<PathBuf>,
    },
    /// Catalog utilities.
    Catalog {
        #[command(subcommand)]
        command: CatalogCommand,
    },
}

#[derive(Subcommand)]
enum ArffCommand {
    /// Parse and re-emit an ARFF file (canonical ARFF, or JSON with --out json).
    Convert { input: PathBuf },
}

#[derive(Subcommand)]
enum CatalogCommand {
    /// Check a catalog file; the bundled catalog when no file is given.
    Validate { file: Option<PathBuf> },
}

/// Exit status plus message.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn input(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: 1,
            error: error.into(),
        }
    }

    fn internal(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: 3,
            error: error.into(),
        }
    }
}

impl From<TaintError> for Failure {
    fn from(e: TaintError) -> Self {
        Self {
            code: 2,
            error: e.into(),
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Taint(t) => t.into(),
            other => Self::input(other),
        }
    }
}

type Outcome = Result<String, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(out) => {
            print!("{out}");
            if !out.ends_with('\n') {
                println!();
            }
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn config(g: &Global) -> Result<PipelineConfig, Failure> {
    let mut cfg = match &g.config {
        Some(p) => PipelineConfig::load(p).map_err(Failure::input)?,
        None => PipelineConfig::default(),
    };
    if let Some(c) = &g.catalog {
        cfg.catalog = Some(c.clone());
    }
    if let Some(a) = g.alias {
        cfg.alias = matches!(a, Switch::On);
    }
    macro_rules! take {
        ($($field:ident <- $flag:ident),*) => {
            $(if let Some(v) = g.$flag.clone() { cfg.$field = v; })*
        };
    }
    take!(access_path_k <- k, max_iterations <- max_iterations, window_ms <- window_ms, alpha <- alpha,
          max_parents <- max_parents, folds <- folds, seed <- seed);
    if let Some(c) = &g.class_attribute {
        cfg.class_attribute = Some(c.clone());
    }
    cfg.validate().map_err(Failure::input)?;
    Ok(cfg)
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(Failure::input)
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text)
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(Failure::input)
}

fn read_arff(path: &Path) -> Result<Dataset, Failure> {
    parse_arff(&read(path)?)
        .with_context(|| path.display().to_string())
        .map_err(Failure::input)
}

fn pretty(v: &impl serde::Serialize) -> Outcome {
    serde_json::to_string_pretty(v).map_err(Failure::internal)
}

fn run(cli: &Cli) -> Outcome {
    let cfg = config(&cli.global)?;
    let json = cli.global.out == Format::Json;
    match &cli.command {
        Command::Analyze { apps, dir, report } => cmd_analyze(&cfg, json, apps, dir.as_deref(), report.as_deref()),
        Command::Features { apps } => cmd_features(&cfg, json, apps),
        Command::Simulate { count, trace } => cmd_simulate(&cfg, json, *count, *trace),
        Command::Arff {
            command: ArffCommand::Convert { input },
        } => {
            let ds = read_arff(input)?;
            if json {
                pretty(&ds.to_json())
            } else {
                Ok(emit_arff(&ds))
            }
        }
        Command::Train { data, model } => cmd_train(&cfg, json, data, model.as_deref()),
        Command::Classify { model, data } => cmd_classify(json, model, data),
        Command::Evaluate { data } => {
            let ds = read_arff(data)?;
            let report = cross_validate(&ds, cfg.folds, cfg.seed, &cfg.learner()).map_err(Failure::input)?;
            Ok(if json { report.to_json() } else { report.to_text() })
        }
        Command::Pipeline { app, trace, arff } => {
            let model = parse_app(&read(app)?)
                .with_context(|| app.display().to_string())
                .map_err(Failure::input)?;
            let outcome = run_pipeline(&model, &read(trace)?, &cfg)?;
            if let Some(p) = arff {
                write(p, &outcome.arff)?;
            }
            if json {
                pretty(&json!({
                    "app": outcome.analysis.app,
                    "suspects": outcome.analysis.suspects,
                    "instances": outcome.dataset.rows.len(),
                    "network": outcome.network,
                    "report": outcome.report,
                }))
            } else {
                let mut out = String::new();
                let _ = writeln!(out, "Relation:    {}", outcome.dataset.relation);
                let _ = writeln!(out, "Instances:   {}", outcome.dataset.rows.len());
                let _ = writeln!(out, "Attributes:  {}", outcome.dataset.attributes.len());
                let _ = writeln!(out, "Test mode:   {}-fold cross-validation\n", cfg.folds);
                let _ = writeln!(out, "Network structure (nodes followed by parents)");
                out.push_str(&outcome.network.structure_summary());
                out.push('\n');
                out.push_str(&outcome.report.to_text());
                Ok(out)
            }
        }
        Command::Catalog {
            command: CatalogCommand::Validate { file },
        } => {
            let catalog = match file {
                Some(p) => SourceSinkCatalog::load(p).map_err(Failure::input)?,
                None => SourceSinkCatalog::bundled(),
            };
            let sources = catalog.entries().iter().filter(|e| e.role() == Role::Source).count();
            let sinks = catalog.len() - sources;
            if json {
                pretty(&json!({"valid": true, "entries": catalog.len(), "sources": sources, "sinks": sinks}))
            } else {
                Ok(format!("ok: {} entries ({sources} sources, {sinks} sinks)", catalog.len()))
            }
        }
    }
}

fn load_apps(apps: &[PathBuf], dir: Option<&Path>) -> Result<Vec<PathBuf>, Failure> {
    let mut paths = apps.to_vec();
    if let Some(d) = dir {
        let mut found: Vec<PathBuf> = std::fs::read_dir(d)
            .with_context(|| format!("cannot read directory {}", d.display()))
            .map_err(Failure::input)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "ir"))
            .collect();
        found.sort();
        paths.extend(found);
    }
    if paths.is_empty() {
        return Err(Failure::input(anyhow!("no app given")));
    }
    Ok(paths)
}

fn analyze_paths(cfg: &PipelineConfig, paths: &[PathBuf]) -> Result<Vec<StaticAnalysis>, Failure> {
    let catalog = cfg.load_catalog().map_err(Failure::input)?;
    paths
        .iter()
        .map(|p| {
            let app = parse_app(&read(p)?)
                .with_context(|| p.display().to_string())
                .map_err(Failure::input)?;
            Ok(analyze_app(&app, &catalog, cfg)?)
        })
        .collect()
}

fn cmd_analyze(cfg: &PipelineConfig, json: bool, apps: &[PathBuf], dir: Option<&Path>, report: Option<&Path>) -> Outcome {
    let paths = load_apps(apps, dir)?;
    if report.is_some() && paths.len() != 1 {
        return Err(Failure::input(anyhow!("--report needs exactly one app")));
    }
    let results = analyze_paths(cfg, &paths)?;
    if let Some(r) = report {
        let a = &results[0];
        let fr = FlowReport {
            app: a.app.clone(),
            flows: a.flows.clone(),
        };
        write(r, &fr.to_json())?;
    }
    if json {
        return if results.len() == 1 { pretty(&results[0]) } else { pretty(&results) };
    }
    let mut out = String::new();
    for a in &results {
        let _ = writeln!(out, "app {}: {} flow(s)", a.app, a.flows.len());
        for f in &a.flows {
            let _ = writeln!(
                out,
                "  {} [{}] at {} -> {} [{}] at {}",
                f.source_method, f.source_category, f.source_site, f.sink_method, f.sink_category, f.sink_site
            );
            let _ = writeln!(out, "    via {}", f.path.join(" -> "));
        }
        let _ = writeln!(out, "suspects ({}):", a.suspects.len());
        for s in a.suspects.iter() {
            let _ = writeln!(out, "  {s}");
        }
        let _ = writeln!(out, "category pairs:");
        for (s, k) in a.features.pairs() {
            let _ = writeln!(out, "  {s} -> {k}");
        }
    }
    Ok(out)
}

fn cmd_features(cfg: &PipelineConfig, json: bool, apps: &[PathBuf]) -> Outcome {
    let results = analyze_paths(cfg, &load_apps(apps, None)?)?;
    let vectors: Vec<_> = results.into_iter().map(|a| a.features).collect();
    if json {
        pretty(&vectors)
    } else {
        Ok(emit_arff(&features_dataset(&vectors)))
    }
}

fn cmd_simulate(cfg: &PipelineConfig, json: bool, count: usize, trace: bool) -> Outcome {
    if count < 2 {
        return Err(Failure::input(anyhow!("--count must be at least 2")));
    }
    let instances = generate_instances(cfg.seed, count);
    if trace {
        return Ok(emit_trace(&instances_to_trace(&instances, cfg.window_ms)));
    }
    let ds = to_dataset(&instances);
    if json {
        pretty(&ds.to_json())
    } else {
        Ok(emit_arff(&ds))
    }
}

fn cmd_train(cfg: &PipelineConfig, json: bool, data: &Path, model: Option<&Path>) -> Outcome {
    let ds = read_arff(data)?;
    let net = train(&ds, &cfg.learner()).map_err(Failure::input)?;
    let scores = score_network(&net, &ds).map_err(Failure::input)?;
    if let Some(m) = model {
        write(m, &net.to_json())?;
    }
    if json {
        pretty(&json!({"network": net, "scores": scores}))
    } else {
        Ok(format!(
            "Network structure (nodes followed by parents)\n{}{}",
            net.structure_summary(),
            scores
        ))
    }
}

fn cmd_classify(json: bool, model: &Path, data: &Path) -> Outcome {
    let net = BayesNetwork::from_json(&read(model)?)
        .map_err(|e| Failure::input(anyhow!("{}: {e}", model.display())))?;
    let ds = read_arff(data)?;
    let class = net.class_index();
    let class_values = &net.variables()[class].values;
    let mut rows = Vec::with_capacity(ds.rows.len());
    for (i, row) in ds.rows.iter().enumerate() {
        let post = net
            .classify(row)
            .with_context(|| format!("row {}", i + 1))
            .map_err(Failure::input)?;
        rows.push((i + 1, class_values[post.label].clone(), post.distribution));
    }
    if json {
        let items: Vec<_> = rows
            .iter()
            .map(|(i, label, dist)| json!({"row": i, "label": label, "distribution": dist}))
            .collect();
        return pretty(&items);
    }
    let mut out = String::new();
    for (i, label, dist) in rows {
        let d: Vec<String> = dist.iter().map(|p| format!("{p:.3}")).collect();
        let _ = writeln!(out, "{i:>4}  {label:<12} {}", d.join(" "));
    }
    Ok(out)
}
