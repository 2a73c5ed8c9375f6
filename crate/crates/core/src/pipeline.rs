//! End-to-end runs: static analysis, suspect extraction, trace replay,
//! labelling, training and cross-validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arff::{emit_arff, Dataset};
use crate::bayesnet::{train, BayesNetwork, BnError, LearnerConfig, DEFAULT_ALPHA, DEFAULT_MAX_PARENTS};
use crate::catalog::{CatalogError, SourceSinkCatalog};
use crate::evaluation::{cross_validate, EvalError, EvaluationReport};
use crate::features::{build_flow_features, extract_suspects, FeatureError, FlowFeatureVector, SuspectList};
use crate::ir::AppModel;
use crate::monitor::{replay_trace, to_dataset, MonitorInstance, TraceError, DEFAULT_WINDOW_MS, SYSTEM_PROCESSES};
use crate::taint::{analyze, AnalysisConfig, TaintError, TaintFlow};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Source/sink catalog; the bundled one when unset.
    pub catalog: Option<PathBuf>,
    pub system_processes: Vec<String>,
    pub alias: bool,
    pub access_path_k: usize,
    pub max_iterations: usize,
    pub window_ms: u64,
    pub alpha: f64,
    pub max_parents: usize,
    pub folds: usize,
    pub seed: u64,
    /// Class attribute; `Class` when unset.
    pub class_attribute: Option<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let analysis = AnalysisConfig::default();
        Self {
            catalog: None,
            system_processes: SYSTEM_PROCESSES.iter().map(|s| s.to_string()).collect(),
            alias: analysis.alias,
            access_path_k: analysis.access_path_k,
            max_iterations: analysis.max_iterations,
            window_ms: DEFAULT_WINDOW_MS,
            alpha: DEFAULT_ALPHA,
            max_parents: DEFAULT_MAX_PARENTS,
            folds: 10,
            seed: 1,
            class_attribute: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Io(String),
    #[error("config: {0}")]
    Parse(String),
    #[error("config: `{0}` must be positive")]
    NotPositive(&'static str),
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        // relative catalog paths are taken from the config file's directory
        if let (Some(c), Some(dir)) = (&cfg.catalog, path.parent()) {
            if c.is_relative() {
                cfg.catalog = Some(dir.join(c));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let checks = [
            ("access_path_k", self.access_path_k > 0),
            ("max_iterations", self.max_iterations > 0),
            ("window_ms", self.window_ms > 0),
            ("alpha", self.alpha > 0.0 && self.alpha.is_finite()),
            ("max_parents", self.max_parents > 0),
            ("folds", self.folds > 0),
        ];
        match checks.iter().find(|(_, ok)| !ok) {
            Some((name, _)) => Err(ConfigError::NotPositive(name)),
            None => Ok(()),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn analysis(&self) -> AnalysisConfig {
        AnalysisConfig {
            alias: self.alias,
            access_path_k: self.access_path_k,
            max_iterations: self.max_iterations,
        }
    }

    pub fn learner(&self) -> LearnerConfig {
        LearnerConfig {
            alpha: self.alpha,
            max_parents: self.max_parents,
            class_attribute: self.class_attribute.clone(),
        }
    }

    pub fn load_catalog(&self) -> Result<SourceSinkCatalog, CatalogError> {
        match &self.catalog {
            Some(p) => SourceSinkCatalog::load(p),
            None => Ok(SourceSinkCatalog::bundled()),
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Taint(#[from] TaintError),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Learner(#[from] BnError),
    #[error(transparent)]
    Evaluation(#[from] EvalError),
}

/// Static half of the pipeline for one app.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StaticAnalysis {
    pub app: String,
    pub flows: Vec<TaintFlow>,
    pub suspects: SuspectList,
    pub features: FlowFeatureVector,
}

pub fn analyze_app(
    app: &AppModel,
    catalog: &SourceSinkCatalog,
    config: &PipelineConfig,
) -> Result<StaticAnalysis, PipelineError> {
    let flows = analyze(app, catalog, &config.analysis())?;
    let features = build_flow_features(&app.app_name, &flows, catalog)?;
    let suspects = extract_suspects(&flows, &config.system_processes);
    Ok(StaticAnalysis {
        app: app.app_name.clone(),
        flows,
        suspects,
        features,
    })
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub analysis: StaticAnalysis,
    pub instances: Vec<MonitorInstance>,
    pub dataset: Dataset,
    pub arff: String,
    pub network: BayesNetwork,
    pub report: EvaluationReport,
}

/// Replays `trace` against the app's suspects, labels the instances, then
/// trains on all of them and cross-validates. The first failing stage wins.
pub fn run_pipeline(app: &AppModel, trace: &str, config: &PipelineConfig) -> Result<PipelineOutcome, PipelineError> {
    let catalog = config.load_catalog()?;
    let analysis = analyze_app(app, &catalog, config)?;
    let instances: Vec<MonitorInstance> = replay_trace(trace, &analysis.suspects, config.window_ms)?
        .into_iter()
        .map(MonitorInstance::labeled)
        .collect();
    let dataset = to_dataset(&instances);
    let arff = emit_arff(&dataset);
    let network = train(&dataset, &config.learner())?;
    let report = cross_validate(&dataset, config.folds, config.seed, &config.learner())?;
    Ok(PipelineOutcome {
        analysis,
        instances,
        dataset,
        arff,
        network,
        report,
    })
}
