//! Stage orchestration shared by the CLI subcommands. Each stage reads and
//! writes fixed file names under the output directory, so running the
//! subcommands individually produces byte-identical artifacts to one
//! `pipeline` invocation.
//!
//! Exit-code contract: 0 success, 1 domain error, 2 environment/IO error
//! (including XMI parse failures).

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::configure::{
    collected_secrets, configure_graph, readiness, ConfigurationManifest, ConfigureError,
    MockProvider, PendingProperty, ReadinessReport,
};
use crate::emit::{
    build_package, emit_flows, parse_flows, write_package, BuildOptions, EmitError, WriteManifest,
};
use crate::profile::{extend_registry, ProfileRegistry};
use crate::simulate::{run_simulation, SimulateError, SimulationScenario, SimulationTrace};
use crate::transform::{
    load_templates, transform_model, ComponentGraph, TemplateRepo, TransformError,
};
use crate::xmi::{parse_xmi, validate_model, ValidationMode, ValidationReport, XmiError};

pub const GRAPH_FILE: &str = "graph.json";
pub const CONFIGURED_GRAPH_FILE: &str = "graph.configured.json";
pub const READINESS_FILE: &str = "readiness.json";
pub const VALIDATION_FILE: &str = "validation.json";
pub const WRITE_MANIFEST_FILE: &str = "write-manifest.json";
pub const TRACE_FILE: &str = "trace.json";
pub const PACKAGE_DIR: &str = "package";
pub const TEMPLATE_DIR_ENV: &str = "MOT_TEMPLATE_DIR";

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Model or configuration problem; exit code 1.
    Domain,
    /// Missing/unreadable/unwritable inputs or unparseable files; exit 2.
    Environment,
}

#[derive(Debug)]
pub struct PipelineError {
    pub kind: ErrorKind,
    pub message: String,
}

impl PipelineError {
    pub fn domain(message: impl Into<String>) -> Self {
        PipelineError {
            kind: ErrorKind::Domain,
            message: message.into(),
        }
    }

    pub fn environment(message: impl Into<String>) -> Self {
        PipelineError {
            kind: ErrorKind::Environment,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Domain => 1,
            ErrorKind::Environment => 2,
        }
    }
}

impl std::fmt::Display for PipelineError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for PipelineError {}

impl From<XmiError> for PipelineError {
    fn from(e: XmiError) -> Self {
        PipelineError::environment(format!("cannot parse model: {e}"))
    }
}

impl From<TransformError> for PipelineError {
    fn from(e: TransformError) -> Self {
        PipelineError::domain(e.to_string())
    }
}

impl From<ConfigureError> for PipelineError {
    fn from(e: ConfigureError) -> Self {
        PipelineError::domain(e.to_string())
    }
}

impl From<EmitError> for PipelineError {
    fn from(e: EmitError) -> Self {
        match e {
            EmitError::IoFailure(_) => PipelineError::environment(e.to_string()),
            _ => PipelineError::domain(e.to_string()),
        }
    }
}

impl From<SimulateError> for PipelineError {
    fn from(e: SimulateError) -> Self {
        PipelineError::domain(e.to_string())
    }
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default)]
pub struct PipelineConfig {
    pub model_path: Option<PathBuf>,
    pub template_dir: Option<PathBuf>,
    pub profile_ext_path: Option<PathBuf>,
    pub manifest_path: Option<PathBuf>,
    pub credentials_path: Option<PathBuf>,
    pub scenario_path: Option<PathBuf>,
    pub flows_path: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub strict: bool,
    pub local_only: bool,
    pub skip_simulate: bool,
    pub app_name: Option<String>,
}

fn read_file(path: &Path) -> Result<Vec<u8>, PipelineError> {
    fs::read(path).map_err(|e| PipelineError::environment(format!("{}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String, PipelineError> {
    fs::read_to_string(path)
        .map_err(|e| PipelineError::environment(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), PipelineError> {
    fs::create_dir_all(dir)
        .map_err(|e| PipelineError::environment(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| PipelineError::environment(e.to_string()))?;
    bytes.push(b'\n');
    fs::write(&path, bytes)
        .map_err(|e| PipelineError::environment(format!("{}: {e}", path.display())))
}

/// Active registry: built-ins plus the optional extension file.
pub fn load_registry(config: &PipelineConfig) -> Result<ProfileRegistry, PipelineError> {
    let registry = ProfileRegistry::builtin();
    match &config.profile_ext_path {
        None => Ok(registry),
        Some(path) => {
            let text = read_text(path)?;
            extend_registry(&registry, &text)
                .map_err(|e| PipelineError::domain(format!("profile extension: {e}")))
        }
    }
}

/// Template repository resolution: `--templates`, then `MOT_TEMPLATE_DIR`,
/// then the bundled built-in repository.
pub fn load_repo(config: &PipelineConfig) -> Result<TemplateRepo, PipelineError> {
    let dir = config
        .template_dir
        .clone()
        .or_else(|| std::env::var_os(TEMPLATE_DIR_ENV).map(PathBuf::from));
    match dir {
        None => Ok(TemplateRepo::builtin()),
        Some(dir) => load_templates(&dir).map_err(|e| match e {
            crate::transform::TemplateError::Io(_) => PipelineError::environment(e.to_string()),
            _ => PipelineError::domain(e.to_string()),
        }),
    }
}

fn load_model(config: &PipelineConfig) -> Result<crate::xmi::UmlModel, PipelineError> {
    let path = config
        .model_path
        .as_ref()
        .ok_or_else(|| PipelineError::environment("no model path given"))?;
    let bytes = read_file(path)?;
    Ok(parse_xmi(&bytes)?)
}

fn load_credentials(path: &Path) -> Result<Vec<(String, String)>, PipelineError> {
    let text = read_text(path)?;
    let map: std::collections::BTreeMap<String, String> = serde_json::from_str(&text)
        .map_err(|e| PipelineError::environment(format!("{}: {e}", path.display())))?;
    Ok(map.into_iter().collect())
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct ValidateOutcome {
    pub ok: bool,
    pub errors: Vec<crate::xmi::ValidationIssue>,
    pub warnings: Vec<crate::xmi::ValidationIssue>,
}

impl ValidateOutcome {
    fn from_report(report: &ValidationReport) -> Self {
        ValidateOutcome {
            ok: report.ok(),
            errors: report.errors.clone(),
            warnings: report.warnings.clone(),
        }
    }
}

/// Parse + validate. Mode comes from `strict`; validation problems are
/// reported, not thrown — callers decide what a failed report means.
pub fn stage_validate(config: &PipelineConfig) -> Result<ValidateOutcome, PipelineError> {
    let model = load_model(config)?;
    let registry = load_registry(config)?;
    let mode = if config.strict {
        ValidationMode::Strict
    } else {
        ValidationMode::Lenient
    };
    let report = validate_model(&model, &registry, mode);
    Ok(ValidateOutcome::from_report(&report))
}

#[derive(Debug, Serialize)]
pub struct TransformOutcome {
    pub graph: ComponentGraph,
    pub pending: Vec<PendingProperty>,
}

/// Strict validation, then transformation. Writes `graph.json`.
pub fn stage_transform(config: &PipelineConfig) -> Result<TransformOutcome, PipelineError> {
    let model = load_model(config)?;
    let registry = load_registry(config)?;
    let repo = load_repo(config)?;
    let report = validate_model(&model, &registry, ValidationMode::Strict);
    if !report.ok() {
        return Err(PipelineError::domain(format!(
            "model failed strict validation with {} error(s); run `validate` for details",
            report.errors.len()
        )));
    }
    let graph = transform_model(&model, &registry, &repo)?;
    let pending = crate::configure::required_properties(&graph);
    write_json(&config.out_dir, GRAPH_FILE, &graph)?;
    Ok(TransformOutcome { graph, pending })
}

#[derive(Debug, Serialize)]
pub struct ConfigureOutcome {
    pub readiness: ReadinessReport,
    #[serde(skip)]
    pub graph: ComponentGraph,
}

fn read_graph(dir: &Path, name: &str) -> Result<ComponentGraph, PipelineError> {
    let path = dir.join(name);
    let text = read_text(&path)?;
    serde_json::from_str(&text)
        .map_err(|e| PipelineError::environment(format!("{}: {e}", path.display())))
}

/// Applies the manifest (or nothing) to `graph.json`, writing the
/// configured graph and readiness report.
pub fn stage_configure(config: &PipelineConfig) -> Result<ConfigureOutcome, PipelineError> {
    let graph = read_graph(&config.out_dir, GRAPH_FILE)?;
    let manifest = match &config.manifest_path {
        Some(path) => ConfigurationManifest::parse(&read_text(path)?)
            .map_err(|e| PipelineError::domain(e.to_string()))?,
        None => ConfigurationManifest::default(),
    };
    let mut provider = MockProvider::new();
    let (configured, _instances) = configure_graph(&graph, &manifest, &mut provider)?;
    let report = readiness(&configured);
    write_json(&config.out_dir, CONFIGURED_GRAPH_FILE, &configured)?;
    write_json(&config.out_dir, READINESS_FILE, &report)?;
    Ok(ConfigureOutcome {
        readiness: report,
        graph: configured,
    })
}

#[derive(Debug, Serialize)]
pub struct BuildOutcome {
    pub manifest: WriteManifest,
    pub warnings: Vec<String>,
}

/// Emits flows from the configured graph and writes the deployment
/// package under `<out>/package/`.
pub fn stage_build(config: &PipelineConfig) -> Result<BuildOutcome, PipelineError> {
    let graph = read_graph(&config.out_dir, CONFIGURED_GRAPH_FILE)?;
    let report = readiness(&graph);
    if !report.ready {
        return Err(PipelineError::domain(format!(
            "graph is not ready: {} required slot(s) unfilled",
            report.pending_required.len()
        )));
    }
    let emitted = emit_flows(&graph)?;
    let mut credentials = collected_secrets(&graph);
    if let Some(path) = &config.credentials_path {
        credentials.extend(load_credentials(path)?);
    }
    let options = BuildOptions {
        local_only: config.local_only,
        app_name: config.app_name.clone().unwrap_or_else(|| "mot-app".to_string()),
        credentials,
    };
    let package = build_package(&emitted.document, &options);
    let manifest = write_package(&package, &config.out_dir.join(PACKAGE_DIR))?;
    write_json(&config.out_dir, WRITE_MANIFEST_FILE, &manifest)?;
    Ok(BuildOutcome {
        manifest,
        warnings: emitted.warnings,
    })
}

/// Runs the scenario against the built flows (or `--flows`).
pub fn stage_simulate(config: &PipelineConfig) -> Result<SimulationTrace, PipelineError> {
    let flows_path = config
        .flows_path
        .clone()
        .unwrap_or_else(|| config.out_dir.join(PACKAGE_DIR).join("flows.json"));
    let doc = parse_flows(&read_file(&flows_path)?)?;
    let mut scenario = match &config.scenario_path {
        Some(path) => SimulationScenario::parse(&read_text(path)?)
            .map_err(|e| PipelineError::domain(e.to_string()))?,
        None => SimulationScenario::default(),
    };
    if let Some(path) = &config.credentials_path {
        scenario.credentials.extend(load_credentials(path)?);
    }
    let trace = run_simulation(&doc, &scenario)?;
    write_json(&config.out_dir, TRACE_FILE, &trace)?;
    Ok(trace)
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct StageReport {
    pub stage: String,
    pub ok: bool,
    pub detail: Value,
}

#[derive(Debug, Serialize)]
pub struct PipelineReport {
    pub ok: bool,
    pub stages: Vec<StageReport>,
}

/// validate -> transform -> configure -> build (-> simulate). Stops at the
/// first failing stage; the error keeps that stage's exit code.
pub fn run_pipeline(config: &PipelineConfig) -> (PipelineReport, Option<PipelineError>) {
    let mut stages = Vec::new();
    let fail = |stages: Vec<StageReport>, stage: &str, error: PipelineError| {
        let mut stages = stages;
        stages.push(StageReport {
            stage: stage.to_string(),
            ok: false,
            detail: json!({"error": error.message}),
        });
        (PipelineReport { ok: false, stages }, Some(error))
    };

    // validate
    match stage_validate(config) {
        Ok(outcome) => {
            let ok = outcome.ok;
            if let Err(e) = write_json(&config.out_dir, VALIDATION_FILE, &outcome) {
                return fail(stages, "validate", e);
            }
            stages.push(StageReport {
                stage: "validate".to_string(),
                ok,
                detail: serde_json::to_value(&outcome).unwrap_or(Value::Null),
            });
            if !ok {
                return (
                    PipelineReport { ok: false, stages },
                    Some(PipelineError::domain("model failed validation")),
                );
            }
        }
        Err(e) => return fail(stages, "validate", e),
    }

    // transform
    let pending_count;
    match stage_transform(config) {
        Ok(outcome) => {
            pending_count = outcome.pending.len();
            stages.push(StageReport {
                stage: "transform".to_string(),
                ok: true,
                detail: json!({
                    "groups": outcome.graph.groups.len(),
                    "components": outcome.graph.components.len(),
                    "edges": outcome.graph.edges.len(),
                    "pending": pending_count,
                }),
            });
        }
        Err(e) => return fail(stages, "transform", e),
    }

    // configure
    match stage_configure(config) {
        Ok(outcome) => {
            let ready = outcome.readiness.ready;
            stages.push(StageReport {
                stage: "configure".to_string(),
                ok: ready,
                detail: serde_json::to_value(&outcome.readiness).unwrap_or(Value::Null),
            });
            if !ready {
                return (
                    PipelineReport { ok: false, stages },
                    Some(PipelineError::domain(format!(
                        "configuration incomplete: {} required slot(s) pending",
                        outcome.readiness.pending_required.len()
                    ))),
                );
            }
        }
        Err(e) => return fail(stages, "configure", e),
    }

    // build; the credentials flag feeds simulation, not the package, so
    // the packaged overlay only ever carries manifest-collected secrets
    let build_config = PipelineConfig {
        credentials_path: None,
        ..config.clone()
    };
    match stage_build(&build_config) {
        Ok(outcome) => {
            stages.push(StageReport {
                stage: "build".to_string(),
                ok: true,
                detail: json!({
                    "files": outcome.manifest.entries.len(),
                    "warnings": outcome.warnings,
                }),
            });
        }
        Err(e) => return fail(stages, "build", e),
    }

    // simulate (optional)
    if !config.skip_simulate && config.scenario_path.is_some() {
        match stage_simulate(config) {
            Ok(trace) => {
                stages.push(StageReport {
                    stage: "simulate".to_string(),
                    ok: true,
                    detail: json!({
                        "db_records": trace.db_records.len(),
                        "emails": trace.emails.len(),
                        "dashboard": trace.dashboard.len(),
                        "published": trace.published.len(),
                        "social": trace.social.len(),
                        "dropped": trace.dropped.len(),
                    }),
                });
            }
            Err(e) => return fail(stages, "simulate", e),
        }
    }

    (PipelineReport { ok: true, stages }, None)
}
