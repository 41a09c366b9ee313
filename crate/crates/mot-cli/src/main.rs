//! `mot` — compiles annotated use-case models into flow documents and
//! deployment packages, and simulates the result.
//!
//! Subcommands mirror the pipeline stages; every stage reads and writes
//! fixed file names under `--out`, so composing subcommands by hand gives
//! the same artifacts as one `pipeline` run. All reports are JSON on
//! stdout; `--pretty` switches to indented rendering. Exit codes: 0
//! success, 1 domain error, 2 environment/IO error.

use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use mot_core::configure::required_properties;
use mot_core::pipeline::{
    self, run_pipeline, stage_build, stage_configure, stage_simulate, stage_transform,
    stage_validate, PipelineConfig, PipelineError,
};
use mot_core::transform::ValueType;

#[derive(Parser)]
#[command(name = "mot", version, about = "Model-driven flow compiler and simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct CommonArgs {
    /// Output directory for stage artifacts.
    #[arg(long, default_value = "mot-out", global = true)]
    out: PathBuf,
    /// Render reports with indentation instead of compact JSON.
    #[arg(long, global = true)]
    pretty: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a model and report validation errors and warnings.
    Validate {
        #[command(flatten)]
        common: CommonArgs,
        /// Path to the XMI model.
        #[arg(long)]
        model: PathBuf,
        /// Optional profile-extension file (JSON array of stereotypes).
        #[arg(long = "profile-ext")]
        profile_ext: Option<PathBuf>,
        /// Treat unknown stereotypes as errors.
        #[arg(long)]
        strict: bool,
    },
    /// Transform a model into the abstract component graph.
    Transform {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        model: PathBuf,
        /// Template repository directory (default: MOT_TEMPLATE_DIR, then
        /// the bundled built-in templates).
        #[arg(long)]
        templates: Option<PathBuf>,
        #[arg(long = "profile-ext")]
        profile_ext: Option<PathBuf>,
    },
    /// Apply a configuration manifest to the transformed graph.
    Configure {
        #[command(flatten)]
        common: CommonArgs,
        /// Manifest file; omit to only recompute readiness.
        #[arg(long, conflicts_with = "interactive")]
        manifest: Option<PathBuf>,
        /// Prompt for each pending property on stdin and write the
        /// resulting manifest beside the graph.
        #[arg(long)]
        interactive: bool,
    },
    /// Emit flows and write the deployment package.
    Build {
        #[command(flatten)]
        common: CommonArgs,
        /// Skip the serverless descriptor.
        #[arg(long = "local-only")]
        local_only: bool,
        /// Credentials overlay merged into the package.
        #[arg(long)]
        credentials: Option<PathBuf>,
        /// Name used in the generated package manifests.
        #[arg(long = "app-name")]
        app_name: Option<String>,
    },
    /// Execute a scenario against the built flows.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Scenario file (injections, overrides, credentials).
        #[arg(long)]
        scenario: PathBuf,
        /// Credentials overlay merged into the scenario.
        #[arg(long)]
        credentials: Option<PathBuf>,
        /// Flows file to interpret (default: <out>/package/flows.json).
        #[arg(long)]
        flows: Option<PathBuf>,
        /// Also dump db-sink records to this file, one JSON object per line.
        #[arg(long = "db-dump")]
        db_dump: Option<PathBuf>,
    },
    /// Run validate, transform, configure, build, and simulate in order.
    Pipeline {
        #[command(flatten)]
        common: CommonArgs,
        /// Path to the XMI model.
        #[arg(long)]
        model: PathBuf,
        /// Template repository directory (default: MOT_TEMPLATE_DIR, then
        /// the bundled built-in templates).
        #[arg(long)]
        templates: Option<PathBuf>,
        /// Optional profile-extension file (JSON array of stereotypes).
        #[arg(long = "profile-ext")]
        profile_ext: Option<PathBuf>,
        /// Configuration manifest applied at the configure stage.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Credentials overlay for the simulate stage.
        #[arg(long)]
        credentials: Option<PathBuf>,
        /// Scenario to simulate after the build stage.
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Treat unknown stereotypes as errors during validation.
        #[arg(long)]
        strict: bool,
        /// Skip the serverless descriptor in the package.
        #[arg(long = "local-only")]
        local_only: bool,
        /// Stop after build even when a scenario is given.
        #[arg(long = "skip-simulate")]
        skip_simulate: bool,
        /// Name used in the generated package manifests.
        #[arg(long = "app-name")]
        app_name: Option<String>,
    },
}

fn print_report(value: &Value, pretty: bool) {
    let rendered = if pretty {
        serde_json::to_string_pretty(value)
    } else {
        serde_json::to_string(value)
    };
    println!("{}", rendered.expect("reports serialize"));
}

fn fail(error: &PipelineError, pretty: bool) -> ExitCode {
    print_report(&json!({"error": error.message}), pretty);
    ExitCode::from(error.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate {
            common,
            model,
            profile_ext,
            strict,
        } => {
            let config = PipelineConfig {
                model_path: Some(model),
                profile_ext_path: profile_ext,
                out_dir: common.out,
                strict,
                ..Default::default()
            };
            match stage_validate(&config) {
                Ok(outcome) => {
                    let ok = outcome.ok;
                    print_report(&serde_json::to_value(&outcome).unwrap(), common.pretty);
                    if ok {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(e) => fail(&e, common.pretty),
            }
        }
        Command::Transform {
            common,
            model,
            templates,
            profile_ext,
        } => {
            let config = PipelineConfig {
                model_path: Some(model),
                template_dir: templates,
                profile_ext_path: profile_ext,
                out_dir: common.out,
                ..Default::default()
            };
            match stage_transform(&config) {
                Ok(outcome) => {
                    print_report(&serde_json::to_value(&outcome).unwrap(), common.pretty);
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e, common.pretty),
            }
        }
        Command::Configure {
            common,
            manifest,
            interactive,
        } => {
            let mut config = PipelineConfig {
                manifest_path: manifest,
                out_dir: common.out,
                ..Default::default()
            };
            if interactive {
                match prompt_manifest(&config) {
                    Ok(path) => config.manifest_path = Some(path),
                    Err(e) => return fail(&e, common.pretty),
                }
            }
            match stage_configure(&config) {
                Ok(outcome) => {
                    print_report(
                        &serde_json::to_value(&outcome.readiness).unwrap(),
                        common.pretty,
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e, common.pretty),
            }
        }
        Command::Build {
            common,
            local_only,
            credentials,
            app_name,
        } => {
            let config = PipelineConfig {
                credentials_path: credentials,
                out_dir: common.out,
                local_only,
                app_name,
                ..Default::default()
            };
            match stage_build(&config) {
                Ok(outcome) => {
                    print_report(&serde_json::to_value(&outcome).unwrap(), common.pretty);
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e, common.pretty),
            }
        }
        Command::Simulate {
            common,
            scenario,
            credentials,
            flows,
            db_dump,
        } => {
            let config = PipelineConfig {
                scenario_path: Some(scenario),
                credentials_path: credentials,
                flows_path: flows,
                out_dir: common.out,
                ..Default::default()
            };
            match stage_simulate(&config) {
                Ok(trace) => {
                    if let Some(path) = db_dump {
                        let mut lines = String::new();
                        for record in &trace.db_records {
                            lines.push_str(&serde_json::to_string(record).unwrap());
                            lines.push('\n');
                        }
                        if let Err(e) = std::fs::write(&path, lines) {
                            let error = PipelineError::environment(format!(
                                "{}: {e}",
                                path.display()
                            ));
                            return fail(&error, common.pretty);
                        }
                    }
                    print_report(&serde_json::to_value(&trace).unwrap(), common.pretty);
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e, common.pretty),
            }
        }
        Command::Pipeline {
            common,
            model,
            templates,
            profile_ext,
            manifest,
            credentials,
            scenario,
            strict,
            local_only,
            skip_simulate,
            app_name,
        } => {
            let config = PipelineConfig {
                model_path: Some(model),
                template_dir: templates,
                profile_ext_path: profile_ext,
                manifest_path: manifest,
                credentials_path: credentials,
                scenario_path: scenario,
                flows_path: None,
                out_dir: common.out,
                strict,
                local_only,
                skip_simulate,
                app_name,
            };
            let (report, error) = run_pipeline(&config);
            print_report(&serde_json::to_value(&report).unwrap(), common.pretty);
            match error {
                None => ExitCode::SUCCESS,
                Some(e) => ExitCode::from(e.exit_code() as u8),
            }
        }
    }
}

/// Interactive front-end: prompts (on stderr) for every pending property,
/// writes `manifest.generated.json` under the output directory, and lets
/// the ordinary manifest path apply it. Core stages never see a terminal.
fn prompt_manifest(config: &PipelineConfig) -> Result<PathBuf, PipelineError> {
    let graph_path = config.out_dir.join(pipeline::GRAPH_FILE);
    let text = std::fs::read_to_string(&graph_path)
        .map_err(|e| PipelineError::environment(format!("{}: {e}", graph_path.display())))?;
    let graph: mot_core::transform::ComponentGraph = serde_json::from_str(&text)
        .map_err(|e| PipelineError::environment(format!("{}: {e}", graph_path.display())))?;

    let mut entries: serde_json::Map<String, Value> = serde_json::Map::new();
    let stdin = std::io::stdin();
    let mut lines = stdin.lock().lines();
    for pending in required_properties(&graph) {
        eprint!(
            "{}.{} ({:?}, empty line skips): ",
            pending.component_id, pending.property, pending.value_type
        );
        std::io::stderr().flush().ok();
        let Some(Ok(line)) = lines.next() else { break };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let value = match pending.value_type {
            ValueType::Integer => line
                .parse::<i64>()
                .map(Value::from)
                .unwrap_or_else(|_| Value::String(line.to_string())),
            ValueType::Boolean => match line {
                "true" => Value::Bool(true),
                "false" => Value::Bool(false),
                other => Value::String(other.to_string()),
            },
            _ => Value::String(line.to_string()),
        };
        entries
            .entry(pending.component_id.clone())
            .or_insert_with(|| Value::Object(serde_json::Map::new()))
            .as_object_mut()
            .expect("entry is an object")
            .insert(pending.property.clone(), value);
    }

    let manifest = json!({"entries": entries, "provisions": []});
    let path = config.out_dir.join("manifest.generated.json");
    let mut bytes = serde_json::to_vec_pretty(&manifest)
        .map_err(|e| PipelineError::environment(e.to_string()))?;
    bytes.push(b'\n');
    std::fs::write(&path, bytes)
        .map_err(|e| PipelineError::environment(format!("{}: {e}", path.display())))?;
    Ok(path)
}
