//! End-to-end checks of the `mot` binary: exit codes, artifact layout, and
//! the contract that composing subcommands by hand produces byte-identical
//! artifacts to one `pipeline` run.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn mot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mot"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn exit_code(output: &Output) -> i32 {
    output.status.code().expect("no signal")
}

fn stdout_json(output: &Output) -> serde_json::Value {
    serde_json::from_slice(&output.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}",
            String::from_utf8_lossy(&output.stdout)
        )
    })
}

fn run_hospital_pipeline(out: &Path) -> Output {
    mot(&[
        "pipeline",
        "--model",
        fixture("hospital.xmi").to_str().unwrap(),
        "--manifest",
        fixture("hospital.manifest.json").to_str().unwrap(),
        "--credentials",
        fixture("hospital.credentials.json").to_str().unwrap(),
        "--scenario",
        fixture("hospital.scenario.json").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ])
}

#[test]
fn validate_hospital_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let output = mot(&[
        "validate",
        "--model",
        fixture("hospital.xmi").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--strict",
    ]);
    assert_eq!(exit_code(&output), 0);
    let report = stdout_json(&output);
    assert_eq!(report["ok"], serde_json::json!(true));
}

#[test]
fn validate_unknown_stereotype_strict_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.xmi");
    fs::write(
        &model,
        r#"<xmi:XMI xmlns:xmi="x" xmlns:uml="u"><uml:Model xmi:id="_m">
           <packagedElement xmi:type="uml:UseCase" xmi:id="_u" name="U"/>
           </uml:Model><Mystery xmi:id="_s" base_UseCase="_u"/></xmi:XMI>"#,
    )
    .unwrap();
    let strict = mot(&[
        "validate",
        "--model",
        model.to_str().unwrap(),
        "--strict",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&strict), 1);

    let lenient = mot(&[
        "validate",
        "--model",
        model.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&lenient), 0);
    assert_eq!(stdout_json(&lenient)["warnings"].as_array().unwrap().len(), 1);
}

#[test]
fn validate_non_xml_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("not.xmi");
    fs::write(&model, "plainly not xml").unwrap();
    let output = mot(&[
        "validate",
        "--model",
        model.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 2);
}

#[test]
fn transform_writes_graph_and_reports_pending() {
    let dir = tempfile::tempdir().unwrap();
    let output = mot(&[
        "transform",
        "--model",
        fixture("hospital.xmi").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 0);
    let report = stdout_json(&output);
    assert_eq!(report["graph"]["groups"].as_array().unwrap().len(), 4);
    assert!(!report["pending"].as_array().unwrap().is_empty());
    assert!(dir.path().join("graph.json").exists());
}

#[test]
fn transform_empty_model_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("empty.xmi");
    fs::write(
        &model,
        r#"<xmi:XMI xmlns:xmi="x" xmlns:uml="u"><uml:Model xmi:id="_m">
           <packagedElement xmi:type="uml:UseCase" xmi:id="_u" name="U"/>
           </uml:Model></xmi:XMI>"#,
    )
    .unwrap();
    let output = mot(&[
        "transform",
        "--model",
        model.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 1);
    let report = stdout_json(&output);
    assert!(report["error"]
        .as_str()
        .unwrap()
        .contains("no stereotype applications"));
}

#[test]
fn transform_cyclic_repo_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let templates = dir.path().join("templates");
    fs::create_dir(&templates).unwrap();
    fs::write(
        templates.join("sensor-subscribe.json"),
        r#"{"id": "sensor-subscribe", "kind": "composite", "children": ["other"], "chain": true}"#,
    )
    .unwrap();
    fs::write(
        templates.join("other.json"),
        r#"{"id": "other", "kind": "composite", "children": ["sensor-subscribe"], "chain": true}"#,
    )
    .unwrap();
    let output = mot(&[
        "transform",
        "--model",
        fixture("hospital.xmi").to_str().unwrap(),
        "--templates",
        templates.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 1);
}

#[test]
fn configure_build_simulate_compose_like_pipeline() {
    let composed = tempfile::tempdir().unwrap();
    let piped = tempfile::tempdir().unwrap();

    // stage by stage
    assert_eq!(
        exit_code(&mot(&[
            "transform",
            "--model",
            fixture("hospital.xmi").to_str().unwrap(),
            "--out",
            composed.path().to_str().unwrap(),
        ])),
        0
    );
    let configure = mot(&[
        "configure",
        "--manifest",
        fixture("hospital.manifest.json").to_str().unwrap(),
        "--out",
        composed.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&configure), 0);
    assert_eq!(stdout_json(&configure)["ready"], serde_json::json!(true));
    let build = mot(&[
        "build",
        "--out",
        composed.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&build), 0);
    let simulate = mot(&[
        "simulate",
        "--scenario",
        fixture("hospital.scenario.json").to_str().unwrap(),
        "--credentials",
        fixture("hospital.credentials.json").to_str().unwrap(),
        "--out",
        composed.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&simulate), 0);
    assert_eq!(stdout_json(&simulate)["emails"].as_array().unwrap().len(), 1);

    // one pipeline run
    assert_eq!(exit_code(&run_hospital_pipeline(piped.path())), 0);

    // byte-identical artifacts
    for artifact in [
        "graph.json",
        "graph.configured.json",
        "readiness.json",
        "write-manifest.json",
        "trace.json",
        "package/flows.json",
        "package/settings.js",
        "package/package.json",
        "package/serverless.yml",
        "package/setup.sh",
    ] {
        let a = fs::read(composed.path().join(artifact)).unwrap();
        let b = fs::read(piped.path().join(artifact)).unwrap();
        assert_eq!(a, b, "artifact `{artifact}` differs");
    }
}

#[test]
fn build_local_only_omits_serverless_descriptor() {
    let dir = tempfile::tempdir().unwrap();
    mot(&[
        "transform",
        "--model",
        fixture("hospital.xmi").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    mot(&[
        "configure",
        "--manifest",
        fixture("hospital.manifest.json").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let output = mot(&["build", "--local-only", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(exit_code(&output), 0);
    let manifest = stdout_json(&output);
    assert_eq!(manifest["manifest"]["entries"].as_array().unwrap().len(), 4);
    assert!(!dir.path().join("package/serverless.yml").exists());
}

#[test]
fn build_unready_graph_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    mot(&[
        "transform",
        "--model",
        fixture("hospital.xmi").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    // configure without a manifest reports the pending slots but succeeds
    let configure = mot(&["configure", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(exit_code(&configure), 0);
    let report = stdout_json(&configure);
    assert_eq!(report["ready"], serde_json::json!(false));
    assert!(!report["pending_required"].as_array().unwrap().is_empty());

    let output = mot(&["build", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(exit_code(&output), 1);
}

#[test]
fn configure_bad_type_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    mot(&[
        "transform",
        "--model",
        fixture("hospital.xmi").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let manifest = dir.path().join("bad.json");
    fs::write(
        &manifest,
        r#"{"entries": {"_uc_save:DatabaseSave:database-save:0": {"collection": 42}}}"#,
    )
    .unwrap();
    let output = mot(&[
        "configure",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 1);
}

#[test]
fn simulate_without_credentials_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(exit_code(&run_hospital_pipeline(dir.path())), 0);
    let output = mot(&[
        "simulate",
        "--scenario",
        fixture("hospital.scenario.json").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 1);
}

#[test]
fn simulate_empty_scenario_yields_empty_trace() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(exit_code(&run_hospital_pipeline(dir.path())), 0);
    let scenario = dir.path().join("empty.json");
    fs::write(&scenario, r#"{"injections": []}"#).unwrap();
    let output = mot(&[
        "simulate",
        "--scenario",
        scenario.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 0);
    let trace = stdout_json(&output);
    for sink in ["db_records", "emails", "dashboard", "published", "social", "dropped"] {
        assert!(trace[sink].as_array().unwrap().is_empty());
    }
}

#[test]
fn pipeline_without_manifest_stops_at_configure() {
    let dir = tempfile::tempdir().unwrap();
    let output = mot(&[
        "pipeline",
        "--model",
        fixture("hospital.xmi").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 1);
    let report = stdout_json(&output);
    let stages: Vec<&str> = report["stages"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["stage"].as_str().unwrap())
        .collect();
    assert_eq!(stages, ["validate", "transform", "configure"]);
    assert!(!dir.path().join("package").exists());
}

#[test]
fn pipeline_skip_simulate_makes_build_terminal() {
    let dir = tempfile::tempdir().unwrap();
    let output = mot(&[
        "pipeline",
        "--model",
        fixture("hospital.xmi").to_str().unwrap(),
        "--manifest",
        fixture("hospital.manifest.json").to_str().unwrap(),
        "--scenario",
        fixture("hospital.scenario.json").to_str().unwrap(),
        "--skip-simulate",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 0);
    let report = stdout_json(&output);
    let last = report["stages"].as_array().unwrap().last().unwrap();
    assert_eq!(last["stage"], serde_json::json!("build"));
    assert!(!dir.path().join("trace.json").exists());
}

#[test]
fn interactive_configure_writes_generated_manifest() {
    let dir = tempfile::tempdir().unwrap();
    mot(&[
        "transform",
        "--model",
        fixture("hospital.xmi").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    // answer the 9 pending prompts: topic, broker, server, collection,
    // recipient, sender, host, port, password
    let answers = "ward/temp\nmock://broker\nmock://db\ntemperatures\n\
                   a@b.example\nc@d.example\nsmtp.example\n465\nhunter2\n";
    let mut child = Command::new(env!("CARGO_BIN_EXE_mot"))
        .args([
            "configure",
            "--interactive",
            "--out",
            dir.path().to_str().unwrap(),
        ])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    use std::io::Write as _;
    child
        .stdin
        .take()
        .unwrap()
        .write_all(answers.as_bytes())
        .unwrap();
    let output = child.wait_with_output().unwrap();
    assert_eq!(output.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    assert_eq!(report["ready"], serde_json::json!(true));

    let generated = dir.path().join("manifest.generated.json");
    assert!(generated.exists());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(generated).unwrap()).unwrap();
    assert_eq!(
        manifest["entries"]["_uc_monitoring:SensorSubscribe:sensor-subscribe/mqtt-in:0"]["topic"],
        serde_json::json!("ward/temp")
    );
    assert_eq!(
        manifest["entries"]["_uc_notify:SendEmail:send-email:0"]["smtp_port"],
        serde_json::json!(465)
    );
}

#[test]
fn template_dir_env_variable_is_honored() {
    let dir = tempfile::tempdir().unwrap();
    let templates = dir.path().join("templates");
    fs::create_dir(&templates).unwrap();
    // a deliberately broken repo proves the env var is being read
    fs::write(templates.join("bad.json"), "{").unwrap();
    let output = Command::new(env!("CARGO_BIN_EXE_mot"))
        .args([
            "transform",
            "--model",
            fixture("hospital.xmi").to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
        ])
        .env("MOT_TEMPLATE_DIR", templates.to_str().unwrap())
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
}
