//! Transformation 2 and packaging: renders a configured component graph
//! into a flow document for the Node-RED runtime, serializes it in a
//! canonical byte-stable form, and scaffolds the deployment package.
//!
//! Ids are 16-hex-char digests of stable keys instead of the platform's
//! random ids, so regenerating from the same graph yields identical bytes.
//! Deferred-sensitive values never reach the flows file; they render as
//! `__MOT_SECRET__<component>.<property>__` placeholders resolved later by
//! the credentials overlay.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::configure::readiness;
use crate::transform::{AbstractComponent, ComponentGraph, Comparator, Sensitivity};

// ---------------------------------------------------------------------------
// Document types
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tab {
    pub id: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigNode {
    pub id: String,
    pub node_type: String,
    pub name: String,
    pub config: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowNode {
    pub id: String,
    pub node_type: String,
    pub tab_id: String,
    pub name: String,
    pub x: i64,
    pub y: i64,
    pub config: BTreeMap<String, Value>,
    pub wires: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FlowDocument {
    pub tabs: Vec<Tab>,
    pub config_nodes: Vec<ConfigNode>,
    pub nodes: Vec<FlowNode>,
}

impl FlowDocument {
    pub fn node(&self, id: &str) -> Option<&FlowNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn config_node(&self, id: &str) -> Option<&ConfigNode> {
        self.config_nodes.iter().find(|n| n.id == id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmitOutput {
    pub document: FlowDocument,
    pub warnings: Vec<String>,
}

#[derive(Debug, Error)]
pub enum EmitError {
    #[error("graph is not ready: {0} required slot(s) unfilled")]
    NotReady(usize),
    #[error("flow document is invalid: {0}")]
    InvalidDocument(String),
    #[error("write failed: {0}")]
    IoFailure(String),
}

/// 16-hex-char digest used for every generated node id.
pub fn digest16(key: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(key.as_bytes());
    let digest = hasher.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

// ---------------------------------------------------------------------------
// Platform mapping
// ---------------------------------------------------------------------------

/// node_kind -> flow-runtime node type. Kinds outside the table pass
/// through unchanged, which is how user templates introduce new node
/// types without touching the emitter. The same table is documented in
/// `docs/templates.md`.
pub fn platform_type(node_kind: &str) -> &str {
    match node_kind {
        "mqtt-in" => "mqtt in",
        "mqtt-out" => "mqtt out",
        "json-parse" | "json-serialize" => "json",
        "db-write" => "mongodb out",
        "gauge" => "ui_gauge",
        "chart" => "ui_chart",
        "email-send" => "e-mail",
        "twitter-post" => "twitter out",
        "bci-facial" => "facial-expression",
        "bci-mental" => "mental-command",
        other => other,
    }
}

pub fn secret_placeholder(component_id: &str, property: &str) -> String {
    format!("__MOT_SECRET__{component_id}.{property}__")
}

fn slot_config_value(component: &AbstractComponent, property: &str) -> Option<Value> {
    let slot = component.slot(property)?;
    if slot.spec.sensitivity == Sensitivity::DeferredSensitive {
        return Some(Value::String(secret_placeholder(&component.id, property)));
    }
    slot.effective().cloned()
}

// ---------------------------------------------------------------------------
// Emission
// ---------------------------------------------------------------------------

struct EmitState {
    config_nodes: Vec<ConfigNode>,
    broker_configs: BTreeMap<String, String>, // connection -> config node id
    warnings: Vec<String>,
}

impl EmitState {
    fn broker_config(&mut self, connection: &str) -> String {
        if let Some(id) = self.broker_configs.get(connection) {
            return id.clone();
        }
        let id = digest16(&format!("config:mqtt-broker:{connection}"));
        let name = connection.rsplit('/').next().unwrap_or(connection).to_string();
        self.config_nodes.push(ConfigNode {
            id: id.clone(),
            node_type: "mqtt-broker".to_string(),
            name,
            config: [("broker".to_string(), Value::String(connection.to_string()))]
                .into_iter()
                .collect(),
        });
        self.broker_configs.insert(connection.to_string(), id.clone());
        id
    }

    fn ui_group(&mut self, use_case_id: &str, label: &str) -> String {
        let id = digest16(&format!("config:ui-group:{use_case_id}"));
        if self.config_nodes.iter().all(|c| c.id != id) {
            self.config_nodes.push(ConfigNode {
                id: id.clone(),
                node_type: "ui_group".to_string(),
                name: label.to_string(),
                config: [("width".to_string(), Value::from(6))].into_iter().collect(),
            });
        }
        id
    }

    fn smtp_server(&mut self, component: &AbstractComponent) -> String {
        let id = digest16(&format!("config:smtp:{}", component.id));
        if self.config_nodes.iter().all(|c| c.id != id) {
            let host = slot_config_value(component, "smtp_host").unwrap_or(Value::String(String::new()));
            let mut config = BTreeMap::new();
            config.insert("host".to_string(), host.clone());
            if let Some(port) = slot_config_value(component, "smtp_port") {
                config.insert("port".to_string(), port);
            }
            if let Some(sender) = slot_config_value(component, "sender") {
                config.insert("sender".to_string(), sender);
            }
            config.insert(
                "password".to_string(),
                Value::String(secret_placeholder(&component.id, "smtp_password")),
            );
            self.config_nodes.push(ConfigNode {
                id: id.clone(),
                node_type: "smtp-server".to_string(),
                name: host.as_str().unwrap_or("").to_string(),
                config,
            });
        }
        id
    }
}

fn render_component(
    component: &AbstractComponent,
    tab_id: &str,
    group_label: &str,
    use_case_id: &str,
    state: &mut EmitState,
) -> FlowNode {
    let mut config = BTreeMap::new();
    let put = |config: &mut BTreeMap<String, Value>, key: &str, value: Option<Value>| {
        if let Some(v) = value {
            config.insert(key.to_string(), v);
        }
    };
    match component.node_kind.as_str() {
        "mqtt-in" | "mqtt-out" => {
            if let Some(Value::String(conn)) = slot_config_value(component, "broker") {
                let broker_id = state.broker_config(&conn);
                config.insert("broker".to_string(), Value::String(broker_id));
            }
            put(&mut config, "topic", slot_config_value(component, "topic"));
        }
        "json-parse" | "json-serialize" => {
            put(&mut config, "property", slot_config_value(component, "property"));
        }
        "db-write" => {
            put(&mut config, "collection", slot_config_value(component, "collection"));
            put(&mut config, "operation", slot_config_value(component, "operation"));
            put(&mut config, "server", slot_config_value(component, "server"));
        }
        "gauge" => {
            let group = state.ui_group(use_case_id, group_label);
            config.insert("group".to_string(), Value::String(group));
            put(&mut config, "title", slot_config_value(component, "title"));
            put(&mut config, "min", slot_config_value(component, "min"));
            put(&mut config, "max", slot_config_value(component, "max"));
            put(&mut config, "units", slot_config_value(component, "units"));
        }
        "chart" => {
            let group = state.ui_group(use_case_id, group_label);
            config.insert("group".to_string(), Value::String(group));
            put(&mut config, "title", slot_config_value(component, "title"));
        }
        "email-send" => {
            let server = state.smtp_server(component);
            config.insert("server".to_string(), Value::String(server));
            put(&mut config, "to", slot_config_value(component, "recipient"));
            put(&mut config, "subject", slot_config_value(component, "subject"));
        }
        _ => {
            // Pass-through rendering: every slot by name.
            for slot in &component.slots {
                put(
                    &mut config,
                    &slot.spec.name.clone(),
                    slot_config_value(component, &slot.spec.name),
                );
            }
        }
    }
    FlowNode {
        id: digest16(&component.id),
        node_type: platform_type(&component.node_kind).to_string(),
        tab_id: tab_id.to_string(),
        name: component.node_kind.clone(),
        x: 0,
        y: 0,
        config,
        wires: vec![Vec::new()],
    }
}

fn threshold_rule(guard: &crate::transform::GuardSpec) -> (Value, &'static str) {
    match &guard.threshold {
        Some(Value::Number(n)) => (Value::String(n.to_string()), "num"),
        Some(Value::String(s)) => (Value::String(s.clone()), "str"),
        Some(other) => (Value::String(other.to_string()), "str"),
        None => (Value::String(String::new()), "num"),
    }
}

fn comparator_tag(comparator: Comparator) -> &'static str {
    match comparator {
        Comparator::Gt => "gt",
        Comparator::Ge => "gte",
        Comparator::Lt => "lt",
        Comparator::Le => "lte",
        Comparator::Eq => "eq",
        Comparator::Ne => "neq",
    }
}

/// Renders the graph into a flow document: one tab per group, one node per
/// component, link-out/link-in pairs for cross-tab edges, and a switch
/// node in front of every guarded edge. Guards without a threshold render
/// a placeholder rule and a warning instead of failing.
pub fn emit_flows(graph: &ComponentGraph) -> Result<EmitOutput, EmitError> {
    let report = readiness(graph);
    if !report.ready {
        return Err(EmitError::NotReady(report.pending_required.len()));
    }

    let mut state = EmitState {
        config_nodes: Vec::new(),
        broker_configs: BTreeMap::new(),
        warnings: Vec::new(),
    };

    let mut tabs = Vec::new();
    let mut tab_of_component: BTreeMap<&str, usize> = BTreeMap::new();
    // Per tab: link-ins land before components, switches and link-outs after.
    let mut pre: Vec<Vec<FlowNode>> = Vec::new();
    let mut mid: Vec<Vec<FlowNode>> = Vec::new();
    let mut post: Vec<Vec<FlowNode>> = Vec::new();

    for (tab_index, group) in graph.groups.iter().enumerate() {
        let tab_id = digest16(&format!("tab:{}", group.use_case_id));
        tabs.push(Tab {
            id: tab_id.clone(),
            label: group.use_case_name.clone(),
        });
        pre.push(Vec::new());
        mid.push(Vec::new());
        post.push(Vec::new());
        for component_id in &group.components {
            let component = graph
                .component(component_id)
                .expect("group members exist in the graph");
            tab_of_component.insert(component_id.as_str(), tab_index);
            mid[tab_index].push(render_component(
                component,
                &tab_id,
                &group.use_case_name,
                &group.use_case_id,
                &mut state,
            ));
        }
    }

    let wire = |mid: &mut Vec<Vec<FlowNode>>, tab: usize, from_id: &str, to_id: &str| {
        for node in mid[tab].iter_mut() {
            if node.id == from_id {
                node.wires[0].push(to_id.to_string());
                return;
            }
        }
    };

    for edge in &graph.edges {
        let from_tab = *tab_of_component
            .get(edge.from.as_str())
            .ok_or_else(|| EmitError::InvalidDocument(format!("unknown edge source `{}`", edge.from)))?;
        let to_tab = *tab_of_component
            .get(edge.to.as_str())
            .ok_or_else(|| EmitError::InvalidDocument(format!("unknown edge target `{}`", edge.to)))?;
        let from_node = digest16(&edge.from);
        let to_node = digest16(&edge.to);

        if from_tab == to_tab && edge.guard.is_none() {
            wire(&mut mid, from_tab, &from_node, &to_node);
            continue;
        }

        // Cross-tab (or guarded) edges go through a link pair; guarded
        // edges additionally insert the switch before the link-out. The
        // guard tag keeps ids distinct when an include and an extend
        // connect the same component pair.
        let guard_tag = if edge.guard.is_some() { "guarded" } else { "plain" };
        let link_out_id = digest16(&format!("link-out:{guard_tag}:{}->{}", edge.from, edge.to));
        let link_in_id = digest16(&format!("link-in:{guard_tag}:{}->{}", edge.from, edge.to));
        let from_label = tabs[from_tab].label.clone();
        let to_label = tabs[to_tab].label.clone();

        if let Some(guard) = &edge.guard {
            let switch_id = digest16(&format!("switch:{}->{}", edge.from, edge.to));
            let (value, value_type) = threshold_rule(guard);
            if guard.threshold.is_none() {
                state.warnings.push(format!(
                    "guard between `{}` and `{}` has no threshold; emitted placeholder rule",
                    edge.from, edge.to
                ));
            }
            let rule = serde_json::json!({
                "t": comparator_tag(guard.comparator),
                "v": value,
                "vt": value_type,
            });
            post[from_tab].push(FlowNode {
                id: switch_id.clone(),
                node_type: "switch".to_string(),
                tab_id: tabs[from_tab].id.clone(),
                name: format!("guard:{to_label}"),
                x: 0,
                y: 0,
                config: [
                    ("outputs".to_string(), Value::from(1)),
                    ("property".to_string(), Value::String(guard.property_name.clone())),
                    ("rules".to_string(), Value::Array(vec![rule])),
                ]
                .into_iter()
                .collect(),
                wires: vec![vec![link_out_id.clone()]],
            });
            wire(&mut mid, from_tab, &from_node, &switch_id);
        } else {
            wire(&mut mid, from_tab, &from_node, &link_out_id);
        }

        post[from_tab].push(FlowNode {
            id: link_out_id.clone(),
            node_type: "link out".to_string(),
            tab_id: tabs[from_tab].id.clone(),
            name: to_label,
            x: 0,
            y: 0,
            config: [("links".to_string(), Value::Array(vec![Value::String(link_in_id.clone())]))]
                .into_iter()
                .collect(),
            wires: vec![Vec::new()],
        });
        pre[to_tab].push(FlowNode {
            id: link_in_id,
            node_type: "link in".to_string(),
            tab_id: tabs[to_tab].id.clone(),
            name: from_label,
            x: 0,
            y: 0,
            config: [("links".to_string(), Value::Array(vec![Value::String(link_out_id)]))]
                .into_iter()
                .collect(),
            wires: vec![vec![to_node]],
        });
    }

    // Left-to-right chain layout per tab: x = 120 + 200 * ordinal, y = 120.
    let mut nodes = Vec::new();
    for tab_index in 0..tabs.len() {
        let mut ordinal = 0i64;
        for bucket in [&mut pre[tab_index], &mut mid[tab_index], &mut post[tab_index]] {
            for mut node in bucket.drain(..) {
                node.x = 120 + 200 * ordinal;
                node.y = 120;
                ordinal += 1;
                nodes.push(node);
            }
        }
    }

    let document = FlowDocument {
        tabs,
        config_nodes: state.config_nodes,
        nodes,
    };
    validate_document(&document)?;
    Ok(EmitOutput {
        document,
        warnings: state.warnings,
    })
}

/// Keys with structural meaning in the serialized form; config maps may
/// not use them.
const RESERVED_KEYS: [&str; 8] = ["id", "type", "z", "name", "x", "y", "wires", "label"];

/// Structural invariants: unique ids, resolvable tab references, wires
/// that stay on their own tab and point at existing nodes, no reserved
/// config keys.
pub fn validate_document(doc: &FlowDocument) -> Result<(), EmitError> {
    for (owner, config) in doc
        .nodes
        .iter()
        .map(|n| (&n.id, &n.config))
        .chain(doc.config_nodes.iter().map(|c| (&c.id, &c.config)))
    {
        if let Some(key) = config.keys().find(|k| RESERVED_KEYS.contains(&k.as_str())) {
            return Err(EmitError::InvalidDocument(format!(
                "node `{owner}` uses reserved config key `{key}`"
            )));
        }
    }
    let mut ids = BTreeSet::new();
    for id in doc
        .tabs
        .iter()
        .map(|t| &t.id)
        .chain(doc.config_nodes.iter().map(|c| &c.id))
        .chain(doc.nodes.iter().map(|n| &n.id))
    {
        if !ids.insert(id.clone()) {
            return Err(EmitError::InvalidDocument(format!("duplicate id `{id}`")));
        }
    }
    let tab_ids: BTreeSet<&str> = doc.tabs.iter().map(|t| t.id.as_str()).collect();
    for node in &doc.nodes {
        if !tab_ids.contains(node.tab_id.as_str()) {
            return Err(EmitError::InvalidDocument(format!(
                "node `{}` references missing tab `{}`",
                node.id, node.tab_id
            )));
        }
        for port in &node.wires {
            for target in port {
                let Some(target_node) = doc.node(target) else {
                    return Err(EmitError::InvalidDocument(format!(
                        "node `{}` wires to missing node `{target}`",
                        node.id
                    )));
                };
                if target_node.tab_id != node.tab_id {
                    return Err(EmitError::InvalidDocument(format!(
                        "wire `{}` -> `{target}` crosses tabs",
                        node.id
                    )));
                }
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Canonical serialization
// ---------------------------------------------------------------------------

fn json_string(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

fn compact_value(value: &Value) -> String {
    serde_json::to_string(value).expect("JSON values always serialize")
}

/// Canonical flows serialization: tabs, then config nodes, then flow
/// nodes, each in document order. Object keys follow the fixed order
/// id, type, z, name, then config keys sorted lexicographically, then
/// x, y, wires. UTF-8, LF, 4-space indentation.
pub fn serialize_flows(doc: &FlowDocument) -> Vec<u8> {
    let mut objects: Vec<Vec<(String, String)>> = Vec::new();

    for tab in &doc.tabs {
        objects.push(vec![
            ("id".to_string(), json_string(&tab.id)),
            ("type".to_string(), "\"tab\"".to_string()),
            ("label".to_string(), json_string(&tab.label)),
        ]);
    }
    for config_node in &doc.config_nodes {
        let mut fields = vec![
            ("id".to_string(), json_string(&config_node.id)),
            ("type".to_string(), json_string(&config_node.node_type)),
            ("name".to_string(), json_string(&config_node.name)),
        ];
        for (key, value) in &config_node.config {
            fields.push((key.clone(), compact_value(value)));
        }
        objects.push(fields);
    }
    for node in &doc.nodes {
        let mut fields = vec![
            ("id".to_string(), json_string(&node.id)),
            ("type".to_string(), json_string(&node.node_type)),
            ("z".to_string(), json_string(&node.tab_id)),
            ("name".to_string(), json_string(&node.name)),
        ];
        for (key, value) in &node.config {
            fields.push((key.clone(), compact_value(value)));
        }
        fields.push(("x".to_string(), node.x.to_string()));
        fields.push(("y".to_string(), node.y.to_string()));
        fields.push((
            "wires".to_string(),
            compact_value(&serde_json::to_value(&node.wires).expect("wires serialize")),
        ));
        objects.push(fields);
    }

    if objects.is_empty() {
        return b"[]".to_vec();
    }
    let mut out = String::from("[\n");
    for (i, fields) in objects.iter().enumerate() {
        out.push_str("    {\n");
        for (j, (key, rendered)) in fields.iter().enumerate() {
            out.push_str("        ");
            out.push_str(&json_string(key));
            out.push_str(": ");
            out.push_str(rendered);
            if j + 1 < fields.len() {
                out.push(',');
            }
            out.push('\n');
        }
        out.push_str("    }");
        if i + 1 < objects.len() {
            out.push(',');
        }
        out.push('\n');
    }
    out.push(']');
    out.into_bytes()
}

/// Parses a flows file back into a document. Objects typed `tab` become
/// tabs, objects without a `z` become config nodes, the rest flow nodes.
pub fn parse_flows(bytes: &[u8]) -> Result<FlowDocument, EmitError> {
    let value: Value = serde_json::from_slice(bytes)
        .map_err(|e| EmitError::InvalidDocument(format!("not valid JSON: {e}")))?;
    let Value::Array(items) = value else {
        return Err(EmitError::InvalidDocument("flows file must be a JSON array".to_string()));
    };
    let mut doc = FlowDocument::default();
    for item in items {
        let Value::Object(map) = item else {
            return Err(EmitError::InvalidDocument("flows entries must be objects".to_string()));
        };
        let text = |map: &serde_json::Map<String, Value>, key: &str| -> String {
            map.get(key).and_then(Value::as_str).unwrap_or("").to_string()
        };
        let id = text(&map, "id");
        let node_type = text(&map, "type");
        if id.is_empty() || node_type.is_empty() {
            return Err(EmitError::InvalidDocument(
                "every entry needs `id` and `type`".to_string(),
            ));
        }
        if node_type == "tab" {
            doc.tabs.push(Tab {
                id,
                label: text(&map, "label"),
            });
            continue;
        }
        let known = ["id", "type", "z", "name", "x", "y", "wires", "label"];
        let config: BTreeMap<String, Value> = map
            .iter()
            .filter(|(k, _)| !known.contains(&k.as_str()))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        if let Some(z) = map.get("z").and_then(Value::as_str) {
            let wires: Vec<Vec<String>> = map
                .get("wires")
                .map(|w| serde_json::from_value(w.clone()))
                .transpose()
                .map_err(|e| EmitError::InvalidDocument(format!("bad wires: {e}")))?
                .unwrap_or_default();
            doc.nodes.push(FlowNode {
                id,
                node_type,
                tab_id: z.to_string(),
                name: text(&map, "name"),
                x: map.get("x").and_then(Value::as_i64).unwrap_or(0),
                y: map.get("y").and_then(Value::as_i64).unwrap_or(0),
                config,
                wires,
            });
        } else {
            doc.config_nodes.push(ConfigNode {
                id,
                node_type,
                name: text(&map, "name"),
                config,
            });
        }
    }
    validate_document(&doc)?;
    Ok(doc)
}

// ---------------------------------------------------------------------------
// Deployment package
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct BuildOptions {
    pub local_only: bool,
    pub app_name: String,
    /// `<component>.<property>` -> secret value; written into the
    /// credentials overlay, never into the flows file.
    pub credentials: Vec<(String, String)>,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            local_only: false,
            app_name: "mot-app".to_string(),
            credentials: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PackageFile {
    pub rel_path: String,
    pub contents: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DeploymentPackage {
    pub files: Vec<PackageFile>,
}

const LOCAL_RUN_COMMAND: &str = "node ./node_modules/nodered/red.js -s ./settings.js";

fn settings_js() -> String {
    "\
// Flow runtime settings generated by mot. The editor is left open for
// local testing; set adminAuth before exposing this instance.
module.exports = {
    flowFile: \"flows.json\",
    uiPort: 1880,
    adminAuth: null,
    credentialSecret: false,
    functionGlobalContext: {}
};
"
    .to_string()
}

fn package_json(app_name: &str) -> String {
    format!(
        "{{\n\
         \x20   \"name\": {name},\n\
         \x20   \"version\": \"1.0.0\",\n\
         \x20   \"private\": true,\n\
         \x20   \"scripts\": {{\n\
         \x20       \"setup\": \"sh ./setup.sh\",\n\
         \x20       \"start\": \"{run}\"\n\
         \x20   }},\n\
         \x20   \"dependencies\": {{\n\
         \x20       \"nodered\": \"npm:node-red@3.1.11\",\n\
         \x20       \"serverless\": \"3.38.0\"\n\
         \x20   }}\n\
         }}\n",
        name = json_string(app_name),
        run = LOCAL_RUN_COMMAND,
    )
}

fn serverless_yml(app_name: &str) -> String {
    format!(
        "service: {app_name}\n\
         \n\
         provider:\n\
         \x20 name: aws\n\
         \x20 runtime: nodejs18.x\n\
         \n\
         functions:\n\
         \x20 flow-runtime:\n\
         \x20   handler: handler.run\n\
         \x20   description: Runs the flow runtime behind the HTTP gateway\n\
         \x20   events:\n\
         \x20     - httpApi:\n\
         \x20         path: /{{proxy+}}\n\
         \x20         method: any\n\
         \x20   environment:\n\
         \x20     FLOWS_FILE: ./flows.json\n\
         \x20     FLOW_STORE_BUCKET: !Ref flowStore\n\
         \n\
         resources:\n\
         \x20 Resources:\n\
         \x20   flowStore:\n\
         \x20     Type: AWS::S3::Bucket\n\
         \n\
         package:\n\
         \x20 patterns:\n\
         \x20   - ./flows.json\n\
         \x20   - ./settings.js\n"
    )
}

fn setup_sh() -> String {
    format!(
        "#!/bin/sh\n\
         # Entry points:\n\
         #   npm run setup   -- install dependencies and stage the runtime\n\
         #   {LOCAL_RUN_COMMAND}\n\
         set -e\n\
         npm install\n\
         echo \"Environment ready.\"\n\
         echo \"Run locally with: {LOCAL_RUN_COMMAND}\"\n"
    )
}

fn credentials_json(credentials: &[(String, String)]) -> String {
    let map: BTreeMap<&str, &str> = credentials
        .iter()
        .map(|(k, v)| (k.as_str(), v.as_str()))
        .collect();
    let mut out = String::from("{\n");
    let len = map.len();
    for (i, (key, value)) in map.into_iter().enumerate() {
        out.push_str("    ");
        out.push_str(&json_string(key));
        out.push_str(": ");
        out.push_str(&json_string(value));
        if i + 1 < len {
            out.push(',');
        }
        out.push('\n');
    }
    out.push_str("}\n");
    out
}

/// Assembles the deployment scaffold: flows file, runtime settings,
/// package manifest, serverless descriptor (unless `local_only`), setup
/// script, and the credentials overlay when secret values are present.
pub fn build_package(doc: &FlowDocument, options: &BuildOptions) -> DeploymentPackage {
    let mut files = vec![
        PackageFile {
            rel_path: "flows.json".to_string(),
            contents: serialize_flows(doc),
        },
        PackageFile {
            rel_path: "settings.js".to_string(),
            contents: settings_js().into_bytes(),
        },
        PackageFile {
            rel_path: "package.json".to_string(),
            contents: package_json(&options.app_name).into_bytes(),
        },
    ];
    if !options.local_only {
        files.push(PackageFile {
            rel_path: "serverless.yml".to_string(),
            contents: serverless_yml(&options.app_name).into_bytes(),
        });
    }
    files.push(PackageFile {
        rel_path: "setup.sh".to_string(),
        contents: setup_sh().into_bytes(),
    });
    if !options.credentials.is_empty() {
        files.push(PackageFile {
            rel_path: "credentials.json".to_string(),
            contents: credentials_json(&options.credentials).into_bytes(),
        });
    }
    DeploymentPackage { files }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WrittenFile {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WriteManifest {
    pub entries: Vec<WrittenFile>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Writes every package file under `path` and returns relative paths plus
/// content digests.
pub fn write_package(pkg: &DeploymentPackage, path: &Path) -> Result<WriteManifest, EmitError> {
    let mut manifest = WriteManifest::default();
    for file in &pkg.files {
        let target = path.join(&file.rel_path);
        if let Some(parent) = target.parent() {
            fs::create_dir_all(parent)
                .map_err(|e| EmitError::IoFailure(format!("{}: {e}", parent.display())))?;
        }
        let mut handle = fs::File::create(&target)
            .map_err(|e| EmitError::IoFailure(format!("{}: {e}", target.display())))?;
        handle
            .write_all(&file.contents)
            .map_err(|e| EmitError::IoFailure(format!("{}: {e}", target.display())))?;
        #[cfg(unix)]
        if file.rel_path.ends_with(".sh") {
            use std::os::unix::fs::PermissionsExt;
            let _ = fs::set_permissions(&target, fs::Permissions::from_mode(0o755));
        }
        manifest.entries.push(WrittenFile {
            path: file.rel_path.clone(),
            sha256: sha256_hex(&file.contents),
        });
    }
    Ok(manifest)
}
