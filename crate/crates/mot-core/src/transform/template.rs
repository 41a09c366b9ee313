//! The JSON template repository and its recursive expansion.
//!
//! Each stereotype maps to one template file; composites reference child
//! templates, leaves carry a node kind and property specs. Expansion walks
//! composites depth-first until only leaves remain, wiring children either
//! as an ordered chain or through an explicit child-edge list.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

// ---------------------------------------------------------------------------
// Property specs
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValueType {
    Text,
    Integer,
    Boolean,
    Secret,
    ServiceRef,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sensitivity {
    Plain,
    DeferredSensitive,
}

/// One configurable slot on a leaf component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertySpec {
    pub name: String,
    #[serde(rename = "type")]
    pub value_type: ValueType,
    #[serde(default)]
    pub required: bool,
    pub sensitivity: Sensitivity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<Value>,
}

// ---------------------------------------------------------------------------
// Templates
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemplateKind {
    Composite,
    Leaf,
}

/// How a composite wires its children together.
#[derive(Debug, Clone, PartialEq)]
pub enum Wiring {
    /// Children form an ordered chain in child-list order.
    Chain,
    /// Explicit (from child id, to child id) edges.
    Edges(Vec<(String, String)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentTemplate {
    pub id: String,
    pub kind: TemplateKind,
    pub children: Vec<String>,
    pub wiring: Wiring,
    pub node_kind: Option<String>,
    pub properties: Vec<PropertySpec>,
}

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("template `{id}`: {message}")]
    TemplateSyntax { id: String, message: String },
    #[error("template `{parent}` references missing child `{child}`")]
    UnresolvedChild { parent: String, child: String },
    #[error("template `{0}` recurs on its own expansion path")]
    CyclicTemplate(String),
    #[error("template id `{0}` not found in repository")]
    UnknownTemplate(String),
    #[error("cannot read template repository: {0}")]
    Io(String),
}

// Raw shapes mirroring the on-disk JSON schema.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTemplate {
    id: String,
    kind: String,
    #[serde(default)]
    children: Vec<String>,
    #[serde(default)]
    chain: Option<bool>,
    #[serde(default)]
    edges: Vec<(String, String)>,
    #[serde(default)]
    node_kind: Option<String>,
    #[serde(default)]
    properties: Vec<RawProperty>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProperty {
    name: String,
    #[serde(rename = "type")]
    value_type: ValueType,
    #[serde(default)]
    required: bool,
    #[serde(default)]
    sensitivity: Option<Sensitivity>,
    #[serde(default)]
    default: Option<Value>,
}

fn syntax(id: &str, message: impl Into<String>) -> TemplateError {
    TemplateError::TemplateSyntax {
        id: id.to_string(),
        message: message.into(),
    }
}

impl ComponentTemplate {
    fn from_raw(raw: RawTemplate) -> Result<Self, TemplateError> {
        let id = raw.id.clone();
        if id.trim().is_empty() {
            return Err(syntax("<unnamed>", "template id must be non-empty"));
        }
        match raw.kind.as_str() {
            "leaf" => {
                if !raw.children.is_empty() {
                    return Err(syntax(&id, "leaf templates cannot have children"));
                }
                if raw.chain.is_some() || !raw.edges.is_empty() {
                    return Err(syntax(&id, "leaf templates carry no wiring"));
                }
                let node_kind = raw
                    .node_kind
                    .ok_or_else(|| syntax(&id, "leaf templates require node_kind"))?;
                let properties = raw
                    .properties
                    .into_iter()
                    .map(|p| convert_property(&id, p))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(ComponentTemplate {
                    id,
                    kind: TemplateKind::Leaf,
                    children: Vec::new(),
                    wiring: Wiring::Chain,
                    node_kind: Some(node_kind),
                    properties,
                })
            }
            "composite" => {
                if raw.children.is_empty() {
                    return Err(syntax(&id, "composite templates require >= 1 child"));
                }
                if !raw.properties.is_empty() {
                    return Err(syntax(&id, "composite templates carry no properties"));
                }
                if raw.node_kind.is_some() {
                    return Err(syntax(&id, "composite templates carry no node_kind"));
                }
                let wiring = match (raw.chain, raw.edges.is_empty()) {
                    (Some(true), true) | (None, true) => Wiring::Chain,
                    (None, false) | (Some(false), false) => {
                        // Explicit edges need unambiguous child names.
                        let mut sorted = raw.children.clone();
                        sorted.sort();
                        sorted.dedup();
                        if sorted.len() != raw.children.len() {
                            return Err(syntax(
                                &id,
                                "explicit edges require distinct child ids",
                            ));
                        }
                        for (from, to) in &raw.edges {
                            if !raw.children.contains(from) || !raw.children.contains(to) {
                                return Err(syntax(
                                    &id,
                                    format!("edge `{from}`->`{to}` references a non-child"),
                                ));
                            }
                        }
                        Wiring::Edges(raw.edges)
                    }
                    (Some(true), false) => {
                        return Err(syntax(&id, "`chain` and `edges` are mutually exclusive"))
                    }
                    (Some(false), true) => {
                        return Err(syntax(&id, "`chain: false` requires an `edges` list"))
                    }
                };
                Ok(ComponentTemplate {
                    id,
                    kind: TemplateKind::Composite,
                    children: raw.children,
                    wiring,
                    node_kind: None,
                    properties: Vec::new(),
                })
            }
            other => Err(syntax(&id, format!("unknown kind `{other}`"))),
        }
    }
}

fn convert_property(template_id: &str, raw: RawProperty) -> Result<PropertySpec, TemplateError> {
    let sensitivity = match (raw.value_type, raw.sensitivity) {
        (ValueType::Secret, Some(Sensitivity::Plain)) => {
            return Err(syntax(
                template_id,
                format!("secret property `{}` cannot be plain", raw.name),
            ))
        }
        (ValueType::Secret, _) => Sensitivity::DeferredSensitive,
        (_, Some(s)) => s,
        (_, None) => Sensitivity::Plain,
    };
    Ok(PropertySpec {
        name: raw.name,
        value_type: raw.value_type,
        required: raw.required,
        sensitivity,
        default: raw.default,
    })
}

// ---------------------------------------------------------------------------
// Repository
// ---------------------------------------------------------------------------

/// Immutable id -> template map, validated on load.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TemplateRepo {
    templates: BTreeMap<String, ComponentTemplate>,
}

/// Built-in template sources, bundled so the pipeline works without a
/// template directory. The files under `templates/` are the same data.
const BUILTIN_TEMPLATES: &[(&str, &str)] = &[
    ("dashboard-chart", include_str!("../../../../templates/dashboard-chart.json")),
    ("dashboard-gauge", include_str!("../../../../templates/dashboard-gauge.json")),
    ("database-save", include_str!("../../../../templates/database-save.json")),
    ("facial-expression", include_str!("../../../../templates/facial-expression.json")),
    ("json-parse", include_str!("../../../../templates/json-parse.json")),
    ("json-serialize", include_str!("../../../../templates/json-serialize.json")),
    ("mental-command", include_str!("../../../../templates/mental-command.json")),
    ("mqtt-in", include_str!("../../../../templates/mqtt-in.json")),
    ("mqtt-out", include_str!("../../../../templates/mqtt-out.json")),
    ("send-email", include_str!("../../../../templates/send-email.json")),
    ("sensor-publish", include_str!("../../../../templates/sensor-publish.json")),
    ("sensor-subscribe", include_str!("../../../../templates/sensor-subscribe.json")),
    ("twitter-post", include_str!("../../../../templates/twitter-post.json")),
];

impl TemplateRepo {
    /// The bundled repository backing the nine built-in stereotypes.
    pub fn builtin() -> Self {
        let mut repo = TemplateRepo::default();
        for (id, source) in BUILTIN_TEMPLATES {
            repo.insert_source(id, source)
                .expect("bundled template is valid");
        }
        repo.check_children().expect("bundled children resolve");
        repo
    }

    fn insert_source(&mut self, expected_id: &str, source: &str) -> Result<(), TemplateError> {
        let raw: RawTemplate = serde_json::from_str(source)
            .map_err(|e| syntax(expected_id, format!("invalid JSON: {e}")))?;
        let template = ComponentTemplate::from_raw(raw)?;
        if template.id != expected_id {
            return Err(syntax(
                expected_id,
                format!("file name and template id `{}` disagree", template.id),
            ));
        }
        self.templates.insert(template.id.clone(), template);
        Ok(())
    }

    fn check_children(&self) -> Result<(), TemplateError> {
        for template in self.templates.values() {
            for child in &template.children {
                if !self.templates.contains_key(child) {
                    return Err(TemplateError::UnresolvedChild {
                        parent: template.id.clone(),
                        child: child.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&ComponentTemplate> {
        self.templates.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.templates.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }
}

/// Loads every `*.json` file in `repository_path` (filename = template id)
/// and validates the repository. An empty directory is a valid empty repo.
pub fn load_templates(repository_path: &Path) -> Result<TemplateRepo, TemplateError> {
    let mut repo = TemplateRepo::default();
    let entries = fs::read_dir(repository_path).map_err(|e| {
        TemplateError::Io(format!("{}: {e}", repository_path.display()))
    })?;
    let mut paths: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
        .collect();
    paths.sort();
    for path in paths {
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let source = fs::read_to_string(&path)
            .map_err(|e| TemplateError::Io(format!("{}: {e}", path.display())))?;
        repo.insert_source(&stem, &source)?;
    }
    repo.check_children()?;
    Ok(repo)
}

// ---------------------------------------------------------------------------
// Expansion
// ---------------------------------------------------------------------------

/// A leaf produced by expansion, not yet bound to a use case.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentPrototype {
    /// Slash-joined template ids from the root template to the leaf.
    pub template_path: String,
    pub node_kind: String,
    pub properties: Vec<PropertySpec>,
}

/// Expansion result: leaf prototypes in depth-first order plus internal
/// wiring as (from index, to index) pairs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Expansion {
    pub prototypes: Vec<ComponentPrototype>,
    pub internal_edges: Vec<(usize, usize)>,
    /// Prototype indices with no incoming internal edge.
    pub entries: Vec<usize>,
    /// Prototype indices with no outgoing internal edge.
    pub terminals: Vec<usize>,
}

/// Depth-first expansion of `template_id` into leaf prototypes.
pub fn expand(template_id: &str, repo: &TemplateRepo) -> Result<Expansion, TemplateError> {
    let mut path = Vec::new();
    expand_rec(template_id, repo, &mut path, template_id)
}

fn expand_rec(
    template_id: &str,
    repo: &TemplateRepo,
    path: &mut Vec<String>,
    path_prefix: &str,
) -> Result<Expansion, TemplateError> {
    if path.iter().any(|seen| seen == template_id) {
        return Err(TemplateError::CyclicTemplate(template_id.to_string()));
    }
    let template = repo
        .get(template_id)
        .ok_or_else(|| TemplateError::UnknownTemplate(template_id.to_string()))?;

    if template.kind == TemplateKind::Leaf {
        return Ok(Expansion {
            prototypes: vec![ComponentPrototype {
                template_path: path_prefix.to_string(),
                node_kind: template.node_kind.clone().expect("leaf has node_kind"),
                properties: template.properties.clone(),
            }],
            internal_edges: Vec::new(),
            entries: vec![0],
            terminals: vec![0],
        });
    }

    path.push(template_id.to_string());
    let mut merged = Expansion::default();
    // Index range of each child's prototypes within the merged expansion.
    let mut child_frames: Vec<(String, Vec<usize>, Vec<usize>)> = Vec::new();
    for child in &template.children {
        let child_prefix = format!("{path_prefix}/{child}");
        let sub = expand_rec(child, repo, path, &child_prefix)?;
        let offset = merged.prototypes.len();
        let entries: Vec<usize> = sub.entries.iter().map(|i| i + offset).collect();
        let terminals: Vec<usize> = sub.terminals.iter().map(|i| i + offset).collect();
        merged.prototypes.extend(sub.prototypes);
        merged
            .internal_edges
            .extend(sub.internal_edges.into_iter().map(|(a, b)| (a + offset, b + offset)));
        child_frames.push((child.clone(), entries, terminals));
    }
    path.pop();

    match &template.wiring {
        Wiring::Chain => {
            for window in child_frames.windows(2) {
                let (_, _, from_terminals) = &window[0];
                let (_, to_entries, _) = &window[1];
                for from in from_terminals {
                    for to in to_entries {
                        merged.internal_edges.push((*from, *to));
                    }
                }
            }
        }
        Wiring::Edges(edges) => {
            for (from_child, to_child) in edges {
                let from_frame = child_frames.iter().find(|(id, _, _)| id == from_child);
                let to_frame = child_frames.iter().find(|(id, _, _)| id == to_child);
                if let (Some((_, _, from_terminals)), Some((_, to_entries, _))) =
                    (from_frame, to_frame)
                {
                    for from in from_terminals {
                        for to in to_entries {
                            merged.internal_edges.push((*from, *to));
                        }
                    }
                }
            }
        }
    }

    let has_incoming: Vec<bool> = {
        let mut v = vec![false; merged.prototypes.len()];
        for (_, to) in &merged.internal_edges {
            v[*to] = true;
        }
        v
    };
    let has_outgoing: Vec<bool> = {
        let mut v = vec![false; merged.prototypes.len()];
        for (from, _) in &merged.internal_edges {
            v[*from] = true;
        }
        v
    };
    merged.entries = (0..merged.prototypes.len()).filter(|i| !has_incoming[*i]).collect();
    merged.terminals = (0..merged.prototypes.len()).filter(|i| !has_outgoing[*i]).collect();
    Ok(merged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    /// Independent oracle: counts leaves by recursively walking the raw
    /// JSON sources, without touching the expander or repo types.
    fn walk_leaf_count(id: &str, sources: &BTreeMap<String, Value>) -> usize {
        let doc = &sources[id];
        match doc["kind"].as_str().unwrap() {
            "leaf" => 1,
            _ => doc["children"]
                .as_array()
                .unwrap()
                .iter()
                .map(|c| walk_leaf_count(c.as_str().unwrap(), sources))
                .sum(),
        }
    }

    fn builtin_sources() -> BTreeMap<String, Value> {
        super::BUILTIN_TEMPLATES
            .iter()
            .map(|(id, src)| (id.to_string(), serde_json::from_str(src).unwrap()))
            .collect()
    }

    #[test]
    fn builtin_repo_contains_all_nine_stereotype_templates() {
        let repo = TemplateRepo::builtin();
        for id in [
            "sensor-subscribe",
            "sensor-publish",
            "database-save",
            "dashboard-gauge",
            "dashboard-chart",
            "send-email",
            "twitter-post",
            "facial-expression",
            "mental-command",
        ] {
            assert!(repo.contains(id), "missing builtin template `{id}`");
        }
    }

    #[test]
    fn sensor_subscribe_expands_to_chained_pair() {
        let repo = TemplateRepo::builtin();
        let expansion = expand("sensor-subscribe", &repo).unwrap();
        let kinds: Vec<&str> = expansion
            .prototypes
            .iter()
            .map(|p| p.node_kind.as_str())
            .collect();
        assert_eq!(kinds, ["mqtt-in", "json-parse"]);
        assert_eq!(expansion.internal_edges, [(0, 1)]);
        assert_eq!(expansion.entries, [0]);
        assert_eq!(expansion.terminals, [1]);
        assert_eq!(
            expansion.prototypes[0].template_path,
            "sensor-subscribe/mqtt-in"
        );
    }

    #[test]
    fn leaf_expands_to_single_prototype() {
        let repo = TemplateRepo::builtin();
        let expansion = expand("database-save", &repo).unwrap();
        assert_eq!(expansion.prototypes.len(), 1);
        assert!(expansion.internal_edges.is_empty());
        assert_eq!(expansion.prototypes[0].node_kind, "db-write");
        assert_eq!(expansion.prototypes[0].template_path, "database-save");
    }

    #[test]
    fn builtin_counts_match_independent_walk() {
        let repo = TemplateRepo::builtin();
        let sources = builtin_sources();
        for id in [
            "sensor-subscribe",
            "sensor-publish",
            "database-save",
            "dashboard-gauge",
            "dashboard-chart",
            "send-email",
            "twitter-post",
            "facial-expression",
            "mental-command",
        ] {
            let expanded = expand(id, &repo).unwrap().prototypes.len();
            let walked = walk_leaf_count(id, &sources);
            assert_eq!(expanded, walked, "count mismatch for `{id}`");
        }
    }

    #[test]
    fn empty_directory_is_a_valid_empty_repo() {
        let dir = tempfile::tempdir().unwrap();
        let repo = load_templates(dir.path()).unwrap();
        assert!(repo.is_empty());
    }

    #[test]
    fn unresolved_child_is_rejected_at_load() {
        let dir = tempfile::tempdir().unwrap();
        let mut f = std::fs::File::create(dir.path().join("broken.json")).unwrap();
        write!(
            f,
            r#"{{"id": "broken", "kind": "composite", "children": ["nope"], "chain": true}}"#
        )
        .unwrap();
        drop(f);
        assert!(matches!(
            load_templates(dir.path()),
            Err(TemplateError::UnresolvedChild { .. })
        ));
    }

    #[test]
    fn bad_json_is_a_syntax_error() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("bad.json"), "{not json").unwrap();
        assert!(matches!(
            load_templates(dir.path()),
            Err(TemplateError::TemplateSyntax { .. })
        ));
    }

    #[test]
    fn filename_and_id_must_agree() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("alpha.json"),
            r#"{"id": "beta", "kind": "leaf", "node_kind": "x"}"#,
        )
        .unwrap();
        assert!(matches!(
            load_templates(dir.path()),
            Err(TemplateError::TemplateSyntax { .. })
        ));
    }

    #[test]
    fn plain_secret_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("s.json"),
            r#"{"id": "s", "kind": "leaf", "node_kind": "x",
                "properties": [{"name": "p", "type": "secret", "sensitivity": "plain"}]}"#,
        )
        .unwrap();
        assert!(matches!(
            load_templates(dir.path()),
            Err(TemplateError::TemplateSyntax { .. })
        ));
    }

    #[test]
    fn cycles_are_detected_during_expansion() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("a.json"),
            r#"{"id": "a", "kind": "composite", "children": ["b"], "chain": true}"#,
        )
        .unwrap();
        std::fs::write(
            dir.path().join("b.json"),
            r#"{"id": "b", "kind": "composite", "children": ["a"], "chain": true}"#,
        )
        .unwrap();
        let repo = load_templates(dir.path()).unwrap();
        assert!(matches!(
            expand("a", &repo),
            Err(TemplateError::CyclicTemplate(_))
        ));
    }

    #[test]
    fn explicit_edges_wire_children() {
        let dir = tempfile::tempdir().unwrap();
        for id in ["x", "y", "z"] {
            std::fs::write(
                dir.path().join(format!("{id}.json")),
                format!(r#"{{"id": "{id}", "kind": "leaf", "node_kind": "{id}"}}"#),
            )
            .unwrap();
        }
        std::fs::write(
            dir.path().join("fan.json"),
            r#"{"id": "fan", "kind": "composite", "children": ["x", "y", "z"],
                "edges": [["x", "y"], ["x", "z"]]}"#,
        )
        .unwrap();
        let repo = load_templates(dir.path()).unwrap();
        let expansion = expand("fan", &repo).unwrap();
        assert_eq!(expansion.internal_edges, [(0, 1), (0, 2)]);
        assert_eq!(expansion.entries, [0]);
        assert_eq!(expansion.terminals, [1, 2]);
    }
}
