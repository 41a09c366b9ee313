//! XMI ingestion: turns a use-case diagram exported by a UML tool into a
//! normalized in-memory model.
//!
//! The accepted dialect is the subset documented in `docs/xmi-subset.md`:
//! XMI 2.x with UML-namespace `packagedElement`s, nested `include`/`extend`
//! elements, `ownedEnd`-based associations, and stereotype applications as
//! top-level elements carrying a `base_UseCase` attribute. Everything else
//! is skipped silently. Element document order is preserved in all lists.

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use thiserror::Error;

use crate::profile::ProfileRegistry;

// ---------------------------------------------------------------------------
// Model types
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Actor {
    pub id: String,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UseCase {
    pub id: String,
    pub name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RelationshipKind {
    Association,
    Include,
    Extend,
}

/// For `Include` the source is the including use case; for `Extend` the
/// source is the extending use case and the target the extended one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Relationship {
    pub id: String,
    pub kind: RelationshipKind,
    pub source_id: String,
    pub target_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StereotypeApplication {
    pub stereotype_name: String,
    pub base_id: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct UmlModel {
    pub actors: Vec<Actor>,
    pub use_cases: Vec<UseCase>,
    pub relationships: Vec<Relationship>,
    pub applications: Vec<StereotypeApplication>,
    pub source_tool: Option<String>,
}

impl UmlModel {
    pub fn use_case(&self, id: &str) -> Option<&UseCase> {
        self.use_cases.iter().find(|uc| uc.id == id)
    }

    pub fn actor(&self, id: &str) -> Option<&Actor> {
        self.actors.iter().find(|a| a.id == id)
    }

    fn is_use_case(&self, id: &str) -> bool {
        self.use_cases.iter().any(|uc| uc.id == id)
    }

    fn is_actor(&self, id: &str) -> bool {
        self.actors.iter().any(|a| a.id == id)
    }
}

#[derive(Debug, Error)]
pub enum XmiError {
    #[error("input is not well-formed XML: {0}")]
    MalformedXml(String),
    #[error("no recognizable XMI or UML model root")]
    NotXmi,
    #[error("`{context}` references missing id `{id}`")]
    DanglingReference { context: String, id: String },
    #[error("duplicate element id `{0}`")]
    DuplicateId(String),
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

/// What the walker is currently inside of. One entry per open element.
enum Scope {
    XmiRoot,
    Model,
    UseCase(String),
    Association { id: String, end_types: Vec<String> },
    Skip,
}

struct Walker {
    model: UmlModel,
    ids: HashSet<String>,
    stack: Vec<Scope>,
    saw_root: bool,
}

impl Walker {
    fn new() -> Self {
        Walker {
            model: UmlModel::default(),
            ids: HashSet::new(),
            stack: Vec::new(),
            saw_root: false,
        }
    }

    fn record_id(&mut self, id: &str) -> Result<(), XmiError> {
        if !self.ids.insert(id.to_string()) {
            return Err(XmiError::DuplicateId(id.to_string()));
        }
        Ok(())
    }

    fn open(&mut self, element: &ParsedElement) -> Result<Scope, XmiError> {
        match self.stack.last() {
            None => {
                self.saw_root = true;
                match element.local.as_str() {
                    "XMI" => Ok(Scope::XmiRoot),
                    "Model" => Ok(Scope::Model),
                    _ => Err(XmiError::NotXmi),
                }
            }
            Some(Scope::XmiRoot) => {
                if element.local == "Model" {
                    return Ok(Scope::Model);
                }
                if element.local == "Documentation" {
                    if let Some(exporter) = element.attr("exporter") {
                        self.model.source_tool = Some(exporter.to_string());
                    }
                    return Ok(Scope::Skip);
                }
                // Top-level elements carrying a base reference are
                // stereotype applications named after their local name.
                // base_UseCase is the Papyrus convention; other base_*
                // targets parse and then fail validation.
                let base = element.attr("base_UseCase").or_else(|| {
                    element
                        .attrs
                        .iter()
                        .find(|(k, _)| k.starts_with("base_"))
                        .map(|(_, v)| v.as_str())
                });
                if let Some(base) = base {
                    let name = element
                        .local
                        .strip_prefix("MoT.Profile::")
                        .unwrap_or(&element.local);
                    self.model.applications.push(StereotypeApplication {
                        stereotype_name: name.to_string(),
                        base_id: base.to_string(),
                    });
                }
                Ok(Scope::Skip)
            }
            Some(Scope::Model) => {
                if element.local != "packagedElement" {
                    return Ok(Scope::Skip);
                }
                let xmi_type = element.attr("type").unwrap_or("");
                let metaclass = xmi_type.rsplit(':').next().unwrap_or("");
                match metaclass {
                    "Actor" => {
                        let id = element.require_id()?;
                        self.record_id(&id)?;
                        self.model.actors.push(Actor {
                            id,
                            name: element.attr("name").unwrap_or("").trim().to_string(),
                        });
                        Ok(Scope::Skip)
                    }
                    "UseCase" => {
                        let id = element.require_id()?;
                        self.record_id(&id)?;
                        self.model.use_cases.push(UseCase {
                            id: id.clone(),
                            name: element.attr("name").unwrap_or("").trim().to_string(),
                        });
                        Ok(Scope::UseCase(id))
                    }
                    "Association" => {
                        let id = element.require_id()?;
                        self.record_id(&id)?;
                        Ok(Scope::Association {
                            id,
                            end_types: Vec::new(),
                        })
                    }
                    _ => Ok(Scope::Skip),
                }
            }
            Some(Scope::UseCase(owner)) => {
                let owner = owner.clone();
                match element.local.as_str() {
                    "include" => {
                        let id = element.require_id()?;
                        self.record_id(&id)?;
                        let target = element.attr("addition").ok_or_else(|| {
                            XmiError::DanglingReference {
                                context: format!("include `{id}`"),
                                id: "<missing addition>".to_string(),
                            }
                        })?;
                        self.model.relationships.push(Relationship {
                            id,
                            kind: RelationshipKind::Include,
                            source_id: owner,
                            target_id: target.to_string(),
                        });
                        Ok(Scope::Skip)
                    }
                    "extend" => {
                        let id = element.require_id()?;
                        self.record_id(&id)?;
                        let target = element.attr("extendedCase").ok_or_else(|| {
                            XmiError::DanglingReference {
                                context: format!("extend `{id}`"),
                                id: "<missing extendedCase>".to_string(),
                            }
                        })?;
                        self.model.relationships.push(Relationship {
                            id,
                            kind: RelationshipKind::Extend,
                            source_id: owner,
                            target_id: target.to_string(),
                        });
                        Ok(Scope::Skip)
                    }
                    _ => Ok(Scope::Skip),
                }
            }
            Some(Scope::Association { .. }) => {
                if element.local == "ownedEnd" {
                    if let Some(end_type) = element.attr("type") {
                        if let Some(Scope::Association { end_types, .. }) = self.stack.last_mut() {
                            end_types.push(end_type.to_string());
                        }
                    }
                }
                Ok(Scope::Skip)
            }
            Some(Scope::Skip) => Ok(Scope::Skip),
        }
    }

    fn close(&mut self, scope: Scope) {
        // Associations with other end counts fall outside the supported
        // subset and are skipped silently.
        if let Scope::Association { id, end_types } = scope {
            if end_types.len() == 2 {
                self.model.relationships.push(Relationship {
                    id,
                    kind: RelationshipKind::Association,
                    source_id: end_types[0].clone(),
                    target_id: end_types[1].clone(),
                });
            }
        }
    }

    fn finish(self) -> Result<UmlModel, XmiError> {
        if !self.saw_root {
            return Err(XmiError::MalformedXml("empty document".to_string()));
        }
        let model = self.model;
        for rel in &model.relationships {
            for endpoint in [&rel.source_id, &rel.target_id] {
                if !model.is_use_case(endpoint) && !model.is_actor(endpoint) {
                    return Err(XmiError::DanglingReference {
                        context: format!("relationship `{}`", rel.id),
                        id: endpoint.clone(),
                    });
                }
            }
        }
        for app in &model.applications {
            if !model.is_use_case(&app.base_id) && !model.is_actor(&app.base_id) {
                return Err(XmiError::DanglingReference {
                    context: format!("stereotype application `{}`", app.stereotype_name),
                    id: app.base_id.clone(),
                });
            }
        }
        Ok(model)
    }
}

/// Element name and attributes decoded into owned strings. Attribute keys
/// are matched on their local part, so `xmi:id` and `id` are equivalent.
struct ParsedElement {
    local: String,
    attrs: Vec<(String, String)>,
}

impl ParsedElement {
    fn from_start(start: &BytesStart<'_>) -> Result<Self, XmiError> {
        let local = String::from_utf8_lossy(start.name().local_name().as_ref()).into_owned();
        let mut attrs = Vec::new();
        for attr in start.attributes() {
            let attr = attr.map_err(|e| XmiError::MalformedXml(e.to_string()))?;
            let key = String::from_utf8_lossy(attr.key.local_name().as_ref()).into_owned();
            let value = attr
                .unescape_value()
                .map_err(|e| XmiError::MalformedXml(e.to_string()))?
                .into_owned();
            attrs.push((key, value));
        }
        Ok(ParsedElement { local, attrs })
    }

    fn attr(&self, local_key: &str) -> Option<&str> {
        self.attrs
            .iter()
            .find(|(k, _)| k == local_key)
            .map(|(_, v)| v.as_str())
    }

    fn require_id(&self) -> Result<String, XmiError> {
        self.attr("id")
            .map(str::to_string)
            .ok_or_else(|| XmiError::MalformedXml(format!("<{}> has no xmi:id", self.local)))
    }
}

/// Parses an XMI document into a [`UmlModel`]. Deterministic: identical
/// bytes yield structurally equal models.
pub fn parse_xmi(document: &[u8]) -> Result<UmlModel, XmiError> {
    let mut reader = Reader::from_reader(document);
    reader.trim_text(true);
    let mut walker = Walker::new();
    let mut buf = Vec::new();
    loop {
        match reader.read_event_into(&mut buf) {
            Ok(Event::Start(start)) => {
                let element = ParsedElement::from_start(&start)?;
                let scope = walker.open(&element)?;
                walker.stack.push(scope);
            }
            Ok(Event::Empty(start)) => {
                let element = ParsedElement::from_start(&start)?;
                let scope = walker.open(&element)?;
                walker.close(scope);
            }
            Ok(Event::End(_)) => {
                if let Some(scope) = walker.stack.pop() {
                    walker.close(scope);
                }
            }
            Ok(Event::Eof) => break,
            Ok(_) => {}
            Err(e) => return Err(XmiError::MalformedXml(e.to_string())),
        }
        buf.clear();
    }
    walker.finish()
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValidationMode {
    Strict,
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationIssue {
    pub code: String,
    pub subject: String,
    pub message: String,
}

impl ValidationIssue {
    fn new(code: &str, subject: impl Into<String>, message: impl Into<String>) -> Self {
        ValidationIssue {
            code: code.to_string(),
            subject: subject.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub errors: Vec<ValidationIssue>,
    pub warnings: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.errors.is_empty()
    }
}

/// Checks model invariants and stereotype resolution. Problems are report
/// entries, never failures; `report.ok()` is true iff there are no errors.
pub fn validate_model(
    model: &UmlModel,
    registry: &ProfileRegistry,
    mode: ValidationMode,
) -> ValidationReport {
    let mut report = ValidationReport::default();

    let mut seen = HashSet::new();
    let element_ids = model
        .actors
        .iter()
        .map(|a| &a.id)
        .chain(model.use_cases.iter().map(|uc| &uc.id))
        .chain(model.relationships.iter().map(|r| &r.id));
    for id in element_ids {
        if !seen.insert(id.clone()) {
            report
                .errors
                .push(ValidationIssue::new("duplicate-id", id, "element id is not unique"));
        }
    }

    for actor in &model.actors {
        if actor.name.trim().is_empty() {
            report.errors.push(ValidationIssue::new(
                "empty-name",
                &actor.id,
                "actor has an empty name",
            ));
        }
    }
    for uc in &model.use_cases {
        if uc.name.trim().is_empty() {
            report.errors.push(ValidationIssue::new(
                "empty-name",
                &uc.id,
                "use case has an empty name",
            ));
        }
    }

    for rel in &model.relationships {
        let resolves = |id: &str| model.is_use_case(id) || model.is_actor(id);
        if !resolves(&rel.source_id) || !resolves(&rel.target_id) {
            report.errors.push(ValidationIssue::new(
                "dangling-reference",
                &rel.id,
                "relationship endpoint does not resolve",
            ));
            continue;
        }
        match rel.kind {
            RelationshipKind::Include | RelationshipKind::Extend => {
                if !model.is_use_case(&rel.source_id) || !model.is_use_case(&rel.target_id) {
                    report.errors.push(ValidationIssue::new(
                        "bad-endpoints",
                        &rel.id,
                        "include/extend must connect two use cases",
                    ));
                }
            }
            RelationshipKind::Association => {
                let actor_to_use_case = (model.is_actor(&rel.source_id)
                    && model.is_use_case(&rel.target_id))
                    || (model.is_use_case(&rel.source_id) && model.is_actor(&rel.target_id));
                if !actor_to_use_case {
                    report.errors.push(ValidationIssue::new(
                        "bad-endpoints",
                        &rel.id,
                        "association must connect an actor and a use case",
                    ));
                }
            }
        }
    }

    for app in &model.applications {
        if !model.is_use_case(&app.base_id) {
            report.errors.push(ValidationIssue::new(
                "stereotype-target",
                &app.stereotype_name,
                format!("stereotype applied to non-use-case `{}`", app.base_id),
            ));
        }
        if !registry.contains(&app.stereotype_name) {
            let issue = ValidationIssue::new(
                "unknown-stereotype",
                &app.stereotype_name,
                format!("`{}` is not in the active profile", app.stereotype_name),
            );
            match mode {
                ValidationMode::Strict => report.errors.push(issue),
                ValidationMode::Lenient => report.warnings.push(issue),
            }
        }
    }

    for uc in &model.use_cases {
        let annotated = model.applications.iter().filter(|a| a.base_id == uc.id).count();
        let related = model
            .relationships
            .iter()
            .any(|r| r.source_id == uc.id || r.target_id == uc.id);
        if annotated == 0 && !related {
            report.warnings.push(ValidationIssue::new(
                "orphan-use-case",
                &uc.id,
                "use case has no stereotype and no relationship",
            ));
        }
        if annotated > 1 {
            report.warnings.push(ValidationIssue::new(
                "multiple-stereotypes",
                &uc.id,
                format!("use case carries {annotated} stereotype applications"),
            ));
        }
    }

    report
}
