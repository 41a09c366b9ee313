//! Component configuration: manifest application, required-property
//! tracking, and service provisioning through a pluggable provider.
//!
//! Manifests are declarative JSON files; interactive front-ends produce the
//! same manifest shape and feed it through the same path. Only a mock
//! provider ships; its connection strings are a pure function of the
//! request so configured graphs stay reproducible.

use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::transform::{ComponentGraph, Comparator, Sensitivity, ValueType};

// ---------------------------------------------------------------------------
// Manifest types
// ---------------------------------------------------------------------------

/// Declarative configuration input. `entries` keys are component ids, or
/// the reserved `extend:<source>-><target>` form (use-case ids of the
/// extend relationship) addressing a guard.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfigurationManifest {
    #[serde(default)]
    pub entries: IndexMap<String, IndexMap<String, Value>>,
    #[serde(default)]
    pub provisions: Vec<ProvisionRequest>,
}

impl ConfigurationManifest {
    pub fn parse(json: &str) -> Result<Self, ConfigureError> {
        serde_json::from_str(json).map_err(|e| ConfigureError::ManifestSyntax(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ServiceKind {
    DocumentDb,
    MqttBroker,
    ObjectStore,
}

impl fmt::Display for ServiceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ServiceKind::DocumentDb => "documentdb",
            ServiceKind::MqttBroker => "mqttbroker",
            ServiceKind::ObjectStore => "objectstore",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRef {
    pub component_id: String,
    pub property: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvisionRequest {
    pub provider_id: String,
    pub service_kind: ServiceKind,
    pub instance_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bind_to: Option<SlotRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceInstance {
    pub provider_id: String,
    pub service_kind: ServiceKind,
    pub instance_name: String,
    pub connection: String,
}

#[derive(Debug, Error)]
pub enum ConfigureError {
    #[error("manifest is not valid JSON: {0}")]
    ManifestSyntax(String),
    #[error("unknown component `{0}`")]
    UnknownComponent(String),
    #[error("component `{component}` has no property `{property}`")]
    UnknownProperty { component: String, property: String },
    #[error("`{component}.{property}` expects {expected}, got {got}")]
    TypeMismatch {
        component: String,
        property: String,
        expected: String,
        got: String,
    },
    #[error("provider `{requested}` is not available (have `{actual}`)")]
    ProviderUnavailable { requested: String, actual: String },
    #[error("instance `{0}` was already provisioned in this session")]
    DuplicateInstance(String),
    #[error("instance name must be non-empty")]
    EmptyInstanceName,
}

// ---------------------------------------------------------------------------
// Providers
// ---------------------------------------------------------------------------

/// Backing-service provisioner. Real cloud adapters implement this; the
/// artifact ships only [`MockProvider`].
pub trait Provider {
    fn id(&self) -> &str;
    fn provision(&mut self, request: &ProvisionRequest)
        -> Result<ServiceInstance, ConfigureError>;
    fn teardown(&mut self, instance_name: &str) -> Result<(), ConfigureError>;
    fn list(&self) -> Vec<ServiceInstance>;
}

/// Deterministic in-memory provider: connection strings are a pure
/// function of the request fields.
#[derive(Debug, Default)]
pub struct MockProvider {
    instances: IndexMap<String, ServiceInstance>,
}

impl MockProvider {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Provider for MockProvider {
    fn id(&self) -> &str {
        "mock"
    }

    fn provision(
        &mut self,
        request: &ProvisionRequest,
    ) -> Result<ServiceInstance, ConfigureError> {
        if request.instance_name.is_empty() {
            return Err(ConfigureError::EmptyInstanceName);
        }
        if self.instances.contains_key(&request.instance_name) {
            return Err(ConfigureError::DuplicateInstance(
                request.instance_name.clone(),
            ));
        }
        let instance = ServiceInstance {
            provider_id: self.id().to_string(),
            service_kind: request.service_kind,
            instance_name: request.instance_name.clone(),
            connection: format!(
                "mock://{}/{}/{}",
                self.id(),
                request.service_kind,
                request.instance_name
            ),
        };
        self.instances
            .insert(request.instance_name.clone(), instance.clone());
        Ok(instance)
    }

    fn teardown(&mut self, instance_name: &str) -> Result<(), ConfigureError> {
        self.instances
            .shift_remove(instance_name)
            .map(|_| ())
            .ok_or_else(|| ConfigureError::DuplicateInstance(instance_name.to_string()))
    }

    fn list(&self) -> Vec<ServiceInstance> {
        self.instances.values().cloned().collect()
    }
}

// ---------------------------------------------------------------------------
// Pending properties and readiness
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingProperty {
    pub component_id: String,
    pub property: String,
    pub value_type: ValueType,
    pub sensitivity: Sensitivity,
}

/// Every unfilled required slot, in graph order then property order.
/// A slot with a default is not pending.
pub fn required_properties(graph: &ComponentGraph) -> Vec<PendingProperty> {
    let mut pending = Vec::new();
    for component in &graph.components {
        for slot in &component.slots {
            if slot.spec.required && slot.value.is_none() && slot.spec.default.is_none() {
                pending.push(PendingProperty {
                    component_id: component.id.clone(),
                    property: slot.spec.name.clone(),
                    value_type: slot.spec.value_type,
                    sensitivity: slot.spec.sensitivity,
                });
            }
        }
    }
    pending
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadinessReport {
    pub ready: bool,
    pub pending_required: Vec<SlotRef>,
    pub deferred_sensitive: Vec<SlotRef>,
}

/// Ready iff no plain required slot is unfilled. Deferred-sensitive slots
/// never block readiness; they surface again if a simulation exercises the
/// sink that needs them.
pub fn readiness(graph: &ComponentGraph) -> ReadinessReport {
    let mut pending_required = Vec::new();
    let mut deferred_sensitive = Vec::new();
    for item in required_properties(graph) {
        let slot_ref = SlotRef {
            component_id: item.component_id,
            property: item.property,
        };
        match item.sensitivity {
            Sensitivity::Plain => pending_required.push(slot_ref),
            Sensitivity::DeferredSensitive => deferred_sensitive.push(slot_ref),
        }
    }
    ReadinessReport {
        ready: pending_required.is_empty(),
        pending_required,
        deferred_sensitive,
    }
}

// ---------------------------------------------------------------------------
// Manifest application
// ---------------------------------------------------------------------------

fn type_name(value: &Value) -> &'static str {
    match value {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "text",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

fn check_type(
    component: &str,
    property: &str,
    value_type: ValueType,
    value: &Value,
) -> Result<(), ConfigureError> {
    let ok = match value_type {
        ValueType::Text | ValueType::Secret | ValueType::ServiceRef => value.is_string(),
        ValueType::Integer => value.as_i64().is_some() || value.as_u64().is_some(),
        ValueType::Boolean => value.is_boolean(),
    };
    if ok {
        Ok(())
    } else {
        Err(ConfigureError::TypeMismatch {
            component: component.to_string(),
            property: property.to_string(),
            expected: format!("{value_type:?}").to_lowercase(),
            got: type_name(value).to_string(),
        })
    }
}

const EXTEND_KEY_PREFIX: &str = "extend:";

/// Applies manifest entries to a copy of the graph. The input graph is
/// never mutated; applying the same manifest twice equals applying it once.
pub fn apply_manifest(
    graph: &ComponentGraph,
    manifest: &ConfigurationManifest,
) -> Result<ComponentGraph, ConfigureError> {
    let mut updated = graph.clone();
    for (key, properties) in &manifest.entries {
        if let Some(pair) = key.strip_prefix(EXTEND_KEY_PREFIX) {
            apply_guard_entry(&mut updated, key, pair, properties)?;
        } else {
            apply_component_entry(&mut updated, key, properties)?;
        }
    }
    Ok(updated)
}

fn apply_component_entry(
    graph: &mut ComponentGraph,
    component_id: &str,
    properties: &IndexMap<String, Value>,
) -> Result<(), ConfigureError> {
    // Validate against the immutable view first so errors leave no
    // partial writes behind.
    {
        let component = graph
            .component(component_id)
            .ok_or_else(|| ConfigureError::UnknownComponent(component_id.to_string()))?;
        for (name, value) in properties {
            let slot = component.slot(name).ok_or_else(|| {
                ConfigureError::UnknownProperty {
                    component: component_id.to_string(),
                    property: name.clone(),
                }
            })?;
            check_type(component_id, name, slot.spec.value_type, value)?;
        }
    }
    let component = graph.component_mut(component_id).expect("checked above");
    for (name, value) in properties {
        let slot = component
            .slots
            .iter_mut()
            .find(|s| s.spec.name == *name)
            .expect("checked above");
        slot.value = Some(value.clone());
    }
    Ok(())
}

/// Guard entries accept `property`, `comparator`, and `threshold`.
fn apply_guard_entry(
    graph: &mut ComponentGraph,
    key: &str,
    pair: &str,
    properties: &IndexMap<String, Value>,
) -> Result<(), ConfigureError> {
    let (source_uc, target_uc) = pair
        .split_once("->")
        .ok_or_else(|| ConfigureError::UnknownComponent(key.to_string()))?;

    let component_ids = |uc: &str| -> Vec<String> {
        graph
            .groups
            .iter()
            .find(|g| g.use_case_id == uc)
            .map(|g| g.components.clone())
            .unwrap_or_default()
    };
    // The guarded edge runs from the extended (target) group into the
    // extending (source) group.
    let extending = component_ids(source_uc);
    let extended = component_ids(target_uc);

    let mut touched = false;
    for edge in &mut graph.edges {
        let matches = edge.guard.is_some()
            && extended.contains(&edge.from)
            && extending.contains(&edge.to);
        if !matches {
            continue;
        }
        touched = true;
        let guard = edge.guard.as_mut().expect("filtered to guarded edges");
        for (name, value) in properties {
            match name.as_str() {
                "property" => match value.as_str() {
                    Some(s) => guard.property_name = s.to_string(),
                    None => {
                        return Err(ConfigureError::TypeMismatch {
                            component: key.to_string(),
                            property: name.clone(),
                            expected: "text".to_string(),
                            got: type_name(value).to_string(),
                        })
                    }
                },
                "comparator" => {
                    let parsed = value.as_str().and_then(Comparator::parse);
                    match parsed {
                        Some(c) => guard.comparator = c,
                        None => {
                            return Err(ConfigureError::TypeMismatch {
                                component: key.to_string(),
                                property: name.clone(),
                                expected: "one of gt|ge|lt|le|eq|ne".to_string(),
                                got: value.to_string(),
                            })
                        }
                    }
                }
                "threshold" => {
                    if !(value.is_number() || value.is_string()) {
                        return Err(ConfigureError::TypeMismatch {
                            component: key.to_string(),
                            property: name.clone(),
                            expected: "number or text".to_string(),
                            got: type_name(value).to_string(),
                        });
                    }
                    guard.threshold = Some(value.clone());
                }
                other => {
                    return Err(ConfigureError::UnknownProperty {
                        component: key.to_string(),
                        property: other.to_string(),
                    })
                }
            }
        }
    }
    if !touched {
        return Err(ConfigureError::UnknownComponent(key.to_string()));
    }
    Ok(())
}

/// Provisions one service. When `bind_to` names a ServiceRef slot, the
/// returned graph holds the connection string in that slot; otherwise the
/// graph is returned unchanged.
pub fn provision(
    graph: &ComponentGraph,
    request: &ProvisionRequest,
    provider: &mut dyn Provider,
) -> Result<(ComponentGraph, ServiceInstance), ConfigureError> {
    if request.provider_id != provider.id() {
        return Err(ConfigureError::ProviderUnavailable {
            requested: request.provider_id.clone(),
            actual: provider.id().to_string(),
        });
    }
    let instance = provider.provision(request)?;
    let mut updated = graph.clone();
    if let Some(slot_ref) = &request.bind_to {
        let component = updated
            .component(&slot_ref.component_id)
            .ok_or_else(|| ConfigureError::UnknownComponent(slot_ref.component_id.clone()))?;
        let slot = component.slot(&slot_ref.property).ok_or_else(|| {
            ConfigureError::UnknownProperty {
                component: slot_ref.component_id.clone(),
                property: slot_ref.property.clone(),
            }
        })?;
        if slot.spec.value_type != ValueType::ServiceRef {
            return Err(ConfigureError::TypeMismatch {
                component: slot_ref.component_id.clone(),
                property: slot_ref.property.clone(),
                expected: "service-ref".to_string(),
                got: format!("{:?}", slot.spec.value_type).to_lowercase(),
            });
        }
        let component = updated
            .component_mut(&slot_ref.component_id)
            .expect("checked above");
        let slot = component
            .slots
            .iter_mut()
            .find(|s| s.spec.name == slot_ref.property)
            .expect("checked above");
        slot.value = Some(Value::String(instance.connection.clone()));
    }
    Ok((updated, instance))
}

/// Full configuration pass: provisions first (binding connections), then
/// manifest entries (explicit entries win over bound values).
pub fn configure_graph(
    graph: &ComponentGraph,
    manifest: &ConfigurationManifest,
    provider: &mut dyn Provider,
) -> Result<(ComponentGraph, Vec<ServiceInstance>), ConfigureError> {
    let mut current = graph.clone();
    let mut instances = Vec::new();
    for request in &manifest.provisions {
        let (next, instance) = provision(&current, request, provider)?;
        current = next;
        instances.push(instance);
    }
    let configured = apply_manifest(&current, manifest)?;
    Ok((configured, instances))
}

/// Secret slot values supplied through a manifest, keyed
/// `<component>.<property>`. These never enter the flows file; build
/// copies them into the credentials overlay.
pub fn collected_secrets(graph: &ComponentGraph) -> Vec<(String, String)> {
    let mut secrets = Vec::new();
    for component in &graph.components {
        for slot in &component.slots {
            if slot.spec.sensitivity == Sensitivity::DeferredSensitive {
                if let Some(Value::String(value)) = &slot.value {
                    secrets.push((
                        format!("{}.{}", component.id, slot.spec.name),
                        value.clone(),
                    ));
                }
            }
        }
    }
    secrets
}
