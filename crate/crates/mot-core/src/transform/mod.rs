//! Diagram transformation: expands stereotyped use cases into an abstract
//! component graph and wires the groups according to include/extend
//! semantics. Includes become unguarded edges ("mandatory sub-process");
//! extends become guarded edges whose threshold arrives at configuration.

pub mod template;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::profile::ProfileRegistry;
use crate::xmi::{RelationshipKind, UmlModel};

pub use template::{
    expand, load_templates, ComponentPrototype, ComponentTemplate, Expansion, PropertySpec,
    Sensitivity, TemplateError, TemplateRepo, ValueType,
};

// ---------------------------------------------------------------------------
// Graph types
// ---------------------------------------------------------------------------

/// A property slot: the spec plus the configured value, if any.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slot {
    pub spec: PropertySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<Value>,
}

impl Slot {
    /// Configured value, falling back to the spec default.
    pub fn effective(&self) -> Option<&Value> {
        self.value.as_ref().or(self.spec.default.as_ref())
    }
}

/// A platform-neutral application component. The id is a pure function of
/// (use case id, stereotype name, template path, ordinal).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbstractComponent {
    pub id: String,
    pub origin_use_case: String,
    pub origin_stereotype: String,
    pub node_kind: String,
    pub slots: Vec<Slot>,
}

impl AbstractComponent {
    pub fn slot(&self, name: &str) -> Option<&Slot> {
        self.slots.iter().find(|s| s.spec.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Comparator {
    Gt,
    Ge,
    Lt,
    Le,
    Eq,
    Ne,
}

impl Comparator {
    pub fn parse(s: &str) -> Option<Comparator> {
        match s {
            "gt" => Some(Comparator::Gt),
            "ge" => Some(Comparator::Ge),
            "lt" => Some(Comparator::Lt),
            "le" => Some(Comparator::Le),
            "eq" => Some(Comparator::Eq),
            "ne" => Some(Comparator::Ne),
            _ => None,
        }
    }
}

/// Condition on an extend-derived edge. Threshold may stay unset until
/// configuration; emission then renders a placeholder rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuardSpec {
    pub property_name: String,
    pub comparator: Comparator,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<Value>,
}

impl Default for GuardSpec {
    fn default() -> Self {
        GuardSpec {
            property_name: "payload".to_string(),
            comparator: Comparator::Gt,
            threshold: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: String,
    pub to: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guard: Option<GuardSpec>,
}

/// Components contributed by one use case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub use_case_id: String,
    pub use_case_name: String,
    pub components: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ComponentGraph {
    pub components: Vec<AbstractComponent>,
    pub edges: Vec<Edge>,
    pub groups: Vec<Group>,
}

impl ComponentGraph {
    pub fn component(&self, id: &str) -> Option<&AbstractComponent> {
        self.components.iter().find(|c| c.id == id)
    }

    pub fn component_mut(&mut self, id: &str) -> Option<&mut AbstractComponent> {
        self.components.iter_mut().find(|c| c.id == id)
    }

    pub fn group_of(&self, component_id: &str) -> Option<&Group> {
        self.groups
            .iter()
            .find(|g| g.components.iter().any(|c| c == component_id))
    }
}

#[derive(Debug, Error)]
pub enum TransformError {
    #[error("model has no stereotype applications, nothing to transform")]
    EmptyGraph,
    #[error("stereotype `{stereotype}` maps to template `{template_id}` which is not in the repository")]
    NoApplicableTemplate {
        stereotype: String,
        template_id: String,
    },
    #[error("stereotype `{0}` is not in the active profile (validate first)")]
    UnknownStereotype(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

// ---------------------------------------------------------------------------
// Transformation
// ---------------------------------------------------------------------------

/// Transformation 1: model -> abstract component graph.
///
/// Precondition: `validate_model(model, registry, Strict)` passed. Groups
/// follow use-case document order; components follow application order then
/// expansion order; inter-group edges follow relationship document order.
pub fn transform_model(
    model: &UmlModel,
    registry: &ProfileRegistry,
    repo: &TemplateRepo,
) -> Result<ComponentGraph, TransformError> {
    if model.applications.is_empty() {
        return Err(TransformError::EmptyGraph);
    }

    let mut graph = ComponentGraph::default();
    // (use case, stereotype) -> rolling component ordinal, so a stereotype
    // applied twice to one use case still yields unique ids.
    let mut ordinals: IndexMap<(String, String), usize> = IndexMap::new();
    // use case id -> (entry component ids, terminal component ids)
    let mut io_points: IndexMap<String, (Vec<String>, Vec<String>)> = IndexMap::new();

    for use_case in &model.use_cases {
        let applications: Vec<_> = model
            .applications
            .iter()
            .filter(|a| a.base_id == use_case.id)
            .collect();
        if applications.is_empty() {
            continue;
        }
        let mut group_components = Vec::new();
        let (mut group_entries, mut group_terminals) = (Vec::new(), Vec::new());
        for application in applications {
            let stereotype = registry
                .lookup(&application.stereotype_name)
                .map_err(|_| {
                    TransformError::UnknownStereotype(application.stereotype_name.clone())
                })?;
            if !repo.contains(&stereotype.template_id) {
                return Err(TransformError::NoApplicableTemplate {
                    stereotype: stereotype.name.clone(),
                    template_id: stereotype.template_id.clone(),
                });
            }
            let expansion = expand(&stereotype.template_id, repo)?;

            let counter = ordinals
                .entry((use_case.id.clone(), stereotype.name.clone()))
                .or_insert(0);
            let mut ids = Vec::with_capacity(expansion.prototypes.len());
            for prototype in &expansion.prototypes {
                let id = format!(
                    "{}:{}:{}:{}",
                    use_case.id, stereotype.name, prototype.template_path, counter
                );
                *counter += 1;
                graph.components.push(AbstractComponent {
                    id: id.clone(),
                    origin_use_case: use_case.id.clone(),
                    origin_stereotype: stereotype.name.clone(),
                    node_kind: prototype.node_kind.clone(),
                    slots: prototype
                        .properties
                        .iter()
                        .map(|spec| Slot {
                            spec: spec.clone(),
                            value: None,
                        })
                        .collect(),
                });
                ids.push(id);
            }
            for (from, to) in &expansion.internal_edges {
                graph.edges.push(Edge {
                    from: ids[*from].clone(),
                    to: ids[*to].clone(),
                    guard: None,
                });
            }
            group_entries.extend(expansion.entries.iter().map(|i| ids[*i].clone()));
            group_terminals.extend(expansion.terminals.iter().map(|i| ids[*i].clone()));
            group_components.extend(ids);
        }
        io_points.insert(use_case.id.clone(), (group_entries, group_terminals));
        graph.groups.push(Group {
            use_case_id: use_case.id.clone(),
            use_case_name: use_case.name.clone(),
            components: group_components,
        });
    }

    // Inter-group wiring in relationship document order. Relationships
    // touching a use case without a group contribute nothing, and a
    // connection stated twice (same endpoints, same guardedness) is wired
    // once.
    fn push_edge(graph: &mut ComponentGraph, from: &str, to: &str, guarded: bool) {
        let duplicate = graph
            .edges
            .iter()
            .any(|e| e.from == from && e.to == to && e.guard.is_some() == guarded);
        if !duplicate {
            graph.edges.push(Edge {
                from: from.to_string(),
                to: to.to_string(),
                guard: guarded.then(GuardSpec::default),
            });
        }
    }
    for relationship in &model.relationships {
        match relationship.kind {
            RelationshipKind::Include => {
                let (Some((_, from_terminals)), Some((to_entries, _))) = (
                    io_points.get(&relationship.source_id),
                    io_points.get(&relationship.target_id),
                ) else {
                    continue;
                };
                for from in from_terminals {
                    for to in to_entries {
                        push_edge(&mut graph, from, to, false);
                    }
                }
            }
            RelationshipKind::Extend => {
                // source extends target: flow runs from the extended use
                // case into the extending one, behind a guard. Exactly one
                // guarded edge per extend.
                let (Some((_, extended_terminals)), Some((extending_entries, _))) = (
                    io_points.get(&relationship.target_id),
                    io_points.get(&relationship.source_id),
                ) else {
                    continue;
                };
                if let (Some(from), Some(to)) =
                    (extended_terminals.first(), extending_entries.first())
                {
                    push_edge(&mut graph, from, to, true);
                }
            }
            RelationshipKind::Association => {}
        }
    }

    Ok(graph)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::xmi::{parse_xmi, StereotypeApplication, UseCase};

    const HOSPITAL: &str = include_str!("../../../../fixtures/hospital.xmi");

    fn hospital_graph() -> ComponentGraph {
        let model = parse_xmi(HOSPITAL.as_bytes()).unwrap();
        transform_model(&model, &ProfileRegistry::builtin(), &TemplateRepo::builtin()).unwrap()
    }

    #[test]
    fn hospital_graph_shape() {
        let graph = hospital_graph();
        assert_eq!(graph.groups.len(), 4);
        assert_eq!(graph.components.len(), 5);

        let labels: Vec<&str> = graph.groups.iter().map(|g| g.use_case_name.as_str()).collect();
        assert_eq!(
            labels,
            ["Temperature Monitoring", "Save Data", "Show Chart", "Send Notification"]
        );

        let inter: Vec<&Edge> = graph
            .edges
            .iter()
            .filter(|e| {
                graph.group_of(&e.from).unwrap().use_case_id
                    != graph.group_of(&e.to).unwrap().use_case_id
            })
            .collect();
        assert_eq!(inter.len(), 3);
        assert_eq!(inter.iter().filter(|e| e.guard.is_some()).count(), 1);

        // the mandatory sub-processes hang off Temperature Monitoring
        let unguarded_targets: Vec<&str> = inter
            .iter()
            .filter(|e| e.guard.is_none())
            .map(|e| graph.group_of(&e.to).unwrap().use_case_name.as_str())
            .collect();
        assert_eq!(unguarded_targets, ["Save Data", "Show Chart"]);
        assert!(inter
            .iter()
            .filter(|e| e.guard.is_none())
            .all(|e| graph.group_of(&e.from).unwrap().use_case_name == "Temperature Monitoring"));

        let guarded = inter.iter().find(|e| e.guard.is_some()).unwrap();
        assert_eq!(
            graph.group_of(&guarded.to).unwrap().use_case_name,
            "Send Notification"
        );
        assert_eq!(
            graph.group_of(&guarded.from).unwrap().use_case_name,
            "Temperature Monitoring"
        );
        let guard = guarded.guard.as_ref().unwrap();
        assert_eq!(guard.property_name, "payload");
        assert_eq!(guard.comparator, Comparator::Gt);
        assert!(guard.threshold.is_none());
    }

    #[test]
    fn component_ids_are_deterministic_paths() {
        let graph = hospital_graph();
        assert_eq!(
            graph.components[0].id,
            "_uc_monitoring:SensorSubscribe:sensor-subscribe/mqtt-in:0"
        );
        assert_eq!(
            graph.components[1].id,
            "_uc_monitoring:SensorSubscribe:sensor-subscribe/json-parse:1"
        );
    }

    #[test]
    fn transform_is_pure() {
        assert_eq!(hospital_graph(), hospital_graph());
    }

    #[test]
    fn single_use_case_has_internal_edges_only() {
        let model = UmlModel {
            use_cases: vec![UseCase {
                id: "u1".to_string(),
                name: "Monitor".to_string(),
            }],
            applications: vec![StereotypeApplication {
                stereotype_name: "SensorSubscribe".to_string(),
                base_id: "u1".to_string(),
            }],
            ..Default::default()
        };
        let graph =
            transform_model(&model, &ProfileRegistry::builtin(), &TemplateRepo::builtin()).unwrap();
        assert_eq!(graph.groups.len(), 1);
        assert_eq!(graph.components.len(), 2);
        assert_eq!(graph.edges.len(), 1);
        assert!(graph.edges[0].guard.is_none());
    }

    #[test]
    fn empty_model_is_a_distinct_error() {
        let model = UmlModel::default();
        assert!(matches!(
            transform_model(&model, &ProfileRegistry::builtin(), &TemplateRepo::builtin()),
            Err(TransformError::EmptyGraph)
        ));
    }

    #[test]
    fn missing_template_is_reported() {
        let model = UmlModel {
            use_cases: vec![UseCase {
                id: "u1".to_string(),
                name: "U".to_string(),
            }],
            applications: vec![StereotypeApplication {
                stereotype_name: "SensorSubscribe".to_string(),
                base_id: "u1".to_string(),
            }],
            ..Default::default()
        };
        let empty_repo = TemplateRepo::default();
        assert!(matches!(
            transform_model(&model, &ProfileRegistry::builtin(), &empty_repo),
            Err(TransformError::NoApplicableTemplate { .. })
        ));
    }

    #[test]
    fn relationship_to_unannotated_use_case_contributes_nothing() {
        let model = UmlModel {
            use_cases: vec![
                UseCase { id: "plain".to_string(), name: "Plain".to_string() },
                UseCase { id: "notify".to_string(), name: "Notify".to_string() },
            ],
            relationships: vec![crate::xmi::Relationship {
                id: "ext".to_string(),
                kind: crate::xmi::RelationshipKind::Extend,
                source_id: "notify".to_string(),
                target_id: "plain".to_string(),
            }],
            applications: vec![StereotypeApplication {
                stereotype_name: "SendEmail".to_string(),
                base_id: "notify".to_string(),
            }],
            ..Default::default()
        };
        let graph =
            transform_model(&model, &ProfileRegistry::builtin(), &TemplateRepo::builtin()).unwrap();
        assert_eq!(graph.groups.len(), 1);
        assert!(graph.edges.is_empty());
    }

    #[test]
    fn repeated_stereotype_gets_distinct_ordinals() {
        let model = UmlModel {
            use_cases: vec![UseCase { id: "u".to_string(), name: "U".to_string() }],
            applications: vec![
                StereotypeApplication {
                    stereotype_name: "SensorSubscribe".to_string(),
                    base_id: "u".to_string(),
                },
                StereotypeApplication {
                    stereotype_name: "SensorSubscribe".to_string(),
                    base_id: "u".to_string(),
                },
            ],
            ..Default::default()
        };
        let graph =
            transform_model(&model, &ProfileRegistry::builtin(), &TemplateRepo::builtin()).unwrap();
        let ids: Vec<&str> = graph.components.iter().map(|c| c.id.as_str()).collect();
        assert_eq!(
            ids,
            [
                "u:SensorSubscribe:sensor-subscribe/mqtt-in:0",
                "u:SensorSubscribe:sensor-subscribe/json-parse:1",
                "u:SensorSubscribe:sensor-subscribe/mqtt-in:2",
                "u:SensorSubscribe:sensor-subscribe/json-parse:3",
            ]
        );
        assert_eq!(graph.groups.len(), 1);
        assert_eq!(graph.edges.len(), 2);
    }

    #[test]
    fn every_component_belongs_to_exactly_one_group() {
        let graph = hospital_graph();
        for component in &graph.components {
            let owners = graph
                .groups
                .iter()
                .filter(|g| g.components.contains(&component.id))
                .count();
            assert_eq!(owners, 1, "component `{}`", component.id);
        }
        let grouped: usize = graph.groups.iter().map(|g| g.components.len()).sum();
        assert_eq!(grouped, graph.components.len());
    }

    #[test]
    fn registering_extension_leaves_existing_output_unchanged() {
        use crate::profile::{Category, Stereotype};

        let model = parse_xmi(HOSPITAL.as_bytes()).unwrap();
        let registry = ProfileRegistry::builtin();
        let repo = TemplateRepo::builtin();
        let before = transform_model(&model, &registry, &repo).unwrap();

        let extended = registry
            .register(Stereotype {
                name: "SensorAverage".to_string(),
                category: Category::IoT,
                description: String::new(),
                base_metaclass: Default::default(),
                template_id: "sensor-subscribe".to_string(),
            })
            .unwrap();
        let after = transform_model(&model, &extended, &repo).unwrap();
        assert_eq!(
            serde_json::to_vec(&before).unwrap(),
            serde_json::to_vec(&after).unwrap()
        );
    }
}
