//! Stereotype catalog: the annotations that give use cases their
//! cloud-of-things meaning, plus the registry that binds each one to a
//! component template.
//!
//! The registry is a value type: `register` returns a new registry and
//! never touches the built-ins, so extension can't corrupt the defaults.

use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Grouping label for reporting. Categories carry no behavior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Category {
    IoT,
    Storage,
    Dashboard,
    #[serde(rename = "EmotivBCI")]
    EmotivBci,
    Social,
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Category::IoT => "IoT",
            Category::Storage => "Storage",
            Category::Dashboard => "Dashboard",
            Category::EmotivBci => "EmotivBCI",
            Category::Social => "Social",
        };
        f.write_str(s)
    }
}

/// UML metaclass a stereotype may extend. Only use cases are supported.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaseMetaclass {
    #[default]
    UseCase,
}

/// A named annotation binding a use case to a component template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stereotype {
    pub name: String,
    pub category: Category,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub base_metaclass: BaseMetaclass,
    /// Template id resolved in the template repository at transform time.
    pub template_id: String,
}

#[derive(Debug, Error, PartialEq)]
pub enum ProfileError {
    #[error("unknown stereotype `{0}`")]
    UnknownStereotype(String),
    #[error("stereotype `{0}` is already registered")]
    DuplicateStereotype(String),
    #[error("stereotype name must be non-empty")]
    EmptyName,
}

/// Case-sensitive, insertion-ordered catalog of stereotypes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRegistry {
    stereotypes: IndexMap<String, Stereotype>,
}

impl ProfileRegistry {
    /// The nine built-in stereotypes across the five categories.
    pub fn builtin() -> Self {
        let entries = [
            (
                "SensorSubscribe",
                Category::IoT,
                "Monitors an IoT sensor by subscribing to an MQTT topic",
                "sensor-subscribe",
            ),
            (
                "SensorPublish",
                Category::IoT,
                "Sends data to an IoT sensor by publishing to an MQTT topic",
                "sensor-publish",
            ),
            (
                "DatabaseSave",
                Category::Storage,
                "Persists incoming data to a database collection",
                "database-save",
            ),
            (
                "DashboardGauge",
                Category::Dashboard,
                "Shows the latest value as a dashboard gauge",
                "dashboard-gauge",
            ),
            (
                "DashboardChart",
                Category::Dashboard,
                "Plots values over time as a dashboard chart",
                "dashboard-chart",
            ),
            (
                "FacialExpression",
                Category::EmotivBci,
                "Reads facial-expression events from a BCI headset profile",
                "facial-expression",
            ),
            (
                "MentalCommand",
                Category::EmotivBci,
                "Reads mental-command values from a BCI headset profile",
                "mental-command",
            ),
            (
                "TwitterPost",
                Category::Social,
                "Publishes incoming text to a Twitter account",
                "twitter-post",
            ),
            (
                "SendEmail",
                Category::Social,
                "Delivers incoming data as an e-mail through an SMTP server",
                "send-email",
            ),
        ];
        let stereotypes = entries
            .into_iter()
            .map(|(name, category, description, template_id)| {
                (
                    name.to_string(),
                    Stereotype {
                        name: name.to_string(),
                        category,
                        description: description.to_string(),
                        base_metaclass: BaseMetaclass::UseCase,
                        template_id: template_id.to_string(),
                    },
                )
            })
            .collect();
        ProfileRegistry { stereotypes }
    }

    /// Empty registry, for building fully custom profiles.
    pub fn empty() -> Self {
        ProfileRegistry {
            stereotypes: IndexMap::new(),
        }
    }

    pub fn lookup(&self, name: &str) -> Result<&Stereotype, ProfileError> {
        self.stereotypes
            .get(name)
            .ok_or_else(|| ProfileError::UnknownStereotype(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.stereotypes.contains_key(name)
    }

    /// Returns a registry extended with `s`. The receiver is unchanged.
    pub fn register(&self, s: Stereotype) -> Result<ProfileRegistry, ProfileError> {
        if s.name.trim().is_empty() {
            return Err(ProfileError::EmptyName);
        }
        if self.stereotypes.contains_key(&s.name) {
            return Err(ProfileError::DuplicateStereotype(s.name));
        }
        let mut extended = self.clone();
        extended.stereotypes.insert(s.name.clone(), s);
        Ok(extended)
    }

    pub fn len(&self) -> usize {
        self.stereotypes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stereotypes.is_empty()
    }

    /// Stereotypes in registration order (built-ins first).
    pub fn iter(&self) -> impl Iterator<Item = &Stereotype> {
        self.stereotypes.values()
    }
}

/// Parses a profile-extension file: a JSON array of stereotype records.
/// Each record is registered on top of `base`, erroring on name collisions.
pub fn extend_registry(
    base: &ProfileRegistry,
    extension_json: &str,
) -> Result<ProfileRegistry, ProfileExtensionError> {
    let records: Vec<Stereotype> = serde_json::from_str(extension_json)?;
    let mut registry = base.clone();
    for record in records {
        registry = registry.register(record)?;
    }
    Ok(registry)
}

#[derive(Debug, Error)]
pub enum ProfileExtensionError {
    #[error("profile extension is not valid JSON: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error(transparent)]
    Profile(#[from] ProfileError),
}
