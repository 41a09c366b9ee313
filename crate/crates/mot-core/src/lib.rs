//! mot-core: compiles stereotype-annotated UML use-case models into
//! Node-RED flow documents and serverless deployment scaffolds, and
//! executes the generated flows against scripted scenarios.
//!
//! The pipeline mirrors a model-driven workflow: `xmi` ingests the
//! exported diagram, `transform` expands stereotypes through the JSON
//! template repository into an abstract component graph, `configure`
//! fills property slots and provisions backing services, `emit` renders
//! platform flows and the deployment package, and `simulate` interprets
//! the result at desk scale. `pipeline` wires the stages together for
//! the CLI.

pub mod configure;
pub mod emit;
pub mod pipeline;
pub mod profile;
pub mod simulate;
pub mod transform;
pub mod xmi;
