//! Desk-scale interpreter for emitted flow documents. Injections enter the
//! matching `mqtt in` nodes (or the reserved `bci/facial` / `bci/mental`
//! topics), travel through json/switch/function/link nodes, and terminate
//! at sink nodes that append trace events. Virtual time, synchronous
//! run-to-completion per injection; no wall clock, no real I/O.

use std::collections::{BTreeMap, VecDeque};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::emit::{digest16, FlowDocument, FlowNode};

// ---------------------------------------------------------------------------
// Scenario and trace types
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Injection {
    /// Virtual time in milliseconds.
    pub at: u64,
    pub topic: String,
    pub payload: Value,
}

/// Override keys resolve, in order: exact node id, digest of an abstract
/// component id, then node name. Switch nodes accept the friendly keys
/// `property`, `comparator` (gt|ge|lt|le|eq|ne), and `threshold`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimulationScenario {
    #[serde(default)]
    pub injections: Vec<Injection>,
    #[serde(default)]
    pub overrides: IndexMap<String, IndexMap<String, Value>>,
    #[serde(default)]
    pub credentials: BTreeMap<String, String>,
}

impl SimulationScenario {
    pub fn parse(json: &str) -> Result<Self, SimulateError> {
        serde_json::from_str(json).map_err(|e| SimulateError::ScenarioSyntax(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DbRecord {
    pub time: u64,
    pub collection: String,
    pub document: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmailEvent {
    pub time: u64,
    pub recipient: String,
    pub subject: String,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DashboardEvent {
    pub time: u64,
    pub widget: String,
    pub value: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublishEvent {
    pub time: u64,
    pub topic: String,
    pub payload: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocialEvent {
    pub time: u64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropEvent {
    pub time: u64,
    pub guard_id: String,
    pub payload: Value,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimulationTrace {
    pub db_records: Vec<DbRecord>,
    pub emails: Vec<EmailEvent>,
    pub dashboard: Vec<DashboardEvent>,
    pub published: Vec<PublishEvent>,
    pub social: Vec<SocialEvent>,
    pub dropped: Vec<DropEvent>,
}

#[derive(Debug, Error)]
pub enum SimulateError {
    #[error("scenario is not valid JSON: {0}")]
    ScenarioSyntax(String),
    #[error("node `{node}` still holds unresolved secret `{key}`")]
    UnresolvedSecret { node: String, key: String },
    #[error("node type `{0}` is not modeled by the simulator")]
    UnknownNodeType(String),
    #[error("simulation exceeded its step budget (wiring loop?)")]
    StepBudgetExceeded,
}

const RESERVED_FACIAL_TOPIC: &str = "bci/facial";
const RESERVED_MENTAL_TOPIC: &str = "bci/mental";
const STEP_BUDGET: usize = 100_000;

fn secret_key(value: &Value) -> Option<&str> {
    value
        .as_str()
        .and_then(|s| s.strip_prefix("__MOT_SECRET__"))
        .and_then(|s| s.strip_suffix("__"))
}

// ---------------------------------------------------------------------------
// Runner
// ---------------------------------------------------------------------------

/// Executes a scenario against a flow document and returns the trace.
/// Equal inputs yield equal traces.
pub fn run_simulation(
    doc: &FlowDocument,
    scenario: &SimulationScenario,
) -> Result<SimulationTrace, SimulateError> {
    let mut doc = doc.clone();
    apply_overrides(&mut doc, &scenario.overrides);
    apply_credentials(&mut doc, &scenario.credentials);

    // Reject documents with node types the interpreter does not model,
    // before any message moves.
    for node in &doc.nodes {
        if !is_known_type(&node.node_type) {
            return Err(SimulateError::UnknownNodeType(node.node_type.clone()));
        }
    }

    let nodes: BTreeMap<&str, &FlowNode> =
        doc.nodes.iter().map(|n| (n.id.as_str(), n)).collect();
    let configs: BTreeMap<&str, &BTreeMap<String, Value>> = doc
        .config_nodes
        .iter()
        .map(|c| (c.id.as_str(), &c.config))
        .collect();

    let mut injections = scenario.injections.clone();
    injections.sort_by_key(|i| i.at); // stable: ties keep list order

    let mut trace = SimulationTrace::default();
    for injection in &injections {
        let sources: Vec<&FlowNode> = doc
            .nodes
            .iter()
            .filter(|n| subscribes_to(n, &injection.topic))
            .collect();
        if sources.is_empty() {
            trace.dropped.push(DropEvent {
                time: injection.at,
                guard_id: "no-subscriber".to_string(),
                payload: injection.payload.clone(),
            });
            continue;
        }
        let mut queue: VecDeque<(String, Value)> = sources
            .iter()
            .map(|n| (n.id.clone(), injection.payload.clone()))
            .collect();
        let mut steps = 0usize;
        while let Some((node_id, payload)) = queue.pop_front() {
            steps += 1;
            if steps > STEP_BUDGET {
                return Err(SimulateError::StepBudgetExceeded);
            }
            let node = nodes[node_id.as_str()];
            step_node(node, payload, injection.at, &configs, &mut trace, &mut queue)?;
        }
    }
    Ok(trace)
}

fn is_known_type(node_type: &str) -> bool {
    matches!(
        node_type,
        "mqtt in"
            | "mqtt out"
            | "json"
            | "switch"
            | "function"
            | "link in"
            | "link out"
            | "mongodb out"
            | "e-mail"
            | "ui_gauge"
            | "ui_chart"
            | "twitter out"
            | "facial-expression"
            | "mental-command"
    )
}

fn subscribes_to(node: &FlowNode, topic: &str) -> bool {
    match node.node_type.as_str() {
        "mqtt in" => node.config.get("topic").and_then(Value::as_str) == Some(topic),
        "facial-expression" => topic == RESERVED_FACIAL_TOPIC,
        "mental-command" => topic == RESERVED_MENTAL_TOPIC,
        _ => false,
    }
}

fn forward(node: &FlowNode, payload: Value, queue: &mut VecDeque<(String, Value)>) {
    for port in &node.wires {
        for target in port {
            queue.push_back((target.clone(), payload.clone()));
        }
    }
}

fn config_text(node: &FlowNode, key: &str) -> String {
    node.config
        .get(key)
        .and_then(Value::as_str)
        .unwrap_or("")
        .to_string()
}

fn payload_text(payload: &Value) -> String {
    match payload {
        Value::String(s) => s.clone(),
        other => serde_json::to_string(other).expect("JSON values serialize"),
    }
}

fn check_secrets(
    node: &FlowNode,
    configs: &BTreeMap<&str, &BTreeMap<String, Value>>,
) -> Result<(), SimulateError> {
    for value in node.config.values() {
        if let Some(key) = secret_key(value) {
            return Err(SimulateError::UnresolvedSecret {
                node: node.id.clone(),
                key: key.to_string(),
            });
        }
    }
    // Referenced config nodes (e.g. the SMTP server) count too.
    if let Some(server) = node.config.get("server").and_then(Value::as_str) {
        if let Some(config) = configs.get(server) {
            for value in config.values() {
                if let Some(key) = secret_key(value) {
                    return Err(SimulateError::UnresolvedSecret {
                        node: node.id.clone(),
                        key: key.to_string(),
                    });
                }
            }
        }
    }
    Ok(())
}

fn step_node(
    node: &FlowNode,
    payload: Value,
    time: u64,
    configs: &BTreeMap<&str, &BTreeMap<String, Value>>,
    trace: &mut SimulationTrace,
    queue: &mut VecDeque<(String, Value)>,
) -> Result<(), SimulateError> {
    match node.node_type.as_str() {
        "mqtt in" | "facial-expression" | "mental-command" | "link in" | "link out" => {
            if node.node_type == "link out" {
                // link pairs forward across tabs through their `links` config
                if let Some(links) = node.config.get("links").and_then(Value::as_array) {
                    for link in links {
                        if let Some(target) = link.as_str() {
                            queue.push_back((target.to_string(), payload.clone()));
                        }
                    }
                }
            } else {
                forward(node, payload, queue);
            }
        }
        "json" => match &payload {
            Value::String(text) => match serde_json::from_str::<Value>(text.trim()) {
                Ok(parsed) => forward(node, parsed, queue),
                Err(_) => trace.dropped.push(DropEvent {
                    time,
                    guard_id: node.id.clone(),
                    payload,
                }),
            },
            other => {
                let serialized = serde_json::to_string(other).expect("JSON values serialize");
                forward(node, Value::String(serialized), queue);
            }
        },
        "switch" => {
            if switch_passes(node, &payload) {
                forward(node, payload, queue);
            } else {
                trace.dropped.push(DropEvent {
                    time,
                    guard_id: node.id.clone(),
                    payload,
                });
            }
        }
        "function" => match expr::evaluate(&config_text(node, "expr"), &payload) {
            Ok(result) => forward(node, result, queue),
            Err(_) => trace.dropped.push(DropEvent {
                time,
                guard_id: node.id.clone(),
                payload,
            }),
        },
        "mongodb out" => trace.db_records.push(DbRecord {
            time,
            collection: config_text(node, "collection"),
            document: payload,
        }),
        "e-mail" => {
            check_secrets(node, configs)?;
            trace.emails.push(EmailEvent {
                time,
                recipient: config_text(node, "to"),
                subject: config_text(node, "subject"),
                body: payload_text(&payload),
            });
        }
        "ui_gauge" | "ui_chart" => trace.dashboard.push(DashboardEvent {
            time,
            widget: node.id.clone(),
            value: payload,
        }),
        "mqtt out" => trace.published.push(PublishEvent {
            time,
            topic: config_text(node, "topic"),
            payload,
        }),
        "twitter out" => {
            check_secrets(node, configs)?;
            trace.social.push(SocialEvent {
                time,
                text: payload_text(&payload),
            });
        }
        other => return Err(SimulateError::UnknownNodeType(other.to_string())),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Switch rule evaluation
// ---------------------------------------------------------------------------

fn message_property(payload: &Value, property: &str) -> Option<Value> {
    if property.is_empty() || property == "payload" {
        return Some(payload.clone());
    }
    let path = property.strip_prefix("payload.").unwrap_or(property);
    let mut current = payload;
    for segment in path.split('.') {
        current = current.get(segment)?;
    }
    Some(current.clone())
}

fn as_number(value: &Value) -> Option<f64> {
    match value {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

fn switch_passes(node: &FlowNode, payload: &Value) -> bool {
    let property = node
        .config
        .get("property")
        .and_then(Value::as_str)
        .unwrap_or("payload");
    let Some(subject) = message_property(payload, property) else {
        return false;
    };
    let Some(rules) = node.config.get("rules").and_then(Value::as_array) else {
        return false;
    };
    let Some(rule) = rules.first() else {
        return false;
    };
    let op = rule.get("t").and_then(Value::as_str).unwrap_or("");
    let raw = rule.get("v").cloned().unwrap_or(Value::String(String::new()));
    if raw.as_str() == Some("") {
        return false; // unset placeholder rule: nothing satisfies it
    }
    match op {
        "gt" | "gte" | "lt" | "lte" => {
            let (Some(left), Some(right)) = (as_number(&subject), as_number(&raw)) else {
                return false;
            };
            match op {
                "gt" => left > right,
                "gte" => left >= right,
                "lt" => left < right,
                _ => left <= right,
            }
        }
        "eq" | "neq" => {
            let equal = match (as_number(&subject), as_number(&raw)) {
                (Some(left), Some(right)) => left == right,
                _ => payload_text(&subject) == payload_text(&raw),
            };
            if op == "eq" {
                equal
            } else {
                !equal
            }
        }
        _ => false,
    }
}

// ---------------------------------------------------------------------------
// Overrides and credentials
// ---------------------------------------------------------------------------

fn apply_overrides(doc: &mut FlowDocument, overrides: &IndexMap<String, IndexMap<String, Value>>) {
    for (key, properties) in overrides {
        let digested = digest16(key);
        let targets: Vec<usize> = doc
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.id == *key || n.id == digested || n.name == *key)
            .map(|(i, _)| i)
            .collect();
        for index in targets {
            let node = &mut doc.nodes[index];
            if node.node_type == "switch" {
                for (name, value) in properties {
                    match name.as_str() {
                        "property" => {
                            if let Some(s) = value.as_str() {
                                node.config.insert("property".to_string(), Value::String(s.to_string()));
                            }
                        }
                        "comparator" => {
                            if let Some(tag) = value.as_str() {
                                let tag = match tag {
                                    "ge" => "gte",
                                    "le" => "lte",
                                    "ne" => "neq",
                                    other => other,
                                };
                                set_rule_field(node, "t", Value::String(tag.to_string()));
                            }
                        }
                        "threshold" => {
                            let (v, vt) = match value {
                                Value::Number(n) => (Value::String(n.to_string()), "num"),
                                Value::String(s) => (Value::String(s.clone()), "str"),
                                other => (Value::String(other.to_string()), "str"),
                            };
                            set_rule_field(node, "v", v);
                            set_rule_field(node, "vt", Value::String(vt.to_string()));
                        }
                        _ => {}
                    }
                }
            } else {
                for (name, value) in properties {
                    node.config.insert(name.clone(), value.clone());
                }
            }
        }
    }
}

fn set_rule_field(node: &mut FlowNode, field: &str, value: Value) {
    let rules = node
        .config
        .entry("rules".to_string())
        .or_insert_with(|| Value::Array(vec![serde_json::json!({})]));
    if let Some(rule) = rules.as_array_mut().and_then(|r| r.first_mut()) {
        if let Some(obj) = rule.as_object_mut() {
            obj.insert(field.to_string(), value);
        }
    }
}

fn apply_credentials(doc: &mut FlowDocument, credentials: &BTreeMap<String, String>) {
    let resolve = |value: &mut Value| {
        if let Some(key) = secret_key(value) {
            if let Some(resolved) = credentials.get(key) {
                *value = Value::String(resolved.clone());
            }
        }
    };
    for node in &mut doc.nodes {
        for value in node.config.values_mut() {
            resolve(value);
        }
    }
    for config_node in &mut doc.config_nodes {
        for value in config_node.config.values_mut() {
            resolve(value);
        }
    }
}

// ---------------------------------------------------------------------------
// Function-node expressions
// ---------------------------------------------------------------------------

/// Fixed mini-expression language for function nodes: property access on
/// the payload, numeric arithmetic, and comparisons. Not a script engine.
mod expr {
    use serde_json::Value;

    #[derive(Debug, Clone, PartialEq)]
    enum Token {
        Number(f64),
        Ident(String),
        Plus,
        Minus,
        Star,
        Slash,
        LParen,
        RParen,
        Dot,
        Cmp(&'static str),
    }

    pub fn evaluate(source: &str, payload: &Value) -> Result<Value, String> {
        if source.trim().is_empty() {
            return Ok(payload.clone());
        }
        let tokens = tokenize(source)?;
        let mut parser = Parser {
            tokens,
            position: 0,
            payload,
        };
        let result = parser.comparison()?;
        if parser.position != parser.tokens.len() {
            return Err("trailing tokens".to_string());
        }
        Ok(result)
    }

    fn tokenize(source: &str) -> Result<Vec<Token>, String> {
        let mut tokens = Vec::new();
        let chars: Vec<char> = source.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            match c {
                ' ' | '\t' | '\n' => i += 1,
                '+' => {
                    tokens.push(Token::Plus);
                    i += 1;
                }
                '-' => {
                    tokens.push(Token::Minus);
                    i += 1;
                }
                '*' => {
                    tokens.push(Token::Star);
                    i += 1;
                }
                '/' => {
                    tokens.push(Token::Slash);
                    i += 1;
                }
                '(' => {
                    tokens.push(Token::LParen);
                    i += 1;
                }
                ')' => {
                    tokens.push(Token::RParen);
                    i += 1;
                }
                '.' if i + 1 < chars.len() && chars[i + 1].is_alphabetic() => {
                    tokens.push(Token::Dot);
                    i += 1;
                }
                '>' | '<' | '=' | '!' => {
                    let two = if i + 1 < chars.len() && chars[i + 1] == '=' {
                        i += 2;
                        true
                    } else {
                        i += 1;
                        false
                    };
                    let op = match (c, two) {
                        ('>', true) => ">=",
                        ('>', false) => ">",
                        ('<', true) => "<=",
                        ('<', false) => "<",
                        ('=', true) => "==",
                        ('!', true) => "!=",
                        _ => return Err(format!("stray `{c}`")),
                    };
                    tokens.push(Token::Cmp(op));
                }
                d if d.is_ascii_digit() => {
                    let start = i;
                    while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                        i += 1;
                    }
                    let text: String = chars[start..i].iter().collect();
                    tokens.push(Token::Number(
                        text.parse().map_err(|_| format!("bad number `{text}`"))?,
                    ));
                }
                a if a.is_alphabetic() || a == '_' => {
                    let start = i;
                    while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                        i += 1;
                    }
                    tokens.push(Token::Ident(chars[start..i].iter().collect()));
                }
                other => return Err(format!("unexpected `{other}`")),
            }
        }
        Ok(tokens)
    }

    struct Parser<'a> {
        tokens: Vec<Token>,
        position: usize,
        payload: &'a Value,
    }

    impl Parser<'_> {
        fn peek(&self) -> Option<&Token> {
            self.tokens.get(self.position)
        }

        fn comparison(&mut self) -> Result<Value, String> {
            let left = self.additive()?;
            if let Some(Token::Cmp(op)) = self.peek().cloned() {
                self.position += 1;
                let right = self.additive()?;
                let (l, r) = (number(&left)?, number(&right)?);
                let result = match op {
                    ">" => l > r,
                    ">=" => l >= r,
                    "<" => l < r,
                    "<=" => l <= r,
                    "==" => l == r,
                    _ => l != r,
                };
                return Ok(Value::Bool(result));
            }
            Ok(left)
        }

        fn additive(&mut self) -> Result<Value, String> {
            let mut value = self.multiplicative()?;
            while let Some(token) = self.peek().cloned() {
                let op = match token {
                    Token::Plus => '+',
                    Token::Minus => '-',
                    _ => break,
                };
                self.position += 1;
                let rhs = self.multiplicative()?;
                let result = match op {
                    '+' => number(&value)? + number(&rhs)?,
                    _ => number(&value)? - number(&rhs)?,
                };
                value = to_number_value(result)?;
            }
            Ok(value)
        }

        fn multiplicative(&mut self) -> Result<Value, String> {
            let mut value = self.unary()?;
            while let Some(token) = self.peek().cloned() {
                let op = match token {
                    Token::Star => '*',
                    Token::Slash => '/',
                    _ => break,
                };
                self.position += 1;
                let rhs = self.unary()?;
                let result = match op {
                    '*' => number(&value)? * number(&rhs)?,
                    _ => {
                        let divisor = number(&rhs)?;
                        if divisor == 0.0 {
                            return Err("division by zero".to_string());
                        }
                        number(&value)? / divisor
                    }
                };
                value = to_number_value(result)?;
            }
            Ok(value)
        }

        fn unary(&mut self) -> Result<Value, String> {
            if matches!(self.peek(), Some(Token::Minus)) {
                self.position += 1;
                let value = self.unary()?;
                return to_number_value(-number(&value)?);
            }
            self.primary()
        }

        fn primary(&mut self) -> Result<Value, String> {
            match self.peek().cloned() {
                Some(Token::Number(n)) => {
                    self.position += 1;
                    to_number_value(n)
                }
                Some(Token::LParen) => {
                    self.position += 1;
                    let value = self.comparison()?;
                    if !matches!(self.peek(), Some(Token::RParen)) {
                        return Err("missing `)`".to_string());
                    }
                    self.position += 1;
                    Ok(value)
                }
                Some(Token::Ident(name)) if name == "payload" => {
                    self.position += 1;
                    let mut value = self.payload.clone();
                    while matches!(self.peek(), Some(Token::Dot)) {
                        self.position += 1;
                        let Some(Token::Ident(field)) = self.peek().cloned() else {
                            return Err("expected field after `.`".to_string());
                        };
                        self.position += 1;
                        value = value
                            .get(&field)
                            .cloned()
                            .ok_or_else(|| format!("payload has no field `{field}`"))?;
                    }
                    // strings that look numeric participate in arithmetic
                    if let Value::String(s) = &value {
                        if let Ok(n) = s.trim().parse::<f64>() {
                            return to_number_value(n);
                        }
                    }
                    Ok(value)
                }
                other => Err(format!("unexpected token {other:?}")),
            }
        }
    }

    fn number(value: &Value) -> Result<f64, String> {
        match value {
            Value::Number(n) => n.as_f64().ok_or_else(|| "bad number".to_string()),
            Value::String(s) => s.trim().parse().map_err(|_| format!("`{s}` is not numeric")),
            other => Err(format!("{other} is not numeric")),
        }
    }

    fn to_number_value(n: f64) -> Result<Value, String> {
        if !n.is_finite() {
            return Err("non-finite result".to_string());
        }
        if n.fract() == 0.0 && n.abs() < i64::MAX as f64 {
            return Ok(Value::from(n as i64));
        }
        serde_json::Number::from_f64(n)
            .map(Value::Number)
            .ok_or_else(|| "bad number".to_string())
    }
}
