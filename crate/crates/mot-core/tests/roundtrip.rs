//! Property test: the canonical flows serialization round-trips through
//! its parser byte-identically, for documents with arbitrary unicode in
//! labels, names, and config values.

use std::collections::BTreeMap;

use proptest::prelude::*;
use serde_json::Value;

use mot_core::emit::{parse_flows, serialize_flows, ConfigNode, FlowDocument, FlowNode, Tab};

fn config_key() -> impl Strategy<Value = String> {
    // any short lowercase key except the structurally reserved ones
    "[a-w]{1,8}".prop_filter("reserved", |k| {
        !["id", "type", "z", "name", "x", "y", "wires", "label"].contains(&k.as_str())
    })
}

fn config_value() -> impl Strategy<Value = Value> {
    prop_oneof![
        any::<String>().prop_map(Value::String),
        any::<i64>().prop_map(Value::from),
        any::<bool>().prop_map(Value::Bool),
        proptest::collection::vec(any::<String>(), 0..3)
            .prop_map(|v| Value::Array(v.into_iter().map(Value::String).collect())),
    ]
}

fn config_map() -> impl Strategy<Value = BTreeMap<String, Value>> {
    proptest::collection::btree_map(config_key(), config_value(), 0..4)
}

prop_compose! {
    fn document()(
        tab_labels in proptest::collection::vec(any::<String>(), 1..4),
        config_specs in proptest::collection::vec((any::<String>(), config_map()), 0..3),
        node_specs in proptest::collection::vec(
            (any::<String>(), config_map(), 0usize..3, any::<i64>(), any::<i64>()),
            0..8,
        ),
        wire_seed in any::<u64>(),
    ) -> FlowDocument {
        let tabs: Vec<Tab> = tab_labels
            .into_iter()
            .enumerate()
            .map(|(i, label)| Tab { id: format!("tab{i}"), label })
            .collect();
        let config_nodes: Vec<ConfigNode> = config_specs
            .into_iter()
            .enumerate()
            .map(|(i, (name, config))| ConfigNode {
                id: format!("cfg{i}"),
                node_type: format!("config-kind-{i}"),
                name,
                config,
            })
            .collect();
        let mut nodes: Vec<FlowNode> = node_specs
            .into_iter()
            .enumerate()
            .map(|(i, (name, config, tab_pick, x, y))| FlowNode {
                id: format!("node{i}"),
                node_type: format!("kind-{}", i % 3),
                tab_id: tabs[tab_pick % tabs.len()].id.clone(),
                name,
                x,
                y,
                config,
                wires: vec![Vec::new()],
            })
            .collect();
        // wire each node to some later node on the same tab
        let ids_and_tabs: Vec<(String, String)> = nodes
            .iter()
            .map(|n| (n.id.clone(), n.tab_id.clone()))
            .collect();
        for (i, node) in nodes.iter_mut().enumerate() {
            if wire_seed.rotate_left(i as u32) % 2 == 0 {
                if let Some((target, _)) = ids_and_tabs
                    .iter()
                    .skip(i + 1)
                    .find(|(_, tab)| *tab == node.tab_id)
                {
                    node.wires[0].push(target.clone());
                }
            }
        }
        FlowDocument { tabs, config_nodes, nodes }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn serialize_parse_round_trip_is_identity(doc in document()) {
        let bytes = serialize_flows(&doc);
        let reparsed = parse_flows(&bytes).unwrap();
        prop_assert_eq!(&reparsed, &doc);
        prop_assert_eq!(serialize_flows(&reparsed), bytes);
    }

    #[test]
    fn serialization_is_valid_json(doc in document()) {
        let bytes = serialize_flows(&doc);
        let value: Value = serde_json::from_slice(&bytes).unwrap();
        prop_assert_eq!(
            value.as_array().map(|a| a.len()),
            Some(doc.tabs.len() + doc.config_nodes.len() + doc.nodes.len())
        );
    }
}
