use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Component, Electrode, LayoutError, PlacedComponent, Port, PortRef, Role, TrapLayout, Violation};
use crate::geom::{Point, Transform};

/// Version tag of the layout document.
pub const SCHEMA: &str = "iontrap-layout/1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    schema: String,
    units: String,
    nets: BTreeMap<String, Role>,
    components: Vec<DocComponent>,
    #[serde(default)]
    connections: Vec<[String; 2]>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DocComponent {
    /// Placement instance name.
    name: String,
    #[serde(default)]
    component: String,
    #[serde(default)]
    kind: String,
    #[serde(default)]
    gap: f64,
    #[serde(default)]
    transform: Transform,
    electrodes: Vec<DocElectrode>,
    #[serde(default)]
    ports: Vec<Port>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    params: Option<serde_json::Value>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DocElectrode {
    id: String,
    /// Global net name.
    net: String,
    /// Flat `x0, y0, x1, y1, ...` in µm, local coordinates.
    vertices: Vec<f64>,
}

fn location(text: &str, needle: &str) -> (usize, usize) {
    match text.find(needle) {
        Some(off) => {
            let before = &text[..off];
            let line = before.matches('\n').count() + 1;
            let column = off - before.rfind('\n').map_or(0, |i| i + 1) + 1;
            (line, column)
        }
        None => (1, 1),
    }
}

/// Serializes a layout as a pretty-printed JSON document.
pub fn save_layout(layout: &TrapLayout) -> Vec<u8> {
    let components = layout
        .components()
        .iter()
        .map(|pc| DocComponent {
            name: pc.instance.clone(),
            component: pc.component.name.clone(),
            kind: pc.component.kind.clone(),
            gap: pc.component.gap,
            transform: pc.transform,
            electrodes: pc
                .component
                .electrodes
                .iter()
                .map(|e| DocElectrode {
                    id: e.id.clone(),
                    net: pc.global_net(e),
                    vertices: e.polygon.iter().flat_map(|p| [p.x, p.y]).collect(),
                })
                .collect(),
            ports: pc.component.ports.clone(),
            params: pc.component.params.clone(),
        })
        .collect();
    let doc = Document {
        schema: SCHEMA.into(),
        units: "um".into(),
        nets: layout.nets().clone(),
        components,
        connections: layout.connections().iter().map(|(a, b)| [a.to_string(), b.to_string()]).collect(),
    };
    let mut out = serde_json::to_vec_pretty(&doc).expect("layout documents always serialize");
    out.push(b'\n');
    out
}

/// Parses and validates a layout document.
pub fn load_layout(bytes: &[u8]) -> Result<TrapLayout, LayoutError> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| LayoutError::Schema { line: 1, column: 1, message: format!("not UTF-8: {e}") })?;
    let doc: Document = serde_json::from_str(text).map_err(|e| LayoutError::Schema {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if doc.schema != SCHEMA {
        let (line, column) = location(text, "\"schema\"");
        return Err(LayoutError::Schema { line, column, message: format!("schema must be `{SCHEMA}`, got `{}`", doc.schema) });
    }
    if doc.units != "um" {
        let (line, column) = location(text, "\"units\"");
        return Err(LayoutError::Schema { line, column, message: format!("units must be `um`, got `{}`", doc.units) });
    }

    let mut violations = Vec::new();
    let mut components = Vec::with_capacity(doc.components.len());
    for dc in doc.components {
        let mut electrodes = Vec::with_capacity(dc.electrodes.len());
        for de in dc.electrodes {
            if de.vertices.len() % 2 != 0 {
                let (line, column) = location(text, &format!("\"id\": \"{}\"", de.id));
                return Err(LayoutError::Schema {
                    line,
                    column,
                    message: format!("electrode {}.{}: odd number of vertex coordinates", dc.name, de.id),
                });
            }
            let Some(&role) = doc.nets.get(&de.net) else {
                violations.push(Violation { invariant: "unknown net", detail: format!("{}.{} references {}", dc.name, de.id, de.net) });
                continue;
            };
            let local = match role {
                Role::Control => de.net.strip_prefix(&format!("{}.", dc.name)).unwrap_or(&de.net).to_string(),
                _ => de.net.clone(),
            };
            let polygon = de.vertices.chunks_exact(2).map(|c| Point::new(c[0], c[1])).collect();
            // Orientation is checked, not repaired, on load.
            electrodes.push(Electrode { id: de.id, role, net: local, polygon });
        }
        let component = Component {
            name: if dc.component.is_empty() { dc.name.clone() } else { dc.component },
            kind: dc.kind,
            gap: dc.gap,
            electrodes,
            ports: dc.ports,
            params: dc.params,
        };
        components.push(PlacedComponent { instance: dc.name, component, transform: dc.transform });
    }
    let mut connections = Vec::with_capacity(doc.connections.len());
    for [a, b] in doc.connections {
        let parse = |s: &str| {
            s.parse::<PortRef>().map_err(|m| {
                let (line, column) = location(text, &format!("\"{s}\""));
                LayoutError::Schema { line, column, message: m }
            })
        };
        connections.push((parse(&a)?, parse(&b)?));
    }
    let layout = TrapLayout::from_parts(components, connections);
    for (a, b) in layout.connections() {
        for r in [a, b] {
            if layout.port(r).is_none() {
                violations.push(Violation { invariant: "connection ports exist", detail: r.to_string() });
            }
        }
    }
    violations.extend(layout.validate());
    if violations.is_empty() {
        Ok(layout)
    } else {
        Err(LayoutError::Invariant(violations))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::library::make_straight_section;

    fn doc_with(electrodes: &str, nets: &str) -> String {
        format!(
            r#"{{"schema": "iontrap-layout/1", "units": "um", "nets": {{{nets}}},
"components": [{{"name": "s", "electrodes": [{electrodes}]}}]}}"#
        )
    }

    #[test]
    fn round_trip_is_identity() {
        let comp = make_straight_section((40.0, 60.0), 44.0, 60.0, 3).unwrap();
        let layout = TrapLayout::single(comp, "sec", Transform::new(Point::new(12.5, -3.0), 30.0)).unwrap();
        let bytes = save_layout(&layout);
        let back = load_layout(&bytes).unwrap();
        assert_eq!(back, layout);
        assert_eq!(save_layout(&back), bytes);
    }

    #[test]
    fn ring_round_trip_is_bit_exact() {
        let ring = crate::layout::library::hexagon_ring().unwrap();
        let bytes = save_layout(&ring);
        assert_eq!(load_layout(&bytes).unwrap(), ring);
    }

    #[test]
    fn self_intersecting_polygon_rejected() {
        let d = doc_with(r#"{"id": "a", "net": "rf", "vertices": [0,0, 10,10, 10,0, 0,10]}"#, r#""rf": "rf""#);
        let err = load_layout(d.as_bytes()).unwrap_err();
        assert!(err.invariants().contains(&"polygon simple"), "{err}");
    }

    #[test]
    fn two_rf_nets_rejected() {
        let d = doc_with(
            r#"{"id": "a", "net": "rf", "vertices": [0,0, 10,0, 10,10, 0,10]},
               {"id": "b", "net": "rf2", "vertices": [20,0, 30,0, 30,10, 20,10]}"#,
            r#""rf": "rf", "rf2": "rf""#,
        );
        let err = load_layout(d.as_bytes()).unwrap_err();
        assert_eq!(err.invariants(), vec!["single rf net"]);
    }

    #[test]
    fn schema_errors_carry_location() {
        let err = load_layout(b"{\n  \"schema\": \"iontrap-layout/1\",\n  \"units\": 5\n}").unwrap_err();
        match err {
            LayoutError::Schema { line, .. } => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let err = load_layout(b"{\"schema\": \"other/2\", \"units\": \"um\", \"nets\": {}, \"components\": []}").unwrap_err();
        assert!(matches!(err, LayoutError::Schema { line: 1, .. }));
    }

    #[test]
    fn unknown_net_reported() {
        let d = doc_with(r#"{"id": "a", "net": "rf", "vertices": [0,0, 10,0, 10,10, 0,10]},
               {"id": "b", "net": "ghost", "vertices": [20,0, 30,0, 30,10, 20,10]}"#, r#""rf": "rf""#);
        let err = load_layout(d.as_bytes()).unwrap_err();
        assert!(err.invariants().contains(&"unknown net"));
    }
}
