//! Electrode geometry: coplanar polygons grouped into reusable components
//! that snap together at ports.
//!
//! Components keep their electrodes in local coordinates; a [`TrapLayout`]
//! places them with rigid transforms and exposes the flattened electrode
//! list. Control nets are namespaced by placement instance
//! (`"hex.j3.c07"`); rf and ground nets are global.

mod io;
pub mod library;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geom::{self, Point, Transform};

pub use io::{load_layout, save_layout, SCHEMA};

/// Minimum spacing between consecutive polygon vertices, µm.
pub const MIN_VERTEX_SPACING: f64 = 0.01;
/// Width tolerance when matching port rail profiles, µm.
pub const PORT_WIDTH_TOL: f64 = 0.01;
/// Overlap areas below this (µm²) count as boundary contact.
pub const OVERLAP_AREA_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Rf,
    Control,
    Ground,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Rf => "rf",
            Role::Control => "control",
            Role::Ground => "ground",
        })
    }
}

/// A coplanar electrode polygon (µm, counterclockwise).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Electrode {
    pub id: String,
    pub role: Role,
    pub net: String,
    pub polygon: Vec<Point>,
}

impl Electrode {
    pub fn new(id: impl Into<String>, role: Role, net: impl Into<String>, polygon: Vec<Point>) -> Self {
        Self { id: id.into(), role, net: net.into(), polygon: geom::to_ccw(polygon) }
    }

    pub fn area(&self) -> f64 {
        geom::area(&self.polygon)
    }

    fn transformed(&self, t: &Transform) -> Self {
        Self { polygon: self.polygon.iter().map(|&p| t.apply(p)).collect(), ..self.clone() }
    }
}

/// One strip of a port cross-section. `net` is the rf net name for rf
/// strips, `"ctl"` for control strips and `"gap"` for gaps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RailStrip {
    pub net: String,
    pub width: f64,
}

impl RailStrip {
    pub fn new(net: impl Into<String>, width: f64) -> Self {
        Self { net: net.into(), width }
    }
}

/// Connection point of a component. `rail_profile` lists strips from the
/// port's left to its right, looking outward along `direction`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Port {
    pub name: String,
    pub position: Point,
    pub direction: Point,
    pub rail_profile: Vec<RailStrip>,
}

impl Port {
    fn transformed(&self, t: &Transform) -> Self {
        Self {
            position: t.apply(self.position),
            direction: t.apply_dir(self.direction),
            ..self.clone()
        }
    }

    /// Whether two ports can be joined face to face.
    pub fn profile_matches(&self, other: &Port) -> bool {
        self.rail_profile.len() == other.rail_profile.len()
            && self
                .rail_profile
                .iter()
                .zip(other.rail_profile.iter().rev())
                .all(|(a, b)| a.net == b.net && (a.width - b.width).abs() <= PORT_WIDTH_TOL)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub name: String,
    /// Library kind (`straight`, `load`, `experiment`, `junction`, ...).
    #[serde(default)]
    pub kind: String,
    /// Nominal gap between neighbouring electrodes, µm.
    #[serde(default)]
    pub gap: f64,
    pub electrodes: Vec<Electrode>,
    pub ports: Vec<Port>,
    /// Generator parameters, kept so a component can be regenerated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<serde_json::Value>,
}

impl Component {
    pub fn port(&self, name: &str) -> Option<&Port> {
        self.ports.iter().find(|p| p.name == name)
    }

    pub fn electrode(&self, id: &str) -> Option<&Electrode> {
        self.electrodes.iter().find(|e| e.id == id)
    }

    pub fn total_area(&self) -> f64 {
        self.electrodes.iter().map(Electrode::area).sum()
    }

    /// Mirror image about the local x axis (ports keep their names; rail
    /// profiles swap sides).
    pub fn mirrored(&self, name: impl Into<String>) -> Self {
        let flip = |p: Point| Point::new(p.x, -p.y);
        Self {
            name: name.into(),
            kind: self.kind.clone(),
            gap: self.gap,
            electrodes: self
                .electrodes
                .iter()
                .map(|e| Electrode::new(e.id.clone(), e.role, e.net.clone(), e.polygon.iter().map(|&p| flip(p)).collect()))
                .collect(),
            ports: self
                .ports
                .iter()
                .map(|p| Port {
                    name: p.name.clone(),
                    position: flip(p.position),
                    direction: flip(p.direction),
                    rail_profile: p.rail_profile.iter().rev().cloned().collect(),
                })
                .collect(),
            params: self.params.clone().map(|mut v| {
                if let Some(obj) = v.as_object_mut() {
                    let m = obj.get("mirrored").and_then(|x| x.as_bool()).unwrap_or(false);
                    obj.insert("mirrored".into(), serde_json::Value::Bool(!m));
                }
                v
            }),
        }
    }
}

/// A component placed in a layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacedComponent {
    pub instance: String,
    pub component: Component,
    pub transform: Transform,
}

impl PlacedComponent {
    fn global_net(&self, local: &Electrode) -> String {
        match local.role {
            Role::Control => format!("{}.{}", self.instance, local.net),
            Role::Rf | Role::Ground => local.net.clone(),
        }
    }

    pub fn global_port(&self, name: &str) -> Option<Port> {
        self.component.port(name).map(|p| p.transformed(&self.transform))
    }
}

/// `(instance, port name)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PortRef {
    pub instance: String,
    pub port: String,
}

impl PortRef {
    pub fn new(instance: impl Into<String>, port: impl Into<String>) -> Self {
        Self { instance: instance.into(), port: port.into() }
    }
}

impl fmt::Display for PortRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.instance, self.port)
    }
}

impl std::str::FromStr for PortRef {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (inst, port) = s.rsplit_once('.').ok_or_else(|| format!("expected <instance>.<port>, got `{s}`"))?;
        Ok(Self::new(inst, port))
    }
}

/// A violated layout invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Invariant name, e.g. `"polygon simple"` or `"single rf net"`.
    pub invariant: &'static str,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.invariant, self.detail)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LayoutError {
    #[error("non-positive dimension: {0}")]
    NonPositiveDimension(String),
    #[error("port profiles differ: {base} vs {comp}")]
    PortMismatch { base: String, comp: String },
    #[error("electrodes {a} and {b} overlap by {area:.3e} µm²")]
    Overlap { a: String, b: String, area: f64 },
    #[error("unknown port {0}")]
    UnknownPort(String),
    #[error("port {0} is already connected")]
    PortInUse(String),
    #[error("duplicate instance name `{0}`")]
    DuplicateInstance(String),
    #[error("schema error at line {line}, column {column}: {message}")]
    Schema { line: usize, column: usize, message: String },
    #[error("invariant violated: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invariant(Vec<Violation>),
}

impl LayoutError {
    /// Names of the violated invariants, for [`LayoutError::Invariant`].
    pub fn invariants(&self) -> Vec<&'static str> {
        match self {
            LayoutError::Invariant(v) => v.iter().map(|x| x.invariant).collect(),
            _ => Vec::new(),
        }
    }
}

/// Placed components, their connections, and the flattened electrode list.
#[derive(Debug, Clone, PartialEq)]
pub struct TrapLayout {
    components: Vec<PlacedComponent>,
    connections: Vec<(PortRef, PortRef)>,
    nets: BTreeMap<String, Role>,
    electrodes: Vec<Electrode>,
    /// Nominal gap per flattened electrode.
    gaps: Vec<f64>,
}

impl TrapLayout {
    /// Assembles a layout without checking invariants; see [`TrapLayout::validate`].
    pub fn from_parts(components: Vec<PlacedComponent>, connections: Vec<(PortRef, PortRef)>) -> Self {
        let mut nets = BTreeMap::new();
        let mut electrodes = Vec::new();
        let mut gaps = Vec::new();
        for pc in &components {
            for e in &pc.component.electrodes {
                let net = pc.global_net(e);
                nets.entry(net.clone()).or_insert(e.role);
                let mut g = e.transformed(&pc.transform);
                g.id = format!("{}.{}", pc.instance, e.id);
                g.net = net;
                electrodes.push(g);
                gaps.push(pc.component.gap);
            }
        }
        Self { components, connections, nets, electrodes, gaps }
    }

    /// Layout holding a single component placed with `transform`.
    pub fn single(component: Component, instance: impl Into<String>, transform: Transform) -> Result<Self, LayoutError> {
        let layout = Self::from_parts(
            vec![PlacedComponent { instance: instance.into(), component, transform }],
            Vec::new(),
        );
        layout.check()?;
        Ok(layout)
    }

    pub fn components(&self) -> &[PlacedComponent] {
        &self.components
    }

    pub fn connections(&self) -> &[(PortRef, PortRef)] {
        &self.connections
    }

    pub fn nets(&self) -> &BTreeMap<String, Role> {
        &self.nets
    }

    pub fn electrodes(&self) -> &[Electrode] {
        &self.electrodes
    }

    /// `(role, electrode, nominal gap)` for every flattened electrode.
    pub fn electrodes_with_gap(&self) -> impl Iterator<Item = (Role, &Electrode, f64)> {
        self.electrodes.iter().zip(&self.gaps).map(|(e, &g)| (e.role, e, g))
    }

    pub fn component(&self, instance: &str) -> Option<&PlacedComponent> {
        self.components.iter().find(|c| c.instance == instance)
    }

    pub fn total_area(&self) -> f64 {
        self.electrodes.iter().map(Electrode::area).sum()
    }

    pub fn port(&self, r: &PortRef) -> Option<Port> {
        self.component(&r.instance)?.global_port(&r.port)
    }

    fn is_connected(&self, r: &PortRef) -> bool {
        self.connections.iter().any(|(a, b)| a == r || b == r)
    }

    /// Ports not consumed by a connection, in placement order.
    pub fn open_ports(&self) -> Vec<(PortRef, Port)> {
        let mut out = Vec::new();
        for pc in &self.components {
            for p in &pc.component.ports {
                let r = PortRef::new(pc.instance.clone(), p.name.clone());
                if !self.is_connected(&r) {
                    out.push((r, p.transformed(&pc.transform)));
                }
            }
        }
        out
    }

    fn unique_instance(&self, base: &str) -> String {
        let taken: BTreeSet<&str> = self.components.iter().map(|c| c.instance.as_str()).collect();
        if !taken.contains(base) {
            return base.to_string();
        }
        (1..).map(|k| format!("{base}{k}")).find(|n| !taken.contains(n.as_str())).expect("unbounded")
    }

    /// Attaches `comp` so that its port `comp_port` meets `base_port` face
    /// to face. The instance name is derived from the component name.
    pub fn attach(&self, comp: &Component, base_port: &PortRef, comp_port: &str) -> Result<Self, LayoutError> {
        let instance = self.unique_instance(&comp.name);
        self.attach_as(comp, base_port, comp_port, &instance)
    }

    /// [`TrapLayout::attach`] with an explicit instance name.
    pub fn attach_as(
        &self,
        comp: &Component,
        base_port: &PortRef,
        comp_port: &str,
        instance: &str,
    ) -> Result<Self, LayoutError> {
        if self.component(instance).is_some() {
            return Err(LayoutError::DuplicateInstance(instance.to_string()));
        }
        let bp = self.port(base_port).ok_or_else(|| LayoutError::UnknownPort(base_port.to_string()))?;
        if self.is_connected(base_port) {
            return Err(LayoutError::PortInUse(base_port.to_string()));
        }
        let cp = comp
            .port(comp_port)
            .ok_or_else(|| LayoutError::UnknownPort(format!("{}.{}", comp.name, comp_port)))?;
        if !bp.profile_matches(cp) {
            let show = |p: &Port| {
                p.rail_profile.iter().map(|s| format!("{}:{}", s.net, s.width)).collect::<Vec<_>>().join(",")
            };
            return Err(LayoutError::PortMismatch { base: show(&bp), comp: show(cp) });
        }
        let rot = (-bp.direction).angle() - cp.direction.angle();
        let mut rotation_deg = rot.to_degrees().rem_euclid(360.0);
        // Snap to the nearest millidegree-free multiple where it is one.
        let nearest = rotation_deg.round();
        if (rotation_deg - nearest).abs() < 1e-9 {
            rotation_deg = nearest.rem_euclid(360.0);
        }
        let probe = Transform::new(Point::zero(), rotation_deg);
        let moved = probe.apply(cp.position);
        let transform = Transform::new(bp.position - moved, rotation_deg);

        let placed = PlacedComponent { instance: instance.to_string(), component: comp.clone(), transform };
        let mut components = self.components.clone();
        components.push(placed);
        let mut connections = self.connections.clone();
        connections.push((base_port.clone(), PortRef::new(instance, comp_port)));
        let mut out = Self::from_parts(components, connections);

        // Overlap only needs checking between the new electrodes and the rest.
        let first_new = self.electrodes.len();
        for (i, a) in out.electrodes[first_new..].iter().enumerate() {
            for b in &out.electrodes[..first_new] {
                if a.net == b.net {
                    continue;
                }
                let ov = geom::overlap_area(&a.polygon, &b.polygon);
                if ov > OVERLAP_AREA_TOL {
                    return Err(LayoutError::Overlap { a: a.id.clone(), b: b.id.clone(), area: ov });
                }
            }
            let _ = i;
        }
        out.close_coincident_ports();
        out.check()?;
        Ok(out)
    }

    /// Connects any pair of open ports that coincide face to face (closes rings).
    fn close_coincident_ports(&mut self) {
        loop {
            let open = self.open_ports();
            let mut found = None;
            'outer: for i in 0..open.len() {
                for j in (i + 1)..open.len() {
                    let (ra, pa) = &open[i];
                    let (rb, pb) = &open[j];
                    if ra.instance == rb.instance {
                        continue;
                    }
                    if pa.position.dist(pb.position) <= PORT_WIDTH_TOL
                        && (pa.direction + pb.direction).norm() <= 1e-6
                        && pa.profile_matches(pb)
                    {
                        found = Some((ra.clone(), rb.clone()));
                        break 'outer;
                    }
                }
            }
            match found {
                Some(pair) => self.connections.push(pair),
                None => return,
            }
        }
    }

    fn check(&self) -> Result<(), LayoutError> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(LayoutError::Invariant(v))
        }
    }

    /// Every invariant violation in the layout (empty when valid).
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut push = |invariant: &'static str, detail: String| out.push(Violation { invariant, detail });

        for pc in &self.components {
            for p in &pc.component.ports {
                if (p.direction.norm() - 1.0).abs() > 1e-9 {
                    push("port direction unit", format!("{}.{}", pc.instance, p.name));
                }
                if p.rail_profile.iter().any(|s| !(s.width > 0.0)) {
                    push("rail profile widths positive", format!("{}.{}", pc.instance, p.name));
                }
            }
        }

        for e in &self.electrodes {
            let poly = &e.polygon;
            if poly.len() < 3 {
                push("vertex count", format!("{} has {} vertices", e.id, poly.len()));
                continue;
            }
            if poly.iter().any(|p| !p.is_finite()) {
                push("vertices finite", e.id.clone());
                continue;
            }
            let n = poly.len();
            if (0..n).any(|i| poly[i].dist(poly[(i + 1) % n]) < MIN_VERTEX_SPACING) {
                push("vertex spacing", format!("{} has consecutive vertices closer than {MIN_VERTEX_SPACING} µm", e.id));
            }
            if !geom::is_simple(poly) {
                push("polygon simple", e.id.clone());
            } else if geom::signed_area(poly) <= 0.0 {
                push("polygon counterclockwise", e.id.clone());
            }
            match self.nets.get(&e.net) {
                None => push("unknown net", format!("{} references {}", e.id, e.net)),
                Some(&role) if role != e.role => {
                    push("net role", format!("{} is {} but net {} is {}", e.id, e.role, e.net, role))
                }
                _ => {}
            }
        }

        let rf: Vec<&String> = self.nets.iter().filter(|(_, &r)| r == Role::Rf).map(|(n, _)| n).collect();
        if rf.len() != 1 {
            push("single rf net", format!("found {} rf nets", rf.len()));
        }

        // Area overlap between distinct nets, and within a component.
        let boxes: Vec<_> = self.electrodes.iter().map(|e| geom::bbox(&e.polygon)).collect();
        let owner: Vec<&str> =
            self.electrodes.iter().map(|e| e.id.rsplit_once('.').map_or("", |(inst, _)| inst)).collect();
        for i in 0..self.electrodes.len() {
            for j in (i + 1)..self.electrodes.len() {
                let (a, b) = (&self.electrodes[i], &self.electrodes[j]);
                if a.net == b.net && owner[i] != owner[j] {
                    continue;
                }
                let ((alo, ahi), (blo, bhi)) = (boxes[i], boxes[j]);
                if alo.x >= bhi.x || blo.x >= ahi.x || alo.y >= bhi.y || blo.y >= ahi.y {
                    continue;
                }
                let ov = geom::overlap_area(&a.polygon, &b.polygon);
                if ov > OVERLAP_AREA_TOL {
                    push("electrode overlap", format!("{} and {} overlap by {:.3e} µm²", a.id, b.id, ov));
                }
            }
        }
        out
    }
}
