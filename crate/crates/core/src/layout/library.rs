//! Component library: straight five-wire sections, load and experiment
//! zones, Y junctions and the hexagonal ring assembly.

use serde::{Deserialize, Serialize};

use super::{Component, Electrode, LayoutError, Port, PortRef, RailStrip, Role, TrapLayout};
use crate::geom::{Point, Transform};
use crate::junction::{JunctionConfig, JunctionParam};

/// Net name of the single rf net.
pub const RF_NET: &str = "rf";

fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<Point> {
    vec![Point::new(x0, y0), Point::new(x1, y0), Point::new(x1, y1), Point::new(x0, y1)]
}

fn positive(name: &str, v: f64) -> Result<(), LayoutError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(LayoutError::NonPositiveDimension(format!("{name} = {v}")))
    }
}

/// Port cross-section of a five-wire channel, left to right looking outward.
pub fn five_wire_profile(rail_left: f64, rail_right: f64, center_gap: f64, gap: f64, outer_width: f64) -> Vec<RailStrip> {
    vec![
        RailStrip::new("ctl", outer_width),
        RailStrip::new("gap", gap),
        RailStrip::new(RF_NET, rail_left),
        RailStrip::new("gap", gap),
        RailStrip::new("ctl", center_gap - 2.0 * gap),
        RailStrip::new("gap", gap),
        RailStrip::new(RF_NET, rail_right),
        RailStrip::new("gap", gap),
        RailStrip::new("ctl", outer_width),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SectionKind {
    Straight,
    Load,
    Experiment,
}

/// Five-wire straight section along local +x, starting at the origin.
///
/// Cross-section (+y first): outer control row, rf rail of width
/// `rail_widths.0`, center control strip, rf rail of width `rail_widths.1`,
/// outer control row. `center_gap` is the rail-to-rail spacing; the center
/// strip is `center_gap - 2 gap` wide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StraightSection {
    pub rail_widths: (f64, f64),
    pub center_gap: f64,
    pub segment_length: f64,
    pub n_segments: usize,
    pub gap: f64,
    pub outer_width: f64,
    pub kind: SectionKind,
}

impl StraightSection {
    pub fn new(rail_widths: (f64, f64), center_gap: f64, segment_length: f64, n_segments: usize) -> Self {
        Self { rail_widths, center_gap, segment_length, n_segments, gap: 5.0, outer_width: 150.0, kind: SectionKind::Straight }
    }

    pub fn with_gap(mut self, gap: f64) -> Self {
        self.gap = gap;
        self
    }

    pub fn with_outer_width(mut self, w: f64) -> Self {
        self.outer_width = w;
        self
    }

    pub fn with_kind(mut self, kind: SectionKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn length(&self) -> f64 {
        self.segment_length * self.n_segments as f64
    }

    pub fn build(&self) -> Result<Component, LayoutError> {
        positive("rail width", self.rail_widths.0)?;
        positive("rail width", self.rail_widths.1)?;
        positive("center gap", self.center_gap)?;
        positive("segment length", self.segment_length)?;
        positive("gap", self.gap)?;
        positive("outer width", self.outer_width)?;
        if self.n_segments == 0 {
            return Err(LayoutError::NonPositiveDimension("n_segments = 0".into()));
        }
        positive("center strip width", self.center_gap - 2.0 * self.gap)?;
        positive("segment length minus gap", self.segment_length - self.gap)?;

        let (wl, wr) = self.rail_widths;
        let (g, a, wo) = (self.gap, 0.5 * self.center_gap, self.outer_width);
        let len = self.length();
        let mut electrodes = vec![
            Electrode::new("rf_l", Role::Rf, RF_NET, rect(0.0, a, len, a + wl)),
            Electrode::new("rf_r", Role::Rf, RF_NET, rect(0.0, -a - wr, len, -a)),
        ];
        let rows = [
            ("c", -a + g, a - g),
            ("l", a + wl + g, a + wl + g + wo),
            ("r", -a - wr - g - wo, -a - wr - g),
        ];
        let center_pitch = match self.kind {
            SectionKind::Experiment => 2,
            _ => 1,
        };
        for (prefix, y0, y1) in rows {
            let sub = if prefix == "c" { center_pitch } else { 1 };
            let pitch = self.segment_length / sub as f64;
            for k in 0..self.n_segments * sub {
                let x0 = k as f64 * pitch + 0.5 * g;
                let x1 = (k + 1) as f64 * pitch - 0.5 * g;
                let id = format!("{prefix}{k:02}");
                electrodes.push(Electrode::new(id.clone(), Role::Control, id, rect(x0, y0, x1, y1)));
            }
        }

        let east = five_wire_profile(wl, wr, self.center_gap, g, wo);
        let mut west = east.clone();
        west.reverse();
        let mut ports = vec![Port {
            name: "east".into(),
            position: Point::new(len, 0.0),
            direction: Point::new(1.0, 0.0),
            rail_profile: east,
        }];
        if self.kind != SectionKind::Load {
            ports.insert(
                0,
                Port { name: "west".into(), position: Point::zero(), direction: Point::new(-1.0, 0.0), rail_profile: west },
            );
        }
        let kind = match self.kind {
            SectionKind::Straight => "straight",
            SectionKind::Load => "load",
            SectionKind::Experiment => "experiment",
        };
        Ok(Component {
            name: kind.into(),
            kind: kind.into(),
            gap: g,
            electrodes,
            ports,
            params: serde_json::to_value(self).ok(),
        })
    }
}

/// `make_straight_section` with default gap (5 µm) and outer width.
pub fn make_straight_section(
    rail_widths: (f64, f64),
    center_gap: f64,
    segment_length: f64,
    n_segments: usize,
) -> Result<Component, LayoutError> {
    StraightSection::new(rail_widths, center_gap, segment_length, n_segments).build()
}

/// Parameters for the hexagonal ring of six Y junctions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HexRingSpec {
    pub junction: JunctionConfig,
    /// Junction offsets (zero for straight rails).
    pub vertex_offsets: Vec<f64>,
    pub segment_length: f64,
    /// Segments in each plain edge section.
    pub edge_segments: usize,
    /// Segments in each experiment zone.
    pub experiment_segments: usize,
    /// Segments in each load zone.
    pub load_segments: usize,
    /// Ring edges (0..6) that carry experiment zones.
    pub experiment_edges: [usize; 2],
    /// Ring vertices (0..6) whose outward legs carry load zones.
    pub load_vertices: [usize; 2],
}

impl Default for HexRingSpec {
    fn default() -> Self {
        let junction = JunctionConfig::default();
        let n = junction.n_params();
        Self {
            junction,
            vertex_offsets: vec![0.0; n],
            segment_length: 60.0,
            edge_segments: 5,
            experiment_segments: 6,
            load_segments: 6,
            experiment_edges: [1, 4],
            load_vertices: [0, 3],
        }
    }
}

impl HexRingSpec {
    fn section(&self, n: usize, kind: SectionKind, widths: (f64, f64)) -> Result<Component, LayoutError> {
        let j = &self.junction;
        StraightSection::new(widths, j.center_gap, self.segment_length, n)
            .with_gap(j.gap)
            .with_outer_width(j.outer_width)
            .with_kind(kind)
            .build()
    }

    /// Assembles the ring: junctions alternate chirality so every edge
    /// section meets rail widths consistently; the last edge closes onto
    /// the first junction automatically.
    pub fn build(&self) -> Result<TrapLayout, LayoutError> {
        let param = JunctionParam { config: self.junction.clone(), vertex_offsets: self.vertex_offsets.clone() };
        let junction = param.component("junction").map_err(|e| LayoutError::NonPositiveDimension(e.to_string()))?;
        let mirrored = junction.mirrored("junction_m");
        let widths = self.junction.rail_widths;

        let mut layout = TrapLayout::single(junction.clone(), "j0", Transform::IDENTITY)?;
        // Travel direction leaving vertex 0 along its first leg.
        let mut exit = PortRef::new("j0", "leg0");
        // The ring turns counterclockwise by 60° at every vertex, so j0 is
        // re-entered through the leg at 120°.
        let mut outward = vec![PortRef::new("j0", "leg2")];
        let first_entry = PortRef::new("j0", "leg1");
        for edge in 0..6 {
            let (n, kind) = if self.experiment_edges.contains(&edge) {
                (self.experiment_segments, SectionKind::Experiment)
            } else {
                (self.edge_segments, SectionKind::Straight)
            };
            let sec = self.section(n, kind, widths)?;
            let inst = format!("e{edge}");
            let base = layout.port(&exit).ok_or_else(|| LayoutError::UnknownPort(exit.to_string()))?;
            let (near, far) = if base.profile_matches(sec.port("west").expect("west port")) {
                ("west", "east")
            } else {
                ("east", "west")
            };
            layout = layout.attach_as(&sec, &exit, near, &inst)?;
            if edge == 5 {
                break;
            }
            let travel = layout.port(&PortRef::new(inst.clone(), far)).expect("placed").direction;
            let next = if edge % 2 == 0 { &mirrored } else { &junction };
            let vi = format!("j{}", edge + 1);
            let far_ref = PortRef::new(inst.clone(), far);
            let entry = ["leg0", "leg1", "leg2"]
                .into_iter()
                .find(|l| layout.port(&far_ref).is_some_and(|p| p.profile_matches(next.port(l).expect("leg"))))
                .ok_or_else(|| LayoutError::UnknownPort(format!("{vi}: no matching leg")))?;
            layout = layout.attach_as(next, &far_ref, entry, &vi)?;
            let turn = travel.rotated(std::f64::consts::FRAC_PI_3);
            let mut exit_leg = None;
            for leg in ["leg0", "leg1", "leg2"] {
                if leg == entry {
                    continue;
                }
                let p = layout.port(&PortRef::new(vi.clone(), leg)).expect("leg");
                if (p.direction - turn).norm() < 1e-6 {
                    exit_leg = Some(leg);
                } else {
                    outward.push(PortRef::new(vi.clone(), leg));
                }
            }
            exit = PortRef::new(vi.clone(), exit_leg.ok_or_else(|| LayoutError::UnknownPort(format!("{vi}: no exit leg")))?);
        }
        if layout.open_ports().iter().any(|(r, _)| *r == first_entry) {
            return Err(LayoutError::UnknownPort("ring did not close".into()));
        }

        for (k, &v) in self.load_vertices.iter().enumerate() {
            let port = outward[v % outward.len()].clone();
            let base = layout.port(&port).expect("outward leg");
            let mut zone = self.section(self.load_segments, SectionKind::Load, widths)?;
            if !base.profile_matches(zone.port("east").expect("east")) {
                zone = self.section(self.load_segments, SectionKind::Load, (widths.1, widths.0))?;
            }
            layout = layout.attach_as(&zone, &port, "east", &format!("load{k}"))?;
        }
        Ok(layout)
    }
}

/// The default hexagonal ring with straight-railed junctions.
pub fn hexagon_ring() -> Result<TrapLayout, LayoutError> {
    HexRingSpec::default().build()
}
