use std::collections::HashMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use trapforge::analysis::{heating_to_noise, noise_to_heating, report, HeatingMeasurement};
use trapforge::field::{FieldBasis, GapPolicy};
use trapforge::geom::{self, Point, Transform};
use trapforge::junction::{initial_junction, optimize_junction, JunctionParam, JunctionSearch, PathSpec};
use trapforge::layout::{load_layout, save_layout};
use trapforge::layout::library::{hexagon_ring, make_straight_section};
use trapforge::linalg::Vec3;
use trapforge::pseudo::{trace_between, trace_tube, Pseudo, TraceOptions};
use trapforge::waveform::{format_sig, smooth, synth_transport, verify_waveform, WellSpec};
use trapforge::{Ion, LayoutError, PortRef, TrapLayout};

use crate::{Command, FieldMapArgs, Gaps, HeatingArgs, LibraryCommand, OptimizeArgs, SynthArgs, TraceTubeArgs};

pub fn run(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Validate { layout } => validate(&layout),
        Command::FieldMap(a) => field_map(a).map(|_| ExitCode::SUCCESS),
        Command::TraceTube(a) => trace(a).map(|_| ExitCode::SUCCESS),
        Command::OptimizeJunction(a) => optimize(a).map(|_| ExitCode::SUCCESS),
        Command::SynthWaveform(a) => synth(a).map(|_| ExitCode::SUCCESS),
        Command::Heating(a) => heating(a).map(|_| ExitCode::SUCCESS),
        Command::Report { layout, json } => layout_report(&layout, json).map(|_| ExitCode::SUCCESS),
        Command::Library(c) => library(c).map(|_| ExitCode::SUCCESS),
    }
}

fn read_layout(path: &Path) -> Result<TrapLayout> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    load_layout(&bytes).with_context(|| format!("loading {}", path.display()))
}

fn write_layout(path: &Path, layout: &TrapLayout) -> Result<()> {
    fs::write(path, save_layout(layout)).with_context(|| format!("writing {}", path.display()))
}

fn policy(g: Gaps) -> GapPolicy {
    match g {
        Gaps::Midline => GapPolicy::MidlineSplit,
        Gaps::Grounded => GapPolicy::GroundedGaps,
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(io::BufWriter::new(io::stdout().lock())),
    })
}

fn floats(s: &str, n: usize, what: &str) -> Result<Vec<f64>> {
    let v = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .with_context(|| format!("{what}: expected {n} comma-separated numbers, got `{s}`"))?;
    if v.len() != n {
        bail!("{what}: expected {n} comma-separated numbers, got `{s}`");
    }
    Ok(v)
}

fn pair(s: &str, what: &str) -> Result<(f64, f64)> {
    let v = floats(s, 2, what)?;
    Ok((v[0], v[1]))
}

/// Nine significant digits without trailing zeros.
fn num(v: f64) -> String {
    let s = format_sig(v, 9);
    let (mantissa, exp) = match s.find('e') {
        Some(i) => s.split_at(i),
        None => (s.as_str(), ""),
    };
    if !mantissa.contains('.') {
        return s;
    }
    let m = mantissa.trim_end_matches('0').trim_end_matches('.');
    format!("{m}{exp}")
}

fn validate(path: &Path) -> Result<ExitCode> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    match load_layout(&bytes) {
        Ok(layout) => {
            println!(
                "ok: {} components, {} electrodes, {} nets",
                layout.components().len(),
                layout.electrodes().len(),
                layout.nets().len()
            );
            Ok(ExitCode::SUCCESS)
        }
        Err(LayoutError::Invariant(violations)) => {
            for v in violations {
                println!("{v}");
            }
            Ok(ExitCode::FAILURE)
        }
        Err(LayoutError::Schema { line, column, message }) => {
            println!("{}:{line}:{column}: {message}", path.display());
            Ok(ExitCode::FAILURE)
        }
        Err(e) => {
            println!("{e}");
            Ok(ExitCode::FAILURE)
        }
    }
}

fn field_map(a: FieldMapArgs) -> Result<()> {
    let layout = read_layout(&a.layout)?;
    let basis: FieldBasis<f64> = FieldBasis::unit_basis(&layout, policy(a.gaps));
    let mut volts: HashMap<String, f64> = match (&a.voltages, &a.unit) {
        (Some(p), _) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("{}: expected a JSON object of net voltages", p.display()))?
        }
        (None, Some(net)) => HashMap::from([(net.clone(), 1.0)]),
        (None, None) => bail!("give --voltages or --unit"),
    };
    volts.retain(|_, v| *v != 0.0);
    let v = basis.voltages(&volts)?;

    let (axis, value) = a.plane.split_once('=').ok_or_else(|| anyhow!("plane must look like `y=0`"))?;
    let value: f64 = value.trim().parse().with_context(|| format!("plane offset `{value}`"))?;
    let (fixed, free): (usize, [usize; 2]) = match axis.trim() {
        "x" => (0, [1, 2]),
        "y" => (1, [0, 2]),
        "z" => (2, [0, 1]),
        other => bail!("plane axis must be x, y or z, got `{other}`"),
    };
    let (ra, rb) = a.range.split_once(',').ok_or_else(|| anyhow!("range must look like `-100:100,5:120`"))?;
    let span = |r: &str| -> Result<(f64, f64)> {
        let (lo, hi) = r.split_once(':').ok_or_else(|| anyhow!("range `{r}` must look like `lo:hi`"))?;
        Ok((lo.trim().parse()?, hi.trim().parse()?))
    };
    let spans = [span(ra)?, span(rb)?];
    if !(a.step > 0.0) || spans.iter().any(|(lo, hi)| !(hi >= lo)) {
        bail!("step must be positive and ranges increasing");
    }
    let names = ["x", "y", "z"];
    let mut w = csv::Writer::from_writer(output(a.out.as_deref())?);
    w.write_record([names[free[0]], names[free[1]], "potential", "Ex", "Ey", "Ez"])?;
    let count = |(lo, hi): (f64, f64)| ((hi - lo) / a.step + 1e-9).floor() as usize + 1;
    for i in 0..count(spans[0]) {
        for j in 0..count(spans[1]) {
            let mut r = [0.0; 3];
            r[fixed] = value;
            r[free[0]] = spans[0].0 + a.step * i as f64;
            r[free[1]] = spans[1].0 + a.step * j as f64;
            let p = Vec3::new(r[0], r[1], r[2]);
            if p.z <= 0.0 {
                continue;
            }
            let s = basis.evaluate(&v, p)?;
            w.write_record([
                num(r[free[0]]),
                num(r[free[1]]),
                num(s.potential),
                num(s.field.x),
                num(s.field.y),
                num(s.field.z),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn trace(a: TraceTubeArgs) -> Result<()> {
    let layout = read_layout(&a.layout)?;
    let basis: FieldBasis<f64> = FieldBasis::unit_basis(&layout, policy(a.gaps));
    let pp = Pseudo::new(&basis, a.drive)?;
    let s = floats(&a.seed, 3, "--seed")?;
    let mut opts = TraceOptions::default();
    if let Some(d) = &a.direction {
        let (dx, dy) = pair(d, "--direction")?;
        opts = opts.towards(Vec3::new(dx, dy, 0.0).normalized());
    }
    let path = trace_tube(&pp, Vec3::new(s[0], s[1], s[2]), a.step, a.length, &opts)?;
    let mut w = csv::Writer::from_writer(output(a.out.as_deref())?);
    w.write_record(["s", "x", "y", "z", "phi_pp_eV"])?;
    for (i, p) in path.points.iter().enumerate() {
        w.write_record([num(path.arclength(i)), num(p.x), num(p.y), num(p.z), num(path.pseudopotential[i])])?;
    }
    w.flush()?;
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn starting_junction(a: &OptimizeArgs) -> Result<JunctionParam> {
    if let Some(p) = &a.layout {
        let layout = read_layout(p)?;
        for c in layout.components() {
            if c.component.kind == "junction" {
                if let Some(params) = &c.component.params {
                    return serde_json::from_value(params.clone())
                        .with_context(|| format!("junction parameters of {}", c.instance));
                }
            }
        }
        bail!("{} contains no junction with stored parameters", p.display());
    }
    Ok(initial_junction(pair(&a.rail_widths, "--rail-widths")?, 5.0)?)
}

fn optimize(a: OptimizeArgs) -> Result<()> {
    let start = starting_junction(&a)?;
    let mut search = JunctionSearch { restart_every: a.restart_every, ..JunctionSearch::default() }.with_max_evals(a.max_evals);
    search.simplex.initial_step = vec![a.step];
    let design = optimize_junction(&start, &a.drive, &PathSpec::default(), &search)?;
    let component = design.param.component("junction")?;
    write_layout(&a.out, &TrapLayout::single(component, "j", Transform::IDENTITY)?)?;
    let trace_path = a.trace.clone().unwrap_or_else(|| with_suffix(&a.out, ".trace.csv"));
    let mut w = csv::Writer::from_path(&trace_path).with_context(|| format!("creating {}", trace_path.display()))?;
    w.write_record(["eval", "objective_eV", "best_eV"])?;
    for (i, (f, b)) in design.evaluations.iter().zip(design.best_trace()).enumerate() {
        w.write_record([i.to_string(), num(*f), num(b)])?;
    }
    w.flush()?;
    println!("initial bump: {} eV", num(design.initial_objective));
    println!("final bump:   {} eV", num(design.objective));
    println!("reduction:    {:.2}x", design.initial_objective / design.objective);
    println!("evaluations:  {}{}", design.evals, if design.converged { "" } else { " (budget exhausted)" });
    Ok(())
}

/// In-plane location of a port (`instance.port`), a zone (instance name)
/// or an explicit `x,y`.
fn locate(layout: &TrapLayout, what: &str) -> Result<Point> {
    if let Ok((x, y)) = pair(what, "point") {
        return Ok(Point::new(x, y));
    }
    if let Some(pc) = layout.component(what) {
        let prefix = format!("{}.", pc.instance);
        let (mut lo, mut hi) = (Point::new(f64::INFINITY, f64::INFINITY), Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
        for e in layout.electrodes().iter().filter(|e| e.id.starts_with(&prefix)) {
            let (a, b) = geom::bbox(&e.polygon);
            lo = Point::new(lo.x.min(a.x), lo.y.min(a.y));
            hi = Point::new(hi.x.max(b.x), hi.y.max(b.y));
        }
        if lo.x.is_finite() {
            return Ok((lo + hi) * 0.5);
        }
    }
    let r: PortRef = what.parse().map_err(|e: String| anyhow!("`{what}` is neither a zone nor a port: {e}"))?;
    layout.port(&r).map(|p| p.position).ok_or_else(|| anyhow!("no zone or port named `{what}`"))
}

fn synth(a: SynthArgs) -> Result<()> {
    let layout = read_layout(&a.layout)?;
    let basis: FieldBasis<f64> = FieldBasis::unit_basis(&layout, policy(a.gaps));
    let pp = Pseudo::new(&basis, a.drive)?;
    let from = locate(&layout, &a.from)?;
    let to = locate(&layout, &a.to)?;
    let path = trace_between(
        &pp,
        Vec3::new(from.x, from.y, a.height),
        Vec3::new(to.x, to.y, a.height),
        a.step,
        &TraceOptions::default(),
    )?;
    let template = WellSpec { voltage_bound: a.bound, ..WellSpec::new(path.points[0], path.frames[0].tangent, a.freq) };
    let raw = synth_transport(&basis, &a.drive, &path, &template)?;
    let wf = smooth(&raw, a.smooth);
    let check = verify_waveform(&basis, &a.drive, &wf, &path, &Default::default())?;
    let file = fs::File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    wf.write_csv(io::BufWriter::new(file))?;
    let meta_path = with_suffix(&a.out, ".meta.json");
    let sidecar = serde_json::json!({ "waveform": wf.meta, "verification": check });
    fs::write(&meta_path, serde_json::to_string_pretty(&sidecar)? + "\n")
        .with_context(|| format!("writing {}", meta_path.display()))?;
    println!("frames:           {}", wf.len());
    println!("nets:             {}", wf.nets.len());
    println!("max |V|:          {} V", num(wf.max_abs()));
    println!("max displacement: {} µm", num(check.max_displacement));
    println!("max field:        {} V/m", num(check.max_residual_field));
    if !check.flagged.is_empty() {
        println!("flagged frames:   {}", check.flagged.len());
    }
    Ok(())
}

fn heating(a: HeatingArgs) -> Result<()> {
    let ion = Ion::parse(&a.ion).ok_or_else(|| anyhow!("unknown ion `{}`", a.ion))?;
    if !(a.freq > 0.0) {
        bail!("frequency must be positive");
    }
    if let Some(s_e) = a.noise {
        println!("ndot = {} phonons/s", num(noise_to_heating(s_e, a.freq, &ion)));
        return Ok(());
    }
    let n_dot = a.ndot.expect("clap enforces --ndot or --noise");
    let m = HeatingMeasurement { n_dot, n_dot_err: a.ndot_err, axial_freq: a.freq, ion_surface_distance: a.distance.unwrap_or(f64::NAN), ion };
    let s = heating_to_noise(&m);
    println!("S_E = {} V^2 m^-2 Hz^-1", s.concise());
    println!("S_E = {} +/- {} V^2 m^-2 Hz^-1", num(s.value), num(s.sigma));
    println!("omega S_E = {} V^2 m^-2", num(s.value * 2.0 * std::f64::consts::PI * a.freq));
    if let Some(d) = a.distance {
        println!("ion-surface distance = {d} um");
    }
    Ok(())
}

fn layout_report(path: &Path, json: bool) -> Result<()> {
    let r = report(&read_layout(path)?);
    if json {
        println!("{}", serde_json::to_string_pretty(&r)?);
        return Ok(());
    }
    println!("components: {}", r.components);
    for (kind, n) in &r.components_by_kind {
        println!("  {kind}: {n}");
    }
    println!("connections: {}", r.connections);
    println!("electrodes: {}", r.electrodes);
    println!("nets: {} ({} control)", r.nets, r.control_nets);
    println!("rf electrodes: {}", r.rf_electrodes);
    println!("rf area: {} um^2", num(r.rf_area));
    println!("total area: {} um^2", num(r.total_area));
    let [x0, y0, x1, y1] = r.extent;
    println!("extent: [{}, {}] x [{}, {}] um", num(x0), num(x1), num(y0), num(y1));
    println!("open ports: {}", if r.open_ports.is_empty() { "none".to_string() } else { r.open_ports.join(", ") });
    Ok(())
}

fn library(c: LibraryCommand) -> Result<()> {
    let (layout, out) = match c {
        LibraryCommand::Straight { rail_widths, center_gap, segment_length, segments, out } => {
            let comp = make_straight_section(pair(&rail_widths, "--rail-widths")?, center_gap, segment_length, segments)?;
            (TrapLayout::single(comp, "s", Transform::IDENTITY)?, out)
        }
        LibraryCommand::Junction { rail_widths, out } => {
            let p = initial_junction(pair(&rail_widths, "--rail-widths")?, 5.0)?;
            (TrapLayout::single(p.component("junction")?, "j", Transform::IDENTITY)?, out)
        }
        LibraryCommand::Ring { out } => (hexagon_ring()?, out),
    };
    write_layout(&out, &layout)?;
    println!("wrote {} ({} electrodes)", out.display(), layout.electrodes().len());
    Ok(())
}
