#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use trapforge::pseudo::RfDrive;

mod commands;

/// Surface-electrode ion trap design tools.
#[derive(Debug, Parser)]
#[command(name = "forge", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a layout document; prints one line per violated invariant.
    Validate { layout: PathBuf },
    /// Potential and field on a rectangular grid in a coordinate plane (CSV).
    FieldMap(FieldMapArgs),
    /// Trace the rf null tube from a seed point (CSV: s, x, y, z, phi_pp_eV).
    TraceTube(TraceTubeArgs),
    /// Optimize the rf rail shape of a Y junction.
    OptimizeJunction(OptimizeArgs),
    /// Synthesize a transport waveform between two ports or zones.
    SynthWaveform(SynthArgs),
    /// Convert a heating rate to electric-field noise (or back).
    Heating(HeatingArgs),
    /// Summarize a layout.
    Report {
        layout: PathBuf,
        /// Emit JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Write library components as layout documents.
    #[command(subcommand)]
    Library(LibraryCommand),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Gaps {
    /// Gaps split at their midline between neighbouring electrodes.
    Midline,
    /// Gaps held at 0 V.
    Grounded,
}

#[derive(Debug, Args)]
struct FieldMapArgs {
    layout: PathBuf,
    /// JSON object of net voltages, e.g. {"rf": 1.0, "s.c03": -0.5}; missing nets are 0 V.
    #[arg(long, conflicts_with = "unit")]
    voltages: Option<PathBuf>,
    /// Put 1 V on this net and 0 V elsewhere.
    #[arg(long)]
    unit: Option<String>,
    /// Sampling plane, e.g. `y=0`, `x=120` or `z=40`.
    #[arg(long, default_value = "y=0")]
    plane: String,
    /// Ranges of the two in-plane axes, `a0:a1,b0:b1` in µm.
    #[arg(long, allow_hyphen_values = true)]
    range: String,
    #[arg(long, default_value_t = 1.0)]
    step: f64,
    #[arg(long, value_enum, default_value_t = Gaps::Midline)]
    gaps: Gaps,
    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TraceTubeArgs {
    layout: PathBuf,
    #[arg(long, default_value = "113V,90.7MHz,Mg24")]
    drive: RfDrive,
    /// Seed point `x,y,z` in µm.
    #[arg(long, allow_hyphen_values = true)]
    seed: String,
    /// Initial direction `dx,dy` (in-plane); defaults to the local tube axis.
    #[arg(long, allow_hyphen_values = true)]
    direction: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    step: f64,
    #[arg(long)]
    length: f64,
    #[arg(long, value_enum, default_value_t = Gaps::Midline)]
    gaps: Gaps,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct OptimizeArgs {
    /// Layout holding the starting junction; straight rails when omitted.
    #[arg(long)]
    layout: Option<PathBuf>,
    #[arg(long, default_value = "113V,90.7MHz,Mg24")]
    drive: RfDrive,
    #[arg(long, default_value_t = 5000)]
    max_evals: usize,
    /// Rail widths `left,right` for a straight start, µm.
    #[arg(long, default_value = "40,60")]
    rail_widths: String,
    /// Initial simplex step, µm.
    #[arg(long, default_value_t = 5.0)]
    step: f64,
    /// Restart the simplex after this many evaluations.
    #[arg(long, default_value_t = 500)]
    restart_every: usize,
    /// Optimized junction layout document.
    #[arg(long)]
    out: PathBuf,
    /// Objective trace CSV (defaults to `<out>.trace.csv`).
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    layout: PathBuf,
    /// Start: a port (`instance.port`), a zone (component instance) or `x,y` in µm.
    #[arg(long, allow_hyphen_values = true)]
    from: String,
    /// End: a port, a zone or `x,y`.
    #[arg(long, allow_hyphen_values = true)]
    to: String,
    /// Target axial frequency, Hz.
    #[arg(long, default_value_t = 3.5e6)]
    freq: f64,
    #[arg(long, default_value_t = 10)]
    smooth: usize,
    #[arg(long, default_value = "113V,90.7MHz,Mg24")]
    drive: RfDrive,
    /// Well spacing along the tube, µm.
    #[arg(long, default_value_t = 1.0)]
    step: f64,
    /// Voltage limit, V.
    #[arg(long, default_value_t = 5.0)]
    bound: f64,
    /// Starting guess for the tube height, µm.
    #[arg(long, default_value_t = 40.0)]
    height: f64,
    #[arg(long, value_enum, default_value_t = Gaps::Midline)]
    gaps: Gaps,
    /// Waveform CSV; metadata goes to `<out>.meta.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct HeatingArgs {
    /// Heating rate, phonons/s.
    #[arg(long, required_unless_present = "noise")]
    ndot: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    ndot_err: f64,
    /// Field noise S_E, V²/m²/Hz (computes the heating rate instead).
    #[arg(long, conflicts_with = "ndot")]
    noise: Option<f64>,
    /// Axial frequency, Hz.
    #[arg(long)]
    freq: f64,
    #[arg(long, default_value = "Mg24")]
    ion: String,
    /// Ion-surface distance, µm (reported only).
    #[arg(long)]
    distance: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum LibraryCommand {
    /// Straight five-wire section.
    Straight {
        #[arg(long, default_value = "40,60")]
        rail_widths: String,
        /// Rail-to-rail spacing, µm.
        #[arg(long, default_value_t = 44.0)]
        center_gap: f64,
        #[arg(long, default_value_t = 60.0)]
        segment_length: f64,
        #[arg(long, default_value_t = 10)]
        segments: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Y junction with straight rails.
    Junction {
        #[arg(long, default_value = "40,60")]
        rail_widths: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Hexagonal ring of six junctions with load and experiment zones.
    Ring {
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
