//! Y-junction rf rail shape optimization.
//!
//! The rails are parameterized by normal offsets of control vertices spread
//! over the inner and outer rail edges of one chevron; the other two
//! chevrons are exact 120° rotations. The objective is the largest
//! pseudopotential along the tube from a point out on one leg to the
//! junction center.

mod geometry;

use serde::{Deserialize, Serialize};

use crate::field::{FieldBasis, NetPolygons};
use crate::geom::{self, Point};
use crate::layout::library::RF_NET;
use crate::layout::{Component, Role};
use crate::linalg::Vec3;
use crate::optim::{nelder_mead, OptimError, SimplexConfig};
use crate::pseudo::{Pseudo, RfDrive, TraceOptions, TubeMarcher};

pub use geometry::{leg_dir, rotate_third, Interpolation, JunctionConfig};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum JunctionError {
    #[error("invalid junction configuration: {0}")]
    BadConfig(String),
    #[error("invalid junction geometry: {0}")]
    InvalidGeometry(String),
    #[error(transparent)]
    Optim(#[from] OptimError),
}

/// Junction geometry plus control-vertex offsets (µm, positive away from
/// the rail).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JunctionParam {
    pub config: JunctionConfig,
    pub vertex_offsets: Vec<f64>,
}

impl JunctionParam {
    pub fn rf_polygons(&self) -> Result<[Vec<Point>; 3], JunctionError> {
        self.config.rf_polygons(&self.vertex_offsets, self.config.leg_length)
    }

    pub fn component(&self, name: &str) -> Result<Component, JunctionError> {
        self.config.component(&self.vertex_offsets, name)
    }

    pub fn with_offsets(&self, offsets: &[f64]) -> Self {
        Self { config: self.config.clone(), vertex_offsets: offsets.to_vec() }
    }
}

/// Straight-railed junction: three legs at 120° with zero offsets.
pub fn initial_junction(rail_widths: (f64, f64), gap: f64) -> Result<JunctionParam, JunctionError> {
    let config = JunctionConfig { rail_widths, gap, ..JunctionConfig::default() };
    config.validate()?;
    let n = config.n_params();
    Ok(JunctionParam { config, vertex_offsets: vec![0.0; n] })
}

/// Where the objective traces the tube.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSpec {
    /// Leg to start from (0, 1 or 2).
    pub leg: usize,
    /// Start distance from the center along the leg, µm.
    pub start_distance: f64,
    pub step: f64,
    /// Leg length used for the field model (long legs suppress end effects).
    pub model_leg_length: f64,
    /// Initial guess for the tube height, µm.
    pub height_guess: f64,
}

impl Default for PathSpec {
    fn default() -> Self {
        Self { leg: 0, start_distance: 200.0, step: 1.0, model_leg_length: 1200.0, height_guess: 40.0 }
    }
}

/// rf-only field model of a junction (gaps split at the midline).
pub fn rf_basis(param: &JunctionParam, leg_length: f64) -> Result<FieldBasis<f64>, JunctionError> {
    let polys = param.config.rf_polygons(&param.vertex_offsets, leg_length)?;
    let half_gap = 0.5 * param.config.gap;
    Ok(FieldBasis::from_polygons(vec![NetPolygons {
        name: RF_NET.into(),
        role: Role::Rf,
        polygons: polys.iter().map(|p| geom::offset_polygon(p, half_gap)).collect(),
    }]))
}

/// Φ_pp (eV) along the tube from the leg start to the junction center,
/// as `(arclength, energy)`, ending at the center.
pub fn junction_trace(param: &JunctionParam, drive: &RfDrive, spec: &PathSpec) -> Result<Vec<(f64, f64)>, String> {
    let basis = rf_basis(param, spec.model_leg_length).map_err(|e| e.to_string())?;
    let pp = Pseudo::new(&basis, *drive).map_err(|e| e.to_string())?;
    let u = leg_dir(spec.leg);
    let seed = Vec3::new(u.x * spec.start_distance, u.y * spec.start_distance, spec.height_guess);
    let inward = Vec3::new(-u.x, -u.y, 0.0);
    let opts = TraceOptions::default().towards(inward);
    let mut m = TubeMarcher::new(&pp, seed, spec.step, opts).map_err(|e| e.to_string())?;
    let mut out = vec![(0.0, m.energy())];
    let max_steps = (3.0 * spec.start_distance / spec.step).ceil() as usize;
    for _ in 0..max_steps {
        let p = m.point();
        let along = p.x * u.x + p.y * u.y;
        if along <= 0.5 * spec.step {
            // Close the trace exactly on the symmetry axis.
            let top = crate::pseudo::find_null(&basis, drive, Vec3::new(0.0, 0.0, p.z), &Default::default())
                .map(|n| n.point)
                .unwrap_or(Vec3::new(0.0, 0.0, p.z));
            let center = Vec3::new(0.0, 0.0, top.z);
            let e = pp.energy(center).map_err(|e| e.to_string())?;
            out.push((out.last().unwrap().0 + p.dist(center), e));
            return Ok(out);
        }
        m.advance().map_err(|e| e.to_string())?;
        let s = m.index() as f64 * spec.step;
        out.push((s, m.energy()));
    }
    Err("tube did not reach the junction center".into())
}

/// Largest Φ_pp (eV) along the path; `+inf` for invalid geometry or a lost tube.
pub fn junction_objective(param: &JunctionParam, drive: &RfDrive, spec: &PathSpec) -> f64 {
    if param.vertex_offsets.iter().any(|o| !(o.abs() <= param.config.max_offset)) {
        return f64::INFINITY;
    }
    match junction_trace(param, drive, spec) {
        Ok(trace) => trace.iter().map(|&(_, e)| e).fold(0.0, f64::max),
        Err(_) => f64::INFINITY,
    }
}

/// Result of [`optimize_junction`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JunctionDesign {
    pub param: JunctionParam,
    /// rf polygons at the design leg length.
    pub rf_polygons: Vec<Vec<Point>>,
    /// Bump height, eV.
    pub objective: f64,
    pub initial_objective: f64,
    pub evals: usize,
    /// False when the evaluation budget ran out first.
    pub converged: bool,
    /// Objective value of every evaluation, in order.
    pub evaluations: Vec<f64>,
}

impl JunctionDesign {
    /// Best-so-far objective after each evaluation.
    pub fn best_trace(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.evaluations
            .iter()
            .map(|&f| {
                best = best.min(f);
                best
            })
            .collect()
    }
}

/// Search settings for [`optimize_junction`]: Nelder-Mead restarted from
/// the best point every `restart_every` evaluations with the initial step
/// scaled by `step_decay` (never below `min_step`). `simplex.max_evals` is
/// the total budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JunctionSearch {
    pub simplex: SimplexConfig<f64>,
    pub restart_every: usize,
    pub step_decay: f64,
    pub min_step: f64,
}

impl Default for JunctionSearch {
    fn default() -> Self {
        Self {
            simplex: SimplexConfig::default().with_step(5.0).with_max_evals(5000).with_tolerances(1e-9, 1e-3),
            restart_every: 500,
            step_decay: 0.7,
            min_step: 0.5,
        }
    }
}

impl JunctionSearch {
    pub fn with_max_evals(mut self, n: usize) -> Self {
        self.simplex.max_evals = n;
        self
    }

    fn validate(&self, dim: usize) -> Result<(), JunctionError> {
        self.simplex.validate(dim)?;
        if self.restart_every <= dim + 1 {
            return Err(JunctionError::BadConfig(format!("restart interval must exceed {} evaluations", dim + 1)));
        }
        if !(self.step_decay > 0.0 && self.step_decay <= 1.0) || !(self.min_step > 0.0) {
            return Err(JunctionError::BadConfig("step decay must lie in (0, 1] and min step be positive".into()));
        }
        Ok(())
    }
}

/// Restarted Nelder-Mead over the vertex offsets.
pub fn optimize_junction(
    start: &JunctionParam,
    drive: &RfDrive,
    spec: &PathSpec,
    search: &JunctionSearch,
) -> Result<JunctionDesign, JunctionError> {
    start.config.validate()?;
    search.validate(start.vertex_offsets.len())?;
    let obj = |x: &[f64]| junction_objective(&start.with_offsets(x), drive, spec);
    let budget = search.simplex.max_evals;
    let dim = start.vertex_offsets.len();
    let mut x = start.vertex_offsets.clone();
    let mut f = f64::INFINITY;
    let mut evaluations = Vec::with_capacity(budget);
    let mut steps = search.simplex.initial_step.clone();
    let mut converged = false;
    while evaluations.len() + dim + 1 < budget {
        let mut cfg = search.simplex.clone();
        cfg.initial_step = steps.clone();
        cfg.max_evals = search.restart_every.min(budget - evaluations.len());
        let res = nelder_mead(obj, &x, &cfg)?;
        evaluations.extend_from_slice(&res.evaluations);
        let at_floor = steps.iter().all(|&h| h <= search.min_step);
        let stalled = res.f >= f;
        let done = res.converged() && (at_floor || stalled);
        x = res.x;
        f = res.f;
        if done {
            converged = true;
            break;
        }
        for h in &mut steps {
            *h = (*h * search.step_decay).max(search.min_step);
        }
    }
    if evaluations.is_empty() {
        return Err(JunctionError::BadConfig(format!("budget of {budget} evaluations is below one simplex")));
    }
    let param = start.with_offsets(&x);
    let rf = param.rf_polygons()?;
    Ok(JunctionDesign {
        rf_polygons: rf.to_vec(),
        param,
        objective: f,
        initial_objective: evaluations[0],
        evals: evaluations.len(),
        converged,
        evaluations,
    })
}
