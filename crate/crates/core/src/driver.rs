//! Adaptive and uniform refinement loops.
//!
//! An adaptive iteration solves the forward problem on the current mesh,
//! solves the adjoint on a refinement of it, estimates the per-panel error,
//! marks the panels carrying the leading share of the estimate, closes the
//! marking and refines. Every solved mesh is kept in the [`History`].

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::estimator::{estimate_with, ErrorMap, EstimatorTag};
use crate::mesh::{close_marking, mark_elements, refine_conforming, refine_flat, write_off, write_panel_csv};
use crate::mesh::{MarkedSet, NearestVertexGrid, SurfaceMesh};
use crate::physics::{solvation_energy, EnergyResult};
use crate::solver::{solve_adjoint, solve_adjoint_conforming, solve_forward, BiePhysics, ChargeSet, SolverOptions};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RefinementMode {
    /// New vertices stay on the parent edges.
    Flat,
    /// New vertices move to the nearest background vertex.
    Conforming,
}

impl fmt::Display for RefinementMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RefinementMode::Flat => "flat",
            RefinementMode::Conforming => "conforming",
        })
    }
}

impl FromStr for RefinementMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "flat" => Ok(RefinementMode::Flat),
            "conforming" => Ok(RefinementMode::Conforming),
            other => Err(Error::InvalidArgument(format!("unknown refinement mode {other:?} (flat | conforming)"))),
        }
    }
}

/// Background surface for conforming refinement.
#[derive(Clone, Debug)]
pub struct Background(pub Arc<NearestVertexGrid>);

impl Background {
    pub fn from_mesh(mesh: &SurfaceMesh) -> Self {
        Background(Arc::new(NearestVertexGrid::from_mesh(mesh)))
    }
}

#[derive(Clone, Debug)]
pub struct AdaptiveConfig {
    pub estimator_tag: EstimatorTag,
    pub marking_fraction: f64,
    pub adjoint_refine_levels: u32,
    pub refinement_mode: RefinementMode,
    pub max_iterations: usize,
    /// Required for conforming refinement. When present the adjoint mesh is
    /// also refined onto it.
    pub background: Option<Background>,
    pub gmres_tol: f64,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        AdaptiveConfig {
            estimator_tag: EstimatorTag::Eu,
            marking_fraction: 0.10,
            adjoint_refine_levels: 1,
            refinement_mode: RefinementMode::Flat,
            max_iterations: 1,
            background: None,
            gmres_tol: SolverOptions::default().gmres_tol,
        }
    }
}

impl AdaptiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.marking_fraction > 0.0 && self.marking_fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "marking fraction {} outside (0, 1]",
                self.marking_fraction
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument("max_iterations must be at least 1".into()));
        }
        if !(self.gmres_tol > 0.0 && self.gmres_tol < 1.0) {
            return Err(Error::InvalidArgument(format!("gmres tolerance {} outside (0, 1)", self.gmres_tol)));
        }
        if self.refinement_mode == RefinementMode::Conforming && self.background.is_none() {
            return Err(Error::InvalidArgument("conforming refinement needs a background mesh".into()));
        }
        Ok(())
    }

    fn solver_options(&self) -> SolverOptions {
        SolverOptions { gmres_tol: self.gmres_tol, ..SolverOptions::default() }
    }
}

/// One solved mesh.
#[derive(Clone, Debug)]
pub struct IterationRecord {
    pub mesh: Arc<SurfaceMesh>,
    pub energy: EnergyResult,
    /// `None` in uniform runs.
    pub errors: Option<ErrorMap>,
    pub wall_time: Duration,
}

#[derive(Clone, Debug, Default)]
pub struct History {
    pub records: Vec<IterationRecord>,
}

impl History {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn energies(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.energy.dg_solv).collect()
    }

    pub fn panel_counts(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.mesh.num_panels()).collect()
    }

    pub const CSV_HEADER: &'static str = "iter,N_panels,dG,signed_E,sum_Ei,gmres_iters,wall_time_s";

    /// Energy table; wall times are written as zero unless `timing`.
    pub fn energy_csv(&self, timing: bool) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for (k, r) in self.records.iter().enumerate() {
            let (signed, sum) = match &r.errors {
                Some(e) => (e.signed_total, e.sum_abs()),
                None => (f64::NAN, f64::NAN),
            };
            let wall = if timing { r.wall_time.as_secs_f64() } else { 0.0 };
            s.push_str(&format!(
                "{k},{},{:.16e},{:.16e},{:.16e},{},{:.16e}\n",
                r.mesh.num_panels(),
                r.energy.dg_solv,
                signed,
                sum,
                r.energy.gmres_iters,
                wall
            ));
        }
        s
    }

    /// Writes `energy.csv`, `mesh_KKK.off` and, for adaptive runs,
    /// `errors_KKK.csv` into `dir`.
    pub fn write_run_dir(&self, dir: impl AsRef<Path>, timing: bool) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (k, r) in self.records.iter().enumerate() {
            write_off(&r.mesh, dir.join(format!("mesh_{k:03}.off")))?;
            if let Some(e) = &r.errors {
                write_panel_csv(&r.mesh, &e.per_panel, dir.join(format!("errors_{k:03}.csv")))?;
            }
        }
        let path = dir.join("energy.csv");
        fs::write(&path, self.energy_csv(timing)).map_err(|e| Error::io(&path, e))
    }
}

/// A loop stopped by an error, with everything recorded before it.
#[derive(Debug)]
pub struct Aborted {
    pub error: Error,
    pub partial: History,
}

impl fmt::Display for Aborted {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (after {} completed iterations)", self.error, self.partial.len())
    }
}

impl std::error::Error for Aborted {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

fn refine(mesh: &SurfaceMesh, plan: &MarkedSet, mode: RefinementMode, background: Option<&Background>) -> Result<SurfaceMesh> {
    match (mode, background) {
        (RefinementMode::Flat, _) => refine_flat(mesh, plan),
        (RefinementMode::Conforming, Some(bg)) => refine_conforming(mesh, plan, &bg.0),
        (RefinementMode::Conforming, None) => Err(Error::InvalidArgument("conforming refinement needs a background mesh".into())),
    }
}

fn adaptive_step(
    mesh: &SurfaceMesh,
    charges: &ChargeSet,
    physics: &BiePhysics,
    config: &AdaptiveConfig,
) -> Result<(IterationRecord, SurfaceMesh)> {
    let start = Instant::now();
    let options = config.solver_options();
    let forward = solve_forward(mesh, physics, charges, &options)?;
    let energy = solvation_energy(&forward, charges, physics)?;
    let levels = config.adjoint_refine_levels;
    let adjoint = match &config.background {
        Some(bg) => solve_adjoint_conforming(mesh, physics, charges, levels, &bg.0, &options)?,
        None => solve_adjoint(mesh, physics, charges, levels, &options)?,
    };
    let errors = estimate_with(config.estimator_tag, &forward, &adjoint, charges, physics)?;
    let marked = mark_elements(&errors.per_panel, config.marking_fraction)?;
    let plan = close_marking(mesh, &marked)?;
    let next = refine(mesh, &plan, config.refinement_mode, config.background.as_ref())?;
    log::info!(
        "adaptive: N = {}, dG = {:.10}, E = {:.3e}, marked {} -> N = {}",
        mesh.num_panels(),
        energy.dg_solv,
        errors.signed_total,
        marked.len(),
        next.num_panels()
    );
    let record = IterationRecord {
        mesh: forward.mesh.clone(),
        energy,
        errors: Some(errors),
        wall_time: start.elapsed(),
    };
    Ok((record, next))
}

/// Runs `config.max_iterations` solve / estimate / mark / refine cycles from
/// `mesh0`. The mesh produced by the last refinement is not solved.
pub fn adaptive_loop(
    mesh0: &SurfaceMesh,
    charges: &ChargeSet,
    physics: &BiePhysics,
    config: &AdaptiveConfig,
) -> std::result::Result<History, Aborted> {
    let mut history = History::default();
    if let Err(error) = config.validate().and_then(|_| physics.validate()) {
        return Err(Aborted { error, partial: history });
    }
    let mut mesh = mesh0.clone().without_parent_map();
    for _ in 0..config.max_iterations {
        match adaptive_step(&mesh, charges, physics, config) {
            Ok((record, next)) => {
                history.records.push(record);
                mesh = next.without_parent_map();
            }
            Err(error) => return Err(Aborted { error, partial: history }),
        }
    }
    Ok(history)
}

/// Solves on `mesh0` and `levels - 1` successive uniform refinements of it.
pub fn uniform_loop(
    mesh0: &SurfaceMesh,
    charges: &ChargeSet,
    physics: &BiePhysics,
    levels: usize,
    mode: RefinementMode,
    background: Option<&Background>,
    options: &SolverOptions,
) -> std::result::Result<History, Aborted> {
    let mut history = History::default();
    let mut mesh = mesh0.clone().without_parent_map();
    for k in 0..levels {
        let start = Instant::now();
        let step = solve_forward(&mesh, physics, charges, options).and_then(|forward| {
            let energy = solvation_energy(&forward, charges, physics)?;
            Ok(IterationRecord { mesh: forward.mesh.clone(), energy, errors: None, wall_time: start.elapsed() })
        });
        let step = step.and_then(|record| {
            log::info!("uniform: N = {}, dG = {:.10}", record.mesh.num_panels(), record.energy.dg_solv);
            history.records.push(record);
            if k + 1 < levels {
                mesh = refine(&mesh, &MarkedSet::all(mesh.num_panels()), mode, background)?.without_parent_map();
            }
            Ok(())
        });
        if let Err(error) = step {
            return Err(Aborted { error, partial: history });
        }
    }
    Ok(history)
}
