//! Adjoint-weighted surface estimates of the error in the solvation energy.
//!
//! With `U, ∂U/∂n` the piecewise-constant forward traces and `φ, ∂φ/∂n` the
//! piecewise-linear adjoint traces on a refinement of the same mesh, the
//! per-panel integrands are
//!
//! ```text
//! E_φ: (ε_m/2)[φ_n u_c - φ u_c,n] + (ε_m/2)[φ_n U_r - φ U_r,n],   U_r = U - u_c
//! E_u: (ε_m/2)[φ_n u_c - φ u_c,n] - (ε_m/2)[u_c U_n - u_c,n U]
//! ```
//!
//! integrated with the 3-point rule over each fine descendant of a panel.
//! When the adjoint lives on a surface-conforming refinement, the brackets
//! containing forward traces are integrated over the flat descendants, which
//! tile the forward panel exactly.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;

use crate::kernels::QuadratureRule;
use crate::mesh::SurfaceMesh;
use crate::physics::coulomb_trace;
use crate::solver::{BiePhysics, ChargeSet, PanelSolution, Space};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EstimatorTag {
    Ephi,
    Eu,
}

impl fmt::Display for EstimatorTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EstimatorTag::Ephi => "Ephi",
            EstimatorTag::Eu => "Eu",
        })
    }
}

impl FromStr for EstimatorTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "").as_str() {
            "ephi" => Ok(EstimatorTag::Ephi),
            "eu" => Ok(EstimatorTag::Eu),
            _ => Err(Error::InvalidArgument(format!("unknown estimator {s:?} (expected Ephi or Eu)"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ErrorMap {
    pub tag: EstimatorTag,
    /// `|Σ over descendants|` per coarse panel, kcal/mol.
    pub per_panel: Vec<f64>,
    /// Per-panel values before the absolute value, kcal/mol.
    pub signed_per_panel: Vec<f64>,
    /// Signed surface integral, kcal/mol.
    pub signed_total: f64,
    pub mesh: Arc<SurfaceMesh>,
}

impl ErrorMap {
    pub fn sum_abs(&self) -> f64 {
        self.per_panel.iter().sum()
    }
}

/// Signed contribution of every fine triangle, with its coarse parent.
fn fine_contributions(
    tag: EstimatorTag,
    forward: &PanelSolution,
    adjoint: &PanelSolution,
    charges: &ChargeSet,
    physics: &BiePhysics,
) -> Result<(Vec<usize>, Vec<f64>)> {
    if forward.space != Space::P0 || adjoint.space != Space::P1 {
        return Err(Error::InvalidArgument("estimators need a P0 forward and a P1 adjoint solution".into()));
    }
    let coarse = &forward.mesh;
    let fine = &adjoint.mesh;
    let parents = fine
        .parent_map()
        .ok_or_else(|| Error::InvalidArgument("adjoint mesh carries no parent map".into()))?;
    if parents.iter().any(|&p| p >= coarse.num_panels()) {
        return Err(Error::InvalidArgument("adjoint parent map does not match the forward mesh".into()));
    }

    let flat = adjoint.flat_mesh.as_deref().unwrap_or(fine);
    if flat.triangles() != fine.triangles() {
        return Err(Error::InvalidArgument("flat adjoint mesh does not match the adjoint connectivity".into()));
    }

    let rule = QuadratureRule::three_point();
    let panels = fine.panels();
    let flat_panels = flat.panels();
    let coulomb_at = |panels: &[crate::mesh::Panel]| {
        let mut points = Vec::with_capacity(panels.len() * rule.len());
        let mut normals = Vec::with_capacity(points.capacity());
        for p in panels {
            for b in &rule.points {
                points.push(p.point_at(b));
                normals.push(p.normal);
            }
        }
        coulomb_trace(charges, physics, &points, &normals)
    };
    let (uc, ucn) = coulomb_at(&panels)?;
    let (uc_flat, ucn_flat) = if adjoint.flat_mesh.is_some() { coulomb_at(&flat_panels)? } else { (uc.clone(), ucn.clone()) };

    let half_eps = 0.5 * physics.eps_m;
    let tris = fine.triangles();
    let values: Vec<f64> = (0..panels.len())
        .into_par_iter()
        .map(|t| {
            let parent = parents[t];
            let (u, un) = (forward.u_trace[parent], forward.dudn_trace[parent]);
            let (mut on_adjoint, mut on_flat) = (0.0, 0.0);
            for (q, (b, w)) in rule.points.iter().zip(&rule.weights).enumerate() {
                let k = t * rule.len() + q;
                let (c, cn) = (uc[k], ucn[k]);
                let phi: f64 = (0..3).map(|a| b[a] * adjoint.u_trace[tris[t][a]]).sum();
                let phin: f64 = (0..3).map(|a| b[a] * adjoint.dudn_trace[tris[t][a]]).sum();
                on_adjoint += w * half_eps * (phin * c - phi * cn);
                // brackets with forward traces live on the forward geometry
                match tag {
                    EstimatorTag::Ephi => on_flat += w * half_eps * (phin * (u - uc_flat[k]) - phi * (un - ucn_flat[k])),
                    EstimatorTag::Eu => on_flat -= w * half_eps * (uc_flat[k] * un - ucn_flat[k] * u),
                }
            }
            (on_adjoint * panels[t].area + on_flat * flat_panels[t].area) * physics.energy_unit
        })
        .collect();
    Ok((parents.to_vec(), values))
}

fn estimate(
    tag: EstimatorTag,
    forward: &PanelSolution,
    adjoint: &PanelSolution,
    charges: &ChargeSet,
    physics: &BiePhysics,
) -> Result<ErrorMap> {
    let (parents, values) = fine_contributions(tag, forward, adjoint, charges, physics)?;
    let mut signed = vec![0.0; forward.mesh.num_panels()];
    for (&p, v) in parents.iter().zip(&values) {
        signed[p] += v;
    }
    Ok(ErrorMap {
        tag,
        per_panel: signed.iter().map(|v| v.abs()).collect(),
        signed_total: signed.iter().sum(),
        signed_per_panel: signed,
        mesh: forward.mesh.clone(),
    })
}

pub fn estimate_ephi(
    forward: &PanelSolution,
    adjoint: &PanelSolution,
    charges: &ChargeSet,
    physics: &BiePhysics,
) -> Result<ErrorMap> {
    estimate(EstimatorTag::Ephi, forward, adjoint, charges, physics)
}

pub fn estimate_eu(
    forward: &PanelSolution,
    adjoint: &PanelSolution,
    charges: &ChargeSet,
    physics: &BiePhysics,
) -> Result<ErrorMap> {
    estimate(EstimatorTag::Eu, forward, adjoint, charges, physics)
}

pub fn estimate_with(
    tag: EstimatorTag,
    forward: &PanelSolution,
    adjoint: &PanelSolution,
    charges: &ChargeSet,
    physics: &BiePhysics,
) -> Result<ErrorMap> {
    estimate(tag, forward, adjoint, charges, physics)
}

/// `γ_eff = E / (ΔG_exact - ΔĜ)`.
pub fn effectivity(estimate: f64, dg_numeric: f64, dg_exact: f64) -> Result<f64> {
    let err = dg_exact - dg_numeric;
    if err == 0.0 {
        return Err(Error::Undefined("numerical energy equals the exact value".into()));
    }
    Ok(estimate / err)
}

/// Signed total as one flat sum over fine triangles.
pub fn flat_signed_total(
    tag: EstimatorTag,
    forward: &PanelSolution,
    adjoint: &PanelSolution,
    charges: &ChargeSet,
    physics: &BiePhysics,
) -> Result<f64> {
    fine_contributions(tag, forward, adjoint, charges, physics).map(|(_, v)| v.iter().sum())
}
