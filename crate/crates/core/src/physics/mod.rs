//! Coulomb potential, reaction potential at interior points, the
//! electrostatic solvation energy and PQR charge files.

mod pqr;

pub use pqr::load_pqr;

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::kernels::{panel_moments, QuadratureRule, SINGULAR_DISTANCE};
use crate::solver::{check_points_inside, BiePhysics, ChargeSet, PanelSolution, Space};
use crate::{Error, Point, Result};

/// `u_c = (1/ε_m) Σ q_k / (4π|r - r_k|)` and `∇u_c · n` at each point.
pub fn coulomb_trace(
    charges: &ChargeSet,
    physics: &BiePhysics,
    points: &[Point],
    normals: &[Point],
) -> Result<(Vec<f64>, Vec<f64>)> {
    if points.len() != normals.len() {
        return Err(Error::InvalidArgument(format!("{} points but {} normals", points.len(), normals.len())));
    }
    let scale = 1.0 / (4.0 * PI * physics.eps_m);
    let mut u = Vec::with_capacity(points.len());
    let mut dudn = Vec::with_capacity(points.len());
    for (p, n) in points.iter().zip(normals) {
        let (mut value, mut deriv) = (0.0, 0.0);
        for (rk, q) in charges.positions().iter().zip(charges.charges()) {
            let d = p - rk;
            let dist = d.norm();
            if dist <= SINGULAR_DISTANCE {
                return Err(Error::Singularity { distance: dist });
            }
            value += q / dist;
            deriv -= q * d.dot(n) / (dist * dist * dist);
        }
        u.push(scale * value);
        dudn.push(scale * deriv);
    }
    Ok((u, dudn))
}

/// `u_r(r) = -∮ u ∂G_L/∂n' + ∮ (∂u/∂n) G_L` at interior targets.
pub fn reaction_potential(solution: &PanelSolution, targets: &[Point]) -> Result<Vec<f64>> {
    let mesh = &solution.mesh;
    check_points_inside(mesh, targets)?;
    let panels = mesh.panels();
    let tris = mesh.triangles();
    let rule = QuadratureRule::seven_point();
    Ok(targets
        .par_iter()
        .map(|x| {
            let mut total = 0.0;
            for (t, p) in panels.iter().enumerate() {
                let m = panel_moments(x, p, 0.0, rule);
                total += match solution.space {
                    Space::P0 => {
                        -solution.u_trace[t] * m.double_laplace_total()
                            + solution.dudn_trace[t] * m.single_laplace_total()
                    }
                    Space::P1 => (0..3)
                        .map(|a| {
                            let v = tris[t][a];
                            -solution.u_trace[v] * m.double_laplace[a] + solution.dudn_trace[v] * m.single_laplace[a]
                        })
                        .sum(),
                };
            }
            total
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnergyResult {
    /// kcal/mol.
    pub dg_solv: f64,
    /// `(1/2) q_k u_r(r_k)` in kcal/mol.
    pub per_charge: Vec<f64>,
    pub num_panels: usize,
    pub gmres_iters: usize,
    pub gmres_residual: f64,
}

impl EnergyResult {
    pub const CSV_HEADER: &'static str = "dG_solv,num_panels,gmres_iters,gmres_residual";

    pub fn csv_row(&self) -> String {
        format!(
            "{:.16e},{},{},{:.16e}",
            self.dg_solv, self.num_panels, self.gmres_iters, self.gmres_residual
        )
    }

    /// `key = value` lines.
    pub fn key_values(&self) -> String {
        let mut s = format!(
            "dG_solv = {:.16e}\nnum_panels = {}\ngmres_iters = {}\ngmres_residual = {:.16e}\n",
            self.dg_solv, self.num_panels, self.gmres_iters, self.gmres_residual
        );
        for (k, e) in self.per_charge.iter().enumerate() {
            s.push_str(&format!("per_charge[{k}] = {e:.16e}\n"));
        }
        s
    }
}

/// `ΔG = energy_unit · (1/2) Σ q_k u_r(r_k)`.
pub fn solvation_energy(solution: &PanelSolution, charges: &ChargeSet, physics: &BiePhysics) -> Result<EnergyResult> {
    let ur = reaction_potential(solution, charges.positions())?;
    let per_charge: Vec<f64> = ur
        .iter()
        .zip(charges.charges())
        .map(|(u, q)| physics.energy_unit * 0.5 * q * u)
        .collect();
    Ok(EnergyResult {
        dg_solv: per_charge.iter().sum(),
        per_charge,
        num_panels: solution.mesh.num_panels(),
        gmres_iters: solution.gmres_iters,
        gmres_residual: solution.gmres_residual,
    })
}
