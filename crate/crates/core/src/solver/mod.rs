//! Assembly and solution of the coupled boundary-integral system for the
//! interior potential trace `u` and its normal derivative `v`:
//!
//! ```text
//! (c   + K_L) u -            V_L v = u_c
//! (1-c - K_Y) u + (ε_m/ε_w)  V_Y v = 0
//! ```
//!
//! `c` is the interior jump coefficient: 1/2 at panel centroids (P0) and the
//! discrete solid-angle fraction `-Σ_j K_L[i][j]` at mesh vertices (P1).

mod gmres;

pub use gmres::{gmres, DenseMatrix, GmresOutcome, LinearOperator};

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;

use crate::kernels::{panel_moments, singular_moments, PanelMoments, QuadratureRule};
use crate::mesh::{refine_conforming, refine_uniform, MarkedSet, NearestVertexGrid, SurfaceMesh};
use crate::physics::coulomb_trace;
use crate::{Error, Point, Result};

/// kcal·mol⁻¹·Å·e⁻² per unit of `q²/(4π ε_0 Å)`.
pub const COULOMB_KCAL: f64 = 332.0636817823835;

/// Converts `Σ q u` in the 1/(4π) convention to kcal/mol.
pub const ENERGY_UNIT: f64 = 4.0 * PI * COULOMB_KCAL;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BiePhysics {
    pub eps_m: f64,
    pub eps_w: f64,
    /// Inverse Debye length (Å⁻¹).
    pub kappa: f64,
    pub energy_unit: f64,
}

impl Default for BiePhysics {
    fn default() -> Self {
        BiePhysics { eps_m: 4.0, eps_w: 80.0, kappa: 0.125, energy_unit: ENERGY_UNIT }
    }
}

impl BiePhysics {
    pub fn new(eps_m: f64, eps_w: f64, kappa: f64) -> Result<Self> {
        let p = BiePhysics { eps_m, eps_w, kappa, energy_unit: ENERGY_UNIT };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.eps_m > 0.0
            && self.eps_w > 0.0
            && self.kappa >= 0.0
            && self.energy_unit.is_finite()
            && self.eps_m.is_finite()
            && self.eps_w.is_finite()
            && self.kappa.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "need eps_m > 0, eps_w > 0, kappa >= 0 (got {}, {}, {})",
                self.eps_m, self.eps_w, self.kappa
            )))
        }
    }
}

/// Point charges (e) at positions in Å.
#[derive(Clone, Debug, PartialEq)]
pub struct ChargeSet {
    positions: Vec<Point>,
    charges: Vec<f64>,
}

impl ChargeSet {
    pub fn new(positions: Vec<Point>, charges: Vec<f64>) -> Result<Self> {
        if positions.len() != charges.len() {
            return Err(Error::InvalidArgument(format!(
                "{} positions but {} charges",
                positions.len(),
                charges.len()
            )));
        }
        if positions.is_empty() {
            return Err(Error::InvalidArgument("no charges".into()));
        }
        if positions.iter().any(|p| !p.iter().all(|c| c.is_finite())) || charges.iter().any(|q| !q.is_finite()) {
            return Err(Error::InvalidArgument("non-finite charge data".into()));
        }
        Ok(ChargeSet { positions, charges })
    }

    pub fn single(position: Point, charge: f64) -> Self {
        ChargeSet { positions: vec![position], charges: vec![charge] }
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn charges(&self) -> &[f64] {
        &self.charges
    }

    pub fn len(&self) -> usize {
        self.charges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.charges.is_empty()
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        ChargeSet {
            positions: self.positions.clone(),
            charges: self.charges.iter().map(|q| q * lambda).collect(),
        }
    }

    pub fn translated(&self, offset: &Point) -> Self {
        ChargeSet {
            positions: self.positions.iter().map(|p| p + offset).collect(),
            charges: self.charges.clone(),
        }
    }

    /// Domain error for the first charge not strictly inside `mesh`.
    pub fn check_inside(&self, mesh: &SurfaceMesh) -> Result<()> {
        check_points_inside(mesh, &self.positions)
    }
}

pub(crate) fn check_points_inside(mesh: &SurfaceMesh, points: &[Point]) -> Result<()> {
    for (index, p) in points.iter().enumerate() {
        let winding = mesh.winding_number(p);
        if winding <= 0.5 {
            return Err(Error::Domain { index, winding });
        }
    }
    Ok(())
}

/// Discretization space of a trace.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Space {
    /// Piecewise constant on panels, collocated at centroids.
    P0,
    /// Continuous piecewise linear on vertices, collocated at vertices.
    P1,
}

impl Space {
    pub fn dofs(&self, mesh: &SurfaceMesh) -> usize {
        match self {
            Space::P0 => mesh.num_panels(),
            Space::P1 => mesh.num_vertices(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct PanelSolution {
    pub space: Space,
    /// Interior potential trace.
    pub u_trace: Vec<f64>,
    /// Interior normal derivative trace.
    pub dudn_trace: Vec<f64>,
    pub mesh: Arc<SurfaceMesh>,
    /// For an adjoint on a surface-conforming refinement: the same refinement
    /// with every vertex left on its parent panel.
    pub flat_mesh: Option<Arc<SurfaceMesh>>,
    pub gmres_residual: f64,
    pub gmres_iters: usize,
}

impl PanelSolution {
    /// Solution with the given traces and no solve diagnostics.
    pub fn from_traces(space: Space, mesh: Arc<SurfaceMesh>, u_trace: Vec<f64>, dudn_trace: Vec<f64>) -> Result<Self> {
        let n = space.dofs(&mesh);
        if u_trace.len() != n || dudn_trace.len() != n {
            return Err(Error::InvalidArgument(format!(
                "trace lengths {}/{} for {n} degrees of freedom",
                u_trace.len(),
                dudn_trace.len()
            )));
        }
        Ok(PanelSolution { space, u_trace, dudn_trace, mesh, flat_mesh: None, gmres_residual: 0.0, gmres_iters: 0 })
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        let mut s = self.clone();
        s.u_trace.iter_mut().for_each(|v| *v *= lambda);
        s.dudn_trace.iter_mut().for_each(|v| *v *= lambda);
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    pub gmres_tol: f64,
    pub max_iterations: usize,
    /// Left-scale by the inverse of each unknown pair's 2×2 diagonal block.
    pub block_scaling: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { gmres_tol: 1e-8, max_iterations: 1000, block_scaling: false }
    }
}

/// Dense `2n × 2n` system; unknowns are `[u; v]`.
#[derive(Clone, Debug)]
pub struct LinearSystem {
    pub matrix: DenseMatrix,
    pub rhs: Vec<f64>,
    pub space: Space,
}

impl LinearSystem {
    /// Degrees of freedom per unknown.
    pub fn half(&self) -> usize {
        self.rhs.len() / 2
    }

    /// In-place left scaling by the inverse 2×2 diagonal blocks.
    pub fn apply_block_scaling(&mut self) -> Result<()> {
        let n = self.half();
        let dim = 2 * n;
        for i in 0..n {
            let (a, b) = (self.matrix.get(i, i), self.matrix.get(i, n + i));
            let (c, d) = (self.matrix.get(n + i, i), self.matrix.get(n + i, n + i));
            let det = a * d - b * c;
            if det == 0.0 || !det.is_finite() {
                return Err(Error::InvalidArgument(format!("singular diagonal block at unknown {i}")));
            }
            let inv = [d / det, -b / det, -c / det, a / det];
            let data = self.matrix.data_mut();
            let (top, bottom) = data.split_at_mut((n + i) * dim);
            let r1 = &mut top[i * dim..(i + 1) * dim];
            let r2 = &mut bottom[..dim];
            for (x, y) in r1.iter_mut().zip(r2.iter_mut()) {
                let (p, q) = (*x, *y);
                *x = inv[0] * p + inv[1] * q;
                *y = inv[2] * p + inv[3] * q;
            }
            let (p, q) = (self.rhs[i], self.rhs[n + i]);
            self.rhs[i] = inv[0] * p + inv[1] * q;
            self.rhs[n + i] = inv[2] * p + inv[3] * q;
        }
        Ok(())
    }
}

/// Assembles the dense system on `mesh` for the given space.
pub fn assemble_system(
    mesh: &SurfaceMesh,
    physics: &BiePhysics,
    charges: &ChargeSet,
    space: Space,
) -> Result<LinearSystem> {
    physics.validate()?;
    charges.check_inside(mesh)?;
    match space {
        Space::P0 => assemble_p0(mesh, physics, charges),
        Space::P1 => assemble_p1(mesh, physics, charges),
    }
}

fn assemble_p0(mesh: &SurfaceMesh, physics: &BiePhysics, charges: &ChargeSet) -> Result<LinearSystem> {
    let n = mesh.num_panels();
    let dim = 2 * n;
    let panels = mesh.panels();
    let ratio = physics.eps_m / physics.eps_w;
    let kappa = physics.kappa;
    let rule = QuadratureRule::seven_point();

    let mut matrix = DenseMatrix::zeros(dim);
    let (top, bottom) = matrix.data_mut().split_at_mut(n * dim);
    top.par_chunks_mut(dim)
        .zip(bottom.par_chunks_mut(dim))
        .enumerate()
        .try_for_each(|(i, (r1, r2))| -> Result<()> {
            let x = panels[i].centroid;
            for (j, pj) in panels.iter().enumerate() {
                let m = if i == j {
                    singular_moments(pj, &x, kappa)?
                } else {
                    panel_moments(&x, pj, kappa, rule)
                };
                r1[j] = m.double_laplace_total();
                r1[n + j] = -m.single_laplace_total();
                r2[j] = -m.double_yukawa_total();
                r2[n + j] = ratio * m.single_yukawa_total();
            }
            r1[i] += 0.5;
            r2[i] += 0.5;
            Ok(())
        })?;

    let points: Vec<Point> = panels.iter().map(|p| p.centroid).collect();
    let normals: Vec<Point> = panels.iter().map(|p| p.normal).collect();
    let (uc, _) = coulomb_trace(charges, physics, &points, &normals)?;
    let mut rhs = uc;
    rhs.resize(dim, 0.0);
    Ok(LinearSystem { matrix, rhs, space: Space::P0 })
}

fn assemble_p1(mesh: &SurfaceMesh, physics: &BiePhysics, charges: &ChargeSet) -> Result<LinearSystem> {
    let nv = mesh.num_vertices();
    let dim = 2 * nv;
    let panels = mesh.panels();
    let tris = mesh.triangles();
    let verts = mesh.vertices();
    let ratio = physics.eps_m / physics.eps_w;
    let kappa = physics.kappa;
    let rule = QuadratureRule::seven_point();

    let mut matrix = DenseMatrix::zeros(dim);
    let (top, bottom) = matrix.data_mut().split_at_mut(nv * dim);
    top.par_chunks_mut(dim)
        .zip(bottom.par_chunks_mut(dim))
        .enumerate()
        .try_for_each(|(i, (r1, r2))| -> Result<()> {
            let x = verts[i];
            for (t, tri) in tris.iter().enumerate() {
                let m: PanelMoments = if tri.contains(&i) {
                    singular_moments(&panels[t], &x, kappa)?
                } else {
                    panel_moments(&x, &panels[t], kappa, rule)
                };
                for (a, &col) in tri.iter().enumerate() {
                    r1[col] += m.double_laplace[a];
                    r1[nv + col] -= m.single_laplace[a];
                    r2[col] -= m.double_yukawa[a];
                    r2[nv + col] += ratio * m.single_yukawa[a];
                }
            }
            let jump = -r1[..nv].iter().sum::<f64>();
            r1[i] += jump;
            r2[i] += 1.0 - jump;
            Ok(())
        })?;

    let normals = vertex_normals(mesh);
    let (uc, _) = coulomb_trace(charges, physics, verts, &normals)?;
    let mut rhs = uc;
    rhs.resize(dim, 0.0);
    Ok(LinearSystem { matrix, rhs, space: Space::P1 })
}

/// Area-weighted average of incident panel normals.
pub fn vertex_normals(mesh: &SurfaceMesh) -> Vec<Point> {
    let mut normals = vec![Point::zeros(); mesh.num_vertices()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let p = mesh.panel(t);
        for &v in tri {
            normals[v] += p.normal * p.area;
        }
    }
    normals.iter().map(|n| n.normalize()).collect()
}

fn solve_system(mut system: LinearSystem, mesh: Arc<SurfaceMesh>, options: &SolverOptions) -> Result<PanelSolution> {
    if options.block_scaling {
        system.apply_block_scaling()?;
    }
    let out = gmres(&system.matrix, &system.rhs, options.gmres_tol, options.max_iterations)?;
    let n = system.half();
    let mut u = out.x;
    let v = u.split_off(n);
    log::debug!("GMRES: {} iterations, residual {:e}", out.iterations, out.residual);
    Ok(PanelSolution {
        space: system.space,
        u_trace: u,
        dudn_trace: v,
        mesh,
        flat_mesh: None,
        gmres_residual: out.residual,
        gmres_iters: out.iterations,
    })
}

/// Piecewise-constant solve on `mesh`.
pub fn solve_forward(
    mesh: &SurfaceMesh,
    physics: &BiePhysics,
    charges: &ChargeSet,
    options: &SolverOptions,
) -> Result<PanelSolution> {
    let system = assemble_system(mesh, physics, charges, Space::P0)?;
    solve_system(system, Arc::new(mesh.clone()), options)
}

/// Uniformly refines `mesh` `levels` times; the result's parent map points
/// into `mesh`.
pub fn refine_with_genealogy(mesh: &SurfaceMesh, levels: u32) -> SurfaceMesh {
    let mut fine = mesh.clone().without_parent_map();
    let mut ancestry: Vec<usize> = (0..mesh.num_panels()).collect();
    for _ in 0..levels {
        fine = refine_uniform(&fine);
        let parents = fine.parent_map().expect("refinement records parents");
        ancestry = parents.iter().map(|&p| ancestry[p]).collect();
    }
    fine.with_parent_map(ancestry).expect("one ancestor per panel")
}

/// As [`refine_with_genealogy`] with each level refined surface-conformingly
/// against `background`.
pub fn refine_conforming_with_genealogy(
    mesh: &SurfaceMesh,
    levels: u32,
    background: &NearestVertexGrid,
) -> Result<SurfaceMesh> {
    let mut fine = mesh.clone().without_parent_map();
    let mut ancestry: Vec<usize> = (0..mesh.num_panels()).collect();
    for _ in 0..levels {
        fine = refine_conforming(&fine, &MarkedSet::all(fine.num_panels()), background)?;
        let parents = fine.parent_map().expect("refinement records parents");
        ancestry = parents.iter().map(|&p| ancestry[p]).collect();
    }
    fine.with_parent_map(ancestry)
}

/// Piecewise-linear solve on `mesh` refined `refine_levels` times.
pub fn solve_adjoint(
    mesh: &SurfaceMesh,
    physics: &BiePhysics,
    charges: &ChargeSet,
    refine_levels: u32,
    options: &SolverOptions,
) -> Result<PanelSolution> {
    let fine = refine_with_genealogy(mesh, refine_levels);
    let system = assemble_system(&fine, physics, charges, Space::P1)?;
    solve_system(system, Arc::new(fine), options)
}

/// As [`solve_adjoint`], but the vertices created by each refinement are
/// moved onto the surface described by `background`. The flat refinement with
/// the same connectivity is kept in [`PanelSolution::flat_mesh`].
pub fn solve_adjoint_conforming(
    mesh: &SurfaceMesh,
    physics: &BiePhysics,
    charges: &ChargeSet,
    refine_levels: u32,
    background: &NearestVertexGrid,
    options: &SolverOptions,
) -> Result<PanelSolution> {
    let flat = refine_with_genealogy(mesh, refine_levels);
    let fine = refine_conforming_with_genealogy(mesh, refine_levels, background)?;
    debug_assert_eq!(flat.triangles(), fine.triangles());
    let system = assemble_system(&fine, physics, charges, Space::P1)?;
    let mut sol = solve_system(system, Arc::new(fine), options)?;
    sol.flat_mesh = Some(Arc::new(flat));
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::icosphere;

    fn centered() -> ChargeSet {
        ChargeSet::single(Point::zeros(), 1.0)
    }

    #[test]
    fn system_shape_and_rhs() {
        let mesh = icosphere(1.0, 1);
        let charges = ChargeSet::new(vec![Point::new(0.1, 0.2, -0.3)], vec![0.7]).unwrap();
        let phys = BiePhysics::default();
        let sys = assemble_system(&mesh, &phys, &charges, Space::P0).unwrap();
        assert_eq!(sys.matrix.n(), 160);
        assert_eq!(sys.rhs.len(), 160);
        assert!(sys.rhs[80..].iter().all(|&v| v == 0.0));
        for (i, p) in mesh.panels().iter().enumerate() {
            // direct Coulomb sum
            let d = (p.centroid - Point::new(0.1, 0.2, -0.3)).norm();
            let expected = 0.7 / (4.0 * PI * d * phys.eps_m);
            assert!((sys.rhs[i] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_physics_makes_blocks_coincide() {
        let mesh = icosphere(1.0, 1);
        let phys = BiePhysics::new(2.0, 2.0, 0.0).unwrap();
        let sys = assemble_system(&mesh, &phys, &centered(), Space::P0).unwrap();
        let n = 80;
        let m = &sys.matrix;
        for i in 0..n {
            for j in 0..n {
                let delta = if i == j { 0.5 } else { 0.0 };
                assert!(((m.get(i, j) - delta) + (m.get(n + i, j) - delta)).abs() < 1e-15);
                assert!((m.get(i, n + j) + m.get(n + i, n + j)).abs() < 1e-15);
            }
        }
    }

    /// Relative Frobenius asymmetry of an n×n matrix given by `f(i, j)`.
    fn asymmetry(n: usize, f: impl Fn(usize, usize) -> f64) -> f64 {
        let (mut diff, mut total) = (0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                let (a, b) = (f(i, j), f(j, i));
                diff += (a - b) * (a - b);
                total += a * a;
            }
        }
        (diff / total).sqrt()
    }

    #[test]
    fn single_layer_integrals_are_symmetric() {
        // Galerkin form ∫_{T_i}∫_{T_j} G, outer 7-point rule over the kernel moments
        let mesh = icosphere(1.0, 3);
        let panels = mesh.panels();
        let n = panels.len();
        let rule = QuadratureRule::seven_point();
        let galerkin: Vec<f64> = (0..n * n)
            .into_par_iter()
            .map(|k| {
                let (i, j) = (k / n, k % n);
                let pi = &panels[i];
                rule.points
                    .iter()
                    .zip(&rule.weights)
                    .map(|(b, w)| {
                        let x = pi.point_at(b);
                        let inner = if i == j {
                            singular_moments(&panels[j], &x, 0.0).unwrap()
                        } else {
                            panel_moments(&x, &panels[j], 0.0, rule)
                        };
                        w * pi.area * inner.single_laplace_total()
                    })
                    .sum()
            })
            .collect();
        let g = asymmetry(n, |i, j| galerkin[i * n + j]);
        assert!(g <= 1e-3, "{g}");

        // Collocation rows are only symmetric after area weighting, and only to
        // first order in the panel size.
        let phys = BiePhysics::new(1.0, 80.0, 0.0).unwrap();
        let sys = assemble_system(&mesh, &phys, &centered(), Space::P0).unwrap();
        let c = asymmetry(n, |i, j| -panels[i].area * sys.matrix.get(i, n + j));
        assert!(c <= 1e-2, "{c}");
    }

    #[test]
    fn centered_charge_gives_constant_trace() {
        let mesh = icosphere(1.0, 3);
        let phys = BiePhysics::new(1.0, 80.0, 0.0).unwrap();
        let sol = solve_forward(&mesh, &phys, &centered(), &SolverOptions::default()).unwrap();
        // continuity of the potential: U = q / (4π ε_w R) on the surface
        let exact = 1.0 / (4.0 * PI * 80.0);
        let mean = sol.u_trace.iter().sum::<f64>() / sol.u_trace.len() as f64;
        let spread = sol.u_trace.iter().fold(0.0f64, |m, &u| m.max((u - mean).abs()));
        assert!(spread <= 0.01 * mean.abs());
        assert!(((mean - exact) / exact).abs() < 0.01, "{mean} vs {exact}");
        assert!(sol.gmres_residual <= 1e-8);
    }

    #[test]
    fn mirror_symmetric_charges_give_mirror_symmetric_traces() {
        let mesh = icosphere(1.0, 2);
        let charges = ChargeSet::new(vec![Point::new(0.4, 0.1, 0.2), Point::new(-0.4, 0.1, 0.2)], vec![1.0, 1.0]).unwrap();
        let sol = solve_forward(&mesh, &BiePhysics::default(), &charges, &SolverOptions::default()).unwrap();
        let panels = mesh.panels();
        let scale = sol.u_trace.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (i, p) in panels.iter().enumerate() {
            let mirror = Point::new(-p.centroid.x, p.centroid.y, p.centroid.z);
            let j = panels
                .iter()
                .position(|q| (q.centroid - mirror).norm() < 1e-12)
                .expect("icosphere is mirror symmetric");
            assert!((sol.u_trace[i] - sol.u_trace[j]).abs() < 1e-7 * scale);
        }
    }

    #[test]
    fn permuting_panels_permutes_the_solution() {
        let mesh = icosphere(1.0, 2);
        let n = mesh.num_panels();
        let order: Vec<usize> = (0..n).map(|i| (i * 7 + 3) % n).collect();
        let permuted = mesh.permuted(&order).unwrap();
        let charges = ChargeSet::single(Point::new(0.1, 0.3, 0.2), 1.0);
        let phys = BiePhysics::default();
        let opts = SolverOptions { gmres_tol: 1e-12, ..Default::default() };
        let a = solve_forward(&mesh, &phys, &charges, &opts).unwrap();
        let b = solve_forward(&permuted, &phys, &charges, &opts).unwrap();
        let scale = a.u_trace.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (k, &o) in order.iter().enumerate() {
            assert!((a.u_trace[o] - b.u_trace[k]).abs() < 1e-10 * scale);
        }
    }

    #[test]
    fn block_scaling_gives_the_same_solution() {
        let mesh = icosphere(1.0, 2);
        let charges = ChargeSet::single(Point::new(0.0, 0.0, 0.5), 1.0);
        let phys = BiePhysics::default();
        let plain = solve_forward(&mesh, &phys, &charges, &SolverOptions::default()).unwrap();
        let opts = SolverOptions { block_scaling: true, gmres_tol: 1e-10, ..Default::default() };
        let scaled = solve_forward(&mesh, &phys, &charges, &opts).unwrap();
        let scale = plain.dudn_trace.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in plain.dudn_trace.iter().zip(&scaled.dudn_trace) {
            assert!((a - b).abs() < 1e-6 * scale);
        }
    }

    #[test]
    fn charge_outside_is_a_domain_error() {
        let mesh = icosphere(1.0, 1);
        let charges = ChargeSet::new(vec![Point::zeros(), Point::new(0.0, 0.0, 1.5)], vec![1.0, -1.0]).unwrap();
        match assemble_system(&mesh, &BiePhysics::default(), &charges, Space::P0) {
            Err(Error::Domain { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected domain error, got {other:?}"),
        }
    }

    #[test]
    fn adjoint_dof_counts_and_genealogy() {
        let mesh = icosphere(1.0, 1);
        let phys = BiePhysics::default();
        let q = ChargeSet::single(Point::new(0.0, 0.0, 0.5), 1.0);
        let a0 = solve_adjoint(&mesh, &phys, &q, 0, &SolverOptions::default()).unwrap();
        assert_eq!(a0.u_trace.len(), mesh.num_vertices());
        assert_eq!(a0.space, Space::P1);
        let a1 = solve_adjoint(&mesh, &phys, &q, 1, &SolverOptions::default()).unwrap();
        assert_eq!(a1.mesh.num_panels(), 4 * mesh.num_panels());
        let fine = refine_with_genealogy(&mesh, 2);
        let pm = fine.parent_map().unwrap();
        for t in 0..mesh.num_panels() {
            assert_eq!(pm.iter().filter(|&&p| p == t).count(), 16);
        }
    }

    #[test]
    fn jump_coefficient_is_the_vertex_solid_angle() {
        let mesh = icosphere(1.0, 3);
        let phys = BiePhysics::new(1.0, 80.0, 0.0).unwrap();
        let sys = assemble_system(&mesh, &phys, &centered(), Space::P1).unwrap();
        let nv = mesh.num_vertices();
        for i in 0..nv {
            let k_row: f64 = (0..nv).filter(|&j| j != i).map(|j| sys.matrix.get(i, j)).sum();
            let c = sys.matrix.get(i, i);
            // the diagonal holds c alone because the incident panels are flat
            assert!((c + k_row).abs() < 1e-12);
            // analytic solid angle of the surface seen from the vertex
            let omega = mesh.winding_number(&mesh.vertices()[i]);
            assert!((c - omega).abs() < 1e-5, "vertex {i}: {c} vs {omega}");
        }
    }

    #[test]
    fn adjoint_trace_agrees_with_forward_trace() {
        let mesh = icosphere(1.0, 3);
        let phys = BiePhysics::default();
        let q = ChargeSet::single(Point::new(0.0, 0.0, 0.5), 1.0);
        let fwd = solve_forward(&mesh, &phys, &q, &SolverOptions::default()).unwrap();
        let adj = solve_adjoint(&mesh, &phys, &q, 0, &SolverOptions::default()).unwrap();
        let tris = mesh.triangles();
        let scale = fwd.u_trace.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut worst = 0.0f64;
        for (t, tri) in tris.iter().enumerate() {
            let interp = tri.iter().map(|&v| adj.u_trace[v]).sum::<f64>() / 3.0;
            worst = worst.max((interp - fwd.u_trace[t]).abs());
        }
        assert!(worst < 0.05 * scale, "{worst} vs {scale}");
    }

    #[test]
    fn conforming_adjoint_keeps_topology_and_moves_to_surface() {
        let mesh = icosphere(1.0, 1);
        let bg = NearestVertexGrid::from_mesh(&icosphere(1.0, 5));
        let q = ChargeSet::single(Point::new(0.0, 0.0, 0.5), 1.0);
        let sol = solve_adjoint_conforming(&mesh, &BiePhysics::default(), &q, 2, &bg, &SolverOptions::default()).unwrap();
        let flat = sol.flat_mesh.as_ref().unwrap();
        assert_eq!(flat.triangles(), sol.mesh.triangles());
        assert_eq!(flat.parent_map(), sol.mesh.parent_map());
        let off = |m: &SurfaceMesh| m.vertices().iter().map(|v| (v.norm() - 1.0).abs()).fold(0.0, f64::max);
        assert!(off(&sol.mesh) < 0.5 * off(flat));
        sol.mesh.validate().unwrap();
    }
}
