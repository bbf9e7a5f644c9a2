//! Closed triangulated surfaces and their refinement.

mod icosphere;
mod io;
mod nearest;
mod refine;

pub use icosphere::icosphere;
pub use io::{load_msms, write_off, write_panel_csv};
pub use nearest::NearestVertexGrid;
pub use refine::{close_marking, mark_elements, refine_conforming, refine_flat, refine_uniform, MarkedSet};

use std::collections::HashMap;

use crate::{Error, Point, Result};

/// Distance below which two vertices count as duplicates (Å).
pub const DUPLICATE_TOLERANCE: f64 = 1e-10;

/// A flat triangular panel with its derived geometry.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Panel {
    pub vertices: [Point; 3],
    /// Unit normal from the right-hand rule on the vertex order.
    pub normal: Point,
    pub area: f64,
    pub centroid: Point,
    /// Longest edge length.
    pub diameter: f64,
}

impl Panel {
    pub fn new(a: Point, b: Point, c: Point) -> Self {
        let cross = (b - a).cross(&(c - a));
        let twice_area = cross.norm();
        let normal = if twice_area > 0.0 {
            cross / twice_area
        } else {
            Point::zeros()
        };
        let diameter = (b - a).norm().max((c - b).norm()).max((a - c).norm());
        Panel {
            vertices: [a, b, c],
            normal,
            area: 0.5 * twice_area,
            centroid: (a + b + c) / 3.0,
            diameter,
        }
    }

    /// Point at barycentric coordinates `(l0, l1, l2)`.
    #[inline]
    pub fn point_at(&self, bary: &[f64; 3]) -> Point {
        self.vertices[0] * bary[0] + self.vertices[1] * bary[1] + self.vertices[2] * bary[2]
    }

    /// Barycentric coordinates of the projection of `p` onto the panel plane.
    pub fn barycentric(&self, p: &Point) -> [f64; 3] {
        let [a, b, c] = self.vertices;
        let n = (b - a).cross(&(c - a));
        let nn = n.norm_squared();
        let l0 = (c - b).cross(&(p - b)).dot(&n) / nn;
        let l1 = (a - c).cross(&(p - c)).dot(&n) / nn;
        [l0, l1, 1.0 - l0 - l1]
    }
}

/// Triangulated closed interface between solute and solvent.
///
/// Triangles are vertex-index triples ordered so the right-hand normal points
/// out of the solute. A mesh produced by refinement carries `parent_map`,
/// mapping each triangle to the triangle of the mesh it was refined from.
#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceMesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    parent_map: Option<Vec<usize>>,
}

impl SurfaceMesh {
    /// Builds a mesh after checking indices and panel areas. Topology and
    /// orientation are checked separately by [`SurfaceMesh::validate`].
    pub fn new(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let nv = vertices.len();
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= nv) {
                return Err(Error::InvalidMesh(format!(
                    "triangle {t} references vertex outside 0..{nv}"
                )));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::InvalidMesh(format!("triangle {t} repeats a vertex")));
            }
        }
        let mesh = SurfaceMesh {
            vertices,
            triangles,
            parent_map: None,
        };
        for t in 0..mesh.num_panels() {
            if mesh.panel(t).area <= 0.0 {
                return Err(Error::InvalidMesh(format!("triangle {t} has zero area")));
            }
        }
        Ok(mesh)
    }

    pub(crate) fn from_parts(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        parent_map: Option<Vec<usize>>,
    ) -> Self {
        SurfaceMesh {
            vertices,
            triangles,
            parent_map,
        }
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// Child triangle → parent triangle in the mesh this one was refined from.
    pub fn parent_map(&self) -> Option<&[usize]> {
        self.parent_map.as_deref()
    }

    pub fn with_parent_map(mut self, parent_map: Vec<usize>) -> Result<Self> {
        if parent_map.len() != self.triangles.len() {
            return Err(Error::InvalidArgument(format!(
                "parent map has {} entries for {} triangles",
                parent_map.len(),
                self.triangles.len()
            )));
        }
        self.parent_map = Some(parent_map);
        Ok(self)
    }

    pub fn without_parent_map(mut self) -> Self {
        self.parent_map = None;
        self
    }

    pub fn num_panels(&self) -> usize {
        self.triangles.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn panel(&self, t: usize) -> Panel {
        let [a, b, c] = self.triangles[t];
        Panel::new(self.vertices[a], self.vertices[b], self.vertices[c])
    }

    pub fn panels(&self) -> Vec<Panel> {
        (0..self.num_panels()).map(|t| self.panel(t)).collect()
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_panels()).map(|t| self.panel(t).area).sum()
    }

    /// Signed enclosed volume; positive when normals point outward.
    pub fn signed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|&[a, b, c]| {
                let (a, b, c) = (&self.vertices[a], &self.vertices[b], &self.vertices[c]);
                a.dot(&b.cross(c)) / 6.0
            })
            .sum()
    }

    pub fn mean_edge_length(&self) -> f64 {
        let edges = self.edge_map();
        if edges.is_empty() {
            return 0.0;
        }
        let total: f64 = edges
            .keys()
            .map(|&(a, b)| (self.vertices[a] - self.vertices[b]).norm())
            .sum();
        total / edges.len() as f64
    }

    /// Undirected edge `(min, max)` → list of `(triangle, local edge)` that
    /// contain it. Local edge `e` joins local vertices `e` and `(e + 1) % 3`.
    pub fn edge_map(&self) -> HashMap<(usize, usize), Vec<(usize, usize)>> {
        let mut map: HashMap<(usize, usize), Vec<(usize, usize)>> =
            HashMap::with_capacity(3 * self.triangles.len() / 2);
        for (t, tri) in self.triangles.iter().enumerate() {
            for e in 0..3 {
                map.entry(edge_key(tri[e], tri[(e + 1) % 3]))
                    .or_default()
                    .push((t, e));
            }
        }
        map
    }

    /// Sorted 1-ring neighbours of every vertex.
    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut nbrs = vec![Vec::new(); self.vertices.len()];
        for tri in &self.triangles {
            for e in 0..3 {
                let (a, b) = (tri[e], tri[(e + 1) % 3]);
                nbrs[a].push(b);
                nbrs[b].push(a);
            }
        }
        for list in &mut nbrs {
            list.sort_unstable();
            list.dedup();
        }
        nbrs
    }

    /// Triangles incident to every vertex.
    pub fn vertex_triangles(&self) -> Vec<Vec<usize>> {
        let mut incident = vec![Vec::new(); self.vertices.len()];
        for (t, tri) in self.triangles.iter().enumerate() {
            for &v in tri {
                incident[v].push(t);
            }
        }
        incident
    }

    /// Every edge is shared by exactly two triangles, traversed in opposite
    /// directions, and every vertex is used.
    pub fn check_manifold(&self) -> Result<()> {
        if self.triangles.is_empty() {
            return Err(Error::Manifold("mesh has no triangles".into()));
        }
        for (&(a, b), uses) in &self.edge_map() {
            if uses.len() != 2 {
                return Err(Error::Manifold(format!(
                    "edge ({a}, {b}) is used by {} triangles",
                    uses.len()
                )));
            }
            let dir = |&(t, e): &(usize, usize)| self.triangles[t][e] == a;
            if dir(&uses[0]) == dir(&uses[1]) {
                return Err(Error::Manifold(format!(
                    "edge ({a}, {b}) has inconsistent orientation"
                )));
            }
        }
        let mut used = vec![false; self.vertices.len()];
        self.triangles.iter().flatten().for_each(|&v| used[v] = true);
        if let Some(v) = used.iter().position(|u| !u) {
            return Err(Error::Manifold(format!("vertex {v} is not used by any triangle")));
        }
        Ok(())
    }

    /// Index pairs of vertices closer than [`DUPLICATE_TOLERANCE`].
    pub fn duplicate_vertices(&self) -> Vec<(usize, usize)> {
        let mut order: Vec<usize> = (0..self.vertices.len()).collect();
        order.sort_by(|&i, &j| self.vertices[i].x.total_cmp(&self.vertices[j].x));
        let mut dups = Vec::new();
        for (k, &i) in order.iter().enumerate() {
            for &j in &order[k + 1..] {
                if self.vertices[j].x - self.vertices[i].x > DUPLICATE_TOLERANCE {
                    break;
                }
                if (self.vertices[i] - self.vertices[j]).norm() <= DUPLICATE_TOLERANCE {
                    dups.push((i.min(j), i.max(j)));
                }
            }
        }
        dups
    }

    /// Full invariant check: closed manifold, outward orientation, no
    /// degenerate panels and no duplicate vertices.
    pub fn validate(&self) -> Result<()> {
        self.check_manifold()?;
        if let Some(t) = (0..self.num_panels()).find(|&t| self.panel(t).area <= 0.0) {
            return Err(Error::InvalidMesh(format!("triangle {t} has zero area")));
        }
        if let Some((i, j)) = self.duplicate_vertices().first() {
            return Err(Error::InvalidMesh(format!("vertices {i} and {j} coincide")));
        }
        let vol = self.signed_volume();
        if vol <= 0.0 {
            return Err(Error::InvalidMesh(format!(
                "signed volume {vol:e} is not positive (normals point inward)"
            )));
        }
        Ok(())
    }

    /// Same surface with every triangle's orientation reversed.
    pub fn flipped(&self) -> Self {
        SurfaceMesh {
            vertices: self.vertices.clone(),
            triangles: self.triangles.iter().map(|&[a, b, c]| [a, c, b]).collect(),
            parent_map: self.parent_map.clone(),
        }
    }

    pub fn translated(&self, offset: &Point) -> Self {
        SurfaceMesh {
            vertices: self.vertices.iter().map(|v| v + offset).collect(),
            triangles: self.triangles.clone(),
            parent_map: self.parent_map.clone(),
        }
    }

    /// Reorders triangles so that new triangle `k` is old triangle `order[k]`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.num_panels()];
        if order.len() != self.num_panels() {
            return Err(Error::InvalidArgument("permutation has wrong length".into()));
        }
        for &o in order {
            if o >= seen.len() || std::mem::replace(&mut seen[o], true) {
                return Err(Error::InvalidArgument("not a permutation".into()));
            }
        }
        Ok(SurfaceMesh {
            vertices: self.vertices.clone(),
            triangles: order.iter().map(|&o| self.triangles[o]).collect(),
            parent_map: self
                .parent_map
                .as_ref()
                .map(|pm| order.iter().map(|&o| pm[o]).collect()),
        })
    }

    /// Generalized winding number: the total solid angle subtended by the
    /// surface at `p`, divided by 4π. One inside, zero outside.
    pub fn winding_number(&self, p: &Point) -> f64 {
        let omega: f64 = self
            .triangles
            .iter()
            .map(|&[a, b, c]| {
                triangle_solid_angle(
                    &(self.vertices[a] - p),
                    &(self.vertices[b] - p),
                    &(self.vertices[c] - p),
                )
            })
            .sum();
        omega / (4.0 * std::f64::consts::PI)
    }

    /// Whether `p` lies strictly inside the closed surface.
    pub fn contains(&self, p: &Point) -> bool {
        self.winding_number(p) > 0.5
    }
}

/// Signed solid angle of a triangle seen from the origin (Van Oosterom and
/// Strackee).
fn triangle_solid_angle(a: &Point, b: &Point, c: &Point) -> f64 {
    let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
    let numer = a.dot(&b.cross(c));
    let denom = la * lb * lc + a.dot(b) * lc + a.dot(c) * lb + b.dot(c) * la;
    2.0 * numer.atan2(denom)
}

#[inline]
pub(crate) fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tetrahedron() -> SurfaceMesh {
        let v = vec![
            Point::new(0.0, 0.0, 0.0),
            Point::new(1.0, 0.0, 0.0),
            Point::new(0.0, 1.0, 0.0),
            Point::new(0.0, 0.0, 1.0),
        ];
        SurfaceMesh::new(v, vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]]).unwrap()
    }

    #[test]
    fn tetrahedron_is_valid() {
        let t = tetrahedron();
        t.validate().unwrap();
        assert!((t.signed_volume() - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn flipped_tetrahedron_fails_orientation() {
        let t = tetrahedron().flipped();
        assert!(t.check_manifold().is_ok());
        assert!(matches!(t.validate(), Err(Error::InvalidMesh(_))));
    }

    #[test]
    fn open_surface_is_not_manifold() {
        let mut t = tetrahedron();
        t.triangles.pop();
        assert!(matches!(t.check_manifold(), Err(Error::Manifold(_))));
    }

    #[test]
    fn rejects_zero_area() {
        let v = vec![Point::zeros(), Point::new(1.0, 0.0, 0.0), Point::new(2.0, 0.0, 0.0)];
        assert!(SurfaceMesh::new(v, vec![[0, 1, 2]]).is_err());
    }

    #[test]
    fn winding_number_inside_and_outside() {
        let t = tetrahedron();
        assert!((t.winding_number(&Point::new(0.1, 0.1, 0.1)) - 1.0).abs() < 1e-12);
        assert!(t.winding_number(&Point::new(2.0, 2.0, 2.0)).abs() < 1e-12);
        assert!(t.contains(&Point::new(0.2, 0.2, 0.2)));
    }

    #[test]
    fn barycentric_roundtrip() {
        let p = tetrahedron().panel(3);
        let bary = [0.2, 0.3, 0.5];
        let x = p.point_at(&bary);
        let back = p.barycentric(&x);
        for k in 0..3 {
            assert!((back[k] - bary[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn detects_duplicate_vertices() {
        let mut t = tetrahedron();
        t.vertices.push(Point::new(1.0, 0.0, 5e-11));
        assert_eq!(t.duplicate_vertices(), vec![(1, 4)]);
    }
}
