//! Red-green refinement: marked triangles split into four through their edge
//! midpoints, triangles with exactly one refined edge split in two.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use super::{edge_key, NearestVertexGrid, SurfaceMesh};
use crate::{Error, Point, Result};

/// Number of Laplacian smoothing passes after surface-conforming snapping.
const SMOOTHING_PASSES: usize = 3;

/// A snapped vertex may move at most this fraction of its parent edge length
/// away from the edge midpoint.
const MAX_SNAP_FRACTION: f64 = 1.0 / 3.0;

/// Closed refinement plan.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MarkedSet {
    /// Triangles split into four.
    pub refine4: BTreeSet<usize>,
    /// Triangle → local index of its single refined edge.
    pub bisect: BTreeMap<usize, usize>,
}

impl MarkedSet {
    /// Plan that 4-splits every triangle of an `n`-panel mesh.
    pub fn all(n: usize) -> Self {
        MarkedSet {
            refine4: (0..n).collect(),
            bisect: BTreeMap::new(),
        }
    }

    /// Number of triangles after applying the plan to an `n`-panel mesh.
    pub fn refined_count(&self, n: usize) -> usize {
        n + 3 * self.refine4.len() + self.bisect.len()
    }
}

/// Panels sorted by decreasing error (ties by ascending index), truncated to
/// the shortest prefix whose cumulative error reaches `fraction` of the total.
pub fn mark_elements(errors: &[f64], fraction: f64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "marking fraction {fraction} outside (0, 1]"
        )));
    }
    if let Some(i) = errors.iter().position(|e| !e.is_finite() || *e < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "panel {i} has error {} (must be finite and non-negative)",
            errors[i]
        )));
    }
    let mut order: Vec<usize> = (0..errors.len()).collect();
    order.sort_by(|&a, &b| errors[b].total_cmp(&errors[a]).then(a.cmp(&b)));
    let total: f64 = order.iter().map(|&i| errors[i]).sum();
    if total == 0.0 {
        return Ok(Vec::new());
    }
    let target = fraction * total;
    let mut acc = 0.0;
    let mut marked = Vec::new();
    for i in order {
        acc += errors[i];
        marked.push(i);
        if acc >= target {
            break;
        }
    }
    Ok(marked)
}

/// Closes a marking under the two neighbour rules: a triangle touching two or
/// more refined edges is itself 4-split, one touching exactly one is bisected.
pub fn close_marking(mesh: &SurfaceMesh, marked: &[usize]) -> Result<MarkedSet> {
    let n = mesh.num_panels();
    let mut refine4 = vec![false; n];
    for &t in marked {
        if t >= n {
            return Err(Error::InvalidArgument(format!("marked triangle {t} out of range")));
        }
        refine4[t] = true;
    }
    let tri_edges = triangle_edges(mesh);
    let edge_tris = mesh.edge_map();

    let mut refined_edges: HashSet<(usize, usize)> = HashSet::new();
    let mut frontier: Vec<usize> = (0..n).filter(|&t| refine4[t]).collect();
    while !frontier.is_empty() {
        let mut candidates = BTreeSet::new();
        for t in frontier.drain(..) {
            for key in tri_edges[t] {
                if refined_edges.insert(key) {
                    for &(nb, _) in &edge_tris[&key] {
                        if !refine4[nb] {
                            candidates.insert(nb);
                        }
                    }
                }
            }
        }
        for t in candidates {
            let count = tri_edges[t].iter().filter(|k| refined_edges.contains(k)).count();
            if count >= 2 {
                refine4[t] = true;
                frontier.push(t);
            }
        }
    }

    let mut plan = MarkedSet::default();
    for t in 0..n {
        if refine4[t] {
            plan.refine4.insert(t);
            continue;
        }
        let hits: Vec<usize> = (0..3)
            .filter(|&e| refined_edges.contains(&tri_edges[t][e]))
            .collect();
        debug_assert!(hits.len() <= 1);
        if let [e] = hits[..] {
            plan.bisect.insert(t, e);
        }
    }
    Ok(plan)
}

fn triangle_edges(mesh: &SurfaceMesh) -> Vec<[(usize, usize); 3]> {
    mesh.triangles()
        .iter()
        .map(|t| [edge_key(t[0], t[1]), edge_key(t[1], t[2]), edge_key(t[2], t[0])])
        .collect()
}

/// Vertex created on a refined edge.
#[derive(Clone, Copy, Debug)]
struct NewVertex {
    index: usize,
    edge: (usize, usize),
}

fn split(mesh: &SurfaceMesh, plan: &MarkedSet) -> Result<(SurfaceMesh, Vec<NewVertex>)> {
    let n = mesh.num_panels();
    if let Some(&t) = plan.refine4.iter().chain(plan.bisect.keys()).find(|&&t| t >= n) {
        return Err(Error::OpenPlan(format!("triangle {t} out of range")));
    }
    if let Some(t) = plan.bisect.keys().find(|t| plan.refine4.contains(t)) {
        return Err(Error::OpenPlan(format!("triangle {t} is both 4-split and bisected")));
    }
    let tri_edges = triangle_edges(mesh);
    let refined: HashSet<(usize, usize)> =
        plan.refine4.iter().flat_map(|&t| tri_edges[t]).collect();
    for t in 0..n {
        if plan.refine4.contains(&t) {
            continue;
        }
        let hits: Vec<usize> = (0..3).filter(|&e| refined.contains(&tri_edges[t][e])).collect();
        match (hits.as_slice(), plan.bisect.get(&t)) {
            ([], None) => {}
            ([e], Some(b)) if e == b => {}
            _ => {
                return Err(Error::OpenPlan(format!(
                    "triangle {t} has refined edges {hits:?} but plan entry {:?}",
                    plan.bisect.get(&t)
                )))
            }
        }
    }

    let mut vertices = mesh.vertices().to_vec();
    let mut created = Vec::new();
    let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
    let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Point>| -> usize {
        let key = edge_key(a, b);
        *midpoints.entry(key).or_insert_with(|| {
            vertices.push((vertices[a] + vertices[b]) * 0.5);
            let index = vertices.len() - 1;
            created.push(NewVertex { index, edge: key });
            index
        })
    };

    let mut triangles = Vec::with_capacity(plan.refined_count(n));
    let mut parents = Vec::with_capacity(plan.refined_count(n));
    for (t, &[a, b, c]) in mesh.triangles().iter().enumerate() {
        if plan.refine4.contains(&t) {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            triangles.extend_from_slice(&[[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
            parents.extend_from_slice(&[t; 4]);
        } else if let Some(&e) = plan.bisect.get(&t) {
            let tri = [a, b, c];
            let (p, q, o) = (tri[e], tri[(e + 1) % 3], tri[(e + 2) % 3]);
            let m = midpoint(p, q, &mut vertices);
            triangles.extend_from_slice(&[[p, m, o], [m, q, o]]);
            parents.extend_from_slice(&[t; 2]);
        } else {
            triangles.push([a, b, c]);
            parents.push(t);
        }
    }
    Ok((SurfaceMesh::from_parts(vertices, triangles, Some(parents)), created))
}

/// Applies a closed plan with new vertices at edge midpoints. The refined
/// mesh covers exactly the same surface.
pub fn refine_flat(mesh: &SurfaceMesh, plan: &MarkedSet) -> Result<SurfaceMesh> {
    split(mesh, plan).map(|(m, _)| m)
}

/// 4-splits every triangle.
pub fn refine_uniform(mesh: &SurfaceMesh) -> SurfaceMesh {
    refine_flat(mesh, &MarkedSet::all(mesh.num_panels())).expect("uniform plan is closed")
}

/// As [`refine_flat`], then moves each new vertex to the nearest vertex of a
/// fine background mesh of the same surface and smooths the new vertices.
pub fn refine_conforming(
    mesh: &SurfaceMesh,
    plan: &MarkedSet,
    background: &NearestVertexGrid,
) -> Result<SurfaceMesh> {
    let (refined, created) = split(mesh, plan)?;
    let mut snapper = Snapper::new(refined, background);

    for nv in &created {
        let (a, b) = nv.edge;
        let mid = snapper.vertices[nv.index];
        let limit = MAX_SNAP_FRACTION * (snapper.vertices[a] - snapper.vertices[b]).norm();
        snapper.try_move(nv.index, &mid, limit, false);
    }

    let neighbors = snapper.mesh.vertex_neighbors();
    for _ in 0..SMOOTHING_PASSES {
        for nv in &created {
            let ring = &neighbors[nv.index];
            let avg = ring.iter().map(|&j| snapper.vertices[j]).sum::<Point>() / ring.len() as f64;
            let (a, b) = nv.edge;
            let limit = MAX_SNAP_FRACTION * (snapper.vertices[a] - snapper.vertices[b]).norm();
            snapper.try_move(nv.index, &avg, limit, true);
        }
    }
    if snapper.rejected > 0 {
        log::debug!(
            "surface-conforming refinement kept {} unsnapped positions",
            snapper.rejected
        );
    }
    Ok(snapper.finish())
}

struct Snapper<'a> {
    mesh: SurfaceMesh,
    vertices: Vec<Point>,
    grid: &'a NearestVertexGrid,
    /// Background vertex → mesh vertex sitting on it.
    occupied: HashMap<usize, usize>,
    snapped_to: HashMap<usize, usize>,
    incident: Vec<Vec<usize>>,
    rejected: usize,
}

impl<'a> Snapper<'a> {
    fn new(mesh: SurfaceMesh, grid: &'a NearestVertexGrid) -> Self {
        let vertices = mesh.vertices().to_vec();
        let incident = mesh.vertex_triangles();
        let mut occupied = HashMap::new();
        let mut snapped_to = HashMap::new();
        for (i, v) in vertices.iter().enumerate() {
            if let Some((bg, d)) = grid.nearest(v) {
                if d <= super::DUPLICATE_TOLERANCE {
                    occupied.entry(bg).or_insert(i);
                    snapped_to.insert(i, bg);
                }
            }
        }
        Snapper {
            mesh,
            vertices,
            grid,
            occupied,
            snapped_to,
            incident,
            rejected: 0,
        }
    }

    /// Moves vertex `v` to the background vertex nearest `query` unless that
    /// vertex is taken, lies too far from the parent edge midpoint, or would
    /// fold an incident triangle.
    fn try_move(&mut self, v: usize, query: &Point, limit: f64, smoothing: bool) -> bool {
        let Some((bg, _)) = self.grid.nearest(query) else {
            return false;
        };
        if self.snapped_to.get(&v) == Some(&bg) {
            return true;
        }
        if self.occupied.get(&bg).is_some_and(|&owner| owner != v) {
            if !smoothing {
                log::debug!("vertex {v}: background vertex {bg} already used, keeping midpoint");
                self.rejected += 1;
            }
            return false;
        }
        let target = self.grid.points()[bg];
        let anchor = self.anchor(v);
        if (target - anchor).norm() > limit || !self.keeps_orientation(v, &target) {
            if !smoothing {
                self.rejected += 1;
            }
            return false;
        }
        if let Some(old) = self.snapped_to.insert(v, bg) {
            self.occupied.remove(&old);
        }
        self.occupied.insert(bg, v);
        self.vertices[v] = target;
        true
    }

    /// Midpoint of the parent edge, i.e. the vertex position before snapping.
    fn anchor(&self, v: usize) -> Point {
        self.mesh.vertices()[v]
    }

    fn keeps_orientation(&self, v: usize, target: &Point) -> bool {
        self.incident[v].iter().all(|&t| {
            let tri = self.mesh.triangles()[t];
            let before = tri.map(|i| self.vertices[i]);
            let after = tri.map(|i| if i == v { *target } else { self.vertices[i] });
            let n0 = (before[1] - before[0]).cross(&(before[2] - before[0]));
            let n1 = (after[1] - after[0]).cross(&(after[2] - after[0]));
            n1.dot(&n0) > 0.0 && n1.norm() > 0.1 * n0.norm()
        })
    }

    fn finish(self) -> SurfaceMesh {
        let parents = self.mesh.parent_map().map(<[usize]>::to_vec);
        SurfaceMesh::from_parts(self.vertices, self.mesh.triangles().to_vec(), parents)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::icosphere;
    use proptest::prelude::*;

    /// Triangular bipyramid: 6 faces, each sharing one edge with 3 others.
    fn strip() -> SurfaceMesh {
        let v = vec![
            Point::new(0.0, 0.0, 1.0),
            Point::new(0.0, 0.0, -1.0),
            Point::new(1.0, 0.0, 0.0),
            Point::new(-0.5, 0.8, 0.0),
            Point::new(-0.5, -0.8, 0.0),
        ];
        let t = vec![[0, 2, 3], [0, 3, 4], [0, 4, 2], [1, 3, 2], [1, 4, 3], [1, 2, 4]];
        let m = SurfaceMesh::new(v, t).unwrap();
        m.validate().unwrap();
        m
    }

    #[test]
    fn mark_single_dominant() {
        assert_eq!(mark_elements(&[5.0, 3.0, 1.0, 1.0], 0.10).unwrap(), vec![0]);
    }

    #[test]
    fn mark_ties_break_by_index() {
        assert_eq!(mark_elements(&[1.0; 10], 0.10).unwrap(), vec![0]);
    }

    #[test]
    fn mark_half() {
        assert_eq!(mark_elements(&[1.0, 2.0, 3.0, 4.0], 0.50).unwrap(), vec![3, 2]);
    }

    #[test]
    fn mark_rejects_nan_and_bad_fraction() {
        assert!(mark_elements(&[1.0, f64::NAN], 0.1).is_err());
        assert!(mark_elements(&[1.0, 2.0], 0.0).is_err());
        assert!(mark_elements(&[1.0, 2.0], 1.5).is_err());
        assert!(mark_elements(&[0.0, 0.0], 0.5).unwrap().is_empty());
    }

    #[test]
    fn one_edge_neighbour_is_bisected() {
        // Two triangles sharing edge (0, 2) in the bipyramid: faces 0 and 2.
        let m = strip();
        let plan = close_marking(&m, &[0]).unwrap();
        assert_eq!(plan.refine4, BTreeSet::from([0]));
        // Face 0 = [0,2,3] touches faces 1 (edge 0-3), 2 (edge 0-2), 3 (edge 2-3).
        assert_eq!(plan.bisect.len(), 3);
        let refined = refine_flat(&m, &plan).unwrap();
        assert_eq!(refined.num_panels(), 6 - 1 + 4 + 3);
        refined.validate().unwrap();
    }

    #[test]
    fn two_marked_promote_their_common_neighbour() {
        // On the bipyramid, marking faces 0 and 1 leaves face 2 touching both.
        let m = strip();
        let plan = close_marking(&m, &[0, 1]).unwrap();
        assert!(plan.refine4.contains(&2), "middle neighbour must be 4-split");
        refine_flat(&m, &plan).unwrap().validate().unwrap();
    }

    #[test]
    fn icosphere_two_adjacent_marked() {
        let m = icosphere(1.0, 1);
        let edges = m.edge_map();
        // Pick two triangles sharing an edge; the closure must stay conforming.
        let (&_, uses) = edges.iter().min_by_key(|(k, _)| **k).unwrap();
        let plan = close_marking(&m, &[uses[0].0, uses[1].0]).unwrap();
        assert!(plan.refine4.len() >= 2);
        let r = refine_flat(&m, &plan).unwrap();
        r.validate().unwrap();
        assert_eq!(r.num_panels(), plan.refined_count(m.num_panels()));
    }

    #[test]
    fn all_marked_is_uniform() {
        let m = icosphere(1.0, 0);
        let plan = close_marking(&m, &(0..20).collect::<Vec<_>>()).unwrap();
        assert_eq!(plan, MarkedSet::all(20));
        let r = refine_flat(&m, &plan).unwrap();
        assert_eq!(r.num_panels(), 80);
        assert!((r.total_area() - m.total_area()).abs() < 1e-12);
        r.validate().unwrap();
    }

    #[test]
    fn four_split_children_are_quarter_area() {
        let m = icosphere(1.0, 0);
        let r = refine_uniform(&m);
        let pm = r.parent_map().unwrap();
        for (c, &p) in pm.iter().enumerate() {
            assert!((r.panel(c).area - m.panel(p).area / 4.0).abs() < 1e-14);
        }
    }

    #[test]
    fn open_plan_is_rejected() {
        let m = strip();
        let mut plan = MarkedSet::default();
        plan.refine4.insert(0);
        assert!(matches!(refine_flat(&m, &plan), Err(Error::OpenPlan(_))));
    }

    #[test]
    fn parent_map_tiles_ancestors_after_three_refinements() {
        let m0 = icosphere(1.0, 1);
        let mut mesh = m0.clone();
        let mut ancestor: Vec<usize> = (0..m0.num_panels()).collect();
        for k in 0..3 {
            let marked: Vec<usize> = (0..mesh.num_panels()).filter(|t| (t * 7 + k) % 5 == 0).collect();
            let plan = close_marking(&mesh, &marked).unwrap();
            let next = refine_flat(&mesh, &plan).unwrap();
            ancestor = next.parent_map().unwrap().iter().map(|&p| ancestor[p]).collect();
            mesh = next;
        }
        mesh.validate().unwrap();
        let mut sums = vec![0.0; m0.num_panels()];
        for (t, &a) in ancestor.iter().enumerate() {
            sums[a] += mesh.panel(t).area;
        }
        for (a, s) in sums.iter().enumerate() {
            assert!((s - m0.panel(a).area).abs() < 1e-13);
        }
    }

    #[test]
    fn conforming_snaps_to_the_sphere() {
        let bg = icosphere(1.0, 6);
        let grid = NearestVertexGrid::from_mesh(&bg);
        let h = bg.mean_edge_length();
        let m = icosphere(1.0, 1);
        let r = refine_conforming(&m, &MarkedSet::all(m.num_panels()), &grid).unwrap();
        r.validate().unwrap();
        for v in r.vertices() {
            assert!((v.norm() - 1.0).abs() <= h);
        }
        let flat = refine_uniform(&m);
        let exact = 4.0 * std::f64::consts::PI;
        assert!((exact - r.total_area()).abs() < (exact - flat.total_area()).abs());
    }

    #[test]
    fn conforming_on_own_flat_refinement_equals_flat() {
        let m = icosphere(1.0, 1);
        let plan = close_marking(&m, &[0, 5, 17]).unwrap();
        let flat = refine_flat(&m, &plan).unwrap();
        let bg = refine_uniform(&m);
        let grid = NearestVertexGrid::from_mesh(&bg);
        let conf = refine_conforming(&m, &plan, &grid).unwrap();
        assert_eq!(conf.triangles(), flat.triangles());
        for (a, b) in conf.vertices().iter().zip(flat.vertices()) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn marking_is_monotone_in_fraction(
            errors in prop::collection::vec(0.0f64..10.0, 1..40),
            a in 0.01f64..1.0,
            b in 0.01f64..1.0,
        ) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let small: BTreeSet<_> = mark_elements(&errors, lo).unwrap().into_iter().collect();
            let large: BTreeSet<_> = mark_elements(&errors, hi).unwrap().into_iter().collect();
            prop_assert!(small.is_subset(&large));
        }

        #[test]
        fn closure_is_idempotent_and_refinement_is_manifold(
            picks in prop::collection::vec(0usize..320, 1..30),
        ) {
            let m = icosphere(1.0, 2);
            let plan = close_marking(&m, &picks).unwrap();
            let again = close_marking(&m, &plan.refine4.iter().copied().collect::<Vec<_>>()).unwrap();
            prop_assert_eq!(&plan, &again);
            let r = refine_flat(&m, &plan).unwrap();
            prop_assert!(r.validate().is_ok());
            prop_assert!((r.total_area() - m.total_area()).abs() < 1e-12);
        }
    }
}
