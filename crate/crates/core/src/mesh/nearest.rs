use std::collections::HashMap;

use crate::Point;

/// Nearest-vertex queries against a fixed point cloud through a uniform grid.
///
/// Cell size is twice the mean edge length of the background mesh, so a query
/// near the surface usually touches a handful of cells.
#[derive(Clone, Debug)]
pub struct NearestVertexGrid {
    points: Vec<Point>,
    origin: Point,
    cell: f64,
    cells: HashMap<[i64; 3], Vec<usize>>,
}

impl NearestVertexGrid {
    pub fn new(points: Vec<Point>, cell: f64) -> Self {
        assert!(cell > 0.0 && cell.is_finite(), "grid cell size must be positive");
        let origin = points.iter().fold(
            Point::repeat(f64::INFINITY),
            |acc, p| acc.inf(p),
        );
        let origin = if points.is_empty() { Point::zeros() } else { origin };
        let mut grid = NearestVertexGrid {
            points,
            origin,
            cell,
            cells: HashMap::new(),
        };
        for i in 0..grid.points.len() {
            let key = grid.key(&grid.points[i]);
            grid.cells.entry(key).or_default().push(i);
        }
        grid
    }

    /// Grid over the vertices of `mesh` with cell = 2 × mean edge length.
    pub fn from_mesh(mesh: &super::SurfaceMesh) -> Self {
        Self::new(mesh.vertices().to_vec(), 2.0 * mesh.mean_edge_length())
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    fn key(&self, p: &Point) -> [i64; 3] {
        let r = (p - self.origin) / self.cell;
        [r.x.floor() as i64, r.y.floor() as i64, r.z.floor() as i64]
    }

    /// Index of the closest point and its distance. Ties go to the lower index.
    pub fn nearest(&self, q: &Point) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let center = self.key(q);
        let mut best: Option<(usize, f64)> = None;
        let mut ring: i64 = 0;
        loop {
            for dx in -ring..=ring {
                for dy in -ring..=ring {
                    for dz in -ring..=ring {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != ring {
                            continue;
                        }
                        let key = [center[0] + dx, center[1] + dy, center[2] + dz];
                        if let Some(ids) = self.cells.get(&key) {
                            for &i in ids {
                                let d = (self.points[i] - q).norm();
                                let better = match best {
                                    None => true,
                                    Some((bi, bd)) => d < bd || (d == bd && i < bi),
                                };
                                if better {
                                    best = Some((i, d));
                                }
                            }
                        }
                    }
                }
            }
            // Every cell in ring r + 1 is at least r cells away.
            if let Some((_, d)) = best {
                if d <= ring as f64 * self.cell {
                    return best;
                }
            }
            ring += 1;
            if ring > 1 << 20 {
                return best;
            }
        }
    }
}
