use super::{kernel_values, GreenKernel, Layer, QuadratureRule};
use crate::mesh::Panel;
use crate::Point;

/// Targets closer than this many sub-panel diameters to a sub-panel centroid
/// trigger another 4-way split.
pub const NEAR_FACTOR: f64 = 2.0;
/// Maximum number of nested splits for near-singular panels.
pub const NEAR_MAX_DEPTH: u32 = 3;

/// Integrals of the four kernels over one panel against the panel's linear
/// hat functions, in the panel's vertex order. Summing the three entries of a
/// kernel gives its integral against the constant one.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PanelMoments {
    pub single_laplace: [f64; 3],
    pub double_laplace: [f64; 3],
    pub single_yukawa: [f64; 3],
    pub double_yukawa: [f64; 3],
}

fn sum3(a: &[f64; 3]) -> f64 {
    a[0] + a[1] + a[2]
}

impl PanelMoments {
    pub fn single_laplace_total(&self) -> f64 {
        sum3(&self.single_laplace)
    }

    pub fn double_laplace_total(&self) -> f64 {
        sum3(&self.double_laplace)
    }

    pub fn single_yukawa_total(&self) -> f64 {
        sum3(&self.single_yukawa)
    }

    pub fn double_yukawa_total(&self) -> f64 {
        sum3(&self.double_yukawa)
    }
}

/// `∫_T f dA` with the given rule.
pub fn integrate_panel(f: impl Fn(&Point) -> f64, panel: &Panel, rule: &QuadratureRule) -> f64 {
    let s: f64 = rule
        .points
        .iter()
        .zip(&rule.weights)
        .map(|(b, w)| w * f(&panel.point_at(b)))
        .sum();
    s * panel.area
}

/// Integral of one kernel over a panel for a target off the panel.
///
/// Near-singular targets are handled by recursive subdivision as in
/// [`panel_moments`].
pub fn panel_integral(
    kernel: &GreenKernel,
    layer: Layer,
    target: &Point,
    panel: &Panel,
    rule: &QuadratureRule,
) -> f64 {
    let m = panel_moments(target, panel, kernel.kappa, rule);
    match (layer, kernel.kappa == 0.0) {
        (Layer::Single, true) => m.single_laplace_total(),
        (Layer::Single, false) => m.single_yukawa_total(),
        (Layer::Double, true) => m.double_laplace_total(),
        (Layer::Double, false) => m.double_yukawa_total(),
    }
}

/// Kernel moments for a target that is not on the panel.
///
/// Sub-triangles whose centroid lies within [`NEAR_FACTOR`] diameters of the
/// target are split into four, up to [`NEAR_MAX_DEPTH`] levels.
pub fn panel_moments(target: &Point, panel: &Panel, kappa: f64, rule: &QuadratureRule) -> PanelMoments {
    let mut out = PanelMoments::default();
    let identity = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    accumulate(target, panel, &identity, panel.area, 0, kappa, rule, &mut out);
    out
}

#[allow(clippy::too_many_arguments)]
fn accumulate(
    target: &Point,
    panel: &Panel,
    sub: &[[f64; 3]; 3],
    area: f64,
    depth: u32,
    kappa: f64,
    rule: &QuadratureRule,
    out: &mut PanelMoments,
) {
    if depth < NEAR_MAX_DEPTH {
        let corners = sub.map(|b| panel.point_at(&b));
        let centroid = (corners[0] + corners[1] + corners[2]) / 3.0;
        let diameter = (corners[0] - corners[1])
            .norm()
            .max((corners[1] - corners[2]).norm())
            .max((corners[2] - corners[0]).norm());
        if (target - centroid).norm() < NEAR_FACTOR * diameter {
            let mid = |i: usize, j: usize| -> [f64; 3] {
                [
                    0.5 * (sub[i][0] + sub[j][0]),
                    0.5 * (sub[i][1] + sub[j][1]),
                    0.5 * (sub[i][2] + sub[j][2]),
                ]
            };
            let (m01, m12, m20) = (mid(0, 1), mid(1, 2), mid(2, 0));
            let children = [
                [sub[0], m01, m20],
                [m01, sub[1], m12],
                [m20, m12, sub[2]],
                [m01, m12, m20],
            ];
            for child in &children {
                accumulate(target, panel, child, 0.25 * area, depth + 1, kappa, rule, out);
            }
            return;
        }
    }
    for (q, w) in rule.points.iter().zip(&rule.weights) {
        let mut b = [0.0; 3];
        for (k, corner) in sub.iter().enumerate() {
            for a in 0..3 {
                b[a] += q[k] * corner[a];
            }
        }
        let x = panel.point_at(&b);
        let kv = kernel_values(target, &x, &panel.normal, kappa);
        let wa = w * area;
        for a in 0..3 {
            let wb = wa * b[a];
            out.single_laplace[a] += wb * kv.single_laplace;
            out.double_laplace[a] += wb * kv.double_laplace;
            out.single_yukawa[a] += wb * kv.single_yukawa;
            out.double_yukawa[a] += wb * kv.double_yukawa;
        }
    }
}
