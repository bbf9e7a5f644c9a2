use std::f64::consts::PI;
use std::num::NonZeroUsize;
use std::sync::LazyLock;

use gauss_quad::GaussLegendre;

use super::PanelMoments;
use crate::mesh::Panel;
use crate::{Error, Point, Result};

/// Gauss–Legendre points per sub-triangle in the angular direction.
pub const ANGULAR_POINTS: usize = 16;

/// Tolerance, relative to the panel diameter, for a target to count as on the panel.
const ON_PANEL_TOLERANCE: f64 = 1e-9;

// Nodes and weights mapped to [0, 1].
static ANGULAR_RULE: LazyLock<Vec<(f64, f64)>> = LazyLock::new(|| {
    let n = NonZeroUsize::new(ANGULAR_POINTS).expect("nonzero point count");
    GaussLegendre::new(n)
        .as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w))
        .collect()
});

/// `∫_T 1/(4π|x - target|) dA` for a target on the panel.
pub fn singular_self_integral(panel: &Panel, target: &Point) -> Result<f64> {
    Ok(singular_moments(panel, target, 0.0)?.single_laplace_total())
}

/// Kernel moments for a target lying on the panel.
///
/// The panel is split into the three triangles joining the target to each
/// edge. On each, polar coordinates centred at the target cancel the `1/r`
/// singularity; the radial integral is done in closed form and the angular
/// one by Gauss–Legendre in the Gudermannian of the angle from the foot of
/// the perpendicular, which makes the Laplace integrand polynomial. Double
/// layers vanish because the target lies in the panel plane.
pub fn singular_moments(panel: &Panel, target: &Point, kappa: f64) -> Result<PanelMoments> {
    let bary = panel.barycentric(target);
    let off_plane = (target - panel.centroid).dot(&panel.normal).abs();
    let tol = ON_PANEL_TOLERANCE;
    if off_plane > tol * panel.diameter || bary.iter().any(|&b| b < -tol) {
        return Err(Error::InvalidArgument(format!(
            "singular integration target is not on the panel (barycentric {bary:?}, height {off_plane:e})"
        )));
    }
    let mut out = PanelMoments::default();
    for k in 0..3 {
        let b = panel.vertices[k];
        let c = panel.vertices[(k + 1) % 3];
        let Some([w_apex, w_b, w_c]) = apex_moments(target, &b, &c, kappa, panel.diameter) else {
            continue;
        };
        for a in 0..3 {
            let hat_b = if a == k { 1.0 } else { 0.0 };
            let hat_c = if a == (k + 1) % 3 { 1.0 } else { 0.0 };
            let laplace = bary[a] * w_apex[0] + hat_b * w_b[0] + hat_c * w_c[0];
            let yukawa = bary[a] * w_apex[1] + hat_b * w_b[1] + hat_c * w_c[1];
            out.single_laplace[a] += laplace;
            out.single_yukawa[a] += yukawa;
        }
    }
    Ok(out)
}

/// `1 - e^{-x}(1 + x)` without cancellation for small `x`.
fn one_minus_exp_poly(x: f64) -> f64 {
    if x < 1e-2 {
        let x2 = x * x;
        x2 * (0.5 - x / 3.0 + x2 / 8.0 - x2 * x / 30.0 + x2 * x2 / 144.0)
    } else {
        1.0 - (-x).exp() * (1.0 + x)
    }
}

/// Moments of `G / (4π r)` (Laplace, Yukawa) over the triangle `(apex, b, c)`
/// against its three hat functions, or `None` for a degenerate triangle.
fn apex_moments(apex: &Point, b: &Point, c: &Point, kappa: f64, scale: f64) -> Option<[[f64; 2]; 3]> {
    let edge = c - b;
    let len = edge.norm();
    if len <= 1e-14 * scale {
        return None;
    }
    let e = edge / len;
    let foot = b + e * (apex - b).dot(&e);
    let h = (apex - foot).norm();
    if h <= 1e-12 * scale {
        return None;
    }
    let tau_b = (b - foot).dot(&e);
    let tau_c = tau_b + len;
    let s_b = (tau_b / h).asinh();
    let s_c = (tau_c / h).asinh();
    let span = s_c - s_b;

    let mut m = [[0.0; 2]; 3];
    for &(x, w) in ANGULAR_RULE.iter() {
        let s = s_b + x * span;
        let tau = h * s.sinh();
        let rho = h * s.cosh();
        let t = (tau - tau_b) / len;
        // dθ = sech(s) ds and ρ sech(s) = h
        let ds = w * span;
        let theta_w = ds / s.cosh();

        let lap_apex = 0.5 * h * ds;
        let lap_edge = 0.5 * h * ds;
        let (yuk_apex, yuk_edge) = if kappa == 0.0 {
            (lap_apex, lap_edge)
        } else {
            let xr = kappa * rho;
            let a_int = -(-xr).exp_m1() / kappa;
            let b_int = one_minus_exp_poly(xr) / (kappa * kappa);
            ((a_int - b_int / rho) * theta_w, b_int / rho * theta_w)
        };
        m[0][0] += lap_apex;
        m[1][0] += lap_edge * (1.0 - t);
        m[2][0] += lap_edge * t;
        m[0][1] += yuk_apex;
        m[1][1] += yuk_edge * (1.0 - t);
        m[2][1] += yuk_edge * t;
    }
    let inv4pi = 1.0 / (4.0 * PI);
    for row in &mut m {
        row[0] *= inv4pi;
        row[1] *= inv4pi;
    }
    Some(m)
}
