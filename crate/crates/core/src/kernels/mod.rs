//! Free-space Green's functions of the Laplace and Yukawa (screened Coulomb)
//! operators and their integration over flat triangular panels.
//!
//! Normal derivatives are taken with respect to the source point `rp` along
//! the source normal `n'`:
//!
//! ```text
//! dG_L/dn' = (r - rp)·n' / (4π |r - rp|³)
//! dG_Y/dn' = (1 + κ|r - rp|) e^{-κ|r - rp|} (r - rp)·n' / (4π |r - rp|³)
//! ```
//!
//! With outward normals the double-layer potential of a unit density on a
//! closed surface is `-1` at interior points and `-1/2` on the surface.

mod panel;
mod quadrature;
mod singular;

pub use panel::{integrate_panel, panel_integral, panel_moments, PanelMoments};
pub use quadrature::QuadratureRule;
pub use singular::{singular_moments, singular_self_integral};

use std::f64::consts::PI;

use crate::{Error, Point, Result};

/// Source–target distances at or below this are treated as coincident (Å).
pub const SINGULAR_DISTANCE: f64 = 1e-12;

const INV_4PI: f64 = 1.0 / (4.0 * PI);

fn separation(r: &Point, rp: &Point) -> Result<(Point, f64)> {
    let d = r - rp;
    let dist = d.norm();
    if dist <= SINGULAR_DISTANCE {
        return Err(Error::Singularity { distance: dist });
    }
    Ok((d, dist))
}

/// `1 / (4π|r - rp|)`.
pub fn g_laplace(r: &Point, rp: &Point) -> Result<f64> {
    let (_, dist) = separation(r, rp)?;
    Ok(INV_4PI / dist)
}

/// `e^{-κ|r - rp|} / (4π|r - rp|)`.
pub fn g_yukawa(r: &Point, rp: &Point, kappa: f64) -> Result<f64> {
    let (_, dist) = separation(r, rp)?;
    Ok((-kappa * dist).exp() * INV_4PI / dist)
}

pub fn dgdn_laplace(r: &Point, rp: &Point, normal: &Point) -> Result<f64> {
    let (d, dist) = separation(r, rp)?;
    Ok(INV_4PI * d.dot(normal) / (dist * dist * dist))
}

pub fn dgdn_yukawa(r: &Point, rp: &Point, normal: &Point, kappa: f64) -> Result<f64> {
    let (d, dist) = separation(r, rp)?;
    let kr = kappa * dist;
    Ok((1.0 + kr) * (-kr).exp() * INV_4PI * d.dot(normal) / (dist * dist * dist))
}

/// Single- or double-layer kernel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layer {
    Single,
    Double,
}

/// Green's function of `-Δ + κ²`; `κ = 0` is the Laplace kernel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GreenKernel {
    pub kappa: f64,
}

impl GreenKernel {
    pub fn laplace() -> Self {
        GreenKernel { kappa: 0.0 }
    }

    pub fn yukawa(kappa: f64) -> Self {
        GreenKernel { kappa }
    }

    pub fn eval(&self, layer: Layer, target: &Point, source: &Point, normal: &Point) -> Result<f64> {
        match (layer, self.kappa == 0.0) {
            (Layer::Single, true) => g_laplace(target, source),
            (Layer::Single, false) => g_yukawa(target, source, self.kappa),
            (Layer::Double, true) => dgdn_laplace(target, source, normal),
            (Layer::Double, false) => dgdn_yukawa(target, source, normal, self.kappa),
        }
    }
}

/// All four kernels at one source point.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct KernelValues {
    pub single_laplace: f64,
    pub double_laplace: f64,
    pub single_yukawa: f64,
    pub double_yukawa: f64,
}

#[inline]
pub(crate) fn kernel_values(target: &Point, source: &Point, normal: &Point, kappa: f64) -> KernelValues {
    let d = target - source;
    let inv = 1.0 / d.norm();
    let single_laplace = INV_4PI * inv;
    let double_laplace = single_laplace * inv * inv * d.dot(normal);
    if kappa == 0.0 {
        return KernelValues {
            single_laplace,
            double_laplace,
            single_yukawa: single_laplace,
            double_yukawa: double_laplace,
        };
    }
    let kr = kappa / inv;
    let e = (-kr).exp();
    KernelValues {
        single_laplace,
        double_laplace,
        single_yukawa: e * single_laplace,
        double_yukawa: (1.0 + kr) * e * double_laplace,
    }
}
