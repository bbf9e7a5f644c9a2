//! Reference values: the Kirkwood series for point charges in a dielectric
//! sphere with a screened exterior, the Born ion, and Richardson
//! extrapolation.

use crate::solver::{BiePhysics, ChargeSet};
use crate::{Error, Point, Result};

pub const DEFAULT_TERMS: usize = 50;
pub const MAX_TERMS: usize = 200;
/// Relative size of the last term at which the series counts as converged.
pub const SERIES_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct SphereCase {
    /// Å, centred at the origin.
    pub radius: f64,
    pub charges: ChargeSet,
    pub physics: BiePhysics,
    pub n_terms: usize,
}

impl SphereCase {
    pub fn new(radius: f64, charges: ChargeSet, physics: BiePhysics) -> Result<Self> {
        let case = SphereCase { radius, charges, physics, n_terms: DEFAULT_TERMS };
        case.validate()?;
        Ok(case)
    }

    pub fn with_terms(mut self, n_terms: usize) -> Result<Self> {
        self.n_terms = n_terms;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) {
            return Err(Error::InvalidArgument(format!("sphere radius {} must be positive", self.radius)));
        }
        if self.n_terms == 0 || self.n_terms > MAX_TERMS {
            return Err(Error::InvalidArgument(format!("n_terms {} outside 1..={MAX_TERMS}", self.n_terms)));
        }
        self.physics.validate()?;
        for (index, p) in self.charges.positions().iter().enumerate() {
            if p.norm() >= self.radius {
                return Err(Error::Domain { index, winding: 0.0 });
            }
        }
        Ok(())
    }
}

/// Unit charge at `(0, 0, 0.5)` in a unit sphere.
pub fn off_center_charges() -> ChargeSet {
    ChargeSet::single(Point::new(0.0, 0.0, 0.5), 1.0)
}

/// `+1` at `0.62 ẑ` and a `-1/+1` pair at radius 0.62 either side of `-ẑ`,
/// 10° apart, in the y–z plane.
pub fn charge_dipole_charges() -> ChargeSet {
    let r = 0.62;
    let (s, c) = 5f64.to_radians().sin_cos();
    ChargeSet::new(
        vec![Point::new(0.0, 0.0, r), Point::new(0.0, -r * s, -r * c), Point::new(0.0, r * s, -r * c)],
        vec![1.0, -1.0, 1.0],
    )
    .expect("three finite charges")
}

/// `ΔG` of a centred ion with an unscreened exterior, kcal/mol.
pub fn born_energy(charge: f64, radius: f64, physics: &BiePhysics) -> f64 {
    let c = physics.energy_unit / (4.0 * std::f64::consts::PI);
    0.5 * c * charge * charge / radius * (1.0 / physics.eps_w - 1.0 / physics.eps_m)
}

/// `x k_n'(x) / k_n(x)` for the modified spherical Bessel function of the
/// second kind, from the ratio `k_{m-1}/k_m` built upward. The upward
/// recurrence follows the dominant solution, so it is stable for all orders.
pub fn bessel_k_log_derivative(n: usize, x: f64) -> f64 {
    if x == 0.0 {
        return -(n as f64 + 1.0);
    }
    // rho = k_{m-1} / k_m with k_{-1} = k_0
    let mut rho = 1.0;
    for m in 0..n {
        rho = 1.0 / (rho + (2 * m + 1) as f64 / x);
    }
    -x * rho - (n as f64 + 1.0)
}

fn legendre(n: usize, x: f64) -> f64 {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return p0;
    }
    for k in 1..n {
        let p2 = ((2 * k + 1) as f64 * x * p1 - k as f64 * p0) / (k + 1) as f64;
        p0 = p1;
        p1 = p2;
    }
    p1
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeriesValue {
    /// kcal/mol.
    pub value: f64,
    pub terms: usize,
    /// Bound on the omitted terms.
    pub tail: f64,
}

/// Kirkwood's multipole series for the reaction energy, with terms added
/// until the last one falls below [`SERIES_TOLERANCE`] of the sum.
pub fn kirkwood_series(case: &SphereCase) -> Result<SeriesValue> {
    case.validate()?;
    let a = case.radius;
    let BiePhysics { eps_m, eps_w, kappa, energy_unit } = case.physics;
    let c = energy_unit / (4.0 * std::f64::consts::PI);
    let pos = case.charges.positions();
    let q = case.charges.charges();
    let radii: Vec<f64> = pos.iter().map(|p| p.norm()).collect();
    let ratio = radii.iter().fold(0.0f64, |m, r| m.max(r / a)).powi(2);

    let mut sum = 0.0;
    let mut last_bound = f64::INFINITY;
    for n in 0..case.n_terms {
        let ln = bessel_k_log_derivative(n, kappa * a);
        let nf = n as f64;
        let f = (eps_m * (nf + 1.0) + eps_w * ln) / (eps_m * nf - eps_w * ln);
        let (mut term, mut bound) = (0.0, 0.0);
        for k in 0..q.len() {
            for l in 0..q.len() {
                let rr = (radii[k] * radii[l]).powi(n as i32) / a.powi(2 * n as i32 + 1);
                let cos = if radii[k] == 0.0 || radii[l] == 0.0 {
                    1.0
                } else {
                    (pos[k].dot(&pos[l]) / (radii[k] * radii[l])).clamp(-1.0, 1.0)
                };
                let w = 0.5 * c * q[k] * q[l] / eps_m * rr * f;
                term += w * legendre(n, cos);
                bound += w.abs();
            }
        }
        sum += term;
        last_bound = bound;
        if bound <= SERIES_TOLERANCE * sum.abs() {
            let tail = if ratio < 1.0 { bound * ratio / (1.0 - ratio) } else { f64::INFINITY };
            return Ok(SeriesValue { value: sum, terms: n + 1, tail });
        }
    }
    let tail = if ratio < 1.0 { last_bound * ratio / (1.0 - ratio) } else { f64::INFINITY };
    Err(Error::SeriesNotConverged { n_terms: case.n_terms, tail })
}

/// Solvation energy of the sphere case in kcal/mol.
pub fn kirkwood_energy(case: &SphereCase) -> Result<f64> {
    kirkwood_series(case).map(|s| s.value)
}

/// Extrapolates `f1, f2, f3` from meshes with N, 4N and 16N elements.
/// Returns the limit estimate and the observed order in `1/N`.
pub fn richardson(values: [f64; 3]) -> Result<(f64, f64)> {
    let [f1, f2, f3] = values;
    let (d1, d2) = (f2 - f1, f3 - f2);
    if d1 == 0.0 || d2 == 0.0 {
        return Err(Error::Undefined(format!("zero difference in Richardson sequence {values:?}")));
    }
    if d1.signum() != d2.signum() {
        return Err(Error::NonMonotone(format!("differences {d1:e} and {d2:e} change sign")));
    }
    let p = (d1 / d2).ln() / 4f64.ln();
    Ok((f3 + d2 / (4f64.powf(p) - 1.0), p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sphere_physics() -> BiePhysics {
        BiePhysics::default()
    }

    #[test]
    fn centred_charge_is_born() {
        let phys = BiePhysics::new(1.0, 80.0, 0.0).unwrap();
        let case = SphereCase::new(1.0, ChargeSet::single(Point::zeros(), 1.0), phys).unwrap();
        let s = kirkwood_series(&case).unwrap();
        assert_eq!(s.terms, 2);
        let exact = 332.0636817823835 * 0.5 * (1.0 / 80.0 - 1.0);
        assert!((s.value - exact).abs() < 1e-12 * exact.abs());
        assert!((born_energy(1.0, 1.0, &phys) - exact).abs() < 1e-12 * exact.abs());
    }

    #[test]
    fn centred_screened_charge_matches_debye_huckel_born() {
        let phys = BiePhysics::new(2.0, 80.0, 0.3).unwrap();
        let case = SphereCase::new(1.5, ChargeSet::single(Point::zeros(), -2.0), phys).unwrap();
        let exact = 332.0636817823835 * 0.5 * 4.0 / 1.5 * (1.0 / (80.0 * (1.0 + 0.3 * 1.5)) - 0.5);
        assert!((kirkwood_energy(&case).unwrap() - exact).abs() < 1e-12 * exact.abs());
    }

    #[test]
    fn no_contrast_gives_zero() {
        let phys = BiePhysics::new(3.0, 3.0, 0.0).unwrap();
        let case = SphereCase::new(1.0, charge_dipole_charges(), phys).unwrap();
        assert_eq!(kirkwood_energy(&case).unwrap(), 0.0);
    }

    #[test]
    fn off_center_reference_value() {
        let case = SphereCase::new(1.0, off_center_charges(), sphere_physics()).unwrap();
        let e = kirkwood_energy(&case).unwrap();
        assert!((e - -52.462648).abs() < 5e-5, "{e}");
    }

    #[test]
    fn charge_dipole_reference_value() {
        let case = SphereCase::new(1.0, charge_dipole_charges(), sphere_physics()).unwrap();
        let e = kirkwood_energy(&case).unwrap();
        assert!((e - -65.467255).abs() < 5e-5, "{e}");
    }

    #[test]
    fn log_derivative_matches_closed_forms() {
        // k_1 ∝ e^{-x}(1 + x)/x², k_2 ∝ e^{-x}(x² + 3x + 3)/x³
        let k1 = |x: f64| (-x).exp() * (1.0 + x) / (x * x);
        let k2 = |x: f64| (-x).exp() * (x * x + 3.0 * x + 3.0) / (x * x * x);
        for x in [0.05, 0.125, 1.0, 7.0] {
            let h = 1e-6 * x;
            for (n, k) in [(1usize, &k1 as &dyn Fn(f64) -> f64), (2, &k2)] {
                let fd = x * (k(x + h) - k(x - h)) / (2.0 * h) / k(x);
                assert!((bessel_k_log_derivative(n, x) - fd).abs() < 1e-7 * fd.abs(), "n={n} x={x}");
            }
            assert!((bessel_k_log_derivative(0, x) + x + 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn series_differences_shrink() {
        for charges in [off_center_charges(), charge_dipole_charges()] {
            let value = |n: usize| {
                let case = SphereCase::new(1.0, charges.clone(), sphere_physics()).unwrap();
                direct_sum(&SphereCase { n_terms: n, ..case })
            };
            let mut prev = f64::INFINITY;
            for n in (2..40).step_by(4) {
                let d = (value(n + 10) - value(n)).abs();
                assert!(d <= prev, "n={n}");
                prev = d;
            }
        }
    }

    /// Plain partial sum of the first `n_terms` terms.
    fn direct_sum(case: &SphereCase) -> f64 {
        let a = case.radius;
        let p = case.physics;
        let c = p.energy_unit / (4.0 * std::f64::consts::PI);
        let pos = case.charges.positions();
        let q = case.charges.charges();
        let mut sum = 0.0;
        for n in 0..case.n_terms {
            let ln = bessel_k_log_derivative(n, p.kappa * a);
            let nf = n as f64;
            let f = (p.eps_m * (nf + 1.0) + p.eps_w * ln) / (p.eps_m * nf - p.eps_w * ln);
            for k in 0..q.len() {
                for l in 0..q.len() {
                    let (rk, rl) = (pos[k].norm(), pos[l].norm());
                    let cos = pos[k].dot(&pos[l]) / (rk * rl);
                    sum += 0.5 * c * q[k] * q[l] / p.eps_m * (rk * rl).powi(n as i32) / a.powi(2 * n as i32 + 1)
                        * f
                        * legendre(n, cos);
                }
            }
        }
        sum
    }

    #[test]
    fn truncation_reports_tail() {
        let charges = ChargeSet::single(Point::new(0.0, 0.0, 0.95), 1.0);
        let case = SphereCase::new(1.0, charges, sphere_physics()).unwrap().with_terms(5).unwrap();
        match kirkwood_series(&case) {
            Err(Error::SeriesNotConverged { n_terms, tail }) => {
                assert_eq!(n_terms, 5);
                assert!(tail > 0.0 && tail.is_finite());
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
        assert!(SphereCase::new(1.0, off_center_charges(), sphere_physics()).unwrap().with_terms(201).is_err());
    }

    #[test]
    fn charge_outside_is_rejected() {
        let charges = ChargeSet::single(Point::new(0.0, 1.2, 0.0), 1.0);
        assert!(matches!(SphereCase::new(1.0, charges, sphere_physics()), Err(Error::Domain { .. })));
    }

    #[test]
    fn legendre_values() {
        assert!((legendre(2, 0.3) - 0.5 * (3.0 * 0.09 - 1.0)).abs() < 1e-15);
        assert!((legendre(3, -0.7) - 0.5 * (5.0 * -0.343 - 3.0 * -0.7)).abs() < 1e-15);
        assert_eq!(legendre(7, 1.0), 1.0);
    }

    #[test]
    fn richardson_examples() {
        let (x, p) = richardson([-4.0, -4.75, -4.9375]).unwrap();
        assert!((x + 5.0).abs() < 1e-14 && (p - 1.0).abs() < 1e-14);
        let (x, p) = richardson([3.0 + 1.0, 3.0 + 1.0 / 16.0, 3.0 + 1.0 / 256.0]).unwrap();
        assert!((x - 3.0).abs() < 1e-14 && (p - 2.0).abs() < 1e-14);
        assert!(matches!(richardson([1.0, 1.0, 1.0]), Err(Error::Undefined(_))));
        assert!(matches!(richardson([1.0, 2.0, 1.5]), Err(Error::NonMonotone(_))));
    }

    proptest! {
        #[test]
        fn richardson_commutes_with_affine_maps(
            limit in -100.0f64..100.0,
            c in 0.1f64..10.0,
            p in 0.5f64..3.0,
            a in 0.1f64..5.0,
            b in -50.0f64..50.0,
        ) {
            let f = [0, 1, 2].map(|k| limit + c * 4f64.powf(-p * k as f64));
            let (x, q) = richardson(f).unwrap();
            let (y, r) = richardson(f.map(|v| a * v + b)).unwrap();
            prop_assert!((y - (a * x + b)).abs() < 1e-9 * (1.0 + y.abs()));
            prop_assert!((q - r).abs() < 1e-9);
            prop_assert!((q - p).abs() < 1e-9);
            prop_assert!((x - limit).abs() < 1e-9 * (1.0 + limit.abs()));
        }

        #[test]
        fn kirkwood_is_rotation_invariant(axis in (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0), angle in 0.0f64..std::f64::consts::TAU) {
            let axis = Point::new(axis.0, axis.1, axis.2);
            prop_assume!(axis.norm() > 1e-3);
            let rot = nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle);
            let base = charge_dipole_charges();
            let rotated = ChargeSet::new(
                base.positions().iter().map(|p| rot * p).collect(),
                base.charges().to_vec(),
            ).unwrap();
            let e0 = kirkwood_energy(&SphereCase::new(1.0, base, sphere_physics()).unwrap()).unwrap();
            let e1 = kirkwood_energy(&SphereCase::new(1.0, rotated, sphere_physics()).unwrap()).unwrap();
            prop_assert!((e0 - e1).abs() < 1e-10 * e0.abs());
        }
    }
}
