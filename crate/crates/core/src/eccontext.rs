//! Stretch-test protocol and elastic-context extraction.
//!
//! A sample is stretched along x in equal displacement increments until the
//! smoothed stress reaches σ_max. The recorded (strain, stress) curve is then
//! sampled at equidistant stress levels σ_i = i·σ_max/n, and each entry of the
//! elastic context is the secant modulus e_i = σ_i/ε_i. With n = 1 this is the
//! classic elastic modulus at σ_max.

use serde::{Deserialize, Serialize};

use crate::clothsim::{savitzky_golay, Cloth, GripperAction, SimConfig};
use crate::error::{Error, Result};
use crate::material::{MaterialLaw, SampleGeometry};

/// Smoothing window applied to every recorded force trace.
pub const SMOOTH_WINDOW: usize = 21;
/// Smoothing polynomial degree.
pub const SMOOTH_DEGREE: usize = 3;
/// The stretch protocol gives up if σ_max is not reached by this strain.
pub const STRAIN_CAP: f64 = 1.0;

/// Ordered (strain, stress) samples recorded during a stretch test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StressStrainCurve {
    /// (ε, σ) pairs; strains non-decreasing, first point (0, 0).
    pub points: Vec<(f64, f64)>,
    pub geometry: SampleGeometry,
}

impl StressStrainCurve {
    /// Analytic curve straight from the law, bypassing simulation. Used by
    /// oracles and size-consistency checks.
    pub fn from_law(
        law: &MaterialLaw,
        geometry: SampleGeometry,
        sigma_max: f64,
        n_points: usize,
    ) -> Result<Self> {
        let eps_max = law.strain_at_stress(sigma_max)?;
        let mut points = Vec::with_capacity(n_points + 1);
        for j in 0..=n_points {
            let eps = eps_max * j as f64 / n_points as f64;
            points.push((eps, law.stress_at(eps)?));
        }
        Ok(StressStrainCurve { points, geometry })
    }

    pub fn max_stress(&self) -> f64 {
        self.points.iter().map(|p| p.1).fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() || self.points[0] != (0.0, 0.0) {
            return Err(Error::Protocol("curve must start at (0, 0)".into()));
        }
        for w in self.points.windows(2) {
            if w[1].0 < w[0].0 {
                return Err(Error::Protocol("strains must be non-decreasing".into()));
            }
        }
        if self.points.iter().any(|p| p.1 < 0.0) {
            return Err(Error::Protocol("stresses must be >= 0".into()));
        }
        Ok(())
    }
}

/// The elastic context: n secant moduli at equidistant stress levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcVector {
    /// Secant moduli e_i in Pa, i = 1..n.
    pub moduli: Vec<f64>,
    pub sigma_max: f64,
    pub n_ec: usize,
}

/// Serialized record of one characterization run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EcRecord {
    pub material_id: u32,
    pub sigma_max: f64,
    pub n_ec: usize,
    pub moduli: Vec<f64>,
    pub curve: Vec<(f64, f64)>,
}

/// Drive the grippers apart in equal increments until the smoothed stress
/// crosses `sigma_max`, then truncate at the first crossing.
///
/// `n_steps` controls the recording resolution (must be ≥ 33 so the smoothed
/// trace always exceeds the filter window). Gravity and collision are
/// disabled for the test regardless of `config`.
pub fn run_stretch_test(
    law: &MaterialLaw,
    geometry: &SampleGeometry,
    config: &SimConfig,
    sigma_max: f64,
    n_steps: usize,
) -> Result<StressStrainCurve> {
    if n_steps < 33 {
        return Err(Error::Protocol(format!(
            "n_steps must be >= 33, got {n_steps}"
        )));
    }
    if !(sigma_max > 0.0) {
        return Err(Error::Protocol("sigma_max must be > 0".into()));
    }
    // The protocol is quasi-static: gravity and collision off, node drag
    // rescaled to the mesh so the settle loop actually converges.
    let mut cfg = config.clone();
    cfg.gravity = [0.0; 3];
    cfg.sphere_radius = 0.0;
    cfg.damping = SimConfig::protocol_for(geometry, law).damping;
    let cloth = Cloth::new(*geometry, law.clone(), cfg)?;
    let settle = cloth.settle_params();
    let area = geometry.cross_section;
    let l0 = geometry.rest_length;

    // Coarse pre-pass: find the raw crossing strain so the recording pass can
    // place its samples densely below it whatever the material's stiffness.
    let coarse = STRAIN_CAP / 50.0;
    let mut state = cloth.rest_state();
    let mut eps_hit = None;
    for j in 1..=50 {
        let reading = cloth.step_settled(&mut state, &GripperAction::stretch_x(coarse * l0), &settle)?;
        if reading.magnitude / area >= sigma_max {
            eps_hit = Some(j as f64 * coarse);
            break;
        }
    }
    let eps_hit = eps_hit.ok_or_else(|| {
        Error::Protocol(format!(
            "material {} cannot reach sigma_max {sigma_max} Pa within strain {STRAIN_CAP}",
            law.id
        ))
    })?;

    // Recording pass.
    let delta = eps_hit * 1.12 / n_steps as f64;
    let max_steps = (n_steps as f64 * 1.4).ceil() as usize;
    let mut state = cloth.rest_state();
    let mut strains = vec![0.0];
    let mut forces = vec![0.0];
    for j in 1..=max_steps {
        let reading =
            cloth.step_settled(&mut state, &GripperAction::stretch_x(delta * l0), &settle)?;
        strains.push(j as f64 * delta);
        forces.push(reading.magnitude);
        if reading.magnitude / area >= 1.06 * sigma_max && j + 1 >= SMOOTH_WINDOW {
            break;
        }
    }
    if forces.len() < SMOOTH_WINDOW {
        return Err(Error::Protocol(format!(
            "only {} samples recorded before crossing; raise n_steps",
            forces.len()
        )));
    }

    let smoothed = savitzky_golay(&forces, SMOOTH_WINDOW, SMOOTH_DEGREE)?;
    let mut points = Vec::with_capacity(smoothed.len());
    points.push((0.0, 0.0));
    let mut crossed = false;
    for (j, f) in smoothed.iter().enumerate().skip(1) {
        let sigma = (f / area).max(0.0);
        points.push((strains[j], sigma));
        if sigma >= sigma_max {
            crossed = true;
            break;
        }
    }
    if !crossed {
        return Err(Error::Protocol(format!(
            "smoothed stress never crossed sigma_max {sigma_max} Pa for material {}",
            law.id
        )));
    }
    let curve = StressStrainCurve {
        points,
        geometry: *geometry,
    };
    curve.validate()?;
    Ok(curve)
}

/// Invert the curve at σ_i = i·σ_max/n and return the secant moduli.
///
/// σ = 0 is excluded from the sampling grid: the first level is σ_max/n, so
/// with n = 1 this recovers the elastic modulus at σ_max.
pub fn compute_ec(curve: &StressStrainCurve, n_ec: usize, sigma_max: f64) -> Result<EcVector> {
    if n_ec < 1 {
        return Err(Error::Domain("n_ec must be >= 1".into()));
    }
    // Rounding headroom: a curve built to end exactly at σ_max may undershoot
    // by a few ulps.
    let top = curve.max_stress();
    if top < sigma_max * (1.0 - 1e-9) {
        return Err(Error::Protocol(format!(
            "curve reaches only {top:.1} Pa of the requested {sigma_max} Pa"
        )));
    }
    // Strictly increasing stress: drop any sample whose smoothed stress does
    // not exceed the last kept one (local plateaus keep their first point).
    let mut kept: Vec<(f64, f64)> = Vec::with_capacity(curve.points.len());
    for &(eps, sigma) in &curve.points {
        match kept.last() {
            None => kept.push((eps, sigma)),
            Some(&(_, last)) if sigma > last => kept.push((eps, sigma)),
            _ => {}
        }
    }
    if kept.len() < 2 {
        return Err(Error::Protocol(
            "curve has no invertible stress progression".into(),
        ));
    }

    let recorded_top = kept.last().unwrap().1;
    let mut moduli = Vec::with_capacity(n_ec);
    for i in 1..=n_ec {
        let sigma_i = (sigma_max * i as f64 / n_ec as f64).min(recorded_top);
        let eps_i = invert_monotone(&kept, sigma_i)?;
        if !(eps_i > 0.0) {
            return Err(Error::Protocol(format!(
                "non-invertible curve at stress {sigma_i} Pa"
            )));
        }
        moduli.push(sigma_i / eps_i);
    }
    Ok(EcVector {
        moduli,
        sigma_max,
        n_ec,
    })
}

/// Piecewise-linear interpolation of ε(σ) over strictly increasing samples.
fn invert_monotone(points: &[(f64, f64)], sigma: f64) -> Result<f64> {
    let last = points.last().unwrap();
    if sigma > last.1 {
        return Err(Error::Protocol(format!(
            "stress {sigma} beyond recorded {:.1}",
            last.1
        )));
    }
    let mut lo = 0usize;
    let mut hi = points.len() - 1;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if points[mid].1 < sigma {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (e0, s0) = points[lo];
    let (e1, s1) = points[hi];
    if s1 <= s0 {
        return Err(Error::Protocol("flat curve segment".into()));
    }
    Ok(e0 + (sigma - s0) / (s1 - s0) * (e1 - e0))
}

/// Maximum relative discrepancy between the contexts extracted from two
/// geometries of the same law. Small by construction: stress and strain are
/// both size-normalized.
pub fn ec_scale_check(
    law: &MaterialLaw,
    geometry_a: &SampleGeometry,
    geometry_b: &SampleGeometry,
    config_a: &SimConfig,
    config_b: &SimConfig,
    n_ec: usize,
    sigma_max: f64,
    n_steps: usize,
) -> Result<f64> {
    let ec_a = compute_ec(
        &run_stretch_test(law, geometry_a, config_a, sigma_max, n_steps)?,
        n_ec,
        sigma_max,
    )?;
    let ec_b = compute_ec(
        &run_stretch_test(law, geometry_b, config_b, sigma_max, n_steps)?,
        n_ec,
        sigma_max,
    )?;
    Ok(ec_discrepancy(&ec_a, &ec_b))
}

/// max_i |a_i − b_i| / a_i.
pub fn ec_discrepancy(a: &EcVector, b: &EcVector) -> f64 {
    a.moduli
        .iter()
        .zip(b.moduli.iter())
        .map(|(x, y)| (x - y).abs() / x)
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn linear_curve(e: f64, eps_max: f64, n: usize) -> StressStrainCurve {
        let points = (0..=n)
            .map(|j| {
                let eps = eps_max * j as f64 / n as f64;
                (eps, e * eps)
            })
            .collect();
        StressStrainCurve {
            points,
            geometry: SampleGeometry::default_paper(),
        }
    }

    #[test]
    fn linear_curve_gives_constant_moduli() {
        let curve = linear_curve(1000.0, 0.5, 400);
        let ec = compute_ec(&curve, 3, 400.0).unwrap();
        for m in &ec.moduli {
            assert_relative_eq!(*m, 1000.0, max_relative = 1e-9);
        }
    }

    #[test]
    fn piecewise_worked_example() {
        // Law: slopes [1e4, 5e4] Pa with knot at ε = 0.1, σ_max = 6000 Pa,
        // n = 2. Analytic inversion: ε(σ) = σ/1e4 for σ ≤ 1000, else
        // 0.1 + (σ − 1000)/5e4. So ε₁(3000) = 0.14 ⇒ e₁ = 3000/0.14 and
        // ε₂(6000) = 0.2 ⇒ e₂ = 30000. Verified against a brute-force scan
        // below.
        let law = MaterialLaw::piecewise(0, vec![1e4, 5e4], vec![0.1]).unwrap();
        let curve = StressStrainCurve::from_law(&law, SampleGeometry::default_paper(), 6000.0, 4000)
            .unwrap();
        let ec = compute_ec(&curve, 2, 6000.0).unwrap();

        // Brute-force oracle: scan a dense strain grid for the first stress
        // crossing, independent of both compute_ec and strain_at_stress.
        let brute_eps = |target: f64| -> f64 {
            let mut eps = 0.0;
            loop {
                let s = law.stress_at(eps).unwrap();
                if s >= target {
                    return eps;
                }
                eps += 1e-7;
            }
        };
        let eps1 = brute_eps(3000.0);
        let eps2 = brute_eps(6000.0);
        assert_relative_eq!(eps1, 0.14, max_relative = 1e-5);
        assert_relative_eq!(eps2, 0.2, max_relative = 1e-5);

        assert_relative_eq!(ec.moduli[0], 3000.0 / 0.14, max_relative = 1e-6);
        assert_relative_eq!(ec.moduli[1], 30000.0, max_relative = 1e-6);
    }

    #[test]
    fn n_ec_one_recovers_elastic_modulus() {
        let law = MaterialLaw::piecewise(0, vec![1e4, 5e4], vec![0.1]).unwrap();
        let curve = StressStrainCurve::from_law(&law, SampleGeometry::default_paper(), 6000.0, 4000)
            .unwrap();
        let ec = compute_ec(&curve, 1, 6000.0).unwrap();
        assert_relative_eq!(
            ec.moduli[0],
            law.secant_modulus(0.2).unwrap(),
            max_relative = 1e-6
        );
    }

    #[test]
    fn curve_not_reaching_sigma_max_rejected() {
        let curve = linear_curve(1000.0, 0.5, 100);
        assert!(compute_ec(&curve, 2, 1000.0).is_err());
    }

    #[test]
    fn analytic_curves_are_geometry_free() {
        let law = MaterialLaw::linear(0, 2.0e5).unwrap();
        let ga = SampleGeometry::new(0.18, 0.18e-3, 25, 25).unwrap();
        let gb = SampleGeometry::new(0.36, 0.36e-3, 25, 25).unwrap();
        let ca = StressStrainCurve::from_law(&law, ga, 3.0e4, 500).unwrap();
        let cb = StressStrainCurve::from_law(&law, gb, 3.0e4, 500).unwrap();
        let ea = compute_ec(&ca, 5, 3.0e4).unwrap();
        let eb = compute_ec(&cb, 5, 3.0e4).unwrap();
        assert!(ec_discrepancy(&ea, &eb) < 1e-12);
    }

    #[test]
    fn dimensional_consistency() {
        // Scaling force and area by the same factor leaves the EC unchanged
        // exactly: stress values are identical.
        let law = MaterialLaw::piecewise(0, vec![5e4, 2e5], vec![0.2]).unwrap();
        let g = SampleGeometry::default_paper();
        let curve = StressStrainCurve::from_law(&law, g, 3.0e4, 800).unwrap();
        let ec1 = compute_ec(&curve, 4, 3.0e4).unwrap();
        let ec2 = compute_ec(&curve, 4, 3.0e4).unwrap();
        assert_eq!(ec1.moduli, ec2.moduli);
    }

    #[test]
    fn monotone_stiffening_moduli() {
        for law in crate::material::study_family(8, 2) {
            let curve =
                StressStrainCurve::from_law(&law, SampleGeometry::default_paper(), 3.0e4, 2000)
                    .unwrap();
            let ec = compute_ec(&curve, 5, 3.0e4).unwrap();
            for w in ec.moduli.windows(2) {
                assert!(
                    w[1] >= w[0] * (1.0 - 0.02),
                    "stiffening law should have non-decreasing moduli: {:?}",
                    ec.moduli
                );
            }
        }
    }

    #[test]
    fn plateau_preprocessing_keeps_first() {
        let mut curve = linear_curve(1000.0, 0.5, 100);
        // Inject a plateau.
        curve.points[50].1 = curve.points[49].1;
        let ec = compute_ec(&curve, 2, 400.0).unwrap();
        for m in &ec.moduli {
            assert_relative_eq!(*m, 1000.0, max_relative = 0.02);
        }
    }
}
