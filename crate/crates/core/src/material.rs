//! Elastic material laws for textile samples.
//!
//! A material is described by its stress-strain function σ(ε). Two families
//! are supported: linear (a single modulus, Hooke's law) and piecewise-linear
//! stiffening laws that approximate the non-linear response of elastic knits.
//! Stress is always in Pa, strain is dimensionless.

use crate::error::{Error, Result};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Shape of the stress-strain function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaterialKind {
    Linear,
    PiecewiseLinear,
}

/// A parametric stress-strain law σ(ε).
///
/// `moduli` holds the slope of each segment in Pa, `knots` the strain
/// breakpoints between segments. A linear law has one modulus and no knots.
/// σ(0) = 0 and σ is continuous and strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialLaw {
    pub id: u32,
    pub kind: MaterialKind,
    /// Segment slopes in Pa, one per segment.
    pub moduli: Vec<f64>,
    /// Strain breakpoints, strictly increasing, in (0, 1). `moduli.len() - 1` entries.
    pub knots: Vec<f64>,
}

impl MaterialLaw {
    /// Build a linear law σ = E·ε.
    pub fn linear(id: u32, modulus: f64) -> Result<Self> {
        let law = MaterialLaw {
            id,
            kind: MaterialKind::Linear,
            moduli: vec![modulus],
            knots: Vec::new(),
        };
        law.validate()?;
        Ok(law)
    }

    /// Build a piecewise-linear law from segment slopes and strain breakpoints.
    pub fn piecewise(id: u32, moduli: Vec<f64>, knots: Vec<f64>) -> Result<Self> {
        let law = MaterialLaw {
            id,
            kind: MaterialKind::PiecewiseLinear,
            moduli,
            knots,
        };
        law.validate()?;
        Ok(law)
    }

    /// Check the structural invariants of the law.
    pub fn validate(&self) -> Result<()> {
        if self.moduli.is_empty() {
            return Err(Error::InvalidMaterial("at least one modulus required".into()));
        }
        if self.moduli.iter().any(|&m| !(m > 0.0) || !m.is_finite()) {
            return Err(Error::InvalidMaterial("all moduli must be positive and finite".into()));
        }
        if self.knots.len() + 1 != self.moduli.len() {
            return Err(Error::InvalidMaterial(format!(
                "expected {} knots for {} moduli, got {}",
                self.moduli.len() - 1,
                self.moduli.len(),
                self.knots.len()
            )));
        }
        let mut prev = 0.0;
        for &k in &self.knots {
            if !(k > prev && k < 1.0) {
                return Err(Error::InvalidMaterial(
                    "knots must be strictly increasing and in (0, 1)".into(),
                ));
            }
            prev = k;
        }
        match self.kind {
            MaterialKind::Linear if self.moduli.len() != 1 => Err(Error::InvalidMaterial(
                "linear law must have exactly one modulus".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Stress σ(ε) in Pa at the given strain.
    ///
    /// Piecewise-exact integral of the slope function over [0, ε]. Negative
    /// strain is a domain error; compression handling lives in the simulator.
    pub fn stress_at(&self, strain: f64) -> Result<f64> {
        if !(strain >= 0.0) {
            return Err(Error::Domain(format!("strain must be >= 0, got {strain}")));
        }
        let mut stress = 0.0;
        let mut seg_start = 0.0;
        for (i, &slope) in self.moduli.iter().enumerate() {
            let seg_end = self.knots.get(i).copied().unwrap_or(f64::INFINITY);
            if strain <= seg_end {
                return Ok(stress + slope * (strain - seg_start));
            }
            stress += slope * (seg_end - seg_start);
            seg_start = seg_end;
        }
        unreachable!("last segment extends to infinity");
    }

    /// Secant modulus e = σ(ε)/ε in Pa. Strain must be strictly positive.
    pub fn secant_modulus(&self, strain: f64) -> Result<f64> {
        if !(strain > 0.0) {
            return Err(Error::Domain(format!(
                "secant modulus undefined at strain {strain}"
            )));
        }
        Ok(self.stress_at(strain)? / strain)
    }

    /// Analytic inverse ε(σ): the strain at which the law reaches `stress`.
    pub fn strain_at_stress(&self, stress: f64) -> Result<f64> {
        if !(stress >= 0.0) {
            return Err(Error::Domain(format!("stress must be >= 0, got {stress}")));
        }
        let mut acc = 0.0;
        let mut seg_start = 0.0;
        for (i, &slope) in self.moduli.iter().enumerate() {
            let seg_end = self.knots.get(i).copied().unwrap_or(f64::INFINITY);
            let seg_stress = slope * (seg_end - seg_start);
            if stress <= acc + seg_stress || i == self.moduli.len() - 1 {
                return Ok(seg_start + (stress - acc) / slope);
            }
            acc += seg_stress;
            seg_start = seg_end;
        }
        unreachable!()
    }

    /// Tangent slope dσ/dε at the given strain (right-continuous at knots).
    pub fn tangent_at(&self, strain: f64) -> f64 {
        for (i, &k) in self.knots.iter().enumerate() {
            if strain < k {
                return self.moduli[i];
            }
        }
        *self.moduli.last().unwrap()
    }

    /// First-segment slope, the small-strain modulus E₀.
    pub fn small_strain_modulus(&self) -> f64 {
        self.moduli[0]
    }

    /// Largest segment slope; bounds the spring stiffness for stability analysis.
    pub fn max_tangent(&self) -> f64 {
        self.moduli.iter().cloned().fold(0.0, f64::max)
    }

    /// Strain energy density ∫₀^ε σ(e) de in Pa (energy per unit volume).
    pub fn energy_density(&self, strain: f64) -> Result<f64> {
        if !(strain >= 0.0) {
            return Err(Error::Domain(format!("strain must be >= 0, got {strain}")));
        }
        let mut energy = 0.0;
        let mut stress = 0.0;
        let mut seg_start = 0.0;
        for (i, &slope) in self.moduli.iter().enumerate() {
            let seg_end = self.knots.get(i).copied().unwrap_or(f64::INFINITY);
            let e = strain.min(seg_end);
            if e > seg_start {
                let d = e - seg_start;
                energy += stress * d + 0.5 * slope * d * d;
            }
            if strain <= seg_end {
                return Ok(energy);
            }
            stress += slope * (seg_end - seg_start);
            seg_start = seg_end;
        }
        unreachable!()
    }
}

/// Rectangular textile sample: rest length along the pull axis, cross section,
/// and mesh resolution. The sample is square (width = rest length); thickness
/// follows from the cross section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleGeometry {
    /// Rest length l₀ along the pull axis, m.
    pub rest_length: f64,
    /// Cross-sectional area A₀ perpendicular to the pull axis, m².
    pub cross_section: f64,
    /// Node rows (perpendicular to the pull axis).
    pub rows: usize,
    /// Node columns (along the pull axis).
    pub cols: usize,
}

impl SampleGeometry {
    pub fn new(rest_length: f64, cross_section: f64, rows: usize, cols: usize) -> Result<Self> {
        if !(rest_length > 0.0) {
            return Err(Error::InvalidGeometry("rest_length must be > 0".into()));
        }
        if !(cross_section > 0.0) {
            return Err(Error::InvalidGeometry("cross_section must be > 0".into()));
        }
        if rows < 2 || cols < 2 {
            return Err(Error::InvalidGeometry("mesh must be at least 2x2".into()));
        }
        Ok(SampleGeometry {
            rest_length,
            cross_section,
            rows,
            cols,
        })
    }

    /// Paper-scale default: 0.18 m sample, 0.18e-3 m² cross section, 25×25 mesh.
    pub fn default_paper() -> Self {
        SampleGeometry {
            rest_length: 0.18,
            cross_section: 0.18e-3,
            rows: 25,
            cols: 25,
        }
    }

    /// Desk-scale default: same sample, 15×15 mesh (downsampled to 8×8 for graphs).
    pub fn default_desk() -> Self {
        SampleGeometry {
            rest_length: 0.18,
            cross_section: 0.18e-3,
            rows: 15,
            cols: 15,
        }
    }
}

/// Reference maximum stress of the stretch protocol, Pa.
pub const SIGMA_MAX: f64 = 3.0e4;

// Family sampling constants. The default family is stratified so that the
// secant modulus at SIGMA_MAX identifies a member uniquely: rigid members are
// linear with high moduli, elastic members are stiffening piecewise laws
// whose secant moduli stay in a disjoint lower band.
const LINEAR_E_RANGE: (f64, f64) = (3.0e5, 1.0e6);
const PW_SECANT_RANGE: (f64, f64) = (7.5e4, 1.9e5);
/// Keeps the softest members stiff enough to register force at task strains.
const PW_BASE_FLOOR: f64 = 3.0e4;
const PW_KNOT_RANGE: (f64, f64) = (0.06, 0.30);
const PW_KNOT_MIN_GAP: f64 = 0.04;
const PW_RATIO_RANGE: (f64, f64) = (1.8, 4.6);

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

/// Deterministic family of `count` laws: alternating linear (rigid) and
/// stiffening piecewise-linear (elastic) members. All piecewise members share
/// one knot/ratio template drawn from the seed, so the family is effectively
/// parameterized by a single stiffness scale.
pub fn material_family(count: usize, seed: u64) -> Vec<MaterialLaw> {
    assert!(count >= 1, "count must be >= 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Family-wide piecewise template.
    let mut knots = [0.0; 3];
    for k in knots.iter_mut() {
        *k = rng.gen_range(PW_KNOT_RANGE.0..PW_KNOT_RANGE.1);
    }
    knots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for i in 1..3 {
        if knots[i] - knots[i - 1] < PW_KNOT_MIN_GAP {
            knots[i] = knots[i - 1] + PW_KNOT_MIN_GAP;
        }
    }
    let mut ratios = [0.0; 3];
    for r in ratios.iter_mut() {
        *r = rng.gen_range(PW_RATIO_RANGE.0..PW_RATIO_RANGE.1);
    }
    // Cap the template's stiffening gain: the softest admissible base must
    // still land below the elastic secant band, otherwise the band floor
    // (and with it the family spread) cannot be honored.
    loop {
        let probe = piecewise_scaled(0, PW_BASE_FLOOR, &knots, &ratios);
        let eps = probe.strain_at_stress(SIGMA_MAX).unwrap();
        if SIGMA_MAX / eps <= PW_SECANT_RANGE.0 * 0.97 {
            break;
        }
        for r in ratios.iter_mut() {
            *r = 1.0 + (*r - 1.0) * 0.85;
        }
    }

    (0..count)
        .map(|id| {
            if id % 2 == 0 {
                let e = log_uniform(&mut rng, LINEAR_E_RANGE.0, LINEAR_E_RANGE.1);
                MaterialLaw::linear(id as u32, e).unwrap()
            } else {
                let secant = log_uniform(&mut rng, PW_SECANT_RANGE.0, PW_SECANT_RANGE.1);
                let base = base_for_secant(secant, &knots, &ratios).max(PW_BASE_FLOOR);
                piecewise_scaled(id as u32, base, &knots, &ratios)
            }
        })
        .collect()
}

/// Bisect the base modulus so the law's secant modulus at SIGMA_MAX hits the
/// target. The secant is monotone increasing in the base.
fn base_for_secant(target: f64, knots: &[f64; 3], ratios: &[f64; 3]) -> f64 {
    let secant_of = |base: f64| {
        let law = piecewise_scaled(0, base, knots, ratios);
        let eps = law.strain_at_stress(SIGMA_MAX).unwrap();
        SIGMA_MAX / eps
    };
    let (mut lo, mut hi) = (1e3, target);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if secant_of(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Nonlinear family for the context-dimensionality study: early knots so the
/// stiffening is visible at task-scale strains, with per-member random slope
/// ratios so the curve shape varies independently of the overall scale.
pub fn study_family(count: usize, seed: u64) -> Vec<MaterialLaw> {
    assert!(count >= 1, "count must be >= 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let knots = [0.008, 0.018, 0.032];
    (0..count)
        .map(|id| {
            let base = log_uniform(&mut rng, 1.5e4, 5.0e4);
            let ratios = [
                rng.gen_range(1.6..3.6),
                rng.gen_range(1.6..3.6),
                rng.gen_range(1.6..3.6),
            ];
            piecewise_scaled(id as u32, base, &knots, &ratios)
        })
        .collect()
}

/// Purely linear control family.
pub fn linear_family(count: usize, seed: u64) -> Vec<MaterialLaw> {
    assert!(count >= 1, "count must be >= 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|id| {
            let e = log_uniform(&mut rng, 4.0e4, 8.0e5);
            MaterialLaw::linear(id as u32, e).unwrap()
        })
        .collect()
}

fn piecewise_scaled(id: u32, base: f64, knots: &[f64; 3], ratios: &[f64; 3]) -> MaterialLaw {
    let mut moduli = vec![base];
    for &r in ratios {
        moduli.push(moduli.last().unwrap() * r);
    }
    MaterialLaw::piecewise(id, moduli, knots.to_vec()).unwrap()
}
