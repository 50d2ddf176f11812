//! Core mass-spring integrator.
//!
//! The cloth is a rows×cols node grid in the x–z plane: columns run along the
//! pull axis x, rows hang downward along −z. The two boundary columns are
//! kinematically driven by the grippers. Springs:
//!
//! - structural: grid neighbors, tension σ(ε)·a from the material law,
//!   compression-free;
//! - shear: diagonals, linear small-strain response scaled by 0.5,
//!   compression-free;
//! - bending: two-apart neighbors, linear response scaled by the bending
//!   stiffness, active in both tension and compression.
//!
//! Structural springs along x carry A₀/rows of the cross section each, so the
//! total grasp force under uniform uniaxial stretch is σ(ε)·A₀. Integration is
//! semi-implicit Euler with implicit per-node drag and explicit per-spring
//! dampers sized near critical from the current tangent stiffness.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::material::{MaterialLaw, SampleGeometry};

/// Fraction of a structural spring's cross-section share given to each shear
/// spring. Kept small so shear load under uniaxial stretch stays inside the
/// force-identity tolerance.
pub const SHEAR_AREA_SCALE: f64 = 0.012;
/// Same for bending springs (before the bending_stiffness scale).
pub const BEND_AREA_SCALE: f64 = 0.02;

const SHEAR_MODULUS_SCALE: f64 = 0.5;

/// Small-strain fraction of a uniaxial cut force carried by the auxiliary
/// (shear + bending) springs: 2 bending lines per cut at the bending scale,
/// and 2(rows−1) diagonals at half modulus, half strain, cos 45° projection.
fn auxiliary_load_share(bending_stiffness: f64, lines: usize) -> f64 {
    2.0 * bending_stiffness * BEND_AREA_SCALE
        + 2.0 * SHEAR_MODULUS_SCALE * 0.5 * std::f64::consts::FRAC_1_SQRT_2
            * SHEAR_AREA_SCALE
            * (lines - 1) as f64
            / lines as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpringKind {
    Structural,
    Shear,
    Bending,
}

#[derive(Debug, Clone)]
struct Spring {
    a: usize,
    b: usize,
    rest: f64,
    area: f64,
    kind: SpringKind,
}

/// Simulator knobs. `dt` is the duration of one `step` call, split into
/// `substeps` integrator sub-iterations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    /// Step duration, s.
    pub dt: f64,
    /// Integrator sub-iterations per step.
    pub substeps: usize,
    /// Per-node drag against absolute velocity, kg/s. Applied implicitly.
    pub damping: f64,
    /// Mass per node, kg.
    pub node_mass: f64,
    /// Dimensionless scale of the bending response.
    pub bending_stiffness: f64,
    pub sphere_center: [f64; 3],
    /// 0 disables collision.
    pub sphere_radius: f64,
    pub gravity: [f64; 3],
    /// Per-spring damper ratio relative to critical damping.
    pub spring_damping_zeta: f64,
}

impl SimConfig {
    /// Defaults mirroring the reference setup: dt = 1/240 s, 4 substeps,
    /// damping 1.5 kg/s, bending scale 0.1, total cloth mass 0.05 kg,
    /// gravity off, no sphere.
    pub fn default_for(geometry: &SampleGeometry) -> Self {
        SimConfig {
            dt: 1.0 / 240.0,
            substeps: 4,
            damping: 1.5,
            node_mass: 0.05 / (geometry.rows * geometry.cols) as f64,
            bending_stiffness: 0.1,
            sphere_center: [0.0; 3],
            sphere_radius: 0.0,
            gravity: [0.0; 3],
            spring_damping_zeta: 1.0,
        }
    }

    /// Config for quasi-static protocol runs: node drag sized to critically
    /// damp the mesh's fundamental mode (the default 1.5 kg/s overdamps small
    /// nodes into a diffusion crawl that never settles within budget).
    pub fn protocol_for(geometry: &SampleGeometry, law: &MaterialLaw) -> Self {
        let mut cfg = Self::default_for(geometry);
        let m = cfg.node_mass;
        let spacing = geometry.rest_length / (geometry.cols - 1) as f64;
        let area = geometry.cross_section / geometry.rows as f64;
        let k_soft = law.small_strain_modulus() * area / spacing;
        let omega_local = (2.0 * k_soft / m).sqrt();
        let n = geometry.rows.max(geometry.cols) as f64;
        let omega_fundamental = omega_local * std::f64::consts::PI / (2.0 * n);
        cfg.damping = 2.0 * 0.8 * m * omega_fundamental;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::InvalidGeometry("dt must be > 0".into()));
        }
        if self.substeps < 1 {
            return Err(Error::InvalidGeometry("substeps must be >= 1".into()));
        }
        if self.sphere_radius < 0.0 {
            return Err(Error::InvalidGeometry("sphere_radius must be >= 0".into()));
        }
        if !(self.node_mass > 0.0) {
            return Err(Error::InvalidGeometry("node_mass must be > 0".into()));
        }
        Ok(())
    }
}

/// Positions and velocities of the node grid plus the grasp index sets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClothState {
    pub positions: Vec<[f64; 3]>,
    pub velocities: Vec<[f64; 3]>,
    pub grasp_left: Vec<usize>,
    pub grasp_right: Vec<usize>,
    pub time: f64,
}

impl ClothState {
    pub fn is_finite(&self) -> bool {
        self.positions
            .iter()
            .chain(self.velocities.iter())
            .all(|p| p.iter().all(|v| v.is_finite()))
    }
}

/// Reaction force the grippers must apply to hold the grasped columns:
/// the negated sum of spring forces on each column. `magnitude` is the
/// Euclidean norm of the left gripper's vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForceReading {
    pub left: [f64; 3],
    pub right: [f64; 3],
    pub magnitude: f64,
}

/// Commanded displacement of each gripper for one step, m.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GripperAction {
    pub left: [f64; 3],
    pub right: [f64; 3],
}

impl GripperAction {
    pub fn zero() -> Self {
        GripperAction {
            left: [0.0; 3],
            right: [0.0; 3],
        }
    }

    /// Both grippers move by the same vector (task phase).
    pub fn both(v: [f64; 3]) -> Self {
        GripperAction { left: v, right: v }
    }

    /// Symmetric separation along +x by `total` (stretch phase).
    pub fn stretch_x(total: f64) -> Self {
        GripperAction {
            left: [-total / 2.0, 0.0, 0.0],
            right: [total / 2.0, 0.0, 0.0],
        }
    }
}

/// Settle-loop bounds for quasi-static protocol steps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SettleParams {
    /// Integrator sub-step, s.
    pub sub_dt: f64,
    /// Stop once every free node is slower than this, m/s.
    pub velocity_tol: f64,
    /// Hard cap on sub-iterations per step.
    pub max_substeps: usize,
}

/// A cloth simulation instance: geometry, material, config, and the derived
/// spring network. State is kept outside so one instance can advance many
/// trajectories.
#[derive(Debug, Clone)]
pub struct Cloth {
    pub geometry: SampleGeometry,
    pub law: MaterialLaw,
    pub config: SimConfig,
    springs: Vec<Spring>,
    spacing_x: f64,
    spacing_z: f64,
}

impl Cloth {
    pub fn new(geometry: SampleGeometry, law: MaterialLaw, config: SimConfig) -> Result<Self> {
        law.validate()?;
        config.validate()?;
        let (rows, cols) = (geometry.rows, geometry.cols);
        let spacing_x = geometry.rest_length / (cols - 1) as f64;
        // Square sample: width equals rest length.
        let spacing_z = geometry.rest_length / (rows - 1) as f64;
        // Structural springs carry the cross section minus the share the
        // auxiliary springs pick up, so the total cut force under uniform
        // uniaxial stretch is σ(ε)·A₀.
        let area_x =
            geometry.cross_section / rows as f64 * (1.0 - auxiliary_load_share(config.bending_stiffness, rows));
        let area_z =
            geometry.cross_section / cols as f64 * (1.0 - auxiliary_load_share(config.bending_stiffness, cols));
        let idx = |r: usize, c: usize| r * cols + c;

        // Rest lengths are measured from the as-built grid so the rest state
        // is an exact zero-force fixed point.
        let mut rest_positions = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                rest_positions.push([c as f64 * spacing_x, 0.0, -(r as f64) * spacing_z]);
            }
        }
        let measured = |a: usize, b: usize| -> f64 {
            let (pa, pb) = (rest_positions[a], rest_positions[b]);
            let d = [pb[0] - pa[0], pb[1] - pa[1], pb[2] - pa[2]];
            (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
        };

        let mut springs = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let mut push = |a: usize, b: usize, area: f64, kind: SpringKind| {
                    springs.push(Spring {
                        a,
                        b,
                        rest: measured(a, b),
                        area,
                        kind,
                    });
                };
                if c + 1 < cols {
                    push(idx(r, c), idx(r, c + 1), area_x, SpringKind::Structural);
                }
                if r + 1 < rows {
                    push(idx(r, c), idx(r + 1, c), area_z, SpringKind::Structural);
                }
                if r + 1 < rows && c + 1 < cols {
                    push(
                        idx(r, c),
                        idx(r + 1, c + 1),
                        SHEAR_AREA_SCALE * area_x,
                        SpringKind::Shear,
                    );
                }
                if r + 1 < rows && c >= 1 {
                    push(
                        idx(r, c),
                        idx(r + 1, c - 1),
                        SHEAR_AREA_SCALE * area_x,
                        SpringKind::Shear,
                    );
                }
                if c + 2 < cols {
                    push(idx(r, c), idx(r, c + 2), BEND_AREA_SCALE * area_x, SpringKind::Bending);
                }
                if r + 2 < rows {
                    push(idx(r, c), idx(r + 2, c), BEND_AREA_SCALE * area_z, SpringKind::Bending);
                }
            }
        }
        Ok(Cloth {
            geometry,
            law,
            config,
            springs,
            spacing_x,
            spacing_z,
        })
    }

    pub fn node_count(&self) -> usize {
        self.geometry.rows * self.geometry.cols
    }

    /// Flat rectangular grid at rest in the x–z plane: zero strain in every
    /// spring, zero velocities, grasp sets on the two boundary columns.
    pub fn rest_state(&self) -> ClothState {
        let (rows, cols) = (self.geometry.rows, self.geometry.cols);
        let mut positions = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                positions.push([c as f64 * self.spacing_x, 0.0, -(r as f64) * self.spacing_z]);
            }
        }
        let grasp_left: Vec<usize> = (0..rows).map(|r| r * cols).collect();
        let grasp_right: Vec<usize> = (0..rows).map(|r| r * cols + cols - 1).collect();
        ClothState {
            velocities: vec![[0.0; 3]; positions.len()],
            positions,
            grasp_left,
            grasp_right,
            time: 0.0,
        }
    }

    /// Elastic spring forces on every node, N. Returns the number of
    /// degenerate (zero-length or non-finite) springs skipped.
    pub fn internal_forces(&self, state: &ClothState) -> (Vec<[f64; 3]>, usize) {
        let mut forces = vec![[0.0; 3]; state.positions.len()];
        let skipped = self.accumulate_spring_forces(state, &mut forces, false);
        (forces, skipped)
    }

    /// One pass over the springs: elastic tension plus (optionally) per-spring
    /// dampers sized near critical from the current tangent stiffness. Slack
    /// structural/shear springs carry neither.
    fn accumulate_spring_forces(
        &self,
        state: &ClothState,
        forces: &mut [[f64; 3]],
        with_damping: bool,
    ) -> usize {
        let e0 = self.law.small_strain_modulus();
        let zeta = if with_damping {
            self.config.spring_damping_zeta
        } else {
            0.0
        };
        let m_red = self.config.node_mass / 2.0;
        let mut skipped = 0usize;
        for s in &self.springs {
            let pa = state.positions[s.a];
            let pb = state.positions[s.b];
            let dx = [pb[0] - pa[0], pb[1] - pa[1], pb[2] - pa[2]];
            let len = (dx[0] * dx[0] + dx[1] * dx[1] + dx[2] * dx[2]).sqrt();
            if !(len > 0.0) {
                skipped += 1;
                continue;
            }
            let strain = (len - s.rest) / s.rest;
            // (tension N, tangent slope Pa); slack springs contribute nothing.
            let (tension, tangent) = match s.kind {
                SpringKind::Structural => {
                    if strain <= 0.0 {
                        continue;
                    }
                    (
                        self.law.stress_at(strain).unwrap() * s.area,
                        self.law.tangent_at(strain),
                    )
                }
                SpringKind::Shear => {
                    if strain <= 0.0 {
                        continue;
                    }
                    let e = SHEAR_MODULUS_SCALE * e0;
                    (e * strain * s.area, e)
                }
                SpringKind::Bending => {
                    let e = self.config.bending_stiffness * e0;
                    (e * strain * s.area, e)
                }
            };
            let inv_len = 1.0 / len;
            let dir = [dx[0] * inv_len, dx[1] * inv_len, dx[2] * inv_len];
            let mut f = tension;
            if zeta > 0.0 {
                let k_spring = tangent * s.area / s.rest;
                let c = zeta * 2.0 * (k_spring * m_red).sqrt();
                let va = state.velocities[s.a];
                let vb = state.velocities[s.b];
                let rel =
                    (vb[0] - va[0]) * dir[0] + (vb[1] - va[1]) * dir[1] + (vb[2] - va[2]) * dir[2];
                f += c * rel;
            }
            let fa = &mut forces[s.a];
            fa[0] += f * dir[0];
            fa[1] += f * dir[1];
            fa[2] += f * dir[2];
            let fb = &mut forces[s.b];
            fb[0] -= f * dir[0];
            fb[1] -= f * dir[1];
            fb[2] -= f * dir[2];
        }
        skipped
    }

    fn is_grasped(&self, i: usize) -> bool {
        let cols = self.geometry.cols;
        let c = i % cols;
        c == 0 || c == cols - 1
    }

    fn integrate_substep(&self, state: &mut ClothState, sub_dt: f64, scratch: &mut Vec<[f64; 3]>) {
        scratch.clear();
        scratch.resize(state.positions.len(), [0.0; 3]);
        self.accumulate_spring_forces(state, scratch, true);

        let m = self.config.node_mass;
        let g = self.config.gravity;
        let drag_factor = 1.0 + sub_dt * self.config.damping / m;
        let sphere_on = self.config.sphere_radius > 0.0;
        let sc = self.config.sphere_center;
        let r = self.config.sphere_radius;

        for i in 0..state.positions.len() {
            if self.is_grasped(i) {
                continue;
            }
            let f = scratch[i];
            let v = &mut state.velocities[i];
            v[0] = (v[0] + sub_dt * (f[0] / m + g[0])) / drag_factor;
            v[1] = (v[1] + sub_dt * (f[1] / m + g[1])) / drag_factor;
            v[2] = (v[2] + sub_dt * (f[2] / m + g[2])) / drag_factor;
            let v = *v;
            let p = &mut state.positions[i];
            p[0] += sub_dt * v[0];
            p[1] += sub_dt * v[1];
            p[2] += sub_dt * v[2];

            if sphere_on {
                let d = [p[0] - sc[0], p[1] - sc[1], p[2] - sc[2]];
                let dist = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                if dist < r && dist > 0.0 {
                    let n = [d[0] / dist, d[1] / dist, d[2] / dist];
                    p[0] = sc[0] + n[0] * r;
                    p[1] = sc[1] + n[1] * r;
                    p[2] = sc[2] + n[2] * r;
                    let vel = &mut state.velocities[i];
                    let vn = vel[0] * n[0] + vel[1] * n[1] + vel[2] * n[2];
                    if vn < 0.0 {
                        vel[0] -= vn * n[0];
                        vel[1] -= vn * n[1];
                        vel[2] -= vn * n[2];
                    }
                }
            }
        }
    }

    fn apply_action(&self, state: &mut ClothState, action: &GripperAction) {
        for &i in &state.grasp_left {
            let p = &mut state.positions[i];
            p[0] += action.left[0];
            p[1] += action.left[1];
            p[2] += action.left[2];
            state.velocities[i] = [0.0; 3];
        }
        for &i in &state.grasp_right {
            let p = &mut state.positions[i];
            p[0] += action.right[0];
            p[1] += action.right[1];
            p[2] += action.right[2];
            state.velocities[i] = [0.0; 3];
        }
    }

    fn read_forces(&self, state: &ClothState) -> ForceReading {
        let (forces, _) = self.internal_forces(state);
        let mut left = [0.0; 3];
        for &i in &state.grasp_left {
            left[0] -= forces[i][0];
            left[1] -= forces[i][1];
            left[2] -= forces[i][2];
        }
        let mut right = [0.0; 3];
        for &i in &state.grasp_right {
            right[0] -= forces[i][0];
            right[1] -= forces[i][1];
            right[2] -= forces[i][2];
        }
        ForceReading {
            left,
            right,
            magnitude: (left[0] * left[0] + left[1] * left[1] + left[2] * left[2]).sqrt(),
        }
    }

    fn check_finite(&self, state: &ClothState) -> Result<()> {
        for (i, p) in state
            .positions
            .iter()
            .chain(state.velocities.iter())
            .enumerate()
        {
            if !p.iter().all(|v| v.is_finite()) {
                let i = i % state.positions.len();
                return Err(Error::Instability {
                    row: i / self.geometry.cols,
                    col: i % self.geometry.cols,
                });
            }
        }
        Ok(())
    }

    /// Advance one step of `config.dt`: grasped nodes translate exactly by the
    /// action, free nodes integrate `config.substeps` sub-iterations.
    pub fn step(&self, state: &mut ClothState, action: &GripperAction) -> Result<ForceReading> {
        self.apply_action(state, action);
        let sub_dt = self.config.dt / self.config.substeps as f64;
        let mut scratch = Vec::new();
        for _ in 0..self.config.substeps {
            self.integrate_substep(state, sub_dt, &mut scratch);
        }
        state.time += self.config.dt;
        self.check_finite(state)?;
        Ok(self.read_forces(state))
    }

    /// Quasi-static protocol step: apply the action, then integrate until
    /// every free node is slower than the tolerance (or the cap is hit).
    pub fn step_settled(
        &self,
        state: &mut ClothState,
        action: &GripperAction,
        settle: &SettleParams,
    ) -> Result<ForceReading> {
        self.apply_action(state, action);
        let mut scratch = Vec::new();
        for i in 0..settle.max_substeps {
            self.integrate_substep(state, settle.sub_dt, &mut scratch);
            state.time += settle.sub_dt;
            // Checking every iteration would cost more than it saves.
            if i % 16 == 15 && self.max_free_speed(state) < settle.velocity_tol {
                break;
            }
        }
        self.check_finite(state)?;
        Ok(self.read_forces(state))
    }

    fn max_free_speed(&self, state: &ClothState) -> f64 {
        let mut max = 0.0f64;
        for (i, v) in state.velocities.iter().enumerate() {
            if self.is_grasped(i) {
                continue;
            }
            let s2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
            if s2 > max {
                max = s2;
            }
        }
        max.sqrt()
    }

    /// Stability-bounded sub-step and settle caps for this material.
    pub fn settle_params(&self) -> SettleParams {
        let m = self.config.node_mass;
        let e0 = self.law.small_strain_modulus();
        let area_x = self.geometry.cross_section / self.geometry.rows as f64;
        let area_z = self.geometry.cross_section / self.geometry.cols as f64;
        let k_x = self.law.max_tangent() * area_x / self.spacing_x;
        let k_z = self.law.max_tangent() * area_z / self.spacing_z;
        let diag = (self.spacing_x * self.spacing_x + self.spacing_z * self.spacing_z).sqrt();
        let k_shear = SHEAR_MODULUS_SCALE * e0 * SHEAR_AREA_SCALE * area_x / diag;
        let k_bend = self.config.bending_stiffness * e0 * BEND_AREA_SCALE * area_x
            / (2.0 * self.spacing_x);
        // Worst-case incident stiffness on one node.
        let k_node = 2.0 * (k_x + k_z) + 4.0 * k_shear + 4.0 * k_bend;
        let omega = (k_node / m).sqrt();
        // Explicit spring dampers halve the usable CFL step; keep extra margin.
        let sub_dt = 0.2 / (omega * self.config.spring_damping_zeta.max(1.0));

        // Settle time scales with wave traversal of the slowest (small-strain)
        // modes: N crossings at the local small-strain wave period.
        let omega_soft = (2.0 * e0 * area_x / self.spacing_x / m).sqrt();
        let n = self.geometry.rows.max(self.geometry.cols) as f64;
        let settle_time = 12.0 * n / omega_soft;
        let max_substeps = ((settle_time / sub_dt).ceil() as usize).clamp(400, 40_000);
        SettleParams {
            sub_dt,
            velocity_tol: 5e-5,
            max_substeps,
        }
    }

    /// Elastic energy stored in all springs, J.
    pub fn elastic_energy(&self, state: &ClothState) -> f64 {
        let e0 = self.law.small_strain_modulus();
        let mut energy = 0.0;
        for s in &self.springs {
            let pa = state.positions[s.a];
            let pb = state.positions[s.b];
            let dx = [pb[0] - pa[0], pb[1] - pa[1], pb[2] - pa[2]];
            let len = (dx[0] * dx[0] + dx[1] * dx[1] + dx[2] * dx[2]).sqrt();
            let strain = (len - s.rest) / s.rest;
            let volume = s.area * s.rest;
            energy += match s.kind {
                SpringKind::Structural => {
                    if strain <= 0.0 {
                        0.0
                    } else {
                        volume * self.law.energy_density(strain).unwrap()
                    }
                }
                SpringKind::Shear => {
                    if strain <= 0.0 {
                        0.0
                    } else {
                        0.5 * SHEAR_MODULUS_SCALE * e0 * strain * strain * volume
                    }
                }
                SpringKind::Bending => {
                    0.5 * self.config.bending_stiffness * e0 * strain * strain * volume
                }
            };
        }
        energy
    }

    pub fn kinetic_energy(&self, state: &ClothState) -> f64 {
        0.5 * self.config.node_mass
            * state
                .velocities
                .iter()
                .map(|v| v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
                .sum::<f64>()
    }
}
