//! Ground-truth dataset generation: per material, a stretch test for the
//! elastic context and a pull-over-sphere trajectory for the learning task.
//!
//! The task scene: the cloth hangs as a vertical curtain (x–z plane) between
//! the two grippers, gravity along −z. A rigid sphere sits just below the
//! cloth's lower edge, poking through the cloth plane by a small protrusion.
//! Both grippers descend in equal z steps; the cloth drags over the sphere,
//! deflects around it, and builds tension. Recording starts at contact onset
//! (first smoothed force above the threshold) and spans 33 displacements.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clothsim::{
    downsample_indices, savitzky_golay, Cloth, GripperAction, SimConfig,
};
use crate::eccontext::{
    compute_ec, run_stretch_test, EcVector, StressStrainCurve, SMOOTH_DEGREE, SMOOTH_WINDOW,
};
use crate::error::{Error, Result};
use crate::gnn::{edge_feature_for, oracle_label, Variant, ORACLE_WIDTH};
use crate::material::{linear_family, material_family, study_family, MaterialLaw, SampleGeometry};

/// Contact onset: the first step whose smoothed grasp force exceeds the
/// static hang preload by this much, N. The curtain carries its own weight
/// before touching the sphere, so the threshold applies to the increment.
pub const ONSET_THRESHOLD: f64 = 0.05;
/// Total commanded displacement after onset, m.
pub const A_MAX: f64 = 0.12;
/// Default recorded displacements per trajectory.
pub const TASK_STEPS: usize = 33;
/// Extra simulated steps beyond the recording window, so contact onset can
/// be located before the window starts.
pub const ONSET_HEADROOM: usize = 19;

/// Pull-over-sphere scene parameters. The curtain is pre-tensioned so the
/// sphere detour must come out of real elongation instead of sag slack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskScene {
    pub sphere_radius: f64,
    /// How far the sphere pokes through the cloth plane, m.
    pub protrusion: f64,
    /// Clearance between the cloth's lower edge and the sphere top at start, m.
    pub drop_gap: f64,
    /// Uniaxial pre-strain applied before the descent.
    pub pretension: f64,
}

impl Default for TaskScene {
    fn default() -> Self {
        TaskScene {
            sphere_radius: 0.05,
            protrusion: 0.04,
            drop_gap: 0.004,
            pretension: 0.008,
        }
    }
}

impl TaskScene {
    pub fn sphere_center(&self, geometry: &SampleGeometry) -> [f64; 3] {
        [
            geometry.rest_length * (1.0 + self.pretension) / 2.0,
            self.protrusion - self.sphere_radius,
            -(geometry.rest_length + self.sphere_radius + self.drop_gap),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    /// Mixed rigid-linear / elastic-stiffening family.
    Default,
    /// Strongly nonlinear family with task-scale knots (dimensionality study).
    Study,
    /// Purely linear control family.
    Linear,
}

impl FamilyKind {
    pub fn build(&self, count: usize, seed: u64) -> Vec<MaterialLaw> {
        match self {
            FamilyKind::Default => material_family(count, seed),
            FamilyKind::Study => study_family(count, seed),
            FamilyKind::Linear => linear_family(count, seed),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub n_materials: usize,
    pub family: FamilyKind,
    pub geometry: SampleGeometry,
    pub graph_rows: usize,
    pub graph_cols: usize,
    pub sigma_max: f64,
    pub stretch_steps: usize,
    /// Recorded displacements per trajectory.
    pub task_steps: usize,
    pub scene: TaskScene,
    pub seed: u64,
}

impl DatasetConfig {
    /// Desk scale: 40 materials, 15×15 simulation mesh, 8×8 graphs.
    pub fn desk(seed: u64) -> Self {
        DatasetConfig {
            n_materials: 40,
            family: FamilyKind::Default,
            geometry: SampleGeometry::default_desk(),
            graph_rows: 8,
            graph_cols: 8,
            sigma_max: crate::material::SIGMA_MAX,
            stretch_steps: 80,
            task_steps: TASK_STEPS,
            scene: TaskScene::default(),
            seed,
        }
    }

    /// Reference scale: 100 materials, 25×25 mesh, 12×12 graphs.
    pub fn paper(seed: u64) -> Self {
        DatasetConfig {
            n_materials: 100,
            family: FamilyKind::Default,
            geometry: SampleGeometry::default_paper(),
            graph_rows: 12,
            graph_cols: 12,
            sigma_max: crate::material::SIGMA_MAX,
            stretch_steps: 80,
            task_steps: TASK_STEPS,
            scene: TaskScene::default(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_materials < 2 {
            return Err(Error::Dataset("need at least 2 materials".into()));
        }
        if self.task_steps < 21 {
            return Err(Error::Dataset(
                "task_steps must cover the smoothing window (>= 21)".into(),
            ));
        }
        if self.graph_rows > self.geometry.rows || self.graph_cols > self.geometry.cols {
            return Err(Error::Dataset(
                "graph mesh cannot exceed the simulation mesh".into(),
            ));
        }
        Ok(())
    }
}

/// One material's recorded run: characterization curve plus the task window.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaterialRun {
    pub law: MaterialLaw,
    pub curve: StressStrainCurve,
    /// Ground-truth label (secant at σ_max + segment slopes, padded), Pa.
    pub oracle_label: Vec<f64>,
    /// Step index of the first smoothed force above the onset threshold.
    pub onset_step: usize,
    /// Downsampled node positions: TASK_STEPS + 1 frames, m.
    pub frames: Vec<Vec<[f64; 3]>>,
    /// Smoothed force at each frame (TASK_STEPS + 1 values), N. The target
    /// for transition t is forces[t + 1].
    pub forces: Vec<f64>,
    /// The constant per-step gripper displacement, m.
    pub action: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkippedMaterial {
    pub id: u32,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    pub schema_version: u32,
    pub config: DatasetConfig,
    pub runs: Vec<MaterialRun>,
    pub skipped: Vec<SkippedMaterial>,
}

pub const DATASET_SCHEMA_VERSION: u32 = 1;

impl Dataset {
    pub fn l0(&self) -> f64 {
        self.config.geometry.rest_length
    }

    pub fn transition_count(&self) -> usize {
        self.runs.iter().map(|r| r.frames.len() - 1).sum()
    }

    /// Elastic context of a run at the requested dimension, from the stored
    /// curve.
    pub fn ec_vector(&self, run: &MaterialRun, n_ec: usize) -> Result<EcVector> {
        compute_ec(&run.curve, n_ec, self.config.sigma_max)
    }

    /// Normalized edge feature for one run under a variant.
    pub fn edge_feature(&self, run: &MaterialRun, variant: Variant) -> Result<Vec<f64>> {
        let ec = match variant {
            Variant::Ec(n) => Some(self.ec_vector(run, n)?),
            _ => None,
        };
        edge_feature_for(variant, ec.as_ref(), Some(&run.oracle_label))
    }
}

/// Simulate every material of the family: stretch test, then the task
/// trajectory. Unstable or out-of-window materials are skipped and logged.
pub fn generate_dataset(config: &DatasetConfig) -> Result<Dataset> {
    config.validate()?;
    let laws = config.family.build(config.n_materials, config.seed);
    let outcomes: Vec<std::result::Result<MaterialRun, SkippedMaterial>> = laws
        .par_iter()
        .map(|law| simulate_material(config, law))
        .collect();

    let mut runs = Vec::new();
    let mut skipped = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(run) => runs.push(run),
            Err(s) => skipped.push(s),
        }
    }
    Ok(Dataset {
        schema_version: DATASET_SCHEMA_VERSION,
        config: config.clone(),
        runs,
        skipped,
    })
}

fn simulate_material(
    config: &DatasetConfig,
    law: &MaterialLaw,
) -> std::result::Result<MaterialRun, SkippedMaterial> {
    let skip = |reason: String| SkippedMaterial {
        id: law.id,
        reason,
    };

    let base_cfg = SimConfig::default_for(&config.geometry);
    let curve = run_stretch_test(
        law,
        &config.geometry,
        &base_cfg,
        config.sigma_max,
        config.stretch_steps,
    )
    .map_err(|e| skip(format!("stretch test: {e}")))?;

    let label = oracle_label(law, config.sigma_max).map_err(|e| skip(e.to_string()))?;
    debug_assert_eq!(label.len(), ORACLE_WIDTH);

    // Task phase: gravity on, sphere in the scene, protocol damping.
    let mut cfg = SimConfig::protocol_for(&config.geometry, law);
    cfg.gravity = [0.0, 0.0, -9.81];
    cfg.sphere_radius = config.scene.sphere_radius;
    cfg.sphere_center = config.scene.sphere_center(&config.geometry);
    let cloth =
        Cloth::new(config.geometry, law.clone(), cfg).map_err(|e| skip(e.to_string()))?;
    let settle = cloth.settle_params();

    let mut state = cloth.rest_state();
    // Pre-tension, then let the curtain reach its hanging equilibrium before
    // any command. The flat-to-hanging transient outlives one settle budget,
    // so iterate until the grasp reading stops moving.
    cloth
        .step_settled(
            &mut state,
            &GripperAction::stretch_x(config.scene.pretension * config.geometry.rest_length),
            &settle,
        )
        .map_err(|e| skip(format!("pretension: {e}")))?;
    let mut hang_force = f64::INFINITY;
    for _ in 0..30 {
        let r = cloth
            .step_settled(&mut state, &GripperAction::zero(), &settle)
            .map_err(|e| skip(format!("initial settle: {e}")))?;
        if (r.magnitude - hang_force).abs() < 1e-4 {
            hang_force = r.magnitude;
            break;
        }
        hang_force = r.magnitude;
    }

    let task_steps = config.task_steps;
    let total_steps = task_steps + ONSET_HEADROOM;
    let delta = A_MAX / task_steps as f64;
    let action = [0.0, 0.0, -delta];
    let mut raw_forces = vec![hang_force];
    let mut full_frames = vec![state.positions.clone()];
    for _ in 1..=total_steps {
        let reading = cloth
            .step_settled(&mut state, &GripperAction::both(action), &settle)
            .map_err(|e| skip(format!("task step: {e}")))?;
        raw_forces.push(reading.magnitude);
        full_frames.push(state.positions.clone());
    }

    let smoothed = savitzky_golay(&raw_forces, SMOOTH_WINDOW, SMOOTH_DEGREE)
        .map_err(|e| skip(e.to_string()))?;
    let preload = smoothed[0];
    let onset = smoothed
        .iter()
        .position(|&f| f - preload > ONSET_THRESHOLD)
        .ok_or_else(|| skip("no contact onset within the trajectory".into()))?;
    if onset + task_steps >= full_frames.len() {
        return Err(skip(format!(
            "onset at step {onset} leaves no room for {task_steps} recorded steps"
        )));
    }

    let row_idx = downsample_indices(config.geometry.rows, config.graph_rows)
        .map_err(|e| skip(e.to_string()))?;
    let col_idx = downsample_indices(config.geometry.cols, config.graph_cols)
        .map_err(|e| skip(e.to_string()))?;
    let frames: Vec<Vec<[f64; 3]>> = (onset..=onset + task_steps)
        .map(|k| {
            let full = &full_frames[k];
            let mut out = Vec::with_capacity(config.graph_rows * config.graph_cols);
            for &r in &row_idx {
                for &c in &col_idx {
                    out.push(full[r * config.geometry.cols + c]);
                }
            }
            out
        })
        .collect();
    let forces: Vec<f64> = (0..=task_steps).map(|t| smoothed[onset + t]).collect();

    Ok(MaterialRun {
        law: law.clone(),
        curve,
        oracle_label: label,
        onset_step: onset,
        frames,
        forces,
        action,
    })
}
