//! Autoregressive rollout: predicted position changes feed the next graph;
//! grasped nodes follow the commanded action kinematically.

use serde::{Deserialize, Serialize};

use crate::error::Result;

use super::graph::{build_graph, GraphData};
use super::model::GnnModel;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RolloutResult {
    /// Predicted force after each step, N.
    pub forces: Vec<f64>,
    /// Node positions after each step, m.
    pub positions: Vec<Vec<[f64; 3]>>,
    /// True when the rollout left the sane region and was truncated.
    pub diverged: bool,
}

/// Roll the model forward over an action sequence from a downsampled initial
/// state. Emits one (force, positions) pair per action.
pub fn rollout(
    model: &GnnModel,
    initial_positions: &[[f64; 3]],
    rows: usize,
    cols: usize,
    actions: &[[f64; 3]],
    edge_feature: &[f64],
) -> Result<RolloutResult> {
    let l0 = model.config.l0;
    let mut pos = initial_positions.to_vec();
    let mut forces = Vec::with_capacity(actions.len());
    let mut trajectory = Vec::with_capacity(actions.len());
    let mut diverged = false;

    for action in actions {
        let graph = build_graph(
            &GraphData {
                positions: &pos,
                action: *action,
            },
            rows,
            cols,
            edge_feature,
            l0,
        )?;
        let pred = model.predict(&graph)?;
        for (i, p) in pos.iter_mut().enumerate() {
            let c = i % cols;
            if c == 0 || c == cols - 1 {
                // Kinematic override: grasped nodes follow the command.
                p[0] += action[0];
                p[1] += action[1];
                p[2] += action[2];
            } else {
                p[0] += pred.delta_positions[i][0];
                p[1] += pred.delta_positions[i][1];
                p[2] += pred.delta_positions[i][2];
            }
        }
        forces.push(pred.force);
        trajectory.push(pos.clone());

        let mut centroid = [0.0; 3];
        for p in &pos {
            centroid[0] += p[0];
            centroid[1] += p[1];
            centroid[2] += p[2];
        }
        for c in centroid.iter_mut() {
            *c /= pos.len() as f64;
        }
        let sane = pos.iter().all(|p| {
            p.iter()
                .zip(centroid.iter())
                .all(|(v, c)| (v - c).abs() <= 10.0 * l0 && v.is_finite())
        });
        if !sane {
            diverged = true;
            break;
        }
    }
    Ok(RolloutResult {
        forces,
        positions: trajectory,
        diverged,
    })
}
