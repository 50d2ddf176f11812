//! Deterministic mini-batch training loop.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensornet::{adam_step, AdamState, Tensor};

use super::graph::TextileGraph;
use super::model::GnnModel;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 2000,
            batch_size: 32,
            lr: 3e-4,
            seed: 0,
        }
    }
}

/// One supervised transition: the graph at t (with the action attached) and
/// the normalized targets at t+1.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub material_id: u32,
    pub graph: TextileGraph,
    /// (x_{t+1} − x_t)/l₀ per node, [n × 3].
    pub target_dpos: Tensor,
    /// F_{t+1}/force_scale.
    pub target_force: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean batch loss per epoch.
    pub epoch_losses: Vec<f64>,
}

/// Train in place: seeded shuffles, fixed batch order, one Adam step per
/// batch. Bitwise deterministic given (model seed, data order, seed).
pub fn train(model: &mut GnnModel, samples: &[TrainSample], cfg: &TrainConfig) -> Result<TrainReport> {
    if samples.is_empty() {
        return Err(Error::Dataset("no training samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(&model.params, cfg.lr);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        // Fisher-Yates with the run's RNG stream.
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let graphs: Vec<&TextileGraph> = chunk.iter().map(|&i| &samples[i].graph).collect();
            let (target_dpos, target_force) = stack_targets(samples, chunk);
            let (loss, grads) = model.loss_and_grads(&graphs, &target_dpos, &target_force)?;
            if !loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    batch: batch_idx,
                    material_id: samples[chunk[0]].material_id,
                    reason: format!("non-finite loss {loss}"),
                });
            }
            adam_step(&mut model.params, &grads, &mut adam).map_err(|e| Error::Training {
                epoch,
                batch: batch_idx,
                material_id: samples[chunk[0]].material_id,
                reason: e.to_string(),
            })?;
            epoch_loss += loss;
            batches += 1;
        }
        epoch_losses.push(epoch_loss / batches as f64);
    }
    Ok(TrainReport { epoch_losses })
}

fn stack_targets(samples: &[TrainSample], chunk: &[usize]) -> (Tensor, Tensor) {
    let n = samples[chunk[0]].graph.node_count();
    let mut dpos = Vec::with_capacity(chunk.len() * n * 3);
    let mut force = Vec::with_capacity(chunk.len());
    for &i in chunk {
        dpos.extend_from_slice(samples[i].target_dpos.data());
        force.push(samples[i].target_force);
    }
    (
        Tensor::new(chunk.len() * n, 3, dpos).unwrap(),
        Tensor::new(chunk.len(), 1, force).unwrap(),
    )
}
