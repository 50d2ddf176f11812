//! The message-passing model: encoders, T propagation steps, and the
//! position/force heads.
//!
//! Per step τ, every node latent updates as
//! h_i = Φ(Σ_{s∈N_i} Ψ(h_i, h_s, c)), where c is the encoded shared edge
//! feature. Ψ and Φ are shared across all T steps. The force output is the
//! mean of a per-node head; the graph head emits a per-node position change.

use std::rc::Rc;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::tensornet::{Checkpoint, Gradients, Mlp, ParamSet, Tape, Tensor, ValueId};

use super::graph::{batch_arcs, batch_segments, TextileGraph, NODE_FEATURES};

/// Latent width of every block.
pub const HIDDEN: usize = 16;
/// Propagation steps.
pub const T_STEPS: usize = 8;
/// Force normalization scale, N (σ_max · A₀ of the reference sample).
pub const FORCE_SCALE: f64 = 5.4;
/// Context normalization scale, 1/Pa (moduli ~1e5 Pa map to ~1).
pub const EC_SCALE: f64 = 1e-5;
/// Oracle label width: secant modulus at σ_max plus up to four segment
/// slopes, zero-padded.
pub const ORACLE_WIDTH: usize = 5;

/// Which conditioning signal the model receives on its edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// No material information: the edge feature is a single zero.
    Baseline,
    /// Elastic context of the given dimension.
    Ec(usize),
    /// Ground-truth material parameters.
    Oracle,
}

impl Variant {
    pub fn context_dim(&self) -> usize {
        match self {
            Variant::Baseline => 1,
            Variant::Ec(n) => *n,
            Variant::Oracle => ORACLE_WIDTH,
        }
    }

    pub fn label(&self) -> String {
        match self {
            Variant::Baseline => "baseline".into(),
            Variant::Ec(n) => format!("ec{n}"),
            Variant::Oracle => "oracle".into(),
        }
    }
}

/// Model hyperparameters that must survive checkpointing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Position scale, m (the sample rest length).
    pub l0: f64,
    pub force_scale: f64,
    pub hidden: usize,
    pub t_steps: usize,
}

impl ModelConfig {
    pub fn new(variant: Variant, l0: f64) -> Self {
        ModelConfig {
            variant,
            l0,
            force_scale: FORCE_SCALE,
            hidden: HIDDEN,
            t_steps: T_STEPS,
        }
    }
}

/// Denormalized single-graph prediction.
#[derive(Debug, Clone)]
pub struct Prediction {
    /// Per-node position change, m.
    pub delta_positions: Vec<[f64; 3]>,
    /// Predicted grasp force, N.
    pub force: f64,
}

pub struct GnnModel {
    pub config: ModelConfig,
    pub params: ParamSet,
    pub seed: u64,
    node_encoder: Mlp,
    edge_encoder: Mlp,
    message_net: Mlp,
    aggregate_net: Mlp,
    graph_head: Mlp,
    force_head: Mlp,
}

impl GnnModel {
    pub fn new(config: ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let h = config.hidden;
        let dc = config.variant.context_dim();
        let node_encoder = Mlp::new(&mut params, "node_enc", &[NODE_FEATURES, h, h], true, &mut rng);
        let edge_encoder = Mlp::new(&mut params, "edge_enc", &[dc, h, h], true, &mut rng);
        let message_net = Mlp::new(&mut params, "message", &[3 * h, h, h], true, &mut rng);
        let aggregate_net = Mlp::new(&mut params, "aggregate", &[h, h, h], true, &mut rng);
        let graph_head = Mlp::new(&mut params, "graph_head", &[h, h, 3], true, &mut rng);
        let force_head = Mlp::new(&mut params, "force_head", &[h, h, 1], true, &mut rng);
        GnnModel {
            config,
            params,
            seed,
            node_encoder,
            edge_encoder,
            message_net,
            aggregate_net,
            graph_head,
            force_head,
        }
    }

    fn check_graph(&self, g: &TextileGraph) -> Result<()> {
        let dc = self.config.variant.context_dim();
        if g.edge_feature.len() != dc {
            return Err(Error::ShapeMismatch(format!(
                "edge feature dimension {} inconsistent with variant {} (wants {dc})",
                g.edge_feature.len(),
                self.config.variant.label()
            )));
        }
        Ok(())
    }

    /// Record the forward pass for a batch of same-topology graphs. Returns
    /// (normalized per-node position deltas [B·n × 3], normalized per-graph
    /// forces [B × 1]).
    pub fn forward_batch_on(
        &self,
        tape: &mut Tape,
        graphs: &[&TextileGraph],
    ) -> Result<(ValueId, ValueId)> {
        let b = graphs.len();
        if b == 0 {
            return Err(Error::Domain("empty graph batch".into()));
        }
        let (rows, cols) = (graphs[0].rows, graphs[0].cols);
        let n = rows * cols;
        let dc = self.config.variant.context_dim();
        let mut node_data = Vec::with_capacity(b * n * NODE_FEATURES);
        let mut edge_data = Vec::with_capacity(b * dc);
        for g in graphs {
            self.check_graph(g)?;
            if g.rows != rows || g.cols != cols {
                return Err(Error::ShapeMismatch(format!(
                    "mixed mesh sizes in batch: {}x{} vs {rows}x{cols}",
                    g.rows, g.cols
                )));
            }
            node_data.extend_from_slice(g.node_features.data());
            edge_data.extend_from_slice(&g.edge_feature);
        }
        let nodes = tape.leaf(Tensor::new(b * n, NODE_FEATURES, node_data)?);
        let edges = tape.leaf(Tensor::new(b, dc, edge_data)?);
        let arcs = Rc::new(batch_arcs(rows, cols, b));

        let mut h = self.node_encoder.forward_on(tape, nodes)?;
        let c = self.edge_encoder.forward_on(tape, edges)?;

        let (psi_w0, psi_b0) = self.message_net.layer_params(0);
        let (psi_w1, psi_b1) = self.message_net.layer_params(1);
        let psi_norm = self.message_net.norm_params(0);
        for _ in 0..self.config.t_steps {
            // Ψ over every arc: first layer fused over [h_dst, h_src, c].
            let mut m = tape.message_preact(h, c, psi_w0, psi_b0, arcs.clone())?;
            if let Some((gain, beta)) = psi_norm {
                m = tape.layer_norm(m, gain, beta)?;
            }
            let m = tape.relu(m);
            let m = tape.linear(m, psi_w1, psi_b1)?;
            // Neighbor sum, then Φ.
            let agg = tape.scatter_add_rows(m, Rc::new(arcs.dst.clone()), b * n);
            h = self.aggregate_net.forward_on(tape, agg)?;
        }

        let dpos = self.graph_head.forward_on(tape, h)?;
        let fnode = self.force_head.forward_on(tape, h)?;
        let force = tape.segment_mean_rows(fnode, batch_segments(n, b), b);
        Ok((dpos, force))
    }

    /// Denormalized prediction for one graph.
    pub fn predict(&self, graph: &TextileGraph) -> Result<Prediction> {
        let mut tape = Tape::new(&self.params);
        let (dpos, force) = self.forward_batch_on(&mut tape, &[graph])?;
        let dpos = tape.value(dpos);
        let force = tape.value(force).scalar() * self.config.force_scale;
        let l0 = self.config.l0;
        let delta_positions = (0..graph.node_count())
            .map(|i| {
                let r = dpos.row_slice(i);
                [r[0] * l0, r[1] * l0, r[2] * l0]
            })
            .collect();
        Ok(Prediction {
            delta_positions,
            force,
        })
    }

    /// Supervised loss for a recorded batch: MSE over normalized node
    /// position changes plus MSE over normalized forces.
    pub fn loss_on(
        &self,
        tape: &mut Tape,
        dpos: ValueId,
        force: ValueId,
        target_dpos: Tensor,
        target_force: Tensor,
    ) -> Result<ValueId> {
        let lp = tape.mse(dpos, target_dpos)?;
        let lf = tape.mse(force, target_force)?;
        tape.add(lp, lf)
    }

    /// Loss value only (no backward); used by evaluation and gradient checks.
    pub fn loss_value(
        &self,
        graphs: &[&TextileGraph],
        target_dpos: &Tensor,
        target_force: &Tensor,
    ) -> Result<f64> {
        let mut tape = Tape::new(&self.params);
        let (dpos, force) = self.forward_batch_on(&mut tape, graphs)?;
        let loss = self.loss_on(
            &mut tape,
            dpos,
            force,
            target_dpos.clone(),
            target_force.clone(),
        )?;
        Ok(tape.value(loss).scalar())
    }

    /// Loss plus gradients for a batch of (graph, targets). Targets are in
    /// normalized units.
    pub fn loss_and_grads(
        &self,
        graphs: &[&TextileGraph],
        target_dpos: &Tensor,
        target_force: &Tensor,
    ) -> Result<(f64, Gradients)> {
        let mut tape = Tape::new(&self.params);
        let (dpos, force) = self.forward_batch_on(&mut tape, graphs)?;
        let loss = self.loss_on(
            &mut tape,
            dpos,
            force,
            target_dpos.clone(),
            target_force.clone(),
        )?;
        let value = tape.value(loss).scalar();
        let grads = tape.backward(loss)?;
        Ok((value, grads))
    }

    /// Plain-value loss used by evaluation and tests.
    pub fn supervised_loss(
        pred_dpos: &Tensor,
        pred_force: &Tensor,
        target_dpos: &Tensor,
        target_force: &Tensor,
    ) -> f64 {
        let mse = |a: &Tensor, b: &Tensor| -> f64 {
            a.data()
                .iter()
                .zip(b.data().iter())
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                / a.len() as f64
        };
        mse(pred_dpos, target_dpos) + mse(pred_force, target_force)
    }

    pub fn to_checkpoint(&self, adam: Option<&crate::tensornet::AdamState>) -> Checkpoint {
        Checkpoint::from_params(
            &self.params,
            adam,
            self.seed,
            json!({
                "model": "textile_gnn",
                "variant": self.config.variant,
                "l0": self.config.l0,
                "force_scale": self.config.force_scale,
                "hidden": self.config.hidden,
                "t_steps": self.config.t_steps,
            }),
        )
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let meta = &ckpt.meta;
        let variant: Variant = serde_json::from_value(
            meta.get("variant")
                .cloned()
                .ok_or_else(|| Error::Checkpoint("missing variant".into()))?,
        )?;
        let l0 = meta
            .get("l0")
            .and_then(|v| v.as_f64())
            .ok_or_else(|| Error::Checkpoint("missing l0".into()))?;
        let mut config = ModelConfig::new(variant, l0);
        if let Some(fs) = meta.get("force_scale").and_then(|v| v.as_f64()) {
            config.force_scale = fs;
        }
        let mut model = GnnModel::new(config, ckpt.seed);
        ckpt.restore_into(&mut model.params)?;
        Ok(model)
    }
}

/// Normalized edge feature for a variant, from the measured context and the
/// ground-truth label.
pub fn edge_feature_for(
    variant: Variant,
    ec: Option<&crate::eccontext::EcVector>,
    oracle: Option<&[f64]>,
) -> Result<Vec<f64>> {
    match variant {
        Variant::Baseline => Ok(vec![0.0]),
        Variant::Ec(n) => {
            let ec = ec.ok_or_else(|| Error::Domain("variant needs an elastic context".into()))?;
            if ec.n_ec != n {
                return Err(Error::ShapeMismatch(format!(
                    "context of dimension {} for variant ec{n}",
                    ec.n_ec
                )));
            }
            Ok(ec.moduli.iter().map(|m| m * EC_SCALE).collect())
        }
        Variant::Oracle => {
            let label =
                oracle.ok_or_else(|| Error::Domain("variant needs an oracle label".into()))?;
            if label.len() != ORACLE_WIDTH {
                return Err(Error::ShapeMismatch(format!(
                    "oracle label width {} (wants {ORACLE_WIDTH})",
                    label.len()
                )));
            }
            Ok(label.iter().map(|m| m * EC_SCALE).collect())
        }
    }
}

/// Ground-truth label: secant modulus at σ_max plus the segment slopes,
/// zero-padded to the fixed width. Raw Pa.
pub fn oracle_label(law: &crate::material::MaterialLaw, sigma_max: f64) -> Result<Vec<f64>> {
    let eps = law.strain_at_stress(sigma_max)?;
    let mut label = vec![law.secant_modulus(eps)?];
    for &m in law.moduli.iter().take(ORACLE_WIDTH - 1) {
        label.push(m);
    }
    label.resize(ORACLE_WIDTH, 0.0);
    Ok(label)
}
