//! Variant comparison: train each conditioning variant on the same splits and
//! seeds, evaluate rollout force and graph errors on held-out materials.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gnn::{
    build_graph, rollout, train, GnnModel, GraphData, ModelConfig, TextileGraph, TrainConfig,
    TrainSample, Variant, FORCE_SCALE,
};
use crate::tensornet::Tensor;

use super::dataset::{Dataset, MaterialRun};
use super::io::fnv1a64;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonConfig {
    pub variants: Vec<Variant>,
    pub seeds: Vec<u64>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub test_fraction: f64,
}

impl ComparisonConfig {
    /// Desk scale: 500 epochs, three seeds, the full variant set.
    pub fn desk() -> Self {
        ComparisonConfig {
            variants: vec![
                Variant::Baseline,
                Variant::Ec(1),
                Variant::Ec(2),
                Variant::Ec(5),
                Variant::Oracle,
            ],
            seeds: vec![0, 1, 2],
            epochs: 500,
            batch_size: 32,
            lr: 3e-4,
            test_fraction: 0.2,
        }
    }

    /// Reference scale: 2000 epochs.
    pub fn paper() -> Self {
        ComparisonConfig {
            epochs: 2000,
            ..Self::desk()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaterialMetric {
    pub seed: u64,
    pub material_id: u32,
    pub force_mse: f64,
    pub graph_mse: f64,
    pub diverged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: Variant,
    pub force_mse_mean: f64,
    pub force_mse_std: f64,
    pub graph_mse_mean: f64,
    pub graph_mse_std: f64,
    pub per_material: Vec<MaterialMetric>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub variant: String,
    pub seed: u64,
    pub material_id: u32,
    pub predicted: Vec<f64>,
    pub truth: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LossCurve {
    pub variant: String,
    pub seed: u64,
    pub epoch_losses: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ComparisonConfig,
    pub n_materials: usize,
    pub graph_rows: usize,
    pub graph_cols: usize,
    pub variants: Vec<VariantSummary>,
    pub trajectories: Vec<TrajectoryRecord>,
    pub loss_curves: Vec<LossCurve>,
    /// Stress-strain curves of the held-out materials (for plots).
    pub test_curves: Vec<(u32, Vec<(f64, f64)>)>,
    /// Context-dimensionality study results, when that experiment ran.
    pub study: Option<super::study::StudyTable>,
    pub config_hash: String,
}

impl ExperimentReport {
    /// Report carrying only a dimensionality study.
    pub fn from_study(study: super::study::StudyTable, n_materials: usize) -> Self {
        let config = ComparisonConfig {
            variants: Vec::new(),
            seeds: study.config.seeds.clone(),
            epochs: study.config.epochs,
            batch_size: study.config.batch_size,
            lr: study.config.lr,
            test_fraction: 0.0,
        };
        let hash = fnv1a64(serde_json::to_string(&study.config).unwrap_or_default().as_bytes());
        ExperimentReport {
            config,
            n_materials,
            graph_rows: 0,
            graph_cols: 0,
            variants: Vec::new(),
            trajectories: Vec::new(),
            loss_curves: Vec::new(),
            test_curves: Vec::new(),
            study: Some(study),
            config_hash: format!("{hash:016x}"),
        }
    }
}

/// A trained model kept alongside the report for follow-up checks.
pub struct TrainedModel {
    pub variant: Variant,
    pub seed: u64,
    pub model: GnnModel,
}

pub struct ComparisonOutcome {
    pub report: ExperimentReport,
    pub models: Vec<TrainedModel>,
}

/// Seeded material split: the first `test_fraction` of a shuffled index list
/// is held out.
pub fn split_materials(n: usize, test_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let n_test = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
    let test = order[..n_test].to_vec();
    let train = order[n_test..].to_vec();
    (train, test)
}

/// Supervised one-step samples for the given materials under a variant.
pub fn build_samples(
    dataset: &Dataset,
    material_indices: &[usize],
    variant: Variant,
) -> Result<Vec<TrainSample>> {
    let l0 = dataset.l0();
    let (rows, cols) = (dataset.config.graph_rows, dataset.config.graph_cols);
    let mut samples = Vec::new();
    for &mi in material_indices {
        let run = &dataset.runs[mi];
        let edge = dataset.edge_feature(run, variant)?;
        for t in 0..run.frames.len() - 1 {
            let graph = build_graph(
                &GraphData {
                    positions: &run.frames[t],
                    action: run.action,
                },
                rows,
                cols,
                &edge,
                l0,
            )?;
            let n = graph.node_count();
            let mut dpos = Vec::with_capacity(n * 3);
            for (a, b) in run.frames[t].iter().zip(run.frames[t + 1].iter()) {
                dpos.push((b[0] - a[0]) / l0);
                dpos.push((b[1] - a[1]) / l0);
                dpos.push((b[2] - a[2]) / l0);
            }
            samples.push(TrainSample {
                material_id: run.law.id,
                graph,
                target_dpos: Tensor::new(n, 3, dpos)?,
                target_force: run.forces[t + 1] / FORCE_SCALE,
            });
        }
    }
    Ok(samples)
}

/// Rollout evaluation of one model on one held-out material. Force MSE is in
/// N²; graph MSE is over free-node coordinates in m².
pub fn evaluate_on_material(
    model: &GnnModel,
    dataset: &Dataset,
    run: &MaterialRun,
) -> Result<(MaterialMetric, Vec<f64>, Vec<f64>)> {
    let (rows, cols) = (dataset.config.graph_rows, dataset.config.graph_cols);
    let edge = dataset.edge_feature(run, model.config.variant)?;
    let steps = run.frames.len() - 1;
    let actions = vec![run.action; steps];
    let result = rollout(model, &run.frames[0], rows, cols, &actions, &edge)?;

    let truth: Vec<f64> = run.forces[1..].to_vec();
    let n_eval = result.forces.len().min(truth.len());
    let force_mse = truth
        .iter()
        .zip(result.forces.iter())
        .map(|(t, p)| (t - p) * (t - p))
        .sum::<f64>()
        / n_eval.max(1) as f64;

    let mut graph_se = 0.0;
    let mut graph_n = 0usize;
    for (t, pred_frame) in result.positions.iter().enumerate() {
        let true_frame = &run.frames[t + 1];
        for (i, (p, q)) in pred_frame.iter().zip(true_frame.iter()).enumerate() {
            let c = i % cols;
            if c == 0 || c == cols - 1 {
                continue; // grasped nodes are kinematically overridden
            }
            for k in 0..3 {
                graph_se += (p[k] - q[k]) * (p[k] - q[k]);
                graph_n += 1;
            }
        }
    }
    let metric = MaterialMetric {
        seed: 0,
        material_id: run.law.id,
        force_mse,
        graph_mse: graph_se / graph_n.max(1) as f64,
        diverged: result.diverged,
    };
    Ok((metric, result.forces, truth))
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Train every (variant, seed) job on identical splits and evaluate on the
/// held-out materials.
pub fn run_comparison(dataset: &Dataset, config: &ComparisonConfig) -> Result<ComparisonOutcome> {
    if dataset.runs.len() < 2 {
        return Err(Error::Dataset("need at least 2 materials".into()));
    }
    let l0 = dataset.l0();
    let mut variants: Vec<VariantSummary> = config
        .variants
        .iter()
        .map(|&variant| VariantSummary {
            variant,
            force_mse_mean: 0.0,
            force_mse_std: 0.0,
            graph_mse_mean: 0.0,
            graph_mse_std: 0.0,
            per_material: Vec::new(),
        })
        .collect();
    let mut trajectories = Vec::new();
    let mut loss_curves = Vec::new();
    let mut models = Vec::new();
    let mut test_curve_ids = std::collections::BTreeSet::new();

    for &seed in &config.seeds {
        let (train_ids, test_ids) = split_materials(dataset.runs.len(), config.test_fraction, seed);
        // Split hygiene: no material appears on both sides.
        for t in &test_ids {
            assert!(!train_ids.contains(t), "split leaks material {t}");
        }
        for (vi, &variant) in config.variants.iter().enumerate() {
            let samples = build_samples(dataset, &train_ids, variant)?;
            let mut model = GnnModel::new(ModelConfig::new(variant, l0), seed);
            let report = train(
                &mut model,
                &samples,
                &TrainConfig {
                    epochs: config.epochs,
                    batch_size: config.batch_size,
                    lr: config.lr,
                    seed,
                },
            )?;
            loss_curves.push(LossCurve {
                variant: variant.label(),
                seed,
                epoch_losses: report.epoch_losses,
            });
            for &mi in &test_ids {
                let run = &dataset.runs[mi];
                let (mut metric, predicted, truth) = evaluate_on_material(&model, dataset, run)?;
                metric.seed = seed;
                variants[vi].per_material.push(metric);
                trajectories.push(TrajectoryRecord {
                    variant: variant.label(),
                    seed,
                    material_id: run.law.id,
                    predicted,
                    truth,
                });
                test_curve_ids.insert(mi);
            }
            models.push(TrainedModel {
                variant,
                seed,
                model,
            });
        }
    }

    for summary in variants.iter_mut() {
        let f: Vec<f64> = summary.per_material.iter().map(|m| m.force_mse).collect();
        let g: Vec<f64> = summary.per_material.iter().map(|m| m.graph_mse).collect();
        let (fm, fs) = mean_std(&f);
        let (gm, gs) = mean_std(&g);
        summary.force_mse_mean = fm;
        summary.force_mse_std = fs;
        summary.graph_mse_mean = gm;
        summary.graph_mse_std = gs;
    }

    let test_curves = test_curve_ids
        .into_iter()
        .map(|mi| {
            let run = &dataset.runs[mi];
            (run.law.id, run.curve.points.clone())
        })
        .collect();

    let config_json = serde_json::to_string(config)?;
    let report = ExperimentReport {
        config: config.clone(),
        n_materials: dataset.runs.len(),
        graph_rows: dataset.config.graph_rows,
        graph_cols: dataset.config.graph_cols,
        variants,
        trajectories,
        loss_curves,
        test_curves,
        study: None,
        config_hash: format!("{:016x}", fnv1a64(config_json.as_bytes())),
    };
    Ok(ComparisonOutcome { report, models })
}

/// Graphs a variant-blind sanity check can feed to any model: same state and
/// action, differing only in the edge feature.
pub fn graph_for_run(
    dataset: &Dataset,
    run: &MaterialRun,
    frame: usize,
    variant: Variant,
) -> Result<TextileGraph> {
    let edge = dataset.edge_feature(run, variant)?;
    build_graph(
        &GraphData {
            positions: &run.frames[frame],
            action: run.action,
        },
        dataset.config.graph_rows,
        dataset.config.graph_cols,
        &edge,
        dataset.l0(),
    )
}
