//! Context-dimensionality study: a small MLP predicts the grasp force from
//! the cumulative displacement plus an elastic context of varying dimension
//! (0 disables the context input). Errors are averaged over several seeds
//! with freshly drawn held-out materials per seed.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gnn::{EC_SCALE, FORCE_SCALE};
use crate::tensornet::{adam_step, AdamState, Mlp, ParamSet, Tape, Tensor};

use super::comparison::split_materials;
use super::dataset::{Dataset, A_MAX};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyConfig {
    pub n_ec_values: Vec<usize>,
    pub seeds: Vec<u64>,
    pub test_samples: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Hidden widths of the predictor.
    pub hidden: Vec<usize>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            n_ec_values: (0..=5).collect(),
            seeds: (0..6).collect(),
            test_samples: 8,
            epochs: 1000,
            batch_size: 32,
            lr: 3e-4,
            hidden: vec![8, 8],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyCell {
    pub n_ec: usize,
    /// Test force MSE per seed, N².
    pub per_seed: Vec<f64>,
    pub mse_mean: f64,
    pub mse_std: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyTable {
    pub config: StudyConfig,
    pub cells: Vec<StudyCell>,
}

struct Row {
    material: usize,
    input: Vec<f64>,
    target: f64,
}

fn study_rows(dataset: &Dataset, material_indices: &[usize], n_ec: usize) -> Result<Vec<Row>> {
    let mut rows = Vec::new();
    for &mi in material_indices {
        let run = &dataset.runs[mi];
        let ec: Vec<f64> = if n_ec == 0 {
            Vec::new()
        } else {
            dataset
                .ec_vector(run, n_ec)?
                .moduli
                .iter()
                .map(|m| m * EC_SCALE)
                .collect()
        };
        let steps = run.frames.len() - 1;
        for t in 0..steps {
            let mut input = vec![(t + 1) as f64 * run.action[2].abs() / A_MAX];
            input.extend_from_slice(&ec);
            rows.push(Row {
                material: mi,
                input,
                target: run.forces[t + 1] / FORCE_SCALE,
            });
        }
    }
    Ok(rows)
}

fn stack(rows: &[Row], idx: &[usize]) -> (Tensor, Tensor) {
    let d = rows[0].input.len();
    let mut x = Vec::with_capacity(idx.len() * d);
    let mut y = Vec::with_capacity(idx.len());
    for &i in idx {
        x.extend_from_slice(&rows[i].input);
        y.push(rows[i].target);
    }
    (
        Tensor::new(idx.len(), d, x).unwrap(),
        Tensor::new(idx.len(), 1, y).unwrap(),
    )
}

/// Train one predictor and return its test force MSE in N².
fn train_and_eval(
    train_rows: &[Row],
    test_rows: &[Row],
    config: &StudyConfig,
    seed: u64,
) -> Result<f64> {
    let d = train_rows[0].input.len();
    let mut dims = vec![d];
    dims.extend_from_slice(&config.hidden);
    dims.push(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamSet::new();
    let mlp = Mlp::new(&mut params, "force_mlp", &dims, false, &mut rng);
    let mut adam = AdamState::new(&params, config.lr);

    let mut order: Vec<usize> = (0..train_rows.len()).collect();
    for _ in 0..config.epochs {
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        for chunk in order.chunks(config.batch_size) {
            let (x, y) = stack(train_rows, chunk);
            let mut tape = Tape::new(&params);
            let xid = tape.leaf(x);
            let out = mlp.forward_on(&mut tape, xid)?;
            let loss = tape.mse(out, y)?;
            let value = tape.value(loss).scalar();
            if !value.is_finite() {
                return Err(Error::Training {
                    epoch: 0,
                    batch: 0,
                    material_id: train_rows[chunk[0]].material as u32,
                    reason: format!("non-finite study loss {value}"),
                });
            }
            let grads = tape.backward(loss)?;
            drop(tape);
            adam_step(&mut params, &grads, &mut adam)?;
        }
    }

    let all: Vec<usize> = (0..test_rows.len()).collect();
    let (x, y) = stack(test_rows, &all);
    let mut tape = Tape::new(&params);
    let xid = tape.leaf(x);
    let out = mlp.forward_on(&mut tape, xid)?;
    let pred = tape.value(out);
    let mse_norm = pred
        .data()
        .iter()
        .zip(y.data().iter())
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / y.len() as f64;
    Ok(mse_norm * FORCE_SCALE * FORCE_SCALE)
}

/// Full sweep over context dimensions and seeds.
pub fn run_ec_dim_study(dataset: &Dataset, config: &StudyConfig) -> Result<StudyTable> {
    if dataset.runs.len() <= config.test_samples {
        return Err(Error::Dataset(format!(
            "study needs more than {} materials",
            config.test_samples
        )));
    }
    let mut cells: Vec<StudyCell> = config
        .n_ec_values
        .iter()
        .map(|&n_ec| StudyCell {
            n_ec,
            per_seed: Vec::new(),
            mse_mean: 0.0,
            mse_std: 0.0,
        })
        .collect();

    for &seed in &config.seeds {
        let frac = config.test_samples as f64 / dataset.runs.len() as f64;
        let (train_ids, test_ids) = split_materials(dataset.runs.len(), frac, seed);
        for (ci, &n_ec) in config.n_ec_values.iter().enumerate() {
            let train_rows = study_rows(dataset, &train_ids, n_ec)?;
            let test_rows = study_rows(dataset, &test_ids, n_ec)?;
            let mse = train_and_eval(&train_rows, &test_rows, config, seed)?;
            cells[ci].per_seed.push(mse);
        }
    }
    for cell in cells.iter_mut() {
        let n = cell.per_seed.len() as f64;
        let mean = cell.per_seed.iter().sum::<f64>() / n;
        let var = if cell.per_seed.len() > 1 {
            cell.per_seed
                .iter()
                .map(|v| (v - mean) * (v - mean))
                .sum::<f64>()
                / (n - 1.0)
        } else {
            0.0
        };
        cell.mse_mean = mean;
        cell.mse_std = var.sqrt();
    }
    Ok(StudyTable {
        config: config.clone(),
        cells,
    })
}
