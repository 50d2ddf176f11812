//! Dataset persistence: a JSON manifest plus one trajectory CSV per material.
//! All numbers are written in shortest round-trip form, so regeneration with
//! the same seed reproduces every file byte for byte.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::dataset::{Dataset, DatasetConfig, MaterialRun, SkippedMaterial};
use super::io::{csv_line, fmt_f64, write_atomic};

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    law: crate::material::MaterialLaw,
    curve: crate::eccontext::StressStrainCurve,
    oracle_label: Vec<f64>,
    onset_step: usize,
    action: [f64; 3],
    trajectory: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    schema_version: u32,
    config: DatasetConfig,
    materials: Vec<ManifestEntry>,
    skipped: Vec<SkippedMaterial>,
}

fn trajectory_header(n_nodes: usize) -> String {
    let mut cells = vec![
        "t".to_string(),
        "action_x".into(),
        "action_y".into(),
        "action_z".into(),
        "force_N".into(),
    ];
    for i in 0..n_nodes {
        for axis in ["x", "y", "z"] {
            cells.push(format!("node_{i}_{axis}"));
        }
    }
    csv_line(&cells)
}

fn trajectory_csv(run: &MaterialRun) -> String {
    let n_nodes = run.frames[0].len();
    let mut out = String::new();
    out.push_str(&trajectory_header(n_nodes));
    out.push('\n');
    for (t, frame) in run.frames.iter().enumerate() {
        let action = if t == 0 { [0.0; 3] } else { run.action };
        let mut cells = vec![
            t.to_string(),
            fmt_f64(action[0]),
            fmt_f64(action[1]),
            fmt_f64(action[2]),
            fmt_f64(run.forces[t]),
        ];
        for p in frame {
            cells.push(fmt_f64(p[0]));
            cells.push(fmt_f64(p[1]));
            cells.push(fmt_f64(p[2]));
        }
        out.push_str(&csv_line(&cells));
        out.push('\n');
    }
    out
}

pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::new();
    for run in &dataset.runs {
        let name = format!("material_{:03}.csv", run.law.id);
        write_atomic(&dir.join(&name), trajectory_csv(run).as_bytes())?;
        entries.push(ManifestEntry {
            law: run.law.clone(),
            curve: run.curve.clone(),
            oracle_label: run.oracle_label.clone(),
            onset_step: run.onset_step,
            action: run.action,
            trajectory: name,
        });
    }
    let manifest = Manifest {
        schema_version: dataset.schema_version,
        config: dataset.config.clone(),
        materials: entries,
        skipped: dataset.skipped.clone(),
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    write_atomic(&dir.join("manifest.json"), json.as_bytes())?;
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest: Manifest =
        serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
    if manifest.schema_version != super::dataset::DATASET_SCHEMA_VERSION {
        return Err(Error::Dataset(format!(
            "unsupported dataset schema {}",
            manifest.schema_version
        )));
    }
    let mut runs = Vec::new();
    for entry in manifest.materials {
        let text = fs::read_to_string(dir.join(&entry.trajectory))?;
        let (frames, forces) = parse_trajectory(&text)?;
        if frames.len() != manifest.config.task_steps + 1 {
            return Err(Error::Dataset(format!(
                "{}: expected {} frames, got {}",
                entry.trajectory,
                manifest.config.task_steps + 1,
                frames.len()
            )));
        }
        runs.push(MaterialRun {
            law: entry.law,
            curve: entry.curve,
            oracle_label: entry.oracle_label,
            onset_step: entry.onset_step,
            frames,
            forces,
            action: entry.action,
        });
    }
    Ok(Dataset {
        schema_version: manifest.schema_version,
        config: manifest.config,
        runs,
        skipped: manifest.skipped,
    })
}

fn parse_trajectory(text: &str) -> Result<(Vec<Vec<[f64; 3]>>, Vec<f64>)> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Dataset("empty trajectory file".into()))?;
    let n_cols = header.split(',').count();
    if (n_cols - 5) % 3 != 0 {
        return Err(Error::Dataset("malformed trajectory header".into()));
    }
    let n_nodes = (n_cols - 5) / 3;
    let mut frames = Vec::new();
    let mut forces = Vec::new();
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != n_cols {
            return Err(Error::Dataset(format!(
                "row has {} cells, expected {n_cols}",
                cells.len()
            )));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|e| Error::Dataset(format!("bad float {s}: {e}")))
        };
        forces.push(parse(cells[4])?);
        let mut frame = Vec::with_capacity(n_nodes);
        for i in 0..n_nodes {
            frame.push([
                parse(cells[5 + 3 * i])?,
                parse(cells[6 + 3 * i])?,
                parse(cells[7 + 3 * i])?,
            ]);
        }
        frames.push(frame);
    }
    Ok((frames, forces))
}
