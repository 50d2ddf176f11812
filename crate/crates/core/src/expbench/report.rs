//! Render an experiment report into a directory: markdown summary, CSVs of
//! every plotted series, and SVG charts. Byte-deterministic for a given
//! report file.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;

use super::comparison::ExperimentReport;
use super::io::{csv_line, fmt_f64, write_atomic};
use super::svg::{bar_chart, line_chart, Series};

const PALETTE: [&str; 8] = [
    "#4878a8", "#d65f5f", "#59a14f", "#b07aa1", "#e49444", "#76b7b2", "#edc948", "#555555",
];

pub fn render_report(report: &ExperimentReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_summary(report, dir)?;
    write_metrics_csv(report, dir)?;
    write_trajectories(report, dir)?;
    write_losses_csv(report, dir)?;
    write_curves(report, dir)?;
    if let Some(study) = &report.study {
        write_study(study, dir)?;
    }
    Ok(())
}

fn write_summary(report: &ExperimentReport, dir: &Path) -> Result<()> {
    let mut md = String::new();
    let _ = writeln!(md, "# Experiment report\n");
    let _ = writeln!(md, "- config hash: `{}`", report.config_hash);
    let _ = writeln!(md, "- seeds: {:?}", report.config.seeds);
    let _ = writeln!(
        md,
        "- materials: {} ({}x{} graphs)\n",
        report.n_materials, report.graph_rows, report.graph_cols
    );
    if !report.variants.is_empty() {
        let _ = writeln!(md, "## Rollout errors over held-out materials\n");
        let _ = writeln!(md, "| model | force MSE [N^2] | graph MSE [m^2] |");
        let _ = writeln!(md, "|---|---|---|");
        for v in &report.variants {
            let _ = writeln!(
                md,
                "| {} | {:.4} ± {:.4} | {:.6} ± {:.6} |",
                v.variant.label(),
                v.force_mse_mean,
                v.force_mse_std,
                v.graph_mse_mean,
                v.graph_mse_std
            );
        }
        let diverged: Vec<String> = report
            .variants
            .iter()
            .flat_map(|v| {
                v.per_material
                    .iter()
                    .filter(|m| m.diverged)
                    .map(move |m| format!("{}/seed{}/mat{}", v.variant.label(), m.seed, m.material_id))
            })
            .collect();
        if !diverged.is_empty() {
            let _ = writeln!(md, "\nDiverged rollouts: {}", diverged.join(", "));
        }
        let _ = writeln!(md);
    }
    if let Some(study) = &report.study {
        let _ = writeln!(md, "## Context dimensionality study\n");
        let _ = writeln!(md, "| n_ec | force MSE [N^2] |");
        let _ = writeln!(md, "|---|---|");
        for cell in &study.cells {
            let _ = writeln!(md, "| {} | {:.4} ± {:.4} |", cell.n_ec, cell.mse_mean, cell.mse_std);
        }
        let _ = writeln!(md);
    }
    write_atomic(&dir.join("summary.md"), md.as_bytes())
}

fn write_metrics_csv(report: &ExperimentReport, dir: &Path) -> Result<()> {
    let mut out = String::from("variant,seed,material_id,force_mse_N2,graph_mse_m2,diverged\n");
    for v in &report.variants {
        for m in &v.per_material {
            out.push_str(&csv_line(&[
                v.variant.label(),
                m.seed.to_string(),
                m.material_id.to_string(),
                fmt_f64(m.force_mse),
                fmt_f64(m.graph_mse),
                m.diverged.to_string(),
            ]));
            out.push('\n');
        }
    }
    write_atomic(&dir.join("metrics.csv"), out.as_bytes())
}

fn write_trajectories(report: &ExperimentReport, dir: &Path) -> Result<()> {
    // CSV holds the plotted series: the first seed, every variant and
    // held-out material.
    let Some(&seed0) = report.config.seeds.first() else {
        return Ok(());
    };
    let mut out = String::from("variant,material_id,step,predicted_N,true_N\n");
    for t in report.trajectories.iter().filter(|t| t.seed == seed0) {
        for (step, (p, tr)) in t.predicted.iter().zip(t.truth.iter()).enumerate() {
            out.push_str(&csv_line(&[
                t.variant.clone(),
                t.material_id.to_string(),
                step.to_string(),
                fmt_f64(*p),
                fmt_f64(*tr),
            ]));
            out.push('\n');
        }
    }
    write_atomic(&dir.join("trajectories.csv"), out.as_bytes())?;

    // One chart per variant: truth solid, prediction dashed, colored per
    // material.
    let mut variants: Vec<String> = report
        .trajectories
        .iter()
        .map(|t| t.variant.clone())
        .collect();
    variants.sort();
    variants.dedup();
    for variant in variants {
        let mut series = Vec::new();
        for (mi, t) in report
            .trajectories
            .iter()
            .filter(|t| t.seed == seed0 && t.variant == variant)
            .enumerate()
        {
            let color = PALETTE[mi % PALETTE.len()].to_string();
            series.push(Series {
                label: format!("mat {}", t.material_id),
                points: t
                    .truth
                    .iter()
                    .enumerate()
                    .map(|(i, &f)| (i as f64, f))
                    .collect(),
                color: color.clone(),
                dashed: false,
            });
            series.push(Series {
                label: String::new(),
                points: t
                    .predicted
                    .iter()
                    .enumerate()
                    .map(|(i, &f)| (i as f64, f))
                    .collect(),
                color,
                dashed: true,
            });
        }
        if series.is_empty() {
            continue;
        }
        let svg = line_chart(
            &format!("Force forecast rollouts ({variant}); dashed = predicted"),
            "step",
            "force [N]",
            &series,
        );
        write_atomic(&dir.join(format!("forces_{variant}.svg")), svg.as_bytes())?;
    }
    Ok(())
}

fn write_losses_csv(report: &ExperimentReport, dir: &Path) -> Result<()> {
    if report.loss_curves.is_empty() {
        return Ok(());
    }
    let mut out = String::from("variant,seed,epoch,loss\n");
    for lc in &report.loss_curves {
        for (epoch, loss) in lc.epoch_losses.iter().enumerate() {
            out.push_str(&csv_line(&[
                lc.variant.clone(),
                lc.seed.to_string(),
                epoch.to_string(),
                fmt_f64(*loss),
            ]));
            out.push('\n');
        }
    }
    write_atomic(&dir.join("losses.csv"), out.as_bytes())
}

fn write_curves(report: &ExperimentReport, dir: &Path) -> Result<()> {
    if report.test_curves.is_empty() {
        return Ok(());
    }
    let mut out = String::from("material_id,strain,stress_Pa\n");
    for (id, points) in &report.test_curves {
        for (eps, sigma) in points {
            out.push_str(&csv_line(&[
                id.to_string(),
                fmt_f64(*eps),
                fmt_f64(*sigma),
            ]));
            out.push('\n');
        }
    }
    write_atomic(&dir.join("stress_strain.csv"), out.as_bytes())?;

    let series: Vec<Series> = report
        .test_curves
        .iter()
        .enumerate()
        .map(|(i, (id, points))| Series {
            label: format!("mat {id}"),
            points: points.clone(),
            color: PALETTE[i % PALETTE.len()].to_string(),
            dashed: false,
        })
        .collect();
    let svg = line_chart(
        "Stress-strain curves of held-out materials",
        "strain",
        "stress [Pa]",
        &series,
    );
    write_atomic(&dir.join("stress_strain.svg"), svg.as_bytes())
}

fn write_study(study: &super::study::StudyTable, dir: &Path) -> Result<()> {
    let mut out = String::from("n_ec,seed,force_mse_N2\n");
    for cell in &study.cells {
        for (si, mse) in cell.per_seed.iter().enumerate() {
            out.push_str(&csv_line(&[
                cell.n_ec.to_string(),
                study.config.seeds[si].to_string(),
                fmt_f64(*mse),
            ]));
            out.push('\n');
        }
    }
    write_atomic(&dir.join("study.csv"), out.as_bytes())?;

    let bars: Vec<(String, f64, f64)> = study
        .cells
        .iter()
        .map(|c| (c.n_ec.to_string(), c.mse_mean, c.mse_std))
        .collect();
    let svg = bar_chart(
        "Force error vs context dimension",
        "n_ec",
        "force MSE [N^2]",
        &bars,
    );
    write_atomic(&dir.join("study.svg"), svg.as_bytes())
}
