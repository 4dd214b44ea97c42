//! The commands behind the `cgnn` binary: synthesize, corrupt, train, sweep
//! and evaluate. Each takes a validated [`ExperimentConfig`] and writes its
//! artifacts under `out_dir`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::autodiff::checkpoint;
use crate::config::ExperimentConfig;
use crate::correction::{CorrectionConfig, CorrectionRecord};
use crate::encoder::ModelParams;
use crate::error::{Error, Result};
use crate::graph::{make_split, Dataset, LabelStore};
use crate::io::{load_dataset_dir, write_dataset_dir, JsonLines, SplitSpec, SPLIT_FILE};
use crate::noise::gen_synthetic;
use crate::rng::{stream, substream};
use crate::trainer::{evaluate, run_sweep, EpochMetrics, ProtocolResult, RoundMetrics, Summary};

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const ROUNDS_FILE: &str = "rounds.jsonl";
pub const CORRECTIONS_FILE: &str = "corrections.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CONFIG_FILE: &str = "config.txt";
pub const SWEEP_FILE: &str = "sweep.csv";

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// The dataset a config refers to: files under `data.dir`, or a freshly
/// generated planted-partition graph.
///
/// A directory with a split (`split.file` or a `split.txt` next to the data)
/// keeps it, together with the observed labels stored there. Without a split
/// the labels are taken as ground truth and every run draws its own split.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let Some(dir) = &cfg.data_dir else {
        return gen_synthetic(&cfg.synth);
    };
    let split_file = cfg.split_file.clone().or_else(|| {
        let p = dir.join(SPLIT_FILE);
        p.exists().then_some(p)
    });
    match split_file {
        Some(path) => load_dataset_dir(dir, &SplitSpec::File(path)),
        None => {
            let loaded = load_dataset_dir(dir, &SplitSpec::Rate { rate: 0.5, seed: 0 })?;
            let labels = LabelStore::from_clean(loaded.num_classes(), loaded.labels.clean().to_vec())?;
            let mut dataset = Dataset::new(
                (*loaded.graph).clone(),
                (*loaded.attributes).clone(),
                labels,
            )?;
            dataset.class_names = loaded.class_names;
            Ok(dataset)
        }
    }
}

/// Writes a synthetic dataset (graph, attributes, clean labels) to `out_dir`.
pub fn cmd_synth(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let dataset = gen_synthetic(&cfg.synth)?;
    write_dataset_dir(&cfg.out_dir, &dataset)?;
    log::info!(
        "wrote {} nodes, {} edges, {} classes to {}",
        dataset.num_nodes(),
        dataset.graph.num_edges(),
        dataset.num_classes(),
        cfg.out_dir.display()
    );
    Ok(cfg.out_dir.clone())
}

/// Draws a split (unless the data has one), corrupts the train labels with
/// `noise.*` and writes the result, including the split, to `out_dir`.
pub fn cmd_inject(cfg: &ExperimentConfig) -> Result<Dataset> {
    let mut dataset = load_dataset(cfg)?;
    if dataset.labels.num_train() == 0 {
        let split = make_split(
            dataset.labels.clean(),
            dataset.num_classes(),
            cfg.protocol.label_rate,
            cfg.protocol.split_policy,
            &mut substream(cfg.protocol.train.seed, stream::SPLIT),
        )?;
        dataset.labels.apply_split(&split)?;
    }
    if let Some(noise) = cfg.noise_spec() {
        dataset.labels = noise.apply(&dataset.labels, &mut substream(noise.seed, stream::NOISE))?;
    }
    let flipped = dataset
        .labels
        .train_nodes()
        .filter(|&i| dataset.labels.observed()[i] != dataset.labels.clean()[i])
        .count();
    log::info!(
        "{flipped} of {} train labels corrupted; writing to {}",
        dataset.labels.num_train(),
        cfg.out_dir.display()
    );
    write_dataset_dir(&cfg.out_dir, &dataset)?;
    Ok(dataset)
}

#[derive(Serialize)]
struct Tagged<'a, T: Serialize> {
    seed: u64,
    #[serde(flatten)]
    inner: &'a T,
}

#[derive(Serialize)]
struct TaggedRecord<'a> {
    seed: u64,
    epoch: usize,
    #[serde(flatten)]
    record: &'a CorrectionRecord,
}

/// Noise to apply in training: only for data that does not carry its own split.
fn training_noise(cfg: &ExperimentConfig, dataset: &Dataset) -> Option<crate::noise::NoiseSpec> {
    if dataset.labels.num_train() > 0 {
        if cfg.inject_noise {
            log::info!("dataset carries its own split and observed labels; noise.* is not applied");
        }
        return None;
    }
    cfg.noise_spec().cloned()
}

/// Writes the artifacts of one protocol result into `dir`.
pub fn write_protocol(dir: &Path, result: &ProtocolResult) -> Result<()> {
    create_dir(dir)?;
    let mut metrics = JsonLines::create(&dir.join(METRICS_FILE))?;
    let mut rounds = JsonLines::create(&dir.join(ROUNDS_FILE))?;
    let mut corrections = JsonLines::create(&dir.join(CORRECTIONS_FILE))?;
    let ckpt_dir = dir.join("checkpoints");
    create_dir(&ckpt_dir)?;
    for run in &result.runs {
        let seed = run.metrics.seed;
        for e in &run.metrics.epochs {
            metrics.write(&Tagged::<EpochMetrics> { seed, inner: e })?;
        }
        for r in &run.metrics.rounds {
            rounds.write(&Tagged::<RoundMetrics> { seed, inner: r })?;
        }
        for (epoch, records) in &run.corrections {
            for record in records {
                corrections.write(&TaggedRecord {
                    seed,
                    epoch: *epoch,
                    record,
                })?;
            }
        }
        checkpoint::save(&ckpt_dir.join(format!("seed-{seed}.ckpt")), &run.params.named())?;
    }
    metrics.finish()?;
    rounds.finish()?;
    corrections.finish()?;
    let summary = serde_json::to_string_pretty(&result.summary)?;
    write_text(&dir.join(SUMMARY_FILE), &(summary + "\n"))
}

/// Runs the multi-seed protocol and writes metrics, per-round statistics,
/// correction audits, checkpoints and `summary.json` to `out_dir`.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<Summary> {
    let dataset = load_dataset(cfg)?;
    let noise = training_noise(cfg, &dataset);
    let result = run_sweep(&dataset, noise.as_ref(), &cfg.protocol, &[cfg.protocol.train.correction])?
        .pop()
        .expect("one cell");
    create_dir(&cfg.out_dir)?;
    write_text(&cfg.out_dir.join(CONFIG_FILE), &cfg.to_text())?;
    write_protocol(&cfg.out_dir, &result)?;
    let s = &result.summary;
    log::info!(
        "{}: accuracy {:.4} ± {:.4} over {} runs",
        s.label,
        s.accuracy.mean,
        s.accuracy.std,
        s.num_runs
    );
    Ok(result.summary)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub gamma: f64,
    pub omega: f64,
    pub mean_acc: f64,
    pub std_acc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    /// Largest minus smallest mean accuracy over the grid.
    pub spread: f64,
    pub summaries: Vec<Summary>,
}

/// Stability reference for the spread: one accuracy point.
pub const SPREAD_REFERENCE: f64 = 0.01;

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("gamma,omega,mean_acc,std_acc\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.gamma, r.omega, r.mean_acc, r.std_acc));
    }
    out
}

/// Runs the protocol for every `(gamma, omega)` in the configured grid and
/// writes `sweep.csv` plus one summary per cell.
pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<SweepOutcome> {
    let dataset = load_dataset(cfg)?;
    let noise = training_noise(cfg, &dataset);
    let grid: Vec<CorrectionConfig> = cfg
        .sweep_gamma
        .iter()
        .flat_map(|&gamma| cfg.sweep_omega.iter().map(move |&omega| CorrectionConfig { gamma, omega }))
        .collect();
    let results = run_sweep(&dataset, noise.as_ref(), &cfg.protocol, &grid)?;

    let rows: Vec<SweepRow> = grid
        .iter()
        .zip(&results)
        .map(|(c, r)| SweepRow {
            gamma: c.gamma,
            omega: c.omega,
            mean_acc: r.summary.accuracy.mean,
            std_acc: r.summary.accuracy.std,
        })
        .collect();
    let max = rows.iter().map(|r| r.mean_acc).fold(f64::NEG_INFINITY, f64::max);
    let min = rows.iter().map(|r| r.mean_acc).fold(f64::INFINITY, f64::min);
    let spread = max - min;

    create_dir(&cfg.out_dir)?;
    write_text(&cfg.out_dir.join(CONFIG_FILE), &cfg.to_text())?;
    write_text(&cfg.out_dir.join(SWEEP_FILE), &sweep_csv(&rows))?;
    let summaries: Vec<Summary> = results.into_iter().map(|r| r.summary).collect();
    let cells: Vec<_> = grid
        .iter()
        .zip(&summaries)
        .map(|(c, s)| serde_json::json!({ "gamma": c.gamma, "omega": c.omega, "summary": s }))
        .collect();
    let doc = serde_json::json!({
        "spread": spread,
        "reference": SPREAD_REFERENCE,
        "within_reference": spread < SPREAD_REFERENCE,
        "cells": cells,
    });
    write_text(&cfg.out_dir.join("sweep_summary.json"), &(serde_json::to_string_pretty(&doc)? + "\n"))?;
    log::info!(
        "sweep over {} cells: mean accuracy spread {:.4} ({} the {:.2} reference)",
        rows.len(),
        spread,
        if spread < SPREAD_REFERENCE { "below" } else { "at or above" },
        SPREAD_REFERENCE
    );
    Ok(SweepOutcome { rows, spread, summaries })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalReport {
    pub nodes: usize,
    pub accuracy: f64,
}

/// Clean-label accuracy of a checkpoint on the test nodes of the configured
/// dataset, or on every labeled node when the dataset has no split.
pub fn cmd_eval(cfg: &ExperimentConfig, checkpoint_path: &Path) -> Result<EvalReport> {
    let dataset = load_dataset(cfg)?;
    let params = ModelParams::from_named(checkpoint::load(checkpoint_path)?)?;
    if params.input_dim() != dataset.attributes.dim() || params.num_classes() != dataset.num_classes() {
        return Err(Error::shape(
            "eval",
            format!(
                "checkpoint expects {} attributes and {} classes, dataset has {} and {}",
                params.input_dim(),
                params.num_classes(),
                dataset.attributes.dim(),
                dataset.num_classes()
            ),
        ));
    }
    let mask: Vec<bool> = if dataset.labels.test_mask().iter().any(|&m| m) {
        dataset.labels.test_mask().to_vec()
    } else {
        dataset.labels.clean().iter().map(Option::is_some).collect()
    };
    let accuracy = evaluate(&params, &dataset, &mask)?;
    let report = EvalReport {
        nodes: mask.iter().filter(|&&m| m).count(),
        accuracy,
    };
    create_dir(&cfg.out_dir)?;
    write_text(&cfg.out_dir.join("eval.json"), &(serde_json::to_string_pretty(&report)? + "\n"))?;
    log::info!("accuracy {:.4} on {} nodes", report.accuracy, report.nodes);
    Ok(report)
}
