//! Full-batch training loop, evaluation and the multi-seed protocol.
//!
//! Each epoch draws two augmented views, encodes both for the contrastive
//! term, encodes the clean graph for the supervised term on working labels,
//! and takes one optimizer step. With correction enabled a round runs after
//! the optimizer step of epoch `warmup` and then every `correction_period`
//! epochs, using a fresh clean-graph forward pass.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{make_views, AugmentConfig};
use crate::autodiff::{Tape, Tensor};
use crate::correction::{argmax, correct_labels, CorrectionConfig, CorrectionRecord, Verdict};
use crate::encoder::{attributes_tensor, encode, encode_on, logits_on, predict, EncoderConfig, ModelParams, ParamVars};
use crate::error::{Error, Result};
use crate::graph::{make_split, Dataset, LabelStore, SplitPolicy};
use crate::noise::NoiseSpec;
use crate::objectives::{contrastive_loss_on, supervised_loss_from_logits_on, total_loss_on, LossConfig};
use crate::optim::{Optimizer, OptimizerKind};
use crate::rng::{child_seed, stream, substream};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub warmup: usize,
    pub correction_period: usize,
    pub learning_rate: f64,
    /// L2 penalty added to every gradient.
    pub weight_decay: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub use_contrastive: bool,
    pub use_correction: bool,
    pub encoder: EncoderConfig,
    /// Augmentation rates; the seed field is replaced per epoch.
    pub augment: AugmentConfig,
    pub loss: LossConfig,
    pub correction: CorrectionConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            warmup: 100,
            correction_period: 20,
            learning_rate: 0.01,
            weight_decay: 5e-4,
            optimizer: OptimizerKind::default(),
            seed: 0,
            use_contrastive: true,
            use_correction: true,
            encoder: EncoderConfig::default(),
            augment: AugmentConfig::default(),
            loss: LossConfig::default(),
            correction: CorrectionConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("train.epochs", "must be positive"));
        }
        if self.warmup == 0 || self.warmup > self.epochs {
            return Err(Error::config("train.warmup", "must lie in [1, epochs]"));
        }
        if self.correction_period == 0 {
            return Err(Error::config("train.period", "must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("train.lr", "must be positive"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::config("train.weight_decay", "must be non-negative"));
        }
        self.encoder.validate()?;
        self.augment
            .validate()
            .map_err(|e| Error::config("aug", e.to_string()))?;
        self.loss.validate()?;
        self.correction.validate()
    }

    /// Whether a correction round runs after `epoch` (1-based).
    pub fn is_correction_epoch(&self, epoch: usize) -> bool {
        self.use_correction
            && epoch >= self.warmup
            && epoch <= self.epochs
            && (epoch - self.warmup).is_multiple_of(self.correction_period)
    }

    /// Short name of the ablation variant.
    pub fn variant_label(&self) -> &'static str {
        match (self.use_contrastive, self.use_correction) {
            (true, true) => "full",
            (false, true) => "no-contr",
            (true, false) => "no-corr",
            (false, false) => "baseline",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub total_loss: f64,
    pub contrastive_loss: Option<f64>,
    pub supervised_loss: f64,
    /// Agreement with working labels on train nodes.
    pub train_accuracy: f64,
    /// Agreement with clean labels on test nodes.
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub epoch: usize,
    pub relabeled: usize,
    /// Relabels whose new label equals the clean label.
    pub correct_relabels: usize,
    /// Train nodes whose working label disagreed with the clean label before the round.
    pub noisy_before: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub epochs: Vec<EpochMetrics>,
    pub rounds: Vec<RoundMetrics>,
    pub final_test_accuracy: f64,
    /// Correct relabels over all relabels, across every round.
    pub relabel_precision: Option<f64>,
    /// Fraction of initially noisy train labels whose final working label is clean.
    pub relabel_recall: Option<f64>,
    /// Train labels that are wrong at the start of training.
    pub initial_noisy: usize,
    /// Train labels still wrong at the end of training.
    pub final_noisy: usize,
}

/// Everything a training run produces.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub metrics: RunMetrics,
    /// Label state after the last correction round.
    pub labels: LabelStore,
    /// Audit records per correction round, keyed by epoch.
    pub corrections: Vec<(usize, Vec<CorrectionRecord>)>,
}

fn mismatches(labels: &LabelStore) -> usize {
    labels
        .train_nodes()
        .filter(|&i| labels.clean()[i].is_some_and(|c| labels.working()[i] != Some(c)))
        .count()
}

fn accuracy_against(q: &Tensor, targets: &[Option<usize>], mask: &[bool]) -> f64 {
    let mut hits = 0usize;
    let mut total = 0usize;
    for (i, &m) in mask.iter().enumerate() {
        if let (true, Some(y)) = (m, targets[i]) {
            total += 1;
            hits += usize::from(argmax(q.row(i)) == y);
        }
    }
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

/// Clean-label accuracy of the argmax prediction over `mask`.
pub fn evaluate(params: &ModelParams, dataset: &Dataset, mask: &[bool]) -> Result<f64> {
    if mask.len() != dataset.num_nodes() {
        return Err(Error::shape("evaluate", "mask length differs from node count"));
    }
    let nodes: Vec<usize> = mask.iter().enumerate().filter_map(|(i, &m)| m.then_some(i)).collect();
    if nodes.is_empty() {
        return Err(Error::Contract("evaluation mask is empty".into()));
    }
    let clean = dataset.labels.clean();
    if let Some(&i) = nodes.iter().find(|&&i| clean[i].is_none()) {
        return Err(Error::Contract(format!("node {i} has no clean label to evaluate against")));
    }
    let h = encode(&dataset.graph, &dataset.attributes, params)?;
    let q = predict(&h, params)?;
    Ok(accuracy_against(&q, clean, mask))
}

/// Trains from parameters initialized with `cfg.seed`.
pub fn train(dataset: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut init_rng = substream(cfg.seed, stream::INIT);
    let params = ModelParams::init(
        &cfg.encoder,
        dataset.attributes.dim(),
        dataset.num_classes(),
        &mut init_rng,
    )?;
    train_from(dataset, cfg, params)
}

/// Trains starting from the given parameters.
pub fn train_from(dataset: &Dataset, cfg: &TrainConfig, params: ModelParams) -> Result<TrainOutcome> {
    let mut out = train_grid(dataset, cfg, params, &[cfg.correction])?;
    Ok(out.pop().expect("one outcome per grid cell"))
}

/// Trains once per correction setting in `grid`, sharing work between cells.
///
/// Cells follow one trajectory until a correction round produces different
/// working labels for them, at which point the trajectory forks. Every
/// outcome is identical to a separate `train_from` run with that setting.
pub fn train_grid(
    dataset: &Dataset,
    cfg: &TrainConfig,
    params: ModelParams,
    grid: &[CorrectionConfig],
) -> Result<Vec<TrainOutcome>> {
    cfg.validate()?;
    dataset.validate()?;
    for c in grid {
        c.validate()?;
    }
    let session = Session::new(dataset, cfg)?;
    let mut labels = dataset.labels.clone();
    labels.reset_working();
    let initial_noisy = mismatches(&labels);
    let mut branches = vec![Branch {
        params,
        optimizer: Optimizer::new(cfg.optimizer, cfg.learning_rate).with_weight_decay(cfg.weight_decay),
        labels,
        epochs: Vec::with_capacity(cfg.epochs),
        cells: (0..grid.len()).collect(),
    }];
    let mut audits: Vec<Audit> = vec![Audit::default(); grid.len()];

    for epoch in 1..=cfg.epochs {
        for branch in &mut branches {
            let metrics = session.epoch(branch, epoch).map_err(|e| Error::Training {
                epoch,
                source: Box::new(e),
            })?;
            branch.epochs.push(metrics);
        }
        if !cfg.is_correction_epoch(epoch) {
            continue;
        }
        let mut forked = Vec::with_capacity(branches.len());
        for branch in branches {
            let h = encode(&session.graph, &dataset.attributes, &branch.params)?;
            let q = predict(&h, &branch.params)?;
            let noisy_before = mismatches(&branch.labels);
            let mut groups: Vec<(LabelStore, Vec<usize>)> = Vec::new();
            for &cell in &branch.cells {
                let (next, records) = correct_labels(&branch.labels, &session.graph, &h, &q, &grid[cell])?;
                let round = round_metrics(epoch, &branch.labels, &records, noisy_before);
                log::debug!(
                    "epoch {epoch}: relabeled {} ({} correct), {} noisy before",
                    round.relabeled,
                    round.correct_relabels,
                    noisy_before
                );
                audits[cell].rounds.push(round);
                audits[cell].corrections.push((epoch, records));
                match groups.iter_mut().find(|(l, _)| l.working() == next.working()) {
                    Some((_, cells)) => cells.push(cell),
                    None => groups.push((next, vec![cell])),
                }
            }
            let last = groups.len() - 1;
            let mut branch = Some(branch);
            for (k, (next, cells)) in groups.into_iter().enumerate() {
                let mut b = if k == last {
                    branch.take().expect("moved once")
                } else {
                    branch.as_ref().expect("still owned").clone()
                };
                b.labels = next;
                b.cells = cells;
                forked.push(b);
            }
        }
        branches = forked;
    }

    let mut outcomes: Vec<Option<TrainOutcome>> = vec![None; grid.len()];
    for branch in branches {
        let final_test_accuracy = if session.test_mask.iter().any(|&m| m) {
            evaluate(&branch.params, dataset, &session.test_mask)?
        } else {
            0.0
        };
        for &cell in &branch.cells {
            let audit = std::mem::take(&mut audits[cell]);
            outcomes[cell] = Some(finish(cfg.seed, &branch, audit, final_test_accuracy, initial_noisy));
        }
    }
    Ok(outcomes.into_iter().map(|o| o.expect("every cell finished")).collect())
}

/// Per-run constants shared by every branch.
struct Session<'a> {
    dataset: &'a Dataset,
    cfg: &'a TrainConfig,
    graph: Arc<crate::graph::Graph>,
    x: Tensor,
    train_mask: Vec<bool>,
    test_mask: Vec<bool>,
}

/// One training trajectory and the grid cells that follow it.
#[derive(Clone)]
struct Branch {
    params: ModelParams,
    optimizer: Optimizer,
    labels: LabelStore,
    epochs: Vec<EpochMetrics>,
    cells: Vec<usize>,
}

#[derive(Clone, Default)]
struct Audit {
    rounds: Vec<RoundMetrics>,
    corrections: Vec<(usize, Vec<CorrectionRecord>)>,
}

impl<'a> Session<'a> {
    fn new(dataset: &'a Dataset, cfg: &'a TrainConfig) -> Result<Self> {
        let train_mask = dataset.labels.train_mask().to_vec();
        if !train_mask.iter().any(|&m| m) {
            return Err(Error::Contract("train mask is empty".into()));
        }
        Ok(Self {
            dataset,
            cfg,
            graph: Arc::clone(&dataset.graph),
            x: attributes_tensor(&dataset.attributes),
            train_mask,
            test_mask: dataset.labels.test_mask().to_vec(),
        })
    }

    fn epoch(&self, branch: &mut Branch, epoch: usize) -> Result<EpochMetrics> {
        let cfg = self.cfg;
        let mut tape = Tape::new();
        let vars = ParamVars::register(&mut tape, &branch.params);

        let contrastive = if cfg.use_contrastive {
            let aug = AugmentConfig {
                seed: child_seed(cfg.seed, stream::AUGMENT, epoch as u64),
                ..cfg.augment
            };
            let ((g1, x1), (g2, x2)) = make_views(&self.graph, &self.dataset.attributes, &aug)?;
            let (g1, g2) = (Arc::new(g1), Arc::new(g2));
            let x1 = tape.constant(attributes_tensor(&x1));
            let x2 = tape.constant(attributes_tensor(&x2));
            let h1 = encode_on(&mut tape, &g1, x1, &vars)?;
            let h2 = encode_on(&mut tape, &g2, x2, &vars)?;
            Some(contrastive_loss_on(&mut tape, h1, h2, cfg.loss.temperature)?)
        } else {
            None
        };

        let xv = tape.constant(self.x.clone());
        let h = encode_on(&mut tape, &self.graph, xv, &vars)?;
        let logits = logits_on(&mut tape, h, &vars)?;
        let (sup, _) = supervised_loss_from_logits_on(&mut tape, logits, branch.labels.working(), &self.train_mask)?;
        let q = tape.row_softmax(logits)?;
        let total = total_loss_on(&mut tape, contrastive, sup, &cfg.loss)?;
        tape.backward(total)?;

        let qv = tape.value(q);
        let metrics = EpochMetrics {
            epoch,
            total_loss: tape.value(total).item(),
            contrastive_loss: contrastive.map(|c| tape.value(c).item()),
            supervised_loss: tape.value(sup).item(),
            train_accuracy: accuracy_against(qv, branch.labels.working(), &self.train_mask),
            test_accuracy: accuracy_against(qv, branch.labels.clean(), &self.test_mask),
        };
        if !metrics.total_loss.is_finite() {
            return Err(Error::Numeric { op: "total loss" });
        }
        let grads: Vec<Option<&Tensor>> = vars.vars().into_iter().map(|v| tape.grad(v)).collect();
        branch.optimizer.step(branch.params.tensors_mut(), &grads)?;
        Ok(metrics)
    }
}

fn round_metrics(epoch: usize, before: &LabelStore, records: &[CorrectionRecord], noisy_before: usize) -> RoundMetrics {
    let relabeled: Vec<&CorrectionRecord> = records
        .iter()
        .filter(|r| r.verdict == Verdict::Relabeled)
        .collect();
    let correct = relabeled
        .iter()
        .filter(|r| before.clean()[r.node] == Some(r.new_label))
        .count();
    RoundMetrics {
        epoch,
        relabeled: relabeled.len(),
        correct_relabels: correct,
        noisy_before,
        precision: (!relabeled.is_empty()).then(|| correct as f64 / relabeled.len() as f64),
        recall: (noisy_before > 0).then(|| correct as f64 / noisy_before as f64),
    }
}

fn finish(seed: u64, branch: &Branch, audit: Audit, final_test_accuracy: f64, initial_noisy: usize) -> TrainOutcome {
    let labels = &branch.labels;
    let total_relabels: usize = audit.rounds.iter().map(|r| r.relabeled).sum();
    let total_correct: usize = audit.rounds.iter().map(|r| r.correct_relabels).sum();
    let initially_noisy: Vec<usize> = labels
        .train_nodes()
        .filter(|&i| labels.clean()[i].is_some_and(|c| labels.observed()[i] != Some(c)))
        .collect();
    let recovered = initially_noisy
        .iter()
        .filter(|&&i| labels.working()[i] == labels.clean()[i])
        .count();
    let metrics = RunMetrics {
        seed,
        epochs: branch.epochs.clone(),
        rounds: audit.rounds,
        final_test_accuracy,
        relabel_precision: (total_relabels > 0).then(|| total_correct as f64 / total_relabels as f64),
        relabel_recall: (!initially_noisy.is_empty()).then(|| recovered as f64 / initially_noisy.len() as f64),
        initial_noisy,
        final_noisy: mismatches(labels),
    };
    TrainOutcome {
        params: branch.params.clone(),
        metrics,
        labels: labels.clone(),
        corrections: audit.corrections,
    }
}

/// Settings of the repeated-runs protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    pub num_runs: usize,
    /// Fraction of nodes used for training when the dataset has no split yet.
    pub label_rate: f64,
    pub split_policy: SplitPolicy,
    pub train: TrainConfig,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            num_runs: 5,
            label_rate: 0.01,
            split_policy: SplitPolicy::Stratified,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub count: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Self {
            mean,
            std: var.sqrt(),
            count: values.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub label: String,
    pub num_runs: usize,
    pub seeds: Vec<u64>,
    pub accuracies: Vec<f64>,
    pub accuracy: Stat,
    /// Over runs that relabeled at least one node.
    pub relabel_precision: Option<Stat>,
    pub relabel_recall: Option<Stat>,
}

#[derive(Debug, Clone)]
pub struct ProtocolResult {
    pub summary: Summary,
    pub runs: Vec<TrainOutcome>,
}

/// Prepares the labels of run `seed`: a fresh split (unless the dataset
/// already carries one) and fresh noise.
pub fn prepare_run(
    dataset: &Dataset,
    noise: Option<&NoiseSpec>,
    cfg: &ProtocolConfig,
    seed: u64,
) -> Result<Dataset> {
    let mut run = dataset.clone();
    if run.labels.num_train() == 0 {
        let split = make_split(
            run.labels.clean(),
            run.num_classes(),
            cfg.label_rate,
            cfg.split_policy,
            &mut substream(seed, stream::SPLIT),
        )?;
        run.labels.apply_split(&split)?;
    }
    if let Some(noise) = noise {
        run.labels = noise.apply(&run.labels, &mut substream(seed, stream::NOISE))?;
    }
    Ok(run)
}

/// Runs `num_runs` seeds (`train.seed + r`), each with its own split, noise
/// and initialization, and summarizes final test accuracy.
pub fn run_protocol(dataset: &Dataset, noise: Option<&NoiseSpec>, cfg: &ProtocolConfig) -> Result<ProtocolResult> {
    let mut cells = run_sweep(dataset, noise, cfg, &[cfg.train.correction])?;
    Ok(cells.pop().expect("one result per cell"))
}

/// Seeds used by the protocol.
pub fn protocol_seeds(cfg: &ProtocolConfig) -> Vec<u64> {
    (0..cfg.num_runs as u64).map(|r| cfg.train.seed + r).collect()
}

/// The protocol once per correction setting in `grid`; each run shares its
/// split, noise, initialization and common training prefix across cells.
pub fn run_sweep(
    dataset: &Dataset,
    noise: Option<&NoiseSpec>,
    cfg: &ProtocolConfig,
    grid: &[CorrectionConfig],
) -> Result<Vec<ProtocolResult>> {
    if cfg.num_runs == 0 {
        return Err(Error::config("train.runs", "at least one run is required"));
    }
    if grid.is_empty() {
        return Err(Error::config("sweep", "grid is empty"));
    }
    cfg.train.validate()?;
    let seeds = protocol_seeds(cfg);
    let per_seed = seeds
        .par_iter()
        .map(|&seed| {
            let run = prepare_run(dataset, noise, cfg, seed)?;
            let train_cfg = TrainConfig {
                seed,
                ..cfg.train.clone()
            };
            let mut init_rng = substream(seed, stream::INIT);
            let params = ModelParams::init(&train_cfg.encoder, run.attributes.dim(), run.num_classes(), &mut init_rng)?;
            train_grid(&run, &train_cfg, params, grid)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut cells: Vec<Vec<TrainOutcome>> = (0..grid.len()).map(|_| Vec::with_capacity(seeds.len())).collect();
    for outcomes in per_seed {
        for (cell, outcome) in outcomes.into_iter().enumerate() {
            cells[cell].push(outcome);
        }
    }
    Ok(cells
        .into_iter()
        .map(|runs| ProtocolResult {
            summary: summarize(cfg.train.variant_label(), &seeds, &runs),
            runs,
        })
        .collect())
}

fn summarize(label: &str, seeds: &[u64], runs: &[TrainOutcome]) -> Summary {
    let accuracies: Vec<f64> = runs.iter().map(|r| r.metrics.final_test_accuracy).collect();
    let precisions: Vec<f64> = runs.iter().filter_map(|r| r.metrics.relabel_precision).collect();
    let recalls: Vec<f64> = runs.iter().filter_map(|r| r.metrics.relabel_recall).collect();
    Summary {
        label: label.to_string(),
        num_runs: runs.len(),
        seeds: seeds.to_vec(),
        accuracy: Stat::of(&accuracies).expect("at least one run"),
        accuracies,
        relabel_precision: Stat::of(&precisions),
        relabel_recall: Stat::of(&recalls),
    }
}
