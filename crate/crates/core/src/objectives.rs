//! Contrastive regularizer, supervised cross-entropy and their weighted sum.
//!
//! The contrastive term for node `i` is
//!
//! ```text
//! l(h1_i, h2_i) = -log( exp(sim(h1_i, h2_i) / tau) / sum_j exp(sim(h1_i, h2_j) / tau) )
//! ```
//!
//! with cosine `sim`, the positive pair included in the denominator and
//! cross-view negatives only. The regularizer averages both directions over
//! all nodes.

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Floor applied to a predicted probability before taking its log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Norm floor used when normalizing embeddings inside training.
pub const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub temperature: f64,
    /// Multiplier on the contrastive term; 0 turns it off.
    pub contrastive_weight: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            temperature: 0.5,
            contrastive_weight: 1.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::config("loss.tau", "temperature must be positive"));
        }
        if !(self.contrastive_weight >= 0.0 && self.contrastive_weight.is_finite()) {
            return Err(Error::config("loss.contrastive_weight", "weight must be non-negative"));
        }
        Ok(())
    }
}

/// Per-node contrastive terms `l(h1_i, h2_i)` and `l(h2_i, h1_i)` as two
/// `[N]` vectors. `h1`, `h2` are raw embeddings; rows are normalized here.
pub fn contrastive_terms_on(tape: &mut Tape, h1: Var, h2: Var, tau: f64) -> Result<(Var, Var)> {
    let (s1, s2) = (tape.value(h1).shape().to_vec(), tape.value(h2).shape().to_vec());
    if s1 != s2 || s1.len() != 2 {
        return Err(Error::shape("contrastive_loss", format!("{s1:?} vs {s2:?}")));
    }
    let n = s1[0];
    let z1 = tape.row_l2_normalize(h1, NORM_EPS)?;
    let z2 = tape.row_l2_normalize(h2, NORM_EPS)?;
    let z2t = tape.transpose(z2)?;
    let sim = tape.matmul(z1, z2t)?;
    let logits = tape.scale(sim, 1.0 / tau)?;
    let logits_t = tape.transpose(logits)?;
    let diag: Vec<(usize, usize)> = (0..n).map(|i| (i, i)).collect();

    let forward = tape.row_log_softmax(logits)?;
    let forward = tape.gather_entries(forward, &diag)?;
    let forward = tape.scale(forward, -1.0)?;
    let backward = tape.row_log_softmax(logits_t)?;
    let backward = tape.gather_entries(backward, &diag)?;
    let backward = tape.scale(backward, -1.0)?;
    Ok((forward, backward))
}

/// `L_CL = (1 / 2N) sum_i [l(h1_i, h2_i) + l(h2_i, h1_i)]` on the tape.
pub fn contrastive_loss_on(tape: &mut Tape, h1: Var, h2: Var, tau: f64) -> Result<Var> {
    let (forward, backward) = contrastive_terms_on(tape, h1, h2, tau)?;
    let both = tape.add(forward, backward)?;
    let mean = tape.mean(both)?;
    tape.scale(mean, 0.5)
}

fn check_embeddings(h1: &Tensor, h2: &Tensor, tau: f64) -> Result<()> {
    if !(tau > 0.0) {
        return Err(Error::Contract("temperature must be positive".into()));
    }
    if h1.shape() != h2.shape() || h1.rank() != 2 {
        return Err(Error::shape(
            "contrastive_loss",
            format!("{:?} vs {:?}", h1.shape(), h2.shape()),
        ));
    }
    for h in [h1, h2] {
        for r in 0..h.rows() {
            if h.row(r).iter().all(|&v| v == 0.0) {
                return Err(Error::Numeric {
                    op: "cosine similarity of a zero-norm embedding",
                });
            }
        }
    }
    Ok(())
}

/// `l(h1_i, h2_i)` for a single node.
pub fn ntxent_pair(i: usize, h1: &Tensor, h2: &Tensor, tau: f64) -> Result<f64> {
    check_embeddings(h1, h2, tau)?;
    if i >= h1.rows() {
        return Err(Error::Index {
            index: i,
            len: h1.rows(),
        });
    }
    let mut tape = Tape::new();
    let (a, b) = (tape.constant(h1.clone()), tape.constant(h2.clone()));
    let (forward, _) = contrastive_terms_on(&mut tape, a, b, tau)?;
    Ok(tape.value(forward).data()[i])
}

/// Symmetric contrastive loss between two embedding views.
pub fn contrastive_loss(h1: &Tensor, h2: &Tensor, tau: f64) -> Result<f64> {
    check_embeddings(h1, h2, tau)?;
    let mut tape = Tape::new();
    let (a, b) = (tape.constant(h1.clone()), tape.constant(h2.clone()));
    let loss = contrastive_loss_on(&mut tape, a, b, tau)?;
    Ok(tape.value(loss).item())
}

/// Masked node ids paired with their labels; errors when a masked node is
/// unlabeled or the mask selects nothing.
fn labeled_entries(labels: &[Option<usize>], mask: &[bool], classes: usize) -> Result<Vec<(usize, usize)>> {
    if labels.len() != mask.len() {
        return Err(Error::shape("supervised_loss", "labels and mask differ in length"));
    }
    let mut entries = Vec::new();
    for (i, (&m, &y)) in mask.iter().zip(labels).enumerate() {
        if !m {
            continue;
        }
        let y = y.ok_or_else(|| Error::Contract(format!("masked node {i} has no label")))?;
        if y >= classes {
            return Err(Error::Contract(format!("label {y} of node {i} outside {classes} classes")));
        }
        entries.push((i, y));
    }
    if entries.is_empty() {
        return Err(Error::Contract("supervised loss over an empty mask".into()));
    }
    Ok(entries)
}

/// `-(1/|V_L|) sum_{i in mask} log Q[i, y_i]` on the tape, plus the number of
/// probabilities that had to be floored at [`PROB_FLOOR`].
pub fn supervised_loss_on(
    tape: &mut Tape,
    q: Var,
    labels: &[Option<usize>],
    mask: &[bool],
) -> Result<(Var, usize)> {
    let qv = tape.value(q);
    if qv.rows() != labels.len() {
        return Err(Error::shape(
            "supervised_loss",
            format!("{} prediction rows for {} nodes", qv.rows(), labels.len()),
        ));
    }
    let entries = labeled_entries(labels, mask, qv.cols())?;
    let clamped = entries
        .iter()
        .filter(|&&(i, y)| qv.get(i, y) < PROB_FLOOR)
        .count();
    let picked = tape.gather_entries(q, &entries)?;
    let picked = tape.clamp_min(picked, PROB_FLOOR)?;
    let logp = tape.log(picked)?;
    let mean = tape.mean(logp)?;
    Ok((tape.scale(mean, -1.0)?, clamped))
}

/// Same cross-entropy computed from logits through a log-softmax. Values agree
/// with [`supervised_loss_on`] wherever no probability is below the floor;
/// below it the loss keeps growing and its gradient stays informative. The
/// count reports entries whose probability is below [`PROB_FLOOR`].
pub fn supervised_loss_from_logits_on(
    tape: &mut Tape,
    logits: Var,
    labels: &[Option<usize>],
    mask: &[bool],
) -> Result<(Var, usize)> {
    let lv = tape.value(logits);
    if lv.rows() != labels.len() {
        return Err(Error::shape(
            "supervised_loss",
            format!("{} logit rows for {} nodes", lv.rows(), labels.len()),
        ));
    }
    let entries = labeled_entries(labels, mask, lv.cols())?;
    let logp = tape.row_log_softmax(logits)?;
    let floor = PROB_FLOOR.ln();
    let below = entries
        .iter()
        .filter(|&&(i, y)| tape.value(logp).get(i, y) < floor)
        .count();
    let picked = tape.gather_entries(logp, &entries)?;
    let mean = tape.mean(picked)?;
    Ok((tape.scale(mean, -1.0)?, below))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupervisedLoss {
    pub value: f64,
    /// Entries whose probability was below [`PROB_FLOOR`].
    pub clamped: usize,
}

/// Cross-entropy of the working labels under the predicted distributions.
pub fn supervised_loss(q: &Tensor, labels: &[Option<usize>], mask: &[bool]) -> Result<SupervisedLoss> {
    let mut tape = Tape::new();
    let qv = tape.constant(q.clone());
    let (loss, clamped) = supervised_loss_on(&mut tape, qv, labels, mask)?;
    if clamped > 0 {
        log::warn!("{clamped} target probabilities floored at {PROB_FLOOR}");
    }
    Ok(SupervisedLoss {
        value: tape.value(loss).item(),
        clamped,
    })
}

/// `weight * L_CL + L_SUP`.
pub fn total_loss(contrastive: f64, supervised: f64, cfg: &LossConfig) -> f64 {
    cfg.contrastive_weight * contrastive + supervised
}

pub fn total_loss_on(tape: &mut Tape, contrastive: Option<Var>, supervised: Var, cfg: &LossConfig) -> Result<Var> {
    match contrastive {
        Some(cl) if cfg.contrastive_weight != 0.0 => {
            let weighted = tape.scale(cl, cfg.contrastive_weight)?;
            tape.add(weighted, supervised)
        }
        _ => Ok(supervised),
    }
}
