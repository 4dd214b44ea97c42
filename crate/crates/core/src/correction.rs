//! Neighborhood-based detection and relabeling of noisy train labels.
//!
//! For each train node `i`:
//!
//! * `c_i` is the most common effective label among its neighbors, where a
//!   neighbor's effective label is its working label if it is a train node and
//!   the model's argmax prediction otherwise;
//! * `a_i` is the fraction of neighbors carrying `c_i` whose embedding has
//!   cosine similarity above `gamma` with node `i`;
//! * the working label becomes `c_i` when it differs from `c_i` and `a_i > omega`.
//!
//! Ties are broken towards the smallest class id everywhere.

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::encoder::l2_normalize_rows;
use crate::error::{Error, Result};
use crate::graph::{Graph, LabelStore};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrectionConfig {
    /// Cosine-similarity threshold.
    pub gamma: f64,
    /// Consistency threshold; relabeling needs a strictly larger score.
    pub omega: f64,
}

impl Default for CorrectionConfig {
    fn default() -> Self {
        Self {
            gamma: 0.8,
            omega: 0.8,
        }
    }
}

impl CorrectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > -1.0 && self.gamma <= 1.0) {
            return Err(Error::config("corr.gamma", "must lie in (-1, 1]"));
        }
        if !(0.0..=1.0).contains(&self.omega) {
            return Err(Error::config("corr.omega", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Kept,
    Relabeled,
    Skipped,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectionRecord {
    pub node: usize,
    #[serde(rename = "c_i")]
    pub majority: Option<usize>,
    #[serde(rename = "a_i")]
    pub score: Option<f64>,
    pub verdict: Verdict,
    #[serde(rename = "old")]
    pub old_label: usize,
    #[serde(rename = "new")]
    pub new_label: usize,
}

/// Index of the largest entry; ties go to the smallest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (c, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = c;
        }
    }
    best
}

/// Effective label of every node: working label on train nodes, argmax
/// prediction elsewhere. Records the predictions as pseudo-labels.
pub fn effective_labels(labels: &mut LabelStore, q: &Tensor) -> Result<Vec<usize>> {
    if q.rows() != labels.len() || q.cols() != labels.num_classes() {
        return Err(Error::shape(
            "effective_labels",
            format!(
                "{:?} predictions for {} nodes and {} classes",
                q.shape(),
                labels.len(),
                labels.num_classes()
            ),
        ));
    }
    let mut ystar = Vec::with_capacity(labels.len());
    for i in 0..labels.len() {
        if labels.train_mask()[i] {
            labels.set_pseudo(i, None);
            ystar.push(labels.working()[i].expect("train node has a working label"));
        } else {
            let c = argmax(q.row(i));
            labels.set_pseudo(i, Some(c));
            ystar.push(c);
        }
    }
    Ok(ystar)
}

/// Most frequent effective label among the neighbors of `i`, or `None` for
/// an isolated node.
pub fn majority_label(i: usize, g: &Graph, ystar: &[usize]) -> Option<usize> {
    let neighbors = g.adj(i);
    if neighbors.is_empty() {
        return None;
    }
    let classes = neighbors.iter().map(|&j| ystar[j]).max().unwrap() + 1;
    let mut counts = vec![0usize; classes];
    for &j in neighbors {
        counts[ystar[j]] += 1;
    }
    let mut best = 0;
    for c in 1..classes {
        if counts[c] > counts[best] {
            best = c;
        }
    }
    Some(best)
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Fraction of `majority`-labeled neighbors whose (row-normalized) embedding
/// has cosine similarity above `gamma` with node `i`.
pub fn similarity_consistency(
    i: usize,
    majority: Option<usize>,
    g: &Graph,
    h_normalized: &Tensor,
    ystar: &[usize],
    gamma: f64,
) -> Result<f64> {
    let c = majority.ok_or_else(|| {
        Error::Contract(format!("node {i} has no majority label; it must be skipped"))
    })?;
    let hi = h_normalized.row(i);
    let mut carriers = 0usize;
    let mut similar = 0usize;
    for &j in g.adj(i) {
        if ystar[j] != c {
            continue;
        }
        carriers += 1;
        if dot(hi, h_normalized.row(j)) > gamma {
            similar += 1;
        }
    }
    if carriers == 0 {
        return Err(Error::Contract(format!(
            "class {c} is not carried by any neighbor of node {i}"
        )));
    }
    Ok(similar as f64 / carriers as f64)
}

/// One correction round over every train node.
///
/// `h` are clean-graph embeddings (normalized here) and `q` the matching
/// predictions. Only working labels change; all decisions are made against the
/// state at entry and committed together.
pub fn correct_labels(
    labels: &LabelStore,
    g: &Graph,
    h: &Tensor,
    q: &Tensor,
    cfg: &CorrectionConfig,
) -> Result<(LabelStore, Vec<CorrectionRecord>)> {
    cfg.validate()?;
    if h.rows() != g.num_nodes() || labels.len() != g.num_nodes() {
        return Err(Error::shape(
            "correct_labels",
            format!("{} embedding rows, {} labels, {} nodes", h.rows(), labels.len(), g.num_nodes()),
        ));
    }
    let mut out = labels.clone();
    let ystar = effective_labels(&mut out, q)?;
    let h = l2_normalize_rows(h);

    let mut records = Vec::with_capacity(labels.num_train());
    for i in labels.train_nodes() {
        let old = labels.working()[i].expect("train node has a working label");
        let majority = majority_label(i, g, &ystar);
        let mut record = CorrectionRecord {
            node: i,
            majority,
            score: None,
            verdict: Verdict::Skipped,
            old_label: old,
            new_label: old,
        };
        if let Some(c) = majority {
            let score = similarity_consistency(i, majority, g, &h, &ystar, cfg.gamma)?;
            record.score = Some(score);
            record.verdict = if c != old && score > cfg.omega {
                record.new_label = c;
                Verdict::Relabeled
            } else {
                Verdict::Kept
            };
        }
        records.push(record);
    }
    for r in records.iter().filter(|r| r.verdict == Verdict::Relabeled) {
        out.set_working(r.node, r.new_label);
    }
    Ok((out, records))
}
