//! Label corruption and planted-partition synthetic datasets.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::graph::{AttributeMatrix, Dataset, Graph, LabelStore};
use crate::rng::{stream, substream, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    Uniform,
    Pair,
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(NoiseKind::Uniform),
            "pair" => Ok(NoiseKind::Pair),
            other => Err(Error::config("noise.kind", format!("expected uniform|pair, got `{other}`"))),
        }
    }
}

impl std::fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NoiseKind::Uniform => "uniform",
            NoiseKind::Pair => "pair",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub rate: f64,
    /// Class -> partner class for pair noise; cyclic successor when `None`.
    pub pair_map: Option<Vec<usize>>,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            kind: NoiseKind::Uniform,
            rate: 0.2,
            pair_map: None,
            seed: 0,
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rate) {
            return Err(Error::config("noise.rate", "must lie in [0, 1]"));
        }
        if let Some(map) = &self.pair_map {
            validate_pair_map(map, map.len())?;
        }
        Ok(())
    }

    /// Applies this corruption using `rng`.
    pub fn apply(&self, labels: &LabelStore, rng: &mut Rng) -> Result<LabelStore> {
        self.validate()?;
        match self.kind {
            NoiseKind::Uniform => inject_uniform(labels, self.rate, rng),
            NoiseKind::Pair => inject_pair(labels, self.rate, self.pair_map.as_deref(), rng),
        }
    }
}

/// `c -> (c + 1) mod C`.
pub fn cyclic_pair_map(num_classes: usize) -> Vec<usize> {
    (0..num_classes).map(|c| (c + 1) % num_classes).collect()
}

/// A pair map must be a fixed-point-free permutation of `[0, C)`.
pub fn validate_pair_map(map: &[usize], num_classes: usize) -> Result<()> {
    if map.len() != num_classes {
        return Err(Error::Contract(format!(
            "pair map covers {} classes, expected {num_classes}",
            map.len()
        )));
    }
    let mut seen = vec![false; num_classes];
    for (c, &t) in map.iter().enumerate() {
        if t == c {
            return Err(Error::Contract(format!("pair map has fixed point at class {c}")));
        }
        if t >= num_classes || std::mem::replace(&mut seen[t], true) {
            return Err(Error::Contract("pair map is not a permutation".into()));
        }
    }
    Ok(())
}

fn clean_train_label(labels: &LabelStore, i: usize) -> Result<usize> {
    labels.clean()[i]
        .ok_or_else(|| Error::Contract(format!("train node {i} has no clean label to corrupt")))
}

/// Flips each train label with probability `p` to a uniformly drawn other class.
pub fn inject_uniform(labels: &LabelStore, p: f64, rng: &mut Rng) -> Result<LabelStore> {
    let classes = labels.num_classes();
    if classes < 2 {
        return Err(Error::Contract("uniform noise needs at least two classes".into()));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Contract(format!("noise rate {p} is not a probability")));
    }
    let mut out = labels.clone();
    let train: Vec<usize> = labels.train_nodes().collect();
    for i in train {
        let clean = clean_train_label(labels, i)?;
        let label = if rng.random::<f64>() < p {
            let other = rng.random_range(0..classes - 1);
            if other >= clean {
                other + 1
            } else {
                other
            }
        } else {
            clean
        };
        out.set_observed(i, label);
    }
    Ok(out)
}

/// Sets each train label to `pair_map[clean]` with probability `p`.
pub fn inject_pair(labels: &LabelStore, p: f64, pair_map: Option<&[usize]>, rng: &mut Rng) -> Result<LabelStore> {
    let classes = labels.num_classes();
    let default_map;
    let map = match pair_map {
        Some(m) => m,
        None => {
            if classes < 2 {
                return Err(Error::Contract("pair noise needs at least two classes".into()));
            }
            default_map = cyclic_pair_map(classes);
            &default_map
        }
    };
    validate_pair_map(map, classes)?;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Contract(format!("noise rate {p} is not a probability")));
    }
    let mut out = labels.clone();
    let train: Vec<usize> = labels.train_nodes().collect();
    for i in train {
        let clean = clean_train_label(labels, i)?;
        let label = if rng.random::<f64>() < p { map[clean] } else { clean };
        out.set_observed(i, label);
    }
    Ok(out)
}

/// Planted-partition generator parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub n: usize,
    pub num_classes: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub dim: usize,
    /// Length of each class-mean vector.
    pub attr_signal: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n: 400,
            num_classes: 4,
            p_in: 0.08,
            p_out: 0.01,
            dim: 4,
            attr_signal: 1.0,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::config("synth.n", "must be positive"));
        }
        if self.num_classes == 0 || self.num_classes > self.n {
            return Err(Error::config("synth.C", "must be in [1, n]"));
        }
        if self.dim < self.num_classes {
            return Err(Error::config("synth.d", "must be at least the number of classes"));
        }
        for (key, p) in [("synth.p_in", self.p_in), ("synth.p_out", self.p_out)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(key, "must lie in [0, 1]"));
            }
        }
        if !(self.attr_signal >= 0.0 && self.attr_signal.is_finite()) {
            return Err(Error::config("synth.signal", "must be finite and non-negative"));
        }
        Ok(())
    }

    /// Class of node `i`: contiguous, near-equal blocks.
    pub fn block_of(&self, i: usize) -> usize {
        i * self.num_classes / self.n
    }
}

/// Stochastic block model graph with Gaussian class-conditional attributes.
///
/// Class `c` has mean `attr_signal * e_c` (a standard basis vector) and every
/// node adds independent unit Gaussian noise. Clean labels are the block ids;
/// no node is in the train or test split yet.
pub fn gen_synthetic(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = substream(spec.seed, stream::SYNTH);
    let blocks: Vec<usize> = (0..spec.n).map(|i| spec.block_of(i)).collect();

    let mut edges = Vec::new();
    for u in 0..spec.n {
        for v in u + 1..spec.n {
            let p = if blocks[u] == blocks[v] { spec.p_in } else { spec.p_out };
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let graph = Graph::from_edges(spec.n, edges)?.0;

    let mut values = Vec::with_capacity(spec.n * spec.dim);
    for &c in &blocks {
        for k in 0..spec.dim {
            let noise: f64 = StandardNormal.sample(&mut rng);
            let mean = if k == c { spec.attr_signal } else { 0.0 };
            values.push((mean + noise) as f32);
        }
    }
    let attributes = AttributeMatrix::new(spec.n, spec.dim, values)?;
    let labels = LabelStore::from_clean(spec.num_classes, blocks.into_iter().map(Some).collect())?;
    Dataset::new(graph, attributes, labels)
}
