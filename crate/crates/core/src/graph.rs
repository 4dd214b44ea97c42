//! Graph, attribute and label storage.
//!
//! The graph is undirected and kept in CSR form: `offsets[i]..offsets[i + 1]`
//! indexes the sorted neighbor list of node `i` inside `neighbor_ids`. Every
//! undirected edge is stored in both directions, self-loops are never stored.

use std::sync::Arc;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    num_nodes: usize,
    offsets: Vec<usize>,
    neighbor_ids: Vec<usize>,
    num_undirected_edges: usize,
}

/// What `Graph::from_edges` had to clean up.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BuildReport {
    pub self_loops_dropped: usize,
    pub duplicates_merged: usize,
}

impl Graph {
    /// Graph with `num_nodes` isolated nodes.
    pub fn empty(num_nodes: usize) -> Result<Self> {
        if num_nodes == 0 {
            return Err(Error::Validation("graph must have at least one node".into()));
        }
        Ok(Self {
            num_nodes,
            offsets: vec![0; num_nodes + 1],
            neighbor_ids: Vec::new(),
            num_undirected_edges: 0,
        })
    }

    /// Builds a symmetric, deduplicated graph from an arbitrary edge list.
    /// Directed pairs are symmetrized; self-loops are dropped and counted.
    pub fn from_edges<I>(num_nodes: usize, edges: I) -> Result<(Self, BuildReport)>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        if num_nodes == 0 {
            return Err(Error::Validation("graph must have at least one node".into()));
        }
        let mut report = BuildReport::default();
        let mut pairs = Vec::new();
        for (u, v) in edges {
            for id in [u, v] {
                if id >= num_nodes {
                    return Err(Error::Validation(format!(
                        "node id {id} out of range for {num_nodes} nodes"
                    )));
                }
            }
            if u == v {
                report.self_loops_dropped += 1;
                continue;
            }
            pairs.push((u.min(v), u.max(v)));
        }
        let raw = pairs.len();
        pairs.sort_unstable();
        pairs.dedup();
        report.duplicates_merged = raw - pairs.len();

        let mut degree = vec![0usize; num_nodes];
        for &(u, v) in &pairs {
            degree[u] += 1;
            degree[v] += 1;
        }
        let mut offsets = Vec::with_capacity(num_nodes + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut cursor = offsets[..num_nodes].to_vec();
        let mut neighbor_ids = vec![0usize; offsets[num_nodes]];
        for &(u, v) in &pairs {
            neighbor_ids[cursor[u]] = v;
            cursor[u] += 1;
            neighbor_ids[cursor[v]] = u;
            cursor[v] += 1;
        }
        for i in 0..num_nodes {
            neighbor_ids[offsets[i]..offsets[i + 1]].sort_unstable();
        }
        let graph = Self {
            num_nodes,
            offsets,
            neighbor_ids,
            num_undirected_edges: pairs.len(),
        };
        Ok((graph, report))
    }

    /// Wraps raw CSR arrays after checking every structural invariant.
    pub fn from_csr(num_nodes: usize, offsets: Vec<usize>, neighbor_ids: Vec<usize>) -> Result<Self> {
        let graph = Self {
            num_nodes,
            num_undirected_edges: neighbor_ids.len() / 2,
            offsets,
            neighbor_ids,
        };
        graph.validate()?;
        Ok(graph)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_nodes;
        let bad = |msg: String| Err(Error::Validation(msg));
        if n == 0 {
            return bad("graph must have at least one node".into());
        }
        if self.offsets.len() != n + 1 || self.offsets[0] != 0 {
            return bad(format!("offsets must have length {} and start at 0", n + 1));
        }
        if self.offsets.windows(2).any(|w| w[0] > w[1]) {
            return bad("offsets must be non-decreasing".into());
        }
        if self.offsets[n] != self.neighbor_ids.len() {
            return bad("offsets[N] must equal the neighbor array length".into());
        }
        if !self.neighbor_ids.len().is_multiple_of(2) || self.num_undirected_edges * 2 != self.neighbor_ids.len() {
            return bad("directed entry count must be twice the undirected edge count".into());
        }
        for i in 0..n {
            let adj = self.adj(i);
            if adj.windows(2).any(|w| w[0] >= w[1]) {
                return bad(format!("neighbors of {i} are not strictly ascending"));
            }
            for &j in adj {
                if j >= n {
                    return bad(format!("neighbor id {j} of node {i} out of range"));
                }
                if j == i {
                    return bad(format!("self-loop stored on node {i}"));
                }
                if self.adj(j).binary_search(&i).is_err() {
                    return bad(format!("edge {i}->{j} has no reverse entry"));
                }
            }
        }
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.num_undirected_edges
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn neighbor_ids(&self) -> &[usize] {
        &self.neighbor_ids
    }

    /// Sorted neighbor list of `i`, or an index error.
    pub fn neighbors(&self, i: usize) -> Result<&[usize]> {
        if i >= self.num_nodes {
            return Err(Error::Index {
                index: i,
                len: self.num_nodes,
            });
        }
        Ok(self.adj(i))
    }

    /// Unchecked-range variant of [`Graph::neighbors`]; panics out of range.
    #[inline]
    pub fn adj(&self, i: usize) -> &[usize] {
        &self.neighbor_ids[self.offsets[i]..self.offsets[i + 1]]
    }

    #[inline]
    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    /// Each undirected edge once, as `(u, v)` with `u < v`, in CSR order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_nodes).flat_map(move |u| {
            self.adj(u)
                .iter()
                .copied()
                .filter(move |&v| v > u)
                .map(move |v| (u, v))
        })
    }

    /// Relabels node `i` as `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.num_nodes)?;
        let edges: Vec<_> = self.edges().map(|(u, v)| (perm[u], perm[v])).collect();
        Ok(Self::from_edges(self.num_nodes, edges)?.0)
    }
}

pub(crate) fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        return Err(Error::Validation(format!(
            "permutation has length {}, expected {n}",
            perm.len()
        )));
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || std::mem::replace(&mut seen[p], true) {
            return Err(Error::Validation("not a permutation".into()));
        }
    }
    Ok(())
}

/// Row-major `rows x dim` node attribute matrix; row `i` is `x_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeMatrix {
    rows: usize,
    dim: usize,
    values: Vec<f32>,
}

impl AttributeMatrix {
    pub fn new(rows: usize, dim: usize, values: Vec<f32>) -> Result<Self> {
        if rows == 0 || dim == 0 {
            return Err(Error::Validation("attribute matrix must be non-empty".into()));
        }
        if values.len() != rows * dim {
            return Err(Error::Validation(format!(
                "attribute buffer has {} values, expected {}x{}",
                values.len(),
                rows,
                dim
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite attribute at row {}, column {}",
                pos / dim,
                pos % dim
            )));
        }
        Ok(Self { rows, dim, values })
    }

    pub fn zeros(rows: usize, dim: usize) -> Result<Self> {
        Self::new(rows, dim, vec![0.0; rows * dim])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub(crate) fn zero_row(&mut self, i: usize) {
        self.values[i * self.dim..(i + 1) * self.dim].fill(0.0);
    }

    /// Row `i` of the result is row `j` of `self` where `perm[j] == i`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.rows)?;
        let mut values = vec![0.0; self.values.len()];
        for (src, &dst) in perm.iter().enumerate() {
            values[dst * self.dim..(dst + 1) * self.dim].copy_from_slice(self.row(src));
        }
        Ok(Self {
            rows: self.rows,
            dim: self.dim,
            values,
        })
    }
}

/// Per-node label state for one experiment.
///
/// `observed` is what the learner was given (possibly noisy), `working` is the
/// supervision actually used and starts equal to `observed`, `pseudo` holds the
/// model's predictions for unlabeled nodes and `clean` is ground truth that only
/// the evaluation harness may read.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelStore {
    num_classes: usize,
    pub(crate) observed: Vec<Option<usize>>,
    pub(crate) working: Vec<Option<usize>>,
    pub(crate) pseudo: Vec<Option<usize>>,
    pub(crate) train_mask: Vec<bool>,
    pub(crate) test_mask: Vec<bool>,
    pub(crate) clean: Vec<Option<usize>>,
}

impl LabelStore {
    /// Store with ground truth only; no node is in either split yet.
    pub fn from_clean(num_classes: usize, clean: Vec<Option<usize>>) -> Result<Self> {
        let n = clean.len();
        let store = Self {
            num_classes,
            observed: vec![None; n],
            working: vec![None; n],
            pseudo: vec![None; n],
            train_mask: vec![false; n],
            test_mask: vec![false; n],
            clean,
        };
        store.validate()?;
        Ok(store)
    }

    /// Store from explicit parts; `working` starts as a copy of `observed`.
    pub fn from_parts(
        num_classes: usize,
        observed: Vec<Option<usize>>,
        clean: Vec<Option<usize>>,
        train_mask: Vec<bool>,
        test_mask: Vec<bool>,
    ) -> Result<Self> {
        let n = observed.len();
        if clean.len() != n || train_mask.len() != n || test_mask.len() != n {
            return Err(Error::Validation("label arrays must all have length N".into()));
        }
        let store = Self {
            num_classes,
            working: observed.clone(),
            pseudo: vec![None; n],
            observed,
            train_mask,
            test_mask,
            clean,
        };
        store.validate()?;
        Ok(store)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Validation(msg));
        if self.num_classes == 0 {
            return bad("at least one class is required".into());
        }
        let n = self.len();
        for v in [&self.working, &self.pseudo, &self.clean] {
            if v.len() != n {
                return bad("label arrays must all have length N".into());
            }
        }
        if self.train_mask.len() != n || self.test_mask.len() != n {
            return bad("masks must have length N".into());
        }
        for i in 0..n {
            if self.train_mask[i] && self.test_mask[i] {
                return bad(format!("node {i} is in both train and test masks"));
            }
            if self.observed[i].is_some() != self.train_mask[i] {
                return bad(format!("node {i}: observed label must be defined exactly on train nodes"));
            }
            if self.working[i].is_some() != self.train_mask[i] {
                return bad(format!("node {i}: working label must be defined exactly on train nodes"));
            }
            for c in [self.observed[i], self.working[i], self.pseudo[i], self.clean[i]]
                .into_iter()
                .flatten()
            {
                if c >= self.num_classes {
                    return bad(format!("node {i}: class {c} outside [0, {})", self.num_classes));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.observed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observed.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn observed(&self) -> &[Option<usize>] {
        &self.observed
    }

    pub fn working(&self) -> &[Option<usize>] {
        &self.working
    }

    pub fn pseudo(&self) -> &[Option<usize>] {
        &self.pseudo
    }

    pub fn clean(&self) -> &[Option<usize>] {
        &self.clean
    }

    pub fn train_mask(&self) -> &[bool] {
        &self.train_mask
    }

    pub fn test_mask(&self) -> &[bool] {
        &self.test_mask
    }

    pub fn train_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.train_mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
    }

    pub fn num_train(&self) -> usize {
        self.train_mask.iter().filter(|&&m| m).count()
    }

    /// Puts node sets in place from `split`, copying clean labels into
    /// `observed`/`working` for the train nodes.
    pub fn apply_split(&mut self, split: &Split) -> Result<()> {
        if split.train.len() != self.len() || split.test.len() != self.len() {
            return Err(Error::Validation("split length differs from node count".into()));
        }
        for i in 0..self.len() {
            let label = if split.train[i] {
                Some(self.clean[i].ok_or_else(|| {
                    Error::Validation(format!("train node {i} has no label"))
                })?)
            } else {
                None
            };
            self.observed[i] = label;
            self.working[i] = label;
            self.pseudo[i] = None;
        }
        self.train_mask.clone_from(&split.train);
        self.test_mask.clone_from(&split.test);
        self.validate()
    }

    /// Replaces the observed label of a train node and resets its working label.
    pub(crate) fn set_observed(&mut self, i: usize, class: usize) {
        debug_assert!(self.train_mask[i]);
        self.observed[i] = Some(class);
        self.working[i] = Some(class);
    }

    /// Resets every working label to its observed value.
    pub fn reset_working(&mut self) {
        self.working.clone_from(&self.observed);
    }

    pub(crate) fn set_working(&mut self, i: usize, class: usize) {
        debug_assert!(self.train_mask[i]);
        self.working[i] = Some(class);
    }

    pub(crate) fn set_pseudo(&mut self, i: usize, class: Option<usize>) {
        self.pseudo[i] = class;
    }
}

/// Train/test node sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<bool>,
    pub test: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SplitPolicy {
    /// Quotas proportional to class sizes, at least one node per class.
    #[default]
    Stratified,
    /// A uniformly random subset of the labeled nodes.
    Random,
}

/// Number of train nodes for a label rate; `rate * n` is rounded up, with a
/// small tolerance so that e.g. `0.01 * 1000` gives 10 rather than 11.
pub fn train_count(n: usize, label_rate: f64) -> usize {
    let raw = label_rate * n as f64;
    let count = (raw - 1e-9 * raw.max(1.0)).ceil() as usize;
    count.clamp(1, n)
}

/// Draws a train split of `ceil(label_rate * N)` nodes; every other node is test.
///
/// Only nodes with a defined `clean` label are eligible for training. With the
/// stratified policy each class receives at least one train node, which can
/// push the total above the nominal count when there are more classes than
/// train slots.
pub fn make_split(
    clean: &[Option<usize>],
    num_classes: usize,
    label_rate: f64,
    policy: SplitPolicy,
    rng: &mut Rng,
) -> Result<Split> {
    let n = clean.len();
    if !(label_rate > 0.0 && label_rate < 1.0) {
        return Err(Error::Validation(format!(
            "label rate {label_rate} must lie strictly between 0 and 1"
        )));
    }
    let target = train_count(n, label_rate);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, c) in clean.iter().enumerate() {
        if let Some(c) = *c {
            if c >= num_classes {
                return Err(Error::Validation(format!("node {i}: class {c} out of range")));
            }
            members[c].push(i);
        }
    }
    let labeled: usize = members.iter().map(Vec::len).sum();
    if labeled == 0 {
        return Err(Error::Validation("no labeled nodes available for a split".into()));
    }

    let mut train = vec![false; n];
    match policy {
        SplitPolicy::Random => {
            let mut pool: Vec<usize> = members.concat();
            pool.sort_unstable();
            let take = target.min(pool.len());
            let (chosen, _) = pool.partial_shuffle(rng, take);
            for &i in chosen.iter() {
                train[i] = true;
            }
        }
        SplitPolicy::Stratified => {
            if let Some(c) = members.iter().position(Vec::is_empty) {
                return Err(Error::Validation(format!(
                    "class {c} has no members to stratify on"
                )));
            }
            let quotas = stratified_quotas(&members, target);
            for (class_members, quota) in members.iter_mut().zip(quotas) {
                let (chosen, _) = class_members.partial_shuffle(rng, quota);
                for &i in chosen.iter() {
                    train[i] = true;
                }
            }
        }
    }
    let test = train.iter().map(|&t| !t).collect();
    Ok(Split { train, test })
}

/// Largest-remainder allocation of `target` slots proportional to class size,
/// with a floor of one per class and a ceiling of the class size.
fn stratified_quotas(members: &[Vec<usize>], target: usize) -> Vec<usize> {
    let total: usize = members.iter().map(Vec::len).sum();
    let target = target.min(total);
    let exact: Vec<f64> = members
        .iter()
        .map(|m| target as f64 * m.len() as f64 / total as f64)
        .collect();
    let mut quotas: Vec<usize> = exact
        .iter()
        .zip(members)
        .map(|(&e, m)| (e.floor() as usize).clamp(1, m.len()))
        .collect();
    let mut assigned: usize = quotas.iter().sum();
    let mut order: Vec<usize> = (0..members.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    while assigned < target {
        let mut progressed = false;
        for &c in &order {
            if assigned == target {
                break;
            }
            if quotas[c] < members[c].len() {
                quotas[c] += 1;
                assigned += 1;
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
    quotas
}

/// Graph + attributes + labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub graph: Arc<Graph>,
    pub attributes: Arc<AttributeMatrix>,
    pub labels: LabelStore,
    /// Original class names when the label file used non-integer classes.
    pub class_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(graph: Graph, attributes: AttributeMatrix, labels: LabelStore) -> Result<Self> {
        let ds = Self {
            graph: Arc::new(graph),
            attributes: Arc::new(attributes),
            labels,
            class_names: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        self.graph.validate()?;
        let n = self.graph.num_nodes();
        if self.attributes.rows() != n {
            return Err(Error::Validation(format!(
                "attribute matrix has {} rows but the graph has {n} nodes",
                self.attributes.rows()
            )));
        }
        if self.labels.len() != n {
            return Err(Error::Validation(format!(
                "label store covers {} nodes but the graph has {n}",
                self.labels.len()
            )));
        }
        self.labels.validate()
    }

    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }

    pub fn num_classes(&self) -> usize {
        self.labels.num_classes()
    }
}
