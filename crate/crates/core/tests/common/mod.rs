//! Independent reference implementations shared by the integration tests.
//! They use plain nested loops over `Vec`s and none of the crate's kernels.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| (0..cols).map(|_| rng.random_range(-scale..scale)).collect())
        .collect()
}

/// Undirected G(n, p) edge list with `u < v`.
pub fn random_edges(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    edges
}

/// Symmetric 0/1 adjacency from arbitrary (possibly duplicated or looped) pairs.
pub fn dense_adjacency(n: usize, pairs: &[(usize, usize)]) -> Vec<Vec<bool>> {
    let mut a = vec![vec![false; n]; n];
    for &(u, v) in pairs {
        if u != v {
            a[u][v] = true;
            a[v][u] = true;
        }
    }
    a
}

pub fn neighbor_lists(adj: &[Vec<bool>]) -> Vec<Vec<usize>> {
    adj.iter()
        .map(|row| row.iter().enumerate().filter(|(_, &b)| b).map(|(j, _)| j).collect())
        .collect()
}

fn normalize(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (a, b) = (normalize(a), normalize(b));
    let mut s = 0.0;
    for k in 0..a.len() {
        s += a[k] * b[k];
    }
    s
}

/// `-log(exp(sim(a_i,b_i)/t) / sum_j exp(sim(a_i,b_j)/t))`
pub fn ntxent_term(a: &[Vec<f64>], b: &[Vec<f64>], i: usize, tau: f64) -> f64 {
    let num = (cosine(&a[i], &b[i]) / tau).exp();
    let mut den = 0.0;
    for j in 0..b.len() {
        den += (cosine(&a[i], &b[j]) / tau).exp();
    }
    -(num / den).ln()
}

/// Symmetrized mean of the per-node terms in both directions.
pub fn contrastive_oracle(h1: &[Vec<f64>], h2: &[Vec<f64>], tau: f64) -> f64 {
    let n = h1.len();
    let mut total = 0.0;
    for i in 0..n {
        total += 0.5 * (ntxent_term(h1, h2, i, tau) + ntxent_term(h2, h1, i, tau));
    }
    total / n as f64
}

/// Straight-line correction round. Returns the new working labels and, for
/// each node in `train` order, `(c_i, a_i)`.
pub struct CorrectionOracle {
    pub working: Vec<Option<usize>>,
    pub stats: Vec<(usize, Option<usize>, Option<f64>)>,
}

pub fn correction_oracle(
    neighbors: &[Vec<usize>],
    train: &[bool],
    working: &[Option<usize>],
    q: &[Vec<f64>],
    h: &[Vec<f64>],
    num_classes: usize,
    gamma: f64,
    omega: f64,
) -> CorrectionOracle {
    let n = neighbors.len();
    let mut ystar = vec![0usize; n];
    for j in 0..n {
        if train[j] {
            ystar[j] = working[j].unwrap();
        } else {
            let mut best = 0;
            for c in 0..num_classes {
                if q[j][c] > q[j][best] {
                    best = c;
                }
            }
            ystar[j] = best;
        }
    }
    let mut out = working.to_vec();
    let mut stats = Vec::new();
    for i in 0..n {
        if !train[i] {
            continue;
        }
        if neighbors[i].is_empty() {
            stats.push((i, None, None));
            continue;
        }
        let mut counts = vec![0usize; num_classes];
        for &j in &neighbors[i] {
            counts[ystar[j]] += 1;
        }
        let mut c = 0;
        for k in 0..num_classes {
            if counts[k] > counts[c] {
                c = k;
            }
        }
        let mut carriers = 0.0;
        let mut similar = 0.0;
        for &j in &neighbors[i] {
            if ystar[j] == c {
                carriers += 1.0;
                if cosine(&h[i], &h[j]) > gamma {
                    similar += 1.0;
                }
            }
        }
        let a = similar / carriers;
        if working[i] != Some(c) && a > omega {
            out[i] = Some(c);
        }
        stats.push((i, Some(c), Some(a)));
    }
    CorrectionOracle { working: out, stats }
}

/// `|count - n p| <= 3 sqrt(n p (1 - p))`
pub fn within_3_sigma(count: f64, n: f64, p: f64) -> bool {
    (count - n * p).abs() <= 3.0 * (n * p * (1.0 - p)).sqrt()
}

/// Pearson chi-square p-value of observed counts against uniform expectation.
pub fn chi_square_uniform_p(counts: &[usize]) -> f64 {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let total: usize = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    let stat: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    let dist = ChiSquared::new((counts.len() - 1) as f64).unwrap();
    1.0 - dist.cdf(stat)
}

pub mod grads {
    use std::sync::Arc;

    use cgnn::autodiff::{grad_check, Tape, Tensor, Var};
    use cgnn::encoder::{encode_on, predict_on, EncoderConfig, ModelParams, ParamVars};
    use cgnn::objectives::{contrastive_loss_on, supervised_loss_on, total_loss_on, LossConfig};
    use cgnn::{Graph, Result};
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;

    pub type Loss = Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var>>;

    pub struct Case {
        pub op: &'static str,
        pub inputs: Vec<Tensor>,
        pub f: Loss,
    }

    fn tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
        Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Entries bounded away from zero so kinks stay out of the difference stencil.
    fn away_from_zero(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
        let data = (0..rows * cols)
            .map(|_| {
                let v: f64 = rng.random_range(0.05..1.0);
                if rng.random::<bool>() { v } else { -v }
            })
            .collect();
        Tensor::matrix(rows, cols, data).unwrap()
    }

    fn positive(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
        Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(0.3..2.0)).collect()).unwrap()
    }

    /// Random-weighted sum, so every output entry carries a distinct upstream gradient.
    fn reduce(tape: &mut Tape, v: Var, w: &[f64]) -> Result<Var> {
        let shape = tape.value(v).shape().to_vec();
        let numel = shape.iter().product::<usize>();
        let w = tape.constant(Tensor::new(&shape, w[..numel].to_vec())?);
        let m = tape.mul(v, w)?;
        tape.sum(m)
    }

    /// One case per primitive for the given seed, shapes drawn at random.
    pub fn primitive_cases(seed: u64) -> Vec<Case> {
        let mut rng = super::rng(seed);
        let (r, c, k) = (rng.random_range(1..6usize), rng.random_range(1..5usize), rng.random_range(1..5usize));
        let mut cases = Vec::new();
        macro_rules! case {
            ($op:expr, [$($input:expr),*], |$t:ident, $v:ident| $body:expr) => {{
                let inputs = vec![$($input),*];
                let w: Vec<f64> = (0..256).map(|_| rng.random_range(-1.0..1.0)).collect();
                cases.push(Case {
                    op: $op,
                    inputs,
                    f: Box::new(move |$t: &mut Tape, $v: &[Var]| {
                        let out = $body?;
                        reduce($t, out, &w)
                    }),
                });
            }};
        }
        case!("matmul", [tensor(&mut rng, r, k), tensor(&mut rng, k, c)], |t, v| t.matmul(v[0], v[1]));
        case!("add", [tensor(&mut rng, r, c), tensor(&mut rng, r, c)], |t, v| t.add(v[0], v[1]));
        case!("add_row", [tensor(&mut rng, r, c), tensor(&mut rng, 1, c)], |t, v| t.add(v[0], v[1]));
        case!("add_col", [tensor(&mut rng, r, c), tensor(&mut rng, r, 1)], |t, v| t.add(v[0], v[1]));
        case!("sub", [tensor(&mut rng, r, c), tensor(&mut rng, 1, c)], |t, v| t.sub(v[0], v[1]));
        case!("mul", [tensor(&mut rng, r, c), tensor(&mut rng, r, c)], |t, v| t.mul(v[0], v[1]));
        case!("mul_col", [tensor(&mut rng, r, c), tensor(&mut rng, r, 1)], |t, v| t.mul(v[0], v[1]));
        case!("scale", [tensor(&mut rng, r, c)], |t, v| t.scale(v[0], -1.7));
        case!("relu", [away_from_zero(&mut rng, r, c)], |t, v| t.relu(v[0]));
        case!("exp", [tensor(&mut rng, r, c)], |t, v| t.exp(v[0]));
        case!("log", [positive(&mut rng, r, c)], |t, v| t.log(v[0]));
        case!("clamp_min", [away_from_zero(&mut rng, r, c)], |t, v| t.clamp_min(v[0], 0.0));
        case!("row_softmax", [tensor(&mut rng, r, c)], |t, v| t.row_softmax(v[0]));
        case!("row_log_softmax", [tensor(&mut rng, r, c)], |t, v| t.row_log_softmax(v[0]));
        case!("row_l2_normalize", [away_from_zero(&mut rng, r, c)], |t, v| t.row_l2_normalize(v[0], 0.0));
        case!("transpose", [tensor(&mut rng, r, c)], |t, v| t.transpose(v[0]));
        let index: Vec<usize> = (0..r + 2).map(|_| rng.random_range(0..r)).collect();
        case!("gather_rows", [tensor(&mut rng, r, c)], |t, v| t.gather_rows(v[0], &index));
        let entries: Vec<(usize, usize)> = (0..r + 2).map(|_| (rng.random_range(0..r), rng.random_range(0..c))).collect();
        case!("gather_entries", [tensor(&mut rng, r, c)], |t, v| t.gather_entries(v[0], &entries));
        case!("sum", [tensor(&mut rng, r, c)], |t, v| {
            let s = t.sum(v[0])?;
            t.mul(s, s)
        });
        case!("mean", [tensor(&mut rng, r, c)], |t, v| {
            let s = t.mean(v[0])?;
            t.exp(s)
        });
        let mut mask: Vec<bool> = (0..r).map(|_| rng.random::<bool>()).collect();
        mask[rng.random_range(0..r)] = true;
        case!("masked_mean", [tensor(&mut rng, r, c)], |t, v| {
            let sq = t.mul(v[0], v[0])?;
            t.masked_mean(sq, &mask)
        });
        let n = r + 3;
        let g = Arc::new(Graph::from_edges(n, super::random_edges(&mut rng, n, 0.4)).unwrap().0);
        case!("aggregate_mean", [tensor(&mut rng, n, c)], |t, v| t.aggregate_mean(&g, v[0]));
        cases
    }

    /// Max relative error of every primitive over `seeds`, as (op, error).
    pub fn primitive_suite(seeds: std::ops::Range<u64>) -> Vec<(&'static str, f64)> {
        let mut worst: Vec<(&'static str, f64)> = Vec::new();
        for seed in seeds {
            for case in primitive_cases(seed) {
                let report = grad_check(case.f, &case.inputs, 1e-5, 1e-4).unwrap();
                match worst.iter_mut().find(|(op, _)| *op == case.op) {
                    Some(entry) => entry.1 = entry.1.max(report.max_rel_error),
                    None => worst.push((case.op, report.max_rel_error)),
                }
            }
        }
        worst
    }

    /// Full objective (two views, contrastive + supervised) on a 6-node graph
    /// with d = 4, C = 2, checked against every parameter and the attributes.
    pub fn composite_error(seed: u64) -> f64 {
        let mut rng = super::rng(seed);
        let g = Arc::new(Graph::from_edges(6, [(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (2, 3)]).unwrap().0);
        let g1 = Arc::new(Graph::from_edges(6, [(0, 1), (2, 0), (3, 4), (4, 5)]).unwrap().0);
        let g2 = Arc::new(Graph::from_edges(6, [(1, 2), (2, 0), (3, 4), (2, 3)]).unwrap().0);
        let cfg = EncoderConfig { num_layers: 3, hidden_dim: 6, embed_dim: 5 };
        let mut init = cgnn::rng::substream(seed, 0);
        let params = ModelParams::init(&cfg, 4, 2, &mut init).unwrap();
        let x = tensor(&mut rng, 6, 4);
        let labels = vec![Some(0), Some(0), Some(1), Some(1), None, Some(0)];
        let mask = vec![true, true, true, true, false, true];
        let mut inputs: Vec<Tensor> = params.tensors().into_iter().cloned().collect();
        inputs.push(x);
        let n_params = inputs.len() - 1;
        let masked_row = Tensor::from_rows(&[
            vec![1.0; 4], vec![1.0; 4], vec![0.0; 4], vec![1.0; 4], vec![1.0; 4], vec![1.0; 4],
        ])
        .unwrap();
        let loss = move |tape: &mut Tape, vars: &[Var]| {
            let pv = ParamVars::from_vars(&params, &vars[..n_params])?;
            let x = vars[n_params];
            let m = tape.constant(masked_row.clone());
            let x_masked = tape.mul(x, m)?;
            let h1 = encode_on(tape, &g1, x_masked, &pv)?;
            let h2 = encode_on(tape, &g2, x, &pv)?;
            let cl = contrastive_loss_on(tape, h1, h2, 0.5)?;
            let h = encode_on(tape, &g, x, &pv)?;
            let q = predict_on(tape, h, &pv)?;
            let (sup, _) = supervised_loss_on(tape, q, &labels, &mask)?;
            total_loss_on(tape, Some(cl), sup, &LossConfig::default())
        };
        grad_check(loss, &inputs, 1e-6, 1e-3).unwrap().max_rel_error
    }
}

/// Max |crate - oracle| of the symmetric contrastive loss over `instances`
/// random (N <= 8, e <= 4) pairs of views.
pub fn contrastive_suite(instances: u64, tau: f64) -> f64 {
    use cgnn::autodiff::Tensor;
    let mut worst: f64 = 0.0;
    for seed in 0..instances {
        let mut r = rng(1000 + seed);
        let n = r.random_range(1..=8usize);
        let e = r.random_range(1..=4usize);
        let h1 = random_matrix(&mut r, n, e, 2.0);
        let h2 = random_matrix(&mut r, n, e, 2.0);
        let got = cgnn::objectives::contrastive_loss(
            &Tensor::from_rows(&h1).unwrap(),
            &Tensor::from_rows(&h2).unwrap(),
            tau,
        )
        .unwrap();
        worst = worst.max((got - contrastive_oracle(&h1, &h2, tau)).abs());
    }
    worst
}

/// Loss for views whose rows are all the same unit vector.
pub fn identical_views_loss(n: usize, tau: f64) -> f64 {
    use cgnn::autodiff::Tensor;
    let row = vec![0.6, 0.0, -0.8];
    let h = Tensor::from_rows(&vec![row; n]).unwrap();
    cgnn::objectives::contrastive_loss(&h, &h, tau).unwrap()
}

/// Random correction input: clustered embeddings so similarities straddle the
/// thresholds, partially flipped train labels, noisy predictions elsewhere.
pub struct CorrectionInstance {
    pub neighbors: Vec<Vec<usize>>,
    pub graph: cgnn::Graph,
    pub labels: cgnn::LabelStore,
    pub q: Vec<Vec<f64>>,
    pub h: Vec<Vec<f64>>,
    pub classes: usize,
    pub gamma: f64,
    pub omega: f64,
}

pub fn correction_instance(seed: u64, max_nodes: usize) -> CorrectionInstance {
    let mut r = rng(50_000 + seed);
    let n = r.random_range(8..=max_nodes);
    let classes = r.random_range(2..=4usize);
    let clean: Vec<usize> = (0..n).map(|_| r.random_range(0..classes)).collect();
    let p: f64 = r.random_range(0.05..0.3);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let bias = if clean[u] == clean[v] { 2.0 } else { 0.5 };
            if r.random::<f64>() < (p * bias).min(1.0) {
                edges.push((u, v));
            }
        }
    }
    let adj = dense_adjacency(n, &edges);
    let neighbors = neighbor_lists(&adj);
    let graph = cgnn::Graph::from_edges(n, edges).unwrap().0;
    let train: Vec<bool> = (0..n).map(|_| r.random::<f64>() < 0.5).collect();
    let observed: Vec<Option<usize>> = (0..n)
        .map(|i| {
            train[i].then(|| if r.random::<f64>() < 0.3 { r.random_range(0..classes) } else { clean[i] })
        })
        .collect();
    let test: Vec<bool> = train.iter().map(|t| !t).collect();
    let labels = cgnn::LabelStore::from_parts(
        classes,
        observed,
        clean.iter().map(|&c| Some(c)).collect(),
        train,
        test,
    )
    .unwrap();
    let dim = 4;
    let spread = r.random_range(0.2..0.8);
    let h = (0..n)
        .map(|i| {
            (0..dim)
                .map(|k| if k == clean[i] % dim { 1.0 } else { 0.0 } + r.random_range(-spread..spread))
                .collect()
        })
        .collect();
    let q = (0..n)
        .map(|i| {
            let raw: Vec<f64> = (0..classes)
                .map(|c| r.random_range(0.0..1.0) + if c == clean[i] { 0.6 } else { 0.0 })
                .collect();
            let s: f64 = raw.iter().sum();
            raw.iter().map(|v| v / s).collect()
        })
        .collect();
    let gamma = [0.6, 0.7, 0.8, 0.9, 0.95][r.random_range(0..5)];
    let omega = [0.0, 0.3, 0.5, 0.6, 0.8, 1.0][r.random_range(0..6)];
    CorrectionInstance { neighbors, graph, labels, q, h, classes, gamma, omega }
}

pub struct CorrectionCheck {
    pub labels_match: bool,
    pub majority_match: bool,
    pub max_score_diff: f64,
    pub relabeled: usize,
}

pub fn check_correction(inst: &CorrectionInstance) -> CorrectionCheck {
    use cgnn::autodiff::Tensor;
    use cgnn::correction::{correct_labels, CorrectionConfig};
    let cfg = CorrectionConfig { gamma: inst.gamma, omega: inst.omega };
    let (out, records) = correct_labels(
        &inst.labels,
        &inst.graph,
        &Tensor::from_rows(&inst.h).unwrap(),
        &Tensor::from_rows(&inst.q).unwrap(),
        &cfg,
    )
    .unwrap();
    let oracle = correction_oracle(
        &inst.neighbors,
        inst.labels.train_mask(),
        inst.labels.working(),
        &inst.q,
        &inst.h,
        inst.classes,
        inst.gamma,
        inst.omega,
    );
    let mut majority_match = records.len() == oracle.stats.len();
    let mut max_score_diff: f64 = 0.0;
    for (rec, &(node, c, a)) in records.iter().zip(&oracle.stats) {
        majority_match &= rec.node == node && rec.majority == c;
        match (rec.score, a) {
            (Some(x), Some(y)) => max_score_diff = max_score_diff.max((x - y).abs()),
            (None, None) => {}
            _ => max_score_diff = f64::INFINITY,
        }
    }
    CorrectionCheck {
        labels_match: out.working() == oracle.working.as_slice(),
        majority_match,
        max_score_diff,
        relabeled: records
            .iter()
            .filter(|r| r.verdict == cgnn::correction::Verdict::Relabeled)
            .count(),
    }
}

/// (graphs with any disagreement, worst a_i difference, total relabels)
pub fn correction_suite(graphs: u64, max_nodes: usize) -> (usize, f64, usize) {
    let mut failures = 0;
    let mut worst: f64 = 0.0;
    let mut relabeled = 0;
    for seed in 0..graphs {
        let check = check_correction(&correction_instance(seed, max_nodes));
        if !(check.labels_match && check.majority_match) {
            failures += 1;
        }
        worst = worst.max(check.max_score_diff);
        relabeled += check.relabeled;
    }
    (failures, worst, relabeled)
}

/// Balanced labels (node i in class i mod C), every node in the train split.
pub fn all_train_store(n: usize, classes: usize) -> cgnn::LabelStore {
    let clean: Vec<Option<usize>> = (0..n).map(|i| Some(i % classes)).collect();
    cgnn::LabelStore::from_parts(classes, clean.clone(), clean, vec![true; n], vec![false; n]).unwrap()
}

pub struct NoiseStats {
    pub mean_flips: f64,
    pub expected: f64,
    pub count_ok: bool,
    /// Chi-square p-value of (clean, destination) cells over flipped nodes.
    pub destination_p: f64,
}

/// Uniform noise at rate `p` on 500 train nodes, repeated `trials` times.
pub fn uniform_noise_stats(p: f64, trials: u64) -> NoiseStats {
    let (n, classes) = (500, 4);
    let store = all_train_store(n, classes);
    let mut total = 0usize;
    let mut cells = vec![0usize; classes * (classes - 1)];
    for t in 0..trials {
        let mut r = cgnn::rng::substream(t, cgnn::rng::stream::NOISE);
        let noisy = cgnn::noise::inject_uniform(&store, p, &mut r).unwrap();
        for i in 0..n {
            let (c, y) = (store.clean()[i].unwrap(), noisy.observed()[i].unwrap());
            if c != y {
                total += 1;
                let offset = (y + classes - c) % classes - 1;
                cells[c * (classes - 1) + offset] += 1;
            }
        }
    }
    let draws = (n as u64 * trials) as f64;
    NoiseStats {
        mean_flips: total as f64 / trials as f64,
        expected: n as f64 * p,
        count_ok: within_3_sigma(total as f64, draws, p),
        destination_p: chi_square_uniform_p(&cells),
    }
}

pub struct PairStats {
    pub count_ok: bool,
    pub targets_ok: bool,
    /// Chi-square p-value of flips per source class.
    pub source_p: f64,
}

/// Pair noise at rate `p` with the cyclic map on 500 train nodes.
pub fn pair_noise_stats(p: f64, trials: u64) -> PairStats {
    let (n, classes) = (500, 4);
    let store = all_train_store(n, classes);
    let map = cgnn::noise::cyclic_pair_map(classes);
    let mut per_class = vec![0usize; classes];
    let mut targets_ok = true;
    for t in 0..trials {
        let mut r = cgnn::rng::substream(t, cgnn::rng::stream::NOISE);
        let noisy = cgnn::noise::inject_pair(&store, p, None, &mut r).unwrap();
        for i in 0..n {
            let (c, y) = (store.clean()[i].unwrap(), noisy.observed()[i].unwrap());
            if c != y {
                targets_ok &= y == map[c];
                per_class[c] += 1;
            }
        }
    }
    let total: usize = per_class.iter().sum();
    PairStats {
        count_ok: within_3_sigma(total as f64, (n as u64 * trials) as f64, p),
        targets_ok,
        source_p: chi_square_uniform_p(&per_class),
    }
}

/// Structural invariants, shared by the property tests and the acceptance run.
/// Each check panics with a message on violation.
pub mod invariants {
    use std::collections::VecDeque;
    use std::sync::Arc;

    use cgnn::augment::{make_views, AugmentConfig};
    use cgnn::encoder::{encode, predict, EncoderConfig, ModelParams};
    use cgnn::graph::{make_split, train_count, SplitPolicy};
    use cgnn::rng::substream;
    use cgnn::{AttributeMatrix, Graph, LabelStore};
    use rand::seq::SliceRandom;
    use rand::Rng;

    use super::{dense_adjacency, neighbor_lists, random_edges, rng};

    pub fn random_pairs(seed: u64) -> (usize, Vec<(usize, usize)>) {
        let mut r = rng(seed);
        let n = r.random_range(1..40usize);
        let m = r.random_range(0..120usize);
        (n, (0..m).map(|_| (r.random_range(0..n), r.random_range(0..n))).collect())
    }

    /// Symmetric, loop-free, sorted, deduplicated and equal to the dense reading.
    pub fn graph(n: usize, pairs: &[(usize, usize)]) {
        let (g, report) = Graph::from_edges(n, pairs.to_vec()).unwrap();
        g.validate().unwrap();
        assert_eq!(report.self_loops_dropped, pairs.iter().filter(|(u, v)| u == v).count());
        let expected = neighbor_lists(&dense_adjacency(n, pairs));
        for i in 0..n {
            let nb = g.neighbors(i).unwrap();
            assert!(nb.windows(2).all(|w| w[0] < w[1]), "node {i} unsorted");
            assert!(!nb.contains(&i), "self loop at {i}");
            for &j in nb {
                assert!(g.neighbors(j).unwrap().contains(&i), "{i}-{j} one-sided");
            }
            assert_eq!(nb, expected[i].as_slice());
        }
        assert_eq!(g.num_edges(), expected.iter().map(Vec::len).sum::<usize>() / 2);
    }

    /// Train and test masks are disjoint, cover every node, and observed
    /// labels exist exactly on train nodes.
    pub fn split(n: usize, classes: usize, rate: f64, seed: u64, random: bool) {
        let clean: Vec<Option<usize>> = (0..n).map(|i| Some(i % classes)).collect();
        let policy = if random { SplitPolicy::Random } else { SplitPolicy::Stratified };
        let split = make_split(&clean, classes, rate, policy, &mut substream(seed, 1)).unwrap();
        let mut labels = LabelStore::from_clean(classes, clean).unwrap();
        labels.apply_split(&split).unwrap();
        labels.validate().unwrap();
        for i in 0..n {
            assert!(!(split.train[i] && split.test[i]), "node {i} in both masks");
            assert!(split.train[i] || split.test[i], "node {i} in neither mask");
            assert_eq!(labels.observed()[i].is_some(), split.train[i]);
        }
        let count = split.train.iter().filter(|&&t| t).count();
        if random {
            assert_eq!(count, train_count(n, rate));
        } else {
            assert_eq!(count, train_count(n, rate).max(classes));
            for c in 0..classes {
                assert!((0..n).any(|i| split.train[i] && i % classes == c), "class {c} unlabeled");
            }
        }
    }

    /// Views are deterministic, keep shapes, and only keep input edges.
    pub fn views(seed: u64, pe: f64, pm: f64, n: usize) {
        let mut r = rng(seed);
        let g = Graph::from_edges(n, random_edges(&mut r, n, 0.3)).unwrap().0;
        let x = AttributeMatrix::new(n, 3, (0..3 * n).map(|v| v as f32 + 1.0).collect()).unwrap();
        let cfg = AugmentConfig { edge_drop_prob: pe, attr_mask_prob: pm, seed };
        let views = make_views(&g, &x, &cfg).unwrap();
        assert_eq!(views, make_views(&g, &x, &cfg).unwrap());
        for (vg, vx) in [&views.0, &views.1] {
            vg.validate().unwrap();
            assert_eq!(vg.num_nodes(), n);
            assert_eq!((vx.rows(), vx.dim()), (n, 3));
            for (u, v) in vg.edges() {
                assert!(g.adj(u).contains(&v) && g.adj(v).contains(&u));
                assert!(vg.adj(v).contains(&u));
            }
            for i in 0..n {
                let row = vx.row(i);
                assert!(row == x.row(i) || row.iter().all(|&v| v == 0.0), "row {i} partially masked");
            }
        }
    }

    pub fn random_attrs(r: &mut rand_chacha::ChaCha8Rng, n: usize, d: usize) -> AttributeMatrix {
        AttributeMatrix::new(n, d, (0..n * d).map(|_| r.random_range(-1.0f32..1.0)).collect()).unwrap()
    }

    pub fn small_cfg(layers: usize) -> EncoderConfig {
        EncoderConfig { num_layers: layers, hidden_dim: 7, embed_dim: 5 }
    }

    /// Initialized parameters with random nonzero biases.
    pub fn params_with_bias(cfg: &EncoderConfig, d: usize, c: usize, seed: u64) -> ModelParams {
        let mut p = ModelParams::init(cfg, d, c, &mut substream(seed, 3)).unwrap();
        let mut r = rng(seed);
        for t in p.tensors_mut() {
            if t.rank() == 1 {
                t.data_mut().iter_mut().for_each(|v| *v = r.random_range(-0.5..0.5));
            }
        }
        p
    }

    /// Relabeling nodes permutes embeddings the same way (tolerance 1e-5),
    /// and predictions are distributions.
    pub fn equivariance(seed: u64, layers: usize) {
        let mut r = rng(seed);
        let n = 30;
        let g = Graph::from_edges(n, random_edges(&mut r, n, 0.1)).unwrap().0;
        let x = random_attrs(&mut r, n, 4);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut r);
        let params = params_with_bias(&small_cfg(layers), 4, 3, seed);
        let h = encode(&Arc::new(g.clone()), &x, &params).unwrap();
        let hp = encode(&Arc::new(g.permute(&perm).unwrap()), &x.permute(&perm).unwrap(), &params).unwrap();
        for i in 0..n {
            for (a, b) in h.row(i).iter().zip(hp.row(perm[i])) {
                assert!((a - b).abs() < 1e-5, "node {i}: {a} vs {b}");
            }
        }
        let q = predict(&h, &params).unwrap();
        for i in 0..n {
            let s: f64 = q.row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-5);
            assert!(q.row(i).iter().all(|&p| p >= 0.0));
        }
    }

    pub fn hops_from(g: &Graph, v: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; g.num_nodes()];
        dist[v] = Some(0);
        let mut queue = VecDeque::from([v]);
        while let Some(u) = queue.pop_front() {
            for &w in g.adj(u) {
                if dist[w].is_none() {
                    dist[w] = Some(dist[u].unwrap() + 1);
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// Perturbing node `v` leaves every embedding farther than `layers` hops bit-identical.
    pub fn locality(seed: u64, layers: usize, v: usize) {
        let mut r = rng(seed);
        let n = 25;
        let g = Arc::new(Graph::from_edges(n, random_edges(&mut r, n, 0.08)).unwrap().0);
        let x = random_attrs(&mut r, n, 3);
        let mut values = x.values().to_vec();
        for k in 0..3 {
            values[v * 3 + k] += 1.0;
        }
        let x2 = AttributeMatrix::new(n, 3, values).unwrap();
        let params = params_with_bias(&small_cfg(layers), 3, 2, seed);
        let (h, h2) = (encode(&g, &x, &params).unwrap(), encode(&g, &x2, &params).unwrap());
        let dist = hops_from(&g, v);
        for u in 0..n {
            if dist[u].is_none_or(|d| d > layers) {
                assert_eq!(h.row(u), h2.row(u), "node {u} beyond {layers} hops of {v}");
            }
        }
    }
}
