//! Message-passing encoder and MLP prediction head.
//!
//! Layer `k` computes, for every node `i`,
//!
//! ```text
//! p_i = mean_{j in N(i)} h_j          (0 for isolated nodes)
//! h_i = relu(W_k ((h_i + p_i) / 2) + b_k)
//! ```
//!
//! with no relu on the last layer. The head is `relu(h W_1 + b_1) W_2 + b_2`
//! followed by a row softmax.

use std::sync::Arc;

use rand::Rng as _;

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::{AttributeMatrix, Graph};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderConfig {
    pub num_layers: usize,
    pub hidden_dim: usize,
    /// Width of the final message-passing layer.
    pub embed_dim: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            num_layers: 3,
            hidden_dim: 256,
            embed_dim: 256,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 {
            return Err(Error::config("enc.layers", "at least one layer is required"));
        }
        if self.hidden_dim == 0 {
            return Err(Error::config("enc.hidden", "must be positive"));
        }
        if self.embed_dim == 0 {
            return Err(Error::config("enc.embed", "must be positive"));
        }
        Ok(())
    }

    /// `(in, out)` of every message-passing layer.
    fn layer_dims(&self, input_dim: usize) -> Vec<(usize, usize)> {
        (0..self.num_layers)
            .map(|k| {
                let fan_in = if k == 0 { input_dim } else { self.hidden_dim };
                let fan_out = if k + 1 == self.num_layers {
                    self.embed_dim
                } else {
                    self.hidden_dim
                };
                (fan_in, fan_out)
            })
            .collect()
    }
}

/// Weight `in x out` and bias `[out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    /// Glorot-uniform weights, zero bias.
    pub fn glorot(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        Self {
            weight: Tensor::matrix(fan_in, fan_out, data).expect("positive dims"),
            bias: Tensor::zeros(&[fan_out]),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }
}

/// All trainable state: encoder layers then the two head layers.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub layers: Vec<Linear>,
    pub head: Vec<Linear>,
}

impl ModelParams {
    pub fn init(cfg: &EncoderConfig, input_dim: usize, num_classes: usize, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        if input_dim == 0 || num_classes == 0 {
            return Err(Error::Validation("input dim and class count must be positive".into()));
        }
        let layers = cfg
            .layer_dims(input_dim)
            .into_iter()
            .map(|(i, o)| Linear::glorot(i, o, rng))
            .collect();
        let head = vec![
            Linear::glorot(cfg.embed_dim, cfg.embed_dim, rng),
            Linear::glorot(cfg.embed_dim, num_classes, rng),
        ];
        Ok(Self { layers, head })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn embed_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim()
    }

    pub fn num_classes(&self) -> usize {
        self.head.last().unwrap().out_dim()
    }

    fn linears(&self) -> impl Iterator<Item = &Linear> {
        self.layers.iter().chain(&self.head)
    }

    /// Every parameter tensor in a fixed order (weight, bias per layer).
    pub fn tensors(&self) -> Vec<&Tensor> {
        self.linears().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .chain(&mut self.head)
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    /// Parameters under their checkpoint names `enc.k.<i>.{w,b}` and `head.<i>.{w,b}`.
    pub fn named(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (prefix, group) in [("enc.k", &self.layers), ("head", &self.head)] {
            for (i, l) in group.iter().enumerate() {
                out.push((format!("{prefix}.{i}.w"), l.weight.clone()));
                out.push((format!("{prefix}.{i}.b"), l.bias.clone()));
            }
        }
        out
    }

    pub fn from_named(named: Vec<(String, Tensor)>) -> Result<Self> {
        let mut layers: Vec<(Option<Tensor>, Option<Tensor>)> = Vec::new();
        let mut head: Vec<(Option<Tensor>, Option<Tensor>)> = Vec::new();
        for (name, t) in named {
            let (group, rest) = if let Some(rest) = name.strip_prefix("enc.k.") {
                (&mut layers, rest)
            } else if let Some(rest) = name.strip_prefix("head.") {
                (&mut head, rest)
            } else {
                return Err(Error::Validation(format!("unknown parameter `{name}`")));
            };
            let (idx, kind) = rest
                .split_once('.')
                .and_then(|(i, k)| i.parse::<usize>().ok().map(|i| (i, k)))
                .ok_or_else(|| Error::Validation(format!("malformed parameter name `{name}`")))?;
            if group.len() <= idx {
                group.resize(idx + 1, (None, None));
            }
            let slot = match kind {
                "w" => &mut group[idx].0,
                "b" => &mut group[idx].1,
                _ => return Err(Error::Validation(format!("malformed parameter name `{name}`"))),
            };
            *slot = Some(t);
        }
        let assemble = |group: Vec<(Option<Tensor>, Option<Tensor>)>| -> Result<Vec<Linear>> {
            group
                .into_iter()
                .enumerate()
                .map(|(i, pair)| match pair {
                    (Some(weight), Some(bias)) => Ok(Linear { weight, bias }),
                    _ => Err(Error::Validation(format!("layer {i} is missing a weight or bias"))),
                })
                .collect()
        };
        let params = Self {
            layers: assemble(layers)?,
            head: assemble(head)?,
        };
        params.validate()?;
        Ok(params)
    }

    /// Checks that shapes chain from the input dim through to the classes.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() || self.head.len() != 2 {
            return Err(Error::Validation(
                "model needs at least one encoder layer and a two-layer head".into(),
            ));
        }
        let mut width = self.layers[0].in_dim();
        for l in self.linears() {
            if l.weight.rank() != 2 || l.in_dim() != width {
                return Err(Error::Validation(format!(
                    "layer expects input width {} but receives {width}",
                    l.in_dim()
                )));
            }
            if l.bias.rank() != 1 || l.bias.numel() != l.out_dim() {
                return Err(Error::Validation("bias width does not match weight".into()));
            }
            if !l.weight.is_finite() || !l.bias.is_finite() {
                return Err(Error::Validation("non-finite parameter".into()));
            }
            width = l.out_dim();
        }
        Ok(())
    }
}

/// Tape handles for one registration of [`ModelParams`].
#[derive(Debug, Clone)]
pub struct ParamVars {
    pub layers: Vec<(Var, Var)>,
    pub head: Vec<(Var, Var)>,
}

impl ParamVars {
    /// Registers every parameter as a gradient-tracked leaf.
    pub fn register(tape: &mut Tape, params: &ModelParams) -> Self {
        Self::register_with(tape, params, true)
    }

    /// Registers parameters as constants (inference only).
    pub fn constants(tape: &mut Tape, params: &ModelParams) -> Self {
        Self::register_with(tape, params, false)
    }

    fn register_with(tape: &mut Tape, params: &ModelParams, grad: bool) -> Self {
        let mut reg = |l: &Linear| {
            if grad {
                (tape.param(l.weight.clone()), tape.param(l.bias.clone()))
            } else {
                (tape.constant(l.weight.clone()), tape.constant(l.bias.clone()))
            }
        };
        let layers = params.layers.iter().map(&mut reg).collect();
        let head = params.head.iter().map(&mut reg).collect();
        Self { layers, head }
    }

    /// Rebuilds handles from variables already on a tape, laid out in the
    /// order of [`ModelParams::tensors`] for a model shaped like `params`.
    pub fn from_vars(params: &ModelParams, vars: &[Var]) -> Result<Self> {
        let expected = 2 * (params.layers.len() + params.head.len());
        if vars.len() != expected {
            return Err(Error::Contract(format!("expected {expected} variables, got {}", vars.len())));
        }
        let pairs: Vec<(Var, Var)> = vars.chunks(2).map(|c| (c[0], c[1])).collect();
        let (layers, head) = pairs.split_at(params.layers.len());
        Ok(Self {
            layers: layers.to_vec(),
            head: head.to_vec(),
        })
    }

    /// Handles in the same order as [`ModelParams::tensors`].
    pub fn vars(&self) -> Vec<Var> {
        self.layers
            .iter()
            .chain(&self.head)
            .flat_map(|&(w, b)| [w, b])
            .collect()
    }
}

pub fn attributes_tensor(x: &AttributeMatrix) -> Tensor {
    Tensor::matrix(
        x.rows(),
        x.dim(),
        x.values().iter().map(|&v| v as f64).collect(),
    )
    .expect("attribute matrix is non-empty")
}

/// Records the encoder forward pass on `tape`; returns `N x embed_dim`.
pub fn encode_on(tape: &mut Tape, graph: &Arc<Graph>, x: Var, vars: &ParamVars) -> Result<Var> {
    let n = tape.value(x).rows();
    if n != graph.num_nodes() {
        return Err(Error::shape(
            "encode",
            format!("{n} attribute rows for {} nodes", graph.num_nodes()),
        ));
    }
    let mut h = x;
    let last = vars.layers.len() - 1;
    for (k, &(w, b)) in vars.layers.iter().enumerate() {
        let p = tape.aggregate_mean(graph, h)?;
        let s = tape.add(h, p)?;
        let s = tape.scale(s, 0.5)?;
        let z = tape.matmul(s, w)?;
        let z = tape.add(z, b)?;
        h = if k == last { z } else { tape.relu(z)? };
    }
    Ok(h)
}

/// Head logits `N x C` for embeddings `h`.
pub fn logits_on(tape: &mut Tape, h: Var, vars: &ParamVars) -> Result<Var> {
    let (w1, b1) = vars.head[0];
    let (w2, b2) = vars.head[1];
    let z = tape.matmul(h, w1)?;
    let z = tape.add(z, b1)?;
    let z = tape.relu(z)?;
    let z = tape.matmul(z, w2)?;
    tape.add(z, b2)
}

/// Class distributions `N x C` for embeddings `h`.
pub fn predict_on(tape: &mut Tape, h: Var, vars: &ParamVars) -> Result<Var> {
    let logits = logits_on(tape, h, vars)?;
    tape.row_softmax(logits)
}

/// Node embeddings `h_i` for a graph and attribute matrix.
pub fn encode(graph: &Arc<Graph>, x: &AttributeMatrix, params: &ModelParams) -> Result<Tensor> {
    if x.dim() != params.input_dim() {
        return Err(Error::shape(
            "encode",
            format!("attribute dim {} but model expects {}", x.dim(), params.input_dim()),
        ));
    }
    let mut tape = Tape::new();
    let vars = ParamVars::constants(&mut tape, params);
    let xv = tape.constant(attributes_tensor(x));
    let h = encode_on(&mut tape, graph, xv, &vars)?;
    Ok(tape.value(h).clone())
}

/// Class distributions `q_i` for embeddings `h`.
pub fn predict(h: &Tensor, params: &ModelParams) -> Result<Tensor> {
    if h.cols() != params.embed_dim() {
        return Err(Error::shape(
            "predict",
            format!("embedding width {} but head expects {}", h.cols(), params.embed_dim()),
        ));
    }
    let mut tape = Tape::new();
    let vars = ParamVars::constants(&mut tape, params);
    let hv = tape.constant(h.clone());
    let q = predict_on(&mut tape, hv, &vars)?;
    Ok(tape.value(q).clone())
}

/// Rows divided by their L2 norm (zero rows stay zero).
pub fn l2_normalize_rows(h: &Tensor) -> Tensor {
    let mut out = h.clone();
    let cols = out.cols();
    for row in out.data_mut().chunks_mut(cols) {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|v| *v /= norm);
        }
    }
    out
}
