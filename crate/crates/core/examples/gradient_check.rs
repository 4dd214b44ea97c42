//! Finite-difference check of the full training objective on a tiny graph.

use std::sync::Arc;

use cgnn::autodiff::{grad_check, Tape, Tensor, Var};
use cgnn::encoder::{encode_on, predict_on, EncoderConfig, ModelParams, ParamVars};
use cgnn::objectives::{contrastive_loss_on, supervised_loss_on, total_loss_on, LossConfig};
use cgnn::rng::substream;
use cgnn::Graph;
use rand::Rng;

fn main() -> cgnn::Result<()> {
    let g = Arc::new(Graph::from_edges(6, [(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (2, 3)])?.0);
    let g2 = Arc::new(Graph::from_edges(6, [(0, 1), (2, 0), (3, 4), (4, 5)])?.0);
    let cfg = EncoderConfig {
        num_layers: 2,
        hidden_dim: 5,
        embed_dim: 3,
    };
    let mut rng = substream(11, 0);
    let params = ModelParams::init(&cfg, 4, 2, &mut rng)?;
    let x = Tensor::matrix(6, 4, (0..24).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    let labels = vec![Some(0), Some(0), Some(1), Some(1), None, Some(0)];
    let mask = vec![true, true, true, true, false, true];

    let mut inputs = params.tensors().into_iter().cloned().collect::<Vec<_>>();
    inputs.push(x);
    let n_params = inputs.len() - 1;
    let template = params.clone();

    let loss = |tape: &mut Tape, vars: &[Var]| {
        let pv = ParamVars::from_vars(&template, &vars[..n_params])?;
        let x = vars[n_params];
        let h1 = encode_on(tape, &g, x, &pv)?;
        let h2 = encode_on(tape, &g2, x, &pv)?;
        let cl = contrastive_loss_on(tape, h1, h2, 0.5)?;
        let q = predict_on(tape, h1, &pv)?;
        let (sup, _) = supervised_loss_on(tape, q, &labels, &mask)?;
        total_loss_on(tape, Some(cl), sup, &LossConfig::default())
    };
    let report = grad_check(loss, &inputs, 1e-6, 1e-3)?;
    println!("max relative error {:.3e} (tolerance {:.0e})", report.max_rel_error, report.tol);
    println!("{}", if report.passed() { "passed" } else { "FAILED" });
    Ok(())
}
