//! Train one model on a noisy synthetic benchmark and follow its progress.
//!
//! ```text
//! cargo run --release --example train_run
//! ```

use cgnn::noise::{gen_synthetic, NoiseKind, NoiseSpec, SynthSpec};
use cgnn::trainer::{prepare_run, train, ProtocolConfig, TrainConfig};

fn main() -> cgnn::Result<()> {
    let ds = gen_synthetic(&SynthSpec::default())?;
    let noise = NoiseSpec {
        kind: NoiseKind::Uniform,
        rate: 0.2,
        pair_map: None,
        seed: 0,
    };
    let cfg = ProtocolConfig {
        label_rate: 0.05,
        train: TrainConfig {
            epochs: 150,
            ..Default::default()
        },
        ..Default::default()
    };
    let run = prepare_run(&ds, Some(&noise), &cfg, 0)?;
    let out = train(&run, &cfg.train)?;

    for e in out.metrics.epochs.iter().filter(|e| e.epoch % 25 == 0 || e.epoch == 1) {
        println!(
            "epoch {:3}  loss {:.4}  contrastive {:.4}  supervised {:.4}  test acc {:.3}",
            e.epoch,
            e.total_loss,
            e.contrastive_loss.unwrap_or(0.0),
            e.supervised_loss,
            e.test_accuracy
        );
    }
    for r in &out.metrics.rounds {
        println!(
            "correction at epoch {:3}: {} relabeled, {} correct, {} noisy before",
            r.epoch, r.relabeled, r.correct_relabels, r.noisy_before
        );
    }
    println!(
        "final test accuracy {:.3}; noisy train labels {} -> {}",
        out.metrics.final_test_accuracy, out.metrics.initial_noisy, out.metrics.final_noisy
    );
    Ok(())
}
