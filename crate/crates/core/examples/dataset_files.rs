//! Write a dataset and a trained model to disk and load both back.

use cgnn::autodiff::checkpoint;
use cgnn::encoder::ModelParams;
use cgnn::io::{load_dataset_dir, write_dataset_dir, SplitSpec};
use cgnn::noise::{gen_synthetic, SynthSpec};
use cgnn::trainer::{evaluate, prepare_run, train, ProtocolConfig, TrainConfig};

fn main() -> cgnn::Result<()> {
    let dir = std::env::temp_dir().join("cgnn-dataset-files");
    let ds = gen_synthetic(&SynthSpec {
        n: 200,
        num_classes: 2,
        p_in: 0.1,
        ..Default::default()
    })?;
    let cfg = ProtocolConfig {
        label_rate: 0.1,
        train: TrainConfig {
            epochs: 40,
            warmup: 20,
            encoder: cgnn::encoder::EncoderConfig {
                hidden_dim: 32,
                embed_dim: 32,
                ..Default::default()
            },
            ..Default::default()
        },
        ..Default::default()
    };
    let run = prepare_run(&ds, None, &cfg, 1)?;
    write_dataset_dir(&dir, &run)?;
    let reloaded = load_dataset_dir(&dir, &SplitSpec::File(dir.join("split.txt")))?;
    assert_eq!(reloaded.labels.observed(), run.labels.observed());
    println!("dataset written to and reloaded from {}", dir.display());

    let out = train(&reloaded, &cfg.train)?;
    let ckpt = dir.join("model.ckpt");
    checkpoint::save(&ckpt, &out.params.named())?;
    let params = ModelParams::from_named(checkpoint::load(&ckpt)?)?;
    let acc = evaluate(&params, &reloaded, reloaded.labels.test_mask())?;
    println!("checkpoint {} reloaded; test accuracy {acc:.3}", ckpt.display());
    Ok(())
}
