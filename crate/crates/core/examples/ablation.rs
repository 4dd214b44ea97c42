//! Compare the full model with its ablations over five seeds.
//!
//! ```text
//! cargo run --release --example ablation -- pair
//! ```

use cgnn::noise::{gen_synthetic, NoiseKind, NoiseSpec, SynthSpec};
use cgnn::trainer::{run_protocol, ProtocolConfig, TrainConfig};

fn main() -> cgnn::Result<()> {
    let kind = match std::env::args().nth(1).as_deref() {
        Some("pair") => NoiseKind::Pair,
        _ => NoiseKind::Uniform,
    };
    let ds = gen_synthetic(&SynthSpec::default())?;
    let noise = NoiseSpec {
        kind,
        rate: 0.2,
        pair_map: None,
        seed: 0,
    };
    println!("{kind} noise, rate 0.2, 5 runs");
    for (use_contrastive, use_correction) in [(true, true), (true, false), (false, true), (false, false)] {
        let cfg = ProtocolConfig {
            num_runs: 5,
            label_rate: 0.05,
            train: TrainConfig {
                use_contrastive,
                use_correction,
                ..Default::default()
            },
            ..Default::default()
        };
        let s = run_protocol(&ds, Some(&noise), &cfg)?.summary;
        let precision = s
            .relabel_precision
            .map_or_else(|| "-".to_string(), |p| format!("{:.2}", p.mean));
        println!(
            "{:9} accuracy {:.4} ± {:.4}   relabel precision {precision}",
            s.label, s.accuracy.mean, s.accuracy.std
        );
    }
    Ok(())
}
