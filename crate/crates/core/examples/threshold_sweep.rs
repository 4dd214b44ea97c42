//! Sweep the correction thresholds on the synthetic benchmark and report the
//! accuracy spread. Grid values can be passed as `gamma,..` `omega,..`.
//!
//! ```text
//! cargo run --release --example threshold_sweep -- 0.6,0.8,0.95 0.6,0.8,0.95
//! ```

use cgnn::config::{ExperimentConfig, DEFAULT_SWEEP_GRID};
use cgnn::experiment::cmd_sweep;

fn grid(arg: Option<String>) -> Vec<f64> {
    arg.map(|s| s.split(',').map(|v| v.parse().expect("number")).collect())
        .unwrap_or_else(|| DEFAULT_SWEEP_GRID.to_vec())
}

fn main() -> cgnn::Result<()> {
    let mut args = std::env::args().skip(1);
    let mut cfg = ExperimentConfig::default();
    cfg.apply_overrides(&["split.rate=0.05", "noise.kind=uniform", "noise.rate=0.2"])?;
    cfg.sweep_gamma = grid(args.next());
    cfg.sweep_omega = grid(args.next());
    cfg.out_dir = std::env::temp_dir().join("cgnn-sweep");
    cfg.validate()?;

    let outcome = cmd_sweep(&cfg)?;
    for r in &outcome.rows {
        println!("gamma {:.2}  omega {:.2}  accuracy {:.4} ± {:.4}", r.gamma, r.omega, r.mean_acc, r.std_acc);
    }
    println!("spread {:.4}; files in {}", outcome.spread, cfg.out_dir.display());
    Ok(())
}
