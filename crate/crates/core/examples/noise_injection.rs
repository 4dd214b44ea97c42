//! Corrupt train labels with uniform and pair noise and show where flipped
//! labels land.

use cgnn::graph::{make_split, SplitPolicy};
use cgnn::noise::{gen_synthetic, NoiseKind, NoiseSpec, SynthSpec};
use cgnn::rng::substream;

fn main() -> cgnn::Result<()> {
    let mut ds = gen_synthetic(&SynthSpec::default())?;
    let split = make_split(ds.labels.clean(), 4, 0.5, SplitPolicy::Stratified, &mut substream(1, 0))?;
    ds.labels.apply_split(&split)?;

    for kind in [NoiseKind::Uniform, NoiseKind::Pair] {
        let spec = NoiseSpec {
            kind,
            rate: 0.3,
            pair_map: None,
            seed: 3,
        };
        let noisy = spec.apply(&ds.labels, &mut substream(spec.seed, 0))?;
        // confusion[clean][observed] over train nodes
        let mut confusion = [[0usize; 4]; 4];
        for i in noisy.train_nodes() {
            confusion[noisy.clean()[i].unwrap()][noisy.observed()[i].unwrap()] += 1;
        }
        let flipped: usize = (0..4).map(|c| confusion[c].iter().sum::<usize>() - confusion[c][c]).sum();
        println!("{kind} noise at rate 0.3: {flipped} of {} train labels flipped", noisy.num_train());
        for (c, row) in confusion.iter().enumerate() {
            println!("  clean {c} -> {row:?}");
        }
    }
    Ok(())
}
