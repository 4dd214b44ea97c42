//! Generate a planted-partition graph and inspect its structure.
//!
//! ```text
//! cargo run --release --example synthetic_dataset -- /tmp/sbm
//! ```

use cgnn::io::write_dataset_dir;
use cgnn::noise::{gen_synthetic, SynthSpec};

fn main() -> cgnn::Result<()> {
    let spec = SynthSpec {
        n: 400,
        num_classes: 4,
        p_in: 0.08,
        p_out: 0.01,
        dim: 16,
        attr_signal: 1.0,
        seed: 7,
    };
    let ds = gen_synthetic(&spec)?;
    let clean = ds.labels.clean();
    let intra = ds.graph.edges().filter(|&(u, v)| clean[u] == clean[v]).count();
    let total = ds.graph.num_edges();
    let isolated = (0..ds.num_nodes()).filter(|&i| ds.graph.degree(i) == 0).count();
    println!("nodes {}  edges {total}  classes {}", ds.num_nodes(), ds.num_classes());
    println!("intra-class edges {intra} ({:.1}%)", 100.0 * intra as f64 / total as f64);
    println!("isolated nodes {isolated}");
    println!("mean degree {:.2}", 2.0 * total as f64 / ds.num_nodes() as f64);

    if let Some(dir) = std::env::args().nth(1) {
        write_dataset_dir(dir.as_ref(), &ds)?;
        println!("written to {dir}");
    }
    Ok(())
}
