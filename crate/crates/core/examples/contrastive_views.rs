//! Draw two augmented views of a graph and score them with the contrastive
//! loss under a freshly initialized encoder.

use cgnn::augment::{make_views, AugmentConfig};
use cgnn::encoder::{encode, EncoderConfig, ModelParams};
use cgnn::noise::{gen_synthetic, SynthSpec};
use cgnn::objectives::contrastive_loss;
use cgnn::rng::substream;

fn main() -> cgnn::Result<()> {
    let ds = gen_synthetic(&SynthSpec {
        n: 120,
        ..Default::default()
    })?;
    let params = ModelParams::init(&EncoderConfig::default(), ds.attributes.dim(), ds.num_classes(), &mut substream(0, 0))?;
    let h = encode(&ds.graph, &ds.attributes, &params)?;
    println!("identical views: {:.4} (log N = {:.4})", contrastive_loss(&h, &h, 0.5)?, (ds.num_nodes() as f64).ln());

    for p in [0.1, 0.3, 0.6] {
        let cfg = AugmentConfig {
            edge_drop_prob: p,
            attr_mask_prob: p,
            seed: 5,
        };
        let ((g1, x1), (g2, x2)) = make_views(&ds.graph, &ds.attributes, &cfg)?;
        let kept = (g1.num_edges(), g2.num_edges());
        let h1 = encode(&g1.into(), &x1, &params)?;
        let h2 = encode(&g2.into(), &x2, &params)?;
        println!(
            "p = {p}: edges kept {kept:?} of {}, loss {:.4}",
            ds.graph.num_edges(),
            contrastive_loss(&h1, &h2, 0.5)?
        );
    }
    Ok(())
}
