//! One correction round on a hand-built graph, with the audit trail.

use cgnn::autodiff::Tensor;
use cgnn::correction::{correct_labels, CorrectionConfig};
use cgnn::{Graph, LabelStore};

fn main() -> cgnn::Result<()> {
    // Node 0 is labeled 0 but sits among three nodes the model calls class 1.
    // Node 4 is labeled 1 and agrees with its neighborhood.
    let g = Graph::from_edges(6, [(0, 1), (0, 2), (0, 3), (4, 5), (4, 1)])?.0;
    let labels = LabelStore::from_parts(
        2,
        vec![Some(0), None, None, None, Some(1), None],
        vec![Some(1), Some(1), Some(1), Some(1), Some(1), Some(1)],
        vec![true, false, false, false, true, false],
        vec![false, true, true, true, false, true],
    )?;
    // unit-norm embeddings; node 0 and its neighbors point in nearly the same direction
    let (a, b) = (0.95f64, (1.0 - 0.95f64 * 0.95).sqrt());
    let h = Tensor::from_rows(&[
        vec![1.0, 0.0],
        vec![a, b],
        vec![a, -b],
        vec![a, b],
        vec![0.0, 1.0],
        vec![0.0, 1.0],
    ])?;
    let q = Tensor::from_rows(&vec![vec![0.1, 0.9]; 6])?;

    for omega in [0.8, 1.0] {
        let cfg = CorrectionConfig { gamma: 0.8, omega };
        let (next, records) = correct_labels(&labels, &g, &h, &q, &cfg)?;
        println!("gamma 0.8, omega {omega}:");
        for r in &records {
            println!("  {}", serde_json::to_string(r)?);
        }
        println!("  working labels {:?}", next.working());
    }
    Ok(())
}
