//! Stochastic graph views: per-edge dropping and whole-row attribute masking.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::graph::{AttributeMatrix, Graph};
use crate::rng::{child_seed, stream, substream, Rng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    pub edge_drop_prob: f64,
    pub attr_mask_prob: f64,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            edge_drop_prob: 0.2,
            attr_mask_prob: 0.2,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        check_prob("aug.edge_drop", self.edge_drop_prob)?;
        check_prob("aug.attr_mask", self.attr_mask_prob)
    }
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Contract(format!("{name} = {p} is not a probability")))
    }
}

/// Removes each undirected edge independently with probability `p_e`.
pub fn drop_edges(g: &Graph, p_e: f64, rng: &mut Rng) -> Result<Graph> {
    check_prob("edge drop probability", p_e)?;
    let kept: Vec<_> = g.edges().filter(|_| rng.random::<f64>() >= p_e).collect();
    Ok(Graph::from_edges(g.num_nodes(), kept)?.0)
}

/// Zeroes the attribute row of each node independently with probability `p_m`.
pub fn mask_attributes(x: &AttributeMatrix, p_m: f64, rng: &mut Rng) -> Result<AttributeMatrix> {
    check_prob("attribute mask probability", p_m)?;
    let mut out = x.clone();
    for i in 0..x.rows() {
        if rng.random::<f64>() < p_m {
            out.zero_row(i);
        }
    }
    Ok(out)
}

pub type View = (Graph, AttributeMatrix);

/// Two independent augmented views. Each view and each of its two draws
/// uses its own stream derived from `cfg.seed`.
pub fn make_views(g: &Graph, x: &AttributeMatrix, cfg: &AugmentConfig) -> Result<(View, View)> {
    cfg.validate()?;
    let draw = |view: u64| -> Result<View> {
        let mut edge_rng = substream(child_seed(cfg.seed, stream::AUGMENT, 2 * view), 0);
        let mut attr_rng = substream(child_seed(cfg.seed, stream::AUGMENT, 2 * view + 1), 0);
        Ok((
            drop_edges(g, cfg.edge_drop_prob, &mut edge_rng)?,
            mask_attributes(x, cfg.attr_mask_prob, &mut attr_rng)?,
        ))
    };
    Ok((draw(0)?, draw(1)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring(n: usize) -> Graph {
        Graph::from_edges(n, (0..n).map(|i| (i, (i + 1) % n))).unwrap().0
    }

    #[test]
    fn extreme_drop_rates() {
        let g = ring(10);
        let mut rng = substream(1, 1);
        assert_eq!(drop_edges(&g, 0.0, &mut rng).unwrap(), g);
        let empty = drop_edges(&g, 1.0, &mut rng).unwrap();
        assert_eq!(empty.num_edges(), 0);
        assert_eq!(empty.num_nodes(), 10);
    }

    #[test]
    fn extreme_mask_rates() {
        let x = AttributeMatrix::new(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let mut rng = substream(1, 1);
        assert_eq!(mask_attributes(&x, 0.0, &mut rng).unwrap(), x);
        let z = mask_attributes(&x, 1.0, &mut rng).unwrap();
        assert!(z.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn invalid_probabilities() {
        let mut rng = substream(1, 1);
        assert!(matches!(drop_edges(&ring(3), 1.5, &mut rng), Err(Error::Contract(_))));
        let x = AttributeMatrix::zeros(2, 2).unwrap();
        assert!(mask_attributes(&x, -0.1, &mut rng).is_err());
    }

    #[test]
    fn views_are_deterministic_and_identity_at_zero_rates() {
        let g = ring(20);
        let x = AttributeMatrix::new(20, 1, (0..20).map(|v| v as f32).collect()).unwrap();
        let cfg = AugmentConfig {
            seed: 11,
            ..Default::default()
        };
        let a = make_views(&g, &x, &cfg).unwrap();
        let b = make_views(&g, &x, &cfg).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.0, a.1);

        let off = AugmentConfig {
            edge_drop_prob: 0.0,
            attr_mask_prob: 0.0,
            seed: 11,
        };
        let (v1, v2) = make_views(&g, &x, &off).unwrap();
        assert_eq!(v1, (g.clone(), x.clone()));
        assert_eq!(v2, (g, x));
    }
}
