//! Node classification under label noise.
//!
//! A message-passing encoder is trained with a supervised cross-entropy term
//! plus a contrastive consistency term between two augmented graph views.
//! After a warmup, train labels that disagree with a confident neighborhood
//! majority are periodically relabeled. The crate also carries the harness
//! used to study the method: label-noise injection, planted-partition
//! datasets, ablations and threshold sweeps.
//!
//! See the `examples/` directory for one runnable program per capability.

pub mod augment;
pub mod autodiff;
pub mod config;
pub mod correction;
pub mod encoder;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod io;
pub mod noise;
pub mod objectives;
pub mod optim;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
pub use graph::{AttributeMatrix, Dataset, Graph, LabelStore};
