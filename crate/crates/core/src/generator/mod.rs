//! Contour generator: backbone CNN, edge/vertex branches, feature fusion and
//! a ring-graph GCN that moves an initial circle onto the object, trained by a
//! cyclic point-matching loss.

mod config;
mod matching;
mod network;
mod ring;

pub use config::{GeneratorConfig, BRANCH_CHANNELS};
pub use matching::{matching_loss, MatchResult};
pub use network::{gcn_layer, gcn_layer_backward, GcnGrads, Generator, GeneratorGrads, GeneratorOutput, GeneratorTape};
pub use ring::{ring_adjacency, RingGraph};
