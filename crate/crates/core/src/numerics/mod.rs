//! Tensor arithmetic, the gradient tape and the seeded random source.

mod graph;
mod random;
mod tape;
mod tensor;

pub use graph::{Eval, Graph, Val};
pub use random::RandomSource;
pub use tape::{Gradients, NodeId, Tape};
pub use tensor::{gaussian_kl, Tensor};
