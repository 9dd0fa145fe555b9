//! Scalar computation graphs, forward-mode duals and input-derivative jets.

pub mod dual;
pub mod jet;
pub mod scalar;
pub mod tape;

pub use dual::{Dual, MultiDual};
pub use jet::{jet3_compose, jet_compose, pair_count, pair_index, Jet2, Jet3, JetOps};
pub use scalar::Scalar;
pub use tape::{Node, NodeId, Op, Tape, Var};
