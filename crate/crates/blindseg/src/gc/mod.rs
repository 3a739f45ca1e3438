//! Yao garbled circuits: builder, garbling, the application circuits, and
//! the two-party execution protocol.

pub mod circuit;
pub mod circuits;
pub mod garble;
pub mod protocol;

pub use circuit::{Builder, Circuit, Gate, W};
pub use circuits::{
    argmax_indices, index_bits, maxpool_reshare, pack_values, relu_reshare, trunc_reshare,
    unpack_indices, unpack_values,
};
pub use protocol::{evaluator_run, garbler_run};
