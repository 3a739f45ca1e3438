//! Layer-level secure protocols: homomorphic convolution, activations,
//! pooling, transposed convolution, and the argmax readout, all operating
//! on additive shares and returning additive shares.

pub mod activation;
pub mod conv;
pub mod layout;
pub mod pool;
pub mod readout;

pub use conv::{conv_layer, tconv_layer};
pub use layout::{raster_index, ConvPlan, TconvPlan, Tile};
