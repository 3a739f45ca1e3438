//! Two-party blind image segmentation.
//!
//! A client (Alice) holds an image; a server (Bob) holds the quantized
//! weights of a UNET segmentation network. The two run an interactive
//! protocol at the end of which Alice learns only the per-pixel argmax
//! labels and Bob learns nothing about the image. The building blocks:
//!
//! * [`ring`] — exact modular arithmetic and number-theoretic transforms;
//! * [`pahe`] — packed additively homomorphic encryption over RLWE with
//!   slot-wise addition, plaintext products, and slot rotation;
//! * [`mpc`] — additive secret sharing, Beaver-triple multiplication, and
//!   share truncation, with a trusted-dealer source of correlated randomness;
//! * [`gc`] — Yao garbled circuits (free-XOR, point-and-permute) for ReLU,
//!   max-pooling, argmax, and exact truncation;
//! * [`protocols`] — the layer-level secure protocols: frequency-domain
//!   homomorphic convolution, activations, pooling, transposed convolution,
//!   concatenation, readout;
//! * [`unet`] — the declarative network architecture, quantization, and the
//!   plaintext reference executor used as the equivalence oracle;
//! * [`runtime`] — two-party session orchestration, wire framing, transports,
//!   and timing instrumentation.

pub mod error;
pub mod gc;
pub mod mpc;
pub mod pahe;
pub mod protocols;
pub mod ring;
pub mod runtime;
pub mod unet;

pub use error::{Error, Result};

/// The two protocol parties. Alice holds the image and the decryption key;
/// Bob holds the network weights.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Role {
    Alice,
    Bob,
}

impl Role {
    pub fn other(self) -> Role {
        match self {
            Role::Alice => Role::Bob,
            Role::Bob => Role::Alice,
        }
    }
}
