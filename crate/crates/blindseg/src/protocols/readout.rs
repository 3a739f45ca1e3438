//! Argmax readout: the final garbled circuit compares each pixel's shared
//! logits and outputs only the index bits. Alice garbles and decodes, so
//! she alone learns the label map; Bob evaluates blind.

use rand::Rng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::gc::circuits::{argmax_indices, pack_values, unpack_indices};
use crate::gc::protocol::{evaluator_run, garbler_run};
use crate::mpc::ShareVector;
use crate::protocols::activation::draw_ot_pads;
use crate::protocols::layout::raster_index;
use crate::mpc::Dealer;
use crate::runtime::Link;
use crate::unet::Dims;
use crate::Role;

/// Compute per-pixel argmax labels from shared logits (channel-major raster
/// shares). Returns `Some(labels)` in pixel raster order for Alice, `None`
/// for Bob.
pub fn argmax_readout(
    role: Role,
    link: &mut Link,
    rng: &mut ChaCha20Rng,
    dealer: &mut Dealer,
    in_dims: Dims,
    my_share: &ShareVector,
) -> Result<Option<Vec<u64>>> {
    let p = my_share.p;
    let classes = in_dims.c;
    if my_share.len() != in_dims.numel() {
        return Err(Error::Mismatch("argmax input share shape".into()));
    }
    let n_pixels = in_dims.vol();
    // pixel-major gather: logits of pixel 0, logits of pixel 1, …
    let mut gathered = Vec::with_capacity(n_pixels * classes);
    for z in 0..in_dims.d {
        for y in 0..in_dims.h {
            for x in 0..in_dims.w {
                for c in 0..classes {
                    gathered.push(my_share.values[raster_index(in_dims, c, z, y, x)]);
                }
            }
        }
    }
    let circuit = argmax_indices(p, classes, n_pixels);
    let (send_pads, recv_pads) = draw_ot_pads(dealer, circuit.inputs_b);
    match role {
        Role::Alice => {
            let bits = pack_values(&gathered, p);
            let seed: [u8; 32] = rng.gen();
            let out_bits = garbler_run(link, &circuit, &bits, &send_pads, seed)?;
            Ok(Some(unpack_indices(&out_bits, classes)))
        }
        Role::Bob => {
            let bits = pack_values(&gathered, p);
            evaluator_run(link, &circuit, &bits, &recv_pads)?;
            Ok(None)
        }
    }
}
