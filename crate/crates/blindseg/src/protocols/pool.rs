//! Secure pooling: rotation-based average pooling in the ciphertext domain
//! and garbled-circuit max pooling on shares.
//!
//! Average pooling: Alice encrypts her share of a channel slot-wise, Bob
//! folds in his share, then runs one rotate-and-add pass per window axis;
//! afterwards every window-origin slot holds the window sum. Bob masks and
//! returns the ciphertext; both parties compact the origin slots into the
//! pooled raster layout. The divisor is a power of two folded into the next
//! requantization shift downstream.

use rand::Rng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::gc::circuits::maxpool_reshare;
use crate::mpc::{Dealer, ShareVector};
use crate::pahe::{
    add, add_plain, ciphertext_from_bytes, ciphertext_to_bytes, dec, enc, rot, sub_plain,
    PaheParams, PlainVector, RotationKeySet, SecretKey,
};
use crate::protocols::activation::run_reshare_gc;
use crate::protocols::layout::raster_index;
use crate::runtime::{FrameType, Link};
use crate::unet::{Dims, PoolKind};
use crate::Role;

/// Rotation steps the average-pooling pass needs for a given input geometry
/// and window; declare these at key generation.
pub fn avgpool_rotation_steps(in_dims: Dims, (zd, zh, zw): (usize, usize, usize)) -> Vec<usize> {
    // one rotation per non-origin window tap, all applied to the fresh input
    // ciphertext: cascading rotations through already-rotated ciphertexts
    // would square the mask-polynomial noise and exhaust the budget
    let mut steps = Vec::new();
    for dz in 0..zd {
        for dy in 0..zh {
            for dx in 0..zw {
                let off = (dz * in_dims.h + dy) * in_dims.w + dx;
                if off != 0 {
                    steps.push(off);
                }
            }
        }
    }
    steps
}

/// Window-sum average pooling over the ciphertext domain. Output shares are
/// the window sums; dividing by the window size is left to the next shift.
pub fn avgpool_layer(
    role: Role,
    link: &mut Link,
    params: &PaheParams,
    sk: Option<&SecretKey>,
    rks: Option<&RotationKeySet>,
    rng: &mut ChaCha20Rng,
    in_dims: Dims,
    window: (usize, usize, usize),
    my_share: &ShareVector,
) -> Result<ShareVector> {
    let p = params.ring.p;
    let n = params.ring.n;
    let (zd, zh, zw) = window;
    let vol = in_dims.vol();
    if my_share.len() != in_dims.numel() || my_share.p != p {
        return Err(Error::Mismatch("pool input share shape".into()));
    }
    if vol > n {
        return Err(Error::Layout(format!(
            "channel volume {vol} exceeds ring degree {n}"
        )));
    }
    let out_dims = Dims {
        c: in_dims.c,
        d: in_dims.d / zd,
        h: in_dims.h / zh,
        w: in_dims.w / zw,
    };
    let origins: Vec<usize> = {
        let mut v = Vec::with_capacity(out_dims.vol());
        for z in 0..out_dims.d {
            for y in 0..out_dims.h {
                for x in 0..out_dims.w {
                    v.push(((z * zd) * in_dims.h + y * zh) * in_dims.w + x * zw);
                }
            }
        }
        v
    };
    let mut out = ShareVector::zeros(p, out_dims.numel());

    match role {
        Role::Alice => {
            let sk = sk.ok_or_else(|| Error::Params("pool: missing secret key".into()))?;
            for c in 0..in_dims.c {
                let mut slots = vec![0u64; n];
                slots[..vol].copy_from_slice(&my_share.values[c * vol..(c + 1) * vol]);
                let ct = enc(sk, &PlainVector::slots(slots), rng)?;
                link.send(FrameType::Ciphertext, &ciphertext_to_bytes(params, &ct))?;
            }
            for c in 0..in_dims.c {
                let ct = ciphertext_from_bytes(params, &link.recv(FrameType::Ciphertext)?)?;
                let slots = dec(sk, &ct).values;
                for (i, &m) in origins.iter().enumerate() {
                    out.values[c * out_dims.vol() + i] = slots[m];
                }
            }
        }
        Role::Bob => {
            let rks = rks.ok_or_else(|| Error::Params("pool: missing rotation keys".into()))?;
            for c in 0..in_dims.c {
                let ct = ciphertext_from_bytes(params, &link.recv(FrameType::Ciphertext)?)?;
                let mut slots = vec![0u64; n];
                slots[..vol].copy_from_slice(&my_share.values[c * vol..(c + 1) * vol]);
                let base = add_plain(params, &ct, &PlainVector::slots(slots))?;
                let mut cur = base.clone();
                for off in avgpool_rotation_steps(in_dims, window) {
                    cur = add(params, &cur, &rot(params, rks, &base, off)?)?;
                }
                let mask: Vec<u64> = (0..n).map(|_| rng.gen_range(0..p)).collect();
                let masked = sub_plain(params, &cur, &PlainVector::slots(mask.clone()))?;
                link.send(FrameType::Ciphertext, &ciphertext_to_bytes(params, &masked))?;
                for (i, &m) in origins.iter().enumerate() {
                    out.values[c * out_dims.vol() + i] = mask[m];
                }
            }
        }
    }
    Ok(out)
}

/// Garbled-circuit max pooling: per-window signed maximum, reshared.
pub fn maxpool_layer(
    role: Role,
    link: &mut Link,
    rng: &mut ChaCha20Rng,
    dealer: &mut Dealer,
    in_dims: Dims,
    window: (usize, usize, usize),
    my_share: &ShareVector,
) -> Result<ShareVector> {
    let p = my_share.p;
    let (zd, zh, zw) = window;
    if my_share.len() != in_dims.numel() {
        return Err(Error::Mismatch("pool input share shape".into()));
    }
    let out_dims = Dims {
        c: in_dims.c,
        d: in_dims.d / zd,
        h: in_dims.h / zh,
        w: in_dims.w / zw,
    };
    let w_len = zd * zh * zw;
    let n_windows = out_dims.numel();
    // gather shares window-major: all elements of window 0, then window 1, …
    let mut gathered = Vec::with_capacity(n_windows * w_len);
    for c in 0..out_dims.c {
        for z in 0..out_dims.d {
            for y in 0..out_dims.h {
                for x in 0..out_dims.w {
                    for dz in 0..zd {
                        for dy in 0..zh {
                            for dx in 0..zw {
                                gathered.push(
                                    my_share.values[raster_index(
                                        in_dims,
                                        c,
                                        z * zd + dz,
                                        y * zh + dy,
                                        x * zw + dx,
                                    )],
                                );
                            }
                        }
                    }
                }
            }
        }
    }
    let circuit = maxpool_reshare(p, w_len, n_windows);
    run_reshare_gc(
        role,
        link,
        rng,
        dealer,
        &circuit,
        p,
        &ShareVector { p, values: gathered },
        n_windows,
    )
}

/// Dispatch on the pooling kind.
#[allow(clippy::too_many_arguments)]
pub fn pool_layer(
    kind: PoolKind,
    role: Role,
    link: &mut Link,
    params: &PaheParams,
    sk: Option<&SecretKey>,
    rks: Option<&RotationKeySet>,
    rng: &mut ChaCha20Rng,
    dealer: &mut Dealer,
    in_dims: Dims,
    window: (usize, usize, usize),
    my_share: &ShareVector,
) -> Result<ShareVector> {
    match kind {
        PoolKind::Avg => avgpool_layer(role, link, params, sk, rks, rng, in_dims, window, my_share),
        PoolKind::Max => maxpool_layer(role, link, rng, dealer, in_dims, window, my_share),
    }
}
