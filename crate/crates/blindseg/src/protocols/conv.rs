//! Secure convolution on additive shares via packed homomorphic encryption.
//!
//! Per tile and input channel, Alice encrypts her share of the padded input
//! block as polynomial coefficients; Bob adds his share homomorphically,
//! multiplies by each output channel's filter polynomial (one negacyclic
//! product = the whole linear convolution of the tile), accumulates the
//! channel sum, subtracts a uniform mask, and returns the result. Alice
//! decrypts her share of every output coefficient; Bob's share is his mask.
//! Both read off the valid coefficients, yielding fresh additive shares of
//! the raw accumulator (the requantization shift happens downstream).
//!
//! Transposed convolution runs the same pipeline on the zero-interleaved
//! input with taps addressed in output geometry.

use rand::Rng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::mpc::{from_signed, ShareVector};
use crate::pahe::{
    add, add_plain, ciphertext_from_bytes, ciphertext_to_bytes, dec, enc, mul_plain, sub_plain,
    Ciphertext, PaheParams, PlainVector, SecretKey,
};
use crate::protocols::layout::{raster_index, ConvPlan, TconvPlan, Tile};
use crate::runtime::{FrameType, Link};
use crate::unet::quant::ConvWeights;
use crate::unet::Dims;
use crate::Role;

fn send_ct(link: &mut Link, params: &PaheParams, c: &Ciphertext) -> Result<()> {
    link.send(FrameType::Ciphertext, &ciphertext_to_bytes(params, c))
}

fn recv_ct(link: &mut Link, params: &PaheParams) -> Result<Ciphertext> {
    ciphertext_from_bytes(params, &link.recv(FrameType::Ciphertext)?)
}

/// Filter polynomial for one (out, in) channel pair in a tile's geometry,
/// slot-encoded for the homomorphic product. Tap (dz,dy,dx) goes to
/// exponent delta_max - delta so the tile product aligns outputs at
/// `read_index`.
fn conv_weight_slots(
    params: &PaheParams,
    plan: &ConvPlan,
    tile: &Tile,
    w: &ConvWeights,
    o: usize,
    i: usize,
) -> PlainVector {
    let p = params.ring.p;
    let dmax = tile.delta_max(plan.kd, plan.kh, plan.kw);
    let mut poly = vec![0u64; params.ring.n];
    for dz in 0..plan.kd {
        for dy in 0..plan.kh {
            for dx in 0..plan.kw {
                poly[dmax - tile.delta(dz, dy, dx)] = from_signed(w.at(o, i, dz, dy, dx), p);
            }
        }
    }
    PlainVector::slots(PlainVector::coeffs(poly).to_slots(params))
}

/// Same for a transposed convolution: tap (dz,dy,dx) at exponent delta, so
/// outputs land directly at their flat output-geometry index.
fn tconv_weight_slots(
    params: &PaheParams,
    plan: &TconvPlan,
    w: &ConvWeights,
    o: usize,
    i: usize,
) -> PlainVector {
    let p = params.ring.p;
    let mut poly = vec![0u64; params.ring.n];
    for dz in 0..plan.sd {
        for dy in 0..plan.sh {
            for dx in 0..plan.sw {
                poly[plan.delta(dz, dy, dx)] = from_signed(w.at(o, i, dz, dy, dx), p);
            }
        }
    }
    PlainVector::slots(PlainVector::coeffs(poly).to_slots(params))
}

fn channel<'a>(share: &'a ShareVector, vol: usize, c: usize) -> &'a [u64] {
    &share.values[c * vol..(c + 1) * vol]
}

/// Run one convolution layer. `my_share` holds this party's share of the
/// input tensor in raster order; the result is this party's share of the
/// raw (unshifted) accumulator tensor. Bob supplies the filter bank, Alice
/// the decryption key.
pub fn conv_layer(
    role: Role,
    link: &mut Link,
    params: &PaheParams,
    sk: Option<&SecretKey>,
    rng: &mut ChaCha20Rng,
    plan: &ConvPlan,
    my_share: &ShareVector,
    weights: Option<&ConvWeights>,
) -> Result<ShareVector> {
    let p = params.ring.p;
    let d = plan.in_dims;
    if my_share.len() != d.numel() || my_share.p != p {
        return Err(Error::Mismatch("conv input share shape".into()));
    }
    let out_dims = Dims { c: plan.out_c, ..d };
    let mut out = ShareVector::zeros(p, out_dims.numel());

    match role {
        Role::Alice => {
            let sk = sk.ok_or_else(|| Error::Params("conv: missing secret key".into()))?;
            for tile in &plan.tiles {
                for i in 0..d.c {
                    let block = plan.gather_tile(tile, channel(my_share, d.vol(), i), p);
                    let ct = enc(sk, &PlainVector::coeffs(block), rng)?;
                    send_ct(link, params, &ct)?;
                }
            }
            for tile in &plan.tiles {
                for o in 0..plan.out_c {
                    let ct = recv_ct(link, params)?;
                    let coeffs = dec(sk, &ct).values;
                    for z in tile.z0..tile.z1 {
                        for y in tile.y0..tile.y1 {
                            for x in 0..d.w {
                                out.values[raster_index(out_dims, o, z, y, x)] =
                                    coeffs[tile.read_index(z, y, x, plan.kd, plan.kh, plan.kw)];
                            }
                        }
                    }
                }
            }
        }
        Role::Bob => {
            let w = weights.ok_or_else(|| Error::Params("conv: missing weights".into()))?;
            if w.out_c != plan.out_c || w.in_c != d.c {
                return Err(Error::Mismatch("conv weight shape".into()));
            }
            let mut in_cts: Vec<Vec<Ciphertext>> = Vec::with_capacity(plan.tiles.len());
            for tile in &plan.tiles {
                let mut cts = Vec::with_capacity(d.c);
                for i in 0..d.c {
                    let ct = recv_ct(link, params)?;
                    let block = plan.gather_tile(tile, channel(my_share, d.vol(), i), p);
                    cts.push(add_plain(params, &ct, &PlainVector::coeffs(block))?);
                }
                in_cts.push(cts);
            }
            for (tile, cts) in plan.tiles.iter().zip(&in_cts) {
                for o in 0..plan.out_c {
                    let mut acc: Option<Ciphertext> = None;
                    for (i, ct) in cts.iter().enumerate() {
                        let ws = conv_weight_slots(params, plan, tile, w, o, i);
                        let term = mul_plain(params, ct, &ws)?;
                        acc = Some(match acc {
                            None => term,
                            Some(a) => add(params, &a, &term)?,
                        });
                    }
                    let mask: Vec<u64> = (0..params.ring.n).map(|_| rng.gen_range(0..p)).collect();
                    let masked =
                        sub_plain(params, &acc.unwrap(), &PlainVector::coeffs(mask.clone()))?;
                    send_ct(link, params, &masked)?;
                    for z in tile.z0..tile.z1 {
                        for y in tile.y0..tile.y1 {
                            for x in 0..d.w {
                                out.values[raster_index(out_dims, o, z, y, x)] =
                                    mask[tile.read_index(z, y, x, plan.kd, plan.kh, plan.kw)];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Run one transposed-convolution layer (kernel == stride). Same contract
/// as [`conv_layer`]; the output tensor doubles each strided axis.
pub fn tconv_layer(
    role: Role,
    link: &mut Link,
    params: &PaheParams,
    sk: Option<&SecretKey>,
    rng: &mut ChaCha20Rng,
    plan: &TconvPlan,
    my_share: &ShareVector,
    weights: Option<&ConvWeights>,
) -> Result<ShareVector> {
    let p = params.ring.p;
    let d = plan.in_dims;
    if my_share.len() != d.numel() || my_share.p != p {
        return Err(Error::Mismatch("tconv input share shape".into()));
    }
    let out_dims = Dims {
        c: plan.out_c,
        d: plan.od,
        h: plan.oh,
        w: plan.ow,
    };
    let mut out = ShareVector::zeros(p, out_dims.numel());
    let read = |slab: (usize, usize), z: usize, y: usize, x: usize| {
        ((z - slab.0) * plan.oh + y) * plan.ow + x
    };

    match role {
        Role::Alice => {
            let sk = sk.ok_or_else(|| Error::Params("tconv: missing secret key".into()))?;
            for &slab in &plan.slabs {
                for i in 0..d.c {
                    let block = plan.gather_slab(slab, channel(my_share, d.vol(), i));
                    let ct = enc(sk, &PlainVector::coeffs(block), rng)?;
                    send_ct(link, params, &ct)?;
                }
            }
            for &slab in &plan.slabs {
                for o in 0..plan.out_c {
                    let ct = recv_ct(link, params)?;
                    let coeffs = dec(sk, &ct).values;
                    for z in slab.0..slab.1 {
                        for y in 0..plan.oh {
                            for x in 0..plan.ow {
                                out.values[raster_index(out_dims, o, z, y, x)] =
                                    coeffs[read(slab, z, y, x)];
                            }
                        }
                    }
                }
            }
        }
        Role::Bob => {
            let w = weights.ok_or_else(|| Error::Params("tconv: missing weights".into()))?;
            if w.out_c != plan.out_c || w.in_c != d.c {
                return Err(Error::Mismatch("tconv weight shape".into()));
            }
            let mut in_cts: Vec<Vec<Ciphertext>> = Vec::with_capacity(plan.slabs.len());
            for &slab in &plan.slabs {
                let mut cts = Vec::with_capacity(d.c);
                for i in 0..d.c {
                    let ct = recv_ct(link, params)?;
                    let block = plan.gather_slab(slab, channel(my_share, d.vol(), i));
                    cts.push(add_plain(params, &ct, &PlainVector::coeffs(block))?);
                }
                in_cts.push(cts);
            }
            for (&slab, cts) in plan.slabs.iter().zip(&in_cts) {
                for o in 0..plan.out_c {
                    let mut acc: Option<Ciphertext> = None;
                    for (i, ct) in cts.iter().enumerate() {
                        let ws = tconv_weight_slots(params, plan, w, o, i);
                        let term = mul_plain(params, ct, &ws)?;
                        acc = Some(match acc {
                            None => term,
                            Some(a) => add(params, &a, &term)?,
                        });
                    }
                    let mask: Vec<u64> = (0..params.ring.n).map(|_| rng.gen_range(0..p)).collect();
                    let masked =
                        sub_plain(params, &acc.unwrap(), &PlainVector::coeffs(mask.clone()))?;
                    send_ct(link, params, &masked)?;
                    for z in slab.0..slab.1 {
                        for y in 0..plan.oh {
                            for x in 0..plan.ow {
                                out.values[raster_index(out_dims, o, z, y, x)] =
                                    mask[read(slab, z, y, x)];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}
