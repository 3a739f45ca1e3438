//! The application circuits: ReLU (with fused right-shift requantization),
//! max-pooling, argmax, and exact truncation. All operate on additively
//! shared values mod p, reconstruct inside the circuit, and reshare the
//! result against a fresh mask supplied by the evaluator, so neither party
//! sees a plaintext intermediate.
//!
//! Input layout (LSB-first, k bits per value):
//! * Alice: her shares of all values, in order;
//! * Bob: his shares of all values, then — for resharing circuits — one
//!   fresh mask per output value. Bob's output share is the mask itself,
//!   so only Alice receives circuit outputs.
//!
//! Signed comparison uses the order-preserving map u = (t + p - h) mod p
//! with h = (p+1)/2: it sends the negative residues below the non-negative
//! ones while keeping each range in value order.

use crate::gc::circuit::{Builder, Circuit, W};

fn bit_width(p: u64) -> usize {
    (64 - p.leading_zeros()) as usize
}

fn chunk(bits: &[W], k: usize, i: usize) -> &[W] {
    &bits[i * k..(i + 1) * k]
}

/// t >= h, i.e. the shared value is negative under the centered lift.
fn is_negative(b: &mut Builder, t: &[W], p: u64) -> W {
    let h = b.const_bits(p / 2 + 1, t.len());
    b.geq(t, &h)
}

/// Map to the comparison domain: u = (t + (p - h)) mod p.
fn cmp_key(b: &mut Builder, t: &[W], p: u64) -> Vec<W> {
    let shift = b.const_bits(p - (p / 2 + 1), t.len());
    b.mod_add(t, &shift, p)
}

/// max(v, 0) >> f on n shared values, resharing the result.
pub fn relu_reshare(p: u64, f: u32, n: usize) -> Circuit {
    let k = bit_width(p);
    let mut b = Builder::new();
    let sa = b.inputs_a(n * k);
    let sb = b.inputs_b(n * k);
    let masks = b.inputs_b(n * k);
    let mut outs = Vec::with_capacity(n * k);
    for i in 0..n {
        let t = b.mod_add(chunk(&sa, k, i), chunk(&sb, k, i), p);
        let neg = is_negative(&mut b, &t, p);
        let zero = b.const_bits(0, k);
        let relu = b.mux(neg, &zero, &t);
        let mut shifted: Vec<W> = relu[f as usize..].to_vec();
        shifted.resize(k, W::Const(false));
        let z = b.mod_sub(&shifted, chunk(&masks, k, i), p);
        outs.extend(z);
    }
    b.finish(outs)
}

/// Per-window maximum over `window` shared values (signed order), reshared.
/// Inputs are grouped window-major; ties keep the earlier element.
pub fn maxpool_reshare(p: u64, window: usize, n_windows: usize) -> Circuit {
    assert!(window >= 2);
    let k = bit_width(p);
    let mut b = Builder::new();
    let sa = b.inputs_a(n_windows * window * k);
    let sb = b.inputs_b(n_windows * window * k);
    let masks = b.inputs_b(n_windows * k);
    let mut outs = Vec::with_capacity(n_windows * k);
    for w in 0..n_windows {
        let elem = |i: usize| w * window + i;
        let t0 = b.mod_add(chunk(&sa, k, elem(0)), chunk(&sb, k, elem(0)), p);
        let mut best_u = cmp_key(&mut b, &t0, p);
        let mut best_t = t0;
        for i in 1..window {
            let t = b.mod_add(chunk(&sa, k, elem(i)), chunk(&sb, k, elem(i)), p);
            let u = cmp_key(&mut b, &t, p);
            // strict: only a larger value displaces the running maximum
            let ge = b.geq(&best_u, &u);
            let gt = b.not(ge);
            best_t = b.mux(gt, &t, &best_t);
            best_u = b.mux(gt, &u, &best_u);
        }
        let z = b.mod_sub(&best_t, chunk(&masks, k, w), p);
        outs.extend(z);
    }
    b.finish(outs)
}

/// Number of bits needed for a class index.
pub fn index_bits(classes: usize) -> usize {
    (usize::BITS - (classes - 1).leading_zeros()) as usize
}

/// Per-pixel argmax over `classes` shared logits. Outputs only the index
/// bits (no value, no reshare): the decode map stays with the garbler, so
/// the evaluator learns nothing and the garbler learns only the labels.
/// Ties resolve to the lowest index.
pub fn argmax_indices(p: u64, classes: usize, n_pixels: usize) -> Circuit {
    assert!(classes >= 2);
    let k = bit_width(p);
    let ib = index_bits(classes);
    let mut b = Builder::new();
    let sa = b.inputs_a(n_pixels * classes * k);
    let sb = b.inputs_b(n_pixels * classes * k);
    let mut outs = Vec::with_capacity(n_pixels * ib);
    for px in 0..n_pixels {
        let elem = |i: usize| px * classes + i;
        let t0 = b.mod_add(chunk(&sa, k, elem(0)), chunk(&sb, k, elem(0)), p);
        let mut best_u = cmp_key(&mut b, &t0, p);
        let mut best_idx = b.const_bits(0, ib);
        for i in 1..classes {
            let t = b.mod_add(chunk(&sa, k, elem(i)), chunk(&sb, k, elem(i)), p);
            let u = cmp_key(&mut b, &t, p);
            let ge = b.geq(&best_u, &u);
            let gt = b.not(ge);
            let idx = b.const_bits(i as u64, ib);
            best_idx = b.mux(gt, &idx, &best_idx);
            best_u = b.mux(gt, &u, &best_u);
        }
        outs.extend(best_idx);
    }
    b.finish(outs)
}

/// Exact arithmetic right shift by f of n shared signed values, reshared:
/// floor(v / 2^f) with no probabilistic error.
pub fn trunc_reshare(p: u64, f: u32, n: usize) -> Circuit {
    assert!(f >= 1);
    let k = bit_width(p);
    let mut b = Builder::new();
    let sa = b.inputs_a(n * k);
    let sb = b.inputs_b(n * k);
    let masks = b.inputs_b(n * k);
    let p_bits = b.const_bits(p, k);
    let mut outs = Vec::with_capacity(n * k);
    for i in 0..n {
        let t = b.mod_add(chunk(&sa, k, i), chunk(&sb, k, i), p);
        let neg = is_negative(&mut b, &t, p);
        // non-negative branch: plain shift
        let mut pos: Vec<W> = t[f as usize..].to_vec();
        pos.resize(k, W::Const(false));
        // negative branch: floor(-z / 2^f) = -(ceil(z / 2^f)), z = p - t
        let (z, _) = b.sub(&p_bits, &t);
        let mut z_ext = z.clone();
        z_ext.push(W::Const(false));
        let round = b.const_bits((1u64 << f) - 1, k + 1);
        let (zr, _) = b.add(&z_ext, &round);
        let mut zz: Vec<W> = zr[f as usize..].to_vec();
        zz.truncate(k);
        zz.resize(k, W::Const(false));
        let (neg_res, _) = b.sub(&p_bits, &zz);
        let res = b.mux(neg, &neg_res, &pos);
        let out = b.mod_sub(&res, chunk(&masks, k, i), p);
        outs.extend(out);
    }
    b.finish(outs)
}

/// Pack mod-p values into the LSB-first bit layout the circuits expect.
pub fn pack_values(values: &[u64], p: u64) -> Vec<bool> {
    let k = bit_width(p);
    let mut out = Vec::with_capacity(values.len() * k);
    for &v in values {
        for i in 0..k {
            out.push(v >> i & 1 == 1);
        }
    }
    out
}

/// Inverse of [`pack_values`].
pub fn unpack_values(bits: &[bool], p: u64) -> Vec<u64> {
    let k = bit_width(p);
    bits.chunks(k)
        .map(|c| {
            c.iter()
                .enumerate()
                .fold(0u64, |acc, (i, &b)| acc | (b as u64) << i)
        })
        .collect()
}

/// Unpack argmax outputs (index-width chunks).
pub fn unpack_indices(bits: &[bool], classes: usize) -> Vec<u64> {
    let ib = index_bits(classes);
    bits.chunks(ib)
        .map(|c| {
            c.iter()
                .enumerate()
                .fold(0u64, |acc, (i, &b)| acc | (b as u64) << i)
        })
        .collect()
}
