//! Packed additively homomorphic encryption over RLWE.
//!
//! A BFV-shaped symmetric scheme: n plaintext residues mod p are batched into
//! the slots of one ciphertext, and the scheme supports slot-wise addition
//! and subtraction, multiplication by a plaintext vector, and cyclic rotation
//! of the slot vector.
//!
//! Batching gives the slots a 2×(n/2) hypercube structure: the polynomial
//! automorphism x → x^{3^k} rotates both rows left by k and x → x^{-1} swaps
//! the rows. The flat cyclic rotation exposed by [`rot`] is assembled from
//! those automorphisms plus slot masking, so a single rotation costs two
//! key switches and two plaintext products.
//!
//! The slot encoder is the inverse negacyclic NTT of [`crate::ring`], which
//! makes "encrypt the frequency-domain image of u" the same ciphertext as
//! "coefficient-encode u" — both encodings are provided and tested equal.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::ring::{add_mod, mul_mod, sub_mod, RingParams};

/// Worst-case magnitude of a fresh encryption error coefficient (centered
/// binomial with 8 coin pairs).
pub const ERR_BOUND: u64 = 8;
const FRESH_NOISE_LOG2: f64 = 3.0; // log2(ERR_BOUND)

/// Ciphertext serialization magic.
pub const CT_MAGIC: &[u8; 4] = b"BUN1";

#[derive(Clone)]
pub struct PaheParams {
    pub ring: Arc<RingParams>,
    /// Key-switching digit decomposition base, as a bit count.
    pub decomp_base_bits: u32,
}

impl PaheParams {
    pub fn new(ring: Arc<RingParams>) -> Self {
        PaheParams {
            ring,
            decomp_base_bits: 15,
        }
    }

    pub fn default_params() -> Self {
        Self::new(Arc::new(RingParams::default_params()))
    }

    fn dnum(&self) -> usize {
        let qbits = 64 - self.ring.q.leading_zeros();
        qbits.div_ceil(self.decomp_base_bits) as usize
    }

    fn delta(&self) -> u64 {
        self.ring.q / self.ring.p
    }

    /// log2 of the largest noise magnitude that still decrypts correctly.
    fn noise_ceiling_log2(&self) -> f64 {
        (self.delta() as f64 / 2.0).log2() - 1.0
    }

    fn ks_noise(&self) -> f64 {
        // dnum · n · B · err  (worst case for digit-decomposed key switching)
        let b = (1u64 << self.decomp_base_bits) as f64;
        (self.dnum() as f64 * self.ring.n as f64 * b * ERR_BOUND as f64).log2()
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Encoding {
    /// values are the slot contents (evaluation side of the plaintext poly).
    Slot,
    /// values are the plaintext polynomial coefficients.
    Coeff,
}

/// An n-slot plaintext vector mod p.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct PlainVector {
    pub values: Vec<u64>,
    pub encoding: Encoding,
}

impl PlainVector {
    pub fn slots(values: Vec<u64>) -> Self {
        PlainVector {
            values,
            encoding: Encoding::Slot,
        }
    }

    pub fn coeffs(values: Vec<u64>) -> Self {
        PlainVector {
            values,
            encoding: Encoding::Coeff,
        }
    }

    /// The plaintext polynomial (coefficient form) for this vector.
    pub fn to_poly(&self, params: &PaheParams) -> Vec<u64> {
        match self.encoding {
            Encoding::Coeff => self.values.clone(),
            Encoding::Slot => {
                let mut v = self.values.clone();
                params.ring.tables_p.inverse_negacyclic(&mut v);
                v
            }
        }
    }

    /// Slot contents of this vector.
    pub fn to_slots(&self, params: &PaheParams) -> Vec<u64> {
        match self.encoding {
            Encoding::Slot => self.values.clone(),
            Encoding::Coeff => {
                let mut v = self.values.clone();
                params.ring.tables_p.forward_negacyclic(&mut v);
                v
            }
        }
    }
}

pub struct SecretKey {
    pub params: PaheParams,
    s: Vec<u64>,
    s_ntt: Vec<u64>,
}

struct KsKey {
    /// Automorphism exponent g in (Z/2n)*: this key re-encrypts s(x^g) to s.
    #[allow(dead_code)]
    g: u64,
    ks0_ntt: Vec<Vec<u64>>,
    ks1_ntt: Vec<Vec<u64>>,
}

/// Key-switching material for the rotation steps declared at keygen.
pub struct RotationKeySet {
    n: usize,
    steps: BTreeSet<usize>,
    keys: BTreeMap<u64, KsKey>,
}

#[derive(Clone, Debug)]
pub struct Ciphertext {
    pub c0: Vec<u64>,
    pub c1: Vec<u64>,
    pub encoding: Encoding,
    /// Advisory worst-case noise estimate, log2 of the coefficient bound.
    pub noise_log2: f64,
}

impl Ciphertext {
    /// Remaining decryption margin in bits (advisory; negative does not imply
    /// failure, positive guarantees correct decryption).
    pub fn noise_budget_bits(&self, params: &PaheParams) -> f64 {
        params.noise_ceiling_log2() - self.noise_log2
    }
}

fn sample_ternary(rng: &mut impl RngCore, q: u64, n: usize) -> Vec<u64> {
    (0..n)
        .map(|_| match rng.gen_range(0u8..3) {
            0 => 0,
            1 => 1,
            _ => q - 1,
        })
        .collect()
}

fn sample_uniform(rng: &mut impl RngCore, q: u64, n: usize) -> Vec<u64> {
    (0..n).map(|_| rng.gen_range(0..q)).collect()
}

fn sample_err(rng: &mut impl RngCore, q: u64, n: usize) -> Vec<u64> {
    (0..n)
        .map(|_| {
            let bits: u16 = rng.gen();
            let pos = (bits & 0xff).count_ones() as i64;
            let neg = (bits >> 8).count_ones() as i64;
            let e = pos - neg;
            if e >= 0 {
                e as u64
            } else {
                q - (-e) as u64
            }
        })
        .collect()
}

fn poly_add(a: &[u64], b: &[u64], q: u64) -> Vec<u64> {
    a.iter().zip(b).map(|(&x, &y)| add_mod(x, y, q)).collect()
}

fn poly_sub(a: &[u64], b: &[u64], q: u64) -> Vec<u64> {
    a.iter().zip(b).map(|(&x, &y)| sub_mod(x, y, q)).collect()
}

/// Apply x → x^g to a polynomial mod x^n + 1 (coefficient permutation with
/// sign flips).
fn galois(poly: &[u64], g: u64, q: u64) -> Vec<u64> {
    let n = poly.len();
    let two_n = 2 * n as u64;
    let mut out = vec![0u64; n];
    for (i, &c) in poly.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let e = (i as u64 * g) % two_n;
        if e < n as u64 {
            out[e as usize] = c;
        } else {
            out[(e - n as u64) as usize] = q - c;
        }
    }
    out
}

impl SecretKey {
    fn mul_by_s(&self, a: &[u64]) -> Vec<u64> {
        let t = &self.params.ring.tables_q;
        let mut x = a.to_vec();
        t.forward_negacyclic(&mut x);
        for (xi, si) in x.iter_mut().zip(&self.s_ntt) {
            *xi = mul_mod(*xi, *si, t.modulus);
        }
        t.inverse_negacyclic(&mut x);
        x
    }
}

/// Generate the secret key and the key-switching keys for the declared
/// rotation steps. Deterministic for a fixed seed.
pub fn keygen(
    params: &PaheParams,
    rotation_steps: &BTreeSet<usize>,
    seed: u64,
) -> (SecretKey, RotationKeySet) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let ring = &params.ring;
    let n = ring.n;
    let q = ring.q;
    let s = sample_ternary(&mut rng, q, n);
    let mut s_ntt = s.clone();
    ring.tables_q.forward_negacyclic(&mut s_ntt);
    let sk = SecretKey {
        params: params.clone(),
        s,
        s_ntt,
    };

    let mut exps = BTreeSet::new();
    let half = n / 2;
    let two_n = 2 * n as u64;
    for &k in rotation_steps {
        let k = k % n;
        let kk = k % half;
        if kk != 0 {
            let g = crate::ring::pow_mod(3, kk as u64, two_n);
            exps.insert(g);
            exps.insert(two_n - g);
        }
        if k >= half {
            exps.insert(two_n - 1);
        }
    }

    let mut keys = BTreeMap::new();
    for g in exps {
        keys.insert(g, make_ks_key(&sk, g, &mut rng));
    }
    (
        sk,
        RotationKeySet {
            n,
            steps: rotation_steps.iter().map(|&k| k % n).collect(),
            keys,
        },
    )
}

fn make_ks_key(sk: &SecretKey, g: u64, rng: &mut impl RngCore) -> KsKey {
    let params = &sk.params;
    let ring = &params.ring;
    let (n, q) = (ring.n, ring.q);
    let tau_s = galois(&sk.s, g, q);
    let dnum = params.dnum();
    let base = 1u128 << params.decomp_base_bits;
    let mut ks0 = Vec::with_capacity(dnum);
    let mut ks1 = Vec::with_capacity(dnum);
    let mut pow = 1u128;
    for _ in 0..dnum {
        let a = sample_uniform(rng, q, n);
        let e = sample_err(rng, q, n);
        let a_s = sk.mul_by_s(&a);
        // ks0 = B^i·τ(s) - a·s + e
        let scale = (pow % q as u128) as u64;
        let mut k0: Vec<u64> = tau_s.iter().map(|&c| mul_mod(c, scale, q)).collect();
        k0 = poly_sub(&k0, &a_s, q);
        k0 = poly_add(&k0, &e, q);
        ring.tables_q.forward_negacyclic(&mut k0);
        let mut k1 = a;
        ring.tables_q.forward_negacyclic(&mut k1);
        ks0.push(k0);
        ks1.push(k1);
        pow *= base;
    }
    KsKey {
        g,
        ks0_ntt: ks0,
        ks1_ntt: ks1,
    }
}

pub fn enc(sk: &SecretKey, v: &PlainVector, rng: &mut impl RngCore) -> Result<Ciphertext> {
    let params = &sk.params;
    let ring = &params.ring;
    let (n, q) = (ring.n, ring.q);
    if v.values.len() != n {
        return Err(Error::Mismatch(format!(
            "plaintext has {} slots, expected {}",
            v.values.len(),
            n
        )));
    }
    let m = v.to_poly(params);
    let delta = params.delta();
    let a = sample_uniform(rng, q, n);
    let e = sample_err(rng, q, n);
    let a_s = sk.mul_by_s(&a);
    let mut c0: Vec<u64> = m.iter().map(|&c| mul_mod(c, delta, q)).collect();
    c0 = poly_sub(&c0, &a_s, q);
    c0 = poly_add(&c0, &e, q);
    Ok(Ciphertext {
        c0,
        c1: a,
        encoding: v.encoding,
        noise_log2: FRESH_NOISE_LOG2,
    })
}

pub fn dec(sk: &SecretKey, c: &Ciphertext) -> PlainVector {
    let params = &sk.params;
    let ring = &params.ring;
    let (q, p) = (ring.q, ring.p);
    let c1_s = sk.mul_by_s(&c.c1);
    let t = poly_add(&c.c0, &c1_s, q);
    let m: Vec<u64> = t
        .iter()
        .map(|&x| {
            // round(x·p/q) mod p
            let num = x as u128 * p as u128 + (q as u128 / 2);
            ((num / q as u128) % p as u128) as u64
        })
        .collect();
    match c.encoding {
        Encoding::Coeff => PlainVector::coeffs(m),
        Encoding::Slot => {
            let mut v = m;
            ring.tables_p.forward_negacyclic(&mut v);
            PlainVector::slots(v)
        }
    }
}

fn check_pair(a: &Ciphertext, b: &Ciphertext) -> Result<()> {
    if a.c0.len() != b.c0.len() || a.encoding != b.encoding {
        return Err(Error::Mismatch(
            "ciphertext parameter or encoding mismatch".into(),
        ));
    }
    Ok(())
}

fn add_noise(params: &PaheParams, a: f64, b: f64) -> f64 {
    let r_q = (params.ring.q % params.ring.p) as f64;
    (a.exp2() + b.exp2() + r_q).log2()
}

pub fn add(params: &PaheParams, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
    check_pair(a, b)?;
    let q = params.ring.q;
    Ok(Ciphertext {
        c0: poly_add(&a.c0, &b.c0, q),
        c1: poly_add(&a.c1, &b.c1, q),
        encoding: a.encoding,
        noise_log2: add_noise(params, a.noise_log2, b.noise_log2),
    })
}

pub fn sub(params: &PaheParams, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
    check_pair(a, b)?;
    let q = params.ring.q;
    Ok(Ciphertext {
        c0: poly_sub(&a.c0, &b.c0, q),
        c1: poly_sub(&a.c1, &b.c1, q),
        encoding: a.encoding,
        noise_log2: add_noise(params, a.noise_log2, b.noise_log2),
    })
}

fn plain_delta_poly(params: &PaheParams, v: &PlainVector) -> Result<Vec<u64>> {
    if v.values.len() != params.ring.n {
        return Err(Error::Mismatch("plaintext length mismatch".into()));
    }
    let delta = params.delta();
    let q = params.ring.q;
    Ok(v.to_poly(params)
        .iter()
        .map(|&c| mul_mod(c, delta, q))
        .collect())
}

/// c ⊞ v for a plaintext vector (encoding must match the ciphertext's view
/// of its slots: a Slot vector adds slot-wise, a Coeff vector adds to the
/// plaintext polynomial — the two agree through the encoder).
pub fn add_plain(params: &PaheParams, c: &Ciphertext, v: &PlainVector) -> Result<Ciphertext> {
    let dm = plain_delta_poly(params, v)?;
    Ok(Ciphertext {
        c0: poly_add(&c.c0, &dm, params.ring.q),
        c1: c.c1.clone(),
        encoding: c.encoding,
        noise_log2: add_noise(params, c.noise_log2, f64::NEG_INFINITY),
    })
}

pub fn sub_plain(params: &PaheParams, c: &Ciphertext, v: &PlainVector) -> Result<Ciphertext> {
    let dm = plain_delta_poly(params, v)?;
    Ok(Ciphertext {
        c0: poly_sub(&c.c0, &dm, params.ring.q),
        c1: c.c1.clone(),
        encoding: c.encoding,
        noise_log2: add_noise(params, c.noise_log2, f64::NEG_INFINITY),
    })
}

/// Slot-wise product with a plaintext vector (⊠). `w` must be slot-encoded;
/// the multiplier polynomial is its centered lift, so small plaintext
/// coefficients (e.g. quantized filter taps encoded through the shortcut)
/// cost correspondingly little noise.
pub fn mul_plain(params: &PaheParams, c: &Ciphertext, w: &PlainVector) -> Result<Ciphertext> {
    if w.encoding != Encoding::Slot {
        return Err(Error::Mismatch("mul_plain expects a slot-encoded vector".into()));
    }
    if w.values.len() != params.ring.n {
        return Err(Error::Mismatch("plaintext length mismatch".into()));
    }
    let ring = &params.ring;
    let (q, p) = (ring.q, ring.p);
    let w_poly_p = w.to_poly(params);
    // centered lift into Z_q and l1 norm for the noise bound
    let mut l1: f64 = 0.0;
    let w_poly_q: Vec<u64> = w_poly_p
        .iter()
        .map(|&x| {
            if x > p / 2 {
                l1 += (p - x) as f64;
                q - (p - x)
            } else {
                l1 += x as f64;
                x
            }
        })
        .collect();
    let mut w_ntt = w_poly_q;
    ring.tables_q.forward_negacyclic(&mut w_ntt);
    let mul = |poly: &[u64]| -> Vec<u64> {
        let mut x = poly.to_vec();
        ring.tables_q.forward_negacyclic(&mut x);
        for (xi, wi) in x.iter_mut().zip(&w_ntt) {
            *xi = mul_mod(*xi, *wi, q);
        }
        ring.tables_q.inverse_negacyclic(&mut x);
        x
    };
    let l1 = l1.max(1.0);
    Ok(Ciphertext {
        c0: mul(&c.c0),
        c1: mul(&c.c1),
        encoding: c.encoding,
        noise_log2: l1.log2() + (c.noise_log2.exp2() + p as f64).log2(),
    })
}

fn key_switch(params: &PaheParams, c0: &[u64], c1: &[u64], key: &KsKey, noise: f64) -> Ciphertext {
    let ring = &params.ring;
    let (n, q) = (ring.n, ring.q);
    let t = &ring.tables_q;
    let dnum = params.dnum();
    let mask = (1u64 << params.decomp_base_bits) - 1;
    let mut acc0 = vec![0u64; n];
    let mut acc1 = vec![0u64; n];
    for i in 0..dnum {
        let shift = i as u32 * params.decomp_base_bits;
        let mut digit: Vec<u64> = c1.iter().map(|&x| (x >> shift) & mask).collect();
        t.forward_negacyclic(&mut digit);
        for j in 0..n {
            acc0[j] = add_mod(acc0[j], mul_mod(digit[j], key.ks0_ntt[i][j], q), q);
            acc1[j] = add_mod(acc1[j], mul_mod(digit[j], key.ks1_ntt[i][j], q), q);
        }
    }
    t.inverse_negacyclic(&mut acc0);
    t.inverse_negacyclic(&mut acc1);
    Ciphertext {
        c0: poly_add(c0, &acc0, q),
        c1: acc1,
        encoding: Encoding::Slot,
        noise_log2: (noise.exp2() + params.ks_noise().exp2()).log2(),
    }
}

/// Apply the automorphism x → x^g to a ciphertext and switch back to the
/// original key.
fn apply_auto(
    params: &PaheParams,
    keys: &RotationKeySet,
    c: &Ciphertext,
    g: u64,
    step_for_error: usize,
) -> Result<Ciphertext> {
    let key = keys
        .keys
        .get(&g)
        .ok_or(Error::MissingRotationKey(step_for_error))?;
    let q = params.ring.q;
    let t0 = galois(&c.c0, g, q);
    let t1 = galois(&c.c1, g, q);
    Ok(key_switch(params, &t0, &t1, key, c.noise_log2))
}

/// Binary slot mask with ones at within-row positions [lo, hi) of both rows.
fn row_mask(params: &PaheParams, lo: usize, hi: usize) -> PlainVector {
    let n = params.ring.n;
    let half = n / 2;
    let mut v = vec![0u64; n];
    for j in lo..hi {
        v[j] = 1;
        v[half + j] = 1;
    }
    PlainVector::slots(v)
}

/// Cyclic left rotation of the flat n-slot vector by k:
/// dec(rot(enc(x), k)) = (x_k, ..., x_{n-1}, x_0, ..., x_{k-1}).
pub fn rot(
    params: &PaheParams,
    keys: &RotationKeySet,
    c: &Ciphertext,
    k: usize,
) -> Result<Ciphertext> {
    if c.encoding != Encoding::Slot {
        return Err(Error::Mismatch("rot requires a slot-encoded ciphertext".into()));
    }
    let n = params.ring.n;
    let k = k % n;
    if k == 0 {
        return Ok(c.clone());
    }
    if keys.n != n || !keys.steps.contains(&k) {
        return Err(Error::MissingRotationKey(k));
    }
    let half = n / 2;
    let two_n = 2 * n as u64;
    let kk = k % half;
    let mut cur = if kk == 0 {
        c.clone()
    } else {
        let g = crate::ring::pow_mod(3, kk as u64, two_n);
        // pre-masked branches: within-row sources [kk, half) stay in-row,
        // sources [0, kk) come from the other row
        let ma = mul_plain(params, c, &row_mask(params, kk, half))?;
        let mb = mul_plain(params, c, &row_mask(params, 0, kk))?;
        let ba = apply_auto(params, keys, &ma, g, k)?;
        let bb = apply_auto(params, keys, &mb, two_n - g, k)?;
        add(params, &ba, &bb)?
    };
    if k >= half {
        cur = apply_auto(params, keys, &cur, two_n - 1, k)?;
    }
    Ok(cur)
}

// --- serialization: {magic, n, q, p, layout tag} then c0, c1 as LE words ---

pub fn ciphertext_to_bytes(params: &PaheParams, c: &Ciphertext) -> Vec<u8> {
    let n = params.ring.n;
    let mut out = Vec::with_capacity(25 + 16 * n);
    out.extend_from_slice(CT_MAGIC);
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&params.ring.q.to_le_bytes());
    out.extend_from_slice(&params.ring.p.to_le_bytes());
    out.push(match c.encoding {
        Encoding::Slot => 0,
        Encoding::Coeff => 1,
    });
    for &x in c.c0.iter().chain(c.c1.iter()) {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn ciphertext_from_bytes(params: &PaheParams, bytes: &[u8]) -> Result<Ciphertext> {
    let n = params.ring.n;
    if bytes.len() != 25 + 16 * n {
        return Err(Error::Format(format!("ciphertext blob has {} bytes", bytes.len())));
    }
    if &bytes[0..4] != CT_MAGIC {
        return Err(Error::Format("bad ciphertext magic".into()));
    }
    let hdr_n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let hdr_q = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let hdr_p = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    if hdr_n != n || hdr_q != params.ring.q || hdr_p != params.ring.p {
        return Err(Error::Format("ciphertext parameter mismatch".into()));
    }
    let encoding = match bytes[24] {
        0 => Encoding::Slot,
        1 => Encoding::Coeff,
        t => return Err(Error::Format(format!("unknown layout tag {t}"))),
    };
    let mut words = bytes[25..]
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()));
    let c0: Vec<u64> = words.by_ref().take(n).collect();
    let c1: Vec<u64> = words.collect();
    for &x in c0.iter().chain(c1.iter()) {
        if x >= params.ring.q {
            return Err(Error::Format("ciphertext word out of range".into()));
        }
    }
    Ok(Ciphertext {
        c0,
        c1,
        encoding,
        // ciphertexts on the wire are fresh encryptions
        noise_log2: FRESH_NOISE_LOG2,
    })
}

// --- rotation key set serialization: sent once from the key holder to the
// computing party at session setup ---

pub const RK_MAGIC: &[u8; 4] = b"BUNK";

pub fn rotation_keys_to_bytes(params: &PaheParams, keys: &RotationKeySet) -> Vec<u8> {
    let n = params.ring.n;
    let mut out = Vec::new();
    out.extend_from_slice(RK_MAGIC);
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&(keys.steps.len() as u32).to_le_bytes());
    for &s in &keys.steps {
        out.extend_from_slice(&(s as u32).to_le_bytes());
    }
    out.extend_from_slice(&(keys.keys.len() as u32).to_le_bytes());
    for (&g, key) in &keys.keys {
        out.extend_from_slice(&g.to_le_bytes());
        out.extend_from_slice(&(key.ks0_ntt.len() as u32).to_le_bytes());
        for poly in key.ks0_ntt.iter().chain(key.ks1_ntt.iter()) {
            for &x in poly {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
    }
    out
}

pub fn rotation_keys_from_bytes(params: &PaheParams, bytes: &[u8]) -> Result<RotationKeySet> {
    let n = params.ring.n;
    let fail = || Error::Format("malformed rotation key blob".into());
    if bytes.len() < 12 || &bytes[0..4] != RK_MAGIC {
        return Err(fail());
    }
    if u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize != n {
        return Err(Error::Format("rotation key ring-size mismatch".into()));
    }
    let mut pos = 8usize;
    let mut take = |len: usize| -> Result<&[u8]> {
        let end = pos.checked_add(len).ok_or_else(fail)?;
        let s = bytes.get(pos..end).ok_or_else(fail)?;
        pos = end;
        Ok(s)
    };
    let n_steps = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let mut steps = BTreeSet::new();
    for _ in 0..n_steps {
        steps.insert(u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize);
    }
    let n_keys = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let mut keys = BTreeMap::new();
    for _ in 0..n_keys {
        let g = u64::from_le_bytes(take(8)?.try_into().unwrap());
        let dnum = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let mut polys = Vec::with_capacity(2 * dnum);
        for _ in 0..2 * dnum {
            let raw = take(8 * n)?;
            let poly: Vec<u64> = raw
                .chunks_exact(8)
                .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            if poly.iter().any(|&x| x >= params.ring.q) {
                return Err(Error::Format("rotation key word out of range".into()));
            }
            polys.push(poly);
        }
        let ks1_ntt = polys.split_off(dnum);
        keys.insert(
            g,
            KsKey {
                g,
                ks0_ntt: polys,
                ks1_ntt,
            },
        );
    }
    if pos != bytes.len() {
        return Err(fail());
    }
    Ok(RotationKeySet { n, steps, keys })
}
