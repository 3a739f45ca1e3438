//! Additive secret sharing mod p with trusted-dealer correlated randomness.
//!
//! The dealer is a setup-phase role: from one seed it derives disjoint
//! pseudorandom streams for multiplication triples, square-activation
//! rerandomizers, truncation pairs, and oblivious-transfer correlations, and
//! commits to the seed so a post-hoc audit can check the tapes. Every
//! correlated item carries an id; the online protocols exchange ids and
//! abort on any disagreement or reuse.

use std::collections::BTreeSet;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ring::{add_mod, mul_mod, sub_mod};
use crate::runtime::{bytes_to_words, words_to_bytes, FrameType, Link};
use crate::Role;

/// One party's additive shares of a vector mod p.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ShareVector {
    pub p: u64,
    pub values: Vec<u64>,
}

impl ShareVector {
    pub fn zeros(p: u64, len: usize) -> Self {
        ShareVector {
            p,
            values: vec![0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn add(&self, other: &ShareVector) -> Result<ShareVector> {
        self.zip_with(other, |a, b, p| add_mod(a, b, p))
    }

    pub fn sub(&self, other: &ShareVector) -> Result<ShareVector> {
        self.zip_with(other, |a, b, p| sub_mod(a, b, p))
    }

    /// Multiply by a public scalar.
    pub fn scale(&self, k: u64) -> ShareVector {
        ShareVector {
            p: self.p,
            values: self.values.iter().map(|&v| mul_mod(v, k, self.p)).collect(),
        }
    }

    /// Add a public vector — only one party does this, the other leaves its
    /// share untouched, so the reconstruction shifts once.
    pub fn add_public(&self, v: &[u64]) -> Result<ShareVector> {
        if v.len() != self.len() {
            return Err(Error::Mismatch("public vector length".into()));
        }
        Ok(ShareVector {
            p: self.p,
            values: self
                .values
                .iter()
                .zip(v)
                .map(|(&a, &b)| add_mod(a, b % self.p, self.p))
                .collect(),
        })
    }

    fn zip_with(
        &self,
        other: &ShareVector,
        f: impl Fn(u64, u64, u64) -> u64,
    ) -> Result<ShareVector> {
        if self.p != other.p || self.len() != other.len() {
            return Err(Error::Mismatch("share vector shape".into()));
        }
        Ok(ShareVector {
            p: self.p,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b, self.p))
                .collect(),
        })
    }
}

/// Split a secret vector into two uniformly random additive shares.
pub fn share(rng: &mut impl RngCore, p: u64, secret: &[u64]) -> (ShareVector, ShareVector) {
    let a: Vec<u64> = secret.iter().map(|_| rng.gen_range(0..p)).collect();
    let b: Vec<u64> = secret
        .iter()
        .zip(&a)
        .map(|(&s, &ai)| sub_mod(s % p, ai, p))
        .collect();
    (
        ShareVector { p, values: a },
        ShareVector { p, values: b },
    )
}

/// Reconstruct the secret from both shares.
pub fn rec(a: &ShareVector, b: &ShareVector) -> Result<Vec<u64>> {
    Ok(a.add(b)?.values)
}

/// Centered lift of a mod-p residue to a signed integer in (-p/2, p/2].
pub fn to_signed(x: u64, p: u64) -> i64 {
    if x > p / 2 {
        -((p - x) as i64)
    } else {
        x as i64
    }
}

/// Inverse of [`to_signed`].
pub fn from_signed(x: i64, p: u64) -> u64 {
    x.rem_euclid(p as i64) as u64
}

// --- dealer ---

/// One party's half of a vector multiplication triple: c = a ∘ b.
#[derive(Clone, Debug)]
pub struct TripleShare {
    pub id: u64,
    pub a: ShareVector,
    pub b: ShareVector,
    pub c: ShareVector,
}

/// One party's half of a truncation pair: shares of a bounded mask r and of
/// r >> f, under a common id.
#[derive(Clone, Debug)]
pub struct TruncPairShare {
    pub id: u64,
    pub r: ShareVector,
    pub r_shifted: ShareVector,
}

/// Dealer-held correlation for one oblivious transfer of 128-bit strings:
/// Alice gets the pad pair, Bob gets a random choice bit and the pad it
/// selects.
#[derive(Clone, Copy, Debug)]
pub struct OtSenderPad {
    pub r0: u128,
    pub r1: u128,
}

#[derive(Clone, Copy, Debug)]
pub struct OtReceiverPad {
    pub c: bool,
    pub rc: u128,
}

/// Shift amount and bounds for probabilistic truncation. Values entering the
/// protocol must satisfy |v| < 2^gamma (signed); the opened value is masked
/// by rho random bits, giving rho - gamma_off - 1 bits of statistical hiding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TruncParams {
    pub f: u32,
    pub gamma_off: u32,
    pub rho: u32,
}

impl TruncParams {
    pub fn validate(&self, p: u64) -> Result<()> {
        if self.f == 0 || self.f > self.gamma_off {
            return Err(Error::Params("truncation shift out of range".into()));
        }
        let need = (1u128 << (self.gamma_off + 1)) + (1u128 << self.rho);
        if need > p as u128 {
            return Err(Error::Params(format!(
                "truncation range 2^{}+2^{} exceeds modulus {p}",
                self.gamma_off + 1,
                self.rho
            )));
        }
        Ok(())
    }
}

pub const DEALER_MAGIC: &[u8; 4] = b"BUND";

/// The trusted dealer. Deterministic in its seed; each kind of correlated
/// randomness is drawn from an independently keyed stream so consumption
/// order of one kind cannot shift another.
pub struct Dealer {
    seed: u64,
    triple_rng: ChaCha20Rng,
    square_rng: ChaCha20Rng,
    trunc_rng: ChaCha20Rng,
    ot_rng: ChaCha20Rng,
    pub triples_issued: u64,
    pub squares_issued: u64,
    pub truncs_issued: u64,
    pub ots_issued: u64,
}

fn kind_rng(seed: u64, kind: &str) -> ChaCha20Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(kind.as_bytes());
    ChaCha20Rng::from_seed(h.finalize().into())
}

impl Dealer {
    pub fn new(seed: u64) -> Self {
        Dealer {
            seed,
            triple_rng: kind_rng(seed, "triple"),
            square_rng: kind_rng(seed, "square"),
            trunc_rng: kind_rng(seed, "trunc"),
            ot_rng: kind_rng(seed, "ot"),
            triples_issued: 0,
            squares_issued: 0,
            truncs_issued: 0,
            ots_issued: 0,
        }
    }

    /// SHA-256 commitment to the dealer seed, exchanged at handshake.
    pub fn commitment(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(DEALER_MAGIC);
        h.update(self.seed.to_le_bytes());
        h.finalize().into()
    }

    pub fn triple(&mut self, p: u64, len: usize) -> (TripleShare, TripleShare) {
        let id = self.triples_issued;
        self.triples_issued += 1;
        let r = &mut self.triple_rng;
        let a: Vec<u64> = (0..len).map(|_| r.gen_range(0..p)).collect();
        let b: Vec<u64> = (0..len).map(|_| r.gen_range(0..p)).collect();
        let c: Vec<u64> = a.iter().zip(&b).map(|(&x, &y)| mul_mod(x, y, p)).collect();
        let (a0, a1) = share(r, p, &a);
        let (b0, b1) = share(r, p, &b);
        let (c0, c1) = share(r, p, &c);
        (
            TripleShare {
                id,
                a: a0,
                b: b0,
                c: c0,
            },
            TripleShare {
                id,
                a: a1,
                b: b1,
                c: c1,
            },
        )
    }

    /// Common rerandomizer for one square activation: both parties receive
    /// the same vector; Alice adds it to her share and Bob subtracts it,
    /// producing a second, independently random sharing of the same value.
    pub fn square_rerandomizer(&mut self, p: u64, len: usize) -> (u64, Vec<u64>) {
        let id = self.squares_issued;
        self.squares_issued += 1;
        let u: Vec<u64> = (0..len).map(|_| self.square_rng.gen_range(0..p)).collect();
        (id, u)
    }

    pub fn trunc_pair(
        &mut self,
        p: u64,
        tp: TruncParams,
        len: usize,
    ) -> Result<(TruncPairShare, TruncPairShare)> {
        tp.validate(p)?;
        let id = self.truncs_issued;
        self.truncs_issued += 1;
        let rng = &mut self.trunc_rng;
        let r: Vec<u64> = (0..len).map(|_| rng.gen_range(0..1u64 << tp.rho)).collect();
        let r_shifted: Vec<u64> = r.iter().map(|&x| x >> tp.f).collect();
        let (r0, r1) = share(rng, p, &r);
        let (s0, s1) = share(rng, p, &r_shifted);
        Ok((
            TruncPairShare {
                id,
                r: r0,
                r_shifted: s0,
            },
            TruncPairShare {
                id,
                r: r1,
                r_shifted: s1,
            },
        ))
    }

    pub fn ot_pad(&mut self) -> (OtSenderPad, OtReceiverPad) {
        self.ots_issued += 1;
        let r0: u128 = ((self.ot_rng.next_u64() as u128) << 64) | self.ot_rng.next_u64() as u128;
        let r1: u128 = ((self.ot_rng.next_u64() as u128) << 64) | self.ot_rng.next_u64() as u128;
        let c = self.ot_rng.gen_bool(0.5);
        (
            OtSenderPad { r0, r1 },
            OtReceiverPad {
                c,
                rc: if c { r1 } else { r0 },
            },
        )
    }

    /// Tape header: magic, seed commitment, issue counters. The seed itself
    /// stays with the dealer.
    pub fn tape_header(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 32 + 32);
        out.extend_from_slice(DEALER_MAGIC);
        out.extend_from_slice(&self.commitment());
        for c in [
            self.triples_issued,
            self.squares_issued,
            self.truncs_issued,
            self.ots_issued,
        ] {
            out.extend_from_slice(&c.to_le_bytes());
        }
        out
    }
}

/// Parse a tape header, returning (commitment, [triples, squares, truncs, ots]).
pub fn parse_tape_header(bytes: &[u8]) -> Result<([u8; 32], [u64; 4])> {
    if bytes.len() != 68 || &bytes[0..4] != DEALER_MAGIC {
        return Err(Error::Format("bad dealer tape header".into()));
    }
    let commitment: [u8; 32] = bytes[4..36].try_into().unwrap();
    let mut counters = [0u64; 4];
    for (i, c) in counters.iter_mut().enumerate() {
        *c = u64::from_le_bytes(bytes[36 + 8 * i..44 + 8 * i].try_into().unwrap());
    }
    Ok((commitment, counters))
}

// --- online protocols ---

/// Tracks consumed correlation ids per kind; feeding the same id twice is a
/// protocol violation and aborts.
#[derive(Default)]
pub struct UsedIds {
    triples: BTreeSet<u64>,
    squares: BTreeSet<u64>,
    truncs: BTreeSet<u64>,
}

impl UsedIds {
    pub fn new() -> Self {
        Self::default()
    }

    fn claim(set: &mut BTreeSet<u64>, id: u64, kind: &str) -> Result<()> {
        if !set.insert(id) {
            return Err(Error::Correlation(format!("{kind} {id} already consumed")));
        }
        Ok(())
    }
}

/// Open a shared vector: both parties send their share and add the peer's.
pub fn open(link: &mut Link, x: &ShareVector) -> Result<Vec<u64>> {
    link.send(FrameType::Opening, &words_to_bytes(&x.values))?;
    let theirs = bytes_to_words(&link.recv(FrameType::Opening)?)?;
    if theirs.len() != x.len() {
        return Err(Error::Abort("opening length mismatch".into()));
    }
    if theirs.iter().any(|&v| v >= x.p) {
        return Err(Error::Abort("opening value out of range".into()));
    }
    Ok(x.values
        .iter()
        .zip(&theirs)
        .map(|(&a, &b)| add_mod(a, b, x.p))
        .collect())
}

fn encode_opening(id: u64, d: &[u64], e: &[u64]) -> Vec<u8> {
    let mut payload = Vec::with_capacity(8 + 16 * d.len());
    payload.extend_from_slice(&id.to_le_bytes());
    payload.extend_from_slice(&words_to_bytes(d));
    payload.extend_from_slice(&words_to_bytes(e));
    payload
}

fn decode_opening(bytes: &[u8], len: usize) -> Result<(u64, Vec<u64>, Vec<u64>)> {
    if bytes.len() != 8 + 16 * len {
        return Err(Error::Abort("malformed triple opening".into()));
    }
    let id = u64::from_le_bytes(bytes[0..8].try_into().unwrap());
    let d = bytes_to_words(&bytes[8..8 + 8 * len])?;
    let e = bytes_to_words(&bytes[8 + 8 * len..])?;
    Ok((id, d, e))
}

/// Element-wise product of two shared vectors using one multiplication
/// triple. Each party masks its inputs with its triple shares, the masked
/// differences are opened, and the product shares are assembled locally;
/// the opened values are uniform, so neither party learns anything about
/// x or y.
pub fn beaver_hadamard(
    role: Role,
    link: &mut Link,
    x: &ShareVector,
    y: &ShareVector,
    triple: &TripleShare,
    used: &mut UsedIds,
) -> Result<ShareVector> {
    let p = x.p;
    if y.p != p || triple.a.p != p || x.len() != y.len() || triple.a.len() != x.len() {
        return Err(Error::Mismatch("beaver input shape".into()));
    }
    UsedIds::claim(&mut used.triples, triple.id, "triple")?;
    let d_share = x.sub(&triple.a)?;
    let e_share = y.sub(&triple.b)?;
    link.send(
        FrameType::Opening,
        &encode_opening(triple.id, &d_share.values, &e_share.values),
    )?;
    let (peer_id, d_peer, e_peer) = decode_opening(&link.recv(FrameType::Opening)?, x.len())?;
    if peer_id != triple.id {
        return Err(Error::Correlation(format!(
            "triple id mismatch: ours {} peer {}",
            triple.id, peer_id
        )));
    }
    let n = x.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let d = add_mod(d_share.values[i], d_peer[i] % p, p);
        let e = add_mod(e_share.values[i], e_peer[i] % p, p);
        // z = c + e·a + d·b (+ d·e once, added by Alice)
        let mut z = triple.c.values[i];
        z = add_mod(z, mul_mod(e, triple.a.values[i], p), p);
        z = add_mod(z, mul_mod(d, triple.b.values[i], p), p);
        if role == Role::Alice {
            z = add_mod(z, mul_mod(d, e, p), p);
        }
        out.push(z);
    }
    Ok(ShareVector { p, values: out })
}

/// Shares of v² from shares of v. The dealer rerandomizer turns the single
/// sharing into two independent sharings of v, so the two masked openings
/// inside the triple protocol stay jointly uniform.
pub fn square_activation(
    role: Role,
    link: &mut Link,
    v: &ShareVector,
    triple: &TripleShare,
    rerandomizer: (u64, &[u64]),
    used: &mut UsedIds,
) -> Result<ShareVector> {
    let (rid, u) = rerandomizer;
    if u.len() != v.len() {
        return Err(Error::Mismatch("rerandomizer length".into()));
    }
    UsedIds::claim(&mut used.squares, rid, "square rerandomizer")?;
    let p = v.p;
    let v2 = ShareVector {
        p,
        values: v
            .values
            .iter()
            .zip(u)
            .map(|(&s, &ui)| match role {
                Role::Alice => add_mod(s, ui % p, p),
                Role::Bob => sub_mod(s, ui % p, p),
            })
            .collect(),
    };
    beaver_hadamard(role, link, v, &v2, triple, used)
}

/// Probabilistic truncation: divides the shared value by 2^f with error at
/// most one unit in the last place (always non-negative, never a large
/// wrap-around failure).
///
/// Alice offsets her share to make the value non-negative, both add their
/// mask shares, Bob sends his sum to Alice, and Alice alone sees the masked
/// value c = v + offset + r — bounded masking, so c never wraps mod p and
/// the shift distributes exactly up to the carry bit.
pub fn trunc_prob(
    role: Role,
    link: &mut Link,
    v: &ShareVector,
    pair: &TruncPairShare,
    tp: TruncParams,
    used: &mut UsedIds,
) -> Result<ShareVector> {
    let p = v.p;
    tp.validate(p)?;
    if pair.r.len() != v.len() || pair.r.p != p {
        return Err(Error::Mismatch("truncation pair shape".into()));
    }
    UsedIds::claim(&mut used.truncs, pair.id, "truncation pair")?;
    let offset = 1u64 << tp.gamma_off;
    match role {
        Role::Bob => {
            let t = v.add(&pair.r)?;
            let mut payload = pair.id.to_le_bytes().to_vec();
            payload.extend_from_slice(&words_to_bytes(&t.values));
            link.send(FrameType::Opening, &payload)?;
            // Bob's output share is just the negated shifted-mask share.
            Ok(ShareVector {
                p,
                values: pair.r_shifted.values.iter().map(|&s| sub_mod(0, s, p)).collect(),
            })
        }
        Role::Alice => {
            let t = v.add(&pair.r)?;
            let bytes = link.recv(FrameType::Opening)?;
            if bytes.len() != 8 + 8 * v.len() {
                return Err(Error::Abort("malformed truncation opening".into()));
            }
            let peer_id = u64::from_le_bytes(bytes[0..8].try_into().unwrap());
            if peer_id != pair.id {
                return Err(Error::Correlation(format!(
                    "truncation pair id mismatch: ours {} peer {}",
                    pair.id, peer_id
                )));
            }
            let t_bob = bytes_to_words(&bytes[8..])?;
            let mut out = Vec::with_capacity(v.len());
            for i in 0..v.len() {
                let c = add_mod(add_mod(t.values[i], offset, p), t_bob[i] % p, p);
                // c = (v + offset) + r as an integer: bounded below p
                let shifted = c >> tp.f;
                let mut z = sub_mod(shifted % p, pair.r_shifted.values[i], p);
                z = sub_mod(z, offset >> tp.f, p);
                out.push(z);
            }
            Ok(ShareVector { p, values: out })
        }
    }
}
