//! Secure activations on additive shares: garbled-circuit ReLU with a fused
//! requantization shift, Beaver-triple squaring, and standalone truncation
//! (exact via garbled circuit, or probabilistic via dealer truncation
//! pairs).
//!
//! Garbled-circuit convention throughout: Alice garbles and decodes, Bob
//! evaluates and contributes one fresh mask per output, so the circuit
//! output becomes Alice's share and the masks become Bob's.

use rand::Rng;
use rand_chacha::ChaCha20Rng;

use crate::error::Result;
use crate::gc::circuits::{pack_values, relu_reshare, trunc_reshare, unpack_values};
use crate::gc::protocol::{evaluator_run, garbler_run};
use crate::gc::Circuit;
use crate::mpc::{
    square_activation, trunc_prob, Dealer, OtReceiverPad, OtSenderPad, ShareVector, TruncParams,
    UsedIds,
};
use crate::runtime::Link;
use crate::Role;

/// Truncation discipline selected for the whole session.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum TruncKind {
    /// Garbled-circuit floor shift, bit-exact.
    Exact,
    /// Dealer-pair masked opening: one cheap round, result may exceed the
    /// floor by one unit.
    Prob,
}

/// Draw `n` oblivious-transfer pads from the dealer; the caller keeps only
/// the half matching its role. Both parties draw in the same order, keeping
/// the dealer streams aligned.
pub fn draw_ot_pads(dealer: &mut Dealer, n: usize) -> (Vec<OtSenderPad>, Vec<OtReceiverPad>) {
    (0..n).map(|_| dealer.ot_pad()).unzip()
}

/// Run one reshare-style garbled circuit (Alice's shares in, Bob's shares
/// plus `n_out` fresh masks in). Returns each party's output share vector.
pub fn run_reshare_gc(
    role: Role,
    link: &mut Link,
    rng: &mut ChaCha20Rng,
    dealer: &mut Dealer,
    circuit: &Circuit,
    p: u64,
    my_share: &ShareVector,
    n_out: usize,
) -> Result<ShareVector> {
    let (send_pads, recv_pads) = draw_ot_pads(dealer, circuit.inputs_b);
    match role {
        Role::Alice => {
            let bits = pack_values(&my_share.values, p);
            let seed: [u8; 32] = rng.r#gen();
            let out_bits = garbler_run(link, circuit, &bits, &send_pads, seed)?;
            Ok(ShareVector {
                p,
                values: unpack_values(&out_bits, p),
            })
        }
        Role::Bob => {
            let masks: Vec<u64> = (0..n_out).map(|_| rng.gen_range(0..p)).collect();
            let mut bits = pack_values(&my_share.values, p);
            bits.extend(pack_values(&masks, p));
            evaluator_run(link, circuit, &bits, &recv_pads)?;
            Ok(ShareVector { p, values: masks })
        }
    }
}

/// ReLU with a fused right shift: shares of max(v, 0) >> f.
pub fn relu_layer(
    role: Role,
    link: &mut Link,
    rng: &mut ChaCha20Rng,
    dealer: &mut Dealer,
    f: u32,
    my_share: &ShareVector,
) -> Result<ShareVector> {
    let n = my_share.len();
    let circuit = relu_reshare(my_share.p, f, n);
    run_reshare_gc(role, link, rng, dealer, &circuit, my_share.p, my_share, n)
}

/// Arithmetic right shift by f of every shared value.
pub fn trunc_layer(
    role: Role,
    link: &mut Link,
    rng: &mut ChaCha20Rng,
    dealer: &mut Dealer,
    used: &mut UsedIds,
    kind: TruncKind,
    f: u32,
    tp: Option<TruncParams>,
    my_share: &ShareVector,
) -> Result<ShareVector> {
    if f == 0 {
        return Ok(my_share.clone());
    }
    let p = my_share.p;
    let n = my_share.len();
    match kind {
        TruncKind::Exact => {
            let circuit = trunc_reshare(p, f, n);
            run_reshare_gc(role, link, rng, dealer, &circuit, p, my_share, n)
        }
        TruncKind::Prob => {
            let tp = tp.ok_or_else(|| {
                crate::error::Error::Params("probabilistic truncation needs bounds".into())
            })?;
            let (pa, pb) = dealer.trunc_pair(p, tp, n)?;
            let pair = if role == Role::Alice { pa } else { pb };
            trunc_prob(role, link, my_share, &pair, tp, used)
        }
    }
}

/// Shares of v² from shares of v, one Beaver triple plus a rerandomizer.
pub fn square_layer(
    role: Role,
    link: &mut Link,
    dealer: &mut Dealer,
    used: &mut UsedIds,
    my_share: &ShareVector,
) -> Result<ShareVector> {
    let p = my_share.p;
    let n = my_share.len();
    let (ta, tb) = dealer.triple(p, n);
    let triple = if role == Role::Alice { ta } else { tb };
    let (rid, u) = dealer.square_rerandomizer(p, n);
    square_activation(role, link, my_share, &triple, (rid, &u), used)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use crate::mpc::{from_signed, rec, share, to_signed};
    use crate::runtime::mem_pair;

    const P: u64 = 786_433;

    fn run_pair<T: Send + 'static>(
        f: impl Fn(Role, &mut Link) -> T + Send + Sync + Clone + 'static,
    ) -> (T, T) {
        let (la, lb) = mem_pair();
        let fa = f.clone();
        let ta = std::thread::spawn(move || {
            let mut link = Link::new(Box::new(la));
            fa(Role::Alice, &mut link)
        });
        let tb = std::thread::spawn(move || {
            let mut link = Link::new(Box::new(lb));
            f(Role::Bob, &mut link)
        });
        (ta.join().unwrap(), tb.join().unwrap())
    }

    fn shares_of(vals: &[i64], seed: u64) -> (ShareVector, ShareVector) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let enc: Vec<u64> = vals.iter().map(|&v| from_signed(v, P)).collect();
        share(&mut rng, P, &enc)
    }

    #[test]
    fn relu_layer_full_modulus() {
        let vals: Vec<i64> = (-8..8).map(|i| i * 1000 + 3).collect();
        let (sa, sb) = shares_of(&vals, 1);
        let want: Vec<i64> = vals.iter().map(|&v| v.max(0) >> 2).collect();
        let (oa, ob) = run_pair(move |role, link| {
            let mut rng = ChaCha20Rng::seed_from_u64(role as u64 + 10);
            let mut dealer = Dealer::new(77);
            let s = if role == Role::Alice { sa.clone() } else { sb.clone() };
            relu_layer(role, link, &mut rng, &mut dealer, 2, &s).unwrap()
        });
        let got: Vec<i64> = rec(&oa, &ob)
            .unwrap()
            .iter()
            .map(|&v| to_signed(v, P))
            .collect();
        assert_eq!(got, want);
    }

    #[test]
    fn trunc_layer_exact_and_prob() {
        let vals: Vec<i64> = vec![-2000, -33, -1, 0, 1, 33, 2000, 12345];
        let (sa, sb) = shares_of(&vals, 2);
        for kind in [TruncKind::Exact, TruncKind::Prob] {
            let tp = TruncParams {
                f: 4,
                gamma_off: 15,
                rho: 18,
            };
            let (sa, sb) = (sa.clone(), sb.clone());
            let (oa, ob) = run_pair(move |role, link| {
                let mut rng = ChaCha20Rng::seed_from_u64(role as u64 + 20);
                let mut dealer = Dealer::new(88);
                let mut used = UsedIds::new();
                let s = if role == Role::Alice { sa.clone() } else { sb.clone() };
                trunc_layer(role, link, &mut rng, &mut dealer, &mut used, kind, 4, Some(tp), &s)
                    .unwrap()
            });
            let got: Vec<i64> = rec(&oa, &ob)
                .unwrap()
                .iter()
                .map(|&v| to_signed(v, P))
                .collect();
            for (i, &v) in vals.iter().enumerate() {
                let err = got[i] - (v >> 4);
                let ok = match kind {
                    TruncKind::Exact => err == 0,
                    TruncKind::Prob => (0..=1).contains(&err),
                };
                assert!(ok, "{kind:?} v={v} got {} want {}", got[i], v >> 4);
            }
        }
    }

    #[test]
    fn square_layer_matches() {
        let vals: Vec<i64> = vec![-31, -5, 0, 1, 17, 31];
        let (sa, sb) = shares_of(&vals, 3);
        let (oa, ob) = run_pair(move |role, link| {
            let mut dealer = Dealer::new(99);
            let mut used = UsedIds::new();
            let s = if role == Role::Alice { sa.clone() } else { sb.clone() };
            square_layer(role, link, &mut dealer, &mut used, &s).unwrap()
        });
        let got: Vec<i64> = rec(&oa, &ob)
            .unwrap()
            .iter()
            .map(|&v| to_signed(v, P))
            .collect();
        let want: Vec<i64> = vals.iter().map(|&v| v * v).collect();
        assert_eq!(got, want);
    }
}
