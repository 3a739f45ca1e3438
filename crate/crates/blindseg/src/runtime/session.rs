//! Two-party inference session: handshake, key distribution, the layer
//! executor, transcript checks, and timing.
//!
//! Both parties walk the network spec in lockstep. Alice contributes the
//! image and the decryption key; Bob contributes the weights. Correlated
//! randomness comes from a dealer seed both sides share at setup (standing
//! in for a trusted dealer); every consumption is counted and id-checked.
//! Each layer ends with a transcript cross-check, and Alice accepts the
//! label map only after a final transcript sync.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::mpc::{from_signed, Dealer, ShareVector, UsedIds};
use crate::pahe::{
    keygen, rotation_keys_from_bytes, rotation_keys_to_bytes, PaheParams, RotationKeySet,
    SecretKey,
};
use crate::protocols::activation::{relu_layer, square_layer, trunc_layer, TruncKind};
use crate::protocols::pool::{avgpool_rotation_steps, pool_layer};
use crate::protocols::readout::argmax_readout;
use crate::protocols::{conv_layer, tconv_layer, ConvPlan, TconvPlan};
use crate::runtime::{Category, FrameType, Link, TimingLedger};
use crate::unet::oracle::Tensor;
use crate::unet::quant::{QuantSchedule, Weights};
use crate::unet::{ActKind, Dims, LayerKind, NetworkSpec};
use crate::Role;

pub const PROTOCOL_VERSION: u32 = 1;

/// Everything one party needs to run a session. The spec must already carry
/// the requantization shifts assigned by the headroom analyzer, and both
/// parties must hold identical spec/schedule/seeds.
pub struct SessionConfig {
    pub spec: NetworkSpec,
    pub schedule: QuantSchedule,
    pub trunc: TruncKind,
    pub dealer_seed: u64,
    /// Seed of Alice's encryption/rotation keys.
    pub keygen_seed: u64,
    /// Seed of this party's local masks and garbling randomness.
    pub party_seed: u64,
    /// Bob's side only.
    pub weights: Option<Weights>,
    /// Alice's side only.
    pub input: Option<Tensor>,
}

/// What a party walks away with.
pub struct SessionOutcome {
    /// The label map; `Some` for Alice only.
    pub labels: Option<Tensor>,
    pub ledger: TimingLedger,
    pub bytes_sent: u64,
    pub bytes_received: u64,
    pub frames_sent: u64,
    pub frames_received: u64,
}

fn params_hash(params: &PaheParams, trunc: TruncKind) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"BUNP");
    h.update(PROTOCOL_VERSION.to_le_bytes());
    h.update((params.ring.n as u64).to_le_bytes());
    h.update(params.ring.q.to_le_bytes());
    h.update(params.ring.p.to_le_bytes());
    h.update([match trunc {
        TruncKind::Exact => 0u8,
        TruncKind::Prob => 1,
    }]);
    h.finalize().into()
}

/// All rotation steps the spec's average-pooling layers will request.
pub fn rotation_steps_for(spec: &NetworkSpec) -> BTreeSet<usize> {
    let mut steps = BTreeSet::new();
    for layer in &spec.layers {
        if let LayerKind::Pool {
            kind: crate::unet::PoolKind::Avg,
            zd,
            zh,
            zw,
        } = layer.kind
        {
            steps.extend(avgpool_rotation_steps(layer.in_dims, (zd, zh, zw)));
        }
    }
    steps
}

/// Layer indices whose outputs a later concatenation will read.
fn skip_sources(spec: &NetworkSpec) -> BTreeSet<usize> {
    spec.layers
        .iter()
        .filter_map(|l| match l.kind {
            LayerKind::Concat { skip_from } => Some(skip_from),
            _ => None,
        })
        .collect()
}

struct Party {
    role: Role,
    params: PaheParams,
    sk: Option<SecretKey>,
    rks: Option<RotationKeySet>,
    rng: ChaCha20Rng,
    dealer: Dealer,
    used: UsedIds,
    ledger: TimingLedger,
}

fn handshake(link: &mut Link, cfg: &SessionConfig, params: &PaheParams, dealer: &Dealer) -> Result<()> {
    let mut msg = Vec::with_capacity(4 + 96);
    msg.extend_from_slice(&PROTOCOL_VERSION.to_le_bytes());
    msg.extend_from_slice(&cfg.spec.digest());
    msg.extend_from_slice(&params_hash(params, cfg.trunc));
    msg.extend_from_slice(&dealer.commitment());
    link.send(FrameType::Handshake, &msg)?;
    let theirs = link.recv(FrameType::Handshake)?;
    if theirs.len() != msg.len() {
        return Err(Error::Abort("malformed handshake".into()));
    }
    if theirs[0..4] != msg[0..4] {
        return Err(Error::Abort("protocol version mismatch".into()));
    }
    if theirs[4..36] != msg[4..36] {
        return Err(Error::Abort("network spec mismatch".into()));
    }
    if theirs[36..68] != msg[36..68] {
        return Err(Error::Abort("parameter mismatch".into()));
    }
    if theirs[68..100] != msg[68..100] {
        return Err(Error::Abort("dealer commitment mismatch".into()));
    }
    Ok(())
}

/// Run one party of a secure inference session over an established link.
pub fn run_party(role: Role, link: &mut Link, cfg: &SessionConfig) -> Result<SessionOutcome> {
    let params = PaheParams::default_params();
    let p = params.ring.p;
    let spec = &cfg.spec;
    spec.validate()?;
    let mut party = Party {
        role,
        params,
        sk: None,
        rks: None,
        rng: ChaCha20Rng::seed_from_u64(cfg.party_seed),
        dealer: Dealer::new(cfg.dealer_seed),
        used: UsedIds::new(),
        ledger: TimingLedger::new(),
    };

    // --- setup: handshake, keys, input sharing ---
    let span = party.ledger.begin(Category::Setup, link);
    handshake(link, cfg, &party.params, &party.dealer)?;
    let steps = rotation_steps_for(spec);
    match role {
        Role::Alice => {
            let (sk, rks) = keygen(&party.params, &steps, cfg.keygen_seed);
            link.send(
                FrameType::Control,
                &rotation_keys_to_bytes(&party.params, &rks),
            )?;
            party.sk = Some(sk);
        }
        Role::Bob => {
            let blob = link.recv(FrameType::Control)?;
            party.rks = Some(rotation_keys_from_bytes(&party.params, &blob)?);
        }
    }
    let mut cur: ShareVector = match role {
        Role::Alice => {
            let input = cfg
                .input
                .as_ref()
                .ok_or_else(|| Error::Params("session: Alice needs an input image".into()))?;
            if input.dims != spec.input {
                return Err(Error::Mismatch("input tensor dims".into()));
            }
            let half = ((p - 1) / 2) as i64;
            if input.data.iter().any(|&v| v.abs() > half) {
                return Err(Error::QuantOverflow {
                    layer: "input".into(),
                    detail: "image value outside the plaintext modulus range".into(),
                });
            }
            ShareVector {
                p,
                values: input.data.iter().map(|&v| from_signed(v, p)).collect(),
            }
        }
        // Bob's share of the image is zero: the sum of shares is the image,
        // and Bob only ever sees it inside encryptions and maskings
        Role::Bob => ShareVector::zeros(p, spec.input.numel()),
    };
    if role == Role::Bob && cfg.weights.is_none() {
        return Err(Error::Params("session: Bob needs the weights".into()));
    }
    link.sync_transcripts()?;
    party.ledger.end(span, link);

    // --- layer walk ---
    let keep = skip_sources(spec);
    let mut stored: BTreeMap<usize, ShareVector> = BTreeMap::new();
    let mut labels: Option<Vec<u64>> = None;
    let mut idx = 0usize;
    while idx < spec.layers.len() {
        let layer = &spec.layers[idx];
        let next_act = match spec.layers.get(idx + 1).map(|l| &l.kind) {
            Some(LayerKind::Activation { kind }) => Some(*kind),
            _ => None,
        };
        let mut consumed_next = false;
        match &layer.kind {
            LayerKind::Conv {
                out_c,
                kd,
                kh,
                kw,
                requant_f,
            } => {
                let plan = ConvPlan::new(layer.in_dims, *out_c, (*kd, *kh, *kw), party.params.ring.n)?;
                let w = cfg.weights.as_ref().and_then(|w| w.by_layer.get(&idx));
                let span = party.ledger.begin(Category::HomConv, link);
                cur = conv_layer(
                    role,
                    link,
                    &party.params,
                    party.sk.as_ref(),
                    &mut party.rng,
                    &plan,
                    &cur,
                    w,
                )?;
                party.ledger.end(span, link);
                cur = finish_conv(&mut party, link, cfg, idx, *requant_f, next_act, cur, &mut consumed_next)?;
            }
            LayerKind::TransposedConv {
                out_c,
                sd,
                sh,
                sw,
                requant_f,
                ..
            } => {
                let plan = TconvPlan::new(layer.in_dims, *out_c, (*sd, *sh, *sw), party.params.ring.n)?;
                let w = cfg.weights.as_ref().and_then(|w| w.by_layer.get(&idx));
                let span = party.ledger.begin(Category::HomConv, link);
                cur = tconv_layer(
                    role,
                    link,
                    &party.params,
                    party.sk.as_ref(),
                    &mut party.rng,
                    &plan,
                    &cur,
                    w,
                )?;
                party.ledger.end(span, link);
                cur = finish_conv(&mut party, link, cfg, idx, *requant_f, next_act, cur, &mut consumed_next)?;
            }
            LayerKind::Activation { kind } => match kind {
                ActKind::Relu => {
                    let span = party.ledger.begin(Category::ReluGc, link);
                    cur = relu_layer(role, link, &mut party.rng, &mut party.dealer, 0, &cur)?;
                    party.ledger.end(span, link);
                }
                ActKind::Square => {
                    let span = party.ledger.begin(Category::SquareMt, link);
                    cur = square_layer(role, link, &mut party.dealer, &mut party.used, &cur)?;
                    party.ledger.end(span, link);
                }
            },
            LayerKind::Quantize { f } => {
                if *f > 0 {
                    let tp = cfg.schedule.by_layer.get(&idx).copied();
                    let span = party.ledger.begin(Category::TruncGc, link);
                    cur = trunc_layer(
                        role,
                        link,
                        &mut party.rng,
                        &mut party.dealer,
                        &mut party.used,
                        cfg.trunc,
                        *f,
                        tp,
                        &cur,
                    )?;
                    party.ledger.end(span, link);
                }
            }
            LayerKind::Pool { kind, zd, zh, zw } => {
                let cat = match kind {
                    crate::unet::PoolKind::Avg => Category::AvgPool,
                    crate::unet::PoolKind::Max => Category::MaxPoolGc,
                };
                let span = party.ledger.begin(cat, link);
                cur = pool_layer(
                    *kind,
                    role,
                    link,
                    &party.params,
                    party.sk.as_ref(),
                    party.rks.as_ref(),
                    &mut party.rng,
                    &mut party.dealer,
                    layer.in_dims,
                    (*zd, *zh, *zw),
                    &cur,
                )?;
                party.ledger.end(span, link);
            }
            LayerKind::Concat { skip_from } => {
                let skip = stored
                    .get(skip_from)
                    .ok_or_else(|| Error::Spec(format!("missing skip output {skip_from}")))?;
                let mut values = cur.values.clone();
                values.extend_from_slice(&skip.values);
                cur = ShareVector { p, values };
            }
            LayerKind::Argmax => {
                let span = party.ledger.begin(Category::ArgmaxGc, link);
                labels = argmax_readout(
                    role,
                    link,
                    &mut party.rng,
                    &mut party.dealer,
                    layer.in_dims,
                    &cur,
                )?;
                party.ledger.end(span, link);
                cur = ShareVector::zeros(p, layer.out_dims.numel());
            }
        }
        if cur.len() != spec.layers[idx + consumed_next as usize].out_dims.numel()
            && !matches!(spec.layers[idx].kind, LayerKind::Argmax)
        {
            return Err(Error::Spec(format!("layer {idx}: share length drift")));
        }
        if keep.contains(&idx) {
            stored.insert(idx, cur.clone());
        }
        link.sync_transcripts()?;
        idx += 1 + consumed_next as usize;
    }

    // --- readout: Alice accepts only after a final transcript sync ---
    let span = party.ledger.begin(Category::Readout, link);
    link.sync_transcripts()?;
    let labels = match (role, labels) {
        (Role::Alice, Some(ls)) => {
            let dims = Dims { c: 1, ..spec.input };
            Some(Tensor::new(dims, ls.iter().map(|&v| v as i64).collect())?)
        }
        (Role::Alice, None) => return Err(Error::Abort("session ended without labels".into())),
        (Role::Bob, _) => None,
    };
    party.ledger.end(span, link);

    Ok(SessionOutcome {
        labels,
        ledger: party.ledger,
        bytes_sent: link.bytes_sent,
        bytes_received: link.bytes_received,
        frames_sent: link.frames_sent,
        frames_received: link.frames_received,
    })
}

/// Apply the requantization that follows a (transposed) convolution: fused
/// into the ReLU circuit when a ReLU comes next, run before the squaring
/// when a square activation comes next, standalone otherwise.
#[allow(clippy::too_many_arguments)]
fn finish_conv(
    party: &mut Party,
    link: &mut Link,
    cfg: &SessionConfig,
    idx: usize,
    requant_f: u32,
    next_act: Option<ActKind>,
    cur: ShareVector,
    consumed_next: &mut bool,
) -> Result<ShareVector> {
    let role = party.role;
    match next_act {
        Some(ActKind::Relu) => {
            *consumed_next = true;
            let span = party.ledger.begin(Category::ReluGc, link);
            let out = relu_layer(role, link, &mut party.rng, &mut party.dealer, requant_f, &cur)?;
            party.ledger.end(span, link);
            Ok(out)
        }
        Some(ActKind::Square) => {
            *consumed_next = true;
            let shifted = if requant_f > 0 {
                let tp = cfg.schedule.by_layer.get(&idx).copied();
                let span = party.ledger.begin(Category::TruncGc, link);
                let s = trunc_layer(
                    role,
                    link,
                    &mut party.rng,
                    &mut party.dealer,
                    &mut party.used,
                    cfg.trunc,
                    requant_f,
                    tp,
                    &cur,
                )?;
                party.ledger.end(span, link);
                s
            } else {
                cur
            };
            let span = party.ledger.begin(Category::SquareMt, link);
            let out = square_layer(role, link, &mut party.dealer, &mut party.used, &shifted)?;
            party.ledger.end(span, link);
            Ok(out)
        }
        None => {
            if requant_f == 0 {
                return Ok(cur);
            }
            let tp = cfg.schedule.by_layer.get(&idx).copied();
            let span = party.ledger.begin(Category::TruncGc, link);
            let out = trunc_layer(
                role,
                link,
                &mut party.rng,
                &mut party.dealer,
                &mut party.used,
                cfg.trunc,
                requant_f,
                tp,
                &cur,
            )?;
            party.ledger.end(span, link);
            Ok(out)
        }
    }
}

/// Convenience driver: run both parties over an in-memory pipe and return
/// (Alice's outcome, Bob's outcome).
pub fn run_secure_inference(
    cfg_alice: SessionConfig,
    cfg_bob: SessionConfig,
) -> Result<(SessionOutcome, SessionOutcome)> {
    let (sa, sb) = crate::runtime::mem_pair();
    let ta = std::thread::spawn(move || {
        let mut link = Link::new(Box::new(sa));
        run_party(Role::Alice, &mut link, &cfg_alice)
    });
    let tb = std::thread::spawn(move || {
        let mut link = Link::new(Box::new(sb));
        run_party(Role::Bob, &mut link, &cfg_bob)
    });
    let oa = ta.join().map_err(|_| Error::Abort("alice thread panicked".into()))??;
    let ob = tb.join().map_err(|_| Error::Abort("bob thread panicked".into()))??;
    Ok((oa, ob))
}

/// Build the pair of configs for one logical run from shared artifacts.
#[allow(clippy::too_many_arguments)]
pub fn config_pair(
    spec: &NetworkSpec,
    schedule: &QuantSchedule,
    trunc: TruncKind,
    dealer_seed: u64,
    keygen_seed: u64,
    weights: Weights,
    input: Tensor,
    run_seed: u64,
) -> (SessionConfig, SessionConfig) {
    let mut seeder = ChaCha20Rng::seed_from_u64(run_seed);
    let alice_seed: u64 = seeder.gen();
    let bob_seed: u64 = seeder.gen();
    (
        SessionConfig {
            spec: spec.clone(),
            schedule: schedule.clone(),
            trunc,
            dealer_seed,
            keygen_seed,
            party_seed: alice_seed,
            weights: None,
            input: Some(input),
        },
        SessionConfig {
            spec: spec.clone(),
            schedule: schedule.clone(),
            trunc,
            dealer_seed,
            keygen_seed,
            party_seed: bob_seed,
            weights: Some(weights),
            input: None,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ring::DEFAULT_P;
    use crate::unet::oracle::{oracle_infer, TruncMode};
    use crate::unet::quant::{analyze, gen_synthetic_weights, QuantParams};
    use crate::unet::{build_architecture, Variant};

    fn prepared(variant: Variant, input_dims: Dims, wseed: u64) -> (NetworkSpec, QuantSchedule, Weights) {
        let mut spec = build_architecture(input_dims, 4, 3, variant).unwrap();
        let qp = QuantParams::default();
        let weights = gen_synthetic_weights(&spec, qp, wseed);
        let schedule = analyze(&mut spec, &weights, qp, DEFAULT_P).unwrap();
        (spec, schedule, weights)
    }

    fn test_input(dims: Dims, seed: u64) -> Tensor {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        Tensor::new(
            dims,
            (0..dims.numel()).map(|_| rng.gen_range(-31i64..=31)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn exact_session_matches_oracle_3d() {
        let dims = Dims::new(1, 8, 8, 8);
        let (spec, schedule, weights) = prepared(Variant::Hybrid, dims, 21);
        let input = test_input(dims, 22);
        let (want, _) =
            oracle_infer(&spec, &weights, &input, TruncMode::Exact, DEFAULT_P).unwrap();
        let (ca, cb) = config_pair(&spec, &schedule, TruncKind::Exact, 7, 8, weights, input, 23);
        let (oa, ob) = run_secure_inference(ca, cb).unwrap();
        assert!(ob.labels.is_none());
        assert_eq!(oa.labels.unwrap(), want);
        assert!(oa.bytes_sent > 0 && oa.frames_sent > 0);
    }

    #[test]
    fn exact_session_matches_oracle_2d_baseline() {
        let dims = Dims::new(1, 1, 16, 16);
        let (spec, schedule, weights) = prepared(Variant::Baseline, dims, 31);
        let input = test_input(dims, 32);
        let (want, _) =
            oracle_infer(&spec, &weights, &input, TruncMode::Exact, DEFAULT_P).unwrap();
        let (ca, cb) = config_pair(&spec, &schedule, TruncKind::Exact, 9, 10, weights, input, 33);
        let (oa, _) = run_secure_inference(ca, cb).unwrap();
        assert_eq!(oa.labels.unwrap(), want);
    }

    #[test]
    fn prob_session_labels_mostly_agree() {
        let dims = Dims::new(1, 8, 8, 8);
        let (spec, schedule, weights) = prepared(Variant::Square, dims, 41);
        let input = test_input(dims, 42);
        let (want, _) =
            oracle_infer(&spec, &weights, &input, TruncMode::Exact, DEFAULT_P).unwrap();
        let (ca, cb) = config_pair(&spec, &schedule, TruncKind::Prob, 11, 12, weights, input, 43);
        let (oa, _) = run_secure_inference(ca, cb).unwrap();
        let labels = oa.labels.unwrap();
        let agree = labels
            .data
            .iter()
            .zip(&want.data)
            .filter(|(a, b)| a == b)
            .count();
        assert!(
            agree * 100 >= labels.data.len() * 95,
            "agreement {}/{}",
            agree,
            labels.data.len()
        );
    }

    #[test]
    fn mismatched_spec_aborts_in_handshake() {
        let dims = Dims::new(1, 8, 8, 8);
        let (spec, schedule, weights) = prepared(Variant::Baseline, dims, 51);
        let (spec2, schedule2, _) = prepared(Variant::Square, dims, 51);
        let input = test_input(dims, 52);
        let (ca, mut cb) = config_pair(&spec, &schedule, TruncKind::Exact, 13, 14, weights, input, 53);
        cb.spec = spec2;
        cb.schedule = schedule2;
        let err = match run_secure_inference(ca, cb) {
            Err(e) => e,
            Ok(_) => panic!("expected handshake abort"),
        };
        assert!(matches!(err, Error::Abort(_)), "{err}");
    }
}
