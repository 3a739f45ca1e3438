//! Fixed-point quantization: weight generation/quantization and the static
//! headroom analyzer that assigns every requantization point a shift and a
//! truncation bound, guaranteeing no accumulator ever wraps mod p.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::mpc::TruncParams;
use crate::unet::{ActKind, LayerKind, NetworkSpec};

/// Bit-width budgets: activations carry at most `b_a` signed bits between
/// layers, weights at most `b_w` signed bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QuantParams {
    pub b_a: u32,
    pub b_w: u32,
}

impl Default for QuantParams {
    fn default() -> Self {
        QuantParams { b_a: 6, b_w: 4 }
    }
}

/// Quantized filter bank of one (transposed) convolution layer, row-major
/// over [out_c][in_c][kd][kh][kw].
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ConvWeights {
    pub out_c: usize,
    pub in_c: usize,
    pub kd: usize,
    pub kh: usize,
    pub kw: usize,
    pub values: Vec<i64>,
}

impl ConvWeights {
    pub fn at(&self, o: usize, i: usize, dz: usize, dy: usize, dx: usize) -> i64 {
        self.values[(((o * self.in_c + i) * self.kd + dz) * self.kh + dy) * self.kw + dx]
    }

    /// Largest per-output-channel l1 norm: the worst-case gain of the layer.
    pub fn max_l1(&self) -> u64 {
        let per = self.in_c * self.kd * self.kh * self.kw;
        (0..self.out_c)
            .map(|o| {
                self.values[o * per..(o + 1) * per]
                    .iter()
                    .map(|&v| v.unsigned_abs())
                    .sum::<u64>()
            })
            .max()
            .unwrap_or(0)
    }
}

/// Weights for a whole network, keyed by layer index.
#[derive(Clone, Debug, Default, serde::Serialize, serde::Deserialize)]
pub struct Weights {
    pub by_layer: BTreeMap<usize, ConvWeights>,
}

/// Round floats to b_w-bit signed fixed point at scale 2^f_w; errors on
/// values that overflow the width.
pub fn quantize_weights(floats: &[f64], f_w: u32, b_w: u32) -> Result<Vec<i64>> {
    let limit = 1i64 << (b_w - 1);
    floats
        .iter()
        .map(|&x| {
            let q = (x * f64::from(1u32 << f_w)).round() as i64;
            if q.abs() >= limit {
                Err(Error::QuantOverflow {
                    layer: "weight tensor".into(),
                    detail: format!("{x} exceeds {b_w}-bit fixed point"),
                })
            } else {
                Ok(q)
            }
        })
        .collect()
}

/// Deterministic synthetic weights for every conv layer of a spec: small
/// signed integers within the b_w budget.
pub fn gen_synthetic_weights(spec: &NetworkSpec, qp: QuantParams, seed: u64) -> Weights {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let limit = 1i64 << (qp.b_w - 1);
    let mut weights = Weights::default();
    for (idx, layer) in spec.layers.iter().enumerate() {
        let (out_c, kd, kh, kw) = match layer.kind {
            LayerKind::Conv { out_c, kd, kh, kw, .. } => (out_c, kd, kh, kw),
            LayerKind::TransposedConv {
                out_c, kd, kh, kw, ..
            } => (out_c, kd, kh, kw),
            _ => continue,
        };
        let in_c = layer.in_dims.c;
        let n = out_c * in_c * kd * kh * kw;
        let values: Vec<i64> = (0..n).map(|_| rng.gen_range(-limit + 1..limit)).collect();
        weights.by_layer.insert(
            idx,
            ConvWeights {
                out_c,
                in_c,
                kd,
                kh,
                kw,
                values,
            },
        );
    }
    weights
}

/// Requantization schedule: for every layer index that truncates, the shift
/// and the bound parameters the probabilistic protocol needs.
#[derive(Clone, Debug, Default)]
pub struct QuantSchedule {
    pub by_layer: BTreeMap<usize, TruncParams>,
    /// Worst-case |value| entering each layer (diagnostic).
    pub in_bounds: BTreeMap<usize, u64>,
}

fn trunc_params_for(bound: u64, f: u32, p: u64, layer: usize) -> Result<TruncParams> {
    // bound is the largest |v| before the shift; the masked opening must fit:
    // 2^(gamma_off+1) + 2^rho <= p
    let gamma_off = 64 - bound.leading_zeros();
    let base = 1u128 << (gamma_off + 1);
    if base + 2 > p as u128 {
        return Err(Error::QuantOverflow {
            layer: format!("layer {layer}"),
            detail: format!("truncation input bound 2^{gamma_off} too large for modulus {p}"),
        });
    }
    // largest mask width that still fits: maximizes statistical hiding
    let mut rho = 1u32;
    while rho < 62 && base + (1u128 << (rho + 1)) <= p as u128 {
        rho += 1;
    }
    Ok(TruncParams { f, gamma_off, rho })
}

/// Overflow found mid-pass: either fixable by shifting more at an earlier
/// truncation point, or fatal.
enum PassOutcome {
    Done(QuantSchedule),
    /// Add `extra` bits of shift at truncation layer `at` and retry.
    Widen { at: usize, extra: u32 },
    Fatal(Error),
}

/// Walk the spec with the actual weight norms, assign every requantization
/// point the smallest shift that returns activations to the b_a budget, and
/// verify that no accumulator can exceed (p-1)/2. When an accumulator would
/// overflow, the nearest preceding truncation point gives up precision bits
/// until everything fits (the widest representation the modulus admits).
/// Mutates the spec's `requant_f` / `Quantize` fields and returns the
/// schedule.
pub fn analyze(
    spec: &mut NetworkSpec,
    weights: &Weights,
    qp: QuantParams,
    p: u64,
) -> Result<QuantSchedule> {
    let mut extra: BTreeMap<usize, u32> = BTreeMap::new();
    // each retry strictly increases some shift; shifts are bounded by the
    // modulus width, so termination is guaranteed well within this cap
    for _ in 0..64 * spec.layers.len().max(1) {
        match analyze_pass(spec, weights, qp, p, &extra)? {
            PassOutcome::Done(schedule) => return Ok(schedule),
            PassOutcome::Widen { at, extra: e } => {
                *extra.entry(at).or_insert(0) += e.max(1);
            }
            PassOutcome::Fatal(err) => return Err(err),
        }
    }
    Err(Error::QuantOverflow {
        layer: "schedule".into(),
        detail: "headroom analysis did not converge".into(),
    })
}

fn analyze_pass(
    spec: &mut NetworkSpec,
    weights: &Weights,
    qp: QuantParams,
    p: u64,
    extra: &BTreeMap<usize, u32>,
) -> Result<PassOutcome> {
    let half = (p - 1) / 2;
    // anything that will be right-shifted must also satisfy the masked-opening
    // constraint 2^(gamma_off+1) + 2 <= p of the truncation protocol
    let mut gamma_max = 0u32;
    while (1u128 << (gamma_max + 2)) + 2 <= p as u128 {
        gamma_max += 1;
    }
    let tlimit = ((1u64 << gamma_max) - 1).min(half);
    let target = (1u64 << (qp.b_a - 1)) - 1;
    let mut schedule = QuantSchedule::default();
    let mut bound: u64 = target; // inputs must respect the activation budget
    let mut bounds_by_layer: BTreeMap<usize, u64> = BTreeMap::new();
    // nearest earlier layer whose shift can absorb an overflow downstream
    let mut last_trunc: Option<usize> = None;
    // bits of shift needed to bring `v` down to at most `limit`
    let deficit = |v: u64, limit: u64| {
        let mut g = 0u32;
        while (v >> g) > limit {
            g += 1;
        }
        g
    };
    let overflow = |idx: usize, v: u64, what: &str| Error::QuantOverflow {
        layer: format!("layer {idx}"),
        detail: format!("{what} bound {v} exceeds (p-1)/2 = {half}"),
    };
    for idx in 0..spec.layers.len() {
        schedule.in_bounds.insert(idx, bound);
        let kind = spec.layers[idx].kind.clone();
        match kind {
            LayerKind::Conv { .. } | LayerKind::TransposedConv { .. } => {
                let w = weights.by_layer.get(&idx).ok_or_else(|| Error::Spec(format!(
                    "missing weights for conv layer {idx}"
                )))?;
                let acc = w.max_l1().saturating_mul(bound);
                // the accumulator is truncated whenever f > 0, so hold it to
                // the truncation-protocol limit, not just the modulus
                if acc > tlimit {
                    return Ok(match last_trunc {
                        Some(at) => PassOutcome::Widen {
                            at,
                            extra: deficit(acc, tlimit),
                        },
                        None => PassOutcome::Fatal(overflow(idx, acc, "accumulator")),
                    });
                }
                let f = deficit(acc, target) + extra.get(&idx).copied().unwrap_or(0);
                if f > 0 {
                    schedule
                        .by_layer
                        .insert(idx, trunc_params_for(acc, f, p, idx)?);
                }
                match &mut spec.layers[idx].kind {
                    LayerKind::Conv { requant_f, .. }
                    | LayerKind::TransposedConv { requant_f, .. } => *requant_f = f,
                    _ => unreachable!(),
                }
                // +1 covers the probabilistic truncation's one-LSB slack
                bound = (acc >> f) + (f > 0) as u64;
                last_trunc = Some(idx);
            }
            LayerKind::Activation { kind: ActKind::Relu } => {
                // magnitude can only shrink
            }
            LayerKind::Activation {
                kind: ActKind::Square,
            } => {
                let sq = bound.saturating_mul(bound);
                if sq > half {
                    return Ok(match last_trunc {
                        Some(at) => PassOutcome::Widen {
                            at,
                            // halving the input saves two bits off the square
                            extra: deficit(sq, half).div_ceil(2),
                        },
                        None => PassOutcome::Fatal(overflow(idx, sq, "squared")),
                    });
                }
                bound = sq;
            }
            LayerKind::Quantize { .. } => {
                if bound > tlimit {
                    return Ok(match last_trunc {
                        Some(at) => PassOutcome::Widen {
                            at,
                            extra: deficit(bound, tlimit),
                        },
                        None => PassOutcome::Fatal(overflow(idx, bound, "pre-shift")),
                    });
                }
                let f = deficit(bound, target) + extra.get(&idx).copied().unwrap_or(0);
                if f > 0 {
                    schedule
                        .by_layer
                        .insert(idx, trunc_params_for(bound, f, p, idx)?);
                    bound = (bound >> f) + 1;
                }
                match &mut spec.layers[idx].kind {
                    LayerKind::Quantize { f: slot } => *slot = f,
                    _ => unreachable!(),
                }
                last_trunc = Some(idx);
            }
            LayerKind::Pool { zd, zh, zw, kind } => {
                if kind == crate::unet::PoolKind::Avg {
                    // window sum; the divisor is folded into the next shift
                    bound = bound.saturating_mul((zd * zh * zw) as u64);
                    if bound > half {
                        return Ok(match last_trunc {
                            Some(at) => PassOutcome::Widen {
                                at,
                                extra: deficit(bound, half),
                            },
                            None => PassOutcome::Fatal(overflow(idx, bound, "pooled sum")),
                        });
                    }
                }
            }
            LayerKind::Concat { skip_from } => {
                let skip_bound = *bounds_by_layer.get(&skip_from).unwrap_or(&target);
                bound = bound.max(skip_bound);
            }
            LayerKind::Argmax => {}
        }
        bounds_by_layer.insert(idx, bound);
    }
    Ok(PassOutcome::Done(schedule))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ring::DEFAULT_P;
    use crate::unet::{build_architecture, Dims, Variant};

    fn scaled(variant: Variant) -> NetworkSpec {
        build_architecture(Dims::new(1, 8, 8, 8), 4, 3, variant).unwrap()
    }

    #[test]
    fn quantize_rounding() {
        assert_eq!(quantize_weights(&[0.0], 8, 8).unwrap(), vec![0]);
        assert_eq!(quantize_weights(&[1.0], 8, 16).unwrap(), vec![256]);
        assert_eq!(quantize_weights(&[-0.5], 4, 8).unwrap(), vec![-8]);
        assert!(quantize_weights(&[200.0], 8, 8).is_err());
        // roundtrip bound
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for _ in 0..200 {
            let x: f64 = rng.gen_range(-1.0..1.0);
            let q = quantize_weights(&[x], 6, 12).unwrap()[0];
            assert!((q as f64 / 64.0 - x).abs() <= 1.0 / 128.0);
        }
    }

    #[test]
    fn synthetic_weights_deterministic_and_bounded() {
        let spec = scaled(Variant::Baseline);
        let qp = QuantParams::default();
        let w1 = gen_synthetic_weights(&spec, qp, 42);
        let w2 = gen_synthetic_weights(&spec, qp, 42);
        let w3 = gen_synthetic_weights(&spec, qp, 43);
        assert_eq!(w1.by_layer, w2.by_layer);
        assert_ne!(w1.by_layer, w3.by_layer);
        // one entry per conv layer: 19
        assert_eq!(w1.by_layer.len(), 19);
        let limit = 1i64 << (qp.b_w - 1);
        for w in w1.by_layer.values() {
            assert!(w.values.iter().all(|&v| v.abs() < limit));
        }
    }

    #[test]
    fn analyzer_keeps_all_bounds_inside_modulus() {
        for variant in [
            Variant::Baseline,
            Variant::ReluAvg,
            Variant::Hybrid,
            Variant::Square,
        ] {
            let mut spec = scaled(variant);
            let qp = QuantParams::default();
            let weights = gen_synthetic_weights(&spec, qp, 7);
            let schedule = analyze(&mut spec, &weights, qp, DEFAULT_P).unwrap();
            // every conv with a gain > 1 received a shift
            for (idx, layer) in spec.layers.iter().enumerate() {
                if let LayerKind::Conv { requant_f, .. } = layer.kind {
                    let w = &weights.by_layer[&idx];
                    if w.max_l1() > 1 {
                        assert!(requant_f > 0, "layer {idx} has gain but no shift");
                    }
                }
            }
            for tp in schedule.by_layer.values() {
                tp.validate(DEFAULT_P).unwrap();
            }
        }
    }

    #[test]
    fn analyzer_rejects_oversized_weights() {
        let mut spec = scaled(Variant::Baseline);
        let qp = QuantParams { b_a: 6, b_w: 18 };
        let weights = gen_synthetic_weights(&spec, qp, 7);
        assert!(matches!(
            analyze(&mut spec, &weights, qp, DEFAULT_P),
            Err(Error::QuantOverflow { .. })
        ));
    }

    #[test]
    fn max_l1_is_per_output_channel() {
        let w = ConvWeights {
            out_c: 2,
            in_c: 1,
            kd: 1,
            kh: 1,
            kw: 2,
            values: vec![3, -4, 1, 1],
        };
        assert_eq!(w.max_l1(), 7);
        assert_eq!(w.at(0, 0, 0, 0, 1), -4);
    }
}
