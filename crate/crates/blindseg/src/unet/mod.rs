//! The segmentation network as data: a declarative layer list with dimension
//! chaining, the four architecture variants, quantization bookkeeping, the
//! plaintext reference executor, and tensor/spec file formats.

pub mod io;
pub mod oracle;
pub mod quant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tensor dimensions: channels plus a 3-D spatial extent. 2-D networks set
/// depth to 1.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct Dims {
    pub c: usize,
    pub d: usize,
    pub h: usize,
    pub w: usize,
}

impl Dims {
    pub fn new(c: usize, d: usize, h: usize, w: usize) -> Self {
        Dims { c, d, h, w }
    }

    /// Spatial volume (one channel).
    pub fn vol(&self) -> usize {
        self.d * self.h * self.w
    }

    pub fn numel(&self) -> usize {
        self.c * self.vol()
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActKind {
    Relu,
    Square,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolKind {
    Avg,
    Max,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// ReLU activations, max pooling.
    Baseline,
    /// ReLU activations, average pooling.
    ReluAvg,
    /// Square activation in the first and last layer batches, ReLU
    /// elsewhere; average pooling.
    Hybrid,
    /// Square activations everywhere, average pooling.
    Square,
}

impl Variant {
    pub fn parse(s: &str) -> Result<Variant> {
        Ok(match s {
            "baseline" => Variant::Baseline,
            "relu-avg" => Variant::ReluAvg,
            "hybrid" => Variant::Hybrid,
            "square" => Variant::Square,
            _ => return Err(Error::Spec(format!("unknown variant '{s}'"))),
        })
    }

    pub fn pool(self) -> PoolKind {
        match self {
            Variant::Baseline => PoolKind::Max,
            _ => PoolKind::Avg,
        }
    }

    /// Activation kind for a layer batch (1-based).
    pub fn activation(self, batch: u32) -> ActKind {
        match self {
            Variant::Baseline | Variant::ReluAvg => ActKind::Relu,
            Variant::Square => ActKind::Square,
            Variant::Hybrid => {
                if batch == 1 || batch == 7 {
                    ActKind::Square
                } else {
                    ActKind::Relu
                }
            }
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum LayerKind {
    /// Stride-1 zero-padded ("same") convolution with a fused
    /// requantization shift applied to the accumulator.
    Conv {
        out_c: usize,
        kd: usize,
        kh: usize,
        kw: usize,
        requant_f: u32,
    },
    /// Fractionally-strided convolution: zeros interleaved at the stride,
    /// then a full true convolution; doubles each strided spatial axis.
    TransposedConv {
        out_c: usize,
        kd: usize,
        kh: usize,
        kw: usize,
        sd: usize,
        sh: usize,
        sw: usize,
        requant_f: u32,
    },
    Activation { kind: ActKind },
    /// Standalone right-shift requantization of the activations.
    Quantize { f: u32 },
    Pool {
        kind: PoolKind,
        zd: usize,
        zh: usize,
        zw: usize,
    },
    /// Channel-wise concatenation: current tensor first, then the recorded
    /// output of an earlier layer (a skip connection).
    Concat { skip_from: usize },
    /// Per-pixel argmax over the channel axis; the network output.
    Argmax,
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct Layer {
    pub batch: u32,
    pub kind: LayerKind,
    pub in_dims: Dims,
    pub out_dims: Dims,
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input: Dims,
    pub classes: usize,
    pub variant: Variant,
    pub layers: Vec<Layer>,
}

/// Output dims of a layer kind applied to `input`, with structural checks.
pub fn infer_out_dims(
    kind: &LayerKind,
    input: Dims,
    skip_dims: impl Fn(usize) -> Option<Dims>,
) -> Result<Dims> {
    match *kind {
        LayerKind::Conv { out_c, kd, kh, kw, .. } => {
            if kd % 2 == 0 || kh % 2 == 0 || kw % 2 == 0 {
                return Err(Error::Spec("same-size conv needs odd filter dims".into()));
            }
            Ok(Dims { c: out_c, ..input })
        }
        LayerKind::TransposedConv {
            out_c,
            kd,
            kh,
            kw,
            sd,
            sh,
            sw,
            ..
        } => {
            if kd != sd || kh != sh || kw != sw {
                return Err(Error::Spec(
                    "transposed conv expects filter dims equal to stride".into(),
                ));
            }
            Ok(Dims {
                c: out_c,
                d: input.d * sd,
                h: input.h * sh,
                w: input.w * sw,
            })
        }
        LayerKind::Activation { .. } | LayerKind::Quantize { .. } => Ok(input),
        LayerKind::Pool { zd, zh, zw, .. } => {
            if input.d % zd != 0 || input.h % zh != 0 || input.w % zw != 0 {
                return Err(Error::Spec("pooling window does not divide dims".into()));
            }
            Ok(Dims {
                c: input.c,
                d: input.d / zd,
                h: input.h / zh,
                w: input.w / zw,
            })
        }
        LayerKind::Concat { skip_from } => {
            let s = skip_dims(skip_from)
                .ok_or_else(|| Error::Spec(format!("concat references layer {skip_from}")))?;
            if (s.d, s.h, s.w) != (input.d, input.h, input.w) {
                return Err(Error::Spec("concat spatial dims differ".into()));
            }
            Ok(Dims {
                c: input.c + s.c,
                ..input
            })
        }
        LayerKind::Argmax => Ok(Dims { c: 1, ..input }),
    }
}

impl NetworkSpec {
    /// Verify that every layer's recorded dims chain correctly.
    pub fn validate(&self) -> Result<()> {
        let mut cur = self.input;
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.in_dims != cur {
                return Err(Error::Spec(format!(
                    "layer {i}: input dims {:?} do not chain from {:?}",
                    layer.in_dims, cur
                )));
            }
            let out = infer_out_dims(&layer.kind, cur, |j| {
                (j < i).then(|| self.layers[j].out_dims)
            })?;
            if layer.out_dims != out {
                return Err(Error::Spec(format!(
                    "layer {i}: recorded output dims {:?}, computed {:?}",
                    layer.out_dims, out
                )));
            }
            cur = out;
        }
        match self.layers.last() {
            Some(l) if matches!(l.kind, LayerKind::Argmax) => Ok(()),
            _ => Err(Error::Spec("network must end in argmax".into())),
        }
    }

    /// Stable hash of the structure, exchanged at session handshake.
    pub fn digest(&self) -> [u8; 32] {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(self).expect("spec serializes"));
        h.finalize().into()
    }

    /// (convolutions incl. transposed, transposed only, activations, pools,
    /// argmax) — the layer census.
    pub fn census(&self) -> (usize, usize, usize, usize, usize) {
        let mut conv = 0;
        let mut tconv = 0;
        let mut act = 0;
        let mut pool = 0;
        let mut argmax = 0;
        for l in &self.layers {
            match l.kind {
                LayerKind::Conv { .. } => conv += 1,
                LayerKind::TransposedConv { .. } => {
                    conv += 1;
                    tconv += 1;
                }
                LayerKind::Activation { .. } => act += 1,
                LayerKind::Pool { .. } => pool += 1,
                LayerKind::Argmax => argmax += 1,
                _ => {}
            }
        }
        (conv, tconv, act, pool, argmax)
    }

    /// Per-layer-batch activation-function counts (number of activation
    /// evaluations: channels × spatial volume, summed over the batch's
    /// activation layers). Batches with no activations are omitted.
    pub fn activation_counts(&self) -> Vec<(u32, u64)> {
        let mut counts: Vec<(u32, u64)> = Vec::new();
        for l in &self.layers {
            if matches!(l.kind, LayerKind::Activation { .. }) {
                let n = l.in_dims.numel() as u64;
                match counts.last_mut() {
                    Some((b, c)) if *b == l.batch => *c += n,
                    _ => counts.push((l.batch, n)),
                }
            }
        }
        counts
    }
}

/// Build the encoder–decoder architecture: three 2× down-sampling stages,
/// a bottom stage, three up-sampling stages with skip concatenations, a
/// two-conv head, and the argmax readout. `base` is the channel count of
/// the first stage (64 reproduces the published table); requantization
/// shifts start at zero and are filled in by the quantization analyzer.
pub fn build_architecture(
    input: Dims,
    base: usize,
    classes: usize,
    variant: Variant,
) -> Result<NetworkSpec> {
    if input.c != 1 {
        return Err(Error::Spec("expected a single input channel".into()));
    }
    let two_d = input.d == 1;
    let (kd, kh, kw) = if two_d { (1, 3, 3) } else { (3, 3, 3) };
    let (zd, zh, zw) = if two_d { (1, 2, 2) } else { (2, 2, 2) };
    let div = zd * zh * zw * zd * zh * zw * zd * zh * zw; // three pools
    if input.d * input.h * input.w % div != 0
        || input.h % (zh * zh * zh) != 0
        || input.w % (zw * zw * zw) != 0
        || (!two_d && input.d % (zd * zd * zd) != 0)
    {
        return Err(Error::Spec(
            "spatial dims must survive three 2x poolings".into(),
        ));
    }

    let mut layers: Vec<Layer> = Vec::new();
    let mut cur = input;
    let push = |layers: &mut Vec<Layer>, batch: u32, kind: LayerKind, cur: &mut Dims| {
        let out = infer_out_dims(&kind, *cur, |j| layers.get(j).map(|l: &Layer| l.out_dims))
            .expect("architecture construction is internally consistent");
        layers.push(Layer {
            batch,
            kind,
            in_dims: *cur,
            out_dims: out,
        });
        *cur = out;
    };
    let conv = |out_c: usize| LayerKind::Conv {
        out_c,
        kd,
        kh,
        kw,
        requant_f: 0,
    };
    let act = |batch: u32| LayerKind::Activation {
        kind: variant.activation(batch),
    };
    let quant = LayerKind::Quantize { f: 0 };
    let pool = LayerKind::Pool {
        kind: variant.pool(),
        zd,
        zh,
        zw,
    };
    let tconv = |out_c: usize| LayerKind::TransposedConv {
        out_c,
        kd: zd,
        kh: zh,
        kw: zw,
        sd: zd,
        sh: zh,
        sw: zw,
        requant_f: 0,
    };

    let mut skips = Vec::new(); // index of each encoder batch's pre-pool output
    // encoder batches 1-3
    for b in 1..=3u32 {
        let ch = base << (b - 1);
        push(&mut layers, b, conv(ch), &mut cur);
        push(&mut layers, b, act(b), &mut cur);
        push(&mut layers, b, quant.clone(), &mut cur);
        push(&mut layers, b, conv(ch), &mut cur);
        push(&mut layers, b, act(b), &mut cur);
        push(&mut layers, b, quant.clone(), &mut cur);
        skips.push(layers.len() - 1);
        push(&mut layers, b, pool.clone(), &mut cur);
    }
    // bottom batch 4
    push(&mut layers, 4, conv(base * 8), &mut cur);
    push(&mut layers, 4, act(4), &mut cur);
    push(&mut layers, 4, quant.clone(), &mut cur);
    push(&mut layers, 4, conv(base * 8), &mut cur);
    push(&mut layers, 4, act(4), &mut cur);
    push(&mut layers, 4, quant.clone(), &mut cur);
    push(&mut layers, 4, tconv(base * 4), &mut cur);
    // decoder batches 5-7
    for (i, b) in (5..=7u32).enumerate() {
        let ch = base << (2 - i);
        push(
            &mut layers,
            b,
            LayerKind::Concat {
                skip_from: skips[2 - i],
            },
            &mut cur,
        );
        push(&mut layers, b, conv(ch), &mut cur);
        push(&mut layers, b, act(b), &mut cur);
        push(&mut layers, b, quant.clone(), &mut cur);
        push(&mut layers, b, conv(ch), &mut cur);
        push(&mut layers, b, act(b), &mut cur);
        push(&mut layers, b, quant.clone(), &mut cur);
        if b < 7 {
            push(&mut layers, b, tconv(base << (1 - i)), &mut cur);
        }
    }
    // head batch 8: a feature conv plus a 1x1 per-pixel readout conv
    push(&mut layers, 8, conv(base), &mut cur);
    push(
        &mut layers,
        8,
        LayerKind::Conv {
            out_c: classes,
            kd: 1,
            kh: 1,
            kw: 1,
            requant_f: 0,
        },
        &mut cur,
    );
    // batch 9: readout
    push(&mut layers, 9, LayerKind::Argmax, &mut cur);

    let spec = NetworkSpec {
        input,
        classes,
        variant,
        layers,
    };
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full_3d(variant: Variant) -> NetworkSpec {
        build_architecture(Dims::new(1, 64, 64, 64), 64, 3, variant).unwrap()
    }

    #[test]
    fn census_matches_published_counts() {
        let spec = full_3d(Variant::Baseline);
        let (conv, tconv, act, pool, argmax) = spec.census();
        assert_eq!(conv, 19);
        assert_eq!(tconv, 3);
        assert_eq!(act, 14);
        assert_eq!(pool, 3);
        assert_eq!(argmax, 1);
    }

    #[test]
    fn activation_counts_match_published_table() {
        let spec = full_3d(Variant::ReluAvg);
        let counts: Vec<u64> = spec.activation_counts().iter().map(|&(_, c)| c).collect();
        assert_eq!(
            counts,
            vec![33554432, 8388608, 2097152, 524288, 2097152, 8388608, 33554432]
        );
    }

    #[test]
    fn bottom_batch_dims_match_published_table() {
        let spec = full_3d(Variant::Baseline);
        let bottom_conv = spec
            .layers
            .iter()
            .find(|l| l.batch == 4 && matches!(l.kind, LayerKind::Conv { .. }))
            .unwrap();
        assert_eq!(bottom_conv.in_dims, Dims::new(256, 8, 8, 8));
        assert_eq!(bottom_conv.out_dims, Dims::new(512, 8, 8, 8));
        // decoder concat batch 5 sees doubled channels
        let concat5 = spec
            .layers
            .iter()
            .find(|l| matches!(l.kind, LayerKind::Concat { .. }))
            .unwrap();
        assert_eq!(concat5.out_dims, Dims::new(512, 16, 16, 16));
    }

    #[test]
    fn scaled_3d_and_2d_chain() {
        let s = build_architecture(Dims::new(1, 8, 8, 8), 4, 3, Variant::Hybrid).unwrap();
        s.validate().unwrap();
        assert_eq!(s.layers.last().unwrap().out_dims, Dims::new(1, 8, 8, 8));
        let s2 = build_architecture(Dims::new(1, 1, 16, 16), 4, 3, Variant::Square).unwrap();
        s2.validate().unwrap();
        assert_eq!(s2.layers.last().unwrap().out_dims, Dims::new(1, 1, 16, 16));
        let (conv, tconv, act, pool, argmax) = s2.census();
        assert_eq!((conv, tconv, act, pool, argmax), (19, 3, 14, 3, 1));
    }

    #[test]
    fn variant_activation_assignment() {
        for b in 1..=7 {
            assert_eq!(Variant::Baseline.activation(b), ActKind::Relu);
            assert_eq!(Variant::Square.activation(b), ActKind::Square);
            let h = Variant::Hybrid.activation(b);
            if b == 1 || b == 7 {
                assert_eq!(h, ActKind::Square);
            } else {
                assert_eq!(h, ActKind::Relu);
            }
        }
        assert_eq!(Variant::Baseline.pool(), PoolKind::Max);
        assert_eq!(Variant::Hybrid.pool(), PoolKind::Avg);
    }

    #[test]
    fn bad_dims_rejected() {
        assert!(build_architecture(Dims::new(1, 6, 6, 6), 4, 3, Variant::Baseline).is_err());
        assert!(build_architecture(Dims::new(2, 8, 8, 8), 4, 3, Variant::Baseline).is_err());
    }

    #[test]
    fn validate_catches_broken_chain() {
        let mut spec = build_architecture(Dims::new(1, 8, 8, 8), 4, 3, Variant::Baseline).unwrap();
        spec.layers[3].in_dims.c += 1;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn digest_changes_with_structure() {
        let a = build_architecture(Dims::new(1, 8, 8, 8), 4, 3, Variant::Baseline).unwrap();
        let b = build_architecture(Dims::new(1, 8, 8, 8), 4, 3, Variant::Square).unwrap();
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest(), a.digest());
    }
}
