//! Plaintext reference executor: pure signed-integer inference with the
//! same raster layout, signed convention, requantization shifts, pooling
//! divisor folding, and argmax tie-breaking as the secure protocol. In
//! exact-truncation mode its output is the bit-level ground truth the
//! secure path must match.

use crate::error::{Error, Result};
use crate::unet::quant::Weights;
use crate::unet::{ActKind, Dims, LayerKind, NetworkSpec, PoolKind};

/// Truncation discipline of the secure counterpart. The oracle always
/// computes the exact floor shift; in probabilistic mode the secure path may
/// exceed it by one unit per truncation, which equivalence tests account
/// for as slack.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum TruncMode {
    Exact,
    Prob,
}

/// Signed integer tensor in raster order: channel-major, then depth,
/// height, width fastest.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Tensor {
    pub dims: Dims,
    pub data: Vec<i64>,
}

impl Tensor {
    pub fn zeros(dims: Dims) -> Self {
        Tensor {
            data: vec![0; dims.numel()],
            dims,
        }
    }

    pub fn new(dims: Dims, data: Vec<i64>) -> Result<Self> {
        if data.len() != dims.numel() {
            return Err(Error::Mismatch("tensor data length".into()));
        }
        Ok(Tensor { dims, data })
    }

    pub fn flat(&self, c: usize, z: usize, y: usize, x: usize) -> usize {
        ((c * self.dims.d + z) * self.dims.h + y) * self.dims.w + x
    }

    pub fn at(&self, c: usize, z: usize, y: usize, x: usize) -> i64 {
        self.data[self.flat(c, z, y, x)]
    }
}

fn check_bounds(t: &Tensor, p: u64, layer: usize) -> Result<()> {
    let half = ((p - 1) / 2) as i64;
    if let Some(&v) = t.data.iter().find(|v| v.abs() > half) {
        return Err(Error::QuantOverflow {
            layer: format!("layer {layer}"),
            detail: format!("value {v} exceeds +/-(p-1)/2 = {half}"),
        });
    }
    Ok(())
}

/// Same-size zero-padded cross-correlation, then an arithmetic right shift.
pub fn conv_ref(input: &Tensor, w: &crate::unet::quant::ConvWeights, shift: u32) -> Tensor {
    let din = input.dims;
    let out_dims = Dims { c: w.out_c, ..din };
    let (pd, ph, pw) = (w.kd / 2, w.kh / 2, w.kw / 2);
    let mut out = Tensor::zeros(out_dims);
    for o in 0..w.out_c {
        for z in 0..din.d {
            for y in 0..din.h {
                for x in 0..din.w {
                    let mut acc: i64 = 0;
                    for i in 0..w.in_c {
                        for dz in 0..w.kd {
                            let sz = z + dz;
                            if sz < pd || sz - pd >= din.d {
                                continue;
                            }
                            for dy in 0..w.kh {
                                let sy = y + dy;
                                if sy < ph || sy - ph >= din.h {
                                    continue;
                                }
                                for dx in 0..w.kw {
                                    let sx = x + dx;
                                    if sx < pw || sx - pw >= din.w {
                                        continue;
                                    }
                                    acc += input.at(i, sz - pd, sy - ph, sx - pw)
                                        * w.at(o, i, dz, dy, dx);
                                }
                            }
                        }
                    }
                    let idx = out.flat(o, z, y, x);
                    out.data[idx] = acc >> shift;
                }
            }
        }
    }
    out
}

/// Transposed convolution: zeros interleaved at the stride, then a full
/// true convolution (kernel flipped relative to cross-correlation), then a
/// right shift. With kernel == stride each strided axis exactly doubles.
pub fn transposed_conv_ref(
    input: &Tensor,
    w: &crate::unet::quant::ConvWeights,
    stride: (usize, usize, usize),
    shift: u32,
) -> Tensor {
    let din = input.dims;
    let (sd, sh, sw) = stride;
    let out_dims = Dims {
        c: w.out_c,
        d: din.d * sd,
        h: din.h * sh,
        w: din.w * sw,
    };
    let mut out = Tensor::zeros(out_dims);
    // out[n] = sum_m interleaved[m] * w[n - m]; interleaved[m] is nonzero
    // only at m = s*j, so iterate input positions directly
    for o in 0..w.out_c {
        for i in 0..w.in_c {
            for z in 0..din.d {
                for y in 0..din.h {
                    for x in 0..din.w {
                        let v = input.at(i, z, y, x);
                        if v == 0 {
                            continue;
                        }
                        for dz in 0..w.kd {
                            for dy in 0..w.kh {
                                for dx in 0..w.kw {
                                    let (oz, oy, ox) = (z * sd + dz, y * sh + dy, x * sw + dx);
                                    if oz < out_dims.d && oy < out_dims.h && ox < out_dims.w {
                                        let idx = out.flat(o, oz, oy, ox);
                                        out.data[idx] += v * w.at(o, i, dz, dy, dx);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    for v in &mut out.data {
        *v >>= shift;
    }
    out
}

fn pool_ref(input: &Tensor, kind: PoolKind, zd: usize, zh: usize, zw: usize) -> Tensor {
    let din = input.dims;
    let out_dims = Dims {
        c: din.c,
        d: din.d / zd,
        h: din.h / zh,
        w: din.w / zw,
    };
    let mut out = Tensor::zeros(out_dims);
    for c in 0..din.c {
        for z in 0..out_dims.d {
            for y in 0..out_dims.h {
                for x in 0..out_dims.w {
                    let mut acc: Option<i64> = None;
                    for dz in 0..zd {
                        for dy in 0..zh {
                            for dx in 0..zw {
                                let v = input.at(c, z * zd + dz, y * zh + dy, x * zw + dx);
                                acc = Some(match (acc, kind) {
                                    (None, _) => v,
                                    (Some(a), PoolKind::Avg) => a + v,
                                    (Some(a), PoolKind::Max) => a.max(v),
                                });
                            }
                        }
                    }
                    let idx = out.flat(c, z, y, x);
                    out.data[idx] = acc.unwrap();
                }
            }
        }
    }
    out
}

fn concat_ref(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if (a.dims.d, a.dims.h, a.dims.w) != (b.dims.d, b.dims.h, b.dims.w) {
        return Err(Error::Mismatch("concat spatial dims".into()));
    }
    let dims = Dims {
        c: a.dims.c + b.dims.c,
        ..a.dims
    };
    let mut data = a.data.clone();
    data.extend_from_slice(&b.data);
    Tensor::new(dims, data)
}

fn argmax_ref(input: &Tensor) -> Tensor {
    let din = input.dims;
    let out_dims = Dims { c: 1, ..din };
    let mut out = Tensor::zeros(out_dims);
    for z in 0..din.d {
        for y in 0..din.h {
            for x in 0..din.w {
                let mut best = 0usize;
                for c in 1..din.c {
                    if input.at(c, z, y, x) > input.at(best, z, y, x) {
                        best = c;
                    }
                }
                let idx = out.flat(0, z, y, x);
                out.data[idx] = best as i64;
            }
        }
    }
    out
}

/// Run the network in plaintext. Returns the label map and the output of
/// every layer (same indexing as `spec.layers`).
pub fn oracle_infer(
    spec: &NetworkSpec,
    weights: &Weights,
    input: &Tensor,
    _mode: TruncMode,
    p: u64,
) -> Result<(Tensor, Vec<Tensor>)> {
    if input.dims != spec.input {
        return Err(Error::Mismatch("oracle input dims".into()));
    }
    check_bounds(input, p, usize::MAX)?;
    let mut cur = input.clone();
    let mut intermediates: Vec<Tensor> = Vec::with_capacity(spec.layers.len());
    for (idx, layer) in spec.layers.iter().enumerate() {
        cur = match &layer.kind {
            LayerKind::Conv { requant_f, .. } => {
                let w = weights
                    .by_layer
                    .get(&idx)
                    .ok_or_else(|| Error::Spec(format!("missing weights for layer {idx}")))?;
                conv_ref(&cur, w, *requant_f)
            }
            LayerKind::TransposedConv {
                sd,
                sh,
                sw,
                requant_f,
                ..
            } => {
                let w = weights
                    .by_layer
                    .get(&idx)
                    .ok_or_else(|| Error::Spec(format!("missing weights for layer {idx}")))?;
                transposed_conv_ref(&cur, w, (*sd, *sh, *sw), *requant_f)
            }
            LayerKind::Activation { kind: ActKind::Relu } => Tensor {
                dims: cur.dims,
                data: cur.data.iter().map(|&v| v.max(0)).collect(),
            },
            LayerKind::Activation {
                kind: ActKind::Square,
            } => Tensor {
                dims: cur.dims,
                data: cur.data.iter().map(|&v| v * v).collect(),
            },
            LayerKind::Quantize { f } => Tensor {
                dims: cur.dims,
                data: cur.data.iter().map(|&v| v >> f).collect(),
            },
            LayerKind::Pool { kind, zd, zh, zw } => pool_ref(&cur, *kind, *zd, *zh, *zw),
            LayerKind::Concat { skip_from } => concat_ref(&cur, &intermediates[*skip_from])?,
            LayerKind::Argmax => argmax_ref(&cur),
        };
        if cur.dims != layer.out_dims {
            return Err(Error::Spec(format!(
                "layer {idx}: produced dims {:?}, spec says {:?}",
                cur.dims, layer.out_dims
            )));
        }
        check_bounds(&cur, p, idx)?;
        intermediates.push(cur.clone());
    }
    Ok((cur, intermediates))
}
