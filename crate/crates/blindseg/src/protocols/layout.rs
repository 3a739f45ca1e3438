//! Tensor raster layout and the overlap-save tiling planner for
//! frequency-domain convolution.
//!
//! Tensors travel between layers as flat share vectors in raster order:
//! channel-major, then depth, height, width (width fastest). Convolutions
//! map a spatial tile onto one ring polynomial; the planner splits the
//! volume into tiles whose zero-padded flattened length plus the largest
//! filter-tap offset fits inside the ring degree, so the negacyclic product
//! never wraps and each in-tile product coefficient equals one linear
//! convolution output.

use crate::error::{Error, Result};
use crate::unet::Dims;

/// Flat raster index of (c, z, y, x) in a tensor of shape `dims`.
pub fn raster_index(dims: Dims, c: usize, z: usize, y: usize, x: usize) -> usize {
    ((c * dims.d + z) * dims.h + y) * dims.w + x
}

/// One output tile of a planned convolution: the output z/y ranges it
/// covers (full x width) and the padded input block feeding it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Tile {
    pub z0: usize,
    pub z1: usize,
    pub y0: usize,
    pub y1: usize,
    /// Padded input block dims: (z1-z0+kd-1, y1-y0+kh-1, W+kw-1).
    pub pd: usize,
    pub ph: usize,
    pub pw: usize,
}

impl Tile {
    /// Flattened padded-block length (the polynomial degree bound).
    pub fn len(&self) -> usize {
        self.pd * self.ph * self.pw
    }

    /// Largest tap offset within this tile's padded geometry.
    pub fn delta_max(&self, kd: usize, kh: usize, kw: usize) -> usize {
        ((kd - 1) * self.ph + (kh - 1)) * self.pw + (kw - 1)
    }

    /// Tap offset of filter position (dz, dy, dx) in the padded geometry.
    pub fn delta(&self, dz: usize, dy: usize, dx: usize) -> usize {
        (dz * self.ph + dy) * self.pw + dx
    }

    /// Coefficient index where output (z, y, x) (absolute coords) lands in
    /// the tile product polynomial.
    pub fn read_index(&self, z: usize, y: usize, x: usize, kd: usize, kh: usize, kw: usize) -> usize {
        ((z - self.z0) * self.ph + (y - self.y0)) * self.pw + x + self.delta_max(kd, kh, kw)
    }
}

/// Tiling plan for one same-padded stride-1 convolution layer.
#[derive(Clone, Debug)]
pub struct ConvPlan {
    pub in_dims: Dims,
    pub out_c: usize,
    pub kd: usize,
    pub kh: usize,
    pub kw: usize,
    /// Ring degree every padded tile must fit under.
    pub n: usize,
    pub tiles: Vec<Tile>,
}

impl ConvPlan {
    pub fn new(in_dims: Dims, out_c: usize, (kd, kh, kw): (usize, usize, usize), n: usize) -> Result<ConvPlan> {
        if kd % 2 == 0 || kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::Layout("same-size conv needs odd filter dims".into()));
        }
        let make = |tz: usize, ty: usize| Tile {
            z0: 0,
            z1: tz,
            y0: 0,
            y1: ty,
            pd: tz + kd - 1,
            ph: ty + kh - 1,
            pw: in_dims.w + kw - 1,
        };
        let fits = |tz: usize, ty: usize| {
            let t = make(tz, ty);
            t.len() + t.delta_max(kd, kh, kw) <= n
        };
        // shrink the tile extents until the padded block fits the ring
        let (mut tz, mut ty) = (in_dims.d, in_dims.h);
        while !fits(tz, ty) {
            if tz > 1 && (tz >= ty || ty == 1) {
                tz = tz.div_ceil(2);
            } else if ty > 1 {
                ty = ty.div_ceil(2);
            } else {
                return Err(Error::Layout(format!(
                    "one padded row block of {}x{}x{} filter on width {} exceeds ring degree {n}",
                    kd, kh, kw, in_dims.w
                )));
            }
        }
        let mut tiles = Vec::new();
        let mut z0 = 0;
        while z0 < in_dims.d {
            let z1 = (z0 + tz).min(in_dims.d);
            let mut y0 = 0;
            while y0 < in_dims.h {
                let y1 = (y0 + ty).min(in_dims.h);
                tiles.push(Tile {
                    z0,
                    z1,
                    y0,
                    y1,
                    pd: z1 - z0 + kd - 1,
                    ph: y1 - y0 + kh - 1,
                    pw: in_dims.w + kw - 1,
                });
                y0 = y1;
            }
            z0 = z1;
        }
        let plan = ConvPlan {
            in_dims,
            out_c,
            kd,
            kh,
            kw,
            n,
            tiles,
        };
        plan.validate()?;
        Ok(plan)
    }

    /// The tile invariant: padded length plus the largest tap offset must
    /// stay within the ring degree, and the tiles must cover the volume.
    pub fn validate(&self) -> Result<()> {
        let mut covered = 0usize;
        for t in &self.tiles {
            if t.len() + t.delta_max(self.kd, self.kh, self.kw) > self.n {
                return Err(Error::Layout(format!(
                    "tile {}..{}x{}..{} overflows ring degree {}",
                    t.z0, t.z1, t.y0, t.y1, self.n
                )));
            }
            if t.z1 <= t.z0 || t.y1 <= t.y0 || t.z1 > self.in_dims.d || t.y1 > self.in_dims.h {
                return Err(Error::Layout("tile outside tensor".into()));
            }
            covered += (t.z1 - t.z0) * (t.y1 - t.y0);
        }
        if covered != self.in_dims.d * self.in_dims.h {
            return Err(Error::Layout("tiles do not cover the tensor".into()));
        }
        Ok(())
    }

    /// Extract one channel's padded input block for a tile, flattened, with
    /// zeros where the halo falls outside the image, padded to length `n`.
    pub fn gather_tile(&self, tile: &Tile, chan: &[u64], _p: u64) -> Vec<u64> {
        let (rd, rh, rw) = (self.kd / 2, self.kh / 2, self.kw / 2);
        let d = self.in_dims;
        let mut out = vec![0u64; self.n];
        for dz in 0..tile.pd {
            let z = (tile.z0 + dz).checked_sub(rd);
            for dy in 0..tile.ph {
                let y = (tile.y0 + dy).checked_sub(rh);
                for dx in 0..tile.pw {
                    let x = dx.checked_sub(rw);
                    if let (Some(z), Some(y), Some(x)) = (z, y, x) {
                        if z < d.d && y < d.h && x < d.w {
                            out[(dz * tile.ph + dy) * tile.pw + dx] =
                                chan[(z * d.h + y) * d.w + x];
                        }
                    }
                }
            }
        }
        out
    }
}

/// Tiling plan for a transposed (fractionally-strided) convolution with
/// kernel == stride. The interleaved input of one output z-slab maps to a
/// polynomial; all taps stay inside one stride block, so no halo is needed.
#[derive(Clone, Debug)]
pub struct TconvPlan {
    pub in_dims: Dims,
    pub out_c: usize,
    pub sd: usize,
    pub sh: usize,
    pub sw: usize,
    pub n: usize,
    /// Output z-ranges (multiples of sd), full y/x extent.
    pub slabs: Vec<(usize, usize)>,
    /// Output spatial dims.
    pub od: usize,
    pub oh: usize,
    pub ow: usize,
}

impl TconvPlan {
    pub fn new(in_dims: Dims, out_c: usize, (sd, sh, sw): (usize, usize, usize), n: usize) -> Result<TconvPlan> {
        let (od, oh, ow) = (in_dims.d * sd, in_dims.h * sh, in_dims.w * sw);
        let delta_max = ((sd - 1) * oh + (sh - 1)) * ow + (sw - 1);
        let slab_rows = oh * ow;
        // whole z-slabs of the output volume; each must fit the ring
        let mut tz = od;
        while tz > sd && tz * slab_rows + delta_max > n {
            tz = (tz / 2).div_ceil(sd) * sd;
        }
        if tz * slab_rows + delta_max > n {
            return Err(Error::Layout(format!(
                "one stride slab ({} values) exceeds ring degree {n}",
                sd * slab_rows
            )));
        }
        let mut slabs = Vec::new();
        let mut z0 = 0;
        while z0 < od {
            let z1 = (z0 + tz).min(od);
            slabs.push((z0, z1));
            z0 = z1;
        }
        Ok(TconvPlan {
            in_dims,
            out_c,
            sd,
            sh,
            sw,
            n,
            slabs,
            od,
            oh,
            ow,
        })
    }

    /// Tap offset of filter position (dz, dy, dx) in output geometry.
    pub fn delta(&self, dz: usize, dy: usize, dx: usize) -> usize {
        (dz * self.oh + dy) * self.ow + dx
    }

    /// One channel of the zero-interleaved input restricted to an output
    /// z-slab, flattened in output geometry, padded to `n`.
    pub fn gather_slab(&self, (z0, z1): (usize, usize), chan: &[u64]) -> Vec<u64> {
        let d = self.in_dims;
        let mut out = vec![0u64; self.n];
        for z in z0 / self.sd..z1 / self.sd {
            for y in 0..d.h {
                for x in 0..d.w {
                    let oz = z * self.sd - z0;
                    let idx = (oz * self.oh + y * self.sh) * self.ow + x * self.sw;
                    out[idx] = chan[(z * d.h + y) * d.w + x];
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raster_order_is_channel_major_width_fastest() {
        let d = Dims::new(2, 3, 4, 5);
        assert_eq!(raster_index(d, 0, 0, 0, 0), 0);
        assert_eq!(raster_index(d, 0, 0, 0, 1), 1);
        assert_eq!(raster_index(d, 0, 0, 1, 0), 5);
        assert_eq!(raster_index(d, 0, 1, 0, 0), 20);
        assert_eq!(raster_index(d, 1, 0, 0, 0), 60);
        // bijective over the tensor
        let mut seen = vec![false; d.numel()];
        for c in 0..d.c {
            for z in 0..d.d {
                for y in 0..d.h {
                    for x in 0..d.w {
                        let i = raster_index(d, c, z, y, x);
                        assert!(!seen[i]);
                        seen[i] = true;
                    }
                }
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn small_volume_is_single_tile() {
        let plan = ConvPlan::new(Dims::new(1, 8, 8, 8), 1, (3, 3, 3), 2048).unwrap();
        assert_eq!(plan.tiles.len(), 1);
        let t = &plan.tiles[0];
        assert_eq!((t.pd, t.ph, t.pw), (10, 10, 10));
        assert!(t.len() + t.delta_max(3, 3, 3) <= 2048);
    }

    #[test]
    fn large_volume_tiles_and_covers() {
        let plan = ConvPlan::new(Dims::new(1, 16, 16, 16), 1, (3, 3, 3), 2048).unwrap();
        assert!(plan.tiles.len() > 1);
        plan.validate().unwrap();
        // 2-D case
        let plan2 = ConvPlan::new(Dims::new(1, 1, 64, 64), 1, (1, 3, 3), 2048).unwrap();
        assert!(plan2.tiles.len() > 1);
        plan2.validate().unwrap();
    }

    #[test]
    fn impossible_geometry_rejected() {
        assert!(ConvPlan::new(Dims::new(1, 4, 4, 4000), 1, (3, 3, 3), 2048).is_err());
        assert!(ConvPlan::new(Dims::new(1, 4, 4, 4), 1, (2, 3, 3), 2048).is_err());
    }

    #[test]
    fn gather_tile_zero_pads_borders() {
        let plan = ConvPlan::new(Dims::new(1, 1, 2, 2), 1, (1, 3, 3), 64).unwrap();
        let chan = vec![1, 2, 3, 4];
        let t = plan.tiles[0];
        let block = plan.gather_tile(&t, &chan, 97);
        // padded 1x4x4 block: border ring of zeros around the 2x2 payload
        assert_eq!(
            &block[..16],
            &[0, 0, 0, 0, 0, 1, 2, 0, 0, 3, 4, 0, 0, 0, 0, 0]
        );
        assert!(block[16..].iter().all(|&v| v == 0));
    }

    #[test]
    fn tconv_slab_interleaves() {
        let plan = TconvPlan::new(Dims::new(1, 1, 1, 2), 1, (1, 1, 2), 16).unwrap();
        assert_eq!(plan.slabs, vec![(0, 1)]);
        let block = plan.gather_slab((0, 1), &[5, 9]);
        assert_eq!(&block[..4], &[5, 0, 9, 0]);
        // 3-D slab split
        let plan3 = TconvPlan::new(Dims::new(1, 8, 8, 8), 1, (2, 2, 2), 2048).unwrap();
        assert!(plan3.slabs.len() > 1);
        assert!(plan3.slabs.iter().all(|&(z0, z1)| z0 % 2 == 0 && z1 % 2 == 0));
        let total: usize = plan3.slabs.iter().map(|&(z0, z1)| z1 - z0).sum();
        assert_eq!(total, 16);
    }
}
