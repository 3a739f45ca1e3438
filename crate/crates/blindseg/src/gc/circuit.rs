//! Boolean circuits over AND/XOR/NOT with a builder that folds constants,
//! plus a plaintext evaluator used as the reference in tests.
//!
//! Wire numbering: Alice's input bits first, then Bob's, then one wire per
//! gate in issue order. The builder works with [`W`] values so constants
//! never materialize as gates unless they reach an output.

use crate::error::{Error, Result};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Gate {
    And(u32, u32),
    Xor(u32, u32),
    /// Free under garbling: the garbler re-labels, the evaluator passes the
    /// label through.
    Not(u32),
}

/// A builder-level wire: a real circuit wire or a known constant.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum W {
    Const(bool),
    Wire(u32),
}

pub struct Circuit {
    pub inputs_a: usize,
    pub inputs_b: usize,
    pub gates: Vec<Gate>,
    pub outputs: Vec<W>,
}

impl Circuit {
    pub fn num_wires(&self) -> usize {
        self.inputs_a + self.inputs_b + self.gates.len()
    }

    pub fn and_count(&self) -> usize {
        self.gates
            .iter()
            .filter(|g| matches!(g, Gate::And(_, _)))
            .count()
    }

    /// Plaintext evaluation, LSB-first bit inputs per party.
    pub fn eval(&self, a: &[bool], b: &[bool]) -> Result<Vec<bool>> {
        if a.len() != self.inputs_a || b.len() != self.inputs_b {
            return Err(Error::Mismatch("circuit input width".into()));
        }
        let mut vals = Vec::with_capacity(self.num_wires());
        vals.extend_from_slice(a);
        vals.extend_from_slice(b);
        for g in &self.gates {
            let v = match *g {
                Gate::And(x, y) => vals[x as usize] & vals[y as usize],
                Gate::Xor(x, y) => vals[x as usize] ^ vals[y as usize],
                Gate::Not(x) => !vals[x as usize],
            };
            vals.push(v);
        }
        Ok(self
            .outputs
            .iter()
            .map(|o| match *o {
                W::Const(c) => c,
                W::Wire(i) => vals[i as usize],
            })
            .collect())
    }

    /// Stable digest of the circuit topology; exchanged before garbling so
    /// both parties agree on what they are executing.
    pub fn digest(&self) -> [u8; 32] {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update((self.inputs_a as u64).to_le_bytes());
        h.update((self.inputs_b as u64).to_le_bytes());
        for g in &self.gates {
            let (t, x, y): (u8, u32, u32) = match *g {
                Gate::And(x, y) => (0, x, y),
                Gate::Xor(x, y) => (1, x, y),
                Gate::Not(x) => (2, x, 0),
            };
            h.update([t]);
            h.update(x.to_le_bytes());
            h.update(y.to_le_bytes());
        }
        for o in &self.outputs {
            match *o {
                W::Const(c) => h.update([3, c as u8, 0, 0, 0, 0, 0, 0, 0]),
                W::Wire(i) => {
                    h.update([4]);
                    h.update(i.to_le_bytes());
                    h.update([0, 0, 0, 0]);
                }
            }
        }
        h.finalize().into()
    }
}

const BOB_BASE: u32 = 1 << 31;

pub struct Builder {
    inputs_a: usize,
    inputs_b: usize,
    gates: Vec<Gate>,
    sealed_inputs: bool,
}

impl Builder {
    pub fn new() -> Self {
        Builder {
            inputs_a: 0,
            inputs_b: 0,
            gates: Vec::new(),
            sealed_inputs: false,
        }
    }

    /// Allocate `n` input bits for Alice (LSB-first within each value the
    /// caller packs). All inputs must be allocated before any gate is built.
    pub fn inputs_a(&mut self, n: usize) -> Vec<W> {
        assert!(!self.sealed_inputs, "inputs after gates");
        let start = self.inputs_a as u32;
        self.inputs_a += n;
        (start..start + n as u32).map(W::Wire).collect()
    }

    pub fn inputs_b(&mut self, n: usize) -> Vec<W> {
        assert!(!self.sealed_inputs, "inputs after gates");
        // Bob's wires come after all of Alice's; allocated in a reserved
        // high range and translated when referenced, so Alice's inputs can
        // keep growing.
        let start = BOB_BASE + self.inputs_b as u32;
        self.inputs_b += n;
        (start..start + n as u32).map(W::Wire).collect()
    }

    fn fix(&self, w: W) -> W {
        match w {
            W::Wire(i) if i >= BOB_BASE => W::Wire(i - BOB_BASE + self.inputs_a as u32),
            other => other,
        }
    }

    fn push(&mut self, g: Gate) -> W {
        self.sealed_inputs = true;
        let idx = (self.inputs_a + self.inputs_b + self.gates.len()) as u32;
        self.gates.push(g);
        W::Wire(idx)
    }

    fn wire(&mut self, w: W) -> u32 {
        match self.fix(w) {
            W::Wire(i) => i,
            W::Const(_) => unreachable!("constant reached gate input"),
        }
    }

    pub fn xor(&mut self, a: W, b: W) -> W {
        match (self.fix(a), self.fix(b)) {
            (W::Const(x), W::Const(y)) => W::Const(x ^ y),
            (W::Const(false), w) | (w, W::Const(false)) => w,
            (W::Const(true), w) | (w, W::Const(true)) => self.not(w),
            (x, y) if x == y => W::Const(false),
            (x, y) => {
                let (i, j) = (self.wire(x), self.wire(y));
                self.push(Gate::Xor(i, j))
            }
        }
    }

    pub fn and(&mut self, a: W, b: W) -> W {
        match (self.fix(a), self.fix(b)) {
            (W::Const(x), W::Const(y)) => W::Const(x & y),
            (W::Const(false), _) | (_, W::Const(false)) => W::Const(false),
            (W::Const(true), w) | (w, W::Const(true)) => w,
            (x, y) if x == y => x,
            (x, y) => {
                let (i, j) = (self.wire(x), self.wire(y));
                self.push(Gate::And(i, j))
            }
        }
    }

    pub fn not(&mut self, a: W) -> W {
        match self.fix(a) {
            W::Const(x) => W::Const(!x),
            w => {
                let i = self.wire(w);
                self.push(Gate::Not(i))
            }
        }
    }

    pub fn or(&mut self, a: W, b: W) -> W {
        let na = self.not(a);
        let nb = self.not(b);
        let n = self.and(na, nb);
        self.not(n)
    }

    /// sel ? a : b, bit-wise. One AND per bit.
    pub fn mux(&mut self, sel: W, a: &[W], b: &[W]) -> Vec<W> {
        assert_eq!(a.len(), b.len());
        a.iter()
            .zip(b)
            .map(|(&x, &y)| {
                let d = self.xor(x, y);
                let m = self.and(sel, d);
                self.xor(y, m)
            })
            .collect()
    }

    /// Ripple-carry addition with carry-in; returns sum bits (same width)
    /// and the carry-out. Two ANDs per bit.
    pub fn add_with_carry(&mut self, xs: &[W], ys: &[W], cin: W) -> (Vec<W>, W) {
        assert_eq!(xs.len(), ys.len());
        let mut c = cin;
        let mut out = Vec::with_capacity(xs.len());
        for (&x, &y) in xs.iter().zip(ys) {
            let xy = self.xor(x, y);
            let s = self.xor(xy, c);
            let t1 = self.and(x, y);
            let t2 = self.and(c, xy);
            c = self.xor(t1, t2);
            out.push(s);
        }
        (out, c)
    }

    pub fn add(&mut self, xs: &[W], ys: &[W]) -> (Vec<W>, W) {
        self.add_with_carry(xs, ys, W::Const(false))
    }

    /// x - y as two's complement; the returned flag is true when x >= y
    /// (no borrow).
    pub fn sub(&mut self, xs: &[W], ys: &[W]) -> (Vec<W>, W) {
        let ny: Vec<W> = ys.iter().map(|&y| self.not(y)).collect();
        self.add_with_carry(xs, &ny, W::Const(true))
    }

    /// x >= y on equal-width unsigned values.
    pub fn geq(&mut self, xs: &[W], ys: &[W]) -> W {
        self.sub(xs, ys).1
    }

    pub fn const_bits(&self, value: u64, width: usize) -> Vec<W> {
        (0..width).map(|i| W::Const(value >> i & 1 == 1)).collect()
    }

    /// (x + y) mod p for x, y < p, fixed width covering p.
    pub fn mod_add(&mut self, xs: &[W], ys: &[W], p: u64) -> Vec<W> {
        let k = xs.len();
        let mut xw: Vec<W> = xs.to_vec();
        let mut yw: Vec<W> = ys.to_vec();
        xw.push(W::Const(false));
        yw.push(W::Const(false));
        let (t, _) = self.add(&xw, &yw);
        let pb = self.const_bits(p, k + 1);
        let (d, ge) = self.sub(&t, &pb);
        let r = self.mux(ge, &d, &t);
        r[..k].to_vec()
    }

    /// (x - y) mod p for x, y < p.
    pub fn mod_sub(&mut self, xs: &[W], ys: &[W], p: u64) -> Vec<W> {
        let k = xs.len();
        let (d, ge) = self.sub(xs, ys);
        let pb = self.const_bits(p, k);
        let (wrapped, _) = self.add(&d, &pb);
        self.mux(ge, &d, &wrapped)
    }

    pub fn finish(self, outputs: Vec<W>) -> Circuit {
        let offset = self.inputs_a;
        let outputs = outputs
            .into_iter()
            .map(|w| match w {
                W::Wire(i) if i >= BOB_BASE => W::Wire(i - BOB_BASE + offset as u32),
                other => other,
            })
            .collect();
        Circuit {
            inputs_a: self.inputs_a,
            inputs_b: self.inputs_b,
            gates: self.gates,
            outputs,
        }
    }
}

impl Default for Builder {
    fn default() -> Self {
        Self::new()
    }
}

/// LSB-first bit decomposition helpers used by the application circuits and
/// their tests.
pub fn to_bits(value: u64, width: usize) -> Vec<bool> {
    (0..width).map(|i| value >> i & 1 == 1).collect()
}

pub fn from_bits(bits: &[bool]) -> u64 {
    bits.iter()
        .enumerate()
        .fold(0u64, |acc, (i, &b)| acc | (b as u64) << i)
}
