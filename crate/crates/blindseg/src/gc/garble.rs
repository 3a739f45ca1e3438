//! Garbling and evaluation: free XOR with a global offset, free NOT by
//! label swap, and classic four-row point-and-permute tables for AND gates
//! keyed by a SHA-256 derivation of the input labels.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gc::circuit::{Circuit, Gate, W};

fn kdf(gate_id: u64, la: u128, lb: u128) -> u128 {
    let mut h = Sha256::new();
    h.update(gate_id.to_le_bytes());
    h.update(la.to_le_bytes());
    h.update(lb.to_le_bytes());
    let d = h.finalize();
    u128::from_le_bytes(d[..16].try_into().unwrap())
}

fn rand_u128(rng: &mut impl RngCore) -> u128 {
    ((rng.next_u64() as u128) << 64) | rng.next_u64() as u128
}

/// Garbler-side material: the global offset and the zero-label of every
/// wire. Never leaves the garbler.
pub struct Garbling {
    pub r: u128,
    wire0: Vec<u128>,
}

/// The transferable part: one 4-row table per AND gate.
pub struct GarbledTables {
    pub tables: Vec<[u128; 4]>,
}

impl Garbling {
    /// Label pair for a wire.
    pub fn labels(&self, wire: u32) -> (u128, u128) {
        let w0 = self.wire0[wire as usize];
        (w0, w0 ^ self.r)
    }

    /// Active label for an input bit.
    pub fn input_label(&self, wire: u32, value: bool) -> u128 {
        let (w0, w1) = self.labels(wire);
        if value {
            w1
        } else {
            w0
        }
    }

    /// Decode one output label; errors if the label is neither of the pair
    /// (which means the evaluator tampered or evaluated a different circuit).
    pub fn decode_output(&self, circuit: &Circuit, index: usize, label: u128) -> Result<bool> {
        match circuit.outputs[index] {
            W::Const(c) => Ok(c),
            W::Wire(i) => {
                let (w0, w1) = self.labels(i);
                if label == w0 {
                    Ok(false)
                } else if label == w1 {
                    Ok(true)
                } else {
                    Err(Error::GcDecode(format!("unrecognized label for output {index}")))
                }
            }
        }
    }
}

/// Garble a circuit deterministically from a seed.
pub fn garble(circuit: &Circuit, seed: [u8; 32]) -> (Garbling, GarbledTables) {
    let mut rng = ChaCha20Rng::from_seed(seed);
    let mut r = rand_u128(&mut rng);
    r |= 1; // keep the permute bit of every pair complementary
    let n_in = circuit.inputs_a + circuit.inputs_b;
    let mut wire0 = Vec::with_capacity(circuit.num_wires());
    for _ in 0..n_in {
        wire0.push(rand_u128(&mut rng));
    }
    let mut tables = Vec::with_capacity(circuit.and_count());
    for (gi, gate) in circuit.gates.iter().enumerate() {
        let w0 = match *gate {
            Gate::Xor(a, b) => wire0[a as usize] ^ wire0[b as usize],
            Gate::Not(a) => wire0[a as usize] ^ r,
            Gate::And(a, b) => {
                let out0 = rand_u128(&mut rng);
                let mut table = [0u128; 4];
                for va in 0..2u8 {
                    for vb in 0..2u8 {
                        let la = wire0[a as usize] ^ if va == 1 { r } else { 0 };
                        let lb = wire0[b as usize] ^ if vb == 1 { r } else { 0 };
                        let out_val = va & vb == 1;
                        let row = ((la as u8 & 1) << 1 | (lb as u8 & 1)) as usize;
                        let out_label = out0 ^ if out_val { r } else { 0 };
                        table[row] = kdf(gi as u64, la, lb) ^ out_label;
                    }
                }
                tables.push(table);
                out0
            }
        };
        wire0.push(w0);
    }
    (Garbling { r, wire0 }, GarbledTables { tables })
}

/// Evaluate with one active label per input wire (Alice's inputs first,
/// then Bob's). Returns the active labels of the non-constant outputs, in
/// output order with constants skipped.
pub fn evaluate(circuit: &Circuit, tables: &GarbledTables, inputs: &[u128]) -> Result<Vec<u128>> {
    let n_in = circuit.inputs_a + circuit.inputs_b;
    if inputs.len() != n_in {
        return Err(Error::Mismatch("garbled input count".into()));
    }
    if tables.tables.len() != circuit.and_count() {
        return Err(Error::Mismatch("garbled table count".into()));
    }
    let mut labels = Vec::with_capacity(circuit.num_wires());
    labels.extend_from_slice(inputs);
    let mut and_idx = 0;
    for (gi, gate) in circuit.gates.iter().enumerate() {
        let l = match *gate {
            Gate::Xor(a, b) => labels[a as usize] ^ labels[b as usize],
            // the garbler swapped the label pair; the active label carries over
            Gate::Not(a) => labels[a as usize],
            Gate::And(a, b) => {
                let la = labels[a as usize];
                let lb = labels[b as usize];
                let row = ((la as u8 & 1) << 1 | (lb as u8 & 1)) as usize;
                let l = tables.tables[and_idx][row] ^ kdf(gi as u64, la, lb);
                and_idx += 1;
                l
            }
        };
        labels.push(l);
    }
    Ok(circuit
        .outputs
        .iter()
        .filter_map(|o| match *o {
            W::Const(_) => None,
            W::Wire(i) => Some(labels[i as usize]),
        })
        .collect())
}

/// Garbler-side decode of the evaluator's returned labels into output bits.
pub fn decode_outputs(
    garbling: &Garbling,
    circuit: &Circuit,
    labels: &[u128],
) -> Result<Vec<bool>> {
    let mut out = Vec::with_capacity(circuit.outputs.len());
    let mut li = 0;
    for (i, o) in circuit.outputs.iter().enumerate() {
        match *o {
            W::Const(c) => out.push(c),
            W::Wire(_) => {
                let label = *labels
                    .get(li)
                    .ok_or_else(|| Error::GcDecode("missing output label".into()))?;
                li += 1;
                out.push(garbling.decode_output(circuit, i, label)?);
            }
        }
    }
    if li != labels.len() {
        return Err(Error::GcDecode("excess output labels".into()));
    }
    Ok(out)
}

pub fn tables_to_bytes(t: &GarbledTables) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 * t.tables.len());
    for table in &t.tables {
        for row in table {
            out.extend_from_slice(&row.to_le_bytes());
        }
    }
    out
}

pub fn tables_from_bytes(bytes: &[u8]) -> Result<GarbledTables> {
    if bytes.len() % 64 != 0 {
        return Err(Error::Format("garbled table blob size".into()));
    }
    let tables = bytes
        .chunks_exact(64)
        .map(|c| {
            let mut t = [0u128; 4];
            for (i, row) in c.chunks_exact(16).enumerate() {
                t[i] = u128::from_le_bytes(row.try_into().unwrap());
            }
            t
        })
        .collect();
    Ok(GarbledTables { tables })
}

pub fn labels_to_bytes(labels: &[u128]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 * labels.len());
    for l in labels {
        out.extend_from_slice(&l.to_le_bytes());
    }
    out
}

pub fn labels_from_bytes(bytes: &[u8]) -> Result<Vec<u128>> {
    if bytes.len() % 16 != 0 {
        return Err(Error::Format("label blob size".into()));
    }
    Ok(bytes
        .chunks_exact(16)
        .map(|c| u128::from_le_bytes(c.try_into().unwrap()))
        .collect())
}
