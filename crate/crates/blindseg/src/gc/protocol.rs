//! Two-party garbled-circuit execution over a [`Link`].
//!
//! The garbler sends the tables and its own active input labels; the
//! evaluator obtains labels for its input bits through dealer-assisted
//! oblivious transfer, evaluates, and returns the output labels. Only the
//! garbler can decode (it holds the label pairs), and a forged output label
//! fails decoding, so evaluator tampering aborts instead of corrupting.

use crate::error::{Error, Result};
use crate::gc::circuit::Circuit;
use crate::gc::garble::{
    evaluate, garble, labels_from_bytes, labels_to_bytes, tables_from_bytes, tables_to_bytes,
    decode_outputs,
};
use crate::mpc::{OtReceiverPad, OtSenderPad};
use crate::runtime::{FrameType, Link};

fn pack_bits(bits: &[bool]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (i, &b) in bits.iter().enumerate() {
        if b {
            out[i / 8] |= 1 << (i % 8);
        }
    }
    out
}

fn unpack_bits(bytes: &[u8], n: usize) -> Result<Vec<bool>> {
    if bytes.len() != n.div_ceil(8) {
        return Err(Error::Format("packed bit length".into()));
    }
    Ok((0..n).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect())
}

/// Run the garbler side. `my_bits` are the garbler's input bits (the
/// circuit's first input block); returns the decoded output bits.
pub fn garbler_run(
    link: &mut Link,
    circuit: &Circuit,
    my_bits: &[bool],
    ot_pads: &[OtSenderPad],
    seed: [u8; 32],
) -> Result<Vec<bool>> {
    if my_bits.len() != circuit.inputs_a {
        return Err(Error::Mismatch("garbler input width".into()));
    }
    if ot_pads.len() != circuit.inputs_b {
        return Err(Error::Correlation("oblivious transfer pad count".into()));
    }
    let (garbling, tables) = garble(circuit, seed);

    let mut payload = circuit.digest().to_vec();
    payload.extend_from_slice(&tables_to_bytes(&tables));
    let own_labels: Vec<u128> = my_bits
        .iter()
        .enumerate()
        .map(|(i, &b)| garbling.input_label(i as u32, b))
        .collect();
    payload.extend_from_slice(&labels_to_bytes(&own_labels));
    link.send(FrameType::GcTables, &payload)?;

    // dealer-assisted OT: the evaluator's masked choice bits select which
    // pad encrypts which label
    let u_bits = unpack_bits(&link.recv(FrameType::OtMessage)?, circuit.inputs_b)?;
    let mut enc = Vec::with_capacity(circuit.inputs_b * 2);
    for (j, (&u, pad)) in u_bits.iter().zip(ot_pads).enumerate() {
        let wire = (circuit.inputs_a + j) as u32;
        let (l0, l1) = garbling.labels(wire);
        let pick = |v: bool| if v { l1 } else { l0 };
        enc.push(pick(u) ^ pad.r0);
        enc.push(pick(!u) ^ pad.r1);
    }
    link.send(FrameType::OtMessage, &labels_to_bytes(&enc))?;

    let out_labels = labels_from_bytes(&link.recv(FrameType::GcLabels)?)?;
    decode_outputs(&garbling, circuit, &out_labels)
}

/// Run the evaluator side. `my_bits` are the evaluator's input bits (the
/// circuit's second input block). The evaluator receives no outputs.
pub fn evaluator_run(
    link: &mut Link,
    circuit: &Circuit,
    my_bits: &[bool],
    ot_pads: &[OtReceiverPad],
) -> Result<()> {
    if my_bits.len() != circuit.inputs_b {
        return Err(Error::Mismatch("evaluator input width".into()));
    }
    if ot_pads.len() != circuit.inputs_b {
        return Err(Error::Correlation("oblivious transfer pad count".into()));
    }
    let payload = link.recv(FrameType::GcTables)?;
    let table_bytes = 64 * circuit.and_count();
    let label_bytes = 16 * circuit.inputs_a;
    if payload.len() != 32 + table_bytes + label_bytes {
        return Err(Error::Abort("malformed garbled-tables frame".into()));
    }
    if payload[..32] != circuit.digest() {
        return Err(Error::Abort("circuit digest mismatch".into()));
    }
    let tables = tables_from_bytes(&payload[32..32 + table_bytes])?;
    let garbler_labels = labels_from_bytes(&payload[32 + table_bytes..])?;

    let u_bits: Vec<bool> = my_bits.iter().zip(ot_pads).map(|(&b, pad)| b ^ pad.c).collect();
    link.send(FrameType::OtMessage, &pack_bits(&u_bits))?;
    let enc = labels_from_bytes(&link.recv(FrameType::OtMessage)?)?;
    if enc.len() != 2 * circuit.inputs_b {
        return Err(Error::Abort("malformed oblivious transfer response".into()));
    }
    let mut inputs = garbler_labels;
    for (j, pad) in ot_pads.iter().enumerate() {
        let e = enc[2 * j + pad.c as usize];
        inputs.push(e ^ pad.rc);
    }

    let out_labels = evaluate(circuit, &tables, &inputs)?;
    link.send(FrameType::GcLabels, &labels_to_bytes(&out_labels))?;
    Ok(())
}
