//! Wire framing between the two parties.
//!
//! Every message is one frame: a 4-byte little-endian length (covering tag,
//! sequence number, and payload), a 1-byte type tag, an 8-byte sequence
//! number, and the payload. Each direction carries its own running SHA-256
//! transcript hash over all frame bytes; [`Link::sync_transcripts`] exchanges
//! and cross-checks the hashes, so any tampering or reordering between sync
//! points aborts the session.

use std::time::{Duration, Instant};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::runtime::chan::ByteStream;

/// Frame type tags.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
#[repr(u8)]
pub enum FrameType {
    Handshake = 1,
    Ciphertext = 2,
    Share = 3,
    Opening = 4,
    GcTables = 5,
    GcLabels = 6,
    OtMessage = 7,
    DecodeMap = 8,
    Sync = 9,
    Control = 10,
}

impl TryFrom<u8> for FrameType {
    type Error = Error;
    fn try_from(v: u8) -> Result<FrameType> {
        Ok(match v {
            1 => FrameType::Handshake,
            2 => FrameType::Ciphertext,
            3 => FrameType::Share,
            4 => FrameType::Opening,
            5 => FrameType::GcTables,
            6 => FrameType::GcLabels,
            7 => FrameType::OtMessage,
            8 => FrameType::DecodeMap,
            9 => FrameType::Sync,
            10 => FrameType::Control,
            t => return Err(Error::Format(format!("unknown frame type {t}"))),
        })
    }
}

/// Largest accepted frame body; guards against garbage length prefixes.
const MAX_FRAME: u32 = 1 << 30;

/// A framed, transcript-hashed, metered channel over some byte stream.
pub struct Link {
    stream: Box<dyn ByteStream>,
    send_seq: u64,
    recv_seq: u64,
    sent_hash: Sha256,
    recv_hash: Sha256,
    pub bytes_sent: u64,
    pub bytes_received: u64,
    pub frames_sent: u64,
    pub frames_received: u64,
    transport_time: Duration,
}

impl Link {
    pub fn new(stream: Box<dyn ByteStream>) -> Self {
        Link {
            stream,
            send_seq: 0,
            recv_seq: 0,
            sent_hash: Sha256::new(),
            recv_hash: Sha256::new(),
            bytes_sent: 0,
            bytes_received: 0,
            frames_sent: 0,
            frames_received: 0,
            transport_time: Duration::ZERO,
        }
    }

    /// Cumulative time spent inside the underlying transport. Primitive
    /// timing spans read this before and after to report pure compute.
    pub fn transport_time(&self) -> Duration {
        self.transport_time
    }

    pub fn send(&mut self, ty: FrameType, payload: &[u8]) -> Result<()> {
        let body_len = 1 + 8 + payload.len();
        if body_len as u64 > MAX_FRAME as u64 {
            return Err(Error::Transport("frame too large".into()));
        }
        let mut frame = Vec::with_capacity(4 + body_len);
        frame.extend_from_slice(&(body_len as u32).to_le_bytes());
        frame.push(ty as u8);
        frame.extend_from_slice(&self.send_seq.to_le_bytes());
        frame.extend_from_slice(payload);
        self.sent_hash.update(&frame);
        self.send_seq += 1;
        self.bytes_sent += frame.len() as u64;
        self.frames_sent += 1;
        let t0 = Instant::now();
        let r = self.stream.send_bytes(&frame);
        self.transport_time += t0.elapsed();
        r
    }

    /// Receive one frame and require its type tag.
    pub fn recv(&mut self, expect: FrameType) -> Result<Vec<u8>> {
        let (ty, payload) = self.recv_any()?;
        if ty != expect {
            return Err(Error::Abort(format!(
                "expected {expect:?} frame, got {ty:?}"
            )));
        }
        Ok(payload)
    }

    pub fn recv_any(&mut self) -> Result<(FrameType, Vec<u8>)> {
        let t0 = Instant::now();
        let mut len_buf = [0u8; 4];
        self.stream.recv_exact(&mut len_buf)?;
        let body_len = u32::from_le_bytes(len_buf);
        if body_len < 9 || body_len > MAX_FRAME {
            return Err(Error::Abort(format!("bad frame length {body_len}")));
        }
        let mut body = vec![0u8; body_len as usize];
        self.stream.recv_exact(&mut body)?;
        self.transport_time += t0.elapsed();
        self.recv_hash.update(len_buf);
        self.recv_hash.update(&body);
        self.bytes_received += 4 + body.len() as u64;
        self.frames_received += 1;
        let ty = FrameType::try_from(body[0])?;
        let seq = u64::from_le_bytes(body[1..9].try_into().unwrap());
        if seq != self.recv_seq {
            return Err(Error::Abort(format!(
                "frame sequence {seq}, expected {}",
                self.recv_seq
            )));
        }
        self.recv_seq += 1;
        Ok((ty, body[9..].to_vec()))
    }

    /// Exchange transcript digests with the peer and verify that what they
    /// received is what we sent, and vice versa. Both parties must call this
    /// at the same protocol point.
    pub fn sync_transcripts(&mut self) -> Result<()> {
        let ours_sent: [u8; 32] = self.sent_hash.clone().finalize().into();
        let ours_recv: [u8; 32] = self.recv_hash.clone().finalize().into();
        let mut payload = Vec::with_capacity(64);
        payload.extend_from_slice(&ours_sent);
        payload.extend_from_slice(&ours_recv);
        self.send(FrameType::Sync, &payload)?;
        let theirs = self.recv(FrameType::Sync)?;
        if theirs.len() != 64 {
            return Err(Error::Abort("malformed sync frame".into()));
        }
        // After recv, our recv_hash covers their sync frame too, so compare
        // against the digests captured before the exchange.
        if theirs[0..32] != ours_recv[..] {
            return Err(Error::Abort(
                "transcript mismatch: peer sent something we did not receive".into(),
            ));
        }
        if theirs[32..64] != ours_sent[..] {
            return Err(Error::Abort(
                "transcript mismatch: peer received something we did not send".into(),
            ));
        }
        Ok(())
    }
}

// --- payload encoding helpers (u64 word vectors are the common case) ---

pub fn words_to_bytes(words: &[u64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 * words.len());
    for w in words {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out
}

pub fn bytes_to_words(bytes: &[u8]) -> Result<Vec<u64>> {
    if bytes.len() % 8 != 0 {
        return Err(Error::Format("payload is not a whole number of words".into()));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runtime::chan::{mem_pair, CorruptingStream};

    fn link_pair() -> (Link, Link) {
        let (a, b) = mem_pair();
        (Link::new(Box::new(a)), Link::new(Box::new(b)))
    }

    #[test]
    fn frames_roundtrip_in_order() {
        let (mut a, mut b) = link_pair();
        a.send(FrameType::Share, &[1, 2, 3]).unwrap();
        a.send(FrameType::Opening, &[]).unwrap();
        assert_eq!(b.recv(FrameType::Share).unwrap(), vec![1, 2, 3]);
        assert_eq!(b.recv(FrameType::Opening).unwrap(), Vec::<u8>::new());
        assert_eq!(a.bytes_sent, b.bytes_received);
        assert_eq!(a.frames_sent, 2);
    }

    #[test]
    fn wrong_type_aborts() {
        let (mut a, mut b) = link_pair();
        a.send(FrameType::Share, &[0]).unwrap();
        assert!(matches!(b.recv(FrameType::Sync), Err(Error::Abort(_))));
    }

    #[test]
    fn transcript_sync_agrees_on_clean_channel() {
        let (mut a, mut b) = link_pair();
        a.send(FrameType::Ciphertext, &[9; 100]).unwrap();
        b.recv(FrameType::Ciphertext).unwrap();
        b.send(FrameType::Share, &[7; 10]).unwrap();
        a.recv(FrameType::Share).unwrap();
        let t = std::thread::spawn(move || {
            b.sync_transcripts().unwrap();
            b
        });
        a.sync_transcripts().unwrap();
        t.join().unwrap();
    }

    #[test]
    fn corrupted_payload_fails_sync() {
        let (sa, sb) = mem_pair();
        // flip a bit inside the payload of the first data frame
        let mut a = Link::new(Box::new(CorruptingStream::new(sa, 20)));
        let mut b = Link::new(Box::new(sb));
        a.send(FrameType::Ciphertext, &[0; 64]).unwrap();
        b.recv(FrameType::Ciphertext).unwrap();
        let t = std::thread::spawn(move || b.sync_transcripts());
        let ra = a.sync_transcripts();
        let rb = t.join().unwrap();
        assert!(ra.is_err() || rb.is_err());
    }

    #[test]
    fn corrupted_seq_or_len_aborts_immediately() {
        let (sa, sb) = mem_pair();
        // offset 5 lands in the sequence-number field of the first frame
        let mut a = Link::new(Box::new(CorruptingStream::new(sa, 5)));
        let mut b = Link::new(Box::new(sb));
        a.send(FrameType::Share, &[1, 2, 3, 4]).unwrap();
        assert!(b.recv(FrameType::Share).is_err());
    }

    #[test]
    fn word_payloads_roundtrip() {
        let words = vec![0u64, 1, u64::MAX, 0x0123_4567_89ab_cdef];
        assert_eq!(bytes_to_words(&words_to_bytes(&words)).unwrap(), words);
        assert!(bytes_to_words(&[1, 2, 3]).is_err());
    }
}
