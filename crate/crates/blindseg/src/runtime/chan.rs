//! Byte transports the two parties talk over: an in-process pipe for
//! dual-role runs and tests, TCP for genuinely separate processes, and a
//! fault-injection wrapper used to verify that tampering aborts the session.

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::time::Duration;

use crate::error::{Error, Result};

/// A reliable, ordered, bidirectional byte stream.
pub trait ByteStream: Send {
    fn send_bytes(&mut self, bytes: &[u8]) -> Result<()>;
    fn recv_exact(&mut self, buf: &mut [u8]) -> Result<()>;
}

/// In-process transport: a pair of unbounded byte queues.
pub struct MemStream {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
    pending: Vec<u8>,
    pos: usize,
}

/// Two connected in-process endpoints.
pub fn mem_pair() -> (MemStream, MemStream) {
    let (tx_a, rx_b) = channel();
    let (tx_b, rx_a) = channel();
    (
        MemStream {
            tx: tx_a,
            rx: rx_a,
            pending: Vec::new(),
            pos: 0,
        },
        MemStream {
            tx: tx_b,
            rx: rx_b,
            pending: Vec::new(),
            pos: 0,
        },
    )
}

impl ByteStream for MemStream {
    fn send_bytes(&mut self, bytes: &[u8]) -> Result<()> {
        self.tx
            .send(bytes.to_vec())
            .map_err(|_| Error::Transport("peer hung up".into()))
    }

    fn recv_exact(&mut self, buf: &mut [u8]) -> Result<()> {
        let mut filled = 0;
        while filled < buf.len() {
            if self.pos == self.pending.len() {
                self.pending = self
                    .rx
                    .recv_timeout(Duration::from_secs(60))
                    .map_err(|_| Error::Transport("peer hung up or timed out".into()))?;
                self.pos = 0;
            }
            let take = (buf.len() - filled).min(self.pending.len() - self.pos);
            buf[filled..filled + take].copy_from_slice(&self.pending[self.pos..self.pos + take]);
            self.pos += take;
            filled += take;
        }
        Ok(())
    }
}

/// TCP transport. `listen` binds and accepts one peer; `connect` retries
/// briefly so the two sides need not start in lockstep.
pub struct TcpTransport {
    stream: TcpStream,
}

impl TcpTransport {
    pub fn listen(addr: &str) -> Result<Self> {
        let listener = TcpListener::bind(addr).map_err(|e| Error::Transport(e.to_string()))?;
        let (stream, _) = listener
            .accept()
            .map_err(|e| Error::Transport(e.to_string()))?;
        stream.set_nodelay(true).ok();
        Ok(TcpTransport { stream })
    }

    pub fn connect(addr: &str) -> Result<Self> {
        let mut last = None;
        for _ in 0..100 {
            match TcpStream::connect(addr) {
                Ok(stream) => {
                    stream.set_nodelay(true).ok();
                    return Ok(TcpTransport { stream });
                }
                Err(e) => {
                    last = Some(e);
                    std::thread::sleep(Duration::from_millis(50));
                }
            }
        }
        Err(Error::Transport(format!(
            "connect to {addr} failed: {}",
            last.map(|e| e.to_string()).unwrap_or_default()
        )))
    }
}

impl ByteStream for TcpTransport {
    fn send_bytes(&mut self, bytes: &[u8]) -> Result<()> {
        self.stream
            .write_all(bytes)
            .map_err(|e| Error::Transport(e.to_string()))
    }

    fn recv_exact(&mut self, buf: &mut [u8]) -> Result<()> {
        self.stream
            .read_exact(buf)
            .map_err(|e| Error::Transport(e.to_string()))
    }
}

/// Wrapper that flips one bit at a chosen absolute offset of the outgoing
/// byte stream. Used only by tests and the tamper-detection harness.
pub struct CorruptingStream<S> {
    inner: S,
    target_offset: u64,
    sent: u64,
}

impl<S: ByteStream> CorruptingStream<S> {
    pub fn new(inner: S, target_offset: u64) -> Self {
        CorruptingStream {
            inner,
            target_offset,
            sent: 0,
        }
    }
}

impl<S: ByteStream> ByteStream for CorruptingStream<S> {
    fn send_bytes(&mut self, bytes: &[u8]) -> Result<()> {
        let start = self.sent;
        self.sent += bytes.len() as u64;
        if (start..self.sent).contains(&self.target_offset) {
            let mut copy = bytes.to_vec();
            copy[(self.target_offset - start) as usize] ^= 0x01;
            self.inner.send_bytes(&copy)
        } else {
            self.inner.send_bytes(bytes)
        }
    }

    fn recv_exact(&mut self, buf: &mut [u8]) -> Result<()> {
        self.inner.recv_exact(buf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mem_pair_carries_bytes_both_ways() {
        let (mut a, mut b) = mem_pair();
        a.send_bytes(b"hello").unwrap();
        a.send_bytes(b" world").unwrap();
        let mut buf = [0u8; 11];
        b.recv_exact(&mut buf).unwrap();
        assert_eq!(&buf, b"hello world");
        b.send_bytes(&[1, 2, 3]).unwrap();
        let mut small = [0u8; 2];
        a.recv_exact(&mut small).unwrap();
        assert_eq!(small, [1, 2]);
        a.recv_exact(&mut small[..1]).unwrap();
        assert_eq!(small[0], 3);
    }

    #[test]
    fn tcp_roundtrip() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        drop(listener);
        let addr2 = addr.clone();
        let server = std::thread::spawn(move || {
            let mut t = TcpTransport::listen(&addr2).unwrap();
            let mut buf = [0u8; 4];
            t.recv_exact(&mut buf).unwrap();
            t.send_bytes(&buf).unwrap();
        });
        let mut c = TcpTransport::connect(&addr).unwrap();
        c.send_bytes(b"ping").unwrap();
        let mut buf = [0u8; 4];
        c.recv_exact(&mut buf).unwrap();
        assert_eq!(&buf, b"ping");
        server.join().unwrap();
    }

    #[test]
    fn corrupting_stream_flips_exactly_one_bit() {
        let (a, mut b) = mem_pair();
        let mut c = CorruptingStream::new(a, 7);
        c.send_bytes(&[0u8; 5]).unwrap();
        c.send_bytes(&[0u8; 5]).unwrap();
        let mut buf = [0u8; 10];
        b.recv_exact(&mut buf).unwrap();
        let flipped: Vec<usize> = (0..10).filter(|&i| buf[i] != 0).collect();
        assert_eq!(flipped, vec![7]);
        assert_eq!(buf[7], 1);
    }
}
