//! Two-party session plumbing: transports, wire framing with transcript
//! hashes, and timing instrumentation. Session orchestration lives in
//! [`session`].

pub mod chan;
pub mod frame;
pub mod session;
pub mod timing;

pub use chan::{mem_pair, ByteStream, CorruptingStream, MemStream, TcpTransport};
pub use frame::{bytes_to_words, words_to_bytes, FrameType, Link};
pub use timing::{Category, TimingLedger};
