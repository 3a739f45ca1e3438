//! Per-primitive timing and traffic accounting.
//!
//! Each secure primitive wraps its work in a span. A span snapshots the
//! link's cumulative transport time and byte counters on entry and exit, so
//! the reported compute time excludes time spent blocked on the wire, and
//! every byte is attributed to exactly one primitive category.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::runtime::frame::Link;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub enum Category {
    Setup,
    HomConv,
    SquareMt,
    ReluGc,
    MaxPoolGc,
    AvgPool,
    TruncGc,
    ArgmaxGc,
    Readout,
    Other,
}

impl Category {
    pub fn name(self) -> &'static str {
        match self {
            Category::Setup => "setup",
            Category::HomConv => "hom-conv",
            Category::SquareMt => "square-mt",
            Category::ReluGc => "relu-gc",
            Category::MaxPoolGc => "maxpool-gc",
            Category::AvgPool => "avgpool",
            Category::TruncGc => "trunc-gc",
            Category::ArgmaxGc => "argmax-gc",
            Category::Readout => "readout",
            Category::Other => "other",
        }
    }
}

#[derive(Clone, Copy, Default, Serialize)]
pub struct CategoryStats {
    pub calls: u64,
    pub compute_ns: u128,
    pub transport_ns: u128,
    pub bytes_sent: u64,
    pub bytes_received: u64,
}

#[derive(Default)]
pub struct TimingLedger {
    stats: BTreeMap<Category, CategoryStats>,
}

pub struct Span {
    cat: Category,
    t0: Instant,
    transport0: Duration,
    sent0: u64,
    recv0: u64,
}

impl TimingLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn begin(&self, cat: Category, link: &Link) -> Span {
        Span {
            cat,
            t0: Instant::now(),
            transport0: link.transport_time(),
            sent0: link.bytes_sent,
            recv0: link.bytes_received,
        }
    }

    pub fn end(&mut self, span: Span, link: &Link) {
        let wall = span.t0.elapsed();
        let transport = link.transport_time() - span.transport0;
        let s = self.stats.entry(span.cat).or_default();
        s.calls += 1;
        s.compute_ns += wall.saturating_sub(transport).as_nanos();
        s.transport_ns += transport.as_nanos();
        s.bytes_sent += link.bytes_sent - span.sent0;
        s.bytes_received += link.bytes_received - span.recv0;
    }

    pub fn get(&self, cat: Category) -> CategoryStats {
        self.stats.get(&cat).copied().unwrap_or_default()
    }

    pub fn categories(&self) -> impl Iterator<Item = (Category, &CategoryStats)> {
        self.stats.iter().map(|(k, v)| (*k, v))
    }

    pub fn merge(&mut self, other: &TimingLedger) {
        for (cat, s) in &other.stats {
            let d = self.stats.entry(*cat).or_default();
            d.calls += s.calls;
            d.compute_ns += s.compute_ns;
            d.transport_ns += s.transport_ns;
            d.bytes_sent += s.bytes_sent;
            d.bytes_received += s.bytes_received;
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let map: BTreeMap<&'static str, &CategoryStats> =
            self.stats.iter().map(|(k, v)| (k.name(), v)).collect();
        serde_json::to_value(map).expect("ledger serializes")
    }

    /// Human-readable aligned table.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<12} {:>8} {:>14} {:>14} {:>12} {:>12}\n",
            "primitive", "calls", "compute(ms)", "transport(ms)", "sent(B)", "recv(B)"
        ));
        let mut total = CategoryStats::default();
        for (cat, s) in &self.stats {
            out.push_str(&format!(
                "{:<12} {:>8} {:>14.3} {:>14.3} {:>12} {:>12}\n",
                cat.name(),
                s.calls,
                s.compute_ns as f64 / 1e6,
                s.transport_ns as f64 / 1e6,
                s.bytes_sent,
                s.bytes_received
            ));
            total.calls += s.calls;
            total.compute_ns += s.compute_ns;
            total.transport_ns += s.transport_ns;
            total.bytes_sent += s.bytes_sent;
            total.bytes_received += s.bytes_received;
        }
        out.push_str(&format!(
            "{:<12} {:>8} {:>14.3} {:>14.3} {:>12} {:>12}\n",
            "total",
            total.calls,
            total.compute_ns as f64 / 1e6,
            total.transport_ns as f64 / 1e6,
            total.bytes_sent,
            total.bytes_received
        ));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runtime::chan::mem_pair;
    use crate::runtime::frame::FrameType;

    #[test]
    fn spans_attribute_bytes_and_time() {
        let (sa, sb) = mem_pair();
        let mut a = Link::new(Box::new(sa));
        let mut b = Link::new(Box::new(sb));
        let mut ledger = TimingLedger::new();

        let span = ledger.begin(Category::HomConv, &a);
        a.send(FrameType::Ciphertext, &[0u8; 1000]).unwrap();
        ledger.end(span, &a);
        b.recv(FrameType::Ciphertext).unwrap();

        let s = ledger.get(Category::HomConv);
        assert_eq!(s.calls, 1);
        assert_eq!(s.bytes_sent, 1000 + 13);
        assert_eq!(s.bytes_received, 0);
        assert_eq!(ledger.get(Category::ReluGc).calls, 0);

        let json = ledger.to_json();
        assert_eq!(json["hom-conv"]["calls"], 1);
        let text = ledger.render_text();
        assert!(text.contains("hom-conv"));
        assert!(text.lines().count() >= 3);
    }

    #[test]
    fn merge_accumulates() {
        let (sa, _sb) = mem_pair();
        let a = Link::new(Box::new(sa));
        let mut l1 = TimingLedger::new();
        let mut l2 = TimingLedger::new();
        let sp = l1.begin(Category::AvgPool, &a);
        l1.end(sp, &a);
        let sp = l2.begin(Category::AvgPool, &a);
        l2.end(sp, &a);
        l1.merge(&l2);
        assert_eq!(l1.get(Category::AvgPool).calls, 2);
    }
}
