//! Windowed counters and latency statistics.
//!
//! Every metric keeps raw samples long enough to answer SUM / COUNT /
//! AVG / p75 / p95 / p99 over the 5s, 60s, 600s, and 3600s windows; the
//! text dump emits one `name.stat.window value` line per combination.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Mutex;

pub const WINDOWS: [(u64, &str); 4] =
    [(5, "5s"), (60, "60s"), (600, "600s"), (3600, "3600s")];

#[derive(Default)]
struct Series {
    samples: VecDeque<(u64, f64)>, // (micros timestamp, value)
}

impl Series {
    fn record(&mut self, now_us: u64, value: f64) {
        self.samples.push_back((now_us, value));
        let horizon = now_us.saturating_sub(3600 * 1_000_000);
        while self.samples.front().map_or(false, |(t, _)| *t < horizon) {
            self.samples.pop_front();
        }
    }

    fn window(&self, now_us: u64, secs: u64) -> Vec<f64> {
        let from = now_us.saturating_sub(secs * 1_000_000);
        self.samples
            .iter()
            .filter(|(t, _)| *t >= from)
            .map(|(_, v)| *v)
            .collect()
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let pos = (q * (sorted.len() - 1) as f64).round() as usize;
    sorted[pos.min(sorted.len() - 1)]
}

#[derive(Default)]
pub struct MetricsRegistry {
    inner: Mutex<BTreeMap<String, Series>>,
    /// Gauges set at dump time (cluster counters, raft terms).
    gauges: Mutex<BTreeMap<String, f64>>,
}

impl MetricsRegistry {
    pub fn new() -> MetricsRegistry {
        MetricsRegistry::default()
    }

    pub fn record(&self, name: &str, now_us: u64, value: f64) {
        self.inner
            .lock()
            .unwrap()
            .entry(name.to_string())
            .or_default()
            .record(now_us, value);
    }

    pub fn set_gauge(&self, name: &str, value: f64) {
        self.gauges.lock().unwrap().insert(name.to_string(), value);
    }

    /// Plaintext dump: `name.stat.window value` lines plus gauges.
    pub fn dump(&self, now_us: u64) -> String {
        let mut out = String::new();
        let inner = self.inner.lock().unwrap();
        for (name, series) in inner.iter() {
            for (secs, label) in WINDOWS {
                let mut values = series.window(now_us, secs);
                let count = values.len();
                let sum: f64 = values.iter().sum();
                values.sort_by(|a, b| a.total_cmp(b));
                let avg = if count == 0 { 0.0 } else { sum / count as f64 };
                out.push_str(&format!("{name}.sum.{label} {sum}\n"));
                out.push_str(&format!("{name}.count.{label} {count}\n"));
                out.push_str(&format!("{name}.avg.{label} {avg}\n"));
                out.push_str(&format!("{name}.p75.{label} {}\n", quantile(&values, 0.75)));
                out.push_str(&format!("{name}.p95.{label} {}\n", quantile(&values, 0.95)));
                out.push_str(&format!("{name}.p99.{label} {}\n", quantile(&values, 0.99)));
            }
        }
        for (name, value) in self.gauges.lock().unwrap().iter() {
            out.push_str(&format!("{name} {value}\n"));
        }
        out
    }

    /// COUNT over one window, for tests and QPS math.
    pub fn count(&self, name: &str, now_us: u64, secs: u64) -> usize {
        self.inner
            .lock()
            .unwrap()
            .get(name)
            .map(|s| s.window(now_us, secs).len())
            .unwrap_or(0)
    }

    pub fn quantile_us(&self, name: &str, now_us: u64, secs: u64, q: f64) -> f64 {
        let inner = self.inner.lock().unwrap();
        let Some(series) = inner.get(name) else { return 0.0 };
        let mut values = series.window(now_us, secs);
        values.sort_by(|a, b| a.total_cmp(b));
        quantile(&values, q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_are_monotone() {
        let m = MetricsRegistry::new();
        let now = 10_000_000;
        for i in 0..100 {
            m.record("query", now, i as f64);
        }
        let p75 = m.quantile_us("query", now, 60, 0.75);
        let p95 = m.quantile_us("query", now, 60, 0.95);
        let p99 = m.quantile_us("query", now, 60, 0.99);
        assert!(p75 <= p95 && p95 <= p99);
        let dump = m.dump(now);
        assert!(dump.contains("query.count.60s 100"));
    }

    #[test]
    fn windows_only_see_their_span() {
        let m = MetricsRegistry::new();
        m.record("q", 1_000_000, 1.0);
        // 100 seconds later the 5s/60s windows are empty
        let now = 101_000_000;
        m.record("q", now, 2.0);
        assert_eq!(m.count("q", now, 5), 1);
        assert_eq!(m.count("q", now, 60), 1);
        assert_eq!(m.count("q", now, 600), 2);
    }

    #[test]
    fn fresh_registry_dumps_empty() {
        let m = MetricsRegistry::new();
        assert_eq!(m.dump(0), "");
    }
}
