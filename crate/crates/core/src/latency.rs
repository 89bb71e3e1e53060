//! Nearest-rank latency percentiles.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::finding::duration_ms;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencyStats {
    #[serde(rename = "p50_ms", with = "duration_ms")]
    pub p50: Duration,
    #[serde(rename = "p90_ms", with = "duration_ms")]
    pub p90: Duration,
    pub count: usize,
}

/// The sample at 1-based rank ceil(p/100 * n) of the sorted samples.
pub fn nearest_rank(sorted: &[Duration], percentile: u32) -> Option<Duration> {
    if sorted.is_empty() {
        return None;
    }
    let n = sorted.len();
    let rank = (percentile as usize * n).div_ceil(100).clamp(1, n);
    Some(sorted[rank - 1])
}

impl LatencyStats {
    /// `None` for an empty sample set.
    pub fn from_samples(samples: &[Duration]) -> Option<Self> {
        let mut sorted = samples.to_vec();
        sorted.sort_unstable();
        Some(Self {
            p50: nearest_rank(&sorted, 50)?,
            p90: nearest_rank(&sorted, 90)?,
            count: sorted.len(),
        })
    }
}

/// Latency samples collected across pipeline runs.
#[derive(Debug, Default, Clone)]
pub struct LatencyRecorder {
    samples: Vec<Duration>,
}

impl LatencyRecorder {
    pub fn record(&mut self, d: Duration) {
        self.samples.push(d);
    }

    pub fn snapshot(&self) -> Option<LatencyStats> {
        LatencyStats::from_samples(&self.samples)
    }

    pub fn mean(&self) -> Option<Duration> {
        let n = u32::try_from(self.samples.len()).ok().filter(|&n| n > 0)?;
        Some(self.samples.iter().sum::<Duration>() / n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ms(v: &[u64]) -> Vec<Duration> {
        v.iter().map(|&m| Duration::from_millis(m)).collect()
    }

    #[test]
    fn nearest_rank_examples() {
        // 10 samples: p50 is the 5th, p90 the 9th.
        let s = LatencyStats::from_samples(&ms(&[10, 1, 9, 2, 8, 3, 7, 4, 6, 5])).unwrap();
        assert_eq!((s.p50, s.p90, s.count), (Duration::from_millis(5), Duration::from_millis(9), 10));
        let one = LatencyStats::from_samples(&ms(&[42])).unwrap();
        assert_eq!((one.p50, one.p90), (Duration::from_millis(42), Duration::from_millis(42)));
        assert_eq!(LatencyStats::from_samples(&[]), None);
    }

    proptest! {
        #[test]
        fn p50_never_exceeds_p90(v in proptest::collection::vec(0u64..100_000, 1..200)) {
            let s = LatencyStats::from_samples(&ms(&v)).unwrap();
            prop_assert!(s.p50 <= s.p90);
            prop_assert!(v.contains(&(s.p50.as_millis() as u64)));
            // At least half of the samples are <= p50.
            let below = v.iter().filter(|&&x| x <= s.p50.as_millis() as u64).count();
            prop_assert!(below * 2 >= v.len());
        }
    }
}
