//! Fingerprint identification: queue corrupted packets, diff them against
//! the eventually-correct copy, histogram the erroneous-byte counts, and
//! classify the histogram shape.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Largest recordable error length (frame minus the PHY length byte).
pub const MAX_ERROR_LEN: usize = 121;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueuedPacket {
    pub source_id: u32,
    pub seq: u16,
    pub bytes: Vec<u8>,
    pub time_us: u64,
}

/// Bounded FIFO; inserting into a full queue evicts the oldest entry.
#[derive(Debug, Clone)]
pub struct CorruptedPacketQueue {
    capacity: usize,
    entries: VecDeque<QueuedPacket>,
}

impl Default for CorruptedPacketQueue {
    fn default() -> Self {
        Self::new(16)
    }
}

impl CorruptedPacketQueue {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "queue capacity must be positive");
        CorruptedPacketQueue { capacity, entries: VecDeque::with_capacity(capacity) }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &QueuedPacket> {
        self.entries.iter()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    /// Stores a CRC-failed packet. Always returns true: a NACK goes out.
    pub fn on_corrupted(&mut self, packet: QueuedPacket) -> bool {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(packet);
        true
    }

    fn take_matching(&mut self, source_id: u32, seq: u16) -> Vec<QueuedPacket> {
        let (matched, kept): (Vec<_>, Vec<_>) = self
            .entries
            .drain(..)
            .partition(|p| p.source_id == source_id && p.seq == seq);
        self.entries = kept.into();
        matched
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErrorHistogram {
    counts: Vec<u64>,
    total: u64,
}

impl Default for ErrorHistogram {
    fn default() -> Self {
        ErrorHistogram { counts: vec![0; MAX_ERROR_LEN + 1], total: 0 }
    }
}

impl ErrorHistogram {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records one sample. Zero is ignored; lengths above the domain are
    /// clamped into the last bin.
    pub fn record(&mut self, error_len: usize) {
        if error_len == 0 {
            return;
        }
        self.counts[error_len.min(MAX_ERROR_LEN)] += 1;
        self.total += 1;
    }

    pub fn record_n(&mut self, error_len: usize, n: u64) {
        if error_len == 0 || n == 0 {
            return;
        }
        self.counts[error_len.min(MAX_ERROR_LEN)] += n;
        self.total += n;
    }

    pub fn reset(&mut self) {
        self.counts.iter_mut().for_each(|c| *c = 0);
        self.total = 0;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn count(&self, error_len: usize) -> u64 {
        self.counts.get(error_len).copied().unwrap_or(0)
    }

    pub fn density(&self, error_len: usize) -> f64 {
        if self.total == 0 || error_len == 0 {
            return 0.0;
        }
        self.count(error_len) as f64 / self.total as f64
    }

    /// Densities for error lengths 1..=MAX_ERROR_LEN (index 0 is length 1).
    pub fn densities(&self) -> Vec<f64> {
        (1..=MAX_ERROR_LEN).map(|k| self.density(k)).collect()
    }

    pub fn mode(&self) -> Option<usize> {
        (1..=MAX_ERROR_LEN)
            .filter(|&k| self.counts[k] > 0)
            .max_by(|&a, &b| self.counts[a].cmp(&self.counts[b]).then(b.cmp(&a)))
    }

    pub fn range_density(&self, lo: usize, hi: usize) -> f64 {
        (lo..=hi).map(|k| self.density(k)).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("error_len,count,density\n");
        for k in 1..=MAX_ERROR_LEN {
            out.push_str(&format!("{},{},{:.9}\n", k, self.counts[k], self.density(k)));
        }
        out
    }
}

pub fn diff_count(corrupted: &[u8], correct: &[u8]) -> Result<usize> {
    if corrupted.len() != correct.len() {
        return Err(Error::LengthMismatch { left: corrupted.len(), right: correct.len() });
    }
    Ok(corrupted.iter().zip(correct).filter(|(a, b)| a != b).count())
}

/// Matches a CRC-valid packet against every queued copy with the same
/// (source, seq). Copies whose length differs from the correct packet are
/// discarded without producing a sample.
pub fn on_correct(
    queue: &mut CorruptedPacketQueue,
    histogram: &mut ErrorHistogram,
    source_id: u32,
    seq: u16,
    correct: &[u8],
) -> usize {
    let mut matched = 0;
    for copy in queue.take_matching(source_id, seq) {
        if let Ok(n) = diff_count(&copy.bytes, correct) {
            histogram.record(n);
            matched += 1;
        }
    }
    matched
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakParams {
    pub smoothing_halfwidth: usize,
    pub min_density: f64,
    pub min_prominence: f64,
}

impl Default for PeakParams {
    fn default() -> Self {
        PeakParams { smoothing_halfwidth: 1, min_density: 0.05, min_prominence: 0.03 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub position: usize,
    /// Smoothed height.
    pub density: f64,
    /// Unsmoothed density at `position`.
    pub raw_density: f64,
    pub prominence: f64,
}

/// Moving average over `2h+1` bins, truncated at the edges.
pub fn smooth(densities: &[f64], halfwidth: usize) -> Vec<f64> {
    let n = densities.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(halfwidth);
            let hi = (i + halfwidth).min(n - 1);
            densities[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

pub fn detect_peaks(histogram: &ErrorHistogram, params: &PeakParams) -> Vec<Peak> {
    if histogram.total() == 0 {
        return Vec::new();
    }
    let raw = histogram.densities();
    let s = smooth(&raw, params.smoothing_halfwidth);
    let n = s.len();
    let mut peaks = Vec::new();
    let mut a = 0;
    while a < n {
        let mut b = a;
        while b + 1 < n && s[b + 1] == s[a] {
            b += 1;
        }
        let h = s[a];
        let left_lower = a == 0 || s[a - 1] < h;
        let right_lower = b == n - 1 || s[b + 1] < h;
        if left_lower && right_lower && h > 0.0 {
            let flank = |range: &mut dyn Iterator<Item = usize>| -> Option<f64> {
                let mut m: Option<f64> = None;
                for j in range {
                    if s[j] > h {
                        break;
                    }
                    m = Some(m.map_or(s[j], |x| x.min(s[j])));
                }
                m
            };
            let left = flank(&mut (0..a).rev());
            let right = flank(&mut (b + 1..n));
            let base = match (left, right) {
                (Some(l), Some(r)) => l.max(r),
                (Some(x), None) | (None, Some(x)) => x,
                (None, None) => h,
            };
            let prominence = h - base;
            if h >= params.min_density && prominence >= params.min_prominence {
                let pos = (a..=b)
                    .max_by(|&x, &y| raw[x].total_cmp(&raw[y]).then(y.cmp(&x)))
                    .unwrap();
                peaks.push(Peak { position: pos + 1, density: h, raw_density: raw[pos], prominence });
            }
        }
        a = b + 1;
    }
    peaks.sort_by(|x, y| y.density.total_cmp(&x.density).then(x.position.cmp(&y.position)));
    peaks
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    WeakLink,
    ZigbeeHidden(u32),
    Bluetooth,
    WifiControlOnly,
    WifiControlData,
    GenericCoexistence,
    Unknown,
}

impl Verdict {
    pub fn is_wifi(&self) -> bool {
        matches!(self, Verdict::WifiControlOnly | Verdict::WifiControlData)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::WeakLink => f.write_str("WeakLink"),
            Verdict::ZigbeeHidden(n) => write!(f, "ZigbeeHidden({n})"),
            Verdict::Bluetooth => f.write_str("Bluetooth"),
            Verdict::WifiControlOnly => f.write_str("WifiControlOnly"),
            Verdict::WifiControlData => f.write_str("WifiControlData"),
            Verdict::GenericCoexistence => f.write_str("GenericCoexistence"),
            Verdict::Unknown => f.write_str("Unknown"),
        }
    }
}

impl FromStr for Verdict {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "WeakLink" => Verdict::WeakLink,
            "Bluetooth" => Verdict::Bluetooth,
            "WifiControlOnly" => Verdict::WifiControlOnly,
            "WifiControlData" => Verdict::WifiControlData,
            "GenericCoexistence" => Verdict::GenericCoexistence,
            "Unknown" => Verdict::Unknown,
            other => {
                let n = other
                    .strip_prefix("ZigbeeHidden(")
                    .and_then(|r| r.strip_suffix(')'))
                    .and_then(|n| n.parse().ok())
                    .ok_or_else(|| format!("unknown verdict `{other}`"))?;
                Verdict::ZigbeeHidden(n)
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifierParams {
    pub peaks: PeakParams,
    pub min_samples: u64,
    /// Largest rise tolerated between consecutive smoothed bins 1..10 for
    /// the weak-link shape.
    pub monotone_slack: f64,
}

impl Default for ClassifierParams {
    fn default() -> Self {
        ClassifierParams { peaks: PeakParams::default(), min_samples: 20, monotone_slack: 0.005 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub verdict: Verdict,
    pub sample_count: u64,
    pub peaks: Vec<Peak>,
}

impl Classification {
    pub fn detail(&self) -> String {
        let peaks: Vec<String> = self
            .peaks
            .iter()
            .map(|p| format!("{}:{:.3}", p.position, p.density))
            .collect();
        format!("peaks={}", peaks.join(";"))
    }
}

const WIFI_DATA_BAND: (usize, usize) = (2, 6);
const WIFI_CONTROL_BAND: (usize, usize) = (24, 30);
const BT_TAIL_BAND: (usize, usize) = (80, 90);
const BT_BODY_BAND: (usize, usize) = (40, 79);
const BT_MAX_DENSITY: f64 = 0.08;
/// A ZigBee interferer's errors span its length minus its SHR.
const ZIGBEE_SHR_OFFSET: u32 = 5;

fn in_band(p: &Peak, band: (usize, usize)) -> bool {
    (band.0..=band.1).contains(&p.position)
}

/// Rules are tried in order; the first match wins.
pub fn classify(histogram: &ErrorHistogram, params: &ClassifierParams) -> Classification {
    let sample_count = histogram.total();
    if sample_count < params.min_samples.max(1) {
        return Classification { verdict: Verdict::Unknown, sample_count, peaks: Vec::new() };
    }
    let peaks = detect_peaks(histogram, &params.peaks);
    let verdict = decide(histogram, &peaks, params);
    Classification { verdict, sample_count, peaks }
}

fn decide(h: &ErrorHistogram, peaks: &[Peak], params: &ClassifierParams) -> Verdict {
    let has = |band| peaks.iter().any(|p| in_band(p, band));
    if has(WIFI_DATA_BAND) && has(WIFI_CONTROL_BAND) {
        return Verdict::WifiControlData;
    }
    if peaks.len() == 1 && in_band(&peaks[0], WIFI_CONTROL_BAND) {
        return Verdict::WifiControlOnly;
    }

    let raw = h.densities();
    let tail = h.range_density(BT_TAIL_BAND.0, BT_TAIL_BAND.1);
    let body_mean = h.range_density(BT_BODY_BAND.0, BT_BODY_BAND.1) / (BT_BODY_BAND.1 - BT_BODY_BAND.0 + 1) as f64;
    if raw.iter().all(|&d| d < BT_MAX_DENSITY) && tail > 0.0 && tail >= 2.0 * body_mean {
        return Verdict::Bluetooth;
    }

    if let Some(dominant) = peaks.first() {
        if dominant.position >= 7 && !in_band(dominant, WIFI_CONTROL_BAND) {
            return Verdict::ZigbeeHidden(dominant.position as u32 + ZIGBEE_SHR_OFFSET);
        }
    }

    let d1 = h.density(1);
    if peaks.iter().any(|p| p.position == 1) && d1 >= 0.2 && h.range_density(2, 20) >= 0.3 {
        return Verdict::GenericCoexistence;
    }

    let s = smooth(&raw, params.peaks.smoothing_halfwidth);
    let decreasing = s[..10].windows(2).all(|w| w[1] <= w[0] + params.monotone_slack);
    let dominant_one = raw.iter().skip(1).all(|&d| d <= d1);
    if decreasing && dominant_one && d1 > 0.0 {
        return Verdict::WeakLink;
    }
    Verdict::Unknown
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pkt(seq: u16, bytes: Vec<u8>) -> QueuedPacket {
        QueuedPacket { source_id: 1, seq, bytes, time_us: 0 }
    }

    fn hist(pairs: &[(usize, u64)]) -> ErrorHistogram {
        let mut h = ErrorHistogram::new();
        for &(k, n) in pairs {
            h.record_n(k, n);
        }
        h
    }

    #[test]
    fn queue_push_out() {
        let mut q = CorruptedPacketQueue::new(16);
        assert!(q.on_corrupted(pkt(0, vec![])));
        assert_eq!(q.len(), 1);
        for s in 1..17 {
            q.on_corrupted(pkt(s, vec![]));
        }
        assert_eq!(q.len(), 16);
        assert!(q.iter().all(|p| p.seq != 0));
        assert_eq!(q.iter().next().unwrap().seq, 1);
    }

    #[test]
    fn matching() {
        let correct = vec![0u8; 122];
        let mut bad = correct.clone();
        for b in bad.iter_mut().skip(20).take(11) {
            *b = 0xff;
        }
        let mut q = CorruptedPacketQueue::default();
        let mut h = ErrorHistogram::new();
        assert_eq!(on_correct(&mut q, &mut h, 1, 5, &correct), 0);
        assert_eq!(h.total(), 0);

        q.on_corrupted(pkt(5, bad.clone()));
        q.on_corrupted(pkt(6, bad.clone()));
        q.on_corrupted(pkt(5, bad));
        assert_eq!(on_correct(&mut q, &mut h, 1, 5, &correct), 2);
        assert_eq!(h.count(11), 2);
        assert_eq!(q.len(), 1);
    }

    #[test]
    fn diff_examples() {
        let a = vec![0u8; 12];
        let mut b = a.clone();
        assert_eq!(diff_count(&a, &b).unwrap(), 0);
        for i in [3, 7, 9] {
            b[i] = 1;
        }
        assert_eq!(diff_count(&a, &b).unwrap(), 3);
        assert_eq!(diff_count(&b, &a).unwrap(), 3);
        assert!(diff_count(&a, &b[..5]).is_err());
    }

    #[test]
    fn delta_peak() {
        let peaks = detect_peaks(&hist(&[(11, 40)]), &PeakParams::default());
        assert_eq!(peaks.len(), 1);
        assert_eq!(peaks[0].position, 11);
        assert_eq!(peaks[0].raw_density, 1.0);
    }

    #[test]
    fn uniform_has_no_peaks() {
        let pairs: Vec<(usize, u64)> = (1..=MAX_ERROR_LEN).map(|k| (k, 3)).collect();
        assert!(detect_peaks(&hist(&pairs), &PeakParams::default()).is_empty());
    }

    #[test]
    fn peaks_sorted_by_density() {
        let h = hist(&[(4, 30), (3, 10), (5, 10), (27, 20), (26, 8), (28, 8)]);
        let peaks = detect_peaks(&h, &PeakParams::default());
        let pos: Vec<usize> = peaks.iter().map(|p| p.position).collect();
        assert_eq!(pos, vec![4, 27]);
        assert!(peaks.iter().all(|p| p.density >= p.prominence && p.prominence >= 0.0));
    }

    #[test]
    fn gating() {
        let c = classify(&ErrorHistogram::new(), &ClassifierParams::default());
        assert_eq!(c.verdict, Verdict::Unknown);
        let c = classify(&hist(&[(11, 19)]), &ClassifierParams::default());
        assert_eq!(c.verdict, Verdict::Unknown);
    }

    #[test]
    fn rule_examples() {
        let p = ClassifierParams::default();
        assert_eq!(classify(&hist(&[(11, 60), (10, 5), (3, 5)]), &p).verdict, Verdict::ZigbeeHidden(16));
        assert_eq!(
            classify(&hist(&[(4, 30), (3, 10), (5, 10), (27, 20), (26, 8), (28, 8)]), &p).verdict,
            Verdict::WifiControlData
        );
        assert_eq!(classify(&hist(&[(26, 30), (27, 30)]), &p).verdict, Verdict::WifiControlOnly);
        assert_eq!(
            classify(&hist(&[(1, 75), (2, 15), (3, 6), (4, 3), (5, 1)]), &p).verdict,
            Verdict::WeakLink
        );
        let mut generic = vec![(1, 40)];
        generic.extend((2..=20).map(|k| (k, 3)));
        assert_eq!(classify(&hist(&generic), &p).verdict, Verdict::GenericCoexistence);
        let mut bt: Vec<(usize, u64)> = (1..=79).map(|k| (k, 1)).collect();
        bt.extend((80..=90).map(|k| (k, 4)));
        assert_eq!(classify(&hist(&bt), &p).verdict, Verdict::Bluetooth);
    }

    #[test]
    fn verdict_text_round_trip() {
        for v in [Verdict::WeakLink, Verdict::ZigbeeHidden(90), Verdict::Unknown, Verdict::WifiControlData] {
            assert_eq!(v.to_string().parse::<Verdict>().unwrap(), v);
        }
        assert!("Nope".parse::<Verdict>().is_err());
    }
}
