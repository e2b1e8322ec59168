//! Countermeasure policy, the FIM-driven link adapter shared by live runs
//! and trace replay, and throughput accounting.

use std::fmt;

use crate::fim::{
    classify, on_correct, ClassifierParams, Classification, CorruptedPacketQueue, ErrorHistogram, QueuedPacket,
    Verdict,
};
use crate::spectrum::{spectral_overlap, RadioChannel, Technology};

pub const REDUCED_PACKET_LENGTH: u32 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    SwapChannel(i32),
    ReducePacketLength(u32),
    EnableRedundancy,
    EnableRtsCts,
    None,
}

impl Action {
    pub fn is_none(&self) -> bool {
        matches!(self, Action::None)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Action::SwapChannel(_) => "SwapChannel",
            Action::ReducePacketLength(_) => "ReducePacketLength",
            Action::EnableRedundancy => "EnableRedundancy",
            Action::EnableRtsCts => "EnableRtsCts",
            Action::None => "None",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::SwapChannel(c) => write!(f, "SwapChannel({c})"),
            Action::ReducePacketLength(n) => write!(f, "ReducePacketLength({n})"),
            other => f.write_str(other.name()),
        }
    }
}

/// Link parameters the policy reads and `apply` mutates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinkState {
    pub victim_channel: i32,
    pub victim_length: u32,
    /// WiFi channel the swap target must avoid.
    pub wifi_channel: i32,
    pub redundancy: bool,
    pub rts_cts: bool,
}

/// First ZigBee channel whose band is disjoint from the given WiFi channel.
pub fn overlap_free_channel(wifi_channel: i32) -> Option<i32> {
    let wifi = RadioChannel::wifi(wifi_channel).ok()?;
    Technology::Zigbee.index_range().find(|&c| {
        let zb = RadioChannel::zigbee(c).expect("index from valid range");
        spectral_overlap(&zb, &wifi).fraction == 0.0
    })
}

pub fn policy(classification: &Classification, state: &LinkState) -> Action {
    match classification.verdict {
        Verdict::WifiControlData | Verdict::WifiControlOnly => match overlap_free_channel(state.wifi_channel) {
            Some(target) if target != state.victim_channel => Action::SwapChannel(target),
            _ => Action::None,
        },
        Verdict::Bluetooth if state.victim_length > REDUCED_PACKET_LENGTH => {
            Action::ReducePacketLength(REDUCED_PACKET_LENGTH)
        }
        Verdict::WeakLink if !state.redundancy => Action::EnableRedundancy,
        Verdict::ZigbeeHidden(_) if !state.rts_cts => Action::EnableRtsCts,
        _ => Action::None,
    }
}

pub fn apply(action: Action, state: &LinkState) -> LinkState {
    let mut next = *state;
    match action {
        Action::SwapChannel(c) => next.victim_channel = c,
        Action::ReducePacketLength(n) => next.victim_length = n,
        Action::EnableRedundancy => next.redundancy = true,
        Action::EnableRtsCts => next.rts_cts = true,
        Action::None => {}
    }
    next
}

/// How a corrupted packet finds its correct copy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Matching {
    /// The copy arrives later through retransmission.
    Arq,
    /// The receiver knows the transmitted content (measurement set-up).
    Reference,
}

impl fmt::Display for Matching {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Matching::Arq => "arq",
            Matching::Reference => "reference",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutcomeKind {
    Dropped,
    Corrupted,
    Clean,
}

impl fmt::Display for OutcomeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutcomeKind::Dropped => "dropped",
            OutcomeKind::Corrupted => "corrupted",
            OutcomeKind::Clean => "clean",
        })
    }
}

impl std::str::FromStr for OutcomeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "dropped" => Ok(OutcomeKind::Dropped),
            "corrupted" => Ok(OutcomeKind::Corrupted),
            "clean" => Ok(OutcomeKind::Clean),
            other => Err(format!("unknown outcome `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationRecord {
    pub time_us: u64,
    pub verdict: Verdict,
    pub detail: String,
    pub sample_count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionRecord {
    pub time_us: u64,
    pub action: Action,
    pub verdict: Verdict,
    /// Matched collisions consumed since the previous reset.
    pub matched: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkSettings {
    pub matching: Matching,
    pub queue_capacity: usize,
    pub classifier: ClassifierParams,
    pub adapt_enabled: bool,
    pub active_from_us: u64,
}

/// FIM state for one link plus the policy driving it. Fed one reception at
/// a time; returns the action to apply to the link, if any.
#[derive(Debug, Clone)]
pub struct LinkAdapter {
    settings: LinkSettings,
    pub queue: CorruptedPacketQueue,
    pub histogram: ErrorHistogram,
    pub state: LinkState,
    last_verdict: Option<Verdict>,
    matched_since_reset: u64,
    pub matched_total: u64,
    pub log: Vec<ClassificationRecord>,
    pub actions: Vec<ActionRecord>,
}

impl LinkAdapter {
    pub fn new(settings: LinkSettings, state: LinkState) -> Self {
        LinkAdapter {
            queue: CorruptedPacketQueue::new(settings.queue_capacity),
            histogram: ErrorHistogram::new(),
            settings,
            state,
            last_verdict: None,
            matched_since_reset: 0,
            matched_total: 0,
            log: Vec::new(),
            actions: Vec::new(),
        }
    }

    pub fn settings(&self) -> &LinkSettings {
        &self.settings
    }

    pub fn classify(&self) -> Classification {
        classify(&self.histogram, &self.settings.classifier)
    }

    /// `bytes` carries (received, transmitted) content; without it, a
    /// stand-in pair with exactly `error_count` differing bytes is used.
    pub fn on_reception(
        &mut self,
        time_us: u64,
        source_id: u32,
        seq: u16,
        outcome: OutcomeKind,
        error_count: usize,
        bytes: Option<(&[u8], &[u8])>,
    ) -> Action {
        if time_us < self.settings.active_from_us {
            return Action::None;
        }
        let synthetic;
        let (received, correct) = match bytes {
            Some(pair) => pair,
            None => {
                let len = (self.state.victim_length as usize).max(error_count);
                let correct = vec![0u8; len];
                let mut received = correct.clone();
                received[..error_count].iter_mut().for_each(|b| *b = 0xff);
                synthetic = (received, correct);
                (synthetic.0.as_slice(), synthetic.1.as_slice())
            }
        };
        let matched = match (outcome, self.settings.matching) {
            (OutcomeKind::Dropped, _) => 0,
            (OutcomeKind::Corrupted, m) => {
                self.queue.on_corrupted(QueuedPacket { source_id, seq, bytes: received.to_vec(), time_us });
                if m == Matching::Reference {
                    on_correct(&mut self.queue, &mut self.histogram, source_id, seq, correct)
                } else {
                    0
                }
            }
            (OutcomeKind::Clean, Matching::Arq) => {
                on_correct(&mut self.queue, &mut self.histogram, source_id, seq, correct)
            }
            (OutcomeKind::Clean, Matching::Reference) => 0,
        };
        if matched == 0 {
            return Action::None;
        }
        self.matched_since_reset += matched as u64;
        self.matched_total += matched as u64;

        let c = self.classify();
        if self.last_verdict != Some(c.verdict) {
            self.log.push(ClassificationRecord {
                time_us,
                verdict: c.verdict,
                detail: c.detail(),
                sample_count: c.sample_count,
            });
            self.last_verdict = Some(c.verdict);
        }
        if !self.settings.adapt_enabled {
            return Action::None;
        }
        let action = policy(&c, &self.state);
        if !action.is_none() {
            self.actions.push(ActionRecord { time_us, action, verdict: c.verdict, matched: self.matched_since_reset });
            self.state = apply(action, &self.state);
            self.histogram.reset();
            self.matched_since_reset = 0;
            self.last_verdict = None;
        }
        action
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkStats {
    /// Clean receptions per bin.
    pub timeline: Vec<u64>,
    pub bin_us: u64,
    pub matched_collisions: u64,
    pub detection_time_us: Option<u64>,
    /// Matched collisions consumed before the first action.
    pub detection_matches: Option<u64>,
    pub actions: Vec<ActionRecord>,
    pub pre_mean: Option<f64>,
    pub post_mean: Option<f64>,
    pub gain: Option<f64>,
}

pub fn measure(
    clean_times_us: impl IntoIterator<Item = u64>,
    duration_us: u64,
    bin_us: u64,
    actions: &[ActionRecord],
    matched_collisions: u64,
) -> LinkStats {
    let bins = duration_us.div_ceil(bin_us).max(1) as usize;
    let mut timeline = vec![0u64; bins];
    for t in clean_times_us {
        let b = ((t / bin_us) as usize).min(bins - 1);
        timeline[b] += 1;
    }
    let first = actions.first();
    let detection_time_us = first.map(|a| a.time_us);
    let (mut pre_mean, mut post_mean, mut gain) = (None, None, None);
    if let Some(t) = detection_time_us {
        let full_bins = (duration_us / bin_us) as usize;
        let mean = |it: &mut dyn Iterator<Item = &u64>| {
            let v: Vec<u64> = it.copied().collect();
            (!v.is_empty()).then(|| v.iter().sum::<u64>() as f64 / v.len() as f64)
        };
        let before = (t / bin_us) as usize;
        let after = (t.div_ceil(bin_us) as usize).min(full_bins);
        pre_mean = mean(&mut timeline[..before.min(full_bins)].iter());
        post_mean = mean(&mut timeline[after..full_bins].iter());
        if let (Some(pre), Some(post)) = (pre_mean, post_mean) {
            if pre > 0.0 {
                gain = Some((post - pre) / pre);
            }
        }
    }
    LinkStats {
        timeline,
        bin_us,
        matched_collisions,
        detection_time_us,
        detection_matches: first.map(|a| a.matched),
        actions: actions.to_vec(),
        pre_mean,
        post_mean,
        gain,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state() -> LinkState {
        LinkState { victim_channel: 11, victim_length: 122, wifi_channel: 1, redundancy: false, rts_cts: false }
    }

    fn verdict(v: Verdict) -> Classification {
        Classification { verdict: v, sample_count: 100, peaks: Vec::new() }
    }

    #[test]
    fn policy_table() {
        let s = state();
        assert_eq!(policy(&verdict(Verdict::WifiControlData), &s), Action::SwapChannel(15));
        assert_eq!(policy(&verdict(Verdict::WifiControlOnly), &s), Action::SwapChannel(15));
        assert_eq!(policy(&verdict(Verdict::Unknown), &s), Action::None);
        assert_eq!(policy(&verdict(Verdict::GenericCoexistence), &s), Action::None);
        assert_eq!(policy(&verdict(Verdict::Bluetooth), &s), Action::ReducePacketLength(64));
        assert_eq!(policy(&verdict(Verdict::WeakLink), &s), Action::EnableRedundancy);
        assert_eq!(policy(&verdict(Verdict::ZigbeeHidden(16)), &s), Action::EnableRtsCts);
    }

    #[test]
    fn policy_does_not_repeat_applied_actions() {
        let s = state();
        for v in [Verdict::WifiControlData, Verdict::Bluetooth, Verdict::WeakLink, Verdict::ZigbeeHidden(90)] {
            let a = policy(&verdict(v), &s);
            let next = apply(a, &s);
            assert_eq!(policy(&verdict(v), &next), Action::None, "{v}");
        }
        assert_eq!(apply(Action::None, &s), s);
    }

    #[test]
    fn swap_targets() {
        assert_eq!(overlap_free_channel(1), Some(15));
        assert_eq!(overlap_free_channel(6), Some(11));
        assert_eq!(overlap_free_channel(0), None);
    }

    #[test]
    fn measure_flat_timeline() {
        let times: Vec<u64> = (0..100).map(|i| i * 100_000).collect();
        let stats = measure(times, 10_000_000, 1_000_000, &[], 0);
        assert_eq!(stats.timeline, vec![10; 10]);
        assert_eq!(stats.gain, None);
        assert_eq!(stats.timeline.iter().sum::<u64>(), 100);
    }

    #[test]
    fn measure_gain() {
        let mut times = Vec::new();
        for s in 0..10u64 {
            let n = if s < 5 { 10 } else { 20 };
            times.extend((0..n).map(|i| s * 1_000_000 + i * 1000));
        }
        let action = ActionRecord { time_us: 5_000_000, action: Action::SwapChannel(15), verdict: Verdict::WifiControlData, matched: 20 };
        let stats = measure(times, 10_000_000, 1_000_000, &[action], 40);
        assert_eq!(stats.pre_mean, Some(10.0));
        assert_eq!(stats.post_mean, Some(20.0));
        assert_eq!(stats.gain, Some(1.0));
        assert_eq!(stats.detection_matches, Some(20));
    }

    #[test]
    fn adapter_reference_matching_counts_every_corrupted_packet() {
        let settings = LinkSettings {
            matching: Matching::Reference,
            queue_capacity: 16,
            classifier: ClassifierParams::default(),
            adapt_enabled: false,
            active_from_us: 0,
        };
        let mut a = LinkAdapter::new(settings, state());
        for seq in 0..25 {
            a.on_reception(seq as u64, 0, seq, OutcomeKind::Corrupted, 11, None);
        }
        assert_eq!(a.histogram.count(11), 25);
        assert_eq!(a.classify().verdict, Verdict::ZigbeeHidden(16));
        assert_eq!(a.log.len(), 2);
    }

    #[test]
    fn adapter_arq_matching_waits_for_clean_copy() {
        let settings = LinkSettings {
            matching: Matching::Arq,
            queue_capacity: 16,
            classifier: ClassifierParams::default(),
            adapt_enabled: true,
            active_from_us: 0,
        };
        let mut a = LinkAdapter::new(settings, state());
        a.on_reception(1, 0, 7, OutcomeKind::Corrupted, 4, None);
        a.on_reception(2, 0, 7, OutcomeKind::Corrupted, 5, None);
        assert_eq!(a.histogram.total(), 0);
        a.on_reception(3, 0, 7, OutcomeKind::Clean, 0, None);
        assert_eq!(a.histogram.total(), 2);
        assert_eq!(a.matched_total, 2);
    }
}
