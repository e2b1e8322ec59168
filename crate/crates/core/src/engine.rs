//! Discrete-event coexistence simulator.
//!
//! Interferer streams are generated up front and only delayed by carrier
//! sense. The victim stream is driven online because its timing depends on
//! reception outcomes (ARQ) and on link adaptation.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use rand::Rng;

use crate::adapt::{Action, LinkAdapter, LinkSettings, LinkState, Matching, OutcomeKind};
use crate::corruption::{
    bytes_in_window, corrupting_window, header_hit, merge, trimmed_collision_mask, weak_link_mask, CorruptionMask,
    WeakLinkParams,
};
use crate::error::{Error, Result};
use crate::fim::ClassifierParams;
use crate::rng::{derive_rng, derive_seed, tag, SimRng};
use crate::spectrum::{
    corruption_intensity, spectral_overlap, InterfererClass, IntensityTable, RadioChannel, Technology,
};
use crate::traffic::{
    airtime_us, bluetooth_stream, payload_for, wifi_stream, zigbee_stream, BluetoothConfig, Frame, FrameKind,
    StreamConfig, WifiConfig, ZIGBEE_BITRATE_BPS,
};

pub const VICTIM_STREAM_ID: u32 = 0;
pub const MAX_BACKOFF_US: u64 = 2560;

#[derive(Debug, Clone, PartialEq)]
pub struct VictimConfig {
    pub stream: StreamConfig,
    pub channel: i32,
    pub weak_link: Option<WeakLinkParams>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InterfererConfig {
    Zigbee { channel: i32, stream: StreamConfig },
    Wifi { channel: i32, config: WifiConfig },
    Bluetooth(BluetoothConfig),
}

impl InterfererConfig {
    pub fn technology(&self) -> Technology {
        match self {
            InterfererConfig::Zigbee { .. } => Technology::Zigbee,
            InterfererConfig::Wifi { .. } => Technology::Wifi,
            InterfererConfig::Bluetooth(_) => Technology::Bluetooth,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CcaFlags {
    pub zigbee_cca_enabled: bool,
    pub wifi_senses_zigbee: bool,
    pub wifi_senses_wifi: bool,
    pub bluetooth_senses_any: bool,
    /// Busy assessments tolerated before a ZigBee sender gives up on a frame.
    pub max_backoffs: u32,
}

impl Default for CcaFlags {
    fn default() -> Self {
        CcaFlags {
            zigbee_cca_enabled: false,
            wifi_senses_zigbee: false,
            wifi_senses_wifi: true,
            bluetooth_senses_any: false,
            max_backoffs: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArqConfig {
    pub enabled: bool,
    pub timeout_us: u64,
    pub max_attempts: u32,
}

impl Default for ArqConfig {
    fn default() -> Self {
        ArqConfig { enabled: false, timeout_us: 10_000, max_attempts: 8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FimConfig {
    pub queue_capacity: usize,
    pub classifier: ClassifierParams,
}

impl Default for FimConfig {
    fn default() -> Self {
        FimConfig { queue_capacity: 16, classifier: ClassifierParams::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AdaptConfig {
    pub enabled: bool,
    /// FIM and adaptation ignore receptions before this instant.
    pub start_us: u64,
    /// WiFi channel a swap must avoid; defaults to the first WiFi interferer.
    pub wifi_channel: Option<i32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    pub duration_us: u64,
    pub victim: VictimConfig,
    pub interferers: Vec<InterfererConfig>,
    pub cca: CcaFlags,
    pub arq: ArqConfig,
    pub fim: FimConfig,
    pub adapt: AdaptConfig,
    pub intensity: IntensityTable,
}

impl ScenarioConfig {
    pub fn new(name: &str, victim_channel: i32) -> Self {
        ScenarioConfig {
            name: name.to_string(),
            seed: 1,
            duration_us: 10_000_000,
            victim: VictimConfig { stream: StreamConfig::default(), channel: victim_channel, weak_link: None },
            interferers: Vec::new(),
            cca: CcaFlags::default(),
            arq: ArqConfig::default(),
            fim: FimConfig::default(),
            adapt: AdaptConfig::default(),
            intensity: IntensityTable::default(),
        }
    }

    pub fn wifi_channel(&self) -> i32 {
        self.adapt.wifi_channel.unwrap_or_else(|| {
            self.interferers
                .iter()
                .find_map(|i| match i {
                    InterfererConfig::Wifi { channel, .. } => Some(*channel),
                    _ => None,
                })
                .unwrap_or(1)
        })
    }

    pub fn link_settings(&self) -> LinkSettings {
        LinkSettings {
            matching: if self.arq.enabled { Matching::Arq } else { Matching::Reference },
            queue_capacity: self.fim.queue_capacity,
            classifier: self.fim.classifier,
            adapt_enabled: self.adapt.enabled,
            active_from_us: self.adapt.start_us,
        }
    }

    pub fn initial_state(&self) -> LinkState {
        LinkState {
            victim_channel: self.victim.channel,
            victim_length: self.victim.stream.length_bytes,
            wifi_channel: self.wifi_channel(),
            redundancy: false,
            rts_cts: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Scenario(m));
        if self.duration_us == 0 {
            return bad("duration must be positive".into());
        }
        RadioChannel::zigbee(self.victim.channel)?;
        check_stream("victim", &self.victim.stream)?;
        if !(1..=127).contains(&self.victim.stream.length_bytes) {
            return bad(format!("victim length {} outside 1..=127", self.victim.stream.length_bytes));
        }
        if self.arq.enabled && self.arq.max_attempts == 0 {
            return bad("arq.max_attempts must be at least 1".into());
        }
        if self.fim.queue_capacity == 0 {
            return bad("fim.queue_capacity must be at least 1".into());
        }
        if let Some(w) = self.adapt.wifi_channel {
            RadioChannel::wifi(w)?;
        }
        for (i, inter) in self.interferers.iter().enumerate() {
            let class = match inter {
                InterfererConfig::Zigbee { channel, stream } => {
                    RadioChannel::zigbee(*channel)?;
                    check_stream(&format!("interferer {i}"), stream)?;
                    vec![InterfererClass::ZigbeeCochannel]
                }
                InterfererConfig::Wifi { channel, config } => {
                    RadioChannel::wifi(*channel)?;
                    if config.control_interval_us == 0 && config.data_rate_pps <= 0.0 {
                        return bad(format!("interferer {i}: WiFi station sends nothing"));
                    }
                    if config.data_rate_pps < 0.0 || !config.data_rate_pps.is_finite() {
                        return bad(format!("interferer {i}: invalid data rate"));
                    }
                    vec![InterfererClass::WifiControl, InterfererClass::WifiData]
                }
                InterfererConfig::Bluetooth(cfg) => {
                    if !(1..=5).contains(&cfg.slots_per_packet) {
                        return bad(format!("interferer {i}: slots per packet must be 1..=5"));
                    }
                    vec![InterfererClass::BluetoothSlot]
                }
            };
            for c in class {
                if self.intensity.lookup(c, 0.0).is_none() {
                    return Err(Error::Intensity(format!("no rows for class {c} used by interferer {i}")));
                }
            }
        }
        Ok(())
    }
}

fn check_stream(what: &str, s: &StreamConfig) -> Result<()> {
    if !(s.rate_pps > 0.0 && s.rate_pps.is_finite()) {
        return Err(Error::Scenario(format!("{what}: rate must be positive")));
    }
    if !(0.0..=1.0).contains(&s.slip_prob) {
        return Err(Error::Scenario(format!("{what}: slip probability outside [0, 1]")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Dropped(CorruptionMask),
    Corrupted(CorruptionMask),
    Clean,
}

impl Outcome {
    pub fn kind(&self) -> OutcomeKind {
        match self {
            Outcome::Dropped(_) => OutcomeKind::Dropped,
            Outcome::Corrupted(_) => OutcomeKind::Corrupted,
            Outcome::Clean => OutcomeKind::Clean,
        }
    }

    pub fn error_count(&self) -> usize {
        match self {
            Outcome::Dropped(m) | Outcome::Corrupted(m) => m.error_count(),
            Outcome::Clean => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReceptionEvent {
    /// End of the victim frame.
    pub time_us: u64,
    pub stream_id: u32,
    pub seq: u16,
    pub start_us: u64,
    pub channel: i32,
    pub length_bytes: u32,
    pub outcome: Outcome,
    /// Interferer streams (1-based, configuration order) that set at least one byte.
    pub hit_by: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StreamCounters {
    pub sent: u64,
    pub dropped: u64,
    pub corrupted: u64,
    pub clean: u64,
    /// Frames abandoned after too many busy channel assessments.
    pub access_failures: u64,
}

impl StreamCounters {
    pub fn loss_rate(&self) -> f64 {
        ratio(self.dropped, self.sent)
    }

    pub fn failure_rate(&self) -> f64 {
        ratio(self.dropped + self.corrupted, self.sent)
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// What replay needs to rebuild the live FIM pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceMeta {
    pub settings: LinkSettings,
    pub initial: LinkState,
    pub duration_us: u64,
}

#[derive(Debug, Clone)]
pub struct SimTrace {
    pub name: String,
    pub seed: u64,
    pub duration_us: u64,
    pub events: Vec<ReceptionEvent>,
    pub victim: StreamCounters,
    /// Transmitted frames per interferer, in configuration order.
    pub interferer_sent: Vec<u64>,
    pub meta: TraceMeta,
    pub link: LinkAdapter,
}

impl SimTrace {
    pub fn clean_times(&self) -> impl Iterator<Item = u64> + '_ {
        self.events.iter().filter(|e| e.outcome == Outcome::Clean).map(|e| e.time_us)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateDecision {
    TransmitNow,
    Defer { until_us: u64 },
}

/// Listen-before-talk decision for a sender about to start on `sender`.
/// `on_air` holds the other streams' frames in flight at that instant.
pub fn carrier_sense_gate(
    sender_technology: Technology,
    sender: &RadioChannel,
    on_air: &[&Frame],
    flags: &CcaFlags,
    rng: &mut SimRng,
) -> GateDecision {
    let senses = |f: &Frame| {
        let fraction = spectral_overlap(sender, &f.channel).fraction;
        if fraction <= 0.0 {
            return false;
        }
        match (sender_technology, f.technology) {
            (Technology::Bluetooth, _) => flags.bluetooth_senses_any,
            (Technology::Wifi, Technology::Wifi) => flags.wifi_senses_wifi,
            (Technology::Wifi, Technology::Zigbee) => flags.wifi_senses_zigbee,
            (Technology::Zigbee, Technology::Zigbee) => flags.zigbee_cca_enabled,
            (Technology::Zigbee, Technology::Wifi) => flags.zigbee_cca_enabled && fraction >= 1.0,
            _ => false,
        }
    };
    match on_air.iter().filter(|f| senses(f)).map(|f| f.end_us()).max() {
        None => GateDecision::TransmitNow,
        Some(end) => GateDecision::Defer { until_us: end + rng.gen_range(0..=MAX_BACKOFF_US) },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EventKind {
    Interferer(usize),
    VictimAttempt,
    VictimEnd,
}

struct Queue {
    heap: BinaryHeap<Reverse<(u64, u64, EventKind)>>,
    order: u64,
}

impl Queue {
    fn push(&mut self, t: u64, kind: EventKind) {
        self.order += 1;
        self.heap.push(Reverse((t, self.order, kind)));
    }
}

struct InterfererState {
    frames: Vec<Frame>,
    next: usize,
    free_at: u64,
    backoffs: u32,
    rng: SimRng,
}

struct OnAir {
    stream: usize,
    frame: Frame,
}

struct Victim {
    cfg: StreamConfig,
    sched_rng: SimRng,
    backoff_rng: SimRng,
    k: u64,
    seq: u16,
    tries: u32,
    backoffs: u32,
    attempt_no: u64,
    current: Option<Frame>,
}

impl Victim {
    /// Next transmit opportunity at or after `after`.
    fn next_opportunity(&mut self, after: u64, duration_us: u64) -> Option<u64> {
        loop {
            if self.cfg.nominal_us(self.k) >= duration_us {
                return None;
            }
            let t = self.cfg.perturbed_us(self.k, &mut self.sched_rng);
            self.k += 1;
            if t >= after {
                return (t < duration_us).then_some(t);
            }
        }
    }
}

fn class_of(f: &Frame) -> InterfererClass {
    match (f.technology, f.kind) {
        (Technology::Zigbee, _) => InterfererClass::ZigbeeCochannel,
        (Technology::Wifi, FrameKind::Control) => InterfererClass::WifiControl,
        (Technology::Wifi, FrameKind::Data) => InterfererClass::WifiData,
        (Technology::Bluetooth, _) => InterfererClass::BluetoothSlot,
    }
}

pub fn run(scenario: &ScenarioConfig) -> Result<SimTrace> {
    scenario.validate()?;
    let seed = scenario.seed;
    let duration = scenario.duration_us;

    let mut streams = Vec::with_capacity(scenario.interferers.len());
    for (i, inter) in scenario.interferers.iter().enumerate() {
        let sub = derive_seed(seed, &[tag::STREAM, i as u64 + 1]);
        let source_id = i as u32 + 1;
        let frames = match inter {
            InterfererConfig::Zigbee { channel, stream } => {
                let cfg = StreamConfig { rng_seed: sub, ..stream.clone() };
                zigbee_stream(&cfg, source_id, RadioChannel::zigbee(*channel)?, duration)
            }
            InterfererConfig::Wifi { channel, config } => {
                let cfg = WifiConfig { rng_seed: sub, ..config.clone() };
                wifi_stream(&cfg, source_id, RadioChannel::wifi(*channel)?, duration)
            }
            InterfererConfig::Bluetooth(config) => {
                let cfg = BluetoothConfig { rng_seed: sub, ..config.clone() };
                bluetooth_stream(&cfg, source_id, duration)
            }
        };
        streams.push(InterfererState {
            frames,
            next: 0,
            free_at: 0,
            backoffs: 0,
            rng: derive_rng(seed, &[tag::BACKOFF, i as u64 + 1]),
        });
    }

    let victim_seed = derive_seed(seed, &[tag::STREAM, 0]);
    let mut victim = Victim {
        cfg: StreamConfig { rng_seed: victim_seed, ..scenario.victim.stream.clone() },
        sched_rng: derive_rng(victim_seed, &[tag::STREAM]),
        backoff_rng: derive_rng(seed, &[tag::BACKOFF, 0]),
        k: 0,
        seq: 0,
        tries: 0,
        backoffs: 0,
        attempt_no: 0,
        current: None,
    };

    let meta = TraceMeta {
        settings: scenario.link_settings(),
        initial: scenario.initial_state(),
        duration_us: duration,
    };
    let mut link = LinkAdapter::new(meta.settings.clone(), meta.initial);
    let mut counters = StreamCounters::default();
    let mut interferer_sent = vec![0u64; streams.len()];
    let mut events = Vec::new();
    let mut air: VecDeque<OnAir> = VecDeque::new();

    let mut queue = Queue { heap: BinaryHeap::new(), order: 0 };
    for (i, s) in streams.iter().enumerate() {
        if let Some(f) = s.frames.first() {
            queue.push(f.start_us, EventKind::Interferer(i));
        }
    }
    if let Some(t) = victim.next_opportunity(0, duration) {
        queue.push(t, EventKind::VictimAttempt);
    }

    while let Some(Reverse((t, _, kind))) = queue.heap.pop() {
        // Longest frame on air is under 5 ms.
        while air.front().is_some_and(|a| a.frame.end_us() + 10_000 < t) {
            air.pop_front();
        }
        match kind {
            EventKind::Interferer(i) => {
                let s = &mut streams[i];
                let mut frame = s.frames[s.next].clone();
                frame.start_us = t;
                let on_air: Vec<&Frame> = air
                    .iter()
                    .filter(|a| a.stream != i + 1 && a.frame.start_us <= t && t < a.frame.end_us())
                    .map(|a| &a.frame)
                    .collect();
                let mut decision = carrier_sense_gate(frame.technology, &frame.channel, &on_air, &scenario.cca, &mut s.rng);
                if decision == GateDecision::TransmitNow
                    && link.state.rts_cts
                    && frame.technology == Technology::Zigbee
                    && frame.channel.index == link.state.victim_channel
                {
                    // The victim's reservation silences co-channel ZigBee senders.
                    if let Some(end) = on_air.iter().filter(|f| f.source_id == VICTIM_STREAM_ID).map(|f| f.end_us()).max() {
                        decision = GateDecision::Defer { until_us: end + s.rng.gen_range(0..=MAX_BACKOFF_US) };
                    }
                }
                let mut advance = true;
                match decision {
                    GateDecision::TransmitNow => {
                        s.free_at = frame.end_us();
                        s.backoffs = 0;
                        interferer_sent[i] += 1;
                        air.push_back(OnAir { stream: i + 1, frame });
                    }
                    GateDecision::Defer { until_us } => {
                        s.backoffs += 1;
                        if frame.technology == Technology::Zigbee && s.backoffs > scenario.cca.max_backoffs {
                            s.backoffs = 0;
                        } else {
                            advance = false;
                            if until_us < duration {
                                queue.push(until_us, EventKind::Interferer(i));
                            }
                        }
                    }
                }
                if advance {
                    s.next += 1;
                    if let Some(f) = s.frames.get(s.next) {
                        let at = f.start_us.max(s.free_at).max(t + 1);
                        if at < duration {
                            queue.push(at, EventKind::Interferer(i));
                        }
                    }
                }
            }
            EventKind::VictimAttempt => {
                let state = link.state;
                let channel = RadioChannel::zigbee(state.victim_channel)?;
                let on_air: Vec<&Frame> = air
                    .iter()
                    .filter(|a| a.stream != 0 && a.frame.start_us <= t && t < a.frame.end_us())
                    .map(|a| &a.frame)
                    .collect();
                let mut flags = scenario.cca;
                if state.rts_cts {
                    flags.zigbee_cca_enabled = true;
                }
                let decision = carrier_sense_gate(Technology::Zigbee, &channel, &on_air, &flags, &mut victim.backoff_rng);
                match decision {
                    GateDecision::Defer { until_us } => {
                        victim.backoffs += 1;
                        if victim.backoffs > scenario.cca.max_backoffs {
                            victim.backoffs = 0;
                            counters.access_failures += 1;
                            if let Some(next) = victim.next_opportunity(t + 1, duration) {
                                queue.push(next, EventKind::VictimAttempt);
                            }
                        } else if until_us < duration {
                            queue.push(until_us, EventKind::VictimAttempt);
                        }
                    }
                    GateDecision::TransmitNow => {
                        victim.backoffs = 0;
                        let len = state.victim_length;
                        let frame = Frame {
                            technology: Technology::Zigbee,
                            source_id: VICTIM_STREAM_ID,
                            seq: victim.seq,
                            kind: FrameKind::Data,
                            channel,
                            start_us: t,
                            length_bytes: len,
                            bitrate_bps: ZIGBEE_BITRATE_BPS,
                            payload: payload_for(victim_seed, VICTIM_STREAM_ID, victim.seq, len),
                            airtime_override_us: None,
                        };
                        let end = t + airtime_us(len, ZIGBEE_BITRATE_BPS);
                        victim.current = Some(frame.clone());
                        air.push_back(OnAir { stream: 0, frame });
                        counters.sent += 1;
                        queue.push(end, EventKind::VictimEnd);
                    }
                }
            }
            EventKind::VictimEnd => {
                let frame = victim.current.take().expect("victim frame in flight");
                let attempt = victim.attempt_no;
                victim.attempt_no += 1;
                let redundancy = link.state.redundancy;
                let (outcome, hit_by) = resolve(scenario, &frame, attempt, redundancy, air.iter().filter(|a| a.stream != 0))?;

                let mut received = frame.payload.clone();
                match &outcome {
                    Outcome::Dropped(_) => counters.dropped += 1,
                    Outcome::Corrupted(mask) => {
                        counters.corrupted += 1;
                        let mut rng = derive_rng(seed, &[tag::CORRUPT_VALUE, attempt]);
                        for (b, &hit) in received.iter_mut().zip(mask.bits()) {
                            if hit {
                                *b ^= rng.gen_range(1..=255u8);
                            }
                        }
                    }
                    Outcome::Clean => counters.clean += 1,
                }
                let kind = outcome.kind();
                let action = link.on_reception(
                    t,
                    VICTIM_STREAM_ID,
                    frame.seq,
                    kind,
                    outcome.error_count(),
                    Some((&received, &frame.payload)),
                );
                events.push(ReceptionEvent {
                    time_us: t,
                    stream_id: VICTIM_STREAM_ID,
                    seq: frame.seq,
                    start_us: frame.start_us,
                    channel: frame.channel.index,
                    length_bytes: frame.length_bytes,
                    outcome,
                    hit_by,
                });
                if let Action::SwapChannel(_) = action {
                    victim.backoffs = 0;
                }

                victim.tries += 1;
                let retransmit = scenario.arq.enabled && kind != OutcomeKind::Clean && victim.tries < scenario.arq.max_attempts;
                let after = if retransmit {
                    t + scenario.arq.timeout_us
                } else {
                    victim.seq = victim.seq.wrapping_add(1);
                    victim.tries = 0;
                    t
                };
                if let Some(next) = victim.next_opportunity(after, duration) {
                    queue.push(next, EventKind::VictimAttempt);
                }
            }
        }
    }

    Ok(SimTrace {
        name: scenario.name.clone(),
        seed,
        duration_us: duration,
        events,
        victim: counters,
        interferer_sent,
        meta,
        link,
    })
}

fn resolve<'a>(
    scenario: &ScenarioConfig,
    victim: &Frame,
    attempt: u64,
    redundancy: bool,
    others: impl Iterator<Item = &'a OnAir>,
) -> Result<(Outcome, Vec<u32>)> {
    let len = victim.length_bytes as usize;
    let mut masks = vec![CorruptionMask::clean(len)];
    let mut hit_by = Vec::new();
    // Frames of one stream and class that reach the victim form a burst. Each
    // frame draws its own coupling coin; if any couples, the whole burst
    // corrupts, since the despreader has already lost lock.
    let mut bursts: Vec<((usize, InterfererClass), bool, Vec<&Frame>)> = Vec::new();
    for a in others {
        let f = &a.frame;
        if !f.overlaps(victim.start_us, victim.end_us()) {
            continue;
        }
        let overlap = spectral_overlap(&victim.channel, &f.channel);
        if overlap.fraction <= 0.0 {
            continue;
        }
        let class = class_of(f);
        let intensity = corruption_intensity(&scenario.intensity, class, &overlap)?;
        let (lo, hi) = corrupting_window(f);
        if bytes_in_window(victim.start_us, len, (lo + intensity.lead_us).min(hi), hi).is_empty() {
            continue;
        }
        let coin = intensity.p_frame >= 1.0
            || derive_rng(scenario.seed, &[tag::COUPLING, attempt, a.stream as u64, f.start_us]).gen::<f64>()
                < intensity.p_frame;
        let key = (a.stream, class);
        match bursts.iter_mut().find(|b| b.0 == key) {
            Some(b) => {
                b.1 |= coin;
                b.2.push(f);
            }
            None => bursts.push((key, coin, vec![f])),
        }
    }
    for ((stream, _), _, frames) in bursts.iter().filter(|b| b.1) {
        for f in frames {
            // BT hops change the intensity row frame by frame.
            let overlap = spectral_overlap(&victim.channel, &f.channel);
            let intensity = corruption_intensity(&scenario.intensity, class_of(f), &overlap)?;
            let mut rng = derive_rng(scenario.seed, &[tag::COLLISION, attempt, *stream as u64, f.start_us]);
            let m = trimmed_collision_mask(victim, f, intensity.p_corrupt, intensity.lead_us, &mut rng);
            if m.error_count() > 0 && !hit_by.contains(&(*stream as u32)) {
                hit_by.push(*stream as u32);
            }
            masks.push(m);
        }
    }
    if let Some(params) = scenario.victim.weak_link {
        let params = if redundancy {
            WeakLinkParams { p_symbol: params.p_symbol / 2.0, ..params }
        } else {
            params
        };
        let mut rng = derive_rng(scenario.seed, &[tag::WEAK_LINK, attempt]);
        masks.push(weak_link_mask(len, &params, &mut rng));
    }
    let mask = merge(&masks)?;
    let outcome = if header_hit(&mask) {
        Outcome::Dropped(mask)
    } else if mask.error_count() > 0 {
        Outcome::Corrupted(mask)
    } else {
        Outcome::Clean
    };
    Ok((outcome, hit_by))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zb_frame(ch: i32, start: u64, len: u32) -> Frame {
        Frame {
            technology: Technology::Zigbee,
            source_id: 9,
            seq: 0,
            kind: FrameKind::Data,
            channel: RadioChannel::zigbee(ch).unwrap(),
            start_us: start,
            length_bytes: len,
            bitrate_bps: ZIGBEE_BITRATE_BPS,
            payload: Vec::new(),
            airtime_override_us: None,
        }
    }

    fn wifi_frame(ch: i32, start: u64) -> Frame {
        Frame {
            technology: Technology::Wifi,
            kind: FrameKind::Data,
            channel: RadioChannel::wifi(ch).unwrap(),
            length_bytes: 1500,
            bitrate_bps: 11_000_000,
            ..zb_frame(11, start, 0)
        }
    }

    #[test]
    fn gate_rules() {
        let mut rng = derive_rng(1, &[]);
        let on = CcaFlags { zigbee_cca_enabled: true, ..Default::default() };
        let zb = zb_frame(11, 0, 122);
        let wifi = wifi_frame(1, 0);
        let bt = RadioChannel::bluetooth(3).unwrap();
        assert_eq!(carrier_sense_gate(Technology::Bluetooth, &bt, &[&zb, &wifi], &on, &mut rng), GateDecision::TransmitNow);
        assert_eq!(
            carrier_sense_gate(Technology::Wifi, &RadioChannel::wifi(1).unwrap(), &[&zb], &on, &mut rng),
            GateDecision::TransmitNow
        );
        let d = carrier_sense_gate(Technology::Zigbee, &RadioChannel::zigbee(11).unwrap(), &[&zb], &on, &mut rng);
        match d {
            GateDecision::Defer { until_us } => assert!((3904..=3904 + MAX_BACKOFF_US).contains(&until_us)),
            other => panic!("{other:?}"),
        }
        let off = CcaFlags::default();
        assert_eq!(
            carrier_sense_gate(Technology::Zigbee, &RadioChannel::zigbee(11).unwrap(), &[&zb], &off, &mut rng),
            GateDecision::TransmitNow
        );
        assert!(matches!(
            carrier_sense_gate(Technology::Zigbee, &RadioChannel::zigbee(13).unwrap(), &[&wifi], &on, &mut rng),
            GateDecision::Defer { .. }
        ));
        assert_eq!(
            carrier_sense_gate(Technology::Zigbee, &RadioChannel::zigbee(15).unwrap(), &[&wifi], &on, &mut rng),
            GateDecision::TransmitNow
        );
        assert!(matches!(
            carrier_sense_gate(Technology::Wifi, &RadioChannel::wifi(1).unwrap(), &[&wifi], &on, &mut rng),
            GateDecision::Defer { .. }
        ));
    }

    #[test]
    fn null_scenario_all_clean() {
        let mut s = ScenarioConfig::new("null", 11);
        s.duration_us = 2_000_000;
        let t = run(&s).unwrap();
        assert!(t.victim.sent > 60);
        assert_eq!(t.victim.clean, t.victim.sent);
    }

    #[test]
    fn data_burst_couples_as_a_whole() {
        let mut s = ScenarioConfig::new("burst", 11);
        s.intensity = IntensityTable::from_csv(
            "class,offset_lo_mhz,offset_hi_mhz,p_corrupt,p_frame,lead_us\nWifiData,-12,12,1.0,0.5,0\n",
        )
        .unwrap();
        let victim = zb_frame(11, 0, 122);
        let air = [
            OnAir { stream: 1, frame: wifi_frame(1, 500) },
            OnAir { stream: 1, frame: wifi_frame(1, 2000) },
        ];
        let mut counts = std::collections::BTreeSet::new();
        for attempt in 0..64 {
            let (outcome, _) = resolve(&s, &victim, attempt, false, air.iter()).unwrap();
            counts.insert(outcome.error_count());
        }
        // 35 bytes per frame; a lone frame never shows up on its own.
        assert_eq!(counts.into_iter().collect::<Vec<_>>(), vec![0, 70]);
    }

    #[test]
    fn validation_rejects_bad_channels() {
        let mut s = ScenarioConfig::new("bad", 27);
        assert!(s.validate().is_err());
        s.victim.channel = 11;
        s.interferers.push(InterfererConfig::Wifi { channel: 15, config: WifiConfig::default() });
        assert!(matches!(s.validate(), Err(Error::ChannelOutOfRange { .. })));
    }

    #[test]
    fn cca_on_cochannel_zigbee_never_collides() {
        let mut s = ScenarioConfig::new("cca", 11);
        s.duration_us = 5_000_000;
        s.cca.zigbee_cca_enabled = true;
        s.victim.stream.rate_pps = 50.0;
        s.interferers.push(InterfererConfig::Zigbee {
            channel: 11,
            stream: StreamConfig { rate_pps: 40.0, length_bytes: 40, phase_us: 1000, ..Default::default() },
        });
        let t = run(&s).unwrap();
        assert_eq!(t.victim.corrupted + t.victim.dropped, 0);
        assert!(t.victim.sent > 200);
    }

    #[test]
    fn arq_retransmits_until_clean() {
        let mut s = ScenarioConfig::new("arq", 11);
        s.duration_us = 3_000_000;
        s.arq.enabled = true;
        s.victim.weak_link = Some(WeakLinkParams::new(0.01, 0.2).unwrap());
        let t = run(&s).unwrap();
        let c = t.victim;
        assert_eq!(c.sent, c.dropped + c.corrupted + c.clean);
        assert!(c.corrupted > 0);
        let mut tries = 0;
        for w in t.events.windows(2) {
            tries += 1;
            if w[0].outcome != Outcome::Clean && tries < s.arq.max_attempts {
                assert_eq!(w[0].seq, w[1].seq);
                assert!(w[1].start_us >= w[0].time_us + s.arq.timeout_us);
            } else {
                assert_eq!(w[1].seq, w[0].seq.wrapping_add(1));
                tries = 0;
            }
        }
    }
}
