//! Seeded traffic generators.
//!
//! Each generator returns the offered frames of one half-duplex transmitter,
//! time-ordered and non-overlapping. Cross-stream carrier sense is applied
//! later by the engine.

use std::fmt;

use rand::Rng;

use crate::rng::{derive_rng, SimRng};
use crate::spectrum::{RadioChannel, Technology};

pub const ZIGBEE_BITRATE_BPS: u64 = 250_000;
pub const ZIGBEE_BYTE_US: u64 = 32;
pub const ZIGBEE_DEFAULT_LENGTH: u32 = 122;
pub const WIFI_BASIC_RATE_BPS: u64 = 2_000_000;
pub const WIFI_DATA_RATE_BPS: u64 = 11_000_000;
pub const WIFI_CONTROL_LENGTH: u32 = 208;
pub const BT_SLOT_US: u64 = 625;
/// Guard left at the end of a Bluetooth slot train for the radio to retune.
pub const BT_SLOT_GUARD_US: u64 = 259;
pub const BT_CHANNELS: i32 = 79;
/// Inquiry/page ID packet length on air.
pub const BT_ID_PACKET_US: u64 = 68;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FrameKind {
    Data,
    Control,
}

impl fmt::Display for FrameKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FrameKind::Data => "data",
            FrameKind::Control => "control",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub technology: Technology,
    pub source_id: u32,
    pub seq: u16,
    pub kind: FrameKind,
    pub channel: RadioChannel,
    pub start_us: u64,
    pub length_bytes: u32,
    pub bitrate_bps: u64,
    /// Transmitted bytes; only filled for ZigBee frames.
    pub payload: Vec<u8>,
    /// Overrides the bitrate-derived airtime (Bluetooth slot trains).
    pub airtime_override_us: Option<u64>,
}

pub fn airtime_us(length_bytes: u32, bitrate_bps: u64) -> u64 {
    (u64::from(length_bytes) * 8 * 1_000_000).div_ceil(bitrate_bps)
}

impl Frame {
    pub fn airtime_us(&self) -> u64 {
        self.airtime_override_us
            .unwrap_or_else(|| airtime_us(self.length_bytes, self.bitrate_bps))
    }

    pub fn end_us(&self) -> u64 {
        self.start_us + self.airtime_us()
    }

    pub fn overlaps(&self, start_us: u64, end_us: u64) -> bool {
        self.start_us < end_us && start_us < self.end_us()
    }
}

/// Deterministic payload content for one sequence number of one stream.
pub fn payload_for(seed: u64, source_id: u32, seq: u16, length_bytes: u32) -> Vec<u8> {
    let mut rng = derive_rng(seed, &[crate::rng::tag::PAYLOAD, u64::from(source_id), u64::from(seq)]);
    (0..length_bytes).map(|_| rng.gen()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamConfig {
    pub rate_pps: f64,
    pub length_bytes: u32,
    pub jitter_us: u64,
    pub phase_us: u64,
    pub rng_seed: u64,
    /// Occasional late start of a frame (radio RX/TX turnaround deviation).
    pub slip_us: u64,
    pub slip_prob: f64,
}

impl Default for StreamConfig {
    fn default() -> Self {
        StreamConfig {
            rate_pps: 33.0,
            length_bytes: ZIGBEE_DEFAULT_LENGTH,
            jitter_us: 0,
            phase_us: 0,
            rng_seed: 0,
            slip_us: 0,
            slip_prob: 0.0,
        }
    }
}

impl StreamConfig {
    pub fn period_us(&self) -> f64 {
        1e6 / self.rate_pps
    }

    /// Nominal start of the `k`-th frame, before jitter.
    pub fn nominal_us(&self, k: u64) -> u64 {
        self.phase_us + (k as f64 * self.period_us()).round() as u64
    }

    /// Nominal start perturbed by jitter and slip.
    pub fn perturbed_us(&self, k: u64, rng: &mut SimRng) -> u64 {
        let nominal = self.nominal_us(k) as i64;
        let j = self.jitter_us as i64;
        let mut t = if j > 0 { nominal + rng.gen_range(-j..=j) } else { nominal };
        if self.slip_prob > 0.0 && rng.gen_bool(self.slip_prob) {
            t += self.slip_us as i64;
        }
        t.max(0) as u64
    }
}

pub fn zigbee_stream(cfg: &StreamConfig, source_id: u32, channel: RadioChannel, duration_us: u64) -> Vec<Frame> {
    let mut rng = derive_rng(cfg.rng_seed, &[crate::rng::tag::STREAM]);
    let airtime = airtime_us(cfg.length_bytes, ZIGBEE_BITRATE_BPS);
    let mut frames = Vec::new();
    let mut free_at = 0u64;
    let mut seq = 0u16;
    for k in 0.. {
        if cfg.nominal_us(k) >= duration_us {
            break;
        }
        let start = cfg.perturbed_us(k, &mut rng).max(free_at);
        if start >= duration_us {
            break;
        }
        frames.push(Frame {
            technology: Technology::Zigbee,
            source_id,
            seq,
            kind: FrameKind::Data,
            channel,
            start_us: start,
            length_bytes: cfg.length_bytes,
            bitrate_bps: ZIGBEE_BITRATE_BPS,
            payload: payload_for(cfg.rng_seed, source_id, seq, cfg.length_bytes),
            airtime_override_us: None,
        });
        free_at = start + airtime;
        seq = seq.wrapping_add(1);
    }
    frames
}

/// One 802.11b station: periodic control frames at basic rate plus offered
/// data at 11 Mb/s, with DCF spacing (DIFS, random backoff, SIFS + ACK)
/// between data frames.
#[derive(Debug, Clone, PartialEq)]
pub struct WifiConfig {
    /// 0 disables control traffic.
    pub control_interval_us: u64,
    pub control_length_bytes: u32,
    /// 0 gives a control-only station.
    pub data_rate_pps: f64,
    pub data_length_bytes: u32,
    pub difs_us: u64,
    pub slot_us: u64,
    pub cw_min: u32,
    /// Idle time after each data frame while the ACK is exchanged.
    pub ack_overhead_us: u64,
    pub rng_seed: u64,
}

impl Default for WifiConfig {
    fn default() -> Self {
        WifiConfig {
            control_interval_us: 102_400,
            control_length_bytes: WIFI_CONTROL_LENGTH,
            data_rate_pps: 0.0,
            data_length_bytes: 1500,
            difs_us: 50,
            slot_us: 20,
            cw_min: 31,
            ack_overhead_us: 258,
            rng_seed: 0,
        }
    }
}

pub fn wifi_stream(cfg: &WifiConfig, source_id: u32, channel: RadioChannel, duration_us: u64) -> Vec<Frame> {
    let mut rng = derive_rng(cfg.rng_seed, &[crate::rng::tag::STREAM]);
    let frame = |kind, start_us, length_bytes, bitrate_bps| Frame {
        technology: Technology::Wifi,
        source_id,
        seq: 0,
        kind,
        channel,
        start_us,
        length_bytes,
        bitrate_bps,
        payload: Vec::new(),
        airtime_override_us: None,
    };
    let data_period = (cfg.data_rate_pps > 0.0).then(|| 1e6 / cfg.data_rate_pps);
    let mut frames = Vec::new();
    let mut free_at = 0u64;
    let mut next_control = (cfg.control_interval_us > 0).then_some(0u64);
    let mut data_k = 0u64;
    let mut gap = None;
    loop {
        let data_start = data_period.map(|p| {
            let offered = (data_k as f64 * p).round() as u64;
            let g = *gap.get_or_insert_with(|| {
                cfg.difs_us + u64::from(rng.gen_range(0..=cfg.cw_min)) * cfg.slot_us
            });
            offered.max(free_at) + g
        });
        let control_start = next_control.map(|c| c.max(free_at));
        let take_control = match (control_start, data_start) {
            (Some(c), Some(d)) => c <= d,
            (Some(_), None) => true,
            (None, _) => false,
        };
        if take_control {
            let start = control_start.unwrap();
            if start >= duration_us {
                break;
            }
            let f = frame(FrameKind::Control, start, cfg.control_length_bytes, WIFI_BASIC_RATE_BPS);
            free_at = f.end_us();
            frames.push(f);
            next_control = next_control.map(|c| c + cfg.control_interval_us);
        } else {
            let Some(start) = data_start else { break };
            if start >= duration_us {
                break;
            }
            let f = frame(FrameKind::Data, start, cfg.data_length_bytes, WIFI_DATA_RATE_BPS);
            free_at = f.end_us() + cfg.ack_overhead_us;
            frames.push(f);
            data_k += 1;
            gap = None;
        }
    }
    frames
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BluetoothMode {
    /// Established piconet: 1600 hops/s, multi-slot packets hold a channel.
    Steady,
    /// Inquiry/page: 3200 hops/s of short ID packets.
    Establishment,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BluetoothConfig {
    pub mode: BluetoothMode,
    pub slots_per_packet: u32,
    pub rng_seed: u64,
}

pub fn bluetooth_stream(cfg: &BluetoothConfig, source_id: u32, duration_us: u64) -> Vec<Frame> {
    let mut rng = derive_rng(cfg.rng_seed, &[crate::rng::tag::STREAM]);
    let mut frames = Vec::new();
    let (spacing_x2, airtime) = match cfg.mode {
        BluetoothMode::Steady => {
            let slots = u64::from(cfg.slots_per_packet.max(1));
            (2 * slots * BT_SLOT_US, slots * BT_SLOT_US - BT_SLOT_GUARD_US)
        }
        BluetoothMode::Establishment => (BT_SLOT_US, BT_ID_PACKET_US),
    };
    for k in 0u64.. {
        let start = k * spacing_x2 / 2;
        if start >= duration_us {
            break;
        }
        let hop = rng.gen_range(0..BT_CHANNELS);
        frames.push(Frame {
            technology: Technology::Bluetooth,
            source_id,
            seq: 0,
            kind: FrameKind::Data,
            channel: RadioChannel::bluetooth(hop).expect("hop index in range"),
            start_us: start,
            length_bytes: 0,
            bitrate_bps: 1_000_000,
            payload: Vec::new(),
            airtime_override_us: Some(airtime),
        });
    }
    frames
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zb(ch: i32) -> RadioChannel {
        RadioChannel::zigbee(ch).unwrap()
    }

    fn non_overlapping(frames: &[Frame]) -> bool {
        frames.windows(2).all(|w| w[0].end_us() <= w[1].start_us)
    }

    #[test]
    fn zigbee_byte_time() {
        assert_eq!(airtime_us(1, ZIGBEE_BITRATE_BPS), 32);
        assert_eq!(airtime_us(122, ZIGBEE_BITRATE_BPS), 3904);
    }

    #[test]
    fn zigbee_rate_12_5() {
        let cfg = StreamConfig { rate_pps: 12.5, ..Default::default() };
        let frames = zigbee_stream(&cfg, 0, zb(11), 1_000_000);
        assert!(frames.len() == 12 || frames.len() == 13);
        assert_eq!(frames[1].start_us - frames[0].start_us, 80_000);
    }

    #[test]
    fn zigbee_rate_166() {
        let cfg = StreamConfig { rate_pps: 166.0, ..Default::default() };
        let frames = zigbee_stream(&cfg, 0, zb(11), 1_000_000);
        assert!((165..=167).contains(&frames.len()));
        assert!(frames.iter().all(|f| f.airtime_us() == 3904));
        assert!(non_overlapping(&frames));
    }

    #[test]
    fn zigbee_deterministic_and_seq_wraps() {
        let cfg = StreamConfig { rate_pps: 2000.0, length_bytes: 10, jitter_us: 50, rng_seed: 9, ..Default::default() };
        let a = zigbee_stream(&cfg, 3, zb(12), 40_000_000);
        let b = zigbee_stream(&cfg, 3, zb(12), 40_000_000);
        assert_eq!(a, b);
        assert!(a.len() > 70_000);
        for w in a.windows(2) {
            assert_eq!(w[1].seq, w[0].seq.wrapping_add(1));
        }
        assert!(non_overlapping(&a));
    }

    #[test]
    fn wifi_control_only_beacons() {
        let cfg = WifiConfig { control_interval_us: 102_400, ..Default::default() };
        let frames = wifi_stream(&cfg, 1, RadioChannel::wifi(1).unwrap(), 1_024_000);
        assert_eq!(frames.len(), 10);
        assert!(frames.iter().all(|f| f.kind == FrameKind::Control && f.airtime_us() == 832));
    }

    #[test]
    fn wifi_data_airtime_and_serialization() {
        assert_eq!(airtime_us(1500, WIFI_DATA_RATE_BPS), 1091);
        assert_eq!(airtime_us(1100, WIFI_DATA_RATE_BPS), 800);
        let cfg = WifiConfig { data_rate_pps: 1250.0, data_length_bytes: 1100, ..Default::default() };
        let frames = wifi_stream(&cfg, 1, RadioChannel::wifi(1).unwrap(), 1_000_000);
        assert!(non_overlapping(&frames));
        assert!(frames.iter().any(|f| f.kind == FrameKind::Data));
        assert!(frames.iter().any(|f| f.kind == FrameKind::Control));
    }

    #[test]
    fn bluetooth_slot_counts() {
        let cfg = BluetoothConfig { mode: BluetoothMode::Steady, slots_per_packet: 1, rng_seed: 1 };
        assert_eq!(bluetooth_stream(&cfg, 2, 1_000_000).len(), 1600);
        let cfg = BluetoothConfig { mode: BluetoothMode::Establishment, ..cfg };
        assert_eq!(bluetooth_stream(&cfg, 2, 1_000_000).len(), 3200);
        let cfg = BluetoothConfig { mode: BluetoothMode::Steady, slots_per_packet: 5, rng_seed: 1 };
        let frames = bluetooth_stream(&cfg, 2, 1_000_000);
        assert_eq!(frames[0].airtime_us(), 2866);
        assert!(non_overlapping(&frames));
    }
}
