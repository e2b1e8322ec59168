//! Per-byte corruption of a victim ZigBee frame.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::spectrum::Technology;
use crate::traffic::{Frame, ZIGBEE_BITRATE_BPS, ZIGBEE_BYTE_US};

/// SHR (preamble + SFD) length in bytes.
pub const SHR_BYTES: usize = 5;
/// SHR plus the PHY length byte; a hit here loses the frame.
pub const HEADER_BYTES: usize = SHR_BYTES + 1;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CorruptionMask {
    bits: Vec<bool>,
}

impl CorruptionMask {
    pub fn clean(length_bytes: usize) -> Self {
        CorruptionMask { bits: vec![false; length_bytes] }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        CorruptionMask { bits }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn error_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn set(&mut self, i: usize) {
        self.bits[i] = true;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeakLinkParams {
    pub p_symbol: f64,
    pub burst_continue: f64,
}

impl Default for WeakLinkParams {
    fn default() -> Self {
        WeakLinkParams { p_symbol: 0.004, burst_continue: 0.25 }
    }
}

impl WeakLinkParams {
    pub fn new(p_symbol: f64, burst_continue: f64) -> Result<Self> {
        let ok = |p: f64| (0.0..1.0).contains(&p);
        if !ok(p_symbol) || !ok(burst_continue) {
            return Err(Error::Scenario(format!(
                "weak-link probabilities must lie in [0,1): p_symbol={p_symbol}, burst_continue={burst_continue}"
            )));
        }
        Ok(WeakLinkParams { p_symbol, burst_continue })
    }

    /// A byte carries two 4-bit symbols.
    pub fn p_byte(&self) -> f64 {
        1.0 - (1.0 - self.p_symbol).powi(2)
    }
}

/// Span `[start, end)` of an interfering frame able to flip victim bytes.
///
/// A ZigBee interferer's own SHR does not register as byte errors, so its
/// window starts after its first five bytes.
pub fn corrupting_window(interferer: &Frame) -> (u64, u64) {
    let end = interferer.end_us();
    let start = match interferer.technology {
        Technology::Zigbee => {
            let shr_us = SHR_BYTES as u64 * ZIGBEE_BYTE_US * ZIGBEE_BITRATE_BPS / interferer.bitrate_bps;
            (interferer.start_us + shr_us).min(end)
        }
        Technology::Wifi | Technology::Bluetooth => interferer.start_us,
    };
    (start, end)
}

/// Byte indices of a victim starting at `victim_start` whose 32 µs interval
/// intersects `[lo, hi)`.
pub fn bytes_in_window(victim_start: u64, victim_len: usize, lo: u64, hi: u64) -> std::ops::Range<usize> {
    if hi <= lo || hi <= victim_start {
        return 0..0;
    }
    let first = (lo.saturating_sub(victim_start) / ZIGBEE_BYTE_US) as usize;
    let last = ((hi - victim_start).div_ceil(ZIGBEE_BYTE_US) as usize).min(victim_len);
    first.min(last)..last
}

/// One coin per victim byte touched by the corrupting window, in byte order.
pub fn collision_mask(victim: &Frame, interferer: &Frame, p_corrupt: f64, rng: &mut SimRng) -> CorruptionMask {
    trimmed_collision_mask(victim, interferer, p_corrupt, 0, rng)
}

/// As [`collision_mask`] with the first `lead_us` of the window ignored.
pub fn trimmed_collision_mask(
    victim: &Frame,
    interferer: &Frame,
    p_corrupt: f64,
    lead_us: u64,
    rng: &mut SimRng,
) -> CorruptionMask {
    let len = victim.length_bytes as usize;
    let mut mask = CorruptionMask::clean(len);
    let (lo, hi) = corrupting_window(interferer);
    let lo = (lo + lead_us).min(hi);
    for i in bytes_in_window(victim.start_us, len, lo, hi) {
        if rng.gen::<f64>() < p_corrupt {
            mask.set(i);
        }
    }
    mask
}

/// Two-state (clean/corrupt) chain over bytes.
pub fn weak_link_mask(length_bytes: usize, params: &WeakLinkParams, rng: &mut SimRng) -> CorruptionMask {
    let p_start = params.p_byte();
    let mut mask = CorruptionMask::clean(length_bytes);
    let mut corrupt = false;
    for i in 0..length_bytes {
        let p = if corrupt { params.burst_continue } else { p_start };
        corrupt = p > 0.0 && rng.gen::<f64>() < p;
        if corrupt {
            mask.set(i);
        }
    }
    mask
}

pub fn merge(masks: &[CorruptionMask]) -> Result<CorruptionMask> {
    let Some(first) = masks.first() else {
        return Ok(CorruptionMask::clean(0));
    };
    let mut out = first.clone();
    for m in &masks[1..] {
        if m.len() != out.len() {
            return Err(Error::LengthMismatch { left: out.len(), right: m.len() });
        }
        for (o, &b) in out.bits.iter_mut().zip(&m.bits) {
            *o |= b;
        }
    }
    Ok(out)
}

pub fn header_hit(mask: &CorruptionMask) -> bool {
    mask.bits.iter().take(HEADER_BYTES).any(|&b| b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_rng;
    use crate::spectrum::RadioChannel;
    use crate::traffic::{FrameKind, WIFI_BASIC_RATE_BPS};

    fn zb_frame(start_us: u64, length_bytes: u32) -> Frame {
        Frame {
            technology: Technology::Zigbee,
            source_id: 0,
            seq: 0,
            kind: FrameKind::Data,
            channel: RadioChannel::zigbee(11).unwrap(),
            start_us,
            length_bytes,
            bitrate_bps: ZIGBEE_BITRATE_BPS,
            payload: Vec::new(),
            airtime_override_us: None,
        }
    }

    fn window_len(f: &Frame) -> u64 {
        let (a, b) = corrupting_window(f);
        b - a
    }

    #[test]
    fn zigbee_windows() {
        assert_eq!(window_len(&zb_frame(0, 16)), 352);
        assert_eq!(window_len(&zb_frame(0, 90)), 2720);
        assert_eq!(window_len(&zb_frame(0, 4)), 0);
    }

    #[test]
    fn wifi_control_window() {
        let f = Frame {
            technology: Technology::Wifi,
            kind: FrameKind::Control,
            channel: RadioChannel::wifi(1).unwrap(),
            length_bytes: 208,
            bitrate_bps: WIFI_BASIC_RATE_BPS,
            ..zb_frame(100, 0)
        };
        assert_eq!(window_len(&f), 832);
    }

    #[test]
    fn contained_16_byte_collision() {
        let victim = zb_frame(0, 122);
        let mut rng = derive_rng(1, &[]);
        for start in (1000..1100).step_by(7) {
            let n = collision_mask(&victim, &zb_frame(start, 16), 1.0, &mut rng).error_count();
            assert!(n == 11 || n == 12, "{n}");
        }
        let aligned = collision_mask(&victim, &zb_frame(1024 - 160, 16), 1.0, &mut rng);
        assert_eq!(aligned.error_count(), 11);
    }

    #[test]
    fn lead_trims_the_window_head() {
        let victim = zb_frame(0, 122);
        let mut rng = derive_rng(1, &[]);
        let f = zb_frame(1000 - 160, 16);
        let full = trimmed_collision_mask(&victim, &f, 1.0, 0, &mut rng);
        let cut = trimmed_collision_mask(&victim, &f, 1.0, 96, &mut rng);
        assert_eq!(full.error_count() - cut.error_count(), 3);
        assert!(cut.bits().iter().zip(full.bits()).all(|(c, f)| !c | f));
        assert_eq!(trimmed_collision_mask(&victim, &f, 1.0, 10_000, &mut rng).error_count(), 0);
    }

    #[test]
    fn zero_probability_and_disjoint() {
        let victim = zb_frame(0, 122);
        let mut rng = derive_rng(1, &[]);
        assert_eq!(collision_mask(&victim, &zb_frame(500, 50), 0.0, &mut rng).error_count(), 0);
        assert_eq!(collision_mask(&victim, &zb_frame(10_000, 50), 1.0, &mut rng).error_count(), 0);
        let p = WeakLinkParams::new(0.0, 0.5).unwrap();
        assert_eq!(weak_link_mask(122, &p, &mut rng).error_count(), 0);
    }

    #[test]
    fn weak_link_params_validation() {
        assert!(WeakLinkParams::new(1.0, 0.1).is_err());
        assert!(WeakLinkParams::new(0.1, -0.1).is_err());
        assert!((WeakLinkParams::default().p_byte() - 0.007984).abs() < 1e-9);
    }

    #[test]
    fn merge_rules() {
        let a = CorruptionMask::from_bits(vec![true, false, false, true]);
        let b = CorruptionMask::from_bits(vec![false, true, false, false]);
        let z = CorruptionMask::clean(4);
        assert_eq!(merge(&[a.clone(), z]).unwrap(), a);
        assert_eq!(merge(&[a.clone(), a.clone()]).unwrap(), a);
        assert_eq!(merge(&[a.clone(), b.clone()]).unwrap().error_count(), 3);
        assert!(merge(&[a, CorruptionMask::clean(3)]).is_err());
    }

    #[test]
    fn header_rules() {
        let mut m = CorruptionMask::clean(122);
        assert!(!header_hit(&m));
        m.set(6);
        assert!(!header_hit(&m));
        m.set(0);
        assert!(header_hit(&m));
    }
}
