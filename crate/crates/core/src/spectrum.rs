//! Channel maps for the three 2.4 GHz technologies, rectangular band
//! overlap, and the calibrated overlap-to-corruption table.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Technology {
    Zigbee,
    Wifi,
    Bluetooth,
}

impl fmt::Display for Technology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Technology::Zigbee => "zigbee",
            Technology::Wifi => "wifi",
            Technology::Bluetooth => "bluetooth",
        })
    }
}

impl FromStr for Technology {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "zigbee" => Ok(Technology::Zigbee),
            "wifi" => Ok(Technology::Wifi),
            "bluetooth" => Ok(Technology::Bluetooth),
            other => Err(format!("unknown technology `{other}`")),
        }
    }
}

impl Technology {
    pub fn index_range(self) -> std::ops::RangeInclusive<i32> {
        match self {
            Technology::Zigbee => 11..=26,
            Technology::Wifi => 1..=14,
            Technology::Bluetooth => 0..=78,
        }
    }

    pub fn width_mhz(self) -> f64 {
        match self {
            Technology::Zigbee => 2.0,
            Technology::Wifi => 22.0,
            Technology::Bluetooth => 1.0,
        }
    }
}

pub fn center_frequency(technology: Technology, index: i32) -> Result<f64> {
    if !technology.index_range().contains(&index) {
        return Err(Error::ChannelOutOfRange { technology, index });
    }
    let mhz = match technology {
        Technology::Zigbee => 2405 + 5 * (index - 11),
        Technology::Wifi => 2412 + 5 * (index - 1),
        Technology::Bluetooth => 2402 + index,
    };
    Ok(f64::from(mhz))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioChannel {
    pub technology: Technology,
    pub index: i32,
    pub center_mhz: f64,
    pub width_mhz: f64,
}

impl RadioChannel {
    pub fn new(technology: Technology, index: i32) -> Result<Self> {
        Ok(RadioChannel {
            technology,
            index,
            center_mhz: center_frequency(technology, index)?,
            width_mhz: technology.width_mhz(),
        })
    }

    pub fn zigbee(index: i32) -> Result<Self> {
        Self::new(Technology::Zigbee, index)
    }

    pub fn wifi(index: i32) -> Result<Self> {
        Self::new(Technology::Wifi, index)
    }

    pub fn bluetooth(index: i32) -> Result<Self> {
        Self::new(Technology::Bluetooth, index)
    }

    pub fn band(&self) -> (f64, f64) {
        let half = self.width_mhz / 2.0;
        (self.center_mhz - half, self.center_mhz + half)
    }
}

impl fmt::Display for RadioChannel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.technology, self.index)
    }
}

/// How much of the victim band an interferer covers.
///
/// `signed_offset_mhz` is victim center minus interferer center. The
/// intensity table is keyed on it because a WiFi channel does not spread its
/// energy symmetrically: the lower edge carries more than the upper edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapDescriptor {
    pub fraction: f64,
    pub offset_mhz: f64,
    pub signed_offset_mhz: f64,
}

pub fn spectral_overlap(victim: &RadioChannel, interferer: &RadioChannel) -> OverlapDescriptor {
    let (v_lo, v_hi) = victim.band();
    let (i_lo, i_hi) = interferer.band();
    let width = (v_hi.min(i_hi) - v_lo.max(i_lo)).max(0.0);
    let signed = victim.center_mhz - interferer.center_mhz;
    OverlapDescriptor {
        fraction: (width / victim.width_mhz).clamp(0.0, 1.0),
        offset_mhz: signed.abs(),
        signed_offset_mhz: signed,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InterfererClass {
    WifiData,
    WifiControl,
    ZigbeeCochannel,
    BluetoothSlot,
}

impl fmt::Display for InterfererClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InterfererClass::WifiData => "WifiData",
            InterfererClass::WifiControl => "WifiControl",
            InterfererClass::ZigbeeCochannel => "ZigbeeCochannel",
            InterfererClass::BluetoothSlot => "BluetoothSlot",
        })
    }
}

impl FromStr for InterfererClass {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "WifiData" => Ok(InterfererClass::WifiData),
            "WifiControl" => Ok(InterfererClass::WifiControl),
            "ZigbeeCochannel" => Ok(InterfererClass::ZigbeeCochannel),
            "BluetoothSlot" => Ok(InterfererClass::BluetoothSlot),
            other => Err(format!("unknown interferer class `{other}`")),
        }
    }
}

/// Corruption strength of one interfering frame.
///
/// `p_frame` is the chance that the frame couples into the victim band
/// strongly enough to matter at all; `p_corrupt` is the per-byte chance of
/// corruption inside the corrupting window once it does. `lead_us` trims
/// the head of the window: the first part of a long WiFi frame leaves the
/// victim's despreader intact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intensity {
    pub p_corrupt: f64,
    pub p_frame: f64,
    pub lead_us: u64,
}

impl Intensity {
    pub const ZERO: Intensity = Intensity {
        p_corrupt: 0.0,
        p_frame: 0.0,
        lead_us: 0,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntensityRow {
    pub class: InterfererClass,
    pub offset_lo_mhz: f64,
    pub offset_hi_mhz: f64,
    pub intensity: Intensity,
}

impl IntensityRow {
    fn distance(&self, offset: f64) -> f64 {
        if offset < self.offset_lo_mhz {
            self.offset_lo_mhz - offset
        } else if offset > self.offset_hi_mhz {
            offset - self.offset_hi_mhz
        } else {
            0.0
        }
    }
}

const DEFAULT_TABLE: &str = include_str!("../fixtures/intensity.csv");
const HEADER: &str = "class,offset_lo_mhz,offset_hi_mhz,p_corrupt";

#[derive(Debug, Clone, PartialEq)]
pub struct IntensityTable {
    rows: Vec<IntensityRow>,
}

impl Default for IntensityTable {
    fn default() -> Self {
        Self::from_csv(DEFAULT_TABLE).expect("shipped intensity table is valid")
    }
}

impl IntensityTable {
    pub fn new(rows: Vec<IntensityRow>) -> Result<Self> {
        for (i, row) in rows.iter().enumerate() {
            let Intensity { p_corrupt, p_frame, .. } = row.intensity;
            if !(0.0..=1.0).contains(&p_corrupt) || !(0.0..=1.0).contains(&p_frame) {
                return Err(Error::Intensity(format!("row {}: probability outside [0,1]", i + 1)));
            }
            if row.offset_lo_mhz > row.offset_hi_mhz {
                return Err(Error::Intensity(format!("row {}: empty offset bucket", i + 1)));
            }
            if row.class == InterfererClass::ZigbeeCochannel && p_corrupt != 1.0 {
                return Err(Error::Intensity(format!(
                    "row {}: ZigbeeCochannel must corrupt with probability 1",
                    i + 1
                )));
            }
        }
        Ok(IntensityTable { rows })
    }

    pub fn rows(&self) -> &[IntensityRow] {
        &self.rows
    }

    /// Parses the table CSV. The trailing `p_frame` and `lead_us` columns are
    /// optional and default to 1 and 0.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| Error::Intensity("missing header".into()))?;
        let expected = match header {
            HEADER => 4,
            h if h == format!("{HEADER},p_frame") => 5,
            h if h == format!("{HEADER},p_frame,lead_us") => 6,
            other => return Err(Error::Intensity(format!("unexpected header `{other}`"))),
        };
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != expected {
                return Err(Error::Intensity(format!("row {}: expected {expected} fields", n + 1)));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::Intensity(format!("row {}: bad number `{s}`", n + 1)))
            };
            rows.push(IntensityRow {
                class: fields[0].parse().map_err(Error::Intensity)?,
                offset_lo_mhz: num(fields[1])?,
                offset_hi_mhz: num(fields[2])?,
                intensity: Intensity {
                    p_corrupt: num(fields[3])?,
                    p_frame: if expected > 4 { num(fields[4])? } else { 1.0 },
                    lead_us: if expected > 5 {
                        fields[5]
                            .parse()
                            .map_err(|_| Error::Intensity(format!("row {}: bad lead_us `{}`", n + 1, fields[5])))?
                    } else {
                        0
                    },
                },
            });
        }
        Self::new(rows)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{HEADER},p_frame,lead_us\n");
        for r in &self.rows {
            let i = r.intensity;
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.class, r.offset_lo_mhz, r.offset_hi_mhz, i.p_corrupt, i.p_frame, i.lead_us
            ));
        }
        out
    }

    /// Row for `offset`, falling back to the nearest bucket of the same class.
    pub fn lookup(&self, class: InterfererClass, signed_offset_mhz: f64) -> Option<&IntensityRow> {
        let mut best: Option<(&IntensityRow, f64)> = None;
        for row in self.rows.iter().filter(|r| r.class == class) {
            let d = row.distance(signed_offset_mhz);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((row, d));
            }
        }
        best.map(|(r, _)| r)
    }
}

pub fn corruption_intensity(
    table: &IntensityTable,
    class: InterfererClass,
    overlap: &OverlapDescriptor,
) -> Result<Intensity> {
    if overlap.fraction <= 0.0 {
        return Ok(Intensity::ZERO);
    }
    table
        .lookup(class, overlap.signed_offset_mhz)
        .map(|r| r.intensity)
        .ok_or_else(|| Error::Intensity(format!("no rows for class {class}")))
}
