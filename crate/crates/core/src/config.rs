//! Scenario files: flat `key = value` lines with dotted section prefixes.
//!
//! ```text
//! name = fig2
//! duration_s = 60
//! victim.channel = 11
//! victim.rate_pps = 166
//! interferer.1.technology = zigbee
//! interferer.1.channel = 11
//! interferer.1.length = 16
//! ```
//!
//! `#` starts a comment. Interferers are numbered; the numbers only fix the
//! order. See the README for every key and its default.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::corruption::WeakLinkParams;
use crate::engine::{InterfererConfig, ScenarioConfig};
use crate::error::{Error, Result};
use crate::spectrum::{IntensityTable, RadioChannel, Technology};
use crate::traffic::{BluetoothConfig, BluetoothMode, StreamConfig, WifiConfig};

struct Entries {
    map: BTreeMap<String, (usize, String)>,
}

impl Entries {
    fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(Error::config(line, content, "expected `key = value`"));
            };
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(Error::config(line, "", "empty key"));
            }
            if let Some((prev, _)) = map.insert(key.to_string(), (line, value.to_string())) {
                return Err(Error::config(line, key, format!("duplicate key (first set on line {prev})")));
            }
        }
        Ok(Entries { map })
    }

    fn take_raw(&mut self, key: &str) -> Option<(usize, String)> {
        self.map.remove(key)
    }

    fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<(usize, T)>>
    where
        T::Err: std::fmt::Display,
    {
        match self.take_raw(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse::<T>()
                .map(|x| Some((line, x)))
                .map_err(|e| Error::config(line, key, format!("invalid value `{v}`: {e}"))),
        }
    }

    fn get<T: FromStr>(&mut self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.take(key)?.map_or(default, |(_, v)| v))
    }

    fn required<T: FromStr>(&mut self, key: &str) -> Result<(usize, T)>
    where
        T::Err: std::fmt::Display,
    {
        self.take(key)?.ok_or_else(|| Error::MissingKey(key.to_string()))
    }

    fn channel(&mut self, key: &str, technology: Technology) -> Result<i32> {
        let (line, index) = self.required::<i32>(key)?;
        RadioChannel::new(technology, index).map_err(|e| Error::config(line, key, e.to_string()))?;
        Ok(index)
    }

    fn probability(&mut self, key: &str, default: f64) -> Result<f64> {
        match self.take::<f64>(key)? {
            None => Ok(default),
            Some((line, p)) if !(0.0..=1.0).contains(&p) => {
                Err(Error::config(line, key, format!("{p} is not a probability")))
            }
            Some((_, p)) => Ok(p),
        }
    }

    fn positive(&mut self, key: &str, default: f64) -> Result<f64> {
        match self.take::<f64>(key)? {
            None => Ok(default),
            Some((line, v)) if !(v > 0.0 && v.is_finite()) => {
                Err(Error::config(line, key, format!("{v} must be positive")))
            }
            Some((_, v)) => Ok(v),
        }
    }

    fn has_prefix(&self, prefix: &str) -> bool {
        self.map.keys().any(|k| k.starts_with(prefix))
    }

    fn finish(self) -> Result<()> {
        match self.map.into_iter().min_by_key(|(_, (line, _))| *line) {
            None => Ok(()),
            Some((key, (line, _))) => Err(Error::config(line, key, "unknown key")),
        }
    }
}

fn zigbee_stream(e: &mut Entries, p: &str, base: StreamConfig) -> Result<StreamConfig> {
    let length_key = format!("{p}length");
    let length = match e.take::<u32>(&length_key)? {
        None => base.length_bytes,
        Some((line, n)) if !(1..=127).contains(&n) => {
            return Err(Error::config(line, length_key, format!("{n} is outside 1..=127")))
        }
        Some((_, n)) => n,
    };
    Ok(StreamConfig {
        rate_pps: e.positive(&format!("{p}rate_pps"), base.rate_pps)?,
        length_bytes: length,
        jitter_us: e.get(&format!("{p}jitter_us"), base.jitter_us)?,
        phase_us: e.get(&format!("{p}phase_us"), base.phase_us)?,
        rng_seed: 0,
        slip_us: e.get(&format!("{p}slip_us"), base.slip_us)?,
        slip_prob: e.probability(&format!("{p}slip_prob"), base.slip_prob)?,
    })
}

fn interferer(e: &mut Entries, n: &str) -> Result<InterfererConfig> {
    let p = format!("interferer.{n}.");
    let tech_key = format!("{p}technology");
    let (line, tech) = e.required::<String>(&tech_key)?;
    let technology =
        Technology::from_str(&tech).map_err(|m| Error::config(line, tech_key.clone(), m.to_string()))?;
    Ok(match technology {
        Technology::Zigbee => {
            let channel = e.channel(&format!("{p}channel"), Technology::Zigbee)?;
            let stream = zigbee_stream(e, &p, StreamConfig::default())?;
            InterfererConfig::Zigbee { channel, stream }
        }
        Technology::Wifi => {
            let channel = e.channel(&format!("{p}channel"), Technology::Wifi)?;
            let d = WifiConfig::default();
            let data_key = format!("{p}data_rate_pps");
            let data_rate_pps = match e.take::<f64>(&data_key)? {
                None => d.data_rate_pps,
                Some((line, r)) if !(r >= 0.0 && r.is_finite()) => {
                    return Err(Error::config(line, data_key, format!("{r} must be non-negative")))
                }
                Some((_, r)) => r,
            };
            InterfererConfig::Wifi {
                channel,
                config: WifiConfig {
                    control_interval_us: e.get(&format!("{p}control_interval_us"), d.control_interval_us)?,
                    control_length_bytes: e.get(&format!("{p}control_length"), d.control_length_bytes)?,
                    data_rate_pps,
                    data_length_bytes: e.get(&format!("{p}data_length"), d.data_length_bytes)?,
                    difs_us: e.get(&format!("{p}difs_us"), d.difs_us)?,
                    slot_us: e.get(&format!("{p}slot_us"), d.slot_us)?,
                    cw_min: e.get(&format!("{p}cw_min"), d.cw_min)?,
                    ack_overhead_us: e.get(&format!("{p}ack_overhead_us"), d.ack_overhead_us)?,
                    rng_seed: 0,
                },
            }
        }
        Technology::Bluetooth => {
            let mode_key = format!("{p}mode");
            let mode = match e.take_raw(&mode_key) {
                None => BluetoothMode::Steady,
                Some((_, m)) if m == "steady" => BluetoothMode::Steady,
                Some((_, m)) if m == "establishment" => BluetoothMode::Establishment,
                Some((line, m)) => {
                    return Err(Error::config(line, mode_key, format!("expected steady or establishment, got `{m}`")))
                }
            };
            let slots_key = format!("{p}slots");
            let slots_per_packet = match e.take::<u32>(&slots_key)? {
                None => 5,
                Some((line, s)) if ![1, 3, 5].contains(&s) => {
                    return Err(Error::config(line, slots_key, format!("{s} is not 1, 3 or 5")))
                }
                Some((_, s)) => s,
            };
            InterfererConfig::Bluetooth(BluetoothConfig { mode, slots_per_packet, rng_seed: 0 })
        }
    })
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    parse_config_in(text, Path::new("."))
}

/// Parses a scenario; `intensity.path` is resolved against `base_dir`.
pub fn parse_config_in(text: &str, base_dir: &Path) -> Result<ScenarioConfig> {
    let mut e = Entries::parse(text)?;
    let name = e.get("name", "scenario".to_string())?;
    let victim_channel = e.channel("victim.channel", Technology::Zigbee)?;
    let mut s = ScenarioConfig::new(&name, victim_channel);

    s.seed = e.get("seed", s.seed)?;
    let duration_s = e.positive("duration_s", s.duration_us as f64 / 1e6)?;
    s.duration_us = (duration_s * 1e6).round() as u64;
    s.victim.stream = zigbee_stream(&mut e, "victim.", s.victim.stream.clone())?;
    if e.has_prefix("victim.weak_link.") {
        let d = WeakLinkParams::default();
        let p_symbol = e.probability("victim.weak_link.p_symbol", d.p_symbol)?;
        let burst = e.probability("victim.weak_link.burst_continue", d.burst_continue)?;
        let params = WeakLinkParams::new(p_symbol, burst)
            .map_err(|err| Error::Scenario(format!("victim.weak_link: {err}")))?;
        s.victim.weak_link = Some(params);
    }

    s.arq.enabled = e.get("arq.enabled", s.arq.enabled)?;
    s.arq.timeout_us = e.get("arq.timeout_us", s.arq.timeout_us)?;
    s.arq.max_attempts = e.get("arq.max_attempts", s.arq.max_attempts)?;

    s.cca.zigbee_cca_enabled = e.get("cca.zigbee", s.cca.zigbee_cca_enabled)?;
    s.cca.wifi_senses_zigbee = e.get("cca.wifi_senses_zigbee", s.cca.wifi_senses_zigbee)?;
    s.cca.wifi_senses_wifi = e.get("cca.wifi_senses_wifi", s.cca.wifi_senses_wifi)?;
    s.cca.bluetooth_senses_any = e.get("cca.bluetooth_senses_any", s.cca.bluetooth_senses_any)?;
    s.cca.max_backoffs = e.get("cca.max_backoffs", s.cca.max_backoffs)?;

    let c = &mut s.fim.classifier;
    s.fim.queue_capacity = e.get("fim.queue_capacity", s.fim.queue_capacity)?;
    c.min_samples = e.get("fim.min_samples", c.min_samples)?;
    c.monotone_slack = e.get("fim.monotone_slack", c.monotone_slack)?;
    c.peaks.smoothing_halfwidth = e.get("fim.smoothing_halfwidth", c.peaks.smoothing_halfwidth)?;
    c.peaks.min_density = e.probability("fim.min_density", c.peaks.min_density)?;
    c.peaks.min_prominence = e.probability("fim.min_prominence", c.peaks.min_prominence)?;

    s.adapt.enabled = e.get("adapt.enabled", s.adapt.enabled)?;
    let start_s: f64 = e.get("adapt.start_s", 0.0)?;
    s.adapt.start_us = (start_s.max(0.0) * 1e6).round() as u64;
    if e.map.contains_key("adapt.wifi_channel") {
        s.adapt.wifi_channel = Some(e.channel("adapt.wifi_channel", Technology::Wifi)?);
    }

    if let Some((line, rel)) = e.take_raw("intensity.path") {
        let path = base_dir.join(&rel);
        let text = std::fs::read_to_string(&path).map_err(|err| Error::io(&path, err))?;
        s.intensity = IntensityTable::from_csv(&text)
            .map_err(|err| Error::config(line, "intensity.path", err.to_string()))?;
    }

    let mut numbers: Vec<(u32, String)> = Vec::new();
    for (key, (line, _)) in &e.map {
        if let Some(rest) = key.strip_prefix("interferer.") {
            let n = rest.split('.').next().unwrap_or("");
            let parsed = n
                .parse::<u32>()
                .map_err(|_| Error::config(*line, key.clone(), "interferer keys look like interferer.<n>.<field>"))?;
            if !numbers.iter().any(|(m, _)| *m == parsed) {
                numbers.push((parsed, n.to_string()));
            }
        }
    }
    numbers.sort();
    for (_, n) in numbers {
        s.interferers.push(interferer(&mut e, &n)?);
    }
    e.finish()?;
    s.validate()?;
    Ok(s)
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_in(&text, path.parent().unwrap_or(Path::new(".")))
}
