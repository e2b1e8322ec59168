//! Trace CSV (`time_us,stream_id,seq,outcome,error_count`) and replay of
//! recorded outcomes through the FIM pipeline.
//!
//! Leading `# key=value` lines carry the link settings of the run that
//! produced the trace so replay can rebuild the same pipeline. A trace
//! without them is replayed with ARQ matching and default FIM parameters.

use std::fmt::Write as _;

use crate::adapt::{LinkAdapter, LinkSettings, LinkState, Matching, OutcomeKind};
use crate::engine::{SimTrace, StreamCounters, TraceMeta};
use crate::error::{Error, Result};
use crate::fim::ClassifierParams;

pub const TRACE_HEADER: &str = "time_us,stream_id,seq,outcome,error_count";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceRecord {
    pub time_us: u64,
    pub stream_id: u32,
    pub seq: u16,
    pub outcome: OutcomeKind,
    pub error_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceFile {
    pub meta: TraceMeta,
    pub records: Vec<TraceRecord>,
}

pub fn write_trace(trace: &SimTrace) -> String {
    let mut out = String::new();
    write_meta(&mut out, &trace.meta);
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for e in &trace.events {
        let _ = writeln!(out, "{},{},{},{},{}", e.time_us, e.stream_id, e.seq, e.outcome.kind(), e.outcome.error_count());
    }
    out
}

fn write_meta(out: &mut String, m: &TraceMeta) {
    let s = &m.settings;
    let c = &s.classifier;
    let pairs: [(&str, String); 14] = [
        ("matching", s.matching.to_string()),
        ("victim_channel", m.initial.victim_channel.to_string()),
        ("victim_length", m.initial.victim_length.to_string()),
        ("wifi_channel", m.initial.wifi_channel.to_string()),
        ("adapt", s.adapt_enabled.to_string()),
        ("active_from_us", s.active_from_us.to_string()),
        ("queue_capacity", s.queue_capacity.to_string()),
        ("min_samples", c.min_samples.to_string()),
        ("smoothing_halfwidth", c.peaks.smoothing_halfwidth.to_string()),
        ("min_density", c.peaks.min_density.to_string()),
        ("min_prominence", c.peaks.min_prominence.to_string()),
        ("monotone_slack", c.monotone_slack.to_string()),
        ("duration_us", m.duration_us.to_string()),
        ("format", "1".to_string()),
    ];
    for (k, v) in pairs {
        let _ = writeln!(out, "# {k}={v}");
    }
}

fn default_meta() -> TraceMeta {
    TraceMeta {
        settings: LinkSettings {
            matching: Matching::Arq,
            queue_capacity: 16,
            classifier: ClassifierParams::default(),
            adapt_enabled: false,
            active_from_us: 0,
        },
        initial: LinkState { victim_channel: 11, victim_length: 122, wifi_channel: 1, redundancy: false, rts_cts: false },
        duration_us: 0,
    }
}

fn apply_meta(meta: &mut TraceMeta, line: usize, key: &str, value: &str) -> Result<()> {
    fn num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
        v.parse().map_err(|_| Error::Trace { line, message: format!("invalid value `{v}` for {key}") })
    }
    let s = &mut meta.settings;
    match key {
        "matching" => {
            s.matching = match value {
                "arq" => Matching::Arq,
                "reference" => Matching::Reference,
                other => return Err(Error::Trace { line, message: format!("unknown matching `{other}`") }),
            }
        }
        "victim_channel" => meta.initial.victim_channel = num(line, key, value)?,
        "victim_length" => meta.initial.victim_length = num(line, key, value)?,
        "wifi_channel" => meta.initial.wifi_channel = num(line, key, value)?,
        "adapt" => s.adapt_enabled = num(line, key, value)?,
        "active_from_us" => s.active_from_us = num(line, key, value)?,
        "queue_capacity" => s.queue_capacity = num(line, key, value)?,
        "min_samples" => s.classifier.min_samples = num(line, key, value)?,
        "smoothing_halfwidth" => s.classifier.peaks.smoothing_halfwidth = num(line, key, value)?,
        "min_density" => s.classifier.peaks.min_density = num(line, key, value)?,
        "min_prominence" => s.classifier.peaks.min_prominence = num(line, key, value)?,
        "monotone_slack" => s.classifier.monotone_slack = num(line, key, value)?,
        "duration_us" => meta.duration_us = num(line, key, value)?,
        _ => {}
    }
    Ok(())
}

pub fn read_trace(text: &str) -> Result<TraceFile> {
    let mut meta = default_meta();
    let mut records = Vec::new();
    let mut header_seen = false;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.trim();
        if l.is_empty() {
            continue;
        }
        if let Some(comment) = l.strip_prefix('#') {
            if let Some((k, v)) = comment.trim().split_once('=') {
                apply_meta(&mut meta, line, k.trim(), v.trim())?;
            }
            continue;
        }
        if !header_seen {
            if l != TRACE_HEADER {
                return Err(Error::Trace { line, message: format!("expected header `{TRACE_HEADER}`") });
            }
            header_seen = true;
            continue;
        }
        let fields: Vec<&str> = l.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::Trace { line, message: format!("expected 5 fields, found {}", fields.len()) });
        }
        let bad = |what: &str, v: &str| Error::Trace { line, message: format!("invalid {what} `{v}`") };
        let record = TraceRecord {
            time_us: fields[0].parse().map_err(|_| bad("time_us", fields[0]))?,
            stream_id: fields[1].parse().map_err(|_| bad("stream_id", fields[1]))?,
            seq: fields[2].parse().map_err(|_| bad("seq", fields[2]))?,
            outcome: fields[3].parse().map_err(|_| bad("outcome", fields[3]))?,
            error_count: fields[4].parse().map_err(|_| bad("error_count", fields[4]))?,
        };
        if record.outcome == OutcomeKind::Clean && record.error_count != 0 {
            return Err(Error::Trace { line, message: "clean record with nonzero error_count".into() });
        }
        if record.outcome == OutcomeKind::Corrupted && record.error_count == 0 {
            return Err(Error::Trace { line, message: "corrupted record with zero error_count".into() });
        }
        if records.last().is_some_and(|p: &TraceRecord| p.time_us > record.time_us) {
            return Err(Error::Trace { line, message: "records out of time order".into() });
        }
        records.push(record);
    }
    if meta.duration_us == 0 {
        meta.duration_us = records.last().map_or(0, |r| r.time_us + 1);
    }
    Ok(TraceFile { meta, records })
}

#[derive(Debug, Clone)]
pub struct Replay {
    pub link: LinkAdapter,
    pub counters: StreamCounters,
    pub clean_times: Vec<u64>,
}

pub fn replay(file: &TraceFile) -> Replay {
    let mut link = LinkAdapter::new(file.meta.settings.clone(), file.meta.initial);
    let mut counters = StreamCounters::default();
    let mut clean_times = Vec::new();
    for r in &file.records {
        counters.sent += 1;
        match r.outcome {
            OutcomeKind::Dropped => counters.dropped += 1,
            OutcomeKind::Corrupted => counters.corrupted += 1,
            OutcomeKind::Clean => {
                counters.clean += 1;
                clean_times.push(r.time_us);
            }
        }
        link.on_reception(r.time_us, r.stream_id, r.seq, r.outcome, r.error_count, None);
    }
    Replay { link, counters, clean_times }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fim::Verdict;

    #[test]
    fn empty_trace_is_unknown() {
        let f = read_trace("").unwrap();
        assert!(f.records.is_empty());
        let r = replay(&f);
        assert_eq!(r.link.classify().verdict, Verdict::Unknown);
    }

    #[test]
    fn truncated_line_named() {
        let text = format!("{TRACE_HEADER}\n10,0,0,clean,0\n20,0,1,corr\n");
        match read_trace(&text) {
            Err(Error::Trace { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn header_required() {
        assert!(matches!(read_trace("1,0,0,clean,0\n"), Err(Error::Trace { line: 1, .. })));
    }

    #[test]
    fn meta_round_trip() {
        let mut out = String::new();
        let mut m = default_meta();
        m.settings.matching = Matching::Reference;
        m.settings.classifier.peaks.min_density = 0.07;
        m.initial.victim_channel = 13;
        m.duration_us = 5_000_000;
        write_meta(&mut out, &m);
        out.push_str(TRACE_HEADER);
        let f = read_trace(&out).unwrap();
        assert_eq!(f.meta, m);
    }
}
