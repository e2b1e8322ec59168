//! Command implementations and artifact writing.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::adapt::{measure, ActionRecord, ClassificationRecord, LinkAdapter, LinkStats};
use crate::config::load_config;
use crate::engine::{run, StreamCounters};
use crate::error::{Error, Result};
use crate::fim::Classification;
use crate::suite::{run_all, FixtureResult};
use crate::trace::{read_trace, replay, write_trace};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_MISMATCH: i32 = 2;

#[derive(Debug, Clone)]
pub struct RunReport {
    pub name: String,
    pub seed: Option<u64>,
    pub counters: StreamCounters,
    pub classification: Classification,
    pub stats: LinkStats,
    pub histogram_path: PathBuf,
    pub classification_path: PathBuf,
    pub timeline_path: PathBuf,
    pub actions_path: PathBuf,
    pub trace_path: Option<PathBuf>,
    pub summary_path: PathBuf,
}

impl RunReport {
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let c = &self.counters;
        let file = |p: &Path| p.file_name().map_or(String::new(), |f| f.to_string_lossy().into_owned());
        let _ = writeln!(s, "scenario = {}", self.name);
        if let Some(seed) = self.seed {
            let _ = writeln!(s, "seed = {seed}");
        }
        let _ = writeln!(s, "sent = {}", c.sent);
        let _ = writeln!(s, "dropped = {}", c.dropped);
        let _ = writeln!(s, "corrupted = {}", c.corrupted);
        let _ = writeln!(s, "clean = {}", c.clean);
        let _ = writeln!(s, "access_failures = {}", c.access_failures);
        let _ = writeln!(s, "loss_rate = {:.6}", c.loss_rate());
        let _ = writeln!(s, "failure_rate = {:.6}", c.failure_rate());
        let _ = writeln!(s, "verdict = {}", self.classification.verdict);
        let _ = writeln!(s, "samples = {}", self.classification.sample_count);
        let _ = writeln!(s, "peaks = {}", self.classification.detail().trim_start_matches("peaks="));
        let _ = writeln!(s, "matched_collisions = {}", self.stats.matched_collisions);
        let opt = |x: Option<String>| x.unwrap_or_else(|| "none".into());
        let _ = writeln!(s, "detection_time_us = {}", opt(self.stats.detection_time_us.map(|t| t.to_string())));
        let _ = writeln!(s, "detection_matches = {}", opt(self.stats.detection_matches.map(|t| t.to_string())));
        let _ = writeln!(s, "actions = {}", self.stats.actions.len());
        let _ = writeln!(s, "pre_action_pps = {}", opt(self.stats.pre_mean.map(|x| format!("{x:.3}"))));
        let _ = writeln!(s, "post_action_pps = {}", opt(self.stats.post_mean.map(|x| format!("{x:.3}"))));
        let _ = writeln!(s, "gain = {}", opt(self.stats.gain.map(|x| format!("{x:.4}"))));
        let _ = writeln!(s, "histogram = {}", file(&self.histogram_path));
        let _ = writeln!(s, "classification_log = {}", file(&self.classification_path));
        let _ = writeln!(s, "timeline = {}", file(&self.timeline_path));
        let _ = writeln!(s, "action_log = {}", file(&self.actions_path));
        if let Some(t) = &self.trace_path {
            let _ = writeln!(s, "trace = {}", file(t));
        }
        s
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn classification_csv(log: &[ClassificationRecord]) -> String {
    let mut s = String::from("time_us,verdict,detail,sample_count\n");
    for r in log {
        let _ = writeln!(s, "{},{},{},{}", r.time_us, r.verdict, r.detail, r.sample_count);
    }
    s
}

pub fn actions_csv(actions: &[ActionRecord]) -> String {
    let mut s = String::from("time_us,action,detail\n");
    for a in actions {
        let _ = writeln!(s, "{},{},verdict={} matched={}", a.time_us, a.action, a.verdict, a.matched);
    }
    s
}

pub fn timeline_csv(stats: &LinkStats) -> String {
    let mut s = String::from("second,clean_pps\n");
    for (i, n) in stats.timeline.iter().enumerate() {
        let _ = writeln!(s, "{i},{n}");
    }
    s
}

fn write_artifacts(
    out: &Path,
    name: &str,
    seed: Option<u64>,
    counters: StreamCounters,
    link: &LinkAdapter,
    stats: LinkStats,
    trace_csv: Option<String>,
) -> Result<RunReport> {
    create_dir(out)?;
    let report = RunReport {
        name: name.to_string(),
        seed,
        counters,
        classification: link.classify(),
        stats,
        histogram_path: out.join("histogram.csv"),
        classification_path: out.join("classification.csv"),
        timeline_path: out.join("timeline.csv"),
        actions_path: out.join("actions.csv"),
        trace_path: trace_csv.as_ref().map(|_| out.join("trace.csv")),
        summary_path: out.join("summary.txt"),
    };
    write(&report.histogram_path, &link.histogram.to_csv())?;
    write(&report.classification_path, &classification_csv(&link.log))?;
    write(&report.timeline_path, &timeline_csv(&report.stats))?;
    write(&report.actions_path, &actions_csv(&link.actions))?;
    if let (Some(path), Some(text)) = (&report.trace_path, trace_csv) {
        write(path, &text)?;
    }
    write(&report.summary_path, &report.summary())?;
    Ok(report)
}

pub fn cmd_run(config: &Path, seed: Option<u64>, out: &Path) -> Result<RunReport> {
    let mut scenario = load_config(config)?;
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    let trace = run(&scenario)?;
    let stats = measure(trace.clean_times(), trace.duration_us, 1_000_000, &trace.link.actions, trace.link.matched_total);
    write_artifacts(out, &scenario.name, Some(scenario.seed), trace.victim, &trace.link, stats, Some(write_trace(&trace)))
}

pub fn cmd_replay(trace_path: &Path, out: &Path) -> Result<RunReport> {
    let text = fs::read_to_string(trace_path).map_err(|e| Error::io(trace_path, e))?;
    let file = read_trace(&text)?;
    let r = replay(&file);
    let stats = measure(r.clean_times.iter().copied(), file.meta.duration_us.max(1), 1_000_000, &r.link.actions, r.link.matched_total);
    let name = trace_path.file_stem().map_or("replay".into(), |s| s.to_string_lossy().into_owned());
    write_artifacts(out, &name, None, r.counters, &r.link, stats, None)
}

pub fn fixture_table(results: &[FixtureResult]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<14} {:<6} {:<44} observed", "fixture", "result", "expected");
    for r in results {
        let status = if r.pass() { "pass" } else { "FAIL" };
        let expected: Vec<String> = r.checks.iter().map(|c| format!("{} {}", c.label, c.expected)).collect();
        let observed: Vec<String> = r.checks.iter().map(|c| c.observed.clone()).collect();
        let _ = writeln!(s, "{:<14} {:<6} {:<44} {}", r.name, status, expected.join("; "), observed.join("; "));
    }
    s
}

pub fn fixtures_csv(results: &[FixtureResult]) -> String {
    let mut s = String::from("fixture,check,expected,observed,result\n");
    let clean = |x: &str| x.replace(',', ";");
    for r in results {
        for c in &r.checks {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.name,
                clean(&c.label),
                clean(&c.expected),
                clean(&c.observed),
                if c.pass { "pass" } else { "fail" }
            );
        }
    }
    s
}

/// Runs the suite and writes per-run artifacts under `out/<fixture>/<file>/`.
/// `seed` replaces every fixture's own seed when given.
pub fn cmd_fixtures(out: &Path, seed: Option<u64>) -> Result<Vec<FixtureResult>> {
    let results = run_all(seed)?;
    create_dir(out)?;
    for r in &results {
        for run in &r.runs {
            let dir = out.join(&r.name).join(&run.file);
            let stats = run.stats();
            let t = &run.trace;
            write_artifacts(&dir, &run.file, Some(t.seed), t.victim, &t.link, stats, Some(write_trace(t)))?;
        }
    }
    write(&out.join("fixtures.csv"), &fixtures_csv(&results))?;
    write(&out.join("fixtures.txt"), &fixture_table(&results))?;
    Ok(results)
}
