//! Named fixture scenarios and the checks each one must satisfy.

use std::fmt;
use std::thread;

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::adapt::{measure, Action, LinkStats};
use crate::config::parse_config;
use crate::engine::{run, InterfererConfig, ScenarioConfig, SimTrace};
use crate::error::{Error, Result};
use crate::fim::{detect_peaks, ErrorHistogram, Peak, Verdict};
use crate::spectrum::Technology;

macro_rules! fixture_files {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../fixtures/", $name, ".conf")))),*]
    };
}

/// Every shipped scenario file, by file stem.
pub const SCENARIO_FILES: &[(&str, &str)] = fixture_files!(
    "fig1",
    "fig2",
    "fig3",
    "fig4",
    "fig5",
    "bt-steady-ch11",
    "bt-steady-ch13",
    "bt-steady-ch14",
    "wifi-ctrl-11",
    "wifi-ctrl-13",
    "wifi-ctrl-14",
    "fig13-ch11",
    "fig13-ch13",
    "fig13-ch14",
    "len-1100",
    "len-1000",
    "mixed-ch11",
    "mixed-ch14",
    "fim-458",
    "fim-916",
);

/// Suite rows and the scenario files each one runs. The first file is the
/// primary run; the rest are companions.
pub const FIXTURES: &[(&str, &[&str])] = &[
    ("fig1", &["fig1"]),
    ("fig2", &["fig2"]),
    ("fig3", &["fig3"]),
    ("fig4", &["fig4"]),
    ("fig5", &["fig5"]),
    ("bt-steady", &["bt-steady-ch11", "bt-steady-ch13", "bt-steady-ch14"]),
    ("wifi-ctrl-11", &["wifi-ctrl-11"]),
    ("wifi-ctrl-13", &["wifi-ctrl-13"]),
    ("wifi-ctrl-14", &["wifi-ctrl-14"]),
    ("fig13", &["fig13-ch13", "fig13-ch14", "fig13-ch11"]),
    ("len-1100", &["len-1100"]),
    ("len-1000", &["len-1000"]),
    ("mixed-ch11", &["mixed-ch11", "mixed-ch14"]),
    ("fim-458", &["fim-458"]),
    ("fim-916", &["fim-916"]),
];

pub const WIFI_DATA_BAND: (usize, usize) = (2, 6);
pub const WIFI_CONTROL_BAND: (usize, usize) = (24, 30);

pub fn scenario_text(file: &str) -> Option<&'static str> {
    SCENARIO_FILES.iter().find(|(n, _)| *n == file).map(|(_, t)| *t)
}

pub fn scenario(file: &str) -> Result<ScenarioConfig> {
    let text = scenario_text(file).ok_or_else(|| Error::Scenario(format!("no fixture file `{file}`")))?;
    parse_config(text)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub label: String,
    pub expected: String,
    pub observed: String,
    pub pass: bool,
}

impl Check {
    fn new(label: &str, expected: impl Into<String>, observed: impl Into<String>, pass: bool) -> Self {
        Check { label: label.to_string(), expected: expected.into(), observed: observed.into(), pass }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.pass { "pass" } else { "FAIL" };
        write!(f, "{status}  {}: expected {}, observed {}", self.label, self.expected, self.observed)
    }
}

#[derive(Debug, Clone)]
pub struct FixtureRun {
    pub file: String,
    pub scenario: ScenarioConfig,
    pub trace: SimTrace,
}

impl FixtureRun {
    pub fn histogram(&self) -> &ErrorHistogram {
        &self.trace.link.histogram
    }

    pub fn peaks(&self) -> Vec<Peak> {
        detect_peaks(self.histogram(), &self.scenario.fim.classifier.peaks)
    }

    pub fn verdict(&self) -> Verdict {
        self.trace.link.classify().verdict
    }

    pub fn stats(&self) -> LinkStats {
        measure(
            self.trace.clean_times(),
            self.trace.duration_us,
            1_000_000,
            &self.trace.link.actions,
            self.trace.link.matched_total,
        )
    }

    /// Receptions after the first channel swap that an interferer of
    /// `technology` corrupted.
    pub fn hits_after_swap(&self, technology: Technology) -> Option<usize> {
        let swap = self.trace.link.actions.iter().find(|a| matches!(a.action, Action::SwapChannel(_)))?;
        let ids: Vec<u32> = self
            .scenario
            .interferers
            .iter()
            .enumerate()
            .filter(|(_, i)| i.technology() == technology)
            .map(|(k, _)| k as u32 + 1)
            .collect();
        Some(
            self.trace
                .events
                .iter()
                .filter(|e| e.start_us > swap.time_us && e.hit_by.iter().any(|id| ids.contains(id)))
                .count(),
        )
    }
}

#[derive(Debug, Clone)]
pub struct FixtureResult {
    pub name: String,
    pub runs: Vec<FixtureRun>,
    pub checks: Vec<Check>,
}

impl FixtureResult {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn run(&self, file: &str) -> Option<&FixtureRun> {
        self.runs.iter().find(|r| r.file == file)
    }

    pub fn primary(&self) -> &FixtureRun {
        &self.runs[0]
    }
}

pub fn run_files(files: &[&str], seed: Option<u64>) -> Result<Vec<FixtureRun>> {
    let scenarios: Vec<(String, ScenarioConfig)> = files
        .iter()
        .map(|f| {
            let mut s = scenario(f)?;
            if let Some(seed) = seed {
                s.seed = seed;
            }
            Ok((f.to_string(), s))
        })
        .collect::<Result<_>>()?;
    thread::scope(|scope| {
        let handles: Vec<_> = scenarios
            .into_iter()
            .map(|(file, scenario)| {
                scope.spawn(move || {
                    run(&scenario).map(|trace| FixtureRun { file, scenario, trace })
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("fixture thread panicked")).collect()
    })
}

pub fn run_fixture(name: &str, seed: Option<u64>) -> Result<FixtureResult> {
    let files = FIXTURES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, f)| *f)
        .ok_or_else(|| Error::Scenario(format!("unknown fixture `{name}`")))?;
    let runs = run_files(files, seed)?;
    let checks = evaluate(name, &runs);
    Ok(FixtureResult { name: name.to_string(), runs, checks })
}

/// Runs every fixture, several at a time.
pub fn run_all(seed: Option<u64>) -> Result<Vec<FixtureResult>> {
    thread::scope(|scope| {
        let handles: Vec<_> = FIXTURES
            .iter()
            .map(|(name, _)| scope.spawn(move || run_fixture(name, seed)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("fixture thread panicked")).collect()
    })
}

fn peak_list(peaks: &[Peak]) -> String {
    if peaks.is_empty() {
        return "none".into();
    }
    let mut by_pos: Vec<&Peak> = peaks.iter().collect();
    by_pos.sort_by_key(|p| p.position);
    by_pos.iter().map(|p| p.position.to_string()).collect::<Vec<_>>().join(",")
}

fn peak_in(peaks: &[Peak], lo: usize, hi: usize) -> bool {
    peaks.iter().any(|p| (lo..=hi).contains(&p.position))
}

fn pct(x: f64) -> String {
    format!("{:.2}%", 100.0 * x)
}

fn mode_checks(run: &FixtureRun, target: usize, min_density: f64, hidden: u32, out: &mut Vec<Check>) {
    let h = run.histogram();
    let mode = h.mode().unwrap_or(0);
    out.push(Check::new(
        "histogram mode",
        format!("{target}±1 B"),
        format!("{mode} B"),
        mode.abs_diff(target) <= 1,
    ));
    let d = h.density(mode);
    out.push(Check::new("mode density", format!(">= {min_density}"), format!("{d:.3}"), d >= min_density));
    let v = run.verdict();
    let ok = matches!(v, Verdict::ZigbeeHidden(n) if n.abs_diff(hidden) <= 1);
    out.push(Check::new("verdict", format!("ZigbeeHidden({hidden}±1)"), v.to_string(), ok));
}

/// Chi-square homogeneity test of error-length histograms, bins grouped by
/// ten. Returns the p-value.
pub fn homogeneity_p_value(histograms: &[&ErrorHistogram]) -> f64 {
    let group = |h: &ErrorHistogram, g: usize| -> f64 {
        let lo = g * 10 + 1;
        (lo..lo + 10).map(|k| h.count(k) as f64).sum()
    };
    let groups = crate::fim::MAX_ERROR_LEN.div_ceil(10);
    let cols: Vec<usize> = (0..groups)
        .filter(|&g| histograms.iter().map(|h| group(h, g)).sum::<f64>() > 0.0)
        .collect();
    let rows: Vec<f64> = histograms.iter().map(|h| h.total() as f64).collect();
    let total: f64 = rows.iter().sum();
    if cols.len() < 2 || rows.len() < 2 || total == 0.0 {
        return 1.0;
    }
    let mut stat = 0.0;
    for &g in &cols {
        let col: f64 = histograms.iter().map(|h| group(h, g)).sum();
        for (h, &r) in histograms.iter().zip(&rows) {
            let expected = r * col / total;
            if expected > 0.0 {
                stat += (group(h, g) - expected).powi(2) / expected;
            }
        }
    }
    let df = ((rows.len() - 1) * (cols.len() - 1)) as f64;
    1.0 - ChiSquared::new(df).expect("positive degrees of freedom").cdf(stat)
}

fn evaluate(name: &str, runs: &[FixtureRun]) -> Vec<Check> {
    let mut out = Vec::new();
    let main = &runs[0];
    let peaks = main.peaks();
    let v = main.verdict();
    let c = main.trace.victim;
    match name {
        "fig1" => {
            out.push(Check::new("verdict", "WeakLink", v.to_string(), v == Verdict::WeakLink));
            let f = (c.corrupted + c.dropped) as f64 / c.sent as f64;
            out.push(Check::new("corrupted share", "18±6%", pct(f), (f - 0.18).abs() <= 0.06));
        }
        "fig2" => {
            out.push(Check::new(
                "victim frames",
                ">= 10000",
                c.sent.to_string(),
                c.sent >= 10_000,
            ));
            mode_checks(main, 11, 0.20, 16, &mut out);
        }
        "fig3" => mode_checks(main, 85, 0.15, 90, &mut out),
        "fig4" => {
            out.push(Check::new("peaks", "1 and 106±3", peak_list(&peaks), peak_in(&peaks, 1, 1) && peak_in(&peaks, 103, 109)));
        }
        "fig5" => {
            out.push(Check::new("verdict", "GenericCoexistence", v.to_string(), v == Verdict::GenericCoexistence));
        }
        "bt-steady" => {
            let f = c.failure_rate();
            out.push(Check::new("loss+corruption", "< 4%", pct(f), f < 0.04));
            let h = main.histogram();
            let max = h.densities().into_iter().fold(0.0, f64::max);
            out.push(Check::new("max density", "< 0.12", format!("{max:.3}"), max < 0.12));
            let tail = h.range_density(80, 90);
            let body = h.range_density(40, 79) / 40.0;
            out.push(Check::new(
                "80-90 B mass",
                "sum >= 2x mean density over 40-79",
                format!("{tail:.4} vs {body:.4}"),
                tail > 0.0 && tail >= 2.0 * body,
            ));
            out.push(Check::new("verdict", "Bluetooth", v.to_string(), v == Verdict::Bluetooth));
            let hs: Vec<&ErrorHistogram> = runs.iter().map(|r| r.histogram()).collect();
            let p = homogeneity_p_value(&hs);
            out.push(Check::new("ch11/13/14 homogeneity", "p > 0.01", format!("p = {p:.3}"), p > 0.01));
        }
        "wifi-ctrl-11" | "wifi-ctrl-13" => {
            let ok = peaks.len() == 1 && peak_in(&peaks, 25, 28);
            out.push(Check::new("peaks", "single peak in 26-27±1", peak_list(&peaks), ok));
            out.push(Check::new("verdict", "WifiControlOnly", v.to_string(), v == Verdict::WifiControlOnly));
        }
        "wifi-ctrl-14" => {
            out.push(Check::new("verdict", "not WifiControlData", v.to_string(), v != Verdict::WifiControlData));
        }
        "fig13" => {
            let ok = peak_in(&peaks, 2, 6) && peak_in(&peaks, 25, 29);
            out.push(Check::new("ch13 peaks", "4±2 and 27±2", peak_list(&peaks), ok));
            out.push(Check::new("ch13 verdict", "WifiControlData", v.to_string(), v == Verdict::WifiControlData));
            let loss = c.loss_rate();
            out.push(Check::new("ch13 loss", "18±6%", pct(loss), (loss - 0.18).abs() <= 0.06));
            if let Some(ch14) = runs.iter().find(|r| r.file == "fig13-ch14") {
                let loss = ch14.trace.victim.loss_rate();
                out.push(Check::new("ch14 loss", "<= 2%", pct(loss), loss <= 0.02));
            }
        }
        "len-1100" => {
            let ok = peak_in(&peaks, WIFI_DATA_BAND.0, WIFI_DATA_BAND.1);
            out.push(Check::new("data peak (2-6)", "present", peak_list(&peaks), ok));
        }
        "len-1000" => {
            let data = peak_in(&peaks, WIFI_DATA_BAND.0, WIFI_DATA_BAND.1);
            out.push(Check::new("data peak (2-6)", "absent", peak_list(&peaks), !data));
            let ctrl = peak_in(&peaks, WIFI_CONTROL_BAND.0, WIFI_CONTROL_BAND.1);
            out.push(Check::new("control peak (24-30)", "present", peak_list(&peaks), ctrl));
        }
        "mixed-ch11" => {
            let ok = peak_in(&peaks, 2, 6) && peak_in(&peaks, 84, 86) && peak_in(&peaks, 24, 30);
            out.push(Check::new("ch11 peaks", "2-6, 85±1, 24-30", peak_list(&peaks), ok));
            if let Some(ch14) = runs.iter().find(|r| r.file == "mixed-ch14") {
                let p = ch14.peaks();
                out.push(Check::new("ch14 ZigBee peak", "absent", peak_list(&p), !peak_in(&p, 31, 121)));
            }
        }
        "fim-458" | "fim-916" => {
            let limit = if name == "fim-916" { 30 } else { 150 };
            let stats = main.stats();
            let first = main.trace.link.actions.first();
            let detected = first.is_some_and(|a| matches!(a.action, Action::SwapChannel(_)));
            let matches = stats.detection_matches.unwrap_or(u64::MAX);
            out.push(Check::new(
                "WiFi detection",
                format!("swap within <= {limit} matched collisions"),
                first.map_or("no action".into(), |a| format!("{} after {}", a.action, a.matched)),
                detected && matches <= limit,
            ));
            let hits = main.hits_after_swap(Technology::Wifi);
            out.push(Check::new(
                "post-swap WiFi corruption",
                "0",
                hits.map_or("no swap".into(), |h| h.to_string()),
                hits == Some(0),
            ));
            let gain = stats.gain;
            out.push(Check::new(
                "throughput gain",
                ">= 50%",
                gain.map_or("n/a".into(), pct),
                gain.is_some_and(|g| g >= 0.5),
            ));
            if name == "fim-458" {
                let (pre, post) = (stats.pre_mean.unwrap_or(0.0), stats.post_mean.unwrap_or(0.0));
                out.push(Check::new(
                    "throughput step",
                    "18±4 -> 28±4 pps",
                    format!("{pre:.1} -> {post:.1} pps"),
                    (pre - 18.0).abs() <= 4.0 && (post - 28.0).abs() <= 4.0,
                ));
            }
        }
        _ => {}
    }
    out
}

/// WiFi data rate of the first WiFi interferer, if any.
pub fn wifi_data_rate(s: &ScenarioConfig) -> Option<f64> {
    s.interferers.iter().find_map(|i| match i {
        InterfererConfig::Wifi { config, .. } => Some(config.data_rate_pps),
        _ => None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_fixture_file_parses() {
        for (name, _) in SCENARIO_FILES {
            let s = scenario(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(&s.name, name);
        }
        for (_, files) in FIXTURES {
            assert!(files.iter().all(|f| scenario_text(f).is_some()));
        }
    }

    #[test]
    fn fig13_shape() {
        let s = scenario("fig13-ch13").unwrap();
        assert_eq!(s.victim.channel, 13);
        assert_eq!(s.victim.stream.rate_pps, 166.0);
        assert_eq!(s.victim.stream.length_bytes, 122);
        match &s.interferers[..] {
            [InterfererConfig::Wifi { channel: 1, config }] => {
                assert_eq!(config.data_rate_pps, 916.0);
                assert_eq!(config.data_length_bytes, 1500);
                assert!(config.control_interval_us > 0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn homogeneity_of_identical_histograms() {
        let mut h = ErrorHistogram::new();
        for k in 1..=100 {
            h.record_n(k, 3);
        }
        assert!(homogeneity_p_value(&[&h, &h, &h]) > 0.99);
        let mut g = ErrorHistogram::new();
        g.record_n(5, 300);
        assert!(homogeneity_p_value(&[&h, &g]) < 1e-6);
    }
}
