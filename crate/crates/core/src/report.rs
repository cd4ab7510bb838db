//! Reads a run's output directory back and checks the scenario's criteria
//! against it.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use thiserror::Error;

use crate::scenario::Criterion;
use crate::world::output::{
    AnomalyRow, MetricRow, Summary, ANOMALIES_FILE, EVENTS_FILE, METRICS_FILE, SUMMARY_FILE,
};
use crate::world::RunOutput;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("missing artifacts in {dir}: {}", .files.join(", "))]
    MissingArtifacts { dir: String, files: Vec<String> },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{file}: {source}")]
    Csv { file: String, source: csv::Error },
    #[error("{file}: {source}")]
    Json {
        file: String,
        source: serde_json::Error,
    },
}

/// The four artifacts every run writes.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub metrics: Vec<MetricRow>,
    pub anomalies: Vec<AnomalyRow>,
    pub events: String,
    pub summary: Summary,
}

fn read(dir: &Path, file: &str) -> Result<String, ReportError> {
    let path = dir.join(file);
    std::fs::read_to_string(&path).map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn csv_rows(text: &str, file: &str) -> Result<Vec<(u64, String, String, f64)>, ReportError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in r.deserialize() {
        let row: (u64, String, String, f64) = rec.map_err(|source| ReportError::Csv {
            file: file.into(),
            source,
        })?;
        out.push(row);
    }
    Ok(out)
}

impl Artifacts {
    pub fn load(dir: &Path) -> Result<Artifacts, ReportError> {
        let required = [METRICS_FILE, ANOMALIES_FILE, EVENTS_FILE, SUMMARY_FILE];
        let missing: Vec<String> = required
            .iter()
            .filter(|f| !dir.join(f).is_file())
            .map(|f| f.to_string())
            .collect();
        if !missing.is_empty() {
            return Err(ReportError::MissingArtifacts {
                dir: dir.display().to_string(),
                files: missing,
            });
        }
        let metrics = csv_rows(&read(dir, METRICS_FILE)?, METRICS_FILE)?
            .into_iter()
            .map(|(time_us, entity, metric, value)| MetricRow {
                time_us,
                entity,
                metric,
                value,
            })
            .collect();
        let anomalies = csv_rows(&read(dir, ANOMALIES_FILE)?, ANOMALIES_FILE)?
            .into_iter()
            .map(|(time_us, ue, kind, score)| AnomalyRow {
                time_us,
                ue,
                kind,
                score,
            })
            .collect();
        let summary = serde_json::from_str(&read(dir, SUMMARY_FILE)?).map_err(|source| {
            ReportError::Json {
                file: SUMMARY_FILE.into(),
                source,
            }
        })?;
        Ok(Artifacts {
            metrics,
            anomalies,
            events: read(dir, EVENTS_FILE)?,
            summary,
        })
    }

    pub fn from_output(out: &RunOutput) -> Artifacts {
        Artifacts {
            metrics: out.metrics.clone(),
            anomalies: out.anomalies.clone(),
            events: out.events_log(),
            summary: out.summary.clone(),
        }
    }

    /// Values of one metric, as (interval end, value).
    pub fn series<'a>(&'a self, entity: &'a str, metric: &'a str) -> impl Iterator<Item = (u64, f64)> + 'a {
        self.metrics
            .iter()
            .filter(move |r| r.entity == entity && r.metric == metric)
            .map(|r| (r.time_us, r.value))
    }

    /// Mean of a flow's per-interval throughput over intervals lying inside
    /// `[from, to]`. `None` when no interval qualifies.
    pub fn flow_mean_mbps(&self, flow: &str, from: Option<u64>, to: Option<u64>) -> Option<f64> {
        let dt = self.summary.scenario.meta.metrics_interval_us;
        let ent = format!("flow:{flow}");
        let v: Vec<f64> = self
            .series(&ent, "mbps")
            .filter(|&(t, _)| from.is_none_or(|f| t >= f + dt) && to.is_none_or(|e| t <= e))
            .map(|(_, v)| v)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn rtts_ms(&self, flow: &str) -> Vec<f64> {
        let ent = format!("flow:{flow}");
        self.series(&ent, "rtt_ms").map(|(_, v)| v).collect()
    }
}

/// Precision and recall of emitted anomalies against the UE faults
/// recorded in the summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionScore {
    pub faults: usize,
    pub detected_faults: usize,
    pub anomalies: usize,
    pub true_positives: usize,
    pub precision: f64,
    pub recall: f64,
}

pub fn detection_score(a: &Artifacts, grace_us: u64) -> DetectionScore {
    let faults: Vec<_> = a
        .summary
        .faults
        .iter()
        .filter(|f| f.kind == "ue_drop" || f.kind == "throughput_degradation")
        .collect();
    let matches = |an: &AnomalyRow, f: &&crate::world::FaultRecord| {
        let end = f.end_us.unwrap_or(u64::MAX).saturating_add(grace_us);
        an.ue == f.target && an.time_us >= f.start_us && an.time_us <= end
    };
    let tp = a
        .anomalies
        .iter()
        .filter(|an| faults.iter().any(|f| matches(an, f)))
        .count();
    let detected = faults
        .iter()
        .filter(|f| a.anomalies.iter().any(|an| matches(an, f)))
        .count();
    let n = a.anomalies.len();
    DetectionScore {
        faults: faults.len(),
        detected_faults: detected,
        anomalies: n,
        true_positives: tp,
        precision: if n == 0 { 1.0 } else { tp as f64 / n as f64 },
        recall: if faults.is_empty() {
            1.0
        } else {
            detected as f64 / faults.len() as f64
        },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub label: String,
    pub measured: String,
    pub expected: String,
    pub pass: bool,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} vs {} {}",
            self.label,
            self.measured,
            self.expected,
            if self.pass { "PASS" } else { "FAIL" }
        )
    }
}

fn window(from: Option<u64>, to: Option<u64>) -> String {
    match (from, to) {
        (None, None) => String::new(),
        (f, t) => format!(
            " [{}..{} s]",
            f.map_or("0".into(), |x| format!("{}", x as f64 / 1e6)),
            t.map_or("end".into(), |x| format!("{}", x as f64 / 1e6))
        ),
    }
}

fn na(label: String, expected: String) -> CheckResult {
    CheckResult {
        label,
        measured: "no data".into(),
        expected,
        pass: false,
    }
}

pub fn evaluate(a: &Artifacts, c: &Criterion) -> CheckResult {
    match c {
        Criterion::FlowThroughput {
            flow,
            expected,
            rel_tol,
            from_us,
            to_us,
        } => {
            let label = format!("flow {flow} throughput{}", window(*from_us, *to_us));
            let exp = format!("{expected:.2} Mbps ±{:.1}%", rel_tol * 100.0);
            match a.flow_mean_mbps(flow, *from_us, *to_us) {
                None => na(label, exp),
                Some(m) => CheckResult {
                    label,
                    measured: format!("{m:.2} Mbps"),
                    expected: exp,
                    pass: (m - expected).abs() <= rel_tol * expected.abs(),
                },
            }
        }
        Criterion::FlowThroughputRange {
            flow,
            min_mbps,
            max_mbps,
            from_us,
            to_us,
        } => {
            let label = format!("flow {flow} throughput{}", window(*from_us, *to_us));
            let exp = match (min_mbps, max_mbps) {
                (Some(lo), Some(hi)) => format!("[{lo:.2}, {hi:.2}] Mbps"),
                (Some(lo), None) => format!("> {lo:.2} Mbps"),
                (None, Some(hi)) => format!("<= {hi:.2} Mbps"),
                (None, None) => "any".into(),
            };
            match a.flow_mean_mbps(flow, *from_us, *to_us) {
                None => na(label, exp),
                Some(m) => CheckResult {
                    label,
                    measured: format!("{m:.2} Mbps"),
                    expected: exp,
                    pass: min_mbps.is_none_or(|lo| m > lo) && max_mbps.is_none_or(|hi| m <= hi),
                },
            }
        }
        Criterion::RttMean {
            flow,
            expected_ms,
            min_ms,
            max_ms,
            min_pings,
        } => {
            let v = a.rtts_ms(flow);
            let label = format!("flow {flow} mean RTT");
            let exp = format!("{expected_ms:.2} ms in [{min_ms:.2}, {max_ms:.2}] over >= {min_pings} pings");
            if v.is_empty() {
                return na(label, exp);
            }
            let m = v.iter().sum::<f64>() / v.len() as f64;
            CheckResult {
                label,
                measured: format!("{m:.2} ms over {} pings", v.len()),
                expected: exp,
                pass: m >= *min_ms && m <= *max_ms && v.len() >= *min_pings,
            }
        }
        Criterion::ThroughputRatio {
            a: fa,
            b: fb,
            expected,
            abs_tol,
            from_us,
            to_us,
        } => {
            let label = format!("slice ratio {fa}:{fb}{}", window(*from_us, *to_us));
            let exp = format!(
                "configured {:.0}:{:.0} ±{:.1} pp",
                expected * 100.0,
                (1.0 - expected) * 100.0,
                abs_tol * 100.0
            );
            match (a.flow_mean_mbps(fa, *from_us, *to_us), a.flow_mean_mbps(fb, *from_us, *to_us)) {
                (Some(x), Some(y)) if x + y > 0.0 => {
                    let r = x / (x + y);
                    CheckResult {
                        label,
                        measured: format!("{:.1}:{:.1} ({x:.2} / {y:.2} Mbps)", r * 100.0, (1.0 - r) * 100.0),
                        expected: exp,
                        pass: (r - expected).abs() <= *abs_tol,
                    }
                }
                _ => na(label, exp),
            }
        }
        Criterion::SharedControlPlane { ues } => shared_control_plane(a, ues),
        Criterion::E2State {
            node,
            state,
            log_contains,
        } => {
            let label = format!("E2 node {node}");
            let mut exp = state.clone();
            if let Some(s) = log_contains {
                exp.push_str(&format!(" + log {s:?}"));
            }
            let got = a
                .summary
                .nodes
                .iter()
                .find(|n| &n.name == node)
                .and_then(|n| n.e2.as_ref());
            let Some(e2) = got else { return na(label, exp) };
            let logged = log_contains.as_ref().is_none_or(|s| {
                a.events.lines().any(|l| l.contains(s.as_str()) && l.contains(node.as_str()))
            });
            CheckResult {
                label,
                measured: format!(
                    "{} after {} setup attempt(s), {} indications{}",
                    e2.state,
                    e2.setup_attempts,
                    e2.indications,
                    if logged { "" } else { ", log line missing" }
                ),
                expected: exp,
                pass: &e2.state == state && logged,
            }
        }
        Criterion::Detection {
            min_precision,
            min_recall,
            grace_us,
        } => {
            let s = detection_score(a, *grace_us);
            CheckResult {
                label: "anomaly detection".into(),
                measured: format!(
                    "precision {:.3} ({}/{}), recall {:.3} ({}/{})",
                    s.precision, s.true_positives, s.anomalies, s.recall, s.detected_faults, s.faults
                ),
                expected: format!("precision >= {min_precision}, recall >= {min_recall}"),
                pass: s.precision >= *min_precision && s.recall >= *min_recall && s.faults > 0,
            }
        }
    }
}

fn shared_control_plane(a: &Artifacts, names: &[String]) -> CheckResult {
    let label = format!("slice topology {}", names.join(","));
    let expected = "SessionActive on distinct slices, dedicated user planes, one CU-CP and one AMF".to_string();
    let mut problems = Vec::new();
    let mut slices = BTreeSet::new();
    let mut cu_ups = BTreeSet::new();
    let mut upfs = BTreeSet::new();
    let mut smfs = BTreeSet::new();
    let mut control: BTreeSet<Vec<String>> = BTreeSet::new();
    for n in names {
        let Some(u) = a.summary.ues.iter().find(|u| &u.name == n) else {
            problems.push(format!("{n} missing"));
            continue;
        };
        if u.state != "SessionActive" {
            problems.push(format!("{n} is {}", u.state));
        }
        let Some(s) = &u.slice else { continue };
        slices.insert(s.clone());
        if let Some(rec) = a.summary.slices.iter().find(|r| &r.snssai == s) {
            cu_ups.extend(rec.functions.get("cu-up").cloned());
            upfs.extend(rec.functions.get("upf").cloned());
            smfs.extend(rec.functions.get("smf").cloned());
        }
        // UE, RU and DU differ per UE only by name; keep the shared tail.
        let tail: Vec<String> = u.signaling_path.iter().rev().take(2).cloned().collect();
        control.insert(tail);
    }
    let k = names.len();
    for (what, n) in [("slices", slices.len()), ("CU-UPs", cu_ups.len()), ("UPFs", upfs.len()), ("SMFs", smfs.len())] {
        if n != k {
            problems.push(format!("{n} {what}"));
        }
    }
    if control.len() != 1 {
        problems.push(format!("{} control planes", control.len()));
    }
    let census = |key: &str| a.summary.census.get(key).copied().unwrap_or(0);
    if census("cu_cp") != 1 || census("amf") != 1 {
        problems.push(format!("census cu_cp={} amf={}", census("cu_cp"), census("amf")));
    }
    let measured = if problems.is_empty() {
        format!(
            "{} slices, {} CU-UP/UPF/SMF sets, shared {}",
            slices.len(),
            cu_ups.len(),
            control.iter().next().map(|c| c.iter().rev().cloned().collect::<Vec<_>>().join("+")).unwrap_or_default()
        )
    } else {
        problems.join("; ")
    };
    CheckResult {
        label,
        measured,
        expected,
        pass: problems.is_empty(),
    }
}

pub fn evaluate_all(a: &Artifacts) -> Vec<CheckResult> {
    a.summary.scenario.criteria.iter().map(|c| evaluate(a, c)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_directory_is_missing_artifacts() {
        let d = tempfile::tempdir().unwrap();
        match Artifacts::load(d.path()) {
            Err(ReportError::MissingArtifacts { files, .. }) => assert_eq!(files.len(), 4),
            other => panic!("{other:?}"),
        }
    }
}
