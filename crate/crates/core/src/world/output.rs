//! Run artifacts: metrics, events, anomalies and the JSON summary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::scenario::Scenario;
use crate::sim::SimSummary;

pub const METRICS_FILE: &str = "metrics.csv";
pub const ANOMALIES_FILE: &str = "anomalies.csv";
pub const EVENTS_FILE: &str = "events.log";
pub const SUMMARY_FILE: &str = "summary.json";
pub const TRACE_FILE: &str = "trace.log";
pub const E2_TRACE_FILE: &str = "e2_trace.log";

pub const METRICS_HEADER: &str = "time_us,entity,metric,value";
pub const ANOMALIES_HEADER: &str = "time_us,ue,kind,score";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub time_us: u64,
    pub entity: String,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyRow {
    pub time_us: u64,
    pub ue: String,
    pub kind: String,
    pub score: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
    pub min: f64,
    pub max: f64,
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Nearest-rank percentile, `p` in (0, 1].
pub fn percentile(v: &[f64], p: f64) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let rank = ((p * s.len() as f64).ceil() as usize).clamp(1, s.len());
    s[rank - 1]
}

pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

impl Stats {
    pub fn of(v: &[f64]) -> Stats {
        if v.is_empty() {
            return Stats::default();
        }
        Stats {
            count: v.len(),
            mean: mean(v),
            median: median(v),
            p95: percentile(v, 0.95),
            min: v.iter().copied().fold(f64::INFINITY, f64::min),
            max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSummary {
    pub id: String,
    pub kind: String,
    pub ue: String,
    pub direction: String,
    /// Over metric intervals inside the flow's active window.
    pub throughput_mbps: Stats,
    pub offered_mbit: f64,
    pub delivered_mbit: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rtt_ms: Option<Stats>,
    pub pings_sent: u64,
    pub pings_lost: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceSummary {
    pub snssai: String,
    pub id: u8,
    pub status: String,
    pub radio_share: f64,
    pub dl_mbit: f64,
    pub ul_mbit: f64,
    pub requested_at_us: u64,
    pub ready_at_us: Option<u64>,
    pub failure: Option<String>,
    pub functions: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct E2NodeSummary {
    pub state: String,
    pub ran_functions: Vec<u16>,
    pub setup_attempts: u32,
    pub indications: u64,
    pub decode_failures: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSummary {
    pub name: String,
    pub kind: String,
    pub profile: String,
    pub state: String,
    pub one_way_proc_delay_us: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub f1_established_at_us: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub f1_setup_us: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub f1_failures: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub e2: Option<E2NodeSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UeSummary {
    pub name: String,
    pub state: String,
    pub serving_du: String,
    pub slice: Option<String>,
    pub attach_latency_us: Option<u64>,
    pub signaling_path: Vec<String>,
    pub data_path: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultRecord {
    pub kind: String,
    pub target: String,
    pub start_us: u64,
    pub end_us: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub at_us: u64,
    pub subject: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: Scenario,
    pub seed: u64,
    pub engine: SimSummary,
    pub flows: Vec<FlowSummary>,
    pub slices: Vec<SliceSummary>,
    pub nodes: Vec<NodeSummary>,
    pub census: BTreeMap<String, usize>,
    pub ues: Vec<UeSummary>,
    pub anomalies: BTreeMap<String, usize>,
    pub faults: Vec<FaultRecord>,
    pub failures: Vec<FailureRecord>,
    pub e2_unmatched: u64,
}

/// Everything a run produces, in memory.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: Summary,
    pub metrics: Vec<MetricRow>,
    pub anomalies: Vec<AnomalyRow>,
    pub events: Vec<String>,
    pub trace: Option<String>,
    pub e2_trace: Option<String>,
}

fn fmt_value(v: f64) -> String {
    format!("{v:.6}")
}

impl RunOutput {
    pub fn metrics_csv(&self) -> String {
        let mut rows: Vec<&MetricRow> = self.metrics.iter().collect();
        rows.sort_by_key(|r| r.time_us);
        let mut out = String::with_capacity(rows.len() * 40);
        out.push_str(METRICS_HEADER);
        out.push('\n');
        for r in rows {
            let _ = writeln!(out, "{},{},{},{}", r.time_us, r.entity, r.metric, fmt_value(r.value));
        }
        out
    }

    pub fn anomalies_csv(&self) -> String {
        let mut out = String::from(ANOMALIES_HEADER);
        out.push('\n');
        for a in &self.anomalies {
            let _ = writeln!(out, "{},{},{},{}", a.time_us, a.ue, a.kind, fmt_value(a.score));
        }
        out
    }

    pub fn events_log(&self) -> String {
        let mut out = self.events.join("\n");
        out.push('\n');
        out
    }

    pub fn summary_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.summary).expect("summary serializes");
        s.push('\n');
        s
    }

    pub fn write_to(&self, dir: &Path) -> io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(METRICS_FILE), self.metrics_csv())?;
        std::fs::write(dir.join(ANOMALIES_FILE), self.anomalies_csv())?;
        std::fs::write(dir.join(EVENTS_FILE), self.events_log())?;
        std::fs::write(dir.join(SUMMARY_FILE), self.summary_json())?;
        if let Some(t) = &self.trace {
            std::fs::write(dir.join(TRACE_FILE), t)?;
        }
        if let Some(t) = &self.e2_trace {
            std::fs::write(dir.join(E2_TRACE_FILE), t)?;
        }
        Ok(())
    }
}
