//! Scenario files: topology, slices, traffic and a timed event script.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::core5g::{NetworkFunction, SliceSpec, Snssai};
use crate::e2::{E2Quirk, RetryPolicy, REPORT_PERIOD_FLOOR_US};
use crate::radio::{RadioCalibration, TddConfig};
use crate::ran::{NodeKind, StackProfile};
use crate::ric::{DetectorConfig, TwinConfig};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub meta: Meta,
    #[serde(default)]
    pub radio: RadioSpec,
    pub topology: Topology,
    #[serde(default)]
    pub core: CoreSpec,
    /// Provisioned at boot, before any traffic.
    #[serde(default)]
    pub slices: Vec<SliceSpec>,
    #[serde(default)]
    pub ric: RicSpec,
    #[serde(default)]
    pub traffic: Vec<FlowSpec>,
    #[serde(default)]
    pub events: Vec<ScriptedEvent>,
    /// Pass/fail checks evaluated by `report`.
    #[serde(default)]
    pub criteria: Vec<Criterion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Meta {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub seed: u64,
    pub duration_us: u64,
    #[serde(default = "default_metrics_interval")]
    pub metrics_interval_us: u64,
}

fn default_metrics_interval() -> u64 {
    100_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadioSpec {
    pub bandwidth_mhz: f64,
    pub tdd: TddConfig,
    pub calibration: RadioCalibration,
    /// Mean one-way wait for a scheduling opportunity on the air interface.
    pub alignment_us: u64,
    /// Half-width of the uniform jitter added to each air-interface crossing.
    pub jitter_us: u64,
}

impl Default for RadioSpec {
    fn default() -> Self {
        RadioSpec {
            bandwidth_mhz: 40.0,
            tdd: TddConfig::DL_CENTRIC,
            calibration: RadioCalibration::default(),
            alignment_us: 2_000,
            jitter_us: 1_500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Topology {
    pub nodes: Vec<NodeSpec>,
    #[serde(default)]
    pub links: LinkSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: String,
    pub kind: NodeKind,
    #[serde(default = "default_profile")]
    pub profile: String,
    #[serde(default)]
    pub proc_delay_us: Option<u64>,
    #[serde(default)]
    pub dl_cap_mbps: Option<f64>,
    #[serde(default)]
    pub ul_cap_mbps: Option<f64>,
    #[serde(default)]
    pub e2_quirk: Option<E2Quirk>,
    /// DU only.
    #[serde(default)]
    pub ru: Option<String>,
    /// DU only; defaults to the first CU-CP.
    #[serde(default)]
    pub cu_cp: Option<String>,
    #[serde(default)]
    pub offline: bool,
}

fn default_profile() -> String {
    "vendor".into()
}

impl NodeSpec {
    /// Preset profile with per-node overrides applied.
    pub fn resolved_profile(&self) -> Result<StackProfile, String> {
        let mut p = StackProfile::preset(&self.profile, self.kind)
            .ok_or_else(|| format!("node {}: unknown profile {:?}", self.id, self.profile))?;
        if let Some(d) = self.proc_delay_us {
            p.one_way_proc_delay_us = d;
        }
        if self.dl_cap_mbps.is_some() {
            p.dl_cap_mbps = self.dl_cap_mbps;
        }
        if self.ul_cap_mbps.is_some() {
            p.ul_cap_mbps = self.ul_cap_mbps;
        }
        if let Some(q) = self.e2_quirk {
            p.e2_quirk = q;
        }
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkSpec {
    pub fronthaul_us: u64,
    pub midhaul_us: u64,
    /// RIC to E2 node, one way.
    pub e2_us: u64,
    /// UPF to application server, one way.
    pub server_us: u64,
}

impl Default for LinkSpec {
    fn default() -> Self {
        LinkSpec {
            fronthaul_us: 100,
            midhaul_us: 200,
            e2_us: 1_000,
            server_us: 1_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoreSpec {
    pub amf: String,
    pub proc_delay_us: u64,
    /// One AMF per slice, named `<amf>-<slice id>`, instead of one shared.
    pub sliced_amf: bool,
    pub subscribers: Vec<SubscriberSpec>,
}

impl Default for CoreSpec {
    fn default() -> Self {
        CoreSpec {
            amf: "amf".into(),
            proc_delay_us: 500,
            sliced_amf: false,
            subscribers: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubscriberSpec {
    pub ue: String,
    /// Serving DU; defaults to the first DU.
    #[serde(default)]
    pub du: Option<String>,
    pub allowed: Vec<Snssai>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RicSpec {
    pub enabled: bool,
    pub report_period_us: u64,
    pub retry: RetryPolicy,
    pub control_timeout_us: u64,
    /// Time to instantiate one network function.
    pub deploy_step_us: u64,
    /// DUs the RIC connects to; empty means all.
    pub e2_nodes: Vec<String>,
    pub twin: TwinSpec,
}

impl Default for RicSpec {
    fn default() -> Self {
        RicSpec {
            enabled: true,
            report_period_us: 100_000,
            retry: RetryPolicy::default(),
            control_timeout_us: 1_000_000,
            deploy_step_us: 50_000,
            e2_nodes: Vec::new(),
            twin: TwinSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TwinSpec {
    pub enabled: bool,
    pub config: TwinConfig,
    pub detectors: DetectorConfig,
    /// Re-run the share optimizer this often; off when absent.
    pub optimize_interval_us: Option<u64>,
}

impl Default for TwinSpec {
    fn default() -> Self {
        TwinSpec {
            enabled: true,
            config: TwinConfig::default(),
            detectors: DetectorConfig::default(),
            optimize_interval_us: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowKind {
    UdpCbr,
    TcpFullbuffer,
    Ping,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    pub id: String,
    pub kind: FlowKind,
    /// A UE name or "server".
    pub src: String,
    pub dst: String,
    /// UDP only.
    #[serde(default)]
    pub rate_mbps: Option<f64>,
    /// Ping only.
    #[serde(default = "default_ping_interval")]
    pub interval_us: u64,
    #[serde(default = "default_ping_size")]
    pub size_bytes: u64,
    #[serde(default)]
    pub start_us: u64,
    /// Defaults to the end of the run.
    #[serde(default)]
    pub stop_us: Option<u64>,
}

fn default_ping_interval() -> u64 {
    10_000
}

fn default_ping_size() -> u64 {
    64
}

pub const SERVER: &str = "server";

impl FlowSpec {
    /// The UE end of the flow, and whether traffic runs towards it.
    pub fn ue_end(&self) -> Option<(&str, bool)> {
        match (self.src.as_str(), self.dst.as_str()) {
            (SERVER, ue) if ue != SERVER => Some((ue, true)),
            (ue, SERVER) if ue != SERVER => Some((ue, false)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedEvent {
    pub at_us: u64,
    #[serde(flatten)]
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case", deny_unknown_fields)]
pub enum Action {
    Attach { ue: String, slice: Snssai },
    Detach { ue: String },
    CreateSlice { slice: SliceSpec },
    SetShares { shares: Vec<ShareUpdate> },
    InjectFault { fault: Fault },
    NodeUp { node: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShareUpdate {
    pub slice: Snssai,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Fault {
    /// Radio link loss for a UE.
    UeDrop { ue: String, duration_us: u64 },
    /// Scale a UE's delivered rate by `factor`.
    ThroughputDegradation {
        ue: String,
        factor: f64,
        duration_us: u64,
    },
    /// The node's E2 agent silently discards control requests.
    E2ControlDrop { node: String, duration_us: u64 },
    /// Take a RAN node or the AMF down until a `node_up` event.
    NodeDown { node: String },
}

impl Fault {
    pub fn name(&self) -> &'static str {
        match self {
            Fault::UeDrop { .. } => "ue_drop",
            Fault::ThroughputDegradation { .. } => "throughput_degradation",
            Fault::E2ControlDrop { .. } => "e2_control_drop",
            Fault::NodeDown { .. } => "node_down",
        }
    }

    /// Faults whose effect should be caught by the twin's detectors.
    pub fn is_ue_fault(&self) -> bool {
        matches!(self, Fault::UeDrop { .. } | Fault::ThroughputDegradation { .. })
    }
}

/// A named check on the outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case", deny_unknown_fields)]
pub enum Criterion {
    /// Mean throughput of a flow (Mbps) over `[from_us, to_us)` equals
    /// `expected` within a relative tolerance.
    FlowThroughput {
        flow: String,
        expected: f64,
        rel_tol: f64,
        #[serde(default)]
        from_us: Option<u64>,
        #[serde(default)]
        to_us: Option<u64>,
    },
    /// Mean throughput of a flow (Mbps) inside `[min_mbps, max_mbps]`.
    FlowThroughputRange {
        flow: String,
        #[serde(default)]
        min_mbps: Option<f64>,
        #[serde(default)]
        max_mbps: Option<f64>,
        #[serde(default)]
        from_us: Option<u64>,
        #[serde(default)]
        to_us: Option<u64>,
    },
    /// Mean ping RTT (ms) inside `[min_ms, max_ms]` over at least
    /// `min_pings` replies. `expected_ms` is for display.
    RttMean {
        flow: String,
        expected_ms: f64,
        min_ms: f64,
        max_ms: f64,
        #[serde(default)]
        min_pings: usize,
    },
    /// Ratio a / (a + b) of two flows' mean throughput.
    ThroughputRatio {
        a: String,
        b: String,
        expected: f64,
        abs_tol: f64,
        #[serde(default)]
        from_us: Option<u64>,
        #[serde(default)]
        to_us: Option<u64>,
    },
    /// Every listed UE ends SessionActive on its own slice with its own
    /// CU-UP, SMF and UPF, while all share one CU-CP and one AMF.
    SharedControlPlane { ues: Vec<String> },
    /// Final E2 state of a DU, optionally with a line in the event log.
    E2State {
        node: String,
        state: String,
        #[serde(default)]
        log_contains: Option<String>,
    },
    /// Precision and recall of anomalies against injected faults.
    Detection { min_precision: f64, min_recall: f64, grace_us: u64 },
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Scenario, ScenarioError> {
        let s: Scenario = serde_json::from_str(text)?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Scenario::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn nodes_of(&self, kind: NodeKind) -> impl Iterator<Item = &NodeSpec> {
        self.topology.nodes.iter().filter(move |n| n.kind == kind)
    }

    pub fn node(&self, id: &str) -> Option<&NodeSpec> {
        self.topology.nodes.iter().find(|n| n.id == id)
    }

    /// Structural checks. Returns every problem found.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let mut errs: Vec<String> = Vec::new();
        let m = &self.meta;
        if m.duration_us == 0 {
            errs.push("meta.duration_us must be > 0".into());
        }
        if m.metrics_interval_us == 0 {
            errs.push("meta.metrics_interval_us must be > 0".into());
        }
        if !(self.radio.bandwidth_mhz.is_finite() && self.radio.bandwidth_mhz > 0.0) {
            errs.push("radio.bandwidth_mhz must be > 0".into());
        }
        if let Err(e) = self.radio.tdd.validate() {
            errs.push(e.to_string());
        }
        if let Err(e) = self.radio.calibration.validate() {
            errs.push(e.to_string());
        }
        if self.radio.jitter_us > self.radio.alignment_us {
            errs.push("radio.jitter_us must not exceed radio.alignment_us".into());
        }

        let mut names: BTreeSet<&str> = BTreeSet::new();
        let reserved = [SERVER, self.core.amf.as_str(), "ric"];
        let claim = |n: &'_ str, errs: &mut Vec<String>| {
            if reserved.contains(&n) {
                errs.push(format!("name {n:?} is reserved"));
            }
        };
        for n in &self.topology.nodes {
            claim(&n.id, &mut errs);
            if !names.insert(&n.id) {
                errs.push(format!("duplicate node id {:?}", n.id));
            }
            if n.kind == NodeKind::CuUp {
                errs.push(format!("node {}: CU-UPs are deployed per slice, not declared", n.id));
            }
            if let Err(e) = n.resolved_profile() {
                errs.push(e);
            }
            if n.kind != NodeKind::Du && (n.ru.is_some() || n.cu_cp.is_some()) {
                errs.push(format!("node {}: ru/cu_cp only apply to DUs", n.id));
            }
            if let Some(r) = &n.ru {
                if self.node(r).map(|x| x.kind) != Some(NodeKind::Ru) {
                    errs.push(format!("node {}: ru {r:?} is not an RU", n.id));
                }
            }
            if let Some(c) = &n.cu_cp {
                if self.node(c).map(|x| x.kind) != Some(NodeKind::CuCp) {
                    errs.push(format!("node {}: cu_cp {c:?} is not a CU-CP", n.id));
                }
            }
        }
        if self.nodes_of(NodeKind::Du).next().is_none() {
            errs.push("topology needs at least one DU".into());
        }
        if self.nodes_of(NodeKind::CuCp).next().is_none() {
            errs.push("topology needs at least one CU-CP".into());
        }

        let mut ues: BTreeSet<&str> = BTreeSet::new();
        for s in &self.core.subscribers {
            claim(&s.ue, &mut errs);
            if names.contains(s.ue.as_str()) || !ues.insert(&s.ue) {
                errs.push(format!("duplicate name {:?}", s.ue));
            }
            if let Some(d) = &s.du {
                if self.node(d).map(|x| x.kind) != Some(NodeKind::Du) {
                    errs.push(format!("subscriber {}: du {d:?} is not a DU", s.ue));
                }
            }
        }

        let mut snssais: BTreeSet<Snssai> = BTreeSet::new();
        let check_slice = |s: &SliceSpec, errs: &mut Vec<String>| {
            if let Err(e) = s.validate() {
                errs.push(e);
            }
            if !s.dedicated_functions.contains(&NetworkFunction::Upf) {
                errs.push(format!("slice {}: the UPF must be dedicated", s.snssai));
            }
        };
        let mut total = 0.0;
        for s in &self.slices {
            check_slice(s, &mut errs);
            total += s.radio_share;
            if !snssais.insert(s.snssai) {
                errs.push(format!("duplicate slice {}", s.snssai));
            }
        }
        if total > 1.0 + 1e-9 {
            errs.push(format!("boot slice shares sum to {total} > 1"));
        }

        let r = &self.ric;
        if r.enabled {
            if r.report_period_us < REPORT_PERIOD_FLOOR_US {
                errs.push(format!("ric.report_period_us below {REPORT_PERIOD_FLOOR_US}"));
            }
            if r.control_timeout_us == 0 {
                errs.push("ric.control_timeout_us must be > 0".into());
            }
            for n in &r.e2_nodes {
                if self.node(n).map(|x| x.kind) != Some(NodeKind::Du) {
                    errs.push(format!("ric.e2_nodes: {n:?} is not a DU"));
                }
            }
            if r.twin.config.window == 0 {
                errs.push("ric.twin.window must be > 0".into());
            }
            if r.twin.detectors.consecutive == 0 {
                errs.push("ric.twin.detectors.consecutive must be > 0".into());
            }
        }

        let mut flow_ids: BTreeSet<&str> = BTreeSet::new();
        for f in &self.traffic {
            if !flow_ids.insert(&f.id) {
                errs.push(format!("duplicate flow id {:?}", f.id));
            }
            match f.ue_end() {
                Some((ue, _)) if ues.contains(ue) => {}
                _ => errs.push(format!(
                    "flow {}: one end must be \"server\" and the other a subscriber",
                    f.id
                )),
            }
            match (f.kind, f.rate_mbps) {
                (FlowKind::UdpCbr, Some(r)) if r.is_finite() && r > 0.0 => {}
                (FlowKind::UdpCbr, _) => errs.push(format!("flow {}: udp_cbr needs rate_mbps > 0", f.id)),
                (_, Some(_)) => errs.push(format!("flow {}: rate_mbps only applies to udp_cbr", f.id)),
                _ => {}
            }
            if f.kind == FlowKind::Ping && f.interval_us == 0 {
                errs.push(format!("flow {}: interval_us must be > 0", f.id));
            }
            if let Some(stop) = f.stop_us {
                if stop <= f.start_us {
                    errs.push(format!("flow {}: stop_us must be after start_us", f.id));
                }
            }
        }

        let node_or_amf = |n: &str| self.node(n).is_some() || n == self.core.amf;
        for (i, e) in self.events.iter().enumerate() {
            if e.at_us > m.duration_us {
                errs.push(format!("event {i}: at_us beyond duration"));
            }
            match &e.action {
                Action::Attach { ue, .. } | Action::Detach { ue } => {
                    if !ues.contains(ue.as_str()) {
                        errs.push(format!("event {i}: unknown UE {ue:?}"));
                    }
                }
                Action::CreateSlice { slice } => {
                    check_slice(slice, &mut errs);
                    if !r.enabled {
                        errs.push(format!("event {i}: create_slice needs the RIC"));
                    }
                }
                Action::SetShares { shares } => {
                    for s in shares {
                        if !(s.share > 0.0 && s.share <= 1.0) {
                            errs.push(format!("event {i}: share {} outside (0,1]", s.share));
                        }
                    }
                }
                Action::InjectFault { fault } => match fault {
                    Fault::UeDrop { ue, .. } => {
                        if !ues.contains(ue.as_str()) {
                            errs.push(format!("event {i}: unknown UE {ue:?}"));
                        }
                    }
                    Fault::ThroughputDegradation { ue, factor, .. } => {
                        if !ues.contains(ue.as_str()) {
                            errs.push(format!("event {i}: unknown UE {ue:?}"));
                        }
                        if !(0.0..=1.0).contains(factor) {
                            errs.push(format!("event {i}: factor must be in [0,1]"));
                        }
                    }
                    Fault::E2ControlDrop { node, .. } => {
                        if self.node(node).map(|x| x.kind) != Some(NodeKind::Du) {
                            errs.push(format!("event {i}: {node:?} is not a DU"));
                        }
                    }
                    Fault::NodeDown { node } => {
                        if !node_or_amf(node) {
                            errs.push(format!("event {i}: unknown node {node:?}"));
                        }
                    }
                },
                Action::NodeUp { node } => {
                    if !node_or_amf(node) {
                        errs.push(format!("event {i}: unknown node {node:?}"));
                    }
                }
            }
        }

        for c in &self.criteria {
            let flow_ok = |f: &str| flow_ids.contains(f);
            match c {
                Criterion::FlowThroughput { flow, .. }
                | Criterion::FlowThroughputRange { flow, .. }
                | Criterion::RttMean { flow, .. } => {
                    if !flow_ok(flow) {
                        errs.push(format!("criterion refers to unknown flow {flow:?}"));
                    }
                }
                Criterion::ThroughputRatio { a, b, .. } => {
                    for f in [a, b] {
                        if !flow_ok(f) {
                            errs.push(format!("criterion refers to unknown flow {f:?}"));
                        }
                    }
                }
                Criterion::SharedControlPlane { ues: list } => {
                    for u in list {
                        if !ues.contains(u.as_str()) {
                            errs.push(format!("criterion refers to unknown UE {u:?}"));
                        }
                    }
                }
                Criterion::E2State { node, .. } => {
                    if self.node(node).map(|x| x.kind) != Some(NodeKind::Du) {
                        errs.push(format!("criterion: {node:?} is not a DU"));
                    }
                }
                Criterion::Detection { .. } => {}
            }
        }

        if errs.is_empty() {
            Ok(())
        } else {
            Err(ScenarioError::Invalid(errs.join("; ")))
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn minimal() -> Scenario {
        Scenario::from_json(
            r#"{
              "meta": {"name": "t", "duration_us": 1000000},
              "topology": {"nodes": [
                {"id": "ru1", "kind": "ru"},
                {"id": "du1", "kind": "du", "ru": "ru1"},
                {"id": "cucp1", "kind": "cu_cp"}
              ]},
              "core": {"subscribers": [{"ue": "ue1", "allowed": [{"sst": 1, "sd": 1}]}]},
              "slices": [{"snssai": {"sst": 1, "sd": 1}, "radio_share": 1.0}],
              "traffic": [{"id": "f1", "kind": "udp_cbr", "src": "server", "dst": "ue1", "rate_mbps": 10}],
              "events": [{"at_us": 1000, "action": "attach", "ue": "ue1", "slice": {"sst": 1, "sd": 1}}]
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn minimal_is_valid() {
        minimal().validate().unwrap();
    }

    #[test]
    fn unknown_fields_rejected() {
        let bad = r#"{"meta": {"name": "t", "duration_us": 1, "bogus": 1}, "topology": {"nodes": []}}"#;
        assert!(Scenario::from_json(bad).is_err());
    }

    #[test]
    fn validation_collects_errors() {
        let mut s = minimal();
        s.slices[0].radio_share = 1.5;
        s.traffic[0].dst = "nobody".into();
        let err = s.validate().unwrap_err().to_string();
        assert!(err.contains("radio_share"), "{err}");
        assert!(err.contains("flow f1"), "{err}");
    }

    #[test]
    fn profile_overrides_apply() {
        let mut s = minimal();
        s.topology.nodes[1].profile = "oai-split".into();
        s.topology.nodes[1].e2_quirk = Some(E2Quirk::Normal);
        let p = s.topology.nodes[1].resolved_profile().unwrap();
        assert_eq!(p.e2_quirk, E2Quirk::Normal);
        assert_eq!(p.dl_cap_mbps, Some(10.0));
        s.topology.nodes[1].profile = "nope".into();
        assert!(s.validate().is_err());
    }

    fn arb_fault() -> impl Strategy<Value = Fault> {
        prop_oneof![
            (1u64..10_000_000).prop_map(|d| Fault::UeDrop {
                ue: "ue1".into(),
                duration_us: d
            }),
            (0.0f64..1.0, 1u64..10_000_000).prop_map(|(f, d)| Fault::ThroughputDegradation {
                ue: "ue1".into(),
                factor: f,
                duration_us: d
            }),
            (1u64..10_000_000).prop_map(|d| Fault::E2ControlDrop {
                node: "du1".into(),
                duration_us: d
            }),
            Just(Fault::NodeDown { node: "cucp1".into() }),
        ]
    }

    fn arb_action() -> impl Strategy<Value = Action> {
        let snssai = (any::<u8>(), 0u32..=Snssai::SD_MAX).prop_map(|(a, b)| Snssai::new(a, b));
        prop_oneof![
            snssai.clone().prop_map(|s| Action::Attach {
                ue: "ue1".into(),
                slice: s
            }),
            Just(Action::Detach { ue: "ue1".into() }),
            (snssai.clone(), 0.01f64..1.0).prop_map(|(s, r)| Action::CreateSlice {
                slice: SliceSpec::new(s, r)
            }),
            prop::collection::vec((snssai, 0.01f64..1.0), 0..3).prop_map(|v| Action::SetShares {
                shares: v
                    .into_iter()
                    .map(|(slice, share)| ShareUpdate { slice, share })
                    .collect()
            }),
            arb_fault().prop_map(|fault| Action::InjectFault { fault }),
            Just(Action::NodeUp { node: "cucp1".into() }),
        ]
    }

    proptest! {
        #[test]
        fn json_round_trip(
            seed in any::<u64>(),
            bw in 5.0f64..200.0,
            events in prop::collection::vec((0u64..1_000_000, arb_action()), 0..6),
        ) {
            let mut s = minimal();
            s.meta.seed = seed;
            s.radio.bandwidth_mhz = bw;
            s.events = events
                .into_iter()
                .map(|(at_us, action)| ScriptedEvent { at_us, action })
                .collect();
            let back = Scenario::from_json(&s.to_json()).unwrap();
            prop_assert_eq!(back, s);
        }
    }
}
