//! The simulated deployment: every entity's state plus the event handlers
//! that move it forward.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use thiserror::Error;

use crate::core5g::{Core, CoreError, NetworkFunction, NodeId, SliceId, Snssai, UeId, UserPacket};
use crate::e2::{
    self, encode, AssocState, ControlAction, E2Message, E2Quirk, NodeE2, NodeOutput, RicE2,
    RicEvent, SetupRetry,
};
use crate::radio::{Direction, RadioError, SliceShare, SLOT_US};
use crate::ran::cell::ReportedUe;
use crate::ran::{
    Cell, CellConfig, CellCounters, FlowDemand, NodeKind, NodeState, Ran, RanError, StackProfile,
    UeState, F1_SETUP_TIMEOUT_US,
};
use crate::ric::{
    optimize_shares, AnomalyEngine, OrchStep, SliceManager, SliceStatus, TwinState,
};
use crate::scenario::{Action, Fault, FlowKind, Scenario, ScenarioError, SERVER};
use crate::sim::{Engine, EntityId, Event, Message, RngStream, SimError, SimTime};

pub mod output;

pub use output::{
    AnomalyRow, FailureRecord, FaultRecord, FlowSummary, MetricRow, RunOutput, Stats, Summary,
};
use output::{E2NodeSummary, NodeSummary, SliceSummary, UeSummary};

#[derive(Debug, Error)]
pub enum BuildError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Radio(#[from] RadioError),
    #[error(transparent)]
    Ran(#[from] RanError),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides the scenario seed.
    pub seed: Option<u64>,
    /// Record the event trace and an E2 hex trace.
    pub trace: bool,
}

#[derive(Debug, Clone)]
pub enum Msg {
    Boot,
    F1Request { du: NodeId, attempt: u32 },
    F1Response { attempt: u32 },
    F1Timeout { attempt: u32 },
    E2ToNode { bytes: Vec<u8> },
    E2ToRic { node: NodeId, bytes: Vec<u8> },
    E2SetupTimer { node: NodeId, txn: u32 },
    ReportTick { sub_id: u32 },
    ControlApply { txn: u32, shares: Vec<SliceShare> },
    ConfigShares { shares: Vec<SliceShare> },
    ControlTimeout { txn: u32 },
    Scripted { index: usize },
    AttachStage { stage: u8, snssai: Snssai, slice: SliceId, started: SimTime },
    OrchStep { op: u32 },
    FaultEnd { fault: usize },
    FlowEdge { flow: usize },
    PingSend { flow: usize, seq: u64 },
    PingAtServer { flow: usize, seq: u64, sent_at: SimTime },
    PingReply { flow: usize, seq: u64, sent_at: SimTime },
    MetricsTick,
    OptimizeTick,
}

impl Message for Msg {
    fn kind(&self) -> &'static str {
        match self {
            Msg::Boot => "Boot",
            Msg::F1Request { .. } => "F1SetupRequest",
            Msg::F1Response { .. } => "F1SetupResponse",
            Msg::F1Timeout { .. } => "F1SetupTimeout",
            Msg::E2ToNode { .. } => "E2ToNode",
            Msg::E2ToRic { .. } => "E2ToRic",
            Msg::E2SetupTimer { .. } => "E2SetupTimer",
            Msg::ReportTick { .. } => "ReportTick",
            Msg::ControlApply { .. } => "ControlApply",
            Msg::ConfigShares { .. } => "ConfigShares",
            Msg::ControlTimeout { .. } => "ControlTimeout",
            Msg::Scripted { .. } => "Scripted",
            Msg::AttachStage { .. } => "AttachStage",
            Msg::OrchStep { .. } => "OrchStep",
            Msg::FaultEnd { .. } => "FaultEnd",
            Msg::FlowEdge { .. } => "FlowEdge",
            Msg::PingSend { .. } => "PingSend",
            Msg::PingAtServer { .. } => "PingAtServer",
            Msg::PingReply { .. } => "PingReply",
            Msg::MetricsTick => "MetricsTick",
            Msg::OptimizeTick => "OptimizeTick",
        }
    }
}

struct FlowRt {
    ue: UeId,
    downlink: bool,
    kind: FlowKind,
    start: SimTime,
    stop: SimTime,
    pings_sent: u64,
    pings_lost: u64,
    rtts_ms: Vec<f64>,
}

impl FlowRt {
    fn live(&self, now: SimTime) -> bool {
        self.start <= now && now < self.stop
    }
}

#[derive(Default)]
struct UeRt {
    degradation: f64,
    attaching: bool,
    ever_attached: bool,
    attach_latency_us: Option<u64>,
    signaling_path: Vec<String>,
    data_path: Vec<String>,
}

struct F1Rt {
    attempt: u32,
    started: SimTime,
    failures: u32,
    setup_us: Option<u64>,
}

struct TwinRt {
    state: TwinState,
    engine: AnomalyEngine,
}

struct RicRt {
    e2: RicE2,
    nodes: BTreeMap<NodeId, NodeE2>,
    e2_set: BTreeSet<NodeId>,
    report_base: BTreeMap<(NodeId, u32), CellCounters>,
    /// Shares carried by each outstanding control, applied to the twin on ack.
    control_shares: BTreeMap<u32, (NodeId, Vec<SliceShare>)>,
    twin: Option<TwinRt>,
}

struct Ids {
    ric: EntityId,
    server: EntityId,
    amf: EntityId,
    script: EntityId,
    collector: EntityId,
    cu_cp: NodeId,
    nodes: BTreeMap<String, NodeId>,
    ues: BTreeMap<String, UeId>,
}

pub struct World {
    sc: Scenario,
    seed: u64,
    ids: Ids,
    ran: Ran,
    core: Core,
    sm: SliceManager,
    cells: BTreeMap<NodeId, Cell>,
    ue_rt: BTreeMap<UeId, UeRt>,
    air_rng: BTreeMap<UeId, RngStream>,
    flows: Vec<FlowRt>,
    f1: BTreeMap<NodeId, F1Rt>,
    ric: Option<RicRt>,
    faults: Vec<FaultRecord>,
    failures: Vec<FailureRecord>,
    metrics: Vec<MetricRow>,
    metrics_base: BTreeMap<NodeId, CellCounters>,
    anomalies: Vec<AnomalyRow>,
    events: Vec<String>,
    e2_trace: Option<String>,
}

pub struct Simulation {
    engine: Engine<Msg>,
    world: World,
}

/// Validate, build and run a scenario.
pub fn run_scenario(sc: &Scenario, opts: &RunOptions) -> Result<RunOutput, BuildError> {
    Ok(Simulation::new(sc.clone(), opts)?.run())
}

impl Simulation {
    pub fn new(sc: Scenario, opts: &RunOptions) -> Result<Simulation, BuildError> {
        sc.validate()?;
        let seed = opts.seed.unwrap_or(sc.meta.seed);
        let mut eng: Engine<Msg> = Engine::new();
        if opts.trace {
            eng.enable_trace();
        }
        let ric = eng.register("ric");
        let server = eng.register(SERVER);
        let amf = eng.register(sc.core.amf.clone());
        let script = eng.register("script");
        let collector = eng.register("collector");

        let mut ran = Ran::new();
        let mut nodes = BTreeMap::new();
        for n in &sc.topology.nodes {
            let id = eng.register(n.id.clone());
            let profile = n.resolved_profile().map_err(ScenarioError::Invalid)?;
            let state = match (n.kind, n.offline) {
                (_, true) | (NodeKind::Du, _) => NodeState::Offline,
                _ => NodeState::Operational,
            };
            ran.add_node(id, n.id.clone(), n.kind, profile, state);
            nodes.insert(n.id.clone(), id);
        }
        let cu_cp = nodes[&sc.nodes_of(NodeKind::CuCp).next().expect("validated").id];
        let first_du = nodes[&sc.nodes_of(NodeKind::Du).next().expect("validated").id];
        for n in sc.nodes_of(NodeKind::Du) {
            let ru = n.ru.as_ref().map(|r| nodes[r]);
            let c = n.cu_cp.as_ref().map_or(cu_cp, |c| nodes[c]);
            ran.attach_du(nodes[&n.id], ru, c)?;
        }

        let mut core = Core::new();
        if !sc.core.sliced_amf {
            core.add_amf(amf, true);
        }
        let mut ues = BTreeMap::new();
        let mut ue_rt = BTreeMap::new();
        let mut air_rng = BTreeMap::new();
        for s in &sc.core.subscribers {
            let id = eng.register(s.ue.clone());
            let du = s.du.as_ref().map_or(first_du, |d| nodes[d]);
            ran.add_ue(id, du);
            core.add_subscriber(id, s.allowed.clone());
            ues.insert(s.ue.clone(), id);
            ue_rt.insert(
                id,
                UeRt {
                    degradation: 1.0,
                    ..Default::default()
                },
            );
            air_rng.insert(id, RngStream::new(seed, &format!("air:{}", s.ue)));
        }

        let horizon = SimTime::from_micros(sc.meta.duration_us);
        let flows: Vec<FlowRt> = sc
            .traffic
            .iter()
            .map(|f| {
                let (ue, downlink) = f.ue_end().expect("validated");
                FlowRt {
                    ue: ues[ue],
                    downlink,
                    kind: f.kind,
                    start: SimTime::from_micros(f.start_us),
                    stop: f.stop_us.map_or(horizon + 1, SimTime::from_micros),
                    pings_sent: 0,
                    pings_lost: 0,
                    rtts_ms: Vec::new(),
                }
            })
            .collect();

        let mut cells = BTreeMap::new();
        for (i, n) in sc.nodes_of(NodeKind::Du).enumerate() {
            let du = nodes[&n.id];
            let profile = &ran.node(du).expect("added").profile;
            let mut cfg = CellConfig::new(
                sc.radio.bandwidth_mhz,
                sc.radio.tdd,
                sc.radio.calibration,
            );
            cfg.dl_cap_mbps = profile.dl_cap_mbps;
            cfg.ul_cap_mbps = profile.ul_cap_mbps;
            // The UDP efficiency factor applies when every bulk flow of the
            // cell in that direction is UDP.
            for (dl, slot) in [(true, &mut cfg.udp_dl), (false, &mut cfg.udp_ul)] {
                let kinds: Vec<FlowKind> = flows
                    .iter()
                    .filter(|f| f.downlink == dl && f.kind != FlowKind::Ping)
                    .filter(|f| ran.ue(f.ue).map(|u| u.serving_du) == Some(du))
                    .map(|f| f.kind)
                    .collect();
                *slot = !kinds.is_empty() && kinds.iter().all(|k| *k == FlowKind::UdpCbr);
            }
            cells.insert(du, Cell::new(du, i as u16 + 1, cfg));
        }

        let ric_rt = sc.ric.enabled.then(|| {
            let e2_set: BTreeSet<NodeId> = if sc.ric.e2_nodes.is_empty() {
                sc.nodes_of(NodeKind::Du).map(|n| nodes[&n.id]).collect()
            } else {
                sc.ric.e2_nodes.iter().map(|n| nodes[n]).collect()
            };
            let node_agents = e2_set
                .iter()
                .map(|&id| {
                    let quirk = ran.node(id).map_or(E2Quirk::Normal, |n| n.profile.e2_quirk);
                    (id, NodeE2::new(id.0, quirk))
                })
                .collect();
            RicRt {
                e2: RicE2::new(sc.ric.retry),
                nodes: node_agents,
                e2_set,
                report_base: BTreeMap::new(),
                control_shares: BTreeMap::new(),
                twin: sc.ric.twin.enabled.then(|| TwinRt {
                    state: TwinState::new(sc.ric.twin.config, sc.ric.report_period_us),
                    engine: AnomalyEngine::new(sc.ric.twin.detectors),
                }),
            }
        });

        eng.schedule(SimTime::ZERO, script, Msg::Boot)?;
        let world = World {
            seed,
            ids: Ids {
                ric,
                server,
                amf,
                script,
                collector,
                cu_cp,
                nodes,
                ues,
            },
            ran,
            core,
            sm: SliceManager::new(),
            cells,
            ue_rt,
            air_rng,
            flows,
            f1: BTreeMap::new(),
            ric: ric_rt,
            faults: Vec::new(),
            failures: Vec::new(),
            metrics: Vec::new(),
            metrics_base: BTreeMap::new(),
            anomalies: Vec::new(),
            events: Vec::new(),
            e2_trace: opts.trace.then(String::new),
            sc,
        };
        Ok(Simulation { engine: eng, world })
    }

    pub fn run(mut self) -> RunOutput {
        let end = SimTime::from_micros(self.world.sc.meta.duration_us);
        let world = &mut self.world;
        self.engine.run_until(end, |eng, ev| world.handle(eng, ev));
        for c in self.world.cells.values_mut() {
            c.advance(end);
        }
        self.world.finish(&self.engine)
    }
}

fn at(eng: &mut Engine<Msg>, delay_us: u64, target: EntityId, msg: Msg) {
    eng.schedule_in(delay_us, target, msg)
        .expect("targets are registered entities");
}

fn ue_scope(ue: UeId) -> u16 {
    ue.0 as u16
}

impl World {
    fn name(&self, eng: &Engine<Msg>, id: EntityId) -> String {
        eng.name(id).to_owned()
    }

    fn log(&mut self, now: SimTime, who: &str, text: impl AsRef<str>) {
        self.events.push(format!("{} {} {}", now.as_micros(), who, text.as_ref()));
    }

    fn fail(&mut self, now: SimTime, subject: &str, error: String) {
        self.log(now, subject, format!("error {error}"));
        self.failures.push(FailureRecord {
            at_us: now.as_micros(),
            subject: subject.to_owned(),
            error,
        });
    }

    fn proc(&self, id: NodeId) -> u64 {
        self.ran.node(id).map_or(0, |n| n.profile.one_way_proc_delay_us)
    }

    fn links(&self) -> crate::scenario::LinkSpec {
        self.sc.topology.links
    }

    fn air_delay(&mut self, ue: UeId) -> u64 {
        let base = self.sc.radio.alignment_us as i64;
        let j = self.sc.radio.jitter_us as i64;
        let jitter = if j == 0 {
            0
        } else {
            self.air_rng
                .get_mut(&ue)
                .expect("every UE has a stream")
                .gen_range(-j..=j)
        };
        (base + jitter).max(0) as u64
    }

    /// UE to AMF, one way, without jitter.
    fn control_one_way(&self, ue: UeId) -> u64 {
        let du = self.ran.ue(ue).expect("known UE").serving_du;
        let dun = self.ran.node(du).expect("known DU");
        let l = self.links();
        self.sc.radio.alignment_us
            + dun.ru.map_or(0, |r| self.proc(r) + l.fronthaul_us)
            + self.proc(du)
            + l.midhaul_us
            + dun.cu_cp.map_or(0, |c| self.proc(c))
            + l.midhaul_us
            + self.sc.core.proc_delay_us
    }

    /// Wired part of the user-plane path between the air interface and the
    /// server, one way.
    fn wired_one_way(&self, ue: UeId) -> Option<u64> {
        let ctx = self.ran.ue(ue)?;
        let cu_up = ctx.serving_cu_up?;
        let dun = self.ran.node(ctx.serving_du)?;
        let l = self.links();
        Some(
            dun.ru.map_or(0, |r| self.proc(r) + l.fronthaul_us)
                + self.proc(ctx.serving_du)
                + l.midhaul_us
                + self.proc(cu_up)
                + self.sc.core.proc_delay_us
                + l.server_us,
        )
    }

    fn ue_has_service(&self, ue: UeId) -> bool {
        let Some(ctx) = self.ran.ue(ue) else { return false };
        if ctx.state != UeState::SessionActive || !ctx.radio_up {
            return false;
        }
        let Some(du) = self.ran.node(ctx.serving_du) else { return false };
        let ru_up = du
            .ru
            .is_none_or(|r| self.ran.node(r).is_some_and(|n| n.state == NodeState::Operational));
        du.state == NodeState::Operational && ru_up
    }

    /// Recompute the scheduler input of one cell.
    fn refresh_cell(&mut self, du: NodeId, now: SimTime) {
        let mut demands = Vec::new();
        for (i, f) in self.flows.iter().enumerate() {
            if f.kind == FlowKind::Ping || !f.live(now) || !self.ue_has_service(f.ue) {
                continue;
            }
            let ctx = self.ran.ue(f.ue).expect("known UE");
            if ctx.serving_du != du {
                continue;
            }
            let Some((slice, _)) = ctx.slice else { continue };
            let demand = match f.kind {
                FlowKind::UdpCbr => self.sc.traffic[i].rate_mbps.unwrap_or(0.0),
                _ => f64::INFINITY,
            };
            demands.push(FlowDemand {
                flow: i as u32,
                ue: f.ue,
                slice,
                direction: if f.downlink { Direction::Dl } else { Direction::Ul },
                demand_mbps: demand,
                rate_factor: self.ue_rt[&f.ue].degradation,
            });
        }
        if let Some(c) = self.cells.get_mut(&du) {
            c.set_flows(now, demands).expect("shares were validated on entry");
        }
    }

    fn refresh_ue(&mut self, ue: UeId, now: SimTime) {
        if let Some(du) = self.ran.ue(ue).map(|c| c.serving_du) {
            self.refresh_cell(du, now);
        }
    }

    fn handle(&mut self, eng: &mut Engine<Msg>, ev: Event<Msg>) {
        let now = ev.fire_at;
        let target = ev.target;
        match ev.payload {
            Msg::Boot => self.boot(eng, now),
            Msg::F1Request { du, attempt } => {
                if self.ran.f1_accepts(target) {
                    let d = self.proc(target) + self.links().midhaul_us;
                    at(eng, d, du, Msg::F1Response { attempt });
                } else {
                    let who = self.name(eng, target);
                    self.log(now, &who, "F1 setup request unanswered: CU-CP offline");
                }
            }
            Msg::F1Response { attempt } => self.f1_response(eng, now, target, attempt),
            Msg::F1Timeout { attempt } => {
                let current = self.f1.get(&target).map(|f| f.attempt);
                let connecting = self.ran.node(target).map(|n| n.state) == Some(NodeState::Connecting);
                if current == Some(attempt) && connecting {
                    let who = self.name(eng, target);
                    self.fail(
                        now,
                        &who,
                        format!("F1SetupFailure: no response within {} ms", F1_SETUP_TIMEOUT_US / 1000),
                    );
                    if let Some(f) = self.f1.get_mut(&target) {
                        f.failures += 1;
                    }
                    self.start_f1(eng, now, target);
                }
            }
            Msg::E2ToNode { bytes } => self.e2_at_node(eng, now, target, &bytes),
            Msg::E2ToRic { node, bytes } => self.e2_at_ric(eng, now, node, &bytes),
            Msg::E2SetupTimer { node, txn } => self.e2_setup_timer(eng, now, node, txn),
            Msg::ReportTick { sub_id } => self.report_tick(eng, now, target, sub_id),
            Msg::ControlApply { txn, shares } => {
                let who = self.name(eng, target);
                let reply = match self.cells.get_mut(&target).map(|c| c.set_shares(now, shares.clone())) {
                    Some(Ok(())) => {
                        self.log(now, &who, format!("slice shares applied {}", fmt_shares(&shares)));
                        self.ric.as_ref().and_then(|r| r.nodes.get(&target)).map(|n| n.control_ack(txn, now.as_micros()))
                    }
                    _ => Some(e2::endpoint::failure(txn, e2::Cause::UnsupportedAction)),
                };
                if let Some(msg) = reply {
                    self.send_to_ric(eng, now, target, &msg);
                }
            }
            Msg::ConfigShares { shares } => {
                if let Some(c) = self.cells.get_mut(&target) {
                    if c.set_shares(now, shares.clone()).is_ok() {
                        let who = self.name(eng, target);
                        self.log(now, &who, format!("slice shares configured {}", fmt_shares(&shares)));
                    }
                }
            }
            Msg::ControlTimeout { txn } => self.control_timeout(eng, now, txn),
            Msg::Scripted { index } => self.scripted(eng, now, index),
            Msg::AttachStage {
                stage,
                snssai,
                slice,
                started,
            } => self.attach_stage(eng, now, target, stage, snssai, slice, started),
            Msg::OrchStep { op } => self.orch_step(eng, now, op),
            Msg::FaultEnd { fault } => self.fault_end(eng, now, fault),
            Msg::FlowEdge { flow } => {
                let ue = self.flows[flow].ue;
                self.refresh_ue(ue, now);
            }
            Msg::PingSend { flow, seq } => self.ping_send(eng, now, flow, seq),
            Msg::PingAtServer { flow, seq, sent_at } => {
                let f = &self.flows[flow];
                let ue = f.ue;
                if !self.ue_has_service(ue) {
                    self.flows[flow].pings_lost += 1;
                    return;
                }
                let wired = self.wired_one_way(ue).unwrap_or(0);
                let air = self.air_delay(ue);
                at(eng, wired + air, ue, Msg::PingReply { flow, seq, sent_at });
            }
            Msg::PingReply { flow, sent_at, .. } => {
                let ue = self.flows[flow].ue;
                if !self.ue_has_service(ue) || !self.forward_ping(ue, now) {
                    self.flows[flow].pings_lost += 1;
                    return;
                }
                let rtt_ms = (now - sent_at) as f64 / 1000.0;
                self.flows[flow].rtts_ms.push(rtt_ms);
                self.metrics.push(MetricRow {
                    time_us: now.as_micros(),
                    entity: format!("flow:{}", self.sc.traffic[flow].id),
                    metric: "rtt_ms".into(),
                    value: rtt_ms,
                });
            }
            Msg::MetricsTick => self.metrics_tick(eng, now),
            Msg::OptimizeTick => self.optimize_tick(eng, now),
        }
    }

    fn boot(&mut self, eng: &mut Engine<Msg>, now: SimTime) {
        self.log(now, "script", format!("boot scenario={} seed={}", self.sc.meta.name, self.seed));
        let specs = self.sc.slices.clone();
        for spec in specs {
            self.provision_static(eng, now, spec);
        }
        let shares = self.sm.shares(None);
        for c in self.cells.values_mut() {
            c.set_shares(now, shares.clone()).expect("boot shares validated");
        }
        let dus: Vec<(NodeId, bool)> = self
            .sc
            .nodes_of(NodeKind::Du)
            .map(|n| (self.ids.nodes[&n.id], n.offline))
            .collect();
        for (du, offline) in dus {
            if !offline {
                self.start_f1(eng, now, du);
            }
        }
        for (i, f) in self.flows.iter().enumerate() {
            let ue = f.ue;
            if f.kind == FlowKind::Ping {
                at(eng, f.start.as_micros(), ue, Msg::PingSend { flow: i, seq: 0 });
            } else {
                at(eng, f.start.as_micros(), ue, Msg::FlowEdge { flow: i });
                if f.stop.as_micros() <= self.sc.meta.duration_us {
                    at(eng, f.stop.as_micros(), ue, Msg::FlowEdge { flow: i });
                }
            }
        }
        for (i, e) in self.sc.events.iter().enumerate() {
            at(eng, e.at_us, self.ids.script, Msg::Scripted { index: i });
        }
        at(eng, self.sc.meta.metrics_interval_us, self.ids.collector, Msg::MetricsTick);
        if let Some(p) = self.sc.ric.twin.optimize_interval_us.filter(|_| self.twin_enabled()) {
            at(eng, p, self.ids.ric, Msg::OptimizeTick);
        }
    }

    /// The AMF a registration for `snssai` goes to. With a shared AMF it
    /// is always the same one; the slice check then happens at session
    /// setup.
    fn amf_for(&self, snssai: Snssai) -> Option<NodeId> {
        if self.sc.core.sliced_amf {
            self.core.amf_for(snssai)
        } else {
            Some(self.ids.amf)
        }
    }

    fn twin_enabled(&self) -> bool {
        self.ric.as_ref().is_some_and(|r| r.twin.is_some())
    }

    fn alloc_entity(eng: &mut Engine<Msg>, name: &str) -> EntityId {
        eng.lookup(name).unwrap_or_else(|| eng.register(name))
    }

    /// Boot-time slice: every step runs at once, without E2.
    fn provision_static(&mut self, eng: &mut Engine<Msg>, now: SimTime, spec: crate::core5g::SliceSpec) {
        let snssai = spec.snssai;
        let (op, _) = match self.sm.admit(spec, now) {
            Ok(x) => x,
            Err(e) => {
                self.fail(now, "slice-manager", format!("slice {snssai}: {e}"));
                return;
            }
        };
        while let Some(step) = self.sm.op(op).and_then(|o| o.step()) {
            let res = match step {
                OrchStep::SetSliceShares => Ok(()),
                _ => self.execute_deploy(eng, now, op, step),
            };
            if let Err(reason) = res {
                self.abort(eng, now, op, reason);
                return;
            }
            self.sm.complete_step(op, now);
        }
        self.log(now, "slice-manager", format!("slice {snssai} provisioned at boot"));
    }

    /// Run one deployment step. Errors carry the reason.
    fn execute_deploy(&mut self, eng: &mut Engine<Msg>, now: SimTime, op: u32, step: OrchStep) -> Result<(), String> {
        let snssai = self.sm.op(op).ok_or("unknown orchestration")?.snssai;
        let rec = self.sm.slice(snssai).ok_or("unknown slice")?.clone();
        let sid = rec.id;
        let dedicated = |f| rec.spec.dedicated_functions.contains(&f);
        match step {
            OrchStep::DeployCuUp => {
                self.ran.register_slice(sid);
                let cu_cp = self.ids.cu_cp;
                let profile_name = self.ran.node(cu_cp).map_or("vendor".to_owned(), |n| n.profile.name.clone());
                let profile = StackProfile::preset(&profile_name, NodeKind::CuUp)
                    .unwrap_or_else(|| StackProfile::preset("vendor", NodeKind::CuUp).expect("preset"));
                let shared = (!dedicated(NetworkFunction::CuUp))
                    .then(|| self.ran.nodes().find(|n| n.kind == NodeKind::CuUp).map(|n| n.id))
                    .flatten();
                let id = match shared {
                    Some(id) => self.ran.share_cu_up(id, sid).map(|_| id),
                    None => self.ran.deploy_cu_up(cu_cp, sid, profile, |name| Self::alloc_entity(eng, name)),
                }
                .map_err(|e| e.to_string())?;
                self.sm.slice_mut(snssai).expect("exists").cu_up = Some(id);
            }
            OrchStep::DeploySmf => {
                let name = if dedicated(NetworkFunction::Smf) {
                    format!("smf-{}", sid.0)
                } else {
                    "smf-shared".to_owned()
                };
                let id = Self::alloc_entity(eng, &name);
                self.core.deploy_smf(id, snssai).map_err(|e| e.to_string())?;
                self.sm.slice_mut(snssai).expect("exists").smf = Some(id);
            }
            OrchStep::DeployUpf => {
                let id = Self::alloc_entity(eng, &format!("upf-{}", sid.0));
                self.core
                    .deploy_upf(id, snssai, self.sc.core.proc_delay_us)
                    .map_err(|e| e.to_string())?;
                self.sm.slice_mut(snssai).expect("exists").upf = Some(id);
            }
            OrchStep::RegisterAmf => {
                let amf = if self.sc.core.sliced_amf {
                    let id = Self::alloc_entity(eng, &format!("{}-{}", self.sc.core.amf, sid.0));
                    self.core.add_amf(id, true);
                    id
                } else {
                    self.ids.amf
                };
                self.core.register_slice(amf, snssai).map_err(|e| e.to_string())?;
            }
            OrchStep::SetSliceShares => unreachable!("handled by the caller"),
        }
        let _ = now;
        Ok(())
    }

    fn start_f1(&mut self, eng: &mut Engine<Msg>, now: SimTime, du: NodeId) {
        let cu_cp = match self.ran.f1_begin(du) {
            Ok(c) => c,
            Err(e) => {
                let who = self.name(eng, du);
                self.fail(now, &who, e.to_string());
                return;
            }
        };
        let f = self.f1.entry(du).or_insert(F1Rt {
            attempt: 0,
            started: now,
            failures: 0,
            setup_us: None,
        });
        f.attempt += 1;
        f.started = now;
        let attempt = f.attempt;
        let d = self.proc(du) + self.links().midhaul_us;
        at(eng, d, cu_cp, Msg::F1Request { du, attempt });
        at(eng, F1_SETUP_TIMEOUT_US, du, Msg::F1Timeout { attempt });
        self.refresh_cell(du, now);
    }

    fn f1_response(&mut self, eng: &mut Engine<Msg>, now: SimTime, du: NodeId, attempt: u32) {
        if self.f1.get(&du).map(|f| f.attempt) != Some(attempt) {
            return;
        }
        if self.ran.f1_complete(du, now).is_err() {
            return;
        }
        let f = self.f1.get_mut(&du).expect("started");
        let took = now - f.started;
        f.setup_us = Some(took);
        let who = self.name(eng, du);
        self.log(now, &who, format!("F1 setup complete in {took} us"));
        self.refresh_cell(du, now);
        let wants_e2 = self.ric.as_ref().is_some_and(|r| {
            r.e2_set.contains(&du)
                && r.e2.association(du).is_none_or(|a| a.state == AssocState::Idle)
        });
        if wants_e2 {
            let ric_id = self.ids.ric.0;
            let rt = self.ric.as_mut().expect("checked");
            let (txn, msg) = rt.e2.start_setup(du, ric_id);
            let retry = rt.e2.policy.interval_us;
            self.send_to_node(eng, now, du, &msg);
            at(eng, retry, self.ids.ric, Msg::E2SetupTimer { node: du, txn });
        }
    }

    fn trace_e2(&mut self, eng: &Engine<Msg>, now: SimTime, from: EntityId, to: EntityId, msg: &E2Message, bytes: &[u8]) {
        if let Some(t) = self.e2_trace.as_mut() {
            let line = format!(
                "{} {} -> {} {} {}\n",
                now.as_micros(),
                eng.name(from),
                eng.name(to),
                msg.msg_type.name(),
                hex::encode(bytes)
            );
            t.push_str(&line);
        }
    }

    fn send_to_node(&mut self, eng: &mut Engine<Msg>, now: SimTime, node: NodeId, msg: &E2Message) {
        let bytes = encode(msg).expect("RIC messages fit the wire format");
        self.trace_e2(eng, now, self.ids.ric, node, msg, &bytes);
        at(eng, self.links().e2_us, node, Msg::E2ToNode { bytes });
    }

    fn send_to_ric(&mut self, eng: &mut Engine<Msg>, now: SimTime, node: NodeId, msg: &E2Message) {
        let bytes = encode(msg).expect("node messages fit the wire format");
        self.trace_e2(eng, now, node, self.ids.ric, msg, &bytes);
        at(eng, self.links().e2_us, self.ids.ric, Msg::E2ToRic { node, bytes });
    }

    fn e2_at_node(&mut self, eng: &mut Engine<Msg>, now: SimTime, node: NodeId, bytes: &[u8]) {
        let Some(agent) = self.ric.as_mut().and_then(|r| r.nodes.get_mut(&node)) else {
            return;
        };
        let out = agent.handle(bytes);
        let who = self.name(eng, node);
        match out {
            NodeOutput::Reply(m) => self.send_to_ric(eng, now, node, &m),
            NodeOutput::StartReporting {
                reply,
                sub_id,
                period_us,
            } => {
                self.send_to_ric(eng, now, node, &reply);
                if let Some(c) = self.cells.get_mut(&node) {
                    c.advance(now);
                    let base = c.counters().clone();
                    self.ric
                        .as_mut()
                        .expect("present")
                        .report_base
                        .insert((node, sub_id), base);
                }
                at(eng, period_us, node, Msg::ReportTick { sub_id });
            }
            NodeOutput::Apply { txn, action } => {
                let ControlAction::SetSliceShares(shares) = action;
                let boundary = (now + 1).ceil_to(SLOT_US);
                at(eng, boundary - now, node, Msg::ControlApply { txn, shares });
            }
            NodeOutput::Silent(reason) => self.log(now, &who, format!("e2 message dropped: {reason}")),
        }
    }

    fn e2_setup_timer(&mut self, eng: &mut Engine<Msg>, now: SimTime, node: NodeId, txn: u32) {
        let ric_id = self.ids.ric.0;
        let Some(rt) = self.ric.as_mut() else { return };
        let (res, new_txn) = rt.e2.setup_retry(node, txn, ric_id);
        let interval = rt.e2.policy.interval_us;
        let who = self.name(eng, node);
        match res {
            SetupRetry::Resend(msg) => {
                self.log(now, "ric", format!("e2 setup retry node={who}"));
                self.send_to_node(eng, now, node, &msg);
                let txn = new_txn.expect("resend has a txn");
                at(eng, interval, self.ids.ric, Msg::E2SetupTimer { node, txn });
            }
            SetupRetry::TimedOut => {
                self.fail(now, "ric", format!("e2 SetupTimeout node={who}"));
            }
            SetupRetry::Stale => {}
        }
    }

    fn e2_at_ric(&mut self, eng: &mut Engine<Msg>, now: SimTime, node: NodeId, bytes: &[u8]) {
        let Some(rt) = self.ric.as_mut() else { return };
        let ev = rt.e2.on_bytes(node, bytes);
        let who = self.name(eng, node);
        match ev {
            RicEvent::Established { functions, .. } => {
                self.log(now, "ric", format!("e2 established node={who} functions={functions:?}"));
                self.configure_twin(node);
                self.subscribe(eng, now, node);
            }
            RicEvent::Degraded { .. } => {
                self.log(now, "ric", format!("e2 degraded node={who}: setup response without RAN functions"));
                self.subscribe(eng, now, node);
            }
            RicEvent::SubscriptionActive(s) => {
                self.log(
                    now,
                    "ric",
                    format!("e2 subscription active node={who} sub={} period_us={}", s.sub_id, s.report_period_us),
                );
            }
            RicEvent::SubscriptionFailed { cause, .. } => {
                self.fail(now, "ric", format!("e2 subscription failed node={who} cause={cause}"));
            }
            RicEvent::Indication {
                measured_at, entries, ..
            } => {
                let t = measured_at.map_or(now, SimTime::from_micros);
                self.on_indication(eng, node, t, &entries);
            }
            RicEvent::ControlAcked { txn, applied_at, .. } => {
                let rt = self.ric.as_mut().expect("present");
                if let Some((n, shares)) = rt.control_shares.remove(&txn) {
                    if let Some(tw) = rt.twin.as_mut() {
                        tw.state.set_shares(n, shares);
                    }
                }
                self.log(
                    now,
                    "ric",
                    format!("e2 control acked node={who} txn={txn} applied_at_us={}", applied_at.unwrap_or(0)),
                );
                if let Some(op) = self.sm.op_for_txn(txn) {
                    let o = self.sm.op_mut(op).expect("found");
                    o.awaiting.remove(&txn);
                    o.acked.insert(node);
                    if o.awaiting.is_empty() {
                        self.advance_op(eng, now, op);
                    }
                }
            }
            RicEvent::ControlFailed { txn, cause, .. } => {
                self.ric.as_mut().expect("present").control_shares.remove(&txn);
                let reason = format!("control rejected by {who}: {cause}");
                match self.sm.op_for_txn(txn) {
                    Some(op) => self.abort(eng, now, op, reason),
                    None => self.fail(now, "ric", reason),
                }
            }
            RicEvent::Unmatched { txn, msg_type, .. } => {
                self.log(now, "ric", format!("unmatched {} txn={txn} from {who}", msg_type.name()));
            }
            RicEvent::Malformed { error, .. } => {
                self.log(now, "ric", format!("malformed e2 message from {who}: {error}"));
            }
        }
    }

    fn configure_twin(&mut self, node: NodeId) {
        let Some(cell) = self.cells.get(&node) else { return };
        let (cfg, shares) = (cell.config.clone(), cell.shares().to_vec());
        let mins = self.sm.min_shares();
        if let Some(tw) = self.ric.as_mut().and_then(|r| r.twin.as_mut()) {
            tw.state.configure_cell(node, cfg, shares);
            tw.state.min_shares = mins;
        }
    }

    fn subscribe(&mut self, eng: &mut Engine<Msg>, now: SimTime, node: NodeId) {
        let period = self.sc.ric.report_period_us;
        let rt = self.ric.as_mut().expect("present");
        match rt.e2.subscribe(node, e2::ies::FN_KPI_REPORT, period) {
            Ok(msg) => self.send_to_node(eng, now, node, &msg),
            Err(cause) => {
                let who = self.name(eng, node);
                self.fail(now, "ric", format!("e2 subscription failed node={who} cause={cause}"));
            }
        }
    }

    fn report_tick(&mut self, eng: &mut Engine<Msg>, now: SimTime, du: NodeId, sub_id: u32) {
        let Some(rt) = self.ric.as_ref() else { return };
        let Some(agent) = rt.nodes.get(&du) else { return };
        let Some(sub) = agent.subscriptions.get(&sub_id) else {
            return;
        };
        let period = sub.period_us;
        at(eng, period, du, Msg::ReportTick { sub_id });
        let operational = self.ran.node(du).is_some_and(|n| n.state == NodeState::Operational);
        let reported: Vec<ReportedUe> = self
            .ran
            .ues_on(du)
            .filter(|u| self.ue_rt[&u.ue_id].ever_attached)
            .map(|u| ReportedUe {
                ue: u.ue_id,
                scope_id: ue_scope(u.ue_id),
                slice: u.slice.map_or(SliceId(0), |s| s.0),
                connected: u.state == UeState::SessionActive && u.radio_up,
            })
            .collect();
        let Some(cell) = self.cells.get_mut(&du) else { return };
        cell.advance(now);
        let rt = self.ric.as_mut().expect("present");
        let base = rt
            .report_base
            .insert((du, sub_id), cell.counters().clone())
            .unwrap_or_default();
        if !operational {
            return;
        }
        let entries = cell.kpis(&base, period, &reported);
        let msg = rt.nodes[&du].indication(sub_id, now.as_micros(), &entries);
        self.send_to_ric(eng, now, du, &msg);
    }

    fn on_indication(&mut self, eng: &mut Engine<Msg>, node: NodeId, t: SimTime, entries: &[e2::KpiEntry]) {
        let Some(tw) = self.ric.as_mut().and_then(|r| r.twin.as_mut()) else {
            return;
        };
        let keys = tw.state.ingest(node, t, entries);
        let found = tw.engine.detect_anomalies(&tw.state);
        let mut rows = Vec::new();
        for key in keys {
            let Some(o) = tw.state.ue(key).and_then(|u| u.latest()) else {
                continue;
            };
            let ent = format!("twin:{}", eng.name(EntityId(key.1 as u32)));
            let mut push = |m: &str, v: f64| {
                rows.push(MetricRow {
                    time_us: o.at.as_micros(),
                    entity: ent.clone(),
                    metric: m.into(),
                    value: v,
                })
            };
            push("dl_mbps", o.dl_mbps);
            push("connected", if o.connected { 1.0 } else { 0.0 });
            if let Some(p) = o.predicted_dl {
                push("dl_pred_mbps", p);
            }
        }
        self.metrics.extend(rows);
        for a in found {
            let ue = eng.name(EntityId(a.ue.1 as u32)).to_owned();
            self.log(
                a.detected_at,
                "twin",
                format!("anomaly {} ue={ue} score={:.3}", a.kind, a.score),
            );
            self.anomalies.push(AnomalyRow {
                time_us: a.detected_at.as_micros(),
                ue,
                kind: a.kind.name().into(),
                score: a.score,
            });
        }
    }

    fn control_timeout(&mut self, eng: &mut Engine<Msg>, now: SimTime, txn: u32) {
        let Some(rt) = self.ric.as_mut() else { return };
        let Some(node) = rt.e2.control_timeout(txn) else {
            return;
        };
        rt.control_shares.remove(&txn);
        let who = self.name(eng, node);
        let reason = format!(
            "no ControlAck from {who} within {} ms",
            self.sc.ric.control_timeout_us / 1000
        );
        match self.sm.op_for_txn(txn) {
            Some(op) => self.abort(eng, now, op, reason),
            None => self.fail(now, "ric", reason),
        }
    }

    /// Push shares to every DU: over E2 where an association allows it,
    /// by configuration otherwise. Returns the control transactions sent.
    fn push_shares(&mut self, eng: &mut Engine<Msg>, now: SimTime, shares: &[SliceShare]) -> BTreeSet<u32> {
        let mut txns = BTreeSet::new();
        let dus: Vec<NodeId> = self.cells.keys().copied().collect();
        let action = ControlAction::SetSliceShares(shares.to_vec());
        let timeout = self.sc.ric.control_timeout_us;
        for du in dus {
            let via_e2 = self.ric.as_mut().and_then(|rt| {
                if !rt.e2_set.contains(&du) {
                    return None;
                }
                let established = rt.e2.association(du).is_some_and(|a| a.state == AssocState::Established);
                if !established {
                    return None;
                }
                rt.e2.control(du, &action).ok()
            });
            match via_e2 {
                Some((txn, msg)) => {
                    self.ric
                        .as_mut()
                        .expect("present")
                        .control_shares
                        .insert(txn, (du, shares.to_vec()));
                    self.send_to_node(eng, now, du, &msg);
                    at(eng, timeout, self.ids.ric, Msg::ControlTimeout { txn });
                    txns.insert(txn);
                }
                None => {
                    let boundary = (now + 1).ceil_to(SLOT_US);
                    at(eng, boundary - now, du, Msg::ConfigShares { shares: shares.to_vec() });
                    if let Some(tw) = self.ric.as_mut().and_then(|r| r.twin.as_mut()) {
                        tw.state.set_shares(du, shares.to_vec());
                    }
                }
            }
        }
        txns
    }

    fn orch_step(&mut self, eng: &mut Engine<Msg>, now: SimTime, op: u32) {
        let Some(step) = self.sm.op(op).and_then(|o| o.step()) else {
            return;
        };
        let snssai = self.sm.op(op).expect("exists").snssai;
        if step == OrchStep::SetSliceShares {
            let shares = self.sm.shares(Some(snssai));
            let txns = self.push_shares(eng, now, &shares);
            self.log(now, "slice-manager", format!("slice {snssai}: SetSliceShares {}", fmt_shares(&shares)));
            if txns.is_empty() {
                self.abort(eng, now, op, "no E2 node accepts slice control".into());
                return;
            }
            self.sm.op_mut(op).expect("exists").awaiting = txns;
            return;
        }
        match self.execute_deploy(eng, now, op, step) {
            Ok(()) => {
                self.log(now, "slice-manager", format!("slice {snssai}: {step} done"));
                self.advance_op(eng, now, op);
            }
            Err(reason) => self.abort(eng, now, op, reason),
        }
    }

    fn advance_op(&mut self, eng: &mut Engine<Msg>, now: SimTime, op: u32) {
        let snssai = self.sm.op(op).expect("exists").snssai;
        match self.sm.complete_step(op, now) {
            Some(next) => {
                let delay = match next {
                    OrchStep::DeploySmf | OrchStep::DeployUpf => self.sc.ric.deploy_step_us,
                    _ => 0,
                };
                at(eng, delay, self.ids.ric, Msg::OrchStep { op });
            }
            None => {
                let took = self
                    .sm
                    .slice(snssai)
                    .map_or(0, |r| now - r.requested_at);
                self.log(now, "slice-manager", format!("slice {snssai} ready after {took} us"));
                let mins = self.sm.min_shares();
                if let Some(tw) = self.ric.as_mut().and_then(|r| r.twin.as_mut()) {
                    tw.state.min_shares = mins;
                }
            }
        }
    }

    /// Fail an orchestration and undo its completed steps in reverse.
    fn abort(&mut self, eng: &mut Engine<Msg>, now: SimTime, op: u32, reason: String) {
        let snapshot = self.sm.op(op).and_then(|o| self.sm.slice(o.snssai)).cloned();
        let Some((o, err)) = self.sm.fail(op, reason) else {
            return;
        };
        let mut undone = Vec::new();
        for step in o.completed.iter().rev() {
            match step {
                OrchStep::RegisterAmf => {
                    if let Some(amf) = self.core.amf_for(o.snssai).filter(|_| self.sc.core.sliced_amf) {
                        self.core.remove_amf(amf);
                    }
                    self.core.deregister_slice(o.snssai);
                }
                OrchStep::DeployUpf | OrchStep::DeploySmf => {
                    self.core.remove_slice_functions(o.snssai);
                }
                OrchStep::DeployCuUp => {
                    if let Some(r) = &snapshot {
                        self.ran.remove_cu_up(r.id);
                    }
                }
                OrchStep::SetSliceShares => {}
            }
            undone.push(step.name());
        }
        if let Some(r) = &snapshot {
            self.ran.deregister_slice(r.id);
        }
        self.core.deregister_slice(o.snssai);
        if !o.acked.is_empty() {
            let shares = self.sm.shares(None);
            self.push_shares(eng, now, &shares);
        }
        self.fail(
            now,
            "slice-manager",
            format!("slice {}: {err}; rolled back [{}]", o.snssai, undone.join(", ")),
        );
    }

    fn scripted(&mut self, eng: &mut Engine<Msg>, now: SimTime, index: usize) {
        let action = self.sc.events[index].action.clone();
        match action {
            Action::Attach { ue, slice } => {
                let id = self.ids.ues[&ue];
                self.attach(eng, now, id, &ue, slice);
            }
            Action::Detach { ue } => {
                let id = self.ids.ues[&ue];
                self.core.deregister_ue(id);
                let _ = self.ran.set_ue_state(id, UeState::Idle);
                let du = self.ran.ue(id).map(|c| c.serving_du);
                if let (Some(du), Some(tw)) = (du, self.ric.as_mut().and_then(|r| r.twin.as_mut())) {
                    tw.state.release_ue((du, ue_scope(id)));
                }
                self.refresh_ue(id, now);
                self.log(now, &ue, "detached");
            }
            Action::CreateSlice { slice } => {
                let snssai = slice.snssai;
                match self.sm.admit(slice, now) {
                    Ok((op, id)) => {
                        self.log(now, "slice-manager", format!("slice {snssai} admitted as {id}"));
                        at(eng, self.sc.ric.deploy_step_us, self.ids.ric, Msg::OrchStep { op });
                    }
                    Err(e) => self.fail(now, "slice-manager", format!("slice {snssai}: {e}")),
                }
            }
            Action::SetShares { shares } => {
                let updates: Vec<(Snssai, f64)> = shares.iter().map(|s| (s.slice, s.share)).collect();
                match self.sm.update_shares(&updates) {
                    Ok(v) => {
                        self.log(now, "slice-manager", format!("set shares {}", fmt_shares(&v)));
                        self.push_shares(eng, now, &v);
                    }
                    Err(e) => self.fail(now, "slice-manager", format!("set_shares: {e}")),
                }
            }
            Action::InjectFault { fault } => self.inject(eng, now, fault),
            Action::NodeUp { node } => self.node_up(eng, now, &node),
        }
    }

    fn attach(&mut self, eng: &mut Engine<Msg>, now: SimTime, ue: UeId, name: &str, snssai: Snssai) {
        let busy = self.ue_rt[&ue].attaching
            || self.ran.ue(ue).is_some_and(|c| c.state != UeState::Idle);
        if busy {
            self.log(now, name, "attach ignored: already attached or attaching");
            return;
        }
        let slice = match self.sm.slice(snssai) {
            Some(r) if r.status == SliceStatus::Ready => r.id,
            _ => {
                self.fail(now, name, format!("attach failed: SliceUnavailable({snssai})"));
                return;
            }
        };
        let ready = self.core.smf_for(snssai).is_some() && self.core.upf_for(snssai).is_some();
        if let Err(e) = self.ran.attach_check(ue, slice) {
            let reason = match e {
                RanError::SliceUnavailable(_) => format!("SliceUnavailable({snssai})"),
                other => other.to_string(),
            };
            self.fail(now, name, format!("attach failed: {reason}"));
            return;
        }
        if !ready {
            self.fail(now, name, format!("attach failed: SliceUnavailable({snssai})"));
            return;
        }
        self.ue_rt.get_mut(&ue).expect("known").attaching = true;
        self.log(now, name, format!("attach requested slice={snssai}"));
        let d = 2 * self.control_one_way(ue);
        at(
            eng,
            d,
            ue,
            Msg::AttachStage {
                stage: 1,
                snssai,
                slice,
                started: now,
            },
        );
    }

    #[allow(clippy::too_many_arguments)]
    fn attach_stage(
        &mut self,
        eng: &mut Engine<Msg>,
        now: SimTime,
        ue: UeId,
        stage: u8,
        snssai: Snssai,
        slice: SliceId,
        started: SimTime,
    ) {
        let name = self.name(eng, ue);
        let fail = |w: &mut World, why: String| {
            w.ue_rt.get_mut(&ue).expect("known").attaching = false;
            let _ = w.ran.set_ue_state(ue, UeState::Idle);
            w.fail(now, &name, format!("attach failed: {why}"));
        };
        let next = Msg::AttachStage {
            stage: stage + 1,
            snssai,
            slice,
            started,
        };
        let d = 2 * self.control_one_way(ue);
        match stage {
            1 => {
                let _ = self.ran.set_ue_state(ue, UeState::RrcConnected);
                at(eng, d, ue, next);
            }
            2 => match self.amf_for(snssai).map(|amf| self.core.register_ue(amf, ue)) {
                None => fail(self, format!("SliceUnavailable({snssai})")),
                Some(Ok(_)) => {
                    let _ = self.ran.set_ue_state(ue, UeState::Registered);
                    at(eng, d, ue, next);
                }
                Some(Err(e)) => fail(self, e.to_string()),
            },
            _ => {
                let Some(smf) = self.core.smf_for(snssai) else {
                    return fail(self, format!("SliceUnavailable({snssai})"));
                };
                let Some(cu_up) = self.ran.cu_up_for(slice) else {
                    return fail(self, format!("SliceUnavailable({snssai})"));
                };
                match self.core.establish_pdu_session(smf, ue, snssai, now) {
                    Ok(ctx) => {
                        let _ = self.ran.activate_session(ue, slice, snssai, cu_up);
                        let du = self.ran.ue(ue).expect("known").serving_du;
                        let dun = self.ran.node(du).expect("known");
                        let ru = dun.ru.map(|r| eng.name(r).to_owned());
                        let cu_cp = dun.cu_cp.map(|c| eng.name(c).to_owned());
                        let mut sig = vec![name.clone()];
                        sig.extend(ru.clone());
                        sig.push(eng.name(du).to_owned());
                        sig.extend(cu_cp);
                        sig.push(eng.name(self.amf_for(snssai).unwrap_or(self.ids.amf)).to_owned());
                        let mut data = vec![name.clone()];
                        data.extend(ru);
                        data.push(eng.name(du).to_owned());
                        data.push(eng.name(cu_up).to_owned());
                        data.push(eng.name(ctx.upf).to_owned());
                        data.push(SERVER.to_owned());
                        let took = now - started;
                        let rt = self.ue_rt.get_mut(&ue).expect("known");
                        rt.attaching = false;
                        rt.ever_attached = true;
                        rt.attach_latency_us = Some(took);
                        rt.signaling_path = sig;
                        rt.data_path = data.clone();
                        self.log(
                            now,
                            &name,
                            format!("attached slice={snssai} latency_us={took} path={}", data.join(">")),
                        );
                        self.refresh_ue(ue, now);
                    }
                    Err(e) => fail(self, e.to_string()),
                }
            }
        }
    }

    fn inject(&mut self, eng: &mut Engine<Msg>, now: SimTime, fault: Fault) {
        let idx = self.faults.len();
        let (target, duration) = match &fault {
            Fault::UeDrop { ue, duration_us } => {
                let id = self.ids.ues[ue];
                if let Some(c) = self.ran.ue_mut(id) {
                    c.radio_up = false;
                }
                self.refresh_ue(id, now);
                (ue.clone(), Some(*duration_us))
            }
            Fault::ThroughputDegradation {
                ue,
                factor,
                duration_us,
            } => {
                let id = self.ids.ues[ue];
                self.ue_rt.get_mut(&id).expect("known").degradation = *factor;
                self.refresh_ue(id, now);
                (ue.clone(), Some(*duration_us))
            }
            Fault::E2ControlDrop { node, duration_us } => {
                let id = self.ids.nodes[node];
                if let Some(a) = self.ric.as_mut().and_then(|r| r.nodes.get_mut(&id)) {
                    a.drop_controls = true;
                }
                (node.clone(), Some(*duration_us))
            }
            Fault::NodeDown { node } => {
                self.node_down(eng, now, node);
                (node.clone(), None)
            }
        };
        self.log(now, "script", format!("fault {} on {target} begins", fault.name()));
        self.faults.push(FaultRecord {
            kind: fault.name().into(),
            target,
            start_us: now.as_micros(),
            end_us: duration.map(|d| now.as_micros() + d),
        });
        if let Some(d) = duration {
            at(eng, d, self.ids.script, Msg::FaultEnd { fault: idx });
        }
    }

    fn fault_end(&mut self, _eng: &mut Engine<Msg>, now: SimTime, idx: usize) {
        let f = self.faults[idx].clone();
        match f.kind.as_str() {
            "ue_drop" => {
                let id = self.ids.ues[&f.target];
                if let Some(c) = self.ran.ue_mut(id) {
                    c.radio_up = true;
                }
                self.refresh_ue(id, now);
            }
            "throughput_degradation" => {
                let id = self.ids.ues[&f.target];
                self.ue_rt.get_mut(&id).expect("known").degradation = 1.0;
                self.refresh_ue(id, now);
            }
            "e2_control_drop" => {
                let id = self.ids.nodes[&f.target];
                if let Some(a) = self.ric.as_mut().and_then(|r| r.nodes.get_mut(&id)) {
                    a.drop_controls = false;
                }
            }
            _ => {}
        }
        self.log(now, "script", format!("fault {} on {} ends", f.kind, f.target));
    }

    fn node_down(&mut self, eng: &mut Engine<Msg>, now: SimTime, node: &str) {
        if node == self.sc.core.amf {
            let all: Vec<NodeId> = self.core.amfs().map(|a| a.id).collect();
            for a in all {
                self.core.set_amf_operational(a, false);
            }
            self.log(now, node, "down");
            return;
        }
        let id = self.ids.nodes[node];
        let lost = self.ran.node_down(id).unwrap_or_default();
        self.log(now, node, "down");
        let dus: Vec<NodeId> = self.cells.keys().copied().collect();
        for du in dus {
            self.refresh_cell(du, now);
        }
        for du in lost.into_iter().filter(|d| *d != id) {
            let who = self.name(eng, du);
            self.log(now, &who, "F1 link lost");
            self.start_f1(eng, now, du);
        }
    }

    fn node_up(&mut self, eng: &mut Engine<Msg>, now: SimTime, node: &str) {
        if node == self.sc.core.amf {
            let all: Vec<NodeId> = self.core.amfs().map(|a| a.id).collect();
            for a in all {
                self.core.set_amf_operational(a, true);
            }
            self.log(now, node, "up");
            return;
        }
        let id = self.ids.nodes[node];
        let kind = self.ran.node(id).map(|n| n.kind);
        self.log(now, node, "up");
        if kind == Some(NodeKind::Du) {
            self.start_f1(eng, now, id);
        } else {
            let _ = self.ran.set_state(id, NodeState::Operational);
            let dus: Vec<NodeId> = self.cells.keys().copied().collect();
            for du in dus {
                self.refresh_cell(du, now);
            }
        }
    }

    fn ping_send(&mut self, eng: &mut Engine<Msg>, now: SimTime, flow: usize, seq: u64) {
        let interval = self.sc.traffic[flow].interval_us;
        let f = &self.flows[flow];
        let ue = f.ue;
        if !f.live(now) {
            return;
        }
        if now + interval < f.stop && (now + interval).as_micros() <= self.sc.meta.duration_us {
            at(eng, interval, ue, Msg::PingSend { flow, seq: seq + 1 });
        }
        self.flows[flow].pings_sent += 1;
        if !self.ue_has_service(ue) || !self.forward_ping(ue, now) {
            self.flows[flow].pings_lost += 1;
            return;
        }
        let air = self.air_delay(ue);
        let wired = self.wired_one_way(ue).unwrap_or(0);
        at(eng, air + wired, self.ids.server, Msg::PingAtServer { flow, seq, sent_at: now });
    }

    /// Pass one echo packet through the UE's UPF tunnel.
    fn forward_ping(&mut self, ue: UeId, now: SimTime) -> bool {
        let Some(s) = self.core.session(ue).cloned() else {
            return false;
        };
        let size = 64;
        self.core
            .forward(
                s.upf,
                UserPacket {
                    tunnel_id: s.tunnel_id,
                    bytes: size,
                },
                now,
            )
            .is_ok()
    }

    fn metrics_tick(&mut self, eng: &mut Engine<Msg>, now: SimTime) {
        let dt = self.sc.meta.metrics_interval_us;
        let next = now + dt;
        if next.as_micros() <= self.sc.meta.duration_us {
            at(eng, dt, self.ids.collector, Msg::MetricsTick);
        }
        let from = SimTime::from_micros(now.as_micros().saturating_sub(dt));
        let mut rows = Vec::new();
        let mut slice_bits: BTreeMap<(SliceId, Direction), f64> = BTreeMap::new();
        let dus: Vec<NodeId> = self.cells.keys().copied().collect();
        for du in dus {
            let cell = self.cells.get_mut(&du).expect("listed");
            cell.advance(now);
            let c = cell.counters().clone();
            let total_prbs = cell.config.total_prbs() as f64;
            let base = self.metrics_base.insert(du, c.clone()).unwrap_or_default();
            let d = |m: &BTreeMap<Direction, f64>, b: &BTreeMap<Direction, f64>, k| {
                m.get(&k).copied().unwrap_or(0.0) - b.get(&k).copied().unwrap_or(0.0)
            };
            let cname = eng.name(du).to_owned();
            for dir in Direction::BOTH {
                rows.push(MetricRow {
                    time_us: now.as_micros(),
                    entity: format!("cell:{cname}"),
                    metric: format!("{}_mbps", dir.label()),
                    value: d(&c.cell_bits, &base.cell_bits, dir) / dt as f64,
                });
            }
            rows.push(MetricRow {
                time_us: now.as_micros(),
                entity: format!("cell:{cname}"),
                metric: "prb_dl_pct".into(),
                value: 100.0 * d(&c.cell_prb_us, &base.cell_prb_us, Direction::Dl) / (dt as f64 * total_prbs),
            });
            for (&(dir, s), &v) in &c.slice_bits {
                let b = base.slice_bits.get(&(dir, s)).copied().unwrap_or(0.0);
                *slice_bits.entry((s, dir)).or_default() += v - b;
            }
            for (i, f) in self.flows.iter().enumerate() {
                if f.kind == FlowKind::Ping || f.start > from || now > f.stop {
                    continue;
                }
                if self.ran.ue(f.ue).map(|u| u.serving_du) != Some(du) {
                    continue;
                }
                let k = i as u32;
                let v = c.flow_delivered_bits.get(&k).copied().unwrap_or(0.0)
                    - base.flow_delivered_bits.get(&k).copied().unwrap_or(0.0);
                rows.push(MetricRow {
                    time_us: now.as_micros(),
                    entity: format!("flow:{}", self.sc.traffic[i].id),
                    metric: "mbps".into(),
                    value: v / dt as f64,
                });
            }
        }
        for r in self.sm.slices() {
            for dir in Direction::BOTH {
                let v = slice_bits.get(&(r.id, dir)).copied().unwrap_or(0.0);
                rows.push(MetricRow {
                    time_us: now.as_micros(),
                    entity: format!("slice:{}", r.spec.snssai),
                    metric: format!("{}_mbps", dir.label()),
                    value: v / dt as f64,
                });
            }
        }
        self.metrics.extend(rows);
    }

    fn optimize_tick(&mut self, eng: &mut Engine<Msg>, now: SimTime) {
        let Some(p) = self.sc.ric.twin.optimize_interval_us else { return };
        at(eng, p, self.ids.ric, Msg::OptimizeTick);
        let Some(tw) = self.ric.as_ref().and_then(|r| r.twin.as_ref()) else {
            return;
        };
        if self.sm.slices().any(|r| r.status == SliceStatus::Provisioning) {
            return;
        }
        // Optimize for the busiest cell the twin knows.
        let mut best: Option<(f64, NodeId)> = None;
        for (&node, _) in tw.state.cells() {
            let load: f64 = tw.state.slice_demands(node).values().sum();
            if best.is_none_or(|(l, _)| load > l) {
                best = Some((load, node));
            }
        }
        let Some((load, node)) = best else { return };
        if load <= 0.0 {
            return;
        }
        let cell = tw.state.cell(node).expect("listed");
        let Ok(cap) = cell.config.capacity(Direction::Dl) else { return };
        let demands = tw.state.slice_demands(node);
        let mins = self.sm.min_shares();
        let Ok(shares) = optimize_shares(cap, &demands, &mins) else { return };
        let current = self.sm.shares(None);
        let same = current.len() == shares.len()
            && current
                .iter()
                .zip(&shares)
                .all(|(a, b)| a.slice_id == b.slice_id && (a.share - b.share).abs() < 1e-9);
        if same {
            return;
        }
        let updates: Vec<(Snssai, f64)> = shares
            .iter()
            .filter_map(|s| self.sm.by_id(s.slice_id).map(|r| (r.spec.snssai, s.share)))
            .collect();
        match self.sm.update_shares(&updates) {
            Ok(v) => {
                self.log(now, "twin", format!("optimizer proposes {}", fmt_shares(&v)));
                self.push_shares(eng, now, &v);
            }
            Err(e) => self.fail(now, "twin", format!("optimizer: {e}")),
        }
    }

    fn finish(self, eng: &Engine<Msg>) -> RunOutput {
        let sc = &self.sc;
        let mut flows = Vec::new();
        for (i, f) in self.flows.iter().enumerate() {
            let spec = &sc.traffic[i];
            let ent = format!("flow:{}", spec.id);
            let tp: Vec<f64> = self
                .metrics
                .iter()
                .filter(|r| r.entity == ent && r.metric == "mbps")
                .map(|r| r.value)
                .collect();
            let du = self.ran.ue(f.ue).map(|u| u.serving_du);
            let c = du.and_then(|d| self.cells.get(&d)).map(|c| c.counters());
            let k = i as u32;
            let delivered = c.and_then(|c| c.flow_delivered_bits.get(&k)).copied().unwrap_or(0.0);
            let offered = c.and_then(|c| c.flow_offered_bits.get(&k)).copied().unwrap_or(0.0);
            flows.push(FlowSummary {
                id: spec.id.clone(),
                kind: format!("{:?}", spec.kind),
                ue: eng.name(f.ue).to_owned(),
                direction: if f.downlink { "dl" } else { "ul" }.into(),
                throughput_mbps: Stats::of(&tp),
                offered_mbit: offered / 1e6,
                delivered_mbit: delivered / 1e6,
                rtt_ms: (f.kind == FlowKind::Ping).then(|| Stats::of(&f.rtts_ms)),
                pings_sent: f.pings_sent,
                pings_lost: f.pings_lost,
            });
        }

        let mut slices = Vec::new();
        for r in self.sm.slices() {
            let mut dl = 0.0;
            let mut ul = 0.0;
            for c in self.cells.values() {
                let k = c.counters();
                dl += k.slice_bits.get(&(Direction::Dl, r.id)).copied().unwrap_or(0.0);
                ul += k.slice_bits.get(&(Direction::Ul, r.id)).copied().unwrap_or(0.0);
            }
            let mut functions = BTreeMap::new();
            let amf = self.core.amf_for(r.spec.snssai).filter(|_| sc.core.sliced_amf);
            for (label, id) in [("cu-up", r.cu_up), ("smf", r.smf), ("upf", r.upf), ("amf", amf)] {
                if let Some(id) = id {
                    functions.insert(label.to_owned(), eng.name(id).to_owned());
                }
            }
            slices.push(SliceSummary {
                snssai: r.spec.snssai.to_string(),
                id: r.id.0,
                status: format!("{:?}", r.status),
                radio_share: r.spec.radio_share,
                dl_mbit: dl / 1e6,
                ul_mbit: ul / 1e6,
                requested_at_us: r.requested_at.as_micros(),
                ready_at_us: r.ready_at.map(SimTime::as_micros),
                failure: r.failure.clone(),
                functions,
            });
        }

        let mut nodes = Vec::new();
        for n in self.ran.nodes() {
            let f1 = self.f1.get(&n.id);
            let e2 = self.ric.as_ref().and_then(|rt| {
                let a = rt.e2.association(n.id)?;
                Some(E2NodeSummary {
                    state: format!("{:?}", a.state),
                    ran_functions: a.ran_functions.iter().copied().collect(),
                    setup_attempts: a.setup_attempts,
                    indications: rt.e2.indications.get(&n.id).copied().unwrap_or(0),
                    decode_failures: rt.nodes.get(&n.id).map_or(0, |x| x.decode_failures),
                })
            });
            nodes.push(NodeSummary {
                name: n.name.clone(),
                kind: n.kind.label().into(),
                profile: n.profile.name.clone(),
                state: format!("{:?}", n.state),
                one_way_proc_delay_us: n.profile.one_way_proc_delay_us,
                f1_established_at_us: self.ran.f1_context(n.id).map(|c| c.established_at.as_micros()),
                f1_setup_us: f1.and_then(|f| f.setup_us),
                f1_failures: f1.map(|f| f.failures),
                e2,
            });
        }

        let mut census: BTreeMap<String, usize> = BTreeMap::new();
        for n in self.ran.nodes() {
            *census.entry(n.kind.label().into()).or_default() += 1;
        }
        census.insert("amf".into(), self.core.amfs().count());
        let smfs: BTreeSet<NodeId> = self.sm.slices().filter_map(|r| r.smf).collect();
        census.insert("smf".into(), smfs.len());
        census.insert("upf".into(), self.core.upfs().count());

        let ues = self
            .ran
            .ues()
            .map(|u| {
                let rt = &self.ue_rt[&u.ue_id];
                UeSummary {
                    name: eng.name(u.ue_id).to_owned(),
                    state: format!("{:?}", u.state),
                    serving_du: eng.name(u.serving_du).to_owned(),
                    slice: u.slice.map(|s| s.1.to_string()),
                    attach_latency_us: rt.attach_latency_us,
                    signaling_path: rt.signaling_path.clone(),
                    data_path: rt.data_path.clone(),
                }
            })
            .collect();

        let mut anomalies: BTreeMap<String, usize> = BTreeMap::new();
        for a in &self.anomalies {
            *anomalies.entry(a.kind.clone()).or_default() += 1;
        }

        RunOutput {
            summary: Summary {
                scenario: self.sc.clone(),
                seed: self.seed,
                engine: eng.summary(),
                flows,
                slices,
                nodes,
                census,
                ues,
                anomalies,
                faults: self.faults,
                failures: self.failures,
                e2_unmatched: self.ric.as_ref().map_or(0, |r| r.e2.unmatched),
            },
            metrics: self.metrics,
            anomalies: self.anomalies,
            events: self.events,
            trace: eng.trace().map(str::to_owned),
            e2_trace: self.e2_trace,
        }
    }
}

fn fmt_shares(v: &[SliceShare]) -> String {
    let parts: Vec<String> = v.iter().map(|s| format!("{}={:.3}", s.slice_id, s.share)).collect();
    format!("[{}]", parts.join(" "))
}
