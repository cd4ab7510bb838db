//! Digital twin: a per-UE sliding window of telemetry plus a copy of each
//! cell's configuration, used to predict what the scheduler will deliver.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::core5g::{NodeId, SliceId};
use crate::e2::{KpiEntry, Metric, Scope};
use crate::radio::{Direction, RadioError, SliceShare};
use crate::ran::cell::{schedule, CellConfig, FlowDemand};
use crate::sim::{EntityId, SimTime};

/// A UE as the twin knows it: reporting node plus the node-local id.
pub type UeKey = (NodeId, u16);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TwinError {
    #[error("twin is stale: last sync {lag_us} us ago")]
    StaleTwin { lag_us: u64 },
    #[error("no configuration for cell at node {0}")]
    UnknownCell(NodeId),
    #[error(transparent)]
    Radio(#[from] RadioError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TwinConfig {
    /// Samples kept per UE for demand estimation and outlier statistics.
    pub window: usize,
    /// Predictions are refused once the last sync is older than this many
    /// report periods.
    pub stale_periods: u32,
}

impl Default for TwinConfig {
    fn default() -> Self {
        TwinConfig {
            window: 50,
            stale_periods: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KpiSample {
    pub node: NodeId,
    pub metric: Metric,
    pub scope: Scope,
    pub value: f64,
    pub measured_at: SimTime,
}

/// One complete per-UE report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Observation {
    pub at: SimTime,
    pub connected: bool,
    pub dl_mbps: f64,
    pub ul_mbps: f64,
    /// Twin prediction for this interval, made before the report arrived.
    pub predicted_dl: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UeTwin {
    pub key: UeKey,
    pub slice: SliceId,
    pub connected: bool,
    /// Set once the UE has been seen connected; cleared on release.
    pub expected_active: bool,
    /// Oldest first. Holds `window` samples plus a few extra so detectors
    /// looking back over several samples still see full statistics.
    pub history: VecDeque<Observation>,
    pending_ul: f64,
    pending_connected: bool,
}

/// Extra samples retained beyond the configured window.
pub const HISTORY_SLACK: usize = 8;

impl UeTwin {
    fn new(key: UeKey, slice: SliceId) -> Self {
        UeTwin {
            key,
            slice,
            connected: false,
            expected_active: false,
            history: VecDeque::new(),
            pending_ul: 0.0,
            pending_connected: false,
        }
    }

    /// Demand estimate: the largest rate seen in the last `window` samples.
    pub fn demand(&self, dir: Direction, window: usize) -> f64 {
        self.history
            .iter()
            .rev()
            .take(window)
            .map(|o| match dir {
                Direction::Dl => o.dl_mbps,
                Direction::Ul => o.ul_mbps,
            })
            .fold(0.0, f64::max)
    }

    pub fn latest(&self) -> Option<&Observation> {
        self.history.back()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellTwin {
    pub config: CellConfig,
    pub shares: Vec<SliceShare>,
    /// Most recent cell- and slice-level values, keyed by (metric, scope).
    pub aggregates: BTreeMap<(u8, u32), f64>,
}

#[derive(Debug, Clone, Default)]
pub struct TwinState {
    pub cfg: TwinConfig,
    pub report_period_us: u64,
    cells: BTreeMap<NodeId, CellTwin>,
    ues: BTreeMap<UeKey, UeTwin>,
    pub min_shares: BTreeMap<SliceId, f64>,
    last_sync: Option<SimTime>,
}

impl TwinState {
    pub fn new(cfg: TwinConfig, report_period_us: u64) -> Self {
        TwinState {
            cfg,
            report_period_us,
            ..Default::default()
        }
    }

    /// Configuration push for one cell.
    pub fn configure_cell(&mut self, node: NodeId, config: CellConfig, shares: Vec<SliceShare>) {
        self.cells.insert(
            node,
            CellTwin {
                config,
                shares,
                aggregates: BTreeMap::new(),
            },
        );
    }

    pub fn set_shares(&mut self, node: NodeId, shares: Vec<SliceShare>) {
        if let Some(c) = self.cells.get_mut(&node) {
            c.shares = shares;
        }
    }

    pub fn cell(&self, node: NodeId) -> Option<&CellTwin> {
        self.cells.get(&node)
    }

    pub fn cells(&self) -> impl Iterator<Item = (&NodeId, &CellTwin)> {
        self.cells.iter()
    }

    pub fn ue(&self, key: UeKey) -> Option<&UeTwin> {
        self.ues.get(&key)
    }

    pub fn ues(&self) -> impl Iterator<Item = &UeTwin> {
        self.ues.values()
    }

    pub fn last_sync(&self) -> Option<SimTime> {
        self.last_sync
    }

    /// The core released this UE; silence from it is now expected.
    pub fn release_ue(&mut self, key: UeKey) {
        if let Some(u) = self.ues.get_mut(&key) {
            u.expected_active = false;
        }
    }

    /// Fold one telemetry value into the twin. A UE's DL throughput entry
    /// closes its report and appends an observation.
    pub fn twin_sync(&mut self, s: KpiSample) {
        self.last_sync = Some(self.last_sync.map_or(s.measured_at, |t| t.max(s.measured_at)));
        match s.scope {
            Scope::Ue { ue, slice } => {
                let key = (s.node, ue);
                let retain = self.cfg.window + HISTORY_SLACK;
                let u = self.ues.entry(key).or_insert_with(|| UeTwin::new(key, slice));
                u.slice = slice;
                match s.metric {
                    Metric::Connected => u.pending_connected = s.value > 0.5,
                    Metric::UlThroughput => u.pending_ul = s.value,
                    Metric::DlThroughput => {
                        u.connected = u.pending_connected;
                        if u.connected {
                            u.expected_active = true;
                        }
                        u.history.push_back(Observation {
                            at: s.measured_at,
                            connected: u.pending_connected,
                            dl_mbps: s.value,
                            ul_mbps: u.pending_ul,
                            predicted_dl: None,
                        });
                        while u.history.len() > retain {
                            u.history.pop_front();
                        }
                    }
                    Metric::PrbUsage => {}
                }
            }
            scope => {
                if let Some(c) = self.cells.get_mut(&s.node) {
                    c.aggregates.insert((s.metric as u8, scope.pack()), s.value);
                }
            }
        }
    }

    /// Apply a whole indication: predict first from the state before the
    /// report, then sync, then stamp each new observation with its
    /// prediction. Returns the UEs that received an observation.
    pub fn ingest(&mut self, node: NodeId, at: SimTime, entries: &[KpiEntry]) -> Vec<UeKey> {
        let predicted = self.predict_cell(node).ok();
        let mut touched = Vec::new();
        for e in entries {
            self.twin_sync(KpiSample {
                node,
                metric: e.metric,
                scope: e.scope,
                value: e.value(),
                measured_at: at,
            });
            if let (Metric::DlThroughput, Scope::Ue { ue, .. }) = (e.metric, e.scope) {
                touched.push((node, ue));
            }
        }
        for key in &touched {
            let p = predicted.as_ref().map(|m| m.get(&key.1).copied().unwrap_or(0.0));
            if let Some(obs) = self.ues.get_mut(key).and_then(|u| u.history.back_mut()) {
                obs.predicted_dl = p;
            }
        }
        touched
    }

    /// Predicted DL rate per UE on `node` if current demand persists.
    pub fn twin_predict(&self, node: NodeId, now: SimTime) -> Result<BTreeMap<u16, f64>, TwinError> {
        let limit = self.cfg.stale_periods as u64 * self.report_period_us;
        let lag = self.last_sync.map_or(u64::MAX, |t| now.saturating_sub(t).as_micros());
        if lag > limit {
            return Err(TwinError::StaleTwin { lag_us: lag });
        }
        self.predict_cell(node)
    }

    fn predict_cell(&self, node: NodeId) -> Result<BTreeMap<u16, f64>, TwinError> {
        let cell = self.cells.get(&node).ok_or(TwinError::UnknownCell(node))?;
        let flows: Vec<FlowDemand> = self
            .ues
            .values()
            .filter(|u| u.key.0 == node)
            .map(|u| FlowDemand {
                flow: u.key.1 as u32,
                ue: EntityId(u.key.1 as u32),
                slice: u.slice,
                direction: Direction::Dl,
                demand_mbps: if u.connected {
                    u.demand(Direction::Dl, self.cfg.window)
                } else {
                    0.0
                },
                rate_factor: 1.0,
            })
            .collect();
        let s = schedule(&cell.config, &cell.shares, &flows)?;
        Ok(s.rates.into_iter().map(|(k, r)| (k as u16, r)).collect())
    }

    /// Aggregate DL demand per slice on `node`.
    pub fn slice_demands(&self, node: NodeId) -> BTreeMap<SliceId, f64> {
        let mut out = BTreeMap::new();
        for u in self.ues.values().filter(|u| u.key.0 == node && u.connected) {
            *out.entry(u.slice).or_default() += u.demand(Direction::Dl, self.cfg.window);
        }
        out
    }
}
