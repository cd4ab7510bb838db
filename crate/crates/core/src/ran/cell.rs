//! Per-cell fluid scheduler. Rates are recomputed whenever demand, shares or
//! UE state change, and delivered bits are integrated between changes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::core5g::{NodeId, SliceId, UeId};
use crate::e2::{KpiEntry, Metric, Scope};
use crate::radio::{
    allocate_prbs, link_capacity, max_min_fair, prb_grid, validate_shares, Direction,
    RadioCalibration, RadioError, SliceShare, TddConfig,
};
use crate::sim::SimTime;

pub type FlowKey = u32;

/// Static radio configuration of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellConfig {
    pub bandwidth_mhz: f64,
    pub tdd: TddConfig,
    pub calibration: RadioCalibration,
    pub dl_cap_mbps: Option<f64>,
    pub ul_cap_mbps: Option<f64>,
    /// Apply the UDP-over-TCP efficiency factor per direction.
    pub udp_dl: bool,
    pub udp_ul: bool,
}

impl CellConfig {
    pub fn new(bandwidth_mhz: f64, tdd: TddConfig, calibration: RadioCalibration) -> Self {
        CellConfig {
            bandwidth_mhz,
            tdd,
            calibration,
            dl_cap_mbps: None,
            ul_cap_mbps: None,
            udp_dl: false,
            udp_ul: false,
        }
    }

    /// Usable cell capacity in one direction.
    pub fn capacity(&self, dir: Direction) -> Result<f64, RadioError> {
        let raw = link_capacity(self.bandwidth_mhz, dir, &self.tdd, &self.calibration)?;
        let (udp, cap) = match dir {
            Direction::Dl => (self.udp_dl, self.dl_cap_mbps),
            Direction::Ul => (self.udp_ul, self.ul_cap_mbps),
        };
        let eff = if udp {
            raw * self.calibration.udp_over_tcp_factor
        } else {
            raw
        };
        Ok(cap.map_or(eff, |c| eff.min(c)))
    }

    pub fn total_prbs(&self) -> u32 {
        prb_grid(self.bandwidth_mhz)
    }
}

/// One active flow as seen by the scheduler.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowDemand {
    pub flow: FlowKey,
    pub ue: UeId,
    pub slice: SliceId,
    pub direction: Direction,
    /// Offered load; infinite for full-buffer traffic.
    pub demand_mbps: f64,
    /// Multiplier on the scheduled rate (1.0 unless a fault degrades it).
    pub rate_factor: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Schedule {
    pub rates: BTreeMap<FlowKey, f64>,
    pub prbs: BTreeMap<(Direction, SliceId), u32>,
}

/// Scheduler output for a given configuration, share vector and demand set.
pub fn schedule(
    cfg: &CellConfig,
    shares: &[SliceShare],
    flows: &[FlowDemand],
) -> Result<Schedule, RadioError> {
    let mut out = Schedule::default();
    for f in flows {
        out.rates.insert(f.flow, 0.0);
    }
    if shares.is_empty() {
        return Ok(out);
    }
    let total = cfg.total_prbs();
    for dir in Direction::BOTH {
        let cap = cfg.capacity(dir)?;
        let mut demand: BTreeMap<SliceId, f64> = BTreeMap::new();
        for f in flows.iter().filter(|f| f.direction == dir) {
            *demand.entry(f.slice).or_default() += f.demand_mbps;
        }
        let alloc = allocate_prbs(shares, &demand, total, cap)?;
        for (&slice, &prbs) in &alloc.per_slice {
            out.prbs.insert((dir, slice), prbs);
            let members: Vec<&FlowDemand> = flows
                .iter()
                .filter(|f| f.direction == dir && f.slice == slice)
                .collect();
            let slice_cap = prbs as f64 / total as f64 * cap;
            let demands: Vec<f64> = members.iter().map(|f| f.demand_mbps).collect();
            for (f, r) in members.iter().zip(max_min_fair(slice_cap, &demands)) {
                out.rates.insert(f.flow, r * f.rate_factor);
            }
        }
    }
    Ok(out)
}

/// Cumulative counters. Rates in Mbps times microseconds give bits.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CellCounters {
    pub flow_delivered_bits: BTreeMap<FlowKey, f64>,
    pub flow_offered_bits: BTreeMap<FlowKey, f64>,
    pub ue_bits: BTreeMap<(UeId, Direction), f64>,
    pub slice_bits: BTreeMap<(Direction, SliceId), f64>,
    pub cell_bits: BTreeMap<Direction, f64>,
    pub slice_prb_us: BTreeMap<(Direction, SliceId), f64>,
    pub cell_prb_us: BTreeMap<Direction, f64>,
}

fn delta<K: Ord + Copy>(now: &BTreeMap<K, f64>, base: &BTreeMap<K, f64>, k: K) -> f64 {
    now.get(&k).copied().unwrap_or(0.0) - base.get(&k).copied().unwrap_or(0.0)
}

/// UE as listed in a KPI report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportedUe {
    pub ue: UeId,
    pub scope_id: u16,
    pub slice: SliceId,
    pub connected: bool,
}

#[derive(Debug, Clone)]
pub struct Cell {
    pub du: NodeId,
    pub cell_id: u16,
    pub config: CellConfig,
    shares: Vec<SliceShare>,
    flows: Vec<FlowDemand>,
    sched: Schedule,
    last: SimTime,
    counters: CellCounters,
}

impl Cell {
    pub fn new(du: NodeId, cell_id: u16, config: CellConfig) -> Self {
        Cell {
            du,
            cell_id,
            config,
            shares: Vec::new(),
            flows: Vec::new(),
            sched: Schedule::default(),
            last: SimTime::ZERO,
            counters: CellCounters::default(),
        }
    }

    pub fn shares(&self) -> &[SliceShare] {
        &self.shares
    }

    pub fn flows(&self) -> &[FlowDemand] {
        &self.flows
    }

    pub fn schedule(&self) -> &Schedule {
        &self.sched
    }

    pub fn rate(&self, flow: FlowKey) -> f64 {
        self.sched.rates.get(&flow).copied().unwrap_or(0.0)
    }

    /// Counters as of the last `advance`.
    pub fn counters(&self) -> &CellCounters {
        &self.counters
    }

    /// Integrate current rates up to `now`.
    pub fn advance(&mut self, now: SimTime) {
        if now <= self.last {
            return;
        }
        let dt = (now - self.last) as f64;
        self.last = now;
        let c = &mut self.counters;
        for f in &self.flows {
            let r = self.sched.rates.get(&f.flow).copied().unwrap_or(0.0);
            let bits = r * dt;
            *c.flow_delivered_bits.entry(f.flow).or_default() += bits;
            let offered = if f.demand_mbps.is_finite() {
                f.demand_mbps * dt
            } else {
                bits
            };
            *c.flow_offered_bits.entry(f.flow).or_default() += offered;
            *c.ue_bits.entry((f.ue, f.direction)).or_default() += bits;
            *c.slice_bits.entry((f.direction, f.slice)).or_default() += bits;
            *c.cell_bits.entry(f.direction).or_default() += bits;
        }
        for (&(dir, slice), &prbs) in &self.sched.prbs {
            let v = prbs as f64 * dt;
            *c.slice_prb_us.entry((dir, slice)).or_default() += v;
            *c.cell_prb_us.entry(dir).or_default() += v;
        }
    }

    fn recompute(&mut self) -> Result<(), RadioError> {
        self.sched = schedule(&self.config, &self.shares, &self.flows)?;
        Ok(())
    }

    pub fn set_flows(&mut self, now: SimTime, flows: Vec<FlowDemand>) -> Result<(), RadioError> {
        self.advance(now);
        self.flows = flows;
        self.recompute()
    }

    pub fn set_shares(&mut self, now: SimTime, shares: Vec<SliceShare>) -> Result<(), RadioError> {
        validate_shares(&shares)?;
        self.advance(now);
        self.shares = shares;
        self.recompute()
    }

    /// KPI report averaged over the `period_us` since `base` was taken.
    /// Order: cell, then each slice in share order, then each UE.
    pub fn kpis(&self, base: &CellCounters, period_us: u64, ues: &[ReportedUe]) -> Vec<KpiEntry> {
        let c = &self.counters;
        let p = period_us.max(1) as f64;
        let total = self.config.total_prbs() as f64;
        let usage = |prb_us: f64| 100.0 * prb_us / (p * total);
        let cell = Scope::Cell(self.cell_id);
        let mut out = vec![
            KpiEntry::new(Metric::DlThroughput, cell, delta(&c.cell_bits, &base.cell_bits, Direction::Dl) / p),
            KpiEntry::new(Metric::UlThroughput, cell, delta(&c.cell_bits, &base.cell_bits, Direction::Ul) / p),
            KpiEntry::new(
                Metric::PrbUsage,
                cell,
                usage(delta(&c.cell_prb_us, &base.cell_prb_us, Direction::Dl)),
            ),
        ];
        for s in &self.shares {
            let scope = Scope::Slice(s.slice_id);
            let dl = (Direction::Dl, s.slice_id);
            let ul = (Direction::Ul, s.slice_id);
            out.push(KpiEntry::new(Metric::DlThroughput, scope, delta(&c.slice_bits, &base.slice_bits, dl) / p));
            out.push(KpiEntry::new(Metric::UlThroughput, scope, delta(&c.slice_bits, &base.slice_bits, ul) / p));
            out.push(KpiEntry::new(
                Metric::PrbUsage,
                scope,
                usage(delta(&c.slice_prb_us, &base.slice_prb_us, dl)),
            ));
        }
        for u in ues {
            let scope = Scope::Ue {
                ue: u.scope_id,
                slice: u.slice,
            };
            out.push(KpiEntry::new(Metric::Connected, scope, if u.connected { 1.0 } else { 0.0 }));
            out.push(KpiEntry::new(
                Metric::UlThroughput,
                scope,
                delta(&c.ue_bits, &base.ue_bits, (u.ue, Direction::Ul)) / p,
            ));
            out.push(KpiEntry::new(
                Metric::DlThroughput,
                scope,
                delta(&c.ue_bits, &base.ue_bits, (u.ue, Direction::Dl)) / p,
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::EntityId;

    fn cfg40(udp: bool) -> CellConfig {
        let mut c = CellConfig::new(40.0, TddConfig::DL_CENTRIC, RadioCalibration::default());
        c.udp_dl = udp;
        c
    }

    fn flow(flow: FlowKey, ue: u32, slice: u8, demand: f64) -> FlowDemand {
        FlowDemand {
            flow,
            ue: EntityId(ue),
            slice: SliceId(slice),
            direction: Direction::Dl,
            demand_mbps: demand,
            rate_factor: 1.0,
        }
    }

    fn shares(v: &[(u8, f64)]) -> Vec<SliceShare> {
        v.iter()
            .map(|&(s, share)| SliceShare {
                slice_id: SliceId(s),
                share,
            })
            .collect()
    }

    #[test]
    fn tcp_and_udp_capacity_at_reference_bandwidth() {
        assert!((cfg40(false).capacity(Direction::Dl).unwrap() - 240.0).abs() < 1e-9);
        assert!((cfg40(true).capacity(Direction::Dl).unwrap() - 244.9).abs() < 1e-9);
        let mut capped = cfg40(false);
        capped.dl_cap_mbps = Some(10.0);
        assert_eq!(capped.capacity(Direction::Dl).unwrap(), 10.0);
    }

    #[test]
    fn two_saturated_slices_split_85_21() {
        let cfg = cfg40(true);
        let s = schedule(
            &cfg,
            &shares(&[(1, 0.8), (2, 0.2)]),
            &[flow(1, 10, 1, 300.0), flow(2, 11, 2, 300.0)],
        )
        .unwrap();
        let c = 244.9;
        assert!((s.rates[&1] - 85.0 / 106.0 * c).abs() < 1e-9);
        assert!((s.rates[&2] - 21.0 / 106.0 * c).abs() < 1e-9);
        let ratio = s.rates[&1] / (s.rates[&1] + s.rates[&2]);
        assert!((ratio - 0.8019).abs() < 1e-3);
    }

    #[test]
    fn lone_slice_takes_whole_cell() {
        let s = schedule(
            &cfg40(true),
            &shares(&[(1, 0.8), (2, 0.2)]),
            &[flow(1, 10, 1, 300.0)],
        )
        .unwrap();
        assert!((s.rates[&1] - 244.9).abs() < 1e-9);
    }

    #[test]
    fn flows_outside_shares_get_nothing() {
        let s = schedule(&cfg40(false), &shares(&[(1, 0.5)]), &[flow(1, 10, 2, 5.0)]).unwrap();
        assert_eq!(s.rates[&1], 0.0);
    }

    #[test]
    fn rate_factor_scales_delivered_rate() {
        let mut f = flow(1, 10, 1, 10.0);
        f.rate_factor = 0.5;
        let s = schedule(&cfg40(false), &shares(&[(1, 1.0)]), &[f]).unwrap();
        assert!((s.rates[&1] - 5.0).abs() < 1e-9);
    }

    #[test]
    fn counters_integrate_and_kpis_average() {
        let mut cell = Cell::new(EntityId(1), 1, cfg40(false));
        cell.set_shares(SimTime::ZERO, shares(&[(1, 1.0)])).unwrap();
        cell.set_flows(SimTime::ZERO, vec![flow(1, 10, 1, 10.0)]).unwrap();
        let base = cell.counters().clone();
        cell.advance(SimTime::from_millis(50));
        cell.set_flows(SimTime::from_millis(50), vec![]).unwrap();
        cell.advance(SimTime::from_millis(100));
        assert!((cell.counters().flow_delivered_bits[&1] - 500_000.0).abs() < 1e-6);
        let ue = ReportedUe {
            ue: EntityId(10),
            scope_id: 10,
            slice: SliceId(1),
            connected: true,
        };
        let k = cell.kpis(&base, 100_000, &[ue]);
        assert_eq!(k[0].metric, Metric::DlThroughput);
        assert!((k[0].value() - 5.0).abs() < 1e-3);
        let last = k.last().unwrap();
        assert_eq!(last.metric, Metric::DlThroughput);
        assert!((last.value() - 5.0).abs() < 1e-3);
        assert_eq!(k.len(), 3 + 3 + 3);
    }

    #[test]
    fn invalid_shares_rejected() {
        let mut cell = Cell::new(EntityId(1), 1, cfg40(false));
        assert!(cell
            .set_shares(SimTime::ZERO, shares(&[(1, 0.8), (2, 0.3)]))
            .is_err());
    }
}
