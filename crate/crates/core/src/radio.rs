//! TDD capacity model and the slice-aware PRB scheduler used by the DU.
//!
//! All functions are pure; the DU and the digital twin call the same code so
//! a twin fed exact telemetry predicts the plant exactly.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::core5g::SliceId;

pub const SYMBOLS_PER_SLOT: u32 = 14;
/// Slot duration for 30 kHz subcarrier spacing.
pub const SLOT_US: u64 = 500;

const SHARE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RadioError {
    #[error("invalid radio configuration: {0}")]
    InvalidConfig(String),
    #[error("no active slices")]
    NoActiveSlices,
    #[error("invalid slice shares: {0}")]
    InvalidShares(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Dl,
    Ul,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::Dl, Direction::Ul];

    pub fn label(self) -> &'static str {
        match self {
            Direction::Dl => "dl",
            Direction::Ul => "ul",
        }
    }
}

/// Periodic TDD pattern: full DL slots, full UL slots and one special slot
/// whose symbols are split DL / guard / UL.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TddConfig {
    #[serde(default = "default_period")]
    pub period_slots: u32,
    pub dl_slots: u32,
    pub ul_slots: u32,
    pub special_dl_symbols: u32,
    pub special_ul_symbols: u32,
}

fn default_period() -> u32 {
    10
}

impl TddConfig {
    /// 7 DL slots + 6 DL symbols, 2 UL slots + 4 UL symbols.
    pub const DL_CENTRIC: TddConfig = TddConfig {
        period_slots: 10,
        dl_slots: 7,
        ul_slots: 2,
        special_dl_symbols: 6,
        special_ul_symbols: 4,
    };

    /// 5 DL slots + 6 DL symbols, 4 UL slots + 4 UL symbols.
    pub const UL_CENTRIC: TddConfig = TddConfig {
        period_slots: 10,
        dl_slots: 5,
        ul_slots: 4,
        special_dl_symbols: 6,
        special_ul_symbols: 4,
    };

    pub fn validate(&self) -> Result<(), RadioError> {
        if self.dl_slots + self.ul_slots + 1 != self.period_slots {
            return Err(RadioError::InvalidConfig(format!(
                "dl_slots ({}) + ul_slots ({}) + 1 special slot != period_slots ({})",
                self.dl_slots, self.ul_slots, self.period_slots
            )));
        }
        if self.special_dl_symbols + self.special_ul_symbols > SYMBOLS_PER_SLOT {
            return Err(RadioError::InvalidConfig(format!(
                "special slot symbols {}+{} exceed {}",
                self.special_dl_symbols, self.special_ul_symbols, SYMBOLS_PER_SLOT
            )));
        }
        Ok(())
    }
}

impl Default for TddConfig {
    fn default() -> Self {
        TddConfig::DL_CENTRIC
    }
}

/// Fraction of air time available to each direction.
pub fn duplex_fractions(cfg: &TddConfig) -> Result<(f64, f64), RadioError> {
    cfg.validate()?;
    let sym = SYMBOLS_PER_SLOT as f64;
    let period = cfg.period_slots as f64;
    let dl = (cfg.dl_slots as f64 + cfg.special_dl_symbols as f64 / sym) / period;
    let ul = (cfg.ul_slots as f64 + cfg.special_ul_symbols as f64 / sym) / period;
    Ok((dl, ul))
}

fn duplex_fraction(cfg: &TddConfig, direction: Direction) -> Result<f64, RadioError> {
    let (dl, ul) = duplex_fractions(cfg)?;
    Ok(match direction {
        Direction::Dl => dl,
        Direction::Ul => ul,
    })
}

/// Effective spectral efficiencies, fitted to measured throughput rather
/// than derived from a link budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadioCalibration {
    /// bps/Hz of full-duplex-equivalent downlink.
    pub dl_spectral_eff: f64,
    pub ul_spectral_eff: f64,
    /// Goodput gain of UDP traffic over the TCP-style reference measurement.
    pub udp_over_tcp_factor: f64,
}

/// Reference measurement the default calibration is fitted to: 40 MHz,
/// DL-centric pattern, 240 Mbps DL and 25 Mbps UL.
pub const REFERENCE_BANDWIDTH_MHZ: f64 = 40.0;
pub const REFERENCE_DL_MBPS: f64 = 240.0;
pub const REFERENCE_UL_MBPS: f64 = 25.0;
/// Single-UE UDP downlink on the same cell.
pub const REFERENCE_UDP_DL_MBPS: f64 = 244.9;

impl RadioCalibration {
    /// Fit both efficiencies to one measured (DL, UL) throughput pair.
    pub fn from_measurements(
        cfg: &TddConfig,
        bandwidth_mhz: f64,
        dl_mbps: f64,
        ul_mbps: f64,
        udp_over_tcp_factor: f64,
    ) -> Result<Self, RadioError> {
        if bandwidth_mhz <= 0.0 {
            return Err(RadioError::InvalidConfig("bandwidth must be > 0".into()));
        }
        let (dl, ul) = duplex_fractions(cfg)?;
        if dl == 0.0 || ul == 0.0 {
            return Err(RadioError::InvalidConfig(
                "calibration pattern needs both directions".into(),
            ));
        }
        let cal = RadioCalibration {
            dl_spectral_eff: dl_mbps / (bandwidth_mhz * dl),
            ul_spectral_eff: ul_mbps / (bandwidth_mhz * ul),
            udp_over_tcp_factor,
        };
        cal.validate()?;
        Ok(cal)
    }

    pub fn validate(&self) -> Result<(), RadioError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !(ok(self.dl_spectral_eff) && ok(self.ul_spectral_eff) && ok(self.udp_over_tcp_factor))
        {
            return Err(RadioError::InvalidConfig(
                "calibration constants must be finite and > 0".into(),
            ));
        }
        Ok(())
    }

    pub fn spectral_eff(&self, direction: Direction) -> f64 {
        match direction {
            Direction::Dl => self.dl_spectral_eff,
            Direction::Ul => self.ul_spectral_eff,
        }
    }
}

impl Default for RadioCalibration {
    fn default() -> Self {
        RadioCalibration::from_measurements(
            &TddConfig::DL_CENTRIC,
            REFERENCE_BANDWIDTH_MHZ,
            REFERENCE_DL_MBPS,
            REFERENCE_UL_MBPS,
            REFERENCE_UDP_DL_MBPS / REFERENCE_DL_MBPS,
        )
        .expect("reference calibration is valid")
    }
}

/// Cell throughput in Mbps for one direction.
pub fn link_capacity(
    bandwidth_mhz: f64,
    direction: Direction,
    cfg: &TddConfig,
    cal: &RadioCalibration,
) -> Result<f64, RadioError> {
    if !(bandwidth_mhz.is_finite() && bandwidth_mhz > 0.0) {
        return Err(RadioError::InvalidConfig("bandwidth must be > 0".into()));
    }
    cal.validate()?;
    Ok(cal.spectral_eff(direction) * bandwidth_mhz * duplex_fraction(cfg, direction)?)
}

/// PRBs in the carrier: 272 at 100 MHz, 106 at 40 MHz, otherwise scaled
/// from 100 MHz and rounded.
pub fn prb_grid(bandwidth_mhz: f64) -> u32 {
    if (bandwidth_mhz - 40.0).abs() < 1e-9 {
        106
    } else if (bandwidth_mhz - 100.0).abs() < 1e-9 {
        272
    } else {
        ((272.0 * bandwidth_mhz / 100.0).round() as u32).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceShare {
    pub slice_id: SliceId,
    pub share: f64,
}

/// Shares must be in (0, 1] and sum to at most 1; the unassigned remainder is
/// idle capacity that the scheduler hands to saturated slices.
pub fn validate_shares(shares: &[SliceShare]) -> Result<(), RadioError> {
    let mut seen = std::collections::BTreeSet::new();
    for s in shares {
        if !(s.share > 0.0 && s.share <= 1.0) {
            return Err(RadioError::InvalidShares(format!(
                "share {} of slice {} outside (0,1]",
                s.share, s.slice_id
            )));
        }
        if !seen.insert(s.slice_id) {
            return Err(RadioError::InvalidShares(format!(
                "slice {} listed twice",
                s.slice_id
            )));
        }
    }
    let total: f64 = shares.iter().map(|s| s.share).sum();
    if total > 1.0 + SHARE_TOLERANCE {
        return Err(RadioError::InvalidShares(format!("shares sum to {total} > 1")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PrbAllocation {
    pub per_slice: BTreeMap<SliceId, u32>,
    pub total_prbs: u32,
}

impl PrbAllocation {
    pub fn allocated(&self) -> u32 {
        self.per_slice.values().sum()
    }

    pub fn prbs(&self, slice: SliceId) -> u32 {
        self.per_slice.get(&slice).copied().unwrap_or(0)
    }
}

/// Largest-remainder apportionment of `seats` proportional to `weights`.
/// Ties go to the earlier index.
fn largest_remainder(weights: &[f64], seats: u32) -> Vec<u32> {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 || seats == 0 {
        return vec![0; weights.len()];
    }
    let quotas: Vec<f64> = weights
        .iter()
        .map(|w| w / total * seats as f64)
        .collect();
    let mut out: Vec<u32> = quotas.iter().map(|q| q.floor() as u32).collect();
    let mut left = seats.saturating_sub(out.iter().sum());
    let mut order: Vec<usize> = (0..weights.len()).collect();
    // Stable sort keeps index order among equal remainders.
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra)
    });
    for i in order {
        if left == 0 {
            break;
        }
        out[i] += 1;
        left -= 1;
    }
    out
}

/// Whole PRBs needed to carry `demand_mbps`. The ceiling ignores excess
/// below a thousandth of a PRB so that demands read back from milli-unit
/// telemetry map to the same PRB count as the original rate.
pub fn prb_demand(demand_mbps: f64, cell_capacity_mbps: f64, total_prbs: u32) -> u32 {
    let want = demand_mbps / cell_capacity_mbps * total_prbs as f64;
    if want >= total_prbs as f64 {
        total_prbs
    } else {
        (want - PRB_EPSILON).ceil().max(0.0) as u32
    }
}

const PRB_EPSILON: f64 = 1e-3;

type Pending = (SliceId, f64, u32);

/// Guaranteed-share, work-conserving PRB allocation.
///
/// Each slice's Mbps demand is converted to whole PRBs (rounded up). Slices
/// whose demand fits inside their proportional entitlement are served in
/// full; the PRBs they leave unused are re-divided among the remaining slices
/// in proportion to share, until every remaining slice is saturated. The
/// saturated set then splits what is left by largest remainder.
pub fn allocate_prbs(
    shares: &[SliceShare],
    demands: &BTreeMap<SliceId, f64>,
    total_prbs: u32,
    cell_capacity_mbps: f64,
) -> Result<PrbAllocation, RadioError> {
    if shares.is_empty() {
        return Err(RadioError::NoActiveSlices);
    }
    validate_shares(shares)?;
    let mut per_slice: BTreeMap<SliceId, u32> =
        shares.iter().map(|s| (s.slice_id, 0)).collect();
    if cell_capacity_mbps <= 0.0 || total_prbs == 0 {
        return Ok(PrbAllocation {
            per_slice,
            total_prbs,
        });
    }

    // Integer PRB demand per slice, in share-list order.
    let mut active: Vec<(SliceId, f64, u32)> = Vec::new();
    for s in shares {
        let d = demands.get(&s.slice_id).copied().unwrap_or(0.0);
        if d.is_nan() || d < 0.0 {
            return Err(RadioError::InvalidShares(format!(
                "negative demand for slice {}",
                s.slice_id
            )));
        }
        let want = prb_demand(d, cell_capacity_mbps, total_prbs);
        if want > 0 {
            active.push((s.slice_id, s.share, want));
        }
    }

    let mut remaining = total_prbs;
    while !active.is_empty() && remaining > 0 {
        let weight: f64 = active.iter().map(|a| a.1).sum();
        let entitled = |share: f64| share / weight * remaining as f64;
        let (satisfied, saturated): (Vec<Pending>, Vec<Pending>) = active
            .iter()
            .partition(|(_, share, want)| *want as f64 <= entitled(*share) + 1e-9);
        if satisfied.is_empty() {
            let weights: Vec<f64> = saturated.iter().map(|a| a.1).collect();
            let seats = largest_remainder(&weights, remaining);
            for ((id, _, want), n) in saturated.iter().zip(seats) {
                per_slice.insert(*id, n.min(*want));
            }
            break;
        }
        for (id, _, want) in &satisfied {
            per_slice.insert(*id, *want);
            remaining -= want;
        }
        active = saturated;
    }

    Ok(PrbAllocation {
        per_slice,
        total_prbs,
    })
}

/// Capacity each slice's PRBs carry, in Mbps.
pub fn slice_throughput(alloc: &PrbAllocation, cell_capacity_mbps: f64) -> BTreeMap<SliceId, f64> {
    alloc
        .per_slice
        .iter()
        .map(|(&id, &prbs)| {
            let tp = if alloc.total_prbs == 0 {
                0.0
            } else {
                prbs as f64 / alloc.total_prbs as f64 * cell_capacity_mbps
            };
            (id, tp)
        })
        .collect()
}

/// Max-min fair split of `capacity` among `demands` (which may be
/// infinite). Never hands out more than a demand.
pub fn max_min_fair(capacity: f64, demands: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; demands.len()];
    let mut open: Vec<usize> = (0..demands.len()).filter(|&i| demands[i] > 0.0).collect();
    let mut left = capacity.max(0.0);
    while !open.is_empty() && left > 0.0 {
        let fair = left / open.len() as f64;
        let (small, big): (Vec<usize>, Vec<usize>) =
            open.iter().partition(|&&i| demands[i] <= fair);
        if small.is_empty() {
            for &i in &big {
                out[i] = fair;
            }
            break;
        }
        for &i in &small {
            out[i] = demands[i];
            left -= demands[i];
        }
        open = big;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sid(n: u8) -> SliceId {
        SliceId(n)
    }

    fn shares(v: &[f64]) -> Vec<SliceShare> {
        v.iter()
            .enumerate()
            .map(|(i, &share)| SliceShare {
                slice_id: sid(i as u8 + 1),
                share,
            })
            .collect()
    }

    fn demands(v: &[f64]) -> BTreeMap<SliceId, f64> {
        v.iter()
            .enumerate()
            .map(|(i, &d)| (sid(i as u8 + 1), d))
            .collect()
    }

    #[test]
    fn duplex_fraction_examples() {
        let (dl, ul) = duplex_fractions(&TddConfig::DL_CENTRIC).unwrap();
        assert!((dl - 0.742857).abs() < 1e-6);
        assert!((ul - 0.228571).abs() < 1e-6);
        let (dl, ul) = duplex_fractions(&TddConfig::UL_CENTRIC).unwrap();
        assert!((dl - 0.542857).abs() < 1e-6);
        assert!((ul - 0.428571).abs() < 1e-6);
        let all_dl = TddConfig {
            period_slots: 10,
            dl_slots: 9,
            ul_slots: 0,
            special_dl_symbols: 14,
            special_ul_symbols: 0,
        };
        assert_eq!(duplex_fractions(&all_dl).unwrap(), (1.0, 0.0));
    }

    #[test]
    fn invalid_tdd_rejected() {
        let bad = TddConfig {
            dl_slots: 8,
            ..TddConfig::DL_CENTRIC
        };
        assert!(matches!(duplex_fractions(&bad), Err(RadioError::InvalidConfig(_))));
        let bad = TddConfig {
            special_dl_symbols: 10,
            special_ul_symbols: 5,
            ..TddConfig::DL_CENTRIC
        };
        assert!(duplex_fractions(&bad).is_err());
    }

    #[test]
    fn default_calibration_constants() {
        let cal = RadioCalibration::default();
        assert!((cal.dl_spectral_eff - 8.0769).abs() < 1e-3);
        assert!((cal.ul_spectral_eff - 2.7344).abs() < 1e-3);
        assert!((cal.udp_over_tcp_factor - 1.0204).abs() < 1e-4);
    }

    #[test]
    fn link_capacity_reference_points() {
        let cal = RadioCalibration::default();
        let dl = link_capacity(40.0, Direction::Dl, &TddConfig::DL_CENTRIC, &cal).unwrap();
        let ul = link_capacity(40.0, Direction::Ul, &TddConfig::DL_CENTRIC, &cal).unwrap();
        assert!((dl - 240.0).abs() < 1e-9);
        assert!((ul - 25.0).abs() < 1e-9);

        let dl = link_capacity(40.0, Direction::Dl, &TddConfig::UL_CENTRIC, &cal).unwrap();
        let ul = link_capacity(40.0, Direction::Ul, &TddConfig::UL_CENTRIC, &cal).unwrap();
        assert!((dl - 172.0).abs() / 172.0 < 0.05, "dl {dl}");
        assert!((ul - 49.0).abs() / 49.0 < 0.05, "ul {ul}");

        let dl = link_capacity(100.0, Direction::Dl, &TddConfig::DL_CENTRIC, &cal).unwrap();
        assert!(dl > 500.0);
    }

    #[test]
    fn link_capacity_rejects_zero_bandwidth() {
        let cal = RadioCalibration::default();
        assert!(link_capacity(0.0, Direction::Dl, &TddConfig::DL_CENTRIC, &cal).is_err());
    }

    #[test]
    fn prb_grid_values() {
        assert_eq!(prb_grid(100.0), 272);
        assert_eq!(prb_grid(40.0), 106);
        assert_eq!(prb_grid(50.0), 136);
    }

    #[test]
    fn single_saturated_slice_takes_everything() {
        let a = allocate_prbs(&shares(&[1.0]), &demands(&[1e9]), 106, 240.0).unwrap();
        assert_eq!(a.prbs(sid(1)), 106);
    }

    #[test]
    fn eighty_twenty_both_saturated_272() {
        // 217.6 / 54.4 -> floors 217/54, the spare PRB goes to the larger
        // fractional part (.6).
        let a = allocate_prbs(&shares(&[0.8, 0.2]), &demands(&[1e9, 1e9]), 272, 600.0).unwrap();
        assert_eq!(a.prbs(sid(1)), 218);
        assert_eq!(a.prbs(sid(2)), 54);
    }

    #[test]
    fn eighty_twenty_both_saturated_106() {
        // 84.8 / 21.2 -> 84/21 + 1 to slice 1.
        let a = allocate_prbs(&shares(&[0.8, 0.2]), &demands(&[1e9, 1e9]), 106, 244.9).unwrap();
        assert_eq!(a.prbs(sid(1)), 85);
        assert_eq!(a.prbs(sid(2)), 21);
    }

    #[test]
    fn idle_slice_leaves_all_prbs_to_the_other() {
        let a = allocate_prbs(&shares(&[0.8, 0.2]), &demands(&[0.0, 1e9]), 272, 600.0).unwrap();
        assert_eq!(a.prbs(sid(1)), 0);
        assert_eq!(a.prbs(sid(2)), 272);
    }

    #[test]
    fn partial_share_budget_is_work_conserving() {
        let a = allocate_prbs(&shares(&[0.8]), &demands(&[1e9]), 106, 240.0).unwrap();
        assert_eq!(a.prbs(sid(1)), 106);
    }

    #[test]
    fn under_demanding_slice_gets_its_demand_rounded_up() {
        // 10 Mbps of a 240 Mbps / 106 PRB cell is 4.42 PRBs -> 5.
        let a = allocate_prbs(&shares(&[0.5, 0.5]), &demands(&[10.0, 1e9]), 106, 240.0).unwrap();
        assert_eq!(a.prbs(sid(1)), 5);
        assert_eq!(a.prbs(sid(2)), 101);
    }

    #[test]
    fn empty_shares_error() {
        assert_eq!(
            allocate_prbs(&[], &BTreeMap::new(), 106, 240.0),
            Err(RadioError::NoActiveSlices)
        );
    }

    #[test]
    fn oversubscribed_shares_error() {
        assert!(matches!(
            allocate_prbs(&shares(&[0.8, 0.3]), &demands(&[1.0, 1.0]), 106, 240.0),
            Err(RadioError::InvalidShares(_))
        ));
    }

    #[test]
    fn throughput_from_prbs() {
        let a = allocate_prbs(&shares(&[0.8, 0.2]), &demands(&[1e9, 1e9]), 106, 244.9).unwrap();
        let tp = slice_throughput(&a, 244.9);
        let ratio = tp[&sid(1)] / (tp[&sid(1)] + tp[&sid(2)]);
        assert!((ratio - 0.80).abs() < 0.03);
        let zero = PrbAllocation {
            per_slice: [(sid(1), 0)].into_iter().collect(),
            total_prbs: 106,
        };
        assert_eq!(slice_throughput(&zero, 244.9)[&sid(1)], 0.0);
    }

    #[test]
    fn max_min_fair_examples() {
        assert_eq!(max_min_fair(10.0, &[2.0, f64::INFINITY, f64::INFINITY]), vec![2.0, 4.0, 4.0]);
        assert_eq!(max_min_fair(10.0, &[1.0, 2.0]), vec![1.0, 2.0]);
        assert_eq!(max_min_fair(10.0, &[0.0, 20.0]), vec![0.0, 10.0]);
    }

    /// Fluid water-filling solved by bisection on the fill level: slice i
    /// receives min(want_i, level * share_i), with the level chosen so the
    /// total equals min(total, sum of wants).
    fn fluid(share: &[f64], want: &[u32], total: u32) -> Vec<f64> {
        let target = (want.iter().sum::<u32>()).min(total) as f64;
        let fill = |level: f64| -> f64 {
            share.iter().zip(want).map(|(s, &w)| (level * s).min(w as f64)).sum()
        };
        let (mut lo, mut hi) = (0.0f64, 1e7f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if fill(mid) < target { lo = mid } else { hi = mid }
        }
        share.iter().zip(want).map(|(s, &w)| (hi * s).min(w as f64)).collect()
    }

    fn share_vec() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(1u32..=20, 1..=4).prop_map(|w| {
            let total: u32 = w.iter().sum();
            w.iter().map(|&x| x as f64 / total as f64).collect()
        })
    }

    proptest! {
        #[test]
        fn allocator_rounds_fluid_water_filling(
            sh in share_vec(),
            raw in prop::collection::vec(0.0f64..400.0, 4),
            total in 1u32..300,
        ) {
            let cap = 240.0;
            let s = shares(&sh);
            let d = demands(&raw[..sh.len()]);
            let alloc = allocate_prbs(&s, &d, total, cap).unwrap();
            // Same rounding contract as the implementation: ceil, ignoring
            // excess under 1e-3 PRB.
            let want: Vec<u32> = raw[..sh.len()].iter().map(|&x| {
                let w = x / cap * total as f64;
                if w >= total as f64 { total } else { (w - 1e-3).ceil().max(0.0) as u32 }
            }).collect();
            let oracle = fluid(&sh, &want, total);
            let got: Vec<u32> = s.iter().map(|x| alloc.prbs(x.slice_id)).collect();
            prop_assert_eq!(got.iter().sum::<u32>(), want.iter().sum::<u32>().min(total));
            // Integer apportionment rounds each fluid amount down or up.
            for (g, o) in got.iter().zip(&oracle) {
                prop_assert!((*g as f64 - o).abs() < 1.0 + 1e-6, "got {:?} fluid {:?}", got, oracle);
            }
        }

        #[test]
        fn allocation_invariants(
            sh in share_vec(),
            raw in prop::collection::vec(0.0f64..400.0, 4),
            total in 1u32..300,
        ) {
            let cap = 240.0;
            let s = shares(&sh);
            let d = demands(&raw[..sh.len()]);
            let alloc = allocate_prbs(&s, &d, total, cap).unwrap();
            prop_assert!(alloc.allocated() <= total);
            let tp = slice_throughput(&alloc, cap);
            prop_assert!(tp.values().sum::<f64>() <= cap + 1e-9);
            let one_prb = cap / total as f64;
            let total_demand: f64 = raw[..sh.len()].iter().sum();
            for x in &s {
                if d[&x.slice_id] >= x.share * cap {
                    prop_assert!(alloc.prbs(x.slice_id) >= (x.share * total as f64 - 1e-9).floor() as u32);
                    prop_assert!(tp[&x.slice_id] >= x.share * cap - one_prb - 1e-9);
                }
            }
            if total_demand >= cap {
                prop_assert_eq!(alloc.allocated(), total);
            }
        }

        #[test]
        fn capacity_is_linear_in_bandwidth(bw in 1.0f64..200.0, k in 0.1f64..10.0) {
            let cal = RadioCalibration::default();
            for dir in Direction::BOTH {
                let a = link_capacity(bw, dir, &TddConfig::DL_CENTRIC, &cal).unwrap();
                let b = link_capacity(k * bw, dir, &TddConfig::DL_CENTRIC, &cal).unwrap();
                prop_assert!((b - k * a).abs() <= 1e-9 * b.max(1.0));
            }
        }
    }
}
