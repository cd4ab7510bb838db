//! Typed views over the IE registry.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use super::codec::Ie;
use crate::core5g::SliceId;
use crate::radio::SliceShare;

pub mod tag {
    pub const NODE_ID: u16 = 1;
    pub const RAN_FUNCTION_LIST: u16 = 2;
    pub const REPORT_PERIOD: u16 = 3;
    pub const KPI_PAYLOAD: u16 = 4;
    pub const CONTROL_ACTION: u16 = 5;
    pub const CAUSE: u16 = 6;
    /// Measurement time of an indication, or applied-at time of a control.
    pub const TIMESTAMP: u16 = 7;

    pub fn name(tag: u16) -> &'static str {
        match tag {
            NODE_ID => "NodeId",
            RAN_FUNCTION_LIST => "RanFunctionList",
            REPORT_PERIOD => "ReportPeriod",
            KPI_PAYLOAD => "KpiPayload",
            CONTROL_ACTION => "ControlAction",
            CAUSE => "Cause",
            TIMESTAMP => "Timestamp",
            _ => "Unknown",
        }
    }
}

/// RAN functions every compliant node advertises.
pub const FN_KPI_REPORT: u16 = 1;
pub const FN_SLICE_CONTROL: u16 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed {ie} IE: {reason}")]
pub struct IeError {
    pub ie: &'static str,
    pub reason: String,
}

fn malformed(ie: &'static str, reason: impl Into<String>) -> IeError {
    IeError {
        ie,
        reason: reason.into(),
    }
}

fn fixed<const N: usize>(ie: &'static str, v: &[u8]) -> Result<[u8; N], IeError> {
    v.try_into()
        .map_err(|_| malformed(ie, format!("expected {N} bytes, got {}", v.len())))
}

pub fn node_id(id: u32) -> Ie {
    Ie::new(tag::NODE_ID, id.to_be_bytes())
}

pub fn parse_node_id(v: &[u8]) -> Result<u32, IeError> {
    Ok(u32::from_be_bytes(fixed("NodeId", v)?))
}

pub fn ran_functions(ids: &[u16]) -> Ie {
    Ie::new(
        tag::RAN_FUNCTION_LIST,
        ids.iter().flat_map(|id| id.to_be_bytes()).collect::<Vec<_>>(),
    )
}

pub fn parse_ran_functions(v: &[u8]) -> Result<Vec<u16>, IeError> {
    if !v.len().is_multiple_of(2) {
        return Err(malformed("RanFunctionList", "odd length"));
    }
    Ok(v.chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect())
}

pub fn report_period(us: u32) -> Ie {
    Ie::new(tag::REPORT_PERIOD, us.to_be_bytes())
}

pub fn parse_report_period(v: &[u8]) -> Result<u32, IeError> {
    Ok(u32::from_be_bytes(fixed("ReportPeriod", v)?))
}

pub fn timestamp(us: u64) -> Ie {
    Ie::new(tag::TIMESTAMP, us.to_be_bytes())
}

pub fn parse_timestamp(v: &[u8]) -> Result<u64, IeError> {
    Ok(u64::from_be_bytes(fixed("Timestamp", v)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Cause {
    NoRanFunction,
    UnknownFunction,
    UnsupportedAction,
    PeriodBelowFloor,
    NotEstablished,
    Timeout,
    Other,
}

impl Cause {
    pub fn as_str(self) -> &'static str {
        match self {
            Cause::NoRanFunction => "no-ran-function",
            Cause::UnknownFunction => "unknown-function",
            Cause::UnsupportedAction => "unsupported-action",
            Cause::PeriodBelowFloor => "period-below-floor",
            Cause::NotEstablished => "not-established",
            Cause::Timeout => "timeout",
            Cause::Other => "other",
        }
    }

    pub fn parse(s: &str) -> Cause {
        [
            Cause::NoRanFunction,
            Cause::UnknownFunction,
            Cause::UnsupportedAction,
            Cause::PeriodBelowFloor,
            Cause::NotEstablished,
            Cause::Timeout,
        ]
        .into_iter()
        .find(|c| c.as_str() == s)
        .unwrap_or(Cause::Other)
    }
}

impl fmt::Display for Cause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn cause(c: Cause) -> Ie {
    Ie::new(tag::CAUSE, c.as_str().as_bytes())
}

pub fn parse_cause(v: &[u8]) -> Cause {
    std::str::from_utf8(v).map(Cause::parse).unwrap_or(Cause::Other)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[repr(u8)]
pub enum Metric {
    DlThroughput = 1,
    UlThroughput = 2,
    Connected = 3,
    PrbUsage = 4,
}

impl Metric {
    pub fn from_code(c: u8) -> Option<Metric> {
        match c {
            1 => Some(Metric::DlThroughput),
            2 => Some(Metric::UlThroughput),
            3 => Some(Metric::Connected),
            4 => Some(Metric::PrbUsage),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Metric::DlThroughput => "dl_mbps",
            Metric::UlThroughput => "ul_mbps",
            Metric::Connected => "connected",
            Metric::PrbUsage => "prb_usage",
        }
    }
}

/// What a KPI value refers to. Packed into 4 bytes as
/// `kind u8 | slice u8 | id u16` (kind 0 = cell, 1 = slice, 2 = UE).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Scope {
    Cell(u16),
    Slice(SliceId),
    /// A UE together with the slice its session is on (0 = none).
    Ue { ue: u16, slice: SliceId },
}

impl Scope {
    pub fn pack(self) -> u32 {
        let (kind, slice, id) = match self {
            Scope::Cell(c) => (0u32, 0u32, c as u32),
            Scope::Slice(s) => (1, s.0 as u32, 0),
            Scope::Ue { ue, slice } => (2, slice.0 as u32, ue as u32),
        };
        kind << 24 | slice << 16 | id
    }

    pub fn unpack(v: u32) -> Option<Scope> {
        let kind = (v >> 24) as u8;
        let slice = SliceId((v >> 16) as u8);
        let id = v as u16;
        match kind {
            0 if slice.0 == 0 => Some(Scope::Cell(id)),
            1 if id == 0 => Some(Scope::Slice(slice)),
            2 => Some(Scope::Ue { ue: id, slice }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct KpiEntry {
    pub metric: Metric,
    pub scope: Scope,
    /// Fixed-point, thousandths of the metric's unit.
    pub milli: i64,
}

impl KpiEntry {
    pub fn new(metric: Metric, scope: Scope, value: f64) -> Self {
        KpiEntry {
            metric,
            scope,
            milli: to_milli(value),
        }
    }

    pub fn value(&self) -> f64 {
        self.milli as f64 / 1000.0
    }
}

pub fn to_milli(v: f64) -> i64 {
    (v * 1000.0).round() as i64
}

pub fn quantize(v: f64) -> f64 {
    to_milli(v) as f64 / 1000.0
}

const KPI_ENTRY_LEN: usize = 13;

pub fn kpi_payload(entries: &[KpiEntry]) -> Ie {
    let mut v = Vec::with_capacity(2 + entries.len() * KPI_ENTRY_LEN);
    v.extend_from_slice(&(entries.len() as u16).to_be_bytes());
    for e in entries {
        v.push(e.metric as u8);
        v.extend_from_slice(&e.scope.pack().to_be_bytes());
        v.extend_from_slice(&e.milli.to_be_bytes());
    }
    Ie::new(tag::KPI_PAYLOAD, v)
}

pub fn parse_kpi_payload(v: &[u8]) -> Result<Vec<KpiEntry>, IeError> {
    const IE: &str = "KpiPayload";
    if v.len() < 2 {
        return Err(malformed(IE, "missing count"));
    }
    let n = u16::from_be_bytes([v[0], v[1]]) as usize;
    let body = &v[2..];
    if body.len() != n * KPI_ENTRY_LEN {
        return Err(malformed(
            IE,
            format!("{n} entries need {} bytes, got {}", n * KPI_ENTRY_LEN, body.len()),
        ));
    }
    body.chunks_exact(KPI_ENTRY_LEN)
        .map(|c| {
            let metric = Metric::from_code(c[0])
                .ok_or_else(|| malformed(IE, format!("metric id {}", c[0])))?;
            let raw = u32::from_be_bytes([c[1], c[2], c[3], c[4]]);
            let scope =
                Scope::unpack(raw).ok_or_else(|| malformed(IE, format!("scope {raw:#010x}")))?;
            let milli = i64::from_be_bytes(c[5..13].try_into().expect("8 bytes"));
            Ok(KpiEntry {
                metric,
                scope,
                milli,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ControlAction {
    SetSliceShares(Vec<SliceShare>),
}

const ACTION_SET_SLICE_SHARES: u8 = 1;
const PPM: f64 = 1_000_000.0;

impl ControlAction {
    pub fn name(&self) -> &'static str {
        match self {
            ControlAction::SetSliceShares(_) => "SetSliceShares",
        }
    }
}

/// `kind u8` then for SetSliceShares: `count u8 | (slice u8 | share_ppm u32)*`.
pub fn control_action(action: &ControlAction) -> Ie {
    let mut v = Vec::new();
    match action {
        ControlAction::SetSliceShares(shares) => {
            v.push(ACTION_SET_SLICE_SHARES);
            v.push(shares.len() as u8);
            for s in shares {
                v.push(s.slice_id.0);
                let ppm = (s.share * PPM).round() as u32;
                v.extend_from_slice(&ppm.to_be_bytes());
            }
        }
    }
    Ie::new(tag::CONTROL_ACTION, v)
}

pub fn parse_control_action(v: &[u8]) -> Result<ControlAction, IeError> {
    const IE: &str = "ControlAction";
    match v.first() {
        Some(&ACTION_SET_SLICE_SHARES) => {
            let n = *v.get(1).ok_or_else(|| malformed(IE, "missing count"))? as usize;
            let body = &v[2..];
            if body.len() != n * 5 {
                return Err(malformed(IE, "share list length"));
            }
            let shares = body
                .chunks_exact(5)
                .map(|c| SliceShare {
                    slice_id: SliceId(c[0]),
                    share: u32::from_be_bytes([c[1], c[2], c[3], c[4]]) as f64 / PPM,
                })
                .collect::<Vec<_>>();
            crate::radio::validate_shares(&shares).map_err(|e| malformed(IE, e.to_string()))?;
            Ok(ControlAction::SetSliceShares(shares))
        }
        Some(k) => Err(malformed(IE, format!("unknown action kind {k}"))),
        None => Err(malformed(IE, "empty")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn scope_packing() {
        let s = Scope::Ue {
            ue: 0x0102,
            slice: SliceId(3),
        };
        assert_eq!(s.pack(), 0x0203_0102);
        assert_eq!(Scope::unpack(s.pack()), Some(s));
        assert_eq!(Scope::Cell(5).pack(), 5);
        assert_eq!(Scope::Slice(SliceId(2)).pack(), 0x0102_0000);
        assert_eq!(Scope::unpack(0x0900_0000), None);
    }

    #[test]
    fn kpi_payload_roundtrip() {
        let entries = vec![
            KpiEntry::new(Metric::DlThroughput, Scope::Cell(1), 244.9),
            KpiEntry::new(Metric::Connected, Scope::Ue { ue: 7, slice: SliceId(1) }, 1.0),
        ];
        let ie = kpi_payload(&entries);
        assert_eq!(ie.value.len(), 2 + 2 * 13);
        let back = parse_kpi_payload(&ie.value).unwrap();
        assert_eq!(back, entries);
        assert_eq!(back[0].milli, 244_900);
    }

    #[test]
    fn kpi_payload_rejects_bad_count() {
        let mut ie = kpi_payload(&[KpiEntry::new(Metric::PrbUsage, Scope::Cell(1), 3.0)]);
        ie.value[1] = 2;
        assert!(parse_kpi_payload(&ie.value).is_err());
    }

    #[test]
    fn control_action_roundtrip_and_rejections() {
        let a = ControlAction::SetSliceShares(vec![
            SliceShare { slice_id: SliceId(1), share: 0.8 },
            SliceShare { slice_id: SliceId(2), share: 0.2 },
        ]);
        let ie = control_action(&a);
        assert_eq!(parse_control_action(&ie.value).unwrap(), a);
        assert!(parse_control_action(&[]).is_err());
        assert!(parse_control_action(&[9]).is_err());
        assert!(parse_control_action(&[1, 2, 1]).is_err());
        // Shares summing past 1.
        let over = control_action(&ControlAction::SetSliceShares(vec![
            SliceShare { slice_id: SliceId(1), share: 0.8 },
            SliceShare { slice_id: SliceId(2), share: 0.3 },
        ]));
        assert!(parse_control_action(&over.value).is_err());
    }

    #[test]
    fn cause_text() {
        assert_eq!(cause(Cause::NoRanFunction).value, b"no-ran-function");
        assert_eq!(parse_cause(b"unsupported-action"), Cause::UnsupportedAction);
        assert_eq!(parse_cause(&[0xff]), Cause::Other);
    }

    proptest! {
        #[test]
        fn kpi_parse_is_total(v in prop::collection::vec(any::<u8>(), 0..200)) {
            let _ = parse_kpi_payload(&v);
            let _ = parse_control_action(&v);
            let _ = parse_ran_functions(&v);
        }
    }
}
