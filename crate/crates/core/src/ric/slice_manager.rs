//! Slice manager xApp: admission control and the ordered orchestration
//! that brings a slice up end to end.
//!
//! The manager only keeps state. The simulation executes each step against
//! the RAN, the core and the E2 interface and reports back.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::core5g::{NodeId, SliceId, SliceSpec, Snssai};
use crate::radio::SliceShare;
use crate::sim::SimTime;

const SHARE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum OrchStep {
    DeployCuUp,
    DeploySmf,
    DeployUpf,
    SetSliceShares,
    RegisterAmf,
}

impl OrchStep {
    pub const ORDER: [OrchStep; 5] = [
        OrchStep::DeployCuUp,
        OrchStep::DeploySmf,
        OrchStep::DeployUpf,
        OrchStep::SetSliceShares,
        OrchStep::RegisterAmf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OrchStep::DeployCuUp => "DeployCuUp",
            OrchStep::DeploySmf => "DeploySmf",
            OrchStep::DeployUpf => "DeployUpf",
            OrchStep::SetSliceShares => "SetSliceShares",
            OrchStep::RegisterAmf => "RegisterAmf",
        }
    }
}

impl fmt::Display for OrchStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SliceManagerError {
    #[error("admission rejected: shares would total {total:.3}")]
    AdmissionRejected { total: f64 },
    #[error("slice {0} already exists")]
    DuplicateSlice(Snssai),
    #[error("invalid slice spec: {0}")]
    InvalidSpec(String),
    #[error("slice id space exhausted")]
    TooManySlices,
    #[error("orchestration failed at {step}: {reason}")]
    OrchestrationFailed { step: OrchStep, reason: String },
    #[error("unknown slice {0}")]
    UnknownSlice(Snssai),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum SliceStatus {
    Provisioning,
    Ready,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SliceRecord {
    pub id: SliceId,
    pub spec: SliceSpec,
    pub status: SliceStatus,
    pub cu_up: Option<NodeId>,
    pub smf: Option<NodeId>,
    pub upf: Option<NodeId>,
    pub requested_at: SimTime,
    pub ready_at: Option<SimTime>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Orchestration {
    pub op: u32,
    pub snssai: Snssai,
    pub next: usize,
    pub completed: Vec<OrchStep>,
    /// E2 control transactions still awaiting an ack.
    pub awaiting: BTreeSet<u32>,
    /// Nodes that acknowledged the new shares.
    pub acked: BTreeSet<NodeId>,
}

impl Orchestration {
    pub fn step(&self) -> Option<OrchStep> {
        OrchStep::ORDER.get(self.next).copied()
    }
}

#[derive(Debug, Clone, Default)]
pub struct SliceManager {
    slices: BTreeMap<Snssai, SliceRecord>,
    ops: BTreeMap<u32, Orchestration>,
    next_slice: u8,
    next_op: u32,
}

impl SliceManager {
    pub fn new() -> Self {
        SliceManager {
            next_slice: 1,
            next_op: 1,
            ..Default::default()
        }
    }

    pub fn slices(&self) -> impl Iterator<Item = &SliceRecord> {
        self.slices.values()
    }

    pub fn slice(&self, snssai: Snssai) -> Option<&SliceRecord> {
        self.slices.get(&snssai)
    }

    pub fn slice_mut(&mut self, snssai: Snssai) -> Option<&mut SliceRecord> {
        self.slices.get_mut(&snssai)
    }

    pub fn by_id(&self, id: SliceId) -> Option<&SliceRecord> {
        self.slices.values().find(|r| r.id == id)
    }

    pub fn op(&self, op: u32) -> Option<&Orchestration> {
        self.ops.get(&op)
    }

    pub fn op_mut(&mut self, op: u32) -> Option<&mut Orchestration> {
        self.ops.get_mut(&op)
    }

    /// Total share of slices that are ready or being provisioned.
    pub fn committed(&self) -> f64 {
        self.slices
            .values()
            .filter(|r| r.status != SliceStatus::Failed)
            .map(|r| r.spec.radio_share)
            .sum()
    }

    /// Admission control. On success the slice is recorded as provisioning
    /// and an orchestration handle is returned.
    pub fn admit(&mut self, spec: SliceSpec, now: SimTime) -> Result<(u32, SliceId), SliceManagerError> {
        spec.validate().map_err(SliceManagerError::InvalidSpec)?;
        if let Some(r) = self.slices.get(&spec.snssai) {
            if r.status != SliceStatus::Failed {
                return Err(SliceManagerError::DuplicateSlice(spec.snssai));
            }
        }
        let total = self.committed() + spec.radio_share;
        if total > 1.0 + SHARE_TOLERANCE {
            return Err(SliceManagerError::AdmissionRejected { total });
        }
        let id = match self.slices.get(&spec.snssai) {
            Some(r) => r.id,
            None => {
                if self.next_slice == u8::MAX {
                    return Err(SliceManagerError::TooManySlices);
                }
                let id = SliceId(self.next_slice);
                self.next_slice += 1;
                id
            }
        };
        let op = self.next_op;
        self.next_op += 1;
        let snssai = spec.snssai;
        self.slices.insert(
            snssai,
            SliceRecord {
                id,
                spec,
                status: SliceStatus::Provisioning,
                cu_up: None,
                smf: None,
                upf: None,
                requested_at: now,
                ready_at: None,
                failure: None,
            },
        );
        self.ops.insert(
            op,
            Orchestration {
                op,
                snssai,
                next: 0,
                completed: Vec::new(),
                awaiting: BTreeSet::new(),
                acked: BTreeSet::new(),
            },
        );
        Ok((op, id))
    }

    /// Mark the current step done. Returns the next step, or `None` when
    /// the slice is now ready.
    pub fn complete_step(&mut self, op: u32, now: SimTime) -> Option<OrchStep> {
        let o = self.ops.get_mut(&op)?;
        let step = o.step()?;
        o.completed.push(step);
        o.next += 1;
        if let Some(next) = o.step() {
            return Some(next);
        }
        let snssai = o.snssai;
        self.ops.remove(&op);
        if let Some(r) = self.slices.get_mut(&snssai) {
            r.status = SliceStatus::Ready;
            r.ready_at = Some(now);
        }
        None
    }

    /// Abort an orchestration. Returns the steps to undo, most recent first.
    pub fn fail(&mut self, op: u32, reason: impl Into<String>) -> Option<(Orchestration, SliceManagerError)> {
        let o = self.ops.remove(&op)?;
        let step = o.step().unwrap_or(OrchStep::RegisterAmf);
        let reason = reason.into();
        if let Some(r) = self.slices.get_mut(&o.snssai) {
            r.status = SliceStatus::Failed;
            r.failure = Some(format!("{step}: {reason}"));
            r.cu_up = None;
            r.smf = None;
            r.upf = None;
        }
        Some((o, SliceManagerError::OrchestrationFailed { step, reason }))
    }

    /// Op waiting on control transaction `txn`.
    pub fn op_for_txn(&self, txn: u32) -> Option<u32> {
        self.ops
            .values()
            .find(|o| o.awaiting.contains(&txn))
            .map(|o| o.op)
    }

    /// Share vector the RAN should run: every slice not failed, plus the
    /// one being provisioned by `including`, in slice id order.
    pub fn shares(&self, including: Option<Snssai>) -> Vec<SliceShare> {
        let mut v: Vec<SliceShare> = self
            .slices
            .values()
            .filter(|r| r.status == SliceStatus::Ready || Some(r.spec.snssai) == including)
            .map(|r| SliceShare {
                slice_id: r.id,
                share: r.spec.radio_share,
            })
            .collect();
        v.sort_by_key(|s| s.slice_id);
        v
    }

    /// Replace shares of existing slices. The resulting vector must still
    /// sum to at most 1.
    pub fn update_shares(&mut self, updates: &[(Snssai, f64)]) -> Result<Vec<SliceShare>, SliceManagerError> {
        let mut next: BTreeMap<Snssai, f64> = self
            .slices
            .values()
            .filter(|r| r.status != SliceStatus::Failed)
            .map(|r| (r.spec.snssai, r.spec.radio_share))
            .collect();
        for (s, v) in updates {
            if !next.contains_key(s) {
                return Err(SliceManagerError::UnknownSlice(*s));
            }
            if !(*v > 0.0 && *v <= 1.0) {
                return Err(SliceManagerError::InvalidSpec(format!("share {v} outside (0,1]")));
            }
            next.insert(*s, *v);
        }
        let total: f64 = next.values().sum();
        if total > 1.0 + SHARE_TOLERANCE {
            return Err(SliceManagerError::AdmissionRejected { total });
        }
        for (s, v) in updates {
            let r = self.slices.get_mut(s).expect("checked");
            r.spec.radio_share = *v;
            r.spec.min_share = r.spec.min_share.min(*v);
        }
        Ok(self.shares(None))
    }

    pub fn min_shares(&self) -> BTreeMap<SliceId, f64> {
        self.slices
            .values()
            .filter(|r| r.status == SliceStatus::Ready)
            .map(|r| (r.id, r.spec.min_share))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(sd: u32, share: f64) -> SliceSpec {
        SliceSpec::new(Snssai::new(1, sd), share)
    }

    #[test]
    fn admission_respects_share_budget() {
        let mut m = SliceManager::new();
        let t = SimTime::ZERO;
        let (_, a) = m.admit(spec(1, 0.8), t).unwrap();
        assert_eq!(a, SliceId(1));
        assert!(matches!(
            m.admit(spec(2, 0.3), t),
            Err(SliceManagerError::AdmissionRejected { .. })
        ));
        let (_, b) = m.admit(spec(2, 0.2), t).unwrap();
        assert_eq!(b, SliceId(2));
        assert!(matches!(
            m.admit(spec(2, 0.0001), t),
            Err(SliceManagerError::DuplicateSlice(_))
        ));
    }

    #[test]
    fn steps_run_in_order_then_ready() {
        let mut m = SliceManager::new();
        let (op, _) = m.admit(spec(1, 0.5), SimTime::ZERO).unwrap();
        let mut seen = vec![m.op(op).unwrap().step().unwrap()];
        while let Some(s) = m.complete_step(op, SimTime::from_millis(10)) {
            seen.push(s);
        }
        assert_eq!(seen, OrchStep::ORDER.to_vec());
        let r = m.slice(Snssai::new(1, 1)).unwrap();
        assert_eq!(r.status, SliceStatus::Ready);
        assert_eq!(r.ready_at, Some(SimTime::from_millis(10)));
        assert_eq!(m.shares(None).len(), 1);
    }

    #[test]
    fn failure_reports_step_and_frees_budget() {
        let mut m = SliceManager::new();
        let (op, _) = m.admit(spec(1, 0.9), SimTime::ZERO).unwrap();
        m.complete_step(op, SimTime::ZERO);
        m.complete_step(op, SimTime::ZERO);
        m.complete_step(op, SimTime::ZERO);
        let (o, err) = m.fail(op, "control timeout").unwrap();
        assert_eq!(
            o.completed,
            vec![OrchStep::DeployCuUp, OrchStep::DeploySmf, OrchStep::DeployUpf]
        );
        assert_eq!(
            err,
            SliceManagerError::OrchestrationFailed {
                step: OrchStep::SetSliceShares,
                reason: "control timeout".into()
            }
        );
        assert_eq!(m.committed(), 0.0);
        // Re-admission after a failure reuses the id.
        let (_, id) = m.admit(spec(1, 0.9), SimTime::ZERO).unwrap();
        assert_eq!(id, SliceId(1));
    }

    #[test]
    fn share_updates_are_budgeted() {
        let mut m = SliceManager::new();
        for (sd, share) in [(1, 0.5), (2, 0.5)] {
            let (op, _) = m.admit(spec(sd, share), SimTime::ZERO).unwrap();
            while m.complete_step(op, SimTime::ZERO).is_some() {}
        }
        assert!(m.update_shares(&[(Snssai::new(1, 1), 0.6)]).is_err());
        let v = m
            .update_shares(&[(Snssai::new(1, 1), 0.8), (Snssai::new(1, 2), 0.2)])
            .unwrap();
        assert_eq!(v.iter().map(|s| s.share).collect::<Vec<_>>(), vec![0.8, 0.2]);
    }
}
