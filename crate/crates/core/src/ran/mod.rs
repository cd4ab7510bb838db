//! Disaggregated RAN nodes (RU, DU, CU-CP, CU-UP), F1/E1 association
//! bookkeeping and UE contexts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::core5g::{NodeId, SliceId, Snssai, UeId};
use crate::sim::SimTime;

pub mod cell;
pub mod profile;

pub use cell::{Cell, CellConfig, CellCounters, FlowDemand, FlowKey};
pub use profile::StackProfile;

/// F1 setup gives up on an unanswered request after this long.
pub const F1_SETUP_TIMEOUT_US: u64 = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Ru,
    Du,
    CuCp,
    CuUp,
}

impl NodeKind {
    pub fn label(self) -> &'static str {
        match self {
            NodeKind::Ru => "ru",
            NodeKind::Du => "du",
            NodeKind::CuCp => "cu_cp",
            NodeKind::CuUp => "cu_up",
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NodeState {
    Offline,
    Connecting,
    Operational,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum UeState {
    Idle,
    RrcConnected,
    Registered,
    SessionActive,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RanError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("node {node} is a {actual}, expected {expected}")]
    WrongKind {
        node: NodeId,
        expected: NodeKind,
        actual: NodeKind,
    },
    #[error("F1 setup failed: {0}")]
    F1SetupFailure(String),
    #[error("CU-CP {0} is not operational")]
    CuCpNotOperational(NodeId),
    #[error("slice {0} is not registered")]
    UnknownSlice(SliceId),
    #[error("slice {0} already has a user plane")]
    DuplicateUserPlane(SliceId),
    #[error("DU {0} is not operational")]
    DuNotOperational(NodeId),
    #[error("no user plane for slice {0}")]
    SliceUnavailable(SliceId),
    #[error("unknown UE {0}")]
    UnknownUe(UeId),
}

#[derive(Debug, Clone, Serialize)]
pub struct RanNode {
    pub id: NodeId,
    pub name: String,
    pub kind: NodeKind,
    pub profile: StackProfile,
    pub state: NodeState,
    pub served_slices: BTreeSet<SliceId>,
    /// DU only: the RU it drives.
    pub ru: Option<NodeId>,
    /// DU and CU-UP: the controlling CU-CP.
    pub cu_cp: Option<NodeId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct F1Context {
    pub du: NodeId,
    pub cu_cp: NodeId,
    pub established_at: SimTime,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UeContext {
    pub ue_id: UeId,
    pub state: UeState,
    pub serving_du: NodeId,
    pub slice: Option<(SliceId, Snssai)>,
    pub serving_cu_up: Option<NodeId>,
    /// Radio link up; cleared by link-failure faults.
    pub radio_up: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Ran {
    nodes: BTreeMap<NodeId, RanNode>,
    f1: BTreeMap<NodeId, F1Context>,
    slices: BTreeSet<SliceId>,
    /// Slice to CU-UP. Several slices may share one CU-UP.
    user_plane: BTreeMap<SliceId, NodeId>,
    ues: BTreeMap<UeId, UeContext>,
}

impl Ran {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(
        &mut self,
        id: NodeId,
        name: impl Into<String>,
        kind: NodeKind,
        profile: StackProfile,
        state: NodeState,
    ) {
        self.nodes.insert(
            id,
            RanNode {
                id,
                name: name.into(),
                kind,
                profile,
                state,
                served_slices: BTreeSet::new(),
                ru: None,
                cu_cp: None,
            },
        );
    }

    pub fn node(&self, id: NodeId) -> Option<&RanNode> {
        self.nodes.get(&id)
    }

    pub fn node_mut(&mut self, id: NodeId) -> Option<&mut RanNode> {
        self.nodes.get_mut(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &RanNode> {
        self.nodes.values()
    }

    fn expect_kind(&self, id: NodeId, kind: NodeKind) -> Result<&RanNode, RanError> {
        let n = self.nodes.get(&id).ok_or(RanError::UnknownNode(id))?;
        if n.kind != kind {
            return Err(RanError::WrongKind {
                node: id,
                expected: kind,
                actual: n.kind,
            });
        }
        Ok(n)
    }

    /// Wire a DU to its RU and CU-CP. Topology only; F1 comes later.
    pub fn attach_du(&mut self, du: NodeId, ru: Option<NodeId>, cu_cp: NodeId) -> Result<(), RanError> {
        if let Some(r) = ru {
            self.expect_kind(r, NodeKind::Ru)?;
        }
        self.expect_kind(cu_cp, NodeKind::CuCp)?;
        self.expect_kind(du, NodeKind::Du)?;
        let n = self.nodes.get_mut(&du).expect("checked");
        n.ru = ru;
        n.cu_cp = Some(cu_cp);
        Ok(())
    }

    pub fn set_state(&mut self, id: NodeId, state: NodeState) -> Result<(), RanError> {
        let n = self.nodes.get_mut(&id).ok_or(RanError::UnknownNode(id))?;
        n.state = state;
        Ok(())
    }

    /// DU side of F1 setup: the DU starts connecting to its CU-CP. Returns
    /// the CU-CP the request goes to.
    pub fn f1_begin(&mut self, du: NodeId) -> Result<NodeId, RanError> {
        let cu_cp = self
            .expect_kind(du, NodeKind::Du)?
            .cu_cp
            .ok_or_else(|| RanError::F1SetupFailure("DU has no CU-CP configured".into()))?;
        self.f1.remove(&du);
        self.set_state(du, NodeState::Connecting)?;
        Ok(cu_cp)
    }

    /// CU-CP side: whether it answers a setup request at all.
    pub fn f1_accepts(&self, cu_cp: NodeId) -> bool {
        matches!(self.expect_kind(cu_cp, NodeKind::CuCp), Ok(n) if n.state == NodeState::Operational)
    }

    pub fn f1_complete(&mut self, du: NodeId, now: SimTime) -> Result<F1Context, RanError> {
        let n = self.expect_kind(du, NodeKind::Du)?;
        if n.state != NodeState::Connecting {
            return Err(RanError::F1SetupFailure(format!(
                "DU {du} is {:?}, not connecting",
                n.state
            )));
        }
        let cu_cp = n.cu_cp.expect("connecting DU has a CU-CP");
        let ctx = F1Context {
            du,
            cu_cp,
            established_at: now,
        };
        self.f1.insert(du, ctx);
        self.set_state(du, NodeState::Operational)?;
        Ok(ctx)
    }

    pub fn f1_context(&self, du: NodeId) -> Option<&F1Context> {
        self.f1.get(&du)
    }

    /// Take a node down. A CU-CP outage drops the F1 links it carried.
    pub fn node_down(&mut self, id: NodeId) -> Result<Vec<NodeId>, RanError> {
        self.set_state(id, NodeState::Offline)?;
        let lost: Vec<NodeId> = self
            .f1
            .values()
            .filter(|c| c.cu_cp == id || c.du == id)
            .map(|c| c.du)
            .collect();
        for du in &lost {
            self.f1.remove(du);
            if *du != id {
                self.set_state(*du, NodeState::Offline)?;
            }
        }
        Ok(lost)
    }

    pub fn register_slice(&mut self, slice: SliceId) {
        self.slices.insert(slice);
    }

    pub fn deregister_slice(&mut self, slice: SliceId) {
        self.slices.remove(&slice);
        self.user_plane.remove(&slice);
    }

    /// Instantiate a CU-UP for `slice` under `cu_cp`. `alloc` is called only
    /// once the preconditions hold and supplies the new node's id.
    pub fn deploy_cu_up(
        &mut self,
        cu_cp: NodeId,
        slice: SliceId,
        profile: StackProfile,
        alloc: impl FnOnce(&str) -> NodeId,
    ) -> Result<NodeId, RanError> {
        if self.expect_kind(cu_cp, NodeKind::CuCp)?.state != NodeState::Operational {
            return Err(RanError::CuCpNotOperational(cu_cp));
        }
        if !self.slices.contains(&slice) {
            return Err(RanError::UnknownSlice(slice));
        }
        if self.user_plane.contains_key(&slice) {
            return Err(RanError::DuplicateUserPlane(slice));
        }
        let name = format!("cu-up-{}", slice.0);
        let id = alloc(&name);
        self.add_node(id, name, NodeKind::CuUp, profile, NodeState::Operational);
        let n = self.nodes.get_mut(&id).expect("just added");
        n.cu_cp = Some(cu_cp);
        n.served_slices.insert(slice);
        self.user_plane.insert(slice, id);
        Ok(id)
    }

    /// Serve `slice` from an already deployed CU-UP.
    pub fn share_cu_up(&mut self, cu_up: NodeId, slice: SliceId) -> Result<(), RanError> {
        self.expect_kind(cu_up, NodeKind::CuUp)?;
        if !self.slices.contains(&slice) {
            return Err(RanError::UnknownSlice(slice));
        }
        if self.user_plane.contains_key(&slice) {
            return Err(RanError::DuplicateUserPlane(slice));
        }
        self.user_plane.insert(slice, cu_up);
        self.nodes
            .get_mut(&cu_up)
            .expect("checked")
            .served_slices
            .insert(slice);
        Ok(())
    }

    /// Remove the slice's user plane; the CU-UP node goes away once it
    /// serves nothing.
    pub fn remove_cu_up(&mut self, slice: SliceId) -> Option<NodeId> {
        let id = self.user_plane.remove(&slice)?;
        let n = self.nodes.get_mut(&id)?;
        n.served_slices.remove(&slice);
        if n.served_slices.is_empty() {
            self.nodes.remove(&id);
        }
        Some(id)
    }

    pub fn cu_up_for(&self, slice: SliceId) -> Option<NodeId> {
        self.user_plane.get(&slice).copied()
    }

    pub fn add_ue(&mut self, ue: UeId, serving_du: NodeId) {
        self.ues.insert(
            ue,
            UeContext {
                ue_id: ue,
                state: UeState::Idle,
                serving_du,
                slice: None,
                serving_cu_up: None,
                radio_up: true,
            },
        );
    }

    pub fn ue(&self, ue: UeId) -> Option<&UeContext> {
        self.ues.get(&ue)
    }

    pub fn ue_mut(&mut self, ue: UeId) -> Option<&mut UeContext> {
        self.ues.get_mut(&ue)
    }

    pub fn ues(&self) -> impl Iterator<Item = &UeContext> {
        self.ues.values()
    }

    /// RAN preconditions for attaching `ue` to `slice`.
    pub fn attach_check(&self, ue: UeId, slice: SliceId) -> Result<NodeId, RanError> {
        let ctx = self.ues.get(&ue).ok_or(RanError::UnknownUe(ue))?;
        let du = self.expect_kind(ctx.serving_du, NodeKind::Du)?;
        if du.state != NodeState::Operational {
            return Err(RanError::DuNotOperational(du.id));
        }
        self.cu_up_for(slice).ok_or(RanError::SliceUnavailable(slice))
    }

    pub fn set_ue_state(&mut self, ue: UeId, state: UeState) -> Result<(), RanError> {
        let ctx = self.ues.get_mut(&ue).ok_or(RanError::UnknownUe(ue))?;
        ctx.state = state;
        if state != UeState::SessionActive {
            ctx.serving_cu_up = None;
            if state == UeState::Idle {
                ctx.slice = None;
            }
        }
        Ok(())
    }

    pub fn activate_session(
        &mut self,
        ue: UeId,
        slice: SliceId,
        snssai: Snssai,
        cu_up: NodeId,
    ) -> Result<(), RanError> {
        let ctx = self.ues.get_mut(&ue).ok_or(RanError::UnknownUe(ue))?;
        ctx.state = UeState::SessionActive;
        ctx.slice = Some((slice, snssai));
        ctx.serving_cu_up = Some(cu_up);
        Ok(())
    }

    pub fn ues_on(&self, du: NodeId) -> impl Iterator<Item = &UeContext> {
        self.ues.values().filter(move |u| u.serving_du == du)
    }
}
