//! Minimal slice-aware 5G core: AMF registration, per-slice SMF session
//! management and per-slice UPF forwarding.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{EntityId, SimTime};

pub type NodeId = EntityId;
pub type UeId = EntityId;

/// Deployment-local slice index, assigned in registration order from 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SliceId(pub u8);

impl fmt::Display for SliceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "slice{}", self.0)
    }
}

/// Slice/service type plus 24-bit slice differentiator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Snssai {
    pub sst: u8,
    pub sd: u32,
}

impl Snssai {
    pub const SD_MAX: u32 = 0x00FF_FFFF;

    pub fn new(sst: u8, sd: u32) -> Self {
        Snssai { sst, sd }
    }

    pub fn is_valid(&self) -> bool {
        self.sd <= Self::SD_MAX
    }
}

impl fmt::Display for Snssai {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{:06x}", self.sst, self.sd)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkFunction {
    CuUp,
    Smf,
    Upf,
}

impl NetworkFunction {
    pub const ALL: [NetworkFunction; 3] =
        [NetworkFunction::CuUp, NetworkFunction::Smf, NetworkFunction::Upf];

    pub fn label(self) -> &'static str {
        match self {
            NetworkFunction::CuUp => "cu-up",
            NetworkFunction::Smf => "smf",
            NetworkFunction::Upf => "upf",
        }
    }
}

fn all_functions() -> BTreeSet<NetworkFunction> {
    NetworkFunction::ALL.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceSpec {
    pub snssai: Snssai,
    pub radio_share: f64,
    #[serde(default = "all_functions")]
    pub dedicated_functions: BTreeSet<NetworkFunction>,
    #[serde(default)]
    pub qos_label: String,
    /// Lower bound honoured by the share optimizer.
    #[serde(default)]
    pub min_share: f64,
}

impl SliceSpec {
    pub fn new(snssai: Snssai, radio_share: f64) -> Self {
        SliceSpec {
            snssai,
            radio_share,
            dedicated_functions: all_functions(),
            qos_label: String::new(),
            min_share: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.radio_share > 0.0 && self.radio_share <= 1.0) {
            return Err(format!(
                "slice {} radio_share {} outside (0,1]",
                self.snssai, self.radio_share
            ));
        }
        if !(0.0..=self.radio_share).contains(&self.min_share) {
            return Err(format!(
                "slice {} min_share {} outside [0, radio_share]",
                self.snssai, self.min_share
            ));
        }
        if !self.snssai.is_valid() {
            return Err(format!("slice differentiator {:#x} exceeds 24 bits", self.snssai.sd));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CoreError {
    #[error("AMF {0} is not operational")]
    AmfUnavailable(NodeId),
    #[error("registration rejected for {ue}: {reason}")]
    RegistrationRejected { ue: UeId, reason: String },
    #[error("{0} is not registered")]
    NotRegistered(UeId),
    #[error("slice {snssai} not allowed for {ue}")]
    SliceNotAllowed { ue: UeId, snssai: Snssai },
    #[error("no SMF serves slice {0}")]
    SmfUnavailable(Snssai),
    #[error("no UPF deployed for slice {0}")]
    UpfUnavailable(Snssai),
    #[error("{function} already deployed for slice {snssai}")]
    AlreadyDeployed {
        function: &'static str,
        snssai: Snssai,
    },
    #[error("no tunnel {tunnel} at UPF {upf}")]
    NoTunnel { upf: NodeId, tunnel: u32 },
    #[error("unknown network function {0}")]
    UnknownFunction(NodeId),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegistrationResult {
    pub ue: UeId,
    pub amf: NodeId,
    pub allowed: Vec<Snssai>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionContext {
    pub ue_id: UeId,
    pub snssai: Snssai,
    pub smf: NodeId,
    pub upf: NodeId,
    pub tunnel_id: u32,
    pub established_at: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserPacket {
    pub tunnel_id: u32,
    pub bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeliveryRecord {
    pub snssai: Snssai,
    pub bytes: u64,
    pub delivered_at: SimTime,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ByteCounters {
    pub offered: u64,
    pub delivered: u64,
    pub dropped: u64,
}

#[derive(Debug, Clone)]
pub struct Upf {
    pub id: NodeId,
    pub snssai: Snssai,
    pub proc_delay_us: u64,
    tunnels: BTreeMap<u32, UeId>,
    next_tunnel: u32,
    pub counters: ByteCounters,
}

impl Upf {
    fn new(id: NodeId, snssai: Snssai, proc_delay_us: u64) -> Self {
        Upf {
            id,
            snssai,
            proc_delay_us,
            tunnels: BTreeMap::new(),
            next_tunnel: 1,
            counters: ByteCounters::default(),
        }
    }

    pub fn tunnel_count(&self) -> usize {
        self.tunnels.len()
    }
}

#[derive(Debug, Clone)]
pub struct Amf {
    pub id: NodeId,
    pub operational: bool,
    pub supported: BTreeSet<Snssai>,
}

/// State of every core function in the deployment.
#[derive(Debug, Clone, Default)]
pub struct Core {
    amfs: BTreeMap<NodeId, Amf>,
    /// Subscribed S-NSSAIs per UE.
    subscribers: BTreeMap<UeId, Vec<Snssai>>,
    registered: BTreeMap<UeId, RegistrationResult>,
    smfs: BTreeMap<Snssai, NodeId>,
    upfs: BTreeMap<NodeId, Upf>,
    slice_upf: BTreeMap<Snssai, NodeId>,
    sessions: BTreeMap<UeId, SessionContext>,
}

impl Core {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_amf(&mut self, id: NodeId, operational: bool) {
        self.amfs.insert(
            id,
            Amf {
                id,
                operational,
                supported: BTreeSet::new(),
            },
        );
    }

    pub fn amf(&self, id: NodeId) -> Option<&Amf> {
        self.amfs.get(&id)
    }

    pub fn amfs(&self) -> impl Iterator<Item = &Amf> {
        self.amfs.values()
    }

    pub fn remove_amf(&mut self, id: NodeId) {
        self.amfs.remove(&id);
    }

    /// First AMF, by id, that serves `snssai`.
    pub fn amf_for(&self, snssai: Snssai) -> Option<NodeId> {
        self.amfs.values().find(|a| a.supported.contains(&snssai)).map(|a| a.id)
    }

    pub fn set_amf_operational(&mut self, id: NodeId, up: bool) {
        if let Some(a) = self.amfs.get_mut(&id) {
            a.operational = up;
        }
    }

    pub fn add_subscriber(&mut self, ue: UeId, allowed: Vec<Snssai>) {
        self.subscribers.insert(ue, allowed);
    }

    pub fn register_slice(&mut self, amf: NodeId, snssai: Snssai) -> Result<(), CoreError> {
        let a = self.amfs.get_mut(&amf).ok_or(CoreError::UnknownFunction(amf))?;
        a.supported.insert(snssai);
        Ok(())
    }

    pub fn deregister_slice(&mut self, snssai: Snssai) {
        for a in self.amfs.values_mut() {
            a.supported.remove(&snssai);
        }
    }

    pub fn deploy_smf(&mut self, id: NodeId, snssai: Snssai) -> Result<(), CoreError> {
        if self.smfs.contains_key(&snssai) {
            return Err(CoreError::AlreadyDeployed {
                function: "smf",
                snssai,
            });
        }
        self.smfs.insert(snssai, id);
        Ok(())
    }

    pub fn deploy_upf(
        &mut self,
        id: NodeId,
        snssai: Snssai,
        proc_delay_us: u64,
    ) -> Result<(), CoreError> {
        if self.slice_upf.contains_key(&snssai) {
            return Err(CoreError::AlreadyDeployed {
                function: "upf",
                snssai,
            });
        }
        self.slice_upf.insert(snssai, id);
        self.upfs.insert(id, Upf::new(id, snssai, proc_delay_us));
        Ok(())
    }

    /// Tear down the slice's SMF and UPF together with any sessions on them.
    pub fn remove_slice_functions(&mut self, snssai: Snssai) -> Vec<NodeId> {
        let mut removed = Vec::new();
        if let Some(smf) = self.smfs.remove(&snssai) {
            removed.push(smf);
        }
        if let Some(upf) = self.slice_upf.remove(&snssai) {
            self.upfs.remove(&upf);
            removed.push(upf);
        }
        self.sessions.retain(|_, s| s.snssai != snssai);
        removed
    }

    pub fn smf_for(&self, snssai: Snssai) -> Option<NodeId> {
        self.smfs.get(&snssai).copied()
    }

    pub fn upf_for(&self, snssai: Snssai) -> Option<NodeId> {
        self.slice_upf.get(&snssai).copied()
    }

    pub fn upf(&self, id: NodeId) -> Option<&Upf> {
        self.upfs.get(&id)
    }

    pub fn upfs(&self) -> impl Iterator<Item = &Upf> {
        self.upfs.values()
    }

    pub fn smf_count(&self) -> usize {
        self.smfs.len()
    }

    pub fn session(&self, ue: UeId) -> Option<&SessionContext> {
        self.sessions.get(&ue)
    }

    pub fn sessions(&self) -> impl Iterator<Item = &SessionContext> {
        self.sessions.values()
    }

    pub fn registration(&self, ue: UeId) -> Option<&RegistrationResult> {
        self.registered.get(&ue)
    }

    /// Admit a UE; the allowed list is its subscription restricted to the
    /// slices this AMF serves.
    pub fn register_ue(&mut self, amf: NodeId, ue: UeId) -> Result<RegistrationResult, CoreError> {
        let a = self.amfs.get(&amf).ok_or(CoreError::UnknownFunction(amf))?;
        if !a.operational {
            return Err(CoreError::AmfUnavailable(amf));
        }
        let subscribed = self
            .subscribers
            .get(&ue)
            .ok_or_else(|| CoreError::RegistrationRejected {
                ue,
                reason: "not in subscriber list".into(),
            })?;
        let allowed: Vec<Snssai> = subscribed
            .iter()
            .filter(|s| a.supported.contains(s))
            .copied()
            .collect();
        let result = RegistrationResult { ue, amf, allowed };
        self.registered.insert(ue, result.clone());
        Ok(result)
    }

    pub fn deregister_ue(&mut self, ue: UeId) {
        self.release_session(ue);
        self.registered.remove(&ue);
    }

    pub fn establish_pdu_session(
        &mut self,
        smf: NodeId,
        ue: UeId,
        snssai: Snssai,
        now: SimTime,
    ) -> Result<SessionContext, CoreError> {
        let reg = self.registered.get(&ue).ok_or(CoreError::NotRegistered(ue))?;
        if !reg.allowed.contains(&snssai) {
            return Err(CoreError::SliceNotAllowed { ue, snssai });
        }
        match self.smfs.get(&snssai) {
            Some(&s) if s == smf => {}
            _ => return Err(CoreError::SmfUnavailable(snssai)),
        }
        let upf_id = *self
            .slice_upf
            .get(&snssai)
            .ok_or(CoreError::UpfUnavailable(snssai))?;
        self.release_session(ue);
        let upf = self
            .upfs
            .get_mut(&upf_id)
            .ok_or(CoreError::UpfUnavailable(snssai))?;
        let tunnel_id = upf.next_tunnel;
        upf.next_tunnel += 1;
        upf.tunnels.insert(tunnel_id, ue);
        let ctx = SessionContext {
            ue_id: ue,
            snssai,
            smf,
            upf: upf_id,
            tunnel_id,
            established_at: now,
        };
        self.sessions.insert(ue, ctx.clone());
        Ok(ctx)
    }

    pub fn release_session(&mut self, ue: UeId) -> Option<SessionContext> {
        let ctx = self.sessions.remove(&ue)?;
        if let Some(upf) = self.upfs.get_mut(&ctx.upf) {
            upf.tunnels.remove(&ctx.tunnel_id);
        }
        Some(ctx)
    }

    /// Forward one packet through a UPF. Unknown tunnels are dropped and
    /// counted against the UPF's slice.
    pub fn forward(
        &mut self,
        upf: NodeId,
        packet: UserPacket,
        now: SimTime,
    ) -> Result<DeliveryRecord, CoreError> {
        let u = self.upfs.get_mut(&upf).ok_or(CoreError::UnknownFunction(upf))?;
        u.counters.offered += packet.bytes;
        if !u.tunnels.contains_key(&packet.tunnel_id) {
            u.counters.dropped += packet.bytes;
            return Err(CoreError::NoTunnel {
                upf,
                tunnel: packet.tunnel_id,
            });
        }
        u.counters.delivered += packet.bytes;
        Ok(DeliveryRecord {
            snssai: u.snssai,
            bytes: packet.bytes,
            delivered_at: now + u.proc_delay_us,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const AMF: NodeId = EntityId(1);
    const SMF_A: NodeId = EntityId(2);
    const UPF_A: NodeId = EntityId(3);
    const SMF_B: NodeId = EntityId(4);
    const UPF_B: NodeId = EntityId(5);
    const UE1: UeId = EntityId(10);
    const UE2: UeId = EntityId(11);

    fn a() -> Snssai {
        Snssai::new(1, 1)
    }
    fn b() -> Snssai {
        Snssai::new(1, 2)
    }

    fn two_slice_core() -> Core {
        let mut c = Core::new();
        c.add_amf(AMF, true);
        c.deploy_smf(SMF_A, a()).unwrap();
        c.deploy_upf(UPF_A, a(), 500).unwrap();
        c.deploy_smf(SMF_B, b()).unwrap();
        c.deploy_upf(UPF_B, b(), 500).unwrap();
        c.register_slice(AMF, a()).unwrap();
        c.register_slice(AMF, b()).unwrap();
        c.add_subscriber(UE1, vec![a()]);
        c.add_subscriber(UE2, vec![b()]);
        c
    }

    #[test]
    fn subscribed_ue_registers_with_its_slices() {
        let mut c = two_slice_core();
        let r = c.register_ue(AMF, UE1).unwrap();
        assert_eq!(r.allowed, vec![a()]);
        let r = c.register_ue(AMF, UE2).unwrap();
        assert_eq!(r.allowed, vec![b()]);
    }

    #[test]
    fn unknown_ue_is_rejected() {
        let mut c = two_slice_core();
        assert!(matches!(
            c.register_ue(AMF, EntityId(99)),
            Err(CoreError::RegistrationRejected { .. })
        ));
    }

    #[test]
    fn offline_amf_refuses_registration() {
        let mut c = two_slice_core();
        c.set_amf_operational(AMF, false);
        assert_eq!(c.register_ue(AMF, UE1), Err(CoreError::AmfUnavailable(AMF)));
    }

    #[test]
    fn session_lands_on_slice_upf() {
        let mut c = two_slice_core();
        c.register_ue(AMF, UE1).unwrap();
        let s = c.establish_pdu_session(SMF_A, UE1, a(), SimTime(7)).unwrap();
        assert_eq!(s.upf, UPF_A);
        assert_eq!(s.established_at, SimTime(7));
        assert_eq!(c.upf(UPF_A).unwrap().tunnel_count(), 1);
    }

    #[test]
    fn disallowed_slice_and_missing_upf() {
        let mut c = two_slice_core();
        c.register_ue(AMF, UE1).unwrap();
        assert_eq!(
            c.establish_pdu_session(SMF_B, UE1, b(), SimTime(0)),
            Err(CoreError::SliceNotAllowed { ue: UE1, snssai: b() })
        );

        let mut c = Core::new();
        c.add_amf(AMF, true);
        c.deploy_smf(SMF_A, a()).unwrap();
        c.register_slice(AMF, a()).unwrap();
        c.add_subscriber(UE1, vec![a()]);
        c.register_ue(AMF, UE1).unwrap();
        assert_eq!(
            c.establish_pdu_session(SMF_A, UE1, a(), SimTime(0)),
            Err(CoreError::UpfUnavailable(a()))
        );
    }

    #[test]
    fn tunnel_ids_unique_per_upf() {
        let mut c = two_slice_core();
        c.add_subscriber(UE2, vec![a()]);
        c.register_ue(AMF, UE1).unwrap();
        c.register_ue(AMF, UE2).unwrap();
        let s1 = c.establish_pdu_session(SMF_A, UE1, a(), SimTime(0)).unwrap();
        let s2 = c.establish_pdu_session(SMF_A, UE2, a(), SimTime(0)).unwrap();
        assert_ne!(s1.tunnel_id, s2.tunnel_id);
    }

    #[test]
    fn forward_accounts_bytes_and_drops_unknown_tunnels() {
        let mut c = two_slice_core();
        c.register_ue(AMF, UE1).unwrap();
        let s = c.establish_pdu_session(SMF_A, UE1, a(), SimTime(0)).unwrap();
        let rec = c
            .forward(
                UPF_A,
                UserPacket {
                    tunnel_id: s.tunnel_id,
                    bytes: 1500,
                },
                SimTime(100),
            )
            .unwrap();
        assert_eq!(rec.delivered_at, SimTime(600));
        assert_eq!(rec.snssai, a());
        assert_eq!(c.upf(UPF_A).unwrap().counters.delivered, 1500);

        c.release_session(UE1);
        let err = c.forward(
            UPF_A,
            UserPacket {
                tunnel_id: s.tunnel_id,
                bytes: 64,
            },
            SimTime(200),
        );
        assert!(matches!(err, Err(CoreError::NoTunnel { .. })));
        let k = &c.upf(UPF_A).unwrap().counters;
        assert_eq!(k.offered, k.delivered + k.dropped);
        assert_eq!(k.dropped, 64);
    }

    #[test]
    fn removing_slice_functions_drops_sessions() {
        let mut c = two_slice_core();
        c.register_ue(AMF, UE1).unwrap();
        c.establish_pdu_session(SMF_A, UE1, a(), SimTime(0)).unwrap();
        let removed = c.remove_slice_functions(a());
        assert_eq!(removed, vec![SMF_A, UPF_A]);
        assert!(c.session(UE1).is_none());
        assert!(c.upf_for(a()).is_none());
    }

    #[test]
    fn duplicate_upf_rejected() {
        let mut c = two_slice_core();
        assert!(matches!(
            c.deploy_upf(EntityId(50), a(), 0),
            Err(CoreError::AlreadyDeployed { function: "upf", .. })
        ));
    }
}
