//! E2 endpoint state machines: the RIC side tracks associations,
//! subscriptions and outstanding transactions; the node side answers
//! according to its interworking quirk.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::codec::{decode, DecodeError, E2Message, MsgType};
use super::ies::{self, tag, Cause, ControlAction, KpiEntry, FN_KPI_REPORT, FN_SLICE_CONTROL};
use crate::core5g::NodeId;

/// Near-RT granularity floor for report periods.
pub const REPORT_PERIOD_FLOOR_US: u64 = 10_000;

/// How a node's E2 agent deviates from the nominal exchange.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum E2Quirk {
    #[default]
    Normal,
    /// Answers setup with a response that carries no IEs.
    EmptyIes,
    /// Cannot decode anything the RIC sends; never replies.
    NoDecode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AssocState {
    Idle,
    SetupPending,
    Established,
    /// Setup handshake completed but the node advertised no RAN functions.
    Degraded,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct E2Association {
    pub node: NodeId,
    pub state: AssocState,
    pub ran_functions: BTreeSet<u16>,
    pub retries_left: u32,
    pub setup_attempts: u32,
    #[serde(skip)]
    setup_txn: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Subscription {
    pub sub_id: u32,
    pub node: NodeId,
    pub function_id: u16,
    pub report_period_us: u64,
    pub active: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub interval_us: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            interval_us: 2_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Pending {
    Setup { node: NodeId },
    Subscription { node: NodeId, function_id: u16, period_us: u64 },
    Control { node: NodeId },
}

#[derive(Debug, Clone, PartialEq)]
pub enum RicEvent {
    Established { node: NodeId, functions: BTreeSet<u16> },
    Degraded { node: NodeId },
    SubscriptionActive(Subscription),
    SubscriptionFailed { node: NodeId, sub_id: u32, cause: Cause },
    Indication {
        node: NodeId,
        sub_id: u32,
        measured_at: Option<u64>,
        entries: Vec<KpiEntry>,
    },
    ControlAcked { node: NodeId, txn: u32, applied_at: Option<u64> },
    ControlFailed { node: NodeId, txn: u32, cause: Cause },
    /// A response without a matching outstanding request; dropped.
    Unmatched { node: NodeId, txn: u32, msg_type: MsgType },
    Malformed { node: NodeId, error: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum SetupRetry {
    Resend(E2Message),
    TimedOut,
    /// The timer belongs to a setup that already completed.
    Stale,
}

#[derive(Debug, Clone, Default)]
pub struct RicE2 {
    pub policy: RetryPolicy,
    assocs: BTreeMap<NodeId, E2Association>,
    subs: BTreeMap<u32, Subscription>,
    pending: BTreeMap<u32, Pending>,
    next_txn: u32,
    pub unmatched: u64,
    pub indications: BTreeMap<NodeId, u64>,
}

impl RicE2 {
    pub fn new(policy: RetryPolicy) -> Self {
        RicE2 {
            policy,
            next_txn: 1,
            ..Default::default()
        }
    }

    fn txn(&mut self) -> u32 {
        let t = self.next_txn;
        self.next_txn = self.next_txn.wrapping_add(1).max(1);
        t
    }

    pub fn association(&self, node: NodeId) -> Option<&E2Association> {
        self.assocs.get(&node)
    }

    pub fn associations(&self) -> impl Iterator<Item = &E2Association> {
        self.assocs.values()
    }

    pub fn subscriptions(&self) -> impl Iterator<Item = &Subscription> {
        self.subs.values()
    }

    pub fn has_pending(&self, txn: u32) -> bool {
        self.pending.contains_key(&txn)
    }

    /// Open (or reopen) an association. Returns the SetupRequest to send and
    /// its transaction id, which the caller uses to arm the retry timer.
    pub fn start_setup(&mut self, node: NodeId, ric_id: u32) -> (u32, E2Message) {
        let txn = self.txn();
        let retries = self.policy.max_retries;
        let a = self.assocs.entry(node).or_insert_with(|| E2Association {
            node,
            state: AssocState::Idle,
            ran_functions: BTreeSet::new(),
            retries_left: retries,
            setup_attempts: 0,
            setup_txn: None,
        });
        a.state = AssocState::SetupPending;
        a.retries_left = retries;
        a.setup_attempts = 1;
        a.ran_functions.clear();
        a.setup_txn = Some(txn);
        self.pending.insert(txn, Pending::Setup { node });
        (
            txn,
            E2Message::new(MsgType::SetupRequest, txn).with_ie(ies::node_id(ric_id)),
        )
    }

    /// The retry timer armed for `txn` fired.
    pub fn setup_retry(&mut self, node: NodeId, txn: u32, ric_id: u32) -> (SetupRetry, Option<u32>) {
        let Some(a) = self.assocs.get_mut(&node) else {
            return (SetupRetry::Stale, None);
        };
        if a.state != AssocState::SetupPending || a.setup_txn != Some(txn) {
            return (SetupRetry::Stale, None);
        }
        self.pending.remove(&txn);
        if a.retries_left == 0 {
            a.state = AssocState::Idle;
            a.setup_txn = None;
            return (SetupRetry::TimedOut, None);
        }
        a.retries_left -= 1;
        a.setup_attempts += 1;
        let new_txn = self.next_txn;
        self.next_txn = self.next_txn.wrapping_add(1).max(1);
        let a = self.assocs.get_mut(&node).expect("checked above");
        a.setup_txn = Some(new_txn);
        self.pending.insert(new_txn, Pending::Setup { node });
        (
            SetupRetry::Resend(
                E2Message::new(MsgType::SetupRequest, new_txn).with_ie(ies::node_id(ric_id)),
            ),
            Some(new_txn),
        )
    }

    fn usable(&self, node: NodeId) -> Result<&E2Association, Cause> {
        let a = self.assocs.get(&node).ok_or(Cause::NotEstablished)?;
        match a.state {
            AssocState::Established => Ok(a),
            AssocState::Degraded => Err(Cause::NoRanFunction),
            _ => Err(Cause::NotEstablished),
        }
    }

    pub fn subscribe(
        &mut self,
        node: NodeId,
        function_id: u16,
        period_us: u64,
    ) -> Result<E2Message, Cause> {
        let a = self.usable(node)?;
        if !a.ran_functions.contains(&function_id) {
            return Err(Cause::UnknownFunction);
        }
        if period_us < REPORT_PERIOD_FLOOR_US || period_us > u32::MAX as u64 {
            return Err(Cause::PeriodBelowFloor);
        }
        let txn = self.txn();
        self.pending.insert(
            txn,
            Pending::Subscription {
                node,
                function_id,
                period_us,
            },
        );
        Ok(E2Message::new(MsgType::SubscriptionRequest, txn)
            .with_ie(ies::ran_functions(&[function_id]))
            .with_ie(ies::report_period(period_us as u32)))
    }

    pub fn control(
        &mut self,
        node: NodeId,
        action: &ControlAction,
    ) -> Result<(u32, E2Message), Cause> {
        let a = self.usable(node)?;
        if !a.ran_functions.contains(&FN_SLICE_CONTROL) {
            return Err(Cause::UnknownFunction);
        }
        let txn = self.txn();
        self.pending.insert(txn, Pending::Control { node });
        Ok((
            txn,
            E2Message::new(MsgType::ControlRequest, txn).with_ie(ies::control_action(action)),
        ))
    }

    /// Control transaction deadline. Returns the node if it was still open.
    pub fn control_timeout(&mut self, txn: u32) -> Option<NodeId> {
        match self.pending.get(&txn) {
            Some(Pending::Control { node }) => {
                let node = *node;
                self.pending.remove(&txn);
                Some(node)
            }
            _ => None,
        }
    }

    pub fn on_bytes(&mut self, node: NodeId, bytes: &[u8]) -> RicEvent {
        match decode(bytes) {
            Ok(msg) => self.on_message(node, msg),
            Err(e) => RicEvent::Malformed {
                node,
                error: e.to_string(),
            },
        }
    }

    pub fn on_message(&mut self, node: NodeId, msg: E2Message) -> RicEvent {
        let txn = msg.txn_id;
        if msg.msg_type == MsgType::Indication {
            return self.on_indication(node, msg);
        }
        let matched = match self.pending.get(&txn) {
            Some(p) if pending_node(p) == node && response_fits(p, msg.msg_type) => {
                self.pending.remove(&txn)
            }
            _ => None,
        };
        let Some(pending) = matched else {
            self.unmatched += 1;
            return RicEvent::Unmatched {
                node,
                txn,
                msg_type: msg.msg_type,
            };
        };
        match (pending, msg.msg_type) {
            (Pending::Setup { node }, MsgType::SetupResponse) => {
                let functions: BTreeSet<u16> = msg
                    .ie(tag::RAN_FUNCTION_LIST)
                    .and_then(|v| ies::parse_ran_functions(v).ok())
                    .unwrap_or_default()
                    .into_iter()
                    .collect();
                let a = self.assocs.get_mut(&node).expect("pending setup has association");
                a.setup_txn = None;
                a.ran_functions = functions.clone();
                if functions.is_empty() {
                    a.state = AssocState::Degraded;
                    RicEvent::Degraded { node }
                } else {
                    a.state = AssocState::Established;
                    RicEvent::Established { node, functions }
                }
            }
            (Pending::Setup { node }, _) => {
                let a = self.assocs.get_mut(&node).expect("pending setup has association");
                a.state = AssocState::Idle;
                a.setup_txn = None;
                RicEvent::ControlFailed {
                    node,
                    txn,
                    cause: failure_cause(&msg),
                }
            }
            (
                Pending::Subscription {
                    node,
                    function_id,
                    period_us,
                },
                MsgType::SubscriptionResponse,
            ) => {
                let sub = Subscription {
                    sub_id: txn,
                    node,
                    function_id,
                    report_period_us: period_us,
                    active: true,
                };
                self.subs.insert(txn, sub.clone());
                RicEvent::SubscriptionActive(sub)
            }
            (Pending::Subscription { node, .. }, _) => RicEvent::SubscriptionFailed {
                node,
                sub_id: txn,
                cause: failure_cause(&msg),
            },
            (Pending::Control { node }, MsgType::ControlAck) => RicEvent::ControlAcked {
                node,
                txn,
                applied_at: msg.ie(tag::TIMESTAMP).and_then(|v| ies::parse_timestamp(v).ok()),
            },
            (Pending::Control { node }, _) => RicEvent::ControlFailed {
                node,
                txn,
                cause: failure_cause(&msg),
            },
        }
    }

    fn on_indication(&mut self, node: NodeId, msg: E2Message) -> RicEvent {
        let sub_id = msg.txn_id;
        let known = matches!(self.subs.get(&sub_id), Some(s) if s.node == node && s.active);
        if !known {
            self.unmatched += 1;
            return RicEvent::Unmatched {
                node,
                txn: sub_id,
                msg_type: MsgType::Indication,
            };
        }
        let entries = match msg.ie(tag::KPI_PAYLOAD).map(ies::parse_kpi_payload) {
            Some(Ok(e)) => e,
            Some(Err(e)) => {
                return RicEvent::Malformed {
                    node,
                    error: e.to_string(),
                }
            }
            None => Vec::new(),
        };
        *self.indications.entry(node).or_default() += 1;
        RicEvent::Indication {
            node,
            sub_id,
            measured_at: msg.ie(tag::TIMESTAMP).and_then(|v| ies::parse_timestamp(v).ok()),
            entries,
        }
    }
}

fn pending_node(p: &Pending) -> NodeId {
    match p {
        Pending::Setup { node } | Pending::Subscription { node, .. } | Pending::Control { node } => {
            *node
        }
    }
}

fn response_fits(p: &Pending, t: MsgType) -> bool {
    matches!(
        (p, t),
        (Pending::Setup { .. }, MsgType::SetupResponse | MsgType::Failure)
            | (
                Pending::Subscription { .. },
                MsgType::SubscriptionResponse | MsgType::Failure
            )
            | (Pending::Control { .. }, MsgType::ControlAck | MsgType::Failure)
    )
}

fn failure_cause(msg: &E2Message) -> Cause {
    msg.ie(tag::CAUSE).map(ies::parse_cause).unwrap_or(Cause::Other)
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeOutput {
    Reply(E2Message),
    /// Subscription accepted: send the reply and start periodic reports.
    StartReporting {
        reply: E2Message,
        sub_id: u32,
        period_us: u64,
    },
    /// Control accepted; the ack is sent once the action takes effect.
    Apply { txn: u32, action: ControlAction },
    Silent(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeSubscription {
    pub sub_id: u32,
    pub function_id: u16,
    pub period_us: u64,
}

/// Node-side E2 agent.
#[derive(Debug, Clone)]
pub struct NodeE2 {
    pub node_id: u32,
    pub quirk: E2Quirk,
    pub subscriptions: BTreeMap<u32, NodeSubscription>,
    pub decode_failures: u64,
    /// Fault injection: silently discard control requests.
    pub drop_controls: bool,
}

impl NodeE2 {
    pub fn new(node_id: u32, quirk: E2Quirk) -> Self {
        NodeE2 {
            node_id,
            quirk,
            subscriptions: BTreeMap::new(),
            decode_failures: 0,
            drop_controls: false,
        }
    }

    pub fn functions(&self) -> &'static [u16] {
        match self.quirk {
            E2Quirk::Normal => &[FN_KPI_REPORT, FN_SLICE_CONTROL],
            _ => &[],
        }
    }

    pub fn handle(&mut self, bytes: &[u8]) -> NodeOutput {
        if self.quirk == E2Quirk::NoDecode {
            self.decode_failures += 1;
            return NodeOutput::Silent("cannot decode E2 message".into());
        }
        let msg = match decode(bytes) {
            Ok(m) => m,
            Err(DecodeError::UnknownMsgType { txn_id, .. }) => {
                return NodeOutput::Reply(failure(txn_id, Cause::Other));
            }
            Err(e) => {
                self.decode_failures += 1;
                return NodeOutput::Silent(e.to_string());
            }
        };
        let txn = msg.txn_id;
        match msg.msg_type {
            MsgType::SetupRequest => {
                let mut reply = E2Message::new(MsgType::SetupResponse, txn);
                if self.quirk == E2Quirk::Normal {
                    reply = reply
                        .with_ie(ies::node_id(self.node_id))
                        .with_ie(ies::ran_functions(self.functions()));
                }
                NodeOutput::Reply(reply)
            }
            MsgType::SubscriptionRequest => self.on_subscription(&msg),
            MsgType::ControlRequest => {
                if self.drop_controls {
                    return NodeOutput::Silent("control dropped (fault)".into());
                }
                if !self.functions().contains(&FN_SLICE_CONTROL) {
                    return NodeOutput::Reply(failure(txn, Cause::NoRanFunction));
                }
                match msg.ie(tag::CONTROL_ACTION).map(ies::parse_control_action) {
                    Some(Ok(action)) => NodeOutput::Apply { txn, action },
                    _ => NodeOutput::Reply(failure(txn, Cause::UnsupportedAction)),
                }
            }
            other => NodeOutput::Silent(format!("unexpected {}", other.name())),
        }
    }

    fn on_subscription(&mut self, msg: &E2Message) -> NodeOutput {
        let txn = msg.txn_id;
        if self.functions().is_empty() {
            return NodeOutput::Reply(failure(txn, Cause::NoRanFunction));
        }
        let function_id = msg
            .ie(tag::RAN_FUNCTION_LIST)
            .and_then(|v| ies::parse_ran_functions(v).ok())
            .and_then(|f| f.first().copied());
        let Some(function_id) = function_id.filter(|f| self.functions().contains(f)) else {
            return NodeOutput::Reply(failure(txn, Cause::UnknownFunction));
        };
        let period = msg
            .ie(tag::REPORT_PERIOD)
            .and_then(|v| ies::parse_report_period(v).ok())
            .map(u64::from);
        let Some(period_us) = period.filter(|p| *p >= REPORT_PERIOD_FLOOR_US) else {
            return NodeOutput::Reply(failure(txn, Cause::PeriodBelowFloor));
        };
        self.subscriptions.insert(
            txn,
            NodeSubscription {
                sub_id: txn,
                function_id,
                period_us,
            },
        );
        NodeOutput::StartReporting {
            reply: E2Message::new(MsgType::SubscriptionResponse, txn)
                .with_ie(ies::node_id(self.node_id)),
            sub_id: txn,
            period_us,
        }
    }

    pub fn control_ack(&self, txn: u32, applied_at_us: u64) -> E2Message {
        E2Message::new(MsgType::ControlAck, txn).with_ie(ies::timestamp(applied_at_us))
    }

    pub fn indication(&self, sub_id: u32, measured_at_us: u64, entries: &[KpiEntry]) -> E2Message {
        E2Message::new(MsgType::Indication, sub_id)
            .with_ie(ies::node_id(self.node_id))
            .with_ie(ies::timestamp(measured_at_us))
            .with_ie(ies::kpi_payload(entries))
    }
}

pub fn failure(txn: u32, c: Cause) -> E2Message {
    E2Message::new(MsgType::Failure, txn).with_ie(ies::cause(c))
}
