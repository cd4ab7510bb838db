//! E2-style interface between RAN nodes and the near-RT RIC: a documented
//! TLV wire format plus the endpoint state machines on both sides.

pub mod codec;
pub mod endpoint;
pub mod ies;

pub use codec::{decode, encode, DecodeError, E2Message, EncodeError, Ie, MsgType};
pub use endpoint::{
    AssocState, E2Association, E2Quirk, NodeE2, NodeOutput, RetryPolicy, RicE2, RicEvent,
    SetupRetry, Subscription, REPORT_PERIOD_FLOOR_US,
};
pub use ies::{Cause, ControlAction, KpiEntry, Metric, Scope};

/// Multi-line human-readable rendering of one message.
pub fn pretty(msg: &E2Message) -> String {
    use std::fmt::Write as _;
    let mut out = format!(
        "{} v{} txn={} ies={}\n",
        msg.msg_type.name(),
        msg.version,
        msg.txn_id,
        msg.ies.len()
    );
    for ie in &msg.ies {
        let _ = write!(out, "  [{}] {} ({} B): ", ie.tag, ies::tag::name(ie.tag), ie.value.len());
        let v = &ie.value;
        let rendered = match ie.tag {
            ies::tag::NODE_ID => ies::parse_node_id(v).map(|x| x.to_string()).ok(),
            ies::tag::RAN_FUNCTION_LIST => ies::parse_ran_functions(v).map(|f| format!("{f:?}")).ok(),
            ies::tag::REPORT_PERIOD => ies::parse_report_period(v).map(|p| format!("{p} us")).ok(),
            ies::tag::TIMESTAMP => ies::parse_timestamp(v).map(|t| format!("t={t} us")).ok(),
            ies::tag::CAUSE => Some(ies::parse_cause(v).to_string()),
            ies::tag::CONTROL_ACTION => ies::parse_control_action(v).map(|a| format!("{a:?}")).ok(),
            ies::tag::KPI_PAYLOAD => ies::parse_kpi_payload(v).ok().map(|entries| {
                let mut s = format!("{} entries", entries.len());
                for e in entries {
                    let _ = write!(s, "\n      {:?} {:?} = {}", e.metric, e.scope, e.value());
                }
                s
            }),
            _ => None,
        };
        match rendered {
            Some(r) => out.push_str(&r),
            None => out.push_str(&hex::encode(v)),
        }
        out.push('\n');
    }
    out
}
