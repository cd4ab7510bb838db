//! Wire format.
//!
//! ```text
//! header  : version u8 | msg_type u8 | txn_id u32 BE | payload_len u32 BE
//! payload : ( tag u16 BE | len u16 BE | value[len] )*
//! ```

use serde::Serialize;
use thiserror::Error;

pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 10;
pub const IE_HEADER_LEN: usize = 4;
pub const MAX_IE_LEN: usize = u16::MAX as usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[repr(u8)]
pub enum MsgType {
    SetupRequest = 1,
    SetupResponse = 2,
    SubscriptionRequest = 3,
    SubscriptionResponse = 4,
    Indication = 5,
    ControlRequest = 6,
    ControlAck = 7,
    Failure = 8,
}

impl MsgType {
    pub const ALL: [MsgType; 8] = [
        MsgType::SetupRequest,
        MsgType::SetupResponse,
        MsgType::SubscriptionRequest,
        MsgType::SubscriptionResponse,
        MsgType::Indication,
        MsgType::ControlRequest,
        MsgType::ControlAck,
        MsgType::Failure,
    ];

    pub fn from_code(code: u8) -> Option<MsgType> {
        MsgType::ALL.get(code.wrapping_sub(1) as usize).copied()
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            MsgType::SetupRequest => "SetupRequest",
            MsgType::SetupResponse => "SetupResponse",
            MsgType::SubscriptionRequest => "SubscriptionRequest",
            MsgType::SubscriptionResponse => "SubscriptionResponse",
            MsgType::Indication => "Indication",
            MsgType::ControlRequest => "ControlRequest",
            MsgType::ControlAck => "ControlAck",
            MsgType::Failure => "Failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Ie {
    pub tag: u16,
    pub value: Vec<u8>,
}

impl Ie {
    pub fn new(tag: u16, value: impl Into<Vec<u8>>) -> Self {
        Ie {
            tag,
            value: value.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct E2Message {
    pub version: u8,
    pub msg_type: MsgType,
    pub txn_id: u32,
    pub ies: Vec<Ie>,
}

impl E2Message {
    pub fn new(msg_type: MsgType, txn_id: u32) -> Self {
        E2Message {
            version: VERSION,
            msg_type,
            txn_id,
            ies: Vec::new(),
        }
    }

    pub fn with_ie(mut self, ie: Ie) -> Self {
        self.ies.push(ie);
        self
    }

    pub fn ie(&self, tag: u16) -> Option<&[u8]> {
        self.ies
            .iter()
            .find(|ie| ie.tag == tag)
            .map(|ie| ie.value.as_slice())
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN
            + self
                .ies
                .iter()
                .map(|ie| IE_HEADER_LEN + ie.value.len())
                .sum::<usize>()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("IE tag {tag} value is {len} bytes (max 65535)")]
    IeTooLarge { tag: u16, len: usize },
    #[error("encoded payload of {0} bytes does not fit a u32 length")]
    PayloadTooLarge(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("truncated: {0} bytes, header needs 10")]
    Truncated(usize),
    #[error("unsupported version {0}")]
    UnsupportedVersion(u8),
    #[error("payload_len {declared} but {actual} payload bytes present")]
    LengthMismatch { declared: u32, actual: usize },
    #[error("IE at payload offset {offset} overruns the payload")]
    IeOverrun { offset: usize },
    /// The frame is well formed but carries a message type outside the
    /// registry. The transaction id is kept so the peer can answer.
    #[error("unknown message type {code} (txn {txn_id})")]
    UnknownMsgType { code: u8, txn_id: u32 },
}

pub fn encode(msg: &E2Message) -> Result<Vec<u8>, EncodeError> {
    for ie in &msg.ies {
        if ie.value.len() > MAX_IE_LEN {
            return Err(EncodeError::IeTooLarge {
                tag: ie.tag,
                len: ie.value.len(),
            });
        }
    }
    let payload_len = msg.encoded_len() - HEADER_LEN;
    let declared =
        u32::try_from(payload_len).map_err(|_| EncodeError::PayloadTooLarge(payload_len))?;
    let mut out = Vec::with_capacity(HEADER_LEN + payload_len);
    out.push(msg.version);
    out.push(msg.msg_type.code());
    out.extend_from_slice(&msg.txn_id.to_be_bytes());
    out.extend_from_slice(&declared.to_be_bytes());
    for ie in &msg.ies {
        out.extend_from_slice(&ie.tag.to_be_bytes());
        out.extend_from_slice(&(ie.value.len() as u16).to_be_bytes());
        out.extend_from_slice(&ie.value);
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<E2Message, DecodeError> {
    if bytes.len() < HEADER_LEN {
        return Err(DecodeError::Truncated(bytes.len()));
    }
    let version = bytes[0];
    if version != VERSION {
        return Err(DecodeError::UnsupportedVersion(version));
    }
    let code = bytes[1];
    let txn_id = u32::from_be_bytes([bytes[2], bytes[3], bytes[4], bytes[5]]);
    let declared = u32::from_be_bytes([bytes[6], bytes[7], bytes[8], bytes[9]]);
    let payload = &bytes[HEADER_LEN..];
    if declared as usize != payload.len() {
        return Err(DecodeError::LengthMismatch {
            declared,
            actual: payload.len(),
        });
    }
    let mut ies = Vec::new();
    let mut off = 0usize;
    while off < payload.len() {
        if payload.len() - off < IE_HEADER_LEN {
            return Err(DecodeError::IeOverrun { offset: off });
        }
        let tag = u16::from_be_bytes([payload[off], payload[off + 1]]);
        let len = u16::from_be_bytes([payload[off + 2], payload[off + 3]]) as usize;
        let start = off + IE_HEADER_LEN;
        if payload.len() - start < len {
            return Err(DecodeError::IeOverrun { offset: off });
        }
        ies.push(Ie::new(tag, &payload[start..start + len]));
        off = start + len;
    }
    let msg_type =
        MsgType::from_code(code).ok_or(DecodeError::UnknownMsgType { code, txn_id })?;
    Ok(E2Message {
        version,
        msg_type,
        txn_id,
        ies,
    })
}
