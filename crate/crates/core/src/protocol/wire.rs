//! Binary message layout.
//!
//! ```text
//! header  = version(1) || type(1) || spi_i(8) || spi_r(8) || counter(4, BE)     22 octets
//! message = header || section*          section = len(2, BE) || octets
//! advert  = version(1) || type(1) || beacon_id(8) || handle(8) || reserved(4)   22 octets
//! ```
//!
//! Encrypted messages carry exactly two sections:
//! `AEAD(SK_e, 0^8 || counter, plaintext-sections, aad = header)` and a
//! 16-octet ICV `prf(SK_a, header || first section)[..16]`. Keys are the
//! sender's direction.

use std::fmt;

use thiserror::Error;

use crate::codec::{decode_sections, encode_sections, CodecError, Reader, Writer};
use crate::crypto::{dec_auth, enc_auth, prf_parts, NONCE_LEN};
use crate::key_schedule::{KeySchedule, Role};

pub const FORMAT_VERSION: u8 = 1;
pub const HEADER_LEN: usize = 22;
pub const ADVERT_LEN: usize = 22;
pub const MAX_ADVERT_LEN: usize = 31;
pub const ICV_LEN: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
#[repr(u8)]
pub enum MsgType {
    Advert = 1,
    BnonceFetchReq = 2,
    BnonceFetchResp = 3,
    KeReq = 4,
    KeResp = 5,
    T1AuthReq = 6,
    T1AuthResp = 7,
    T2Msg1 = 8,
    T2Msg2 = 9,
    FinalAuthReq = 10,
    FinalAuthResp = 11,
    Error = 12,
}

impl MsgType {
    pub const ALL: [MsgType; 12] = [
        MsgType::Advert,
        MsgType::BnonceFetchReq,
        MsgType::BnonceFetchResp,
        MsgType::KeReq,
        MsgType::KeResp,
        MsgType::T1AuthReq,
        MsgType::T1AuthResp,
        MsgType::T2Msg1,
        MsgType::T2Msg2,
        MsgType::FinalAuthReq,
        MsgType::FinalAuthResp,
        MsgType::Error,
    ];

    pub fn from_u8(v: u8) -> Option<Self> {
        Self::ALL.get(v.wrapping_sub(1) as usize).copied()
    }

    /// The role that emits this type; `None` for ADVERT and ERROR.
    pub fn sender(self) -> Option<Role> {
        use MsgType::*;
        match self {
            BnonceFetchReq | KeReq | T1AuthReq | T2Msg1 | FinalAuthReq => Some(Role::Initiator),
            BnonceFetchResp | KeResp | T1AuthResp | T2Msg2 | FinalAuthResp => Some(Role::Responder),
            Advert | Error => None,
        }
    }

    pub fn is_encrypted(self) -> bool {
        use MsgType::*;
        matches!(self, T1AuthReq | T1AuthResp | T2Msg1 | T2Msg2 | FinalAuthReq | FinalAuthResp)
    }
}

impl fmt::Display for MsgType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MsgType::Advert => "ADVERT",
            MsgType::BnonceFetchReq => "BNONCE_FETCH_REQ",
            MsgType::BnonceFetchResp => "BNONCE_FETCH_RESP",
            MsgType::KeReq => "KE_REQ",
            MsgType::KeResp => "KE_RESP",
            MsgType::T1AuthReq => "T1_AUTH_REQ",
            MsgType::T1AuthResp => "T1_AUTH_RESP",
            MsgType::T2Msg1 => "T2_MSG1",
            MsgType::T2Msg2 => "T2_MSG2",
            MsgType::FinalAuthReq => "FINAL_AUTH_REQ",
            MsgType::FinalAuthResp => "FINAL_AUTH_RESP",
            MsgType::Error => "ERROR",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("unsupported format version {0}")]
    Version(u8),
    #[error("unknown message type {0}")]
    UnknownType(u8),
    #[error("malformed: {0}")]
    Malformed(String),
    #[error("decryption failed")]
    DecryptFailed,
}

impl From<CodecError> for WireError {
    fn from(e: CodecError) -> Self {
        WireError::Malformed(e.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Header {
    pub msg_type: MsgType,
    pub spi_i: [u8; 8],
    pub spi_r: [u8; 8],
    pub counter: u32,
}

impl Header {
    pub fn new(msg_type: MsgType, spi_i: [u8; 8], spi_r: [u8; 8], counter: u32) -> Self {
        Header { msg_type, spi_i, spi_r, counter }
    }

    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut w = Writer::new();
        w.put_u8(FORMAT_VERSION).put_u8(self.msg_type as u8).put_raw(&self.spi_i).put_raw(&self.spi_r).put_u32(self.counter);
        w.into_bytes().try_into().expect("header is 22 octets")
    }
}

/// A non-advert message: header plus payload sections.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProtocolMessage {
    pub header: Header,
    pub sections: Vec<Vec<u8>>,
}

impl ProtocolMessage {
    pub fn new(header: Header, sections: Vec<Vec<u8>>) -> Self {
        ProtocolMessage { header, sections }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.header.to_bytes().to_vec();
        out.extend(encode_sections(&self.sections).expect("payload sections fit 16-bit lengths"));
        out
    }

    pub fn section(&self, i: usize) -> Result<&[u8], WireError> {
        self.sections.get(i).map(Vec::as_slice).ok_or_else(|| WireError::Malformed(format!("missing section {i}")))
    }

    pub fn expect_sections(&self, n: usize) -> Result<(), WireError> {
        if self.sections.len() == n {
            Ok(())
        } else {
            Err(WireError::Malformed(format!("expected {n} sections, got {}", self.sections.len())))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Advert {
    pub beacon_id: [u8; 8],
    pub handle: [u8; 8],
}

impl Advert {
    pub fn to_bytes(&self) -> [u8; ADVERT_LEN] {
        let mut w = Writer::new();
        w.put_u8(FORMAT_VERSION).put_u8(MsgType::Advert as u8).put_raw(&self.beacon_id).put_raw(&self.handle).put_raw(&[0; 4]);
        w.into_bytes().try_into().expect("advert is 22 octets")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum WireMessage {
    Advert(Advert),
    Message(ProtocolMessage),
}

impl WireMessage {
    pub fn msg_type(&self) -> MsgType {
        match self {
            WireMessage::Advert(_) => MsgType::Advert,
            WireMessage::Message(m) => m.header.msg_type,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        match self {
            WireMessage::Advert(a) => a.to_bytes().to_vec(),
            WireMessage::Message(m) => m.to_bytes(),
        }
    }
}

pub fn decode(bytes: &[u8]) -> Result<WireMessage, WireError> {
    let mut r = Reader::new(bytes);
    let version = r.u8()?;
    if version != FORMAT_VERSION {
        return Err(WireError::Version(version));
    }
    let t = r.u8()?;
    let msg_type = MsgType::from_u8(t).ok_or(WireError::UnknownType(t))?;
    if msg_type == MsgType::Advert {
        let beacon_id = r.array()?;
        let handle = r.array()?;
        if r.array::<4>()? != [0; 4] {
            return Err(WireError::Malformed("advert reserved octets".into()));
        }
        r.finish()?;
        return Ok(WireMessage::Advert(Advert { beacon_id, handle }));
    }
    let spi_i = r.array()?;
    let spi_r = r.array()?;
    let counter = r.u32()?;
    let sections = decode_sections(&bytes[HEADER_LEN..])?;
    Ok(WireMessage::Message(ProtocolMessage { header: Header { msg_type, spi_i, spi_r, counter }, sections }))
}

fn aead_nonce(counter: u32) -> [u8; NONCE_LEN] {
    let mut n = [0u8; NONCE_LEN];
    n[8..].copy_from_slice(&counter.to_be_bytes());
    n
}

fn icv(sk_a: &[u8; 32], header: &[u8], sealed: &[u8]) -> [u8; ICV_LEN] {
    let full = prf_parts(sk_a, &[header, sealed]);
    full[..ICV_LEN].try_into().expect("16-octet prefix")
}

/// Encrypt `plaintext` sections under the sender's direction keys.
pub fn seal(header: Header, plaintext: &[&[u8]], keys: &KeySchedule, sender: Role) -> ProtocolMessage {
    let (sk_e, sk_a) = keys.send_keys(sender);
    let hb = header.to_bytes();
    let pt = encode_sections(plaintext).expect("plaintext sections fit");
    let sealed = enc_auth(sk_e, &aead_nonce(header.counter), &pt, &hb);
    let tag = icv(sk_a.as_bytes(), &hb, &sealed);
    ProtocolMessage { header, sections: vec![sealed, tag.to_vec()] }
}

/// Verify and decrypt a message sealed by `sender`.
pub fn open(msg: &ProtocolMessage, keys: &KeySchedule, sender: Role) -> Result<Vec<Vec<u8>>, WireError> {
    if msg.sections.len() != 2 || msg.sections[1].len() != ICV_LEN {
        return Err(WireError::DecryptFailed);
    }
    let (sk_e, sk_a) = keys.send_keys(sender);
    let hb = msg.header.to_bytes();
    let expected = icv(sk_a.as_bytes(), &hb, &msg.sections[0]);
    if !crate::crypto::ct_eq(&expected, &msg.sections[1]) {
        return Err(WireError::DecryptFailed);
    }
    let pt = dec_auth(sk_e, &aead_nonce(msg.header.counter), &msg.sections[0], &hb).map_err(|_| WireError::DecryptFailed)?;
    decode_sections(&pt).map_err(|_| WireError::DecryptFailed)
}

/// Coarse reason carried by ERROR messages.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
#[repr(u8)]
pub enum ErrorClass {
    Protocol = 1,
    Auth = 2,
    Internal = 3,
}

impl ErrorClass {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            1 => Some(ErrorClass::Protocol),
            2 => Some(ErrorClass::Auth),
            3 => Some(ErrorClass::Internal),
            _ => None,
        }
    }
}

pub fn error_message(spi_i: [u8; 8], spi_r: [u8; 8], counter: u32, class: ErrorClass) -> ProtocolMessage {
    ProtocolMessage::new(Header::new(MsgType::Error, spi_i, spi_r, counter), vec![vec![class as u8]])
}
