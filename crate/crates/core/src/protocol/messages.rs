//! Protocol messages and their payload encodings.

use crate::arith::wire::{Breakdown, Decoder, Encoder, Section};
use crate::cpabe::{parse_policy, AbeCiphertext, AccessTree, AttributeSet};
use crate::error::{Error, Result};
use crate::paillier::{PaillierCiphertext, PaillierPrivateKey, PaillierPublicKey};
use crate::vphe::VpheCiphertext;

pub mod tag {
    pub const REGISTER_POLICY: u16 = 0x0101;
    pub const UPLOAD: u16 = 0x0102;
    pub const DO_DO_REQUEST: u16 = 0x0201;
    pub const DO_DO_RESULT: u16 = 0x0202;
    pub const DRS_DO_REQUEST: u16 = 0x0301;
    pub const MASKED_SINGLE: u16 = 0x0302;
    pub const DRS_DOS_REQUEST: u16 = 0x0401;
    pub const MASKED_MULTI: u16 = 0x0402;
    pub const RESULT_KEY_REQUEST: u16 = 0x0501;
    pub const RESULT_KEY_ISSUE: u16 = 0x0502;
    pub const MASKED_RESULT: u16 = 0x0503;
    pub const RESULT_DELIVERY: u16 = 0x0504;
    pub const DENIED: u16 = 0x0601;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    RegisterPolicy { do_id: u64, ap_s: AccessTree, ap_m: AccessTree },
    Upload { do_id: u64, ciphertext: VpheCiphertext },
    DoDoRequest { do_id: u64, start: u64, end: u64 },
    DoDoResult { do_id: u64, ciphertext: VpheCiphertext },
    DrsDoRequest { dr_id: u64, do_id: u64, start: u64, end: u64 },
    /// `slot = None` selects each owner's latest upload.
    DrsDosRequest { dr_id: u64, attributes: AttributeSet, slot: Option<u64> },
    MaskedSingle { do_id: u64, ciphertext: VpheCiphertext, policy: AccessTree },
    MaskedMulti { entries: Vec<(u64, VpheCiphertext)>, policy: AccessTree },
    ResultKeyRequest,
    ResultKeyIssue { public: PaillierPublicKey, private: PaillierPrivateKey },
    MaskedResult { ciphertext: PaillierCiphertext, public: PaillierPublicKey, sealed_key: AbeCiphertext },
    ResultDelivery { ciphertext: PaillierCiphertext, public: PaillierPublicKey, sealed_key: AbeCiphertext },
    Denied { reason: Error },
}

impl Message {
    pub fn tag(&self) -> u16 {
        match self {
            Message::RegisterPolicy { .. } => tag::REGISTER_POLICY,
            Message::Upload { .. } => tag::UPLOAD,
            Message::DoDoRequest { .. } => tag::DO_DO_REQUEST,
            Message::DoDoResult { .. } => tag::DO_DO_RESULT,
            Message::DrsDoRequest { .. } => tag::DRS_DO_REQUEST,
            Message::DrsDosRequest { .. } => tag::DRS_DOS_REQUEST,
            Message::MaskedSingle { .. } => tag::MASKED_SINGLE,
            Message::MaskedMulti { .. } => tag::MASKED_MULTI,
            Message::ResultKeyRequest => tag::RESULT_KEY_REQUEST,
            Message::ResultKeyIssue { .. } => tag::RESULT_KEY_ISSUE,
            Message::MaskedResult { .. } => tag::MASKED_RESULT,
            Message::ResultDelivery { .. } => tag::RESULT_DELIVERY,
            Message::Denied { .. } => tag::DENIED,
        }
    }

    /// Serializes the payload; `vp_width` is the residue width of the system modulus.
    pub fn encode(&self, vp_width: usize) -> (Vec<u8>, Breakdown) {
        let mut enc = Encoder::new();
        match self {
            Message::RegisterPolicy { do_id, ap_s, ap_m } => {
                enc.put_u64(*do_id);
                enc.put_str(&ap_s.to_string(), Section::Auxiliary);
                enc.put_str(&ap_m.to_string(), Section::Auxiliary);
            }
            Message::Upload { do_id, ciphertext } | Message::DoDoResult { do_id, ciphertext } => {
                enc.put_u64(*do_id);
                ciphertext.encode(vp_width, &mut enc);
            }
            Message::DoDoRequest { do_id, start, end } => {
                enc.put_u64(*do_id);
                enc.put_u64(*start);
                enc.put_u64(*end);
            }
            Message::DrsDoRequest { dr_id, do_id, start, end } => {
                enc.put_u64(*dr_id);
                enc.put_u64(*do_id);
                enc.put_u64(*start);
                enc.put_u64(*end);
            }
            Message::DrsDosRequest { dr_id, attributes, slot } => {
                enc.put_u64(*dr_id);
                enc.put_u32(attributes.len() as u32);
                for attr in attributes {
                    enc.put_str(attr, Section::Auxiliary);
                }
                enc.put_u64(slot.map_or(u64::MAX, |s| s));
            }
            Message::MaskedSingle { do_id, ciphertext, policy } => {
                enc.put_u64(*do_id);
                ciphertext.encode(vp_width, &mut enc);
                enc.put_str(&policy.to_string(), Section::Auxiliary);
            }
            Message::MaskedMulti { entries, policy } => {
                enc.put_u32(entries.len() as u32);
                for (do_id, ct) in entries {
                    enc.put_u64(*do_id);
                    ct.encode(vp_width, &mut enc);
                }
                enc.put_str(&policy.to_string(), Section::Auxiliary);
            }
            Message::ResultKeyRequest => {}
            Message::ResultKeyIssue { public, private } => {
                public.encode(&mut enc);
                private.encode(&mut enc);
            }
            Message::MaskedResult { ciphertext, public, sealed_key }
            | Message::ResultDelivery { ciphertext, public, sealed_key } => {
                public.encode(&mut enc);
                ciphertext.encode(public.residue_width(), &mut enc);
                sealed_key.encode(&mut enc);
            }
            Message::Denied { reason } => {
                let (code, arg) = denial_code(reason);
                enc.put_u16(code);
                enc.put_u64(arg);
                enc.put_str(&reason.to_string(), Section::Auxiliary);
            }
        }
        enc.finish()
    }

    pub fn decode(tag_value: u16, payload: &[u8]) -> Result<Message> {
        let mut dec = Decoder::new(payload);
        let policy = |dec: &mut Decoder<'_>| -> Result<AccessTree> { parse_policy(&dec.string()?) };
        let msg = match tag_value {
            tag::REGISTER_POLICY => Message::RegisterPolicy {
                do_id: dec.u64()?,
                ap_s: policy(&mut dec)?,
                ap_m: policy(&mut dec)?,
            },
            tag::UPLOAD => Message::Upload { do_id: dec.u64()?, ciphertext: VpheCiphertext::decode(&mut dec)? },
            tag::DO_DO_RESULT => {
                Message::DoDoResult { do_id: dec.u64()?, ciphertext: VpheCiphertext::decode(&mut dec)? }
            }
            tag::DO_DO_REQUEST => Message::DoDoRequest { do_id: dec.u64()?, start: dec.u64()?, end: dec.u64()? },
            tag::DRS_DO_REQUEST => Message::DrsDoRequest {
                dr_id: dec.u64()?,
                do_id: dec.u64()?,
                start: dec.u64()?,
                end: dec.u64()?,
            },
            tag::DRS_DOS_REQUEST => {
                let dr_id = dec.u64()?;
                let count = dec.u32()?;
                let attributes = (0..count).map(|_| dec.string()).collect::<Result<_>>()?;
                let slot = match dec.u64()? {
                    u64::MAX => None,
                    s => Some(s),
                };
                Message::DrsDosRequest { dr_id, attributes, slot }
            }
            tag::MASKED_SINGLE => Message::MaskedSingle {
                do_id: dec.u64()?,
                ciphertext: VpheCiphertext::decode(&mut dec)?,
                policy: policy(&mut dec)?,
            },
            tag::MASKED_MULTI => {
                let count = dec.u32()?;
                let entries = (0..count)
                    .map(|_| Ok((dec.u64()?, VpheCiphertext::decode(&mut dec)?)))
                    .collect::<Result<_>>()?;
                Message::MaskedMulti { entries, policy: policy(&mut dec)? }
            }
            tag::RESULT_KEY_REQUEST => Message::ResultKeyRequest,
            tag::RESULT_KEY_ISSUE => Message::ResultKeyIssue {
                public: PaillierPublicKey::decode(&mut dec)?,
                private: PaillierPrivateKey::decode(&mut dec)?,
            },
            tag::MASKED_RESULT | tag::RESULT_DELIVERY => {
                let public = PaillierPublicKey::decode(&mut dec)?;
                let ciphertext = PaillierCiphertext::decode(&mut dec)?;
                let sealed_key = AbeCiphertext::decode(&mut dec)?;
                if tag_value == tag::MASKED_RESULT {
                    Message::MaskedResult { ciphertext, public, sealed_key }
                } else {
                    Message::ResultDelivery { ciphertext, public, sealed_key }
                }
            }
            tag::DENIED => {
                let code = dec.u16()?;
                let arg = dec.u64()?;
                let text = dec.string()?;
                Message::Denied { reason: denial_error(code, arg, text) }
            }
            other => return Err(Error::UnknownMessageType(other)),
        };
        dec.finish()?;
        Ok(msg)
    }
}

fn denial_code(error: &Error) -> (u16, u64) {
    match error {
        Error::NoMatchingOwners => (1, 0),
        Error::UnknownDataOwner(id) => (2, *id),
        Error::EmptyRange => (3, 0),
        Error::NoData(id) => (4, *id),
        Error::UnknownDataRequester(id) => (5, *id),
        Error::DuplicateRequest(id) => (6, *id),
        _ => (0, 0),
    }
}

fn denial_error(code: u16, arg: u64, text: String) -> Error {
    match code {
        1 => Error::NoMatchingOwners,
        2 => Error::UnknownDataOwner(arg),
        3 => Error::EmptyRange,
        4 => Error::NoData(arg),
        5 => Error::UnknownDataRequester(arg),
        6 => Error::DuplicateRequest(arg),
        _ => Error::UnexpectedMessage(text),
    }
}
