use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("value is not invertible modulo the given modulus")]
    NotInvertible,
    #[error("prime search exhausted after {0} candidates")]
    SearchExhausted(u64),
    #[error("invalid small-prime pool: {0}")]
    InvalidPool(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("every factor subset of the pool is already allocated")]
    PoolExhausted,
    #[error("plaintext is outside Z_n")]
    PlaintextOutOfRange,
    #[error("key mismatch: expected key {expected}, found {found}")]
    KeyMismatch { expected: u64, found: u64 },
    #[error("attribute universe is empty")]
    EmptyUniverse,
    #[error("duplicate attribute `{0}`")]
    DuplicateAttribute(String),
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("malformed access tree: {0}")]
    MalformedTree(String),
    #[error("attributes do not satisfy the access policy")]
    PolicyNotSatisfied,
    #[error("ciphertext failed integrity check")]
    Integrity,
    #[error("policy syntax error at byte {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("unknown data owner {0}")]
    UnknownDataOwner(u64),
    #[error("unknown data requester {0}")]
    UnknownDataRequester(u64),
    #[error("aggregation range is empty or out of bounds")]
    EmptyRange,
    #[error("mask for request {0} was already consumed")]
    MaskAlreadyConsumed(u64),
    #[error("no pending state for request {0}")]
    UnknownRequest(u64),
    #[error("duplicate request id {0}")]
    DuplicateRequest(u64),
    #[error("data owner {0} has no uploaded data")]
    NoData(u64),
    #[error("no data owner's sharing policy matches the requester")]
    NoMatchingOwners,
    #[error("unknown endpoint {0}")]
    UnknownEndpoint(String),
    #[error("unknown message type tag {0:#06x}")]
    UnknownMessageType(u16),
    #[error("unexpected message: {0}")]
    UnexpectedMessage(String),
    #[error("decode error: {0}")]
    Decode(String),
}

pub type Result<T> = std::result::Result<T, Error>;
