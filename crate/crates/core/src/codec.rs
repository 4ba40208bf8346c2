//! Canonical binary encoding.
//!
//! Every hashed or signed structure is serialized with a fixed bincode
//! configuration: big-endian fixed-width integers, u64 length prefixes and
//! declaration-ordered fields. Maps are always `BTreeMap`, so the encoding is
//! a pure function of the value.

use bincode::Options;
use serde::{de::DeserializeOwned, Serialize};

use crate::crypto::{sha256, Hash32};

#[derive(Debug, thiserror::Error)]
#[error("canonical decoding failed: {0}")]
pub struct CodecError(#[from] bincode::Error);

fn options() -> impl Options {
    bincode::DefaultOptions::new()
        .with_big_endian()
        .with_fixint_encoding()
        .reject_trailing_bytes()
}

pub fn encode<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    options()
        .serialize(value)
        .expect("canonical encoding of in-memory values is infallible")
}

pub fn decode<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, CodecError> {
    Ok(options().deserialize(bytes)?)
}

pub fn digest<T: Serialize + ?Sized>(value: &T) -> Hash32 {
    sha256(&encode(value))
}
