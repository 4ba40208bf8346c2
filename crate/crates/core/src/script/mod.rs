//! Spending-condition contracts: a small typed language with clauses, an
//! interpreter, and a compiler to a loop-free stack machine.
//!
//! ```text
//! contract LockWithPublicKey(publicKey: PublicKey, val: Value) {
//!   clause spend(sig: Signature) {
//!     verify checkSig(publicKey, sig)
//!     unlock val
//!   }
//! }
//! ```

pub mod check;
pub mod compile;
pub mod corpus;
pub mod eval;
pub mod parse;
pub mod vm;

use ripemd::Ripemd160;
use sha1::Sha1;
use sha2::{Digest, Sha256};
use std::fmt;

pub use check::{parse_and_typecheck, ScriptContract};
pub use compile::compile;
pub use eval::{eval_builtin, eval_clause};
pub use parse::{Diagnostic, Pos};
pub use vm::{encode_witness, run_program, Op, Program};

pub const NUMBER_MAX: i64 = 2_147_483_647;
pub const NUMBER_MIN: i64 = -2_147_483_647;
/// Lock times below this are block heights, the rest timestamps.
pub const LOCKTIME_THRESHOLD: u32 = 500_000_000;
/// Relative lock flag for durations counted in 512-second units.
pub const SEQUENCE_SECONDS_FLAG: u32 = 1 << 22;
pub const MAX_HASH_NESTING: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum HashKind {
    Sha256,
    Sha1,
    Ripemd160,
}

impl HashKind {
    pub fn name(self) -> &'static str {
        match self {
            HashKind::Sha256 => "Sha256",
            HashKind::Sha1 => "Sha1",
            HashKind::Ripemd160 => "Ripemd160",
        }
    }

    pub fn digest(self, data: &[u8]) -> Vec<u8> {
        match self {
            HashKind::Sha256 => Sha256::digest(data).to_vec(),
            HashKind::Sha1 => Sha1::digest(data).to_vec(),
            HashKind::Ripemd160 => Ripemd160::digest(data).to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScriptType {
    Bytes,
    PublicKey,
    Signature,
    Time,
    Duration,
    Boolean,
    Number,
    Value,
    Hash(HashKind, Box<ScriptType>),
}

impl ScriptType {
    pub fn is_hashable(&self) -> bool {
        matches!(self, ScriptType::Bytes | ScriptType::PublicKey | ScriptType::Hash(..))
    }

    /// Number of hash wrappers around the innermost type.
    pub fn hash_depth(&self) -> usize {
        match self {
            ScriptType::Hash(_, inner) => 1 + inner.hash_depth(),
            _ => 0,
        }
    }
}

impl fmt::Display for ScriptType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScriptType::Hash(kind, inner) => write!(f, "{}({inner})", kind.name()),
            other => write!(f, "{other:?}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Time {
    Height(u32),
    Timestamp(u32),
}

impl Time {
    pub fn from_raw(raw: u32) -> Self {
        if raw < LOCKTIME_THRESHOLD {
            Time::Height(raw)
        } else {
            Time::Timestamp(raw)
        }
    }

    pub fn raw(self) -> u32 {
        match self {
            Time::Height(v) | Time::Timestamp(v) => v,
        }
    }

    /// Satisfied once the chain reaches the height or time.
    pub fn reached(self, ctx: &SpendingContext) -> bool {
        match self {
            Time::Height(h) => ctx.height >= u64::from(h),
            Time::Timestamp(t) => ctx.time >= u64::from(t),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Duration {
    Blocks(u16),
    /// Always a multiple of 512.
    Seconds(u32),
}

impl Duration {
    pub fn seconds(s: u32) -> Option<Self> {
        (s % 512 == 0 && s / 512 <= u32::from(u16::MAX)).then_some(Duration::Seconds(s))
    }

    pub fn raw(self) -> u32 {
        match self {
            Duration::Blocks(n) => u32::from(n),
            Duration::Seconds(s) => SEQUENCE_SECONDS_FLAG | (s / 512),
        }
    }

    pub fn from_raw(raw: u32) -> Self {
        if raw & SEQUENCE_SECONDS_FLAG != 0 {
            Duration::Seconds((raw & 0xffff) * 512)
        } else {
            Duration::Blocks((raw & 0xffff) as u16)
        }
    }

    pub fn elapsed(self, ctx: &SpendingContext) -> bool {
        match self {
            Duration::Blocks(n) => ctx.utxo_age_blocks >= u64::from(n),
            Duration::Seconds(s) => ctx.utxo_age_seconds >= u64::from(s),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScriptValue {
    Bytes(Vec<u8>),
    PublicKey(Vec<u8>),
    Signature(Vec<u8>),
    Time(Time),
    Duration(Duration),
    Boolean(bool),
    Number(i64),
    Value(u64),
    /// A digest together with the full hash type, preimage type included.
    Hash(ScriptType, Vec<u8>),
}

impl ScriptValue {
    pub fn type_of(&self) -> ScriptType {
        match self {
            ScriptValue::Bytes(_) => ScriptType::Bytes,
            ScriptValue::PublicKey(_) => ScriptType::PublicKey,
            ScriptValue::Signature(_) => ScriptType::Signature,
            ScriptValue::Time(_) => ScriptType::Time,
            ScriptValue::Duration(_) => ScriptType::Duration,
            ScriptValue::Boolean(_) => ScriptType::Boolean,
            ScriptValue::Number(_) => ScriptType::Number,
            ScriptValue::Value(_) => ScriptType::Value,
            ScriptValue::Hash(ty, _) => ty.clone(),
        }
    }

    /// The stack-machine byte string for this value.
    pub fn encode(&self) -> Vec<u8> {
        match self {
            ScriptValue::Bytes(b) | ScriptValue::PublicKey(b) | ScriptValue::Signature(b) | ScriptValue::Hash(_, b) => {
                b.clone()
            }
            ScriptValue::Time(t) => encode_num(i64::from(t.raw())),
            ScriptValue::Duration(d) => encode_num(i64::from(d.raw())),
            ScriptValue::Boolean(b) => encode_bool(*b),
            ScriptValue::Number(n) => encode_num(*n),
            ScriptValue::Value(v) => v.to_be_bytes().to_vec(),
        }
    }

    /// Parses a textual argument of a known type: hex for byte types,
    /// decimal for numbers, `<n>s` for durations in seconds.
    pub fn parse_as(ty: &ScriptType, text: &str) -> Result<ScriptValue, String> {
        let hex = || hex::decode(text.trim_start_matches("0x")).map_err(|e| format!("bad hex `{text}`: {e}"));
        let int = |t: &str| t.parse::<i64>().map_err(|e| format!("bad number `{t}`: {e}"));
        Ok(match ty {
            ScriptType::Bytes => ScriptValue::Bytes(hex()?),
            ScriptType::PublicKey => ScriptValue::PublicKey(hex()?),
            ScriptType::Signature => ScriptValue::Signature(hex()?),
            ScriptType::Hash(..) => ScriptValue::Hash(ty.clone(), hex()?),
            ScriptType::Boolean => ScriptValue::Boolean(text.parse().map_err(|_| format!("bad boolean `{text}`"))?),
            ScriptType::Number => {
                let n = int(text)?;
                if !(NUMBER_MIN..=NUMBER_MAX).contains(&n) {
                    return Err(format!("number {n} out of range"));
                }
                ScriptValue::Number(n)
            }
            ScriptType::Value => ScriptValue::Value(text.parse().map_err(|_| format!("bad value `{text}`"))?),
            ScriptType::Time => {
                let n = int(text)?;
                ScriptValue::Time(Time::from_raw(
                    u32::try_from(n).ok().filter(|v| i64::from(*v) <= NUMBER_MAX).ok_or(format!("time {n} out of range"))?,
                ))
            }
            ScriptType::Duration => match text.strip_suffix('s') {
                Some(secs) => {
                    let s = u32::try_from(int(secs)?).map_err(|_| format!("bad duration `{text}`"))?;
                    ScriptValue::Duration(Duration::seconds(s).ok_or(format!("duration {s}s is not a multiple of 512"))?)
                }
                None => ScriptValue::Duration(Duration::Blocks(
                    u16::try_from(int(text)?).map_err(|_| format!("block count `{text}` out of range"))?,
                )),
            },
        })
    }
}

/// Everything a spend may observe.
#[derive(Clone, Debug)]
pub struct SpendingContext {
    pub height: u64,
    pub time: u64,
    pub utxo_age_blocks: u64,
    pub utxo_age_seconds: u64,
    pub tx_digest: Vec<u8>,
    pub verifier: fn(&[u8], &[u8], &[u8]) -> bool,
}

impl Default for SpendingContext {
    fn default() -> Self {
        SpendingContext {
            height: 0,
            time: 0,
            utxo_age_blocks: 0,
            utxo_age_seconds: 0,
            tx_digest: Vec::new(),
            verifier: crate::crypto::verify,
        }
    }
}

impl SpendingContext {
    pub fn check_sig(&self, key: &[u8], sig: &[u8]) -> bool {
        (self.verifier)(key, &self.tx_digest, sig)
    }
}

/// Greedy in-order matching: each signature must verify against a later
/// key than the previous signature did.
pub fn check_multisig(ctx: &SpendingContext, keys: &[Vec<u8>], sigs: &[Vec<u8>]) -> bool {
    let mut k = 0;
    for sig in sigs {
        loop {
            let Some(key) = keys.get(k) else {
                return false;
            };
            k += 1;
            if ctx.check_sig(key, sig) {
                break;
            }
        }
    }
    true
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LockReason {
    VerifyFailed,
    Malformed(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Unlocked,
    Locked(LockReason),
}

impl Verdict {
    pub fn is_unlocked(&self) -> bool {
        matches!(self, Verdict::Unlocked)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScriptError {
    #[error("unknown clause `{0}`")]
    UnknownClause(String),
    #[error("expected {expected} arguments, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("argument `{name}` expects {expected}, got {got}")]
    Type { name: String, expected: ScriptType, got: ScriptType },
}

/// Minimal little-endian sign-magnitude integer encoding; zero is empty.
pub fn encode_num(n: i64) -> Vec<u8> {
    if n == 0 {
        return Vec::new();
    }
    let neg = n < 0;
    let mut abs = n.unsigned_abs();
    let mut out = Vec::new();
    while abs > 0 {
        out.push((abs & 0xff) as u8);
        abs >>= 8;
    }
    if out.last().is_some_and(|b| b & 0x80 != 0) {
        out.push(if neg { 0x80 } else { 0 });
    } else if neg {
        *out.last_mut().expect("non-empty") |= 0x80;
    }
    out
}

/// Inverse of [`encode_num`]; rejects non-minimal or over-long encodings.
pub fn decode_num(bytes: &[u8], max_len: usize) -> Option<i64> {
    if bytes.len() > max_len {
        return None;
    }
    let Some((&last, rest)) = bytes.split_last() else {
        return Some(0);
    };
    if last & 0x7f == 0 && rest.last().map_or(true, |b| b & 0x80 == 0) {
        return None;
    }
    let mut v: i64 = 0;
    for (i, b) in bytes.iter().enumerate() {
        let b = if i == bytes.len() - 1 { b & 0x7f } else { *b };
        v |= i64::from(b) << (8 * i);
    }
    Some(if last & 0x80 != 0 { -v } else { v })
}

pub fn encode_bool(b: bool) -> Vec<u8> {
    if b {
        vec![1]
    } else {
        Vec::new()
    }
}

/// Any non-zero byte, ignoring a trailing sign bit, is true.
pub fn truthy(bytes: &[u8]) -> bool {
    bytes
        .iter()
        .enumerate()
        .any(|(i, b)| if i == bytes.len() - 1 { b & 0x7f != 0 } else { *b != 0 })
}
