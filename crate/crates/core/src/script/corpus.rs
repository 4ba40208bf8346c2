//! Sample contracts and a random case generator for differential testing
//! of the interpreter against the compiled program.

use rand::seq::SliceRandom;
use rand::Rng;

use super::{
    encode_witness, eval_clause, run_program, Duration, HashKind, ScriptContract, ScriptType, ScriptValue,
    SpendingContext, Time, Verdict,
};
use crate::crypto::KeyPair;

pub const PAY_TO_KEY: &str = "contract LockWithPublicKey(publicKey: PublicKey, val: Value) {
  clause spend(sig: Signature) {
    verify checkSig(publicKey, sig)
    unlock val
  }
}";

pub const MULTISIG_TIMELOCK: &str = "contract MultisigWithEscape(k1: PublicKey, k2: PublicKey, k3: PublicKey, deadline: Time, val: Value) {
  clause cosign(s1: Signature, s2: Signature) {
    verify checkMultiSig([k1, k2, k3], [s1, s2])
    unlock val
  }
  clause recover(s: Signature) {
    verify after(deadline)
    verify checkSig(k1, s)
    unlock val
  }
}";

pub const HASH_LOCK: &str = "contract RevealPreimage(hash: Sha256(Bytes), val: Value) {
  clause reveal(preimage: Bytes) {
    verify size(preimage) != 0
    verify sha256(preimage) == hash
    unlock val
  }
}";

pub const RELATIVE_LOCK: &str = "contract Vesting(owner: PublicKey, wait: Duration, val: Value) {
  clause claim(sig: Signature) {
    verify older(wait)
    verify checkSig(owner, sig)
    unlock val
  }
  clause sweep() {
    verify older(1024s)
    verify after(500000100)
    unlock val
  }
}";

pub const KEY_HASH: &str = "contract LockWithKeyHash(keyHash: Ripemd160(Sha256(PublicKey)), val: Value) {
  clause spend(pubKey: PublicKey, sig: Signature) {
    verify ripemd160(sha256(pubKey)) == keyHash
    verify checkSig(pubKey, sig)
    unlock val
  }
}";

pub const SIZED_SECRET: &str = "contract SizedSecret(len: Number, digest: Sha1(Bytes), val: Value) {
  clause open(secret: Bytes, tag: Bytes) {
    verify size(secret) == len
    verify sha1(secret) == digest
    verify bytes(len) != tag
    verify after(100)
    unlock val
  }
  clause fallback(n: Number) {
    verify n == 3
    verify 0xdeadbeef == 0xdeadbeef
    verify older(6)
    unlock val
  }
}";

pub const CORPUS: &[(&str, &str)] = &[
    ("pay-to-key", PAY_TO_KEY),
    ("multisig-timelock", MULTISIG_TIMELOCK),
    ("hash-lock", HASH_LOCK),
    ("relative-lock", RELATIVE_LOCK),
    ("key-hash", KEY_HASH),
    ("sized-secret", SIZED_SECRET),
];

/// Keys and preimages that random values are drawn from, so that
/// signatures and hashes match often.
pub struct Pool {
    pub keys: Vec<KeyPair>,
    pub preimages: Vec<Vec<u8>>,
}

impl Pool {
    pub fn new(seed: u64) -> Self {
        Pool {
            keys: (0..3).map(|i| KeyPair::derive("corpus", seed.wrapping_add(i))).collect(),
            preimages: vec![Vec::new(), b"abc".to_vec(), vec![7; 3], vec![0xde, 0xad, 0xbe, 0xef]],
        }
    }

    pub fn value(&self, ty: &ScriptType, digest: &[u8], rng: &mut impl Rng) -> ScriptValue {
        match ty {
            ScriptType::Bytes => {
                if rng.gen_bool(0.8) {
                    ScriptValue::Bytes(self.preimages.choose(rng).expect("non-empty").clone())
                } else {
                    ScriptValue::Bytes((0..rng.gen_range(0..6)).map(|_| rng.gen()).collect())
                }
            }
            ScriptType::PublicKey => {
                if rng.gen_bool(0.9) {
                    ScriptValue::PublicKey(self.keys.choose(rng).expect("non-empty").public_key())
                } else {
                    ScriptValue::PublicKey(vec![rng.gen(); 32])
                }
            }
            ScriptType::Signature => {
                let key = self.keys.choose(rng).expect("non-empty");
                match rng.gen_range(0..10) {
                    0 => ScriptValue::Signature(vec![rng.gen(); 64]),
                    1 => ScriptValue::Signature(key.sign(b"some other message")),
                    _ => ScriptValue::Signature(key.sign(digest)),
                }
            }
            ScriptType::Time => ScriptValue::Time(Time::from_raw(if rng.gen_bool(0.5) {
                rng.gen_range(95..=105)
            } else {
                rng.gen_range(500_000_095..=500_000_105)
            })),
            ScriptType::Duration => ScriptValue::Duration(if rng.gen_bool(0.5) {
                Duration::Blocks(rng.gen_range(3..=9))
            } else {
                Duration::Seconds(512 * rng.gen_range(1..=3))
            }),
            ScriptType::Boolean => ScriptValue::Boolean(rng.gen()),
            ScriptType::Number => ScriptValue::Number(rng.gen_range(-2..=5)),
            ScriptType::Value => ScriptValue::Value(rng.gen_range(0..1_000_000)),
            ScriptType::Hash(kind, inner) => {
                if rng.gen_bool(0.2) {
                    let len = if *kind == HashKind::Sha256 { 32 } else { 20 };
                    return ScriptValue::Hash(ty.clone(), (0..len).map(|_| rng.gen()).collect());
                }
                let pre = self.value(inner, digest, rng);
                ScriptValue::Hash(ty.clone(), kind.digest(&pre.encode()))
            }
        }
    }
}

/// Context near the time thresholds used by [`Pool::value`].
pub fn random_context(rng: &mut impl Rng) -> SpendingContext {
    SpendingContext {
        height: rng.gen_range(93..=107),
        time: rng.gen_range(500_000_093..=500_000_107),
        utxo_age_blocks: rng.gen_range(2..=10),
        utxo_age_seconds: rng.gen_range(0..=2048),
        tx_digest: (0..8).map(|_| rng.gen()).collect(),
        verifier: crate::crypto::verify,
    }
}

/// One randomized spend attempt.
#[derive(Clone, Debug)]
pub struct Case {
    pub params: Vec<ScriptValue>,
    pub clause: usize,
    pub args: Vec<ScriptValue>,
    pub ctx: SpendingContext,
}

pub fn random_case(contract: &ScriptContract, pool: &Pool, rng: &mut impl Rng) -> Case {
    let ctx = random_context(rng);
    let params = contract
        .params
        .iter()
        .map(|p| pool.value(&p.ty, &ctx.tx_digest, rng))
        .collect();
    let clause = rng.gen_range(0..contract.clauses.len());
    let args = contract.clauses[clause]
        .params
        .iter()
        .map(|p| pool.value(&p.ty, &ctx.tx_digest, rng))
        .collect();
    Case {
        params,
        clause,
        args,
        ctx,
    }
}

/// Interpreter and VM verdicts for one case.
pub fn both_verdicts(contract: &ScriptContract, program: &super::Program, case: &Case) -> (Verdict, Verdict) {
    let name = &contract.clauses[case.clause].name;
    let direct = eval_clause(contract, &case.params, name, &case.args, &case.ctx).expect("generated args typecheck");
    let prog = program.instantiate(&case.params).expect("all parameters supplied");
    let vm = run_program(&prog, &encode_witness(case.clause, &case.args), &case.ctx);
    (direct, vm)
}
