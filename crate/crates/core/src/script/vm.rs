use super::{check_multisig, decode_num, encode_bool, encode_num, truthy, Duration, HashKind, LockReason, ScriptValue};
use super::{SpendingContext, Time, Verdict};

pub const MAX_STACK: usize = 1000;
pub const MAX_ITEM: usize = 520;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Op {
    Push(Vec<u8>),
    /// Placeholder for a contract parameter, filled by [`Program::instantiate`].
    Param(u8),
    /// Copies the item `n` below the top.
    Pick(u8),
    Dup,
    Drop,
    Equal,
    Not,
    Size,
    Hash(HashKind),
    CheckSig,
    CheckMultiSig,
    CheckLockTime,
    CheckSequence,
    Verify,
    If,
    Else,
    EndIf,
    Fail,
}

impl Op {
    fn code(&self) -> u8 {
        match self {
            Op::Push(_) => 0x01,
            Op::Param(_) => 0x02,
            Op::Pick(_) => 0x10,
            Op::Dup => 0x11,
            Op::Drop => 0x12,
            Op::Equal => 0x20,
            Op::Not => 0x21,
            Op::Size => 0x30,
            Op::Hash(HashKind::Sha256) => 0x31,
            Op::Hash(HashKind::Sha1) => 0x32,
            Op::Hash(HashKind::Ripemd160) => 0x33,
            Op::CheckSig => 0x40,
            Op::CheckMultiSig => 0x41,
            Op::CheckLockTime => 0x42,
            Op::CheckSequence => 0x43,
            Op::Verify => 0x50,
            Op::If => 0x60,
            Op::Else => 0x61,
            Op::EndIf => 0x62,
            Op::Fail => 0x6a,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Program {
    pub ops: Vec<Op>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProgramError {
    #[error("bad hex: {0}")]
    Hex(String),
    #[error("unknown opcode {0:#04x} at byte {1}")]
    UnknownOp(u8, usize),
    #[error("truncated program at byte {0}")]
    Truncated(usize),
    #[error("push of {0} bytes exceeds the item limit")]
    TooLong(usize),
    #[error("expected {expected} parameters, got {got}")]
    Params { expected: usize, got: usize },
}

impl Program {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for op in &self.ops {
            out.push(op.code());
            match op {
                Op::Push(d) => {
                    out.extend((d.len() as u16).to_be_bytes());
                    out.extend(d);
                }
                Op::Param(i) | Op::Pick(i) => out.push(*i),
                _ => {}
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ProgramError> {
        let mut ops = Vec::new();
        let mut i = 0;
        while i < bytes.len() {
            let at = i;
            let code = bytes[i];
            i += 1;
            let operand = |i: usize| bytes.get(i).copied().ok_or(ProgramError::Truncated(at));
            let op = match code {
                0x01 => {
                    let len = usize::from(u16::from_be_bytes([operand(i)?, operand(i + 1)?]));
                    if len > MAX_ITEM {
                        return Err(ProgramError::TooLong(len));
                    }
                    let data = bytes.get(i + 2..i + 2 + len).ok_or(ProgramError::Truncated(at))?;
                    i += 2 + len;
                    Op::Push(data.to_vec())
                }
                0x02 | 0x10 => {
                    let n = operand(i)?;
                    i += 1;
                    if code == 0x02 {
                        Op::Param(n)
                    } else {
                        Op::Pick(n)
                    }
                }
                0x11 => Op::Dup,
                0x12 => Op::Drop,
                0x20 => Op::Equal,
                0x21 => Op::Not,
                0x30 => Op::Size,
                0x31 => Op::Hash(HashKind::Sha256),
                0x32 => Op::Hash(HashKind::Sha1),
                0x33 => Op::Hash(HashKind::Ripemd160),
                0x40 => Op::CheckSig,
                0x41 => Op::CheckMultiSig,
                0x42 => Op::CheckLockTime,
                0x43 => Op::CheckSequence,
                0x50 => Op::Verify,
                0x60 => Op::If,
                0x61 => Op::Else,
                0x62 => Op::EndIf,
                0x6a => Op::Fail,
                other => return Err(ProgramError::UnknownOp(other, at)),
            };
            ops.push(op);
        }
        Ok(Program { ops })
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.to_bytes())
    }

    pub fn from_hex(s: &str) -> Result<Self, ProgramError> {
        let bytes = hex::decode(s.trim()).map_err(|e| ProgramError::Hex(e.to_string()))?;
        Self::from_bytes(&bytes)
    }

    pub fn param_count(&self) -> usize {
        self.ops
            .iter()
            .filter_map(|op| match op {
                Op::Param(i) => Some(usize::from(*i) + 1),
                _ => None,
            })
            .max()
            .unwrap_or(0)
    }

    /// Replaces parameter placeholders with pushes of the given values.
    pub fn instantiate(&self, params: &[ScriptValue]) -> Result<Program, ProgramError> {
        if params.len() < self.param_count() {
            return Err(ProgramError::Params {
                expected: self.param_count(),
                got: params.len(),
            });
        }
        let ops = self
            .ops
            .iter()
            .map(|op| match op {
                Op::Param(i) => Op::Push(params[usize::from(*i)].encode()),
                other => other.clone(),
            })
            .collect();
        Ok(Program { ops })
    }
}

/// Clause arguments bottom to top, then the clause index on top.
pub fn encode_witness(clause: usize, args: &[ScriptValue]) -> Vec<Vec<u8>> {
    let mut w: Vec<Vec<u8>> = args.iter().map(ScriptValue::encode).collect();
    w.push(encode_num(clause as i64));
    w
}

struct Machine<'a> {
    stack: Vec<Vec<u8>>,
    ctx: &'a SpendingContext,
}

type Step = Result<(), LockReason>;

fn malformed(msg: &str) -> LockReason {
    LockReason::Malformed(msg.to_string())
}

impl Machine<'_> {
    fn pop(&mut self) -> Result<Vec<u8>, LockReason> {
        self.stack.pop().ok_or_else(|| malformed("stack underflow"))
    }

    fn push(&mut self, item: Vec<u8>) -> Step {
        if self.stack.len() >= MAX_STACK {
            return Err(malformed("stack overflow"));
        }
        if item.len() > MAX_ITEM {
            return Err(malformed("item too large"));
        }
        self.stack.push(item);
        Ok(())
    }

    fn pop_num(&mut self) -> Result<i64, LockReason> {
        let item = self.pop()?;
        decode_num(&item, 4).ok_or_else(|| malformed("bad number"))
    }

    fn pop_u32(&mut self) -> Result<u32, LockReason> {
        u32::try_from(self.pop_num()?).map_err(|_| malformed("negative lock value"))
    }

    fn pop_n(&mut self) -> Result<Vec<Vec<u8>>, LockReason> {
        let n = usize::try_from(self.pop_num()?).map_err(|_| malformed("negative count"))?;
        if n > self.stack.len() {
            return Err(malformed("stack underflow"));
        }
        Ok(self.stack.split_off(self.stack.len() - n))
    }

    fn exec(&mut self, op: &Op) -> Step {
        match op {
            Op::Push(d) => self.push(d.clone()),
            Op::Param(_) => Err(malformed("uninstantiated parameter")),
            Op::Pick(n) => {
                let n = usize::from(*n);
                let item = self
                    .stack
                    .len()
                    .checked_sub(n + 1)
                    .map(|i| self.stack[i].clone())
                    .ok_or_else(|| malformed("stack underflow"))?;
                self.push(item)
            }
            Op::Dup => {
                let top = self.stack.last().cloned().ok_or_else(|| malformed("stack underflow"))?;
                self.push(top)
            }
            Op::Drop => self.pop().map(drop),
            Op::Equal => {
                let (b, a) = (self.pop()?, self.pop()?);
                self.push(encode_bool(a == b))
            }
            Op::Not => {
                let a = self.pop()?;
                self.push(encode_bool(!truthy(&a)))
            }
            Op::Size => {
                let a = self.pop()?;
                self.push(encode_num(a.len() as i64))
            }
            Op::Hash(kind) => {
                let a = self.pop()?;
                self.push(kind.digest(&a))
            }
            Op::CheckSig => {
                let (sig, key) = (self.pop()?, self.pop()?);
                let ok = self.ctx.check_sig(&key, &sig);
                self.push(encode_bool(ok))
            }
            Op::CheckMultiSig => {
                let sigs = self.pop_n()?;
                let keys = self.pop_n()?;
                if sigs.len() > keys.len() {
                    return Err(malformed("more signatures than keys"));
                }
                let ok = check_multisig(self.ctx, &keys, &sigs);
                self.push(encode_bool(ok))
            }
            Op::CheckLockTime => {
                let t = Time::from_raw(self.pop_u32()?);
                self.push(encode_bool(t.reached(self.ctx)))
            }
            Op::CheckSequence => {
                let d = Duration::from_raw(self.pop_u32()?);
                self.push(encode_bool(d.elapsed(self.ctx)))
            }
            Op::Verify => {
                if truthy(&self.pop()?) {
                    Ok(())
                } else {
                    Err(LockReason::VerifyFailed)
                }
            }
            Op::Fail => Err(LockReason::VerifyFailed),
            Op::If | Op::Else | Op::EndIf => unreachable!("handled by the dispatcher"),
        }
    }
}

/// Executes once front to back; branches are skipped, never revisited.
/// Unlocked iff the final stack is exactly `[true]`.
pub fn run_program(program: &Program, witness: &[Vec<u8>], ctx: &SpendingContext) -> Verdict {
    match run(program, witness, ctx) {
        Ok(()) => Verdict::Unlocked,
        Err(reason) => Verdict::Locked(reason),
    }
}

fn run(program: &Program, witness: &[Vec<u8>], ctx: &SpendingContext) -> Step {
    let mut m = Machine {
        stack: Vec::new(),
        ctx,
    };
    for item in witness {
        m.push(item.clone())?;
    }
    let mut exec: Vec<bool> = Vec::new();
    for op in &program.ops {
        let live = exec.iter().all(|b| *b);
        match op {
            Op::If => {
                let cond = if live { truthy(&m.pop()?) } else { false };
                exec.push(cond);
            }
            Op::Else => {
                let top = exec.last_mut().ok_or_else(|| malformed("else without if"))?;
                *top = !*top;
            }
            Op::EndIf => {
                exec.pop().ok_or_else(|| malformed("endif without if"))?;
            }
            _ if live => m.exec(op)?,
            _ => {}
        }
    }
    if !exec.is_empty() {
        return Err(malformed("unterminated if"));
    }
    if m.stack != [encode_bool(true)] {
        return Err(malformed("final stack is not [true]"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unbalanced_stack_is_malformed() {
        let ctx = SpendingContext::default();
        let p = Program {
            ops: vec![Op::Push(vec![1]), Op::Push(vec![1])],
        };
        assert!(matches!(run_program(&p, &[], &ctx), Verdict::Locked(LockReason::Malformed(_))));
        let p = Program { ops: vec![Op::Drop] };
        assert_eq!(run_program(&p, &[], &ctx), Verdict::Locked(malformed("stack underflow")));
        let p = Program {
            ops: vec![Op::Push(vec![1]), Op::If, Op::Push(vec![1])],
        };
        assert!(matches!(run_program(&p, &[], &ctx), Verdict::Locked(LockReason::Malformed(_))));
    }

    #[test]
    fn overflow_is_malformed() {
        let p = Program {
            ops: vec![Op::Dup; MAX_STACK],
        };
        assert_eq!(
            run_program(&p, &[vec![1]], &SpendingContext::default()),
            Verdict::Locked(malformed("stack overflow"))
        );
    }

    #[test]
    fn branches_skip() {
        let p = Program {
            ops: vec![Op::If, Op::Fail, Op::Else, Op::Push(vec![1]), Op::EndIf],
        };
        assert_eq!(run_program(&p, &[vec![]], &SpendingContext::default()), Verdict::Unlocked);
        assert_eq!(
            run_program(&p, &[vec![1]], &SpendingContext::default()),
            Verdict::Locked(LockReason::VerifyFailed)
        );
    }

    #[test]
    fn hex_roundtrip() {
        let p = Program {
            ops: vec![
                Op::Push(vec![0xde, 0xad]),
                Op::Param(3),
                Op::Pick(2),
                Op::Hash(HashKind::Ripemd160),
                Op::CheckMultiSig,
                Op::If,
                Op::Else,
                Op::EndIf,
                Op::Fail,
            ],
        };
        assert_eq!(Program::from_hex(&p.to_hex()).unwrap(), p);
        assert_eq!(p.param_count(), 4);
        assert!(Program::from_hex("01ff").is_err());
        assert!(Program::from_hex("ee").is_err());
    }
}
