use super::check::ScriptContract;
use super::parse::{Builtin, Clause, Expr, ExprKind};
use super::vm::{Op, Program};
use super::{encode_bool, encode_num, Duration, ScriptType, Time};

struct Emitter<'a> {
    ops: Vec<Op>,
    contract: &'a ScriptContract,
    clause: &'a Clause,
    /// Stack height above the bottom of the clause arguments.
    height: usize,
}

impl Emitter<'_> {
    fn emit(&mut self, op: Op, pops: usize, pushes: usize) {
        self.ops.push(op);
        self.height = self.height - pops + pushes;
    }

    fn expr(&mut self, e: &Expr) {
        match &e.kind {
            ExprKind::Var(name) => {
                if let Some(j) = self.clause.params.iter().position(|p| p.name == *name) {
                    let depth = self.height - 1 - j;
                    self.emit(Op::Pick(u8::try_from(depth).expect("stack depth fits a byte")), 0, 1);
                } else {
                    let i = self.contract.params.iter().position(|p| p.name == *name).expect("typechecked");
                    self.emit(Op::Param(u8::try_from(i).expect("parameter index fits a byte")), 0, 1);
                }
            }
            ExprKind::Int(n) => {
                let raw = match e.ty {
                    Some(ScriptType::Time) => i64::from(Time::from_raw(*n as u32).raw()),
                    Some(ScriptType::Duration) => i64::from(Duration::Blocks(*n as u16).raw()),
                    _ => *n as i64,
                };
                self.emit(Op::Push(encode_num(raw)), 0, 1);
            }
            ExprKind::Secs(s) => self.emit(Op::Push(encode_num(i64::from(Duration::Seconds(*s as u32).raw()))), 0, 1),
            ExprKind::Hex(b) => self.emit(Op::Push(b.clone()), 0, 1),
            ExprKind::Bool(b) => self.emit(Op::Push(encode_bool(*b)), 0, 1),
            ExprKind::List(items) => {
                for it in items {
                    self.expr(it);
                }
                self.emit(Op::Push(encode_num(items.len() as i64)), 0, 1);
            }
            ExprKind::Eq(a, b) | ExprKind::Ne(a, b) => {
                self.expr(a);
                self.expr(b);
                self.emit(Op::Equal, 2, 1);
                if matches!(e.kind, ExprKind::Ne(..)) {
                    self.emit(Op::Not, 1, 1);
                }
            }
            ExprKind::Call(builtin, args) => {
                for a in args {
                    self.expr(a);
                }
                match builtin {
                    Builtin::CheckSig => self.emit(Op::CheckSig, 2, 1),
                    Builtin::CheckMultiSig => {
                        let n: usize = args
                            .iter()
                            .map(|a| match &a.kind {
                                ExprKind::List(xs) => xs.len() + 1,
                                _ => unreachable!("typechecked list"),
                            })
                            .sum();
                        self.emit(Op::CheckMultiSig, n, 1)
                    }
                    Builtin::After => self.emit(Op::CheckLockTime, 1, 1),
                    Builtin::Older => self.emit(Op::CheckSequence, 1, 1),
                    Builtin::Hash(kind) => self.emit(Op::Hash(*kind), 1, 1),
                    Builtin::Bytes => {}
                    Builtin::Size => self.emit(Op::Size, 1, 1),
                }
            }
        }
    }
}

/// Compiles to a template whose contract parameters are placeholders.
///
/// Layout: for each clause `i`, `DUP <i> EQUAL IF DROP <body> ELSE`, then
/// `FAIL` and the matching `ENDIF`s. A body leaves exactly `[true]`.
pub fn compile(contract: &ScriptContract) -> Program {
    let mut ops = Vec::new();
    for (i, clause) in contract.clauses.iter().enumerate() {
        ops.extend([Op::Dup, Op::Push(encode_num(i as i64)), Op::Equal, Op::If, Op::Drop]);
        let mut em = Emitter {
            ops: Vec::new(),
            contract,
            clause,
            height: clause.params.len(),
        };
        for v in &clause.verifies {
            em.expr(v);
            em.emit(Op::Verify, 1, 0);
        }
        for _ in 0..clause.params.len() {
            em.emit(Op::Drop, 1, 0);
        }
        em.emit(Op::Push(encode_bool(true)), 0, 1);
        ops.extend(em.ops);
        ops.push(Op::Else);
    }
    ops.push(Op::Fail);
    ops.extend(std::iter::repeat(Op::EndIf).take(contract.clauses.len()));
    Program { ops }
}
