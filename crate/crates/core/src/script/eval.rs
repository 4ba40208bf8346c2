use super::check::ScriptContract;
use super::parse::{Builtin, Expr, ExprKind};
use super::{
    check_multisig, Duration, LockReason, ScriptError, ScriptType, ScriptValue, SpendingContext, Time, Verdict,
};

/// Evaluates a builtin on already-evaluated arguments. `checkMultiSig`
/// takes the keys followed by the signatures and the key count first:
/// `[Number(k), keys.., sigs..]`.
pub fn eval_builtin(name: &str, args: &[ScriptValue], ctx: &SpendingContext) -> Result<ScriptValue, ScriptError> {
    let mismatch = || ScriptError::Type {
        name: name.to_string(),
        expected: ScriptType::Bytes,
        got: args.first().map_or(ScriptType::Bytes, ScriptValue::type_of),
    };
    let arity = |n: usize| {
        if args.len() == n {
            Ok(())
        } else {
            Err(ScriptError::Arity {
                expected: n,
                got: args.len(),
            })
        }
    };
    let hash = |kind| -> Result<ScriptValue, ScriptError> {
        arity(1)?;
        let ty = args[0].type_of();
        if !ty.is_hashable() {
            return Err(mismatch());
        }
        Ok(ScriptValue::Hash(ScriptType::Hash(kind, Box::new(ty)), kind.digest(&args[0].encode())))
    };
    use super::HashKind::*;
    match name {
        "checkSig" => {
            arity(2)?;
            match (&args[0], &args[1]) {
                (ScriptValue::PublicKey(k), ScriptValue::Signature(s)) => Ok(ScriptValue::Boolean(ctx.check_sig(k, s))),
                _ => Err(mismatch()),
            }
        }
        "checkMultiSig" => {
            let Some(ScriptValue::Number(k)) = args.first() else {
                return Err(mismatch());
            };
            let k = usize::try_from(*k).map_err(|_| mismatch())?;
            let rest = &args[1..];
            if rest.len() < k {
                return Err(mismatch());
            }
            let (keys, sigs) = rest.split_at(k);
            let keys: Option<Vec<Vec<u8>>> = keys
                .iter()
                .map(|v| match v {
                    ScriptValue::PublicKey(b) => Some(b.clone()),
                    _ => None,
                })
                .collect();
            let sigs: Option<Vec<Vec<u8>>> = sigs
                .iter()
                .map(|v| match v {
                    ScriptValue::Signature(b) => Some(b.clone()),
                    _ => None,
                })
                .collect();
            match (keys, sigs) {
                (Some(k), Some(s)) => Ok(ScriptValue::Boolean(check_multisig(ctx, &k, &s))),
                _ => Err(mismatch()),
            }
        }
        "after" => {
            arity(1)?;
            match &args[0] {
                ScriptValue::Time(t) => Ok(ScriptValue::Boolean(t.reached(ctx))),
                _ => Err(mismatch()),
            }
        }
        "older" => {
            arity(1)?;
            match &args[0] {
                ScriptValue::Duration(d) => Ok(ScriptValue::Boolean(d.elapsed(ctx))),
                _ => Err(mismatch()),
            }
        }
        "sha256" => hash(Sha256),
        "sha1" => hash(Sha1),
        "ripemd160" => hash(Ripemd160),
        "bytes" => {
            arity(1)?;
            match &args[0] {
                ScriptValue::Value(_) | ScriptValue::Boolean(_) => Err(mismatch()),
                v => Ok(ScriptValue::Bytes(v.encode())),
            }
        }
        "size" => {
            arity(1)?;
            match &args[0] {
                ScriptValue::Bytes(b) => Ok(ScriptValue::Number(b.len() as i64)),
                _ => Err(mismatch()),
            }
        }
        "==" | "!=" => {
            arity(2)?;
            let (a, b) = (&args[0], &args[1]);
            if a.type_of() != b.type_of() || a.type_of() == ScriptType::Boolean {
                return Err(mismatch());
            }
            Ok(ScriptValue::Boolean((a.encode() == b.encode()) == (name == "==")))
        }
        other => Err(ScriptError::UnknownClause(other.to_string())),
    }
}

struct Env<'a> {
    params: &'a [ScriptValue],
    args: &'a [ScriptValue],
    contract: &'a ScriptContract,
    clause: usize,
    ctx: &'a SpendingContext,
}

impl Env<'_> {
    fn lookup(&self, name: &str) -> ScriptValue {
        let clause = &self.contract.clauses[self.clause];
        if let Some(i) = clause.params.iter().position(|p| p.name == name) {
            return self.args[i].clone();
        }
        let i = self
            .contract
            .params
            .iter()
            .position(|p| p.name == name)
            .expect("typechecked variable");
        self.params[i].clone()
    }

    fn eval(&self, e: &Expr) -> ScriptValue {
        let run = |name: &str, args: Vec<ScriptValue>| eval_builtin(name, &args, self.ctx).expect("typechecked call");
        match &e.kind {
            ExprKind::Var(name) => self.lookup(name),
            ExprKind::Int(n) => match e.ty {
                Some(ScriptType::Time) => ScriptValue::Time(Time::from_raw(*n as u32)),
                Some(ScriptType::Duration) => ScriptValue::Duration(Duration::Blocks(*n as u16)),
                _ => ScriptValue::Number(*n as i64),
            },
            ExprKind::Secs(s) => ScriptValue::Duration(Duration::Seconds(*s as u32)),
            ExprKind::Hex(b) => ScriptValue::Bytes(b.clone()),
            ExprKind::Bool(b) => ScriptValue::Boolean(*b),
            ExprKind::List(_) => unreachable!("lists only appear under checkMultiSig"),
            ExprKind::Eq(a, b) => run("==", vec![self.eval(a), self.eval(b)]),
            ExprKind::Ne(a, b) => run("!=", vec![self.eval(a), self.eval(b)]),
            ExprKind::Call(Builtin::CheckMultiSig, args) => {
                let items = |e: &Expr| match &e.kind {
                    ExprKind::List(xs) => xs.iter().map(|x| self.eval(x)).collect::<Vec<_>>(),
                    _ => unreachable!("typechecked list"),
                };
                let keys = items(&args[0]);
                let mut all = vec![ScriptValue::Number(keys.len() as i64)];
                all.extend(keys);
                all.extend(items(&args[1]));
                run("checkMultiSig", all)
            }
            ExprKind::Call(b, args) => run(b.name(), args.iter().map(|a| self.eval(a)).collect()),
        }
    }
}

fn check_args(expected: &[(String, ScriptType)], got: &[ScriptValue]) -> Result<(), ScriptError> {
    if expected.len() != got.len() {
        return Err(ScriptError::Arity {
            expected: expected.len(),
            got: got.len(),
        });
    }
    for ((name, ty), v) in expected.iter().zip(got) {
        if v.type_of() != *ty {
            return Err(ScriptError::Type {
                name: name.clone(),
                expected: ty.clone(),
                got: v.type_of(),
            });
        }
    }
    Ok(())
}

/// Runs a clause directly on typed values. Unlocked iff every `verify`
/// holds.
pub fn eval_clause(
    contract: &ScriptContract,
    params: &[ScriptValue],
    clause: &str,
    args: &[ScriptValue],
    ctx: &SpendingContext,
) -> Result<Verdict, ScriptError> {
    let (index, c) = contract
        .clause(clause)
        .ok_or_else(|| ScriptError::UnknownClause(clause.to_string()))?;
    let sig = |ps: &[super::parse::Param]| ps.iter().map(|p| (p.name.clone(), p.ty.clone())).collect::<Vec<_>>();
    check_args(&sig(&contract.params), params)?;
    check_args(&sig(&c.params), args)?;
    let env = Env {
        params,
        args,
        contract,
        clause: index,
        ctx,
    };
    for v in &c.verifies {
        if env.eval(v) != ScriptValue::Boolean(true) {
            return Ok(Verdict::Locked(LockReason::VerifyFailed));
        }
    }
    Ok(Verdict::Unlocked)
}
