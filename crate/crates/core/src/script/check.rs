use std::collections::BTreeMap;

use super::parse::{parse, Builtin, Clause, Contract, Diagnostic, Expr, ExprKind, Param, Pos};
use super::{Duration, ScriptType, MAX_HASH_NESTING, NUMBER_MAX, NUMBER_MIN};

/// A contract that passed typechecking. Every expression carries its type.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScriptContract {
    pub name: String,
    pub params: Vec<Param>,
    pub clauses: Vec<Clause>,
    /// Index of the single Value parameter.
    pub value_param: usize,
}

impl ScriptContract {
    pub fn clause(&self, name: &str) -> Option<(usize, &Clause)> {
        self.clauses.iter().enumerate().find(|(_, c)| c.name == name)
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Scope {
    Contract(usize),
    Clause(usize),
}

struct Checker<'a> {
    vars: BTreeMap<&'a str, (Scope, &'a ScriptType)>,
    diags: Vec<Diagnostic>,
}

impl Checker<'_> {
    fn err(&mut self, pos: Pos, msg: impl Into<String>) -> Option<ScriptType> {
        self.diags.push(Diagnostic::new(pos, msg));
        None
    }

    fn check_type(&mut self, ty: &ScriptType, pos: Pos) {
        if let ScriptType::Hash(_, inner) = ty {
            if !inner.is_hashable() {
                self.err(pos, format!("{ty}: {inner} cannot be hashed"));
            }
        }
        if ty.hash_depth() > MAX_HASH_NESTING {
            self.err(pos, format!("{ty}: hashes nest at most {MAX_HASH_NESTING} deep"));
        }
    }

    /// Checks `e` against an optional expected type; integer literals take
    /// Time or Duration when expected.
    fn expr(&mut self, e: &mut Expr, expected: Option<&ScriptType>) -> Option<ScriptType> {
        let ty = self.infer(e, expected)?;
        if let Some(want) = expected {
            if *want != ty {
                return self.err(e.pos, format!("expected {want}, found {ty}"));
            }
        }
        e.ty = Some(ty.clone());
        Some(ty)
    }

    fn infer(&mut self, e: &mut Expr, expected: Option<&ScriptType>) -> Option<ScriptType> {
        let pos = e.pos;
        match &mut e.kind {
            ExprKind::Var(name) => match self.vars.get(name.as_str()) {
                Some((_, ty)) => Some((*ty).clone()),
                None => self.err(pos, format!("unknown variable `{name}`")),
            },
            ExprKind::Int(n) => {
                let n = *n;
                match expected {
                    Some(ScriptType::Time) => {
                        if (0..=i128::from(NUMBER_MAX)).contains(&n) {
                            Some(ScriptType::Time)
                        } else {
                            self.err(pos, format!("time literal {n} out of range"))
                        }
                    }
                    Some(ScriptType::Duration) => {
                        if (0..=i128::from(u16::MAX)).contains(&n) {
                            Some(ScriptType::Duration)
                        } else {
                            self.err(pos, format!("block count {n} out of range"))
                        }
                    }
                    _ if (i128::from(NUMBER_MIN)..=i128::from(NUMBER_MAX)).contains(&n) => Some(ScriptType::Number),
                    _ => self.err(
                        pos,
                        format!("number literal {n} outside [{NUMBER_MIN}, {NUMBER_MAX}]"),
                    ),
                }
            }
            ExprKind::Secs(s) => {
                let s = *s;
                match u32::try_from(s).ok().and_then(Duration::seconds) {
                    Some(_) => Some(ScriptType::Duration),
                    None => self.err(pos, format!("duration {s}s must be a multiple of 512 seconds below 2^25")),
                }
            }
            ExprKind::Hex(_) => Some(ScriptType::Bytes),
            ExprKind::Bool(_) => Some(ScriptType::Boolean),
            ExprKind::List(_) => self.err(pos, "lists are only allowed as checkMultiSig arguments"),
            ExprKind::Eq(a, b) | ExprKind::Ne(a, b) => {
                let ta = self.expr(a, None)?;
                if ta == ScriptType::Boolean {
                    return self.err(pos, "equality cannot be used on Boolean");
                }
                self.expr(b, Some(&ta))?;
                Some(ScriptType::Boolean)
            }
            ExprKind::Call(builtin, args) => {
                let builtin = *builtin;
                self.call(builtin, args, pos)
            }
        }
    }

    fn arity(&mut self, builtin: Builtin, args: &[Expr], n: usize, pos: Pos) -> Option<()> {
        if args.len() == n {
            Some(())
        } else {
            self.err(pos, format!("{} takes {n} argument(s), got {}", builtin.name(), args.len()));
            None
        }
    }

    fn call(&mut self, builtin: Builtin, args: &mut [Expr], pos: Pos) -> Option<ScriptType> {
        match builtin {
            Builtin::CheckSig => {
                self.arity(builtin, args, 2, pos)?;
                let a = self.expr(&mut args[0], Some(&ScriptType::PublicKey));
                let b = self.expr(&mut args[1], Some(&ScriptType::Signature));
                a.and(b).map(|_| ScriptType::Boolean)
            }
            Builtin::CheckMultiSig => {
                self.arity(builtin, args, 2, pos)?;
                let (keys, sigs) = args.split_at_mut(1);
                let k = self.list(&mut keys[0], &ScriptType::PublicKey);
                let s = self.list(&mut sigs[0], &ScriptType::Signature);
                let (k, s) = (k?, s?);
                if s > k {
                    return self.err(pos, format!("checkMultiSig: {s} signatures for {k} keys"));
                }
                Some(ScriptType::Boolean)
            }
            Builtin::After => {
                self.arity(builtin, args, 1, pos)?;
                self.expr(&mut args[0], Some(&ScriptType::Time)).map(|_| ScriptType::Boolean)
            }
            Builtin::Older => {
                self.arity(builtin, args, 1, pos)?;
                self.expr(&mut args[0], Some(&ScriptType::Duration)).map(|_| ScriptType::Boolean)
            }
            Builtin::Hash(kind) => {
                self.arity(builtin, args, 1, pos)?;
                let inner = self.expr(&mut args[0], None)?;
                if !inner.is_hashable() {
                    return self.err(pos, format!("{} cannot be applied to {inner}", builtin.name()));
                }
                let ty = ScriptType::Hash(kind, Box::new(inner));
                if ty.hash_depth() > MAX_HASH_NESTING {
                    return self.err(pos, format!("{ty}: hashes nest at most {MAX_HASH_NESTING} deep"));
                }
                Some(ty)
            }
            Builtin::Bytes => {
                self.arity(builtin, args, 1, pos)?;
                let ty = self.expr(&mut args[0], None)?;
                if matches!(ty, ScriptType::Value | ScriptType::Boolean) {
                    return self.err(pos, format!("bytes cannot be applied to {ty}"));
                }
                Some(ScriptType::Bytes)
            }
            Builtin::Size => {
                self.arity(builtin, args, 1, pos)?;
                self.expr(&mut args[0], Some(&ScriptType::Bytes)).map(|_| ScriptType::Number)
            }
        }
    }

    fn list(&mut self, e: &mut Expr, item: &ScriptType) -> Option<usize> {
        let pos = e.pos;
        let ExprKind::List(items) = &mut e.kind else {
            return self.err(pos, format!("expected a list of {item}")).map(|_| 0);
        };
        let mut ok = true;
        for it in items.iter_mut() {
            ok &= self.expr(it, Some(item)).is_some();
        }
        let n = items.len();
        e.ty = Some(item.clone());
        ok.then_some(n)
    }
}

fn check_unique(params: &[Param], diags: &mut Vec<Diagnostic>) {
    for (i, p) in params.iter().enumerate() {
        if params[..i].iter().any(|q| q.name == p.name) {
            diags.push(Diagnostic::new(p.pos, format!("duplicate parameter `{}`", p.name)));
        }
    }
}

/// Parses and typechecks a contract, returning every diagnostic found.
pub fn parse_and_typecheck(src: &str) -> Result<ScriptContract, Vec<Diagnostic>> {
    let mut contract: Contract = parse(src).map_err(|d| vec![d])?;
    let mut diags = Vec::new();
    check_unique(&contract.params, &mut diags);
    let values: Vec<usize> = contract
        .params
        .iter()
        .enumerate()
        .filter(|(_, p)| p.ty == ScriptType::Value)
        .map(|(i, _)| i)
        .collect();
    if values.len() != 1 {
        diags.push(Diagnostic::new(
            contract.pos,
            format!("contract needs exactly one Value parameter, found {}", values.len()),
        ));
    }
    if contract.clauses.is_empty() {
        diags.push(Diagnostic::new(contract.pos, "contract needs at least one clause"));
    }
    for (i, c) in contract.clauses.iter().enumerate() {
        if contract.clauses[..i].iter().any(|d| d.name == c.name) {
            diags.push(Diagnostic::new(c.pos, format!("duplicate clause `{}`", c.name)));
        }
    }
    let params = contract.params.clone();
    for clause in &mut contract.clauses {
        let mut ck = Checker {
            vars: BTreeMap::new(),
            diags: Vec::new(),
        };
        for (i, p) in params.iter().enumerate() {
            ck.check_type(&p.ty, p.pos);
            ck.vars.insert(&p.name, (Scope::Contract(i), &p.ty));
        }
        check_unique(&clause.params, &mut ck.diags);
        for (i, p) in clause.params.iter().enumerate() {
            ck.check_type(&p.ty, p.pos);
            if p.ty == ScriptType::Value {
                ck.err(p.pos, "clause arguments cannot be Value");
            }
            ck.vars.insert(&p.name, (Scope::Clause(i), &p.ty));
        }
        for v in &mut clause.verifies {
            ck.expr(v, Some(&ScriptType::Boolean));
        }
        match &clause.unlock {
            None => {
                ck.err(clause.pos, format!("clause `{}` must end with unlock", clause.name));
            }
            Some((target, pos)) => match ck.vars.get(target.as_str()) {
                Some((Scope::Contract(i), _)) if values.contains(i) => {}
                _ => {
                    ck.err(*pos, format!("unlock target `{target}` is not the contract's Value parameter"));
                }
            },
        }
        diags.extend(ck.diags);
    }
    if !diags.is_empty() {
        diags.sort_by_key(|d| (d.pos.line, d.pos.col));
        return Err(diags);
    }
    Ok(ScriptContract {
        name: contract.name,
        params: contract.params,
        clauses: contract.clauses,
        value_param: values[0],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn errs(src: &str) -> Vec<String> {
        parse_and_typecheck(src).unwrap_err().into_iter().map(|d| d.to_string()).collect()
    }

    #[test]
    fn pay_to_key_is_valid() {
        let c = parse_and_typecheck(
            "contract LockWithPublicKey(publicKey: PublicKey, val: Value) {\n  clause spend(sig: Signature) {\n    verify checkSig(publicKey, sig)\n    unlock val\n  }\n}",
        )
        .unwrap();
        assert_eq!(c.value_param, 1);
        assert_eq!(c.clauses[0].verifies[0].ty, Some(ScriptType::Boolean));
    }

    #[test]
    fn number_bound() {
        let ok = "contract C(n: Number, val: Value) { clause a() { verify n == 2147483647 unlock val } }";
        assert!(parse_and_typecheck(ok).is_ok());
        assert!(parse_and_typecheck(&ok.replace("2147483647", "-2147483647")).is_ok());
        let e = errs(&ok.replace("2147483647", "2147483648"));
        assert!(e[0].contains("outside"), "{e:?}");
        assert!(e[0].starts_with("1:62"), "{e:?}");
    }

    #[test]
    fn bytes_of_value_rejected() {
        let e = errs("contract C(v: Value) { clause a(b: Bytes) { verify bytes(v) == b unlock v } }");
        assert!(e[0].contains("bytes cannot be applied to Value"), "{e:?}");
        let e = errs("contract C(v: Value) { clause a(b: Bytes) { verify bytes(true) == b unlock v } }");
        assert!(e[0].contains("Boolean"), "{e:?}");
    }

    #[test]
    fn boolean_equality_rejected() {
        let e = errs("contract C(v: Value) { clause a(s: Signature, k: PublicKey) { verify checkSig(k, s) == true unlock v } }");
        assert!(e[0].contains("Boolean"), "{e:?}");
    }

    #[test]
    fn value_parameter_count() {
        assert!(errs("contract C(k: PublicKey) { clause a() { unlock k } }")
            .iter()
            .any(|e| e.contains("exactly one Value")));
        assert!(errs("contract C(a: Value, b: Value) { clause x() { unlock a } }")
            .iter()
            .any(|e| e.contains("exactly one Value")));
    }

    #[test]
    fn clause_needs_unlock() {
        let e = errs("contract C(v: Value) { clause a() { verify after(10) } }");
        assert!(e[0].contains("must end with unlock"), "{e:?}");
        assert!(errs("contract C(v: Value) { }").iter().any(|e| e.contains("at least one clause")));
    }

    #[test]
    fn hash_types_carry_preimage() {
        let ok = "contract C(h: Sha256(Sha1(Bytes)), v: Value) { clause a(p: Bytes) { verify sha256(sha1(p)) == h unlock v } }";
        assert!(parse_and_typecheck(ok).is_ok());
        let e = errs("contract C(h: Sha256(Bytes), v: Value) { clause a(p: PublicKey) { verify sha256(p) == h unlock v } }");
        assert!(e[0].contains("expected Sha256(PublicKey), found Sha256(Bytes)"), "{e:?}");
        assert!(!errs("contract C(v: Value) { clause a(p: Bytes) { verify sha1(sha1(sha1(p))) == p unlock v } }").is_empty());
    }

    #[test]
    fn durations_must_be_512_multiples() {
        assert!(parse_and_typecheck("contract C(v: Value) { clause a() { verify older(1024s) unlock v } }").is_ok());
        assert!(!errs("contract C(v: Value) { clause a() { verify older(1000s) unlock v } }").is_empty());
    }

    #[test]
    fn multisig_needs_lists() {
        let e = errs("contract C(k: PublicKey, v: Value) { clause a(s: Signature) { verify checkMultiSig(k, [s]) unlock v } }");
        assert!(e[0].contains("list"), "{e:?}");
        let e = errs("contract C(k: PublicKey, v: Value) { clause a(s: Signature, t: Signature) { verify checkMultiSig([k], [s, t]) unlock v } }");
        assert!(e[0].contains("2 signatures for 1 keys"), "{e:?}");
    }
}
